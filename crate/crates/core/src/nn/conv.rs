use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor4};

/// 2-D convolution (cross-correlation, no kernel flip) with per-channel bias.
///
/// `weight` is laid out as (out_channels, in_channels, kernel_h, kernel_w).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Option<Tensor4>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Output positions `ox` whose input column `ox*stride + k - pad` lies in `0..len`.
#[inline]
fn valid_range(len: usize, out_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    if len + pad < k + 1 {
        return (0, 0);
    }
    let hi = ((len - 1 + pad - k) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

impl Conv2d {
    /// Zero-initialized square-kernel convolution.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn kernel_len(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.out_channels * self.in_channels * self.kernel_len();
        if self.weight.len() != want || self.bias.len() != self.out_channels {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "weight has {} values (want {want}), bias {} (want {})",
                    self.weight.len(),
                    self.bias.len(),
                    self.out_channels
                ),
            ));
        }
        if self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::InvalidArgument("conv2d stride and kernel must be positive".into()));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("kernel expects {} input channels, input {input} has {}", self.in_channels, input.c),
            ));
        }
        let span_h = input.h + 2 * self.padding;
        let span_w = input.w + 2 * self.padding;
        if span_h < self.kernel_h || span_w < self.kernel_w {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {}x{} larger than padded input {span_h}x{span_w}", self.kernel_h, self.kernel_w),
            ));
        }
        if (span_h - self.kernel_h) % self.stride != 0 || (span_w - self.kernel_w) % self.stride != 0 {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "padded input {span_h}x{span_w} not tiled by kernel {}x{} at stride {}",
                    self.kernel_h, self.kernel_w, self.stride
                ),
            ));
        }
        Ok(Shape::new(
            input.n,
            self.out_channels,
            (span_h - self.kernel_h) / self.stride + 1,
            (span_w - self.kernel_w) / self.stride + 1,
        ))
    }

    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        let is = input.shape();
        let os = self.output_shape(is)?;
        let (s, p) = (self.stride, self.padding);
        let mut out = vec![0.0; os.len()];
        let in_data = input.data();
        let (oplane, iplane) = (os.plane(), is.plane());

        for n in 0..is.n {
            for oc in 0..self.out_channels {
                let o_off = (n * os.c + oc) * oplane;
                let out_plane = &mut out[o_off..o_off + oplane];
                out_plane.fill(self.bias[oc]);
                for ic in 0..self.in_channels {
                    let i_off = (n * is.c + ic) * iplane;
                    let in_plane = &in_data[i_off..i_off + iplane];
                    let w_off = (oc * self.in_channels + ic) * self.kernel_len();
                    for ky in 0..self.kernel_h {
                        let (oy_lo, oy_hi) = valid_range(is.h, os.h, ky, s, p);
                        for kx in 0..self.kernel_w {
                            let w = self.weight[w_off + ky * self.kernel_w + kx];
                            if w == 0.0 {
                                continue;
                            }
                            let (ox_lo, ox_hi) = valid_range(is.w, os.w, kx, s, p);
                            for oy in oy_lo..oy_hi {
                                let iy = oy * s + ky - p;
                                let in_row = &in_plane[iy * is.w..(iy + 1) * is.w];
                                let out_row = &mut out_plane[oy * os.w..(oy + 1) * os.w];
                                if s == 1 {
                                    let src = &in_row[ox_lo + kx - p..ox_hi + kx - p];
                                    for (o, x) in out_row[ox_lo..ox_hi].iter_mut().zip(src) {
                                        *o += w * x;
                                    }
                                } else {
                                    for ox in ox_lo..ox_hi {
                                        out_row[ox] += w * in_row[ox * s + kx - p];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor4::from_parts_unchecked(os, out))
    }

    /// Exact gradients of [`forward`](Self::forward) given the upstream
    /// gradient. The input gradient is only materialized when `want_input`.
    pub fn backward(&self, input: &Tensor4, grad_out: &Tensor4, want_input: bool) -> Result<ConvGrads> {
        let is = input.shape();
        let os = self.output_shape(is)?;
        if grad_out.shape() != os {
            return Err(Error::shape(
                "conv2d_backward",
                format!("grad_out {} but forward output is {os}", grad_out.shape()),
            ));
        }
        let (s, p) = (self.stride, self.padding);
        let (oplane, iplane) = (os.plane(), is.plane());
        let in_data = input.data();
        let g_data = grad_out.data();
        let mut grad_w = vec![0.0; self.weight.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        let mut grad_in = if want_input { vec![0.0; is.len()] } else { Vec::new() };

        for n in 0..is.n {
            for oc in 0..self.out_channels {
                let o_off = (n * os.c + oc) * oplane;
                let g_plane = &g_data[o_off..o_off + oplane];
                grad_b[oc] += g_plane.iter().sum::<f64>();
                for ic in 0..self.in_channels {
                    let i_off = (n * is.c + ic) * iplane;
                    let in_plane = &in_data[i_off..i_off + iplane];
                    let w_off = (oc * self.in_channels + ic) * self.kernel_len();
                    for ky in 0..self.kernel_h {
                        let (oy_lo, oy_hi) = valid_range(is.h, os.h, ky, s, p);
                        for kx in 0..self.kernel_w {
                            let widx = w_off + ky * self.kernel_w + kx;
                            let w = self.weight[widx];
                            let (ox_lo, ox_hi) = valid_range(is.w, os.w, kx, s, p);
                            let mut acc = 0.0;
                            for oy in oy_lo..oy_hi {
                                let iy = oy * s + ky - p;
                                let g_row = &g_plane[oy * os.w..(oy + 1) * os.w];
                                let in_row = &in_plane[iy * is.w..(iy + 1) * is.w];
                                if s == 1 {
                                    let lo = ox_lo + kx - p;
                                    let hi = ox_hi + kx - p;
                                    let g = &g_row[ox_lo..ox_hi];
                                    acc += g.iter().zip(&in_row[lo..hi]).map(|(a, b)| a * b).sum::<f64>();
                                    if want_input {
                                        let row = i_off + iy * is.w;
                                        for (gi, gv) in grad_in[row + lo..row + hi].iter_mut().zip(g) {
                                            *gi += w * gv;
                                        }
                                    }
                                } else {
                                    for ox in ox_lo..ox_hi {
                                        let ix = ox * s + kx - p;
                                        acc += g_row[ox] * in_row[ix];
                                        if want_input {
                                            grad_in[i_off + iy * is.w + ix] += w * g_row[ox];
                                        }
                                    }
                                }
                            }
                            grad_w[widx] += acc;
                        }
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: want_input.then(|| Tensor4::from_parts_unchecked(is, grad_in)),
            weight: grad_w,
            bias: grad_b,
        })
    }
}
