use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPool2d {
    pub size: usize,
    pub stride: usize,
}

impl Default for MaxPool2d {
    fn default() -> Self {
        MaxPool2d { size: 2, stride: 2 }
    }
}

#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub output: Tensor4,
    /// Flat input index of the winning element for every output element.
    pub argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if self.size == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("pool size and stride must be positive".into()));
        }
        let fits = |len: usize| len >= self.size && (len - self.size) % self.stride == 0;
        if !fits(input.h) || !fits(input.w) {
            return Err(Error::shape(
                "maxpool2d",
                format!(
                    "input {}x{} not divisible by {}x{} pooling at stride {}",
                    input.h, input.w, self.size, self.size, self.stride
                ),
            ));
        }
        Ok(Shape::new(
            input.n,
            input.c,
            (input.h - self.size) / self.stride + 1,
            (input.w - self.size) / self.stride + 1,
        ))
    }

    /// Window maxima; ties go to the first element in row-major scan order.
    pub fn forward(&self, input: &Tensor4) -> Result<PoolOutput> {
        let is = input.shape();
        let os = self.output_shape(is)?;
        let data = input.data();
        let mut out = Vec::with_capacity(os.len());
        let mut argmax = Vec::with_capacity(os.len());
        for n in 0..is.n {
            for c in 0..is.c {
                let base = (n * is.c + c) * is.plane();
                for oy in 0..os.h {
                    for ox in 0..os.w {
                        let mut best = base + oy * self.stride * is.w + ox * self.stride;
                        for dy in 0..self.size {
                            let row = base + (oy * self.stride + dy) * is.w + ox * self.stride;
                            for idx in row..row + self.size {
                                if data[idx] > data[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(data[best]);
                        argmax.push(best);
                    }
                }
            }
        }
        Ok(PoolOutput {
            output: Tensor4::from_parts_unchecked(os, out),
            argmax,
        })
    }

    /// Routes each upstream gradient to its recorded argmax.
    pub fn backward(&self, input_shape: Shape, argmax: &[usize], grad_out: &Tensor4) -> Result<Tensor4> {
        let os = self.output_shape(input_shape)?;
        if grad_out.shape() != os || argmax.len() != os.len() {
            return Err(Error::shape(
                "maxpool2d_backward",
                format!("grad_out {} / {} argmax entries, forward output {os}", grad_out.shape(), argmax.len()),
            ));
        }
        let mut grad_in = vec![0.0; input_shape.len()];
        for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
            grad_in[idx] += g;
        }
        Ok(Tensor4::from_parts_unchecked(input_shape, grad_in))
    }
}
