use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor4};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization with learnable scale (`gamma`) and shift
/// (`beta`).
///
/// Running statistics stay `None` until the first training batch is
/// committed; that batch's statistics seed them and later batches are
/// blended in with `momentum`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub epsilon: f64,
    pub momentum: f64,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Option<Vec<f64>>,
    pub running_var: Option<Vec<f64>>,
}

/// What the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub normalized: Tensor4,
    pub inv_std: Vec<f64>,
    /// Batch mean and biased variance; `None` in eval mode.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Option<Tensor4>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            channels,
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: None,
            running_var: None,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn is_initialized(&self) -> bool {
        self.running_mean.is_some() && self.running_var.is_some()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.channels || self.gamma.len() != self.channels || self.beta.len() != self.channels {
            return Err(Error::shape(
                "batchnorm",
                format!("layer has {} channels, input {input}", self.channels),
            ));
        }
        Ok(input)
    }

    fn normalize(&self, input: &Tensor4, mean: &[f64], var: &[f64]) -> (Tensor4, Tensor4, Vec<f64>) {
        let s = input.shape();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut xhat = vec![0.0; s.len()];
        let mut out = vec![0.0; s.len()];
        let plane = s.plane();
        for n in 0..s.n {
            for c in 0..s.c {
                let off = (n * s.c + c) * plane;
                let src = input.plane(n, c);
                for i in 0..plane {
                    let z = (src[i] - mean[c]) * inv_std[c];
                    xhat[off + i] = z;
                    out[off + i] = self.gamma[c] * z + self.beta[c];
                }
            }
        }
        (
            Tensor4::from_parts_unchecked(s, out),
            Tensor4::from_parts_unchecked(s, xhat),
            inv_std,
        )
    }

    /// Training-mode forward: normalizes with the batch's own statistics.
    /// Running statistics are not touched; see [`commit`](Self::commit).
    pub fn forward_train(&self, input: &Tensor4) -> Result<(Tensor4, BatchNormCache)> {
        let s = self.output_shape(input.shape())?;
        let count = s.n * s.plane();
        let mut mean = vec![0.0; s.c];
        let mut var = vec![0.0; s.c];
        for c in 0..s.c {
            let mut sum = 0.0;
            for n in 0..s.n {
                sum += input.plane(n, c).iter().sum::<f64>();
            }
            let m = sum / count as f64;
            let mut sq = 0.0;
            for n in 0..s.n {
                sq += input.plane(n, c).iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            }
            mean[c] = m;
            var[c] = sq / count as f64;
        }
        let (out, normalized, inv_std) = self.normalize(input, &mean, &var);
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
                batch_stats: Some((mean, var)),
                count,
            },
        ))
    }

    /// Eval-mode forward with running statistics.
    pub fn forward_eval(&self, input: &Tensor4, layer: usize) -> Result<(Tensor4, BatchNormCache)> {
        let s = self.output_shape(input.shape())?;
        let (Some(mean), Some(var)) = (&self.running_mean, &self.running_var) else {
            return Err(Error::BatchNormUninitialized { layer });
        };
        let (out, normalized, inv_std) = self.normalize(input, mean, var);
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
                batch_stats: None,
                count: s.n * s.plane(),
            },
        ))
    }

    /// Folds a training batch's statistics into the running estimates. The
    /// running variance uses the unbiased (count - 1) estimator.
    pub fn commit(&mut self, cache: &BatchNormCache) {
        let Some((mean, var)) = &cache.batch_stats else {
            return;
        };
        let m = cache.count as f64;
        let unbiased: Vec<f64> = if m > 1.0 {
            var.iter().map(|v| v * m / (m - 1.0)).collect()
        } else {
            var.clone()
        };
        match (&mut self.running_mean, &mut self.running_var) {
            (Some(rm), Some(rv)) => {
                let k = self.momentum;
                for c in 0..self.channels {
                    rm[c] = (1.0 - k) * rm[c] + k * mean[c];
                    rv[c] = (1.0 - k) * rv[c] + k * unbiased[c];
                }
            }
            _ => {
                self.running_mean = Some(mean.clone());
                self.running_var = Some(unbiased);
            }
        }
    }

    pub fn backward(&self, cache: &BatchNormCache, grad_out: &Tensor4, want_input: bool) -> Result<BatchNormGrads> {
        let s = cache.normalized.shape();
        if grad_out.shape() != s {
            return Err(Error::shape(
                "batchnorm_backward",
                format!("grad_out {} vs forward {s}", grad_out.shape()),
            ));
        }
        let plane = s.plane();
        let mut dgamma = vec![0.0; s.c];
        let mut dbeta = vec![0.0; s.c];
        for c in 0..s.c {
            for n in 0..s.n {
                let g = grad_out.plane(n, c);
                let z = cache.normalized.plane(n, c);
                dbeta[c] += g.iter().sum::<f64>();
                dgamma[c] += g.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let input = if want_input {
            let mut dx = vec![0.0; s.len()];
            let m = cache.count as f64;
            for c in 0..s.c {
                let scale = self.gamma[c] * cache.inv_std[c];
                for n in 0..s.n {
                    let off = (n * s.c + c) * plane;
                    let g = grad_out.plane(n, c);
                    let z = cache.normalized.plane(n, c);
                    for i in 0..plane {
                        dx[off + i] = if cache.batch_stats.is_some() {
                            scale * (g[i] - dbeta[c] / m - z[i] * dgamma[c] / m)
                        } else {
                            scale * g[i]
                        };
                    }
                }
            }
            Some(Tensor4::from_parts_unchecked(s, dx))
        } else {
            None
        };
        Ok(BatchNormGrads {
            input,
            gamma: dgamma,
            beta: dbeta,
        })
    }
}
