use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor4};

/// Fully connected layer `y = W x + b`. `weight` is row-major
/// (out_features, in_features). Inputs of any spatial shape are read as
/// flattened per batch item; the output is (n, out_features, 1, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub input: Option<Tensor4>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Dense {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if self.weight.len() != self.in_features * self.out_features || self.bias.len() != self.out_features {
            return Err(Error::shape("dense", "parameter lengths disagree with declared features"));
        }
        if input.item_len() != self.in_features {
            return Err(Error::shape(
                "dense",
                format!("expects {} inputs per item, got {input}", self.in_features),
            ));
        }
        Ok(Shape::new(input.n, self.out_features, 1, 1))
    }

    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        let os = self.output_shape(input.shape())?;
        let mut out = Vec::with_capacity(os.len());
        for n in 0..os.n {
            let x = input.item(n);
            for o in 0..self.out_features {
                let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                out.push(self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
            }
        }
        Ok(Tensor4::from_parts_unchecked(os, out))
    }

    pub fn backward(&self, input: &Tensor4, grad_out: &Tensor4, want_input: bool) -> Result<DenseGrads> {
        let os = self.output_shape(input.shape())?;
        if grad_out.shape() != os {
            return Err(Error::shape(
                "dense_backward",
                format!("grad_out {} but forward output is {os}", grad_out.shape()),
            ));
        }
        let mut gw = vec![0.0; self.weight.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let mut gi = if want_input { vec![0.0; input.len()] } else { Vec::new() };
        let k = self.in_features;
        for n in 0..os.n {
            let x = input.item(n);
            let g = grad_out.item(n);
            for o in 0..self.out_features {
                let go = g[o];
                gb[o] += go;
                for (w, v) in gw[o * k..(o + 1) * k].iter_mut().zip(x) {
                    *w += go * v;
                }
                if want_input {
                    let row = &self.weight[o * k..(o + 1) * k];
                    for (d, w) in gi[n * k..(n + 1) * k].iter_mut().zip(row) {
                        *d += go * w;
                    }
                }
            }
        }
        Ok(DenseGrads {
            input: want_input.then(|| Tensor4::from_parts_unchecked(input.shape(), gi)),
            weight: gw,
            bias: gb,
        })
    }
}
