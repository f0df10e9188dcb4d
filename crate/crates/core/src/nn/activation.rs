use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub fn relu(input: &Tensor4) -> Tensor4 {
    input.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// Gradient of [`relu`]: passes `grad_out` where the forward input was
/// strictly positive and zeroes it elsewhere (the kink at 0 gets slope 0).
pub fn relu_backward(input: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("input {} vs grad {}", input.shape(), grad_out.shape()),
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor4::from_parts_unchecked(input.shape(), data))
}
