use crate::error::{Error, Result};

/// Plain gradient descent update `w <- w - lr * g`, elementwise.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} params vs {} grads", params.len(), grads.len()),
        ));
    }
    if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and non-negative, got {learning_rate}"
        )));
    }
    for (w, g) in params.iter_mut().zip(grads) {
        *w -= learning_rate * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_update() {
        let mut w = [1.0];
        sgd_step(&mut w, &[0.5], 0.1).unwrap();
        assert_eq!(w[0], 0.95);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut w = [0.3, -2.0];
        sgd_step(&mut w, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(w, [0.3, -2.0]);
    }

    #[test]
    fn quadratic_step() {
        // f(w) = w^2, g = 2w
        let mut w = [1.0];
        let g = [2.0 * w[0]];
        sgd_step(&mut w, &g, 0.1).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatch_and_negative_rate() {
        assert!(sgd_step(&mut [1.0], &[1.0, 2.0], 0.1).is_err());
        assert!(sgd_step(&mut [1.0], &[1.0], -0.1).is_err());
    }
}
