//! Seeded He-uniform initialization.

use rand::Rng as _;

use crate::rng::Rng;

/// Fills `weights` from U(-b, b) with b = sqrt(6 / fan_in).
pub fn he_uniform(weights: &mut [f64], fan_in: usize, rng: &mut Rng) {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    for w in weights {
        *w = rng.random_range(-bound..bound);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_and_seeded() {
        let mut a = vec![0.0; 500];
        let mut b = vec![0.0; 500];
        he_uniform(&mut a, 24, &mut crate::rng::from_seed(3));
        he_uniform(&mut b, 24, &mut crate::rng::from_seed(3));
        assert_eq!(a, b);
        let bound = 0.5;
        assert!(a.iter().all(|w| w.abs() < bound));
        assert!(a.iter().any(|w| w.abs() > 0.4));
    }
}
