//! Samplers for uniform, ternary and rounded-Gaussian polynomials.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Domain, RingElement, RingParams};
use crate::prf::{self, Seed};

/// Standard deviation of the fresh encryption error.
pub const ERROR_SIGMA: f64 = 3.2;

/// Rounded Gaussian with tails cut at six standard deviations.
pub fn sample_error_coeffs<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<i64> {
    if sigma == 0.0 {
        return vec![0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let bound = 6.0 * sigma;
    (0..n)
        .map(|_| loop {
            let x: f64 = normal.sample(rng);
            if x.abs() <= bound {
                break x.round() as i64;
            }
        })
        .collect()
}

/// Uniform coefficients in `{-1, 0, 1}`.
pub fn sample_ternary_coeffs<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

/// Error polynomial in coefficient form.
pub fn sample_error<R: Rng + ?Sized>(
    rng: &mut R,
    params: &Arc<RingParams>,
    level: usize,
    extended: bool,
    sigma: f64,
) -> RingElement {
    let coeffs = sample_error_coeffs(rng, params.degree(), sigma);
    RingElement::from_signed(params, &coeffs, level, extended).expect("valid level")
}

/// Ternary secret at the top level, in the extended basis when a special
/// prime exists, in NTT form.
pub fn sample_secret<R: Rng + ?Sized>(rng: &mut R, params: &Arc<RingParams>) -> RingElement {
    let coeffs = sample_ternary_coeffs(rng, params.degree());
    RingElement::from_signed(params, &coeffs, params.max_level(), params.special().is_some())
        .expect("valid level")
        .into_domain(Domain::Ntt)
}

/// Uniform element in NTT form; every limb is drawn independently.
pub fn sample_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    params: &Arc<RingParams>,
    level: usize,
    extended: bool,
) -> RingElement {
    let n = params.degree();
    let limbs = (0..params.limb_count(level, extended))
        .map(|l| {
            let q = params.modulus_at(level, extended, l).value();
            (0..n).map(|_| rng.random_range(0..q)).collect()
        })
        .collect();
    RingElement::from_residues(params, level, extended, Domain::Ntt, limbs).expect("valid level")
}

/// Uniform element determined by `(seed, level, extended)`.
pub fn uniform_from_seed(
    seed: &Seed,
    params: &Arc<RingParams>,
    level: usize,
    extended: bool,
) -> RingElement {
    sample_uniform(&mut prf::stream(seed), params, level, extended)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn error_is_clipped_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = sample_error_coeffs(&mut rng, 1 << 16, ERROR_SIGMA);
        let bound = (6.0 * ERROR_SIGMA).round() as i64;
        assert!(e.iter().all(|x| x.abs() <= bound));
        let mean = e.iter().sum::<i64>() as f64 / e.len() as f64;
        let var = e.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / e.len() as f64;
        assert!(mean.abs() < 0.05);
        assert!((var.sqrt() - ERROR_SIGMA).abs() < 0.1);
    }

    #[test]
    fn ternary_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = sample_ternary_coeffs(&mut rng, 3000);
        for v in -1..=1 {
            let c = t.iter().filter(|&&x| x == v).count();
            assert!((800..1200).contains(&c));
        }
    }

    #[test]
    fn seeded_uniform_is_reproducible() {
        let primes = super::super::ntt_primes(40, 3, 16, &[]).unwrap();
        let p = RingParams::new(16, &primes, 1, None).unwrap();
        let seed = prf::seed_from_u64(9);
        let a = uniform_from_seed(&seed, &p, 2, false);
        let b = uniform_from_seed(&seed, &p, 2, false);
        assert_eq!(a, b);
        let c = uniform_from_seed(&prf::seed_from_u64(10), &p, 2, false);
        assert_ne!(a, c);
    }
}
