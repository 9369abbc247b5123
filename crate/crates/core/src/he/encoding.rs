//! Fixed-point coefficient encoding.
//!
//! Forward packing stores `round(Δ·v_k)` at coefficient `k`; reversed packing
//! stores it at `len - 1 - k`, so the product of the two packings carries
//! `Σ v_k^2` at coefficient `len - 1`.

use num_traits::ToPrimitive;

use super::HeParams;
use crate::error::{Error, Result};
use crate::ring::RingElement;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Packing {
    Forward,
    Reversed,
}

impl Packing {
    /// Coefficient index holding element `k` of a length-`len` vector.
    pub fn position(self, k: usize, len: usize) -> usize {
        match self {
            Packing::Forward => k,
            Packing::Reversed => len - 1 - k,
        }
    }
}

fn check_value(params: &HeParams, v: f64) -> Result<()> {
    let bound = params.value_bound();
    if !v.is_finite() || v.abs() > bound {
        return Err(Error::EncodingOverflow { value: v, bound });
    }
    Ok(())
}

/// Encodes a message vector of length at most `N/2`.
pub fn encode(
    params: &HeParams,
    values: &[f64],
    packing: Packing,
    scale: f64,
    level: usize,
) -> Result<RingElement> {
    if values.len() > params.slot_capacity() {
        return Err(Error::CapacityExceeded {
            len: values.len(),
            capacity: params.slot_capacity(),
        });
    }
    let mut coeffs = vec![0.0; values.len()];
    for (k, &v) in values.iter().enumerate() {
        coeffs[packing.position(k, values.len())] = v;
    }
    encode_coeffs(params, &coeffs, scale, level)
}

/// Encodes `coeffs[i]` at coefficient `i` for an already laid-out vector of
/// length at most `N`.
pub fn encode_coeffs(
    params: &HeParams,
    coeffs: &[f64],
    scale: f64,
    level: usize,
) -> Result<RingElement> {
    if coeffs.len() > params.degree() {
        return Err(Error::CapacityExceeded {
            len: coeffs.len(),
            capacity: params.degree(),
        });
    }
    let mut scaled = Vec::with_capacity(coeffs.len());
    for &v in coeffs {
        check_value(params, v)?;
        scaled.push((v * scale).round());
    }
    RingElement::from_integral_f64(params.ring(), &scaled, level, false)
}

/// Inverse of [`encode`]: reads `len` values at the given scale.
pub fn decode(elem: &RingElement, scale: f64, len: usize, packing: Packing) -> Vec<f64> {
    let raw = decode_coeffs(elem, scale, 0..len);
    (0..len).map(|k| raw[packing.position(k, len)]).collect()
}

/// Centered coefficients in `range` divided by `scale`.
pub fn decode_coeffs(elem: &RingElement, scale: f64, range: std::ops::Range<usize>) -> Vec<f64> {
    elem.centered_coeffs_in(range)
        .iter()
        .map(|c| c.to_f64().unwrap_or(f64::NAN) / scale)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{ntt_primes, RingParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> std::sync::Arc<HeParams> {
        let primes = ntt_primes(50, 2, 16, &[]).unwrap();
        let ring = RingParams::new(16, &primes, 1, None).unwrap();
        HeParams::custom("enc", ring, 10).unwrap()
    }

    #[test]
    fn hand_fixed_point_example() {
        let p = params();
        let q = p.ring().chain()[0].value();
        let e = encode(&p, &[1.5, -2.25], Packing::Forward, 1024.0, 1).unwrap();
        assert_eq!(&e.limbs()[0][..3], &[1536, q - 2304, 0]);
    }

    #[test]
    fn zero_encodes_to_zero() {
        let p = params();
        assert!(encode(&p, &[0.0; 8], Packing::Reversed, 1024.0, 0).unwrap().is_zero());
    }

    #[test]
    fn roundtrip_within_half_ulp_of_scale() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for packing in [Packing::Forward, Packing::Reversed] {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-100.0..100.0)).collect();
            let e = encode(&p, &v, packing, 1024.0, 1).unwrap();
            let back = decode(&e, 1024.0, v.len(), packing);
            for (a, b) in v.iter().zip(&back) {
                assert!((a - b).abs() <= 0.5 / 1024.0);
            }
        }
    }

    #[test]
    fn reversed_places_first_value_last() {
        let p = params();
        let e = encode(&p, &[1.0, 2.0, 3.0], Packing::Reversed, 1.0, 0).unwrap();
        assert_eq!(&e.limbs()[0][..3], &[3, 2, 1]);
    }

    #[test]
    fn rejects_overflow_and_length() {
        let p = params();
        let bound = p.value_bound();
        assert!(matches!(
            encode(&p, &[bound * 4.0], Packing::Forward, 1024.0, 0),
            Err(Error::EncodingOverflow { .. })
        ));
        assert!(matches!(
            encode(&p, &[f64::NAN], Packing::Forward, 1024.0, 0),
            Err(Error::EncodingOverflow { .. })
        ));
        assert!(matches!(
            encode(&p, &[0.0; 9], Packing::Forward, 1024.0, 0),
            Err(Error::CapacityExceeded { .. })
        ));
    }
}
