//! Secret keys and relinearization keys.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::HeParams;
use crate::error::{Error, Result};
use crate::prf::{self, Seed};
use crate::ring::{sample_error, sample_ternary_coeffs, sample_uniform, Domain, RingElement, ERROR_SIGMA};

/// Secret `s`, held at the top level in NTT form, extended by the special
/// prime when the parameters have one.
#[derive(Debug, Clone)]
pub struct SecretKey {
    params: Arc<HeParams>,
    s: RingElement,
}

impl SecretKey {
    /// Uniform ternary secret.
    pub fn generate<R: Rng + ?Sized>(params: &Arc<HeParams>, rng: &mut R) -> Self {
        let coeffs = sample_ternary_coeffs(rng, params.degree());
        Self::from_coeffs(params, &coeffs).expect("ternary coefficients always fit")
    }

    pub fn from_seed(params: &Arc<HeParams>, seed: &Seed) -> Self {
        Self::generate(params, &mut prf::stream(seed))
    }

    /// Key with arbitrary small signed coefficients.
    pub fn from_coeffs(params: &Arc<HeParams>, coeffs: &[i64]) -> Result<Self> {
        let ring = params.ring();
        let extended = ring.special().is_some();
        let s = RingElement::from_signed(ring, coeffs, ring.max_level(), extended)?
            .into_domain(Domain::Ntt);
        Ok(Self {
            params: params.clone(),
            s,
        })
    }

    /// Wraps a top-level element, e.g. a sum of user secrets.
    pub fn from_element(params: &Arc<HeParams>, s: RingElement) -> Result<Self> {
        let ring = params.ring();
        if s.level() != ring.max_level() || s.is_extended() != ring.special().is_some() {
            return Err(Error::BasisMismatch);
        }
        Ok(Self {
            params: params.clone(),
            s: s.into_domain(Domain::Ntt),
        })
    }

    pub fn params(&self) -> &Arc<HeParams> {
        &self.params
    }

    pub fn element(&self) -> &RingElement {
        &self.s
    }

    /// The secret over the chain primes active at `level`.
    pub fn at_level(&self, level: usize) -> Result<RingElement> {
        self.s.restrict(level, false)
    }

    pub fn is_ternary(&self) -> bool {
        self.s
            .centered_coeffs()
            .iter()
            .all(|c| (-1..=1).contains(&c.try_into().unwrap_or(2i64)))
    }
}

/// Relinearization key with one pair per chain prime:
/// `b_i = a_i·s + e_i + p·g_i·s^2`, where `g_i` is 1 modulo `q_i` and 0 modulo
/// every other prime, and `p` is the special prime.
#[derive(Debug, Clone)]
pub struct EvalKey {
    params: Arc<HeParams>,
    pairs: Vec<(RingElement, RingElement)>,
}

impl EvalKey {
    pub fn generate<R: Rng + ?Sized>(sk: &SecretKey, rng: &mut R) -> Result<Self> {
        let params = sk.params.clone();
        let ring = params.ring();
        let p = ring
            .special()
            .ok_or_else(|| Error::InvalidParams("relinearization needs a special prime".into()))?
            .value();
        let top = ring.max_level();
        let s = &sk.s;
        let s2 = s.mul(s)?;
        let mut pairs = Vec::with_capacity(ring.chain().len());
        for i in 0..ring.chain().len() {
            let a = sample_uniform(rng, ring, top, true);
            let e = sample_error(rng, ring, top, true, ERROR_SIGMA);
            let mut b = a.mul(s)?.add(&e)?;
            let q = *b.modulus(i);
            let factor = q.reduce(p);
            let fs = q.shoup(factor);
            for (x, &y) in b.limbs_mut()[i].iter_mut().zip(&s2.limbs()[i]) {
                *x = q.add(*x, q.mul_shoup(y, factor, fs));
            }
            pairs.push((b, a));
        }
        Ok(Self { params, pairs })
    }

    pub fn params(&self) -> &Arc<HeParams> {
        &self.params
    }

    pub fn pairs(&self) -> &[(RingElement, RingElement)] {
        &self.pairs
    }

    pub(crate) fn from_pairs(params: &Arc<HeParams>, pairs: Vec<(RingElement, RingElement)>) -> Self {
        Self {
            params: params.clone(),
            pairs,
        }
    }

    /// Switches `d2` (a polynomial multiplying `s^2`) to a pair multiplying
    /// `(1, s)`: returns `(k0, k1)` with `k0 - k1·s ≈ d2·s^2`.
    pub(crate) fn switch(&self, d2: &RingElement) -> Result<(RingElement, RingElement)> {
        let ring = self.params.ring();
        let level = d2.level();
        let k = ring.base_count() + level;
        let d2 = d2.to_domain(Domain::Coefficient);
        let digit_product = |i: usize| -> Result<(RingElement, RingElement)> {
            let digit = RingElement::from_unsigned(ring, &d2.limbs()[i], level, true)?
                .into_domain(Domain::Ntt);
            let (b, a) = &self.pairs[i];
            let t0 = digit.mul(&b.restrict(level, true)?)?;
            let t1 = digit.mul(&a.restrict(level, true)?)?;
            Ok((t0, t1))
        };
        let zero = || {
            Ok((
                RingElement::zero(ring, level, true, Domain::Ntt),
                RingElement::zero(ring, level, true, Domain::Ntt),
            ))
        };
        let sum = |x: Result<(RingElement, RingElement)>, y: Result<(RingElement, RingElement)>| {
            let (x0, x1) = x?;
            let (y0, y1) = y?;
            Ok((x0.add(&y0)?, x1.add(&y1)?))
        };
        let (acc0, acc1) = if ring.degree() >= 2048 {
            (0..k).into_par_iter().map(digit_product).reduce(zero, sum)?
        } else {
            (0..k).map(digit_product).fold(zero(), sum)?
        };
        Ok((acc0.drop_special()?, acc1.drop_special()?))
    }

    /// Bound on the switching noise added per coefficient.
    pub(crate) fn noise_bound(&self, level: usize) -> f64 {
        let ring = self.params.ring();
        let n = ring.degree() as f64;
        let p = ring.special().map_or(1.0, |q| q.value() as f64);
        let k = ring.base_count() + level;
        let digits: f64 = ring.chain()[..k].iter().map(|q| q.value() as f64).sum();
        digits * n * 6.0 * ERROR_SIGMA / p + (1.0 + n) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_secret_is_ternary() {
        let params = HeParams::preset("test-1024").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sk = SecretKey::generate(&params, &mut rng);
        assert!(sk.is_ternary());
        let coeffs: Vec<i64> = sk
            .element()
            .centered_coeffs()
            .iter()
            .map(|c| c.try_into().unwrap())
            .collect();
        assert!(coeffs.contains(&-1) && coeffs.contains(&1));
    }

    #[test]
    fn eval_key_hides_p_times_s_squared() {
        let params = HeParams::preset("test-16").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sk = SecretKey::generate(&params, &mut rng);
        let evk = EvalKey::generate(&sk, &mut rng).unwrap();
        let ring = params.ring();
        let p = ring.special().unwrap().value() as i64;
        let s = sk.element();
        let s2 = s.mul(s).unwrap();
        let bound = (6.0 * ERROR_SIGMA).round() as i64;
        for (i, (b, a)) in evk.pairs().iter().enumerate() {
            let mut g = RingElement::zero(ring, ring.max_level(), true, Domain::Coefficient);
            g.limbs_mut()[i][0] = 1;
            let shift = s2.mul(&g).unwrap().mul_scalar(p);
            let noise = b.sub(&a.mul(s).unwrap()).unwrap().sub(&shift).unwrap();
            for c in noise.centered_coeffs() {
                let c: i64 = c.try_into().unwrap();
                assert!(c.abs() <= bound);
            }
        }
    }
}
