//! Ciphertexts `(c0, c1[, c2])` with `c0 - c1·s (+ c2·s^2)` decoding to the
//! message at the tracked scale.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;

use super::encoding::{self, Packing};
use super::keys::{EvalKey, SecretKey};
use super::HeParams;
use crate::error::{Error, Result};
use crate::ring::{sample_error_coeffs, Domain, RingElement, ERROR_SIGMA};

/// Extra bits a scalar multiplier may carry beyond the dropped prime.
const SCALAR_EXTRA_BITS: i32 = 20;
/// Mantissa bits used to encode a scalar multiplier.
const SCALAR_MANTISSA_BITS: i32 = 52;

#[derive(Debug, Clone)]
pub struct Ciphertext {
    params: Arc<HeParams>,
    parts: Vec<RingElement>,
    scale: f64,
    bound: f64,
}

impl Ciphertext {
    /// Fresh symmetric encryption `(a·s + m + e, a)` at the level of `a`.
    pub fn encrypt<R: Rng + ?Sized>(
        sk: &SecretKey,
        a: &RingElement,
        values: &[f64],
        packing: Packing,
        rng: &mut R,
    ) -> Result<Self> {
        let params = sk.params();
        let scale = params.scale();
        let m = encoding::encode(params, values, packing, scale, a.level())?;
        let max = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Self::encrypt_plaintext(sk, a, m, scale, max * scale + 0.5, rng)
    }

    /// Encrypts an already laid-out coefficient vector.
    pub fn encrypt_coeffs<R: Rng + ?Sized>(
        sk: &SecretKey,
        a: &RingElement,
        coeffs: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        let params = sk.params();
        let scale = params.scale();
        let m = encoding::encode_coeffs(params, coeffs, scale, a.level())?;
        let max = coeffs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Self::encrypt_plaintext(sk, a, m, scale, max * scale + 0.5, rng)
    }

    /// Encrypts an encoded plaintext whose coefficients are bounded by
    /// `magnitude`.
    pub fn encrypt_plaintext<R: Rng + ?Sized>(
        sk: &SecretKey,
        a: &RingElement,
        m: RingElement,
        scale: f64,
        magnitude: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let params = sk.params().clone();
        if a.is_extended() || a.level() != m.level() {
            return Err(Error::BasisMismatch);
        }
        let level = a.level();
        let s = sk.at_level(level)?;
        let e = sample_error_coeffs(rng, params.degree(), ERROR_SIGMA);
        let e = RingElement::from_signed(params.ring(), &e, level, false)?;
        let c0 = a.to_domain(Domain::Ntt).mul(&s)?.add(&m)?.add(&e)?;
        let c1 = a.to_domain(Domain::Ntt);
        Ok(Self {
            params,
            parts: vec![c0, c1],
            scale,
            bound: magnitude + 6.0 * ERROR_SIGMA,
        })
    }

    pub(crate) fn from_parts(
        params: &Arc<HeParams>,
        parts: Vec<RingElement>,
        scale: f64,
        bound: f64,
    ) -> Result<Self> {
        if !(2..=3).contains(&parts.len()) {
            return Err(Error::ComponentCount {
                expected: 2,
                actual: parts.len(),
            });
        }
        let level = parts[0].level();
        if parts.iter().any(|p| p.level() != level || p.is_extended()) {
            return Err(Error::BasisMismatch);
        }
        Ok(Self {
            params: params.clone(),
            parts,
            scale,
            bound,
        })
    }

    pub fn params(&self) -> &Arc<HeParams> {
        &self.params
    }

    pub fn level(&self) -> usize {
        self.parts[0].level()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Tracked worst-case magnitude of the decrypted polynomial.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn parts(&self) -> &[RingElement] {
        &self.parts
    }

    pub fn c0(&self) -> &RingElement {
        &self.parts[0]
    }

    pub fn c1(&self) -> &RingElement {
        &self.parts[1]
    }

    pub fn c2(&self) -> Option<&RingElement> {
        self.parts.get(2)
    }

    fn n(&self) -> f64 {
        self.params.degree() as f64
    }

    /// `c0 - c1·key (+ c2·key^2)` for a key element covering this level.
    pub fn decrypt_element(&self, key: &RingElement) -> Result<RingElement> {
        let s = key.restrict(self.level(), false)?.into_domain(Domain::Ntt);
        debug_assert!(
            self.bound.log2() < self.params.ring().log_modulus(self.level()) - 1.0,
            "noise bound 2^{:.1} exceeds the modulus at level {}",
            self.bound.log2(),
            self.level()
        );
        let c1s = self.parts[1].mul(&s)?;
        let mut m = self.parts[0].sub(&c1s)?;
        if let Some(c2) = self.parts.get(2) {
            m = m.add(&c2.mul(&s)?.mul(&s)?)?;
        }
        Ok(m)
    }

    pub fn decrypt(&self, sk: &SecretKey, len: usize, packing: Packing) -> Result<Vec<f64>> {
        let m = self.decrypt_element(sk.element())?;
        Ok(encoding::decode(&m, self.scale, len, packing))
    }

    /// Decoded coefficients in `range`.
    pub fn decrypt_coeffs(&self, sk: &SecretKey, range: Range<usize>) -> Result<Vec<f64>> {
        let m = self.decrypt_element(sk.element())?;
        Ok(encoding::decode_coeffs(&m, self.scale, range))
    }

    fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.level() != other.level() {
            return Err(Error::LevelMismatch {
                left: self.level(),
                right: other.level(),
            });
        }
        let rel = (self.scale - other.scale).abs() / self.scale.max(other.scale);
        if rel > 1e-9 {
            return Err(Error::ScaleMismatch {
                left: self.scale,
                right: other.scale,
            });
        }
        Ok(())
    }

    fn combine(&self, other: &Self, sub: bool) -> Result<Self> {
        self.check_aligned(other)?;
        let len = self.parts.len().max(other.parts.len());
        let mut parts = Vec::with_capacity(len);
        for i in 0..len {
            let p = match (self.parts.get(i), other.parts.get(i)) {
                (Some(x), Some(y)) if sub => x.sub(y)?,
                (Some(x), Some(y)) => x.add(y)?,
                (Some(x), None) => x.clone(),
                (None, Some(y)) if sub => y.neg(),
                (None, Some(y)) => y.clone(),
                (None, None) => unreachable!(),
            };
            parts.push(p);
        }
        Ok(Self {
            params: self.params.clone(),
            parts,
            scale: self.scale,
            bound: self.bound + other.bound,
        })
    }

    /// Componentwise sum; requires equal level and scale.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, true)
    }

    /// Tensor product `(c0c0', c0c1' + c0'c1, c1c1')` without relinearization.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.parts.len() != 2 || other.parts.len() != 2 {
            return Err(Error::ComponentCount {
                expected: 2,
                actual: self.parts.len().max(other.parts.len()),
            });
        }
        if self.level() != other.level() {
            return Err(Error::LevelMismatch {
                left: self.level(),
                right: other.level(),
            });
        }
        let (c0, c1) = (&self.parts[0], &self.parts[1]);
        let (d0, d1) = (&other.parts[0], &other.parts[1]);
        let parts = vec![
            c0.mul(d0)?,
            c0.mul(d1)?.add(&d0.mul(c1)?)?,
            c1.mul(d1)?,
        ];
        Ok(Self {
            params: self.params.clone(),
            parts,
            scale: self.scale * other.scale,
            bound: self.n() * self.bound * other.bound,
        })
    }

    /// Reduces a three-component ciphertext to two components.
    pub fn relinearize(&self, evk: &EvalKey) -> Result<Self> {
        match self.parts.len() {
            2 => return Ok(self.clone()),
            3 => {}
            n => {
                return Err(Error::ComponentCount {
                    expected: 3,
                    actual: n,
                })
            }
        }
        let (k0, k1) = evk.switch(&self.parts[2])?;
        let parts = vec![self.parts[0].add(&k0)?, self.parts[1].add(&k1)?];
        Ok(Self {
            params: self.params.clone(),
            parts,
            scale: self.scale,
            bound: self.bound + evk.noise_bound(self.level()),
        })
    }

    fn last_prime(&self) -> Result<f64> {
        if self.level() == 0 {
            return Err(Error::LevelExhausted);
        }
        let ring = self.params.ring();
        Ok(ring.chain()[ring.base_count() + self.level() - 1].value() as f64)
    }

    /// Divides by the last active prime and drops it.
    pub fn rescale(&self) -> Result<Self> {
        let q = self.last_prime()?;
        let parts = self
            .parts
            .iter()
            .map(|p| p.drop_level())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: self.params.clone(),
            parts,
            scale: self.scale / q,
            bound: self.bound / q + (1.0 + self.n()) / 2.0,
        })
    }

    /// Product, relinearization and one rescale.
    pub fn mult_relin(&self, other: &Self, evk: &EvalKey) -> Result<Self> {
        if self.level() == 0 {
            return Err(Error::LevelExhausted);
        }
        self.mul(other)?.relinearize(evk)?.rescale()
    }

    /// Multiplies by a plaintext coefficient vector encoded at `Δ`, then
    /// rescales.
    pub fn mul_plain_coeffs(&self, coeffs: &[f64]) -> Result<Self> {
        if self.level() == 0 {
            return Err(Error::LevelExhausted);
        }
        let delta = self.params.scale();
        let pt = encoding::encode_coeffs(&self.params, coeffs, delta, self.level())?
            .into_domain(Domain::Ntt);
        let max = coeffs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let parts = self
            .parts
            .iter()
            .map(|p| p.mul(&pt))
            .collect::<Result<Vec<_>>>()?;
        Self {
            params: self.params.clone(),
            parts,
            scale: self.scale * delta,
            bound: self.n() * self.bound * (max * delta + 0.5),
        }
        .rescale()
    }

    /// `mult·v + add`, consuming one level. The multiplier is encoded as an
    /// integer `round(mult·2^e)` and the new scale is `scale·2^e / q_last`.
    pub fn plain_affine(&self, mult: f64, add: f64) -> Result<Self> {
        let q = self.last_prime()?;
        if !mult.is_finite() {
            return Err(Error::ScalarOverflow(mult));
        }
        if !add.is_finite() {
            return Err(Error::ScalarOverflow(add));
        }
        let q_bits = q.log2().floor() as i32;
        let (factor, exp) = if mult == 0.0 {
            (0i64, q_bits)
        } else {
            let top = mult.abs().log2().floor() as i32 + 1;
            let e = (SCALAR_MANTISSA_BITS - top).min(q_bits + SCALAR_EXTRA_BITS);
            if e < 0 {
                return Err(Error::ScalarOverflow(mult));
            }
            ((mult * (e as f64).exp2()).round() as i64, e)
        };
        let new_scale = if mult == 0.0 {
            self.scale
        } else {
            self.scale * (exp as f64).exp2() / q
        };
        if new_scale < 1.0 {
            return Err(Error::ScalarOverflow(mult));
        }
        let mut scaled = self.clone();
        for p in &mut scaled.parts {
            *p = p.mul_scalar(factor);
        }
        scaled.bound *= factor.unsigned_abs().max(1) as f64;
        let mut out = scaled.rescale()?;
        out.scale = new_scale;
        let shift = (add * new_scale).round();
        if shift != 0.0 {
            let c = RingElement::from_integral_f64(self.params.ring(), &[shift], out.level(), false)?;
            out.parts[0] = out.parts[0].add(&c)?;
        }
        out.bound += shift.abs() + 0.5;
        Ok(out)
    }

    /// Multiplies the message by `X^k`.
    pub fn mul_monomial(&self, k: i64) -> Self {
        Self {
            params: self.params.clone(),
            parts: self.parts.iter().map(|p| p.mul_monomial(k)).collect(),
            scale: self.scale,
            bound: self.bound,
        }
    }

    /// Drops primes down to `level` without dividing; the scale is kept.
    pub fn mod_drop(&self, level: usize) -> Result<Self> {
        let parts = self
            .parts
            .iter()
            .map(|p| p.truncate_level(level))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            params: self.params.clone(),
            parts,
            scale: self.scale,
            bound: self.bound,
        })
    }
}
