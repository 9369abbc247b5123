//! Negacyclic polynomial ring `Z_Q[X]/(X^N + 1)` in residue number system
//! form.
//!
//! The modulus chain is `base primes | rescaling primes | special prime`.
//! An element at level `l` carries one limb per base prime plus the first
//! `l` rescaling primes, optionally followed by a limb for the special
//! prime (the "extended" basis used by evaluation keys).

mod modulus;
mod ntt;
mod sampling;
mod serialize;

use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use modulus::{is_prime, ntt_primes, primitive_root_2n, Modulus, MAX_MODULUS_BITS};
pub use ntt::NttTable;
pub use sampling::{
    sample_error, sample_error_coeffs, sample_secret, sample_ternary_coeffs, sample_uniform,
    uniform_from_seed, ERROR_SIGMA,
};

/// Degree at which per-limb work is handed to the thread pool.
const PARALLEL_DEGREE: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Coefficient,
    Ntt,
}

impl Domain {
    fn name(self) -> &'static str {
        match self {
            Domain::Coefficient => "coefficient",
            Domain::Ntt => "NTT",
        }
    }
}

/// CRT reconstruction constants for one basis.
#[derive(Debug)]
struct CrtBasis {
    product: BigUint,
    half: BigUint,
    punctured: Vec<BigUint>,
    punctured_inv: Vec<u64>,
}

impl CrtBasis {
    fn new(moduli: &[Modulus]) -> Self {
        let product = moduli
            .iter()
            .fold(BigUint::from(1u8), |acc, q| acc * q.value());
        let punctured: Vec<BigUint> = moduli.iter().map(|q| &product / q.value()).collect();
        let punctured_inv = moduli
            .iter()
            .zip(&punctured)
            .map(|(q, p)| {
                let r = (p % q.value()).to_u64().expect("residue fits");
                q.inv(r)
            })
            .collect();
        let half = &product >> 1u32;
        Self {
            product,
            half,
            punctured,
            punctured_inv,
        }
    }

    fn reconstruct(&self, moduli: &[Modulus], residues: &[u64]) -> BigInt {
        let mut acc = BigUint::zero();
        for (i, q) in moduli.iter().enumerate() {
            let t = q.mul(residues[i], self.punctured_inv[i]);
            acc += &self.punctured[i] * t;
        }
        acc %= &self.product;
        if acc > self.half {
            BigInt::from(acc) - BigInt::from(self.product.clone())
        } else {
            BigInt::from(acc)
        }
    }
}

/// Ring dimension, modulus chain and NTT tables.
#[derive(Debug)]
pub struct RingParams {
    degree: usize,
    chain: Vec<Modulus>,
    base_count: usize,
    special: Option<Modulus>,
    chain_tables: Vec<NttTable>,
    special_table: Option<NttTable>,
    crt_by_level: Vec<CrtBasis>,
}

impl RingParams {
    /// Builds parameters from explicit primes. `chain` lists base primes
    /// first (`base_count` of them) followed by the rescaling primes.
    pub fn new(
        degree: usize,
        chain: &[u64],
        base_count: usize,
        special: Option<u64>,
    ) -> Result<Arc<Self>> {
        if degree < 2 || !degree.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "degree {degree} is not a power of two >= 2"
            )));
        }
        if base_count == 0 || base_count > chain.len() {
            return Err(Error::InvalidParams(format!(
                "base count {base_count} invalid for a chain of {}",
                chain.len()
            )));
        }
        let mut all: Vec<u64> = chain.to_vec();
        all.extend(special);
        for (i, p) in all.iter().enumerate() {
            if all[..i].contains(p) {
                return Err(Error::InvalidParams(format!("prime {p} repeated")));
            }
            if p % (2 * degree as u64) != 1 {
                return Err(Error::InvalidParams(format!(
                    "prime {p} is not congruent to 1 mod {}",
                    2 * degree
                )));
            }
        }
        let chain: Vec<Modulus> = chain.iter().map(|&p| Modulus::new(p)).collect::<Result<_>>()?;
        let special = special.map(Modulus::new).transpose()?;
        let chain_tables = chain
            .iter()
            .map(|q| NttTable::new(*q, degree))
            .collect::<Result<Vec<_>>>()?;
        let special_table = special.map(|q| NttTable::new(q, degree)).transpose()?;
        let crt_by_level = (base_count..=chain.len())
            .map(|k| CrtBasis::new(&chain[..k]))
            .collect();
        Ok(Arc::new(Self {
            degree,
            chain,
            base_count,
            special,
            chain_tables,
            special_table,
            crt_by_level,
        }))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of rescaling primes, i.e. the top level.
    pub fn max_level(&self) -> usize {
        self.chain.len() - self.base_count
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    pub fn chain(&self) -> &[Modulus] {
        &self.chain
    }

    pub fn special(&self) -> Option<&Modulus> {
        self.special.as_ref()
    }

    /// Sum of prime bit widths over the chain and the special prime.
    pub fn total_bits(&self) -> u32 {
        self.chain.iter().chain(self.special.iter()).map(|q| q.bits()).sum()
    }

    /// `log2` of the chain product active at `level`.
    pub fn log_modulus(&self, level: usize) -> f64 {
        self.chain[..self.base_count + level]
            .iter()
            .map(|q| (q.value() as f64).log2())
            .sum()
    }

    pub(crate) fn limb_count(&self, level: usize, extended: bool) -> usize {
        self.base_count + level + usize::from(extended)
    }

    pub(crate) fn modulus_at(&self, level: usize, extended: bool, limb: usize) -> &Modulus {
        let k = self.base_count + level;
        if limb < k {
            &self.chain[limb]
        } else {
            debug_assert!(extended && limb == k);
            self.special.as_ref().expect("special prime present")
        }
    }

    pub(crate) fn table_at(&self, level: usize, extended: bool, limb: usize) -> &NttTable {
        let k = self.base_count + level;
        if limb < k {
            &self.chain_tables[limb]
        } else {
            debug_assert!(extended && limb == k);
            self.special_table.as_ref().expect("special prime present")
        }
    }

    pub(crate) fn moduli(&self, level: usize, extended: bool) -> Vec<Modulus> {
        let mut v = self.chain[..self.base_count + level].to_vec();
        if extended {
            v.push(self.special.expect("special prime present"));
        }
        v
    }

    fn check_level(&self, level: usize, extended: bool) -> Result<()> {
        if level > self.max_level() {
            return Err(Error::LevelMismatch {
                left: level,
                right: self.max_level(),
            });
        }
        if extended && self.special.is_none() {
            return Err(Error::InvalidParams("parameters have no special prime".into()));
        }
        Ok(())
    }
}

impl PartialEq for RingParams {
    fn eq(&self, other: &Self) -> bool {
        self.degree == other.degree
            && self.chain == other.chain
            && self.base_count == other.base_count
            && self.special == other.special
    }
}

/// A polynomial with one residue vector per active prime.
#[derive(Debug, Clone)]
pub struct RingElement {
    params: Arc<RingParams>,
    level: usize,
    extended: bool,
    domain: Domain,
    limbs: Vec<Vec<u64>>,
}

impl RingElement {
    pub fn zero(params: &Arc<RingParams>, level: usize, extended: bool, domain: Domain) -> Self {
        let limbs = vec![vec![0u64; params.degree]; params.limb_count(level, extended)];
        Self {
            params: params.clone(),
            level,
            extended,
            domain,
            limbs,
        }
    }

    /// Constant polynomial `1` in coefficient form.
    pub fn one(params: &Arc<RingParams>, level: usize, extended: bool) -> Self {
        let mut e = Self::zero(params, level, extended, Domain::Coefficient);
        for limb in &mut e.limbs {
            limb[0] = 1;
        }
        e
    }

    /// Lifts small signed coefficients into every active prime.
    pub fn from_signed(
        params: &Arc<RingParams>,
        coeffs: &[i64],
        level: usize,
        extended: bool,
    ) -> Result<Self> {
        params.check_level(level, extended)?;
        if coeffs.len() > params.degree {
            return Err(Error::CapacityExceeded {
                len: coeffs.len(),
                capacity: params.degree,
            });
        }
        let mut e = Self::zero(params, level, extended, Domain::Coefficient);
        for (l, limb) in e.limbs.iter_mut().enumerate() {
            let q = params.modulus_at(level, extended, l);
            for (dst, &c) in limb.iter_mut().zip(coeffs) {
                *dst = q.from_i64(c);
            }
        }
        Ok(e)
    }

    /// Lifts integral-valued floats of any magnitude.
    pub fn from_integral_f64(
        params: &Arc<RingParams>,
        coeffs: &[f64],
        level: usize,
        extended: bool,
    ) -> Result<Self> {
        params.check_level(level, extended)?;
        if coeffs.len() > params.degree {
            return Err(Error::CapacityExceeded {
                len: coeffs.len(),
                capacity: params.degree,
            });
        }
        let mut e = Self::zero(params, level, extended, Domain::Coefficient);
        for (l, limb) in e.limbs.iter_mut().enumerate() {
            let q = params.modulus_at(level, extended, l);
            for (dst, &c) in limb.iter_mut().zip(coeffs) {
                *dst = q.from_f64(c);
            }
        }
        Ok(e)
    }

    pub fn from_residues(
        params: &Arc<RingParams>,
        level: usize,
        extended: bool,
        domain: Domain,
        limbs: Vec<Vec<u64>>,
    ) -> Result<Self> {
        params.check_level(level, extended)?;
        if limbs.len() != params.limb_count(level, extended) {
            return Err(Error::InvalidInput(format!(
                "expected {} limbs, got {}",
                params.limb_count(level, extended),
                limbs.len()
            )));
        }
        for (l, limb) in limbs.iter().enumerate() {
            let q = params.modulus_at(level, extended, l).value();
            if limb.len() != params.degree || limb.iter().any(|&x| x >= q) {
                return Err(Error::InvalidInput(format!("limb {l} malformed")));
            }
        }
        Ok(Self {
            params: params.clone(),
            level,
            extended,
            domain,
            limbs,
        })
    }

    pub fn params(&self) -> &Arc<RingParams> {
        &self.params
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn limbs(&self) -> &[Vec<u64>] {
        &self.limbs
    }

    pub fn degree(&self) -> usize {
        self.params.degree
    }

    pub(crate) fn limbs_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.limbs
    }

    pub(crate) fn modulus(&self, limb: usize) -> &Modulus {
        self.params.modulus_at(self.level, self.extended, limb)
    }

    fn transform(&mut self, forward: bool) {
        let params = self.params.clone();
        let (level, extended) = (self.level, self.extended);
        let run = |(l, limb): (usize, &mut Vec<u64>)| {
            let t = params.table_at(level, extended, l);
            if forward {
                t.forward(limb);
            } else {
                t.inverse(limb);
            }
        };
        if self.params.degree >= PARALLEL_DEGREE {
            self.limbs.par_iter_mut().enumerate().for_each(run);
        } else {
            self.limbs.iter_mut().enumerate().for_each(run);
        }
    }

    /// Forward negacyclic NTT; the input must be in coefficient form.
    pub fn ntt_forward(mut self) -> Result<Self> {
        if self.domain != Domain::Coefficient {
            return Err(Error::DomainMismatch {
                expected: Domain::Coefficient.name(),
            });
        }
        self.transform(true);
        self.domain = Domain::Ntt;
        Ok(self)
    }

    /// Inverse negacyclic NTT; the input must be in NTT form.
    pub fn ntt_inverse(mut self) -> Result<Self> {
        if self.domain != Domain::Ntt {
            return Err(Error::DomainMismatch {
                expected: Domain::Ntt.name(),
            });
        }
        self.transform(false);
        self.domain = Domain::Coefficient;
        Ok(self)
    }

    pub fn into_domain(mut self, domain: Domain) -> Self {
        if self.domain != domain {
            self.transform(domain == Domain::Ntt);
            self.domain = domain;
        }
        self
    }

    pub fn to_domain(&self, domain: Domain) -> Self {
        self.clone().into_domain(domain)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.params, &other.params) && *self.params != *other.params {
            return Err(Error::BasisMismatch);
        }
        if self.level != other.level {
            return Err(Error::LevelMismatch {
                left: self.level,
                right: other.level,
            });
        }
        if self.extended != other.extended {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&Modulus, u64, u64) -> u64) -> Result<Self> {
        self.check_compatible(other)?;
        let other = if other.domain == self.domain {
            std::borrow::Cow::Borrowed(other)
        } else {
            std::borrow::Cow::Owned(other.to_domain(self.domain))
        };
        let mut out = self.clone();
        for (l, (dst, src)) in out.limbs.iter_mut().zip(other.limbs.iter()).enumerate() {
            let q = self.modulus(l);
            for (x, &y) in dst.iter_mut().zip(src) {
                *x = f(q, *x, y);
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |q, a, b| q.add(a, b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |q, a, b| q.sub(a, b))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        *self = self.add(other)?;
        Ok(())
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for (l, limb) in out.limbs.iter_mut().enumerate() {
            let q = *self.modulus(l);
            for x in limb.iter_mut() {
                *x = q.neg(*x);
            }
        }
        out
    }

    /// Negacyclic product. The result is in the domain of `self`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let a = self.to_domain(Domain::Ntt);
        let b = other.to_domain(Domain::Ntt);
        let out = a.zip_with(&b, |q, x, y| q.mul(x, y))?;
        Ok(out.into_domain(self.domain))
    }

    /// Multiplies by a signed integer constant.
    pub fn mul_scalar(&self, c: i64) -> Self {
        let mut out = self.clone();
        for (l, limb) in out.limbs.iter_mut().enumerate() {
            let q = *self.modulus(l);
            let c = q.from_i64(c);
            let cs = q.shoup(c);
            for x in limb.iter_mut() {
                *x = q.mul_shoup(*x, c, cs);
            }
        }
        out
    }

    /// Multiplies by `X^k`; negative `k` uses `X^{-1} = -X^{N-1}`.
    pub fn mul_monomial(&self, k: i64) -> Self {
        let n = self.params.degree as i64;
        let shift = k.rem_euclid(2 * n);
        let source = self.to_domain(Domain::Coefficient);
        let mut out = Self::zero(&self.params, self.level, self.extended, Domain::Coefficient);
        for (l, (dst, src)) in out.limbs.iter_mut().zip(&source.limbs).enumerate() {
            let q = *self.modulus(l);
            for (i, &c) in src.iter().enumerate() {
                let mut pos = i as i64 + shift;
                let mut negate = false;
                while pos >= n {
                    pos -= n;
                    negate = !negate;
                }
                dst[pos as usize] = if negate { q.neg(c) } else { c };
            }
        }
        out.into_domain(self.domain)
    }

    /// Divides by the last active chain prime with rounding and drops it.
    pub fn drop_level(&self) -> Result<Self> {
        if self.extended {
            return Err(Error::BasisMismatch);
        }
        if self.level == 0 {
            return Err(Error::LevelExhausted);
        }
        let last = self.limbs.len() - 1;
        Ok(self.divide_round_by_limb(last, self.level - 1, false))
    }

    /// Divides by the special prime with rounding and drops its limb.
    pub fn drop_special(&self) -> Result<Self> {
        if !self.extended {
            return Err(Error::BasisMismatch);
        }
        let last = self.limbs.len() - 1;
        Ok(self.divide_round_by_limb(last, self.level, false))
    }

    fn divide_round_by_limb(&self, last: usize, new_level: usize, new_extended: bool) -> Self {
        let p = *self.modulus(last);
        let mut tail = self.limbs[last].clone();
        if self.domain == Domain::Ntt {
            self.params
                .table_at(self.level, self.extended, last)
                .inverse(&mut tail);
        }
        let centered: Vec<i64> = tail.iter().map(|&x| p.centered(x)).collect();
        let params = self.params.clone();
        let domain = self.domain;
        let (level, extended) = (self.level, self.extended);
        let mut limbs: Vec<Vec<u64>> = self.limbs[..last].to_vec();
        let work = |(j, limb): (usize, &mut Vec<u64>)| {
            let q = params.modulus_at(level, extended, j);
            let mut t: Vec<u64> = centered.iter().map(|&c| q.from_i64(c)).collect();
            if domain == Domain::Ntt {
                params.table_at(level, extended, j).forward(&mut t);
            }
            let inv = q.inv(p.value() % q.value());
            let inv_s = q.shoup(inv);
            for (x, y) in limb.iter_mut().zip(&t) {
                *x = q.mul_shoup(q.sub(*x, *y), inv, inv_s);
            }
        };
        if self.params.degree >= PARALLEL_DEGREE {
            limbs.par_iter_mut().enumerate().for_each(work);
        } else {
            limbs.iter_mut().enumerate().for_each(work);
        }
        Self {
            params: self.params.clone(),
            level: new_level,
            extended: new_extended,
            domain: self.domain,
            limbs,
        }
    }

    /// Discards rescaling primes above `level` without dividing. Congruences
    /// modulo the remaining primes are preserved.
    pub fn truncate_level(&self, level: usize) -> Result<Self> {
        if self.extended {
            return Err(Error::BasisMismatch);
        }
        self.restrict(level, false)
    }

    /// Keeps the residues for the sub-basis at `level`, with the special limb
    /// if `extended`. Requires the source basis to contain the target basis.
    pub fn restrict(&self, level: usize, extended: bool) -> Result<Self> {
        if level > self.level {
            return Err(Error::LevelMismatch {
                left: level,
                right: self.level,
            });
        }
        if extended && !self.extended {
            return Err(Error::BasisMismatch);
        }
        let k = self.params.base_count + level;
        let mut limbs: Vec<Vec<u64>> = self.limbs[..k].to_vec();
        if extended {
            limbs.push(self.limbs[self.limbs.len() - 1].clone());
        }
        Ok(Self {
            params: self.params.clone(),
            level,
            extended,
            domain: self.domain,
            limbs,
        })
    }

    /// Reduces nonnegative integer coefficients into every active prime.
    pub fn from_unsigned(
        params: &Arc<RingParams>,
        coeffs: &[u64],
        level: usize,
        extended: bool,
    ) -> Result<Self> {
        params.check_level(level, extended)?;
        if coeffs.len() > params.degree {
            return Err(Error::CapacityExceeded {
                len: coeffs.len(),
                capacity: params.degree,
            });
        }
        let mut e = Self::zero(params, level, extended, Domain::Coefficient);
        for (l, limb) in e.limbs.iter_mut().enumerate() {
            let q = params.modulus_at(level, extended, l);
            for (dst, &c) in limb.iter_mut().zip(coeffs) {
                *dst = q.reduce(c);
            }
        }
        Ok(e)
    }

    /// Re-expresses a non-extended element in the extended basis by adding a
    /// special-prime limb. Only meaningful for elements whose centered
    /// coefficients are small (secrets, errors).
    pub fn extend_small(&self) -> Result<Self> {
        if self.extended {
            return Ok(self.clone());
        }
        let coeffs = self.centered_coeffs();
        let small: Vec<i64> = coeffs
            .iter()
            .map(|c| c.to_i64())
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidInput("coefficients too large to extend".into()))?;
        let out = Self::from_signed(&self.params, &small, self.level, true)?;
        Ok(out.into_domain(self.domain))
    }

    /// Exact signed coefficients via CRT, centered in `(-Q/2, Q/2]`.
    pub fn centered_coeffs(&self) -> Vec<BigInt> {
        self.centered_coeffs_in(0..self.params.degree)
    }

    /// Centered coefficients for the index range only.
    pub fn centered_coeffs_in(&self, range: std::ops::Range<usize>) -> Vec<BigInt> {
        assert!(range.end <= self.params.degree, "coefficient range out of bounds");
        let coeff = self.to_domain(Domain::Coefficient);
        let moduli = self.params.moduli(self.level, self.extended);
        let owned;
        let basis = if self.extended {
            owned = CrtBasis::new(&moduli);
            &owned
        } else {
            &self.params.crt_by_level[self.level]
        };
        let mut residues = vec![0u64; moduli.len()];
        range
            .map(|i| {
                for (l, r) in residues.iter_mut().enumerate() {
                    *r = coeff.limbs[l][i];
                }
                basis.reconstruct(&moduli, &residues)
            })
            .collect()
    }

    /// Centered coefficients as floats (exact up to `f64` rounding).
    pub fn to_f64_coeffs(&self) -> Vec<f64> {
        self.centered_coeffs()
            .iter()
            .map(|c| c.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|l| l.iter().all(|&x| x == 0))
    }
}

impl PartialEq for RingElement {
    fn eq(&self, other: &Self) -> bool {
        if self.check_compatible(other).is_err() {
            return false;
        }
        if self.domain == other.domain {
            self.limbs == other.limbs
        } else {
            self.limbs == other.to_domain(self.domain).limbs
        }
    }
}

impl Eq for RingElement {}
