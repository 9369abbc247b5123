//! Word-sized prime moduli: Barrett and Shoup reduction, primality testing
//! and NTT-friendly prime search.

use crate::error::{Error, Result};

/// Largest supported modulus width. Barrett reduction below needs q < 2^62.
pub const MAX_MODULUS_BITS: u32 = 61;

/// A prime modulus with its Barrett constant `floor(2^128 / q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    ratio: u128,
}

impl Modulus {
    pub fn new(value: u64) -> Result<Self> {
        if value < 2 || 64 - value.leading_zeros() > MAX_MODULUS_BITS {
            return Err(Error::InvalidParams(format!(
                "modulus {value} outside 2..2^{MAX_MODULUS_BITS}"
            )));
        }
        if !is_prime(value) {
            return Err(Error::InvalidParams(format!("{value} is not prime")));
        }
        Ok(Self {
            value,
            ratio: u128::MAX / value as u128,
        })
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Reduces a 128-bit value below `q^2`.
    #[inline]
    pub fn reduce_u128(&self, z: u128) -> u64 {
        let lo = z as u64;
        let hi = (z >> 64) as u64;
        let r0 = self.ratio as u64;
        let r1 = (self.ratio >> 64) as u64;

        let carry = ((lo as u128 * r0 as u128) >> 64) as u64;
        let t = lo as u128 * r1 as u128;
        let (tmp1, c) = (t as u64).overflowing_add(carry);
        let tmp3 = ((t >> 64) as u64).wrapping_add(c as u64);

        let t2 = hi as u128 * r0 as u128;
        let (_, c2) = tmp1.overflowing_add(t2 as u64);
        let carry2 = ((t2 >> 64) as u64).wrapping_add(c2 as u64);

        let qhat = hi
            .wrapping_mul(r1)
            .wrapping_add(tmp3)
            .wrapping_add(carry2);
        let r = lo.wrapping_sub(qhat.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        a % self.value
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Shoup companion `floor(w * 2^64 / q)` for a fixed multiplicand `w < q`.
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `x * w mod q` given the Shoup companion of `w`.
    #[inline]
    pub fn mul_shoup(&self, x: u64, w: u64, w_shoup: u64) -> u64 {
        let q_hat = ((x as u128 * w_shoup as u128) >> 64) as u64;
        let r = x.wrapping_mul(w).wrapping_sub(q_hat.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        base %= self.value;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by Fermat; `a` must be nonzero mod q.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(!a.is_multiple_of(self.value));
        self.pow(a, self.value - 2)
    }

    /// Residue of a signed integer.
    #[inline]
    pub fn from_i64(&self, v: i64) -> u64 {
        let r = v.rem_euclid(self.value as i64);
        r as u64
    }

    pub fn from_i128(&self, v: i128) -> u64 {
        v.rem_euclid(self.value as i128) as u64
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn centered(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }

    /// Residue of an integral-valued `f64` of arbitrary magnitude.
    pub fn from_f64(&self, x: f64) -> u64 {
        debug_assert!(x.is_finite() && x.fract() == 0.0);
        if x.abs() < 9.0e18 {
            return self.from_i64(x as i64);
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exponent = ((bits >> 52) & 0x7ff) as i64 - 1075;
        let mantissa = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
        debug_assert!(exponent > 0);
        let r = self.mul(self.reduce(mantissa), self.pow(2, exponent as u64));
        if negative {
            self.neg(r)
        } else {
            r
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for all 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primes `q ≡ 1 (mod 2n)` strictly below `2^bits`, largest first, skipping
/// anything in `exclude`.
pub fn ntt_primes(bits: u32, count: usize, degree: usize, exclude: &[u64]) -> Result<Vec<u64>> {
    if !(10..=MAX_MODULUS_BITS).contains(&bits) {
        return Err(Error::InvalidParams(format!("prime width {bits} unsupported")));
    }
    let step = 2 * degree as u64;
    let top = 1u64 << bits;
    let floor = 1u64 << (bits - 1);
    let mut candidate = (top - 1) / step * step + 1;
    if candidate >= top {
        candidate -= step;
    }
    let mut found = Vec::with_capacity(count);
    while found.len() < count {
        if candidate <= floor {
            return Err(Error::InvalidParams(format!(
                "not enough {bits}-bit primes congruent to 1 mod {step}"
            )));
        }
        if is_prime(candidate) && !exclude.contains(&candidate) {
            found.push(candidate);
        }
        candidate -= step;
    }
    Ok(found)
}

/// A primitive `2n`-th root of unity modulo a prime `q ≡ 1 (mod 2n)`.
pub fn primitive_root_2n(q: &Modulus, degree: usize) -> Result<u64> {
    let two_n = 2 * degree as u64;
    if !(q.value() - 1).is_multiple_of(two_n) {
        return Err(Error::InvalidParams(format!(
            "{} is not congruent to 1 mod {two_n}",
            q.value()
        )));
    }
    let cofactor = (q.value() - 1) / two_n;
    for g in 2..q.value() {
        let psi = q.pow(g, cofactor);
        // Order is a power of two dividing 2n; it is exactly 2n iff psi^n = -1.
        if q.pow(psi, degree as u64) == q.value() - 1 {
            return Ok(psi);
        }
    }
    Err(Error::InvalidParams("no primitive root found".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn primality_on_known_values() {
        assert!(is_prime(17));
        assert!(is_prime(0xffff_ffff_ffff_ffc5)); // largest 64-bit prime
        assert!(!is_prime(1));
        assert!(!is_prime(561)); // Carmichael
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to 2,3,5,7
    }

    #[test]
    fn found_primes_satisfy_congruence() {
        let primes = ntt_primes(40, 4, 1024, &[]).unwrap();
        assert_eq!(primes.len(), 4);
        for p in primes {
            assert!(is_prime(p));
            assert_eq!(p % 2048, 1);
            assert_eq!(64 - p.leading_zeros(), 40);
        }
    }

    #[test]
    fn primitive_root_has_exact_order() {
        let q = Modulus::new(ntt_primes(50, 1, 16, &[]).unwrap()[0]).unwrap();
        let psi = primitive_root_2n(&q, 16).unwrap();
        assert_eq!(q.pow(psi, 32), 1);
        assert_eq!(q.pow(psi, 16), q.value() - 1);
    }

    #[test]
    fn huge_float_residue() {
        let q = Modulus::new(17).unwrap();
        // 2^70 mod 17: 2^8 = 1 mod 17, 70 = 8*8 + 6 -> 2^6 = 64 = 13 mod 17
        assert_eq!(q.from_f64(2f64.powi(70)), 13);
        assert_eq!(q.from_f64(-(2f64.powi(70))), 4);
        assert_eq!(q.from_f64(-3.0), 14);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128_remainder(a in any::<u64>(), b in any::<u64>(), pick in 0usize..3) {
            let q = [17u64, 1_152_921_504_606_830_593, 2_305_843_009_213_554_689][pick];
            let m = Modulus::new(q).unwrap();
            let (a, b) = (a % q, b % q);
            prop_assert_eq!(m.mul(a, b), ((a as u128 * b as u128) % q as u128) as u64);
            let ws = m.shoup(b);
            prop_assert_eq!(m.mul_shoup(a, b, ws), m.mul(a, b));
        }
    }
}
