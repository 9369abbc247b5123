//! Binary encoding of ring parameters and elements.

use std::sync::Arc;

use super::{Domain, RingElement, RingParams};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const PARAMS_MAGIC: &[u8; 4] = b"FHRP";
const ELEMENT_MAGIC: &[u8; 4] = b"FHRE";
const VERSION: u16 = 1;

impl RingParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(PARAMS_MAGIC, VERSION);
        w.u32(self.degree as u32);
        w.u32(self.base_count as u32);
        w.u32(self.chain.len() as u32);
        for q in &self.chain {
            w.u64(q.value());
        }
        w.u64(self.special.map_or(0, |q| q.value()));
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Arc<Self>> {
        let mut r = Reader::new(bytes, PARAMS_MAGIC, VERSION)?;
        let degree = r.u32()? as usize;
        let base_count = r.u32()? as usize;
        let len = r.u32()? as usize;
        if len > 64 {
            return Err(Error::Decode(format!("chain of {len} primes")));
        }
        let chain = (0..len).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let special = r.u64()?;
        r.finish()?;
        let special = (special != 0).then_some(special);
        RingParams::new(degree, &chain, base_count, special)
            .map_err(|e| Error::Decode(e.to_string()))
    }
}

impl RingElement {
    /// Self-describing encoding: header, level, basis flag, domain, primes
    /// and residues.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ELEMENT_MAGIC, VERSION);
        self.write_into(&mut w);
        w.finish()
    }

    pub(crate) fn write_into(&self, w: &mut Writer) {
        w.u32(self.params.degree as u32);
        w.u32(self.level as u32);
        w.u8(u8::from(self.extended));
        w.u8(match self.domain {
            Domain::Coefficient => 0,
            Domain::Ntt => 1,
        });
        for l in 0..self.limbs.len() {
            w.u64(self.modulus(l).value());
        }
        for limb in &self.limbs {
            for &x in limb {
                w.u64(x);
            }
        }
    }

    /// Decodes an element against known parameters; the primes recorded in
    /// the encoding must match.
    pub fn from_bytes(params: &Arc<RingParams>, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, ELEMENT_MAGIC, VERSION)?;
        let e = Self::read_from(params, &mut r)?;
        r.finish()?;
        Ok(e)
    }

    pub(crate) fn read_from(params: &Arc<RingParams>, r: &mut Reader<'_>) -> Result<Self> {
        let degree = r.u32()? as usize;
        if degree != params.degree {
            return Err(Error::Decode(format!("degree {degree} != {}", params.degree)));
        }
        let level = r.u32()? as usize;
        let extended = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Decode(format!("bad basis flag {b}"))),
        };
        let domain = match r.u8()? {
            0 => Domain::Coefficient,
            1 => Domain::Ntt,
            b => return Err(Error::Decode(format!("bad domain tag {b}"))),
        };
        params
            .check_level(level, extended)
            .map_err(|e| Error::Decode(e.to_string()))?;
        let count = params.limb_count(level, extended);
        for l in 0..count {
            let q = r.u64()?;
            if q != params.modulus_at(level, extended, l).value() {
                return Err(Error::Decode(format!("prime {q} not in parameter chain")));
            }
        }
        let limbs = (0..count)
            .map(|_| (0..degree).map(|_| r.u64()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        RingElement::from_residues(params, level, extended, domain, limbs)
            .map_err(|e| Error::Decode(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{ntt_primes, sample_uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn element_roundtrip_and_rejections() {
        let primes = ntt_primes(45, 4, 32, &[]).unwrap();
        let p = RingParams::new(32, &primes[..3], 1, Some(primes[3])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (level, ext) in [(0, false), (2, false), (1, true)] {
            let e = sample_uniform(&mut rng, &p, level, ext);
            let bytes = e.to_bytes();
            assert_eq!(RingElement::from_bytes(&p, &bytes).unwrap(), e);
            assert!(RingElement::from_bytes(&p, &bytes[..bytes.len() - 1]).is_err());
        }
        let mut bad = sample_uniform(&mut rng, &p, 0, false).to_bytes();
        bad[0] = b'X';
        assert!(matches!(RingElement::from_bytes(&p, &bad), Err(Error::Decode(_))));
        let other = RingParams::new(32, &primes[1..3], 1, None).unwrap();
        let e = sample_uniform(&mut rng, &p, 0, false);
        assert!(RingElement::from_bytes(&other, &e.to_bytes()).is_err());
    }

    #[test]
    fn params_roundtrip() {
        let primes = ntt_primes(45, 4, 32, &[]).unwrap();
        let p = RingParams::new(32, &primes[..3], 1, Some(primes[3])).unwrap();
        let q = RingParams::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(*p, *q);
    }
}
