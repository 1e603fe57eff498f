//! Hash families: the extractor h′, the multiply-truncate family for
//! CEA, the CCA hash family, t-wise independent
//! polynomials and the strongly universal affine family of the baseline.

use crate::error::GfError;
use crate::gf2::{BitString, Field, FieldCtx, Fe};

/// Extractor seed `s′` with output length `ell`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractorSeed {
    pub s_prime: Fe,
    pub ell: usize,
}

/// `block(s′ · x, 1, ℓ)` with `x` zero-extended into the seed's field.
pub fn hprime(x: &BitString, seed: &ExtractorSeed) -> Result<BitString, GfError> {
    let f = seed.s_prime.field();
    if seed.ell > f.m() {
        return Err(GfError::ValueTooWide { bits: f.m() });
    }
    f.embed(x)?.mul(&seed.s_prime)?.to_bits().prefix(seed.ell)
}

/// CEA reconciliation hash: `block(s · x, 1, t)` over GF(2^n).
pub fn h_cea(x: &BitString, s: &Fe, t: usize) -> Result<BitString, GfError> {
    let f = s.field();
    if x.len() != f.m() {
        return Err(GfError::LengthMismatch {
            left: f.m(),
            right: x.len(),
        });
    }
    if t > f.m() {
        return Err(GfError::ValueTooWide { bits: f.m() });
    }
    f.element(x)?.mul(s)?.to_bits().prefix(t)
}

/// CCA reconciliation seed `s = (s2, s1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CcaSeed {
    pub s2: Fe,
    pub s1: Fe,
}

impl CcaSeed {
    /// `s2 ∥ s1` as an n-bit string.
    pub fn to_bits(&self) -> BitString {
        self.s2.to_bits().concat(&self.s1.to_bits())
    }

    pub fn from_bits(bits: &BitString, hi: &Field, lo: &Field) -> Result<Self, GfError> {
        let (a, b) = bits.split(lo.m())?;
        Ok(CcaSeed {
            s2: hi.element(&a)?,
            s1: lo.element(&b)?,
        })
    }
}

/// `s′` split into `r` elements of GF(2^{n−t}), the tail padded with ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedSeedVector {
    parts: Vec<Fe>,
    w: usize,
}

impl PaddedSeedVector {
    /// Smallest even `r ≥ 2` with `w ≤ r · part_bits`.
    pub fn r_for(w: usize, part_bits: usize) -> usize {
        let r = w.div_ceil(part_bits).max(1);
        r + (r % 2)
    }

    /// Splits the MSB-first bits of `s′` into consecutive chunks.
    pub fn split(s_prime: &BitString, part_field: &Field) -> Result<Self, GfError> {
        let pb = part_field.m();
        let w = s_prime.len();
        let r = Self::r_for(w, pb);
        let mut bits: Vec<bool> = s_prime.bits_msb().collect();
        bits.resize(r * pb, true);
        let parts = bits
            .chunks(pb)
            .map(|c| part_field.element(&BitString::from_bits_msb(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PaddedSeedVector { parts, w })
    }

    pub fn r(&self) -> usize {
        self.parts.len()
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn parts(&self) -> &[Fe] {
        &self.parts
    }

    /// Inverts [`split`](Self::split).
    pub fn reassemble(&self) -> BitString {
        let bits: Vec<bool> = self
            .parts
            .iter()
            .flat_map(|p| p.to_bits().bits_msb().collect::<Vec<_>>())
            .take(self.w)
            .collect();
        BitString::from_bits_msb(&bits)
    }
}

/// The CCA hash family for fixed `(n, t)`.
#[derive(Clone, Debug)]
pub struct CcaHash {
    n: usize,
    t: usize,
    hi: Field,
    lo: Field,
}

impl CcaHash {
    pub fn new(n: usize, t: usize) -> Result<Self, GfError> {
        if t == 0 || 2 * t > n {
            return Err(GfError::UnsupportedWidth(t));
        }
        Ok(CcaHash {
            n,
            t,
            hi: FieldCtx::new(n - t)?,
            lo: FieldCtx::new(t)?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// GF(2^{n−t}), home of x2, s2 and the s′_i.
    pub fn hi(&self) -> &Field {
        &self.hi
    }

    /// GF(2^t), home of x1, s1 and v.
    pub fn lo(&self) -> &Field {
        &self.lo
    }

    /// `x = x2 ∥ x1` with x2 the high n−t bits.
    pub fn split_x(&self, x: &BitString) -> Result<(Fe, Fe), GfError> {
        if x.len() != self.n {
            return Err(GfError::LengthMismatch {
                left: self.n,
                right: x.len(),
            });
        }
        let (a, b) = x.split(self.t)?;
        Ok((self.hi.element(&a)?, self.lo.element(&b)?))
    }

    /// `[x2^{r+3} + Σ s′_i x2^{i+1} + s2·x2]_{1..t} + x1^3 + s1·x1`.
    pub fn eval(
        &self,
        x: &BitString,
        sv: &PaddedSeedVector,
        s: &CcaSeed,
    ) -> Result<BitString, GfError> {
        let (x2, x1) = self.split_x(x)?;
        self.eval_split(&x2, &x1, sv.parts(), s)
    }

    pub fn eval_split(
        &self,
        x2: &Fe,
        x1: &Fe,
        parts: &[Fe],
        s: &CcaSeed,
    ) -> Result<BitString, GfError> {
        let r = parts.len();
        let mut acc = s.s2.mul(x2)?;
        let mut pow = x2.clone(); // x2^{i+1} for the current i
        for sp in parts {
            pow = pow.mul(x2)?;
            acc = acc.add(&sp.mul(&pow)?)?;
        }
        acc = acc.add(&x2.pow(r as u64 + 3))?;
        let high = self.lo.element(&acc.to_bits().prefix(self.t)?)?;
        let low = x1.square().mul(x1)?.add(&s.s1.mul(x1)?)?;
        Ok(high.add(&low)?.to_bits())
    }
}

/// CCA hash evaluation with fields taken from the seeds.
pub fn h_cca(x: &BitString, sv: &PaddedSeedVector, s: &CcaSeed) -> Result<BitString, GfError> {
    let n = s.s2.field().m() + s.s1.field().m();
    CcaHash::new(n, s.s1.field().m())?.eval(x, sv, s)
}

/// `block(Σ_{i=0..d} a_i x^i, 1, ℓ)` by Horner's rule.
pub fn twise_poly(key: &[Fe], x: &Fe, out_bits: usize) -> Result<BitString, GfError> {
    let f = x.field();
    if out_bits > f.m() {
        return Err(GfError::ValueTooWide { bits: f.m() });
    }
    let mut acc = f.zero();
    for a in key.iter().rev() {
        acc = acc.mul(x)?.add(a)?;
    }
    acc.to_bits().prefix(out_bits)
}

/// Seed `(a, b)` of the strongly universal family `x ↦ a·x + b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineSeed {
    pub a: Fe,
    pub b: Fe,
}

impl AffineSeed {
    pub fn random<R: rand::RngCore + ?Sized>(field: &Field, rng: &mut R) -> Self {
        AffineSeed {
            a: field.random(rng),
            b: field.random(rng),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = self.a.to_bytes_be();
        v.extend(self.b.to_bytes_be());
        v
    }

    pub fn from_bytes(field: &Field, bytes: &[u8]) -> Result<Self, GfError> {
        let k = field.m().div_ceil(8);
        if bytes.len() != 2 * k {
            return Err(GfError::EncodingLength {
                expected: 2 * k,
                got: bytes.len(),
            });
        }
        Ok(AffineSeed {
            a: field.from_bytes_be(&bytes[..k])?,
            b: field.from_bytes_be(&bytes[k..])?,
        })
    }
}

/// `block(a·x + b, 1, out_bits)`.
pub fn affine_hash(x: &BitString, seed: &AffineSeed, out_bits: usize) -> Result<BitString, GfError> {
    let f = seed.a.field();
    if out_bits > f.m() {
        return Err(GfError::ValueTooWide { bits: f.m() });
    }
    f.embed(x)?.mul(&seed.a)?.add(&seed.b)?.to_bits().prefix(out_bits)
}
