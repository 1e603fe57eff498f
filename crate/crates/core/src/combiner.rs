//! KEM combiners: the XOR core and the PRF-then-XOR core
//! `F1(k1, c2) ⊕ F2(k2, c1)`, with a pluggable public-key KEM.

use std::cell::Cell;

use aes::cipher::{generic_array::GenericArray, BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes256;
use cmac::{Cmac, Mac};
use rand::RngCore;

use crate::error::CombinerError;
use crate::gf2::{table_widths, BitString, Fe, Field, FieldCtx};
use crate::ikem::{Ikem, IkemCiphertext};
use crate::uhash::twise_poly;

const MAGIC: &[u8; 4] = b"CMB1";

/// Bits of the computational PRF key.
pub const COMP_KEY_BITS: usize = 256;

/// Public-key KEM component.
pub trait Kem {
    type Pk: Clone;
    type Sk: Clone;

    fn key_bits(&self) -> usize;
    fn ct_len(&self) -> usize;
    fn gen<R: RngCore + ?Sized>(&self, rng: &mut R) -> (Self::Pk, Self::Sk);
    fn enc<R: RngCore + ?Sized>(&self, pk: &Self::Pk, rng: &mut R) -> (BitString, Vec<u8>);
    /// `None` is ⊥.
    fn dec(&self, sk: &Self::Sk, c: &[u8]) -> Option<BitString>;
}

/// Keyed-permutation stand-in: `c = AES_K(r)`, key = CMAC-CTR(K, r).
/// Broken mode outputs the all-zero key.
#[derive(Clone, Debug)]
pub struct TestDoubleKem {
    pub key_bits: usize,
    pub broken: bool,
}

impl TestDoubleKem {
    pub fn new(key_bits: usize) -> Self {
        TestDoubleKem {
            key_bits,
            broken: false,
        }
    }

    pub fn broken(key_bits: usize) -> Self {
        TestDoubleKem {
            key_bits,
            broken: true,
        }
    }

    fn derive(&self, sk: &[u8; 32], r: &[u8]) -> BitString {
        if self.broken {
            BitString::zero(self.key_bits)
        } else {
            prf_comp(sk, r, self.key_bits)
        }
    }
}

impl Kem for TestDoubleKem {
    type Pk = [u8; 32];
    type Sk = [u8; 32];

    fn key_bits(&self) -> usize {
        self.key_bits
    }

    fn ct_len(&self) -> usize {
        16
    }

    fn gen<R: RngCore + ?Sized>(&self, rng: &mut R) -> ([u8; 32], [u8; 32]) {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        (k, k)
    }

    fn enc<R: RngCore + ?Sized>(&self, pk: &[u8; 32], rng: &mut R) -> (BitString, Vec<u8>) {
        let mut r = [0u8; 16];
        rng.fill_bytes(&mut r);
        let mut block = GenericArray::from(r);
        Aes256::new(GenericArray::from_slice(pk)).encrypt_block(&mut block);
        (self.derive(pk, &r), block.to_vec())
    }

    fn dec(&self, sk: &[u8; 32], c: &[u8]) -> Option<BitString> {
        if c.len() != 16 {
            return None;
        }
        let mut block = GenericArray::clone_from_slice(c);
        Aes256::new(GenericArray::from_slice(sk)).decrypt_block(&mut block);
        Some(self.derive(sk, &block))
    }
}

/// `k1 ⊕ k2`, with ⊥ on either side giving ⊥.
pub fn combine_xor(
    k1: Option<&BitString>,
    k2: Option<&BitString>,
) -> Result<Option<BitString>, CombinerError> {
    match (k1, k2) {
        (Some(a), Some(b)) => {
            if a.len() != b.len() {
                return Err(CombinerError::KeyLength(format!("{} vs {}", a.len(), b.len())));
            }
            Ok(Some(a.xor(b)?))
        }
        _ => Ok(None),
    }
}

/// AES-256-CMAC in counter mode: `T_i = CMAC(K, [i]_32 ∥ x)`, truncated to `ell`.
pub fn prf_comp(key: &[u8; 32], x: &[u8], ell: usize) -> BitString {
    let mut out = Vec::with_capacity(ell.div_ceil(128) * 16);
    let mut i = 0u32;
    while out.len() * 8 < ell {
        let mut mac = <Cmac<Aes256> as Mac>::new_from_slice(key).expect("32-byte key");
        mac.update(&i.to_be_bytes());
        mac.update(x);
        out.extend_from_slice(&mac.finalize().into_bytes());
        i += 1;
    }
    let full = BitString::from_bytes_be(out.len() * 8, &out).expect("exact length");
    full.prefix(ell).expect("ell ≤ produced bits")
}

/// Field for F1 inputs of `len` bytes: smallest tabled width ≥ 32 + 8·len.
pub fn prf_it_field(len: usize) -> Result<Field, CombinerError> {
    let bits = 32 + 8 * len;
    let m = table_widths()
        .filter(|&m| m >= bits)
        .min()
        .ok_or(CombinerError::EncodingOverflow { bits })?;
    Ok(FieldCtx::new(m)?)
}

/// Length-prefixed big-endian encoding of `x` into `field`.
pub fn encode_prf_input(field: &Field, x: &[u8]) -> Result<Fe, CombinerError> {
    let bits = 32 + 8 * x.len();
    if bits > field.m() || x.len() > u32::MAX as usize {
        return Err(CombinerError::EncodingOverflow { bits });
    }
    let mut bytes = (x.len() as u32).to_be_bytes().to_vec();
    bytes.extend_from_slice(x);
    let b = BitString::from_bytes_be(bits, &bytes)?;
    Ok(field.embed(&b)?)
}

/// Key of the (q_d+2)-wise independent polynomial family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItPrfKey {
    pub coeffs: Vec<Fe>,
}

impl ItPrfKey {
    pub fn random<R: RngCore + ?Sized>(field: &Field, q_d: u32, rng: &mut R) -> Self {
        ItPrfKey {
            coeffs: (0..q_d as usize + 2).map(|_| field.random(rng)).collect(),
        }
    }

    /// Splits `(q_d+2)·m` key bits into coefficients, most significant first.
    pub fn from_bits(field: &Field, q_d: u32, bits: &BitString) -> Result<Self, CombinerError> {
        let m = field.m();
        let count = q_d as usize + 2;
        if bits.len() != count * m {
            return Err(CombinerError::KeyLength(format!(
                "F1 key needs {} bits, got {}",
                count * m,
                bits.len()
            )));
        }
        let coeffs = (0..count)
            .map(|i| field.element(&bits.block(i * m + 1, (i + 1) * m)?))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ItPrfKey { coeffs })
    }

    pub fn field(&self) -> &Field {
        self.coeffs[0].field()
    }
}

/// F1: the polynomial family evaluated at the encoded input, truncated to `ell`.
pub fn prf_it(key: &ItPrfKey, x: &[u8], ell: usize) -> Result<BitString, CombinerError> {
    let fx = encode_prf_input(key.field(), x)?;
    Ok(twise_poly(&key.coeffs, &fx, ell)?)
}

/// `F1(k1, c2) ⊕ F2(k2, c1)` with caller-supplied PRFs.
pub fn combine_ptx<F1, F2>(
    k1: Option<&BitString>,
    k2: Option<&BitString>,
    c1: &[u8],
    c2: &[u8],
    f1: F1,
    f2: F2,
) -> Result<Option<BitString>, CombinerError>
where
    F1: FnOnce(&BitString, &[u8]) -> Result<BitString, CombinerError>,
    F2: FnOnce(&BitString, &[u8]) -> Result<BitString, CombinerError>,
{
    let (Some(k1), Some(k2)) = (k1, k2) else {
        return Ok(None);
    };
    let a = f1(k1, c2)?;
    let b = f2(k2, c1)?;
    combine_xor(Some(&a), Some(&b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Core {
    Xor,
    Ptx,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombinedCiphertext {
    pub c1: IkemCiphertext,
    pub c2: Vec<u8>,
}

/// iKEM combined with a public-key KEM under one core function.
#[derive(Debug)]
pub struct Combiner<K: Kem> {
    ikem: Ikem,
    kem: K,
    core: Core,
    ell: usize,
    f1_field: Option<Field>,
    f1_calls: Cell<u64>,
}

impl<K: Kem> Combiner<K> {
    /// XOR needs `ℓ_ikem = ℓ_kem = ell`; PtX needs `ℓ_ikem = (q_d+2)·m`,
    /// a 256-bit KEM key and `ell ≤ m`.
    pub fn new(ikem: Ikem, kem: K, core: Core, ell: usize) -> Result<Self, CombinerError> {
        let ik = ikem.params().ell;
        let f1_field = match core {
            Core::Xor => {
                if ik != ell || kem.key_bits() != ell {
                    return Err(CombinerError::KeyLength(format!(
                        "XOR core needs equal lengths, got {ik}, {} and {ell}",
                        kem.key_bits()
                    )));
                }
                None
            }
            Core::Ptx => {
                let f = prf_it_field(kem.ct_len())?;
                let need = (ikem.params().q_d as usize + 2) * f.m();
                if ik != need {
                    return Err(CombinerError::KeyLength(format!(
                        "F1 key needs {need} iKEM bits, got {ik}"
                    )));
                }
                if kem.key_bits() != COMP_KEY_BITS {
                    return Err(CombinerError::KeyLength("F2 key must be 256 bits".into()));
                }
                if ell > f.m() {
                    return Err(CombinerError::KeyLength(format!(
                        "output {ell} exceeds F1 width {}",
                        f.m()
                    )));
                }
                Some(f)
            }
        };
        Ok(Combiner {
            ikem,
            kem,
            core,
            ell,
            f1_field,
            f1_calls: Cell::new(0),
        })
    }

    pub fn ikem(&self) -> &Ikem {
        &self.ikem
    }

    pub fn kem(&self) -> &K {
        &self.kem
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Number of F1 evaluations so far.
    pub fn f1_calls(&self) -> u64 {
        self.f1_calls.get()
    }

    fn core(
        &self,
        k1: Option<&BitString>,
        k2: Option<&BitString>,
        c: &CombinedCiphertext,
    ) -> Result<Option<BitString>, CombinerError> {
        match self.core {
            Core::Xor => combine_xor(k1, k2),
            Core::Ptx => {
                let field = self.f1_field.as_ref().expect("PtX field");
                let q_d = self.ikem.params().q_d;
                let c1 = self.ikem.encode(&c.c1)?;
                combine_ptx(
                    k1,
                    k2,
                    &c1,
                    &c.c2,
                    |k, x| {
                        self.f1_calls.set(self.f1_calls.get() + 1);
                        prf_it(&ItPrfKey::from_bits(field, q_d, k)?, x, self.ell)
                    },
                    |k, x| {
                        let key: [u8; 32] = k.to_bytes_be().try_into().expect("256-bit key");
                        Ok(prf_comp(&key, x, self.ell))
                    },
                )
            }
        }
    }

    pub fn encap<R: RngCore + ?Sized>(
        &self,
        x: &[u8],
        public_seed: Option<&Fe>,
        pk: &K::Pk,
        rng: &mut R,
    ) -> Result<(BitString, CombinedCiphertext), CombinerError> {
        let xb = self.ikem.x_bits(x)?;
        let seeds = self.ikem.random_seeds(rng, public_seed)?;
        self.encap_with(&xb, seeds, public_seed, pk, rng)
    }

    /// Encapsulation with caller-chosen iKEM seeds (for exhaustive analysis).
    pub fn encap_with<R: RngCore + ?Sized>(
        &self,
        x: &BitString,
        seeds: IkemCiphertext,
        public_seed: Option<&Fe>,
        pk: &K::Pk,
        rng: &mut R,
    ) -> Result<(BitString, CombinedCiphertext), CombinerError> {
        let (k1, c1) = self.ikem.encap_with(x, seeds, public_seed)?;
        let (k2, c2) = self.kem.enc(pk, rng);
        let c = CombinedCiphertext { c1, c2 };
        let k = self
            .core(Some(k1.bits()), Some(&k2), &c)?
            .expect("both components present");
        Ok((k, c))
    }

    pub fn decap(
        &self,
        y: &[u8],
        public_seed: Option<&Fe>,
        sk: &K::Sk,
        c: &CombinedCiphertext,
    ) -> Result<Option<BitString>, CombinerError> {
        let k1 = self.ikem.decap(y, &c.c1, public_seed)?;
        let k2 = self.kem.dec(sk, &c.c2);
        self.core(k1.as_ref().map(|k| k.bits()), k2.as_ref(), c)
    }

    pub fn encode(&self, c: &CombinedCiphertext) -> Result<Vec<u8>, CombinerError> {
        let c1 = self.ikem.encode(&c.c1)?;
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(c1.len() as u32).to_be_bytes());
        out.extend(c1);
        out.extend_from_slice(&c.c2);
        Ok(out)
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<CombinedCiphertext, CombinerError> {
        let bad = |m: &str| CombinerError::Malformed(m.to_string());
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad("bad header"));
        }
        let l = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        if l != self.ikem.encoded_len() || bytes.len() != 8 + l + self.kem.ct_len() {
            return Err(bad("length mismatch"));
        }
        let c1 = self
            .ikem
            .decode(&bytes[8..8 + l])
            .map_err(|e| CombinerError::Malformed(e.to_string()))?;
        Ok(CombinedCiphertext {
            c1,
            c2: bytes[8 + l..].to_vec(),
        })
    }
}
