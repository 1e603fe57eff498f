//! One-time data encapsulation: AES-256-CTR (OT) and CTR plus a
//! Wegman-Carter polynomial MAC in GF(2^128) (OTCCA).

use aes::cipher::{KeyIvInit, StreamCipher};
use aes::Aes256;
use serde::{Deserialize, Serialize};

use crate::error::DemError;
use crate::gf2::{BitString, Fe, Field, FieldCtx};

type Aes256Ctr = ctr::Ctr128BE<Aes256>;

/// Bits of the stream-cipher key `k_e`.
pub const ENC_KEY_BITS: usize = 256;
/// Width of the MAC field.
pub const MAC_FIELD_BITS: usize = 128;
/// Tag length in bytes.
pub const TAG_BYTES: usize = MAC_FIELD_BITS / 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemMode {
    Ot,
    Otcca,
}

impl DemMode {
    /// `dem.Len` in bits.
    pub fn key_bits(self) -> usize {
        match self {
            DemMode::Ot => ENC_KEY_BITS,
            DemMode::Otcca => ENC_KEY_BITS + 2 * MAC_FIELD_BITS,
        }
    }

    pub fn tag_len(self) -> usize {
        match self {
            DemMode::Ot => 0,
            DemMode::Otcca => TAG_BYTES,
        }
    }
}

impl std::str::FromStr for DemMode {
    type Err = DemError;

    fn from_str(s: &str) -> Result<Self, DemError> {
        match s {
            "ot" => Ok(DemMode::Ot),
            "otcca" => Ok(DemMode::Otcca),
            _ => Err(DemError::Malformed(format!("unknown DEM mode {s:?}"))),
        }
    }
}

/// Source of the pad XORed into the body.
pub trait Keystream {
    fn apply(&self, k_e: &[u8], data: &mut [u8]);
}

/// AES-256 in counter mode from a zero counter block.
#[derive(Clone, Copy, Debug, Default)]
pub struct AesCtr;

impl Keystream for AesCtr {
    fn apply(&self, k_e: &[u8], data: &mut [u8]) {
        aes_ctr_apply(k_e, &[0u8; 16], data);
    }
}

/// Test hook: a caller-supplied pad (true randomness) replaces AES.
#[derive(Clone, Debug)]
pub struct InjectedPad(pub Vec<u8>);

impl Keystream for InjectedPad {
    fn apply(&self, _k_e: &[u8], data: &mut [u8]) {
        assert!(self.0.len() >= data.len(), "injected pad too short");
        data.iter_mut().zip(&self.0).for_each(|(d, p)| *d ^= p);
    }
}

/// Calibration stub: no encryption at all.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityKeystream;

impl Keystream for IdentityKeystream {
    fn apply(&self, _k_e: &[u8], _data: &mut [u8]) {}
}

pub(crate) fn aes_ctr_apply(key: &[u8], iv: &[u8; 16], data: &mut [u8]) {
    let mut c = Aes256Ctr::new(key.into(), iv.into());
    c.apply_keystream(data);
}

/// One-time key; encryption marks it used.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemKey {
    mode: DemMode,
    bytes: Vec<u8>,
    used: bool,
}

impl DemKey {
    pub fn new(mode: DemMode, bytes: &[u8]) -> Result<Self, DemError> {
        if bytes.len() * 8 != mode.key_bits() {
            return Err(DemError::KeyLength {
                expected: mode.key_bits(),
                got: bytes.len() * 8,
            });
        }
        Ok(DemKey {
            mode,
            bytes: bytes.to_vec(),
            used: false,
        })
    }

    pub fn from_bits(mode: DemMode, bits: &BitString) -> Result<Self, DemError> {
        if bits.len() != mode.key_bits() {
            return Err(DemError::KeyLength {
                expected: mode.key_bits(),
                got: bits.len(),
            });
        }
        Self::new(mode, &bits.to_bytes_be())
    }

    pub fn mode(&self) -> DemMode {
        self.mode
    }

    pub fn is_used(&self) -> bool {
        self.used
    }

    fn k_e(&self) -> &[u8] {
        &self.bytes[..32]
    }

    fn mac_keys(&self) -> (&[u8], &[u8]) {
        (&self.bytes[32..48], &self.bytes[48..64])
    }
}

/// `body ∥ tag`; the tag is empty in OT mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemCiphertext {
    pub body: Vec<u8>,
    pub tag: Vec<u8>,
}

impl DemCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body.clone();
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(mode: DemMode, bytes: &[u8]) -> Result<Self, DemError> {
        let tl = mode.tag_len();
        if bytes.len() < tl {
            return Err(DemError::Malformed("shorter than the tag".into()));
        }
        let (body, tag) = bytes.split_at(bytes.len() - tl);
        Ok(DemCiphertext {
            body: body.to_vec(),
            tag: tag.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.body.len() + self.tag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn mac_field() -> Field {
    FieldCtx::new(MAC_FIELD_BITS).expect("GF(2^128) is tabled")
}

/// Polynomial MAC over GF(2^m): Horner over zero-padded `m/8`-byte
/// blocks, then the bit length, then `+ k2`. The empty message gives `k2`.
pub fn poly_mac(field: &Field, k1: &Fe, k2: &Fe, data: &[u8]) -> Result<Fe, DemError> {
    let m = field.m();
    let bs = m / 8;
    let mut acc = field.zero();
    for chunk in data.chunks(bs) {
        let mut block = vec![0u8; bs];
        block[..chunk.len()].copy_from_slice(chunk);
        acc = acc.add(&field.from_bytes_be(&block)?)?.mul(k1)?;
    }
    let bitlen = (data.len() as u64).wrapping_mul(8);
    let bitlen = if m < 64 { bitlen & ((1u64 << m) - 1) } else { bitlen };
    acc = acc.add(&field.from_u64(bitlen)?)?.mul(k1)?;
    Ok(acc.add(k2)?)
}

fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |d, (x, y)| d | (x ^ y)) == 0
}

/// DEM with a pluggable keystream.
#[derive(Clone, Debug, Default)]
pub struct Dem<K: Keystream = AesCtr> {
    keystream: K,
}

impl Dem<AesCtr> {
    pub fn new() -> Self {
        Dem { keystream: AesCtr }
    }
}

impl<K: Keystream> Dem<K> {
    pub fn with_keystream(keystream: K) -> Self {
        Dem { keystream }
    }

    fn take(&self, k: &mut DemKey, mode: DemMode) -> Result<(), DemError> {
        if k.mode != mode {
            return Err(DemError::KeyLength {
                expected: mode.key_bits(),
                got: k.mode.key_bits(),
            });
        }
        if k.used {
            return Err(DemError::KeyReused);
        }
        k.used = true;
        Ok(())
    }

    fn tag(&self, k: &DemKey, body: &[u8]) -> Result<Vec<u8>, DemError> {
        let f = mac_field();
        let (a, b) = k.mac_keys();
        let t = poly_mac(&f, &f.from_bytes_be(a)?, &f.from_bytes_be(b)?, body)?;
        Ok(t.to_bytes_be())
    }

    pub fn encrypt_ot(&self, k: &mut DemKey, m: &[u8]) -> Result<DemCiphertext, DemError> {
        self.take(k, DemMode::Ot)?;
        let mut body = m.to_vec();
        self.keystream.apply(k.k_e(), &mut body);
        Ok(DemCiphertext { body, tag: vec![] })
    }

    pub fn decrypt_ot(&self, k: &DemKey, c: &DemCiphertext) -> Result<Vec<u8>, DemError> {
        if k.mode != DemMode::Ot || !c.tag.is_empty() {
            return Err(DemError::Malformed("OT ciphertext carries no tag".into()));
        }
        let mut m = c.body.clone();
        self.keystream.apply(k.k_e(), &mut m);
        Ok(m)
    }

    pub fn encrypt_otcca(&self, k: &mut DemKey, m: &[u8]) -> Result<DemCiphertext, DemError> {
        self.take(k, DemMode::Otcca)?;
        let mut body = m.to_vec();
        self.keystream.apply(k.k_e(), &mut body);
        let tag = self.tag(k, &body)?;
        Ok(DemCiphertext { body, tag })
    }

    /// `None` is ⊥; the tag is checked before any plaintext is produced.
    pub fn decrypt_otcca(
        &self,
        k: &DemKey,
        c: &DemCiphertext,
    ) -> Result<Option<Vec<u8>>, DemError> {
        if k.mode != DemMode::Otcca {
            return Err(DemError::KeyLength {
                expected: DemMode::Otcca.key_bits(),
                got: k.mode.key_bits(),
            });
        }
        if c.tag.len() != TAG_BYTES {
            return Err(DemError::Malformed("tag must be 16 bytes".into()));
        }
        if !ct_eq(&self.tag(k, &c.body)?, &c.tag) {
            return Ok(None);
        }
        let mut m = c.body.clone();
        self.keystream.apply(k.k_e(), &mut m);
        Ok(Some(m))
    }

    /// Mode-dispatching encryption.
    pub fn encrypt(&self, k: &mut DemKey, m: &[u8]) -> Result<DemCiphertext, DemError> {
        match k.mode {
            DemMode::Ot => self.encrypt_ot(k, m),
            DemMode::Otcca => self.encrypt_otcca(k, m),
        }
    }

    /// Mode-dispatching decryption; OT never returns ⊥.
    pub fn decrypt(&self, k: &DemKey, c: &DemCiphertext) -> Result<Option<Vec<u8>>, DemError> {
        match k.mode {
            DemMode::Ot => self.decrypt_ot(k, c).map(Some),
            DemMode::Otcca => self.decrypt_otcca(k, c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
    use proptest::prelude::*;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rng(s: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(s)
    }

    fn key(mode: DemMode, r: &mut ChaCha20Rng) -> DemKey {
        let mut b = vec![0u8; mode.key_bits() / 8];
        r.fill_bytes(&mut b);
        DemKey::new(mode, &b).unwrap()
    }

    /// Block-by-block CTR from the raw cipher, counter incremented by hand.
    fn ctr_oracle(key: &[u8], iv: [u8; 16], data: &[u8]) -> Vec<u8> {
        let cipher = Aes256::new(GenericArray::from_slice(key));
        let mut ctr = u128::from_be_bytes(iv);
        let mut out = Vec::new();
        for chunk in data.chunks(16) {
            let mut block = GenericArray::from(ctr.to_be_bytes());
            cipher.encrypt_block(&mut block);
            out.extend(chunk.iter().zip(block.iter()).map(|(a, b)| a ^ b));
            ctr = ctr.wrapping_add(1);
        }
        out
    }

    #[test]
    fn nist_ctr_aes256_vector() {
        let k = hex::decode("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4")
            .unwrap();
        let iv: [u8; 16] = hex::decode("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff")
            .unwrap()
            .try_into()
            .unwrap();
        let pt = hex::decode("6bc1bee22e409f96e93d7e117393172a").unwrap();
        let mut ct = pt.clone();
        aes_ctr_apply(&k, &iv, &mut ct);
        assert_eq!(hex::encode(&ct), "601ec313775789a5b7a7f504bbf3d228");
        assert_eq!(ct, ctr_oracle(&k, iv, &pt));
    }

    #[test]
    fn ot_matches_independent_ctr() {
        let mut r = rng(1);
        let mut k = key(DemMode::Ot, &mut r);
        let m: Vec<u8> = (0..100u8).collect();
        let kb = k.bytes.clone();
        let c = Dem::new().encrypt_ot(&mut k, &m).unwrap();
        assert_eq!(c.body, ctr_oracle(&kb, [0; 16], &m));
        assert_eq!(
            hex::encode(&c.body[..16]),
            hex::encode(&ctr_oracle(&kb, [0; 16], &m)[..16])
        );
        assert!(c.tag.is_empty());
    }

    #[test]
    fn empty_message() {
        let mut r = rng(2);
        let dem = Dem::new();
        let mut k = key(DemMode::Ot, &mut r);
        assert!(dem.encrypt_ot(&mut k, &[]).unwrap().body.is_empty());
        let mut k = key(DemMode::Otcca, &mut r);
        let c = dem.encrypt_otcca(&mut k, &[]).unwrap();
        assert_eq!(c.tag, k.mac_keys().1);
        assert_eq!(dem.decrypt_otcca(&k, &c).unwrap(), Some(vec![]));
    }

    #[test]
    fn key_guard_and_lengths() {
        let mut r = rng(3);
        let dem = Dem::new();
        let mut k = key(DemMode::Otcca, &mut r);
        dem.encrypt_otcca(&mut k, b"a").unwrap();
        assert!(matches!(dem.encrypt_otcca(&mut k, b"a"), Err(DemError::KeyReused)));
        assert!(matches!(
            DemKey::new(DemMode::Ot, &[0; 33]),
            Err(DemError::KeyLength { expected: 256, got: 264 })
        ));
        let mut ot = key(DemMode::Ot, &mut r);
        assert!(dem.encrypt_otcca(&mut ot, b"a").is_err());
        assert_eq!(DemMode::Otcca.key_bits(), 512);
    }

    #[test]
    fn otcca_exhaustive_tamper_sweep() {
        let mut r = rng(4);
        let dem = Dem::new();
        for len in [0usize, 1, 15, 16, 17, 64] {
            let mut k = key(DemMode::Otcca, &mut r);
            let m: Vec<u8> = (0..len).map(|_| r.gen()).collect();
            let c = dem.encrypt_otcca(&mut k, &m).unwrap();
            let wire = c.to_bytes();
            assert_eq!(wire.len(), len + TAG_BYTES);
            for bit in 0..wire.len() * 8 {
                let mut w = wire.clone();
                w[bit / 8] ^= 0x80 >> (bit % 8);
                let t = DemCiphertext::from_bytes(DemMode::Otcca, &w).unwrap();
                assert_eq!(dem.decrypt_otcca(&k, &t).unwrap(), None, "len {len} bit {bit}");
            }
            assert_eq!(dem.decrypt_otcca(&k, &c).unwrap(), Some(m));
        }
    }

    /// Roots of the difference polynomial, counted over all of GF(2^16).
    fn forgery_keys(f: &Field, a: &[u8], b: &[u8], dtag: &Fe) -> usize {
        let zero = f.zero();
        f.elements()
            .filter(|k1| {
                let ta = poly_mac(f, k1, &zero, a).unwrap();
                let tb = poly_mac(f, k1, &zero, b).unwrap();
                ta.add(&tb).unwrap() == *dtag
            })
            .count()
    }

    #[test]
    fn mac_collision_bound_gf16() {
        let f = FieldCtx::new(16).unwrap();
        let mut r = rng(5);
        for _ in 0..6 {
            let la = r.gen_range(0..9);
            let lb = r.gen_range(0..9);
            let a: Vec<u8> = (0..la).map(|_| r.gen()).collect();
            let mut b: Vec<u8> = (0..lb).map(|_| r.gen()).collect();
            if a == b {
                b.push(1);
            }
            let dtag = f.random(&mut r);
            let blocks = a.len().max(b.len()).div_ceil(2);
            assert!(forgery_keys(&f, &a, &b, &dtag) <= blocks + 1);
        }
        // Trailing zero bytes are separated by the length block.
        let z = f.zero();
        assert!(forgery_keys(&f, &[1], &[1, 0], &z) <= 2);
    }

    #[test]
    fn one_time_pad_hook() {
        // With a true-random pad, every body value is hit equally often for
        // both messages: enumerate all 1-byte pads.
        let m0 = [0x00u8];
        let m1 = [0xa5u8];
        let mut h0 = [0u32; 256];
        let mut h1 = [0u32; 256];
        for pad in 0..=255u8 {
            let dem = Dem::with_keystream(InjectedPad(vec![pad]));
            let mut k0 = DemKey::new(DemMode::Ot, &[0; 32]).unwrap();
            let mut k1 = k0.clone();
            h0[dem.encrypt_ot(&mut k0, &m0).unwrap().body[0] as usize] += 1;
            h1[dem.encrypt_ot(&mut k1, &m1).unwrap().body[0] as usize] += 1;
        }
        assert_eq!(h0, h1);
        assert!(h0.iter().all(|&c| c == 1));
    }

    #[test]
    fn identity_stub_leaks() {
        let dem = Dem::with_keystream(IdentityKeystream);
        let mut k = DemKey::new(DemMode::Ot, &[7; 32]).unwrap();
        assert_eq!(dem.encrypt_ot(&mut k, b"hi").unwrap().body, b"hi");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn roundtrip_both_modes(seed in any::<u64>(), m in proptest::collection::vec(any::<u8>(), 0..300)) {
            let mut r = rng(seed);
            let dem = Dem::new();
            for mode in [DemMode::Ot, DemMode::Otcca] {
                let mut k = key(mode, &mut r);
                let c = dem.encrypt(&mut k, &m).unwrap();
                prop_assert_eq!(c.body.len(), m.len());
                let back = DemCiphertext::from_bytes(mode, &c.to_bytes()).unwrap();
                prop_assert_eq!(dem.decrypt(&k, &back).unwrap(), Some(m.clone()));
            }
        }
    }

    #[test]
    fn large_roundtrip() {
        let mut r = rng(6);
        let mut m = vec![0u8; 1 << 20];
        r.fill_bytes(&mut m);
        let dem = Dem::new();
        let mut k = key(DemMode::Otcca, &mut r);
        let c = dem.encrypt_otcca(&mut k, &m).unwrap();
        assert_eq!(dem.decrypt_otcca(&k, &c).unwrap(), Some(m));
    }
}
