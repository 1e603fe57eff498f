//! KEM/DEM composition and the `HENV` envelope.

use rand::RngCore;

use crate::dem::{Dem, DemCiphertext, DemKey, DemMode};
use crate::error::HybridError;
use crate::gf2::Fe;
use crate::ikem::{Ikem, IkemCiphertext, Mode};

const MAGIC: &[u8; 4] = b"HENV";
const VERSION: u8 = 1;
const HEADER: usize = 4 + 1 + 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HybridCiphertext {
    pub c1: IkemCiphertext,
    pub c2: DemCiphertext,
}

/// An iKEM paired with a DEM of matching security notion and key length.
#[derive(Clone, Debug)]
pub struct HybridScheme {
    ikem: Ikem,
    dem_mode: DemMode,
    dem: Dem,
}

/// Allowed (iKEM mode, DEM mode) pairs.
pub fn compatible(kem: Mode, dem: DemMode) -> bool {
    matches!(
        (kem, dem),
        (Mode::Cea, DemMode::Ot) | (Mode::Baseline, DemMode::Ot) | (Mode::Cca, DemMode::Otcca)
    )
}

impl HybridScheme {
    pub fn new(ikem: Ikem, dem_mode: DemMode) -> Result<Self, HybridError> {
        let mode = ikem.mode();
        if !compatible(mode, dem_mode) {
            return Err(HybridError::Incompatible(format!(
                "{mode:?} iKEM cannot be paired with a {dem_mode:?} DEM"
            )));
        }
        let ell = ikem.params().ell;
        if ell != dem_mode.key_bits() {
            return Err(HybridError::Incompatible(format!(
                "iKEM key length {ell} differs from dem.Len {}",
                dem_mode.key_bits()
            )));
        }
        Ok(HybridScheme {
            ikem,
            dem_mode,
            dem: Dem::new(),
        })
    }

    pub fn ikem(&self) -> &Ikem {
        &self.ikem
    }

    pub fn dem_mode(&self) -> DemMode {
        self.dem_mode
    }

    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        x: &[u8],
        public_seed: Option<&Fe>,
        m: &[u8],
        rng: &mut R,
    ) -> Result<HybridCiphertext, HybridError> {
        let (k, c1) = self.ikem.encap(x, public_seed, rng)?;
        let mut key = DemKey::from_bits(self.dem_mode, k.bits())?;
        let c2 = self.dem.encrypt(&mut key, m)?;
        Ok(HybridCiphertext { c1, c2 })
    }

    /// `None` is ⊥ (decapsulation or MAC failure).
    pub fn decrypt(
        &self,
        y: &[u8],
        public_seed: Option<&Fe>,
        c: &HybridCiphertext,
    ) -> Result<Option<Vec<u8>>, HybridError> {
        let Some(k) = self.ikem.decap(y, &c.c1, public_seed)? else {
            return Ok(None);
        };
        let key = DemKey::from_bits(self.dem_mode, k.bits())?;
        Ok(self.dem.decrypt(&key, &c.c2)?)
    }

    /// `|c1| + |m| + tag_len`.
    pub fn ciphertext_len(&self, msg_len: usize) -> usize {
        self.ikem.encoded_len() + msg_len + self.dem_mode.tag_len()
    }

    pub fn envelope_len(&self, msg_len: usize) -> usize {
        HEADER + self.ciphertext_len(msg_len)
    }

    pub fn encode(&self, c: &HybridCiphertext) -> Result<Vec<u8>, HybridError> {
        let c1 = self.ikem.encode(&c.c1)?;
        let mut out = Vec::with_capacity(HEADER + c1.len() + c.c2.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(c1.len() as u32).to_be_bytes());
        out.extend(c1);
        out.extend(c.c2.to_bytes());
        Ok(out)
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<HybridCiphertext, HybridError> {
        let bad = |m: String| HybridError::Malformed(m);
        if bytes.len() < HEADER {
            return Err(bad("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(bad(format!("unsupported version {}", bytes[4])));
        }
        let c1_len = u32::from_be_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
        if c1_len != self.ikem.encoded_len() {
            return Err(bad(format!(
                "c1 length {c1_len}, instance expects {}",
                self.ikem.encoded_len()
            )));
        }
        let rest = &bytes[HEADER..];
        if rest.len() < c1_len + self.dem_mode.tag_len() {
            return Err(bad("truncated body".into()));
        }
        let c1 = self
            .ikem
            .decode(&rest[..c1_len])
            .map_err(|e| bad(e.to_string()))?;
        let c2 = DemCiphertext::from_bytes(self.dem_mode, &rest[c1_len..])
            .map_err(|e| bad(e.to_string()))?;
        Ok(HybridCiphertext { c1, c2 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ikem::IkemParams;
    use crate::source::SourceSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn scheme(mode: Mode, dem: DemMode, n: usize, t: usize) -> HybridScheme {
        let src = SourceSpec::bsc(0.0, 0.5, n).unwrap();
        let p = IkemParams::manual(mode, src, t, dem.key_bits(), 0.0);
        HybridScheme::new(Ikem::new(p).unwrap(), dem).unwrap()
    }

    #[test]
    fn compatibility_matrix() {
        let src = SourceSpec::bsc(0.0, 0.5, 600).unwrap();
        let cea = Ikem::new(IkemParams::manual(Mode::Cea, src.clone(), 8, 512, 0.0)).unwrap();
        assert!(matches!(
            HybridScheme::new(cea, DemMode::Otcca),
            Err(HybridError::Incompatible(_))
        ));
        let cca = Ikem::new(IkemParams::manual(Mode::Cca, src.clone(), 8, 256, 0.0)).unwrap();
        assert!(HybridScheme::new(cca.clone(), DemMode::Ot).is_err());
        assert!(HybridScheme::new(cca, DemMode::Otcca).is_err(), "ℓ ≠ dem.Len");
        assert!(compatible(Mode::Baseline, DemMode::Ot));
    }

    #[test]
    fn roundtrip_and_lengths() {
        let mut r = ChaCha20Rng::seed_from_u64(1);
        for (mode, dem) in [
            (Mode::Cea, DemMode::Ot),
            (Mode::Baseline, DemMode::Ot),
            (Mode::Cca, DemMode::Otcca),
        ] {
            let s = scheme(mode, dem, 520, 8);
            let m = s.ikem().gen(&mut r);
            for len in [0usize, 1, 64, 1000] {
                let msg: Vec<u8> = (0..len).map(|_| r.gen()).collect();
                let c = s.encrypt(&m.sample.x, m.public_seed.as_ref(), &msg, &mut r).unwrap();
                let wire = s.encode(&c).unwrap();
                assert_eq!(wire.len(), s.envelope_len(len));
                assert_eq!(
                    s.ikem().encoded_len() + c.c2.len(),
                    s.ciphertext_len(len)
                );
                let back = s.decode(&wire).unwrap();
                assert_eq!(back, c);
                let got = s.decrypt(&m.sample.y, m.public_seed.as_ref(), &back).unwrap();
                assert_eq!(got, Some(msg));
            }
        }
    }

    #[test]
    fn malformed_is_not_bottom() {
        let mut r = ChaCha20Rng::seed_from_u64(2);
        let s = scheme(Mode::Cca, DemMode::Otcca, 520, 8);
        let m = s.ikem().gen(&mut r);
        let c = s.encrypt(&m.sample.x, None, b"hello", &mut r).unwrap();
        let wire = s.encode(&c).unwrap();
        for cut in [0, 3, 8, 20, wire.len() - 5 - 16] {
            assert!(matches!(s.decode(&wire[..cut]), Err(HybridError::Malformed(_))));
        }
        let mut w = wire.clone();
        let last = w.len() - 1;
        w[last] ^= 1;
        let t = s.decode(&w).unwrap();
        assert_eq!(s.decrypt(&m.sample.y, None, &t).unwrap(), None);
    }
}
