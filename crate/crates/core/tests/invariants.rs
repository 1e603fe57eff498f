use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pkem::dem::{Dem, DemKey, DemMode};
use pkem::games::{self, Atk, GameConfig};
use pkem::hybrid::HybridScheme;
use pkem::ikem::{Ikem, IkemParams, Mode};
use pkem::source::SourceSpec;

fn instance(mode: Mode, ell: usize) -> Ikem {
    let src = SourceSpec::bsc(0.0, 0.5, 520).unwrap();
    Ikem::new(IkemParams::manual(mode, src, 8, ell, 0.0)).unwrap()
}

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Cea), Just(Mode::Cca), Just(Mode::Baseline)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ikem_wire_round_trip(mode in mode_strategy(), seed in any::<u64>()) {
        let ikem = instance(mode, 64);
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let m = ikem.gen(&mut r);
        let (k, c) = ikem.encap(&m.sample.x, m.public_seed.as_ref(), &mut r).unwrap();
        let wire = ikem.encode(&c).unwrap();
        prop_assert_eq!(wire.len(), ikem.encoded_len());
        let back = ikem.decode(&wire).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(ikem.decap(&m.sample.y, &back, m.public_seed.as_ref()).unwrap(), Some(k));
    }

    #[test]
    fn hybrid_round_trip(
        cca in any::<bool>(),
        msg in prop::collection::vec(any::<u8>(), 0..2000),
        seed in any::<u64>(),
    ) {
        let (mode, dem) = if cca { (Mode::Cca, DemMode::Otcca) } else { (Mode::Cea, DemMode::Ot) };
        let s = HybridScheme::new(instance(mode, dem.key_bits()), dem).unwrap();
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let m = s.ikem().gen(&mut r);
        let c = s.encrypt(&m.sample.x, m.public_seed.as_ref(), &msg, &mut r).unwrap();
        let wire = s.encode(&c).unwrap();
        prop_assert_eq!(wire.len(), s.envelope_len(msg.len()));
        let back = s.decode(&wire).unwrap();
        prop_assert_eq!(s.decrypt(&m.sample.y, m.public_seed.as_ref(), &back).unwrap(), Some(msg));
    }

    #[test]
    fn otcca_rejects_any_byte_flip(
        msg in prop::collection::vec(any::<u8>(), 1..200),
        key in prop::collection::vec(any::<u8>(), 64),
        pos in any::<prop::sample::Index>(),
        mask in 1u8..,
    ) {
        let dem = Dem::new();
        let mut k = DemKey::new(DemMode::Otcca, &key).unwrap();
        let c = dem.encrypt(&mut k, &msg).unwrap();
        let mut bytes = c.to_bytes();
        let i = pos.index(bytes.len());
        bytes[i] ^= mask;
        let t = pkem::dem::DemCiphertext::from_bytes(DemMode::Otcca, &bytes).unwrap();
        prop_assert_eq!(dem.decrypt(&k, &t).unwrap(), None);
    }

    #[test]
    fn reports_stay_in_unit_interval(seed in any::<u64>()) {
        let src = SourceSpec::bsc(0.25, 0.5, 4).unwrap();
        let ikem = Ikem::new(IkemParams::manual(Mode::Cca, src, 2, 1, 3.5)).unwrap();
        let cfg = GameConfig::new(Atk::Ot, 50, seed);
        let r = games::run_pkind(&ikem, &cfg, false, || games::RandomGuess).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.estimate));
        prop_assert!((r.halfwidth - games::halfwidth(50)).abs() < 1e-15);
    }
}

#[test]
fn game_reports_are_deterministic() {
    let src = SourceSpec::bsc(0.25, 0.25, 4).unwrap();
    let ikem = Ikem::new(IkemParams::manual(Mode::Cca, src, 2, 1, 3.5)).unwrap();
    let en = games::Enumeration::new(&ikem).unwrap();
    let mut cfg = GameConfig::new(Atk::Cca, 300, 42);
    cfg.q_d = 1;
    let a = games::run_pkind(&ikem, &cfg, false, || games::BayesPkind::new(&en)).unwrap();
    let b = games::run_pkind(&ikem, &cfg, false, || games::BayesPkind::new(&en)).unwrap();
    assert_eq!(a.to_json_line(), b.to_json_line());
}

#[test]
fn source_json_forms_agree() {
    let a = SourceSpec::from_json(r#"{"bsc":{"p":"1/4","q":"1/2","n":4}}"#).unwrap();
    let b = SourceSpec::from_json(&a.to_json()).unwrap();
    assert_eq!(a, b);
    assert!(a.is_exact_mode());
}
