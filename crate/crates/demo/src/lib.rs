//! Browser bindings: parameter derivation, a hybrid round trip with optional
//! tampering, and the calibration games.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

use pkem::dem::DemMode;
use pkem::games::{self, Atk, Enumeration, GameConfig};
use pkem::hybrid::HybridScheme;
use pkem::ikem::{derive_params, derive_params_cca, Ikem, IkemParams, Knobs, Mode};
use pkem::source::SourceSpec;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Derives parameters for a binary symmetric source; returns a JSON summary.
#[wasm_bindgen]
pub fn derive(p: f64, q: f64, n: usize, mode: &str, eps: f64) -> Result<String, String> {
    let mode: Mode = mode.parse().map_err(err)?;
    let src = SourceSpec::bsc(p, q, n).map_err(err)?;
    let k = Knobs {
        eps: Some(eps),
        ..Knobs::default()
    };
    let d = derive_params(mode, &src, &k).map_err(err)?;
    Ok(json!({
        "nu": d.params.nu,
        "t": d.params.t,
        "ell": d.params.ell,
        "w": d.params.w,
        "r": d.params.r,
        "h_xy": d.h_xy,
        "hmin_xz": d.hmin_xz,
        "ell_indist": d.ell_indist,
        "ell_integrity": d.ell_integrity,
    })
    .to_string())
}

/// Encrypts `message` at n = 1200, t = 600, ν = 20, ℓ = 512 under a BSC
/// with crossover `p`, optionally flips one envelope bit, and decrypts.
#[wasm_bindgen]
pub fn round_trip(p: f64, message: &str, seed: u32, flip_bit: i32) -> Result<String, String> {
    let src = SourceSpec::bsc(p, 0.5, 1200).map_err(err)?;
    let k = Knobs {
        nu: Some(20.0),
        t: Some(600),
        w: Some(1200),
        ell: Some(512),
        ..Knobs::default()
    };
    let ikem = Ikem::new(derive_params_cca(&src, &k).map_err(err)?.params).map_err(err)?;
    let s = HybridScheme::new(ikem, DemMode::Otcca).map_err(err)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed as u64);
    let m = s.ikem().gen(&mut rng);
    let flips = m.sample.x.iter().zip(&m.sample.y).filter(|(a, b)| a != b).count();
    let c = s
        .encrypt(&m.sample.x, None, message.as_bytes(), &mut rng)
        .map_err(err)?;
    let mut wire = s.encode(&c).map_err(err)?;
    if flip_bit >= 0 {
        let b = flip_bit as usize % (wire.len() * 8);
        wire[b / 8] ^= 0x80 >> (b % 8);
    }
    let (status, text) = match s.decode(&wire) {
        Err(e) => ("malformed", e.to_string()),
        Ok(c) => match s.decrypt(&m.sample.y, None, &c).map_err(err)? {
            Some(pt) => ("ok", String::from_utf8_lossy(&pt).into_owned()),
            None => ("bottom", String::new()),
        },
    };
    Ok(json!({
        "x_y_differences": flips,
        "envelope_len": wire.len(),
        "envelope_head": hex::encode(&wire[..wire.len().min(48)]),
        "status": status,
        "plaintext": text,
    })
    .to_string())
}

/// Runs a named game on the 4-symbol toy instance and returns JSON lines.
#[wasm_bindgen]
pub fn run_game(name: &str, trials: u32, seed: u32) -> Result<String, String> {
    let src = SourceSpec::bsc(0.25, 0.5, 4).map_err(err)?;
    let ikem = Ikem::new(IkemParams::manual(Mode::Cca, src, 2, 1, 3.5)).map_err(err)?;
    let trials = trials.max(1) as u64;
    let seed = seed as u64;
    let reports = match name {
        "pkind-random" => {
            let cfg = GameConfig::new(Atk::Cea, trials, seed);
            vec![games::run_pkind(&ikem, &cfg, false, || games::RandomGuess).map_err(err)?]
        }
        "pkind-bayes" => {
            let en = Enumeration::new(&ikem).map_err(err)?;
            let mut cfg = GameConfig::new(Atk::Cca, trials, seed);
            cfg.q_d = 1;
            let exact = games::exact_distance(&ikem, 0).map_err(err)?;
            let mut r = games::run_pkind(&ikem, &cfg, false, || games::BayesPkind::new(&en))
                .map_err(err)?;
            r.bound = num_to_f64(&exact);
            vec![r]
        }
        "kint-brute" => {
            let en = Enumeration::new(&ikem).map_err(err)?;
            let mut cfg = GameConfig::new(Atk::Cca, trials, seed);
            cfg.q_e = 1;
            cfg.q_d = 1;
            vec![games::run_kint(&ikem, &cfg, || games::BruteForceForger { en: &en }).map_err(err)?]
        }
        "dem-stub" => {
            let dem = pkem::dem::Dem::with_keystream(pkem::dem::IdentityKeystream);
            let mut cfg = GameConfig::new(Atk::Ot, trials, seed);
            cfg.bound = Some(0.0);
            vec![games::run_dem_ind(&dem, DemMode::Ot, &cfg, || games::PlaintextMatch).map_err(err)?]
        }
        "dem-aes" => {
            let dem = pkem::dem::Dem::new();
            let mut cfg = GameConfig::new(Atk::Ot, trials, seed);
            cfg.bound = Some(0.0);
            vec![games::run_dem_ind(&dem, DemMode::Ot, &cfg, || games::PlaintextMatch).map_err(err)?]
        }
        other => return Err(format!("unknown game {other:?}")),
    };
    Ok(reports
        .iter()
        .map(|r| r.to_json_line())
        .collect::<Vec<_>>()
        .join("\n"))
}

fn num_to_f64(r: &num_rational::BigRational) -> Option<f64> {
    num_traits::ToPrimitive::to_f64(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_reports_fields() {
        let v: serde_json::Value =
            serde_json::from_str(&derive(0.01, 0.3, 20000, "cea", 1e-3).unwrap()).unwrap();
        assert!(v["ell"].as_u64().unwrap() > 0);
        assert!(derive(0.01, 0.3, 100, "nope", 1e-3).is_err());
    }

    #[test]
    fn round_trip_and_tamper() {
        let ok: serde_json::Value =
            serde_json::from_str(&round_trip(1e-5, "hello", 3, -1).unwrap()).unwrap();
        assert_eq!(ok["status"], "ok");
        assert_eq!(ok["plaintext"], "hello");
        let bad: serde_json::Value =
            serde_json::from_str(&round_trip(1e-5, "hello", 3, 200).unwrap()).unwrap();
        assert_ne!(bad["status"], "ok");
    }

    #[test]
    fn games_run() {
        let line = run_game("dem-stub", 50, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["estimate"], 1.0);
        assert!(run_game("pkind-bayes", 50, 1).is_ok());
        assert!(run_game("bogus", 1, 1).is_err());
    }
}
