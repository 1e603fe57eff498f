use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;
use thiserror::Error;

use pkem::combiner::{prf_it_field, Combiner, Core, Kem, TestDoubleKem};
use pkem::dem::{Dem, DemMode, IdentityKeystream, Keystream};
use pkem::games::{self, AdvantageReport, Atk, Enumeration, GameConfig, PrfUnderTest};
use pkem::gf2::{Fe, FieldCtx};
use pkem::hybrid::HybridScheme;
use pkem::ikem::{derive_params, Ikem, IkemParams, Knobs, Mode};
use pkem::source::SourceSpec;
use pkem::{CombinerError, GameError, HybridError, IkemError};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("decryption failed")]
    Bottom,
    #[error("declared bound exceeded")]
    Exceeded,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Bottom => 3,
            CliError::Exceeded => 4,
        }
    }
}

impl From<IkemError> for CliError {
    fn from(e: IkemError) -> Self {
        match e {
            IkemError::Infeasible(m) => CliError::Infeasible(m),
            other => CliError::Usage(other.to_string()),
        }
    }
}

macro_rules! usage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Usage(e.to_string())
            }
        }
    )*};
}
usage_from!(HybridError, CombinerError, GameError, pkem::GfError, serde_json::Error);

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "pkem", version, about = "Key encapsulation from correlated randomness")]
struct Cli {
    /// RNG seed as hex; omitted means OS entropy.
    #[arg(long, global = true, value_parser = parse_seed)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Derive instance parameters from a source description.
    Params(ParamsArgs),
    /// Sample x, y, z (and the public seed in CEA mode) into a directory.
    Sample(SampleArgs),
    /// Encapsulate with Alice's sample.
    Encap(EncapArgs),
    /// Decapsulate with Bob's sample.
    Decap(DecapArgs),
    /// Encrypt a file under the hybrid scheme.
    HeEncrypt(HeArgs),
    /// Decrypt a hybrid envelope.
    HeDecrypt(HeArgs),
    /// Encapsulate and decapsulate through a KEM combiner.
    Combine(CombineArgs),
    /// Run a security game and stream JSON-line reports.
    Game(GameArgs),
}

#[derive(Args)]
struct ParamsArgs {
    /// Source JSON (`{"bsc": {...}}` or a `pxyz` table).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "cca")]
    mode: ModeArg,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    q_e: Option<u32>,
    #[arg(long)]
    q_d: Option<u32>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    ell: Option<usize>,
    /// Where to write the instance JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Instance JSON written by `params`.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for x.bin, y.bin, z.bin and public.bin.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncapArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    public: Option<PathBuf>,
    /// Ciphertext output.
    #[arg(long)]
    out: PathBuf,
    /// Key output; printed as hex when omitted.
    #[arg(long)]
    key_out: Option<PathBuf>,
}

#[derive(Args)]
struct DecapArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    public: Option<PathBuf>,
    #[arg(long)]
    ciphertext: PathBuf,
    /// Key output; printed as hex when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Alice's sample (encrypt) or Bob's sample (decrypt).
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    public: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CombineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    public: Option<PathBuf>,
    #[arg(long, default_value = "xor")]
    core: CoreArg,
    /// Output key length for the PtX core.
    #[arg(long)]
    ell: Option<usize>,
    /// Use the all-zero-key KEM stand-in.
    #[arg(long)]
    broken_kem: bool,
    /// Combined ciphertext output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GameArgs {
    #[arg(long, default_value = "calibration")]
    game: GameArg,
    /// ot, cea, cca (pkind, he) or ot, otcca (dem).
    #[arg(long)]
    atk: Option<String>,
    /// Adversary name; each game lists its own.
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Instance JSON; defaults to a 4-symbol toy instance (520-symbol for he).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mode of the default toy instance.
    #[arg(long, default_value = "cca")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    q_e: u32,
    #[arg(long, default_value_t = 1)]
    q_d: u32,
    /// Replace AES-CTR with the identity map in the DEM game.
    #[arg(long)]
    stub: bool,
    /// Override the declared bound.
    #[arg(long)]
    bound: Option<f64>,
    #[arg(long, default_value = "it")]
    prf: PrfArg,
    /// PRF field width for the `it` family.
    #[arg(long, default_value_t = 3)]
    width: usize,
    /// Number of PRF queries.
    #[arg(long)]
    queries: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cea,
    Cca,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Cea => Mode::Cea,
            ModeArg::Cca => Mode::Cca,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CoreArg {
    Xor,
    Ptx,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GameArg {
    Calibration,
    Pkind,
    Kint,
    Dem,
    Pri,
    He,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrfArg {
    It,
    Comp,
}

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let h = s.strip_prefix("0x").unwrap_or(s);
    if h.is_empty() || h.len() > 16 {
        return Err("seed must be 1 to 16 hex digits".into());
    }
    u64::from_str_radix(h, 16).map_err(|e| e.to_string())
}

fn rng_for(seed: Option<u64>) -> ChaCha20Rng {
    seed.map_or_else(ChaCha20Rng::from_entropy, ChaCha20Rng::seed_from_u64)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<Ikem> {
    let params: IkemParams = serde_json::from_slice(&read(path)?)?;
    Ok(Ikem::new(params)?)
}

fn load_public(ikem: &Ikem, path: Option<&PathBuf>) -> Result<Option<Fe>> {
    match (ikem.mode(), path) {
        (Mode::Cea, Some(p)) => Ok(Some(ikem.input_field().from_bytes_be(&read(p)?)?)),
        (Mode::Cea, None) => Err(CliError::Usage("CEA mode needs --public".into())),
        (_, _) => Ok(None),
    }
}

fn load_sample(ikem: &Ikem, path: &Path) -> Result<Vec<u8>> {
    let s = read(path)?;
    let src = &ikem.params().source;
    if s.len() != src.n() {
        return Err(CliError::Usage(format!(
            "{}: {} symbols, instance expects {}",
            path.display(),
            s.len(),
            src.n()
        )));
    }
    Ok(s)
}

fn dem_mode_for(mode: Mode) -> DemMode {
    match mode {
        Mode::Cca => DemMode::Otcca,
        Mode::Cea | Mode::Baseline => DemMode::Ot,
    }
}

fn cmd_params(a: &ParamsArgs) -> Result<()> {
    let source = SourceSpec::from_json(
        std::str::from_utf8(&read(&a.config)?).map_err(|e| CliError::Usage(e.to_string()))?,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let d = Knobs::default();
    let knobs = Knobs {
        eps: a.eps,
        sigma: a.sigma.unwrap_or(d.sigma),
        delta: a.delta.unwrap_or(d.delta),
        q_e: a.q_e.unwrap_or(d.q_e),
        q_d: a.q_d.unwrap_or(d.q_d),
        nu: a.nu,
        t: a.t,
        w: a.w,
        ell: a.ell,
        recon_cap: d.recon_cap,
    };
    let mode: Mode = a.mode.into();
    let der = derive_params(mode, &source, &knobs)?;
    let p = &der.params;
    let summary = json!({
        "feasible": true,
        "mode": mode,
        "n": p.source.n(),
        "nu": p.nu,
        "t": p.t,
        "ell": p.ell,
        "w": p.w,
        "r": p.r,
        "h_xy": der.h_xy,
        "hmin_xz": der.hmin_xz,
        "ell_indist": der.ell_indist,
        "ell_integrity": der.ell_integrity,
        "delta_at_ell": der.delta_at_ell,
    });
    println!("{summary}");
    if let Some(out) = &a.out {
        write(out, serde_json::to_string_pretty(p)?.as_bytes())?;
    }
    Ok(())
}

fn cmd_sample(a: &SampleArgs, rng: &mut ChaCha20Rng) -> Result<()> {
    let ikem = load_instance(&a.config)?;
    let m = ikem.gen(rng);
    fs::create_dir_all(&a.out).map_err(|e| CliError::Usage(e.to_string()))?;
    write(&a.out.join("x.bin"), &m.sample.x)?;
    write(&a.out.join("y.bin"), &m.sample.y)?;
    write(&a.out.join("z.bin"), &m.sample.z)?;
    if let Some(s) = &m.public_seed {
        write(&a.out.join("public.bin"), &s.to_bytes_be())?;
    }
    Ok(())
}

fn emit_key(key: &[u8], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => write(p, key),
        None => {
            println!("{}", json!({ "key": hex::encode(key) }));
            Ok(())
        }
    }
}

fn cmd_encap(a: &EncapArgs, rng: &mut ChaCha20Rng) -> Result<()> {
    let ikem = load_instance(&a.config)?;
    let public = load_public(&ikem, a.public.as_ref())?;
    let x = load_sample(&ikem, &a.x)?;
    let (k, c) = ikem.encap(&x, public.as_ref(), rng)?;
    write(&a.out, &ikem.encode(&c)?)?;
    emit_key(&k.to_bytes(), a.key_out.as_ref())
}

fn cmd_decap(a: &DecapArgs) -> Result<()> {
    let ikem = load_instance(&a.config)?;
    let public = load_public(&ikem, a.public.as_ref())?;
    let y = load_sample(&ikem, &a.y)?;
    let c = ikem.decode(&read(&a.ciphertext)?)?;
    match ikem.decap(&y, &c, public.as_ref())? {
        Some(k) => emit_key(&k.to_bytes(), a.out.as_ref()),
        None => Err(CliError::Bottom),
    }
}

fn scheme(a: &HeArgs) -> Result<(HybridScheme, Option<Fe>, Vec<u8>)> {
    let ikem = load_instance(&a.config)?;
    let public = load_public(&ikem, a.public.as_ref())?;
    let sample = load_sample(&ikem, &a.sample)?;
    let dm = dem_mode_for(ikem.mode());
    Ok((HybridScheme::new(ikem, dm)?, public, sample))
}

fn cmd_he_encrypt(a: &HeArgs, rng: &mut ChaCha20Rng) -> Result<()> {
    let (s, public, x) = scheme(a)?;
    let m = read(&a.input)?;
    let c = s.encrypt(&x, public.as_ref(), &m, rng)?;
    write(&a.out, &s.encode(&c)?)
}

fn cmd_he_decrypt(a: &HeArgs) -> Result<()> {
    let (s, public, y) = scheme(a)?;
    let c = s.decode(&read(&a.input)?)?;
    match s.decrypt(&y, public.as_ref(), &c)? {
        Some(m) => write(&a.out, &m),
        None => Err(CliError::Bottom),
    }
}

fn cmd_combine(a: &CombineArgs, rng: &mut ChaCha20Rng) -> Result<()> {
    let ikem = load_instance(&a.config)?;
    let public = load_public(&ikem, a.public.as_ref())?;
    let x = load_sample(&ikem, &a.x)?;
    let y = load_sample(&ikem, &a.y)?;
    let (core, kem_bits, ell) = match a.core {
        CoreArg::Xor => {
            let l = ikem.params().ell;
            (Core::Xor, l, a.ell.unwrap_or(l))
        }
        CoreArg::Ptx => {
            let m = prf_it_field(16)?.m();
            (Core::Ptx, 256, a.ell.unwrap_or(m))
        }
    };
    let kem = if a.broken_kem {
        TestDoubleKem::broken(kem_bits)
    } else {
        TestDoubleKem::new(kem_bits)
    };
    let (pk, sk) = kem.gen(rng);
    let comb = Combiner::new(ikem, kem, core, ell)?;
    let (k, c) = comb.encap(&x, public.as_ref(), &pk, rng)?;
    let got = comb.decap(&y, public.as_ref(), &sk, &c)?;
    if let Some(out) = &a.out {
        write(out, &comb.encode(&c)?)?;
    }
    println!(
        "{}",
        json!({
            "core": match core { Core::Xor => "xor", Core::Ptx => "ptx" },
            "ell": ell,
            "key": k.to_hex(),
            "agreed": got.as_ref() == Some(&k),
            "f1_calls": comb.f1_calls(),
        })
    );
    if got.is_none() {
        return Err(CliError::Bottom);
    }
    Ok(())
}

fn toy_instance(mode: Mode) -> Result<Ikem> {
    let src = SourceSpec::bsc(0.25, 0.5, 4).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Ikem::new(IkemParams::manual(mode, src, 2, 1, 3.5))?)
}

fn atk_of(s: Option<&str>, default: Atk) -> Result<Atk> {
    match s {
        None => Ok(default),
        Some("ot") => Ok(Atk::Ot),
        Some("cea") => Ok(Atk::Cea),
        Some("cca") => Ok(Atk::Cca),
        Some(o) => Err(CliError::Usage(format!("unknown attack {o:?}"))),
    }
}

fn bad_adversary(name: &str) -> CliError {
    CliError::Usage(format!("unknown adversary {name:?}"))
}

fn game_pkind(a: &GameArgs, ikem: &Ikem, seed: u64) -> Result<AdvantageReport> {
    let atk = atk_of(a.atk.as_deref(), Atk::Cea)?;
    let mut cfg = GameConfig::new(atk, a.trials, seed);
    cfg.q_e = a.q_e;
    cfg.q_d = a.q_d;
    cfg.bound = match (a.bound, atk) {
        (Some(b), _) => Some(b),
        (None, Atk::Cca) => None,
        (None, _) => {
            let p = ikem.params();
            let g = p.source.guess_prob_given_z();
            let e = games::uniformity_exponent(p.mode, cfg.q_e, p.ell, p.t) as f64;
            Some((0.5 * (e + p.source.n() as f64 * g.log2()).exp2().sqrt()).min(1.0))
        }
    };
    Ok(match a.adversary.as_deref().unwrap_or("bayes") {
        "random" => games::run_pkind(ikem, &cfg, false, || games::RandomGuess)?,
        "bayes" => {
            let en = Enumeration::new(ikem)?;
            games::run_pkind(ikem, &cfg, false, || games::BayesPkind::new(&en))?
        }
        o => return Err(bad_adversary(o)),
    })
}

fn game_kint(a: &GameArgs, ikem: &Ikem, seed: u64) -> Result<AdvantageReport> {
    let mut cfg = GameConfig::new(Atk::Cca, a.trials, seed);
    cfg.q_e = 1;
    cfg.q_d = a.q_d;
    cfg.bound = a.bound.or(Some(ikem.params().delta.min(1.0)));
    Ok(match a.adversary.as_deref().unwrap_or("random") {
        "random" => games::run_kint(ikem, &cfg, || games::RandomForger)?,
        "replay" => games::run_kint(ikem, &cfg, || games::ReplayForger)?,
        "brute" => {
            let en = Enumeration::new(ikem)?;
            games::run_kint(ikem, &cfg, || games::BruteForceForger { en: &en })?
        }
        o => return Err(bad_adversary(o)),
    })
}

fn dem_with<K: Keystream>(
    dem: &Dem<K>,
    mode: DemMode,
    adv: &str,
    cfg: &GameConfig,
) -> Result<AdvantageReport> {
    Ok(match adv {
        "random" => games::run_dem_ind(dem, mode, cfg, || games::DemRandomGuess)?,
        "match" => games::run_dem_ind(dem, mode, cfg, || games::PlaintextMatch)?,
        "tamper" => games::run_dem_ind(dem, mode, cfg, || games::TamperQuery)?,
        o => return Err(bad_adversary(o)),
    })
}

fn game_dem(a: &GameArgs, seed: u64) -> Result<AdvantageReport> {
    let mode = match a.atk.as_deref().unwrap_or("ot") {
        "ot" => DemMode::Ot,
        "otcca" => DemMode::Otcca,
        o => return Err(CliError::Usage(format!("unknown DEM attack {o:?}"))),
    };
    let mut cfg = GameConfig::new(Atk::Ot, a.trials, seed);
    cfg.q_d = a.q_d;
    cfg.bound = Some(a.bound.unwrap_or(0.0));
    let adv = a.adversary.as_deref().unwrap_or("match");
    if a.stub {
        dem_with(&Dem::with_keystream(IdentityKeystream), mode, adv, &cfg)
    } else {
        dem_with(&Dem::new(), mode, adv, &cfg)
    }
}

fn game_he(a: &GameArgs, seed: u64) -> Result<AdvantageReport> {
    let ikem = match &a.config {
        Some(p) => load_instance(p)?,
        None => {
            let mode: Mode = a.mode.into();
            let src = SourceSpec::bsc(0.0, 0.5, 520).map_err(|e| CliError::Usage(e.to_string()))?;
            Ikem::new(IkemParams::manual(mode, src, 8, dem_mode_for(mode).key_bits(), 0.0))?
        }
    };
    let dm = dem_mode_for(ikem.mode());
    let default = if dm == DemMode::Otcca { Atk::Cca } else { Atk::Cea };
    let mut cfg = GameConfig::new(atk_of(a.atk.as_deref(), default)?, a.trials, seed);
    cfg.q_e = a.q_e;
    cfg.q_d = a.q_d;
    cfg.bound = a.bound;
    let s = HybridScheme::new(ikem, dm)?;
    Ok(match a.adversary.as_deref().unwrap_or("random") {
        "random" => games::run_he_ind(&s, &cfg, || games::HeRandomGuess)?,
        "tamper" => games::run_he_ind(&s, &cfg, || games::HeTamperQuery)?,
        o => return Err(bad_adversary(o)),
    })
}

fn game_pri(a: &GameArgs, seed: u64) -> Result<AdvantageReport> {
    let mut cfg = GameConfig::new(Atk::Ot, a.trials, seed);
    cfg.q_d = a.q_d;
    let q = a.queries.unwrap_or(a.q_d + 1);
    let adv = a.adversary.as_deref().unwrap_or("bayes");
    match a.prf {
        PrfArg::It => {
            let field = FieldCtx::new(a.width)?;
            let prf = PrfUnderTest::It {
                field: field.clone(),
                q_d: a.q_d,
                ell: a.width,
            };
            cfg.bound = a.bound.or((q <= a.q_d + 2).then_some(0.0));
            Ok(match adv {
                "random" => games::run_pri(&prf, q, &cfg, || games::PriRandomGuess)?,
                "bayes" => games::run_pri(&prf, q, &cfg, || games::PriBayes {
                    field: field.clone(),
                    q_d: a.q_d,
                })?,
                o => return Err(bad_adversary(o)),
            })
        }
        PrfArg::Comp => {
            cfg.bound = a.bound;
            let prf = PrfUnderTest::Comp { ell: 128 };
            match adv {
                "random" => Ok(games::run_pri(&prf, q, &cfg, || games::PriRandomGuess)?),
                o => Err(bad_adversary(o)),
            }
        }
    }
}

fn game_calibration(a: &GameArgs, seed: u64) -> Result<Vec<AdvantageReport>> {
    let ikem = toy_instance(Mode::Cca)?;
    let mut out = Vec::new();
    let mut cfg = GameConfig::new(Atk::Cca, a.trials, seed);
    cfg.q_d = 1;
    cfg.bound = Some(0.0);
    out.push(games::run_pkind(&ikem, &cfg, false, || games::RandomGuess)?);
    let mut kcfg = GameConfig::new(Atk::Cca, a.trials, seed);
    kcfg.q_e = 1;
    kcfg.bound = Some(0.0);
    out.push(games::run_kint(&ikem, &kcfg, || games::ReplayForger)?);
    let dem = Dem::new();
    let mut dcfg = GameConfig::new(Atk::Ot, a.trials, seed);
    dcfg.bound = Some(0.0);
    out.push(games::run_dem_ind(&dem, DemMode::Ot, &dcfg, || games::PlaintextMatch)?);
    dcfg.q_d = 1;
    out.push(games::run_dem_ind(&dem, DemMode::Otcca, &dcfg, || games::TamperQuery)?);
    let field = FieldCtx::new(3)?;
    let prf = PrfUnderTest::It {
        field: field.clone(),
        q_d: 1,
        ell: 3,
    };
    out.push(games::run_pri(&prf, 2, &dcfg, || games::PriBayes {
        field: field.clone(),
        q_d: 1,
    })?);
    Ok(out)
}

fn cmd_game(a: &GameArgs, seed: Option<u64>) -> Result<()> {
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let seed = seed.unwrap_or_else(|| ChaCha20Rng::from_entropy().next_u64());
    let instance = || match &a.config {
        Some(p) => load_instance(p),
        None => toy_instance(a.mode.into()),
    };
    let reports = match a.game {
        GameArg::Calibration => game_calibration(a, seed)?,
        GameArg::Pkind => vec![game_pkind(a, &instance()?, seed)?],
        GameArg::Kint => vec![game_kint(a, &instance()?, seed)?],
        GameArg::Dem => vec![game_dem(a, seed)?],
        GameArg::Pri => vec![game_pri(a, seed)?],
        GameArg::He => vec![game_he(a, seed)?],
    };
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    match &a.out {
        Some(p) => write(p, text.as_bytes())?,
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    if reports.iter().any(AdvantageReport::exceeded) {
        return Err(CliError::Exceeded);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut rng = rng_for(cli.seed);
    match &cli.cmd {
        Cmd::Params(a) => cmd_params(a),
        Cmd::Sample(a) => cmd_sample(a, &mut rng),
        Cmd::Encap(a) => cmd_encap(a, &mut rng),
        Cmd::Decap(a) => cmd_decap(a),
        Cmd::HeEncrypt(a) => cmd_he_encrypt(a, &mut rng),
        Cmd::HeDecrypt(a) => cmd_he_decrypt(a),
        Cmd::Combine(a) => cmd_combine(a, &mut rng),
        Cmd::Game(a) => cmd_game(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pkem: {e}");
            ExitCode::from(e.code())
        }
    }
}
