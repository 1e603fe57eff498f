//! Security games with budgeted oracles, Monte-Carlo advantage estimation,
//! exact Bayes adversaries and exhaustive small-instance analyzers.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::combiner::ItPrfKey;
use crate::dem::{Dem, DemCiphertext, DemKey, DemMode, Keystream};
use crate::error::GameError;
use crate::gf2::{BitString, Fe, Field};
use crate::hybrid::{HybridCiphertext, HybridScheme};
use crate::ikem::{Ikem, IkemCiphertext, IkemKey, Materials, Mode};
use crate::source::{all_strings, string_index, symbols_to_bits, Symbols};
use crate::uhash::{twise_poly, AffineSeed, CcaSeed, CcaHash, PaddedSeedVector};

/// Default cap on exhaustive enumeration work.
pub const ENUM_CAP: u128 = 1 << 34;

/// Hoeffding half-width at 99% confidence for one arm of `n` trials.
pub fn halfwidth(n: u64) -> f64 {
    ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt()
}

fn arm_rng(seed: u64, arm: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(arm);
    r
}

/// One line of a game report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageReport {
    pub game: String,
    pub atk: String,
    pub estimate: f64,
    pub halfwidth: f64,
    pub bound: Option<f64>,
    pub n_trials: u64,
}

impl AdvantageReport {
    fn two_arm(game: &str, atk: &str, ones: [u64; 2], n: u64, bound: Option<f64>) -> Self {
        let p0 = ones[0] as f64 / n as f64;
        let p1 = ones[1] as f64 / n as f64;
        AdvantageReport {
            game: game.into(),
            atk: atk.into(),
            estimate: (p0 - p1).abs(),
            halfwidth: halfwidth(n),
            bound,
            n_trials: n,
        }
    }

    /// True when the estimate exceeds the bound by more than both arms' slack.
    pub fn exceeded(&self) -> bool {
        self.bound
            .is_some_and(|b| self.estimate > b + 2.0 * self.halfwidth)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Atk {
    Ot,
    Cea,
    Cca,
}

impl Atk {
    pub fn name(self) -> &'static str {
        match self {
            Atk::Ot => "ot",
            Atk::Cea => "cea",
            Atk::Cca => "cca",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub atk: Atk,
    pub trials: u64,
    pub q_e: u32,
    pub q_d: u32,
    pub seed: u64,
    /// Declared bound the estimate is compared against.
    pub bound: Option<f64>,
}

impl GameConfig {
    pub fn new(atk: Atk, trials: u64, seed: u64) -> Self {
        GameConfig {
            atk,
            trials,
            q_e: 0,
            q_d: 0,
            seed,
            bound: None,
        }
    }

    fn check(&self) -> Result<(), GameError> {
        if self.trials == 0 {
            return Err(GameError::Invalid("trials must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of small instances
// ---------------------------------------------------------------------------

/// All strings and exact n-fold weights of a small exact-mode source,
/// with every reconciliation set precomputed.
#[derive(Debug)]
pub struct Enumeration {
    pub xs: Vec<Symbols>,
    pub ys: Vec<Symbols>,
    pub zs: Vec<Symbols>,
    xbits: Vec<BitString>,
    w: Vec<u128>,
    total: u128,
    recon: Vec<Vec<Symbols>>,
    alphabet: [usize; 3],
}

impl Enumeration {
    pub fn new(ikem: &Ikem) -> Result<Self, GameError> {
        let s = &ikem.params().source;
        let [ax, ay, az] = s.alphabet();
        let n = s.n();
        let size = (ax * ay * az) as u128;
        if size.checked_pow(n as u32).is_none_or(|v| v > 1 << 22) {
            return Err(GameError::Invalid("source too large to enumerate".into()));
        }
        let e = s
            .exact()
            .ok_or_else(|| GameError::Invalid("exact source weights required".into()))?;
        let xs: Vec<Symbols> = all_strings(ax, n).collect();
        let ys: Vec<Symbols> = all_strings(ay, n).collect();
        let zs: Vec<Symbols> = all_strings(az, n).collect();
        let mut w = vec![0u128; xs.len() * ys.len() * zs.len()];
        for (xi, x) in xs.iter().enumerate() {
            for (yi, y) in ys.iter().enumerate() {
                for (zi, z) in zs.iter().enumerate() {
                    let mut acc = 1u128;
                    for i in 0..n {
                        acc *= s.weight(x[i] as usize, y[i] as usize, z[i] as usize).unwrap_or(0)
                            as u128;
                    }
                    w[(xi * ys.len() + yi) * zs.len() + zi] = acc;
                }
            }
        }
        let total = (e.denom as u128).pow(n as u32);
        let recon = ys.iter().map(|y| ikem.recon(y)).collect::<Result<_, _>>()?;
        let xbits = xs.iter().map(|x| symbols_to_bits(x, ax)).collect();
        Ok(Enumeration {
            xs,
            ys,
            zs,
            xbits,
            w,
            total,
            recon,
            alphabet: [ax, ay, az],
        })
    }

    pub fn weight(&self, xi: usize, yi: usize, zi: usize) -> u128 {
        self.w[(xi * self.ys.len() + yi) * self.zs.len() + zi]
    }

    fn wxz(&self, xi: usize, zi: usize) -> u128 {
        (0..self.ys.len()).map(|yi| self.weight(xi, yi, zi)).sum()
    }

    /// Sum of all weights (`denom^n`).
    pub fn total(&self) -> u128 {
        self.total
    }

    pub fn x_bits(&self, xi: usize) -> &BitString {
        &self.xbits[xi]
    }

    pub fn recon(&self, yi: usize) -> &[Symbols] {
        &self.recon[yi]
    }

    pub fn z_index(&self, z: &[u8]) -> usize {
        string_index(z, self.alphabet[2])
    }

    pub fn y_index(&self, y: &[u8]) -> usize {
        string_index(y, self.alphabet[1])
    }
}

/// All public seeds and all per-encapsulation seed tuples of an instance.
pub fn seed_space(ikem: &Ikem) -> Result<(Vec<Option<Fe>>, Vec<IkemCiphertext>), GameError> {
    let p = ikem.params();
    let t = p.t;
    let too_big = || GameError::Invalid("seed space too large to enumerate".into());
    let fx = ikem.input_field();
    let fw = ikem.seed_field();
    Ok(match p.mode {
        Mode::Cea => {
            if fx.m() > 16 || fw.m() > 16 {
                return Err(too_big());
            }
            let pubs = fx.elements().map(Some).collect();
            let seeds = fw
                .elements()
                .map(|s_prime| IkemCiphertext::Cea {
                    v: BitString::zero(t),
                    s_prime,
                })
                .collect();
            (pubs, seeds)
        }
        Mode::Cca => {
            let cca_hash = ikem.cca_hash().expect("CCA instance");
            if fw.m() + ikem.n_bits() > 20 {
                return Err(too_big());
            }
            let mut seeds = Vec::new();
            for s_prime in fw.elements() {
                for s2 in cca_hash.hi().elements() {
                    for s1 in cca_hash.lo().elements() {
                        seeds.push(IkemCiphertext::Cca {
                            v: BitString::zero(t),
                            s_prime: s_prime.clone(),
                            s: CcaSeed { s2: s2.clone(), s1 },
                        });
                    }
                }
            }
            (vec![None], seeds)
        }
        Mode::Baseline => {
            if 4 * fx.m() > 20 {
                return Err(too_big());
            }
            let els: Vec<Fe> = fx.elements().collect();
            let mut seeds = Vec::new();
            for a2 in &els {
                for b2 in &els {
                    for a in &els {
                        for b in &els {
                            seeds.push(IkemCiphertext::Baseline {
                                v: BitString::zero(t),
                                s_prime: AffineSeed { a: a2.clone(), b: b2.clone() },
                                s: AffineSeed { a: a.clone(), b: b.clone() },
                            });
                        }
                    }
                }
            }
            (vec![None], seeds)
        }
    })
}

fn big(v: u128) -> BigInt {
    BigInt::from(v)
}

fn pow2_rational(e: i64) -> BigRational {
    let p = BigInt::one() << e.unsigned_abs();
    if e >= 0 {
        BigRational::from_integer(p)
    } else {
        BigRational::new(BigInt::one(), p)
    }
}

/// Exact statistical distance between the real key and a uniform key,
/// jointly with the public seeds, `z`, the challenge and `q_e` further
/// encapsulations.
pub fn exact_distance(ikem: &Ikem, q_e: u32) -> Result<BigRational, GameError> {
    exact_distance_ell(ikem, q_e, ikem.params().ell)
}

/// As [`exact_distance`] with keys truncated to their first `ell` bits.
pub fn exact_distance_ell(ikem: &Ikem, q_e: u32, ell: usize) -> Result<BigRational, GameError> {
    if ell > ikem.params().ell || ell > 20 {
        return Err(GameError::Invalid(format!("ℓ = {ell} out of range")));
    }
    if q_e > 2 {
        return Err(GameError::Invalid("q_e ≤ 2 supported".into()));
    }
    let en = Enumeration::new(ikem)?;
    let (pubs, seeds) = seed_space(ikem)?;
    let tuples = (seeds.len() as u128).pow(q_e + 1);
    let work = pubs.len() as u128 * en.zs.len() as u128 * tuples * en.xs.len() as u128;
    if work > ENUM_CAP {
        return Err(GameError::Invalid(format!("enumeration of {work} states exceeds cap")));
    }
    let t = ikem.params().t;
    let nx = en.xs.len();
    let mut sum = BigInt::zero();
    for public in &pubs {
        // table[seed][x] = (v, k)
        let mut table = Vec::with_capacity(seeds.len());
        for c in &seeds {
            let mut row = Vec::with_capacity(nx);
            for xi in 0..nx {
                let xb = en.x_bits(xi);
                let v = ikem.hash_v(xb, c, public.as_ref())?.to_u64().unwrap_or(0);
                let k = ikem.extract(xb, c)?.0.prefix(ell)?.to_u64().unwrap_or(0);
                row.push((v, k));
            }
            table.push(row);
        }
        for zi in 0..en.zs.len() {
            let wx: Vec<u128> = (0..nx).map(|xi| en.wxz(xi, zi)).collect();
            let mut idx = vec![0usize; q_e as usize + 1];
            let mut items: Vec<(Vec<u64>, u64, u128)> = Vec::with_capacity(nx);
            loop {
                items.clear();
                for xi in 0..nx {
                    if wx[xi] == 0 {
                        continue;
                    }
                    let (v0, k0) = table[idx[0]][xi];
                    let mut key = vec![v0];
                    for &q in &idx[1..] {
                        let (v, k) = table[q][xi];
                        key.push(v << ell | k);
                    }
                    items.push((key, k0, wx[xi]));
                }
                items.sort_unstable();
                let mut i = 0;
                while i < items.len() {
                    let mut j = i;
                    let mut b: u128 = 0;
                    while j < items.len() && items[j].0 == items[i].0 {
                        b += items[j].2;
                        j += 1;
                    }
                    // Per observed key value: |2^ℓ·A_k − B|; unobserved keys give B.
                    let mut seen = 0u128;
                    let mut part: u128 = 0;
                    let mut a = i;
                    while a < j {
                        let mut e = a;
                        let mut ak: u128 = 0;
                        while e < j && items[e].1 == items[a].1 {
                            ak += items[e].2;
                            e += 1;
                        }
                        part += ((ak << ell) as i128 - b as i128).unsigned_abs();
                        seen += 1;
                        a = e;
                    }
                    part += ((1u128 << ell) - seen) * b;
                    sum += big(part);
                    i = j;
                }
                // odometer over seed tuples
                let mut d = 0;
                loop {
                    if d == idx.len() {
                        break;
                    }
                    idx[d] += 1;
                    if idx[d] < seeds.len() {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == idx.len() {
                    break;
                }
            }
        }
        let _ = t;
    }
    let denom = big(en.total()) * big(pubs.len() as u128) * big(tuples) * (BigInt::one() << ell) * 2;
    Ok(BigRational::new(sum, denom))
}

/// Exponent `e` of the key-uniformity bound `½√(2^{e − nH̃∞(X|Z)})`:
/// `(q_e+1)ℓ + t` with a fixed public seed, `(q_e+1)(ℓ+t)` when every
/// encapsulation publishes a fresh `v`.
pub fn uniformity_exponent(mode: Mode, q_e: u32, ell: usize, t: usize) -> i64 {
    let q = q_e as i64 + 1;
    match mode {
        Mode::Cea => q * ell as i64 + t as i64,
        Mode::Cca | Mode::Baseline => q * (ell as i64 + t as i64),
    }
}

/// Exact check `4Δ² ≤ 2^e · G^n`, where `G` is the per-symbol average
/// guessing probability of X given Z.
pub fn uniformity_bound_holds(
    ikem: &Ikem,
    q_e: u32,
    ell: usize,
    delta: &BigRational,
) -> Result<bool, GameError> {
    let p = ikem.params();
    let g = p
        .source
        .guess_prob_given_z_exact()
        .ok_or_else(|| GameError::Invalid("exact source weights required".into()))?;
    let to_int = |u: &BigUint| BigInt::from(u.clone());
    let g = BigRational::new(to_int(g.numer()), to_int(g.denom()));
    let gn = num_traits::pow(g, p.source.n());
    let rhs = pow2_rational(uniformity_exponent(p.mode, q_e, ell, p.t)) * gn;
    let lhs = delta * delta * BigRational::from_integer(BigInt::from(4));
    Ok(lhs <= rhs)
}

/// Exact distribution of `f(x, seeds, public)` over `x ~ P_X` and uniform seeds.
pub fn key_distribution_with<F>(
    ikem: &Ikem,
    mut f: F,
) -> Result<BTreeMap<u64, BigRational>, GameError>
where
    F: FnMut(&BitString, &IkemCiphertext, Option<&Fe>) -> Result<u64, GameError>,
{
    let en = Enumeration::new(ikem)?;
    let (pubs, seeds) = seed_space(ikem)?;
    let work = (pubs.len() * seeds.len() * en.xs.len()) as u128;
    if work > 1 << 26 {
        return Err(GameError::Invalid("key distribution too large to enumerate".into()));
    }
    let mut acc: BTreeMap<u64, u128> = BTreeMap::new();
    for public in &pubs {
        for c in &seeds {
            for xi in 0..en.xs.len() {
                let wx: u128 = (0..en.zs.len()).map(|zi| en.wxz(xi, zi)).sum();
                if wx == 0 {
                    continue;
                }
                *acc.entry(f(en.x_bits(xi), c, public.as_ref())?).or_default() += wx;
            }
        }
    }
    let denom = big(en.total()) * big((pubs.len() * seeds.len()) as u128);
    Ok(acc
        .into_iter()
        .map(|(k, w)| (k, BigRational::new(big(w), denom.clone())))
        .collect())
}

/// Exact distribution of the iKEM key.
pub fn exact_key_distribution(ikem: &Ikem) -> Result<BTreeMap<u64, BigRational>, GameError> {
    key_distribution_with(ikem, |x, c, _| {
        Ok(ikem.extract(x, c)?.0.to_u64().unwrap_or(0))
    })
}

/// Statistical distance of a distribution on `ell`-bit values from uniform.
pub fn distance_from_uniform(dist: &BTreeMap<u64, BigRational>, ell: usize) -> BigRational {
    let u = pow2_rational(-(ell as i64));
    let mut s = BigRational::zero();
    for p in dist.values() {
        let d = p - &u;
        s += if d < BigRational::zero() { -d } else { d };
    }
    let missing = (1u64 << ell) - dist.len() as u64;
    s += &u * BigRational::from_integer(BigInt::from(missing));
    s / BigRational::from_integer(BigInt::from(2))
}

// ---------------------------------------------------------------------------
// pKIND
// ---------------------------------------------------------------------------

/// What the pKIND adversary sees besides oracle answers.
pub struct PkindView<'a> {
    pub ikem: &'a Ikem,
    pub z: &'a [u8],
    pub public_seed: Option<&'a Fe>,
}

/// Budgeted oracles of the pKIND game.
pub struct PkindOracle<'a> {
    ikem: &'a Ikem,
    mats: &'a Materials,
    atk: Atk,
    q_e: u32,
    q_d: u32,
    used_e: u32,
    used_d: u32,
    challenge: Option<IkemCiphertext>,
    leak: Option<IkemKey>,
    rng: &'a mut ChaCha20Rng,
}

impl PkindOracle<'_> {
    pub fn encap(&mut self) -> Result<(IkemKey, IkemCiphertext), GameError> {
        if self.atk == Atk::Ot {
            return Err(GameError::Budget("no encapsulation oracle under ot".into()));
        }
        if self.used_e >= self.q_e {
            return Err(GameError::Budget(format!("q_e = {} exhausted", self.q_e)));
        }
        self.used_e += 1;
        Ok(self
            .ikem
            .encap(&self.mats.sample.x, self.mats.public_seed.as_ref(), self.rng)?)
    }

    pub fn decap(&mut self, c: &IkemCiphertext) -> Result<Option<IkemKey>, GameError> {
        if self.atk != Atk::Cca {
            return Err(GameError::Budget("no decapsulation oracle".into()));
        }
        if self.challenge.as_ref() == Some(c) {
            return Err(GameError::BarredQuery);
        }
        if self.used_d >= self.q_d {
            return Err(GameError::Budget(format!("q_d = {} exhausted", self.q_d)));
        }
        self.used_d += 1;
        Ok(self
            .ikem
            .decap(&self.mats.sample.y, c, self.mats.public_seed.as_ref())?)
    }

    pub fn remaining_encaps(&self) -> u32 {
        self.q_e - self.used_e
    }

    pub fn remaining_decaps(&self) -> u32 {
        if self.atk == Atk::Cca {
            self.q_d - self.used_d
        } else {
            0
        }
    }

    pub fn coin(&mut self) -> bool {
        self.rng.gen()
    }

    /// The real challenge key, only when the game runs with the leak fixture.
    pub fn leaked_real_key(&self) -> Option<&IkemKey> {
        self.leak.as_ref()
    }
}

/// Two-phase pKIND adversary; `true` means "the key is real".
pub trait PkindAdversary {
    fn phase1(&mut self, _view: &PkindView, _o: &mut PkindOracle) -> Result<(), GameError> {
        Ok(())
    }

    fn phase2(
        &mut self,
        view: &PkindView,
        c: &IkemCiphertext,
        k: &IkemKey,
        o: &mut PkindOracle,
    ) -> Result<bool, GameError>;
}

pub struct RandomGuess;

impl PkindAdversary for RandomGuess {
    fn phase2(
        &mut self,
        _: &PkindView,
        _: &IkemCiphertext,
        _: &IkemKey,
        o: &mut PkindOracle,
    ) -> Result<bool, GameError> {
        Ok(o.coin())
    }
}

/// Calibration fixture: compares against the leaked real key.
pub struct LeakReader;

impl PkindAdversary for LeakReader {
    fn phase2(
        &mut self,
        _: &PkindView,
        _: &IkemCiphertext,
        k: &IkemKey,
        o: &mut PkindOracle,
    ) -> Result<bool, GameError> {
        Ok(o.leaked_real_key() == Some(k))
    }
}

/// Runs the pKIND game with fresh materials per trial, one arm per `b`.
pub fn run_pkind<A, F>(
    ikem: &Ikem,
    cfg: &GameConfig,
    leak: bool,
    mut make: F,
) -> Result<AdvantageReport, GameError>
where
    A: PkindAdversary,
    F: FnMut() -> A,
{
    cfg.check()?;
    if cfg.atk == Atk::Cca && ikem.mode() != Mode::Cca {
        return Err(GameError::Invalid("cca game needs a CCA instance".into()));
    }
    let ell = ikem.params().ell;
    let mut ones = [0u64; 2];
    for b in 0..2u64 {
        let mut rng = arm_rng(cfg.seed, b);
        for _ in 0..cfg.trials {
            let mats = ikem.gen(&mut rng);
            let (k0, c) = ikem.encap(&mats.sample.x, mats.public_seed.as_ref(), &mut rng)?;
            let k = if b == 0 {
                k0.clone()
            } else {
                IkemKey(BitString::random(ell, &mut rng))
            };
            let mut adv = make();
            let view = PkindView {
                ikem,
                z: &mats.sample.z,
                public_seed: mats.public_seed.as_ref(),
            };
            let mut o = PkindOracle {
                ikem,
                mats: &mats,
                atk: cfg.atk,
                q_e: cfg.q_e,
                q_d: cfg.q_d,
                used_e: 0,
                used_d: 0,
                challenge: None,
                leak: leak.then_some(k0),
                rng: &mut rng,
            };
            adv.phase1(&view, &mut o)?;
            o.challenge = Some(c.clone());
            if adv.phase2(&view, &c, &k, &mut o)? {
                ones[b as usize] += 1;
            }
        }
    }
    Ok(AdvantageReport::two_arm("pkind", cfg.atk.name(), ones, cfg.trials, cfg.bound))
}

/// The fixed forged-seed rule: flip the low bit of `s1` (CCA), of `s′`
/// (CEA) or of the additive term of `s` (baseline).
pub fn forge_seeds(c: &IkemCiphertext) -> Result<IkemCiphertext, GameError> {
    let flip = |f: &Fe| -> Result<Fe, GameError> {
        let bits = f.to_bits();
        let one = BitString::from_u64(bits.len(), 1)?;
        Ok(f.field().element(&bits.xor(&one)?)?)
    };
    Ok(match c {
        IkemCiphertext::Cea { v, s_prime } => IkemCiphertext::Cea {
            v: v.clone(),
            s_prime: flip(s_prime)?,
        },
        IkemCiphertext::Cca { v, s_prime, s } => IkemCiphertext::Cca {
            v: v.clone(),
            s_prime: s_prime.clone(),
            s: CcaSeed {
                s2: s.s2.clone(),
                s1: flip(&s.s1)?,
            },
        },
        IkemCiphertext::Baseline { v, s_prime, s } => IkemCiphertext::Baseline {
            v: v.clone(),
            s_prime: s_prime.clone(),
            s: AffineSeed {
                a: s.a.clone(),
                b: flip(&s.b)?,
            },
        },
    })
}

fn with_v(c: &IkemCiphertext, v: BitString) -> IkemCiphertext {
    let mut c = c.clone();
    match &mut c {
        IkemCiphertext::Cea { v: slot, .. }
        | IkemCiphertext::Cca { v: slot, .. }
        | IkemCiphertext::Baseline { v: slot, .. } => *slot = v,
    }
    c
}

/// Exact posterior over `(x, y)` given `z` and consistency constraints.
struct Posterior {
    w: Vec<f64>,
    nx: usize,
    ny: usize,
}

impl Posterior {
    fn new(en: &Enumeration, zi: usize, x_ok: &[bool]) -> Self {
        let nx = en.xs.len();
        let ny = en.ys.len();
        let mut w = vec![0.0; nx * ny];
        for xi in 0..nx {
            if x_ok[xi] {
                for yi in 0..ny {
                    w[xi * ny + yi] = en.weight(xi, yi, zi) as f64;
                }
            }
        }
        Posterior { w, nx, ny }
    }

    fn restrict_y(&mut self, y_ok: &[bool]) {
        for xi in 0..self.nx {
            for yi in 0..self.ny {
                if !y_ok[yi] {
                    self.w[xi * self.ny + yi] = 0.0;
                }
            }
        }
    }

    fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    fn x_marginal(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|xi| self.w[xi * self.ny..(xi + 1) * self.ny].iter().sum())
            .collect()
    }

    fn y_marginal(&self) -> Vec<f64> {
        (0..self.ny)
            .map(|yi| (0..self.nx).map(|xi| self.w[xi * self.ny + yi]).sum())
            .collect()
    }
}

fn decap_table(
    ikem: &Ikem,
    en: &Enumeration,
    c: &IkemCiphertext,
    public: Option<&Fe>,
) -> Result<Vec<Option<IkemKey>>, GameError> {
    (0..en.ys.len())
        .map(|yi| Ok(ikem.decap_with_set(en.recon(yi), c, public)?))
        .collect()
}

fn x_consistent(
    ikem: &Ikem,
    en: &Enumeration,
    obs: &[(IkemKey, IkemCiphertext)],
    public: Option<&Fe>,
) -> Result<Vec<bool>, GameError> {
    (0..en.xs.len())
        .map(|xi| {
            let xb = en.x_bits(xi);
            for (k, c) in obs {
                if &ikem.hash_v(xb, c, public)? != c.v() || &ikem.extract(xb, c)? != k {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect()
}

/// Bayes-optimal pKIND distinguisher from the enumerated posterior. It
/// spends its encapsulation budget in phase 1 and, under cca, queries
/// forged variants of the challenge in phase 2.
pub struct BayesPkind<'e> {
    en: &'e Enumeration,
    encs: Vec<(IkemKey, IkemCiphertext)>,
}

impl<'e> BayesPkind<'e> {
    pub fn new(en: &'e Enumeration) -> Self {
        BayesPkind { en, encs: vec![] }
    }
}

impl PkindAdversary for BayesPkind<'_> {
    fn phase1(&mut self, _: &PkindView, o: &mut PkindOracle) -> Result<(), GameError> {
        while o.atk != Atk::Ot && o.remaining_encaps() > 0 {
            self.encs.push(o.encap()?);
        }
        Ok(())
    }

    fn phase2(
        &mut self,
        view: &PkindView,
        c: &IkemCiphertext,
        k: &IkemKey,
        o: &mut PkindOracle,
    ) -> Result<bool, GameError> {
        let ikem = view.ikem;
        let en = self.en;
        let zi = en.z_index(view.z);
        let mut x_ok = x_consistent(ikem, en, &self.encs, view.public_seed)?;
        for (xi, ok) in x_ok.iter_mut().enumerate() {
            if *ok && &ikem.hash_v(en.x_bits(xi), c, view.public_seed)? != c.v() {
                *ok = false;
            }
        }
        let mut post = Posterior::new(en, zi, &x_ok);
        let mut forged = c.clone();
        while o.remaining_decaps() > 0 {
            forged = forge_seeds(&forged)?;
            let answer = o.decap(&forged)?;
            let table = decap_table(ikem, en, &forged, view.public_seed)?;
            let y_ok: Vec<bool> = table.iter().map(|a| *a == answer).collect();
            post.restrict_y(&y_ok);
        }
        let total = post.total();
        if total == 0.0 {
            return Ok(false);
        }
        let xm = post.x_marginal();
        let mut p_real = 0.0;
        for (xi, p) in xm.iter().enumerate() {
            if *p > 0.0 && &ikem.extract(en.x_bits(xi), c)? == k {
                p_real += p;
            }
        }
        let ell = ikem.params().ell as i32;
        Ok(p_real / total > 2f64.powi(-ell) * (1.0 + 1e-12))
    }
}

// ---------------------------------------------------------------------------
// KINT
// ---------------------------------------------------------------------------

/// The forger's view: one honest encapsulation plus `z`.
pub struct KintView<'a> {
    pub ikem: &'a Ikem,
    pub z: &'a [u8],
    pub public_seed: Option<&'a Fe>,
    pub key: &'a IkemKey,
    pub c: &'a IkemCiphertext,
}

pub struct KintOracle<'a> {
    ikem: &'a Ikem,
    mats: &'a Materials,
    q_d: u32,
    used_d: u32,
    rng: &'a mut ChaCha20Rng,
}

impl KintOracle<'_> {
    pub fn decap(&mut self, c: &IkemCiphertext) -> Result<Option<IkemKey>, GameError> {
        if self.used_d >= self.q_d {
            return Err(GameError::Budget(format!("q_d = {} exhausted", self.q_d)));
        }
        self.used_d += 1;
        Ok(self
            .ikem
            .decap(&self.mats.sample.y, c, self.mats.public_seed.as_ref())?)
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        self.rng
    }
}

pub trait KintAdversary {
    fn forge(&mut self, view: &KintView, o: &mut KintOracle) -> Result<IkemCiphertext, GameError>;
}

/// Uniformly random ciphertext.
pub struct RandomForger;

impl KintAdversary for RandomForger {
    fn forge(&mut self, view: &KintView, o: &mut KintOracle) -> Result<IkemCiphertext, GameError> {
        let t = view.ikem.params().t;
        let c = view.ikem.random_seeds(o.rng(), view.public_seed)?;
        let v = BitString::random(t, o.rng());
        Ok(with_v(&c, v))
    }
}

/// Returns the honest ciphertext; the game refuses to count it.
pub struct ReplayForger;

impl KintAdversary for ReplayForger {
    fn forge(&mut self, view: &KintView, _: &mut KintOracle) -> Result<IkemCiphertext, GameError> {
        Ok(view.c.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    GuessX,
    GuessY,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forgery {
    pub c_f: IkemCiphertext,
    pub p_s: f64,
    pub strategy: Strategy,
}

/// Best forgery under the x- and y-guessing strategies with the fixed
/// forged-seed rule, and its exact success probability under the posterior.
pub fn brute_force_forger(en: &Enumeration, view: &KintView) -> Result<Forgery, GameError> {
    let ikem = view.ikem;
    let zi = en.z_index(view.z);
    let obs = [(view.key.clone(), view.c.clone())];
    let x_ok = x_consistent(ikem, en, &obs, view.public_seed)?;
    let post = Posterior::new(en, zi, &x_ok);
    let total = post.total();
    let seeds_f = forge_seeds(view.c)?;
    let xm = post.x_marginal();
    let ym = post.y_marginal();
    let argmax = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    };
    let x_hat = argmax(&xm);
    let mut candidates = vec![(Strategy::GuessX, x_hat)];
    let y_hat = argmax(&ym);
    let in_r: Vec<usize> = en
        .recon(y_hat)
        .iter()
        .map(|x| string_index(x, en.alphabet[0]))
        .collect();
    if let Some(&xi) = in_r
        .iter()
        .max_by(|a, b| xm[**a].total_cmp(&xm[**b]).then(b.cmp(a)))
    {
        candidates.push((Strategy::GuessY, xi));
    }
    let mut best: Option<Forgery> = None;
    for (strategy, xi) in candidates {
        let v_f = ikem.hash_v(en.x_bits(xi), &seeds_f, view.public_seed)?;
        let c_f = with_v(&seeds_f, v_f);
        let table = decap_table(ikem, en, &c_f, view.public_seed)?;
        let hit: f64 = (0..en.ys.len())
            .filter(|&yi| table[yi].is_some())
            .map(|yi| ym[yi])
            .sum();
        let p_s = if total > 0.0 { hit / total } else { 0.0 };
        if best.as_ref().is_none_or(|b| p_s > b.p_s) {
            best = Some(Forgery { c_f, p_s, strategy });
        }
    }
    Ok(best.expect("at least one strategy"))
}

/// KINT adversary wrapping [`brute_force_forger`].
pub struct BruteForceForger<'e> {
    pub en: &'e Enumeration,
}

impl KintAdversary for BruteForceForger<'_> {
    fn forge(&mut self, view: &KintView, _: &mut KintOracle) -> Result<IkemCiphertext, GameError> {
        Ok(brute_force_forger(self.en, view)?.c_f)
    }
}

/// Exact expected success of [`brute_force_forger`] over all views.
pub fn forger_exact_rate(ikem: &Ikem) -> Result<f64, GameError> {
    let en = Enumeration::new(ikem)?;
    let (pubs, seeds) = seed_space(ikem)?;
    let mut acc = 0.0;
    for public in &pubs {
        for c0 in &seeds {
            for zi in 0..en.zs.len() {
                let mut views: HashMap<(BitString, BitString), f64> = HashMap::new();
                for xi in 0..en.xs.len() {
                    let wxz = en.wxz(xi, zi) as f64;
                    if wxz == 0.0 {
                        continue;
                    }
                    let (k, c) = ikem.encap_with(en.x_bits(xi), c0.clone(), public.as_ref())?;
                    *views.entry((c.v().clone(), k.0)).or_default() += wxz;
                }
                for ((v, k), w) in views {
                    let c = with_v(c0, v);
                    let key = IkemKey(k);
                    let view = KintView {
                        ikem,
                        z: &en.zs[zi],
                        public_seed: public.as_ref(),
                        key: &key,
                        c: &c,
                    };
                    acc += w * brute_force_forger(&en, &view)?.p_s;
                }
            }
        }
    }
    Ok(acc / (en.total() as f64 * (pubs.len() * seeds.len()) as f64))
}

/// Monte-Carlo forgery rate; `estimate` is the acceptance rate.
pub fn run_kint<A, F>(ikem: &Ikem, cfg: &GameConfig, mut make: F) -> Result<AdvantageReport, GameError>
where
    A: KintAdversary,
    F: FnMut() -> A,
{
    cfg.check()?;
    if cfg.q_e != 1 {
        return Err(GameError::Invalid("the integrity game runs with q_e = 1".into()));
    }
    let mut rng = arm_rng(cfg.seed, 0);
    let mut wins = 0u64;
    for _ in 0..cfg.trials {
        let mats = ikem.gen(&mut rng);
        let (key, c) = ikem.encap(&mats.sample.x, mats.public_seed.as_ref(), &mut rng)?;
        let view = KintView {
            ikem,
            z: &mats.sample.z,
            public_seed: mats.public_seed.as_ref(),
            key: &key,
            c: &c,
        };
        let mut o = KintOracle {
            ikem,
            mats: &mats,
            q_d: cfg.q_d,
            used_d: 0,
            rng: &mut rng,
        };
        let c_hat = make().forge(&view, &mut o)?;
        if c_hat == c {
            continue;
        }
        if ikem
            .decap(&mats.sample.y, &c_hat, mats.public_seed.as_ref())?
            .is_some()
        {
            wins += 1;
        }
    }
    Ok(AdvantageReport {
        game: "kint".into(),
        atk: "kint".into(),
        estimate: wins as f64 / cfg.trials as f64,
        halfwidth: halfwidth(cfg.trials),
        bound: cfg.bound,
        n_trials: cfg.trials,
    })
}

// ---------------------------------------------------------------------------
// Simultaneous-solution counting
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountPart {
    /// Same `x` under two seed tuples.
    I,
    /// `x′ ⊕ e` under the honest seeds and `x′` under the forged ones.
    II,
}

/// Seeds `(s′ pieces, s)` of the CCA hash with a target value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedTarget {
    pub sv: PaddedSeedVector,
    pub s: CcaSeed,
    pub v: BitString,
}

/// Upper bounds `3(r+1)·2^{n−2t}` and `(r+3)(r+2)·2^{n−2t}`.
pub fn count_bound(part: CountPart, n: usize, t: usize, r: usize) -> u64 {
    let scale = 1u64 << (n - 2 * t);
    match part {
        CountPart::I => 3 * (r as u64 + 1) * scale,
        CountPart::II => (r as u64 + 3) * (r as u64 + 2) * scale,
    }
}

/// Exhaustive simultaneous-solution count over all `x ∈ {0,1}^n`.
pub fn count_solutions(
    cca_hash: &CcaHash,
    honest: &SeedTarget,
    forged: &SeedTarget,
    part: CountPart,
    e: Option<&BitString>,
) -> Result<u64, GameError> {
    let n = cca_hash.n();
    if n > 20 {
        return Err(GameError::Invalid("n ≤ 20 for exhaustive counting".into()));
    }
    let e = match part {
        CountPart::I => {
            if (&honest.sv, &honest.s) == (&forged.sv, &forged.s) {
                return Err(GameError::Invalid("seed tuples must differ".into()));
            }
            BitString::zero(n)
        }
        CountPart::II => {
            let e = e.ok_or_else(|| GameError::Invalid("part ii needs e".into()))?;
            if e.is_zero() {
                return Err(GameError::Invalid("e must be nonzero".into()));
            }
            if honest == forged {
                return Err(GameError::Invalid("forged tuple equals the honest one".into()));
            }
            e.clone()
        }
    };
    let mut count = 0;
    for xv in 0..1u64 << n {
        let x = BitString::from_u64(n, xv)?;
        let lhs = cca_hash.eval(&x.xor(&e)?, &honest.sv, &honest.s)?;
        if lhs == honest.v && cca_hash.eval(&x, &forged.sv, &forged.s)? == forged.v {
            count += 1;
        }
    }
    Ok(count)
}

// ---------------------------------------------------------------------------
// DEM IND
// ---------------------------------------------------------------------------

pub struct DemOracle<'a, K: Keystream> {
    dem: &'a Dem<K>,
    key: &'a DemKey,
    mode: DemMode,
    q_d: u32,
    used_d: u32,
    challenge: Option<DemCiphertext>,
    rng: &'a mut ChaCha20Rng,
}

impl<K: Keystream> DemOracle<'_, K> {
    pub fn decrypt(&mut self, c: &DemCiphertext) -> Result<Option<Vec<u8>>, GameError> {
        if self.mode != DemMode::Otcca {
            return Err(GameError::Budget("no decryption oracle under ot".into()));
        }
        if self.challenge.as_ref() == Some(c) {
            return Err(GameError::BarredQuery);
        }
        if self.used_d >= self.q_d {
            return Err(GameError::Budget(format!("q_d = {} exhausted", self.q_d)));
        }
        self.used_d += 1;
        Ok(self.dem.decrypt_otcca(self.key, c)?)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.gen()
    }
}

/// DEM adversary; `guess` returns the bit `b`.
pub trait DemAdversary {
    fn choose(&mut self) -> (Vec<u8>, Vec<u8>);
    fn guess<K: Keystream>(
        &mut self,
        c: &DemCiphertext,
        o: &mut DemOracle<K>,
    ) -> Result<bool, GameError>;
}

pub struct DemRandomGuess;

impl DemAdversary for DemRandomGuess {
    fn choose(&mut self) -> (Vec<u8>, Vec<u8>) {
        (vec![0; 16], vec![0xff; 16])
    }

    fn guess<K: Keystream>(&mut self, _: &DemCiphertext, o: &mut DemOracle<K>) -> Result<bool, GameError> {
        Ok(o.coin())
    }
}

/// Says `b = 1` when the body equals `m1`; wins against a missing cipher.
pub struct PlaintextMatch;

impl DemAdversary for PlaintextMatch {
    fn choose(&mut self) -> (Vec<u8>, Vec<u8>) {
        (vec![0; 16], vec![0xff; 16])
    }

    fn guess<K: Keystream>(&mut self, c: &DemCiphertext, _: &mut DemOracle<K>) -> Result<bool, GameError> {
        Ok(c.body == [0xff; 16])
    }
}

/// Submits a one-bit tampering of the challenge and reads the plaintext.
pub struct TamperQuery;

impl DemAdversary for TamperQuery {
    fn choose(&mut self) -> (Vec<u8>, Vec<u8>) {
        (vec![0; 16], vec![0xff; 16])
    }

    fn guess<K: Keystream>(&mut self, c: &DemCiphertext, o: &mut DemOracle<K>) -> Result<bool, GameError> {
        let mut t = c.clone();
        t.body[0] ^= 1;
        Ok(match o.decrypt(&t)? {
            Some(m) => m[1] == 0xff,
            None => o.coin(),
        })
    }
}

pub fn run_dem_ind<K, A, F>(
    dem: &Dem<K>,
    mode: DemMode,
    cfg: &GameConfig,
    mut make: F,
) -> Result<AdvantageReport, GameError>
where
    K: Keystream,
    A: DemAdversary,
    F: FnMut() -> A,
{
    cfg.check()?;
    let mut ones = [0u64; 2];
    for b in 0..2u64 {
        let mut rng = arm_rng(cfg.seed, b);
        for _ in 0..cfg.trials {
            let mut kb = vec![0u8; mode.key_bits() / 8];
            rng.fill_bytes(&mut kb);
            let mut key = DemKey::new(mode, &kb)?;
            let mut adv = make();
            let (m0, m1) = adv.choose();
            if m0.len() != m1.len() {
                return Err(GameError::Invalid("challenge messages differ in length".into()));
            }
            let c = dem.encrypt(&mut key, if b == 0 { &m0 } else { &m1 })?;
            let mut o = DemOracle {
                dem,
                key: &key,
                mode,
                q_d: cfg.q_d,
                used_d: 0,
                challenge: Some(c.clone()),
                rng: &mut rng,
            };
            if adv.guess(&c, &mut o)? {
                ones[b as usize] += 1;
            }
        }
    }
    let atk = match mode {
        DemMode::Ot => "ot",
        DemMode::Otcca => "otcca",
    };
    Ok(AdvantageReport::two_arm("dem", atk, ones, cfg.trials, cfg.bound))
}

// ---------------------------------------------------------------------------
// HE IND
// ---------------------------------------------------------------------------

/// What the HE adversary sees besides oracle answers.
pub struct HeView<'a> {
    pub scheme: &'a HybridScheme,
    pub z: &'a [u8],
    pub public_seed: Option<&'a Fe>,
}

/// Budgeted encryption and decryption oracles of the HE game.
pub struct HeOracle<'a> {
    scheme: &'a HybridScheme,
    mats: &'a Materials,
    atk: Atk,
    q_e: u32,
    q_d: u32,
    used_e: u32,
    used_d: u32,
    challenge: Option<HybridCiphertext>,
    rng: &'a mut ChaCha20Rng,
}

impl HeOracle<'_> {
    pub fn encrypt(&mut self, m: &[u8]) -> Result<HybridCiphertext, GameError> {
        if self.atk == Atk::Ot {
            return Err(GameError::Budget("no encryption oracle under ot".into()));
        }
        if self.used_e >= self.q_e {
            return Err(GameError::Budget(format!("q_e = {} exhausted", self.q_e)));
        }
        self.used_e += 1;
        Ok(self
            .scheme
            .encrypt(&self.mats.sample.x, self.mats.public_seed.as_ref(), m, self.rng)?)
    }

    pub fn decrypt(&mut self, c: &HybridCiphertext) -> Result<Option<Vec<u8>>, GameError> {
        if self.atk != Atk::Cca {
            return Err(GameError::Budget("no decryption oracle".into()));
        }
        if self.challenge.as_ref() == Some(c) {
            return Err(GameError::BarredQuery);
        }
        if self.used_d >= self.q_d {
            return Err(GameError::Budget(format!("q_d = {} exhausted", self.q_d)));
        }
        self.used_d += 1;
        Ok(self
            .scheme
            .decrypt(&self.mats.sample.y, self.mats.public_seed.as_ref(), c)?)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.gen()
    }
}

/// Two-phase HE adversary: picks equal-length messages, then guesses `b`.
pub trait HeAdversary {
    fn choose(&mut self, view: &HeView, o: &mut HeOracle) -> Result<(Vec<u8>, Vec<u8>), GameError>;
    fn guess(&mut self, view: &HeView, c: &HybridCiphertext, o: &mut HeOracle) -> Result<bool, GameError>;
}

pub struct HeRandomGuess;

impl HeAdversary for HeRandomGuess {
    fn choose(&mut self, _: &HeView, _: &mut HeOracle) -> Result<(Vec<u8>, Vec<u8>), GameError> {
        Ok((vec![0; 16], vec![0xff; 16]))
    }

    fn guess(&mut self, _: &HeView, _: &HybridCiphertext, o: &mut HeOracle) -> Result<bool, GameError> {
        Ok(o.coin())
    }
}

/// Flips one body bit of the challenge and asks for its decryption.
pub struct HeTamperQuery;

impl HeAdversary for HeTamperQuery {
    fn choose(&mut self, _: &HeView, _: &mut HeOracle) -> Result<(Vec<u8>, Vec<u8>), GameError> {
        Ok((vec![0; 16], vec![0xff; 16]))
    }

    fn guess(&mut self, _: &HeView, c: &HybridCiphertext, o: &mut HeOracle) -> Result<bool, GameError> {
        let mut t = c.clone();
        t.c2.body[0] ^= 1;
        Ok(match o.decrypt(&t)? {
            Some(m) => m[1] == 0xff,
            None => o.coin(),
        })
    }
}

/// Runs the HE IND game. `cea` pairs with an OT DEM and `cca` with OTCCA.
pub fn run_he_ind<A, F>(scheme: &HybridScheme, cfg: &GameConfig, mut make: F) -> Result<AdvantageReport, GameError>
where
    A: HeAdversary,
    F: FnMut() -> A,
{
    cfg.check()?;
    let want = match cfg.atk {
        Atk::Cca => DemMode::Otcca,
        Atk::Cea | Atk::Ot => DemMode::Ot,
    };
    if scheme.dem_mode() != want {
        return Err(GameError::Invalid(format!(
            "{} game needs an {want:?} DEM, scheme has {:?}",
            cfg.atk.name(),
            scheme.dem_mode()
        )));
    }
    let mut ones = [0u64; 2];
    for b in 0..2u64 {
        let mut rng = arm_rng(cfg.seed, b);
        for _ in 0..cfg.trials {
            let mats = scheme.ikem().gen(&mut rng);
            let mut adv = make();
            let view = HeView {
                scheme,
                z: &mats.sample.z,
                public_seed: mats.public_seed.as_ref(),
            };
            let mut o = HeOracle {
                scheme,
                mats: &mats,
                atk: cfg.atk,
                q_e: cfg.q_e,
                q_d: cfg.q_d,
                used_e: 0,
                used_d: 0,
                challenge: None,
                rng: &mut rng,
            };
            let (m0, m1) = adv.choose(&view, &mut o)?;
            if m0.len() != m1.len() {
                return Err(GameError::Invalid("challenge messages differ in length".into()));
            }
            let m = if b == 0 { &m0 } else { &m1 };
            let c = scheme.encrypt(&mats.sample.x, mats.public_seed.as_ref(), m, o.rng)?;
            o.challenge = Some(c.clone());
            if adv.guess(&view, &c, &mut o)? {
                ones[b as usize] += 1;
            }
        }
    }
    Ok(AdvantageReport::two_arm("he", cfg.atk.name(), ones, cfg.trials, cfg.bound))
}

// ---------------------------------------------------------------------------
// PRI
// ---------------------------------------------------------------------------

/// PRF under test, evaluated on integer-labelled inputs.
#[derive(Clone, Debug)]
pub enum PrfUnderTest {
    /// F1 over `field` with `q_d+2` coefficients, input `x` as a field element.
    It { field: Field, q_d: u32, ell: usize },
    /// F2 on the 8-byte big-endian encoding of `x`.
    Comp { ell: usize },
}

impl PrfUnderTest {
    fn ell(&self) -> usize {
        match self {
            PrfUnderTest::It { ell, .. } | PrfUnderTest::Comp { ell } => *ell,
        }
    }
}

enum PrfKey {
    It(ItPrfKey),
    Comp([u8; 32]),
}

pub struct PriOracle<'a> {
    prf: &'a PrfUnderTest,
    key: PrfKey,
    real: bool,
    q: u32,
    seen: HashSet<u64>,
    rng: &'a mut ChaCha20Rng,
}

impl PriOracle<'_> {
    /// Aborts on a repeated input or an exhausted budget.
    pub fn query(&mut self, x: u64) -> Result<BitString, GameError> {
        if self.seen.contains(&x) {
            return Err(GameError::DuplicateQuery);
        }
        if self.seen.len() as u32 >= self.q {
            return Err(GameError::Budget(format!("q = {} exhausted", self.q)));
        }
        self.seen.insert(x);
        let ell = self.prf.ell();
        if !self.real {
            return Ok(BitString::random(ell, self.rng));
        }
        Ok(match (&self.key, self.prf) {
            (PrfKey::It(k), PrfUnderTest::It { field, .. }) => {
                twise_poly(&k.coeffs, &field.from_u64(x)?, ell)?
            }
            (PrfKey::Comp(k), _) => crate::combiner::prf_comp(k, &x.to_be_bytes(), ell),
            _ => unreachable!("key matches the PRF"),
        })
    }

    pub fn budget(&self) -> u32 {
        self.q
    }

    pub fn coin(&mut self) -> bool {
        self.rng.gen()
    }
}

pub trait PriAdversary {
    /// `true` means "real PRF".
    fn run(&mut self, o: &mut PriOracle) -> Result<bool, GameError>;
}

pub struct PriRandomGuess;

impl PriAdversary for PriRandomGuess {
    fn run(&mut self, o: &mut PriOracle) -> Result<bool, GameError> {
        Ok(o.coin())
    }
}

/// Exact likelihood-ratio test at reduced width: queries `0..q` and
/// counts the keys consistent with the answers.
pub struct PriBayes {
    pub field: Field,
    pub q_d: u32,
}

impl PriAdversary for PriBayes {
    fn run(&mut self, o: &mut PriOracle) -> Result<bool, GameError> {
        let q = o.budget() as u64;
        let answers = (0..q).map(|x| o.query(x)).collect::<Result<Vec<_>, _>>()?;
        let m = self.field.m();
        let ell = answers.first().map_or(0, |a| a.len());
        let xs: Vec<Fe> = (0..q).map(|x| self.field.from_u64(x)).collect::<Result<_, _>>()?;
        let coeffs = self.q_d as usize + 2;
        let keys = 1u64 << (m * coeffs);
        let mut hits = 0u64;
        for kv in 0..keys {
            let key: Vec<Fe> = (0..coeffs)
                .map(|i| self.field.from_u64((kv >> (m * i)) & ((1 << m) - 1)))
                .collect::<Result<_, _>>()?;
            let ok = xs
                .iter()
                .zip(&answers)
                .try_fold(true, |acc, (x, a)| Ok::<_, GameError>(acc && &twise_poly(&key, x, ell)? == a))?;
            if ok {
                hits += 1;
            }
        }
        // P_real(answers) = hits/keys versus 2^{−ℓq} under a random function.
        let lhs = BigUint::from(hits) << (ell as u64 * q);
        Ok(lhs > BigUint::from(keys))
    }
}

pub fn run_pri<A, F>(prf: &PrfUnderTest, q: u32, cfg: &GameConfig, mut make: F) -> Result<AdvantageReport, GameError>
where
    A: PriAdversary,
    F: FnMut() -> A,
{
    cfg.check()?;
    let mut ones = [0u64; 2];
    for b in 0..2u64 {
        let mut rng = arm_rng(cfg.seed, b);
        for _ in 0..cfg.trials {
            let key = match prf {
                PrfUnderTest::It { field, q_d, .. } => PrfKey::It(ItPrfKey::random(field, *q_d, &mut rng)),
                PrfUnderTest::Comp { .. } => {
                    let mut k = [0u8; 32];
                    rng.fill_bytes(&mut k);
                    PrfKey::Comp(k)
                }
            };
            let mut o = PriOracle {
                prf,
                key,
                real: b == 0,
                q,
                seen: HashSet::new(),
                rng: &mut rng,
            };
            if make().run(&mut o)? {
                ones[b as usize] += 1;
            }
        }
    }
    Ok(AdvantageReport::two_arm("pri", "pri", ones, cfg.trials, cfg.bound))
}

/// Exact distance of `(F1(x_1), …, F1(x_q))` over all keys from uniform.
pub fn pri_exact_distance(field: &Field, q_d: u32, xs: &[Fe], ell: usize) -> Result<BigRational, GameError> {
    let m = field.m();
    let coeffs = q_d as usize + 2;
    if m * coeffs > 24 || ell * xs.len() > 24 {
        return Err(GameError::Invalid("PRF key space too large".into()));
    }
    let keys = 1u64 << (m * coeffs);
    let mut counts: BTreeMap<u64, u128> = BTreeMap::new();
    for kv in 0..keys {
        let key: Vec<Fe> = (0..coeffs)
            .map(|i| field.from_u64((kv >> (m * i)) & ((1 << m) - 1)))
            .collect::<Result<_, _>>()?;
        let mut tuple = 0u64;
        for x in xs {
            tuple = tuple << ell | twise_poly(&key, x, ell)?.to_u64().unwrap_or(0);
        }
        *counts.entry(tuple).or_default() += 1;
    }
    let dist = counts
        .into_iter()
        .map(|(k, c)| (k, BigRational::new(big(c), big(keys as u128))))
        .collect();
    Ok(distance_from_uniform(&dist, ell * xs.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::IdentityKeystream;
    use crate::gf2::FieldCtx;
    use crate::ikem::IkemParams;
    use crate::source::{ExactWeights, SourceSpec};
    use num_traits::ToPrimitive;

    fn toy(mode: Mode, q: f64, nu: f64) -> Ikem {
        let src = SourceSpec::bsc(0.25, q, 4).unwrap();
        Ikem::new(IkemParams::manual(mode, src, 2, 1, nu)).unwrap()
    }

    #[test]
    fn halfwidth_value() {
        assert!((halfwidth(10_000) - 0.016_276).abs() < 1e-5);
    }

    #[test]
    fn report_json_and_exceeded() {
        let r = AdvantageReport::two_arm("dem", "ot", [90, 10], 100, Some(0.0));
        assert!((r.estimate - 0.8).abs() < 1e-12);
        assert!(r.exceeded());
        let line = r.to_json_line();
        for key in ["game", "atk", "estimate", "halfwidth", "bound", "n_trials"] {
            assert!(line.contains(&format!("\"{key}\"")));
        }
        let r = AdvantageReport::two_arm("dem", "ot", [50, 48], 100, Some(0.0));
        assert!(!r.exceeded());
    }

    #[test]
    fn exact_distance_trivial_cases() {
        let ikem = toy(Mode::Cea, 0.5, 3.5);
        assert!(exact_distance_ell(&ikem, 0, 0).unwrap().is_zero());
        // Point-mass source: the key is fixed by the view.
        let mut w = vec![0u64; 8];
        w[0] = 1; // x = y = z = 0
        let src = SourceSpec::new_exact([2, 2, 2], 3, w, 1).unwrap();
        let ikem = Ikem::new(IkemParams::manual(Mode::Cea, src, 1, 1, 0.0)).unwrap();
        let d = exact_distance(&ikem, 0).unwrap();
        assert_eq!(d, BigRational::new(1.into(), 2.into()));
    }

    #[test]
    fn exact_distance_respects_bound_toy() {
        for (mode, q) in [(Mode::Cea, 0.5), (Mode::Cca, 0.5), (Mode::Cea, 0.25), (Mode::Cca, 0.25)] {
            let ikem = toy(mode, q, 3.5);
            for q_e in 0..2 {
                let d = exact_distance(&ikem, q_e).unwrap();
                assert!(uniformity_bound_holds(&ikem, q_e, 1, &d).unwrap(), "{mode:?} {q} {q_e}");
            }
        }
    }

    #[test]
    fn bayes_matches_exact_distance() {
        let ikem = toy(Mode::Cea, 0.25, 3.5);
        let en = Enumeration::new(&ikem).unwrap();
        let exact = exact_distance(&ikem, 0).unwrap().to_f64().unwrap();
        let cfg = GameConfig::new(Atk::Cea, 4000, 7);
        let r = run_pkind(&ikem, &cfg, false, || BayesPkind::new(&en)).unwrap();
        assert!((r.estimate - exact).abs() <= 2.0 * r.halfwidth, "{} vs {exact}", r.estimate);
    }

    #[test]
    fn calibration_adversaries() {
        let ikem = toy(Mode::Cca, 0.5, 3.5);
        let cfg = GameConfig::new(Atk::Ot, 2000, 1);
        let r = run_pkind(&ikem, &cfg, false, || RandomGuess).unwrap();
        assert!(r.estimate <= 2.0 * r.halfwidth);
        let r = run_pkind(&ikem, &cfg, true, || LeakReader).unwrap();
        assert!(r.estimate > 0.4, "ℓ = 1 leaves a ½ collision rate: {}", r.estimate);
        let r2 = run_pkind(&ikem, &cfg, true, || LeakReader).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn oracle_rules() {
        struct Greedy;
        impl PkindAdversary for Greedy {
            fn phase2(
                &mut self,
                _: &PkindView,
                c: &IkemCiphertext,
                _: &IkemKey,
                o: &mut PkindOracle,
            ) -> Result<bool, GameError> {
                o.decap(c).map(|_| true)
            }
        }
        let ikem = toy(Mode::Cca, 0.5, 3.5);
        let mut cfg = GameConfig::new(Atk::Cca, 1, 1);
        cfg.q_d = 5;
        assert!(matches!(run_pkind(&ikem, &cfg, false, || Greedy), Err(GameError::BarredQuery)));
        struct Spender;
        impl PkindAdversary for Spender {
            fn phase2(
                &mut self,
                _: &PkindView,
                _: &IkemCiphertext,
                _: &IkemKey,
                o: &mut PkindOracle,
            ) -> Result<bool, GameError> {
                o.encap()?;
                o.encap()?;
                Ok(true)
            }
        }
        let mut cfg = GameConfig::new(Atk::Cea, 1, 1);
        cfg.q_e = 1;
        assert!(matches!(run_pkind(&ikem, &cfg, false, || Spender), Err(GameError::Budget(_))));
    }

    #[test]
    fn forger_trivial_cases() {
        // Noiseless, z = x: the forger knows everything.
        let src = SourceSpec::bsc(0.0, 0.0, 4).unwrap();
        let ikem = Ikem::new(IkemParams::manual(Mode::Cca, src, 2, 1, 0.0)).unwrap();
        assert!((forger_exact_rate(&ikem).unwrap() - 1.0).abs() < 1e-12);
        // Empty acceptance region.
        let ikem = toy(Mode::Cca, 0.5, -1.0);
        assert_eq!(forger_exact_rate(&ikem).unwrap(), 0.0);
    }

    #[test]
    fn forger_double_entry() {
        // Direct simulation: Σ over (x, y) consistent with the view of
        // P(x,y|z)·[decap succeeds], using Ikem::decap on raw samples.
        let ikem = toy(Mode::Cca, 0.5, 3.5);
        let en = Enumeration::new(&ikem).unwrap();
        let mut r = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..10 {
            let m = ikem.gen(&mut r);
            let (k, c) = ikem.encap(&m.sample.x, None, &mut r).unwrap();
            let view = KintView { ikem: &ikem, z: &m.sample.z, public_seed: None, key: &k, c: &c };
            let f = brute_force_forger(&en, &view).unwrap();
            let zi = en.z_index(&m.sample.z);
            let (mut num, mut den) = (0.0, 0.0);
            for (xi, x) in en.xs.iter().enumerate() {
                let (k2, c2) = ikem.encap_with(en.x_bits(xi), c.clone(), None).unwrap();
                if k2 != k || c2.v() != c.v() {
                    continue;
                }
                let _ = x;
                for (yi, y) in en.ys.iter().enumerate() {
                    let w = en.weight(xi, yi, zi) as f64;
                    den += w;
                    if ikem.decap(y, &f.c_f, None).unwrap().is_some() {
                        num += w;
                    }
                }
            }
            assert!((f.p_s - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn kint_replay_not_counted_and_random_forger() {
        let ikem = toy(Mode::Cca, 0.5, 3.5);
        let mut cfg = GameConfig::new(Atk::Cca, 500, 3);
        cfg.q_e = 1;
        let r = run_kint(&ikem, &cfg, || ReplayForger).unwrap();
        assert_eq!(r.estimate, 0.0);
        let r = run_kint(&ikem, &cfg, || RandomForger).unwrap();
        assert!(r.estimate <= 1.0);
        cfg.q_e = 0;
        assert!(run_kint(&ikem, &cfg, || RandomForger).is_err());
    }

    #[test]
    fn counting_examples() {
        let cca_hash = CcaHash::new(4, 2).unwrap();
        let f4 = FieldCtx::new(4).unwrap();
        let mk = |sp: u64, s2: u64, s1: u64, v: u64| SeedTarget {
            sv: PaddedSeedVector::split(&f4.from_u64(sp).unwrap().to_bits(), cca_hash.hi()).unwrap(),
            s: CcaSeed { s2: cca_hash.hi().from_u64(s2).unwrap(), s1: cca_hash.lo().from_u64(s1).unwrap() },
            v: BitString::from_u64(2, v).unwrap(),
        };
        let a = mk(3, 1, 2, 0);
        assert!(count_solutions(&cca_hash, &a, &a, CountPart::I, None).is_err());
        let zero = BitString::zero(4);
        assert!(count_solutions(&cca_hash, &a, &mk(3, 1, 3, 0), CountPart::II, Some(&zero)).is_err());
        assert_eq!(count_bound(CountPart::I, 4, 2, 2), 9);
        assert_eq!(count_bound(CountPart::II, 4, 2, 2), 20);
        let mut r = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = mk(r.gen_range(0..16), r.gen_range(0..4), r.gen_range(0..4), r.gen_range(0..4));
            let b = mk(r.gen_range(0..16), r.gen_range(0..4), r.gen_range(0..4), r.gen_range(0..4));
            if (&a.sv, &a.s) != (&b.sv, &b.s) {
                assert!(count_solutions(&cca_hash, &a, &b, CountPart::I, None).unwrap() <= 9);
            }
            let e = BitString::from_u64(4, r.gen_range(1..16)).unwrap();
            if a != b {
                assert!(count_solutions(&cca_hash, &a, &b, CountPart::II, Some(&e)).unwrap() <= 20);
            }
        }
    }

    #[test]
    fn dem_games() {
        let cfg = GameConfig { bound: Some(0.0), ..GameConfig::new(Atk::Ot, 1000, 2) };
        let real = Dem::new();
        let r = run_dem_ind(&real, DemMode::Ot, &cfg, || PlaintextMatch).unwrap();
        assert!(!r.exceeded());
        let stub = Dem::with_keystream(IdentityKeystream);
        let r = run_dem_ind(&stub, DemMode::Ot, &cfg, || PlaintextMatch).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert!(r.exceeded());
        let r = run_dem_ind(&real, DemMode::Otcca, &cfg, || DemRandomGuess).unwrap();
        assert!(!r.exceeded());
        let mut cfg = cfg;
        cfg.q_d = 1;
        let r = run_dem_ind(&real, DemMode::Otcca, &cfg, || TamperQuery).unwrap();
        assert!(!r.exceeded());
        cfg.q_d = 0;
        assert!(run_dem_ind(&real, DemMode::Otcca, &cfg, || TamperQuery).is_err());
    }

    #[test]
    fn pri_games() {
        let f = FieldCtx::new(3).unwrap();
        let xs: Vec<Fe> = (0..2).map(|v| f.from_u64(v).unwrap()).collect();
        assert!(pri_exact_distance(&f, 1, &xs, 3).unwrap().is_zero());
        let xs4: Vec<Fe> = (0..4).map(|v| f.from_u64(v).unwrap()).collect();
        assert!(!pri_exact_distance(&f, 1, &xs4, 3).unwrap().is_zero());
        let prf = PrfUnderTest::It { field: f.clone(), q_d: 1, ell: 3 };
        let cfg = GameConfig::new(Atk::Ot, 300, 4);
        let r = run_pri(&prf, 2, &cfg, || PriBayes { field: f.clone(), q_d: 1 }).unwrap();
        assert_eq!(r.estimate, 0.0);
        let r = run_pri(&prf, 4, &cfg, || PriBayes { field: f.clone(), q_d: 1 }).unwrap();
        assert!((r.estimate - 0.875).abs() < 3.0 * r.halfwidth, "{}", r.estimate);
        struct Dup;
        impl PriAdversary for Dup {
            fn run(&mut self, o: &mut PriOracle) -> Result<bool, GameError> {
                o.query(1)?;
                o.query(1)?;
                Ok(true)
            }
        }
        assert!(matches!(run_pri(&prf, 2, &cfg, || Dup), Err(GameError::DuplicateQuery)));
        let comp = PrfUnderTest::Comp { ell: 16 };
        let r = run_pri(&comp, 4, &cfg, || PriRandomGuess).unwrap();
        assert!(r.estimate <= 2.0 * r.halfwidth);
    }

    #[test]
    fn key_distribution_sums_to_one() {
        let ikem = toy(Mode::Cca, 0.5, 3.5);
        let d = exact_key_distribution(&ikem).unwrap();
        let s: BigRational = d.values().cloned().sum();
        assert!(s.is_one());
        let _ = ExactWeights { weights: vec![], denom: 1 };
    }

    fn he_scheme(mode: Mode, dem: DemMode) -> HybridScheme {
        let src = SourceSpec::bsc(0.0, 0.5, 520).unwrap();
        let ikem = Ikem::new(IkemParams::manual(mode, src, 8, dem.key_bits(), 0.0)).unwrap();
        HybridScheme::new(ikem, dem).unwrap()
    }

    #[test]
    fn he_games() {
        let cca = he_scheme(Mode::Cca, DemMode::Otcca);
        let mut cfg = GameConfig::new(Atk::Cca, 200, 3);
        cfg.q_d = 1;
        cfg.bound = Some(0.0);
        let r = run_he_ind(&cca, &cfg, || HeTamperQuery).unwrap();
        assert_eq!((r.game.as_str(), r.atk.as_str()), ("he", "cca"));
        assert!(!r.exceeded(), "{r:?}");

        let cea = he_scheme(Mode::Cea, DemMode::Ot);
        let cfg = GameConfig::new(Atk::Cea, 200, 3);
        assert!(!run_he_ind(&cea, &cfg, || HeRandomGuess).unwrap().exceeded());
        // No decryption oracle outside cca.
        assert!(matches!(run_he_ind(&cea, &cfg, || HeTamperQuery), Err(GameError::Budget(_))));
        // Mode-mismatched pairings are rejected.
        assert!(matches!(run_he_ind(&cca, &cfg, || HeRandomGuess), Err(GameError::Invalid(_))));
        let cfg = GameConfig::new(Atk::Cca, 10, 3);
        assert!(matches!(run_he_ind(&cea, &cfg, || HeRandomGuess), Err(GameError::Invalid(_))));
    }

    #[test]
    fn he_challenge_is_barred() {
        struct Replay;
        impl HeAdversary for Replay {
            fn choose(&mut self, _: &HeView, _: &mut HeOracle) -> Result<(Vec<u8>, Vec<u8>), GameError> {
                Ok((vec![1], vec![2]))
            }
            fn guess(&mut self, _: &HeView, c: &HybridCiphertext, o: &mut HeOracle) -> Result<bool, GameError> {
                o.decrypt(c).map(|_| true)
            }
        }
        let s = he_scheme(Mode::Cca, DemMode::Otcca);
        let mut cfg = GameConfig::new(Atk::Cca, 5, 1);
        cfg.q_d = 1;
        assert!(matches!(run_he_ind(&s, &cfg, || Replay), Err(GameError::BarredQuery)));
    }
}
