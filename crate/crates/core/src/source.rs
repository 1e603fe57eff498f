//! Product sources P_XYZ, sampling, reconciliation sets and entropy quantities.

use num_bigint::BigUint;
use num_rational::Ratio;
use rand::distributions::{Distribution, WeightedIndex};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::SourceError;
use crate::gf2::BitString;

/// Default ceiling on reconciliation set size.
pub const DEFAULT_RECON_CAP: usize = 1 << 20;

/// Ceiling on `|X|^n · |Y|^n · |Z|^n` for exact guessing-mass enumeration.
pub const EXACT_MASS_CAP: u128 = 1 << 28;

/// A string of symbols; the first symbol is the most significant.
pub type Symbols = Vec<u8>;

/// Integer weights over a common denominator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactWeights {
    pub weights: Vec<u64>,
    pub denom: u64,
}

/// Per-symbol joint distribution of (X, Y, Z) and the repetition count n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SourceDoc", into = "TableDoc")]
pub struct SourceSpec {
    alphabet: [usize; 3],
    n: usize,
    probs: Vec<f64>,
    exact: Option<ExactWeights>,
    costs: CostTable,
}

/// Conditional costs −log2 P(x|y), grouped into classes of equal value so
/// that the total cost of a string depends only on its class histogram.
#[derive(Clone, Debug, PartialEq)]
struct CostTable {
    /// Distinct finite cost values, ascending.
    classes: Vec<f64>,
    /// `class[x * |Y| + y]`, `None` when P(x|y) = 0.
    class: Vec<Option<usize>>,
}

/// One draw of the n-fold source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTriple {
    pub x: Symbols,
    pub y: Symbols,
    pub z: Symbols,
}

/// Candidate set for Bob's sample: strings within cost ν of `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconSet {
    pub y: Symbols,
    pub nu: f64,
    /// Members sorted by cost, then lexicographically.
    pub members: Vec<Symbols>,
}

/// Integrity guessing masses, stored as base-2 logarithms (−∞ for zero).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuessingMass {
    pub log2_x: f64,
    pub log2_y: f64,
}

impl GuessingMass {
    pub const ZERO: GuessingMass = GuessingMass {
        log2_x: f64::NEG_INFINITY,
        log2_y: f64::NEG_INFINITY,
    };

    pub fn x(&self) -> f64 {
        self.log2_x.exp2()
    }

    pub fn y(&self) -> f64 {
        self.log2_y.exp2()
    }

    /// `min(−log2 mass_x, −log2 mass_y)`.
    pub fn min_neg_log2(&self) -> f64 {
        (-self.log2_x).min(-self.log2_y)
    }
}

/// Bits used to encode one symbol of an alphabet of size `a`.
pub fn bits_per_symbol(a: usize) -> usize {
    (usize::BITS - (a.max(2) - 1).leading_zeros()) as usize
}

/// Packs a symbol string into bits, first symbol most significant.
pub fn symbols_to_bits(s: &[u8], alphabet: usize) -> BitString {
    let b = bits_per_symbol(alphabet);
    let mut bits = Vec::with_capacity(s.len() * b);
    for &sym in s {
        for k in (0..b).rev() {
            bits.push((sym >> k) & 1 == 1);
        }
    }
    BitString::from_bits_msb(&bits)
}

/// Inverse of [`symbols_to_bits`].
pub fn bits_to_symbols(bits: &BitString, alphabet: usize) -> Result<Symbols, SourceError> {
    let b = bits_per_symbol(alphabet);
    if bits.len() % b != 0 {
        return Err(SourceError::Invalid(format!(
            "{} bits is not a multiple of {b}",
            bits.len()
        )));
    }
    let all: Vec<bool> = bits.bits_msb().collect();
    all.chunks(b)
        .map(|c| {
            let v = c.iter().fold(0usize, |acc, &bit| (acc << 1) | bit as usize);
            if v >= alphabet {
                Err(SourceError::Symbol { symbol: v, size: alphabet })
            } else {
                Ok(v as u8)
            }
        })
        .collect()
}

/// All strings of length `n` over `0..a`, in lexicographic order.
pub fn all_strings(a: usize, n: usize) -> impl Iterator<Item = Symbols> {
    let total = (a as u128).pow(n as u32);
    (0..total).map(move |mut idx| {
        let mut s = vec![0u8; n];
        for slot in s.iter_mut().rev() {
            *slot = (idx % a as u128) as u8;
            idx /= a as u128;
        }
        s
    })
}

/// Lexicographic index of a string in [`all_strings`].
pub fn string_index(s: &[u8], a: usize) -> usize {
    s.iter().fold(0usize, |acc, &c| acc * a + c as usize)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Parses "a/b", decimal ("0.125", "1e-3") or integer text into a reduced ratio.
pub fn parse_ratio(text: &str) -> Option<(u64, u64)> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once('/') {
        let a: u128 = a.trim().parse().ok()?;
        let b: u128 = b.trim().parse().ok()?;
        if b == 0 {
            return None;
        }
        let g = gcd(a, b).max(1);
        return Some((u64::try_from(a / g).ok()?, u64::try_from(b / g).ok()?));
    }
    let (mant, exp) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.starts_with('-') || (int.is_empty() && frac.is_empty()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    if !digits.chars().all(|c| c.is_ascii_digit()) || digits.len() > 30 {
        return None;
    }
    let mut num: u128 = digits.parse().ok()?;
    let scale = exp - frac.len() as i32;
    let mut den: u128 = 1;
    if scale >= 0 {
        num = num.checked_mul(10u128.checked_pow(scale as u32)?)?;
    } else {
        den = 10u128.checked_pow((-scale) as u32)?;
    }
    let g = gcd(num, den).max(1);
    Some((u64::try_from(num / g).ok()?, u64::try_from(den / g).ok()?))
}

fn lcm(a: u64, b: u64) -> Option<u64> {
    let g = gcd(a as u128, b as u128) as u64;
    (a / g).checked_mul(b)
}

impl CostTable {
    fn build(alphabet: [usize; 3], probs: &[f64]) -> CostTable {
        let [ax, ay, az] = alphabet;
        let mut pxy = vec![0.0; ax * ay];
        for x in 0..ax {
            for y in 0..ay {
                pxy[x * ay + y] = (0..az).map(|z| probs[(x * ay + y) * az + z]).sum();
            }
        }
        let py: Vec<f64> = (0..ay).map(|y| (0..ax).map(|x| pxy[x * ay + y]).sum()).collect();
        let raw: Vec<Option<f64>> = (0..ax * ay)
            .map(|i| {
                let (p, q) = (pxy[i], py[i % ay]);
                (p > 0.0).then(|| -(p / q).log2()).map(|c| c.max(0.0))
            })
            .collect();
        let mut classes: Vec<f64> = raw.iter().flatten().copied().collect();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        let class = raw
            .iter()
            .map(|c| c.map(|v| classes.iter().position(|&u| u == v).expect("present")))
            .collect();
        CostTable { classes, class }
    }
}

impl SourceSpec {
    /// Builds a spec from a dense table indexed `(x*|Y| + y)*|Z| + z`.
    pub fn new(alphabet: [usize; 3], n: usize, probs: Vec<f64>) -> Result<Self, SourceError> {
        Self::validate_shape(alphabet, n, probs.len())?;
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(SourceError::Invalid("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 2f64.powi(-40) {
            return Err(SourceError::Invalid(format!("probabilities sum to {total}")));
        }
        let costs = CostTable::build(alphabet, &probs);
        Ok(SourceSpec {
            alphabet,
            n,
            probs,
            exact: None,
            costs,
        })
    }

    /// Builds a spec from integer weights over a common denominator.
    pub fn new_exact(
        alphabet: [usize; 3],
        n: usize,
        weights: Vec<u64>,
        denom: u64,
    ) -> Result<Self, SourceError> {
        Self::validate_shape(alphabet, n, weights.len())?;
        let total: u128 = weights.iter().map(|&w| w as u128).sum();
        if denom == 0 || total != denom as u128 {
            return Err(SourceError::Invalid(format!(
                "weights sum to {total}, expected {denom}"
            )));
        }
        let probs: Vec<f64> = weights.iter().map(|&w| w as f64 / denom as f64).collect();
        let costs = CostTable::build(alphabet, &probs);
        Ok(SourceSpec {
            alphabet,
            n,
            probs,
            exact: Some(ExactWeights { weights, denom }),
            costs,
        })
    }

    fn validate_shape(alphabet: [usize; 3], n: usize, len: usize) -> Result<(), SourceError> {
        if alphabet.iter().any(|&a| a == 0 || a > 256) {
            return Err(SourceError::Invalid("alphabet sizes must be in 1..=256".into()));
        }
        if n == 0 {
            return Err(SourceError::Invalid("n must be positive".into()));
        }
        if len != alphabet.iter().product::<usize>() {
            return Err(SourceError::Invalid("table size does not match alphabets".into()));
        }
        Ok(())
    }

    /// Sparse entries with exact ratios; falls back to floats when any entry
    /// is not representable or the common denominator overflows.
    pub fn from_entries(
        alphabet: [usize; 3],
        n: usize,
        entries: &[(usize, usize, usize, Prob)],
    ) -> Result<Self, SourceError> {
        let [ax, ay, az] = alphabet;
        let size = ax * ay * az;
        let idx = |&(x, y, z, _): &(usize, usize, usize, Prob)| -> Result<usize, SourceError> {
            if x >= ax || y >= ay || z >= az {
                return Err(SourceError::Invalid(format!("entry ({x},{y},{z}) out of range")));
            }
            Ok((x * ay + y) * az + z)
        };
        let ratios: Option<Vec<(u64, u64)>> = entries.iter().map(|e| e.3.ratio).collect();
        if let Some(ratios) = ratios {
            if let Some(denom) = ratios.iter().try_fold(1u64, |acc, &(_, d)| lcm(acc, d)) {
                let mut weights = vec![0u64; size];
                let mut ok = true;
                for (e, &(a, d)) in entries.iter().zip(&ratios) {
                    match a.checked_mul(denom / d) {
                        Some(w) => {
                            let slot = &mut weights[idx(e)?];
                            match slot.checked_add(w) {
                                Some(s) => *slot = s,
                                None => ok = false,
                            }
                        }
                        None => ok = false,
                    }
                }
                if ok {
                    return Self::new_exact(alphabet, n, weights, denom);
                }
            }
        }
        let mut probs = vec![0.0; size];
        for e in entries {
            probs[idx(e)?] += e.3.value;
        }
        Self::new(alphabet, n, probs)
    }

    /// X a uniform bit, Y = X ⊕ Ber(p), Z = X ⊕ Ber(q).
    pub fn bsc(p: f64, q: f64, n: usize) -> Result<Self, SourceError> {
        Self::bsc_prob(Prob::from_f64(p), Prob::from_f64(q), n)
    }

    fn bsc_prob(p: Prob, q: Prob, n: usize) -> Result<Self, SourceError> {
        for v in [p.value, q.value] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SourceError::Invalid(format!("crossover {v} outside [0,1]")));
            }
        }
        let mut entries = Vec::with_capacity(8);
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let py = if y == x { p.complement() } else { p };
                    let pz = if z == x { q.complement() } else { q };
                    entries.push((x, y, z, Prob::HALF.mul(&py).mul(&pz)));
                }
            }
        }
        Self::from_entries([2, 2, 2], n, &entries)
    }

    /// Parses the JSON source document.
    pub fn from_json(text: &str) -> Result<Self, SourceError> {
        let doc: SourceDoc =
            serde_json::from_str(text).map_err(|e| SourceError::Json(e.to_string()))?;
        Self::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TableDoc::from(self.clone())).expect("serializable")
    }

    /// Same per-symbol table with a different repetition count.
    pub fn with_n(&self, n: usize) -> Result<Self, SourceError> {
        if n == 0 {
            return Err(SourceError::Invalid("n must be positive".into()));
        }
        Ok(SourceSpec { n, ..self.clone() })
    }

    pub fn alphabet(&self) -> [usize; 3] {
        self.alphabet
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn exact(&self) -> Option<&ExactWeights> {
        self.exact.as_ref()
    }

    /// Exact rational mode: integer weights, alphabets ≤ 4 and n ≤ 16.
    pub fn is_exact_mode(&self) -> bool {
        self.exact.is_some() && self.alphabet.iter().all(|&a| a <= 4) && self.n <= 16
    }

    /// Width in bits of the packed encoding of an X string.
    pub fn x_bits(&self) -> usize {
        self.n * bits_per_symbol(self.alphabet[0])
    }

    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.alphabet[1] + y) * self.alphabet[2] + z
    }

    pub fn prob(&self, x: usize, y: usize, z: usize) -> f64 {
        self.probs[self.index(x, y, z)]
    }

    pub fn weight(&self, x: usize, y: usize, z: usize) -> Option<u64> {
        let i = self.index(x, y, z);
        self.exact.as_ref().map(|e| e.weights[i])
    }

    pub fn p_xy(&self, x: usize, y: usize) -> f64 {
        (0..self.alphabet[2]).map(|z| self.prob(x, y, z)).sum()
    }

    pub fn p_y(&self, y: usize) -> f64 {
        (0..self.alphabet[0]).map(|x| self.p_xy(x, y)).sum()
    }

    pub fn p_xz(&self, x: usize, z: usize) -> f64 {
        (0..self.alphabet[1]).map(|y| self.prob(x, y, z)).sum()
    }

    /// Per-symbol −log2 P(x|y); ∞ when zero.
    pub fn symbol_cost(&self, x: usize, y: usize) -> f64 {
        match self.costs.class[x * self.alphabet[1] + y] {
            Some(c) => self.costs.classes[c],
            None => f64::INFINITY,
        }
    }

    fn check(&self, s: &[u8], which: usize) -> Result<(), SourceError> {
        if s.len() != self.n {
            return Err(SourceError::Length {
                expected: self.n,
                got: s.len(),
            });
        }
        let size = self.alphabet[which];
        if let Some(&bad) = s.iter().find(|&&c| c as usize >= size) {
            return Err(SourceError::Symbol {
                symbol: bad as usize,
                size,
            });
        }
        Ok(())
    }

    /// I.i.d. per-symbol draws from the joint table.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> SampleTriple {
        let dist = WeightedIndex::new(&self.probs).expect("valid distribution");
        let [_, ay, az] = self.alphabet;
        let mut t = SampleTriple {
            x: Vec::with_capacity(self.n),
            y: Vec::with_capacity(self.n),
            z: Vec::with_capacity(self.n),
        };
        for _ in 0..self.n {
            let i = dist.sample(rng);
            t.x.push((i / (ay * az)) as u8);
            t.y.push((i / az % ay) as u8);
            t.z.push((i % az) as u8);
        }
        t
    }

    /// −log2 P_{X|Y}(x|y) for n-symbol strings; ∞ when impossible.
    ///
    /// Summed per cost class in ascending order, so strings with the same
    /// class histogram get bit-identical costs.
    pub fn cond_neg_log_prob(&self, x: &[u8], y: &[u8]) -> Result<f64, SourceError> {
        self.check(x, 0)?;
        self.check(y, 1)?;
        Ok(self.cost_unchecked(x, y))
    }

    fn cost_unchecked(&self, x: &[u8], y: &[u8]) -> f64 {
        let ay = self.alphabet[1];
        let mut counts = vec![0u64; self.costs.classes.len()];
        for (&a, &b) in x.iter().zip(y) {
            match self.costs.class[a as usize * ay + b as usize] {
                Some(c) => counts[c] += 1,
                None => return f64::INFINITY,
            }
        }
        counts
            .iter()
            .zip(&self.costs.classes)
            .map(|(&k, &v)| k as f64 * v)
            .sum()
    }

    /// `(c0, c1)` when X and Y are bits with a symmetric cost table and c0 < c1.
    fn symmetric_binary_costs(&self) -> Option<(f64, f64)> {
        if self.alphabet[0] != 2 || self.alphabet[1] != 2 {
            return None;
        }
        let (c00, c11) = (self.symbol_cost(0, 0), self.symbol_cost(1, 1));
        let (c10, c01) = (self.symbol_cost(1, 0), self.symbol_cost(0, 1));
        (c00 == c11 && c10 == c01 && c00.is_finite() && c00 < c10).then_some((c00, c10))
    }

    /// Hamming radius ⌊(ν − n·c0)/(c1 − c0)⌋ for binary symmetric sources.
    pub fn bsc_radius(&self, nu: f64) -> Option<i64> {
        let (c0, c1) = self.symmetric_binary_costs()?;
        let n = self.n as f64;
        if nu < n * c0 {
            return Some(-1);
        }
        if c1.is_infinite() {
            return Some(0);
        }
        Some((((nu - n * c0) / (c1 - c0)).floor() as i64).min(self.n as i64))
    }

    /// All x with −log2 P(x|y) ≤ ν, ordered by cost then lexicographically.
    pub fn recon_set(&self, y: &[u8], nu: f64, cap: usize) -> Result<ReconSet, SourceError> {
        self.check(y, 1)?;
        let mut members = if !(nu >= 0.0) {
            Vec::new()
        } else if self.symmetric_binary_costs().is_some() {
            self.recon_hamming(y, nu, cap)?
        } else {
            self.recon_branch_and_bound(y, nu, cap)?
        };
        let mut keyed: Vec<(f64, Symbols)> = members
            .drain(..)
            .map(|x| (self.cost_unchecked(&x, y), x))
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        Ok(ReconSet {
            y: y.to_vec(),
            nu,
            members: keyed.into_iter().map(|(_, x)| x).collect(),
        })
    }

    fn recon_hamming(&self, y: &[u8], nu: f64, cap: usize) -> Result<Vec<Symbols>, SourceError> {
        let n = self.n;
        let mut out = Vec::new();
        let mut size = 0u128;
        let mut binom = 1u128;
        for d in 0..=n {
            if d > 0 {
                binom = binom
                    .checked_mul((n - d + 1) as u128)
                    .ok_or(SourceError::ReconCap { cap })?
                    / d as u128;
            }
            let mut x = y.to_vec();
            for v in x.iter_mut().take(d) {
                *v ^= 1;
            }
            // Cost grows with distance on this path.
            if self.cost_unchecked(&x, y) > nu {
                break;
            }
            size += binom;
            if size > cap as u128 {
                return Err(SourceError::ReconCap { cap });
            }
            // All d-subsets of positions.
            let mut pos: Vec<usize> = (0..d).collect();
            loop {
                let mut x = y.to_vec();
                for &p in &pos {
                    x[p] ^= 1;
                }
                out.push(x);
                let mut k = d;
                while k > 0 && pos[k - 1] == n - d + k - 1 {
                    k -= 1;
                }
                if k == 0 {
                    break;
                }
                pos[k - 1] += 1;
                for j in k..d {
                    pos[j] = pos[j - 1] + 1;
                }
            }
        }
        Ok(out)
    }

    fn recon_branch_and_bound(
        &self,
        y: &[u8],
        nu: f64,
        cap: usize,
    ) -> Result<Vec<Symbols>, SourceError> {
        const SLACK: f64 = 1e-9;
        let n = self.n;
        let options: Vec<Vec<(u8, f64)>> = y
            .iter()
            .map(|&b| {
                let mut o: Vec<(u8, f64)> = (0..self.alphabet[0])
                    .map(|a| (a as u8, self.symbol_cost(a, b as usize)))
                    .filter(|(_, c)| c.is_finite())
                    .collect();
                o.sort_by(|p, q| p.1.total_cmp(&q.1));
                o
            })
            .collect();
        if options.iter().any(|o| o.is_empty()) {
            return Ok(Vec::new());
        }
        let mut min_rest = vec![0.0; n + 1];
        for i in (0..n).rev() {
            min_rest[i] = min_rest[i + 1] + options[i][0].1;
        }
        let mut out = Vec::new();
        let mut cur = vec![0u8; n];
        // Explicit DFS stack of (position, option index, accumulated cost).
        let mut stack: Vec<(usize, usize, f64)> = vec![(0, 0, 0.0)];
        while let Some((i, k, acc)) = stack.pop() {
            if i == n {
                if self.cost_unchecked(&cur, y) <= nu {
                    out.push(cur.clone());
                    if out.len() > cap {
                        return Err(SourceError::ReconCap { cap });
                    }
                }
                continue;
            }
            if k >= options[i].len() {
                continue;
            }
            let (sym, c) = options[i][k];
            if acc + c + min_rest[i + 1] > nu + SLACK {
                // Options are sorted, so later ones are no cheaper.
                continue;
            }
            stack.push((i, k + 1, acc));
            cur[i] = sym;
            stack.push((i + 1, 0, acc + c));
        }
        Ok(out)
    }

    /// H(X|Y) per symbol.
    pub fn shannon_cond_entropy(&self) -> f64 {
        let [ax, ay, _] = self.alphabet;
        let mut h = 0.0;
        for y in 0..ay {
            let py = self.p_y(y);
            for x in 0..ax {
                let pxy = self.p_xy(x, y);
                if pxy > 0.0 {
                    h -= pxy * (pxy / py).log2();
                }
            }
        }
        h.max(0.0)
    }

    /// Per-symbol guessing probability Σ_z max_x P(x,z).
    pub fn guess_prob_given_z(&self) -> f64 {
        let [ax, _, az] = self.alphabet;
        (0..az)
            .map(|z| (0..ax).map(|x| self.p_xz(x, z)).fold(0.0, f64::max))
            .sum()
    }

    /// Exact per-symbol guessing probability as a ratio of integers.
    pub fn guess_prob_given_z_exact(&self) -> Option<Ratio<BigUint>> {
        let e = self.exact.as_ref()?;
        let [ax, ay, az] = self.alphabet;
        let num: u64 = (0..az)
            .map(|z| {
                (0..ax)
                    .map(|x| (0..ay).map(|y| e.weights[self.index(x, y, z)]).sum::<u64>())
                    .max()
                    .unwrap_or(0)
            })
            .sum();
        Some(Ratio::new(BigUint::from(num), BigUint::from(e.denom)))
    }

    /// H̃∞(X|Z) per symbol; the n-fold value is n times this.
    pub fn avg_min_entropy_given_z(&self) -> f64 {
        (-self.guess_prob_given_z().log2()).max(0.0)
    }

    /// Crossover probabilities `(p, q)` when the table is the binary
    /// satellite source (X uniform, Y = X⊕Ber(p), Z = X⊕Ber(q)).
    pub fn bsc_params(&self) -> Option<(f64, f64)> {
        if self.alphabet != [2, 2, 2] {
            return None;
        }
        let p = self.p_xy(0, 1) + self.p_xy(1, 0);
        let q = self.p_xz(0, 1) + self.p_xz(1, 0);
        for x in 0..2 {
            for y in 0..2 {
                for z in 0..2 {
                    let py = if y == x { 1.0 - p } else { p };
                    let pz = if z == x { 1.0 - q } else { q };
                    if (self.prob(x, y, z) - 0.5 * py * pz).abs() > 1e-12 {
                        return None;
                    }
                }
            }
        }
        Some((p, q))
    }

    /// Integrity guessing masses: exact enumeration when feasible, otherwise
    /// the Hamming-ball closed form for binary satellite sources.
    pub fn guessing_mass(&self, nu: f64) -> Result<GuessingMass, SourceError> {
        if !(nu >= 0.0) {
            return Ok(GuessingMass::ZERO);
        }
        let [ax, ay, az] = self.alphabet;
        let space = (ax as u128 * ay as u128 * az as u128).checked_pow(self.n as u32);
        if space.is_some_and(|s| s <= EXACT_MASS_CAP) {
            return self.guessing_mass_exact(nu);
        }
        self.guessing_mass_bsc(nu).ok_or_else(|| {
            SourceError::TooLarge("guessing mass needs exact enumeration at this size".into())
        })
    }

    /// Exact guessing masses by enumeration over (x, y, z) strings.
    pub fn guessing_mass_exact(&self, nu: f64) -> Result<GuessingMass, SourceError> {
        if !(nu >= 0.0) {
            return Ok(GuessingMass::ZERO);
        }
        let [ax, ay, az] = self.alphabet;
        let n = self.n;
        let space = (ax as u128 * ay as u128 * az as u128).checked_pow(n as u32);
        if space.map_or(true, |s| s > EXACT_MASS_CAP) {
            return Err(SourceError::TooLarge(format!(
                "({ax}·{ay}·{az})^{n} exceeds the exact enumeration cap"
            )));
        }
        let xs: Vec<Symbols> = all_strings(ax, n).collect();
        let ys: Vec<Symbols> = all_strings(ay, n).collect();
        let zs: Vec<Symbols> = all_strings(az, n).collect();
        let member: Vec<Vec<bool>> = xs
            .iter()
            .map(|x| ys.iter().map(|y| self.cost_unchecked(x, y) <= nu).collect())
            .collect();
        let pxz: Vec<f64> = (0..ax * az).map(|i| self.p_xz(i / az, i % az)).collect();
        let pyz: Vec<f64> = (0..ay * az)
            .map(|i| (0..ax).map(|x| self.prob(x, i / az, i % az)).sum())
            .collect();
        let with_z = |table: &[f64], s: &[u8], z: &[u8]| -> f64 {
            s.iter()
                .zip(z)
                .map(|(&u, &c)| table[u as usize * az + c as usize])
                .product()
        };
        let (mut mx, mut my) = (0.0f64, 0.0f64);
        for z in &zs {
            let p_yz: Vec<f64> = ys.iter().map(|y| with_z(&pyz, y, z)).collect();
            let p_xz: Vec<f64> = xs.iter().map(|x| with_z(&pxz, x, z)).collect();
            let best_x = member
                .iter()
                .map(|row| row.iter().zip(&p_yz).filter(|(m, _)| **m).map(|(_, p)| p).sum::<f64>())
                .fold(0.0, f64::max);
            let best_y = (0..ys.len())
                .map(|j| {
                    member
                        .iter()
                        .zip(&p_xz)
                        .filter(|(row, _)| row[j])
                        .map(|(_, p)| p)
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            mx += best_x;
            my += best_y;
        }
        Ok(GuessingMass {
            log2_x: mx.log2(),
            log2_y: my.log2(),
        })
    }

    /// Closed form for binary satellite sources:
    /// mass_x = BinCDF(n, ρ, d), mass_y = BinCDF(n, q, d), ρ = p(1−q)+q(1−p).
    pub fn guessing_mass_bsc(&self, nu: f64) -> Option<GuessingMass> {
        let (p, q) = self.bsc_params()?;
        if p >= 0.5 {
            return None;
        }
        let d = self.bsc_radius(nu)?;
        if d < 0 {
            return Some(GuessingMass::ZERO);
        }
        let rho = p * (1.0 - q) + q * (1.0 - p);
        Some(GuessingMass {
            log2_x: log2_binom_cdf(self.n, rho.min(1.0 - rho), d as usize),
            log2_y: log2_binom_cdf(self.n, q.min(1.0 - q), d as usize),
        })
    }
}

/// log2 of Σ_{k=0}^{d} C(n,k) p^k (1−p)^(n−k).
pub fn log2_binom_cdf(n: usize, p: f64, d: usize) -> f64 {
    let d = d.min(n);
    if p == 0.0 {
        return 0.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_c = 0.0f64;
    let mut terms = Vec::with_capacity(d + 1);
    for k in 0..=d {
        if k > 0 {
            log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let t = log_c + k as f64 * lp + (n - k) as f64 * if lq.is_finite() { lq } else { 0.0 };
        if lq.is_infinite() && k < n {
            continue;
        }
        terms.push(t);
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    ((m + s.ln()) / std::f64::consts::LN_2).min(0.0)
}

/// Probability with an optional exact ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prob {
    pub value: f64,
    pub ratio: Option<(u64, u64)>,
}

impl Prob {
    const HALF: Prob = Prob {
        value: 0.5,
        ratio: Some((1, 2)),
    };

    /// Uses the shortest decimal representation of `v` as its exact value.
    pub fn from_f64(v: f64) -> Prob {
        Prob {
            value: v,
            ratio: parse_ratio(&format!("{v}")),
        }
    }

    pub fn parse(text: &str) -> Option<Prob> {
        let ratio = parse_ratio(text)?;
        Some(Prob {
            value: ratio.0 as f64 / ratio.1 as f64,
            ratio: Some(ratio),
        })
    }

    fn complement(&self) -> Prob {
        Prob {
            value: 1.0 - self.value,
            ratio: self
                .ratio
                .and_then(|(a, b)| b.checked_sub(a).map(|c| (c, b))),
        }
    }

    fn mul(&self, o: &Prob) -> Prob {
        let ratio = match (self.ratio, o.ratio) {
            (Some((a, b)), Some((c, d))) => a
                .checked_mul(c)
                .zip(b.checked_mul(d))
                .map(|(num, den)| {
                    let g = gcd(num as u128, den as u128).max(1) as u64;
                    (num / g, den / g)
                }),
            _ => None,
        };
        Prob {
            value: self.value * o.value,
            ratio,
        }
    }

    fn from_json(v: &Value) -> Result<Prob, SourceError> {
        match v {
            Value::Number(num) => {
                let value = num
                    .as_f64()
                    .ok_or_else(|| SourceError::Json(format!("bad probability {num}")))?;
                Ok(Prob {
                    value,
                    ratio: parse_ratio(&num.to_string()),
                })
            }
            Value::String(s) => {
                Prob::parse(s).ok_or_else(|| SourceError::Json(format!("bad probability {s:?}")))
            }
            other => Err(SourceError::Json(format!("bad probability {other}"))),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SourceDoc {
    Bsc {
        bsc: BscDoc,
    },
    Table {
        alphabet: [usize; 3],
        n: usize,
        pxyz: Vec<(usize, usize, usize, Value)>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BscDoc {
    p: Value,
    #[serde(default)]
    q: Option<Value>,
    n: usize,
}

#[derive(Serialize)]
struct TableDoc {
    alphabet: [usize; 3],
    n: usize,
    pxyz: Vec<(usize, usize, usize, Value)>,
}

impl TryFrom<SourceDoc> for SourceSpec {
    type Error = SourceError;

    fn try_from(doc: SourceDoc) -> Result<Self, SourceError> {
        match doc {
            SourceDoc::Bsc { bsc } => {
                let p = Prob::from_json(&bsc.p)?;
                let q = match &bsc.q {
                    Some(v) => Prob::from_json(v)?,
                    None => Prob::HALF,
                };
                SourceSpec::bsc_prob(p, q, bsc.n)
            }
            SourceDoc::Table { alphabet, n, pxyz } => {
                let entries = pxyz
                    .iter()
                    .map(|(x, y, z, v)| Ok((*x, *y, *z, Prob::from_json(v)?)))
                    .collect::<Result<Vec<_>, SourceError>>()?;
                SourceSpec::from_entries(alphabet, n, &entries)
            }
        }
    }
}

impl From<SourceSpec> for TableDoc {
    fn from(s: SourceSpec) -> TableDoc {
        let [ax, ay, az] = s.alphabet;
        let mut pxyz = Vec::new();
        for x in 0..ax {
            for y in 0..ay {
                for z in 0..az {
                    let i = s.index(x, y, z);
                    let v = match &s.exact {
                        Some(e) if e.weights[i] == 0 => continue,
                        Some(e) => {
                            let r = Ratio::new(e.weights[i], e.denom);
                            Value::String(format!("{}/{}", r.numer(), r.denom()))
                        }
                        None if s.probs[i] == 0.0 => continue,
                        None => serde_json::json!(s.probs[i]),
                    };
                    pxyz.push((x, y, z, v));
                }
            }
        }
        TableDoc {
            alphabet: s.alphabet,
            n: s.n,
            pxyz,
        }
    }
}

/// Exact n-fold probabilities as integer weights over `denom^n`.
#[cfg(test)]
pub(crate) fn nfold_weight(spec: &SourceSpec, x: &[u8], y: &[u8], z: &[u8]) -> Option<u128> {
    let mut w: u128 = 1;
    for i in 0..x.len() {
        w = w.checked_mul(spec.weight(x[i] as usize, y[i] as usize, z[i] as usize)? as u128)?;
    }
    Some(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy_bsc(n: usize) -> SourceSpec {
        SourceSpec::bsc(0.25, 0.5, n).unwrap()
    }

    #[test]
    fn bsc_is_exact() {
        let s = toy_bsc(4);
        assert!(s.is_exact_mode());
        assert_eq!(s.exact().unwrap().denom, 16);
        assert_eq!(s.weight(0, 0, 0), Some(3));
        assert_eq!(s.bsc_params(), Some((0.25, 0.5)));
    }

    #[test]
    fn parse_ratio_forms() {
        assert_eq!(parse_ratio("0.1"), Some((1, 10)));
        assert_eq!(parse_ratio("3/12"), Some((1, 4)));
        assert_eq!(parse_ratio("1e-3"), Some((1, 1000)));
        assert_eq!(parse_ratio("2.5E-1"), Some((1, 4)));
        assert_eq!(parse_ratio("1"), Some((1, 1)));
        assert_eq!(parse_ratio("-0.5"), None);
        assert_eq!(parse_ratio("1/0"), None);
    }

    #[test]
    fn point_mass_sample() {
        let mut w = vec![0u64; 8];
        w[0] = 1;
        let s = SourceSpec::new_exact([2, 2, 2], 5, w, 1).unwrap();
        let t = s.sample(&mut ChaCha20Rng::seed_from_u64(3));
        assert_eq!(t.x, vec![0; 5]);
        assert_eq!(t.y, vec![0; 5]);
        assert_eq!(t.z, vec![0; 5]);
    }

    #[test]
    fn toy_bsc_disagreement_rate() {
        let s = toy_bsc(100_000);
        let t = s.sample(&mut ChaCha20Rng::seed_from_u64(11));
        let d = t.x.iter().zip(&t.y).filter(|(a, b)| a != b).count();
        let rate = d as f64 / 1e5;
        assert!((rate - 0.25).abs() <= 0.01, "{rate}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = toy_bsc(64);
        let a = s.sample(&mut ChaCha20Rng::seed_from_u64(5));
        let b = s.sample(&mut ChaCha20Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn cost_examples() {
        let s = toy_bsc(4);
        let c = s.cond_neg_log_prob(&[0, 0, 0, 1], &[0, 0, 0, 0]).unwrap();
        let expect = 3.0 * -(0.75f64).log2() + 2.0;
        assert!((c - expect).abs() < 1e-12 && (c - 3.245).abs() < 1e-3);
        let noiseless = SourceSpec::bsc(0.0, 0.5, 3).unwrap();
        assert_eq!(noiseless.cond_neg_log_prob(&[1, 0, 1], &[1, 0, 1]).unwrap(), 0.0);
        assert_eq!(
            noiseless.cond_neg_log_prob(&[1, 0, 1], &[1, 1, 1]).unwrap(),
            f64::INFINITY
        );
        assert!(s.cond_neg_log_prob(&[0, 0], &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn recon_examples() {
        let s = toy_bsc(4);
        let y = [0u8; 4];
        assert_eq!(s.recon_set(&y, 2.5, 100).unwrap().members, vec![vec![0u8; 4]]);
        let r = s.recon_set(&y, 3.5, 100).unwrap();
        assert_eq!(r.members.len(), 5);
        assert_eq!(r.members[0], vec![0u8; 4]);
        assert_eq!(r.members[1], vec![0, 0, 0, 1]);
        assert_eq!(r.members[4], vec![1, 0, 0, 0]);
        assert!(s.recon_set(&y, 0.0, 100).unwrap().members.is_empty());
        assert_eq!(
            SourceSpec::bsc(0.0, 0.5, 4).unwrap().recon_set(&y, 0.0, 100).unwrap().members,
            vec![vec![0u8; 4]]
        );
        assert!(s.recon_set(&y, -1.0, 100).unwrap().members.is_empty());
        assert!(matches!(
            s.recon_set(&y, 3.5, 4),
            Err(SourceError::ReconCap { cap: 4 })
        ));
        assert_eq!(s.bsc_radius(3.5), Some(1));
    }

    #[test]
    fn entropy_examples() {
        let s = toy_bsc(1);
        assert!((s.shannon_cond_entropy() - 0.811278).abs() < 1e-6);
        assert!((s.avg_min_entropy_given_z() - 1.0).abs() < 1e-12);
        assert_eq!(SourceSpec::bsc(0.0, 0.0, 1).unwrap().shannon_cond_entropy(), 0.0);
        assert_eq!(SourceSpec::bsc(0.0, 0.0, 1).unwrap().avg_min_entropy_given_z(), 0.0);
        assert!((SourceSpec::bsc(0.5, 0.5, 1).unwrap().shannon_cond_entropy() - 1.0).abs() < 1e-12);
        let leaky = SourceSpec::bsc(0.1, 0.25, 1).unwrap();
        assert!((leaky.avg_min_entropy_given_z() + (0.75f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn guessing_mass_examples() {
        let s = toy_bsc(4);
        let m = s.guessing_mass_exact(3.5).unwrap();
        assert!((m.x() - 5.0 / 16.0).abs() < 1e-12);
        let closed = s.guessing_mass_bsc(3.5).unwrap();
        assert!((closed.x() - 5.0 / 16.0).abs() < 1e-12);
        assert_eq!(s.guessing_mass(-1.0).unwrap(), GuessingMass::ZERO);
        // Z = Y: with a noiseless X|Y link and full leakage the mass is 1.
        let full = SourceSpec::bsc(0.0, 0.0, 3).unwrap();
        assert!((full.guessing_mass_exact(0.0).unwrap().x() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_and_shorthand() {
        let s = SourceSpec::from_json(r#"{"bsc":{"p":0.25,"q":"1/2","n":4}}"#).unwrap();
        assert_eq!(s, toy_bsc(4));
        let back = SourceSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let t = SourceSpec::from_json(
            r#"{"alphabet":[3,3,1],"n":2,"pxyz":[[0,0,0,0.3],[1,1,0,0.3],[2,2,0,0.2],[2,0,0,0.2]]}"#,
        )
        .unwrap();
        assert_eq!(t.exact().unwrap().denom, 10);
        assert!(SourceSpec::from_json(r#"{"alphabet":[2,2,2],"n":2,"pxyz":[[0,0,0,0.5]]}"#).is_err());
        assert!(SourceSpec::from_json("{").is_err());
    }

    #[test]
    fn symbol_packing() {
        assert_eq!(bits_per_symbol(1), 1);
        assert_eq!(bits_per_symbol(2), 1);
        assert_eq!(bits_per_symbol(3), 2);
        assert_eq!(bits_per_symbol(5), 3);
        let b = symbols_to_bits(&[2, 0, 1], 3);
        assert_eq!(b.to_u64(), Some(0b10_00_01));
        assert_eq!(bits_to_symbols(&b, 3).unwrap(), vec![2, 0, 1]);
        assert!(bits_to_symbols(&BitString::from_u64(2, 3).unwrap(), 3).is_err());
    }

    #[test]
    fn min_entropy_additivity_exact() {
        // Full enumeration of Σ_z max_x P(x,z) over n-fold strings equals G1^n.
        for spec in [
            SourceSpec::bsc(0.1, 0.3, 1).unwrap(),
            SourceSpec::from_json(
                r#"{"alphabet":[3,2,2],"n":1,"pxyz":[[0,0,0,"1/8"],[1,0,1,"1/4"],[2,1,0,"1/8"],[0,1,1,"1/4"],[1,1,0,"1/4"]]}"#,
            )
            .unwrap(),
        ] {
            let g1 = spec.guess_prob_given_z_exact().unwrap();
            let e = spec.exact().unwrap().clone();
            let [ax, ay, az] = spec.alphabet();
            for n in 1..=4u32 {
                let mut num = 0u128;
                for z in all_strings(az, n as usize) {
                    let mut best = 0u128;
                    for x in all_strings(ax, n as usize) {
                        let mut tot = 0u128;
                        for y in all_strings(ay, n as usize) {
                            tot += nfold_weight(&spec, &x, &y, &z).unwrap();
                        }
                        best = best.max(tot);
                    }
                    num += best;
                }
                let lhs = Ratio::new(BigUint::from(num), BigUint::from(e.denom).pow(n));
                assert_eq!(lhs, num_traits::pow(g1.clone(), n as usize), "n={n}");
            }
        }
    }

    /// Independent oracle: direct triple loop over strings.
    fn brute_mass(spec: &SourceSpec, nu: f64) -> (f64, f64) {
        let [ax, ay, az] = spec.alphabet();
        let n = spec.n();
        let p = |x: &[u8], y: &[u8], z: &[u8]| -> f64 {
            (0..n).map(|i| spec.prob(x[i] as usize, y[i] as usize, z[i] as usize)).product()
        };
        let inr = |x: &[u8], y: &[u8]| spec.cond_neg_log_prob(x, y).unwrap() <= nu;
        let (mut mx, mut my) = (0.0, 0.0);
        for z in all_strings(az, n) {
            let mut bx = 0.0f64;
            for x in all_strings(ax, n) {
                let mut s = 0.0;
                for y2 in all_strings(ay, n) {
                    if inr(&x, &y2) {
                        s += all_strings(ax, n).map(|x3| p(&x3, &y2, &z)).sum::<f64>();
                    }
                }
                bx = bx.max(s);
            }
            let mut by = 0.0f64;
            for y in all_strings(ay, n) {
                let mut s = 0.0;
                for x2 in all_strings(ax, n) {
                    if inr(&x2, &y) {
                        s += all_strings(ay, n).map(|y3| p(&x2, &y3, &z)).sum::<f64>();
                    }
                }
                by = by.max(s);
            }
            mx += bx;
            my += by;
        }
        (mx, my)
    }

    #[test]
    fn guessing_mass_matches_brute_force() {
        for (p, q, n, nu) in [(0.25, 0.5, 4, 3.5), (0.1, 0.3, 5, 4.0), (0.2, 0.1, 6, 6.0), (0.05, 0.45, 3, 1.0)] {
            let s = SourceSpec::bsc(p, q, n).unwrap();
            let (bx, by) = brute_mass(&s, nu);
            let m = s.guessing_mass_exact(nu).unwrap();
            assert!((m.x() - bx).abs() < 1e-12, "{p} {q} {n}");
            assert!((m.y() - by).abs() < 1e-12, "{p} {q} {n}");
            let c = s.guessing_mass_bsc(nu).unwrap();
            assert!((c.x() - bx).abs() < 1e-12, "closed x {p} {q} {n}");
            assert!((c.y() - by).abs() < 1e-12, "closed y {p} {q} {n}");
        }
        let t = SourceSpec::from_json(
            r#"{"alphabet":[3,2,2],"n":3,"pxyz":[[0,0,0,"1/8"],[1,0,1,"1/4"],[2,1,0,"1/8"],[0,1,1,"1/4"],[1,1,0,"1/4"]]}"#,
        )
        .unwrap();
        let (bx, by) = brute_mass(&t, 4.5);
        let m = t.guessing_mass_exact(4.5).unwrap();
        assert!((m.x() - bx).abs() < 1e-12 && (m.y() - by).abs() < 1e-12);
    }

    #[test]
    fn binom_cdf_values() {
        assert!((log2_binom_cdf(4, 0.5, 1).exp2() - 5.0 / 16.0).abs() < 1e-12);
        assert!((log2_binom_cdf(10, 0.3, 10).exp2() - 1.0).abs() < 1e-12);
        assert!((log2_binom_cdf(3, 0.2, 0).exp2() - 0.512).abs() < 1e-12);
        assert!(log2_binom_cdf(2000, 0.5, 3).is_finite());
    }

    fn arb_spec() -> impl Strategy<Value = SourceSpec> {
        (prop::collection::vec(0u64..5, 8), 1usize..=12).prop_filter_map("nonzero", |(w, n)| {
            let d: u64 = w.iter().sum();
            (d > 0).then(|| SourceSpec::new_exact([2, 2, 2], n, w, d).unwrap())
        })
    }

    fn arb_ternary() -> impl Strategy<Value = SourceSpec> {
        (prop::collection::vec(0u64..4, 9), 1usize..=6).prop_filter_map("nonzero", |(w, n)| {
            let d: u64 = w.iter().sum();
            (d > 0).then(|| SourceSpec::new_exact([3, 3, 1], n, w, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn recon_membership_exhaustive(spec in arb_spec(), nu in 0.0f64..14.0, seed in any::<u64>()) {
            let y = spec.sample(&mut ChaCha20Rng::seed_from_u64(seed)).y;
            let r = spec.recon_set(&y, nu, 1 << 13).unwrap();
            let brute: Vec<Symbols> = all_strings(2, spec.n())
                .filter(|x| spec.cond_neg_log_prob(x, &y).unwrap() <= nu)
                .collect();
            let mut got = r.members.clone();
            got.sort();
            prop_assert_eq!(&got, &brute);
            prop_assert!((r.members.len() as f64) <= nu.exp2());
            // cost-then-lex order
            for w in r.members.windows(2) {
                let (a, b) = (spec.cond_neg_log_prob(&w[0], &y).unwrap(), spec.cond_neg_log_prob(&w[1], &y).unwrap());
                prop_assert!(a < b || (a == b && w[0] < w[1]));
            }
        }

        #[test]
        fn hamming_path_agrees_with_branch_and_bound(p in 0.01f64..0.45, n in 1usize..=12, nu in 0.0f64..12.0, seed in any::<u64>()) {
            let spec = SourceSpec::bsc(p, 0.5, n).unwrap();
            let y = spec.sample(&mut ChaCha20Rng::seed_from_u64(seed)).y;
            let fast = spec.recon_set(&y, nu, 1 << 13).unwrap().members;
            let mut slow = spec.recon_branch_and_bound(&y, nu, 1 << 13).unwrap();
            slow.sort_by(|a, b| spec.cost_unchecked(a, &y).total_cmp(&spec.cost_unchecked(b, &y)).then_with(|| a.cmp(b)));
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn recon_general_alphabet(spec in arb_ternary(), nu in 0.0f64..10.0, seed in any::<u64>()) {
            let y = spec.sample(&mut ChaCha20Rng::seed_from_u64(seed)).y;
            let r = spec.recon_set(&y, nu, 1 << 12).unwrap();
            let count = all_strings(3, spec.n())
                .filter(|x| spec.cond_neg_log_prob(x, &y).unwrap() <= nu)
                .count();
            prop_assert_eq!(r.members.len(), count);
            prop_assert!((count as f64) <= nu.exp2());
        }
    }
}
