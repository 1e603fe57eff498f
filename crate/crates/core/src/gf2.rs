//! Binary extension fields GF(2^m) and MSB-first bit strings.
//!
//! Field elements and bit strings store their value as little-endian `u64`
//! words; bit 1 of a string (in the `block` sense) is its most significant bit.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use rand::RngCore;
use smallvec::{smallvec, SmallVec};

use crate::error::GfError;

/// Largest supported field width.
pub const MAX_FIELD_BITS: usize = 4096;

type Words = SmallVec<[u64; 4]>;

fn word_count(bits: usize) -> usize {
    bits.div_ceil(64)
}

fn mask_top(words: &mut [u64], bits: usize) {
    let rem = bits % 64;
    if rem != 0 {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << rem) - 1;
        }
    }
}

fn get_bit(words: &[u64], i: usize) -> bool {
    words.get(i / 64).is_some_and(|w| (w >> (i % 64)) & 1 == 1)
}

fn flip_bit(words: &mut [u64], i: usize) {
    words[i / 64] ^= 1u64 << (i % 64);
}

fn degree(words: &[u64]) -> Option<usize> {
    for (idx, &w) in words.iter().enumerate().rev() {
        if w != 0 {
            return Some(idx * 64 + 63 - w.leading_zeros() as usize);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Bit strings
// ---------------------------------------------------------------------------

/// Fixed-length bit string. Bit 1 is the most significant bit.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    len: usize,
    words: Words,
}

impl BitString {
    pub fn zero(len: usize) -> Self {
        BitString {
            len,
            words: smallvec![0; word_count(len)],
        }
    }

    pub fn from_u64(len: usize, value: u64) -> Result<Self, GfError> {
        if len < 64 && value >> len != 0 {
            return Err(GfError::ValueTooWide { bits: len });
        }
        let mut s = Self::zero(len);
        if len > 0 {
            s.words[0] = value;
        }
        Ok(s)
    }

    /// Builds from little-endian words; bits above `len` must be clear.
    pub fn from_words(len: usize, words: &[u64]) -> Result<Self, GfError> {
        let mut s = Self::zero(len);
        for (i, &w) in words.iter().enumerate() {
            if i < s.words.len() {
                s.words[i] = w;
            } else if w != 0 {
                return Err(GfError::ValueTooWide { bits: len });
            }
        }
        let before = s.words.clone();
        mask_top(&mut s.words, len);
        if before != s.words {
            return Err(GfError::ValueTooWide { bits: len });
        }
        Ok(s)
    }

    /// Builds from bits given most-significant first.
    pub fn from_bits_msb(bits: &[bool]) -> Self {
        let len = bits.len();
        let mut s = Self::zero(len);
        for (k, &b) in bits.iter().enumerate() {
            if b {
                flip_bit(&mut s.words, len - 1 - k);
            }
        }
        s
    }

    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut s = Self::zero(len);
        for w in s.words.iter_mut() {
            *w = rng.next_u64();
        }
        mask_top(&mut s.words, len);
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Value as `u64` when it fits.
    pub fn to_u64(&self) -> Option<u64> {
        if self.words.iter().skip(1).any(|&w| w != 0) {
            return None;
        }
        Some(self.words.first().copied().unwrap_or(0))
    }

    /// Bit `i` (1-indexed, MSB first).
    pub fn bit(&self, i: usize) -> Result<bool, GfError> {
        if i == 0 || i > self.len {
            return Err(GfError::BlockRange { i, j: i, len: self.len });
        }
        Ok(get_bit(&self.words, self.len - i))
    }

    /// Bits in MSB-first order.
    pub fn bits_msb(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).rev().map(move |k| get_bit(&self.words, k))
    }

    /// Bits `i..=j`, 1-indexed from the most significant end.
    pub fn block(&self, i: usize, j: usize) -> Result<BitString, GfError> {
        if i == 0 || i > j || j > self.len {
            return Err(GfError::BlockRange { i, j, len: self.len });
        }
        let out_len = j - i + 1;
        let shift = self.len - j;
        Ok(self.shr(shift).truncate_low(out_len))
    }

    /// Top `t` bits.
    pub fn prefix(&self, t: usize) -> Result<BitString, GfError> {
        if t == 0 {
            return Ok(BitString::zero(0));
        }
        self.block(1, t)
    }

    fn shr(&self, shift: usize) -> BitString {
        let mut out = BitString::zero(self.len);
        let ws = shift / 64;
        let bs = shift % 64;
        for k in 0..out.words.len() {
            let lo = self.words.get(k + ws).copied().unwrap_or(0);
            let hi = self.words.get(k + ws + 1).copied().unwrap_or(0);
            out.words[k] = if bs == 0 { lo } else { (lo >> bs) | (hi << (64 - bs)) };
        }
        out
    }

    fn truncate_low(&self, len: usize) -> BitString {
        let mut words: Words = self.words.iter().copied().take(word_count(len)).collect();
        words.resize(word_count(len), 0);
        mask_top(&mut words, len);
        BitString { len, words }
    }

    /// Zero-extends (on the most significant side) to `len` bits.
    pub fn widen(&self, len: usize) -> Result<BitString, GfError> {
        if len < self.len && degree(&self.words).is_some_and(|d| d >= len) {
            return Err(GfError::ValueTooWide { bits: len });
        }
        Ok(self.truncate_low(len))
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString, GfError> {
        if self.len != other.len {
            return Err(GfError::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(other.words.iter()) {
            *a ^= b;
        }
        Ok(out)
    }

    /// `self ∥ low`, with `self` occupying the most significant bits.
    pub fn concat(&self, low: &BitString) -> BitString {
        let len = self.len + low.len;
        let mut out = low.truncate_low(len);
        let ws = low.len / 64;
        let bs = low.len % 64;
        for (k, &w) in self.words.iter().enumerate() {
            out.words[k + ws] |= w << bs;
            if bs != 0 && k + ws + 1 < out.words.len() {
                out.words[k + ws + 1] |= w >> (64 - bs);
            }
        }
        out
    }

    /// Splits into (high `len - low_len` bits, low `low_len` bits).
    pub fn split(&self, low_len: usize) -> Result<(BitString, BitString), GfError> {
        if low_len > self.len {
            return Err(GfError::BlockRange {
                i: 1,
                j: low_len,
                len: self.len,
            });
        }
        let high = self.shr(low_len).truncate_low(self.len - low_len);
        let low = self.truncate_low(low_len);
        Ok((high, low))
    }

    /// Big-endian bytes, `ceil(len/8)` long, zero padded at the top.
    pub fn to_bytes_be(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        let mut out = vec![0u8; nbytes];
        for (k, byte) in out.iter_mut().rev().enumerate() {
            let w = self.words.get(k / 8).copied().unwrap_or(0);
            *byte = (w >> ((k % 8) * 8)) as u8;
        }
        out
    }

    /// Inverse of [`to_bytes_be`](Self::to_bytes_be). Rejects set padding bits.
    pub fn from_bytes_be(len: usize, bytes: &[u8]) -> Result<Self, GfError> {
        let nbytes = len.div_ceil(8);
        if bytes.len() != nbytes {
            return Err(GfError::EncodingLength {
                expected: nbytes,
                got: bytes.len(),
            });
        }
        let mut s = Self::zero(len);
        for (k, &byte) in bytes.iter().rev().enumerate() {
            s.words[k / 8] |= (byte as u64) << ((k % 8) * 8);
        }
        if degree(&s.words).is_some_and(|d| d >= len) {
            return Err(GfError::NonzeroPadding);
        }
        Ok(s)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes_be())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({}; ", self.len)?;
        if self.len <= 64 {
            for b in self.bits_msb() {
                f.write_str(if b { "1" } else { "0" })?;
            }
        } else {
            f.write_str(&self.to_hex())?;
        }
        f.write_str(")")
    }
}

// ---------------------------------------------------------------------------
// Polynomial helpers over GF(2), used for irreducibility testing
// ---------------------------------------------------------------------------

fn poly_mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let p = clmul64(x, y);
            out[i + j] ^= p as u64;
            out[i + j + 1] ^= (p >> 64) as u64;
        }
    }
    out
}

fn poly_rem(a: &[u64], f: &[u64]) -> Vec<u64> {
    let df = degree(f).expect("nonzero modulus");
    let mut r = a.to_vec();
    while let Some(d) = degree(&r) {
        if d < df {
            break;
        }
        // r ^= f << (d - df), word at a time
        let shift = d - df;
        let (ws, bs) = (shift / 64, shift % 64);
        for (k, &w) in f.iter().enumerate() {
            if w == 0 {
                continue;
            }
            r[k + ws] ^= w << bs;
            if bs != 0 && k + ws + 1 < r.len() {
                r[k + ws + 1] ^= w >> (64 - bs);
            }
        }
    }
    r.truncate(word_count(df).max(1));
    r
}

fn poly_gcd(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    while degree(&b).is_some() {
        let r = poly_rem(&a, &b);
        a = b;
        b = r;
    }
    a
}

fn poly_is_one(a: &[u64]) -> bool {
    degree(a) == Some(0)
}

fn poly_xor_x(a: &mut Vec<u64>) {
    if a.is_empty() {
        a.push(0);
    }
    a[0] ^= 2;
}

/// Rabin's irreducibility test for a polynomial of degree `m`.
fn is_irreducible_rabin(f: &[u64], m: usize) -> bool {
    if m < 2 {
        return m == 1;
    }
    let ctx = FieldCtx {
        m,
        low: (0..m).rev().filter(|&e| get_bit(f, e)).collect(),
    };
    let mut x: Words = smallvec![0; word_count(m)];
    x[0] = 2;
    // x^(2^k) mod f
    let x_pow2 = |k: usize| -> Words {
        let mut cur = x.clone();
        for _ in 0..k {
            cur = ctx.mul_words(&cur, &cur);
        }
        cur
    };
    if x_pow2(m) != x {
        return false;
    }
    let primes: Vec<usize> = (2..=m).filter(|&p| m % p == 0 && is_prime(p)).collect();
    for p in primes {
        let mut g = x_pow2(m / p).to_vec();
        poly_xor_x(&mut g);
        if !poly_is_one(&poly_gcd(f, &g)) {
            return false;
        }
    }
    true
}

/// Exhaustive trial division for degree `m ≤ 32`.
fn is_irreducible_trial(f: u64, m: usize) -> bool {
    if m == 0 {
        return false;
    }
    for d in 1..=m / 2 {
        for g in (1u64 << d)..(1u64 << (d + 1)) {
            if poly_rem(&[f], &[g]).iter().all(|&w| w == 0) {
                return false;
            }
        }
    }
    true
}

fn is_prime(p: usize) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| p % d != 0)
}

/// Checks irreducibility of the polynomial with the given exponent set.
pub fn is_irreducible(exponents: &[usize]) -> bool {
    let Some(&m) = exponents.iter().max() else {
        return false;
    };
    let mut words = vec![0u64; word_count(m + 1)];
    for &e in exponents {
        flip_bit(&mut words, e);
    }
    if m <= 32 {
        is_irreducible_trial(words[0], m)
    } else {
        is_irreducible_rabin(&words, m)
    }
}

#[inline]
fn clmul64(a: u64, b: u64) -> u128 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("pclmulqdq") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { clmul64_hw(a, b) };
        }
    }
    clmul64_soft(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq", enable = "sse2")]
unsafe fn clmul64_hw(a: u64, b: u64) -> u128 {
    use std::arch::x86_64::{_mm_clmulepi64_si128, _mm_set_epi64x, _mm_storeu_si128};
    let r = _mm_clmulepi64_si128(_mm_set_epi64x(0, a as i64), _mm_set_epi64x(0, b as i64), 0);
    let mut out = 0u128;
    _mm_storeu_si128(&mut out as *mut u128 as *mut _, r);
    out
}

/// Four-bit windowed carryless multiply.
fn clmul64_soft(a: u64, b: u64) -> u128 {
    let mut table = [0u128; 16];
    for i in 1..16 {
        table[i] = if i % 2 == 0 {
            table[i / 2] << 1
        } else {
            table[i - 1] ^ a as u128
        };
    }
    let mut r = 0u128;
    for k in (0..16).rev() {
        r = (r << 4) ^ table[((b >> (4 * k)) & 15) as usize];
    }
    r
}

// ---------------------------------------------------------------------------
// Reduction polynomial table
// ---------------------------------------------------------------------------

/// Middle exponents of the lowest-weight irreducible per width: the trinomial
/// `x^m + x^k + 1` with smallest `k`, otherwise the pentanomial with
/// lexicographically smallest `(a, b, c)`.
const TABLE: &[(usize, &[usize])] = &[
    (1, &[]), (2, &[1]), (3, &[1]), (4, &[1]), (5, &[2]), (6, &[1]), (7, &[1]),
    (8, &[4, 3, 1]), (9, &[1]), (10, &[3]), (11, &[2]), (12, &[3]), (13, &[4, 3, 1]),
    (14, &[5]), (15, &[1]), (16, &[5, 3, 1]), (17, &[3]), (18, &[3]), (19, &[5, 2, 1]),
    (20, &[3]), (21, &[2]), (22, &[1]), (23, &[5]), (24, &[4, 3, 1]), (25, &[3]),
    (26, &[4, 3, 1]), (27, &[5, 2, 1]), (28, &[1]), (29, &[2]), (30, &[1]), (31, &[3]),
    (32, &[7, 3, 2]), (33, &[10]), (34, &[7]), (35, &[2]), (36, &[9]), (37, &[6, 4, 1]),
    (38, &[6, 5, 1]), (39, &[4]), (40, &[5, 4, 3]), (41, &[3]), (42, &[7]),
    (43, &[6, 4, 3]), (44, &[5]), (45, &[4, 3, 1]), (46, &[1]), (47, &[5]),
    (48, &[5, 3, 2]), (49, &[9]), (50, &[4, 3, 2]), (51, &[6, 3, 1]), (52, &[3]),
    (53, &[6, 2, 1]), (54, &[9]), (55, &[7]), (56, &[7, 4, 2]), (57, &[4]), (58, &[19]),
    (59, &[7, 4, 2]), (60, &[1]), (61, &[5, 2, 1]), (62, &[29]), (63, &[1]),
    (64, &[4, 3, 1]), (80, &[9, 4, 2]), (96, &[10, 9, 6]), (128, &[7, 2, 1]),
    (256, &[10, 5, 2]), (260, &[15]), (384, &[12, 3, 2]), (512, &[8, 5, 2]),
    (520, &[15, 11, 2]), (600, &[9, 5, 2]), (1024, &[19, 6, 1]), (1200, &[15, 9, 6]),
];

/// Widths covered by the built-in table.
pub fn table_widths() -> impl Iterator<Item = usize> {
    TABLE.iter().map(|(m, _)| *m)
}

/// Full exponent list (descending, including `m` and `0`) of the built-in
/// polynomial for `m`, if tabulated.
pub fn table_poly(m: usize) -> Option<Vec<usize>> {
    TABLE.iter().find(|(w, _)| *w == m).map(|(_, mid)| {
        let mut e = vec![m];
        e.extend_from_slice(mid);
        e.push(0);
        e
    })
}

/// Lowest-weight irreducible for `m`, by the same rule as the table.
fn search_poly(m: usize) -> Vec<usize> {
    if m == 1 {
        return vec![1, 0];
    }
    for k in 1..m {
        let e = vec![m, k, 0];
        if is_irreducible(&e) {
            return e;
        }
    }
    for a in 3..m {
        for b in 2..a {
            for c in 1..b {
                let e = vec![m, a, b, c, 0];
                if is_irreducible(&e) {
                    return e;
                }
            }
        }
    }
    unreachable!("every degree ≥ 2 has an irreducible of weight ≤ 5 in the searched range")
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// The field GF(2^m) with a fixed reduction polynomial.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldCtx {
    m: usize,
    /// Exponents of the reduction polynomial below `m`, descending.
    low: Vec<usize>,
}

/// Shared handle to a field.
pub type Field = Arc<FieldCtx>;

fn cache() -> &'static Mutex<HashMap<usize, Field>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Field>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl FieldCtx {
    /// The default field of width `m` (built-in or searched polynomial).
    pub fn new(m: usize) -> Result<Field, GfError> {
        if m == 0 || m > MAX_FIELD_BITS {
            return Err(GfError::UnsupportedWidth(m));
        }
        if let Some(f) = cache().lock().expect("field cache poisoned").get(&m) {
            return Ok(f.clone());
        }
        let exps = table_poly(m).unwrap_or_else(|| search_poly(m));
        let field = Arc::new(FieldCtx {
            m,
            low: exps[1..].to_vec(),
        });
        cache()
            .lock()
            .expect("field cache poisoned")
            .insert(m, field.clone());
        Ok(field)
    }

    /// A field with an explicit reduction polynomial, given by its exponents.
    pub fn with_poly(exponents: &[usize]) -> Result<Field, GfError> {
        let mut e = exponents.to_vec();
        e.sort_unstable_by(|a, b| b.cmp(a));
        e.dedup();
        let m = *e.first().ok_or(GfError::UnsupportedWidth(0))?;
        if m == 0 || m > MAX_FIELD_BITS {
            return Err(GfError::UnsupportedWidth(m));
        }
        if !is_irreducible(&e) {
            return Err(GfError::Reducible);
        }
        Ok(Arc::new(FieldCtx { m, low: e[1..].to_vec() }))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Exponents of the reduction polynomial, descending, including `m`.
    pub fn poly_exponents(&self) -> Vec<usize> {
        let mut e = vec![self.m];
        e.extend_from_slice(&self.low);
        e
    }

    /// Reduction polynomial as an (m+1)-bit string.
    pub fn reduction_poly(&self) -> BitString {
        let mut s = BitString::zero(self.m + 1);
        for e in self.poly_exponents() {
            flip_bit(&mut s.words, e);
        }
        s
    }

    pub fn zero(self: &Arc<Self>) -> Fe {
        Fe {
            field: self.clone(),
            words: smallvec![0; word_count(self.m)],
        }
    }

    pub fn one(self: &Arc<Self>) -> Fe {
        let mut z = self.zero();
        z.words[0] = 1;
        z
    }

    pub fn from_u64(self: &Arc<Self>, v: u64) -> Result<Fe, GfError> {
        self.element(&BitString::from_u64(self.m, v)?)
    }

    /// Interprets an m-bit string as a field element.
    pub fn element(self: &Arc<Self>, bits: &BitString) -> Result<Fe, GfError> {
        if bits.len() != self.m {
            return Err(GfError::LengthMismatch {
                left: self.m,
                right: bits.len(),
            });
        }
        Ok(Fe {
            field: self.clone(),
            words: bits.words.clone(),
        })
    }

    /// Embeds a string of at most m bits by zero extension.
    pub fn embed(self: &Arc<Self>, bits: &BitString) -> Result<Fe, GfError> {
        if bits.len() > self.m {
            return Err(GfError::ValueTooWide { bits: self.m });
        }
        self.element(&bits.widen(self.m)?)
    }

    pub fn random<R: RngCore + ?Sized>(self: &Arc<Self>, rng: &mut R) -> Fe {
        Fe {
            field: self.clone(),
            words: BitString::random(self.m, rng).words,
        }
    }

    pub fn from_bytes_be(self: &Arc<Self>, bytes: &[u8]) -> Result<Fe, GfError> {
        self.element(&BitString::from_bytes_be(self.m, bytes)?)
    }

    /// All elements in increasing integer order (small fields only).
    pub fn elements(self: &Arc<Self>) -> impl Iterator<Item = Fe> + '_ {
        assert!(self.m <= 24, "exhaustive iteration is limited to m ≤ 24");
        (0..1u64 << self.m).map(move |v| self.from_u64(v).expect("in range"))
    }

    fn reduce_u128(&self, mut p: u128) -> u64 {
        let m = self.m;
        let mask = (1u128 << m) - 1;
        while p >> m != 0 {
            let h = p >> m;
            p &= mask;
            for &e in &self.low {
                p ^= h << e;
            }
        }
        p as u64
    }

    fn reduce_words(&self, mut p: Vec<u64>) -> Words {
        let m = self.m;
        let nw = word_count(m);
        loop {
            let (ws, bs) = (m / 64, m % 64);
            let hi: Vec<u64> = (ws..p.len())
                .map(|k| {
                    let lo = p[k] >> bs;
                    let up = if bs == 0 { 0 } else { p.get(k + 1).map_or(0, |w| w << (64 - bs)) };
                    lo | up
                })
                .collect();
            if hi.iter().all(|&w| w == 0) {
                break;
            }
            for w in p.iter_mut().skip(nw) {
                *w = 0;
            }
            mask_top(&mut p[..nw], m);
            for &e in &self.low {
                let (es, eb) = (e / 64, e % 64);
                for (k, &h) in hi.iter().enumerate() {
                    if h == 0 {
                        continue;
                    }
                    p[k + es] ^= h << eb;
                    if eb != 0 && k + es + 1 < p.len() {
                        p[k + es + 1] ^= h >> (64 - eb);
                    }
                }
            }
        }
        let mut out: Words = p.into_iter().take(nw).collect();
        out.resize(nw, 0);
        out
    }

    fn mul_words(&self, a: &[u64], b: &[u64]) -> Words {
        if self.m <= 64 {
            smallvec![self.reduce_u128(clmul64(a[0], b[0]))]
        } else {
            self.reduce_words(poly_mul(a, b))
        }
    }
}

impl fmt::Debug for FieldCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{}) mod {:?}", self.m, self.poly_exponents())
    }
}

/// An element of a binary extension field.
#[derive(Clone)]
pub struct Fe {
    field: Field,
    words: Words,
}

impl Fe {
    pub fn field(&self) -> &Field {
        &self.field
    }

    fn check(&self, other: &Fe) -> Result<(), GfError> {
        if Arc::ptr_eq(&self.field, &other.field) || *self.field == *other.field {
            Ok(())
        } else {
            Err(GfError::ContextMismatch {
                left: self.field.m,
                right: other.field.m,
            })
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_one(&self) -> bool {
        self.words[0] == 1 && self.words[1..].iter().all(|&w| w == 0)
    }

    pub fn add(&self, other: &Fe) -> Result<Fe, GfError> {
        self.check(other)?;
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(other.words.iter()) {
            *a ^= b;
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Fe) -> Result<Fe, GfError> {
        self.check(other)?;
        Ok(Fe {
            field: self.field.clone(),
            words: self.field.mul_words(&self.words, &other.words),
        })
    }

    pub fn square(&self) -> Fe {
        Fe {
            field: self.field.clone(),
            words: self.field.mul_words(&self.words, &self.words),
        }
    }

    pub fn pow(&self, mut e: u64) -> Fe {
        let mut base = self.clone();
        let mut acc = self.field.one();
        while e != 0 {
            if e & 1 == 1 {
                acc = Fe {
                    field: self.field.clone(),
                    words: self.field.mul_words(&acc.words, &base.words),
                };
            }
            e >>= 1;
            if e != 0 {
                base = base.square();
            }
        }
        acc
    }

    /// Multiplicative inverse, `a^(2^m - 2)`.
    pub fn inv(&self) -> Result<Fe, GfError> {
        if self.is_zero() {
            return Err(GfError::ZeroInverse);
        }
        // a^(2^m-2) = Π_{i=1}^{m-1} a^(2^i)
        let mut acc = self.field.one();
        let mut sq = self.clone();
        for _ in 1..self.field.m {
            sq = sq.square();
            acc = Fe {
                field: self.field.clone(),
                words: self.field.mul_words(&acc.words, &sq.words),
            };
        }
        Ok(acc)
    }

    pub fn to_bits(&self) -> BitString {
        BitString {
            len: self.field.m,
            words: self.words.clone(),
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.to_bits().to_u64()
    }

    pub fn to_bytes_be(&self) -> Vec<u8> {
        self.to_bits().to_bytes_be()
    }
}

impl PartialEq for Fe {
    fn eq(&self, other: &Self) -> bool {
        self.check(other).is_ok() && self.words == other.words
    }
}

impl Eq for Fe {}

impl std::hash::Hash for Fe {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.field.m.hash(state);
        self.words.hash(state);
    }
}

impl fmt::Debug for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fe[2^{}]({})", self.field.m, self.to_bits().to_hex())
    }
}

/// Block extraction on a bit string; see [`BitString::block`].
pub fn block(x: &BitString, i: usize, j: usize) -> Result<BitString, GfError> {
    x.block(i, j)
}
