//! Min-entropy, block-normalised min-entropy and bit autocorrelation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::BitStream;

/// Largest block length accepted by [`normalized_min_entropy`].
pub const MAX_BLOCK_BITS: u32 = 16;

/// Blocks required per symbol of the block alphabet.
pub const BLOCKS_PER_SYMBOL: usize = 100;

/// Binomial standard errors added to the top probability by
/// [`min_entropy_conservative`].
pub const CONSERVATIVE_SIGMAS: f64 = 5.0;

/// Occurrence counts over the alphabet `0 .. 2^alphabet_bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalDist {
    counts: Vec<u64>,
    alphabet_bits: u32,
    total: u64,
}

impl EmpiricalDist {
    pub fn new(alphabet_bits: u32) -> Self {
        assert!(
            alphabet_bits <= 24,
            "alphabet of 2^{alphabet_bits} symbols is too large"
        );
        EmpiricalDist {
            counts: vec![0; 1 << alphabet_bits],
            alphabet_bits,
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if !counts.len().is_power_of_two() {
            return Err(Error::config(format!(
                "alphabet size must be a power of two, got {}",
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(EmpiricalDist {
            alphabet_bits: counts.len().trailing_zeros(),
            counts,
            total,
        })
    }

    #[inline]
    pub fn add(&mut self, symbol: u32) {
        self.counts[symbol as usize] += 1;
        self.total += 1;
    }

    /// Pools another distribution over the same alphabet into this one.
    pub fn merge(&mut self, other: &EmpiricalDist) {
        assert_eq!(self.alphabet_bits, other.alphabet_bits);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, symbol: u32) -> u64 {
        self.counts.get(symbol as usize).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn alphabet_bits(&self) -> u32 {
        self.alphabet_bits
    }

    /// Most frequent symbol and its count; ties go to the smallest symbol.
    pub fn max_count(&self) -> (u32, u64) {
        let (sym, &c) = self
            .counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("alphabet is never empty");
        (sym as u32, c)
    }

    /// Symbols with a non-zero count, in ascending order.
    pub fn nonzero(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| (s as u32, c))
    }
}

/// Exact histogram of `alphabet_bits`-wide words.
pub fn histogram(words: &[u16], alphabet_bits: u32) -> Result<EmpiricalDist> {
    if words.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut dist = EmpiricalDist::new(alphabet_bits);
    let limit = 1u32 << alphabet_bits;
    for &w in words {
        if w as u32 >= limit {
            return Err(Error::config(format!(
                "word {w} outside the {alphabet_bits}-bit alphabet"
            )));
        }
        dist.add(w as u32);
    }
    Ok(dist)
}

/// `-log2(max_i p_i)` of the empirical distribution.
pub fn min_entropy(dist: &EmpiricalDist) -> Result<f64> {
    if dist.total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let (_, max) = dist.max_count();
    Ok((dist.total as f64 / max as f64).log2())
}

/// Min-entropy with the top probability raised by five binomial standard errors.
pub fn min_entropy_conservative(dist: &EmpiricalDist) -> Result<f64> {
    if dist.total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let n = dist.total as f64;
    let p = dist.max_count().1 as f64 / n;
    let upper = (p + CONSERVATIVE_SIGMAS * (p * (1.0 - p) / n).sqrt()).min(1.0);
    Ok(-upper.log2())
}

/// Distribution of consecutive non-overlapping `l`-bit blocks.
///
/// The first bit of a block becomes the symbol's least significant bit.
/// A trailing partial block is ignored.
pub fn block_distribution(bits: &BitStream, l: u32) -> Result<EmpiricalDist> {
    if !(1..=MAX_BLOCK_BITS).contains(&l) {
        return Err(Error::config(format!(
            "block length must be 1..={MAX_BLOCK_BITS}, got {l}"
        )));
    }
    let needed = BLOCKS_PER_SYMBOL << l;
    if bits.len() < needed {
        return Err(Error::insufficient(
            format!("normalized min-entropy at block length {l} (bits)"),
            needed,
            bits.len(),
        ));
    }
    let mut dist = EmpiricalDist::new(l);
    let n_blocks = bits.len() / l as usize;
    // Read several blocks per window to keep the bit reads cheap.
    let per_read = (56 / l) as usize;
    let mask = (1u64 << l) - 1;
    let mut block = 0;
    while block < n_blocks {
        let take = per_read.min(n_blocks - block);
        let mut window = bits.read_bits(block * l as usize, take as u32 * l);
        for _ in 0..take {
            dist.add((window & mask) as u32);
            window >>= l;
        }
        block += take;
    }
    Ok(dist)
}

/// `H_min(l) / l` over `l`-bit blocks of `bits`.
///
/// Needs at least `100 · 2^l` bits so every symbol has a chance to appear.
pub fn normalized_min_entropy(bits: &BitStream, l: u32) -> Result<f64> {
    let dist = block_distribution(bits, l)?;
    let h = min_entropy(&dist)?;
    // max p >= 2^-l, so this can only exceed l through rounding.
    assert!(
        h <= l as f64 + 1e-9,
        "block min-entropy {h} exceeds block length {l}"
    );
    Ok((h / l as f64).min(1.0))
}

/// Distribution of all `n - l + 1` overlapping `l`-bit windows.
///
/// A diagnostic companion to [`block_distribution`]: on periodic input the two
/// differ (alternating bits give one non-overlapping 2-bit block but two
/// overlapping windows).
pub fn window_distribution(bits: &BitStream, l: u32) -> Result<EmpiricalDist> {
    if !(1..=MAX_BLOCK_BITS).contains(&l) {
        return Err(Error::config(format!(
            "block length must be 1..={MAX_BLOCK_BITS}, got {l}"
        )));
    }
    let needed = BLOCKS_PER_SYMBOL << l;
    if bits.len() < needed {
        return Err(Error::insufficient(
            format!("overlapping min-entropy at block length {l} (bits)"),
            needed,
            bits.len(),
        ));
    }
    let mut dist = EmpiricalDist::new(l);
    for i in 0..=bits.len() - l as usize {
        dist.add(bits.read_bits(i, l) as u32);
    }
    Ok(dist)
}

/// `H_min / l` over overlapping `l`-bit windows.
pub fn normalized_min_entropy_overlapping(bits: &BitStream, l: u32) -> Result<f64> {
    let h = min_entropy(&window_distribution(bits, l)?)?;
    Ok((h / l as f64).min(1.0))
}

/// Bit autocorrelation at lags `1..=max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    /// `rho[k - 1]` is the coefficient at lag `k`.
    pub rho: Vec<f64>,
    /// Signed mean over lags.
    pub mean: f64,
    /// Mean of `|rho|` over lags.
    pub mean_abs: f64,
    pub max_abs: f64,
    pub bit_len: usize,
}

impl Autocorrelation {
    pub fn max_lag(&self) -> usize {
        self.rho.len()
    }

    /// Standard error of a single coefficient under independence.
    pub fn null_std(&self) -> f64 {
        1.0 / (self.bit_len as f64).sqrt()
    }
}

/// Bits as little-endian u64 words with one zero word of padding.
fn as_words(bits: &BitStream) -> Vec<u64> {
    let bytes = bits.as_bytes();
    let mut words: Vec<u64> = bytes
        .chunks(8)
        .map(|c| {
            let mut buf = [0u8; 8];
            buf[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(buf)
        })
        .collect();
    words.push(0);
    words
}

struct LagContext {
    words: Vec<u64>,
    n: usize,
    mean: f64,
}

impl LagContext {
    fn new(bits: &BitStream) -> Result<Self> {
        let n = bits.len();
        if n < 2 {
            return Err(Error::insufficient("autocorrelation (bits)", 2, n));
        }
        let ones = bits.count_ones();
        if ones == 0 || ones == n {
            return Err(Error::ZeroVariance(format!(
                "all {n} bits are {}; autocorrelation is undefined",
                if ones == 0 { 0 } else { 1 }
            )));
        }
        Ok(LagContext {
            words: as_words(bits),
            n,
            mean: (2.0 * ones as f64 - n as f64) / n as f64,
        })
    }

    #[inline]
    fn word_at(&self, bit: usize) -> u64 {
        let (q, s) = (bit / 64, bit % 64);
        if s == 0 {
            self.words[q]
        } else {
            (self.words[q] >> s) | (self.words[q + 1] << (64 - s))
        }
    }

    /// Number of `i < n - k` with `bit_i != bit_{i+k}`.
    fn disagreements(&self, k: usize) -> u64 {
        let m = self.n - k;
        let full = m / 64;
        let mut d: u64 = 0;
        for j in 0..full {
            d += (self.words[j] ^ self.word_at(64 * j + k)).count_ones() as u64;
        }
        let tail = m % 64;
        if tail > 0 {
            let x = self.words[full] ^ self.word_at(64 * full + k);
            d += (x & ((1u64 << tail) - 1)).count_ones() as u64;
        }
        d
    }

    /// Sum of the ±1 values over bit positions `range`.
    fn signed_sum(&self, range: std::ops::Range<usize>) -> f64 {
        let len = range.len();
        let ones = range
            .filter(|&i| (self.words[i / 64] >> (i % 64)) & 1 == 1)
            .count();
        2.0 * ones as f64 - len as f64
    }

    fn rho(&self, k: usize) -> f64 {
        let n = self.n;
        let m = (n - k) as f64;
        let mu = self.mean;
        let total = mu * n as f64;
        let head = total - self.signed_sum(n - k..n);
        let tail = total - self.signed_sum(0..k);
        let cross = m - 2.0 * self.disagreements(k) as f64;
        let cov = (cross - mu * (head + tail) + m * mu * mu) / m;
        (cov / (1.0 - mu * mu)).clamp(-1.0, 1.0)
    }
}

/// Pearson correlation of the ±1-mapped bits with themselves shifted by `k`.
///
/// Lag 0 gives 1 for any non-constant input.
pub fn autocorrelation_at(bits: &BitStream, k: usize) -> Result<f64> {
    let ctx = LagContext::new(bits)?;
    if k >= ctx.n {
        return Err(Error::insufficient(
            format!("autocorrelation at lag {k} (bits)"),
            k + 1,
            ctx.n,
        ));
    }
    Ok(ctx.rho(k))
}

/// Autocorrelation at lags `1..=max_lag`; needs more than `10 · max_lag` bits.
///
/// Each coefficient subtracts the sample mean and divides by the sample variance
/// of the whole sequence, averaging the lagged products over the `n - k`
/// overlapping positions.
pub fn autocorrelation(bits: &BitStream, max_lag: usize) -> Result<Autocorrelation> {
    if max_lag == 0 {
        return Err(Error::config("max_lag must be at least 1"));
    }
    if bits.len() <= 10 * max_lag {
        return Err(Error::insufficient(
            format!("autocorrelation up to lag {max_lag} (bits)"),
            10 * max_lag + 1,
            bits.len(),
        ));
    }
    let ctx = LagContext::new(bits)?;
    let rho: Vec<f64> = (1..=max_lag).map(|k| ctx.rho(k)).collect();
    let lags = rho.len() as f64;
    Ok(Autocorrelation {
        mean: rho.iter().sum::<f64>() / lags,
        mean_abs: rho.iter().map(|r| r.abs()).sum::<f64>() / lags,
        max_abs: rho.iter().fold(0.0, |a, r| a.max(r.abs())),
        rho,
        bit_len: bits.len(),
    })
}

/// One point of the normalised min-entropy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEntropy {
    pub l: u32,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Min-entropy of the word distribution in bits.
    pub h_min: f64,
    pub h_min_conservative: f64,
    pub alphabet_bits: u32,
    /// Number of words behind `h_min`.
    pub sample_size: u64,
    pub normalized: Vec<BlockEntropy>,
    pub autocorr: Vec<f64>,
    pub autocorr_mean: f64,
    pub autocorr_mean_abs: f64,
    pub autocorr_max_abs: f64,
    pub bit_len: usize,
}

/// Which analyses [`entropy_report`] runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub l_min: u32,
    pub l_max: u32,
    pub max_lag: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            l_min: 1,
            l_max: 8,
            max_lag: 100,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_min < 1 || self.l_min > self.l_max || self.l_max > MAX_BLOCK_BITS {
            return Err(Error::config(format!(
                "block lengths must satisfy 1 <= l_min <= l_max <= {MAX_BLOCK_BITS}, got {}..={}",
                self.l_min, self.l_max
            )));
        }
        if self.max_lag == 0 {
            return Err(Error::config("max_lag must be at least 1"));
        }
        Ok(())
    }
}

/// Word min-entropy plus the block and lag analyses of `bits`.
pub fn entropy_report(
    words: &EmpiricalDist,
    bits: &BitStream,
    cfg: &AnalysisConfig,
) -> Result<EntropyReport> {
    cfg.validate()?;
    let normalized = (cfg.l_min..=cfg.l_max)
        .map(|l| normalized_min_entropy(bits, l).map(|normalized| BlockEntropy { l, normalized }))
        .collect::<Result<Vec<_>>>()?;
    let ac = autocorrelation(bits, cfg.max_lag)?;
    Ok(EntropyReport {
        h_min: min_entropy(words)?,
        h_min_conservative: min_entropy_conservative(words)?,
        alphabet_bits: words.alphabet_bits(),
        sample_size: words.total(),
        normalized,
        autocorr_mean: ac.mean,
        autocorr_mean_abs: ac.mean_abs,
        autocorr_max_abs: ac.max_abs,
        autocorr: ac.rho,
        bit_len: bits.len(),
    })
}

/// Distribution of consecutive `m`-bit symbols of a packed extractor output.
pub fn symbol_distribution(bits: &BitStream, m: u32) -> Result<EmpiricalDist> {
    if !(1..=MAX_BLOCK_BITS).contains(&m) {
        return Err(Error::config(format!(
            "symbol width must be 1..={MAX_BLOCK_BITS}, got {m}"
        )));
    }
    let n = bits.len() / m as usize;
    if n == 0 {
        return Err(Error::EmptyDistribution);
    }
    let mut dist = EmpiricalDist::new(m);
    for i in 0..n {
        dist.add(bits.read_bits(i * m as usize, m) as u32);
    }
    Ok(dist)
}
