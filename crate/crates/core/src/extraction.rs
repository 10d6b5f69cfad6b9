//! Randomness extraction: XOR of non-overlapping sample pairs, m-LSB retention,
//! and LSB-first bit packing.
//!
//! At 1.8 GSPS the XOR halves the word rate to 0.9 G words/s; keeping 6 bits per
//! word gives 5.4 Gbps. [`Extractor`] is the streaming form used everywhere:
//! an odd trailing sample is carried into the next chunk, so any chunking of the
//! input produces the same bits as a one-shot run. At the end of the stream the
//! carry is dropped and counted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

use crate::acquisition::AdcStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    /// Least-significant bits kept from every XOR word.
    pub m_lsb: u32,
    /// Width of the ADC words.
    pub sample_bits: u32,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            m_lsb: 6,
            sample_bits: 12,
        }
    }
}

impl ExtractorConfig {
    pub fn new(m_lsb: u32) -> Result<Self> {
        let cfg = ExtractorConfig {
            m_lsb,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.sample_bits) {
            return Err(Error::config(format!(
                "sample_bits must be 1..=16, got {}",
                self.sample_bits
            )));
        }
        if !(1..=12).contains(&self.m_lsb) || self.m_lsb > self.sample_bits {
            return Err(Error::config(format!(
                "m_lsb must be 1..=12 and <= sample_bits ({}), got {}",
                self.sample_bits, self.m_lsb
            )));
        }
        Ok(())
    }

    pub fn mask(&self) -> u16 {
        ((1u32 << self.m_lsb) - 1) as u16
    }

    /// Output bits per input sample (`m / 2`).
    pub fn bits_per_sample(&self) -> f64 {
        self.m_lsb as f64 / 2.0
    }

    /// Bits produced from `n_codes` ADC samples.
    pub fn output_bits(&self, n_codes: usize) -> usize {
        n_codes / 2 * self.m_lsb as usize
    }
}

/// Packed bit sequence, LSB-first within each byte.
///
/// Bit `i` lives in byte `i / 8` at bit position `i % 8`. Pad bits in the final
/// byte are always zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitStream {
    payload: Vec<u8>,
    bit_len: usize,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps packed bytes. `payload` must be exactly `ceil(bit_len / 8)` bytes
    /// with zero pad bits.
    pub fn from_bytes(payload: Vec<u8>, bit_len: usize) -> Result<Self> {
        if payload.len() != bit_len.div_ceil(8) {
            return Err(Error::format(
                "bit stream",
                format!("{} bytes cannot hold exactly {bit_len} bits", payload.len()),
            ));
        }
        let tail = bit_len % 8;
        if tail != 0 && payload[payload.len() - 1] >> tail != 0 {
            return Err(Error::format(
                "bit stream",
                "non-zero pad bits in the final byte",
            ));
        }
        Ok(BitStream { payload, bit_len })
    }

    /// Parses a string of `'0'`/`'1'` characters; the first character is bit 0.
    /// Whitespace is ignored.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let mut out = BitStream::new();
        for c in s.chars().filter(|c| !c.is_whitespace()) {
            match c {
                '0' => out.push_bits(0, 1),
                '1' => out.push_bits(1, 1),
                other => {
                    return Err(Error::format(
                        "bit string",
                        format!("unexpected character {other:?}"),
                    ))
                }
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.bit_len
    }

    pub fn is_empty(&self) -> bool {
        self.bit_len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.payload
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(
            i < self.bit_len,
            "bit index {i} out of range {}",
            self.bit_len
        );
        (self.payload[i / 8] >> (i % 8)) & 1 == 1
    }

    /// One byte (0 or 1) per bit.
    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.bit_len)
            .map(|i| (self.payload[i / 8] >> (i % 8)) & 1)
            .collect()
    }

    pub fn count_ones(&self) -> usize {
        // pad bits are zero
        self.payload.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// `n <= 57` bits starting at bit `offset`, bit `offset` in the result's LSB.
    #[inline]
    pub fn read_bits(&self, offset: usize, n: u32) -> u64 {
        debug_assert!(n <= 57);
        debug_assert!(offset + n as usize <= self.bit_len);
        let byte = offset / 8;
        let mut buf = [0u8; 8];
        let avail = (self.payload.len() - byte).min(8);
        buf[..avail].copy_from_slice(&self.payload[byte..byte + avail]);
        let word = u64::from_le_bytes(buf) >> (offset % 8);
        if n == 64 {
            word
        } else {
            word & ((1u64 << n) - 1)
        }
    }

    /// Appends the low `n <= 57` bits of `value`.
    pub fn push_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 57);
        if n == 0 {
            return;
        }
        let value = value & ((1u64 << n) - 1);
        let used = (self.bit_len % 8) as u32;
        let mut acc = value;
        let mut pending = n;
        if used != 0 {
            let last = self.payload.len() - 1;
            self.payload[last] |= (acc << used) as u8;
            let took = (8 - used).min(pending);
            acc >>= took;
            pending -= took;
        }
        while pending > 0 {
            self.payload.push(acc as u8);
            acc >>= 8;
            pending = pending.saturating_sub(8);
        }
        self.bit_len += n as usize;
    }

    pub fn append(&mut self, other: &BitStream) {
        if self.bit_len.is_multiple_of(8) {
            self.payload.extend_from_slice(&other.payload);
            self.bit_len += other.bit_len;
            return;
        }
        let mut offset = 0;
        while offset < other.bit_len {
            let n = (other.bit_len - offset).min(56) as u32;
            self.push_bits(other.read_bits(offset, n), n);
            offset += n as usize;
        }
    }

    /// Copy of bits `start .. start + len`.
    pub fn slice(&self, start: usize, len: usize) -> BitStream {
        assert!(start + len <= self.bit_len, "slice out of range");
        let mut out = BitStream {
            payload: Vec::with_capacity(len.div_ceil(8)),
            bit_len: 0,
        };
        if start.is_multiple_of(8) {
            out.payload
                .extend_from_slice(&self.payload[start / 8..(start + len).div_ceil(8)]);
            out.bit_len = len;
            let tail = len % 8;
            if tail != 0 {
                let last = out.payload.len() - 1;
                out.payload[last] &= (1u8 << tail) - 1;
            }
            return out;
        }
        let mut offset = start;
        while offset < start + len {
            let n = (start + len - offset).min(56) as u32;
            out.push_bits(self.read_bits(offset, n), n);
            offset += n as usize;
        }
        out
    }

    /// Splits into consecutive pieces of `len` bits; a short tail is discarded.
    pub fn chunks(&self, len: usize) -> Vec<BitStream> {
        assert!(len > 0);
        (0..self.bit_len / len)
            .map(|i| self.slice(i * len, len))
            .collect()
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut out = BitStream::new();
        for b in iter {
            out.push_bits(b as u64, 1);
        }
        out
    }
}

/// Result of pairing a batch of samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorPairs {
    pub words: Vec<u16>,
    /// Unpaired trailing sample, to be paired with the next chunk's first sample.
    pub carry: Option<u16>,
}

/// `codes[2i] ^ codes[2i + 1]` for every complete pair.
pub fn xor_pairs(codes: &[u16]) -> XorPairs {
    let pairs = codes.chunks_exact(2);
    let carry = pairs.remainder().first().copied();
    XorPairs {
        words: pairs.map(|p| p[0] ^ p[1]).collect(),
        carry,
    }
}

/// Keeps the `m_lsb` least-significant bits of every word.
pub fn take_lsb(words: &[u16], cfg: &ExtractorConfig) -> Vec<u16> {
    let mask = cfg.mask();
    words.iter().map(|w| w & mask).collect()
}

/// Appends `m_lsb` bits per word, LSB-first.
pub fn pack_bits(words: &[u16], cfg: &ExtractorConfig) -> BitStream {
    let mask = cfg.mask();
    let mut out = BitStream {
        payload: Vec::with_capacity(words.len() * cfg.m_lsb as usize / 8 + 1),
        bit_len: 0,
    };
    for &w in words {
        debug_assert!(w <= mask, "word {w:#x} wider than {} bits", cfg.m_lsb);
        out.push_bits((w & mask) as u64, cfg.m_lsb);
    }
    out
}

/// Counters kept by [`Extractor`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractStats {
    pub samples_in: u64,
    pub pairs: u64,
    /// Unpaired samples discarded at end of stream (0 or 1).
    pub dropped_samples: u64,
}

/// Streaming XOR → m-LSB → pack transform.
#[derive(Debug, Clone)]
pub struct Extractor {
    cfg: ExtractorConfig,
    carry: Option<u16>,
    bytes: Vec<u8>,
    acc: u32,
    acc_bits: u32,
    stats: ExtractStats,
}

impl Extractor {
    pub fn new(cfg: ExtractorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Extractor {
            cfg,
            carry: None,
            bytes: Vec::new(),
            acc: 0,
            acc_bits: 0,
            stats: ExtractStats::default(),
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.cfg
    }

    /// Bits produced so far.
    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.acc_bits as usize
    }

    pub fn push(&mut self, mut codes: &[u16]) {
        if codes.is_empty() {
            return;
        }
        self.stats.samples_in += codes.len() as u64;
        if let Some(first) = self.carry.take() {
            self.emit_one(first ^ codes[0]);
            codes = &codes[1..];
        }
        // Single pairs until the output is byte aligned (at most 7).
        while self.acc_bits != 0 && codes.len() >= 2 {
            self.emit_one(codes[0] ^ codes[1]);
            codes = &codes[2..];
        }
        if self.acc_bits == 0 {
            let body = codes.len() / 16 * 16;
            pack_groups(&codes[..body], self.cfg.m_lsb, &mut self.bytes);
            self.stats.pairs += body as u64 / 2;
            codes = &codes[body..];
        }
        let pairs = codes.chunks_exact(2);
        self.carry = pairs.remainder().first().copied();
        for p in pairs {
            self.emit_one(p[0] ^ p[1]);
        }
    }

    #[inline]
    fn emit_one(&mut self, word: u16) {
        self.stats.pairs += 1;
        self.acc |= ((word & self.cfg.mask()) as u32) << self.acc_bits;
        self.acc_bits += self.cfg.m_lsb;
        while self.acc_bits >= 8 {
            self.bytes.push(self.acc as u8);
            self.acc >>= 8;
            self.acc_bits -= 8;
        }
    }

    /// Ends the stream. A pending unpaired sample is dropped and counted.
    pub fn finish(mut self) -> (BitStream, ExtractStats) {
        if self.carry.take().is_some() {
            self.stats.dropped_samples += 1;
        }
        let bit_len = self.bit_len();
        if self.acc_bits > 0 {
            self.bytes.push(self.acc as u8);
        }
        (
            BitStream {
                payload: self.bytes,
                bit_len,
            },
            self.stats,
        )
    }
}

/// Appends `codes.len() / 16 * m` bytes: every 16 codes give 8 XOR words of
/// `m` bits, which is exactly `m` whole bytes.
fn pack_groups(codes: &[u16], m: u32, out: &mut Vec<u8>) {
    debug_assert_eq!(codes.len() % 16, 0);
    match m {
        1 => groups_narrow::<1>(codes, out),
        2 => groups_narrow::<2>(codes, out),
        3 => groups_narrow::<3>(codes, out),
        4 => groups_narrow::<4>(codes, out),
        5 => groups_narrow::<5>(codes, out),
        6 => groups_narrow::<6>(codes, out),
        7 => groups_narrow::<7>(codes, out),
        8 => groups_narrow::<8>(codes, out),
        9 => groups_wide::<9>(codes, out),
        10 => groups_wide::<10>(codes, out),
        11 => groups_wide::<11>(codes, out),
        12 => groups_wide::<12>(codes, out),
        _ => unreachable!("m_lsb validated to 1..=12"),
    }
}

// Each group is written as a full 8- or 16-byte store; the next group
// overwrites the excess, and the slack is cut off at the end.
fn groups_narrow<const M: usize>(codes: &[u16], out: &mut Vec<u8>) {
    let groups = codes.len() / 16;
    let start = out.len();
    out.resize(start + groups * M + 8, 0);
    let dst = &mut out[start..];
    let mask = (1u64 << M) - 1;
    for (g, chunk) in codes.chunks_exact(16).enumerate() {
        let mut v = 0u64;
        for i in 0..8 {
            v |= (((chunk[2 * i] ^ chunk[2 * i + 1]) as u64) & mask) << (i * M);
        }
        dst[g * M..g * M + 8].copy_from_slice(&v.to_le_bytes());
    }
    out.truncate(start + groups * M);
}

fn groups_wide<const M: usize>(codes: &[u16], out: &mut Vec<u8>) {
    let groups = codes.len() / 16;
    let start = out.len();
    out.resize(start + groups * M + 16, 0);
    let dst = &mut out[start..];
    let mask = (1u128 << M) - 1;
    for (g, chunk) in codes.chunks_exact(16).enumerate() {
        let mut v = 0u128;
        for i in 0..8 {
            v |= (((chunk[2 * i] ^ chunk[2 * i + 1]) as u128) & mask) << (i * M);
        }
        dst[g * M..g * M + 16].copy_from_slice(&v.to_le_bytes());
    }
    out.truncate(start + groups * M);
}

/// One-shot extraction of an ADC stream.
pub fn extract_stream(codes: &AdcStream, cfg: &ExtractorConfig) -> Result<BitStream> {
    extract_codes(&codes.codes, cfg).map(|(bits, _)| bits)
}

pub fn extract_codes(codes: &[u16], cfg: &ExtractorConfig) -> Result<(BitStream, ExtractStats)> {
    let mut ex = Extractor::new(*cfg)?;
    ex.push(codes);
    Ok(ex.finish())
}

/// Throughput of [`Extractor`] on uniformly random 12-bit codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub m_lsb: u32,
    pub samples: u64,
    pub seconds: f64,
    pub input_samples_per_sec: f64,
    pub output_bytes_per_sec: f64,
    pub output_gbps: f64,
    pub threshold_bytes_per_sec: f64,
    pub passed: bool,
}

/// Output rate equivalent to 5.4 Gbps.
pub const REALTIME_OUTPUT_BYTES_PER_SEC: f64 = 675e6;

/// Runs the extractor over a buffer of `n_codes` random samples in 1 Mi-sample
/// chunks, repeating until at least `min_time` has elapsed.
pub fn bench_extract(
    cfg: &ExtractorConfig,
    n_codes: usize,
    min_time: Duration,
    threshold_bytes_per_sec: f64,
) -> Result<BenchReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe9c);
    let word_mask = ((1u32 << cfg.sample_bits) - 1) as u16;
    let codes: Vec<u16> = (0..n_codes)
        .map(|_| rng.random::<u16>() & word_mask)
        .collect();

    let mut samples = 0u64;
    let mut out_bits = 0u64;
    let start = Instant::now();
    loop {
        let mut ex = Extractor::new(*cfg)?;
        for chunk in codes.chunks(1 << 20) {
            ex.push(chunk);
        }
        let (bits, stats) = ex.finish();
        samples += stats.samples_in;
        out_bits += bits.len() as u64;
        std::hint::black_box(bits);
        if start.elapsed() >= min_time {
            break;
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let output_bytes_per_sec = out_bits as f64 / 8.0 / seconds;
    Ok(BenchReport {
        m_lsb: cfg.m_lsb,
        samples,
        seconds,
        input_samples_per_sec: samples as f64 / seconds,
        output_bytes_per_sec,
        output_gbps: output_bytes_per_sec * 8.0 / 1e9,
        threshold_bytes_per_sec,
        passed: output_bytes_per_sec >= threshold_bytes_per_sec,
    })
}
