//! SP800-22 tests: frequency, block frequency, runs, longest run of ones,
//! cumulative sums, serial, approximate entropy and the discrete Fourier
//! transform test.
//!
//! Every test works on a slice of 0/1 bytes and returns its raw p-values.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::special::{erfc, igamc, normal_cdf};
use crate::error::{Error, Result};

/// A configured member of the native battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum NistTest {
    Frequency,
    BlockFrequency { block_len: usize },
    Runs,
    LongestRun,
    CumulativeSums,
    Serial { m: u32 },
    ApproximateEntropy { m: u32 },
    Dft,
}

impl NistTest {
    pub fn name(&self) -> &'static str {
        match self {
            NistTest::Frequency => "frequency",
            NistTest::BlockFrequency { .. } => "block_frequency",
            NistTest::Runs => "runs",
            NistTest::LongestRun => "longest_run",
            NistTest::CumulativeSums => "cumulative_sums",
            NistTest::Serial { .. } => "serial",
            NistTest::ApproximateEntropy { .. } => "approximate_entropy",
            NistTest::Dft => "dft",
        }
    }

    /// Report names of the p-values [`NistTest::run`] returns, in order.
    pub fn outcome_names(&self) -> &'static [&'static str] {
        match self {
            NistTest::CumulativeSums => &["cumulative_sums_forward", "cumulative_sums_reverse"],
            NistTest::Serial { .. } => &["serial_1", "serial_2"],
            NistTest::Frequency => &["frequency"],
            NistTest::BlockFrequency { .. } => &["block_frequency"],
            NistTest::Runs => &["runs"],
            NistTest::LongestRun => &["longest_run"],
            NistTest::ApproximateEntropy { .. } => &["approximate_entropy"],
            NistTest::Dft => &["dft"],
        }
    }

    /// Shortest input the test accepts.
    pub fn min_len(&self) -> usize {
        match *self {
            NistTest::Frequency | NistTest::Runs | NistTest::CumulativeSums => 100,
            NistTest::BlockFrequency { block_len } => 100.max(block_len),
            NistTest::LongestRun => 128,
            // m < floor(log2 n) - 2 and m < floor(log2 n) - 5
            NistTest::Serial { m } => 1 << (m + 3),
            NistTest::ApproximateEntropy { m } => 1 << (m + 6),
            NistTest::Dft => 1000,
        }
    }

    fn check_params(&self) -> Result<()> {
        match *self {
            NistTest::BlockFrequency { block_len } if block_len < 2 => Err(Error::config(format!(
                "block frequency needs block_len >= 2, got {block_len}"
            ))),
            NistTest::Serial { m } if !(2..=20).contains(&m) => Err(Error::config(format!(
                "serial test needs 2 <= m <= 20, got {m}"
            ))),
            NistTest::ApproximateEntropy { m } if !(1..=20).contains(&m) => Err(Error::config(
                format!("approximate entropy needs 1 <= m <= 20, got {m}"),
            )),
            _ => Ok(()),
        }
    }

    /// Runs the test after checking the input length.
    pub fn run(&self, bits: &[u8]) -> Result<Vec<f64>> {
        if bits.len() < self.min_len() {
            return Err(Error::insufficient(
                format!("{} test (bits)", self.name()),
                self.min_len(),
                bits.len(),
            ));
        }
        self.run_unchecked(bits)
    }

    /// Runs the test without the recommended-length guard, as the worked
    /// examples in the standard do on 10-bit inputs.
    pub fn run_unchecked(&self, bits: &[u8]) -> Result<Vec<f64>> {
        self.check_params()?;
        if bits.is_empty() {
            return Err(Error::insufficient(
                format!("{} test (bits)", self.name()),
                1,
                0,
            ));
        }
        let p = match *self {
            NistTest::Frequency => vec![frequency_p(bits)],
            NistTest::BlockFrequency { block_len } => vec![block_frequency_p(bits, block_len)?],
            NistTest::Runs => vec![runs_p(bits)],
            NistTest::LongestRun => vec![longest_run_p(bits)?],
            NistTest::CumulativeSums => {
                vec![
                    cusum_p(bits.iter().copied(), bits.len()),
                    cusum_p(bits.iter().rev().copied(), bits.len()),
                ]
            }
            NistTest::Serial { m } => serial_p(bits, m).to_vec(),
            NistTest::ApproximateEntropy { m } => vec![approximate_entropy_p(bits, m)],
            NistTest::Dft => vec![dft_p(bits)],
        };
        debug_assert!(
            p.iter().all(|v| (0.0..=1.0).contains(v)),
            "{}: {p:?}",
            self.name()
        );
        Ok(p)
    }
}

fn frequency_p(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let ones = bits.iter().map(|&b| b as usize).sum::<usize>() as f64;
    let s = 2.0 * ones - n;
    erfc(s.abs() / (2.0 * n).sqrt())
}

fn block_frequency_p(bits: &[u8], m: usize) -> Result<f64> {
    let blocks = bits.len() / m;
    if blocks == 0 {
        return Err(Error::insufficient(
            "block frequency test (bits)",
            m,
            bits.len(),
        ));
    }
    let chi: f64 = bits
        .chunks_exact(m)
        .map(|b| {
            let pi = b.iter().map(|&x| x as usize).sum::<usize>() as f64 / m as f64;
            (pi - 0.5) * (pi - 0.5)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    Ok(igamc(blocks as f64 / 2.0, chi / 2.0))
}

fn runs_p(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let pi = bits.iter().map(|&b| b as usize).sum::<usize>() as f64 / n;
    // frequency prerequisite
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let q = pi * (1.0 - pi);
    erfc((v as f64 - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q))
}

struct LongestRunTable {
    block: usize,
    /// Run lengths at or below `first` share the first class; at or above
    /// `first + probs.len() - 1` the last.
    first: usize,
    probs: &'static [f64],
}

const LONGEST_8: LongestRunTable = LongestRunTable {
    block: 8,
    first: 1,
    probs: &[0.2148, 0.3672, 0.2305, 0.1875],
};
const LONGEST_128: LongestRunTable = LongestRunTable {
    block: 128,
    first: 4,
    probs: &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124],
};
const LONGEST_10K: LongestRunTable = LongestRunTable {
    block: 10_000,
    first: 10,
    probs: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
};

fn longest_run_p(bits: &[u8]) -> Result<f64> {
    let n = bits.len();
    let table = match n {
        0..128 => return Err(Error::insufficient("longest run test (bits)", 128, n)),
        128..6272 => &LONGEST_8,
        6272..750_000 => &LONGEST_128,
        _ => &LONGEST_10K,
    };
    let k = table.probs.len();
    let mut counts = vec![0u64; k];
    let blocks = n / table.block;
    for block in bits.chunks_exact(table.block) {
        let (mut best, mut cur) = (0usize, 0usize);
        for &b in block {
            cur = if b == 1 { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        let class = best.clamp(table.first, table.first + k - 1) - table.first;
        counts[class] += 1;
    }
    let nb = blocks as f64;
    let chi: f64 = counts
        .iter()
        .zip(table.probs)
        .map(|(&c, &p)| (c as f64 - nb * p).powi(2) / (nb * p))
        .sum();
    Ok(igamc((k - 1) as f64 / 2.0, chi / 2.0))
}

fn cusum_p(bits: impl Iterator<Item = u8>, n: usize) -> f64 {
    let mut s: i64 = 0;
    let mut z: i64 = 0;
    for b in bits {
        s += if b == 1 { 1 } else { -1 };
        z = z.max(s.abs());
    }
    let n_f = n as f64;
    let z = z as f64;
    let sqrt_n = n_f.sqrt();
    let mut sum1 = 0.0;
    let lo = ((-n_f / z + 1.0) / 4.0).floor() as i64;
    let hi = ((n_f / z - 1.0) / 4.0).floor() as i64;
    for k in lo..=hi {
        let k = k as f64;
        sum1 += normal_cdf((4.0 * k + 1.0) * z / sqrt_n) - normal_cdf((4.0 * k - 1.0) * z / sqrt_n);
    }
    let mut sum2 = 0.0;
    let lo = ((-n_f / z - 3.0) / 4.0).floor() as i64;
    for k in lo..=hi {
        let k = k as f64;
        sum2 += normal_cdf((4.0 * k + 3.0) * z / sqrt_n) - normal_cdf((4.0 * k + 1.0) * z / sqrt_n);
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

/// Counts of the `n` overlapping `m`-bit patterns of the cyclically extended
/// sequence; the first bit of a pattern is its most significant bit.
fn cyclic_pattern_counts(bits: &[u8], m: u32) -> Vec<u64> {
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u64; 1 << m];
    let mut v = 0usize;
    for &b in bits.iter().chain(bits.iter()).take(m as usize - 1) {
        v = (v << 1) | b as usize;
    }
    for &b in bits.iter().cycle().skip(m as usize - 1).take(bits.len()) {
        v = ((v << 1) | b as usize) & mask;
        counts[v] += 1;
    }
    counts
}

/// Counts of the `(m-1)`-bit patterns obtained by dropping the last bit.
fn fold_counts(counts: &[u64]) -> Vec<u64> {
    counts.chunks_exact(2).map(|c| c[0] + c[1]).collect()
}

fn psi_squared(counts: &[u64], n: usize) -> f64 {
    if counts.len() <= 1 {
        return 0.0;
    }
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    sum_sq * counts.len() as f64 / n as f64 - n as f64
}

fn serial_p(bits: &[u8], m: u32) -> [f64; 2] {
    let n = bits.len();
    let c_m = cyclic_pattern_counts(bits, m);
    let c_m1 = fold_counts(&c_m);
    let c_m2 = fold_counts(&c_m1);
    let (p0, p1, p2) = (
        psi_squared(&c_m, n),
        psi_squared(&c_m1, n),
        psi_squared(&c_m2, n),
    );
    let del1 = p0 - p1;
    let del2 = p0 - 2.0 * p1 + p2;
    let dof = 2f64.powi(m as i32 - 2);
    [
        igamc(dof, (del1 / 2.0).max(0.0)),
        igamc(dof / 2.0, (del2 / 2.0).max(0.0)),
    ]
}

fn phi(counts: &[u64], n: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * p.ln()
        })
        .sum()
}

fn approximate_entropy_p(bits: &[u8], m: u32) -> f64 {
    let n = bits.len();
    let c_next = cyclic_pattern_counts(bits, m + 1);
    let c_m = fold_counts(&c_next);
    let apen = phi(&c_m, n) - phi(&c_next, n);
    let chi = 2.0 * n as f64 * (std::f64::consts::LN_2 - apen);
    igamc(2f64.powi(m as i32 - 1), (chi / 2.0).max(0.0))
}

/// Spectral test over the complex bins `1 .. n/2 - 1`.
fn dft_p(bits: &[u8]) -> f64 {
    let n = bits.len();
    let mut buf: Vec<Complex<f64>> = bits
        .iter()
        .map(|&b| Complex::new(if b == 1 { 1.0 } else { -1.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let n_f = n as f64;
    let threshold = ((1.0f64 / 0.05).ln() * n_f).sqrt();
    let below = buf[1..n / 2]
        .iter()
        .filter(|c| c.norm() < threshold)
        .count() as f64;
    let expected = 0.95 * n_f / 2.0;
    let d = (below - expected) / (n_f * 0.95 * 0.05 / 4.0).sqrt();
    erfc(d.abs() / std::f64::consts::SQRT_2)
}
