//! Native randomness battery with Kolmogorov-Smirnov aggregation.
//!
//! A test passes when its final p-value lies in `[0.01, 0.99]`;
//! [`PassCriterion::Stock`] switches to the usual one-sided `p >= 0.01`.
//! The battery reports every p-value of a sequence as its own outcome and uses
//! [`ks_aggregate`] across sequences, where the p-values are independent.

pub mod nist;
pub mod special;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::BitStream;
pub use nist::NistTest;

/// Significance level of every test.
pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassCriterion {
    /// `0.01 <= p <= 0.99`.
    #[default]
    Window,
    /// `p >= 0.01`.
    Stock,
}

impl PassCriterion {
    pub fn accepts(&self, p: f64) -> bool {
        match self {
            PassCriterion::Window => (ALPHA..=1.0 - ALPHA).contains(&p),
            PassCriterion::Stock => p >= ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub p_values: Vec<f64>,
    pub final_p: f64,
    pub passed: bool,
}

impl TestOutcome {
    /// With several p-values the final p-value is their KS aggregate, and the
    /// test passes only if the criterion accepts every individual p-value as
    /// well (two fully rejected p-values still aggregate to a KS p-value
    /// near 0.04).
    pub fn new(name: &str, p_values: Vec<f64>, criterion: PassCriterion) -> Result<Self> {
        let final_p = match p_values.as_slice() {
            [] => return Err(Error::EmptyDistribution),
            [p] => *p,
            many => ks_aggregate(many)?,
        };
        let passed = criterion.accepts(final_p) && p_values.iter().all(|&p| criterion.accepts(p));
        Ok(TestOutcome {
            name: name.to_string(),
            passed,
            p_values,
            final_p,
        })
    }
}

/// Kolmogorov-Smirnov statistic of `p_values` against Uniform[0, 1].
pub fn ks_statistic(p_values: &[f64]) -> f64 {
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Final p-value for the uniformity of `p_values`, from the asymptotic
/// Kolmogorov distribution of `√n · D`.
pub fn ks_aggregate(p_values: &[f64]) -> Result<f64> {
    if p_values.len() < 2 {
        return Err(Error::insufficient(
            "KS aggregation (p-values)",
            2,
            p_values.len(),
        ));
    }
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::config(format!("p-value {bad} outside [0, 1]")));
    }
    let d = ks_statistic(p_values);
    Ok(special::kolmogorov_sf((p_values.len() as f64).sqrt() * d))
}

fn outcome(test: NistTest, bits: &BitStream, check_len: bool) -> Result<TestOutcome> {
    let raw = bits.to_bits();
    let p = if check_len {
        test.run(&raw)?
    } else {
        test.run_unchecked(&raw)?
    };
    TestOutcome::new(test.name(), p, PassCriterion::Window)
}

/// Frequency (monobit) test; needs 100 bits.
pub fn monobit(bits: &BitStream) -> Result<TestOutcome> {
    outcome(NistTest::Frequency, bits, true)
}

pub fn block_frequency(bits: &BitStream, block_len: usize) -> Result<TestOutcome> {
    outcome(NistTest::BlockFrequency { block_len }, bits, true)
}

pub fn runs(bits: &BitStream) -> Result<TestOutcome> {
    outcome(NistTest::Runs, bits, true)
}

pub fn longest_run_of_ones(bits: &BitStream) -> Result<TestOutcome> {
    outcome(NistTest::LongestRun, bits, true)
}

/// Forward and reverse cumulative sums.
pub fn cumulative_sums(bits: &BitStream) -> Result<TestOutcome> {
    outcome(NistTest::CumulativeSums, bits, true)
}

pub fn serial(bits: &BitStream, m: u32) -> Result<TestOutcome> {
    outcome(NistTest::Serial { m }, bits, true)
}

pub fn approximate_entropy(bits: &BitStream, m: u32) -> Result<TestOutcome> {
    outcome(NistTest::ApproximateEntropy { m }, bits, true)
}

pub fn dft_spectral(bits: &BitStream) -> Result<TestOutcome> {
    outcome(NistTest::Dft, bits, true)
}

/// Runs `test` on `bits` without the minimum-length guard.
pub fn run_unchecked(test: NistTest, bits: &BitStream) -> Result<TestOutcome> {
    outcome(test, bits, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryConfig {
    pub tests: Vec<NistTest>,
    pub criterion: PassCriterion,
    /// Bits per sequence when a stream is split for a multi-sequence run.
    pub sequence_len: usize,
    /// Upper bound on the number of sequences; 0 means as many as fit.
    pub max_sequences: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            tests: vec![
                NistTest::Frequency,
                NistTest::BlockFrequency { block_len: 128 },
                NistTest::Runs,
                NistTest::LongestRun,
                NistTest::CumulativeSums,
                NistTest::Serial { m: 16 },
                NistTest::ApproximateEntropy { m: 10 },
                NistTest::Dft,
            ],
            criterion: PassCriterion::Window,
            sequence_len: 1_000_000,
            max_sequences: 0,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tests.is_empty() {
            return Err(Error::config("battery has no tests enabled"));
        }
        if self.sequence_len == 0 {
            return Err(Error::config("sequence_len must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTest {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub sequence_id: usize,
    pub bit_len: usize,
    pub outcomes: Vec<TestOutcome>,
    pub skipped: Vec<SkippedTest>,
    /// Fraction of the tests that ran and passed.
    pub proportion_passed: f64,
}

impl BatteryReport {
    pub fn outcome(&self, name: &str) -> Option<&TestOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

/// Runs every enabled test on one sequence. A test that cannot run (input too
/// short, bad parameter) is listed as skipped with the reason.
pub fn run_battery(bits: &BitStream, cfg: &BatteryConfig) -> BatteryReport {
    run_sequence(0, &bits.to_bits(), cfg)
}

/// Each p-value of a test becomes its own outcome (`cumulative_sums_forward`,
/// `serial_1`, ...), the way the reference implementation reports them.
fn run_sequence(sequence_id: usize, raw: &[u8], cfg: &BatteryConfig) -> BatteryReport {
    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    for test in &cfg.tests {
        match test.run(raw) {
            Ok(p) => {
                for (name, p) in test.outcome_names().iter().zip(p) {
                    outcomes
                        .push(TestOutcome::new(name, vec![p], cfg.criterion).expect("one p-value"));
                }
            }
            Err(e) => skipped.push(SkippedTest {
                name: test.name().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    let proportion_passed = if outcomes.is_empty() {
        0.0
    } else {
        outcomes.iter().filter(|o| o.passed).count() as f64 / outcomes.len() as f64
    };
    BatteryReport {
        sequence_id,
        bit_len: raw.len(),
        outcomes,
        skipped,
        proportion_passed,
    }
}

/// Per-test result across all sequences of a multi-sequence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub name: String,
    pub sequences: usize,
    pub passed: usize,
    pub proportion: f64,
    /// KS p-value for the uniformity of this test's p-values across
    /// sequences; absent with fewer than two sequences.
    pub uniformity_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiBatteryReport {
    pub sequence_len: usize,
    pub sequences: Vec<BatteryReport>,
    pub summary: Vec<TestSummary>,
}

impl MultiBatteryReport {
    pub fn summary_for(&self, name: &str) -> Option<&TestSummary> {
        self.summary.iter().find(|s| s.name == name)
    }
}

/// Splits `bits` into consecutive `cfg.sequence_len`-bit sequences and runs
/// the battery on each.
pub fn run_battery_multi(bits: &BitStream, cfg: &BatteryConfig) -> Result<MultiBatteryReport> {
    cfg.validate()?;
    let mut count = bits.len() / cfg.sequence_len;
    if cfg.max_sequences > 0 {
        count = count.min(cfg.max_sequences);
    }
    if count == 0 {
        return Err(Error::insufficient(
            "battery (bits for one sequence)",
            cfg.sequence_len,
            bits.len(),
        ));
    }
    let raw = bits.to_bits();
    let sequences: Vec<BatteryReport> = (0..count)
        .into_par_iter()
        .map(|i| {
            run_sequence(
                i,
                &raw[i * cfg.sequence_len..(i + 1) * cfg.sequence_len],
                cfg,
            )
        })
        .collect();

    let mut summary = Vec::new();
    for name in cfg.tests.iter().flat_map(|t| t.outcome_names().iter()) {
        let outcomes: Vec<&TestOutcome> =
            sequences.iter().filter_map(|s| s.outcome(name)).collect();
        if outcomes.is_empty() {
            continue;
        }
        let passed = outcomes.iter().filter(|o| o.passed).count();
        let all_p: Vec<f64> = outcomes.iter().map(|o| o.final_p).collect();
        summary.push(TestSummary {
            name: name.to_string(),
            sequences: outcomes.len(),
            passed,
            proportion: passed as f64 / outcomes.len() as f64,
            uniformity_p: ks_aggregate(&all_p).ok(),
        });
    }
    Ok(MultiBatteryReport {
        sequence_len: cfg.sequence_len,
        sequences,
        summary,
    })
}
