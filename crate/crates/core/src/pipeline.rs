//! Configuration and stage orchestration: simulate → digitize → extract →
//! analyze → test.
//!
//! Every stage has a file-level entry point (`cmd_*`) so the chain can be run
//! one stage at a time, resumed from any stage file, or in one go with
//! [`cmd_pipeline`]. Both routes produce byte-identical bit files for equal
//! configurations.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::acquisition::{calibrate_samples, quantize, AdcConfig, AdcStream, DEFAULT_K_SIGMA};
use crate::entropy::{
    self, entropy_report, histogram, min_entropy, normalized_min_entropy, AnalysisConfig,
    EntropyReport,
};
use crate::error::{Error, Result};
use crate::extraction::{
    bench_extract, extract_codes, xor_pairs, BenchReport, BitStream, ExtractStats, ExtractorConfig,
    REALTIME_OUTPUT_BYTES_PER_SEC,
};
use crate::formats::{self, sha256_hex, ReportFormat};
use crate::optics::{simulate_intensity_stream, HistogramBin, IntensityTrace, Moments, SimConfig};
use crate::stats::{run_battery_multi, BatteryConfig, MultiBatteryReport};

/// Full-scale policy of the ADC stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcPolicy {
    pub bits: u32,
    /// Full scale is the trace mean ± `k_sigma` standard deviations.
    pub k_sigma: f64,
}

impl Default for AdcPolicy {
    fn default() -> Self {
        AdcPolicy {
            bits: 12,
            k_sigma: DEFAULT_K_SIGMA,
        }
    }
}

/// Sample count, output location and figure-data options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub samples: usize,
    pub out_dir: PathBuf,
    pub format: ReportFormat,
    /// Also write the intensity trace CSV in a full pipeline run (large).
    pub write_trace: bool,
    pub histogram_bins: usize,
    /// Extraction widths compared in the normalised min-entropy series.
    pub entropy_widths: Vec<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            samples: 20_000_000,
            out_dir: PathBuf::from("out"),
            format: ReportFormat::Json,
            write_trace: false,
            histogram_bins: 200,
            entropy_widths: vec![2, 4, 6, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub adc: AdcPolicy,
    pub extract: ExtractorConfig,
    pub analysis: AnalysisConfig,
    pub battery: BatteryConfig,
    pub run: RunConfig,
}

/// The part of the configuration that determines stage outputs.
#[derive(Serialize)]
struct DigestView<'a> {
    sim: &'a SimConfig,
    adc: &'a AdcPolicy,
    extract: &'a ExtractorConfig,
    analysis: &'a AnalysisConfig,
    battery: &'a BatteryConfig,
    samples: usize,
    entropy_widths: &'a [u32],
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if !(4..=16).contains(&self.adc.bits) {
            return Err(Error::config(format!(
                "adc.bits must be 4..=16, got {}",
                self.adc.bits
            )));
        }
        if !(self.adc.k_sigma > 0.0 && self.adc.k_sigma.is_finite()) {
            return Err(Error::config(format!(
                "adc.k_sigma must be > 0, got {}",
                self.adc.k_sigma
            )));
        }
        self.extract.validate()?;
        if self.extract.sample_bits != self.adc.bits {
            return Err(Error::config(format!(
                "extract.sample_bits ({}) must equal adc.bits ({})",
                self.extract.sample_bits, self.adc.bits
            )));
        }
        self.analysis.validate()?;
        self.battery.validate()?;
        if self.run.samples < 2 {
            return Err(Error::config("run.samples must be at least 2"));
        }
        for &m in &self.run.entropy_widths {
            ExtractorConfig {
                m_lsb: m,
                sample_bits: self.adc.bits,
            }
            .validate()?;
        }
        Ok(())
    }

    /// SHA-256 over every setting that influences stage outputs (output
    /// location and report format excluded).
    pub fn digest(&self) -> String {
        let view = DigestView {
            sim: &self.sim,
            adc: &self.adc,
            extract: &self.extract,
            analysis: &self.analysis,
            battery: &self.battery,
            samples: self.run.samples,
            entropy_widths: &self.run.entropy_widths,
        };
        sha256_hex(&serde_json::to_vec(&view).expect("config serialises"))
    }

    /// Bits a full run produces: `floor(samples / 2) · m`.
    pub fn expected_bits(&self) -> usize {
        self.extract.output_bits(self.run.samples)
    }
}

pub const TRACE_FILE: &str = "trace.csv";
pub const ADC_FILE: &str = "adc.bin";
pub const BITS_FILE: &str = "bits.bin";

pub fn stage_simulate(cfg: &PipelineConfig) -> Result<IntensityTrace> {
    simulate_intensity_stream(&cfg.sim, cfg.run.samples)
}

/// How the ADC full scale was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeSource {
    /// Trace mean ± k_sigma standard deviations.
    AutoRange,
    /// `[0, upper bound of the intensity]`, used when the trace is constant.
    FixedFullScale,
}

/// Quantises `trace`. A constant trace cannot be auto-ranged; it is then
/// digitised against the fixed physical full scale so the degenerate source
/// still flows through the chain and fails downstream tests.
pub fn stage_digitize(
    trace: &IntensityTrace,
    cfg: &PipelineConfig,
) -> Result<(AdcStream, RangeSource)> {
    let (adc, source) = match calibrate_samples(&trace.samples, cfg.adc.k_sigma, cfg.adc.bits) {
        Ok(adc) => (adc, RangeSource::AutoRange),
        Err(Error::ZeroVariance(_)) => (
            AdcConfig::new(cfg.adc.bits, 0.0, cfg.sim.intensity_upper_bound())?,
            RangeSource::FixedFullScale,
        ),
        Err(e) => return Err(e),
    };
    Ok((quantize(trace, &adc), source))
}

pub fn stage_extract(codes: &AdcStream, cfg: &PipelineConfig) -> Result<(BitStream, ExtractStats)> {
    extract_codes(&codes.codes, &cfg.extract)
}

/// Entropy report over `m`-bit symbols of the extracted stream.
pub fn stage_analyze(bits: &BitStream, m_lsb: u32, cfg: &PipelineConfig) -> Result<EntropyReport> {
    let symbols = entropy::symbol_distribution(bits, m_lsb)?;
    entropy_report(&symbols, bits, &cfg.analysis)
}

/// Battery over consecutive sequences; a stream shorter than one sequence is
/// tested as a single sequence.
pub fn stage_test(bits: &BitStream, cfg: &PipelineConfig) -> Result<MultiBatteryReport> {
    let mut battery = cfg.battery.clone();
    if bits.len() < battery.sequence_len {
        battery.sequence_len = bits.len().max(1);
    }
    run_battery_multi(bits, &battery)
}

/// One point of the normalised min-entropy comparison across extraction widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthPoint {
    pub m: u32,
    pub l: u32,
    pub normalized: f64,
}

/// Normalised min-entropy for every width in `ms` and every block length in
/// the analysis range, each width extracted from the same codes. Points the
/// data length cannot support are omitted.
pub fn width_series(codes: &[u16], ms: &[u32], cfg: &PipelineConfig) -> Result<Vec<WidthPoint>> {
    let mut out = Vec::new();
    for &m in ms {
        let ex = ExtractorConfig {
            m_lsb: m,
            sample_bits: cfg.adc.bits,
        };
        let (bits, _) = extract_codes(codes, &ex)?;
        for l in cfg.analysis.l_min..=cfg.analysis.l_max {
            match normalized_min_entropy(&bits, l) {
                Ok(normalized) => out.push(WidthPoint { m, l, normalized }),
                Err(e) if e.is_guard_failure() => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Summary of a trace for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub samples: usize,
    pub dc_level: f64,
    pub moments: Option<Moments>,
}

impl TraceSummary {
    fn of(trace: &IntensityTrace) -> Self {
        TraceSummary {
            samples: trace.len(),
            dc_level: trace.dc_level,
            moments: trace.moments(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitizeSummary {
    pub range_source: RangeSource,
    pub bits: u32,
    pub v_min: f64,
    pub v_max: f64,
    pub clipped_count: u64,
    pub clipped_fraction: f64,
}

impl DigitizeSummary {
    fn of(stream: &AdcStream, range_source: RangeSource) -> Self {
        DigitizeSummary {
            range_source,
            bits: stream.calib.bits,
            v_min: stream.calib.v_min,
            v_max: stream.calib.v_max,
            clipped_count: stream.clipped_count,
            clipped_fraction: stream.clipped_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub m_lsb: u32,
    pub bit_len: usize,
    pub bytes: usize,
    pub samples_in: u64,
    pub dropped_samples: u64,
    pub bits_per_sample: f64,
    /// Output rate at the configured sample rate, in Gbps.
    pub output_gbps: f64,
    pub sha256: String,
    /// Min-entropy of the full-width XOR words.
    pub xor_word_min_entropy: Option<f64>,
    /// Min-entropy of the raw ADC codes.
    pub raw_code_min_entropy: Option<f64>,
}

fn extract_summary(
    codes: &AdcStream,
    bits: &BitStream,
    stats: &ExtractStats,
    cfg: &PipelineConfig,
) -> ExtractSummary {
    let word_bits = cfg.extract.sample_bits;
    let xor_h = histogram(&xor_pairs(&codes.codes).words, word_bits)
        .and_then(|d| min_entropy(&d))
        .ok();
    let raw_h = histogram(&codes.codes, word_bits)
        .and_then(|d| min_entropy(&d))
        .ok();
    ExtractSummary {
        m_lsb: cfg.extract.m_lsb,
        bit_len: bits.len(),
        bytes: bits.as_bytes().len(),
        samples_in: stats.samples_in,
        dropped_samples: stats.dropped_samples,
        bits_per_sample: cfg.extract.bits_per_sample(),
        output_gbps: cfg.sim.sample_rate_hz * cfg.extract.bits_per_sample() / 1e9,
        sha256: sha256_hex(bits.as_bytes()),
        xor_word_min_entropy: xor_h,
        raw_code_min_entropy: raw_h,
    }
}

/// Entropy report of a stage run, with the provenance digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub config_digest: String,
    pub source_digest: Option<String>,
    pub m_lsb: u32,
    pub entropy: EntropyReport,
    /// Mean autocorrelation quoted for the hardware source, for comparison only.
    pub reference_autocorr_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub config_digest: String,
    pub source_digest: Option<String>,
    pub battery: MultiBatteryReport,
}

/// Post-XOR min-entropy quoted for the hardware source.
pub const REFERENCE_MIN_ENTROPY: f64 = 9.592885;
/// Mean bit autocorrelation quoted for the hardware source.
pub const REFERENCE_AUTOCORR_MEAN: f64 = 1.68e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_digest: String,
    pub config: PipelineConfig,
    pub trace: TraceSummary,
    pub digitize: DigitizeSummary,
    pub extract: ExtractSummary,
    pub reference_min_entropy: f64,
    pub entropy: Option<EntropyReport>,
    pub width_series: Vec<WidthPoint>,
    pub battery_summary: Vec<crate::stats::TestSummary>,
    pub battery_sequences: usize,
    pub battery_sequence_len: usize,
    /// Analyses that could not run on this input (degenerate or too short).
    pub guard_failures: Vec<String>,
}

/// Paths written by a stage command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutput {
    pub files: Vec<PathBuf>,
    pub guard_failures: Vec<String>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    formats::write_csv(
        path,
        &["center", "count", "density"],
        bins.iter().map(|b| {
            [
                b.center.to_string(),
                b.count.to_string(),
                b.density.to_string(),
            ]
        }),
    )
}

pub fn write_width_csv(path: &Path, points: &[WidthPoint]) -> Result<()> {
    formats::write_csv(
        path,
        &["m", "l", "normalized_min_entropy"],
        points
            .iter()
            .map(|p| [p.m.to_string(), p.l.to_string(), p.normalized.to_string()]),
    )
}

pub fn write_autocorrelation_csv(path: &Path, rho: &[f64]) -> Result<()> {
    formats::write_csv(
        path,
        &["lag", "rho"],
        rho.iter()
            .enumerate()
            .map(|(i, r)| [(i + 1).to_string(), r.to_string()]),
    )
}

pub fn write_battery_csv(dir: &Path, battery: &MultiBatteryReport) -> Result<Vec<PathBuf>> {
    let per_seq = dir.join("battery.csv");
    formats::write_csv(
        &per_seq,
        &["sequence", "test", "final_p", "passed"],
        battery.sequences.iter().flat_map(|s| {
            s.outcomes.iter().map(move |o| {
                [
                    s.sequence_id.to_string(),
                    o.name.clone(),
                    o.final_p.to_string(),
                    o.passed.to_string(),
                ]
            })
        }),
    )?;
    let summary = dir.join("battery_summary.csv");
    formats::write_csv(
        &summary,
        &["test", "passed", "sequences", "proportion", "uniformity_p"],
        battery.summary.iter().map(|t| {
            [
                t.name.clone(),
                t.passed.to_string(),
                t.sequences.to_string(),
                t.proportion.to_string(),
                t.uniformity_p.map(|p| p.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    Ok(vec![per_seq, summary])
}

/// Simulates the configured number of samples into `<out_dir>/trace.csv`.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<StageOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.run.out_dir)?;
    let trace = stage_simulate(cfg)?;
    let path = cfg.run.out_dir.join(TRACE_FILE);
    formats::write_trace_csv(&path, &trace, &cfg.digest())?;
    Ok(StageOutput {
        files: vec![path],
        guard_failures: vec![],
    })
}

/// Digitises a trace file into `<out_dir>/adc.bin`.
pub fn cmd_digitize(input: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.run.out_dir)?;
    let (trace, _) = formats::read_trace_csv(input)?;
    let (stream, _) = stage_digitize(&trace, cfg)?;
    let path = cfg.run.out_dir.join(ADC_FILE);
    formats::write_adc(&path, &stream, &cfg.digest())?;
    Ok(StageOutput {
        files: vec![path.clone(), formats::sidecar_path(&path)],
        guard_failures: vec![],
    })
}

/// Extracts an ADC file into `<out_dir>/bits.bin`.
pub fn cmd_extract(input: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.run.out_dir)?;
    let (stream, meta) = formats::read_adc(input)?;
    if meta.bits != cfg.extract.sample_bits {
        return Err(Error::config(format!(
            "ADC file has {}-bit codes but extract.sample_bits is {}",
            meta.bits, cfg.extract.sample_bits
        )));
    }
    let (bits, stats) = stage_extract(&stream, cfg)?;
    let path = cfg.run.out_dir.join(BITS_FILE);
    formats::write_bits(
        &path,
        &bits,
        cfg.extract.m_lsb,
        stats.dropped_samples,
        &cfg.digest(),
    )?;
    Ok(StageOutput {
        files: vec![path.clone(), formats::sidecar_path(&path)],
        guard_failures: vec![],
    })
}

/// Entropy analysis of a bit file: report plus block-entropy and
/// autocorrelation CSVs.
pub fn cmd_analyze(input: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.run.out_dir)?;
    let (bits, meta) = formats::read_bits(input)?;
    let m = meta.as_ref().map(|m| m.m_lsb).unwrap_or(cfg.extract.m_lsb);
    let entropy = stage_analyze(&bits, m, cfg)?;
    let dir = &cfg.run.out_dir;
    let report = AnalyzeReport {
        config_digest: cfg.digest(),
        source_digest: meta.map(|m| m.config_digest),
        m_lsb: m,
        reference_autocorr_mean: REFERENCE_AUTOCORR_MEAN,
        entropy,
    };
    let series_path = dir.join("normalized_min_entropy.csv");
    let points: Vec<WidthPoint> = report
        .entropy
        .normalized
        .iter()
        .map(|b| WidthPoint {
            m,
            l: b.l,
            normalized: b.normalized,
        })
        .collect();
    write_width_csv(&series_path, &points)?;
    let acf_path = dir.join("autocorrelation.csv");
    write_autocorrelation_csv(&acf_path, &report.entropy.autocorr)?;
    let path = formats::write_report(dir, "entropy", &report, cfg.run.format)?;
    Ok(StageOutput {
        files: vec![path, series_path, acf_path],
        guard_failures: vec![],
    })
}

/// Battery run on a bit file: report plus per-sequence and summary CSVs.
pub fn cmd_test(input: &Path, cfg: &PipelineConfig) -> Result<StageOutput> {
    cfg.validate()?;
    ensure_dir(&cfg.run.out_dir)?;
    let (bits, meta) = formats::read_bits(input)?;
    let battery = stage_test(&bits, cfg)?;
    let dir = &cfg.run.out_dir;
    let mut files = write_battery_csv(dir, &battery)?;
    let report = TestReport {
        config_digest: cfg.digest(),
        source_digest: meta.map(|m| m.config_digest),
        battery,
    };
    files.push(formats::write_report(
        dir,
        "battery",
        &report,
        cfg.run.format,
    )?);
    Ok(StageOutput {
        files,
        guard_failures: vec![],
    })
}

/// Runs every stage in memory, writing the stage files, figure data and a
/// combined report. Degenerate input does not abort the run: analyses that
/// cannot be computed are listed in `guard_failures` and the battery still
/// runs.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<(PipelineReport, StageOutput)> {
    cfg.validate()?;
    let dir = cfg.run.out_dir.clone();
    ensure_dir(&dir)?;
    let digest = cfg.digest();
    let mut files = Vec::new();
    let mut guard_failures = Vec::new();

    let trace = stage_simulate(cfg)?;
    if cfg.run.write_trace {
        let p = dir.join(TRACE_FILE);
        formats::write_trace_csv(&p, &trace, &digest)?;
        files.push(p);
    }
    let hist = dir.join("intensity_histogram.csv");
    write_histogram_csv(&hist, &trace.histogram(cfg.run.histogram_bins))?;
    files.push(hist);

    let (stream, source) = stage_digitize(&trace, cfg)?;
    let adc_path = dir.join(ADC_FILE);
    formats::write_adc(&adc_path, &stream, &digest)?;
    files.push(adc_path);

    let (bits, stats) = stage_extract(&stream, cfg)?;
    let bits_path = dir.join(BITS_FILE);
    formats::write_bits(
        &bits_path,
        &bits,
        cfg.extract.m_lsb,
        stats.dropped_samples,
        &digest,
    )?;
    files.push(bits_path);

    let entropy = match stage_analyze(&bits, cfg.extract.m_lsb, cfg) {
        Ok(report) => {
            let p = dir.join("autocorrelation.csv");
            write_autocorrelation_csv(&p, &report.autocorr)?;
            files.push(p);
            Some(report)
        }
        Err(e) if e.is_guard_failure() => {
            guard_failures.push(format!("analyze: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let width_series = width_series(&stream.codes, &cfg.run.entropy_widths, cfg)?;
    let p = dir.join("normalized_min_entropy.csv");
    write_width_csv(&p, &width_series)?;
    files.push(p);

    let battery = match stage_test(&bits, cfg) {
        Ok(b) => {
            files.extend(write_battery_csv(&dir, &b)?);
            Some(b)
        }
        Err(e) if e.is_guard_failure() => {
            guard_failures.push(format!("test: {e}"));
            None
        }
        Err(e) => return Err(e),
    };

    let report = PipelineReport {
        config_digest: digest,
        config: cfg.clone(),
        trace: TraceSummary::of(&trace),
        digitize: DigitizeSummary::of(&stream, source),
        extract: extract_summary(&stream, &bits, &stats, cfg),
        reference_min_entropy: REFERENCE_MIN_ENTROPY,
        entropy,
        width_series,
        battery_sequences: battery.as_ref().map_or(0, |b| b.sequences.len()),
        battery_sequence_len: battery.as_ref().map_or(0, |b| b.sequence_len),
        battery_summary: battery.map(|b| b.summary).unwrap_or_default(),
        guard_failures: guard_failures.clone(),
    };
    files.push(formats::write_report(
        &dir,
        "report",
        &report,
        cfg.run.format,
    )?);
    Ok((
        report,
        StageOutput {
            files,
            guard_failures,
        },
    ))
}

/// Extraction throughput on random codes, written to `<out_dir>/bench`.
pub fn cmd_bench(
    cfg: &PipelineConfig,
    samples: usize,
    min_time: Duration,
    threshold_bytes_per_sec: Option<f64>,
) -> Result<(BenchReport, StageOutput)> {
    cfg.extract.validate()?;
    ensure_dir(&cfg.run.out_dir)?;
    let report = bench_extract(
        &cfg.extract,
        samples,
        min_time,
        threshold_bytes_per_sec.unwrap_or(REALTIME_OUTPUT_BYTES_PER_SEC),
    )?;
    let path = formats::write_report(&cfg.run.out_dir, "bench", &report, cfg.run.format)?;
    Ok((
        report,
        StageOutput {
            files: vec![path],
            guard_failures: vec![],
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.run.samples = 60_000;
        cfg.run.out_dir = dir.to_path_buf();
        cfg.battery.sequence_len = 20_000;
        cfg
    }

    #[test]
    fn defaults_validate_and_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = PipelineConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = PipelineConfig::from_toml_str("[sim]\nseed = 9\n[extract]\nm_lsb = 4\n").unwrap();
        assert_eq!(cfg.sim.seed, 9);
        assert_eq!(cfg.extract.m_lsb, 4);
        assert_eq!(cfg.adc, AdcPolicy::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml_str("[sim]\nlinewidth = 1.0\n").is_err());
    }

    #[test]
    fn digest_ignores_output_location() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.run.out_dir = PathBuf::from("/elsewhere");
        b.run.format = ReportFormat::Toml;
        assert_eq!(a.digest(), b.digest());
        b.sim.seed += 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn expected_bits_law() {
        let mut cfg = PipelineConfig::default();
        cfg.run.samples = 20_000_000;
        assert_eq!(cfg.expected_bits(), 60_000_000);
        cfg.run.samples = 7;
        assert_eq!(cfg.expected_bits(), 18);
    }

    #[test]
    fn mismatched_widths_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.adc.bits = 10;
        assert!(cfg.validate().is_err());
        cfg.extract.sample_bits = 10;
        cfg.validate().unwrap();
    }

    #[test]
    fn constant_trace_uses_fixed_full_scale() {
        let mut cfg = PipelineConfig::default();
        cfg.sim.linewidth_hz = 0.0;
        cfg.sim.noise_sigma = 0.0;
        cfg.run.samples = 20_000;
        let trace = stage_simulate(&cfg).unwrap();
        let (stream, source) = stage_digitize(&trace, &cfg).unwrap();
        assert_eq!(source, RangeSource::FixedFullScale);
        assert!(stream.codes.windows(2).all(|w| w[0] == w[1]));
        let (bits, _) = stage_extract(&stream, &cfg).unwrap();
        assert_eq!(bits.count_ones(), 0);
    }

    #[test]
    fn stage_files_reproduce_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let full = small(&dir.path().join("full"));
        let (report, _) = cmd_pipeline(&full).unwrap();
        assert!(
            report.guard_failures.is_empty(),
            "{:?}",
            report.guard_failures
        );
        assert_eq!(report.extract.bit_len, full.expected_bits());

        let split = small(&dir.path().join("split"));
        cmd_simulate(&split).unwrap();
        cmd_digitize(&split.run.out_dir.join(TRACE_FILE), &split).unwrap();
        cmd_extract(&split.run.out_dir.join(ADC_FILE), &split).unwrap();
        let a = fs::read(full.run.out_dir.join(BITS_FILE)).unwrap();
        let b = fs::read(split.run.out_dir.join(BITS_FILE)).unwrap();
        assert_eq!(a, b);

        cmd_analyze(&split.run.out_dir.join(BITS_FILE), &split).unwrap();
        cmd_test(&split.run.out_dir.join(BITS_FILE), &split).unwrap();
        for f in [
            "entropy.json",
            "battery.json",
            "battery.csv",
            "autocorrelation.csv",
        ] {
            assert!(split.run.out_dir.join(f).exists(), "{f}");
        }
        let text = fs::read_to_string(split.run.out_dir.join("entropy.json")).unwrap();
        assert!(text.contains(&split.digest()));
    }

    #[test]
    fn toml_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.run.format = ReportFormat::Toml;
        cmd_pipeline(&cfg).unwrap();
        let text = fs::read_to_string(dir.path().join("report.toml")).unwrap();
        assert!(text.contains("config_digest"));
    }
}
