//! `qrng`: simulate, digitise, extract and test a delay-loop phase-noise QRNG.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use qrng_core::formats::ReportFormat;
use qrng_core::pipeline::{self, PipelineConfig, StageOutput};
use qrng_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_GUARD: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "qrng",
    version,
    about = "Phase-noise QRNG simulation, extraction and randomness analysis"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings that override the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file; flags below take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of ADC samples to simulate.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Least-significant bits kept per XOR word.
    #[arg(long, global = true)]
    m_lsb: Option<u32>,
    /// Laser linewidth in Hz.
    #[arg(long, global = true, value_name = "HZ")]
    linewidth: Option<f64>,
    /// Loop delay in seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    delay: Option<f64>,
    /// Static interferometer phase in radians.
    #[arg(long, global = true, value_name = "RAD")]
    theta: Option<f64>,
    /// Classical detector noise (standard deviation, intensity units).
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
    /// ADC full scale in standard deviations around the mean.
    #[arg(long, global = true)]
    k_sigma: Option<f64>,
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Report format: json or toml.
    #[arg(long, global = true)]
    format: Option<ReportFormat>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the detector intensity into trace.csv.
    Simulate,
    /// Quantise a trace file into adc.bin.
    Digitize {
        /// Trace CSV (default: <out-dir>/trace.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// XOR, truncate and pack an ADC file into bits.bin.
    Extract {
        /// ADC file (default: <out-dir>/adc.bin).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Min-entropy and autocorrelation of a bit file.
    Analyze {
        /// Bit file (default: <out-dir>/bits.bin).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Statistical battery on a bit file.
    Test {
        /// Bit file (default: <out-dir>/bits.bin).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Every stage in sequence, with figure data.
    Pipeline,
    /// Extraction throughput on random codes.
    Bench {
        /// Codes in the benchmark buffer.
        #[arg(long, default_value_t = 1 << 24)]
        bench_samples: usize,
        /// Minimum measurement time in seconds.
        #[arg(long, default_value_t = 2.0)]
        min_time: f64,
        /// Required output rate in MB/s (default 675, i.e. 5.4 Gbps).
        #[arg(long)]
        threshold_mbps: Option<f64>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.sim.seed = v;
        }
        if let Some(v) = self.samples {
            cfg.run.samples = v;
        }
        if let Some(v) = self.m_lsb {
            cfg.extract.m_lsb = v;
        }
        if let Some(v) = self.linewidth {
            cfg.sim.linewidth_hz = v;
        }
        if let Some(v) = self.delay {
            cfg.sim.delay_s = v;
        }
        if let Some(v) = self.theta {
            cfg.sim.static_phase_rad = v;
        }
        if let Some(v) = self.noise_sigma {
            cfg.sim.noise_sigma = v;
        }
        if let Some(v) = self.k_sigma {
            cfg.adc.k_sigma = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.run.out_dir = v.clone();
        }
        if let Some(v) = self.format {
            cfg.run.format = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn input_or(input: &Option<PathBuf>, cfg: &PipelineConfig, file: &str) -> PathBuf {
    input.clone().unwrap_or_else(|| cfg.run.out_dir.join(file))
}

fn report_files(out: &StageOutput) {
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    for g in &out.guard_failures {
        eprintln!("guard failure: {g}");
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let cfg = cli.overrides.resolve()?;
    let out = match &cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg)?,
        Command::Digitize { input } => {
            pipeline::cmd_digitize(&input_or(input, &cfg, pipeline::TRACE_FILE), &cfg)?
        }
        Command::Extract { input } => {
            pipeline::cmd_extract(&input_or(input, &cfg, pipeline::ADC_FILE), &cfg)?
        }
        Command::Analyze { input } => {
            pipeline::cmd_analyze(&input_or(input, &cfg, pipeline::BITS_FILE), &cfg)?
        }
        Command::Test { input } => {
            pipeline::cmd_test(&input_or(input, &cfg, pipeline::BITS_FILE), &cfg)?
        }
        Command::Pipeline => {
            let (report, out) = pipeline::cmd_pipeline(&cfg)?;
            print_pipeline_summary(&report);
            out
        }
        Command::Bench {
            bench_samples,
            min_time,
            threshold_mbps,
        } => {
            let (report, out) = pipeline::cmd_bench(
                &cfg,
                *bench_samples,
                Duration::from_secs_f64(min_time.max(0.0)),
                threshold_mbps.map(|t| t * 1e6),
            )?;
            println!(
                "m = {}: {:.1} MB/s output ({:.2} Gbps, {:.3} G samples/s); threshold {:.1} MB/s: {}",
                report.m_lsb,
                report.output_bytes_per_sec / 1e6,
                report.output_gbps,
                report.input_samples_per_sec / 1e9,
                report.threshold_bytes_per_sec / 1e6,
                if report.passed { "met" } else { "not met" }
            );
            out
        }
        Command::Config => {
            print!("{}", cfg.to_toml_string()?);
            return Ok(ExitCode::SUCCESS);
        }
    };
    report_files(&out);
    if out.guard_failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_GUARD))
    }
}

fn print_pipeline_summary(r: &pipeline::PipelineReport) {
    println!("config digest {}", r.config_digest);
    println!(
        "{} samples -> {} bits ({} bits/sample, {:.1} Gbps at the configured rate)",
        r.trace.samples, r.extract.bit_len, r.extract.bits_per_sample, r.extract.output_gbps
    );
    println!(
        "ADC range [{:.4}, {:.4}] ({:?}), clipped fraction {:.2e}",
        r.digitize.v_min, r.digitize.v_max, r.digitize.range_source, r.digitize.clipped_fraction
    );
    if let Some(h) = r.extract.xor_word_min_entropy {
        println!(
            "post-XOR word min-entropy {h:.4} bits (reference {:.6})",
            r.reference_min_entropy
        );
    }
    if let Some(e) = &r.entropy {
        let worst = e
            .normalized
            .iter()
            .map(|b| b.normalized)
            .fold(1.0, f64::min);
        println!(
            "lowest normalized min-entropy {worst:.4}; autocorrelation max |rho| {:.2e}, mean {:.2e}",
            e.autocorr_max_abs, e.autocorr_mean
        );
    }
    for t in &r.battery_summary {
        println!(
            "{:<20} {}/{} passed{}",
            t.name,
            t.passed,
            t.sequences,
            t.uniformity_p
                .map(|p| format!(", uniformity p = {p:.4}"))
                .unwrap_or_default()
        );
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Format { .. } => EXIT_IO,
        e if e.is_guard_failure() => EXIT_GUARD,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Io(io) = &e {
                if io.kind() == std::io::ErrorKind::NotFound {
                    eprintln!("hint: run the previous stage first or pass --input");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
