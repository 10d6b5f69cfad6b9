//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Duration;

use qrng_core::entropy::{autocorrelation, histogram, min_entropy, normalized_min_entropy};
use qrng_core::extraction::{
    bench_extract, extract_codes, xor_pairs, BitStream, Extractor, ExtractorConfig,
    REALTIME_OUTPUT_BYTES_PER_SEC,
};
use qrng_core::optics::{
    intensity_direct, intensity_expansion, new_phase_process, simulate_intensity_stream,
    PhaseState, SimConfig,
};
use qrng_core::pipeline::{
    self, stage_digitize, stage_extract, stage_simulate, write_histogram_csv, PipelineConfig,
    REFERENCE_AUTOCORR_MEAN, REFERENCE_MIN_ENTROPY,
};
use qrng_core::stats::{self, run_battery_multi, BatteryConfig, PassCriterion, TestOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 10_000_000;
const BITS: usize = 10_000_000;

struct Gate {
    failed: Vec<&'static str>,
}

impl Gate {
    fn record(&mut self, id: &'static str, pass: bool, detail: String) {
        println!("{id:<4} {} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }
}

fn c1_oracle_equivalence(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 10;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.random_range(1..8);
        let history: Vec<f64> = (0..n * d).map(|_| rng.random_range(-PI..PI)).collect();
        let state = PhaseState::from_phases(history, rng.random_range(-PI..PI), d).unwrap();
        let cfg = SimConfig {
            loop_amplitude: rng.random_range(0.05..0.95),
            static_phase_rad: rng.random_range(-PI..PI),
            max_circulations: n,
            ..SimConfig::default()
        };
        let direct = intensity_direct(&state, &cfg);
        let expanded = intensity_expansion(&state, &cfg);
        worst = worst.max((direct - expanded).abs() / direct.abs().max(f64::MIN_POSITIVE));
    }
    gate.record(
        "C1",
        worst < 1e-9,
        format!("10^4 random states, N = 10: max relative deviation {worst:.2e} (limit 1e-9)"),
    );
}

fn c2_phase_statistics(gate: &mut Gate) {
    let cfg = SimConfig {
        seed: 202,
        ..SimConfig::default()
    };
    let mut state = new_phase_process(&cfg).unwrap();
    let per_delay = cfg.step_variance() * state.delay_samples() as f64;
    let n = 1_000_000;
    let mut sums = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for _ in 0..n {
        for k in 0..3 {
            let d = state.delay_difference(k + 1);
            sums[k] += d;
            sq[k] += d * d;
        }
        state.advance();
    }
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for k in 0..3 {
        let mean = sums[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        let expected = (k + 1) as f64 * per_delay;
        let rel = (var / expected - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("k={}: {var:.4} vs {expected:.4}", k + 1));
    }
    gate.record(
        "C2",
        worst < 0.05,
        format!(
            "delay-difference variance over 10^6 samples, {} (max deviation {:.2}%)",
            parts.join(", "),
            worst * 100.0
        ),
    );
}

/// Local maxima whose drop to the neighbouring minima on both sides exceeds `depth`
/// of the peak density.
fn significant_modes(density: &[f64], depth: f64) -> usize {
    let peak = density.iter().copied().fold(0.0, f64::max);
    let mut modes = 0;
    for i in 0..density.len() {
        let left_ok = i == 0 || density[i] > density[i - 1];
        let right_ok = i + 1 == density.len() || density[i] >= density[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let mut drops = [true, true];
        for (side, range) in [
            (0, (0..i).rev().collect::<Vec<_>>()),
            (1, (i + 1..density.len()).collect()),
        ] {
            let mut lowest = density[i];
            let mut higher = false;
            for j in range {
                lowest = lowest.min(density[j]);
                if density[j] > density[i] {
                    higher = true;
                    break;
                }
            }
            drops[side] = !higher || density[i] - lowest > depth * peak;
        }
        if drops[0] && drops[1] {
            modes += 1;
        }
    }
    modes
}

fn c3_distribution_shape(gate: &mut Gate) {
    let cfg = SimConfig::default();
    let n = 1_000_000;
    let trace = simulate_intensity_stream(&cfg, n).unwrap();
    let m = trace.moments().unwrap();
    let skew_se = (6.0 / n as f64).sqrt();
    let kurt_se = (24.0 / n as f64).sqrt();
    let skew_z = m.skewness / skew_se;
    let kurt_z = m.excess_kurtosis / kurt_se;
    let bins = trace.histogram(40);
    let density: Vec<f64> = bins.iter().map(|b| b.density).collect();
    let modes = significant_modes(&density, 0.02);
    let csv = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("intensity_histogram.csv");
    let fine = trace.histogram(200);
    let wrote = write_histogram_csv(&csv, &fine).is_ok();
    gate.record(
        "C3",
        skew_z.abs() > 5.0 && kurt_z.abs() > 5.0 && modes == 1 && m.skewness != 0.0 && wrote,
        format!(
            "10^6 samples: skewness {:.3} ({skew_z:.0} sigma), excess kurtosis {:.3} ({kurt_z:.0} sigma), {modes} mode(s); histogram at {}",
            m.skewness,
            m.excess_kurtosis,
            csv.display()
        ),
    );
}

fn c4_min_entropy(gate: &mut Gate, codes: &[u16]) {
    let words = xor_pairs(codes).words;
    let h = min_entropy(&histogram(&words, 12).unwrap()).unwrap();
    gate.record(
        "C4",
        (8.5..=11.5).contains(&h),
        format!(
            "post-XOR 12-bit min-entropy over 10^7 samples {h:.4} bits (band [8.5, 11.5]); reference {REFERENCE_MIN_ENTROPY}, deviation {:+.4}",
            h - REFERENCE_MIN_ENTROPY
        ),
    );
}

fn first_bits(codes: &[u16], m: u32, n: usize) -> BitStream {
    let (bits, _) = extract_codes(codes, &ExtractorConfig::new(m).unwrap()).unwrap();
    assert!(bits.len() >= n, "m = {m}: only {} bits", bits.len());
    bits.slice(0, n)
}

fn c5_normalized_min_entropy(gate: &mut Gate, codes: &[u16]) {
    let series = |m: u32| -> Vec<f64> {
        let bits = first_bits(codes, m, BITS);
        (1..=8)
            .map(|l| normalized_min_entropy(&bits, l).unwrap())
            .collect()
    };
    let m2 = series(2);
    let m4 = series(4);
    let m6 = series(6);
    let m8 = series(8);
    let worst6 = m6[..6].iter().copied().fold(1.0, f64::min);
    gate.record(
        "C5a",
        worst6 >= 0.99,
        format!(
            "m = 6, 10^7 bits: H(l)/l for l = 1..6 = [{}], minimum {worst6:.4} (limit 0.99)",
            fmt_list(&m6[..6])
        ),
    );
    let dip = [6usize, 7]
        .iter()
        .all(|&i| m8[i] < m2[i] && m8[i] < m4[i] && m8[i] < m6[i]);
    gate.record(
        "C5b",
        dip,
        format!(
            "l = 7, 8: m=2 [{}], m=4 [{}], m=6 [{}], m=8 [{}]",
            fmt_list(&m2[6..]),
            fmt_list(&m4[6..]),
            fmt_list(&m6[6..]),
            fmt_list(&m8[6..])
        ),
    );
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn c6_autocorrelation(gate: &mut Gate, bits: &BitStream) {
    let ac = autocorrelation(bits, 100).unwrap();
    let limit = 5.0 / (bits.len() as f64).sqrt();
    let mean_sigma = ac.null_std() / (ac.max_lag() as f64).sqrt();
    gate.record(
        "C6",
        ac.max_abs <= limit && ac.mean.abs() <= 3.0 * mean_sigma,
        format!(
            "lags 1..100 over 10^7 bits: max |rho| {:.2e} (limit {limit:.2e}), mean {:.2e} (3 sigma {:.2e}); reference mean {REFERENCE_AUTOCORR_MEAN:e}",
            ac.max_abs,
            ac.mean,
            3.0 * mean_sigma
        ),
    );
}

fn c7_battery(gate: &mut Gate, bits: &BitStream) {
    let cfg = BatteryConfig {
        max_sequences: 10,
        ..BatteryConfig::default()
    };
    let report = run_battery_multi(bits, &cfg).unwrap();
    let mut ok = report.sequences.len() == 10;
    let mut lines = Vec::new();
    for s in &report.summary {
        let enough = s.passed >= 8;
        let multi = s.name.starts_with("cumulative_sums") || s.name.starts_with("serial");
        let uniform = !multi
            || s.uniformity_p
                .is_some_and(|p| PassCriterion::Window.accepts(p));
        ok &= enough && uniform;
        lines.push(format!(
            "{} {}/{}{}",
            s.name,
            s.passed,
            s.sequences,
            if multi {
                format!(" (KS p {:.4})", s.uniformity_p.unwrap_or(f64::NAN))
            } else {
                String::new()
            }
        ));
    }
    gate.record(
        "C7a",
        ok,
        format!("10 x 10^6 bits, window [0.01, 0.99]: {}", lines.join("; ")),
    );

    let control = |linewidth: f64, noise: f64| -> (f64, f64) {
        let mut pc = PipelineConfig::default();
        pc.sim.linewidth_hz = linewidth;
        pc.sim.noise_sigma = noise;
        pc.run.samples = 400_000;
        let trace = stage_simulate(&pc).unwrap();
        let (adc, _) = stage_digitize(&trace, &pc).unwrap();
        let (bits, _) = stage_extract(&adc, &pc).unwrap();
        let bits = bits.slice(0, 1_000_000);
        (
            stats::monobit(&bits).unwrap().final_p,
            stats::runs(&bits).unwrap().final_p,
        )
    };
    let (mono, runs) = control(0.0, 0.0);
    gate.record(
        "C7b",
        mono < 1e-6 && runs < 1e-6,
        format!("negative control (zero linewidth, no classical noise): monobit p {mono:.2e}, runs p {runs:.2e} (limit 1e-6)"),
    );
    let (mono, runs) = control(0.0, SimConfig::default().noise_sigma);
    println!("     info: zero linewidth with default classical noise: monobit p {mono:.3e}, runs p {runs:.3e}");
}

fn c8_rate_arithmetic(gate: &mut Gate) {
    let cfg = PipelineConfig::default();
    let ratio = cfg.extract.bits_per_sample();
    let gbps = ratio * cfg.sim.sample_rate_hz / 1e9;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut law = true;
    for _ in 0..200 {
        let m = rng.random_range(1..=12);
        let n = rng.random_range(0..5000);
        let codes: Vec<u16> = (0..n).map(|_| rng.random::<u16>() & 0x0FFF).collect();
        let (bits, stats) = extract_codes(&codes, &ExtractorConfig::new(m).unwrap()).unwrap();
        law &= bits.len() == (n / 2) * m as usize && stats.dropped_samples == (n % 2) as u64;
    }
    gate.record(
        "C8",
        ratio == 3.0 && gbps == 5.4 && law,
        format!("{ratio} bits per input sample, {gbps} Gbps at 1.8 GSPS; length law bits = floor(n/2) * m on 200 random inputs: {}", if law { "exact" } else { "violated" }),
    );
}

fn c9_throughput(gate: &mut Gate) {
    let cfg = ExtractorConfig::new(6).unwrap();
    let r = bench_extract(
        &cfg,
        1 << 24,
        Duration::from_secs(2),
        REALTIME_OUTPUT_BYTES_PER_SEC,
    )
    .unwrap();
    let enforce = std::env::var("QRNG_ENFORCE_BENCH").is_ok_and(|v| v == "1");
    let detail = format!(
        "m = 6 single core: {:.0} MB/s output ({:.2} Gbps), threshold {:.0} MB/s{}",
        r.output_bytes_per_sec / 1e6,
        r.output_gbps,
        r.threshold_bytes_per_sec / 1e6,
        if enforce {
            ""
        } else {
            " (informative; QRNG_ENFORCE_BENCH=1 to enforce)"
        }
    );
    if enforce || r.passed {
        gate.record("C9", r.passed, detail);
    } else {
        println!("C9   INFO below threshold: {detail}");
    }
}

fn c10_determinism(gate: &mut Gate) {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = Vec::new();
    for dir in &dirs {
        let mut cfg = PipelineConfig::default();
        cfg.run.samples = 400_000;
        cfg.run.out_dir = dir.path().to_path_buf();
        pipeline::cmd_pipeline(&cfg).unwrap();
        files.push(std::fs::read(dir.path().join(pipeline::BITS_FILE)).unwrap());
    }
    let runs_equal = files[0] == files[1] && !files[0].is_empty();

    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let codes: Vec<u16> = (0..1_000_003)
        .map(|_| rng.random::<u16>() & 0x0FFF)
        .collect();
    let mut chunks_equal = true;
    for m in [1, 3, 6, 8, 12] {
        let cfg = ExtractorConfig::new(m).unwrap();
        let (whole, _) = extract_codes(&codes, &cfg).unwrap();
        let mut ex = Extractor::new(cfg).unwrap();
        let mut at = 0;
        while at < codes.len() {
            let take = rng.random_range(1..70_000).min(codes.len() - at);
            ex.push(&codes[at..at + take]);
            at += take;
        }
        let (parts, _) = ex.finish();
        chunks_equal &= whole == parts;
    }
    gate.record(
        "C10",
        runs_equal && chunks_equal,
        format!(
            "repeated pipeline runs byte-identical: {runs_equal}; random-chunk vs one-shot extraction byte-identical: {chunks_equal}"
        ),
    );
}

fn c11_reference_vectors(gate: &mut Gate) {
    const E100: &str = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";
    const L128: &str = "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";
    use qrng_core::stats::NistTest as T;
    let p = |test: T, s: &str| -> TestOutcome {
        stats::run_unchecked(test, &BitStream::from_bit_str(s).unwrap()).unwrap()
    };
    // (name, computed, oracle)
    let rows: Vec<(&str, f64, f64)> = vec![
        (
            "frequency n=10",
            p(T::Frequency, "1011010101").final_p,
            0.527089,
        ),
        ("frequency e100", p(T::Frequency, E100).final_p, 0.109599),
        (
            "block_frequency n=10 M=3",
            p(T::BlockFrequency { block_len: 3 }, "0110011010").final_p,
            0.801252,
        ),
        (
            "block_frequency e100 M=10",
            p(T::BlockFrequency { block_len: 10 }, E100).final_p,
            0.706438,
        ),
        ("runs n=10", p(T::Runs, "1001101011").final_p, 0.147232),
        ("runs e100", p(T::Runs, E100).final_p, 0.500798),
        (
            "longest_run n=128",
            p(T::LongestRun, L128).final_p,
            0.180598,
        ),
        (
            "cumulative_sums n=10 forward",
            p(T::CumulativeSums, "1011010111").p_values[0],
            0.411585,
        ),
        (
            "cumulative_sums e100 forward",
            p(T::CumulativeSums, E100).p_values[0],
            0.219194,
        ),
        (
            "cumulative_sums e100 reverse",
            p(T::CumulativeSums, E100).p_values[1],
            0.114866,
        ),
        (
            "serial n=10 m=3 p1",
            p(T::Serial { m: 3 }, "0011011101").p_values[0],
            0.808792,
        ),
        (
            "serial n=10 m=3 p2",
            p(T::Serial { m: 3 }, "0011011101").p_values[1],
            0.670320,
        ),
        (
            "approximate_entropy n=10 m=3",
            p(T::ApproximateEntropy { m: 3 }, "0100110101").final_p,
            0.261961,
        ),
        (
            "approximate_entropy e100 m=2",
            p(T::ApproximateEntropy { m: 2 }, E100).final_p,
            0.235301,
        ),
        ("dft n=10", p(T::Dft, "1001010011").final_p, 0.029523),
        ("dft e100", p(T::Dft, E100).final_p, 0.646355),
    ];
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for (name, got, want) in &rows {
        let diff = (got - want).abs();
        worst = worst.max(diff);
        if diff >= 1e-3 {
            bad.push(format!("{name}: {got:.6} vs {want:.6}"));
        }
    }
    gate.record(
        "C11",
        bad.is_empty(),
        format!(
            "{} worked-example vectors, max |p - oracle| {worst:.2e} (limit 1e-3){}",
            rows.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; off: {}", bad.join(", "))
            }
        ),
    );
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: Vec::new() };
    c1_oracle_equivalence(&mut gate);
    c2_phase_statistics(&mut gate);
    c3_distribution_shape(&mut gate);

    let mut cfg = PipelineConfig::default();
    cfg.run.samples = SAMPLES;
    let trace = stage_simulate(&cfg).unwrap();
    let (adc, _) = stage_digitize(&trace, &cfg).unwrap();
    drop(trace);
    c4_min_entropy(&mut gate, &adc.codes);
    c5_normalized_min_entropy(&mut gate, &adc.codes);
    let bits = first_bits(&adc.codes, 6, BITS);
    c6_autocorrelation(&mut gate, &bits);
    c7_battery(&mut gate, &bits);

    c8_rate_arithmetic(&mut gate);
    c9_throughput(&mut gate);
    c10_determinism(&mut gate);
    c11_reference_vectors(&mut gate);

    if gate.failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {}", gate.failed.join(", "));
        ExitCode::FAILURE
    }
}
