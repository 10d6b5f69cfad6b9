//! Delay-loop interferometer driven by a phase-diffusing laser.
//!
//! The laser field entering port 1 of a 2×2 50/50 beam splitter is
//! `A·exp[iωt + iφ(t)]`. One output of the splitter is spliced back onto input
//! port 2 through a fibre delay line of delay Δt, so port 2 carries the sum of
//! every earlier circulation:
//!
//! ```text
//! E₂(t) = A · Σ_{k=1..N} r^k · exp[iω(t − kΔt) + iφ(t − kΔt)]
//! ```
//!
//! where `r` is the per-circulation amplitude factor (splitter ratio composed
//! with loop loss). The photodetector sits on the difference port, so with the
//! global phase `ωt + φ(t)` factored out and `A ≡ 1`
//!
//! ```text
//! I(t) = |1 − Σ_k r^k · exp[i(−kθ + φ(t − kΔt) − φ(t))]|²,    θ = ωΔt mod 2π
//! ```
//!
//! normalised so that a disabled loop (`r = 0`) gives exactly 1. Expanding the
//! square yields a DC term `1 + Σ r^{2k}`, a single sum of
//! `−2r^k cos(kθ + Δφ^k)` beating terms against the direct beam, and a double
//! sum of `2r^k r^j cos((k−j)θ + φ(t−jΔt) − φ(t−kΔt))` beats between
//! circulations. [`intensity_direct`] evaluates the field sum,
//! [`intensity_expansion`] the expanded trigonometric form; the two are
//! cross-checked in the tests.
//!
//! The phase φ is a Wiener process sampled on the ADC grid: each grid step adds
//! an independent `N(0, 2πΔf/f_s)` increment, so a delay of Δt accumulates
//! variance `2πΔfΔt`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Amplitude left after one circulation: the 50/50 split (1/√2) times 0.3 dB of loop loss.
pub fn default_loop_amplitude() -> f64 {
    FRAC_1_SQRT_2 * 10f64.powf(-0.3 / 20.0)
}

/// Largest tolerated `r^N`; the neglected circulations then weigh below 1e-8 in intensity.
pub const TRUNCATION_LIMIT: f64 = 1e-4;

/// Phases are re-referenced once |φ| exceeds this, keeping `sin_cos` arguments small.
const REBASE_THRESHOLD: f64 = 1024.0;

/// Samples generated per internal block of [`IntensitySimulator`].
const BLOCK: usize = 1 << 16;

/// Physical and numerical parameters of the interferometer model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Laser linewidth Δf in Hz.
    pub linewidth_hz: f64,
    /// Loop delay Δt in seconds.
    pub delay_s: f64,
    /// Per-circulation amplitude factor r.
    pub loop_amplitude: f64,
    /// Static interferometer phase θ = ωΔt mod 2π.
    pub static_phase_rad: f64,
    /// Truncation order N of the circulation sum.
    pub max_circulations: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
    /// Corner frequency of the single-pole detector response; `None` disables it.
    pub lowpass_hz: Option<f64>,
    /// Standard deviation of additive classical (electronic) noise, intensity units.
    pub noise_sigma: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            linewidth_hz: 5.5e6,
            delay_s: 20e-9,
            loop_amplitude: default_loop_amplitude(),
            static_phase_rad: PI / 2.0,
            max_circulations: 30,
            sample_rate_hz: 1.8e9,
            seed: 1,
            lowpass_hz: Some(1.8e9),
            noise_sigma: 0.2,
        }
    }
}

impl SimConfig {
    /// Loop delay in grid steps. Fails unless Δt is an integer number of sample periods.
    pub fn delay_samples(&self) -> Result<usize> {
        if !(self.delay_s > 0.0 && self.delay_s.is_finite()) {
            return Err(Error::config(format!(
                "delay_s must be > 0, got {}",
                self.delay_s
            )));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::config(format!(
                "sample_rate_hz must be > 0, got {}",
                self.sample_rate_hz
            )));
        }
        let steps = self.delay_s * self.sample_rate_hz;
        let rounded = steps.round();
        if rounded < 1.0 || (steps - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(Error::config(format!(
                "delay_s × sample_rate_hz = {steps} is not a positive integer number of samples"
            )));
        }
        Ok(rounded as usize)
    }

    /// Variance of one grid-step phase increment, 2πΔf/f_s.
    pub fn step_variance(&self) -> f64 {
        2.0 * PI * self.linewidth_hz / self.sample_rate_hz
    }

    /// Checks every invariant the simulator relies on.
    pub fn validate(&self) -> Result<()> {
        self.delay_samples()?;
        if !(self.linewidth_hz >= 0.0 && self.linewidth_hz.is_finite()) {
            return Err(Error::config(format!(
                "linewidth_hz must be >= 0, got {}",
                self.linewidth_hz
            )));
        }
        if !(self.loop_amplitude > 0.0 && self.loop_amplitude < 1.0) {
            return Err(Error::config(format!(
                "loop_amplitude must lie in (0, 1), got {}",
                self.loop_amplitude
            )));
        }
        if self.max_circulations == 0 {
            return Err(Error::config("max_circulations must be >= 1"));
        }
        let tail = self.loop_amplitude.powi(self.max_circulations as i32);
        if tail >= TRUNCATION_LIMIT {
            return Err(Error::config(format!(
                "loop_amplitude^max_circulations = {tail:.3e} must be < {TRUNCATION_LIMIT:e}; \
                 increase max_circulations"
            )));
        }
        if !self.static_phase_rad.is_finite() {
            return Err(Error::config("static_phase_rad must be finite"));
        }
        if let Some(fc) = self.lowpass_hz {
            if !(fc > 0.0 && fc.is_finite()) {
                return Err(Error::config(format!("lowpass_hz must be > 0, got {fc}")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Upper bound of the detected intensity: every field term aligned.
    pub fn intensity_upper_bound(&self) -> f64 {
        let amp: f64 = (1..=self.max_circulations)
            .map(|k| self.loop_amplitude.powi(k as i32))
            .sum();
        (1.0 + amp).powi(2)
    }
}

/// Wiener phase process on the sample grid.
///
/// Keeps the current phase plus a ring of the last `N·D` values, where `D` is the
/// loop delay in grid steps, so that φ(t − kΔt) is available for every k ≤ N.
#[derive(Debug, Clone)]
pub struct PhaseState {
    /// Past phases φ(t−1) … φ(t−N·D); `head` points at the oldest entry.
    ring: Vec<f64>,
    head: usize,
    current: f64,
    delay_samples: usize,
    step_variance: f64,
    step_std: f64,
    rng: ChaCha20Rng,
}

impl PhaseState {
    /// Builds a state from an explicit phase history (oldest first) and current phase.
    ///
    /// `history.len()` must be a non-zero multiple of `delay_samples`. The state
    /// is frozen: [`advance`](Self::advance) adds zero-variance steps.
    pub fn from_phases(history: Vec<f64>, current: f64, delay_samples: usize) -> Result<Self> {
        if delay_samples == 0 || history.is_empty() || !history.len().is_multiple_of(delay_samples)
        {
            return Err(Error::config(format!(
                "history length {} must be a non-zero multiple of delay_samples {}",
                history.len(),
                delay_samples
            )));
        }
        Ok(PhaseState {
            ring: history,
            head: 0,
            current,
            delay_samples,
            step_variance: 0.0,
            step_std: 0.0,
            rng: ChaCha20Rng::seed_from_u64(0),
        })
    }

    pub fn step_variance(&self) -> f64 {
        self.step_variance
    }

    pub fn delay_samples(&self) -> usize {
        self.delay_samples
    }

    /// Number of delays of history held.
    pub fn circulations(&self) -> usize {
        self.ring.len() / self.delay_samples
    }

    pub fn buffer_len(&self) -> usize {
        self.ring.len()
    }

    /// φ(t − lag) in grid steps; `lag == 0` is the current phase.
    ///
    /// Panics if `lag` exceeds the buffer length.
    pub fn phase_at(&self, lag: usize) -> f64 {
        let len = self.ring.len();
        assert!(lag <= len, "lag {lag} beyond phase history of {len} steps");
        if lag == 0 {
            self.current
        } else {
            self.ring[(self.head + len - lag) % len]
        }
    }

    /// φ(t − kΔt).
    pub fn phase_at_delay(&self, k: usize) -> f64 {
        self.phase_at(k * self.delay_samples)
    }

    /// Δφ^k = φ(t) − φ(t − kΔt).
    pub fn delay_difference(&self, k: usize) -> f64 {
        self.current - self.phase_at_delay(k)
    }

    /// Moves one grid step forward.
    pub fn advance(&mut self) {
        let z: f64 = self.rng.sample(StandardNormal);
        self.push(self.current + self.step_std * z);
    }

    fn push(&mut self, next: f64) {
        let len = self.ring.len();
        self.ring[self.head] = self.current;
        self.head = (self.head + 1) % len;
        self.current = next;
        if self.current.abs() > REBASE_THRESHOLD {
            let offset = self.current;
            self.ring.iter_mut().for_each(|p| *p -= offset);
            self.current = 0.0;
        }
    }

    /// Phases φ(t − N·D) … φ(t), oldest first.
    fn window(&self) -> Vec<f64> {
        let len = self.ring.len();
        let mut out = Vec::with_capacity(len + 1);
        out.extend_from_slice(&self.ring[self.head..]);
        out.extend_from_slice(&self.ring[..self.head]);
        out.push(self.current);
        debug_assert_eq!(out.len(), len + 1);
        out
    }
}

/// Creates the phase process for `cfg`, burnt in over `N·D` steps so that every
/// delayed difference is already stationary at the first output sample.
pub fn new_phase_process(cfg: &SimConfig) -> Result<PhaseState> {
    cfg.validate()?;
    let delay_samples = cfg.delay_samples()?;
    let len = cfg.max_circulations * delay_samples;
    let step_variance = cfg.step_variance();
    let mut state = PhaseState {
        ring: vec![0.0; len],
        head: 0,
        current: 0.0,
        delay_samples,
        step_variance,
        step_std: step_variance.sqrt(),
        rng: ChaCha20Rng::seed_from_u64(cfg.seed),
    };
    for _ in 0..len {
        state.advance();
    }
    Ok(state)
}

/// Which beam-splitter output the photodetector watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorPort {
    /// `(E₁ − E₂)/√2`; reproduces the expanded intensity formula.
    Difference,
    /// `(E₁ + E₂)/√2`.
    Sum,
}

/// `r^k · e^{−ikθ}` for k = 1..=N.
fn loop_coefficients(loop_amplitude: f64, static_phase: f64, n: usize) -> Vec<Complex64> {
    (1..=n)
        .map(|k| Complex64::from_polar(loop_amplitude.powi(k as i32), -(k as f64) * static_phase))
        .collect()
}

/// Detected intensity from the direct field superposition at the difference port.
pub fn intensity_direct(state: &PhaseState, cfg: &SimConfig) -> f64 {
    intensity_direct_at(state, cfg, DetectorPort::Difference)
}

/// Direct field superposition at either splitter output, normalised so `r = 0` gives 1.
///
/// Uses the first `min(cfg.max_circulations, state.circulations())` circulations.
pub fn intensity_direct_at(state: &PhaseState, cfg: &SimConfig, port: DetectorPort) -> f64 {
    let n = cfg.max_circulations.min(state.circulations());
    let coeffs = loop_coefficients(cfg.loop_amplitude, cfg.static_phase_rad, n);
    let now = state.phase_at(0);
    let delayed: Complex64 = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * Complex64::from_polar(1.0, state.phase_at_delay(i + 1) - now))
        .sum();
    let field = match port {
        DetectorPort::Difference => Complex64::new(1.0, 0.0) - delayed,
        DetectorPort::Sum => Complex64::new(1.0, 0.0) + delayed,
    };
    field.norm_sqr()
}

/// Detected intensity from the expanded form: DC term, beats of each circulation
/// against the direct beam, and beats between pairs of circulations.
pub fn intensity_expansion(state: &PhaseState, cfg: &SimConfig) -> f64 {
    let n = cfg.max_circulations.min(state.circulations());
    let r = cfg.loop_amplitude;
    let theta = cfg.static_phase_rad;
    let amp: Vec<f64> = (0..=n).map(|k| r.powi(k as i32)).collect();

    let dc = 1.0 + (1..=n).map(|k| amp[k] * amp[k]).sum::<f64>();

    let direct_beats: f64 = (1..=n)
        .map(|k| -2.0 * amp[k] * (k as f64 * theta + state.delay_difference(k)).cos())
        .sum();

    let mut loop_beats = 0.0;
    for k in 1..=n {
        let older = state.phase_at_delay(k);
        let inner: f64 = (1..k)
            .map(|j| {
                let dphi = state.phase_at_delay(j) - older;
                amp[j] * ((k - j) as f64 * theta + dphi).cos()
            })
            .sum();
        loop_beats += 2.0 * amp[k] * inner;
    }

    dc + direct_beats + loop_beats
}

/// Phase-independent part of the intensity, `1 + Σ_{k=1..N} r^{2k}`.
pub fn dc_component(cfg: &SimConfig) -> f64 {
    let r2 = cfg.loop_amplitude * cfg.loop_amplitude;
    1.0 + (1..=cfg.max_circulations)
        .map(|k| r2.powi(k as i32))
        .sum::<f64>()
}

/// Simulated photodetector output.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    /// Intensities in units of A² (A ≡ 1), one per sample period.
    pub samples: Vec<f64>,
    /// The deterministic DC component `1 + Σ r^{2k}`.
    pub dc_level: f64,
}

/// Sample moments of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl IntensityTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Population moments (divide by n). `None` for an empty trace.
    pub fn moments(&self) -> Option<Moments> {
        moments(&self.samples)
    }

    /// The same trace with the DC component subtracted, as an AC-coupled front end would see it.
    pub fn ac_coupled(&self) -> IntensityTrace {
        IntensityTrace {
            samples: self.samples.iter().map(|x| x - self.dc_level).collect(),
            dc_level: 0.0,
        }
    }

    /// Equal-width histogram over `[min, max]` of the samples, normalised to unit area.
    pub fn histogram(&self, bins: usize) -> Vec<HistogramBin> {
        if self.samples.is_empty() || bins == 0 {
            return Vec::new();
        }
        let lo = self.samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo {
            (hi - lo) / bins as f64
        } else {
            1.0
        };
        let mut counts = vec![0u64; bins];
        for &x in &self.samples {
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let total = self.samples.len() as f64;
        counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| HistogramBin {
                center: lo + (i as f64 + 0.5) * width,
                count,
                density: count as f64 / (total * width),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center: f64,
    pub count: u64,
    pub density: f64,
}

pub(crate) fn moments(xs: &[f64]) -> Option<Moments> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Some(Moments {
        mean,
        std_dev: m2.sqrt(),
        skewness,
        excess_kurtosis,
    })
}

/// Streaming generator of detected intensity.
///
/// Each emitted sample is evaluated on the current phase state, after which the
/// state advances one grid step. The detector low-pass and classical noise are
/// applied in that order. The noise models the amplifier after the photodiode,
/// so a noisy sample may dip below zero. Noise comes from a separate ChaCha
/// stream so that changing `noise_sigma` leaves the phase sequence untouched.
#[derive(Debug, Clone)]
pub struct IntensitySimulator {
    state: PhaseState,
    coeffs: Vec<Complex64>,
    lowpass_alpha: Option<f64>,
    lowpass_y: Option<f64>,
    noise_sigma: f64,
    noise_rng: ChaCha20Rng,
    dc_level: f64,
}

impl IntensitySimulator {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let state = new_phase_process(cfg)?;
        let mut noise_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        noise_rng.set_stream(1);
        Ok(IntensitySimulator {
            coeffs: loop_coefficients(
                cfg.loop_amplitude,
                cfg.static_phase_rad,
                cfg.max_circulations,
            ),
            lowpass_alpha: cfg
                .lowpass_hz
                .map(|fc| 1.0 - (-2.0 * PI * fc / cfg.sample_rate_hz).exp()),
            lowpass_y: None,
            noise_sigma: cfg.noise_sigma,
            noise_rng,
            dc_level: dc_component(cfg),
            state,
        })
    }

    pub fn dc_level(&self) -> f64 {
        self.dc_level
    }

    pub fn phase_state(&self) -> &PhaseState {
        &self.state
    }

    /// Appends the next `n` samples to `out`.
    pub fn fill(&mut self, n: usize, out: &mut Vec<f64>) {
        out.reserve(n);
        let mut left = n;
        while left > 0 {
            let take = left.min(BLOCK);
            self.block(take, out);
            left -= take;
        }
    }

    pub fn next_chunk(&mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        self.fill(n, &mut out);
        out
    }

    fn block(&mut self, n: usize, out: &mut Vec<f64>) {
        let d = self.state.delay_samples;
        let history = self.state.ring.len();
        let mut phases = self.state.window();
        phases.reserve(n);
        for _ in 1..n {
            self.state.advance();
            phases.push(self.state.current);
        }
        self.state.advance();

        let phasors: Vec<Complex64> = phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p))
            .collect();
        let start = out.len();
        out.extend((0..n).map(|s| {
            let base = history + s;
            let delayed: Complex64 = self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * phasors[base - (i + 1) * d])
                .sum();
            (Complex64::new(1.0, 0.0) - delayed * phasors[base].conj()).norm_sqr()
        }));

        let samples = &mut out[start..];
        if let Some(alpha) = self.lowpass_alpha {
            let mut y = self.lowpass_y.unwrap_or(samples[0]);
            for x in samples.iter_mut() {
                y += alpha * (*x - y);
                *x = y;
            }
            self.lowpass_y = Some(y);
        }
        if self.noise_sigma > 0.0 {
            for x in samples.iter_mut() {
                let z: f64 = self.noise_rng.sample(StandardNormal);
                *x += self.noise_sigma * z;
            }
        }
    }
}

/// Simulates `n_samples` detector samples at the configured sample rate.
pub fn simulate_intensity_stream(cfg: &SimConfig, n_samples: usize) -> Result<IntensityTrace> {
    if n_samples == 0 {
        return Err(Error::config("n_samples must be >= 1"));
    }
    let mut sim = IntensitySimulator::new(cfg)?;
    let samples = sim.next_chunk(n_samples);
    Ok(IntensityTrace {
        samples,
        dc_level: sim.dc_level(),
    })
}
