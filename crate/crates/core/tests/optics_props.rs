//! Statistical and structural properties of the simulated interferometer.

use std::f64::consts::PI;

use proptest::prelude::*;
use qrng_core::acquisition::{calibrate_range, quantize};
use qrng_core::entropy::{histogram, min_entropy};
use qrng_core::extraction::xor_pairs;
use qrng_core::optics::{
    intensity_direct, new_phase_process, simulate_intensity_stream, IntensityTrace, PhaseState,
    SimConfig,
};

fn random_state(seed: u64, circulations: usize, d: usize) -> PhaseState {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let history: Vec<f64> = (0..circulations * d)
        .map(|_| rng.random_range(-PI..PI))
        .collect();
    PhaseState::from_phases(history, rng.random_range(-PI..PI), d).unwrap()
}

/// Largest change in intensity from dropping every circulation beyond `n`:
/// with tail field t = r^(n+1)/(1-r) and |field| ≤ 1/(1-r), the change is at
/// most 2t/(1-r) + t².
fn tail_bound(r: f64, n: usize) -> f64 {
    let t = r.powi(n as i32 + 1) / (1.0 - r);
    2.0 * t / (1.0 - r) + t * t
}

fn cfg_n(theta: f64, n: usize) -> SimConfig {
    SimConfig {
        static_phase_rad: theta,
        max_circulations: n,
        ..SimConfig::default()
    }
}

fn post_xor_min_entropy(trace: &IntensityTrace) -> f64 {
    let adc = calibrate_range(trace, 4.0).unwrap();
    let codes = quantize(trace, &adc).codes;
    min_entropy(&histogram(&xor_pairs(&codes).words, 12).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn truncation_converges(seed in any::<u64>(), d in 1usize..4, theta in -PI..PI) {
        let state = random_state(seed, 120, d);
        let i30 = intensity_direct(&state, &cfg_n(theta, 30));
        let i60 = intensity_direct(&state, &cfg_n(theta, 60));
        let i120 = intensity_direct(&state, &cfg_n(theta, 120));
        let r = SimConfig::default().loop_amplitude;
        prop_assert!((i30 - i60).abs() <= tail_bound(r, 30) + 1e-12);
        prop_assert!((i60 - i120).abs() < 1e-8);
    }

    #[test]
    fn noiseless_intensity_is_bounded(
        seed in any::<u64>(),
        theta in -PI..PI,
        r in 0.05f64..0.8,
        linewidth in 1e5f64..5e7,
        lowpass in proptest::option::of(1e8f64..5e9),
    ) {
        let cfg = SimConfig {
            seed,
            static_phase_rad: theta,
            loop_amplitude: r,
            max_circulations: 60,
            linewidth_hz: linewidth,
            lowpass_hz: lowpass,
            noise_sigma: 0.0,
            ..SimConfig::default()
        };
        let trace = simulate_intensity_stream(&cfg, 4000).unwrap();
        let upper = cfg.intensity_upper_bound() + 1e-9;
        prop_assert!(trace.samples.iter().all(|&x| x >= 0.0 && x <= upper));
    }
}

#[test]
fn truncation_gap_at_thirty_is_tail_sized() {
    // The N = 30 truncation error is of order r^31, well above 1e-8 at the
    // default loop amplitude.
    let r = SimConfig::default().loop_amplitude;
    let mut worst: f64 = 0.0;
    for seed in 0..500 {
        let state = random_state(seed, 60, 2);
        let a = intensity_direct(&state, &cfg_n(0.3, 30));
        let b = intensity_direct(&state, &cfg_n(0.3, 60));
        worst = worst.max((a - b).abs());
    }
    assert!(
        worst > 1e-8 && worst <= tail_bound(r, 30),
        "worst gap {worst:e}"
    );
}

#[test]
fn phase_increments_are_white_gaussian_steps() {
    let cfg = SimConfig {
        seed: 31,
        ..SimConfig::default()
    };
    let mut state = new_phase_process(&cfg).unwrap();
    let m = 200_000;
    let mut inc = Vec::with_capacity(m);
    for _ in 0..m {
        state.advance();
        // rebasing shifts the whole history, so take the step from the ring
        inc.push(state.phase_at(0) - state.phase_at(1));
    }
    let n = m as f64;
    let mean = inc.iter().sum::<f64>() / n;
    let var = inc.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    assert!(
        (var / cfg.step_variance() - 1.0).abs() < 0.05,
        "variance {var}"
    );
    let limit = 5.0 / n.sqrt();
    for lag in 1..=5 {
        let cov = inc
            .iter()
            .zip(&inc[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n - lag as f64);
        let rho = cov / var;
        assert!(rho.abs() < limit, "lag {lag}: rho {rho}");
    }
}

#[test]
fn delay_differences_scale_with_order() {
    let cfg = SimConfig {
        seed: 32,
        ..SimConfig::default()
    };
    let mut state = new_phase_process(&cfg).unwrap();
    let per_delay = cfg.step_variance() * state.delay_samples() as f64;
    let n = 300_000;
    let mut sq = [0.0f64; 3];
    for _ in 0..n {
        for (k, acc) in sq.iter_mut().enumerate() {
            *acc += state.delay_difference(k + 1).powi(2);
        }
        state.advance();
    }
    for (k, acc) in sq.iter().enumerate() {
        let var = acc / n as f64;
        let expected = (k + 1) as f64 * per_delay;
        assert!(
            (var / expected - 1.0).abs() < 0.05,
            "k = {}: {var} vs {expected}",
            k + 1
        );
    }
}

#[test]
fn removing_the_dc_level_leaves_min_entropy_unchanged() {
    let trace = simulate_intensity_stream(&SimConfig::default(), 1_000_000).unwrap();
    let kept = post_xor_min_entropy(&trace);
    let removed = post_xor_min_entropy(&trace.ac_coupled());
    assert!((kept - removed).abs() < 0.02, "{kept} vs {removed}");
}

#[test]
fn static_phase_sweep_is_mirror_symmetric() {
    // θ → −θ with φ → −φ conjugates every field term, so the intensity
    // statistics of ±θ agree up to sampling error.
    let n = 1_000_000;
    let mut rows = Vec::new();
    for step in 0..=8 {
        let theta = step as f64 * PI / 8.0;
        let h = |t: f64| {
            let cfg = SimConfig {
                static_phase_rad: t,
                ..SimConfig::default()
            };
            post_xor_min_entropy(&simulate_intensity_stream(&cfg, n).unwrap())
        };
        let (plus, minus) = (h(theta), h(-theta));
        println!("theta {theta:.4}: H_min {plus:.3} / mirrored {minus:.3}");
        assert!((5.0..12.0).contains(&plus), "theta {theta}: {plus}");
        rows.push((theta, plus, minus));
    }
    for (theta, plus, minus) in &rows {
        assert!(
            (plus - minus).abs() < 0.25,
            "theta {theta}: {plus} vs {minus}"
        );
    }
    let spread = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max)
        - rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    assert!(
        spread > 0.2,
        "min-entropy insensitive to the static phase: spread {spread}"
    );
}
