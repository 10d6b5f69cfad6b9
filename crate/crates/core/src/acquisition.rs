//! ADC model: auto-ranged full scale, floor (mid-rise) quantisation and saturation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::IntensityTrace;

/// Minimum trace length accepted by [`calibrate_range`].
pub const MIN_CALIBRATION_SAMPLES: usize = 10_000;

/// Default half-width of the auto-ranged full scale, in standard deviations.
pub const DEFAULT_K_SIGMA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClipPolicy {
    /// Out-of-range inputs map to code 0 or the top code.
    #[default]
    Saturate,
}

/// Resolution and full-scale range of the converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub bits: u32,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub clip_policy: ClipPolicy,
}

impl AdcConfig {
    pub fn new(bits: u32, v_min: f64, v_max: f64) -> Result<Self> {
        let cfg = AdcConfig {
            bits,
            v_min,
            v_max,
            clip_policy: ClipPolicy::Saturate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=16).contains(&self.bits) {
            return Err(Error::config(format!(
                "ADC resolution must be 4..=16 bits, got {}",
                self.bits
            )));
        }
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_max > self.v_min) {
            return Err(Error::config(format!(
                "ADC range requires v_max > v_min, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn max_code(&self) -> u16 {
        (self.levels() - 1) as u16
    }

    /// Width of one code bin.
    pub fn lsb(&self) -> f64 {
        (self.v_max - self.v_min) / self.levels() as f64
    }

    /// Centre of the bin for `code`.
    pub fn dequantize(&self, code: u16) -> f64 {
        self.v_min + (code as f64 + 0.5) * self.lsb()
    }

    /// Code for one input and whether it saturated.
    #[inline]
    pub fn code(&self, x: f64) -> (u16, bool) {
        let scaled = (x - self.v_min) / (self.v_max - self.v_min) * self.levels() as f64;
        let level = scaled.floor();
        if level < 0.0 || level.is_nan() {
            (0, true)
        } else if level >= self.levels() as f64 {
            (self.max_code(), true)
        } else {
            (level as u16, false)
        }
    }
}

/// Quantised samples plus the calibration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcStream {
    pub codes: Vec<u16>,
    pub calib: AdcConfig,
    pub clipped_count: u64,
}

impl AdcStream {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn clipped_fraction(&self) -> f64 {
        if self.codes.is_empty() {
            0.0
        } else {
            self.clipped_count as f64 / self.codes.len() as f64
        }
    }
}

/// Sets the ADC full scale to `μ ± k_sigma·σ` of the trace (12-bit resolution).
///
/// A constant trace cannot be ranged and is reported as [`Error::ZeroVariance`];
/// with the physical model that only happens when the linewidth is zero and no
/// classical noise is added.
pub fn calibrate_range(trace: &IntensityTrace, k_sigma: f64) -> Result<AdcConfig> {
    calibrate_samples(&trace.samples, k_sigma, 12)
}

/// [`calibrate_range`] on a raw slice at an arbitrary resolution.
pub fn calibrate_samples(samples: &[f64], k_sigma: f64, bits: u32) -> Result<AdcConfig> {
    if !(k_sigma > 0.0 && k_sigma.is_finite()) {
        return Err(Error::config(format!("k_sigma must be > 0, got {k_sigma}")));
    }
    if samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::insufficient(
            "ADC range calibration",
            MIN_CALIBRATION_SAMPLES,
            samples.len(),
        ));
    }
    // moments about the first sample, so a constant trace gives exactly σ = 0
    let n = samples.len() as f64;
    let origin = samples[0];
    let shift = samples.iter().map(|x| x - origin).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|x| (x - origin - shift) * (x - origin - shift))
        .sum::<f64>()
        / n;
    let mean = origin + shift;
    let sigma = var.sqrt();
    if sigma.is_nan() || sigma <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::ZeroVariance(format!(
            "trace is constant at {mean}; a zero-linewidth laser or a broken model produces no \
             fluctuations to digitise"
        )));
    }
    AdcConfig::new(bits, mean - k_sigma * sigma, mean + k_sigma * sigma)
}

/// Quantises a trace with `cfg`.
pub fn quantize(trace: &IntensityTrace, cfg: &AdcConfig) -> AdcStream {
    let mut codes = Vec::with_capacity(trace.len());
    let clipped_count = quantize_into(&trace.samples, cfg, &mut codes);
    AdcStream {
        codes,
        calib: *cfg,
        clipped_count,
    }
}

/// Appends the codes for `samples` to `out`; returns the number of saturated samples.
pub fn quantize_into(samples: &[f64], cfg: &AdcConfig, out: &mut Vec<u16>) -> u64 {
    out.reserve(samples.len());
    let mut clipped = 0u64;
    out.extend(samples.iter().map(|&x| {
        let (code, clip) = cfg.code(x);
        clipped += clip as u64;
        code
    }));
    clipped
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(samples: Vec<f64>) -> IntensityTrace {
        IntensityTrace {
            samples,
            dc_level: 0.0,
        }
    }

    #[test]
    fn constant_trace_has_zero_variance() {
        let err = calibrate_range(&trace(vec![1.7; 20_000]), 4.0).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(_)));
        assert!(err.to_string().contains("zero variance"));
        // long enough for naive summation rounding to exceed the threshold
        let long = calibrate_range(&trace(vec![1.954_512_345_678; 3_000_000]), 4.0);
        assert!(matches!(long, Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn calibration_arithmetic() {
        // μ = 2, σ = 0.25 exactly.
        let samples: Vec<f64> = (0..10_000)
            .map(|i| if i % 2 == 0 { 1.75 } else { 2.25 })
            .collect();
        let cfg = calibrate_range(&trace(samples), 4.0).unwrap();
        assert_eq!((cfg.v_min, cfg.v_max), (1.0, 3.0));
        assert_eq!(cfg.bits, 12);
    }

    #[test]
    fn short_trace_rejected() {
        let samples: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(matches!(
            calibrate_range(&trace(samples), 4.0),
            Err(Error::InsufficientData { needed: 10_000, .. })
        ));
    }

    #[test]
    fn endpoint_codes() {
        let cfg = AdcConfig::new(12, 1.0, 3.0).unwrap();
        assert_eq!(cfg.code(1.0), (0, false));
        assert_eq!(cfg.code(3.0 - 1e-12), (4095, false));
        assert_eq!(cfg.code(2.0), (2048, false));
        assert_eq!(cfg.code(3.0), (4095, true));
        assert_eq!(cfg.code(0.5), (0, true));
        assert_eq!(cfg.code(7.0), (4095, true));
    }

    #[test]
    fn clipped_samples_are_tallied() {
        let cfg = AdcConfig::new(12, 0.0, 1.0).unwrap();
        let stream = quantize(&trace(vec![-0.1, 0.2, 0.5, 1.5, 0.99]), &cfg);
        assert_eq!(stream.clipped_count, 2);
        assert_eq!(stream.codes[0], 0);
        assert_eq!(stream.codes[3], 4095);
    }

    #[test]
    fn invalid_configs() {
        assert!(AdcConfig::new(3, 0.0, 1.0).is_err());
        assert!(AdcConfig::new(17, 0.0, 1.0).is_err());
        assert!(AdcConfig::new(12, 1.0, 1.0).is_err());
        assert!(calibrate_samples(&[0.0; 20_000], -1.0, 12).is_err());
    }

    proptest! {
        #[test]
        fn quantization_is_monotone(mut xs in prop::collection::vec(-2.0f64..5.0, 1..200)) {
            let cfg = AdcConfig::new(12, 0.0, 3.0).unwrap();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let codes: Vec<u16> = xs.iter().map(|&x| cfg.code(x).0).collect();
            prop_assert!(codes.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn round_trip_within_one_lsb(x in 0.5f64..2.5, bits in 4u32..=16) {
            let cfg = AdcConfig::new(bits, 0.5, 2.5).unwrap();
            let (code, clipped) = cfg.code(x);
            prop_assert!(!clipped);
            prop_assert!(code <= cfg.max_code());
            prop_assert!((cfg.dequantize(code) - x).abs() <= cfg.lsb());
        }
    }
}
