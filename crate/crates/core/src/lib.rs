//! Software twin of a delay-loop phase-noise quantum random number generator.
//!
//! The crate follows the signal chain of the physical device:
//!
//! * [`optics`]: Wiener phase diffusion of a laser and the intensity detected
//!   behind a 2×2 beam splitter whose second port is fed by a recirculating
//!   fibre delay loop.
//! * [`acquisition`]: a 12-bit ADC model with auto-ranged full scale.
//! * [`extraction`]: pairwise XOR of ADC samples followed by m-LSB retention and
//!   bit packing (6 LSBs at 1.8 GSPS gives 5.4 Gbps).
//! * [`entropy`]: min-entropy, block-normalised min-entropy and bit
//!   autocorrelation.
//! * [`stats`]: a native subset of the SP800-22 battery with Kolmogorov-Smirnov
//!   aggregation of multiple p-values.
//! * [`pipeline`] and [`formats`]: configuration, stage orchestration and the
//!   on-disk file formats used by the `qrng` command line tool.

pub mod acquisition;
pub mod entropy;
pub mod error;
pub mod extraction;
pub mod formats;
pub mod optics;
pub mod pipeline;
pub mod stats;

pub use acquisition::{calibrate_range, quantize, AdcConfig, AdcStream};
pub use entropy::{autocorrelation, histogram, min_entropy, normalized_min_entropy, EmpiricalDist};
pub use error::{Error, Result};
pub use extraction::{extract_stream, pack_bits, take_lsb, xor_pairs, BitStream, ExtractorConfig};
pub use optics::{
    dc_component, intensity_direct, intensity_expansion, new_phase_process,
    simulate_intensity_stream, IntensityTrace, PhaseState, SimConfig,
};
