//! Detection and localization of mean shifts in multivariate random fields on
//! a d-dimensional lattice.
//!
//! The observed field is scanned with a family of axis-aligned boxes. For each
//! box the CUSUM contrast (mean inside the box minus mean over its complement)
//! is computed from a prefix-sum table, and the largest contrast norm is the
//! scan statistic. Critical values come either from an exponential tail bound
//! for m-dependent fields combined with a union bound over the scanning family,
//! or from Monte Carlo calibration on simulated null fields.
//!
//! Module map:
//!
//! * [`field`] and [`io`]: lattice types, anomaly injection, the `FLD1` file format.
//! * [`window`]: the scanning family and its enumeration.
//! * [`prefix`] and [`scan`]: box sums, contrasts and the scan statistic.
//! * [`bounds`]: tail bounds and theoretical critical values.
//! * [`simulate`] and [`rng`]: block-constructed m-dependent Gaussian fields.
//! * [`calibrate`]: empirical critical values and rejection rates.
//! * [`detect`]: the rejection rule and localization report.

pub mod bounds;
pub mod calibrate;
pub mod detect;
mod error;
pub mod field;
pub mod io;
pub mod prefix;
pub mod rng;
pub mod scan;
pub mod simulate;
pub mod window;

pub use bounds::{
    critical_value, critical_value_for_norm, finite_p_bound, fwer_bound, per_window_bound,
    BoundQuery, BranchRule, CriticalValue, ModelParams, VolumeProfile,
};
pub use calibrate::{empirical_critical_value, empirical_rates, Calibration, CalibrationConfig};
pub use detect::{expected_shift, global_test, TestReport, Threshold, ThresholdSource};
pub use error::{Error, Result};
pub use field::{inject_anomaly, AnomalySpec, FieldDims, HyperRect, MultiField};
pub use prefix::PrefixTable;
pub use scan::{
    compute_contrast, scan, scan_detailed, scan_table, write_window_dump, ContrastWeights, NormOrder,
    ScanResult, WindowContrast,
};
pub use simulate::{covariance_diagnostic, generate, CovarianceDiagnostic, SimConfig};
pub use window::{enumerate_windows, Generator, ScanSpace};
