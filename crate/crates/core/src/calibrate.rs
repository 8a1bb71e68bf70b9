//! Monte Carlo calibration: the empirical `(1 - α)` quantile of the scan
//! statistic under the null, and empirical rejection rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::AnomalySpec;
use crate::rng::derive_seed;
use crate::scan::{scan, NormOrder, ScanResult};
use crate::simulate::{generate, SimConfig};
use crate::window::ScanSpace;

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    pub reps: usize,
    pub alpha: f64,
    /// Null model. Its `seed` and `anomaly` are ignored; each replication
    /// gets a seed derived from `master_seed`.
    pub sim: SimConfig,
    pub space: ScanSpace,
    pub norm: NormOrder,
    pub master_seed: u64,
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::Domain(format!("reps = {} must be at least 2", self.reps)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.sim.dims != *self.space.dims() {
            return Err(Error::Dimension("simulation and scanning extents differ".into()));
        }
        self.sim.validate()
    }

    /// 1-based rank of the order statistic used as the quantile:
    /// `ceil((1 - α) · reps)`.
    pub fn quantile_rank(&self) -> usize {
        let r = ((1.0 - self.alpha) * self.reps as f64 - 1e-9).ceil() as usize;
        r.clamp(1, self.reps)
    }

    fn rep_config(&self, rep: usize, anomaly: Option<&AnomalySpec>) -> SimConfig {
        SimConfig {
            seed: derive_seed(self.master_seed, rep as u64),
            anomaly: anomaly.cloned(),
            ..self.sim.clone()
        }
    }
}

/// Result of [`empirical_critical_value`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub y_hat: f64,
    pub alpha: f64,
    pub reps: usize,
    /// 1-based rank of `y_hat` in `sample`.
    pub rank: usize,
    /// The rank equals `reps`, so `y_hat` is the sample maximum.
    pub rank_is_max: bool,
    /// All statistics, sorted ascending.
    pub sample: Vec<f64>,
}

impl Calibration {
    /// Upper order statistic at rank `ceil((1 - α)·reps)` of the stored sample.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
        }
        let reps = self.sample.len();
        let r = (((1.0 - alpha) * reps as f64 - 1e-9).ceil() as usize).clamp(1, reps);
        Ok(self.sample[r - 1])
    }
}

/// Scans `reps` simulated fields, optionally with an injected anomaly, and
/// returns the results in replication order.
pub fn replicate(config: &CalibrationConfig, anomaly: Option<&AnomalySpec>) -> Result<Vec<ScanResult>> {
    config.validate()?;
    if let Some(a) = anomaly {
        a.validate(&config.sim.dims)?;
    }
    (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let field = generate(&config.rep_config(rep, anomaly))?;
            scan(&field, &config.space, config.norm)
        })
        .collect()
}

/// Empirical critical value `ŷ_α` from simulated null fields.
pub fn empirical_critical_value(config: &CalibrationConfig) -> Result<Calibration> {
    let mut sample: Vec<f64> = replicate(config, None)?.into_iter().map(|r| r.statistic).collect();
    sample.sort_by(f64::total_cmp);
    let rank = config.quantile_rank();
    Ok(Calibration {
        y_hat: sample[rank - 1],
        alpha: config.alpha,
        reps: config.reps,
        rank,
        rank_is_max: rank == config.reps,
        sample,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RejectionRate {
    pub rate: f64,
    pub rejections: usize,
    pub reps: usize,
}

/// Fraction of replications with `T_W ≥ threshold`. Without an anomaly this
/// is the empirical family-wise error rate; with one it is the power.
pub fn empirical_rates(
    config: &CalibrationConfig,
    threshold: f64,
    anomaly: Option<&AnomalySpec>,
) -> Result<RejectionRate> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::Domain(format!("threshold = {threshold} must be finite and non-negative")));
    }
    let results = replicate(config, anomaly)?;
    Ok(rate_of(results.iter().map(|r| r.statistic), threshold))
}

pub fn rate_of(stats: impl ExactSizeIterator<Item = f64>, threshold: f64) -> RejectionRate {
    let reps = stats.len();
    let rejections = stats.filter(|&t| t >= threshold).count();
    RejectionRate { rate: rejections as f64 / reps as f64, rejections, reps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldDims, HyperRect};
    use crate::window::Generator;

    fn small(reps: usize, alpha: f64, seed: u64) -> CalibrationConfig {
        let dims = FieldDims::new(vec![12, 12], 2).unwrap();
        CalibrationConfig {
            reps,
            alpha,
            sim: SimConfig { dims: dims.clone(), m: 2, sigma: 1.0, seed: 0, anomaly: None },
            space: ScanSpace::new(dims, 0.05, 0.5, Generator::Cubic(5)).unwrap(),
            norm: NormOrder::Infinity,
            master_seed: seed,
        }
    }

    #[test]
    fn rank_for_five_hundred_reps() {
        assert_eq!(small(500, 0.05, 0).quantile_rank(), 475);
        assert_eq!(small(100, 0.01, 0).quantile_rank(), 99);
        assert_eq!(small(10, 0.05, 0).quantile_rank(), 10);
        assert_eq!(small(2, 0.5, 0).quantile_rank(), 1);
    }

    #[test]
    fn reproducible_and_sorted() {
        let a = empirical_critical_value(&small(40, 0.1, 9)).unwrap();
        let b = empirical_critical_value(&small(40, 0.1, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.sample.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.y_hat, a.sample[35]);
        let c = empirical_critical_value(&small(40, 0.1, 10)).unwrap();
        assert_ne!(a.sample, c.sample);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let cfg = small(30, 0.1, 77);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| empirical_critical_value(&cfg)).unwrap();
        let b = four.install(|| empirical_critical_value(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rates_at_zero_and_at_the_quantile() {
        let cfg = small(60, 0.1, 3);
        let cal = empirical_critical_value(&cfg).unwrap();
        assert_eq!(empirical_rates(&cfg, 0.0, None).unwrap().rate, 1.0);
        // Strictly above the order statistic, at most alpha of the sample remains.
        let above = cal.y_hat * (1.0 + 1e-12);
        assert!(empirical_rates(&cfg, above, None).unwrap().rate <= 0.1);
        assert!(empirical_rates(&cfg, -1.0, None).is_err());
    }

    #[test]
    fn quantile_is_monotone_in_alpha() {
        let cal = empirical_critical_value(&small(50, 0.05, 21)).unwrap();
        let mut prev = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.1, 0.2, 0.5, 0.9] {
            let q = cal.quantile(alpha).unwrap();
            assert!(q <= prev);
            prev = q;
        }
    }

    #[test]
    fn small_rep_counts_flag_the_maximum() {
        let cal = empirical_critical_value(&small(10, 0.05, 1)).unwrap();
        assert!(cal.rank_is_max);
        assert_eq!(cal.y_hat, *cal.sample.last().unwrap());
        assert!(empirical_critical_value(&small(1, 0.05, 1)).is_err());
    }

    #[test]
    fn power_grows_with_shift() {
        let cfg = small(40, 0.05, 5);
        let region = HyperRect::cube(vec![3, 3], 5);
        let mut prev = -1.0;
        for h in [0.0, 0.5, 1.0, 2.0] {
            let a = AnomalySpec { region: region.clone(), shift: vec![h, h] };
            let r = empirical_rates(&cfg, 1.0, Some(&a)).unwrap().rate;
            assert!(r >= prev, "h = {h}: {r} < {prev}");
            prev = r;
        }
        assert_eq!(prev, 1.0);
    }
}
