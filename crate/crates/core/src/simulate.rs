//! Centered m-dependent Gaussian fields by block construction, and an
//! empirical covariance diagnostic for choosing `m`.
//!
//! The lattice is cut into axis-aligned blocks of side `m` anchored at the
//! origin (blocks at the upper boundary are truncated when `m` does not
//! divide the extent). Each `(block, component)` pair gets one independent
//! `N(0, σ²)` draw shared by every site in the block. Sites whose block
//! indices differ on some axis are therefore independent, and sites closer
//! than `m` on every axis may be dependent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{inject_anomaly, AnomalySpec, FieldDims, MultiField};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dims: FieldDims,
    pub m: usize,
    /// Per-component standard deviation.
    pub sigma: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly: Option<AnomalySpec>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Domain("m must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {} must be positive and finite", self.sigma)));
        }
        if let Some(a) = &self.anomaly {
            a.validate(&self.dims)?;
        }
        Ok(())
    }

    /// Number of blocks along each axis.
    pub fn block_grid(&self) -> Vec<usize> {
        self.dims.dims().iter().map(|&e| e.div_ceil(self.m)).collect()
    }
}

/// Generates the field described by `config`. Same config, same bits.
pub fn generate(config: &SimConfig) -> Result<MultiField> {
    config.validate()?;
    let dims = config.dims.clone();
    let n = dims.n();
    let m = config.m;
    let grid = config.block_grid();
    let blocks: usize = grid.iter().product();

    let block_values: Vec<f64> = (0..blocks * n)
        .into_par_iter()
        .map(|i| config.sigma * rng::normal(config.seed, &[(i / n) as u64, (i % n) as u64]))
        .collect();

    let ext = dims.dims().to_vec();
    let last = *ext.last().unwrap();
    let mut values = vec![0.0; dims.len_values()];
    // One chunk per line along the last axis.
    values.par_chunks_mut(last * n).enumerate().for_each(|(line, out)| {
        let mut rem = line;
        let mut block_base = 0usize;
        let mut mult = 1usize;
        for i in (0..ext.len() - 1).rev() {
            let k = rem % ext[i];
            rem /= ext[i];
            mult *= grid[i + 1];
            block_base += (k / m) * mult;
        }
        for (j, site) in out.chunks_exact_mut(n).enumerate() {
            let b = block_base + j / m;
            site.copy_from_slice(&block_values[b * n..(b + 1) * n]);
        }
    });

    let field = MultiField::from_parts_unchecked(dims, values);
    match &config.anomaly {
        Some(a) => inject_anomaly(&field, a),
        None => Ok(field),
    }
}

/// Empirical covariance by axis and lag, averaged over components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceDiagnostic {
    /// `per_axis[a][lag]` for `lag = 0..=max_lag`; entry 0 is the variance.
    pub per_axis: Vec<Vec<f64>>,
    /// Number of site pairs behind each entry.
    pub pairs: Vec<Vec<u64>>,
    /// The field is constant in every component, so all covariances are 0.
    pub degenerate: bool,
}

impl CovarianceDiagnostic {
    /// Covariance divided by the lag-0 variance on the same axis.
    pub fn correlation(&self, axis: usize, lag: usize) -> f64 {
        let v = self.per_axis[axis][0];
        if v == 0.0 {
            0.0
        } else {
            self.per_axis[axis][lag] / v
        }
    }

    /// Smallest lag whose covariance magnitude is at most `tol` times the
    /// variance on every axis.
    pub fn suggest_m(&self, tol: f64) -> Option<usize> {
        let max_lag = self.per_axis.first()?.len() - 1;
        (1..=max_lag).find(|&lag| (0..self.per_axis.len()).all(|a| self.correlation(a, lag).abs() <= tol))
    }
}

/// For each axis and lag, the mean of `(x_k - μ)(x_{k+lag·e_axis} - μ)` over
/// all pairs inside the window, averaged over components. `μ` is the
/// per-component sample mean.
pub fn covariance_diagnostic(field: &MultiField, max_lag: usize) -> Result<CovarianceDiagnostic> {
    let dims = field.dims();
    let ext = dims.dims();
    let min_extent = *ext.iter().min().unwrap();
    if max_lag >= min_extent {
        return Err(Error::Domain(format!("max_lag = {max_lag} must be below the smallest extent {min_extent}")));
    }
    let n = dims.n();
    let sites = dims.sites();
    let vals = field.values();
    let mut mean = vec![0.0; n];
    for site in vals.chunks_exact(n) {
        for (m, v) in mean.iter_mut().zip(site) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= sites as f64);
    let degenerate = (0..n).all(|c| vals.iter().skip(c).step_by(n).all(|&v| v == vals[c]));

    let d = dims.d();
    let mut site_strides = vec![1usize; d];
    for i in (0..d - 1).rev() {
        site_strides[i] = site_strides[i + 1] * ext[i + 1];
    }

    let mut per_axis = Vec::with_capacity(d);
    let mut pairs = Vec::with_capacity(d);
    for axis in 0..d {
        let stride = site_strides[axis];
        let (covs, counts): (Vec<f64>, Vec<u64>) = (0..=max_lag)
            .into_par_iter()
            .map(|lag| {
                if degenerate {
                    let count = (sites / ext[axis] * (ext[axis] - lag)) as u64;
                    return (0.0, count);
                }
                let mut acc = 0.0;
                let mut count = 0u64;
                for s in 0..sites {
                    let k = (s / stride) % ext[axis];
                    if k + lag >= ext[axis] {
                        continue;
                    }
                    let t = s + lag * stride;
                    for c in 0..n {
                        acc += (vals[s * n + c] - mean[c]) * (vals[t * n + c] - mean[c]);
                    }
                    count += 1;
                }
                (acc / (count as f64 * n as f64), count)
            })
            .unzip();
        per_axis.push(covs);
        pairs.push(counts);
    }
    Ok(CovarianceDiagnostic { per_axis, pairs, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::HyperRect;

    fn config(ext: Vec<usize>, n: usize, m: usize, seed: u64) -> SimConfig {
        SimConfig { dims: FieldDims::new(ext, n).unwrap(), m, sigma: 1.0, seed, anomaly: None }
    }

    #[test]
    fn same_seed_same_bits() {
        let c = config(vec![13, 9, 7], 3, 4, 99);
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        let ab: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
        let other = generate(&config(vec![13, 9, 7], 3, 4, 100)).unwrap();
        assert_ne!(a.values(), other.values());
    }

    #[test]
    fn block_equality_and_boundaries() {
        let f = generate(&config(vec![50, 50, 50], 3, 5, 1)).unwrap();
        assert_eq!(f.site(&[0, 0, 0]), f.site(&[4, 4, 4]));
        assert_ne!(f.site(&[0, 0, 0]), f.site(&[5, 0, 0]));
        let dims = f.dims();
        for site in 0..dims.sites() {
            let k = dims.coords_of(site);
            let anchor: Vec<usize> = k.iter().map(|&x| x / 5 * 5).collect();
            assert_eq!(f.site(&k), f.site(&anchor));
        }
    }

    #[test]
    fn truncated_boundary_blocks_carry_one_draw() {
        // 50 = 7 * 7 + 1: the last layer on each axis is a block of width 1.
        let f = generate(&config(vec![50, 50, 50], 1, 7, 3)).unwrap();
        assert_eq!(f.site(&[49, 0, 0]), f.site(&[49, 6, 6]));
        assert_ne!(f.site(&[49, 0, 0]), f.site(&[48, 0, 0]));
    }

    #[test]
    fn independent_sites_have_no_lag_one_correlation() {
        let f = generate(&config(vec![50, 50, 50], 1, 1, 11)).unwrap();
        let cov = covariance_diagnostic(&f, 1).unwrap();
        for axis in 0..3 {
            assert!(cov.correlation(axis, 1).abs() < 0.02, "axis {axis}: {}", cov.correlation(axis, 1));
        }
    }

    #[test]
    fn sample_variance_near_sigma_squared() {
        for seed in [5u64, 6, 7] {
            let mut c = config(vec![50, 50, 50], 3, 5, seed);
            c.sigma = 1.7;
            let f = generate(&c).unwrap();
            for comp in 0..3 {
                let xs: Vec<f64> = f.values().iter().skip(comp).step_by(3).copied().collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
                assert!((var / (1.7 * 1.7) - 1.0).abs() < 0.1, "seed {seed} comp {comp}: {var}");
            }
        }
    }

    #[test]
    fn anomaly_is_applied_after_generation() {
        let mut c = config(vec![10, 10], 2, 2, 4);
        let base = generate(&c).unwrap();
        c.anomaly = Some(AnomalySpec { region: HyperRect::new(vec![2, 3], vec![4, 4]), shift: vec![1.0, -2.0] });
        let shifted = generate(&c).unwrap();
        assert_eq!(shifted.site(&[0, 0]), base.site(&[0, 0]));
        let a = shifted.site(&[2, 3]).unwrap();
        let b = base.site(&[2, 3]).unwrap();
        assert_eq!(a, &[b[0] + 1.0, b[1] - 2.0]);
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&config(vec![5], 1, 0, 1)).is_err());
        let mut c = config(vec![5], 1, 1, 1);
        c.sigma = 0.0;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn constant_field_is_flagged() {
        let f = MultiField::from_fn(FieldDims::new(vec![6, 6], 2).unwrap(), |_, c| c as f64).unwrap();
        let cov = covariance_diagnostic(&f, 3).unwrap();
        assert!(cov.degenerate);
        assert!(cov.per_axis.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(cov.correlation(0, 1), 0.0);
        assert!(covariance_diagnostic(&f, 6).is_err());
    }

    #[test]
    fn lag_one_covariance_follows_pair_counting() {
        // Along one axis of extent 50 with m = 5, 40 of the 49 lag-1 pairs
        // per line share a block.
        let mut ratio = 0.0;
        let reps = 5;
        for seed in 0..reps {
            let f = generate(&config(vec![50, 50, 50], 3, 5, 200 + seed)).unwrap();
            let cov = covariance_diagnostic(&f, 6).unwrap();
            ratio += cov.correlation(0, 1) / reps as f64;
            assert!(cov.correlation(0, 5).abs() < 0.1);
        }
        assert!((ratio - 40.0 / 49.0).abs() < 0.03, "ratio = {ratio}");
    }

    #[test]
    fn suggested_m_for_block_fields() {
        let f = generate(&config(vec![40, 40], 2, 4, 8)).unwrap();
        let cov = covariance_diagnostic(&f, 8).unwrap();
        let m = cov.suggest_m(0.15).unwrap();
        assert!((4..=6).contains(&m), "suggested {m}");
    }
}
