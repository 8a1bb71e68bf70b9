//! The rejection rule: global test of "no change in mean" and the set of
//! windows whose contrast norm reaches the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{HyperRect, MultiField};
use crate::prefix::PrefixTable;
use crate::scan::{scan_table, ContrastWeights, NormOrder};
use crate::window::ScanSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    Theoretical,
    Empirical,
    User,
}

/// A critical value together with where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub source: ThresholdSource,
    /// Nominal level, when the threshold was calibrated for one.
    pub alpha: Option<f64>,
}

impl Threshold {
    pub fn user(value: f64) -> Self {
        Self { value, source: ThresholdSource::User, alpha: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.value > 0.0) || !self.value.is_finite() {
            return Err(Error::Domain(format!("threshold {} must be positive and finite", self.value)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedWindow {
    #[serde(flatten)]
    pub rect: HyperRect,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub alpha: Option<f64>,
    pub threshold: f64,
    pub threshold_source: ThresholdSource,
    pub statistic: f64,
    pub reject_global: bool,
    pub argmax: HyperRect,
    /// Every window with norm at or above the threshold, by descending
    /// norm, ties in lexicographic order.
    #[serde(rename = "rejected")]
    pub rejected_windows: Vec<RejectedWindow>,
}

/// Scans `field` and applies the threshold to every window.
pub fn global_test(
    field: &MultiField,
    space: &ScanSpace,
    norm: NormOrder,
    threshold: Threshold,
) -> Result<TestReport> {
    threshold.validate()?;
    let table = PrefixTable::build(field)?;
    let summary = scan_table(&table, space, norm)?;
    let n = table.dims().n();
    let total = table.total();
    let total_sites = table.dims().sites() as u64;
    let y = threshold.value;

    let mut rejected = space.par_fold(
        || (Vec::new(), vec![0.0; n]),
        |(mut out, mut buf), rect| {
            let vol = rect.volume();
            table.window_sum_into(rect, &mut buf);
            let (vi, vo) = (vol as f64, (total_sites - vol) as f64);
            let value = norm.apply(
                &buf.iter().zip(&total).map(|(s, t)| s / vi - (t - s) / vo).collect::<Vec<_>>(),
            );
            if value >= y {
                out.push(RejectedWindow { rect: rect.clone(), value });
            }
            (out, buf)
        },
        |(mut a, buf), (b, _)| {
            a.extend(b);
            (a, buf)
        },
    )
    .0;
    rejected.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.rect.cmp(&b.rect)));

    Ok(TestReport {
        alpha: threshold.alpha,
        threshold: y,
        threshold_source: threshold.source,
        statistic: summary.statistic,
        reject_global: summary.statistic >= y,
        argmax: summary.argmax,
        rejected_windows: rejected,
    })
}

/// Mean of `L(θ)` when a shift `h` is present on `θ₀`:
/// `h · (|I_θ ∩ I_θ₀| / |I_θ| - |I_θᶜ ∩ I_θ₀| / |I_θᶜ|)`.
pub fn expected_shift(theta: &HyperRect, theta0: &HyperRect, h: &[f64], total: u64) -> Result<Vec<f64>> {
    if theta.d() != theta0.d() {
        return Err(Error::Dimension("boxes have different dimensionality".into()));
    }
    let w = ContrastWeights::for_rect(theta, total)?;
    let vol0 = theta0.volume();
    if vol0 > total {
        return Err(Error::Dimension(format!("anomaly box volume {vol0} exceeds |W| = {total}")));
    }
    let inside = theta.intersection_volume(theta0);
    let coef = inside as f64 / w.vol_in as f64 - (vol0 - inside) as f64 / w.vol_out as f64;
    Ok(h.iter().map(|v| v * coef).collect())
}
