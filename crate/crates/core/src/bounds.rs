//! Exponential tail bounds for contrasts of m-dependent fields, their union
//! bound over a scanning family, and the critical value that drives the
//! union bound down to `α`.
//!
//! For one window with `|I| = vol_in`, `|Iᶜ| = vol_out`, `|W| = total` and
//! `M = m^d`, the tail bound on `P(‖L‖_∞ ≥ y)` is
//!
//! ```text
//! quadratic branch:  2n exp(-y² / (4 M σ²) · vol_in·vol_out / total)
//! linear branch:     2n exp(-y·vol_in / (2 H M) + σ²·total·vol_in / (4 H² M vol_out))
//! ```
//!
//! The quadratic branch applies when the branch volume is at most
//! `σ²·total / (y H)`. Which volume is compared is selected by
//! [`BranchRule`]. Everything is evaluated as a natural logarithm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::NormOrder;
use crate::window::ScanSpace;

/// Which window volume decides between the quadratic and the linear branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Compare `|I|` (the summation form used to solve for the critical value).
    #[default]
    Window,
    /// Compare `|Iᶜ|` (the single-window indicator form). The bound is
    /// continuous in `y` under this rule.
    Complement,
}

/// Dependence range and moment scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: u32,
    pub d: u32,
    pub n: u32,
    pub sigma: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(default)]
    pub rule: BranchRule,
}

impl ModelParams {
    pub fn new(m: u32, d: u32, n: u32, sigma: f64, h: f64, rule: BranchRule) -> Result<Self> {
        let p = Self { m, d, n, sigma, h, rule };
        p.validate()?;
        Ok(p)
    }

    /// Gaussian default: `H = σ`.
    pub fn gaussian(m: u32, d: u32, n: u32, sigma: f64) -> Result<Self> {
        Self::new(m, d, n, sigma, sigma, BranchRule::Window)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 || self.n == 0 {
            return Err(Error::Domain(format!("m = {}, d = {}, n = {} must be positive", self.m, self.d, self.n)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {} must be positive and finite", self.sigma)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Domain(format!("H = {} must be positive and finite", self.h)));
        }
        Ok(())
    }

    /// `m^d` in floating point.
    pub fn m_pow_d(&self) -> f64 {
        (self.m as f64).powi(self.d as i32)
    }
}

/// Threshold and window cardinalities for a single-window bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub y: f64,
    pub vol_in: u64,
    pub vol_out: u64,
    pub total: u64,
}

impl BoundQuery {
    pub fn new(y: f64, vol_in: u64, total: u64) -> Result<Self> {
        if vol_in == 0 || vol_in >= total {
            return Err(Error::DegenerateWindow { volume: vol_in, total });
        }
        Ok(Self { y, vol_in, vol_out: total - vol_in, total })
    }
}

/// True when the quadratic branch applies.
pub fn uses_quadratic_branch(q: &BoundQuery, params: &ModelParams) -> bool {
    let cutoff = params.sigma * params.sigma * q.total as f64 / (q.y * params.h);
    let vol = match params.rule {
        BranchRule::Window => q.vol_in,
        BranchRule::Complement => q.vol_out,
    };
    vol as f64 <= cutoff
}

/// Natural log of the single-window tail bound. May exceed 0 when the
/// bound is vacuous.
pub fn per_window_bound(q: &BoundQuery, params: &ModelParams) -> Result<f64> {
    if !(q.y > 0.0) || !q.y.is_finite() {
        return Err(Error::Domain(format!("threshold y = {} must be positive and finite", q.y)));
    }
    if q.vol_in == 0 || q.vol_out == 0 || q.vol_in + q.vol_out != q.total {
        return Err(Error::DegenerateWindow { volume: q.vol_in, total: q.total });
    }
    params.validate()?;
    let md = params.m_pow_d();
    let (vi, vo, w) = (q.vol_in as f64, q.vol_out as f64, q.total as f64);
    let (s2, h) = (params.sigma * params.sigma, params.h);
    let exponent = if uses_quadratic_branch(q, params) {
        -q.y * q.y / (4.0 * md * s2) * (vi * vo / w)
    } else {
        -q.y * vi / (2.0 * h * md) + s2 * w * vi / (4.0 * h * h * md * vo)
    };
    Ok((2.0 * params.n as f64).ln() + exponent)
}

/// Natural log of the bound for `P(‖L‖_p ≥ y)` with finite `p`: the
/// componentwise bound at threshold `y / n^{1/p}`, summed over components.
pub fn finite_p_bound(q: &BoundQuery, norm: NormOrder, params: &ModelParams) -> Result<f64> {
    match norm {
        NormOrder::Infinity => per_window_bound(q, params),
        NormOrder::Finite(p) => {
            if !(p >= 1.0) {
                return Err(Error::Domain(format!("norm order {p} must be at least 1")));
            }
            let scaled = BoundQuery { y: q.y / (params.n as f64).powf(1.0 / p), ..*q };
            per_window_bound(&scaled, params)
        }
    }
}

/// Window volumes of a scanning family with multiplicities. The bound only
/// depends on the volume, so each distinct volume is evaluated once.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeProfile {
    total: u64,
    counts: Vec<(u64, u64)>,
}

impl VolumeProfile {
    pub fn from_space(space: &ScanSpace) -> Result<Self> {
        let hist = space.par_fold(
            BTreeMap::<u64, u64>::new,
            |mut m, r| {
                *m.entry(r.volume()).or_default() += 1;
                m
            },
            |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            },
        );
        if hist.is_empty() {
            return Err(Error::EmptyFamily);
        }
        Ok(Self { total: space.dims().sites() as u64, counts: hist.into_iter().collect() })
    }

    /// Profile from explicit `(volume, count)` pairs.
    pub fn from_counts(total: u64, counts: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut hist = BTreeMap::<u64, u64>::new();
        for (v, c) in counts {
            if v == 0 || v >= total {
                return Err(Error::DegenerateWindow { volume: v, total });
            }
            if c > 0 {
                *hist.entry(v).or_default() += c;
            }
        }
        if hist.is_empty() {
            return Err(Error::EmptyFamily);
        }
        Ok(Self { total, counts: hist.into_iter().collect() })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `(volume, count)` pairs in increasing volume.
    pub fn counts(&self) -> &[(u64, u64)] {
        &self.counts
    }

    pub fn windows(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    /// Log of the union bound `Σ_θ bound(θ)` for the given norm.
    pub fn log_bound(&self, y: f64, norm: NormOrder, params: &ModelParams) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.counts.len());
        for &(vol, count) in &self.counts {
            let q = BoundQuery::new(y, vol, self.total)?;
            terms.push((count as f64).ln() + finite_p_bound(&q, norm, params)?);
        }
        Ok(log_sum_exp(&terms))
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Log of the union bound over the scanning family at threshold `y`.
pub fn fwer_bound(y: f64, space: &ScanSpace, params: &ModelParams) -> Result<f64> {
    VolumeProfile::from_space(space)?.log_bound(y, NormOrder::Infinity, params)
}

/// Solution of `union bound(y) = α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValue {
    pub y: f64,
    /// Log of the union bound at `y`.
    pub log_bound: f64,
    pub alpha: f64,
    /// The bound stays below `α` for every `y > 0`; `y` is reported as 0.
    pub degenerate: bool,
    /// Final `(hi - lo) / hi` of the bisection bracket.
    pub relative_width: f64,
    pub iterations: u32,
}

const Y_CEILING: f64 = 1e9;
const Y_FLOOR: f64 = 1e-12;

/// Smallest `y` (to bisection precision) with union bound `≤ α`, for the
/// sup-norm statistic.
pub fn critical_value(alpha: f64, space: &ScanSpace, params: &ModelParams) -> Result<CriticalValue> {
    critical_value_for_norm(alpha, &VolumeProfile::from_space(space)?, NormOrder::Infinity, params)
}

/// Bracket expansion followed by bisection on `log_bound(y) - ln α`.
///
/// The upper end doubles from 1 until the bound is at most `α`; the lower
/// end halves until the bound exceeds `α`. Bisection then runs until the
/// bracket can no longer shrink in floating point, which is well inside a
/// relative width of 1e-9. The returned `y` is the upper end, so the bound
/// there never exceeds `α`.
pub fn critical_value_for_norm(
    alpha: f64,
    profile: &VolumeProfile,
    norm: NormOrder,
    params: &ModelParams,
) -> Result<CriticalValue> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    params.validate()?;
    let target = alpha.ln();
    let f = |y: f64| profile.log_bound(y, norm, params);

    let mut hi = 1.0;
    let mut f_hi = f(hi)?;
    while f_hi > target {
        hi *= 2.0;
        if hi > Y_CEILING {
            return Err(Error::NonConvergence(hi / 2.0));
        }
        f_hi = f(hi)?;
    }
    let mut lo = hi / 2.0;
    while f(lo)? <= target {
        hi = lo;
        lo /= 2.0;
        if lo < Y_FLOOR {
            return Ok(CriticalValue {
                y: 0.0,
                log_bound: f(hi)?,
                alpha,
                degenerate: true,
                relative_width: 1.0,
                iterations: 0,
            });
        }
    }

    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(CriticalValue {
        y: hi,
        log_bound: f(hi)?,
        alpha,
        degenerate: false,
        relative_width: (hi - lo) / hi,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldDims;
    use crate::window::Generator;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(n: u32, rule: BranchRule) -> ModelParams {
        ModelParams::new(1, 1, n, 1.0, 1.0, rule).unwrap()
    }

    fn cubic_space() -> ScanSpace {
        ScanSpace::new(FieldDims::new(vec![50, 50, 50], 3).unwrap(), 0.05, 0.5, Generator::Cubic(30)).unwrap()
    }

    #[test]
    fn quadratic_branch_value() {
        let q = BoundQuery::new(1.0, 4, 10).unwrap();
        let p = unit(1, BranchRule::Window);
        assert!(uses_quadratic_branch(&q, &p));
        let lb = per_window_bound(&q, &p).unwrap();
        assert_relative_eq!(lb, 2f64.ln() - 0.6, max_relative = 1e-15);
        assert_relative_eq!(lb.exp(), 1.097_623_272_188_053_2, max_relative = 1e-12);
    }

    #[test]
    fn linear_branch_value() {
        let q = BoundQuery::new(5.0, 4, 10).unwrap();
        let p = unit(1, BranchRule::Window);
        assert!(!uses_quadratic_branch(&q, &p));
        let lb = per_window_bound(&q, &p).unwrap();
        assert_relative_eq!(lb, 2f64.ln() - 10.0 + 40.0 / 24.0, max_relative = 1e-14);
        assert_relative_eq!(lb.exp(), 4.805e-4, max_relative = 1e-3);
    }

    #[test]
    fn three_components_triple_the_bound() {
        for y in [0.3, 1.0, 5.0, 40.0] {
            let q = BoundQuery::new(y, 4, 10).unwrap();
            let one = per_window_bound(&q, &unit(1, BranchRule::Window)).unwrap();
            let three = per_window_bound(&q, &unit(3, BranchRule::Window)).unwrap();
            assert_relative_eq!(three - one, 3f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn non_positive_threshold_is_domain_error() {
        let p = unit(1, BranchRule::Window);
        for y in [0.0, -1.0, f64::NAN] {
            let q = BoundQuery { y, vol_in: 4, vol_out: 6, total: 10 };
            assert!(matches!(per_window_bound(&q, &p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn cubic_family_bound_at_reference_threshold() {
        let params = ModelParams::gaussian(5, 3, 3, 1.0).unwrap();
        let lb = fwer_bound(0.57344, &cubic_space(), &params).unwrap();
        // 6 * 9261 windows, exponent -42.336 y^2, all on the quadratic branch.
        let expected = 55566f64.ln() - 42.336 * 0.57344 * 0.57344;
        assert_relative_eq!(lb, expected, max_relative = 1e-12);
        assert_relative_eq!(lb.exp(), 0.05, max_relative = 1e-3);
    }

    #[test]
    fn single_window_family_equals_per_window() {
        let dims = FieldDims::new(vec![10], 1).unwrap();
        let rect = crate::field::HyperRect::new(vec![3], vec![4]);
        let space = ScanSpace::new(dims, 0.1, 0.5, Generator::Explicit(vec![rect])).unwrap();
        let p = unit(1, BranchRule::Window);
        let q = BoundQuery::new(1.7, 4, 10).unwrap();
        assert_eq!(fwer_bound(1.7, &space, &p).unwrap(), per_window_bound(&q, &p).unwrap());
    }

    #[test]
    fn listing_every_window_twice_adds_log_two() {
        let dims = FieldDims::new(vec![12, 9], 1).unwrap();
        let once = ScanSpace::new(dims.clone(), 0.1, 0.5, Generator::AllBoxes).unwrap();
        let list = crate::window::enumerate_windows(&once).unwrap();
        let doubled: Vec<_> = list.iter().chain(&list).cloned().collect();
        let twice = ScanSpace::new(dims, 0.1, 0.5, Generator::Explicit(doubled)).unwrap();
        let p = ModelParams::gaussian(2, 2, 1, 0.8).unwrap();
        for y in [0.1, 0.9, 3.0, 20.0] {
            let a = fwer_bound(y, &once, &p).unwrap();
            let b = fwer_bound(y, &twice, &p).unwrap();
            assert_relative_eq!(b - a, 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn critical_value_single_window_closed_form() {
        let profile = VolumeProfile::from_counts(10, [(4, 1)]).unwrap();
        let p = unit(1, BranchRule::Window);
        let cv = critical_value_for_norm(0.05, &profile, NormOrder::Infinity, &p).unwrap();
        let expected = (40f64.ln() / 0.6).sqrt();
        assert_relative_eq!(cv.y, expected, max_relative = 1e-12);
        assert!((cv.y - 2.47951).abs() < 5e-5);
        assert!(cv.relative_width <= 1e-9);
        // Still on the quadratic branch at the root: 4 <= 10 / y.
        assert!(4.0 <= 10.0 / cv.y);
    }

    #[test]
    fn critical_values_for_the_cubic_family() {
        let space = cubic_space();
        let m5 = critical_value(0.05, &space, &ModelParams::gaussian(5, 3, 3, 1.0).unwrap()).unwrap();
        let y5 = ((55566.0f64 / 0.05).ln() / 42.336).sqrt();
        assert_relative_eq!(m5.y, y5, max_relative = 1e-12);
        assert!((m5.y - 0.57344).abs() < 5e-5);
        assert!((m5.log_bound - 0.05f64.ln()).abs() <= 1e-8);

        let m7 = critical_value(0.05, &space, &ModelParams::gaussian(7, 3, 3, 1.0).unwrap()).unwrap();
        let y7 = ((55566.0f64 / 0.05).ln() / (21168.0 / (4.0 * 343.0))).sqrt();
        assert_relative_eq!(m7.y, y7, max_relative = 1e-12);
        assert!((m7.y - 0.94990).abs() < 5e-5);
    }

    #[test]
    fn degenerate_and_invalid_alpha() {
        let profile = VolumeProfile::from_counts(10, [(4, 1)]).unwrap();
        let p = unit(1, BranchRule::Window);
        assert!(critical_value_for_norm(0.0, &profile, NormOrder::Infinity, &p).is_err());
        assert!(critical_value_for_norm(1.0, &profile, NormOrder::Infinity, &p).is_err());
        // 2n >= 2 > alpha for every alpha < 1, so the bound always exceeds alpha
        // as y -> 0 and the degenerate branch is unreachable with valid input.
        let cv = critical_value_for_norm(0.999, &profile, NormOrder::Infinity, &p).unwrap();
        assert!(!cv.degenerate && cv.y > 0.0);
    }

    #[test]
    fn extreme_exponents_stay_finite() {
        let params = ModelParams::gaussian(5, 3, 3, 1.0).unwrap();
        let lb = fwer_bound(10.0, &cubic_space(), &params).unwrap();
        assert!(lb.is_finite());
        assert!(lb < -700.0);
        assert_eq!(lb.exp(), 0.0);
    }

    #[test]
    fn finite_p_bound_cases() {
        let q = BoundQuery::new(1.0, 4, 10).unwrap();
        let p1 = unit(1, BranchRule::Window);
        for p in [1.0, 2.0, 7.5] {
            assert_eq!(
                finite_p_bound(&q, NormOrder::Finite(p), &p1).unwrap(),
                per_window_bound(&q, &p1).unwrap()
            );
        }
        let p3 = unit(3, BranchRule::Window);
        let inf = per_window_bound(&q, &p3).unwrap();
        // The gap shrinks like ln(n)/p.
        for (p, tol) in [(1e6, 2e-6), (1e8, 2e-8), (1e10, 2e-10)] {
            let near = finite_p_bound(&q, NormOrder::Finite(p), &p3).unwrap();
            assert_relative_eq!(near, inf, max_relative = tol);
        }
        // p = 1, n = 3: per-component bound at y/3, times 3.
        let l1 = finite_p_bound(&q, NormOrder::Finite(1.0), &p3).unwrap();
        let per_component = 2f64.ln() - (1.0 / 3.0f64).powi(2) / 4.0 * 2.4;
        assert_relative_eq!(l1, 3f64.ln() + per_component, max_relative = 1e-14);
    }

    #[test]
    fn rules_agree_for_balanced_split() {
        for y in [0.05, 0.5, 1.0, 2.0, 3.9, 4.1, 10.0] {
            let q = BoundQuery::new(y, 5, 10).unwrap();
            let a = per_window_bound(&q, &ModelParams::new(2, 1, 2, 1.3, 0.7, BranchRule::Window).unwrap());
            let b = per_window_bound(&q, &ModelParams::new(2, 1, 2, 1.3, 0.7, BranchRule::Complement).unwrap());
            assert_eq!(a.unwrap(), b.unwrap());
        }
    }

    #[test]
    fn window_rule_jumps_up_at_the_branch_switch() {
        // At y* = σ²|W|/(H|I|) the linear branch exceeds the quadratic one by
        // σ²|W|/(4H²m^d) · (r + 1/r - 2) with r = |I|/|Iᶜ|.
        let p = ModelParams::new(1, 1, 1, 1.0, 1.0, BranchRule::Window).unwrap();
        let (vi, total) = (4u64, 10u64);
        let y_star = 10.0 / 4.0;
        let below = per_window_bound(&BoundQuery::new(y_star, vi, total).unwrap(), &p).unwrap();
        let above = per_window_bound(&BoundQuery::new(y_star * (1.0 + 1e-12), vi, total).unwrap(), &p).unwrap();
        let r = 4.0 / 6.0;
        assert_relative_eq!(above - below, 10.0 / 4.0 * (r + 1.0 / r - 2.0), max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn complement_rule_is_monotone_in_y(
            m in 1u32..8, d in 1u32..4, n in 1u32..5,
            sigma in 0.2f64..3.0, h in 0.2f64..3.0,
            total in 20u64..100_000, frac in 0.01f64..0.99,
        ) {
            let vi = ((total as f64 * frac) as u64).clamp(1, total - 1);
            let p = ModelParams::new(m, d, n, sigma, h, BranchRule::Complement).unwrap();
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let y = 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0);
                let b = per_window_bound(&BoundQuery::new(y, vi, total).unwrap(), &p).unwrap();
                prop_assert!(b <= prev, "y = {y}: {b} > {prev}");
                prev = b;
            }
        }

        #[test]
        fn bound_is_non_decreasing_in_m(
            d in 1u32..4, n in 1u32..5, sigma in 0.2f64..3.0, h in 0.2f64..3.0,
            total in 20u64..100_000, frac in 0.01f64..0.5, y in 1e-3f64..1e3,
            complement in any::<bool>(),
        ) {
            let rule = if complement { BranchRule::Complement } else { BranchRule::Window };
            let vi = ((total as f64 * frac) as u64).clamp(1, total - 1);
            let q = BoundQuery::new(y, vi, total).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for m in 1..12 {
                let b = per_window_bound(&q, &ModelParams::new(m, d, n, sigma, h, rule).unwrap()).unwrap();
                prop_assert!(b >= prev);
                prev = b;
            }
        }

        #[test]
        fn log_bound_is_additive_in_n(
            m in 1u32..8, d in 1u32..4, sigma in 0.2f64..3.0, h in 0.2f64..3.0,
            total in 20u64..100_000, frac in 0.01f64..0.99, y in 1e-3f64..1e3,
        ) {
            let vi = ((total as f64 * frac) as u64).clamp(1, total - 1);
            let q = BoundQuery::new(y, vi, total).unwrap();
            let one = per_window_bound(&q, &ModelParams::new(m, d, 1, sigma, h, BranchRule::Window).unwrap()).unwrap();
            for n in [2u32, 3, 10] {
                let b = per_window_bound(&q, &ModelParams::new(m, d, n, sigma, h, BranchRule::Window).unwrap()).unwrap();
                prop_assert!(((b - one) - (n as f64).ln()).abs() <= 1e-12 * one.abs().max(1.0));
            }
        }

        #[test]
        fn solver_contract(
            m in 1u32..6, sigma in 0.3f64..2.0, alpha in 0.001f64..0.5,
            side in 4usize..9,
        ) {
            let dims = FieldDims::new(vec![12, 12], 1).unwrap();
            let space = ScanSpace::new(dims, 0.05, 0.5, Generator::Cubic(side)).unwrap();
            let p = ModelParams::new(m, 2, 1, sigma, sigma, BranchRule::Complement).unwrap();
            let cv = critical_value(alpha, &space, &p).unwrap();
            let profile = VolumeProfile::from_space(&space).unwrap();
            prop_assert!(cv.log_bound <= alpha.ln());
            prop_assert!(cv.relative_width <= 1e-9);
            let below = profile.log_bound(cv.y * (1.0 - 1e-6), NormOrder::Infinity, &p).unwrap();
            prop_assert!(below > alpha.ln());
        }
    }
}
