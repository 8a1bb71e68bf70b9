//! CUSUM contrasts and the scan statistic.
//!
//! For a box `I` with complement `Iᶜ = W \ I`, the contrast is
//! `L = mean(s over I) - mean(s over Iᶜ)`, a vector with one entry per
//! component. The scan statistic is the largest `‖L‖_p` over the scanning
//! family; ties go to the lexicographically smallest box.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{HyperRect, MultiField};
use crate::prefix::PrefixTable;
use crate::window::ScanSpace;

/// Order `p` of the vector norm applied to contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NormOrder {
    Finite(f64),
    #[default]
    Infinity,
}

impl NormOrder {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(NormOrder::Finite(p))
        } else if p == f64::INFINITY {
            Ok(NormOrder::Infinity)
        } else {
            Err(Error::Domain(format!("norm order {p} must be in [1, inf]")))
        }
    }

    pub fn apply(&self, x: &[f64]) -> f64 {
        match *self {
            NormOrder::Infinity => x.iter().fold(0.0, |m, v| m.max(v.abs())),
            NormOrder::Finite(p) if p == 1.0 => x.iter().map(|v| v.abs()).sum(),
            NormOrder::Finite(p) if p == 2.0 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormOrder::Finite(p) => x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Infinity => f.write_str("inf"),
            NormOrder::Finite(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(NormOrder::Infinity),
            other => {
                let p: f64 = other.parse().map_err(|_| Error::Domain(format!("bad norm order {s:?}")))?;
                NormOrder::finite(p)
            }
        }
    }
}

impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormOrder::Infinity => s.serialize_str("inf"),
            NormOrder::Finite(p) => s.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Num(p) => NormOrder::finite(p).map_err(serde::de::Error::custom),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Summary of the contrast weights `b_k = 1{k∈I}/|I| - 1{k∈Iᶜ}/|Iᶜ|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastWeights {
    pub vol_in: u64,
    pub vol_out: u64,
    /// `‖b‖₁`, always 2.
    pub l1_norm: f64,
    /// `‖b‖₂² = |W| / (|I|·|Iᶜ|)`.
    pub l2_norm_sq: f64,
}

impl ContrastWeights {
    pub fn new(vol_in: u64, total: u64) -> Result<Self> {
        if vol_in == 0 || vol_in >= total {
            return Err(Error::DegenerateWindow { volume: vol_in, total });
        }
        let vol_out = total - vol_in;
        let (vi, vo) = (vol_in as f64, vol_out as f64);
        Ok(Self {
            vol_in,
            vol_out,
            l1_norm: vi * (1.0 / vi) + vo * (1.0 / vo),
            l2_norm_sq: total as f64 / (vi * vo),
        })
    }

    pub fn for_rect(rect: &HyperRect, total: u64) -> Result<Self> {
        Self::new(rect.volume(), total)
    }
}

/// One window's contrast and norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowContrast {
    #[serde(flatten)]
    pub rect: HyperRect,
    pub contrast: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    /// `T_W`, the maximum contrast norm.
    pub statistic: f64,
    /// First maximizer in lexicographic order.
    pub argmax: HyperRect,
    pub norm: NormOrder,
    pub windows_scanned: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_window: Option<Vec<WindowContrast>>,
}

/// `L(θ)` for one box, from two table lookups (the box and the whole window).
pub fn compute_contrast(table: &PrefixTable, rect: &HyperRect) -> Result<Vec<f64>> {
    let total_sites = table.dims().sites() as u64;
    let w = ContrastWeights::for_rect(rect, total_sites)?;
    let inside = table.window_sum(rect)?;
    let all = table.window_sum(&table.dims().full_rect())?;
    let mut out = vec![0.0; inside.len()];
    contrast_into(&inside, &all, w.vol_in, w.vol_out, &mut out);
    Ok(out)
}

#[inline]
fn contrast_into(inside: &[f64], total: &[f64], vol_in: u64, vol_out: u64, out: &mut [f64]) {
    let (vi, vo) = (vol_in as f64, vol_out as f64);
    for ((o, s), t) in out.iter_mut().zip(inside).zip(total) {
        *o = s / vi - (t - s) / vo;
    }
}

// Larger value wins; equal values go to the smaller box.
fn better(a: &(f64, HyperRect), b: &(f64, HyperRect)) -> bool {
    match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

fn pick(a: Option<(f64, HyperRect)>, b: Option<(f64, HyperRect)>) -> Option<(f64, HyperRect)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if better(&y, &x) { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

struct Scratch {
    best: Option<(f64, HyperRect)>,
    inside: Vec<f64>,
    contrast: Vec<f64>,
}

/// Computes `T_W = max_θ ‖L(θ)‖_p` over the scanning family.
pub fn scan(field: &MultiField, space: &ScanSpace, norm: NormOrder) -> Result<ScanResult> {
    let table = PrefixTable::build(field)?;
    scan_table(&table, space, norm)
}

/// As [`scan`], with a prebuilt prefix table.
pub fn scan_table(table: &PrefixTable, space: &ScanSpace, norm: NormOrder) -> Result<ScanResult> {
    check_compat(table, space)?;
    let n = table.dims().n();
    let total = table.total();
    let total_sites = table.dims().sites() as u64;

    let (best, count) = space.par_fold(
        || (Scratch { best: None, inside: vec![0.0; n], contrast: vec![0.0; n] }, 0u64),
        |(mut s, c), rect| {
            // Admissible volumes satisfy 0 < vol < |W| because gamma1 < 1.
            let vol = rect.volume();
            table.window_sum_into(rect, &mut s.inside);
            contrast_into(&s.inside, &total, vol, total_sites - vol, &mut s.contrast);
            let v = norm.apply(&s.contrast);
            let replace = match &s.best {
                None => true,
                Some((bv, br)) => v > *bv || (v == *bv && rect < br),
            };
            if replace {
                s.best = Some((v, rect.clone()));
            }
            (s, c + 1)
        },
        |(a, ca), (b, cb)| {
            (Scratch { best: pick(a.best, b.best), inside: a.inside, contrast: a.contrast }, ca + cb)
        },
    );
    let (statistic, argmax) = best.best.ok_or(Error::EmptyFamily)?;
    Ok(ScanResult { statistic, argmax, norm, windows_scanned: count, per_window: None })
}

/// As [`scan`], additionally returning every window's contrast in
/// lexicographic order.
pub fn scan_detailed(field: &MultiField, space: &ScanSpace, norm: NormOrder) -> Result<ScanResult> {
    let table = PrefixTable::build(field)?;
    check_compat(&table, space)?;
    let total = table.total();
    let total_sites = table.dims().sites() as u64;
    let mut rows = Vec::new();
    let mut inside = vec![0.0; table.dims().n()];
    let mut err = None;
    space.for_each_window(|rect| {
        if err.is_some() {
            return;
        }
        match ContrastWeights::for_rect(rect, total_sites) {
            Ok(w) => {
                table.window_sum_into(rect, &mut inside);
                let mut contrast = vec![0.0; inside.len()];
                contrast_into(&inside, &total, w.vol_in, w.vol_out, &mut contrast);
                let value = norm.apply(&contrast);
                rows.push(WindowContrast { rect: rect.clone(), contrast, value });
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let mut best: Option<(f64, HyperRect)> = None;
    for r in &rows {
        best = pick(best, Some((r.value, r.rect.clone())));
    }
    let (statistic, argmax) = best.ok_or(Error::EmptyFamily)?;
    Ok(ScanResult {
        statistic,
        argmax,
        norm,
        windows_scanned: rows.len() as u64,
        per_window: Some(rows),
    })
}

fn check_compat(table: &PrefixTable, space: &ScanSpace) -> Result<()> {
    if table.dims().dims() != space.dims().dims() {
        return Err(Error::Dimension(format!(
            "field extents {:?} do not match scanning window extents {:?}",
            table.dims().dims(),
            space.dims().dims()
        )));
    }
    Ok(())
}

/// Writes per-window rows as CSV: `origin_1..origin_d, size_1..size_d, L_1..L_n, norm`.
pub fn write_window_dump(rows: &[WindowContrast], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = rows.first() else {
        w.flush()?;
        return Ok(());
    };
    let d = first.rect.d();
    let n = first.contrast.len();
    let header: Vec<String> = (1..=d)
        .map(|i| format!("origin_{i}"))
        .chain((1..=d).map(|i| format!("size_{i}")))
        .chain((1..=n).map(|c| format!("L_{c}")))
        .chain(std::iter::once("norm".to_string()))
        .collect();
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        let rec: Vec<String> = r
            .rect
            .origin
            .iter()
            .chain(&r.rect.size)
            .map(|v| v.to_string())
            .chain(r.contrast.iter().chain(std::iter::once(&r.value)).map(|v| format!("{v:e}")))
            .collect();
        w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
