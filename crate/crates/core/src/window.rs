//! The scanning family `Θ₀`: boxes inside `W` whose volume lies between
//! `γ₀·|W|` and `γ₁·|W|`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{FieldDims, HyperRect};

/// Candidate boxes before the volume filter.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Every box with side `k` on all axes.
    Cubic(usize),
    /// Every box contained in the window.
    AllBoxes,
    /// A user-supplied list. Duplicates are kept.
    Explicit(Vec<HyperRect>),
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Cubic(k) => write!(f, "cubic:{k}"),
            Generator::AllBoxes => f.write_str("all"),
            Generator::Explicit(list) => write!(f, "explicit({} boxes)", list.len()),
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    /// Parses `cubic:K` or `all`. Explicit lists come from files or JSON.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" || s == "all-boxes" {
            return Ok(Generator::AllBoxes);
        }
        if let Some(k) = s.strip_prefix("cubic:") {
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::Domain(format!("bad cube side in {s:?}")))?;
            if k == 0 {
                return Err(Error::Domain("cube side must be positive".into()));
            }
            return Ok(Generator::Cubic(k));
        }
        Err(Error::Domain(format!("unknown window generator {s:?}; expected cubic:K or all")))
    }
}

/// `cubic:K` and `all` serialize as strings, explicit lists as
/// `{"explicit": [...]}`.
impl Serialize for Generator {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Generator::Explicit(list) => {
                let mut map = ser.serialize_map(Some(1))?;
                map.serialize_entry("explicit", list)?;
                map.end()
            }
            other => ser.collect_str(other),
        }
    }
}

impl<'de> Deserialize<'de> for Generator {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "kebab-case")]
        enum Tagged {
            Cubic(usize),
            AllBoxes,
            Explicit(Vec<HyperRect>),
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Tagged(Tagged),
        }
        match Repr::deserialize(de)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Tagged(Tagged::Cubic(k)) => Ok(Generator::Cubic(k)),
            Repr::Tagged(Tagged::AllBoxes) => Ok(Generator::AllBoxes),
            Repr::Tagged(Tagged::Explicit(v)) => Ok(Generator::Explicit(v)),
        }
    }
}

/// A scanning family over a fixed window.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpace {
    dims: FieldDims,
    gamma0: f64,
    gamma1: f64,
    generator: Generator,
}

impl ScanSpace {
    /// Validates the volume limits and, for explicit lists, box containment.
    /// Explicit boxes are sorted into lexicographic order.
    pub fn new(dims: FieldDims, gamma0: f64, gamma1: f64, generator: Generator) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0 < 1.0 && gamma1 > 0.0 && gamma1 < 1.0) {
            return Err(Error::Domain(format!("gamma0 = {gamma0}, gamma1 = {gamma1} must lie in (0, 1)")));
        }
        if gamma0 > gamma1 {
            return Err(Error::Domain(format!("gamma0 = {gamma0} exceeds gamma1 = {gamma1}")));
        }
        let generator = match generator {
            Generator::Cubic(0) => return Err(Error::Domain("cube side must be positive".into())),
            Generator::Explicit(mut list) => {
                for r in &list {
                    r.validate(&dims)?;
                }
                list.sort();
                Generator::Explicit(list)
            }
            g => g,
        };
        Ok(Self { dims, gamma0, gamma1, generator })
    }

    pub fn dims(&self) -> &FieldDims {
        &self.dims
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// The volume test `γ₀|W| ≤ vol ≤ γ₁|W|`.
    pub fn admits_volume(&self, volume: u64) -> bool {
        let total = self.dims.sites() as f64;
        let v = volume as f64;
        self.gamma0 * total <= v && v <= self.gamma1 * total
    }

    /// Number of admissible windows.
    pub fn count(&self) -> u64 {
        match &self.generator {
            Generator::Cubic(k) => match self.cubic_origin_extents(*k) {
                Some(ext) => ext.iter().map(|&e| e as u64).product(),
                None => 0,
            },
            _ => {
                let mut c = 0u64;
                self.for_each_window(|_| c += 1);
                c
            }
        }
    }

    // Per-axis number of origins for cubes of side k, or None if no cube is admissible.
    fn cubic_origin_extents(&self, k: usize) -> Option<Vec<usize>> {
        let d = self.dims.d() as u32;
        let vol = (k as u64).checked_pow(d)?;
        if !self.admits_volume(vol) || self.dims.dims().iter().any(|&e| k > e) {
            return None;
        }
        Some(self.dims.dims().iter().map(|&e| e - k + 1).collect())
    }

    /// Visits every admissible window in lexicographic `(origin, size)` order.
    pub fn for_each_window(&self, mut f: impl FnMut(&HyperRect)) {
        match &self.generator {
            Generator::Explicit(list) => list
                .iter()
                .filter(|r| self.admits_volume(r.volume()))
                .for_each(f),
            _ => {
                let Some(origins) = self.origin_grid() else { return };
                let total: usize = origins.iter().product();
                let mut rect = HyperRect::new(vec![0; self.dims.d()], vec![0; self.dims.d()]);
                for oi in 0..total {
                    self.visit_origin(&origins, oi, &mut rect, &mut f);
                }
            }
        }
    }

    /// Parallel fold over the admissible windows.
    ///
    /// Work is split by origin; the result is schedule-independent whenever
    /// `reduce` is associative and commutative.
    pub fn par_fold<A, I, F, R>(&self, identity: I, fold: F, reduce: R) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, &HyperRect) -> A + Sync + Send,
        R: Fn(A, A) -> A + Sync + Send,
    {
        match &self.generator {
            Generator::Explicit(list) => list
                .par_iter()
                .filter(|r| self.admits_volume(r.volume()))
                .fold(&identity, |acc, r| fold(acc, r))
                .reduce(&identity, &reduce),
            _ => {
                let Some(origins) = self.origin_grid() else { return identity() };
                let total: usize = origins.iter().product();
                let d = self.dims.d();
                (0..total)
                    .into_par_iter()
                    .fold(
                        || (identity(), HyperRect::new(vec![0; d], vec![0; d])),
                        |(mut acc, mut rect), oi| {
                            let mut slot = Some(acc);
                            self.visit_origin(&origins, oi, &mut rect, &mut |r: &HyperRect| {
                                let a = slot.take().expect("accumulator present");
                                slot = Some(fold(a, r));
                            });
                            acc = slot.take().expect("accumulator present");
                            (acc, rect)
                        },
                    )
                    .map(|(acc, _)| acc)
                    .reduce(&identity, &reduce)
            }
        }
    }

    // Extents of the origin grid for the cubic and all-boxes generators.
    fn origin_grid(&self) -> Option<Vec<usize>> {
        match &self.generator {
            Generator::Cubic(k) => self.cubic_origin_extents(*k),
            Generator::AllBoxes => Some(self.dims.dims().to_vec()),
            Generator::Explicit(_) => None,
        }
    }

    fn visit_origin(
        &self,
        origins: &[usize],
        mut oi: usize,
        rect: &mut HyperRect,
        f: &mut impl FnMut(&HyperRect),
    ) {
        for (slot, &e) in rect.origin.iter_mut().zip(origins).rev() {
            *slot = oi % e;
            oi /= e;
        }
        match &self.generator {
            Generator::Cubic(k) => {
                rect.size.iter_mut().for_each(|s| *s = *k);
                f(rect);
            }
            Generator::AllBoxes => {
                let ext = self.dims.dims();
                let d = ext.len();
                rect.size.iter_mut().for_each(|s| *s = 1);
                let limit = self.gamma1 * self.dims.sites() as f64;
                loop {
                    if self.admits_volume(rect.volume()) {
                        f(rect);
                    }
                    // Odometer over sizes, last axis fastest. Once the volume
                    // exceeds the upper limit, larger sizes on this axis only grow it.
                    let mut axis = d;
                    loop {
                        if axis == 0 {
                            return;
                        }
                        axis -= 1;
                        rect.size[axis] += 1;
                        if rect.origin[axis] + rect.size[axis] <= ext[axis]
                            && rect.volume() as f64 <= limit
                        {
                            break;
                        }
                        rect.size[axis] = 1;
                    }
                }
            }
            Generator::Explicit(_) => unreachable!("explicit lists are not origin-indexed"),
        }
    }
}

/// Materializes the admissible windows in lexicographic order.
pub fn enumerate_windows(space: &ScanSpace) -> Result<Vec<HyperRect>> {
    let mut out = Vec::new();
    space.for_each_window(|r| out.push(r.clone()));
    if out.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(out)
}
