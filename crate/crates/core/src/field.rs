//! Lattice extents, multivariate fields, boxes and anomaly injection.
//!
//! Coordinates are 0-based. Values are stored site-major: the last lattice
//! axis varies fastest across sites and the `n` components of a site are
//! contiguous, so `index(k, c) = ((k_1 * dims_2 + k_2) * dims_3 + ...) * n + c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents of the observation window `W` and the number of components per site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDims")]
pub struct FieldDims {
    dims: Vec<usize>,
    n: usize,
    #[serde(skip)]
    sites: usize,
}

#[derive(Deserialize)]
struct RawDims {
    dims: Vec<usize>,
    n: usize,
}

impl TryFrom<RawDims> for FieldDims {
    type Error = Error;

    fn try_from(raw: RawDims) -> Result<Self> {
        FieldDims::new(raw.dims, raw.n)
    }
}

impl FieldDims {
    pub fn new(dims: Vec<usize>, n: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Dimension("at least one lattice axis is required".into()));
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::Dimension(format!("{} axes exceed the supported 255", dims.len())));
        }
        if let Some(i) = dims.iter().position(|&e| e == 0) {
            return Err(Error::Dimension(format!("axis {i} has zero extent")));
        }
        if n == 0 {
            return Err(Error::Dimension("a field needs at least one component".into()));
        }
        let sites = dims
            .iter()
            .try_fold(1u64, |acc, &e| acc.checked_mul(e as u64))
            .ok_or_else(|| Error::Dimension("site count overflows 64 bits".into()))?;
        let sites = usize::try_from(sites)
            .map_err(|_| Error::Dimension("site count exceeds the address space".into()))?;
        sites
            .checked_mul(n)
            .ok_or_else(|| Error::Dimension("value count overflows the address space".into()))?;
        Ok(Self { dims, n, sites })
    }

    /// Number of lattice axes `d`.
    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Components per site.
    pub fn n(&self) -> usize {
        self.n
    }

    /// `|W|`, the number of lattice sites.
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn len_values(&self) -> usize {
        self.sites * self.n
    }

    /// Flat site index of `coords`, or `None` when outside the window.
    pub fn site_index(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.d() {
            return None;
        }
        let mut idx = 0usize;
        for (&k, &e) in coords.iter().zip(&self.dims) {
            if k >= e {
                return None;
            }
            idx = idx * e + k;
        }
        Some(idx)
    }

    /// Index of component `c` at `coords` in the flat value array.
    pub fn value_index(&self, coords: &[usize], c: usize) -> Option<usize> {
        if c >= self.n {
            return None;
        }
        self.site_index(coords).map(|s| s * self.n + c)
    }

    /// Inverse of [`site_index`](Self::site_index).
    pub fn coords_of(&self, mut site: usize) -> Vec<usize> {
        let mut coords = vec![0; self.d()];
        for (slot, &e) in coords.iter_mut().zip(&self.dims).rev() {
            *slot = site % e;
            site /= e;
        }
        coords
    }

    /// The box covering the whole window.
    pub fn full_rect(&self) -> HyperRect {
        HyperRect {
            origin: vec![0; self.d()],
            size: self.dims.clone(),
        }
    }
}

/// Axis-aligned box `I_θ`, given by a 0-based origin and a per-axis size.
///
/// Ordering is lexicographic on `(origin, size)`, which is the enumeration
/// and tie-breaking order used throughout the crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HyperRect {
    pub origin: Vec<usize>,
    pub size: Vec<usize>,
}

impl HyperRect {
    pub fn new(origin: Vec<usize>, size: Vec<usize>) -> Self {
        Self { origin, size }
    }

    /// Box with the same side length `side` on every axis.
    pub fn cube(origin: Vec<usize>, side: usize) -> Self {
        let size = vec![side; origin.len()];
        Self { origin, size }
    }

    pub fn d(&self) -> usize {
        self.origin.len()
    }

    pub fn volume(&self) -> u64 {
        self.size.iter().map(|&s| s as u64).product()
    }

    /// Checks that the box is non-empty and lies inside the window.
    pub fn validate(&self, dims: &FieldDims) -> Result<()> {
        if self.origin.len() != dims.d() || self.size.len() != dims.d() {
            return Err(Error::Dimension(format!(
                "box has {} origin / {} size coordinates, field has {} axes",
                self.origin.len(),
                self.size.len(),
                dims.d()
            )));
        }
        for (i, ((&o, &s), &e)) in self.origin.iter().zip(&self.size).zip(dims.dims()).enumerate() {
            if s == 0 {
                return Err(Error::Dimension(format!("box has zero size on axis {i}")));
            }
            if o.checked_add(s).map_or(true, |end| end > e) {
                return Err(Error::Dimension(format!(
                    "box [{o}, {o}+{s}) exceeds extent {e} on axis {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, coords: &[usize]) -> bool {
        coords
            .iter()
            .zip(self.origin.iter().zip(&self.size))
            .all(|(&k, (&o, &s))| k >= o && k < o + s)
    }

    /// `|self ∩ other|`, as the product of per-axis overlaps.
    pub fn intersection_volume(&self, other: &HyperRect) -> u64 {
        self.origin
            .iter()
            .zip(&self.size)
            .zip(other.origin.iter().zip(&other.size))
            .map(|((&a, &sa), (&b, &sb))| {
                let lo = a.max(b);
                let hi = (a + sa).min(b + sb);
                hi.saturating_sub(lo) as u64
            })
            .product()
    }

    /// Calls `f` with the flat site index of every site in the box, in
    /// site-major order. The box must already be validated against `dims`.
    pub(crate) fn for_each_site(&self, dims: &FieldDims, mut f: impl FnMut(usize)) {
        let d = dims.d();
        let ext = dims.dims();
        // Strides of the site index per axis.
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * ext[i + 1];
        }
        let last = d - 1;
        let base: usize = self.origin.iter().zip(&strides).map(|(&o, &s)| o * s).sum();
        let mut offs = vec![0usize; d];
        loop {
            let start = base + offs.iter().zip(&strides).map(|(&k, &s)| k * s).sum::<usize>();
            for j in 0..self.size[last] {
                f(start + j);
            }
            // Odometer over all axes except the last.
            let mut axis = last;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                offs[axis] += 1;
                if offs[axis] < self.size[axis] {
                    break;
                }
                offs[axis] = 0;
            }
        }
    }
}

/// A mean shift `h` applied on the box `I_θ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub region: HyperRect,
    pub shift: Vec<f64>,
}

impl AnomalySpec {
    pub fn validate(&self, dims: &FieldDims) -> Result<()> {
        self.region.validate(dims)?;
        if self.shift.len() != dims.n() {
            return Err(Error::Shape { expected: dims.n(), got: self.shift.len() });
        }
        if self.shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("anomaly shift must be finite".into()));
        }
        Ok(())
    }
}

/// Observed `n`-variate field on the window `W`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiField {
    dims: FieldDims,
    values: Vec<f64>,
}

impl MultiField {
    pub fn new(dims: FieldDims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len_values() {
            return Err(Error::Dimension(format!(
                "expected {} values for {:?} x {} components, got {}",
                dims.len_values(),
                dims.dims(),
                dims.n(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("value {} at flat index {i} is not finite", values[i])));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: FieldDims) -> Self {
        let values = vec![0.0; dims.len_values()];
        Self { dims, values }
    }

    /// Builds a field from `f(coords, component)`.
    pub fn from_fn(dims: FieldDims, mut f: impl FnMut(&[usize], usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.len_values());
        for site in 0..dims.sites() {
            let coords = dims.coords_of(site);
            for c in 0..dims.n() {
                values.push(f(&coords, c));
            }
        }
        Self::new(dims, values)
    }

    // Skips validation; callers guarantee length and finiteness.
    pub(crate) fn from_parts_unchecked(dims: FieldDims, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), dims.len_values());
        Self { dims, values }
    }

    pub fn dims(&self) -> &FieldDims {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The `n` components at `coords`.
    pub fn site(&self, coords: &[usize]) -> Option<&[f64]> {
        let n = self.dims.n();
        self.dims.site_index(coords).map(|s| &self.values[s * n..(s + 1) * n])
    }

    /// Field plus the constant vector `c` at every site.
    pub fn offset(&self, c: &[f64]) -> Result<Self> {
        let n = self.dims.n();
        if c.len() != n {
            return Err(Error::Shape { expected: n, got: c.len() });
        }
        let values = self
            .values
            .chunks_exact(n)
            .flat_map(|site| site.iter().zip(c).map(|(v, s)| v + s))
            .collect();
        Self::new(self.dims.clone(), values)
    }

    pub fn negated(&self) -> Self {
        let values = self.values.iter().map(|v| -v).collect();
        Self { dims: self.dims.clone(), values }
    }
}

/// Returns `field` with `spec.shift` added to every site of `spec.region`.
pub fn inject_anomaly(field: &MultiField, spec: &AnomalySpec) -> Result<MultiField> {
    let dims = field.dims();
    spec.validate(dims)?;
    let n = dims.n();
    let mut values = field.values.clone();
    spec.region.for_each_site(dims, |s| {
        for (v, h) in values[s * n..(s + 1) * n].iter_mut().zip(&spec.shift) {
            *v += h;
        }
    });
    MultiField::new(dims.clone(), values)
}
