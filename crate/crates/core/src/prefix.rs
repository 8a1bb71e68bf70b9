//! d-dimensional prefix sums (summed-area tables) over a multivariate field.
//!
//! The table has extent `dims[i] + 1` on every axis, with a zero hyperplane at
//! index 0, so `cums[j, c]` is the sum of component `c` over all sites `k`
//! with `k_i < j_i`. A box sum is the alternating-sign sum of its `2^d`
//! corners.

use crate::error::{Error, Result};
use crate::field::{FieldDims, HyperRect, MultiField};

#[derive(Debug, Clone)]
pub struct PrefixTable {
    dims: FieldDims,
    strides: Vec<usize>,
    cums: Vec<f64>,
    // Inclusion-exclusion sign per corner mask; bit i set selects the upper corner on axis i.
    signs: Vec<f64>,
}

impl PrefixTable {
    pub fn build(field: &MultiField) -> Result<Self> {
        let dims = field.dims().clone();
        let d = dims.d();
        let n = dims.n();
        if d >= usize::BITS as usize - 1 {
            return Err(Error::Dimension(format!("{d} axes exceed the corner enumeration limit")));
        }
        let padded: Vec<usize> = dims.dims().iter().map(|&e| e + 1).collect();
        let cells = padded
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .and_then(|c| c.checked_mul(n))
            .ok_or_else(|| Error::Dimension("prefix table size overflows".into()))?;

        // Strides in the padded table, counted in values (component index fastest).
        let mut strides = vec![n; d];
        for i in (0..d - 1).rev() {
            strides[i] = strides[i + 1] * padded[i + 1];
        }

        let mut cums = vec![0.0; cells];
        let src = field.values();
        for site in 0..dims.sites() {
            // Destination is the site shifted by +1 on every axis.
            let mut rem = site;
            let mut dst = 0usize;
            for i in (0..d).rev() {
                let e = dims.dims()[i];
                dst += (rem % e + 1) * strides[i];
                rem /= e;
            }
            cums[dst..dst + n].copy_from_slice(&src[site * n..(site + 1) * n]);
        }

        // Running sums along each axis in turn.
        for axis in 0..d {
            let stride = strides[axis];
            let extent = padded[axis];
            let block = stride * extent;
            for chunk in cums.chunks_exact_mut(block) {
                for j in 1..extent {
                    let (prev, cur) = chunk.split_at_mut(j * stride);
                    let prev = &prev[(j - 1) * stride..];
                    for (c, p) in cur[..stride].iter_mut().zip(prev) {
                        *c += *p;
                    }
                }
            }
        }

        let signs = (0..1usize << d)
            .map(|mask| if (d - mask.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        Ok(Self { dims, strides, cums, signs })
    }

    pub fn dims(&self) -> &FieldDims {
        &self.dims
    }

    /// Raw cumulative sums in padded site-major order.
    pub fn cums(&self) -> &[f64] {
        &self.cums
    }

    /// Σ over the box of each component.
    pub fn window_sum(&self, rect: &HyperRect) -> Result<Vec<f64>> {
        rect.validate(&self.dims)?;
        let mut out = vec![0.0; self.dims.n()];
        self.window_sum_into(rect, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`window_sum`](Self::window_sum) writing into
    /// `out`; the box must lie inside the window.
    pub fn window_sum_into(&self, rect: &HyperRect, out: &mut [f64]) {
        debug_assert!(rect.validate(&self.dims).is_ok());
        let n = self.dims.n();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (mask, &sign) in self.signs.iter().enumerate() {
            let mut idx = 0usize;
            for (i, ((&o, &s), &stride)) in rect.origin.iter().zip(&rect.size).zip(&self.strides).enumerate() {
                let j = if mask >> i & 1 == 1 { o + s } else { o };
                idx += j * stride;
            }
            for (acc, v) in out.iter_mut().zip(&self.cums[idx..idx + n]) {
                *acc += sign * v;
            }
        }
    }

    /// Componentwise sum over the whole window.
    pub fn total(&self) -> Vec<f64> {
        let n = self.dims.n();
        self.cums[self.cums.len() - n..].to_vec()
    }
}
