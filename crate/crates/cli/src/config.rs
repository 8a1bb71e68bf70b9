//! Run configuration: JSON parameter files merged with command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use fieldscan::{AnomalySpec, BranchRule, FieldDims, Generator, ModelParams, NormOrder, ScanSpace};
use serde::{Deserialize, Serialize};

pub const DEFAULT_GAMMA0: f64 = 0.05;
pub const DEFAULT_GAMMA1: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_REPS: usize = 500;

/// Every key a parameter file may carry. Unset keys fall back to defaults
/// or are required by the subcommand that needs them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<BranchRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormOrder>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly: Option<AnomalySpec>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("malformed config {}", path.display()))
    }

    /// Loads `path` if given and applies `flags` on top.
    pub fn resolve(path: Option<&Path>, flags: RunConfig) -> Result<Self> {
        let base = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        Ok(base.overlay(flags))
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay_fields!(self, top; dims, d, n, m, sigma, h, variant, alpha, gamma0, gamma1, generator, norm, reps, seed, anomaly);
        self
    }

    /// Extents and component count from the config alone.
    pub fn field_dims(&self) -> Result<FieldDims> {
        let dims = self.dims.clone().context("missing dims (set `dims` in the config or pass --dims)")?;
        let n = self.n.context("missing component count (set `n` or pass --components)")?;
        let fd = FieldDims::new(dims, n)?;
        self.check_dims(&fd)?;
        Ok(fd)
    }

    /// Cross-checks the config against the extents of an actual field and
    /// fills in whatever the config left unset.
    pub fn adopt_dims(&mut self, fd: &FieldDims) -> Result<()> {
        self.check_dims(fd)?;
        self.dims = Some(fd.dims().to_vec());
        self.d = Some(fd.d());
        self.n = Some(fd.n());
        Ok(())
    }

    fn check_dims(&self, fd: &FieldDims) -> Result<()> {
        if let Some(dims) = &self.dims {
            if dims.as_slice() != fd.dims() {
                bail!("configured dims {:?} disagree with field extents {:?}", dims, fd.dims());
            }
        }
        if let Some(d) = self.d {
            if d != fd.d() {
                bail!("configured d = {d} disagrees with {} field axes", fd.d());
            }
        }
        if let Some(n) = self.n {
            if n != fd.n() {
                bail!("configured n = {n} disagrees with {} field components", fd.n());
            }
        }
        Ok(())
    }

    /// Fills scanning defaults and builds the window family.
    pub fn space(&mut self, fd: &FieldDims) -> Result<ScanSpace> {
        let gamma0 = *self.gamma0.get_or_insert(DEFAULT_GAMMA0);
        let gamma1 = *self.gamma1.get_or_insert(DEFAULT_GAMMA1);
        let generator = self.generator.clone().context("missing window generator (set `generator` or pass --windows)")?;
        Ok(ScanSpace::new(fd.clone(), gamma0, gamma1, generator)?)
    }

    pub fn norm(&mut self) -> NormOrder {
        *self.norm.get_or_insert(NormOrder::Infinity)
    }

    pub fn alpha(&mut self) -> f64 {
        *self.alpha.get_or_insert(DEFAULT_ALPHA)
    }

    pub fn m(&self) -> Result<usize> {
        self.m.context("missing dependence range (set `m` or pass --m)")
    }

    pub fn sigma(&self) -> Result<f64> {
        self.sigma.context("missing sigma (set `sigma` or pass --sigma)")
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.context("missing seed (set `seed` or pass --seed)")
    }

    /// Bound parameters; `H` defaults to `sigma`, the variant to `window`.
    pub fn model(&mut self, fd: &FieldDims) -> Result<ModelParams> {
        let m = u32::try_from(self.m()?).context("m out of range")?;
        let sigma = self.sigma()?;
        let h = *self.h.get_or_insert(sigma);
        let rule = *self.variant.get_or_insert(BranchRule::Window);
        let d = u32::try_from(fd.d()).context("d out of range")?;
        let n = u32::try_from(fd.n()).context("n out of range")?;
        Ok(ModelParams::new(m, d, n, sigma, h, rule)?)
    }
}

/// Parses `origin;size;shift` with comma-separated entries, 0-based origin.
pub fn parse_anomaly(s: &str) -> Result<AnomalySpec> {
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != 3 {
        bail!("anomaly {s:?} must look like origin;size;shift, e.g. 10,10,10;30,30,30;5,5,5");
    }
    let ints = |p: &str| -> Result<Vec<usize>> {
        p.split(',').map(|x| x.trim().parse().with_context(|| format!("bad integer {x:?} in {s:?}"))).collect()
    };
    let shift: Vec<f64> = parts[2]
        .split(',')
        .map(|x| x.trim().parse().with_context(|| format!("bad number {x:?} in {s:?}")))
        .collect::<Result<_>>()?;
    Ok(AnomalySpec { region: fieldscan::HyperRect::new(ints(parts[0])?, ints(parts[1])?), shift })
}

pub fn parse_variant(s: &str) -> Result<BranchRule, String> {
    match s {
        "window" => Ok(BranchRule::Window),
        "complement" => Ok(BranchRule::Complement),
        _ => Err(format!("unknown variant {s:?}; expected window or complement")),
    }
}
