use std::path::{Path, PathBuf};

use cjs_core::bpdn::{BpdnConfig, TvSolveConfig};
use cjs_core::measure::EpsilonPolicy;
use cjs_core::phantom::{piecewise_phantom, shepp_logan, Shape};
use cjs_core::{Image, SamplingMode, Scheme, SchemeConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomSpec {
    #[default]
    SheppLogan,
    Shapes { shapes: Vec<Shape> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    /// TV-min on the object data.
    Tv,
    /// Joint OMP on the lifted data, constrained refit, level sets.
    Omp,
    /// Plain `l1` basis pursuit on the object itself.
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpOptions {
    #[serde(default)]
    pub max_support: Option<usize>,
    /// Gradient rows below `edge_tol * max row norm` do not cut level sets.
    #[serde(default = "default_edge_tol")]
    pub edge_tol: f64,
}

fn default_edge_tol() -> f64 {
    1e-3
}

impl Default for OmpOptions {
    fn default() -> Self {
        Self { max_support: None, edge_tol: default_edge_tol() }
    }
}

fn default_q() -> usize {
    128
}
fn default_scheme() -> Scheme {
    Scheme::Backward
}
fn default_mode() -> SamplingMode {
    SamplingMode::OnGrid
}
fn default_gamma() -> f64 {
    1.0
}
fn default_n_per_sparsity() -> f64 {
    6.0
}
fn default_levels() -> Vec<f64> {
    vec![0.0]
}
fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Tv]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub phantom: PhantomSpec,
    #[serde(default = "default_q")]
    pub q: usize,
    /// Grid spacing; `1/q` when absent.
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_mode")]
    pub mode: SamplingMode,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Number of measurements; `n_per_sparsity * s` when absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_n_per_sparsity")]
    pub n_per_sparsity: f64,
    /// Relative noise levels; each one is a separate cell.
    #[serde(default = "default_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default)]
    pub epsilon_policy: EpsilonPolicy,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub tv: TvSolveConfig,
    #[serde(default)]
    pub omp: OmpOptions,
    #[serde(default)]
    pub l1: BpdnConfig,
    /// Assumed restricted isometry constant for the TV error bound record.
    #[serde(default)]
    pub delta2s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Left out of the embedded copy so that replays elsewhere match.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing.unwrap_or(1.0 / self.q as f64)
    }

    pub fn phantom(&self) -> Result<Image> {
        let l = self.spacing();
        Ok(match &self.phantom {
            PhantomSpec::SheppLogan => shepp_logan(self.q, l)?,
            PhantomSpec::Shapes { shapes } => piecewise_phantom(shapes, self.q, l)?,
        })
    }

    /// Measurement count for an object with gradient sparsity `s`.
    pub fn measurement_count(&self, s: usize) -> usize {
        match (self.mode, self.n) {
            (SamplingMode::Complete, _) => self.q * self.q,
            (_, Some(n)) => n,
            _ => ((self.n_per_sparsity * s as f64).ceil() as usize).clamp(1, 4 * self.q * self.q),
        }
    }

    pub fn scheme_config(&self, n: usize) -> SchemeConfig {
        SchemeConfig::new(self.scheme, self.mode, n, self.spacing(), self.seed).with_gamma(self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 4 {
            return Err(invalid("q must be at least 4"));
        }
        if matches!(self.phantom, PhantomSpec::SheppLogan) && self.q < 32 {
            return Err(invalid("the Shepp-Logan phantom needs q >= 32"));
        }
        if let Some(l) = self.spacing {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid("spacing must be positive"));
            }
        }
        if let Some(n) = self.n {
            let cap = match self.mode {
                SamplingMode::Continuous => usize::MAX,
                SamplingMode::OnGrid => 4 * self.q * self.q,
                SamplingMode::Complete => self.q * self.q,
            };
            if n == 0 || n > cap {
                return Err(invalid(format!("n = {n} is outside 1..={cap} for {:?} sampling", self.mode)));
            }
        }
        if !(self.n_per_sparsity.is_finite() && self.n_per_sparsity > 0.0) {
            return Err(invalid("n_per_sparsity must be positive"));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("noise_levels must be a nonempty list of nonnegative numbers"));
        }
        if self.solvers.is_empty() {
            return Err(invalid("at least one solver is required"));
        }
        if let Some(d) = self.delta2s {
            if !(0.0..1.0).contains(&d) {
                return Err(invalid("delta2s must be in [0, 1)"));
            }
        }
        if !(self.omp.edge_tol.is_finite() && self.omp.edge_tol >= 0.0) {
            return Err(invalid("omp.edge_tol must be nonnegative"));
        }
        self.tv.validate()?;
        let sc = self.scheme_config(self.n.unwrap_or(1));
        sc.validate()?;
        sc.check_bandwidth()?;
        Ok(())
    }
}
