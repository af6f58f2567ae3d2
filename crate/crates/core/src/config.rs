//! Experiment configuration: TOML (canonical) or JSON with sections
//! `[prior]`, `[problem]`, `[plan]` and `[inference]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::forward::{
    ForwardMap, ForwardProblem, ForwardState, LinearForward, ObservationOperator, PdeForward, ProblemKind, Profile,
    SubdiffusionData,
};
use crate::inference::{ChainConfig, VbConfig};
use crate::link::LinkSpec;
use crate::prior::{PriorConfig, PriorSpec};
use crate::rates::{RateConstants, Variant};
use crate::spectral::{synthesize_truth, BasisSpec, SpectralField};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanConfig>,
    #[serde(default)]
    pub inference: InferenceConfig,
}

impl Config {
    /// Parses JSON when the path ends in `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(Some(path), &[])
    }

    /// Loads `path` (or an empty config) and applies `section.key=value`
    /// overrides. Values are read as JSON literals, falling back to strings.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = match path {
            None => serde_json::Value::Object(Default::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| LabError::Config(format!("cannot read {}: {e}", p.display())))?;
                if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                    serde_json::from_str(&text).map_err(|e| LabError::Config(e.to_string()))?
                } else {
                    toml::from_str(&text).map_err(|e| LabError::Config(e.to_string()))?
                }
            }
        };
        for item in overrides {
            apply_override(&mut tree, item)?;
        }
        serde_json::from_value(tree).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn prior(&self) -> Result<&PriorConfig> {
        self.prior.as_ref().ok_or_else(|| LabError::Config("missing [prior] section".into()))
    }

    pub fn problem(&self) -> Result<&ProblemConfig> {
        self.problem.as_ref().ok_or_else(|| LabError::Config("missing [problem] section".into()))
    }

    pub fn plan(&self) -> Result<&PlanConfig> {
        self.plan.as_ref().ok_or_else(|| LabError::Config("missing [plan] section".into()))
    }
}

fn apply_override(tree: &mut serde_json::Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override {item:?} is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.trim().split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| LabError::Config(format!("override {key:?} descends into a non-table value")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Forward model choice; `linear` is the conjugate surrogate `G(F) = F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    DiffusionCoefficient,
    EllipticPotential,
    SubdiffusionPotential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub lo: f64,
    pub hi: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { lo: 1.0, hi: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ModelKind,
    #[serde(rename = "d", default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subdiffusion: Option<SubdiffusionData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bound: Option<f64>,
    #[serde(default)]
    pub link: LinkConfig,
    /// Noise level; required by every command that touches data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Regularity of the synthesized truth.
    #[serde(default = "default_truth_beta")]
    pub beta: f64,
    #[serde(default)]
    pub truth_seed: u64,
}

fn default_dim() -> usize {
    1
}
fn default_grid_n() -> usize {
    64
}
fn default_truth_beta() -> f64 {
    1.0
}

impl ProblemConfig {
    pub fn sigma(&self) -> Result<f64> {
        match self.sigma {
            Some(s) if s > 0.0 => Ok(s),
            Some(s) => Err(LabError::Config(format!("problem.sigma must be positive, got {s}"))),
            None => Err(LabError::Config("missing key problem.sigma".into())),
        }
    }

    pub fn link(&self) -> Result<LinkSpec> {
        LinkSpec::new(self.link.lo, self.link.hi).map_err(|e| LabError::Config(format!("problem.link: {e}")))
    }

    /// PDE problem descriptor; `None` for the linear surrogate.
    pub fn forward_problem(&self) -> Option<ForwardProblem> {
        let kind = match self.kind {
            ModelKind::Linear => return None,
            ModelKind::DiffusionCoefficient => ProblemKind::DiffusionCoefficient,
            ModelKind::EllipticPotential => ProblemKind::EllipticPotential,
            ModelKind::SubdiffusionPotential => ProblemKind::SubdiffusionPotential,
        };
        Some(ForwardProblem {
            kind,
            dim: self.dim,
            grid_n: self.grid_n,
            source: self.source.clone().unwrap_or(Profile::Constant { value: 1.0 }),
            subdiffusion: self.subdiffusion.clone(),
            u_bound: self.u_bound,
        })
    }

    pub fn basis(&self, j: usize) -> Result<BasisSpec> {
        BasisSpec::with_len(self.dim, j)
    }

    pub fn model(&self, basis: BasisSpec) -> Result<Model> {
        match self.forward_problem() {
            None => {
                if basis.dim() != self.dim {
                    return Err(LabError::Config("basis dimension does not match problem.d".into()));
                }
                Ok(Model::Linear(LinearForward::new(basis)))
            }
            Some(p) => Ok(Model::Pde(PdeForward::new(p, self.link()?, basis)?)),
        }
    }

    pub fn truth(&self, basis: &BasisSpec) -> Result<SpectralField> {
        synthesize_truth(self.beta, basis, self.truth_seed)
    }

    /// Rate constants `(kappa, l)` attached to each model when none are given.
    pub fn default_smoothing(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::Linear | ModelKind::DiffusionCoefficient => (0.0, 0.0),
            ModelKind::EllipticPotential | ModelKind::SubdiffusionPotential => (1.0, 1.0),
        }
    }
}

impl PriorConfig {
    /// Prior on `basis` at sample size `n` (overriding `N` from the file).
    /// `truth` sets the default conditioning radius `2 ||F0||_{H^1}` when
    /// `conditioned` is requested without an explicit `M`.
    pub fn spec(&self, basis: BasisSpec, n: Option<usize>, truth: Option<&SpectralField>) -> Result<PriorSpec> {
        let n = n.or(self.n).unwrap_or(1);
        let spec = PriorSpec::new(self.alpha, self.h, n, basis)?;
        match (self.m, truth) {
            (Some(m), _) => spec.with_conditioning(m),
            (None, Some(f0)) if self.conditioned => spec.with_conditioning(2.0 * f0.norm_hs(1.0)),
            _ => Ok(spec),
        }
    }
}

/// Either forward map, so configs can switch between them at run time.
#[derive(Clone, Debug)]
pub enum Model {
    Linear(LinearForward),
    Pde(PdeForward),
}

impl ForwardMap for Model {
    fn basis(&self) -> &BasisSpec {
        match self {
            Model::Linear(m) => m.basis(),
            Model::Pde(m) => m.basis(),
        }
    }

    fn apply(&self, field: &SpectralField) -> Result<ForwardState> {
        match self {
            Model::Linear(m) => m.apply(field),
            Model::Pde(m) => m.apply(field),
        }
    }

    fn is_linear(&self) -> bool {
        matches!(self, Model::Linear(_))
    }

    fn observation_operator(&self, coords: &[f64]) -> Result<ObservationOperator> {
        match self {
            Model::Linear(m) => m.observation_operator(coords),
            Model::Pde(m) => m.observation_operator(coords),
        }
    }

    fn pullback(&self, field: &SpectralField, state: &ForwardState, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => m.pullback(field, state, v),
            Model::Pde(m) => m.pullback(field, state, v),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Pcn,
    Vb,
    Both,
}

impl Method {
    pub fn runs_pcn(self) -> bool {
        matches!(self, Method::Pcn | Method::Both)
    }
    pub fn runs_vb(self) -> bool {
        matches!(self, Method::Vb | Method::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(rename = "N")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Radius multiplier of the `delta_N` ball.
    #[serde(default = "default_m")]
    pub m: f64,
    /// Multipliers reported in the summary.
    #[serde(default = "default_m_values")]
    pub m_values: Vec<f64>,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Contraction exponent; solved from the constraint system when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Truncation exponent for `J_q`; solved with `b` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_radii")]
    pub stability_radii: Vec<f64>,
    #[serde(default = "default_stability_count")]
    pub stability_count: usize,
    /// Write `rates.svg` next to the CSV.
    #[serde(default)]
    pub svg: bool,
}

fn default_replicates() -> usize {
    5
}
fn default_m() -> f64 {
    2.0
}
fn default_m_values() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_variant() -> Variant {
    Variant::P3
}
fn default_radii() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05, 0.025]
}
fn default_stability_count() -> usize {
    40
}

impl PlanConfig {
    pub fn constants(&self, prior: &PriorConfig, problem: &ProblemConfig) -> Result<RateConstants> {
        let (k0, l0) = problem.default_smoothing();
        RateConstants::new(
            prior.alpha,
            problem.beta,
            problem.dim as f64,
            self.kappa.unwrap_or(k0),
            self.l.unwrap_or(l0),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default = "default_chain")]
    pub pcn: ChainConfig,
    #[serde(default)]
    pub vb: VbConfig,
    /// `J_q = min(J, ceil(jq_scale * N^c))`.
    #[serde(default = "default_jq_scale")]
    pub jq_scale: f64,
    /// Draws from the fitted `q` used for posterior summaries.
    #[serde(default = "default_vb_draws")]
    pub vb_draws: usize,
}

fn default_chain() -> ChainConfig {
    ChainConfig::new(6000, 1000, 0)
}
fn default_jq_scale() -> f64 {
    2.0
}
fn default_vb_draws() -> usize {
    1000
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            pcn: default_chain(),
            vb: VbConfig::default(),
            jq_scale: default_jq_scale(),
            vb_draws: default_vb_draws(),
        }
    }
}
