//! Scenario configuration files.
//!
//! A scenario is a TOML document; unknown keys anywhere are rejected. See
//! `scenarios/*.toml` for one annotated example per shipped scenario.

use std::path::{Path, PathBuf};

use gfc_core::dynamics::{RecurrenceParams, TimeConvention};
use gfc_core::geometry::{FlatSubmanifold, TorusManifold};
use gfc_core::states::{Scaling, StateFamily, TestFamily, TestKind};
use gfc_core::trig::TrigSeries;
use gfc_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometrySpec,
    pub state: StateSpec,
    pub test: TestSpec,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub quantization: QuantizationSpec,
    #[serde(default)]
    pub measures: MeasuresSpec,
    #[serde(default)]
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub expected: Expected,
}

/// The torus dimension and the flat subtorus `H = {x_a = c_a, a ∈ normal_axes}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub dim: usize,
    pub normal_axes: Vec<usize>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub m: Vec<i64>,
    #[serde(default = "one")]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    PlaneWave {
        m0: Vec<i64>,
    },
    /// Either `h1` (frequencies scale with n at `h = h1/n`) or `h_values` (fixed frequencies).
    FourierSum {
        terms: Vec<TermSpec>,
        #[serde(default)]
        h1: Option<f64>,
        #[serde(default)]
        h_values: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSpec {
    CoherentState {
        x0: f64,
        p0: f64,
    },
    CurveExponential {
        alpha0: f64,
    },
    /// `w(x) = c0 + Σ a_k cos(2πkx) + Σ b_k sin(2πkx)` with `[k, a_k]` pairs.
    ConstantWeight {
        #[serde(default)]
        c0: f64,
        #[serde(default)]
        cos: Vec<(i64, f64)>,
        #[serde(default)]
        sin: Vec<(i64, f64)>,
    },
    RestrictedEigenfunction {
        parent: StateSpec,
    },
}

/// Exactly one of `count` (largest admissible h) or `nominal` (snapped to the nearest admissible h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub nominal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
}

impl Default for QuantizationSpec {
    fn default() -> Self {
        Self { enabled: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_tseq")]
    pub tseq: Vec<f64>,
}

fn default_tseq() -> Vec<f64> {
    vec![0.08, 0.04, 0.02, 0.01]
}

impl Default for MeasuresSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            tseq: default_tseq(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    #[default]
    Hp,
    Unit,
}

impl Convention {
    pub fn to_core(self) -> TimeConvention {
        match self {
            Convention::Hp => TimeConvention::HamiltonianHp,
            Convention::Unit => TimeConvention::UnitSpeed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Hp => "hp",
            Convention::Unit => "unit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default = "defaults::eps_hit")]
    pub eps_hit: f64,
    #[serde(default = "defaults::eps_rec")]
    pub eps_rec: f64,
    #[serde(default = "defaults::n_min")]
    pub n_min: usize,
    #[serde(default = "defaults::t_max")]
    pub t_max: f64,
    #[serde(default = "defaults::t_min")]
    pub t_min: f64,
    /// Stratified random starting points per Σ^A cell; 0 uses cell centers.
    #[serde(default = "defaults::samples")]
    pub samples_per_cell: usize,
}

mod defaults {
    use gfc_core::dynamics::RecurrenceParams;

    pub fn eps_hit() -> f64 {
        RecurrenceParams::default().eps_hit
    }
    pub fn eps_rec() -> f64 {
        RecurrenceParams::default().eps_rec
    }
    pub fn n_min() -> usize {
        RecurrenceParams::default().n_min
    }
    pub fn t_max() -> f64 {
        RecurrenceParams::default().t_max
    }
    pub fn t_min() -> f64 {
        RecurrenceParams::default().t_min
    }
    pub fn samples() -> usize {
        1
    }
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        let p = RecurrenceParams::default();
        Self {
            enabled: true,
            convention: Convention::Hp,
            eps_hit: p.eps_hit,
            eps_rec: p.eps_rec,
            n_min: p.n_min,
            t_max: p.t_max,
            t_min: p.t_min,
            samples_per_cell: 1,
        }
    }
}

impl DynamicsSpec {
    pub fn params(&self) -> RecurrenceParams {
        RecurrenceParams {
            eps_hit: self.eps_hit,
            eps_rec: self.eps_rec,
            n_min: self.n_min,
            t_max: self.t_max,
            t_min: self.t_min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Emit {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
}

fn default_emit() -> Vec<Emit> {
    vec![Emit::Csv, Emit::Json]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            emit: default_emit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub value: f64,
    pub tol: f64,
}

impl Target {
    pub fn holds(&self, observed: f64) -> bool {
        (observed - self.value).abs() <= self.tol
    }
}

/// Closed-form ground truth. Measure-level values refer to `expected.convention`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(default)]
    pub class: Option<String>,
    /// `|⟨φ_h, ψ_h⟩|` at every swept h; fills the CSV `expected` column.
    #[serde(default)]
    pub modulus: Option<Target>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub rhs_star: Option<Target>,
    #[serde(default)]
    pub rem: Option<Target>,
    #[serde(default)]
    pub recurrent_mass: Option<Target>,
}

pub fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(&text)
}

fn state_family(spec: &StateSpec) -> Result<StateFamily, CliError> {
    Ok(match spec {
        StateSpec::PlaneWave { m0 } => StateFamily::plane_wave(m0.clone())?,
        StateSpec::FourierSum { terms, h1, h_values } => {
            let scaling = match (h1, h_values) {
                (Some(h1), None) => Scaling::Multiples { h1: *h1 },
                (None, Some(v)) => Scaling::Fixed { h_values: v.clone() },
                _ => {
                    return Err(CliError::Config(
                        "a Fourier-sum state needs exactly one of `h1` or `h_values`".into(),
                    ))
                }
            };
            StateFamily::fourier_sum(
                terms
                    .iter()
                    .map(|t| (Complex64::new(t.re, t.im), t.m.clone()))
                    .collect(),
                scaling,
            )?
        }
    })
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.trim().is_empty() {
            return Err(CliError::Config("`name` must be non-empty".into()));
        }
        match (&self.sweep.count, &self.sweep.nominal) {
            (Some(n), None) if *n >= 4 => {}
            (None, Some(v)) if v.len() >= 4 => {}
            _ => {
                return Err(CliError::Config(
                    "[sweep] needs exactly one of `count` or `nominal`, with at least 4 values".into(),
                ))
            }
        }
        if self.output.emit.is_empty() {
            return Err(CliError::Config("[output] emit must list csv and/or json".into()));
        }
        self.dynamics.params().validate()?;
        let (phi, psi) = self.families()?;
        if phi.dim() != psi.submanifold().ambient_dim() {
            return Err(CliError::Config(format!(
                "state lives on T^{} but H sits in T^{}",
                phi.dim(),
                psi.submanifold().ambient_dim()
            )));
        }
        Ok(())
    }

    pub fn submanifold(&self) -> Result<FlatSubmanifold, CliError> {
        let g = &self.geometry;
        let m = TorusManifold::new(g.dim)?;
        let offset = g.offset.clone().unwrap_or_else(|| vec![0.0; g.normal_axes.len()]);
        Ok(FlatSubmanifold::new(&m, &g.normal_axes, &offset)?)
    }

    pub fn families(&self) -> Result<(StateFamily, TestFamily), CliError> {
        let sub = self.submanifold()?;
        let phi = state_family(&self.state)?;
        let kind = match &self.test {
            TestSpec::CoherentState { x0, p0 } => TestKind::CoherentState { x0: *x0, p0: *p0 },
            TestSpec::CurveExponential { alpha0 } => TestKind::CurveExponential { alpha0: *alpha0 },
            TestSpec::ConstantWeight { c0, cos, sin } => TestKind::ConstantWeight {
                weight: TrigSeries::from_cos_sin(*c0, cos, sin),
            },
            TestSpec::RestrictedEigenfunction { parent } => TestKind::RestrictedEigenfunction {
                parent: state_family(parent)?,
            },
        };
        Ok((phi, TestFamily::new(sub, kind)?))
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}
