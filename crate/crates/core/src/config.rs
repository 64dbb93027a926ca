//! TOML run configuration and assembly of the controller from it.
//!
//! Matrices are nested row arrays. Every section except `[plant]`,
//! `[weights]`, `[controller]` and `[ambiguity]` has defaults, and
//! [`RunConfig::to_toml`] writes all of them back out.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguitySet;
use crate::cutting_plane::{Controller, CuttingPlaneSettings};
use crate::error::{Error, Result};
use crate::penalty::PenaltyWeights;
use crate::reformulation::Reformulation;
use crate::system::{
    build_lifted, disturbance_observability, lc_threshold, norm_bounds, prestabilize, solve_riccati, CostWeights, InputBox, LiftedProblem, LtiSystem, NormBounds, RiccatiSolution,
    StateConstraints,
};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub weights: WeightsConfig,
    pub controller: ControllerConfig,
    pub ambiguity: AmbiguityConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub solver: CuttingPlaneSettings,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Rows,
    pub b: Rows,
    pub d: Rows,
    pub f0: Rows,
    pub g0: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub q: Rows,
    pub r: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ContractionPolicy {
    /// Report `||A_K|| >= 1` and carry on.
    #[default]
    Warn,
    /// Refuse to build the controller.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PenaltySpec {
    Uniform(f64),
    PerRow(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub l_c: f64,
    /// Second-stage penalty, a scalar or one entry per constraint row.
    pub penalty: PenaltySpec,
    #[serde(default = "yes")]
    pub prestabilize: bool,
    #[serde(default)]
    pub contraction: ContractionPolicy,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbiguityConfig {
    pub radius: f64,
    pub samples: usize,
    /// Output-space weight `C`; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_weight: Option<Rows>,
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MomentCadence {
    #[default]
    PerStep,
    PerRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Half-width of the box the true mean is drawn from.
    pub mu0: f64,
    /// Upper end of the covariance eigenvalue range is `sigma0^2`.
    pub sigma0: f64,
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
    pub moments: MomentCadence,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { mu0: 0.0, sigma0: 0.0, runs: 20, steps: 100, seed: 1, moments: MomentCadence::PerStep }
    }
}

impl ScenarioConfig {
    /// Named presets: `nominal`, `a`..`d`; `custom` keeps the configured moments.
    pub fn preset(&self, id: &str) -> Result<Self> {
        let (mu0, sigma0) = match id {
            "nominal" => (0.0, 0.0),
            "a" => (0.0, 0.1),
            "b" => (0.5, 0.1),
            "c" => (0.0, 0.5),
            "d" => (0.5, 0.5),
            "custom" => (self.mu0, self.sigma0),
            other => return Err(Error::Config(format!("unknown scenario `{other}` (expected nominal, a, b, c, d or custom)"))),
        };
        Ok(Self { mu0, sigma0, ..self.clone() })
    }

    /// `mu_bar = sqrt(2) mu0`.
    pub fn mean_bound(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.mu0
    }

    /// `Sigma_bar = diag(sigma0, .., sigma0)`.
    pub fn covariance_bound(&self, nw: usize) -> DMatrix<f64> {
        DMatrix::identity(nw, nw) * self.sigma0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub burn_in: usize,
    /// Young parameter for the recursive-cost audit.
    pub young_eps: f64,
    /// Young parameter for the penalty-cost audit.
    pub penalty_eps: f64,
    pub tolerance: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { burn_in: 10, young_eps: 0.5, penalty_eps: 1.0, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

pub(crate) fn matrix(rows: &Rows, what: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Config(format!("`{what}` must be a non-empty rectangular array of rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("`{what}` has a non-finite entry")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub(crate) fn vector(v: &[f64], what: &str) -> Result<DVector<f64>> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("`{what}` must be a non-empty finite array")));
    }
    Ok(DVector::from_column_slice(v))
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let c = &self.controller;
        if c.horizon == 0 {
            return Err(Error::Config("controller.horizon must be >= 1".into()));
        }
        if !(c.l_c > 0.0) {
            return Err(Error::Config("controller.l_c must be > 0".into()));
        }
        if !(self.ambiguity.radius >= 0.0) || self.ambiguity.samples == 0 || self.ambiguity.window == 0 {
            return Err(Error::Config("ambiguity.radius must be >= 0, samples and window >= 1".into()));
        }
        let s = &self.scenario;
        if !(s.mu0 >= 0.0 && s.sigma0 >= 0.0) {
            return Err(Error::Config("scenario.mu0 and scenario.sigma0 must be >= 0".into()));
        }
        if s.runs == 0 {
            return Err(Error::Config("scenario.runs must be >= 1".into()));
        }
        let t = &self.solver;
        if !(t.tol_cut > 0.0 && t.tol_sep > 0.0 && t.gamma_margin >= 0.0) || t.max_outer == 0 || t.max_master == 0 || t.ascent_cap == 0 {
            return Err(Error::Config("solver tolerances must be positive and caps >= 1".into()));
        }
        if !(self.analysis.young_eps > 0.0 && self.analysis.penalty_eps > 0.0) {
            return Err(Error::Config("analysis.young_eps and analysis.penalty_eps must be > 0".into()));
        }
        Ok(())
    }

    /// Builds the plant and runs the structural checks.
    pub fn build(&self) -> Result<Setup> {
        Setup::new(self)
    }

    /// Builds the plant and the controller described by this config.
    pub fn build_controller(&self) -> Result<(Setup, Controller)> {
        let setup = Setup::new(self)?;
        let ctrl = setup.controller(self.ambiguity.radius, self.controller.l_c, self.solver)?;
        Ok((setup, ctrl))
    }
}

/// Everything derived from a config: plant, terminal ingredients and
/// structural diagnostics.
#[derive(Debug, Clone)]
pub struct Setup {
    /// Physical plant.
    pub plant: LtiSystem,
    /// Model used for prediction (`A + B K` when pre-stabilized).
    pub model: LtiSystem,
    pub constraints: StateConstraints,
    pub input_box: InputBox,
    pub riccati: RiccatiSolution,
    /// Gain applied outside the optimizer (zero without pre-stabilization).
    pub gain: DMatrix<f64>,
    pub weights: CostWeights,
    pub lifted: LiftedProblem,
    pub bounds: NormBounds,
    pub observability_rank: usize,
    pub lc_threshold: f64,
    /// Terminal parameter `l_c`.
    pub l_c: f64,
    pub x0: DVector<f64>,
    pub penalty: PenaltyWeights,
    /// Output-space weight `C`.
    pub output_weight: DMatrix<f64>,
    pub warnings: Vec<String>,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let p = &cfg.plant;
        let a = matrix(&p.a, "plant.a")?;
        let b = matrix(&p.b, "plant.b")?;
        let d = matrix(&p.d, "plant.d")?;
        let f0 = matrix(&p.f0, "plant.f0")?;
        let g0 = vector(&p.g0, "plant.g0")?;
        let plant = LtiSystem::new(a, b, d).map_err(config_err)?;
        let constraints = StateConstraints::new(f0, g0).map_err(config_err)?;
        if constraints.f0.ncols() != plant.nx() {
            return Err(Error::Config("plant.f0 must have one column per state".into()));
        }
        let input_box = InputBox::new(vector(&p.u_min, "plant.u_min")?, vector(&p.u_max, "plant.u_max")?).map_err(config_err)?;
        if input_box.lower.len() != plant.nu() {
            return Err(Error::Config("plant.u_min/u_max must have one entry per input".into()));
        }
        let x0 = vector(&p.x0, "plant.x0")?;
        if x0.len() != plant.nx() {
            return Err(Error::Config("plant.x0 must have one entry per state".into()));
        }
        let q = matrix(&cfg.weights.q, "weights.q")?;
        let r = matrix(&cfg.weights.r, "weights.r")?;
        if q.shape() != (plant.nx(), plant.nx()) || r.shape() != (plant.nu(), plant.nu()) {
            return Err(Error::Config("weights.q / weights.r dimensions do not match the plant".into()));
        }
        let n = cfg.controller.horizon;
        let riccati = solve_riccati(&plant.a, &plant.b, &q, &r)?;
        let (gain, model) = if cfg.controller.prestabilize {
            (riccati.k.clone(), prestabilize(&plant, &riccati.k)?)
        } else {
            (DMatrix::zeros(plant.nu(), plant.nx()), plant.clone())
        };
        let weights = CostWeights::new(q, r, riccati.p.clone(), n).map_err(config_err)?;
        let mut warnings = Vec::new();

        let bounds = norm_bounds(&model, &input_box, n);
        if !bounds.contractive {
            match cfg.controller.contraction {
                ContractionPolicy::Error => return Err(Error::Structural(format!("contraction requirement ||A|| < 1 violated: ||A|| = {:.6}", bounds.l_a))),
                ContractionPolicy::Warn => warnings.push(format!("contraction requirement ||A|| < 1 violated: ||A|| = {:.6}; stability constants are indicative only", bounds.l_a)),
            }
        }
        let (_, rank) = disturbance_observability(&constraints.f0, &model.a, &model.d, n);
        if rank < model.nw() {
            return Err(Error::Structural(format!("disturbance observability rank {rank} < {}: the transport weight is singular", model.nw())));
        }
        let zero = DMatrix::zeros(model.nu(), model.nx());
        let threshold = lc_threshold(&model.a, &model.b, &zero, n);
        if cfg.controller.l_c < threshold - 1e-10 {
            return Err(Error::Structural(format!("terminal parameter violates the l_c lower bound: l_c = {} < {threshold:.6e}", cfg.controller.l_c)));
        }

        let lifted = build_lifted(&model, &constraints, n)?;
        let h = match &cfg.controller.penalty {
            PenaltySpec::Uniform(v) => PenaltyWeights::per_row(&DVector::from_element(constraints.nc(), *v), n),
            PenaltySpec::PerRow(v) if v.len() == constraints.nc() => PenaltyWeights::per_row(&DVector::from_column_slice(v), n),
            PenaltySpec::PerRow(_) => Err(Error::Config("controller.penalty needs one entry per constraint row".into())),
        }
        .map_err(config_err)?;
        let nco = n * constraints.nc();
        let c = match &cfg.ambiguity.output_weight {
            Some(rows) => matrix(rows, "ambiguity.output_weight")?,
            None => DMatrix::identity(nco, nco),
        };
        if c.shape() != (nco, nco) {
            return Err(Error::Config(format!("ambiguity.output_weight must be {nco}x{nco}")));
        }
        if crate::linalg::cholesky(&crate::linalg::symmetrize(&c), "C").is_err() {
            return Err(Error::Config("ambiguity.output_weight must be symmetric positive definite".into()));
        }
        Ok(Self { plant, model, constraints, input_box, riccati, gain, weights, lifted, bounds, observability_rank: rank, lc_threshold: threshold, l_c: cfg.controller.l_c, x0, penalty: h, output_weight: c, warnings })
    }

    /// `C_s = (F Dbar)' C (F Dbar)`.
    pub fn transport_weight(&self) -> Result<DMatrix<f64>> {
        crate::ambiguity::transport_weight(&self.lifted, &self.output_weight)
    }

    /// Controller for the given ambiguity radius and solver settings.
    pub fn controller(&self, radius: f64, l_c: f64, settings: CuttingPlaneSettings) -> Result<Controller> {
        let amb = AmbiguitySet::new(&self.lifted, self.output_weight.clone(), radius).map_err(|e| match e {
            Error::NotPositiveDefinite(_) => Error::Structural("transport weight C_s is not positive definite".into()),
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        })?;
        let reform = Reformulation::new(self.lifted.clone(), self.weights.clone(), self.penalty.clone(), amb, settings.gamma_margin)?;
        Controller::new(reform, self.model.clone(), self.gain.clone(), self.input_box.clone(), l_c, settings)
    }
}
