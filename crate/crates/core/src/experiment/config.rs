use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Grid, PeriodicField, VectorField};
use crate::model::{Family, HamiltonianModel};
use crate::operators::{BatterySpec, FieldPair};
use crate::solver::{validate_schedule, Blend, RegularizationParams, SolverControls};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Sweep,
    Uniqueness,
    MollifyAudit,
    MonotonicityAudit,
    ExponentCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Uniqueness => "uniqueness",
            ExperimentKind::MollifyAudit => "mollify-audit",
            ExperimentKind::MonotonicityAudit => "monotonicity-audit",
            ExperimentKind::ExponentCheck => "exponent-check",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
}

/// One Fourier mode `cos·cos(2πk·x) + sin·sin(2πk·x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A grid-independent field: a constant plus finitely many modes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
}

impl FieldSpec {
    pub fn constant(c: f64) -> Self {
        FieldSpec { constant: c, modes: Vec::new() }
    }

    pub fn realize(&self, grid: Grid) -> Result<PeriodicField> {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let k = match m.k.as_slice() {
                    [a] => [*a, 0],
                    [a, b] => [*a, *b],
                    _ => return Err(Error::config(format!("mode wavevector {:?} needs 1 or 2 entries", m.k))),
                };
                Ok((k, m.cos, m.sin))
            })
            .collect::<Result<Vec<_>>>()?;
        PeriodicField::trigonometric(grid, self.constant, &modes)
    }
}

fn unit_field() -> FieldSpec {
    FieldSpec::constant(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "unit_field")]
    pub a: FieldSpec,
    #[serde(default)]
    pub potential: FieldSpec,
    /// One field per axis; empty means `b ≡ 0`.
    #[serde(default)]
    pub drift: Vec<FieldSpec>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { family: Family::QuadraticLog, a: unit_field(), potential: FieldSpec::default(), drift: Vec::new() }
    }
}

impl ModelSpec {
    pub fn build(&self, grid: Grid) -> Result<HamiltonianModel> {
        let a = self.a.realize(grid)?;
        let potential = self.potential.realize(grid)?;
        let drift = if self.drift.is_empty() {
            VectorField::zeros(grid)
        } else {
            if self.drift.len() != grid.dim() {
                return Err(Error::config(format!(
                    "drift has {} components on a {}-D grid",
                    self.drift.len(),
                    grid.dim()
                )));
            }
            VectorField::new(self.drift.iter().map(|f| f.realize(grid)).collect::<Result<_>>()?)?
        };
        HamiltonianModel::new(self.family, a, drift, potential)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSpec {
    pub k: Option<u32>,
    pub q: Option<f64>,
    #[serde(default)]
    pub blend: Blend,
}

impl RegularizationSpec {
    /// Template parameters; σ is filled in per stage.
    pub fn template(&self, dim: usize) -> RegularizationParams {
        let d = RegularizationParams::defaults(dim, 0.5);
        RegularizationParams { sigma: 0.5, k: self.k.unwrap_or(d.k), q: self.q.unwrap_or(d.q), blend: self.blend }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub density: FieldSpec,
    pub value: FieldSpec,
}

impl PairSpec {
    pub fn constant(m: f64, u: f64) -> Self {
        PairSpec { density: FieldSpec::constant(m), value: FieldSpec::constant(u) }
    }

    pub fn realize(&self, grid: Grid) -> Result<FieldPair> {
        FieldPair::new(self.density.realize(grid)?, self.value.realize(grid)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessSpec {
    pub guesses: Vec<PairSpec>,
    pub schedules: Vec<Vec<f64>>,
    #[serde(default = "default_battery")]
    pub battery: BatterySpec,
}

fn default_battery() -> BatterySpec {
    BatterySpec::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifyAuditSpec {
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Coefficient of the cancellation draws.
    #[serde(default = "default_cancellation_coefficient")]
    pub coefficient: FieldSpec,
    #[serde(default = "default_max_mode")]
    pub max_mode: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_time_steps")]
    pub time_steps: usize,
}

fn default_draws() -> usize {
    100
}

fn default_cancellation_coefficient() -> FieldSpec {
    FieldSpec { constant: 1.0, modes: vec![ModeSpec { k: vec![1], cos: 0.3, sin: 0.0 }] }
}

fn default_max_mode() -> usize {
    6
}

fn default_rho() -> f64 {
    0.1
}

fn default_time_steps() -> usize {
    200
}

impl Default for MollifyAuditSpec {
    fn default() -> Self {
        MollifyAuditSpec {
            draws: default_draws(),
            coefficient: default_cancellation_coefficient(),
            max_mode: default_max_mode(),
            rho: default_rho(),
            time_steps: default_time_steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityAuditSpec {
    #[serde(default = "default_families")]
    pub families: Vec<Family>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_matrix_samples")]
    pub matrix_samples: usize,
    /// Density range of the matrix samples.
    #[serde(default = "default_m_range")]
    pub m_range: [f64; 2],
    #[serde(default = "default_p_max")]
    pub p_max: f64,
    #[serde(default = "default_fd_samples")]
    pub fd_samples: usize,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_jacobian_states")]
    pub jacobian_states: usize,
}

fn default_families() -> Vec<Family> {
    vec![Family::QuadraticLog, Family::Power { gamma: 2.0, beta: 1.0 }]
}

fn default_pairs() -> usize {
    1000
}

fn default_matrix_samples() -> usize {
    10_000
}

fn default_m_range() -> [f64; 2] {
    [0.1, 10.0]
}

fn default_p_max() -> f64 {
    3.0
}

fn default_fd_samples() -> usize {
    100
}

fn default_fd_step() -> f64 {
    1e-5
}

fn default_jacobian_states() -> usize {
    20
}

impl Default for MonotonicityAuditSpec {
    fn default() -> Self {
        MonotonicityAuditSpec {
            families: default_families(),
            pairs: default_pairs(),
            matrix_samples: default_matrix_samples(),
            m_range: default_m_range(),
            p_max: default_p_max(),
            fd_samples: default_fd_samples(),
            fd_step: default_fd_step(),
            jacobian_states: default_jacobian_states(),
        }
    }
}

/// One exponent case; `expect_super_q` optionally pins the verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentCase {
    pub r: f64,
    pub gamma: f64,
    pub r1: Option<f64>,
    pub gamma1: Option<f64>,
    pub d: u32,
    pub expect_super_q: Option<bool>,
    pub expect_sobolev: Option<bool>,
    pub expect_q: Option<[f64; 4]>,
    pub expect_gamma_star: Option<f64>,
}

/// Pass/fail thresholds; defaults are the acceptance tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rate_slope: [f64; 2],
    pub mass_identity: f64,
    pub monotonicity_gap: f64,
    pub matrix_analytic: f64,
    pub symmetry: f64,
    pub adjointness: f64,
    pub cancellation: f64,
    pub uniqueness_distance: f64,
    pub weak_tau: f64,
    pub elementary: f64,
    pub derivatives: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rate_slope: [0.8, 1.2],
            mass_identity: 1e-9,
            monotonicity_gap: 1e-10,
            matrix_analytic: 1e-10,
            symmetry: 1e-12,
            adjointness: 1e-11,
            cancellation: 1e-10,
            uniqueness_distance: 1e-6,
            weak_tau: 1e-4,
            elementary: 1e-12,
            derivatives: 1e-6,
        }
    }
}

fn default_entropy_deltas() -> Vec<f64> {
    vec![1.0, 0.5, 0.25]
}

/// Everything a run needs; parsed from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub regularization: RegularizationSpec,
    #[serde(default)]
    pub schedule: Vec<f64>,
    #[serde(default)]
    pub controls: SolverControls,
    pub initial: Option<PairSpec>,
    /// Known solution the sweep is measured against.
    pub reference: Option<PairSpec>,
    pub uniqueness: Option<UniquenessSpec>,
    pub mollify_audit: Option<MollifyAuditSpec>,
    pub monotonicity_audit: Option<MonotonicityAuditSpec>,
    #[serde(default)]
    pub exponents: Vec<ExponentCase>,
    /// Additional configurations whose sweeps join the uniformity check.
    #[serde(default)]
    pub companions: Vec<CompanionSpec>,
    #[serde(default = "default_entropy_deltas")]
    pub entropy_deltas: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A second model swept alongside the main one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanionSpec {
    pub name: String,
    pub model: ModelSpec,
    pub schedule: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.dim, self.grid.n)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn initial_pair(&self, grid: Grid) -> Result<FieldPair> {
        self.initial.clone().unwrap_or_else(|| PairSpec::constant(1.0, 0.0)).realize(grid)
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<ExperimentKind> {
        let kind = self.kind.ok_or_else(|| Error::config("experiment kind missing"))?;
        let grid = self.grid()?;
        let model = self.model.build(grid)?;
        let solving = matches!(kind, ExperimentKind::Solve | ExperimentKind::Sweep | ExperimentKind::Uniqueness);
        if solving {
            if model.family() != Family::QuadraticLog {
                return Err(Error::config(format!(
                    "the solver supports the quadratic_log family only, not {}",
                    model.family().name()
                )));
            }
            let template = self.regularization.template(grid.dim());
            template.validate(grid.dim())?;
            if !(self.controls.tol > 0.0) || self.controls.max_iter == 0 {
                return Err(Error::config("controls need tol > 0 and max_iter > 0"));
            }
        }
        match kind {
            ExperimentKind::Solve | ExperimentKind::Sweep => {
                validate_schedule(&self.schedule)?;
                self.initial_pair(grid)?.density.ensure_positive("initial density")?;
                if let Some(r) = &self.reference {
                    r.realize(grid)?.density.ensure_positive("reference density")?;
                }
                if kind == ExperimentKind::Sweep && self.reference.is_some() && self.schedule.len() < 3 {
                    return Err(Error::config("a sweep with a reference needs at least 3 stages"));
                }
                for c in &self.companions {
                    validate_schedule(&c.schedule)?;
                    c.model.build(grid)?;
                }
                if self.entropy_deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::config("entropy deltas must be positive"));
                }
            }
            ExperimentKind::Uniqueness => {
                let u = self.uniqueness.as_ref().ok_or_else(|| Error::config("uniqueness section missing"))?;
                if u.guesses.len() < 2 || u.schedules.len() < 2 {
                    return Err(Error::config(format!(
                        "uniqueness needs at least 2 guesses and 2 schedules, got {} and {}",
                        u.guesses.len(),
                        u.schedules.len()
                    )));
                }
                for s in &u.schedules {
                    validate_schedule(s)?;
                }
                let last = u.schedules[0].last().copied();
                if u.schedules.iter().any(|s| s.last().copied() != last) {
                    return Err(Error::config("all schedules must end at the same sigma"));
                }
                for g in &u.guesses {
                    g.realize(grid)?.density.ensure_positive("initial density")?;
                }
            }
            ExperimentKind::MollifyAudit => {
                let spec = self.mollify_audit.clone().unwrap_or_default();
                spec.coefficient.realize(grid)?.ensure_positive("cancellation coefficient")?;
                if !(spec.rho > 0.0) || spec.time_steps < 2 || spec.draws == 0 {
                    return Err(Error::config("mollify audit needs rho > 0, time_steps >= 2, draws > 0"));
                }
            }
            ExperimentKind::MonotonicityAudit => {
                let spec = self.monotonicity_audit.clone().unwrap_or_default();
                if spec.families.is_empty() || spec.pairs == 0 || spec.matrix_samples == 0 {
                    return Err(Error::config("monotonicity audit needs families, pairs and samples"));
                }
                if !(spec.m_range[0] > 0.0 && spec.m_range[1] >= spec.m_range[0]) {
                    return Err(Error::config("monotonicity m_range must be positive and ordered"));
                }
            }
            ExperimentKind::ExponentCheck => {
                if self.exponents.is_empty() {
                    return Err(Error::config("exponent-check needs at least one [[exponents]] case"));
                }
            }
        }
        Ok(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIVIAL: &str = r#"
kind = "sweep"
seed = 3
schedule = [0.1, 0.01, 0.001]
[grid]
dim = 1
n = 64
[regularization]
k = 3
q = 2.0
[reference]
density = { constant = 1.0 }
value = { constant = 0.0 }
"#;

    #[test]
    fn parses_minimal_sweep() {
        let c = ExperimentConfig::from_toml(TRIVIAL).unwrap();
        assert_eq!(c.validate().unwrap(), ExperimentKind::Sweep);
        assert_eq!(c.model.family, Family::QuadraticLog);
        assert_eq!(c.controls.tol, 1e-10);
    }

    #[test]
    fn family_and_modes() {
        let text = r#"
kind = "monotonicity-audit"
[grid]
dim = 1
n = 32
[model]
family = "power"
gamma = 2.0
beta = 1.0
a = { constant = 1.0, modes = [{ k = [1], cos = 0.1 }] }
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.model.family, Family::Power { gamma: 2.0, beta: 1.0 });
        let g = c.grid().unwrap();
        let a = c.model.a.realize(g).unwrap();
        assert!((a.values()[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn malformed_schedule_rejected() {
        let bad = TRIVIAL.replace("[0.1, 0.01, 0.001]", "[0.1, 0.2, 0.001]");
        let c = ExperimentConfig::from_toml(&bad).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml("kind = 3").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_toml(TRIVIAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }
}
