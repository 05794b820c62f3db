//! JSON run configuration. Unknown keys are rejected at every level.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ChainModel, DiffusionModel, FunctionClass, FunctionOnX};
use crate::lab::{self, ExperimentSpec, SemigroupMode, SlopeBand, TestFunction, Theorem};
use crate::measures::{make_sequence, Atom, SequenceKind, SequenceParams, SmoothMeasure};
use crate::model::Model;
use crate::pathsim::McConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Chain {
        generator: Vec<Vec<f64>>,
        reference: Vec<f64>,
    },
    Diffusion {
        #[serde(default = "default_grid")]
        grid: usize,
    },
}

fn default_grid() -> usize {
    DiffusionModel::DEFAULT_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensitySpec {
    Constant(f64),
    /// Values at the grid nodes.
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// Chain masses per state.
    Masses(Vec<f64>),
    /// `m` on the chain, Lebesgue on the interval.
    Reference,
    /// Atoms `[x, w]` plus an optional density on the interval.
    Interval {
        #[serde(default)]
        atoms: Vec<[f64; 2]>,
        #[serde(default)]
        density: Option<DensitySpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// Chain state values, or grid node values on the interval.
    Values(Vec<f64>),
    /// Bounded constant.
    Constant(f64),
    /// `sin(k pi x)`.
    Sine {
        k: u32,
    },
    /// `x (1 - x)`.
    Parabola,
    Hat {
        center: f64,
        half_width: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremSpec {
    Potential,
    Integrated,
    Semigroup,
    Hitting,
    Approximation,
    Evolution,
    Heat,
    Fdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    /// Name of the limit measure.
    pub limit: String,
    #[serde(default)]
    pub params: SequenceParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub theorem: TheoremSpec,
    #[serde(default)]
    pub mode: Option<SemigroupMode>,
    pub sequence: SequenceSpec,
    /// Names of test functions.
    pub tests: Vec<String>,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub fdd_times: Vec<f64>,
    #[serde(default)]
    pub fdd_functions: Vec<String>,
    #[serde(default)]
    pub monte_carlo: bool,
    #[serde(default)]
    pub slope_band: Option<SlopeBand>,
}

fn default_n_min() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Semigroup,
    Resolvent,
    Apotential,
    Fdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCase {
    pub quantity: Quantity,
    pub measure: String,
    /// Target function (semigroup, resolvent, apotential).
    #[serde(default)]
    pub function: Option<String>,
    /// Starting state, 0-based.
    #[serde(default)]
    pub state: usize,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Initial measure for fdd.
    #[serde(default)]
    pub init: Option<String>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub functions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    pub cases: Vec<SimCase>,
}

fn default_paths() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Measures to check; all named measures when empty.
    #[serde(default)]
    pub measures: Vec<String>,
    #[serde(default = "default_check_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_cmp_trials")]
    pub cmp_trials: usize,
    /// Additional random measures for the chain checks.
    #[serde(default)]
    pub random_measures: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            measures: Vec::new(),
            alphas: default_check_alphas(),
            cmp_trials: default_cmp_trials(),
            random_measures: 0,
        }
    }
}

fn default_check_alphas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 10.0]
}

fn default_cmp_trials() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_t_points")]
    pub t_points: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            t_max: default_t_max(),
            t_points: default_t_points(),
            alphas: default_alphas(),
            n_max: default_n_max(),
        }
    }
}

fn default_t_max() -> f64 {
    lab::DEFAULT_T_MAX
}

fn default_t_points() -> usize {
    lab::DEFAULT_T_POINTS
}

fn default_alphas() -> Vec<f64> {
    vec![1.0, 2.0, 5.0]
}

fn default_n_max() -> usize {
    64
}

fn default_workers() -> usize {
    4
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendSpec,
    #[serde(default)]
    pub measures: BTreeMap<String, MeasureSpec>,
    #[serde(default)]
    pub functions: BTreeMap<String, FunctionSpec>,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

/// Failures before any computation starts; exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Model(#[from] Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Structural validation: the model builds, every name resolves, every
    /// measure and function fits the backend.
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let model = self.model()?;
        for name in self.measures.keys() {
            self.measure(&model, name)?;
        }
        for name in self.functions.keys() {
            self.function(&model, name)?;
        }
        for m in &self.check.measures {
            self.measure(&model, m)?;
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be positive".into()));
        }
        lab::time_grid(self.grids.t_max, self.grids.t_points)?;
        if self.grids.alphas.is_empty() || self.grids.alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(ConfigError::Invalid(
                "alpha grid must be nonempty and positive".into(),
            ));
        }
        if self.check.alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(ConfigError::Invalid(
                "check alphas must be nonnegative".into(),
            ));
        }
        for e in &self.experiments {
            self.experiment(&model, e)?;
        }
        if let Some(sim) = &self.simulate {
            if !matches!(model, Model::Chain(_)) {
                return Err(ConfigError::Invalid(
                    "simulation is available on the chain backend only".into(),
                ));
            }
            for c in &sim.cases {
                self.sim_case_names(c)?;
                if c.state >= model.dim() {
                    return Err(ConfigError::Invalid(format!(
                        "state {} out of range",
                        c.state
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        match &self.backend {
            BackendSpec::Chain {
                generator,
                reference,
            } => Ok(Model::Chain(ChainModel::from_rows(generator, reference)?)),
            BackendSpec::Diffusion { grid } => Ok(Model::Diffusion(DiffusionModel::new(*grid)?)),
        }
    }

    pub fn measure(
        &self,
        model: &Model,
        name: &str,
    ) -> std::result::Result<SmoothMeasure, ConfigError> {
        let spec = self
            .measures
            .get(name)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown measure {name:?}")))?;
        Ok(build_measure(model, spec)?)
    }

    pub fn function(
        &self,
        model: &Model,
        name: &str,
    ) -> std::result::Result<FunctionOnX, ConfigError> {
        let spec = self
            .functions
            .get(name)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown function {name:?}")))?;
        Ok(build_function(model, spec)?)
    }

    fn sim_case_names(&self, c: &SimCase) -> std::result::Result<(), ConfigError> {
        if !self.measures.contains_key(&c.measure) {
            return Err(ConfigError::Invalid(format!(
                "unknown measure {:?}",
                c.measure
            )));
        }
        match c.quantity {
            Quantity::Fdd => {
                let init = c.init.as_ref().unwrap_or(&c.measure);
                if !self.measures.contains_key(init) {
                    return Err(ConfigError::Invalid(format!("unknown measure {init:?}")));
                }
                if c.times.is_empty() || c.functions.len() != c.times.len() + 1 {
                    return Err(ConfigError::Invalid(
                        "fdd needs k >= 1 times and k + 1 functions".into(),
                    ));
                }
                for f in &c.functions {
                    if !self.functions.contains_key(f) {
                        return Err(ConfigError::Invalid(format!("unknown function {f:?}")));
                    }
                }
            }
            _ => match &c.function {
                Some(f) if self.functions.contains_key(f) => {}
                Some(f) => return Err(ConfigError::Invalid(format!("unknown function {f:?}"))),
                None => {
                    return Err(ConfigError::Invalid(
                        "simulation case needs a function".into(),
                    ))
                }
            },
        }
        Ok(())
    }

    pub fn mc_config(&self, paths: usize) -> McConfig {
        McConfig {
            paths,
            seed: self.seed,
            workers: self.workers,
        }
    }

    /// Resolve an experiment into a lab specification.
    pub fn experiment(
        &self,
        model: &Model,
        e: &ExperimentConfig,
    ) -> std::result::Result<ExperimentSpec, ConfigError> {
        let limit = self.measure(model, &e.sequence.limit)?;
        let sequence = make_sequence(e.sequence.kind, e.sequence.params, limit)?;
        let tests = e
            .tests
            .iter()
            .map(|t| Ok(TestFunction::new(t.clone(), self.function(model, t)?)))
            .collect::<std::result::Result<Vec<_>, ConfigError>>()?;
        let n_max = e.n_max.unwrap_or(self.grids.n_max);
        if e.n_min == 0 || n_max <= e.n_min {
            return Err(ConfigError::Invalid(format!(
                "experiment {:?}: need 1 <= n_min < n_max, got {}..{}",
                e.name, e.n_min, n_max
            )));
        }
        if e.mode.is_some() != (e.theorem == TheoremSpec::Semigroup) {
            return Err(ConfigError::Invalid(format!(
                "experiment {:?}: mode is required for, and only for, the semigroup theorem",
                e.name
            )));
        }
        let theorem = match e.theorem {
            TheoremSpec::Potential => Theorem::Potential,
            TheoremSpec::Integrated => Theorem::Integrated,
            TheoremSpec::Semigroup => Theorem::Semigroup(e.mode.expect("checked")),
            TheoremSpec::Hitting => Theorem::Hitting,
            TheoremSpec::Approximation => Theorem::Approximation,
            TheoremSpec::Evolution => Theorem::Evolution {
                perturbation: e.perturbation,
            },
            TheoremSpec::Heat => Theorem::Heat {
                perturbation: e.perturbation,
            },
            TheoremSpec::Fdd => {
                if e.fdd_times.is_empty() || e.fdd_functions.len() != e.fdd_times.len() + 1 {
                    return Err(ConfigError::Invalid(format!(
                        "experiment {:?}: fdd needs k >= 1 times and k + 1 functions",
                        e.name
                    )));
                }
                Theorem::Fdd {
                    times: e.fdd_times.clone(),
                    functions: e
                        .fdd_functions
                        .iter()
                        .map(|f| self.function(model, f))
                        .collect::<std::result::Result<_, _>>()?,
                }
            }
        };
        let mc = if e.monte_carlo {
            Some(self.mc_config(self.simulate.as_ref().map_or(default_paths(), |s| s.paths)))
        } else {
            None
        };
        Ok(ExperimentSpec {
            name: e.name.clone(),
            model: model.clone(),
            sequence,
            tests,
            alphas: self.grids.alphas.clone(),
            times: lab::time_grid(self.grids.t_max, self.grids.t_points)?,
            ns: (e.n_min..=n_max).collect(),
            theorem,
            mc,
            slope_band: e.slope_band.clone(),
        })
    }
}

pub fn build_measure(model: &Model, spec: &MeasureSpec) -> Result<SmoothMeasure> {
    match (model, spec) {
        (_, MeasureSpec::Reference) => Ok(model.reference_measure()),
        (Model::Chain(c), MeasureSpec::Masses(m)) => {
            if m.len() != c.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} masses for {} states",
                    m.len(),
                    c.len()
                )));
            }
            SmoothMeasure::chain(DVector::from_column_slice(m))
        }
        (Model::Diffusion(d), MeasureSpec::Interval { atoms, density }) => {
            let atoms = atoms.iter().map(|[x, w]| Atom { x: *x, w: *w }).collect();
            let density = match density {
                None => None,
                Some(DensitySpec::Constant(c)) => Some(DVector::from_element(d.grid_size(), *c)),
                Some(DensitySpec::Values(v)) => {
                    if v.len() != d.grid_size() {
                        return Err(Error::DimensionMismatch(format!(
                            "density of length {} on a grid of {}",
                            v.len(),
                            d.grid_size()
                        )));
                    }
                    Some(DVector::from_column_slice(v))
                }
            };
            SmoothMeasure::diffusion(atoms, density)
        }
        _ => Err(Error::BackendMismatch(
            "measure does not fit the backend".into(),
        )),
    }
}

pub fn build_function(model: &Model, spec: &FunctionSpec) -> Result<FunctionOnX> {
    match (model, spec) {
        (_, FunctionSpec::Constant(c)) => Ok(model.constant(*c)),
        (Model::Chain(_), FunctionSpec::Values(v)) => {
            model.function(DVector::from_column_slice(v), FunctionClass::C0)
        }
        (Model::Diffusion(_), FunctionSpec::Values(v)) => {
            model.function(DVector::from_column_slice(v), FunctionClass::C0)
        }
        (Model::Diffusion(d), FunctionSpec::Sine { k }) => {
            let k = *k as f64;
            Ok(d.sample(|x| (k * std::f64::consts::PI * x).sin(), FunctionClass::C0))
        }
        (Model::Diffusion(d), FunctionSpec::Parabola) => {
            Ok(d.sample(|x| x * (1.0 - x), FunctionClass::C0))
        }
        (Model::Diffusion(d), FunctionSpec::Hat { center, half_width }) => {
            let (c, w) = (*center, *half_width);
            if !(w > 0.0 && c - w >= 0.0 && c + w <= 1.0) {
                return Err(Error::BadParameters(format!(
                    "hat at {c} of half-width {w} leaves [0, 1]"
                )));
            }
            let mut knots = vec![(c, 1.0)];
            knots.extend(
                [(c - w, 0.0), (c + w, 0.0)]
                    .into_iter()
                    .filter(|k| k.0 > 0.0 && k.0 < 1.0),
            );
            Ok(
                d.sample(|x| (1.0 - (x - c).abs() / w).max(0.0), FunctionClass::C0)
                    .with_knots(knots),
            )
        }
        _ => Err(Error::BackendMismatch(
            "function shape needs the interval backend".into(),
        )),
    }
}

/// Random chain masses, each charging at least one state.
pub fn random_masses(n: usize, seed: u64, count: usize) -> Vec<DVector<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v = DVector::from_fn(n, |_, _| {
                if rng.random_bool(0.6) {
                    rng.random_range(0.1..3.0)
                } else {
                    0.0
                }
            });
            if v.iter().any(|x| *x > 0.0) {
                break v;
            }
        })
        .collect()
}
