//! Declarative experiment configuration, read from TOML.
//!
//! Every section is optional and falls back to the defaults below. Unknown
//! keys are rejected at every level.

use std::path::{Path, PathBuf};

use nqsmp::bounds::RSource;
use nqsmp::hamiltonians::Model;
use nqsmp::vmc::{GradientPrecision, Initialization};
use nqsmp::{Boundary, FloatFormat, LatticeSpec, RoundingMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Bounds,
    AcceptanceSweep,
    DeltaDist,
    SizeScaling,
    VmcTrain,
    SrStability,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Bounds => "bounds",
            Experiment::AcceptanceSweep => "acceptance-sweep",
            Experiment::DeltaDist => "delta-dist",
            Experiment::SizeScaling => "size-scaling",
            Experiment::VmcTrain => "vmc-train",
            Experiment::SrStability => "sr-stability",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub ansatz: AnsatzSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub precision: PrecisionSpec,
    #[serde(default)]
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub training: TrainingSpec,
    #[serde(default)]
    pub scaling: ScalingSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tfim,
    Heisenberg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Chain,
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub geometry: GeometryKind,
    pub n_sites: usize,
    pub coupling: f64,
    /// Transverse field; ignored by the Heisenberg model.
    pub field: f64,
    /// Open for chains and periodic for square lattices when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Tfim,
            geometry: GeometryKind::Chain,
            n_sites: 10,
            coupling: 1.0,
            field: 1.0,
            boundary: None,
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        self.build_with(self.kind, self.n_sites, self.field)
    }

    /// The same lattice family and coupling with another kind, size or field.
    pub fn build_with(&self, kind: ModelKind, n_sites: usize, field: f64) -> Result<Model> {
        let lattice = match self.geometry {
            GeometryKind::Chain => LatticeSpec::chain(n_sites, self.boundary.unwrap_or(Boundary::Open))?,
            GeometryKind::Square => {
                let side = (n_sites as f64).sqrt().round() as usize;
                if side * side != n_sites {
                    return Err(CliError::Config(format!("square lattice needs a square site count, got {n_sites}")));
                }
                LatticeSpec::square(side, self.boundary.unwrap_or(Boundary::Periodic))?
            }
        };
        Ok(match kind {
            ModelKind::Tfim => Model::tfim(lattice, self.coupling, field)?,
            ModelKind::Heisenberg => Model::heisenberg(lattice, self.coupling)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzSource {
    /// Complex Gaussian parameters with `random_scale`.
    Random,
    /// Ground-state fit by exact-expectation SR.
    Trained,
    /// Parameters loaded from `path`.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzSpec {
    /// Hidden units per visible unit.
    pub alpha: f64,
    pub source: AnsatzSource,
    pub random_scale: f64,
    /// Parameter file; `{n}` and `{h}` expand to the site count and field.
    pub path: Option<String>,
    pub train_steps: usize,
    pub train_eta: f64,
    pub train_lambda: f64,
    pub init_scale: f64,
    pub initialization: Initialization,
}

impl Default for AnsatzSpec {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            source: AnsatzSource::Trained,
            random_scale: 0.05,
            path: None,
            train_steps: 300,
            train_eta: 0.05,
            train_lambda: 1e-3,
            init_scale: 0.01,
            initialization: Initialization::SignRule,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub n_samples: usize,
    pub samples_per_chain: usize,
    /// Defaults to `10 N` sweeps.
    pub burn_in_sweeps: Option<usize>,
    pub thin_sweeps: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self { n_samples: 1 << 12, samples_per_chain: 4, burn_in_sweeps: None, thin_sweeps: 1 }
    }
}

impl SamplerSpec {
    pub fn n_chains(&self) -> usize {
        self.n_samples / self.samples_per_chain
    }

    pub fn burn_in(&self, n_sites: usize) -> usize {
        self.burn_in_sweeps.unwrap_or(10 * n_sites)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecisionSpec {
    pub formats: Vec<FloatFormat>,
    pub rounding: RoundingMode,
}

impl Default for PrecisionSpec {
    fn default() -> Self {
        Self { formats: vec![FloatFormat::F32, FloatFormat::F16, FloatFormat::BF16], rounding: RoundingMode::PerOperation }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Site-averaged transverse magnetization.
    SigmaX,
    /// Projector onto configurations with an even number of set bits.
    EvenProjector,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::SigmaX => "sigma_x",
            Observable::EvenProjector => "even_projector",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    pub sigma_grid: Vec<f64>,
    /// `"zero"` (the default), `"spectral"` or a number in `[0, 1]`.
    #[serde(with = "r_source")]
    pub r_source: RSource,
    pub observables: Vec<Observable>,
    /// Independent noise fields per grid point.
    pub realizations: usize,
    pub n_samples: usize,
    /// Points per axis of the acceptance-difference surface.
    pub grid_points: usize,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            sigma_grid: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0],
            r_source: RSource::Zero,
            observables: vec![Observable::SigmaX, Observable::EvenProjector],
            realizations: 1,
            n_samples: 1 << 18,
            grid_points: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub fields: Vec<f64>,
    pub sigma_grid: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { fields: vec![0.5, 1.0, 2.0], sigma_grid: (0..=20).map(|k| 0.25 * k as f64).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Markov,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    None,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub n_steps: usize,
    pub eta: f64,
    pub lambda: f64,
    pub sampling: SamplingKind,
    pub reference: Reference,
    pub log_every: usize,
    /// Parameter checkpoint interval in steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub record_timings: bool,
    /// Reduced-precision gradient protocols for `sr-stability`.
    pub protocols: Vec<GradientPrecision>,
    pub lambdas: Vec<f64>,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            n_steps: 500,
            eta: 0.01,
            lambda: 1e-3,
            sampling: SamplingKind::Markov,
            reference: Reference::Exact,
            log_every: 1,
            checkpoint_every: 0,
            record_timings: false,
            protocols: vec![GradientPrecision::LogDerivatives, GradientPrecision::LocalEnergies, GradientPrecision::Forces],
            lambdas: vec![1e-3, 1e-1],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingModel {
    Tfim,
    Heisenberg,
    /// Random RBM, energies measured against the TFIM.
    Random,
}

impl ScalingModel {
    pub fn name(self) -> &'static str {
        match self {
            ScalingModel::Tfim => "tfim",
            ScalingModel::Heisenberg => "heisenberg",
            ScalingModel::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSpec {
    pub models: Vec<ScalingModel>,
    pub sizes: Vec<usize>,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self { models: vec![ScalingModel::Tfim, ScalingModel::Heisenberg, ScalingModel::Random], sizes: vec![4, 6, 8, 10, 12] }
    }
}

/// Command-line replacements for individual config fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub n_sites: Option<usize>,
    pub field: Option<f64>,
    pub n_samples: Option<usize>,
    pub steps: Option<usize>,
    pub formats: Option<Vec<FloatFormat>>,
    pub sigma_grid: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 0,
            output_dir: default_output_dir(),
            model: ModelSpec::default(),
            ansatz: AnsatzSpec::default(),
            sampler: SamplerSpec::default(),
            precision: PrecisionSpec::default(),
            bounds: BoundsSpec::default(),
            sweep: SweepSpec::default(),
            training: TrainingSpec::default(),
            scaling: ScalingSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Loads `path` if given, otherwise starts from defaults; then applies
    /// overrides and validates. The file's experiment must match `expected`.
    pub fn resolve(path: Option<&Path>, expected: Experiment, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => Self::load(p)?,
            None => Self::new(expected),
        };
        if config.experiment != expected {
            return Err(CliError::Config(format!(
                "config is for `{}`, not `{}`",
                config.experiment.name(),
                expected.name()
            )));
        }
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.n_sites {
            self.model.n_sites = v;
        }
        if let Some(v) = o.field {
            self.model.field = v;
        }
        if let Some(v) = o.n_samples {
            self.sampler.n_samples = v;
            self.bounds.n_samples = v;
        }
        if let Some(v) = o.steps {
            self.training.n_steps = v;
        }
        if let Some(v) = &o.formats {
            self.precision.formats = v.clone();
        }
        if let Some(v) = &o.sigma_grid {
            match self.experiment {
                Experiment::AcceptanceSweep => self.sweep.sigma_grid = v.clone(),
                _ => self.bounds.sigma_grid = v.clone(),
            }
        }
        if let Some(v) = o.lambda {
            self.training.lambda = v;
        }
        if let Some(v) = o.eta {
            self.training.eta = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let s = &self.sampler;
        if s.n_samples == 0 || s.samples_per_chain == 0 || s.n_samples % s.samples_per_chain != 0 {
            return bad("sampler.n_samples must be a positive multiple of sampler.samples_per_chain");
        }
        if s.thin_sweeps == 0 {
            return bad("sampler.thin_sweeps must be positive");
        }
        if !(self.ansatz.alpha > 0.0) || !(self.ansatz.random_scale >= 0.0) || !(self.ansatz.init_scale >= 0.0) {
            return bad("ansatz.alpha must be positive and scales non-negative");
        }
        if self.ansatz.source == AnsatzSource::File && self.ansatz.path.is_none() {
            return bad("ansatz.source = \"file\" needs ansatz.path");
        }
        if !(self.ansatz.train_eta > 0.0) || !(self.ansatz.train_lambda >= 0.0) {
            return bad("ansatz.train_eta must be positive and ansatz.train_lambda non-negative");
        }
        let grids = [&self.bounds.sigma_grid, &self.sweep.sigma_grid];
        if grids.iter().any(|g| g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v >= 0.0))) {
            return bad("sigma grids must be non-empty and non-negative");
        }
        if let RSource::User(r) = self.bounds.r_source {
            if !(0.0..=1.0).contains(&r) {
                return bad("bounds.r_source value must lie in [0, 1]");
            }
        }
        if self.bounds.realizations == 0 || self.bounds.n_samples < 2 || self.bounds.grid_points < 2 {
            return bad("bounds.realizations, bounds.n_samples and bounds.grid_points are too small");
        }
        if self.precision.formats.is_empty() {
            return bad("precision.formats must not be empty");
        }
        let t = &self.training;
        if !(t.eta > 0.0) || !(t.lambda >= 0.0) || t.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return bad("training.eta must be positive and lambdas non-negative");
        }
        if t.log_every == 0 {
            return bad("training.log_every must be positive");
        }
        if self.sweep.fields.is_empty() || self.scaling.sizes.is_empty() || self.scaling.models.is_empty() {
            return bad("sweep.fields, scaling.sizes and scaling.models must not be empty");
        }
        self.model.build()?;
        Ok(())
    }
}

mod r_source {
    use nqsmp::bounds::RSource;
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Value(f64),
        Name(String),
    }

    pub fn serialize<S: Serializer>(r: &RSource, s: S) -> Result<S::Ok, S::Error> {
        match r {
            RSource::User(v) => Repr::Value(*v),
            other => Repr::Name(other.name().to_string()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RSource, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Value(v) => Ok(RSource::User(v)),
            Repr::Name(n) => match n.as_str() {
                "spectral" => Ok(RSource::Spectral),
                "zero" => Ok(RSource::Zero),
                _ => Err(de::Error::custom(format!("unknown r_source `{n}`"))),
            },
        }
    }
}
