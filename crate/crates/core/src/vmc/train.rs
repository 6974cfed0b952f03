//! Training loop with a double-precision master copy and a reduced-precision
//! copy used only for sampling.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    forces, low_precision_forces, low_precision_local_energy, low_precision_log_derivatives, local_energy, mc_error,
    s_matrix, sr_step, LocalEnergySample,
};
use crate::ansatz::{grad_log_psi, LookupAmplitude, RbmParameters, RoundedRbm};
use crate::bounds::{normalize_log_weights, pinsker_tv_bound, theorem3_gaussian_bound};
use crate::error::{Error, Result};
use crate::hamiltonians::Model;
use crate::lattice::SpinConfiguration;
use crate::precision::{FloatFormat, RoundingMode};
use crate::rng::{derive_seed, substream};
use crate::sampler::{expected_acceptance, proposal_states, run_chains, ChainConfig, LogProb, Proposal, TableLogProb};

/// Largest system whose amplitudes are tabulated once per step instead of
/// evaluated per proposal.
const TABULATE_MAX: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingMode {
    /// Persistent Metropolis–Hastings chains.
    Markov {
        n_samples: usize,
        n_chains: usize,
        /// Sweeps discarded before the first step.
        burn_in_sweeps: usize,
        /// Sweeps discarded at the start of every later step.
        rethermalize_sweeps: usize,
        thin_sweeps: usize,
    },
    /// Exact expectations over every state reachable by the proposal.
    Exact,
}

impl SamplingMode {
    /// Four samples per chain, `10 N` burn-in sweeps.
    pub fn markov(n_samples: usize, n_sites: usize) -> Self {
        SamplingMode::Markov {
            n_samples,
            n_chains: (n_samples / 4).max(1),
            burn_in_sweeps: 10 * n_sites,
            rethermalize_sweeps: 1,
            thin_sweeps: 1,
        }
    }
}

/// Which gradient ingredients are computed in `gradient_format`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientPrecision {
    #[default]
    None,
    LogDerivatives,
    LocalEnergies,
    Forces,
}

impl GradientPrecision {
    pub fn name(self) -> &'static str {
        match self {
            GradientPrecision::None => "none",
            GradientPrecision::LogDerivatives => "log_derivatives",
            GradientPrecision::LocalEnergies => "local_energies",
            GradientPrecision::Forces => "forces",
        }
    }
}

/// How the starting parameters are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    /// Independent complex Gaussian entries.
    #[default]
    Complex,
    /// Real Gaussian entries plus the model's sign rule on the visible
    /// biases (see [`Model::sign_sites`]).
    SignRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: Model,
    pub n_hidden: usize,
    /// Standard deviation of the real and imaginary parts at initialization.
    pub init_scale: f64,
    #[serde(default)]
    pub initialization: Initialization,
    pub proposal: Proposal,
    pub sampling: SamplingMode,
    pub eta: f64,
    pub lambda: f64,
    pub n_steps: usize,
    pub sampling_format: FloatFormat,
    pub rounding: RoundingMode,
    pub gradient_precision: GradientPrecision,
    pub gradient_format: FloatFormat,
    pub seed: u64,
    pub log_every: usize,
    pub record_timings: bool,
    pub record_forces: bool,
    pub reference_energy: Option<f64>,
}

impl TrainConfig {
    pub fn new(model: Model, n_hidden: usize) -> Self {
        let n = model.n_sites();
        let proposal = match model {
            Model::Tfim { .. } => Proposal::SingleFlip,
            Model::Heisenberg { .. } => Proposal::Exchange { hamming_weight: n as u32 / 2 },
        };
        Self {
            model,
            n_hidden,
            init_scale: 0.01,
            initialization: Initialization::Complex,
            proposal,
            sampling: SamplingMode::markov(4096, n),
            eta: 0.01,
            lambda: 1e-3,
            n_steps: 500,
            sampling_format: FloatFormat::F64,
            rounding: RoundingMode::PerOperation,
            gradient_precision: GradientPrecision::None,
            gradient_format: FloatFormat::F64,
            seed: 0,
            log_every: 1,
            record_timings: false,
            record_forces: false,
            reference_energy: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.n_sites();
        self.proposal.validate(n)?;
        if self.n_hidden == 0 || self.log_every == 0 {
            return Err(Error::Domain("n_hidden and log_every must be positive".into()));
        }
        if !(self.eta > 0.0) || !(self.lambda >= 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::Domain("need eta > 0, lambda >= 0, init_scale >= 0".into()));
        }
        match self.sampling {
            SamplingMode::Markov { n_samples, n_chains, thin_sweeps, .. } => {
                if n_chains == 0 || thin_sweeps == 0 || n_samples == 0 || n_samples % n_chains != 0 {
                    return Err(Error::Domain(format!(
                        "{n_samples} samples must split evenly over {n_chains} chains"
                    )));
                }
            }
            SamplingMode::Exact => crate::lattice::check_enumerable(n)?,
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub sample_seconds: f64,
    pub estimate_seconds: f64,
    pub solve_seconds: f64,
}

/// Diagnostics of one step, measured before the parameter update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub energy: f64,
    /// Chain-blocked `sqrt(Var / n)` of the energy estimate.
    pub mc_error: f64,
    pub variance: f64,
    pub acceptance: f64,
    /// Standard deviation of the sampling-precision log-density error over
    /// the distinct sampled configurations.
    pub sigma_hat: f64,
    pub bound_pinsker: f64,
    /// Centered Gaussian bound with `r = 0`.
    pub bound_theorem3: f64,
    pub kappa: f64,
    pub grad_norm: f64,
    /// `2 A min(pinsker, theorem3)` with `A` the largest per-sample force
    /// contribution.
    pub grad_bound: f64,
    /// Largest per-parameter Monte Carlo standard error of the force.
    pub grad_mc_band: f64,
    pub n_unique: usize,
    pub relative_error: Option<f64>,
    pub timings: Option<PhaseTimings>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<StepRecord>,
    pub final_params: RbmParameters,
    pub force_history: Vec<Vec<Complex64>>,
}

impl TrainingLog {
    pub fn columns(&self) -> Vec<&'static str> {
        let mut cols = vec![
            "step",
            "energy",
            "mc_error",
            "variance",
            "acceptance",
            "sigma_hat",
            "bound_pinsker",
            "bound_theorem3",
            "kappa",
            "grad_norm",
            "grad_bound",
            "grad_mc_band",
            "n_unique",
        ];
        let first = self.records.first();
        if first.is_some_and(|r| r.relative_error.is_some()) {
            cols.push("relative_error");
        }
        if first.is_some_and(|r| r.timings.is_some()) {
            cols.extend(["t_sample", "t_estimate", "t_solve"]);
        }
        cols
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", self.columns().join(","))?;
        for r in &self.records {
            write!(out, "{}", r.step)?;
            for v in [
                r.energy,
                r.mc_error,
                r.variance,
                r.acceptance,
                r.sigma_hat,
                r.bound_pinsker,
                r.bound_theorem3,
                r.kappa,
                r.grad_norm,
                r.grad_bound,
                r.grad_mc_band,
            ] {
                write!(out, ",{v:.14e}")?;
            }
            write!(out, ",{}", r.n_unique)?;
            if let Some(e) = r.relative_error {
                write!(out, ",{e:.14e}")?;
            }
            if let Some(t) = r.timings {
                write!(out, ",{:.6e},{:.6e},{:.6e}", t.sample_seconds, t.estimate_seconds, t.solve_seconds)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Sampled configurations reduced to distinct states with weights.
struct Batch {
    unique: Vec<SpinConfiguration>,
    weights: Vec<f64>,
    /// Sampling-precision log-probability of each distinct state.
    sampled_log_prob: Vec<f64>,
    /// Per chain, the distinct-state index of each sample.
    chains: Vec<Vec<u32>>,
    n_samples: usize,
    acceptance: f64,
}

pub struct Trainer {
    config: TrainConfig,
    params: RbmParameters,
    sampler_copy: RoundedRbm,
    chains: Option<Vec<SpinConfiguration>>,
    step: usize,
    force_history: Vec<Vec<Complex64>>,
}

enum Source<'a> {
    Table(&'a TableLogProb),
    Direct(&'a RbmParameters),
    Rounded(&'a RoundedRbm),
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        let n = config.model.n_sites();
        let mut rng = substream(config.seed, "init", 0);
        let params = match config.initialization {
            Initialization::Complex => RbmParameters::random(n, config.n_hidden, config.init_scale, &mut rng)?,
            Initialization::SignRule => {
                let mut p = RbmParameters::random_real(n, config.n_hidden, config.init_scale, &mut rng)?;
                p.add_sign_phases(&config.model.sign_sites())?;
                p
            }
        };
        Self::with_params(config, params)
    }

    pub fn with_params(config: TrainConfig, params: RbmParameters) -> Result<Self> {
        config.validate()?;
        if params.n_visible() != config.model.n_sites() || params.n_hidden() != config.n_hidden {
            return Err(Error::SizeMismatch { expected: config.model.n_sites(), found: params.n_visible() });
        }
        let sampler_copy = RoundedRbm::new(&params, config.sampling_format, config.rounding);
        Ok(Self { config, params, sampler_copy, chains: None, step: 0, force_history: Vec::new() })
    }

    pub fn params(&self) -> &RbmParameters {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn force_history(&self) -> &[Vec<Complex64>] {
        &self.force_history
    }

    /// One sample–estimate–update cycle.
    pub fn step(&mut self) -> Result<StepRecord> {
        let step = self.step;
        let record = self.step_inner().map_err(|e| Error::TrainStep { step, source: Box::new(e) })?;
        self.step += 1;
        Ok(record)
    }

    fn sample(&mut self, source: Source<'_>) -> Result<Batch> {
        match source {
            Source::Table(t) => self.sample_from(t),
            Source::Direct(p) => self.sample_from(p),
            Source::Rounded(r) => self.sample_from(r),
        }
    }

    fn sample_from(&mut self, lp: &impl LogProb) -> Result<Batch> {
        let cfg = &self.config;
        let n = cfg.model.n_sites();
        match cfg.sampling {
            SamplingMode::Exact => {
                let unique = proposal_states(cfg.proposal, n)?;
                let sampled_log_prob: Vec<f64> = unique.iter().map(|&x| lp.log_prob(x)).collect::<Result<_>>()?;
                let weights = normalize_log_weights(&sampled_log_prob)?;
                let acceptance = expected_acceptance(&unique, &sampled_log_prob, cfg.proposal)?;
                Ok(Batch { unique, weights, sampled_log_prob, chains: Vec::new(), n_samples: 0, acceptance })
            }
            SamplingMode::Markov { n_samples, n_chains, burn_in_sweeps, rethermalize_sweeps, thin_sweeps } => {
                let chain_cfg = ChainConfig {
                    n_chains,
                    n_samples,
                    burn_in_sweeps: if self.chains.is_some() { rethermalize_sweeps } else { burn_in_sweeps },
                    thin_sweeps,
                    seed: derive_seed(cfg.seed, "sample", self.step as u64),
                };
                let run = run_chains(&chain_cfg, lp, cfg.proposal, self.chains.as_deref())?;
                let mut index: HashMap<u64, u32> = HashMap::new();
                let mut unique = Vec::new();
                let mut counts: Vec<f64> = Vec::new();
                let chains = (0..run.n_chains())
                    .map(|c| {
                        run.chain(c)
                            .iter()
                            .map(|&x| {
                                let k = *index.entry(x.encoding()).or_insert_with(|| {
                                    unique.push(x);
                                    counts.push(0.0);
                                    (unique.len() - 1) as u32
                                });
                                counts[k as usize] += 1.0;
                                k
                            })
                            .collect()
                    })
                    .collect();
                let weights = counts.iter().map(|c| c / n_samples as f64).collect();
                let sampled_log_prob = unique.iter().map(|&x| lp.log_prob(x)).collect::<Result<_>>()?;
                self.chains = Some(run.final_states.clone());
                Ok(Batch { unique, weights, sampled_log_prob, chains, n_samples, acceptance: run.acceptance })
            }
        }
    }

    fn step_inner(&mut self) -> Result<StepRecord> {
        let t_start = Instant::now();
        let model = self.config.model.clone();
        let n = model.n_sites();
        let fmt = self.config.sampling_format;
        let tabulate = n <= TABULATE_MAX;
        let exact_table = if tabulate { Some(LookupAmplitude::tabulate(&self.params)?) } else { None };

        // Sampling with the downcast copy.
        self.sampler_copy.set_params(&self.params);
        let batch = match (&exact_table, fmt.is_f64()) {
            (Some(t), true) => {
                let lp = TableLogProb::new(n, t.values().iter().map(|v| 2.0 * v.re).collect())?;
                self.sample(Source::Table(&lp))?
            }
            (Some(_), false) => {
                let lp = TableLogProb::tabulate(&self.sampler_copy)?;
                self.sample(Source::Table(&lp))?
            }
            (None, true) => {
                let params = self.params.clone();
                self.sample(Source::Direct(&params))?
            }
            (None, false) => {
                let copy = self.sampler_copy.clone();
                self.sample(Source::Rounded(&copy))?
            }
        };
        let t_sampled = Instant::now();

        // Double-precision estimates on the distinct states.
        let samples: Vec<LocalEnergySample> = {
            let params = &self.params;
            let amp: &(dyn Fn(SpinConfiguration) -> Result<Complex64> + Sync) = &|x| match &exact_table {
                Some(t) => local_energy(&model, t, x),
                None => local_energy(&model, params, x),
            };
            batch
                .unique
                .par_iter()
                .zip(&batch.weights)
                .map(|(&x, &w)| {
                    Ok(LocalEnergySample { x, epsilon: amp(x)?, o_vector: grad_log_psi(params, x)?, weight: w })
                })
                .collect::<Result<_>>()?
        };
        let exact_lp: Vec<f64> = match &exact_table {
            Some(t) => batch.unique.iter().map(|x| 2.0 * t.values()[x.encoding() as usize].re).collect(),
            None => batch.unique.iter().map(|&x| 2.0 * self.params.log_psi_f64(x).re).collect(),
        };
        let force_samples = self.gradient_samples(&model, &samples, tabulate)?;
        let f = match self.config.gradient_precision {
            GradientPrecision::Forces => low_precision_forces(&force_samples, self.config.gradient_format)?,
            _ => forces(&force_samples)?,
        };
        if f.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("force vector".into()));
        }
        let s = s_matrix(&samples)?;

        let total: f64 = batch.weights.iter().sum();
        let e_mean: Complex64 = samples.iter().map(|s| s.epsilon * (s.weight / total)).sum();
        let variance = samples.iter().map(|s| s.weight / total * (s.epsilon - e_mean).norm_sqr()).sum();
        let mc = match self.config.sampling {
            SamplingMode::Exact => 0.0,
            SamplingMode::Markov { .. } => {
                let means: Vec<f64> = batch
                    .chains
                    .iter()
                    .map(|c| c.iter().map(|&k| samples[k as usize].epsilon.re).sum::<f64>() / c.len() as f64)
                    .collect();
                if means.len() >= 2 {
                    mc_error(&means)?
                } else {
                    let all: Vec<f64> = batch.chains[0].iter().map(|&k| samples[k as usize].epsilon.re).collect();
                    mc_error(&all)?
                }
            }
        };
        let deltas: Vec<f64> = batch
            .sampled_log_prob
            .iter()
            .zip(&exact_lp)
            .filter(|(a, _)| a.is_finite())
            .map(|(a, b)| a - b)
            .collect();
        let sigma_hat = if deltas.len() >= 2 { crate::stats::moments(&deltas)?.std } else { 0.0 };
        let bound_pinsker = pinsker_tv_bound(sigma_hat);
        let bound_theorem3 = theorem3_gaussian_bound(sigma_hat, 0.0, 0.0)?;
        let (sup, band) = force_spread(&force_samples, &f, batch.n_samples);
        let grad_bound = 2.0 * sup * bound_pinsker.min(bound_theorem3);
        let grad_norm = f.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let t_estimated = Instant::now();

        let update = sr_step(&f, &s, self.config.lambda, self.config.eta)?;
        self.params.descend(&update.direction, self.config.eta)?;
        if self.params.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("parameters after update".into()));
        }
        if self.config.record_forces {
            self.force_history.push(f);
        }
        let t_solved = Instant::now();

        let energy = e_mean.re;
        Ok(StepRecord {
            step: self.step,
            energy,
            mc_error: mc,
            variance,
            acceptance: batch.acceptance,
            sigma_hat,
            bound_pinsker,
            bound_theorem3,
            kappa: update.kappa,
            grad_norm,
            grad_bound,
            grad_mc_band: band,
            n_unique: batch.unique.len(),
            relative_error: self.config.reference_energy.map(|e0| ((energy - e0) / e0).abs()),
            timings: self.config.record_timings.then(|| PhaseTimings {
                sample_seconds: (t_sampled - t_start).as_secs_f64(),
                estimate_seconds: (t_estimated - t_sampled).as_secs_f64(),
                solve_seconds: (t_solved - t_estimated).as_secs_f64(),
            }),
        })
    }

    /// The samples entering the force vector, with the configured
    /// ingredients replaced by their reduced-precision versions.
    fn gradient_samples(
        &self,
        model: &Model,
        samples: &[LocalEnergySample],
        tabulate: bool,
    ) -> Result<Vec<LocalEnergySample>> {
        let mode = self.config.gradient_precision;
        if mode == GradientPrecision::None {
            return Ok(samples.to_vec());
        }
        let gfmt = self.config.gradient_format;
        let low_o = matches!(mode, GradientPrecision::LogDerivatives | GradientPrecision::Forces);
        let low_e = matches!(mode, GradientPrecision::LocalEnergies | GradientPrecision::Forces);
        let rounded = RoundedRbm::new(&self.params, gfmt, self.config.rounding);
        let table = if low_e && tabulate { Some(LookupAmplitude::tabulate(&rounded)?) } else { None };
        let amp: &(dyn Fn(SpinConfiguration) -> Result<Complex64> + Sync) = &|x| match &table {
            Some(t) => low_precision_local_energy(model, t, x, gfmt),
            None => low_precision_local_energy(model, &rounded, x, gfmt),
        };
        samples
            .par_iter()
            .map(|s| {
                let mut out = s.clone();
                if low_o {
                    out.o_vector = low_precision_log_derivatives(&self.params, s.x, gfmt);
                }
                if low_e {
                    out.epsilon = amp(s.x)?;
                }
                Ok(out)
            })
            .collect()
    }
}

/// Largest per-sample force contribution `|conj(O_k - <O_k>)(eps - <eps>)|`
/// and the largest per-parameter standard error `sqrt(Var_k / n)`.
fn force_spread(samples: &[LocalEnergySample], f: &[Complex64], n_samples: usize) -> (f64, f64) {
    let p = f.len();
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    let zero = Complex64::new(0.0, 0.0);
    let mut e = zero;
    let mut o = vec![zero; p];
    for s in samples {
        let w = s.weight / total;
        e += s.epsilon * w;
        for (m, v) in o.iter_mut().zip(&s.o_vector) {
            *m += v * w;
        }
    }
    let mut sup: f64 = 0.0;
    let mut var = vec![0.0; p];
    for s in samples {
        let w = s.weight / total;
        let de = s.epsilon - e;
        for k in 0..p {
            let c = (s.o_vector[k] - o[k]).conj() * de;
            sup = sup.max(c.norm());
            var[k] += w * (c - f[k]).norm_sqr();
        }
    }
    let band = if n_samples == 0 {
        0.0
    } else {
        var.iter().fold(0.0f64, |m, v| m.max((v / n_samples as f64).sqrt()))
    };
    (sup, band)
}

/// Runs `config.n_steps` steps from the seeded initialization and keeps
/// every `log_every`-th record plus the last one.
pub fn train(config: TrainConfig) -> Result<TrainingLog> {
    run(Trainer::new(config)?)
}

/// As [`train`], from given parameters.
pub fn train_from(config: TrainConfig, params: RbmParameters) -> Result<TrainingLog> {
    run(Trainer::with_params(config, params)?)
}

fn run(mut trainer: Trainer) -> Result<TrainingLog> {
    let n_steps = trainer.config.n_steps;
    let every = trainer.config.log_every;
    let mut records = Vec::new();
    for t in 0..n_steps {
        let r = trainer.step()?;
        if t % every == 0 || t + 1 == n_steps {
            records.push(r);
        }
    }
    Ok(TrainingLog { records, final_params: trainer.params.clone(), force_history: trainer.force_history })
}
