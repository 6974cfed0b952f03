use std::path::PathBuf;

use nqsmp::ansatz::RbmParameters;
use nqsmp::hamiltonians::Model;
use nqsmp::lattice::SpinConfiguration;
use nqsmp::rng::{derive_seed, substream};
use nqsmp::sampler::{proposal_states, ChainConfig, ChainRun, Proposal};
use nqsmp::vmc::{train, SamplingMode, TrainConfig};

use crate::config::{AnsatzSource, AnsatzSpec, ExperimentConfig, Observable};
use crate::error::{CliError, Result};

pub fn proposal_for(model: &Model) -> Proposal {
    let n = model.n_sites();
    match model {
        Model::Tfim { .. } => Proposal::SingleFlip,
        Model::Heisenberg { .. } => Proposal::Exchange { hamming_weight: n as u32 / 2 },
    }
}

pub fn n_hidden(spec: &AnsatzSpec, n_sites: usize) -> Result<usize> {
    let m = spec.alpha * n_sites as f64;
    if m < 1.0 || m.fract() != 0.0 {
        return Err(CliError::Config(format!("alpha {} gives a non-integral hidden layer for N = {n_sites}", spec.alpha)));
    }
    Ok(m as usize)
}

fn field_label(model: &Model) -> String {
    match model {
        Model::Tfim { field, .. } => format!("{field}"),
        Model::Heisenberg { .. } => "0".into(),
    }
}

/// Parameters for `model` according to the ansatz section. `label` keeps
/// the random streams of different models in one run apart.
pub fn ansatz_for(config: &ExperimentConfig, model: &Model, label: u64) -> Result<RbmParameters> {
    let spec = &config.ansatz;
    let n = model.n_sites();
    let m = n_hidden(spec, n)?;
    match spec.source {
        AnsatzSource::Random => {
            let mut rng = substream(config.seed, "ansatz", label);
            Ok(RbmParameters::random(n, m, spec.random_scale, &mut rng)?)
        }
        AnsatzSource::Trained => Ok(fit_ground_state(config, model, label)?),
        AnsatzSource::File => {
            let template = spec.path.as_deref().unwrap_or_default();
            let path = PathBuf::from(template.replace("{n}", &n.to_string()).replace("{h}", &field_label(model)));
            let p = RbmParameters::load(&path)?;
            if p.n_visible() != n {
                return Err(CliError::Config(format!("{} has {} visible units, model has {n}", path.display(), p.n_visible())));
            }
            Ok(p)
        }
    }
}

/// Exact-expectation SR from the configured initialization.
pub fn fit_ground_state(config: &ExperimentConfig, model: &Model, label: u64) -> nqsmp::Result<RbmParameters> {
    let spec = &config.ansatz;
    let n_hidden = n_hidden(spec, model.n_sites()).map_err(|e| nqsmp::Error::Domain(e.to_string()))?;
    let mut tc = TrainConfig::new(model.clone(), n_hidden);
    tc.sampling = SamplingMode::Exact;
    tc.n_steps = spec.train_steps;
    tc.eta = spec.train_eta;
    tc.lambda = spec.train_lambda;
    tc.init_scale = spec.init_scale;
    tc.initialization = spec.initialization;
    tc.seed = derive_seed(config.seed, "ansatz", label);
    tc.log_every = spec.train_steps.max(1);
    if spec.train_steps == 0 {
        return nqsmp::vmc::Trainer::new(tc).map(|t| t.params().clone());
    }
    Ok(train(tc)?.final_params)
}

/// Local estimator of an observable under `psi`.
pub fn local_observable(obs: Observable, params: &RbmParameters, x: SpinConfiguration) -> f64 {
    match obs {
        Observable::EvenProjector => {
            if x.hamming_weight() % 2 == 0 {
                1.0
            } else {
                0.0
            }
        }
        Observable::SigmaX => {
            let n = x.len();
            let lx = params.log_psi_f64(x);
            let total: f64 = (0..n)
                .map(|i| {
                    let y = nqsmp::lattice::flip_neighbor(x, i).expect("site in range");
                    (params.log_psi_f64(y) - lx).exp().re
                })
                .sum();
            total / n as f64
        }
    }
}

pub fn chain_config(config: &ExperimentConfig, n_samples: usize, n_sites: usize, seed: u64) -> ChainConfig {
    let s = &config.sampler;
    ChainConfig {
        n_chains: (n_samples / s.samples_per_chain).max(1),
        n_samples,
        burn_in_sweeps: s.burn_in(n_sites),
        thin_sweeps: s.thin_sweeps,
        seed,
    }
}

/// Mean of `values` over the run with a chain-blocked standard error.
pub fn chain_mean(run: &ChainRun, values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let per = run.samples_per_chain;
    let chains = values.len() / per;
    if chains < 2 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = values.chunks(per).map(|c| c.iter().sum::<f64>() / per as f64).collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (chains - 1) as f64;
    (mean, (var / chains as f64).sqrt())
}

pub fn states_for(model: &Model) -> nqsmp::Result<Vec<SpinConfiguration>> {
    proposal_states(proposal_for(model), model.n_sites())
}

/// Variational energy summed over the states the sampler can reach.
pub fn sector_energy(model: &Model, params: &RbmParameters) -> nqsmp::Result<f64> {
    let states = states_for(model)?;
    let logs: Vec<f64> = states.iter().map(|&x| 2.0 * params.log_psi_f64(x).re).collect();
    let weights = nqsmp::bounds::normalize_log_weights(&logs)?;
    let mut energy = 0.0;
    for (&x, w) in states.iter().zip(weights) {
        energy += w * nqsmp::vmc::local_energy(model, params, x)?.re;
    }
    Ok(energy)
}
