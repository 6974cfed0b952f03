//! Acceptance rate against injected noise for TFIM targets of varying
//! sharpness. Every field sees the same noise realization and chain seeds,
//! so differences between fields come from the targets alone.

use std::path::PathBuf;

use nqsmp::ansatz::NoiseField;
use nqsmp::bounds::{normalize_log_weights, theorem2_bound_value};
use nqsmp::lattice::enumerate_states;
use nqsmp::rng::derive_seed;
use nqsmp::sampler::{expected_acceptance, for_each_move, run_chains, TableLogProb};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::Result;
use crate::output::{num, Output, Table};
use crate::shared::{ansatz_for, chain_config, proposal_for};

pub const COLUMNS: [&str; 8] = [
    "field",
    "sigma",
    "alpha",
    "alpha_tilde",
    "alpha_exact",
    "alpha_tilde_exact",
    "bound",
    "bound_exact",
];

pub fn run(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let n = config.model.n_sites;
    let states = enumerate_states(n)?;
    let mut table = Table::new(&COLUMNS);
    for (k, &field) in config.sweep.fields.iter().enumerate() {
        let model = config.model.build_with(ModelKind::Tfim, n, field)?;
        let proposal = proposal_for(&model);
        let params = ansatz_for(config, &model, k as u64)?;
        let base: Vec<f64> = states.iter().map(|&x| 2.0 * params.log_psi_f64(x).re).collect();
        let alpha_exact = expected_acceptance(&states, &base, proposal)?;
        let chains = chain_config(config, config.sampler.n_samples, n, derive_seed(config.seed, "sweep", 0));
        let alpha = run_chains(&chains, &TableLogProb::new(n, base.clone())?, proposal, None)?.acceptance;
        let noise_seed = derive_seed(config.seed, "noise", 0);
        for &sigma in &config.sweep.sigma_grid {
            let noise = NoiseField::new(sigma, noise_seed)?;
            let delta: Vec<f64> = states.iter().map(|&x| noise.value(x)).collect();
            let perturbed: Vec<f64> = base.iter().zip(&delta).map(|(b, d)| b + d).collect();
            let alpha_tilde_exact = expected_acceptance(&states, &perturbed, proposal)?;
            let run = run_chains(&chains, &TableLogProb::new(n, perturbed.clone())?, proposal, None)?;
            let pi_tilde = normalize_log_weights(&perturbed)?;
            let bound_exact = theorem2_bound_value(&pi_tilde, &states, &delta, proposal)?;
            let q = 1.0 / proposal.n_moves(n) as f64;
            let bound = run
                .samples
                .iter()
                .map(|&x| {
                    let dx = delta[x.encoding() as usize];
                    let mut acc = 0.0;
                    for_each_move(proposal, x, |y| acc += q * -(-(delta[y.encoding() as usize] - dx).abs()).exp_m1());
                    acc
                })
                .sum::<f64>()
                / run.samples.len() as f64;
            table.push(vec![
                num(field),
                num(sigma),
                num(alpha),
                num(run.acceptance),
                num(alpha_exact),
                num(alpha_tilde_exact),
                num(bound),
                num(bound_exact),
            ]);
        }
    }
    let mut out = Output::create(config)?;
    out.table("acceptance_sweep.csv", &table)?;
    Ok(out.written().to_vec())
}
