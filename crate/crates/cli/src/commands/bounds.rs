//! Exact perturbation bounds and observable biases under injected noise.

use std::path::PathBuf;

use nqsmp::ansatz::NoiseField;
use nqsmp::bounds::{
    delta_alpha, evaluate_all_bounds, normalize_log_weights, pinsker_tv_bound, theorem3_gaussian_bound, PerturbedTarget,
};
use nqsmp::lattice::enumerate_states;
use nqsmp::rng::derive_seed;
use nqsmp::sampler::{run_chains, TableLogProb};
use nqsmp::stats::sample_variance;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{num, Output, Table};
use crate::shared::{ansatz_for, chain_config, chain_mean, local_observable, proposal_for, states_for};

pub const COLUMNS: [&str; 13] = [
    "kind",
    "name",
    "noise_sigma",
    "realization",
    "sigma",
    "mu",
    "r",
    "r_source",
    "exact",
    "bound",
    "holds",
    "estimate",
    "mc_band",
];

pub const GRID_COLUMNS: [&str; 4] = ["s", "epsilon", "exact", "bound"];

pub fn run(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let model = config.model.build()?;
    let n = model.n_sites();
    let proposal = proposal_for(&model);
    let params = ansatz_for(config, &model, 0)?;
    let all = enumerate_states(n)?;
    let full_base: Vec<f64> = all.iter().map(|&x| 2.0 * params.log_psi_f64(x).re).collect();
    let states = states_for(&model)?;
    let base: Vec<f64> = states.iter().map(|x| full_base[x.encoding() as usize]).collect();
    let pi = normalize_log_weights(&base)?;

    let observables: Vec<_> = config
        .bounds
        .observables
        .iter()
        .map(|&o| {
            let full: Vec<f64> = all.iter().map(|&x| local_observable(o, &params, x)).collect();
            let mean: f64 = states.iter().zip(&pi).map(|(x, p)| p * full[x.encoding() as usize]).sum();
            (o, full, mean)
        })
        .collect();

    let spec = &config.bounds;
    let mut table = Table::new(&COLUMNS);
    for (k, &sigma) in spec.sigma_grid.iter().enumerate() {
        for rep in 0..spec.realizations {
            let noise = NoiseField::new(sigma, derive_seed(config.seed, "noise", rep as u64))?;
            let delta: Vec<f64> = states.iter().map(|&x| noise.value(x)).collect();
            let target = PerturbedTarget::new(states.clone(), base.clone(), delta)?;
            for r in evaluate_all_bounds(&target, proposal, spec.r_source)? {
                table.push(vec![
                    "bound".into(),
                    r.bound_name.to_string(),
                    num(sigma),
                    rep.to_string(),
                    num(r.sigma),
                    num(r.mu),
                    num(r.r),
                    r.r_source.into(),
                    num(r.exact),
                    num(r.bound),
                    r.holds.to_string(),
                    String::new(),
                    String::new(),
                ]);
            }

            let perturbed: Vec<f64> = all.iter().zip(&full_base).map(|(&x, lp)| lp + noise.value(x)).collect();
            let table_lp = TableLogProb::new(n, perturbed)?;
            let seed = derive_seed(config.seed, "estimate", (k * spec.realizations + rep) as u64);
            let chains = run_chains(&chain_config(config, spec.n_samples, n, seed), &table_lp, proposal, None)?;
            let bound = pinsker_tv_bound(sigma).min(theorem3_gaussian_bound(sigma, 0.0, 0.0)?);
            for (o, full, mean) in &observables {
                let exact_tilde: f64 =
                    states.iter().zip(target.pi_tilde()).map(|(x, p)| p * full[x.encoding() as usize]).sum();
                let values: Vec<f64> = chains.samples.iter().map(|x| full[x.encoding() as usize]).collect();
                let (estimate, se) = chain_mean(&chains, &values);
                let se = if se.is_finite() { se } else { (sample_variance(&values) / values.len() as f64).sqrt() };
                let scale = mean.abs();
                let exact_rel = (exact_tilde - mean).abs() / scale;
                let est_rel = (estimate - mean).abs() / scale;
                let band = 3.0 * se / scale;
                table.push(vec![
                    "observable".into(),
                    o.name().into(),
                    num(sigma),
                    rep.to_string(),
                    num(sigma),
                    num(0.0),
                    num(0.0),
                    "zero".into(),
                    num(exact_rel),
                    num(bound),
                    (est_rel <= band.max(bound)).to_string(),
                    num(est_rel),
                    num(band),
                ]);
            }
        }
    }

    let mut out = Output::create(config)?;
    out.table("bounds.csv", &table)?;
    out.table("delta_alpha_grid.csv", &delta_alpha_grid(spec.grid_points)?)?;
    Ok(out.written().to_vec())
}

/// `|Delta alpha|` over `s in (0, 2]` and `eps in [0, 3]`, `points` per axis.
pub fn delta_alpha_grid(points: usize) -> Result<Table> {
    let mut table = Table::new(&GRID_COLUMNS);
    for i in 0..points {
        let s = 2.0 * (i + 1) as f64 / points as f64;
        for j in 0..points {
            let eps = 3.0 * j as f64 / (points - 1) as f64;
            let d = delta_alpha(s, eps)?;
            table.push(vec![num(s), num(eps), num(d.exact), num(d.bound)]);
        }
    }
    Ok(table)
}
