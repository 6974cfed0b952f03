//! Log-density error and sampled energies against system size.

use std::path::PathBuf;

use nqsmp::ansatz::{RbmParameters, RoundedRbm};
use nqsmp::hamiltonians::Model;
use nqsmp::rng::{derive_seed, substream};
use nqsmp::sampler::{run_chains, TableLogProb};
use nqsmp::vmc::local_energy;
use nqsmp::FloatFormat;
use rayon::prelude::*;

use super::delta::try_delta;
use crate::config::{ExperimentConfig, ModelKind, ScalingModel};
use crate::error::Result;
use crate::output::{num, opt, Output, Table};
use crate::shared::{ansatz_for, chain_config, chain_mean, n_hidden, proposal_for, sector_energy};

pub const COLUMNS: [&str; 12] = [
    "model",
    "n_sites",
    "format",
    "status",
    "sigma_delta",
    "shapiro_w",
    "energy",
    "energy_error",
    "energy_f64",
    "energy_f64_error",
    "energy_variational",
    "energy_ground",
];

/// Chain-blocked mean local energy when sampling from `fmt`.
fn sampled_energy(
    config: &ExperimentConfig,
    model: &Model,
    params: &RbmParameters,
    fmt: FloatFormat,
    seed: u64,
) -> nqsmp::Result<(f64, f64)> {
    let n = model.n_sites();
    let target = TableLogProb::tabulate(&RoundedRbm::new(params, fmt, config.precision.rounding))?;
    let run = run_chains(&chain_config(config, config.sampler.n_samples, n, seed), &target, proposal_for(model), None)?;
    let energies: Vec<f64> = run
        .samples
        .par_iter()
        .map(|&x| local_energy(model, params, x).map(|e| e.re))
        .collect::<nqsmp::Result<_>>()?;
    Ok(chain_mean(&run, &energies))
}

pub fn run(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut table = Table::new(&COLUMNS);
    for (i, &kind) in config.scaling.models.iter().enumerate() {
        for (j, &n) in config.scaling.sizes.iter().enumerate() {
            let label = (i * config.scaling.sizes.len() + j) as u64;
            let (model, params) = match kind {
                ScalingModel::Tfim | ScalingModel::Heisenberg => {
                    let mk = if kind == ScalingModel::Tfim { ModelKind::Tfim } else { ModelKind::Heisenberg };
                    let model = config.model.build_with(mk, n, config.model.field)?;
                    let params = ansatz_for(config, &model, label)?;
                    (model, params)
                }
                ScalingModel::Random => {
                    let model = config.model.build_with(ModelKind::Tfim, n, config.model.field)?;
                    let mut rng = substream(config.seed, "ansatz", label);
                    let m = n_hidden(&config.ansatz, n)?;
                    (model, RbmParameters::random(n, m, config.ansatz.random_scale, &mut rng)?)
                }
            };
            let seed = derive_seed(config.seed, "scaling", label);
            let (e64, e64_err) = sampled_energy(config, &model, &params, FloatFormat::F64, seed)?;
            let variational = sector_energy(&model, &params)?;
            let ground = model.ground_energy()?;
            for &fmt in &config.precision.formats {
                let mut row = vec![kind.name().into(), n.to_string(), fmt.name()];
                match try_delta(&params, fmt, config.precision.rounding)? {
                    Ok(d) => {
                        let (e, err) = sampled_energy(config, &model, &params, fmt, seed)?;
                        row.extend([
                            "ok".into(),
                            num(d.summary.std),
                            opt(d.summary.shapiro_wilk_w),
                            num(e),
                            num(err),
                        ]);
                    }
                    Err(status) => row.extend([status, String::new(), String::new(), String::new(), String::new()]),
                }
                row.extend([num(e64), num(e64_err), num(variational), num(ground)]);
                table.push(row);
            }
        }
    }
    let mut out = Output::create(config)?;
    out.table("size_scaling.csv", &table)?;
    Ok(out.written().to_vec())
}
