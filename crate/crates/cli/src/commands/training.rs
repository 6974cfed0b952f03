//! Mixed-precision SR training and low-precision gradient protocols.

use std::path::PathBuf;

use nqsmp::hamiltonians::Model;
use nqsmp::vmc::{GradientPrecision, SamplingMode, StepRecord, TrainConfig, Trainer, TrainingLog};
use nqsmp::FloatFormat;

use super::delta::{failure_name, with_reference};
use crate::config::{ExperimentConfig, Reference, SamplingKind};
use crate::error::{CliError, Result};
use crate::output::{num, opt, Output, Table};
use crate::shared::{n_hidden, proposal_for};

/// Training configuration for `model` sampled in `fmt`; every run of one
/// command shares the seed so runs differ only in precision.
pub fn train_config(config: &ExperimentConfig, model: &Model, fmt: FloatFormat, lambda: f64) -> Result<TrainConfig> {
    let n = model.n_sites();
    let t = &config.training;
    let s = &config.sampler;
    let mut tc = TrainConfig::new(model.clone(), n_hidden(&config.ansatz, n)?);
    tc.proposal = proposal_for(model);
    tc.init_scale = config.ansatz.init_scale;
    tc.initialization = config.ansatz.initialization;
    tc.sampling = match t.sampling {
        SamplingKind::Exact => SamplingMode::Exact,
        SamplingKind::Markov => SamplingMode::Markov {
            n_samples: s.n_samples,
            n_chains: s.n_chains(),
            burn_in_sweeps: s.burn_in(n),
            rethermalize_sweeps: 1,
            thin_sweeps: s.thin_sweeps,
        },
    };
    tc.eta = t.eta;
    tc.lambda = lambda;
    tc.n_steps = t.n_steps;
    tc.sampling_format = fmt;
    tc.rounding = config.precision.rounding;
    tc.seed = config.seed;
    tc.log_every = t.log_every;
    tc.record_timings = t.record_timings;
    tc.reference_energy = match t.reference {
        Reference::Exact => Some(model.ground_energy()?),
        Reference::None => None,
    };
    Ok(tc)
}

pub fn vmc_train(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let model = config.model.build()?;
    let mut out = Output::create(config)?;
    let every = config.training.checkpoint_every;
    for fmt in with_reference(&config.precision.formats) {
        let tc = train_config(config, &model, fmt, config.training.lambda)?;
        let (n_steps, log_every) = (tc.n_steps, tc.log_every);
        let mut trainer = Trainer::new(tc)?;
        let mut records = Vec::new();
        for t in 0..n_steps {
            let r = trainer.step()?;
            if t % log_every == 0 || t + 1 == n_steps {
                records.push(r);
            }
            if every > 0 && (t + 1) % every == 0 {
                out.json(&format!("checkpoints/{fmt}/step_{:06}.json", t + 1), trainer.params())?;
            }
        }
        out.json(&format!("final_{fmt}.json"), trainer.params())?;
        let log = TrainingLog { records, final_params: trainer.params().clone(), force_history: Vec::new() };
        let mut bytes = Vec::new();
        log.write_csv(&mut bytes).map_err(CliError::io(format!("train_{fmt}.csv")))?;
        out.csv_text(&format!("train_{fmt}.csv"), &String::from_utf8_lossy(&bytes))?;
    }
    Ok(out.written().to_vec())
}

pub const STEP_COLUMNS: [&str; 9] =
    ["lambda", "protocol", "format", "step", "energy", "mc_error", "relative_error", "kappa", "grad_norm"];

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "lambda",
    "protocol",
    "format",
    "steps_completed",
    "failure",
    "max_relative_error",
    "final_relative_error",
    "diverged",
    "first_divergence_step",
    "kappa_early_max",
    "kappa_late_median",
    "kappa_peak_ratio",
];

struct Run {
    records: Vec<StepRecord>,
    failure: Option<String>,
}

fn run_until_failure(tc: TrainConfig) -> Result<Run> {
    let n_steps = tc.n_steps;
    let mut trainer = Trainer::new(tc)?;
    let mut records = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        match trainer.step() {
            Ok(r) => records.push(r),
            Err(e) if e.is_numerical() => return Ok(Run { records, failure: Some(failure_name(&e)) }),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Run { records, failure: None })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

/// Largest `kappa` over steps `1..=100` and median over steps `300..=500`,
/// counting steps from one.
pub fn kappa_peak(records: &[StepRecord]) -> (Option<f64>, Option<f64>) {
    let window = |lo: usize, hi: usize| -> Vec<f64> {
        records.iter().filter(|r| (lo..=hi).contains(&(r.step + 1))).map(|r| r.kappa).collect()
    };
    let early = window(1, 100).into_iter().reduce(f64::max);
    (early, median(window(300, 500)))
}

pub fn sr_stability(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let model = config.model.build()?;
    let mut steps = Table::new(&STEP_COLUMNS);
    let mut summary = Table::new(&SUMMARY_COLUMNS);
    let mut cfg = config.clone();
    cfg.training.reference = Reference::Exact;
    cfg.training.log_every = 1;
    for &lambda in &config.training.lambdas {
        let reference = run_until_failure(train_config(&cfg, &model, FloatFormat::F64, lambda)?)?;
        let ref_err: Vec<f64> = reference.records.iter().filter_map(|r| r.relative_error).collect();
        let mut runs = vec![(GradientPrecision::None, FloatFormat::F64, reference)];
        for &protocol in &config.training.protocols {
            for &fmt in &config.precision.formats {
                let mut tc = train_config(&cfg, &model, FloatFormat::F64, lambda)?;
                tc.gradient_precision = protocol;
                tc.gradient_format = fmt;
                runs.push((protocol, fmt, run_until_failure(tc)?));
            }
        }
        for (protocol, fmt, run) in runs {
            for r in &run.records {
                steps.push(vec![
                    num(lambda),
                    protocol.name().into(),
                    fmt.name(),
                    r.step.to_string(),
                    num(r.energy),
                    num(r.mc_error),
                    opt(r.relative_error),
                    num(r.kappa),
                    num(r.grad_norm),
                ]);
            }
            let errs: Vec<f64> = run.records.iter().filter_map(|r| r.relative_error).collect();
            let divergence = errs.iter().zip(&ref_err).position(|(e, r)| *e > 10.0 * r);
            let diverged = divergence.is_some() || run.failure.is_some();
            let (early, late) = kappa_peak(&run.records);
            let ratio = early.zip(late).map(|(e, l)| e / l);
            summary.push(vec![
                num(lambda),
                protocol.name().into(),
                fmt.name(),
                run.records.len().to_string(),
                run.failure.clone().unwrap_or_default(),
                opt(errs.iter().copied().reduce(f64::max)),
                opt(errs.last().copied()),
                diverged.to_string(),
                divergence.map(|k| k.to_string()).unwrap_or_default(),
                opt(early),
                opt(late),
                opt(ratio),
            ]);
        }
    }
    let mut out = Output::create(config)?;
    out.table("sr_stability_steps.csv", &steps)?;
    out.table("sr_stability_summary.csv", &summary)?;
    Ok(out.written().to_vec())
}
