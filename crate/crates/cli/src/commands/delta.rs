//! Per-configuration log-density error of reduced-precision evaluation.

use std::path::PathBuf;

use nqsmp::ansatz::{delta_distribution, DeltaDistribution, RbmParameters};
use nqsmp::lattice::enumerate_states;
use nqsmp::precision::relative_roundoff;
use nqsmp::{FloatFormat, RoundingMode};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::output::{num, opt, Output, Table};
use crate::shared::ansatz_for;

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "format",
    "rounding",
    "unit_roundoff",
    "status",
    "mean",
    "std",
    "skewness",
    "excess_kurtosis",
    "shapiro_w",
    "shapiro_n",
];

/// `f64` first, then the configured formats without repeats.
pub fn with_reference(formats: &[FloatFormat]) -> Vec<FloatFormat> {
    let mut all = vec![FloatFormat::F64];
    for &f in formats {
        if !all.contains(&f) {
            all.push(f);
        }
    }
    all
}

/// The distribution, or the name of the numerical failure that prevented it.
pub fn try_delta(params: &RbmParameters, fmt: FloatFormat, mode: RoundingMode) -> Result<Result<DeltaDistribution, String>> {
    match delta_distribution(params, fmt, mode) {
        Ok(d) => Ok(Ok(d)),
        Err(e) if e.is_numerical() => Ok(Err(failure_name(&e))),
        Err(e) => Err(CliError::Library(e)),
    }
}

pub fn failure_name(e: &nqsmp::Error) -> String {
    match e {
        nqsmp::Error::AmplitudeUnderflow { .. } => "amplitude_underflow".into(),
        nqsmp::Error::EvaluationFailure { .. } => "evaluation_failure".into(),
        nqsmp::Error::SingularSystem { .. } => "singular_system".into(),
        nqsmp::Error::LocalEnergyOverflow { .. } => "local_energy_overflow".into(),
        nqsmp::Error::NonFinite(_) => "non_finite".into(),
        nqsmp::Error::TrainStep { source, .. } | nqsmp::Error::Evaluator { source, .. } => failure_name(source),
        _ => "numerical_failure".into(),
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let model = config.model.build()?;
    let params = ansatz_for(config, &model, 0)?;
    let states = enumerate_states(model.n_sites())?;
    let formats = with_reference(&config.precision.formats);
    let mode = config.precision.rounding;

    let mut summary = Table::new(&SUMMARY_COLUMNS);
    let mut columns: Vec<Vec<String>> = Vec::new();
    for &fmt in &formats {
        let unit = num(relative_roundoff(fmt));
        match try_delta(&params, fmt, mode)? {
            Ok(d) => {
                let s = d.summary;
                summary.push(vec![
                    fmt.name(),
                    mode.name().into(),
                    unit,
                    "ok".into(),
                    num(s.mean),
                    num(s.std),
                    num(s.skewness),
                    num(s.excess_kurtosis),
                    opt(s.shapiro_wilk_w),
                    s.shapiro_wilk_n.to_string(),
                ]);
                columns.push(d.delta.iter().map(|&v| num(v)).collect());
            }
            Err(status) => {
                let mut row = vec![fmt.name(), mode.name().into(), unit, status];
                row.extend(std::iter::repeat_n(String::new(), 6));
                summary.push(row);
                columns.push(vec![String::new(); states.len()]);
            }
        }
    }

    let names = std::iter::once("configuration".to_string()).chain(formats.iter().map(|f| f.name())).collect();
    let mut deltas = Table::with_columns(names);
    for (k, x) in states.iter().enumerate() {
        let mut row = vec![x.encoding().to_string()];
        row.extend(columns.iter().map(|c| c[k].clone()));
        deltas.push(row);
    }

    let mut out = Output::create(config)?;
    out.table("delta.csv", &deltas)?;
    out.table("delta_summary.csv", &summary)?;
    Ok(out.written().to_vec())
}
