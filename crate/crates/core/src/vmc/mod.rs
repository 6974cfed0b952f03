//! Variational Monte Carlo: local energies, forces, the S matrix and
//! stochastic-reconfiguration updates.

mod lowp;
mod train;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::LogAmplitude;
use crate::error::{Error, Result};
use crate::hamiltonians::Model;
use crate::lattice::{enumerate_states, SpinConfiguration};
use crate::precision::FloatFormat;
use crate::stats::sample_variance;

pub use lowp::{low_precision_forces, low_precision_local_energy, low_precision_log_derivatives};
pub use train::{
    train, train_from, GradientPrecision, Initialization, PhaseTimings, SamplingMode, StepRecord, TrainConfig, Trainer, TrainingLog,
};

pub type CMatrix = DMatrix<Complex64>;

/// `sum_{x'} H(x, x') psi(x') / psi(x)`.
pub fn local_energy(model: &Model, amp: &impl LogAmplitude, x: SpinConfiguration) -> Result<Complex64> {
    if x.len() != model.n_sites() || amp.n_sites() != model.n_sites() {
        return Err(Error::SizeMismatch { expected: model.n_sites(), found: x.len() });
    }
    let lx = amp.log_psi(x)?;
    let mut acc = Complex64::new(model.diagonal(x), 0.0);
    let mut failure = None;
    model.for_each_offdiagonal(x, |y, h| {
        if failure.is_some() {
            return;
        }
        match amp.log_psi(y) {
            Ok(ly) => {
                let term = (ly - lx).exp() * h;
                if term.re.is_finite() && term.im.is_finite() {
                    acc += term;
                } else {
                    failure = Some(Error::LocalEnergyOverflow { x, x_prime: y });
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(acc),
    }
}

/// One sampled configuration with its local energy and log-derivatives.
/// `weight` is the relative frequency; weights are normalized on use.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalEnergySample {
    pub x: SpinConfiguration,
    pub epsilon: Complex64,
    pub o_vector: Vec<Complex64>,
    pub weight: f64,
}

impl LocalEnergySample {
    pub fn new(x: SpinConfiguration, epsilon: Complex64, o_vector: Vec<Complex64>) -> Self {
        Self { x, epsilon, o_vector, weight: 1.0 }
    }
}

fn check_samples(samples: &[LocalEnergySample]) -> Result<(usize, f64)> {
    let first = samples.first().ok_or_else(|| Error::DegenerateInput("no samples".into()))?;
    let p = first.o_vector.len();
    let mut total = 0.0;
    for s in samples {
        if s.o_vector.len() != p {
            return Err(Error::SizeMismatch { expected: p, found: s.o_vector.len() });
        }
        if !(s.weight >= 0.0) || !s.epsilon.re.is_finite() || !s.epsilon.im.is_finite() {
            return Err(Error::Domain("sample weights must be non-negative, energies finite".into()));
        }
        total += s.weight;
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("total sample weight is zero".into()));
    }
    Ok((p, total))
}

fn weighted_means(samples: &[LocalEnergySample], p: usize, total: f64) -> (Complex64, Vec<Complex64>) {
    let mut e = Complex64::new(0.0, 0.0);
    let mut o = vec![Complex64::new(0.0, 0.0); p];
    for s in samples {
        let w = s.weight / total;
        e += s.epsilon * w;
        for (m, v) in o.iter_mut().zip(&s.o_vector) {
            *m += v * w;
        }
    }
    (e, o)
}

/// Weighted mean of the local energy.
pub fn mean_energy(samples: &[LocalEnergySample]) -> Result<Complex64> {
    let (p, total) = check_samples(samples)?;
    Ok(weighted_means(samples, p, total).0)
}

/// `F = E[O* eps] - E[O*] E[eps]`.
pub fn forces(samples: &[LocalEnergySample]) -> Result<Vec<Complex64>> {
    let (p, total) = check_samples(samples)?;
    let (e, o) = weighted_means(samples, p, total);
    let mut f = vec![Complex64::new(0.0, 0.0); p];
    for s in samples {
        let w = s.weight / total;
        let de = (s.epsilon - e) * w;
        for ((fk, v), m) in f.iter_mut().zip(&s.o_vector).zip(&o) {
            *fk += (v - m).conj() * de;
        }
    }
    Ok(f)
}

/// `S = E[O* O^T] - E[O*] E[O]^T`, assembled from one real product of the
/// stacked real and imaginary parts.
pub fn s_matrix(samples: &[LocalEnergySample]) -> Result<CMatrix> {
    let (p, total) = check_samples(samples)?;
    let (_, o) = weighted_means(samples, p, total);
    let mut x = DMatrix::<f64>::zeros(samples.len(), 2 * p);
    for (r, s) in samples.iter().enumerate() {
        let sw = (s.weight / total).sqrt();
        for (k, (v, m)) in s.o_vector.iter().zip(&o).enumerate() {
            let d = (v - m) * sw;
            x[(r, k)] = d.re;
            x[(r, p + k)] = d.im;
        }
    }
    let g = x.tr_mul(&x);
    let mut out = CMatrix::zeros(p, p);
    for n in 0..p {
        for m in 0..p {
            let re = g[(n, m)] + g[(p + n, p + m)];
            let im = g[(n, p + m)] - g[(p + n, m)];
            out[(n, m)] = Complex64::new(re, im);
        }
    }
    // exact Hermiticity
    for n in 0..p {
        out[(n, n)].im = 0.0;
        for m in n + 1..p {
            out[(m, n)] = out[(n, m)].conj();
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrUpdate {
    pub forces: Vec<Complex64>,
    pub s: CMatrix,
    pub lambda: f64,
    pub eta: f64,
    /// Solution of `(S + lambda I) g = F`.
    pub direction: Vec<Complex64>,
    pub kappa: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// `||(S + lambda I) g - F|| / ||F||`.
    pub residual: f64,
}

fn shifted(s: &CMatrix, lambda: f64) -> CMatrix {
    let mut a = s.clone();
    for k in 0..a.nrows() {
        a[(k, k)] += Complex64::new(lambda, 0.0);
    }
    a
}

/// Hermitian eigenvalues, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0).ok_or(Error::EigenNonConvergence)?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn cnorm(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `(S + lambda I) g = F` by Cholesky with one refinement sweep.
pub fn sr_step(forces: &[Complex64], s: &CMatrix, lambda: f64, eta: f64) -> Result<SrUpdate> {
    let p = forces.len();
    if s.nrows() != p || s.ncols() != p {
        return Err(Error::SizeMismatch { expected: p, found: s.nrows() });
    }
    if !(lambda >= 0.0) || !(eta > 0.0) {
        return Err(Error::Domain(format!("need lambda >= 0 and eta > 0, got {lambda}, {eta}")));
    }
    let a = shifted(s, lambda);
    let eig = hermitian_eigenvalues(&a)?;
    let (min, max) = (eig[0], eig[p - 1]);
    if !(min > max.abs() * f64::EPSILON * p as f64) {
        return Err(Error::SingularSystem { min_eigenvalue: min });
    }
    let chol = a.clone().cholesky().ok_or(Error::SingularSystem { min_eigenvalue: min })?;
    let f = DVector::from_column_slice(forces);
    let mut g = chol.solve(&f);
    let r = &f - &a * &g;
    g += chol.solve(&r);
    let fnorm = cnorm(&f);
    let residual = if fnorm == 0.0 { cnorm(&(&a * &g)) } else { cnorm(&(&f - &a * &g)) / fnorm };
    Ok(SrUpdate {
        forces: forces.to_vec(),
        s: s.clone(),
        lambda,
        eta,
        direction: g.iter().copied().collect(),
        kappa: max / min,
        min_eigenvalue: min,
        max_eigenvalue: max,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub kappa: f64,
    pub force_perturbation: f64,
    pub matrix_perturbation: f64,
    pub measured_force: f64,
    pub bound_force: f64,
    pub holds_force: bool,
    pub measured_matrix: f64,
    pub bound_matrix: f64,
    pub holds_matrix: bool,
}

fn operator_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn holds(measured: f64, bound: f64) -> bool {
    measured <= bound * (1.0 + 1e-9) + 1e-14
}

/// Relative change of the solution of `(S + lambda I) g = F` when `F` or the
/// matrix is perturbed, against the condition-number bounds.
pub fn condition_amplification(
    s: &CMatrix,
    forces: &[Complex64],
    delta_forces: &[Complex64],
    delta_s: &CMatrix,
    lambda: f64,
) -> Result<AmplificationReport> {
    let p = forces.len();
    if s.shape() != (p, p) || delta_s.shape() != (p, p) || delta_forces.len() != p {
        return Err(Error::SizeMismatch { expected: p, found: delta_forces.len() });
    }
    let a = shifted(s, lambda);
    let sv = a.clone().svd(false, false).singular_values;
    let kappa = sv.max() / sv.min();
    let f = DVector::from_column_slice(forces);
    let df = DVector::from_column_slice(delta_forces);
    let lu = a.clone().lu();
    let g = lu.solve(&f).ok_or(Error::SingularSystem { min_eigenvalue: sv.min() })?;
    let gnorm = cnorm(&g);
    if gnorm == 0.0 {
        return Err(Error::DegenerateInput("zero solution".into()));
    }
    let g_f = lu.solve(&(&f + &df)).ok_or(Error::SingularSystem { min_eigenvalue: sv.min() })?;
    let force_perturbation = cnorm(&df) / cnorm(&f);
    let matrix_perturbation = operator_norm(delta_s) / sv.max();
    let product = kappa * matrix_perturbation;
    if product >= 1.0 {
        return Err(Error::Domain(format!("kappa * ||dS|| / ||S|| = {product} must be below one")));
    }
    let g_s = (&a + delta_s)
        .lu()
        .solve(&f)
        .ok_or(Error::SingularSystem { min_eigenvalue: f64::NAN })?;
    let measured_force = cnorm(&(&g_f - &g)) / gnorm;
    let measured_matrix = cnorm(&(&g_s - &g)) / gnorm;
    let bound_force = kappa * force_perturbation;
    let bound_matrix = product / (1.0 - product);
    Ok(AmplificationReport {
        kappa,
        force_perturbation,
        matrix_perturbation,
        measured_force,
        bound_force,
        holds_force: holds(measured_force, bound_force),
        measured_matrix,
        bound_matrix,
        holds_matrix: holds(measured_matrix, bound_matrix),
    })
}

/// Fractions of gradient magnitudes in the half-precision bands.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BandFractions {
    /// `[2^-14, 65504]`
    pub normal: f64,
    /// `[2^-24, 2^-14)`
    pub subnormal: f64,
    /// `< 2^-24`, including exact zeros.
    pub underflow: f64,
    /// `> 65504`
    pub overflow: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicRangeReport {
    pub per_step: Vec<BandFractions>,
    pub overall: BandFractions,
    /// `(floor(log2 |F|), count)` over non-zero entries, ascending.
    pub log2_histogram: Vec<(i32, usize)>,
    pub zeros: usize,
}

fn band_counts(values: &[Complex64], counts: &mut [usize; 4]) {
    let f16 = FloatFormat::F16;
    for v in values {
        let m = v.norm();
        let band = if m > f16.max_finite() {
            3
        } else if m >= f16.min_normal() {
            0
        } else if m >= f16.min_subnormal() {
            1
        } else {
            2
        };
        counts[band] += 1;
    }
}

fn fractions(counts: [usize; 4]) -> BandFractions {
    let total = counts.iter().sum::<usize>().max(1) as f64;
    BandFractions {
        normal: counts[0] as f64 / total,
        subnormal: counts[1] as f64 / total,
        underflow: counts[2] as f64 / total,
        overflow: counts[3] as f64 / total,
    }
}

pub fn gradient_dynamic_range(history: &[Vec<Complex64>]) -> Result<DynamicRangeReport> {
    if history.is_empty() {
        return Err(Error::DegenerateInput("empty gradient history".into()));
    }
    let mut overall = [0usize; 4];
    let mut per_step = Vec::with_capacity(history.len());
    let mut hist = std::collections::BTreeMap::new();
    let mut zeros = 0;
    for step in history {
        let mut c = [0usize; 4];
        band_counts(step, &mut c);
        for k in 0..4 {
            overall[k] += c[k];
        }
        per_step.push(fractions(c));
        for v in step {
            let m = v.norm();
            if m == 0.0 {
                zeros += 1;
            } else {
                *hist.entry(m.log2().floor() as i32).or_insert(0usize) += 1;
            }
        }
    }
    Ok(DynamicRangeReport { per_step, overall: fractions(overall), log2_histogram: hist.into_iter().collect(), zeros })
}

/// `sqrt(s^2 / n)` with the unbiased sample variance.
pub fn mc_error(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::DegenerateInput(format!("{} values, need at least 2", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    Ok((sample_variance(values) / values.len() as f64).sqrt())
}

/// Energy and local-energy variance under `|psi|^2`, by full enumeration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumeratedEnergy {
    pub energy: Complex64,
    pub variance: f64,
}

/// Every configuration as a weighted sample under `|psi|^2`, with `O`
/// from `grad`.
pub fn enumerated_samples(
    model: &Model,
    amp: &impl LogAmplitude,
    grad: impl Fn(SpinConfiguration) -> Result<Vec<Complex64>> + Sync,
) -> Result<Vec<LocalEnergySample>> {
    use rayon::prelude::*;
    let states = enumerate_states(model.n_sites())?;
    let logs: Vec<f64> = states.iter().map(|&x| amp.log_psi(x).map(|l| 2.0 * l.re)).collect::<Result<_>>()?;
    let weights = crate::bounds::normalize_log_weights(&logs)?;
    states
        .into_par_iter()
        .zip(weights)
        .map(|(x, w)| {
            Ok(LocalEnergySample { x, epsilon: local_energy(model, amp, x)?, o_vector: grad(x)?, weight: w })
        })
        .collect()
}

pub fn enumerated_energy(model: &Model, amp: &impl LogAmplitude) -> Result<EnumeratedEnergy> {
    let samples = enumerated_samples(model, amp, |_| Ok(Vec::new()))?;
    let energy = mean_energy(&samples)?;
    let variance = samples.iter().map(|s| s.weight * (s.epsilon - energy).norm_sqr()).sum();
    Ok(EnumeratedEnergy { energy, variance })
}
