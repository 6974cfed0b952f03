//! Bias bounds for Metropolis–Hastings under a perturbed log-density.
//!
//! The perturbed target is `pi~ ∝ pi e^delta`. Everything here works on an
//! explicit list of states so that exact values can be computed by
//! enumeration and compared against each bound.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SpinConfiguration;
use crate::sampler::{build_kernel_from_log_probs, spectral_gap, stationary_distribution, DenseKernel, Proposal};
use crate::special::erfcx;

const HOLD_TOL: f64 = 1e-12;

/// Normalizes `exp(log_weights)` without overflow.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Domain("log-weights have no finite maximum".into()));
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// A base distribution together with its additive log-density perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedTarget {
    states: Vec<SpinConfiguration>,
    base_log_prob: Vec<f64>,
    delta: Vec<f64>,
    pi: Vec<f64>,
    pi_tilde: Vec<f64>,
}

impl PerturbedTarget {
    pub fn new(states: Vec<SpinConfiguration>, base_log_prob: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let d = states.len();
        for len in [base_log_prob.len(), delta.len()] {
            if len != d {
                return Err(Error::SizeMismatch { expected: d, found: len });
            }
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("perturbation must be finite".into()));
        }
        let pi = normalize_log_weights(&base_log_prob)?;
        let perturbed: Vec<f64> = base_log_prob.iter().zip(&delta).map(|(l, d)| l + d).collect();
        let pi_tilde = normalize_log_weights(&perturbed)?;
        Ok(Self { states, base_log_prob, delta, pi, pi_tilde })
    }

    pub fn states(&self) -> &[SpinConfiguration] {
        &self.states
    }

    pub fn base_log_prob(&self) -> &[f64] {
        &self.base_log_prob
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn perturbed_log_prob(&self) -> Vec<f64> {
        self.base_log_prob.iter().zip(&self.delta).map(|(l, d)| l + d).collect()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn pi_tilde(&self) -> &[f64] {
        &self.pi_tilde
    }
}

/// `½ Σ |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch { expected: p.len(), found: q.len() });
    }
    for v in [p, q] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || v.iter().any(|&x| x < 0.0) {
            return Err(Error::NotNormalized { sum });
        }
    }
    Ok((0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0))
}

/// `2 A tv`, the largest possible shift of an expectation of `|f| <= A`.
pub fn bias_bound(sup_norm: f64, tv: f64) -> f64 {
    2.0 * sup_norm * tv
}

/// `sigma / 2`.
pub fn pinsker_tv_bound(sigma: f64) -> f64 {
    0.5 * sigma
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaAlpha {
    pub exact: f64,
    pub bound: f64,
}

/// `|min(1, s e^eps) - min(1, s)|` and its bound `1 - e^{-|eps|}`.
pub fn delta_alpha(s: f64, eps: f64) -> Result<DeltaAlpha> {
    if !(s > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("acceptance ratio {s} must be positive, increment finite")));
    }
    let exact = ((s * eps.exp()).min(1.0) - s.min(1.0)).abs();
    let bound = -(-eps.abs()).exp_m1();
    Ok(DeltaAlpha { exact, bound })
}

fn check_r(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("contraction constant r = {r} outside [0, 1]")));
    }
    Ok(())
}

/// `1 - E[e^{-|eps|}]` for `eps ~ N(mu, 2 sigma^2)`.
pub fn gaussian_increment_factor(sigma: f64, mu: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::Domain(format!("invalid Gaussian parameters ({sigma}, {mu})")));
    }
    if sigma == 0.0 {
        return if mu == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Domain("sigma = 0 with non-zero mean".into()))
        };
    }
    // e^{sigma^2 -/+ mu} erfc(sigma -/+ mu/(2 sigma)) = e^{-mu^2/(4 sigma^2)} erfcx(.)
    let scale = (-mu * mu / (4.0 * sigma * sigma)).exp();
    let shift = mu / (2.0 * sigma);
    let mean = 0.5 * scale * (erfcx(sigma - shift) + erfcx(sigma + shift));
    Ok((1.0 - mean).clamp(0.0, 1.0))
}

/// Gaussian-increment stationary bound for single-flip chains with
/// contraction constant `r`; infinite at `r = 1`.
pub fn theorem3_gaussian_bound(sigma: f64, mu: f64, r: f64) -> Result<f64> {
    check_r(r)?;
    let f = gaussian_increment_factor(sigma, mu)?;
    Ok(if f == 0.0 { 0.0 } else { f / (1.0 - r) })
}

/// `d ln B / d ln sigma` of the centered Gaussian bound, by central
/// differences.
pub fn theorem3_log_slope(sigma: f64) -> Result<f64> {
    let h = 1e-4;
    let up = gaussian_increment_factor(sigma * (1.0 + h), 0.0)?;
    let down = gaussian_increment_factor(sigma * (1.0 - h), 0.0)?;
    Ok((up.ln() - down.ln()) / ((1.0 + h).ln() - (1.0 - h).ln()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundName {
    Pinsker,
    Theorem1,
    Theorem2,
    Theorem3,
    /// Gaussian bound with the increment mean forced to zero.
    Centered,
    /// `min(pinsker, theorem3)`.
    Composite,
}

impl BoundName {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundName::Pinsker => "pinsker",
            BoundName::Theorem1 => "theorem1",
            BoundName::Theorem2 => "theorem2",
            BoundName::Theorem3 => "theorem3",
            BoundName::Centered => "centered",
            BoundName::Composite => "composite",
        }
    }
}

impl fmt::Display for BoundName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the contraction constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "source", content = "value")]
pub enum RSource {
    /// `1 - gamma` from the exact spectral gap of the unperturbed kernel.
    Spectral,
    User(f64),
    Zero,
}

impl RSource {
    pub fn name(self) -> &'static str {
        match self {
            RSource::Spectral => "spectral",
            RSource::User(_) => "user",
            RSource::Zero => "zero",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: BoundName,
    pub sigma: f64,
    pub mu: f64,
    pub r: f64,
    pub r_source: &'static str,
    pub exact: f64,
    pub bound: f64,
    pub holds: bool,
}

impl BoundReport {
    pub fn new(name: BoundName, (sigma, mu, r): (f64, f64, f64), r_source: RSource, exact: f64, bound: f64) -> Self {
        Self {
            bound_name: name,
            sigma,
            mu,
            r,
            r_source: r_source.name(),
            exact,
            bound,
            holds: exact <= bound + HOLD_TOL,
        }
    }
}

pub const REPORT_COLUMNS: [&str; 8] = ["bound_name", "sigma", "mu", "r", "exact", "bound", "holds", "r_source"];

/// Writes reports as CSV with the [`REPORT_COLUMNS`] header.
pub fn write_reports_csv(reports: &[BoundReport], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", REPORT_COLUMNS.join(","))?;
    for r in reports {
        writeln!(
            out,
            "{},{:.14e},{:.14e},{:.14e},{:.14e},{:.14e},{},{}",
            r.bound_name, r.sigma, r.mu, r.r, r.exact, r.bound, r.holds, r.r_source
        )?;
    }
    Ok(())
}

/// `|| pi' (P~ - P) ||_TV`.
pub fn kernel_difference_tv(pi_prime: &[f64], p: &DenseKernel, p_tilde: &DenseKernel) -> Result<f64> {
    let d = p.dim();
    if p_tilde.dim() != d || pi_prime.len() != d {
        return Err(Error::SizeMismatch { expected: d, found: pi_prime.len() });
    }
    let (a, b) = (p.matrix(), p_tilde.matrix());
    let total: f64 = (0..d)
        .map(|y| (0..d).map(|x| pi_prime[x] * (b[(x, y)] - a[(x, y)])).sum::<f64>().abs())
        .sum();
    Ok(0.5 * total)
}

fn move_increments(
    states: &[SpinConfiguration],
    delta: &[f64],
    proposal: Proposal,
    mut f: impl FnMut(usize, f64, f64),
) -> Result<()> {
    let index: std::collections::HashMap<u64, usize> =
        states.iter().enumerate().map(|(k, x)| (x.encoding(), k)).collect();
    let n = states.first().map_or(0, |x| x.len());
    let q = 1.0 / proposal.n_moves(n) as f64;
    for (r, &x) in states.iter().enumerate() {
        let mut visit = |y: SpinConfiguration| -> Result<()> {
            let c = *index
                .get(&y.encoding())
                .ok_or_else(|| Error::Domain(format!("proposal leaves the state space at {y}")))?;
            f(r, q, delta[c] - delta[r]);
            Ok(())
        };
        match proposal {
            Proposal::SingleFlip => (0..n).try_for_each(|i| visit(x.flipped(i)))?,
            Proposal::Exchange { .. } => {
                for i in 0..n {
                    for j in i + 1..n {
                        visit(x.exchanged(i, j))?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// `1 - Σ_y E_{x~pi'}[q(y|x) e^{-|delta(y) - delta(x)|}]`.
pub fn theorem2_bound_value(
    pi_prime: &[f64],
    states: &[SpinConfiguration],
    delta: &[f64],
    proposal: Proposal,
) -> Result<f64> {
    let mut mass = 0.0;
    move_increments(states, delta, proposal, |x, q, eps| mass += pi_prime[x] * q * (-eps.abs()).exp())?;
    Ok((1.0 - mass).max(0.0))
}

/// Theorem 2 with exact kernels: the kernel difference seen from `pi_prime`
/// against its increment bound.
pub fn theorem2_kernel_diff_bound(target: &PerturbedTarget, pi_prime: &[f64], proposal: Proposal) -> Result<BoundReport> {
    let p = build_kernel_from_log_probs(target.states.clone(), &target.base_log_prob, proposal)?;
    let p_tilde = build_kernel_from_log_probs(target.states.clone(), &target.perturbed_log_prob(), proposal)?;
    let exact = kernel_difference_tv(pi_prime, &p, &p_tilde)?;
    let bound = theorem2_bound_value(pi_prime, &target.states, &target.delta, proposal)?;
    let (sigma, mu) = increment_fit(target, proposal)?;
    Ok(BoundReport::new(BoundName::Theorem2, (sigma, mu, f64::NAN), RSource::Zero, exact, bound))
}

/// Theorem 1 from the two exact kernels: `||pi~ - pi||` against
/// `||pi~ (P~ - P)|| / (1 - r)`.
pub fn theorem1_stationary_bound(p: &DenseKernel, p_tilde: &DenseKernel, r: f64, r_source: RSource) -> Result<BoundReport> {
    check_r(r)?;
    let pi = stationary_distribution(p)?;
    let pi_tilde = stationary_distribution(p_tilde)?;
    let exact = tv_distance(&pi_tilde, &pi)?;
    let diff = kernel_difference_tv(&pi_tilde, p, p_tilde)?;
    let bound = if diff == 0.0 { 0.0 } else { diff / (1.0 - r) };
    Ok(BoundReport::new(BoundName::Theorem1, (f64::NAN, f64::NAN, r), r_source, exact, bound))
}

/// Mean and `std / sqrt 2` of `eps(X, Y)` for `X ~ pi~`, `Y ~ q(.|X)`.
pub fn increment_fit(target: &PerturbedTarget, proposal: Proposal) -> Result<(f64, f64)> {
    let (mut m1, mut m2) = (0.0, 0.0);
    let pt = &target.pi_tilde;
    move_increments(&target.states, &target.delta, proposal, |x, q, eps| {
        m1 += pt[x] * q * eps;
        m2 += pt[x] * q * eps * eps;
    })?;
    let var = (m2 - m1 * m1).max(0.0);
    Ok(((var / 2.0).sqrt(), m1))
}

/// Mean and standard deviation of `delta` under `pi`.
pub fn delta_moments(target: &PerturbedTarget) -> (f64, f64) {
    let mean: f64 = target.pi.iter().zip(&target.delta).map(|(p, d)| p * d).sum();
    let var: f64 = target.pi.iter().zip(&target.delta).map(|(p, d)| p * (d - mean).powi(2)).sum();
    (mean, var.sqrt())
}

/// Every bound on one enumerable instance.
pub fn evaluate_all_bounds(target: &PerturbedTarget, proposal: Proposal, r_source: RSource) -> Result<Vec<BoundReport>> {
    let states = target.states.clone();
    let p = build_kernel_from_log_probs(states.clone(), &target.base_log_prob, proposal)?;
    let p_tilde = build_kernel_from_log_probs(states, &target.perturbed_log_prob(), proposal)?;
    let r = match r_source {
        RSource::Spectral => {
            let pi = stationary_distribution(&p)?;
            spectral_gap(&p, &pi)?.0
        }
        RSource::User(r) => r,
        RSource::Zero => 0.0,
    };
    check_r(r)?;
    let t1 = theorem1_stationary_bound(&p, &p_tilde, r, r_source)?;
    let exact_tv = t1.exact;
    let (delta_mean, delta_std) = delta_moments(target);
    let pinsker = BoundReport::new(
        BoundName::Pinsker,
        (delta_std, delta_mean, f64::NAN),
        r_source,
        exact_tv,
        pinsker_tv_bound(delta_std),
    );
    let t2_exact = kernel_difference_tv(&target.pi_tilde, &p, &p_tilde)?;
    let t2_bound = theorem2_bound_value(&target.pi_tilde, &target.states, &target.delta, proposal)?;
    let (sigma, mu) = increment_fit(target, proposal)?;
    let t2 = BoundReport::new(BoundName::Theorem2, (sigma, mu, f64::NAN), r_source, t2_exact, t2_bound);
    let t3_value = theorem3_gaussian_bound(sigma, mu, r)?;
    let t3 = BoundReport::new(BoundName::Theorem3, (sigma, mu, r), r_source, exact_tv, t3_value);
    let centered = BoundReport::new(
        BoundName::Centered,
        (sigma, 0.0, r),
        r_source,
        exact_tv,
        theorem3_gaussian_bound(sigma, 0.0, r)?,
    );
    let composite = BoundReport::new(
        BoundName::Composite,
        (sigma, mu, r),
        r_source,
        exact_tv,
        pinsker.bound.min(t3_value),
    );
    Ok(vec![pinsker, t1, t2, t3, centered, composite])
}
