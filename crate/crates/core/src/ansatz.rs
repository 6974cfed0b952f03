//! Restricted Boltzmann machine wavefunction.
//!
//! `log psi(x) = a.x + sum_i log cosh(theta_i)` with `theta = W x + b`, for
//! bit inputs `x` in `{0, 1}^N` and complex parameters. The flattened
//! parameter order is `a`, then `b`, then `W` row-major (hidden index major).
//!
//! Reduced-precision evaluation goes through a [`Plan`] so that each
//! elementary operation can be rounded. The direct `f64` path performs the
//! same operations in the same order and is bitwise identical to the plan
//! evaluated in `f64`.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{enumerate_states, SpinConfiguration};
use crate::precision::{evaluate_into, FloatFormat, Plan, RoundingMode};
use crate::rng::{hash2, unit_open};
use crate::special::normal_quantile;
use crate::stats::{moments, shapiro_wilk_subsampled};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbmParameters {
    n_visible: usize,
    n_hidden: usize,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    /// `n_hidden x n_visible`, row-major.
    w: Vec<Complex64>,
}

impl RbmParameters {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Result<Self> {
        if n_visible == 0 || n_hidden == 0 {
            return Err(Error::Domain("RBM needs at least one visible and one hidden unit".into()));
        }
        Ok(Self {
            n_visible,
            n_hidden,
            a: vec![Complex64::default(); n_visible],
            b: vec![Complex64::default(); n_hidden],
            w: vec![Complex64::default(); n_hidden * n_visible],
        })
    }

    /// Hidden layer of `alpha_density * n_visible` units.
    pub fn with_density(n_visible: usize, alpha_density: f64) -> Result<Self> {
        let hidden = alpha_density * n_visible as f64;
        if !(hidden >= 1.0) || hidden.fract() != 0.0 {
            return Err(Error::Domain(format!(
                "alpha_density {alpha_density} gives a non-integral hidden layer for N = {n_visible}"
            )));
        }
        Self::zeros(n_visible, hidden as usize)
    }

    /// Real and imaginary parts drawn independently from `N(0, scale^2)`.
    pub fn random(n_visible: usize, n_hidden: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(n_visible, n_hidden)?;
        let normal = Normal::new(0.0, scale).map_err(|e| Error::Domain(e.to_string()))?;
        for v in p.a.iter_mut().chain(p.b.iter_mut()).chain(p.w.iter_mut()) {
            *v = Complex64::new(normal.sample(rng), normal.sample(rng));
        }
        Ok(p)
    }

    /// Real parts from `N(0, scale^2)`, zero imaginary parts.
    pub fn random_real(n_visible: usize, n_hidden: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut p = Self::zeros(n_visible, n_hidden)?;
        let normal = Normal::new(0.0, scale).map_err(|e| Error::Domain(e.to_string()))?;
        for v in p.a.iter_mut().chain(p.b.iter_mut()).chain(p.w.iter_mut()) {
            *v = Complex64::new(normal.sample(rng), 0.0);
        }
        Ok(p)
    }

    /// Adds `i pi` to the visible bias of each listed site, multiplying the
    /// amplitude by `(-1)^(x_i)` there.
    pub fn add_sign_phases(&mut self, sites: &[usize]) -> Result<()> {
        for &i in sites {
            let a = self.a.get_mut(i).ok_or(Error::SizeMismatch { expected: self.n_visible, found: i + 1 })?;
            a.im += std::f64::consts::PI;
        }
        Ok(())
    }

    pub fn from_parts(a: Vec<Complex64>, b: Vec<Complex64>, w: Vec<Complex64>) -> Result<Self> {
        let (n, m) = (a.len(), b.len());
        if w.len() != n * m {
            return Err(Error::SizeMismatch { expected: n * m, found: w.len() });
        }
        let p = Self { n_visible: n, n_hidden: m, a, b, w };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if self.n_visible == 0 || self.n_hidden == 0 {
            return Err(Error::Domain("empty RBM".into()));
        }
        if self.a.len() != self.n_visible
            || self.b.len() != self.n_hidden
            || self.w.len() != self.n_visible * self.n_hidden
        {
            return Err(Error::SizeMismatch { expected: self.n_params(), found: self.a.len() + self.b.len() + self.w.len() });
        }
        if self.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("non-finite RBM parameter".into()));
        }
        Ok(())
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn alpha_density(&self) -> f64 {
        self.n_hidden as f64 / self.n_visible as f64
    }

    pub fn n_params(&self) -> usize {
        self.n_visible + self.n_hidden + self.n_visible * self.n_hidden
    }

    pub fn visible_bias(&self) -> &[Complex64] {
        &self.a
    }

    pub fn hidden_bias(&self) -> &[Complex64] {
        &self.b
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.w
    }

    pub fn weight(&self, hidden: usize, visible: usize) -> Complex64 {
        self.w[hidden * self.n_visible + visible]
    }

    /// Parameters in flattened order.
    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.a.iter().chain(self.b.iter()).chain(self.w.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Complex64> {
        self.a.iter_mut().chain(self.b.iter_mut()).chain(self.w.iter_mut())
    }

    pub fn to_flat(&self) -> Vec<Complex64> {
        self.iter().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[Complex64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::SizeMismatch { expected: self.n_params(), found: flat.len() });
        }
        for (p, &v) in self.iter_mut().zip(flat) {
            *p = v;
        }
        Ok(())
    }

    /// `theta <- theta - eta * step`.
    pub fn descend(&mut self, step: &[Complex64], eta: f64) -> Result<()> {
        if step.len() != self.n_params() {
            return Err(Error::SizeMismatch { expected: self.n_params(), found: step.len() });
        }
        for (p, &g) in self.iter_mut().zip(step) {
            *p -= g * eta;
        }
        Ok(())
    }

    /// Each parameter rounded to `fmt`, componentwise.
    pub fn downcast(&self, fmt: FloatFormat) -> Self {
        let mut out = self.clone();
        for v in out.iter_mut() {
            *v = Complex64::new(
                crate::precision::round_to_format(v.re, fmt),
                crate::precision::round_to_format(v.im, fmt),
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.check()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check_input(&self, x: SpinConfiguration) -> Result<()> {
        if x.len() != self.n_visible {
            return Err(Error::SizeMismatch { expected: self.n_visible, found: x.len() });
        }
        Ok(())
    }

    /// Hidden pre-activations `W x + b`, accumulated left to right.
    pub fn theta(&self, x: SpinConfiguration) -> Vec<Complex64> {
        let n = self.n_visible;
        (0..self.n_hidden)
            .map(|i| {
                let row = &self.w[i * n..(i + 1) * n];
                let (mut re, mut im) = (self.b[i].re, self.b[i].im);
                for (k, wk) in row.iter().enumerate() {
                    if x.bit(k) == 1 {
                        re += wk.re;
                        im += wk.im;
                    }
                }
                Complex64::new(re, im)
            })
            .collect()
    }

    /// `log psi(x)` in `f64`.
    pub fn log_psi_f64(&self, x: SpinConfiguration) -> Complex64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, ak) in self.a.iter().enumerate() {
            if x.bit(k) == 1 {
                re += ak.re;
                im += ak.im;
            }
        }
        for t in self.theta(x) {
            let lc = log_cosh(t);
            re += lc.re;
            im += lc.im;
        }
        Complex64::new(re, im)
    }
}

/// Principal-branch `log cosh(z)`, evaluated with the same operation
/// sequence as [`Plan::clog_cosh`].
pub fn log_cosh(z: Complex64) -> Complex64 {
    let au = z.re.abs();
    let e = (-2.0 * au).exp();
    let c2v = (2.0 * z.im).cos();
    let arg = 2.0 * (e * c2v) + e * e;
    let re = (au - std::f64::consts::LN_2) + 0.5 * arg.ln_1p();
    let im = (z.re.tanh() * z.im.sin()).atan2(z.im.cos());
    Complex64::new(re, im)
}

/// Operation tape for one RBM shape; inputs are laid out as
/// `[x (N), Re a, Im a, Re b, Im b, Re W, Im W]`.
#[derive(Clone, Debug)]
pub struct RbmPlan {
    plan: Plan,
    n_visible: usize,
    n_hidden: usize,
}

impl RbmPlan {
    pub fn new(n_visible: usize, n_hidden: usize) -> Self {
        let (n, m) = (n_visible, n_hidden);
        let mut plan = Plan::new();
        let x: Vec<_> = (0..n).map(|k| plan.input(k)).collect();
        let a_re = n;
        let a_im = 2 * n;
        let b_re = 3 * n;
        let b_im = 3 * n + m;
        let w_re = 3 * n + 2 * m;
        let w_im = w_re + n * m;
        let zero = plan.constant(0.0);
        let (mut re, mut im) = (zero, zero);
        for k in 0..n {
            let ar = plan.input(a_re + k);
            let ai = plan.input(a_im + k);
            let pr = plan.mul(ar, x[k]);
            let pi = plan.mul(ai, x[k]);
            re = plan.add(re, pr);
            im = plan.add(im, pi);
        }
        for i in 0..m {
            let mut tr = plan.input(b_re + i);
            let mut ti = plan.input(b_im + i);
            for k in 0..n {
                let wr = plan.input(w_re + i * n + k);
                let wi = plan.input(w_im + i * n + k);
                let pr = plan.mul(wr, x[k]);
                let pi = plan.mul(wi, x[k]);
                tr = plan.add(tr, pr);
                ti = plan.add(ti, pi);
            }
            let lc = plan.clog_cosh(crate::precision::ComplexSlot { re: tr, im: ti });
            re = plan.add(re, lc.re);
            im = plan.add(im, lc.im);
        }
        plan.output(re);
        plan.output(im);
        Self { plan, n_visible, n_hidden }
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    fn inputs(&self, params: &RbmParameters) -> Vec<f64> {
        let mut v = vec![0.0; self.n_visible];
        v.extend(params.a.iter().map(|c| c.re));
        v.extend(params.a.iter().map(|c| c.im));
        v.extend(params.b.iter().map(|c| c.re));
        v.extend(params.b.iter().map(|c| c.im));
        v.extend(params.w.iter().map(|c| c.re));
        v.extend(params.w.iter().map(|c| c.im));
        v
    }
}

thread_local! {
    static SCRATCH: std::cell::RefCell<(Vec<f64>, Vec<f64>)> = const { std::cell::RefCell::new((Vec::new(), Vec::new())) };
}

/// Reduced-precision evaluator bound to one parameter snapshot.
#[derive(Clone, Debug)]
pub struct RoundedRbm {
    plan: RbmPlan,
    inputs: Vec<f64>,
    fmt: FloatFormat,
    mode: RoundingMode,
}

impl RoundedRbm {
    pub fn new(params: &RbmParameters, fmt: FloatFormat, mode: RoundingMode) -> Self {
        let plan = RbmPlan::new(params.n_visible, params.n_hidden);
        Self::with_plan(plan, params, fmt, mode)
    }

    pub fn with_plan(plan: RbmPlan, params: &RbmParameters, fmt: FloatFormat, mode: RoundingMode) -> Self {
        assert_eq!((plan.n_visible, plan.n_hidden), (params.n_visible, params.n_hidden));
        let inputs = plan.inputs(params);
        Self { plan, inputs, fmt, mode }
    }

    /// Rebinds to new parameters of the same shape.
    pub fn set_params(&mut self, params: &RbmParameters) {
        self.inputs = self.plan.inputs(params);
    }

    pub fn format(&self) -> FloatFormat {
        self.fmt
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }

    pub fn n_visible(&self) -> usize {
        self.plan.n_visible
    }

    pub fn log_psi(&self, x: SpinConfiguration) -> Result<Complex64> {
        let n = self.plan.n_visible;
        if x.len() != n {
            return Err(Error::SizeMismatch { expected: n, found: x.len() });
        }
        SCRATCH.with_borrow_mut(|(inputs, values)| {
            inputs.clear();
            inputs.extend_from_slice(&self.inputs);
            for (k, v) in inputs[..n].iter_mut().enumerate() {
                *v = x.bit(k) as f64;
            }
            evaluate_into(&self.plan.plan, inputs, self.fmt, self.mode, values)
                .map_err(|e| Error::Evaluator { config: x, source: Box::new(e) })?;
            let outs = self.plan.plan.outputs();
            let re = values[outs[0].index()];
            let im = values[outs[1].index()];
            if re == f64::NEG_INFINITY && im.is_finite() {
                return Err(Error::AmplitudeUnderflow { config: x });
            }
            if !re.is_finite() || !im.is_finite() {
                let index = values.iter().position(|v| !v.is_finite()).unwrap_or(0);
                let op = self.plan.plan.ops()[index].name();
                return Err(Error::Evaluator {
                    config: x,
                    source: Box::new(Error::EvaluationFailure { op_index: index, op }),
                });
            }
            Ok(Complex64::new(re, im))
        })
    }

    pub fn log_prob(&self, x: SpinConfiguration) -> Result<f64> {
        Ok(2.0 * self.log_psi(x)?.re)
    }
}

/// `log psi(x)` under `(fmt, mode)`; `f64` is the exact reference.
pub fn log_psi(params: &RbmParameters, x: SpinConfiguration, fmt: FloatFormat, mode: RoundingMode) -> Result<Complex64> {
    params.check_input(x)?;
    if fmt.is_f64() {
        return Ok(params.log_psi_f64(x));
    }
    RoundedRbm::new(params, fmt, mode).log_psi(x)
}

/// `log p(x) = 2 Re log psi(x)`, unnormalized.
pub fn log_prob(params: &RbmParameters, x: SpinConfiguration, fmt: FloatFormat, mode: RoundingMode) -> Result<f64> {
    Ok(2.0 * log_psi(params, x, fmt, mode)?.re)
}

/// `d log psi / d theta` in flattened order, in `f64`.
pub fn grad_log_psi(params: &RbmParameters, x: SpinConfiguration) -> Result<Vec<Complex64>> {
    params.check_input(x)?;
    let mut out = Vec::with_capacity(params.n_params());
    grad_log_psi_into(params, x, &mut out);
    Ok(out)
}

pub(crate) fn grad_log_psi_into(params: &RbmParameters, x: SpinConfiguration, out: &mut Vec<Complex64>) {
    out.clear();
    let n = params.n_visible;
    let bits: Vec<f64> = (0..n).map(|k| x.bit(k) as f64).collect();
    out.extend(bits.iter().map(|&b| Complex64::new(b, 0.0)));
    let t: Vec<Complex64> = params.theta(x).into_iter().map(|z| z.tanh()).collect();
    out.extend(t.iter().copied());
    for ti in &t {
        out.extend(bits.iter().map(|&b| ti * b));
    }
}

/// Frozen Gaussian perturbation of the log-density.
///
/// `zeta(x) = sigma * Phi^{-1}(u(seed, x))` where `u` is a counter-based hash
/// of the configuration encoding, so the value for a configuration never
/// changes between evaluations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseField {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseField {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("noise sigma {sigma} must be finite and non-negative")));
        }
        Ok(Self { sigma, seed })
    }

    /// Perturbation `zeta(x)` of the log-density.
    pub fn value(&self, x: SpinConfiguration) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        self.sigma * normal_quantile(unit_open(hash2(self.seed, x.encoding())))
    }
}

/// `log psi(x) + zeta(x) / 2`, so the log-density moves by exactly `zeta(x)`.
pub fn noisy_log_psi(params: &RbmParameters, x: SpinConfiguration, noise: &NoiseField) -> Result<Complex64> {
    params.check_input(x)?;
    Ok(params.log_psi_f64(x) + 0.5 * noise.value(x))
}

/// Anything that can produce `log psi(x)` in working precision.
pub trait LogAmplitude: Sync {
    fn n_sites(&self) -> usize;
    fn log_psi(&self, x: SpinConfiguration) -> Result<Complex64>;
}

impl LogAmplitude for RbmParameters {
    fn n_sites(&self) -> usize {
        self.n_visible
    }

    fn log_psi(&self, x: SpinConfiguration) -> Result<Complex64> {
        Ok(self.log_psi_f64(x))
    }
}

/// Table of log-amplitudes indexed by configuration encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct LookupAmplitude {
    n: usize,
    values: Vec<Complex64>,
}

impl LookupAmplitude {
    pub fn new(n: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != 1 << n {
            return Err(Error::SizeMismatch { expected: 1 << n, found: values.len() });
        }
        Ok(Self { n, values })
    }

    /// Log-amplitudes of a real vector; negative entries get phase `pi`.
    pub fn from_real_amplitudes(n: usize, psi: &[f64]) -> Result<Self> {
        let values = psi
            .iter()
            .map(|&v| {
                let phase = if v < 0.0 { std::f64::consts::PI } else { 0.0 };
                Complex64::new(v.abs().ln(), phase)
            })
            .collect();
        Self::new(n, values)
    }

    /// Tabulates any amplitude over all `2^n` configurations.
    pub fn tabulate(amp: &impl LogAmplitude) -> Result<Self> {
        let n = amp.n_sites();
        let values = enumerate_states(n)?.into_par_iter().map(|x| amp.log_psi(x)).collect::<Result<_>>()?;
        Self::new(n, values)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

impl LogAmplitude for RoundedRbm {
    fn n_sites(&self) -> usize {
        self.plan.n_visible
    }

    /// An amplitude that underflows to zero maps to `-inf`.
    fn log_psi(&self, x: SpinConfiguration) -> Result<Complex64> {
        match RoundedRbm::log_psi(self, x) {
            Err(Error::AmplitudeUnderflow { .. }) => Ok(Complex64::new(f64::NEG_INFINITY, 0.0)),
            other => other,
        }
    }
}

impl LogAmplitude for LookupAmplitude {
    fn n_sites(&self) -> usize {
        self.n
    }

    fn log_psi(&self, x: SpinConfiguration) -> Result<Complex64> {
        if x.len() != self.n {
            return Err(Error::SizeMismatch { expected: self.n, found: x.len() });
        }
        Ok(self.values[x.encoding() as usize])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Absent when `delta` is constant.
    pub shapiro_wilk_w: Option<f64>,
    /// Number of values the statistic used.
    pub shapiro_wilk_n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaDistribution {
    /// `delta(x)` in enumeration order.
    pub delta: Vec<f64>,
    pub summary: DeltaSummary,
}

/// Log-density error of `(fmt, mode)` relative to `f64` over every
/// configuration.
pub fn delta_distribution(params: &RbmParameters, fmt: FloatFormat, mode: RoundingMode) -> Result<DeltaDistribution> {
    let states = enumerate_states(params.n_visible)?;
    let rounded = RoundedRbm::new(params, fmt, mode);
    let delta = states
        .iter()
        .map(|&x| Ok(rounded.log_prob(x)? - 2.0 * params.log_psi_f64(x).re))
        .collect::<Result<Vec<f64>>>()?;
    let summary = summarize_delta(&delta)?;
    Ok(DeltaDistribution { delta, summary })
}

pub fn summarize_delta(delta: &[f64]) -> Result<DeltaSummary> {
    let mo = moments(delta)?;
    let (w, n) = if mo.std > 0.0 {
        let r = shapiro_wilk_subsampled(delta, delta.len() as u64)?;
        (Some(r.w), r.n)
    } else {
        (None, 0)
    };
    Ok(DeltaSummary {
        mean: mo.mean,
        std: mo.std,
        skewness: mo.skewness,
        excess_kurtosis: mo.excess_kurtosis,
        shapiro_wilk_w: w,
        shapiro_wilk_n: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> RbmParameters {
        RbmParameters::random(n, m, 0.3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero() {
        let p = RbmParameters::zeros(5, 5).unwrap();
        for x in enumerate_states(5).unwrap() {
            assert_eq!(p.log_psi_f64(x), Complex64::new(0.0, 0.0));
            assert_eq!(log_prob(&p, x, FloatFormat::BF16, RoundingMode::PerOperation).unwrap(), 0.0);
        }
    }

    #[test]
    fn hidden_bias_only_is_constant() {
        let mut p = RbmParameters::zeros(4, 3).unwrap();
        let b = vec![Complex64::new(0.3, -0.2), Complex64::new(-1.1, 0.4), Complex64::new(2.0, 0.0)];
        p.b.clone_from(&b);
        let expected: Complex64 = b.iter().map(|z| z.cosh().ln()).sum();
        for x in enumerate_states(4).unwrap() {
            assert!((p.log_psi_f64(x) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn phase_only_state_is_uniform() {
        let mut p = RbmParameters::zeros(4, 4).unwrap();
        for (k, a) in p.a.iter_mut().enumerate() {
            *a = Complex64::new(0.0, 0.7 * k as f64 - 1.0);
        }
        for x in enumerate_states(4).unwrap() {
            assert_eq!(log_prob(&p, x, FloatFormat::F64, RoundingMode::PerOperation).unwrap(), 0.0);
        }
    }

    #[test]
    fn plan_in_f64_is_bitwise_direct() {
        let p = random(6, 6, 3);
        let rounded = RoundedRbm::new(&p, FloatFormat::F64, RoundingMode::PerOperation);
        for x in enumerate_states(6).unwrap() {
            let a = rounded.log_psi(x).unwrap();
            let b = p.log_psi_f64(x);
            assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
        }
    }

    #[test]
    fn matches_independent_summation() {
        let p = random(6, 6, 4);
        for x in enumerate_states(6).unwrap() {
            // reverse-order summation with library complex functions
            let mut total = Complex64::new(0.0, 0.0);
            for i in (0..6).rev() {
                let mut t = p.b[i];
                for k in (0..6).rev() {
                    t += p.weight(i, k) * x.bit(k) as f64;
                }
                total += t.cosh().ln();
            }
            for k in (0..6).rev() {
                total += p.a[k] * x.bit(k) as f64;
            }
            let got = p.log_psi_f64(x);
            // the imaginary part is defined modulo 2 pi per hidden unit
            assert!(((got.re - total.re) / total.re).abs() < 1e-13);
            let dphase = (got.im - total.im) / (2.0 * std::f64::consts::PI);
            assert!((dphase - dphase.round()).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_zero_parameters() {
        let p = RbmParameters::zeros(3, 3).unwrap();
        let x = SpinConfiguration::new(0b111, 3).unwrap();
        let g = grad_log_psi(&p, x).unwrap();
        assert!(g[..3].iter().all(|&v| v == Complex64::new(1.0, 0.0)));
        assert!(g[3..].iter().all(|&v| v == Complex64::new(0.0, 0.0)));
        let q = random(3, 3, 1);
        let g = grad_log_psi(&q, SpinConfiguration::new(0, 3).unwrap()).unwrap();
        assert!(g[..3].iter().all(|v| v.norm() == 0.0));
        assert!(g[6..].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn noise_is_frozen_per_configuration() {
        let p = random(5, 5, 2);
        let x = SpinConfiguration::new(0b10110, 5).unwrap();
        let noise = NoiseField::new(0.7, 99).unwrap();
        let a = noisy_log_psi(&p, x, &noise).unwrap();
        let b = noisy_log_psi(&p, x, &noise).unwrap();
        assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
        let silent = NoiseField::new(0.0, 99).unwrap();
        assert_eq!(noisy_log_psi(&p, x, &silent).unwrap(), p.log_psi_f64(x));
        assert!(NoiseField::new(-0.1, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = random(4, 8, 5);
        let q = RbmParameters::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.alpha_density(), 2.0);
        assert!(RbmParameters::with_density(5, 0.5).is_err());
        assert_eq!(RbmParameters::with_density(6, 0.5).unwrap().n_hidden(), 3);
    }

    #[test]
    fn f64_delta_is_zero() {
        let d = delta_distribution(&random(6, 6, 8), FloatFormat::F64, RoundingMode::PerOperation).unwrap();
        assert!(d.delta.iter().all(|&v| v == 0.0));
        assert_eq!(d.summary.std, 0.0);
        assert!(d.summary.shapiro_wilk_w.is_none());
    }
}
