use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{LogProb, Proposal};
use crate::error::{Error, Result};
use crate::lattice::{enumerate_states, SpinConfiguration};

const REVERSIBILITY_TOL: f64 = 1e-10;

/// Row-stochastic transition matrix over an explicit list of states.
///
/// For single-flip proposals the states are all of `{0,1}^n` in
/// enumeration order; for exchange proposals they are the configurations of
/// the conserved sector, in ascending encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseKernel {
    states: Vec<SpinConfiguration>,
    matrix: DMatrix<f64>,
}

impl DenseKernel {
    pub fn new(states: Vec<SpinConfiguration>, matrix: DMatrix<f64>) -> Result<Self> {
        let d = states.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::SizeMismatch { expected: d, found: matrix.nrows() });
        }
        for (r, row) in matrix.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&v| v < 0.0) {
                return Err(Error::Domain(format!("row {r} is not a probability vector (sum {sum})")));
            }
        }
        Ok(Self { states, matrix })
    }

    pub fn states(&self) -> &[SpinConfiguration] {
        &self.states
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }
}

/// State space visited by `proposal` on `n` sites.
pub fn proposal_states(proposal: Proposal, n: usize) -> Result<Vec<SpinConfiguration>> {
    let all = enumerate_states(n)?;
    Ok(match proposal {
        Proposal::SingleFlip => all,
        Proposal::Exchange { hamming_weight } => {
            all.into_iter().filter(|x| x.hamming_weight() == hamming_weight).collect()
        }
    })
}

/// Calls `f` on every configuration the proposal can reach from `x`, each
/// with probability `1 / proposal.n_moves(N)`.
pub fn for_each_move(proposal: Proposal, x: SpinConfiguration, mut f: impl FnMut(SpinConfiguration)) {
    let n = x.len();
    match proposal {
        Proposal::SingleFlip => (0..n).for_each(|i| f(x.flipped(i))),
        Proposal::Exchange { .. } => {
            for i in 0..n {
                for j in i + 1..n {
                    f(x.exchanged(i, j));
                }
            }
        }
    }
}

/// `P(x, y) = q(y|x) min(1, e^{lp(y) - lp(x)})` off the diagonal; the
/// diagonal completes each row. `log_probs[k]` belongs to `states[k]`.
pub fn build_kernel_from_log_probs(
    states: Vec<SpinConfiguration>,
    log_probs: &[f64],
    proposal: Proposal,
) -> Result<DenseKernel> {
    let d = states.len();
    if log_probs.len() != d {
        return Err(Error::SizeMismatch { expected: d, found: log_probs.len() });
    }
    let n = states.first().map_or(0, |x| x.len());
    let index: std::collections::HashMap<u64, usize> =
        states.iter().enumerate().map(|(k, x)| (x.encoding(), k)).collect();
    let q = 1.0 / proposal.n_moves(n) as f64;
    let mut m = DMatrix::zeros(d, d);
    for (r, &x) in states.iter().enumerate() {
        let mut off = 0.0;
        let mut err = None;
        for_each_move(proposal, x, |y| {
            if y == x {
                return;
            }
            let Some(&c) = index.get(&y.encoding()) else {
                err = Some(Error::Domain(format!("proposal leaves the state space at {y}")));
                return;
            };
            let p = q * (log_probs[c] - log_probs[r]).exp().min(1.0);
            m[(r, c)] += p;
            off += p;
        });
        if let Some(e) = err {
            return Err(e);
        }
        m[(r, r)] = (1.0 - off).max(0.0);
    }
    DenseKernel::new(states, m)
}

pub fn build_kernel(logprob: &impl LogProb, proposal: Proposal) -> Result<DenseKernel> {
    let states = proposal_states(proposal, logprob.n_sites())?;
    let log_probs = states.iter().map(|&x| logprob.log_prob(x)).collect::<Result<Vec<_>>>()?;
    build_kernel_from_log_probs(states, &log_probs, proposal)
}

fn reachable(p: &DMatrix<f64>, transpose: bool) -> Option<usize> {
    let d = p.nrows();
    let mut seen = vec![false; d];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..d {
            let w = if transpose { p[(v, u)] } else { p[(u, v)] };
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.iter().position(|&s| !s)
}

/// Left fixed point of `P`, normalized.
pub fn stationary_distribution(kernel: &DenseKernel) -> Result<Vec<f64>> {
    let p = &kernel.matrix;
    let d = p.nrows();
    if let Some(u) = reachable(p, false).or_else(|| reachable(p, true)) {
        return Err(Error::ReducibleKernel { unreachable: u });
    }
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = p.transpose() - DMatrix::identity(d, d);
    a.row_mut(d - 1).fill(1.0);
    let mut rhs = DVector::zeros(d);
    rhs[d - 1] = 1.0;
    let pi = a.lu().solve(&rhs).ok_or(Error::SingularSystem { min_eigenvalue: 0.0 })?;
    let mut pi: Vec<f64> = pi.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= sum);
    let residual: f64 = (0..d)
        .map(|y| ((0..d).map(|x| pi[x] * p[(x, y)]).sum::<f64>() - pi[y]).abs())
        .sum();
    if residual > 1e-10 {
        return Err(Error::NotNormalized { sum: 1.0 + residual });
    }
    Ok(pi)
}

/// `(rho, gamma)` with `rho` the second-largest eigenvalue modulus of a
/// reversible kernel and `gamma = 1 - rho`.
pub fn spectral_gap(kernel: &DenseKernel, pi: &[f64]) -> Result<(f64, f64)> {
    let p = &kernel.matrix;
    let d = p.nrows();
    if pi.len() != d {
        return Err(Error::SizeMismatch { expected: d, found: pi.len() });
    }
    let mut violation = 0.0f64;
    for x in 0..d {
        for y in x + 1..d {
            violation = violation.max((pi[x] * p[(x, y)] - pi[y] * p[(y, x)]).abs());
        }
    }
    if violation > REVERSIBILITY_TOL {
        return Err(Error::NotReversible { violation });
    }
    if d == 1 {
        return Ok((0.0, 1.0));
    }
    let s: Vec<f64> = pi.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(d, d, |x, y| {
        let l = s[x] * p[(x, y)] / s[y];
        let r = s[y] * p[(y, x)] / s[x];
        0.5 * (l + r)
    });
    let mut ev: Vec<f64> = SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or(Error::EigenNonConvergence)?
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let rho = ev[1].abs().max(ev[d - 1].abs()).min(1.0);
    Ok((rho, 1.0 - rho))
}

/// `(xi, r)` with `xi = sum_y min_x P(x, y)` and `r = 1 - xi`.
pub fn doeblin_coefficient(kernel: &DenseKernel) -> (f64, f64) {
    let xi: f64 = kernel.matrix.column_iter().map(|c| c.min()).sum();
    let xi = xi.clamp(0.0, 1.0);
    (xi, 1.0 - xi)
}

/// `(1 / gamma) (ln(1/eps) + ln(1/pi_min) / 2)`.
pub fn mixing_time_bound(gamma: f64, pi_min: f64, eps: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) || !(pi_min > 0.0 && pi_min <= 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!(
            "mixing-time bound needs gamma, pi_min in (0,1] and eps in (0,1), got ({gamma}, {pi_min}, {eps})"
        )));
    }
    Ok(((1.0 / eps).ln() + 0.5 * (1.0 / pi_min).ln()) / gamma)
}

/// `max_x || P^t(x, .) - pi ||_TV` for `t = 1..=steps`.
pub fn distance_to_stationarity(kernel: &DenseKernel, pi: &[f64], steps: usize) -> Vec<f64> {
    let p = &kernel.matrix;
    let mut pt = p.clone();
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        if t > 1 {
            pt = &pt * p;
        }
        let worst = pt
            .row_iter()
            .map(|row| 0.5 * row.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        out.push(worst);
    }
    out
}

/// Exact stationary acceptance rate `sum_x pi(x) sum_y q(y|x) min(1, pi(y)/pi(x))`
/// of a chain targeting `log_probs` over `states`.
pub fn expected_acceptance(states: &[SpinConfiguration], log_probs: &[f64], proposal: Proposal) -> Result<f64> {
    let d = states.len();
    if log_probs.len() != d {
        return Err(Error::SizeMismatch { expected: d, found: log_probs.len() });
    }
    let n = states.first().map_or(0, |x| x.len());
    let index: std::collections::HashMap<u64, usize> =
        states.iter().enumerate().map(|(k, x)| (x.encoding(), k)).collect();
    let max = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_probs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    let q = 1.0 / proposal.n_moves(n) as f64;
    let mut total = 0.0;
    for (r, &x) in states.iter().enumerate() {
        if w[r] == 0.0 {
            continue;
        }
        let mut accepted = 0.0;
        let mut err = None;
        // self-proposals of the exchange move count as accepted
        for_each_move(proposal, x, |y| {
            if y == x {
                accepted += q;
                return;
            }
            match index.get(&y.encoding()) {
                Some(&c) => accepted += q * (log_probs[c] - log_probs[r]).exp().min(1.0),
                None => err = Some(Error::Domain(format!("proposal leaves the state space at {y}"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += w[r] / z * accepted;
    }
    Ok(total)
}
