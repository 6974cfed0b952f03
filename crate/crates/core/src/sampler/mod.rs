//! Metropolis–Hastings over spin configurations.
//!
//! Chains are independent and each owns a ChaCha stream derived from
//! `(seed, chain index)`, so results do not depend on thread scheduling.

mod kernel;

use rand::Rng;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{NoiseField, RbmParameters, RoundedRbm};
use crate::error::{Error, Result};
use crate::lattice::SpinConfiguration;
use crate::rng::substream;

pub use kernel::{
    build_kernel, build_kernel_from_log_probs, distance_to_stationarity, doeblin_coefficient,
    expected_acceptance, for_each_move, mixing_time_bound, proposal_states, spectral_gap, stationary_distribution,
    DenseKernel,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Proposal {
    /// One of the `N` single-site flips, uniformly.
    SingleFlip,
    /// Swap of a uniformly chosen unordered site pair; confined to the
    /// sector with `hamming_weight` set bits.
    Exchange { hamming_weight: u32 },
}

impl Proposal {
    pub fn name(self) -> &'static str {
        match self {
            Proposal::SingleFlip => "flip",
            Proposal::Exchange { .. } => "exchange",
        }
    }

    /// Number of equally likely moves from any state.
    pub fn n_moves(self, n: usize) -> usize {
        match self {
            Proposal::SingleFlip => n,
            Proposal::Exchange { .. } => n * (n - 1) / 2,
        }
    }

    pub fn draw(self, x: SpinConfiguration, rng: &mut impl Rng) -> SpinConfiguration {
        let n = x.len();
        match self {
            Proposal::SingleFlip => x.flipped(rng.random_range(0..n)),
            Proposal::Exchange { .. } => {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                x.exchanged(i, j)
            }
        }
    }

    /// Uniform draw from the proposal's state space.
    pub fn initial_state(self, n: usize, rng: &mut impl Rng) -> SpinConfiguration {
        let bits = match self {
            Proposal::SingleFlip => rng.random::<u64>() & mask(n),
            Proposal::Exchange { hamming_weight } => sample(rng, n, hamming_weight as usize)
                .into_iter()
                .fold(0u64, |acc, i| acc | 1 << i),
        };
        SpinConfiguration::from_raw(bits, n)
    }

    pub fn validate(self, n: usize) -> Result<()> {
        match self {
            Proposal::SingleFlip if n == 0 => Err(Error::Domain("empty system".into())),
            Proposal::Exchange { hamming_weight } if n < 2 || hamming_weight as usize > n => Err(
                Error::Domain(format!("exchange sector {hamming_weight} invalid for N = {n}")),
            ),
            _ => Ok(()),
        }
    }
}

fn mask(n: usize) -> u64 {
    if n >= 64 { u64::MAX } else { (1u64 << n) - 1 }
}

/// Unnormalized log-probability of a configuration.
pub trait LogProb: Sync {
    fn n_sites(&self) -> usize;
    fn log_prob(&self, x: SpinConfiguration) -> Result<f64>;
}

/// Log-probabilities indexed by configuration encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct TableLogProb {
    n: usize,
    values: Vec<f64>,
}

impl TableLogProb {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 1 << n {
            return Err(Error::SizeMismatch { expected: 1 << n, found: values.len() });
        }
        Ok(Self { n, values })
    }

    /// Tabulates any evaluator over all `2^n` configurations.
    pub fn tabulate(source: &impl LogProb) -> Result<Self> {
        let n = source.n_sites();
        let values = crate::lattice::enumerate_states(n)?
            .into_par_iter()
            .map(|x| source.log_prob(x))
            .collect::<Result<_>>()?;
        Self::new(n, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl LogProb for TableLogProb {
    fn n_sites(&self) -> usize {
        self.n
    }

    #[inline]
    fn log_prob(&self, x: SpinConfiguration) -> Result<f64> {
        Ok(self.values[x.encoding() as usize])
    }
}

impl LogProb for RbmParameters {
    fn n_sites(&self) -> usize {
        self.n_visible()
    }

    fn log_prob(&self, x: SpinConfiguration) -> Result<f64> {
        Ok(2.0 * self.log_psi_f64(x).re)
    }
}

impl LogProb for RoundedRbm {
    fn n_sites(&self) -> usize {
        self.n_visible()
    }

    /// A configuration whose amplitude underflows has probability zero.
    fn log_prob(&self, x: SpinConfiguration) -> Result<f64> {
        match RoundedRbm::log_prob(self, x) {
            Err(Error::AmplitudeUnderflow { .. }) => Ok(f64::NEG_INFINITY),
            other => other,
        }
    }
}

/// A base target moved by a frozen noise field: `log p(x) + zeta(x)`.
#[derive(Clone, Debug)]
pub struct NoisyLogProb<L> {
    pub base: L,
    pub noise: NoiseField,
}

impl<L: LogProb> LogProb for NoisyLogProb<L> {
    fn n_sites(&self) -> usize {
        self.base.n_sites()
    }

    fn log_prob(&self, x: SpinConfiguration) -> Result<f64> {
        Ok(self.base.log_prob(x)? + self.noise.value(x))
    }
}

impl<L: LogProb> LogProb for &L {
    fn n_sites(&self) -> usize {
        (**self).n_sites()
    }

    fn log_prob(&self, x: SpinConfiguration) -> Result<f64> {
        (**self).log_prob(x)
    }
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub current: SpinConfiguration,
    pub log_prob: f64,
    pub rng: ChaCha8Rng,
    pub accepted: u64,
    pub proposed: u64,
}

impl ChainState {
    pub fn new(current: SpinConfiguration, logprob: &impl LogProb, rng: ChaCha8Rng) -> Result<Self> {
        let log_prob = logprob
            .log_prob(current)
            .map_err(|e| Error::Evaluator { config: current, source: Box::new(e) })?;
        Ok(Self { current, log_prob, rng, accepted: 0, proposed: 0 })
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed as f64
    }
}

/// One proposal and accept/reject decision. The uniform variate is drawn on
/// every step so that chains under different targets stay aligned.
pub fn mh_step(state: &mut ChainState, logprob: &impl LogProb, proposal: Proposal) -> Result<()> {
    let y = proposal.draw(state.current, &mut state.rng);
    let u: f64 = state.rng.random();
    state.proposed += 1;
    if y == state.current {
        state.accepted += 1;
        return Ok(());
    }
    let lp_y = logprob
        .log_prob(y)
        .map_err(|e| Error::Evaluator { config: y, source: Box::new(e) })?;
    if u < (lp_y - state.log_prob).exp() {
        state.current = y;
        state.log_prob = lp_y;
        state.accepted += 1;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_chains: usize,
    /// Total over all chains; must be a multiple of `n_chains`.
    pub n_samples: usize,
    pub burn_in_sweeps: usize,
    pub thin_sweeps: usize,
    pub seed: u64,
}

impl ChainConfig {
    /// The default ratio of four samples per chain, burn-in of `10 N`
    /// sweeps and one sweep between samples.
    pub fn with_samples(n_samples: usize, n_sites: usize, seed: u64) -> Self {
        Self {
            n_chains: (n_samples / 4).max(1),
            n_samples,
            burn_in_sweeps: 10 * n_sites,
            thin_sweeps: 1,
            seed,
        }
    }

    pub fn samples_per_chain(&self) -> usize {
        self.n_samples / self.n_chains
    }

    fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_samples == 0 || self.thin_sweeps == 0 {
            return Err(Error::Domain("chain counts must be positive".into()));
        }
        if self.n_samples % self.n_chains != 0 {
            return Err(Error::Domain(format!(
                "{} samples do not divide evenly over {} chains",
                self.n_samples, self.n_chains
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    /// Chain-major: all samples of chain 0, then chain 1, ...
    pub samples: Vec<SpinConfiguration>,
    pub samples_per_chain: usize,
    /// Pooled over the recorded phase of every chain.
    pub acceptance: f64,
    pub final_states: Vec<SpinConfiguration>,
}

impl ChainRun {
    pub fn chain(&self, c: usize) -> &[SpinConfiguration] {
        &self.samples[c * self.samples_per_chain..(c + 1) * self.samples_per_chain]
    }

    pub fn n_chains(&self) -> usize {
        self.final_states.len()
    }
}

/// Runs `config.n_chains` independent chains. Chain `c` uses the stream
/// `(config.seed, "chain", c)` and, when given, starts from `initial[c]`.
pub fn run_chains(
    config: &ChainConfig,
    logprob: &impl LogProb,
    proposal: Proposal,
    initial: Option<&[SpinConfiguration]>,
) -> Result<ChainRun> {
    config.validate()?;
    let n = logprob.n_sites();
    proposal.validate(n)?;
    if let Some(init) = initial {
        if init.len() != config.n_chains {
            return Err(Error::SizeMismatch { expected: config.n_chains, found: init.len() });
        }
    }
    let per_chain = config.samples_per_chain();
    let burn_in = config.burn_in_sweeps * n;
    let thin = config.thin_sweeps * n;
    let outputs: Vec<Result<(Vec<SpinConfiguration>, u64, u64, SpinConfiguration)>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(config.seed, "chain", c as u64);
            let start = match initial {
                Some(init) => init[c],
                None => proposal.initial_state(n, &mut rng),
            };
            let mut state = ChainState::new(start, logprob, rng)?;
            for _ in 0..burn_in {
                mh_step(&mut state, logprob, proposal)?;
            }
            state.accepted = 0;
            state.proposed = 0;
            let mut out = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                for _ in 0..thin {
                    mh_step(&mut state, logprob, proposal)?;
                }
                out.push(state.current);
            }
            Ok((out, state.accepted, state.proposed, state.current))
        })
        .collect();
    let mut samples = Vec::with_capacity(config.n_samples);
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let mut final_states = Vec::with_capacity(config.n_chains);
    for o in outputs {
        let (s, a, p, last) = o?;
        samples.extend(s);
        accepted += a;
        proposed += p;
        final_states.push(last);
    }
    Ok(ChainRun {
        samples,
        samples_per_chain: per_chain,
        acceptance: accepted as f64 / proposed as f64,
        final_states,
    })
}
