//! Markov-chain sampling of the Born distribution `|ψ(σ)|²` with
//! single-spin-flip Metropolis moves and optional parallel tempering.

use num_complex::Complex64 as C64;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{FlipCache, JastrowParameters};
use crate::error::{Error, Result};
use crate::model::ProblemHamiltonian;
use crate::seeds::{self, Rng};

/// Sweeps between forced recomputations of a chain's cached amplitude data.
pub const REFRESH_INTERVAL: usize = 1000;

/// Largest N accepted by [`exhaustive_sample_set`].
pub const EXHAUSTIVE_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Standard,
    ParallelTempering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub n_chains: usize,
    pub samples_per_chain: usize,
    pub sweeps_between_samples: usize,
    /// Sweeps before the first draw; `10 N` when absent.
    pub thermalization_sweeps: Option<usize>,
    /// Sweeps at the start of every later draw; `2 N` when absent.
    pub reequilibration_sweeps: Option<usize>,
    pub n_replicas: usize,
    pub beta_min: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Standard,
            n_chains: 16,
            samples_per_chain: 256,
            sweeps_between_samples: 1,
            thermalization_sweeps: None,
            reequilibration_sweeps: None,
            n_replicas: 64,
            beta_min: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn n_samples(&self) -> usize {
        self.n_chains * self.samples_per_chain
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.samples_per_chain == 0 || self.sweeps_between_samples == 0 {
            return Err(Error::Config("sampler counts must be positive".into()));
        }
        if self.kind == SamplerKind::ParallelTempering {
            if self.n_replicas < 2 {
                return Err(Error::Config("parallel tempering needs at least two replicas".into()));
            }
            if !(self.beta_min > 0.0 && self.beta_min < 1.0) {
                return Err(Error::Config(format!("beta_min must lie in (0, 1), got {}", self.beta_min)));
            }
        }
        Ok(())
    }

    /// Geometric inverse-temperature ladder from `beta_min` up to 1.
    pub fn beta_ladder(&self) -> Vec<f64> {
        match self.kind {
            SamplerKind::Standard => vec![1.0],
            SamplerKind::ParallelTempering => geometric_ladder(self.beta_min, self.n_replicas),
        }
    }
}

pub fn geometric_ladder(beta_min: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0];
    }
    (0..n).map(|r| beta_min.powf((n - 1 - r) as f64 / (n - 1) as f64)).collect()
}

/// Probability of accepting a flip with log-amplitude ratio `log_ratio` on a
/// chain at inverse temperature `beta`.
pub fn acceptance_probability(log_ratio: C64, beta: f64) -> f64 {
    let a = 2.0 * beta * log_ratio.re;
    if a >= 0.0 {
        1.0
    } else {
        a.exp()
    }
}

/// `min(1, ratio^exponent)`.
pub fn swap_acceptance(ratio: f64, exponent: f64) -> f64 {
    log_swap_acceptance(ratio.ln(), exponent)
}

fn log_swap_acceptance(log_ratio: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        return 1.0;
    }
    let a = exponent * log_ratio;
    if a >= 0.0 {
        1.0
    } else {
        a.exp()
    }
}

/// One Markov chain at a fixed inverse temperature.
#[derive(Debug, Clone)]
pub struct ChainState {
    sigma: Vec<i8>,
    cache: FlipCache,
    pub beta: f64,
    rng: Rng,
    sweeps_since_refresh: usize,
}

impl ChainState {
    pub fn new(psi: &JastrowParameters, sigma: Vec<i8>, beta: f64, rng: Rng) -> Self {
        let cache = FlipCache::new(psi, &sigma);
        ChainState { sigma, cache, beta, rng, sweeps_since_refresh: 0 }
    }

    /// Chain started from a uniformly random configuration drawn from `rng`.
    pub fn random(psi: &JastrowParameters, beta: f64, mut rng: Rng) -> Self {
        let sigma = (0..psi.n_sites()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::new(psi, sigma, beta, rng)
    }

    pub fn sigma(&self) -> &[i8] {
        &self.sigma
    }

    pub fn log_amp(&self) -> C64 {
        self.cache.log_amp
    }

    /// Recomputes the cached data for `psi`.
    pub fn refresh(&mut self, psi: &JastrowParameters) {
        self.cache = FlipCache::new(psi, &self.sigma);
        self.sweeps_since_refresh = 0;
    }

    fn swap_configuration(&mut self, other: &mut ChainState) {
        std::mem::swap(&mut self.sigma, &mut other.sigma);
        std::mem::swap(&mut self.cache, &mut other.cache);
    }
}

/// `N` single-flip proposals at uniformly random sites. Returns the number
/// accepted.
pub fn metropolis_sweep(chain: &mut ChainState, psi: &JastrowParameters) -> usize {
    let n = chain.sigma.len();
    let mut accepted = 0;
    for _ in 0..n {
        let site = chain.rng.random_range(0..n);
        let lr = chain.cache.log_ratio(&chain.sigma, site);
        let a = 2.0 * chain.beta * lr.re;
        let accept = a >= 0.0 || chain.rng.random::<f64>() < a.exp();
        if accept && lr.is_finite() {
            chain.cache.flip(psi, &mut chain.sigma, site);
            accepted += 1;
        }
    }
    chain.sweeps_since_refresh += 1;
    if chain.sweeps_since_refresh >= REFRESH_INTERVAL {
        chain.refresh(psi);
    }
    accepted
}

/// Replicas ordered by increasing β; the last one has β = 1 and is the only
/// one measured.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub replicas: Vec<ChainState>,
    parity: usize,
    rng: Rng,
    pub attempted: u64,
    pub accepted: u64,
}

impl Ladder {
    pub fn new(replicas: Vec<ChainState>, rng: Rng) -> Self {
        Ladder { replicas, parity: 0, rng, attempted: 0, accepted: 0 }
    }

    pub fn measurement(&self) -> &ChainState {
        self.replicas.last().expect("ladder has replicas")
    }
}

/// Attempts exchanges between adjacent replicas, alternating between even
/// and odd pairs on successive calls. Configurations move between slots, the
/// temperatures stay put.
pub fn pt_exchange(ladder: &mut Ladder) {
    let n = ladder.replicas.len();
    let mut r = ladder.parity;
    while r + 1 < n {
        let (lo, hi) = ladder.replicas.split_at_mut(r + 1);
        let (a, b) = (&mut lo[r], &mut hi[0]);
        let log_ratio = 2.0 * (a.log_amp().re - b.log_amp().re);
        let p = log_swap_acceptance(log_ratio, b.beta - a.beta);
        ladder.attempted += 1;
        if p >= 1.0 || ladder.rng.random::<f64>() < p {
            a.swap_configuration(b);
            ladder.accepted += 1;
        }
        r += 2;
    }
    ladder.parity ^= 1;
}

#[derive(Debug, Clone)]
enum Walker {
    Single(ChainState),
    Tempered(Ladder),
}

impl Walker {
    fn sweep(&mut self, psi: &JastrowParameters) -> usize {
        match self {
            Walker::Single(c) => metropolis_sweep(c, psi),
            Walker::Tempered(l) => {
                let mut measured = 0;
                let last = l.replicas.len() - 1;
                for (r, c) in l.replicas.iter_mut().enumerate() {
                    let acc = metropolis_sweep(c, psi);
                    if r == last {
                        measured = acc;
                    }
                }
                pt_exchange(l);
                measured
            }
        }
    }

    fn measurement(&self) -> &ChainState {
        match self {
            Walker::Single(c) => c,
            Walker::Tempered(l) => l.measurement(),
        }
    }

    fn refresh(&mut self, psi: &JastrowParameters) {
        match self {
            Walker::Single(c) => c.refresh(psi),
            Walker::Tempered(l) => l.replicas.iter_mut().for_each(|c| c.refresh(psi)),
        }
    }

    fn exchange_counts(&self) -> (u64, u64) {
        match self {
            Walker::Single(_) => (0, 0),
            Walker::Tempered(l) => (l.attempted, l.accepted),
        }
    }
}

/// Configurations drawn at β = 1, in chain order.
#[derive(Debug, Clone)]
pub struct ConfigurationBatch {
    pub n_sites: usize,
    /// `M × N`, row-major.
    pub configurations: Vec<i8>,
    pub chain_ids: Vec<usize>,
    pub acceptance_rate: f64,
    pub exchange_rate: Option<f64>,
}

/// Persistent set of chains reused (warm-started) across draws.
#[derive(Debug, Clone)]
pub struct MarkovSampler {
    config: SamplerConfig,
    n_sites: usize,
    seed: u64,
    walkers: Vec<Walker>,
}

impl MarkovSampler {
    pub fn new(n_sites: usize, config: SamplerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(MarkovSampler { config, n_sites, seed, walkers: Vec::new() })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    fn initialize(&mut self, psi: &JastrowParameters) {
        let betas = self.config.beta_ladder();
        self.walkers = (0..self.config.n_chains)
            .map(|c| {
                let chain_seed = seeds::derive_seed(self.seed, "chain", c as u64);
                if betas.len() == 1 {
                    Walker::Single(ChainState::random(psi, 1.0, seeds::stream(chain_seed, 0)))
                } else {
                    let replicas = betas
                        .iter()
                        .enumerate()
                        .map(|(r, &b)| ChainState::random(psi, b, seeds::stream(chain_seed, r as u64 + 1)))
                        .collect();
                    Walker::Tempered(Ladder::new(replicas, seeds::stream(chain_seed, 0)))
                }
            })
            .collect();
    }

    /// Runs every chain and records `samples_per_chain` configurations each.
    pub fn draw_configurations(&mut self, psi: &JastrowParameters) -> Result<ConfigurationBatch> {
        if psi.n_sites() != self.n_sites {
            return Err(Error::Dimension { expected: self.n_sites, actual: psi.n_sites() });
        }
        let n = self.n_sites;
        let warmup = if self.walkers.is_empty() {
            self.initialize(psi);
            self.config.thermalization_sweeps.unwrap_or(10 * n)
        } else {
            self.config.reequilibration_sweeps.unwrap_or(2 * n)
        };
        let per_chain = self.config.samples_per_chain;
        let between = self.config.sweeps_between_samples;
        let results: Vec<(Vec<i8>, usize, (u64, u64))> = self
            .walkers
            .par_iter_mut()
            .map(|w| {
                w.refresh(psi);
                let before = w.exchange_counts();
                for _ in 0..warmup {
                    w.sweep(psi);
                }
                let mut configs = Vec::with_capacity(per_chain * n);
                let mut accepted = 0;
                for _ in 0..per_chain {
                    for _ in 0..between {
                        accepted += w.sweep(psi);
                    }
                    configs.extend_from_slice(w.measurement().sigma());
                }
                let after = w.exchange_counts();
                (configs, accepted, (after.0 - before.0, after.1 - before.1))
            })
            .collect();
        let mut configurations = Vec::with_capacity(self.config.n_samples() * n);
        let mut chain_ids = Vec::with_capacity(self.config.n_samples());
        let (mut accepted, mut attempted, mut exchanged) = (0usize, 0u64, 0u64);
        for (c, (configs, acc, (att, exc))) in results.into_iter().enumerate() {
            configurations.extend(configs);
            chain_ids.extend(std::iter::repeat_n(c, per_chain));
            accepted += acc;
            attempted += att;
            exchanged += exc;
        }
        let proposals = (self.config.n_chains * per_chain * between * n).max(1);
        Ok(ConfigurationBatch {
            n_sites: n,
            configurations,
            chain_ids,
            acceptance_rate: accepted as f64 / proposals as f64,
            exchange_rate: (self.config.kind == SamplerKind::ParallelTempering)
                .then(|| exchanged as f64 / attempted.max(1) as f64),
        })
    }

    /// Draws a batch and evaluates local energies and log-derivatives at `t`.
    pub fn draw(&mut self, psi: &JastrowParameters, ham: &ProblemHamiltonian, t: f64) -> Result<SampleSet> {
        let batch = self.draw_configurations(psi)?;
        evaluate_batch(psi, ham, t, batch)
    }
}

/// Fresh chains, thermalized and drawn once.
pub fn draw_sample_set(
    psi: &JastrowParameters,
    ham: &ProblemHamiltonian,
    t: f64,
    config: &SamplerConfig,
    seed: u64,
) -> Result<SampleSet> {
    MarkovSampler::new(psi.n_sites(), config.clone(), seed)?.draw(psi, ham, t)
}

/// Weighted batch of configurations with everything the TDVP estimators
/// need. Monte Carlo batches carry uniform weights; exhaustive batches carry
/// exact Born weights.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub n_sites: usize,
    pub n_params: usize,
    /// `M × N`, row-major.
    pub configurations: Vec<i8>,
    pub weights: Vec<f64>,
    pub log_amplitudes: Vec<C64>,
    pub local_energies: Vec<C64>,
    /// `M × P`, row-major.
    pub log_derivatives: Vec<C64>,
    pub chain_ids: Vec<usize>,
    pub flagged_count: usize,
    pub acceptance_rate: f64,
    pub exchange_rate: Option<f64>,
    pub exhaustive: bool,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn configuration(&self, m: usize) -> &[i8] {
        &self.configurations[m * self.n_sites..(m + 1) * self.n_sites]
    }

    pub fn derivatives(&self, m: usize) -> &[C64] {
        &self.log_derivatives[m * self.n_params..(m + 1) * self.n_params]
    }

    pub fn mean_energy(&self) -> C64 {
        self.weights.iter().zip(&self.local_energies).map(|(w, e)| e * w).sum()
    }

    pub fn n_chains(&self) -> usize {
        self.chain_ids.last().map_or(0, |c| c + 1)
    }
}

struct Evaluated {
    configuration: Vec<i8>,
    log_amp: C64,
    energy: C64,
    derivatives: Vec<C64>,
}

fn evaluate_one(psi: &JastrowParameters, ham: &ProblemHamiltonian, s: &[i8], gamma: f64, kappa: f64) -> Option<Evaluated> {
    let mut derivatives = vec![C64::new(0.0, 0.0); psi.n_params()];
    let ev = psi.evaluate(s, Some(&mut derivatives));
    let energy = ham.local_energy_from_ratios(s, &ev.ratios, gamma, kappa);
    let finite = energy.is_finite() && ev.log_amp.is_finite() && derivatives.iter().all(|d| d.is_finite());
    finite.then(|| Evaluated { configuration: s.to_vec(), log_amp: ev.log_amp, energy, derivatives })
}

fn check_flagged(flagged: usize, total: usize) -> Result<()> {
    if flagged * 1000 > total {
        Err(Error::FlaggedSamples { flagged, total })
    } else {
        Ok(())
    }
}

/// Evaluates a configuration batch; non-finite samples are dropped and
/// counted, and more than 0.1% of them is an error.
pub fn evaluate_batch(
    psi: &JastrowParameters,
    ham: &ProblemHamiltonian,
    t: f64,
    batch: ConfigurationBatch,
) -> Result<SampleSet> {
    let n = psi.n_sites();
    if ham.n_sites() != n || batch.n_sites != n {
        return Err(Error::Dimension { expected: n, actual: ham.n_sites() });
    }
    let (gamma, kappa) = ham.schedule().eval(t)?;
    let total = batch.chain_ids.len();
    let evaluated: Vec<Option<Evaluated>> = batch
        .configurations
        .par_chunks(n)
        .map(|s| evaluate_one(psi, ham, s, gamma, kappa))
        .collect();
    let p = psi.n_params();
    let mut set = SampleSet {
        n_sites: n,
        n_params: p,
        configurations: Vec::with_capacity(total * n),
        weights: Vec::with_capacity(total),
        log_amplitudes: Vec::with_capacity(total),
        local_energies: Vec::with_capacity(total),
        log_derivatives: Vec::with_capacity(total * p),
        chain_ids: Vec::with_capacity(total),
        flagged_count: 0,
        acceptance_rate: batch.acceptance_rate,
        exchange_rate: batch.exchange_rate,
        exhaustive: false,
    };
    for (ev, &chain) in evaluated.into_iter().zip(&batch.chain_ids) {
        match ev {
            Some(ev) => {
                set.configurations.extend(ev.configuration);
                set.log_amplitudes.push(ev.log_amp);
                set.local_energies.push(ev.energy);
                set.log_derivatives.extend(ev.derivatives);
                set.chain_ids.push(chain);
            }
            None => set.flagged_count += 1,
        }
    }
    check_flagged(set.flagged_count, total)?;
    if set.chain_ids.is_empty() {
        return Err(Error::FlaggedSamples { flagged: set.flagged_count, total });
    }
    let m = set.chain_ids.len();
    set.weights = vec![1.0 / m as f64; m];
    Ok(set)
}

/// Every configuration of the `2^N` basis weighted by its exact Born
/// probability. Configuration `x` uses the bit convention of
/// [`crate::ansatz::SpinConfiguration::from_index`].
pub fn exhaustive_sample_set(psi: &JastrowParameters, ham: &ProblemHamiltonian, t: f64) -> Result<SampleSet> {
    let n = psi.n_sites();
    if n > EXHAUSTIVE_CAP {
        return Err(Error::TooLarge { n, cap: EXHAUSTIVE_CAP });
    }
    let configurations: Vec<i8> = (0..1u64 << n)
        .flat_map(|x| (0..n).map(move |i| if (x >> i) & 1 == 0 { 1i8 } else { -1 }))
        .collect();
    let batch = ConfigurationBatch {
        n_sites: n,
        chain_ids: vec![0; 1 << n],
        configurations,
        acceptance_rate: 0.0,
        exchange_rate: None,
    };
    let mut set = evaluate_batch(psi, ham, t, batch)?;
    let max = set.log_amplitudes.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = set.log_amplitudes.iter().map(|l| (2.0 * (l.re - max)).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= z);
    set.weights = weights;
    set.exhaustive = true;
    Ok(set)
}
