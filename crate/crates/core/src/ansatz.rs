//! Jastrow-Feenberg wave functions on Ising spins.
//!
//! The log-amplitude is a sum of k-body correlators, each a polynomial in the
//! spins with indices strictly increasing:
//!
//! * order 1: `Σ_i w1_i σ_i`
//! * order 2: `Σ_{i<j} w2_ij σ_i σ_j`
//! * order k ≥ 3: `Σ_{i1<…<ik} V_{i1 i2} V_{i2 i3} ⋯ V_{i(k-1) ik} σ_{i1} ⋯ σ_{ik}`
//!
//! The chained orders are contracted left to right in O(k N²): starting from
//! `a¹ = σ`, each level is `a^{m+1}_j = σ_j Σ_{i<j} V_ij a^m_i` and the
//! correlator is `Σ_j a^k_j`. A reverse sweep over the same levels gives the
//! parameter gradient and, because every correlator is multilinear in the
//! spins, all single-flip log-ratios `-2 σ_f ∂J/∂σ_f` at the same cost.
//!
//! Amplitudes are only ever handled through their logarithm.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest correlator order supported.
pub const MAX_ORDER: usize = 4;

/// Layout identifier stored with every parameter snapshot.
pub const FLATTENING: &str = "tvmc.flatten.v1: w1[i]; w2[i<j] row-major; V^(k)[m<n] row-major, ascending k";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::Invalid(format!("spin value {bad} is not ±1")));
        }
        Ok(SpinConfiguration { spins })
    }

    pub fn all_up(n: usize) -> Self {
        SpinConfiguration { spins: vec![1; n] }
    }

    /// Basis-state convention shared with the dense oracle: bit `i` of
    /// `index` is site `i`, and a clear bit is spin up (+1).
    pub fn from_index(index: u64, n: usize) -> Self {
        let spins = (0..n).map(|i| if (index >> i) & 1 == 0 { 1 } else { -1 }).collect();
        SpinConfiguration { spins }
    }

    pub fn index(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s < 0)
            .fold(0u64, |acc, (i, _)| acc | (1 << i))
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }

    pub fn flipped(&self, site: usize) -> Self {
        let mut out = self.clone();
        out.flip(site);
        out
    }
}

/// Complex variational parameters of a Jastrow-Feenberg state.
///
/// `w2` and every factor matrix are kept as dense symmetric `N × N` arrays
/// with a zero diagonal; only entries with `i < j` are parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct JastrowParameters {
    n_sites: usize,
    orders: Vec<usize>,
    w1: Vec<C64>,
    w2: Vec<C64>,
    factors: BTreeMap<usize, Vec<C64>>,
}

#[inline]
fn pair_count(n: usize) -> usize {
    n * (n.saturating_sub(1)) / 2
}

impl JastrowParameters {
    /// All-zero parameters for the given correlator orders.
    pub fn zeros(n_sites: usize, orders: &[usize]) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::Invalid("wave function needs at least one site".into()));
        }
        let mut orders = orders.to_vec();
        orders.sort_unstable();
        orders.dedup();
        if orders.is_empty() {
            return Err(Error::Invalid("at least one correlator order is required".into()));
        }
        if let Some(&k) = orders.iter().find(|&&k| k == 0 || k > MAX_ORDER) {
            return Err(Error::Invalid(format!("correlator order {k} not in 1..={MAX_ORDER}")));
        }
        let zeros = || vec![C64::new(0.0, 0.0); n_sites * n_sites];
        Ok(JastrowParameters {
            n_sites,
            w1: if orders.contains(&1) { vec![C64::new(0.0, 0.0); n_sites] } else { Vec::new() },
            w2: if orders.contains(&2) { zeros() } else { Vec::new() },
            factors: orders.iter().filter(|&&k| k >= 3).map(|&k| (k, zeros())).collect(),
            orders,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn active_orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn n_params(&self) -> usize {
        let n = self.n_sites;
        let mut p = self.w1.len();
        if !self.w2.is_empty() {
            p += pair_count(n);
        }
        p + self.factors.len() * pair_count(n)
    }

    pub fn w1(&self, i: usize) -> C64 {
        self.w1[i]
    }

    pub fn set_w1(&mut self, i: usize, value: C64) {
        self.w1[i] = value;
    }

    pub fn w2(&self, i: usize, j: usize) -> C64 {
        self.w2[i * self.n_sites + j]
    }

    pub fn set_w2(&mut self, i: usize, j: usize, value: C64) {
        assert!(i != j, "two-body parameters have no diagonal");
        let n = self.n_sites;
        self.w2[i * n + j] = value;
        self.w2[j * n + i] = value;
    }

    pub fn factor(&self, order: usize, i: usize, j: usize) -> C64 {
        self.factors[&order][i * self.n_sites + j]
    }

    /// Sets `V^(order)_ij = V^(order)_ji`. The diagonal stays frozen at zero.
    pub fn set_factor(&mut self, order: usize, i: usize, j: usize, value: C64) {
        assert!(i != j, "factor diagonal is frozen at zero");
        let n = self.n_sites;
        let v = self.factors.get_mut(&order).expect("inactive factor order");
        v[i * n + j] = value;
        v[j * n + i] = value;
    }

    /// Flattened parameter vector in the [`FLATTENING`] order.
    pub fn to_vector(&self) -> Vec<C64> {
        let n = self.n_sites;
        let mut out = Vec::with_capacity(self.n_params());
        out.extend_from_slice(&self.w1);
        let mut push_upper = |m: &[C64]| {
            for i in 0..n {
                out.extend_from_slice(&m[i * n + i + 1..(i + 1) * n]);
            }
        };
        if !self.w2.is_empty() {
            push_upper(&self.w2);
        }
        for v in self.factors.values() {
            push_upper(v);
        }
        out
    }

    pub fn set_from_vector(&mut self, values: &[C64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::Dimension { expected: self.n_params(), actual: values.len() });
        }
        let n = self.n_sites;
        let mut it = values.iter().copied();
        for w in self.w1.iter_mut() {
            *w = it.next().unwrap();
        }
        let fill = |m: &mut Vec<C64>, it: &mut dyn Iterator<Item = C64>| {
            for i in 0..n {
                for j in i + 1..n {
                    let v = it.next().unwrap();
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
        };
        if !self.w2.is_empty() {
            fill(&mut self.w2, &mut it);
        }
        for v in self.factors.values_mut() {
            fill(v, &mut it);
        }
        Ok(())
    }

    /// `θ ← θ + scale · delta` on the flattened parameters.
    pub fn add_scaled(&mut self, delta: &[C64], scale: f64) -> Result<()> {
        let mut theta = self.to_vector();
        if delta.len() != theta.len() {
            return Err(Error::Dimension { expected: theta.len(), actual: delta.len() });
        }
        for (t, d) in theta.iter_mut().zip(delta) {
            *t += d * scale;
        }
        self.set_from_vector(&theta)
    }

    /// Adds i.i.d. complex Gaussian noise with `E|z|² = scale²` to every
    /// off-diagonal factor entry.
    pub fn add_factor_noise<R: Rng>(&mut self, scale: f64, rng: &mut R) {
        let n = self.n_sites;
        let amp = scale / std::f64::consts::SQRT_2;
        for v in self.factors.values_mut() {
            for i in 0..n {
                for j in i + 1..n {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let z = C64::new(re, im) * amp;
                    v[i * n + j] += z;
                    v[j * n + i] += z;
                }
            }
        }
    }

    fn check(&self, sigma: &SpinConfiguration) -> Result<()> {
        if sigma.len() != self.n_sites {
            return Err(Error::Dimension { expected: self.n_sites, actual: sigma.len() });
        }
        Ok(())
    }

    /// `log ψ(σ)`.
    pub fn log_amplitude(&self, sigma: &SpinConfiguration) -> Result<C64> {
        self.check(sigma)?;
        Ok(self.log_amplitude_unchecked(sigma.spins()))
    }

    pub(crate) fn log_amplitude_unchecked(&self, s: &[i8]) -> C64 {
        let n = self.n_sites;
        let mut total = C64::new(0.0, 0.0);
        for (w, &si) in self.w1.iter().zip(s) {
            total += w * f64::from(si);
        }
        if !self.w2.is_empty() {
            for i in 0..n {
                let row = &self.w2[i * n..(i + 1) * n];
                let mut acc = C64::new(0.0, 0.0);
                for j in i + 1..n {
                    acc += row[j] * f64::from(s[j]);
                }
                total += acc * f64::from(s[i]);
            }
        }
        let mut levels = Vec::new();
        for (&k, v) in &self.factors {
            total += chain_forward(v, s, n, k, &mut levels);
        }
        total
    }

    /// `log ψ(σ^(site)) - log ψ(σ)` for a single flip.
    pub fn log_ratio(&self, sigma: &SpinConfiguration, site: usize) -> Result<C64> {
        self.check(sigma)?;
        if site >= self.n_sites {
            return Err(Error::Invalid(format!("flip site {site} outside [0, {})", self.n_sites)));
        }
        let s = sigma.spins();
        let mut r = -2.0 * f64::from(s[site]) * self.pair_field_at(s, site);
        if !self.factors.is_empty() {
            r += self.factor_ratios(s)[site];
        }
        Ok(r)
    }

    /// Log-ratios for every single-spin flip of `σ`.
    pub fn log_ratios(&self, sigma: &SpinConfiguration) -> Result<Vec<C64>> {
        self.check(sigma)?;
        Ok(self.evaluate(sigma.spins(), None).ratios)
    }

    /// Gradient of `log ψ(σ)` with respect to the flattened parameters.
    pub fn log_derivatives(&self, sigma: &SpinConfiguration) -> Result<Vec<C64>> {
        self.check(sigma)?;
        let mut out = vec![C64::new(0.0, 0.0); self.n_params()];
        self.evaluate(sigma.spins(), Some(&mut out));
        Ok(out)
    }

    /// `w1_f + Σ_j w2_fj σ_j`: the part of `∂ log ψ / ∂σ_f` from orders 1, 2.
    fn pair_field_at(&self, s: &[i8], f: usize) -> C64 {
        let n = self.n_sites;
        let mut h = self.w1.get(f).copied().unwrap_or_default();
        if !self.w2.is_empty() {
            let row = &self.w2[f * n..(f + 1) * n];
            for (w, &sj) in row.iter().zip(s) {
                h += w * f64::from(sj);
            }
        }
        h
    }

    pub(crate) fn pair_field(&self, s: &[i8]) -> Vec<C64> {
        (0..self.n_sites).map(|f| self.pair_field_at(s, f)).collect()
    }

    pub(crate) fn has_factors(&self) -> bool {
        !self.factors.is_empty()
    }

    /// Flip log-ratios contributed by the chained orders alone.
    pub(crate) fn factor_ratios(&self, s: &[i8]) -> Vec<C64> {
        let n = self.n_sites;
        let mut ratios = vec![C64::new(0.0, 0.0); n];
        let mut levels = Vec::new();
        let mut adjoints = Vec::new();
        for (&k, v) in &self.factors {
            chain_forward(v, s, n, k, &mut levels);
            chain_backward(v, s, n, k, &levels, &mut adjoints, &mut ratios, None);
        }
        ratios
    }

    /// Log-amplitude and all flip log-ratios in one pass; also writes the
    /// parameter gradient when `derivatives` is given.
    pub(crate) fn evaluate(&self, s: &[i8], derivatives: Option<&mut [C64]>) -> Evaluation {
        let n = self.n_sites;
        let mut log_amp = C64::new(0.0, 0.0);
        let mut ratios = vec![C64::new(0.0, 0.0); n];
        for f in 0..n {
            let h = self.pair_field_at(s, f);
            let sf = f64::from(s[f]);
            ratios[f] = -2.0 * sf * h;
            // each pair is counted from both ends
            let own = self.w1.get(f).copied().unwrap_or_default();
            log_amp += sf * (own + (h - own) * 0.5);
        }
        let mut derivatives = derivatives;
        let mut offset = 0;
        if let Some(d) = derivatives.as_deref_mut() {
            for i in 0..self.w1.len() {
                d[i] = C64::new(f64::from(s[i]), 0.0);
            }
            offset = self.w1.len();
            if !self.w2.is_empty() {
                for i in 0..n {
                    let si = f64::from(s[i]);
                    for j in i + 1..n {
                        d[offset] = C64::new(si * f64::from(s[j]), 0.0);
                        offset += 1;
                    }
                }
            }
        }
        let mut levels = Vec::new();
        let mut adjoints = Vec::new();
        for (&k, v) in &self.factors {
            log_amp += chain_forward(v, s, n, k, &mut levels);
            let grad = derivatives.as_deref_mut().map(|d| &mut d[offset..offset + pair_count(n)]);
            chain_backward(v, s, n, k, &levels, &mut adjoints, &mut ratios, grad);
            offset += pair_count(n);
        }
        Evaluation { log_amp, ratios }
    }
}

/// Log-amplitude and single-flip log-ratios at one configuration.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_amp: C64,
    pub ratios: Vec<C64>,
}

/// Forward contraction of one chained order. Fills `levels` with the `k`
/// levels `a^1..a^k` (row-major, `k × n`) and returns `Σ_j a^k_j`.
fn chain_forward(v: &[C64], s: &[i8], n: usize, k: usize, levels: &mut Vec<C64>) -> C64 {
    levels.clear();
    levels.resize(k * n, C64::new(0.0, 0.0));
    for j in 0..n {
        levels[j] = C64::new(f64::from(s[j]), 0.0);
    }
    for m in 1..k {
        let (prev, cur) = levels.split_at_mut(m * n);
        let prev = &prev[(m - 1) * n..];
        let cur = &mut cur[..n];
        for j in 1..n {
            let row = &v[j * n..j * n + j];
            let mut acc = C64::new(0.0, 0.0);
            for (vij, ai) in row.iter().zip(&prev[..j]) {
                acc += vij * ai;
            }
            cur[j] = acc * f64::from(s[j]);
        }
    }
    levels[(k - 1) * n..].iter().sum()
}

/// Reverse sweep for one chained order: accumulates flip log-ratios into
/// `ratios` and, if requested, `∂J/∂V_ij` (i < j, row-major) into `grad`.
#[allow(clippy::too_many_arguments)]
fn chain_backward(
    v: &[C64],
    s: &[i8],
    n: usize,
    k: usize,
    levels: &[C64],
    adjoints: &mut Vec<C64>,
    ratios: &mut [C64],
    grad: Option<&mut [C64]>,
) {
    adjoints.clear();
    adjoints.resize(k * n, C64::new(0.0, 0.0));
    for b in &mut adjoints[(k - 1) * n..] {
        *b = C64::new(1.0, 0.0);
    }
    for m in (1..k).rev() {
        let (lower, upper) = adjoints.split_at_mut(m * n);
        let out = &mut lower[(m - 1) * n..];
        let next = &upper[..n];
        for i in 0..n {
            let row = &v[i * n + i + 1..(i + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for (off, vij) in row.iter().enumerate() {
                let j = i + 1 + off;
                acc += vij * next[j] * f64::from(s[j]);
            }
            out[i] = acc;
        }
    }
    for f in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..k {
            acc += adjoints[m * n + f] * levels[m * n + f];
        }
        ratios[f] += -2.0 * acc;
    }
    if let Some(grad) = grad {
        grad.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        for m in 1..k {
            let a_prev = &levels[(m - 1) * n..m * n];
            let b_cur = &adjoints[m * n..(m + 1) * n];
            let mut idx = 0;
            for i in 0..n {
                let ai = a_prev[i];
                for j in i + 1..n {
                    grad[idx] += b_cur[j] * f64::from(s[j]) * ai;
                    idx += 1;
                }
            }
        }
    }
}

/// Parameters of the uniform superposition `|+⟩^⊗N`, the ground state of the
/// driving Hamiltonian: every parameter zero.
pub fn init_driving_ground(n_sites: usize, active_orders: &[usize]) -> Result<JastrowParameters> {
    JastrowParameters::zeros(n_sites, active_orders)
}

/// Cached log-amplitude and flip ratios for a configuration that changes one
/// spin at a time.
///
/// Orders one and two are updated in O(N) per accepted flip; chained orders
/// are re-contracted. The log-amplitude itself is accumulated incrementally
/// from the accepted ratios and should be refreshed periodically.
#[derive(Debug, Clone)]
pub struct FlipCache {
    pub log_amp: C64,
    pair_field: Vec<C64>,
    factor_ratios: Vec<C64>,
}

impl FlipCache {
    pub fn new(psi: &JastrowParameters, s: &[i8]) -> Self {
        let factor_ratios = if psi.has_factors() {
            psi.factor_ratios(s)
        } else {
            vec![C64::new(0.0, 0.0); psi.n_sites]
        };
        FlipCache {
            log_amp: psi.log_amplitude_unchecked(s),
            pair_field: psi.pair_field(s),
            factor_ratios,
        }
    }

    #[inline]
    pub fn log_ratio(&self, s: &[i8], site: usize) -> C64 {
        -2.0 * f64::from(s[site]) * self.pair_field[site] + self.factor_ratios[site]
    }

    /// Flips `site` in `s` and updates the cache.
    pub fn flip(&mut self, psi: &JastrowParameters, s: &mut [i8], site: usize) {
        self.log_amp += self.log_ratio(s, site);
        let old = f64::from(s[site]);
        s[site] = -s[site];
        if !psi.w2.is_empty() {
            let n = psi.n_sites;
            let row = &psi.w2[site * n..(site + 1) * n];
            for (h, w) in self.pair_field.iter_mut().zip(row) {
                *h -= w * (2.0 * old);
            }
        }
        if psi.has_factors() {
            self.factor_ratios = psi.factor_ratios(s);
        }
    }
}

/// Serializable parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSnapshot {
    pub flattening: String,
    pub n_sites: usize,
    pub active_orders: Vec<usize>,
    /// `[re, im]` pairs in flattening order.
    pub values: Vec<[f64; 2]>,
}

impl From<&JastrowParameters> for ParameterSnapshot {
    fn from(psi: &JastrowParameters) -> Self {
        ParameterSnapshot {
            flattening: FLATTENING.into(),
            n_sites: psi.n_sites,
            active_orders: psi.orders.clone(),
            values: psi.to_vector().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

impl TryFrom<&ParameterSnapshot> for JastrowParameters {
    type Error = Error;

    fn try_from(snap: &ParameterSnapshot) -> Result<Self> {
        if snap.flattening != FLATTENING {
            return Err(Error::Invalid(format!("unknown parameter layout `{}`", snap.flattening)));
        }
        let mut psi = JastrowParameters::zeros(snap.n_sites, &snap.active_orders)?;
        let values: Vec<C64> = snap.values.iter().map(|&[re, im]| C64::new(re, im)).collect();
        psi.set_from_vector(&values)?;
        Ok(psi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_psi(n: usize, orders: &[usize], seed: u64, scale: f64) -> JastrowParameters {
        let mut rng = seeds::rng_from_seed(seed);
        let mut psi = JastrowParameters::zeros(n, orders).unwrap();
        let theta: Vec<C64> = (0..psi.n_params())
            .map(|_| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
            .collect();
        psi.set_from_vector(&theta).unwrap();
        psi
    }

    fn random_sigma(n: usize, seed: u64) -> SpinConfiguration {
        let mut rng = seeds::rng_from_seed(seed ^ 0xabcdef);
        SpinConfiguration::new((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()).unwrap()
    }

    /// Explicit sum over ordered k-tuples of the chained correlator.
    fn brute_force_chain(psi: &JastrowParameters, k: usize, s: &[i8]) -> C64 {
        fn rec(psi: &JastrowParameters, k: usize, s: &[i8], tuple: &mut Vec<usize>, acc: &mut C64) {
            if tuple.len() == k {
                let mut w = C64::new(1.0, 0.0);
                for pair in tuple.windows(2) {
                    w *= psi.factor(k, pair[0], pair[1]);
                }
                let sign: f64 = tuple.iter().map(|&i| f64::from(s[i])).product();
                *acc += w * sign;
                return;
            }
            let start = tuple.last().map_or(0, |&l| l + 1);
            for i in start..s.len() {
                tuple.push(i);
                rec(psi, k, s, tuple, acc);
                tuple.pop();
            }
        }
        let mut acc = C64::new(0.0, 0.0);
        rec(psi, k, s, &mut Vec::new(), &mut acc);
        acc
    }

    fn brute_force_log_amp(psi: &JastrowParameters, s: &[i8]) -> C64 {
        let n = psi.n_sites();
        let mut total = C64::new(0.0, 0.0);
        for &k in psi.active_orders() {
            match k {
                1 => (0..n).for_each(|i| total += psi.w1(i) * f64::from(s[i])),
                2 => {
                    for i in 0..n {
                        for j in i + 1..n {
                            total += psi.w2(i, j) * f64::from(s[i] * s[j]);
                        }
                    }
                }
                _ => total += brute_force_chain(psi, k, s),
            }
        }
        total
    }

    #[test]
    fn zero_parameters_give_zero() {
        let psi = init_driving_ground(7, &[1, 2, 3, 4]).unwrap();
        for idx in [0u64, 5, 77, 127] {
            let sigma = SpinConfiguration::from_index(idx, 7);
            assert_eq!(psi.log_amplitude(&sigma).unwrap(), C64::new(0.0, 0.0));
            for f in 0..7 {
                assert_eq!(psi.log_ratio(&sigma, f).unwrap(), C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn parameter_count_and_layout() {
        let psi = JastrowParameters::zeros(6, &[4, 1, 2]).unwrap();
        assert_eq!(psi.active_orders(), &[1, 2, 4]);
        assert_eq!(psi.n_params(), 6 + 15 + 15);
        let mut psi = psi;
        let theta: Vec<C64> = (0..psi.n_params()).map(|i| C64::new(i as f64, 0.0)).collect();
        psi.set_from_vector(&theta).unwrap();
        assert_eq!(psi.w1(5), C64::new(5.0, 0.0));
        assert_eq!(psi.w2(0, 1), C64::new(6.0, 0.0));
        assert_eq!(psi.w2(1, 0), C64::new(6.0, 0.0));
        assert_eq!(psi.w2(4, 5), C64::new(20.0, 0.0));
        assert_eq!(psi.factor(4, 0, 1), C64::new(21.0, 0.0));
        assert_eq!(psi.factor(4, 2, 1), psi.factor(4, 1, 2));
        assert_eq!(psi.factor(4, 3, 3), C64::new(0.0, 0.0));
        assert_eq!(psi.to_vector(), theta);
    }

    #[test]
    fn rejects_bad_orders_and_dimensions() {
        assert!(JastrowParameters::zeros(4, &[5]).is_err());
        assert!(JastrowParameters::zeros(4, &[]).is_err());
        let psi = JastrowParameters::zeros(4, &[2]).unwrap();
        assert!(matches!(
            psi.log_amplitude(&SpinConfiguration::all_up(3)),
            Err(Error::Dimension { expected: 4, actual: 3 })
        ));
        assert!(psi.log_ratio(&SpinConfiguration::all_up(4), 4).is_err());
    }

    #[test]
    fn single_tuple_order_four() {
        let psi = random_psi(4, &[4], 11, 1.0);
        let sigma = random_sigma(4, 3);
        let s = sigma.spins();
        let expected = psi.factor(4, 0, 1) * psi.factor(4, 1, 2) * psi.factor(4, 2, 3)
            * f64::from(s[0] * s[1] * s[2] * s[3]);
        let got = psi.log_amplitude(&sigma).unwrap();
        assert!((got - expected).norm() < 1e-12);
    }

    #[test]
    fn orders_two_four_match_tuple_enumeration() {
        let psi = random_psi(8, &[2, 4], 5, 0.7);
        for seed in 0..20 {
            let sigma = random_sigma(8, seed);
            let got = psi.log_amplitude(&sigma).unwrap();
            let want = brute_force_log_amp(&psi, sigma.spins());
            assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn order_two_ratio_formula() {
        let psi = random_psi(6, &[2], 8, 1.0);
        let sigma = random_sigma(6, 1);
        let s = sigma.spins();
        for f in 0..6 {
            let mut field = C64::new(0.0, 0.0);
            for i in 0..f {
                field += psi.w2(i, f) * f64::from(s[i]);
            }
            for j in f + 1..6 {
                field += psi.w2(f, j) * f64::from(s[j]);
            }
            let want = -2.0 * f64::from(s[f]) * field;
            assert!((psi.log_ratio(&sigma, f).unwrap() - want).norm() < 1e-13);
        }
    }

    #[test]
    fn simple_derivative_entries() {
        let psi = random_psi(5, &[1, 2], 2, 1.0);
        let sigma = random_sigma(5, 9);
        let d = psi.log_derivatives(&sigma).unwrap();
        for i in 0..5 {
            assert_eq!(d[i], C64::new(f64::from(sigma.spins()[i]), 0.0));
        }
        let up = SpinConfiguration::all_up(5);
        let d = psi.log_derivatives(&up).unwrap();
        assert!(d[5..].iter().all(|&x| x == C64::new(1.0, 0.0)));
    }

    /// Central differences on the real and imaginary part of each
    /// parameter; for a holomorphic log-amplitude both give the derivative.
    fn finite_difference_gradient(psi: &JastrowParameters, sigma: &SpinConfiguration, h: f64) -> Vec<(C64, C64)> {
        let theta = psi.to_vector();
        let mut work = psi.clone();
        let mut out = Vec::with_capacity(theta.len());
        for p in 0..theta.len() {
            let mut eval = |delta: C64| {
                let mut t = theta.clone();
                t[p] += delta;
                work.set_from_vector(&t).unwrap();
                work.log_amplitude(sigma).unwrap()
            };
            let re = (eval(C64::new(h, 0.0)) - eval(C64::new(-h, 0.0))) / (2.0 * h);
            let im = (eval(C64::new(0.0, h)) - eval(C64::new(0.0, -h))) / (2.0 * h) * C64::new(0.0, -1.0);
            out.push((re, im));
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences_order_four() {
        let psi = random_psi(6, &[1, 2, 4], 21, 0.8);
        for seed in 0..4 {
            let sigma = random_sigma(6, seed);
            let d = psi.log_derivatives(&sigma).unwrap();
            for (p, (re, im)) in finite_difference_gradient(&psi, &sigma, 1e-5).into_iter().enumerate() {
                for fd in [re, im] {
                    let err = (d[p] - fd).norm() / d[p].norm().max(1e-3);
                    assert!(err <= 1e-6, "param {p}: {} vs {fd} (rel {err:e})", d[p]);
                }
            }
        }
    }

    #[test]
    fn flip_cache_tracks_log_amplitude() {
        let psi = random_psi(9, &[1, 2, 3, 4], 4, 0.3);
        let sigma = random_sigma(9, 4);
        let mut s = sigma.spins().to_vec();
        let mut cache = FlipCache::new(&psi, &s);
        let mut rng = seeds::rng_from_seed(99);
        for _ in 0..10_000 {
            let site = rng.random_range(0..9);
            let want = psi.log_ratio(&SpinConfiguration { spins: s.clone() }, site).unwrap();
            assert!((cache.log_ratio(&s, site) - want).norm() < 1e-10);
            cache.flip(&psi, &mut s, site);
        }
        let exact = psi.log_amplitude_unchecked(&s);
        assert!((cache.log_amp - exact).norm() <= 1e-9, "drift {}", (cache.log_amp - exact).norm());
    }

    #[test]
    fn snapshot_round_trip() {
        let psi = random_psi(5, &[1, 2, 4], 1, 1.0);
        let snap = ParameterSnapshot::from(&psi);
        let text = serde_json::to_string(&snap).unwrap();
        let back: ParameterSnapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(JastrowParameters::try_from(&back).unwrap(), psi);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ratio_consistent_with_amplitudes(n in 1usize..9, seed in any::<u64>(), orders in prop::sample::subsequence(vec![1usize, 2, 3, 4], 1..=4)) {
            let psi = random_psi(n, &orders, seed, 0.6);
            let sigma = random_sigma(n, seed);
            let base = psi.log_amplitude(&sigma).unwrap();
            let all = psi.log_ratios(&sigma).unwrap();
            for f in 0..n {
                let want = psi.log_amplitude(&sigma.flipped(f)).unwrap() - base;
                prop_assert!((psi.log_ratio(&sigma, f).unwrap() - want).norm() < 1e-12);
                prop_assert!((all[f] - want).norm() < 1e-12);
            }
        }

        #[test]
        fn chained_orders_match_enumeration(n in 3usize..=10, k in 3usize..=4, seed in any::<u64>()) {
            let psi = random_psi(n, &[k], seed, 0.9);
            let sigma = random_sigma(n, seed);
            let got = psi.log_amplitude(&sigma).unwrap();
            let want = brute_force_chain(&psi, k, sigma.spins());
            prop_assert!((got - want).norm() <= 1e-10 * want.norm().max(1e-300) || (got - want).norm() < 1e-14);
        }

        #[test]
        fn gradients_match_finite_differences(n in 2usize..=6, seed in any::<u64>(), orders in prop::sample::subsequence(vec![1usize, 2, 3, 4], 1..=4)) {
            let psi = random_psi(n, &orders, seed, 0.5);
            let sigma = random_sigma(n, seed);
            let d = psi.log_derivatives(&sigma).unwrap();
            for (p, (re, im)) in finite_difference_gradient(&psi, &sigma, 1e-5).into_iter().enumerate() {
                for fd in [re, im] {
                    prop_assert!((d[p] - fd).norm() <= 1e-6 * d[p].norm().max(1e-2));
                }
            }
        }
    }
}
