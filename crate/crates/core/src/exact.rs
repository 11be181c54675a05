//! Dense state-vector oracle.
//!
//! Basis state `x` has spin `i` equal to +1 when bit `i` of `x` is clear, so
//! site 0 is the least significant bit.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rand::Rng as _;
use rayon::prelude::*;

use crate::ansatz::{JastrowParameters, SpinConfiguration};
use crate::error::{Error, Result};
use crate::model::ProblemHamiltonian;
use crate::seeds;

/// Largest N handled by the dense oracle.
pub const DENSE_CAP: usize = 24;
/// Largest N diagonalized densely by [`ground_energy`]; larger N use Lanczos.
pub const FULL_DIAGONALIZATION_CAP: usize = 10;
/// Per-step norm drift that aborts [`exact_evolve`].
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub n_sites: usize,
    pub amplitudes: Vec<C64>,
}

#[inline]
fn spin(x: usize, i: usize) -> f64 {
    if (x >> i) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > DENSE_CAP {
        Err(Error::TooLarge { n, cap: DENSE_CAP })
    } else {
        Ok(())
    }
}

impl DenseState {
    pub fn new(n_sites: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_cap(n_sites)?;
        if amplitudes.len() != 1 << n_sites {
            return Err(Error::Dimension { expected: 1 << n_sites, actual: amplitudes.len() });
        }
        Ok(DenseState { n_sites, amplitudes })
    }

    /// `|+⟩^⊗N`, the ground state of the driver.
    pub fn uniform(n_sites: usize) -> Result<Self> {
        check_cap(n_sites)?;
        let dim = 1usize << n_sites;
        let a = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Ok(DenseState { n_sites, amplitudes: vec![a; dim] })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.par_iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm();
        if norm > 0.0 && norm.is_finite() {
            let inv = 1.0 / norm;
            self.amplitudes.par_iter_mut().for_each(|a| *a *= inv);
        }
        norm
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &DenseState) -> C64 {
        self.amplitudes.par_iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    /// Born probabilities of the normalized state.
    pub fn probabilities(&self) -> Vec<f64> {
        let z: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        self.amplitudes.iter().map(|a| a.norm_sqr() / z).collect()
    }

    /// `⟨σ^z_i σ^z_j⟩` for all pairs, `N × N` row-major with unit diagonal.
    pub fn zz_correlations(&self) -> Vec<f64> {
        let n = self.n_sites;
        let p = self.probabilities();
        let pairs = p
            .par_chunks(4096)
            .enumerate()
            .map(|(chunk, probs)| {
                let mut acc = vec![0.0; n * n];
                for (off, &w) in probs.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let x = chunk * 4096 + off;
                    for i in 0..n {
                        let wi = w * spin(x, i);
                        for j in i + 1..n {
                            acc[i * n + j] += wi * spin(x, j);
                        }
                    }
                }
                acc
            })
            .reduce(|| vec![0.0; n * n], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            c[i * n + i] = 1.0;
            for j in i + 1..n {
                c[i * n + j] = pairs[i * n + j];
                c[j * n + i] = pairs[i * n + j];
            }
        }
        c
    }

    /// `⟨σ^z_i⟩` for every site.
    pub fn z_magnetizations(&self) -> Vec<f64> {
        let p = self.probabilities();
        (0..self.n_sites).map(|i| p.iter().enumerate().map(|(x, w)| w * spin(x, i)).sum()).collect()
    }

    /// `⟨σ^x_i⟩` for every site.
    pub fn x_magnetizations(&self) -> Vec<f64> {
        let z: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        (0..self.n_sites)
            .map(|i| {
                let s: C64 = self.amplitudes.iter().enumerate().map(|(x, a)| a.conj() * self.amplitudes[x ^ (1 << i)]).sum();
                s.re / z
            })
            .collect()
    }
}

/// Normalized dense vector of a Jastrow state.
pub fn enumerate_variational_state(psi: &JastrowParameters) -> Result<DenseState> {
    let n = psi.n_sites();
    check_cap(n)?;
    let logs: Vec<C64> = (0..1u64 << n)
        .into_par_iter()
        .map(|x| psi.log_amplitude_unchecked(SpinConfiguration::from_index(x, n).spins()))
        .collect();
    let max = logs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let amplitudes = logs.into_iter().map(|l| (l - max).exp()).collect();
    Ok(DenseState { n_sites: n, amplitudes }.normalized())
}

/// `Σ J_ij σ_i σ_j` for every basis state.
pub fn diagonal_table(ham: &ProblemHamiltonian) -> Result<Vec<f64>> {
    let n = ham.n_sites();
    check_cap(n)?;
    Ok((0..1usize << n)
        .into_par_iter()
        .map(|x| {
            ham.edges()
                .iter()
                .zip(ham.couplings())
                .map(|(&(i, j), &jij)| jij * spin(x, i) * spin(x, j))
                .sum()
        })
        .collect())
}

fn apply_into(diag: &[f64], n: usize, gamma: f64, kappa: f64, src: &[C64], dst: &mut [C64]) {
    dst.par_iter_mut().enumerate().for_each(|(x, out)| {
        let mut off = C64::new(0.0, 0.0);
        for i in 0..n {
            off += src[x ^ (1 << i)];
        }
        *out = src[x] * (kappa * diag[x]) - off * gamma;
    });
}

/// `Ĥ(t)|ψ⟩`, applied without building the matrix.
pub fn apply_hamiltonian(ham: &ProblemHamiltonian, t: f64, state: &DenseState) -> Result<DenseState> {
    if state.n_sites != ham.n_sites() {
        return Err(Error::Dimension { expected: ham.n_sites(), actual: state.n_sites });
    }
    let (gamma, kappa) = ham.schedule().eval(t)?;
    let diag = diagonal_table(ham)?;
    let mut out = vec![C64::new(0.0, 0.0); state.amplitudes.len()];
    apply_into(&diag, state.n_sites, gamma, kappa, &state.amplitudes, &mut out);
    Ok(DenseState { n_sites: state.n_sites, amplitudes: out })
}

/// `⟨ψ|Ĥ(t)|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn energy(ham: &ProblemHamiltonian, t: f64, state: &DenseState) -> Result<f64> {
    let h = apply_hamiltonian(ham, t, state)?;
    let z: f64 = state.amplitudes.iter().map(|a| a.norm_sqr()).sum();
    Ok(state.inner(&h).re / z)
}

/// Explicit `2^N × 2^N` matrix of `Ĥ(t)`; meant for small N.
pub fn hamiltonian_matrix(ham: &ProblemHamiltonian, t: f64) -> Result<Mat<f64>> {
    let n = ham.n_sites();
    if n > 14 {
        return Err(Error::TooLarge { n, cap: 14 });
    }
    let (gamma, kappa) = ham.schedule().eval(t)?;
    let diag = diagonal_table(ham)?;
    let dim = 1usize << n;
    let mut m = Mat::<f64>::zeros(dim, dim);
    for x in 0..dim {
        m[(x, x)] = kappa * diag[x];
        for i in 0..n {
            m[(x, x ^ (1 << i))] -= gamma;
        }
    }
    Ok(m)
}

/// Per-run diagnostics of [`exact_evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionStats {
    pub n_steps: usize,
    pub dt: f64,
    pub max_norm_drift: f64,
}

/// RK4 integration of `i ∂_t|ψ⟩ = Ĥ(t)|ψ⟩` from `|+⟩^⊗N` over `[0, T]`,
/// renormalizing after every step. `observe` sees the state at `t = 0` and
/// after every step.
pub fn exact_evolve(
    ham: &ProblemHamiltonian,
    n_steps: usize,
    mut observe: impl FnMut(usize, f64, &DenseState) -> Result<()>,
) -> Result<(DenseState, EvolutionStats)> {
    let n = ham.n_sites();
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be positive".into()));
    }
    let diag = diagonal_table(ham)?;
    let total = ham.schedule().total_time;
    let dt = total / n_steps as f64;
    let mut state = DenseState::uniform(n)?;
    let dim = state.amplitudes.len();
    let zero = C64::new(0.0, 0.0);
    let (mut k, mut tmp, mut acc) = (vec![zero; dim], vec![zero; dim], vec![zero; dim]);
    let minus_i = C64::new(0.0, -1.0);
    let mut max_drift: f64 = 0.0;
    observe(0, 0.0, &state)?;
    for step in 0..n_steps {
        let t0 = step as f64 * dt;
        let times = [t0, t0 + 0.5 * dt, t0 + 0.5 * dt, (t0 + dt).min(total)];
        let stage_in = [0.0, 0.5 * dt, 0.5 * dt, dt];
        let weight = [1.0, 2.0, 2.0, 1.0];
        acc.copy_from_slice(&state.amplitudes);
        for s in 0..4 {
            let (gamma, kappa) = ham.schedule().eval(times[s])?;
            if s == 0 {
                apply_into(&diag, n, gamma, kappa, &state.amplitudes, &mut k);
            } else {
                let h = stage_in[s];
                tmp.par_iter_mut()
                    .zip(&state.amplitudes)
                    .zip(&k)
                    .for_each(|((t, a), kk)| *t = a + kk * h);
                apply_into(&diag, n, gamma, kappa, &tmp, &mut k);
            }
            k.par_iter_mut().for_each(|v| *v *= minus_i);
            let w = weight[s] * dt / 6.0;
            acc.par_iter_mut().zip(&k).for_each(|(a, kk)| *a += kk * w);
        }
        std::mem::swap(&mut state.amplitudes, &mut acc);
        let norm = state.normalize();
        let drift = (norm - 1.0).abs();
        max_drift = max_drift.max(drift);
        if !(drift <= NORM_DRIFT_LIMIT) {
            return Err(Error::NormDrift { step, drift, limit: NORM_DRIFT_LIMIT });
        }
        let t = if step + 1 == n_steps { total } else { (step + 1) as f64 * dt };
        observe(step + 1, t, &state)?;
    }
    Ok((state, EvolutionStats { n_steps, dt, max_norm_drift: max_drift }))
}

/// Lowest eigenvalue of `Ĥ(t)`.
///
/// Small systems are diagonalized densely. Larger ones use Lanczos started
/// from a seeded positive vector: with Γ > 0 the ground state is the
/// positive Perron vector, so the start always overlaps it.
pub fn ground_energy(ham: &ProblemHamiltonian, t: f64) -> Result<f64> {
    let n = ham.n_sites();
    check_cap(n)?;
    let (gamma, kappa) = ham.schedule().eval(t)?;
    let diag = diagonal_table(ham)?;
    if gamma == 0.0 {
        return Ok(kappa * diag.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if n <= FULL_DIAGONALIZATION_CAP {
        let m = hamiltonian_matrix(ham, t)?;
        let eig = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Invalid(format!("eigendecomposition failed: {e:?}")))?;
        let s = eig.S().column_vector();
        return Ok((0..s.nrows()).map(|k| s[k]).fold(f64::INFINITY, f64::min));
    }
    lanczos_ground(&diag, n, gamma, kappa)
}

fn apply_real(diag: &[f64], n: usize, gamma: f64, kappa: f64, src: &[f64], dst: &mut [f64]) {
    dst.par_iter_mut().enumerate().for_each(|(x, out)| {
        let mut off = 0.0;
        for i in 0..n {
            off += src[x ^ (1 << i)];
        }
        *out = kappa * diag[x] * src[x] - gamma * off;
    });
}

fn par_dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(8192).zip(b.par_chunks(8192)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`
/// (Sturm sequence count).
fn eigenvalues_below(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for k in 0..alpha.len() {
        let off = if k == 0 { 0.0 } else { beta[k - 1] * beta[k - 1] };
        d = alpha[k] - x - if k == 0 { 0.0 } else { off / d };
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix, by bisection.
fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let radius = |i: usize| {
        (if i > 0 { beta[i - 1].abs() } else { 0.0 }) + (if i + 1 < k { beta[i].abs() } else { 0.0 })
    };
    let mut lo = (0..k).map(|i| alpha[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..k).map(|i| alpha[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eigenvalues_below(alpha, beta, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

const LANCZOS_MAX_ITERATIONS: usize = 3000;
const LANCZOS_CHECK_EVERY: usize = 10;
const LANCZOS_TOL: f64 = 1e-12;

/// Three-term Lanczos without reorthogonalization. Loss of orthogonality
/// only duplicates converged Ritz values, so the lowest one is still the
/// extremal eigenvalue of the Krylov space.
fn lanczos_ground(diag: &[f64], n: usize, gamma: f64, kappa: f64) -> Result<f64> {
    let dim = diag.len();
    let mut rng = seeds::rng_from_seed(seeds::derive_seed(0, "lanczos", n as u64));
    let mut v: Vec<f64> = (0..dim).map(|_| 0.5 + rng.random::<f64>()).collect();
    for x in 0..dim / 2 {
        let y = !x & (dim - 1);
        let avg = 0.5 * (v[x] + v[y]);
        v[x] = avg;
        v[y] = avg;
    }
    let norm = par_dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut v_prev = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut last = f64::INFINITY;
    let mut change = f64::INFINITY;
    for j in 0..LANCZOS_MAX_ITERATIONS {
        apply_real(diag, n, gamma, kappa, &v, &mut w);
        let b_prev = beta.last().copied().unwrap_or(0.0);
        w.par_iter_mut().zip(&v_prev).for_each(|(x, p)| *x -= b_prev * p);
        let a = par_dot(&w, &v);
        w.par_iter_mut().zip(&v).for_each(|(x, q)| *x -= a * q);
        alpha.push(a);
        let b = par_dot(&w, &w).sqrt();
        if (j + 1) % LANCZOS_CHECK_EVERY == 0 || b <= 1e-12 {
            let lam = tridiagonal_lowest(&alpha, &beta);
            change = (lam - last).abs();
            if change <= LANCZOS_TOL * lam.abs().max(1.0) || b <= 1e-12 {
                return Ok(lam);
            }
            last = lam;
        }
        beta.push(b);
        std::mem::swap(&mut v_prev, &mut v);
        v.par_iter_mut().zip(&w).for_each(|(q, x)| *q = x / b);
    }
    Err(Error::NoConvergence { iterations: LANCZOS_MAX_ITERATIONS, residual: change })
}
