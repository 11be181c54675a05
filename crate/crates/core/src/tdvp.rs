//! The t-VMC engine: geometric tensor and forces from a sample set, the
//! regularized solve of `S θ̇ = −i F`, explicit time stepping, and the error
//! estimates r², validation r² and R².

use std::time::Instant;

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ansatz::JastrowParameters;
use crate::error::{Error, Result};
use crate::model::ProblemHamiltonian;
use crate::sampler::{exhaustive_sample_set, MarkovSampler, SampleSet};

/// r² is undefined when `δE² ≤ DELTA_E2_GUARD · |E|²`.
pub const DELTA_E2_GUARD: f64 = 1e-12;
/// Most negative raw r² accepted as rounding before clamping to zero.
pub const R2_NEGATIVE_ALLOWANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Regularization {
    /// Eigenvalues below `rel_cutoff · λ_max` are discarded.
    pub rel_cutoff: f64,
    /// Diagonal shift as a fraction of the mean diagonal of S.
    pub rel_shift: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization { rel_cutoff: 1e-8, rel_shift: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct GeometricTensor {
    pub s: Mat<C64>,
    pub sample_count: usize,
    /// Largest `|S_ij − conj(S_ji)|` before symmetrization.
    pub asymmetry: f64,
}

#[derive(Debug, Clone)]
pub struct ForceVector {
    pub f: Vec<C64>,
    pub energy_mean: C64,
    pub delta_e2: f64,
}

/// Weighted, centered log-derivatives `X_mk = √w_m (D_mk − ⟨D_k⟩)` and
/// energies `e_m = √w_m (E_m − ⟨E⟩)`, so that `S = X†X` and `F = X†e`.
#[derive(Debug, Clone)]
pub struct CenteredSamples {
    pub x: Mat<C64>,
    pub e: Vec<C64>,
    pub force: ForceVector,
}

impl CenteredSamples {
    pub fn new(samples: &SampleSet) -> Result<Self> {
        let m = samples.len();
        let p = samples.n_params;
        if m == 0 {
            return Err(Error::Invalid("empty sample set".into()));
        }
        let mut mean_d = vec![C64::new(0.0, 0.0); p];
        for (r, &w) in samples.weights.iter().enumerate() {
            for (acc, d) in mean_d.iter_mut().zip(samples.derivatives(r)) {
                *acc += d * w;
            }
        }
        let energy_mean = samples.mean_energy();
        let mut x = Mat::<C64>::zeros(m, p);
        let mut e = Vec::with_capacity(m);
        let mut delta_e2 = 0.0;
        for (r, &w) in samples.weights.iter().enumerate() {
            let sw = w.sqrt();
            for (k, (d, md)) in samples.derivatives(r).iter().zip(&mean_d).enumerate() {
                x[(r, k)] = (d - md) * sw;
            }
            let de = samples.local_energies[r] - energy_mean;
            delta_e2 += w * de.norm_sqr();
            e.push(de * sw);
        }
        let f = matvec_adjoint(&x, &e);
        Ok(CenteredSamples { x, e, force: ForceVector { f, energy_mean, delta_e2 } })
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    /// `S θ̇` without forming S.
    pub fn s_times(&self, v: &[C64]) -> Vec<C64> {
        matvec_adjoint(&self.x, &matvec(&self.x, v))
    }

    pub fn geometric_tensor(&self) -> GeometricTensor {
        let raw = self.x.adjoint() * &self.x;
        let p = raw.nrows();
        let mut asymmetry: f64 = 0.0;
        let s = Mat::from_fn(p, p, |i, j| {
            asymmetry = asymmetry.max((raw[(i, j)] - raw[(j, i)].conj()).norm());
            (raw[(i, j)] + raw[(j, i)].conj()) * 0.5
        });
        GeometricTensor { s, sample_count: self.n_samples(), asymmetry }
    }
}

fn matvec(x: &Mat<C64>, v: &[C64]) -> Vec<C64> {
    let col = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    let out = x * &col;
    (0..out.nrows()).map(|i| out[(i, 0)]).collect()
}

fn matvec_adjoint(x: &Mat<C64>, v: &[C64]) -> Vec<C64> {
    let col = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    let out = x.adjoint() * &col;
    (0..out.nrows()).map(|i| out[(i, 0)]).collect()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Centered covariance estimators of S and F from one sample set.
pub fn estimate_sf(samples: &SampleSet) -> Result<(GeometricTensor, ForceVector)> {
    let c = CenteredSamples::new(samples)?;
    Ok((c.geometric_tensor(), c.force))
}

#[derive(Debug, Clone)]
pub struct MotionSolution {
    pub theta_dot: Vec<C64>,
    pub retained_rank: usize,
    pub shift: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub warning: Option<String>,
}

fn spectral_solve(
    eigenvalues: &[f64],
    reg: &Regularization,
    mean_diagonal: f64,
    project: impl Fn(usize) -> C64,
    mut accumulate: impl FnMut(usize, C64),
) -> (usize, f64, f64, f64, Option<String>) {
    let lambda_max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = reg.rel_shift * mean_diagonal.max(0.0);
    if !(lambda_max > 0.0) {
        return (0, shift, lambda_max, lambda_min, Some("S has no positive eigenvalue; θ̇ set to zero".into()));
    }
    let cutoff = reg.rel_cutoff * lambda_max;
    let mut rank = 0;
    for (k, &l) in eigenvalues.iter().enumerate() {
        if l > cutoff {
            rank += 1;
            accumulate(k, project(k) / (l + shift));
        }
    }
    (rank, shift, lambda_max, lambda_min, None)
}

/// Pseudo-solution of `S θ̇ = −i F` through the eigendecomposition of S.
pub fn solve_motion(s: &GeometricTensor, f: &ForceVector, reg: &Regularization) -> Result<MotionSolution> {
    let p = s.s.nrows();
    if f.f.len() != p {
        return Err(Error::Dimension { expected: p, actual: f.f.len() });
    }
    let eig = s
        .s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Invalid(format!("eigendecomposition failed: {e:?}")))?;
    let u = eig.U();
    let lambdas: Vec<f64> = (0..p).map(|k| eig.S().column_vector()[k].re).collect();
    let rhs: Vec<C64> = f.f.iter().map(|v| C64::new(0.0, -1.0) * v).collect();
    let mean_diagonal = (0..p).map(|i| s.s[(i, i)].re).sum::<f64>() / p.max(1) as f64;
    let mut theta_dot = vec![C64::new(0.0, 0.0); p];
    let (retained_rank, shift, lambda_max, lambda_min, warning) = spectral_solve(
        &lambdas,
        reg,
        mean_diagonal,
        |k| (0..p).map(|i| u[(i, k)].conj() * rhs[i]).sum(),
        |k, c| {
            for i in 0..p {
                theta_dot[i] += u[(i, k)] * c;
            }
        },
    );
    Ok(MotionSolution { theta_dot, retained_rank, shift, lambda_max, lambda_min, warning })
}

/// Same solution as [`solve_motion`], computed from the centered samples.
/// When there are fewer samples than parameters the decomposition is done
/// on the `M × M` Gram matrix `X X†`, which shares the nonzero spectrum of S.
pub fn solve_from_samples(c: &CenteredSamples, reg: &Regularization) -> Result<MotionSolution> {
    let (m, p) = (c.n_samples(), c.n_params());
    if m >= p {
        return solve_motion(&c.geometric_tensor(), &c.force, reg);
    }
    let gram = &c.x * c.x.adjoint();
    let gram = Mat::from_fn(m, m, |i, j| (gram[(i, j)] + gram[(j, i)].conj()) * 0.5);
    let eig = gram
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Invalid(format!("eigendecomposition failed: {e:?}")))?;
    let w = eig.U();
    let lambdas: Vec<f64> = (0..m).map(|k| eig.S().column_vector()[k].re).collect();
    let rhs: Vec<C64> = c.force.f.iter().map(|v| C64::new(0.0, -1.0) * v).collect();
    let y = matvec(&c.x, &rhs);
    let mean_diagonal = (0..m).map(|i| gram[(i, i)].re).sum::<f64>() / p as f64;
    let mut z = vec![C64::new(0.0, 0.0); m];
    let (retained_rank, shift, lambda_max, lambda_min, warning) = spectral_solve(
        &lambdas,
        reg,
        mean_diagonal,
        |k| (0..m).map(|i| w[(i, k)].conj() * y[i]).sum::<C64>() / lambdas[k],
        |k, coef| {
            for i in 0..m {
                z[i] += w[(i, k)] * coef;
            }
        },
    );
    let theta_dot = matvec_adjoint(&c.x, &z);
    Ok(MotionSolution { theta_dot, retained_rank, shift, lambda_max, lambda_min: lambda_min.min(0.0), warning })
}

fn guarded(delta_e2: f64, energy_mean: C64) -> bool {
    delta_e2 > DELTA_E2_GUARD * energy_mean.norm_sqr() && delta_e2 > 0.0
}

/// Raw (unclamped) `1 + [θ̇†(Sθ̇ + iF) − iF†θ̇]/δE²`, or `None` when δE² is
/// below the guard.
pub fn tdvp_error_raw(theta_dot: &[C64], s: &GeometricTensor, f: &ForceVector) -> Option<f64> {
    if !guarded(f.delta_e2, f.energy_mean) {
        return None;
    }
    let p = theta_dot.len();
    let s_theta: Vec<C64> = (0..p).map(|i| (0..p).map(|j| s.s[(i, j)] * theta_dot[j]).sum()).collect();
    let i = C64::new(0.0, 1.0);
    let bracket = dot(theta_dot, &s_theta) + i * dot(theta_dot, &f.f) - i * dot(&f.f, theta_dot);
    Some(1.0 + bracket.re / f.delta_e2)
}

/// Clamps a raw r² to `[0, ∞)`, rejecting values below the allowance.
pub fn clamp_r2(raw: f64) -> Result<f64> {
    if raw < -R2_NEGATIVE_ALLOWANCE || !raw.is_finite() {
        return Err(Error::Invalid(format!("r² = {raw:e} is below the rounding allowance")));
    }
    Ok(raw.max(0.0))
}

/// r² of a solution; `Ok(None)` when δE² is below the guard.
pub fn tdvp_error(theta_dot: &[C64], s: &GeometricTensor, f: &ForceVector) -> Result<Option<f64>> {
    tdvp_error_raw(theta_dot, s, f).map(clamp_r2).transpose()
}

/// Raw r² evaluated with the moments of `c` (S applied through X).
pub fn tdvp_error_samples_raw(theta_dot: &[C64], c: &CenteredSamples) -> Option<f64> {
    if !guarded(c.force.delta_e2, c.force.energy_mean) {
        return None;
    }
    let x_theta = matvec(&c.x, theta_dot);
    let quad: f64 = x_theta.iter().map(|v| v.norm_sqr()).sum();
    Some(1.0 + (quad - 2.0 * dot(theta_dot, &c.force.f).im) / c.force.delta_e2)
}

/// r² with θ̇ from one sample set and S, F, δE² from an independent one.
pub fn validation_error(theta_dot: &[C64], samples_b: &SampleSet) -> Result<Option<f64>> {
    let c = CenteredSamples::new(samples_b)?;
    if theta_dot.len() != c.n_params() {
        return Err(Error::Dimension { expected: c.n_params(), actual: theta_dot.len() });
    }
    tdvp_error_samples_raw(theta_dot, &c).map(clamp_r2).transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Heun,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdvpConfig {
    pub n_steps: usize,
    pub integrator: Integrator,
    pub regularization: Regularization,
    /// Validation r² every this many steps; 0 disables it.
    pub validation_interval: usize,
}

impl Default for TdvpConfig {
    fn default() -> Self {
        TdvpConfig {
            n_steps: 1000,
            integrator: Integrator::Heun,
            regularization: Regularization::default(),
            validation_interval: 10,
        }
    }
}

/// Where S and F come from.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// Exact Born-weighted sums over all `2^N` configurations.
    Exhaustive,
    Sampled { main: Box<MarkovSampler>, validation: Box<MarkovSampler> },
}

impl Estimator {
    fn draw(&mut self, psi: &JastrowParameters, ham: &ProblemHamiltonian, t: f64) -> Result<SampleSet> {
        match self {
            Estimator::Exhaustive => exhaustive_sample_set(psi, ham, t),
            Estimator::Sampled { main, .. } => main.draw(psi, ham, t),
        }
    }

    fn draw_validation(&mut self, psi: &JastrowParameters, ham: &ProblemHamiltonian, t: f64) -> Result<SampleSet> {
        match self {
            Estimator::Exhaustive => exhaustive_sample_set(psi, ham, t),
            Estimator::Sampled { validation, .. } => validation.draw(psi, ham, t),
        }
    }
}

/// Per-step telemetry; one JSON line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdvpStepReport {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub energy: C64,
    pub delta_e2: f64,
    pub r2: Option<f64>,
    pub r2_raw: Option<f64>,
    pub r2_validation: Option<f64>,
    pub theta_dot_norm: f64,
    pub acceptance_rate: f64,
    pub exchange_rate: Option<f64>,
    pub n_samples: usize,
    pub n_params: usize,
    pub flagged_count: usize,
    pub retained_rank: usize,
    pub shift: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub warnings: Vec<String>,
    pub wall_time: f64,
}

struct Stage {
    samples: SampleSet,
    centered: CenteredSamples,
    solution: MotionSolution,
}

/// Owns the state of one t-VMC run.
pub struct TdvpEngine {
    ham: ProblemHamiltonian,
    psi: JastrowParameters,
    t: f64,
    step: usize,
    config: TdvpConfig,
    estimator: Estimator,
    last_samples: Option<SampleSet>,
}

impl TdvpEngine {
    pub fn new(ham: ProblemHamiltonian, psi: JastrowParameters, config: TdvpConfig, estimator: Estimator) -> Result<Self> {
        if ham.n_sites() != psi.n_sites() {
            return Err(Error::Dimension { expected: ham.n_sites(), actual: psi.n_sites() });
        }
        if config.n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        Ok(TdvpEngine { ham, psi, t: 0.0, step: 0, config, estimator, last_samples: None })
    }

    pub fn psi(&self) -> &JastrowParameters {
        &self.psi
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn hamiltonian(&self) -> &ProblemHamiltonian {
        &self.ham
    }

    pub fn dt(&self) -> f64 {
        self.ham.schedule().total_time / self.config.n_steps as f64
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.n_steps
    }

    /// Samples from the most recent first-stage draw.
    pub fn last_samples(&self) -> Option<&SampleSet> {
        self.last_samples.as_ref()
    }

    /// Draws a fresh sample set at the current parameters and time.
    pub fn sample(&mut self) -> Result<SampleSet> {
        self.estimator.draw(&self.psi, &self.ham, self.t)
    }

    fn stage(&mut self, psi: &JastrowParameters, t: f64) -> Result<Stage> {
        let samples = self.estimator.draw(psi, &self.ham, t)?;
        let centered = CenteredSamples::new(&samples)?;
        let solution = solve_from_samples(&centered, &self.config.regularization)?;
        Ok(Stage { samples, centered, solution })
    }

    fn shifted(&self, deltas: &[(&[C64], f64)]) -> Result<JastrowParameters> {
        let mut psi = self.psi.clone();
        for (d, scale) in deltas {
            psi.add_scaled(d, *scale)?;
        }
        Ok(psi)
    }

    /// One integrator step of the equation of motion.
    pub fn step(&mut self) -> Result<TdvpStepReport> {
        if self.is_finished() {
            return Err(Error::Invalid("run already reached the final time".into()));
        }
        let start = Instant::now();
        let dt = self.dt();
        let t0 = self.t;
        let psi0 = self.psi.clone();
        let first = self.stage(&psi0, t0)?;
        let k1 = first.solution.theta_dot.clone();
        let mut warnings: Vec<String> = first.solution.warning.iter().cloned().collect();
        if first.centered.n_samples() < first.centered.n_params() && !first.samples.exhaustive {
            warnings.push(format!(
                "M = {} < P = {}; S is rank deficient",
                first.centered.n_samples(),
                first.centered.n_params()
            ));
        }
        let update: Vec<C64> = match self.config.integrator {
            Integrator::Heun => {
                let psi1 = self.shifted(&[(&k1, dt)])?;
                let k2 = self.stage(&psi1, t0 + dt)?.solution.theta_dot;
                k1.iter().zip(&k2).map(|(a, b)| (a + b) * 0.5).collect()
            }
            Integrator::Rk4 => {
                let psi1 = self.shifted(&[(&k1, 0.5 * dt)])?;
                let k2 = self.stage(&psi1, t0 + 0.5 * dt)?.solution.theta_dot;
                let psi2 = self.shifted(&[(&k2, 0.5 * dt)])?;
                let k3 = self.stage(&psi2, t0 + 0.5 * dt)?.solution.theta_dot;
                let psi3 = self.shifted(&[(&k3, dt)])?;
                let k4 = self.stage(&psi3, t0 + dt)?.solution.theta_dot;
                (0..k1.len()).map(|i| (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) / 6.0).collect()
            }
        };
        let r2_raw = tdvp_error_samples_raw(&k1, &first.centered);
        let r2 = r2_raw.map(clamp_r2).transpose()?;
        let interval = self.config.validation_interval;
        let r2_validation = if interval > 0 && self.step % interval == 0 {
            let b = self.estimator.draw_validation(&psi0, &self.ham, t0)?;
            validation_error(&k1, &b)?
        } else {
            None
        };
        self.psi.add_scaled(&update, dt)?;
        self.step += 1;
        self.t = if self.step == self.config.n_steps { self.ham.schedule().total_time } else { self.step as f64 * dt };
        let report = TdvpStepReport {
            step: self.step - 1,
            t: t0,
            dt,
            energy: first.centered.force.energy_mean,
            delta_e2: first.centered.force.delta_e2,
            r2,
            r2_raw,
            r2_validation,
            theta_dot_norm: k1.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
            acceptance_rate: first.samples.acceptance_rate,
            exchange_rate: first.samples.exchange_rate,
            n_samples: first.samples.len(),
            n_params: first.centered.n_params(),
            flagged_count: first.samples.flagged_count,
            retained_rank: first.solution.retained_rank,
            shift: first.solution.shift,
            lambda_max: first.solution.lambda_max,
            lambda_min: first.solution.lambda_min,
            warnings,
            wall_time: start.elapsed().as_secs_f64(),
        };
        self.last_samples = Some(first.samples);
        Ok(report)
    }

    /// Steps to the final time, handing every report to `sink`.
    pub fn run(&mut self, mut sink: impl FnMut(&TdvpStepReport) -> Result<()>) -> Result<Vec<TdvpStepReport>> {
        let mut reports = Vec::with_capacity(self.config.n_steps);
        while !self.is_finished() {
            let r = self.step()?;
            sink(&r)?;
            reports.push(r);
        }
        Ok(reports)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedR2 {
    pub value: Option<f64>,
    pub unreliable: bool,
    pub flagged_steps: usize,
}

/// Trapezoidal `∫₀ᵀ r²(t) dt` over report times. Flagged steps are linearly
/// interpolated from their neighbours; the ends are held constant out to 0
/// and T. More than 5% flagged steps marks the value unreliable.
pub fn integrated_r2(points: &[(f64, Option<f64>)], total_time: f64) -> IntegratedR2 {
    let flagged_steps = points.iter().filter(|p| p.1.is_none()).count();
    let known: Vec<(f64, f64)> = points.iter().filter_map(|&(t, r)| r.map(|r| (t, r))).collect();
    let unreliable = flagged_steps * 20 > points.len() || known.is_empty();
    if known.is_empty() {
        return IntegratedR2 { value: None, unreliable, flagged_steps };
    }
    let value_at = |t: f64| -> f64 {
        let pos = known.partition_point(|k| k.0 <= t);
        if pos == 0 {
            return known[0].1;
        }
        if pos == known.len() {
            return known[known.len() - 1].1;
        }
        let (t0, v0) = known[pos - 1];
        let (t1, v1) = known[pos];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    };
    let mut grid: Vec<(f64, f64)> = points.iter().map(|&(t, r)| (t, r.unwrap_or_else(|| value_at(t)))).collect();
    if grid.first().is_some_and(|g| g.0 > 0.0) {
        grid.insert(0, (0.0, grid[0].1));
    }
    if grid.last().is_some_and(|g| g.0 < total_time) {
        let last = grid[grid.len() - 1].1;
        grid.push((total_time, last));
    }
    let mut total = 0.0;
    for w in grid.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        total += 0.5 * (v0 + v1) * (t1 - t0);
    }
    IntegratedR2 { value: Some(total), unreliable, flagged_steps }
}

/// Convenience wrapper over step reports.
pub fn integrated_r2_reports(reports: &[TdvpStepReport], total_time: f64) -> IntegratedR2 {
    let points: Vec<(f64, Option<f64>)> = reports.iter().map(|r| (r.t, r.r2)).collect();
    integrated_r2(&points, total_time)
}
