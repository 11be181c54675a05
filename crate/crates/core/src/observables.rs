//! Spin-spin correlations, the correlation error ε_c, residual energies,
//! realization averages and the linear R² → ε_c fit.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::DenseState;
use crate::sampler::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSource {
    Tvmc,
    Exact,
    External,
}

/// `c_ij = ⟨σ^z_i σ^z_j⟩`, stored `N × N` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub n_sites: usize,
    pub source: CorrelationSource,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
}

impl CorrelationMatrix {
    /// Checks symmetry, the unit diagonal and `|c_ij| ≤ 1 + 3·error`.
    pub fn new(n_sites: usize, source: CorrelationSource, values: Vec<f64>, errors: Option<Vec<f64>>) -> Result<Self> {
        let m = CorrelationMatrix { n_sites, source, values, errors };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_sites;
        if self.values.len() != n * n {
            return Err(Error::Dimension { expected: n * n, actual: self.values.len() });
        }
        if let Some(e) = &self.errors {
            if e.len() != n * n {
                return Err(Error::Dimension { expected: n * n, actual: e.len() });
            }
        }
        for i in 0..n {
            if (self.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!("c[{i}][{i}] = {} is not 1", self.get(i, i))));
            }
            for j in i + 1..n {
                if (self.get(i, j) - self.get(j, i)).abs() > 1e-12 {
                    return Err(Error::Invalid(format!("correlation matrix not symmetric at ({i}, {j})")));
                }
                let err = self.errors.as_ref().map_or(0.0, |e| e[i * n + j]);
                if self.get(i, j).abs() > 1.0 + 3.0 * err + 1e-12 || !self.get(i, j).is_finite() {
                    return Err(Error::Invalid(format!("|c[{i}][{j}]| = {} exceeds 1", self.get(i, j))));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_sites + j]
    }

    pub fn error(&self, i: usize, j: usize) -> Option<f64> {
        self.errors.as_ref().map(|e| e[i * self.n_sites + j])
    }

    /// Off-diagonal upper-triangle entries in row-major order.
    pub fn upper(&self) -> Vec<f64> {
        let n = self.n_sites;
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect()
    }
}

/// Born-weighted `⟨σ_i σ_j⟩` over a sample set. Monte Carlo sets with more
/// than one chain get jackknife errors with one chain left out at a time.
pub fn correlations_mc(samples: &SampleSet) -> Result<CorrelationMatrix> {
    if samples.is_empty() {
        return Err(Error::Invalid("empty sample set".into()));
    }
    let n = samples.n_sites;
    let n_chains = samples.n_chains();
    let mut per_chain = vec![vec![0.0; n * n]; n_chains];
    let mut chain_weight = vec![0.0; n_chains];
    for m in 0..samples.len() {
        let s = samples.configuration(m);
        let w = samples.weights[m];
        let c = samples.chain_ids[m];
        chain_weight[c] += w;
        let acc = &mut per_chain[c];
        for i in 0..n {
            let wi = w * f64::from(s[i]);
            for j in i + 1..n {
                acc[i * n + j] += wi * f64::from(s[j]);
            }
        }
    }
    let total_weight: f64 = chain_weight.iter().sum();
    let mut total = vec![0.0; n * n];
    for acc in &per_chain {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = total[i * n + j] / total_weight;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    let active: Vec<usize> = (0..n_chains).filter(|&c| chain_weight[c] > 0.0).collect();
    let errors = (!samples.exhaustive && active.len() > 1).then(|| {
        let k = active.len() as f64;
        let mut errors = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let idx = i * n + j;
                let loo: Vec<f64> = active
                    .iter()
                    .map(|&c| (total[idx] - per_chain[c][idx]) / (total_weight - chain_weight[c]))
                    .collect();
                let mean = loo.iter().sum::<f64>() / k;
                let var = loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (k - 1.0) / k;
                errors[idx] = var.sqrt();
                errors[j * n + i] = var.sqrt();
            }
        }
        errors
    });
    let mut m = CorrelationMatrix { n_sites: n, source: CorrelationSource::Tvmc, values, errors };
    if samples.exhaustive {
        m.source = CorrelationSource::Exact;
    }
    Ok(m)
}

/// Exact correlations of a dense state.
pub fn correlations_exact(state: &DenseState) -> CorrelationMatrix {
    CorrelationMatrix {
        n_sites: state.n_sites,
        source: CorrelationSource::Exact,
        values: state.zz_correlations(),
        errors: None,
    }
}

/// `ε_c = sqrt( Σ_{i<j} (c_ij − c̃_ij)² / Σ_{i<j} c̃_ij² )`.
pub fn correlation_error(c: &CorrelationMatrix, reference: &CorrelationMatrix) -> Result<f64> {
    if c.n_sites != reference.n_sites {
        return Err(Error::Dimension { expected: reference.n_sites, actual: c.n_sites });
    }
    let (a, b) = (c.upper(), reference.upper());
    let norm: f64 = b.iter().map(|x| x * x).sum();
    if !(norm > 0.0) {
        return Err(Error::Invalid("reference correlations vanish off the diagonal".into()));
    }
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((diff / norm).sqrt())
}

/// `(Re E − E₀) / (N K)`: residual energy per spin in units of K.
pub fn residual_energy(energy: C64, e0: f64, kappa: f64, n_sites: usize) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Invalid(format!("normalized residual energy needs K > 0, got {kappa}")));
    }
    if n_sites == 0 {
        return Err(Error::Invalid("no sites".into()));
    }
    Ok((energy.re - e0) / (n_sites as f64 * kappa))
}

/// Outcome of one realization of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub seed: u64,
    pub epsilon_c: Option<f64>,
    pub r2_integrated: Option<f64>,
    pub final_energy: Option<C64>,
    /// `(t, e_res)` checkpoints.
    #[serde(default)]
    pub residual_energy: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean and root-mean-square deviation from the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub rms: f64,
    pub count: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let count = sorted.len();
        let mean = sorted.iter().sum::<f64>() / count as f64;
        let rms = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64).sqrt();
        Some(Spread { mean, rms, count })
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count > 1 {
            self.rms / ((self.count - 1) as f64).sqrt()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_realizations: usize,
    pub n_failed: usize,
    pub partial: bool,
    pub epsilon_c: Option<Spread>,
    pub r2_integrated: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationEnsembleResult {
    pub n_sites: usize,
    pub records: Vec<RealizationRecord>,
    pub summary: EnsembleSummary,
}

impl RealizationEnsembleResult {
    pub fn new(n_sites: usize, records: Vec<RealizationRecord>) -> Self {
        let summary = aggregate(&records);
        RealizationEnsembleResult { n_sites, records, summary }
    }
}

/// Realization averages; independent of record order.
pub fn aggregate(records: &[RealizationRecord]) -> EnsembleSummary {
    let n_failed = records.iter().filter(|r| r.error.is_some()).count();
    let eps: Vec<f64> = records.iter().filter_map(|r| r.epsilon_c).collect();
    let r2: Vec<f64> = records.iter().filter_map(|r| r.r2_integrated).collect();
    EnsembleSummary {
        n_realizations: records.len(),
        n_failed,
        partial: n_failed > 0,
        epsilon_c: Spread::of(&eps),
        r2_integrated: Spread::of(&r2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub pearson: f64,
    pub n_points: usize,
    /// Standard error of the intercept.
    pub intercept_error: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Unweighted least squares of ε̄_c (y) against R̄² (x).
pub fn fit_r2_epsilon(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Invalid("a fit needs at least two sizes".into()));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-300 * (1.0 + mx * mx)) || sxx.sqrt() <= 1e-12 * mx.abs() {
        return Err(Error::Invalid("R² values have no spread; fit is degenerate".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let pearson = if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 1.0 };
    let intercept_error = if n > 2 {
        let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let sigma2 = rss / (nf - 2.0);
        (sigma2 * (1.0 / nf + mx * mx / sxx)).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, pearson, n_points: n, intercept_error })
}
