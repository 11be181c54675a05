//! Annealing schedules and the time-dependent Hamiltonian
//! `H(t) = Γ(t) H_D + K(t) H_T` with `H_D = -Σ_i σ^x_i` and
//! `H_T = Σ_<ij> J_ij σ^z_i σ^z_j`. Units have ħ = 1.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{JastrowParameters, SpinConfiguration};
use crate::error::{Error, Result};
use crate::lattice::{CouplingRealization, Lattice};

/// Amplitude of the default trigonometric schedule.
pub const DEFAULT_AMPLITUDE: f64 = 2.5;
/// Default annealing time.
pub const DEFAULT_TOTAL_TIME: f64 = 7.0;
/// Fraction of the annealing time at which the default schedule has Γ = K.
pub const DEFAULT_CROSSING_FRACTION: f64 = 2.75 / 7.0;

/// Γ(t) and K(t) families.
///
/// `trigonometric` uses `Γ = A cos²(πs/2)`, `K = A sin²(πs/2)` on the warped
/// time `s = (t/T)^p`, where `p` puts the crossing at `crossing_fraction · T`.
/// `constant` freezes both values and is meant for tests and relaxation runs,
/// not for annealing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleFamily {
    Linear { amplitude: f64 },
    Trigonometric { amplitude: f64, crossing_fraction: f64 },
    Tabulated { gamma: Vec<[f64; 2]>, kappa: Vec<[f64; 2]> },
    Constant { gamma: f64, kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub total_time: f64,
    #[serde(flatten)]
    pub family: ScheduleFamily,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            total_time: DEFAULT_TOTAL_TIME,
            family: ScheduleFamily::Trigonometric {
                amplitude: DEFAULT_AMPLITUDE,
                crossing_fraction: DEFAULT_CROSSING_FRACTION,
            },
        }
    }
}

impl AnnealSchedule {
    pub fn new(total_time: f64, family: ScheduleFamily) -> Result<Self> {
        let s = AnnealSchedule { total_time, family };
        s.validate()?;
        Ok(s)
    }

    pub fn trigonometric(total_time: f64, amplitude: f64) -> Result<Self> {
        Self::new(
            total_time,
            ScheduleFamily::Trigonometric { amplitude, crossing_fraction: DEFAULT_CROSSING_FRACTION },
        )
    }

    pub fn constant(total_time: f64, gamma: f64, kappa: f64) -> Result<Self> {
        Self::new(total_time, ScheduleFamily::Constant { gamma, kappa })
    }

    /// Whether this family interpolates from driver to target.
    pub fn is_annealing(&self) -> bool {
        !matches!(self.family, ScheduleFamily::Constant { .. })
    }

    /// Checks parameters and, for annealing families, the boundary
    /// conditions `Γ(0) ≥ 100 K(0)` and `K(T) ≥ 100 Γ(T)`.
    pub fn validate(&self) -> Result<()> {
        let total = self.total_time;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Schedule(format!("total time must be positive, got {total}")));
        }
        match &self.family {
            ScheduleFamily::Linear { amplitude } => check_amplitude(*amplitude)?,
            ScheduleFamily::Trigonometric { amplitude, crossing_fraction } => {
                check_amplitude(*amplitude)?;
                if !(*crossing_fraction > 0.0 && *crossing_fraction < 1.0) {
                    return Err(Error::Schedule(format!(
                        "crossing_fraction must lie in (0, 1), got {crossing_fraction}"
                    )));
                }
            }
            ScheduleFamily::Tabulated { gamma, kappa } => {
                check_table("gamma", gamma, total)?;
                check_table("kappa", kappa, total)?;
            }
            ScheduleFamily::Constant { gamma, kappa } => {
                if !(gamma.is_finite() && kappa.is_finite() && *gamma >= 0.0 && *kappa >= 0.0) {
                    return Err(Error::Schedule("constant schedule needs finite nonnegative values".into()));
                }
            }
        }
        if self.is_annealing() {
            let (g0, k0) = self.eval(0.0)?;
            let (g1, k1) = self.eval(total)?;
            if g0 < 100.0 * k0 {
                return Err(Error::Schedule(format!("Γ(0) = {g0} is not ≥ 100·K(0) = {}", 100.0 * k0)));
            }
            if k1 < 100.0 * g1 {
                return Err(Error::Schedule(format!("K(T) = {k1} is not ≥ 100·Γ(T) = {}", 100.0 * g1)));
            }
        }
        Ok(())
    }

    /// `(Γ(t), K(t))`. Times within `1e-9 · T` outside `[0, T]` are clamped.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let total = self.total_time;
        let slack = 1e-9 * total;
        if !(t >= -slack && t <= total + slack) {
            return Err(Error::TimeOutOfRange { t, total });
        }
        let t = t.clamp(0.0, total);
        let x = t / total;
        Ok(match &self.family {
            ScheduleFamily::Linear { amplitude } => (amplitude * (1.0 - x), amplitude * x),
            ScheduleFamily::Trigonometric { amplitude, crossing_fraction } => {
                let p = 0.5f64.ln() / crossing_fraction.ln();
                let angle = std::f64::consts::FRAC_PI_2 * x.powf(p);
                (amplitude * angle.cos().powi(2), amplitude * angle.sin().powi(2))
            }
            ScheduleFamily::Tabulated { gamma, kappa } => (interpolate(gamma, t), interpolate(kappa, t)),
            ScheduleFamily::Constant { gamma, kappa } => (*gamma, *kappa),
        })
    }

    /// Time at which Γ(t) = K(t), if Γ - K changes sign exactly once.
    pub fn crossing_time(&self) -> Option<f64> {
        let g = |t: f64| {
            let (gamma, kappa) = self.eval(t).ok()?;
            Some(gamma - kappa)
        };
        let grid = 2000;
        let mut bracket = None;
        let mut changes = 0;
        let mut prev = g(0.0)?;
        for i in 1..=grid {
            let t = self.total_time * i as f64 / grid as f64;
            let cur = g(t)?;
            if (prev > 0.0) != (cur > 0.0) {
                changes += 1;
                bracket = Some((self.total_time * (i - 1) as f64 / grid as f64, t));
            }
            prev = cur;
        }
        if changes != 1 {
            return None;
        }
        let (mut lo, mut hi) = bracket?;
        let sign_lo = g(lo)? > 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (g(mid)? > 0.0) == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

fn check_amplitude(a: f64) -> Result<()> {
    if a.is_finite() && a > 0.0 {
        Ok(())
    } else {
        Err(Error::Schedule(format!("amplitude must be positive, got {a}")))
    }
}

fn check_table(name: &str, knots: &[[f64; 2]], total: f64) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::Schedule(format!("{name} table needs at least two knots")));
    }
    if knots.windows(2).any(|w| !(w[1][0] > w[0][0])) {
        return Err(Error::Schedule(format!("{name} knot times must be strictly increasing")));
    }
    if knots[0][0] > 0.0 || knots[knots.len() - 1][0] < total {
        return Err(Error::Schedule(format!("{name} table must cover [0, {total}]")));
    }
    if knots.iter().any(|k| !(k[1].is_finite() && k[1] >= 0.0)) {
        return Err(Error::Schedule(format!("{name} values must be finite and nonnegative")));
    }
    Ok(())
}

fn interpolate(knots: &[[f64; 2]], t: f64) -> f64 {
    let pos = knots.partition_point(|k| k[0] <= t);
    if pos == 0 {
        return knots[0][1];
    }
    if pos == knots.len() {
        return knots[knots.len() - 1][1];
    }
    let [t0, v0] = knots[pos - 1];
    let [t1, v1] = knots[pos];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Reads a two-column `t value` table; blank lines and `#` comments are
/// skipped.
pub fn parse_schedule_table(text: &str) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Schedule(format!("table line {}: {e}", no + 1)))?;
        if fields.len() != 2 {
            return Err(Error::Schedule(format!("table line {}: expected two columns", no + 1)));
        }
        out.push([fields[0], fields[1]]);
    }
    Ok(out)
}

/// A coupling realization on a fixed graph together with its schedule.
#[derive(Debug, Clone)]
pub struct ProblemHamiltonian {
    n_sites: usize,
    edges: Vec<(usize, usize)>,
    couplings: Vec<f64>,
    schedule: AnnealSchedule,
}

impl ProblemHamiltonian {
    pub fn new(lattice: &Lattice, realization: &CouplingRealization, schedule: AnnealSchedule) -> Result<Self> {
        if realization.couplings.len() != lattice.edges().len() {
            return Err(Error::Dimension {
                expected: lattice.edges().len(),
                actual: realization.couplings.len(),
            });
        }
        if realization.lattice_id != lattice.id() {
            return Err(Error::Invalid("coupling realization belongs to a different lattice".into()));
        }
        schedule.validate()?;
        Ok(ProblemHamiltonian {
            n_sites: lattice.n_sites(),
            edges: lattice.edges().to_vec(),
            couplings: realization.couplings.clone(),
            schedule,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn schedule(&self) -> &AnnealSchedule {
        &self.schedule
    }

    pub fn with_schedule(&self, schedule: AnnealSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(ProblemHamiltonian { schedule, ..self.clone() })
    }

    /// `Σ_<ij> J_ij σ_i σ_j`.
    pub fn diagonal_energy(&self, sigma: &SpinConfiguration) -> Result<f64> {
        if sigma.len() != self.n_sites {
            return Err(Error::Dimension { expected: self.n_sites, actual: sigma.len() });
        }
        Ok(self.diagonal_energy_unchecked(sigma.spins()))
    }

    pub(crate) fn diagonal_energy_unchecked(&self, s: &[i8]) -> f64 {
        self.edges
            .iter()
            .zip(&self.couplings)
            .map(|(&(i, j), &jij)| jij * f64::from(s[i] * s[j]))
            .sum()
    }

    /// `E_loc(σ) = K Σ J σσ − Γ Σ_i ψ(σ^(i))/ψ(σ)`. A non-finite result means
    /// the amplitude ratios under- or overflowed.
    pub fn local_energy(&self, psi: &JastrowParameters, sigma: &SpinConfiguration, t: f64) -> Result<C64> {
        let (gamma, kappa) = self.schedule.eval(t)?;
        let ratios = psi.log_ratios(sigma)?;
        Ok(self.local_energy_from_ratios(sigma.spins(), &ratios, gamma, kappa))
    }

    pub(crate) fn local_energy_from_ratios(&self, s: &[i8], log_ratios: &[C64], gamma: f64, kappa: f64) -> C64 {
        let mut off = C64::new(0.0, 0.0);
        if gamma != 0.0 {
            for r in log_ratios {
                off += r.exp();
            }
        }
        C64::new(kappa * self.diagonal_energy_unchecked(s), 0.0) - off * gamma
    }
}

/// `Σ_<ij> J_ij σ_i σ_j` for a realization on `lattice`.
pub fn diagonal_energy(lattice: &Lattice, realization: &CouplingRealization, sigma: &SpinConfiguration) -> Result<f64> {
    if sigma.len() != lattice.n_sites() {
        return Err(Error::Dimension { expected: lattice.n_sites(), actual: sigma.len() });
    }
    if realization.couplings.len() != lattice.edges().len() {
        return Err(Error::Dimension { expected: lattice.edges().len(), actual: realization.couplings.len() });
    }
    let s = sigma.spins();
    Ok(lattice
        .edges()
        .iter()
        .zip(&realization.couplings)
        .map(|(&(i, j), &jij)| jij * f64::from(s[i] * s[j]))
        .sum())
}
