//! Run orchestration: configuration, single runs, realization sweeps,
//! oracle runs, scaling benchmarks and persistence.
//!
//! Every output file starts with (or embeds) the configuration echo and a
//! schema version. Step streams are line-delimited JSON, flushed per line so
//! a killed run leaves a readable prefix.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ansatz::{init_driving_ground, JastrowParameters, ParameterSnapshot};
use crate::error::{Error, Result};
use crate::exact::{self, DENSE_CAP};
use crate::lattice::{build_diamond_lattice, load_edge_list, sample_couplings, CouplingRealization, Lattice};
use crate::model::{parse_schedule_table, AnnealSchedule, ProblemHamiltonian, ScheduleFamily};
use crate::observables::{
    correlation_error, correlations_exact, correlations_mc, fit_r2_epsilon, residual_energy, CorrelationMatrix,
    LinearFit, RealizationEnsembleResult, RealizationRecord,
};
use crate::sampler::{draw_sample_set, MarkovSampler, SamplerConfig, SamplerKind};
use crate::seeds;
use crate::tdvp::{integrated_r2_reports, Estimator, IntegratedR2, TdvpConfig, TdvpEngine, TdvpStepReport};

pub const SCHEMA_VERSION: &str = "tvmc.run.v1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Overrides the root under which relative output directories are placed.
pub const OUTPUT_ROOT_ENV: &str = "TVMC_OUTPUT_ROOT";
/// Overrides the number of worker threads.
pub const WORKERS_ENV: &str = "TVMC_WORKERS";
/// Largest N for which instantaneous ground energies are computed.
pub const GROUND_ENERGY_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSpec {
    Diamond { nx: usize, ny: usize, nz_cells: usize },
    EdgeList { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Tvmc,
    Exact,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    #[default]
    MonteCarlo,
    Exhaustive,
}

/// Files holding two-column `t value` tables; when present they replace the
/// schedule family with a tabulated one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFiles {
    pub gamma: PathBuf,
    pub kappa: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// RK4 steps; derived from the spectral bound of Ĥ(t) when absent.
    pub n_steps: Option<usize>,
    /// Number of evenly spaced checkpoints after t = 0.
    pub checkpoints: usize,
    /// Compute E₀(t) at checkpoints (N ≤ 20).
    pub ground_energy: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { n_steps: None, checkpoints: 20, ground_energy: true }
    }
}

fn default_measurement() -> SamplerConfig {
    SamplerConfig {
        kind: SamplerKind::ParallelTempering,
        n_chains: 32,
        samples_per_chain: 256,
        n_replicas: 16,
        thermalization_sweeps: Some(200),
        ..SamplerConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    pub master_seed: u64,
    /// Number of coupling realizations for sweeps.
    pub realizations: usize,
    /// Explicit coupling seeds; derived from `master_seed` when absent.
    pub realization_seeds: Option<Vec<u64>>,
    pub orders: Vec<usize>,
    /// Scale of the complex Gaussian noise put on the factor matrices at t = 0.
    pub factor_init_scale: f64,
    pub schedule: AnnealSchedule,
    pub schedule_files: Option<ScheduleFiles>,
    pub tdvp: TdvpConfig,
    pub estimation: Estimation,
    pub sampler: SamplerConfig,
    /// Sampler for the final correlation measurement.
    pub measurement: SamplerConfig,
    pub oracle: OracleConfig,
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lattice: LatticeSpec::Diamond { nx: 3, ny: 3, nz_cells: 1 },
            master_seed: 0,
            realizations: 1,
            realization_seeds: None,
            orders: vec![1, 2, 4],
            factor_init_scale: DEFAULT_FACTOR_INIT_SCALE,
            schedule: AnnealSchedule::default(),
            schedule_files: None,
            tdvp: TdvpConfig::default(),
            estimation: Estimation::MonteCarlo,
            sampler: SamplerConfig::default(),
            measurement: default_measurement(),
            oracle: OracleConfig::default(),
            mode: Mode::Tvmc,
            output_dir: PathBuf::from("runs/default"),
            workers: None,
        }
    }
}

pub const DEFAULT_FACTOR_INIT_SCALE: f64 = 1e-2;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Configuration echo embedded in outputs.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn build_lattice(&self) -> Result<(Lattice, Option<Vec<f64>>)> {
        match &self.lattice {
            LatticeSpec::Diamond { nx, ny, nz_cells } => Ok((build_diamond_lattice(*nx, *ny, *nz_cells)?, None)),
            LatticeSpec::EdgeList { path } => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                load_edge_list(&text)
            }
        }
    }

    pub fn resolved_schedule(&self) -> Result<AnnealSchedule> {
        let schedule = match &self.schedule_files {
            None => self.schedule.clone(),
            Some(files) => {
                let read = |p: &Path| {
                    fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
                };
                AnnealSchedule {
                    total_time: self.schedule.total_time,
                    family: ScheduleFamily::Tabulated {
                        gamma: parse_schedule_table(&read(&files.gamma)?)?,
                        kappa: parse_schedule_table(&read(&files.kappa)?)?,
                    },
                }
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<()> {
        let (lattice, _) = self.build_lattice()?;
        self.resolved_schedule()?;
        JastrowParameters::zeros(lattice.n_sites(), &self.orders).map_err(|e| Error::Config(e.to_string()))?;
        self.sampler.validate()?;
        self.measurement.validate()?;
        if self.tdvp.n_steps == 0 {
            return Err(Error::Config("tdvp.n_steps must be positive".into()));
        }
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if let Some(seeds) = &self.realization_seeds {
            if seeds.len() < self.realizations {
                return Err(Error::Config("fewer realization_seeds than realizations".into()));
            }
        }
        if !(self.factor_init_scale >= 0.0 && self.factor_init_scale.is_finite()) {
            return Err(Error::Config("factor_init_scale must be finite and nonnegative".into()));
        }
        if self.mode != Mode::Tvmc && lattice.n_sites() > DENSE_CAP {
            return Err(Error::Config(format!("exact mode needs N ≤ {DENSE_CAP}")));
        }
        if self.estimation == Estimation::Exhaustive && lattice.n_sites() > crate::sampler::EXHAUSTIVE_CAP {
            return Err(Error::Config("exhaustive estimation needs N ≤ 20".into()));
        }
        Ok(())
    }

    /// Coupling seed of realization `index`.
    pub fn coupling_seed(&self, index: usize) -> u64 {
        match &self.realization_seeds {
            Some(s) => s[index],
            None => seeds::derive_seed(self.master_seed, "couplings", index as u64),
        }
    }

    /// Resolved output directory, honouring the output-root override.
    pub fn output_path(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

/// Installs the worker-count override (config or environment) on the global
/// thread pool. Has no effect once the pool is running.
pub fn configure_workers(config: &RunConfig) {
    let from_env = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = from_env.or(config.workers) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// RK4 steps keeping `‖Ĥ‖ dt ≤ 0.1` under the bound `Γ N + K Σ|J|`.
pub fn default_oracle_steps(ham: &ProblemHamiltonian) -> Result<usize> {
    let sum_j: f64 = ham.couplings().iter().map(|j| j.abs()).sum();
    let n = ham.n_sites() as f64;
    let total = ham.schedule().total_time;
    let mut bound: f64 = 0.0;
    for k in 0..=200 {
        let (g, kappa) = ham.schedule().eval(total * k as f64 / 200.0)?;
        bound = bound.max(g * n + kappa * sum_j);
    }
    Ok(((total * bound / 0.1).ceil() as usize).max(10))
}

/// Line-delimited JSON writer that flushes every record.
pub struct JsonLines {
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok(JsonLines { out: BufWriter::new(File::create(path)?) })
    }

    pub fn write(&mut self, record: &Value) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads every parseable record of a line-delimited file, stopping at the
/// first incomplete line.
pub fn read_json_lines(path: &Path) -> Result<Vec<Value>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map_while(|l| serde_json::from_str(l).ok()).collect())
}

fn write_document(path: &Path, value: &Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// One evaluated checkpoint of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub energy: f64,
    pub e0: Option<f64>,
    pub e_res: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub tvmc: f64,
    pub measurement: f64,
    pub oracle: f64,
    pub ground_energy: f64,
}

/// Everything produced by one realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_sites: usize,
    pub realization: RealizationRecord,
    pub reports: Vec<TdvpStepReport>,
    pub r2: Option<IntegratedR2>,
    pub tvmc_checkpoints: Vec<Checkpoint>,
    pub exact_checkpoints: Vec<Checkpoint>,
    pub tvmc_correlations: Option<CorrelationMatrix>,
    pub exact_correlations: Option<CorrelationMatrix>,
    pub final_parameters: Option<ParameterSnapshot>,
    pub timings: PhaseTimings,
}

fn e_res_at(e0: Option<f64>, energy: f64, kappa: f64, n: usize) -> Option<f64> {
    e0.and_then(|e0| residual_energy(C64::new(energy, 0.0), e0, kappa, n).ok())
}

/// Builds the Hamiltonian of realization `index`.
pub fn realization_hamiltonian(config: &RunConfig, index: usize) -> Result<(Lattice, CouplingRealization, ProblemHamiltonian)> {
    let (lattice, file_couplings) = config.build_lattice()?;
    let seed = config.coupling_seed(index);
    let realization = match file_couplings {
        Some(j) if index == 0 && config.realization_seeds.is_none() => CouplingRealization::from_values(&lattice, j, seed)?,
        _ => sample_couplings(&lattice, seed),
    };
    let ham = ProblemHamiltonian::new(&lattice, &realization, config.resolved_schedule()?)?;
    Ok((lattice, realization, ham))
}

fn checkpoint_steps(n_steps: usize, checkpoints: usize) -> Vec<usize> {
    let k = checkpoints.clamp(1, n_steps);
    let mut steps: Vec<usize> = (0..=k).map(|c| (c * n_steps + k / 2) / k).collect();
    steps.dedup();
    steps
}

/// Runs realization `index` of `config`, persisting into `dir`.
pub fn run_realization(config: &RunConfig, index: usize, dir: &Path) -> Result<RunRecord> {
    config.validate()?;
    let (lattice, realization, ham) = realization_hamiltonian(config, index)?;
    let n = lattice.n_sites();
    let header = |stream: &str| {
        json!({
            "record": "header",
            "schema": SCHEMA_VERSION,
            "stream": stream,
            "code_version": CODE_VERSION,
            "config": config.echo(),
            "realization": index,
            "coupling_seed": realization.seed,
            "generator": realization.generator,
            "lattice_id": lattice.id(),
            "n_sites": n,
        })
    };
    fs::create_dir_all(dir)?;
    write_document(
        &dir.join("instance.json"),
        &json!({
            "schema": SCHEMA_VERSION,
            "config": config.echo(),
            "instance": crate::lattice::InstanceDocument::new(&lattice, Some(&realization)),
        }),
    )?;
    let mut timings = PhaseTimings::default();
    let want_e0 = config.oracle.ground_energy && n <= GROUND_ENERGY_CAP && config.mode != Mode::Tvmc
        || config.oracle.ground_energy && n <= GROUND_ENERGY_CAP && config.mode == Mode::Tvmc && n <= DENSE_CAP;
    let mut ground_cache: Vec<(f64, f64)> = Vec::new();
    let mut ground = |t: f64, timings: &mut PhaseTimings| -> Result<Option<f64>> {
        if !want_e0 {
            return Ok(None);
        }
        if let Some(&(_, e)) = ground_cache.iter().find(|(tt, _)| (tt - t).abs() < 1e-12) {
            return Ok(Some(e));
        }
        let start = Instant::now();
        let e = exact::ground_energy(&ham, t)?;
        timings.ground_energy += start.elapsed().as_secs_f64();
        ground_cache.push((t, e));
        Ok(Some(e))
    };

    let mut exact_checkpoints = Vec::new();
    let mut exact_correlations = None;
    if config.mode != Mode::Tvmc {
        let start = Instant::now();
        let n_steps = match config.oracle.n_steps {
            Some(s) => s,
            None => default_oracle_steps(&ham)?,
        };
        let marks = checkpoint_steps(n_steps, config.oracle.checkpoints);
        let mut states = Vec::new();
        let (state, stats) = exact::exact_evolve(&ham, n_steps, |step, t, s| {
            if marks.contains(&step) {
                states.push((t, exact::energy(&ham, t, s)?, s.zz_correlations()));
            }
            Ok(())
        })?;
        timings.oracle = start.elapsed().as_secs_f64();
        let mut out = JsonLines::create(&dir.join("exact.jsonl"))?;
        let mut head = header("exact");
        head["oracle_steps"] = json!(n_steps);
        head["max_norm_drift"] = json!(stats.max_norm_drift);
        out.write(&head)?;
        for (t, energy, c) in states {
            let (_, kappa) = ham.schedule().eval(t)?;
            let e0 = ground(t, &mut timings)?;
            let cp = Checkpoint { t, energy, e0, e_res: e_res_at(e0, energy, kappa, n), correlations: Some(c) };
            let mut rec = serde_json::to_value(&cp)?;
            rec["record"] = json!("checkpoint");
            out.write(&rec)?;
            exact_checkpoints.push(cp);
        }
        exact_correlations = Some(correlations_exact(&state));
    }

    let mut reports = Vec::new();
    let mut tvmc_checkpoints = Vec::new();
    let mut tvmc_correlations = None;
    let mut final_parameters = None;
    let mut r2 = None;
    let mut final_energy = None;
    if config.mode != Mode::Exact {
        let start = Instant::now();
        let mut psi = init_driving_ground(n, &config.orders)?;
        let mut noise_rng = seeds::rng_from_seed(seeds::derive_seed(config.master_seed, "factor-noise", index as u64));
        psi.add_factor_noise(config.factor_init_scale, &mut noise_rng);
        let estimator = match config.estimation {
            Estimation::Exhaustive => Estimator::Exhaustive,
            Estimation::MonteCarlo => Estimator::Sampled {
                main: Box::new(MarkovSampler::new(
                    n,
                    config.sampler.clone(),
                    seeds::derive_seed(config.master_seed, "sampler", index as u64),
                )?),
                validation: Box::new(MarkovSampler::new(
                    n,
                    config.sampler.clone(),
                    seeds::derive_seed(config.master_seed, "validation", index as u64),
                )?),
            },
        };
        let mut engine = TdvpEngine::new(ham.clone(), psi, config.tdvp.clone(), estimator)?;
        let marks = checkpoint_steps(config.tdvp.n_steps, config.oracle.checkpoints);
        let mut out = JsonLines::create(&dir.join("steps.jsonl"))?;
        let mut head = header("tvmc");
        head["n_params"] = json!(engine.psi().n_params());
        out.write(&head)?;
        let outcome: Result<()> = (|| {
            while !engine.is_finished() {
                let report = engine.step()?;
                let mut rec = serde_json::to_value(&report)?;
                rec["record"] = json!("step");
                out.write(&rec)?;
                if marks.contains(&report.step) {
                    let (_, kappa) = ham.schedule().eval(report.t)?;
                    let e0 = ground(report.t, &mut timings)?;
                    let energy = report.energy.re;
                    let cp = Checkpoint { t: report.t, energy, e0, e_res: e_res_at(e0, energy, kappa, n), correlations: None };
                    let mut rec = serde_json::to_value(&cp)?;
                    rec["record"] = json!("checkpoint");
                    out.write(&rec)?;
                    tvmc_checkpoints.push(cp);
                }
                reports.push(report);
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            out.write(&json!({"record": "error", "message": e.to_string(), "exit_code": e.exit_code(), "t": engine.t()}))?;
            return Err(e);
        }
        timings.tvmc = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let total = ham.schedule().total_time;
        let samples = match config.estimation {
            Estimation::Exhaustive => crate::sampler::exhaustive_sample_set(engine.psi(), &ham, total)?,
            Estimation::MonteCarlo => draw_sample_set(
                engine.psi(),
                &ham,
                total,
                &config.measurement,
                seeds::derive_seed(config.master_seed, "measurement", index as u64),
            )?,
        };
        let c = correlations_mc(&samples)?;
        let energy = samples.mean_energy();
        final_energy = Some(energy);
        let (_, kappa) = ham.schedule().eval(total)?;
        let e0 = ground(total, &mut timings)?;
        let cp = Checkpoint { t: total, energy: energy.re, e0, e_res: e_res_at(e0, energy.re, kappa, n), correlations: Some(c.values.clone()) };
        let mut rec = serde_json::to_value(&cp)?;
        rec["record"] = json!("checkpoint");
        out.write(&rec)?;
        tvmc_checkpoints.push(cp);
        timings.measurement = start.elapsed().as_secs_f64();
        let integrated = integrated_r2_reports(&reports, total);
        out.write(&json!({"record": "final", "r2_integrated": integrated, "energy": energy}))?;
        r2 = Some(integrated);
        let snapshot = ParameterSnapshot::from(engine.psi());
        write_document(
            &dir.join("parameters.json"),
            &json!({"schema": SCHEMA_VERSION, "config": config.echo(), "parameters": snapshot}),
        )?;
        final_parameters = Some(snapshot);
        tvmc_correlations = Some(c);
    }

    let epsilon_c = match (&tvmc_correlations, &exact_correlations) {
        (Some(c), Some(r)) => correlation_error(c, r).ok(),
        _ => None,
    };
    let e_res_source = if config.mode == Mode::Exact { &exact_checkpoints } else { &tvmc_checkpoints };
    let realization_record = RealizationRecord {
        index,
        seed: realization.seed,
        epsilon_c,
        r2_integrated: r2.as_ref().and_then(|r| r.value),
        final_energy,
        residual_energy: e_res_source.iter().filter_map(|c| c.e_res.map(|e| (c.t, e))).collect(),
        error: None,
    };
    write_document(
        &dir.join("correlations.json"),
        &json!({
            "schema": SCHEMA_VERSION,
            "config": config.echo(),
            "tvmc": tvmc_correlations,
            "exact": exact_correlations,
            "epsilon_c": epsilon_c,
        }),
    )?;
    write_document(
        &dir.join("record.json"),
        &json!({"schema": SCHEMA_VERSION, "config": config.echo(), "record": realization_record, "timings": timings}),
    )?;
    Ok(RunRecord {
        n_sites: n,
        realization: realization_record,
        reports,
        r2,
        tvmc_checkpoints,
        exact_checkpoints,
        tvmc_correlations,
        exact_correlations,
        final_parameters,
        timings,
    })
}

/// Single run: realization 0 written directly into the output directory.
pub fn run_anneal(config: &RunConfig) -> Result<RunRecord> {
    run_realization(config, 0, &config.output_path())
}

/// Result of a sweep plus whether any realization failed.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub ensemble: RealizationEnsembleResult,
    pub runs: Vec<Option<RunRecord>>,
}

impl SweepOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.ensemble.summary.partial {
            4
        } else {
            0
        }
    }
}

/// Runs every realization one after another (each run is internally
/// parallel) and aggregates them. Failures are recorded, not fatal.
pub fn run_sweep(config: &RunConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let root = config.output_path();
    let (lattice, _) = config.build_lattice()?;
    let mut records = Vec::with_capacity(config.realizations);
    let mut runs = Vec::with_capacity(config.realizations);
    for index in 0..config.realizations {
        let dir = root.join(format!("realization-{index:03}"));
        match run_realization(config, index, &dir) {
            Ok(run) => {
                records.push(run.realization.clone());
                runs.push(Some(run));
            }
            Err(e) => {
                records.push(RealizationRecord {
                    index,
                    seed: config.coupling_seed(index),
                    epsilon_c: None,
                    r2_integrated: None,
                    final_energy: None,
                    residual_energy: Vec::new(),
                    error: Some(e.to_string()),
                });
                runs.push(None);
            }
        }
    }
    let ensemble = RealizationEnsembleResult::new(lattice.n_sites(), records);
    write_document(
        &root.join("ensemble.json"),
        &json!({"schema": SCHEMA_VERSION, "config": config.echo(), "ensemble": ensemble}),
    )?;
    Ok(SweepOutcome { ensemble, runs })
}

/// Realization coupling seeds a sweep would use.
pub fn sweep_seeds(config: &RunConfig) -> Vec<u64> {
    (0..config.realizations).map(|i| config.coupling_seed(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_sites: usize,
    pub n_params: usize,
    pub seconds_per_step: f64,
    /// `(max − min) / mean` over the repeats.
    pub relative_spread: f64,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub exponent: f64,
    pub fit: LinearFit,
}

/// Wall time per t-VMC step on diamond lattices of the given sizes, and the
/// log-log slope of time against N.
pub fn benchmark_scaling(sizes: &[usize], template: &RunConfig, steps: usize, repeats: usize) -> Result<ScalingTable> {
    let mut distinct = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Config("scaling benchmark needs at least three distinct sizes".into()));
    }
    if steps == 0 || repeats == 0 {
        return Err(Error::Config("steps and repeats must be positive".into()));
    }
    let mut rows = Vec::new();
    for &n in &distinct {
        let (nx, ny, nz) = crate::lattice::diamond_for_size(n)
            .ok_or_else(|| Error::Config(format!("no diamond dimensions registered for N = {n}")))?;
        let mut config = template.clone();
        config.lattice = LatticeSpec::Diamond { nx, ny, nz_cells: nz };
        config.mode = Mode::Tvmc;
        config.tdvp.validation_interval = 0;
        let (_, _, ham) = realization_hamiltonian(&config, 0)?;
        let mut times = Vec::new();
        let mut n_params = 0;
        for rep in 0..repeats {
            let mut psi = init_driving_ground(n, &config.orders)?;
            psi.add_factor_noise(config.factor_init_scale, &mut seeds::rng_from_seed(rep as u64));
            n_params = psi.n_params();
            let sampler = |role: &str| MarkovSampler::new(n, config.sampler.clone(), seeds::derive_seed(config.master_seed, role, rep as u64));
            let estimator = Estimator::Sampled { main: Box::new(sampler("bench")?), validation: Box::new(sampler("bench-validation")?) };
            let mut engine = TdvpEngine::new(ham.clone(), psi, config.tdvp.clone(), estimator)?;
            engine.step()?;
            let start = Instant::now();
            for _ in 0..steps {
                engine.step()?;
            }
            times.push(start.elapsed().as_secs_f64() / steps as f64);
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let relative_spread = (max - min) / mean;
        rows.push(ScalingRow { n_sites: n, n_params, seconds_per_step: mean, relative_spread, unreliable: relative_spread > 0.5 });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n_sites as f64).ln(), r.seconds_per_step.ln())).collect();
    let fit = fit_r2_epsilon(&points)?;
    Ok(ScalingTable { rows, exponent: fit.slope, fit })
}

/// Plot-ready tab-separated tables built from sweep directories (each
/// holding an `ensemble.json`). Returns `(file name, contents)` pairs.
pub fn report(sweep_dirs: &[PathBuf]) -> Result<Vec<(String, String)>> {
    let mut ensembles = Vec::new();
    for dir in sweep_dirs {
        let text = fs::read_to_string(dir.join("ensemble.json"))?;
        let doc: Value = serde_json::from_str(&text)?;
        let config: RunConfig = serde_json::from_value(doc["config"].clone())?;
        let ensemble: RealizationEnsembleResult = serde_json::from_value(doc["ensemble"].clone())?;
        let label = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        ensembles.push((label, config, ensemble));
    }
    let mut eps = String::from("label\tn_sites\torders\tsampler\trealizations\tepsilon_c_mean\tepsilon_c_rms\tr2_mean\tr2_rms\n");
    let mut points = Vec::new();
    for (label, config, e) in &ensembles {
        let orders: Vec<String> = config.orders.iter().map(|o| o.to_string()).collect();
        let (em, er) = e.summary.epsilon_c.map_or((f64::NAN, f64::NAN), |s| (s.mean, s.rms));
        let (rm, rr) = e.summary.r2_integrated.map_or((f64::NAN, f64::NAN), |s| (s.mean, s.rms));
        let sampler = serde_json::to_value(config.sampler.kind)?;
        eps.push_str(&format!(
            "{label}\t{}\t{}\t{}\t{}\t{em}\t{er}\t{rm}\t{rr}\n",
            e.n_sites,
            orders.join(","),
            sampler.as_str().unwrap_or_default(),
            e.records.len()
        ));
        if em.is_finite() && rm.is_finite() {
            points.push((rm, em));
        }
    }
    let mut eres = String::from("label\tt\te_res_mean\te_res_stderr\tcount\n");
    for (label, _, e) in &ensembles {
        let mut times: Vec<f64> = e.records.iter().flat_map(|r| r.residual_energy.iter().map(|p| p.0)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        for t in times {
            let vals: Vec<f64> = e
                .records
                .iter()
                .filter_map(|r| r.residual_energy.iter().find(|p| (p.0 - t).abs() < 1e-9).map(|p| p.1))
                .collect();
            if let Some(s) = crate::observables::Spread::of(&vals) {
                eres.push_str(&format!("{label}\t{t}\t{}\t{}\t{}\n", s.mean, s.standard_error(), s.count));
            }
        }
    }
    let mut files = vec![("epsilon_by_ensemble.tsv".to_string(), eps), ("residual_energy.tsv".to_string(), eres)];
    if let Ok(fit) = fit_r2_epsilon(&points) {
        files.push((
            "r2_epsilon_fit.tsv".to_string(),
            format!(
                "slope\tintercept\tintercept_error\tpearson\tn_points\n{}\t{}\t{}\t{}\t{}\n",
                fit.slope, fit.intercept, fit.intercept_error, fit.pearson, fit.n_points
            ),
        ));
    }
    Ok(files)
}
