use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tvmc::lattice::{build_diamond_lattice, load_edge_list, sample_couplings, to_edge_list, InstanceDocument, Lattice};
use tvmc::observables::{correlation_error, CorrelationMatrix};
use tvmc::runner::{self, Mode, RunConfig};
use tvmc::{Error, Result};

#[derive(Parser)]
#[command(name = "tvmc", version, about = "Quantum annealing with time-dependent variational Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Edges,
}

#[derive(Subcommand)]
enum Command {
    /// Build a diamond lattice.
    GenerateLattice {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long, default_value_t = 1)]
        nz_cells: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw ±1 couplings for a lattice (instance JSON or edge list).
    SampleCouplings {
        #[arg(long)]
        lattice: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single annealing run (realization 0).
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// All realizations of a config, aggregated.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Dense-state reference trajectory only.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Correlation error between two matrices. Each argument is a file,
    /// optionally suffixed with `#field` to pick a member of a document.
    Compare { candidate: String, reference: String },
    /// Per-step wall time against N on diamond lattices.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [18, 32, 50, 72])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        repeats: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Tab-separated tables from sweep directories.
    Report {
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(lattice: &Lattice, couplings: Option<&tvmc::lattice::CouplingRealization>, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(&InstanceDocument::new(lattice, couplings))? + "\n",
        Format::Edges => to_edge_list(lattice, couplings.map(|c| c.couplings.as_slice())),
    })
}

fn read_lattice(path: &Path) -> Result<Lattice> {
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<InstanceDocument>(&text) {
        Ok(doc) => doc.lattice(),
        Err(_) => Ok(load_edge_list(&text)?.0),
    }
}

fn load_config(path: &Path, output_dir: Option<PathBuf>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    config.validate()?;
    runner::configure_workers(&config);
    Ok(config)
}

fn read_matrix(spec: &str) -> Result<CorrelationMatrix> {
    let (path, field) = match spec.rsplit_once('#') {
        Some((p, f)) => (p, Some(f)),
        None => (spec, None),
    };
    let mut value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    if let Some(f) = field {
        value = value.get(f).cloned().ok_or_else(|| Error::Invalid(format!("{path} has no field {f}")))?;
    }
    let matrix: CorrelationMatrix = serde_json::from_value(value)?;
    matrix.validate()?;
    Ok(matrix)
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenerateLattice { nx, ny, nz_cells, format, out } => {
            let lattice = build_diamond_lattice(nx, ny, nz_cells)?;
            emit(&render(&lattice, None, format)?, out.as_deref())?;
        }
        Command::SampleCouplings { lattice, seed, format, out } => {
            let lattice = read_lattice(&lattice)?;
            let realization = sample_couplings(&lattice, seed);
            emit(&render(&lattice, Some(&realization), format)?, out.as_deref())?;
        }
        Command::Run { config, output_dir } => {
            let config = load_config(&config, output_dir)?;
            let run = runner::run_anneal(&config)?;
            println!("{}", serde_json::to_string(&json!({"record": run.realization, "timings": run.timings}))?);
        }
        Command::Oracle { config, output_dir } => {
            let mut config = load_config(&config, output_dir)?;
            config.mode = Mode::Exact;
            let run = runner::run_anneal(&config)?;
            println!("{}", serde_json::to_string(&json!({"record": run.realization, "timings": run.timings}))?);
        }
        Command::Sweep { config, output_dir } => {
            let config = load_config(&config, output_dir)?;
            let outcome = runner::run_sweep(&config)?;
            println!("{}", serde_json::to_string(&outcome.ensemble.summary)?);
            return Ok(outcome.exit_code());
        }
        Command::Compare { candidate, reference } => {
            let c = read_matrix(&candidate)?;
            let r = read_matrix(&reference)?;
            println!("{}", correlation_error(&c, &r)?);
        }
        Command::Bench { sizes, steps, repeats, config } => {
            let template = match config {
                Some(p) => load_config(&p, None)?,
                None => RunConfig::default(),
            };
            let table = runner::benchmark_scaling(&sizes, &template, steps, repeats)?;
            println!("n_sites\tn_params\tseconds_per_step\trelative_spread\tunreliable");
            for r in &table.rows {
                println!("{}\t{}\t{:.6}\t{:.3}\t{}", r.n_sites, r.n_params, r.seconds_per_step, r.relative_spread, r.unreliable);
            }
            println!("# exponent {:.3}", table.exponent);
        }
        Command::Report { dirs, out } => {
            fs::create_dir_all(&out)?;
            for (name, contents) in runner::report(&dirs)? {
                fs::write(out.join(&name), contents)?;
                println!("{}", out.join(name).display());
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
