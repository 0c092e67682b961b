//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage, parse and I/O errors, 2 when
//! simulation fails (every trajectory from some state diverged, or the
//! built automaton violates an invariant).

mod export;
mod render;
mod report;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use export::{read_csv_chain, write_csv, write_dot};
pub use render::render_svg;
pub use report::{RunReport, VarBound};

use crate::model::{builtin, parse_model_with, BiochemicalSystem, BuiltinModel, Constants};
use crate::qdaa::{self, build_rats, build_reachable, io, memory_stats, QdaaError, RunConfig, Sampling};
use crate::simulate::IntegratorConfig;

#[derive(Debug, Parser)]
#[command(name = "qdaa", version, about = "Quantitative discrete approximation automata for multi-affine systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the automaton of a model and write it to a file.
    Build {
        /// Model file, or one of the bundled models: oscillatory, enzyme, ecoli.
        model: String,
        #[command(flatten)]
        run: RunFlags,
        /// Automaton output path (default: <model name>.qdaa).
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write the run report as JSON.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Print the reachable interval of every variable.
    Bounds { automaton: PathBuf },
    /// Build both the automaton and the rectangular abstraction and compare
    /// their reachable rectangles.
    CompareRats {
        model: String,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Draw a 2D projection of the reachable set as SVG, shaded by
    /// first-passage intensity.
    Render {
        automaton: PathBuf,
        /// Variable on the horizontal axis.
        #[arg(long)]
        x: String,
        /// Variable on the vertical axis.
        #[arg(long)]
        y: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Export the automaton as a DOT graph or a CSV transition list.
    Export {
        automaton: PathBuf,
        /// dot or csv.
        #[arg(long)]
        format: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// First-passage intensity of every reachable rectangle, read from an
    /// automaton file or a CSV export.
    Intensity { input: PathBuf },
    /// Rectangle count and memory statistic over a sweep of kappa values,
    /// averaged over seeds.
    Table {
        model: String,
        /// Comma-separated kappa values.
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        kappas: Vec<usize>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[command(flatten)]
        run: RunFlags,
    },
}

/// Flags shared by every command that builds an automaton. Each can also
/// be given through a `QDAA_` environment variable.
#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// Tiles per axis on each rectangle and facet.
    #[arg(long, env = "QDAA_KAPPA", default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub kappa: u32,
    /// Simulations per tile (or per state with `--sampling per-state`).
    #[arg(long, env = "QDAA_SIMS", default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub sims: u32,
    /// per-tile: M points in every entry tile; per-state: M points in the
    /// whole entry set.
    #[arg(long, env = "QDAA_SAMPLING", default_value = "per-tile", value_parser = ["per-tile", "per-state"])]
    pub sampling: String,
    /// Time horizon of one simulation.
    #[arg(long, env = "QDAA_TMAX", default_value_t = 100.0)]
    pub tmax: f64,
    /// Fixed integration step; chosen per rectangle when omitted.
    #[arg(long, env = "QDAA_STEP")]
    pub step: Option<f64>,
    #[arg(long, env = "QDAA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Keep only successor tiles confirmed by reversed-flow simulation.
    #[arg(long, env = "QDAA_BACKWARD")]
    pub backward: bool,
    /// Worker threads (default: all cores). Never changes the output.
    #[arg(long, env = "QDAA_THREADS")]
    pub threads: Option<usize>,
    /// File of `name = value` lines overriding model constants.
    #[arg(long, env = "QDAA_CONSTANTS")]
    pub constants: Option<PathBuf>,
}

impl RunFlags {
    pub fn config(&self) -> RunConfig {
        RunConfig {
            kappa: self.kappa as usize,
            sims: self.sims as usize,
            sampling: Sampling::from_name(&self.sampling).unwrap_or_default(),
            integrator: IntegratorConfig {
                step: self.step,
                t_max: self.tmax,
                ..Default::default()
            },
            seed: self.seed,
            backward_refine: self.backward,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Simulation(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Simulation(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl From<QdaaError> for CliError {
    fn from(e: QdaaError) -> Self {
        match e {
            QdaaError::Config(_) | QdaaError::UnknownRect(_) => CliError::Usage(e.to_string()),
            _ => CliError::Simulation(e.to_string()),
        }
    }
}

/// Reads `name = value` lines; `#` starts a comment.
pub fn read_constants(path: &Path) -> Result<Constants, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut out = Constants::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || usage(format!("{}:{}: expected `name = value`", path.display(), i + 1));
        let (k, v) = line.split_once('=').ok_or_else(bad)?;
        let v: f64 = v.trim().parse().map_err(|_| bad())?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

/// A model file, or a bundled model when no such file exists.
pub fn load_model(name_or_path: &str, constants: Option<&Path>) -> Result<BiochemicalSystem, CliError> {
    let consts = constants.map(read_constants).transpose()?.unwrap_or_default();
    let path = Path::new(name_or_path);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{name_or_path}: {e}")))?;
        return parse_model_with(&text, &consts).map_err(|e| usage(format!("{name_or_path}: {e}")));
    }
    if BuiltinModel::from_name(name_or_path).is_some() {
        return builtin(name_or_path, &consts).map_err(usage);
    }
    Err(usage(format!("{name_or_path}: no such file or bundled model")))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(usage)?;
            Ok(pool.install(f))
        }
    }
}

fn load_automaton(path: &Path) -> Result<qdaa::Qdaa, CliError> {
    io::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build {
            model,
            run,
            out,
            report_out,
        } => {
            let system = load_model(&model, run.constants.as_deref())?;
            let cfg = run.config();
            cfg.validate()?;
            let started = Instant::now();
            let q = with_threads(run.threads, || build_reachable(&system, &cfg))??;
            let wall = started.elapsed().as_secs_f64();
            let text = io::to_text(&q);
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.qdaa", system.name)));
            write_file(&out, &text)?;
            let report = RunReport::new(&model, &run, &q, &text, wall);
            print!("{}", report.to_text());
            if let Some(p) = report_out {
                write_file(&p, &report.to_json())?;
            }
            Ok(())
        }
        Command::Bounds { automaton } => {
            let q = load_automaton(&automaton)?;
            let bounds = qdaa::variable_bounds(&q);
            let w = q.provenance.var_names.iter().map(String::len).max().unwrap_or(0);
            for (name, (lo, hi)) in q.provenance.var_names.iter().zip(bounds) {
                println!("{name:<w$}  [{lo}, {hi}]");
            }
            Ok(())
        }
        Command::CompareRats { model, run } => {
            let system = load_model(&model, run.constants.as_deref())?;
            let cfg = run.config();
            cfg.validate()?;
            let q = with_threads(run.threads, || build_reachable(&system, &cfg))??;
            let rats = build_rats(&system);
            let ours = q.reachable_rects();
            let contained = ours.is_subset(&rats.reachable);
            let pruned: BTreeSet<_> = rats.reachable.difference(&ours).collect();
            println!("qdaa rectangles       {}", ours.len());
            println!("rats rectangles       {}", rats.reachable.len());
            println!("contained             {contained}");
            println!("pruned                {}", pruned.len());
            for r in pruned {
                println!("  {r}");
            }
            if !contained {
                for r in ours.difference(&rats.reachable) {
                    println!("  outside abstraction: {r}");
                }
            }
            Ok(())
        }
        Command::Render { automaton, x, y, out } => {
            let q = load_automaton(&automaton)?;
            let svg = render_svg(&q, &x, &y).map_err(usage)?;
            write_file(&out, &svg)
        }
        Command::Export {
            automaton,
            format,
            out,
        } => {
            let q = load_automaton(&automaton)?;
            let text = match format.as_str() {
                "dot" => write_dot(&q),
                "csv" => write_csv(&q).map_err(usage)?,
                other => return Err(usage(format!("unknown export format {other:?} (dot, csv)"))),
            };
            write_file(&out, &text)
        }
        Command::Intensity { input } => {
            let chain = if input.extension().is_some_and(|e| e == "csv") {
                let text = std::fs::read_to_string(&input)
                    .map_err(|e| usage(format!("{}: {e}", input.display())))?;
                read_csv_chain(&text).map_err(|e| usage(format!("{}: {e}", input.display())))?
            } else {
                load_automaton(&input)?.chain()
            };
            for (rect, h) in chain.intensities() {
                println!("{rect}  {h}");
            }
            Ok(())
        }
        Command::Table {
            model,
            kappas,
            seeds,
            run,
        } => {
            let system = load_model(&model, run.constants.as_deref())?;
            if seeds.is_empty() || kappas.contains(&0) {
                return Err(usage("kappa values must be positive and at least one seed given"));
            }
            println!("{:>6}  {:>10}  {:>8}", "kappa", "|R(I_C)|", "rho");
            for &kappa in &kappas {
                let (mut rects, mut rho) = (0.0, 0.0);
                for &seed in &seeds {
                    let cfg = RunConfig {
                        kappa,
                        seed,
                        ..run.config()
                    };
                    cfg.validate()?;
                    let q = with_threads(run.threads, || build_reachable(&system, &cfg))??;
                    let st = memory_stats(&q);
                    rects += st.rects as f64;
                    rho += st.rho;
                }
                let k = seeds.len() as f64;
                println!("{kappa:>6}  {:>10.1}  {:>8.2}", rects / k, rho / k);
            }
            Ok(())
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args())
}
