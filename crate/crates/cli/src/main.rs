use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use zdcodec::codec::{self, container, PipelineOptions, SimulationReport};
use zdcodec::model::{load_model_config, validate_model, ModelConfig, ModelSpec, ValidatedModel};
use zdcodec::nrdf::{self, NrdfSolution, SolveMethod, SolverOptions};
use zdcodec::{fmt_num, Error};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (stream format 1)");

#[derive(Parser)]
#[command(name = "zdcodec", version = VERSION, about = "Zero-delay Gaussian source coding experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a model file and print its spectrum.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Rate-distortion curve with the operational bounds.
    Nrdf(Sweep),
    /// Run the encoder/decoder pair at each distortion.
    Simulate {
        #[command(flatten)]
        sweep: Sweep,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the coded stream of each run.
        #[arg(long)]
        write_stream: bool,
    },
    /// Rewrite an AR(s) model file as an AR(1) model file.
    Augment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    model: PathBuf,
    /// `a:b:steps` (inclusive, evenly spaced) or a comma-separated list.
    #[arg(long)]
    d_grid: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    /// `logdet` or `greedy`.
    #[arg(long, default_value = "logdet")]
    method: String,
    /// Normalized second moment of the lattice for the lattice bound.
    #[arg(long)]
    gp: Option<f64>,
    /// Output directory; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    jobs: Option<usize>,
}

enum Failure {
    Solver(String),
    Config(String),
    Violation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Solver(_) => 2,
            Failure::Config(_) => 3,
            Failure::Violation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Solver(m) | Failure::Config(m) | Failure::Violation(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. }
            | Error::AtDistortion { .. }
            | Error::NonMonotone { .. }
            | Error::DegenerateSource
            | Error::DegenerateComponent { .. }
            | Error::CodecDesync { .. }
            | Error::BitstreamCorrupt(_) => Failure::Solver(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>, Failure> {
    let bad = |msg: &str| Failure::Config(format!("--d-grid {s:?}: {msg}"));
    let grid: Vec<f64> = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected a:b:steps"));
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad("bad start"))?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad("bad end"))?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad("bad step count"))?;
        match steps {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..steps).map(|k| a + (b - a) * k as f64 / (steps - 1) as f64).collect(),
        }
    } else {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() {
        return Err(bad("empty grid"));
    }
    if grid.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(bad("distortions must be positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("grid must be strictly increasing"));
    }
    Ok(grid)
}

fn load_model(path: &Path) -> Result<ValidatedModel, Failure> {
    let cfg = load_model_config(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let m = cfg.to_spec()?.into_state_space()?;
    Ok(validate_model(&m)?)
}

impl Sweep {
    fn options(&self) -> Result<SolverOptions, Failure> {
        let method: SolveMethod = self.method.parse()?;
        Ok(SolverOptions { tol: self.tol, max_iter: self.max_iter, damping: self.damping, method })
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Failure> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(Failure::Config("--jobs must be at least 1".into()));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Failure::Config(e.to_string()))
    }
}

/// Writes `name` under `out`, or to stdout when there is no output directory.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_validate(model: &Path) -> Result<(), Failure> {
    let m = load_model(model)?;
    let s = &m.spectrum;
    println!("p = {}, q = {}", m.p(), m.q());
    for ev in &s.eigenvalues {
        println!("eigenvalue {} {:+}i  |.| = {}", fmt_num(ev.re), fmt_num(ev.im), fmt_num(ev.norm()));
    }
    println!("stable = {}", s.is_stable);
    println!("stabilizable = {}", s.is_stabilizable);
    if !s.marginal.is_empty() {
        println!("eigenvalues on the unit circle = {}", s.marginal.len());
    }
    println!("unstable floor = {} bits", fmt_num(s.unstable_log_sum));
    Ok(())
}

fn solve_grid(m: &ValidatedModel, sweep: &Sweep) -> Result<Vec<(f64, NrdfSolution)>, Failure> {
    let grid = parse_grid(&sweep.d_grid)?;
    let opts = sweep.options()?;
    let pool = sweep.pool()?;
    Ok(pool.install(|| nrdf::rate_distortion_sweep(m, &grid, &opts))?)
}

fn cmd_nrdf(sweep: &Sweep) -> Result<(), Failure> {
    let m = load_model(&sweep.model)?;
    eprintln!("unstable floor = {} bits", fmt_num(m.spectrum.unstable_log_sum));
    let sols = solve_grid(&m, sweep)?;
    let mut csv = String::from("D,lower_bits,upper_scalar_bits,upper_lattice_bits\n");
    for (d, sol) in &sols {
        let b = nrdf::bounds(sol, sweep.gp)?;
        let lattice = b.upper_lattice.map(fmt_num).unwrap_or_default();
        csv += &format!("{},{},{},{}\n", fmt_num(*d), fmt_num(b.lower), fmt_num(b.upper_scalar), lattice);
    }
    emit(sweep.out.as_deref(), "curve.csv", &csv)?;
    if let Some(dir) = &sweep.out {
        let solutions: Vec<&NrdfSolution> = sols.iter().map(|(_, s)| s).collect();
        let json = serde_json::to_string_pretty(&solutions).map_err(|e| Failure::Config(e.to_string()))?;
        fs::write(dir.join("solutions.json"), json + "\n")?;
    }
    Ok(())
}

fn summary_csv(reports: &[SimulationReport]) -> String {
    let mut csv = String::from(
        "D,nrdf_rate,upper_scalar,empirical_rate,ideal_rate,empirical_mse,escapes,total_bits,violations\n",
    );
    for r in reports {
        csv += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_num(r.distortion),
            fmt_num(r.nrdf_rate),
            fmt_num(r.upper_scalar),
            fmt_num(r.empirical_rate),
            fmt_num(r.ideal_bits / r.n as f64),
            fmt_num(r.empirical_mse),
            r.escapes,
            r.total_bits,
            r.violations.len()
        );
    }
    csv
}

fn cmd_simulate(sweep: &Sweep, n: usize, seed: u64, write_stream: bool) -> Result<(), Failure> {
    if n < 1000 {
        return Err(Failure::Config(format!("--n must be at least 1000, got {n}")));
    }
    if write_stream && sweep.out.is_none() {
        return Err(Failure::Config("--write-stream needs --out".into()));
    }
    let m = load_model(&sweep.model)?;
    let sols = solve_grid(&m, sweep)?;
    let pool = sweep.pool()?;
    let opts = PipelineOptions { keep_chunks: write_stream, ..Default::default() };
    let runs: Vec<_> = pool.install(|| {
        sols.par_iter()
            .map(|(_, sol)| codec::run_with_solution(&m, sol, n, seed, &opts))
            .collect::<Result<Vec<_>, Error>>()
    })?;
    let reports: Vec<SimulationReport> = runs.iter().map(|(r, _)| r.clone()).collect();
    let json = serde_json::to_string_pretty(&reports).map_err(|e| Failure::Config(e.to_string()))?;
    match &sweep.out {
        Some(dir) => {
            emit(Some(dir), "simulate.json", &(json + "\n"))?;
            emit(Some(dir), "simulate.csv", &summary_csv(&reports))?;
            for (k, (r, chunks)) in runs.iter().enumerate() {
                let mut lengths = Vec::new();
                r.write_lengths_csv(&mut lengths)?;
                fs::write(dir.join(format!("lengths_{k}.csv")), lengths)?;
                if write_stream {
                    let header = container::Header::new(&m, seed, r.distortion, n as u64);
                    fs::write(dir.join(format!("stream_{k}.zdkf")), container::write_stream(&header, chunks))?;
                }
            }
        }
        None => emit(None, "", &summary_csv(&reports))?,
    }
    let violations: Vec<String> = reports
        .iter()
        .flat_map(|r| r.violations.iter().map(move |v| format!("D={}: {v}", fmt_num(r.distortion))))
        .collect();
    if !violations.is_empty() {
        return Err(Failure::Violation(violations.join("\n")));
    }
    Ok(())
}

fn cmd_augment(model: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_model_config(model).map_err(|e| Failure::Config(format!("{}: {e}", model.display())))?;
    let aug = match cfg.to_spec()? {
        ModelSpec::Ar(c) => zdcodec::model::augment_ar(&c)?,
        ModelSpec::StateSpace(m) => m,
    };
    let json = serde_json::to_string_pretty(&ModelConfig::from_model(&aug)).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, json + "\n")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Validate { model } => cmd_validate(model),
        Cmd::Nrdf(sweep) => cmd_nrdf(sweep),
        Cmd::Simulate { sweep, n, seed, write_stream } => cmd_simulate(sweep, *n, *seed, *write_stream),
        Cmd::Augment { model, out } => cmd_augment(model, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
