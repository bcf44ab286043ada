//! `rwplab` command-line front end.
//!
//! Exit status: 0 success, 1 input error, 2 guard or precondition failure,
//! 3 solver non-convergence.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use rwplab::cs_space::CsSpace;
use rwplab::ensembles::{
    read_container, read_text_vector, write_container, write_sidecar, EnsembleKind, EnsembleSpec, CONTAINER_MAGIC,
};
use rwplab::experiments::{
    converse_experiment, forward_experiment, record_results, rwp_not_rip_study, to_csv_string, EnsembleChoice,
    ExperimentSummary, ModelSpec, StudyConfig, SweepConfig,
};
use rwplab::grassmann::rwp_ball_harness;
use rwplab::solvers::{decode, DecodeProblem, SensingOperator, SolverConfig};
use rwplab::width_rwp::{
    converse_constants, gaussian_width_mc, guarantee_constants, rip_enumerate, rip_sample, rip_to_rwp, rwp_search,
    RwpParams,
};
use rwplab::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "rwplab", version, about = "Robust width analysis and structured-signal decoding")]
struct Cli {
    /// Seed for every random choice (default 0). Overrides the seed of an
    /// experiment config when given.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (directory for `experiment forward` and `experiment study`).
    /// Standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "RWPLAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recover a signal from measurements with the convex decoder.
    Decode(DecodeArgs),
    /// Monte Carlo Gaussian width of the sharp ball intersected with the sphere.
    Width(WidthArgs),
    /// Search for a robust width violation.
    Rwp(RwpArgs),
    /// Restricted isometry constants by enumeration or sampling.
    Rip(RipArgs),
    /// Compare RWP with the width property on nearby null spaces.
    Grassmann(GrassmannArgs),
    /// Run an experiment from a TOML config.
    Experiment(ExperimentArgs),
    /// Convert between RIP, RWP and recovery constants.
    ConvertConstants(ConvertArgs),
    /// Write a random operator as a binary container plus JSON sidecar.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelName {
    L1,
    Weighted,
    Block,
    PathGradient,
    GridGradient,
    LowRank,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelName::L1)]
    model: ModelName,
    /// Sparsity level.
    #[arg(long = "K", default_value_t = 1)]
    k: usize,
    #[arg(long)]
    block_size: Option<usize>,
    /// Rows of the grid graph or of the matrix model.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Text file of weights for the weighted model.
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| Error::InvalidInput(format!("--{name} is required for model {:?}", self.model)))
        };
        Ok(match self.model {
            ModelName::L1 => ModelSpec::L1,
            ModelName::Weighted => {
                let path = self.weights.as_ref().ok_or_else(|| Error::InvalidInput("--weights is required".into()))?;
                ModelSpec::Weighted { weights: read_vector(path)?.as_slice().to_vec() }
            }
            ModelName::Block => ModelSpec::Block { block_size: need(self.block_size, "block-size")? },
            ModelName::PathGradient => ModelSpec::PathGradient,
            ModelName::GridGradient => {
                ModelSpec::GridGradient { rows: need(self.rows, "rows")?, cols: need(self.cols, "cols")? }
            }
            ModelName::LowRank => ModelSpec::LowRank { rows: need(self.rows, "rows")?, cols: need(self.cols, "cols")? },
        })
    }

    fn space(&self, n: usize) -> Result<CsSpace> {
        self.spec()?.space(n, self.k)
    }
}

#[derive(Args, Debug, Serialize)]
struct DecodeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Operator container.
    #[arg(long)]
    matrix: PathBuf,
    /// Measurements: text vector or container.
    #[arg(long)]
    y: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Primal and dual stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    history: bool,
}

#[derive(Args, Debug, Serialize)]
struct WidthArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N")]
    n: usize,
    /// Radius `1/ρ` of the sharp ball.
    #[arg(long)]
    rho_inv: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Args, Debug, Serialize)]
struct RwpArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
}

#[derive(Args, Debug, Serialize)]
struct RipArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long = "J")]
    j: usize,
    /// Sample this many supports instead of enumerating (lower bounds).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct GrassmannArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Operator container with orthonormal rows.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExperimentKind {
    Forward,
    Converse,
    Study,
    Results,
}

#[derive(Args, Debug, Serialize)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    /// TOML config; not used by `results`.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ConvertArgs {
    /// `(J, δ)` RIP to `(ρ, α)`.
    #[arg(long, conflicts_with_all = ["guarantee", "converse"])]
    from_rip: bool,
    /// `(ρ, α, L)` to `(C0, C1)`.
    #[arg(long, conflicts_with = "converse")]
    guarantee: bool,
    /// `(C0, C1)` to `(ρ, α)`.
    #[arg(long)]
    converse: bool,
    #[arg(long = "J")]
    j: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long = "M")]
    m: usize,
    #[arg(long = "N")]
    n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum KindArg {
    GaussianIid,
    Orthonormalized,
    Spiked,
    SubsampledTrig,
}

/// Config of `experiment converse`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConverseConfig {
    c0: f64,
    c1: f64,
    model: ModelSpec,
    n: usize,
    m: usize,
    k: usize,
    ensemble: EnsembleChoice,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_restarts")]
    restarts: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    solver: SolverConfig,
}

fn default_trials() -> usize {
    20
}

fn default_restarts() -> usize {
    8
}

fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let mut file = File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut head = [0u8; 4];
    let n = file.read(&mut head)?;
    drop(file);
    let file = File::open(path)?;
    if n == 4 && head == CONTAINER_MAGIC {
        let (_, op) = read_container(BufReader::new(file))?;
        return Ok(DVector::from_iterator(op.matrix().len(), op.matrix().transpose().iter().copied()));
    }
    read_text_vector(BufReader::new(file))
}

fn read_operator(path: &Path) -> Result<SensingOperator> {
    let file = File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(read_container(BufReader::new(file))?.1)
}

fn read_config<T: for<'de> Deserialize<'de>>(path: Option<&PathBuf>) -> Result<T> {
    let path = path.ok_or_else(|| Error::InvalidInput("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(toml::from_str(&text)?)
}

/// Write via a temporary file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Output<'a> {
    out: Option<&'a Path>,
    seed: u64,
}

impl Output<'_> {
    fn emit(&self, bytes: &[u8]) -> Result<()> {
        match self.out {
            Some(p) => write_atomic(p, bytes),
            None => {
                std::io::stdout().write_all(bytes)?;
                Ok(())
            }
        }
    }

    fn json<C: Serialize, R: Serialize>(&self, command: &str, config: C, results: R) -> Result<()> {
        self.emit(ExperimentSummary::new(command, self.seed, config, results)?.to_json()?.as_bytes())
    }

    fn dir(&self) -> Result<&Path> {
        let d = self.out.ok_or_else(|| Error::InvalidInput("--out DIR is required for this experiment".into()))?;
        std::fs::create_dir_all(d)?;
        Ok(d)
    }
}

fn json_only(format: Format) -> Result<()> {
    if format == Format::Csv {
        return Err(Error::InvalidInput("csv output is only available for experiment tables".into()));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let out = Output { out: cli.out.as_deref(), seed };
    match &cli.command {
        Command::Decode(a) => {
            json_only(cli.format)?;
            let op = read_operator(&a.matrix)?;
            let space = a.model.space(op.cols())?;
            let y = read_vector(&a.y)?;
            let mut cfg = SolverConfig { record_history: a.history, ..SolverConfig::default() };
            if let Some(it) = a.max_iters {
                cfg.max_iters = it;
            }
            if let Some(t) = a.tol {
                cfg.tol_primal = t;
                cfg.tol_dual = t;
            }
            let res = decode(&DecodeProblem::new(&space, &op, y, a.eps)?, &cfg)?;
            out.json("decode", a, &res)?;
            if !res.converged {
                return Err(Error::NonConvergence(format!(
                    "decoder stopped after {} iterations (residual {:e})",
                    res.iterations, res.residual
                )));
            }
            Ok(())
        }
        Command::Width(a) => {
            json_only(cli.format)?;
            if !(a.rho_inv > 0.0) {
                return Err(Error::InvalidInput(format!("--rho-inv {} must be positive", a.rho_inv)));
            }
            let space = a.model.space(a.n)?;
            let est = gaussian_width_mc(&space, 1.0 / a.rho_inv, a.samples, a.confidence, seed)?;
            out.json("width", a, est)
        }
        Command::Rwp(a) => {
            json_only(cli.format)?;
            let op = read_operator(&a.matrix)?;
            let space = a.model.space(op.cols())?;
            let rep = rwp_search(&op, &space, RwpParams::new(a.rho, a.alpha)?, a.restarts, seed)?;
            out.json("rwp", a, rep)
        }
        Command::Rip(a) => {
            json_only(cli.format)?;
            let op = read_operator(&a.matrix)?;
            let rep = match a.samples {
                Some(s) => rip_sample(&op, a.j, s, seed)?,
                None => rip_enumerate(&op, a.j)?,
            };
            out.json("rip", a, rep)
        }
        Command::Grassmann(a) => {
            json_only(cli.format)?;
            let op = read_operator(&a.matrix)?;
            let space = a.model.space(op.cols())?;
            let rep = rwp_ball_harness(&op, &space, a.rho, a.alpha, a.trials, a.restarts, seed)?;
            out.json("grassmann", a, rep)
        }
        Command::ConvertConstants(a) => {
            json_only(cli.format)?;
            let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::InvalidInput(format!("--{name} is required")));
            if a.from_rip {
                let j = a.j.ok_or_else(|| Error::InvalidInput("--J is required".into()))?;
                out.json("convert-constants", a, rip_to_rwp(j, need(a.delta, "delta")?)?)
            } else if a.guarantee {
                let params = RwpParams::new(need(a.rho, "rho")?, need(a.alpha, "alpha")?)?;
                out.json("convert-constants", a, guarantee_constants(params, need(a.l, "L")?)?)
            } else if a.converse {
                out.json("convert-constants", a, converse_constants(need(a.c0, "c0")?, need(a.c1, "c1")?)?)
            } else {
                Err(Error::InvalidInput("choose one of --from-rip, --guarantee, --converse".into()))
            }
        }
        Command::Generate(a) => {
            let kind = match a.kind {
                KindArg::GaussianIid => EnsembleKind::GaussianIid,
                KindArg::Orthonormalized => EnsembleKind::Orthonormalized,
                KindArg::Spiked => EnsembleKind::Spiked,
                KindArg::SubsampledTrig => EnsembleKind::SubsampledTrig,
            };
            let op = EnsembleSpec::new(kind, a.m, a.n, seed).generate()?;
            let path = cli.out.as_ref().ok_or_else(|| Error::InvalidInput("--out is required".into()))?;
            let mut bin = Vec::new();
            write_container(&mut bin, &op)?;
            let mut side = Vec::new();
            write_sidecar(&mut side, &op)?;
            write_atomic(path, &bin)?;
            let mut sidecar = path.clone().into_os_string();
            sidecar.push(".json");
            write_atomic(Path::new(&sidecar), &side)
        }
        Command::Experiment(a) => run_experiment(cli, a, &out),
    }
}

fn run_experiment(cli: &Cli, a: &ExperimentArgs, out: &Output) -> Result<()> {
    match a.kind {
        ExperimentKind::Forward => {
            let mut cfg: SweepConfig = read_config(a.config.as_ref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let res = forward_experiment(&cfg)?;
            let dir = out.dir()?;
            write_atomic(&dir.join("records.csv"), to_csv_string(&res.records)?.as_bytes())?;
            write_atomic(&dir.join("summary.json"), res.summary(&cfg)?.to_json()?.as_bytes())?;
            let plot = serde_json::to_string_pretty(&res.plot_data(&cfg))? + "\n";
            write_atomic(&dir.join("plot.json"), plot.as_bytes())
        }
        ExperimentKind::Study => {
            let mut cfg: StudyConfig = read_config(a.config.as_ref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let rep = rwp_not_rip_study(&cfg)?;
            let dir = out.dir()?;
            write_atomic(&dir.join("table.csv"), to_csv_string(&rep.table())?.as_bytes())?;
            let summary = ExperimentSummary::new("rwp_not_rip_study", cfg.seed, &cfg, &rep)?;
            write_atomic(&dir.join("summary.json"), summary.to_json()?.as_bytes())
        }
        ExperimentKind::Converse => {
            json_only(cli.format)?;
            let mut cfg: ConverseConfig = read_config(a.config.as_ref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let spec = EnsembleSpec {
                kind: cfg.ensemble.kind,
                m: cfg.m,
                n: cfg.n,
                covariance: cfg.ensemble.covariance.clone(),
                seed: cfg.seed,
            };
            let op = spec.generate()?;
            let space = cfg.model.space(cfg.n, cfg.k)?;
            let rep =
                converse_experiment(cfg.c0, cfg.c1, &space, &op, cfg.trials, cfg.restarts, cfg.seed, &cfg.solver)?;
            let out = Output { out: out.out, seed: cfg.seed };
            out.json("converse", &cfg, rep)
        }
        ExperimentKind::Results => {
            json_only(cli.format)?;
            let seed = cli.seed.unwrap_or(0);
            let res = record_results(seed)?;
            out.emit((serde_json::to_string_pretty(&res)? + "\n").as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("rwplab: cannot configure {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rwplab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
