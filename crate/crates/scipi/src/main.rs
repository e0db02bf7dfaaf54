//! Command line front end: synthetic data generation, factorization runs,
//! single-column solves, parameter grids, and the reproduction suite. All
//! of the work happens in the library; this binary only wires flags to it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use scipi::bench::{
    compute_reference, emit, grid_search, init_model, repro, ExperimentGrid, ExperimentResult,
};
use scipi::data::{
    gen_poisson, load_bag_of_words, load_dense, write_bag_of_words, write_dense, DatasetManifest,
    DenseFormat, FormatTag, SyntheticSpec,
};
use scipi::klnmf::{alternate, AlternateConfig, SubproblemBundle, UpdateRule};
use scipi::matrix::CountMatrix;
use scipi::sampling::{BatchSpec, SamplingMode};
use scipi::solver::{solve, SolverConfig};
use scipi::verify::spectral_diagnostics;

#[derive(Parser)]
#[command(
    name = "scipi",
    version,
    about = "Scale-invariant power iteration solvers for KL-divergence NMF",
    after_help = "Set SCIPI_THREADS to bound the worker pool used by grid runs."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic Poisson count matrix and write it with a manifest.
    Generate(GenerateArgs),
    /// Factorize a count matrix and write the factors plus a run summary.
    Factorize(FactorizeArgs),
    /// Solve one column's simplex subproblem exactly and print diagnostics.
    Subproblem(SubproblemArgs),
    /// Run a parameter grid from a JSON file and emit CSV/JSON/SVG results.
    Grid(GridArgs),
    /// Run the scaled-down acceptance suite and print one line per criterion.
    Repro,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Expected fraction of nonzero entries, in (0, 1).
    #[arg(long)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; bag-of-words text, with a manifest written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FactorizeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::BagOfWords)]
    format: DataFormat,
    #[arg(long)]
    rank: usize,
    /// One of s-sci-pi, vanilla, f-sci-pi, mu, ccd, pgd.
    #[arg(long, default_value = "s-sci-pi")]
    solver: String,
    /// Damping in (0, 1]; smaller batches usually want smaller eta.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Mini-batch size as a fraction of the sample count. Very small batches
    /// can starve factor components until the reconstruction of an observed
    /// cell underflows the objective floor; the run then stops as diverged.
    #[arg(long, default_value_t = 0.5)]
    batch_prop: f64,
    /// Inner steps per epoch.
    #[arg(long, default_value_t = 10)]
    epoch_len: usize,
    /// Wall-clock budget for the run, in seconds.
    #[arg(long)]
    budget_sec: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_rounds: usize,
    /// Stop when the objective changes by less than this relative amount.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prefix for <prefix>.w.csv, <prefix>.h.csv, and <prefix>.run.json.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct SubproblemArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::BagOfWords)]
    format: DataFormat,
    /// Which data column to solve.
    #[arg(long, default_value_t = 0)]
    col: usize,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GridArgs {
    /// JSON file mirroring the experiment grid and solver list.
    #[arg(long)]
    grid_file: PathBuf,
    /// Override the replicate count from the grid file.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, default_value = "grid-out")]
    out_dir: PathBuf,
    /// Stem for the emitted csv/json/svg files.
    #[arg(long, default_value = "grid")]
    stem: String,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum DataFormat {
    BagOfWords,
    Csv,
    MatrixMarket,
}

fn load_matrix(path: &Path, format: DataFormat) -> Result<CountMatrix> {
    let loaded = match format {
        DataFormat::BagOfWords => CountMatrix::Sparse(load_bag_of_words(path)?),
        DataFormat::Csv => CountMatrix::Dense(load_dense(path, DenseFormat::Csv)?),
        DataFormat::MatrixMarket => {
            CountMatrix::Dense(load_dense(path, DenseFormat::MatrixMarket)?)
        }
    };
    Ok(loaded)
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec::new(args.rows, args.cols, args.sparsity, args.seed)?;
    let m = gen_poisson(&spec)?;
    write_bag_of_words(&args.out, &m).with_context(|| format!("writing {}", args.out.display()))?;

    let wrapped = CountMatrix::Sparse(m);
    let mut manifest = DatasetManifest::describe(
        &args.out.file_stem().unwrap_or_default().to_string_lossy(),
        &format!(
            "poisson rows={} cols={} sparsity={} seed={}",
            args.rows, args.cols, args.sparsity, args.seed
        ),
        FormatTag::Synthetic,
        &wrapped,
    );
    manifest.format = FormatTag::BagOfWords;
    let mpath = manifest_path(&args.out);
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)?;

    println!(
        "wrote {} ({}x{}, {} nonzeros, density {:.4}) and {}",
        args.out.display(),
        wrapped.rows(),
        wrapped.cols(),
        wrapped.nnz(),
        wrapped.density(),
        mpath.display()
    );
    Ok(())
}

fn build_rule(args: &FactorizeArgs) -> Result<UpdateRule> {
    let rule = match args.solver.as_str() {
        "s-sci-pi" => UpdateRule::SSciPi {
            eta: args.eta,
            batch_proportion: args.batch_prop,
            epoch_length: args.epoch_len,
            replacement: false,
            mode: None,
        },
        "vanilla" => UpdateRule::Vanilla {
            eta: args.eta,
            batch_proportion: args.batch_prop,
            epoch_length: args.epoch_len,
            replacement: false,
            mode: None,
        },
        "f-sci-pi" => UpdateRule::FSciPi { eta: args.eta },
        "mu" => UpdateRule::Mu,
        "ccd" => UpdateRule::Ccd { shuffled: false },
        "pgd" => UpdateRule::Pgd,
        other => bail!("unknown solver {other:?}; see --help for the list"),
    };
    Ok(rule)
}

#[derive(Serialize)]
struct RunSummary {
    solver: String,
    rank: usize,
    seed: u64,
    rounds: usize,
    work: f64,
    objective: f64,
    termination: String,
    restarts: usize,
    clamped: usize,
}

fn run_factorize(args: FactorizeArgs) -> Result<()> {
    let v = load_matrix(&args.data, args.format)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let rule = build_rule(&args)?;
    let init = init_model(&v, args.rank, args.seed)?;

    let mut config = AlternateConfig::new(rule, args.max_rounds);
    config.seed = args.seed;
    config.time_limit_secs = args.budget_sec;
    config.objective_tolerance = args.tolerance;
    let outcome = alternate(&v, init, &config)?;

    let prefix = args.out_prefix.to_string_lossy();
    let w_path = PathBuf::from(format!("{prefix}.w.csv"));
    let h_path = PathBuf::from(format!("{prefix}.h.csv"));
    let run_path = PathBuf::from(format!("{prefix}.run.json"));
    write_dense(&w_path, &outcome.pair.w, DenseFormat::Csv)?;
    write_dense(&h_path, &outcome.pair.h, DenseFormat::Csv)?;

    let objective = outcome
        .trace
        .records
        .last()
        .map(|r| r.objective)
        .unwrap_or(f64::NAN);
    let summary = RunSummary {
        solver: config.rule.name().to_string(),
        rank: args.rank,
        seed: args.seed,
        rounds: outcome.rounds,
        work: outcome.work,
        objective,
        termination: format!("{:?}", outcome.termination),
        restarts: outcome.restarts,
        clamped: outcome.clamped,
    };
    std::fs::write(&run_path, serde_json::to_string_pretty(&summary)?)?;

    println!(
        "{}: objective {objective:.6e} after {} rounds ({} work units, {})",
        summary.solver, summary.rounds, summary.work, summary.termination
    );
    println!(
        "wrote {}, {}, {}",
        w_path.display(),
        h_path.display(),
        run_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SubproblemReport {
    column: usize,
    objective: f64,
    epochs: usize,
    weights: Vec<f64>,
    multiplier: f64,
    tangent_bound: f64,
    predicted_rate: f64,
    residual: f64,
    certifies_local_max: bool,
}

fn run_subproblem(args: SubproblemArgs) -> Result<()> {
    let v = load_matrix(&args.data, args.format)?;
    if args.col >= v.cols() {
        bail!("column {} out of range for {} columns", args.col, v.cols());
    }
    let init = init_model(&v, args.rank, args.seed)?;
    let bundle = SubproblemBundle::build(&v, &init.w, &init.h)?;
    let mode = SamplingMode::for_density(v.density());
    let problem = bundle.column_problem(&v, args.col, mode)?;

    let x = bundle.simplex_x();
    let y0: Vec<f64> = x.col(args.col).iter().map(|&xi| xi.sqrt()).collect();

    let n = scipi::solver::ScaleInvariantProblem::num_samples(&problem);
    let mut config = SolverConfig::new(
        args.eta,
        BatchSpec::without_replacement(n),
        1,
        args.max_epochs,
    );
    config.record_iterates = false;
    let out = solve(&problem, &y0, &config)?;
    let diag = spectral_diagnostics(&problem, &out.x)?;

    let report = SubproblemReport {
        column: args.col,
        objective: out.value,
        epochs: out.epochs,
        weights: out.x.iter().map(|&yi| yi * yi).collect(),
        multiplier: diag.multiplier,
        tangent_bound: diag.tangent_bound,
        predicted_rate: diag.predicted_rate,
        residual: diag.residual,
        certifies_local_max: diag.certifies_local_max,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// On-disk grid description: a dataset (file or synthetic), the solver
/// templates to search, and the shared grid axes.
#[derive(Deserialize)]
struct GridFile {
    #[serde(default)]
    data: Option<PathBuf>,
    #[serde(default)]
    format: Option<FormatTag>,
    #[serde(default)]
    synthetic: Option<SyntheticSpec>,
    solvers: Vec<UpdateRule>,
    grid: ExperimentGrid,
    #[serde(default = "default_reference_budget")]
    reference_budget_secs: f64,
}

fn default_reference_budget() -> f64 {
    5.0
}

fn grid_matrix(file: &GridFile) -> Result<CountMatrix> {
    if let Some(spec) = &file.synthetic {
        return Ok(CountMatrix::Sparse(gen_poisson(spec)?));
    }
    let path = file
        .data
        .as_ref()
        .context("grid file needs either a synthetic spec or a data path")?;
    let format = match file.format.unwrap_or(FormatTag::BagOfWords) {
        FormatTag::BagOfWords | FormatTag::Synthetic => DataFormat::BagOfWords,
        FormatTag::Csv => DataFormat::Csv,
        FormatTag::MatrixMarket => DataFormat::MatrixMarket,
    };
    load_matrix(path, format)
}

fn run_grid(args: GridArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.grid_file)
        .with_context(|| format!("reading {}", args.grid_file.display()))?;
    let mut file: GridFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.grid_file.display()))?;
    if let Some(replicates) = args.replicates {
        file.grid.replicates = replicates;
    }
    if file.solvers.is_empty() {
        bail!("grid file lists no solvers");
    }

    let v = grid_matrix(&file)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let reference = compute_reference(
        &v,
        file.grid.rank,
        file.reference_budget_secs,
        Some(&args.out_dir),
    )?;
    println!(
        "reference objective {:.9e} (low confidence: {})",
        reference.value, reference.provenance.low_confidence
    );

    let mut all: Vec<ExperimentResult> = Vec::new();
    for solver in &file.solvers {
        let (best, results) = grid_search(&v, solver, &file.grid, &reference)?;
        let top = &results[best];
        println!(
            "{}: best point eta={} batch={} epochs/m={} mean final error {:.3e} \
             (median {:.3e}, {} of {} replicates diverged)",
            solver.name(),
            top.point.eta,
            top.point.batch_proportion,
            top.point.epoch_length,
            top.mean_final_error,
            top.median_final_error,
            top.divergent_count(),
            file.grid.replicates
        );
        all.extend(results);
    }

    let files = emit(&args.out_dir, &args.stem, &all, file.grid.clock)?;
    println!(
        "wrote {}, {}, {}",
        files.csv.display(),
        files.json.display(),
        files.svg.display()
    );
    Ok(())
}

fn run_repro() -> Result<()> {
    let reports = repro::run_all();
    let mut failed = 0;
    for report in &reports {
        println!("{}", report.line());
        if !report.passed {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        reports.len() - failed,
        reports.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(args) => run_generate(args),
        Command::Factorize(args) => run_factorize(args),
        Command::Subproblem(args) => run_subproblem(args),
        Command::Grid(args) => run_grid(args),
        Command::Repro => run_repro(),
    }
}
