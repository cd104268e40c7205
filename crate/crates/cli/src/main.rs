use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rashomon_vi::corrections::{choose_c, RashomonConfig};
use rashomon_vi::dataset::{apply_binarization, binarize_quantiles, load_csv, split_80_20, BinarizedDataset};
use rashomon_vi::experiments::{run_studies, CoverageReport, CriterionResult, Report, StudyConfig, StudyRun};
use rashomon_vi::importance::MrMode;
use rashomon_vi::rashomon::{enumerate_rashomon_with, EnumerationOptions};
use rashomon_vi::semisynth::{generate_world, synthetic_base, SemiSyntheticWorld, WorldOptions};
use rashomon_vi::tree::{LossSpec, RegPenalty};
use rashomon_vi::universe::{sweep, threshold_for, UniverseFit, ViOptions};

#[derive(Parser)]
#[command(name = "rashomon-vi", version, about = "Variable-importance intervals over Rashomon sets of sparse trees")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file with any of: delta, gamma, eps_unobs, lambda, depth,
    /// C_strategy, eps_prime_margin, and the study sizes.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coverage of the sub-models by the corrected and uncorrected sets.
    CoverageSubmodels(StudyArgs),
    /// Coverage of sub-model importances by the alpha-widened envelope.
    CoverageVi(StudyArgs),
    /// Coverage of the conditional-mean importance with the drift bound.
    CoverageGstar(StudyArgs),
    /// Mean interval widths per sample size.
    Widths(StudyArgs),
    /// Estimated set size against the model-class count as the bound C.
    CCompare(StudyArgs),
    /// Bounds over a grid of assumed eps_unobs and drift values.
    Sweep(SweepArgs),
    /// Generate a semi-synthetic world directory.
    Semisynth(SemisynthArgs),
    /// Write every member of an empirical Rashomon set as JSON lines.
    Enumerate(EnumerateArgs),
    /// Per-model importances and the resulting interval for one feature.
    ViBounds(ViBoundsArgs),
    /// Quantile-binarize a raw CSV.
    Binarize(BinarizeArgs),
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    pool_size: Option<usize>,
}

#[derive(Args)]
struct DataArgs {
    /// Binarized CSV (0/1 feature columns plus the label).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    label: String,
    /// Held-out CSV for importance and set-size estimation; an 80/20 split
    /// of `--data` otherwise.
    #[arg(long)]
    eval: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    feature: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    eps_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    tau_grid: Vec<f64>,
    #[arg(long)]
    mode: Option<MrMode>,
}

#[derive(Args)]
struct SemisynthArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Binarized base CSV; the built-in Bernoulli base otherwise.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    label: String,
    #[arg(long, default_value_t = 5000)]
    pool_size: usize,
    #[arg(long, default_value_t = 8)]
    features: usize,
    /// Relabel with predictions on the zeroed copy of each partition.
    #[arg(long)]
    relabel_on_zeroed: bool,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Objective threshold; the corrected threshold from the config otherwise.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ViBoundsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    feature: usize,
    #[arg(long)]
    mode: Option<MrMode>,
    /// Drift bound for the conditional-mean interval.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
}

#[derive(Args)]
struct BinarizeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    label: String,
    /// Thresholds per raw feature.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Keep only the first this many raw features.
    #[arg(long)]
    max_raw_features: Option<usize>,
    /// Reuse the thresholds of an earlier run.
    #[arg(long)]
    spec: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<StudyConfig> {
    match path {
        None => Ok(StudyConfig::default()),
        Some(p) => {
            let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&s).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::CoverageSubmodels(a) => study(&mut cfg, a, seed, &cli.out, "coverage_submodels"),
        Command::CoverageVi(a) => study(&mut cfg, a, seed, &cli.out, "coverage_vi"),
        Command::CoverageGstar(a) => study(&mut cfg, a, seed, &cli.out, "coverage_gstar"),
        Command::Widths(a) => study(&mut cfg, a, seed, &cli.out, "widths"),
        Command::CCompare(a) => study(&mut cfg, a, seed, &cli.out, "c_compare"),
        Command::Sweep(a) => run_sweep(&cfg, a, seed, &cli.out),
        Command::Semisynth(a) => run_semisynth(a, seed, &cli.out),
        Command::Enumerate(a) => run_enumerate(&cfg, a, seed, &cli.out),
        Command::ViBounds(a) => run_vi_bounds(&cfg, a, seed, &cli.out),
        Command::Binarize(a) => run_binarize(a, &cli.out),
    }
}

fn study(cfg: &mut StudyConfig, a: StudyArgs, seed: u64, out: &Option<PathBuf>, which: &str) -> Result<bool> {
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    if let Some(n) = a.n_list {
        cfg.n_list = n;
    }
    if let Some(p) = a.pool_size {
        cfg.pool_size = p;
    }
    let dir = out_dir(out)?;
    let run: StudyRun<f64> = run_studies(cfg, seed)?;
    let (report, criterion): (CoverageReport, CriterionResult) = match which {
        "coverage_submodels" => (run.coverage_submodels(), run.criterion_set_coverage()),
        "coverage_vi" => (run.coverage_vi(), run.criterion_vi_coverage()),
        "coverage_gstar" => (run.coverage_gstar(), run.criterion_gstar_coverage()),
        "widths" => (run.widths(), run.criterion_widths()),
        _ => (run.c_compare(), run.criterion_c_compare()),
    };
    report.write_csv(fs::File::create(dir.join(format!("{which}.csv")))?)?;
    let verdict = Report::new(seed, vec![criterion]);
    for c in &verdict.criteria {
        println!("{} criterion {} ({}): {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.name, c.detail);
    }
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&verdict)?)?;
    Ok(verdict.all_pass)
}

fn read_binarized(path: &Path, label: &str) -> Result<BinarizedDataset> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BinarizedDataset::read_csv(f, label)?)
}

/// Training and evaluation data, the config at the chosen `C`, and the
/// evaluation data's default MR mode.
fn prepare(
    cfg: &StudyConfig,
    data: &DataArgs,
    seed: u64,
) -> Result<(BinarizedDataset, BinarizedDataset, RashomonConfig<f64>)> {
    let d = read_binarized(&data.data, &data.label)?;
    let (train, eval) = match &data.eval {
        Some(p) => (d, read_binarized(p, &data.label)?),
        None => {
            let s = split_80_20(&d, seed)?;
            (s.train, s.eval)
        }
    };
    let eps_unobs = match cfg.eps_unobs {
        Some(e) => e,
        None => bail!("set eps_unobs in the --config file"),
    };
    let penalty = RegPenalty::new(cfg.lambda)?;
    let c = choose_c(
        cfg.c_strategy,
        &eval,
        cfg.depth,
        penalty,
        eps_unobs,
        eps_unobs + cfg.eps_prime_margin,
    )?;
    let rc = RashomonConfig {
        delta: cfg.delta,
        gamma: cfg.gamma,
        eps_unobs,
        penalty,
        depth: cfg.depth,
        class_size: c.value,
        loss: LossSpec::zero_one(),
    };
    rc.validate()?;
    Ok((train, eval, rc))
}

fn vi_options(cfg: &StudyConfig, mode: Option<MrMode>, eval_n: usize, seed: u64) -> ViOptions<f64> {
    let mode = mode.or(cfg.mode).unwrap_or_else(|| MrMode::default_for(eval_n));
    let mut o = ViOptions::new(mode);
    o.seed = seed;
    o.enumeration = EnumerationOptions {
        max_members: cfg.max_members,
        pruning: true,
    };
    o
}

fn run_sweep(cfg: &StudyConfig, a: SweepArgs, seed: u64, out: &Option<PathBuf>) -> Result<bool> {
    let mut cfg = cfg.clone();
    // The grid supplies eps_unobs; the config value only seeds the C estimate.
    let first = a.eps_grid.iter().copied().fold(f64::INFINITY, f64::min);
    cfg.eps_unobs = Some(cfg.eps_unobs.unwrap_or(first));
    let (train, eval, rc) = prepare(&cfg, &a.data, seed)?;
    let opts = vi_options(&cfg, a.mode, eval.n(), seed);
    let table = sweep(&train, &eval, &rc, a.feature, &a.eps_grid, &a.tau_grid, &opts)?;
    let dir = out_dir(out)?;
    let mut w = csv_writer(&dir.join("sweep.csv"))?;
    w.write_record(["eps_threshold", "tau", "feature", "lower", "upper", "set_size", "alpha", "eps_n"])?;
    for r in &table.rows {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        w.write_record([
            r.eps_threshold.to_string(),
            r.tau.to_string(),
            r.feature.to_string(),
            opt(r.lower),
            opt(r.upper),
            r.set_size.to_string(),
            r.alpha.to_string(),
            r.eps_n.to_string(),
        ])?;
        if let Some(e) = &r.error {
            log::warn!("eps {} tau {}: {e}", r.eps_threshold, r.tau);
        }
    }
    w.flush()?;
    let meta = serde_json::json!({
        "min_regularized": table.min_regularized,
        "min_unregularized": table.min_unregularized,
        "class_size": rc.class_size.to_string(),
        "failed_cells": table.rows.iter().filter(|r| r.error.is_some()).count(),
    });
    fs::write(dir.join("sweep_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(true)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn run_semisynth(a: SemisynthArgs, seed: u64, out: &Option<PathBuf>) -> Result<bool> {
    let base = match &a.base {
        Some(p) => read_binarized(p, &a.label)?,
        None => synthetic_base(a.pool_size, a.features, seed)?,
    };
    let opts = WorldOptions {
        relabel_on_zeroed: a.relabel_on_zeroed,
        ..WorldOptions::new(a.k, a.depth, seed)
    };
    let world: SemiSyntheticWorld<f64> = generate_world(&base, opts)?;
    let dir = out_dir(out)?;
    world.write_dir(&dir)?;
    for (u, f) in world.submodels.iter().enumerate() {
        println!("submodel {u}: {}", f.to_json());
    }
    println!("eps_unobs_true = {}", world.truth.eps_unobs_true);
    Ok(true)
}

fn sink(out: &Option<PathBuf>, name: &str) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(_) => Box::new(BufWriter::new(fs::File::create(out_dir(out)?.join(name))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_enumerate(cfg: &StudyConfig, a: EnumerateArgs, seed: u64, out: &Option<PathBuf>) -> Result<bool> {
    let (train, threshold, penalty) = match a.threshold {
        Some(t) => (read_binarized(&a.data.data, &a.data.label)?, t, RegPenalty::new(cfg.lambda)?),
        None => {
            let (train, _, rc) = prepare(cfg, &a.data, seed)?;
            let t = threshold_for(&rc, train.n(), true, true)?;
            (train, t, rc.penalty)
        }
    };
    let opts = EnumerationOptions {
        max_members: cfg.max_members,
        pruning: true,
    };
    let set = enumerate_rashomon_with(&train, cfg.depth, penalty, threshold, opts)?;
    let mut w = sink(out, "rashomon.jsonl")?;
    for m in set.members() {
        let line = serde_json::json!({ "tree": m.tree, "objective": m.objective });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    log::info!("{} members at threshold {threshold}", set.len());
    Ok(true)
}

fn run_vi_bounds(cfg: &StudyConfig, a: ViBoundsArgs, seed: u64, out: &Option<PathBuf>) -> Result<bool> {
    let (train, eval, rc) = prepare(cfg, &a.data, seed)?;
    let opts = vi_options(cfg, a.mode, eval.n(), seed);
    let fit = UniverseFit::fit(&train, &eval, &rc, &[a.feature], &opts)?;
    let env = fit.envelope(a.feature)?;
    let mut w = sink(out, "vi_bounds.csv")?;
    writeln!(w, "model_id,mr,objective")?;
    for (id, (mr, m)) in env.per_model.iter().zip(fit.set.members()).enumerate() {
        writeln!(w, "{id},{mr},{}", m.objective)?;
    }
    w.flush()?;
    let sub = fit.submodels(a.feature)?;
    let full = fit.g_star(a.feature, a.tau)?;
    eprintln!(
        "feature {}: set size {}, submodels [{}, {}], with drift [{}, {}]",
        a.feature,
        fit.set.len(),
        sub.lower,
        sub.upper,
        full.lower,
        full.upper
    );
    if out.is_some() {
        let dir = out_dir(out)?;
        fs::write(dir.join("interval.json"), serde_json::to_string_pretty(&full)?)?;
    }
    Ok(true)
}

fn run_binarize(a: BinarizeArgs, out: &Option<PathBuf>) -> Result<bool> {
    let mut raw = load_csv(&a.data, &a.label)?;
    if let Some(m) = a.max_raw_features {
        raw.truncate_features(m);
    }
    let (bin, spec) = match &a.spec {
        Some(p) => {
            let spec = serde_json::from_str(&fs::read_to_string(p)?)?;
            (apply_binarization(&raw, &spec)?, spec)
        }
        None => binarize_quantiles(&raw, a.k)?,
    };
    let dir = out_dir(out)?;
    bin.write_csv(fs::File::create(dir.join("binarized.csv"))?)?;
    fs::write(dir.join("binarization.json"), serde_json::to_string_pretty(&spec)?)?;
    println!("{} rows, {} binary columns", bin.n(), bin.p());
    Ok(true)
}
