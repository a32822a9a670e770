use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use girp::cut::{closure_network, derivatives_at_weight};
use girp::dataset::{read_covariates_csv, read_rows_csv, Dataset};
use girp::engine::{fit_with_progress, FitLimits, Path, Progress};
use girp::experiment::{run_experiment, run_timing, ExperimentConfig, ExperimentKind};
use girp::loss::{Loss, LossModel, LossSpec};
use girp::model::{evaluate, select_stopping, validation_curve, validation_split, Metric, PathModelFile};

#[derive(Parser)]
#[command(name = "girp", version, about = "Isotonic regression under convex losses by recursive partitioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a path of isotonic models to a CSV of `x1,...,xd,y` rows.
    Fit(FitArgs),
    /// Predict from a model file for each covariate row of a CSV.
    Predict(PredictArgs),
    /// Score a model on labelled rows.
    Evaluate(EvaluateArgs),
    /// Pick the stopping point on labelled validation rows.
    Select(SelectArgs),
    /// Run a synthetic simulation.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// l2, huber, huber:delta=<x>, poisson, poisson-log, bernoulli, pnorm:p=<x>
    #[arg(long, default_value = "l2")]
    loss: String,
    /// Share of rows held out to choose the stopping point.
    #[arg(long, default_value_t = 0.0)]
    valid_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Validation metric; defaults to the one matching the loss.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep every dominance pair instead of the transitive reduction.
    #[arg(long)]
    no_reduce: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Print each training point with its fit from the selected model.
    #[arg(long)]
    show_fit: bool,
    /// Skip the per-iteration table.
    #[arg(long)]
    quiet: bool,
    /// Write the first split problem as a DIMACS max-flow instance.
    #[arg(long)]
    dump_dimacs: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Iteration to predict from; defaults to the selected one.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    metric: Option<String>,
    /// Store the chosen iteration back into the model file.
    #[arg(long)]
    write: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// poisson1, poisson2, huber1, huber2 or timing
    name: String,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 1200)]
    n_train: usize,
    #[arg(long, default_value_t = 300)]
    n_test: usize,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// First seed; seeds run from here upward.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Points per run for the timing experiment.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Loss override; defaults to the simulation's own.
    #[arg(long)]
    loss: Option<String>,
    /// Covariate range as `lo,hi`.
    #[arg(long)]
    x_range: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    valid_frac: f64,
    #[arg(long)]
    no_reduce: bool,
}

fn open(path: &FsPath) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_metric(arg: Option<&String>, loss: &LossModel) -> Result<Metric> {
    Ok(match arg {
        Some(m) => m.parse()?,
        None => Metric::for_loss(loss),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let rows = read_rows_csv(open(&args.data)?).with_context(|| format!("reading {}", args.data.display()))?;
    let (train_idx, valid_idx) = validation_split(rows.len(), args.valid_frac, args.seed)?;
    let train: Vec<_> = train_idx.iter().map(|&i| rows[i].clone()).collect();
    let valid: Vec<_> = valid_idx.iter().map(|&i| rows[i].clone()).collect();

    let spec: LossSpec = args.loss.parse()?;
    let ys: Vec<f64> = train.iter().map(|r| r.1).collect();
    let loss = spec.resolve(&ys)?;
    let metric = parse_metric(args.metric.as_ref(), &loss)?;
    let dataset = Dataset::ingest_with(&train, !args.no_reduce)?;

    if let Some(target) = &args.dump_dimacs {
        let members: Vec<usize> = (0..dataset.n()).collect();
        let responses: Vec<f64> = members.iter().flat_map(|&i| dataset.responses(i).to_vec()).collect();
        let w = loss.group_weight(&responses)?;
        let z = derivatives_at_weight(&loss, &dataset, &members, w.value)?;
        std::fs::write(target, closure_network(&z, &dataset.order().edges).to_dimacs())
            .with_context(|| format!("cannot write {}", target.display()))?;
    }

    let limits = FitLimits {
        max_iterations: args.max_iter,
        time_budget: args.time_budget.map(Duration::from_secs_f64),
    };
    let mut log: Vec<Progress> = Vec::new();
    let path = fit_with_progress(&dataset, &loss, limits, &mut |p| log.push(*p))?;

    let curve = if valid.is_empty() {
        None
    } else {
        Some(validation_curve(&dataset, &path, &valid, metric)?)
    };
    let selected_k = match &curve {
        Some(c) => select_stopping(c).expect("nonempty path"),
        None => path.last_k(),
    };

    let mut out = io::stdout().lock();
    writeln!(
        out,
        "loss={loss} points={} rows={} edges={} valid_rows={} metric={metric}",
        dataset.n(),
        dataset.raw_row_count(),
        dataset.order().m(),
        valid.len()
    )?;
    if !args.quiet {
        writeln!(out, "{:>6} {:>16} {:>7} {:>18} {:>14}", "k", "cut_value", "groups", "train_loss", "valid_metric")?;
        for p in &log {
            writeln!(
                out,
                "{:>6} {:>16} {:>7} {:>18.6} {:>14}",
                p.k,
                fmt_opt(p.cut_value),
                p.groups,
                p.loss_total,
                fmt_opt(curve.as_ref().map(|c| c[p.k]))
            )?;
        }
    }
    writeln!(
        out,
        "iterations={} optimal={} selected_k={selected_k}",
        path.last_k(),
        path.is_optimal()
    )?;
    if args.show_fit {
        print_fit(&mut out, &dataset, &path, selected_k)?;
    }

    if let Some(target) = &args.out {
        let file = PathModelFile {
            loss,
            dataset,
            path,
            selected_k: Some(selected_k),
            seed: Some(args.seed),
            valid_frac: args.valid_frac,
        };
        file.save(target)
            .with_context(|| format!("cannot write {}", target.display()))?;
        writeln!(out, "model written to {}", target.display())?;
    }
    Ok(())
}

fn print_fit(out: &mut impl Write, dataset: &Dataset, path: &Path, k: usize) -> Result<()> {
    let fits = path.fits_at(k)?;
    let d = dataset.dimension();
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["y".into(), "fit".into()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for (p, f) in dataset.points().iter().zip(&fits) {
        let cells: Vec<String> = p.x.iter().chain([&p.y, f]).map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let file = PathModelFile::load(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let model = file.model(args.k)?;
    let xs = read_covariates_csv(open(&args.data)?)?;
    let predictions = model.predict_many(&xs)?;
    let mut out = output(args.out.as_ref())?;
    writeln!(out, "prediction")?;
    for p in predictions {
        writeln!(out, "{p}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = PathModelFile::load(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let model = file.model(args.k)?;
    let rows = read_rows_csv(open(&args.data)?)?;
    let metric = parse_metric(args.metric.as_ref(), &file.loss)?;
    let value = evaluate(&model, &rows, metric)?;
    println!("k={} metric={metric} value={value}", model.iteration());
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let mut file = PathModelFile::load(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let rows = read_rows_csv(open(&args.data)?)?;
    let metric = parse_metric(args.metric.as_ref(), &file.loss)?;
    let curve = validation_curve(&file.dataset, &file.path, &rows, metric)?;
    let selected = select_stopping(&curve).expect("nonempty path");
    let mut out = io::stdout().lock();
    writeln!(out, "{:>6} {:>18} {:>14}", "k", "train_loss", "valid_metric")?;
    for (step, v) in file.path.steps().iter().zip(&curve) {
        writeln!(out, "{:>6} {:>18.6} {:>14.6}", step.k, step.loss_total, v)?;
    }
    writeln!(out, "selected_k={selected}")?;
    if args.write {
        file.selected_k = Some(selected);
        file.save(&args.model)?;
        writeln!(out, "model updated")?;
    }
    Ok(())
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(',')
        .with_context(|| format!("expected lo,hi, got {s:?}"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let kind: ExperimentKind = args.name.parse()?;
    let loss: Option<LossSpec> = args.loss.as_deref().map(str::parse).transpose()?;
    if kind == ExperimentKind::Timing {
        if args.x_range.is_some() {
            bail!("the timing experiment uses a fixed covariate range");
        }
        let spec = loss.unwrap_or(LossSpec::HuberAuto);
        let mut total = 0.0;
        for s in 0..args.seeds as u64 {
            let t = run_timing(args.n, args.d, spec, args.seed + s)?;
            total += t.elapsed.as_secs_f64();
            println!("{t}");
        }
        println!("mean_seconds={:.3}", total / args.seeds.max(1) as f64);
        return Ok(());
    }
    let mut config = ExperimentConfig::new(kind, args.d);
    config.n_train = args.n_train;
    config.n_test = args.n_test;
    config.seeds = args.seeds;
    config.base_seed = args.seed;
    config.valid_frac = args.valid_frac;
    config.x_range = args.x_range.as_deref().map(parse_range).transpose()?;
    config.loss = loss;
    config.reduce = !args.no_reduce;
    let report = run_experiment(&config)?;
    println!("{report}");
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GIRP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("GIRP_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("GIRP_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Select(a) => cmd_select(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
