//! `gca`: train, evaluate and inspect adaptive-augmentation contrastive
//! node embeddings on portable dataset directories.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gca::centrality::{edge_centrality, node_centrality, pagerank_residual, CentralityMeasure, DEFAULT_DAMPING};
use gca::encoder::{backward, forward, load_checkpoint, save_checkpoint, Activation, ModelParams};
use gca::graph::{random_split, Split};
use gca::oracle::{dense_eigen, finite_diff, naive_loss, DEFAULT_FD_EPS};
use gca::probe::{evaluate, evaluate_split, ProbeConfig, ProbeResult, RunResult};
use gca::trainer::{embed, train, train_with, TrainConfig, Variant};
use gca::{build_plan, contrastive_objective, karate_club, load_dataset, Dataset, GcaError, Graph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CHECKPOINT_FILE: &str = "model.ckpt";
const LOSS_FILE: &str = "loss.csv";
const CONFIG_FILE: &str = "config.txt";

#[derive(Parser)]
#[command(name = "gca", version, about = "Graph contrastive learning with adaptive augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder and write checkpoint, loss curve and resolved config.
    Train(TrainArgs),
    /// Score embeddings with the logistic-regression probe over random splits.
    Eval(EvalArgs),
    /// Export node and edge centrality scores as TSV.
    Centrality(CentralityArgs),
    /// Train and probe over a (p_e, p_f) grid with both views sharing budgets.
    Sweep(SweepArgs),
    /// Print per-edge removal probabilities next to empirical frequencies.
    AugmentStats(AugmentStatsArgs),
    /// Check the optimized code paths against the reference implementations.
    Verify,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Key = value training configuration file; unknown keys are rejected.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Published hyperparameter row: wiki-cs, amazon-computers, amazon-photo,
    /// coauthor-cs or coauthor-physics.
    #[arg(long)]
    preset: Option<String>,
    /// Centrality driving the adaptive schemes.
    #[arg(long, value_parser = parse_measure)]
    measure: Option<CentralityMeasure>,
    /// Which levels use adaptive augmentation.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Override the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the hidden and output width.
    #[arg(long)]
    hidden_dim: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for model.ckpt, loss.csv and config.txt.
    #[arg(long)]
    out: PathBuf,
    /// Training seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint produced by `train`.
    #[arg(long, required_unless_present_any = ["raw_features", "retrain"])]
    checkpoint: Option<PathBuf>,
    /// Probe the raw node features instead of learned embeddings.
    #[arg(long, conflicts_with_all = ["checkpoint", "retrain"])]
    raw_features: bool,
    /// Retrain the encoder for every run (seed + run) instead of probing one
    /// fixed encoder.
    #[arg(long, conflicts_with = "checkpoint")]
    retrain: bool,
    /// Number of probe runs.
    #[arg(long, default_value_t = gca::probe::DEFAULT_RUNS)]
    runs: usize,
    /// Base seed for the random splits.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-run TSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct CentralityArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// degree, eigenvector or pagerank (damping 0.85).
    #[arg(long, value_parser = parse_measure, default_value = "degree")]
    measure: CentralityMeasure,
    /// Output directory for nodes.tsv and edges.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Probability grid as start:end:step, used for both p_e and p_f.
    #[arg(long, default_value = "0.1:0.9:0.1", value_parser = parse_grid)]
    grid: Grid,
    /// Probe runs per cell.
    #[arg(long, default_value_t = gca::probe::DEFAULT_RUNS)]
    runs: usize,
    /// Training seed and split base seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the accuracy matrix here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct AugmentStatsArgs {
    /// Dataset directory.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_measure, default_value = "degree")]
    measure: CentralityMeasure,
    #[arg(long, value_parser = parse_variant, default_value = "gca")]
    variant: Variant,
    /// Edge removal budget.
    #[arg(long, default_value_t = 0.3)]
    p_e: f64,
    /// Feature masking budget.
    #[arg(long, default_value_t = 0.1)]
    p_f: f64,
    /// Probability cut-off.
    #[arg(long, default_value_t = 0.7)]
    p_tau: f64,
    /// Number of sampled views.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the TSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

fn parse_measure(s: &str) -> std::result::Result<CentralityMeasure, String> {
    s.parse().map_err(|e: GcaError| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: GcaError| e.to_string())
}

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?} in grid")))
        .collect::<std::result::Result<_, _>>()?;
    let [start, end, step] = parts[..] else {
        return Err("grid must be start:end:step".into());
    };
    if !(step > 0.0 && start <= end && start >= 0.0 && end < 1.0) {
        return Err(format!("grid {s:?} needs 0 <= start <= end < 1 and step > 0"));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    // Rounded so that labels like 0.30000000000000004 print as 0.3.
    let values = (0..count)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect();
    Ok(Grid(values))
}

impl ModelArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<TrainConfig> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                TrainConfig::parse(&text).with_context(|| format!("in config {}", path.display()))?
            }
            (None, Some(name)) => TrainConfig::preset(name)?,
            (None, None) => TrainConfig::default(),
        };
        if let Some(measure) = self.measure {
            config.centrality_measure = measure;
        }
        if let Some(variant) = self.variant {
            config = config.with_variant(variant);
        }
        if let Some(epochs) = self.epochs {
            config.epochs = epochs;
        }
        if let Some(hidden) = self.hidden_dim {
            config.hidden_dim = hidden;
        }
        if let Some(seed) = seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

fn open_dataset(dir: &Path) -> Result<Dataset> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn labels_of(graph: &Graph) -> Result<(&[usize], usize)> {
    match (graph.labels(), graph.num_classes()) {
        (Some(labels), Some(classes)) => Ok((labels, classes)),
        _ => bail!("dataset has no labels; the probe needs labels.tsv"),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let config = args.model.resolve(args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let report_every = (config.epochs / 20).max(1);
    let outcome = train_with(&dataset.graph, &config, |epoch, loss| {
        if epoch % report_every == 0 || epoch + 1 == config.epochs {
            log::info!("epoch {epoch:>5}  loss {loss:.6}");
        }
    })?;

    let ckpt = args.out.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.params, &ckpt)?;
    let mut csv = output(Some(&args.out.join(LOSS_FILE)))?;
    writeln!(csv, "epoch,loss")?;
    for (epoch, loss) in outcome.losses.iter().enumerate() {
        writeln!(csv, "{epoch},{loss}")?;
    }
    csv.flush()?;
    fs::write(args.out.join(CONFIG_FILE), config.to_config_string())?;
    println!(
        "trained {} epochs, final loss {:.6}, checkpoint {}",
        config.epochs,
        outcome.losses.last().copied().unwrap_or(f64::NAN),
        ckpt.display()
    );
    Ok(())
}

fn retrain_runs(
    graph: &Graph,
    stored: Option<&[Split]>,
    config: &TrainConfig,
    probe: &ProbeConfig,
) -> Result<ProbeResult> {
    let (labels, classes) = labels_of(graph)?;
    let stored = stored.filter(|s| !s.is_empty());
    let mut runs = Vec::with_capacity(probe.n_runs);
    for r in 0..probe.n_runs {
        let seed = probe.split_seed_base + r as u64;
        let run_config = TrainConfig {
            seed: config.seed + r as u64,
            ..config.clone()
        };
        let outcome = train(graph, &run_config)?;
        let emb = embed(&outcome.params, graph)?;
        let split = match stored {
            Some(splits) => splits[r % splits.len()].clone(),
            None => random_split(graph.num_nodes(), seed)?,
        };
        let (l2, val_accuracy, accuracy) =
            evaluate_split(emb.view(), labels, classes, &split, &probe.l2_grid, probe.max_iter)?;
        log::info!("run {r}: accuracy {accuracy:.4}");
        runs.push(RunResult {
            seed,
            l2,
            val_accuracy,
            accuracy,
        });
    }
    Ok(ProbeResult::from_runs(runs))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let graph = &dataset.graph;
    let (labels, classes) = labels_of(graph)?;
    let probe = ProbeConfig {
        n_runs: args.runs,
        split_seed_base: args.seed,
        ..ProbeConfig::default()
    };
    let stored = dataset.splits.as_deref();
    let result = if args.retrain {
        retrain_runs(graph, stored, &args.model.resolve(None)?, &probe)?
    } else {
        let emb = match &args.checkpoint {
            Some(path) => {
                let params = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
                embed(&params, graph)?
            }
            None => graph.features_f64(),
        };
        evaluate(emb.view(), labels, classes, stored, &probe)?
    };

    let mut out = output(args.out.as_deref())?;
    result.write_tsv(&mut out)?;
    out.flush()?;
    drop(out);
    println!(
        "accuracy {:.4} ± {:.4} over {} runs",
        result.mean,
        result.std,
        result.runs.len()
    );
    Ok(())
}

fn cmd_centrality(args: &CentralityArgs) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let graph = &dataset.graph;
    let nc = node_centrality(graph, args.measure)?;
    let weights = edge_centrality(graph, &nc)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut nodes = output(Some(&args.out.join("nodes.tsv")))?;
    writeln!(nodes, "node_id\tscore")?;
    for (i, s) in nc.scores.iter().enumerate() {
        writeln!(nodes, "{i}\t{s}")?;
    }
    nodes.flush()?;

    let arcs: Vec<(usize, usize)> = graph.arcs().collect();
    let units = graph.edge_units();
    let mut edges = output(Some(&args.out.join("edges.tsv")))?;
    writeln!(edges, "source\ttarget\tweight")?;
    for &(arc, _) in &units {
        let (u, v) = arcs[arc];
        writeln!(edges, "{u}\t{v}\t{}", weights.values[arc])?;
    }
    edges.flush()?;
    println!(
        "{} centrality: {} nodes, {} edges written to {}",
        args.measure,
        nc.scores.len(),
        units.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let dataset = open_dataset(&args.dataset)?;
    let graph = &dataset.graph;
    let (labels, classes) = labels_of(graph)?;
    let base = args.model.resolve(Some(args.seed))?;
    let probe = ProbeConfig {
        n_runs: args.runs,
        split_seed_base: args.seed,
        ..ProbeConfig::default()
    };
    let grid = &args.grid.0;
    let cells: Vec<(f64, f64)> = grid.iter().flat_map(|&pe| grid.iter().map(move |&pf| (pe, pf))).collect();
    let results = cells
        .par_iter()
        .map(|&(p_e, p_f)| {
            let config = TrainConfig {
                p_e1: p_e,
                p_e2: p_e,
                p_f1: p_f,
                p_f2: p_f,
                ..base.clone()
            };
            let outcome = train(graph, &config)?;
            let emb = embed(&outcome.params, graph)?;
            let result = evaluate(emb.view(), labels, classes, dataset.splits.as_deref(), &probe)?;
            log::info!("p_e {p_e} p_f {p_f}: {:.4} ± {:.4}", result.mean, result.std);
            Ok(result.mean)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut out = output(args.out.as_deref())?;
    write!(out, "p_e\\p_f")?;
    for pf in grid {
        write!(out, "\t{pf}")?;
    }
    writeln!(out)?;
    for (row, pe) in grid.iter().enumerate() {
        write!(out, "{pe}")?;
        for acc in &results[row * grid.len()..(row + 1) * grid.len()] {
            write!(out, "\t{acc:.6}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_augment_stats(args: &AugmentStatsArgs) -> Result<()> {
    if args.samples == 0 {
        bail!("--samples must be at least 1");
    }
    let dataset = open_dataset(&args.dataset)?;
    let graph = &dataset.graph;
    let (topology, attribute) = args.variant.switches();
    let plan = build_plan(graph, args.measure, args.p_e, args.p_f, args.p_tau, topology, attribute)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let units = graph.edge_units();
    let mut removed = vec![0usize; units.len()];
    for _ in 0..args.samples {
        let view = plan.sample(&mut rng);
        for (count, &(arc, _)) in removed.iter_mut().zip(&units) {
            *count += usize::from(!view.kept_arcs[arc]);
        }
    }
    let arcs: Vec<(usize, usize)> = graph.arcs().collect();
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "source\ttarget\tprobability\tempirical")?;
    for (&(arc, _), &count) in units.iter().zip(&removed) {
        let (u, v) = arcs[arc];
        writeln!(
            out,
            "{u}\t{v}\t{:.6}\t{:.6}",
            plan.edge_drop_probs[arc],
            count as f64 / args.samples as f64
        )?;
    }
    out.flush()?;
    Ok(())
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn cmd_verify() -> Result<bool> {
    let graph = karate_club();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut all = true;

    let n = graph.num_nodes();
    let mut adjacency = Array2::<f64>::zeros((n, n));
    for (u, v) in graph.arcs() {
        adjacency[[u, v]] = 1.0;
    }
    let oracle = dense_eigen(&adjacency)?;
    let ours = node_centrality(&graph, CentralityMeasure::Eigenvector)?;
    let dev = ours
        .scores
        .iter()
        .zip(oracle.vector.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    all &= check("eigenvector centrality", dev < 1e-6, format!("max deviation from dense solver {dev:.2e}"));

    let pr = node_centrality(&graph, CentralityMeasure::PageRank)?;
    let residual = pagerank_residual(&graph, DEFAULT_DAMPING, &pr.scores);
    all &= check("pagerank fixed point", residual < 1e-8, format!("residual {residual:.2e}"));

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (rows, dim) = (rng.random_range(2..24), rng.random_range(2..12));
        let (zu, zv) = (random_matrix(&mut rng, rows, dim), random_matrix(&mut rng, rows, dim));
        let tau = rng.random_range(0.1..1.0);
        let fast = contrastive_objective(&zu, &zv, tau)?.objective;
        worst = worst.max((fast - naive_loss(&zu, &zv, tau)?).abs());
    }
    all &= check("objective vs literal loops", worst < 1e-10, format!("max difference {worst:.2e}"));

    let (zu, zv) = (random_matrix(&mut rng, 10, 5), random_matrix(&mut rng, 10, 5));
    let report = contrastive_objective(&zu, &zv, 0.5)?;
    let mut point: Vec<f64> = zu.iter().chain(zv.iter()).copied().collect();
    let numeric = finite_diff(
        |flat| {
            let u = Array2::from_shape_vec((10, 5), flat[..50].to_vec()).expect("shape");
            let v = Array2::from_shape_vec((10, 5), flat[50..].to_vec()).expect("shape");
            contrastive_objective(&u, &v, 0.5).map_or(f64::NAN, |r| r.objective)
        },
        &point,
        DEFAULT_FD_EPS,
    )?;
    point.clear();
    point.extend(report.grad_u.iter().chain(report.grad_v.iter()));
    let err = max_relative_error(&point, &numeric);
    all &= check("objective gradient", err < 1e-6, format!("max relative error {err:.2e}"));

    let plan = build_plan(&graph, CentralityMeasure::Degree, 0.3, 0.2, 0.7, true, true)?;
    let x = graph.features_f64();
    let views: Vec<_> = (0..2)
        .map(|_| {
            let sample = plan.sample(&mut rng);
            (sample.norm_adjacency(&graph), sample.masked_features(&x))
        })
        .collect();
    let mut params = ModelParams::init(graph.num_features(), 6, 4, Activation::Prelu, &mut rng);
    params.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    params.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let objective = |p: &ModelParams| -> Result<f64> {
        let (z1, _) = forward(p, &views[0].0, &views[0].1)?;
        let (z2, _) = forward(p, &views[1].0, &views[1].1)?;
        Ok(contrastive_objective(&z1, &z2, 0.5)?.objective)
    };
    let (z1, t1) = forward(&params, &views[0].0, &views[0].1)?;
    let (z2, t2) = forward(&params, &views[1].0, &views[1].1)?;
    let report = contrastive_objective(&z1, &z2, 0.5)?;
    let analytic = backward(&params, &[(&t1, &report.grad_u), (&t2, &report.grad_v)])?.to_flat();
    let numeric = finite_diff(
        |flat| {
            let mut p = params.clone();
            p.set_flat(flat);
            objective(&p).unwrap_or(f64::NAN)
        },
        &params.to_flat(),
        DEFAULT_FD_EPS,
    )?;
    let err = max_relative_error(&analytic, &numeric);
    all &= check("encoder gradient", err < 1e-5, format!("max relative error {err:.2e}"));
    Ok(all)
}

/// Largest |a - b| relative to the largest gradient magnitude.
fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(1e-12f64, |m, g| m.max(g.abs()));
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("GCA_THREADS") {
        let threads: usize = value
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .with_context(|| format!("GCA_THREADS must be a positive integer, got {value:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    configure_threads()?;
    match &cli.command {
        Command::Train(args) => cmd_train(args)?,
        Command::Eval(args) => cmd_eval(args)?,
        Command::Centrality(args) => cmd_centrality(args)?,
        Command::Sweep(args) => cmd_sweep(args)?,
        Command::AugmentStats(args) => cmd_augment_stats(args)?,
        Command::Verify => return cmd_verify(),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            let missing_input = err
                .chain()
                .any(|cause| matches!(cause.downcast_ref::<GcaError>(), Some(GcaError::MissingFile(_))));
            ExitCode::from(if missing_input { 2 } else { 1 })
        }
    }
}
