//! Command-line front-end: evolve, transform, predict, inspect, cost,
//! stats, and the raw-data baseline runner.
//!
//! Exit codes: 0 success, 2 input/data error, 3 configuration error,
//! 1 internal defect. Progress goes to standard error; machine-readable
//! artifacts go to files (or stdout where no output path applies). Every
//! file-writing command drops a run manifest alongside its artifacts, and
//! all randomness flows from `--seed`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::classifier::{accuracy, fit_extra_trees, fit_predict_1nn, FeatureMatrix};
use crate::cost::{cost_report, with_classifier_cost};
use crate::dataset::{load_ucr_tsv, load_unlabeled, Dataset};
use crate::error::{Error, Result};
use crate::evolution::{evolve, history_csv, EvoConfig, EvolvedModel, Selection};
use crate::program::{
    deserialize_tree, evaluate_tree, render_tree, structural_stats, transform_dataset, Op,
    ProgramTree, Shape, TreeNode,
};
use crate::util::fmt_sig12;

#[derive(Parser)]
#[command(
    name = "tsgp",
    version,
    about = "Evolves lightweight feature-learning programs for univariate time series classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a feature-learning model on a training set.
    Evolve(EvolveArgs),
    /// Transform a dataset with a model into a feature CSV.
    Transform(TransformArgs),
    /// Predict labels for a dataset with an evolved model.
    Predict(PredictArgs),
    /// Print a model's program, per-branch layers, and feature dimension.
    Inspect(InspectArgs),
    /// Report inference FLOPs and peak memory of a model.
    Cost(CostArgs),
    /// Aggregate structural statistics over a set of models.
    Stats(StatsArgs),
    /// Run a raw-data baseline (1-NN or extra trees).
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct EvolveArgs {
    /// Training set (label-first TSV/CSV).
    #[arg(long)]
    train: PathBuf,
    /// Output model document path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    /// Tournament ratio in percent of the population.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    fitness_trees: Option<usize>,
    #[arg(long)]
    final_trees: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Parent selection strategy.
    #[arg(long, value_enum, default_value_t = Selection::Pareto)]
    selection: Selection,
    /// Z-normalize each series at load time.
    #[arg(long)]
    znorm: bool,
    /// Worker threads (default: logical cores). Results are independent of
    /// the thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    znorm: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Optional file for the predicted labels (one per line).
    #[arg(long)]
    out: Option<PathBuf>,
    /// The data file has no label column; print predictions only.
    #[arg(long)]
    no_labels: bool,
    #[arg(long)]
    znorm: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    model: PathBuf,
    /// Optional file for the JSON report (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add the worst-case classifier traversal cost to the report.
    #[arg(long)]
    include_classifier: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Model paths or glob patterns (`*` and `?` in the file name).
    #[arg(long, required = true, num_args = 1..)]
    models: Vec<String>,
    /// Optional CSV output path (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Baseline method.
    #[arg(long, value_enum)]
    method: BaselineMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    final_trees: usize,
    #[arg(long)]
    znorm: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum BaselineMethod {
    /// 1-nearest-neighbor on the raw series.
    #[value(name = "1nn")]
    OneNn,
    /// Extremely randomized trees on the raw series.
    EtRaw,
}

/// Manifest written alongside every output artifact; re-running the listed
/// command reproduces the artifacts byte-identically.
#[derive(Serialize)]
struct RunManifest {
    command: Vec<String>,
    tool_version: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<EvoConfig>,
    duration_seconds: f64,
}

fn write_manifest(
    primary_out: &Path,
    inputs: &[&Path],
    outputs: &[&Path],
    seed: Option<u64>,
    config: Option<&EvoConfig>,
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: std::env::args().collect(),
        tool_version: format!("tsgp {}", env!("CARGO_PKG_VERSION")),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        seed,
        config: config.cloned(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let path = sibling(primary_out, "manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `model.json` -> `model.<suffix>` next to it.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
    }
}

fn load_dataset(path: &Path, znorm: bool) -> Result<Dataset> {
    let mut d = load_ucr_tsv(path)?;
    if znorm {
        d.znormalize();
    }
    Ok(d)
}

fn load_model(path: &Path) -> Result<EvolvedModel> {
    let text = std::fs::read_to_string(path)?;
    EvolvedModel::from_json(&text)
}

fn load_tree(path: &Path) -> Result<(ProgramTree, String)> {
    let text = std::fs::read_to_string(path)?;
    let (tree, meta) = deserialize_tree(&text)?;
    Ok((tree, meta.dataset))
}

fn cmd_evolve(args: &EvolveArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = EvoConfig { seed: args.seed, selection: args.selection, ..EvoConfig::default() };
    if let Some(g) = args.generations {
        cfg.generations = g;
    }
    if let Some(p) = args.population {
        cfg.population_size = p;
    }
    if let Some(mu) = args.mu {
        cfg.tournament_mu = mu;
    }
    if let Some(t) = args.fitness_trees {
        cfg.fitness_trees = t;
    }
    if let Some(t) = args.final_trees {
        cfg.final_trees = t;
    }
    if let Some(k) = args.folds {
        cfg.folds = k;
    }
    cfg.validate()?;
    let d = load_dataset(&args.train, args.znorm)?;
    eprintln!(
        "evolving on {} ({} series, length {}, {} classes)",
        d.name(),
        d.len(),
        d.series_length(),
        d.n_classes()
    );
    let model = with_threads(args.threads, || evolve(&d, &cfg))?;
    let log_path = sibling(&args.out, "log.csv");
    std::fs::write(&args.out, model.to_json())?;
    std::fs::write(&log_path, history_csv(&model.history))?;
    write_manifest(
        &args.out,
        &[&args.train],
        &[&args.out, &log_path],
        Some(args.seed),
        Some(&cfg),
        started,
    )?;
    eprintln!(
        "done: mean cv accuracy {:.4}, feature dim {}, wrote {}",
        model.fitness.mean,
        model.tree.feature_dim(),
        args.out.display()
    );
    Ok(())
}

/// Feature CSV: header `label,f0..f{d-1}`, original label values, features
/// at 12 significant digits.
fn matrix_csv(m: &FeatureMatrix, label_map: &[i64]) -> String {
    let mut out = String::from("label");
    for j in 0..m.n_cols() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for i in 0..m.n_rows() {
        out.push_str(&label_map[m.labels()[i]].to_string());
        for v in m.row(i) {
            out.push(',');
            out.push_str(&fmt_sig12(*v));
        }
        out.push('\n');
    }
    out
}

fn cmd_transform(args: &TransformArgs) -> Result<()> {
    let started = Instant::now();
    let (tree, _) = load_tree(&args.model)?;
    let d = load_dataset(&args.data, args.znorm)?;
    let m = transform_dataset(&tree, &d)?;
    std::fs::write(&args.out, matrix_csv(&m, d.label_map()))?;
    write_manifest(&args.out, &[&args.model, &args.data], &[&args.out], None, None, started)?;
    eprintln!("wrote {} rows x {} features to {}", m.n_rows(), m.n_cols(), args.out.display());
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let started = Instant::now();
    let model = load_model(&args.model)?;
    let expected = model.tree.series_length();

    let (rows, truth): (Vec<Vec<f64>>, Option<Vec<usize>>) = if args.no_labels {
        (load_unlabeled(&args.data)?, None)
    } else {
        let d = load_dataset(&args.data, args.znorm)?;
        let truth = d
            .series()
            .iter()
            .map(|s| model.class_of_label(d.label_map()[s.label]))
            .collect::<Result<Vec<usize>>>()?;
        (d.series().iter().map(|s| s.values.clone()).collect(), Some(truth))
    };
    if let Some(first) = rows.first() {
        if first.len() != expected {
            return Err(Error::LengthMismatch { expected, got: first.len() });
        }
    }

    let mut predictions = Vec::with_capacity(rows.len());
    for row in &rows {
        let features = evaluate_tree(&model.tree, row)?;
        predictions.push(model.classifier.predict_row(&features));
    }

    let mut lines = String::new();
    for &p in &predictions {
        lines.push_str(&model.label_map[p].to_string());
        lines.push('\n');
    }
    print!("{lines}");
    if let Some(truth) = &truth {
        println!("accuracy={}", accuracy(&predictions, truth));
    }
    if let Some(out) = &args.out {
        std::fs::write(out, lines)?;
        write_manifest(out, &[&args.model, &args.data], &[out], None, None, started)?;
    }
    Ok(())
}

/// One `a → b → c` summary line per feature-learning branch.
fn branch_summary(branch: &TreeNode, series_length: usize) -> String {
    let mut segment = "Full".to_string();
    let mut domain = "Raw";
    let mut patch = "NoPatch".to_string();
    let extractor = match branch.op {
        Op::StatisDist => {
            let tau = branch.children[1].value.and_then(|v| v.as_real()).unwrap_or(0.0);
            format!("StatisDist(τ={tau})")
        }
        _ => {
            let lambda = branch.children[1].value.and_then(|v| v.as_real()).unwrap_or(0.0);
            format!("{}(λ={lambda})", branch.op.name())
        }
    };
    let mut node = &branch.children[0];
    loop {
        match node.op {
            Op::AdaPatch => {
                patch = format!("Patch/{}", node.children[1].value.and_then(|v| v.as_int()).unwrap_or(0));
                node = &node.children[0];
            }
            Op::DomFreq => {
                domain = "Freq";
                node = &node.children[0];
            }
            Op::DomDiff => {
                domain = "Diff";
                node = &node.children[0];
            }
            Op::SegDect => {
                let len = node.children[1].value.and_then(|v| v.as_int()).unwrap_or(0);
                let start = node.children[2].value.and_then(|v| v.as_int()).unwrap_or(0);
                segment = format!("SegDect[{}..{}]", start, start + len - 1);
                node = &node.children[0];
            }
            _ => break,
        }
    }
    let dim = match crate::program::shape_of(branch, series_length) {
        Ok(Shape::Vector { dim }) => dim,
        _ => 0,
    };
    format!("{segment} → {domain} → {patch} → {extractor} → dim {dim}")
}

fn collect_branches<'a>(node: &'a TreeNode, out: &mut Vec<&'a TreeNode>) {
    for child in &node.children {
        if child.op.is_concat() {
            collect_branches(child, out);
        } else if child.op.is_extractor() {
            out.push(child);
        }
    }
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let (tree, dataset) = load_tree(&args.model)?;
    println!("model: {}", args.model.display());
    if !dataset.is_empty() {
        println!("dataset: {dataset}");
    }
    println!("series_length: {}", tree.series_length());
    println!("depth: {}", tree.depth());
    println!("nodes: {}", tree.node_count());
    println!("feature_dim: {}", tree.feature_dim());
    println!("tree: {}", render_tree(&tree));
    let mut branches = Vec::new();
    collect_branches(tree.root(), &mut branches);
    for (i, b) in branches.iter().enumerate() {
        println!("branch {}: {}", i + 1, branch_summary(b, tree.series_length()));
    }
    Ok(())
}

fn cmd_cost(args: &CostArgs) -> Result<()> {
    let started = Instant::now();
    let (tree, _) = load_tree(&args.model)?;
    let mut report = cost_report(&tree, tree.series_length())?;
    if args.include_classifier {
        let model = load_model(&args.model)?;
        report = with_classifier_cost(report, &model.classifier);
    }
    let mut json = serde_json::to_string_pretty(&report).expect("report serialization");
    json.push('\n');
    match &args.out {
        Some(out) => {
            std::fs::write(out, json)?;
            write_manifest(out, &[&args.model], &[out], None, None, started)?;
        }
        None => print!("{json}"),
    }
    println!("{}", report.summary_line());
    Ok(())
}

/// Matches `*` (any run) and `?` (one char) against a file name.
fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    fn rec(p: &[char], n: &[char]) -> bool {
        match (p.first(), n.first()) {
            (None, None) => true,
            (Some('*'), _) => rec(&p[1..], n) || (!n.is_empty() && rec(p, &n[1..])),
            (Some('?'), Some(_)) => rec(&p[1..], &n[1..]),
            (Some(c), Some(d)) if c == d => rec(&p[1..], &n[1..]),
            _ => false,
        }
    }
    rec(&p, &n)
}

fn expand_pattern(pattern: &str) -> Result<Vec<PathBuf>> {
    let path = Path::new(pattern);
    let name = path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default();
    if !(name.contains('*') || name.contains('?')) {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut matches = Vec::new();
    for entry in std::fs::read_dir(&dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() && glob_match(&name, &entry.file_name().to_string_lossy())
        {
            matches.push(entry.path());
        }
    }
    matches.sort();
    Ok(matches)
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let started = Instant::now();
    let mut paths = Vec::new();
    for pattern in &args.models {
        paths.extend(expand_pattern(pattern)?);
    }
    paths.sort();
    paths.dedup();
    if paths.is_empty() {
        return Err(Error::NoMatches { pattern: args.models.join(" ") });
    }
    let mut trees = Vec::with_capacity(paths.len());
    for p in &paths {
        trees.push(load_tree(p)?.0);
    }
    let stats = structural_stats(&trees);
    if stats.zero_denominators {
        eprintln!("warning: zero denominators (no trees or no branches)");
    }
    eprintln!("aggregated {} models", trees.len());
    let csv = stats.to_csv();
    match &args.out {
        Some(out) => {
            std::fs::write(out, csv)?;
            let inputs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
            write_manifest(out, &inputs, &[out.as_path()], None, None, started)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let train = load_dataset(&args.train, args.znorm)?;
    let test = load_dataset(&args.test, args.znorm)?;
    if train.series_length() != test.series_length() {
        return Err(Error::LengthMismatch {
            expected: train.series_length(),
            got: test.series_length(),
        });
    }
    let train_x = FeatureMatrix::from_dataset_raw(&train);
    let test_x = FeatureMatrix::from_dataset_raw(&test);
    // Test labels mapped through the training label table.
    let truth: Vec<usize> = test
        .series()
        .iter()
        .map(|s| {
            let orig = test.label_map()[s.label];
            train
                .label_map()
                .iter()
                .position(|&l| l == orig)
                .ok_or(Error::UnknownLabel(orig))
        })
        .collect::<Result<Vec<usize>>>()?;
    let predictions = match args.method {
        BaselineMethod::OneNn => fit_predict_1nn(&train_x, &test_x),
        BaselineMethod::EtRaw => {
            let model =
                fit_extra_trees(&train_x, train.n_classes(), args.final_trees, args.seed)?;
            model.predict(&test_x)
        }
    };
    println!("accuracy={}", accuracy(&predictions, &truth));
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Evolve(a) => cmd_evolve(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Baseline(a) => cmd_baseline(a),
    }
}

/// Parses arguments, runs the command, and maps failures to exit codes.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| dispatch(&cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
        Err(_) => {
            eprintln!("error: internal defect (panic)");
            ExitCode::from(1)
        }
    }
}
