//! The `dstl` command line: `synth`, `fit`, `eval`, `ablate` and `bench`.
//!
//! Exit codes: 0 on success, 2 for input or validation errors, 3 for
//! numeric failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_dataset, normalize, read_labels, write_dataset, write_labels,
    write_matrix_csv, MultiViewDataset, NormalizationMode, SynthSpec,
};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::memtrack;
use crate::metrics::{evaluate, Scores};
use crate::solver::{
    embedding, fit_with_options, FitOptions, Hyperparams, TraceRecord, Variant,
};

/// Candidate values for `lambda1` and `lambda2` when tuning.
pub const LAMBDA_GRID: [f64; 10] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1, 1e0, 5e0];

#[derive(Debug, Parser)]
#[command(name = "dstl", version, about = "Sparse plus low-rank slim-tensor factorization for multi-view clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-view dataset.
    Synth(SynthArgs),
    /// Fit the model, cluster the indicator and score it.
    Fit(FitArgs),
    /// Score an existing label file against the dataset's ground truth.
    Eval(EvalArgs),
    /// Run the full model and its three ablations with shared settings.
    Ablate(AblateArgs),
    /// Time the solver over a range of sample counts.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long, default_value_t = 5)]
    pub c: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![40, 30, 20])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub corrupt_frac: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[command(flatten)]
    pub spec: SynthFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelFlags {
    #[arg(long, default_value_t = 0.1)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda3: f64,
    /// Latent dimension; defaults to the number of classes in the labels.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    pub variant: Variant,
    #[arg(long, default_value = "none", value_parser = parse_normalization)]
    pub normalize: NormalizationMode,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Skip the per-iteration objective evaluation.
    #[arg(long)]
    pub no_objective: bool,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_normalization(s: &str) -> std::result::Result<NormalizationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Manifest of the dataset holding the ground-truth labels.
    #[arg(long)]
    pub data: PathBuf,
    /// Predicted labels, one integer per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory for metrics.json; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Tune (lambda1, lambda2) per variant over the full grid by mean ACC.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub c: usize,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![30, 30, 30])]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub corrupt_frac: f64,
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Add k-means time to fit_seconds.
    #[arg(long)]
    pub include_kmeans: bool,
    /// Stop at convergence instead of always running max_iter iterations.
    #[arg(long)]
    pub early_stop: bool,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code as u8;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n: a.n,
        c: a.spec.c,
        m: a.spec.m,
        dims: a.spec.dims.clone(),
        noise_sigma: a.spec.noise_sigma,
        corrupt_frac: a.spec.corrupt_frac,
        seed: a.spec.seed,
    };
    let out = generate_synthetic(&spec)?;
    let manifest = write_dataset(&out.dataset, &a.out)?;
    println!(
        "wrote {}: n={} c={} m={} dims={:?}",
        manifest.display(),
        spec.n,
        spec.c,
        spec.m,
        spec.dims
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample (n - 1) standard deviation; std is 0 for one value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub variant: Variant,
    pub acc: Option<MeanStd>,
    pub nmi: Option<MeanStd>,
    pub purity: Option<MeanStd>,
    pub ari: Option<MeanStd>,
    pub fscore: Option<MeanStd>,
    pub iterations: usize,
    pub converged: bool,
    pub fit_seconds: f64,
    pub kmeans_seconds: f64,
    pub repeats: usize,
    pub normalize: NormalizationMode,
    pub hyperparams: Hyperparams,
}

/// Everything a fit run produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub labels: Vec<usize>,
    pub embedding: DMatrix<f64>,
    pub trace: Vec<TraceRecord>,
    pub runs: Vec<Scores>,
    pub metrics: MetricsReport,
}

fn resolve_k(ds: &MultiViewDataset, k: Option<usize>) -> Result<usize> {
    match (k, ds.n_classes()) {
        (Some(k), _) => Ok(k),
        (None, Some(c)) => Ok(c),
        (None, None) => Err(Error::InvalidInput(
            "--k is required when the dataset has no labels".into(),
        )),
    }
}

pub fn hyperparams_from(flags: &ModelFlags, ds: &MultiViewDataset) -> Result<Hyperparams> {
    let hp = Hyperparams {
        lambda1: flags.lambda1,
        lambda2: flags.lambda2,
        lambda3: flags.lambda3,
        k: resolve_k(ds, flags.k)?,
        epsilon: flags.epsilon,
        max_iter: flags.max_iter,
        seed: flags.seed,
        variant: flags.variant,
    };
    hp.validate()?;
    Ok(hp)
}

/// Fits once, then clusters the embedding `repeats` times with k-means
/// seeds `seed, seed + 1, ...`. The solver itself is deterministic, so
/// only the clustering step varies between repeats. The reported labels
/// come from the first repeat.
pub fn run_fit(
    ds: &MultiViewDataset,
    hp: &Hyperparams,
    normalization: NormalizationMode,
    repeats: usize,
    opts: &FitOptions,
) -> Result<FitReport> {
    if repeats == 0 {
        return Err(Error::InvalidInput("--repeats must be >= 1".into()));
    }
    let ds = normalize(ds, normalization);
    let c = ds.n_classes().unwrap_or(hp.k);
    let started = Instant::now();
    let result = fit_with_options(&ds, hp, opts)?;
    let fit_seconds = started.elapsed().as_secs_f64();

    let emb = embedding(&result.state, hp.variant);
    let started = Instant::now();
    let mut labels = Vec::new();
    let mut runs = Vec::new();
    for r in 0..repeats {
        let cfg = KMeansConfig {
            c,
            seed: hp.seed.wrapping_add(r as u64),
            ..KMeansConfig::default()
        };
        let res = kmeans(&emb, &cfg)?;
        if let Some(truth) = &ds.labels {
            runs.push(evaluate(&res.labels, truth)?);
        }
        if r == 0 {
            labels = res.labels;
        }
    }
    let kmeans_seconds = started.elapsed().as_secs_f64();

    let agg = |f: fn(&Scores) -> f64| -> Option<MeanStd> {
        (!runs.is_empty()).then(|| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>()))
    };
    let metrics = MetricsReport {
        dataset: ds.name.clone(),
        variant: hp.variant,
        acc: agg(|s| s.acc),
        nmi: agg(|s| s.nmi),
        purity: agg(|s| s.purity),
        ari: agg(|s| s.ari),
        fscore: agg(|s| s.fscore),
        iterations: result.iterations(),
        converged: result.converged,
        fit_seconds,
        kmeans_seconds,
        repeats,
        normalize: normalization,
        hyperparams: hp.clone(),
    };
    Ok(FitReport {
        labels,
        embedding: emb,
        trace: result.trace,
        runs,
        metrics,
    })
}

/// Writes `labels.csv`, `embedding.csv`, `trace.csv` and `metrics.json`.
pub fn write_fit_outputs(report: &FitReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_labels(&dir.join("labels.csv"), &report.labels)?;
    write_matrix_csv(&dir.join("embedding.csv"), &report.embedding)?;
    write_trace_csv(&dir.join("trace.csv"), &report.trace)?;
    let mut json = serde_json::to_string_pretty(&report.metrics).expect("metrics serialize");
    json.push('\n');
    write_text(&dir.join("metrics.json"), &json)
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut out = String::from("iter,objective,delta_y,elapsed_ms\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iter,
            fmt17(r.objective),
            fmt17(r.delta_y),
            fmt17(r.elapsed_ms)
        ));
    }
    write_text(path, &out)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "iter,objective,delta_y,elapsed_ms")) => {}
        _ => return Err(parse_err(1, 1, "missing trace header".into())),
    }
    let mut out = Vec::new();
    for (li, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(parse_err(li + 1, 1, format!("expected 4 fields, found {}", cells.len())));
        }
        let iter = cells[0]
            .parse()
            .map_err(|_| parse_err(li + 1, 1, format!("bad iteration {:?}", cells[0])))?;
        let mut vals = [0.0; 3];
        for (c, v) in vals.iter_mut().enumerate() {
            *v = cells[c + 1]
                .parse()
                .map_err(|_| parse_err(li + 1, c + 2, format!("bad number {:?}", cells[c + 1])))?;
        }
        out.push(TraceRecord {
            iter,
            objective: vals[0],
            delta_y: vals[1],
            elapsed_ms: vals[2],
        });
    }
    Ok(out)
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn fit_options(flags: &ModelFlags) -> FitOptions {
    FitOptions {
        compute_objective: !flags.no_objective,
        ..FitOptions::default()
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let hp = hyperparams_from(&a.model, &ds)?;
    let report = run_fit(&ds, &hp, a.model.normalize, a.model.repeats, &fit_options(&a.model))?;
    write_fit_outputs(&report, &a.out)?;
    print_summary(&report.metrics);
    Ok(())
}

fn print_summary(m: &MetricsReport) {
    let show = |s: &Option<MeanStd>| s.map_or("n/a".to_string(), |s| format!("{:.4}({:.4})", s.mean, s.std));
    println!(
        "{} [{}] iters={} fit={:.3}s ACC={} NMI={} PUR={} ARI={} F={}",
        m.dataset,
        m.variant,
        m.iterations,
        m.fit_seconds,
        show(&m.acc),
        show(&m.nmi),
        show(&m.purity),
        show(&m.ari),
        show(&m.fscore)
    );
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub scores: Scores,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let truth = ds
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no labels", a.data.display())))?;
    let pred = read_labels(&a.pred)?;
    if pred.len() != truth.len() {
        return Err(Error::InconsistentSamples {
            path: a.pred.clone(),
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let report = EvalReport {
        dataset: ds.name.clone(),
        scores: evaluate(&pred, truth)?,
    };
    let json = serde_json::to_string_pretty(&report).expect("scores serialize") + "\n";
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            write_text(&dir.join("metrics.json"), &json)?;
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn mean_of(s: &Option<MeanStd>) -> f64 {
    s.map_or(f64::NAN, |s| s.mean)
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let base = hyperparams_from(&a.model, &ds)?;
    if a.grid && ds.labels.is_none() {
        return Err(Error::InvalidInput("--grid needs ground-truth labels".into()));
    }
    create_dir(&a.out)?;
    let opts = fit_options(&a.model);
    let mut table = String::from("variant,lambda1,lambda2,acc,nmi,purity,ari,fscore,iterations,fit_seconds\n");
    for variant in Variant::ALL {
        let mut hp = Hyperparams { variant, ..base.clone() };
        if a.grid {
            let mut best: Option<(f64, f64, f64)> = None;
            for &l1 in &LAMBDA_GRID {
                for &l2 in &LAMBDA_GRID {
                    let trial = Hyperparams { lambda1: l1, lambda2: l2, ..hp.clone() };
                    let r = run_fit(&ds, &trial, a.model.normalize, a.model.repeats, &opts)?;
                    let acc = mean_of(&r.metrics.acc);
                    if best.is_none_or(|b| acc > b.0) {
                        best = Some((acc, l1, l2));
                    }
                }
            }
            let (_, l1, l2) = best.expect("non-empty grid");
            hp.lambda1 = l1;
            hp.lambda2 = l2;
        }
        let report = run_fit(&ds, &hp, a.model.normalize, a.model.repeats, &opts)?;
        write_fit_outputs(&report, &a.out.join(variant.name()))?;
        print_summary(&report.metrics);
        let m = &report.metrics;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            variant,
            hp.lambda1,
            hp.lambda2,
            mean_of(&m.acc),
            mean_of(&m.nmi),
            mean_of(&m.purity),
            mean_of(&m.ari),
            mean_of(&m.fscore),
            m.iterations,
            m.fit_seconds
        ));
    }
    write_text(&a.out.join("ablation.csv"), &table)
}

/// One row of `timing.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    /// Median over repeats.
    pub fit_seconds: f64,
    /// Largest heap high-water mark over repeats, in MiB; NaN when the
    /// tracking allocator is not installed.
    pub peak_mb: f64,
    pub iterations: usize,
    pub kmeans_seconds: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn run_bench(a: &BenchArgs) -> Result<Vec<TimingRow>> {
    if a.sizes.is_empty() {
        return Err(Error::InvalidInput("--sizes must list at least one sample count".into()));
    }
    if a.model.repeats == 0 {
        return Err(Error::InvalidInput("--repeats must be >= 1".into()));
    }
    let opts = FitOptions {
        compute_objective: !a.model.no_objective,
        early_stop: a.early_stop,
        ..FitOptions::default()
    };
    let mut rows = Vec::with_capacity(a.sizes.len());
    for &n in &a.sizes {
        let spec = SynthSpec {
            n,
            c: a.c,
            m: a.m,
            dims: a.dims.clone(),
            noise_sigma: a.noise_sigma,
            corrupt_frac: a.corrupt_frac,
            seed: a.data_seed,
        };
        let ds = normalize(&generate_synthetic(&spec)?.dataset, a.model.normalize);
        let hp = hyperparams_from(&a.model, &ds)?;
        let mut fit_times = Vec::with_capacity(a.model.repeats);
        let mut km_times = Vec::with_capacity(a.model.repeats);
        let mut peak = 0usize;
        let mut iterations = 0;
        for r in 0..a.model.repeats {
            memtrack::reset_peak();
            let started = Instant::now();
            let result = fit_with_options(&ds, &hp, &opts)?;
            fit_times.push(started.elapsed().as_secs_f64());
            peak = peak.max(memtrack::peak_bytes());
            iterations = result.iterations();

            let emb = embedding(&result.state, hp.variant);
            let cfg = KMeansConfig {
                c: hp.k,
                seed: hp.seed.wrapping_add(r as u64),
                ..KMeansConfig::default()
            };
            let started = Instant::now();
            kmeans(&emb, &cfg)?;
            km_times.push(started.elapsed().as_secs_f64());
        }
        let kmeans_seconds = median(&mut km_times);
        let mut fit_seconds = median(&mut fit_times);
        if a.include_kmeans {
            fit_seconds += kmeans_seconds;
        }
        let peak_mb = if memtrack::is_active() {
            peak as f64 / (1024.0 * 1024.0)
        } else {
            f64::NAN
        };
        rows.push(TimingRow {
            n,
            fit_seconds,
            peak_mb,
            iterations,
            kmeans_seconds,
        });
    }
    Ok(rows)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let rows = run_bench(a)?;
    create_dir(&a.out)?;
    let mut out = String::from("n,fit_seconds,peak_mb,iterations,kmeans_seconds\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            fmt17(r.fit_seconds),
            fmt17(r.peak_mb),
            r.iterations,
            fmt17(r.kmeans_seconds)
        ));
        println!(
            "n={} fit={:.4}s peak={:.2}MiB iters={} kmeans={:.4}s",
            r.n, r.fit_seconds, r.peak_mb, r.iterations, r.kmeans_seconds
        );
    }
    write_text(&a.out.join("timing.csv"), &out)
}
