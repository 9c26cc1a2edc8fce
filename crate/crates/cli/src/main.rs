//! `textdeblur` command-line interface.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 detector
//! failures beyond the configured budget.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use textdeblur_core::blur::{classify_with, LaplacianKind, DEFAULT_THRESHOLD};
use textdeblur_core::deconv::{blind_deconvolve_with, init_psf, parse_dims, DeconvOptions, DEFAULT_ITERATIONS};
use textdeblur_core::eval::MatchMode;
use textdeblur_core::io::{load_grayscale, save_png};
use textdeblur_core::pipeline::{
    self, parse_grid, render_ranking, report_ranking, PipelineError, RankingEntry, RunConfig,
    RunReport, SweepTable,
};
use textdeblur_core::synth::generate_synthetic_corpus;

#[derive(Parser)]
#[command(name = "textdeblur", version, about = "Blur triage, blind deconvolution and text-detection scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print `filename,measure,label` for each image.
    Classify {
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "4")]
        laplacian: LaplacianKind,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Blind-deconvolve images; writes `<stem>.png` and `<stem>.psf.json`.
    Deblur {
        #[arg(long, value_parser = parse_dims)]
        psf: (usize, usize),
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        iters: usize,
        #[arg(long)]
        symmetric: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Score `res_<id>.txt` detections against `gt_<id>.txt` ground truth.
    Evaluate {
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        det_dir: PathBuf,
        #[arg(long, default_value = "iou50")]
        match_mode: MatchMode,
        /// Directory for `per_image.csv` and `evaluation.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify, optionally deblur, detect and score a dataset.
    Run(RunArgs),
    /// One run per PSF in a grid, ranked by h-mean.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `3` for the 3x3 square grid, or a list such as `1x1,1x3,2x2`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Write a seeded synthetic corpus with ground truth.
    Synth {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank runs by h-mean. Entries are `NAME=report.json` or `NAME=P,R,H` (percentages).
    Report {
        #[arg(required = true)]
        entries: Vec<String>,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// `mock`, `mock:DROP:JITTER:SEED`, `precomputed:DIR` or `cmd:TEMPLATE`.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    psf: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    match_mode: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    parallelism: Option<String>,
    #[arg(long)]
    symmetric: bool,
    #[arg(long)]
    laplacian: Option<String>,
    #[arg(long)]
    timeout_secs: Option<String>,
    #[arg(long)]
    cache_dir: Option<String>,
    #[arg(long)]
    failure_budget: Option<String>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, PipelineError> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
            config.apply_file_text(&text)?;
        }
        let flags = [
            ("dataset_dir", &self.dataset),
            ("detector", &self.detector),
            ("mode", &self.mode),
            ("psf", &self.psf),
            ("threshold", &self.threshold),
            ("iterations", &self.iters),
            ("match_mode", &self.match_mode),
            ("output_dir", &self.out),
            ("parallelism", &self.parallelism),
            ("laplacian", &self.laplacian),
            ("timeout_secs", &self.timeout_secs),
            ("cache_dir", &self.cache_dir),
            ("failure_budget", &self.failure_budget),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        if self.symmetric {
            config.symmetric_psf = true;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            config.set(k, v)?;
        }
        Ok(config)
    }
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

fn data_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: e.into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", render_chain(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// Joins the cause chain, dropping causes already spelled out by their parent.
fn render_chain(error: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Classify {
            threshold,
            laplacian,
            paths,
        } => classify(threshold, laplacian, &paths),
        Command::Deblur {
            psf,
            iters,
            symmetric,
            out,
            paths,
        } => deblur(psf, iters, symmetric, &out, &paths),
        Command::Evaluate {
            gt_dir,
            det_dir,
            match_mode,
            out,
        } => evaluate(&gt_dir, &det_dir, match_mode, out.as_deref()),
        Command::Run(args) => run(&args),
        Command::Sweep { run, grid } => sweep(&run, grid.as_deref()),
        Command::Synth { n, seed, out } => synth(n, seed, &out),
        Command::Report { entries, csv } => report(&entries, csv),
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn classify(threshold: f64, laplacian: LaplacianKind, paths: &[PathBuf]) -> Result<u8, Failure> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(config_err(anyhow!("threshold must be positive, got {threshold}")));
    }
    println!("filename,measure,label");
    let mut failed = false;
    for path in paths {
        let verdict = load_grayscale(path)
            .map_err(anyhow::Error::from)
            .and_then(|img| classify_with(&img, threshold, laplacian).map_err(anyhow::Error::from));
        match verdict {
            Ok(v) => println!("{},{:.7},{}", file_label(path), v.measure, v.label),
            Err(e) => {
                eprintln!("error: {}: {e:#}", path.display());
                failed = true;
            }
        }
    }
    Ok(if failed { 2 } else { 0 })
}

fn deblur(
    psf: (usize, usize),
    iters: usize,
    symmetric: bool,
    out: &Path,
    paths: &[PathBuf],
) -> Result<u8, Failure> {
    if iters == 0 {
        return Err(config_err(anyhow!("--iters must be at least 1")));
    }
    let psf0 = init_psf(psf.0, psf.1).map_err(config_err)?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(data_err)?;
    let opts = DeconvOptions {
        iterations: iters,
        symmetric,
        ..DeconvOptions::default()
    };
    for path in paths {
        let img = load_grayscale(path).map_err(data_err)?;
        let result = blind_deconvolve_with(&img, &psf0, &opts)
            .with_context(|| format!("deconvolving {}", path.display()))
            .map_err(data_err)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        save_png(&result.restored, &out.join(format!("{stem}.png"))).map_err(data_err)?;
        let sidecar = out.join(format!("{stem}.psf.json"));
        std::fs::write(&sidecar, result.psf_estimate.to_json() + "\n")
            .with_context(|| format!("writing {}", sidecar.display()))
            .map_err(data_err)?;
        println!("{} -> {}", path.display(), out.join(format!("{stem}.png")).display());
    }
    Ok(0)
}

fn evaluate(gt_dir: &Path, det_dir: &Path, mode: MatchMode, out: Option<&Path>) -> Result<u8, Failure> {
    let report = pipeline::evaluate_dirs(gt_dir, det_dir, mode)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(data_err)?;
        std::fs::write(dir.join("per_image.csv"), report.to_csv()).map_err(data_err)?;
        let json = serde_json::to_string_pretty(&report).map_err(data_err)? + "\n";
        std::fs::write(dir.join("evaluation.json"), json).map_err(data_err)?;
    }
    print_aggregate(&report.aggregate);
    Ok(0)
}

fn print_aggregate(s: &textdeblur_core::EvalScores) {
    println!(
        "precision {}%  recall {}%  hmean {}%",
        pipeline::pct(s.precision),
        pipeline::pct(s.recall),
        pipeline::pct(s.hmean)
    );
}

fn run(args: &RunArgs) -> Result<u8, Failure> {
    let config = args.to_config()?;
    let report = pipeline::run(&config)?;
    let blurry = report
        .per_image
        .iter()
        .filter(|r| r.label == textdeblur_core::BlurLabel::Blurry)
        .count();
    println!(
        "{} images ({} blurry, {} non-blurry), mode {}",
        report.per_image.len(),
        blurry,
        report.per_image.len() - blurry,
        config.mode
    );
    print_aggregate(&report.aggregate);
    Ok(budget_code(&report))
}

fn budget_code(report: &RunReport) -> u8 {
    if report.exceeds_failure_budget() {
        eprintln!(
            "error: {} detector failures exceed the budget of {}",
            report.manifest.detector_failures, report.manifest.config.failure_budget
        );
        3
    } else {
        0
    }
}

fn sweep(args: &RunArgs, grid: Option<&str>) -> Result<u8, Failure> {
    let config = args.to_config()?;
    let grid = match grid {
        Some(g) => parse_grid(g).map_err(|e| config_err(anyhow!(e)))?,
        None => config.sweep_grid.clone(),
    };
    let table = pipeline::sweep(&config, &grid)?;
    print!("{}", table.render());
    Ok(0)
}

fn synth(n: usize, seed: u64, out: &Path) -> Result<u8, Failure> {
    if n == 0 {
        return Err(config_err(anyhow!("--n must be at least 1")));
    }
    let manifest = generate_synthetic_corpus(n, seed, out).map_err(data_err)?;
    let blurred = manifest.images.iter().filter(|i| i.blur.is_some()).count();
    println!(
        "wrote {} images ({} blurred) to {}",
        manifest.images.len(),
        blurred,
        out.display()
    );
    Ok(0)
}

fn parse_entry(spec: &str) -> Result<Vec<RankingEntry>> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("expected NAME=PATH or NAME=P,R,H, got `{spec}`"))?;
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() == 3 {
        if let Ok(nums) = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>() {
            return Ok(vec![RankingEntry {
                name: name.to_string(),
                precision: nums[0] / 100.0,
                recall: nums[1] / 100.0,
                hmean: nums[2] / 100.0,
            }]);
        }
    }
    let path = Path::new(value);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(report) = serde_json::from_str::<RunReport>(&text) {
        return Ok(vec![RankingEntry::from_scores(name, &report.aggregate)]);
    }
    let table: SweepTable = serde_json::from_str(&text)
        .with_context(|| format!("{} is neither a run report nor a sweep table", path.display()))?;
    Ok(table
        .rows
        .iter()
        .map(|r| RankingEntry::from_scores(format!("{name} ({},{})", r.psf.0, r.psf.1), &r.scores))
        .collect())
}

fn report(entries: &[String], csv: bool) -> Result<u8, Failure> {
    let mut all = Vec::new();
    for spec in entries {
        all.extend(parse_entry(spec).map_err(data_err)?);
    }
    let ranked = report_ranking(all);
    if csv {
        println!("rank,method,precision,recall,hmean");
        for (i, e) in ranked.iter().enumerate() {
            println!(
                "{},{},{},{},{}",
                i + 1,
                e.name,
                pipeline::pct(e.precision),
                pipeline::pct(e.recall),
                pipeline::pct(e.hmean)
            );
        }
    } else {
        print!("{}", render_ranking(&ranked));
    }
    Ok(0)
}
