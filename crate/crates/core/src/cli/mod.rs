//! `dctrack` subcommands. The binary only parses arguments and maps
//! [`CliError`] to an exit code.

pub mod bench;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::assign::AssignError;
use crate::io::{self, Config, IoError, ModelFile, SynthSpec};
use crate::learn::{make_training_set, train, LearnError, NoiseConfig, TrainingSample};
use crate::metrics::{clear_mot, MetricsError, MotConfig, ResultsTable};
use crate::model::{SceneBounds, Sequence};
use crate::track::{FrameReport, TrackError, Tracker};

pub const THREADS_ENV: &str = "DCTRACK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dctrack", version, about = "Online divide-and-conquer multi-target tracker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a detection file with a trained model.
    Track(TrackArgs),
    /// Learn a model from ground-truth sequences.
    Train(TrainArgs),
    /// Score a result file against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Time partitioned against global assignment.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// MOT detection file.
    #[arg(long)]
    pub det: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Result file; the zone log and runtime report are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Appearance sidecar; defaults to `<det stem>_appearance.csv` when present.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Configuration applied on top of the model's.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// MOT ground-truth file; may repeat.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    #[arg(long)]
    pub out_model: PathBuf,
    /// `miss_rate,false_rate,jitter`.
    #[arg(long, value_parser = parse_noise)]
    pub noise: Option<NoiseConfig>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Base configuration; the flags above override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Result file in MOT format.
    #[arg(long)]
    pub hyp: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `key = value` scene description.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.5")]
    pub beta: Vec<f64>,
}

fn parse_noise(s: &str) -> Result<NoiseConfig, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number `{x}`"))).collect::<Result<_, _>>()?;
    match v.as_slice() {
        &[miss_rate, false_rate, jitter] => Ok(NoiseConfig { miss_rate, false_rate, jitter }),
        _ => Err("expected miss_rate,false_rate,jitter".into()),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(IoError),
    #[error(transparent)]
    Parse(IoError),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Infeasible(_) => 5,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        if e.is_parse() {
            CliError::Parse(e)
        } else {
            CliError::Io(e)
        }
    }
}

impl From<AssignError> for CliError {
    fn from(e: AssignError) -> Self {
        match e {
            AssignError::Infeasible => CliError::Infeasible(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::Assign(a) => a.into(),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Assign(a) => a.into(),
            LearnError::GroundTruthInfeasible => CliError::Infeasible(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn console(e: std::io::Error) -> CliError {
    CliError::Io(IoError::Io { path: PathBuf::from("<stdout>"), source: e })
}

/// Worker cap from `DCTRACK_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// `<dir>/<stem><suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Track(a) => cmd_track(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    }
}

/// Per-frame `frame,n_active,n_occluded,n_detections,zones,complex_zones,beta,seconds`.
pub fn format_runtime(reports: &[FrameReport]) -> String {
    let mut s = String::from("frame,n_active,n_occluded,n_detections,zones,complex_zones,beta,seconds\n");
    for r in reports {
        let zones = r.solution.partition.zones.len();
        let complex = r.complex_zones();
        let beta = if zones == 0 { 0.0 } else { complex as f64 / zones as f64 };
        let secs = (r.divide_time + r.build_time + r.solve_time).as_secs_f64();
        s.push_str(&format!("{},{},{},{},{zones},{complex},{beta:.4},{secs:.6}\n", r.frame, r.n_active, r.n_occluded, r.n_detections));
    }
    s
}

pub fn cmd_track(a: &TrackArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = ModelFile::read(&a.model)?;
    let mut config = model.config;
    if let Some(path) = &a.config {
        config.apply(&io::read_text(path)?)?;
    }
    let rows = io::read_mot(&a.det)?;
    let bounds = config.bounds.unwrap_or_else(|| io::infer_bounds(&rows));
    let mut frames = io::detections_by_frame(&rows, &bounds)?;
    let sidecar = a.sidecar.clone().or_else(|| Some(io::sidecar_path(&a.det)).filter(|p| p.exists()));
    if let Some(path) = &sidecar {
        io::attach_appearance(&mut frames, &io::read_appearance_sidecar(path, Some(config.bins))?)?;
    }
    let range = (rows.first().map_or(1, |r| r.frame), rows.last().map_or(1, |r| r.frame));
    let mut tracker = Tracker::new(model.weights, config.tracker);
    let start = Instant::now();
    let reports = tracker.run_frames(frames, Some(range))?;
    let elapsed = start.elapsed().as_secs_f64();
    io::write_mot(&a.out, &io::track_rows(&tracker.outputs))?;
    io::write_text(&sibling(&a.out, "_zones.csv"), &io::format_zone_log(&reports))?;
    io::write_text(&sibling(&a.out, "_runtime.csv"), &format_runtime(&reports))?;
    let n = reports.len().max(1) as f64;
    let mean = |f: &dyn Fn(&FrameReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let beta = mean(&|r| {
        let z = r.solution.partition.zones.len();
        if z == 0 {
            0.0
        } else {
            r.complex_zones() as f64 / z as f64
        }
    });
    writeln!(
        out,
        "frames {} fps {:.1} mean N {:.1} mean beta {:.3} mean N_o {:.1} tracks {}",
        reports.len(),
        reports.len() as f64 / elapsed.max(1e-9),
        mean(&|r| r.n_active as f64),
        beta,
        mean(&|r| r.n_occluded as f64),
        tracker.outputs.iter().map(|o| o.id).collect::<std::collections::BTreeSet<_>>().len()
    )
    .map_err(console)?;
    if let Some(path) = sidecar {
        log::info!("appearance from {}", path.display());
    }
    Ok(())
}

fn load_gt(path: &Path, bounds: Option<SceneBounds>) -> Result<Sequence, CliError> {
    let rows = io::read_mot(path)?;
    let mut seq = io::sequence_from_rows(&rows, bounds.unwrap_or_else(|| io::infer_bounds(&rows)))?;
    let sidecar = io::sidecar_path(path);
    if sidecar.exists() {
        io::attach_gt_appearance(&mut seq, &io::read_appearance_sidecar(&sidecar, None)?)?;
    }
    Ok(seq)
}

/// Training samples of every sequence, built on up to [`thread_cap`] threads.
/// Sequence `i` draws its noise from `seed + i`, so the result does not
/// depend on the thread count.
pub fn training_samples(sequences: &[Sequence], config: &Config) -> Result<Vec<TrainingSample>, CliError> {
    let cap = thread_cap().min(sequences.len()).max(1);
    let mut sets: Vec<Option<Result<Vec<TrainingSample>, LearnError>>> = (0..sequences.len()).map(|_| None).collect();
    for (chunk_idx, chunk) in sets.chunks_mut(cap).enumerate() {
        std::thread::scope(|scope| {
            for (j, slot) in chunk.iter_mut().enumerate() {
                let i = chunk_idx * cap + j;
                let seq = &sequences[i];
                scope.spawn(move || {
                    let seed = config.seed.wrapping_add(i as u64);
                    *slot = Some(make_training_set(std::slice::from_ref(seq), &config.noise, &config.tracker, seed).map(|s| s.samples));
                });
            }
        });
    }
    let mut samples = Vec::new();
    for set in sets {
        samples.extend(set.expect("every slot filled")?);
    }
    Ok(samples)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = Config::default();
    if let Some(path) = &a.config {
        config.apply(&io::read_text(path)?)?;
    }
    if let Some(noise) = a.noise {
        config.noise = noise;
    }
    if let Some(lambda) = a.lambda {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(CliError::Invalid("--lambda must be positive".into()));
        }
        config.trainer.lambda = lambda;
    }
    if let Some(passes) = a.passes {
        config.trainer.passes = passes;
    }
    config.seed = a.seed;
    let sequences = a.gt.iter().map(|p| load_gt(p, config.bounds)).collect::<Result<Vec<_>, _>>()?;
    // The model remembers the scene it was trained on.
    config.bounds = config.bounds.or_else(|| sequences.first().map(|s| s.bounds));
    let samples = training_samples(&sequences, &config)?;
    let trainer = crate::learn::TrainerConfig { track_primal: false, ..config.trainer };
    let result = train(&samples, &trainer)?;
    for p in &result.history {
        log::info!("pass {} dual {:.6} mean hinge {:.6} max hinge {:.6}", p.pass, p.dual, p.mean_hinge, p.max_hinge);
    }
    let last = result.history.last();
    writeln!(
        out,
        "samples {} passes {} dual {:.6} mean hinge {:.6}",
        samples.len(),
        result.history.len(),
        last.map_or(0.0, |p| p.dual),
        last.map_or(0.0, |p| p.mean_hinge)
    )
    .map_err(console)?;
    ModelFile { weights: result.w, config }.write(&a.out_model)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let gt_rows = io::read_mot(&a.gt)?;
    let hyp_rows = io::read_mot(&a.hyp)?;
    let gt = io::sequence_from_rows(&gt_rows, io::infer_bounds(&gt_rows))?;
    let hyp = io::sequence_from_rows(&hyp_rows, io::infer_bounds(&hyp_rows))?;
    let result = clear_mot(&gt.annotations, &hyp.annotations, &MotConfig::default())?;
    let mut table = ResultsTable::default();
    let name = a.hyp.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "hyp".into());
    table.push(name, result);
    write!(out, "{}", table.to_text()).map_err(console)?;
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = SynthSpec::read(&a.spec)?;
    let s = io::synth_sequence(&spec);
    s.write(&a.out)?;
    let dets: usize = s.detections.values().map(Vec::len).sum();
    writeln!(out, "targets {} frames {} boxes {} detections {} crossings {}", spec.n_targets, spec.n_frames, s.gt.annotations.len(), dets, s.crossings.len()).map_err(console)?;
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.sizes.iter().any(|&n| n == 0) || a.beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return Err(CliError::Invalid("sizes must be positive and beta must lie in [0, 1]".into()));
    }
    let rows = bench::bench(&a.sizes, &a.beta, &bench::BenchConfig::default())?;
    write!(out, "{}", bench::format_report(&rows)).map_err(console)?;
    Ok(())
}
