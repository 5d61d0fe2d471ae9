use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hdbci::chansel::{self, ChanselConfig};
use hdbci::datamodel::{apply_montage, build_codebook, load_dataset, write_dataset, Dataset, Fixation, Montage};
use hdbci::harness::{self, BenchmarkConfig, PreparedSubject, SummaryRow};
use hdbci::metrics::{itr, ItrUnit};
use hdbci::simgen::{synthesize_dataset, ForwardModelConfig};
use hdbci::tdca::{train_subbands, SubbandTrial, TdcaModel};
use hdbci::{Error, Result};

#[derive(Parser)]
#[command(name = "hdbci", version, about = "High-density SSVEP decoding: simulation, training, evaluation and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset from the forward model.
    Simulate(SimulateArgs),
    /// Train a model on a dataset and save it.
    Train(TrainArgs),
    /// Cross-validated benchmark sweep, or scoring with a saved model.
    Evaluate(EvaluateArgs),
    /// Dynamic-window threshold sweep as CSV.
    Dynwin(DynwinArgs),
    /// Greedy backward channel elimination as CSV.
    Chansel(ChanselArgs),
    /// Information transfer rate of (targets, accuracy, time).
    Itr(ItrArgs),
    /// Per-channel SNR at each class's flicker frequency as CSV.
    Snr(SnrArgs),
    /// Summarize a finished or partial run directory.
    Report(ReportArgs),
}

/// Benchmark configuration: a JSON file plus per-field overrides.
#[derive(Args, Clone, Default)]
struct BenchArgs {
    /// JSON benchmark configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; repeat for several subjects where supported.
    #[arg(long)]
    dataset: Vec<PathBuf>,
    /// Montage subset name; repeat to sweep.
    #[arg(long)]
    montage: Vec<String>,
    /// Comma-separated fixation points, e.g. `left,right`.
    #[arg(long, value_delimiter = ',')]
    fixations: Vec<Fixation>,
    /// Comma-separated analysis windows in seconds.
    #[arg(long, value_delimiter = ',')]
    windows: Vec<f64>,
    #[arg(long)]
    train_window: Option<f64>,
    #[arg(long)]
    cue_time: Option<f64>,
    #[arg(long)]
    latency: Option<f64>,
    #[arg(long)]
    sampling_rate: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Also run the dynamic-window sweep.
    #[arg(long)]
    dynwin: bool,
    /// Keep per-trial scores in the reports.
    #[arg(long)]
    write_scores: bool,
}

impl BenchArgs {
    fn resolve(&self) -> Result<BenchmarkConfig> {
        let mut c = match &self.config {
            Some(p) => read_json::<BenchmarkConfig>(p)?,
            None => BenchmarkConfig::default(),
        };
        match self.dataset.as_slice() {
            [] => {}
            [one] => c.dataset = Some(one.clone()),
            _ => return Err(Error::InvalidArgument("this command takes a single --dataset".into())),
        }
        if !self.montage.is_empty() {
            c.montages = self.montage.clone();
        }
        if !self.fixations.is_empty() {
            c.fixation_sets = vec![self.fixations.clone()];
        }
        if !self.windows.is_empty() {
            c.windows = self.windows.clone();
        }
        c.train_window = self.train_window.or(c.train_window);
        c.cue_time = self.cue_time.unwrap_or(c.cue_time);
        c.latency = self.latency.unwrap_or(c.latency);
        c.sampling_rate = self.sampling_rate.unwrap_or(c.sampling_rate);
        c.folds = self.folds.or(c.folds);
        if let Some(d) = &self.output_dir {
            c.output_dir = d.clone();
        }
        if let Some(r) = &self.run_name {
            c.run_name = r.clone();
        }
        c.seed = self.seed.unwrap_or(c.seed);
        c.threads = self.threads.or(c.threads);
        c.dynwin_enabled |= self.dynwin;
        c.write_scores |= self.write_scores;
        c.validate()?;
        Ok(c)
    }

    /// Dataset of `config` restricted to its first montage and fixation set.
    fn load_view(&self, config: &BenchmarkConfig) -> Result<Dataset> {
        let path = config
            .dataset
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("no dataset given (--dataset or config)".into()))?;
        view(&load_dataset(path)?, config)
    }
}

fn view(dataset: &Dataset, config: &BenchmarkConfig) -> Result<Dataset> {
    let ds = match config.montages.as_slice() {
        [] => dataset.clone(),
        [m] => apply_montage(dataset, m)?,
        _ => return Err(Error::InvalidArgument("this command takes a single montage".into())),
    };
    match config.fixation_sets.as_slice() {
        [] => Ok(ds),
        [f] => ds.select_fixations(f),
        _ => Err(Error::InvalidArgument("this command takes a single fixation set".into())),
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Noise seed; required so every dataset is reproducible.
    #[arg(long)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON forward-model configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    /// White-noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    pink_noise: Option<f64>,
    /// Fundamental amplitude; harmonics fall off as 1/h.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Give every fixation the same spatial gain and phase.
    #[arg(long)]
    identical_profiles: bool,
    #[arg(long)]
    subject_id: Option<String>,
    /// Restrict the montage to a named subset.
    #[arg(long)]
    montage: Option<String>,
    #[arg(long, value_delimiter = ',')]
    fixations: Vec<Fixation>,
    #[arg(long, default_value_t = 5)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    #[arg(long, default_value_t = 8.0)]
    base_frequency: f64,
    #[arg(long, default_value_t = 0.2)]
    frequency_step: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training window in seconds.
    #[arg(long, default_value_t = 0.5)]
    window: f64,
    /// Block left out of training; repeatable.
    #[arg(long)]
    exclude_block: Vec<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Score with this saved model instead of cross-validating.
    #[arg(long)]
    model: Option<PathBuf>,
    /// With `--model`, skip trials from the model's training blocks.
    #[arg(long)]
    held_out_only: bool,
}

#[derive(Args)]
struct DynwinArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Comma-separated decision windows in seconds.
    #[arg(long, value_delimiter = ',')]
    dyn_windows: Vec<f64>,
    /// Number of thresholds swept.
    #[arg(long)]
    thresholds: Option<usize>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChanselArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Analysis window in seconds.
    #[arg(long, default_value_t = 0.2)]
    window: f64,
    /// Comma-separated starting channels; defaults to the whole montage.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<String>,
    /// Search every subset of this size instead (at most 10 channels) and print JSON.
    #[arg(long)]
    exhaustive: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Bpm,
    Bps,
}

#[derive(Args)]
struct ItrArgs {
    #[arg(long)]
    targets: usize,
    /// Accuracy in [0, 1].
    #[arg(long)]
    accuracy: f64,
    /// Seconds per selection.
    #[arg(long)]
    time: f64,
    #[arg(long, value_enum, default_value_t = Unit::Bpm)]
    unit: Unit,
}

#[derive(Args)]
struct SnrArgs {
    #[command(flatten)]
    bench: BenchArgs,
    /// Spectrum window in seconds.
    #[arg(long, default_value_t = 0.5)]
    window: f64,
    /// Neighbouring bins on each side.
    #[arg(long, default_value_t = 5)]
    neighbors: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory written by `evaluate`.
    run_dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(File::create(p)?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<ForwardModelConfig>(p)?,
        None => ForwardModelConfig::default(),
    };
    cfg.seed = a.seed;
    cfg.white_noise = a.noise.unwrap_or(cfg.white_noise);
    cfg.pink_noise = a.pink_noise.unwrap_or(cfg.pink_noise);
    cfg.fundamental_amplitude = a.amplitude.unwrap_or(cfg.fundamental_amplitude);
    cfg.identical_profiles |= a.identical_profiles;
    if let Some(s) = &a.subject_id {
        cfg.subject_id = s.clone();
    }
    let mut montage = Montage::parieto_occipital();
    if let Some(name) = &a.montage {
        montage = montage.restrict(&montage.subset_indices(name)?)?;
    }
    let fixations = if a.fixations.is_empty() { Fixation::ALL.to_vec() } else { a.fixations.clone() };
    let base = hdbci::datamodel::StimulusCodebook::default();
    let codebook = build_codebook(
        a.rows,
        a.cols,
        a.base_frequency,
        a.frequency_step,
        base.base_phase,
        base.phase_step,
        &fixations,
    )?;
    let ds = synthesize_dataset(&cfg, &montage, &codebook, a.blocks)?;
    write_dataset(&ds, &a.out)?;
    log::info!("wrote {} trials to {}", ds.n_trials(), a.out.display());
    print_json(&json!({
        "dataset": a.out,
        "subject_id": ds.subject_id,
        "n_channels": ds.n_channels(),
        "n_targets": codebook.n_targets(),
        "n_blocks": ds.blocks.len(),
        "seed": a.seed,
    }))
}

fn train(a: TrainArgs) -> Result<()> {
    let config = a.bench.resolve()?;
    let ds = a.bench.load_view(&config)?;
    let subject = harness::prepare_subject(&ds, &config, a.window)?;
    let n = config.window_samples(a.window);
    let trials: Vec<&SubbandTrial> = subject.trials.iter().filter(|t| !a.exclude_block.contains(&t.block)).collect();
    let model = train_subbands(&trials, &subject.classes, &config.tdca, subject.sampling_rate, n)?;
    model.save(&a.out)?;
    print_json(&json!({
        "model": a.out,
        "subject_id": subject.subject_id,
        "montage": config.montages.first(),
        "n_channels": model.n_channels,
        "n_classes": model.n_classes(),
        "window_samples": model.window,
        "sampling_rate": model.sampling_rate,
        "training_blocks": model.training_blocks,
        "tdca": model.config,
    }))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut config = a.bench.resolve()?;
    let Some(model_path) = &a.model else {
        let out = harness::run_benchmark(&config)?;
        let jobs: Vec<_> = out
            .reports
            .iter()
            .map(|r| {
                let best = r.windows.iter().map(|w| w.itr_actual_bpm).fold(f64::NEG_INFINITY, f64::max);
                json!({
                    "montage": r.montage,
                    "fixations": r.fixations,
                    "n_targets": r.n_targets,
                    "accuracy": r.windows.iter().map(|w| (w.window, w.accuracy)).collect::<Vec<_>>(),
                    "best_itr_bpm": best,
                })
            })
            .collect();
        return print_json(&json!({ "run_dir": out.run_dir, "jobs": jobs, "skipped_jobs": out.skipped_jobs }));
    };
    let model = TdcaModel::load(model_path)?;
    config.tdca = model.config.clone();
    config.sampling_rate = model.sampling_rate;
    let longest = config.windows.iter().copied().fold(0.0, f64::max);
    if config.window_samples(longest) > model.window {
        return Err(Error::InvalidArgument(format!(
            "window {longest} s exceeds the model's {} training samples",
            model.window
        )));
    }
    let ds = a.bench.load_view(&config)?;
    if ds.n_channels() != model.n_channels {
        return Err(Error::InvalidArgument(format!(
            "dataset view has {} channels, model expects {}",
            ds.n_channels(),
            model.n_channels
        )));
    }
    let subject = harness::prepare_subject(&ds, &config, longest)?;
    let rows = score_with_model(&model, &subject, &config, a.held_out_only)?;
    harness::write_csv(&rows, io::stdout().lock())
}

fn score_with_model(model: &TdcaModel, subject: &PreparedSubject, config: &BenchmarkConfig, held_out_only: bool) -> Result<Vec<SummaryRow>> {
    let trials: Vec<&SubbandTrial> = subject
        .trials
        .iter()
        .filter(|t| !(held_out_only && model.training_blocks.contains(&t.block)))
        .collect();
    if trials.is_empty() {
        return Err(Error::InvalidArgument("no trials left to score".into()));
    }
    let montage = config.montages.first().cloned().unwrap_or_default();
    let fixations = subject.codebook.fixation_points.iter().map(|f| f.name()).collect::<Vec<_>>().join("-");
    config
        .windows
        .iter()
        .map(|&w| {
            let n = config.window_samples(w);
            let mut correct = 0;
            for t in &trials {
                let truth = model
                    .class_index(&t.label)
                    .ok_or_else(|| Error::InvalidArgument(format!("class {} unknown to the model", t.label.numeric_label)))?;
                if model.score(t, n)?.best == truth {
                    correct += 1;
                }
            }
            let p = correct as f64 / trials.len() as f64;
            Ok(SummaryRow {
                subject: subject.subject_id.clone(),
                montage: montage.clone(),
                fixations: fixations.clone(),
                n_targets: model.n_classes(),
                window: w,
                accuracy: p,
                itr_actual_bpm: itr(model.n_classes(), p, w + config.cue_time, ItrUnit::BitsPerMinute)?.value,
                itr_theoretical_bps: itr(model.n_classes(), p, w, ItrUnit::BitsPerSecond)?.value,
            })
        })
        .collect()
}

fn dynwin(a: DynwinArgs) -> Result<()> {
    let mut config = a.bench.resolve()?;
    config.dynwin_enabled = true;
    if !a.dyn_windows.is_empty() {
        config.dynwin.windows = a.dyn_windows.clone();
    }
    config.dynwin.n_thresholds = a.thresholds.unwrap_or(config.dynwin.n_thresholds);
    config.validate()?;
    let ds = a.bench.load_view(&config)?;
    let longest = config.dynwin.windows.iter().copied().fold(0.0, f64::max);
    let subject = harness::prepare_subject(&ds, &config, longest)?;
    let rows = harness::crossvalidate_dynwin(&subject, &config)?;
    harness::write_csv(&rows, output(a.out.as_deref())?)
}

fn chansel_cmd(a: ChanselArgs) -> Result<()> {
    let single = BenchArgs { dataset: Vec::new(), ..a.bench.clone() };
    let mut config = single.resolve()?;
    let paths = if a.bench.dataset.is_empty() { config.dataset.iter().cloned().collect() } else { a.bench.dataset.clone() };
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no dataset given (--dataset or config)".into()));
    }
    config.windows = vec![a.window];
    let mut names: Vec<String> = Vec::new();
    let subjects = paths
        .iter()
        .map(|p| {
            let ds = view(&load_dataset(p)?, &config)?;
            let these: Vec<String> = ds.montage.names().iter().map(|s| s.to_string()).collect();
            if names.is_empty() {
                names = these;
            } else if names != these {
                return Err(Error::InvalidArgument(format!("{} has a different channel list", p.display())));
            }
            harness::prepare_subject(&ds, &config, a.window)
        })
        .collect::<Result<Vec<_>>>()?;
    let initial: Vec<usize> = if a.channels.is_empty() {
        (0..names.len()).collect()
    } else {
        a.channels
            .iter()
            .map(|c| {
                names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::InvalidArgument(format!("channel '{c}' not in the montage")))
            })
            .collect::<Result<_>>()?
    };
    let cs = ChanselConfig {
        window: a.window,
        folds: config.folds,
        tdca: config.tdca.clone(),
    };
    let named = |s: &[usize]| s.iter().map(|&i| names[i].clone()).collect::<Vec<_>>();
    if let Some(k) = a.exhaustive {
        let (best, acc, all) = chansel::exhaustive_best_subset(&subjects, &initial, k, &cs)?;
        let subsets: Vec<_> = all.iter().map(|(s, a)| json!({ "channels": named(s), "accuracy": a })).collect();
        let value = json!({ "k": k, "best": named(&best), "accuracy": acc, "subsets": subsets });
        let mut w = output(a.out.as_deref())?;
        writeln!(w, "{}", serde_json::to_string_pretty(&value)?)?;
        return Ok(());
    }
    let trace = chansel::greedy_backward_eliminate(&subjects, &initial, &cs)?;
    harness::write_csv(&chansel::trace_rows(&trace, &names), output(a.out.as_deref())?)
}

fn itr_cmd(a: ItrArgs) -> Result<()> {
    let unit = match a.unit {
        Unit::Bpm => ItrUnit::BitsPerMinute,
        Unit::Bps => ItrUnit::BitsPerSecond,
    };
    let r = itr(a.targets, a.accuracy, a.time, unit)?;
    if r.below_chance {
        log::warn!("accuracy {} is below chance for {} targets", a.accuracy, a.targets);
    }
    print_json(&json!({
        "targets": a.targets,
        "accuracy": a.accuracy,
        "time": a.time,
        "unit": match a.unit { Unit::Bpm => "bpm", Unit::Bps => "bps" },
        "itr": r.value,
        "below_chance": r.below_chance,
    }))
}

fn snr_cmd(a: SnrArgs) -> Result<()> {
    let config = a.bench.resolve()?;
    let ds = a.bench.load_view(&config)?;
    let subject = harness::prepare_subject(&ds, &config, a.window)?;
    let rows = harness::snr_table(&subject, config.window_samples(a.window), a.neighbors)?;
    harness::write_csv(&rows, output(a.out.as_deref())?)
}

fn report(a: ReportArgs) -> Result<()> {
    let rows = harness::summarize_run(&a.run_dir)?;
    harness::write_csv(&rows, output(a.out.as_deref())?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Dynwin(a) => dynwin(a),
        Command::Chansel(a) => chansel_cmd(a),
        Command::Itr(a) => itr_cmd(a),
        Command::Snr(a) => snr_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
