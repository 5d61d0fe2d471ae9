//! Block-wise cross-validation, subtask accuracy, dynamic-window sweeps and benchmark runs.

mod report;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{apply_montage, Dataset, Fixation, StimulusCodebook};
use crate::dynwin::{self, DynWinConfig};
use crate::error::{invalid, Error, Result};
use crate::metrics::{itr, ItrUnit};
use crate::sigproc::{decimate, decimation_factor, extract_epoch};
use crate::tdca::{classes_from_codebook, prepare_trials, train_subbands, ClassInfo, ScoreVector, SubbandTrial, TdcaConfig, TdcaModel};
pub use report::{read_metrics, run_benchmark, summarize_run, write_csv, BenchmarkOutput, MetricRecord, SummaryRow};

fn default_windows() -> Vec<f64> {
    vec![0.02, 0.04, 0.06, 0.08, 0.1, 0.2, 0.3, 0.4, 0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub dataset: Option<PathBuf>,
    /// Montage subsets to sweep.
    pub montages: Vec<String>,
    /// Fixation combinations to sweep; empty means every fixation in the dataset.
    pub fixation_sets: Vec<Vec<Fixation>>,
    /// Analysis windows in seconds.
    pub windows: Vec<f64>,
    /// Train a single model at this window and zero-pad shorter test windows.
    /// `None` trains one model per window.
    pub train_window: Option<f64>,
    pub cue_time: f64,
    pub latency: f64,
    pub sampling_rate: f64,
    pub antialias: bool,
    pub tdca: TdcaConfig,
    pub dynwin_enabled: bool,
    pub dynwin: DynWinConfig,
    /// Number of cross-validation folds; `None` holds out one block at a time.
    pub folds: Option<usize>,
    pub output_dir: PathBuf,
    pub run_name: String,
    pub seed: u64,
    pub write_scores: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            dataset: None,
            montages: vec!["256-66".into()],
            fixation_sets: Vec::new(),
            windows: default_windows(),
            train_window: None,
            cue_time: 0.5,
            latency: 0.14,
            sampling_rate: 250.0,
            antialias: true,
            tdca: TdcaConfig::default(),
            dynwin_enabled: false,
            dynwin: DynWinConfig::default(),
            folds: None,
            output_dir: PathBuf::from("reports"),
            run_name: "run".into(),
            seed: 0,
            write_scores: false,
            threads: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() || self.windows.iter().any(|w| !(*w > 0.0)) {
            return invalid("window lengths must be positive");
        }
        if self.train_window.is_some_and(|t| self.windows.iter().any(|w| *w > t + 1e-12)) {
            return invalid("train_window must cover every analysis window");
        }
        if !(self.cue_time >= 0.0) || !(self.latency >= 0.0) || !(self.sampling_rate > 0.0) {
            return invalid("cue time, latency and sampling rate must be non-negative");
        }
        if self.folds.is_some_and(|k| k < 2) {
            return invalid("folds must be >= 2");
        }
        self.tdca.validate()?;
        if self.dynwin_enabled {
            self.dynwin.validate()?;
        }
        Ok(())
    }

    pub fn window_samples(&self, seconds: f64) -> usize {
        (seconds * self.sampling_rate).round() as usize
    }

    /// Longest stretch of data any stage reads, in seconds.
    pub fn max_duration(&self) -> f64 {
        let mut d = self.windows.iter().copied().fold(0.0, f64::max);
        if let Some(t) = self.train_window {
            d = d.max(t);
        }
        if self.dynwin_enabled {
            d = d.max(self.dynwin.windows.iter().copied().fold(0.0, f64::max));
        }
        d
    }
}

/// Trials of one subject cut at the latency, decimated and split into sub-bands.
#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub subject_id: String,
    pub codebook: StimulusCodebook,
    pub classes: Vec<ClassInfo>,
    pub sampling_rate: f64,
    pub trials: Vec<SubbandTrial>,
}

impl PreparedSubject {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn blocks(&self) -> Vec<usize> {
        self.trials.iter().map(|t| t.block).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn select_channels(&self, rows: &[usize]) -> PreparedSubject {
        PreparedSubject {
            trials: self.trials.iter().map(|t| t.select_channels(rows)).collect(),
            ..self.clone()
        }
    }
}

/// Extracts `duration + delay tail` after the latency, decimates and decomposes.
pub fn prepare_subject(dataset: &Dataset, config: &BenchmarkConfig, duration: f64) -> Result<PreparedSubject> {
    let factor = decimation_factor(dataset.raw_sampling_rate, config.sampling_rate)?;
    let bank = config.tdca.filter_bank.design(config.sampling_rate)?;
    let tail = config.tdca.delay_order * factor;
    let epochs = dataset
        .trials()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|t| {
            let e = extract_epoch(&t.epoch, t.trigger, config.latency, duration, tail)?;
            decimate(&e, factor, config.antialias)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSubject {
        subject_id: dataset.subject_id.clone(),
        codebook: dataset.codebook.clone(),
        classes: classes_from_codebook(&dataset.codebook),
        sampling_rate: config.sampling_rate,
        trials: prepare_trials(&epochs, &bank),
    })
}

/// Block groups held out together. Leave-one-block-out when `folds` is `None`.
pub fn fold_groups(blocks: &[usize], folds: Option<usize>) -> Result<Vec<Vec<usize>>> {
    if blocks.len() < 2 {
        return invalid(format!("cross-validation needs >= 2 blocks, found {}", blocks.len()));
    }
    Ok(match folds {
        None => blocks.iter().map(|&b| vec![b]).collect(),
        Some(k) => {
            let k = k.min(blocks.len());
            (0..k)
                .map(|f| blocks.iter().enumerate().filter(|(i, _)| i % k == f).map(|(_, &b)| b).collect())
                .collect()
        }
    })
}

/// Score of one held-out trial at one window.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutScore {
    /// Index into the prepared trial list.
    pub trial: usize,
    pub true_class: usize,
    pub scores: ScoreVector,
}

fn train_excluding(subject: &PreparedSubject, tdca: &TdcaConfig, held_out: &[usize], window: usize) -> Result<TdcaModel> {
    let train: Vec<&SubbandTrial> = subject.trials.iter().filter(|t| !held_out.contains(&t.block)).collect();
    let model = train_subbands(&train, &subject.classes, tdca, subject.sampling_rate, window)?;
    if model.training_blocks.iter().any(|b| held_out.contains(b)) {
        return Err(Error::NumericalFailure("held-out block leaked into training".into()));
    }
    Ok(model)
}

fn true_class(subject: &PreparedSubject, t: &SubbandTrial) -> Result<usize> {
    subject
        .classes
        .iter()
        .position(|c| c.label == t.label)
        .ok_or_else(|| Error::InvalidManifest(format!("trial label {} not in codebook", t.label.numeric_label)))
}

/// Cross-validated scores, `[window][held-out trial]` with trials in prepared order.
/// `train_window` selects a single model per fold; otherwise each window trains its own.
pub fn crossvalidated_scores(
    subject: &PreparedSubject,
    tdca: &TdcaConfig,
    windows: &[usize],
    train_window: Option<usize>,
    folds: Option<usize>,
) -> Result<Vec<Vec<HeldOutScore>>> {
    let groups = fold_groups(&subject.blocks(), folds)?;
    let per_fold: Vec<Vec<Vec<HeldOutScore>>> = groups
        .par_iter()
        .map(|held| {
            let test: Vec<usize> = (0..subject.trials.len())
                .filter(|&i| held.contains(&subject.trials[i].block))
                .collect();
            let shared = match train_window {
                Some(n) => Some(train_excluding(subject, tdca, held, n)?),
                None => None,
            };
            windows
                .iter()
                .map(|&n| {
                    let own;
                    let model = match &shared {
                        Some(m) => m,
                        None => {
                            own = train_excluding(subject, tdca, held, n)?;
                            &own
                        }
                    };
                    test.iter()
                        .map(|&i| {
                            let t = &subject.trials[i];
                            Ok(HeldOutScore {
                                trial: i,
                                true_class: true_class(subject, t)?,
                                scores: model.score(t, n)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Vec<HeldOutScore>> = vec![Vec::new(); windows.len()];
    for fold in per_fold {
        for (w, scores) in fold.into_iter().enumerate() {
            out[w].extend(scores);
        }
    }
    for w in &mut out {
        w.sort_by_key(|s| s.trial);
    }
    Ok(out)
}

/// Which classes compete in the argmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    /// Classes sharing the trial's flicker (fixation decoding).
    FixationWithinFlicker,
    /// Classes sharing the trial's fixation (flicker decoding).
    FlickerWithinFixation,
    /// An explicit set of numeric labels; only trials of these classes are scored.
    Classes(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub key: String,
    pub n_trials: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskResult {
    /// Mean of the group accuracies.
    pub accuracy: f64,
    pub n_trials: usize,
    pub groups: Vec<GroupAccuracy>,
}

/// Accuracy with the argmax restricted per trial. Fixation decoding is grouped by flicker;
/// the other restrictions form a single group.
pub fn restricted_accuracy(classes: &[ClassInfo], scored: &[(usize, &ScoreVector)], restriction: &Restriction) -> Result<SubtaskResult> {
    if let Restriction::Classes(labels) = restriction {
        if labels.is_empty() {
            return invalid("restriction needs at least one class");
        }
        if let Some(l) = labels.iter().find(|l| !classes.iter().any(|c| c.label.numeric_label == **l)) {
            return invalid(format!("restriction references class {l} absent from the model"));
        }
    }
    let mut groups: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
    for &(truth, sv) in scored {
        let t = classes[truth].label;
        let (key, candidates): (String, Vec<usize>) = match restriction {
            Restriction::FixationWithinFlicker => (
                format!("flicker {}", t.flicker_index),
                (0..classes.len()).filter(|&c| classes[c].label.flicker_index == t.flicker_index).collect(),
            ),
            Restriction::FlickerWithinFixation => (
                "all".into(),
                (0..classes.len()).filter(|&c| classes[c].label.fixation == t.fixation).collect(),
            ),
            Restriction::Classes(labels) => {
                if !labels.contains(&t.numeric_label) {
                    continue;
                }
                (
                    "all".into(),
                    (0..classes.len()).filter(|&c| labels.contains(&classes[c].label.numeric_label)).collect(),
                )
            }
        };
        let e = groups.entry(key).or_default();
        e.0 += 1;
        if sv.argmax_over(&candidates) == Some(truth) {
            e.1 += 1;
        }
    }
    let mut groups: Vec<GroupAccuracy> = groups
        .into_iter()
        .map(|(key, (n, ok))| GroupAccuracy {
            key,
            n_trials: n,
            accuracy: ok as f64 / n as f64,
        })
        .collect();
    groups.sort_by_key(|g| g.key.split(' ').nth(1).and_then(|v| v.parse::<usize>().ok()).unwrap_or(0));
    let n_trials = groups.iter().map(|g| g.n_trials).sum();
    let accuracy = if groups.is_empty() {
        0.0
    } else {
        groups.iter().map(|g| g.accuracy).sum::<f64>() / groups.len() as f64
    };
    Ok(SubtaskResult {
        accuracy,
        n_trials,
        groups,
    })
}

/// Scores `trials` with a full-task model and evaluates a restricted argmax.
pub fn subtask_accuracy(model: &TdcaModel, trials: &[SubbandTrial], n_samples: usize, restriction: &Restriction) -> Result<SubtaskResult> {
    let scored = trials
        .par_iter()
        .map(|t| {
            let truth = model
                .class_index(&t.label)
                .ok_or_else(|| Error::InvalidArgument(format!("label {} unknown to model", t.label.numeric_label)))?;
            Ok((truth, model.score(t, n_samples)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(usize, &ScoreVector)> = scored.iter().map(|(t, s)| (*t, s)).collect();
    restricted_accuracy(&model.classes, &refs, restriction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub block: usize,
    pub numeric_label: usize,
    pub predicted_label: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: f64,
    pub n_trials: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Bits/min with the cue time added to the window.
    pub itr_actual_bpm: f64,
    /// Bits/s over the window alone.
    pub itr_theoretical_bps: f64,
    pub below_chance: bool,
    /// `confusion[true][predicted]` in class order.
    pub confusion: Vec<Vec<usize>>,
    pub fixation_subtask: Option<SubtaskResult>,
    pub flicker_subtask: Option<SubtaskResult>,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub subject_id: String,
    pub montage: String,
    pub fixations: Vec<Fixation>,
    pub n_targets: usize,
    pub windows: Vec<WindowResult>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl EvaluationReport {
    pub fn window(&self, seconds: f64) -> Option<&WindowResult> {
        self.windows.iter().find(|w| (w.window - seconds).abs() < 1e-9)
    }
}

fn window_result(subject: &PreparedSubject, window: f64, cue: f64, scored: &[HeldOutScore]) -> Result<WindowResult> {
    let n = subject.n_classes();
    let mut confusion = vec![vec![0usize; n]; n];
    let mut n_correct = 0;
    let mut trials = Vec::with_capacity(scored.len());
    for s in scored {
        confusion[s.true_class][s.scores.best] += 1;
        if s.true_class == s.scores.best {
            n_correct += 1;
        }
        let t = &subject.trials[s.trial];
        trials.push(TrialResult {
            block: t.block,
            numeric_label: t.label.numeric_label,
            predicted_label: subject.classes[s.scores.best].label.numeric_label,
            scores: s.scores.scores.clone(),
        });
    }
    let accuracy = n_correct as f64 / scored.len().max(1) as f64;
    let actual = itr(n, accuracy, window + cue, ItrUnit::BitsPerMinute)?;
    let theoretical = itr(n, accuracy, window, ItrUnit::BitsPerSecond)?;
    let refs: Vec<(usize, &ScoreVector)> = scored.iter().map(|s| (s.true_class, &s.scores)).collect();
    let fixations = subject.codebook.fixation_points.len();
    let flickers = subject.codebook.n_flickers();
    Ok(WindowResult {
        window,
        n_trials: scored.len(),
        n_correct,
        accuracy,
        itr_actual_bpm: actual.value,
        itr_theoretical_bps: theoretical.value,
        below_chance: actual.below_chance,
        confusion,
        fixation_subtask: (fixations > 1)
            .then(|| restricted_accuracy(&subject.classes, &refs, &Restriction::FixationWithinFlicker))
            .transpose()?,
        flicker_subtask: (flickers > 1 && fixations > 1)
            .then(|| restricted_accuracy(&subject.classes, &refs, &Restriction::FlickerWithinFixation))
            .transpose()?,
        trials,
    })
}

/// Cross-validates prepared trials at every configured window.
pub fn evaluate_prepared(subject: &PreparedSubject, config: &BenchmarkConfig, montage: &str) -> Result<EvaluationReport> {
    config.validate()?;
    let start = Instant::now();
    let samples: Vec<usize> = config.windows.iter().map(|&w| config.window_samples(w)).collect();
    let scored = crossvalidated_scores(
        subject,
        &config.tdca,
        &samples,
        config.train_window.map(|t| config.window_samples(t)),
        config.folds,
    )?;
    let windows = config
        .windows
        .iter()
        .zip(&scored)
        .map(|(&w, s)| window_result(subject, w, config.cue_time, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport {
        subject_id: subject.subject_id.clone(),
        montage: montage.to_string(),
        fixations: subject.codebook.fixation_points.clone(),
        n_targets: subject.n_classes(),
        windows,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Leave-one-block-out evaluation of a dataset (already restricted to the wanted
/// channels and fixations).
pub fn loo_crossvalidate(dataset: &Dataset, config: &BenchmarkConfig) -> Result<EvaluationReport> {
    config.validate()?;
    let n_blocks = dataset.blocks.len();
    if n_blocks < 2 {
        return invalid(format!("cross-validation needs >= 2 blocks, found {n_blocks}"));
    }
    let subject = prepare_subject(dataset, config, config.max_duration())?;
    evaluate_prepared(&subject, config, "custom")
}

/// Montage subset and fixation selection followed by cross-validation.
pub fn evaluate_dataset(dataset: &Dataset, config: &BenchmarkConfig, montage: &str, fixations: &[Fixation]) -> Result<EvaluationReport> {
    let ds = apply_montage(dataset, montage)?;
    let ds = if fixations.is_empty() { ds } else { ds.select_fixations(fixations)? };
    let subject = prepare_subject(&ds, config, config.max_duration())?;
    evaluate_prepared(&subject, config, montage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynwinRow {
    #[serde(rename = "s")]
    pub threshold_index: usize,
    pub mean_time: f64,
    pub accuracy: f64,
    /// Bits/min with the cue time added to the mean output time.
    pub itr_bpm: f64,
}

/// Cross-validated dynamic-window sweep: one model per fold trained at the longest
/// window, then thresholds `1..=n_thresholds`.
pub fn crossvalidate_dynwin(subject: &PreparedSubject, config: &BenchmarkConfig) -> Result<Vec<DynwinRow>> {
    config.validate()?;
    config.dynwin.validate()?;
    let dw = &config.dynwin;
    let longest = config.window_samples(*dw.windows.last().unwrap());
    let groups = fold_groups(&subject.blocks(), config.folds)?;
    let per_fold = groups
        .par_iter()
        .map(|held| {
            let model = train_excluding(subject, &config.tdca, held, longest)?;
            let test: Vec<SubbandTrial> = subject.trials.iter().filter(|t| held.contains(&t.block)).cloned().collect();
            let truth: Vec<Option<usize>> = test.iter().map(|t| model.class_index(&t.label)).collect();
            Ok((dynwin::score_windows(&model, &test, dw)?, truth))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for (s, t) in per_fold {
        scores.extend(s);
        truth.extend(t);
    }
    dynwin::sweep_thresholds(&scores, &truth, dw)?
        .into_iter()
        .map(|session| {
            Ok(DynwinRow {
                threshold_index: session.threshold_index,
                mean_time: session.mean_time,
                accuracy: session.accuracy,
                itr_bpm: itr(subject.n_classes(), session.accuracy, session.mean_time + config.cue_time, ItrUnit::BitsPerMinute)?.value,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub numeric_label: usize,
    pub frequency: f64,
    pub channel: usize,
    pub snr_db: f64,
}

/// SNR of each class-averaged epoch at its flicker frequency, on every channel of sub-band
/// 0. Classes whose frequency misses the bin grid of `window` samples, or lacks
/// `n_neighbors` bins on either side, are skipped.
pub fn snr_table(subject: &PreparedSubject, window: usize, n_neighbors: usize) -> Result<Vec<SnrRow>> {
    let mut rows = Vec::new();
    for class in &subject.classes {
        let members: Vec<&SubbandTrial> = subject.trials.iter().filter(|t| t.label == class.label).collect();
        let Some(first) = members.first() else { continue };
        let band = &first.bands[0];
        if window > band.ncols() {
            return invalid(format!("window {window} longer than the {}-sample epochs", band.ncols()));
        }
        let mean = members
            .iter()
            .fold(nalgebra::DMatrix::zeros(band.nrows(), band.ncols()), |a, t| a + &t.bands[0])
            / members.len() as f64;
        let sp = crate::metrics::spectrum(&mean, subject.sampling_rate, window)?;
        match sp.bin_of(class.frequency) {
            Some(bin) if bin >= n_neighbors && bin + n_neighbors < sp.n_bins() => {}
            _ => {
                log::debug!("skipping {} Hz: off-bin or too close to the spectrum edge", class.frequency);
                continue;
            }
        }
        for ch in 0..mean.nrows() {
            let snr = sp.snr(ch, class.frequency, n_neighbors)?;
            rows.push(SnrRow {
                numeric_label: class.label.numeric_label,
                frequency: class.frequency,
                channel: ch,
                snr_db: snr.db,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Montage;
    use crate::simgen::{synthesize_dataset, ForwardModelConfig};
    use crate::sigproc::{BandSpec, FilterBank};

    fn small(noise: f64, n_blocks: usize) -> Dataset {
        let montage = Montage::parieto_occipital();
        let idx = montage.subset_indices("64-9").unwrap();
        let montage = montage.restrict(&idx).unwrap();
        let cb = StimulusCodebook {
            rows: 1,
            cols: 4,
            ..StimulusCodebook::default()
        }
        .with_fixations(&[Fixation::Left, Fixation::Right])
        .unwrap();
        let cfg = ForwardModelConfig {
            white_noise: noise,
            post_trigger: 0.7,
            seed: 11,
            ..Default::default()
        };
        synthesize_dataset(&cfg, &montage, &cb, n_blocks).unwrap()
    }

    fn quick() -> BenchmarkConfig {
        BenchmarkConfig {
            windows: vec![0.2, 0.5],
            tdca: TdcaConfig {
                filter_bank: FilterBank { bands: vec![BandSpec::new(6.0, 90.0), BandSpec::new(14.0, 90.0)] },
                n_components: 4,
                ..TdcaConfig::default()
            },
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn folds_partition_blocks() {
        assert!(fold_groups(&[0], None).is_err());
        assert_eq!(fold_groups(&[0, 1, 2], None).unwrap(), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(fold_groups(&[0, 1, 2, 3, 4], Some(2)).unwrap(), vec![vec![0, 2, 4], vec![1, 3]]);
    }

    #[test]
    fn report_fields_are_consistent() {
        let ds = small(0.5, 3);
        let rep = loo_crossvalidate(&ds, &quick()).unwrap();
        assert_eq!(rep.n_targets, 8);
        for w in &rep.windows {
            assert_eq!(w.n_trials, 24);
            assert_eq!(w.accuracy, w.n_correct as f64 / w.n_trials as f64);
            let conf_total: usize = w.confusion.iter().flatten().sum();
            let conf_diag: usize = (0..8).map(|i| w.confusion[i][i]).sum();
            assert_eq!((conf_total, conf_diag), (w.n_trials, w.n_correct));
            let a = itr(8, w.accuracy, w.window + 0.5, ItrUnit::BitsPerMinute).unwrap().value;
            let t = itr(8, w.accuracy, w.window, ItrUnit::BitsPerSecond).unwrap().value;
            assert_eq!((w.itr_actual_bpm, w.itr_theoretical_bps), (a, t));
            assert!(w.fixation_subtask.is_some());
        }
        assert!(rep.window(0.5).unwrap().accuracy > 0.9);
    }

    #[test]
    fn single_block_is_rejected() {
        let ds = small(0.5, 1);
        assert!(matches!(loo_crossvalidate(&ds, &quick()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn held_out_block_never_trains() {
        let ds = small(0.5, 3);
        let cfg = quick();
        let subject = prepare_subject(&ds, &cfg, 0.5).unwrap();
        let m = train_excluding(&subject, &cfg.tdca, &[1], 125).unwrap();
        assert_eq!(m.training_blocks, vec![0, 2]);
    }

    #[test]
    fn restriction_cases() {
        let ds = small(0.5, 3);
        let cfg = quick();
        let subject = prepare_subject(&ds, &cfg, 0.5).unwrap();
        let model = train_excluding(&subject, &cfg.tdca, &[2], 125).unwrap();
        let test: Vec<SubbandTrial> = subject.trials.iter().filter(|t| t.block == 2).cloned().collect();
        let single = subtask_accuracy(&model, &test, 125, &Restriction::Classes(vec![3])).unwrap();
        assert_eq!((single.accuracy, single.n_trials), (1.0, 1));
        assert!(subtask_accuracy(&model, &test, 125, &Restriction::Classes(vec![99])).is_err());
        let fix = subtask_accuracy(&model, &test, 125, &Restriction::FixationWithinFlicker).unwrap();
        assert_eq!(fix.groups.len(), 4);
        assert_eq!(fix.groups[0].key, "flicker 0");
    }

    #[test]
    fn shared_model_matches_per_window_at_its_own_length() {
        let ds = small(0.5, 3);
        let mut cfg = quick();
        cfg.windows = vec![0.5];
        let per = loo_crossvalidate(&ds, &cfg).unwrap();
        cfg.train_window = Some(0.5);
        let shared = loo_crossvalidate(&ds, &cfg).unwrap();
        assert_eq!(per.windows, shared.windows);
    }
}
