//! Dynamic-window decoding: score growing windows, weight by confidence and emit once
//! the margin between the two best classes clears a risk threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tdca::{ScoreVector, SubbandTrial, TdcaModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynWinConfig {
    /// Window lengths in seconds, strictly increasing.
    pub windows: Vec<f64>,
    /// Thresholds are swept over `s = 1..=n_thresholds`.
    pub n_thresholds: usize,
}

impl Default for DynWinConfig {
    fn default() -> Self {
        DynWinConfig {
            windows: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            n_thresholds: 50,
        }
    }
}

impl DynWinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return invalid("at least one window is required");
        }
        if self.windows.iter().any(|w| !(*w > 0.0)) || self.windows.windows(2).any(|p| p[1] <= p[0]) {
            return invalid("windows must be positive and strictly increasing");
        }
        if self.n_thresholds == 0 {
            return invalid("n_thresholds must be >= 1");
        }
        Ok(())
    }

    pub fn window_samples(&self, sampling_rate: f64) -> Vec<usize> {
        self.windows.iter().map(|w| (w * sampling_rate).round() as usize).collect()
    }
}

/// `(k/50)²` for 1-based window index `k`.
pub fn confidence_weight(k: usize) -> f64 {
    let r = k as f64 / 50.0;
    r * r
}

/// `T(s) = -s·10⁻⁵/2`.
pub fn threshold(s: usize) -> f64 {
    -(s as f64) * 1e-5 / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Emit(usize),
    Defer,
}

/// Emits the argmax when `Δ > -T`, with `Δ` the gap between the two largest
/// (already weighted) scores. A single class always emits.
pub fn decide_output(weighted_scores: &[f64], threshold: f64) -> Decision {
    if weighted_scores.is_empty() {
        return Decision::Defer;
    }
    let mut best = 0;
    for (i, &s) in weighted_scores.iter().enumerate() {
        if s > weighted_scores[best] {
            best = i;
        }
    }
    let second = weighted_scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if weighted_scores[best] - second > -threshold {
        Decision::Emit(best)
    } else {
        Decision::Defer
    }
}

/// Per-window scores of every trial, `[trial][window]`.
pub fn score_windows(model: &TdcaModel, trials: &[SubbandTrial], config: &DynWinConfig) -> Result<Vec<Vec<ScoreVector>>> {
    config.validate()?;
    let samples = config.window_samples(model.sampling_rate);
    if let Some(short) = trials.iter().find(|t| t.n_samples() < *samples.last().unwrap()) {
        return invalid(format!(
            "trial {} has {} samples, longest window needs {}",
            short.label.numeric_label,
            short.n_samples(),
            samples.last().unwrap()
        ));
    }
    trials
        .par_iter()
        .map(|t| samples.iter().map(|&n| model.score(t, n)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynOutcome {
    pub true_class: Option<usize>,
    pub predicted: usize,
    /// 0-based index of the emitting window.
    pub window_index: usize,
    pub output_time: f64,
}

impl DynOutcome {
    pub fn correct(&self) -> bool {
        self.true_class == Some(self.predicted)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSession {
    pub threshold_index: usize,
    pub outcomes: Vec<DynOutcome>,
    pub mean_time: f64,
    pub accuracy: f64,
}

/// Applies the emit rule to precomputed window scores. The last window always emits.
pub fn decide_session(
    scores: &[Vec<ScoreVector>],
    true_classes: &[Option<usize>],
    windows: &[f64],
    threshold_value: f64,
) -> Result<Vec<DynOutcome>> {
    if scores.len() != true_classes.len() {
        return invalid("one true class per trial required");
    }
    scores
        .iter()
        .zip(true_classes)
        .map(|(per_window, &truth)| {
            if per_window.len() != windows.len() {
                return invalid("scores do not cover every window");
            }
            let last = windows.len() - 1;
            for (k, sv) in per_window.iter().enumerate() {
                let c = confidence_weight(k + 1);
                let weighted: Vec<f64> = sv.scores.iter().map(|s| c * s).collect();
                let decision = if k == last {
                    Decision::Emit(sv.best)
                } else {
                    decide_output(&weighted, threshold_value)
                };
                if let Decision::Emit(predicted) = decision {
                    return Ok(DynOutcome {
                        true_class: truth,
                        predicted,
                        window_index: k,
                        output_time: windows[k],
                    });
                }
            }
            unreachable!("last window always emits")
        })
        .collect()
}

fn summarize(threshold_index: usize, outcomes: Vec<DynOutcome>) -> DynamicSession {
    let n = outcomes.len().max(1) as f64;
    DynamicSession {
        threshold_index,
        mean_time: outcomes.iter().map(|o| o.output_time).sum::<f64>() / n,
        accuracy: outcomes.iter().filter(|o| o.correct()).count() as f64 / n,
        outcomes,
    }
}

/// Runs one session at threshold index `s`.
pub fn run_dynamic_session(model: &TdcaModel, trials: &[SubbandTrial], config: &DynWinConfig, s: usize) -> Result<DynamicSession> {
    let scores = score_windows(model, trials, config)?;
    let truth: Vec<Option<usize>> = trials.iter().map(|t| model.class_index(&t.label)).collect();
    let outcomes = decide_session(&scores, &truth, &config.windows, threshold(s))?;
    Ok(summarize(s, outcomes))
}

/// Sessions for `s = 1..=n_thresholds` over shared window scores.
pub fn sweep_thresholds(
    scores: &[Vec<ScoreVector>],
    true_classes: &[Option<usize>],
    config: &DynWinConfig,
) -> Result<Vec<DynamicSession>> {
    config.validate()?;
    (1..=config.n_thresholds)
        .map(|s| Ok(summarize(s, decide_session(scores, true_classes, &config.windows, threshold(s))?)))
        .collect()
}
