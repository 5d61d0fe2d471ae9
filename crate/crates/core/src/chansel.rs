//! Greedy backward electrode elimination, with an exhaustive search for small montages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::{crossvalidated_scores, PreparedSubject};
use crate::tdca::TdcaConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChanselConfig {
    /// Analysis window in seconds.
    pub window: f64,
    /// Cross-validation folds; `None` holds out one block at a time.
    pub folds: Option<usize>,
    pub tdca: TdcaConfig,
}

impl Default for ChanselConfig {
    fn default() -> Self {
        ChanselConfig {
            window: 0.2,
            folds: None,
            tdca: TdcaConfig::default(),
        }
    }
}

/// Mean cross-validated accuracy over subjects using only `subset` (row indices into
/// each subject's channels).
pub fn evaluate_channel_subset(subjects: &[PreparedSubject], subset: &[usize], config: &ChanselConfig) -> Result<f64> {
    if subset.is_empty() {
        return invalid("channel subset is empty");
    }
    if subjects.is_empty() {
        return invalid("no subjects to evaluate");
    }
    let mut total = 0.0;
    for s in subjects {
        let n_ch = s.trials.first().map_or(0, |t| t.n_channels());
        if let Some(bad) = subset.iter().find(|&&c| c >= n_ch) {
            return invalid(format!("channel {bad} outside subject {}'s {n_ch} channels", s.subject_id));
        }
        let restricted = s.select_channels(subset);
        let n = (config.window * s.sampling_rate).round() as usize;
        let scored = crossvalidated_scores(&restricted, &config.tdca, &[n], None, config.folds)?;
        let hits = scored[0].iter().filter(|h| h.true_class == h.scores.best).count();
        total += hits as f64 / scored[0].len().max(1) as f64;
    }
    Ok(total / subjects.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub n_channels: usize,
    /// Channel removed to reach this subset; `None` for the initial set.
    pub removed: Option<usize>,
    pub subset: Vec<usize>,
    pub mean_accuracy: f64,
}

/// Removes one channel at a time, always the one whose removal keeps accuracy highest
/// (the latest in `initial` order on ties), until two channels remain.
pub fn greedy_backward_eliminate(subjects: &[PreparedSubject], initial: &[usize], config: &ChanselConfig) -> Result<Vec<EliminationStep>> {
    if initial.len() < 2 {
        return invalid("greedy elimination needs at least two channels");
    }
    let mut current = initial.to_vec();
    let mut trace = vec![EliminationStep {
        n_channels: current.len(),
        removed: None,
        subset: current.clone(),
        mean_accuracy: evaluate_channel_subset(subjects, &current, config)?,
    }];
    while current.len() > 2 {
        let accs = (0..current.len())
            .into_par_iter()
            .map(|i| {
                let mut cand = current.clone();
                cand.remove(i);
                evaluate_channel_subset(subjects, &cand, config)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut pick = 0;
        for (i, &a) in accs.iter().enumerate() {
            if a >= accs[pick] {
                pick = i;
            }
        }
        let removed = current.remove(pick);
        log::debug!("removed channel {removed}, {} left, accuracy {}", current.len(), accs[pick]);
        trace.push(EliminationStep {
            n_channels: current.len(),
            removed: Some(removed),
            subset: current.clone(),
            mean_accuracy: accs[pick],
        });
    }
    Ok(trace)
}

/// Flat CSV form of an elimination step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub removed_channel: String,
    pub remaining_channels: String,
    pub n_channels: usize,
    pub mean_accuracy: f64,
}

/// Trace rows with channel indices mapped through `names`.
pub fn trace_rows(trace: &[EliminationStep], names: &[String]) -> Vec<TraceRow> {
    let name = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
    trace
        .iter()
        .enumerate()
        .map(|(step, s)| TraceRow {
            step,
            removed_channel: s.removed.map(name).unwrap_or_default(),
            remaining_channels: s.subset.iter().map(|&i| name(i)).collect::<Vec<_>>().join(" "),
            n_channels: s.n_channels,
            mean_accuracy: s.mean_accuracy,
        })
        .collect()
}

/// A channel subset and its mean accuracy.
pub type SubsetScore = (Vec<usize>, f64);

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Best `k`-subset of `channels` by exhaustive search (at most 10 channels), with every
/// subset's accuracy in lexicographic order.
pub fn exhaustive_best_subset(
    subjects: &[PreparedSubject],
    channels: &[usize],
    k: usize,
    config: &ChanselConfig,
) -> Result<(Vec<usize>, f64, Vec<SubsetScore>)> {
    if channels.len() > 10 {
        return invalid("exhaustive search is limited to 10 channels");
    }
    if k == 0 || k > channels.len() {
        return invalid(format!("cannot choose {k} of {} channels", channels.len()));
    }
    let all = combinations(channels.len(), k)
        .into_par_iter()
        .map(|c| {
            let subset: Vec<usize> = c.iter().map(|&i| channels[i]).collect();
            let acc = evaluate_channel_subset(subjects, &subset, config)?;
            Ok((subset, acc))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (_, a)) in all.iter().enumerate() {
        if *a > all[best].1 {
            best = i;
        }
    }
    Ok((all[best].0.clone(), all[best].1, all))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(10, 3).len(), 120);
        assert_eq!(combinations(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn rejects_degenerate_requests() {
        let cfg = ChanselConfig::default();
        assert!(greedy_backward_eliminate(&[], &[0], &cfg).is_err());
        assert!(evaluate_channel_subset(&[], &[], &cfg).is_err());
        assert!(exhaustive_best_subset(&[], &(0..11).collect::<Vec<_>>(), 3, &cfg).is_err());
    }
}
