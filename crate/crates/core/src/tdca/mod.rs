//! Filter-bank task-discriminative component analysis.
//!
//! Training trials are delay-embedded, augmented with their projection onto the class's
//! sine-cosine reference subspace, averaged into templates and used to fit one common
//! spatiotemporal filter per sub-band. Test trials are scored by the weighted squared
//! correlation between their filtered augmentation and each class's reduced template.

pub mod augment;
pub mod fisher;
pub mod io;

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{StimulusCodebook, TargetLabel, TrialEpoch};
use crate::error::{invalid, Error, Result};
use crate::sigproc::{DesignedBank, FilterBank};
pub use augment::{class_templates, delay_embed, project_augment, sincos_reference, ReferenceProjector};
pub use fisher::{fit_spatiotemporal_filter, solve_fisher, FisherFilters, Scatter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdcaConfig {
    pub delay_order: usize,
    pub n_harmonics: usize,
    pub n_components: usize,
    pub ridge: f64,
    pub filter_bank: FilterBank,
    /// `a` in `f(m) = m^-a + b`.
    pub weight_exponent: f64,
    /// `b` in `f(m) = m^-a + b`.
    pub weight_offset: f64,
    /// Subtract each channel's mean before embedding.
    pub center_channels: bool,
}

impl Default for TdcaConfig {
    fn default() -> Self {
        TdcaConfig {
            delay_order: 4,
            n_harmonics: 5,
            n_components: 8,
            ridge: 1e-6,
            filter_bank: FilterBank::default(),
            weight_exponent: 1.25,
            weight_offset: 0.25,
            center_channels: false,
        }
    }
}

/// `f(m) = m^-a + b` for 1-based sub-band index `m`.
pub fn band_weight(m: usize, exponent: f64, offset: f64) -> f64 {
    (m as f64).powf(-exponent) + offset
}

impl TdcaConfig {
    pub fn band_weight(&self, m: usize) -> f64 {
        band_weight(m, self.weight_exponent, self.weight_offset)
    }

    pub fn band_weights(&self) -> Vec<f64> {
        (1..=self.filter_bank.n_bands()).map(|m| self.band_weight(m)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_harmonics == 0 || self.n_components == 0 {
            return invalid("n_harmonics and n_components must be >= 1");
        }
        if !(self.ridge >= 0.0) {
            return invalid("ridge must be >= 0");
        }
        if self.filter_bank.bands.is_empty() {
            return invalid("filter bank needs at least one band");
        }
        Ok(())
    }
}

/// A trial already split into sub-bands (channels x samples each).
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandTrial {
    pub label: TargetLabel,
    pub block: usize,
    pub bands: Vec<DMatrix<f64>>,
}

impl SubbandTrial {
    pub fn n_channels(&self) -> usize {
        self.bands.first().map_or(0, |b| b.nrows())
    }

    pub fn n_samples(&self) -> usize {
        self.bands.first().map_or(0, |b| b.ncols())
    }

    pub fn select_channels(&self, rows: &[usize]) -> SubbandTrial {
        SubbandTrial {
            label: self.label,
            block: self.block,
            bands: self.bands.iter().map(|b| b.select_rows(rows)).collect(),
        }
    }
}

/// Splits epochs into sub-bands with a designed bank.
pub fn prepare_trials(epochs: &[TrialEpoch], bank: &DesignedBank) -> Vec<SubbandTrial> {
    epochs
        .par_iter()
        .map(|e| SubbandTrial {
            label: e.label,
            block: e.block,
            bands: bank.decompose(&e.data),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub label: TargetLabel,
    pub frequency: f64,
}

pub fn classes_from_codebook(codebook: &StimulusCodebook) -> Vec<ClassInfo> {
    codebook
        .targets()
        .into_iter()
        .map(|label| ClassInfo {
            label,
            frequency: codebook.frequency(label.flicker_index),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandModel {
    /// `((l+1)·N_c) x N_s`.
    pub filter: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Per class, `(2·N_p) x N_s`.
    pub templates: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdcaModel {
    pub config: TdcaConfig,
    pub sampling_rate: f64,
    /// Training window `N_p` in samples.
    pub window: usize,
    pub n_channels: usize,
    pub classes: Vec<ClassInfo>,
    pub bands: Vec<BandModel>,
    /// Blocks whose trials were used for training.
    pub training_blocks: Vec<usize>,
    projectors: Vec<ReferenceProjector>,
    class_projector: Vec<usize>,
}

/// Per-class scores of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    /// `ρ_n` per class.
    pub scores: Vec<f64>,
    /// `r_n^(m)`, indexed `[band][class]`.
    pub correlations: Vec<Vec<f64>>,
    /// Argmax of `scores`, lowest index on ties.
    pub best: usize,
}

impl ScoreVector {
    pub fn from_correlations(correlations: Vec<Vec<f64>>, weights: &[f64]) -> ScoreVector {
        let n = correlations.first().map_or(0, |c| c.len());
        let scores: Vec<f64> = (0..n)
            .map(|c| {
                correlations
                    .iter()
                    .zip(weights)
                    .map(|(band, w)| w * band[c] * band[c])
                    .sum()
            })
            .collect();
        let best = argmax(&scores, 0..n).unwrap_or(0);
        ScoreVector {
            scores,
            correlations,
            best,
        }
    }

    /// Argmax restricted to `candidates` (lowest class index on ties).
    pub fn argmax_over(&self, candidates: &[usize]) -> Option<usize> {
        let mut sorted = candidates.to_vec();
        sorted.sort_unstable();
        argmax(&self.scores, sorted.into_iter())
    }

    /// Largest minus second-largest score.
    pub fn margin(&self) -> f64 {
        let mut top = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for &s in &self.scores {
            if s > top {
                second = top;
                top = s;
            } else if s > second {
                second = s;
            }
        }
        top - second
    }
}

fn argmax(scores: &[f64], idx: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in idx {
        if best.is_none_or(|b| scores[i] > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

fn centered(x: DMatrix<f64>, center: bool) -> DMatrix<f64> {
    if !center {
        return x;
    }
    let mut x = x;
    for mut row in x.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    x
}

fn build_projectors(
    classes: &[ClassInfo],
    n_harmonics: usize,
    fs: f64,
    window: usize,
) -> Result<(Vec<ReferenceProjector>, Vec<usize>)> {
    let mut by_freq: Vec<(f64, usize)> = Vec::new();
    let mut projectors = Vec::new();
    let mut class_projector = Vec::with_capacity(classes.len());
    for c in classes {
        let idx = match by_freq.iter().find(|(f, _)| *f == c.frequency) {
            Some(&(_, i)) => i,
            None => {
                projectors.push(ReferenceProjector::for_frequency(c.frequency, n_harmonics, fs, window)?);
                by_freq.push((c.frequency, projectors.len() - 1));
                projectors.len() - 1
            }
        };
        class_projector.push(idx);
    }
    Ok((projectors, class_projector))
}

/// Trains on pre-split trials. `classes` fixes the class order of the model.
pub fn train_subbands(
    trials: &[&SubbandTrial],
    classes: &[ClassInfo],
    config: &TdcaConfig,
    sampling_rate: f64,
    window: usize,
) -> Result<TdcaModel> {
    config.validate()?;
    if window == 0 {
        return invalid("training window must be >= 1 sample");
    }
    if classes.len() < 2 {
        return invalid("at least two classes are required");
    }
    let n_bands = config.filter_bank.n_bands();
    let first = trials.first().ok_or_else(|| Error::InvalidArgument("no training trials".into()))?;
    let n_ch = first.n_channels();
    if trials.iter().any(|t| t.bands.len() != n_bands || t.n_channels() != n_ch) {
        return invalid("training trials disagree on band or channel count");
    }
    let dim = (config.delay_order + 1) * n_ch;
    if config.n_components > dim {
        return invalid(format!("n_components {} exceeds filter dimension {dim}", config.n_components));
    }
    let class_of: HashMap<TargetLabel, usize> =
        classes.iter().enumerate().map(|(i, c)| (c.label, i)).collect();
    let mut per_class: Vec<Vec<&SubbandTrial>> = vec![Vec::new(); classes.len()];
    for t in trials {
        let c = class_of
            .get(&t.label)
            .ok_or_else(|| Error::InvalidArgument(format!("trial label {} not in class list", t.label.numeric_label)))?;
        per_class[*c].push(t);
    }
    if let Some(missing) = per_class.iter().position(|v| v.is_empty()) {
        return invalid(format!(
            "class {} has no training trials",
            classes[missing].label.numeric_label
        ));
    }
    let (projectors, class_projector) = build_projectors(classes, config.n_harmonics, sampling_rate, window)?;

    let bands = (0..n_bands)
        .into_par_iter()
        .map(|m| {
            let n_total = trials.len() as f64;
            let mut within = DMatrix::zeros(dim, dim);
            let mut templates_full = Vec::with_capacity(classes.len());
            for (c, members) in per_class.iter().enumerate() {
                let proj = &projectors[class_projector[c]];
                let embedded: Vec<DMatrix<f64>> = members
                    .iter()
                    .map(|t| delay_embed(&centered(t.bands[m].clone(), config.center_channels), window, config.delay_order))
                    .collect();
                let mean = embedded.iter().fold(DMatrix::zeros(dim, window), |a, e| a + e) / embedded.len() as f64;
                // [E, E P][E, E P]ᵀ = E Eᵀ + (E Q)(E Q)ᵀ
                for e in &embedded {
                    let resid = e - &mean;
                    fisher::add_gram(&mut within, &resid, 1.0 / n_total);
                    fisher::add_gram(&mut within, &(&resid * proj.basis()), 1.0 / n_total);
                }
                templates_full.push(project_augment(&mean, proj)?);
            }
            let grand = templates_full
                .iter()
                .fold(DMatrix::zeros(dim, 2 * window), |a, t| a + t)
                / templates_full.len() as f64;
            let mut between = DMatrix::zeros(dim, dim);
            for t in &templates_full {
                fisher::add_gram(&mut between, &(t - &grand), 1.0 / templates_full.len() as f64);
            }
            let solved = solve_fisher(&Scatter { between, within }, config.n_components, config.ridge)?;
            let templates = templates_full.iter().map(|t| t.tr_mul(&solved.filters)).collect();
            Ok(BandModel {
                filter: solved.filters,
                eigenvalues: solved.eigenvalues,
                templates,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut training_blocks: Vec<usize> = trials.iter().map(|t| t.block).collect();
    training_blocks.sort_unstable();
    training_blocks.dedup();
    Ok(TdcaModel {
        config: config.clone(),
        sampling_rate,
        window,
        n_channels: n_ch,
        classes: classes.to_vec(),
        bands,
        training_blocks,
        projectors,
        class_projector,
    })
}

/// Trains from aligned, decimated epochs. Epochs may carry `delay_order` extra samples
/// past `window` so the delayed copies see real data.
pub fn train(
    epochs: &[TrialEpoch],
    codebook: &StimulusCodebook,
    config: &TdcaConfig,
    window: usize,
) -> Result<TdcaModel> {
    let fs = epochs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training epochs".into()))?
        .sampling_rate;
    let bank = config.filter_bank.design(fs)?;
    let prepared = prepare_trials(epochs, &bank);
    let refs: Vec<&SubbandTrial> = prepared.iter().collect();
    train_subbands(&refs, &classes_from_codebook(codebook), config, fs, window)
}

impl TdcaModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: &TargetLabel) -> Option<usize> {
        self.classes.iter().position(|c| &c.label == label)
    }

    pub fn projector(&self, class: usize) -> &ReferenceProjector {
        &self.projectors[self.class_projector[class]]
    }

    pub fn max_score(&self) -> f64 {
        self.config.band_weights().iter().sum()
    }

    /// Delay-embedded band data of a test trial: first `n_samples` columns only, zeros after.
    pub fn embed_test(&self, band: &DMatrix<f64>, n_samples: usize) -> DMatrix<f64> {
        let n = n_samples.min(self.window).min(band.ncols());
        let x = centered(band.columns(0, n).into_owned(), self.config.center_channels);
        delay_embed(&x, self.window, self.config.delay_order)
    }

    /// Scores pre-split test data using its first `n_samples` samples.
    pub fn score_subbands(&self, bands: &[DMatrix<f64>], n_samples: usize) -> Result<ScoreVector> {
        if bands.len() != self.bands.len() {
            return invalid(format!("expected {} sub-bands, got {}", self.bands.len(), bands.len()));
        }
        if bands.iter().any(|b| b.nrows() != self.n_channels) {
            return invalid(format!("model expects {} channels", self.n_channels));
        }
        let np = self.window;
        let ns = self.config.n_components;
        let correlations = bands
            .iter()
            .zip(&self.bands)
            .map(|(x, bm)| {
                let embedded = self.embed_test(x, n_samples);
                // Zᵀ = X̃ᵀ W, stacked with P Zᵀ per reference
                let zt = embedded.tr_mul(&bm.filter);
                let stacked: Vec<DMatrix<f64>> = self
                    .projectors
                    .iter()
                    .map(|p| {
                        let pz = p.basis() * p.basis().tr_mul(&zt);
                        let mut s = DMatrix::zeros(2 * np, ns);
                        s.rows_mut(0, np).copy_from(&zt);
                        s.rows_mut(np, np).copy_from(&pz);
                        s
                    })
                    .collect();
                bm.templates
                    .iter()
                    .enumerate()
                    .map(|(c, t)| pearson(stacked[self.class_projector[c]].as_slice(), t.as_slice()))
                    .collect::<Vec<f64>>()
            })
            .collect();
        Ok(ScoreVector::from_correlations(correlations, &self.config.band_weights()))
    }

    pub fn score(&self, trial: &SubbandTrial, n_samples: usize) -> Result<ScoreVector> {
        self.score_subbands(&trial.bands, n_samples)
    }
}

/// Scores the first `duration_s` seconds of an aligned, decimated test epoch.
pub fn score_trial(model: &TdcaModel, epoch: &TrialEpoch, duration_s: f64) -> Result<ScoreVector> {
    if epoch.sampling_rate != model.sampling_rate {
        return invalid(format!(
            "epoch at {} Hz, model at {} Hz",
            epoch.sampling_rate, model.sampling_rate
        ));
    }
    if !(duration_s > 0.0) {
        return invalid("duration must be positive");
    }
    let bank = model.config.filter_bank.design(model.sampling_rate)?;
    let n = (duration_s * model.sampling_rate).round() as usize;
    model.score_subbands(&bank.decompose(&epoch.data), n)
}
