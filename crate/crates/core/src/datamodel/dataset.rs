//! Trials, blocks and the on-disk dataset directory format.
//!
//! A dataset directory holds `manifest.json` and one payload file per block. Payloads are
//! little-endian `f32`, trial-major, then channel, then sample. Every trial in a block has
//! the same length and carries its own trigger sample index.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::codebook::{Fixation, StimulusCodebook, TargetLabel};
use super::montage::Montage;
use crate::error::{invalid, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

/// One channels x samples EEG segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEpoch {
    pub data: DMatrix<f64>,
    pub sampling_rate: f64,
    pub label: TargetLabel,
    pub block: usize,
}

impl TrialEpoch {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn with_data(&self, data: DMatrix<f64>, sampling_rate: f64) -> TrialEpoch {
        TrialEpoch {
            data,
            sampling_rate,
            label: self.label,
            block: self.block,
        }
    }
}

/// A raw recorded trial: the epoch plus the trigger position inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedTrial {
    pub epoch: TrialEpoch,
    pub trigger: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub index: usize,
    pub trials: Vec<RecordedTrial>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subject_id: String,
    pub montage: Montage,
    pub codebook: StimulusCodebook,
    pub blocks: Vec<Block>,
    pub raw_sampling_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub numeric_label: usize,
    pub flicker_index: usize,
    pub fixation: Fixation,
    pub trigger: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockRecord {
    pub index: usize,
    pub file: String,
    pub samples_per_trial: usize,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub subject_id: String,
    pub raw_sampling_rate: f64,
    pub montage: Montage,
    pub codebook: StimulusCodebook,
    pub blocks: Vec<BlockRecord>,
}

impl Dataset {
    pub fn n_trials(&self) -> usize {
        self.blocks.iter().map(|b| b.trials.len()).sum()
    }

    pub fn n_channels(&self) -> usize {
        self.montage.len()
    }

    pub fn trials(&self) -> impl Iterator<Item = &RecordedTrial> {
        self.blocks.iter().flat_map(|b| b.trials.iter())
    }

    /// Checks shapes, sampling rates, labels and block completeness.
    pub fn validate(&self) -> Result<()> {
        self.montage.validate()?;
        self.codebook
            .validate()
            .map_err(|e| Error::InvalidManifest(e.to_string()))?;
        let n_targets = self.codebook.n_targets();
        for block in &self.blocks {
            let mut seen = vec![false; n_targets];
            for t in &block.trials {
                let e = &t.epoch;
                if e.n_channels() != self.montage.len() {
                    return Err(Error::CorruptData(format!(
                        "block {}: epoch has {} channels, montage has {}",
                        block.index,
                        e.n_channels(),
                        self.montage.len()
                    )));
                }
                if e.n_samples() == 0 {
                    return Err(Error::CorruptData(format!("block {}: empty epoch", block.index)));
                }
                if e.sampling_rate != self.raw_sampling_rate {
                    return Err(Error::CorruptData("epochs disagree on sampling rate".into()));
                }
                let expect = self
                    .codebook
                    .label_from_numeric(e.label.numeric_label)
                    .map_err(|err| Error::InvalidManifest(err.to_string()))?;
                if expect != e.label {
                    return Err(Error::InvalidManifest(format!(
                        "label {} inconsistent with codebook",
                        e.label.numeric_label
                    )));
                }
                if seen[e.label.class_index()] {
                    return Err(Error::InvalidManifest(format!(
                        "block {} repeats target {}",
                        block.index, e.label.numeric_label
                    )));
                }
                seen[e.label.class_index()] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::InvalidManifest(format!(
                    "block {} does not contain every target",
                    block.index
                )));
            }
        }
        Ok(())
    }

    /// Keeps only trials whose fixation is in `fixations` and relabels them for the
    /// reduced codebook.
    pub fn select_fixations(&self, fixations: &[Fixation]) -> Result<Dataset> {
        for f in fixations {
            if !self.codebook.fixation_points.contains(f) {
                return invalid(format!("fixation '{f}' not present in dataset"));
            }
        }
        let codebook = self.codebook.with_fixations(fixations)?;
        let blocks = self
            .blocks
            .iter()
            .map(|b| -> Result<Block> {
                let trials = b
                    .trials
                    .iter()
                    .filter(|t| fixations.contains(&t.epoch.label.fixation))
                    .map(|t| {
                        let label = codebook.label(t.epoch.label.flicker_index, t.epoch.label.fixation)?;
                        let mut t = t.clone();
                        t.epoch.label = label;
                        Ok(t)
                    })
                    .collect::<Result<_>>()?;
                Ok(Block { index: b.index, trials })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            subject_id: self.subject_id.clone(),
            montage: self.montage.clone(),
            codebook,
            blocks,
            raw_sampling_rate: self.raw_sampling_rate,
        })
    }

    /// Restricts every epoch to the given montage rows.
    pub fn select_channels(&self, indices: &[usize]) -> Result<Dataset> {
        let montage = self.montage.restrict(indices)?;
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                index: b.index,
                trials: b
                    .trials
                    .iter()
                    .map(|t| RecordedTrial {
                        epoch: t.epoch.with_data(t.epoch.data.select_rows(indices), t.epoch.sampling_rate),
                        trigger: t.trigger,
                    })
                    .collect(),
            })
            .collect();
        Ok(Dataset {
            subject_id: self.subject_id.clone(),
            montage,
            codebook: self.codebook.clone(),
            blocks,
            raw_sampling_rate: self.raw_sampling_rate,
        })
    }
}

/// Dataset view containing only the channels of a named montage subset, in subset order.
pub fn apply_montage(dataset: &Dataset, subset_name: &str) -> Result<Dataset> {
    let idx = dataset.montage.subset_indices(subset_name)?;
    dataset.select_channels(&idx)
}

fn block_file_name(index: usize) -> String {
    format!("block_{index:03}.f32")
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(dataset.blocks.len());
    for block in &dataset.blocks {
        let samples = block.trials.first().map_or(0, |t| t.epoch.n_samples());
        let n_ch = dataset.montage.len();
        let mut bytes = Vec::with_capacity(block.trials.len() * n_ch * samples * 4);
        let mut trials = Vec::with_capacity(block.trials.len());
        for t in &block.trials {
            if t.epoch.n_samples() != samples || t.epoch.n_channels() != n_ch {
                return invalid(format!("block {} has ragged trials", block.index));
            }
            for ch in 0..n_ch {
                for s in 0..samples {
                    bytes.extend_from_slice(&(t.epoch.data[(ch, s)] as f32).to_le_bytes());
                }
            }
            trials.push(TrialRecord {
                numeric_label: t.epoch.label.numeric_label,
                flicker_index: t.epoch.label.flicker_index,
                fixation: t.epoch.label.fixation,
                trigger: t.trigger,
            });
        }
        let file = block_file_name(block.index);
        fs::write(dir.join(&file), bytes)?;
        records.push(BlockRecord {
            index: block.index,
            file,
            samples_per_trial: samples,
            trials,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        subject_id: dataset.subject_id.clone(),
        raw_sampling_rate: dataset.raw_sampling_rate,
        montage: dataset.montage.clone(),
        codebook: dataset.codebook.clone(),
        blocks: records,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::NotFound(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidManifest(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::InvalidManifest(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    manifest.montage.validate()?;
    if !(manifest.raw_sampling_rate > 0.0) {
        return Err(Error::InvalidManifest("raw sampling rate must be positive".into()));
    }
    let n_ch = manifest.montage.len();
    let mut blocks = Vec::with_capacity(manifest.blocks.len());
    for rec in &manifest.blocks {
        let path = dir.join(&rec.file);
        let bytes = fs::read(&path)
            .map_err(|e| Error::CorruptData(format!("block file {}: {e}", path.display())))?;
        let expected = n_ch * rec.samples_per_trial * rec.trials.len() * 4;
        if bytes.len() != expected {
            return Err(Error::CorruptData(format!(
                "{}: {} bytes, expected {expected}",
                path.display(),
                bytes.len()
            )));
        }
        let per_trial = n_ch * rec.samples_per_trial;
        let trials = rec
            .trials
            .iter()
            .enumerate()
            .map(|(i, tr)| -> Result<RecordedTrial> {
                let label = manifest
                    .codebook
                    .label_from_numeric(tr.numeric_label)
                    .map_err(|e| Error::InvalidManifest(e.to_string()))?;
                if label.flicker_index != tr.flicker_index || label.fixation != tr.fixation {
                    return Err(Error::InvalidManifest(format!(
                        "trial label {} disagrees with its flicker/fixation",
                        tr.numeric_label
                    )));
                }
                if tr.trigger >= rec.samples_per_trial {
                    return Err(Error::InvalidManifest(format!(
                        "trigger {} outside {}-sample trial",
                        tr.trigger, rec.samples_per_trial
                    )));
                }
                let chunk = &bytes[i * per_trial * 4..(i + 1) * per_trial * 4];
                let data = DMatrix::from_fn(n_ch, rec.samples_per_trial, |ch, s| {
                    let o = (ch * rec.samples_per_trial + s) * 4;
                    f32::from_le_bytes([chunk[o], chunk[o + 1], chunk[o + 2], chunk[o + 3]]) as f64
                });
                Ok(RecordedTrial {
                    epoch: TrialEpoch {
                        data,
                        sampling_rate: manifest.raw_sampling_rate,
                        label,
                        block: rec.index,
                    },
                    trigger: tr.trigger,
                })
            })
            .collect::<Result<_>>()?;
        blocks.push(Block { index: rec.index, trials });
    }
    let ds = Dataset {
        subject_id: manifest.subject_id,
        montage: manifest.montage,
        codebook: manifest.codebook,
        blocks,
        raw_sampling_rate: manifest.raw_sampling_rate,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::codebook::build_codebook;
    use std::f64::consts::PI;

    fn toy(n_blocks: usize, n_ch: usize) -> Dataset {
        let full = Montage::parieto_occipital();
        let idx = full.subset_indices("64-9").unwrap();
        let montage = full.restrict(&idx[..n_ch]).unwrap();
        let codebook = build_codebook(5, 8, 8.0, 0.2, 0.0, 0.35 * PI, &[Fixation::Center]).unwrap();
        let blocks = (0..n_blocks)
            .map(|b| Block {
                index: b,
                trials: codebook
                    .targets()
                    .into_iter()
                    .map(|label| RecordedTrial {
                        epoch: TrialEpoch {
                            data: DMatrix::from_fn(n_ch, 20, |c, s| {
                                (b * 1000 + label.numeric_label * 10 + c) as f64 + s as f64 * 0.125
                            }),
                            sampling_rate: 1000.0,
                            label,
                            block: b,
                        },
                        trigger: 3,
                    })
                    .collect(),
            })
            .collect();
        Dataset {
            subject_id: "toy".into(),
            montage,
            codebook,
            blocks,
            raw_sampling_rate: 1000.0,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = toy(2, 9);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.n_trials(), 80);
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_manifest_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::NotFound(_))));
    }

    #[test]
    fn absent_or_truncated_block_is_corrupt() {
        let ds = toy(2, 3);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        fs::remove_file(dir.path().join(block_file_name(1))).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::CorruptData(_))));

        write_dataset(&ds, dir.path()).unwrap();
        let p = dir.path().join(block_file_name(0));
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::CorruptData(_))));
    }

    #[test]
    fn unknown_subset_channel_is_invalid_manifest() {
        let ds = toy(1, 3);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let mut m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        m["montage"]["subsets"]["ghost"] = serde_json::json!(["Cz"]);
        fs::write(&p, m.to_string()).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::InvalidManifest(_))));
    }

    #[test]
    fn incomplete_block_rejected() {
        let mut ds = toy(1, 3);
        ds.blocks[0].trials.pop();
        assert!(matches!(ds.validate(), Err(Error::InvalidManifest(_))));
    }

    #[test]
    fn montage_application() {
        let ds = toy(1, 9);
        let nine = apply_montage(&ds, "64-9").unwrap();
        assert_eq!(nine, ds);
        assert_eq!(apply_montage(&nine, "64-9").unwrap(), nine);
        assert!(matches!(apply_montage(&ds, "64-21"), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fixation_selection_relabels() {
        let mut ds = toy(1, 3);
        ds.codebook = ds.codebook.with_fixations(&[Fixation::Center]).unwrap();
        let sel = ds.select_fixations(&[Fixation::Center]).unwrap();
        assert_eq!(sel.n_trials(), 40);
        assert!(ds.select_fixations(&[Fixation::Up]).is_err());
    }
}
