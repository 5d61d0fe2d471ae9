//! Electrode montages and their named subsets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    /// Left (-) to right (+).
    pub x: f64,
    /// Inferior (-) to superior (+).
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Montage {
    pub channels: Vec<Channel>,
    #[serde(default)]
    pub subsets: BTreeMap<String, Vec<String>>,
}

impl Montage {
    pub fn new(channels: Vec<Channel>, subsets: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let m = Montage { channels, subsets };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::InvalidManifest(format!("duplicate channel '{}'", c.name)));
            }
        }
        for (name, members) in &self.subsets {
            let mut last = None;
            for ch in members {
                let idx = self.index_of(ch).ok_or_else(|| {
                    Error::InvalidManifest(format!("subset '{name}' references unknown channel '{ch}'"))
                })?;
                if last.is_some_and(|l| idx <= l) {
                    return Err(Error::InvalidManifest(format!(
                        "subset '{name}' is not ordered like the montage"
                    )));
                }
                last = Some(idx);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    /// Row indices of a named subset, in montage order.
    pub fn subset_indices(&self, subset: &str) -> Result<Vec<usize>> {
        let members = self
            .subsets
            .get(subset)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown montage subset '{subset}'")))?;
        self.indices_of(members)
    }

    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.index_of(n.as_ref())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown channel '{}'", n.as_ref())))
            })
            .collect()
    }

    /// Montage restricted to `indices`; subsets that survive entirely are kept.
    pub fn restrict(&self, indices: &[usize]) -> Result<Montage> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return invalid(format!("channel index {bad} outside montage"));
        }
        let channels: Vec<Channel> = indices.iter().map(|&i| self.channels[i].clone()).collect();
        let subsets = self
            .subsets
            .iter()
            .filter(|(_, members)| members.iter().all(|m| channels.iter().any(|c| &c.name == m)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Montage::new(channels, subsets)
    }

    pub fn load(path: &Path) -> Result<Montage> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let m: Montage = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidManifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// 66-channel parieto-occipital grid with the 256-66, 128-32, 64-21 and 64-9 subsets.
    ///
    /// Coordinates are a flattened rear-view grid: the origin sits between the PO and O
    /// rows, +y points toward Pz and -y toward CBz.
    pub fn parieto_occipital() -> Montage {
        const ROWS: [(f64, &[&str]); 7] = [
            (0.75, &["P9", "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "P10"]),
            (
                0.5,
                &["PPO9h", "PPO7h", "PPO5h", "PPO3h", "PPO1h", "PPO2h", "PPO4h", "PPO6h", "PPO8h", "PPO10h"],
            ),
            (0.25, &["PO9", "PO7", "PO5", "PO3", "PO1", "POz", "PO2", "PO4", "PO6", "PO8", "PO10"]),
            (
                0.0,
                &["POO9h", "POO7h", "POO5h", "POO3h", "POO1h", "POO2h", "POO4h", "POO6h", "POO8h", "POO10h"],
            ),
            (-0.25, &["O9", "O5", "O3", "O1", "Oz", "O2", "O4", "O6", "O10"]),
            (-0.5, &["OI9h", "OI7h", "OI5h", "OI1h", "OI2h", "OI6h", "OI8h", "OI10h"]),
            (-0.75, &["I5", "CB1", "I1", "CBz", "I2", "CB2", "I6"]),
        ];
        let mut channels = Vec::with_capacity(66);
        for (y, names) in ROWS {
            let n = names.len() as f64;
            for (i, name) in names.iter().enumerate() {
                channels.push(Channel {
                    name: (*name).to_string(),
                    x: 0.2 * (i as f64 - (n - 1.0) / 2.0),
                    y,
                });
            }
        }
        let all: Vec<String> = channels.iter().map(|c| c.name.clone()).collect();
        let pick = |names: &[&str]| -> Vec<String> {
            all.iter().filter(|n| names.contains(&n.as_str())).cloned().collect()
        };
        let s9 = pick(&["Pz", "PO5", "PO3", "POz", "PO4", "PO6", "O1", "Oz", "O2"]);
        let s21 = pick(&[
            "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "PO7", "PO5", "PO3", "POz", "PO4",
            "PO6", "PO8", "CB1", "O1", "Oz", "O2", "CB2",
        ]);
        let s32 = pick(&[
            "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8", "PPO5h", "PPO1h", "PPO2h", "PPO6h",
            "PO9", "PO7", "PO5", "PO3", "POz", "PO4", "PO6", "PO8", "PO10", "O9", "O1", "Oz", "O2",
            "O10", "OI5h", "OI6h", "CB1", "CBz", "CB2",
        ]);
        let mut subsets = BTreeMap::new();
        subsets.insert("256-66".to_string(), all.clone());
        subsets.insert("128-32".to_string(), s32);
        subsets.insert("64-21".to_string(), s21);
        subsets.insert("64-9".to_string(), s9);
        Montage::new(channels, subsets).expect("built-in montage is valid")
    }
}
