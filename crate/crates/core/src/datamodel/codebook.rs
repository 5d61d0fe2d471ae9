//! Target alphabet: a grid of (frequency, phase) flickers crossed with fixation points.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Position of the fixation cross inside a flicker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fixation {
    Right,
    Down,
    Left,
    Up,
    Center,
}

impl Fixation {
    pub const ALL: [Fixation; 5] = [
        Fixation::Right,
        Fixation::Down,
        Fixation::Left,
        Fixation::Up,
        Fixation::Center,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixation::Right => "right",
            Fixation::Down => "down",
            Fixation::Left => "left",
            Fixation::Up => "up",
            Fixation::Center => "center",
        }
    }
}

impl fmt::Display for Fixation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "right" => Ok(Fixation::Right),
            "down" => Ok(Fixation::Down),
            "left" => Ok(Fixation::Left),
            "up" => Ok(Fixation::Up),
            "center" | "centre" => Ok(Fixation::Center),
            other => invalid(format!("unknown fixation point '{other}'")),
        }
    }
}

/// How flicker indices map onto the stimulus grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridOrder {
    /// Top to bottom within a column, then left to right.
    #[default]
    ColumnMajor,
    RowMajor,
}

/// One decodable target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetLabel {
    pub flicker_index: usize,
    pub fixation: Fixation,
    /// 1-based, flicker-major then fixation-minor.
    pub numeric_label: usize,
}

impl TargetLabel {
    /// 0-based class index (`numeric_label - 1`).
    pub fn class_index(&self) -> usize {
        self.numeric_label - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusCodebook {
    pub rows: usize,
    pub cols: usize,
    pub base_frequency: f64,
    pub frequency_step: f64,
    pub base_phase: f64,
    pub phase_step: f64,
    pub fixation_points: Vec<Fixation>,
    #[serde(default = "default_refresh_rate")]
    pub refresh_rate: f64,
    #[serde(default)]
    pub order: GridOrder,
}

fn default_refresh_rate() -> f64 {
    240.0
}

impl Default for StimulusCodebook {
    fn default() -> Self {
        build_codebook(5, 8, 8.0, 0.2, 0.0, 0.35 * PI, &Fixation::ALL)
            .expect("default codebook is valid")
    }
}

/// Builds and validates a codebook.
pub fn build_codebook(
    rows: usize,
    cols: usize,
    base_frequency: f64,
    frequency_step: f64,
    base_phase: f64,
    phase_step: f64,
    fixation_points: &[Fixation],
) -> Result<StimulusCodebook> {
    let cb = StimulusCodebook {
        rows,
        cols,
        base_frequency,
        frequency_step,
        base_phase,
        phase_step,
        fixation_points: fixation_points.to_vec(),
        refresh_rate: default_refresh_rate(),
        order: GridOrder::ColumnMajor,
    };
    cb.validate()?;
    Ok(cb)
}

impl StimulusCodebook {
    pub fn validate(&self) -> Result<()> {
        if self.rows * self.cols == 0 {
            return invalid("codebook needs at least one flicker");
        }
        if !(self.frequency_step > 0.0) {
            return invalid("frequency_step must be positive");
        }
        if self.fixation_points.is_empty() {
            return invalid("at least one fixation point is required");
        }
        for (i, f) in self.fixation_points.iter().enumerate() {
            if self.fixation_points[..i].contains(f) {
                return invalid(format!("duplicate fixation point '{f}'"));
            }
        }
        if !(self.base_frequency > 0.0) {
            return invalid("flicker frequencies must be positive");
        }
        if !(self.refresh_rate > 0.0) {
            return invalid("refresh rate must be positive");
        }
        Ok(())
    }

    pub fn n_flickers(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_targets(&self) -> usize {
        self.n_flickers() * self.fixation_points.len()
    }

    pub fn frequency(&self, flicker: usize) -> f64 {
        self.base_frequency + flicker as f64 * self.frequency_step
    }

    /// Phase in `[0, 2π)`.
    pub fn phase(&self, flicker: usize) -> f64 {
        (self.base_phase + flicker as f64 * self.phase_step).rem_euclid(2.0 * PI)
    }

    /// `(row, col)` of a flicker on the stimulus grid.
    pub fn grid_position(&self, flicker: usize) -> (usize, usize) {
        match self.order {
            GridOrder::ColumnMajor => (flicker % self.rows, flicker / self.rows),
            GridOrder::RowMajor => (flicker / self.cols, flicker % self.cols),
        }
    }

    pub fn with_order(mut self, order: GridOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_fixations(&self, fixations: &[Fixation]) -> Result<Self> {
        let mut cb = self.clone();
        cb.fixation_points = fixations.to_vec();
        cb.validate()?;
        Ok(cb)
    }

    pub fn label(&self, flicker_index: usize, fixation: Fixation) -> Result<TargetLabel> {
        if flicker_index >= self.n_flickers() {
            return invalid(format!("flicker index {flicker_index} outside codebook"));
        }
        let j = self
            .fixation_points
            .iter()
            .position(|&f| f == fixation)
            .ok_or_else(|| Error::InvalidArgument(format!("fixation '{fixation}' not active")))?;
        Ok(TargetLabel {
            flicker_index,
            fixation,
            numeric_label: flicker_index * self.fixation_points.len() + j + 1,
        })
    }

    pub fn label_from_numeric(&self, numeric_label: usize) -> Result<TargetLabel> {
        if numeric_label == 0 || numeric_label > self.n_targets() {
            return invalid(format!("numeric label {numeric_label} outside codebook"));
        }
        let idx = numeric_label - 1;
        let nf = self.fixation_points.len();
        Ok(TargetLabel {
            flicker_index: idx / nf,
            fixation: self.fixation_points[idx % nf],
            numeric_label,
        })
    }

    /// All targets ordered by numeric label.
    pub fn targets(&self) -> Vec<TargetLabel> {
        (1..=self.n_targets())
            .map(|n| self.label_from_numeric(n).expect("label in range"))
            .collect()
    }
}

/// Fixation subsets in the published combination-table order, one list per size 1..=5.
const COMBINATIONS: [&[&[Fixation]]; 5] = {
    use Fixation::*;
    [
        &[&[Right], &[Down], &[Left], &[Up], &[Center]],
        &[
            &[Right, Down],
            &[Right, Left],
            &[Right, Up],
            &[Right, Center],
            &[Down, Left],
            &[Down, Up],
            &[Down, Center],
            &[Left, Up],
            &[Left, Center],
            &[Up, Center],
        ],
        &[
            &[Left, Up, Center],
            &[Down, Up, Center],
            &[Down, Left, Center],
            &[Down, Left, Up],
            &[Right, Up, Center],
            &[Right, Left, Center],
            &[Right, Left, Up],
            &[Right, Down, Center],
            &[Right, Down, Up],
            &[Right, Down, Left],
        ],
        &[
            &[Right, Down, Left, Up],
            &[Right, Down, Left, Center],
            &[Right, Down, Up, Center],
            &[Right, Left, Up, Center],
            &[Down, Left, Up, Center],
        ],
        &[&[Right, Down, Left, Up, Center]],
    ]
};

/// All fixation subsets of the given size; element `i` carries combination label `i + 1`.
pub fn enumerate_fixation_combinations(n_points: usize) -> Result<Vec<Vec<Fixation>>> {
    if !(1..=5).contains(&n_points) {
        return invalid(format!("fixation count must be in 1..=5, got {n_points}"));
    }
    Ok(COMBINATIONS[n_points - 1].iter().map(|c| c.to_vec()).collect())
}

/// Screen luminance of a sampled-sinusoid flicker at a given frame.
pub fn luminance_at_frame(
    frame_index: u64,
    refresh_rate: f64,
    frequency: f64,
    phase: f64,
) -> Result<f64> {
    if !(refresh_rate > 0.0) {
        return invalid("refresh rate must be positive");
    }
    if refresh_rate <= 2.0 * frequency {
        return invalid(format!(
            "refresh rate {refresh_rate} Hz cannot render a {frequency} Hz flicker"
        ));
    }
    let arg = 2.0 * PI * frequency * frame_index as f64 / refresh_rate + phase;
    Ok(0.5 * (1.0 + arg.sin()))
}
