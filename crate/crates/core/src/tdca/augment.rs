//! Delay embedding, sine-cosine references and the reference-subspace projection.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

/// Stacks `[X; X_1; ...; X_l]` where `X_j` holds columns `j..j + window` of `x`.
/// Columns past the end of `x` are zero.
pub fn delay_embed(x: &DMatrix<f64>, window: usize, delay_order: usize) -> DMatrix<f64> {
    let n_ch = x.nrows();
    let avail = x.ncols();
    let mut out = DMatrix::zeros((delay_order + 1) * n_ch, window);
    for j in 0..=delay_order {
        let n = window.min(avail.saturating_sub(j));
        if n > 0 {
            out.view_mut((j * n_ch, 0), (n_ch, n))
                .copy_from(&x.view((0, j), (n_ch, n)));
        }
    }
    out
}

/// Rows `sin(2π h f t)`, `cos(2π h f t)` for `h = 1..=n_harmonics`, `t = i / fs`.
pub fn sincos_reference(frequency: f64, n_harmonics: usize, sampling_rate: f64, n_samples: usize) -> Result<DMatrix<f64>> {
    if n_harmonics == 0 {
        return invalid("need at least one harmonic");
    }
    if !(frequency > 0.0) || n_harmonics as f64 * frequency >= sampling_rate / 2.0 {
        return invalid(format!(
            "harmonic {n_harmonics} of {frequency} Hz is not below Nyquist at {sampling_rate} Hz"
        ));
    }
    Ok(DMatrix::from_fn(2 * n_harmonics, n_samples, |r, c| {
        let h = (r / 2 + 1) as f64;
        let arg = 2.0 * PI * h * frequency * c as f64 / sampling_rate;
        if r % 2 == 0 {
            arg.sin()
        } else {
            arg.cos()
        }
    }))
}

/// Orthogonal projector onto the row space of a reference matrix, held as an
/// orthonormal basis `Q` so that `P = Q Qᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProjector {
    basis: DMatrix<f64>,
}

impl ReferenceProjector {
    /// Rank is decided by singular values above `1e-10 * σ_max`, so references with more
    /// rows than samples still yield a valid projector.
    pub fn from_reference(y: &DMatrix<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return invalid("reference contains non-finite values");
        }
        let svd = y.transpose().svd(true, false);
        let u = svd.u.ok_or_else(|| Error::NumericalFailure("SVD of reference failed".into()))?;
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(Error::NumericalFailure("reference matrix is zero".into()));
        }
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 1e-10 * smax)
            .map(|(i, _)| i)
            .collect();
        Ok(ReferenceProjector {
            basis: u.select_columns(&keep),
        })
    }

    pub fn for_frequency(frequency: f64, n_harmonics: usize, fs: f64, n_samples: usize) -> Result<Self> {
        Self::from_reference(&sincos_reference(frequency, n_harmonics, fs, n_samples)?)
    }

    pub fn n_samples(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Dense `P = Yᵀ(YYᵀ)⁻¹Y`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `x P` for `x` with `n_samples` columns.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        (x * &self.basis) * self.basis.transpose()
    }
}

/// `[X̃, X̃ P]`.
pub fn project_augment(x_tilde: &DMatrix<f64>, projector: &ReferenceProjector) -> Result<DMatrix<f64>> {
    let np = x_tilde.ncols();
    if projector.n_samples() != np {
        return invalid(format!(
            "projector built for {} samples, data has {np}",
            projector.n_samples()
        ));
    }
    let mut out = DMatrix::zeros(x_tilde.nrows(), 2 * np);
    out.columns_mut(0, np).copy_from(x_tilde);
    out.columns_mut(np, np).copy_from(&projector.apply(x_tilde));
    Ok(out)
}

/// Mean of each class's trials.
pub fn class_templates(trials_per_class: &[Vec<DMatrix<f64>>]) -> Result<Vec<DMatrix<f64>>> {
    trials_per_class
        .iter()
        .enumerate()
        .map(|(n, trials)| {
            let first = trials
                .first()
                .ok_or_else(|| Error::InvalidArgument(format!("class {n} has no trials")))?;
            let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
            for t in trials {
                if t.shape() != first.shape() {
                    return invalid(format!("class {n} has trials of different shapes"));
                }
                acc += t;
            }
            Ok(acc / trials.len() as f64)
        })
        .collect()
}
