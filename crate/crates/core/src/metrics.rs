//! Information transfer rate, spectral SNR, amplitude/phase spectra and channel correlation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sigproc::BandSpec;
use crate::tdca::{SubbandTrial, TdcaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItrUnit {
    BitsPerMinute,
    BitsPerSecond,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Itr {
    pub value: f64,
    /// Set when accuracy is below chance and the value may be negative.
    pub below_chance: bool,
}

fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Bits per selection for `n` targets at accuracy `p`.
pub fn bits_per_selection(n: usize, p: f64) -> Result<f64> {
    if n < 2 {
        return invalid("ITR needs at least two targets");
    }
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("accuracy {p} outside [0, 1]"));
    }
    let q = 1.0 - p;
    let wrong = if q > 0.0 { q * (q / (n as f64 - 1.0)).log2() } else { 0.0 };
    Ok((n as f64).log2() + xlog2x(p) + wrong)
}

/// Information transfer rate with `seconds` per selection.
pub fn itr(n: usize, p: f64, seconds: f64, unit: ItrUnit) -> Result<Itr> {
    if !(seconds > 0.0) {
        return invalid("selection time must be positive");
    }
    let bits = bits_per_selection(n, p)?;
    let value = match unit {
        ItrUnit::BitsPerMinute => bits * 60.0 / seconds,
        ItrUnit::BitsPerSecond => bits / seconds,
    };
    let below_chance = p < 1.0 / n as f64;
    if below_chance {
        log::warn!("accuracy {p} is below chance for {n} targets; ITR {value}");
    }
    Ok(Itr { value, below_chance })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub db: f64,
    /// Neighbouring bins sum to zero; `db` is `+inf`.
    pub noise_free: bool,
}

/// Neumaier summation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// `20·log10(2k·y(f) / Σ_{j=1..k}(y(f-jΔf) + y(f+jΔf)))` on an amplitude spectrum
/// whose bin `i` sits at `i·Δf`. `f` must fall on a bin centre.
pub fn snr_at_frequency(amplitude: &[f64], frequency: f64, bin_width: f64, n_neighbors: usize) -> Result<Snr> {
    if !(bin_width > 0.0) || n_neighbors == 0 {
        return invalid("bin width and neighbour count must be positive");
    }
    let pos = frequency / bin_width;
    let bin = pos.round();
    if (pos - bin).abs() > 1e-6 || bin < 0.0 {
        return invalid(format!("{frequency} Hz is not on a {bin_width} Hz bin centre"));
    }
    let bin = bin as usize;
    if bin < n_neighbors || bin + n_neighbors >= amplitude.len() {
        return invalid(format!("neighbours of {frequency} Hz fall outside the spectrum"));
    }
    let noise = compensated_sum((1..=n_neighbors).flat_map(|k| [amplitude[bin - k], amplitude[bin + k]]));
    let signal = 2.0 * n_neighbors as f64 * amplitude[bin];
    if noise <= 0.0 {
        return Ok(Snr {
            db: f64::INFINITY,
            noise_free: true,
        });
    }
    Ok(Snr {
        db: 20.0 * (signal / noise).log10(),
        noise_free: false,
    })
}

/// Full-length DFT per channel, amplitude scaled by `2/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// `channels x N`.
    pub amplitude: DMatrix<f64>,
    pub phase: DMatrix<f64>,
    pub bin_width: f64,
}

impl SpectrumResult {
    pub fn n_bins(&self) -> usize {
        self.amplitude.ncols()
    }

    pub fn bin_of(&self, frequency: f64) -> Option<usize> {
        let pos = frequency / self.bin_width;
        let bin = pos.round();
        ((pos - bin).abs() < 1e-6 && bin >= 0.0 && (bin as usize) < self.n_bins()).then_some(bin as usize)
    }

    pub fn channel_amplitude(&self, ch: usize) -> Vec<f64> {
        self.amplitude.row(ch).iter().copied().collect()
    }

    pub fn snr(&self, ch: usize, frequency: f64, n_neighbors: usize) -> Result<Snr> {
        snr_at_frequency(&self.channel_amplitude(ch), frequency, self.bin_width, n_neighbors)
    }
}

/// Spectrum of the first `window` samples of each row.
pub fn spectrum(data: &DMatrix<f64>, sampling_rate: f64, window: usize) -> Result<SpectrumResult> {
    if window == 0 || window > data.ncols() {
        return invalid(format!("window {window} exceeds epoch length {}", data.ncols()));
    }
    if !(sampling_rate > 0.0) {
        return invalid("sampling rate must be positive");
    }
    let fft = FftPlanner::new().plan_fft_forward(window);
    let rows: Vec<Vec<Complex<f64>>> = (0..data.nrows())
        .into_par_iter()
        .map(|r| {
            let mut buf: Vec<Complex<f64>> = (0..window).map(|c| Complex::new(data[(r, c)], 0.0)).collect();
            fft.process(&mut buf);
            buf
        })
        .collect();
    let scale = 2.0 / window as f64;
    Ok(SpectrumResult {
        amplitude: DMatrix::from_fn(data.nrows(), window, |r, c| rows[r][c].norm() * scale),
        phase: DMatrix::from_fn(data.nrows(), window, |r, c| rows[r][c].arg()),
        bin_width: sampling_rate / window as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCorrelation {
    pub matrix: DMatrix<f64>,
    /// Channels with zero variance; their off-diagonal entries are zero.
    pub constant_channels: Vec<usize>,
}

/// Pairwise Pearson correlation between the rows of `data`.
pub fn correlation_matrix(data: &DMatrix<f64>) -> Result<ChannelCorrelation> {
    let (n_ch, n) = data.shape();
    if n < 2 {
        return invalid("correlation needs at least two samples per channel");
    }
    let mut centered = data.clone();
    let mut norms = vec![0.0; n_ch];
    let mut constant = Vec::new();
    for (r, norm) in norms.iter_mut().enumerate() {
        let mut row = centered.row_mut(r);
        let m = row.mean();
        row.add_scalar_mut(-m);
        *norm = row.norm();
        if *norm <= 0.0 {
            constant.push(r);
        }
    }
    let gram = &centered * centered.transpose();
    let matrix = DMatrix::from_fn(n_ch, n_ch, |i, j| {
        if i == j {
            1.0
        } else if norms[i] <= 0.0 || norms[j] <= 0.0 {
            0.0
        } else {
            (gram[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    });
    Ok(ChannelCorrelation {
        matrix,
        constant_channels: constant,
    })
}

/// Correlation over trials band-passed with `band` and concatenated in time.
pub fn channel_correlation(trials: &[DMatrix<f64>], sampling_rate: f64, band: &BandSpec) -> Result<ChannelCorrelation> {
    let first = trials.first().ok_or_else(|| Error::InvalidArgument("no trials".into()))?;
    let n_ch = first.nrows();
    if trials.iter().any(|t| t.nrows() != n_ch) {
        return invalid("trials differ in channel count");
    }
    let filter = band.design(sampling_rate)?;
    let filtered: Vec<DMatrix<f64>> = trials.par_iter().map(|t| filter.apply_rows(t)).collect();
    let total: usize = filtered.iter().map(|t| t.ncols()).sum();
    let mut joined = DMatrix::zeros(n_ch, total);
    let mut at = 0;
    for t in &filtered {
        joined.columns_mut(at, t.ncols()).copy_from(t);
        at += t.ncols();
    }
    correlation_matrix(&joined)
}

/// `(2/N)·Σ x[n]·e^{-i2πfn/fs}`, the DFT evaluated at an arbitrary frequency.
pub fn dft_at(x: &[f64], frequency: f64, sampling_rate: f64) -> Complex<f64> {
    let w = -2.0 * PI * frequency / sampling_rate;
    let sum: Complex<f64> = x
        .iter()
        .enumerate()
        .map(|(n, &v)| Complex::from_polar(v, w * n as f64))
        .sum();
    sum * (2.0 / x.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFeature {
    pub numeric_label: usize,
    pub value: Complex<f64>,
}

impl SpectralFeature {
    pub fn amplitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn phase(&self) -> f64 {
        self.value.arg()
    }
}

/// Projects each trial on the leading filter of sub-band `band` (0-based) and reads the
/// complex spectrum at the trial's flicker fundamental.
pub fn complex_spectrum_features(model: &TdcaModel, trials: &[SubbandTrial], band: usize) -> Result<Vec<SpectralFeature>> {
    let bm = model
        .bands
        .get(band)
        .ok_or_else(|| Error::InvalidArgument(format!("model has no sub-band {band}")))?;
    let w = bm.filter.column(0);
    trials
        .iter()
        .map(|t| {
            let class = model
                .class_index(&t.label)
                .ok_or_else(|| Error::InvalidArgument(format!("label {} unknown to model", t.label.numeric_label)))?;
            let x = t
                .bands
                .get(band)
                .ok_or_else(|| Error::InvalidArgument("trial lacks the requested sub-band".into()))?;
            if x.nrows() != model.n_channels {
                return invalid("trial channel count differs from model");
            }
            let embedded = model.embed_test(x, model.window);
            let z: Vec<f64> = (embedded.transpose() * w).iter().copied().collect();
            Ok(SpectralFeature {
                numeric_label: t.label.numeric_label,
                value: dft_at(&z, model.classes[class].frequency, model.sampling_rate),
            })
        })
        .collect()
}
