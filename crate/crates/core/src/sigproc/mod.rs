//! Epoch alignment, decimation and zero-phase filter-bank decomposition.

pub mod design;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datamodel::TrialEpoch;
use crate::error::{invalid, Error, Result};
pub use design::Sos;

/// Relative level at which an impulse response counts as settled.
const SETTLE_TOL: f64 = 1e-3;
const SETTLE_MAX: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low_edge: f64,
    pub high_edge: f64,
    #[serde(default = "default_ripple")]
    pub passband_ripple: f64,
    #[serde(default = "default_attenuation")]
    pub stopband_attenuation: f64,
}

fn default_ripple() -> f64 {
    0.1
}

fn default_attenuation() -> f64 {
    40.0
}

impl BandSpec {
    pub fn new(low_edge: f64, high_edge: f64) -> Self {
        BandSpec {
            low_edge,
            high_edge,
            passband_ripple: default_ripple(),
            stopband_attenuation: default_attenuation(),
        }
    }

    /// Stopband edges used for order selection: `max(low - 4, 0.5)` and `high + 10`
    /// (pulled halfway to Nyquist when that would cross it).
    pub fn stop_edges(&self, fs: f64) -> (f64, f64) {
        let nyq = fs / 2.0;
        let lo = (self.low_edge - 4.0).max(0.5);
        let lo = if lo >= self.low_edge { self.low_edge / 2.0 } else { lo };
        let hi = if self.high_edge + 10.0 < nyq {
            self.high_edge + 10.0
        } else {
            0.5 * (self.high_edge + nyq)
        };
        (lo, hi)
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.low_edge > 0.0 && self.low_edge < self.high_edge && self.high_edge < fs / 2.0) {
            return invalid(format!(
                "band [{}, {}] Hz invalid at fs = {fs} Hz",
                self.low_edge, self.high_edge
            ));
        }
        Ok(())
    }

    pub fn design(&self, fs: f64) -> Result<ZeroPhaseFilter> {
        self.validate(fs)?;
        let stop = self.stop_edges(fs);
        let order = design::cheb1_bandpass_order(
            (self.low_edge, self.high_edge),
            stop,
            self.passband_ripple,
            self.stopband_attenuation,
            fs,
        )?;
        let sos = design::cheby1_bandpass(order, self.passband_ripple, self.low_edge, self.high_edge, fs)?;
        Ok(ZeroPhaseFilter::new(sos))
    }
}

/// A designed recursive filter applied forward then backward.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPhaseFilter {
    pub sos: Sos,
    /// Edge padding applied on both sides before filtering.
    pub pad: usize,
}

impl ZeroPhaseFilter {
    pub fn new(sos: Sos) -> Self {
        let pad = 3 * sos.settle_length(SETTLE_TOL, SETTLE_MAX);
        ZeroPhaseFilter { sos, pad }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let mut ext = odd_extend(x, self.pad);
        let zi = self.sos.step_state();
        run_pass(&self.sos, &zi, &mut ext);
        ext.reverse();
        run_pass(&self.sos, &zi, &mut ext);
        ext.reverse();
        ext[self.pad..self.pad + x.len()].to_vec()
    }

    /// Filters every row of a channels x samples matrix.
    pub fn apply_rows(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(data.nrows(), data.ncols());
        let mut row = vec![0.0; data.ncols()];
        for r in 0..data.nrows() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = data[(r, c)];
            }
            for (c, v) in self.apply(&row).into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        out
    }
}

fn run_pass(sos: &Sos, zi: &[[f64; 2]], buf: &mut [f64]) {
    let x0 = buf[0];
    let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * x0, z[1] * x0]).collect();
    for v in buf.iter_mut() {
        *v = design::run_sample(&sos.sections, &mut state, *v);
    }
}

/// Odd (point-symmetric) extension by `pad` samples on both ends, reflecting repeatedly
/// when the signal is shorter than the pad.
pub fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    if x.len() < 2 {
        let v = x.first().copied().unwrap_or(0.0);
        return vec![v; x.len() + 2 * pad];
    }
    let mut cur = x.to_vec();
    let mut need = pad;
    while need > 0 {
        let m = need.min(cur.len() - 1);
        let first = cur[0];
        let last = *cur.last().unwrap();
        let n = cur.len();
        let mut next = Vec::with_capacity(n + 2 * m);
        next.extend((1..=m).rev().map(|i| 2.0 * first - cur[i]));
        next.extend_from_slice(&cur);
        next.extend((1..=m).map(|i| 2.0 * last - cur[n - 1 - i]));
        cur = next;
        need -= m;
    }
    cur
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub bands: Vec<BandSpec>,
}

impl Default for FilterBank {
    fn default() -> Self {
        FilterBank {
            bands: [6.0, 14.0, 22.0, 30.0, 38.0]
                .iter()
                .map(|&lo| BandSpec::new(lo, 90.0))
                .collect(),
        }
    }
}

impl FilterBank {
    pub fn single(band: BandSpec) -> Self {
        FilterBank { bands: vec![band] }
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn design(&self, fs: f64) -> Result<DesignedBank> {
        if self.bands.is_empty() {
            return invalid("filter bank needs at least one band");
        }
        Ok(DesignedBank {
            filters: self.bands.iter().map(|b| b.design(fs)).collect::<Result<_>>()?,
            sampling_rate: fs,
        })
    }
}

/// Filter bank designed for one sampling rate.
#[derive(Debug, Clone)]
pub struct DesignedBank {
    pub filters: Vec<ZeroPhaseFilter>,
    pub sampling_rate: f64,
}

impl DesignedBank {
    pub fn decompose(&self, data: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        self.filters.iter().map(|f| f.apply_rows(data)).collect()
    }
}

/// Cuts `[trigger + round(latency*fs), + round(duration*fs) + tail)` out of a recording.
pub fn extract_epoch(
    raw_block: &TrialEpoch,
    trigger_sample: usize,
    latency_s: f64,
    duration_s: f64,
    tail_samples: usize,
) -> Result<TrialEpoch> {
    if !(latency_s >= 0.0) || !(duration_s > 0.0) {
        return invalid("latency must be >= 0 and duration > 0");
    }
    let fs = raw_block.sampling_rate;
    let start = trigger_sample + (latency_s * fs).round() as usize;
    let len = (duration_s * fs).round() as usize + tail_samples;
    if start + len > raw_block.n_samples() {
        return Err(Error::OutOfBounds(format!(
            "window [{start}, {}) exceeds {}-sample recording",
            start + len,
            raw_block.n_samples()
        )));
    }
    let data = raw_block.data.columns(start, len).into_owned();
    Ok(raw_block.with_data(data, fs))
}

/// Keeps every `factor`-th sample starting at 0, optionally after a zero-phase
/// Chebyshev-I low-pass at `0.45 * fs / factor`.
pub fn decimate(epoch: &TrialEpoch, factor: usize, antialias: bool) -> Result<TrialEpoch> {
    if factor == 0 {
        return invalid("decimation factor must be >= 1");
    }
    if factor == 1 {
        return Ok(epoch.clone());
    }
    let fs_new = epoch.sampling_rate / factor as f64;
    let filtered;
    let src = if antialias {
        let sos = design::cheby1_lowpass(8, 0.05, 0.45 * fs_new, epoch.sampling_rate)?;
        filtered = ZeroPhaseFilter::new(sos).apply_rows(&epoch.data);
        &filtered
    } else {
        &epoch.data
    };
    let n_out = src.ncols().div_ceil(factor);
    let data = DMatrix::from_fn(src.nrows(), n_out, |r, c| src[(r, c * factor)]);
    Ok(epoch.with_data(data, fs_new))
}

/// Integer decimation factor between two rates.
pub fn decimation_factor(from: f64, to: f64) -> Result<usize> {
    let ratio = from / to;
    let factor = ratio.round();
    if !(factor >= 1.0) || (ratio - factor).abs() > 1e-9 {
        return invalid(format!("{from} Hz cannot be decimated to {to} Hz by an integer factor"));
    }
    Ok(factor as usize)
}

pub fn bandpass_zero_phase(epoch: &TrialEpoch, band: &BandSpec) -> Result<TrialEpoch> {
    let filter = band.design(epoch.sampling_rate)?;
    Ok(epoch.with_data(filter.apply_rows(&epoch.data), epoch.sampling_rate))
}

pub fn filter_bank_decompose(epoch: &TrialEpoch, bank: &FilterBank) -> Result<Vec<TrialEpoch>> {
    let designed = bank.design(epoch.sampling_rate)?;
    Ok(designed
        .decompose(&epoch.data)
        .into_iter()
        .map(|d| epoch.with_data(d, epoch.sampling_rate))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Fixation, TargetLabel};
    use std::f64::consts::PI;

    fn epoch(data: DMatrix<f64>, fs: f64) -> TrialEpoch {
        TrialEpoch {
            data,
            sampling_rate: fs,
            label: TargetLabel {
                flicker_index: 0,
                fixation: Fixation::Center,
                numeric_label: 1,
            },
            block: 0,
        }
    }

    fn sine(f: f64, fs: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs + phase).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn extract_applies_latency() {
        let data = DMatrix::from_fn(2, 10_000, |r, c| (r * 100_000 + c) as f64);
        let e = extract_epoch(&epoch(data, 1000.0), 5000, 0.14, 0.5, 0).unwrap();
        assert_eq!(e.n_samples(), 500);
        assert_eq!(e.data[(0, 0)], 5140.0);
        assert_eq!(e.data[(1, 499)], 100_000.0 + 5639.0);
        let tail = extract_epoch(&epoch(DMatrix::zeros(1, 700), 1000.0), 0, 0.14, 0.5, 16).unwrap();
        assert_eq!(tail.n_samples(), 516);
    }

    #[test]
    fn extract_whole_block_and_overflow() {
        let data = DMatrix::from_fn(1, 250, |_, c| c as f64);
        let raw = epoch(data.clone(), 250.0);
        assert_eq!(extract_epoch(&raw, 0, 0.0, 1.0, 0).unwrap().data, data);
        assert!(matches!(extract_epoch(&raw, 10, 0.0, 1.0, 0), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn decimate_shapes() {
        let e = epoch(DMatrix::from_fn(1, 517, |_, c| c as f64), 1000.0);
        let d = decimate(&e, 4, false).unwrap();
        assert_eq!(d.sampling_rate, 250.0);
        assert_eq!(d.n_samples(), 130);
        assert_eq!(d.data[(0, 1)], 4.0);
        assert_eq!(decimate(&e, 1, true).unwrap(), e);
        assert!(decimate(&e, 0, true).is_err());
        assert_eq!(decimation_factor(1000.0, 250.0).unwrap(), 4);
        assert!(decimation_factor(1000.0, 300.0).is_err());
    }

    #[test]
    fn decimated_sinusoid_keeps_amplitude() {
        let n = 2000;
        let x = sine(10.0, 1000.0, n, 0.3);
        let e = epoch(DMatrix::from_row_slice(1, n, &x), 1000.0);
        let d = decimate(&e, 4, true).unwrap();
        let expect = sine(10.0, 250.0, n / 4, 0.3);
        let got: Vec<f64> = d.data.row(0).iter().copied().collect();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 0.02, "{g} vs {e}");
        }
        let plain = decimate(&e, 4, false).unwrap();
        let diff: Vec<f64> = got.iter().zip(plain.data.row(0).iter()).map(|(a, b)| a - b).collect();
        assert!(rms(&diff) < 0.02 * rms(&got));
    }

    #[test]
    fn passband_probe_is_preserved_without_lag() {
        let fs = 250.0;
        let n = 1000;
        let x = sine(14.0, fs, n, 0.0);
        let f = BandSpec::new(6.0, 90.0).design(fs).unwrap();
        let y = f.apply(&x);
        let mid = 200..800;
        let ratio = rms(&y[mid.clone()]) / rms(&x[mid.clone()]);
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
        let lag = (-10i64..=10)
            .max_by(|&a, &b| {
                let cc = |l: i64| -> f64 {
                    mid.clone().map(|i| x[i] * y[(i as i64 + l) as usize]).sum()
                };
                cc(a).partial_cmp(&cc(b)).unwrap()
            })
            .unwrap();
        assert_eq!(lag, 0);
    }

    #[test]
    fn stopband_probe_is_rejected() {
        let fs = 250.0;
        let x = sine(2.0, fs, 1000, 0.0);
        let y = BandSpec::new(6.0, 90.0).design(fs).unwrap().apply(&x);
        assert!(rms(&y) < 0.1 * rms(&x));
        assert!(20.0 * (rms(&y) / rms(&x)).log10() <= -20.0);
    }

    #[test]
    fn zero_in_zero_out() {
        let f = BandSpec::new(6.0, 90.0).design(250.0).unwrap();
        assert!(f.apply(&vec![0.0; 125]).iter().all(|&v| v == 0.0));
        assert!(f.apply(&[]).is_empty());
    }

    #[test]
    fn symmetric_pulse_gives_symmetric_output() {
        let n = 301;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 - 150.0;
                (-t * t / 18.0).exp()
            })
            .collect();
        let y = BandSpec::new(6.0, 90.0).design(250.0).unwrap().apply(&x);
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let asym = (0..n).map(|i| (y[i] - y[n - 1 - i]).abs()).fold(0.0, f64::max);
        assert!(asym <= 1e-6 * peak, "{asym} vs {peak}");
    }

    #[test]
    fn band_edges_at_nyquist_are_rejected() {
        let e = epoch(DMatrix::zeros(1, 10), 250.0);
        assert!(bandpass_zero_phase(&e, &BandSpec::new(6.0, 125.0)).is_err());
        assert!(bandpass_zero_phase(&e, &BandSpec::new(0.0, 90.0)).is_err());
    }

    #[test]
    fn default_bank_splits_into_five() {
        let fs = 250.0;
        let x = sine(14.0, fs, 500, 0.0);
        let e = epoch(DMatrix::from_row_slice(1, 500, &x), fs);
        let bands = filter_bank_decompose(&e, &FilterBank::default()).unwrap();
        assert_eq!(bands.len(), 5);
        assert!(bands.iter().all(|b| b.data.shape() == (1, 500)));
        let r = |b: &TrialEpoch| rms(&b.data.row(0).iter().skip(100).take(300).copied().collect::<Vec<_>>());
        let base = rms(&x[100..400]);
        assert!(r(&bands[0]) > 0.9 * base);
        assert!(20.0 * (r(&bands[2]) / base).log10() < -20.0);

        let one = filter_bank_decompose(&e, &FilterBank::single(BandSpec::new(6.0, 90.0))).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], bandpass_zero_phase(&e, &BandSpec::new(6.0, 90.0)).unwrap());
    }

    #[test]
    fn odd_extension_reflects_repeatedly() {
        let x = [1.0, 2.0, 4.0];
        let e = odd_extend(&x, 2);
        assert_eq!(e, vec![-2.0, 0.0, 1.0, 2.0, 4.0, 6.0, 7.0]);
        let long = odd_extend(&x, 5);
        assert_eq!(long.len(), 13);
        assert_eq!(&long[5..8], &x);
    }
}
