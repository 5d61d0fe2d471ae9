//! Seeded synthetic SSVEP generator.
//!
//! Each channel receives a harmonic series at the flicker frequency, scaled by a Gaussian
//! spatial gain centred on a fixation-specific scalp position and shifted by a
//! fixation-specific phase that also drifts with distance from that centre. White and
//! pink noise are added on top. All randomness derives from one seed, with an
//! independent ChaCha stream per trial.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Block, Channel, Dataset, Fixation, Montage, RecordedTrial, StimulusCodebook, TargetLabel, TrialEpoch};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationProfile {
    pub fixation: Fixation,
    /// Gain centre on montage coordinates.
    pub center: [f64; 2],
    pub width: f64,
    /// Phase offset of the fundamental in radians; harmonic `h` uses `h` times this.
    pub phase: f64,
}

fn default_profiles() -> Vec<FixationProfile> {
    let at = |fixation, x, y, j: f64| FixationProfile {
        fixation,
        center: [x, y],
        width: 0.4,
        phase: j * 2.0 * PI / 5.0,
    };
    vec![
        at(Fixation::Right, 0.5, 0.0, 0.0),
        at(Fixation::Down, 0.0, -0.5, 1.0),
        at(Fixation::Left, -0.5, 0.0, 2.0),
        at(Fixation::Up, 0.0, 0.5, 3.0),
        at(Fixation::Center, 0.0, 0.0, 4.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardModelConfig {
    pub subject_id: String,
    /// `A_1`; harmonic `h` gets `A_1 / h` unless `harmonic_amplitudes` is set.
    pub fundamental_amplitude: f64,
    pub n_harmonics: usize,
    pub harmonic_amplitudes: Option<Vec<f64>>,
    pub profiles: Vec<FixationProfile>,
    /// Use the centre-fixation gain and phase for every fixation.
    pub identical_profiles: bool,
    /// Phase drift in radians per unit distance from the gain centre, per harmonic order.
    pub phase_gradient: f64,
    pub latency: f64,
    pub white_noise: f64,
    pub pink_noise: f64,
    pub seed: u64,
    pub sampling_rate: f64,
    /// Recorded seconds before the trigger.
    pub pre_trigger: f64,
    /// Recorded seconds from the trigger on.
    pub post_trigger: f64,
}

impl Default for ForwardModelConfig {
    fn default() -> Self {
        ForwardModelConfig {
            subject_id: "sim01".into(),
            fundamental_amplitude: 1.0,
            n_harmonics: 5,
            harmonic_amplitudes: None,
            profiles: default_profiles(),
            identical_profiles: false,
            phase_gradient: 1.0,
            latency: 0.14,
            white_noise: 1.0,
            pink_noise: 0.0,
            seed: 0,
            sampling_rate: 1000.0,
            pre_trigger: 0.1,
            post_trigger: 0.8,
        }
    }
}

impl ForwardModelConfig {
    pub fn validate(&self) -> Result<()> {
        let amps = self.amplitudes();
        if amps.iter().any(|a| !(*a >= 0.0)) {
            return invalid("harmonic amplitudes must be >= 0");
        }
        if self.profiles.iter().any(|p| !(p.width > 0.0)) {
            return invalid("gain widths must be positive");
        }
        if !(self.white_noise >= 0.0 && self.pink_noise >= 0.0) {
            return invalid("noise levels must be >= 0");
        }
        if !(self.sampling_rate > 0.0) || !(self.post_trigger > 0.0) || !(self.pre_trigger >= 0.0) {
            return invalid("sampling rate and trial duration must be positive");
        }
        if !(self.latency >= 0.0) {
            return invalid("latency must be >= 0");
        }
        Ok(())
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        match &self.harmonic_amplitudes {
            Some(a) => a.clone(),
            None => (1..=self.n_harmonics)
                .map(|h| self.fundamental_amplitude / h as f64)
                .collect(),
        }
    }

    pub fn profile(&self, fixation: Fixation) -> Result<FixationProfile> {
        let want = if self.identical_profiles { Fixation::Center } else { fixation };
        self.profiles
            .iter()
            .find(|p| p.fixation == want)
            .copied()
            .ok_or_else(|| crate::Error::InvalidArgument(format!("no gain profile for fixation '{want}'")))
    }

    /// Gain of each channel for a fixation.
    pub fn gains(&self, channels: &[Channel], fixation: Fixation) -> Result<Vec<f64>> {
        let p = self.profile(fixation)?;
        Ok(channels
            .iter()
            .map(|c| {
                let d2 = (c.x - p.center[0]).powi(2) + (c.y - p.center[1]).powi(2);
                (-d2 / (2.0 * p.width * p.width)).exp()
            })
            .collect())
    }

    /// Phase offset `ψ` of harmonic `h` on each channel.
    pub fn phase_offsets(&self, channels: &[Channel], fixation: Fixation, h: usize) -> Result<Vec<f64>> {
        let p = self.profile(fixation)?;
        let hf = h as f64;
        Ok(channels
            .iter()
            .map(|c| {
                let d = ((c.x - p.center[0]).powi(2) + (c.y - p.center[1]).powi(2)).sqrt();
                hf * p.phase + self.phase_gradient * hf * d
            })
            .collect())
    }
}

/// Pink noise with unit expected variance: white noise shaped by a `1/√f` mask.
fn pink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.sample(StandardNormal), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let mask: Vec<f64> = (0..n)
        .map(|k| {
            let k = k.min(n - k);
            if k == 0 {
                0.0
            } else {
                1.0 / (k as f64).sqrt()
            }
        })
        .collect();
    for (b, m) in buf.iter_mut().zip(&mask) {
        *b *= *m;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let rms = (mask.iter().map(|m| m * m).sum::<f64>() / n as f64).sqrt();
    buf.iter().map(|c| c.re / (n as f64 * rms)).collect()
}

fn check_label(codebook: &StimulusCodebook, label: &TargetLabel) -> Result<()> {
    match codebook.label(label.flicker_index, label.fixation) {
        Ok(l) if l == *label => Ok(()),
        _ => invalid(format!("target {} is not in the codebook", label.numeric_label)),
    }
}

/// Renders `n` samples where sample `onset` is the trigger. Values are rounded to `f32`
/// precision so datasets survive the on-disk format unchanged.
#[allow(clippy::too_many_arguments)]
fn render(
    config: &ForwardModelConfig,
    channels: &[Channel],
    codebook: &StimulusCodebook,
    label: &TargetLabel,
    n: usize,
    fs: f64,
    onset: usize,
    stream: u64,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    check_label(codebook, label)?;
    let f = codebook.frequency(label.flicker_index);
    let phi = codebook.phase(label.flicker_index);
    let gains = config.gains(channels, label.fixation)?;
    let amps = config.amplitudes();
    let psis: Vec<Vec<f64>> = (1..=amps.len())
        .map(|h| config.phase_offsets(channels, label.fixation, h))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut out = DMatrix::zeros(channels.len(), n);
    for ch in 0..channels.len() {
        let white: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let pink = if config.pink_noise > 0.0 { pink(&mut rng, n) } else { vec![0.0; n] };
        for i in 0..n {
            let t = (i as f64 - onset as f64) / fs;
            let mut v = config.white_noise * white[i] + config.pink_noise * pink[i];
            if t >= config.latency {
                let tau = t - config.latency;
                for (h0, a) in amps.iter().enumerate() {
                    let h = (h0 + 1) as f64;
                    v += a * gains[ch] * (2.0 * PI * h * f * tau + h * phi + psis[h0][ch]).sin();
                }
            }
            out[(ch, i)] = v as f32 as f64;
        }
    }
    Ok(out)
}

/// One trial starting at the trigger, `duration` seconds at `fs`. `stream` selects the
/// noise stream under the configured seed.
pub fn synthesize_trial(
    config: &ForwardModelConfig,
    channels: &[Channel],
    codebook: &StimulusCodebook,
    label: TargetLabel,
    duration: f64,
    fs: f64,
    stream: u64,
) -> Result<TrialEpoch> {
    if !(duration > 0.0) || !(fs > 0.0) {
        return invalid("duration and sampling rate must be positive");
    }
    let n = (duration * fs).round() as usize;
    Ok(TrialEpoch {
        data: render(config, channels, codebook, &label, n, fs, 0, stream)?,
        sampling_rate: fs,
        label,
        block: 0,
    })
}

/// `n_blocks` blocks, each visiting every target once in seeded-random order.
pub fn synthesize_dataset(
    config: &ForwardModelConfig,
    montage: &Montage,
    codebook: &StimulusCodebook,
    n_blocks: usize,
) -> Result<Dataset> {
    config.validate()?;
    codebook.validate()?;
    if n_blocks == 0 {
        return invalid("n_blocks must be >= 1");
    }
    let fs = config.sampling_rate;
    let onset = (config.pre_trigger * fs).round() as usize;
    let n = onset + (config.post_trigger * fs).round() as usize;
    let targets = codebook.targets();
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let orders: Vec<Vec<TargetLabel>> = (0..n_blocks)
        .map(|_| {
            let mut t = targets.clone();
            t.shuffle(&mut order_rng);
            t
        })
        .collect();
    let blocks = orders
        .iter()
        .enumerate()
        .map(|(b, order)| {
            let trials = order
                .par_iter()
                .enumerate()
                .map(|(pos, label)| {
                    let stream = 1 + (b * targets.len() + pos) as u64;
                    let data = render(config, &montage.channels, codebook, label, n, fs, onset, stream)?;
                    Ok(RecordedTrial {
                        epoch: TrialEpoch {
                            data,
                            sampling_rate: fs,
                            label: *label,
                            block: b,
                        },
                        trigger: onset,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Block { index: b, trials })
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset {
        subject_id: config.subject_id.clone(),
        montage: montage.clone(),
        codebook: codebook.clone(),
        blocks,
        raw_sampling_rate: fs,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::spectrum;

    fn quiet() -> ForwardModelConfig {
        ForwardModelConfig {
            white_noise: 0.0,
            ..Default::default()
        }
    }

    fn wrap(a: f64) -> f64 {
        (a + PI).rem_euclid(2.0 * PI) - PI
    }

    #[test]
    fn noise_free_peak_at_flicker_frequency() {
        let m = Montage::parieto_occipital();
        let cb = StimulusCodebook::default();
        let label = cb.label(30, Fixation::Center).unwrap();
        assert_eq!(cb.frequency(30), 14.0);
        let cfg = ForwardModelConfig { n_harmonics: 1, ..quiet() };
        let e = synthesize_trial(&cfg, &m.channels, &cb, label, 0.64, 250.0, 0).unwrap();
        let data = e.data.columns(35, 125).into_owned();
        let sp = spectrum(&data, 250.0, 125).unwrap();
        for ch in 0..m.len() {
            let amp = sp.channel_amplitude(ch);
            let peak = (0..63).max_by(|&a, &b| amp[a].total_cmp(&amp[b])).unwrap();
            assert_eq!(peak, 7, "channel {ch}");
        }
    }

    #[test]
    fn phase_follows_stimulus_and_offsets() {
        let m = Montage::parieto_occipital();
        let cb = StimulusCodebook::default();
        let cfg = ForwardModelConfig { n_harmonics: 1, ..quiet() };
        for fix in [Fixation::Right, Fixation::Up] {
            let label = cb.label(30, fix).unwrap();
            let e = synthesize_trial(&cfg, &m.channels, &cb, label, 0.8, 250.0, 0).unwrap();
            let psi = cfg.phase_offsets(&m.channels, fix, 1).unwrap();
            let gains = cfg.gains(&m.channels, fix).unwrap();
            // windows starting at the latency and 10 samples after it
            for start in [35usize, 45] {
                let sp = spectrum(&e.data.columns(start, 125).into_owned(), 250.0, 125).unwrap();
                let lag = (start as f64 / 250.0) - cfg.latency;
                for ch in 0..m.len() {
                    if gains[ch] < 1e-3 {
                        continue;
                    }
                    let expect = cb.phase(30) + psi[ch] - PI / 2.0 + 2.0 * PI * 14.0 * lag;
                    // f32 storage bounds the phase error by roughly 1e-7 / gain
                    assert!(wrap(sp.phase[(ch, 7)] - expect).abs() < 1e-6 / gains[ch], "{fix} ch {ch}");
                }
            }
        }
    }

    #[test]
    fn zero_before_latency() {
        let m = Montage::parieto_occipital();
        let cb = StimulusCodebook::default();
        let e = synthesize_trial(&quiet(), &m.channels, &cb, cb.label(0, Fixation::Up).unwrap(), 0.3, 1000.0, 0).unwrap();
        assert!(e.data.columns(0, 140).iter().all(|&v| v == 0.0));
        assert!(e.data.columns(141, 10).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn lateralized_profiles_differ() {
        let m = Montage::parieto_occipital();
        let cfg = ForwardModelConfig::default();
        let r = cfg.gains(&m.channels, Fixation::Right).unwrap();
        let l = cfg.gains(&m.channels, Fixation::Left).unwrap();
        assert!(crate::tdca::pearson(&r, &l) < 1.0 - 1e-3);
        let right_side: f64 = m.channels.iter().zip(&r).filter(|(c, _)| c.x > 0.0).map(|(_, g)| g).sum();
        let left_side: f64 = m.channels.iter().zip(&r).filter(|(c, _)| c.x < 0.0).map(|(_, g)| g).sum();
        assert!(right_side > 2.0 * left_side);
        let same = ForwardModelConfig { identical_profiles: true, ..cfg };
        assert_eq!(same.gains(&m.channels, Fixation::Right).unwrap(), same.gains(&m.channels, Fixation::Left).unwrap());
    }

    #[test]
    fn pink_noise_has_unit_variance_and_falling_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1 << 14;
        let reps = 40;
        let var = (0..reps)
            .map(|_| pink(&mut rng, n).iter().map(|v| v * v).sum::<f64>() / n as f64)
            .sum::<f64>()
            / reps as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        let x = pink(&mut rng, n);
        let sp = spectrum(&DMatrix::from_row_slice(1, n, &x), 1000.0, n).unwrap();
        let band = |lo: usize, hi: usize| (lo..hi).map(|k| sp.amplitude[(0, k)].powi(2)).sum::<f64>() / (hi - lo) as f64;
        assert!(band(10, 100) > 5.0 * band(1000, 1090));
    }

    #[test]
    fn dataset_blocks_and_determinism() {
        let m = Montage::parieto_occipital().restrict(&[0, 1, 2]).unwrap();
        let cb = StimulusCodebook::default().with_fixations(&[Fixation::Center]).unwrap();
        let cfg = ForwardModelConfig { post_trigger: 0.2, seed: 4, ..Default::default() };
        let a = synthesize_dataset(&cfg, &m, &cb, 2).unwrap();
        assert_eq!(a.n_trials(), 80);
        let b = synthesize_dataset(&cfg, &m, &cb, 2).unwrap();
        assert_eq!(a, b);
        let orders: Vec<Vec<usize>> = a.blocks.iter().map(|b| b.trials.iter().map(|t| t.epoch.label.numeric_label).collect()).collect();
        assert_ne!(orders[0], orders[1]);
        let other = synthesize_dataset(&ForwardModelConfig { seed: 5, ..cfg.clone() }, &m, &cb, 2).unwrap();
        assert_ne!(a, other);
        assert!(synthesize_dataset(&cfg, &m, &cb, 0).is_err());
    }

    #[test]
    fn rejects_foreign_targets() {
        let m = Montage::parieto_occipital();
        let cb = StimulusCodebook::default().with_fixations(&[Fixation::Center]).unwrap();
        let foreign = TargetLabel { flicker_index: 0, fixation: Fixation::Up, numeric_label: 1 };
        assert!(synthesize_trial(&quiet(), &m.channels, &cb, foreign, 0.5, 250.0, 0).is_err());
        let bad = ForwardModelConfig { profiles: vec![FixationProfile { width: 0.0, ..default_profiles()[0] }], ..quiet() };
        assert!(bad.validate().is_err());
    }
}
