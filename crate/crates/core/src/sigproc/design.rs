//! Chebyshev type-I IIR design, realised as cascaded second-order sections.
//!
//! Frequencies passed in here are in Hz; designs go through an analog prototype, the usual
//! low-pass to band-pass mapping and a pre-warped bilinear transform.

use std::f64::consts::PI;

use nalgebra::Complex;

use crate::error::{invalid, Result};

type C64 = Complex<f64>;

/// One biquad: `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Biquad = [f64; 5];

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    pub order: usize,
}

impl Sos {
    /// Complex frequency response at `freq` Hz.
    pub fn response(&self, freq: f64, fs: f64) -> C64 {
        let w = 2.0 * PI * freq / fs;
        let z1 = C64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections.iter().fold(C64::new(1.0, 0.0), |acc, s| {
            let num = C64::new(s[0], 0.0) + z1 * s[1] + z2 * s[2];
            let den = C64::new(1.0, 0.0) + z1 * s[3] + z2 * s[4];
            acc * num / den
        })
    }

    pub fn gain_db(&self, freq: f64, fs: f64) -> f64 {
        20.0 * self.response(freq, fs).norm().log10()
    }

    /// Steady-state section states for a unit step input (direct form II transposed).
    pub fn step_state(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let g = (s[0] + s[1] + s[2]) / (1.0 + s[3] + s[4]);
                let z2 = (s[2] - s[4] * g) * level;
                let z1 = (s[1] - s[3] * g) * level + z2;
                level *= g;
                [z1, z2]
            })
            .collect()
    }

    /// Samples until the impulse response stays below `rel_tol` of its peak.
    pub fn settle_length(&self, rel_tol: f64, max_len: usize) -> usize {
        let mut state = vec![[0.0; 2]; self.sections.len()];
        let mut peak = 0.0f64;
        let mut last_big = 0;
        let mut h = Vec::with_capacity(max_len);
        for n in 0..max_len {
            let x = if n == 0 { 1.0 } else { 0.0 };
            let y = run_sample(&self.sections, &mut state, x);
            peak = peak.max(y.abs());
            h.push(y);
        }
        for (n, y) in h.iter().enumerate() {
            if y.abs() >= rel_tol * peak {
                last_big = n;
            }
        }
        last_big + 1
    }
}

#[inline]
pub(crate) fn run_sample(sections: &[Biquad], state: &mut [[f64; 2]], x: f64) -> f64 {
    let mut v = x;
    for (s, z) in sections.iter().zip(state.iter_mut()) {
        let y = s[0] * v + z[0];
        z[0] = s[1] * v - s[3] * y + z[1];
        z[1] = s[2] * v - s[4] * y;
        v = y;
    }
    v
}

fn prewarp(freq: f64, fs: f64) -> f64 {
    // bilinear transform at normalised fs = 2
    4.0 * (PI * freq / fs).tan()
}

fn check_edges(edges: &[f64], fs: f64) -> Result<()> {
    for &f in edges {
        if !(f > 0.0 && f < fs / 2.0) {
            return invalid(format!("edge {f} Hz must lie in (0, {}) Hz", fs / 2.0));
        }
    }
    Ok(())
}

fn order_from_selectivity(nat: f64, gpass: f64, gstop: f64) -> usize {
    let gs = 10f64.powf(0.1 * gstop);
    let gp = 10f64.powf(0.1 * gpass);
    let n = (((gs - 1.0) / (gp - 1.0)).sqrt().acosh() / nat.acosh()).ceil();
    (n as usize).max(1)
}

/// Minimum order of a Chebyshev-I band-pass meeting `gpass` dB ripple over `pass` and
/// `gstop` dB attenuation at the `stop` edges.
pub fn cheb1_bandpass_order(pass: (f64, f64), stop: (f64, f64), gpass: f64, gstop: f64, fs: f64) -> Result<usize> {
    check_edges(&[pass.0, pass.1, stop.0, stop.1], fs)?;
    if !(stop.0 < pass.0 && pass.0 < pass.1 && pass.1 < stop.1) {
        return invalid("band-pass edges must satisfy stop_lo < pass_lo < pass_hi < stop_hi");
    }
    if !(gpass > 0.0 && gstop > gpass) {
        return invalid("need 0 < passband ripple < stopband attenuation");
    }
    let t = |f: f64| (PI * f / fs).tan();
    let (p0, p1) = (t(pass.0), t(pass.1));
    let nat = [t(stop.0), t(stop.1)]
        .iter()
        .map(|&s| ((s * s - p0 * p1) / (s * (p0 - p1))).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(order_from_selectivity(nat, gpass, gstop))
}

pub fn cheb1_lowpass_order(pass: f64, stop: f64, gpass: f64, gstop: f64, fs: f64) -> Result<usize> {
    check_edges(&[pass, stop], fs)?;
    if !(pass < stop) {
        return invalid("low-pass needs pass edge below stop edge");
    }
    let t = |f: f64| (PI * f / fs).tan();
    Ok(order_from_selectivity(t(stop) / t(pass), gpass, gstop))
}

struct Zpk {
    zeros: Vec<C64>,
    poles: Vec<C64>,
    gain: f64,
}

fn cheb1_prototype(order: usize, ripple_db: f64) -> Zpk {
    let eps = (10f64.powf(0.1 * ripple_db) - 1.0).sqrt();
    let n = order as f64;
    let mu = (1.0 / eps).asinh() / n;
    let poles: Vec<C64> = (0..order)
        .map(|i| {
            let m = -(n - 1.0) + 2.0 * i as f64;
            let theta = PI * m / (2.0 * n);
            -(C64::new(mu, theta)).sinh()
        })
        .collect();
    let mut gain = poles.iter().fold(C64::new(1.0, 0.0), |acc, p| acc * -p).re;
    if order.is_multiple_of(2) {
        gain /= (1.0 + eps * eps).sqrt();
    }
    Zpk {
        zeros: Vec::new(),
        poles,
        gain,
    }
}

fn bilinear(zpk: Zpk) -> Zpk {
    let fs2 = C64::new(4.0, 0.0);
    let degree = zpk.poles.len() - zpk.zeros.len();
    let num = zpk.zeros.iter().fold(C64::new(1.0, 0.0), |a, z| a * (fs2 - z));
    let den = zpk.poles.iter().fold(C64::new(1.0, 0.0), |a, p| a * (fs2 - p));
    let mut zeros: Vec<C64> = zpk.zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
    zeros.extend(std::iter::repeat_n(C64::new(-1.0, 0.0), degree));
    Zpk {
        zeros,
        poles: zpk.poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect(),
        gain: zpk.gain * (num / den).re,
    }
}

/// Groups poles into conjugate pairs (and leftover reals) and attaches the given zero pairs.
fn to_sos(zpk: &Zpk, zero_pairs: &[[f64; 2]], ref_freq: f64, fs: f64) -> Sos {
    let tol = 1e-10;
    let mut complex: Vec<C64> = zpk.poles.iter().filter(|p| p.im > tol).cloned().collect();
    let mut reals: Vec<f64> = zpk.poles.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    // Farthest-from-circle first keeps the high-Q sections at the end of the cascade.
    complex.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    reals.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());

    let mut den: Vec<[f64; 2]> = complex.iter().map(|p| [-2.0 * p.re, p.norm_sqr()]).collect();
    for pair in reals.chunks(2) {
        match pair {
            [a, b] => den.push([-(a + b), a * b]),
            [a] => den.push([-a, 0.0]),
            _ => unreachable!(),
        }
    }
    assert_eq!(den.len(), zero_pairs.len(), "section count mismatch");

    let mut sections: Vec<Biquad> = den
        .iter()
        .zip(zero_pairs)
        .map(|(a, zp)| {
            // (1 - z0 q)(1 - z1 q) with q = z^-1; a missing zero is encoded as NaN
            let (b1, b2) = match (zp[0].is_nan(), zp[1].is_nan()) {
                (false, false) => (-(zp[0] + zp[1]), zp[0] * zp[1]),
                (false, true) => (-zp[0], 0.0),
                _ => (0.0, 0.0),
            };
            [1.0, b1, b2, a[0], a[1]]
        })
        .collect();

    // Normalise each section at the reference frequency, then restore the exact total gain.
    let mut sos = Sos {
        sections: Vec::new(),
        order: zpk.poles.len(),
    };
    for s in sections.iter_mut() {
        let one = Sos {
            sections: vec![*s],
            order: 2,
        };
        let g = one.response(ref_freq, fs).norm();
        s[0] /= g;
        s[1] /= g;
        s[2] /= g;
    }
    sos.sections = sections;
    let w = 2.0 * PI * ref_freq / fs;
    let ejw = C64::from_polar(1.0, w);
    let num = zpk.zeros.iter().fold(C64::new(1.0, 0.0), |a, z| a * (ejw - z));
    let den = zpk.poles.iter().fold(C64::new(1.0, 0.0), |a, p| a * (ejw - p));
    let target = (num / den * zpk.gain).norm();
    let have = sos.response(ref_freq, fs).norm();
    let scale = target / have;
    let s0 = &mut sos.sections[0];
    s0[0] *= scale;
    s0[1] *= scale;
    s0[2] *= scale;
    sos
}

/// Chebyshev-I band-pass of prototype order `order` (digital order `2 * order`).
pub fn cheby1_bandpass(order: usize, ripple_db: f64, low: f64, high: f64, fs: f64) -> Result<Sos> {
    check_edges(&[low, high], fs)?;
    if !(low < high) || order == 0 || !(ripple_db > 0.0) {
        return invalid("band-pass needs order >= 1, positive ripple and low < high");
    }
    let (w1, w2) = (prewarp(low, fs), prewarp(high, fs));
    let bw = w2 - w1;
    let wo = (w1 * w2).sqrt();
    let proto = cheb1_prototype(order, ripple_db);
    let mut poles = Vec::with_capacity(2 * order);
    for p in &proto.poles {
        let p_lp = p * (bw / 2.0);
        let root = (p_lp * p_lp - C64::new(wo * wo, 0.0)).sqrt();
        poles.push(p_lp + root);
        poles.push(p_lp - root);
    }
    let analog = Zpk {
        zeros: vec![C64::new(0.0, 0.0); order],
        poles,
        gain: proto.gain * bw.powi(order as i32),
    };
    let digital = bilinear(analog);
    let center = fs / PI * ((wo / 4.0).atan());
    Ok(to_sos(&digital, &vec![[1.0, -1.0]; order], center, fs))
}

/// Chebyshev-I low-pass of the given order.
pub fn cheby1_lowpass(order: usize, ripple_db: f64, cutoff: f64, fs: f64) -> Result<Sos> {
    check_edges(&[cutoff], fs)?;
    if order == 0 || !(ripple_db > 0.0) {
        return invalid("low-pass needs order >= 1 and positive ripple");
    }
    let wo = prewarp(cutoff, fs);
    let proto = cheb1_prototype(order, ripple_db);
    let analog = Zpk {
        zeros: Vec::new(),
        poles: proto.poles.iter().map(|p| p * wo).collect(),
        gain: proto.gain * wo.powi(order as i32),
    };
    let digital = bilinear(analog);
    let mut pairs = vec![[-1.0, -1.0]; order / 2];
    if order % 2 == 1 {
        pairs.push([-1.0, f64::NAN]);
    }
    Ok(to_sos(&digital, &pairs, 0.0, fs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_band_meets_design_targets() {
        let fs = 250.0;
        let n = cheb1_bandpass_order((6.0, 90.0), (2.0, 100.0), 0.1, 40.0, fs).unwrap();
        let sos = cheby1_bandpass(n, 0.1, 6.0, 90.0, fs).unwrap();
        for f in [6.0, 8.0, 14.0, 30.0, 60.0, 89.9] {
            let g = sos.gain_db(f, fs);
            assert!((-0.1 - 1e-6..=1e-9).contains(&g), "{f} Hz: {g} dB");
        }
        assert!(sos.gain_db(2.0, fs) <= -40.0);
        assert!(sos.gain_db(100.0, fs) <= -40.0);
        assert!(sos.gain_db(0.5, fs) <= -40.0);
    }

    #[test]
    fn lowpass_passes_dc() {
        let sos = cheby1_lowpass(8, 0.05, 112.5, 1000.0).unwrap();
        let g0 = sos.gain_db(0.0, 1000.0);
        assert!(g0 <= 1e-9 && g0 > -0.05 - 1e-6, "{g0}");
        assert!(sos.gain_db(250.0, 1000.0) < -40.0);
        let odd = cheby1_lowpass(5, 0.5, 50.0, 1000.0).unwrap();
        assert_eq!(odd.sections.len(), 3);
        assert!(odd.gain_db(0.0, 1000.0).abs() < 1e-9);
    }

    #[test]
    fn order_formula_matches_hand_computation() {
        // lowpass: nat = tan(pi*0.3)/tan(pi*0.2); acosh ratio evaluates to 4.77 -> 5
        let n = cheb1_lowpass_order(200.0, 300.0, 1.0, 40.0, 1000.0).unwrap();
        assert_eq!(n, 5);
    }

    #[test]
    fn rejects_edges_at_nyquist() {
        assert!(cheby1_bandpass(4, 0.1, 6.0, 125.0, 250.0).is_err());
        assert!(cheb1_bandpass_order((6.0, 90.0), (2.0, 130.0), 0.1, 40.0, 250.0).is_err());
    }

    #[test]
    fn step_state_is_steady() {
        let sos = cheby1_lowpass(6, 0.1, 50.0, 1000.0).unwrap();
        let mut st = sos.step_state();
        for _ in 0..10 {
            let y = run_sample(&sos.sections, &mut st, 1.0);
            assert!((y - sos.response(0.0, 1000.0).re).abs() < 1e-9);
        }
    }
}
