//! Pulse shape and the summed analog waveform of one wire.
//!
//! Every pulse is a sum of decaying exponentials sharing the same few time
//! constants, so the superposition of any number of pulses is carried as
//! one amplitude per time constant and advanced exactly.

use crate::error::{Error, Result};

const MAX_TERMS: usize = 3;

/// Unit-peak pulse `v(s) = Σ c_i exp(-s / τ_i)` for `s >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseShape {
    n: usize,
    taus: [f64; MAX_TERMS],
    coef: [f64; MAX_TERMS],
    peak_time: f64,
    tau_rise: f64,
}

impl PulseShape {
    /// Difference of exponentials (rise `tau_rise`, fall `tau_fall`), optionally
    /// passed through a first-order high-pass with time constant `ac_tau`.
    pub fn new(tau_rise: f64, tau_fall: f64, ac_tau: Option<f64>) -> Result<Self> {
        if !(tau_rise > 0.0 && tau_fall > tau_rise) {
            return Err(Error::param(format!(
                "pulse needs 0 < tau_rise < tau_fall (got {tau_rise}, {tau_fall})"
            )));
        }
        let mut taus = [0.0; MAX_TERMS];
        let mut coef = [0.0; MAX_TERMS];
        let n = match ac_tau {
            None => {
                taus[..2].copy_from_slice(&[tau_fall, tau_rise]);
                coef[..2].copy_from_slice(&[1.0, -1.0]);
                2
            }
            Some(th) => {
                if !(th > 0.0) {
                    return Err(Error::param("ac coupling time constant must be > 0"));
                }
                let th = separate(th, &[tau_fall, tau_rise]);
                // e^{-s/τ} through the high-pass becomes
                // τh/(τh-τ) e^{-s/τ} - τ/(τh-τ) e^{-s/τh}
                let hp = |tau: f64| (th / (th - tau), -tau / (th - tau));
                let (af, bf) = hp(tau_fall);
                let (ar, br) = hp(tau_rise);
                taus = [tau_fall, tau_rise, th];
                coef = [af, -ar, bf - br];
                3
            }
        };
        let mut shape = Self { n, taus, coef, peak_time: 0.0, tau_rise };
        let (t_pk, v_pk) = shape.find_peak();
        if !(v_pk > 0.0) {
            return Err(Error::param("pulse shape has no positive peak"));
        }
        for c in &mut shape.coef[..n] {
            *c /= v_pk;
        }
        shape.peak_time = t_pk;
        Ok(shape)
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus[..self.n]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef[..self.n]
    }

    pub fn peak_time(&self) -> f64 {
        self.peak_time
    }

    pub fn eval(&self, s: f64) -> f64 {
        (0..self.n).map(|i| self.coef[i] * (-s / self.taus[i]).exp()).sum()
    }

    pub fn slope(&self, s: f64) -> f64 {
        (0..self.n).map(|i| -self.coef[i] / self.taus[i] * (-s / self.taus[i]).exp()).sum()
    }

    fn find_peak(&self) -> (f64, f64) {
        // the first maximum lies within a few rise times
        let h = self.tau_rise / 8.0;
        let mut s = 0.0;
        while self.slope(s + h) > 0.0 && s < 1e3 * self.tau_rise {
            s += h;
        }
        let (mut lo, mut hi) = (s, s + h);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        (t, self.eval(t))
    }
}

fn separate(mut th: f64, others: &[f64]) -> f64 {
    while others.iter().any(|&t| (th - t).abs() < 1e-6 * t) {
        th *= 1.0 + 1e-4;
    }
    th
}

/// Outcome of the threshold search after a new pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    /// Upward crossing at `time` (ns) with slope (mV/ns).
    At { time: f64, slope: f64 },
    /// The waveform was already above threshold, so no new edge is seen.
    AlreadyAbove,
    /// The waveform stays below threshold.
    Below,
}

/// Sum of all pulse tails on one wire.
#[derive(Debug, Clone)]
pub struct Waveform {
    shape: PulseShape,
    t_ref: f64,
    amps: [f64; MAX_TERMS],
    idle_after: f64,
}

impl Waveform {
    pub fn new(shape: PulseShape) -> Self {
        let tau_max = shape.taus().iter().cloned().fold(0.0, f64::max);
        Self { shape, t_ref: 0.0, amps: [0.0; MAX_TERMS], idle_after: 30.0 * tau_max }
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    /// Waveform value (mV) at `t >= ` the last pulse time.
    pub fn value(&self, t: f64) -> f64 {
        let s = t - self.t_ref;
        (0..self.shape.n).map(|i| self.amps[i] * (-s / self.shape.taus[i]).exp()).sum()
    }

    pub fn slope(&self, t: f64) -> f64 {
        let s = t - self.t_ref;
        (0..self.shape.n)
            .map(|i| -self.amps[i] / self.shape.taus[i] * (-s / self.shape.taus[i]).exp())
            .sum()
    }

    /// Starts a pulse of height `amplitude` (mV) at `t`.
    pub fn add_pulse(&mut self, t: f64, amplitude: f64) {
        let s = t - self.t_ref;
        if s > self.idle_after {
            self.amps = [0.0; MAX_TERMS];
        } else {
            for i in 0..self.shape.n {
                self.amps[i] *= (-s / self.shape.taus[i]).exp();
            }
        }
        self.t_ref = t;
        for i in 0..self.shape.n {
            self.amps[i] += amplitude * self.shape.coef[i];
        }
    }

    /// First upward crossing of `threshold` at or after the last pulse start.
    pub fn find_crossing(&self, threshold: f64) -> Crossing {
        let t0 = self.t_ref;
        if self.value(t0) >= threshold {
            return Crossing::AlreadyAbove;
        }
        let tr = self.shape.tau_rise;
        let h = tr / 4.0;
        let horizon = (12.0 * tr).max(3.0 * self.shape.peak_time);
        let mut a = t0;
        let mut found = None;
        let mut s = h;
        while s <= horizon + 0.5 * h {
            let b = t0 + s;
            if self.value(b) >= threshold {
                found = Some((a, b));
                break;
            }
            a = b;
            s += h;
        }
        let Some((mut lo, mut hi)) = found else {
            return Crossing::Below;
        };
        // Newton steps kept inside the bracket, bisection otherwise
        let mut t = 0.5 * (lo + hi);
        for _ in 0..100 {
            let f = self.value(t) - threshold;
            if f.abs() <= 1e-12 * threshold || hi - lo < 1e-12 {
                break;
            }
            if f < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let d = self.slope(t);
            let next = t - f / d;
            t = if d > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        Crossing::At { time: t, slope: self.slope(t) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_pulse_peak_is_analytic() {
        let (tr, tf) = (0.136, 6.8);
        let shape = PulseShape::new(tr, tf, None).unwrap();
        let s_pk = (tf / tr).ln() * tf * tr / (tf - tr);
        assert!((shape.peak_time() - s_pk).abs() < 1e-9);
        assert!((shape.eval(s_pk) - 1.0).abs() < 1e-12);
        assert_eq!(shape.eval(0.0), 0.0);
    }

    #[test]
    fn ac_pulse_matches_numerical_high_pass() {
        let (tr, tf, th) = (0.136, 6.8, 2.0);
        let dc = PulseShape::new(tr, tf, None).unwrap();
        let ac = PulseShape::new(tr, tf, Some(th)).unwrap();
        // y' = x' - y/τh, integrated with small steps
        let dt = 1e-5;
        let (mut y, mut s) = (0.0, 0.0);
        let mut samples = Vec::new();
        while s < 20.0 {
            let dx = dc.eval(s + dt) - dc.eval(s);
            let mid = y + 0.5 * (dx - y * dt / th);
            y += dx - mid * dt / th;
            s += dt;
            samples.push((s, y));
        }
        let peak = samples.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        for &(s, y) in samples.iter().step_by(50_000) {
            assert!((ac.eval(s) - y / peak).abs() < 1e-4, "s={s}");
        }
        assert!(ac.eval(10.0) < 0.0, "high-pass undershoots");
    }

    #[test]
    fn isolated_crossing_latency() {
        let shape = PulseShape::new(0.136, 6.8, None).unwrap();
        let mut w = Waveform::new(shape.clone());
        w.add_pulse(100.0, 400.0);
        let Crossing::At { time, slope } = w.find_crossing(100.0) else { panic!() };
        assert!((shape.eval(time - 100.0) - 0.25).abs() < 1e-10);
        assert!(slope > 0.0);
        assert!(time - 100.0 < shape.peak_time());
    }

    #[test]
    fn smaller_pulse_crosses_later_with_ac_coupling() {
        let shape = PulseShape::new(0.136, 6.8, Some(2.0)).unwrap();
        let mut iso = Waveform::new(shape.clone());
        iso.add_pulse(0.0, 400.0);
        let Crossing::At { time: t_iso, .. } = iso.find_crossing(100.0) else { panic!() };

        // second photon when the current has recovered to 0.8 I_b
        let dt = -6.8 * 0.2f64.ln();
        let mut w = Waveform::new(shape);
        w.add_pulse(0.0, 400.0);
        w.add_pulse(dt, 0.8 * 400.0);
        let Crossing::At { time, .. } = w.find_crossing(100.0) else { panic!() };
        assert!(time - dt > t_iso);
    }

    #[test]
    fn below_and_above() {
        let shape = PulseShape::new(0.136, 6.8, None).unwrap();
        let mut w = Waveform::new(shape);
        w.add_pulse(0.0, 50.0);
        assert_eq!(w.find_crossing(100.0), Crossing::Below);
        w.add_pulse(0.0, 400.0);
        w.add_pulse(1.0, 10.0);
        assert_eq!(w.find_crossing(100.0), Crossing::AlreadyAbove);
    }

    #[test]
    fn idle_waveform_forgets() {
        let shape = PulseShape::new(0.136, 6.8, None).unwrap();
        let mut w = Waveform::new(shape);
        w.add_pulse(0.0, 400.0);
        w.add_pulse(1e6, 400.0);
        assert!(matches!(w.find_crossing(100.0), Crossing::At { .. }));
    }
}
