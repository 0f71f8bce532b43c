//! Closed-form physics of a single nanowire.
//!
//! Units: currents in µA, inductance in nH, resistance in Ω, times in ns,
//! rates in counts/s, pulse gain in mV/µA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{erfc, erfc_inv};

/// Electrical and detection parameters of one nanowire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WireParams {
    /// Inflection point of the internal detection efficiency (µA).
    pub i_detect: f64,
    /// Width of the efficiency inflection (µA).
    pub sigma: f64,
    /// Switching current (µA).
    pub i_switch: f64,
    /// Bias above which the wire latches (µA).
    pub i_latch: f64,
    /// Bias current as a fraction of `i_switch`.
    pub bias_fraction: f64,
    /// Total kinetic inductance (nH).
    pub l_kinetic: f64,
    /// Load resistance seen by the wire (Ω).
    pub r_load: f64,
    /// Amplified pulse height per µA of diverted current (mV/µA).
    pub pulse_amp_per_current: f64,
    /// Pulse rise time constant (ns). `None` means `tau_reset / 50`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_rise: Option<f64>,
    /// Bias-independent dark count floor (counts/s).
    pub dcr_background: f64,
    /// Prefactor of the exponential dark-count term (counts/s).
    pub dcr_exp_amp: f64,
    /// Current scale of the exponential dark-count term (µA).
    pub dcr_exp_scale: f64,
}

impl Default for WireParams {
    /// A representative wire of the 32-wire array: 680 nH / 100 Ω reset,
    /// a 2.8 µA plateau, biased at 95% of switching.
    fn default() -> Self {
        Self {
            i_detect: 5.0,
            sigma: 0.5,
            i_switch: 8.3,
            i_latch: 8.6,
            bias_fraction: 0.95,
            l_kinetic: 680.0,
            r_load: 100.0,
            pulse_amp_per_current: 60.0,
            tau_rise: None,
            dcr_background: 0.4,
            dcr_exp_amp: 0.0,
            dcr_exp_scale: 0.1,
        }
    }
}

impl WireParams {
    pub fn i_bias(&self) -> f64 {
        self.bias_fraction * self.i_switch
    }

    /// `L_k / R_L` in ns.
    pub fn tau_reset(&self) -> f64 {
        self.l_kinetic / self.r_load
    }

    pub fn tau_rise(&self) -> f64 {
        self.tau_rise.unwrap_or(self.tau_reset() / 50.0)
    }

    /// Efficiency of a fully recovered wire.
    pub fn eta_max(&self) -> f64 {
        ide(self.i_bias(), self)
    }

    pub fn is_latching(&self) -> bool {
        self.i_bias() >= self.i_latch
    }

    /// Every violated invariant, prefixed with `path`.
    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                v.push(format!("{path}: {msg}"));
            }
        };
        let finite = [
            self.i_detect,
            self.sigma,
            self.i_switch,
            self.i_latch,
            self.bias_fraction,
            self.l_kinetic,
            self.r_load,
            self.pulse_amp_per_current,
            self.dcr_background,
            self.dcr_exp_amp,
            self.dcr_exp_scale,
        ]
        .iter()
        .all(|x| x.is_finite());
        check(finite, "all parameters must be finite");
        check(self.i_detect > 0.0, "i_detect must be > 0");
        check(self.i_detect < self.i_switch, "i_detect must be < i_switch");
        check(self.sigma > 0.0, "sigma must be > 0");
        check(self.i_latch > 0.0, "i_latch must be > 0");
        check(
            self.bias_fraction > 0.0 && self.bias_fraction <= 1.0,
            "bias_fraction must be in (0, 1]",
        );
        check(self.l_kinetic > 0.0, "l_kinetic must be > 0");
        check(self.r_load > 0.0, "r_load must be > 0");
        check(self.pulse_amp_per_current > 0.0, "pulse_amp_per_current must be > 0");
        if let Some(tr) = self.tau_rise {
            check(tr > 0.0 && tr.is_finite(), "tau_rise must be > 0");
            check(tr < self.tau_reset(), "tau_rise must be shorter than tau_reset");
        }
        check(self.dcr_background >= 0.0, "dcr_background must be >= 0");
        check(self.dcr_exp_amp >= 0.0, "dcr_exp_amp must be >= 0");
        check(self.dcr_exp_scale > 0.0, "dcr_exp_scale must be > 0");
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("wire");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Internal detection efficiency at nanowire current `i` (µA).
pub fn ide(i: f64, p: &WireParams) -> f64 {
    0.5 * erfc(-(i - p.i_detect) / p.sigma)
}

/// Current restored in the wire `t` ns after a detection.
pub fn recovery_current(t: f64, p: &WireParams) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::param(format!("delay must be >= 0, got {t}")));
    }
    Ok(recovery_current_unchecked(t, p))
}

#[inline]
pub(crate) fn recovery_current_unchecked(t: f64, p: &WireParams) -> f64 {
    p.i_bias() * -(-t / p.tau_reset()).exp_m1()
}

/// Detection efficiency `t` ns after the previous detection.
pub fn ide_vs_delay(t: f64, p: &WireParams) -> Result<f64> {
    Ok(ide(recovery_current(t, p)?, p))
}

#[inline]
pub(crate) fn ide_vs_delay_unchecked(t: f64, p: &WireParams) -> f64 {
    ide(recovery_current_unchecked(t, p), p)
}

/// Width profile of a tapered microstrip or nanowire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrostripProfile {
    /// Sheet inductance (pH per square).
    pub sheet_inductance: f64,
    /// `(arc length µm, width nm)` samples.
    pub width_samples: Vec<(f64, f64)>,
}

impl MicrostripProfile {
    pub fn uniform(sheet_inductance: f64, length_um: f64, width_nm: f64) -> Self {
        Self {
            sheet_inductance,
            width_samples: vec![(0.0, width_nm), (length_um, width_nm)],
        }
    }

    fn check(&self) -> Result<()> {
        if self.width_samples.len() < 2 {
            return Err(Error::param("profile needs at least 2 samples"));
        }
        if !(self.sheet_inductance > 0.0) {
            return Err(Error::param("sheet inductance must be > 0"));
        }
        for w in self.width_samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::param(format!(
                    "arc length must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(s, w)) = self.width_samples.iter().find(|&&(_, w)| !(w > 0.0)) {
            return Err(Error::param(format!("non-positive width {w} nm at s = {s} µm")));
        }
        Ok(())
    }

    /// Joins `other` to the end of `self`. The junction widths must agree.
    pub fn concat(&self, other: &MicrostripProfile) -> Result<MicrostripProfile> {
        self.check()?;
        other.check()?;
        if self.sheet_inductance != other.sheet_inductance {
            return Err(Error::param("cannot join profiles with different sheet inductance"));
        }
        let &(s_end, w_end) = self.width_samples.last().unwrap();
        let &(s0, w0) = other.width_samples.first().unwrap();
        if (w_end - w0).abs() > 1e-9 * w_end {
            return Err(Error::param(format!(
                "junction widths differ ({w_end} nm vs {w0} nm)"
            )));
        }
        let mut samples = self.width_samples.clone();
        samples.extend(other.width_samples.iter().skip(1).map(|&(s, w)| (s - s0 + s_end, w)));
        Ok(MicrostripProfile {
            sheet_inductance: self.sheet_inductance,
            width_samples: samples,
        })
    }
}

/// `L_sq ∫ ds / w(s)` by the trapezoid rule over the given samples, in nH.
pub fn kinetic_inductance(profile: &MicrostripProfile) -> Result<f64> {
    profile.check()?;
    // pH * µm / nm = nH
    let squares: f64 = profile
        .width_samples
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (1.0 / w[0].1 + 1.0 / w[1].1))
        .sum();
    Ok(profile.sheet_inductance * squares)
}

/// `L_k / R_L` (nH / Ω = ns).
pub fn reset_time(l_k: f64, r_load: f64) -> Result<f64> {
    if !(l_k > 0.0) || !(r_load > 0.0) {
        return Err(Error::param(format!(
            "inductance and load must be positive (got {l_k} nH, {r_load} Ω)"
        )));
    }
    Ok(l_k / r_load)
}

/// Smallest delay (ns) at which the efficiency reaches `eta_quantile`.
pub fn dead_time(p: &WireParams, eta_quantile: f64) -> Result<f64> {
    let eta_max = p.eta_max();
    if !(eta_quantile > 0.0) {
        return Err(Error::param(format!("eta_quantile must be > 0, got {eta_quantile}")));
    }
    if eta_quantile >= eta_max {
        return Err(Error::Unreachable(format!(
            "efficiency {eta_quantile} never reached; recovered wire saturates at {eta_max}"
        )));
    }
    if ide(0.0, p) >= eta_quantile {
        return Ok(0.0);
    }
    let tau = p.tau_reset();
    let i_q = p.i_detect - p.sigma * erfc_inv(2.0 * eta_quantile);
    let ratio = i_q / p.i_bias();
    if ratio > 0.0 && ratio < 1.0 {
        let t = -tau * (-ratio).ln_1p();
        let residual = (ide_vs_delay_unchecked(t, p) - eta_quantile).abs();
        if t.is_finite() && residual <= 1e-9 * eta_quantile.max(1e-300) {
            return Ok(t);
        }
    }
    bisect_dead_time(p, eta_quantile)
}

fn bisect_dead_time(p: &WireParams, q: f64) -> Result<f64> {
    let tau = p.tau_reset();
    let mut lo = 0.0;
    let mut hi = tau;
    while ide_vs_delay_unchecked(hi, p) < q {
        hi *= 2.0;
        if hi > 1e6 * tau {
            return Err(Error::Unreachable(format!("efficiency {q} not reached")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ide_vs_delay_unchecked(mid, p) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * tau {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Dark count rate at bias `i_bias` (counts/s).
pub fn dark_count_rate(i_bias: f64, p: &WireParams) -> Result<f64> {
    if i_bias.is_nan() || i_bias < 0.0 {
        return Err(Error::param(format!("bias must be >= 0, got {i_bias}")));
    }
    Ok(p.dcr_background + p.dcr_exp_amp * (i_bias / p.dcr_exp_scale).exp())
}

/// Detection plateau `I_switch - (I_detect + σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub width: f64,
    /// Set when the width is negative (constricted wire).
    pub constricted: bool,
}

pub fn plateau_width(p: &WireParams) -> Plateau {
    let width = p.i_switch - (p.i_detect + p.sigma);
    let constricted = width < 0.0;
    if constricted {
        log::warn!("negative plateau width {width:.3} µA: wire saturates above its switching current");
    }
    Plateau { width, constricted }
}
