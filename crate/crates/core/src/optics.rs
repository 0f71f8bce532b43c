//! Gaussian fiber mode projected onto a linear nanowire array.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::erf;

/// Fundamental fiber mode; lengths in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianMode {
    pub mode_field_diameter: f64,
    /// Mode center relative to the array center, along the array axis.
    pub offset: f64,
}

impl Default for GaussianMode {
    fn default() -> Self {
        Self { mode_field_diameter: 10.4, offset: -0.76 }
    }
}

impl GaussianMode {
    fn check(&self) -> Result<()> {
        if !(self.mode_field_diameter > 0.0 && self.mode_field_diameter.is_finite()) {
            return Err(Error::param(format!(
                "mode_field_diameter must be > 0, got {}",
                self.mode_field_diameter
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::param("mode offset must be finite"));
        }
        Ok(())
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        match self.check() {
            Ok(()) => Vec::new(),
            Err(e) => vec![format!("{path}: {}", e.to_string().trim_start_matches("invalid parameter: "))],
        }
    }

    pub fn with_offset(self, offset: f64) -> Self {
        Self { offset, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayGeometry {
    pub n_wires: usize,
    /// nm
    pub pitch: f64,
    /// nm
    pub wire_width: f64,
    /// µm
    pub wire_length: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self { n_wires: 32, pitch: 400.0, wire_width: 120.0, wire_length: 30.0 }
    }
}

impl ArrayGeometry {
    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_wires == 0 {
            v.push(format!("{path}: n_wires must be >= 1"));
        }
        if !(self.wire_width > 0.0 && self.wire_width <= self.pitch) {
            v.push(format!("{path}: need 0 < wire_width <= pitch"));
        }
        if !(self.wire_length > 0.0) {
            v.push(format!("{path}: wire_length must be > 0"));
        }
        v
    }

    fn check(&self) -> Result<()> {
        let v = self.violations("geometry");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Center of wire `k` in µm, array centered on 0.
    pub fn wire_center(&self, k: usize) -> f64 {
        (k as f64 - (self.n_wires as f64 - 1.0) / 2.0) * self.pitch * 1e-3
    }
}

/// Per-wire share of incident photons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    pub per_wire: Vec<f64>,
    pub uncoupled: f64,
}

impl CouplingProfile {
    /// Builds a profile from per-wire fractions; the remainder is uncoupled.
    pub fn from_fractions(per_wire: Vec<f64>) -> Result<Self> {
        if per_wire.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) {
            return Err(Error::param("coupling fractions must be finite and >= 0"));
        }
        let total: f64 = per_wire.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::param(format!("coupling fractions sum to {total} > 1")));
        }
        Ok(Self { per_wire, uncoupled: (1.0 - total).max(0.0) })
    }

    pub fn n_wires(&self) -> usize {
        self.per_wire.len()
    }
}

/// Power of the mode inside `x1 < x < x2` (µm); the transverse axis is
/// fully covered by the wires.
pub fn slab_fraction(x1: f64, x2: f64, mode: &GaussianMode) -> Result<f64> {
    mode.check()?;
    if !(x1 < x2) {
        return Err(Error::param(format!("slab bounds must satisfy x1 < x2 ({x1}, {x2})")));
    }
    Ok(slab_unchecked(x1, x2, mode))
}

fn slab_unchecked(x1: f64, x2: f64, mode: &GaussianMode) -> f64 {
    let w0 = mode.mode_field_diameter / 2.0;
    let k = std::f64::consts::SQRT_2 / w0;
    let (a, b) = ((x1 - mode.offset) * k, (x2 - mode.offset) * k);
    // subtract in the tail where erf saturates to keep precision
    if a > 0.0 {
        0.5 * (crate::special::erfc(a) - crate::special::erfc(b))
    } else if b < 0.0 {
        0.5 * (crate::special::erfc(-b) - crate::special::erfc(-a))
    } else {
        0.5 * (erf(b) - erf(a))
    }
}

/// Each wire collects its full pitch cell, scaled by `optical_efficiency`.
pub fn coupling_profile(
    geom: &ArrayGeometry,
    mode: &GaussianMode,
    optical_efficiency: f64,
) -> Result<CouplingProfile> {
    geom.check()?;
    mode.check()?;
    if !(optical_efficiency > 0.0 && optical_efficiency <= 1.0) {
        return Err(Error::param(format!(
            "optical_efficiency must be in (0, 1], got {optical_efficiency}"
        )));
    }
    let half = geom.pitch * 1e-3 / 2.0;
    let per_wire: Vec<f64> = (0..geom.n_wires)
        .map(|k| {
            let c = geom.wire_center(k);
            optical_efficiency * slab_unchecked(c - half, c + half, mode)
        })
        .collect();
    let total: f64 = per_wire.iter().sum();
    Ok(CouplingProfile { per_wire, uncoupled: 1.0 - total })
}

pub fn sde(profile: &CouplingProfile) -> f64 {
    profile.per_wire.iter().sum()
}

/// Scale factor that makes the array's SDE equal `target_sde`.
pub fn calibrate_optical_efficiency(
    geom: &ArrayGeometry,
    mode: &GaussianMode,
    target_sde: f64,
) -> Result<f64> {
    let raw = sde(&coupling_profile(geom, mode, 1.0)?);
    let eff = target_sde / raw;
    if !(eff > 0.0 && eff <= 1.0) {
        return Err(Error::Unreachable(format!(
            "SDE {target_sde} needs optical efficiency {eff}; the array only collects {raw}"
        )));
    }
    Ok(eff)
}

/// `sde(offset = 0) - min sde` over `|offset| <= max_offset` (µm), scanned
/// on a grid no coarser than 50 nm.
pub fn misalignment_penalty(
    geom: &ArrayGeometry,
    mode: &GaussianMode,
    optical_efficiency: f64,
    max_offset: f64,
) -> Result<f64> {
    let (aligned, worst) = misalignment_scan(geom, mode, optical_efficiency, max_offset)?;
    Ok(aligned - worst)
}

/// Penalty as a fraction of the aligned SDE.
pub fn misalignment_penalty_relative(
    geom: &ArrayGeometry,
    mode: &GaussianMode,
    optical_efficiency: f64,
    max_offset: f64,
) -> Result<f64> {
    let (aligned, worst) = misalignment_scan(geom, mode, optical_efficiency, max_offset)?;
    Ok((aligned - worst) / aligned)
}

fn misalignment_scan(
    geom: &ArrayGeometry,
    mode: &GaussianMode,
    optical_efficiency: f64,
    max_offset: f64,
) -> Result<(f64, f64)> {
    if !(max_offset >= 0.0 && max_offset.is_finite()) {
        return Err(Error::param(format!("max_offset must be >= 0, got {max_offset}")));
    }
    let at = |x: f64| coupling_profile(geom, &mode.with_offset(x), optical_efficiency).map(|p| sde(&p));
    let aligned = at(0.0)?;
    let steps = (2.0 * max_offset / 0.05).ceil().max(1.0) as usize;
    let mut worst = aligned;
    for i in 0..=steps {
        let x = -max_offset + 2.0 * max_offset * i as f64 / steps as f64;
        worst = worst.min(at(x)?);
    }
    Ok((aligned, worst))
}
