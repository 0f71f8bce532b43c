//! Count-rate saturation of a recovering wire from renewal theory.

use ode_solvers::dop_shared::OutputType;
use ode_solvers::{Dopri5, System, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{dead_time, ide_vs_delay_unchecked, WireParams};
use crate::error::{Error, Result};
use crate::optics::CouplingProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    /// photons/s
    pub incident_rate: f64,
    /// counts/s
    pub measured_rate: f64,
    pub relative_efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divided by the efficiency of a fully recovered wire.
    EtaInfinity,
    /// Divided by the efficiency at the lowest incident rate.
    LowestRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<RatePoint>,
    pub normalization: Normalization,
}

impl RateCurve {
    /// Re-normalizes so the lowest-rate point has efficiency one.
    pub fn normalized_to_lowest(&self) -> RateCurve {
        let first = self.points.first().map_or(1.0, |p| p.relative_efficiency);
        RateCurve {
            points: self
                .points
                .iter()
                .map(|p| RatePoint { relative_efficiency: p.relative_efficiency / first, ..*p })
                .collect(),
            normalization: Normalization::LowestRate,
        }
    }
}

struct Renewal<'a> {
    p: &'a WireParams,
    lambda: f64,
}

impl System<f64, Vector2<f64>> for Renewal<'_> {
    // y = (λ ∫η, ∫S) with time in ns and λ in 1/ns
    fn system(&self, t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = self.lambda * ide_vs_delay_unchecked(t, self.p);
        dy[1] = (-y[0]).exp();
    }
}

/// Mean time between detections (ns) for Poisson photons at `rate` per s.
pub fn mean_interdetection_time(p: &WireParams, rate: f64) -> Result<f64> {
    let eta_inf = p.eta_max();
    if !(eta_inf > 0.0) {
        return Err(Error::Unreachable("wire efficiency is zero at full recovery".into()));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param(format!("incident rate must be > 0, got {rate}")));
    }
    let lambda = rate * 1e-9;
    // beyond t_end the efficiency equals eta_inf to 1e-12 and S decays exponentially
    let t_end = dead_time(p, eta_inf * (1.0 - 1e-12)).unwrap_or(40.0 * p.tau_reset());
    let t_end = t_end.max(p.tau_reset());
    let sys = Renewal { p, lambda };
    let h_max = (p.tau_reset() / 20.0).min(0.1 / lambda);
    let mut solver = Dopri5::from_param(
        sys,
        0.0,
        t_end,
        t_end,
        Vector2::new(0.0, 0.0),
        1e-10,
        1e-14,
        0.9,
        0.04,
        0.2,
        10.0,
        h_max.min(t_end),
        0.0,
        10_000_000,
        1000,
        OutputType::Sparse,
    );
    solver.integrate().map_err(|e| Error::param(format!("renewal integration failed: {e:?}")))?;
    let y = solver.y_out().last().copied().ok_or_else(|| Error::param("renewal integration produced no output"))?;
    let survival = (-y[0]).exp();
    Ok(y[1] + survival / (lambda * eta_inf))
}

/// Detected rate and relative efficiency versus incident rate.
pub fn efficiency_vs_rate(p: &WireParams, incident_rates: &[f64]) -> Result<RateCurve> {
    p.validate()?;
    let eta_inf = p.eta_max();
    let points = incident_rates
        .par_iter()
        .map(|&rate| {
            let t = mean_interdetection_time(p, rate)?;
            let measured = 1e9 / t;
            Ok(RatePoint { incident_rate: rate, measured_rate: measured, relative_efficiency: measured / (rate * eta_inf) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurve { points, normalization: Normalization::EtaInfinity })
}

/// Array curve: each wire sees `incident · share_k` and the detected rates add.
/// Relative efficiency uses `Σ share_k η∞_k` as the low-rate reference.
pub fn array_efficiency_vs_rate(
    params: &[WireParams],
    profile: &CouplingProfile,
    incident_rates: &[f64],
) -> Result<RateCurve> {
    let n = profile.n_wires();
    if !(params.len() == 1 || params.len() == n) {
        return Err(Error::param(format!("expected 1 or {n} wire parameter sets, got {}", params.len())));
    }
    let wire = |k: usize| &params[k.min(params.len() - 1)];
    let reference: f64 = (0..n).map(|k| profile.per_wire[k] * wire(k).eta_max()).sum();
    if !(reference > 0.0) {
        return Err(Error::Unreachable("array collects no light".into()));
    }
    let points = incident_rates
        .par_iter()
        .map(|&rate| {
            let mut measured = 0.0;
            for k in 0..n {
                let share = profile.per_wire[k];
                if share > 0.0 {
                    measured += 1e9 / mean_interdetection_time(wire(k), rate * share)?;
                }
            }
            Ok(RatePoint { incident_rate: rate, measured_rate: measured, relative_efficiency: measured / (rate * reference) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurve { points, normalization: Normalization::EtaInfinity })
}

/// Measured rate where the relative efficiency first falls through 0.5,
/// interpolated linearly between the bracketing points.
pub fn mcr_3db(curve: &RateCurve) -> Result<f64> {
    let pts = &curve.points;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.relative_efficiency >= 0.5 && b.relative_efficiency < 0.5 {
            let f = (a.relative_efficiency - 0.5) / (a.relative_efficiency - b.relative_efficiency);
            return Ok(a.measured_rate + f * (b.measured_rate - a.measured_rate));
        }
    }
    let max_rate = pts.iter().map(|p| p.measured_rate).fold(0.0, f64::max);
    Err(Error::NoCrossing { max_rate })
}

/// `n` log-spaced rates over `[lo, hi]`.
pub fn log_rates(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    crate::analysis::histogram::log_edges(lo, hi, n - 1)
}
