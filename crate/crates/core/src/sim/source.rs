use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{stream_rng, Purpose};
use crate::error::{Error, Result};
use crate::optics::CouplingProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Cw,
    Pulsed,
}

/// Light incident on the fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonSource {
    pub kind: SourceKind,
    /// photons/s
    #[serde(default)]
    pub cw_rate: f64,
    /// Hz
    #[serde(default)]
    pub rep_rate: f64,
    /// ps
    #[serde(default)]
    pub pulse_sigma: f64,
    #[serde(default)]
    pub mean_photons_per_pulse: f64,
}

impl PhotonSource {
    pub fn cw(rate: f64) -> Self {
        Self { kind: SourceKind::Cw, cw_rate: rate, rep_rate: 0.0, pulse_sigma: 0.0, mean_photons_per_pulse: 0.0 }
    }

    pub fn pulsed(rep_rate: f64, pulse_sigma_ps: f64, mean_photons_per_pulse: f64) -> Self {
        Self {
            kind: SourceKind::Pulsed,
            cw_rate: 0.0,
            rep_rate,
            pulse_sigma: pulse_sigma_ps,
            mean_photons_per_pulse,
        }
    }

    /// Pulse period in ns, for pulsed sources.
    pub fn period_ns(&self) -> Option<f64> {
        match self.kind {
            SourceKind::Pulsed => Some(1e9 / self.rep_rate),
            SourceKind::Cw => None,
        }
    }

    /// Mean incident photons per second.
    pub fn mean_rate(&self) -> f64 {
        match self.kind {
            SourceKind::Cw => self.cw_rate,
            SourceKind::Pulsed => self.rep_rate * self.mean_photons_per_pulse,
        }
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut v = Vec::new();
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match self.kind {
            SourceKind::Cw => {
                if !pos(self.cw_rate) {
                    v.push(format!("{path}: cw_rate must be > 0 for a cw source"));
                }
            }
            SourceKind::Pulsed => {
                if !pos(self.rep_rate) {
                    v.push(format!("{path}: rep_rate must be > 0 for a pulsed source"));
                }
                if !pos(self.mean_photons_per_pulse) {
                    v.push(format!("{path}: mean_photons_per_pulse must be > 0 for a pulsed source"));
                }
                if !(self.pulse_sigma >= 0.0 && self.pulse_sigma.is_finite()) {
                    v.push(format!("{path}: pulse_sigma must be >= 0"));
                }
            }
        }
        v
    }

    fn check(&self) -> Result<()> {
        let v = self.violations("source");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Sorted photon arrival times (ns) for every wire over `[0, duration)`.
///
/// Each wire draws from its own stream. Splitting a Poisson process by
/// independent per-photon assignment gives independent Poisson processes,
/// so this matches assigning each photon of one global stream.
pub fn generate_arrivals(
    source: &PhotonSource,
    profile: &CouplingProfile,
    duration: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    source.check()?;
    check_duration(duration)?;
    (0..profile.n_wires())
        .map(|k| generate_wire_arrivals(source, profile.per_wire[k], k as u16, duration, seed))
        .collect()
}

pub(crate) fn check_duration(duration: f64) -> Result<()> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::param(format!("duration must be > 0, got {duration}")));
    }
    Ok(())
}

/// Arrivals for one wire collecting a fraction `share` of the source.
pub fn generate_wire_arrivals(
    source: &PhotonSource,
    share: f64,
    channel: u16,
    duration: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    source.check()?;
    check_duration(duration)?;
    if !(share >= 0.0 && share <= 1.0) {
        return Err(Error::param(format!("wire share must be in [0, 1], got {share}")));
    }
    let mut rng = stream_rng(seed, channel as u64, Purpose::Arrivals);
    let mut out = Vec::new();
    if share == 0.0 {
        return Ok(out);
    }
    match source.kind {
        SourceKind::Cw => {
            // ns between photons
            let mean_gap = 1e9 / (source.cw_rate * share);
            out.reserve((duration / mean_gap * 1.01) as usize + 16);
            let mut t = 0.0;
            loop {
                let e: f64 = Exp1.sample(&mut rng);
                t += e * mean_gap;
                if t >= duration {
                    break;
                }
                out.push(t);
            }
        }
        SourceKind::Pulsed => {
            let period = 1e9 / source.rep_rate;
            let m = source.mean_photons_per_pulse * share;
            let sigma = source.pulse_sigma * 1e-3;
            let n_pulses = (duration / period).ceil() as u64;
            let mut k: u64 = 0;
            loop {
                // pulses with no photon on this wire are skipped geometrically
                let e: f64 = Exp1.sample(&mut rng);
                let skip = (e / m).floor();
                if skip >= (n_pulses - k) as f64 {
                    break;
                }
                k += skip as u64;
                let n = zero_truncated_poisson(m, &mut rng);
                let center = k as f64 * period;
                let start = out.len();
                for _ in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let t = center + sigma * z;
                    if (0.0..duration).contains(&t) {
                        out.push(t);
                    }
                }
                out[start..].sort_by(f64::total_cmp);
                k += 1;
                if k >= n_pulses {
                    break;
                }
            }
            // neighbouring pulses can only interleave for very long pulses
            if sigma * 6.0 > period {
                out.sort_by(f64::total_cmp);
            }
        }
    }
    Ok(out)
}

/// Poisson(m) conditioned on being at least one.
fn zero_truncated_poisson<R: Rng>(m: f64, rng: &mut R) -> u64 {
    if m > 20.0 {
        let p = Poisson::new(m).unwrap();
        loop {
            let n = p.sample(rng) as u64;
            if n > 0 {
                return n;
            }
        }
    }
    // inversion on p_k = e^-m m^k / k! / (1 - e^-m), k >= 1
    let u: f64 = rng.random::<f64>() * -(-m).exp_m1();
    let mut k = 1u64;
    let mut pk = m * (-m).exp();
    let mut cdf = pk;
    while u > cdf && k < 1000 {
        k += 1;
        pk *= m / k as f64;
        cdf += pk;
    }
    k
}
