use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use super::pulse::{Crossing, PulseShape, Waveform};
use super::source::check_duration;
use super::{ns_to_ps, stream_rng, DiscriminatorConfig, Purpose, TagRecord, TruthRecord, FLAG_DARK};
use crate::detector::{dark_count_rate, ide, recovery_current_unchecked, WireParams};
use crate::error::{Error, Result};

/// Event counters for one simulated wire.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct WireStats {
    pub arrivals: u64,
    pub dark_events: u64,
    pub detections: u64,
    pub dark_detections: u64,
    pub tags: u64,
    /// Detections whose pulse started while the waveform was above threshold.
    pub lost_above_threshold: u64,
    /// Detections whose pulse never reached the threshold.
    pub lost_below_threshold: u64,
    pub latched: bool,
}

#[derive(Debug, Clone, Default)]
pub struct WireOutput {
    pub tags: Vec<TagRecord>,
    /// One record per tag, in the same order.
    pub truth: Vec<TruthRecord>,
    pub stats: WireStats,
}

/// Runs one wire over sorted photon arrivals (ns) in `[0, duration)`.
///
/// Dark counts are drawn internally at `dark_count_rate(i_bias)`.
pub fn simulate_wire(
    arrivals: &[f64],
    channel: u16,
    p: &WireParams,
    d: &DiscriminatorConfig,
    duration: f64,
    seed: u64,
) -> Result<WireOutput> {
    p.validate()?;
    d.validate()?;
    check_duration(duration)?;
    if let Some(i) = arrivals.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(Error::Unsorted(format!(
            "arrival {} at {} ns precedes arrival {} at {} ns",
            i + 1,
            arrivals[i + 1],
            i,
            arrivals[i]
        )));
    }
    if arrivals.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::param("arrival times must be >= 0"));
    }

    let dark = dark_times(p, channel, duration, seed)?;
    let mut rng = stream_rng(seed, channel as u64, Purpose::Detection);
    let shape = PulseShape::new(p.tau_rise(), p.tau_reset(), d.ac_coupling_tau_ns)?;
    let mut wave = Waveform::new(shape);

    let i_bias = p.i_bias();
    let eta_max = p.eta_max();
    let full_amp = p.pulse_amp_per_current * i_bias;
    let threshold = d.threshold_fraction * full_amp;
    let latching = p.is_latching();
    if latching {
        log::warn!(
            "channel {channel}: bias {i_bias:.3} µA is at or above the latching current {:.3} µA; the wire latches after its first detection",
            p.i_latch
        );
    }

    let mut out = WireOutput::default();
    out.stats.arrivals = arrivals.len() as u64;
    out.stats.dark_events = dark.len() as u64;
    out.stats.latched = latching;

    let mut last: Option<f64> = None;
    let mut last2: Option<f64> = None;
    let (mut ia, mut id) = (0, 0);
    loop {
        let (t, is_dark) = match (arrivals.get(ia), dark.get(id)) {
            (Some(&a), Some(&b)) if b < a => {
                id += 1;
                (b, true)
            }
            (Some(&a), _) => {
                ia += 1;
                (a, false)
            }
            (None, Some(&b)) => {
                id += 1;
                (b, true)
            }
            (None, None) => break,
        };
        let current = match last {
            Some(t0) => recovery_current_unchecked(t - t0, p),
            None => i_bias,
        };
        let eta = ide(current, p);
        let prob = if is_dark {
            if eta_max > 0.0 { eta / eta_max } else { 0.0 }
        } else {
            eta
        };
        let u: f64 = rng.random();
        if u >= prob {
            continue;
        }
        out.stats.detections += 1;
        if is_dark {
            out.stats.dark_detections += 1;
        }
        let amplitude = p.pulse_amp_per_current * current;
        wave.add_pulse(t, amplitude);
        match wave.find_crossing(threshold) {
            Crossing::At { time, slope } => {
                let mut jitter_ps = 0.0;
                if d.amp_noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    jitter_ps += ns_to_ps(z * d.amp_noise_sigma / slope);
                }
                if d.electronics_jitter_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    jitter_ps += z * d.electronics_jitter_sigma;
                }
                if d.electronics_jitter_tail_ps > 0.0 {
                    let e: f64 = Exp1.sample(&mut rng);
                    jitter_ps += e * d.electronics_jitter_tail_ps;
                }
                let tag_ps = (ns_to_ps(time) + jitter_ps).round().max(0.0);
                out.tags.push(TagRecord {
                    channel,
                    flags: if is_dark { FLAG_DARK } else { 0 },
                    time: tag_ps as u64,
                });
                out.truth.push(TruthRecord {
                    photon_time: ns_to_ps(t),
                    detection_time: ns_to_ps(time),
                    channel,
                    dt_prev: last.map_or(f64::INFINITY, |t0| ns_to_ps(t - t0)),
                    dt_prev2: last2.map_or(f64::INFINITY, |t0| ns_to_ps(t - t0)),
                    pulse_amplitude: amplitude,
                });
                out.stats.tags += 1;
            }
            Crossing::AlreadyAbove => out.stats.lost_above_threshold += 1,
            Crossing::Below => out.stats.lost_below_threshold += 1,
        }
        last2 = last;
        last = Some(t);
        if latching && out.stats.tags > 0 {
            break;
        }
    }
    sort_paired(&mut out);
    Ok(out)
}

fn dark_times(p: &WireParams, channel: u16, duration: f64, seed: u64) -> Result<Vec<f64>> {
    let rate = dark_count_rate(p.i_bias(), p)?;
    let mut out = Vec::new();
    if rate <= 0.0 {
        return Ok(out);
    }
    let mut rng = stream_rng(seed, channel as u64, Purpose::Dark);
    let mean_gap = 1e9 / rate;
    let mut t = 0.0;
    loop {
        let e: f64 = Exp1.sample(&mut rng);
        t += e * mean_gap;
        if t >= duration {
            return Ok(out);
        }
        out.push(t);
    }
}

/// Timing jitter can swap tags that are much closer than the dead time.
fn sort_paired(out: &mut WireOutput) {
    if out.tags.windows(2).all(|w| w[0].time <= w[1].time) {
        return;
    }
    let mut idx: Vec<usize> = (0..out.tags.len()).collect();
    idx.sort_by_key(|&i| out.tags[i].time);
    out.tags = idx.iter().map(|&i| out.tags[i]).collect();
    out.truth = idx.iter().map(|&i| out.truth[i]).collect();
}
