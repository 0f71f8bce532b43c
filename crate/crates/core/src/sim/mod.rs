//! Event-driven Monte Carlo of the array: photons, detections, pulses, tags.
//!
//! Internal times are `f64` nanoseconds. Emitted tags are integer
//! picoseconds; truth records keep sub-picosecond `f64` picoseconds.

mod array;
mod crosstalk;
mod pulse;
mod source;
mod wire;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

pub use array::{merge_streams, simulate_array, ArrayOutput};
pub use crosstalk::{inject_crosstalk, neighbor_channel};
pub use pulse::{Crossing, PulseShape, Waveform};
pub use source::{generate_arrivals, generate_wire_arrivals, PhotonSource, SourceKind};
pub use wire::{simulate_wire, WireOutput, WireStats};

use crate::error::{Error, Result};

pub const FLAG_DARK: u16 = 1;
pub const FLAG_CROSSTALK: u16 = 2;

/// One time tag as written by a time tagger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagRecord {
    pub channel: u16,
    /// Bit 0 dark count, bit 1 cross-talk.
    pub flags: u16,
    /// ps
    pub time: u64,
}

impl TagRecord {
    pub fn new(channel: u16, time: u64) -> Self {
        Self { channel, flags: 0, time }
    }

    pub fn is_dark(&self) -> bool {
        self.flags & FLAG_DARK != 0
    }

    pub fn is_crosstalk(&self) -> bool {
        self.flags & FLAG_CROSSTALK != 0
    }

    #[inline]
    pub fn key(&self) -> (u64, u16) {
        (self.time, self.channel)
    }
}

/// Ground truth kept alongside each emitted tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    /// ps; for dark counts, the time of the dark event.
    pub photon_time: f64,
    /// Noise-free threshold crossing, ps.
    pub detection_time: f64,
    pub channel: u16,
    /// ps since the previous detection on this channel; infinite if none.
    pub dt_prev: f64,
    pub dt_prev2: f64,
    /// mV
    pub pulse_amplitude: f64,
}

/// Constant-threshold discriminator and timing electronics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    /// Fraction of the full-amplitude pulse height.
    pub threshold_fraction: f64,
    /// RMS voltage noise at the discriminator (mV).
    pub amp_noise_sigma: f64,
    /// Gaussian timing jitter of the electronics (ps).
    pub electronics_jitter_sigma: f64,
    /// Mean of an exponential tail added to the electronics jitter (ps).
    pub electronics_jitter_tail_ps: f64,
    /// First-order AC-coupling high-pass time constant (ns). `None` sums
    /// the pulses with a DC-coupled baseline.
    pub ac_coupling_tau_ns: Option<f64>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.25,
            amp_noise_sigma: 2.0,
            electronics_jitter_sigma: 6.9,
            electronics_jitter_tail_ps: 8.1,
            ac_coupling_tau_ns: Some(3.0),
        }
    }
}

impl DiscriminatorConfig {
    /// A noiseless discriminator with no electronics jitter.
    pub fn ideal() -> Self {
        Self {
            amp_noise_sigma: 0.0,
            electronics_jitter_sigma: 0.0,
            electronics_jitter_tail_ps: 0.0,
            ..Self::default()
        }
    }

    pub fn violations(&self, path: &str) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction < 1.0) {
            v.push(format!("{path}: threshold_fraction must be in (0, 1)"));
        }
        for (name, x) in [
            ("amp_noise_sigma", self.amp_noise_sigma),
            ("electronics_jitter_sigma", self.electronics_jitter_sigma),
            ("electronics_jitter_tail_ps", self.electronics_jitter_tail_ps),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("{path}: {name} must be >= 0"));
            }
        }
        if let Some(t) = self.ac_coupling_tau_ns {
            if !(t > 0.0 && t.is_finite()) {
                v.push(format!("{path}: ac_coupling_tau_ns must be > 0"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("discriminator");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
pub(crate) enum Purpose {
    Arrivals = 0,
    Detection = 1,
    Dark = 2,
    Crosstalk = 3,
}

/// Independent random stream for `(seed, channel, purpose)`.
pub(crate) fn stream_rng(seed: u64, channel: u64, purpose: Purpose) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((channel << 8) | purpose as u64);
    rng
}

#[inline]
pub(crate) fn ns_to_ps(t: f64) -> f64 {
    t * 1e3
}
