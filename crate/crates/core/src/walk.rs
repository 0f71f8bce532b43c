//! First- and second-order time-walk calibration and correction.
//!
//! Gaps are always measured between uncorrected tag times on the same
//! channel, so correction runs in one pass with two timestamps of state per
//! channel.

use serde::{Deserialize, Serialize};

use crate::analysis::histogram::log_edges;
use crate::analysis::{residuals, Reference};
use crate::detector::{dead_time, WireParams};
use crate::error::{Error, Result};
use crate::sim::TagRecord;

pub const CALIBRATION_FORMAT_VERSION: u32 = 1;

/// Binning and statistics thresholds for a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub n_bins: usize,
    /// Lowest bin edge (ps).
    pub dt_min: f64,
    /// Highest bin edge (ps); gaps beyond it receive no correction.
    pub dt_max: f64,
    pub min_count: u64,
    /// Tags whose previous gap exceeds this (ps) define the zero-walk baseline.
    pub isolation_cutoff: f64,
}

impl WalkConfig {
    /// 64 log bins over `[dead_time / 2, 10 τ]` with 100-count bins.
    pub fn for_wire(p: &WireParams) -> Result<Self> {
        let tau_ps = p.tau_reset() * 1e3;
        let dead = dead_time(p, 0.01).unwrap_or(0.5 * p.tau_reset()) * 1e3;
        Ok(Self {
            n_bins: 64,
            dt_min: (dead / 2.0).max(1.0),
            dt_max: 10.0 * tau_ps,
            min_count: 100,
            isolation_cutoff: 10.0 * tau_ps,
        })
    }

    fn check(&self) -> Result<()> {
        if self.n_bins == 0 || !(self.dt_min > 0.0 && self.dt_max > self.dt_min) {
            return Err(Error::param("walk bins need n_bins >= 1 and 0 < dt_min < dt_max"));
        }
        if self.min_count == 0 || !(self.isolation_cutoff > 0.0) {
            return Err(Error::param("min_count and isolation_cutoff must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkCalibration {
    pub format_version: u32,
    pub order: u8,
    /// Log-spaced gap edges (ps), shared by both axes.
    pub dt_bin_edges: Vec<f64>,
    /// Mean timing offset (ps) per Δt₁ bin.
    pub correction: Vec<f64>,
    pub counts: Vec<u64>,
    /// Row-major `[Δt₁ bin][Δt₂ bin]`, order 2 only. Δt₂ beyond the last edge
    /// falls in the last column. Unfilled cells of a row share the mean of
    /// their pooled tags, or the row's order-1 value if that pool is sparse.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correction2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub counts2: Vec<u64>,
    pub min_count: u64,
    pub isolation_cutoff: f64,
    /// Channels used and their isolated-tag mean residual (ps).
    pub baselines: Vec<(u16, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl WalkCalibration {
    /// A calibration that changes nothing.
    pub fn zero(order: u8, cfg: &WalkConfig) -> Result<Self> {
        cfg.check()?;
        check_order(order)?;
        let n = cfg.n_bins;
        Ok(Self {
            format_version: CALIBRATION_FORMAT_VERSION,
            order,
            dt_bin_edges: log_edges(cfg.dt_min, cfg.dt_max, n),
            correction: vec![0.0; n],
            counts: vec![0; n],
            correction2: if order == 2 { vec![0.0; n * n] } else { Vec::new() },
            counts2: if order == 2 { vec![0; n * n] } else { Vec::new() },
            min_count: cfg.min_count,
            isolation_cutoff: cfg.isolation_cutoff,
            baselines: Vec::new(),
            config_hash: None,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.correction.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.order)?;
        let n = self.correction.len();
        let mut v = Vec::new();
        if self.format_version != CALIBRATION_FORMAT_VERSION {
            v.push(format!("unsupported calibration format version {}", self.format_version));
        }
        if n == 0 || self.dt_bin_edges.len() != n + 1 || self.counts.len() != n {
            v.push("bin edges, corrections and counts disagree in length".into());
        }
        if self.dt_bin_edges.windows(2).any(|w| !(w[1] > w[0])) || self.dt_bin_edges.first().is_some_and(|&e| !(e > 0.0)) {
            v.push("bin edges must be positive and strictly increasing".into());
        }
        if self.order == 2 && (self.correction2.len() != n * n || self.counts2.len() != n * n) {
            v.push("order-2 table must be n_bins × n_bins".into());
        }
        if self.correction.iter().chain(&self.correction2).any(|c| !c.is_finite()) {
            v.push("corrections must be finite".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Δt₂ bin; gaps beyond the last edge share the last bin, since the
    /// second predecessor no longer matters there.
    #[inline]
    fn bin2(&self, dt: f64) -> usize {
        self.bin(dt).unwrap_or(self.correction.len() - 1)
    }

    #[inline]
    fn bin(&self, dt: f64) -> Option<usize> {
        let e = &self.dt_bin_edges;
        let n = self.correction.len();
        if !(dt < e[n]) {
            return None;
        }
        if dt < e[1] {
            return Some(0);
        }
        let (lo, hi) = (e[0].ln(), e[n].ln());
        let mut i = (((dt.ln() - lo) / (hi - lo)) * n as f64) as usize;
        i = i.min(n - 1);
        while i > 0 && dt < e[i] {
            i -= 1;
        }
        while i + 1 < n && dt >= e[i + 1] {
            i += 1;
        }
        Some(i)
    }

    /// Correction (ps) for a tag with gaps `dt1` and optionally `dt2` (ps).
    #[inline]
    pub fn lookup(&self, dt1: Option<f64>, dt2: Option<f64>) -> f64 {
        let Some(i) = dt1.and_then(|d| self.bin(d)) else {
            return 0.0;
        };
        if self.order == 2 {
            if let Some(j) = dt2.map(|d| self.bin2(d)) {
                return self.correction2[i * self.n_bins() + j];
            }
        }
        self.correction[i]
    }
}

fn check_order(order: u8) -> Result<()> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(Error::param(format!("walk correction order must be 1 or 2, got {order}")))
    }
}

/// Per-channel history of the last two uncorrected tag times.
struct History {
    last: Vec<[Option<u64>; 2]>,
}

impl History {
    fn new() -> Self {
        Self { last: Vec::new() }
    }

    /// Gaps to the previous one and two tags, then records `t`.
    #[inline]
    fn push(&mut self, channel: u16, t: u64) -> (Option<f64>, Option<f64>) {
        let c = channel as usize;
        if c >= self.last.len() {
            self.last.resize(c + 1, [None, None]);
        }
        let h = &mut self.last[c];
        let gap = |p: Option<u64>| p.map(|p| t.saturating_sub(p) as f64);
        let out = (gap(h[0]), gap(h[1]));
        *h = [Some(t), h[0]];
        out
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    sum: f64,
    n: u64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }
    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Builds a calibration from tags with a timing reference.
pub fn calibrate(tags: &[TagRecord], reference: Reference, order: u8, cfg: &WalkConfig) -> Result<WalkCalibration> {
    let mut cal = WalkCalibration::zero(order, cfg)?;
    let r = residuals(tags, reference)?;
    let n = cfg.n_bins;

    let mut hist = History::new();
    let gaps: Vec<(Option<f64>, Option<f64>)> = tags.iter().map(|t| hist.push(t.channel, t.time)).collect();

    let n_ch = tags.iter().map(|t| t.channel as usize + 1).max().unwrap_or(0);
    let mut iso = vec![Acc::default(); n_ch];
    for ((t, &(d1, _)), &res) in tags.iter().zip(&gaps).zip(&r) {
        if d1.is_none_or(|d| d > cfg.isolation_cutoff) {
            iso[t.channel as usize].add(res);
        }
    }
    let baseline: Vec<Option<f64>> = iso.iter().map(|a| (a.n >= cfg.min_count).then(|| a.mean())).collect();
    let total_iso: u64 = iso.iter().map(|a| a.n).sum();
    if baseline.iter().all(Option::is_none) {
        return Err(Error::InsufficientData(format!(
            "no channel has {} isolated tags (gap > {} ps); found {total_iso} in total",
            cfg.min_count, cfg.isolation_cutoff
        )));
    }
    for (ch, b) in baseline.iter().enumerate() {
        if b.is_none() && iso[ch].n > 0 {
            log::warn!("channel {ch}: only {} isolated tags, excluded from the walk calibration", iso[ch].n);
        }
    }
    cal.baselines = baseline.iter().enumerate().filter_map(|(c, b)| b.map(|b| (c as u16, b))).collect();

    let mut a1 = vec![Acc::default(); n];
    let mut a2 = vec![Acc::default(); if order == 2 { n * n } else { 0 }];
    for ((t, &(d1, d2)), &res) in tags.iter().zip(&gaps).zip(&r) {
        let Some(b) = baseline[t.channel as usize] else { continue };
        let Some(i) = d1.and_then(|d| cal.bin(d)) else { continue };
        let x = res - b;
        a1[i].add(x);
        if order == 2 {
            if let Some(j) = d2.map(|d| cal.bin2(d)) {
                a2[i * n + j].add(x);
            }
        }
    }

    cal.counts = a1.iter().map(|a| a.n).collect();
    let filled: Vec<bool> = a1.iter().map(|a| a.n >= cfg.min_count).collect();
    if !filled.iter().any(|&f| f) {
        log::warn!("no walk bin reached {} tags; corrections left at zero", cfg.min_count);
    } else {
        for i in 0..n {
            let src = if filled[i] { i } else { nearest_filled(&filled, i) };
            cal.correction[i] = a1[src].mean();
        }
    }
    if order == 2 {
        cal.counts2 = a2.iter().map(|a| a.n).collect();
        for i in 0..n {
            let row = &a2[i * n..(i + 1) * n];
            // sparse cells share the mean of their pooled tags, which keeps
            // the row's marginal unbiased; the row mean covers a sparse pool
            let mut pool = Acc::default();
            for a in row.iter().filter(|a| a.n < cfg.min_count) {
                pool.sum += a.sum;
                pool.n += a.n;
            }
            let sparse = if pool.n >= cfg.min_count { pool.mean() } else { cal.correction[i] };
            for j in 0..n {
                let a = row[j];
                cal.correction2[i * n + j] = if a.n >= cfg.min_count { a.mean() } else { sparse };
            }
        }
    }
    Ok(cal)
}

fn nearest_filled(filled: &[bool], i: usize) -> usize {
    for d in 1..filled.len() {
        if i >= d && filled[i - d] {
            return i - d;
        }
        if i + d < filled.len() && filled[i + d] {
            return i + d;
        }
    }
    i
}

/// Corrected time (ps, unrounded) for every tag, input order preserved.
pub fn correct_times(tags: &[TagRecord], cal: &WalkCalibration) -> Result<Vec<f64>> {
    cal.validate()?;
    let mut hist = History::new();
    Ok(tags
        .iter()
        .map(|t| {
            let (d1, d2) = hist.push(t.channel, t.time);
            t.time as f64 - cal.lookup(d1, d2)
        })
        .collect())
}

/// Subtracts the looked-up correction from every tag, rounds to whole
/// picoseconds, and re-sorts by `(time, channel)`. The first one or two
/// tags of each channel lack history and receive the order-1 value or
/// none.
pub fn apply(tags: &[TagRecord], cal: &WalkCalibration) -> Result<Vec<TagRecord>> {
    let mut out = Vec::with_capacity(tags.len());
    let mut stream = WalkCorrector::new(cal)?;
    for t in tags {
        out.push(stream.correct(*t));
    }
    if out.windows(2).any(|w| w[0].key() > w[1].key()) {
        out.sort_by_key(TagRecord::key);
    }
    Ok(out)
}

/// Constant-memory streaming corrector. Output order follows input order;
/// callers re-sort if needed.
pub struct WalkCorrector<'a> {
    cal: &'a WalkCalibration,
    hist: History,
}

impl<'a> WalkCorrector<'a> {
    pub fn new(cal: &'a WalkCalibration) -> Result<Self> {
        cal.validate()?;
        Ok(Self { cal, hist: History::new() })
    }

    #[inline]
    pub fn correct(&mut self, t: TagRecord) -> TagRecord {
        let (d1, d2) = self.hist.push(t.channel, t.time);
        let c = self.cal.lookup(d1, d2);
        let time = (t.time as f64 - c).round().max(0.0) as u64;
        TagRecord { time, ..t }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TruthRecord;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Exp, Normal};

    fn cfg() -> WalkConfig {
        WalkConfig::for_wire(&WireParams::default()).unwrap()
    }

    fn truth_at(photon_time: f64) -> TruthRecord {
        TruthRecord {
            photon_time,
            detection_time: photon_time,
            channel: 0,
            dt_prev: f64::INFINITY,
            dt_prev2: f64::INFINITY,
            pulse_amplitude: 1.0,
        }
    }

    /// Dead-time-limited photon times with walk `w(Δt₁) + v(Δt₂)` and noise.
    fn synthetic(n: usize, walk: impl Fn(f64, f64) -> f64, noise: f64, seed: u64) -> (Vec<TagRecord>, Vec<TruthRecord>) {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let gap = Exp::new(1.0 / 20_000.0).unwrap();
        let z = Normal::new(0.0, noise).unwrap();
        let (mut t, mut prev, mut prev2) = (0.0f64, None::<f64>, None::<f64>);
        let mut tags = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for _ in 0..n {
            t += 3000.0 + gap.sample(&mut rng);
            let d1 = prev.map_or(f64::INFINITY, |p| t - p);
            let d2 = prev2.map_or(f64::INFINITY, |p| t - p);
            let tag = t + 50.0 + walk(d1, d2) + z.sample(&mut rng);
            tags.push(TagRecord::new(0, tag.round() as u64));
            truth.push(truth_at(t));
            prev2 = prev;
            prev = Some(t);
        }
        (tags, truth)
    }

    #[test]
    fn walk_free_stream_gives_zero_table() {
        let (tags, truth) = synthetic(200_000, |_, _| 0.0, 5.0, 1);
        let cal = calibrate(&tags, Reference::Truth(&truth), 1, &cfg()).unwrap();
        for (c, &n) in cal.correction.iter().zip(&cal.counts) {
            if n >= 100 {
                assert!(c.abs() < 4.0 * 5.0 / (n as f64).sqrt() + 0.5, "{c} from {n}");
            }
        }
        let out = apply(&tags, &cal).unwrap();
        let moved = tags.iter().zip(&out).filter(|(a, b)| a.time.abs_diff(b.time) > 2).count();
        assert!(moved < tags.len() / 100);
    }

    #[test]
    fn recovers_injected_walk() {
        let w = |d1: f64, _| if d1.is_finite() { 300.0 * (-d1 / 6800.0).exp() } else { 0.0 };
        let (tags, truth) = synthetic(400_000, w, 3.0, 2);
        let cal = calibrate(&tags, Reference::Truth(&truth), 1, &cfg()).unwrap();
        let e = &cal.dt_bin_edges;
        for i in 0..cal.n_bins() {
            if cal.counts[i] < 100 {
                continue;
            }
            // gaps are measured between walked tags, so a bin sees true gaps
            // up to one walk amplitude plus noise beyond its edges
            let delta = 300.0 + 6.0 * 3.0;
            let (hi, lo) = (w(e[i] - delta, 0.0), w(e[i + 1] + delta, 0.0));
            let stat = 3.0 * 3.0 / (cal.counts[i] as f64).sqrt() + 0.5;
            assert!(cal.correction[i] <= hi + stat && cal.correction[i] >= lo - stat, "bin {i}");
        }
    }

    #[test]
    fn order_two_marginalizes_to_order_one() {
        let w = |d1: f64, _| if d1.is_finite() { 200.0 * (-d1 / 6800.0).exp() } else { 0.0 };
        let (tags, truth) = synthetic(1_000_000, w, 2.0, 3);
        let c1 = calibrate(&tags, Reference::Truth(&truth), 1, &cfg()).unwrap();
        let c2 = calibrate(&tags, Reference::Truth(&truth), 2, &cfg()).unwrap();
        let n = c2.n_bins();
        assert_eq!(c1.correction, c2.correction);
        for i in 0..n {
            for j in 0..n {
                let k = c2.counts2[i * n + j];
                if k >= 100 {
                    // within-bin walk spread plus statistics
                    let spread = w(c2.dt_bin_edges[i], 0.0) - w(c2.dt_bin_edges[i + 1], 0.0);
                    let tol = spread + 3.0 * 2.0 / (k as f64).sqrt() + 0.5;
                    assert!((c2.correction2[i * n + j] - c1.correction[i]).abs() < tol, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn baseline_requires_isolated_tags() {
        let tags: Vec<_> = (0..1000).map(|k| TagRecord::new(0, 5000 * k)).collect();
        let truth: Vec<_> = tags.iter().map(|t| truth_at(t.time as f64)).collect();
        let r = calibrate(&tags, Reference::Truth(&truth), 1, &cfg());
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn zero_calibration_is_identity() {
        let (tags, _) = synthetic(10_000, |_, _| 0.0, 5.0, 4);
        for order in [1, 2] {
            assert_eq!(apply(&tags, &WalkCalibration::zero(order, &cfg()).unwrap()).unwrap(), tags);
        }
        assert!(WalkCalibration::zero(3, &cfg()).is_err());
    }

    #[test]
    fn beyond_last_edge_is_uncorrected() {
        let mut cal = WalkCalibration::zero(2, &cfg()).unwrap();
        cal.correction.iter_mut().for_each(|c| *c = 7.0);
        cal.correction2.iter_mut().for_each(|c| *c = 9.0);
        let hi = *cal.dt_bin_edges.last().unwrap();
        assert_eq!(cal.lookup(Some(hi), None), 0.0);
        assert_eq!(cal.lookup(None, None), 0.0);
        assert_eq!(cal.lookup(Some(hi / 2.0), None), 7.0);
        let n = cal.n_bins();
        cal.correction2[(n - 1) * n + n - 1] = 11.0;
        assert_eq!(cal.lookup(Some(hi * 0.99), Some(hi * 2.0)), 11.0);
        assert_eq!(cal.lookup(Some(hi / 2.0), Some(hi * 2.0)), 9.0);
        assert_eq!(cal.lookup(Some(hi / 4.0), Some(hi / 2.0)), 9.0);
        assert_eq!(cal.lookup(Some(1.0), None), 7.0);
    }

    #[test]
    fn bin_lookup_matches_search() {
        let cal = WalkCalibration::zero(1, &cfg()).unwrap();
        let e = &cal.dt_bin_edges;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let x = e[0] * (e[64] / e[0]).powf(rng.random::<f64>());
            let want = e.partition_point(|&b| b <= x) - 1;
            assert_eq!(cal.bin(x), Some(want.min(63)));
        }
        for &x in e.iter().take(64) {
            assert_eq!(cal.bin(x), Some(e.partition_point(|&b| b <= x) - 1));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn apply_preserves_count_and_channels(seed in 0u64..1000, order in 1u8..=2) {
            let w = |d1: f64, d2: f64| {
                let a = if d1.is_finite() { 100.0 * (-d1 / 6800.0).exp() } else { 0.0 };
                let b = if d2.is_finite() { 30.0 * (-d2 / 6800.0).exp() } else { 0.0 };
                a + b
            };
            let (tags, truth) = synthetic(50_000, w, 4.0, seed);
            let cal = calibrate(&tags, Reference::Truth(&truth), order, &cfg()).unwrap();
            let out = apply(&tags, &cal).unwrap();
            prop_assert_eq!(out.len(), tags.len());
            let mut a: Vec<_> = tags.iter().map(|t| (t.channel, t.flags)).collect();
            let mut b: Vec<_> = out.iter().map(|t| (t.channel, t.flags)).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            prop_assert!(out.windows(2).all(|w| w[0].key() <= w[1].key()));
        }

        #[test]
        fn per_bin_residual_is_zero_after_correction(seed in 0u64..1000) {
            let w = |d1: f64, _| if d1.is_finite() { 250.0 * (-d1 / 6800.0).exp() } else { 0.0 };
            let (tags, truth) = synthetic(100_000, w, 6.0, seed);
            let cal = calibrate(&tags, Reference::Truth(&truth), 1, &cfg()).unwrap();
            let fixed = correct_times(&tags, &cal).unwrap();
            let base = cal.baselines[0].1;
            let mut acc = vec![(0.0, 0.0, 0u64); cal.n_bins()];
            let mut prev = None;
            for ((t, f), tr) in tags.iter().zip(&fixed).zip(&truth) {
                if let Some(p) = prev {
                    if let Some(i) = cal.bin((t.time - p) as f64) {
                        let r = f - tr.photon_time - base;
                        acc[i].0 += r;
                        acc[i].1 += r * r;
                        acc[i].2 += 1;
                    }
                }
                prev = Some(t.time);
            }
            for (s, s2, n) in acc {
                if n >= 100 {
                    let m = s / n as f64;
                    let sd = (s2 / n as f64 - m * m).max(0.0).sqrt();
                    prop_assert!(m.abs() <= 3.0 * sd / (n as f64).sqrt() + 1e-9);
                }
            }
        }
    }
}
