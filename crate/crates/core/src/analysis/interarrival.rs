use crate::analysis::Histogram;
use crate::detector::{ide_vs_delay_unchecked, WireParams};
use crate::error::{Error, Result};
use crate::sim::TagRecord;

/// Successive same-channel tag gaps (ps), binned from zero.
pub fn interarrival_histogram(tags: &[TagRecord], channel: u16, bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) {
        return Err(Error::param(format!("bin width must be > 0, got {bin_width}")));
    }
    let gaps = channel_gaps(tags, channel)?;
    let max = gaps.iter().cloned().max().unwrap_or(0) as f64;
    let n = ((max / bin_width).floor() as usize + 1).max(1);
    let mut h = Histogram::uniform(0.0, bin_width, n)?;
    for g in gaps {
        h.fill(g as f64);
    }
    Ok(h)
}

fn channel_gaps(tags: &[TagRecord], channel: u16) -> Result<Vec<u64>> {
    let mut prev: Option<u64> = None;
    let mut gaps = Vec::new();
    for t in tags.iter().filter(|t| t.channel == channel) {
        if let Some(p) = prev {
            if t.time < p {
                return Err(Error::Unsorted(format!("channel {channel}: tag at {} ps after {p} ps", t.time)));
            }
            gaps.push(t.time - p);
        }
        prev = Some(t.time);
    }
    Ok(gaps)
}

/// Result of fitting the rising edge of an inter-arrival histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetFit {
    /// ns
    pub tau_reset: f64,
    pub scale: f64,
    /// sqrt(SSE / Σ y²) over the fitted region.
    pub residual: f64,
    pub counts_used: f64,
}

/// Fits `a · ide_vs_delay(t; τ) · S(t)` to the bins below `5 τ₀`, where `τ₀`
/// is the reset time of `p`. Histogram times are ps.
///
/// `S(t) = exp(-λ ∫₀ᵗ η)` is the chance that no earlier photon was detected;
/// `λ η∞` is the exponential decay rate of the bins beyond `5 τ₀`, which is
/// zero for a flat tail and reduces the model to `a · ide_vs_delay`.
pub fn fit_reset_time(hist: &Histogram, p: &WireParams) -> Result<ResetFit> {
    p.validate()?;
    let tau0 = p.tau_reset();
    let t_cut = 5.0 * tau0;
    let eta_inf = p.eta_max();
    let lambda = if eta_inf > 0.0 { tail_rate(hist, t_cut) / eta_inf } else { 0.0 };
    let region: Vec<(f64, f64)> = hist
        .centers()
        .into_iter()
        .zip(hist.counts.iter().cloned())
        .filter(|&(t, _)| t * 1e-3 < 5.0 * tau0)
        .map(|(t, y)| (t * 1e-3, y))
        .collect();
    let used: f64 = region.iter().map(|r| r.1).sum();
    if used < 1000.0 {
        return Err(Error::InsufficientData(format!(
            "rising edge below {:.3} ns holds {used} counts; at least 1000 are needed",
            5.0 * tau0
        )));
    }
    let sum_y2: f64 = region.iter().map(|r| r.1 * r.1).sum();
    let profile = |tau: f64| -> (f64, f64) {
        let q = WireParams { l_kinetic: tau * p.r_load, ..p.clone() };
        let (mut ym, mut mm) = (0.0, 0.0);
        let step = (tau / 400.0).min(t_cut / 400.0);
        let (mut s, mut acc, mut e_prev) = (0.0, 0.0, ide_vs_delay_unchecked(0.0, &q));
        for &(t, y) in &region {
            // region is sorted, so ∫η advances monotonically
            while s < t {
                let ds = step.min(t - s);
                let e = ide_vs_delay_unchecked(s + ds, &q);
                acc += 0.5 * (e + e_prev) * ds;
                e_prev = e;
                s += ds;
            }
            let m = ide_vs_delay_unchecked(t, &q) * (-lambda * acc).exp();
            ym += y * m;
            mm += m * m;
        }
        if mm == 0.0 {
            return (sum_y2, 0.0);
        }
        (sum_y2 - ym * ym / mm, ym / mm)
    };
    // coarse log scan then golden section on ln τ
    let (lo, hi) = ((tau0 / 20.0).ln(), (tau0 * 20.0).ln());
    let n = 240;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let best = (0..=n)
        .min_by(|&a, &b| profile(grid[a].exp()).0.total_cmp(&profile(grid[b].exp()).0))
        .unwrap();
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (profile(c.exp()).0, profile(d.exp()).0);
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = profile(c.exp()).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = profile(d.exp()).0;
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let tau = (0.5 * (a + b)).exp();
    let (sse, scale) = profile(tau);
    Ok(ResetFit {
        tau_reset: tau,
        scale,
        residual: (sse.max(0.0) / sum_y2).sqrt(),
        counts_used: used,
    })
}

/// Decay rate (1/ns) of an exponential truncated to `[t_start, last edge]`
/// matching the mean of the histogram above `t_start` (ns).
fn tail_rate(hist: &Histogram, t_start: f64) -> f64 {
    let (mut n, mut sum) = (0.0, 0.0);
    for (c, &y) in hist.centers().into_iter().zip(&hist.counts) {
        let t = c * 1e-3;
        if t >= t_start {
            n += y;
            sum += y * (t - t_start);
        }
    }
    let len = *hist.bin_edges.last().unwrap() * 1e-3 - t_start;
    if n < 100.0 || !(len > 0.0) {
        return 0.0;
    }
    let mean = sum / n;
    // mean of the truncated exponential, decreasing in k from len / 2
    let trunc_mean = |k: f64| 1.0 / k - len / (k * len).exp_m1();
    if mean >= trunc_mean(1e-9 / len) {
        return 0.0;
    }
    let (mut lo, mut hi) = (1e-9 / len, 1.0 / mean);
    while trunc_mean(hi) > mean {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if trunc_mean(mid) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(p: &WireParams, scale: f64) -> Histogram {
        let bw = 100.0;
        let mut h = Histogram::uniform(0.0, bw, 600).unwrap();
        for (i, c) in h.centers().into_iter().enumerate() {
            h.counts[i] = (scale * ide_vs_delay_unchecked(c * 1e-3, p)).round();
        }
        h
    }

    #[test]
    fn periodic_tags_fill_one_bin() {
        let tags: Vec<_> = (0..100).map(|k| TagRecord::new(2, 5000 * k)).collect();
        let h = interarrival_histogram(&tags, 2, 100.0).unwrap();
        assert_eq!(h.total(), 99.0);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0.0).count(), 1);
        assert_eq!(h.counts[50], 99.0);
        assert_eq!(interarrival_histogram(&tags, 1, 100.0).unwrap().total(), 0.0);
    }

    #[test]
    fn round_trip_tau() {
        for &tau in &[6.8, 1.0] {
            let p = WireParams { l_kinetic: tau * 100.0, ..WireParams::default() };
            let h = synthetic(&p, 1000.0);
            let guess = WireParams { l_kinetic: 0.8 * tau * 100.0, ..p.clone() };
            let fit = fit_reset_time(&h, &guess).unwrap();
            assert!((fit.tau_reset - tau).abs() / tau < 0.02, "{tau} -> {}", fit.tau_reset);
        }
    }

    #[test]
    fn counts_scale_free() {
        let p = WireParams::default();
        let a = fit_reset_time(&synthetic(&p, 1000.0), &p).unwrap();
        let b = fit_reset_time(&synthetic(&p, 10000.0), &p).unwrap();
        assert!((a.tau_reset - b.tau_reset).abs() < 1e-3);
        assert!((a.tau_reset - 6.8).abs() < 0.1);
    }

    /// Renewal density λ η(t) S(t) at a rate where S decays noticeably.
    fn renewal_density(p: &WireParams, rate: f64, scale: f64) -> Histogram {
        let bw = 20.0;
        let lambda = rate * 1e-9;
        let mut h = Histogram::uniform(0.0, bw, 40_000).unwrap();
        let (mut acc, mut t, dt) = (0.0, 0.0, 1e-3);
        for (i, c) in h.centers().into_iter().enumerate() {
            while t < c * 1e-3 {
                acc += ide_vs_delay_unchecked(t + 0.5 * dt, p) * dt;
                t += dt;
            }
            h.counts[i] = (scale * ide_vs_delay_unchecked(c * 1e-3, p) * (-lambda * acc).exp()).round();
        }
        h
    }

    #[test]
    fn survival_decay_does_not_bias_tau() {
        let p = WireParams::default();
        let h = renewal_density(&p, 2e7, 500.0);
        let fit = fit_reset_time(&h, &WireParams { l_kinetic: 600.0, ..p.clone() }).unwrap();
        assert!((fit.tau_reset - 6.8).abs() / 6.8 < 0.02, "{}", fit.tau_reset);
    }

    #[test]
    fn flat_tail_has_zero_rate() {
        let p = WireParams::default();
        assert!(tail_rate(&synthetic(&p, 1000.0), 34.0) < 1e-8);
        let r = tail_rate(&renewal_density(&p, 2e7, 500.0), 34.0);
        assert!((r - 2e7 * 1e-9 * p.eta_max()).abs() / 0.02 < 0.02, "{r}");
    }

    #[test]
    fn refuses_sparse_histograms() {
        let p = WireParams::default();
        let h = synthetic(&p, 1.0);
        assert!(matches!(fit_reset_time(&h, &p), Err(Error::InsufficientData(_))));
    }
}
