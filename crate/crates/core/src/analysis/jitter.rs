use crate::analysis::histogram::{histogram_of, Histogram};
use crate::error::{Error, Result};
use crate::sim::{TagRecord, TruthRecord};

/// Timing reference for a residual `tag_time - reference`.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// True photon times, one record per tag.
    Truth(&'a [TruthRecord]),
    /// Laser sync with period and phase in ps.
    Sync { period_ps: f64, phase_ps: f64 },
}

impl Reference<'_> {
    pub fn sync(period_ps: f64) -> Self {
        Reference::Sync { period_ps, phase_ps: 0.0 }
    }
}

/// Residual of every tag against the reference (ps). Sync residuals are
/// folded into `[-period/2, period/2)`.
pub fn residuals(tags: &[TagRecord], reference: Reference) -> Result<Vec<f64>> {
    match reference {
        Reference::Truth(truth) => {
            if truth.len() != tags.len() {
                return Err(Error::param(format!(
                    "{} truth records for {} tags",
                    truth.len(),
                    tags.len()
                )));
            }
            Ok(tags.iter().zip(truth).map(|(t, r)| t.time as f64 - r.photon_time).collect())
        }
        Reference::Sync { period_ps, phase_ps } => {
            if !(period_ps > 0.0 && period_ps.is_finite()) {
                return Err(Error::param(format!("sync period must be > 0, got {period_ps}")));
            }
            Ok(tags.iter().map(|t| fold(t.time as f64 - phase_ps, period_ps)).collect())
        }
    }
}

fn fold(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period / 2.0 {
        r - period
    } else {
        r
    }
}

/// Histogram of residuals against the reference.
pub fn jitter_histogram(tags: &[TagRecord], reference: Reference, bin_width: f64) -> Result<Histogram> {
    histogram_of(&residuals(tags, reference)?, bin_width)
}

/// Sums IRFs weighted by each wire's count rate. Every wire takes the IRF
/// whose rate is nearest in log space; IRFs are normalized to unit area,
/// so the result's total equals the summed rates.
///
/// IRFs must share a bin width and lie on a common grid.
pub fn compose_array_jitter(rates: &[f64], irf_library: &[(f64, Histogram)]) -> Result<Histogram> {
    if irf_library.is_empty() {
        return Err(Error::param("IRF library is empty"));
    }
    if rates.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::param("wire rates must be finite and >= 0"));
    }
    if irf_library.iter().any(|(r, h)| !(*r > 0.0) || !(h.total() > 0.0)) {
        return Err(Error::param("library rates must be > 0 and IRFs non-empty"));
    }
    let width = irf_library[0]
        .1
        .bin_width()
        .ok_or_else(|| Error::param("IRFs must have uniform bins"))?;
    let origin = irf_library[0].1.bin_edges[0];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, h) in irf_library {
        let w = h.bin_width().ok_or_else(|| Error::param("IRFs must have uniform bins"))?;
        let shift = (h.bin_edges[0] - origin) / width;
        if (w - width).abs() > 1e-9 * width || (shift - shift.round()).abs() > 1e-6 {
            return Err(Error::param("IRFs must share bin width and grid"));
        }
        lo = lo.min(h.bin_edges[0]);
        hi = hi.max(*h.bin_edges.last().unwrap());
    }
    let n = ((hi - lo) / width).round() as usize;
    let mut out = Histogram::uniform(lo, width, n)?;
    for &rate in rates {
        if rate == 0.0 {
            continue;
        }
        let (_, irf) = irf_library
            .iter()
            .min_by(|a, b| (a.0.ln() - rate.ln()).abs().total_cmp(&(b.0.ln() - rate.ln()).abs()))
            .unwrap();
        let offset = ((irf.bin_edges[0] - lo) / width).round() as usize;
        let scale = rate / irf.total();
        for (i, c) in irf.counts.iter().enumerate() {
            out.counts[offset + i] += c * scale;
        }
    }
    Ok(out)
}
