use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binned counts over strictly increasing edges (ps).
///
/// Counts are `f64` so weighted compositions share the type; histograms
/// filled from tags hold whole numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<f64>,
    #[serde(skip)]
    uniform: Option<(f64, f64)>,
}

impl Histogram {
    pub fn from_edges(bin_edges: Vec<f64>) -> Result<Self> {
        if bin_edges.len() < 2 {
            return Err(Error::param("a histogram needs at least two edges"));
        }
        if bin_edges.windows(2).any(|w| !(w[1] > w[0])) || !bin_edges.iter().all(|e| e.is_finite()) {
            return Err(Error::param("histogram edges must be finite and strictly increasing"));
        }
        let n = bin_edges.len() - 1;
        Ok(Self { bin_edges, counts: vec![0.0; n], uniform: None })
    }

    /// `n` bins of `width` starting at `lo`.
    pub fn uniform(lo: f64, width: f64, n: usize) -> Result<Self> {
        if !(width > 0.0) || n == 0 || !lo.is_finite() {
            return Err(Error::param("uniform histogram needs width > 0 and at least one bin"));
        }
        let edges = (0..=n).map(|i| lo + width * i as f64).collect();
        let mut h = Self::from_edges(edges)?;
        h.uniform = Some((lo, width));
        Ok(h)
    }

    /// `n` log-spaced bins over `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || n == 0 {
            return Err(Error::param("log histogram needs 0 < lo < hi and at least one bin"));
        }
        Self::from_edges(log_edges(lo, hi, n))
    }

    pub fn with_counts(bin_edges: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let mut h = Self::from_edges(bin_edges)?;
        if counts.len() != h.counts.len() {
            return Err(Error::param(format!(
                "{} counts for {} bins",
                counts.len(),
                h.counts.len()
            )));
        }
        if counts.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::param("histogram counts must be finite and >= 0"));
        }
        h.counts = counts;
        h.detect_uniform();
        Ok(h)
    }

    fn detect_uniform(&mut self) {
        let w = self.bin_edges[1] - self.bin_edges[0];
        let lo = self.bin_edges[0];
        let uniform = self
            .bin_edges
            .iter()
            .enumerate()
            .all(|(i, &e)| (e - (lo + w * i as f64)).abs() <= 1e-9 * w.max(e.abs()));
        self.uniform = uniform.then_some((lo, w));
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Uniform bin width, if the edges are evenly spaced.
    pub fn bin_width(&self) -> Option<f64> {
        self.uniform.map(|u| u.1)
    }

    /// Bin holding `x`; the last edge is exclusive.
    pub fn bin_index(&self, x: f64) -> Option<usize> {
        let n = self.counts.len();
        if let Some((lo, w)) = self.uniform {
            let f = (x - lo) / w;
            if !(f >= 0.0) {
                return None;
            }
            let i = f as usize;
            // guard against rounding at the edges
            let i = if i < n && x < self.bin_edges[i] { i.checked_sub(1)? } else { i };
            let i = if i < n && x >= self.bin_edges[i + 1] { i + 1 } else { i };
            return (i < n).then_some(i);
        }
        if !(x >= self.bin_edges[0]) || x >= self.bin_edges[n] {
            return None;
        }
        Some(self.bin_edges.partition_point(|&e| e <= x) - 1)
    }

    pub fn fill(&mut self, x: f64) -> bool {
        self.fill_weighted(x, 1.0)
    }

    pub fn fill_weighted(&mut self, x: f64, w: f64) -> bool {
        match self.bin_index(x) {
            Some(i) => {
                self.counts[i] += w;
                true
            }
            None => false,
        }
    }

    /// Adds another histogram with identical edges.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.bin_edges != other.bin_edges {
            return Err(Error::param("cannot merge histograms with different edges"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Count-weighted mean and standard deviation of the bin centers.
    pub fn mean_std(&self) -> Option<(f64, f64)> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let c = self.centers();
        let mean = c.iter().zip(&self.counts).map(|(x, n)| x * n).sum::<f64>() / total;
        let var = c.iter().zip(&self.counts).map(|(x, n)| n * (x - mean).powi(2)).sum::<f64>() / total;
        Some((mean, var.sqrt()))
    }

    /// Three-bin moving average (edge bins average over the bins present).
    pub fn smoothed(&self) -> Histogram {
        let n = self.counts.len();
        let counts = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                self.counts[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        Histogram { bin_edges: self.bin_edges.clone(), counts, uniform: self.uniform }
    }
}

pub(crate) fn log_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let mut e: Vec<f64> = (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect();
    e[0] = lo;
    e[n] = hi;
    e
}

/// Uniform histogram of `values` anchored at `floor(min)` covering the max.
pub fn histogram_of(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) {
        return Err(Error::param(format!("bin width must be > 0, got {bin_width}")));
    }
    let finite = values.iter().cloned().filter(|v| v.is_finite());
    let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, n) = if min.is_finite() {
        let lo = min.floor();
        (lo, (((max - lo) / bin_width).floor() as usize + 1).max(1))
    } else {
        (0.0, 1)
    };
    let mut h = Histogram::uniform(lo, bin_width, n)?;
    for &v in values {
        if v.is_finite() && !h.fill(v) {
            // max lies on the last edge after rounding
            let last = h.counts.len() - 1;
            h.counts[last] += 1.0;
        }
    }
    Ok(h)
}

/// Full width at `fraction` of the peak, from the outermost crossings,
/// linearly interpolated between bin centers. Bins beyond the ends count
/// as empty.
pub fn width_at_fraction(hist: &Histogram, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!("fraction must be in (0, 1), got {fraction}")));
    }
    let peak = hist.counts.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::InsufficientData("empty histogram".into()));
    }
    let level = fraction * peak;
    let c = hist.centers();
    let w = hist.widths();
    let n = c.len();
    let first = hist.counts.iter().position(|&x| x >= level).unwrap();
    let last = hist.counts.iter().rposition(|&x| x >= level).unwrap();
    let (x0, y0) = if first == 0 { (c[0] - w[0], 0.0) } else { (c[first - 1], hist.counts[first - 1]) };
    let left = x0 + (c[first] - x0) * (level - y0) / (hist.counts[first] - y0);
    let (x1, y1) = if last == n - 1 {
        (c[n - 1] + w[n - 1], 0.0)
    } else {
        (c[last + 1], hist.counts[last + 1])
    };
    let right = c[last] + (x1 - c[last]) * (hist.counts[last] - level) / (hist.counts[last] - y1);
    Ok(right - left)
}

/// FWHM and FW1%M, optionally after three-bin smoothing.
pub fn fwhm_fw1m(hist: &Histogram, smooth: bool) -> Result<(f64, f64)> {
    let h = if smooth { hist.smoothed() } else { hist.clone() };
    Ok((width_at_fraction(&h, 0.5)?, width_at_fraction(&h, 0.01)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn single_bin_width() {
        let h = Histogram::with_counts(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 7.0, 0.0]).unwrap();
        assert!((width_at_fraction(&h, 0.5).unwrap() - 1.0).abs() < 1e-12);
        let h = Histogram::with_counts(vec![0.0, 4.0], vec![3.0]).unwrap();
        assert!((width_at_fraction(&h, 0.5).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let h = Histogram::uniform(0.0, 1.0, 4).unwrap();
        assert!(matches!(width_at_fraction(&h, 0.5), Err(Error::InsufficientData(_))));
        assert!(width_at_fraction(&h, 1.0).is_err());
        assert!(width_at_fraction(&h, 0.0).is_err());
        assert!(Histogram::from_edges(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_width_ratio() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        let sigma = 50.0;
        let d = Normal::new(0.0, sigma).unwrap();
        let v: Vec<f64> = (0..4_000_000).map(|_| d.sample(&mut rng)).collect();
        // bins of σ/10 keep Poisson noise from creating spurious outer crossings
        let h = histogram_of(&v, 5.0).unwrap();
        let (fwhm, fw1) = fwhm_fw1m(&h, false).unwrap();
        let analytic = (100f64.ln() / 2f64.ln()).sqrt();
        assert!((analytic - 2.578).abs() < 1e-3);
        assert!((fw1 / fwhm - analytic).abs() < 0.01, "{}", fw1 / fwhm);
        assert!((fwhm - 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma).abs() < 1.5);
        let (_, s) = h.mean_std().unwrap();
        assert!((s - sigma).abs() / sigma < 0.05);
    }

    #[test]
    fn bin_lookup() {
        let h = Histogram::uniform(-10.0, 0.1, 200).unwrap();
        assert_eq!(h.bin_index(-10.0), Some(0));
        assert_eq!(h.bin_index(-10.0 + 1e-12), Some(0));
        assert_eq!(h.bin_index(10.0), None);
        assert_eq!(h.bin_index(-10.1), None);
        assert_eq!(h.bin_index(0.05), Some(100));
        let g = Histogram::log_spaced(1.0, 1000.0, 3).unwrap();
        assert_eq!(g.bin_index(5.0), Some(0));
        assert_eq!(g.bin_index(10.0), Some(1));
        assert_eq!(g.bin_index(999.0), Some(2));
        assert_eq!(g.bin_index(1000.0), None);
    }

    #[test]
    fn histogram_of_keeps_everything() {
        let v = [3.2, 3.2, 7.9, 10.0, f64::NAN];
        let h = histogram_of(&v, 1.0).unwrap();
        assert_eq!(h.total(), 4.0);
        assert_eq!(h.bin_edges[0], 3.0);
    }

    proptest! {
        #[test]
        fn width_nonincreasing_in_fraction(counts in proptest::collection::vec(0.0..1000.0f64, 1..60), f1 in 0.01..0.99f64, f2 in 0.01..0.99f64) {
            prop_assume!(counts.iter().any(|&c| c > 0.0));
            let edges: Vec<f64> = (0..=counts.len()).map(|i| i as f64 * 2.0).collect();
            let h = Histogram::with_counts(edges, counts).unwrap();
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            prop_assert!(width_at_fraction(&h, hi).unwrap() <= width_at_fraction(&h, lo).unwrap() + 1e-9);
        }
    }
}
