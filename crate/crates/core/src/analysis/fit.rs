use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;

use crate::detector::{ide, WireParams};
use crate::error::{Error, Result};

/// Fitted efficiency curve parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdeFit {
    pub i_detect: f64,
    pub sigma: f64,
    pub scale: f64,
    pub residual: f64,
}

struct PcrCost<'a> {
    data: &'a [(f64, f64)],
    base: WireParams,
}

impl PcrCost<'_> {
    /// Sum of squares and best scale for `(i_detect, ln σ)`.
    fn profile(&self, x: &[f64]) -> (f64, f64) {
        let p = WireParams { i_detect: x[0], sigma: x[1].exp(), ..self.base.clone() };
        let (mut ym, mut mm, mut yy) = (0.0, 0.0, 0.0);
        for &(i, y) in self.data {
            let m = ide(i, &p);
            ym += y * m;
            mm += m * m;
            yy += y * y;
        }
        if mm == 0.0 {
            return (yy, 0.0);
        }
        (yy - ym * ym / mm, ym / mm)
    }
}

impl CostFunction for PcrCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.profile(x).0)
    }
}

/// Least-squares fit of `a · ide(i)` to photon count rate versus bias
/// `(i_bias µA, counts)`, starting from `p_init`.
pub fn fit_ide_curve(pcr: &[(f64, f64)], p_init: &WireParams) -> Result<IdeFit> {
    if pcr.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points; need at least 3", pcr.len())));
    }
    if pcr.iter().any(|&(i, y)| !i.is_finite() || !(y >= 0.0) || !y.is_finite()) {
        return Err(Error::param("count rate data must be finite with counts >= 0"));
    }
    let yy: f64 = pcr.iter().map(|r| r.1 * r.1).sum();
    if yy == 0.0 {
        return Err(Error::InsufficientData("all counts are zero".into()));
    }
    let cost = PcrCost { data: pcr, base: p_init.clone() };
    let x0 = vec![p_init.i_detect, p_init.sigma.ln()];
    let span = pcr.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max)
        - pcr.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let step = (0.1 * span).max(0.1);
    let simplex = vec![x0.clone(), vec![x0[0] + step, x0[1]], vec![x0[0], x0[1] + 0.5]];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-14)
        .map_err(|e| Error::param(e.to_string()))?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(5000))
        .run()
        .map_err(|e| Error::param(format!("fit failed: {e}")))?;
    let best = res
        .state()
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::InsufficientData("fit did not converge".into()))?;
    let cost = PcrCost { data: pcr, base: p_init.clone() };
    let (sse, scale) = cost.profile(&best);
    Ok(IdeFit { i_detect: best[0], sigma: best[1].exp(), scale, residual: (sse.max(0.0) / yy).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1b() -> WireParams {
        WireParams { i_detect: 10.5, sigma: 0.5, i_switch: 14.0, i_latch: 15.0, ..WireParams::default() }
    }

    fn pcr(p: &WireParams, scale: f64) -> Vec<(f64, f64)> {
        (0..60).map(|k| 8.0 + 0.1 * k as f64).map(|i| (i, scale * ide(i, p))).collect()
    }

    #[test]
    fn recovers_parameters() {
        let truth = fig1b();
        let init = WireParams { i_detect: 9.5, sigma: 0.9, ..truth.clone() };
        let fit = fit_ide_curve(&pcr(&truth, 2e5), &init).unwrap();
        assert!((fit.i_detect - 10.5).abs() / 10.5 < 0.02, "{fit:?}");
        assert!((fit.sigma - 0.5).abs() / 0.5 < 0.02, "{fit:?}");
        // saturated above i_detect + 3σ
        let fitted = WireParams { i_detect: fit.i_detect, sigma: fit.sigma, ..truth };
        assert!(ide(12.0, &fitted) > 0.99);
    }

    #[test]
    fn scale_does_not_move_fit() {
        let truth = fig1b();
        let a = fit_ide_curve(&pcr(&truth, 1.0), &truth).unwrap();
        let b = fit_ide_curve(&pcr(&truth, 1e4), &truth).unwrap();
        assert!((a.i_detect - b.i_detect).abs() < 1e-4);
        assert!((a.sigma - b.sigma).abs() < 1e-4);
        assert!((b.scale / a.scale - 1e4).abs() < 1.0);
    }

    #[test]
    fn rejects_tiny_inputs() {
        assert!(fit_ide_curve(&[(1.0, 1.0)], &fig1b()).is_err());
    }
}
