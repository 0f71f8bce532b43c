//! Error-function family used by the detection-efficiency model.

use std::f64::consts::PI;

pub use libm::{erf, erfc};

/// Inverse complementary error function on (0, 2).
///
/// Starts from the library approximation and polishes with Newton steps on
/// `erfc` so the round trip `erfc(erfc_inv(y)) == y` holds to a few ulps.
pub fn erfc_inv(y: f64) -> f64 {
    if y <= 0.0 {
        return f64::INFINITY;
    }
    if y >= 2.0 {
        return f64::NEG_INFINITY;
    }
    let mut x = statrs::function::erf::erfc_inv(y);
    for _ in 0..4 {
        let f = erfc(x) - y;
        let df = -2.0 / PI.sqrt() * (-x * x).exp();
        if df == 0.0 || !df.is_finite() {
            break;
        }
        let step = f / df;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}
