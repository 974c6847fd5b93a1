//! Laplace noise.

use rand::Rng;

/// One draw from `Lap(0, scale)` by inverse CDF.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let a = u.abs();
        if a < 0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * a).ln();
        }
    }
}

/// `ln` of the `Lap(0, scale)` density at `x`.
pub fn log_density(x: f64, scale: f64) -> f64 {
    -(2.0 * scale).ln() - x.abs() / scale
}

pub fn variance(scale: f64) -> f64 {
    2.0 * scale * scale
}
