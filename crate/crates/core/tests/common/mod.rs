#![allow(dead_code)]

use bessel_harmonics::bessel_kernel::{Kernel1d, Scaled};
use bessel_harmonics::quadrature::{integrate_weighted_from_zero, Tol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (r.gen::<f64>() * (hi / lo).ln()).exp() * lo
}

pub fn gauss(t: f64, u: f64) -> f64 {
    (-u * u / (4.0 * t)).exp() / (2.0 * (PI * t).sqrt())
}

/// Closed form for λ = 0.
pub fn w_lambda0(t: f64, x: f64, y: f64) -> f64 {
    gauss(t, x - y) + gauss(t, x + y)
}

/// Closed form for λ = 1, with the difference formed without cancellation.
pub fn w_lambda1(t: f64, x: f64, y: f64) -> f64 {
    gauss(t, x - y) * -(-x * y / t).exp_m1() / (x * y)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs()
    }
}

/// ∫_0^∞ W_t^λ(x,y) y^{2λ} dy
pub fn mass(lambda: f64, t: f64, x: f64) -> f64 {
    let k = Kernel1d::new(lambda);
    let s = t.sqrt();
    let hi = x + 16.0 * s;
    let breaks = [x - 8.0 * s, x - 2.0 * s, x, x + 2.0 * s, x + 8.0 * s];
    integrate_weighted_from_zero(|y| k.w(t, x, y), lambda, hi, &breaks, Tol::rel(1e-13)).value
}

/// ∫_0^∞ W_t(x,z) W_s(z,y) z^{2λ} dz
pub fn chapman_kolmogorov(lambda: f64, t: f64, s: f64, x: f64, y: f64) -> f64 {
    let k = Kernel1d::new(lambda);
    let (st, ss) = (t.sqrt(), s.sqrt());
    let hi = (x + 16.0 * st).max(y + 16.0 * ss);
    let mut breaks = vec![x, y];
    for c in [2.0, 8.0] {
        breaks.extend([x - c * st, x + c * st, y - c * ss, y + c * ss]);
    }
    breaks.sort_by(f64::total_cmp);
    integrate_weighted_from_zero(|z| k.w(t, x, z) * k.w(s, z, y), lambda, hi, &breaks, Tol::rel(1e-12)).value
}

/// Central difference of a Scaled-valued function, normalised by the scale
/// at the centre so that underflowing Gaussians do not matter.
/// Returns (difference quotient, centre scale ln).
pub fn central_diff<F: Fn(f64) -> Scaled>(f: F, at: f64, h: f64) -> (f64, f64) {
    let c = f(at).ln;
    let v = |s: f64| {
        let r = f(s);
        r.m * (r.ln - c).exp()
    };
    // use the step that is actually representable around `at`
    let (up, dn) = (at + h, at - h);
    ((v(up) - v(dn)) / (up - dn), c)
}

/// Fourth-order central difference, same normalisation as `central_diff`.
pub fn central_diff5<F: Fn(f64) -> Scaled>(f: F, at: f64, h: f64) -> (f64, f64) {
    let c = f(at).ln;
    let v = |s: f64| {
        let r = f(s);
        r.m * (r.ln - c).exp()
    };
    let h = (at + h) - at;
    let d = (-v(at + 2.0 * h) + 8.0 * v(at + h) - 8.0 * v(at - h) + v(at - 2.0 * h)) / (12.0 * h);
    (d, c)
}
