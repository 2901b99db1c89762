//! Shared oracles for integration tests. These deliberately avoid the crate's
//! own special-function paths: everything here is brute-force quadrature on
//! defining integrals, so agreement is evidence rather than tautology.

#![allow(dead_code)]

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = step(f, a, fa, m, fm);
        let (right, rm, frm) = step(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = step(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// CDF by quadrature of the density from 0 (good for |z| up to ~10).
pub fn cdf_oracle(z: f64) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / SQRT_2PI;
    0.5 + integrate(&pdf, 0.0, z, 1e-14)
}

/// Mills ratio by quadrature of its integral form
/// M(z) = integral_0^inf exp(-z s - s^2 / 2) ds (substitute t = z + s in the
/// defining tail integral). Valid for any z; relative accuracy ~1e-12.
pub fn mills_oracle(z: f64) -> f64 {
    // Upper limit where the exponent reaches -700.
    let upper = -z + (z * z + 1400.0).sqrt();
    let f = |s: f64| (-z * s - 0.5 * s * s).exp();
    // Scale the absolute tolerance by a crude magnitude estimate.
    let scale = if z > 0.0 { 1.0 / z.max(1.0) } else { (0.5 * z * z).exp() * SQRT_2PI };
    integrate(&f, 0.0, upper, 1e-13 * scale.min(1e6).max(1e-6))
}

/// g by quadrature of its defining integral
/// g(z) = z * integral_{-inf}^{z} exp(-t^2/2) dt + exp(-z^2/2).
pub fn g_oracle(z: f64) -> f64 {
    let f = |t: f64| (-0.5 * t * t).exp();
    z * integrate(&f, -40.0, z, 1e-13) + (-0.5 * z * z).exp()
}

/// E[max(X, 0)] by quadrature of x * density over the positive axis.
/// The domain is clamped to mu +- 12 sigma (truncating ~1e-31 of the mass)
/// and pre-split into segments so the initial Simpson probes cannot step
/// over the bulk of a narrow density.
pub fn rectified_oracle(mu: f64, sigma: f64) -> f64 {
    let f = |x: f64| {
        let d = (x - mu) / sigma;
        x * (-0.5 * d * d).exp() / (sigma * SQRT_2PI)
    };
    let hi = mu + 12.0 * sigma;
    if hi <= 0.0 {
        return 0.0;
    }
    let lo = (mu - 12.0 * sigma).max(0.0);
    let scale = (mu.abs() + sigma).max(1e-12);
    let segments = 8;
    let width = (hi - lo) / segments as f64;
    let mut total = 0.0;
    for i in 0..segments {
        let a = lo + i as f64 * width;
        let b = if i == segments - 1 { hi } else { a + width };
        total += integrate(&f, a, b, 1e-15 * scale);
    }
    total
}

pub fn assert_close(actual: f64, expected: f64, rtol: f64, what: &str) {
    let denom = expected.abs().max(1e-300);
    let rel = (actual - expected).abs() / denom;
    assert!(
        rel <= rtol,
        "{what}: actual {actual:e}, expected {expected:e}, rel err {rel:e} > {rtol:e}"
    );
}
