//! Independent numerical references shared by the integration suites.
//!
//! Everything here deliberately avoids the crate's own closed forms: the
//! distribution function comes from adaptive quadrature of the Gaussian
//! density, option values from quadrature of the lognormal payoff integral.

#![allow(dead_code)]

const SQRT_TWO_PI: f64 = 2.5066282746310002;

fn gauss_density(t: f64) -> f64 {
    (-0.5 * t * t).exp() / SQRT_TWO_PI
}

fn simpson_step(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson_step(f, a, fa, m, fm);
    let (right, rm, frm) = simpson_step(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adapt(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1)
            + adapt(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson_step(&f, a, fa, b, fb);
    adapt(&f, a, fa, m, fm, b, fb, whole, tol, 48)
}

/// Standard normal distribution function by quadrature of the density,
/// accurate to better than 1e-13 for |z| <= 8.
pub fn normal_cdf_oracle(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_cdf_oracle(-z);
    }
    0.5 + integrate(gauss_density, 0.0, z, 1e-14)
}

/// Zero-rate unit-strike call on a lognormal with spot moneyness `z0`,
/// volatility `sigma` and time to maturity `tau`, by quadrature of the
/// payoff against the terminal density.
pub fn lognormal_call_oracle(z0: f64, sigma: f64, tau: f64) -> f64 {
    let st = sigma * tau.sqrt();
    if st <= 0.0 {
        return (z0 - 1.0).max(0.0);
    }
    // Terminal value as a function of a standard normal draw y.
    let terminal = move |y: f64| z0 * (-0.5 * st * st + st * y).exp();
    // Payoff is positive above the log-moneyness threshold.
    let y_star = ((1.0f64 / z0).ln() + 0.5 * st * st) / st;
    let lo = y_star;
    let hi = y_star.max(0.0) + 16.0;
    integrate(
        move |y| (terminal(y) - 1.0) * gauss_density(y),
        lo,
        hi,
        1e-13,
    )
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn quadrature_reproduces_known_values() {
        assert!((normal_cdf_oracle(0.0) - 0.5).abs() <= 1e-15);
        assert!((normal_cdf_oracle(0.1) - 0.539827837277029).abs() <= 1e-13);
        assert!((normal_cdf_oracle(-1.0) - 0.15865525393145705).abs() <= 1e-13);
        // ATM call, sigma 0.2, one year: 2 N(0.1) - 1.
        let c = lognormal_call_oracle(1.0, 0.2, 1.0);
        assert!((c - 0.07965567455405796).abs() <= 1e-11, "{c}");
    }
}
