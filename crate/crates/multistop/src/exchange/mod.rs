//! American exchange option with two exercise times.
//!
//! Two independent lognormal assets, zero riskless rate. The holder picks a
//! time for each leg and collects `(X1 at tau1 - X2 at tau2)+` at the later
//! one. Fixing either leg turns the other into a European problem with a
//! closed form, so the double-stopping reduction collapses to a single
//! American problem over the reward
//!
//! ```text
//! phi(s, x1, x2) = max( x2 * C(s, x1/x2), x1 * P(s, x2/x1) )
//! ```
//!
//! where `C` and `P` are the zero-rate, unit-strike call and put values.
//! The reduced problem is priced on a recombining product lattice
//! ([`price_exchange_double`]) and its policy is evaluated on exact
//! lognormal paths ([`mc_policy_value`]).

mod dist;
mod lattice;
mod mc;

pub use dist::{erfc, normal_cdf};
pub use lattice::{
    american_call_crr, exercise_boundary, optimal_pair_policy, price_exchange_double, BoundaryRow,
    LatticePolicy, PriceSurface, ProductLattice, SurfaceState,
};
pub use mc::{mc_policy_value, McEstimate, McPolicy};

use crate::error::{Error, Result};

/// The riskless rate of the model. Engines assume undiscounted prices
/// throughout; a nonzero rate is out of scope.
pub const INTEREST_RATE: f64 = 0.0;

/// Two-asset model parameters: initial prices, volatilities (per square
/// root of a year) and maturity in years.
#[derive(Debug, Clone, Copy)]
pub struct MarketParams {
    pub x1: f64,
    pub x2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub maturity: f64,
}

impl MarketParams {
    pub fn new(x1: f64, x2: f64, sigma1: f64, sigma2: f64, maturity: f64) -> Result<Self> {
        for (name, v) in [
            ("x1", x1),
            ("x2", x2),
            ("sigma1", sigma1),
            ("sigma2", sigma2),
            ("maturity", maturity),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(MarketParams {
            x1,
            x2,
            sigma1,
            sigma2,
            maturity,
        })
    }
}

fn check_time_and_moneyness(s: f64, z: f64, maturity: f64) -> Result<()> {
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "moneyness must be positive, got {z}"
        )));
    }
    if !(0.0..=maturity).contains(&s) {
        return Err(Error::InvalidParams(format!(
            "time {s} outside [0, {maturity}]"
        )));
    }
    Ok(())
}

/// Zero-rate, unit-strike call value at time `s` and moneyness `z`:
/// `z N(d+) - N(d-)` with `d± = (ln z ± sigma^2 (T-s)/2) / (sigma sqrt(T-s))`.
/// Collapses to `(z-1)+` at maturity.
pub fn bs_call(s: f64, z: f64, sigma: f64, maturity: f64) -> Result<f64> {
    check_time_and_moneyness(s, z, maturity)?;
    let tau = maturity - s;
    let st = sigma * tau.sqrt();
    if st <= 0.0 {
        return Ok((z - 1.0).max(0.0));
    }
    let d_plus = (z.ln() + 0.5 * sigma * sigma * tau) / st;
    let d_minus = d_plus - st;
    Ok(z * normal_cdf(d_plus) - normal_cdf(d_minus))
}

/// Zero-rate, unit-strike put value: `N(-d-) - z N(-d+)`. Collapses to
/// `(1-z)+` at maturity and satisfies `C - P = z - 1` with matching sigma.
pub fn bs_put(t: f64, z: f64, sigma: f64, maturity: f64) -> Result<f64> {
    check_time_and_moneyness(t, z, maturity)?;
    let tau = maturity - t;
    let st = sigma * tau.sqrt();
    if st <= 0.0 {
        return Ok((1.0 - z).max(0.0));
    }
    let d_plus = (z.ln() + 0.5 * sigma * sigma * tau) / st;
    let d_minus = d_plus - st;
    Ok(normal_cdf(-d_minus) - z * normal_cdf(-d_plus))
}

/// The two legs of the exchange reward at state `(s, x1, x2)`:
/// the call leg `x2 C(s, x1/x2)` (second asset already pinned) and the put
/// leg `x1 P(s, x2/x1)` (first asset already pinned). Both collapse to the
/// intrinsic `(x1 - x2)+` at maturity, which is returned exactly.
pub fn exchange_reward_legs(s: f64, x1: f64, x2: f64, params: &MarketParams) -> Result<(f64, f64)> {
    if !x1.is_finite() || x1 <= 0.0 || !x2.is_finite() || x2 <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "prices must be positive, got ({x1}, {x2})"
        )));
    }
    if s >= params.maturity {
        if s > params.maturity {
            return Err(Error::InvalidParams(format!(
                "time {s} beyond maturity {}",
                params.maturity
            )));
        }
        let intrinsic = (x1 - x2).max(0.0);
        return Ok((intrinsic, intrinsic));
    }
    let call_leg = x2 * bs_call(s, x1 / x2, params.sigma1, params.maturity)?;
    let put_leg = x1 * bs_put(s, x2 / x1, params.sigma2, params.maturity)?;
    Ok((call_leg, put_leg))
}

/// The reward of the reduced American problem:
/// `phi(s, x1, x2) = max(call leg, put leg)`. Positively homogeneous of
/// degree one in the prices.
pub fn exchange_reward(s: f64, x1: f64, x2: f64, params: &MarketParams) -> Result<f64> {
    let (call_leg, put_leg) = exchange_reward_legs(s, x1, x2, params)?;
    Ok(call_leg.max(put_leg))
}

/// Closed-form value of exchanging the second asset for the first at
/// maturity. With independent drivers the exchange ratio has volatility
/// `sqrt(sigma1^2 + sigma2^2)`.
pub fn margrabe_value(params: &MarketParams) -> f64 {
    let sig = (params.sigma1 * params.sigma1 + params.sigma2 * params.sigma2).sqrt();
    let st = sig * params.maturity.sqrt();
    let d1 = ((params.x1 / params.x2).ln() + 0.5 * sig * sig * params.maturity) / st;
    let d2 = d1 - st;
    params.x1 * normal_cdf(d1) - params.x2 * normal_cdf(d2)
}
