//! Recombining product lattice for the reduced American problem.
//!
//! Each asset follows its own two-point multiplicative step with factors
//! `u = exp(sigma sqrt(dt))`, `d = 1/u` and the martingale probability
//! `q = (1-d)/(u-d)`; the two assets move independently, so every state
//! branches into four children with product probabilities. The reward
//! surface is evaluated with the exact closed-form legs, which makes the
//! generic non-recombining engine unnecessary here: the reward is Markov in
//! `(t, x1, x2)`.

use rayon::prelude::*;

use super::{exchange_reward_legs, MarketParams};
use crate::error::{Error, Result};
use crate::snell::eps_eq;

/// Per-asset factors and probabilities of the product lattice.
#[derive(Debug, Clone, Copy)]
pub struct ProductLattice {
    pub params: MarketParams,
    pub steps: usize,
    pub dt: f64,
    pub u1: f64,
    pub d1: f64,
    pub q1: f64,
    pub u2: f64,
    pub d2: f64,
    pub q2: f64,
}

impl ProductLattice {
    pub fn new(params: MarketParams, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParams("steps must be at least 1".into()));
        }
        let dt = params.maturity / steps as f64;
        let build = |sigma: f64| -> Result<(f64, f64, f64)> {
            let u = (sigma * dt.sqrt()).exp();
            let d = 1.0 / u;
            let q = (1.0 - d) / (u - d);
            // Cannot fail at zero rate with these factors; checked anyway.
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidParams(format!(
                    "one-step probability {q} outside (0,1)"
                )));
            }
            Ok((u, d, q))
        };
        let (u1, d1, q1) = build(params.sigma1)?;
        let (u2, d2, q2) = build(params.sigma2)?;
        Ok(ProductLattice {
            params,
            steps,
            dt,
            u1,
            d1,
            q1,
            u2,
            d2,
            q2,
        })
    }

    /// Grid time of step `k`; the last step lands exactly on the maturity.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.params.maturity
        } else {
            k as f64 * self.dt
        }
    }

    /// First-asset price after `j` up-moves in `k` steps.
    pub fn asset1(&self, k: usize, j: usize) -> f64 {
        self.params.x1 * self.u1.powi(j as i32) * self.d1.powi((k - j) as i32)
    }

    /// Second-asset price after `j` up-moves in `k` steps.
    pub fn asset2(&self, k: usize, j: usize) -> f64 {
        self.params.x2 * self.u2.powi(j as i32) * self.d2.powi((k - j) as i32)
    }
}

/// One time slice of the surface; states are indexed by `j1 * (k+1) + j2`.
#[derive(Debug, Clone)]
pub struct SurfaceLevel {
    pub reward: Vec<f64>,
    /// One-step expected value of the next slice; equals `value` on the
    /// terminal slice, where nothing is left to continue into.
    pub continuation: Vec<f64>,
    pub value: Vec<f64>,
    pub exercise: Vec<bool>,
    /// Whether the call leg is dominated by the put leg at the state
    /// (ties included), i.e. which leg an optimal pair pins first.
    pub b_flag: Vec<bool>,
}

/// Full backward-induction output on the product lattice.
#[derive(Debug, Clone)]
pub struct PriceSurface {
    lattice: ProductLattice,
    levels: Vec<SurfaceLevel>,
}

/// A single surface state, flattened for export.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceState {
    pub k: usize,
    pub t: f64,
    pub j1: usize,
    pub j2: usize,
    pub x1: f64,
    pub x2: f64,
    pub reward: f64,
    pub value: f64,
    pub exercise: bool,
    pub b_flag: bool,
}

impl PriceSurface {
    pub fn lattice(&self) -> &ProductLattice {
        &self.lattice
    }

    pub fn steps(&self) -> usize {
        self.lattice.steps
    }

    pub fn level(&self, k: usize) -> &SurfaceLevel {
        &self.levels[k]
    }

    /// Root value of the reduced American problem.
    pub fn v0(&self) -> f64 {
        self.levels[0].value[0]
    }

    #[inline]
    fn idx(k: usize, j1: usize, j2: usize) -> usize {
        j1 * (k + 1) + j2
    }

    pub fn value(&self, k: usize, j1: usize, j2: usize) -> f64 {
        self.levels[k].value[Self::idx(k, j1, j2)]
    }

    pub fn reward(&self, k: usize, j1: usize, j2: usize) -> f64 {
        self.levels[k].reward[Self::idx(k, j1, j2)]
    }

    pub fn exercised(&self, k: usize, j1: usize, j2: usize) -> bool {
        self.levels[k].exercise[Self::idx(k, j1, j2)]
    }

    pub fn b_flag(&self, k: usize, j1: usize, j2: usize) -> bool {
        self.levels[k].b_flag[Self::idx(k, j1, j2)]
    }

    /// All states in (k, j1, j2) order.
    pub fn states(&self) -> impl Iterator<Item = SurfaceState> + '_ {
        (0..=self.steps()).flat_map(move |k| {
            let level = &self.levels[k];
            let lat = &self.lattice;
            (0..=k).flat_map(move |j1| {
                (0..=k).map(move |j2| {
                    let i = Self::idx(k, j1, j2);
                    SurfaceState {
                        k,
                        t: lat.time(k),
                        j1,
                        j2,
                        x1: lat.asset1(k, j1),
                        x2: lat.asset2(k, j2),
                        reward: level.reward[i],
                        value: level.value[i],
                        exercise: level.exercise[i],
                        b_flag: level.b_flag[i],
                    }
                })
            })
        })
    }
}

type LevelRow = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>, Vec<bool>);

/// Prices the two-exercise exchange option by backward induction with the
/// closed-form reward as obstacle. Summation order inside a state is fixed
/// (up/up, up/down, down/up, down/down), so the surface is identical across
/// thread counts.
pub fn price_exchange_double(params: &MarketParams, steps: usize) -> Result<PriceSurface> {
    let lat = ProductLattice::new(*params, steps)?;
    let mut levels: Vec<SurfaceLevel> = Vec::with_capacity(steps + 1);
    levels.resize(
        steps + 1,
        SurfaceLevel {
            reward: Vec::new(),
            continuation: Vec::new(),
            value: Vec::new(),
            exercise: Vec::new(),
            b_flag: Vec::new(),
        },
    );

    for k in (0..=steps).rev() {
        let width = k + 1;
        let t = lat.time(k);
        let rows: Vec<LevelRow> = (0..width)
            .into_par_iter()
            .map(|j1| -> Result<_> {
                let x1 = lat.asset1(k, j1);
                let mut reward = Vec::with_capacity(width);
                let mut continuation = Vec::with_capacity(width);
                let mut value = Vec::with_capacity(width);
                let mut exercise = Vec::with_capacity(width);
                let mut b_flag = Vec::with_capacity(width);
                for j2 in 0..width {
                    let x2 = lat.asset2(k, j2);
                    let (call_leg, put_leg) = exchange_reward_legs(t, x1, x2, &lat.params)?;
                    let phi = call_leg.max(put_leg);
                    if k == steps {
                        reward.push(phi);
                        continuation.push(phi);
                        value.push(phi);
                        exercise.push(true);
                        b_flag.push(call_leg <= put_leg);
                    } else {
                        let next = &levels[k + 1];
                        let w = width + 1;
                        let vuu = next.value[(j1 + 1) * w + (j2 + 1)];
                        let vud = next.value[(j1 + 1) * w + j2];
                        let vdu = next.value[j1 * w + (j2 + 1)];
                        let vdd = next.value[j1 * w + j2];
                        let cont = lat.q1 * lat.q2 * vuu
                            + lat.q1 * (1.0 - lat.q2) * vud
                            + (1.0 - lat.q1) * lat.q2 * vdu
                            + (1.0 - lat.q1) * (1.0 - lat.q2) * vdd;
                        let v = phi.max(cont);
                        reward.push(phi);
                        continuation.push(cont);
                        value.push(v);
                        exercise.push(v <= phi + eps_eq(v));
                        b_flag.push(call_leg <= put_leg);
                    }
                }
                Ok((reward, continuation, value, exercise, b_flag))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut level = SurfaceLevel {
            reward: Vec::with_capacity(width * width),
            continuation: Vec::with_capacity(width * width),
            value: Vec::with_capacity(width * width),
            exercise: Vec::with_capacity(width * width),
            b_flag: Vec::with_capacity(width * width),
        };
        for (reward, continuation, value, exercise, b_flag) in rows {
            level.reward.extend(reward);
            level.continuation.extend(continuation);
            level.value.extend(value);
            level.exercise.extend(exercise);
            level.b_flag.extend(b_flag);
        }
        levels[k] = level;
    }
    Ok(PriceSurface {
        lattice: lat,
        levels,
    })
}

/// Which leg an exercising state pins at the current time; the other leg
/// always runs to maturity because its one-leg subproblem is European.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExerciseLeg {
    /// Pin the first asset now, exchange against the second at maturity.
    FirstAtCurrent,
    /// Pin the second asset now, exchange against the first at maturity.
    SecondAtCurrent,
}

/// The pair policy induced by a price surface: enter at the first lattice
/// time the state touches the exercise region, pin the leg selected by the
/// `b` flag there, and hold the other leg to maturity.
#[derive(Debug, Clone, Copy)]
pub struct LatticePolicy<'a> {
    surface: &'a PriceSurface,
}

/// Extracts the pair policy from a computed surface.
pub fn optimal_pair_policy(surface: &PriceSurface) -> LatticePolicy<'_> {
    LatticePolicy { surface }
}

impl<'a> LatticePolicy<'a> {
    pub fn surface(&self) -> &'a PriceSurface {
        self.surface
    }

    fn snap(level_count: usize, k: usize, log_moves: f64) -> usize {
        let j = ((log_moves + k as f64) / 2.0).round();
        (j.max(0.0) as usize).min(level_count - 1)
    }

    /// Decision at continuous prices `(x1, x2)` at step `k`: the state is
    /// snapped to the nearest lattice node in log space.
    pub fn decide(&self, k: usize, x1: f64, x2: f64) -> Option<ExerciseLeg> {
        let lat = self.surface.lattice();
        let m1 = (x1 / lat.params.x1).ln() / (lat.params.sigma1 * lat.dt.sqrt());
        let m2 = (x2 / lat.params.x2).ln() / (lat.params.sigma2 * lat.dt.sqrt());
        let j1 = Self::snap(k + 1, k, m1);
        let j2 = Self::snap(k + 1, k, m2);
        if !self.surface.exercised(k, j1, j2) {
            return None;
        }
        Some(if self.surface.b_flag(k, j1, j2) {
            ExerciseLeg::FirstAtCurrent
        } else {
            ExerciseLeg::SecondAtCurrent
        })
    }
}

/// One frontier record: for a fixed opposite index at step `k`, the minimal
/// up-move count inside the exercise region (`-1` when the slice is empty).
#[derive(Debug, Clone, Copy)]
pub struct BoundaryRow {
    pub k: usize,
    /// 1: frontier in `j1` for fixed `j2 = index`; 2: frontier in `j2` for
    /// fixed `j1 = index`.
    pub axis: u8,
    pub index: usize,
    pub frontier: i64,
}

/// Exercise frontier of the surface, one record per (step, axis, index).
pub fn exercise_boundary(surface: &PriceSurface) -> Vec<BoundaryRow> {
    let mut rows = Vec::new();
    for k in 0..=surface.steps() {
        for j2 in 0..=k {
            let frontier = (0..=k)
                .find(|&j1| surface.exercised(k, j1, j2))
                .map_or(-1, |j| j as i64);
            rows.push(BoundaryRow {
                k,
                axis: 1,
                index: j2,
                frontier,
            });
        }
        for j1 in 0..=k {
            let frontier = (0..=k)
                .find(|&j2| surface.exercised(k, j1, j2))
                .map_or(-1, |j| j as i64);
            rows.push(BoundaryRow {
                k,
                axis: 2,
                index: j1,
                frontier,
            });
        }
    }
    rows
}

/// One-dimensional American call on a CRR lattice at zero rate: payoff
/// `(x - strike)+`, factors `u = exp(sigma sqrt(dt))`, `d = 1/u`,
/// `q = (1-d)/(u-d)`. Early exercise is never optimal here, so the value
/// reproduces the closed-form European call up to discretization error.
pub fn american_call_crr(
    x0: f64,
    strike: f64,
    sigma: f64,
    maturity: f64,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Err(Error::InvalidParams("steps must be at least 1".into()));
    }
    for (name, v) in [
        ("x0", x0),
        ("strike", strike),
        ("sigma", sigma),
        ("maturity", maturity),
    ] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    let dt = maturity / steps as f64;
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let q = (1.0 - d) / (u - d);
    let price = |k: usize, j: usize| x0 * u.powi(j as i32) * d.powi((k - j) as i32);
    let mut values: Vec<f64> = (0..=steps)
        .map(|j| (price(steps, j) - strike).max(0.0))
        .collect();
    for k in (0..steps).rev() {
        for j in 0..=k {
            let cont = q * values[j + 1] + (1.0 - q) * values[j];
            let exercise = (price(k, j) - strike).max(0.0);
            values[j] = exercise.max(cont);
        }
        values.truncate(k + 1);
    }
    Ok(values[0])
}
