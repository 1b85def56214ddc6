//! Randomized cross-check matrix: every engine output against its
//! brute-force or algebraic reference on small random trees.
//!
//! One run covers, per (seed, depth):
//!
//! - envelope values against the exhaustive single-rule maximum at every node
//! - value attained by the contact-set rule against the envelope at the root
//! - reduced double-stopping value against the exhaustive pair maximum
//! - value attained by the constructed pair against the reduced value
//! - the pair inequality `E[psi(pair)] <= E[phi(min stop)] <= reduced value`
//!   on random pairs
//! - the one-step supermartingale inequality of both envelopes
//! - pathwise monotonicity of the lambda-relaxed rules and their value bound

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

use crate::double::{self, BiReward};
use crate::error::{Error, Result};
use crate::generators::{random_binary_tree, random_psi_table, random_reward};
use crate::oracle::{self, EnumerationBudget};
use crate::seed::derive_stream;
use crate::snell::{self, NodeReward};
use crate::tree::{ScenarioTree, StoppingPair, StoppingRule};

/// Deepest binary tree the pair oracle accepts under the default budget.
pub const MAX_MATRIX_DEPTH: usize = 4;

/// Absolute gap allowed between an engine value and its brute-force
/// reference on unit-scale rewards.
pub const GAP_ABS_TOL: f64 = 1e-12;

/// Relative gap allowed between an attained rule (or pair) value and the
/// envelope value it should reach.
pub const ATTAIN_REL_TOL: f64 = 1e-10;

/// Slack for the lambda value bound `E[phi(theta_lambda)] >= lambda v`,
/// covering the contact-set equality slack.
pub const LAMBDA_VALUE_SLACK: f64 = 2e-9;

#[derive(Debug, Clone)]
pub struct MatrixConfig {
    /// Seeds 0..seeds are run.
    pub seeds: u64,
    /// Binary tree depths, each at most [`MAX_MATRIX_DEPTH`].
    pub depths: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// Random rule pairs per seed for the pair inequality.
    pub random_pairs: usize,
    pub budget: EnumerationBudget,
    /// Self-test hook: negates the reduced value before the oracle
    /// comparison, which must surface as a violation.
    pub inject_fault: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            seeds: 100,
            depths: vec![2, 3, 4],
            lambdas: vec![0.5, 0.9, 0.99, 0.999],
            random_pairs: 1000,
            budget: EnumerationBudget::default(),
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub seed: u64,
    pub depth: usize,
    pub property: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixReport {
    pub seeds: u64,
    pub depths: Vec<usize>,
    pub max_abs_gap_snell: f64,
    pub max_abs_gap_theorem3: f64,
    pub max_rel_gap_rule_value: f64,
    pub max_rel_gap_pair_value: f64,
    pub max_supermartingale_violation: f64,
    pub violations: Vec<Violation>,
}

impl MatrixReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn pairs_at_depth(depth: usize) -> u128 {
    let mut f = 1u128;
    for _ in 0..depth {
        f = f.saturating_mul(f).saturating_add(1);
    }
    f.saturating_mul(f)
}

/// Runs the full matrix. Depths beyond the oracle budget are refused
/// upfront with a budget error.
pub fn run_matrix(cfg: &MatrixConfig) -> Result<MatrixReport> {
    for &d in &cfg.depths {
        let pairs = pairs_at_depth(d);
        if d > MAX_MATRIX_DEPTH || pairs > cfg.budget.max_pairs {
            return Err(Error::BudgetExceeded {
                required: pairs,
                budget: cfg.budget.max_pairs,
                unit: "pairs",
            });
        }
    }
    for &l in &cfg.lambdas {
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::InvalidLambda(l));
        }
    }
    let mut report = MatrixReport {
        seeds: cfg.seeds,
        depths: cfg.depths.clone(),
        ..MatrixReport::default()
    };
    for seed in 0..cfg.seeds {
        for &depth in &cfg.depths {
            let tree = random_binary_tree(depth, seed)?;
            let reward = random_reward(&tree, seed)?;
            let psi = random_psi_table(&tree, seed)?;
            check_single(cfg, &tree, &reward, seed, depth, &mut report)?;
            check_double(cfg, &tree, &psi, seed, depth, &mut report)?;
        }
    }
    Ok(report)
}

fn record(report: &mut MatrixReport, seed: u64, depth: usize, property: &str, magnitude: f64) {
    report.violations.push(Violation {
        seed,
        depth,
        property: property.to_string(),
        magnitude,
    });
}

fn check_single(
    cfg: &MatrixConfig,
    tree: &ScenarioTree,
    reward: &NodeReward,
    seed: u64,
    depth: usize,
    report: &mut MatrixReport,
) -> Result<()> {
    let vf = snell::snell_envelope(tree, reward)?;

    // Envelope against the exhaustive maximum, at every node.
    for start in 0..tree.num_nodes() {
        let (bf, _) = oracle::brute_force_single(tree, reward, start, &cfg.budget)?;
        let gap = (bf - vf.value(start)).abs();
        report.max_abs_gap_snell = report.max_abs_gap_snell.max(gap);
        if gap > GAP_ABS_TOL {
            record(report, seed, depth, "snell_vs_oracle", gap);
        }
        if vf.value(start) + GAP_ABS_TOL < reward.value(start) {
            record(
                report,
                seed,
                depth,
                "envelope_dominance",
                reward.value(start) - vf.value(start),
            );
        }
    }

    // The contact-set rule attains the envelope at the root.
    let opt = snell::optimal_stop(tree, &vf, 0)?;
    let attained = snell::evaluate_rule(tree, reward, &opt)?;
    let rel = (attained - vf.value(0)).abs() / vf.value(0).abs().max(1.0);
    report.max_rel_gap_rule_value = report.max_rel_gap_rule_value.max(rel);
    if rel > ATTAIN_REL_TOL {
        record(report, seed, depth, "optimal_rule_value", rel);
    }

    // One-step supermartingale inequality of the envelope.
    let sm = snell::check_supermartingale(tree, vf.values())?;
    report.max_supermartingale_violation =
        report.max_supermartingale_violation.max(sm.max_violation);
    if sm.max_violation > GAP_ABS_TOL {
        record(report, seed, depth, "supermartingale", sm.max_violation);
    }

    // Lambda family: pathwise increasing in lambda, bounded by the optimal
    // rule, and worth at least lambda times the envelope.
    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rules: Vec<StoppingRule> = lambdas
        .iter()
        .map(|&l| snell::lambda_stop(tree, &vf, 0, l))
        .collect::<Result<Vec<_>>>()?;
    for window in rules.windows(2) {
        for &leaf in tree.leaves() {
            let lo = window[0].stopped_node(tree, leaf)?;
            let hi = window[1].stopped_node(tree, leaf)?;
            if !tree.is_ancestor_or_eq(lo, hi) {
                record(report, seed, depth, "lambda_monotonicity", 1.0);
            }
        }
    }
    for rule in &rules {
        for &leaf in tree.leaves() {
            let s = rule.stopped_node(tree, leaf)?;
            let s_opt = opt.stopped_node(tree, leaf)?;
            if !tree.is_ancestor_or_eq(s, s_opt) {
                record(report, seed, depth, "lambda_bounded_by_optimal", 1.0);
            }
        }
    }
    for (&l, rule) in lambdas.iter().zip(&rules) {
        let v = snell::evaluate_rule(tree, reward, rule)?;
        let bound = l * vf.value(0) - LAMBDA_VALUE_SLACK * vf.value(0).abs().max(1.0);
        if v < bound {
            record(report, seed, depth, "lambda_value_bound", bound - v);
        }
    }
    Ok(())
}

fn check_double(
    cfg: &MatrixConfig,
    tree: &ScenarioTree,
    psi: &BiReward,
    seed: u64,
    depth: usize,
    report: &mut MatrixReport,
) -> Result<()> {
    let red = double::reduce(tree, psi, 0)?;
    let reduced = if cfg.inject_fault {
        -red.reduced_value(0)
    } else {
        red.reduced_value(0)
    };

    // Reduced value against the exhaustive pair maximum.
    let (bf, _) = oracle::brute_force_double(tree, psi, 0, &cfg.budget)?;
    let gap = (bf - reduced).abs();
    report.max_abs_gap_theorem3 = report.max_abs_gap_theorem3.max(gap);
    if gap > GAP_ABS_TOL {
        record(report, seed, depth, "theorem3", gap);
    }

    // The constructed pair attains the reduced value.
    let attained = double::evaluate_pair(tree, psi, &red.pair)?;
    let rel = (attained - red.reduced_value(0)).abs() / red.reduced_value(0).abs().max(1.0);
    report.max_rel_gap_pair_value = report.max_rel_gap_pair_value.max(rel);
    if rel > ATTAIN_REL_TOL {
        record(report, seed, depth, "pair_value", rel);
    }

    // Supermartingale inequality of the reduced envelope.
    let sm = snell::check_supermartingale(tree, red.value.values())?;
    report.max_supermartingale_violation =
        report.max_supermartingale_violation.max(sm.max_violation);
    if sm.max_violation > GAP_ABS_TOL {
        record(report, seed, depth, "supermartingale", sm.max_violation);
    }

    // Random pairs never beat the reduced value, and the chain through the
    // new reward at the earlier stop holds.
    let count = tree.count_stopping_rules(0)?;
    let mut rng = Pcg64Mcg::seed_from_u64(derive_stream(seed, 4));
    for _ in 0..cfg.random_pairs {
        let i = rng.gen_range(0..count as u64) as u128;
        let j = rng.gen_range(0..count as u64) as u128;
        let r1 = oracle::rule_by_index(tree, 0, i)?;
        let r2 = oracle::rule_by_index(tree, 0, j)?;
        let pair = StoppingPair::new(r1, r2)?;
        let ep = double::evaluate_pair(tree, psi, &pair)?;
        let min_rule = StoppingRule::from_predicate(tree, 0, |m| {
            pair.first().stops_at(m) || pair.second().stops_at(m)
        })?;
        let e_phi = snell::evaluate_rule(tree, &red.phi, &min_rule)?;
        if ep > red.reduced_value(0) + GAP_ABS_TOL
            || ep > e_phi + GAP_ABS_TOL
            || e_phi > red.reduced_value(0) + GAP_ABS_TOL
        {
            record(
                report,
                seed,
                depth,
                "step1_inequality",
                (ep - e_phi)
                    .max(e_phi - red.reduced_value(0))
                    .max(ep - red.reduced_value(0)),
            );
        }
    }
    Ok(())
}
