//! The single optimal stopping problem on a scenario tree.
//!
//! Backward induction produces the smallest dominating value family (the
//! Snell envelope of the reward); first-hitting rules of the contact set
//! `{v = phi}` attain it, and `lambda`-relaxed hitting rules approximate it
//! from below.

use crate::error::{Error, Result};
use crate::tree::{Decision, NodeId, ScenarioTree, StoppingRule};

/// Default scale of the contact-set equality slack.
pub const EPS_EQ_SCALE: f64 = 1e-9;

/// Equality slack for the contact-set test `v(node) = phi(node)`.
///
/// Backward induction guarantees `v >= phi`, so a one-sided test with a
/// relative slack is sufficient: stop when `v <= phi + eps_eq(v)`.
pub fn eps_eq(v: f64) -> f64 {
    EPS_EQ_SCALE * v.abs().max(1.0)
}

fn eps_scaled(scale: f64, v: f64) -> f64 {
    scale * v.abs().max(1.0)
}

/// A nonnegative reward attached to every tree node.
///
/// One value per node/atom makes the family automatically adapted and
/// consistent across stopping rules that agree on an event.
#[derive(Debug, Clone)]
pub struct NodeReward {
    values: Vec<f64>,
}

impl NodeReward {
    pub fn new(tree: &ScenarioTree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.num_nodes() {
            return Err(Error::InvalidReward(format!(
                "reward defined on {} nodes, tree has {}",
                values.len(),
                tree.num_nodes()
            )));
        }
        for (id, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidReward(format!(
                    "reward at node {id} is {v}; rewards must be finite and nonnegative"
                )));
            }
        }
        Ok(NodeReward { values })
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Result<Self> {
        Self::new(tree, vec![c; tree.num_nodes()])
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.values[id]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The value family `v` of a reward, defined at every node simultaneously,
/// together with the reward that generated it.
#[derive(Debug, Clone)]
pub struct ValueFamily {
    values: Vec<f64>,
    reward: NodeReward,
}

impl ValueFamily {
    pub fn value(&self, id: NodeId) -> f64 {
        self.values[id]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reward(&self) -> &NodeReward {
        &self.reward
    }
}

/// Computes the value family by backward induction:
/// `v(leaf) = phi(leaf)`, `v(node) = max(phi(node), sum_c p(c) v(c))`.
///
/// Children are accumulated in id order, so values are reproducible across
/// runs and thread counts.
pub fn snell_envelope(tree: &ScenarioTree, reward: &NodeReward) -> Result<ValueFamily> {
    if reward.len() != tree.num_nodes() {
        return Err(Error::InvalidReward(format!(
            "reward defined on {} nodes, tree has {}",
            reward.len(),
            tree.num_nodes()
        )));
    }
    let mut values = vec![0.0f64; tree.num_nodes()];
    // Children carry larger ids than their parent, so a reverse sweep
    // processes every subtree before its root.
    for id in (0..tree.num_nodes()).rev() {
        let phi = reward.value(id);
        values[id] = if tree.is_leaf(id) {
            phi
        } else {
            let mut cont = 0.0;
            for &c in tree.children(id) {
                cont += tree.prob(c) * values[c];
            }
            phi.max(cont)
        };
    }
    Ok(ValueFamily {
        values,
        reward: reward.clone(),
    })
}

/// First hitting rule of the contact set `{v = phi}` at or after `start`.
///
/// Attains `v(start)`: stopping is only triggered where continuation no
/// longer improves on the reward (up to [`eps_eq`]).
pub fn optimal_stop(
    tree: &ScenarioTree,
    values: &ValueFamily,
    start: NodeId,
) -> Result<StoppingRule> {
    optimal_stop_with_slack(tree, values, start, EPS_EQ_SCALE)
}

/// [`optimal_stop`] with an explicit slack scale in place of
/// [`EPS_EQ_SCALE`].
pub fn optimal_stop_with_slack(
    tree: &ScenarioTree,
    values: &ValueFamily,
    start: NodeId,
    eps_scale: f64,
) -> Result<StoppingRule> {
    if !eps_scale.is_finite() || eps_scale <= 0.0 {
        return Err(Error::InvalidReward(format!(
            "equality slack scale must be positive, got {eps_scale}"
        )));
    }
    tree.check_node(start)?;
    StoppingRule::from_predicate(tree, start, |id| {
        values.value(id) <= values.reward().value(id) + eps_scaled(eps_scale, values.value(id))
    })
}

/// First hitting rule of `{lambda * v <= phi}` at or after `start`.
///
/// Uses the same equality slack as [`optimal_stop`], which keeps the family
/// pathwise increasing in `lambda` and bounded above by the optimal rule.
pub fn lambda_stop(
    tree: &ScenarioTree,
    values: &ValueFamily,
    start: NodeId,
    lambda: f64,
) -> Result<StoppingRule> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    tree.check_node(start)?;
    StoppingRule::from_predicate(tree, start, |id| {
        lambda * values.value(id) <= values.reward().value(id) + eps_eq(values.value(id))
    })
}

/// Conditional expectation of the reward at the rule's stop time, seen from
/// the rule's start node.
///
/// Computed as nested one-step expectations (children in id order), the same
/// arithmetic the backward induction performs, so the brute-force oracle can
/// match [`snell_envelope`] exactly rather than within a tolerance.
pub fn evaluate_rule(tree: &ScenarioTree, reward: &NodeReward, rule: &StoppingRule) -> Result<f64> {
    if reward.len() != tree.num_nodes() {
        return Err(Error::InvalidReward(format!(
            "reward defined on {} nodes, tree has {}",
            reward.len(),
            tree.num_nodes()
        )));
    }
    tree.check_node(rule.start())?;
    let mut acc = vec![0.0f64; tree.num_nodes()];
    let mut defined = vec![false; tree.num_nodes()];
    for id in (rule.start()..tree.num_nodes()).rev() {
        match rule.decision(id) {
            Some(Decision::Stop) => {
                acc[id] = reward.value(id);
                defined[id] = true;
            }
            Some(Decision::Continue) => {
                let mut e = 0.0;
                for &c in tree.children(id) {
                    if !defined[c] {
                        return Err(Error::InvalidRule(format!(
                            "reachable node {c} has no decision"
                        )));
                    }
                    e += tree.prob(c) * acc[c];
                }
                acc[id] = e;
                defined[id] = true;
            }
            None => {}
        }
    }
    if !defined[rule.start()] {
        return Err(Error::InvalidRule(format!(
            "rule carries no decision at its start node {}",
            rule.start()
        )));
    }
    Ok(acc[rule.start()])
}

/// Outcome of the one-step supermartingale check.
#[derive(Debug, Clone, Copy)]
pub struct SupermartingaleReport {
    /// Max over internal nodes of `(sum_c p(c) v(c) - v(node))^+`.
    pub max_violation: f64,
    /// Node realizing the maximum, when some violation is positive.
    pub worst_node: Option<NodeId>,
}

/// Checks the one-step supermartingale inequality of a value family given as
/// a per-node slice. A genuine envelope reports a violation of at most the
/// rounding of its own sums.
pub fn check_supermartingale(tree: &ScenarioTree, values: &[f64]) -> Result<SupermartingaleReport> {
    if values.len() != tree.num_nodes() {
        return Err(Error::InvalidReward(format!(
            "value family covers {} nodes, tree has {}",
            values.len(),
            tree.num_nodes()
        )));
    }
    let mut max_violation = 0.0f64;
    let mut worst_node = None;
    for id in 0..tree.num_nodes() {
        if tree.is_leaf(id) {
            continue;
        }
        let mut cont = 0.0;
        for &c in tree.children(id) {
            cont += tree.prob(c) * values[c];
        }
        let gap = cont - values[id];
        if gap > max_violation {
            max_violation = gap;
            worst_node = Some(id);
        }
    }
    Ok(SupermartingaleReport {
        max_violation,
        worst_node,
    })
}
