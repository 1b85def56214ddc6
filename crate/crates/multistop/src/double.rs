//! Reduction of the optimal double stopping problem to a single stopping
//! problem.
//!
//! A biadmissible reward `psi(a, b)` is defined on ordered pairs of
//! path-comparable nodes. For each conditioning node the two one-stopping
//! values
//!
//! ```text
//! u1(theta) = sup over rules from theta of E[ psi(tau1, theta) | theta ]
//! u2(theta) = sup over rules from theta of E[ psi(theta, tau2) | theta ]
//! ```
//!
//! combine into the new reward `phi = max(u1, u2)`. The Snell envelope of
//! `phi` equals the double-stopping value, and an optimal pair of rules is
//! assembled constructively from the contact-set rule of the reduced problem
//! plus the one-leg subproblem rules at its stop nodes.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::snell::{self, NodeReward, ValueFamily};
use crate::tree::{Decision, NodeId, ScenarioTree, StoppingPair, StoppingRule};

/// Trees at most this large get an eagerly materialized dense psi matrix,
/// which keeps the O(N^2) reduction and the pair oracle off the hash path.
const DENSE_PSI_CAP: usize = 2048;

type PsiFn = Arc<dyn Fn(&ScenarioTree, NodeId, NodeId) -> f64 + Send + Sync>;

enum Kind {
    Table(HashMap<(NodeId, NodeId), f64>),
    Func(PsiFn),
}

/// A biadmissible reward family: one nonnegative value per ordered pair of
/// path-comparable nodes. Querying an incomparable pair is an error.
pub struct BiReward {
    kind: Kind,
}

impl BiReward {
    /// Builds a table-backed reward and validates it completely: keys must be
    /// comparable pairs, values nonnegative, and every comparable pair of the
    /// tree must be present.
    pub fn from_table(
        tree: &ScenarioTree,
        entries: impl IntoIterator<Item = ((NodeId, NodeId), f64)>,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        for ((a, b), v) in entries {
            tree.check_node(a)?;
            tree.check_node(b)?;
            if !tree.comparable(a, b) {
                return Err(Error::IncomparablePair(a, b));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativePsi(a, b, v));
            }
            if map.insert((a, b), v).is_some() {
                return Err(Error::InvalidReward(format!(
                    "duplicate psi entry for pair ({a}, {b})"
                )));
            }
        }
        for a in 0..tree.num_nodes() {
            for &m in tree.subtree(a) {
                if !map.contains_key(&(a, m)) {
                    return Err(Error::MissingPsi(a, m));
                }
                if !map.contains_key(&(m, a)) {
                    return Err(Error::MissingPsi(m, a));
                }
            }
        }
        Ok(BiReward {
            kind: Kind::Table(map),
        })
    }

    /// Wraps a pure function of (tree, a, b). The function is only ever
    /// queried on comparable pairs and must be deterministic; values are
    /// checked for nonnegativity as they are read.
    pub fn from_fn(
        f: impl Fn(&ScenarioTree, NodeId, NodeId) -> f64 + Send + Sync + 'static,
    ) -> Self {
        BiReward {
            kind: Kind::Func(Arc::new(f)),
        }
    }

    /// The reward of the ordered pair `(a, b)`.
    pub fn value(&self, tree: &ScenarioTree, a: NodeId, b: NodeId) -> Result<f64> {
        tree.check_node(a)?;
        tree.check_node(b)?;
        if !tree.comparable(a, b) {
            return Err(Error::IncomparablePair(a, b));
        }
        self.value_unchecked(tree, a, b)
    }

    fn value_unchecked(&self, tree: &ScenarioTree, a: NodeId, b: NodeId) -> Result<f64> {
        match &self.kind {
            Kind::Table(map) => map.get(&(a, b)).copied().ok_or(Error::MissingPsi(a, b)),
            Kind::Func(f) => {
                let v = f(tree, a, b);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NegativePsi(a, b, v));
                }
                Ok(v)
            }
        }
    }
}

/// Read path used by the engines: dense matrix on small trees, direct
/// evaluation otherwise. Values are identical either way; only the lookup
/// cost changes.
pub(crate) enum PsiView<'a> {
    Dense { n: usize, vals: Vec<f64> },
    Direct(&'a BiReward),
}

impl<'a> PsiView<'a> {
    pub(crate) fn new(tree: &ScenarioTree, psi: &'a BiReward) -> Result<Self> {
        let n = tree.num_nodes();
        if n > DENSE_PSI_CAP {
            return Ok(PsiView::Direct(psi));
        }
        let mut vals = vec![f64::NAN; n * n];
        for a in 0..n {
            for &m in tree.subtree(a) {
                vals[a * n + m] = psi.value_unchecked(tree, a, m)?;
                vals[m * n + a] = psi.value_unchecked(tree, m, a)?;
            }
        }
        Ok(PsiView::Dense { n, vals })
    }

    #[inline]
    pub(crate) fn get(&self, tree: &ScenarioTree, a: NodeId, b: NodeId) -> Result<f64> {
        match self {
            PsiView::Dense { n, vals } => {
                let v = vals[a * n + b];
                if v.is_nan() {
                    return Err(Error::IncomparablePair(a, b));
                }
                Ok(v)
            }
            PsiView::Direct(psi) => psi.value_unchecked(tree, a, b),
        }
    }
}

/// Backward induction over the subtree rooted at `root` with a node reward
/// given by `reward_of`. Writes values into `values` (indexed by node id)
/// and returns the value at `root`.
fn subtree_envelope_into(
    tree: &ScenarioTree,
    root: NodeId,
    mut reward_of: impl FnMut(NodeId) -> Result<f64>,
    values: &mut [f64],
) -> Result<f64> {
    for &m in tree.subtree(root).iter().rev() {
        let r = reward_of(m)?;
        values[m] = if tree.is_leaf(m) {
            r
        } else {
            let mut cont = 0.0;
            for &c in tree.children(m) {
                cont += tree.prob(c) * values[c];
            }
            r.max(cont)
        };
    }
    Ok(values[root])
}

/// Marks the contact-set rule of a subtree problem into a decision buffer,
/// using the same slack scale as the outer reduced problem.
fn mark_subtree_rule(
    tree: &ScenarioTree,
    root: NodeId,
    values: &[f64],
    mut reward_of: impl FnMut(NodeId) -> Result<f64>,
    eps_scale: f64,
    out: &mut [Option<Decision>],
) -> Result<()> {
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let stop = tree.is_leaf(id)
            || values[id] <= reward_of(id)? + eps_scale * values[id].abs().max(1.0);
        if stop {
            out[id] = Some(Decision::Stop);
        } else {
            out[id] = Some(Decision::Continue);
            stack.extend(tree.children(id).iter().copied());
        }
    }
    Ok(())
}

fn u1_u2_from_view(tree: &ScenarioTree, view: &PsiView<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = tree.num_nodes();
    let per_node: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0f64; n],
            |scratch, theta| -> Result<(f64, f64)> {
                let a = subtree_envelope_into(tree, theta, |m| view.get(tree, m, theta), scratch)?;
                let b = subtree_envelope_into(tree, theta, |m| view.get(tree, theta, m), scratch)?;
                Ok((a, b))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let u1 = per_node.iter().map(|x| x.0).collect();
    let u2 = per_node.iter().map(|x| x.1).collect();
    Ok((u1, u2))
}

/// Conditional one-stopping value `u1(theta)`: the second time is pinned at
/// `theta`, the first runs over the subtree.
pub fn conditional_value_u1(tree: &ScenarioTree, psi: &BiReward, theta: NodeId) -> Result<f64> {
    tree.check_node(theta)?;
    let mut scratch = vec![0.0f64; tree.num_nodes()];
    subtree_envelope_into(
        tree,
        theta,
        |m| psi.value_unchecked(tree, m, theta),
        &mut scratch,
    )
}

/// Conditional one-stopping value `u2(theta)`, symmetric to
/// [`conditional_value_u1`] with the first time pinned at `theta`.
pub fn conditional_value_u2(tree: &ScenarioTree, psi: &BiReward, theta: NodeId) -> Result<f64> {
    tree.check_node(theta)?;
    let mut scratch = vec![0.0f64; tree.num_nodes()];
    subtree_envelope_into(
        tree,
        theta,
        |m| psi.value_unchecked(tree, theta, m),
        &mut scratch,
    )
}

/// Both conditional value families at every node, as node rewards.
pub fn u1_u2_rewards(tree: &ScenarioTree, psi: &BiReward) -> Result<(NodeReward, NodeReward)> {
    let view = PsiView::new(tree, psi)?;
    let (u1, u2) = u1_u2_from_view(tree, &view)?;
    Ok((NodeReward::new(tree, u1)?, NodeReward::new(tree, u2)?))
}

/// The new reward `phi(node) = max(u1(node), u2(node))`.
pub fn new_reward(tree: &ScenarioTree, psi: &BiReward) -> Result<NodeReward> {
    let (u1, u2) = u1_u2_rewards(tree, psi)?;
    let phi: Vec<f64> = u1
        .values()
        .iter()
        .zip(u2.values())
        .map(|(&a, &b)| a.max(b))
        .collect();
    NodeReward::new(tree, phi)
}

/// Value of the reduced single-stopping problem at `start`; by the reduction
/// this equals the double-stopping value there.
pub fn reduced_value(tree: &ScenarioTree, psi: &BiReward, start: NodeId) -> Result<f64> {
    tree.check_node(start)?;
    let phi = new_reward(tree, psi)?;
    let vf = snell::snell_envelope(tree, &phi)?;
    Ok(vf.value(start))
}

/// Which leg stops at the reduced-problem stop node when `u1 = u2` there.
/// The default resolves ties to the first leg (non-strict `u1 <= u2`); the
/// attained value is invariant under the opposite choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiePreference {
    FirstLeg,
    SecondLeg,
}

/// Everything the reduction produces in one pass.
pub struct ReductionResult {
    pub u1: NodeReward,
    pub u2: NodeReward,
    pub phi: NodeReward,
    /// Snell envelope of `phi`.
    pub value: ValueFamily,
    /// Contact-set rule of the reduced problem, from the start node.
    pub theta_star: StoppingRule,
    /// Optimal pair assembled at the stop nodes of `theta_star`.
    pub pair: StoppingPair,
    /// Per stop node of `theta_star`: whether `u1 <= u2` held there.
    pub b_indicator: Vec<(NodeId, bool)>,
}

impl ReductionResult {
    pub fn reduced_value(&self, node: NodeId) -> f64 {
        self.value.value(node)
    }
}

/// Runs the full reduction from `start`.
pub fn reduce(tree: &ScenarioTree, psi: &BiReward, start: NodeId) -> Result<ReductionResult> {
    reduce_with_ties(tree, psi, start, TiePreference::FirstLeg)
}

/// [`reduce`] with an explicit tie policy at the stop nodes; used to verify
/// that the attained value does not depend on the tie branch.
pub fn reduce_with_ties(
    tree: &ScenarioTree,
    psi: &BiReward,
    start: NodeId,
    tie: TiePreference,
) -> Result<ReductionResult> {
    reduce_with_options(tree, psi, start, tie, snell::EPS_EQ_SCALE)
}

/// [`reduce`] with explicit tie policy and contact-set slack scale. The
/// same scale drives the reduced rule and the one-leg subproblem rules.
pub fn reduce_with_options(
    tree: &ScenarioTree,
    psi: &BiReward,
    start: NodeId,
    tie: TiePreference,
    eps_scale: f64,
) -> Result<ReductionResult> {
    tree.check_node(start)?;
    let view = PsiView::new(tree, psi)?;
    let (u1_vals, u2_vals) = u1_u2_from_view(tree, &view)?;
    let phi_vals: Vec<f64> = u1_vals
        .iter()
        .zip(&u2_vals)
        .map(|(&a, &b)| a.max(b))
        .collect();
    let u1 = NodeReward::new(tree, u1_vals)?;
    let u2 = NodeReward::new(tree, u2_vals)?;
    let phi = NodeReward::new(tree, phi_vals)?;
    let value = snell::snell_envelope(tree, &phi)?;
    let theta_star = snell::optimal_stop_with_slack(tree, &value, start, eps_scale)?;

    let n = tree.num_nodes();
    let mut d1: Vec<Option<Decision>> = vec![None; n];
    let mut d2: Vec<Option<Decision>> = vec![None; n];
    for id in 0..n {
        if theta_star.decision(id) == Some(Decision::Continue) {
            d1[id] = Some(Decision::Continue);
            d2[id] = Some(Decision::Continue);
        }
    }
    let mut scratch = vec![0.0f64; n];
    let mut b_indicator = Vec::new();
    for s in theta_star.stop_nodes() {
        let on_b = match tie {
            TiePreference::FirstLeg => u1.value(s) <= u2.value(s),
            TiePreference::SecondLeg => u1.value(s) < u2.value(s),
        };
        b_indicator.push((s, on_b));
        if on_b {
            // First leg stops here; the second follows the u2 subproblem.
            d1[s] = Some(Decision::Stop);
            subtree_envelope_into(tree, s, |m| view.get(tree, s, m), &mut scratch)?;
            mark_subtree_rule(
                tree,
                s,
                &scratch,
                |m| view.get(tree, s, m),
                eps_scale,
                &mut d2,
            )?;
        } else {
            d2[s] = Some(Decision::Stop);
            subtree_envelope_into(tree, s, |m| view.get(tree, m, s), &mut scratch)?;
            mark_subtree_rule(
                tree,
                s,
                &scratch,
                |m| view.get(tree, m, s),
                eps_scale,
                &mut d1,
            )?;
        }
    }
    let tau1 = StoppingRule::from_raw_parts(start, d1);
    let tau2 = StoppingRule::from_raw_parts(start, d2);
    let pair = StoppingPair::new(tau1, tau2)?;
    Ok(ReductionResult {
        u1,
        u2,
        phi,
        value,
        theta_star,
        pair,
        b_indicator,
    })
}

/// Constructs an optimal pair of stopping rules from `start`.
pub fn optimal_pair(tree: &ScenarioTree, psi: &BiReward, start: NodeId) -> Result<StoppingPair> {
    Ok(reduce(tree, psi, start)?.pair)
}

/// Expected reward of a pair of rules:
/// sum over scenarios of path probability times `psi` at the two stop nodes.
pub fn evaluate_pair(tree: &ScenarioTree, psi: &BiReward, pair: &StoppingPair) -> Result<f64> {
    let view = PsiView::Direct(psi);
    evaluate_pair_view(tree, &view, pair.first(), pair.second())
}

/// Shared pair evaluation; the oracle calls this with a dense view so the
/// arithmetic is identical to the engine path.
pub(crate) fn evaluate_pair_view(
    tree: &ScenarioTree,
    view: &PsiView<'_>,
    tau1: &StoppingRule,
    tau2: &StoppingRule,
) -> Result<f64> {
    let mut stack = Vec::new();
    evaluate_pair_core(tree, view, tau1, tau2, &mut stack)
}

/// Walk state: node, stop node of each leg so far, path probability.
pub(crate) type PairWalkFrame = (NodeId, Option<NodeId>, Option<NodeId>, f64);

/// Pair evaluation with a caller-owned stack, so tight enumeration loops do
/// not allocate per pair.
pub(crate) fn evaluate_pair_core(
    tree: &ScenarioTree,
    view: &PsiView<'_>,
    tau1: &StoppingRule,
    tau2: &StoppingRule,
    stack: &mut Vec<PairWalkFrame>,
) -> Result<f64> {
    if tau1.start() != tau2.start() {
        return Err(Error::MismatchedStart(tau1.start(), tau2.start()));
    }
    let start = tau1.start();
    tree.check_node(start)?;
    // Depth-first walk carrying the stop states of both rules; a branch
    // terminates as soon as both legs have stopped. Children are pushed in
    // reverse so contributions accumulate in preorder.
    let mut acc = 0.0f64;
    stack.clear();
    stack.push((start, None, None, 1.0));
    while let Some((id, s1, s2, p)) = stack.pop() {
        let s1 = s1.or_else(|| tau1.stops_at(id).then_some(id));
        let s2 = s2.or_else(|| tau2.stops_at(id).then_some(id));
        match (s1, s2) {
            (Some(a), Some(b)) => {
                acc += p * view.get(tree, a, b)?;
            }
            _ => {
                if tree.is_leaf(id) {
                    return Err(Error::InvalidRule(format!(
                        "a rule failed to stop by leaf {id}"
                    )));
                }
                if (s1.is_none() && tau1.decision(id).is_none())
                    || (s2.is_none() && tau2.decision(id).is_none())
                {
                    return Err(Error::InvalidRule(format!(
                        "reachable node {id} has no decision"
                    )));
                }
                for &c in tree.children(id).iter().rev() {
                    stack.push((c, s1, s2, p * tree.prob(c)));
                }
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::StoppingRule;

    fn binary(depth: usize, p: f64) -> ScenarioTree {
        ScenarioTree::uniform(&vec![vec![p, 1.0 - p]; depth]).unwrap()
    }

    /// Additive random-walk level per node: first child steps +1, second -1.
    fn walk_levels(tree: &ScenarioTree) -> Vec<f64> {
        let mut x = vec![0.0f64; tree.num_nodes()];
        for id in 1..tree.num_nodes() {
            let parent = tree.node(id).parent.unwrap();
            let step = if tree.children(parent)[0] == id {
                1.0
            } else {
                -1.0
            };
            x[id] = x[parent] + step;
        }
        x
    }

    #[test]
    fn constant_psi_collapses_everywhere() {
        let tree = binary(3, 0.5);
        let psi = BiReward::from_fn(|_, _, _| 1.5);
        for theta in 0..tree.num_nodes() {
            assert_eq!(conditional_value_u1(&tree, &psi, theta).unwrap(), 1.5);
            assert_eq!(conditional_value_u2(&tree, &psi, theta).unwrap(), 1.5);
        }
        let phi = new_reward(&tree, &psi).unwrap();
        assert!(phi.values().iter().all(|&v| v == 1.5));
        assert_eq!(reduced_value(&tree, &psi, 0).unwrap(), 1.5);
        let red = reduce(&tree, &psi, 0).unwrap();
        assert_eq!(red.pair.first().stop_nodes(), vec![0]);
        assert_eq!(red.pair.second().stop_nodes(), vec![0]);
        assert_eq!(evaluate_pair(&tree, &psi, &red.pair).unwrap(), 1.5);
    }

    #[test]
    fn leaf_conditioning_returns_the_diagonal() {
        let tree = binary(2, 0.4);
        let psi = BiReward::from_fn(|_, a, b| (a + 2 * b) as f64);
        for &leaf in tree.leaves() {
            assert_eq!(
                conditional_value_u1(&tree, &psi, leaf).unwrap(),
                (3 * leaf) as f64
            );
            assert_eq!(
                conditional_value_u2(&tree, &psi, leaf).unwrap(),
                (3 * leaf) as f64
            );
        }
    }

    #[test]
    fn symmetric_psi_gives_equal_conditional_values() {
        let tree = binary(3, 0.6);
        let x = walk_levels(&tree);
        let psi = BiReward::from_fn(move |_, a, b| (x[a] + x[b]).max(0.0));
        let (u1, u2) = u1_u2_rewards(&tree, &psi).unwrap();
        for id in 0..tree.num_nodes() {
            assert_eq!(u1.value(id), u2.value(id));
        }
    }

    #[test]
    fn deeper_node_payoff_reduces_to_the_single_envelope() {
        let tree = binary(3, 0.45);
        let x: Vec<f64> = walk_levels(&tree).iter().map(|v| v.max(0.0)).collect();
        let xr = x.clone();
        let psi = BiReward::from_fn(move |tree: &ScenarioTree, a, b| {
            let deeper = if tree.is_ancestor_or_eq(a, b) { b } else { a };
            xr[deeper]
        });
        let phi = new_reward(&tree, &psi).unwrap();
        let reward = NodeReward::new(&tree, x).unwrap();
        let vf = snell::snell_envelope(&tree, &reward).unwrap();
        for id in 0..tree.num_nodes() {
            assert!((phi.value(id) - vf.value(id)).abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_evaluation_examples() {
        let tree = binary(2, 0.5);
        let x = walk_levels(&tree);
        let xr = x.clone();
        let psi = BiReward::from_fn(move |_, a, b| (xr[a] + xr[b] + 4.0) / 2.0);
        let stop_now = StoppingRule::stop_at_start(&tree, 0).unwrap();
        let at_leaves = StoppingRule::from_predicate(&tree, 0, |_| false).unwrap();

        let both_now = StoppingPair::new(stop_now.clone(), stop_now.clone()).unwrap();
        assert_eq!(evaluate_pair(&tree, &psi, &both_now).unwrap(), 2.0);

        let mixed = StoppingPair::new(stop_now, at_leaves).unwrap();
        let direct: f64 = tree
            .leaves()
            .iter()
            .map(|&l| tree.path_prob(0, l).unwrap() * (x[0] + x[l] + 4.0) / 2.0)
            .sum();
        assert!((evaluate_pair(&tree, &psi, &mixed).unwrap() - direct).abs() <= 1e-14);
    }

    #[test]
    fn incomparable_queries_are_rejected() {
        let tree = binary(2, 0.5);
        let psi = BiReward::from_fn(|_, _, _| 1.0);
        assert!(matches!(
            psi.value(&tree, 1, 2),
            Err(Error::IncomparablePair(1, 2))
        ));
        assert!(psi.value(&tree, 0, 5).is_ok());
    }

    #[test]
    fn table_validation_catches_gaps_and_bad_keys() {
        let tree = binary(1, 0.5);
        // Comparable pairs: (0,0), (1,1), (2,2), (0,1), (1,0), (0,2), (2,0).
        let full: Vec<((usize, usize), f64)> = vec![
            ((0, 0), 1.0),
            ((1, 1), 1.0),
            ((2, 2), 1.0),
            ((0, 1), 1.0),
            ((1, 0), 1.0),
            ((0, 2), 1.0),
            ((2, 0), 1.0),
        ];
        assert!(BiReward::from_table(&tree, full.clone()).is_ok());
        // Missing one direction.
        assert!(BiReward::from_table(&tree, full[..6].to_vec()).is_err());
        // Incomparable key.
        let mut bad = full.clone();
        bad.push(((1, 2), 1.0));
        assert!(BiReward::from_table(&tree, bad).is_err());
        // Negative value.
        let mut neg = full;
        neg[0].1 = -0.5;
        assert!(BiReward::from_table(&tree, neg).is_err());
    }

    #[test]
    fn increasing_deeper_payoff_attains_the_horizon_value() {
        // psi = time index of the pathwise-later node. Waiting dominates, so
        // the optimal value is the horizon. The u-values are constant, hence
        // the reduced rule stops immediately and the construction sends the
        // second leg to the leaves; the attained value is still optimal.
        let tree = binary(2, 0.5);
        let psi = BiReward::from_fn(move |tree: &ScenarioTree, a, b| {
            let deeper = if tree.is_ancestor_or_eq(a, b) { b } else { a };
            tree.time(deeper) as f64
        });
        let red = reduce(&tree, &psi, 0).unwrap();
        assert_eq!(red.reduced_value(0), tree.horizon() as f64);
        assert_eq!(red.pair.second().stop_nodes(), tree.leaves());
        let attained = evaluate_pair(&tree, &psi, &red.pair).unwrap();
        assert_eq!(attained, tree.horizon() as f64);
    }
}
