//! Ground-truth brute force on small trees.
//!
//! Every adapted stopping rule from a start node is enumerable: a rule either
//! stops at the node or continues with an independent choice of rule in each
//! child subtree. Indexing that recursion in mixed radix (stop first, then
//! the product of child streams with children in id order, last child
//! cycling fastest) yields a deterministic, lazily materialized stream. The
//! brute-force maxima over rules and over ordered pairs of rules are the
//! reference values for every engine output.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::double::{evaluate_pair_core, BiReward, PsiView};
use crate::error::{Error, Result};
use crate::snell::{evaluate_rule, NodeReward};
use crate::tree::{Decision, NodeId, ScenarioTree, StoppingPair, StoppingRule};

/// Caps that keep enumeration from running unbounded.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    /// Max number of single rules enumerated or streamed.
    pub max_rules: u128,
    /// Max number of evaluated ordered pairs.
    pub max_pairs: u128,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_rules: 1_000_000,
            max_pairs: 10_000_000,
        }
    }
}

struct RuleIndexer<'t> {
    tree: &'t ScenarioTree,
    start: NodeId,
    counts: HashMap<NodeId, u128>,
}

impl<'t> RuleIndexer<'t> {
    fn new(tree: &'t ScenarioTree, start: NodeId) -> Result<Self> {
        tree.check_node(start)?;
        let counts = tree.rule_counts_under(start);
        Ok(RuleIndexer {
            tree,
            start,
            counts,
        })
    }

    fn count(&self) -> u128 {
        self.counts[&self.start]
    }

    /// Materializes the rule at `index` in enumeration order.
    fn rule(&self, index: u128) -> StoppingRule {
        debug_assert!(index < self.count());
        let mut decisions = vec![None; self.tree.num_nodes()];
        let mut stack = vec![(self.start, index)];
        while let Some((node, idx)) = stack.pop() {
            if idx == 0 || self.tree.is_leaf(node) {
                decisions[node] = Some(Decision::Stop);
                continue;
            }
            decisions[node] = Some(Decision::Continue);
            // Mixed-radix digits of idx-1: children in id order, the last
            // child cycles fastest.
            let mut k = idx - 1;
            for &c in self.tree.children(node).iter().rev() {
                let f = self.counts[&c];
                stack.push((c, k % f));
                k /= f;
            }
            debug_assert_eq!(k, 0);
        }
        StoppingRule::from_raw_parts(self.start, decisions)
    }
}

/// Streams every adapted stopping rule from `start` exactly once, in
/// deterministic order. Fails upfront when the count exceeds the budget.
pub fn enumerate_rules<'t>(
    tree: &'t ScenarioTree,
    start: NodeId,
    budget: &EnumerationBudget,
) -> Result<impl Iterator<Item = StoppingRule> + 't> {
    let indexer = RuleIndexer::new(tree, start)?;
    let count = indexer.count();
    if count > budget.max_rules {
        return Err(Error::BudgetExceeded {
            required: count,
            budget: budget.max_rules,
            unit: "rules",
        });
    }
    Ok((0..count).map(move |i| indexer.rule(i)))
}

/// The rule at a given position of the enumeration order; handy for sampling
/// random rules without materializing the stream.
pub fn rule_by_index(tree: &ScenarioTree, start: NodeId, index: u128) -> Result<StoppingRule> {
    let indexer = RuleIndexer::new(tree, start)?;
    if index >= indexer.count() {
        return Err(Error::InvalidRule(format!(
            "rule index {index} out of range ({} rules)",
            indexer.count()
        )));
    }
    Ok(indexer.rule(index))
}

/// Exhaustive maximum of [`evaluate_rule`] over all rules from `start`.
/// Ties keep the first maximizer in enumeration order.
pub fn brute_force_single(
    tree: &ScenarioTree,
    reward: &NodeReward,
    start: NodeId,
    budget: &EnumerationBudget,
) -> Result<(f64, StoppingRule)> {
    let mut best: Option<(f64, StoppingRule)> = None;
    for rule in enumerate_rules(tree, start, budget)? {
        let v = evaluate_rule(tree, reward, &rule)?;
        match &best {
            Some((bv, _)) if v <= *bv => {}
            _ => best = Some((v, rule)),
        }
    }
    Ok(best.expect("every node admits at least the stop-now rule"))
}

/// Exhaustive maximum of the pair expectation over all ordered pairs of
/// rules from `start`. Ties keep the first maximizer in the nested
/// enumeration order (outer first rule, inner second rule).
pub fn brute_force_double(
    tree: &ScenarioTree,
    psi: &BiReward,
    start: NodeId,
    budget: &EnumerationBudget,
) -> Result<(f64, StoppingPair)> {
    let indexer = RuleIndexer::new(tree, start)?;
    let count = indexer.count();
    let pairs = count.saturating_mul(count);
    if pairs > budget.max_pairs {
        return Err(Error::BudgetExceeded {
            required: pairs,
            budget: budget.max_pairs,
            unit: "pairs",
        });
    }
    if count > budget.max_rules {
        return Err(Error::BudgetExceeded {
            required: count,
            budget: budget.max_rules,
            unit: "rules",
        });
    }
    let view = PsiView::new(tree, psi)?;
    let rules: Vec<StoppingRule> = (0..count).map(|i| indexer.rule(i)).collect();
    // Partitioned across the outer rule index; the sequential merge keeps the
    // first-maximizer tie rule by comparing (value, enumeration index).
    let row_best: Vec<(f64, usize)> = rules
        .par_iter()
        .map_init(Vec::new, |stack, r1| -> Result<(f64, usize)> {
            let mut best = f64::NEG_INFINITY;
            let mut best_j = 0usize;
            for (j, r2) in rules.iter().enumerate() {
                let v = evaluate_pair_core(tree, &view, r1, r2, stack)?;
                if v > best {
                    best = v;
                    best_j = j;
                }
            }
            Ok((best, best_j))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, &(v, j)) in row_best.iter().enumerate() {
        match &best {
            Some((bv, _, _)) if v <= *bv => {}
            _ => best = Some((v, i, j)),
        }
    }
    let (value, i, j) = best.expect("every node admits the stop-now pair");
    let pair = StoppingPair::new(rules[i].clone(), rules[j].clone())?;
    Ok((value, pair))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snell::{self, NodeReward};

    fn binary(depth: usize, p: f64) -> ScenarioTree {
        ScenarioTree::uniform(&vec![vec![p, 1.0 - p]; depth]).unwrap()
    }

    #[test]
    fn leaf_start_has_one_rule() {
        let tree = binary(2, 0.5);
        let leaf = tree.leaves()[0];
        let rules: Vec<_> = enumerate_rules(&tree, leaf, &EnumerationBudget::default())
            .unwrap()
            .collect();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].stop_nodes(), vec![leaf]);
    }

    #[test]
    fn enumeration_length_matches_the_count_recursion() {
        for depth in 0..=4 {
            let tree = binary(depth, 0.5);
            let n = enumerate_rules(&tree, 0, &EnumerationBudget::default())
                .unwrap()
                .count() as u128;
            assert_eq!(n, tree.count_stopping_rules(0).unwrap());
        }
    }

    #[test]
    fn depth_four_enumerates_677_distinct_valid_rules() {
        let tree = binary(4, 0.5);
        let mut seen = std::collections::HashSet::new();
        for rule in enumerate_rules(&tree, 0, &EnumerationBudget::default()).unwrap() {
            rule.validate(&tree).unwrap();
            assert!(seen.insert(rule.stop_nodes()), "duplicate rule");
        }
        assert_eq!(seen.len(), 677);
    }

    #[test]
    fn budget_is_enforced() {
        let tree = binary(4, 0.5);
        let tight = EnumerationBudget {
            max_rules: 100,
            max_pairs: 100,
        };
        assert!(matches!(
            enumerate_rules(&tree, 0, &tight).err(),
            Some(Error::BudgetExceeded { .. })
        ));
        let psi = BiReward::from_fn(|_, _, _| 1.0);
        assert!(matches!(
            brute_force_double(&tree, &psi, 0, &tight).err(),
            Some(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn constant_reward_argmax_is_stop_now() {
        let tree = binary(2, 0.5);
        let reward = NodeReward::constant(&tree, 2.0).unwrap();
        let (v, rule) =
            brute_force_single(&tree, &reward, 0, &EnumerationBudget::default()).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(rule.stop_nodes(), vec![0]);
    }

    #[test]
    fn depth_one_brute_force_picks_the_continue_rule() {
        let tree = binary(1, 0.5);
        let reward = NodeReward::new(&tree, vec![0.0, 2.0, 0.0]).unwrap();
        let (v, rule) =
            brute_force_single(&tree, &reward, 0, &EnumerationBudget::default()).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(rule.stop_nodes(), vec![1, 2]);
    }

    #[test]
    fn brute_force_single_matches_the_envelope_exactly() {
        // Deterministic pseudo-random rewards; equality is bitwise because the
        // rule evaluation nests expectations exactly like the induction.
        for seed in 0..20u64 {
            let tree = binary(3, 0.25 + 0.5 * ((seed % 7) as f64 / 7.0));
            let vals: Vec<f64> = (0..tree.num_nodes())
                .map(|id| {
                    let h = crate::seed::splitmix64(seed ^ (id as u64).wrapping_mul(0x9e37));
                    (h % 1_000_000) as f64 / 1_000_000.0
                })
                .collect();
            let reward = NodeReward::new(&tree, vals).unwrap();
            let vf = snell::snell_envelope(&tree, &reward).unwrap();
            for start in 0..tree.num_nodes() {
                let (bf, _) =
                    brute_force_single(&tree, &reward, start, &EnumerationBudget::default())
                        .unwrap();
                assert_eq!(
                    bf.to_bits(),
                    vf.value(start).to_bits(),
                    "seed {seed} start {start}"
                );
            }
        }
    }

    #[test]
    fn constant_psi_pair_maximum_is_stop_now_pair() {
        let tree = binary(2, 0.5);
        let psi = BiReward::from_fn(|_, _, _| 0.75);
        let (v, pair) = brute_force_double(&tree, &psi, 0, &EnumerationBudget::default()).unwrap();
        assert_eq!(v, 0.75);
        assert_eq!(pair.first().stop_nodes(), vec![0]);
        assert_eq!(pair.second().stop_nodes(), vec![0]);
    }

    #[test]
    fn submartingale_deeper_payoff_waits_until_the_leaves() {
        // psi = exp(walk level at the pathwise-later node): a submartingale
        // payoff, so the maximum is the full expectation at the horizon.
        // The payoff ignores the earlier stop, so the first maximizer in
        // enumeration order pins the first leg at the start and sends the
        // second to the leaves.
        let tree = binary(2, 0.5);
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
        let psi = BiReward::from_fn(move |tree: &ScenarioTree, a, b| {
            let later = if tree.is_ancestor_or_eq(a, b) { b } else { a };
            x[later].exp()
        });
        let (v, pair) = brute_force_double(&tree, &psi, 0, &EnumerationBudget::default()).unwrap();
        let expected = 0.25 * (2.0f64.exp() + 1.0 + 1.0 + (-2.0f64).exp());
        assert!((v - expected).abs() <= 1e-14);
        assert_eq!(pair.first().stop_nodes(), vec![0]);
        assert_eq!(pair.second().stop_nodes(), tree.leaves());
    }
}
