//! Seeded generators for trees, rewards and pair rewards.
//!
//! Everything here is deterministic in the seed and identical across
//! platforms and thread counts: generators draw from dedicated PCG streams
//! derived from `(seed, purpose)`.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

use crate::double::BiReward;
use crate::error::Result;
use crate::seed::derive_stream;
use crate::snell::NodeReward;
use crate::tree::{NodeId, ScenarioTree};

const STREAM_TREE: u64 = 1;
const STREAM_REWARD: u64 = 2;
const STREAM_PSI: u64 = 3;

/// Random binary tree of the given depth: each internal node branches with
/// probabilities `(p, 1-p)`, `p` drawn uniformly from `[0.1, 0.9]` per level.
pub fn random_binary_tree(depth: usize, seed: u64) -> Result<ScenarioTree> {
    let mut rng = Pcg64Mcg::seed_from_u64(derive_stream(seed, STREAM_TREE));
    let levels: Vec<Vec<f64>> = (0..depth)
        .map(|_| {
            let p: f64 = rng.gen_range(0.1..=0.9);
            vec![p, 1.0 - p]
        })
        .collect();
    ScenarioTree::uniform(&levels)
}

/// I.i.d. uniform(0,1) node reward.
pub fn random_reward(tree: &ScenarioTree, seed: u64) -> Result<NodeReward> {
    let mut rng = Pcg64Mcg::seed_from_u64(derive_stream(seed, STREAM_REWARD));
    let values: Vec<f64> = (0..tree.num_nodes()).map(|_| rng.gen::<f64>()).collect();
    NodeReward::new(tree, values)
}

/// I.i.d. uniform(0,1) pair reward on every comparable ordered pair,
/// materialized as an explicit table. Pairs are filled in a fixed order
/// (ancestor id, then preorder within its subtree) so the table is a pure
/// function of the seed.
pub fn random_psi_table(tree: &ScenarioTree, seed: u64) -> Result<BiReward> {
    let mut rng = Pcg64Mcg::seed_from_u64(derive_stream(seed, STREAM_PSI));
    let mut entries = Vec::new();
    for a in 0..tree.num_nodes() {
        for &m in tree.subtree(a) {
            entries.push(((a, m), rng.gen::<f64>()));
            if m != a {
                entries.push(((m, a), rng.gen::<f64>()));
            }
        }
    }
    BiReward::from_table(tree, entries)
}

/// Deterministic random-walk level per node, derived from the branching
/// structure alone: with `k` children the `i`-th child steps by
/// `1 - 2i/(k-1)` (so a binary node steps by +1/-1), single children step 0.
pub fn walk_states(tree: &ScenarioTree) -> Vec<f64> {
    let mut x = vec![0.0f64; tree.num_nodes()];
    for id in 1..tree.num_nodes() {
        let parent = tree.node(id).parent.unwrap();
        let siblings = tree.children(parent);
        let k = siblings.len();
        let i = siblings.iter().position(|&c| c == id).unwrap();
        let step = if k == 1 {
            0.0
        } else {
            1.0 - 2.0 * i as f64 / (k - 1) as f64
        };
        x[id] = x[parent] + step;
    }
    x
}

/// Named pair-reward generators over the walk states. All are clamped at
/// zero to respect nonnegativity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiGenerator {
    /// `(x(a) + x(b))^+`
    Sum,
    /// `(x(a) - x(b))^+`
    Diff,
    /// `max(x(a), x(b))^+`
    Max,
    /// I.i.d. uniform(0,1) table (ignores states).
    Uniform,
}

impl PsiGenerator {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sum" => Some(PsiGenerator::Sum),
            "diff" => Some(PsiGenerator::Diff),
            "max" => Some(PsiGenerator::Max),
            "uniform" => Some(PsiGenerator::Uniform),
            _ => None,
        }
    }

    pub fn names() -> &'static [&'static str] {
        &["sum", "diff", "max", "uniform"]
    }

    /// Instantiates the generator on a tree. `seed` is only consumed by
    /// [`PsiGenerator::Uniform`].
    pub fn build(self, tree: &ScenarioTree, seed: u64) -> Result<BiReward> {
        let combine: fn(f64, f64) -> f64 = match self {
            PsiGenerator::Uniform => return random_psi_table(tree, seed),
            PsiGenerator::Sum => |a, b| (a + b).max(0.0),
            PsiGenerator::Diff => |a, b| (a - b).max(0.0),
            PsiGenerator::Max => |a, b| a.max(b).max(0.0),
        };
        let x = walk_states(tree);
        Ok(BiReward::from_fn(
            move |_: &ScenarioTree, a: NodeId, b: NodeId| combine(x[a], x[b]),
        ))
    }
}
