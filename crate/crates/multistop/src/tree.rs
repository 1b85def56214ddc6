//! Finite scenario trees and adapted stopping rules.
//!
//! A [`ScenarioTree`] is a finite, non-recombining event tree encoding a
//! discrete filtration: the atoms of the time-`t` sigma-field are the nodes
//! at depth `t`, the root is the trivial information at time 0, and every
//! branch carries a strictly positive conditional probability. All leaves
//! live at the common horizon.
//!
//! Node ids are dense integers in breadth-first order, so every engine in
//! this crate can use plain arrays indexed by node id.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node identifier (breadth-first order, root = 0).
pub type NodeId = usize;

/// Hard cap on node count for generic trees. The double-stopping reduction
/// performs O(N^2) value updates in the worst case.
pub const MAX_TREE_NODES: usize = 200_000;

/// Absolute tolerance for child-probability sums. Probabilities are stored
/// as given; nothing is renormalized.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// One node of a scenario tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    /// Time index in `{0, ..., horizon}`.
    pub t: usize,
    /// Parent id; `None` exactly for the root.
    pub parent: Option<NodeId>,
    /// Child ids in structural order (ascending).
    pub children: Vec<NodeId>,
    /// Conditional probability of reaching this node from its parent.
    /// The root carries 1.
    pub prob: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Branching description accepted by [`build_tree`].
#[derive(Debug, Clone)]
pub enum TreeSpec {
    /// Every node at depth `t` branches with the probability vector
    /// `levels[t]`. An empty list yields the single-root tree.
    Uniform { levels: Vec<Vec<f64>> },
    /// Explicit node list, already in breadth-first order.
    Explicit {
        horizon: usize,
        nodes: Vec<TreeNode>,
    },
}

/// Builds and validates a scenario tree from a branching description.
pub fn build_tree(spec: &TreeSpec) -> Result<ScenarioTree> {
    match spec {
        TreeSpec::Uniform { levels } => ScenarioTree::uniform(levels),
        TreeSpec::Explicit { horizon, nodes } => ScenarioTree::from_nodes(*horizon, nodes.clone()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeDoc {
    horizon: usize,
    nodes: Vec<TreeNode>,
}

/// A validated finite scenario tree.
///
/// Immutable after construction; all queries are read-only and safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    horizon: usize,
    nodes: Vec<TreeNode>,
    /// Depth-first preorder of node ids (children in structural order).
    preorder: Vec<NodeId>,
    /// Position of each node in `preorder`.
    pre_index: Vec<usize>,
    /// Number of nodes in each node's subtree (including itself).
    subtree_size: Vec<usize>,
    /// Leaf ids in ascending order.
    leaves: Vec<NodeId>,
}

impl ScenarioTree {
    /// Builds a tree where every node at depth `t` branches according to the
    /// probability vector `levels[t]`.
    pub fn uniform(levels: &[Vec<f64>]) -> Result<Self> {
        let horizon = levels.len();
        let mut nodes = vec![TreeNode {
            id: 0,
            t: 0,
            parent: None,
            children: Vec::new(),
            prob: 1.0,
        }];
        let mut current: Vec<NodeId> = vec![0];
        for (t, probs) in levels.iter().enumerate() {
            if probs.is_empty() {
                return Err(Error::InvalidTree(format!(
                    "level {t} has an empty probability vector"
                )));
            }
            let mut next = Vec::with_capacity(current.len() * probs.len());
            for &parent in &current {
                for &p in probs {
                    let id = nodes.len();
                    if id >= MAX_TREE_NODES {
                        return Err(Error::TreeTooLarge {
                            nodes: id + 1,
                            cap: MAX_TREE_NODES,
                        });
                    }
                    nodes.push(TreeNode {
                        id,
                        t: t + 1,
                        parent: Some(parent),
                        children: Vec::new(),
                        prob: p,
                    });
                    nodes[parent].children.push(id);
                    next.push(id);
                }
            }
            current = next;
        }
        Self::from_nodes(horizon, nodes)
    }

    /// Assembles a tree from an explicit node list and validates every
    /// structural invariant.
    pub fn from_nodes(horizon: usize, nodes: Vec<TreeNode>) -> Result<Self> {
        let mut tree = ScenarioTree {
            horizon,
            nodes,
            preorder: Vec::new(),
            pre_index: Vec::new(),
            subtree_size: Vec::new(),
            leaves: Vec::new(),
        };
        tree.validate()?;
        tree.index();
        Ok(tree)
    }

    /// Parses the JSON document `{horizon, nodes: [{id,t,parent,children,prob}]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeDoc = serde_json::from_str(text)
            .map_err(|e| Error::InvalidTree(format!("tree JSON parse error: {e}")))?;
        Self::from_nodes(doc.horizon, doc.nodes)
    }

    /// Serializes back to the same JSON document. Round-tripping reproduces
    /// identical ids, probabilities and structure.
    pub fn to_json(&self) -> String {
        let doc = TreeDoc {
            horizon: self.horizon,
            nodes: self.nodes.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("tree serialization cannot fail")
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::InvalidTree("empty node list".into()));
        }
        if n > MAX_TREE_NODES {
            return Err(Error::TreeTooLarge {
                nodes: n,
                cap: MAX_TREE_NODES,
            });
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidTree(format!(
                    "node at position {i} carries id {}; ids must be dense and in order",
                    node.id
                )));
            }
            if !node.prob.is_finite() || node.prob <= 0.0 || node.prob > 1.0 {
                return Err(Error::InvalidTree(format!(
                    "node {i} has branch probability {} outside (0,1]",
                    node.prob
                )));
            }
        }
        let root = &self.nodes[0];
        if root.t != 0 || root.parent.is_some() {
            return Err(Error::InvalidTree(
                "node 0 must be the root: t = 0 and no parent".into(),
            ));
        }
        if root.prob != 1.0 {
            return Err(Error::InvalidTree(format!(
                "root probability must be exactly 1, got {}",
                root.prob
            )));
        }
        for node in self.nodes.iter().skip(1) {
            let p = node.parent.ok_or_else(|| {
                Error::InvalidTree(format!("node {} has no parent; only the root may", node.id))
            })?;
            if p >= n {
                return Err(Error::UnknownNode(p));
            }
            if node.t != self.nodes[p].t + 1 {
                return Err(Error::InvalidTree(format!(
                    "node {} at t={} must sit one step below its parent {} at t={}",
                    node.id, node.t, p, self.nodes[p].t
                )));
            }
        }
        // Child lists must mirror the parent pointers, in ascending order.
        let mut expected: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for node in self.nodes.iter().skip(1) {
            expected[node.parent.unwrap()].push(node.id);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.children != expected[i] {
                return Err(Error::InvalidTree(format!(
                    "child list of node {i} does not match its children in id order"
                )));
            }
        }
        // Breadth-first traversal must visit ids 0,1,2,... exactly; this also
        // certifies connectivity and acyclicity.
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut visit = 0usize;
        while let Some(id) = queue.pop_front() {
            if id != visit {
                return Err(Error::InvalidTree(
                    "node ids are not in breadth-first order".into(),
                ));
            }
            visit += 1;
            queue.extend(self.nodes[id].children.iter().copied());
        }
        if visit != n {
            return Err(Error::InvalidTree(
                "node set is not connected to the root".into(),
            ));
        }
        for node in &self.nodes {
            if node.is_leaf() {
                if node.t != self.horizon {
                    return Err(Error::InvalidTree(format!(
                        "leaf {} sits at t={} but the horizon is {}",
                        node.id, node.t, self.horizon
                    )));
                }
            } else {
                let sum: f64 = node.children.iter().map(|&c| self.nodes[c].prob).sum();
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::InvalidTree(format!(
                        "probabilities of node {}'s children sum to {sum}",
                        node.id
                    )));
                }
            }
        }
        Ok(())
    }

    fn index(&mut self) {
        let n = self.nodes.len();
        let mut preorder = Vec::with_capacity(n);
        let mut pre_index = vec![0usize; n];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            pre_index[id] = preorder.len();
            preorder.push(id);
            for &c in self.nodes[id].children.iter().rev() {
                stack.push(c);
            }
        }
        let mut subtree_size = vec![1usize; n];
        for &id in preorder.iter().rev() {
            for &c in &self.nodes[id].children {
                subtree_size[id] += subtree_size[c];
            }
        }
        self.leaves = self
            .nodes
            .iter()
            .filter(|nd| nd.is_leaf())
            .map(|nd| nd.id)
            .collect();
        self.preorder = preorder;
        self.pre_index = pre_index;
        self.subtree_size = subtree_size;
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn check_node(&self, id: NodeId) -> Result<()> {
        if id < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id))
        }
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].is_leaf()
    }

    pub fn time(&self, id: NodeId) -> usize {
        self.nodes[id].t
    }

    pub fn prob(&self, id: NodeId) -> f64 {
        self.nodes[id].prob
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Nodes of the subtree rooted at `id`, in depth-first preorder.
    pub fn subtree(&self, id: NodeId) -> &[NodeId] {
        let from = self.pre_index[id];
        &self.preorder[from..from + self.subtree_size[id]]
    }

    pub fn subtree_size(&self, id: NodeId) -> usize {
        self.subtree_size[id]
    }

    /// True when `a` lies on the root path of `b` (or equals it).
    pub fn is_ancestor_or_eq(&self, a: NodeId, b: NodeId) -> bool {
        let pa = self.pre_index[a];
        let pb = self.pre_index[b];
        pa <= pb && pb < pa + self.subtree_size[a]
    }

    /// True when the two nodes lie on a common root path.
    pub fn comparable(&self, a: NodeId, b: NodeId) -> bool {
        self.is_ancestor_or_eq(a, b) || self.is_ancestor_or_eq(b, a)
    }

    /// Conditional probability of reaching `descendant` from `ancestor`
    /// (product of branch probabilities along the connecting path).
    pub fn path_prob(&self, ancestor: NodeId, descendant: NodeId) -> Result<f64> {
        if !self.is_ancestor_or_eq(ancestor, descendant) {
            return Err(Error::NotUnderStart {
                start: ancestor,
                leaf: descendant,
            });
        }
        let mut p = 1.0;
        let mut cur = descendant;
        while cur != ancestor {
            p *= self.nodes[cur].prob;
            cur = self.nodes[cur].parent.expect("non-root while walking up");
        }
        Ok(p)
    }

    /// Number of adapted stopping rules started at `start`:
    /// `f(leaf) = 1`, `f(node) = 1 + prod_children f(child)`.
    ///
    /// Saturates at `u128::MAX`; the count grows doubly exponentially.
    pub fn count_stopping_rules(&self, start: NodeId) -> Result<u128> {
        self.check_node(start)?;
        Ok(self.rule_counts_under(start)[&start])
    }

    /// Rule counts for every node of the subtree under `start`.
    pub(crate) fn rule_counts_under(
        &self,
        start: NodeId,
    ) -> std::collections::HashMap<NodeId, u128> {
        let mut counts = std::collections::HashMap::new();
        for &id in self.subtree(start).iter().rev() {
            let c = if self.is_leaf(id) {
                1u128
            } else {
                let mut prod = 1u128;
                for &ch in self.children(id) {
                    prod = prod.saturating_mul(counts[&ch]);
                }
                prod.saturating_add(1)
            };
            counts.insert(id, c);
        }
        counts
    }
}

/// Stop/continue decision attached to a reachable node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stop,
    Continue,
}

/// An adapted stopping rule rooted at a start node.
///
/// Decisions are defined exactly on the nodes reachable from the start
/// without an earlier stop; every path reaches exactly one STOP node at or
/// before the horizon (leaves force STOP).
#[derive(Debug, Clone)]
pub struct StoppingRule {
    start: NodeId,
    decisions: Vec<Option<Decision>>,
}

impl StoppingRule {
    /// Walks the reachable region from `start`, stopping where `stop_here`
    /// answers true. Leaves always stop.
    pub fn from_predicate(
        tree: &ScenarioTree,
        start: NodeId,
        mut stop_here: impl FnMut(NodeId) -> bool,
    ) -> Result<Self> {
        tree.check_node(start)?;
        let mut decisions = vec![None; tree.num_nodes()];
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            if tree.is_leaf(id) || stop_here(id) {
                decisions[id] = Some(Decision::Stop);
            } else {
                decisions[id] = Some(Decision::Continue);
                stack.extend(tree.children(id).iter().copied());
            }
        }
        Ok(StoppingRule { start, decisions })
    }

    /// Rule that stops immediately at `start`.
    pub fn stop_at_start(tree: &ScenarioTree, start: NodeId) -> Result<Self> {
        Self::from_predicate(tree, start, |_| true)
    }

    /// Builds a rule from its antichain of stop nodes. Every path from
    /// `start` must hit exactly one listed node.
    pub fn from_stop_nodes(tree: &ScenarioTree, start: NodeId, stops: &[NodeId]) -> Result<Self> {
        tree.check_node(start)?;
        for &s in stops {
            tree.check_node(s)?;
        }
        let stop_set: std::collections::HashSet<NodeId> = stops.iter().copied().collect();
        let mut seen = std::collections::HashSet::new();
        let mut decisions = vec![None; tree.num_nodes()];
        let mut stack = vec![start];
        while let Some(id) = stack.pop() {
            if stop_set.contains(&id) {
                decisions[id] = Some(Decision::Stop);
                seen.insert(id);
            } else if tree.is_leaf(id) {
                return Err(Error::InvalidRule(format!(
                    "path through leaf {id} never stops"
                )));
            } else {
                decisions[id] = Some(Decision::Continue);
                stack.extend(tree.children(id).iter().copied());
            }
        }
        if seen.len() != stop_set.len() {
            return Err(Error::InvalidRule(
                "some stop nodes are unreachable from the start (or shadowed by an earlier stop)"
                    .into(),
            ));
        }
        Ok(StoppingRule { start, decisions })
    }

    /// Assembles a rule from a prebuilt decision buffer. The caller is
    /// responsible for the rule invariants; engines use this after marking
    /// decisions along walks that already respect them.
    pub(crate) fn from_raw_parts(start: NodeId, decisions: Vec<Option<Decision>>) -> Self {
        StoppingRule { start, decisions }
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    /// Decision at `id`, or `None` when the node is not reachable under this
    /// rule (outside the start subtree, or past a stop).
    pub fn decision(&self, id: NodeId) -> Option<Decision> {
        self.decisions.get(id).copied().flatten()
    }

    pub fn stops_at(&self, id: NodeId) -> bool {
        self.decision(id) == Some(Decision::Stop)
    }

    /// All stop nodes, ascending by id.
    pub fn stop_nodes(&self) -> Vec<NodeId> {
        self.decisions
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == Some(Decision::Stop))
            .map(|(i, _)| i)
            .collect()
    }

    /// The unique stop node on the path from the start towards `leaf`.
    ///
    /// `leaf` must be a descendant-or-equal of the start node; it does not
    /// have to be an actual leaf, as long as the path already stopped.
    pub fn stopped_node(&self, tree: &ScenarioTree, leaf: NodeId) -> Result<NodeId> {
        tree.check_node(leaf)?;
        if !tree.is_ancestor_or_eq(self.start, leaf) {
            return Err(Error::NotUnderStart {
                start: self.start,
                leaf,
            });
        }
        // Walk up from the leaf; the lowest STOP decision on the path is the
        // stop node because decisions vanish below a stop.
        let mut cur = leaf;
        loop {
            if self.stops_at(cur) {
                return Ok(cur);
            }
            if cur == self.start {
                return Err(Error::InvalidRule(format!(
                    "no stop node on the path from {} to {}",
                    self.start, leaf
                )));
            }
            cur = tree.node(cur).parent.expect("walking up a validated tree");
        }
    }

    /// Re-checks the rule invariants against a tree: one decision per
    /// reachable node, none elsewhere, every path stopping exactly once.
    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        if self.decisions.len() != tree.num_nodes() {
            return Err(Error::InvalidRule(format!(
                "rule covers {} nodes, tree has {}",
                self.decisions.len(),
                tree.num_nodes()
            )));
        }
        tree.check_node(self.start)?;
        let mut reachable = vec![false; tree.num_nodes()];
        let mut stack = vec![self.start];
        while let Some(id) = stack.pop() {
            reachable[id] = true;
            match self.decision(id) {
                Some(Decision::Stop) => {}
                Some(Decision::Continue) => {
                    if tree.is_leaf(id) {
                        return Err(Error::InvalidRule(format!("leaf {id} carries CONTINUE")));
                    }
                    stack.extend(tree.children(id).iter().copied());
                }
                None => {
                    return Err(Error::InvalidRule(format!(
                        "reachable node {id} has no decision"
                    )));
                }
            }
        }
        for (id, d) in self.decisions.iter().enumerate() {
            if d.is_some() && !reachable[id] {
                return Err(Error::InvalidRule(format!(
                    "node {id} carries a decision but is not reachable under the rule"
                )));
            }
        }
        Ok(())
    }
}

/// Two stopping rules sharing a start node.
#[derive(Debug, Clone)]
pub struct StoppingPair {
    first: StoppingRule,
    second: StoppingRule,
}

impl StoppingPair {
    pub fn new(first: StoppingRule, second: StoppingRule) -> Result<Self> {
        if first.start() != second.start() {
            return Err(Error::MismatchedStart(first.start(), second.start()));
        }
        Ok(StoppingPair { first, second })
    }

    pub fn start(&self) -> NodeId {
        self.first.start()
    }

    pub fn first(&self) -> &StoppingRule {
        &self.first
    }

    pub fn second(&self) -> &StoppingRule {
        &self.second
    }
}
