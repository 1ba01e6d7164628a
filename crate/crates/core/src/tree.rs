//! Scenario-tree construction, node bookkeeping, and path-probability
//! propagation.
//!
//! Trees enumerate the human decision sequences over the horizon. At a
//! *branching* node every decision spawns a child; elsewhere the single
//! child inherits the parent's decision. The root always branches. Node
//! ids are assigned breadth-first with children ordered by decision id,
//! so numbering is reproducible.

use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("need at least one decision")]
    NoDecisions,
    #[error("branching rule selects depth {0} at or beyond the horizon")]
    BranchAtHorizon(usize),
    #[error("explicit branching id {0} does not exist or lies at the horizon")]
    BadExplicitId(usize),
    #[error("node {0} is not a child of node {1}")]
    NotAChild(usize, usize),
    #[error("distribution for node {0} is not normalized (sum {1})")]
    NotNormalized(usize, f64),
    #[error("missing branch distribution for branching node {0}")]
    MissingDistribution(usize),
    #[error("distribution length {got} does not match {want} decisions")]
    WrongArity { got: usize, want: usize },
}

/// Which nodes expand all decisions. The root is always branching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BranchingRule {
    /// Branch every node at the listed depths (depth 0 is implied).
    Depths(BTreeSet<usize>),
    /// Branch exactly the listed node ids (BFS numbering; 0 is implied).
    Explicit(BTreeSet<usize>),
}

impl BranchingRule {
    pub fn depths<I: IntoIterator<Item = usize>>(depths: I) -> Self {
        Self::Depths(depths.into_iter().collect())
    }

    /// Every non-leaf depth branches (the exact tree).
    pub fn full(horizon: usize) -> Self {
        Self::Depths((0..horizon).collect())
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioTree {
    horizon: usize,
    n_decisions: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    branching: Vec<bool>,
    /// Decision that caused the transition into the node (root: None).
    decision_label: Vec<Option<usize>>,
    depth_slices: Vec<Vec<usize>>,
}

impl ScenarioTree {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_decisions(&self) -> usize {
        self.n_decisions
    }

    pub fn n_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn is_branching(&self, node: usize) -> bool {
        self.branching[node]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.depth[node] == self.horizon
    }

    pub fn decision_label(&self, node: usize) -> Option<usize> {
        self.decision_label[node]
    }

    /// Nodes at a given depth, ascending.
    pub fn depth_slice(&self, k: usize) -> &[usize] {
        &self.depth_slices[k]
    }

    pub fn leaves(&self) -> &[usize] {
        &self.depth_slices[self.horizon]
    }

    pub fn branching_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&n| self.branching[n])
    }

    /// Nearest branching strict ancestor (the root if none nearer).
    pub fn branching_ancestor(&self, node: usize) -> usize {
        assert_ne!(node, 0, "the root has no branching ancestor");
        let mut cur = self.parent[node].expect("non-root node has a parent");
        loop {
            if self.branching[cur] {
                return cur;
            }
            cur = self.parent[cur].expect("walked past the root");
        }
    }

    /// Path from the root to `node`, inclusive.
    pub fn root_path(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

/// Builds the tree over `horizon` steps with `n_decisions` choices per
/// branching node.
pub fn build_tree(
    horizon: usize,
    n_decisions: usize,
    rule: &BranchingRule,
) -> Result<ScenarioTree, TreeError> {
    if horizon == 0 {
        return Err(TreeError::EmptyHorizon);
    }
    if n_decisions == 0 {
        return Err(TreeError::NoDecisions);
    }
    if let BranchingRule::Depths(depths) = rule {
        if let Some(&bad) = depths.iter().find(|&&d| d >= horizon) {
            return Err(TreeError::BranchAtHorizon(bad));
        }
    }

    let mut parent: Vec<Option<usize>> = vec![None];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut depth = vec![0usize];
    let mut branching = vec![true];
    let mut decision_label: Vec<Option<usize>> = vec![None];
    let mut frontier = vec![0usize];

    for k in 0..horizon {
        let mut next = Vec::new();
        for &node in &frontier {
            let branches = match rule {
                BranchingRule::Depths(depths) => k == 0 || depths.contains(&k),
                BranchingRule::Explicit(ids) => node == 0 || ids.contains(&node),
            };
            branching[node] = branches;
            let decisions: Vec<usize> = if branches {
                (0..n_decisions).collect()
            } else {
                vec![decision_label[node].expect("non-branching non-root inherits a decision")]
            };
            for d in decisions {
                let id = parent.len();
                parent.push(Some(node));
                children.push(Vec::new());
                depth.push(k + 1);
                branching.push(false);
                decision_label.push(Some(d));
                children[node].push(id);
                next.push(id);
            }
        }
        frontier = next;
    }

    if let BranchingRule::Explicit(ids) = rule {
        for &id in ids {
            if id >= parent.len() || depth[id] >= horizon {
                return Err(TreeError::BadExplicitId(id));
            }
            if !branching[id] {
                // Ids that never reached the frontier as branching (e.g.
                // created after their depth was processed) are invalid.
                return Err(TreeError::BadExplicitId(id));
            }
        }
    }

    let mut depth_slices = vec![Vec::new(); horizon + 1];
    for (node, &d) in depth.iter().enumerate() {
        depth_slices[d].push(node);
    }
    Ok(ScenarioTree {
        horizon,
        n_decisions,
        parent,
        children,
        depth,
        branching,
        decision_label,
        depth_slices,
    })
}

/// Probability of reaching each node from the root.
#[derive(Debug, Clone)]
pub struct PathProbabilities {
    p: Vec<f64>,
}

impl PathProbabilities {
    pub fn get(&self, node: usize) -> f64 {
        self.p[node]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Transition probability for the edge `node -> child`: the branch
/// distribution entry at branching nodes, 1.0 elsewhere.
pub fn transition_probability(
    tree: &ScenarioTree,
    node: usize,
    child: usize,
    branch_dist: &[f64],
) -> Result<f64, TreeError> {
    if !tree.children(node).contains(&child) {
        return Err(TreeError::NotAChild(child, node));
    }
    if !tree.is_branching(node) {
        return Ok(1.0);
    }
    if branch_dist.len() != tree.n_decisions() {
        return Err(TreeError::WrongArity { got: branch_dist.len(), want: tree.n_decisions() });
    }
    let d = tree.decision_label(child).expect("child has a decision label");
    Ok(branch_dist[d])
}

/// Root-to-node products of transition probabilities.
pub fn propagate_probabilities(
    tree: &ScenarioTree,
    branch_dists: &HashMap<usize, Vec<f64>>,
) -> Result<PathProbabilities, TreeError> {
    for (&node, dist) in branch_dists {
        if dist.len() != tree.n_decisions() {
            return Err(TreeError::WrongArity { got: dist.len(), want: tree.n_decisions() });
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TreeError::NotNormalized(node, sum));
        }
    }
    let mut p = vec![0.0; tree.n_nodes()];
    p[0] = 1.0;
    for node in 0..tree.n_nodes() {
        for &child in tree.children(node) {
            let step = if tree.is_branching(node) {
                let dist = branch_dists
                    .get(&node)
                    .ok_or(TreeError::MissingDistribution(node))?;
                dist[tree.decision_label(child).expect("labeled child")]
            } else {
                1.0
            };
            p[child] = p[node] * step;
        }
    }
    Ok(PathProbabilities { p })
}

/// Probabilities measured from an interior reference node (`p_{j->i}`),
/// restarting the product rule at `from` with probability one.
pub fn propagate_from(
    tree: &ScenarioTree,
    from: usize,
    branch_dists: &HashMap<usize, Vec<f64>>,
) -> Result<HashMap<usize, f64>, TreeError> {
    let mut rel = HashMap::new();
    rel.insert(from, 1.0);
    let mut stack = vec![from];
    while let Some(node) = stack.pop() {
        let pn = rel[&node];
        for &child in tree.children(node) {
            let step = if tree.is_branching(node) {
                let dist = branch_dists
                    .get(&node)
                    .ok_or(TreeError::MissingDistribution(node))?;
                dist[tree.decision_label(child).expect("labeled child")]
            } else {
                1.0
            };
            rel.insert(child, pn * step);
            stack.push(child);
        }
    }
    Ok(rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// The 19-node example tree: horizon 6, two decisions, branching at
    /// the root and both depth-3 nodes.
    pub(crate) fn example_tree() -> ScenarioTree {
        build_tree(6, 2, &BranchingRule::depths([0, 3])).unwrap()
    }

    #[test]
    fn example_tree_topology() {
        let t = example_tree();
        assert_eq!(t.n_nodes(), 19);
        assert_eq!(t.leaves(), &[15, 16, 17, 18]);
        let br: Vec<usize> = t.branching_nodes().collect();
        assert_eq!(br, vec![0, 5, 6]);
        // Non-branching nodes have exactly one child; branching two.
        for node in 0..t.n_nodes() {
            if t.is_leaf(node) {
                assert!(t.children(node).is_empty());
            } else if t.is_branching(node) {
                assert_eq!(t.children(node).len(), 2);
            } else {
                assert_eq!(t.children(node).len(), 1);
            }
        }
        assert_eq!(t.children(5), &[7, 8]);
        assert_eq!(t.children(6), &[9, 10]);
    }

    #[test]
    fn single_branch_tree_node_count() {
        let t = build_tree(2, 2, &BranchingRule::depths([0])).unwrap();
        assert_eq!(t.n_nodes(), 5);
    }

    #[test]
    fn lane_change_tree_node_count() {
        let t = build_tree(15, 2, &BranchingRule::depths([0, 7])).unwrap();
        assert_eq!(t.n_nodes(), 1 + 2 * 7 + 4 * 8);
    }

    #[test]
    fn full_tree_node_count() {
        let t = build_tree(7, 2, &BranchingRule::full(7)).unwrap();
        assert_eq!(t.n_nodes(), (1 << 8) - 1);
    }

    #[test]
    fn branching_at_horizon_rejected() {
        assert_eq!(
            build_tree(3, 2, &BranchingRule::depths([0, 3])).unwrap_err(),
            TreeError::BranchAtHorizon(3)
        );
    }

    #[test]
    fn branching_ancestors() {
        let t = example_tree();
        assert_eq!(t.branching_ancestor(11), 5);
        assert_eq!(t.branching_ancestor(3), 0);
        assert_eq!(t.branching_ancestor(1), 0);
        assert_eq!(t.branching_ancestor(5), 0);
    }

    #[test]
    fn transition_probabilities() {
        let t = example_tree();
        // Non-branching node 1 -> 3 is probability 1 regardless.
        assert_eq!(transition_probability(&t, 1, 3, &[0.2, 0.8]).unwrap(), 1.0);
        // Branching root with uniform distribution.
        assert_eq!(transition_probability(&t, 0, 1, &[0.5, 0.5]).unwrap(), 0.5);
        // Child labeled d2 gets the second entry.
        assert_eq!(transition_probability(&t, 0, 2, &[0.9, 0.1]).unwrap(), 0.1);
        assert!(matches!(
            transition_probability(&t, 0, 3, &[0.5, 0.5]),
            Err(TreeError::NotAChild(3, 0))
        ));
    }

    #[test]
    fn uniform_propagation_gives_quarter_leaves() {
        let t = example_tree();
        let dists: HashMap<usize, Vec<f64>> =
            t.branching_nodes().map(|n| (n, vec![0.5, 0.5])).collect();
        let p = propagate_probabilities(&t, &dists).unwrap();
        for &leaf in t.leaves() {
            assert_abs_diff_eq!(p.get(leaf), 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn root_only_branching_inherits_probabilities() {
        let t = build_tree(5, 2, &BranchingRule::depths([0])).unwrap();
        let dists = HashMap::from([(0usize, vec![0.7, 0.3])]);
        let p = propagate_probabilities(&t, &dists).unwrap();
        for k in 1..=5 {
            let slice = t.depth_slice(k);
            assert_abs_diff_eq!(p.get(slice[0]), 0.7, epsilon = 1e-15);
            assert_abs_diff_eq!(p.get(slice[1]), 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn lane_change_leaf_probabilities() {
        let t = build_tree(15, 2, &BranchingRule::depths([0, 7])).unwrap();
        let mut dists = HashMap::from([(0usize, vec![0.6, 0.4])]);
        for &n in t.depth_slice(7) {
            dists.insert(n, vec![0.5, 0.5]);
        }
        let p = propagate_probabilities(&t, &dists).unwrap();
        let mut leaf_ps: Vec<f64> = t.leaves().iter().map(|&l| p.get(l)).collect();
        leaf_ps.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let expected = [0.3, 0.3, 0.2, 0.2];
        for (got, want) in leaf_ps.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn unnormalized_distribution_rejected() {
        let t = example_tree();
        let dists = HashMap::from([(0usize, vec![0.6, 0.5]), (5, vec![0.5, 0.5]), (6, vec![0.5, 0.5])]);
        assert!(matches!(
            propagate_probabilities(&t, &dists),
            Err(TreeError::NotNormalized(0, _))
        ));
    }

    #[test]
    fn depth_slice_conservation_fuzz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let horizon = rng.gen_range(1..7);
            let n_dec = rng.gen_range(2..4);
            let mut depths = BTreeSet::from([0usize]);
            for d in 1..horizon {
                if rng.gen_bool(0.4) {
                    depths.insert(d);
                }
            }
            let t = build_tree(horizon, n_dec, &BranchingRule::Depths(depths)).unwrap();
            let dists: HashMap<usize, Vec<f64>> = t
                .branching_nodes()
                .map(|n| {
                    let mut w: Vec<f64> = (0..n_dec).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.iter_mut().for_each(|v| *v /= s);
                    (n, w)
                })
                .collect();
            let p = propagate_probabilities(&t, &dists).unwrap();
            for k in 0..=horizon {
                let sum: f64 = t.depth_slice(k).iter().map(|&n| p.get(n)).sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            }
            // Node-count recursion.
            for k in 0..horizon {
                let branching_at_k =
                    t.depth_slice(k).iter().filter(|&&n| t.is_branching(n)).count();
                let expect = t.depth_slice(k).len() + (n_dec - 1) * branching_at_k;
                assert_eq!(t.depth_slice(k + 1).len(), expect);
            }
            // Branching ancestor lies on the root path with no branching
            // node strictly between.
            for node in 1..t.n_nodes() {
                let anc = t.branching_ancestor(node);
                let path = t.root_path(node);
                let pos = path.iter().position(|&n| n == anc).expect("on path");
                for &mid in &path[pos + 1..path.len() - 1] {
                    assert!(!t.is_branching(mid) || mid == node);
                }
            }
        }
    }

    #[test]
    fn explicit_rule_matches_depth_rule() {
        let by_depth = example_tree();
        let by_id = build_tree(6, 2, &BranchingRule::Explicit(BTreeSet::from([5, 6]))).unwrap();
        assert_eq!(by_depth.n_nodes(), by_id.n_nodes());
        let a: Vec<usize> = by_depth.branching_nodes().collect();
        let b: Vec<usize> = by_id.branching_nodes().collect();
        assert_eq!(a, b);
    }
}
