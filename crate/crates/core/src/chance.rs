//! Chance-constraint machinery over scenario trees: term collection for
//! the joint / stage-based / node-based variants, the tight hyperplane
//! reformulation, the sigmoid outer approximation, and brute-force
//! probability oracles used by the tests.
//!
//! Throughout, a *term* is a pair `(p_i, g_i)` of a transition
//! probability and a scalar constraint value; violation means `g > 0`
//! (`g = 0` is feasible, matching the open-interval indicator).

use crate::tree::{propagate_from, PathProbabilities, ScenarioTree, TreeError};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Margin standing in for the strict inequalities of the tight
/// reformulation; NLP solvers require closed feasible sets.
pub const DELTA_STRICT: f64 = 1e-8;
/// Upper bound on the hyperplane multipliers (the rows are invariant to
/// positive scaling, so the box only fixes the degeneracy).
pub const LAMBDA_MAX: f64 = 1e3;
/// Lower bound on the hyperplane multipliers.
pub const LAMBDA_MIN: f64 = DELTA_STRICT;

#[derive(Debug, Error, PartialEq)]
pub enum ChanceError {
    #[error("probability/constraint vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("enumeration budget exceeded: {0} leaves")]
    TooManyLeaves(usize),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Which transitions a chance constraint covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChanceVariant {
    /// Every transition in the tree, jointly (one group).
    Joint,
    /// Transitions into each time step separately (one group per depth).
    Stage,
    /// Transitions from each branching node separately, with
    /// probabilities measured relative to that node.
    Node,
}

/// One probability-weighted violation term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub node: usize,
    pub probability: f64,
}

/// A group of terms sharing one violation budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGroup {
    /// Joint: root id; Stage: depth k; Node: branching node id.
    pub key: usize,
    pub terms: Vec<Term>,
    pub budget: f64,
}

#[derive(Debug, Clone)]
pub struct ViolationTermGroups {
    pub variant: ChanceVariant,
    pub groups: Vec<TermGroup>,
}

/// Collects the violation terms for a variant from concrete path
/// probabilities. Node-based groups recompute probabilities relative to
/// the group's branching node instead of propagating from the root.
pub fn collect_terms(
    tree: &ScenarioTree,
    probs: &PathProbabilities,
    variant: ChanceVariant,
    budget: f64,
    branch_dists: &HashMap<usize, Vec<f64>>,
) -> Result<ViolationTermGroups, ChanceError> {
    let groups = match variant {
        ChanceVariant::Joint => {
            let terms = (1..tree.n_nodes())
                .map(|n| Term { node: n, probability: probs.get(n) })
                .collect();
            vec![TermGroup { key: 0, terms, budget }]
        }
        ChanceVariant::Stage => (1..=tree.horizon())
            .map(|k| TermGroup {
                key: k,
                terms: tree
                    .depth_slice(k)
                    .iter()
                    .map(|&n| Term { node: n, probability: probs.get(n) })
                    .collect(),
                budget,
            })
            .collect(),
        ChanceVariant::Node => {
            let branching: Vec<usize> = tree.branching_nodes().collect();
            let mut groups = Vec::new();
            for j in branching {
                let rel = propagate_from(tree, j, branch_dists)?;
                let mut terms = Vec::new();
                for node in 1..tree.n_nodes() {
                    if tree.branching_ancestor(node) == j {
                        terms.push(Term { node, probability: rel[&node] });
                    }
                }
                if !terms.is_empty() {
                    groups.push(TermGroup { key: j, terms, budget });
                }
            }
            groups
        }
    };
    Ok(ViolationTermGroups { variant, groups })
}

/// Exact weighted indicator sum `sum_i p_i 1_(0,inf)(g_i)` (test oracle;
/// not differentiable).
pub fn indicator_sum_oracle(p: &[f64], g: &[f64]) -> Result<f64, ChanceError> {
    if p.len() != g.len() {
        return Err(ChanceError::LengthMismatch(p.len(), g.len()));
    }
    Ok(p.iter().zip(g).filter(|&(_, &gi)| gi > 0.0).map(|(pi, _)| pi).sum())
}

/// Tight hyperplane reformulation of one group: per term `i` the rows
///
/// ```text
///   lambda1_i g_i + lambda2_i (p_i - eps_i) + DELTA_STRICT <= 0
/// ```
///
/// plus the shared budget row `sum_i eps_i - budget <= 0`, with
/// `eps_i >= 0` and `lambda in [LAMBDA_MIN, LAMBDA_MAX]` as box bounds.
#[derive(Debug, Clone)]
pub struct TightBlock {
    pub m: usize,
    pub budget: f64,
}

impl TightBlock {
    pub fn new(m: usize, budget: f64) -> Self {
        assert!((0.0..=1.0).contains(&budget), "budget must lie in [0,1]");
        Self { m, budget }
    }

    /// Residual rows given multipliers and term values: `m` term rows
    /// followed by the budget row.
    pub fn residuals(&self, eps: &[f64], lambda1: &[f64], lambda2: &[f64], p: &[f64], g: &[f64], out: &mut [f64]) {
        for i in 0..self.m {
            out[i] = lambda1[i] * g[i] + lambda2[i] * (p[i] - eps[i]) + DELTA_STRICT;
        }
        out[self.m] = eps.iter().sum::<f64>() - self.budget;
    }

    /// Uniform initial multipliers (`eps_i = budget/m`, `lambda = 1`).
    pub fn initial_multipliers(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.m.max(1);
        (vec![self.budget / m as f64; self.m], vec![1.0; self.m], vec![1.0; self.m])
    }

    /// Analytic satisfiability of the block over its multiplier box:
    /// minimizes each row over `lambda` and splits the budget greedily.
    /// Returns the cheapest feasible budget split, or `None`.
    pub fn feasible_split(&self, p: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(p.len(), self.m);
        assert_eq!(g.len(), self.m);
        let mut eps = vec![0.0; self.m];
        let mut spent = 0.0;
        for i in 0..self.m {
            // Row minimum over the lambda box at eps_i = 0.
            let t1 = if g[i] >= 0.0 { LAMBDA_MIN * g[i] } else { LAMBDA_MAX * g[i] };
            let t2 = if p[i] >= 0.0 { LAMBDA_MIN * p[i] } else { LAMBDA_MAX * p[i] };
            if t1 + t2 + DELTA_STRICT <= 0.0 {
                continue;
            }
            // Budget is needed: with lambda2 at its maximum the row asks
            // eps_i >= p_i + (DELTA_STRICT + t1) / LAMBDA_MAX.
            let need = p[i] + (DELTA_STRICT + t1) / LAMBDA_MAX;
            let need = need.max(0.0);
            eps[i] = need;
            spent += need;
        }
        if spent <= self.budget {
            Some(eps)
        } else {
            None
        }
    }

    pub fn is_satisfiable(&self, p: &[f64], g: &[f64]) -> bool {
        self.feasible_split(p, g).is_some()
    }
}

/// Scaled sigmoid `a / (1 + exp(-alpha x))`; with `a = 1 + exp(0)` it
/// dominates the indicator at zero, making the sum an outer bound.
pub fn sigmoid(a: f64, alpha: f64, x: f64) -> f64 {
    a / (1.0 + (-alpha * x).exp())
}

/// Derivative of [`sigmoid`] in `x`.
pub fn sigmoid_deriv(a: f64, alpha: f64, x: f64) -> f64 {
    let e = (-alpha * x).exp();
    a * alpha * e / ((1.0 + e) * (1.0 + e))
}

/// Second derivative of [`sigmoid`] in `x`.
pub fn sigmoid_second_deriv(a: f64, alpha: f64, x: f64) -> f64 {
    let e = (-alpha * x).exp();
    let denom = (1.0 + e).powi(3);
    a * alpha * alpha * e * (e - 1.0) / denom
}

/// Smooth outer approximation of a group: `sum_i p_i sigma(g_i) - budget`.
#[derive(Debug, Clone, Copy)]
pub struct SigmoidBlock {
    pub a: f64,
    pub alpha: f64,
    pub budget: f64,
}

impl SigmoidBlock {
    pub fn new(budget: f64) -> Self {
        // a = 1 + exp(0) keeps the approximation an outer bound at x = 0.
        Self { a: 2.0, alpha: 3.0, budget }
    }

    pub fn value(&self, p: &[f64], g: &[f64]) -> f64 {
        p.iter()
            .zip(g)
            .map(|(pi, gi)| pi * sigmoid(self.a, self.alpha, *gi))
            .sum::<f64>()
            - self.budget
    }
}

/// Exact probability that a root-to-leaf path visits at least one
/// violating node, by leaf enumeration.
pub fn union_probability_exact(
    tree: &ScenarioTree,
    branch_dists: &HashMap<usize, Vec<f64>>,
    violating: &HashSet<usize>,
) -> Result<f64, ChanceError> {
    const MAX_LEAVES: usize = 10_000;
    if tree.leaves().len() > MAX_LEAVES {
        return Err(ChanceError::TooManyLeaves(tree.leaves().len()));
    }
    let probs = crate::tree::propagate_probabilities(tree, branch_dists)?;
    let mut total = 0.0;
    for &leaf in tree.leaves() {
        if tree.root_path(leaf).iter().any(|n| violating.contains(n)) {
            total += probs.get(leaf);
        }
    }
    Ok(total)
}
