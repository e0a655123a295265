//! Flat-array search tree for a batch of independent searches.
//!
//! For batch element `b`, node `i` is the `i`-th node expanded; node 0 is
//! the root. Per-node arrays are laid out `(B, N)` and per-edge arrays
//! `(B, N, A)`, where `A` is the number of sparse actions kept per node.
//! `topk_mapping` maps a sparse action back to its vocabulary id.

use crate::error::Result;
use crate::mcts::Backup;
use crate::mdp::TokenId;
use crate::models::{apply_temperature, Evaluator, ModelState, PolicyValueOutput};
use crate::scoring::Objective;

pub const UNEXPLORED: i32 = -1;

/// Width added to the root value to seed the adaptive maximum.
pub const ADAPTIVE_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct TreeArena {
    batch: usize,
    num_nodes: usize,
    sparse: usize,
    vocab_size: usize,
    allocated: usize,

    visit_counts: Vec<u32>,
    values: Vec<f64>,
    raw_values: Vec<f64>,
    parents: Vec<i32>,
    action_from_parents: Vec<i32>,
    depth: Vec<u32>,
    is_terminal: Vec<bool>,

    topk_mapping: Vec<i32>,
    children_index: Vec<i32>,
    children_prior: Vec<f64>,
    children_values: Vec<f64>,
    children_visits: Vec<u32>,

    adaptive_min: Vec<f64>,
    adaptive_max: Vec<f64>,
    root_prior: Vec<Vec<f64>>,
    states: Vec<Option<ModelState>>,
}

/// Root statistics mapped back onto the full vocabulary.
#[derive(Clone, PartialEq, Debug)]
pub struct RootStats {
    pub dense_visits: Vec<u32>,
    /// Aggregated value per root child; `None` where unvisited.
    pub dense_values: Vec<Option<f64>>,
    /// Tempered root prior, used when no child was visited.
    pub tempered_prior: Vec<f64>,
    /// Untempered root prior.
    pub prior: Vec<f64>,
}

impl TreeArena {
    pub fn new(batch: usize, num_simulations: usize, num_sparse_actions: usize, vocab_size: usize) -> Self {
        let num_nodes = num_simulations + 1;
        let sparse = num_sparse_actions.clamp(1, vocab_size.max(1));
        let nodes = batch * num_nodes;
        let edges = nodes * sparse;
        let mut arena = TreeArena {
            batch,
            num_nodes,
            sparse,
            vocab_size,
            allocated: 0,
            visit_counts: vec![0; nodes],
            values: vec![0.0; nodes],
            raw_values: vec![0.0; nodes],
            parents: vec![0; nodes],
            action_from_parents: vec![0; nodes],
            depth: vec![0; nodes],
            is_terminal: vec![false; nodes],
            topk_mapping: vec![0; edges],
            children_index: vec![0; edges],
            children_prior: vec![0.0; edges],
            children_values: vec![0.0; edges],
            children_visits: vec![0; edges],
            adaptive_min: vec![0.0; batch],
            adaptive_max: vec![0.0; batch],
            root_prior: vec![Vec::new(); batch],
            states: vec![None; nodes],
        };
        arena.reset();
        arena
    }

    pub fn reset(&mut self) {
        self.allocated = 0;
        self.visit_counts.fill(0);
        self.values.fill(0.0);
        self.raw_values.fill(0.0);
        self.parents.fill(-1);
        self.action_from_parents.fill(-1);
        self.depth.fill(0);
        self.is_terminal.fill(false);
        self.topk_mapping.fill(-1);
        self.children_index.fill(UNEXPLORED);
        self.children_prior.fill(0.0);
        self.children_values.fill(0.0);
        self.children_visits.fill(0);
        self.adaptive_min.fill(0.0);
        self.adaptive_max.fill(0.0);
        self.root_prior.iter_mut().for_each(Vec::clear);
        self.states.iter_mut().for_each(|s| *s = None);
    }

    #[inline]
    fn node(&self, b: usize, i: usize) -> usize {
        b * self.num_nodes + i
    }

    #[inline]
    fn edge(&self, b: usize, i: usize, j: usize) -> usize {
        (b * self.num_nodes + i) * self.sparse + j
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn capacity(&self) -> usize {
        self.num_nodes
    }

    pub fn num_sparse_actions(&self) -> usize {
        self.sparse
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Nodes allocated so far in each batch element.
    pub fn allocated(&self) -> usize {
        self.allocated
    }

    pub fn visit_count(&self, b: usize, i: usize) -> u32 {
        self.visit_counts[self.node(b, i)]
    }

    pub fn value(&self, b: usize, i: usize) -> f64 {
        self.values[self.node(b, i)]
    }

    pub fn raw_value(&self, b: usize, i: usize) -> f64 {
        self.raw_values[self.node(b, i)]
    }

    pub fn parent(&self, b: usize, i: usize) -> i32 {
        self.parents[self.node(b, i)]
    }

    pub fn action_from_parent(&self, b: usize, i: usize) -> i32 {
        self.action_from_parents[self.node(b, i)]
    }

    pub fn depth(&self, b: usize, i: usize) -> u32 {
        self.depth[self.node(b, i)]
    }

    pub fn is_terminal(&self, b: usize, i: usize) -> bool {
        self.is_terminal[self.node(b, i)]
    }

    pub fn topk_mapping(&self, b: usize, i: usize, j: usize) -> i32 {
        self.topk_mapping[self.edge(b, i, j)]
    }

    pub fn child_index(&self, b: usize, i: usize, j: usize) -> i32 {
        self.children_index[self.edge(b, i, j)]
    }

    pub fn child_prior(&self, b: usize, i: usize, j: usize) -> f64 {
        self.children_prior[self.edge(b, i, j)]
    }

    pub fn child_value(&self, b: usize, i: usize, j: usize) -> f64 {
        self.children_values[self.edge(b, i, j)]
    }

    pub fn child_visits(&self, b: usize, i: usize, j: usize) -> u32 {
        self.children_visits[self.edge(b, i, j)]
    }

    pub fn adaptive_range(&self, b: usize) -> (f64, f64) {
        (self.adaptive_min[b], self.adaptive_max[b])
    }

    pub fn model_state(&self, b: usize, i: usize) -> Option<&ModelState> {
        self.states[self.node(b, i)].as_ref()
    }

    /// Sets the edge statistics of one node directly. Test scaffolding for
    /// exercising selection on hand-built trees.
    #[doc(hidden)]
    pub fn set_edge(&mut self, b: usize, i: usize, j: usize, prior: f64, visits: u32, value: f64) {
        let e = self.edge(b, i, j);
        self.children_prior[e] = prior;
        self.children_visits[e] = visits;
        self.children_values[e] = value;
    }

    #[doc(hidden)]
    pub fn set_node(&mut self, b: usize, i: usize, visits: u32, range: (f64, f64)) {
        let n = self.node(b, i);
        self.visit_counts[n] = visits;
        self.adaptive_min[b] = range.0;
        self.adaptive_max[b] = range.1;
        self.allocated = self.allocated.max(i + 1);
    }

    /// pUCT action for each batch element at the given node.
    ///
    /// `value + sqrt(N_parent) * c_puct * prior / (N_child + 1)`, with the
    /// child value min-max rescaled by the adaptive range. Unvisited children
    /// take the rescaled minimum, 0. Ties go to the lowest sparse index.
    pub fn uct_select_action(&self, node_indices: &[usize], c_puct: f64) -> Vec<usize> {
        node_indices
            .iter()
            .enumerate()
            .map(|(b, &i)| {
                let parent_visits = (self.visit_counts[self.node(b, i)] as f64).sqrt();
                let (lo, hi) = (self.adaptive_min[b], self.adaptive_max[b]);
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for j in 0..self.sparse {
                    let e = self.edge(b, i, j);
                    let visits = self.children_visits[e];
                    let value_score = if visits == 0 {
                        0.0
                    } else {
                        (self.children_values[e] - lo) / (hi - lo)
                    };
                    let policy_score = parent_visits * c_puct * self.children_prior[e] / (visits as f64 + 1.0);
                    let score = value_score + policy_score;
                    if score > best_score {
                        best = j;
                        best_score = score;
                    }
                }
                best
            })
            .collect()
    }

    /// Descends from the root until every batch element sits on an
    /// unexplored edge. Elements that arrive early hold their position.
    pub fn simulate(&self, c_puct: f64) -> (Vec<usize>, Vec<usize>) {
        let mut node_indices = vec![0usize; self.batch];
        loop {
            let actions = self.uct_select_action(&node_indices, c_puct);
            let mut all_unexplored = true;
            for (b, (node, &a)) in node_indices.iter_mut().zip(&actions).enumerate() {
                let next = self.children_index[self.edge(b, *node, a)];
                if next != UNEXPLORED {
                    all_unexplored = false;
                    *node = next as usize;
                }
            }
            if all_unexplored {
                return (node_indices, actions);
            }
        }
    }

    /// Writes node `node_index` from an evaluation: tempered prior truncated
    /// to the top sparse actions (not renormalized), value, visit count 1.
    fn create_node(
        &mut self,
        node_index: usize,
        outputs: Vec<(PolicyValueOutput, ModelState)>,
        values: &[f64],
        tau: f64,
    ) -> Result<()> {
        for (b, ((out, state), &value)) in outputs.into_iter().zip(values).enumerate() {
            let tempered = apply_temperature(&out.prior, tau)?;
            let mut order: Vec<usize> = (0..tempered.len()).collect();
            order.sort_by(|&x, &y| tempered[y].total_cmp(&tempered[x]).then(x.cmp(&y)));
            for (j, &dense) in order.iter().take(self.sparse).enumerate() {
                let e = self.edge(b, node_index, j);
                self.topk_mapping[e] = dense as i32;
                self.children_prior[e] = tempered[dense];
            }
            let n = self.node(b, node_index);
            self.values[n] = value;
            self.raw_values[n] = value;
            self.visit_counts[n] = 1;
            self.is_terminal[n] = state.is_terminal();
            self.states[n] = Some(state);
            if node_index == 0 {
                self.root_prior[b] = out.prior;
            }
        }
        self.allocated = self.allocated.max(node_index + 1);
        Ok(())
    }

    /// Evaluates and creates the root nodes, seeding the adaptive range.
    pub fn expand_root(
        &mut self,
        eval: Evaluator<'_>,
        root_states: &[crate::mdp::DecodeState],
        tau: f64,
        rollout: Option<&[Objective]>,
    ) -> Result<()> {
        let outputs = eval.evaluate_root(root_states);
        let values = node_values(eval, &outputs, rollout)?;
        for (b, &v) in values.iter().enumerate() {
            self.adaptive_min[b] = v;
            self.adaptive_max[b] = v + ADAPTIVE_EPSILON;
        }
        self.create_node(0, outputs, &values, tau)
    }

    /// Evaluates the child reached through each `(node, sparse action)` edge
    /// and wires it in as node `next_node_index`.
    pub fn expand(
        &mut self,
        node_indices: &[usize],
        actions: &[usize],
        next_node_index: usize,
        eval: Evaluator<'_>,
        tau: f64,
        rollout: Option<&[Objective]>,
    ) -> Result<()> {
        let mut states = Vec::with_capacity(self.batch);
        let mut dense = Vec::with_capacity(self.batch);
        for (b, (&i, &a)) in node_indices.iter().zip(actions).enumerate() {
            let n = self.node(b, i);
            states.push(self.states[n].clone().expect("expanded node has a state"));
            dense.push(TokenId(self.topk_mapping[self.edge(b, i, a)] as u32));
        }
        let outputs: Vec<(PolicyValueOutput, ModelState)> = eval
            .evaluate_step(&states, &dense)?
            .into_iter()
            .map(|s| (s.output, s.state))
            .collect();
        let values = node_values(eval, &outputs, rollout)?;
        self.create_node(next_node_index, outputs, &values, tau)?;

        for (b, (&i, &a)) in node_indices.iter().zip(actions).enumerate() {
            self.adaptive_min[b] = self.adaptive_min[b].min(values[b]);
            self.adaptive_max[b] = self.adaptive_max[b].max(values[b]);
            let e = self.edge(b, i, a);
            self.children_index[e] = next_node_index as i32;
            let n = self.node(b, next_node_index);
            self.parents[n] = i as i32;
            self.action_from_parents[n] = a as i32;
            self.depth[n] = self.depth[self.node(b, i)] + 1;
        }
        Ok(())
    }

    /// Propagates each leaf's value to all of its ancestors.
    pub fn backward(&mut self, leaf_indices: &[usize], backup: Backup) {
        let leaf_values: Vec<f64> = leaf_indices
            .iter()
            .enumerate()
            .map(|(b, &i)| self.values[self.node(b, i)])
            .collect();
        let mut node_indices = leaf_indices.to_vec();
        while node_indices.iter().any(|&i| i != 0) {
            for (b, node) in node_indices.iter_mut().enumerate() {
                if *node == 0 {
                    continue;
                }
                let n = self.node(b, *node);
                let parent = self.parents[n] as usize;
                let p = self.node(b, parent);
                let leaf = leaf_values[b];
                self.values[p] = match backup {
                    Backup::Average => {
                        let visits = self.visit_counts[p] as f64;
                        (self.values[p] * visits + leaf) / (visits + 1.0)
                    }
                    Backup::Max => self.values[p].max(leaf),
                };
                self.visit_counts[p] += 1;
                let e = self.edge(b, parent, self.action_from_parents[n] as usize);
                self.children_values[e] = self.values[n];
                self.children_visits[e] += 1;
                *node = parent;
            }
        }
    }

    /// Root-child visit counts scattered onto the vocabulary.
    pub fn dense_visit_counts(&self) -> Vec<Vec<u32>> {
        (0..self.batch).map(|b| self.root_stats(b).dense_visits).collect()
    }

    pub fn root_stats(&self, b: usize) -> RootStats {
        let mut dense_visits = vec![0; self.vocab_size];
        let mut dense_values = vec![None; self.vocab_size];
        for j in 0..self.sparse {
            let e = self.edge(b, 0, j);
            let dense = self.topk_mapping[e];
            if dense < 0 {
                continue;
            }
            let visits = self.children_visits[e];
            dense_visits[dense as usize] = visits;
            if visits > 0 {
                dense_values[dense as usize] = Some(self.children_values[e]);
            }
        }
        let prior = self.root_prior[b].clone();
        let tempered = (0..self.sparse)
            .map(|j| {
                (
                    self.topk_mapping[self.edge(b, 0, j)],
                    self.children_prior[self.edge(b, 0, j)],
                )
            })
            .fold(vec![0.0; self.vocab_size], |mut acc, (dense, p)| {
                if dense >= 0 {
                    acc[dense as usize] = p;
                }
                acc
            });
        RootStats {
            dense_visits,
            dense_values,
            tempered_prior: tempered,
            prior,
        }
    }
}

fn node_values(
    eval: Evaluator<'_>,
    outputs: &[(PolicyValueOutput, ModelState)],
    rollout: Option<&[Objective]>,
) -> Result<Vec<f64>> {
    match rollout {
        None => Ok(outputs.iter().map(|(o, _)| o.value.value()).collect()),
        Some(objectives) => outputs
            .iter()
            .zip(objectives)
            .map(|((_, state), objective)| {
                crate::models::rollout_value(eval.model(), state.decode_state(), objective, Some(eval.ledger()))
                    .map(|s| s.value())
            })
            .collect(),
    }
}
