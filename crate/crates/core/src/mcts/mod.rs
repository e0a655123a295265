//! Batched Monte-Carlo tree search over the token MDP.
//!
//! [`TreeArena`] holds one tree per batch element in flat arrays and runs
//! the three simulation phases in lockstep. [`reference`] is a plain
//! recursive implementation of the same search, kept for differential
//! testing.

mod arena;
pub mod reference;
pub use reference::ReferenceSearch;

use serde::{Deserialize, Serialize};

pub use arena::{RootStats, TreeArena, ADAPTIVE_EPSILON, UNEXPLORED};

use crate::decoders::Candidate;
use crate::error::{Error, Result};
use crate::mdp::{DecodeState, TokenId};
use crate::models::{argmax, Evaluator};
use crate::scoring::Objective;

/// How a new leaf value is folded into its ancestors.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backup {
    /// Running mean over the visits.
    #[default]
    Average,
    /// Largest value seen below the node.
    Max,
}

/// How the action is picked once a search completes.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootSelection {
    #[default]
    VisitCount,
    MaxValue,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    /// The model's value head, also at terminal nodes.
    #[default]
    Model,
    /// Greedy rollout to a terminal state, scored by the metric.
    Rollout,
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct SearchConfig {
    #[serde(default)]
    pub num_simulations: usize,
    pub num_sparse_actions: usize,
    #[serde(default = "default_c_puct")]
    pub c_puct: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub backup: Backup,
    #[serde(default)]
    pub root_selection: RootSelection,
    #[serde(default)]
    pub value_source: ValueSource,
}

fn default_c_puct() -> f64 {
    1.0
}

fn default_tau() -> f64 {
    1.0
}

impl SearchConfig {
    pub fn new(num_simulations: usize, num_sparse_actions: usize) -> Self {
        SearchConfig {
            num_simulations,
            num_sparse_actions,
            c_puct: default_c_puct(),
            tau: default_tau(),
            backup: Backup::default(),
            root_selection: RootSelection::default(),
            value_source: ValueSource::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sparse_actions == 0 {
            return Err(Error::InvalidArgument("at least one sparse action is required".into()));
        }
        if !(self.c_puct > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "c_puct must be positive, got {}",
                self.c_puct
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

fn rollout_objectives<'o>(
    cfg: &SearchConfig,
    objectives: Option<&'o [Objective]>,
    batch: usize,
) -> Result<Option<&'o [Objective]>> {
    match cfg.value_source {
        ValueSource::Model => Ok(None),
        ValueSource::Rollout => match objectives {
            Some(o) if o.len() == batch => Ok(Some(o)),
            Some(o) => Err(Error::InvalidArgument(format!(
                "rollout search over {batch} states got {} objectives",
                o.len()
            ))),
            None => Err(Error::Config(
                "rollout value source needs an objective per state".into(),
            )),
        },
    }
}

/// One search per root state. The arena must have been sized for
/// `root_states.len()` batch elements and `cfg.num_simulations` simulations.
pub fn search(
    arena: &mut TreeArena,
    eval: Evaluator<'_>,
    root_states: &[DecodeState],
    cfg: &SearchConfig,
    objectives: Option<&[Objective]>,
) -> Result<Vec<RootStats>> {
    cfg.validate()?;
    if root_states.len() != arena.batch_size() || cfg.num_simulations + 1 > arena.capacity() {
        return Err(Error::InvalidArgument(format!(
            "arena sized for {} x {} nodes cannot hold {} x {}",
            arena.batch_size(),
            arena.capacity(),
            root_states.len(),
            cfg.num_simulations + 1
        )));
    }
    if root_states.iter().any(DecodeState::is_terminal) {
        return Err(Error::InvalidArgument("search roots must be non-terminal".into()));
    }
    let rollout = rollout_objectives(cfg, objectives, root_states.len())?;

    arena.reset();
    arena.expand_root(eval, root_states, cfg.tau, rollout)?;
    let mut leaves = vec![0usize; root_states.len()];
    for sim in 0..cfg.num_simulations {
        let (nodes, actions) = arena.simulate(cfg.c_puct);
        let next = sim + 1;
        arena.expand(&nodes, &actions, next, eval, cfg.tau, rollout)?;
        leaves.fill(next);
        arena.backward(&leaves, cfg.backup);
    }
    Ok((0..root_states.len()).map(|b| arena.root_stats(b)).collect())
}

/// Picks the decoding action from root statistics. Ties go to the lowest
/// token id; with no visited child the tempered root prior decides.
pub fn select_root_action(stats: &RootStats, mode: RootSelection) -> TokenId {
    let visited = stats.dense_visits.iter().any(|&v| v > 0);
    if !visited {
        return TokenId(argmax(&stats.tempered_prior) as u32);
    }
    let chosen = match mode {
        RootSelection::VisitCount => {
            let mut best = 0;
            for (a, &v) in stats.dense_visits.iter().enumerate() {
                if v > stats.dense_visits[best] {
                    best = a;
                }
            }
            best
        }
        RootSelection::MaxValue => {
            let mut best: Option<(usize, f64)> = None;
            for (a, v) in stats.dense_values.iter().enumerate() {
                if let Some(v) = *v {
                    if best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((a, v));
                    }
                }
            }
            best.map(|(a, _)| a).unwrap_or(0)
        }
    };
    TokenId(chosen as u32)
}

/// Decodes a batch by running one search per output position.
///
/// Terminated elements are held while the rest continue. Each position
/// costs `S + 1` evaluations per active element, plus rollouts when the
/// value source is [`ValueSource::Rollout`].
pub fn decode_mcts(
    eval: Evaluator<'_>,
    states: &[DecodeState],
    cfg: &SearchConfig,
    objectives: Option<&[Objective]>,
) -> Result<Vec<Candidate>> {
    decode_mcts_with(eval, states, cfg, objectives, |_, _| {})
}

/// [`decode_mcts`] with a callback invoked after each position's search,
/// receiving the arena and the batch indices it searched.
pub fn decode_mcts_with<F>(
    eval: Evaluator<'_>,
    states: &[DecodeState],
    cfg: &SearchConfig,
    objectives: Option<&[Objective]>,
    mut on_search: F,
) -> Result<Vec<Candidate>>
where
    F: FnMut(&TreeArena, &[usize]),
{
    if states.is_empty() {
        return Err(Error::InvalidArgument("decode_mcts needs a non-empty batch".into()));
    }
    cfg.validate()?;
    rollout_objectives(cfg, objectives, states.len())?;

    let mut candidates: Vec<Candidate> = states.iter().map(|s| Candidate::new(s.clone(), 0.0)).collect();
    let vocab_size = eval.vocab().size();
    loop {
        let active: Vec<usize> = (0..candidates.len())
            .filter(|&b| !candidates[b].is_finished())
            .collect();
        if active.is_empty() {
            break;
        }
        let roots: Vec<DecodeState> = active.iter().map(|&b| candidates[b].state.clone()).collect();
        let sub_objectives: Option<Vec<Objective>> = objectives.map(|o| active.iter().map(|&b| o[b].clone()).collect());
        let mut arena = TreeArena::new(active.len(), cfg.num_simulations, cfg.num_sparse_actions, vocab_size);
        let stats = search(&mut arena, eval, &roots, cfg, sub_objectives.as_deref())?;
        on_search(&arena, &active);

        for (&b, stat) in active.iter().zip(&stats) {
            let action = select_root_action(stat, cfg.root_selection);
            let c = &mut candidates[b];
            c.log_likelihood += stat.prior[action.index()].ln();
            c.state = c.state.step(action)?;
        }
        eval.ledger().record_tokens(active.len() as u64);
    }
    Ok(candidates)
}

/// Flattened view of one batch element's tree, in node-index order.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub nodes: Vec<NodeSnapshot>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub index: usize,
    pub parent: Option<usize>,
    /// Vocabulary id of the action leading here; `None` at the root.
    pub token: Option<TokenId>,
    /// Stored (tempered, truncated) prior of the incoming edge.
    pub prior: Option<f64>,
    pub visits: u32,
    pub value: f64,
    pub terminal: bool,
}

impl TreeArena {
    pub fn snapshot(&self, b: usize) -> TreeSnapshot {
        let nodes = (0..self.allocated())
            .map(|i| {
                let parent = self.parent(b, i);
                let (parent, token, prior) = if parent < 0 {
                    (None, None, None)
                } else {
                    let p = parent as usize;
                    let j = self.action_from_parent(b, i) as usize;
                    (
                        Some(p),
                        Some(TokenId(self.topk_mapping(b, p, j) as u32)),
                        Some(self.child_prior(b, p, j)),
                    )
                };
                NodeSnapshot {
                    index: i,
                    parent,
                    token,
                    prior,
                    visits: self.visit_count(b, i),
                    value: self.value(b, i),
                    terminal: self.is_terminal(b, i),
                }
            })
            .collect();
        TreeSnapshot { nodes }
    }
}
