//! Recursive tree-of-records MCTS for a single root. Same selection,
//! expansion and backup rules as [`TreeArena`](super::TreeArena), written
//! without any of its index bookkeeping, so the two can be compared node
//! by node.

use crate::error::Result;
use crate::mcts::{Backup, SearchConfig, ValueSource, ADAPTIVE_EPSILON};
use crate::mdp::{DecodeState, TokenId};
use crate::models::{apply_temperature, rollout_value, PolicyValue};
use crate::scoring::Objective;

#[derive(Debug)]
struct Edge {
    token: TokenId,
    prior: f64,
    child: Option<Box<RefNode>>,
}

#[derive(Debug)]
struct RefNode {
    /// Creation order; matches the arena's node index.
    order: usize,
    state: DecodeState,
    visits: u32,
    value: f64,
    edges: Vec<Edge>,
}

#[derive(Debug)]
struct Context<'a> {
    model: &'a dyn PolicyValue,
    cfg: SearchConfig,
    objective: Option<&'a Objective>,
    lo: f64,
    hi: f64,
    created: usize,
}

#[derive(Debug)]
pub struct ReferenceSearch<'a> {
    ctx: Context<'a>,
    root: RefNode,
}

impl<'a> ReferenceSearch<'a> {
    pub fn new(
        model: &'a dyn PolicyValue,
        root: &DecodeState,
        cfg: SearchConfig,
        objective: Option<&'a Objective>,
    ) -> Result<Self> {
        let mut ctx = Context {
            model,
            cfg,
            objective,
            lo: 0.0,
            hi: 0.0,
            created: 0,
        };
        let root = ctx.make_node(root.clone())?;
        ctx.lo = root.value;
        ctx.hi = root.value + ADAPTIVE_EPSILON;
        Ok(ReferenceSearch { ctx, root })
    }

    pub fn run(&mut self, simulations: usize) -> Result<()> {
        for _ in 0..simulations {
            self.simulate_once()?;
        }
        Ok(())
    }

    pub fn simulate_once(&mut self) -> Result<()> {
        self.ctx.descend(&mut self.root).map(|_| ())
    }

    /// `(visits, value)` for every node, indexed by creation order.
    pub fn node_stats(&self) -> Vec<(u32, f64)> {
        let mut out = vec![(0, 0.0); self.ctx.created];
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            out[n.order] = (n.visits, n.value);
            stack.extend(n.edges.iter().filter_map(|e| e.child.as_deref()));
        }
        out
    }

    /// Per-token `(visits, value)` of the root's children.
    pub fn root_children(&self) -> Vec<(TokenId, u32, Option<f64>)> {
        self.root
            .edges
            .iter()
            .map(|e| match &e.child {
                Some(c) => (e.token, c.visits, Some(c.value)),
                None => (e.token, 0, None),
            })
            .collect()
    }

    pub fn adaptive_range(&self) -> (f64, f64) {
        (self.ctx.lo, self.ctx.hi)
    }
}

impl Context<'_> {
    fn make_node(&mut self, state: DecodeState) -> Result<RefNode> {
        let value = match (self.cfg.value_source, self.objective) {
            (ValueSource::Rollout, Some(obj)) => rollout_value(self.model, &state, obj, None)?.value(),
            _ => self.model.value(&state).value(),
        };
        let tempered = apply_temperature(&self.model.prior(&state), self.cfg.tau)?;
        let mut ranked: Vec<(TokenId, f64)> = tempered
            .iter()
            .enumerate()
            .map(|(i, &p)| (TokenId(i as u32), p))
            .collect();
        // stable sort keeps lower ids first among equal priors
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let keep = self.cfg.num_sparse_actions.min(ranked.len());
        let edges = ranked
            .into_iter()
            .take(keep)
            .map(|(token, prior)| Edge {
                token,
                prior,
                child: None,
            })
            .collect();
        let order = self.created;
        self.created += 1;
        Ok(RefNode {
            order,
            state,
            visits: 1,
            value,
            edges,
        })
    }

    /// Selects down from `node`, creates one leaf, and backs its value up on
    /// the way out. Returns the leaf value.
    fn descend(&mut self, node: &mut RefNode) -> Result<f64> {
        let j = self.select(node);
        let leaf = match node.edges[j].child.as_mut() {
            Some(child) => self.descend(child)?,
            None => {
                let next_state = if node.state.is_terminal() {
                    node.state.clone()
                } else {
                    node.state.step(node.edges[j].token)?
                };
                let child = self.make_node(next_state)?;
                self.lo = self.lo.min(child.value);
                self.hi = self.hi.max(child.value);
                let v = child.value;
                node.edges[j].child = Some(Box::new(child));
                v
            }
        };
        node.value = match self.cfg.backup {
            Backup::Average => (node.value * node.visits as f64 + leaf) / (node.visits as f64 + 1.0),
            Backup::Max => node.value.max(leaf),
        };
        node.visits += 1;
        Ok(leaf)
    }

    fn select(&self, node: &RefNode) -> usize {
        let sqrt_n = (node.visits as f64).sqrt();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (j, edge) in node.edges.iter().enumerate() {
            let (n, q) = match &edge.child {
                Some(c) => (c.visits, c.value),
                None => (0, 0.0),
            };
            let value_score = if n == 0 {
                0.0
            } else {
                (q - self.lo) / (self.hi - self.lo)
            };
            let score = value_score + sqrt_n * self.cfg.c_puct * edge.prior / (n as f64 + 1.0);
            if score > best_score {
                best = j;
                best_score = score;
            }
        }
        best
    }
}
