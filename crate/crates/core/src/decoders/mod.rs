//! Non-tree decoders: greedy, beam search, value-guided beam search, and
//! sampling followed by reranking.

mod beam;
mod sampling;

use serde::{Deserialize, Serialize};

pub use beam::{beam_search, value_guided_beam_search, BeamConfig, VgbsConfig};
pub use sampling::{rerank, sample_sequences, RerankBy, SampleMode};

use crate::error::Result;
use crate::mdp::{DecodeState, Score, Sequence, TokenId};
use crate::models::{argmax, Evaluator};

/// A finished (or, mid-beam, partial) output with its bookkeeping.
#[derive(Clone, PartialEq, Debug)]
pub struct Candidate {
    pub state: DecodeState,
    /// Sum of per-step log-probabilities under the untempered model.
    pub log_likelihood: f64,
    pub score: Option<Score>,
    pub value: Option<Score>,
}

impl Candidate {
    pub fn new(state: DecodeState, log_likelihood: f64) -> Self {
        Candidate {
            state,
            log_likelihood,
            score: None,
            value: None,
        }
    }

    /// The emitted tokens, including an explicit EOS if one was chosen.
    pub fn sequence(&self) -> &Sequence {
        self.state.prefix()
    }

    /// The tokens a metric sees.
    pub fn output(&self) -> &[TokenId] {
        self.state.output()
    }

    pub fn is_finished(&self) -> bool {
        self.state.is_terminal()
    }
}

/// `(6 / (t + 5))^theta`, the length normalization applied to a
/// log-likelihood of `t` emitted tokens.
pub fn length_normalization(t: usize, theta: f64) -> f64 {
    (6.0 / (t as f64 + 5.0)).powf(theta)
}

/// Serializable choice of algorithm and its hyper-parameters.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Greedy,
    Beam {
        #[serde(default)]
        theta: f64,
        #[serde(default = "one")]
        tau: f64,
    },
    Vgbs {
        alpha: f64,
    },
    Mcts(crate::mcts::SearchConfig),
    /// Sample and rerank by the metric.
    SampleRerank {
        #[serde(default = "one")]
        tau: f64,
    },
    /// Sample and rerank by the value head.
    SampleRerankValue {
        #[serde(default = "one")]
        tau: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Greedy => "greedy",
            AlgorithmSpec::Beam { .. } => "beam",
            AlgorithmSpec::Vgbs { .. } => "vgbs",
            AlgorithmSpec::Mcts(_) => "mcts",
            AlgorithmSpec::SampleRerank { .. } => "s+r",
            AlgorithmSpec::SampleRerankValue { .. } => "s+rv",
        }
    }

    /// Score-based reranking reads the metric at decode time.
    pub fn uses_score(&self) -> bool {
        matches!(self, AlgorithmSpec::SampleRerank { .. })
    }
}

/// Appends argmax tokens until the state terminates. Ties go to the lowest id.
pub fn greedy_decode(eval: Evaluator<'_>, state: &DecodeState) -> Result<Candidate> {
    let mut state = state.clone();
    let mut log_likelihood = 0.0;
    while !state.is_terminal() {
        let prior = eval.prior(&state);
        let action = argmax(&prior);
        log_likelihood += prior[action].ln();
        state = state.step(TokenId(action as u32))?;
        eval.ledger().record_tokens(1);
    }
    Ok(Candidate::new(state, log_likelihood))
}

/// Log-likelihood of the emitted tokens of `state` under the untempered model.
pub fn sequence_log_likelihood(model: &dyn crate::models::PolicyValue, state: &DecodeState) -> Result<f64> {
    let mut walk = model.root_state(state.source().clone());
    let mut total = 0.0;
    for &t in state.prefix().tokens() {
        total += model.prior(&walk)[t.index()].ln();
        walk = walk.step(t)?;
    }
    Ok(total)
}
