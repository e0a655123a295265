//! Sequence-level metrics. Each metric compares a candidate output against an
//! anchor sequence: the reference for privileged metrics, the source for
//! unprivileged ones.

mod bert;
mod bleu;
mod toy;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bert::{bert_style_score, Anchor, BertStyleScore, EmbeddingProvider, SeededEmbedder, TableEmbedder};
pub use bleu::{bleu, SentenceBleu};
pub use toy::{toy_coverage, toy_occupancy, ToyCoverage, ToyOccupancy};

use crate::error::{Error, Result};
use crate::mdp::{terminal_reward, DecodeState, Score, Sequence, TokenId};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Needs the ground-truth reference; not computable on unseen inputs.
    Privileged,
    /// Needs only the source.
    Unprivileged,
}

pub trait Metric: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn kind(&self) -> MetricKind;

    fn is_privileged(&self) -> bool {
        self.kind() == MetricKind::Privileged
    }

    /// Scores `candidate` (EOS already stripped) against `anchor`.
    fn score(&self, candidate: &[TokenId], anchor: &[TokenId]) -> Score;
}

/// Serializable description of a metric, resolved with [`MetricSpec::build`].
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Bleu {
        #[serde(default = "default_max_n")]
        max_n: usize,
    },
    /// Embedding alignment against the reference.
    BertReference {
        dim: usize,
        seed: u64,
    },
    /// Embedding alignment against the source.
    BertSource {
        dim: usize,
        seed: u64,
    },
    Occupancy {
        target: u32,
        horizon: usize,
    },
    Coverage,
}

fn default_max_n() -> usize {
    4
}

impl MetricSpec {
    pub fn build(&self) -> Result<Arc<dyn Metric>> {
        Ok(match *self {
            MetricSpec::Bleu { max_n } => Arc::new(SentenceBleu::new(max_n)?),
            MetricSpec::BertReference { dim, seed } => Arc::new(BertStyleScore::new(
                Arc::new(SeededEmbedder::new(dim, seed)?),
                Anchor::Reference,
            )),
            MetricSpec::BertSource { dim, seed } => Arc::new(BertStyleScore::new(
                Arc::new(SeededEmbedder::new(dim, seed)?),
                Anchor::Source,
            )),
            MetricSpec::Occupancy { target, horizon } => Arc::new(ToyOccupancy::new(TokenId(target), horizon)?),
            MetricSpec::Coverage => Arc::new(ToyCoverage),
        })
    }
}

/// A metric bound to the reference of one instance: everything needed to
/// score a terminal state.
#[derive(Clone, Debug)]
pub struct Objective {
    metric: Arc<dyn Metric>,
    reference: Option<Sequence>,
}

impl Objective {
    pub fn new(metric: Arc<dyn Metric>, reference: Option<Sequence>) -> Result<Self> {
        if metric.is_privileged() && reference.is_none() {
            return Err(Error::MissingReference { metric: metric.name() });
        }
        Ok(Objective { metric, reference })
    }

    pub fn metric(&self) -> &dyn Metric {
        self.metric.as_ref()
    }

    pub fn reference(&self) -> Option<&Sequence> {
        self.reference.as_ref()
    }

    pub fn reward(&self, state: &DecodeState) -> Result<Score> {
        terminal_reward(state, self.metric.as_ref(), self.reference.as_ref())
    }
}
