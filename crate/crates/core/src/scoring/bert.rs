use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{Score, TokenId};
use crate::scoring::{Metric, MetricKind};
use crate::seeding::derive_seed;

/// Per-token embedding vectors of a fixed dimension.
pub trait EmbeddingProvider: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn embed(&self, token: TokenId) -> Vec<f64>;
}

/// Random unit vectors, reproducible from `(seed, token)`.
#[derive(Clone, Copy, Debug)]
pub struct SeededEmbedder {
    dim: usize,
    seed: u64,
}

impl SeededEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(SeededEmbedder { dim, seed })
    }
}

impl EmbeddingProvider for SeededEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: TokenId) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[b"embed", &token.0.to_le_bytes()]));
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

/// Explicit vectors indexed by token id. Unknown tokens embed to zero.
#[derive(Clone, Debug)]
pub struct TableEmbedder {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

impl TableEmbedder {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument(
                "embedding table rows must share a positive dimension".into(),
            ));
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("embedding entries must be finite".into()));
        }
        Ok(TableEmbedder { vectors, dim })
    }
}

impl EmbeddingProvider for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: TokenId) -> Vec<f64> {
        self.vectors
            .get(token.index())
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dim])
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Greedy one-to-one embedding alignment score.
///
/// All candidate/anchor cosine similarities are ranked; the best pair whose
/// tokens are both still free is matched, until the shorter side is used up.
/// The mean matched similarity is mapped from `[-1, 1]` onto `[0, 1]` and
/// scaled by `min(len) / max(len)`. Empty inputs score zero.
pub fn bert_style_score(candidate: &[TokenId], anchor: &[TokenId], embedder: &dyn EmbeddingProvider) -> Score {
    if candidate.is_empty() || anchor.is_empty() {
        return Score::ZERO;
    }
    let cand: Vec<Vec<f64>> = candidate.iter().map(|&t| embedder.embed(t)).collect();
    let anch: Vec<Vec<f64>> = anchor.iter().map(|&t| embedder.embed(t)).collect();

    let mut pairs = Vec::with_capacity(cand.len() * anch.len());
    for (i, c) in cand.iter().enumerate() {
        for (j, a) in anch.iter().enumerate() {
            pairs.push((cosine(c, a), i, j));
        }
    }
    // Highest similarity first; ties go to the lowest (i, j).
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let matches = cand.len().min(anch.len());
    let mut cand_used = vec![false; cand.len()];
    let mut anch_used = vec![false; anch.len()];
    let mut total = 0.0;
    let mut taken = 0;
    for (sim, i, j) in pairs {
        if cand_used[i] || anch_used[j] {
            continue;
        }
        cand_used[i] = true;
        anch_used[j] = true;
        total += sim;
        taken += 1;
        if taken == matches {
            break;
        }
    }
    let mean = total / matches as f64;
    let length_penalty = matches as f64 / cand.len().max(anch.len()) as f64;
    Score::new((mean + 1.0) / 2.0 * length_penalty)
}

/// Which sequence the candidate is aligned against.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Anchor {
    Reference,
    /// Cross-lingual use: compare the candidate to its own source.
    Source,
}

#[derive(Clone, Debug)]
pub struct BertStyleScore {
    embedder: Arc<dyn EmbeddingProvider>,
    anchor: Anchor,
}

impl BertStyleScore {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>, anchor: Anchor) -> Self {
        BertStyleScore { embedder, anchor }
    }
}

impl Metric for BertStyleScore {
    fn name(&self) -> String {
        match self.anchor {
            Anchor::Reference => "bert_reference".into(),
            Anchor::Source => "bert_source".into(),
        }
    }

    fn kind(&self) -> MetricKind {
        match self.anchor {
            Anchor::Reference => MetricKind::Privileged,
            Anchor::Source => MetricKind::Unprivileged,
        }
    }

    fn score(&self, candidate: &[TokenId], anchor: &[TokenId]) -> Score {
        bert_style_score(candidate, anchor, self.embedder.as_ref())
    }
}
