use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mdp::{Score, TokenId};
use crate::scoring::{Metric, MetricKind};

fn ngram_counts(tokens: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU without smoothing: geometric mean of clipped n-gram
/// precisions for n in 1..=max_n, times the brevity penalty
/// `exp(min(0, 1 - r/c))`. Any zero precision yields zero.
pub fn bleu<C, R>(candidates: &[C], references: &[R], max_n: usize) -> Result<Score>
where
    C: AsRef<[TokenId]>,
    R: AsRef<[TokenId]>,
{
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "bleu needs one reference per candidate ({} candidates, {} references)",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("bleu over an empty corpus".into()));
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument("bleu max_n must be at least 1".into()));
    }

    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, reference) in candidates.iter().zip(references) {
        let (cand, reference) = (cand.as_ref(), reference.as_ref());
        cand_len += cand.len();
        ref_len += reference.len();
        for n in 1..=max_n {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(cand, n) {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += count.min(clip);
                total[n - 1] += count;
            }
        }
    }

    if cand_len == 0 {
        return Ok(Score::ZERO);
    }
    let mut log_sum = 0.0;
    for (&m, &t) in matched.iter().zip(&total) {
        if m == 0 || t == 0 {
            return Ok(Score::ZERO);
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let brevity = (1.0 - ref_len as f64 / cand_len as f64).min(0.0).exp();
    Ok(Score::new(brevity * (log_sum / max_n as f64).exp()))
}

/// BLEU of a single candidate against its reference.
#[derive(Clone, Copy, Debug)]
pub struct SentenceBleu {
    max_n: usize,
}

impl SentenceBleu {
    pub fn new(max_n: usize) -> Result<Self> {
        if max_n == 0 {
            return Err(Error::InvalidArgument("bleu max_n must be at least 1".into()));
        }
        Ok(SentenceBleu { max_n })
    }
}

impl Metric for SentenceBleu {
    fn name(&self) -> String {
        format!("bleu{}", self.max_n)
    }

    fn kind(&self) -> MetricKind {
        MetricKind::Privileged
    }

    fn score(&self, candidate: &[TokenId], anchor: &[TokenId]) -> Score {
        bleu(&[candidate], &[anchor], self.max_n).unwrap_or(Score::ZERO)
    }
}
