use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoders::Candidate;
use crate::error::{Error, Result};
use crate::mdp::{DecodeState, TokenId};
use crate::models::{apply_temperature, argmax, Evaluator};
use crate::scoring::Objective;
use crate::seeding::stream_seed;

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum SampleMode {
    /// Ancestral sampling from the policy at temperature `tau`.
    Tempered(f64),
    /// Degenerate sampler that always takes the argmax.
    Argmax,
}

/// Draws `n` independent completions of `state`.
///
/// Sample `i` uses its own stream derived from `(seed, i)`, so the pool for
/// `n` is a prefix of the pool for any larger `n`.
pub fn sample_sequences(
    eval: Evaluator<'_>,
    state: &DecodeState,
    n: usize,
    mode: SampleMode,
    seed: u64,
) -> Result<Vec<Candidate>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample pool size must be at least 1".into()));
    }
    if let SampleMode::Tempered(tau) = mode {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
    }
    let mut pool = Vec::with_capacity(n);
    let mut positions = 0;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, i as u64));
        let mut walk = state.clone();
        let mut log_likelihood = 0.0;
        let mut steps = 0;
        while !walk.is_terminal() {
            let prior = eval.prior(&walk);
            let action = match mode {
                SampleMode::Argmax => argmax(&prior),
                SampleMode::Tempered(tau) => {
                    let tempered = apply_temperature(&prior, tau)?;
                    WeightedIndex::new(&tempered)
                        .map_err(|e| Error::InvalidArgument(format!("unusable prior: {e}")))?
                        .sample(&mut rng)
                }
            };
            log_likelihood += prior[action].ln();
            walk = walk.step(TokenId(action as u32))?;
            steps += 1;
        }
        positions = positions.max(steps);
        pool.push(Candidate::new(walk, log_likelihood));
    }
    // The pool is drawn as one lockstep batch: one position per step of the
    // longest sample.
    eval.ledger().record_tokens(positions as u64);
    Ok(pool)
}

/// Reranking criterion.
#[derive(Clone, Copy, Debug)]
pub enum RerankBy<'a> {
    /// The metric itself, computed on each finished candidate.
    Score(&'a Objective),
    /// The value head, one charged query per candidate.
    Value(Evaluator<'a>),
}

/// Returns the best candidate under `by`; ties go to the higher
/// log-likelihood, then to the earlier pool position.
pub fn rerank(candidates: &[Candidate], by: RerankBy<'_>) -> Result<Candidate> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("cannot rerank an empty pool".into()));
    }
    let criteria: Vec<f64> = match by {
        RerankBy::Score(objective) => candidates
            .iter()
            .map(|c| objective.reward(&c.state).map(|s| s.value()))
            .collect::<Result<_>>()?,
        RerankBy::Value(eval) => {
            let states: Vec<DecodeState> = candidates.iter().map(|c| c.state.clone()).collect();
            eval.values(&states).into_iter().map(|v| v.value()).collect()
        }
    };
    let mut best = 0;
    for i in 1..candidates.len() {
        let better = criteria[i] > criteria[best]
            || (criteria[i] == criteria[best] && candidates[i].log_likelihood > candidates[best].log_likelihood);
        if better {
            best = i;
        }
    }
    let mut winner = candidates[best].clone();
    let chosen = crate::mdp::Score::new(criteria[best]);
    match by {
        RerankBy::Score(_) => winner.score = Some(chosen),
        RerankBy::Value(_) => winner.value = Some(chosen),
    }
    Ok(winner)
}
