use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::decoders::{length_normalization, Candidate};
use crate::error::{Error, Result};
use crate::mdp::{DecodeState, Score, TokenId};
use crate::models::{apply_temperature, Evaluator};

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct BeamConfig {
    pub k: usize,
    /// Length-normalization exponent.
    pub theta: f64,
    /// Temperature applied to the policy before ranking.
    pub tau: f64,
}

impl BeamConfig {
    pub fn new(k: usize, theta: f64, tau: f64) -> Result<Self> {
        let cfg = BeamConfig { k, theta, tau };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("beam size must be at least 1".into()));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta must be non-negative, got {}",
                self.theta
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

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct VgbsConfig {
    pub k: usize,
    /// Weight of the length-averaged log-likelihood against the value.
    pub alpha: f64,
}

impl VgbsConfig {
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        let cfg = VgbsConfig { k, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("beam size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Hypothesis {
    state: DecodeState,
    log_likelihood: f64,
    /// Log-likelihood under the tempered policy; what ranking sees.
    ranked_log_likelihood: f64,
    value: Option<Score>,
    key: f64,
}

impl Hypothesis {
    fn into_candidate(self) -> Candidate {
        let mut c = Candidate::new(self.state, self.log_likelihood);
        c.value = self.value;
        c
    }
}

/// The `k` most likely next tokens under `tempered`, skipping impossible ones.
/// Ties go to the lowest token id.
fn top_tokens(tempered: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tempered.len()).filter(|&i| tempered[i] > 0.0).collect();
    order.sort_by(|&a, &b| tempered[b].total_cmp(&tempered[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Keeps the `k` best hypotheses. The sort is stable, so equal keys keep
/// pool order: surviving finished hypotheses first, then expansions in beam
/// and token-rank order.
fn prune(mut pool: Vec<Hypothesis>, k: usize) -> Vec<Hypothesis> {
    pool.sort_by(|a, b| b.key.partial_cmp(&a.key).unwrap_or(Ordering::Equal));
    pool.truncate(k);
    pool
}

fn best(beam: Vec<Hypothesis>) -> Result<Candidate> {
    beam.into_iter()
        .filter(|h| h.state.is_terminal())
        .reduce(|best, h| if h.key > best.key { h } else { best })
        .map(Hypothesis::into_candidate)
        .ok_or_else(|| Error::InvalidArgument("beam finished without a terminated hypothesis".into()))
}

/// Beam search ranked by `(6 / (t + 5))^theta * log pi`, with `t` counting
/// emitted tokens including EOS. Finished hypotheses stay in the pool and
/// compete with the expansions of the live ones.
pub fn beam_search(eval: Evaluator<'_>, state: &DecodeState, cfg: &BeamConfig) -> Result<Candidate> {
    cfg.validate()?;
    let theta = cfg.theta;
    run_beam(eval, state, cfg.k, cfg.tau, |h| {
        length_normalization(h.state.emitted_len(), theta) * h.ranked_log_likelihood
    })
}

/// Beam search with an arbitrary ranking key. Shared by the plain variant
/// and by tests comparing against other normalizations.
pub(crate) fn run_beam<F>(eval: Evaluator<'_>, state: &DecodeState, k: usize, tau: f64, rank: F) -> Result<Candidate>
where
    F: Fn(&Hypothesis) -> f64,
{
    let root = Hypothesis {
        state: state.clone(),
        log_likelihood: 0.0,
        ranked_log_likelihood: 0.0,
        value: None,
        key: 0.0,
    };
    let mut beam = vec![root];
    while beam.iter().any(|h| !h.state.is_terminal()) {
        let (finished, live): (Vec<_>, Vec<_>) = beam.into_iter().partition(|h| h.state.is_terminal());
        let states: Vec<DecodeState> = live.iter().map(|h| h.state.clone()).collect();
        let outputs = eval.evaluate_root(&states);
        eval.ledger().record_tokens(1);

        let mut pool = finished;
        for (h, (out, _)) in live.iter().zip(outputs) {
            let tempered = apply_temperature(&out.prior, tau)?;
            for a in top_tokens(&tempered, k) {
                let mut child = Hypothesis {
                    state: h.state.step(TokenId(a as u32))?,
                    log_likelihood: h.log_likelihood + out.prior[a].ln(),
                    ranked_log_likelihood: h.ranked_log_likelihood + tempered[a].ln(),
                    value: None,
                    key: 0.0,
                };
                child.key = rank(&child);
                pool.push(child);
            }
        }
        beam = prune(pool, k);
    }
    best(beam)
}

/// Beam search ranked by `(alpha / t) * log pi + (1 - alpha) * v`, where `v`
/// is the value head evaluated on the post-action state.
///
/// Every step evaluates a fixed-width batch: `k` policy slots and `k * k`
/// value slots, padding with repeats when fewer prefixes or continuations
/// exist. The ledger therefore grows by exactly `k + k^2` per step.
pub fn value_guided_beam_search(eval: Evaluator<'_>, state: &DecodeState, cfg: &VgbsConfig) -> Result<Candidate> {
    cfg.validate()?;
    let k = cfg.k;
    let alpha = cfg.alpha;
    let key = |state: &DecodeState, log_likelihood: f64, value: Score| {
        let t = state.emitted_len().max(1) as f64;
        alpha / t * log_likelihood + (1.0 - alpha) * value.value()
    };

    let root = Hypothesis {
        state: state.clone(),
        log_likelihood: 0.0,
        ranked_log_likelihood: 0.0,
        value: None,
        key: 0.0,
    };
    let mut beam = vec![root];
    while beam.iter().any(|h| !h.state.is_terminal()) {
        let (finished, live): (Vec<_>, Vec<_>) = beam.into_iter().partition(|h| h.state.is_terminal());

        let mut policy_batch: Vec<DecodeState> = live.iter().map(|h| h.state.clone()).collect();
        pad(&mut policy_batch, k);
        let outputs = eval.evaluate_root(&policy_batch);
        eval.ledger().record_tokens(1);

        let mut children = Vec::new();
        for (h, (out, _)) in live.iter().zip(&outputs) {
            for a in top_tokens(&out.prior, k) {
                children.push((h, a, h.state.step(TokenId(a as u32))?, out.prior[a]));
            }
        }
        let mut value_batch: Vec<DecodeState> = children.iter().map(|c| c.2.clone()).collect();
        pad(&mut value_batch, k * k);
        let values = eval.values(&value_batch);

        let mut pool = finished;
        for ((h, _, child_state, p), value) in children.into_iter().zip(values) {
            let log_likelihood = h.log_likelihood + p.ln();
            pool.push(Hypothesis {
                key: key(&child_state, log_likelihood, value),
                state: child_state,
                log_likelihood,
                ranked_log_likelihood: log_likelihood,
                value: Some(value),
            });
        }
        beam = prune(pool, k);
    }
    best(beam)
}

fn pad(batch: &mut Vec<DecodeState>, width: usize) {
    if let Some(first) = batch.first().cloned() {
        batch.resize(width.max(batch.len()), first);
    }
}
