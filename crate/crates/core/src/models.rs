//! Policy/value providers and the evaluation budget ledger.
//!
//! Decoders never call a model directly; they go through an [`Evaluator`],
//! which charges every forward call to a shared [`BudgetLedger`].

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{DecodeState, Score, Sequence, TokenId, Vocab};
use crate::scoring::Objective;
use crate::seeding::derive_seed;

#[derive(Clone, PartialEq, Debug)]
pub struct PolicyValueOutput {
    pub prior: Vec<f64>,
    pub value: Score,
}

/// A policy over next tokens plus a scalar value estimate.
///
/// Implementors provide [`policy`](PolicyValue::policy) for non-terminal
/// states only; the provided [`prior`](PolicyValue::prior) handles terminal
/// states by returning a one-hot EOS distribution.
pub trait PolicyValue: Send + Sync + fmt::Debug {
    fn vocab(&self) -> Vocab;

    fn max_len(&self) -> usize;

    fn policy(&self, state: &DecodeState) -> Vec<f64>;

    fn value(&self, state: &DecodeState) -> Score;

    fn root_state(&self, source: Sequence) -> DecodeState {
        DecodeState::root(source, self.vocab(), self.max_len())
    }

    fn prior(&self, state: &DecodeState) -> Vec<f64> {
        if state.is_terminal() {
            self.vocab().eos_one_hot()
        } else {
            self.policy(state)
        }
    }

    fn output(&self, state: &DecodeState) -> PolicyValueOutput {
        PolicyValueOutput {
            prior: self.prior(state),
            value: self.value(state),
        }
    }
}

/// Count of model forward calls and decoded positions.
#[derive(Debug, Default)]
pub struct BudgetLedger {
    evaluations: AtomicU64,
    tokens_decoded: AtomicU64,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&self, evaluations: u64) {
        self.evaluations.fetch_add(evaluations, Ordering::Relaxed);
    }

    pub fn record_tokens(&self, tokens: u64) {
        self.tokens_decoded.fetch_add(tokens, Ordering::Relaxed);
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn tokens_decoded(&self) -> u64 {
        self.tokens_decoded.load(Ordering::Relaxed)
    }

    pub fn per_token(&self) -> Option<f64> {
        match self.tokens_decoded() {
            0 => None,
            t => Some(self.evaluations() as f64 / t as f64),
        }
    }
}

/// Incremental evaluation handle for one decode state.
#[derive(Clone, PartialEq, Debug)]
pub struct ModelState {
    state: DecodeState,
}

impl ModelState {
    pub fn decode_state(&self) -> &DecodeState {
        &self.state
    }

    pub fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct StepOutput {
    pub output: PolicyValueOutput,
    pub state: ModelState,
    pub terminal: bool,
}

/// A model paired with the ledger its calls are charged to.
#[derive(Clone, Copy, Debug)]
pub struct Evaluator<'a> {
    model: &'a dyn PolicyValue,
    ledger: &'a BudgetLedger,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a dyn PolicyValue, ledger: &'a BudgetLedger) -> Self {
        Evaluator { model, ledger }
    }

    pub fn model(&self) -> &'a dyn PolicyValue {
        self.model
    }

    pub fn ledger(&self) -> &'a BudgetLedger {
        self.ledger
    }

    pub fn vocab(&self) -> Vocab {
        self.model.vocab()
    }

    pub fn evaluate_root(&self, states: &[DecodeState]) -> Vec<(PolicyValueOutput, ModelState)> {
        self.ledger.charge(states.len() as u64);
        states
            .iter()
            .map(|s| (self.model.output(s), ModelState { state: s.clone() }))
            .collect()
    }

    /// Advances each handle by its action. Terminal handles absorb: they
    /// stay put, keep their value and report a one-hot EOS prior.
    pub fn evaluate_step(&self, states: &[ModelState], actions: &[TokenId]) -> Result<Vec<StepOutput>> {
        if states.len() != actions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} model states but {} actions",
                states.len(),
                actions.len()
            )));
        }
        self.ledger.charge(states.len() as u64);
        states
            .iter()
            .zip(actions)
            .map(|(ms, &a)| {
                let next = if ms.is_terminal() {
                    ms.state.clone()
                } else {
                    ms.state.step(a)?
                };
                Ok(StepOutput {
                    output: self.model.output(&next),
                    terminal: next.is_terminal(),
                    state: ModelState { state: next },
                })
            })
            .collect()
    }

    /// A single charged policy query.
    pub fn prior(&self, state: &DecodeState) -> Vec<f64> {
        self.ledger.charge(1);
        self.model.prior(state)
    }

    /// Charged values for a batch of states.
    pub fn values(&self, states: &[DecodeState]) -> Vec<Score> {
        self.ledger.charge(states.len() as u64);
        states.iter().map(|s| self.model.value(s)).collect()
    }
}

/// `p^(1/tau)`, renormalized.
pub fn apply_temperature(prior: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if tau == 1.0 {
        return Ok(prior.to_vec());
    }
    let max_log = prior
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    if max_log == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("prior has no positive entry".into()));
    }
    let scaled: Vec<f64> = prior
        .iter()
        .map(|&p| if p > 0.0 { ((p.ln() - max_log) / tau).exp() } else { 0.0 })
        .collect();
    let total: f64 = scaled.iter().sum();
    Ok(scaled.into_iter().map(|x| x / total).collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy completion of `state` under the policy, scored by `objective`.
/// Each policy query along the way is charged to `ledger` when given.
pub fn rollout_value(
    model: &dyn PolicyValue,
    state: &DecodeState,
    objective: &Objective,
    ledger: Option<&BudgetLedger>,
) -> Result<Score> {
    let completed = greedy_completion(model, state, ledger)?;
    objective.reward(&completed)
}

pub(crate) fn greedy_completion(
    model: &dyn PolicyValue,
    state: &DecodeState,
    ledger: Option<&BudgetLedger>,
) -> Result<DecodeState> {
    let mut state = state.clone();
    while !state.is_terminal() {
        if let Some(ledger) = ledger {
            ledger.charge(1);
        }
        let action = argmax(&model.prior(&state));
        state = state.step(TokenId(action as u32))?;
    }
    Ok(state)
}

/// Where a tabular model's priors come from.
#[derive(Clone, PartialEq, Debug)]
pub enum PriorTable {
    /// One fixed distribution for every context.
    Fixed(Vec<f64>),
    /// Per-context softmax of uniform logits in `[-spread, spread]`.
    Seeded { seed: u64, spread: f64 },
}

#[derive(Clone, Debug)]
pub enum ValueHead {
    Constant(Score),
    /// Greedy rollout under the model's own policy. Internal to the value
    /// head, so it costs one evaluation like any other value query.
    Rollout(Objective),
}

/// A deterministic model whose prior depends only on the last
/// `context_order` prefix tokens.
#[derive(Clone, Debug)]
pub struct TabularModel {
    vocab: Vocab,
    max_len: usize,
    context_order: usize,
    priors: PriorTable,
    value_head: ValueHead,
}

/// Logit spread used by [`make_seeded_model`].
pub const DEFAULT_LOGIT_SPREAD: f64 = 2.0;

/// Seeded tabular model with a constant-zero value head; attach a value head
/// with [`TabularModel::with_value_head`].
pub fn make_seeded_model(seed: u64, vocab_size: usize, max_len: usize, context_order: usize) -> Result<TabularModel> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    Ok(TabularModel {
        vocab: Vocab::new(vocab_size)?,
        max_len,
        context_order,
        priors: PriorTable::Seeded {
            seed,
            spread: DEFAULT_LOGIT_SPREAD,
        },
        value_head: ValueHead::Constant(Score::ZERO),
    })
}

impl TabularModel {
    pub fn fixed(prior: Vec<f64>, max_len: usize) -> Result<Self> {
        let vocab = Vocab::new(prior.len())?;
        let total: f64 = prior.iter().sum();
        if prior.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "fixed prior is not a distribution: {prior:?}"
            )));
        }
        Ok(TabularModel {
            vocab,
            max_len,
            context_order: 0,
            priors: PriorTable::Fixed(prior),
            value_head: ValueHead::Constant(Score::ZERO),
        })
    }

    pub fn with_value_head(mut self, head: ValueHead) -> Self {
        self.value_head = head;
        self
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        if let PriorTable::Seeded { seed, .. } = self.priors {
            self.priors = PriorTable::Seeded { seed, spread };
        }
        self
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    fn context_prior(&self, context: &[TokenId]) -> Vec<f64> {
        match &self.priors {
            PriorTable::Fixed(p) => p.clone(),
            PriorTable::Seeded { seed, spread } => {
                let mut key = Vec::with_capacity(4 * context.len() + 8);
                key.extend_from_slice(&(context.len() as u64).to_le_bytes());
                for t in context {
                    key.extend_from_slice(&t.0.to_le_bytes());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(*seed, &[b"prior", &key]));
                let logits: Vec<f64> = (0..self.vocab.size())
                    .map(|_| rng.gen_range(-1.0..=1.0) * spread)
                    .collect();
                softmax(&logits)
            }
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl PolicyValue for TabularModel {
    fn vocab(&self) -> Vocab {
        self.vocab
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn policy(&self, state: &DecodeState) -> Vec<f64> {
        let prefix = state.prefix().tokens();
        let start = prefix.len().saturating_sub(self.context_order);
        self.context_prior(&prefix[start..])
    }

    fn value(&self, state: &DecodeState) -> Score {
        match &self.value_head {
            ValueHead::Constant(v) => *v,
            // A state built from this model's own vocabulary always rolls out;
            // a failing objective means the caller paired it with the wrong
            // instance, which the harness rejects before decoding.
            ValueHead::Rollout(objective) => rollout_value(self, state, objective, None).unwrap_or(Score::ZERO),
        }
    }
}

/// Adds seeded, state-keyed uniform noise in `[-amplitude, amplitude]` to an
/// inner model's value, emulating an imperfect learned value function.
#[derive(Clone, Debug)]
pub struct NoisyValue {
    inner: Arc<dyn PolicyValue>,
    amplitude: f64,
    seed: u64,
}

impl NoisyValue {
    pub fn new(inner: Arc<dyn PolicyValue>, amplitude: f64, seed: u64) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise amplitude must be non-negative, got {amplitude}"
            )));
        }
        Ok(NoisyValue { inner, amplitude, seed })
    }

    fn noise(&self, state: &DecodeState) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let mut key = Vec::new();
        for part in [state.source(), state.prefix()] {
            key.extend_from_slice(&(part.len() as u64).to_le_bytes());
            for t in part.tokens() {
                key.extend_from_slice(&t.0.to_le_bytes());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[b"value-noise", &key]));
        rng.gen_range(-self.amplitude..=self.amplitude)
    }
}

impl PolicyValue for NoisyValue {
    fn vocab(&self) -> Vocab {
        self.inner.vocab()
    }

    fn max_len(&self) -> usize {
        self.inner.max_len()
    }

    fn policy(&self, state: &DecodeState) -> Vec<f64> {
        self.inner.policy(state)
    }

    fn value(&self, state: &DecodeState) -> Score {
        Score::new(self.inner.value(state).value() + self.noise(state))
    }
}

/// `scale * v + offset` on the inner model's value (clamped to `[0, 1]`).
#[derive(Clone, Debug)]
pub struct AffineValue {
    inner: Arc<dyn PolicyValue>,
    scale: f64,
    offset: f64,
}

impl AffineValue {
    pub fn new(inner: Arc<dyn PolicyValue>, scale: f64, offset: f64) -> Self {
        AffineValue { inner, scale, offset }
    }
}

impl PolicyValue for AffineValue {
    fn vocab(&self) -> Vocab {
        self.inner.vocab()
    }

    fn max_len(&self) -> usize {
        self.inner.max_len()
    }

    fn policy(&self, state: &DecodeState) -> Vec<f64> {
        self.inner.policy(state)
    }

    fn value(&self, state: &DecodeState) -> Score {
        Score::new(self.scale * self.inner.value(state).value() + self.offset)
    }
}

/// Serializable model description used by the experiment harness.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub seed: u64,
    pub vocab_size: usize,
    pub max_len: usize,
    #[serde(default)]
    pub context_order: usize,
    /// Amplitude of the noise added to the rollout value head.
    #[serde(default)]
    pub value_noise: f64,
    /// Overrides the seeded prior with one fixed distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_prior: Option<Vec<f64>>,
}

impl ModelSpec {
    /// Builds the model for one instance, with a rollout value head bound to
    /// that instance's objective.
    pub fn build(&self, objective: Objective) -> Result<Arc<dyn PolicyValue>> {
        let base = match &self.fixed_prior {
            Some(prior) => {
                if prior.len() != self.vocab_size {
                    return Err(Error::Config(format!(
                        "fixed prior has {} entries for vocabulary size {}",
                        prior.len(),
                        self.vocab_size
                    )));
                }
                TabularModel::fixed(prior.clone(), self.max_len)?
            }
            None => make_seeded_model(self.seed, self.vocab_size, self.max_len, self.context_order)?,
        };
        let base: Arc<dyn PolicyValue> = Arc::new(base.with_value_head(ValueHead::Rollout(objective)));
        if self.value_noise > 0.0 {
            let noise_seed = derive_seed(self.seed, &[b"noise"]);
            Ok(Arc::new(NoisyValue::new(base, self.value_noise, noise_seed)?))
        } else {
            Ok(base)
        }
    }
}
