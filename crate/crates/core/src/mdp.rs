//! The token-level decision process: states are (source, partial output)
//! pairs, actions are vocabulary tokens, transitions append the chosen token.
//!
//! A state terminates when its prefix ends with the end-of-sequence token or
//! when it holds `max_len` tokens. In the latter case an end-of-sequence token
//! is implied with probability one: it is not stored in the prefix, but it
//! counts as an emitted token for length normalization.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::Metric;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A vocabulary of `size` tokens. The last id is the end-of-sequence token.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Vocab {
    size: usize,
}

impl Vocab {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument(format!(
                "vocabulary needs at least one content token and EOS, got size {size}"
            )));
        }
        Ok(Vocab { size })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn eos(&self) -> TokenId {
        TokenId((self.size - 1) as u32)
    }

    #[inline]
    pub fn contains(&self, token: TokenId) -> bool {
        token.index() < self.size
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> {
        (0..self.size as u32).map(TokenId)
    }

    /// Probability vector with all mass on EOS.
    pub fn eos_one_hot(&self) -> Vec<f64> {
        let mut prior = vec![0.0; self.size];
        prior[self.eos().index()] = 1.0;
        prior
    }
}

#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sequence(Vec<TokenId>);

impl Sequence {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        Sequence(tokens)
    }

    pub fn from_ids(ids: &[u32]) -> Self {
        Sequence(ids.iter().copied().map(TokenId).collect())
    }

    #[inline]
    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token: TokenId) {
        self.0.push(token);
    }

    pub fn last(&self) -> Option<TokenId> {
        self.0.last().copied()
    }

    /// The tokens with a trailing EOS removed.
    pub fn without_eos(&self, eos: TokenId) -> &[TokenId] {
        match self.0.split_last() {
            Some((&last, rest)) if last == eos => rest,
            _ => &self.0,
        }
    }

    /// At most one EOS, and only in final position.
    pub fn is_well_formed(&self, eos: TokenId) -> bool {
        self.without_eos(eos).iter().all(|&t| t != eos)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.0.iter().map(|t| t.0).collect()
    }
}

impl AsRef<[TokenId]> for Sequence {
    fn as_ref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for Sequence {
    fn from(tokens: Vec<TokenId>) -> Self {
        Sequence(tokens)
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("]")
    }
}

/// A metric value on the unit interval.
#[derive(Clone, Copy, PartialEq, PartialOrd, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(f64);

impl Score {
    pub const ZERO: Score = Score(0.0);
    pub const ONE: Score = Score(1.0);

    /// Clamps into `[0, 1]`; NaN maps to zero.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            Score(0.0)
        } else {
            Score(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct DecodeState {
    source: Arc<Sequence>,
    prefix: Sequence,
    max_len: usize,
    vocab: Vocab,
    terminal: bool,
}

impl DecodeState {
    /// The root state for `source`: empty prefix, terminal only if `max_len == 0`.
    pub fn root(source: Sequence, vocab: Vocab, max_len: usize) -> Self {
        DecodeState {
            source: Arc::new(source),
            prefix: Sequence::default(),
            max_len,
            vocab,
            terminal: max_len == 0,
        }
    }

    /// Builds a state from an explicit prefix, validating it against the vocabulary.
    pub fn with_prefix(source: Sequence, prefix: Sequence, vocab: Vocab, max_len: usize) -> Result<Self> {
        let mut state = DecodeState::root(source, vocab, max_len);
        for &t in prefix.tokens() {
            state = state.step(t)?;
        }
        Ok(state)
    }

    pub fn step(&self, action: TokenId) -> Result<DecodeState> {
        if self.terminal {
            return Err(Error::SteppedTerminal { len: self.prefix.len() });
        }
        if !self.vocab.contains(action) {
            return Err(Error::TokenOutOfRange {
                token: action.0,
                vocab_size: self.vocab.size(),
            });
        }
        let mut prefix = self.prefix.clone();
        prefix.push(action);
        let terminal = action == self.vocab.eos() || prefix.len() >= self.max_len;
        Ok(DecodeState {
            source: Arc::clone(&self.source),
            prefix,
            max_len: self.max_len,
            vocab: self.vocab,
            terminal,
        })
    }

    #[inline]
    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    #[inline]
    pub fn source(&self) -> &Sequence {
        &self.source
    }

    #[inline]
    pub fn prefix(&self) -> &Sequence {
        &self.prefix
    }

    #[inline]
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    #[inline]
    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    /// The output tokens as seen by metrics: the prefix without its EOS.
    pub fn output(&self) -> &[TokenId] {
        self.prefix.without_eos(self.vocab.eos())
    }

    /// Number of emitted tokens, counting the EOS of a terminal state even
    /// when it was implied by the length cap.
    pub fn emitted_len(&self) -> usize {
        if self.terminal {
            self.output().len() + 1
        } else {
            self.prefix.len()
        }
    }

    /// Remaining actions before the length cap forces termination.
    pub fn remaining(&self) -> usize {
        self.max_len.saturating_sub(self.prefix.len())
    }
}

/// Reward of a terminal state: the metric against the reference for
/// privileged metrics, against the source otherwise.
pub fn terminal_reward(state: &DecodeState, metric: &dyn Metric, reference: Option<&Sequence>) -> Result<Score> {
    if !state.is_terminal() {
        return Err(Error::NonTerminalReward);
    }
    let anchor = if metric.is_privileged() {
        reference.ok_or_else(|| Error::MissingReference { metric: metric.name() })?
    } else {
        state.source()
    };
    Ok(metric.score(state.output(), anchor.tokens()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{SentenceBleu, ToyOccupancy};

    const A: TokenId = TokenId(0);
    const B: TokenId = TokenId(1);
    const EOS: TokenId = TokenId(2);

    fn vocab() -> Vocab {
        Vocab::new(3).unwrap()
    }

    fn state(prefix: &[u32], max_len: usize) -> DecodeState {
        DecodeState::with_prefix(
            Sequence::from_ids(&[0, 1]),
            Sequence::from_ids(prefix),
            vocab(),
            max_len,
        )
        .unwrap()
    }

    #[test]
    fn step_appends() {
        let s = state(&[], 3).step(A).unwrap();
        assert_eq!(s.prefix(), &Sequence::new(vec![A]));
        assert!(!s.is_terminal());
        assert_eq!(s.source(), &Sequence::from_ids(&[0, 1]));
    }

    #[test]
    fn step_hits_length_cap() {
        let s = state(&[0, 0], 3).step(A).unwrap();
        assert_eq!(s.prefix().len(), 3);
        assert!(s.is_terminal());
        assert_eq!(s.emitted_len(), 4);
    }

    #[test]
    fn step_eos_terminates() {
        let s = state(&[0], 3).step(EOS).unwrap();
        assert!(s.is_terminal());
        assert_eq!(s.output(), &[A]);
        assert_eq!(s.emitted_len(), 2);
    }

    #[test]
    fn stepping_terminal_is_reported() {
        let s = state(&[2], 3);
        assert!(matches!(s.step(B), Err(Error::SteppedTerminal { len: 1 })));
        assert!(matches!(
            state(&[], 3).step(TokenId(3)),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_max_len_root_is_terminal() {
        let s = DecodeState::root(Sequence::default(), vocab(), 0);
        assert!(s.is_terminal());
        assert_eq!(s.emitted_len(), 1);
    }

    #[test]
    fn reward_of_toy_occupancy() {
        let metric = ToyOccupancy::new(A, 3).unwrap();
        assert_eq!(
            terminal_reward(&state(&[0, 0, 0], 3), &metric, None).unwrap(),
            Score::ONE
        );
        assert_eq!(terminal_reward(&state(&[2], 3), &metric, None).unwrap(), Score::ZERO);
        let two_thirds = terminal_reward(&state(&[1, 0, 0], 3), &metric, None).unwrap();
        assert!((two_thirds.value() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reward_needs_terminal_and_reference() {
        let bleu = SentenceBleu::new(1).unwrap();
        assert!(matches!(
            terminal_reward(&state(&[0], 3), &bleu, None),
            Err(Error::NonTerminalReward)
        ));
        assert!(matches!(
            terminal_reward(&state(&[0, 2], 3), &bleu, None),
            Err(Error::MissingReference { .. })
        ));
        let reference = Sequence::from_ids(&[0, 1]);
        let r = terminal_reward(&state(&[0, 1, 2], 3), &bleu, Some(&reference)).unwrap();
        assert_eq!(r, Score::ONE);
    }

    #[test]
    fn well_formed_sequences() {
        assert!(Sequence::from_ids(&[0, 1, 2]).is_well_formed(EOS));
        assert!(!Sequence::from_ids(&[2, 1]).is_well_formed(EOS));
        assert!(Sequence::default().is_well_formed(EOS));
    }

    #[test]
    fn score_clamps() {
        assert_eq!(Score::new(1.5).value(), 1.0);
        assert_eq!(Score::new(-0.1).value(), 0.0);
        assert_eq!(Score::new(f64::NAN).value(), 0.0);
    }
}
