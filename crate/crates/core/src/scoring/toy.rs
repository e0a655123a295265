use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::mdp::{Score, TokenId};
use crate::scoring::{Metric, MetricKind};

/// Fraction of a fixed horizon filled with `target`.
pub fn toy_occupancy(candidate: &[TokenId], target: TokenId, horizon: usize) -> Score {
    if horizon == 0 {
        return Score::ZERO;
    }
    let count = candidate.iter().filter(|&&t| t == target).count();
    Score::new(count as f64 / horizon as f64)
}

/// Fraction of the distinct source tokens that appear in the candidate.
pub fn toy_coverage(candidate: &[TokenId], source: &[TokenId]) -> Score {
    let wanted: HashSet<TokenId> = source.iter().copied().collect();
    if wanted.is_empty() {
        return Score::ZERO;
    }
    let present: HashSet<TokenId> = candidate.iter().copied().collect();
    Score::new(wanted.intersection(&present).count() as f64 / wanted.len() as f64)
}

#[derive(Clone, Copy, Debug)]
pub struct ToyOccupancy {
    target: TokenId,
    horizon: usize,
}

impl ToyOccupancy {
    pub fn new(target: TokenId, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("occupancy horizon must be at least 1".into()));
        }
        Ok(ToyOccupancy { target, horizon })
    }
}

impl Metric for ToyOccupancy {
    fn name(&self) -> String {
        format!("occupancy({},{})", self.target, self.horizon)
    }

    fn kind(&self) -> MetricKind {
        MetricKind::Unprivileged
    }

    fn score(&self, candidate: &[TokenId], _anchor: &[TokenId]) -> Score {
        toy_occupancy(candidate, self.target, self.horizon)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ToyCoverage;

impl Metric for ToyCoverage {
    fn name(&self) -> String {
        "coverage".into()
    }

    fn kind(&self) -> MetricKind {
        MetricKind::Unprivileged
    }

    fn score(&self, candidate: &[TokenId], anchor: &[TokenId]) -> Score {
        toy_coverage(candidate, anchor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<TokenId> {
        v.iter().copied().map(TokenId).collect()
    }

    #[test]
    fn occupancy() {
        assert_eq!(toy_occupancy(&ids(&[0, 0, 0]), TokenId(0), 3).value(), 1.0);
        assert_eq!(toy_occupancy(&[], TokenId(0), 3).value(), 0.0);
        assert!((toy_occupancy(&ids(&[1, 0]), TokenId(0), 3).value() - 1.0 / 3.0).abs() < 1e-15);
        // over-long candidates clamp
        assert_eq!(toy_occupancy(&ids(&[0, 0, 0, 0]), TokenId(0), 3).value(), 1.0);
        assert!(ToyOccupancy::new(TokenId(0), 0).is_err());
    }

    #[test]
    fn coverage() {
        assert_eq!(toy_coverage(&ids(&[1, 0, 3]), &ids(&[0, 1])).value(), 1.0);
        assert_eq!(toy_coverage(&ids(&[2, 3]), &ids(&[0, 1])).value(), 0.0);
        assert_eq!(toy_coverage(&ids(&[0, 0, 0]), &ids(&[0, 1])).value(), 0.5);
        assert_eq!(toy_coverage(&ids(&[0]), &[]).value(), 0.0);
    }
}
