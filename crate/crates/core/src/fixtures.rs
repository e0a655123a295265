//! The three-token fixture model used throughout the tests: vocabulary
//! `{A, B, EOS}`, prefix-independent prior `[0.5, 0.3, 0.2]`, `max_len = 3`.

use std::sync::Arc;

use crate::mdp::TokenId;
use crate::models::{TabularModel, ValueHead};
use crate::scoring::{Objective, ToyOccupancy};

pub const A: TokenId = TokenId(0);
pub const B: TokenId = TokenId(1);
pub const EOS: TokenId = TokenId(2);

pub fn m0() -> TabularModel {
    TabularModel::fixed(vec![0.5, 0.3, 0.2], 3).expect("valid fixture prior")
}

/// Occupancy of `A` over a horizon of 3.
pub fn occupancy_objective() -> Objective {
    Objective::new(Arc::new(ToyOccupancy::new(A, 3).expect("positive horizon")), None).expect("unprivileged metric")
}

/// M0 whose value head is the greedy rollout under [`occupancy_objective`].
pub fn m0_occupancy() -> TabularModel {
    m0().with_value_head(ValueHead::Rollout(occupancy_objective()))
}
