//! Coalition planning and the three Shapley estimators.
//!
//! * `exact` enumerates all `2^n` coalitions.
//! * `permutation` averages marginal contributions along random orderings.
//! * `subset` aggregates whatever a leave-one-out plus random-subset plan
//!   evaluated.

mod exact;
mod permutation;
mod plan;
mod subset;
mod table;

use serde::{Deserialize, Serialize};

pub use exact::{exact_shapley, shapley_weights};
pub use permutation::{
    enumerate_permutation_shapley, permutation_mc_shapley, sample_permutation_shapley,
};
pub use plan::{build_plan, check_rho, pool_size, sample_count, CoalitionPlan};
pub use subset::{subset_mc_shapley, SubsetAggregation};
pub use table::ValueTable;

use crate::error::{Error, Result};
use crate::model::EstimatorKind;

pub const DEFAULT_PERMUTATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorChoice {
    pub kind: EstimatorKind,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub aggregation: SubsetAggregation,
}

fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}

impl EstimatorChoice {
    pub fn exact() -> Self {
        Self::of(EstimatorKind::Exact)
    }

    pub fn subset() -> Self {
        Self::of(EstimatorKind::SubsetMc)
    }

    pub fn permutation(permutations: usize) -> Self {
        EstimatorChoice {
            permutations,
            ..Self::of(EstimatorKind::PermutationMc)
        }
    }

    pub fn of(kind: EstimatorKind) -> Self {
        EstimatorChoice {
            kind,
            permutations: DEFAULT_PERMUTATIONS,
            aggregation: SubsetAggregation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == EstimatorKind::PermutationMc && self.permutations == 0 {
            return Err(Error::InvalidPermutations);
        }
        Ok(())
    }
}

impl Default for EstimatorChoice {
    fn default() -> Self {
        Self::subset()
    }
}

/// Positive parts of `phi` rescaled to sum to one; all zeros when no score
/// is positive.
pub fn normalize_shares(phi: &[f64]) -> Vec<f64> {
    let total: f64 = phi.iter().map(|p| p.max(0.0)).sum();
    if total > 0.0 {
        phi.iter().map(|p| p.max(0.0) / total).collect()
    } else {
        vec![0.0; phi.len()]
    }
}
