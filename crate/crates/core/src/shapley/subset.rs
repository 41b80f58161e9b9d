use serde::{Deserialize, Serialize};

use super::ValueTable;

/// How the sampled-subset estimator turns a partial value table into
/// scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetAggregation {
    /// Marginal contributions `v(S ∪ {i}) - v(S)` over every evaluated
    /// pair, averaged within each coalition size and then across the sizes
    /// present. Equals the exact value on a complete table.
    #[default]
    StratifiedMarginal,
    /// Mean value of evaluated coalitions containing `i` minus the mean of
    /// those without it.
    MeanDifference,
}

impl SubsetAggregation {
    pub fn as_str(&self) -> &'static str {
        match self {
            SubsetAggregation::StratifiedMarginal => "stratified_marginal",
            SubsetAggregation::MeanDifference => "mean_difference",
        }
    }
}

/// Scores from the coalitions a sampled plan evaluated. The plan
/// must contain the full set and every leave-one-out set so each tool has
/// at least one marginal pair and coalitions on both sides.
pub fn subset_mc_shapley(table: &ValueTable, aggregation: SubsetAggregation) -> Vec<f64> {
    match aggregation {
        SubsetAggregation::StratifiedMarginal => stratified_marginal(table),
        SubsetAggregation::MeanDifference => mean_difference(table),
    }
}

fn stratified_marginal(table: &ValueTable) -> Vec<f64> {
    let n = table.n();
    (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            let mut sums = vec![0.0; n];
            let mut counts = vec![0usize; n];
            for (mask, v) in table.iter() {
                if mask & bit != 0 {
                    continue;
                }
                if let Some(with) = table.get(mask | bit) {
                    let s = mask.count_ones() as usize;
                    sums[s] += with - v;
                    counts[s] += 1;
                }
            }
            let strata: Vec<f64> = sums
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(s, &c)| s / c as f64)
                .collect();
            if strata.is_empty() {
                0.0
            } else {
                strata.iter().sum::<f64>() / strata.len() as f64
            }
        })
        .collect()
}

fn mean_difference(table: &ValueTable) -> Vec<f64> {
    let n = table.n();
    (0..n)
        .map(|i| {
            let bit = 1u32 << i;
            let (mut with, mut nwith, mut without, mut nwithout) = (0.0, 0usize, 0.0, 0usize);
            for (mask, v) in table.iter() {
                if mask & bit != 0 {
                    with += v;
                    nwith += 1;
                } else {
                    without += v;
                    nwithout += 1;
                }
            }
            if nwith == 0 || nwithout == 0 {
                return 0.0;
            }
            with / nwith as f64 - without / nwithout as f64
        })
        .collect()
}
