use super::ValueTable;
use crate::error::{Error, Result};

/// `w[s] = s!(n-s-1)!/n!`, the weight of a size-`s` coalition in the
/// Shapley sum, by multiplicative recurrence.
pub fn shapley_weights(n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n);
    let mut cur = 1.0 / n as f64;
    for s in 0..n {
        w.push(cur);
        if s + 1 < n {
            cur *= (s + 1) as f64 / (n - s - 1) as f64;
        }
    }
    w
}

/// Shapley values by full enumeration of a complete value table.
pub fn exact_shapley(table: &ValueTable) -> Result<Vec<f64>> {
    let n = table.n();
    if !table.is_complete() {
        let total = 1usize << n;
        return Err(Error::IncompleteTable {
            missing: total - table.len(),
            total,
        });
    }
    let values: Vec<f64> = table.iter().map(|(_, v)| v).collect();
    let weights = shapley_weights(n);
    let mut phi = vec![0.0; n];
    for (mask, &v) in values.iter().enumerate() {
        let w = weights.get(mask.count_ones() as usize).copied().unwrap_or(0.0);
        for (i, p) in phi.iter_mut().enumerate() {
            let bit = 1usize << i;
            if mask & bit == 0 {
                *p += w * (values[mask | bit] - v);
            }
        }
    }
    Ok(phi)
}
