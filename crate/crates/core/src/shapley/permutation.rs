use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Memoizes the oracle so every coalition is valued once per estimate.
struct Memo<F> {
    oracle: F,
    seen: HashMap<u32, f64>,
}

impl<F: FnMut(u32) -> Result<f64>> Memo<F> {
    fn value(&mut self, mask: u32) -> Result<f64> {
        if let Some(&v) = self.seen.get(&mask) {
            return Ok(v);
        }
        let v = (self.oracle)(mask)?;
        self.seen.insert(mask, v);
        Ok(v)
    }

    fn walk(&mut self, order: &[usize], phi: &mut [f64]) -> Result<()> {
        let mut prefix = 0u32;
        let mut prev = self.value(prefix)?;
        for &i in order {
            prefix |= 1 << i;
            let cur = self.value(prefix)?;
            phi[i] += cur - prev;
            prev = cur;
        }
        Ok(())
    }
}

fn factorial_at_most(n: usize, limit: usize) -> bool {
    let mut f: usize = 1;
    for k in 2..=n {
        match f.checked_mul(k) {
            Some(x) if x <= limit => f = x,
            _ => return false,
        }
    }
    true
}

/// Permutation-sampling Shapley estimate. When `n!` does not exceed
/// `permutations`, every ordering is walked once instead and the result is
/// exact up to rounding.
pub fn permutation_mc_shapley<F>(oracle: F, n: usize, permutations: usize, seed: u64) -> Result<Vec<f64>>
where
    F: FnMut(u32) -> Result<f64>,
{
    if permutations == 0 {
        return Err(Error::InvalidPermutations);
    }
    if factorial_at_most(n, permutations) {
        enumerate_permutation_shapley(oracle, n)
    } else {
        sample_permutation_shapley(oracle, n, permutations, seed)
    }
}

/// Always samples `permutations` uniform orderings.
pub fn sample_permutation_shapley<F>(
    oracle: F,
    n: usize,
    permutations: usize,
    seed: u64,
) -> Result<Vec<f64>>
where
    F: FnMut(u32) -> Result<f64>,
{
    if permutations == 0 {
        return Err(Error::InvalidPermutations);
    }
    let mut memo = Memo {
        oracle,
        seen: HashMap::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        memo.walk(&order, &mut phi)?;
    }
    for p in &mut phi {
        *p /= permutations as f64;
    }
    Ok(phi)
}

/// Walks all `n!` orderings in lexicographic order.
pub fn enumerate_permutation_shapley<F>(oracle: F, n: usize) -> Result<Vec<f64>>
where
    F: FnMut(u32) -> Result<f64>,
{
    let mut memo = Memo {
        oracle,
        seen: HashMap::new(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    let mut count = 0usize;
    loop {
        memo.walk(&order, &mut phi)?;
        count += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }
    for p in &mut phi {
        *p /= count as f64;
    }
    Ok(phi)
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}
