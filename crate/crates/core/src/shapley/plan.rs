use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{full_mask, Phase, MAX_TOOLS};

/// Which coalitions an analysis evaluates: the full set, every
/// leave-one-out set, and `m` further distinct subsets drawn uniformly from
/// what remains (the empty set included).
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionPlan {
    pub n: usize,
    pub rho: f64,
    pub seed: u64,
    pub baseline: u32,
    pub leave_one_out: Vec<u32>,
    /// Ascending.
    pub sampled: Vec<u32>,
}

impl CoalitionPlan {
    /// Number of coalitions evaluated, baseline included.
    pub fn len(&self) -> usize {
        1 + self.leave_one_out.len() + self.sampled.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Baseline first, then leave-one-out in tool order, then samples.
    pub fn entries(&self) -> impl Iterator<Item = (u32, Phase)> + '_ {
        std::iter::once((self.baseline, Phase::Baseline))
            .chain(self.leave_one_out.iter().map(|&m| (m, Phase::LeaveOneOut)))
            .chain(self.sampled.iter().map(|&m| (m, Phase::Sampled)))
    }

    /// True when every subset of the catalog is in the plan.
    pub fn is_exhaustive(&self) -> bool {
        self.len() as u64 == 1u64 << self.n
    }
}

/// `2^n - n - 1`: subsets other than the full set and the leave-one-out sets.
pub fn pool_size(n: usize) -> u64 {
    (1u64 << n) - n as u64 - 1
}

/// `floor(rho * pool_size(n))`, capped at the pool size.
pub fn sample_count(n: usize, rho: f64) -> u64 {
    let pool = pool_size(n);
    // Absorb representation error so that e.g. 0.29 * 100 floors to 29.
    let m = (rho * pool as f64 * (1.0 + 1e-12)).floor() as u64;
    m.min(pool)
}

pub fn check_rho(rho: f64) -> Result<()> {
    if rho.is_nan() || rho <= 0.0 || rho > 1.0 {
        return Err(Error::InvalidRho(rho));
    }
    Ok(())
}

pub fn build_plan(n: usize, rho: f64, seed: u64) -> Result<CoalitionPlan> {
    check_rho(rho)?;
    if n == 0 {
        return Err(Error::EmptyCatalog);
    }
    if n > MAX_TOOLS {
        return Err(Error::CatalogTooLarge(n));
    }
    let full = full_mask(n);
    let leave_one_out: Vec<u32> = (0..n).map(|i| full & !(1 << i)).collect();

    let mut excluded = leave_one_out.clone();
    excluded.push(full);
    excluded.sort_unstable();

    let pool = pool_size(n) as usize;
    let m = sample_count(n, rho) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled: Vec<u32> = if m == pool {
        (0..pool).map(|j| pool_index_to_mask(j as u32, &excluded)).collect()
    } else {
        rand::seq::index::sample(&mut rng, pool, m)
            .into_iter()
            .map(|j| pool_index_to_mask(j as u32, &excluded))
            .collect()
    };
    sampled.sort_unstable();

    Ok(CoalitionPlan {
        n,
        rho,
        seed,
        baseline: full,
        leave_one_out,
        sampled,
    })
}

/// Maps an index into the pool onto the mask it denotes, skipping the
/// (ascending) excluded masks.
fn pool_index_to_mask(j: u32, excluded: &[u32]) -> u32 {
    let mut mask = j;
    for &e in excluded {
        if mask >= e {
            mask += 1;
        } else {
            break;
        }
    }
    mask
}
