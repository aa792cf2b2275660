//! Synthetic low-rank benchmark data and rating centering.

use alloc::vec::Vec;

use rand::Rng;

use crate::ratings::{Rating, SparseRatings};
use crate::rng::{self, Stream};
use crate::{Error, Result};

const MAX_ATTEMPTS: u64 = 10;

/// Dense ground-truth rating matrix `Θ`, stored row-major (one row per user).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTruth {
    num_users: usize,
    num_items: usize,
    values: Vec<f64>,
}

impl DenseTruth {
    /// Wraps `m·n` row-major values.
    pub fn from_row_major(num_users: usize, num_items: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_users * num_items {
            return Err(Error::Dimension {
                what: "dense truth length",
                expected: num_users * num_items,
                found: values.len(),
            });
        }
        Ok(DenseTruth {
            num_users,
            num_items,
            values,
        })
    }

    /// Number of users `m`.
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// Number of items `n`.
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// `Θ[user, item]`.
    #[inline]
    pub fn get(&self, user: usize, item: usize) -> f64 {
        self.values[user * self.num_items + item]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Every entry shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> DenseTruth {
        DenseTruth {
            num_users: self.num_users,
            num_items: self.num_items,
            values: self.values.iter().map(|v| v + delta).collect(),
        }
    }
}

/// Generates a rank-≤`rank` truth with entries in `[1, 5]` and its rounded,
/// partially deleted observation.
///
/// `Θ = 1 + 4·(P − min P)/(max P − min P)` with `P = AᵀB` and `A`, `B` having
/// `rank − 1` rows of i.i.d. uniform `[−1, 1]` entries; the affine shift uses up
/// the last unit of rank. `X` rounds `Θ` half away from zero and then drops
/// exactly `⌊missing_frac·m·n⌋` entries chosen uniformly without replacement.
/// Observed entries are listed in row-major order.
pub fn gen_synthetic(
    m: usize,
    n: usize,
    rank: usize,
    missing_frac: f64,
    seed: u64,
) -> Result<(DenseTruth, SparseRatings)> {
    if rank < 2 {
        return Err(Error::Argument("synthetic rank must be at least 2".into()));
    }
    if !(0.0..1.0).contains(&missing_frac) {
        return Err(Error::Argument("missing fraction must be in [0, 1)".into()));
    }
    if m == 0 || n == 0 {
        return Err(Error::Argument("matrix dimensions must be positive".into()));
    }
    let mut rng = rng::stream(seed, Stream::Synthetic);
    let inner = rank - 1;
    let mut attempt = 0;
    let p = loop {
        if attempt == MAX_ATTEMPTS {
            return Err(Error::Degenerate);
        }
        attempt += 1;
        let a: Vec<f64> = (0..inner * m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let b: Vec<f64> = (0..inner * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        // column-major factors: a[i*inner..], b[j*inner..]
        let mut p = Vec::with_capacity(m * n);
        for i in 0..m {
            let ai = &a[i * inner..(i + 1) * inner];
            for j in 0..n {
                let bj = &b[j * inner..(j + 1) * inner];
                p.push(ai.iter().zip(bj).map(|(x, y)| x * y).sum::<f64>());
            }
        }
        let (lo, hi) = min_max(&p);
        if hi > lo {
            break p;
        }
        // Degenerate draws continue on the same stream, i.e. fresh numbers.
    };
    let (lo, hi) = min_max(&p);
    let theta: Vec<f64> = p
        .iter()
        .map(|&x| (1.0 + 4.0 * (x - lo) / (hi - lo)).clamp(1.0, 5.0))
        .collect();

    let total = m * n;
    let deleted = libm::floor(missing_frac * total as f64) as usize;
    let mut keep = alloc::vec![true; total];
    for idx in rand::seq::index::sample(&mut rng, total, deleted) {
        keep[idx] = false;
    }
    let entries = (0..total)
        .filter(|&idx| keep[idx])
        .map(|idx| {
            Rating::new(
                (idx / n) as u32,
                (idx % n) as u32,
                libm::round(theta[idx]),
            )
        })
        .collect();
    Ok((
        DenseTruth::from_row_major(m, n, theta)?,
        SparseRatings::new(m, n, entries)?,
    ))
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Subtracts the observed mean from every rating, returning the centered
/// ratings and the mean that was removed.
pub fn mean_center(ratings: &SparseRatings) -> Result<(SparseRatings, f64)> {
    let mean = ratings.mean()?;
    Ok((ratings.shifted(-mean), mean))
}
