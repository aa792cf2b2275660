//! Latent profiles and the numeric operations on them.
//!
//! A rating is predicted as the inner product of a user profile and an item
//! profile. Training minimizes, per observed rating `x`,
//! `½(uᵀv − x)² + ½λ(‖u‖² + ‖v‖²)`, one profile at a time.

use alloc::vec::Vec;
use core::ops::{Deref, Index};

use rand::Rng;

use crate::ratings::SparseRatings;
use crate::synthetic::DenseTruth;
use crate::{Error, Result};

/// A rank-`r` latent profile of one user or one item.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorVector(Vec<f64>);

impl FactorVector {
    /// Wraps raw coordinates.
    pub fn new(values: Vec<f64>) -> Self {
        FactorVector(values)
    }

    /// All-zero profile of the given rank.
    pub fn zeros(rank: usize) -> Self {
        FactorVector(alloc::vec![0.0; rank])
    }

    /// Profile with entries drawn i.i.d. uniform in `[0, 1/√rank]`.
    pub fn random<R: Rng + ?Sized>(rank: usize, rng: &mut R) -> Self {
        let hi = 1.0 / libm::sqrt(rank as f64);
        FactorVector((0..rank).map(|_| rng.gen::<f64>() * hi).collect())
    }

    /// Number of latent coordinates.
    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Coordinates as a slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Consumes the profile, returning its coordinates.
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Returns `c·self`.
    pub fn scaled(&self, c: f64) -> Self {
        FactorVector(self.0.iter().map(|x| c * x).collect())
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    /// True when every coordinate is finite.
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for FactorVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FactorVector {
    fn from(values: Vec<f64>) -> Self {
        FactorVector(values)
    }
}

/// A stack of profiles sharing one rank: `U` (one column per user) or `V`
/// (one column per item).
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMatrix {
    rank: usize,
    columns: Vec<FactorVector>,
}

impl FactorMatrix {
    /// Builds a matrix from columns, checking that all have length `rank`.
    pub fn from_columns(rank: usize, columns: Vec<FactorVector>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Argument("rank must be at least 1".into()));
        }
        if let Some(bad) = columns.iter().find(|c| c.rank() != rank) {
            return Err(Error::Dimension {
                what: "profile length",
                expected: rank,
                found: bad.rank(),
            });
        }
        Ok(FactorMatrix { rank, columns })
    }

    /// `count` zero profiles.
    pub fn zeros(rank: usize, count: usize) -> Self {
        FactorMatrix {
            rank,
            columns: (0..count).map(|_| FactorVector::zeros(rank)).collect(),
        }
    }

    /// `count` profiles drawn with [`FactorVector::random`], in column order.
    pub fn random<R: Rng + ?Sized>(rank: usize, count: usize, rng: &mut R) -> Self {
        FactorMatrix {
            rank,
            columns: (0..count).map(|_| FactorVector::random(rank, rng)).collect(),
        }
    }

    /// Shared profile length.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of profiles.
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    /// True when the matrix holds no profiles.
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Profiles in column order.
    pub fn columns(&self) -> &[FactorVector] {
        &self.columns
    }

    /// Mutable access to one profile. Callers must keep its length at `rank`.
    pub(crate) fn column_mut(&mut self, idx: usize) -> &mut FactorVector {
        &mut self.columns[idx]
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.columns.iter().map(FactorVector::norm_sq).sum()
    }
}

impl Index<usize> for FactorMatrix {
    type Output = FactorVector;

    fn index(&self, idx: usize) -> &FactorVector {
        &self.columns[idx]
    }
}

/// Model hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams {
    /// Latent dimension `r`.
    pub rank: usize,
    /// Regularization weight `λ`.
    pub lambda: f64,
    /// Learning rate `η`.
    pub eta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            rank: 10,
            lambda: 0.05,
            eta: 0.02,
        }
    }
}

impl Hyperparams {
    /// Checks `rank ≥ 1`, `λ ≥ 0` and `η > 0`.
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("eta must be finite and > 0".into()));
        }
        Ok(())
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Predicted rating `uᵀv`.
pub fn predict(u: &FactorVector, v: &FactorVector) -> Result<f64> {
    check_len("profile length", u.rank(), v.rank())?;
    Ok(dot(u, v))
}

/// One single-sided step on `target` against a fixed `partner`:
/// `target ← target − η·partner·(targetᵀpartner − x) − η·λ·target`.
///
/// `target` is left untouched when the step would produce a non-finite value.
/// Both update rules route through here, so they agree bit for bit.
pub fn step_in_place(
    target: &mut FactorVector,
    partner: &FactorVector,
    x: f64,
    eta: f64,
    lambda: f64,
) -> Result<()> {
    check_len("profile length", target.rank(), partner.rank())?;
    let residual = dot(target, partner) - x;
    let next = |t: f64, p: f64| t - eta * p * residual - eta * lambda * t;
    let finite = target
        .iter()
        .zip(partner.iter())
        .all(|(&t, &p)| next(t, p).is_finite());
    if !finite {
        return Err(Error::NumericOverflow);
    }
    for (t, &p) in target.0.iter_mut().zip(partner.iter()) {
        *t = next(*t, p);
    }
    Ok(())
}

/// User-side update: returns `u − η·v·(uᵀv − x) − η·λ·u`.
pub fn user_update(
    u: &FactorVector,
    v: &FactorVector,
    x: f64,
    eta: f64,
    lambda: f64,
) -> Result<FactorVector> {
    let mut out = u.clone();
    step_in_place(&mut out, v, x, eta, lambda)?;
    Ok(out)
}

/// Item-side update: returns `v − η·u·(uᵀv − x) − η·λ·v`.
pub fn item_update(
    v: &FactorVector,
    u: &FactorVector,
    x: f64,
    eta: f64,
    lambda: f64,
) -> Result<FactorVector> {
    let mut out = v.clone();
    step_in_place(&mut out, u, x, eta, lambda)?;
    Ok(out)
}

fn check_shapes(u: &FactorMatrix, v: &FactorMatrix, m: usize, n: usize) -> Result<()> {
    check_len("user profile count", m, u.len())?;
    check_len("item profile count", n, v.len())?;
    check_len("rank of V", u.rank(), v.rank())
}

/// Regularized squared loss over the observed entries:
/// `Σ_(i,j)∈Ω (uᵢᵀvⱼ − xᵢⱼ)² + λ(‖U‖²_F + ‖V‖²_F)`.
pub fn objective(u: &FactorMatrix, v: &FactorMatrix, x: &SparseRatings, lambda: f64) -> Result<f64> {
    check_shapes(u, v, x.num_users(), x.num_items())?;
    let fit: f64 = x
        .entries()
        .iter()
        .map(|r| {
            let e = dot(&u[r.user as usize], &v[r.item as usize]) - r.value;
            e * e
        })
        .sum();
    Ok(fit + lambda * (u.frobenius_sq() + v.frobenius_sq()))
}

/// Root-mean-square error of `UᵀV` against the full dense truth.
pub fn rms_full(u: &FactorMatrix, v: &FactorMatrix, theta: &DenseTruth) -> Result<f64> {
    check_shapes(u, v, theta.num_users(), theta.num_items())?;
    let (m, n) = (theta.num_users(), theta.num_items());
    if m * n == 0 {
        return Err(Error::EmptyInput("ground truth"));
    }
    let mut sum = 0.0;
    for i in 0..m {
        let ui = &u[i];
        for j in 0..n {
            let e = dot(ui, &v[j]) - theta.get(i, j);
            sum += e * e;
        }
    }
    Ok(libm::sqrt(sum / (m * n) as f64))
}

/// Root-mean-square error over held-out triples. With `clip = Some((lo, hi))`
/// predictions are clamped into `[lo, hi]` first.
pub fn rmse_holdout(
    u: &FactorMatrix,
    v: &FactorMatrix,
    test: &SparseRatings,
    clip: Option<(f64, f64)>,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    check_shapes(u, v, test.num_users(), test.num_items())?;
    if let Some((lo, hi)) = clip {
        if !(lo <= hi) {
            return Err(Error::Argument("clip range must satisfy lo <= hi".into()));
        }
    }
    let sum: f64 = test
        .entries()
        .iter()
        .map(|r| {
            let mut p = dot(&u[r.user as usize], &v[r.item as usize]);
            if let Some((lo, hi)) = clip {
                p = p.clamp(lo, hi);
            }
            let e = p - r.value;
            e * e
        })
        .sum();
    Ok(libm::sqrt(sum / test.len() as f64))
}

/// The `k` highest-scoring items for profile `u`, skipping `exclude`.
///
/// Sorted by score descending, ties by ascending item id.
pub fn top_k(u: &FactorVector, v: &FactorMatrix, k: usize, exclude: &[u32]) -> Result<Vec<(u32, f64)>> {
    check_len("profile length", v.rank(), u.rank())?;
    let excluded = |j: usize| exclude.iter().any(|&e| e as usize == j);
    let mut scored: Vec<(u32, f64)> = (0..v.len())
        .filter(|&j| !excluded(j))
        .map(|j| (j as u32, dot(u, &v[j])))
        .collect();
    if k == 0 || k > scored.len() {
        return Err(Error::Argument(alloc::format!(
            "k must be in 1..={}, got {k}",
            scored.len()
        )));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn fv(v: &[f64]) -> FactorVector {
        FactorVector::new(v.to_vec())
    }

    fn mat(cols: &[&[f64]]) -> FactorMatrix {
        let rank = cols[0].len();
        FactorMatrix::from_columns(rank, cols.iter().map(|c| fv(c)).collect()).unwrap()
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&fv(&[0.0, 0.0, 0.0]), &fv(&[4.0, -1.0, 7.0])).unwrap(), 0.0);
        assert_eq!(predict(&fv(&[1.0, 0.0, 2.0]), &fv(&[0.0, 3.0, 1.0])).unwrap(), 2.0);
        let u = fv(&[1.0, 1.0]);
        let v = fv(&[1.0, -1.0]);
        assert_eq!(predict(&u, &v).unwrap(), 0.0);
        assert_eq!(predict(&u.scaled(2.0), &v).unwrap(), 0.0);
    }

    #[test]
    fn predict_rejects_mismatched_lengths() {
        let err = predict(&fv(&[1.0]), &fv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn user_update_examples() {
        let out = user_update(&fv(&[0.0, 0.0]), &fv(&[1.0, 2.0]), 4.0, 0.1, 0.0).unwrap();
        assert!((out[0] - 0.4).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);

        // uᵀv = 1·1 + 2·1.5 = 4
        let u = fv(&[1.0, 2.0]);
        let out = user_update(&u, &fv(&[1.0, 1.5]), 4.0, 0.3, 0.0).unwrap();
        assert_eq!(out, u);

        let out = user_update(&fv(&[1.0, 1.0]), &fv(&[0.0, 0.0]), 3.0, 0.5, 0.2).unwrap();
        assert!((out[0] - 0.9).abs() < 1e-15 && (out[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn item_update_examples() {
        let out = item_update(&fv(&[0.0, 0.0]), &fv(&[1.0, 2.0]), 4.0, 0.1, 0.0).unwrap();
        assert!((out[0] - 0.4).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15);
        let v = fv(&[2.0, 0.5]);
        assert_eq!(item_update(&v, &fv(&[1.0, 4.0]), 4.0, 0.7, 0.0).unwrap(), v);
    }

    #[test]
    fn update_overflow_leaves_input_intact() {
        let u = fv(&[1e200, 1e200]);
        let v = fv(&[1e200, 1e200]);
        assert_eq!(user_update(&u, &v, 1.0, 1.0, 0.0), Err(Error::NumericOverflow));
        let mut t = u.clone();
        assert!(step_in_place(&mut t, &v, 1.0, 1.0, 0.0).is_err());
        assert_eq!(t, u);
    }

    #[test]
    fn objective_examples() {
        let x = SparseRatings::new(1, 1, vec![Rating::new(0, 0, 3.0)]).unwrap();
        let z = FactorMatrix::zeros(2, 1);
        assert_eq!(objective(&z, &z, &x, 1.0).unwrap(), 9.0);

        let u = mat(&[&[1.0, 2.0]]);
        let v = mat(&[&[1.0, 1.0], &[0.5, 0.0]]);
        let x = SparseRatings::new(1, 2, vec![Rating::new(0, 0, 3.0), Rating::new(0, 1, 0.5)]).unwrap();
        assert_eq!(objective(&u, &v, &x, 0.0).unwrap(), 0.0);

        let empty = SparseRatings::new(3, 2, vec![]).unwrap();
        let (zu, zv) = (FactorMatrix::zeros(4, 3), FactorMatrix::zeros(4, 2));
        assert_eq!(objective(&zu, &zv, &empty, 7.5).unwrap(), 0.0);

        assert!(matches!(
            objective(&FactorMatrix::zeros(4, 2), &zv, &empty, 0.0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn rms_full_examples() {
        let u = mat(&[&[1.0, 1.0], &[2.0, 0.0]]);
        let v = mat(&[&[1.0, 2.0], &[0.5, 0.5]]);
        // UᵀV = [[3, 1], [2, 1]]
        let exact = DenseTruth::from_row_major(2, 2, vec![3.0, 1.0, 2.0, 1.0]).unwrap();
        assert_eq!(rms_full(&u, &v, &exact).unwrap(), 0.0);
        let shifted = DenseTruth::from_row_major(2, 2, vec![2.75, 0.75, 1.75, 0.75]).unwrap();
        assert!((rms_full(&u, &v, &shifted).unwrap() - 0.25).abs() < 1e-15);

        let single = DenseTruth::from_row_major(1, 1, vec![3.0]).unwrap();
        let (pu, pv) = (mat(&[&[2.0]]), mat(&[&[2.0]]));
        assert_eq!(rms_full(&pu, &pv, &single).unwrap(), 1.0);
    }

    #[test]
    fn rmse_holdout_examples() {
        let (u, v) = (mat(&[&[1.0]]), mat(&[&[5.0]]));
        let test = SparseRatings::new(1, 1, vec![Rating::new(0, 0, 3.0)]).unwrap();
        assert_eq!(rmse_holdout(&u, &v, &test, None).unwrap(), 2.0);
        let exact = SparseRatings::new(1, 1, vec![Rating::new(0, 0, 5.0)]).unwrap();
        assert_eq!(rmse_holdout(&u, &v, &exact, None).unwrap(), 0.0);

        let (u, v) = (mat(&[&[1.0]]), mat(&[&[7.0]]));
        assert_eq!(rmse_holdout(&u, &v, &exact, Some((1.0, 5.0))).unwrap(), 0.0);

        let empty = SparseRatings::new(1, 1, vec![]).unwrap();
        assert_eq!(rmse_holdout(&u, &v, &empty, None), Err(Error::EmptyInput("test set")));
    }

    #[test]
    fn top_k_examples() {
        let v = mat(&[&[1.0], &[3.0], &[2.0]]);
        assert_eq!(top_k(&fv(&[1.0]), &v, 2, &[]).unwrap(), vec![(1, 3.0), (2, 2.0)]);
        assert_eq!(
            top_k(&fv(&[0.0]), &v, 3, &[]).unwrap(),
            vec![(0, 0.0), (1, 0.0), (2, 0.0)]
        );
        assert_eq!(top_k(&fv(&[1.0]), &v, 1, &[0, 1]).unwrap(), vec![(2, 2.0)]);
    }

    #[test]
    fn top_k_rejects_out_of_range_k() {
        let v = mat(&[&[1.0], &[3.0], &[2.0]]);
        assert!(matches!(top_k(&fv(&[1.0]), &v, 0, &[]), Err(Error::Argument(_))));
        assert!(matches!(top_k(&fv(&[1.0]), &v, 2, &[1, 2]), Err(Error::Argument(_))));
        assert!(top_k(&fv(&[1.0]), &v, 3, &[]).is_ok());
    }

    #[test]
    fn hyperparams_validate() {
        assert!(Hyperparams::default().validate().is_ok());
        let bad = Hyperparams { eta: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = Hyperparams { lambda: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = Hyperparams { rank: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    use crate::ratings::Rating;
}
