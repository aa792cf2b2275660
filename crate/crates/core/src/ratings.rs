//! The sparse observed rating matrix.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::{Error, Result};

/// One observed rating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    /// 0-based user index.
    pub user: u32,
    /// 0-based item index.
    pub item: u32,
    /// Rating value.
    pub value: f64,
}

impl Rating {
    /// Convenience constructor.
    pub fn new(user: u32, item: u32, value: f64) -> Self {
        Rating { user, item, value }
    }
}

/// Observed ratings of an `m × n` matrix, at most one per (user, item) pair.
///
/// Entries keep their insertion order; every sampler in the crate indexes into
/// that order, so it is part of what makes a run reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRatings {
    num_users: usize,
    num_items: usize,
    entries: Vec<Rating>,
}

impl SparseRatings {
    /// Validates ids, finiteness and uniqueness of pairs.
    pub fn new(num_users: usize, num_items: usize, entries: Vec<Rating>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &entries {
            if r.user as usize >= num_users || r.item as usize >= num_items {
                return Err(Error::Argument(alloc::format!(
                    "rating ({}, {}) outside a {num_users}x{num_items} matrix",
                    r.user,
                    r.item
                )));
            }
            if !r.value.is_finite() {
                return Err(Error::Argument(alloc::format!(
                    "rating ({}, {}) is not finite",
                    r.user,
                    r.item
                )));
            }
            if !seen.insert((r.user, r.item)) {
                return Err(Error::Argument(alloc::format!(
                    "duplicate rating for pair ({}, {})",
                    r.user,
                    r.item
                )));
            }
        }
        Ok(SparseRatings {
            num_users,
            num_items,
            entries,
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

    /// Observed triples in insertion order.
    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// Number of observed entries, `|Ω|`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when nothing is observed.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rating of `(user, item)`, if observed. Linear scan.
    pub fn get(&self, user: u32, item: u32) -> Option<f64> {
        self.entries
            .iter()
            .find(|r| r.user == user && r.item == item)
            .map(|r| r.value)
    }

    /// Appends a rating for a previously unrated pair.
    pub fn push(&mut self, rating: Rating) -> Result<()> {
        if self.get(rating.user, rating.item).is_some() {
            return Err(Error::Config(alloc::format!(
                "pair ({}, {}) is already rated",
                rating.user,
                rating.item
            )));
        }
        let checked = SparseRatings::new(self.num_users, self.num_items, alloc::vec![rating])?;
        self.entries.extend(checked.entries);
        Ok(())
    }

    /// Per-user rows: `rows[i]` lists `(item, rating)` in insertion order.
    pub fn user_rows(&self) -> Vec<Vec<(u32, f64)>> {
        let mut rows = alloc::vec![Vec::new(); self.num_users];
        for r in &self.entries {
            rows[r.user as usize].push((r.item, r.value));
        }
        rows
    }

    /// Mean of the observed values.
    pub fn mean(&self) -> Result<f64> {
        if self.entries.is_empty() {
            return Err(Error::EmptyInput("ratings"));
        }
        Ok(self.entries.iter().map(|r| r.value).sum::<f64>() / self.entries.len() as f64)
    }

    /// Same pairs with every value shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> SparseRatings {
        SparseRatings {
            num_users: self.num_users,
            num_items: self.num_items,
            entries: self
                .entries
                .iter()
                .map(|r| Rating::new(r.user, r.item, r.value + delta))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(SparseRatings::new(2, 2, vec![Rating::new(2, 0, 1.0)]).is_err());
        assert!(SparseRatings::new(2, 2, vec![Rating::new(0, 2, 1.0)]).is_err());
        assert!(SparseRatings::new(2, 2, vec![Rating::new(0, 1, 1.0), Rating::new(0, 1, 2.0)]).is_err());
        assert!(SparseRatings::new(2, 2, vec![Rating::new(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn push_rejects_already_rated_pair() {
        let mut x = SparseRatings::new(2, 2, vec![Rating::new(0, 1, 4.0)]).unwrap();
        assert!(x.push(Rating::new(0, 1, 5.0)).is_err());
        x.push(Rating::new(1, 1, 5.0)).unwrap();
        assert_eq!(x.get(1, 1), Some(5.0));
        assert_eq!(x.len(), 2);
    }

    #[test]
    fn rows_group_by_user() {
        let x = SparseRatings::new(
            3,
            2,
            vec![Rating::new(2, 0, 1.0), Rating::new(0, 1, 2.0), Rating::new(2, 1, 3.0)],
        )
        .unwrap();
        let rows = x.user_rows();
        assert_eq!(rows[0], vec![(1, 2.0)]);
        assert!(rows[1].is_empty());
        assert_eq!(rows[2], vec![(0, 1.0), (1, 3.0)]);
    }
}
