//! MovieLens-100k `u.data` files and the official five-fold split.
//!
//! A `u.data` line holds `user_id\titem_id\trating\ttimestamp` with 1-based
//! ids. The timestamp is read but dropped.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use gossipmf_core::{Rating, SparseRatings};

use crate::error::{Error, Result};

/// Users in MovieLens-100k.
pub const ML100K_USERS: usize = 943;
/// Movies in MovieLens-100k.
pub const ML100K_ITEMS: usize = 1682;

/// One train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldSpec {
    /// 1 to 5, matching the `uK.base` / `uK.test` file names.
    pub fold_id: usize,
    pub train: SparseRatings,
    pub test: SparseRatings,
}

/// Parses `u.data`-formatted text for an `num_users × num_items` matrix.
/// `path` is only used in error messages.
pub fn parse_udata<R: BufRead>(
    reader: R,
    path: &Path,
    num_users: usize,
    num_items: usize,
) -> Result<SparseRatings> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let invalid = |msg: String| Error::Validation {
            path: path.to_path_buf(),
            line: lineno,
            msg,
        };

        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let id = |s: &str, what: &str, limit: usize| -> Result<u32> {
            let v: u64 = s
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("{what} id {s:?} is not an integer")))?;
            if v == 0 || v > limit as u64 {
                return Err(invalid(format!("{what} id {v} outside 1..={limit}")));
            }
            Ok((v - 1) as u32)
        };
        let user = id(fields[0], "user", num_users)?;
        let item = id(fields[1], "item", num_items)?;
        let value: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("rating {:?} is not a number", fields[2])))?;
        if !(1.0..=5.0).contains(&value) || value.fract() != 0.0 {
            return Err(invalid(format!("rating {value} is not one of 1, 2, 3, 4, 5")));
        }
        fields[3]
            .trim()
            .parse::<u64>()
            .map_err(|_| parse_err(format!("timestamp {:?} is not an integer", fields[3])))?;
        if !seen.insert((user, item)) {
            return Err(invalid(format!(
                "user {} rated item {} twice",
                user + 1,
                item + 1
            )));
        }
        entries.push(Rating::new(user, item, value));
    }
    Ok(SparseRatings::new(num_users, num_items, entries)?)
}

/// Reads a `u.data` file with explicit dimensions.
pub fn load_udata(path: impl AsRef<Path>, num_users: usize, num_items: usize) -> Result<SparseRatings> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_udata(BufReader::new(file), path, num_users, num_items)
}

/// Reads a MovieLens-100k ratings file into a 943 × 1682 matrix with 0-based
/// ids.
pub fn load_movielens(path: impl AsRef<Path>) -> Result<SparseRatings> {
    load_udata(path, ML100K_USERS, ML100K_ITEMS)
}

/// Reads `u1.base`/`u1.test` … `u5.base`/`u5.test` from `dir`, in order.
/// Each fold's train and test sets must be disjoint.
pub fn load_official_folds(dir: impl AsRef<Path>) -> Result<Vec<FoldSpec>> {
    load_folds(dir, ML100K_USERS, ML100K_ITEMS)
}

/// [`load_official_folds`] with explicit dimensions.
pub fn load_folds(dir: impl AsRef<Path>, num_users: usize, num_items: usize) -> Result<Vec<FoldSpec>> {
    let dir = dir.as_ref();
    (1..=5)
        .map(|fold_id| {
            let base = fold_file(dir, fold_id, "base");
            let test = fold_file(dir, fold_id, "test");
            let fold = FoldSpec {
                fold_id,
                train: load_udata(&base, num_users, num_items)?,
                test: load_udata(&test, num_users, num_items)?,
            };
            let train: HashSet<(u32, u32)> = pairs(&fold.train).collect();
            if let Some((u, i)) = pairs(&fold.test).find(|p| train.contains(p)) {
                return Err(Error::Dataset(format!(
                    "{}: pair (user {}, item {}) is also in {}",
                    test.display(),
                    u + 1,
                    i + 1,
                    base.display()
                )));
            }
            Ok(fold)
        })
        .collect()
}

fn fold_file(dir: &Path, fold_id: usize, ext: &str) -> PathBuf {
    dir.join(format!("u{fold_id}.{ext}"))
}

fn pairs(r: &SparseRatings) -> impl Iterator<Item = (u32, u32)> + '_ {
    r.entries().iter().map(|e| (e.user, e.item))
}

/// Checks that the folds partition one dataset: test sets are pairwise
/// disjoint and every fold's train ∪ test is the same set, which the test sets
/// cover. Returns the size of that set.
pub fn check_partition(folds: &[FoldSpec]) -> Result<usize> {
    let Some(first) = folds.first() else {
        return Ok(0);
    };
    let full: HashSet<(u32, u32)> = pairs(&first.train).chain(pairs(&first.test)).collect();
    let mut covered = HashSet::with_capacity(full.len());
    for fold in folds {
        let union: HashSet<(u32, u32)> = pairs(&fold.train).chain(pairs(&fold.test)).collect();
        if union != full {
            return Err(Error::Dataset(format!(
                "fold {} covers a different set of ratings than fold {}",
                fold.fold_id, first.fold_id
            )));
        }
        for p in pairs(&fold.test) {
            if !covered.insert(p) {
                return Err(Error::Dataset(format!(
                    "pair (user {}, item {}) is in more than one test set (again in fold {})",
                    p.0 + 1,
                    p.1 + 1,
                    fold.fold_id
                )));
            }
        }
    }
    if covered.len() != full.len() {
        return Err(Error::Dataset(format!(
            "test sets cover {} of {} ratings",
            covered.len(),
            full.len()
        )));
    }
    Ok(full.len())
}

/// Recreates the official split from a `u.data` file in its distributed line
/// order: test set `k` is the `k`-th block of consecutive lines (20000 each
/// for the full file), base set `k` is everything else, and both are sorted
/// by user then item. Lines are copied verbatim.
pub fn write_official_folds(udata: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<()> {
    let (udata, out_dir) = (udata.as_ref(), out_dir.as_ref());
    let text = std::fs::read_to_string(udata).map_err(|e| Error::io(udata, e))?;
    // validates every line
    parse_udata(text.as_bytes(), udata, ML100K_USERS, ML100K_ITEMS)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let key = |l: &&str| -> (u32, u32) {
        let mut f = l.split('\t').map(|x| x.trim().parse::<u32>().unwrap_or(0));
        (f.next().unwrap_or(0), f.next().unwrap_or(0))
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let bound = |k: usize| k * lines.len() / 5;
    for fold_id in 1..=5 {
        let (lo, hi) = (bound(fold_id - 1), bound(fold_id));
        let mut test: Vec<&str> = lines[lo..hi].to_vec();
        let mut base: Vec<&str> = lines[..lo].iter().chain(&lines[hi..]).copied().collect();
        for (set, ext) in [(&mut test, "test"), (&mut base, "base")] {
            set.sort_by_key(key);
            let path = fold_file(out_dir, fold_id, ext);
            let mut body = set.join("\n");
            body.push('\n');
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Writes ratings in `u.data` format: 1-based ids, integer-valued ratings
/// without a decimal point, timestamp 0.
pub fn write_udata<W: Write>(ratings: &SparseRatings, mut out: W) -> std::io::Result<()> {
    for r in ratings.entries() {
        writeln!(out, "{}\t{}\t{}\t0", r.user + 1, r.item + 1, r.value)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SparseRatings> {
        parse_udata(text.as_bytes(), Path::new("u.data"), ML100K_USERS, ML100K_ITEMS)
    }

    #[test]
    fn remaps_ids_and_drops_timestamp() {
        let r = parse("196\t242\t3\t881250949\n").unwrap();
        assert_eq!(r.entries(), &[Rating::new(195, 241, 3.0)]);
        assert_eq!((r.num_users(), r.num_items()), (943, 1682));
    }

    #[test]
    fn empty_file_keeps_dimensions() {
        let r = parse("").unwrap();
        assert!(r.is_empty());
        assert_eq!((r.num_users(), r.num_items()), (943, 1682));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("1\t1\t3\t0\n1\t2\tx\t0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("1\t1\t3\t0\n\n1 2 3 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        for bad in ["1\t1\t6\t0", "1\t1\t0\t0", "1\t1\t2.5\t0", "0\t1\t3\t0", "944\t1\t3\t0", "1\t1683\t3\t0"] {
            let err = parse(bad).unwrap_err();
            assert!(matches!(err, Error::Validation { line: 1, .. }), "{bad}: {err}");
            assert_eq!(err.category(), "validation");
        }
        assert!(matches!(
            parse("1\t1\t3\t0\n1\t1\t4\t0\n").unwrap_err(),
            Error::Validation { line: 2, .. }
        ));
    }

    #[test]
    fn write_then_parse_round_trips() {
        let r = parse("3\t7\t5\t10\n1\t1\t1\t11\n").unwrap();
        let mut buf = Vec::new();
        write_udata(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "3\t7\t5\t0\n1\t1\t1\t0\n");
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), r);
    }
}
