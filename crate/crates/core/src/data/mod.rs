//! Real-dataset pipeline: rating matrices, NMF, outer-product features.

pub mod features;
pub mod lastfm;
pub mod movielens;
pub mod nmf;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index::sample;
use thiserror::Error;

use crate::seeds::Rng;

pub use features::{build_features, FeatureTable};
pub use lastfm::parse_lastfm;
pub use movielens::parse_movielens;
pub use nmf::{nmf, NmfFactors, NmfOptions};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: no ratings found")]
    Empty { path: PathBuf },
    #[error("rank {rank} exceeds min(rows, cols) = {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("feature dimension {found} does not match expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Dense user × item matrix with entries in `[0, 1]`.
///
/// Rows are users (contexts), columns are items (actions). `row_ids` and
/// `col_ids` map positions back to raw dataset ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub row_ids: Vec<u64>,
    pub col_ids: Vec<u64>,
}

impl RatingMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    /// Value for raw dataset ids, if both ids are present.
    pub fn get_by_id(&self, row_id: u64, col_id: u64) -> Option<f64> {
        let r = self.row_ids.binary_search(&row_id).ok()?;
        let c = self.col_ids.binary_search(&col_id).ok()?;
        Some(self.get(r, c))
    }

    /// Builds a matrix from sparse `(row id, col id) -> value` entries.
    pub(crate) fn from_entries(entries: &BTreeMap<(u64, u64), f64>) -> Self {
        let mut row_ids: Vec<u64> = entries.keys().map(|k| k.0).collect();
        let mut col_ids: Vec<u64> = entries.keys().map(|k| k.1).collect();
        row_ids.sort_unstable();
        row_ids.dedup();
        col_ids.sort_unstable();
        col_ids.dedup();
        let (rows, cols) = (row_ids.len(), col_ids.len());
        let mut values = vec![0.0; rows * cols];
        for (&(u, i), &v) in entries {
            let r = row_ids.binary_search(&u).expect("id collected");
            let c = col_ids.binary_search(&i).expect("id collected");
            values[r * cols + c] = v;
        }
        Self {
            rows,
            cols,
            values,
            row_ids,
            col_ids,
        }
    }

    /// Random selection of `rows × cols` users and items; ids stay sorted.
    pub fn subsample(&self, rows: usize, cols: usize, rng: &mut Rng) -> Result<Self, DataError> {
        if rows == 0 || cols == 0 || rows > self.rows || cols > self.cols {
            return Err(DataError::Invalid(format!(
                "cannot select {rows}×{cols} from a {}×{} matrix",
                self.rows, self.cols
            )));
        }
        let mut rs = sample(rng, self.rows, rows).into_vec();
        let mut cs = sample(rng, self.cols, cols).into_vec();
        rs.sort_unstable();
        cs.sort_unstable();
        let values = rs
            .iter()
            .flat_map(|&r| cs.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        Ok(Self {
            rows,
            cols,
            values,
            row_ids: rs.iter().map(|&r| self.row_ids[r]).collect(),
            col_ids: cs.iter().map(|&c| self.col_ids[c]).collect(),
        })
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grid() -> RatingMatrix {
        let mut e = BTreeMap::new();
        for u in 0..6u64 {
            for i in 0..4u64 {
                e.insert((10 + u, 100 + i), (u * 4 + i) as f64 / 24.0);
            }
        }
        RatingMatrix::from_entries(&e)
    }

    #[test]
    fn subsample_keeps_values_and_ids() {
        let m = grid();
        let s = m.subsample(3, 2, &mut Rng::seed_from_u64(1)).unwrap();
        assert_eq!((s.rows, s.cols), (3, 2));
        for r in 0..3 {
            for c in 0..2 {
                assert_eq!(Some(s.get(r, c)), m.get_by_id(s.row_ids[r], s.col_ids[c]));
            }
        }
        let again = m.subsample(3, 2, &mut Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s, again);
        assert!(m.subsample(7, 2, &mut Rng::seed_from_u64(1)).is_err());
    }
}
