//! Outer-product features `φ(g, j) = vec(W_g H_jᵀ)` from NMF factors.

use std::path::Path;

use super::{DataError, NmfFactors};
use crate::numerics::{dot, norm};

/// Features for every (context = user row, action = item column) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub contexts: usize,
    pub actions: usize,
    pub dim: usize,
    /// Row-major `[action][context][coord]`.
    pub phi: Vec<f64>,
    /// Positive factor every raw feature was divided by.
    pub scale: f64,
}

impl FeatureTable {
    pub fn feature(&self, action: usize, context: usize) -> &[f64] {
        let start = (action * self.contexts + context) * self.dim;
        &self.phi[start..start + self.dim]
    }

    /// Writes the table in the environment feature format with every row
    /// assigned to agent 0 (shared by all agents).
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let wrap = |source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(wrap)?;
        let mut header = vec!["agent".to_string(), "action".into(), "context".into()];
        header.extend((1..=self.dim).map(|k| format!("x{k}")));
        w.write_record(&header).map_err(wrap)?;
        for x in 0..self.actions {
            for c in 0..self.contexts {
                let mut row = vec!["0".to_string(), x.to_string(), c.to_string()];
                row.extend(self.feature(x, c).iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(wrap)?;
            }
        }
        w.flush().map_err(|e| wrap(e.into()))
    }
}

/// Row-major vectorization of the outer product `a bᵀ` (index `p·|b| + q`).
pub fn vec_outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x * y))
        .collect()
}

/// Builds `vec(W_g H_jᵀ)` for every pair and divides the whole table by
/// `max(1, max ‖φ‖, max φᵀθ)` so norms and rewards stay within `[0, 1]`.
///
/// `expected_dim` is the shared dimension of the task spec, if known.
pub fn build_features(
    f: &NmfFactors,
    theta: Option<&[f64]>,
    expected_dim: Option<usize>,
) -> Result<FeatureTable, DataError> {
    let dim = f.rank * f.rank;
    if let Some(d) = expected_dim {
        if d != dim {
            return Err(DataError::DimensionMismatch {
                expected: d,
                found: dim,
            });
        }
    }
    if let Some(t) = theta {
        if t.len() != dim {
            return Err(DataError::DimensionMismatch {
                expected: dim,
                found: t.len(),
            });
        }
    }
    let cols: Vec<Vec<f64>> = (0..f.cols).map(|j| f.h_col(j)).collect();
    let mut phi = Vec::with_capacity(f.cols * f.rows * dim);
    for h_j in &cols {
        for g in 0..f.rows {
            phi.extend(vec_outer(f.w_row(g), h_j));
        }
    }
    let mut scale = 1.0f64;
    for v in phi.chunks(dim) {
        scale = scale.max(norm(v));
        if let Some(t) = theta {
            let r = dot(v, t);
            if r < 0.0 {
                return Err(DataError::Invalid(format!(
                    "theta gives negative reward {r} on a feature; rewards must be nonnegative"
                )));
            }
            scale = scale.max(r);
        }
    }
    phi.iter_mut().for_each(|x| *x /= scale);
    Ok(FeatureTable {
        contexts: f.rows,
        actions: f.cols,
        dim,
        phi,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn factors(w: Vec<f64>, h: Vec<f64>, rows: usize, cols: usize, rank: usize) -> NmfFactors {
        NmfFactors {
            rows,
            cols,
            rank,
            w,
            h,
            rel_error: 0.0,
            objective: vec![],
        }
    }

    #[test]
    fn canonical_outer_product() {
        let f = factors(vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], 1, 1, 3);
        let t = build_features(&f, None, Some(9)).unwrap();
        assert_eq!(
            t.feature(0, 0),
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(t.scale, 1.0);
    }

    #[test]
    fn zero_row_gives_zero_feature() {
        let f = factors(vec![0.0, 0.0, 0.0], vec![0.3, 0.2, 0.1], 1, 1, 3);
        let t = build_features(&f, None, None).unwrap();
        assert!(t.feature(0, 0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_pattern_reward_is_scaled_dot_product() {
        let s = 1.0 / 3f64.sqrt();
        let theta = [s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, s];
        let w = vec![0.2, 0.5, 0.1, 0.4, 0.3, 0.3];
        let h = vec![0.6, 0.1, 0.2, 0.3, 0.4, 0.2];
        let f = factors(w.clone(), h.clone(), 2, 2, 3);
        let t = build_features(&f, Some(&theta), Some(9)).unwrap();
        for g in 0..2 {
            for j in 0..2 {
                let wg = &w[g * 3..g * 3 + 3];
                let hj: Vec<f64> = (0..3).map(|k| h[k * 2 + j]).collect();
                let expected = dot(wg, &hj) / 3f64.sqrt() / t.scale;
                assert!((dot(t.feature(j, g), &theta) - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rescales_large_factors() {
        let f = factors(vec![3.0, 3.0], vec![2.0, 1.0, 1.0, 2.0], 1, 2, 2);
        let t = build_features(&f, Some(&[0.5, 0.5, 0.5, 0.5]), Some(4)).unwrap();
        assert!(t.scale > 1.0);
        for x in 0..2 {
            assert!(norm(t.feature(x, 0)) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn dimension_checks() {
        let f = factors(vec![1.0, 0.0], vec![1.0, 0.0], 1, 1, 2);
        assert!(matches!(
            build_features(&f, None, Some(9)),
            Err(DataError::DimensionMismatch {
                expected: 9,
                found: 4
            })
        ));
        assert!(build_features(&f, Some(&[1.0]), None).is_err());
    }

    proptest! {
        #[test]
        fn outer_product_inner_identity(
            a in prop::collection::vec(-1.0f64..1.0, 3),
            b in prop::collection::vec(-1.0f64..1.0, 3),
            c in prop::collection::vec(-1.0f64..1.0, 3),
            d in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let lhs = dot(&vec_outer(&a, &b), &vec_outer(&c, &d));
            let rhs = dot(&a, &c) * dot(&b, &d);
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }
}
