//! Non-negative matrix factorization by Frobenius multiplicative updates.

use rand::{Rng as _, SeedableRng};

use super::{DataError, RatingMatrix};
use crate::seeds::Rng;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmfOptions {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl NmfOptions {
    pub fn new(rank: usize, seed: u64) -> Self {
        Self {
            rank,
            max_iters: 1000,
            tol: 1e-9,
            seed,
        }
    }
}

/// `M ≈ W H` with `W` rows×rank and `H` rank×cols, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfFactors {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub w: Vec<f64>,
    pub h: Vec<f64>,
    /// `‖M − WH‖_F / ‖M‖_F` at the end.
    pub rel_error: f64,
    /// `‖M − WH‖_F²` at initialization and after each iteration.
    pub objective: Vec<f64>,
}

impl NmfFactors {
    /// Row `g` of `W`.
    pub fn w_row(&self, g: usize) -> &[f64] {
        &self.w[g * self.rank..(g + 1) * self.rank]
    }

    /// Column `j` of `H`.
    pub fn h_col(&self, j: usize) -> Vec<f64> {
        (0..self.rank).map(|k| self.h[k * self.cols + j]).collect()
    }
}

/// `C = A B` for row-major `A` (n×k) and `B` (k×m).
fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let row = &b[p * m..(p + 1) * m];
            for (cij, bpj) in c[i * m..(i + 1) * m].iter_mut().zip(row) {
                *cij += aip * bpj;
            }
        }
    }
    c
}

fn transpose(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            t[j * n + i] = a[i * m + j];
        }
    }
    t
}

fn sq_error(v: &[f64], w: &[f64], h: &[f64], n: usize, k: usize, m: usize) -> f64 {
    let wh = matmul(w, h, n, k, m);
    v.iter().zip(&wh).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Factorizes a matrix with uniform(0, 1] initialization from `opts.seed`.
pub fn nmf(m: &RatingMatrix, opts: NmfOptions) -> Result<NmfFactors, DataError> {
    let (n, c, k) = (m.rows, m.cols, opts.rank);
    if k == 0 {
        return Err(DataError::ZeroRank);
    }
    if k > n.min(c) {
        return Err(DataError::RankTooLarge {
            rank: k,
            max: n.min(c),
        });
    }
    if m.values.iter().any(|&x| !(x >= 0.0)) {
        return Err(DataError::Invalid(
            "matrix has negative or NaN entries".into(),
        ));
    }
    let v = &m.values;
    let mut rng = Rng::seed_from_u64(opts.seed);
    let mut init =
        |len: usize| -> Vec<f64> { (0..len).map(|_| 1.0 - rng.random::<f64>()).collect() };
    let mut w = init(n * k);
    let mut h = init(k * c);

    let mut objective = vec![sq_error(v, &w, &h, n, k, c)];
    for _ in 0..opts.max_iters {
        // H ← H ⊙ (WᵀV) / (WᵀW H)
        let wt = transpose(&w, n, k);
        let wtv = matmul(&wt, v, k, n, c);
        let wtw = matmul(&wt, &w, k, n, k);
        let wtwh = matmul(&wtw, &h, k, k, c);
        for ((hij, num), den) in h.iter_mut().zip(&wtv).zip(&wtwh) {
            *hij *= num / (den + EPS);
        }
        // W ← W ⊙ (V Hᵀ) / (W H Hᵀ)
        let ht = transpose(&h, k, c);
        let vht = matmul(v, &ht, n, c, k);
        let hht = matmul(&h, &ht, k, c, k);
        let whht = matmul(&w, &hht, n, k, k);
        for ((wij, num), den) in w.iter_mut().zip(&vht).zip(&whht) {
            *wij *= num / (den + EPS);
        }
        let obj = sq_error(v, &w, &h, n, k, c);
        let prev = *objective.last().expect("seeded with the initial value");
        objective.push(obj);
        if (prev - obj).abs() <= opts.tol * prev.max(EPS) {
            break;
        }
    }
    let norm_v: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let last = *objective.last().expect("nonempty");
    let rel_error = if norm_v > 0.0 {
        last.sqrt() / norm_v
    } else {
        last.sqrt()
    };
    Ok(NmfFactors {
        rows: n,
        cols: c,
        rank: k,
        w,
        h,
        rel_error,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> RatingMatrix {
        RatingMatrix {
            rows,
            cols,
            values,
            row_ids: (0..rows as u64).collect(),
            col_ids: (0..cols as u64).collect(),
        }
    }

    fn assert_monotone(obj: &[f64]) {
        for w in obj.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rank_one_exact() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let vals = a
            .iter()
            .flat_map(|x| b.iter().map(move |y| x * y / 8.0))
            .collect();
        let m = matrix(2, 2, vals);
        let f = nmf(
            &m,
            NmfOptions {
                max_iters: 500,
                tol: 0.0,
                ..NmfOptions::new(1, 3)
            },
        )
        .unwrap();
        assert!(f.rel_error <= 1e-4, "{}", f.rel_error);
        assert!(f.objective.len() <= 501);
        assert_monotone(&f.objective);
        assert!(f.w.iter().chain(&f.h).all(|&x| x >= 0.0));
    }

    #[test]
    fn full_rank_small_random() {
        let mut rng = Rng::seed_from_u64(5);
        let vals = (0..12).map(|_| rng.random::<f64>()).collect();
        let m = matrix(4, 3, vals);
        let f = nmf(&m, NmfOptions::new(3, 1)).unwrap();
        assert!(f.rel_error <= 0.05, "{}", f.rel_error);
        assert_monotone(&f.objective);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = matrix(3, 3, vec![0.1, 0.5, 0.2, 0.9, 0.0, 0.3, 0.4, 0.4, 0.7]);
        let a = nmf(&m, NmfOptions::new(2, 42)).unwrap();
        let b = nmf(&m, NmfOptions::new(2, 42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_validation() {
        let m = matrix(2, 3, vec![0.5; 6]);
        assert!(matches!(
            nmf(&m, NmfOptions::new(3, 0)),
            Err(DataError::RankTooLarge { .. })
        ));
        assert!(matches!(
            nmf(&m, NmfOptions::new(0, 0)),
            Err(DataError::ZeroRank)
        ));
    }
}
