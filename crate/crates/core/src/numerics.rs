//! Dense symmetric linear algebra for Gram matrices.
//!
//! Gram matrices in this crate are small (d is at most a few dozen), so
//! everything is stored dense and recomputed from a Cholesky factor on demand.

use thiserror::Error;

/// Errors raised by the dense symmetric routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix dimension must be positive")]
    EmptyDimension,
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Symmetric positive semi-definite matrix stored densely in row-major order.
///
/// Symmetry is maintained by construction: every mutating operation writes
/// both `(i, j)` and `(j, i)` with the same value.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPsdMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymPsdMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * dim + i] = v;
        }
        m
    }

    /// Builds a matrix from rows, rejecting ragged or asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(NumericsError::EmptyDimension);
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(NumericsError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(NumericsError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        m.add_outer(v, 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    /// Row-major view of the entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(NumericsError::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// In-place `self += scale · v vᵀ`.
    fn add_outer(&mut self, v: &[f64], scale: f64) {
        let d = self.dim;
        for i in 0..d {
            let vi = scale * v[i];
            if vi == 0.0 {
                continue;
            }
            for j in i..d {
                let delta = vi * v[j];
                self.data[i * d + j] += delta;
                if i != j {
                    self.data[j * d + i] += delta;
                }
            }
        }
    }

    /// In-place rank-one update `self += v vᵀ`.
    pub fn rank1_update_mut(&mut self, v: &[f64]) -> Result<()> {
        self.check_dim(v.len())?;
        self.add_outer(v, 1.0);
        Ok(())
    }

    /// Returns `self + v vᵀ`.
    pub fn rank1_update(&self, v: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.rank1_update_mut(v)?;
        Ok(out)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &SymPsdMatrix) -> Result<()> {
        self.check_dim(other.dim)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// In-place `self += scale · I`.
    pub fn add_identity(&mut self, scale: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += scale;
        }
    }

    pub fn set_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        Ok(self.data.chunks(self.dim).map(|row| dot(row, v)).collect())
    }

    /// Quadratic form `vᵀ A v`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        Ok(dot(v, &self.mul_vec(v)?))
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self)
    }

    /// Natural logarithm of the determinant. Requires positive definiteness.
    pub fn logdet(&self) -> Result<f64> {
        Ok(self.cholesky()?.logdet())
    }

    /// Solves `A x = b` for positive definite `A`.
    pub fn solve_psd(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(b.len())?;
        Ok(self.cholesky()?.solve(b))
    }

    /// `sqrt(vᵀ A⁻¹ v)`, the norm of `v` in the inverse metric.
    pub fn mahalanobis_inv_norm(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(self.cholesky()?.inv_norm(v))
    }

    /// All eigenvalues in ascending order (cyclic Jacobi).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut vals = jacobi_eigenvalues(self.dim, self.data.clone());
        vals.sort_by(f64::total_cmp);
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 1 {
            return self.data[0];
        }
        self.eigenvalues()[0]
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &SymPsdMatrix) -> Result<Self> {
        let d = a.dim;
        if d == 0 {
            return Err(NumericsError::EmptyDimension);
        }
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(NumericsError::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Self { dim: d, lower: l })
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim)
            .map(|i| self.lower[i * self.dim + i].ln())
            .sum::<f64>()
    }

    /// Forward substitution `L y = b`.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * d + k] * y[k];
            }
            y[i] = s / self.lower[i * d + i];
        }
        y
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = self.forward(b);
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= self.lower[k * d + i] * x[k];
            }
            x[i] = s / self.lower[i * d + i];
        }
        x
    }

    /// `sqrt(bᵀ A⁻¹ b) = ‖L⁻¹ b‖₂`.
    pub fn inv_norm(&self, b: &[f64]) -> f64 {
        norm(&self.forward(b))
    }
}

fn jacobi_eigenvalues(d: usize, mut a: Vec<f64>) -> Vec<f64> {
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if frob == 0.0 {
        return vec![0.0; d];
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i * d + j] * a[i * d + j];
            }
        }
        if off.sqrt() <= 1e-15 * frob {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                a[p * d + q] = 0.0;
                a[q * d + p] = 0.0;
            }
        }
    }
    (0..d).map(|i| a[i * d + i]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += scale · x`
pub fn axpy(scale: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += scale * xi;
    }
}

/// `a · x + b · y`
pub fn combine(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + b * yi).collect()
}
