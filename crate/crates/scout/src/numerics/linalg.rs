//! Small dense symmetric linear algebra: outer-product updates, Cholesky
//! solves, and Jacobi eigenvalues. Dimensions here are tiny (d <= ~32), so
//! simple O(d^3) routines are plenty.

use super::NumericsError;

/// Dense symmetric matrix, full row-major storage with symmetry enforced on
/// every mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { dim, data: vec![0.0; dim * dim] }
    }

    /// `c * I`.
    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = c;
        }
        m
    }

    /// Builds from arbitrary square data, symmetrizing as `(A + A^T) / 2`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            assert_eq!(rows[i].len(), dim, "rows must form a square matrix");
            for j in 0..=i {
                let v = 0.5 * (rows[i][j] + rows[j][i]);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Rank-one update `self += x x^T`.
    pub fn add_outer(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                let v = x[i] * x[j];
                self.data[i * self.dim + j] += v;
                if i != j {
                    self.data[j * self.dim + i] += v;
                }
            }
        }
    }

    /// `self += c * I`.
    pub fn add_scaled_identity(&mut self, c: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += c;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            out[i] = dot(row, x);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor of a positive definite matrix.
///
/// Factor once, solve many: the policy layer reuses one factorization for
/// several right-hand sides per round.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn new(m: &SymMatrix) -> Result<Self, NumericsError> {
        if !m.is_finite() {
            return Err(NumericsError::NonFinite("cholesky input"));
        }
        let n = m.dim;
        let scale = m.frobenius_norm().max(1.0);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = m.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= scale * 1e-14 {
                        return Err(NumericsError::NotPositiveDefinite);
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { dim: n, lower: l })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.dim);
        let n = self.dim;
        let l = &self.lower;
        // Forward substitution L y = rhs.
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= l[i * n + k] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        // Back substitution L^T x = y.
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= l[k * n + i] * y[k];
            }
            y[i] /= l[i * n + i];
        }
        y
    }

    /// `x^T M^{-1} x` for the factored matrix `M`.
    pub fn inv_quad_form(&self, x: &[f64]) -> f64 {
        // Solve L z = x; then x^T M^{-1} x = ||z||^2.
        let n = self.dim;
        let l = &self.lower;
        let mut z = x.to_vec();
        for i in 0..n {
            for k in 0..i {
                z[i] -= l[i * n + k] * z[k];
            }
            z[i] /= l[i * n + i];
        }
        dot(&z, &z)
    }
}

/// Solves `m v = rhs` for positive definite `m` via Cholesky.
pub fn solve_spd(m: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>, NumericsError> {
    Ok(Cholesky::new(m)?.solve(rhs))
}

/// Smallest eigenvalue of a symmetric matrix, by cyclic Jacobi rotations.
pub fn min_eigenvalue(m: &SymMatrix) -> Result<f64, NumericsError> {
    Ok(*eigenvalues_symmetric(m)?
        .iter()
        .min_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"))
        .expect("dim >= 1"))
}

/// All eigenvalues of a symmetric matrix (unordered).
pub fn eigenvalues_symmetric(m: &SymMatrix) -> Result<Vec<f64>, NumericsError> {
    if !m.is_finite() {
        return Err(NumericsError::NonFinite("eigenvalue input"));
    }
    let n = m.dim;
    if n == 1 {
        return Ok(vec![m.data[0]]);
    }
    let mut a = m.data.clone();
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i * n + i]).collect())
}
