//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative cutoff below which eigen/singular values count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n == 0 {
            return Self {
                values: Vec::new(),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Absolute threshold under which an eigenvalue is treated as zero.
    pub fn cutoff(&self) -> f64 {
        RANK_TOL * self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self, i: usize) -> bool {
        self.values[i].abs() <= self.cutoff() || self.values[i] <= 0.0
    }

    /// Moore-Penrose pseudo-inverse with the rank cutoff applied.
    pub fn pinv(&self) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            if self.is_zero(i) {
                continue;
            }
            let u = self.vectors.column(i);
            out += (u * u.transpose()) / self.values[i];
        }
        out
    }

    /// Orthogonal projector onto the numerical null space.
    pub fn null_projector(&self) -> DMatrix<f64> {
        let n = self.values.len();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            if self.is_zero(i) {
                let u = self.vectors.column(i);
                out += u * u.transpose();
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn to_dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Rayleigh quotient form `x^T M x`.
pub fn quad_form(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = to_dvec(x);
    (v.transpose() * m * &v)[(0, 0)]
}

/// Largest eigenvalue of a PSD matrix by power iteration.
pub fn power_iteration_max(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / nw;
    }
    // Guard against a start vector orthogonal to the top eigenvector.
    lambda.max((m * &v).norm())
}
