//! Dense symmetric helpers shared by the solver, the reduction and the tests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigendecomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are the eigenvectors matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n == 0 {
            return Self {
                values: DVector::zeros(0),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        let eig = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            m[(i, i)]
        } else {
            (m[(i, j)] + m[(j, i)]) / 2.0
        }
    })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SortedEigen::new(&symmetrize(m)).min()
}

/// Number of eigenvalues above `tau * lambda_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tau: f64) -> usize {
    let eig = SortedEigen::new(&symmetrize(m));
    let top = eig.max();
    if top <= 0.0 {
        return 0;
    }
    eig.values.iter().filter(|&&v| v > tau * top).count()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Row `i` of a column-major matrix copied into a contiguous buffer.
pub(crate) fn row_vec(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    (0..m.ncols()).map(|c| m[(i, c)]).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
