//! Problem instances: a symmetric positive semidefinite weight matrix `A`.
//!
//! Every constructor funnels through [`validate`], which symmetrizes the input
//! as `(M + Mᵀ)/2` and accepts it when its smallest eigenvalue is at least
//! `-tau_psd * max|λ|`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SortedEigen;
use crate::rng;

/// Relative PSD tolerance used by default.
pub const TAU_PSD: f64 = 1e-8;

/// Relative eigenvalue threshold below which an eigenvalue counts as zero.
pub const TAU_RANK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
}

/// What [`validate`] saw on the way in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    /// Largest `|M_ij - M_ji|` before symmetrization.
    pub max_asymmetry: f64,
    pub symmetrized: bool,
    pub min_eigenvalue: f64,
    pub max_abs_eigenvalue: f64,
    pub numerical_rank: usize,
    pub tau_psd: f64,
}

impl ProblemInstance {
    /// Validates with the default tolerance.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        validate(&matrix, TAU_PSD)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    /// Column `j`, which equals row `j` since `A` is symmetric.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.a.as_slice()[j * n..(j + 1) * n]
    }

    /// Numerical rank of `A` at relative threshold `tau`.
    pub fn rank(&self, tau: f64) -> usize {
        crate::linalg::numerical_rank(&self.a, tau)
    }

    /// `Σ_ij |A_ij|`, a scale for tolerances.
    pub fn abs_sum(&self) -> f64 {
        self.a.iter().map(|v| v.abs()).sum()
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m = parse_matrix_text(&text)?;
        Self::new(m)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, format_matrix_text(&self.a))?;
        Ok(())
    }
}

pub fn validate(raw: &DMatrix<f64>, tau_psd: f64) -> Result<ProblemInstance> {
    validate_with_report(raw, tau_psd).map(|(inst, _)| inst)
}

pub fn validate_with_report(
    raw: &DMatrix<f64>,
    tau_psd: f64,
) -> Result<(ProblemInstance, ValidationReport)> {
    if raw.nrows() != raw.ncols() {
        return Err(Error::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    let n = raw.nrows();
    if n == 0 {
        return Err(Error::PreconditionViolated("empty matrix".into()));
    }
    for j in 0..n {
        for i in 0..n {
            if !raw[(i, j)].is_finite() {
                return Err(Error::NotFinite { row: i, col: j });
            }
        }
    }
    let mut max_asymmetry: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            max_asymmetry = max_asymmetry.max((raw[(i, j)] - raw[(j, i)]).abs());
        }
    }
    let a = crate::linalg::symmetrize(raw);
    let eig = SortedEigen::new(&a);
    let min = eig.min();
    let max_abs = eig.max_abs();
    if min < -tau_psd * max_abs {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let top = eig.max();
    let numerical_rank = if top > 0.0 {
        eig.values.iter().filter(|&&v| v > TAU_RANK * top).count()
    } else {
        0
    };
    let report = ValidationReport {
        n,
        max_asymmetry,
        symmetrized: max_asymmetry > 0.0,
        min_eigenvalue: min,
        max_abs_eigenvalue: max_abs,
        numerical_rank,
        tau_psd,
    };
    Ok((ProblemInstance { a }, report))
}

/// Weighted graph Laplacian: `L_ii = Σ_j w_ij`, `L_ij = -w_ij`.
///
/// Parallel edges accumulate.
pub fn gen_laplacian(edges: &[(usize, usize, f64)], n: usize) -> Result<ProblemInstance> {
    let mut l = DMatrix::zeros(n, n);
    for &(i, j, w) in edges {
        if i >= n || j >= n || i == j {
            return Err(Error::IndexOutOfRange { i, j, n });
        }
        if w.is_nan() || w < 0.0 {
            return Err(Error::NegativeWeight { i, j, weight: w });
        }
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    validate(&l, TAU_PSD)
}

/// `A = B Bᵀ` with `B` an `n × r` standard-normal matrix drawn from `seed`.
pub fn gen_random_gram(n: usize, r: usize, seed: u64) -> Result<ProblemInstance> {
    if r < 1 || r > n {
        return Err(Error::BadRank { r, n });
    }
    let mut g = rng::seeded(seed);
    let entries = rng::standard_normal(&mut g, n * r);
    let b = DMatrix::from_row_slice(n, r, &entries);
    validate(&(&b * b.transpose()), TAU_PSD)
}

/// Parses the `.pgm.txt` format: `n` on the first line, then `n` rows of `n` reals.
pub fn parse_matrix_text(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first_no, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing dimension line".into(),
    })?;
    let n: usize = first.parse().map_err(|_| Error::Parse {
        line: first_no,
        message: format!("expected a positive integer dimension, found {first:?}"),
    })?;
    if n == 0 {
        return Err(Error::Parse {
            line: first_no,
            message: "dimension must be positive".into(),
        });
    }
    let mut m = DMatrix::zeros(n, n);
    let mut last_line = first_no;
    for row in 0..n {
        let (line_no, line) = lines.next().ok_or(Error::Parse {
            line: last_line + 1,
            message: format!("expected {n} matrix rows, found {row}"),
        })?;
        last_line = line_no;
        let mut count = 0;
        for (col, tok) in line.split_whitespace().enumerate() {
            if col >= n {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("row has more than {n} entries"),
                });
            }
            m[(row, col)] = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid number {tok:?}"),
            })?;
            count += 1;
        }
        if count != n {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {n} entries, found {count}"),
            });
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(Error::Parse {
            line: line_no,
            message: format!("unexpected content after {n} matrix rows"),
        });
    }
    Ok(m)
}

/// Writes every entry with 17 significant digits.
pub fn format_matrix_text(m: &DMatrix<f64>) -> String {
    let n = m.nrows();
    let mut out = String::with_capacity(n * n * 25 + 16);
    let _ = writeln!(out, "{n}");
    for i in 0..n {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_accepted() {
        let inst = ProblemInstance::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(inst.n(), 3);
    }

    #[test]
    fn k2_laplacian_is_accepted() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(ProblemInstance::new(m).is_ok());
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        match ProblemInstance::new(m) {
            Err(Error::NotPsd { min_eigenvalue }) => assert!((min_eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn shape_and_finiteness_errors() {
        assert!(matches!(
            ProblemInstance::new(DMatrix::zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
        let mut m = DMatrix::identity(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(matches!(
            ProblemInstance::new(m),
            Err(Error::NotFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        let (inst, report) = validate_with_report(&m, TAU_PSD).unwrap();
        assert!(report.symmetrized);
        assert_eq!(report.max_asymmetry, 0.5);
        assert_eq!(inst.get(0, 1), 0.75);
        assert_eq!(inst.get(1, 0), 0.75);
    }

    #[test]
    fn laplacian_examples() {
        let l = gen_laplacian(&[(0, 1, 1.0)], 2).unwrap();
        assert_eq!(l.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

        let k3 = gen_laplacian(&[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k3.get(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }

        let empty = gen_laplacian(&[], 2).unwrap();
        assert_eq!(empty.matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn laplacian_errors() {
        assert!(matches!(
            gen_laplacian(&[(0, 2, 1.0)], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            gen_laplacian(&[(0, 0, 1.0)], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            gen_laplacian(&[(0, 1, -1.0)], 2),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn random_gram_rank_one_has_vanishing_minors() {
        let a = gen_random_gram(4, 1, 11).unwrap();
        let scale = a.abs_sum();
        for i in 0..4 {
            for j in 0..4 {
                let minor = a.get(i, i) * a.get(j, j) - a.get(i, j) * a.get(j, i);
                assert!(minor.abs() < 1e-12 * scale * scale, "minor {minor}");
            }
        }
        assert_eq!(a.rank(TAU_RANK), 1);
    }

    #[test]
    fn random_gram_full_rank_and_deterministic() {
        let a = gen_random_gram(8, 8, 5).unwrap();
        assert_eq!(a.rank(TAU_RANK), 8);
        let b = gen_random_gram(8, 8, 5).unwrap();
        assert_eq!(a, b);
        assert!(matches!(gen_random_gram(3, 0, 1), Err(Error::BadRank { .. })));
        assert!(matches!(gen_random_gram(3, 4, 1), Err(Error::BadRank { .. })));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let a = gen_random_gram(6, 3, 2).unwrap();
        let parsed = parse_matrix_text(&format_matrix_text(a.matrix())).unwrap();
        assert_eq!(&parsed, a.matrix());
    }

    #[test]
    fn parse_reports_offending_line() {
        let err = parse_matrix_text("3\n1 0 0\n0 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_matrix_text("2\n1 0\n0 1 5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_matrix_text("2\n1 x\n0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_matrix_text("2\n1e0 -0.0\n0 1.5E+1\n").is_ok());
    }
}
