//! Small dense symmetric positive-definite solves.
//!
//! Only what the logistic fit and the Mahalanobis distance need: a Cholesky
//! factorization that reports which column lost rank, so callers can name the
//! collinear covariates.

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

/// Column `column` is (numerically) a linear combination of columns `0..column`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient {
    pub column: usize,
}

impl Cholesky {
    /// Factor a row-major `n x n` matrix. A pivot is rejected when it falls
    /// below `rel_tol` times the original diagonal entry.
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Result<Self, RankDeficient> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            let scale = a[j * n + j].abs().max(f64::MIN_POSITIVE);
            if !(d > rel_tol * scale) {
                return Err(RankDeficient { column: j });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// Solve `L y = b` only; `|y|^2 = b' A^{-1} b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

/// Columns with a nonnegligible coefficient when `column` is regressed on the
/// preceding columns of the Gram matrix `a`. Used to word collinearity errors.
pub fn collinear_partners(a: &[f64], n: usize, column: usize) -> Vec<usize> {
    if column == 0 {
        return Vec::new();
    }
    let m = column;
    let sub: Vec<f64> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| a[i * n + j])
        .collect();
    let rhs: Vec<f64> = (0..m).map(|i| a[i * n + column]).collect();
    match Cholesky::factor(&sub, m, 1e-12) {
        Ok(ch) => {
            let coef = ch.solve(&rhs);
            let scale = coef.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
            (0..m)
                .filter(|&i| coef[i].abs() > 1e-8 * scale.max(1e-300))
                .collect()
        }
        Err(_) => (0..m).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let ch = Cholesky::factor(&a, 2, 1e-12).unwrap();
        let x = ch.solve(&[2.0, 1.0]);
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-12);
        let y = ch.forward(&[2.0, 1.0]);
        let quad: f64 = y.iter().map(|v| v * v).sum();
        assert!((quad - (2.0 * x[0] + 1.0 * x[1])).abs() < 1e-12);
    }

    #[test]
    fn reports_dependent_column() {
        // Column 2 = column 0 + column 1.
        let cols = [[1.0, 0.0, 2.0, 1.0], [0.0, 1.0, 1.0, 3.0]];
        let c2: Vec<f64> = (0..4).map(|i| cols[0][i] + cols[1][i]).collect();
        let all = [cols[0].to_vec(), cols[1].to_vec(), c2];
        let gram: Vec<f64> = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (0..4).map(|k| all[i][k] * all[j][k]).sum())
            .collect();
        let err = Cholesky::factor(&gram, 3, 1e-10).unwrap_err();
        assert_eq!(err.column, 2);
        assert_eq!(collinear_partners(&gram, 3, 2), vec![0, 1]);
    }
}
