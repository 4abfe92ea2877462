//! Householder least squares with sequential rank detection.

use ndarray::{Array2, ArrayView2};

/// A column is treated as dependent when the part of it orthogonal to the
/// previously accepted columns is below this fraction of its norm.
pub const COLLINEARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Coefficients in original column order; dependent columns get 0.
    pub coef: Vec<f64>,
    /// Accepted columns, in order.
    pub kept: Vec<usize>,
    /// Columns rejected as linear combinations of earlier ones.
    pub dependent: Vec<usize>,
    /// Upper-triangular factor over the kept columns.
    pub r: Array2<f64>,
    /// Residual sum of squares.
    pub rss: f64,
}

impl LeastSquares {
    /// `(R^T R)^{-1}` over the kept columns, i.e. `(A^T A)^{-1}` restricted.
    pub fn gram_inverse(&self) -> Array2<f64> {
        let k = self.kept.len();
        let mut rinv = Array2::<f64>::zeros((k, k));
        for col in 0..k {
            for row in (0..=col).rev() {
                let mut s = if row == col { 1.0 } else { 0.0 };
                for m in row + 1..=col {
                    s -= self.r[[row, m]] * rinv[[m, col]];
                }
                rinv[[row, col]] = s / self.r[[row, row]];
            }
        }
        rinv.dot(&rinv.t())
    }
}

/// Minimizes `||A c - b||` by Householder QR, dropping columns that are
/// numerically dependent on earlier ones.
pub fn least_squares(a: ArrayView2<f64>, b: &[f64]) -> LeastSquares {
    let (n, p) = a.dim();
    assert_eq!(b.len(), n, "row count mismatch");
    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| a.column(j).to_vec()).collect();
    let mut rhs = b.to_vec();
    let mut kept = Vec::new();
    let mut dependent = Vec::new();

    let mut k = 0;
    for j in 0..p {
        if k == n {
            dependent.push(j);
            continue;
        }
        let orig = norm(&a.column(j).to_vec());
        let tail = norm(&cols[j][k..]);
        if orig == 0.0 || tail <= COLLINEARITY_TOL * orig {
            dependent.push(j);
            continue;
        }
        // Householder vector v with v[0] = 1 implicit scaling.
        let alpha = if cols[j][k] > 0.0 { -tail } else { tail };
        let mut v: Vec<f64> = cols[j][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in cols.iter_mut().skip(j) {
                reflect(&mut c[k..], &v, vnorm2);
            }
            reflect(&mut rhs[k..], &v, vnorm2);
        }
        kept.push(j);
        k += 1;
    }

    let rank = kept.len();
    let mut r = Array2::<f64>::zeros((rank, rank));
    for (cj, &j) in kept.iter().enumerate() {
        for row in 0..=cj {
            r[[row, cj]] = cols[j][row];
        }
    }
    let mut sol = vec![0.0; rank];
    for row in (0..rank).rev() {
        let mut s = rhs[row];
        for m in row + 1..rank {
            s -= r[[row, m]] * sol[m];
        }
        sol[row] = s / r[[row, row]];
    }
    let mut coef = vec![0.0; p];
    for (cj, &j) in kept.iter().enumerate() {
        coef[j] = sol[cj];
    }
    let rss = rhs[rank..].iter().map(|x| x * x).sum();
    LeastSquares {
        coef,
        kept,
        dependent,
        r,
        rss,
    }
}

fn reflect(x: &mut [f64], v: &[f64], vnorm2: f64) {
    let dot: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    let s = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

fn norm(x: &[f64]) -> f64 {
    // Scaled to avoid overflow on large entries.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_line() {
        let a = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let ls = least_squares(a.view(), &[1.0, 2.0, 3.0, 4.0]);
        assert!((ls.coef[0] - 1.0).abs() < 1e-12);
        assert!((ls.coef[1] - 1.0).abs() < 1e-12);
        assert!(ls.rss < 1e-20);
        assert!(ls.dependent.is_empty());
    }

    #[test]
    fn flags_dependent_column() {
        let a = array![[1.0, 1.0, 2.0], [1.0, 2.0, 4.0], [1.0, 3.0, 6.0], [1.0, 5.0, 10.0]];
        let ls = least_squares(a.view(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ls.dependent, vec![2]);
        assert_eq!(ls.kept, vec![0, 1]);
    }

    #[test]
    fn gram_inverse_matches_direct() {
        let a = array![[1.0, 0.5], [1.0, -1.0], [1.0, 2.0], [1.0, 0.0]];
        let ls = least_squares(a.view(), &[0.0; 4]);
        let g = ls.gram_inverse();
        let ata = a.t().dot(&a);
        let prod = ata.dot(&g);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
}
