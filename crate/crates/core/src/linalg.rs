//! Dense least squares by Householder QR with column pivoting.

use crate::error::{Error, Result};

/// Column-major `rows x cols` matrix.
#[derive(Debug, Clone)]
pub(crate) struct ColMajor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ColMajor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }
}

/// Minimises `||a x - b||` for `a` of full column rank. Returns the solution
/// or the numerical rank when `a` is rank deficient.
pub(crate) fn least_squares(mut a: ColMajor, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(b.len(), m);
    if m < n {
        return Err(Error::RankDeficient { rank: m, cols: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0; n];
    let tol = (m.max(n) as f64) * f64::EPSILON;
    let mut rank = n;
    let mut r00 = 0.0;

    for k in 0..n {
        // Norms are recomputed rather than downdated: the matrices here are
        // short and wide enough in rows that accuracy matters more than flops.
        let (pivot, pivot_norm) = (k..n)
            .map(|j| (j, norm(&a.data[j * m + k..(j + 1) * m])))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot != k {
            for i in 0..m {
                a.data.swap(k * m + i, pivot * m + i);
            }
            perm.swap(k, pivot);
        }
        if k == 0 {
            r00 = pivot_norm;
        }
        if pivot_norm <= tol * r00 || pivot_norm == 0.0 {
            rank = k;
            break;
        }

        let x0 = a.data[k * m + k];
        let alpha = if x0 >= 0.0 { -pivot_norm } else { pivot_norm };
        let mut v = a.data[k * m + k..(k + 1) * m].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;

        if vnorm2 > 0.0 {
            for j in k + 1..n {
                let col = &mut a.data[j * m + k..(j + 1) * m];
                let s = 2.0 * dot(&v, col) / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            let tail = &mut b[k..];
            let s = 2.0 * dot(&v, tail) / vnorm2;
            for (c, vi) in tail.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        a.data[k * m + k] = alpha;
    }

    if rank < n {
        return Err(Error::RankDeficient { rank, cols: n });
    }

    let mut z = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a.data[j * m + k] * z[j];
        }
        z[k] = acc / diag[k];
    }
    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = z[k];
    }
    Ok(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    // Scaled to avoid overflow on large feature columns.
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}
