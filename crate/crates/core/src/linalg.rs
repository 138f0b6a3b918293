//! Small dense factorizations at working precision.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::mp::Mp;

/// `M = L D Lᵀ` with unit lower-triangular `L`.
#[derive(Debug, Clone)]
pub struct Ldl {
    pub l: Vec<Vec<Mp>>,
    pub d: Vec<Mp>,
}

/// Symmetric factorization without pivoting; fails on a non-positive pivot,
/// which for a moment matrix of a positive weight means too few digits.
pub fn ldl(m: &[Vec<Mp>]) -> Result<Ldl> {
    let n = m.len();
    let mut l = vec![vec![Mp::zero(); n]; n];
    let mut d: Vec<Mp> = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j].clone();
            for k in 0..j {
                s -= &(&(&l[i][k] * &l[j][k]) * &d[k]);
            }
            if i == j {
                if !(s > Mp::zero()) {
                    return Err(Error::SingularMatrix { index: i });
                }
                d.push(s);
                l[i][i] = Mp::from_i64(1);
            } else {
                l[i][j] = s / &d[j];
            }
        }
    }
    Ok(Ldl { l, d })
}

/// Hankel matrix `(μ_{i+j})_{i,j<n}` built from a moment slice.
pub fn hankel_matrix<T: Clone>(moments: &[T], n: usize) -> Vec<Vec<T>> {
    (0..n).map(|i| moments[i..i + n].to_vec()).collect()
}

/// Pivots of Gaussian elimination with partial (row) pivoting and the
/// number of row swaps performed.
pub fn lu_pivots(mut a: Vec<Vec<Complex<Mp>>>) -> Result<(Vec<Complex<Mp>>, usize)> {
    let n = a.len();
    let mut swaps = 0;
    let mut pivots = Vec::with_capacity(n);
    let size = |z: &Complex<Mp>| z.norm_sqr().to_f64();
    for col in 0..n {
        let (best, mag) =
            (col..n).map(|r| (r, size(&a[r][col]))).max_by(|x, y| x.1.total_cmp(&y.1)).expect("non-empty column");
        if !(mag > 0.0) {
            return Err(Error::SingularMatrix { index: col });
        }
        if best != col {
            a.swap(best, col);
            swaps += 1;
        }
        let p = a[col][col].clone();
        let inv = Complex::new(Mp::from_i64(1), Mp::zero()) / p.clone();
        for r in col + 1..n {
            let f = a[r][col].clone() * inv.clone();
            for c in col + 1..n {
                let delta = f.clone() * a[col][c].clone();
                a[r][c] = a[r][c].clone() - delta;
            }
        }
        pivots.push(p);
    }
    Ok((pivots, swaps))
}
