//! Small dense symmetric linear algebra used by the Frechet statistic.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns, so
/// `A == Q diag(l) Q^T` up to the sweep tolerance.
pub fn sym_eig(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::numeric("sym_eig needs a square matrix"));
    }
    let mut m = a.clone();
    let mut q: Array2<f64> = Array2::eye(n);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frob(&m)) {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = m[[p, r]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[r, r]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, r]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, r]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[r, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[r, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let qkp = q[[k, p]];
                    let qkq = q[[k, r]];
                    q[[k, p]] = c * qkp - s * qkq;
                    q[[k, r]] = s * qkp + c * qkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| m[[i, i]]).collect();
    Ok((values, q))
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Symmetric PSD square root with an eigenvalue floor: eigenvalues below
/// `floor` are lifted to it before taking the root, absorbing small negative
/// numerical noise.
pub fn sqrt_psd(a: &Array2<f64>, floor: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    let sym = 0.5 * (a + &a.t());
    let (values, q) = sym_eig(&sym)?;
    let mut out = Array2::zeros((n, n));
    for (k, &l) in values.iter().enumerate() {
        let s = l.max(floor).sqrt();
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += s * q[[i, k]] * q[[j, k]];
            }
        }
    }
    Ok(out)
}
