//! Small dense symmetric eigenproblems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `max |A_ij − A_ji|`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            d = d.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    d
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Config(format!("matrix is {}x{}, expected square", n, a.ncols())));
    }
    let scale = a.amax().max(1.0);
    if symmetry_defect(a) > 1e-12 * scale {
        return Err(Error::Invariant(format!(
            "matrix not symmetric (defect {:.3e})",
            symmetry_defect(a)
        )));
    }
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(jacobi_eigenvalues(a)?.last().copied().unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Real roots of `λ³ + a λ² + b λ + c` by the trigonometric method.
    fn cubic_roots(a: f64, b: f64, c: f64) -> [f64; 3] {
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let shift = -a / 3.0;
        if p.abs() < 1e-14 {
            let r = (-q).cbrt() + shift;
            return [r, r, r];
        }
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let mut r = [0.0; 3];
        for (k, rk) in r.iter_mut().enumerate() {
            *rk = m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift;
        }
        r.sort_by(f64::total_cmp);
        r
    }

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0]));
        assert_eq!(jacobi_eigenvalues(&a).unwrap(), vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(jacobi_eigenvalues(&a), Err(Error::Invariant(_))));
    }

    proptest! {
        #[test]
        fn matches_characteristic_polynomial(v in prop::array::uniform6(-5.0f64..5.0)) {
            let a = DMatrix::from_row_slice(3, 3, &[v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]]);
            let tr = a.trace();
            let minors = a[(0,0)]*a[(1,1)] - a[(0,1)]*a[(1,0)]
                + a[(0,0)]*a[(2,2)] - a[(0,2)]*a[(2,0)]
                + a[(1,1)]*a[(2,2)] - a[(1,2)]*a[(2,1)];
            let det = a.determinant();
            let roots = cubic_roots(-tr, minors, -det);
            let ev = jacobi_eigenvalues(&a).unwrap();
            for (r, e) in roots.iter().zip(&ev) {
                prop_assert!((r - e).abs() <= 1e-9 * (1.0 + r.abs()), "{roots:?} vs {ev:?}");
            }
        }
    }
}
