//! Right-preconditioned restarted GMRES.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Debug)]
pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖b − A x‖ / ‖b‖`, recomputed from `x`.
    pub residual: f64,
    pub best_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` with `A P⁻¹` as the Krylov operator.
///
/// The residual driving the restart loop is recomputed explicitly at the
/// start of every cycle, so convergence is judged on the true residual.
pub(crate) fn gmres(
    a: &dyn Fn(&[f64], &mut [f64]),
    prec: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
    restart: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0;
    if bnorm == 0.0 {
        return GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            best_residual: 0.0,
            converged: true,
        };
    }
    let restart = restart.max(1);
    let mut iterations = 0;
    let mut best = f64::INFINITY;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    loop {
        a(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        let rel = beta / bnorm;
        best = best.min(rel);
        if rel <= tol || iterations >= max_iter || !rel.is_finite() {
            return GmresOutcome {
                x,
                iterations,
                residual: rel,
                best_residual: best,
                converged: rel <= tol,
            };
        }

        let mut basis = vec![r.iter().map(|v| v / beta).collect::<Vec<_>>()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        let mut g = vec![beta];
        while hess.len() < restart && iterations < max_iter {
            let k = hess.len();
            prec(&basis[k], &mut z);
            a(&z, &mut w);
            let wnorm0 = norm(&w);
            let mut col = vec![0.0; k + 2];
            // modified Gram-Schmidt with one reorthogonalization pass
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    col[i] += c;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let hnext = norm(&w);
            col[k + 1] = hnext;
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let rho = col[k].hypot(col[k + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[k] / rho, col[k + 1] / rho) };
            col[k] = rho;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[k]);
            g[k] *= c;
            hess.push(col);
            iterations += 1;

            let breakdown = hnext <= 1e-14 * wnorm0;
            if g[k + 1].abs() / bnorm <= 0.5 * tol || breakdown {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // back substitution for the least-squares coefficients
        let m = hess.len();
        let mut y = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = g[i];
            for j in i + 1..m {
                s -= hess[j][i] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        r.fill(0.0);
        for (yi, v) in y.iter().zip(&basis) {
            r.iter_mut().zip(v).for_each(|(ri, vi)| *ri += yi * vi);
        }
        prec(&r, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn dense_op(a: &DMatrix<f64>) -> impl Fn(&[f64], &mut [f64]) + '_ {
        move |x, y| y.copy_from_slice((a * DVector::from_column_slice(x)).as_slice())
    }

    #[test]
    fn converges_on_nonsymmetric_system() {
        let n = 30;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                3.0 + (i as f64).sin()
            } else {
                1.0 / (1.0 + (i as f64 - 2.0 * j as f64).abs())
            }
        });
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let ident = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        // restart shorter than n exercises the outer loop
        let out = gmres(&dense_op(&a), &ident, &b, vec![0.0; n], 1e-12, 1000, 7);
        assert!(out.converged, "{out:?}");
        let want = a.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = (DVector::from_column_slice(&out.x) - &want).amax() / want.amax();
        assert!(err < 1e-10);
    }

    #[test]
    fn exact_preconditioner_needs_one_iteration() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, -1.0, 3.0, 2.0, 0.0, 1.0, 5.0]);
        let inv = a.clone().try_inverse().unwrap();
        let out = gmres(&dense_op(&a), &dense_op(&inv), &[1.0, 2.0, 3.0], vec![0.0; 3], 1e-12, 10, 5);
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn reports_non_convergence() {
        // a rotation: GMRES(1) stagnates
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ident = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let out = gmres(&dense_op(&a), &ident, &[1.0, 0.0], vec![0.0; 2], 1e-12, 6, 1);
        assert!(!out.converged);
        assert!((out.best_residual - 1.0).abs() < 1e-12);
    }
}
