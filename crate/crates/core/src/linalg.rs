//! Small dense linear-algebra helpers and a box-constrained QP solver.
//!
//! Every problem in this crate is desk scale (dimensions in the tens to a few
//! hundred), so everything here is dense and built on `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("box QP Hessian is not positive definite on the free set")]
    NotStrictlyConvex,
    #[error("box QP did not reach tolerance {tol:e} within {iterations} iterations (residual {residual:e})")]
    NotConverged {
        tol: f64,
        iterations: usize,
        residual: f64,
    },
}

/// Eigenvalues of the symmetric part `(m + mᵀ)/2`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let s = symmetric_part(m);
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn sym_extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let ev = sym_eigenvalues(m);
    (ev[0], ev[ev.len() - 1])
}

/// Largest singular value (spectral norm).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    // σ_max² = λ_max(MᵀM); use the smaller Gram matrix.
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    sym_extreme_eigenvalues(&gram).1.max(0.0).sqrt()
}

pub fn clamp_to_box(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(&v, (&l, &u))| v.max(l).min(u)),
    )
}

/// `‖x − P(x − g)‖∞`, the natural residual of a box-constrained problem.
pub fn projected_gradient_residual(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    x.iter()
        .zip(grad.iter())
        .zip(lo.iter().zip(hi.iter()))
        .map(|((&xv, &gv), (&l, &u))| (xv - (xv - gv).max(l).min(u)).abs())
        .fold(0.0, f64::max)
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Minimizes `½xᵀHx + gᵀx` over `lo ≤ x ≤ hi` for symmetric positive definite `H`.
///
/// Diagonal Hessians are solved coordinatewise in closed form. Otherwise a
/// projected Newton method with an ε-active set and Armijo search along the
/// projection arc is used; on a strictly convex QP it identifies the optimal
/// face in finitely many steps and then terminates with one Newton step.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<BoxQpSolution, QpError> {
    let sol = solve_box_qp_best(h, g, lo, hi, x0, tol, max_iter)?;
    if sol.converged {
        Ok(sol)

    } else {
        Err(QpError::NotConverged {
            tol,
            iterations: sol.iterations,
            residual: sol.residual,
        })
    }
}

/// Like [`solve_box_qp`] but returns the last iterate with `converged = false`
/// instead of failing when the tolerance is not reached.
pub fn solve_box_qp_best(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<BoxQpSolution, QpError> {
    let n = g.len();
    if n == 0 {
        return Ok(BoxQpSolution {
            x: DVector::zeros(0),
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    if is_diagonal(h) {
        let mut x = DVector::zeros(n);
        for k in 0..n {
            let d = h[(k, k)];
            if d <= 0.0 {
                return Err(QpError::NotStrictlyConvex);
            }
            x[k] = (-g[k] / d).max(lo[k]).min(hi[k]);
        }
        let grad = h * &x + g;
        let residual = projected_gradient_residual(&x, &grad, lo, hi);
        return Ok(BoxQpSolution {
            x,
            iterations: 1,
            converged: residual <= tol,
            residual,
        });
    }

    let mut x = clamp_to_box(x0, lo, hi);
    let eps0 = 1e-6
        * lo
            .iter()
            .zip(hi.iter())
            .map(|(l, u)| (u - l).abs())
            .fold(1.0, f64::max);
    // Below this level the residual is rounding noise.
    let hnorm = (0..n).map(|r| h.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let floor = |x: &DVector<f64>| 64.0 * f64::EPSILON * (inf_norm(g) + hnorm * inf_norm(x));
    for it in 0..max_iter {
        let grad = h * &x + g;
        let residual = projected_gradient_residual(&x, &grad, lo, hi);
        if residual <= tol.max(floor(&x)) {
            return Ok(BoxQpSolution {
                x,
                iterations: it,
                residual,
                converged: true,
            });
        }
        let eps = eps0.min(residual);
        let active: Vec<bool> = (0..n)
            .map(|k| {
                (x[k] - lo[k] <= eps && grad[k] > 0.0) || (hi[k] - x[k] <= eps && grad[k] < 0.0)
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&k| !active[k]).collect();

        let mut d = DVector::zeros(n);
        for k in 0..n {
            if active[k] {
                d[k] = -grad[k];
            }
        }
        if !free.is_empty() {
            let hff = h.select_rows(&free).select_columns(&free);
            let gf = DVector::from_iterator(free.len(), free.iter().map(|&k| grad[k]));
            let chol = Cholesky::new(hff).ok_or(QpError::NotStrictlyConvex)?;
            let df = chol.solve(&(-gf));
            for (idx, &k) in free.iter().enumerate() {
                d[k] = df[idx];
            }
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = clamp_to_box(&(&x + &d * alpha), lo, hi);
            let mut decrease = 0.0;
            for k in 0..n {
                if active[k] {
                    decrease += grad[k] * (x[k] - trial[k]);
                } else {
                    decrease += -alpha * grad[k] * d[k];
                }
            }
            // Exact change of the quadratic along the step, free of cancellation.
            let step = &trial - &x;
            let change = grad.dot(&step) + 0.5 * step.dot(&(h * &step));
            if -change >= 1e-4 * decrease {
                x = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No further decrease is representable in floating point.
            let grad = h * &x + g;
            let residual = projected_gradient_residual(&x, &grad, lo, hi);
            if residual <= tol.max(floor(&x)) {
                return Ok(BoxQpSolution {
                    x,
                    iterations: it + 1,
                    residual,
                    converged: true,
                });
            }
            break;
        }
    }
    let grad = h * &x + g;
    let final_res = projected_gradient_residual(&x, &grad, lo, hi);
    let converged = final_res <= tol.max(floor(&x));
    Ok(BoxQpSolution {
        x,
        iterations: max_iter,
        residual: final_res,
        converged,
    })
}

fn is_diagonal(h: &DMatrix<f64>) -> bool {
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            if r != c && h[(r, c)] != 0.0 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn diagonal_qp_is_clamped_closed_form() {
        let h = DMatrix::from_diagonal(&dv(&[2.0, 1.0]));
        let g = dv(&[-2.0, 5.0]);
        let sol = solve_box_qp(&h, &g, &dv(&[0.0, 0.0]), &dv(&[10.0, 10.0]), &dv(&[0.0, 0.0]), 1e-12, 10)
            .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-15);
        assert_eq!(sol.x[1], 0.0);
    }

    #[test]
    fn coupled_qp_matches_brute_force_grid() {
        // ½xᵀHx + gᵀx with the unconstrained optimum outside the box.
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.5, 1.5, 2.0]);
        let g = dv(&[-8.0, 1.0]);
        let lo = dv(&[0.0, 0.0]);
        let hi = dv(&[3.0, 3.0]);
        let sol = solve_box_qp(&h, &g, &lo, &hi, &dv(&[1.0, 1.0]), 1e-12, 100).unwrap();
        let f = |a: f64, b: f64| {
            let x = dv(&[a, b]);
            0.5 * x.dot(&(&h * &x)) + g.dot(&x)
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 600;
        for i in 0..=steps {
            for j in 0..=steps {
                let (a, b) = (3.0 * i as f64 / steps as f64, 3.0 * j as f64 / steps as f64);
                let v = f(a, b);
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        assert!((sol.x[0] - best.1).abs() < 1e-2);
        assert!((sol.x[1] - best.2).abs() < 1e-2);
        assert!(f(sol.x[0], sol.x[1]) <= best.0 + 1e-12);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn indefinite_hessian_is_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let g = dv(&[0.0, 0.0]);
        let r = solve_box_qp(&h, &g, &dv(&[-1.0, -1.0]), &dv(&[1.0, 1.0]), &dv(&[0.1, -0.2]), 1e-12, 50);
        assert!(r.is_err());
    }

    #[test]
    fn spectral_norm_of_rectangular_matrix() {
        let m = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0, 0.5]);
        assert!((spectral_norm(&m) - 1.25f64.sqrt()).abs() < 1e-12);
    }
}
