//! Natural-gradient metric on the space of density-matrix entries.
//!
//! With the identity as reference metric, `G = Re(J^H J)` where `J` is the
//! `d^2 x P` Jacobian of the flattened density matrix and
//! `d rho(a, b) / d theta = rho(a, b) [dA(a, b) / d theta - d log Z / d theta]`.
//! Because `rho` is Hermitian, `G` equals `R^T R` for the `d^2 x P` real matrix
//! `R` holding one row per diagonal entry and two (real, imaginary, scaled by
//! `sqrt 2`) per upper-triangular entry.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::ndo::{NdoForward, NdoParams};

/// Real Jacobian factor `R` with `G = R^T R`, assembled from the sparse
/// structure of `grad A`.
pub fn jacobian_rows(fwd: &NdoForward) -> DMatrix<f64> {
    let d = fwd.layout.d;
    let n = fwd.layout.len;
    let glz = fwd.grad_log_z();
    let mut r = DMatrix::zeros(d * d, n);
    let mut row = 0;
    let sqrt2 = std::f64::consts::SQRT_2;
    for a in 0..d {
        for b in a..d {
            let c = fwd.rho[(a, b)];
            if a == b {
                for k in 0..n {
                    r[(row, k)] = -c.re * glz[k];
                }
                fwd.visit_grad_a(a, b, |k, x| r[(row, k)] += (c * x).re);
                row += 1;
            } else {
                for k in 0..n {
                    r[(row, k)] = -sqrt2 * c.re * glz[k];
                    r[(row + 1, k)] = -sqrt2 * c.im * glz[k];
                }
                fwd.visit_grad_a(a, b, |k, x| {
                    let y = c * x * sqrt2;
                    r[(row, k)] += y.re;
                    r[(row + 1, k)] += y.im;
                });
                row += 2;
            }
        }
    }
    r
}

/// Dense complex Jacobian `J[(a*d + b), k] = d rho(a, b) / d theta_k`, built
/// from full per-entry gradient vectors.
pub fn rho_jacobian(params: &NdoParams) -> CMatrix {
    let fwd = NdoForward::new(params);
    let d = fwd.layout.d;
    let n = fwd.layout.len;
    let glz = fwd.grad_log_z();
    let mut j = CMatrix::zeros(d * d, n);
    for a in 0..d {
        for b in 0..d {
            let ga = fwd.grad_a(a, b);
            for k in 0..n {
                j[(a * d + b, k)] = fwd.rho[(a, b)] * (ga[k] - glz[k]);
            }
        }
    }
    j
}

/// `Re(J^H J)` for any complex Jacobian.
pub fn gram(j: &CMatrix) -> DMatrix<f64> {
    (j.adjoint() * j).map(|z| z.re)
}

/// `G = Re(J^H J)` through the sparse real factor.
pub fn gngd_metric(params: &NdoParams) -> DMatrix<f64> {
    let r = jacobian_rows(&NdoForward::new(params));
    r.tr_mul(&r)
}

/// `G` from the dense Jacobian, without exploiting sparsity.
pub fn gngd_metric_dense(params: &NdoParams) -> DMatrix<f64> {
    gram(&rho_jacobian(params))
}

/// Shift `eps * Tr(G) / P` added to the diagonal of `G`.
pub fn regularization(trace: f64, n: usize, eps: f64) -> f64 {
    let shift = eps * trace / n as f64;
    if shift > 0.0 {
        shift
    } else {
        // Degenerate metric: fall back to an absolute jitter.
        eps.max(f64::MIN_POSITIVE)
    }
}

/// Solves `(G + eps * Tr(G)/P * I) x = grad` by Cholesky factorization.
pub fn solve_regularized(metric: &DMatrix<f64>, grad: &[f64], eps: f64) -> Result<Vec<f64>> {
    let n = metric.nrows();
    if grad.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: grad.len(),
        });
    }
    let shift = regularization(metric.trace(), n, eps);
    let mut a = metric.clone();
    for i in 0..n {
        a[(i, i)] += shift;
    }
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numerical("regularized metric is not positive definite".into()))?;
    let g = DVector::from_column_slice(grad);
    let mut x = chol.solve(&g);
    // One step of iterative refinement recovers the accuracy lost to conditioning.
    let residual = &g - &a * &x;
    x += chol.solve(&residual);
    Ok(x.as_slice().to_vec())
}

/// Solves `(R^T R + lambda I) x = grad` with `lambda = eps * ||R||_F^2 / P`.
///
/// When `R` has fewer rows than columns the system is solved in the row space
/// through the push-through identity
/// `(R^T R + lambda I)^{-1} = (I - R^T (R R^T + lambda I)^{-1} R) / lambda`,
/// followed by one step of iterative refinement.
pub fn solve_with_factor(rows: &DMatrix<f64>, grad: &[f64], eps: f64) -> Result<Vec<f64>> {
    let (m, n) = rows.shape();
    if grad.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: grad.len(),
        });
    }
    if m >= n {
        return solve_regularized(&rows.tr_mul(rows), grad, eps);
    }
    let lambda = regularization(rows.norm_squared(), n, eps);
    let mut k = rows * rows.transpose();
    for i in 0..m {
        k[(i, i)] += lambda;
    }
    let chol = Cholesky::new(k).ok_or_else(|| Error::Numerical("row-space metric is not positive definite".into()))?;
    let apply_inverse = |rhs: &DVector<f64>| -> DVector<f64> {
        let inner = chol.solve(&(rows * rhs));
        (rhs - rows.tr_mul(&inner)) / lambda
    };
    let g = DVector::from_column_slice(grad);
    let mut x = apply_inverse(&g);
    let residual = &g - (rows.tr_mul(&(rows * &x)) + &x * lambda);
    x += apply_inverse(&residual);
    Ok(x.as_slice().to_vec())
}

/// Relative residual `||(G + shift I) x - grad|| / ||grad||`.
pub fn solve_residual(metric: &DMatrix<f64>, x: &[f64], grad: &[f64], eps: f64) -> f64 {
    let n = metric.nrows();
    let shift = regularization(metric.trace(), n, eps);
    let xv = DVector::from_column_slice(x);
    let g = DVector::from_column_slice(grad);
    let r = metric * &xv + &xv * shift - &g;
    r.norm() / g.norm()
}

/// Largest entrywise deviation between two real matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
