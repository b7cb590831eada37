//! Discrete Sobolev-type norms on scalar fields.
//!
//! All quadrature is tensor-product trapezoidal. The negative-order norm is
//! the dual of discrete `H¹₀`, realized through the inverse Dirichlet
//! Laplacian.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::ScalarField2D;
use crate::operators::{dirichlet_neg_laplacian, gradient, weighted_dot};

/// Relative residual at which the Poisson solve is accepted.
pub const POISSON_TOLERANCE: f64 = 1e-10;

fn ensure_finite(f: &ScalarField2D) -> Result<()> {
    if f.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidField("non-finite values".into()))
    }
}

/// `∫ f g` by trapezoidal quadrature.
pub fn inner_h0(f: &ScalarField2D, g: &ScalarField2D) -> Result<f64> {
    f.grid().check_same(g.grid())?;
    let w = f.grid().quadrature_weights();
    Ok(weighted_dot(&w, f.values(), g.values()))
}

/// L² norm.
pub fn norm_h0(f: &ScalarField2D) -> Result<f64> {
    ensure_finite(f)?;
    let w = f.grid().quadrature_weights();
    Ok(libm::sqrt(
        weighted_dot(&w, f.values(), f.values()).max(0.0),
    ))
}

/// Pointwise gradient magnitude of `f`.
pub fn gradient_magnitude(f: &ScalarField2D) -> Vec<f64> {
    let (gx, gy) = gradient(f.grid(), f.values());
    gx.iter()
        .zip(&gy)
        .map(|(a, b)| libm::hypot(*a, *b))
        .collect()
}

/// `sup |∇f|`.
pub fn sup_gradient(f: &ScalarField2D) -> Result<f64> {
    ensure_finite(f)?;
    Ok(gradient_magnitude(f).into_iter().fold(0.0, f64::max))
}

/// `max(sup |f|, sup |∇f|)`.
pub fn norm_w1inf(f: &ScalarField2D) -> Result<f64> {
    Ok(f.max_abs().max(sup_gradient(f)?))
}

/// `‖∇f‖²` in L², gradient by the same stencils as [`norm_w1inf`].
pub fn gradient_energy(f: &ScalarField2D) -> Result<f64> {
    ensure_finite(f)?;
    let (gx, gy) = gradient(f.grid(), f.values());
    let w = f.grid().quadrature_weights();
    Ok(weighted_dot(&w, &gx, &gx) + weighted_dot(&w, &gy, &gy))
}

/// Solves `-Δ_h v = f` on interior nodes with `v = 0` on the boundary by
/// conjugate gradients. Boundary values of `f` are ignored.
pub fn poisson_dirichlet_solve(f: &ScalarField2D) -> Result<ScalarField2D> {
    ensure_finite(f)?;
    let grid = *f.grid();
    let n = grid.len();

    let mut rhs = f.values().to_vec();
    for idx in grid.boundary_nodes() {
        rhs[idx] = 0.0;
    }
    let rhs_norm = libm::sqrt(dot(&rhs, &rhs));
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(ScalarField2D::from_raw(grid, x));
    }

    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let cap = 20 * (grid.nx() + grid.ny()) + 500;
    for _ in 0..cap {
        dirichlet_neg_laplacian(&grid, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if libm::sqrt(rr_new) <= POISSON_TOLERANCE * rhs_norm {
            // confirm against the true residual, not the recursive one
            dirichlet_neg_laplacian(&grid, &x, &mut ap);
            let true_res: f64 = libm::sqrt(
                rhs.iter()
                    .zip(&ap)
                    .map(|(b, a)| (b - a) * (b - a))
                    .sum::<f64>(),
            );
            if true_res <= POISSON_TOLERANCE * rhs_norm {
                return Ok(ScalarField2D::from_raw(grid, x));
            }
            r.iter_mut()
                .zip(rhs.iter().zip(&ap))
                .for_each(|(r, (b, a))| *r = b - a);
            rr = dot(&r, &r);
            p.copy_from_slice(&r);
            continue;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    Err(Error::SolverFailure {
        iterations: cap,
        residual: libm::sqrt(rr) / rhs_norm,
    })
}

/// Dual norm over discrete `H¹₀`: `sqrt(⟨f, (-Δ_h)⁻¹ f⟩)`.
pub fn norm_hminus1(f: &ScalarField2D) -> Result<f64> {
    let v = poisson_dirichlet_solve(f)?;
    Ok(libm::sqrt(inner_h0(f, &v)?.max(0.0)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
