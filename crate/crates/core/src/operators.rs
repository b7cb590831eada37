//! Finite-difference operators on [`Grid2D`] node arrays.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::Grid2D;

/// Gradient components by centered differences in the interior and
/// second-order one-sided differences on the edges. Exact for quadratics.
pub fn gradient(grid: &Grid2D, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut gx = vec![0.0; grid.len()];
    let mut gy = vec![0.0; grid.len()];
    let (ihx, ihy) = (0.5 / grid.hx(), 0.5 / grid.hy());
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            gx[k] = if i == 0 {
                (-3.0 * u[k] + 4.0 * u[k + 1] - u[k + 2]) * ihx
            } else if i == nx - 1 {
                (3.0 * u[k] - 4.0 * u[k - 1] + u[k - 2]) * ihx
            } else {
                (u[k + 1] - u[k - 1]) * ihx
            };
            gy[k] = if j == 0 {
                (-3.0 * u[k] + 4.0 * u[k + nx] - u[k + 2 * nx]) * ihy
            } else if j == ny - 1 {
                (3.0 * u[k] - 4.0 * u[k - nx] + u[k - 2 * nx]) * ihy
            } else {
                (u[k + nx] - u[k - nx]) * ihy
            };
        }
    }
    (gx, gy)
}

/// 5-point Laplacian with homogeneous Neumann closure by even reflection
/// (ghost node `u[-1] = u[1]`). Writes into `out`.
///
/// With trapezoidal weights `W`, `W * L` is symmetric negative semidefinite.
pub fn neumann_laplacian(grid: &Grid2D, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let cx = 1.0 / (grid.hx() * grid.hx());
    let cy = 1.0 / (grid.hy() * grid.hy());
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = u[k];
            let dxx = if i == 0 {
                2.0 * (u[k + 1] - c)
            } else if i == nx - 1 {
                2.0 * (u[k - 1] - c)
            } else {
                u[k - 1] - 2.0 * c + u[k + 1]
            };
            let dyy = if j == 0 {
                2.0 * (u[k + nx] - c)
            } else if j == ny - 1 {
                2.0 * (u[k - nx] - c)
            } else {
                u[k - nx] - 2.0 * c + u[k + nx]
            };
            out[k] = cx * dxx + cy * dyy;
        }
    }
}

/// `-Δ_h` on interior nodes with zero Dirichlet data; boundary entries of
/// `out` are set to zero and boundary entries of `u` are ignored.
pub fn dirichlet_neg_laplacian(grid: &Grid2D, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let cx = 1.0 / (grid.hx() * grid.hx());
    let cy = 1.0 / (grid.hy() * grid.hy());
    let val = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
            0.0
        } else {
            u[j * nx + i]
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                out[k] = 0.0;
                continue;
            }
            let c = u[k];
            out[k] = cx * (2.0 * c - val(i - 1, j) - val(i + 1, j))
                + cy * (2.0 * c - val(i, j - 1) - val(i, j + 1));
        }
    }
}

/// Trapezoidal-weighted inner product `Σ w_k a_k b_k`.
pub fn weighted_dot(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                f(grid.x(i), grid.y(j))
            })
            .collect()
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = Grid2D::rectangle([0.2, -0.3], [1.3, 0.9], 11, 9).unwrap();
        let u = sample(&g, |x, y| {
            1.0 + 2.0 * x - y + x * x - 3.0 * x * y + 0.5 * y * y
        });
        let (gx, gy) = gradient(&g, &u);
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            let (x, y) = (g.x(i), g.y(j));
            assert!((gx[k] - (2.0 + 2.0 * x - 3.0 * y)).abs() < 1e-10);
            assert!((gy[k] - (-1.0 - 3.0 * x + y)).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_neumann_laplacian_is_symmetric() {
        let g = Grid2D::rectangle([0.0, 0.0], [1.0, 2.0], 9, 13).unwrap();
        let w = g.quadrature_weights();
        let a: Vec<f64> = (0..g.len()).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..g.len()).map(|k| ((k * 13) % 7) as f64 * 0.3).collect();
        let mut la = vec![0.0; g.len()];
        let mut lb = vec![0.0; g.len()];
        neumann_laplacian(&g, &a, &mut la);
        neumann_laplacian(&g, &b, &mut lb);
        let lhs = weighted_dot(&w, &la, &b);
        let rhs = weighted_dot(&w, &a, &lb);
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        // negative semidefinite, and constants are in the kernel
        assert!(weighted_dot(&w, &la, &a) <= 0.0);
        let ones = vec![1.0; g.len()];
        let mut l1 = vec![0.0; g.len()];
        neumann_laplacian(&g, &ones, &mut l1);
        assert!(l1.iter().all(|v| v.abs() < 1e-12));
    }
}
