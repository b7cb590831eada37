//! Reference quadrature and difference stencils written independently of
//! the library, for oracle comparisons.
#![allow(dead_code)]

use pat_core::{Grid2D, ScalarField2D};

pub fn trapezoid(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// `∫ f g` with the tensor trapezoidal rule.
pub fn integrate(grid: &Grid2D, f: &[f64], g: &[f64]) -> f64 {
    let wx = trapezoid(grid.nx(), grid.hx());
    let wy = trapezoid(grid.ny(), grid.hy());
    let mut s = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = j * grid.nx() + i;
            s += wx[i] * wy[j] * f[k] * g[k];
        }
    }
    s
}

/// Second-order derivative along one axis: centered inside, three-point
/// one-sided at the ends.
fn derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

pub fn grad(f: &ScalarField2D) -> (Vec<f64>, Vec<f64>) {
    let g = f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let v = f.values();
    let mut gx = vec![0.0; v.len()];
    let mut gy = vec![0.0; v.len()];
    for j in 0..ny {
        let d = derivative(&v[j * nx..(j + 1) * nx], g.hx());
        gx[j * nx..(j + 1) * nx].copy_from_slice(&d);
    }
    for i in 0..nx {
        let col: Vec<f64> = (0..ny).map(|j| v[j * nx + i]).collect();
        for (j, d) in derivative(&col, g.hy()).into_iter().enumerate() {
            gy[j * nx + i] = d;
        }
    }
    (gx, gy)
}

pub fn w1inf(f: &ScalarField2D) -> f64 {
    let (gx, gy) = grad(f);
    let sup_f = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sup_g = gx.iter().zip(&gy).fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()));
    sup_f.max(sup_g)
}

pub fn l2_sq(f: &ScalarField2D) -> f64 {
    integrate(f.grid(), f.values(), f.values())
}

pub fn grad_sq(f: &ScalarField2D) -> f64 {
    let (gx, gy) = grad(f);
    integrate(f.grid(), &gx, &gx) + integrate(f.grid(), &gy, &gy)
}
