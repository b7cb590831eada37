//! Uniform rectangular grids and the scalar fields sampled on them.
//!
//! Nodes are stored row-major: node `(i, j)` sits at
//! `origin + (i * hx, j * hy)` and has linear index `j * nx + i`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Smallest admissible node count per axis.
pub const MIN_NODES: usize = 8;

/// Uniform node grid over a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    origin: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes per axis, got {nx} x {ny}"
            )));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacings must be positive and finite, got hx = {hx}, hy = {hy}"
            )));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            nx,
            ny,
            hx,
            hy,
            origin,
        })
    }

    /// Grid over `[origin, origin + extent]` with the given node counts.
    pub fn rectangle(origin: [f64; 2], extent: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("too few nodes: {nx} x {ny}")));
        }
        let hx = extent[0] / (nx - 1) as f64;
        let hy = extent[1] / (ny - 1) as f64;
        Self::new(nx, ny, hx, hy, origin)
    }

    /// Unit square split into `cells` intervals per axis (`cells + 1` nodes).
    pub fn unit_square(cells: usize) -> Result<Self> {
        Self::rectangle([0.0, 0.0], [1.0, 1.0], cells + 1, cells + 1)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn extent(&self) -> [f64; 2] {
        [
            self.hx * (self.nx - 1) as f64,
            self.hy * (self.ny - 1) as f64,
        ]
    }

    /// Length of the rectangle's diagonal.
    pub fn diameter(&self) -> f64 {
        let [w, h] = self.extent();
        libm::hypot(w, h)
    }

    pub fn perimeter(&self) -> f64 {
        let [w, h] = self.extent();
        2.0 * (w + h)
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin[1] + j as f64 * self.hy
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn boundary_len(&self) -> usize {
        2 * (self.nx - 1) + 2 * (self.ny - 1)
    }

    /// Perimeter nodes, counterclockwise from the lower-left corner, each once.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = Vec::with_capacity(self.boundary_len());
        out.extend((0..nx).map(|i| self.index(i, 0)));
        out.extend((1..ny).map(|j| self.index(nx - 1, j)));
        out.extend((0..nx - 1).rev().map(|i| self.index(i, ny - 1)));
        out.extend((1..ny - 1).rev().map(|j| self.index(0, j)));
        out
    }

    /// Trapezoidal arc-length weight of each boundary node (same order as
    /// [`boundary_nodes`](Self::boundary_nodes)); they sum to the perimeter.
    pub fn boundary_arc_weights(&self) -> Vec<f64> {
        self.boundary_nodes()
            .into_iter()
            .map(|idx| {
                let (i, j) = self.ij(idx);
                let on_x_side = i == 0 || i == self.nx - 1;
                let on_y_side = j == 0 || j == self.ny - 1;
                match (on_x_side, on_y_side) {
                    (true, true) => 0.5 * (self.hx + self.hy),
                    (true, false) => self.hy,
                    _ => self.hx,
                }
            })
            .collect()
    }

    /// Cumulative arc length of each boundary node from the starting corner.
    pub fn boundary_arc_positions(&self) -> Vec<f64> {
        let nodes = self.boundary_nodes();
        let mut pos = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        let mut prev: Option<(usize, usize)> = None;
        for idx in nodes {
            let (i, j) = self.ij(idx);
            if let Some((pi, pj)) = prev {
                acc += if pi != i { self.hx } else { self.hy };
                debug_assert!(pi == i || pj == j);
            }
            pos.push(acc);
            prev = Some((i, j));
        }
        pos
    }

    /// 1-D trapezoidal weights along x.
    pub fn weights_x(&self) -> Vec<f64> {
        trapezoid_weights(self.nx, self.hx)
    }

    pub fn weights_y(&self) -> Vec<f64> {
        trapezoid_weights(self.ny, self.hy)
    }

    /// Tensor-product trapezoidal quadrature weight of every node.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let wx = self.weights_x();
        let wy = self.weights_y();
        let mut w = Vec::with_capacity(self.len());
        for &b in &wy {
            w.extend(wx.iter().map(|&a| a * b));
        }
        w
    }

    pub(crate) fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "grids differ: {}x{} vs {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )))
        }
    }
}

pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Real-valued samples on every node of a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value at node {pos}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Caller guarantees length and finiteness.
    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise map; fails if `f` produces non-finite values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| alpha * v).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Copy with every boundary node set to zero.
    pub fn with_zero_boundary(&self) -> Self {
        let mut values = self.values.clone();
        for idx in self.grid.boundary_nodes() {
            values[idx] = 0.0;
        }
        Self::from_raw(self.grid, values)
    }

    pub fn vanishes_on_boundary(&self) -> bool {
        self.grid
            .boundary_nodes()
            .into_iter()
            .all(|idx| self.values[idx] == 0.0)
    }
}
