//! Periodic grid functions on the torus `(-pi, pi)^2`.
//!
//! Storage is row-major with `x` fastest: node `(i, j)` lives at
//! `j * nx + i` and sits at `(-pi + i*hx, -pi + j*hy)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::par;

/// Uniform periodic grid on `(-pi, pi)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    nx: usize,
    ny: usize,
}

impl TorusGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(Error::key(
                    name,
                    format!("grid size must be even and at least 8, got {n}"),
                ));
            }
        }
        Ok(Self { nx, ny })
    }

    /// Square grid; panics on an invalid size.
    pub fn square(n: usize) -> Self {
        Self::new(n, n).expect("invalid grid size")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx(&self) -> f64 {
        2.0 * PI / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        2.0 * PI / self.ny as f64
    }

    /// Largest of the two spacings.
    pub fn h(&self) -> f64 {
        self.hx().max(self.hy())
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// `|Omega| = 4 pi^2`.
    pub fn area(&self) -> f64 {
        4.0 * PI * PI
    }

    pub fn x(&self, i: usize) -> f64 {
        -PI + i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        -PI + j as f64 * self.hy()
    }

    /// Coordinates of the node with flat index `idx`.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        (self.x(idx % self.nx), self.y(idx / self.nx))
    }

    /// Largest retained wavenumber under the 2/3 dealiasing rule.
    pub fn dealias_limit(&self) -> usize {
        (self.nx.min(self.ny) - 1) / 3
    }

    /// Largest admissible Galerkin truncation radius.
    pub fn max_truncation(&self) -> usize {
        self.nx.min(self.ny) / 2 - 1
    }
}

/// Signed periodic displacement `a - b` wrapped into `[-pi, pi)`.
pub fn periodic_delta(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut d = (a - b) % two_pi;
    if d < -PI {
        d += two_pi;
    } else if d >= PI {
        d -= two_pi;
    }
    d
}

/// Real scalar grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: TorusGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Dimension {
                expected: format!("{} values for a {}x{} grid", grid.len(), grid.nx, grid.ny),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { grid, data })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let data = par::collect(grid.len(), |idx| {
            let (x, y) = grid.coords(idx);
            f(x, y)
        });
        Self { grid, data }
    }

    /// Builds a field node-by-node from its flat index.
    pub fn from_index_fn<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        Self {
            grid,
            data: par::collect(grid.len(), f),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.grid.nx + i]
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let src = &self.data;
        Self::from_index_fn(self.grid, |i| f(src[i]))
    }

    pub fn zip_map<F>(&self, other: &Self, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let (a, b) = (&self.data, &other.data);
        Self::from_index_fn(self.grid, |i| f(a[i], b[i]))
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Grid sum times cell area.
    pub fn integral(&self) -> f64 {
        par::sum(&self.data) * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        par::sum(&self.data) / self.grid.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Flat index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(integral of |f|^q)^(1/q)`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        self.map(|v| v.abs().powf(q)).integral().powf(1.0 / q)
    }
}

/// Planar vector field (the velocity).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn new(x: ScalarField, y: ScalarField) -> Self {
        assert_eq!(x.grid(), y.grid(), "grid mismatch");
        Self { x, y }
    }

    pub fn from_fn<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(f64, f64) -> [f64; 2] + Sync + Send,
    {
        Self {
            x: ScalarField::from_fn(grid, |x, y| f(x, y)[0]),
            y: ScalarField::from_fn(grid, |x, y| f(x, y)[1]),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.x.grid()
    }

    pub fn components(&self) -> [&ScalarField; 2] {
        [&self.x, &self.y]
    }

    pub fn map_components<F>(&self, f: F) -> Self
    where
        F: Fn(&ScalarField) -> ScalarField,
    {
        Self {
            x: f(&self.x),
            y: f(&self.y),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            x: self.x.add(&other.x),
            y: self.y.add(&other.y),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: self.x.sub(&other.x),
            y: self.y.sub(&other.y),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map_components(|c| c.scaled(s))
    }

    /// Pointwise `|v|^2`.
    pub fn norm_sq(&self) -> ScalarField {
        self.x.zip_map(&self.y, |a, b| a * a + b * b)
    }

    pub fn max_norm(&self) -> f64 {
        self.norm_sq().max().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Director field with values in `R^3` (target `S^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct DirectorField {
    pub c: [ScalarField; 3],
}

impl DirectorField {
    /// Uniform director.
    pub fn constant(grid: TorusGrid, d: [f64; 3]) -> Self {
        Self {
            c: d.map(|v| ScalarField::constant(grid, v)),
        }
    }

    pub fn new(c: [ScalarField; 3]) -> Self {
        assert!(c[0].grid() == c[1].grid() && c[1].grid() == c[2].grid());
        Self { c }
    }

    pub fn from_fn<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(f64, f64) -> [f64; 3] + Sync + Send,
    {
        let f = &f;
        Self {
            c: [0, 1, 2].map(|k| ScalarField::from_fn(grid, move |x, y| f(x, y)[k])),
        }
    }

    pub fn from_index_fn<F>(grid: TorusGrid, f: F) -> Self
    where
        F: Fn(usize) -> [f64; 3] + Sync + Send,
    {
        let f = &f;
        Self {
            c: [0, 1, 2].map(|k| ScalarField::from_index_fn(grid, move |i| f(i)[k])),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.c[0].grid()
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        [
            self.c[0].values()[idx],
            self.c[1].values()[idx],
            self.c[2].values()[idx],
        ]
    }

    /// Pointwise `|d|`.
    pub fn norm(&self) -> ScalarField {
        let [a, b, c] = [self.c[0].values(), self.c[1].values(), self.c[2].values()];
        ScalarField::from_index_fn(self.grid(), |i| (a[i] * a[i] + b[i] * b[i] + c[i] * c[i]).sqrt())
    }

    /// `max | |d| - 1 |`.
    pub fn max_unit_deviation(&self) -> f64 {
        self.norm().map(|v| (v - 1.0).abs()).max()
    }

    pub fn max_norm(&self) -> f64 {
        self.norm().max()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            c: [0, 1, 2].map(|k| self.c[k].sub(&other.c[k])),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(ScalarField::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_small_grids() {
        assert!(TorusGrid::new(7, 8).is_err());
        assert!(TorusGrid::new(6, 6).is_err());
        assert!(TorusGrid::new(16, 10).is_ok());
    }

    #[test]
    fn node_coordinates() {
        let g = TorusGrid::square(16);
        assert_eq!(g.x(0), -PI);
        assert!((g.x(8) - 0.0).abs() < 1e-15);
        assert_eq!(g.coords(17), (g.x(1), g.y(1)));
    }

    #[test]
    fn constant_integral_is_area() {
        let g = TorusGrid::square(32);
        let f = ScalarField::constant(g, 1.0);
        assert!((f.integral() - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn from_values_checks_length() {
        let g = TorusGrid::square(8);
        assert!(matches!(
            ScalarField::from_values(g, vec![0.0; 10]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn periodic_delta_wraps() {
        assert!((periodic_delta(3.0, -3.0) - (6.0 - 2.0 * PI)).abs() < 1e-12);
        assert!((periodic_delta(0.5, 0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn director_unit_deviation() {
        let g = TorusGrid::square(8);
        let d = DirectorField::constant(g, [0.6, 0.8, 0.0]);
        assert!(d.max_unit_deviation() < 1e-15);
    }
}
