//! Uniform periodic grid on the unit interval.
//!
//! All solvers in this crate use node-based finite differences: node `i`
//! sits at `x_i = i / nx` and `x = 1` is identified with `x = 0`. Nested
//! refinements by powers of two share nodes exactly, which keeps
//! cross-resolution comparisons interpolation-free.

/// Uniform periodic grid on [0, 1) with `nx` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid1d {
    nx: usize,
}

impl Grid1d {
    /// A grid with `nx` nodes. WENO5 stencils need at least 8 nodes.
    pub fn new(nx: usize) -> Self {
        assert!(nx >= 8, "grid too small for fifth-order stencils: nx = {nx}");
        Self { nx }
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    /// Coordinate of node `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// All node coordinates in order.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Stride between this grid and a coarser one sharing its nodes.
    ///
    /// Returns `None` unless `coarse_nx` divides `nx`; node `j` of the coarse
    /// grid then coincides with node `j * stride` here.
    pub fn restriction_stride(&self, coarse_nx: usize) -> Option<usize> {
        if coarse_nx == 0 || self.nx % coarse_nx != 0 {
            None
        } else {
            Some(self.nx / coarse_nx)
        }
    }
}
