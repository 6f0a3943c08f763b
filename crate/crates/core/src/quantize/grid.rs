use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Uniform grid `s_j = -S + jΔs`, `j = 0..n`, with `Δs = 2S/(n-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub half_width: f64,
    pub n: usize,
}

/// Points per `h` required by [`Grid1D::check_resolution`].
pub const POINTS_PER_H: f64 = 8.0;

impl Grid1D {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) || n < 3 {
            return Err(Error::InvalidParams(format!(
                "grid needs S > 0 and n ≥ 3, got S={half_width}, n={n}"
            )));
        }
        Ok(Grid1D { half_width, n })
    }

    /// Coarsest grid with `Δs ≤ h / points_per_h`.
    pub fn for_h(half_width: f64, h: f64, points_per_h: f64) -> Self {
        let cells = (2.0 * half_width * points_per_h / h - 1e-9).ceil().max(2.0) as usize;
        Grid1D {
            half_width,
            n: cells + 1,
        }
    }

    /// Grid with exactly twice as many cells.
    pub fn refined(&self) -> Self {
        Grid1D {
            half_width: self.half_width,
            n: 2 * (self.n - 1) + 1,
        }
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Indices of nodes with `lo ≤ s_j ≤ hi`.
    pub fn index_range(&self, lo: f64, hi: f64) -> Range<usize> {
        let ds = self.spacing();
        let a = ((lo + self.half_width) / ds - 1e-9).ceil().max(0.0) as usize;
        let b = (((hi + self.half_width) / ds + 1e-9).floor() + 1.0).max(0.0) as usize;
        a.min(self.n)..b.min(self.n).max(a.min(self.n))
    }

    pub fn check_resolution(&self, h: f64) -> Result<()> {
        let ds = self.spacing();
        if ds > h / POINTS_PER_H * (1.0 + 1e-9) {
            return Err(Error::GridTooCoarse(format!(
                "Δs = {ds:.3e} exceeds h/{POINTS_PER_H} = {:.3e}",
                h / POINTS_PER_H
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_rule() {
        let g = Grid1D::for_h(8.0, 0.005, POINTS_PER_H);
        assert_eq!(g.n, 25601);
        assert!((g.spacing() - 0.005 / 8.0).abs() < 1e-15);
        assert!(g.check_resolution(0.005).is_ok());
        assert!(matches!(
            g.check_resolution(0.004),
            Err(Error::GridTooCoarse(_))
        ));
        assert_eq!(g.node(0), -8.0);
        assert!((g.node(g.n - 1) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn ranges() {
        let g = Grid1D::new(1.0, 21).unwrap();
        let r = g.index_range(-0.5, 0.5);
        assert_eq!(r, 5..16);
        assert_eq!(g.index_range(-5.0, 5.0), 0..21);
        assert!(g.index_range(2.0, 3.0).is_empty());
    }
}
