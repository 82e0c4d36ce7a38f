use crate::error::{Error, Result};
use crate::Point;

/// Tensor-product grid on the half-cube `[-1,1]^{n-1} x [0,1]`.
///
/// Lateral axes carry `m` nodes with spacing `h = 2/(m-1)`; the vertical axis
/// carries `(m+1)/2` nodes with the same spacing, so the slab `x_n = 0` and the
/// origin are nodes. Storage is row-major with `x_n` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    m: usize,
    h: f64,
    shape: [usize; 3],
}

/// Slack used when testing whether a point lies in the closed half-cube.
const DOMAIN_SLACK: f64 = 1e-12;

impl Grid {
    pub fn new(dim: usize, cells_per_axis: usize) -> Result<Grid> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if cells_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid("cells_per_axis must be odd".into()));
        }
        if cells_per_axis < 9 {
            return Err(Error::InvalidGrid(format!(
                "cells_per_axis must be at least 9, got {cells_per_axis}"
            )));
        }
        let m = cells_per_axis;
        let mut shape = [1usize; 3];
        for s in shape.iter_mut().take(dim - 1) {
            *s = m;
        }
        shape[dim - 1] = m.div_ceil(2);
        Ok(Grid {
            dim,
            m,
            h: 2.0 / (m - 1) as f64,
            shape,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Node counts per axis; unused trailing axes are 1.
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    fn lower(&self, axis: usize) -> f64 {
        if axis == self.dim - 1 {
            0.0
        } else {
            -1.0
        }
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if axis == self.dim - 1 {
            i as f64 * self.h
        } else {
            // symmetric form keeps x = 0 exact at the centre index
            (i as f64 - ((self.m - 1) / 2) as f64) * self.h
        }
    }

    pub fn index(&self, mi: &[usize; 3]) -> usize {
        (mi[0] * self.shape[1] + mi[1]) * self.shape[2] + mi[2]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i2 = idx % self.shape[2];
        let rest = idx / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], i2]
    }

    pub fn point_of(&self, mi: &[usize; 3]) -> Point {
        let mut x = [0.0; 3];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.coordinate(a, mi[a]);
        }
        x
    }

    pub fn node(&self, idx: usize) -> Point {
        self.point_of(&self.multi_index(idx))
    }

    /// Index of the node at the origin.
    pub fn origin_index(&self) -> usize {
        let mut mi = [0usize; 3];
        for a in 0..self.dim - 1 {
            mi[a] = (self.m - 1) / 2;
        }
        self.index(&mi)
    }

    /// Lateral faces `x_i = ±1` and the top face `x_n = 1`.
    pub fn is_outer(&self, mi: &[usize; 3]) -> bool {
        let n = self.dim - 1;
        (0..n).any(|a| mi[a] == 0 || mi[a] == self.m - 1) || mi[n] == self.shape[n] - 1
    }

    pub fn is_slab(&self, mi: &[usize; 3]) -> bool {
        mi[self.dim - 1] == 0
    }

    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim).all(|a| {
            let lo = self.lower(a);
            x[a] >= lo - DOMAIN_SLACK && x[a] <= 1.0 + DOMAIN_SLACK
        })
    }

    /// Cell containing `x` and local coordinates in `[0,1]`.
    pub fn locate(&self, x: &Point) -> Result<([usize; 3], [f64; 3])> {
        if !self.contains(x) {
            return Err(Error::Domain(format!("{:?}", &x[..self.dim])));
        }
        let mut cell = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..self.dim {
            let s = (x[a] - self.lower(a)) / self.h;
            let i = (s.floor().max(0.0) as usize).min(self.shape[a] - 2);
            cell[a] = i;
            t[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        Ok((cell, t))
    }

    /// Multilinear interpolation of nodal `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: &Point) -> Result<f64> {
        let (cell, t) = self.locate(x)?;
        Ok(self.interpolate_in_cell(values, &cell, &t))
    }

    pub(crate) fn interpolate_in_cell(&self, values: &[f64], cell: &[usize; 3], t: &[f64; 3]) -> f64 {
        let corners = 1usize << self.dim;
        let mut acc = 0.0;
        for c in 0..corners {
            let mut mi = *cell;
            let mut w = 1.0;
            for a in 0..self.dim {
                if c >> a & 1 == 1 {
                    mi[a] += 1;
                    w *= t[a];
                } else {
                    w *= 1.0 - t[a];
                }
            }
            if w != 0.0 {
                acc += w * values[self.index(&mi)];
            }
        }
        acc
    }

    /// Nodal samples of `f`.
    pub fn sample(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        (0..self.node_count()).map(|i| f(&self.node(i))).collect()
    }
}

/// Same as [`Grid::new`].
pub fn build_grid(dim: usize, cells_per_axis: usize) -> Result<Grid> {
    Grid::new(dim, cells_per_axis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_spacing() {
        let g = Grid::new(2, 129).unwrap();
        assert_eq!(g.spacing(), 2.0 / 128.0);
        let g3 = Grid::new(3, 65).unwrap();
        assert_eq!(g3.node_count(), 65 * 65 * 33);
        assert_eq!(g3.node(g3.origin_index()), [0.0; 3]);
        assert!(matches!(Grid::new(2, 8), Err(Error::InvalidGrid(m)) if m.contains("must be odd")));
        assert!(Grid::new(2, 7).is_err());
        assert!(Grid::new(4, 9).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(3, 9).unwrap();
        for idx in 0..g.node_count() {
            assert_eq!(g.index(&g.multi_index(idx)), idx);
        }
        assert_eq!(g.node(g.node_count() - 1), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn interpolation_rules() {
        let g = Grid::new(2, 17).unwrap();
        let lin = g.sample(|x| x[0]);
        assert!((g.interpolate(&lin, &[0.123, 0.456, 0.0]).unwrap() - 0.123).abs() < 1e-15);
        let sq = g.sample(|x| x[0] * x[0]);
        let h = g.spacing();
        let mid = [h / 2.0, 0.3, 0.0];
        let err = (g.interpolate(&sq, &mid).unwrap() - mid[0] * mid[0]).abs();
        assert!(err <= h * h / 4.0 + 1e-15);
        assert!(matches!(g.interpolate(&lin, &[0.0, -0.1, 0.0]), Err(Error::Domain(_))));
    }
}
