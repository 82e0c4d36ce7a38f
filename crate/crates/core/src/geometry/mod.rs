//! Half-cube grid, multilinear interpolation and quadrature on half-balls,
//! hemispheres and slab disks.

mod grid;
mod quadrature;

pub use grid::{build_grid, Grid};
pub use quadrature::{
    angular_count_for, disk_boundary_quadrature, disk_quadrature, disk_with, gauss_legendre,
    halfball_quadrature, halfball_with, hemisphere_quadrature, QuadratureRule, Target,
};
