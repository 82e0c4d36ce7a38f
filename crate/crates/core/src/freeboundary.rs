//! Contact set, free boundary, regular/singular classification and strata.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::blowup::{estimate_frequency, fit_tangent, FrequencyEstimate, TangentPolynomial};
use crate::diagnostics::{profile, DiagnosticInput, ProfileOptions, RadiusLadder, RHO_MAX};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{gradient_step, Matrix3, ProblemSpec, ScalarField};
use crate::geometry::Grid;
use crate::taylor::{normalize_at, slab_restriction};
use crate::Point;

/// Slab nodes where `|u − h| ≤ τ`.
#[derive(Clone, Debug)]
pub struct ContactSet {
    pub grid: Grid,
    /// Grid indices of the slab nodes, in grid order.
    pub slab_nodes: Vec<usize>,
    /// `u − h` at each slab node.
    pub gap: Vec<f64>,
    pub mask: Vec<bool>,
    pub tau_contact: f64,
}

impl ContactSet {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Default threshold `10⁻⁶ (1 + ‖u‖_∞)`.
pub fn default_tau_contact(u: &ScalarField) -> f64 {
    1e-6 * (1.0 + u.max_abs())
}

pub fn extract_contact_set(u: &ScalarField, h: &Expr, tau_contact: Option<f64>) -> ContactSet {
    let grid = u.grid().clone();
    let n = grid.dim();
    let slab_h = slab_restriction(h, n);
    let tau = tau_contact.unwrap_or_else(|| default_tau_contact(u));
    let slab_nodes: Vec<usize> = (0..grid.node_count())
        .filter(|&i| grid.is_slab(&grid.multi_index(i)))
        .collect();
    let gap: Vec<f64> = slab_nodes
        .iter()
        .map(|&i| u.values()[i] - slab_h.eval(&grid.node(i)))
        .collect();
    let mask = gap.iter().map(|g| g.abs() <= tau).collect();
    ContactSet {
        grid,
        slab_nodes,
        gap,
        mask,
        tau_contact: tau,
    }
}

/// A point of `∂_Γ Λ` located on a slab edge.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub location: Point,
    /// Grid indices of the edge endpoints; the first is in the mask when the
    /// edge is a mask frontier.
    pub edge: (usize, usize),
}

/// Frontier of the contact set along slab edges: edges from a masked node to
/// an unmasked one, and edges where `u − h` changes sign between two unmasked
/// nodes. Each is refined by a secant step on `u − h`.
pub fn extract_free_boundary(c: &ContactSet) -> Vec<FrontierPoint> {
    let grid = &c.grid;
    let n = grid.dim();
    let shape = grid.shape();
    let pos: BTreeMap<usize, usize> = c.slab_nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut out = Vec::new();
    for (ka, &ia) in c.slab_nodes.iter().enumerate() {
        let mi = grid.multi_index(ia);
        for axis in 0..n - 1 {
            if mi[axis] + 1 >= shape[axis] {
                continue;
            }
            let mut mj = mi;
            mj[axis] += 1;
            let ib = grid.index(&mj);
            let kb = pos[&ib];
            let (ma, mb) = (c.mask[ka], c.mask[kb]);
            let (da, db) = (c.gap[ka], c.gap[kb]);
            let (from, to, dfrom, dto) = match (ma, mb) {
                (true, false) => (ia, ib, da, db),
                (false, true) => (ib, ia, db, da),
                (false, false) if da * db < 0.0 => (ia, ib, da, db),
                _ => continue,
            };
            let t = if dfrom == dto { 0.0 } else { (dfrom / (dfrom - dto)).clamp(0.0, 1.0) };
            let (pa, pb) = (grid.node(from), grid.node(to));
            let mut loc = [0.0; 3];
            for k in 0..3 {
                loc[k] = pa[k] + t * (pb[k] - pa[k]);
            }
            out.push(FrontierPoint {
                location: loc,
                edge: (from, to),
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Regular,
    Singular,
    TruncationLimited,
}

#[derive(Clone, Debug, Serialize)]
pub struct FreeBoundaryPoint {
    pub location: Point,
    pub kind: PointKind,
    pub nu: Option<usize>,
    pub stratum_dim: Option<usize>,
    pub tangent: Option<TangentPolynomial>,
    /// `|∇′(u − h)(x0)|`.
    pub tangential_gradient: f64,
    pub frequency: Option<FrequencyEstimate>,
    pub nondegeneracy_flag: bool,
}

#[derive(Clone, Debug)]
#[derive(Default)]
pub struct ClassifyOptions {
    /// Regularity threshold on `|∇′(u − h)|`; default `10 h`.
    pub tau_grad: Option<f64>,
    pub max_rungs: Option<usize>,
}


/// `|∇′(u − h)(x0)|` from fourth-order tangential differences of `u` and
/// analytic derivatives of `h`.
pub fn tangential_gradient(u: &ScalarField, h: &Expr, x0: &Point) -> Result<f64> {
    let grid = u.grid();
    let n = grid.dim();
    let gu = u.gradient_with_step(x0, gradient_step(grid.spacing()))?;
    let slab = slab_restriction(h, n);
    let gh = match slab.value_and_gradient(x0, n) {
        Ok((_, g)) => g,
        Err(_) => {
            let s = grid.spacing() / 2.0;
            let mut g = [0.0; 3];
            for (i, gi) in g.iter_mut().enumerate().take(n - 1) {
                let mut p = *x0;
                let mut q = *x0;
                p[i] += s;
                q[i] -= s;
                *gi = (slab.eval(&p) - slab.eval(&q)) / (2.0 * s);
            }
            g
        }
    };
    Ok((0..n - 1).map(|i| (gu[i] - gh[i]).powi(2)).sum::<f64>().sqrt())
}

/// Largest eigenvalue of the symmetric recentring map.
pub fn spectral_norm(m: &Matrix3, dim: usize) -> f64 {
    nalgebra::DMatrix::from_fn(dim, dim, |i, j| m[i][j]).symmetric_eigenvalues().max()
}

/// Largest ladder top that keeps `x0 + L B_ρ` inside the grid.
pub fn window_radius(x0: &Point, dim: usize, sigma_max: f64) -> f64 {
    let lateral = x0[..dim - 1].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    ((0.95 - lateral) / sigma_max).min(RHO_MAX)
}

/// Regular if `|∇′(u − h)(x0)| > τ_grad`; otherwise the problem is
/// recentred at `x0`, profiled and blown up. A frequency of one is also
/// regular.
pub fn classify_point(x0: &Point, u: &ScalarField, spec: &ProblemSpec, opts: &ClassifyOptions) -> Result<FreeBoundaryPoint> {
    let n = spec.dim();
    let tau = opts.tau_grad.unwrap_or(10.0 * spec.grid.spacing());
    let tg = tangential_gradient(u, &spec.obstacle, x0)?;
    let mut point = FreeBoundaryPoint {
        location: *x0,
        kind: PointKind::Regular,
        nu: None,
        stratum_dim: None,
        tangent: None,
        tangential_gradient: tg,
        frequency: None,
        nondegeneracy_flag: false,
    };
    if tg > tau {
        return Ok(point);
    }
    let context = |e: Error| Error::Inconsistent(format!("classifying {:?}: {e}", &x0[..n]));
    let np = normalize_at(spec, u, x0).map_err(context)?;
    let coarse = np.coarsened();
    let inp = DiagnosticInput::from_normalized(&np, coarse.as_ref());
    let top = window_radius(x0, n, spectral_norm(&np.map, n));
    let ladder = RadiusLadder::geometric(top, inp.floor(), opts.max_rungs).map_err(context)?;
    let opts_p = ProfileOptions {
        identity_budget: false,
        volume: false,
        ..Default::default()
    };
    let prof = profile(&inp, &ladder, &opts_p).map_err(context)?;
    let est = estimate_frequency(&prof).map_err(context)?;
    if est.truncation_limited {
        point.kind = PointKind::TruncationLimited;
        point.frequency = Some(est);
        return Ok(point);
    }
    if est.nu_int <= 1 {
        point.frequency = Some(est);
        return Ok(point);
    }
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let tangent = fit_tangent(&inp, &identity, est.nu_int, &ladder).map_err(context)?;
    point.kind = PointKind::Singular;
    point.nu = Some(est.nu_int);
    point.stratum_dim = Some(tangent.invariant_dim);
    point.nondegeneracy_flag = tangent.nondegeneracy.flagged;
    point.tangent = Some(tangent);
    point.frequency = Some(est);
    Ok(point)
}

/// Points too close to the lateral edge of the slab window or too far from
/// the centre to be diagnosed.
pub fn is_excluded(x0: &Point, dim: usize) -> bool {
    let lateral = x0[..dim - 1].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let r = x0[..dim].iter().map(|c| c * c).sum::<f64>().sqrt();
    lateral > 1.0 - 0.05 || r > 0.45
}

/// Ladder top needed for six rungs above the floor `4h`.
pub fn min_window(spacing: f64) -> f64 {
    4.0 * spacing * 2f64.powf(5.0 / 4.0)
}

/// Merge frontier points closer than `tol`, keeping the first of each cluster.
pub fn dedupe(points: &[FrontierPoint], tol: f64) -> Vec<FrontierPoint> {
    let mut out: Vec<FrontierPoint> = Vec::new();
    for p in points {
        let close = out.iter().any(|q| {
            (0..3)
                .map(|k| (p.location[k] - q.location[k]).powi(2))
                .sum::<f64>()
                .sqrt()
                < tol
        });
        if !close {
            out.push(p.clone());
        }
    }
    out
}

/// Classification of every admissible frontier point, in input order.
pub fn classify_all(
    points: &[FrontierPoint],
    u: &ScalarField,
    spec: &ProblemSpec,
    opts: &ClassifyOptions,
) -> Result<(Vec<FreeBoundaryPoint>, Vec<Point>)> {
    let n = spec.dim();
    let need = min_window(spec.grid.spacing());
    let (keep, excluded): (Vec<&FrontierPoint>, Vec<&FrontierPoint>) = points
        .iter()
        .partition(|p| !is_excluded(&p.location, n) && window_radius(&p.location, n, 1.0) >= need);
    let classified = keep
        .par_iter()
        .map(|p| classify_point(&p.location, u, spec, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok((classified, excluded.iter().map(|p| p.location).collect()))
}

#[derive(Clone, Debug, Serialize)]
pub struct Stratum {
    pub nu: usize,
    pub d: usize,
    pub count: usize,
    pub points: Vec<Point>,
    /// Largest distance from the points to their total-least-squares line in
    /// the slab; reported for `n = 3`, `d = 1`.
    pub line_fit_residual: Option<f64>,
}

/// Group singular points by `(ν, d)`.
pub fn stratify(points: &[FreeBoundaryPoint]) -> Vec<Stratum> {
    let mut groups: BTreeMap<(usize, usize), Vec<Point>> = BTreeMap::new();
    for p in points {
        if let (PointKind::Singular, Some(nu), Some(d)) = (p.kind, p.nu, p.stratum_dim) {
            groups.entry((nu, d)).or_default().push(p.location);
        }
    }
    groups
        .into_iter()
        .map(|((nu, d), pts)| {
            let dim3 = points.first().and_then(|p| p.tangent.as_ref().map(|t| t.dim())) == Some(3);
            let line = if dim3 && d == 1 && pts.len() >= 2 { Some(line_fit_residual(&pts)) } else { None };
            Stratum {
                nu,
                d,
                count: pts.len(),
                points: pts,
                line_fit_residual: line,
            }
        })
        .collect()
}

/// Max distance of slab points `(x1, x2)` to their principal axis.
pub fn line_fit_residual(pts: &[Point]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p[0]).sum::<f64>() / n,
        pts.iter().map(|p| p[1]).sum::<f64>() / n,
    );
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (c, s) = (theta.cos(), theta.sin());
    pts.iter()
        .map(|p| ((p[0] - mx) * -s + (p[1] - my) * c).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(grid: &Grid, f: impl Fn(&Point) -> f64) -> ScalarField {
        ScalarField::from_fn(grid, f)
    }

    #[test]
    fn contact_examples() {
        let g = Grid::new(2, 33).unwrap();
        let zero = Expr::Num(0.0);
        let c = extract_contact_set(&field(&g, |_| 0.0), &zero, None);
        assert_eq!(c.count(), c.slab_nodes.len());
        assert!(extract_free_boundary(&c).is_empty());
        let c = extract_contact_set(&field(&g, |_| 1.0), &zero, None);
        assert_eq!(c.count(), 0);
        assert!(extract_free_boundary(&c).is_empty());
        let c = extract_contact_set(&field(&g, |x| x[0].max(0.0).powi(2)), &zero, Some(1e-6));
        for (k, &i) in c.slab_nodes.iter().enumerate() {
            assert_eq!(c.mask[k], g.node(i)[0] <= 1e-3);
        }
        let fb = extract_free_boundary(&c);
        assert_eq!(fb.len(), 1);
        assert!(fb[0].location[0].abs() <= g.spacing().powi(2));
    }

    #[test]
    fn sign_change_crossing() {
        let g = Grid::new(2, 33).unwrap();
        let c = extract_contact_set(&field(&g, |x| x[0] - 0.1), &Expr::Num(0.0), None);
        let fb = extract_free_boundary(&c);
        assert_eq!(fb.len(), 1);
        assert!((fb[0].location[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn strata_and_line_fit() {
        assert!(stratify(&[]).is_empty());
        let p = FreeBoundaryPoint {
            location: [0.1, 0.0, 0.0],
            kind: PointKind::Singular,
            nu: Some(2),
            stratum_dim: Some(0),
            tangent: None,
            tangential_gradient: 0.0,
            frequency: None,
            nondegeneracy_flag: false,
        };
        let s = stratify(&[p]);
        assert_eq!((s[0].nu, s[0].d, s[0].count), (2, 0, 1));
        let pts = [[0.0, -0.2, 0.0], [0.001, 0.0, 0.0], [0.0, 0.2, 0.0]];
        assert!(line_fit_residual(&pts) < 1e-3);
    }

    #[test]
    fn exclusions() {
        assert!(is_excluded(&[0.5, 0.0, 0.0], 2));
        assert!(!is_excluded(&[0.3, 0.0, 0.0], 2));
        assert!(is_excluded(&[0.3, 0.96, 0.0], 3));
    }
}
