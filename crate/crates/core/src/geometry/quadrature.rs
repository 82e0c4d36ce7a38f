use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "rho", rename_all = "snake_case")]
pub enum Target {
    Hemisphere(f64),
    Halfball(f64),
    Disk(f64),
    DiskBoundary(f64),
}

impl Target {
    /// Closed-form measure of the target set in dimension `dim`.
    pub fn measure(&self, dim: usize) -> f64 {
        match (*self, dim) {
            (Target::Hemisphere(r), 2) => PI * r,
            (Target::Hemisphere(r), _) => 2.0 * PI * r * r,
            (Target::Halfball(r), 2) => PI * r * r / 2.0,
            (Target::Halfball(r), _) => 2.0 * PI * r.powi(3) / 3.0,
            (Target::Disk(r), 2) => 2.0 * r,
            (Target::Disk(r), _) => PI * r * r,
            (Target::DiskBoundary(_), 2) => 2.0,
            (Target::DiskBoundary(r), _) => 2.0 * PI * r,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub target: Target,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Sequential weighted sum; the fixed order keeps results reproducible.
    pub fn integrate(&self, mut f: impl FnMut(&Point) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// Like [`integrate`](Self::integrate) for fallible integrands.
    pub fn try_integrate(&self, mut f: impl FnMut(&Point) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(x)?;
        }
        Ok(acc)
    }
}

type NodesWeights = Arc<(Vec<f64>, Vec<f64>)>;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> NodesWeights {
    static CACHE: OnceLock<Mutex<HashMap<usize, NodesWeights>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("gauss cache poisoned").get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    cache
        .lock()
        .expect("gauss cache poisoned")
        .insert(n, rule.clone());
    rule
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Gauss–Legendre mapped to `[a, b]`.
fn gauss_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

fn check_radius(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain(format!("radius {rho} outside (0, 1]")));
    }
    Ok(())
}

/// Rule on `(∂B_ρ)^+`: Gauss–Legendre in angle for `n = 2`; Gauss–Legendre in
/// `x_n/ρ` times uniform azimuth for `n = 3`.
pub fn hemisphere_quadrature(dim: usize, rho: f64, angular_count: usize) -> Result<QuadratureRule> {
    check_radius(rho)?;
    if angular_count < 16 {
        return Err(Error::Domain(format!("angular_count {angular_count} below 16")));
    }
    Ok(hemisphere_unchecked(dim, rho, angular_count))
}

fn hemisphere_unchecked(dim: usize, rho: f64, angular_count: usize) -> QuadratureRule {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if dim == 2 {
        for (theta, w) in gauss_on(angular_count, 0.0, PI) {
            nodes.push([rho * theta.cos(), rho * theta.sin(), 0.0]);
            weights.push(rho * w);
        }
    } else {
        let polar = angular_count.div_ceil(2);
        let dphi = 2.0 * PI / angular_count as f64;
        for (t, wt) in gauss_on(polar, 0.0, 1.0) {
            let s = (1.0 - t * t).sqrt();
            for k in 0..angular_count {
                let phi = (k as f64 + 0.5) * dphi;
                nodes.push([rho * s * phi.cos(), rho * s * phi.sin(), rho * t]);
                weights.push(rho * rho * wt * dphi);
            }
        }
    }
    QuadratureRule {
        nodes,
        weights,
        target: Target::Hemisphere(rho),
    }
}

/// Angular count used for a layer of radius `r` on a grid of spacing `h`.
pub fn angular_count_for(r: f64, h: f64) -> usize {
    64usize.max((4.0 * r / h).ceil() as usize)
}

/// Rule on `B_ρ^+`: composite Simpson in the radius over hemisphere layers.
pub fn halfball_quadrature(dim: usize, rho: f64, h_grid: f64) -> Result<QuadratureRule> {
    check_radius(rho)?;
    let mut intervals = 16usize.max((2.0 * rho / h_grid).ceil() as usize);
    intervals += intervals % 2;
    halfball_with(dim, rho, intervals, angular_count_for(rho, h_grid))
}

/// Half-ball rule with explicit radial interval count (even) and angular count.
pub fn halfball_with(dim: usize, rho: f64, intervals: usize, angular: usize) -> Result<QuadratureRule> {
    check_radius(rho)?;
    if intervals < 2 || intervals % 2 == 1 {
        return Err(Error::Domain(format!("radial interval count {intervals} must be even")));
    }
    let dr = rho / intervals as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    // the r = 0 layer has zero measure
    for k in 1..=intervals {
        let r = k as f64 * dr;
        let simpson = if k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let layer = hemisphere_unchecked(dim, r, angular.max(16));
        let scale = simpson * dr / 3.0;
        nodes.extend(layer.nodes);
        weights.extend(layer.weights.into_iter().map(|w| w * scale));
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        target: Target::Halfball(rho),
    })
}

/// Rule on `B'_ρ`: Gauss–Legendre on `[-ρ,0]` and `[0,ρ]` for `n = 2`; polar
/// Gauss–Legendre times uniform azimuth for `n = 3`.
pub fn disk_quadrature(dim: usize, rho: f64, h_grid: f64) -> Result<QuadratureRule> {
    check_radius(rho)?;
    disk_with(dim, rho, angular_count_for(rho, h_grid))
}

pub fn disk_with(dim: usize, rho: f64, count: usize) -> Result<QuadratureRule> {
    check_radius(rho)?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if dim == 2 {
        for (a, b) in [(-rho, 0.0), (0.0, rho)] {
            for (x, w) in gauss_on(count, a, b) {
                nodes.push([x, 0.0, 0.0]);
                weights.push(w);
            }
        }
    } else {
        let dphi = 2.0 * PI / count as f64;
        for (r, wr) in gauss_on(count.div_ceil(2), 0.0, rho) {
            for k in 0..count {
                let phi = (k as f64 + 0.5) * dphi;
                nodes.push([r * phi.cos(), r * phi.sin(), 0.0]);
                weights.push(r * wr * dphi);
            }
        }
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        target: Target::Disk(rho),
    })
}

/// Rule on `∂B'_ρ`: the two endpoints for `n = 2`, a uniform circle for `n = 3`.
pub fn disk_boundary_quadrature(dim: usize, rho: f64, count: usize) -> Result<QuadratureRule> {
    check_radius(rho)?;
    let (nodes, weights) = if dim == 2 {
        (vec![[-rho, 0.0, 0.0], [rho, 0.0, 0.0]], vec![1.0, 1.0])
    } else {
        let dphi = 2.0 * PI / count as f64;
        (0..count)
            .map(|k| {
                let phi = (k as f64 + 0.5) * dphi;
                ([rho * phi.cos(), rho * phi.sin(), 0.0], rho * dphi)
            })
            .unzip()
    };
    Ok(QuadratureRule {
        nodes,
        weights,
        target: Target::DiskBoundary(rho),
    })
}
