//! Composite procedures shared by the runner and the acceptance suite:
//! diagnosing a solved field at a slab point and manufactured convergence
//! studies.

use serde::Serialize;

use crate::blowup::{estimate_frequency, fit_tangent, FrequencyEstimate, TangentPolynomial};
use crate::diagnostics::{
    check_almost_monotone, profile, DiagnosticInput, FrequencyProfile, MonotoneReport, ProfileOptions, RadiusLadder,
    TangentRef,
};
use crate::error::{Error, Result};
use crate::fields::{CoefficientField, ProblemSpec, ScalarField};
use crate::freeboundary::{extract_contact_set, extract_free_boundary, spectral_norm, window_radius};
use crate::geometry::Grid;
use crate::manufactured::{log_solution_w, smooth_harmonic, AnalyticField};
use crate::solver::solve_linear_mixed_with;
use crate::taylor::normalize_at;
use crate::Point;

/// Per-rung-pair tolerance of the almost-monotonicity checks.
pub const MONOTONE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct Diagnosis {
    pub base_point: Point,
    pub profile: FrequencyProfile,
    pub estimate: Option<FrequencyEstimate>,
    /// Exponent of the Weiss and Monneau functionals: the integer frequency
    /// clamped to `[1, κ]`, or `κ` without an estimate.
    pub nu: usize,
    /// Degree-`ν` least-squares tangent, the Monneau reference.
    pub tangent: Option<TangentPolynomial>,
    pub slack: f64,
    pub almgren: MonotoneReport,
    pub weiss: MonotoneReport,
    pub monneau: Option<MonotoneReport>,
    /// Rungs where the surface–volume identity misses its budget.
    pub identity_failures: Vec<usize>,
}

impl Diagnosis {
    pub fn monotone_pass(&self) -> bool {
        self.almgren.pass && self.weiss.pass && self.monneau.as_ref().is_none_or(|m| m.pass)
    }
}

/// Normalize `u` at the slab point `x0`, profile it on the geometric ladder
/// below `rho_max` (lowered to keep the recentred balls inside the grid), estimate the frequency, fit the tangent of that degree and
/// run the Almgren, Weiss and Monneau checks with the input's slack constant.
pub fn diagnose(
    spec: &ProblemSpec,
    u: &ScalarField,
    x0: &Point,
    rho_max: f64,
    rungs: Option<usize>,
) -> Result<Diagnosis> {
    let np = normalize_at(spec, u, x0)?;
    let coarse = np.coarsened();
    let inp = DiagnosticInput::from_normalized(&np, coarse.as_ref());
    let top = rho_max.min(window_radius(x0, spec.dim(), spectral_norm(&np.map, spec.dim())));
    let ladder = RadiusLadder::geometric(top, inp.floor(), rungs)?;
    let kappa = spec.kappa;
    let first = profile(
        &inp,
        &ladder,
        &ProfileOptions {
            identity_budget: false,
            volume: false,
            ..Default::default()
        },
    )?;
    let estimate = estimate_frequency(&first).ok();
    let nu = estimate.as_ref().map_or(kappa, |e| e.nu_int.clamp(1, kappa));
    let a0 = inp.a.eval(&[0.0; 3]);
    let tangent = fit_tangent(&inp, &a0, nu, &ladder).ok();
    let opts = ProfileOptions {
        weiss_nu: vec![nu as f64],
        tangents: tangent
            .iter()
            .map(|t| TangentRef {
                label: format!("tangent_{nu}"),
                nu: nu as f64,
                poly: t.coefficients.clone(),
            })
            .collect(),
        ..Default::default()
    };
    let prof = profile(&inp, &ladder, &opts)?;
    let c = prof.slack_constant;
    let rho = &prof.ladder.rho;
    let almgren = check_almost_monotone(&prof.almgren_series(c), rho, 0.0, MONOTONE_TOL);
    let weiss = check_almost_monotone(&prof.weiss_series(0, c), rho, 0.0, MONOTONE_TOL);
    let monneau = (!prof.monneau.is_empty())
        .then(|| check_almost_monotone(&prof.monneau_series(0, c), rho, 0.0, MONOTONE_TOL));
    Ok(Diagnosis {
        base_point: *x0,
        estimate,
        nu,
        identity_failures: prof.identity_failures(),
        tangent,
        slack: c,
        almgren,
        weiss,
        monneau,
        profile: prof,
    })
}

/// Free-boundary point of `u` closest to the origin, if any.
pub fn nearest_free_boundary_point(spec: &ProblemSpec, u: &ScalarField) -> Option<Point> {
    let contact = extract_contact_set(u, &spec.obstacle, None);
    extract_free_boundary(&contact)
        .into_iter()
        .map(|p| p.location)
        .min_by(|a, b| norm(a).total_cmp(&norm(b)))
}

fn norm(x: &Point) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

type FluxFn = Box<dyn Fn(&Point) -> f64 + Sync>;

/// Manufactured reference solutions with known slab flux.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceCase {
    /// `x_1 + 2 x_n`, reproduced exactly by the discretization.
    Linear,
    /// `e^{x_1}(cos x_n + sin x_n)`.
    Smooth,
    /// The log-singular field `w` with `p = 2`, `κ₊ = 1`.
    LogSolution,
}

impl ConvergenceCase {
    fn field(self, dim: usize) -> Result<(AnalyticField, FluxFn)> {
        Ok(match self {
            ConvergenceCase::Linear => (
                AnalyticField::new(
                    dim,
                    move |x| x[0] + 2.0 * x[dim - 1],
                    move |_| {
                        let mut g = [0.0; 3];
                        g[0] = 1.0;
                        g[dim - 1] = 2.0;
                        g
                    },
                    "x1 + 2 xn",
                    "analytic",
                ),
                Box::new(|_| 2.0),
            ),
            ConvergenceCase::Smooth => (smooth_harmonic(dim), Box::new(|x| x[0].exp())),
            ConvergenceCase::LogSolution => (log_solution_w(dim, 2, 1.0)?, Box::new(|x| x[0].max(0.0))),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub cells_per_axis: usize,
    pub spacing: f64,
    pub error: f64,
    /// `log₂(e_{k−1}/e_k)` against the previous level.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub case: ConvergenceCase,
    pub rows: Vec<ConvergenceRow>,
    /// All errors at the rounding floor; orders are meaningless.
    pub exact: bool,
    /// Smallest consecutive order, `None` when exact.
    pub min_order: Option<f64>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,m,h,error,order\n");
        let name = serde_json::to_value(self.case).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        for r in &self.rows {
            let order = match (self.exact, r.order) {
                (true, _) => "exact".to_string(),
                (false, Some(o)) => format!("{o:.16e}"),
                (false, None) => String::new(),
            };
            out.push_str(&format!("{name},{},{:.16e},{:.16e},{order}\n", r.cells_per_axis, r.spacing, r.error));
        }
        out
    }
}

/// Solve the linear mixed problem with the case's flux and Dirichlet data at
/// each level and report nodal max errors and observed orders.
pub fn convergence_study(case: ConvergenceCase, dim: usize, levels: &[usize]) -> Result<ConvergenceTable> {
    if levels.len() < 3 {
        return Err(Error::Config("convergence study needs at least 3 levels".into()));
    }
    let (exact, flux) = case.field(dim)?;
    let a = CoefficientField::identity(dim);
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &m in levels {
        let grid = Grid::new(dim, m)?;
        let u = solve_linear_mixed_with(&flux, |x| exact.eval(x), &a, &grid)?;
        let reference = ScalarField::from_fn(&grid, |x| exact.eval(x));
        let error = u.max_abs_diff(&reference);
        let order = rows.last().map(|prev| (prev.error / error).log2());
        rows.push(ConvergenceRow {
            cells_per_axis: m,
            spacing: grid.spacing(),
            error,
            order,
        });
    }
    let is_exact = rows.iter().all(|r| r.error <= 1e-10);
    let min_order = if is_exact {
        None
    } else {
        rows.iter().filter_map(|r| r.order).reduce(f64::min)
    };
    Ok(ConvergenceTable {
        case,
        rows,
        exact: is_exact,
        min_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_case_is_exact() {
        let t = convergence_study(ConvergenceCase::Linear, 2, &[9, 17, 33]).unwrap();
        assert!(t.exact, "{:?}", t.rows);
        assert!(t.to_csv().lines().nth(1).unwrap().ends_with("exact"));
    }

    #[test]
    fn too_few_levels() {
        assert!(convergence_study(ConvergenceCase::Smooth, 2, &[9, 17]).is_err());
    }
}
