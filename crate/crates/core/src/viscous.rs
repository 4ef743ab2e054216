//! Explicit parabolic reference solver for `u_t + H(u)_x = eps u_xx` on
//! one interval with Dirichlet or free ends.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flux::{FluxFamily, FluxModel};
use crate::interval::{self, BoundarySpec, CellArray, IntervalProblem, SolverConfig, SolverError};
use crate::measure::MeasureState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViscousError {
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Stability { dt: f64, bound: f64 },
    #[error("invalid viscous configuration: {0}")]
    Config(String),
    #[error("levels {i} and {j} are out of order by {excess} in cell {cell}")]
    Ordering { i: usize, j: usize, cell: usize, excess: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViscousBoundary {
    Dirichlet(f64),
    Free,
}

impl ViscousBoundary {
    fn value(&self) -> Option<f64> {
        match *self {
            ViscousBoundary::Dirichlet(m) => Some(m),
            ViscousBoundary::Free => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscousConfig {
    pub eps: f64,
    pub left: ViscousBoundary,
    pub right: ViscousBoundary,
    pub cfl: f64,
    /// Fixed time step; `None` uses `cfl` times the stability bound.
    pub dt: Option<f64>,
    /// Width of the layer next to a Dirichlet end where the initial data is
    /// blended to the boundary value; `None` uses `sqrt(eps)`.
    pub blend_width: Option<f64>,
    /// Kernel width used to smooth piecewise-linear fluxes.
    pub mollify_width: f64,
}

impl ViscousConfig {
    pub fn new(eps: f64, left: ViscousBoundary, right: ViscousBoundary) -> Self {
        ViscousConfig { eps, left, right, cfl: 0.9, dt: None, blend_width: None, mollify_width: 1e-2 }
    }

    /// `1 / (L / dx + 4 eps / dx^2)`: the half-cell distance to a Dirichlet
    /// end doubles the diffusion coefficient of the first cell.
    pub fn stability_bound(&self, lipschitz: f64, dx: f64) -> f64 {
        1.0 / (lipschitz / dx + 4.0 * self.eps / (dx * dx))
    }

    fn validate(&self) -> Result<(), ViscousError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(ViscousError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(ViscousError::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.mollify_width >= 0.0) {
            return Err(ViscousError::Config("mollify_width must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Flux used by the parabolic solver: `H` itself for smooth families, a
/// mollified copy for piecewise-linear ones.
#[derive(Debug, Clone)]
pub struct ViscousFlux {
    model: FluxModel,
    width: f64,
    offset: f64,
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

impl ViscousFlux {
    pub fn new(model: &FluxModel, mollify_width: f64) -> Self {
        let width = match model.family {
            FluxFamily::BoundedPiecewiseLinear { .. } => mollify_width,
            _ => 0.0,
        };
        let mut f = ViscousFlux { model: model.clone(), width, offset: 0.0 };
        f.offset = f.raw(0.0);
        f
    }

    fn raw(&self, u: f64) -> f64 {
        if self.width == 0.0 {
            return self.model.eval(u);
        }
        // kernel (15/16)(1 - s^2)^2 on [-1, 1]
        let mut acc = 0.0;
        for &(s, w) in &GAUSS8 {
            let k = 15.0 / 16.0 * (1.0 - s * s) * (1.0 - s * s);
            acc += w * k * self.model.eval(u - self.width * s);
        }
        acc
    }

    /// Mollified flux shifted so that it vanishes at zero.
    pub fn eval(&self, u: f64) -> f64 {
        self.raw(u) - self.offset
    }

    pub fn is_mollified(&self) -> bool {
        self.width > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscousRun {
    pub field: CellArray,
    pub time: f64,
    pub dt: f64,
    pub steps: usize,
    pub initial: CellArray,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub min_value: f64,
    pub max_value: f64,
    /// Total variation of each snapshot, including the boundary jumps to
    /// Dirichlet values.
    pub total_variation: Vec<f64>,
}

fn blend(s: f64) -> f64 {
    // 1 at s = 0, 0 at s >= 1, C1
    if s >= 1.0 {
        0.0
    } else {
        1.0 - 3.0 * s * s + 2.0 * s * s * s
    }
}

/// Initial data with Dirichlet values blended in over `width` at each end.
pub fn blended_initial(u0: &CellArray, config: &ViscousConfig) -> CellArray {
    let width = config.blend_width.unwrap_or(config.eps.sqrt());
    let mut out = u0.clone();
    if width <= 0.0 {
        return out;
    }
    let centers = u0.centers();
    let a = u0.x_left;
    let b = a + u0.widths.iter().sum::<f64>();
    for (v, x) in out.values.iter_mut().zip(&centers) {
        if let Some(m) = config.left.value() {
            let f = blend((x - a) / width);
            *v = f * m + (1.0 - f) * *v;
        }
        if let Some(m) = config.right.value() {
            let f = blend((b - x) / width);
            *v = f * m + (1.0 - f) * *v;
        }
    }
    out
}

fn tv(values: &[f64], config: &ViscousConfig) -> f64 {
    let mut total: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if let Some(m) = config.left.value() {
        total += (values[0] - m).abs();
    }
    if let Some(m) = config.right.value() {
        total += (values[values.len() - 1] - m).abs();
    }
    total
}

/// Explicit solve with Rusanov convection and central diffusion. Dirichlet
/// ends act through a ghost state equal to the boundary value, placed half a
/// cell outside the interval for the diffusive flux.
pub fn solve_viscous(
    config: &ViscousConfig,
    model: &FluxModel,
    u0: &CellArray,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<ViscousRun, ViscousError> {
    config.validate()?;
    if u0.is_empty() {
        return Err(ViscousError::Config("empty field".into()));
    }
    if !(t_end > 0.0) {
        return Err(ViscousError::Config(format!("t_end must be positive, got {t_end}")));
    }
    let dx = u0.min_width();
    let flux = ViscousFlux::new(model, config.mollify_width);
    let lipschitz = model.lipschitz;
    let bound = config.stability_bound(lipschitz, dx);
    let dt = match config.dt {
        Some(dt) if dt > bound * (1.0 + 1e-12) => return Err(ViscousError::Stability { dt, bound }),
        Some(dt) => dt,
        None => config.cfl * bound,
    };
    let rusanov = |a: f64, b: f64| 0.5 * (flux.eval(a) + flux.eval(b)) - 0.5 * lipschitz * (b - a);
    let eps = config.eps;

    let initial = blended_initial(u0, config);
    let widths = initial.widths.clone();
    let n = widths.len();
    let mut u = initial.values.clone();
    let mut next = u.clone();
    let mut interface = vec![0.0; n + 1];

    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > 0.0 && t < t_end).collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.push(t_end);

    let mut snapshots = vec![(0.0, u.clone())];
    let mut total_variation = vec![tv(&u, config)];
    let (mut min_value, mut max_value) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &u {
        min_value = min_value.min(v);
        max_value = max_value.max(v);
    }
    let mut t = 0.0;
    let mut steps = 0;
    for &target in &targets {
        while t < target {
            let mut h = dt.min(target - t);
            if target - (t + h) <= 1e-12 * target.max(1.0) {
                h = target - t;
            }
            for (i, f) in interface.iter_mut().enumerate().take(n).skip(1) {
                let d = 0.5 * (widths[i - 1] + widths[i]);
                *f = rusanov(u[i - 1], u[i]) - eps * (u[i] - u[i - 1]) / d;
            }
            interface[0] = match config.left {
                ViscousBoundary::Dirichlet(m) => rusanov(m, u[0]) - eps * (u[0] - m) / (0.5 * widths[0]),
                ViscousBoundary::Free => flux.eval(u[0]),
            };
            interface[n] = match config.right {
                ViscousBoundary::Dirichlet(m) => rusanov(u[n - 1], m) - eps * (m - u[n - 1]) / (0.5 * widths[n - 1]),
                ViscousBoundary::Free => flux.eval(u[n - 1]),
            };
            for i in 0..n {
                let v = u[i] - h / widths[i] * (interface[i + 1] - interface[i]);
                if !v.is_finite() {
                    return Err(SolverError::BlowUp { cell: i, value: v, time: t }.into());
                }
                next[i] = v;
                min_value = min_value.min(v);
                max_value = max_value.max(v);
            }
            std::mem::swap(&mut u, &mut next);
            t = if h == target - t { target } else { t + h };
            steps += 1;
        }
        total_variation.push(tv(&u, config));
        snapshots.push((t, u.clone()));
    }
    Ok(ViscousRun {
        field: CellArray { x_left: u0.x_left, widths, values: u },
        time: t,
        dt,
        steps,
        initial,
        snapshots,
        min_value,
        max_value,
        total_variation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeSolver {
    Hyperbolic(SolverConfig),
    Viscous(ViscousConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub fields: Vec<CellArray>,
    /// Pairs checked and the largest ordering violation seen.
    pub comparisons: usize,
    pub violations: usize,
    pub worst_excess: f64,
    /// L1 distance between consecutive levels.
    pub gaps: Vec<f64>,
}

/// Solves with left boundary value `n` and right value `-p` for each level
/// and checks that raising `n` or lowering `p` never lowers the solution.
pub fn monotone_limit_probe(
    model: &FluxModel,
    u0: &CellArray,
    levels: &[(f64, f64)],
    solver: &ProbeSolver,
    t_end: f64,
    tol: f64,
) -> Result<ProbeReport, ViscousError> {
    let mut fields = Vec::with_capacity(levels.len());
    for &(n, p) in levels {
        let field = match solver {
            ProbeSolver::Hyperbolic(config) => {
                let problem = IntervalProblem::new(u0.clone(), BoundarySpec::dirichlet(n), BoundarySpec::dirichlet(-p));
                interval::run(&problem, model, config, t_end, &[])?.field
            }
            ProbeSolver::Viscous(config) => {
                let config = ViscousConfig {
                    left: ViscousBoundary::Dirichlet(n),
                    right: ViscousBoundary::Dirichlet(-p),
                    // blending would change the data between levels
                    blend_width: Some(0.0),
                    ..config.clone()
                };
                solve_viscous(&config, model, u0, t_end, &[])?.field
            }
        };
        fields.push(field);
    }
    let mut comparisons = 0;
    let mut violations = 0;
    let mut worst_excess: f64 = 0.0;
    let mut first_error = None;
    for i in 0..levels.len() {
        for j in 0..levels.len() {
            let (ni, pi) = levels[i];
            let (nj, pj) = levels[j];
            if i == j || !(nj >= ni && pj <= pi) {
                continue;
            }
            comparisons += 1;
            for (cell, (a, b)) in fields[i].values.iter().zip(&fields[j].values).enumerate() {
                let excess = a - b;
                if excess > 0.0 {
                    worst_excess = worst_excess.max(excess);
                    if excess > tol {
                        violations += 1;
                        first_error.get_or_insert(ViscousError::Ordering { i, j, cell, excess });
                    }
                }
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let gaps = fields.windows(2).map(|w| w[0].l1_distance(&w[1].values)).collect();
    Ok(ProbeReport { fields, comparisons, violations, worst_excess, gaps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub eps: f64,
    /// Boundary levels `(m1, m2)`: `+m1` next to positive atoms and `-m2`
    /// next to negative ones.
    pub levels: (f64, f64),
    pub t: f64,
    /// Sum over first-epoch intervals of the L1 distance between the
    /// viscous and hyperbolic fields.
    pub distance: f64,
    pub per_interval: Vec<f64>,
}

/// Hyperbolic and viscous fields on one interval between atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFields {
    pub hyperbolic: CellArray,
    pub viscous: CellArray,
}

/// Runs the viscous and hyperbolic solvers on every interval between atoms
/// of `state`, with boundary value `+m1` beside positive atoms, `-m2` beside
/// negative ones and free outer ends, up to time `t`.
pub fn oracle_fields(
    model: &FluxModel,
    state: &MeasureState,
    levels: (f64, f64),
    eps: f64,
    t: f64,
    hyperbolic: &SolverConfig,
) -> Result<Vec<OracleFields>, ViscousError> {
    let bps = &state.regular.breakpoints;
    let mut out = Vec::with_capacity(state.regular.blocks.len());
    for (k, block) in state.regular.blocks.iter().enumerate() {
        let field =
            CellArray { x_left: bps[k], widths: vec![block.width; block.values.len()], values: block.values.clone() };
        let side = |atom: Option<usize>| {
            atom.map(|j| if state.atoms[j].mass > 0.0 { levels.0.abs() } else { -levels.1.abs() })
        };
        let left = side(k.checked_sub(1));
        let right = side(if k < state.atoms.len() { Some(k) } else { None });
        let spec = |v: Option<f64>| v.map(BoundarySpec::dirichlet).unwrap_or_else(BoundarySpec::free);
        let vb = |v: Option<f64>| v.map(ViscousBoundary::Dirichlet).unwrap_or(ViscousBoundary::Free);
        let problem = IntervalProblem::new(field.clone(), spec(left), spec(right));
        let hyper = interval::run(&problem, model, hyperbolic, t, &[])?;
        let vcfg = ViscousConfig::new(eps, vb(left), vb(right));
        let visc = solve_viscous(&vcfg, model, &field, t, &[])?;
        out.push(OracleFields { hyperbolic: hyper.field, viscous: visc.field });
    }
    Ok(out)
}

pub fn compare_with_hyperbolic(
    model: &FluxModel,
    state: &MeasureState,
    levels: (f64, f64),
    eps: f64,
    t: f64,
    hyperbolic: &SolverConfig,
) -> Result<OracleComparison, ViscousError> {
    let fields = oracle_fields(model, state, levels, eps, t, hyperbolic)?;
    let per_interval: Vec<f64> = fields.iter().map(|f| f.hyperbolic.l1_distance(&f.viscous.values)).collect();
    Ok(OracleComparison { eps, levels, t, distance: per_interval.iter().sum(), per_interval })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::make_builtin;

    #[test]
    fn zero_flux_zero_data_stays_zero() {
        let model = make_builtin("zero", &[]).unwrap();
        let u0 = CellArray::uniform(0.0, 1.0, 50, |_| 0.0);
        let cfg = ViscousConfig::new(0.1, ViscousBoundary::Dirichlet(0.0), ViscousBoundary::Free);
        let run = solve_viscous(&cfg, &model, &u0, 0.5, &[]).unwrap();
        assert!(run.field.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn heat_equation_conserves_mass_with_free_ends() {
        let model = make_builtin("zero", &[]).unwrap();
        let u0 = CellArray::uniform(-4.0, 4.0, 400, |x| if x < 0.0 { 1.0 } else { 0.0 });
        let cfg = ViscousConfig::new(0.1, ViscousBoundary::Free, ViscousBoundary::Free);
        let run = solve_viscous(&cfg, &model, &u0, 0.5, &[0.25]).unwrap();
        assert!((run.field.integral() - u0.integral()).abs() < 1e-12);
        // erfc profile: u(0, t) = 1/2
        let mid = run.field.values[199] + run.field.values[200];
        assert!((0.5 * mid - 0.5).abs() < 1e-3);
        assert!(run.total_variation.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn max_principle_and_stability() {
        let model = make_builtin("saturating_rational", &[1.0]).unwrap();
        let u0 = CellArray::uniform(0.0, 2.0, 200, |x| (3.0 * x).sin());
        let cfg = ViscousConfig::new(0.05, ViscousBoundary::Dirichlet(2.0), ViscousBoundary::Dirichlet(-1.5));
        let run = solve_viscous(&cfg, &model, &u0, 1.0, &[]).unwrap();
        assert!(run.max_value <= 2.0 + 1e-12 && run.min_value >= -1.5 - 1e-12);
        let bad = ViscousConfig { dt: Some(1.0), ..cfg };
        assert!(matches!(solve_viscous(&bad, &model, &u0, 1.0, &[]), Err(ViscousError::Stability { .. })));
    }

    #[test]
    fn mollified_flux_keeps_bounds() {
        let model = make_builtin("bounded_piecewise_linear", &[-2.0, -1.0, 0.0, 0.0, 2.0, 1.0]).unwrap();
        let f = ViscousFlux::new(&model, 1e-2);
        assert!(f.is_mollified());
        assert_eq!(f.eval(0.0), 0.0);
        for i in 0..=400 {
            let u = -4.0 + 0.02 * i as f64;
            assert!(f.eval(u) <= model.sup_h + 1e-12 && f.eval(u) >= model.inf_h - 1e-12);
            let slope = (f.eval(u + 1e-6) - f.eval(u)) / 1e-6;
            assert!(slope <= model.lipschitz + 1e-6);
        }
        assert!((f.eval(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn blending_reaches_boundary_values() {
        let u0 = CellArray::uniform(0.0, 1.0, 100, |_| 0.0);
        let cfg = ViscousConfig {
            blend_width: Some(0.1),
            ..ViscousConfig::new(0.01, ViscousBoundary::Dirichlet(3.0), ViscousBoundary::Free)
        };
        let b = blended_initial(&u0, &cfg);
        assert!(b.values[0] > 2.9);
        assert!(b.values[20..].iter().all(|v| *v == 0.0));
        assert!(b.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn probe_orders_levels() {
        let model = make_builtin("saturating_rational", &[1.0]).unwrap();
        let u0 = CellArray::uniform(0.0, 1.0, 100, |_| 0.0);
        let levels = [(10.0, 10.0), (100.0, 10.0), (1000.0, 10.0)];
        let report =
            monotone_limit_probe(&model, &u0, &levels, &ProbeSolver::Hyperbolic(SolverConfig::with_dx(0.01)), 0.5, 0.0)
                .unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.gaps[1] < report.gaps[0]);

        let zero = make_builtin("zero", &[]).unwrap();
        let report =
            monotone_limit_probe(&zero, &u0, &levels, &ProbeSolver::Hyperbolic(SolverConfig::with_dx(0.01)), 0.5, 0.0)
                .unwrap();
        assert!(report.gaps.iter().all(|g| *g == 0.0));
    }
}
