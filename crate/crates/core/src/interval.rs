//! Explicit monotone finite-volume solver for one subinterval with singular
//! (`u = +inf` / `u = -inf`), Dirichlet or free boundaries.
//!
//! Singular boundaries are realized by a fixed large ghost state. The flux
//! through each boundary interface is recorded as the boundary trace; it is
//! the same number used to update the adjacent cell, so mass leaving the
//! interval through a boundary is accounted exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flux::{FluxModel, NumericalFlux};

/// Guards the time step when the flux is identically zero.
pub const EPS_FLOOR: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("CFL violated: dt * L / dx = {ratio} > 1")]
    Cfl { ratio: f64 },
    #[error("non-finite value {value} in cell {cell} at t = {time}")]
    BlowUp { cell: usize, value: f64, time: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("field and width arrays differ in length ({values} vs {widths})")]
    Shape { values: usize, widths: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    SingularPlus,
    SingularMinus,
    Free,
    Dirichlet,
}

impl BoundaryKind {
    pub fn is_singular(self) -> bool {
        matches!(self, BoundaryKind::SingularPlus | BoundaryKind::SingularMinus)
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::SingularPlus => "singular_plus",
            BoundaryKind::SingularMinus => "singular_minus",
            BoundaryKind::Free => "free",
            BoundaryKind::Dirichlet => "dirichlet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    pub ghost_value: f64,
}

impl BoundarySpec {
    pub fn singular_plus(m_ghost: f64) -> Self {
        BoundarySpec { kind: BoundaryKind::SingularPlus, ghost_value: m_ghost.abs() }
    }

    pub fn singular_minus(m_ghost: f64) -> Self {
        BoundarySpec { kind: BoundaryKind::SingularMinus, ghost_value: -m_ghost.abs() }
    }

    pub fn free() -> Self {
        BoundarySpec { kind: BoundaryKind::Free, ghost_value: 0.0 }
    }

    pub fn dirichlet(value: f64) -> Self {
        BoundarySpec { kind: BoundaryKind::Dirichlet, ghost_value: value }
    }

    /// Singular spec with the sign of `sign`.
    pub fn singular(sign: f64, m_ghost: f64) -> Self {
        if sign > 0.0 {
            Self::singular_plus(m_ghost)
        } else {
            Self::singular_minus(m_ghost)
        }
    }

    /// Same kind, ghost magnitude replaced (free specs are unchanged).
    pub fn with_ghost(self, m_ghost: f64) -> Self {
        match self.kind {
            BoundaryKind::SingularPlus => Self::singular_plus(m_ghost),
            BoundaryKind::SingularMinus => Self::singular_minus(m_ghost),
            _ => self,
        }
    }

    #[inline]
    pub fn ghost(&self, adjacent: f64) -> f64 {
        match self.kind {
            BoundaryKind::Free => adjacent,
            _ => self.ghost_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dx: f64,
    pub cfl: f64,
    /// Ghost magnitude for singular boundaries; `None` selects
    /// [`SolverConfig::default_ghost`].
    pub m_ghost: Option<f64>,
    pub trace_window: usize,
    pub tol: f64,
    pub scheme: NumericalFlux,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { dx: 2e-3, cfl: 0.9, m_ghost: None, trace_window: 1, tol: 1e-6, scheme: NumericalFlux::Godunov }
    }
}

impl SolverConfig {
    pub fn with_dx(dx: f64) -> Self {
        SolverConfig { dx, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(SolverError::Config(format!("dx must be positive, got {}", self.dx)));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(SolverError::Config(format!("cfl must lie in (0, 1), got {}", self.cfl)));
        }
        if let Some(m) = self.m_ghost {
            if !(m > 0.0 && m.is_finite()) {
                return Err(SolverError::Config(format!("ghost value must be positive, got {m}")));
            }
        }
        if self.trace_window == 0 {
            return Err(SolverError::Config("trace_window must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(SolverError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// `max(saturation_threshold, 10 max|u0|, 1e3)`, falling back to `1e3`
    /// for families without asymptotic limits.
    pub fn default_ghost(model: &FluxModel, max_abs_u0: f64) -> f64 {
        let sat = if model.saturation_threshold.is_finite() { model.saturation_threshold } else { 0.0 };
        sat.max(10.0 * max_abs_u0).max(1e3)
    }

    pub fn ghost_for(&self, model: &FluxModel, max_abs_u0: f64) -> f64 {
        self.m_ghost.unwrap_or_else(|| Self::default_ghost(model, max_abs_u0))
    }

    /// `cfl * min_width / max(L, EPS_FLOOR)`.
    pub fn dt(&self, model: &FluxModel, min_width: f64) -> f64 {
        self.cfl * min_width / model.lipschitz.max(EPS_FLOOR)
    }
}

/// Cells of one interval (widths may vary from cell to cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellArray {
    pub x_left: f64,
    pub widths: Vec<f64>,
    pub values: Vec<f64>,
}

impl CellArray {
    /// `n` uniform cells on `[a, b]` initialized from `f` at the centers.
    pub fn uniform(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let h = (b - a) / n as f64;
        let values = (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).collect();
        CellArray { x_left: a, widths: vec![h; n], values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        let mut x = self.x_left;
        self.widths
            .iter()
            .map(|w| {
                let c = x + 0.5 * w;
                x += w;
                c
            })
            .collect()
    }

    pub fn min_width(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().zip(&self.widths).map(|(v, w)| v * w).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().zip(&self.widths).map(|(v, w)| v.abs() * w).sum()
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        l1_distance(&self.values, other, &self.widths)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn l1_distance(a: &[f64], b: &[f64], widths: &[f64]) -> f64 {
    a.iter().zip(b).zip(widths).map(|((x, y), w)| (x - y).abs() * w).sum()
}

/// Numerical fluxes through the two boundary interfaces of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFluxes {
    pub left: f64,
    pub right: f64,
}

/// Boundary interface fluxes for the current field, without stepping.
pub fn boundary_fluxes(
    values: &[f64],
    left: &BoundarySpec,
    right: &BoundarySpec,
    model: &FluxModel,
    scheme: NumericalFlux,
) -> BoundaryFluxes {
    let first = values[0];
    let last = values[values.len() - 1];
    BoundaryFluxes {
        left: scheme.eval(model, left.ghost(first), first),
        right: scheme.eval(model, last, right.ghost(last)),
    }
}

/// One forward-Euler update of `values` into `out` with time step `dt`.
#[allow(clippy::too_many_arguments)]
pub fn step_into(
    values: &[f64],
    widths: &[f64],
    left: &BoundarySpec,
    right: &BoundarySpec,
    model: &FluxModel,
    scheme: NumericalFlux,
    dt: f64,
    out: &mut [f64],
) -> Result<BoundaryFluxes, SolverError> {
    let n = values.len();
    if widths.len() != n || out.len() != n {
        return Err(SolverError::Shape { values: n, widths: widths.len() });
    }
    if n == 0 {
        return Err(SolverError::Config("interval has no cells".into()));
    }
    let fluxes = boundary_fluxes(values, left, right, model, scheme);
    let mut flux_in = fluxes.left;
    for i in 0..n {
        let flux_out = if i + 1 < n { scheme.eval(model, values[i], values[i + 1]) } else { fluxes.right };
        let v = values[i] - dt / widths[i] * (flux_out - flux_in);
        if !v.is_finite() {
            return Err(SolverError::BlowUp { cell: i, value: v, time: f64::NAN });
        }
        out[i] = v;
        flux_in = flux_out;
    }
    Ok(fluxes)
}

fn check_cfl(dt: f64, model: &FluxModel, min_width: f64) -> Result<(), SolverError> {
    let ratio = dt * model.lipschitz / min_width;
    if ratio > 1.0 + 1e-12 {
        return Err(SolverError::Cfl { ratio });
    }
    Ok(())
}

/// One step at the configured CFL time step. Returns the new field and the
/// left and right boundary fluxes.
pub fn step(
    field: &CellArray,
    specs: (&BoundarySpec, &BoundarySpec),
    model: &FluxModel,
    config: &SolverConfig,
) -> Result<(CellArray, f64, f64), SolverError> {
    config.validate()?;
    let dt = config.dt(model, field.min_width());
    check_cfl(dt, model, field.min_width())?;
    let mut out = field.clone();
    let f = step_into(&field.values, &field.widths, specs.0, specs.1, model, config.scheme, dt, &mut out.values)?;
    Ok((out, f.left, f.right))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One trace sample: the boundary flux averaged over `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t0: f64,
    pub t1: f64,
    pub value: f64,
}

/// Time series of boundary fluxes, averaged over `window` steps per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecorder {
    pub side: Side,
    pub window: usize,
    pub samples: Vec<TraceSample>,
    #[serde(skip)]
    pending: Option<(f64, f64, f64, usize)>,
}

impl TraceRecorder {
    pub fn new(side: Side, window: usize) -> Self {
        TraceRecorder { side, window: window.max(1), samples: Vec::new(), pending: None }
    }

    /// Adds the flux of one step on `[t0, t1]`.
    pub fn push(&mut self, t0: f64, t1: f64, value: f64) {
        let (start, _, integral, count) = self.pending.unwrap_or((t0, t0, 0.0, 0));
        let integral = integral + value * (t1 - t0);
        let count = count + 1;
        if count >= self.window {
            self.samples.push(TraceSample { t0: start, t1, value: average(integral, start, t1, value) });
            self.pending = None;
        } else {
            self.pending = Some((start, t1, integral, count));
        }
    }

    /// Emits a partial window, if any.
    pub fn flush(&mut self) {
        if let Some((start, end, integral, _)) = self.pending.take() {
            if end > start {
                self.samples.push(TraceSample { t0: start, t1: end, value: integral / (end - start) });
            }
        }
    }

    /// Exact integral of the piecewise-constant trace.
    pub fn integral(&self) -> f64 {
        self.samples.iter().map(|s| s.value * (s.t1 - s.t0)).sum()
    }

    /// Worst violation of the admissible trace range for a boundary of the
    /// given kind on this side (zero when all samples are admissible).
    pub fn bound_violation(&self, kind: BoundaryKind, model: &FluxModel) -> f64 {
        let (lo, hi) = trace_bounds(self.side, kind, model);
        self.samples.iter().map(|s| (lo - s.value).max(s.value - hi).max(0.0)).fold(0.0, f64::max)
    }
}

fn average(integral: f64, t0: f64, t1: f64, fallback: f64) -> f64 {
    if t1 > t0 {
        integral / (t1 - t0)
    } else {
        fallback
    }
}

/// Admissible range of a boundary flux trace.
///
/// A singular `+inf` condition on the left forces the trace into
/// `[limsup_{+inf} H, sup H]`, on the right into `[inf H, liminf_{+inf} H]`;
/// `-inf` conditions mirror this with the limits at `-inf`.
pub fn trace_bounds(side: Side, kind: BoundaryKind, model: &FluxModel) -> (f64, f64) {
    match (side, kind) {
        (Side::Left, BoundaryKind::SingularPlus) => (model.limsup_pinf, model.sup_h),
        (Side::Left, BoundaryKind::SingularMinus) => (model.inf_h, model.liminf_minf),
        (Side::Right, BoundaryKind::SingularPlus) => (model.inf_h, model.liminf_pinf),
        (Side::Right, BoundaryKind::SingularMinus) => (model.limsup_minf, model.sup_h),
        _ => (model.inf_h, model.sup_h),
    }
}

/// One initial-boundary value problem on an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalProblem {
    pub field: CellArray,
    pub left: BoundarySpec,
    pub right: BoundarySpec,
    pub time: f64,
}

impl IntervalProblem {
    pub fn new(field: CellArray, left: BoundarySpec, right: BoundarySpec) -> Self {
        IntervalProblem { field, left, right, time: 0.0 }
    }

    pub fn has_singular_boundary(&self) -> bool {
        self.left.kind.is_singular() || self.right.kind.is_singular()
    }

    pub fn with_ghost(&self, m_ghost: f64) -> Self {
        IntervalProblem { left: self.left.with_ghost(m_ghost), right: self.right.with_ghost(m_ghost), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRun {
    pub field: CellArray,
    pub time: f64,
    pub dt: f64,
    pub steps: usize,
    pub left_trace: TraceRecorder,
    pub right_trace: TraceRecorder,
    /// `(t, values)` at the requested snapshot times (hit exactly), starting
    /// with the initial field.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Extremes of the field over the whole run.
    pub min_value: f64,
    pub max_value: f64,
}

/// Steps `problem` to `t_end`. The time step is the CFL step, shortened to
/// land exactly on every snapshot time and on `t_end`.
pub fn run(
    problem: &IntervalProblem,
    model: &FluxModel,
    config: &SolverConfig,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<IntervalRun, SolverError> {
    config.validate()?;
    if !(t_end > problem.time) {
        return Err(SolverError::Config(format!("t_end = {t_end} must exceed t = {}", problem.time)));
    }
    let field = &problem.field;
    let dt_cfl = config.dt(model, field.min_width());
    check_cfl(dt_cfl, model, field.min_width())?;

    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > problem.time && t < t_end).collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.push(t_end);

    let mut current = field.values.clone();
    let mut next = current.clone();
    let mut left_trace = TraceRecorder::new(Side::Left, config.trace_window);
    let mut right_trace = TraceRecorder::new(Side::Right, config.trace_window);
    let mut snapshots = vec![(problem.time, current.clone())];
    let (mut min_value, mut max_value) = extremes(&current);
    let mut t = problem.time;
    let mut steps = 0;
    for &target in &targets {
        while t < target {
            let dt = dt_cfl.min(target - t);
            // land exactly on the target when the remainder is round-off
            let t_next = if target - (t + dt) <= 1e-12 * target.abs().max(1.0) { target } else { t + dt };
            let f = step_into(
                &current,
                &field.widths,
                &problem.left,
                &problem.right,
                model,
                config.scheme,
                t_next - t,
                &mut next,
            )
            .map_err(|e| match e {
                SolverError::BlowUp { cell, value, .. } => SolverError::BlowUp { cell, value, time: t },
                other => other,
            })?;
            left_trace.push(t, t_next, f.left);
            right_trace.push(t, t_next, f.right);
            std::mem::swap(&mut current, &mut next);
            let (lo, hi) = extremes(&current);
            min_value = min_value.min(lo);
            max_value = max_value.max(hi);
            t = t_next;
            steps += 1;
        }
        snapshots.push((t, current.clone()));
    }
    left_trace.flush();
    right_trace.flush();
    Ok(IntervalRun {
        field: CellArray { x_left: field.x_left, widths: field.widths.clone(), values: current },
        time: t,
        dt: dt_cfl,
        steps,
        left_trace,
        right_trace,
        snapshots,
        min_value,
        max_value,
    })
}

fn extremes(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Reruns the problem with the ghost magnitude doubled and returns the L1
/// distance between the two final fields. Problems without a singular
/// boundary return zero.
pub fn ghost_stability_check(
    problem: &IntervalProblem,
    model: &FluxModel,
    config: &SolverConfig,
    t_end: f64,
) -> Result<f64, SolverError> {
    if !problem.has_singular_boundary() {
        return Ok(0.0);
    }
    let m = config.ghost_for(model, problem.field.max_abs());
    let base = run(&problem.with_ghost(m), model, config, t_end, &[])?;
    let doubled = run(&problem.with_ghost(2.0 * m), model, config, t_end, &[])?;
    Ok(base.field.l1_distance(&doubled.field.values))
}
