//! Quadrature audits of a computed trajectory.
//!
//! Test functions are tensors `zeta(x, t) = alpha(x) beta(t)`. Space
//! integrals use the midpoint rule on solver cells; in time, the resulting
//! integrals are interpolated linearly between snapshots and integrated
//! exactly against the polynomial pieces of `beta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atoms::{mass_decay_bound_check, persistence_lower_bound};
use crate::epoch::Trajectory;
use crate::flux::FluxModel;
use crate::interval::IntervalRun;
use crate::measure::{total_mass, MeasureState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("unknown check {0:?}")]
    UnknownCheck(String),
    #[error("atom {0} does not exist")]
    NoAtom(usize),
    #[error("runs have different grids or snapshot times")]
    Mismatch,
    #[error("test function support [{lo}, {hi}] is not inside the domain")]
    Support { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceProfile {
    /// `1 - 3 s^2 + 2 |s|^3` with `s = (x - center) / radius`.
    Bump { center: f64, radius: f64 },
    /// `1 - |s|`.
    Hat { center: f64, radius: f64 },
}

impl SpaceProfile {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            SpaceProfile::Bump { center, radius } | SpaceProfile::Hat { center, radius } => {
                (center - radius, center + radius)
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            SpaceProfile::Bump { center, radius } => {
                let s = ((x - center) / radius).abs();
                if s >= 1.0 {
                    0.0
                } else {
                    1.0 - 3.0 * s * s + 2.0 * s * s * s
                }
            }
            SpaceProfile::Hat { center, radius } => (1.0 - ((x - center) / radius).abs()).max(0.0),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            SpaceProfile::Bump { center, radius } => {
                let s = (x - center) / radius;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (-6.0 * s + 6.0 * s * s.abs()) / radius
                }
            }
            SpaceProfile::Hat { center, radius } => {
                let s = (x - center) / radius;
                if s.abs() >= 1.0 || s == 0.0 {
                    0.0
                } else {
                    -s.signum() / radius
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    /// `1 - 3 r^2 + 2 r^3` with `r = t / t_end`, zero afterwards.
    Decay { t_end: f64 },
    /// `16 s^2 (1 - s)^2` on `(t0, t1)`.
    Bump { t0: f64, t1: f64 },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Decay { t_end } => {
                let r = t / t_end;
                if r >= 1.0 {
                    0.0
                } else if r <= 0.0 {
                    1.0
                } else {
                    1.0 - 3.0 * r * r + 2.0 * r * r * r
                }
            }
            TimeProfile::Bump { t0, t1 } => {
                if t <= t0 || t >= t1 {
                    0.0
                } else {
                    let s = (t - t0) / (t1 - t0);
                    16.0 * s * s * (1.0 - s) * (1.0 - s)
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Decay { t_end } => {
                let r = t / t_end;
                if !(0.0..1.0).contains(&r) {
                    0.0
                } else {
                    (-6.0 * r + 6.0 * r * r) / t_end
                }
            }
            TimeProfile::Bump { t0, t1 } => {
                if t <= t0 || t >= t1 {
                    0.0
                } else {
                    let h = t1 - t0;
                    let s = (t - t0) / h;
                    32.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / h
                }
            }
        }
    }

    /// Points where the piecewise-polynomial definition changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            TimeProfile::Decay { t_end } => vec![t_end],
            TimeProfile::Bump { t0, t1 } => vec![t0, t1],
        }
    }

    pub fn support_end(&self) -> f64 {
        match *self {
            TimeProfile::Decay { t_end } => t_end,
            TimeProfile::Bump { t1, .. } => t1,
        }
    }

    /// `int beta dt` over the whole line.
    pub fn l1_norm(&self) -> f64 {
        match *self {
            TimeProfile::Decay { t_end } => 0.5 * t_end,
            TimeProfile::Bump { t0, t1 } => (t1 - t0) * 16.0 / 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub alpha: SpaceProfile,
    pub beta: TimeProfile,
}

impl TestFunction {
    pub fn new(alpha: SpaceProfile, beta: TimeProfile) -> Self {
        TestFunction { alpha, beta }
    }

    pub fn check_support(&self, lo: f64, hi: f64) -> Result<(), VerifyError> {
        let (a, b) = self.alpha.support();
        if a <= lo || b >= hi {
            return Err(VerifyError::Support { lo: a, hi: b });
        }
        Ok(())
    }
}

const GAUSS3: [(f64, f64); 3] =
    [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// `int_a^b f(t) dt` for `f` polynomial of degree at most five between the
/// given breakpoints.
fn gauss(a: f64, b: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    points.push(b);
    let mut total = 0.0;
    for w in points.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        total += half * GAUSS3.iter().map(|&(x, wt)| wt * f(mid + half * x)).sum::<f64>();
    }
    total
}

/// `int (linear interpolant of p) * g` over consecutive samples.
fn integrate_piecewise_linear(samples: &[(f64, f64)], breaks: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    samples
        .windows(2)
        .map(|w| {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t1 <= t0 {
                return 0.0;
            }
            let slope = (p1 - p0) / (t1 - t0);
            gauss(t0, t1, breaks, |t| (p0 + slope * (t - t0)) * g(t))
        })
        .sum()
}

struct Weights {
    alpha: Vec<f64>,
    alpha_x: Vec<f64>,
    atoms: Vec<f64>,
}

fn weights(state: &MeasureState, alpha: &SpaceProfile) -> Weights {
    let edges = state.regular.edges();
    let (c_lo, c_hi) = alpha.support();
    let kinks = [c_lo, 0.5 * (c_lo + c_hi), c_hi];
    let cells = edges.windows(2);
    Weights {
        alpha: cells.clone().map(|e| gauss(e[0], e[1], &kinks, |x| alpha.value(x))).collect(),
        alpha_x: cells.map(|e| alpha.value(e[1]) - alpha.value(e[0])).collect(),
        atoms: state.atoms.iter().map(|a| alpha.value(a.position)).collect(),
    }
}

/// Integrates `int A beta' + G beta dt` with `A`, `G` computed per snapshot
/// by `density` and `flux`, plus the atom term `sum_j w_j int m_j beta'`
/// with `m_j = atom_mass(C_j)` following the dense mass curves.
fn space_time_form(
    traj: &Trajectory,
    zeta: &TestFunction,
    density: impl Fn(f64) -> f64,
    flux: impl Fn(f64) -> f64,
    atom_mass: impl Fn(f64) -> f64,
) -> f64 {
    let w = weights(&traj.initial, &zeta.alpha);
    let beta = zeta.beta;
    let breaks = beta.breakpoints();
    let mut a_samples = Vec::with_capacity(traj.snapshots.len());
    let mut g_samples = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let mut a = 0.0;
        let mut g = 0.0;
        let mut i = 0;
        for block in &s.regular.blocks {
            for &u in &block.values {
                if w.alpha[i] != 0.0 {
                    a += density(u) * w.alpha[i];
                }
                if w.alpha_x[i] != 0.0 {
                    g += flux(u) * w.alpha_x[i];
                }
                i += 1;
            }
        }
        a_samples.push((s.time, a));
        g_samples.push((s.time, g));
    }
    let mut total = integrate_piecewise_linear(&a_samples, &breaks, |t| beta.derivative(t))
        + integrate_piecewise_linear(&g_samples, &breaks, |t| beta.value(t))
        + a_samples[0].1 * beta.value(0.0);
    for (ledger, &wj) in traj.ledgers.iter().zip(&w.atoms) {
        if wj == 0.0 {
            continue;
        }
        let curve: Vec<(f64, f64)> = ledger.samples.iter().map(|&(t, c)| (t, atom_mass(c))).collect();
        total += wj * integrate_piecewise_linear(&curve, &breaks, |t| beta.derivative(t));
        total += wj * atom_mass(ledger.birth_mass) * beta.value(0.0);
    }
    total
}

/// Weak form residual: `iint u zeta_t + H(u) zeta_x + int <u_s, zeta_t> +
/// <u_0, zeta(0)>`; zero for an exact solution.
pub fn weak_residual(traj: &Trajectory, zeta: &TestFunction) -> f64 {
    let model = &traj.model;
    space_time_form(traj, zeta, |u| u, |u| model.eval(u), |c| c)
}

/// Entropy inequality with constant `k`: left side minus right side, with
/// `|u_s| = sum_j |C_j| delta_{x_j}` (atoms never overlap, so this equals
/// the total variation of the singular part). Nonnegative for an entropy
/// solution when `zeta >= 0`.
pub fn entropy_residual(traj: &Trajectory, k: f64, zeta: &TestFunction) -> f64 {
    let model = &traj.model;
    let hk = model.eval(k);
    space_time_form(
        traj,
        zeta,
        |u| (u - k).abs(),
        |u| {
            let s = u - k;
            if s > 0.0 {
                model.eval(u) - hk
            } else if s < 0.0 {
                hk - model.eval(u)
            } else {
                0.0
            }
        },
        |c| c.abs(),
    )
}

#[inline]
fn sgn_plus(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn sgn_minus(s: f64) -> f64 {
    if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityProbe {
    /// One-sided integrals at the cells adjacent to the atom.
    pub left: f64,
    pub right: f64,
    /// The same integrals one cell further away.
    pub left2: f64,
    pub right2: f64,
    /// `max(right, -left, 0)`.
    pub violation: f64,
    pub pass: bool,
}

/// One-sided compatibility integrals `int sgn(u - k)(H(u) - H(k)) beta dt`
/// at atom `j`, with `sgn_-` for a positive atom and `sgn_+` for a negative
/// one. The right value must be `<= tol` and the left value `>= -tol`.
/// `beta` should vanish after the death time of the atom.
pub fn compatibility_check(
    traj: &Trajectory,
    j: usize,
    k: f64,
    beta: &TimeProfile,
    tol: f64,
) -> Result<CompatibilityProbe, VerifyError> {
    let ledger = traj.ledgers.get(j).ok_or(VerifyError::NoAtom(j))?;
    let model = &traj.model;
    let hk = model.eval(k);
    let sgn = if ledger.birth_mass > 0.0 { sgn_minus } else { sgn_plus };
    let q = |u: f64| sgn(u - k) * (model.eval(u) - hk);
    let breaks = beta.breakpoints();
    let end = ledger.death_time.unwrap_or(traj.horizon);
    let mut acc = [0.0; 4];
    for w in traj.probes.windows(2) {
        let (t0, t1) = (w[0].t, w[1].t.min(end));
        if t1 <= t0 {
            break;
        }
        let weight = gauss(t0, t1, &breaks, |t| beta.value(t));
        if weight == 0.0 {
            continue;
        }
        let p = w[0].values[j];
        for (a, &u) in acc.iter_mut().zip(&p) {
            *a += q(u) * weight;
        }
    }
    let [left2, left, right, right2] = acc;
    let violation = right.max(-left).max(0.0);
    Ok(CompatibilityProbe { left, right, left2, right2, violation, pass: violation <= tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Worst `lhs - rhs` over snapshots (nonpositive when passing).
    pub worst_excess: f64,
    pub worst_time: f64,
    /// `int [u_A - u_B]_+` at each snapshot.
    pub positive_part: Vec<(f64, f64)>,
    pub pass: bool,
}

/// Checks `int [u_A - u_B]_+ (t) <= int [u_A(0) - u_B(0)]_+ + ([m1 - n1]_+ +
/// [m2 - n2]_+) L t + tol` at every snapshot of two interval runs.
pub fn comparison_check(
    a: &IntervalRun,
    b: &IntervalRun,
    levels: (f64, f64, f64, f64),
    model: &FluxModel,
    tol: f64,
) -> Result<ComparisonReport, VerifyError> {
    if a.field.widths != b.field.widths || a.snapshots.len() != b.snapshots.len() {
        return Err(VerifyError::Mismatch);
    }
    let widths = &a.field.widths;
    let positive =
        |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).zip(widths).map(|((u, v), w)| (u - v).max(0.0) * w).sum() };
    let (m1, m2, n1, n2) = levels;
    let penalty = ((m1 - n1).max(0.0) + (m2 - n2).max(0.0)) * model.lipschitz;
    let base = positive(&a.snapshots[0].1, &b.snapshots[0].1);
    let t0 = a.snapshots[0].0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_time = t0;
    let mut positive_part = Vec::with_capacity(a.snapshots.len());
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        if sa.0 != sb.0 {
            return Err(VerifyError::Mismatch);
        }
        let lhs = positive(&sa.1, &sb.1);
        let excess = lhs - (base + penalty * (sa.0 - t0) + tol);
        positive_part.push((sa.0, lhs));
        if excess > worst_excess {
            worst_excess = excess;
            worst_time = sa.0;
        }
    }
    Ok(ComparisonReport { worst_excess, worst_time, positive_part, pass: worst_excess <= 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub tag: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn upper(name: &str, tag: &str, residual: f64, tol: f64, detail: String) -> Self {
        CheckResult { name: name.into(), tag: tag.into(), residual, tol, pass: residual <= tol, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line per check: name, tag, residual, tolerance, verdict.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<14} {:<22} residual={:<24e} tol={:<12e} {}",
                c.name,
                c.tag,
                c.residual,
                c.tol,
                if c.pass { "PASS" } else { "FAIL" }
            ));
            if !c.detail.is_empty() {
                out.push_str("  ");
                out.push_str(&c.detail);
            }
            out.push('\n');
        }
        out
    }
}

pub const ALL_CHECKS: [&str; 8] =
    ["sign", "decay", "persistence", "conservation", "l1_growth", "weak", "entropy", "compatibility"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub checks: Vec<String>,
    pub seed: u64,
    pub n_test_functions: usize,
    pub n_k: usize,
    pub n_beta: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            checks: ALL_CHECKS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            n_test_functions: 10,
            n_k: 21,
            n_beta: 5,
        }
    }
}

impl CheckOptions {
    pub fn validate(&self) -> Result<(), VerifyError> {
        for c in &self.checks {
            if !ALL_CHECKS.contains(&c.as_str()) {
                return Err(VerifyError::UnknownCheck(c.clone()));
            }
        }
        Ok(())
    }
}

/// `n` Chebyshev points on `[lo, hi]`.
pub fn chebyshev_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| {
            let theta = std::f64::consts::PI * (n - 1 - i) as f64 / (n - 1) as f64;
            0.5 * (lo + hi) + 0.5 * (hi - lo) * theta.cos()
        })
        .collect()
}

/// k-grid over the attained range widened by one unit.
pub fn k_grid(traj: &Trajectory, n: usize) -> Vec<f64> {
    chebyshev_grid(traj.min_value - 1.0, traj.max_value + 1.0, n)
}

/// Tolerances as functions of the grid.
pub fn tolerances(dx: f64) -> Tolerances {
    Tolerances { mass: 10.0 * dx, weak: 5.0 * dx, entropy: dx, compatibility: 0.5 * dx.sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub mass: f64,
    pub weak: f64,
    pub entropy: f64,
    /// Multiplies `osc(H) int beta dt` for the compatibility integrals.
    pub compatibility: f64,
}

/// Random test functions, seeded. Centers sit at the atoms or inside the
/// initial support so every family of test functions is represented:
/// supports straddling an atom and supports away from all atoms.
pub fn random_test_functions(traj: &Trajectory, n: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bps = &traj.initial.regular.breakpoints;
    let lo = bps[0];
    let hi = *bps.last().unwrap();
    let atoms: Vec<f64> = traj.initial.atoms.iter().map(|a| a.position).collect();
    let speed = traj.model.lipschitz * traj.horizon;
    let (a_lo, a_hi) = match (atoms.first(), atoms.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => (lo + 0.5 * (hi - lo) - 0.5, lo + 0.5 * (hi - lo) + 0.5),
    };
    (0..n)
        .map(|i| {
            let radius = rng.gen_range(0.2..0.8);
            let center = if !atoms.is_empty() && i % 2 == 0 {
                atoms[rng.gen_range(0..atoms.len())] + rng.gen_range(-0.5..0.5) * radius
            } else {
                rng.gen_range((a_lo - speed * 0.5)..(a_hi + speed * 0.5))
            };
            let center = center.clamp(lo + radius + 1e-3, hi - radius - 1e-3);
            let alpha =
                if i % 3 == 2 { SpaceProfile::Hat { center, radius } } else { SpaceProfile::Bump { center, radius } };
            let beta = if i % 2 == 0 {
                TimeProfile::Decay { t_end: traj.horizon * rng.gen_range(0.5..1.0) }
            } else {
                let t0 = traj.horizon * rng.gen_range(0.0..0.3);
                TimeProfile::Bump { t0, t1: t0 + traj.horizon * rng.gen_range(0.3..0.7) }
            };
            TestFunction { alpha, beta }
        })
        .collect()
}

/// Temporal profiles supported inside `(0, end)`.
pub fn compatibility_betas(end: f64, n: usize) -> Vec<TimeProfile> {
    (0..n)
        .map(|i| {
            let f = i as f64 / n.max(1) as f64;
            let t0 = end * (0.05 + 0.4 * f);
            let t1 = end * (0.55 + 0.4 * f);
            TimeProfile::Bump { t0, t1 }
        })
        .collect()
}

fn sign_check(traj: &Trajectory) -> CheckResult {
    let mut worst: f64 = 0.0;
    for l in &traj.ledgers {
        let s = l.birth_mass.signum();
        let mut prev = l.birth_mass.abs();
        for &(_, c) in &l.samples {
            worst = worst.max(-s * c);
            worst = worst.max(c.abs() - prev);
            prev = c.abs();
        }
    }
    CheckResult::upper("sign", "atom sign monotone", worst, 0.0, String::new())
}

fn decay_check(traj: &Trajectory, tol: f64) -> CheckResult {
    let mut worst = f64::INFINITY;
    for l in &traj.ledgers {
        worst = worst.min(mass_decay_bound_check(l, &traj.model, tol).worst_margin);
    }
    let residual = if worst.is_finite() { (tol - worst).max(0.0) } else { 0.0 };
    CheckResult::upper("decay", "mass decay bound", residual, tol, format!("margin={worst:e}"))
}

fn persistence_check(traj: &Trajectory) -> CheckResult {
    let mut worst: f64 = 0.0;
    for l in &traj.ledgers {
        if let (Some(t), Ok(bound)) = (l.death_time, persistence_lower_bound(l.birth_mass, &traj.model)) {
            worst = worst.max(bound - t);
        }
    }
    CheckResult::upper("persistence", "persistence time", worst, traj.dt, String::new())
}

fn conservation_check(traj: &Trajectory, tol: f64) -> CheckResult {
    let m0 = total_mass(&traj.initial);
    let drift = traj.snapshots.iter().map(|s| (total_mass(s) - m0).abs()).fold(0.0, f64::max);
    CheckResult::upper("conservation", "total mass", drift, tol, String::new())
}

/// `max_t` of `||u_r(t)||_1 - ||u_r(0)||_1 - sum |c_j| - 2 sup|H| t`.
pub fn l1_growth_excess(traj: &Trajectory) -> f64 {
    let base = traj.initial.regular.l1_norm() + traj.initial.singular_variation();
    let rate = 2.0 * traj.model.sup_abs();
    traj.snapshots.iter().map(|s| s.regular.l1_norm() - base - rate * s.time).fold(f64::NEG_INFINITY, f64::max)
}

fn l1_growth_check(traj: &Trajectory, tol: f64) -> CheckResult {
    let excess = l1_growth_excess(traj);
    CheckResult::upper("l1_growth", "L1 growth", excess.max(0.0), tol, format!("excess={excess:e}"))
}

fn weak_check(traj: &Trajectory, zetas: &[TestFunction], tol: f64) -> CheckResult {
    let worst = zetas.iter().map(|z| weak_residual(traj, z).abs()).fold(0.0, f64::max);
    CheckResult::upper("weak", "weak form", worst, tol, format!("test_functions={}", zetas.len()))
}

fn entropy_check(traj: &Trajectory, zetas: &[TestFunction], ks: &[f64], tol: f64) -> CheckResult {
    let mut worst = f64::INFINITY;
    for z in zetas {
        for &k in ks {
            worst = worst.min(entropy_residual(traj, k, z));
        }
    }
    let residual = (-worst).max(0.0);
    CheckResult::upper("entropy", "entropy inequality", residual, tol, format!("min={worst:e} k_points={}", ks.len()))
}

/// Runs every compatibility probe and returns the worst normalized result.
pub fn compatibility_sweep(traj: &Trajectory, ks: &[f64], n_beta: usize, coefficient: f64) -> CheckResult {
    let osc = traj.model.oscillation();
    let mut worst_ratio: f64 = 0.0;
    let mut worst_violation: f64 = 0.0;
    let mut worst_second: f64 = 0.0;
    let mut probes = 0;
    for j in 0..traj.ledgers.len() {
        let end = traj.ledgers[j].death_time.unwrap_or(traj.horizon);
        for beta in compatibility_betas(end, n_beta) {
            let scale = osc * beta.l1_norm();
            let tol = coefficient * scale;
            for &k in ks {
                let p = compatibility_check(traj, j, k, &beta, tol).expect("atom index in range");
                probes += 1;
                let ratio = if scale > 0.0 { p.violation / scale } else { p.violation };
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_violation = p.violation;
                }
                let second = p.right2.max(-p.left2).max(0.0);
                worst_second = worst_second.max(if scale > 0.0 { second / scale } else { second });
            }
        }
    }
    CheckResult::upper(
        "compatibility",
        "atom compatibility",
        worst_ratio,
        coefficient,
        format!("probes={probes} worst_violation={worst_violation:e} second_cell={worst_second:e}"),
    )
}

/// Runs the selected checks at the tolerances for the trajectory's grid.
pub fn run_checks(traj: &Trajectory, options: &CheckOptions) -> Result<VerificationReport, VerifyError> {
    options.validate()?;
    let tol = tolerances(traj.config.dx);
    let enabled = |name: &str| options.checks.iter().any(|c| c == name);
    let zetas = random_test_functions(traj, options.n_test_functions, options.seed);
    let ks = k_grid(traj, options.n_k);
    let mut report = VerificationReport::default();
    for name in ALL_CHECKS {
        if !enabled(name) {
            continue;
        }
        let result = match name {
            "sign" => sign_check(traj),
            "decay" => decay_check(traj, tol.mass),
            "persistence" => persistence_check(traj),
            "conservation" => conservation_check(traj, tol.mass),
            "l1_growth" => l1_growth_check(traj, tol.mass),
            "weak" => weak_check(traj, &zetas, tol.weak),
            "entropy" => entropy_check(traj, &zetas, &ks, tol.entropy),
            "compatibility" => compatibility_sweep(traj, &ks, options.n_beta, tol.compatibility),
            _ => unreachable!(),
        };
        report.checks.push(result);
    }
    Ok(report)
}
