//! Problem configuration: a TOML document, validated into a [`ProblemConfig`]
//! with every default materialized, plus a canonical echo.
//!
//! ```toml
//! horizon = 2.0
//! output_times = [0.5, 1.0]
//! flux = { family = "saturating_rational", params = [1.0] }
//! u0r = [{ interval = [-1.0, 1.0], value = 0.5 }]
//! atoms = [{ x = 0.0, c = 1.0 }]
//!
//! [solver]
//! dx = 0.002
//! ```

use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::epoch::SolveProblem;
use crate::flux::{make_builtin, FluxError, FluxModel, NumericalFlux};
use crate::interval::SolverConfig;
use crate::measure::{InitialData, MeasureError, MeasureState, Segment};
use crate::verify::{CheckOptions, ALL_CHECKS};

pub const DEFAULT_PAD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{code}: {message}")]
pub struct ConfigError {
    pub code: &'static str,
    pub message: String,
    /// 1-based line and column for syntax errors.
    pub position: Option<(usize, usize)>,
}

impl ConfigError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        ConfigError { code, message: message.into(), position: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlux {
    family: String,
    #[serde(default)]
    params: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    interval: [f64; 2],
    value: Option<f64>,
    coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    x: f64,
    c: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lo: Option<f64>,
    hi: Option<f64>,
    pad: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    dx: Option<f64>,
    cfl: Option<f64>,
    ghost: Option<f64>,
    trace_window: Option<usize>,
    tol: Option<f64>,
    scheme: Option<String>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    enabled: Option<Vec<String>>,
    seed: Option<u64>,
    test_functions: Option<usize>,
    k_points: Option<usize>,
    betas: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    horizon: f64,
    #[serde(default)]
    output_times: Vec<f64>,
    record_interval: Option<f64>,
    flux: RawFlux,
    #[serde(default)]
    u0r: Vec<RawSegment>,
    #[serde(default)]
    atoms: Vec<RawAtom>,
    #[serde(default)]
    domain: RawDomain,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    checks: RawChecks,
}

/// Command-line overrides applied before defaults are materialized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dx: Option<f64>,
    pub cfl: Option<f64>,
    pub ghost: Option<f64>,
    pub checks: Option<Vec<String>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    pub flux_family: String,
    pub flux_params: Vec<f64>,
    pub model: FluxModel,
    pub domain: (f64, f64),
    pub segments: Vec<Segment>,
    pub atoms: Vec<(f64, f64)>,
    pub horizon: f64,
    pub solver: SolverConfig,
    pub output_times: Vec<f64>,
    pub record_interval: f64,
    pub checks: CheckOptions,
}

fn syntax_error(text: &str, err: toml::de::Error) -> ConfigError {
    let position = err.span().map(|span| {
        let before = &text[..span.start.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    });
    let message = err.message().to_string();
    let message = match position {
        Some((l, c)) => format!("line {l}, column {c}: {message}"),
        None => message,
    };
    ConfigError { code: "E100", message, position }
}

fn measure_error(e: MeasureError) -> ConfigError {
    let code = match e {
        MeasureError::ZeroMass { .. } => "E301",
        MeasureError::AtomOrder { .. } => "E302",
        MeasureError::Overlap { .. } => "E303",
        MeasureError::EmptySegment { .. } => "E304",
        MeasureError::AtomOutside { .. } => "E305",
        MeasureError::Domain { .. } => "E601",
        MeasureError::CellSize(_) => "E501",
        MeasureError::NonFinite { .. } => "E304",
    };
    ConfigError::new(code, e.to_string())
}

fn finite(code: &'static str, what: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(code, format!("{what} must be finite, got {v}")))
    }
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ProblemConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| syntax_error(text, e))?;

    let model = make_builtin(&raw.flux.family, &raw.flux.params).map_err(|e| match e {
        FluxError::UnknownFamily(_) => ConfigError::new("E200", e.to_string()),
        FluxError::InvalidParams { .. } => ConfigError::new("E201", e.to_string()),
    })?;

    let mut segments = Vec::with_capacity(raw.u0r.len());
    for (i, s) in raw.u0r.iter().enumerate() {
        let [a, b] = s.interval;
        finite("E304", "segment endpoint", a)?;
        finite("E304", "segment endpoint", b)?;
        let coeffs = match (&s.value, &s.coeffs) {
            (Some(v), None) => vec![*v],
            (None, Some(c)) if !c.is_empty() => c.clone(),
            _ => return Err(ConfigError::new("E304", format!("segment {i} needs exactly one of `value` or `coeffs`"))),
        };
        for &c in &coeffs {
            finite("E304", "segment coefficient", c)?;
        }
        segments.push(Segment { a, b, coeffs });
    }
    let atoms: Vec<(f64, f64)> = raw.atoms.iter().map(|a| (a.x, a.c)).collect();
    for &(x, c) in &atoms {
        finite("E302", "atom position", x)?;
        finite("E301", "atom mass", c)?;
    }
    let data = InitialData { segments: segments.clone(), atoms: atoms.clone() };
    data.validate().map_err(measure_error)?;

    let horizon = raw.horizon;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ConfigError::new("E401", format!("horizon must be positive and finite, got {horizon}")));
    }
    let mut output_times = raw.output_times.clone();
    for &t in &output_times {
        if !(t > 0.0 && t <= horizon) {
            return Err(ConfigError::new("E402", format!("output time {t} is outside (0, {horizon}]")));
        }
    }
    output_times.sort_by(f64::total_cmp);
    output_times.dedup();
    if output_times.is_empty() {
        output_times.push(horizon);
    }
    let record_interval = raw.record_interval.unwrap_or(horizon / 200.0);
    if !(record_interval > 0.0 && record_interval.is_finite()) {
        return Err(ConfigError::new("E402", format!("record_interval must be positive, got {record_interval}")));
    }

    let pad = raw.domain.pad.unwrap_or(DEFAULT_PAD);
    if !(pad >= 0.0 && pad.is_finite()) {
        return Err(ConfigError::new("E601", format!("pad must be nonnegative, got {pad}")));
    }
    let reach = model.lipschitz * horizon + pad;
    let (s_lo, s_hi) = data.support().unwrap_or((0.0, 0.0));
    let lo = raw.domain.lo.unwrap_or(s_lo - reach);
    let hi = raw.domain.hi.unwrap_or(s_hi + reach);
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(ConfigError::new("E601", format!("invalid domain [{lo}, {hi}]")));
    }
    if s_lo < lo || s_hi > hi {
        return Err(ConfigError::new(
            "E601",
            format!("domain [{lo}, {hi}] does not contain the data [{s_lo}, {s_hi}]"),
        ));
    }
    for &(x, _) in &atoms {
        if !(x > lo && x < hi) {
            return Err(ConfigError::new("E305", format!("atom at x = {x} lies outside the domain ({lo}, {hi})")));
        }
    }

    let defaults = SolverConfig::default();
    let scheme = match &raw.solver.scheme {
        Some(s) => s.parse::<NumericalFlux>().map_err(|e| ConfigError::new("E501", e))?,
        None => defaults.scheme,
    };
    let mut solver = SolverConfig {
        dx: overrides.dx.or(raw.solver.dx).unwrap_or(defaults.dx),
        cfl: overrides.cfl.or(raw.solver.cfl).unwrap_or(defaults.cfl),
        m_ghost: overrides.ghost.or(raw.solver.ghost),
        trace_window: raw.solver.trace_window.unwrap_or(defaults.trace_window),
        tol: raw.solver.tol.unwrap_or(defaults.tol),
        scheme,
    };
    solver.validate().map_err(|e| ConfigError::new("E501", e.to_string()))?;
    solver.m_ghost = Some(solver.ghost_for(&model, data.max_abs_density()));

    let mut checks = CheckOptions::default();
    if let Some(list) = overrides.checks.clone().or(raw.checks.enabled) {
        for c in &list {
            if !ALL_CHECKS.contains(&c.as_str()) {
                return Err(ConfigError::new("E701", format!("unknown check {c:?}; known: {}", ALL_CHECKS.join(", "))));
            }
        }
        checks.checks = ALL_CHECKS.iter().filter(|c| list.iter().any(|l| l == *c)).map(|c| c.to_string()).collect();
    }
    checks.seed = overrides.seed.or(raw.checks.seed).unwrap_or(checks.seed);
    checks.n_test_functions = raw.checks.test_functions.unwrap_or(checks.n_test_functions);
    checks.n_k = raw.checks.k_points.unwrap_or(checks.n_k);
    checks.n_beta = raw.checks.betas.unwrap_or(checks.n_beta);
    if checks.n_k == 0 || checks.n_beta == 0 {
        return Err(ConfigError::new("E701", "k_points and betas must be positive"));
    }

    Ok(ProblemConfig {
        name: raw.name.unwrap_or_else(|| "problem".into()),
        flux_family: raw.flux.family,
        flux_params: raw.flux.params,
        model,
        domain: (lo, hi),
        segments,
        atoms,
        horizon,
        solver,
        output_times,
        record_interval,
        checks,
    })
}

/// Shortest round-trip decimal that is also a valid TOML float.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") {
        s
    } else {
        format!("{s}.0")
    }
}

fn fmt_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| fmt_float(*v)).collect();
    format!("[{}]", items.join(", "))
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl ProblemConfig {
    /// Canonical dump; parsing it yields the same configuration.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", quote(&self.name));
        let _ = writeln!(s, "horizon = {}", fmt_float(self.horizon));
        let _ = writeln!(s, "output_times = {}", fmt_list(&self.output_times));
        let _ = writeln!(s, "record_interval = {}", fmt_float(self.record_interval));
        let _ =
            writeln!(s, "flux = {{ family = {}, params = {} }}", quote(&self.flux_family), fmt_list(&self.flux_params));
        s.push_str("u0r = [");
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let body = if seg.coeffs.len() == 1 {
                format!("value = {}", fmt_float(seg.coeffs[0]))
            } else {
                format!("coeffs = {}", fmt_list(&seg.coeffs))
            };
            let _ = write!(s, "\n  {{ interval = [{}, {}], {body} }}", fmt_float(seg.a), fmt_float(seg.b));
        }
        s.push_str(if self.segments.is_empty() { "]\n" } else { ",\n]\n" });
        s.push_str("atoms = [");
        for (i, (x, c)) in self.atoms.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "\n  {{ x = {}, c = {} }}", fmt_float(*x), fmt_float(*c));
        }
        s.push_str(if self.atoms.is_empty() { "]\n" } else { ",\n]\n" });
        let _ = writeln!(s, "\n[domain]\nlo = {}\nhi = {}", fmt_float(self.domain.0), fmt_float(self.domain.1));
        let sv = &self.solver;
        let _ = writeln!(
            s,
            "\n[solver]\ndx = {}\ncfl = {}\nghost = {}\ntrace_window = {}\ntol = {}\nscheme = {}",
            fmt_float(sv.dx),
            fmt_float(sv.cfl),
            fmt_float(sv.m_ghost.unwrap_or(f64::NAN)),
            sv.trace_window,
            fmt_float(sv.tol),
            quote(sv.scheme.name())
        );
        let enabled: Vec<String> = self.checks.checks.iter().map(|c| quote(c)).collect();
        let _ = writeln!(
            s,
            "\n[checks]\nenabled = [{}]\nseed = {}\ntest_functions = {}\nk_points = {}\nbetas = {}",
            enabled.join(", "),
            self.checks.seed,
            self.checks.n_test_functions,
            self.checks.n_k,
            self.checks.n_beta
        );
        s
    }

    pub fn initial_data(&self) -> InitialData {
        InitialData { segments: self.segments.clone(), atoms: self.atoms.clone() }
    }

    pub fn initial_state(&self) -> Result<MeasureState, ConfigError> {
        MeasureState::from_initial(&self.initial_data(), self.domain.0, self.domain.1, self.solver.dx)
            .map_err(measure_error)
    }

    pub fn solve_problem(&self) -> Result<SolveProblem, ConfigError> {
        Ok(SolveProblem {
            model: self.model.clone(),
            initial: self.initial_state()?,
            horizon: self.horizon,
            config: self.solver.clone(),
            output_times: self.output_times.clone(),
            record_interval: Some(self.record_interval),
        })
    }

    /// Same problem at a different cell size.
    pub fn with_dx(&self, dx: f64) -> Self {
        let mut out = self.clone();
        out.solver.dx = dx;
        out
    }
}
