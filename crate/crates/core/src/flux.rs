//! Bounded Lipschitz flux functions with `H(0) = 0` and their two-point
//! numerical fluxes.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance to the asymptotic limit used to define the saturation threshold.
pub const SATURATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluxError {
    #[error("unknown flux family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameters for `{family}`: {reason}")]
    InvalidParams { family: String, reason: String },
}

/// Closed-form flux families. Every family is bounded, globally Lipschitz and
/// vanishes at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FluxFamily {
    Zero,
    /// `a u / (1 + |u|)`
    SaturatingRational {
        a: f64,
    },
    /// `a (2/pi) atan(u / s)`
    ArctanLike {
        a: f64,
        s: f64,
    },
    /// Continuous piecewise-linear interpolant of the knots, constant outside.
    BoundedPiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
    /// `a u exp(-u^2 / (2 w^2))`, extrema at `u = +-w`, vanishing at both ends.
    NonmonotoneBump {
        a: f64,
        w: f64,
    },
}

impl FluxFamily {
    pub fn name(&self) -> &'static str {
        match self {
            FluxFamily::Zero => "zero",
            FluxFamily::SaturatingRational { .. } => "saturating_rational",
            FluxFamily::ArctanLike { .. } => "arctan_like",
            FluxFamily::BoundedPiecewiseLinear { .. } => "bounded_piecewise_linear",
            FluxFamily::NonmonotoneBump { .. } => "nonmonotone_bump",
        }
    }

    /// Parameter list in the flattened form accepted by [`make_builtin`].
    pub fn params(&self) -> Vec<f64> {
        match self {
            FluxFamily::Zero => vec![],
            FluxFamily::SaturatingRational { a } => vec![*a],
            FluxFamily::ArctanLike { a, s } => vec![*a, *s],
            FluxFamily::BoundedPiecewiseLinear { knots } => knots.iter().flat_map(|&(x, y)| [x, y]).collect(),
            FluxFamily::NonmonotoneBump { a, w } => vec![*a, *w],
        }
    }
}

/// Two-point numerical flux used by the finite-volume kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericalFlux {
    /// Exact Riemann flux; always lies in `[inf H, sup H]`.
    #[default]
    Godunov,
    /// Local Lax-Friedrichs with the global Lipschitz constant.
    Rusanov,
}

impl NumericalFlux {
    pub fn name(&self) -> &'static str {
        match self {
            NumericalFlux::Godunov => "godunov",
            NumericalFlux::Rusanov => "rusanov",
        }
    }

    #[inline]
    pub fn eval(&self, model: &FluxModel, a: f64, b: f64) -> f64 {
        match self {
            NumericalFlux::Godunov => model.godunov(a, b),
            NumericalFlux::Rusanov => numerical_flux(a, b, model),
        }
    }
}

impl std::str::FromStr for NumericalFlux {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "godunov" => Ok(NumericalFlux::Godunov),
            "rusanov" => Ok(NumericalFlux::Rusanov),
            other => Err(format!("unknown numerical flux `{other}`")),
        }
    }
}

/// A flux `H` together with the analytic constants the solver and the
/// verification suite depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxModel {
    pub family: FluxFamily,
    pub lipschitz: f64,
    pub sup_h: f64,
    pub inf_h: f64,
    pub limsup_pinf: f64,
    pub liminf_pinf: f64,
    pub limsup_minf: f64,
    pub liminf_minf: f64,
    /// Smallest `|u|` beyond which `H` stays within [`SATURATION_TOL`] of its
    /// limits; `f64::INFINITY` when a limit does not exist.
    pub saturation_threshold: f64,
    /// Sorted points where `H` may have a local extremum. Extrema of `H` over
    /// any interval are attained at its endpoints or at one of these.
    critical_points: Vec<f64>,
}

/// Builds one of the closed-form families by name.
pub fn make_builtin(name: &str, params: &[f64]) -> Result<FluxModel, FluxError> {
    let invalid = |reason: &str| FluxError::InvalidParams { family: name.to_string(), reason: reason.to_string() };
    if params.iter().any(|p| !p.is_finite()) {
        return Err(invalid("parameters must be finite"));
    }
    let family = match name {
        "zero" => {
            if !params.is_empty() {
                return Err(invalid("takes no parameters"));
            }
            FluxFamily::Zero
        }
        "saturating_rational" => match params {
            [a] => FluxFamily::SaturatingRational { a: *a },
            _ => return Err(invalid("expected [a]")),
        },
        "arctan_like" => match params {
            [a] => FluxFamily::ArctanLike { a: *a, s: 1.0 },
            [a, s] if *s > 0.0 => FluxFamily::ArctanLike { a: *a, s: *s },
            [_, _] => return Err(invalid("scale s must be positive")),
            _ => return Err(invalid("expected [a] or [a, s]")),
        },
        "bounded_piecewise_linear" => {
            if params.len() < 4 || !params.len().is_multiple_of(2) {
                return Err(invalid("expected [x0, y0, x1, y1, ...] with at least two knots"));
            }
            let knots: Vec<(f64, f64)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
            if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(invalid("knot abscissae must be strictly increasing"));
            }
            FluxFamily::BoundedPiecewiseLinear { knots: pin_origin(knots).map_err(|r| invalid(&r))? }
        }
        "nonmonotone_bump" => match params {
            [a, w] if *w > 0.0 => FluxFamily::NonmonotoneBump { a: *a, w: *w },
            [_, _] => return Err(invalid("width w must be positive")),
            _ => return Err(invalid("expected [a, w]")),
        },
        other => return Err(FluxError::UnknownFamily(other.to_string())),
    };
    Ok(FluxModel::from_family(family))
}

/// Forces the piecewise-linear interpolant through the origin exactly.
fn pin_origin(mut knots: Vec<(f64, f64)>) -> Result<Vec<(f64, f64)>, String> {
    let at_zero = pwl_eval(&knots, 0.0);
    let scale = knots.iter().map(|k| k.1.abs()).fold(1.0_f64, f64::max);
    if at_zero.abs() > 1e-12 * scale {
        return Err(format!("H(0) = {at_zero} but must vanish"));
    }
    let first = knots[0].0;
    let last = knots[knots.len() - 1].0;
    if first < 0.0 && last > 0.0 {
        let idx = knots.partition_point(|k| k.0 < 0.0);
        if knots[idx].0 == 0.0 {
            knots[idx].1 = 0.0;
        } else {
            knots.insert(idx, (0.0, 0.0));
        }
    } else if first >= 0.0 {
        knots[0].1 = 0.0;
    } else {
        let n = knots.len();
        knots[n - 1].1 = 0.0;
    }
    Ok(knots)
}

fn pwl_eval(knots: &[(f64, f64)], u: f64) -> f64 {
    let n = knots.len();
    if u <= knots[0].0 {
        return knots[0].1;
    }
    if u >= knots[n - 1].0 {
        return knots[n - 1].1;
    }
    let i = knots.partition_point(|k| k.0 <= u);
    let (x0, y0) = knots[i - 1];
    let (x1, y1) = knots[i];
    if u == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (u - x0) / (x1 - x0)
}

impl FluxModel {
    pub fn from_family(family: FluxFamily) -> Self {
        match &family {
            FluxFamily::Zero => FluxModel {
                lipschitz: 0.0,
                sup_h: 0.0,
                inf_h: 0.0,
                limsup_pinf: 0.0,
                liminf_pinf: 0.0,
                limsup_minf: 0.0,
                liminf_minf: 0.0,
                saturation_threshold: 0.0,
                critical_points: vec![],
                family,
            },
            &FluxFamily::SaturatingRational { a } => FluxModel {
                lipschitz: a.abs(),
                sup_h: a.abs(),
                inf_h: -a.abs(),
                limsup_pinf: a,
                liminf_pinf: a,
                limsup_minf: -a,
                liminf_minf: -a,
                // |H(u) - a| = |a| / (1 + u) for u > 0
                saturation_threshold: (a.abs() / SATURATION_TOL - 1.0).max(0.0),
                critical_points: vec![],
                family,
            },
            &FluxFamily::ArctanLike { a, s } => {
                // |H(u) - a| = |a| (2/pi) atan(s / u) for u > 0
                let threshold = if a == 0.0 {
                    0.0
                } else {
                    let angle = SATURATION_TOL / (a.abs() * FRAC_2_PI);
                    if angle >= PI / 2.0 {
                        0.0
                    } else {
                        s / angle.tan()
                    }
                };
                FluxModel {
                    lipschitz: a.abs() * FRAC_2_PI / s,
                    sup_h: a.abs(),
                    inf_h: -a.abs(),
                    limsup_pinf: a,
                    liminf_pinf: a,
                    limsup_minf: -a,
                    liminf_minf: -a,
                    saturation_threshold: threshold,
                    critical_points: vec![],
                    family,
                }
            }
            FluxFamily::BoundedPiecewiseLinear { knots } => {
                let lipschitz =
                    knots.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max);
                let sup_h = knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
                let inf_h = knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
                let first = knots[0];
                let last = knots[knots.len() - 1];
                FluxModel {
                    lipschitz,
                    sup_h,
                    inf_h,
                    limsup_pinf: last.1,
                    liminf_pinf: last.1,
                    limsup_minf: first.1,
                    liminf_minf: first.1,
                    saturation_threshold: first.0.abs().max(last.0.abs()),
                    critical_points: knots.iter().map(|k| k.0).collect(),
                    family,
                }
            }
            &FluxFamily::NonmonotoneBump { a, w } => {
                let peak = a.abs() * w * (-0.5_f64).exp();
                FluxModel {
                    lipschitz: a.abs(),
                    sup_h: peak,
                    inf_h: -peak,
                    limsup_pinf: 0.0,
                    liminf_pinf: 0.0,
                    limsup_minf: 0.0,
                    liminf_minf: 0.0,
                    saturation_threshold: bump_threshold(a, w),
                    critical_points: vec![-w, w],
                    family,
                }
            }
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.family {
            FluxFamily::Zero => 0.0,
            &FluxFamily::SaturatingRational { a } => a * u / (1.0 + u.abs()),
            &FluxFamily::ArctanLike { a, s } => a * FRAC_2_PI * (u / s).atan(),
            FluxFamily::BoundedPiecewiseLinear { knots } => pwl_eval(knots, u),
            &FluxFamily::NonmonotoneBump { a, w } => {
                let r = u / w;
                a * u * (-0.5 * r * r).exp()
            }
        }
    }

    /// `sup |H|`.
    pub fn sup_abs(&self) -> f64 {
        self.sup_h.abs().max(self.inf_h.abs())
    }

    /// `sup H - inf H`.
    pub fn oscillation(&self) -> f64 {
        self.sup_h - self.inf_h
    }

    pub fn critical_points(&self) -> &[f64] {
        &self.critical_points
    }

    /// Minimum and maximum of `H` over `[lo, hi]`.
    pub fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let h_lo = self.eval(lo);
        let h_hi = self.eval(hi);
        let mut min = h_lo.min(h_hi);
        let mut max = h_lo.max(h_hi);
        let start = self.critical_points.partition_point(|&c| c <= lo);
        for &c in self.critical_points[start..].iter().take_while(|&&c| c < hi) {
            let h = self.eval(c);
            min = min.min(h);
            max = max.max(h);
        }
        (min, max)
    }

    /// Godunov flux: `min H` over `[a, b]` if `a <= b`, `max H` over `[b, a]`
    /// otherwise.
    #[inline]
    pub fn godunov(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return self.eval(a);
        }
        let (min, max) = self.range_on(a, b);
        if a < b {
            min
        } else {
            max
        }
    }

    /// Whether the family has exact asymptotic limits at both ends.
    pub fn has_limits(&self) -> bool {
        self.saturation_threshold.is_finite()
    }
}

fn bump_threshold(a: f64, w: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let g = |u: f64| {
        let r = u / w;
        a.abs() * u * (-0.5 * r * r).exp()
    };
    // g is decreasing on [w, inf)
    if g(w) < SATURATION_TOL {
        return 0.0;
    }
    let mut lo = w;
    let mut hi = 2.0 * w;
    while g(hi) >= SATURATION_TOL {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= SATURATION_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Rusanov flux `(H(a) + H(b)) / 2 - L (b - a) / 2` with the global Lipschitz
/// constant `L`.
#[inline]
pub fn numerical_flux(u_left: f64, u_right: f64, model: &FluxModel) -> f64 {
    0.5 * (model.eval(u_left) + model.eval(u_right)) - 0.5 * model.lipschitz * (u_right - u_left)
}
