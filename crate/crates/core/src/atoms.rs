//! Dirac mass bookkeeping driven by the boundary flux traces on both sides
//! of each atom.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flux::FluxModel;
use crate::interval::TraceSample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("atom {index} at x = {x}: trace jump {jump} has the wrong sign for mass {mass} at t = {time}")]
    SignViolation { index: usize, x: f64, mass: f64, jump: f64, time: f64 },
    #[error("atom mass must be nonzero")]
    ZeroMass,
    #[error("trace samples are not contiguous with the ledger at t = {expected} (got {got})")]
    Gap { expected: f64, got: f64 },
    #[error("left and right trace series differ ({left} vs {right} samples)")]
    Mismatch { left: usize, right: usize },
}

/// Mass curve of one atom.
///
/// `integral` is `I(t) = int_0^t (f_right - f_left) ds`, where `f_right` is
/// the flux leaving the atom into the interval on its right and `f_left` is
/// the flux arriving from the interval on its left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    pub index: usize,
    pub position: f64,
    pub birth_mass: f64,
    pub integral: f64,
    pub mass: f64,
    pub death_time: Option<f64>,
    /// `(t, C(t))` at every ledger time, starting at `(0, c)`.
    pub samples: Vec<(f64, f64)>,
    pub tol: f64,
    pub time: f64,
}

impl MassLedger {
    pub fn new(index: usize, position: f64, mass: f64, tol: f64) -> Result<Self, AtomError> {
        if mass == 0.0 || !mass.is_finite() {
            return Err(AtomError::ZeroMass);
        }
        Ok(MassLedger {
            index,
            position,
            birth_mass: mass,
            integral: 0.0,
            mass,
            death_time: None,
            samples: vec![(0.0, mass)],
            tol,
            time: 0.0,
        })
    }

    /// Default sign tolerance `10 dx L`.
    pub fn default_tol(dx: f64, model: &FluxModel) -> f64 {
        10.0 * dx * model.lipschitz
    }

    pub fn is_alive(&self) -> bool {
        self.death_time.is_none()
    }

    pub fn sign(&self) -> f64 {
        self.birth_mass.signum()
    }

    /// Rate of mass loss `f_right - f_left`, checked against the sign rule.
    pub fn check_jump(&self, f_left: f64, f_right: f64, time: f64) -> Result<f64, AtomError> {
        let jump = f_right - f_left;
        if self.sign() * jump < -self.tol {
            return Err(AtomError::SignViolation { index: self.index, x: self.position, mass: self.mass, jump, time });
        }
        Ok(jump)
    }

    /// Integrates constant fluxes over `[t0, t1]` exactly and applies the
    /// sign clamp. A zero crossing inside the step sets the death time by
    /// linear interpolation.
    pub fn advance(&mut self, t0: f64, t1: f64, f_left: f64, f_right: f64) -> Result<(), AtomError> {
        if t0 != self.time {
            return Err(AtomError::Gap { expected: self.time, got: t0 });
        }
        self.time = t1;
        if !self.is_alive() {
            self.samples.push((t1, 0.0));
            return Ok(());
        }
        let jump = self.check_jump(f_left, f_right, t0)?;
        let before = self.mass;
        self.integral += jump * (t1 - t0);
        let raw = self.birth_mass - self.integral;
        if raw * self.sign() > 0.0 {
            self.mass = raw;
        } else {
            let fraction = if before != raw { before / (before - raw) } else { 1.0 };
            self.death_time = Some(t0 + fraction.clamp(0.0, 1.0) * (t1 - t0));
            self.mass = 0.0;
        }
        self.samples.push((t1, self.mass));
        Ok(())
    }

    /// Feeds aligned trace series (as recorded by an interval run) into the
    /// ledger.
    pub fn update(&mut self, left: &[TraceSample], right: &[TraceSample]) -> Result<(), AtomError> {
        if left.len() != right.len() {
            return Err(AtomError::Mismatch { left: left.len(), right: right.len() });
        }
        for (l, r) in left.iter().zip(right) {
            if l.t0 != r.t0 || l.t1 != r.t1 {
                return Err(AtomError::Gap { expected: l.t0, got: r.t0 });
            }
            self.advance(l.t0, l.t1, l.value, r.value)?;
        }
        Ok(())
    }

    /// Declares the atom dead at the current ledger time and returns the
    /// residual mass (round-off left over at the crossing).
    pub fn kill(&mut self) -> f64 {
        let residual = self.mass;
        self.mass = 0.0;
        if self.death_time.is_none() {
            self.death_time = Some(self.time);
        }
        if let Some(last) = self.samples.last_mut() {
            if last.0 == self.time {
                last.1 = 0.0;
            }
        }
        residual
    }

    /// Time until the mass reaches zero at the given loss rate, if it would.
    pub fn time_to_death(&self, jump: f64) -> Option<f64> {
        if !self.is_alive() || jump * self.sign() <= 0.0 {
            return None;
        }
        Some(self.mass / jump)
    }
}

/// `|c| / (2 sup|H|)`; infinite for the zero flux.
pub fn persistence_lower_bound(c: f64, model: &FluxModel) -> Result<f64, AtomError> {
    if c == 0.0 {
        return Err(AtomError::ZeroMass);
    }
    let sup = model.sup_abs();
    if sup == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(c.abs() / (2.0 * sup))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Smallest `2 sup|H| t + tol - |C(t) - c|` over all samples.
    pub worst_margin: f64,
    pub worst_time: f64,
    pub pass: bool,
}

/// Checks `|C(t) - c| <= 2 sup|H| t + tol` at every sample.
pub fn mass_decay_bound_check(ledger: &MassLedger, model: &FluxModel, tol: f64) -> DecayReport {
    let rate = 2.0 * model.sup_abs();
    let mut worst_margin = f64::INFINITY;
    let mut worst_time = 0.0;
    for &(t, c) in &ledger.samples {
        let margin = rate * t + tol - (c - ledger.birth_mass).abs();
        if margin < worst_margin {
            worst_margin = margin;
            worst_time = t;
        }
    }
    DecayReport { worst_margin, worst_time, pass: worst_margin >= 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::make_builtin;

    #[test]
    fn zero_flux_keeps_mass() {
        let mut l = MassLedger::new(0, 0.0, 1.5, 1e-9).unwrap();
        for i in 0..100 {
            l.advance(i as f64 * 0.01, (i + 1) as f64 * 0.01, 0.0, 0.0).unwrap();
        }
        assert_eq!(l.mass, 1.5);
        assert!(l.death_time.is_none());
    }

    #[test]
    fn constant_jump_dies_at_two() {
        let mut l = MassLedger::new(0, 0.0, 2.0, 1e-9).unwrap();
        let dt = 0.03;
        let mut t = 0.0;
        for i in 0..100 {
            let t1 = (i + 1) as f64 * dt;
            l.advance(t, t1, 0.25, 1.25).unwrap();
            let expected = (2.0 - t1).max(0.0);
            assert!((l.mass - expected).abs() < 1e-12);
            t = t1;
        }
        assert!((l.death_time.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sign_violation_is_an_error() {
        let mut l = MassLedger::new(3, 1.0, 1.0, 1e-6).unwrap();
        assert!(matches!(l.advance(0.0, 0.1, 1.0, 0.0), Err(AtomError::SignViolation { index: 3, .. })));
        let mut n = MassLedger::new(0, 1.0, -1.0, 1e-6).unwrap();
        n.advance(0.0, 0.1, 1.0, 0.0).unwrap();
        assert!((n.mass + 0.9).abs() < 1e-15);
        assert!(matches!(n.advance(0.1, 0.2, 0.0, 1.0), Err(AtomError::SignViolation { .. })));
    }

    #[test]
    fn update_from_traces() {
        let left: Vec<TraceSample> =
            (0..4).map(|i| TraceSample { t0: i as f64 * 0.5, t1: (i + 1) as f64 * 0.5, value: 0.0 }).collect();
        let right: Vec<TraceSample> = left.iter().map(|s| TraceSample { value: 1.0, ..*s }).collect();
        let mut l = MassLedger::new(0, 0.0, 1.0, 1e-9).unwrap();
        l.update(&left, &right).unwrap();
        assert_eq!(l.death_time, Some(1.0));
        assert_eq!(l.mass, 0.0);
        assert!(l.update(&left[..1], &right).is_err());
    }

    #[test]
    fn persistence_bound_examples() {
        let sat = make_builtin("saturating_rational", &[1.0]).unwrap();
        let half = make_builtin("saturating_rational", &[0.5]).unwrap();
        let zero = make_builtin("zero", &[]).unwrap();
        assert_eq!(persistence_lower_bound(2.0, &sat).unwrap(), 1.0);
        assert_eq!(persistence_lower_bound(1.0, &zero).unwrap(), f64::INFINITY);
        assert_eq!(persistence_lower_bound(-3.0, &half).unwrap(), 3.0);
        assert!(persistence_lower_bound(0.0, &sat).is_err());
    }

    #[test]
    fn decay_bound_examples() {
        let zero = make_builtin("zero", &[]).unwrap();
        let l = MassLedger::new(0, 0.0, 1.0, 0.0).unwrap();
        let r = mass_decay_bound_check(&l, &zero, 0.0);
        assert!(r.pass);
        assert_eq!(r.worst_margin, 0.0);

        let sat = make_builtin("saturating_rational", &[1.0]).unwrap();
        let mut l = MassLedger::new(0, 0.0, 2.0, 1e-9).unwrap();
        for i in 0..300 {
            l.advance(i as f64 * 0.01, (i + 1) as f64 * 0.01, 0.0, 1.0).unwrap();
        }
        let r = mass_decay_bound_check(&l, &sat, 0.0);
        assert!(r.pass);
        for &(t, c) in &l.samples {
            assert!(2.0 * t - (c - 2.0).abs() >= t - 1e-12);
        }
    }
}
