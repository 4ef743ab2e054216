//! Full Cauchy problem: the line is split at the alive atoms, every interval
//! is advanced with a shared time step, atom masses follow the interface
//! fluxes, and neighbouring intervals merge when an atom dies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atoms::{AtomError, MassLedger};
use crate::flux::FluxModel;
use crate::interval::{boundary_fluxes, step_into, BoundaryKind, BoundarySpec, SolverConfig, SolverError};
use crate::measure::{MeasureError, MeasureState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpochError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveProblem {
    pub model: FluxModel,
    pub initial: MeasureState,
    pub horizon: f64,
    pub config: SolverConfig,
    /// Requested snapshot times (taken at the first step boundary at or
    /// after each request).
    pub output_times: Vec<f64>,
    /// Extra snapshot spacing used by quadrature-based checks; `None` keeps
    /// only the requested times plus the endpoints.
    pub record_interval: Option<f64>,
}

impl SolveProblem {
    pub fn new(model: FluxModel, initial: MeasureState, horizon: f64, config: SolverConfig) -> Self {
        SolveProblem { model, initial, horizon, config, output_times: vec![], record_interval: Some(horizon / 200.0) }
    }

    /// Requested outputs merged with the recording grid, sorted.
    pub fn snapshot_requests(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.output_times.iter().copied().filter(|t| *t > 0.0 && *t <= self.horizon).collect();
        if let Some(h) = self.record_interval.filter(|h| *h > 0.0) {
            let n = (self.horizon / h).round().max(1.0) as usize;
            out.extend((1..n).map(|i| self.horizon * i as f64 / n as f64));
        }
        out.push(self.horizon);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochInterval {
    pub lo: f64,
    pub hi: f64,
    pub left: BoundaryKind,
    pub right: BoundaryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: f64,
    pub end: f64,
    pub intervals: Vec<EpochInterval>,
    pub alive: Vec<usize>,
    /// Atoms whose death closed this epoch.
    pub deaths: Vec<usize>,
}

/// Values in the two cells on each side of an atom: `[left2, left1, right1,
/// right2]`, `left1`/`right1` being adjacent to the atom.
pub type Probe = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub t: f64,
    pub values: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: FluxModel,
    pub config: SolverConfig,
    pub m_ghost: f64,
    pub dt: f64,
    pub horizon: f64,
    pub initial: MeasureState,
    /// Strictly increasing in time; the first entry is the initial state.
    pub snapshots: Vec<MeasureState>,
    pub ledgers: Vec<MassLedger>,
    /// One sample per ledger time. Each sample holds the cell values used
    /// during the following step.
    pub probes: Vec<ProbeSample>,
    pub epochs: Vec<Epoch>,
    pub min_value: f64,
    pub max_value: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &MeasureState {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    pub fn atom_count(&self) -> usize {
        self.ledgers.len()
    }

    /// Times of the mass samples (shared by every ledger).
    pub fn step_times(&self) -> Vec<f64> {
        self.ledgers.first().map(|l| l.samples.iter().map(|s| s.0).collect()).unwrap_or_default()
    }
}

struct Layout {
    // breakpoint index of each atom is atom index + 1
    offsets: Vec<usize>,
    widths: Vec<f64>,
}

#[derive(Clone)]
struct Segment {
    first: usize,
    last: usize,
    left: BoundarySpec,
    right: BoundarySpec,
    left_atom: Option<usize>,
    right_atom: Option<usize>,
    lo: f64,
    hi: f64,
}

fn segments(state: &MeasureState, layout: &Layout, alive: &[bool], m_ghost: f64) -> Vec<Segment> {
    let bps = &state.regular.breakpoints;
    let mut out = Vec::new();
    let mut start_block = 0;
    let mut left_atom: Option<usize> = None;
    let n_blocks = state.regular.blocks.len();
    for block in 0..n_blocks {
        // the breakpoint to the right of this block carries atom `block`
        let closing_atom = if block + 1 < n_blocks && alive[block] { Some(block) } else { None };
        if closing_atom.is_some() || block + 1 == n_blocks {
            let spec = |atom: Option<usize>| match atom {
                Some(j) => BoundarySpec::singular(state.atoms[j].birth_mass, m_ghost),
                None => BoundarySpec::free(),
            };
            out.push(Segment {
                first: layout.offsets[start_block],
                last: layout.offsets[block + 1],
                left: spec(left_atom),
                right: spec(closing_atom),
                left_atom,
                right_atom: closing_atom,
                lo: bps[start_block],
                hi: bps[block + 1],
            });
            start_block = block + 1;
            left_atom = closing_atom;
        }
    }
    out
}

fn probes(values: &[f64], layout: &Layout, n_atoms: usize) -> Vec<Probe> {
    (0..n_atoms)
        .map(|j| {
            let b = layout.offsets[j + 1];
            [values[b - 2], values[b - 1], values[b], values[b + 1]]
        })
        .collect()
}

fn epoch_from(segs: &[Segment], alive: &[bool], start: f64) -> Epoch {
    Epoch {
        start,
        end: start,
        intervals: segs
            .iter()
            .map(|s| EpochInterval { lo: s.lo, hi: s.hi, left: s.left.kind, right: s.right.kind })
            .collect(),
        alive: alive.iter().enumerate().filter(|(_, a)| **a).map(|(j, _)| j).collect(),
        deaths: vec![],
    }
}

/// Solves the Cauchy problem on the truncated domain of `problem.initial`.
pub fn solve(problem: &SolveProblem) -> Result<Trajectory, EpochError> {
    run(problem, false)
}

/// The "frozen" candidate used as a counterexample: the regular part evolves
/// as if the atoms were absent and every atom keeps its initial mass.
pub fn solve_frozen(problem: &SolveProblem) -> Result<Trajectory, EpochError> {
    run(problem, true)
}

fn run(problem: &SolveProblem, frozen: bool) -> Result<Trajectory, EpochError> {
    let SolveProblem { model, initial, horizon, config, .. } = problem;
    let horizon = *horizon;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(EpochError::Horizon(horizon));
    }
    config.validate()?;
    initial.validate()?;

    let layout = Layout { offsets: initial.regular.block_offsets(), widths: initial.regular.widths() };
    let min_width = layout.widths.iter().copied().fold(f64::INFINITY, f64::min);
    let dt_cfl = config.dt(model, min_width);
    let (u_min, u_max) = initial.regular.min_max();
    let m_ghost = config.ghost_for(model, u_min.abs().max(u_max.abs()));
    let tol = MassLedger::default_tol(config.dx, model).max(1e-12);

    let n_atoms = initial.atoms.len();
    let mut ledgers = initial
        .atoms
        .iter()
        .enumerate()
        .map(|(j, a)| MassLedger::new(j, a.position, a.mass, tol))
        .collect::<Result<Vec<_>, _>>()?;
    let mut alive: Vec<bool> = if frozen { vec![false; n_atoms] } else { vec![true; n_atoms] };

    let mut values = initial.regular.values();
    let mut next = values.clone();
    let (mut min_value, mut max_value) = (u_min, u_max);

    let requests = problem.snapshot_requests();
    let mut request = 0;
    let mut snapshots = vec![initial.clone()];
    let mut probe_log = vec![ProbeSample { t: 0.0, values: probes(&values, &layout, n_atoms) }];

    let mut segs = segments(initial, &layout, &alive, m_ghost);
    let mut epochs = vec![epoch_from(&segs, &alive, 0.0)];

    let mut t = 0.0;
    let mut fluxes = vec![(0.0, 0.0); segs.len()];
    while t < horizon {
        let mut dt = dt_cfl.min(horizon - t);
        if horizon - (t + dt) <= 1e-12 * horizon {
            dt = horizon - t;
        }

        fluxes.clear();
        for s in &segs {
            let f = boundary_fluxes(&values[s.first..s.last], &s.left, &s.right, model, config.scheme);
            fluxes.push((f.left, f.right));
        }

        // jump[j] = flux into the right interval - flux out of the left one
        let mut jumps = vec![0.0; n_atoms];
        for (k, s) in segs.iter().enumerate() {
            if let Some(j) = s.right_atom {
                jumps[j] -= fluxes[k].1;
            }
            if let Some(j) = s.left_atom {
                jumps[j] += fluxes[k].0;
            }
        }
        let mut dying = vec![];
        if !frozen {
            let mut first: Option<f64> = None;
            let mut horizons = vec![None; n_atoms];
            for j in (0..n_atoms).filter(|&j| alive[j]) {
                ledgers[j].check_jump(0.0, jumps[j], t)?;
                if let Some(tau) = ledgers[j].time_to_death(jumps[j]) {
                    horizons[j] = Some(tau);
                    first = Some(first.map_or(tau, |f: f64| f.min(tau)));
                }
            }
            if let Some(tau) = first {
                if tau <= dt * (1.0 + 1e-9) {
                    dt = dt.min(tau);
                    dying =
                        (0..n_atoms).filter(|&j| matches!(horizons[j], Some(h) if h <= tau * (1.0 + 1e-9))).collect();
                }
            }
        }
        let t1 = if dt == horizon - t { horizon } else { t + dt };
        let dt = t1 - t;

        for s in &segs {
            step_into(
                &values[s.first..s.last],
                &layout.widths[s.first..s.last],
                &s.left,
                &s.right,
                model,
                config.scheme,
                dt,
                &mut next[s.first..s.last],
            )
            .map_err(|e| match e {
                SolverError::BlowUp { cell, value, .. } => SolverError::BlowUp { cell: cell + s.first, value, time: t },
                other => other,
            })?;
        }
        std::mem::swap(&mut values, &mut next);

        for (j, ledger) in ledgers.iter_mut().enumerate() {
            let jump = if alive[j] { jumps[j] } else { 0.0 };
            ledger.advance(t, t1, 0.0, jump)?;
        }
        let mut died = vec![];
        for j in 0..n_atoms {
            if alive[j] && (dying.contains(&j) || !ledgers[j].is_alive()) {
                let residual = ledgers[j].birth_mass - ledgers[j].integral;
                ledgers[j].kill();
                ledgers[j].death_time = Some(t1);
                // keep the round-off left at the crossing in the field
                let cell = layout.offsets[j + 1] - 1;
                values[cell] += residual / layout.widths[cell];
                alive[j] = false;
                died.push(j);
            }
        }

        for &v in &values {
            min_value = min_value.min(v);
            max_value = max_value.max(v);
        }
        t = t1;
        probe_log.push(ProbeSample { t, values: probes(&values, &layout, n_atoms) });

        if !died.is_empty() {
            let current = epochs.last_mut().expect("epoch log is never empty");
            current.end = t;
            current.deaths = died;
            segs = segments(initial, &layout, &alive, m_ghost);
            epochs.push(epoch_from(&segs, &alive, t));
        }

        let mut take = false;
        while request < requests.len() && requests[request] <= t * (1.0 + 1e-12) {
            request += 1;
            take = true;
        }
        if take || t == horizon {
            let mut state = initial.clone();
            state.time = t;
            state.regular.set_values(&values);
            for (atom, ledger) in state.atoms.iter_mut().zip(&ledgers) {
                atom.mass = ledger.mass;
                atom.death_time = ledger.death_time;
            }
            if snapshots.last().map(|s| s.time) != Some(t) {
                snapshots.push(state);
            }
        }
    }
    let current = epochs.last_mut().expect("epoch log is never empty");
    current.end = t;
    if epochs.len() > 1 && epochs.last().map(|e| e.start == e.end).unwrap_or(false) {
        epochs.pop();
    }

    Ok(Trajectory {
        model: model.clone(),
        config: config.clone(),
        m_ghost,
        dt: dt_cfl,
        horizon,
        initial: initial.clone(),
        snapshots,
        ledgers,
        probes: probe_log,
        epochs,
        min_value,
        max_value,
    })
}

/// `(atom index, death time)` sorted by time.
pub fn death_schedule(traj: &Trajectory) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = traj.ledgers.iter().filter_map(|l| l.death_time.map(|t| (l.index, t))).collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}
