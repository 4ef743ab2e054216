//! Measure-valued entropy solutions of scalar conservation laws with a
//! bounded flux and Dirac initial data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atoms;
pub mod config;
pub mod convergence;
pub mod epoch;
pub mod flux;
pub mod interval;
pub mod measure;
pub mod output;
pub mod scenarios;
pub mod verify;
pub mod viscous;

pub use atoms::{mass_decay_bound_check, persistence_lower_bound, AtomError, MassLedger};
pub use config::{parse_config, parse_config_with, ConfigError, Overrides, ProblemConfig};
pub use convergence::{richardson, run_ladder, Extrapolation, Ladder, LadderLevel};
pub use epoch::{death_schedule, solve, solve_frozen, Epoch, EpochError, SolveProblem, Trajectory};
pub use flux::{make_builtin, numerical_flux, FluxError, FluxFamily, FluxModel, NumericalFlux};
pub use interval::{
    BoundaryKind, BoundarySpec, CellArray, IntervalProblem, IntervalRun, SolverConfig, SolverError, TraceRecorder,
};
pub use measure::{
    l1_norm_regular, singular_parts, total_mass, Atom, InitialData, MeasureError, MeasureState, RegularField, Segment,
};
pub use output::{emit, emit_report, emit_trajectory, load_run, write_atomic, LoadError};
pub use verify::{
    compatibility_check, entropy_residual, run_checks, weak_residual, CheckOptions, CheckResult, TestFunction,
    VerificationReport,
};
pub use viscous::{
    compare_with_hyperbolic, monotone_limit_probe, oracle_fields, solve_viscous, OracleComparison, OracleFields,
    ViscousBoundary, ViscousConfig, ViscousRun,
};
