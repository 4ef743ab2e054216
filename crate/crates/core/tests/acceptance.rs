//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` are known not to reach their
//! threshold; they are still run at full strength and reported as FAIL. The
//! process exits nonzero when any other criterion fails or when an expected
//! failure starts passing.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use satflux::config::Overrides;
use satflux::epoch::Trajectory;
use satflux::interval::{self, BoundarySpec, CellArray, IntervalProblem, SolverConfig};
use satflux::verify::{
    comparison_check, compatibility_betas, compatibility_check, compatibility_sweep, k_grid, tolerances,
};
use satflux::viscous::{compare_with_hyperbolic, monotone_limit_probe, ProbeSolver, ViscousBoundary, ViscousConfig};
use satflux::{
    make_builtin, richardson, run_checks, run_ladder, scenarios, solve, solve_frozen, total_mass, MeasureState,
    ProblemConfig,
};

const EXPECTED_FAILURES: [u32; 2] = [6, 7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn scenario(name: &str, dx: f64) -> ProblemConfig {
    scenarios::load(name, &Overrides { dx: Some(dx), ..Default::default() }).expect("shipped scenario parses")
}

fn run(cfg: &ProblemConfig) -> Trajectory {
    solve(&cfg.solve_problem().expect("problem builds")).expect("solve succeeds")
}

fn sup_abs_h(traj: &Trajectory) -> f64 {
    traj.model.sup_h.abs().max(traj.model.inf_h.abs())
}

fn criterion_1() -> Outcome {
    let dx = 2e-3;
    let mut failures = vec![];
    let mut cases = BTreeSet::new();
    let mut count = 0;
    for name in scenarios::names() {
        count += 1;
        let traj = run(&scenario(name, dx));
        if let Some(e) = traj.epochs.first() {
            for iv in &e.intervals {
                if iv.left.is_singular() && iv.right.is_singular() {
                    cases.insert((iv.left.name(), iv.right.name()));
                }
            }
        }
        let bound_rate = 2.0 * sup_abs_h(&traj);
        for l in &traj.ledgers {
            let c = l.birth_mass;
            for w in l.samples.windows(2) {
                let ((_, a), (t, b)) = (w[0], w[1]);
                if c * b < 0.0 {
                    failures.push(format!("{name}: atom {} changes sign at t = {t}", l.index));
                }
                if b.abs() > a.abs() {
                    failures.push(format!("{name}: |C_{}| grows at t = {t}", l.index));
                }
                if (b - c).abs() > bound_rate * t + 10.0 * dx {
                    failures.push(format!("{name}: decay bound fails for atom {} at t = {t}", l.index));
                }
            }
            if let Some(d) = l.death_time {
                let lower = c.abs() / bound_rate - traj.dt;
                if d < lower {
                    failures.push(format!("{name}: atom {} dies at {d} < {lower}", l.index));
                }
            }
        }
    }
    let all_cases = [
        ("singular_plus", "singular_plus"),
        ("singular_plus", "singular_minus"),
        ("singular_minus", "singular_plus"),
        ("singular_minus", "singular_minus"),
    ];
    for case in all_cases {
        if !cases.contains(&case) {
            failures.push(format!("no scenario has a ({}, {}) interval", case.0, case.1));
        }
    }
    if count < 6 {
        failures.push(format!("only {count} scenarios"));
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("{count} scenarios, {} interior boundary cases", cases.len())
    } else {
        failures.truncate(5);
        failures.join("; ")
    };
    Outcome { pass, detail }
}

fn criterion_2() -> Outcome {
    let dx = 2e-3;
    let mut worst: (f64, &str) = (0.0, "");
    for name in scenarios::names() {
        let traj = run(&scenario(name, dx));
        let m0 = total_mass(&traj.initial);
        for s in &traj.snapshots {
            let drift = (total_mass(s) - m0).abs();
            if drift > worst.0 {
                worst = (drift, name);
            }
        }
    }
    Outcome { pass: worst.0 <= 10.0 * dx, detail: format!("max drift {:e} ({}) vs {:e}", worst.0, worst.1, 10.0 * dx) }
}

fn criterion_3() -> Outcome {
    let dxs = [4e-3, 2e-3, 1e-3];
    let mut failures = vec![];
    let mut worst_weak: f64 = 0.0;
    let mut worst_entropy = f64::INFINITY;
    for name in scenarios::names() {
        let ladder = run_ladder(&scenario(name, dxs[0]), &dxs).expect("ladder runs");
        let finest = ladder.levels.last().unwrap();
        // residuals at the round-off floor do not have to decrease
        let monotone = ladder.weak_monotone();
        if !monotone {
            let w: Vec<String> = ladder.levels.iter().map(|l| format!("{:.3e}", l.weak)).collect();
            failures.push(format!("{name}: weak residuals not decreasing [{}]", w.join(", ")));
        }
        if finest.weak >= 5e-3 {
            failures.push(format!("{name}: finest weak residual {:e}", finest.weak));
        }
        if finest.entropy < -1e-3 {
            failures.push(format!("{name}: finest entropy residual {:e}", finest.entropy));
        }
        worst_weak = worst_weak.max(finest.weak);
        worst_entropy = worst_entropy.min(finest.entropy);
    }
    let pass = failures.is_empty();
    let detail = if pass {
        format!("finest weak <= {worst_weak:.3e}, entropy >= {worst_entropy:.3e}")
    } else {
        failures.join("; ")
    };
    Outcome { pass, detail }
}

fn criterion_4() -> Outcome {
    let cfg = scenario("vacuum_atom", 2e-3);
    let problem = cfg.solve_problem().unwrap();
    let coefficient = tolerances(cfg.solver.dx).compatibility;

    let traj = solve(&problem).unwrap();
    let positive = compatibility_sweep(&traj, &k_grid(&traj, 21), 5, coefficient);

    let frozen = solve_frozen(&problem).unwrap();
    let osc = frozen.model.oscillation();
    let mut margin = f64::NEG_INFINITY;
    for beta in compatibility_betas(frozen.horizon, 5) {
        let tol = coefficient * osc * beta.l1_norm();
        for k in k_grid(&frozen, 21) {
            let p = compatibility_check(&frozen, 0, k, &beta, tol).unwrap();
            margin = margin.max(p.violation - tol);
        }
    }
    Outcome {
        pass: positive.pass && margin > 1e-2,
        detail: format!(
            "solution worst {:.3e} <= {:.3e}: {}; frozen margin {:.3e} > 1e-2",
            positive.residual,
            positive.tol,
            if positive.pass { "ok" } else { "violated" },
            margin
        ),
    }
}

fn dirichlet_run(u0: &CellArray, left: f64, right: f64, t_end: f64, config: &SolverConfig) -> interval::IntervalRun {
    let model = make_builtin("saturating_rational", &[1.0]).unwrap();
    let problem = IntervalProblem::new(u0.clone(), BoundarySpec::dirichlet(left), BoundarySpec::dirichlet(right));
    let times: Vec<f64> = (1..=8).map(|i| t_end * i as f64 / 8.0).collect();
    interval::run(&problem, &model, config, t_end, &times).unwrap()
}

fn criterion_5() -> Outcome {
    let dx: f64 = 2e-3;
    let config = SolverConfig::with_dx(dx);
    let model = make_builtin("saturating_rational", &[1.0]).unwrap();
    let n = (1.0 / dx).round() as usize;
    let a0 = CellArray::uniform(0.0, 1.0, n, |x| (6.0 * x).sin());
    let b0 = CellArray::uniform(0.0, 1.0, n, |x| 0.5 * (4.0 * x).cos() - 0.2);
    let cases = [(0.0, 0.0), (0.5, -1.0), (-1.0, 2.0), (2.0, 0.5)];
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut pass = true;
    for &(n1, n2) in &cases {
        for m2 in [n2, n2 + 1.0] {
            let m1 = n1 + 1.0;
            let a = dirichlet_run(&a0, m1, m2, 1.0, &config);
            let b = dirichlet_run(&b0, n1, n2, 1.0, &config);
            let r = comparison_check(&a, &b, (m1, m2, n1, n2), &model, 10.0 * dx).unwrap();
            worst = worst.max(r.worst_excess);
            pass &= r.pass;
        }
    }
    let a = dirichlet_run(&a0, 1.0, -0.5, 1.0, &config);
    let b = dirichlet_run(&a0, 1.0, -0.5, 1.0, &config);
    let same = comparison_check(&a, &b, (1.0, -0.5, 1.0, -0.5), &model, 0.0).unwrap();
    let identical = same.positive_part.iter().map(|p| p.1).fold(0.0, f64::max);
    Outcome {
        pass: pass && identical <= 1e-10,
        detail: format!("worst excess over bound {worst:.3e}; identical data {identical:e}"),
    }
}

fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
        let atoms: f64 = sa.atoms.iter().zip(&sb.atoms).map(|(x, y)| (x.mass - y.mass).abs()).sum();
        worst = worst.max(sa.regular.l1_distance(&sb.regular) + atoms);
    }
    if a.snapshots.len() != b.snapshots.len() {
        return f64::INFINITY;
    }
    worst
}

fn with_ghost(name: &str, dx: f64, ghost: f64) -> Trajectory {
    run(&scenarios::load(name, &Overrides { dx: Some(dx), ghost: Some(ghost), ..Default::default() }).unwrap())
}

fn criterion_6() -> Outcome {
    let dx = 2e-3;
    let saturating = trajectory_distance(&with_ghost("vacuum_atom", dx, 1e3), &with_ghost("vacuum_atom", dx, 2e3));
    let sat_pass = saturating < 1e-4;

    // saturating flux on one interval, as in the solver contract
    let model = make_builtin("saturating_rational", &[1.0]).unwrap();
    let field = CellArray::uniform(0.0, 1.0, 500, |_| 0.0);
    let problem = IntervalProblem::new(field, BoundarySpec::singular_plus(1e3), BoundarySpec::free());
    let config = SolverConfig { m_ghost: Some(1e3), ..SolverConfig::with_dx(dx) };
    let interval_gap = interval::ghost_stability_check(&problem, &model, &config, 1.0).unwrap();

    let pa = with_ghost("pwl_front", dx, 10.0);
    let pb = with_ghost("pwl_front", dx, 20.0);
    let pwl_identical = pa.snapshots == pb.snapshots && pa.ledgers == pb.ledgers && pa.probes == pb.probes;

    let u0 = CellArray::uniform(0.0, 1.0, 200, |x| 0.5 * (5.0 * x).sin());
    let levels = [(1.0, 1.0), (2.0, 1.0), (2.0, 0.5), (4.0, 0.5), (4.0, 0.25)];
    let hyper =
        monotone_limit_probe(&model, &u0, &levels, &ProbeSolver::Hyperbolic(SolverConfig::with_dx(5e-3)), 0.5, 0.0);
    let visc = monotone_limit_probe(
        &model,
        &u0,
        &levels,
        &ProbeSolver::Viscous(ViscousConfig::new(0.05, ViscousBoundary::Free, ViscousBoundary::Free)),
        0.5,
        0.0,
    );
    let violations = |r: &Result<satflux::viscous::ProbeReport, _>| match r {
        Ok(rep) => rep.violations,
        Err(_) => usize::MAX,
    };
    let probe_pass = violations(&hyper) == 0 && violations(&visc) == 0;
    Outcome {
        pass: sat_pass && pwl_identical && probe_pass,
        detail: format!(
            "saturating M=1e3 vs 2e3: {saturating:.3e} (< 1e-4 {}), single interval {interval_gap:.3e}; \
             piecewise linear identical: {pwl_identical}; ordering violations {} / {}",
            if sat_pass { "ok" } else { "not met" },
            violations(&hyper),
            violations(&visc)
        ),
    }
}

fn oracle_state(cfg: &ProblemConfig, t: f64) -> MeasureState {
    let data = cfg.initial_data();
    let (lo, hi) = data.support().unwrap();
    let reach = cfg.model.lipschitz * t + 0.5;
    MeasureState::from_initial(&data, lo - reach, hi + reach, cfg.solver.dx).unwrap()
}

fn criterion_7() -> Outcome {
    let dx = 1e-3;
    let t = 0.5;
    let eps = [0.1, 0.05, 0.025];
    let mut pass = true;
    let mut parts = vec![];
    for name in ["vacuum_atom", "dipole"] {
        let cfg = scenario(name, dx);
        let state = oracle_state(&cfg, t);
        let d: Vec<f64> = eps
            .iter()
            .map(|&e| compare_with_hyperbolic(&cfg.model, &state, (1.0, 1.0), e, t, &cfg.solver).unwrap().distance)
            .collect();
        let monotone = d.windows(2).all(|w| w[1] < w[0]);
        let close = d[2] < 5e-2;
        pass &= monotone && close;
        parts.push(format!("{name} [{:.3e}, {:.3e}, {:.3e}] monotone {monotone}, < 5e-2 {close}", d[0], d[1], d[2]));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn criterion_8() -> Outcome {
    let dxs = [4e-3, 2e-3, 1e-3];
    let taus: Vec<f64> =
        dxs.iter().map(|&dx| run(&scenario("vacuum_atom", dx)).ledgers[0].death_time.expect("atom dies")).collect();
    let e = richardson([taus[0], taus[1], taus[2]]);
    Outcome {
        pass: (e.value - 1.0).abs() <= 0.05,
        detail: format!("levels [{}, {}, {}] -> {}", taus[0], taus[1], taus[2], e.value),
    }
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let dx = 4e-3;
    let root = tempfile::tempdir().unwrap();
    let mut differing = vec![];
    for name in scenarios::names() {
        let mut dirs = vec![];
        for rep in 0..2 {
            let cfg = scenario(name, dx);
            let traj = run(&cfg);
            let report = run_checks(&traj, &cfg.checks).unwrap();
            let dir = root.path().join(format!("{name}-{rep}"));
            satflux::emit(&cfg, &traj, &report, &dir).unwrap();
            dirs.push(dir_contents(&dir));
        }
        if dirs[0] != dirs[1] {
            differing.push(name);
        }
    }
    let pass = differing.is_empty();
    Outcome {
        pass,
        detail: if pass { "all scenarios bit-identical".into() } else { format!("differ: {}", differing.join(", ")) },
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 9] = [
        (1, "sign and monotonicity", criterion_1),
        (2, "conservation", criterion_2),
        (3, "weak/entropy ladder", criterion_3),
        (4, "compatibility +/-", criterion_4),
        (5, "comparison", criterion_5),
        (6, "ghost saturation", criterion_6),
        (7, "viscous oracle", criterion_7),
        (8, "death time", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut unexpected = vec![];
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|s| s == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let expected_fail = EXPECTED_FAILURES.contains(&id);
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        let note = match (out.pass, expected_fail) {
            (false, true) => " (known)",
            (true, true) => " (unexpected pass)",
            _ => "",
        };
        println!("criterion {id} {name:<22} {verdict}{note}  [{:.1}s] {}", start.elapsed().as_secs_f64(), out.detail);
        if out.pass == expected_fail {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
