use satflux::interval::{self, BoundarySpec, CellArray, IntervalProblem, SolverConfig};
use satflux::{make_builtin, FluxModel};

/// Exact entropy solution of the Riemann problem at `xi = x / t`.
fn riemann(model: &FluxModel, ul: f64, ur: f64, xi: f64) -> f64 {
    let n = 4000;
    let g = |u: f64| model.eval(u) - xi * u;
    let pick = |better: &dyn Fn(f64, f64) -> bool| {
        let (mut best, mut arg) = (g(ul), ul);
        for i in 1..=n {
            let u = ul + (ur - ul) * i as f64 / n as f64;
            if better(g(u), best) {
                best = g(u);
                arg = u;
            }
        }
        arg
    };
    if ul <= ur {
        pick(&|a, b| a < b)
    } else {
        pick(&|a, b| a > b)
    }
}

fn riemann_error(model: &FluxModel, ul: f64, ur: f64, dx: f64, t: f64) -> f64 {
    let (lo, hi) = (-2.0, 2.0);
    let n = ((hi - lo) / dx).round() as usize;
    let values: Vec<f64> = (0..n).map(|i| if lo + (i as f64 + 0.5) * dx < 0.0 { ul } else { ur }).collect();
    let p = IntervalProblem::new(
        CellArray { x_left: lo, widths: vec![dx; n], values },
        BoundarySpec::free(),
        BoundarySpec::free(),
    );
    let out = interval::run(&p, model, &SolverConfig::with_dx(dx), t, &[t]).unwrap();
    let sub = 8;
    let mut err = 0.0;
    for (i, v) in out.field.values.iter().enumerate() {
        let x0 = lo + i as f64 * dx;
        let exact: f64 =
            (0..sub).map(|k| riemann(model, ul, ur, (x0 + (k as f64 + 0.5) * dx / sub as f64) / t)).sum::<f64>()
                / sub as f64;
        err += (v - exact).abs() * dx;
    }
    err
}

#[test]
fn nonmonotone_riemann_problems_match_the_exact_solution() {
    let model = make_builtin("nonmonotone_bump", &[1.0, 1.0]).unwrap();
    for &(ul, ur) in &[(1.5, -0.5), (-0.5, 1.5), (2.0, 0.3), (-1.5, 1.0)] {
        let coarse = riemann_error(&model, ul, ur, 8e-3, 1.0);
        let fine = riemann_error(&model, ul, ur, 2e-3, 1.0);
        assert!(fine < 2e-2, "({ul}, {ur}): L1 error {fine}");
        assert!(fine < 0.8 * coarse, "({ul}, {ur}): {coarse} -> {fine}");
    }
}

fn front_error(dx: f64, t: f64) -> (f64, Vec<f64>) {
    let model = make_builtin("bounded_piecewise_linear", &[-2.0, -1.0, 0.0, 0.0, 2.0, 1.0]).unwrap();
    let n = (2.0 / dx).round() as usize;
    let p = IntervalProblem::new(
        CellArray { x_left: 0.0, widths: vec![dx; n], values: vec![0.0; n] },
        BoundarySpec::singular_plus(10.0),
        BoundarySpec::free(),
    );
    let out = interval::run(&p, &model, &SolverConfig::with_dx(dx), t, &[t]).unwrap();
    let err = out
        .field
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (a, b) = (i as f64 * dx, (i + 1) as f64 * dx);
            let front = 0.5 * t;
            let covered = (front.min(b) - a).max(0.0);
            (v - 2.0 * covered / dx).abs() * dx
        })
        .sum();
    (err, out.left_trace.samples.iter().map(|s| s.value).collect())
}

#[test]
fn saturated_inflow_builds_a_front_at_the_contact_speed() {
    let (coarse, _) = front_error(8e-3, 1.0);
    let (fine, trace) = front_error(2e-3, 1.0);
    assert!(fine < 0.1, "L1 error {fine}");
    assert!(fine < 0.7 * coarse, "{coarse} -> {fine}");
    assert!(!trace.is_empty());
    for v in trace {
        assert!((v - 1.0).abs() < 1e-12, "left trace {v}");
    }
}
