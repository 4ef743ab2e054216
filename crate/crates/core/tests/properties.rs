use proptest::prelude::*;
use satflux::atoms::MassLedger;
use satflux::config::parse_config;
use satflux::interval::{self, step, BoundaryKind, BoundarySpec, CellArray, IntervalProblem, SolverConfig};
use satflux::{make_builtin, numerical_flux, FluxModel, NumericalFlux};

fn family() -> impl Strategy<Value = FluxModel> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|a| make_builtin("saturating_rational", &[a]).unwrap()),
        (-3.0f64..-0.2).prop_map(|a| make_builtin("saturating_rational", &[a]).unwrap()),
        (0.2f64..3.0, 0.2f64..3.0).prop_map(|(a, s)| make_builtin("arctan_like", &[a, s]).unwrap()),
        (0.2f64..2.0, 0.3f64..2.0).prop_map(|(a, w)| make_builtin("nonmonotone_bump", &[a, w]).unwrap()),
        (0.2f64..2.0, -1.0f64..1.0).prop_map(|(s, y)| {
            make_builtin("bounded_piecewise_linear", &[-2.0, -1.0, 0.0, 0.0, 1.0, s, 3.0, y]).unwrap()
        }),
    ]
}

fn spec() -> impl Strategy<Value = BoundarySpec> {
    prop_oneof![
        Just(BoundarySpec::free()),
        (-3.0f64..3.0).prop_map(BoundarySpec::dirichlet),
        (5.0f64..50.0).prop_map(BoundarySpec::singular_plus),
        (5.0f64..50.0).prop_map(BoundarySpec::singular_minus),
    ]
}

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn positive_part(u: &[f64], v: &[f64], h: f64) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).max(0.0) * h).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn godunov_is_consistent_monotone_and_bounded(model in family(), a in -5.0f64..5.0, b in -5.0f64..5.0, d in 0.0f64..1.0) {
        let f = |x: f64, y: f64| NumericalFlux::Godunov.eval(&model, x, y);
        prop_assert!((f(a, a) - model.eval(a)).abs() < 1e-14);
        prop_assert!(f(a + d, b) >= f(a, b) - 1e-12);
        prop_assert!(f(a, b + d) <= f(a, b) + 1e-12);
        let v = f(a, b);
        prop_assert!(v >= model.inf_h - 1e-12 && v <= model.sup_h + 1e-12);
        // minimum of H on [a, b] when a <= b, maximum on [b, a] otherwise
        let (lo, hi) = (a.min(b), a.max(b));
        let samples: Vec<f64> = (0..=400).map(|i| model.eval(lo + (hi - lo) * i as f64 / 400.0)).collect();
        let slack = model.lipschitz * (hi - lo) / 400.0 + 1e-12;
        if a <= b {
            let m = samples.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(v <= m + 1e-12 && v >= m - slack);
        } else {
            let m = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= m - 1e-12 && v <= m + slack);
        }
    }

    #[test]
    fn rusanov_is_consistent_and_monotone(model in family(), a in -5.0f64..5.0, b in -5.0f64..5.0, d in 0.0f64..1.0) {
        prop_assert!((numerical_flux(a, a, &model) - model.eval(a)).abs() < 1e-14);
        prop_assert!(numerical_flux(a + d, b, &model) >= numerical_flux(a, b, &model) - 1e-12);
        prop_assert!(numerical_flux(a, b + d, &model) <= numerical_flux(a, b, &model) + 1e-12);
    }

    #[test]
    fn step_obeys_max_principle(model in family(), values in field(40), l in spec(), r in spec()) {
        let u = CellArray { x_left: 0.0, widths: vec![0.025; 40], values: values.clone() };
        let config = SolverConfig::with_dx(0.025);
        let (next, _, _) = step(&u, (&l, &r), &model, &config).unwrap();
        let ghosts = |s: &BoundarySpec, adj: f64| s.ghost(adj);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(ghosts(&l, values[0])).min(ghosts(&r, values[39]));
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(ghosts(&l, values[0])).max(ghosts(&r, values[39]));
        for v in &next.values {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn cell_entropy_inequality(model in family(), values in field(30), l in spec(), r in spec(), k in -3.0f64..3.0) {
        let h = 1.0 / 30.0;
        let u = CellArray { x_left: 0.0, widths: vec![h; 30], values: values.clone() };
        let config = SolverConfig::with_dx(h);
        let dt = config.dt(&model, h);
        let (next, _, _) = step(&u, (&l, &r), &model, &config).unwrap();
        let mut ext = vec![l.ghost(values[0])];
        ext.extend(&values);
        ext.push(r.ghost(values[29]));
        let f = |a: f64, b: f64| NumericalFlux::Godunov.eval(&model, a, b);
        let g = |a: f64, b: f64| f(a.max(k), b.max(k)) - f(a.min(k), b.min(k));
        for i in 0..30 {
            let residual = (next.values[i] - k).abs() - (values[i] - k).abs()
                + dt / h * (g(ext[i + 1], ext[i + 2]) - g(ext[i], ext[i + 1]));
            prop_assert!(residual <= 1e-12, "cell {} residual {}", i, residual);
        }
    }

    #[test]
    fn ordered_data_stay_ordered_and_contract(model in family(), base in field(50), bump in field(50), l in spec(), r in spec()) {
        let h = 0.02;
        let u0: Vec<f64> = base.clone();
        let v0: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b.abs()).collect();
        let config = SolverConfig::with_dx(h);
        let times = [0.1, 0.2, 0.3, 0.4];
        let run = |v: &Vec<f64>| {
            let p = IntervalProblem::new(CellArray { x_left: 0.0, widths: vec![h; 50], values: v.clone() }, l, r);
            interval::run(&p, &model, &config, 0.4, &times).unwrap()
        };
        let (a, b) = (run(&u0), run(&v0));
        for (x, y) in a.field.values.iter().zip(&b.field.values) {
            prop_assert!(x <= &(y + 1e-12));
        }
        // contraction needs fixed boundary data; a free end copies the solution
        if l.kind == BoundaryKind::Free || r.kind == BoundaryKind::Free {
            return Ok(());
        }
        let swapped = run(&bump);
        let mut last = positive_part(&bump, &u0, h);
        for ((_, sa), (_, sb)) in swapped.snapshots.iter().zip(&a.snapshots).skip(1) {
            let now = positive_part(sa, sb, h);
            prop_assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn ghost_doubling_is_invisible_for_flat_flux(values in field(40), m in 3.5f64..20.0) {
        let model = make_builtin("bounded_piecewise_linear", &[-3.0, -1.0, 0.0, 0.0, 3.0, 1.0]).unwrap();
        let p = IntervalProblem::new(
            CellArray { x_left: 0.0, widths: vec![0.025; 40], values },
            BoundarySpec::singular_plus(m),
            BoundarySpec::singular_minus(m),
        );
        let config = SolverConfig { m_ghost: Some(m), ..SolverConfig::with_dx(0.025) };
        prop_assert_eq!(interval::ghost_stability_check(&p, &model, &config, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ledger_mass_never_changes_sign(c in prop_oneof![0.1f64..2.0, -2.0f64..-0.1], jumps in prop::collection::vec(0.0f64..1.0, 1..40)) {
        let mut ledger = MassLedger::new(0, 0.0, c, 1e-9).unwrap();
        for (i, j) in jumps.iter().enumerate() {
            let (t0, t1) = (i as f64 * 0.1, (i + 1) as f64 * 0.1);
            ledger.advance(t0, t1, 0.0, c.signum() * j).unwrap();
        }
        for w in ledger.samples.windows(2) {
            prop_assert!(w[1].1 * c >= 0.0);
            prop_assert!(w[1].1.abs() <= w[0].1.abs());
        }
        let total: f64 = jumps.iter().map(|j| 0.1 * j).sum();
        if total < c.abs() {
            prop_assert!(ledger.death_time.is_none());
            prop_assert!((ledger.mass - c.signum() * (c.abs() - total)).abs() < 1e-12);
        } else {
            prop_assert!(ledger.death_time.is_some());
            prop_assert_eq!(ledger.mass, 0.0);
        }
    }

    #[test]
    fn config_echo_is_a_fixed_point(
        horizon in 0.1f64..5.0,
        atoms in prop::collection::btree_map(-50i32..50, prop_oneof![0.01f64..3.0, -3.0f64..-0.01], 0..5),
        value in -2.0f64..2.0,
        dx in 1e-3f64..5e-2,
        seed in any::<u64>(),
    ) {
        let atoms: Vec<String> = atoms.iter().map(|(x, c)| format!("{{ x = {:?}, c = {:?} }}", *x as f64 * 0.1, c)).collect();
        let text = format!(
            "horizon = {horizon:?}\nflux = {{ family = \"arctan_like\", params = [1.0, 0.5] }}\n\
             u0r = [{{ interval = [-1.0, 1.5], value = {value:?} }}]\natoms = [{}]\n\
             [solver]\ndx = {dx:?}\n[checks]\nseed = {seed}\n",
            atoms.join(", ")
        );
        let cfg = parse_config(&text).unwrap();
        let echo = cfg.to_toml();
        let again = parse_config(&echo).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_toml(), echo);
    }
}
