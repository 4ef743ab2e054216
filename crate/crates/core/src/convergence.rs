//! Grid-refinement ladders and Richardson extrapolation.

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ProblemConfig};
use crate::epoch::{solve, EpochError, Trajectory};
use crate::measure::RegularField;
use crate::verify::{entropy_residual, k_grid, random_test_functions, weak_residual};

#[derive(Debug, thiserror::Error)]
pub enum LadderError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solve(#[from] EpochError),
    #[error("ladder needs at least one level")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    /// Observed order, when the three-level estimate was usable.
    pub order: Option<f64>,
}

/// Extrapolate `values` taken at cell sizes `h, h/2, h/4` to `h = 0`.
///
/// Uses the observed order when the differences contract geometrically with
/// an order in `[0.25, 4]`, and the first-order estimate otherwise.
pub fn richardson(values: [f64; 3]) -> Extrapolation {
    let [a, b, c] = values;
    let (d1, d2) = (b - a, c - b);
    if d1 != 0.0 && d2 != 0.0 && d1.signum() == d2.signum() {
        let p = (d1 / d2).log2();
        if (0.25..=4.0).contains(&p) {
            let r = 2f64.powf(p);
            return Extrapolation { value: c + d2 / (r - 1.0), order: Some(p) };
        }
    }
    Extrapolation { value: 2.0 * c - b, order: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub dx: f64,
    pub steps: usize,
    pub death_times: Vec<Option<f64>>,
    /// Largest |weak residual| over the test functions.
    pub weak: f64,
    /// Smallest entropy residual over the test functions and the k-grid.
    pub entropy: f64,
    /// L1 distance of the final field to the previous (coarser) level.
    pub refinement_gap: Option<f64>,
}

const ROUND_OFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub levels: Vec<LadderLevel>,
}

impl Ladder {
    /// Weak residuals strictly decrease, or have reached round-off.
    pub fn weak_monotone(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].weak < w[0].weak || w[1].weak < ROUND_OFF)
    }

    /// Extrapolated death time of atom `j`, from the last three levels.
    pub fn death_time(&self, j: usize) -> Option<Extrapolation> {
        let n = self.levels.len();
        if n < 3 {
            return None;
        }
        let t = |k: usize| self.levels[k].death_times.get(j).copied().flatten();
        Some(richardson([t(n - 3)?, t(n - 2)?, t(n - 1)?]))
    }

    pub fn render(&self) -> String {
        let mut s = String::from("dx,steps,weak,entropy,refinement_gap,death_times\n");
        for l in &self.levels {
            let deaths: Vec<String> =
                l.death_times.iter().map(|d| d.map(crate::config::fmt_float).unwrap_or_else(|| "-".into())).collect();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                crate::config::fmt_float(l.dx),
                l.steps,
                crate::config::fmt_float(l.weak),
                crate::config::fmt_float(l.entropy),
                l.refinement_gap.map(crate::config::fmt_float).unwrap_or_else(|| "-".into()),
                deaths.join(" ")
            ));
        }
        s
    }
}

fn final_gap(coarse: &RegularField, fine: &RegularField) -> f64 {
    let edges = fine.edges();
    let widths = fine.widths();
    coarse.average_onto(&edges).iter().zip(fine.values()).zip(widths).map(|((a, b), w)| (a - b).abs() * w).sum()
}

/// Residual summary of one trajectory with the check options of `config`.
pub fn residuals(config: &ProblemConfig, traj: &Trajectory) -> (f64, f64) {
    let zetas = random_test_functions(traj, config.checks.n_test_functions, config.checks.seed);
    let ks = k_grid(traj, config.checks.n_k);
    let weak = zetas.iter().map(|z| weak_residual(traj, z).abs()).fold(0.0, f64::max);
    let entropy = zetas
        .iter()
        .flat_map(|z| ks.iter().map(move |&k| (k, z)))
        .map(|(k, z)| entropy_residual(traj, k, z))
        .fold(f64::INFINITY, f64::min);
    (weak, entropy)
}

/// Solve `config` at each cell size and collect residuals and death times.
pub fn run_ladder(config: &ProblemConfig, dxs: &[f64]) -> Result<Ladder, LadderError> {
    if dxs.is_empty() {
        return Err(LadderError::Empty);
    }
    let mut levels: Vec<LadderLevel> = vec![];
    let mut previous: Option<RegularField> = None;
    for &dx in dxs {
        let cfg = config.with_dx(dx);
        let traj = solve(&cfg.solve_problem()?)?;
        let (weak, entropy) = residuals(&cfg, &traj);
        let field = traj.final_state().regular.clone();
        let refinement_gap = previous.as_ref().map(|p| final_gap(p, &field));
        levels.push(LadderLevel {
            dx,
            steps: traj.probes.len() - 1,
            death_times: traj.ledgers.iter().map(|l| l.death_time).collect(),
            weak,
            entropy,
            refinement_gap,
        });
        previous = Some(field);
    }
    Ok(Ladder { levels })
}
