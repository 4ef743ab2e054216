//! Run directories: CSV tables, epoch log, config echo and report.
//!
//! | file            | columns / content                                   |
//! |-----------------|-----------------------------------------------------|
//! | `config.toml`   | canonical configuration echo                        |
//! | `grid.csv`      | `block,lo,hi,width,cells`                           |
//! | `snapshots.csv` | `t,x_center,u_r`                                    |
//! | `atoms.csv`     | `t,x_j,c_j` (every atom at every snapshot)          |
//! | `masses.csv`    | `t,j,C_j` (every step)                              |
//! | `steps.csv`     | `t` (every step boundary)                           |
//! | `probes.csv`    | `t,j,left2,left1,right1,right2`                     |
//! | `epochs.toml`   | run metadata, per-atom ledger totals, epoch log     |
//! | `report.txt`    | one line per check                                  |
//! | `summary.json`  | machine-readable summary                            |
//!
//! Floats are written as shortest round-trip decimals, so a directory can be
//! loaded back into an identical [`Trajectory`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::atoms::MassLedger;
use crate::config::{fmt_float, parse_config, ConfigError, ProblemConfig};
use crate::epoch::{Epoch, EpochInterval, ProbeSample, Trajectory};
use crate::interval::BoundaryKind;
use crate::measure::{total_mass, Block, MeasureState, RegularField};
use crate::verify::VerificationReport;

pub const CONFIG_FILE: &str = "config.toml";
pub const GRID_FILE: &str = "grid.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const ATOMS_FILE: &str = "atoms.csv";
pub const MASSES_FILE: &str = "masses.csv";
pub const STEPS_FILE: &str = "steps.csv";
pub const PROBES_FILE: &str = "probes.csv";
pub const EPOCHS_FILE: &str = "epochs.toml";
pub const REPORT_FILE: &str = "report.txt";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}:{line}: {message}")]
    Parse { file: &'static str, line: usize, message: String },
    #[error("config.toml: {0}")]
    Config(#[from] ConfigError),
    #[error("inconsistent run directory: {0}")]
    Inconsistent(String),
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn f(v: f64) -> String {
    fmt_float(v)
}

pub fn render_grid(state: &MeasureState) -> String {
    let mut s = String::from("block,lo,hi,width,cells\n");
    let bp = &state.regular.breakpoints;
    for (k, b) in state.regular.blocks.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{},{},{}", f(bp[k]), f(bp[k + 1]), f(b.width), b.values.len());
    }
    s
}

pub fn render_snapshots(traj: &Trajectory) -> String {
    let centers = traj.initial.regular.centers();
    let mut s = String::from("t,x_center,u_r\n");
    for snap in &traj.snapshots {
        let t = f(snap.time);
        for (x, u) in centers.iter().zip(snap.regular.values()) {
            let _ = writeln!(s, "{t},{},{}", f(*x), f(u));
        }
    }
    s
}

pub fn render_atoms(traj: &Trajectory) -> String {
    let mut s = String::from("t,x_j,c_j\n");
    for snap in &traj.snapshots {
        let t = f(snap.time);
        for a in &snap.atoms {
            let _ = writeln!(s, "{t},{},{}", f(a.position), f(a.mass));
        }
    }
    s
}

pub fn render_masses(traj: &Trajectory) -> String {
    let mut s = String::from("t,j,C_j\n");
    for l in &traj.ledgers {
        for (t, c) in &l.samples {
            let _ = writeln!(s, "{},{},{}", f(*t), l.index, f(*c));
        }
    }
    s
}

pub fn render_steps(traj: &Trajectory) -> String {
    let mut s = String::from("t\n");
    for p in &traj.probes {
        s.push_str(&f(p.t));
        s.push('\n');
    }
    s
}

pub fn render_probes(traj: &Trajectory) -> String {
    let mut s = String::from("t,j,left2,left1,right1,right2\n");
    for p in &traj.probes {
        let t = f(p.t);
        for (j, v) in p.values.iter().enumerate() {
            let _ = writeln!(s, "{t},{j},{},{},{},{}", f(v[0]), f(v[1]), f(v[2]), f(v[3]));
        }
    }
    s
}

fn usize_list(v: &[usize]) -> String {
    let items: Vec<String> = v.iter().map(|i| i.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn opt(key: &str, v: Option<f64>) -> String {
    v.map(|v| format!("{key} = {}\n", f(v))).unwrap_or_default()
}

pub fn render_epochs(traj: &Trajectory) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "[run]\nhorizon = {}\ndt = {}\nm_ghost = {}\nmin_value = {}\nmax_value = {}",
        f(traj.horizon),
        f(traj.dt),
        f(traj.m_ghost),
        f(traj.min_value),
        f(traj.max_value)
    );
    for l in &traj.ledgers {
        let _ = write!(
            s,
            "\n[[atom]]\nindex = {}\nposition = {}\nbirth_mass = {}\nmass = {}\nintegral = {}\ntol = {}\ntime = {}\n{}",
            l.index,
            f(l.position),
            f(l.birth_mass),
            f(l.mass),
            f(l.integral),
            f(l.tol),
            f(l.time),
            opt("death_time", l.death_time)
        );
    }
    for e in &traj.epochs {
        let _ = writeln!(
            s,
            "\n[[epoch]]\nstart = {}\nend = {}\nalive = {}\ndeaths = {}\nintervals = [",
            f(e.start),
            f(e.end),
            usize_list(&e.alive),
            usize_list(&e.deaths)
        );
        for iv in &e.intervals {
            let _ = writeln!(
                s,
                "  {{ lo = {}, hi = {}, left = \"{}\", right = \"{}\" }},",
                f(iv.lo),
                f(iv.hi),
                iv.left.name(),
                iv.right.name()
            );
        }
        s.push_str("]\n");
    }
    s
}

pub fn render_summary(config: &ProblemConfig, traj: &Trajectory, report: &VerificationReport) -> String {
    let m0 = total_mass(&traj.initial);
    let drift = traj.snapshots.iter().map(|s| (total_mass(s) - m0).abs()).fold(0.0, f64::max);
    let atoms: Vec<serde_json::Value> = traj
        .ledgers
        .iter()
        .map(|l| {
            serde_json::json!({
                "index": l.index,
                "x": l.position,
                "c": l.birth_mass,
                "final_mass": l.mass,
                "death_time": l.death_time,
            })
        })
        .collect();
    let checks: Vec<serde_json::Value> = report
        .checks
        .iter()
        .map(|c| {
            serde_json::json!({
                "name": c.name,
                "tag": c.tag,
                "residual": c.residual,
                "tol": c.tol,
                "pass": c.pass,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "name": config.name,
        "horizon": traj.horizon,
        "dx": config.solver.dx,
        "dt": traj.dt,
        "m_ghost": traj.m_ghost,
        "snapshots": traj.snapshots.len(),
        "steps": traj.probes.len() - 1,
        "epochs": traj.epochs.len(),
        "mass_drift": drift,
        "atoms": atoms,
        "checks": checks,
        "all_pass": report.all_pass(),
    });
    let mut out = serde_json::to_string_pretty(&doc).expect("summary serializes");
    out.push('\n');
    out
}

fn write_file(dir: &Path, name: &str, content: &str, written: &mut Vec<PathBuf>) -> io::Result<()> {
    let path = dir.join(name);
    write_atomic(&path, content.as_bytes())?;
    written.push(path);
    Ok(())
}

/// Write the trajectory tables, epoch log and config echo.
pub fn emit_trajectory(config: &ProblemConfig, traj: &Trajectory, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = vec![];
    write_file(out_dir, CONFIG_FILE, &config.to_toml(), &mut written)?;
    write_file(out_dir, GRID_FILE, &render_grid(&traj.initial), &mut written)?;
    write_file(out_dir, SNAPSHOTS_FILE, &render_snapshots(traj), &mut written)?;
    write_file(out_dir, ATOMS_FILE, &render_atoms(traj), &mut written)?;
    write_file(out_dir, MASSES_FILE, &render_masses(traj), &mut written)?;
    write_file(out_dir, STEPS_FILE, &render_steps(traj), &mut written)?;
    write_file(out_dir, PROBES_FILE, &render_probes(traj), &mut written)?;
    write_file(out_dir, EPOCHS_FILE, &render_epochs(traj), &mut written)?;
    Ok(written)
}

pub fn emit_report(
    config: &ProblemConfig,
    traj: &Trajectory,
    report: &VerificationReport,
    out_dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = vec![];
    write_file(out_dir, REPORT_FILE, &report.render(), &mut written)?;
    write_file(out_dir, SUMMARY_FILE, &render_summary(config, traj, report), &mut written)?;
    Ok(written)
}

/// Everything [`emit_trajectory`] and [`emit_report`] write.
pub fn emit(
    config: &ProblemConfig,
    traj: &Trajectory,
    report: &VerificationReport,
    out_dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    let mut written = emit_trajectory(config, traj, out_dir)?;
    written.extend(emit_report(config, traj, report, out_dir)?);
    Ok(written)
}

fn read(dir: &Path, name: &str) -> Result<String, LoadError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| LoadError::Io { path, source })
}

struct Csv<'a> {
    file: &'static str,
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Csv<'a> {
    fn parse(file: &'static str, text: &'a str, header: &str) -> Result<Self, LoadError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == header => {}
            _ => return Err(LoadError::Parse { file, line: 1, message: format!("expected header `{header}`") }),
        }
        let width = header.split(',').count();
        let mut rows = vec![];
        for (i, line) in lines {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != width {
                return Err(LoadError::Parse { file, line: i + 1, message: format!("expected {width} columns") });
            }
            rows.push((i + 1, cols));
        }
        Ok(Csv { file, rows })
    }

    fn float(&self, row: usize, col: usize) -> Result<f64, LoadError> {
        let (line, cols) = &self.rows[row];
        cols[col].parse::<f64>().map_err(|e| LoadError::Parse {
            file: self.file,
            line: *line,
            message: format!("column {col}: {e}"),
        })
    }

    fn index(&self, row: usize, col: usize) -> Result<usize, LoadError> {
        let (line, cols) = &self.rows[row];
        cols[col].parse::<usize>().map_err(|e| LoadError::Parse {
            file: self.file,
            line: *line,
            message: format!("column {col}: {e}"),
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: f64,
    dt: f64,
    m_ghost: f64,
    min_value: f64,
    max_value: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLedger {
    index: usize,
    position: f64,
    birth_mass: f64,
    mass: f64,
    integral: f64,
    tol: f64,
    time: f64,
    death_time: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpochLog {
    run: RawRun,
    #[serde(default)]
    atom: Vec<RawLedger>,
    epoch: Vec<Epoch>,
}

fn groups(csv: &Csv, per_time: usize) -> Result<BTreeMap<u64, Vec<usize>>, LoadError> {
    // keyed by bit pattern; times are nonnegative so bit order is time order
    let mut out: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for r in 0..csv.rows.len() {
        out.entry(csv.float(r, 0)?.to_bits()).or_default().push(r);
    }
    if per_time > 0 {
        for rows in out.values() {
            if rows.len() != per_time {
                let line = csv.rows[rows[0]].0;
                return Err(LoadError::Parse {
                    file: csv.file,
                    line,
                    message: format!("expected {per_time} rows per time, got {}", rows.len()),
                });
            }
        }
    }
    Ok(out)
}

/// Load a directory written by [`emit_trajectory`].
pub fn load_run(dir: &Path) -> Result<(ProblemConfig, Trajectory), LoadError> {
    let config = parse_config(&read(dir, CONFIG_FILE)?)?;

    let grid_text = read(dir, GRID_FILE)?;
    let grid = Csv::parse(GRID_FILE, &grid_text, "block,lo,hi,width,cells")?;
    let mut breakpoints = vec![];
    let mut blocks = vec![];
    for r in 0..grid.rows.len() {
        if grid.index(r, 0)? != r {
            return Err(LoadError::Parse { file: GRID_FILE, line: r + 2, message: "blocks out of order".into() });
        }
        if r == 0 {
            breakpoints.push(grid.float(r, 1)?);
        }
        breakpoints.push(grid.float(r, 2)?);
        blocks.push(Block { width: grid.float(r, 3)?, values: vec![0.0; grid.index(r, 4)?] });
    }
    let regular = RegularField { breakpoints, blocks };
    let n_cells = regular.n_cells();

    let log: RawEpochLog = toml::from_str(&read(dir, EPOCHS_FILE)?).map_err(|e| LoadError::Parse {
        file: EPOCHS_FILE,
        line: 0,
        message: e.message().to_string(),
    })?;
    let n_atoms = log.atom.len();

    let mass_text = read(dir, MASSES_FILE)?;
    let masses = Csv::parse(MASSES_FILE, &mass_text, "t,j,C_j")?;
    let mut samples = vec![vec![]; n_atoms];
    for r in 0..masses.rows.len() {
        let j = masses.index(r, 1)?;
        let slot = samples.get_mut(j).ok_or_else(|| LoadError::Inconsistent(format!("mass row for atom {j}")))?;
        slot.push((masses.float(r, 0)?, masses.float(r, 2)?));
    }
    let ledgers: Vec<MassLedger> = log
        .atom
        .iter()
        .zip(samples)
        .map(|(a, samples)| MassLedger {
            index: a.index,
            position: a.position,
            birth_mass: a.birth_mass,
            integral: a.integral,
            mass: a.mass,
            death_time: a.death_time,
            samples,
            tol: a.tol,
            time: a.time,
        })
        .collect();

    let snap_text = read(dir, SNAPSHOTS_FILE)?;
    let snaps = Csv::parse(SNAPSHOTS_FILE, &snap_text, "t,x_center,u_r")?;
    let atom_text = read(dir, ATOMS_FILE)?;
    let atom_rows = Csv::parse(ATOMS_FILE, &atom_text, "t,x_j,c_j")?;
    let snap_groups = groups(&snaps, n_cells)?;
    let atom_groups = groups(&atom_rows, n_atoms)?;
    if n_atoms > 0 && atom_groups.keys().ne(snap_groups.keys()) {
        return Err(LoadError::Inconsistent("atoms.csv and snapshots.csv have different times".into()));
    }
    let mut snapshots = vec![];
    for (bits, rows) in &snap_groups {
        let time = f64::from_bits(*bits);
        let values = rows.iter().map(|&r| snaps.float(r, 2)).collect::<Result<Vec<_>, _>>()?;
        let mut field = regular.clone();
        field.set_values(&values);
        let mut atoms = vec![];
        if let Some(rows) = atom_groups.get(bits) {
            for (&r, l) in rows.iter().zip(&ledgers) {
                atoms.push(crate::measure::Atom {
                    position: atom_rows.float(r, 1)?,
                    mass: atom_rows.float(r, 2)?,
                    birth_mass: l.birth_mass,
                    death_time: l.death_time.filter(|&d| d <= time),
                });
            }
        }
        snapshots.push(MeasureState { time, regular: field, atoms });
    }
    let initial = snapshots.first().cloned().ok_or_else(|| LoadError::Inconsistent("no snapshots".into()))?;

    let probe_text = read(dir, PROBES_FILE)?;
    let probe_rows = Csv::parse(PROBES_FILE, &probe_text, "t,j,left2,left1,right1,right2")?;
    let step_text = read(dir, STEPS_FILE)?;
    let steps = Csv::parse(STEPS_FILE, &step_text, "t")?;
    if probe_rows.rows.len() != steps.rows.len() * n_atoms {
        return Err(LoadError::Inconsistent("probes.csv does not match steps.csv".into()));
    }
    let mut probes = Vec::with_capacity(steps.rows.len());
    for k in 0..steps.rows.len() {
        let t = steps.float(k, 0)?;
        let mut values = Vec::with_capacity(n_atoms);
        for j in 0..n_atoms {
            let r = k * n_atoms + j;
            if probe_rows.float(r, 0)? != t || probe_rows.index(r, 1)? != j {
                return Err(LoadError::Inconsistent(format!("probe row {} does not match step {k}", r + 2)));
            }
            values.push([
                probe_rows.float(r, 2)?,
                probe_rows.float(r, 3)?,
                probe_rows.float(r, 4)?,
                probe_rows.float(r, 5)?,
            ]);
        }
        probes.push(ProbeSample { t, values });
    }

    let traj = Trajectory {
        model: config.model.clone(),
        config: config.solver.clone(),
        m_ghost: log.run.m_ghost,
        dt: log.run.dt,
        horizon: log.run.horizon,
        initial,
        snapshots,
        ledgers,
        probes,
        epochs: log.epoch,
        min_value: log.run.min_value,
        max_value: log.run.max_value,
    };
    Ok((config, traj))
}

/// Interval kinds in the first epoch, for display.
pub fn boundary_cases(traj: &Trajectory) -> Vec<(BoundaryKind, BoundaryKind)> {
    traj.epochs
        .first()
        .map(|e| e.intervals.iter().map(|iv: &EpochInterval| (iv.left, iv.right)).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epoch::solve;
    use crate::verify::{run_checks, CheckOptions};

    fn small(text: &str) -> (ProblemConfig, Trajectory) {
        let cfg = parse_config(text).unwrap();
        let traj = solve(&cfg.solve_problem().unwrap()).unwrap();
        (cfg, traj)
    }

    const VACUUM: &str = r#"
horizon = 1.5
flux = { family = "saturating_rational", params = [1.0] }
atoms = [{ x = 0.0, c = 1.0 }]
record_interval = 0.1
[solver]
dx = 0.02
"#;

    const STATIC: &str =
        "horizon = 1.0\nrecord_interval = 0.25\nflux = { family = \"zero\" }\nu0r = [{ interval = [-0.5, 0.5], coeffs = [0.25, 1.0] }]\n[solver]\ndx = 0.1\n[domain]\nlo = -1.0\nhi = 1.0\n";

    #[test]
    fn zero_atom_run_round_trips() {
        let (cfg, traj) = small(STATIC);
        let dir = tempfile::tempdir().unwrap();
        emit_trajectory(&cfg, &traj, dir.path()).unwrap();
        assert_eq!(load_run(dir.path()).unwrap().1, traj);
    }

    #[test]
    fn zero_flux_snapshots_repeat() {
        let (_, traj) = small(STATIC);
        let csv = render_snapshots(&traj);
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        assert!(traj.snapshots.len() >= 2);
        let first: Vec<_> = rows.iter().filter(|r| r[0] == "0.0").map(|r| &r[1..]).collect();
        for snap in &traj.snapshots {
            let t = fmt_float(snap.time);
            let these: Vec<_> = rows.iter().filter(|r| r[0] == t).map(|r| &r[1..]).collect();
            assert_eq!(these, first);
        }
    }

    #[test]
    fn vacuum_mass_column_is_nonincreasing() {
        let (_, traj) = small(VACUUM);
        let csv = render_masses(&traj);
        let c: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert!(c.len() > 10);
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
        assert!(c.windows(2).filter(|w| w[1] > 0.0).all(|w| w[1] < w[0]));
    }

    #[test]
    fn round_trip_is_lossless_and_deterministic() {
        let (cfg, traj) = small(VACUUM);
        let report = run_checks(&traj, &CheckOptions::default()).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit(&cfg, &traj, &report, a.path()).unwrap();
        let (cfg2, traj2) = small(VACUUM);
        emit(&cfg2, &traj2, &run_checks(&traj2, &CheckOptions::default()).unwrap(), b.path()).unwrap();
        for name in [
            CONFIG_FILE,
            GRID_FILE,
            SNAPSHOTS_FILE,
            ATOMS_FILE,
            MASSES_FILE,
            STEPS_FILE,
            PROBES_FILE,
            EPOCHS_FILE,
            REPORT_FILE,
            SUMMARY_FILE,
        ] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
        let leftovers: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());

        let (cfg3, traj3) = load_run(a.path()).unwrap();
        assert_eq!(cfg3, cfg);
        assert_eq!(traj3, traj);
        assert_eq!(run_checks(&traj3, &CheckOptions::default()).unwrap(), report);
    }

    #[test]
    fn malformed_csv_is_reported_with_line() {
        let (cfg, traj) = small(VACUUM);
        let dir = tempfile::tempdir().unwrap();
        emit_trajectory(&cfg, &traj, dir.path()).unwrap();
        let path = dir.path().join(MASSES_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("0.5,0,oops\n");
        fs::write(&path, text).unwrap();
        match load_run(dir.path()) {
            Err(LoadError::Parse { file, .. }) => assert_eq!(file, MASSES_FILE),
            other => panic!("unexpected {other:?}"),
        }
    }
}
