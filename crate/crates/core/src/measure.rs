//! Signed measures `u = u_r dx + sum_j c_j delta_{x_j}` on a truncated line.
//!
//! The regular part lives on a partition whose breakpoints are the two
//! truncation endpoints and every initial atom position. Each subinterval
//! (block) carries a uniform grid of cell averages. Atoms sit exactly on
//! breakpoints and are never smeared into cells.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("atom {index} at x = {x} has zero mass")]
    ZeroMass { index: usize, x: f64 },
    #[error("atoms must be strictly ordered: x[{index}] = {x} does not exceed its predecessor")]
    AtomOrder { index: usize, x: f64 },
    #[error("atom at x = {x} lies outside the domain ({lo}, {hi})")]
    AtomOutside { x: f64, lo: f64, hi: f64 },
    #[error("segment [{a}, {b}] is empty or reversed")]
    EmptySegment { a: f64, b: f64 },
    #[error("segments [{a0}, {b0}] and [{a1}, {b1}] overlap")]
    Overlap { a0: f64, b0: f64, a1: f64, b1: f64 },
    #[error("invalid domain ({lo}, {hi})")]
    Domain { lo: f64, hi: f64 },
    #[error("cell size must be positive, got {0}")]
    CellSize(f64),
    #[error("non-finite value {value} in cell {cell}")]
    NonFinite { cell: usize, value: f64 },
}

/// A Dirac mass at a fixed position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
    pub birth_mass: f64,
    pub death_time: Option<f64>,
}

impl Atom {
    pub fn new(position: f64, mass: f64) -> Self {
        Atom { position, mass, birth_mass: mass, death_time: None }
    }

    pub fn is_alive(&self) -> bool {
        self.death_time.is_none()
    }

    pub fn sign(&self) -> f64 {
        self.birth_mass.signum()
    }
}

/// One polynomial piece of the initial regular part, `sum_k coeffs[k] x^k` on
/// `[a, b]`. Outside all segments the density is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<f64>,
}

impl Segment {
    pub fn constant(a: f64, b: f64, value: f64) -> Self {
        Segment { a, b, coeffs: vec![value] }
    }

    fn antiderivative(&self, x: f64) -> f64 {
        // Horner on sum c_k x^{k+1} / (k+1)
        self.coeffs.iter().enumerate().rev().fold(0.0, |acc, (k, &c)| acc * x + c / (k as f64 + 1.0)) * x
    }

    /// Mean value over `[lo, hi]` (intersected with the segment) times the
    /// overlap length.
    fn integral_over(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.a);
        let hi = hi.min(self.b);
        if hi <= lo {
            return 0.0;
        }
        if self.coeffs.len() <= 1 {
            return self.coeffs.first().copied().unwrap_or(0.0) * (hi - lo);
        }
        self.antiderivative(hi) - self.antiderivative(lo)
    }
}

/// Initial data: piecewise-polynomial density plus finitely many atoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub segments: Vec<Segment>,
    pub atoms: Vec<(f64, f64)>,
}

impl InitialData {
    pub fn validate(&self) -> Result<(), MeasureError> {
        for (index, &(x, c)) in self.atoms.iter().enumerate() {
            if c == 0.0 {
                return Err(MeasureError::ZeroMass { index, x });
            }
            if index > 0 && x <= self.atoms[index - 1].0 {
                return Err(MeasureError::AtomOrder { index, x });
            }
        }
        let mut segs: Vec<&Segment> = self.segments.iter().collect();
        for s in &segs {
            if !(s.b > s.a) {
                return Err(MeasureError::EmptySegment { a: s.a, b: s.b });
            }
        }
        segs.sort_by(|p, q| p.a.total_cmp(&q.a));
        for w in segs.windows(2) {
            if w[1].a < w[0].b {
                return Err(MeasureError::Overlap { a0: w[0].a, b0: w[0].b, a1: w[1].a, b1: w[1].b });
            }
        }
        Ok(())
    }

    /// Smallest interval containing every atom and segment, `None` for empty data.
    pub fn support(&self) -> Option<(f64, f64)> {
        let points = self.atoms.iter().map(|a| a.0).chain(self.segments.iter().flat_map(|s| [s.a, s.b]));
        points.fold(None, |acc, x| match acc {
            None => Some((x, x)),
            Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
        })
    }

    /// Largest modulus of the density over its segments (sampled densely for
    /// polynomials).
    pub fn max_abs_density(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                if s.coeffs.len() <= 1 {
                    return s.coeffs.first().copied().unwrap_or(0.0).abs();
                }
                (0..=256)
                    .map(|i| {
                        let x = s.a + (s.b - s.a) * i as f64 / 256.0;
                        s.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Uniform cells of one subinterval of the partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub width: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularField {
    pub breakpoints: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl RegularField {
    /// Uniform grid on each block with width at most `dx` (and at least two
    /// cells per block), filled with exact cell averages of the segments.
    pub fn from_segments(breakpoints: Vec<f64>, dx: f64, segments: &[Segment]) -> Result<Self, MeasureError> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(MeasureError::CellSize(dx));
        }
        let blocks = breakpoints
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let n = (((b - a) / dx) - 1e-9).ceil().max(2.0) as usize;
                let width = (b - a) / n as f64;
                let values = (0..n)
                    .map(|i| {
                        let lo = a + i as f64 * width;
                        let hi = if i + 1 == n { b } else { a + (i + 1) as f64 * width };
                        cell_average(segments, lo, hi)
                    })
                    .collect();
                Block { width, values }
            })
            .collect();
        Ok(RegularField { breakpoints, blocks })
    }

    pub fn zeros_like(&self) -> Self {
        RegularField {
            breakpoints: self.breakpoints.clone(),
            blocks: self.blocks.iter().map(|b| Block { width: b.width, values: vec![0.0; b.values.len()] }).collect(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    /// Cell centers in global order.
    pub fn centers(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_cells());
        for (k, block) in self.blocks.iter().enumerate() {
            let a = self.breakpoints[k];
            out.extend((0..block.values.len()).map(|i| a + (i as f64 + 0.5) * block.width));
        }
        out
    }

    /// Cell widths in global order.
    pub fn widths(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| std::iter::repeat_n(b.width, b.values.len())).collect()
    }

    /// Cell edges in global order (`n_cells + 1` entries); block boundaries
    /// coincide exactly with the breakpoints.
    pub fn edges(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_cells() + 1);
        for (k, block) in self.blocks.iter().enumerate() {
            let a = self.breakpoints[k];
            out.extend((0..block.values.len()).map(|i| a + i as f64 * block.width));
        }
        out.push(*self.breakpoints.last().unwrap());
        out
    }

    pub fn values(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    /// Overwrites all cell values from a flat slice in global order.
    pub fn set_values(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for block in &mut self.blocks {
            for v in &mut block.values {
                *v = *it.next().expect("flat slice too short");
            }
        }
    }

    /// Global index of the first cell of each block plus the total count.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.blocks.len() + 1);
        let mut acc = 0;
        out.push(0);
        for b in &self.blocks {
            acc += b.values.len();
            out.push(acc);
        }
        out
    }

    pub fn integral(&self) -> f64 {
        self.blocks.iter().map(|b| b.width * b.values.iter().sum::<f64>()).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.width * b.values.iter().map(|v| v.abs()).sum::<f64>()).sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.blocks
            .iter()
            .flat_map(|b| b.values.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// L1 distance to a field on the same grid.
    pub fn l1_distance(&self, other: &RegularField) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.width * a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .sum()
    }

    /// Cell averages over arbitrary `edges`, computed from the exact
    /// cumulative mass of this piecewise-constant field.
    pub fn average_onto(&self, edges: &[f64]) -> Vec<f64> {
        let my_edges = self.edges();
        let values = self.values();
        let mut cumulative = Vec::with_capacity(my_edges.len());
        cumulative.push(0.0);
        for (i, v) in values.iter().enumerate() {
            let last = cumulative[i];
            cumulative.push(last + v * (my_edges[i + 1] - my_edges[i]));
        }
        let mass_at = |x: f64| -> f64 {
            if x <= my_edges[0] {
                return 0.0;
            }
            if x >= my_edges[my_edges.len() - 1] {
                return cumulative[cumulative.len() - 1];
            }
            let i = my_edges.partition_point(|&e| e <= x) - 1;
            cumulative[i] + values[i] * (x - my_edges[i])
        };
        edges.windows(2).map(|w| (mass_at(w[1]) - mass_at(w[0])) / (w[1] - w[0])).collect()
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MeasureError::Domain { lo: self.breakpoints[0], hi: *self.breakpoints.last().unwrap() });
        }
        let mut cell = 0;
        for b in &self.blocks {
            if !(b.width > 0.0) {
                return Err(MeasureError::CellSize(b.width));
            }
            for &v in &b.values {
                if !v.is_finite() {
                    return Err(MeasureError::NonFinite { cell, value: v });
                }
                cell += 1;
            }
        }
        Ok(())
    }
}

fn cell_average(segments: &[Segment], lo: f64, hi: f64) -> f64 {
    // A cell inside a single constant segment gets the constant itself.
    for s in segments {
        if s.a <= lo && hi <= s.b && s.coeffs.len() <= 1 {
            return s.coeffs.first().copied().unwrap_or(0.0);
        }
    }
    segments.iter().map(|s| s.integral_over(lo, hi)).sum::<f64>() / (hi - lo)
}

/// A snapshot of the measure at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureState {
    pub time: f64,
    pub regular: RegularField,
    /// Every initial atom in position order; dead atoms keep mass zero.
    pub atoms: Vec<Atom>,
}

impl MeasureState {
    /// Discretizes `data` on `[lo, hi]` with cells no wider than `dx`.
    pub fn from_initial(data: &InitialData, lo: f64, hi: f64, dx: f64) -> Result<Self, MeasureError> {
        data.validate()?;
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(MeasureError::Domain { lo, hi });
        }
        let mut breakpoints = vec![lo];
        for &(x, _) in &data.atoms {
            if !(x > lo && x < hi) {
                return Err(MeasureError::AtomOutside { x, lo, hi });
            }
            breakpoints.push(x);
        }
        breakpoints.push(hi);
        let regular = RegularField::from_segments(breakpoints, dx, &data.segments)?;
        let atoms = data.atoms.iter().map(|&(x, c)| Atom::new(x, c)).collect();
        Ok(MeasureState { time: 0.0, regular, atoms })
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        self.regular.validate()?;
        for (index, atom) in self.atoms.iter().enumerate() {
            if atom.is_alive() && atom.mass == 0.0 {
                return Err(MeasureError::ZeroMass { index, x: atom.position });
            }
            if index > 0 && atom.position <= self.atoms[index - 1].position {
                return Err(MeasureError::AtomOrder { index, x: atom.position });
            }
            if self.regular.breakpoints.get(index + 1) != Some(&atom.position) {
                return Err(MeasureError::AtomOutside {
                    x: atom.position,
                    lo: self.regular.breakpoints[0],
                    hi: *self.regular.breakpoints.last().unwrap(),
                });
            }
        }
        Ok(())
    }

    pub fn alive_atoms(&self) -> impl Iterator<Item = (usize, &Atom)> {
        self.atoms.iter().enumerate().filter(|(_, a)| a.is_alive())
    }

    pub fn singular_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn singular_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass.abs()).sum()
    }
}

/// Regular integral plus signed atom masses.
pub fn total_mass(state: &MeasureState) -> f64 {
    state.regular.integral() + state.singular_mass()
}

/// Splits the atoms with nonzero mass into positive and negative parts.
pub fn singular_parts(state: &MeasureState) -> (Vec<Atom>, Vec<Atom>) {
    state.atoms.iter().filter(|a| a.mass != 0.0).cloned().partition(|a| a.mass > 0.0)
}

/// `sum |u_i| dx_i` over all cells.
pub fn l1_norm_regular(state: &MeasureState) -> f64 {
    state.regular.l1_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(segments: Vec<Segment>, atoms: Vec<(f64, f64)>, lo: f64, hi: f64) -> MeasureState {
        MeasureState::from_initial(&InitialData { segments, atoms }, lo, hi, 0.01).unwrap()
    }

    #[test]
    fn total_mass_examples() {
        let s = state(vec![], vec![(0.0, 2.0)], -1.0, 1.0);
        assert_eq!(total_mass(&s), 2.0);
        let s = state(vec![Segment::constant(0.0, 1.0, 1.0)], vec![], 0.0, 1.0);
        assert!((total_mass(&s) - 1.0).abs() < 1e-14);
        let s = state(vec![Segment::constant(0.0, 1.0, 1.0)], vec![(0.5, -3.0)], 0.0, 1.0);
        assert!((total_mass(&s) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_parts_examples() {
        let s = state(vec![], vec![(0.0, 1.0), (1.0, -2.0)], -1.0, 2.0);
        let (pos, neg) = singular_parts(&s);
        assert_eq!(pos.len(), 1);
        assert_eq!(pos[0].position, 0.0);
        assert_eq!(neg.len(), 1);
        assert_eq!(neg[0].mass, -2.0);

        let s = state(vec![], vec![], -1.0, 2.0);
        let (pos, neg) = singular_parts(&s);
        assert!(pos.is_empty() && neg.is_empty());

        let s = state(vec![], vec![(-1.0, 0.5), (0.0, 0.5)], -2.0, 2.0);
        let (pos, neg) = singular_parts(&s);
        assert_eq!(pos.len(), 2);
        assert!(neg.is_empty());
    }

    #[test]
    fn l1_norm_examples() {
        let s = state(vec![Segment::constant(0.0, 2.0, -1.0)], vec![], 0.0, 2.0);
        assert!((l1_norm_regular(&s) - 2.0).abs() < 1e-14);
        let s = state(vec![], vec![], 0.0, 2.0);
        assert_eq!(l1_norm_regular(&s), 0.0);
        let s = state(vec![Segment::constant(0.0, 1.0, 1.0), Segment::constant(1.0, 2.0, -1.0)], vec![], 0.0, 2.0);
        assert!((l1_norm_regular(&s) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_atoms_and_segments() {
        let bad =
            |segments, atoms| MeasureState::from_initial(&InitialData { segments, atoms }, -5.0, 5.0, 0.1).unwrap_err();
        assert!(matches!(bad(vec![], vec![(0.0, 0.0)]), MeasureError::ZeroMass { .. }));
        assert!(matches!(bad(vec![], vec![(0.0, 1.0), (0.0, 2.0)]), MeasureError::AtomOrder { .. }));
        assert!(matches!(bad(vec![], vec![(7.0, 1.0)]), MeasureError::AtomOutside { .. }));
        assert!(matches!(
            bad(vec![Segment::constant(0.0, 2.0, 1.0), Segment::constant(1.0, 3.0, 1.0)], vec![]),
            MeasureError::Overlap { .. }
        ));
        assert!(matches!(bad(vec![Segment::constant(1.0, 1.0, 1.0)], vec![]), MeasureError::EmptySegment { .. }));
    }

    #[test]
    fn atoms_sit_on_breakpoints() {
        let s = state(vec![], vec![(-0.3, 1.0), (0.77, -1.0)], -2.0, 2.0);
        assert_eq!(s.regular.breakpoints, vec![-2.0, -0.3, 0.77, 2.0]);
        s.validate().unwrap();
        let edges = s.regular.edges();
        assert!(edges.contains(&-0.3) && edges.contains(&0.77));
        for b in &s.regular.blocks {
            assert!(b.width <= 0.01 + 1e-15);
        }
    }

    #[test]
    fn polynomial_cell_averages_are_exact() {
        // u = x^2 on [0, 1]; mass 1/3
        let s = state(vec![Segment { a: 0.0, b: 1.0, coeffs: vec![0.0, 0.0, 1.0] }], vec![], -1.0, 2.0);
        assert!((total_mass(&s) - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn projection_preserves_mass() {
        let s = state(vec![Segment { a: -0.5, b: 0.9, coeffs: vec![1.0, -2.0] }], vec![(0.25, 1.0)], -1.0, 1.0);
        let coarse: Vec<f64> = (0..=7).map(|i| -1.0 + 2.0 * i as f64 / 7.0).collect();
        let avg = s.regular.average_onto(&coarse);
        let mass: f64 = avg.iter().zip(coarse.windows(2)).map(|(v, w)| v * (w[1] - w[0])).sum();
        assert!((mass - s.regular.integral()).abs() < 1e-12);
    }
}
