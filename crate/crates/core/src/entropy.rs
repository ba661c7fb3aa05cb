//! Itinerary counting and volume growth.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::ParamSubmanifold;
use crate::dynamics::MapSystem;
use crate::error::{Error, Result};
use crate::geometry::{Form, Manifold, Periodic};
use crate::sampling::Sampler;
use crate::stats::least_squares_slope;

/// Uniform cubes over the fundamental domain; non-periodic coordinates use
/// explicit bounds and one extra overflow cell.
#[derive(Clone, Debug)]
pub struct CubePartition {
    manifold: Manifold,
    cells: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    periodic: Vec<Option<Periodic>>,
}

impl CubePartition {
    pub fn new(manifold: Manifold, cells: Vec<usize>, bounds: Option<Vec<(f64, f64)>>) -> Result<Self> {
        let dim = manifold.dim();
        if cells.len() != dim || cells.contains(&0) {
            return Err(Error::InvalidInput(format!("need {dim} positive cell counts")));
        }
        let bounds = match bounds {
            Some(b) if b.len() == dim => b,
            Some(_) => return Err(Error::InvalidInput("bounds have the wrong length".into())),
            None => (0..dim)
                .map(|i| {
                    manifold
                        .periodicity(i)
                        .map(|p| (p.lower, p.lower + p.period))
                        .ok_or_else(|| Error::InvalidInput(format!("coordinate {i} is not periodic; give bounds")))
                })
                .collect::<Result<_>>()?,
        };
        let periodic = (0..dim).map(|i| manifold.periodicity(i)).collect();
        Ok(Self { manifold, cells, bounds, periodic })
    }

    /// `m × m × …` cells on a torus.
    pub fn uniform(manifold: Manifold, m: usize) -> Result<Self> {
        let dim = manifold.dim();
        Self::new(manifold, vec![m; dim], None)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn width(&self, i: usize) -> f64 {
        (self.bounds[i].1 - self.bounds[i].0) / self.cells[i] as f64
    }

    /// Smallest cell edge.
    pub fn min_width(&self) -> f64 {
        (0..self.cells.len()).map(|i| self.width(i)).fold(f64::INFINITY, f64::min)
    }

    fn cell_of(&self, i: usize, v: f64) -> usize {
        let (lo, hi) = self.bounds[i];
        let c = self.cells[i];
        if v < lo || v >= hi {
            c
        } else {
            (((v - lo) / (hi - lo) * c as f64) as usize).min(c - 1)
        }
    }

    pub fn multi_index(&self, x: &[f64]) -> Result<Vec<usize>> {
        let y = self.manifold.normalize(x)?;
        Ok(y.iter().enumerate().map(|(i, v)| self.cell_of(i, *v)).collect())
    }

    pub fn index(&self, x: &[f64]) -> Result<u64> {
        if self.manifold.gluing().is_some() || x.len() != self.cells.len() || x.iter().any(|v| !v.is_finite()) {
            let mi = self.multi_index(x)?;
            return Ok(self.flatten(mi.into_iter()));
        }
        Ok(self.flatten(x.iter().enumerate().map(|(i, v)| {
            let v = self.periodic[i].map_or(*v, |p| p.reduce(*v));
            self.cell_of(i, v)
        })))
    }

    fn flatten(&self, mi: impl Iterator<Item = usize>) -> u64 {
        mi.zip(&self.cells).fold(0u64, |acc, (i, c)| acc * (*c as u64 + 1) + i as u64)
    }

    /// Parameters `t ∈ (0, 1)` where the chord from `a` to `b` (periodic
    /// coordinates unwrapped the short way) crosses a cell wall.
    fn chord_crossings(&self, a: &[f64], b: &[f64], out: &mut Vec<f64>) {
        for i in 0..a.len() {
            let d = match self.periodic[i] {
                Some(p) => p.difference(b[i], a[i]),
                None => b[i] - a[i],
            };
            if d == 0.0 {
                continue;
            }
            let w = self.width(i);
            let lo = self.bounds[i].0;
            let start = (a[i] - lo) / w;
            let end = start + d / w;
            let (m0, m1) = if d > 0.0 { (start.floor() + 1.0, end.ceil() - 1.0) } else { (end.floor() + 1.0, start.ceil() - 1.0) };
            let mut m = m0;
            while m <= m1 {
                let t = (m - start) / (end - start);
                if t > 0.0 && t < 1.0 {
                    out.push(t);
                }
                m += 1.0;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Per-step growth data with a tail slope.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub steps: Vec<usize>,
    /// `ln N_k` or `ln vol_n`.
    pub values: Vec<f64>,
    /// `values[i] / steps[i]` (0 where the step is 0).
    pub rates: Vec<f64>,
    /// Least-squares slope over the last `⌈n/2⌉` points.
    pub slope: f64,
    pub grid_sensitive: bool,
    pub clamped: bool,
}

impl GrowthReport {
    fn from_values(steps: Vec<usize>, values: Vec<f64>) -> Self {
        let rates = steps.iter().zip(&values).map(|(k, v)| if *k == 0 { 0.0 } else { v / *k as f64 }).collect();
        let pts: Vec<(f64, f64)> = steps.iter().zip(&values).map(|(k, v)| (*k as f64, *v)).collect();
        let tail = &pts[pts.len() - pts.len().div_ceil(2)..];
        let slope = if tail.len() >= 2 { least_squares_slope(tail) } else { 0.0 };
        Self { steps, values, rates, slope, grid_sensitive: false, clamped: false }
    }

    pub fn last_rate(&self) -> f64 {
        *self.rates.last().unwrap_or(&0.0)
    }
}

fn mix(h: u128, cell: u64) -> u128 {
    const M: u128 = 0x9E37_79B9_7F4A_7C15_F39C_C060_5CED_C835;
    (h.rotate_left(29) ^ (cell as u128 + 1)).wrapping_mul(M)
}

/// Itinerary hashes and (optionally) iterates of one sample point.
struct Probe {
    u: f64,
    hashes: Vec<u128>,
    points: Vec<f64>,
}

fn probe(f: &MapSystem, p: &CubePartition, x0: Vec<f64>, u: f64, k_max: usize, keep_points: bool) -> Result<Probe> {
    let dim = x0.len();
    let mut hashes = Vec::with_capacity(k_max);
    let mut points = Vec::with_capacity(if keep_points { dim * k_max } else { 0 });
    let mut x = x0;
    let mut y = vec![0.0; dim];
    let mut h = 0u128;
    for _ in 0..k_max {
        f.step_into(&x, &mut y)?;
        std::mem::swap(&mut x, &mut y);
        h = mix(h, p.index(&x)?);
        hashes.push(h);
        if keep_points {
            points.extend_from_slice(&x);
        }
    }
    Ok(Probe { u, hashes, points })
}

/// Per-k hashes recorded whenever the prefix changes along the curve.
struct Emitter {
    runs: Vec<Vec<u128>>,
}

impl Emitter {
    fn new(k_max: usize) -> Self {
        Self { runs: vec![Vec::new(); k_max] }
    }

    fn emit(&mut self, hashes: &[u128]) {
        for (run, h) in self.runs.iter_mut().zip(hashes) {
            if run.last() != Some(h) {
                run.push(*h);
            }
        }
    }
}

/// Smallest parameter gap the curve refinement resolves.
pub const REFINE_FLOOR: f64 = 1e-13;

struct CurveCounter<'a> {
    f: &'a MapSystem,
    s: &'a ParamSubmanifold,
    p: &'a CubePartition,
    k_max: usize,
    dim: usize,
}

impl CurveCounter<'_> {
    fn at(&self, u: f64, keep_points: bool) -> Result<Probe> {
        probe(self.f, self.p, self.s.point(&[u]), u, self.k_max, keep_points)
    }

    fn step_point<'p>(&self, pr: &'p Probe, j: usize) -> &'p [f64] {
        &pr.points[j * self.dim..(j + 1) * self.dim]
    }

    /// Whether some iterate of `[a, b]` spans more than one cell in a coordinate.
    fn too_long(&self, a: &Probe, b: &Probe) -> bool {
        (0..self.k_max).any(|j| {
            let (x, y) = (self.step_point(a, j), self.step_point(b, j));
            (0..self.dim).any(|i| {
                let d = match self.p.periodic[i] {
                    Some(p) => p.difference(x[i], y[i]),
                    None => x[i] - y[i],
                };
                d.abs() > self.p.width(i)
            })
        })
    }

    /// Emits every itinerary met on `(a, b]` in curve order.
    fn refine(&self, a: &Probe, b: &Probe, out: &mut Emitter) -> Result<()> {
        let gap = b.u - a.u;
        if gap > REFINE_FLOOR && self.too_long(a, b) {
            let mid = self.at(0.5 * (a.u + b.u), true)?;
            self.refine(a, &mid, out)?;
            return self.refine(&mid, b, out);
        }
        if gap > REFINE_FLOOR && a.hashes.last() != b.hashes.last() {
            // short chords: wall crossings located by interpolation, each
            // piece then sampled at its midpoint
            let mut ts = Vec::new();
            for j in 0..self.k_max {
                self.p.chord_crossings(self.step_point(a, j), self.step_point(b, j), &mut ts);
            }
            ts.push(0.0);
            ts.push(1.0);
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            for w in ts.windows(2) {
                let pr = self.at(a.u + 0.5 * (w[0] + w[1]) * gap, false)?;
                out.emit(&pr.hashes);
            }
        }
        out.emit(&b.hashes);
        Ok(())
    }
}

fn count_runs(runs: Vec<Vec<Vec<u128>>>, k_max: usize) -> Vec<usize> {
    (0..k_max)
        .into_par_iter()
        .map(|k| {
            let mut all: Vec<u128> = runs.iter().flat_map(|r| r[k].iter().copied()).collect();
            all.par_sort_unstable();
            all.dedup();
            all.len()
        })
        .collect()
}

fn curve_counts(f: &MapSystem, s: &ParamSubmanifold, p: &CubePartition, k_max: usize, grid: usize) -> Result<Vec<usize>> {
    let counter = CurveCounter { f, s, p, k_max, dim: f.dim() };
    let grid = grid.max(2);
    let chunk = 256usize;
    let starts: Vec<usize> = (0..grid - 1).step_by(chunk).collect();
    let u_of = |i: usize| i as f64 / (grid - 1) as f64;
    let runs: Vec<Vec<Vec<u128>>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + chunk).min(grid - 1);
            let mut out = Emitter::new(k_max);
            let mut left = counter.at(u_of(start), true)?;
            out.emit(&left.hashes);
            for i in start + 1..=end {
                let right = counter.at(u_of(i), true)?;
                counter.refine(&left, &right, &mut out)?;
                left = right;
            }
            Ok(out.runs)
        })
        .collect::<Result<_>>()?;
    Ok(count_runs(runs, k_max))
}

fn grid_counts(f: &MapSystem, s: &ParamSubmanifold, p: &CubePartition, k_max: usize, res: usize) -> Result<Vec<usize>> {
    let grid = s.clone().with_resolution(res).grid();
    let runs: Vec<Vec<Vec<u128>>> = grid
        .par_chunks(4096)
        .map(|chunk| {
            let mut runs = vec![Vec::with_capacity(chunk.len()); k_max];
            for u in chunk {
                let pr = probe(f, p, s.point(u), 0.0, k_max, false)?;
                for (r, h) in runs.iter_mut().zip(pr.hashes) {
                    r.push(h);
                }
            }
            Ok(runs)
        })
        .collect::<Result<_>>()?;
    Ok(count_runs(runs, k_max))
}

/// Counts of distinct itineraries `(j₁, …, j_k)`, `k = 1..=k_max`, of points
/// of `s` under `f`.
///
/// Curves (`s.dim() == 1`) start from `grid` samples and are bisected until
/// every sub-interval's iterates stay within one cell width (down to
/// [`REFINE_FLOOR`]); wall crossings inside such an interval are found by
/// chord interpolation and each piece is sampled. Higher-dimensional patches use a plain grid with about
/// `grid` points.
pub fn itinerary_counts(f: &MapSystem, s: &ParamSubmanifold, p: &CubePartition, k_max: usize, grid: usize) -> Result<Vec<usize>> {
    if k_max == 0 {
        return Err(Error::InvalidInput("k_max must be positive".into()));
    }
    if s.dim() == 1 {
        curve_counts(f, s, p, k_max, grid)
    } else {
        let res = (grid as f64).powf(1.0 / s.dim() as f64).round().max(2.0) as usize;
        grid_counts(f, s, p, k_max, res)
    }
}

/// `ln N_k` growth with a grid-doubling sensitivity flag (> 10% change in `N_{k_max}`).
pub fn itinerary_entropy(f: &MapSystem, s: &ParamSubmanifold, p: &CubePartition, k_max: usize, grid: usize) -> Result<GrowthReport> {
    let counts = itinerary_counts(f, s, p, k_max, grid)?;
    let doubled = itinerary_counts(f, s, p, k_max, grid * 2usize.pow(s.dim() as u32))?;
    let (a, b) = (counts[k_max - 1] as f64, doubled[k_max - 1] as f64);
    let mut report = GrowthReport::from_values((1..=k_max).collect(), counts.iter().map(|n| (*n as f64).ln()).collect());
    report.grid_sensitive = (b - a).abs() > 0.1 * a;
    Ok(report)
}

/// How submanifold volume is measured.
#[derive(Clone)]
pub enum VolumeMeasure {
    /// `√det(GᵀG)` of the pushed-forward frame.
    Riemannian,
    /// `∫ ω` over a 2-dimensional patch (signed; the log uses its magnitude).
    Symplectic(Form),
}

fn frame_volume(g: &DMatrix<f64>) -> f64 {
    (g.transpose() * g).determinant().max(0.0).sqrt()
}

fn volumes(f: &MapSystem, s: &ParamSubmanifold, n_max: usize, res: usize, measure: &VolumeMeasure) -> Result<Vec<f64>> {
    // midpoint rule on cells of the parameter cube
    let h = 1.0 / res as f64;
    let cell = h.powi(s.dim() as i32);
    let mids: Vec<Vec<f64>> = (0..res.pow(s.dim() as u32))
        .map(|mut k| {
            let mut u = vec![0.0; s.dim()];
            for c in u.iter_mut().rev() {
                *c = ((k % res) as f64 + 0.5) * h;
                k /= res;
            }
            u
        })
        .collect();
    let per_point: Vec<Vec<f64>> = mids
        .par_iter()
        .map(|u| {
            let mut x = s.point(u);
            let mut g = s.tangent(u)?;
            let mut out = Vec::with_capacity(n_max + 1);
            for n in 0..=n_max {
                if n > 0 {
                    g = f.jacobian(&x)? * g;
                    x = f.step(&x)?;
                }
                out.push(match measure {
                    VolumeMeasure::Riemannian => frame_volume(&g),
                    VolumeMeasure::Symplectic(omega) => {
                        let c0: Vec<f64> = g.column(0).iter().copied().collect();
                        let c1: Vec<f64> = g.column(1).iter().copied().collect();
                        omega.eval(&x, &[&c0, &c1])?
                    }
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..=n_max).map(|n| per_point.iter().map(|v| v[n]).sum::<f64>() * cell).collect())
}

fn cube_midpoint_resolution(s: &ParamSubmanifold, grid: usize) -> usize {
    (grid as f64).powf(1.0 / s.dim() as f64).round().max(2.0) as usize
}

/// Growth of the volume of `fⁿ(S)` (or `f⁻ⁿ(S)`) for `n = 0..=n_max`.
/// The parameter domain is sampled with about `grid` midpoint cells.
pub fn volume_growth(
    f: &MapSystem,
    s: &ParamSubmanifold,
    n_max: usize,
    direction: Direction,
    grid: usize,
    measure: VolumeMeasure,
) -> Result<GrowthReport> {
    if s.dim() > f.dim() {
        return Err(Error::InvalidInput("submanifold dimension exceeds the manifold's".into()));
    }
    if matches!(measure, VolumeMeasure::Symplectic(_)) && s.dim() != 2 {
        return Err(Error::InvalidInput("symplectic area needs a 2-dimensional patch".into()));
    }
    let map = match direction {
        Direction::Forward => f.clone(),
        Direction::Backward => f.inverse_system()?,
    };
    let res = cube_midpoint_resolution(s, grid);
    let vols = volumes(&map, s, n_max, res, &measure)?;
    let fine = volumes(&map, s, n_max, 2 * res, &measure)?;
    let mut clamped = false;
    let values: Vec<f64> = vols
        .iter()
        .map(|v| {
            let a = v.abs();
            if a == 0.0 || !a.is_finite() {
                clamped = true;
                a.clamp(f64::MIN_POSITIVE, f64::MAX).ln()
            } else {
                a.ln()
            }
        })
        .collect();
    let mut report = GrowthReport::from_values((0..=n_max).collect(), values);
    let (a, b) = (vols[n_max].abs(), fine[n_max].abs());
    report.grid_sensitive = (a - b).abs() > 0.05 * a.max(b);
    report.clamped = clamped;
    Ok(report)
}

/// `‖Dfⁿ‖^{1/n}`, maximised over random sample points.
pub fn derivative_radius(f: &MapSystem, n: usize, samples: usize, seed: u64) -> Result<f64> {
    let mut s = Sampler::new(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let x = s.point_in(f.sample_bounds());
        let j = crate::dynamics::tangent_map(f, &x, n)?;
        let norm = j.svd(false, false).singular_values.max();
        best = best.max(norm.powf(1.0 / n as f64));
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct YomdinCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

pub const YOMDIN_SLACK: f64 = 0.05;

/// `logvol ≤ ent + log⁺(rad^{s/r})`; `r = None` is the smooth case.
pub fn yomdin_bound_check(logvol: f64, ent_lower: f64, rad_df: f64, s: usize, r: Option<usize>) -> YomdinCheck {
    let correction = match r {
        Some(r) => (s as f64 / r as f64 * rad_df.ln()).max(0.0),
        None => 0.0,
    };
    let rhs = ent_lower + correction;
    YomdinCheck { lhs: logvol, rhs, satisfied: logvol <= rhs + YOMDIN_SLACK }
}

/// A segment of the given length through `base` along `direction` (normalized),
/// as a curve on the torus `Tᵈ` parametrized by `[0, 1]`.
pub fn segment(manifold: Manifold, base: Vec<f64>, direction: Vec<f64>, length: f64) -> ParamSubmanifold {
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    let dir: Vec<f64> = direction.iter().map(|d| d / norm * length).collect();
    let dim = base.len();
    let t = DMatrix::from_column_slice(dim, 1, &dir);
    let d2 = dir.clone();
    ParamSubmanifold::new(1, false, manifold, move |u| base.iter().zip(&d2).map(|(b, d)| b + u[0] * d).collect())
        .with_tangent(move |_| Ok(t.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{cat_map, golden_slope, lambda_plus, make_torus6_example, rotation};

    fn unstable_segment(length: f64) -> ParamSubmanifold {
        segment(Manifold::torus("T2", 2), vec![0.1, 0.2], vec![1.0, golden_slope()], length)
    }

    #[test]
    fn partition_indexing() {
        let p = CubePartition::uniform(Manifold::torus("T2", 2), 4).unwrap();
        assert_eq!(p.multi_index(&[0.3, 0.9]).unwrap(), vec![1, 3]);
        assert_eq!(p.multi_index(&[1.3, -0.1]).unwrap(), vec![1, 3]);
        assert_eq!(p.cell_count(), 16);
        let q = CubePartition::new(Manifold::euclidean("R", 1), vec![2], Some(vec![(0.0, 1.0)])).unwrap();
        assert_eq!(q.multi_index(&[5.0]).unwrap(), vec![2]);
    }

    #[test]
    fn identity_has_zero_growth() {
        let id = MapSystem::new(
            "id",
            Manifold::torus("T2", 2),
            |x, out| {
                out.copy_from_slice(x);
                Ok(())
            },
            Form::zero(2, 2),
        );
        let p = CubePartition::uniform(Manifold::torus("T2", 2), 8).unwrap();
        let r = itinerary_entropy(&id, &unstable_segment(0.5), &p, 5, 1000).unwrap();
        assert!(r.values.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(r.slope, 0.0);
    }

    #[test]
    fn cat_map_small_partition() {
        let p = CubePartition::uniform(Manifold::torus("T2", 2), 8).unwrap();
        let r = itinerary_entropy(&cat_map(), &unstable_segment(0.5), &p, 8, 2000).unwrap();
        assert!(r.values.windows(2).all(|w| w[0] <= w[1]));
        assert!((r.slope / lambda_plus().ln() - 1.0).abs() < 0.15, "{r:?}");
        assert!(!r.grid_sensitive);
        for (k, rate) in r.steps.iter().zip(&r.rates) {
            assert!(*rate <= (p.cell_count() as f64).ln() + 1e-12, "k = {k}");
        }
    }

    #[test]
    fn time_reversal_symmetry() {
        let p = CubePartition::uniform(Manifold::torus("T2", 2), 8).unwrap();
        let fwd = itinerary_entropy(&cat_map(), &unstable_segment(0.5), &p, 8, 2000).unwrap();
        let stable = segment(Manifold::torus("T2", 2), vec![0.1, 0.2], vec![1.0, -1.0 / golden_slope()], 0.5);
        let bwd = itinerary_entropy(&cat_map().inverse_system().unwrap(), &stable, &p, 8, 2000).unwrap();
        assert!((fwd.slope - bwd.slope).abs() <= 0.05 * fwd.slope, "{} {}", fwd.slope, bwd.slope);
    }

    #[test]
    fn rotation_length_is_constant() {
        let r =
            volume_growth(&rotation([0.3, 0.1]), &unstable_segment(0.5), 10, Direction::Forward, 64, VolumeMeasure::Riemannian).unwrap();
        assert!(r.slope.abs() < 0.01);
    }

    #[test]
    fn cat_unstable_length_grows() {
        let r = volume_growth(&cat_map(), &unstable_segment(0.5), 10, Direction::Forward, 64, VolumeMeasure::Riemannian).unwrap();
        assert!((r.slope / lambda_plus().ln() - 1.0).abs() < 0.02);
        assert!(!r.grid_sensitive);
    }

    #[test]
    fn torus6_backward_omega_area() {
        let ex = make_torus6_example();
        let patch = ParamSubmanifold::new(2, false, ex.map.manifold().clone(), |u| vec![0.0, u[0], 0.0, u[1], 0.0, 0.0]);
        let r = volume_growth(&ex.map, &patch, 8, Direction::Backward, 64, VolumeMeasure::Symplectic(ex.omega.clone())).unwrap();
        assert!((r.slope - (-2.0 * ex.lambda.ln())).abs() < 1e-6, "{r:?}");
        assert!(r.values[0].abs() < 1e-12);
    }

    #[test]
    fn yomdin_arithmetic() {
        let c = yomdin_bound_check(0.9624, 0.95, lambda_plus(), 1, None);
        assert!(c.satisfied);
        let c = yomdin_bound_check(0.0, 0.0, 1.0, 2, Some(3));
        assert!(c.satisfied && c.rhs == 0.0);
        let c = yomdin_bound_check(0.9624, 0.0, lambda_plus(), 1, Some(1));
        assert!((c.rhs - lambda_plus().ln()).abs() < 1e-15 && c.satisfied);
        assert!(!yomdin_bound_check(1.0, 0.5, 1.0, 1, None).satisfied);
    }

    #[test]
    fn cat_derivative_radius() {
        let r = derivative_radius(&cat_map(), 20, 3, 1).unwrap();
        assert!((r - lambda_plus()).abs() < 1e-6);
    }
}
