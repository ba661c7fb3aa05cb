//! Verifiers for isotropy, Liouville classes, exactness transforms, action
//! differences and fiber escape.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{FlowSystem, MapSystem};
use crate::error::{Error, Result};
use crate::geometry::integrate::five_point;
use crate::geometry::{line_integral, path_integral, Form, Loop, Manifold, Path, QuadratureRule, SmoothMap};
use crate::sampling::Sampler;

pub type EmbedFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type TangentFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;

/// An embedding of `[0, 1]ˢ` (cube) or `Tˢ` (torus) into a manifold.
#[derive(Clone)]
pub struct ParamSubmanifold {
    s: usize,
    periodic: bool,
    manifold: Manifold,
    embed: EmbedFn,
    tangent: Option<TangentFn>,
    resolution: usize,
}

impl ParamSubmanifold {
    pub fn new(s: usize, periodic: bool, manifold: Manifold, embed: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { s, periodic, manifold, embed: Arc::new(embed), tangent: None, resolution: 16 }
    }

    /// Analytic derivative, an `ambient × s` matrix.
    pub fn with_tangent(mut self, t: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.tangent = Some(Arc::new(t));
        self
    }

    pub fn with_resolution(mut self, r: usize) -> Self {
        self.resolution = r;
        self
    }

    /// Graph `q ↦ (q, g(q))` over `Tⁿ` in `T*Tⁿ`.
    pub fn graph(n: usize, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self::new(n, true, Manifold::cotangent_torus(n), move |q| {
            let mut x = q.to_vec();
            x.extend(g(q));
            x
        })
    }

    /// Graph of the constant covector `c`.
    pub fn constant_graph(c: Vec<f64>) -> Self {
        let n = c.len();
        let mut t = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            t[(i, i)] = 1.0;
        }
        Self::graph(n, move |_| c.clone()).with_tangent(move |_| Ok(t.clone()))
    }

    pub fn zero_section(n: usize) -> Self {
        Self::constant_graph(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn ambient_dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn point(&self, u: &[f64]) -> Vec<f64> {
        (self.embed)(u)
    }

    /// Columns are `∂ᵢ j(u)`; five-point differences when no analytic derivative is set.
    pub fn tangent(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(t) = &self.tangent {
            return t(u);
        }
        let mut m = DMatrix::zeros(self.ambient_dim(), self.s);
        for i in 0..self.s {
            let col = five_point(
                |t| {
                    let mut v = u.to_vec();
                    v[i] = t;
                    (self.embed)(&v)
                },
                u[i],
            );
            if col.iter().any(|c| !c.is_finite()) {
                return Err(Error::Jacobian { at: u.to_vec(), reason: format!("non-finite derivative in direction {i}") });
            }
            for (r, c) in col.into_iter().enumerate() {
                m[(r, i)] = c;
            }
        }
        Ok(m)
    }

    /// Grid over the parameter domain in lexicographic order: `i/r` on a
    /// torus, `i/(r−1)` on a cube.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let r = self.resolution;
        let step = if self.periodic { 1.0 / r as f64 } else { 1.0 / (r - 1).max(1) as f64 };
        let total = r.pow(self.s as u32);
        (0..total)
            .map(|mut k| {
                let mut u = vec![0.0; self.s];
                for i in (0..self.s).rev() {
                    u[i] = (k % r) as f64 * step;
                    k /= r;
                }
                u
            })
            .collect()
    }

    /// `f ∘ j`, with derivative `Df · Dj`.
    pub fn mapped(&self, f: Arc<dyn SmoothMap>) -> ParamSubmanifold {
        let (e1, e2) = (self.embed.clone(), self.embed.clone());
        let inner = self.clone();
        let g = f.clone();
        ParamSubmanifold {
            s: self.s,
            periodic: self.periodic,
            manifold: self.manifold.clone(),
            embed: Arc::new(move |u| f.apply(&e1(u)).expect("mapped embedding evaluates")),
            tangent: Some(Arc::new(move |u| Ok(g.jacobian(&e2(u))? * inner.tangent(u)?))),
            resolution: self.resolution,
        }
    }

    /// The loop `t ↦ j(base + t eᵢ)` as a loop in the manifold.
    pub fn coordinate_loop(&self, i: usize, base: &[f64]) -> Loop {
        let (e, this) = (self.embed.clone(), self.clone());
        let (b1, b2) = (base.to_vec(), base.to_vec());
        let point = move |t: f64| {
            let mut u = b1.clone();
            u[i] = b1[i] + t;
            e(&u)
        };
        let velocity = move |t: f64| {
            let mut u = b2.clone();
            u[i] = b2[i] + t;
            match this.tangent(&u) {
                Ok(m) => m.column(i).iter().copied().collect(),
                Err(_) => vec![f64::NAN; this.ambient_dim()],
            }
        };
        Loop(Path::new(point).with_velocity(velocity))
    }

    /// H¹ generators: the coordinate loops through the parameter midpoint.
    pub fn generator_loops(&self) -> Vec<Loop> {
        let mid = vec![0.5; self.s];
        (0..self.s).map(|i| self.coordinate_loop(i, &mid)).collect()
    }
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Absolute floor below which `ω` restrictions count as zero.
pub const RANK_FLOOR: f64 = 1e-9;
pub const RANK_RELATIVE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsotropyReport {
    pub max_abs_omega: f64,
    pub estimated_rank: usize,
    pub rank_histogram: BTreeMap<usize, usize>,
    pub points: usize,
}

/// Restrict `ω` to the tangent frames of `n` over its grid.
pub fn isotropy_defect(n: &ParamSubmanifold, omega: &Form) -> Result<IsotropyReport> {
    if n.resolution < 8 {
        return Err(Error::InvalidInput(format!("grid resolution {} below 8", n.resolution)));
    }
    if omega.degree() != 2 || omega.dim() != n.ambient_dim() {
        return Err(Error::InvalidInput("isotropy needs a 2-form on the ambient manifold".into()));
    }
    let grid = n.grid();
    let per_point: Vec<(f64, usize)> = grid
        .par_iter()
        .map(|u| {
            let t = n.tangent(u)?;
            let sv = singular_values(&t);
            let smallest = sv.last().copied().unwrap_or(0.0);
            if smallest <= 1e-8 {
                return Err(Error::DegenerateEmbedding { min_singular: smallest });
            }
            let x = n.point(u);
            let s = n.s;
            let cols: Vec<Vec<f64>> = (0..s).map(|i| t.column(i).iter().copied().collect()).collect();
            let mut w = DMatrix::zeros(s, s);
            let mut max_abs = 0.0f64;
            for i in 0..s {
                for j in i + 1..s {
                    let v = omega.eval(&x, &[&cols[i], &cols[j]])?;
                    w[(i, j)] = v;
                    w[(j, i)] = -v;
                    max_abs = max_abs.max(v.abs());
                }
            }
            let sv = singular_values(&w);
            let top = sv.first().copied().unwrap_or(0.0);
            let threshold = (RANK_RELATIVE * top).max(RANK_FLOOR);
            let rank = sv.iter().filter(|v| **v > threshold).count() & !1;
            Ok((max_abs, rank))
        })
        .collect::<Result<_>>()?;
    let mut hist = BTreeMap::new();
    for (_, r) in &per_point {
        *hist.entry(*r).or_insert(0) += 1;
    }
    Ok(IsotropyReport {
        max_abs_omega: per_point.iter().map(|p| p.0).fold(0.0, f64::max),
        estimated_rank: per_point.iter().map(|p| p.1).max().unwrap_or(0),
        rank_histogram: hist,
        points: per_point.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiouvilleClass {
    pub periods: Vec<f64>,
}

/// Periods of `j*λ` over loops in `j`'s ambient manifold.
pub fn liouville_class(j: &ParamSubmanifold, lambda: &Form, loops: &[Loop], rule: &QuadratureRule) -> Result<LiouvilleClass> {
    let periods = loops
        .iter()
        .map(|lp| {
            lp.ensure_closed(j.manifold(), 1e-10)?;
            line_integral(lambda, lp, rule)
        })
        .collect::<Result<_>>()?;
    Ok(LiouvilleClass { periods })
}

/// Unique solution of `c = a c + η`.
pub fn fixed_liouville_class(a: f64, eta_periods: &[f64]) -> Result<Vec<f64>> {
    if a == 1.0 {
        return Err(Error::NoFixedClass);
    }
    Ok(eta_periods.iter().map(|e| e / (1.0 - a)).collect())
}

/// Coordinate loops of the periodic coordinates through `base`.
pub fn manifold_loops(m: &Manifold, base: &[f64]) -> Vec<Loop> {
    (0..m.dim())
        .filter_map(|i| m.periodicity(i).map(|p| (i, p.period)))
        .map(|(i, period)| {
            let b = base.to_vec();
            let dim = b.len();
            Loop(
                Path::new(move |t| {
                    let mut x = b.clone();
                    x[i] += t * period;
                    x
                })
                .with_velocity(move |_| {
                    let mut v = vec![0.0; dim];
                    v[i] = period;
                    v
                }),
            )
        })
        .collect()
}

#[derive(Clone)]
pub struct ExactnessTransform {
    pub lambda1: Form,
    /// Periods of `f*λ₁ − aλ₁`.
    pub residual_periods: Vec<f64>,
    /// `max |dλ₁ − dλ|` over random samples.
    pub d_residual: f64,
}

/// `λ₁ = (λ − f*λ)/(1 − a)`.
pub fn exactness_transform(f: &MapSystem, loops: &[Loop], rule: &QuadratureRule, seed: u64) -> Result<ExactnessTransform> {
    let a = f.nominal_ratio().ok_or_else(|| Error::NotApplicable(format!("{} has no nominal ratio", f.name())))?;
    if a == 1.0 {
        return Err(Error::NotApplicable("ratio 1: no transform".into()));
    }
    let lambda = f.lambda().ok_or_else(|| Error::NotApplicable(format!("{} carries no Liouville form", f.name())))?;
    let fmap: Arc<dyn SmoothMap> = Arc::new(f.clone());
    let pulled = lambda.pullback(fmap.clone())?;
    let lambda1 = lambda.sub(&pulled)?.scale(1.0 / (1.0 - a));
    let residual = lambda1.pullback(fmap)?.add_scaled(&lambda1, -a)?;
    let residual_periods = loops.iter().map(|lp| line_integral(&residual, lp, rule)).collect::<Result<_>>()?;
    let d_residual = max_difference(&lambda1.d(), &lambda.d(), f.sample_bounds(), 200, seed)?;
    Ok(ExactnessTransform { lambda1, residual_periods, d_residual })
}

/// Largest `|a(x; u, v) − b(x; u, v)|` on random 2-form inputs.
fn max_difference(a: &Form, b: &Form, bounds: &[(f64, f64)], samples: usize, seed: u64) -> Result<f64> {
    let mut s = Sampler::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = s.point_in(bounds);
        let u = s.normal_vector(x.len());
        let v = s.normal_vector(x.len());
        worst = worst.max((a.eval(&x, &[&u, &v])? - b.eval(&x, &[&u, &v])?).abs());
    }
    Ok(worst)
}

#[derive(Clone)]
pub struct FlowExactness {
    pub xi: Form,
    pub xi_periods: Vec<f64>,
    pub lambda1: Form,
    /// `max |dξ|` over random samples.
    pub d_xi_residual: f64,
}

/// `ε = ±1` with `dλ = εω`, read off at a random point.
pub fn primitive_sign(omega: &Form, lambda: &Form, bounds: &[(f64, f64)], seed: u64) -> Result<f64> {
    let dl = lambda.d();
    let mut s = Sampler::new(seed);
    for _ in 0..32 {
        let x = s.point_in(bounds);
        let (u, v) = (s.normal_vector(x.len()), s.normal_vector(x.len()));
        let (w, d) = (omega.eval(&x, &[&u, &v])?, dl.eval(&x, &[&u, &v])?);
        if w.abs() < 1e-3 {
            continue;
        }
        for eps in [1.0, -1.0] {
            if (d - eps * w).abs() <= 1e-5 * (1.0 + w.abs()) {
                return Ok(eps);
            }
        }
        return Err(Error::NotApplicable("λ is not a primitive of ±ω".into()));
    }
    Err(Error::DegenerateSampling { samples: 32 })
}

/// For a flow of rate `α` and `dλ = εω`: `ξ = i_Xω − εαλ` (closed) and
/// `λ₁ = λ + εξ/α`, for which `i_Xω = εαλ₁`.
pub fn flow_exactness_form(x: &FlowSystem, loops: &[Loop], rule: &QuadratureRule, seed: u64) -> Result<FlowExactness> {
    let alpha = x.nominal_rate().ok_or_else(|| Error::NotApplicable(format!("{} has no nominal rate", x.name())))?;
    if alpha == 0.0 {
        return Err(Error::NotApplicable("rate 0: no transform".into()));
    }
    let lambda = x.lambda().ok_or_else(|| Error::NotApplicable(format!("{} carries no Liouville form", x.name())))?;
    let eps = primitive_sign(x.omega(), lambda, x.sample_bounds(), seed)?;
    let xi = x.omega().interior(x.vector_field()?)?.add_scaled(lambda, -eps * alpha)?;
    let lambda1 = lambda.add_scaled(&xi, eps / alpha)?;
    let xi_periods = loops.iter().map(|lp| line_integral(&xi, lp, rule)).collect::<Result<_>>()?;
    let d_xi_residual = max_difference(&xi.d(), &Form::zero(x.dim(), 2), x.sample_bounds(), 200, seed)?;
    Ok(FlowExactness { xi, xi_periods, lambda1, d_xi_residual })
}

/// Fiber gap `p(L(q)) − p(L'(q))` for curves over `T¹` parametrized by `q`.
fn fiber_gap(l: &ParamSubmanifold, lp: &ParamSubmanifold, q: f64) -> Result<f64> {
    let (a, b) = (l.point(&[q]), lp.point(&[q]));
    if (a[0] - q).abs() > 1e-9 || (b[0] - q).abs() > 1e-9 {
        return Err(Error::InvalidInput("curves must be graphs parametrized by the base coordinate".into()));
    }
    Ok(a[1] - b[1])
}

/// Transverse intersections of two graphs over `T¹`: sign changes of the fiber
/// gap on `samples` cells, refined by bisection to `1e−12`.
pub fn find_intersections(l: &ParamSubmanifold, lp: &ParamSubmanifold, samples: usize) -> Result<Vec<f64>> {
    if l.ambient_dim() != 2 || lp.ambient_dim() != 2 || l.dim() != 1 || lp.dim() != 1 {
        return Err(Error::InvalidInput("action difference is implemented for curves in T*T^1".into()));
    }
    let mut roots = Vec::new();
    let h = 1.0 / samples as f64;
    let mut prev = fiber_gap(l, lp, 0.0)?;
    for k in 1..=samples {
        let q = k as f64 * h;
        let cur = fiber_gap(l, lp, q)?;
        if prev == 0.0 {
            roots.push((k - 1) as f64 * h);
        } else if prev * cur < 0.0 {
            let (mut lo, mut hi, mut glo) = ((k - 1) as f64 * h, q, prev);
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                let gm = fiber_gap(l, lp, mid)?;
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if gm * glo < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    glo = gm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    if roots.is_empty() {
        return Err(Error::NoIntersection { samples });
    }
    Ok(roots)
}

fn branch_path(c: &ParamSubmanifold, from: f64, to: f64) -> Path {
    let (c1, c2) = (c.clone(), c.clone());
    let len = to - from;
    Path::new(move |t| c1.point(&[from + t * len])).with_velocity(move |t| match c2.tangent(&[from + t * len]) {
        Ok(m) => m.column(0).iter().map(|v| v * len).collect(),
        Err(_) => vec![f64::NAN; 2],
    })
}

/// `Δ = ∫_{L: x→y} λ + ∫_{L': y→x} λ`, both paths over the base interval
/// between `qx` and `qy`.
pub fn action_difference(
    l: &ParamSubmanifold,
    lp: &ParamSubmanifold,
    qx: f64,
    qy: f64,
    lambda: &Form,
    rule: &QuadratureRule,
) -> Result<f64> {
    let along_l = path_integral(lambda, &branch_path(l, qx, qy), rule)?;
    let back_lp = path_integral(lambda, &branch_path(lp, qy, qx), rule)?;
    Ok(along_l + back_lp)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EscapeRow {
    pub k: usize,
    pub min_p_norm: f64,
    pub max_p_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeProbe {
    pub rows: Vec<EscapeRow>,
    /// First iterate at which some grid point diverged.
    pub escaped_at: Option<usize>,
}

impl EscapeProbe {
    /// Least-squares slope of `ln max‖p‖` over the last half of the rows.
    pub fn growth_exponent(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.k as f64, r.max_p_norm.ln())).collect();
        let tail = &pts[pts.len() - pts.len().div_ceil(2)..];
        crate::stats::least_squares_slope(tail)
    }
}

/// Fiber-norm extrema of `fᵏ(L)` for `k = 0..=kmax` on `T*Tⁿ` coordinates `(q, p)`.
pub fn orbit_escape_probe(f: &MapSystem, l: &ParamSubmanifold, kmax: usize) -> Result<EscapeProbe> {
    let n = f.dim() / 2;
    if !f.dim().is_multiple_of(2) || l.ambient_dim() != f.dim() {
        return Err(Error::InvalidInput("escape probe needs a cotangent system and a submanifold in it".into()));
    }
    let mut pts: Vec<Vec<f64>> = l.grid().iter().map(|u| l.point(u)).collect();
    let mut rows = Vec::new();
    let norms = |pts: &[Vec<f64>]| {
        let ns: Vec<f64> = pts.iter().map(|x| x[n..].iter().map(|p| p * p).sum::<f64>().sqrt()).collect();
        (ns.iter().cloned().fold(f64::INFINITY, f64::min), ns.iter().cloned().fold(0.0, f64::max))
    };
    let (lo, hi) = norms(&pts);
    rows.push(EscapeRow { k: 0, min_p_norm: lo, max_p_norm: hi });
    for k in 1..=kmax {
        let next: Result<Vec<Vec<f64>>> = pts.par_iter().map(|x| f.iterate(x, 1, false)).collect();
        match next {
            Ok(v) => pts = v,
            Err(Error::Divergence { .. }) => return Ok(EscapeProbe { rows, escaped_at: Some(k) }),
            Err(e) => return Err(e),
        }
        let (lo, hi) = norms(&pts);
        rows.push(EscapeRow { k, min_p_norm: lo, max_p_norm: hi });
    }
    Ok(EscapeProbe { rows, escaped_at: None })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::dynamics::FlowSettings;
    use crate::systems::{
        cotangent_forms, liouville_flow, make_mane_lift, make_model_cotangent_map, make_suspension_example, make_torus6_example, BaseField,
    };

    fn rule() -> QuadratureRule {
        QuadratureRule::default()
    }

    #[test]
    fn zero_section_is_isotropic() {
        let (omega, _) = cotangent_forms(2);
        let r = isotropy_defect(&ParamSubmanifold::zero_section(2).with_resolution(8), &omega).unwrap();
        assert!(r.max_abs_omega < 1e-12);
        assert_eq!(r.estimated_rank, 0);
    }

    #[test]
    fn exact_graph_is_lagrangian() {
        let (omega, _) = cotangent_forms(2);
        // dS for S = sin(2π q₁)/10
        let g = ParamSubmanifold::graph(2, |q| vec![0.2 * PI * (2.0 * PI * q[0]).cos(), 0.0]).with_resolution(12);
        let r = isotropy_defect(&g, &omega).unwrap();
        assert!(r.max_abs_omega < 1e-8, "{r:?}");
        assert_eq!(r.estimated_rank, 0);
    }

    #[test]
    fn torus_slice_has_rank_two() {
        let ex = make_torus6_example();
        let t4 = ParamSubmanifold::new(4, true, ex.map.manifold().clone(), |u| {
            let mut x = u.to_vec();
            x.extend([0.0, 0.0]);
            x
        })
        .with_resolution(8);
        let r = isotropy_defect(&t4, &ex.omega).unwrap();
        assert_eq!(r.estimated_rank, 2);
        assert!((r.max_abs_omega - 1.0).abs() < 1e-10, "{r:?}");
        // oracle: the 4×4 matrix of Ω₁ on the coordinate frame
        let p = ex.p;
        let w = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0,
                0.0,
                p * p,
                -p, //
                0.0,
                0.0,
                -p,
                1.0, //
                -p * p,
                p,
                0.0,
                0.0, //
                p,
                -1.0,
                0.0,
                0.0,
            ],
        );
        let eig = w.transpose().clone() * &w;
        let ev = eig.symmetric_eigen().eigenvalues;
        assert_eq!(ev.iter().filter(|v| **v > 1e-10).count(), 2);
    }

    #[test]
    fn reparametrization_changes_little() {
        let ex = make_torus6_example();
        let plane = |shift: f64, flip: bool| {
            ParamSubmanifold::new(2, true, ex.map.manifold().clone(), move |u| {
                let a = if flip { 1.0 - u[0] } else { u[0] + shift };
                vec![a, 0.3 * (2.0 * PI * a).sin(), u[1] + shift, 0.0, 0.0, 0.0]
            })
            .with_resolution(64)
        };
        let r1 = isotropy_defect(&plane(0.0, false), &ex.omega).unwrap().max_abs_omega;
        let r2 = isotropy_defect(&plane(0.37, true), &ex.omega).unwrap().max_abs_omega;
        assert!((r1 - r2).abs() <= 0.1 * r1, "{r1} {r2}");
    }

    #[test]
    fn degenerate_embedding_is_rejected() {
        let (omega, _) = cotangent_forms(1);
        let bad = ParamSubmanifold::new(1, true, crate::geometry::Manifold::cotangent_torus(1), |_| vec![0.0, 0.0]).with_resolution(8);
        assert!(matches!(isotropy_defect(&bad, &omega), Err(Error::DegenerateEmbedding { .. })));
    }

    #[test]
    fn liouville_classes() {
        let (_, lambda) = cotangent_forms(1);
        let zero = ParamSubmanifold::zero_section(1);
        assert_eq!(liouville_class(&zero, &lambda, &zero.generator_loops(), &rule()).unwrap().periods, vec![0.0]);
        let g = ParamSubmanifold::constant_graph(vec![0.4]);
        let c = liouville_class(&g, &lambda, &g.generator_loops(), &rule()).unwrap();
        assert!((c.periods[0] - 0.4).abs() < 1e-12);
        let m = make_model_cotangent_map(1, 0.5, &[0.3]).unwrap();
        let img = g.mapped(Arc::new(m.map.clone()));
        let c = liouville_class(&img, &lambda, &img.generator_loops(), &rule()).unwrap();
        assert!((c.periods[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fixed_classes() {
        assert_eq!(fixed_liouville_class(0.5, &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(fixed_liouville_class(2.0, &[1.0]).unwrap(), vec![-1.0]);
        assert!(matches!(fixed_liouville_class(1.0, &[1.0]), Err(Error::NoFixedClass)));
        let fixed = fixed_liouville_class(0.5, &[0.3]).unwrap()[0];
        assert!((fixed - 0.6).abs() < 1e-15);
        let m = make_model_cotangent_map(1, 0.5, &[0.3]).unwrap();
        for q in [0.0, 0.3, 0.77] {
            let y = m.map.step(&[q, fixed]).unwrap();
            assert!((y[1] - fixed).abs() < 1e-12);
        }
    }

    #[test]
    fn model_map_exactness_transform() {
        let m = make_model_cotangent_map(1, 0.5, &[0.3]).unwrap();
        let loops = manifold_loops(m.map.manifold(), &[0.0, 0.7]);
        let t = exactness_transform(&m.map, &loops, &rule(), 61).unwrap();
        assert!(t.residual_periods.iter().all(|p| p.abs() < 1e-12));
        assert!(t.d_residual < 1e-5);
        // λ₁ = λ − 0.6 dq
        let x = [0.2, 0.9];
        let u = [1.0, 0.0];
        assert!((t.lambda1.eval(&x, &[&u]).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn exact_map_keeps_periods() {
        let m = make_model_cotangent_map(1, 0.5, &[0.0]).unwrap();
        let loops = manifold_loops(m.map.manifold(), &[0.0, 0.7]);
        let t = exactness_transform(&m.map, &loops, &rule(), 62).unwrap();
        let lambda = m.map.lambda().unwrap();
        let a = line_integral(&t.lambda1, &loops[0], &rule()).unwrap();
        let b = line_integral(lambda, &loops[0], &rule()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn symplectic_map_has_no_transform() {
        let m = make_model_cotangent_map(1, 1.0, &[0.3]).unwrap();
        assert!(matches!(exactness_transform(&m.map, &[], &rule(), 1), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn liouville_flow_xi_vanishes() {
        let f = liouville_flow(1);
        let loops = manifold_loops(f.manifold(), &[0.0, 0.4]);
        let t = flow_exactness_form(&f, &loops, &rule(), 63).unwrap();
        let x = [0.3, 0.8];
        let u = [0.7, -1.1];
        assert!(t.xi.eval(&x, &[&u]).unwrap().abs() < 1e-15);
        assert!((t.lambda1.eval(&x, &[&u]).unwrap() - 0.8 * 0.7).abs() < 1e-15);
        assert!(t.d_xi_residual < 1e-5);
    }

    #[test]
    fn mane_xi_is_exact() {
        let lift = make_mane_lift(BaseField::new(1, |q| vec![0.1 * (2.0 * PI * q[0]).sin() + 0.5]), 1.5);
        let loops = manifold_loops(lift.flow.manifold(), &[0.0, 0.4]);
        let t = flow_exactness_form(&lift.flow, &loops, &rule(), 64).unwrap();
        assert!(t.xi_periods.iter().all(|p| p.abs() < 1e-8), "{:?}", t.xi_periods);
        assert!(t.d_xi_residual < 1e-5);
    }

    #[test]
    fn primitive_sign_follows_convention() {
        let (omega, lambda) = cotangent_forms(1);
        assert_eq!(primitive_sign(&omega, &lambda, &[(0.0, 1.0), (-1.0, 1.0)], 3).unwrap(), -1.0);
        let s = make_suspension_example().flow;
        assert_eq!(primitive_sign(s.omega(), s.lambda().unwrap(), s.sample_bounds(), 3).unwrap(), 1.0);
        let unrelated = Form::one_form(2, |x| vec![0.0, x[0] * x[0]]);
        assert!(matches!(primitive_sign(&omega, &unrelated, &[(0.0, 1.0), (-1.0, 1.0)], 3), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn suspension_xi_is_closed_and_lambda1_is_a_liouville_form() {
        let s = make_suspension_example().flow;
        let loops = manifold_loops(s.manifold(), &[0.5, 0.5, 0.5, 0.0]);
        let t = flow_exactness_form(&s, &loops, &rule(), 65).unwrap();
        assert!(t.d_xi_residual < 1e-5, "{}", t.d_xi_residual);
        // i_X ω = α λ₁ for the + convention
        let alpha = s.nominal_rate().unwrap();
        let lhs = s.omega().interior(s.vector_field().unwrap()).unwrap();
        let mut sampler = Sampler::new(9);
        for _ in 0..50 {
            let x = sampler.point_in(s.sample_bounds());
            let u = sampler.normal_vector(4);
            let (l, r) = (lhs.eval(&x, &[&u]).unwrap(), alpha * t.lambda1.eval(&x, &[&u]).unwrap());
            assert!((l - r).abs() < 1e-9 * (1.0 + l.abs()), "{l} vs {r}");
        }
    }

    fn cos_graph(a: f64) -> ParamSubmanifold {
        ParamSubmanifold::graph(1, move |q| vec![a * (2.0 * PI * q[0]).cos()])
    }

    #[test]
    fn action_difference_closed_form() {
        let (_, lambda) = cotangent_forms(1);
        let (l, zero) = (cos_graph(1.0), ParamSubmanifold::zero_section(1));
        let roots = find_intersections(&l, &zero, 1000).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 0.25).abs() < 1e-11 && (roots[1] - 0.75).abs() < 1e-11);
        let d = action_difference(&l, &zero, roots[0], roots[1], &lambda, &rule()).unwrap();
        assert!((d + 1.0 / PI).abs() < 1e-9, "{d}");
        let back = action_difference(&l, &zero, roots[1], roots[0], &lambda, &rule()).unwrap();
        assert!((d + back).abs() < 1e-10);
        assert!(action_difference(&l, &l, roots[0], roots[1], &lambda, &rule()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn action_difference_scales() {
        let (_, lambda) = cotangent_forms(1);
        let (l, zero) = (cos_graph(1.0), ParamSubmanifold::zero_section(1));
        let d = action_difference(&l, &zero, 0.25, 0.75, &lambda, &rule()).unwrap();
        for a in [0.5, 2.0] {
            let m = make_model_cotangent_map(1, a, &[0.0]).unwrap();
            let (li, zi) = (l.mapped(Arc::new(m.map.clone())), zero.mapped(Arc::new(m.map.clone())));
            let roots = find_intersections(&li, &zi, 1000).unwrap();
            let di = action_difference(&li, &zi, roots[0], roots[1], &lambda, &rule()).unwrap();
            assert!((di - a * d).abs() < 1e-8);
        }
    }

    #[test]
    fn no_intersection_reported() {
        let r = find_intersections(&ParamSubmanifold::constant_graph(vec![1.0]), &ParamSubmanifold::zero_section(1), 100);
        assert!(matches!(r, Err(Error::NoIntersection { .. })));
    }

    #[test]
    fn escape_probe_growth() {
        let m = make_model_cotangent_map(1, 2.0, &[0.0]).unwrap();
        let probe = orbit_escape_probe(&m.map, &ParamSubmanifold::constant_graph(vec![0.3]), 20).unwrap();
        for r in &probe.rows {
            assert_eq!(r.max_p_norm, 0.3 * 2f64.powi(r.k as i32));
        }
        assert!((probe.growth_exponent() - 2f64.ln()).abs() < 1e-12);
        let zero = orbit_escape_probe(&m.map, &ParamSubmanifold::zero_section(1), 20).unwrap();
        assert!(zero.rows.iter().all(|r| r.max_p_norm == 0.0));
    }

    #[test]
    fn escape_probe_records_divergence() {
        let m = make_model_cotangent_map(1, 1e4, &[0.0]).unwrap();
        let probe = orbit_escape_probe(&m.map, &ParamSubmanifold::constant_graph(vec![1.0]), 10).unwrap();
        assert_eq!(probe.escaped_at, Some(4));
    }

    #[test]
    fn contracting_probe_converges_to_fixed_class() {
        let m = make_model_cotangent_map(1, 0.5, &[0.3]).unwrap();
        let probe = orbit_escape_probe(&m.map, &ParamSubmanifold::constant_graph(vec![-2.0]), 60).unwrap();
        let last = probe.rows.last().unwrap();
        assert!((last.max_p_norm - 0.6).abs() < 1e-12 && (last.min_p_norm - 0.6).abs() < 1e-12);
    }

    #[test]
    fn mane_zero_section_stays_isotropic_along_flow() {
        let lift = make_mane_lift(BaseField::new(1, |q| vec![0.1 * (2.0 * PI * q[0]).sin() + 0.5]), 1.5);
        let phi = lift.flow.time_map(1.0, FlowSettings::default());
        let (omega, _) = cotangent_forms(1);
        let z = ParamSubmanifold::zero_section(1).with_resolution(8);
        let moved = z.mapped(Arc::new(phi));
        for n in [&z, &moved] {
            let r = isotropy_defect(n, &omega).unwrap();
            assert!(r.max_abs_omega < 1e-12 && r.estimated_rank == 0);
        }
    }
}
