//! Paths, loops, patches and their integrals against forms.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::form::Form;
use crate::geometry::manifold::Manifold;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order > 0);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite quadrature settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub panels: usize,
    /// Double the panel count until two successive results agree to `tolerance`.
    pub adaptive: bool,
    pub tolerance: f64,
    pub max_panels: usize,
    /// Bisect only the subintervals whose Gauss–Kronrod error estimate is too large.
    /// Handles integrands with isolated kinks; `order` and `panels` are ignored.
    pub local: bool,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self { order: 8, panels: 256, adaptive: true, tolerance: 1e-10, max_panels: 4096, local: false }
    }
}

impl QuadratureRule {
    pub fn fixed(order: usize, panels: usize) -> Self {
        Self { order, panels, adaptive: false, ..Self::default() }
    }

    /// Locally adaptive G7/K15 with absolute `tolerance`.
    pub fn local(tolerance: f64) -> Self {
        Self { tolerance, local: true, ..Self::default() }
    }
}

#[allow(clippy::excessive_precision)]
const K15_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const K15_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
#[allow(clippy::excessive_precision)]
const G7_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod(g: &mut impl FnMut(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut k = 0.0;
    let mut gs = 0.0;
    for (i, (x, w)) in K15_NODES.iter().zip(&K15_WEIGHTS).enumerate() {
        let v = if *x == 0.0 { g(c)? } else { g(c - h * x)? + g(c + h * x)? };
        k += w * v;
        if i % 2 == 1 {
            gs += G7_WEIGHTS[i / 2] * v;
        }
    }
    Ok((h * k, (h * (k - gs)).abs()))
}

const LOCAL_MAX_DEPTH: u32 = 40;

fn local_adaptive(g: &mut impl FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (k, err) = kronrod(g, a, b)?;
    if err <= tol || depth >= LOCAL_MAX_DEPTH {
        return Ok(k);
    }
    let m = 0.5 * (a + b);
    Ok(local_adaptive(g, a, m, 0.5 * tol, depth + 1)? + local_adaptive(g, m, b, 0.5 * tol, depth + 1)?)
}

/// Composite Gauss–Legendre rule for `∫₀¹ g(t) dt`.
pub fn composite(g: &mut impl FnMut(f64) -> Result<f64>, order: usize, panels: usize) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(order);
    let h = 1.0 / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = p as f64 * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            s += w * g(a + 0.5 * h * (x + 1.0))?;
        }
        total += 0.5 * h * s;
    }
    Ok(total)
}

fn integrate_with(rule: &QuadratureRule, mut g: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    if rule.local {
        // a fixed first split keeps smooth integrands from stopping on a lucky estimate
        let n = 8;
        let mut total = 0.0;
        for i in 0..n {
            total += local_adaptive(&mut g, i as f64 / n as f64, (i + 1) as f64 / n as f64, rule.tolerance / n as f64, 0)?;
        }
        return Ok(total);
    }
    let mut panels = rule.panels;
    let mut prev = composite(&mut g, rule.order, panels)?;
    if !rule.adaptive {
        return Ok(prev);
    }
    while panels < rule.max_panels {
        panels *= 2;
        let next = composite(&mut g, rule.order, panels)?;
        if (next - prev).abs() <= rule.tolerance {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

/// Step of the five-point stencil used for curve and patch derivatives.
pub const CURVE_STEP: f64 = 1e-4;

pub(crate) fn five_point(f: impl Fn(f64) -> Vec<f64>, t: f64) -> Vec<f64> {
    let h = CURVE_STEP;
    let (a, b, c, d) = (f(t + 2.0 * h), f(t + h), f(t - h), f(t - 2.0 * h));
    (0..a.len()).map(|i| (-a[i] + 8.0 * b[i] - 8.0 * c[i] + d[i]) / (12.0 * h)).collect()
}

pub type CurveFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;
pub type PatchFn = Arc<dyn Fn(f64, f64) -> Vec<f64> + Send + Sync>;

/// A map `[0, 1] → chart` (cover coordinates).
#[derive(Clone)]
pub struct Path {
    point: CurveFn,
    velocity: Option<CurveFn>,
}

impl Path {
    pub fn new(point: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { point: Arc::new(point), velocity: None }
    }

    pub fn with_velocity(mut self, v: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.velocity = Some(Arc::new(v));
        self
    }

    /// Straight segment from `a` to `b`.
    pub fn segment(a: Vec<f64>, b: Vec<f64>) -> Self {
        let d: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - x).collect();
        let dv = d.clone();
        Self::new(move |t| a.iter().zip(&d).map(|(x, v)| x + t * v).collect()).with_velocity(move |_| dv.clone())
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        (self.point)(t)
    }

    pub fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        let v = match &self.velocity {
            Some(v) => v(t),
            None => five_point(|s| (self.point)(s), t),
        };
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Quadrature { param: t, reason: "non-finite derivative".into() });
        }
        Ok(v)
    }

    /// The same path traversed backwards.
    pub fn reversed(&self) -> Path {
        let p = self.point.clone();
        let mut out = Path::new(move |t| p(1.0 - t));
        if let Some(v) = self.velocity.clone() {
            out.velocity = Some(Arc::new(move |t| v(1.0 - t).into_iter().map(|c| -c).collect()));
        }
        out
    }

    /// Image under a point map (velocity by finite differences).
    pub fn mapped(&self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Path {
        let p = self.point.clone();
        Path::new(move |t| f(&p(t)))
    }
}

/// A closed path; closure is checked against a manifold's identifications.
#[derive(Clone)]
pub struct Loop(pub Path);

impl Loop {
    pub fn new(point: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Loop(Path::new(point))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    /// Endpoint gap after quotient normalization.
    pub fn closure_gap(&self, m: &Manifold) -> Result<f64> {
        let a = m.normalize(&self.0.point(0.0))?;
        let b = m.normalize(&self.0.point(1.0))?;
        Ok(m.chart_distance(&a, &b))
    }

    pub fn ensure_closed(&self, m: &Manifold, tol: f64) -> Result<()> {
        let gap = self.closure_gap(m)?;
        if gap > tol {
            return Err(Error::Topology { gap });
        }
        Ok(())
    }
}

/// A map `[0, 1]² → chart`.
#[derive(Clone)]
pub struct Patch {
    point: PatchFn,
}

impl Patch {
    pub fn new(point: impl Fn(f64, f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { point: Arc::new(point) }
    }

    pub fn point(&self, u: f64, v: f64) -> Vec<f64> {
        (self.point)(u, v)
    }

    /// Central-difference partials `(∂_u P, ∂_v P)`.
    pub fn partials(&self, u: f64, v: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let du = five_point(|s| (self.point)(s, v), u);
        let dv = five_point(|s| (self.point)(u, s), v);
        if du.iter().chain(&dv).any(|c| !c.is_finite()) {
            return Err(Error::Quadrature { param: u, reason: format!("non-finite patch derivative at v = {v}") });
        }
        Ok((du, dv))
    }

    pub fn mapped(&self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Patch {
        let p = self.point.clone();
        Patch::new(move |u, v| f(&p(u, v)))
    }

    /// Boundary edges, counter-clockwise in the parameter square.
    pub fn boundary(&self) -> [Path; 4] {
        let p = |f: Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>| {
            let pt = self.point.clone();
            Path::new(move |t| {
                let (u, v) = f(t);
                pt(u, v)
            })
        };
        [p(Box::new(|t| (t, 0.0))), p(Box::new(|t| (1.0, t))), p(Box::new(|t| (1.0 - t, 1.0))), p(Box::new(|t| (0.0, 1.0 - t)))]
    }
}

/// `∫_γ α` for a 1-form along a path.
pub fn path_integral(form: &Form, path: &Path, rule: &QuadratureRule) -> Result<f64> {
    if form.degree() != 1 {
        return Err(Error::InvalidInput(format!("line integral of a {}-form", form.degree())));
    }
    integrate_with(rule, |t| {
        let x = path.point(t);
        let v = path.velocity(t)?;
        form.eval(&x, &[&v]).map_err(|e| Error::Quadrature { param: t, reason: e.to_string() })
    })
}

/// `∮_γ α` over a loop.
pub fn line_integral(form: &Form, lp: &Loop, rule: &QuadratureRule) -> Result<f64> {
    path_integral(form, lp.path(), rule)
}

/// `∫_P α` for a 2-form over a patch with `grid.0 × grid.1` panels of
/// tensor-product Gauss–Legendre (order 8).
pub fn surface_integral(form: &Form, patch: &Patch, grid: (usize, usize)) -> Result<f64> {
    if form.degree() != 2 {
        return Err(Error::InvalidInput(format!("surface integral of a {}-form", form.degree())));
    }
    let (nodes, weights) = gauss_legendre(8);
    let (hu, hv) = (1.0 / grid.0 as f64, 1.0 / grid.1 as f64);
    let mut total = 0.0;
    for i in 0..grid.0 {
        for j in 0..grid.1 {
            let mut s = 0.0;
            for (xu, wu) in nodes.iter().zip(&weights) {
                let u = (i as f64 + 0.5 * (xu + 1.0)) * hu;
                for (xv, wv) in nodes.iter().zip(&weights) {
                    let v = (j as f64 + 0.5 * (xv + 1.0)) * hv;
                    let x = patch.point(u, v);
                    let (du, dv) = patch.partials(u, v)?;
                    let val = form.eval(&x, &[&du, &dv]).map_err(|e| Error::Quadrature { param: u, reason: e.to_string() })?;
                    s += wu * wv * val;
                }
            }
            total += 0.25 * hu * hv * s;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 15 is the limit for 8 nodes
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((int - 2.0 / 15.0).abs() < 1e-14);
        let (x3, _) = gauss_legendre(3);
        assert!((x3[2] - (0.6f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn local_rule_resolves_kinks() {
        // |t − 1/3| integrates to 5/18; the kink sits off every dyadic point
        let rule = QuadratureRule::local(1e-13);
        let v = integrate_with(&rule, |t| Ok((t - 1.0 / 3.0).abs())).unwrap();
        assert!((v - 5.0 / 18.0).abs() < 1e-13, "{v}");
        let smooth = integrate_with(&rule, |t| Ok((2.0 * std::f64::consts::PI * t).cos().exp())).unwrap();
        assert!((smooth - 1.2660658777520082).abs() < 1e-13, "{smooth}");
    }

    #[test]
    fn tautological_form_on_constant_graph() {
        // λ = p dq over q(t) = t, p = c
        let lambda = Form::one_form(2, |x| vec![x[1], 0.0]);
        let lp = Loop::new(|t| vec![t, 0.7]);
        let m = Manifold::cotangent_torus(1);
        lp.ensure_closed(&m, 1e-10).unwrap();
        let v = line_integral(&lambda, &lp, &QuadratureRule::default()).unwrap();
        assert!((v - 0.7).abs() < 1e-10);
        let exact = Loop(Path::new(|t| vec![t, 0.7]).with_velocity(|_| vec![1.0, 0.0]));
        let v = line_integral(&lambda, &exact, &QuadratureRule::default()).unwrap();
        assert!((v - 0.7).abs() < 1e-14);
    }

    #[test]
    fn exact_form_has_zero_period() {
        let s = Form::function(2, |x| (x[0] * 3.0).sin() * x[1] + x[1].powi(3));
        let ds = s.d();
        let lp = Loop::new(|t| {
            let a = 2.0 * std::f64::consts::PI * t;
            vec![a.cos() + 0.3, 0.5 * a.sin()]
        });
        let v = line_integral(&ds, &lp, &QuadratureRule::default()).unwrap();
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn lambda_vanishes_on_zero_section() {
        let lambda = Form::one_form(2, |x| vec![x[1], 0.0]);
        let lp = Loop::new(|t| vec![t, 0.0]);
        assert_eq!(line_integral(&lambda, &lp, &QuadratureRule::default()).unwrap(), 0.0);
    }

    #[test]
    fn open_loop_is_a_topology_error() {
        let lp = Loop::new(|t| vec![t, t]);
        let m = Manifold::cotangent_torus(1);
        assert!(matches!(lp.ensure_closed(&m, 1e-10), Err(Error::Topology { .. })));
    }

    #[test]
    fn unit_square_area() {
        let area = Form::coordinate(2, 0).wedge(&Form::coordinate(2, 1)).unwrap();
        let patch = Patch::new(|u, v| vec![u, v]);
        assert!((surface_integral(&area, &patch, (2, 2)).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stokes_on_a_curved_patch() {
        let a = Form::one_form(2, |x| vec![x[1] * x[0].sin(), x[0] * x[0] + x[1]]);
        let da = a.d();
        let patch = Patch::new(|u, v| vec![0.2 + u + 0.3 * v * v, 0.1 + v + 0.2 * u * v]);
        let inner = surface_integral(&da, &patch, (8, 8)).unwrap();
        let rule = QuadratureRule::fixed(8, 64);
        let boundary: f64 = patch.boundary().iter().map(|p| path_integral(&a, p, &rule).unwrap()).sum();
        assert!((inner - boundary).abs() < 1e-4, "{inner} vs {boundary}");
    }
}
