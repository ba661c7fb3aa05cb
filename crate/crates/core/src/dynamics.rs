//! Discrete maps and flows with tangent dynamics.
//!
//! Maps and flows act on cover coordinates; callers normalize explicitly when
//! they need a representative in the fundamental domain.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{finite_difference_jacobian, Form, Manifold, SmoothMap, VectorFieldFn, DEFAULT_STEP};
use crate::sampling::Sampler;

/// Coordinate magnitude treated as an escape to infinity.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;

pub type StepFn = Arc<dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;
pub type ClosedFlowFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type ClosedJacobianFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

fn check_finite(x: &[f64], time: f64) -> Result<()> {
    let magnitude = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if magnitude.is_nan() || magnitude > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { time, magnitude });
    }
    Ok(())
}

/// A diffeomorphism together with its conformal data.
#[derive(Clone)]
pub struct MapSystem {
    name: String,
    manifold: Manifold,
    forward: StepFn,
    inverse: Option<StepFn>,
    jacobian: Option<MatrixFn>,
    inverse_jacobian: Option<MatrixFn>,
    nominal_ratio: Option<f64>,
    omega: Form,
    lambda: Option<Form>,
    sample_bounds: Vec<(f64, f64)>,
}

impl MapSystem {
    pub fn new(
        name: impl Into<String>,
        manifold: Manifold,
        forward: impl Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
        omega: Form,
    ) -> Self {
        let bounds = vec![(0.0, 1.0); manifold.dim()];
        Self {
            name: name.into(),
            manifold,
            forward: Arc::new(forward),
            inverse: None,
            jacobian: None,
            inverse_jacobian: None,
            nominal_ratio: None,
            omega,
            lambda: None,
            sample_bounds: bounds,
        }
    }

    pub fn with_inverse(mut self, inv: impl Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static) -> Self {
        self.inverse = Some(Arc::new(inv));
        self
    }

    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_inverse_jacobian(mut self, j: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.inverse_jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_ratio(mut self, a: f64) -> Self {
        self.nominal_ratio = Some(a);
        self
    }

    pub fn with_lambda(mut self, lambda: Form) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_sample_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), self.manifold.dim());
        self.sample_bounds = bounds;
        self
    }

    /// Drop analytic Jacobians so that every derivative is a central difference.
    pub fn with_finite_difference_jacobians(mut self) -> Self {
        self.jacobian = None;
        self.inverse_jacobian = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn nominal_ratio(&self) -> Option<f64> {
        self.nominal_ratio
    }

    pub fn omega(&self) -> &Form {
        &self.omega
    }

    pub fn lambda(&self) -> Option<&Form> {
        self.lambda.as_ref()
    }

    pub fn sample_bounds(&self) -> &[(f64, f64)] {
        &self.sample_bounds
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn step_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.forward)(x, out)
    }

    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        (self.forward)(x, &mut out)?;
        Ok(out)
    }

    pub fn step_back(&self, x: &[f64]) -> Result<Vec<f64>> {
        let inv = self.inverse.as_ref().ok_or_else(|| Error::NotApplicable(format!("{} has no inverse", self.name)))?;
        let mut out = vec![0.0; x.len()];
        inv(x, &mut out)?;
        Ok(out)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => j(x),
            None => finite_difference_jacobian(|y| self.step(y), x, self.dim(), DEFAULT_STEP),
        }
    }

    /// The inverse map as a system of ratio `1/a`.
    pub fn inverse_system(&self) -> Result<MapSystem> {
        let inverse = self.inverse.clone().ok_or_else(|| Error::NotApplicable(format!("{} has no inverse", self.name)))?;
        Ok(MapSystem {
            name: format!("{}^-1", self.name),
            manifold: self.manifold.clone(),
            forward: inverse,
            inverse: Some(self.forward.clone()),
            jacobian: self.inverse_jacobian.clone(),
            inverse_jacobian: self.jacobian.clone(),
            nominal_ratio: self.nominal_ratio.map(|a| 1.0 / a),
            omega: self.omega.clone(),
            lambda: self.lambda.clone(),
            sample_bounds: self.sample_bounds.clone(),
        })
    }

    /// `fⁿ(x)` on the cover, normalizing after each step when `normalize` is set.
    pub fn iterate(&self, x: &[f64], n: usize, normalize: bool) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        let mut next = vec![0.0; x.len()];
        for k in 0..n {
            (self.forward)(&cur, &mut next)?;
            check_finite(&next, (k + 1) as f64)?;
            if normalize {
                next = self.manifold.normalize(&next)?;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn orbit(&self, x: &[f64], n: usize, with_tangent: bool) -> Result<TrajectorySample> {
        let mut points = vec![x.to_vec()];
        let mut tangents = with_tangent.then(|| vec![DMatrix::identity(self.dim(), self.dim())]);
        for k in 0..n {
            let cur = points.last().unwrap();
            if let Some(t) = tangents.as_mut() {
                let j = self.jacobian(cur)?;
                let prev = t.last().unwrap();
                t.push(j * prev);
            }
            let next = self.step(cur)?;
            check_finite(&next, (k + 1) as f64)?;
            points.push(next);
        }
        Ok(TrajectorySample { times: (0..=n).map(|k| k as f64).collect(), points, tangents })
    }
}

impl SmoothMap for MapSystem {
    fn dim_in(&self) -> usize {
        self.dim()
    }

    fn dim_out(&self) -> usize {
        self.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.step(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        MapSystem::jacobian(self, x)
    }
}

/// Hamiltonian part and constant fiber-scaling rate of a conformal
/// Hamiltonian field on `T*Tⁿ` in coordinates `(q, p)`.
#[derive(Clone)]
pub struct CotangentSplit {
    pub n: usize,
    pub hamiltonian_field: VectorFieldFn,
    /// `p ↦ e^{rate·t} p` is the exact flow of the scaling part.
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4,
    ConformalSplit,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "conformal_split" | "conformal-split" => Ok(Method::ConformalSplit),
            other => Err(Error::Usage(format!("unknown integrator {other}"))),
        }
    }
}

/// Step size and scheme for numerically integrated flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowSettings {
    pub dt: f64,
    pub method: Method,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, method: Method::Rk4 }
    }
}

/// A flow given by a vector field, a closed form, or both.
#[derive(Clone)]
pub struct FlowSystem {
    name: String,
    manifold: Manifold,
    vector_field: Option<VectorFieldFn>,
    field_jacobian: Option<MatrixFn>,
    closed_flow: Option<ClosedFlowFn>,
    closed_jacobian: Option<ClosedJacobianFn>,
    split: Option<CotangentSplit>,
    nominal_rate: Option<f64>,
    omega: Form,
    lambda: Option<Form>,
    sample_bounds: Vec<(f64, f64)>,
}

impl FlowSystem {
    pub fn new(name: impl Into<String>, manifold: Manifold, omega: Form) -> Self {
        let bounds = vec![(0.0, 1.0); manifold.dim()];
        Self {
            name: name.into(),
            manifold,
            vector_field: None,
            field_jacobian: None,
            closed_flow: None,
            closed_jacobian: None,
            split: None,
            nominal_rate: None,
            omega,
            lambda: None,
            sample_bounds: bounds,
        }
    }

    pub fn with_vector_field(mut self, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.vector_field = Some(Arc::new(f));
        self
    }

    pub fn with_field_jacobian(mut self, j: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.field_jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_closed_flow(mut self, f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.closed_flow = Some(Arc::new(f));
        self
    }

    pub fn with_closed_jacobian(mut self, j: impl Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.closed_jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_split(mut self, split: CotangentSplit) -> Self {
        self.split = Some(split);
        self
    }

    pub fn with_rate(mut self, alpha: f64) -> Self {
        self.nominal_rate = Some(alpha);
        self
    }

    pub fn with_lambda(mut self, lambda: Form) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_sample_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(bounds.len(), self.manifold.dim());
        self.sample_bounds = bounds;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn nominal_rate(&self) -> Option<f64> {
        self.nominal_rate
    }

    pub fn omega(&self) -> &Form {
        &self.omega
    }

    pub fn lambda(&self) -> Option<&Form> {
        self.lambda.as_ref()
    }

    pub fn sample_bounds(&self) -> &[(f64, f64)] {
        &self.sample_bounds
    }

    pub fn has_closed_flow(&self) -> bool {
        self.closed_flow.is_some()
    }

    pub fn vector_field(&self) -> Result<VectorFieldFn> {
        if let Some(v) = &self.vector_field {
            return Ok(v.clone());
        }
        Err(Error::NotApplicable(format!("{} has no vector field", self.name)))
    }

    pub fn field_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.vector_field()?)(x)
    }

    pub fn field_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(j) = &self.field_jacobian {
            return j(x);
        }
        let v = self.vector_field()?;
        finite_difference_jacobian(|y| v(y), x, self.dim(), DEFAULT_STEP)
    }

    pub fn closed_flow(&self, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        self.closed_flow.as_ref().map(|f| f(t, x))
    }

    /// Time-`t` flow: closed form when available, otherwise integrated.
    pub fn flow(&self, x: &[f64], t: f64, settings: FlowSettings) -> Result<Vec<f64>> {
        match &self.closed_flow {
            Some(f) => {
                let y = f(t, x);
                check_finite(&y, t)?;
                Ok(y)
            }
            None => integrate(self, x, t, settings.dt, settings.method),
        }
    }

    /// The time-`t` map as a [`MapSystem`] with ratio `e^{αt}`.
    pub fn time_map(&self, t: f64, settings: FlowSettings) -> MapSystem {
        let (fw, bw) = (self.clone(), self.clone());
        let mut map = MapSystem::new(
            format!("{}[t={t}]", self.name),
            self.manifold.clone(),
            move |x, out| {
                out.copy_from_slice(&fw.flow(x, t, settings)?);
                Ok(())
            },
            self.omega.clone(),
        )
        .with_inverse(move |x, out| {
            out.copy_from_slice(&bw.flow(x, -t, settings)?);
            Ok(())
        })
        .with_sample_bounds(self.sample_bounds.clone());
        if let Some(cj) = self.closed_jacobian.clone() {
            let cj2 = cj.clone();
            map = map.with_jacobian(move |x| Ok(cj(t, x))).with_inverse_jacobian(move |x| Ok(cj2(-t, x)));
        } else if self.closed_flow.is_none() {
            let (fj, bj) = (self.clone(), self.clone());
            map = map
                .with_jacobian(move |x| tangent_map_flow(&fj, x, t, settings.dt))
                .with_inverse_jacobian(move |x| tangent_map_flow(&bj, x, -t, settings.dt));
        }
        if let Some(alpha) = self.nominal_rate {
            map = map.with_ratio((alpha * t).exp());
        }
        if let Some(l) = &self.lambda {
            map = map.with_lambda(l.clone());
        }
        map
    }
}

/// Points (and optionally tangent maps) along a trajectory.
#[derive(Clone, Debug)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub tangents: Option<Vec<DMatrix<f64>>>,
}

fn rk4_step(field: &VectorFieldFn, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let k1 = field(x)?;
    let y: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k2 = field(&y)?;
    let y: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
    let k3 = field(&y)?;
    let y: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
    let k4 = field(&y)?;
    Ok((0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

fn scale_fiber(x: &mut [f64], n: usize, factor: f64) {
    for p in &mut x[n..2 * n] {
        *p *= factor;
    }
}

/// Strang splitting: half fiber scaling, implicit midpoint on the
/// Hamiltonian part, half fiber scaling.
fn split_step(split: &CotangentSplit, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let half = (0.5 * split.rate * dt).exp();
    let mut y0 = x.to_vec();
    scale_fiber(&mut y0, split.n, half);
    let mut y = y0.clone();
    let mut mid = vec![0.0; x.len()];
    for _ in 0..100 {
        for i in 0..x.len() {
            mid[i] = 0.5 * (y0[i] + y[i]);
        }
        let v = (split.hamiltonian_field)(&mid)?;
        let mut delta = 0.0f64;
        for i in 0..x.len() {
            let next = y0[i] + dt * v[i];
            delta = delta.max((next - y[i]).abs());
            y[i] = next;
        }
        if delta < 1e-15 * (1.0 + y.iter().fold(0.0f64, |m, c| m.max(c.abs()))) {
            break;
        }
    }
    scale_fiber(&mut y, split.n, half);
    Ok(y)
}

fn step_count(t: f64, dt: f64) -> Result<(usize, f64)> {
    if dt <= 0.0 || !dt.is_finite() || !t.is_finite() {
        return Err(Error::InvalidInput(format!("bad integration request t = {t}, dt = {dt}")));
    }
    let n = (t.abs() / dt - 1e-9).ceil().max(0.0) as usize;
    Ok((n, t.signum() * dt))
}

/// Integrate `sys` from `x0` for time `t` (either sign) with step `dt`;
/// the final step is shortened to land exactly on `t`.
pub fn integrate(sys: &FlowSystem, x0: &[f64], t: f64, dt: f64, method: Method) -> Result<Vec<f64>> {
    Ok(trajectory(sys, x0, t, dt, method)?.points.pop().unwrap())
}

pub fn trajectory(sys: &FlowSystem, x0: &[f64], t: f64, dt: f64, method: Method) -> Result<TrajectorySample> {
    let (n, h) = step_count(t, dt)?;
    let mut times = vec![0.0];
    let mut points = vec![x0.to_vec()];
    if n == 0 {
        return Ok(TrajectorySample { times, points, tangents: None });
    }
    let field = match method {
        Method::Rk4 => Some(sys.vector_field()?),
        Method::ConformalSplit => {
            if sys.split.is_none() {
                return Err(Error::NotApplicable(format!("{} has no cotangent split data", sys.name)));
            }
            None
        }
    };
    let mut x = x0.to_vec();
    let mut time = 0.0;
    for k in 0..n {
        let step = if k + 1 == n { t - time } else { h };
        x = match (&field, &sys.split) {
            (Some(f), _) => rk4_step(f, &x, step)?,
            (None, Some(split)) => split_step(split, &x, step)?,
            (None, None) => unreachable!(),
        };
        time = if k + 1 == n { t } else { time + h };
        check_finite(&x, time)?;
        times.push(time);
        points.push(x.clone());
    }
    Ok(TrajectorySample { times, points, tangents: None })
}

/// Variational equation `Φ' = DX(x(t)) Φ` integrated alongside the base point (RK4).
pub fn tangent_map_flow(sys: &FlowSystem, x0: &[f64], t: f64, dt: f64) -> Result<DMatrix<f64>> {
    let n = x0.len();
    let (steps, h) = step_count(t, dt)?;
    let mut x = x0.to_vec();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let field = sys.vector_field()?;
    let rhs = |x: &[f64], phi: &DMatrix<f64>| -> Result<(Vec<f64>, DMatrix<f64>)> { Ok((field(x)?, sys.field_jacobian(x)? * phi)) };
    let mut time = 0.0;
    for k in 0..steps {
        let s = if k + 1 == steps { t - time } else { h };
        let (k1x, k1p) = rhs(&x, &phi)?;
        let x2: Vec<f64> = x.iter().zip(&k1x).map(|(a, b)| a + 0.5 * s * b).collect();
        let (k2x, k2p) = rhs(&x2, &(&phi + &k1p * (0.5 * s)))?;
        let x3: Vec<f64> = x.iter().zip(&k2x).map(|(a, b)| a + 0.5 * s * b).collect();
        let (k3x, k3p) = rhs(&x3, &(&phi + &k2p * (0.5 * s)))?;
        let x4: Vec<f64> = x.iter().zip(&k3x).map(|(a, b)| a + s * b).collect();
        let (k4x, k4p) = rhs(&x4, &(&phi + &k3p * s))?;
        for i in 0..n {
            x[i] += s / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        }
        phi += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (s / 6.0);
        time = if k + 1 == steps { t } else { time + h };
        check_finite(&x, time)?;
    }
    Ok(phi)
}

/// `D(fⁿ)(x)` as the product of Jacobians along the orbit.
pub fn tangent_map(sys: &MapSystem, x0: &[f64], n: usize) -> Result<DMatrix<f64>> {
    let mut x = x0.to_vec();
    let mut acc = DMatrix::identity(sys.dim(), sys.dim());
    for k in 0..n {
        acc = sys.jacobian(&x)? * acc;
        x = sys.step(&x)?;
        check_finite(&x, (k + 1) as f64)?;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioEstimate {
    pub estimate: f64,
    pub max_residual: f64,
    /// Samples with a usable denominator.
    pub used: usize,
}

/// Median of `ω(f(x); Df u, Df v) / ω(x; u, v)` over random `(x, u, v)`,
/// plus the largest residual `|f*ω − estimate·ω|`.
pub fn conformality_ratio(sys: &MapSystem, samples: usize, seed: u64) -> Result<RatioEstimate> {
    let mut sampler = Sampler::new(seed);
    let dim = sys.dim();
    let inputs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let x = sampler.point_in(sys.sample_bounds());
            let u = sampler.normal_vector(dim);
            let v = sampler.normal_vector(dim);
            (x, u, v)
        })
        .collect();
    let omega = sys.omega();
    if omega.degree() != 2 {
        return Err(Error::InvalidInput("conformality ratio needs a 2-form".into()));
    }
    let pairs: Vec<(f64, f64)> = inputs
        .par_iter()
        .map(|(x, u, v)| {
            let y = sys.step(x)?;
            let j = sys.jacobian(x)?;
            let ju: Vec<f64> = (&j * nalgebra::DVector::from_column_slice(u)).iter().copied().collect();
            let jv: Vec<f64> = (&j * nalgebra::DVector::from_column_slice(v)).iter().copied().collect();
            Ok((omega.eval(&y, &[&ju, &jv])?, omega.eval(x, &[u, v])?))
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = pairs.iter().filter(|(_, d)| d.abs() > 1e-8).map(|(n, d)| n / d).collect();
    if ratios.is_empty() {
        return Err(Error::DegenerateSampling { samples });
    }
    let m = ratios.len();
    let estimate = crate::stats::median(&ratios);
    let max_residual = pairs.iter().map(|(n, d)| (n - estimate * d).abs()).fold(0.0, f64::max);
    Ok(RatioEstimate { estimate, max_residual, used: m })
}

/// `max |ω(f(x); Df u, Df v) − a·ω(x; u, v)|` over random `(x, u, v)`.
pub fn conformality_defect(sys: &MapSystem, a: f64, samples: usize, seed: u64) -> Result<f64> {
    let mut sampler = Sampler::new(seed);
    let dim = sys.dim();
    let inputs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> =
        (0..samples).map(|_| (sampler.point_in(sys.sample_bounds()), sampler.normal_vector(dim), sampler.normal_vector(dim))).collect();
    let omega = sys.omega();
    let defects: Vec<f64> = inputs
        .par_iter()
        .map(|(x, u, v)| {
            let y = sys.step(x)?;
            let j = sys.jacobian(x)?;
            let ju: Vec<f64> = (&j * nalgebra::DVector::from_column_slice(u)).iter().copied().collect();
            let jv: Vec<f64> = (&j * nalgebra::DVector::from_column_slice(v)).iter().copied().collect();
            Ok((omega.eval(&y, &[&ju, &jv])? - a * omega.eval(x, &[u, v])?).abs())
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn liouville_flow() -> FlowSystem {
        let omega = Form::coordinate(2, 0).wedge(&Form::coordinate(2, 1)).unwrap();
        FlowSystem::new("liouville", Manifold::cotangent_torus(1), omega).with_vector_field(|x| Ok(vec![0.0, -x[1]])).with_rate(-1.0)
    }

    /// Upper-triangular linear system ẋ = −βx + 2y, ẏ = (β−α)y.
    fn linear_flow(beta: f64, alpha: f64) -> FlowSystem {
        let omega = Form::coordinate(2, 0).wedge(&Form::coordinate(2, 1)).unwrap();
        FlowSystem::new("linear", Manifold::euclidean("R2", 2), omega)
            .with_vector_field(move |x| Ok(vec![-beta * x[0] + 2.0 * x[1], (beta - alpha) * x[1]]))
            .with_rate(-alpha)
            .with_sample_bounds(vec![(-1.0, 1.0); 2])
    }

    /// exp(M) by a long Taylor series with scaling and squaring.
    fn expm_taylor(m: &DMatrix<f64>) -> DMatrix<f64> {
        let s = 8;
        let scaled = m / 2f64.powi(s);
        let n = m.nrows();
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..40 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn liouville_flow_contracts_fiber() {
        let y = integrate(&liouville_flow(), &[0.3, 2.0], 1.0, DEFAULT_DT, Method::Rk4).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-14);
        assert!((y[1] - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let x = [0.3, 2.0];
        assert_eq!(integrate(&liouville_flow(), &x, 0.0, DEFAULT_DT, Method::Rk4).unwrap(), x.to_vec());
        let j = tangent_map_flow(&liouville_flow(), &x, 0.0, DEFAULT_DT).unwrap();
        assert_eq!(j, DMatrix::identity(2, 2));
    }

    #[test]
    fn linear_system_matches_matrix_exponential() {
        let (beta, alpha) = (1.0, 1.5);
        let m = DMatrix::from_row_slice(2, 2, &[-beta, 2.0, 0.0, beta - alpha]);
        let e = expm_taylor(&m);
        let y = integrate(&linear_flow(beta, alpha), &[1.0, 1.0], 1.0, DEFAULT_DT, Method::Rk4).unwrap();
        assert!((y[0] - (e[(0, 0)] + e[(0, 1)])).abs() < 1e-8);
        assert!((y[1] - (e[(1, 0)] + e[(1, 1)])).abs() < 1e-8);
    }

    #[test]
    fn liouville_tangent_map() {
        let j = tangent_map_flow(&liouville_flow(), &[0.3, 2.0], 1.0, DEFAULT_DT).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, (-1.0f64).exp()]);
        assert!((j - expected).abs().max() < 1e-9);
    }

    #[test]
    fn rk4_has_order_four() {
        let (beta, alpha) = (1.0, 1.5);
        let m = DMatrix::from_row_slice(2, 2, &[-beta, 2.0, 0.0, beta - alpha]);
        let e = expm_taylor(&(m * 2.0));
        let exact = [e[(0, 0)] + e[(0, 1)], e[(1, 1)]];
        let sys = linear_flow(beta, alpha);
        let mut pts = Vec::new();
        for k in 0..5 {
            let dt = 0.4 / 2f64.powi(k);
            let y = integrate(&sys, &[1.0, 1.0], 2.0, dt, Method::Rk4).unwrap();
            let err = ((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt();
            pts.push((dt.ln(), err.ln()));
        }
        let slope = crate::stats::least_squares_slope(&pts);
        assert!((slope - 4.0).abs() < 0.5, "slope {slope}");
    }

    #[test]
    fn conformal_split_preserves_scaling_exactly_for_pure_liouville() {
        let sys =
            liouville_flow().with_split(CotangentSplit { n: 1, hamiltonian_field: Arc::new(|_x: &[f64]| Ok(vec![0.0, 0.0])), rate: -1.0 });
        let y = integrate(&sys, &[0.3, 2.0], 1.0, 0.1, Method::ConformalSplit).unwrap();
        assert!((y[1] - 2.0 * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn divergence_carries_escape_time() {
        let omega = Form::coordinate(2, 0).wedge(&Form::coordinate(2, 1)).unwrap();
        let sys = FlowSystem::new("blowup", Manifold::euclidean("R2", 2), omega).with_vector_field(|x| Ok(vec![x[0] * x[0], 0.0]));
        match integrate(&sys, &[1.0, 0.0], 2.0, 1e-3, Method::Rk4) {
            Err(Error::Divergence { time, .. }) => assert!(time > 0.9 && time < 1.01, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn area_ratio_of_linear_flow() {
        let map = linear_flow(1.0, 1.5).time_map(1.0, FlowSettings::default());
        let r = conformality_ratio(&map, 200, 5).unwrap();
        assert!((r.estimate - (-1.5f64).exp()).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn degenerate_sampling_is_reported() {
        let map = MapSystem::new(
            "id",
            Manifold::torus("T2", 2),
            |x, out| {
                out.copy_from_slice(x);
                Ok(())
            },
            Form::zero(2, 2),
        );
        assert!(matches!(conformality_ratio(&map, 10, 1), Err(Error::DegenerateSampling { .. })));
    }

    #[test]
    fn vector_field_matches_closed_flow_derivative() {
        let sys = liouville_flow().with_closed_flow(|t, x| vec![x[0], (-t).exp() * x[1]]);
        let x = [0.4, 1.7];
        let h = 1e-6;
        let a = sys.closed_flow(h, &x).unwrap();
        let b = sys.closed_flow(-h, &x).unwrap();
        let v = sys.field_at(&x).unwrap();
        for i in 0..2 {
            assert!(((a[i] - b[i]) / (2.0 * h) - v[i]).abs() < 1e-6);
        }
    }
}
