//! Smooth maps between charts with analytic or finite-difference Jacobians.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::form::DEFAULT_STEP;

pub type PointFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;

pub trait SmoothMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        finite_difference_jacobian(|y| self.apply(y), x, self.dim_out(), DEFAULT_STEP)
    }
}

/// Central-difference Jacobian of `f` at `x`.
pub fn finite_difference_jacobian(f: impl Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64], dim_out: usize, h: f64) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(dim_out, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let plus = f(&xp).map_err(|e| jacobian_error(x, e))?;
        xp[j] = x[j] - h;
        let minus = f(&xp).map_err(|e| jacobian_error(x, e))?;
        xp[j] = x[j];
        for i in 0..dim_out {
            let d = (plus[i] - minus[i]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::Jacobian { at: x.to_vec(), reason: format!("non-finite entry ({i}, {j})") });
            }
            jac[(i, j)] = d;
        }
    }
    Ok(jac)
}

fn jacobian_error(x: &[f64], e: Error) -> Error {
    match e {
        Error::Jacobian { .. } => e,
        other => Error::Jacobian { at: x.to_vec(), reason: other.to_string() },
    }
}

/// Closure-backed map with an optional analytic Jacobian.
#[derive(Clone)]
pub struct FnMap {
    dim_in: usize,
    dim_out: usize,
    f: PointFn,
    jacobian: Option<JacobianFn>,
    step: f64,
}

impl FnMap {
    pub fn new(dim_in: usize, dim_out: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        Self { dim_in, dim_out, f: Arc::new(f), jacobian: None, step: DEFAULT_STEP }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.step = h;
        self
    }

    /// Linear map `x ↦ M x`.
    pub fn linear(m: DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let mj = m.clone();
        Self::new(c, r, move |x| Ok((&m * nalgebra::DVector::from_column_slice(x)).iter().copied().collect()))
            .with_jacobian(move |_| Ok(mj.clone()))
    }
}

impl SmoothMap for FnMap {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        (self.f)(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => j(x),
            None => finite_difference_jacobian(|y| (self.f)(y), x, self.dim_out, self.step),
        }
    }
}

/// `g ∘ f`.
pub struct Composition {
    pub first: Arc<dyn SmoothMap>,
    pub second: Arc<dyn SmoothMap>,
}

impl SmoothMap for Composition {
    fn dim_in(&self) -> usize {
        self.first.dim_in()
    }

    fn dim_out(&self) -> usize {
        self.second.dim_out()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.second.apply(&self.first.apply(x)?)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.first.apply(x)?;
        Ok(self.second.jacobian(&y)? * self.first.jacobian(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_jacobian_of_quadratic() {
        let f = FnMap::new(2, 2, |x| Ok(vec![x[0] * x[1], x[0] * x[0]]));
        let j = f.jacobian(&[2.0, 3.0]).unwrap();
        assert!((j[(0, 0)] - 3.0).abs() < 1e-9);
        assert!((j[(0, 1)] - 2.0).abs() < 1e-9);
        assert!((j[(1, 0)] - 4.0).abs() < 1e-9);
        assert!(j[(1, 1)].abs() < 1e-9);
    }

    #[test]
    fn failing_evaluation_reports_location() {
        let f = FnMap::new(1, 1, |x| if x[0] > 0.0 { Err(Error::Domain { point: x.to_vec() }) } else { Ok(vec![x[0]]) });
        match f.jacobian(&[0.0]) {
            Err(Error::Jacobian { at, .. }) => assert_eq!(at, vec![0.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn composition_chain_rule() {
        let f: Arc<dyn SmoothMap> = Arc::new(FnMap::new(1, 2, |x| Ok(vec![x[0].cos(), x[0].sin()])));
        let g: Arc<dyn SmoothMap> = Arc::new(FnMap::new(2, 1, |x| Ok(vec![x[0] * x[1]])));
        let c = Composition { first: f, second: g };
        // d/dt (cos t sin t) = cos 2t
        let j = c.jacobian(&[0.4]).unwrap();
        assert!((j[(0, 0)] - (0.8f64).cos()).abs() < 1e-9);
    }
}
