use std::sync::Arc;

use nalgebra::DMatrix;

use super::cotangent_forms;
use crate::dynamics::{CotangentSplit, FlowSystem};
use crate::geometry::{finite_difference_jacobian, Form, Manifold, DEFAULT_STEP};

pub type BaseEval = Arc<dyn Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>) + Send + Sync>;

/// A vector field `X` on `Tⁿ` with its derivative `DX`.
#[derive(Clone)]
pub struct BaseField {
    pub n: usize,
    eval: BaseEval,
}

impl BaseField {
    pub fn new(n: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        let f = Arc::new(f);
        Self {
            n,
            eval: Arc::new(move |q| {
                let g = f.clone();
                let dx = finite_difference_jacobian(|y| Ok(g(y)), q, n, DEFAULT_STEP).expect("base field is total");
                (f(q), dx)
            }),
        }
    }

    pub fn with_derivative(n: usize, f: impl Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>) + Send + Sync + 'static) -> Self {
        Self { n, eval: Arc::new(f) }
    }

    pub fn zero(n: usize) -> Self {
        Self::with_derivative(n, move |_| (vec![0.0; n], DMatrix::zeros(n, n)))
    }

    pub fn constant(v: Vec<f64>) -> Self {
        let n = v.len();
        Self::with_derivative(n, move |_| (v.clone(), DMatrix::zeros(n, n)))
    }

    pub fn eval(&self, q: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        (self.eval)(q)
    }
}

/// Conformal lift of `X` to `T*Tⁿ` with discount `α`: conformality rate `−α`.
#[derive(Clone)]
pub struct ManeLift {
    pub n: usize,
    pub alpha: f64,
    pub base: BaseField,
    pub hamiltonian: Form,
    pub flow: FlowSystem,
}

impl ManeLift {
    /// `H(q, p) = ½‖p + X(q)‖² − ½‖X(q)‖²` on the flat torus.
    pub fn hamiltonian_at(&self, x: &[f64]) -> f64 {
        hamiltonian(&self.base, x)
    }
}

fn hamiltonian(base: &BaseField, x: &[f64]) -> f64 {
    let n = base.n;
    let (v, _) = base.eval(&x[..n]);
    (0..n).map(|i| 0.5 * x[n + i] * x[n + i] + x[n + i] * v[i]).sum()
}

/// `(H_p, −H_q)` for `H = ½|p|² + p·X(q)`.
fn hamiltonian_field(base: &BaseField, x: &[f64]) -> Vec<f64> {
    let n = base.n;
    let (v, dv) = base.eval(&x[..n]);
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = x[n + i] + v[i];
        out[n + i] = -(0..n).map(|k| dv[(k, i)] * x[n + k]).sum::<f64>();
    }
    out
}

pub fn make_mane_lift(base: BaseField, alpha: f64) -> ManeLift {
    let n = base.n;
    let (omega, lambda) = cotangent_forms(n);
    let (b1, b2, b3) = (base.clone(), base.clone(), base.clone());
    let mut bounds = vec![(0.0, 1.0); n];
    bounds.extend(std::iter::repeat_n((-1.0, 1.0), n));
    let flow = FlowSystem::new("mane", Manifold::cotangent_torus(n), omega)
        .with_vector_field(move |x| {
            let mut v = hamiltonian_field(&b1, x);
            for i in 0..n {
                v[n + i] -= alpha * x[n + i];
            }
            Ok(v)
        })
        .with_split(CotangentSplit { n, hamiltonian_field: Arc::new(move |x| Ok(hamiltonian_field(&b2, x))), rate: -alpha })
        .with_rate(-alpha)
        .with_lambda(lambda)
        .with_sample_bounds(bounds);
    let hamiltonian = Form::function(2 * n, move |x| hamiltonian(&b3, x));
    ManeLift { n, alpha, base, hamiltonian, flow }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{conformality_ratio, integrate, trajectory, FlowSettings, Method, DEFAULT_DT};
    use crate::sampling::Sampler;

    fn wavy() -> BaseField {
        BaseField::new(1, |q| vec![0.1 * (2.0 * std::f64::consts::PI * q[0]).sin() + 0.5])
    }

    #[test]
    fn geodesic_case_fixes_zero_section() {
        let lift = make_mane_lift(BaseField::zero(2), 0.0);
        let v = lift.flow.field_at(&[0.3, 0.6, 0.0, 0.0]).unwrap();
        assert!(v.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn constant_field_drifts_along_zero_section() {
        let lift = make_mane_lift(BaseField::constant(vec![1.0]), 0.7);
        let y = integrate(&lift.flow, &[0.0, 0.0], 2.3, DEFAULT_DT, Method::Rk4).unwrap();
        assert!(y[1].abs() < 1e-12);
        assert!((y[0].rem_euclid(1.0) - 0.3).abs() < 1e-8);
    }

    #[test]
    fn zero_section_is_invariant_and_carries_x() {
        let lift = make_mane_lift(wavy(), 1.5);
        let mut s = Sampler::new(41);
        for _ in 0..20 {
            let q = s.uniform(0.0, 1.0);
            let v = lift.flow.field_at(&[q, 0.0]).unwrap();
            assert!(v[1].abs() < 1e-10);
            assert!((v[0] - (0.1 * (2.0 * std::f64::consts::PI * q).sin() + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn discounted_ratio() {
        let lift = make_mane_lift(BaseField::zero(1), 1.5);
        let map = lift.flow.time_map(1.0, FlowSettings::default());
        let r = conformality_ratio(&map, 200, 42).unwrap();
        assert!((r.estimate - (-1.5f64).exp()).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn split_integrator_agrees_with_rk4() {
        let lift = make_mane_lift(wavy(), 1.5);
        let x = [0.2, 0.8];
        let a = integrate(&lift.flow, &x, 1.0, 1e-3, Method::Rk4).unwrap();
        let b = integrate(&lift.flow, &x, 1.0, 1e-3, Method::ConformalSplit).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-5 && (a[1] - b[1]).abs() < 1e-5, "{a:?} {b:?}");
    }

    #[test]
    fn discounted_orbits_stay_bounded() {
        let lift = make_mane_lift(wavy(), 1.5);
        let mut s = Sampler::new(43);
        for _ in 0..10 {
            let x = [s.uniform(0.0, 1.0), s.uniform(-1.0, 1.0)];
            let tr = trajectory(&lift.flow, &x, 20.0, 1e-2, Method::Rk4).unwrap();
            assert!(tr.points.iter().all(|p| p[1].abs() <= 1.0 + 1e-9));
        }
    }
}
