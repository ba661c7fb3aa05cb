use std::sync::Arc;

use nalgebra::DMatrix;

use super::{golden_slope, lambda_minus, CAT};
use crate::dynamics::MapSystem;
use crate::geometry::{FnMap, Form, Manifold, Periodic, SmoothMap};

/// The 6-manifold `M ⊂ T⁴ × ℝ⁴` cut out by `r₂ = p r₁`, `r₄ = p r₃`, in the
/// chart `(θ₁, θ₂, θ₃, θ₄, r₁, r₃)`.
#[derive(Clone)]
pub struct Torus6Example {
    pub p: f64,
    pub lambda: f64,
    /// Forms on the ambient `T⁴ × ℝ⁴` with coordinates `(θ, r)`.
    pub ambient_omega1: Form,
    pub ambient_omega2: Form,
    /// Their pullbacks to the chart.
    pub omega1: Form,
    pub omega2: Form,
    pub omega: Form,
    pub map: MapSystem,
}

impl Torus6Example {
    /// Chart point to ambient point.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        embed(self.p, x)
    }

    pub fn embedding(&self) -> Arc<dyn SmoothMap> {
        embedding(self.p)
    }

    /// Whether an ambient point satisfies the defining equations of `M`.
    pub fn on_manifold(&self, y: &[f64], tol: f64) -> bool {
        (y[5] - self.p * y[4]).abs() <= tol && (y[7] - self.p * y[6]).abs() <= tol
    }
}

fn embed(p: f64, x: &[f64]) -> Vec<f64> {
    vec![x[0], x[1], x[2], x[3], x[4], p * x[4], x[5], p * x[5]]
}

fn embedding(p: f64) -> Arc<dyn SmoothMap> {
    let mut j = DMatrix::zeros(8, 6);
    for i in 0..5 {
        j[(i, i)] = 1.0;
    }
    j[(5, 4)] = p;
    j[(6, 5)] = 1.0;
    j[(7, 5)] = p;
    Arc::new(FnMap::new(6, 8, move |x| Ok(embed(p, x))).with_jacobian(move |_| Ok(j.clone())))
}

/// Freeze a constant form into explicit coefficients.
fn frozen(form: &Form, at: &[f64]) -> Form {
    let c = form.coefficients(at).expect("constant form evaluates everywhere");
    Form::constant(form.dim(), form.degree(), c)
}

fn cat_blocks(m: [[i64; 2]; 2], x: &[f64], out: &mut [f64]) {
    for b in [0, 2] {
        let (u, v) = (x[b], x[b + 1]);
        out[b] = (m[0][0] as f64 * u + m[0][1] as f64 * v).rem_euclid(1.0);
        out[b + 1] = (m[1][0] as f64 * u + m[1][1] as f64 * v).rem_euclid(1.0);
    }
}

fn block_jacobian(m: [[f64; 2]; 2], scale: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, 6);
    for b in [0, 2] {
        for r in 0..2 {
            for c in 0..2 {
                j[(b + r, b + c)] = m[r][c];
            }
        }
    }
    j[(4, 4)] = scale;
    j[(5, 5)] = scale;
    j
}

pub fn make_torus6_example() -> Torus6Example {
    let p = golden_slope();
    let lam = lambda_minus();
    let d = |c: &[(usize, f64)]| {
        let mut v = vec![0.0; 8];
        for &(i, x) in c {
            v[i] = x;
        }
        Form::covector(v)
    };
    let ambient_omega1 = d(&[(1, 1.0), (0, -p)]).wedge(&d(&[(3, 1.0), (2, -p)])).expect("same chart");
    let w1 = d(&[(1, 1.0), (0, 1.0 / p)]).wedge(&d(&[(5, 1.0), (4, 1.0 / p)])).expect("same chart");
    let w2 = d(&[(3, 1.0), (2, 1.0 / p)]).wedge(&d(&[(7, 1.0), (6, 1.0 / p)])).expect("same chart");
    let ambient_omega2 = w1.add(&w2).expect("same degree").scale(0.2);

    let origin = [0.0; 6];
    let omega1 = frozen(&ambient_omega1.pullback(embedding(p)).expect("dimensions match"), &origin);
    let omega2 = frozen(&ambient_omega2.pullback(embedding(p)).expect("dimensions match"), &origin);
    let omega = omega1.add(&omega2).expect("same degree");

    let mut periodic = vec![Some(Periodic::UNIT); 4];
    periodic.extend([None, None]);
    let manifold = Manifold::with_periodic("M6", periodic);
    let l3 = lam.powi(3);
    let inv_cat = [[1, -1], [-1, 2]];
    let map = MapSystem::new(
        "torus6",
        manifold,
        move |x, out| {
            cat_blocks(CAT, x, out);
            out[4] = l3 * x[4];
            out[5] = l3 * x[5];
            Ok(())
        },
        omega.clone(),
    )
    .with_inverse(move |x, out| {
        cat_blocks(inv_cat, x, out);
        out[4] = x[4] / l3;
        out[5] = x[5] / l3;
        Ok(())
    })
    .with_jacobian(move |_| Ok(block_jacobian([[2.0, 1.0], [1.0, 1.0]], l3)))
    .with_inverse_jacobian(move |_| Ok(block_jacobian([[1.0, -1.0], [-1.0, 2.0]], 1.0 / l3)))
    .with_ratio(lam * lam)
    .with_sample_bounds(vec![(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]);

    Torus6Example { p, lambda: lam, ambient_omega1, ambient_omega2, omega1, omega2, omega, map }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::conformality_ratio;
    use crate::sampling::Sampler;

    #[test]
    fn ratio_is_lambda_squared() {
        let ex = make_torus6_example();
        let r = conformality_ratio(&ex.map, 2000, 21).unwrap();
        assert!((r.estimate - 0.1458980338).abs() < 1e-9, "{r:?}");
        assert!(r.max_residual < 1e-10);
    }

    #[test]
    fn componentwise_pullbacks() {
        let ex = make_torus6_example();
        let f: Arc<dyn SmoothMap> = Arc::new(ex.map.clone());
        let mut s = Sampler::new(22);
        for form in [&ex.omega1, &ex.omega2] {
            let pulled = form.pullback(f.clone()).unwrap();
            for _ in 0..200 {
                let x = s.point_in(ex.map.sample_bounds());
                let (u, v) = (s.normal_vector(6), s.normal_vector(6));
                let a = pulled.eval(&x, &[&u, &v]).unwrap();
                let b = form.eval(&x, &[&u, &v]).unwrap();
                assert!((a - ex.lambda * ex.lambda * b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn map_preserves_the_submanifold() {
        let ex = make_torus6_example();
        let x = [0.1, 0.2, 0.3, 0.4, 0.7, -0.2];
        let y = ex.map.step(&x).unwrap();
        assert!(ex.on_manifold(&ex.embed(&y), 0.0));
    }

    #[test]
    fn omega_is_nondegenerate() {
        let ex = make_torus6_example();
        let vol = ex.omega.wedge(&ex.omega).unwrap().wedge(&ex.omega).unwrap();
        let c = vol.coefficients(&[0.0; 6]).unwrap()[0];
        assert!(c.abs() > 1e-3, "{c}");
    }

    #[test]
    fn inverse_roundtrip() {
        let ex = make_torus6_example();
        let mut s = Sampler::new(23);
        for _ in 0..100 {
            let x = s.point_in(ex.map.sample_bounds());
            let y = ex.map.step_back(&ex.map.step(&x).unwrap()).unwrap();
            assert!(ex.map.manifold().chart_distance(&x, &y) < 1e-9);
        }
    }
}
