use nalgebra::DMatrix;

use super::{lambda_minus, lambda_plus, CAT};
use crate::dynamics::FlowSystem;
use crate::geometry::{Form, Gluing, Manifold, Periodic, SuspensionGluing};

/// Suspension of the cat map with the fiber coordinate `s`:
/// coordinates `(x, y, z, s)` on the cover of `N × ℝ`.
#[derive(Clone)]
pub struct SuspensionExample {
    pub manifold: Manifold,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// Covectors on `(x, y)`; `A*α± = λ± α±`.
    pub alpha_minus: [f64; 2],
    pub alpha_plus: [f64; 2],
    pub beta_minus: Form,
    pub beta_plus: Form,
    /// `Λ = β₋ + s β₊`.
    pub big_lambda: Form,
    /// `Ω = dΛ` written out in closed form.
    pub big_omega: Form,
    pub gluing: SuspensionGluing,
    pub flow: FlowSystem,
}

impl SuspensionExample {
    /// Coefficient of `dx∧dy∧dz∧ds` in `Ω∧Ω`, from the closed form
    /// `−2 ln λ₋ · (α₋∧α₊)`.
    pub fn omega_squared_coefficient(&self) -> f64 {
        let det = self.alpha_minus[0] * self.alpha_plus[1] - self.alpha_minus[1] * self.alpha_plus[0];
        -2.0 * self.lambda_minus.ln() * det
    }

    /// `ψ_t` in closed form.
    pub fn psi(&self, t: f64, x: &[f64]) -> Vec<f64> {
        vec![x[0], x[1], x[2] + t, self.lambda_minus.powf(2.0 * t) * x[3]]
    }

    /// The attractor `N × {0}` as a predicate on cover points.
    pub fn on_attractor(x: &[f64]) -> bool {
        x[3] == 0.0
    }
}

fn beta(lam: f64, alpha: [f64; 2]) -> Form {
    Form::one_form(4, move |x| {
        let w = lam.powf(x[2]);
        vec![w * alpha[0], w * alpha[1], 0.0, 0.0]
    })
}

pub fn make_suspension_example() -> SuspensionExample {
    let (lm, lp) = (lambda_minus(), lambda_plus());
    let p = super::golden_slope();
    // columns v₊ = (1, p), v₋ = (1, −1/p); α± are the rows of [v₊ v₋]⁻¹
    let basis = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, p, -1.0 / p]);
    let inv = basis.try_inverse().expect("eigenvectors are independent");
    let alpha_plus = [inv[(0, 0)], inv[(0, 1)]];
    let alpha_minus = [inv[(1, 0)], inv[(1, 1)]];

    let beta_minus = beta(lm, alpha_minus);
    let beta_plus = beta(lp, alpha_plus);
    let big_lambda = Form::one_form(4, move |x| {
        let (wm, wp) = (lm.powf(x[2]), lp.powf(x[2]));
        let s = x[3];
        vec![wm * alpha_minus[0] + s * wp * alpha_plus[0], wm * alpha_minus[1] + s * wp * alpha_plus[1], 0.0, 0.0]
    });
    // Ω = dz∧(ln λ₋ β₋ + s ln λ₊ β₊) + ds∧β₊ in the basis
    // (xy, xz, xs, yz, ys, zs); dz∧dx = −dx∧dz etc.
    let big_omega = Form::from_coefficients(4, 2, move |x| {
        let (wm, wp) = (lm.powf(x[2]), lp.powf(x[2]));
        let s = x[3];
        let c = [
            lm.ln() * wm * alpha_minus[0] + s * lp.ln() * wp * alpha_plus[0],
            lm.ln() * wm * alpha_minus[1] + s * lp.ln() * wp * alpha_plus[1],
        ];
        let b = [wp * alpha_plus[0], wp * alpha_plus[1]];
        Ok(vec![0.0, -c[0], -b[0], -c[1], -b[1], 0.0])
    });

    let gluing = SuspensionGluing::new([0, 1], 2, CAT).expect("cat matrix is unimodular");
    let manifold = Manifold::with_periodic("N x R", vec![Some(Periodic::UNIT), Some(Periodic::UNIT), None, None])
        .with_gluing(Gluing::Suspension(gluing.clone()));

    let two_ln = 2.0 * lm.ln();
    let flow = FlowSystem::new("suspension", manifold.clone(), big_omega.clone())
        .with_vector_field(move |x| Ok(vec![0.0, 0.0, 1.0, two_ln * x[3]]))
        .with_field_jacobian(move |_| {
            let mut j = DMatrix::zeros(4, 4);
            j[(3, 3)] = two_ln;
            Ok(j)
        })
        .with_closed_flow(move |t, x| vec![x[0], x[1], x[2] + t, lm.powf(2.0 * t) * x[3]])
        .with_closed_jacobian(move |t, _| {
            let mut j = DMatrix::identity(4, 4);
            j[(3, 3)] = lm.powf(2.0 * t);
            j
        })
        .with_rate(lm.ln())
        .with_lambda(big_lambda.clone())
        .with_sample_bounds(vec![(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 1.0)]);

    SuspensionExample {
        manifold,
        lambda_minus: lm,
        lambda_plus: lp,
        alpha_minus,
        alpha_plus,
        beta_minus,
        beta_plus,
        big_lambda,
        big_omega,
        gluing,
        flow,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::{conformality_ratio, FlowSettings};
    use crate::geometry::{FnMap, SmoothMap};
    use crate::sampling::Sampler;

    fn random_input(s: &mut Sampler) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = s.point_in(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 1.0)]);
        (x, s.normal_vector(4), s.normal_vector(4))
    }

    #[test]
    fn alphas_are_eigen_covectors() {
        let ex = make_suspension_example();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        for (alpha, lam) in [(ex.alpha_minus, ex.lambda_minus), (ex.alpha_plus, ex.lambda_plus)] {
            let row = DMatrix::from_row_slice(1, 2, &alpha);
            let pulled = &row * &a;
            assert!((pulled - row * lam).abs().max() < 1e-12);
        }
    }

    #[test]
    fn s_coordinate_decays() {
        let ex = make_suspension_example();
        let y = ex.psi(1.0, &[0.1, 0.2, 0.3, 1.0]);
        assert!((y[3] - 0.1458980338).abs() < 1e-10);
    }

    #[test]
    fn flow_property() {
        let ex = make_suspension_example();
        let x = [0.1, 0.2, 0.3, 0.7];
        let a = ex.psi(0.4, &ex.psi(1.1, &x));
        let b = ex.psi(1.5, &x);
        for i in 0..4 {
            assert!((a[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn d_lambda_matches_closed_omega() {
        let ex = make_suspension_example();
        let d = ex.big_lambda.d();
        let mut s = Sampler::new(11);
        for _ in 0..50 {
            let (x, u, v) = random_input(&mut s);
            let a = d.eval(&x, &[&u, &v]).unwrap();
            let b = ex.big_omega.eval(&x, &[&u, &v]).unwrap();
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn d_beta_identity() {
        let ex = make_suspension_example();
        let dz = Form::coordinate(4, 2);
        let mut s = Sampler::new(12);
        for (b, lam) in [(&ex.beta_minus, ex.lambda_minus), (&ex.beta_plus, ex.lambda_plus)] {
            let lhs = b.d();
            let rhs = dz.wedge(b).unwrap().scale(lam.ln());
            for _ in 0..100 {
                let (x, u, v) = random_input(&mut s);
                let l = lhs.eval(&x, &[&u, &v]).unwrap();
                let r = rhs.eval(&x, &[&u, &v]).unwrap();
                assert!((l - r).abs() <= 1e-5 * r.abs().max(1e-3), "{l} vs {r}");
            }
        }
    }

    #[test]
    fn betas_are_gluing_invariant() {
        let ex = make_suspension_example();
        let g = ex.gluing.clone();
        let lin = g.linear_part(4);
        let gmap: Arc<dyn SmoothMap> = Arc::new(FnMap::new(4, 4, move |x| Ok(g.apply(x))).with_jacobian(move |_| Ok(lin.clone())));
        let mut s = Sampler::new(13);
        for form in [&ex.beta_minus, &ex.beta_plus, &ex.big_lambda] {
            let pulled = form.pullback(gmap.clone()).unwrap();
            for _ in 0..100 {
                let x = s.point_in(&[(0.0, 1.0), (0.0, 1.0), (1.0, 2.0), (-1.0, 1.0)]);
                let u = s.normal_vector(4);
                let a = pulled.eval(&x, &[&u]).unwrap();
                let b = form.eval(&x, &[&u]).unwrap();
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn omega_wedge_omega_coefficient() {
        let ex = make_suspension_example();
        let vol = ex.big_omega.wedge(&ex.big_omega).unwrap();
        let mut s = Sampler::new(14);
        let x = s.point_in(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (-1.0, 1.0)]);
        let c = vol.coefficients(&x).unwrap()[0];
        assert!((c - ex.omega_squared_coefficient()).abs() < 1e-12);
        assert!(c.abs() > 1e-8);
    }

    #[test]
    fn time_one_ratio() {
        let ex = make_suspension_example();
        let map = ex.flow.time_map(1.0, FlowSettings::default()).with_finite_difference_jacobians();
        let r = conformality_ratio(&map, 1000, 15).unwrap();
        assert!((r.estimate - ex.lambda_minus).abs() < 1e-6, "{r:?}");
        assert!(r.max_residual < 1e-6);
    }
}
