use std::sync::Arc;

use nalgebra::DMatrix;

use super::cotangent_forms;
use crate::dynamics::{trajectory, FlowSystem, Method};
use crate::error::{Error, Result};
use crate::geometry::{Manifold, Periodic};

/// `6t⁵ − 15t⁴ + 10t³` clamped to `[0, 1]`; C² at both ends.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn smoothstep_prime(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

fn smoothstep_second(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeCalvezParams {
    pub beta: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for LeCalvezParams {
    fn default() -> Self {
        Self { beta: 1.0, alpha: 1.5, a: 2.0, b: 3.0, c: 4.0, d: 5.0 }
    }
}

impl LeCalvezParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        let checks = [
            (p.beta > 0.0, "beta > 0"),
            (p.alpha > p.beta, "beta < alpha"),
            (p.alpha < 2.0 * p.beta, "alpha < 2 beta"),
            (p.a > 0.0, "0 < A"),
            (p.a < p.b, "A < B"),
            (p.b < p.c, "B < C"),
            (p.c < p.d, "C < D"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!("violated {what}")));
            }
        }
        Ok(())
    }
}

/// Profiles and Hamiltonian `K` on the annulus `[−D, D) × ℝ`.
#[derive(Clone, Copy, Debug)]
pub struct Profiles {
    pub params: LeCalvezParams,
}

impl Profiles {
    fn reduce(&self, x: f64) -> f64 {
        Periodic { lower: -self.params.d, period: 2.0 * self.params.d }.reduce(x)
    }

    /// `V` with values in `[−1, 0]`, `−1` on `[−A, A]`, `0` off `[−B, B]`.
    pub fn v(&self, x: f64) -> (f64, f64) {
        let LeCalvezParams { a, b, .. } = self.params;
        let t = (x.abs() - a) / (b - a);
        (-1.0 + smoothstep(t), x.signum() * smoothstep_prime(t) / (b - a))
    }

    /// Cutoff `η`, `1` on `[−B, B]`, `0` off `[−C, C]`.
    pub fn eta(&self, x: f64) -> (f64, f64) {
        let LeCalvezParams { b, c, .. } = self.params;
        let t = (x.abs() - b) / (c - b);
        (1.0 - smoothstep(t), -x.signum() * smoothstep_prime(t) / (c - b))
    }

    /// Circle field `X̄`: `−βx` up to `(C+D)/2`, then blended into `β(x ∓ D)`.
    pub fn xbar(&self, x: f64) -> (f64, f64) {
        let LeCalvezParams { beta, c, d, .. } = self.params;
        let x1 = 0.5 * (c + d);
        let x2 = d - 0.25 * (d - c);
        let s = x.signum();
        let t = (x.abs() - x1) / (x2 - x1);
        let w = smoothstep(t);
        let dw = s * smoothstep_prime(t) / (x2 - x1);
        let inner = -beta * x;
        let outer = beta * (x - s * d);
        ((1.0 - w) * inner + w * outer, (1.0 - w) * (-beta) + w * beta + dw * (outer - inner))
    }

    /// Second derivatives `(V'', η'', X̄'')`.
    fn second_derivatives(&self, x: f64) -> (f64, f64, f64) {
        let LeCalvezParams { beta, a, b, c, d, .. } = self.params;
        let ddv = smoothstep_second((x.abs() - a) / (b - a)) / ((b - a) * (b - a));
        let dde = -smoothstep_second((x.abs() - b) / (c - b)) / ((c - b) * (c - b));
        let (x1, x2) = (0.5 * (c + d), d - 0.25 * (d - c));
        let s = x.signum();
        let t = (x.abs() - x1) / (x2 - x1);
        let dw = s * smoothstep_prime(t) / (x2 - x1);
        let ddw = smoothstep_second(t) / ((x2 - x1) * (x2 - x1));
        let gap = beta * (x - s * d) + beta * x;
        (ddv, dde, 4.0 * beta * dw + ddw * gap)
    }

    /// `(∂²K/∂x², ∂²K/∂x∂y, ∂²K/∂y²)`.
    pub fn hessian_k(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let x = self.reduce(x);
        let beta = self.params.beta;
        let (e, de) = self.eta(x);
        let (xb, dxb) = self.xbar(x);
        let (v, dv) = self.v(x);
        let (ddv, dde, ddxb) = self.second_derivatives(x);
        let hx = 0.5 * y * (y + 2.0 * xb);
        let h = y * y - beta * x * y + v;
        let kxx = dde * (h - hx) - 2.0 * de * y * dxb + (1.0 - e) * y * ddxb + 2.0 * de * (-beta * y + dv) + e * ddv;
        let kxy = -de * (y + xb) + (1.0 - e) * dxb + de * (2.0 * y - beta * x) - e * beta;
        let kyy = (1.0 - e) + 2.0 * e;
        (kxx, kxy, kyy)
    }

    pub fn field_jacobian(&self, x: f64, y: f64) -> DMatrix<f64> {
        let (kxx, kxy, kyy) = self.hessian_k(x, y);
        DMatrix::from_row_slice(2, 2, &[kxy, kyy, -kxx, -kxy - self.params.alpha])
    }

    pub fn k(&self, x: f64, y: f64) -> f64 {
        let x = self.reduce(x);
        let beta = self.params.beta;
        let (e, _) = self.eta(x);
        let (xb, _) = self.xbar(x);
        let (v, _) = self.v(x);
        0.5 * (1.0 - e) * y * (y + 2.0 * xb) + e * (y * y - beta * x * y + v)
    }

    /// `(∂K/∂x, ∂K/∂y)`.
    pub fn grad_k(&self, x: f64, y: f64) -> (f64, f64) {
        let x = self.reduce(x);
        let beta = self.params.beta;
        let (e, de) = self.eta(x);
        let (xb, dxb) = self.xbar(x);
        let (v, dv) = self.v(x);
        let hx = 0.5 * y * (y + 2.0 * xb);
        let h = y * y - beta * x * y + v;
        let kx = -de * hx + (1.0 - e) * y * dxb + de * h + e * (-beta * y + dv);
        let ky = (1.0 - e) * (y + xb) + e * (2.0 * y - beta * x);
        (kx, ky)
    }

    /// `∂²K/∂y²` from a centred second difference with unit step,
    /// which is exact because `K` is quadratic in `y`.
    pub fn k_yy(&self, x: f64, y: f64) -> f64 {
        self.k(x, y + 1.0) - 2.0 * self.k(x, y) + self.k(x, y - 1.0)
    }

    pub fn field(&self, x: f64, y: f64) -> [f64; 2] {
        let (kx, ky) = self.grad_k(x, y);
        [ky, -kx - self.params.alpha * y]
    }

    /// The linear-plus-bump field valid on `[−B, B] × ℝ`.
    pub fn inner_field(&self, x: f64, y: f64) -> [f64; 2] {
        let LeCalvezParams { beta, alpha, .. } = self.params;
        [-beta * x + 2.0 * y, -self.v(x).1 + (beta - alpha) * y]
    }
}

/// Union of polylines approximating the invariant curve `Γ`.
#[derive(Clone, Debug)]
pub struct InvariantCurve {
    pub branches: Vec<Vec<[f64; 2]>>,
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (cx * cx + cy * cy).sqrt()
}

impl InvariantCurve {
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for br in &self.branches {
            for w in br.windows(2) {
                best = best.min(segment_distance(p, w[0], w[1]));
            }
            if br.len() == 1 {
                best = best.min(segment_distance(p, br[0], br[0]));
            }
        }
        best
    }

    /// All `y` with `(x, y) ∈ Γ`, by linear interpolation on crossing segments.
    pub fn heights_at(&self, x: f64) -> Vec<f64> {
        let mut ys = Vec::new();
        for br in &self.branches {
            for w in br.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a[0] - x) * (b[0] - x) <= 0.0 && a[0] != b[0] {
                    let t = (x - a[0]) / (b[0] - a[0]);
                    ys.push(a[1] + t * (b[1] - a[1]));
                }
            }
        }
        ys
    }

    /// Largest vertical spread `max_x (max y − min y)` over the given abscissae.
    pub fn vertical_gap(&self, xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
        let mut best = (0.0, f64::NAN);
        for x in xs {
            let ys = self.heights_at(x);
            if ys.len() < 2 {
                continue;
            }
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            if hi - lo > best.0 {
                best = (hi - lo, x);
            }
        }
        best
    }
}

#[derive(Clone)]
pub struct LeCalvezExample {
    pub params: LeCalvezParams,
    pub profiles: Profiles,
    pub flow: FlowSystem,
}

impl LeCalvezExample {
    /// Slow eigenvector `(1, β − α/2)` of the linear part.
    pub fn slow_eigenvector(&self) -> [f64; 2] {
        [1.0, self.params.beta - 0.5 * self.params.alpha]
    }

    pub fn linear_part(&self) -> DMatrix<f64> {
        let LeCalvezParams { beta, alpha, .. } = self.params;
        DMatrix::from_row_slice(2, 2, &[-beta, 2.0, 0.0, beta - alpha])
    }

    /// `x − (2/(2β−α)) y − K|y|^{β/(α−β)}` with `0^positive = 0`.
    pub fn curve_residual(&self, k: f64, x: f64, y: f64) -> f64 {
        let LeCalvezParams { beta, alpha, .. } = self.params;
        let e = beta / (alpha - beta);
        let pow = if y == 0.0 { 0.0 } else { y.abs().powf(e) };
        x - 2.0 / (2.0 * beta - alpha) * y - k * pow
    }

    /// `K` fitted through a point off the eigenspaces.
    pub fn curve_constant(&self, x: f64, y: f64) -> f64 {
        let LeCalvezParams { beta, alpha, .. } = self.params;
        (x - 2.0 / (2.0 * beta - alpha) * y) / y.abs().powf(beta / (alpha - beta))
    }

    /// Γ from the two axis orbits entering `[−B, B]`, plus the axis pieces
    /// outside, continued for time `t_max` with step `dt`.
    pub fn invariant_curve(&self, t_max: f64, dt: f64) -> Result<InvariantCurve> {
        let LeCalvezParams { b, d, .. } = self.params;
        let mut branches = Vec::new();
        for side in [-1.0, 1.0] {
            let start = side * (b + 0.5);
            let tr = trajectory(&self.flow, &[start, 0.0], t_max, dt, Method::Rk4)?;
            branches.push(tr.points.iter().map(|p| [p[0], p[1]]).collect());
            branches.push(vec![[side * d, 0.0], [start, 0.0]]);
        }
        Ok(InvariantCurve { branches })
    }
}

pub fn make_lecalvez_example(params: LeCalvezParams) -> Result<LeCalvezExample> {
    params.validate()?;
    let profiles = Profiles { params };
    let (omega, lambda) = cotangent_forms(1);
    let manifold = Manifold::with_periodic("C_D x R", vec![Some(Periodic { lower: -params.d, period: 2.0 * params.d }), None]);
    let pr = Arc::new(profiles);
    let pj = pr.clone();
    let flow = FlowSystem::new("lecalvez", manifold, omega)
        .with_vector_field(move |x| Ok(pr.field(x[0], x[1]).to_vec()))
        .with_field_jacobian(move |x| Ok(pj.field_jacobian(x[0], x[1])))
        .with_rate(-params.alpha)
        .with_lambda(lambda)
        .with_sample_bounds(vec![(-params.d, params.d), (-2.0, 2.0)]);
    Ok(LeCalvezExample { params, profiles, flow })
}
