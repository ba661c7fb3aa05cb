//! Single-chart manifolds with periodic coordinates and an optional
//! suspension gluing.
//!
//! Points are stored as cover coordinates; [`Manifold::normalize`] maps a
//! cover point to the representative inside the fundamental domain.

use crate::error::{Error, Result};

/// A coordinate living in `ℝ / period·ℤ`, reduced to `[lower, lower + period)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Periodic {
    pub lower: f64,
    pub period: f64,
}

impl Periodic {
    pub const UNIT: Periodic = Periodic { lower: 0.0, period: 1.0 };

    pub fn reduce(&self, x: f64) -> f64 {
        let r = x - self.period * ((x - self.lower) / self.period).floor();
        // floor can land exactly on the upper end after rounding
        if r >= self.lower + self.period {
            self.lower
        } else {
            r
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x < self.lower + self.period
    }

    /// Signed difference `a - b` folded into `[-period/2, period/2)`.
    pub fn difference(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        d - self.period * (d / self.period + 0.5).floor()
    }
}

/// Suspension identification `(ξ, z) ∼ (Aξ, z − 1)` for an integer matrix
/// `A ∈ SL(2, ℤ)` acting on two fiber coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SuspensionGluing {
    pub fiber: [usize; 2],
    pub height: usize,
    pub matrix: [[i64; 2]; 2],
}

impl SuspensionGluing {
    pub fn new(fiber: [usize; 2], height: usize, matrix: [[i64; 2]; 2]) -> Result<Self> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det != 1 {
            return Err(Error::InvalidParameter(format!("gluing matrix must have determinant 1, got {det}")));
        }
        Ok(Self { fiber, height, matrix })
    }

    fn inverse_matrix(&self) -> [[i64; 2]; 2] {
        let m = self.matrix;
        [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]
    }

    fn act(m: [[i64; 2]; 2], x: &mut [f64], fiber: [usize; 2]) {
        let (a, b) = (x[fiber[0]], x[fiber[1]]);
        x[fiber[0]] = m[0][0] as f64 * a + m[0][1] as f64 * b;
        x[fiber[1]] = m[1][0] as f64 * a + m[1][1] as f64 * b;
    }

    /// The gluing map `G(ξ, z, ..) = (Aξ, z − 1, ..)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        Self::act(self.matrix, &mut y, self.fiber);
        y[self.height] -= 1.0;
        y
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        Self::act(self.inverse_matrix(), &mut y, self.fiber);
        y[self.height] += 1.0;
        y
    }

    /// Jacobian of the gluing map (constant).
    pub fn linear_part(&self, dim: usize) -> nalgebra::DMatrix<f64> {
        let mut j = nalgebra::DMatrix::identity(dim, dim);
        for r in 0..2 {
            for c in 0..2 {
                j[(self.fiber[r], self.fiber[c])] = self.matrix[r][c] as f64;
            }
        }
        j
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gluing {
    Suspension(SuspensionGluing),
}

/// A chart `ℝⁿ` with per-coordinate periodicity and an optional quotient gluing.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifold {
    name: String,
    periodic: Vec<Option<Periodic>>,
    gluing: Option<Gluing>,
}

impl Manifold {
    pub fn euclidean(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), periodic: vec![None; dim], gluing: None }
    }

    /// `Tⁿ` with unit periods.
    pub fn torus(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), periodic: vec![Some(Periodic::UNIT); dim], gluing: None }
    }

    /// `T*Tⁿ` in coordinates `(q₁..qₙ, p₁..pₙ)`.
    pub fn cotangent_torus(n: usize) -> Self {
        let mut periodic = vec![Some(Periodic::UNIT); n];
        periodic.extend(std::iter::repeat_n(None, n));
        Self { name: format!("T*T^{n}"), periodic, gluing: None }
    }

    pub fn with_periodic(name: impl Into<String>, periodic: Vec<Option<Periodic>>) -> Self {
        Self { name: name.into(), periodic, gluing: None }
    }

    pub fn with_gluing(mut self, gluing: Gluing) -> Self {
        self.gluing = Some(gluing);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.periodic.len()
    }

    pub fn periodicity(&self, i: usize) -> Option<Periodic> {
        self.periodic[i]
    }

    pub fn gluing(&self) -> Option<&Gluing> {
        self.gluing.as_ref()
    }

    /// Representative of `x` inside the fundamental domain.
    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, manifold {} has dimension {}",
                x.len(),
                self.name,
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinates {x:?}")));
        }
        let mut y = x.to_vec();
        if let Some(Gluing::Suspension(g)) = &self.gluing {
            let shift = y[g.height].floor();
            let steps = shift.abs() as u64;
            for _ in 0..steps {
                y = if shift > 0.0 { g.apply(&y) } else { g.apply_inverse(&y) };
                // keep fiber coordinates small between steps
                for &i in &g.fiber {
                    if let Some(p) = self.periodic[i] {
                        y[i] = p.reduce(y[i]);
                    }
                }
            }
            // exact integer shift already applied; clean rounding at the boundary
            if y[g.height] < 0.0 || y[g.height] >= 1.0 {
                y[g.height] = y[g.height].clamp(0.0, 1.0 - f64::EPSILON);
            }
        }
        for (v, p) in y.iter_mut().zip(&self.periodic) {
            if let Some(p) = p {
                *v = p.reduce(*v);
            }
        }
        Ok(y)
    }

    pub fn in_fundamental_domain(&self, x: &[f64]) -> bool {
        let periodic_ok = x.iter().zip(&self.periodic).all(|(v, p)| p.map_or(v.is_finite(), |p| p.contains(*v)));
        let glued_ok = match &self.gluing {
            Some(Gluing::Suspension(g)) => (0.0..1.0).contains(&x[g.height]),
            None => true,
        };
        periodic_ok && glued_ok
    }

    /// Distance between two normalized points, folding periodic coordinates.
    pub fn chart_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.periodic)
            .map(|((x, y), p)| match p {
                Some(p) => p.difference(*x, *y).powi(2),
                None => (x - y).powi(2),
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suspension() -> Manifold {
        let mut periodic = vec![Some(Periodic::UNIT); 2];
        periodic.extend([None, None]);
        let g = SuspensionGluing::new([0, 1], 2, [[2, 1], [1, 1]]).unwrap();
        Manifold::with_periodic("N x R", periodic).with_gluing(Gluing::Suspension(g))
    }

    #[test]
    fn suspension_point_is_glued_once() {
        let m = suspension();
        let y = m.normalize(&[0.2, 0.3, 1.3, 5.0]).unwrap();
        let expected = [0.7, 0.5, 0.3, 5.0];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{y:?}");
        }
    }

    #[test]
    fn negative_height_uses_inverse() {
        let m = suspension();
        // (A⁻¹ξ, z + 1) with A⁻¹ = [[1,-1],[-1,2]]
        let y = m.normalize(&[0.7, 0.5, -0.7, 1.0]).unwrap();
        let expected = [0.2, 0.3, 0.3, 1.0];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{y:?}");
        }
    }

    #[test]
    fn torus_reduction() {
        let m = Manifold::torus("T2", 2);
        let y = m.normalize(&[1.25, -0.5]).unwrap();
        assert_eq!(y, vec![0.25, 0.5]);
    }

    #[test]
    fn in_domain_point_unchanged() {
        let m = suspension();
        let x = [0.1, 0.9, 0.5, -3.0];
        assert_eq!(m.normalize(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn non_finite_rejected() {
        let m = Manifold::torus("T2", 2);
        assert!(matches!(m.normalize(&[f64::NAN, 0.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bad_gluing_matrix() {
        assert!(SuspensionGluing::new([0, 1], 2, [[2, 0], [0, 1]]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalize_is_idempotent_and_lands_in_domain(
            x in -5.0f64..5.0, y in -5.0f64..5.0, z in -4.0f64..4.0, s in -3.0f64..3.0
        ) {
            let m = suspension();
            let once = m.normalize(&[x, y, z, s]).unwrap();
            let twice = m.normalize(&once).unwrap();
            proptest::prop_assert!(m.in_fundamental_domain(&once));
            for (a, b) in once.iter().zip(&twice) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
