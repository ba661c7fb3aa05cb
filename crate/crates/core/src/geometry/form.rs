//! Differential forms in coordinates.
//!
//! A degree-`k` form on an `n`-dimensional chart is stored as a coefficient
//! evaluator returning one coefficient per increasing multi-index
//! `i₁ < … < i_k` (lexicographic order), so that
//!
//! ```text
//! α(x; v₁, …, v_k) = Σ_I α_I(x) · det[v_j^{i_m}]
//! ```
//!
//! Wedge, exterior derivative, pullback and interior product all produce new
//! coefficient evaluators; nothing is precomputed.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::map::SmoothMap;

/// Default central-difference step for first derivatives.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Default step when a second derivative is taken numerically.
pub const SECOND_DERIVATIVE_STEP: f64 = 1e-4;

pub type CoefficientFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type SingularSet = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type VectorFieldFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Increasing multi-indices of length `k` in `0..dim`, lexicographic.
#[derive(Debug, PartialEq, Eq)]
pub struct Basis {
    dim: usize,
    degree: usize,
    indices: Vec<Vec<usize>>,
}

impl Basis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let mut indices = Vec::new();
        if degree <= dim {
            let mut current = Vec::with_capacity(degree);
            fill(0, dim, degree, &mut current, &mut indices);
        }
        Self { dim, degree, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn position(&self, idx: &[usize]) -> Option<usize> {
        self.indices.binary_search_by(|probe| probe.as_slice().cmp(idx)).ok()
    }
}

fn fill(start: usize, dim: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..dim {
        cur.push(i);
        fill(i + 1, dim, k, cur, out);
        cur.pop();
    }
}

/// Determinant of a row-major `k × k` matrix (consumed).
pub(crate) fn det(m: &mut [f64], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => {
            let mut d = 1.0;
            for c in 0..k {
                let pivot = (c..k).max_by(|&a, &b| m[a * k + c].abs().total_cmp(&m[b * k + c].abs())).unwrap();
                if m[pivot * k + c] == 0.0 {
                    return 0.0;
                }
                if pivot != c {
                    for j in 0..k {
                        m.swap(c * k + j, pivot * k + j);
                    }
                    d = -d;
                }
                let p = m[c * k + c];
                d *= p;
                for r in c + 1..k {
                    let f = m[r * k + c] / p;
                    for j in c..k {
                        m[r * k + j] -= f * m[c * k + j];
                    }
                }
            }
            d
        }
    }
}

/// Sign of the permutation sorting `seq` (distinct entries).
fn sort_sign(seq: &[usize]) -> f64 {
    let mut inversions = 0;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] > seq[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A degree-`k` differential form on an `n`-dimensional chart.
#[derive(Clone)]
pub struct Form {
    degree: usize,
    basis: Arc<Basis>,
    coefficients: CoefficientFn,
    singular: Option<SingularSet>,
    truncated: bool,
}

impl fmt::Debug for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Form").field("degree", &self.degree).field("dim", &self.dim()).field("truncated", &self.truncated).finish()
    }
}

impl Form {
    pub fn from_coefficients(dim: usize, degree: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        Self { degree, basis: Arc::new(Basis::new(dim, degree)), coefficients: Arc::new(f), singular: None, truncated: false }
    }

    /// Form whose coefficients are read off an evaluator on basis vectors.
    pub fn from_evaluator(dim: usize, degree: usize, eval: impl Fn(&[f64], &[&[f64]]) -> f64 + Send + Sync + 'static) -> Self {
        let basis = Arc::new(Basis::new(dim, degree));
        let b = basis.clone();
        let coefficients = move |x: &[f64]| {
            let mut out = Vec::with_capacity(b.len());
            for idx in b.indices() {
                let vecs: Vec<Vec<f64>> = idx.iter().map(|&i| unit(dim, i)).collect();
                let refs: Vec<&[f64]> = vecs.iter().map(|v| v.as_slice()).collect();
                out.push(eval(x, &refs));
            }
            Ok(out)
        };
        Self { degree, basis, coefficients: Arc::new(coefficients), singular: None, truncated: false }
    }

    pub fn constant(dim: usize, degree: usize, coefficients: Vec<f64>) -> Self {
        assert_eq!(coefficients.len(), Basis::new(dim, degree).len());
        Self::from_coefficients(dim, degree, move |_| Ok(coefficients.clone()))
    }

    pub fn zero(dim: usize, degree: usize) -> Self {
        let n = Basis::new(dim, degree).len();
        Self::from_coefficients(dim, degree, move |_| Ok(vec![0.0; n]))
    }

    /// A 0-form (function).
    pub fn function(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::from_coefficients(dim, 0, move |x| Ok(vec![f(x)]))
    }

    /// A 1-form `Σ cᵢ(x) dxᵢ`.
    pub fn one_form(dim: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self::from_coefficients(dim, 1, move |x| Ok(f(x)))
    }

    /// The coordinate differential `dxᵢ`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        Self::constant(dim, 1, unit(dim, i))
    }

    /// Constant 1-form with the given covector.
    pub fn covector(c: Vec<f64>) -> Self {
        let dim = c.len();
        Self::constant(dim, 1, c)
    }

    pub fn with_singular_set(mut self, s: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.singular = Some(Arc::new(s));
        self
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Set when a wedge overflowed the dimension and the zero form was returned.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn is_singular_at(&self, x: &[f64]) -> bool {
        self.singular.as_ref().is_some_and(|s| s(x))
    }

    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!("point of length {} for a form on a {}-dimensional chart", x.len(), self.dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point {x:?}")));
        }
        if self.is_singular_at(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        (self.coefficients)(x)
    }

    /// `α(x; v₁, …, v_k)`.
    pub fn eval(&self, x: &[f64], vectors: &[&[f64]]) -> Result<f64> {
        if vectors.len() != self.degree {
            return Err(Error::InvalidInput(format!("{}-form evaluated on {} vectors", self.degree, vectors.len())));
        }
        if vectors.iter().any(|v| v.len() != self.dim()) {
            return Err(Error::InvalidInput("tangent vector of wrong length".into()));
        }
        let c = self.coefficients(x)?;
        Ok(self.contract(&c, vectors))
    }

    fn contract(&self, c: &[f64], vectors: &[&[f64]]) -> f64 {
        let k = self.degree;
        let mut m = vec![0.0; k * k];
        let mut total = 0.0;
        for (idx, coeff) in self.basis.indices().iter().zip(c) {
            if *coeff == 0.0 {
                continue;
            }
            for (r, &i) in idx.iter().enumerate() {
                for (col, v) in vectors.iter().enumerate() {
                    m[r * k + col] = v[i];
                }
            }
            total += coeff * det(&mut m, k);
        }
        total
    }

    fn derived(&self, degree: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Form {
        Form {
            degree,
            basis: Arc::new(Basis::new(self.dim(), degree)),
            coefficients: Arc::new(f),
            singular: self.singular.clone(),
            truncated: false,
        }
    }

    pub fn scale(&self, factor: f64) -> Form {
        let inner = self.clone();
        self.derived(self.degree, move |x| Ok(inner.coefficients(x)?.into_iter().map(|c| c * factor).collect()))
    }

    /// `self + factor · other`.
    pub fn add_scaled(&self, other: &Form, factor: f64) -> Result<Form> {
        if self.degree != other.degree || self.dim() != other.dim() {
            return Err(Error::InvalidInput("adding forms of different type".into()));
        }
        let (a, b) = (self.clone(), other.clone());
        let mut out = self.derived(self.degree, move |x| {
            let ca = a.coefficients(x)?;
            let cb = b.coefficients(x)?;
            Ok(ca.iter().zip(&cb).map(|(u, v)| u + factor * v).collect())
        });
        if let (Some(s1), Some(s2)) = (self.singular.clone(), other.singular.clone()) {
            out.singular = Some(Arc::new(move |x| s1(x) || s2(x)));
        } else if other.singular.is_some() {
            out.singular = other.singular.clone();
        }
        Ok(out)
    }

    pub fn add(&self, other: &Form) -> Result<Form> {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Form) -> Result<Form> {
        self.add_scaled(other, -1.0)
    }

    /// `α ∧ β` via the shuffle formula. Returns the zero form flagged as
    /// truncated when `k + l` exceeds the dimension.
    pub fn wedge(&self, other: &Form) -> Result<Form> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidInput("wedge of forms on different charts".into()));
        }
        let (k, l, n) = (self.degree, other.degree, self.dim());
        if k + l > n {
            log::warn!("wedge of degree {k} and {l} forms exceeds dimension {n}");
            let mut z = Form::from_coefficients(n, k + l, |_| Ok(Vec::new()));
            z.truncated = true;
            return Ok(z);
        }
        let target = Arc::new(Basis::new(n, k + l));
        // precompute, for each target index, the (sign, left position, right position) splits
        let left_basis = self.basis.clone();
        let right_basis = other.basis.clone();
        let mut plan: Vec<Vec<(f64, usize, usize)>> = Vec::with_capacity(target.len());
        for idx in target.indices() {
            let mut terms = Vec::new();
            for pick in Basis::new(k + l, k).indices() {
                let left: Vec<usize> = pick.iter().map(|&p| idx[p]).collect();
                let right: Vec<usize> = (0..k + l).filter(|p| !pick.contains(p)).map(|p| idx[p]).collect();
                let order: Vec<usize> = pick.iter().copied().chain((0..k + l).filter(|p| !pick.contains(p))).collect();
                let sign = sort_sign(&order);
                terms.push((sign, left_basis.position(&left).unwrap(), right_basis.position(&right).unwrap()));
            }
            plan.push(terms);
        }
        let (a, b) = (self.clone(), other.clone());
        let mut out = self.derived(k + l, move |x| {
            let ca = a.coefficients(x)?;
            let cb = b.coefficients(x)?;
            Ok(plan.iter().map(|terms| terms.iter().map(|&(s, i, j)| s * ca[i] * cb[j]).sum()).collect())
        });
        out.basis = target;
        if other.singular.is_some() && self.singular.is_none() {
            out.singular = other.singular.clone();
        }
        Ok(out)
    }

    /// Numerical exterior derivative by central differences of the
    /// coefficients with step `h`.
    pub fn exterior_derivative(&self, h: f64) -> Form {
        let n = self.dim();
        let k = self.degree;
        let source = self.basis.clone();
        let target = Arc::new(Basis::new(n, k + 1));
        // (dα)_K = Σ_m (−1)^m ∂_{K_m} α_{K \ K_m}
        let plan: Vec<Vec<(f64, usize, usize)>> = target
            .indices()
            .iter()
            .map(|idx| {
                (0..idx.len())
                    .map(|m| {
                        let rest: Vec<usize> = idx.iter().enumerate().filter(|(j, _)| *j != m).map(|(_, &v)| v).collect();
                        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                        (sign, idx[m], source.position(&rest).unwrap())
                    })
                    .collect()
            })
            .collect();
        let a = self.clone();
        let mut out = self.derived(k + 1, move |x| {
            let mut partials = Vec::with_capacity(n);
            let mut xp = x.to_vec();
            for i in 0..n {
                xp[i] = x[i] + h;
                let plus = (a.coefficients)(&xp)?;
                xp[i] = x[i] - h;
                let minus = (a.coefficients)(&xp)?;
                xp[i] = x[i];
                partials.push(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect::<Vec<f64>>());
            }
            Ok(plan.iter().map(|terms| terms.iter().map(|&(s, i, j)| s * partials[i][j]).sum()).collect())
        });
        out.basis = target;
        out
    }

    pub fn d(&self) -> Form {
        self.exterior_derivative(DEFAULT_STEP)
    }

    /// `f*α` for a smooth map `f` from an `m`-dimensional chart into this
    /// form's chart.
    pub fn pullback(&self, map: Arc<dyn SmoothMap>) -> Result<Form> {
        if map.dim_out() != self.dim() {
            return Err(Error::InvalidInput(format!("map lands in dimension {}, form lives in dimension {}", map.dim_out(), self.dim())));
        }
        let m = map.dim_in();
        let k = self.degree;
        let target = Arc::new(Basis::new(m, k));
        let tb = target.clone();
        let a = self.clone();
        let coefficients = move |x: &[f64]| {
            let y = map.apply(x)?;
            let jac = map.jacobian(x)?;
            let c = a.coefficients(&y)?;
            let mut out = Vec::with_capacity(tb.len());
            let mut sub = vec![0.0; k * k];
            for cols in tb.indices() {
                let mut s = 0.0;
                for (rows, coeff) in a.basis.indices().iter().zip(&c) {
                    if *coeff == 0.0 {
                        continue;
                    }
                    for (r, &i) in rows.iter().enumerate() {
                        for (cc, &j) in cols.iter().enumerate() {
                            sub[r * k + cc] = jac[(i, j)];
                        }
                    }
                    s += coeff * det(&mut sub, k);
                }
                out.push(s);
            }
            Ok(out)
        };
        Ok(Form { degree: k, basis: target, coefficients: Arc::new(coefficients), singular: None, truncated: false })
    }

    /// Interior product `i_X α`.
    pub fn interior(&self, field: VectorFieldFn) -> Result<Form> {
        if self.degree == 0 {
            return Err(Error::InvalidInput("interior product of a 0-form".into()));
        }
        let n = self.dim();
        let k = self.degree;
        let source = self.basis.clone();
        let target = Basis::new(n, k - 1);
        // (i_X α)_J = Σ_i X^i · α(e_i, e_J) = Σ_i X^i · sign(i, J) · α_{sort(i ∪ J)}
        let plan: Vec<Vec<(f64, usize, usize)>> = target
            .indices()
            .iter()
            .map(|rest| {
                (0..n)
                    .filter(|i| !rest.contains(i))
                    .map(|i| {
                        let seq: Vec<usize> = std::iter::once(i).chain(rest.iter().copied()).collect();
                        let mut sorted = seq.clone();
                        sorted.sort_unstable();
                        (sort_sign(&seq), i, source.position(&sorted).unwrap())
                    })
                    .collect()
            })
            .collect();
        let a = self.clone();
        Ok(self.derived(k - 1, move |x| {
            let v = field(x)?;
            let c = a.coefficients(x)?;
            Ok(plan.iter().map(|terms| terms.iter().map(|&(s, i, j)| s * v[i] * c[j]).sum()).collect())
        }))
    }
}

pub(crate) fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[i] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::map::FnMap;
    use crate::sampling::Sampler;

    fn vecs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|x| x.as_slice()).collect()
    }

    /// A generic nonlinear 1-form on ℝ³ used in several checks.
    fn sample_one_form() -> Form {
        Form::one_form(3, |x| vec![x[1] * x[2].sin(), x[0].powi(2) + x[2], (x[0] * x[1]).cos()])
    }

    #[test]
    fn basis_counts() {
        assert_eq!(Basis::new(4, 2).len(), 6);
        assert_eq!(Basis::new(8, 2).len(), 28);
        assert_eq!(Basis::new(3, 0).len(), 1);
        assert!(Basis::new(2, 3).is_empty());
        assert_eq!(Basis::new(4, 2).position(&[1, 3]), Some(4));
    }

    #[test]
    fn determinant_matches_expansion() {
        let mut m = vec![2.0, -1.0, 0.5, 1.0, 3.0, -2.0, 0.0, 1.5, 4.0];
        // cofactor expansion by hand
        let expected = 2.0 * (3.0 * 4.0 + 2.0 * 1.5) + 1.0 * (1.0 * 4.0 - 0.0) + 0.5 * (1.5 - 0.0);
        assert!((det(&mut m, 3) - expected).abs() < 1e-12);
    }

    #[test]
    fn standard_pairing() {
        let dq = Form::coordinate(2, 0);
        let dp = Form::coordinate(2, 1);
        let w = dq.wedge(&dp).unwrap();
        let v = w.eval(&[0.3, 0.1], &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn alpha_wedge_alpha_vanishes() {
        let a = sample_one_form();
        let aa = a.wedge(&a).unwrap();
        let mut s = Sampler::new(7);
        for _ in 0..50 {
            let x = s.normal_vector(3);
            let u = s.normal_vector(3);
            let v = s.normal_vector(3);
            assert!(aa.eval(&x, &[&u, &v]).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn wedge_overflow_is_flagged_zero() {
        let a = Form::coordinate(2, 0).wedge(&Form::coordinate(2, 1)).unwrap();
        let z = a.wedge(&Form::coordinate(2, 0)).unwrap();
        assert!(z.is_truncated());
        assert_eq!(z.degree(), 3);
        assert!(z.coefficients(&[0.0, 0.0]).unwrap().is_empty());
    }

    #[test]
    fn wedge_matches_shuffle_sum_on_vectors() {
        // (α∧β)(u,v,w) = Σ_shuffles sgn α(.) β(.,.) with α a 1-form and β a 2-form
        let a = sample_one_form();
        let b = Form::from_coefficients(3, 2, |x| Ok(vec![x[0], x[1] * x[2], 1.0 + x[0] * x[0]]));
        let ab = a.wedge(&b).unwrap();
        let mut s = Sampler::new(11);
        for _ in 0..20 {
            let x = s.normal_vector(3);
            let vs = [s.normal_vector(3), s.normal_vector(3), s.normal_vector(3)];
            let (u, v, w) = (&vs[0], &vs[1], &vs[2]);
            let expected = a.eval(&x, &[u]).unwrap() * b.eval(&x, &[v, w]).unwrap()
                - a.eval(&x, &[v]).unwrap() * b.eval(&x, &[u, w]).unwrap()
                + a.eval(&x, &[w]).unwrap() * b.eval(&x, &[u, v]).unwrap();
            let got = ab.eval(&x, &vecs(&vs)).unwrap();
            assert!((got - expected).abs() < 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn d_of_coordinate_is_zero_and_dd_vanishes() {
        let dq = Form::coordinate(2, 0);
        let ddq = dq.d();
        assert!(ddq.eval(&[0.2, 0.4], &[&[1.0, 2.0], &[-1.0, 0.5]]).unwrap().abs() < 1e-6);

        let a = sample_one_form();
        let dda = a.exterior_derivative(SECOND_DERIVATIVE_STEP).exterior_derivative(SECOND_DERIVATIVE_STEP);
        let mut s = Sampler::new(3);
        for _ in 0..20 {
            let x = s.normal_vector(3);
            let c = dda.coefficients(&x).unwrap();
            assert!(c[0].abs() < 1e-4, "{c:?}");
        }
    }

    #[test]
    fn exterior_derivative_of_function_is_gradient() {
        let f = Form::function(2, |x| x[0] * x[0] * x[1]);
        let df = f.d();
        let c = df.coefficients(&[1.5, -0.5]).unwrap();
        assert!((c[0] - 2.0 * 1.5 * -0.5).abs() < 1e-8);
        assert!((c[1] - 2.25).abs() < 1e-8);
    }

    #[test]
    fn singular_points_raise_domain_error() {
        let f = Form::one_form(2, |x| vec![1.0 / x[0], 0.0]).with_singular_set(|x| x[0] == 0.0);
        assert!(matches!(f.eval(&[0.0, 1.0], &[&[1.0, 0.0]]), Err(Error::Domain { .. })));
    }

    #[test]
    fn pullback_by_identity_is_identity() {
        let a = sample_one_form();
        let id: Arc<dyn SmoothMap> = Arc::new(FnMap::new(3, 3, |x| Ok(x.to_vec())));
        let pa = a.pullback(id).unwrap();
        let x = [0.3, -1.2, 0.7];
        let u = [0.5, 1.0, -2.0];
        assert!((pa.eval(&x, &[&u]).unwrap() - a.eval(&x, &[&u]).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn interior_product_of_area_form() {
        // i_X (dq∧dp) = X^q dp − X^p dq
        let w = Form::coordinate(2, 0).wedge(&Form::coordinate(2, 1)).unwrap();
        let ix = w.interior(Arc::new(|_x: &[f64]| Ok(vec![2.0, 3.0]))).unwrap();
        assert_eq!(ix.coefficients(&[0.0, 0.0]).unwrap(), vec![-3.0, 2.0]);
    }

    proptest::proptest! {
        #[test]
        fn two_forms_are_alternating_and_linear(
            seed in 0u64..1000, c in -3.0f64..3.0
        ) {
            let a = sample_one_form();
            let b = Form::from_coefficients(3, 1, |x| Ok(vec![x[2], x[0] * x[1], x[1].exp()]));
            let w = a.wedge(&b).unwrap();
            let mut s = Sampler::new(seed);
            let x = s.normal_vector(3);
            let u = s.normal_vector(3);
            let v = s.normal_vector(3);
            let z = s.normal_vector(3);
            let uv = w.eval(&x, &[&u, &v]).unwrap();
            let vu = w.eval(&x, &[&v, &u]).unwrap();
            proptest::prop_assert!((uv + vu).abs() <= 1e-12 * (1.0 + uv.abs()));
            let lin: Vec<f64> = u.iter().zip(&z).map(|(a, b)| a + c * b).collect();
            let lhs = w.eval(&x, &[&lin, &v]).unwrap();
            let rhs = uv + c * w.eval(&x, &[&z, &v]).unwrap();
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs() + rhs.abs()));
        }
    }
}
