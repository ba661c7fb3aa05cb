use std::sync::Arc;

use nalgebra::DMatrix;

use super::cotangent_forms;
use crate::dynamics::{CotangentSplit, FlowSystem, MapSystem};
use crate::error::{Error, Result};
use crate::geometry::{Form, Manifold};

/// `(q, p) ↦ (q, a p + c)` on `T*Tⁿ`.
#[derive(Clone)]
pub struct ModelCotangentMap {
    pub n: usize,
    pub a: f64,
    pub c: Vec<f64>,
    pub map: MapSystem,
}

impl ModelCotangentMap {
    /// The closed 1-form `η = f*λ − aλ = Σ cᵢ dqᵢ`.
    pub fn eta(&self) -> Form {
        let mut v = self.c.clone();
        v.extend(std::iter::repeat_n(0.0, self.n));
        Form::covector(v)
    }
}

pub fn make_model_cotangent_map(n: usize, a: f64, c: &[f64]) -> Result<ModelCotangentMap> {
    if a <= 0.0 || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("ratio a must be positive, got {a}")));
    }
    if c.len() != n {
        return Err(Error::InvalidParameter(format!("drift has {} entries, expected {n}", c.len())));
    }
    let (omega, lambda) = cotangent_forms(n);
    let (cf, ci) = (c.to_vec(), c.to_vec());
    let mut j = DMatrix::identity(2 * n, 2 * n);
    let mut ji = DMatrix::identity(2 * n, 2 * n);
    for i in n..2 * n {
        j[(i, i)] = a;
        ji[(i, i)] = 1.0 / a;
    }
    let mut bounds = vec![(0.0, 1.0); n];
    bounds.extend(std::iter::repeat_n((-1.0, 1.0), n));
    let map = MapSystem::new(
        format!("model-map(a={a})"),
        Manifold::cotangent_torus(n),
        move |x, out| {
            out[..n].copy_from_slice(&x[..n]);
            for i in 0..n {
                out[n + i] = a * x[n + i] + cf[i];
            }
            Ok(())
        },
        omega,
    )
    .with_inverse(move |x, out| {
        out[..n].copy_from_slice(&x[..n]);
        for i in 0..n {
            out[n + i] = (x[n + i] - ci[i]) / a;
        }
        Ok(())
    })
    .with_jacobian(move |_| Ok(j.clone()))
    .with_inverse_jacobian(move |_| Ok(ji.clone()))
    .with_ratio(a)
    .with_lambda(lambda)
    .with_sample_bounds(bounds);
    Ok(ModelCotangentMap { n, a, c: c.to_vec(), map })
}

/// The Liouville flow `(q, p) ↦ (q, e^{−t} p)` on `T*Tⁿ`; rate −1.
pub fn liouville_flow(n: usize) -> FlowSystem {
    let (omega, lambda) = cotangent_forms(n);
    let mut bounds = vec![(0.0, 1.0); n];
    bounds.extend(std::iter::repeat_n((-1.0, 1.0), n));
    FlowSystem::new("liouville-flow", Manifold::cotangent_torus(n), omega)
        .with_vector_field(move |x| {
            let mut v = vec![0.0; 2 * n];
            for i in 0..n {
                v[n + i] = -x[n + i];
            }
            Ok(v)
        })
        .with_field_jacobian(move |_| {
            let mut j = DMatrix::zeros(2 * n, 2 * n);
            for i in n..2 * n {
                j[(i, i)] = -1.0;
            }
            Ok(j)
        })
        .with_closed_flow(move |t, x| {
            let mut y = x.to_vec();
            for p in &mut y[n..] {
                *p *= (-t).exp();
            }
            y
        })
        .with_closed_jacobian(move |t, _| {
            let mut j = DMatrix::identity(2 * n, 2 * n);
            for i in n..2 * n {
                j[(i, i)] = (-t).exp();
            }
            j
        })
        .with_split(CotangentSplit { n, hamiltonian_field: Arc::new(move |_| Ok(vec![0.0; 2 * n])), rate: -1.0 })
        .with_rate(-1.0)
        .with_lambda(lambda)
        .with_sample_bounds(bounds)
}
