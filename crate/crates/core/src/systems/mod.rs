//! The explicit example systems, each bundled with its forms and nominal
//! conformality data.

mod lecalvez;
mod mane;
mod model;
mod suspension;
mod torus6;

pub use lecalvez::{make_lecalvez_example, smoothstep, InvariantCurve, LeCalvezExample, LeCalvezParams, Profiles};
pub use mane::{make_mane_lift, BaseField, ManeLift};
pub use model::{liouville_flow, make_model_cotangent_map, ModelCotangentMap};
pub use suspension::{make_suspension_example, SuspensionExample};
pub use torus6::{make_torus6_example, Torus6Example};

use nalgebra::DMatrix;

use crate::dynamics::{FlowSystem, MapSystem};
use crate::error::{Error, Result};
use crate::geometry::{Form, Manifold};

/// `λ₋ = (3 − √5)/2`, the contracting eigenvalue of the cat matrix.
pub fn lambda_minus() -> f64 {
    (3.0 - 5f64.sqrt()) / 2.0
}

/// `λ₊ = (3 + √5)/2`.
pub fn lambda_plus() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

/// `p = (√5 − 1)/2`, slope of the unstable direction `(1, p)`.
pub fn golden_slope() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

pub const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

/// `Σ dqᵢ∧dpᵢ` and `Σ pᵢ dqᵢ` on `T*Tⁿ` with coordinates `(q, p)`.
pub fn cotangent_forms(n: usize) -> (Form, Form) {
    let mut omega = Form::zero(2 * n, 2);
    for i in 0..n {
        let term = Form::coordinate(2 * n, i).wedge(&Form::coordinate(2 * n, n + i)).expect("same chart");
        omega = omega.add(&term).expect("same degree");
    }
    let lambda = Form::one_form(2 * n, move |x| {
        let mut c = vec![0.0; 2 * n];
        c[..n].copy_from_slice(&x[n..]);
        c
    });
    (omega, lambda)
}

fn area_form(dim: usize, i: usize, j: usize) -> Form {
    Form::coordinate(dim, i).wedge(&Form::coordinate(dim, j)).expect("same chart")
}

fn apply_cat(m: [[i64; 2]; 2], a: f64, b: f64) -> (f64, f64) {
    (m[0][0] as f64 * a + m[0][1] as f64 * b, m[1][0] as f64 * a + m[1][1] as f64 * b)
}

/// The cat map `(x, y) ↦ (2x + y, x + y)` on `T²` with the area form.
/// Acts on cover coordinates; iterates are reduced mod 1.
pub fn cat_map() -> MapSystem {
    MapSystem::new(
        "cat",
        Manifold::torus("T2", 2),
        |x, out| {
            let (a, b) = apply_cat(CAT, x[0], x[1]);
            out[0] = a.rem_euclid(1.0);
            out[1] = b.rem_euclid(1.0);
            Ok(())
        },
        area_form(2, 0, 1),
    )
    .with_inverse(|x, out| {
        let (a, b) = apply_cat([[1, -1], [-1, 2]], x[0], x[1]);
        out[0] = a.rem_euclid(1.0);
        out[1] = b.rem_euclid(1.0);
        Ok(())
    })
    .with_jacobian(|_| Ok(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])))
    .with_inverse_jacobian(|_| Ok(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0])))
    .with_ratio(1.0)
}

/// Rigid rotation of `T²`.
pub fn rotation(shift: [f64; 2]) -> MapSystem {
    MapSystem::new(
        "rotation",
        Manifold::torus("T2", 2),
        move |x, out| {
            out[0] = (x[0] + shift[0]).rem_euclid(1.0);
            out[1] = (x[1] + shift[1]).rem_euclid(1.0);
            Ok(())
        },
        area_form(2, 0, 1),
    )
    .with_inverse(move |x, out| {
        out[0] = (x[0] - shift[0]).rem_euclid(1.0);
        out[1] = (x[1] - shift[1]).rem_euclid(1.0);
        Ok(())
    })
    .with_jacobian(|_| Ok(DMatrix::identity(2, 2)))
    .with_inverse_jacobian(|_| Ok(DMatrix::identity(2, 2)))
    .with_ratio(1.0)
}

/// `F = (T, T)` on `T⁴` with the degenerate form `(dθ₂ − p dθ₁)∧(dθ₄ − p dθ₃)`,
/// which `F` scales by `λ₋²`.
pub fn product_cat_map() -> MapSystem {
    let p = golden_slope();
    let e1 = Form::covector(vec![-p, 1.0, 0.0, 0.0]);
    let e2 = Form::covector(vec![0.0, 0.0, -p, 1.0]);
    let omega = e1.wedge(&e2).expect("same chart");
    let mut j = DMatrix::zeros(4, 4);
    let mut ji = DMatrix::zeros(4, 4);
    for b in [0, 2] {
        j.view_mut((b, b), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
        ji.view_mut((b, b), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 2.0]));
    }
    MapSystem::new(
        "cat x cat",
        Manifold::torus("T4", 4),
        |x, out| {
            for b in [0, 2] {
                let (a, c) = apply_cat(CAT, x[b], x[b + 1]);
                out[b] = a.rem_euclid(1.0);
                out[b + 1] = c.rem_euclid(1.0);
            }
            Ok(())
        },
        omega,
    )
    .with_inverse(|x, out| {
        for b in [0, 2] {
            let (a, c) = apply_cat([[1, -1], [-1, 2]], x[b], x[b + 1]);
            out[b] = a.rem_euclid(1.0);
            out[b + 1] = c.rem_euclid(1.0);
        }
        Ok(())
    })
    .with_jacobian(move |_| Ok(j.clone()))
    .with_inverse_jacobian(move |_| Ok(ji.clone()))
    .with_ratio(lambda_minus().powi(2))
}

/// A catalog entry: either a discrete map or a flow.
#[derive(Clone)]
pub enum Dynamics {
    Map(MapSystem),
    Flow(FlowSystem),
}

impl Dynamics {
    pub fn name(&self) -> &str {
        match self {
            Dynamics::Map(m) => m.name(),
            Dynamics::Flow(f) => f.name(),
        }
    }
}

pub const CATALOG: [&str; 6] = ["suspension", "torus6", "mane", "lecalvez", "model-map", "liouville-flow"];

/// Catalog system with default parameters.
pub fn by_name(name: &str) -> Result<Dynamics> {
    Ok(match name {
        "suspension" => Dynamics::Flow(make_suspension_example().flow),
        "torus6" => Dynamics::Map(make_torus6_example().map),
        "mane" => Dynamics::Flow(make_mane_lift(BaseField::zero(1), 1.5).flow),
        "lecalvez" => Dynamics::Flow(make_lecalvez_example(LeCalvezParams::default())?.flow),
        "model-map" => Dynamics::Map(make_model_cotangent_map(1, 0.5, &[0.3])?.map),
        "liouville-flow" => Dynamics::Flow(liouville_flow(1)),
        other => return Err(Error::Usage(format!("unknown system {other}; known: {}", CATALOG.join(", ")))),
    })
}
