//! Exterior-calculus substrate: charts, forms, maps and integrals.

pub mod form;
pub mod integrate;
pub mod manifold;
pub mod map;

pub use form::{Form, VectorFieldFn, DEFAULT_STEP, SECOND_DERIVATIVE_STEP};
pub use integrate::{line_integral, path_integral, surface_integral, Loop, Patch, Path, QuadratureRule};
pub use manifold::{Gluing, Manifold, Periodic, SuspensionGluing};
pub use map::{finite_difference_jacobian, Composition, FnMap, SmoothMap};
