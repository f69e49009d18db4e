//! Finite elements for optimal control with Muckenhoupt weights, point
//! observations and point sources.

pub mod dual;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod optctrl;
pub mod problems;
pub mod quadrature;
pub mod scalar;
pub mod study;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mesh = mesh::Mesh<f64>;
pub type P1Function = fem::P1Function<f64>;
pub type PCFunction = fem::PCFunction<f64>;
pub type Weight = weights::Weight<f64>;
pub type QuadRule = quadrature::QuadRule<f64>;
pub type SparseSym = linalg::SparseSym<f64>;
