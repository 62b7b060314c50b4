pub mod error;
pub mod operator;
pub mod scalar;
pub mod spin;
pub mod model;
pub mod linalg;
pub mod manifold;
pub mod lindblad;
pub mod spectrum;
pub mod sync;
pub mod trajectory;
pub mod cavity;
mod engine;

pub use error::{Error, Result};

/// Double-precision aliases used by the command-line front end.
pub type Model = lindblad::LindbladModel<f64>;
pub type Density = lindblad::DensityMatrix<f64>;
pub type Op = operator::Operator<f64>;
pub type State = operator::StateVector<f64>;
pub type Manifold = manifold::GroundManifold<f64>;

pub type Model32 = lindblad::LindbladModel<f32>;
pub type Density32 = lindblad::DensityMatrix<f32>;
pub type Op32 = operator::Operator<f32>;
pub type State32 = operator::StateVector<f32>;
pub type Manifold32 = manifold::GroundManifold<f32>;
