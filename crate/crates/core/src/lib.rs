//! Fisher information and Cramér–Rao bounds for synchronization of rotations
//! on weighted measurement graphs, with Monte Carlo validation tools.

pub mod crb;
pub mod embed;
pub mod error;
pub mod graphcore;
pub mod noise;
pub mod par;
pub mod songeom;
pub mod sync;

pub use error::{Error, Result};
pub use noise::{NoiseKind, NoiseModel, QuadratureRule, QuadratureSpec};
pub use par::Parallelism;
pub use songeom::{Rotation, RotationTuple, TangentVector};
