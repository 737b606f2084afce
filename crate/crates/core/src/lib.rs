//! Fluid–shell interaction solver on a fixed reference domain.

pub mod basis;
pub mod correction;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod fe;
pub mod frame;
pub mod geometry;
pub mod jet;
pub mod mesh;
pub mod ode;
pub mod pressure;
pub mod saddle;
pub mod spectral;

pub use error::{FsiError, Result};
