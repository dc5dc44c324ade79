//! Surface-only fluid simulation and layered animation from a single image.

pub mod edit;
pub mod error;
pub mod field;
pub mod io;
pub mod lift;
pub mod mesh;
pub mod motion;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod session;
#[cfg(feature = "server")]
pub mod service;
pub mod sim;
pub mod synthetic;

pub use error::{Error, Result};
