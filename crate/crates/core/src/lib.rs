pub mod allocation;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod link;
pub mod pipeline;
pub mod scene;
pub mod scm;

pub use error::{Error, Result};
pub use geometry::Vec3;
