pub mod channel;
pub mod crb;
pub mod error;
pub mod estimator;
pub mod fusion;
pub mod harness;
pub mod linalg;
pub mod risdesign;
pub mod scene;

pub use error::{Error, Result};
