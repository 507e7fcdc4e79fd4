//! Multi-class point-cloud anomaly detection with clustered local feature
//! banks, synthetic defect generation and 3D region metrics.

pub mod adaptation;
pub mod bank;
pub mod cloud;
pub mod detection;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod nn;
pub mod normals;
pub mod plane;
pub mod rng;
pub mod synthesis;

pub use cloud::{Point3, PointCloud};
pub use error::{GlfmError, Result};
pub use rng::SeededRng;
