pub mod cloud;
pub mod config;
pub mod descriptors;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod index;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod range_image;
pub mod registration;
pub mod report;
pub mod rigid;
pub mod surface;
pub mod synth;
pub mod transform;

pub use cloud::{Aabb, Matrix3, Point3, PointCloud, Vector3};
pub use error::{Error, Result, Stage};
pub use index::{build_index, SpatialIndex};
pub use transform::{apply_transform, RigidTransform};
