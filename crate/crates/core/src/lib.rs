//! Head pose as an orthogonally projected cube.
//!
//! A head is wrapped in a regular hexahedron; its orthographic projection (a
//! "2D cube", eight vertices) carries the 3-DoF orientation. This crate
//! converts between Euler angles and 2D cubes in closed form, decodes dense
//! keypoint maps into cubes, repairs noisy cubes by the dual-octahedron edge
//! adjustment, and ships the label, metric and benchmark tooling around them.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod decode;
pub mod error;
pub mod fit;
pub mod projection;
pub mod rotation;

pub use error::{DataError, GeomError};
pub use fit::{edge_adjust, rectify_orthoscale, Octa2D, RelDims};

pub use projection::{
    cube_to_euler, cube_to_euler_ratios, euler_to_cube, AxisProjection, Cube2D, InverseMethod,
};
pub use rotation::{angle_diff, rotation_distance, wrap_angle, EulerPose, Rotation3};
