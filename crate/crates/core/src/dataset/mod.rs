//! Labels, ground-truth map rendering, evaluation and file formats.

mod eval;
mod jsonl;
mod render;
mod tmap;

pub use eval::{evaluate, EvalReport, Subset};
pub use jsonl::{read_jsonl, read_jsonl_file, write_jsonl, write_jsonl_file, Numbered};
pub use render::{gaussian_radius, render_targets, RenderOptions};
pub use tmap::{maps_from_tmap, maps_to_tmap, read_tmap, write_tmap, TensorFile};

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::fit::RelDims;
use crate::projection::{axes_to_cube, euler_to_axes, Cube2D};
use crate::rotation::EulerPose;

/// A ground-truth head: bounding box `[x, y, w, h]` in pixels plus pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadLabel {
    pub image_id: String,
    pub bbox: [f64; 4],
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nose: Option<[f64; 2]>,
    /// Head size override; defaults to `min(w, h)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
}

impl HeadLabel {
    pub fn pose(&self) -> EulerPose {
        EulerPose::new(self.yaw, self.pitch, self.roll)
    }

    pub fn bbox_center(&self) -> Point2<f64> {
        let [x, y, w, h] = self.bbox;
        Point2::new(x + w / 2.0, y + h / 2.0)
    }

    fn validate(&self) -> Result<(), DataError> {
        let invalid = |msg: String| DataError::InvalidLabel { id: self.image_id.clone(), msg };
        let [x, y, w, h] = self.bbox;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) || w <= 0.0 || h <= 0.0 {
            return Err(invalid(format!("bbox {:?} must be finite with w, h > 0", self.bbox)));
        }
        if !self.pose().is_finite() {
            return Err(invalid("non-finite angle".into()));
        }
        if let Some(l) = self.l {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid(format!("head size {l} must be positive")));
            }
        }
        if self.nose.is_some_and(|n| !n.iter().all(|v| v.is_finite())) {
            return Err(invalid("non-finite nose".into()));
        }
        Ok(())
    }
}

/// A head annotated with its projected cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeLabel {
    pub image_id: String,
    pub bbox: [f64; 4],
    pub center: [f64; 2],
    /// Bit-index order.
    pub vertices: [[f64; 2]; 8],
    pub dims: RelDims,
}

impl CubeLabel {
    pub fn new(image_id: impl Into<String>, bbox: [f64; 4], cube: &Cube2D, dims: RelDims) -> Self {
        Self {
            image_id: image_id.into(),
            bbox,
            center: [cube.center.x, cube.center.y],
            vertices: cube.vertices.map(|p| [p.x, p.y]),
            dims,
        }
    }

    pub fn cube(&self) -> Cube2D {
        Cube2D {
            center: Point2::from(self.center),
            vertices: self.vertices.map(Point2::from),
        }
    }
}

/// Pose prediction for one image, optionally with the decoded geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosePrediction {
    pub image_id: String,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_size: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<[[f64; 2]; 8]>,
}

impl PosePrediction {
    pub fn new(image_id: impl Into<String>, pose: EulerPose) -> Self {
        Self {
            image_id: image_id.into(),
            yaw: pose.yaw,
            pitch: pose.pitch,
            roll: pose.roll,
            score: None,
            center: None,
            box_size: None,
            keypoints: None,
        }
    }

    pub fn pose(&self) -> EulerPose {
        EulerPose::new(self.yaw, self.pitch, self.roll)
    }
}

/// Converts a pose label into a cube label.
///
/// The cube is centered on the box center with edge `l` (default `min(w, h)`).
/// With a nose landmark, the whole cube is translated so that the center of
/// its front face (`center + w/2`) lands on the nose. Dims record the relative
/// projected diagonal lengths, which is what makes edge adjustment exact on
/// the label itself.
pub fn label_to_cube(label: &HeadLabel) -> Result<CubeLabel, DataError> {
    label.validate()?;
    let [_, _, w, h] = label.bbox;
    let l = label.l.unwrap_or(w.min(h));
    let axes = euler_to_axes(&label.pose().canonical(), l)?;
    let center = label.bbox_center();
    let mut cube = axes_to_cube(&axes, center);
    if let Some(nose) = label.nose {
        let anchor = center + axes.w / 2.0;
        cube = cube.translated(Point2::from(nose) - anchor);
    }
    Ok(CubeLabel::new(label.image_id.clone(), label.bbox, &cube, RelDims::from_axes(&axes)))
}

/// Rigid shift applied to a cube label's geometry (center, vertices, bbox).
pub fn shift_label(label: &CubeLabel, t: Vector2<f64>) -> CubeLabel {
    let cube = label.cube().translated(t);
    let [x, y, w, h] = label.bbox;
    CubeLabel::new(label.image_id.clone(), [x + t.x, y + t.y, w, h], &cube, label.dims)
}
