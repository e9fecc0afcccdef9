//! Decoding dense head/keypoint maps into detections, cubes and poses.
//!
//! Pipeline per detection: 3x3 max-pool peaks on the center heatmap, center
//! offset correction, keypoints from displacement proposals snapped to nearby
//! keypoint-heatmap peaks, sub-cell keypoint offsets, edge adjustment, and
//! the matrix-path inverse.

use nalgebra::{Point2, Vector2};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::KeyValues;
use crate::error::{DataError, GeomError};
use crate::fit::{edge_adjust, edge_adjust_symmetric, rectify_orthoscale, RelDims};
use crate::projection::{cube_to_euler, Cube2D};
use crate::rotation::EulerPose;

pub const NUM_KEYPOINTS: usize = 8;

/// Dense row-major `H x W x C` map.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Grid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f32>) -> Result<Self, DataError> {
        let [height, width, channels] = shape;
        if data.len() != height * width * channels {
            return Err(DataError::Shape(format!(
                "shape {shape:?} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }
}

/// Network-style output maps at stride `s` (input px per cell).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorMaps {
    pub stride: u32,
    /// `H x W x 1`, scores in [0, 1].
    pub center_heat: Grid,
    /// `H x W x 2`, cell fractions.
    pub center_off: Grid,
    /// `H x W x 2`, box width/height in map units.
    pub box_size: Grid,
    /// `H x W x 8`, one channel per cube vertex.
    pub kp_heat: Grid,
    /// `H x W x 2` (shared) or `H x W x 16` (per keypoint), cell fractions.
    pub kp_off: Grid,
    /// `H x W x 16`, vertex cell minus center cell, map units.
    pub kp_disp: Grid,
    /// `H x W x 3` relative diagonal lengths, if predicted.
    pub dims: Option<Grid>,
}

impl TensorMaps {
    pub fn zeros(height: usize, width: usize, stride: u32, kp_off_channels: usize) -> Self {
        Self {
            stride,
            center_heat: Grid::zeros(height, width, 1),
            center_off: Grid::zeros(height, width, 2),
            box_size: Grid::zeros(height, width, 2),
            kp_heat: Grid::zeros(height, width, NUM_KEYPOINTS),
            kp_off: Grid::zeros(height, width, kp_off_channels),
            kp_disp: Grid::zeros(height, width, 2 * NUM_KEYPOINTS),
            dims: Some(Grid::zeros(height, width, 3)),
        }
    }

    pub fn height(&self) -> usize {
        self.center_heat.height
    }

    pub fn width(&self) -> usize {
        self.center_heat.width
    }

    /// Checks shapes, channel counts, stride and heatmap score range.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.stride == 0 {
            return Err(DataError::Shape("stride must be >= 1".into()));
        }
        let (h, w) = (self.height(), self.width());
        let mut expect = vec![
            ("center_heat", &self.center_heat, 1),
            ("center_off", &self.center_off, 2),
            ("box_size", &self.box_size, 2),
            ("kp_heat", &self.kp_heat, NUM_KEYPOINTS),
            ("kp_disp", &self.kp_disp, 2 * NUM_KEYPOINTS),
        ];
        if let Some(d) = &self.dims {
            expect.push(("dims", d, 3));
        }
        for (name, g, c) in expect {
            if g.shape() != [h, w, c] {
                return Err(DataError::Shape(format!("{name}: expected {:?}, got {:?}", [h, w, c], g.shape())));
            }
        }
        let [kh, kw, kc] = self.kp_off.shape();
        if [kh, kw] != [h, w] || !(kc == 2 || kc == 2 * NUM_KEYPOINTS) {
            return Err(DataError::Shape(format!("kp_off: expected [{h}, {w}, 2|16], got {:?}", self.kp_off.shape())));
        }
        for (name, g) in [("center_heat", &self.center_heat), ("kp_heat", &self.kp_heat)] {
            if g.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(DataError::Shape(format!("{name}: scores must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    fn kp_offset(&self, y: usize, x: usize, keypoint: usize) -> Vector2<f64> {
        let c = if self.kp_off.channels == 2 { 0 } else { 2 * keypoint };
        Vector2::new(self.kp_off.get(y, x, c) as f64, self.kp_off.get(y, x, c + 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub score: f32,
}

/// Local maxima of one channel under a 3x3 window.
///
/// A cell is kept when its score exceeds `threshold` and no neighbor beats
/// it; an equal neighbor suppresses it only if that neighbor comes first in
/// row-major order. Output is sorted by score (descending), then row-major.
pub fn nms_peaks(heat: &Grid, channel: usize, threshold: f32, max_peaks: usize) -> Vec<Peak> {
    let (h, w) = (heat.height, heat.width);
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let s = heat.get(y, x, channel);
            if s.is_nan() || s <= threshold {
                continue;
            }
            let idx = y * w + x;
            let mut keep = true;
            'window: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let n_idx = ny * w + nx;
                    if n_idx == idx {
                        continue;
                    }
                    let n = heat.get(ny, nx, channel);
                    if n > s || (n == s && n_idx < idx) {
                        keep = false;
                        break 'window;
                    }
                }
            }
            if keep {
                peaks.push(Peak { x, y, score: s });
            }
        }
    }
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.y * w + a.x).cmp(&(b.y * w + b.x))));
    peaks.truncate(max_peaks);
    peaks
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub center_threshold: f32,
    pub kp_threshold: f32,
    pub margin_frac: f64,
    pub max_det: usize,
    pub use_heatmap_kp: bool,
    pub use_displacement_kp: bool,
    pub use_edge_adjust: bool,
    pub use_rectify: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            center_threshold: 0.3,
            kp_threshold: 0.1,
            margin_frac: 0.25,
            max_det: 32,
            use_heatmap_kp: true,
            use_displacement_kp: true,
            use_edge_adjust: true,
            use_rectify: false,
        }
    }
}

impl DecodeConfig {
    /// Consumes the decode keys from `kv`, starting from the defaults.
    pub fn from_kv(kv: &mut KeyValues) -> Result<Self, DataError> {
        let mut c = Self::default();
        if let Some(v) = kv.take("center_threshold")? {
            c.center_threshold = v;
        }
        if let Some(v) = kv.take("kp_threshold")? {
            c.kp_threshold = v;
        }
        if let Some(v) = kv.take("margin_frac")? {
            c.margin_frac = v;
        }
        if let Some(v) = kv.take("max_det")? {
            c.max_det = v;
        }
        if let Some(v) = kv.take("use_heatmap_kp")? {
            c.use_heatmap_kp = v;
        }
        if let Some(v) = kv.take("use_displacement_kp")? {
            c.use_displacement_kp = v;
        }
        if let Some(v) = kv.take("use_edge_adjust")? {
            c.use_edge_adjust = v;
        }
        if let Some(v) = kv.take("use_rectify")? {
            c.use_rectify = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut kv = KeyValues::parse(text)?;
        let c = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !self.use_heatmap_kp && !self.use_displacement_kp {
            return Err(DataError::Config("at least one keypoint source must be enabled".into()));
        }
        if !(self.margin_frac.is_finite() && self.margin_frac >= 0.0) {
            return Err(DataError::Config(format!("margin_frac must be >= 0, got {}", self.margin_frac)));
        }
        Ok(())
    }
}

/// A detected head center with its box, before keypoint decoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadCenter {
    pub cell: (usize, usize),
    /// Input-image px.
    pub center: Point2<f64>,
    pub score: f64,
    /// Box width and height, input-image px.
    pub size: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub head: HeadCenter,
    /// Input-image px, in cube vertex order.
    pub keypoints: [Point2<f64>; NUM_KEYPOINTS],
    pub raw_cube: Cube2D,
    pub adjusted_cube: Option<Cube2D>,
    pub pose: Result<EulerPose, GeomError>,
}

pub fn decode_centers(maps: &TensorMaps, threshold: f32, max_det: usize) -> Vec<HeadCenter> {
    let s = maps.stride as f64;
    nms_peaks(&maps.center_heat, 0, threshold, max_det)
        .into_iter()
        .map(|p| {
            let off = Vector2::new(maps.center_off.get(p.y, p.x, 0) as f64, maps.center_off.get(p.y, p.x, 1) as f64);
            let size = Vector2::new(maps.box_size.get(p.y, p.x, 0) as f64, maps.box_size.get(p.y, p.x, 1) as f64);
            HeadCenter {
                cell: (p.x, p.y),
                center: Point2::new((p.x as f64 + off.x) * s, (p.y as f64 + off.y) * s),
                score: p.score as f64,
                size: size * s,
            }
        })
        .collect()
}

fn keypoint_peaks(maps: &TensorMaps, cfg: &DecodeConfig) -> Vec<Vec<Peak>> {
    if !cfg.use_heatmap_kp {
        return vec![Vec::new(); NUM_KEYPOINTS];
    }
    (0..NUM_KEYPOINTS)
        .map(|i| nms_peaks(&maps.kp_heat, i, cfg.kp_threshold, usize::MAX))
        .collect()
}

/// Eight keypoints (input px) for one detected head.
pub fn decode_keypoints(head: &HeadCenter, maps: &TensorMaps, cfg: &DecodeConfig) -> [Point2<f64>; NUM_KEYPOINTS] {
    keypoints_with_peaks(head, maps, cfg, &keypoint_peaks(maps, cfg))
}

fn keypoints_with_peaks(
    head: &HeadCenter,
    maps: &TensorMaps,
    cfg: &DecodeConfig,
    peaks: &[Vec<Peak>],
) -> [Point2<f64>; NUM_KEYPOINTS] {
    let s = maps.stride as f64;
    let (cx, cy) = head.cell;
    let (w, h) = (maps.width(), maps.height());

    // Search window and snap radius in map units.
    let size = head.size / s;
    let margin = cfg.margin_frac * size.x.max(size.y);
    let c = head.center / s;
    let (x0, x1) = (c.x - size.x / 2.0 - margin, c.x + size.x / 2.0 + margin);
    let (y0, y1) = (c.y - size.y / 2.0 - margin, c.y + size.y / 2.0 + margin);
    let in_window = |p: &&Peak| {
        let (px, py) = (p.x as f64, p.y as f64);
        px >= x0 && px <= x1 && py >= y0 && py <= y1
    };

    std::array::from_fn(|i| {
        let dx = maps.kp_disp.get(cy, cx, 2 * i) as f64;
        let dy = maps.kp_disp.get(cy, cx, 2 * i + 1) as f64;
        let proposal = (
            (cx as f64 + dx).round().clamp(0.0, (w - 1) as f64) as usize,
            (cy as f64 + dy).round().clamp(0.0, (h - 1) as f64) as usize,
        );

        let mut candidates = peaks[i].iter().filter(in_window);
        let fused = if !cfg.use_heatmap_kp {
            proposal
        } else if !cfg.use_displacement_kp {
            // Highest-scoring peak in the window; peaks are sorted by score.
            candidates.next().map_or(proposal, |p| (p.x, p.y))
        } else {
            let dist = |p: &Peak| {
                let (ex, ey) = (p.x as f64 - proposal.0 as f64, p.y as f64 - proposal.1 as f64);
                ex.hypot(ey)
            };
            candidates
                .filter(|p| dist(p) <= margin)
                .fold(None::<(&Peak, f64)>, |best, p| {
                    let d = dist(p);
                    match best {
                        Some((_, bd)) if bd <= d => best,
                        _ => Some((p, d)),
                    }
                })
                .map_or(proposal, |(p, _)| (p.x, p.y))
        };

        let off = maps.kp_offset(fused.1, fused.0, i);
        Point2::new((fused.0 as f64 + off.x) * s, (fused.1 as f64 + off.y) * s)
    })
}

fn dims_at(maps: &TensorMaps, (x, y): (usize, usize)) -> Option<RelDims> {
    let g = maps.dims.as_ref()?;
    RelDims::new([0, 1, 2].map(|c| g.get(y, x, c) as f64)).ok()
}

fn finish_detection(
    head: HeadCenter,
    maps: &TensorMaps,
    cfg: &DecodeConfig,
    peaks: &[Vec<Peak>],
) -> Detection {
    let keypoints = keypoints_with_peaks(&head, maps, cfg, peaks);
    let raw_cube = Cube2D::from_vertices(keypoints);
    let adjusted = (|| {
        let mut cube = raw_cube;
        if cfg.use_edge_adjust {
            cube = match dims_at(maps, head.cell) {
                Some(d) => edge_adjust(&cube, &d)?,
                None => edge_adjust_symmetric(&cube)?,
            };
        }
        if cfg.use_rectify {
            cube = rectify_orthoscale(&cube)?.0;
        }
        Ok::<_, GeomError>(cube)
    })();
    let (adjusted_cube, pose) = match adjusted {
        Ok(c) => (Some(c), cube_to_euler(&c)),
        Err(e) => (None, Err(e)),
    };
    Detection { head, keypoints, raw_cube, adjusted_cube, pose }
}

/// Full decode: centers, keypoints, cube adjustment and pose for every head.
///
/// Detections are processed in parallel; output order is the center-peak
/// order (score, then row-major) regardless of the thread count. A head
/// whose cube is degenerate keeps its error in [`Detection::pose`].
pub fn decode_pose(maps: &TensorMaps, cfg: &DecodeConfig) -> Result<Vec<Detection>, DataError> {
    maps.validate()?;
    cfg.validate()?;
    let heads = decode_centers(maps, cfg.center_threshold, cfg.max_det);
    if heads.is_empty() {
        return Ok(Vec::new());
    }
    let peaks = keypoint_peaks(maps, cfg);
    Ok(heads
        .into_par_iter()
        .map(|h| finish_detection(h, maps, cfg, &peaks))
        .collect())
}
