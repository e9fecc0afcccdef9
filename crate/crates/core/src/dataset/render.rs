use nalgebra::Point2;

use super::CubeLabel;
use crate::decode::{Grid, TensorMaps, NUM_KEYPOINTS};
use crate::error::DataError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub image_width: usize,
    pub image_height: usize,
    pub stride: u32,
    /// 2 (one offset shared by all keypoints) or 16 (one per keypoint).
    pub kp_off_channels: usize,
    /// Minimum box IoU tolerated when sizing the Gaussian radius.
    pub min_overlap: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            image_width: 320,
            image_height: 320,
            stride: 4,
            kp_off_channels: 2 * NUM_KEYPOINTS,
            min_overlap: 0.7,
        }
    }
}

/// CenterNet heatmap radius for a box of `height x width` map cells: the
/// largest corner displacement that keeps IoU with the true box at or above
/// `min_overlap` (smallest root of the three corner cases).
pub fn gaussian_radius(height: f64, width: f64, min_overlap: f64) -> f64 {
    let m = min_overlap;
    let (sum, area) = (height + width, height * width);

    let b1 = sum;
    let c1 = area * (1.0 - m) / (1.0 + m);
    let r1 = (b1 + (b1 * b1 - 4.0 * c1).sqrt()) / 2.0;

    let b2 = 2.0 * sum;
    let c2 = (1.0 - m) * area;
    let r2 = (b2 + (b2 * b2 - 16.0 * c2).sqrt()) / 2.0;

    let a3 = 4.0 * m;
    let b3 = -2.0 * m * sum;
    let c3 = (m - 1.0) * area;
    let r3 = (b3 + (b3 * b3 - 4.0 * a3 * c3).sqrt()) / 2.0;

    r1.min(r2).min(r3)
}

/// Splats a Gaussian with integer `radius` centered on `cell`, keeping the
/// element-wise max with existing values. The center cell gets exactly 1.
fn splat(grid: &mut Grid, channel: usize, cell: (usize, usize), radius: usize) {
    let [h, w, _] = grid.shape();
    let sigma = (2 * radius + 1) as f64 / 6.0;
    let (cx, cy) = (cell.0 as isize, cell.1 as isize);
    let r = radius as isize;
    for y in (cy - r).max(0)..=(cy + r).min(h as isize - 1) {
        for x in (cx - r).max(0)..=(cx + r).min(w as isize - 1) {
            let d2 = ((x - cx).pow(2) + (y - cy).pow(2)) as f64;
            let g = (-d2 / (2.0 * sigma * sigma)).exp() as f32;
            let (yu, xu) = (y as usize, x as usize);
            if g > grid.get(yu, xu, channel) {
                grid.set(yu, xu, channel, g);
            }
        }
    }
}

/// Integer cell and the in-bounds flag of an input-pixel point.
fn cell_of(p: Point2<f64>, stride: f64, w: usize, h: usize) -> ((usize, usize), bool) {
    let (mx, my) = ((p.x / stride).floor(), (p.y / stride).floor());
    let inside = mx >= 0.0 && my >= 0.0 && mx < w as f64 && my < h as f64;
    let cx = mx.clamp(0.0, (w - 1) as f64) as usize;
    let cy = my.clamp(0.0, (h - 1) as f64) as usize;
    ((cx, cy), inside)
}

/// Ground-truth maps for a set of cube labels.
///
/// Map size is `ceil(image / stride)`. Points outside the map are clamped to
/// the border cell; their heat splat is skipped but the written offset still
/// reaches the exact point. Gaussian radius: CenterNet `gaussian_radius` of
/// the label box in map units, truncated, at least 1 cell; `sigma = (2r+1)/6`.
pub fn render_targets(labels: &[CubeLabel], opts: &RenderOptions) -> Result<TensorMaps, DataError> {
    if opts.image_width == 0 || opts.image_height == 0 || opts.stride == 0 {
        return Err(DataError::Shape(format!(
            "image {}x{} at stride {} is empty",
            opts.image_width, opts.image_height, opts.stride
        )));
    }
    if !(opts.kp_off_channels == 2 || opts.kp_off_channels == 2 * NUM_KEYPOINTS) {
        return Err(DataError::Shape(format!("kp_off channels must be 2 or 16, got {}", opts.kp_off_channels)));
    }
    let s = opts.stride as usize;
    let (w, h) = (opts.image_width.div_ceil(s), opts.image_height.div_ceil(s));
    let sf = s as f64;
    let mut maps = TensorMaps::zeros(h, w, opts.stride, opts.kp_off_channels);

    for label in labels {
        let cube = label.cube();
        let [_, _, bw, bh] = label.bbox;
        let radius = (gaussian_radius(bh / sf, bw / sf, opts.min_overlap).max(0.0) as usize).max(1);

        let (cc, inside) = cell_of(cube.center, sf, w, h);
        if inside {
            splat(&mut maps.center_heat, 0, cc, radius);
        }
        let (x, y) = cc;
        maps.center_off.set(y, x, 0, (cube.center.x / sf - x as f64) as f32);
        maps.center_off.set(y, x, 1, (cube.center.y / sf - y as f64) as f32);
        maps.box_size.set(y, x, 0, (bw / sf) as f32);
        maps.box_size.set(y, x, 1, (bh / sf) as f32);
        if let Some(dims) = maps.dims.as_mut() {
            for (c, d) in label.dims.values().into_iter().enumerate() {
                dims.set(y, x, c, d as f32);
            }
        }

        for (i, v) in cube.vertices.iter().enumerate() {
            let (vc, v_inside) = cell_of(*v, sf, w, h);
            if v_inside {
                splat(&mut maps.kp_heat, i, vc, radius);
            }
            let ch = if opts.kp_off_channels == 2 { 0 } else { 2 * i };
            maps.kp_off.set(vc.1, vc.0, ch, (v.x / sf - vc.0 as f64) as f32);
            maps.kp_off.set(vc.1, vc.0, ch + 1, (v.y / sf - vc.1 as f64) as f32);
            maps.kp_disp.set(y, x, 2 * i, vc.0 as f32 - x as f32);
            maps.kp_disp.set(y, x, 2 * i + 1, vc.1 as f32 - y as f32);
        }
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{label_to_cube, HeadLabel};
    use crate::decode::{decode_pose, DecodeConfig};

    fn head(id: &str, bbox: [f64; 4], pose: (f64, f64, f64)) -> CubeLabel {
        label_to_cube(&HeadLabel {
            image_id: id.into(),
            bbox,
            yaw: pose.0,
            pitch: pose.1,
            roll: pose.2,
            nose: None,
            l: None,
        })
        .unwrap()
    }

    #[test]
    fn radius_matches_reference_values() {
        // Frozen from the reference CenterNet implementation.
        assert!((gaussian_radius(25.0, 25.0, 0.7) - 6.83300132670378).abs() < 1e-12);
        assert!((gaussian_radius(10.0, 20.0, 0.7) - 3.6779253585061333).abs() < 1e-12);
    }

    #[test]
    fn empty_labels_give_zero_maps() {
        let maps = render_targets(&[], &RenderOptions::default()).unwrap();
        assert_eq!(maps.center_heat.shape(), [80, 80, 1]);
        assert!(maps.center_heat.data().iter().all(|&v| v == 0.0));
        assert!(maps.kp_heat.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_size_is_an_error() {
        let opts = RenderOptions { image_width: 0, ..Default::default() };
        assert!(render_targets(&[], &opts).is_err());
    }

    #[test]
    fn peaks_are_exactly_one() {
        let label = head("a", [110.0, 100.0, 100.0, 100.0], (30.0, 20.0, 10.0));
        let maps = render_targets(std::slice::from_ref(&label), &RenderOptions::default()).unwrap();
        assert_eq!(maps.center_heat.get(150 / 4, 160 / 4, 0), 1.0);
        for (i, v) in label.vertices.iter().enumerate() {
            let (x, y) = ((v[0] / 4.0).floor() as usize, (v[1] / 4.0).floor() as usize);
            assert_eq!(maps.kp_heat.get(y, x, i), 1.0);
        }
        maps.validate().unwrap();
    }

    #[test]
    fn single_head_round_trip() {
        let label = head("a", [110.0, 100.0, 100.0, 100.0], (30.0, 20.0, 10.0));
        let maps = render_targets(std::slice::from_ref(&label), &RenderOptions::default()).unwrap();
        let dets = decode_pose(&maps, &DecodeConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        for (k, v) in d.keypoints.iter().zip(&label.vertices) {
            assert!((k - Point2::from(*v)).norm() < 1e-3);
        }
        let pose = d.pose.clone().unwrap();
        assert!(pose.max_angle_diff(&crate::rotation::EulerPose::new(30.0, 20.0, 10.0)) < 1e-3);
    }

    #[test]
    fn out_of_bounds_vertices_are_clamped() {
        let label = head("edge", [-20.0, -20.0, 60.0, 60.0], (10.0, 0.0, 0.0));
        let maps = render_targets(&[label], &RenderOptions::default()).unwrap();
        maps.validate().unwrap();
        // Vertex 0 lies left of and above the image: no heat at the clamped corner.
        assert_eq!(maps.kp_heat.get(0, 0, 0), 0.0);
        assert!(maps.kp_off.get(0, 0, 0) < 0.0);
    }
}
