//! Closed-form conversions between Euler angles and orthogonally projected
//! cubes.
//!
//! A cube of edge `l` rotated by `R` projects onto the image plane through
//! the first two rows of `l * R`. The columns of that 2x3 matrix are the
//! projected edge vectors `u`, `v`, `w`, and they obey `A A^T = l^2 I`.
//!
//! Vertex `b` (0..8) sits at `center + s0 u/2 + s1 v/2 + s2 w/2` where `si`
//! is `+1` when bit `i` of `b` is set and `-1` otherwise.

use nalgebra::{Matrix2, Matrix2x3, Point2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeomError;
use crate::rotation::{euler_to_matrix, matrix_to_euler, EulerPose, Rotation3, GIMBAL_EPS};

/// Relative tolerance on `A A^T = l^2 I` for the ratio path.
pub const ORTHO_ACCEPT: f64 = 1e-3;

/// Floor on the ratio-path denominator, normalized by `l^4`.
pub const RATIO_EPS: f64 = 1e-9;

/// Smallest edge length accepted when recovering axes from vertices.
pub const MIN_EDGE: f64 = 1e-9;

/// Sign (+1/-1) of axis `axis` for vertex index `b`.
#[inline]
pub fn vertex_sign(b: usize, axis: usize) -> f64 {
    if (b >> axis) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// The three projected cube edges and the 3D edge length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisProjection {
    pub u: Vector2<f64>,
    pub v: Vector2<f64>,
    pub w: Vector2<f64>,
    pub l: f64,
}

impl AxisProjection {
    pub fn axes(&self) -> [Vector2<f64>; 3] {
        [self.u, self.v, self.w]
    }

    /// The 2x3 matrix with columns `u`, `v`, `w`.
    pub fn matrix(&self) -> Matrix2x3<f64> {
        Matrix2x3::from_columns(&[self.u, self.v, self.w])
    }

    pub fn from_matrix(a: &Matrix2x3<f64>, l: f64) -> Self {
        Self {
            u: a.column(0).into_owned(),
            v: a.column(1).into_owned(),
            w: a.column(2).into_owned(),
            l,
        }
    }

    /// Largest entry of `|A A^T - l^2 I|`, relative to `l^2`.
    pub fn constraint_residual(&self) -> f64 {
        let a = self.matrix();
        let l2 = self.l * self.l;
        (a * a.transpose() - Matrix2::identity() * l2).abs().max() / l2
    }
}

/// Eight projected vertices in bit-index order, plus their centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cube2D {
    pub center: Point2<f64>,
    pub vertices: [Point2<f64>; 8],
}

impl Cube2D {
    /// Builds a cube whose center is the vertex centroid.
    pub fn from_vertices(vertices: [Point2<f64>; 8]) -> Self {
        Self {
            center: centroid(&vertices),
            vertices,
        }
    }

    pub fn translated(&self, t: Vector2<f64>) -> Self {
        Self {
            center: self.center + t,
            vertices: self.vertices.map(|p| p + t),
        }
    }

    /// Uniform scaling about the cube center.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center;
        Self {
            center: c,
            vertices: self.vertices.map(|p| c + (p - c) * factor),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.center.iter().all(|v| v.is_finite())
            && self.vertices.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Largest vertex-wise distance to `other`.
    pub fn max_vertex_distance(&self, other: &Cube2D) -> f64 {
        self.vertices
            .iter()
            .zip(&other.vertices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn centroid(points: &[Point2<f64>]) -> Point2<f64> {
    let sum = points.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords);
    Point2::from(sum / points.len() as f64)
}

pub fn euler_to_axes(pose: &EulerPose, l: f64) -> Result<AxisProjection, GeomError> {
    if !(l.is_finite() && l > 0.0) {
        return Err(GeomError::InvalidEdgeLength(l));
    }
    let r = euler_to_matrix(pose)?;
    let m = r.matrix();
    Ok(AxisProjection {
        u: Vector2::new(m[(0, 0)], m[(1, 0)]) * l,
        v: Vector2::new(m[(0, 1)], m[(1, 1)]) * l,
        w: Vector2::new(m[(0, 2)], m[(1, 2)]) * l,
        l,
    })
}

pub fn axes_to_cube(axes: &AxisProjection, center: Point2<f64>) -> Cube2D {
    let half = axes.axes().map(|a| a * 0.5);
    let vertices = std::array::from_fn(|b| {
        center + half[0] * vertex_sign(b, 0) + half[1] * vertex_sign(b, 1) + half[2] * vertex_sign(b, 2)
    });
    Cube2D { center, vertices }
}

/// Projects the cube of edge `l` with orientation `pose`, centered at `center`.
pub fn euler_to_cube(pose: &EulerPose, center: Point2<f64>, l: f64) -> Result<Cube2D, GeomError> {
    Ok(axes_to_cube(&euler_to_axes(pose, l)?, center))
}

/// Recovers the projected axes from the face means of a (possibly noisy)
/// cube. Exact on perfect cubes; the least-squares axes otherwise.
pub fn cube_to_axes(cube: &Cube2D) -> Result<(AxisProjection, Point2<f64>), GeomError> {
    if !cube.is_finite() {
        return Err(GeomError::NonFinite("cube vertices"));
    }
    let center = centroid(&cube.vertices);
    let axis = |k: usize| {
        cube.vertices
            .iter()
            .enumerate()
            .fold(Vector2::zeros(), |acc, (b, p)| acc + (p - center) * vertex_sign(b, k))
            / 4.0
    };
    let (u, v, w) = (axis(0), axis(1), axis(2));
    // tr(A A^T) = 2 l^2 on the constraint manifold.
    let l = ((u.norm_squared() + v.norm_squared() + w.norm_squared()) / 2.0).sqrt();
    if l < MIN_EDGE {
        return Err(GeomError::DegenerateCube("recovered edge length vanishes"));
    }
    Ok((AxisProjection { u, v, w, l }, center))
}

fn check_projection(axes: &AxisProjection) -> Result<(), GeomError> {
    let r = axes.constraint_residual();
    if r > ORTHO_ACCEPT {
        return Err(GeomError::ProjectionViolated(format!(
            "|A A^T - l^2 I| / l^2 = {r:.3e} exceeds {ORTHO_ACCEPT:.0e}"
        )));
    }
    Ok(())
}

/// `delta` from the edge-ratio system with `k_i = x_i / y_i`:
///
/// ```text
/// delta = 2 k3^2 (1 + k1 k2) / ((k1 - k3)(k2 - k3))
///       = 2 w_x^2 (u_x v_x + u_y v_y) / (cross(u, w) cross(v, w))
/// ```
///
/// The second form multiplies the vertical components through, so it stays
/// defined when an edge is horizontal (e.g. |yaw| = 90, where `w_y = 0`).
/// It is singular only where the ratio system itself is 0/0.
fn delta_from_axes(axes: &AxisProjection) -> Result<f64, GeomError> {
    let AxisProjection { u, v, w, l } = *axes;
    let l4 = l.powi(4);
    let cross_uw = u.x * w.y - w.x * u.y;
    let cross_vw = v.x * w.y - w.x * v.y;
    let den = cross_uw * cross_vw;
    if (den / l4).abs() < RATIO_EPS {
        return Err(GeomError::RatioSingular("(k1 - k3)(k2 - k3) vanishes"));
    }
    Ok(2.0 * w.x * w.x * (u.x * v.x + u.y * v.y) / den)
}

/// `delta = 1 - cos(2 yaw)` computed from the edge ratios alone, in [0, 2].
pub fn delta_of_cube(cube: &Cube2D) -> Result<f64, GeomError> {
    let (axes, _) = cube_to_axes(cube)?;
    check_projection(&axes)?;
    checked_delta(&axes)
}

fn checked_delta(axes: &AxisProjection) -> Result<f64, GeomError> {
    let delta = delta_from_axes(axes)?;
    if !(-1e-6..=2.0 + 1e-6).contains(&delta) {
        return Err(GeomError::ProjectionViolated(format!(
            "delta = {delta} outside [0, 2]"
        )));
    }
    Ok(delta.clamp(0.0, 2.0))
}

/// Conditioning of the ratio path on unit-scale axes: the smallest of the
/// three vertical edge components and `|(k1 - k3)(k2 - k3)|`.
pub fn ratio_conditioning(cube: &Cube2D) -> Result<f64, GeomError> {
    let (axes, _) = cube_to_axes(cube)?;
    let min_y = axes
        .axes()
        .iter()
        .map(|a| (a.y / axes.l).abs())
        .fold(f64::INFINITY, f64::min);
    if min_y == 0.0 {
        return Ok(0.0);
    }
    let [k1, k2, k3] = axes.axes().map(|a| a.x / a.y);
    Ok(min_y.min(((k1 - k3) * (k2 - k3)).abs()))
}

/// Recovers the pose from the edge-ratio system.
///
/// `|yaw| = acos(1 - delta) / 2`; `sign(yaw) = sign(w_x)`. Because canonical
/// pitch has `cos p >= 0`, `cross(u, v) = l^2 cos p cos y` gives the sign of
/// `cos yaw`, which picks between `|yaw|` and `180 - |yaw|`. Pitch and roll
/// then follow from `w_y = -l cos y sin p` and `u`, `v`.
pub fn cube_to_euler_ratios(cube: &Cube2D) -> Result<EulerPose, GeomError> {
    let (axes, _) = cube_to_axes(cube)?;
    check_projection(&axes)?;
    let delta = checked_delta(&axes)?;
    let abs_yaw = 0.5 * (1.0 - delta).clamp(-1.0, 1.0).acos().to_degrees();

    let AxisProjection { u, v, w, l } = axes;
    let cy_abs = u.x.hypot(v.x) / l;
    if cy_abs < GIMBAL_EPS {
        return Err(GeomError::RatioSingular("|yaw| = 90, pitch and roll coupled"));
    }
    let cos_p_cos_y = (u.x * v.y - v.x * u.y) / (l * l);
    let s = if cos_p_cos_y >= 0.0 { 1.0 } else { -1.0 };
    let yaw_sign = if w.x >= 0.0 { 1.0 } else { -1.0 };
    let yaw = yaw_sign * if s > 0.0 { abs_yaw } else { 180.0 - abs_yaw };
    let pitch = (-s * w.y / l).atan2(s * cos_p_cos_y).to_degrees();
    let roll = (-s * v.x).atan2(s * u.x).to_degrees();
    Ok(EulerPose::new(yaw, pitch, roll).canonical())
}

/// Nearest matrix with orthonormal rows to a full-rank 2x3 `a` (its polar
/// factor `(a a^T)^{-1/2} a`), together with the two singular values of `a`.
pub fn polar_rows(a: &Matrix2x3<f64>) -> Result<(Matrix2x3<f64>, [f64; 2]), GeomError> {
    let s = a * a.transpose();
    let tr = s.trace();
    let det = s.determinant().max(0.0);
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let s1 = ((tr + disc) / 2.0).max(0.0).sqrt();
    let s2 = ((tr - disc) / 2.0).max(0.0).sqrt();
    if s1.is_nan() || s1 <= 0.0 || s2 <= MIN_EDGE * s1 {
        return Err(GeomError::ViewDegenerate(s1, s2));
    }
    // sqrt of a 2x2 SPD matrix: (S + sqrt(det) I) / sqrt(tr + 2 sqrt(det)).
    let root_det = det.sqrt();
    let sqrt_s = (s + Matrix2::identity() * root_det) / (tr + 2.0 * root_det).sqrt();
    let inv = sqrt_s
        .try_inverse()
        .ok_or(GeomError::ViewDegenerate(s1, s2))?;
    Ok((inv * a, [s1, s2]))
}

/// Recovers the pose through the rotation matrix: normalized rows of `A`,
/// projected onto the nearest orthonormal pair, completed by their cross
/// product. Full-range yaw and no ratio singularities.
pub fn cube_to_euler(cube: &Cube2D) -> Result<EulerPose, GeomError> {
    let (axes, _) = cube_to_axes(cube)?;
    let a = axes.matrix() / axes.l;
    let (q, _) = polar_rows(&a).map_err(|_| GeomError::DegenerateCube("rank-deficient projection"))?;
    let r0 = Vector3::new(q[(0, 0)], q[(0, 1)], q[(0, 2)]);
    let r1 = Vector3::new(q[(1, 0)], q[(1, 1)], q[(1, 2)]);
    let r = Rotation3::from_rows(r0, r1)?;
    Ok(matrix_to_euler(&r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InverseMethod {
    #[default]
    Matrix,
    Ratios,
}

impl InverseMethod {
    pub fn invert(self, cube: &Cube2D) -> Result<EulerPose, GeomError> {
        match self {
            InverseMethod::Matrix => cube_to_euler(cube),
            InverseMethod::Ratios => cube_to_euler_ratios(cube),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p2(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn axes_examples() {
        let a = euler_to_axes(&EulerPose::new(0.0, 0.0, 0.0), 2.0).unwrap();
        assert_relative_eq!(a.u, Vector2::new(2.0, 0.0));
        assert_relative_eq!(a.v, Vector2::new(0.0, 2.0));
        assert_relative_eq!(a.w, Vector2::new(0.0, 0.0));

        let a = euler_to_axes(&EulerPose::new(90.0, 0.0, 0.0), 2.0).unwrap();
        assert_relative_eq!(a.u, Vector2::new(0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(a.v, Vector2::new(0.0, 2.0), epsilon = 1e-15);
        assert_relative_eq!(a.w, Vector2::new(2.0, 0.0), epsilon = 1e-15);

        // Frozen from an independent Rx(p) Ry(y) Rz(r) product.
        let a = euler_to_axes(&EulerPose::new(30.0, 20.0, 10.0), 1.0).unwrap();
        assert_relative_eq!(a.u, Vector2::new(0.852868531952443, 0.331587955583267), epsilon = 1e-14);
        assert_relative_eq!(a.v, Vector2::new(-0.150383733180435, 0.895720991091381), epsilon = 1e-14);
        assert_relative_eq!(a.w, Vector2::new(0.5, -0.296198132726024), epsilon = 1e-14);
        assert!(a.constraint_residual() < 1e-15);

        let a = euler_to_axes(&EulerPose::new(0.0, -90.0, 0.0), 2.0).unwrap();
        assert_relative_eq!(a.w, Vector2::new(0.0, 2.0), epsilon = 1e-15);

        assert!(matches!(
            euler_to_axes(&EulerPose::default(), 0.0),
            Err(GeomError::InvalidEdgeLength(_))
        ));
        assert!(euler_to_axes(&EulerPose::default(), -1.0).is_err());
    }

    #[test]
    fn identity_cube_is_doubled_square() {
        let c = euler_to_cube(&EulerPose::default(), p2(0.0, 0.0), 2.0).unwrap();
        for corner in [p2(-1.0, -1.0), p2(1.0, -1.0), p2(-1.0, 1.0), p2(1.0, 1.0)] {
            let n = c.vertices.iter().filter(|v| (**v - corner).norm() < 1e-15).count();
            assert_eq!(n, 2, "{corner}");
        }
        assert_relative_eq!(centroid(&c.vertices), p2(0.0, 0.0));
    }

    #[test]
    fn cube_vertices_frozen() {
        let c = euler_to_cube(&EulerPose::new(30.0, 20.0, 10.0), p2(50.0, 50.0), 100.0).unwrap();
        let expected = [
            (-10.124239938600397, 3.444459302568774),
            (75.16261325664394, 36.603254860895504),
            (-25.162613256643922, 93.01655841170688),
            (60.12423993860041, 126.17535397003361),
            (39.87576006139959, -26.175353970033612),
            (125.16261325664392, 6.983441588293118),
            (24.837386743356067, 63.396745139104496),
            (110.1242399386004, 96.55554069743123),
        ];
        for (v, (x, y)) in c.vertices.iter().zip(expected) {
            assert_relative_eq!(*v, p2(x, y), epsilon = 1e-11);
        }
        // All four u-edges are the same vector.
        let u = c.vertices[1] - c.vertices[0];
        for b in [2, 4, 6] {
            assert_relative_eq!(c.vertices[b + 1] - c.vertices[b], u, epsilon = 1e-12);
        }
    }

    #[test]
    fn cube_to_axes_recovers_length() {
        let c = euler_to_cube(&EulerPose::new(30.0, 20.0, 10.0), p2(50.0, 50.0), 100.0).unwrap();
        let (axes, center) = cube_to_axes(&c).unwrap();
        assert_relative_eq!(axes.l, 100.0, epsilon = 1e-9);
        assert_relative_eq!(center, p2(50.0, 50.0), epsilon = 1e-12);
    }

    #[test]
    fn antisymmetric_face_noise_cancels() {
        let pose = EulerPose::new(-35.0, 12.0, 60.0);
        let c = euler_to_cube(&pose, p2(10.0, -4.0), 40.0).unwrap();
        let clean = cube_to_axes(&c).unwrap().0;
        // Same perturbation on both ends of every edge direction: a vertex and
        // its full antipode (b ^ 7) move together, so all face means shift
        // equally and cancel in the differences.
        let mut noisy = c;
        let d = [Vector2::new(0.3, -0.2), Vector2::new(-0.1, 0.4), Vector2::new(0.25, 0.05), Vector2::new(-0.2, -0.3)];
        for (b, dv) in d.iter().enumerate() {
            noisy.vertices[b] += dv;
            noisy.vertices[b ^ 7] += dv;
        }
        let got = cube_to_axes(&noisy).unwrap().0;
        assert_relative_eq!(got.u, clean.u, epsilon = 1e-12);
        assert_relative_eq!(got.v, clean.v, epsilon = 1e-12);
        assert_relative_eq!(got.w, clean.w, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cube_is_an_error() {
        let c = Cube2D::from_vertices([p2(3.0, 3.0); 8]);
        assert!(matches!(cube_to_axes(&c), Err(GeomError::DegenerateCube(_))));
        assert!(cube_to_euler(&c).is_err());
        let mut nan = c;
        nan.vertices[2].x = f64::NAN;
        assert!(cube_to_axes(&nan).is_err());
    }

    #[test]
    fn delta_examples() {
        let cube = |y, p, r| euler_to_cube(&EulerPose::new(y, p, r), p2(0.0, 0.0), 10.0).unwrap();
        assert_relative_eq!(delta_of_cube(&cube(0.0, 20.0, 10.0)).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(delta_of_cube(&cube(60.0, -10.0, 5.0)).unwrap(), 1.5, epsilon = 1e-12);
        assert_relative_eq!(delta_of_cube(&cube(45.0, 15.0, -20.0)).unwrap(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(delta_of_cube(&cube(90.0, 15.0, 20.0)).unwrap(), 2.0, epsilon = 1e-12);
        let d = delta_of_cube(&cube(89.999, 15.0, 20.0)).unwrap();
        assert_relative_eq!(d, 1.0 - (2.0 * 89.999f64.to_radians()).cos(), epsilon = 1e-9);
    }

    #[test]
    fn ratio_path_examples() {
        let c = euler_to_cube(&EulerPose::new(30.0, 20.0, 10.0), p2(5.0, 5.0), 50.0).unwrap();
        let e = cube_to_euler_ratios(&c).unwrap();
        assert!(e.max_angle_diff(&EulerPose::new(30.0, 20.0, 10.0)) < 1e-6);

        let c = euler_to_cube(&EulerPose::new(0.0, 20.0, 10.0), p2(5.0, 5.0), 50.0).unwrap();
        let e = cube_to_euler_ratios(&c).unwrap();
        assert!(e.yaw.abs() < 1e-6);

        // Back-facing: cos yaw < 0.
        let p = EulerPose::new(-140.0, 35.0, -70.0);
        let c = euler_to_cube(&p, p2(0.0, 0.0), 80.0).unwrap();
        assert!(cube_to_euler_ratios(&c).unwrap().max_angle_diff(&p) < 1e-6);
    }

    #[test]
    fn ratio_path_rejects_singular_and_inconsistent() {
        // Identity pose: w = 0, every ratio is 0/0.
        let c = euler_to_cube(&EulerPose::default(), p2(0.0, 0.0), 10.0).unwrap();
        assert!(matches!(cube_to_euler_ratios(&c), Err(GeomError::RatioSingular(_))));

        // Anisotropic stretch breaks A A^T = l^2 I.
        let c = euler_to_cube(&EulerPose::new(30.0, 20.0, 10.0), p2(0.0, 0.0), 10.0).unwrap();
        let mut s = c;
        for v in s.vertices.iter_mut() {
            v.x *= 1.2;
        }
        assert!(matches!(cube_to_euler_ratios(&s), Err(GeomError::ProjectionViolated(_))));
        assert!(matches!(delta_of_cube(&s), Err(GeomError::ProjectionViolated(_))));
        // The matrix path still decodes it.
        assert!(cube_to_euler(&s).is_ok());
    }

    #[test]
    fn matrix_path_examples() {
        let p = EulerPose::new(150.0, 30.0, -170.0);
        let c = euler_to_cube(&p, p2(12.0, 7.0), 80.0).unwrap();
        assert!(cube_to_euler(&c).unwrap().max_angle_diff(&p) < 1e-7);

        let c = euler_to_cube(&EulerPose::default(), p2(0.0, 0.0), 80.0).unwrap();
        assert!(cube_to_euler(&c).unwrap().max_angle_diff(&EulerPose::default()) < 1e-12);
    }

    #[test]
    fn polar_rows_matches_svd() {
        let a = Matrix2x3::new(1.3, -0.2, 0.4, 0.1, 0.9, -0.7);
        let (q, [s1, s2]) = polar_rows(&a).unwrap();
        let svd = a.svd(true, true);
        let expected = svd.u.unwrap() * svd.v_t.unwrap();
        assert_relative_eq!(q, expected, epsilon = 1e-12);
        let mut sv = [svd.singular_values[0], svd.singular_values[1]];
        sv.sort_by(|a, b| b.total_cmp(a));
        assert_relative_eq!(s1, sv[0], epsilon = 1e-12);
        assert_relative_eq!(s2, sv[1], epsilon = 1e-12);
    }

    fn pose_strategy() -> impl Strategy<Value = EulerPose> {
        (-180.0..180.0f64, -89.0..89.0f64, -180.0..180.0f64).prop_map(|(y, p, r)| EulerPose::new(y, p, r))
    }

    proptest! {
        #[test]
        fn forward_constraint_holds(pose in pose_strategy(), l in 0.01..1000.0f64) {
            let a = euler_to_axes(&pose, l).unwrap();
            prop_assert!(a.constraint_residual() < 1e-12);
        }

        #[test]
        fn centroid_is_center(pose in pose_strategy(), cx in -500.0..500.0f64, cy in -500.0..500.0f64) {
            let c = euler_to_cube(&pose, p2(cx, cy), 64.0).unwrap();
            prop_assert!((centroid(&c.vertices) - c.center).norm() < 1e-9);
        }

        #[test]
        fn axes_round_trip(pose in pose_strategy(), cx in -500.0..500.0f64, l in 0.5..600.0f64) {
            let axes = euler_to_axes(&pose, l).unwrap();
            let (back, center) = cube_to_axes(&axes_to_cube(&axes, p2(cx, -cx))).unwrap();
            prop_assert!((back.u - axes.u).norm() < 1e-9 * l.max(1.0));
            prop_assert!((back.w - axes.w).norm() < 1e-9 * l.max(1.0));
            prop_assert!((back.l - l).abs() < 1e-9 * l.max(1.0));
            prop_assert!((center - p2(cx, -cx)).norm() < 1e-9 * cx.abs().max(1.0));
        }

        #[test]
        fn matrix_path_round_trip(pose in pose_strategy(), l in prop::sample::select(vec![1.0, 64.0, 512.0])) {
            let c = euler_to_cube(&pose, p2(160.0, 120.0), l).unwrap();
            prop_assert!(cube_to_euler(&c).unwrap().max_angle_diff(&pose.canonical()) < 1e-6);
        }

        #[test]
        fn delta_matches_yaw(pose in pose_strategy()) {
            let c = euler_to_cube(&pose, p2(0.0, 0.0), 1.0).unwrap();
            if let Ok(d) = delta_of_cube(&c) {
                prop_assert!((0.0..=2.0).contains(&d));
                let expected = 1.0 - (2.0 * pose.yaw.to_radians()).cos();
                prop_assert!((d - expected).abs() < 1e-9, "{} vs {}", d, expected);
            }
        }

        #[test]
        fn yaw_sign_follows_w_x(pose in pose_strategy()) {
            prop_assume!(pose.yaw.abs() > 1e-6 && pose.yaw.abs() < 180.0 - 1e-6);
            let a = euler_to_axes(&pose, 1.0).unwrap();
            let c = axes_to_cube(&a, p2(0.0, 0.0));
            let e = cube_to_euler(&c).unwrap();
            prop_assert_eq!(e.yaw.signum(), a.w.x.signum());
        }

        #[test]
        fn invariant_under_translation_and_scale(
            pose in pose_strategy(),
            tx in -300.0..300.0f64,
            ty in -300.0..300.0f64,
            k in 0.1..10.0f64,
        ) {
            let c = euler_to_cube(&pose, p2(100.0, 80.0), 50.0).unwrap();
            let base = cube_to_euler(&c).unwrap();
            let moved = cube_to_euler(&c.translated(Vector2::new(tx, ty)).scaled(k)).unwrap();
            prop_assert!(base.max_angle_diff(&moved) < 1e-9);
            if ratio_conditioning(&c).unwrap() > 1e-3 {
                let a = cube_to_euler_ratios(&c).unwrap();
                let b = cube_to_euler_ratios(&c.translated(Vector2::new(tx, ty)).scaled(k)).unwrap();
                prop_assert!(a.max_angle_diff(&b) < 1e-9);
            }
        }

        #[test]
        fn ratio_and_matrix_paths_agree(pose in pose_strategy()) {
            let c = euler_to_cube(&pose, p2(0.0, 0.0), 100.0).unwrap();
            prop_assume!(ratio_conditioning(&c).unwrap() > 1e-3);
            let a = cube_to_euler_ratios(&c).unwrap();
            let b = cube_to_euler(&c).unwrap();
            prop_assert!(a.max_angle_diff(&b) < 1e-4, "{:?} vs {:?}", a, b);
        }
    }
}
