//! Edge adjustment of coarse cubes through the dual octahedron, and an
//! orthoscale rectifier.
//!
//! The face centroids of a hexahedron form its dual octahedron. Both maps are
//! linear, so they commute with the orthogonal projection and can be applied
//! directly in the image plane. Regulating the octahedron (antipodal symmetry
//! plus diagonal lengths) and restoring its dual yields a cube whose opposite
//! edges are exactly parallel.

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::GeomError;
use crate::projection::{
    axes_to_cube, centroid, cube_to_axes, polar_rows, vertex_sign, AxisProjection, Cube2D,
};

/// Half-diagonals shorter than this (px) are left unscaled by regulation.
pub const DIAG_EPS: f64 = 1e-9;

/// Lower bound applied to relative dims before normalization.
pub const DIMS_FLOOR: f64 = 1e-6;

/// Edges shorter than this fraction of the longest edge are ignored by
/// [`parallelism_residual`].
pub const EDGE_SKIP_REL: f64 = 1e-6;

/// Dual octahedron of a 2D cube: apexes ordered `+u, -u, +v, -v, +w, -w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Octa2D {
    pub center: Point2<f64>,
    pub apexes: [Point2<f64>; 6],
}

impl Octa2D {
    pub fn apex(&self, axis: usize, positive: bool) -> Point2<f64> {
        self.apexes[2 * axis + usize::from(!positive)]
    }

    /// `(apex(+k) - apex(-k)) / 2` for each axis.
    pub fn half_diagonals(&self) -> [Vector2<f64>; 3] {
        std::array::from_fn(|k| (self.apex(k, true) - self.apex(k, false)) / 2.0)
    }
}

/// Relative lengths of the three projected diagonals, normalized to mean 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct RelDims([f64; 3]);

impl RelDims {
    pub fn new(d: [f64; 3]) -> Result<Self, GeomError> {
        if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GeomError::InvalidDims(d));
        }
        let mean = d.iter().sum::<f64>() / 3.0;
        Ok(Self(d.map(|v| v / mean)))
    }

    pub fn unit() -> Self {
        Self([1.0; 3])
    }

    /// Dims matching the projected axis lengths of `axes`; regulation with
    /// these is exact on the cube they came from.
    pub fn from_axes(axes: &AxisProjection) -> Self {
        Self::from_lengths(axes.axes().map(|a| a.norm()))
    }

    /// Dims from raw lengths; entries are floored at [`DIMS_FLOOR`] times the
    /// largest one. All-zero input gives unit dims.
    pub fn from_lengths(lengths: [f64; 3]) -> Self {
        let max = lengths.iter().cloned().fold(0.0, f64::max);
        if !(max.is_finite() && max > 0.0) {
            return Self::unit();
        }
        Self::new(lengths.map(|v| v.max(DIMS_FLOOR * max))).unwrap_or_else(|_| Self::unit())
    }

    pub fn values(&self) -> [f64; 3] {
        self.0
    }
}

impl Default for RelDims {
    fn default() -> Self {
        Self::unit()
    }
}

impl TryFrom<[f64; 3]> for RelDims {
    type Error = GeomError;
    /// Values already normalized (as written by `into`) are kept verbatim so
    /// that serialization round trips are bit-exact.
    fn try_from(d: [f64; 3]) -> Result<Self, GeomError> {
        let dims = Self::new(d)?;
        let mean = d.iter().sum::<f64>() / 3.0;
        Ok(if (mean - 1.0).abs() < 1e-12 { Self(d) } else { dims })
    }
}

impl From<RelDims> for [f64; 3] {
    fn from(d: RelDims) -> Self {
        d.0
    }
}

/// Face centroids of the cube.
pub fn dual_octahedron(cube: &Cube2D) -> Octa2D {
    let center = centroid(&cube.vertices);
    let face = |axis: usize, positive: bool| {
        let sign = if positive { 1.0 } else { -1.0 };
        let pts: Vec<Point2<f64>> = (0..8)
            .filter(|&b| vertex_sign(b, axis) == sign)
            .map(|b| cube.vertices[b])
            .collect();
        centroid(&pts)
    };
    Octa2D {
        center,
        apexes: std::array::from_fn(|i| face(i / 2, i % 2 == 0)),
    }
}

/// Symmetrizes each diagonal about the apex centroid, then rescales the
/// half-diagonals to `d_k * s` with `s` the least-squares common scale
/// `sum(|a_k| d_k) / sum(d_k^2)`. Directions are kept; half-diagonals shorter
/// than [`DIAG_EPS`] pass through unscaled and do not enter `s`.
pub fn regulate_diagonals(octa: &Octa2D, dims: &RelDims) -> Octa2D {
    let center = centroid(&octa.apexes);
    let mut half = octa.half_diagonals();
    let d = dims.values();
    let lengths = half.map(|a| a.norm());

    let (num, den) = (0..3)
        .filter(|&k| lengths[k] > DIAG_EPS)
        .fold((0.0, 0.0), |(n, m), k| (n + lengths[k] * d[k], m + d[k] * d[k]));
    if den > 0.0 {
        let s = num / den;
        for k in 0..3 {
            if lengths[k] > DIAG_EPS {
                half[k] *= d[k] * s / lengths[k];
            }
        }
    }

    Octa2D {
        center,
        apexes: std::array::from_fn(|i| {
            let a = half[i / 2];
            if i % 2 == 0 {
                center + a
            } else {
                center - a
            }
        }),
    }
}

/// Restores the hexahedron whose face centroids are the (symmetric) apexes:
/// `vertex(b) = center + sum_k s_k(b) (apex(+k) - center)`.
pub fn dual_hexahedron(octa: &Octa2D) -> Cube2D {
    let c = octa.center;
    let a: [Vector2<f64>; 3] = std::array::from_fn(|k| octa.apex(k, true) - c);
    let vertices = std::array::from_fn(|b| {
        c + a[0] * vertex_sign(b, 0) + a[1] * vertex_sign(b, 1) + a[2] * vertex_sign(b, 2)
    });
    Cube2D { center: c, vertices }
}

/// Projects a coarse hexahedron onto the parallel-edge cubes.
pub fn edge_adjust(cube: &Cube2D, dims: &RelDims) -> Result<Cube2D, GeomError> {
    if !cube.is_finite() {
        return Err(GeomError::NonFinite("cube vertices"));
    }
    let octa = dual_octahedron(cube);
    if octa.half_diagonals().iter().all(|a| a.norm() <= DIAG_EPS) {
        return Err(GeomError::DegenerateCube("all octahedron apexes collapse"));
    }
    Ok(dual_hexahedron(&regulate_diagonals(&octa, dims)))
}

/// [`edge_adjust`] with each diagonal keeping its own length (symmetrization
/// only). Used when no dims estimate is available.
pub fn edge_adjust_symmetric(cube: &Cube2D) -> Result<Cube2D, GeomError> {
    let octa = dual_octahedron(cube);
    let dims = RelDims::from_lengths(octa.half_diagonals().map(|a| a.norm()));
    edge_adjust(cube, &dims)
}

/// Nearest cube satisfying the full projection constraint `A A^T = l^2 I`:
/// both singular values of `A` are replaced by their mean `l`, singular
/// vectors kept. Returns the rebuilt cube and `l`.
pub fn rectify_orthoscale(cube: &Cube2D) -> Result<(Cube2D, f64), GeomError> {
    let (axes, center) = cube_to_axes(cube)?;
    let (q, [s1, s2]) = polar_rows(&axes.matrix())?;
    let l = 0.5 * (s1 + s2);
    let rect = AxisProjection::from_matrix(&(q * l), l);
    Ok((axes_to_cube(&rect, center), l))
}

/// Largest angle (radians) between two edges of the same direction class.
/// Edges shorter than [`EDGE_SKIP_REL`] of the longest edge are skipped.
pub fn parallelism_residual(cube: &Cube2D) -> Result<f64, GeomError> {
    let classes: [[Vector2<f64>; 4]; 3] = std::array::from_fn(|k| {
        let bit = 1 << k;
        let mut edges = [Vector2::zeros(); 4];
        for (slot, b) in (0..8).filter(|b| b & bit == 0).enumerate() {
            edges[slot] = cube.vertices[b | bit] - cube.vertices[b];
        }
        edges
    });
    let longest = classes
        .iter()
        .flatten()
        .map(|e| e.norm())
        .fold(0.0, f64::max);
    if !(longest.is_finite() && longest > 0.0) {
        return Err(GeomError::DegenerateCube("all edges vanish"));
    }
    let skip = EDGE_SKIP_REL * longest;

    let mut worst: Option<f64> = None;
    for edges in &classes {
        let live: Vec<_> = edges.iter().filter(|e| e.norm() > skip).collect();
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                let (a, b) = (live[i], live[j]);
                let angle = a.perp(b).abs().atan2(a.dot(b));
                worst = Some(worst.map_or(angle, |w: f64| w.max(angle)));
            }
        }
    }
    worst.ok_or(GeomError::DegenerateCube("no edge pair defines a direction"))
}
