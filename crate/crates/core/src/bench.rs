//! Monte-Carlo benchmark over synthetic poses.
//!
//! Each sample draws a pose, builds its cube (or rendered maps), perturbs the
//! keypoints with isotropic Gaussian noise scaled by the edge length and
//! decodes them with every enabled decoder. Sample `i` uses its own ChaCha8
//! stream `(seed, i)`, and every noise level replays the same normal draws,
//! so reports are bitwise reproducible for any worker count.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Point2, Vector2};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::dataset::{render_targets, CubeLabel, EvalReport, RenderOptions, Subset};
use crate::decode::{decode_pose, DecodeConfig, NUM_KEYPOINTS};
use crate::error::{DataError, GeomError};
use crate::fit::{edge_adjust, rectify_orthoscale, RelDims};
use crate::projection::{cube_to_axes, cube_to_euler, delta_of_cube, euler_to_axes, axes_to_cube, Cube2D};
use crate::rotation::{rotation_distance, EulerPose};

pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = sample index";

const FOOTER: &str = "Synthetic isotropic keypoint noise; reproduces the direction of the \
edge-adjustment effect, not the magnitudes obtained with a trained network.";

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(format!(
                        "unknown {} {other:?} (expected {})",
                        stringify!($name),
                        [$($text),+].join("|")
                    )),
                }
            }
        }
    };
}

keyword_enum!(PoseRange { Full => "full", Narrow => "narrow" });
keyword_enum!(Decoder { Raw => "raw", EdgeAdjust => "edge_adjust", Rectify => "rectify" });
keyword_enum!(BenchMode { VertexNoise => "vertex-noise", MapRender => "map-render" });

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub pose_range: PoseRange,
    /// Keypoint noise as fractions of the edge length.
    pub noise_sigmas: Vec<f64>,
    pub decoders: Vec<Decoder>,
    pub mode: BenchMode,
    /// Cube edge length in px.
    pub l: f64,
    /// Square image side in px (map-render mode and cube placement).
    pub image_size: usize,
    pub stride: u32,
    /// Log-normal noise on the dims given to edge adjustment.
    pub dims_sigma: f64,
    /// Thresholds and margins for map-render mode.
    pub decode: DecodeConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_samples: 1000,
            pose_range: PoseRange::Full,
            noise_sigmas: vec![0.0, 0.01, 0.02, 0.04],
            decoders: vec![Decoder::Raw, Decoder::EdgeAdjust, Decoder::Rectify],
            mode: BenchMode::VertexNoise,
            l: 100.0,
            image_size: 320,
            stride: 4,
            dims_sigma: 0.0,
            decode: DecodeConfig::default(),
        }
    }
}

impl BenchConfig {
    /// Bench keys plus any decode keys, on top of the defaults.
    pub fn from_kv(kv: &mut KeyValues) -> Result<Self, DataError> {
        let mut c = Self::default();
        if let Some(v) = kv.take("seed")? {
            c.seed = v;
        }
        if let Some(v) = kv.take("n_samples")? {
            c.n_samples = v;
        }
        if let Some(v) = kv.take("pose_range")? {
            c.pose_range = v;
        }
        if let Some(v) = kv.take_list("noise_sigmas")? {
            c.noise_sigmas = v;
        }
        if let Some(v) = kv.take_list("decoders")? {
            c.decoders = v;
        }
        if let Some(v) = kv.take("mode")? {
            c.mode = v;
        }
        if let Some(v) = kv.take("l")? {
            c.l = v;
        }
        if let Some(v) = kv.take("image_size")? {
            c.image_size = v;
        }
        if let Some(v) = kv.take("stride")? {
            c.stride = v;
        }
        if let Some(v) = kv.take("dims_sigma")? {
            c.dims_sigma = v;
        }
        c.decode = DecodeConfig::from_kv(kv)?;
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
        let bad = |m: String| Err(DataError::Config(m));
        if self.n_samples == 0 {
            return bad("n_samples must be > 0".into());
        }
        if self.noise_sigmas.is_empty() || self.noise_sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad(format!("noise_sigmas must be non-empty and >= 0, got {:?}", self.noise_sigmas));
        }
        if self.decoders.is_empty() {
            return bad("at least one decoder is required".into());
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return bad(format!("l must be > 0, got {}", self.l));
        }
        if !(self.dims_sigma.is_finite() && self.dims_sigma >= 0.0) {
            return bad(format!("dims_sigma must be >= 0, got {}", self.dims_sigma));
        }
        if self.image_size == 0 || self.stride == 0 {
            return bad("image_size and stride must be > 0".into());
        }
        self.decode.validate()
    }
}

/// Fresh per-sample generator.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    lo + (hi - lo) * u
}

/// Full range: yaw and roll in (-180, 180), pitch in (-89, 89).
/// Narrow range: every angle in (-99, 99).
pub fn sample_pose(rng: &mut impl Rng, range: PoseRange) -> EulerPose {
    match range {
        PoseRange::Full => {
            let yaw = uniform(rng, -180.0, 180.0);
            let pitch = uniform(rng, -89.0, 89.0);
            let roll = uniform(rng, -180.0, 180.0);
            EulerPose::new(yaw, pitch, roll)
        }
        PoseRange::Narrow => {
            let yaw = uniform(rng, -99.0, 99.0);
            let pitch = uniform(rng, -99.0, 99.0);
            let roll = uniform(rng, -99.0, 99.0);
            EulerPose::new(yaw, pitch, roll)
        }
    }
}

/// Adds `N(0, (sigma_frac * l)^2)` to every vertex coordinate, drawn in
/// vertex order, x before y. `l` is recovered from the input cube.
pub fn perturb_cube(cube: &Cube2D, sigma_frac: f64, rng: &mut impl Rng) -> Result<Cube2D, GeomError> {
    let (axes, _) = cube_to_axes(cube)?;
    let sigma = sigma_frac * axes.l;
    let vertices = cube.vertices.map(|p| {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        p + Vector2::new(dx, dy) * sigma
    });
    Ok(Cube2D::from_vertices(vertices))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DeltaStats {
    pub checked: usize,
    /// Outside `[0, 2]` or off `1 - cos 2y` by more than 1e-9.
    pub violations: usize,
    pub singular: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub decoder: Decoder,
    pub sigma: f64,
    pub report: EvalReport,
    /// Mean relative-rotation angle, independent of the Euler parameterization.
    pub geodesic_mae: f64,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rng: String,
    pub seed: u64,
    pub n_samples: usize,
    pub mode: BenchMode,
    pub pose_range: PoseRange,
    pub cells: Vec<BenchCell>,
    pub delta: DeltaStats,
    /// Wall-clock time; not part of the reproducible output.
    pub runtime_seconds: f64,
    pub note: String,
}

impl BenchReport {
    pub fn cell(&self, decoder: Decoder, sigma: f64) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.decoder == decoder && c.sigma == sigma)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("decoder,sigma,yaw_mae,pitch_mae,roll_mae,mean_mae,n,errors\n");
        for c in &self.cells {
            let r = &c.report;
            writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                c.decoder.as_str(),
                c.sigma,
                r.yaw,
                r.pitch,
                r.roll,
                r.mean,
                r.count,
                c.errors
            )
            .expect("writing to a String");
        }
        s
    }

    /// JSON with the runtime zeroed, for byte-level comparisons.
    pub fn golden_json(&self) -> String {
        let mut r = self.clone();
        r.runtime_seconds = 0.0;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

enum DeltaOutcome {
    Ok,
    Violation,
    Singular,
}

struct SampleResult {
    /// Indexed `[sigma][decoder]`: yaw, pitch, roll and geodesic errors.
    errors: Vec<Vec<Option<[f64; 4]>>>,
    delta: DeltaOutcome,
}

fn check_delta(cube: &Cube2D, pose: &EulerPose) -> DeltaOutcome {
    match delta_of_cube(cube) {
        Err(_) => DeltaOutcome::Singular,
        Ok(d) => {
            let expect = 1.0 - (2.0 * pose.yaw.to_radians()).cos();
            if (0.0..=2.0).contains(&d) && (d - expect).abs() < 1e-9 {
                DeltaOutcome::Ok
            } else {
                DeltaOutcome::Violation
            }
        }
    }
}

fn noisy_dims(clean: RelDims, sigma: f64, z: [f64; 3]) -> RelDims {
    let v = clean.values();
    RelDims::from_lengths(std::array::from_fn(|k| v[k] * (sigma * z[k]).exp()))
}

fn decode_vertex(cube: &Cube2D, decoder: Decoder, dims: &RelDims) -> Result<EulerPose, GeomError> {
    match decoder {
        Decoder::Raw => cube_to_euler(cube),
        Decoder::EdgeAdjust => cube_to_euler(&edge_adjust(cube, dims)?),
        Decoder::Rectify => cube_to_euler(&rectify_orthoscale(cube)?.0),
    }
}

fn decode_maps(
    label: &CubeLabel,
    cfg: &BenchConfig,
    decoder: Decoder,
    sigma_px: f64,
    z: &[[f64; 2]; NUM_KEYPOINTS],
) -> Result<EulerPose, DataError> {
    let opts = RenderOptions {
        image_width: cfg.image_size,
        image_height: cfg.image_size,
        stride: cfg.stride,
        ..RenderOptions::default()
    };
    let mut maps = render_targets(std::slice::from_ref(label), &opts)?;
    let s = cfg.stride as f64;
    // Noise enters through the per-keypoint sub-cell offsets at each vertex's
    // own cell, so decoded keypoints move by exactly the drawn amount.
    let center = Point2::from(label.center) / s;
    let (cx, cy) = (center.x.floor() as usize, center.y.floor() as usize);
    for (i, zi) in z.iter().enumerate() {
        let vx = (cx as f32 + maps.kp_disp.get(cy, cx, 2 * i)) as usize;
        let vy = (cy as f32 + maps.kp_disp.get(cy, cx, 2 * i + 1)) as usize;
        for (k, zk) in zi.iter().enumerate() {
            let o = maps.kp_off.get(vy, vx, 2 * i + k);
            maps.kp_off.set(vy, vx, 2 * i + k, o + (zk * sigma_px / s) as f32);
        }
    }
    let dcfg = DecodeConfig {
        use_edge_adjust: decoder == Decoder::EdgeAdjust,
        use_rectify: decoder == Decoder::Rectify,
        ..cfg.decode.clone()
    };
    let dets = decode_pose(&maps, &dcfg)?;
    let det = dets
        .into_iter()
        .next()
        .ok_or_else(|| DataError::Shape("rendered head not detected".into()))?;
    Ok(det.pose?)
}

fn run_sample(cfg: &BenchConfig, index: usize) -> SampleResult {
    let mut rng = sample_rng(cfg.seed, index as u64);
    let pose = sample_pose(&mut rng, cfg.pose_range);
    let truth = pose.canonical();
    let z_dims: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let half = cfg.image_size as f64 / 2.0;
    let center = Point2::new(half, half);

    let axes = match euler_to_axes(&pose, cfg.l) {
        Ok(a) => a,
        Err(_) => {
            return SampleResult {
                errors: vec![vec![None; cfg.decoders.len()]; cfg.noise_sigmas.len()],
                delta: DeltaOutcome::Singular,
            }
        }
    };
    let clean = axes_to_cube(&axes, center);
    let delta = check_delta(&clean, &pose);
    let dims = noisy_dims(RelDims::from_axes(&axes), cfg.dims_sigma, z_dims);
    let diffs = |p: EulerPose| {
        let [y, pi, r] = p.angle_diffs(&truth);
        rotation_distance(&p, &truth).ok().map(|g| [y, pi, r, g])
    };

    let errors = cfg
        .noise_sigmas
        .iter()
        .map(|&sigma| match cfg.mode {
            BenchMode::VertexNoise => {
                let mut r = rng.clone();
                let noisy = perturb_cube(&clean, sigma, &mut r);
                cfg.decoders
                    .iter()
                    .map(|&d| {
                        let cube = noisy.as_ref().ok()?;
                        decode_vertex(cube, d, &dims).ok().and_then(diffs)
                    })
                    .collect()
            }
            BenchMode::MapRender => {
                let mut r = rng.clone();
                let z: [[f64; 2]; NUM_KEYPOINTS] =
                    std::array::from_fn(|_| [r.sample(StandardNormal), r.sample(StandardNormal)]);
                let label = CubeLabel::new(
                    format!("{index}"),
                    [half - cfg.l / 2.0, half - cfg.l / 2.0, cfg.l, cfg.l],
                    &clean,
                    dims,
                );
                cfg.decoders
                    .iter()
                    .map(|&d| decode_maps(&label, cfg, d, sigma * cfg.l, &z).ok().and_then(diffs))
                    .collect()
            }
        })
        .collect();
    SampleResult { errors, delta }
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport, DataError> {
    cfg.validate()?;
    let start = Instant::now();
    let samples: Vec<SampleResult> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| run_sample(cfg, i))
        .collect();

    let mut delta = DeltaStats::default();
    for s in &samples {
        match s.delta {
            DeltaOutcome::Ok => delta.checked += 1,
            DeltaOutcome::Violation => {
                delta.checked += 1;
                delta.violations += 1;
            }
            DeltaOutcome::Singular => delta.singular += 1,
        }
    }

    let mut cells = Vec::new();
    for (di, &decoder) in cfg.decoders.iter().enumerate() {
        for (si, &sigma) in cfg.noise_sigmas.iter().enumerate() {
            let mut sums = [0.0; 4];
            let (mut count, mut errors) = (0, 0);
            for s in &samples {
                match s.errors[si][di] {
                    Some(d) => {
                        for (acc, v) in sums.iter_mut().zip(d) {
                            *acc += v;
                        }
                        count += 1;
                    }
                    None => errors += 1,
                }
            }
            cells.push(BenchCell {
                decoder,
                sigma,
                report: EvalReport::from_sums([sums[0], sums[1], sums[2]], count, Subset::All),
                geodesic_mae: sums[3] / count.max(1) as f64,
                errors,
            });
        }
    }

    Ok(BenchReport {
        rng: RNG_NAME.into(),
        seed: cfg.seed,
        n_samples: cfg.n_samples,
        mode: cfg.mode,
        pose_range: cfg.pose_range,
        cells,
        delta,
        runtime_seconds: start.elapsed().as_secs_f64(),
        note: FOOTER.into(),
    })
}
