use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cubepose::bench::{run_benchmark, sample_pose, sample_rng, BenchConfig, PoseRange};
use cubepose::config::KeyValues;
use cubepose::dataset::{
    evaluate, label_to_cube, maps_from_tmap, maps_to_tmap, read_jsonl, read_tmap, render_targets, write_jsonl,
    write_tmap, CubeLabel, HeadLabel, Numbered, PosePrediction, RenderOptions, Subset,
};
use cubepose::decode::{decode_pose, DecodeConfig};
use cubepose::fit::{dual_hexahedron, dual_octahedron, parallelism_residual};
use cubepose::projection::delta_of_cube;
use cubepose::{cube_to_euler, edge_adjust, rectify_orthoscale, Cube2D, DataError, EulerPose, GeomError, InverseMethod};
use serde::de::DeserializeOwned;

const EXIT_PARTIAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

/// Head pose as a projected cube: label conversion, decoding, evaluation and benchmarks.
#[derive(Parser)]
#[command(name = "cubepose", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pose labels (labels.jsonl) to cube labels (cubes.jsonl).
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Exit with status 1 if any line fails.
        #[arg(long)]
        strict: bool,
    },
    /// Cube labels to pose predictions.
    Invert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Matrix)]
        method: Method,
        #[arg(long, value_enum, default_value_t = Adjust::None)]
        adjust: Adjust,
        #[arg(long)]
        strict: bool,
        /// Also write the (adjusted) cubes that were inverted.
        #[arg(long, value_name = "PATH")]
        dump_cubes: Option<PathBuf>,
    },
    /// Repairs cube labels by edge adjustment or rectification.
    Adjust {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Adjust::Edge)]
        mode: Adjust,
        #[arg(long)]
        strict: bool,
    },
    /// Renders cube labels into ground-truth maps (.tmap).
    Render {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 320)]
        width: usize,
        #[arg(long, default_value_t = 320)]
        height: usize,
        #[arg(long, default_value_t = 4)]
        stride: u32,
        /// 2 for one shared keypoint offset, 16 for one per keypoint.
        #[arg(long, default_value_t = 16)]
        kp_off_channels: usize,
    },
    /// Decodes a .tmap into pose predictions.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// key=value decode settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Image id for the predictions; defaults to the map's own metadata.
        #[arg(long)]
        image_id: Option<String>,
        #[arg(long)]
        strict: bool,
    },
    /// Mean absolute angle errors of predictions against ground truth.
    Eval {
        preds: PathBuf,
        gts: PathBuf,
        #[arg(long, default_value = "all")]
        subset: Subset,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long, default_value = "-")]
        output: PathBuf,
    },
    /// Synthetic Monte-Carlo benchmark.
    Bench {
        /// key=value bench and decode settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "n")]
        n_samples: Option<usize>,
        /// CSV destination; standard output when neither --csv nor --json is given.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Runs the noise-free invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Matrix,
    Ratios,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Adjust {
    None,
    Edge,
    Rectify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Number of records that failed without aborting the run.
type Outcome = Result<usize, Failure>;

fn open_input(path: &Path) -> Result<Box<dyn BufRead>, Failure> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(f)))
}

fn open_output(path: &Path) -> Result<Box<dyn Write>, Failure> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    let mut s = String::new();
    open_input(path)?.read_to_string(&mut s)?;
    Ok(s)
}

/// Parses a JSONL file, reporting and counting malformed lines.
fn read_records<T: DeserializeOwned>(path: &Path, failed: &mut usize) -> Result<Vec<Numbered<T>>, Failure> {
    let mut out = Vec::new();
    for r in read_jsonl(open_input(path)?)? {
        match r {
            Ok(n) => out.push(n),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                *failed += 1;
            }
        }
    }
    Ok(out)
}

fn warn_line(path: &Path, line: usize, e: impl std::fmt::Display) {
    eprintln!("{}: line {line}: {e}", path.display());
}

fn convert(input: &Path, output: &Path) -> Outcome {
    let mut failed = 0;
    let mut cubes = Vec::new();
    for n in read_records::<HeadLabel>(input, &mut failed)? {
        match label_to_cube(&n.value) {
            Ok(c) => cubes.push(c),
            Err(e) => {
                warn_line(input, n.line, e);
                failed += 1;
            }
        }
    }
    write_jsonl(open_output(output)?, &cubes)?;
    Ok(failed)
}

fn apply_adjust(label: &CubeLabel, mode: Adjust) -> Result<Cube2D, GeomError> {
    let cube = label.cube();
    match mode {
        Adjust::None => Ok(cube),
        Adjust::Edge => edge_adjust(&cube, &label.dims),
        Adjust::Rectify => Ok(rectify_orthoscale(&cube)?.0),
    }
}

fn invert(input: &Path, output: &Path, method: Method, adjust: Adjust, dump: Option<&Path>) -> Outcome {
    let method = match method {
        Method::Matrix => InverseMethod::Matrix,
        Method::Ratios => InverseMethod::Ratios,
    };
    let mut failed = 0;
    let (mut preds, mut dumped) = (Vec::new(), Vec::new());
    for n in read_records::<CubeLabel>(input, &mut failed)? {
        let result = apply_adjust(&n.value, adjust).and_then(|c| Ok((c, method.invert(&c)?)));
        match result {
            Ok((cube, pose)) => {
                preds.push(PosePrediction::new(n.value.image_id.clone(), pose));
                dumped.push(CubeLabel::new(n.value.image_id.clone(), n.value.bbox, &cube, n.value.dims));
            }
            Err(e) => {
                warn_line(input, n.line, e);
                failed += 1;
            }
        }
    }
    write_jsonl(open_output(output)?, &preds)?;
    if let Some(path) = dump {
        write_jsonl(open_output(path)?, &dumped)?;
    }
    Ok(failed)
}

fn adjust(input: &Path, output: &Path, mode: Adjust) -> Outcome {
    let mut failed = 0;
    let mut out = Vec::new();
    for n in read_records::<CubeLabel>(input, &mut failed)? {
        match apply_adjust(&n.value, mode) {
            Ok(c) => out.push(CubeLabel::new(n.value.image_id.clone(), n.value.bbox, &c, n.value.dims)),
            Err(e) => {
                warn_line(input, n.line, e);
                failed += 1;
            }
        }
    }
    write_jsonl(open_output(output)?, &out)?;
    Ok(failed)
}

fn render(input: &Path, output: &Path, opts: RenderOptions) -> Outcome {
    let mut failed = 0;
    let labels: Vec<CubeLabel> = read_records(input, &mut failed)?.into_iter().map(|n| n.value).collect();
    let maps = render_targets(&labels, &opts)?;
    let first = labels.first().map(|l| l.image_id.as_str());
    let image_id = first.filter(|id| labels.iter().all(|l| l.image_id == *id));
    let mut out = open_output(output)?;
    write_tmap(&mut out, &maps_to_tmap(&maps, image_id))?;
    Ok(failed)
}

fn load_decode_config(path: Option<&Path>) -> Result<DecodeConfig, Failure> {
    match path {
        None => Ok(DecodeConfig::default()),
        Some(p) => DecodeConfig::parse(&read_text(p)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
    }
}

fn decode(input: &Path, output: &Path, config: Option<&Path>, image_id: Option<String>) -> Outcome {
    let cfg = load_decode_config(config)?;
    let mut bytes = Vec::new();
    open_input(input)?.read_to_end(&mut bytes)?;
    let file = read_tmap(&bytes)?;
    let maps = maps_from_tmap(&file)?;
    let id = image_id
        .or_else(|| file.meta.get("image_id").and_then(|v| v.as_str()).map(str::to_owned))
        .unwrap_or_else(|| "0".into());

    let mut failed = 0;
    let mut preds = Vec::new();
    for (k, det) in decode_pose(&maps, &cfg)?.into_iter().enumerate() {
        // Detections come in score order; extra heads get a #k suffix.
        let det_id = if k == 0 { id.clone() } else { format!("{id}#{k}") };
        match det.pose {
            Ok(pose) => {
                let mut p = PosePrediction::new(det_id, pose);
                p.score = Some(det.head.score);
                p.center = Some([det.head.center.x, det.head.center.y]);
                p.box_size = Some([det.head.size.x, det.head.size.y]);
                p.keypoints = Some(det.keypoints.map(|q| [q.x, q.y]));
                preds.push(p);
            }
            Err(e) => {
                eprintln!("{}: detection {k}: {e}", input.display());
                failed += 1;
            }
        }
    }
    write_jsonl(open_output(output)?, &preds)?;
    Ok(failed)
}

fn poses(path: &Path) -> Result<Vec<(String, EulerPose)>, Failure> {
    let mut failed = 0;
    let rows: Vec<Numbered<PosePrediction>> = read_records(path, &mut failed)?;
    if failed > 0 {
        return Err(Failure::Io(format!("{}: {failed} malformed line(s)", path.display())));
    }
    Ok(rows
        .into_iter()
        .map(|n| (n.value.image_id.clone(), n.value.pose().canonical()))
        .collect())
}

fn eval(preds: &Path, gts: &Path, subset: Subset, format: Format, output: &Path) -> Outcome {
    let report = evaluate(&poses(preds)?, &poses(gts)?, subset)?;
    let mut out = open_output(output)?;
    match format {
        Format::Table => writeln!(out, "{report}")?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(io::Error::from)?)?,
    }
    out.flush()?;
    Ok(0)
}

fn bench(config: Option<&Path>, seed: Option<u64>, n: Option<usize>, csv: Option<&Path>, json: Option<&Path>) -> Outcome {
    let mut kv = match config {
        Some(p) => KeyValues::parse(&read_text(p)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => KeyValues::default(),
    };
    if let Some(s) = seed {
        kv.set("seed", s);
    }
    if let Some(n) = n {
        kv.set("n_samples", n);
    }
    let cfg = BenchConfig::from_kv(&mut kv)
        .and_then(|c| kv.finish().map(|_| c))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let report = run_benchmark(&cfg)?;

    let csv = csv.or(if json.is_none() { Some(Path::new("-")) } else { None });
    if let Some(p) = csv {
        let mut out = open_output(p)?;
        out.write_all(report.to_csv().as_bytes())?;
        out.flush()?;
    }
    if let Some(p) = json {
        let mut out = open_output(p)?;
        writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(io::Error::from)?)?;
        out.flush()?;
    }
    eprintln!(
        "{} samples, delta violations {}, {:.3} s. {}",
        report.n_samples, report.delta.violations, report.runtime_seconds, report.note
    );
    Ok(report.cells.iter().map(|c| c.errors).sum())
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    eprintln!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn selftest() -> Outcome {
    let n = 2000;
    let (mut round_trip, mut delta_err, mut duality, mut parallel) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    let mut rng = sample_rng(0, 0);
    for i in 0..n {
        let pose = sample_pose(&mut rng, PoseRange::Full);
        let label = HeadLabel {
            image_id: i.to_string(),
            bbox: [0.0, 0.0, 100.0, 100.0],
            yaw: pose.yaw,
            pitch: pose.pitch,
            roll: pose.roll,
            nose: None,
            l: None,
        };
        let mut run = || -> Result<(), DataError> {
            let c = label_to_cube(&label)?;
            let cube = c.cube();
            round_trip = round_trip.max(cube_to_euler(&cube)?.max_angle_diff(&pose.canonical()));
            let d = delta_of_cube(&cube)?;
            let expect = 1.0 - (2.0 * pose.yaw.to_radians()).cos();
            delta_err = delta_err.max(if (0.0..=2.0).contains(&d) { (d - expect).abs() } else { f64::INFINITY });
            duality = duality.max(dual_hexahedron(&dual_octahedron(&cube)).max_vertex_distance(&cube));
            parallel = parallel.max(parallelism_residual(&edge_adjust(&cube, &c.dims)?)?);
            Ok(())
        };
        if let Err(e) = run() {
            eprintln!("sample {i}: {e}");
            failures += 1;
        }
    }

    let mut ok = failures == 0;
    ok &= check("round trip", round_trip < 1e-6, format!("max error {round_trip:.3e} deg"));
    ok &= check("delta", delta_err < 1e-9, format!("max deviation {delta_err:.3e}"));
    ok &= check("duality", duality < 1e-9, format!("max vertex distance {duality:.3e} px"));
    ok &= check("parallelism", parallel < 1e-9, format!("max residual {parallel:.3e} rad"));

    let label = label_to_cube(&HeadLabel {
        image_id: "selftest".into(),
        bbox: [110.0, 100.0, 100.0, 100.0],
        yaw: 30.0,
        pitch: 20.0,
        roll: 10.0,
        nose: None,
        l: None,
    })?;
    let maps = render_targets(std::slice::from_ref(&label), &RenderOptions::default())?;
    let dets = decode_pose(&maps, &DecodeConfig::default())?;
    let err = match dets.first().map(|d| d.pose.clone()) {
        Some(Ok(p)) => p.max_angle_diff(&EulerPose::new(30.0, 20.0, 10.0)),
        _ => f64::INFINITY,
    };
    ok &= check("render/decode", dets.len() == 1 && err < 1e-3, format!("{} detection(s), error {err:.3e} deg", dets.len()));

    Ok(usize::from(!ok))
}

fn run(cli: Cli) -> (Outcome, bool) {
    match cli.command {
        Command::Convert { input, output, strict } => (convert(&input, &output), strict),
        Command::Invert { input, output, method, adjust, strict, dump_cubes } => {
            (invert(&input, &output, method, adjust, dump_cubes.as_deref()), strict)
        }
        Command::Adjust { input, output, mode, strict } => (adjust(&input, &output, mode), strict),
        Command::Render { input, output, width, height, stride, kp_off_channels } => {
            let opts = RenderOptions {
                image_width: width,
                image_height: height,
                stride,
                kp_off_channels,
                ..RenderOptions::default()
            };
            (render(&input, &output, opts), false)
        }
        Command::Decode { input, output, config, image_id, strict } => {
            (decode(&input, &output, config.as_deref(), image_id), strict)
        }
        Command::Eval { preds, gts, subset, format, output } => (eval(&preds, &gts, subset, format, &output), true),
        Command::Bench { config, seed, n_samples, csv, json } => {
            (bench(config.as_deref(), seed, n_samples, csv.as_deref(), json.as_deref()), false)
        }
        Command::Selftest => (selftest(), true),
    }
}

fn main() -> ExitCode {
    let (outcome, strict) = run(Cli::parse());
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} record(s) failed");
            ExitCode::from(if strict { EXIT_PARTIAL } else { 0 })
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
