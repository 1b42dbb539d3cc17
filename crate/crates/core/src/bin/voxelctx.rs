use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use voxelctx::coder::{
    decode_cloud_full, encode_cloud_with_report, BitstreamHeader, EncodeReport, Mode,
};
use voxelctx::dynamic::{decode_sequence_full, encode_sequence_with_report, CloudSequence};
use voxelctx::entropy::{
    child_crop_size, train_entropy, Architecture, EntropyModel, ModelKind, NeuralModel, NodeDataset,
};
use voxelctx::metrics::{self, bdbr, read_rd_csv_file, write_rd_csv, RdRow};
use voxelctx::nn::{TrainConfig, TrainReport};
use voxelctx::octree::Octree;
use voxelctx::pointcloud::{
    normalize, read_points_file, write_points_file, PointCloud, RigidTransform,
};
use voxelctx::refine::{train_refine, RefineDataset, RefineParams};
use voxelctx::Error;

#[derive(Parser)]
#[command(
    name = "voxelctx",
    version,
    about = "Octree point cloud geometry codec"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a cloud (or a sequence directory) into a bitstream.
    Encode(EncodeArgs),
    /// Reconstruct a cloud (or a sequence directory) from a bitstream.
    Decode(DecodeArgs),
    /// Train an entropy or refinement model on a corpus directory.
    Train(TrainArgs),
    /// Rate-distortion table over a sweep of truncation depths.
    Eval(EvalArgs),
    /// Bjontegaard delta rate between two RD tables.
    Bdbr(BdbrArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model file (required for neural kinds).
    #[arg(long)]
    model: Option<PathBuf>,
    /// uniform, adaptive, static or dynamic.
    #[arg(long)]
    model_kind: Option<ModelKind>,
    #[arg(long, default_value_t = 12)]
    context_bits: u8,
}

#[derive(Args)]
struct EncodeArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 9)]
    depth: u8,
    /// Coding depth; defaults to --depth.
    #[arg(long)]
    trunc: Option<u8>,
    #[command(flatten)]
    model: ModelArgs,
    /// Treat the input as a directory of numbered frames.
    #[arg(long)]
    sequence: bool,
    /// Pose file, one 3x4 row-major pose per line; stored in the bitstream.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    input: PathBuf,
    /// Output cloud file, or directory for sequences.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Refinement model file.
    #[arg(long)]
    refine: Option<PathBuf>,
    /// Keep sequence frames in the aligned frame even when poses are stored.
    #[arg(long)]
    aligned: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Entropy,
    Refine,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of clouds, or of sequence directories with --sequence.
    corpus: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Target::Entropy)]
    target: Target,
    /// static or dynamic (entropy target only).
    #[arg(long, default_value = "static")]
    model_kind: ModelKind,
    #[arg(long, default_value_t = 9)]
    depth: u8,
    /// Lowest refinement depth; refiners are trained for every depth up to --depth.
    #[arg(long)]
    trunc_min: Option<u8>,
    #[arg(long, default_value_t = 9)]
    crop_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Comma-separated conv widths.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    channels: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// Corpus entries are sequence directories (each may hold poses.txt).
    #[arg(long)]
    sequence: bool,
    /// Pose file applied when the corpus itself is one sequence.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Cap on training samples, drawn with the seed.
    #[arg(long)]
    max_samples: Option<usize>,
    /// Loss curve CSV; defaults to the output path with a .loss.csv suffix.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Cloud files or directories of clouds.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 9)]
    depth: u8,
    #[arg(long, default_value_t = 3)]
    trunc_min: u8,
    /// Highest truncation depth; defaults to --depth.
    #[arg(long)]
    trunc: Option<u8>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    refine: Option<PathBuf>,
}

#[derive(Args)]
struct BdbrArgs {
    anchor: PathBuf,
    test: PathBuf,
    /// Quality column: psnr_d1, psnr_d2 or cd.
    #[arg(long, default_value = "psnr_d1")]
    quality: String,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_TRAINING: u8 = 4;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_IO,
            Error::Parse { .. }
            | Error::Format(_)
            | Error::ModelMismatch(_)
            | Error::Truncated
            | Error::MissingPose => EXIT_FORMAT,
            Error::EmptyDataset => EXIT_TRAINING,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

/// Attaches the path to I/O and parse failures.
fn at<T>(path: &Path, r: voxelctx::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| fail(EXIT_IO, format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn write_cloud(path: &Path, cloud: &PointCloud) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| fail(EXIT_USAGE, "output path has no file name"))?;
    let tmp = tempfile::TempDir::new_in(dir)
        .map_err(|e| fail(EXIT_IO, format!("{}: {e}", dir.display())))?;
    let staged = tmp.path().join(name);
    at(path, write_points_file(&staged, cloud))?;
    std::fs::rename(&staged, path).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

/// Cloud files in `dir`, ordered by the number in their name, then by name.
fn cloud_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rd =
        std::fs::read_dir(dir).map_err(|e| fail(EXIT_IO, format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry
            .map_err(|e| fail(EXIT_IO, format!("{}: {e}", dir.display())))?
            .path();
        if p.is_file() && voxelctx::pointcloud::Format::from_path(&p).is_some() {
            files.push(p);
        }
    }
    files.sort_by_key(|p| {
        let name = p
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let digits: String = name.chars().filter(char::is_ascii_digit).collect();
        (digits.parse::<u64>().ok(), name)
    });
    Ok(files)
}

fn subdirs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rd =
        std::fs::read_dir(dir).map_err(|e| fail(EXIT_IO, format!("{}: {e}", dir.display())))?;
    let mut dirs: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn read_poses(path: &Path) -> CliResult<Vec<RigidTransform>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?;
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| fail(EXIT_FORMAT, format!("{}:{}: {e}", path.display(), n + 1)))?;
        let m: [f64; 12] = vals.try_into().map_err(|v: Vec<f64>| {
            fail(
                EXIT_FORMAT,
                format!(
                    "{}:{}: expected 12 values, got {}",
                    path.display(),
                    n + 1,
                    v.len()
                ),
            )
        })?;
        poses.push(at(path, RigidTransform::from_row_major(&m))?);
    }
    Ok(poses)
}

/// Frames of one sequence directory with optional poses.
fn read_sequence(dir: &Path, poses: Option<&Path>) -> CliResult<Vec<PointCloud>> {
    let files = cloud_files(dir)?;
    if files.is_empty() {
        return Err(fail(
            EXIT_USAGE,
            format!("{}: no point cloud files", dir.display()),
        ));
    }
    let mut frames = files
        .iter()
        .map(|f| at(f, read_points_file(f)))
        .collect::<CliResult<Vec<_>>>()?;
    if let Some(p) = poses {
        let poses = read_poses(p)?;
        if poses.len() != frames.len() {
            return Err(fail(
                EXIT_FORMAT,
                format!(
                    "{}: {} poses for {} frames",
                    p.display(),
                    poses.len(),
                    frames.len()
                ),
            ));
        }
        frames = frames
            .into_iter()
            .zip(poses)
            .map(|(f, p)| f.with_pose(p))
            .collect();
    }
    Ok(frames)
}

fn load_model(args: &ModelArgs) -> CliResult<EntropyModel> {
    let model = match (&args.model, args.model_kind) {
        (Some(path), kind) => {
            let m = at(path, EntropyModel::load(path))?;
            if let Some(k) = kind {
                if k != m.kind() {
                    return Err(fail(
                        EXIT_FORMAT,
                        format!(
                            "{}: holds a {} model, not {}",
                            path.display(),
                            m.kind().name(),
                            k.name()
                        ),
                    ));
                }
            }
            m
        }
        (None, Some(ModelKind::Uniform)) | (None, None) => EntropyModel::Uniform,
        (None, Some(ModelKind::Adaptive)) => EntropyModel::adaptive(args.context_bits)?,
        (None, Some(k)) => {
            return Err(fail(
                EXIT_USAGE,
                format!("--model-kind {} needs --model", k.name()),
            ))
        }
    };
    Ok(model)
}

fn load_refine(path: Option<&PathBuf>) -> CliResult<Option<RefineParams>> {
    path.map(|p| at(p, RefineParams::load(p))).transpose()
}

#[derive(Serialize)]
struct EncodeSummary {
    input: String,
    output: String,
    model_kind: &'static str,
    depth: u8,
    trunc: u8,
    total_bytes: usize,
    wall_time_s: f64,
    #[serde(flatten)]
    report: EncodeReport,
}

fn cmd_encode(a: EncodeArgs) -> CliResult<()> {
    let start = Instant::now();
    let trunc = a.trunc.unwrap_or(a.depth);
    let model = load_model(&a.model)?;
    let (bytes, report) = if a.sequence {
        let frames = read_sequence(&a.input, a.poses.as_deref())?;
        let seq = CloudSequence::new(&frames)?;
        encode_sequence_with_report(&seq, a.depth, trunc, &model, a.poses.is_some())?
    } else {
        if a.poses.is_some() {
            return Err(fail(EXIT_USAGE, "--poses needs --sequence"));
        }
        let cloud = at(&a.input, read_points_file(&a.input))?;
        encode_cloud_with_report(&cloud, a.depth, trunc, &model)?
    };
    write_atomic(&a.output, &bytes)?;
    let summary = EncodeSummary {
        input: a.input.display().to_string(),
        output: a.output.display().to_string(),
        model_kind: model.kind().name(),
        depth: a.depth,
        trunc,
        total_bytes: report.total_bytes(),
        wall_time_s: start.elapsed().as_secs_f64(),
        report,
    };
    match &a.report {
        Some(p) => write_json(p, &summary),
        None => {
            println!(
                "{} points, {} symbols, {} bytes, {:.4} bpp",
                summary.report.points,
                summary.report.symbols,
                summary.total_bytes,
                summary.report.bpp
            );
            Ok(())
        }
    }
}

fn cmd_decode(a: DecodeArgs) -> CliResult<()> {
    let bytes = std::fs::read(&a.input)
        .map_err(|e| fail(EXIT_IO, format!("{}: {e}", a.input.display())))?;
    let model = load_model(&a.model)?;
    let refine = load_refine(a.refine.as_ref())?;
    let (header, _) = at(&a.input, BitstreamHeader::read(&bytes))?;
    match header.mode {
        Mode::Static => {
            let d = at(&a.input, decode_cloud_full(&bytes, &model, refine.as_ref()))?;
            write_cloud(&a.output, &d.cloud)?;
            println!("{} points", d.cloud.len());
        }
        Mode::Dynamic => {
            let restore = !a.aligned && header.frames.as_ref().is_some_and(|f| f.poses.is_some());
            let d = at(
                &a.input,
                decode_sequence_full(&bytes, &model, refine.as_ref(), restore),
            )?;
            write_sequence(&a.output, &d.frames)?;
            println!("{} frames", d.frames.len());
        }
    }
    Ok(())
}

/// Writes `frame_NNNN.ply` files into a fresh directory, staged next to it.
fn write_sequence(dir: &Path, frames: &[PointCloud]) -> CliResult<()> {
    let io = |e: std::io::Error| fail(EXIT_IO, format!("{}: {e}", dir.display()));
    if dir.exists() && std::fs::read_dir(dir).map_err(io)?.next().is_some() {
        return Err(fail(
            EXIT_IO,
            format!("{}: output directory is not empty", dir.display()),
        ));
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::TempDir::new_in(parent).map_err(io)?;
    for (t, f) in frames.iter().enumerate() {
        let p = tmp.path().join(format!("frame_{t:04}.ply"));
        at(&p, write_points_file(&p, f))?;
    }
    let staged = tmp.keep();
    if dir.exists() {
        std::fs::remove_dir(dir).map_err(io)?;
    }
    std::fs::rename(&staged, dir).map_err(|e| {
        let _ = std::fs::remove_dir_all(&staged);
        io(e)
    })
}

#[derive(Serialize)]
struct TrainSummary {
    target: &'static str,
    model_kind: &'static str,
    samples: usize,
    epochs: usize,
    final_loss: f64,
    wall_time_s: f64,
}

fn training(r: voxelctx::Result<TrainReport>) -> CliResult<TrainReport> {
    r.map_err(|e| match e {
        Error::Io(_) => Failure::from(e),
        e => fail(EXIT_TRAINING, format!("training failed: {e}")),
    })
}

fn loss_csv(curves: &[(u8, &TrainReport)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["depth", "epoch", "loss"])
        .expect("in-memory write");
    for (depth, r) in curves {
        for (e, l) in r.loss_curve.iter().enumerate() {
            w.write_record([depth.to_string(), e.to_string(), format!("{l:.17e}")])
                .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory write")
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let start = Instant::now();
    if a.crop_size.is_multiple_of(2) || a.crop_size < 3 {
        return Err(fail(EXIT_USAGE, "--crop-size must be odd and at least 3"));
    }
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        seed: a.seed,
    };
    let arch = Architecture {
        channels: a.channels.clone(),
        hidden: a.hidden,
    };
    let sequences: Vec<Vec<PointCloud>> = if a.sequence {
        let dirs = subdirs(&a.corpus)?;
        if dirs.is_empty() {
            vec![read_sequence(&a.corpus, a.poses.as_deref())?]
        } else {
            dirs.iter()
                .map(|d| {
                    let p = d.join("poses.txt");
                    read_sequence(d, p.exists().then_some(p.as_path()))
                })
                .collect::<CliResult<_>>()?
        }
    } else {
        cloud_files(&a.corpus)?
            .iter()
            .map(|f| at(f, read_points_file(f)).map(|c| vec![c]))
            .collect::<CliResult<_>>()?
    };
    if sequences.is_empty() {
        return Err(fail(
            EXIT_TRAINING,
            format!("{}: empty corpus", a.corpus.display()),
        ));
    }
    let (bytes, curves, samples, kind) = match a.target {
        Target::Entropy => {
            let (mut model, data) = match a.model_kind {
                ModelKind::VoxelStatic => {
                    let trees = sequences
                        .iter()
                        .flatten()
                        .map(|c| {
                            let (norm, _) = normalize(c)?;
                            Octree::build(&norm, a.depth)
                        })
                        .collect::<voxelctx::Result<Vec<_>>>()?;
                    (
                        NeuralModel::new_static(&arch, a.crop_size, a.seed)?,
                        NodeDataset::from_octrees(&trees, a.crop_size)?,
                    )
                }
                ModelKind::VoxelDynamic => {
                    let seqs = sequences
                        .iter()
                        .map(|s| Ok(CloudSequence::new(s)?.octrees(a.depth)?.1))
                        .collect::<voxelctx::Result<Vec<_>>>()?;
                    (
                        NeuralModel::new_dynamic(&arch, a.crop_size, a.seed)?,
                        NodeDataset::from_sequences(
                            &seqs,
                            a.crop_size,
                            child_crop_size(a.crop_size),
                        )?,
                    )
                }
                k => {
                    return Err(fail(
                        EXIT_USAGE,
                        format!("cannot train a {} model", k.name()),
                    ))
                }
            };
            let data = match a.max_samples {
                Some(n) => data.subsample(n, a.seed),
                None => data,
            };
            let report = training(train_entropy(&mut model, &data, &cfg))?;
            let kind = model.kind().name();
            (
                EntropyModel::Neural(model).to_bytes(),
                vec![(a.depth, report)],
                data.len(),
                kind,
            )
        }
        Target::Refine => {
            let clouds: Vec<PointCloud> = sequences.into_iter().flatten().collect();
            let lo = a.trunc_min.unwrap_or(a.depth);
            if lo > a.depth {
                return Err(fail(EXIT_USAGE, "--trunc-min exceeds --depth"));
            }
            let mut params = RefineParams::new(a.crop_size)?;
            let mut curves = Vec::new();
            let mut samples = 0;
            for d in lo..=a.depth {
                params.init_depth(d, &arch, a.seed.wrapping_add(d as u64))?;
                let mut data = RefineDataset::from_clouds(&clouds, d, a.crop_size)?;
                if let Some(n) = a.max_samples {
                    if data.len() > n {
                        let mut rng = voxelctx::rng::Prng::new(a.seed);
                        rng.shuffle(&mut data.samples);
                        data.samples.truncate(n);
                    }
                }
                samples += data.len();
                curves.push((d, training(train_refine(&mut params, &data, &cfg))?));
            }
            (params.to_bytes(), curves, samples, "refine")
        }
    };
    write_atomic(&a.output, &bytes)?;
    let csv_path = a.loss_csv.clone().unwrap_or_else(|| {
        let mut s = a.output.clone().into_os_string();
        s.push(".loss.csv");
        PathBuf::from(s)
    });
    let refs: Vec<(u8, &TrainReport)> = curves.iter().map(|(d, r)| (*d, r)).collect();
    write_atomic(&csv_path, &loss_csv(&refs))?;
    let summary = TrainSummary {
        target: match a.target {
            Target::Entropy => "entropy",
            Target::Refine => "refine",
        },
        model_kind: kind,
        samples,
        epochs: a.epochs,
        final_loss: curves.last().map_or(f64::NAN, |(_, r)| r.final_loss),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    match &a.report {
        Some(p) => write_json(p, &summary),
        None => {
            println!(
                "{} samples, final loss {:.6}",
                summary.samples, summary.final_loss
            );
            Ok(())
        }
    }
}

/// One sweep point for one cloud: coded bits and normalized-space metrics.
fn eval_point(
    cloud: &PointCloud,
    depth: u8,
    trunc: u8,
    model: &EntropyModel,
    refine: Option<&RefineParams>,
) -> voxelctx::Result<(f64, f64, f64, f64)> {
    let (bytes, report) = encode_cloud_with_report(cloud, depth, trunc, model)?;
    let d = decode_cloud_full(&bytes, model, refine)?;
    let a = d.header.params.apply(cloud);
    let b = d.header.params.apply(&d.cloud);
    let cd = metrics::chamfer(&b, &a)?;
    let d1 = metrics::psnr_point(&b, &a, 1.0)?;
    let k = metrics::NORMAL_NEIGHBOURS;
    let d2 = if a.len() > k && b.len() > k {
        metrics::psnr_plane_estimated(&b, &a, 1.0)?
    } else {
        f64::NAN
    };
    Ok((report.payload_bytes as f64 * 8.0, cd, d1, d2))
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let top = a.trunc.unwrap_or(a.depth);
    if a.trunc_min == 0 || a.trunc_min > top || top > a.depth {
        return Err(fail(
            EXIT_USAGE,
            "need 1 <= --trunc-min <= --trunc <= --depth",
        ));
    }
    let model = load_model(&a.model)?;
    let refine = load_refine(a.refine.as_ref())?;
    let mut files = Vec::new();
    for p in &a.inputs {
        if p.is_dir() {
            files.extend(cloud_files(p)?);
        } else {
            files.push(p.clone());
        }
    }
    let clouds = files
        .iter()
        .map(|f| at(f, read_points_file(f)))
        .collect::<CliResult<Vec<_>>>()?;
    if clouds.is_empty() {
        return Err(fail(EXIT_USAGE, "no input clouds"));
    }
    let points: usize = clouds.iter().map(PointCloud::len).sum();
    let mut rows = Vec::new();
    for trunc in a.trunc_min..=top {
        let (mut bits, mut cd, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
        for (c, f) in clouds.iter().zip(&files) {
            let r = at(f, eval_point(c, a.depth, trunc, &model, refine.as_ref()))?;
            bits += r.0;
            cd += r.1;
            d1 += r.2;
            d2 += r.3;
        }
        let n = clouds.len() as f64;
        rows.push(RdRow {
            bpp: bits / points as f64,
            cd: cd / n,
            psnr_d1: d1 / n,
            psnr_d2: d2 / n,
        });
    }
    write_atomic(&a.output, &write_rd_csv(&rows)?)
}

#[derive(Serialize)]
struct BdbrSummary {
    quality: String,
    bdbr_percent: f64,
}

fn cmd_bdbr(a: BdbrArgs) -> CliResult<()> {
    let anchor = at(&a.anchor, read_rd_csv_file(&a.anchor))?;
    let test = at(&a.test, read_rd_csv_file(&a.test))?;
    let curve = |rows: &[RdRow], path: &Path| -> CliResult<_> {
        let mut c = at(path, RdRow::curve(rows, &a.quality))?;
        // lower CD is better; negate so quality increases with rate
        if a.quality == "cd" {
            c = at(
                path,
                metrics::RdCurve::new(
                    c.points()
                        .iter()
                        .map(|p| metrics::RdPoint {
                            quality: -p.quality,
                            ..*p
                        })
                        .collect(),
                ),
            )?;
        }
        Ok(c)
    };
    let v = bdbr(&curve(&anchor, &a.anchor)?, &curve(&test, &a.test)?)?;
    let summary = BdbrSummary {
        quality: a.quality.clone(),
        bdbr_percent: v,
    };
    match &a.report {
        Some(p) => write_json(p, &summary),
        None => {
            println!("BD-rate ({}): {v:.4}%", a.quality);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let r = match cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bdbr(a) => cmd_bdbr(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
