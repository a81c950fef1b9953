//! `grasp`: train, detect, inspect and evaluate from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 nothing
//! detected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use grasp_core::contours::contour_to_mask;
use grasp_core::descriptors::{train_model, TrainingSample};
use grasp_core::eval::{evaluate, ImageDetection};
use grasp_core::io::{self, pgm, AnnotationRecord, GarmentClass, Pgm, SyntheticSceneSpec};
use grasp_core::pipeline::{detect_grasp_points, entropy_peaks, vesselness_peaks};
use grasp_core::wrinkle::roughness_index;
use grasp_core::{Contour, DepthImage, DetectError, GarmentLabel, KnnModel, PipelineConfig};
use log::info;

#[derive(Parser)]
#[command(name = "grasp", version, about = "Grasp-point detection on garment depth images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a k-NN key-part model from annotated depth images.
    Train {
        #[arg(long)]
        annotations: PathBuf,
        /// Directory holding `<id>.pgm` or `<id>.pcd` for every record.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recognize the key part and print two grasp points.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Write entropy, vesselness and overlay images here.
        #[arg(long)]
        dump_maps: Option<PathBuf>,
    },
    /// Print roughness indices of the garment region.
    Wrinkle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Write synthetic scenes and their annotations.
    Synth {
        #[arg(long = "class", value_enum)]
        class: ClassArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Run detection over an annotated set and score it.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Pant,
    Shirt,
    Tshirt,
}

impl From<ClassArg> for GarmentClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Pant => GarmentClass::Pant,
            ClassArg::Shirt => GarmentClass::Shirt,
            ClassArg::Tshirt => GarmentClass::TShirt,
        }
    }
}

enum Failure {
    Data(anyhow::Error),
    /// Output already printed; nothing usable was found.
    NoDetection,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train { annotations, data, out } => train(&annotations, &data, &out).map_err(Failure::from),
        Command::Detect { model, input, dump_maps } => detect(&model, &input, dump_maps.as_deref()),
        Command::Wrinkle { input, mask } => wrinkle(&input, &mask).map_err(Failure::from),
        Command::Synth { class, seed, out, count } => synth(class.into(), seed, count, &out).map_err(Failure::from),
        Command::Eval { model, annotations, data, report } => {
            eval(&model, &annotations, &data, &report).map_err(Failure::from)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::NoDetection) => ExitCode::from(3),
    }
}

/// Reads a 16-bit millimeter PGM or an organized PCD.
fn load_depth(path: &Path) -> anyhow::Result<DepthImage> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let is_pcd = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pcd"));
    let img = if is_pcd {
        let cloud = io::parse_pcd(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        io::cloud_to_depth(&cloud)?
    } else {
        let pgm = Pgm::parse(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        pgm::depth_from_pgm(&pgm)?
    };
    Ok(img)
}

fn scene_path(data: &Path, id: &str) -> anyhow::Result<PathBuf> {
    for ext in ["pgm", "pcd"] {
        let p = data.join(format!("{id}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("no depth image for `{id}` in {}", data.display())
}

fn load_model(path: &Path) -> anyhow::Result<KnnModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    KnnModel::from_text(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn write_pgm(path: &Path, pgm: &Pgm) -> anyhow::Result<()> {
    fs::write(path, pgm.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn train(annotations: &Path, data: &Path, out: &Path) -> anyhow::Result<()> {
    let records = io::load_annotations(annotations)?;
    let cfg = PipelineConfig::default();
    let mut samples = Vec::with_capacity(records.len());
    for r in &records {
        let depth = load_depth(&scene_path(data, &r.id)?)?;
        let outline = Contour::from_pixels(&r.polygon).with_context(|| format!("polygon of `{}`", r.id))?;
        let region = contour_to_mask(&outline, depth.width(), depth.height());
        samples.push(TrainingSample { depth, region, label: r.label });
    }
    let (model, report) = train_model(&samples, &cfg.region)?;
    fs::write(out, model.to_text()).with_context(|| format!("writing {}", out.display()))?;
    println!("samples = {}", records.len());
    println!("used = {}", report.used);
    println!("skipped = {}", report.skipped);
    Ok(())
}

fn detect(model: &Path, input: &Path, dump_maps: Option<&Path>) -> Result<(), Failure> {
    let model = load_model(model)?;
    let depth = load_depth(input)?;
    let cfg = PipelineConfig::default();
    let result = detect_grasp_points(&depth, &model, &cfg);
    let mut out = String::new();
    let mut points = Vec::new();
    let outcome = match result {
        Ok(g) => {
            let _ = writeln!(out, "label = {}", g.detection.label);
            let _ = writeln!(out, "point_a = {} {}", g.point_a.x, g.point_a.y);
            let _ = writeln!(out, "point_b = {} {}", g.point_b.x, g.point_b.y);
            let _ = writeln!(out, "score = {:.6}", g.selection_score);
            let _ = writeln!(out, "votes = {}", g.detection.classification.winning_votes());
            let _ = writeln!(out, "distance = {:.6}", g.detection.classification.winning_distance());
            let _ = writeln!(out, "degraded = {}", g.degraded);
            let _ = writeln!(out, "seed = {} {}", g.detection.seed_peak.x, g.detection.seed_peak.y);
            let _ = writeln!(out, "candidates = {}", g.candidates.len());
            points = vec![g.point_a, g.point_b];
            Ok(())
        }
        Err(DetectError::NoKeyPart) => {
            let _ = writeln!(out, "label = {}", GarmentLabel::NoDetection);
            Err(Failure::NoDetection)
        }
        Err(DetectError::NoGraspCandidates { label }) => {
            let _ = writeln!(out, "label = {label}");
            let _ = writeln!(out, "point_a = none");
            let _ = writeln!(out, "point_b = none");
            Err(Failure::NoDetection)
        }
        Err(e) => return Err(Failure::Data(e.into())),
    };
    print!("{out}");
    if let Some(dir) = dump_maps {
        dump(dir, &depth, &cfg, &points)?;
    }
    outcome
}

fn dump(dir: &Path, depth: &DepthImage, cfg: &PipelineConfig, points: &[grasp_core::Pixel]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (w, h) = (depth.width(), depth.height());
    let (entropy, _) = entropy_peaks(depth, cfg)?;
    let (vessel, _) = vesselness_peaks(depth, cfg)?;
    write_pgm(&dir.join("entropy.pgm"), &pgm::scalar_to_pgm(w, h, &entropy.map.values))?;
    write_pgm(&dir.join("vesselness.pgm"), &pgm::scalar_to_pgm(w, h, &vessel.map.values))?;
    // Near surfaces bright on the overlay.
    let inverse: Vec<f64> = depth.data().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    write_pgm(&dir.join("overlay.pgm"), &pgm::overlay(&pgm::scalar_to_pgm(w, h, &inverse), points))?;
    info!("maps written to {}", dir.display());
    Ok(())
}

fn wrinkle(input: &Path, mask: &Path) -> anyhow::Result<()> {
    let depth = load_depth(input)?;
    let bytes = fs::read(mask).with_context(|| format!("reading {}", mask.display()))?;
    let garment = pgm::mask_from_pgm(&Pgm::parse(&bytes).with_context(|| format!("parsing {}", mask.display()))?);
    let cfg = PipelineConfig::default();
    let (entropy, _) = entropy_peaks(&depth, &cfg)?;
    let (vessel, _) = vesselness_peaks(&depth, &cfg)?;
    for (name, map) in [("vesselness", &vessel.map), ("entropy", &entropy.map)] {
        let r = roughness_index(map, &garment)?;
        println!("{name}.mean = {:.6}", r.mean);
        println!("{name}.entropy = {:.6}", r.entropy);
    }
    Ok(())
}

fn synth(class: GarmentClass, seed: u64, count: u64, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut records: Vec<AnnotationRecord> = Vec::new();
    let index = out.join("annotations.txt");
    if index.is_file() {
        records = io::load_annotations(&index)?;
    }
    for s in seed..seed + count {
        let scene = io::generate_scene(&SyntheticSceneSpec::new(class, s)).map_err(anyhow::Error::msg)?;
        let id = scene.annotation.id.clone();
        write_pgm(&out.join(format!("{id}.pgm")), &pgm::depth_to_pgm(&scene.depth))?;
        write_pgm(&out.join(&scene.annotation.mask_path), &pgm::mask_to_pgm(&scene.mask))?;
        records.retain(|r| r.id != id);
        records.push(scene.annotation);
        println!("{id}");
    }
    io::save_annotations(&index, &records)?;
    Ok(())
}

fn eval(model: &Path, annotations: &Path, data: &Path, report: &Path) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let records = io::load_annotations(annotations)?;
    let cfg = PipelineConfig::default();
    let mut detections = Vec::with_capacity(records.len());
    let mut size = None;
    for r in &records {
        let depth = load_depth(&scene_path(data, &r.id)?)?;
        let dims = (depth.width(), depth.height());
        if *size.get_or_insert(dims) != dims {
            bail!("`{}` is {}x{}, unlike the rest of the set", r.id, dims.0, dims.1);
        }
        let (label, points) = match detect_grasp_points(&depth, &model, &cfg) {
            Ok(g) => (g.detection.label, vec![g.point_a, g.point_b]),
            Err(DetectError::NoKeyPart) => (GarmentLabel::NoDetection, Vec::new()),
            Err(DetectError::NoGraspCandidates { label }) => (label, Vec::new()),
            Err(e) => return Err(e).with_context(|| format!("detecting on `{}`", r.id)),
        };
        info!("{}: {label} {points:?}", r.id);
        detections.push(ImageDetection { id: r.id.clone(), label, points });
    }
    let (w, h) = size.unwrap_or((640, 480));
    let result = evaluate(&detections, &records, w, h)?;
    fs::write(report, result.to_structured()).with_context(|| format!("writing {}", report.display()))?;
    print!("{}", result.to_table());
    Ok(())
}
