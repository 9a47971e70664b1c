use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ddfuse_core::evidence::{fuse_weighted_detailed, Frame, MassFunction, Subset};
use ddfuse_core::matching::{match_detections, score_matrix};
use ddfuse_core::metrics::{evaluate, pr_curve_csv, EvalConfig, EvalReport};
use ddfuse_core::pipeline::{fuse_dataset, pair_scenes, FusionConfig, Scene};
use ddfuse_core::sim::{generate, ScenarioConfig};

use crate::error::CliError;
use crate::formats::{read_json, BoxFormat, DetectionFile, GroundTruthFile};
use crate::report::{pr_curve_svg, to_json, write_all_atomic, write_json, ReportFile};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SENSOR_A_FILE: &str = "sensor_a.json";
pub const SENSOR_B_FILE: &str = "sensor_b.json";

fn out_err(e: std::io::Error) -> CliError {
    CliError::io("<output stream>", e)
}

pub struct FuseOutput {
    pub file: DetectionFile,
    pub log: Vec<String>,
}

/// Fuses two detection files scene by scene.
pub fn fuse_files(
    a: &DetectionFile,
    b: &DetectionFile,
    format: BoxFormat,
    cfg: &FusionConfig,
    workers: usize,
) -> Result<FuseOutput, CliError> {
    let pairs = pair_scenes(a.to_scenes(format)?, b.to_scenes(format)?)?;
    let start = Instant::now();
    let fused = fuse_dataset(&pairs, cfg, workers)?;
    let elapsed = start.elapsed();

    let mut log: Vec<String> = fused
        .iter()
        .map(|s| {
            format!(
                "{}: {} pairs, {} a-only, {} b-only",
                s.image_id, s.pairs, s.a_only, s.b_only
            )
        })
        .collect();
    log.push(format!(
        "fused {} scenes in {:.3} ms",
        fused.len(),
        elapsed.as_secs_f64() * 1e3
    ));
    Ok(FuseOutput {
        file: DetectionFile::from_fused("fused", &fused, &a.image_sizes()),
        log,
    })
}

pub fn cmd_fuse(
    a: &Path,
    b: &Path,
    out: &Path,
    format: BoxFormat,
    cfg: &FusionConfig,
    workers: usize,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let a: DetectionFile = read_json(a)?;
    let b: DetectionFile = read_json(b)?;
    let fused = fuse_files(&a, &b, format, cfg, workers)?;
    write_json(out, &fused.file)?;
    for line in &fused.log {
        writeln!(stderr, "{line}").map_err(out_err)?;
    }
    Ok(())
}

/// Evaluates a detection file against ground truth. Every detection scene
/// must have a ground-truth scene.
pub fn evaluate_files(
    dets: &DetectionFile,
    gts: &GroundTruthFile,
    format: BoxFormat,
    cfg: &EvalConfig,
) -> Result<EvalReport, CliError> {
    let known: HashSet<&str> = gts.scenes.iter().map(|s| s.image_id.as_str()).collect();
    let unknown: Vec<&str> = dets
        .scenes
        .iter()
        .map(|s| s.image_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::Pairing(format!(
            "detection scenes without ground truth: {}",
            unknown.join(", ")
        )));
    }
    let detections: Vec<_> = dets
        .to_scenes(format)?
        .into_iter()
        .flat_map(|s| s.detections)
        .collect();
    Ok(evaluate(&detections, &gts.to_boxes(format)?, cfg)?)
}

pub struct CurveOutputs<'a> {
    pub csv: Option<&'a Path>,
    pub svg: Option<&'a Path>,
}

fn curve_files<'a>(report: &EvalReport, outputs: &CurveOutputs<'a>) -> Vec<(&'a Path, Vec<u8>)> {
    let mut files = Vec::new();
    if let Some(path) = outputs.csv {
        files.push((path, pr_curve_csv(report).into_bytes()));
    }
    if let Some(path) = outputs.svg {
        files.push((path, pr_curve_svg(report).into_bytes()));
    }
    files
}

fn write_files(files: &[(&Path, Vec<u8>)]) -> Result<(), CliError> {
    let borrowed: Vec<(&Path, &[u8])> = files.iter().map(|(p, b)| (*p, b.as_slice())).collect();
    write_all_atomic(&borrowed)
}

pub fn cmd_eval(
    dets: &Path,
    gts: &Path,
    format: BoxFormat,
    cfg: &EvalConfig,
    out: Option<&Path>,
    curves: &CurveOutputs,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let dets: DetectionFile = read_json(dets)?;
    let gts: GroundTruthFile = read_json(gts)?;
    let report = evaluate_files(&dets, &gts, format, cfg)?;
    let json = to_json(&ReportFile::from(&report));
    let mut files = curve_files(&report, curves);
    if let Some(path) = out {
        files.push((path, json.clone().into_bytes()));
    }
    write_files(&files)?;
    stdout.write_all(json.as_bytes()).map_err(out_err)
}

pub fn cmd_pr_curve(report: &Path, curves: &CurveOutputs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file: ReportFile = read_json(report)?;
    let report = file.to_report();
    write_files(&curve_files(&report, curves))?;
    if curves.csv.is_none() && curves.svg.is_none() {
        stdout.write_all(pr_curve_csv(&report).as_bytes()).map_err(out_err)?;
    }
    Ok(())
}

/// The three files written by `simulate`, in memory.
pub struct SimulatedFiles {
    pub ground_truth: GroundTruthFile,
    pub sensor_a: DetectionFile,
    pub sensor_b: DetectionFile,
}

pub fn simulate_files(cfg: &ScenarioConfig) -> Result<SimulatedFiles, CliError> {
    let data = generate(cfg)?;
    let size = (cfg.image_width_px, cfg.image_height_px);
    let ids: Vec<String> = data.scenes.iter().map(|s| s.image_id.clone()).collect();
    Ok(SimulatedFiles {
        ground_truth: GroundTruthFile::from_boxes(&ids, &data.ground_truth(), size),
        sensor_a: DetectionFile::from_scenes(&cfg.sensor_a.name, &data.scenes_a(), size),
        sensor_b: DetectionFile::from_scenes(&cfg.sensor_b.name, &data.scenes_b(), size),
    })
}

pub fn cmd_simulate(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    workers: usize,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Numeric(format!("thread pool: {e}")))?;
    let files = pool.install(|| simulate_files(cfg))?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let paths = [GROUND_TRUTH_FILE, SENSOR_A_FILE, SENSOR_B_FILE].map(|f| out_dir.join(f));
    write_files(&[
        (&paths[0], to_json(&files.ground_truth).into_bytes()),
        (&paths[1], to_json(&files.sensor_a).into_bytes()),
        (&paths[2], to_json(&files.sensor_b).into_bytes()),
    ])?;
    let targets: usize = files.ground_truth.scenes.iter().map(|s| s.boxes.len()).sum();
    writeln!(
        stderr,
        "simulated {} scenes, {} targets (seed {})",
        files.ground_truth.scenes.len(),
        targets,
        cfg.seed
    )
    .map_err(out_err)
}

fn print_scene_matches(a: &Scene, b: &Scene, cfg: &FusionConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let mc = cfg.match_config();
    let scores = score_matrix(&a.detections, &b.detections, &mc.similarity, mc.metric);
    let result = match_detections(&a.detections, &b.detections, &mc)?;
    let mut text = format!("scene {}\n", a.image_id);
    text.push_str(&format!("  {:?} scores ({} x {}):\n", mc.metric, scores.rows(), scores.cols()));
    for i in 0..scores.rows() {
        let row: Vec<String> = scores.row(i).iter().map(|v| format!("{v:>9.4}")).collect();
        text.push_str(&format!("    a[{i}] {}\n", row.join("")));
    }
    for p in &result.pairs {
        text.push_str(&format!("  pair a[{}] <-> b[{}] {:.4}\n", p.a, p.b, p.score));
    }
    let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    text.push_str(&format!("  unmatched a: [{}]\n", list(&result.unmatched_a)));
    text.push_str(&format!("  unmatched b: [{}]\n", list(&result.unmatched_b)));
    out.write_all(text.as_bytes()).map_err(out_err)
}

pub fn cmd_match(
    a: &Path,
    b: &Path,
    format: BoxFormat,
    cfg: &FusionConfig,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let a: DetectionFile = read_json(a)?;
    let b: DetectionFile = read_json(b)?;
    let pairs = pair_scenes(a.to_scenes(format)?, b.to_scenes(format)?)?;
    for (sa, sb) in &pairs {
        print_scene_matches(sa, sb, cfg, stdout)?;
    }
    Ok(())
}

/// Parses `"0.9,0.1;0.8,0.2"`: one evidence per `;`-separated group, each
/// listing singleton masses. Whatever is left goes to the whole frame.
pub fn parse_masses(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let groups: Vec<Vec<f64>> = text
        .split(';')
        .enumerate()
        .map(|(i, group)| {
            group
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| {
                        CliError::Parse(format!("evidence {}: {:?}: {e}", i + 1, v.trim()))
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    if groups.len() < 2 {
        return Err(CliError::Parse(format!(
            "need at least two evidences separated by ';', found {}",
            groups.len()
        )));
    }
    let width = groups[0].len();
    if let Some(i) = groups.iter().position(|g| g.len() != width) {
        return Err(CliError::Parse(format!(
            "evidence {} has {} masses, expected {width}",
            i + 1,
            groups[i].len()
        )));
    }
    Ok(groups)
}

/// Table of weighted masses per evidence and the fused result, four decimals.
pub fn ds_combine_table(masses: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<String, CliError> {
    let size = masses.first().map_or(0, Vec::len);
    let labels = labels.unwrap_or_else(|| (1..=size).map(|i| format!("A{i}")).collect());
    let frame = Arc::new(Frame::new(labels.clone()).map_err(|e| CliError::Parse(e.to_string()))?);
    let evidence: Vec<MassFunction> = masses
        .iter()
        .enumerate()
        .map(|(i, m)| {
            MassFunction::from_singletons(frame.clone(), m)
                .map_err(|e| CliError::Parse(format!("evidence {}: {e}", i + 1)))
        })
        .collect::<Result<_, _>>()?;
    let detail = fuse_weighted_detailed(&evidence)?;

    let mut columns: Vec<&MassFunction> = detail.weighted.discounted().iter().collect();
    columns.push(&detail.fused);
    let mut header: Vec<String> = (1..=evidence.len()).map(|i| format!("m'{i}")).collect();
    header.push("fusion".to_owned());

    let label_width = labels.iter().map(|l| l.chars().count()).max().unwrap_or(1).max(10);
    let mut out = format!("{:<label_width$}", "hypothesis");
    for h in &header {
        out.push_str(&format!("{h:>10}"));
    }
    out.push('\n');
    let rows = (0..size)
        .map(|k| (labels[k].clone(), Subset::singleton(k)))
        .chain(std::iter::once(("Θ".to_owned(), frame.theta())));
    for (label, subset) in rows {
        let pad = label_width - label.chars().count();
        out.push_str(&label);
        out.push_str(&" ".repeat(pad));
        for c in &columns {
            out.push_str(&format!("{:>10.4}", c.mass(subset)));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_ds_combine(masses: &str, labels: Option<&str>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let masses = parse_masses(masses)?;
    let labels = labels.map(|l| l.split(',').map(|s| s.trim().to_owned()).collect());
    let table = ds_combine_table(&masses, labels)?;
    stdout.write_all(table.as_bytes()).map_err(out_err)
}
