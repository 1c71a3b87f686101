use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use slantsweep::baselines::{fit_plane_lsq, fronto_sweep};
use slantsweep::io::{
    format_instances, format_intrinsics, format_plane_samples, format_pose, ids_to_instances,
    instances_to_ids, parse_frames, parse_instances, parse_intrinsics, parse_plane_samples,
    parse_pose, read_depth_pfm, read_image_png, read_mask_png, read_param_pfm, read_text,
    write_depth_pfm, write_image_png, write_mask_png, write_param_pfm, write_volume,
    InstanceRecord, RawVolume,
};
use slantsweep::metrics::{
    depth_metrics, detection_metrics, Detection, DetectionFrame, GroundTruthPlane,
};
use slantsweep::pairs::{format_pair_list, parse_pair_list};
use slantsweep::pooling::{instance_depth, stitch_depth};
use slantsweep::synth::{add_noise, render, SceneSampler};
use slantsweep::{
    segment_planes, select_bounds, select_pairs, sweep, CameraIntrinsics, DepthMap,
    PlaneInstanceSet, PlaneParam, PlaneParamMap, RunConfig, StereoPair, StereoPairRecord,
};

type CliResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Parser)]
#[command(
    name = "slantsweep",
    version,
    about = "Planar stereo by slanted plane sweeping"
)]
struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic stereo pairs with ground truth.
    Synth(SynthArgs),
    /// Slanted plane sweep: parameter map, stitched depth, instances.
    Sweep(PairArgs),
    /// Fronto-parallel depth sweep baseline.
    Fronto(PairArgs),
    /// Region-grow plane instances from a parameter map.
    Segment(SegmentArgs),
    /// Depth and detection metrics for a prediction directory.
    Eval(EvalArgs),
    /// Select stereo pairs from a posed frame list.
    Pairs(PairsArgs),
    /// Data-driven hypothesis bounds from plane samples.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 3)]
    planes: usize,
    #[arg(long, default_value_t = 0.0)]
    slant_min: f64,
    #[arg(long, default_value_t = 50.0)]
    slant_max: f64,
    /// Std. dev. of additive intensity noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    textureless: bool,
}

#[derive(Args)]
struct PairArgs {
    /// Pair list; each line holds `target= source= intrinsics= pose=` fields.
    #[arg(long)]
    pairs: PathBuf,
    /// Use the ground-truth instance masks of each pair instead of segmentation.
    #[arg(long)]
    gt_instances: bool,
    /// Also write the probability volume.
    #[arg(long)]
    dump_volume: bool,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    params: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Directory holding one `pair_NNNN` subdirectory per pair.
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Args)]
struct PairsArgs {
    /// Lines of `path` plus 12 camera-to-world pose values.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    /// Lines of `px py pz`.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    coverage: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()?;
    fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::Synth(a) => synth(&cli, a),
        Command::Sweep(a) => per_pair(&cli, &config, a, a.gt_instances, run_sweep),
        Command::Fronto(a) => per_pair(&cli, &config, a, config.fronto_fit, run_fronto),
        Command::Segment(a) => segment(&cli, &config, a),
        Command::Eval(a) => eval(&cli, a),
        Command::Pairs(a) => pairs(&cli, &config, a),
        Command::Bounds(a) => bounds(&cli, &config, a),
    }
}

fn pair_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("pair_{i:04}"))
}

fn synth(cli: &Cli, a: &SynthArgs) -> CliResult<()> {
    let mut sampler = SceneSampler::default();
    sampler.texture.textureless = a.textureless;
    let records = (0..a.count)
        .into_par_iter()
        .map(|i| -> CliResult<StereoPairRecord> {
            let seed = cli.seed.wrapping_add(i as u64);
            let spec = sampler.sample(seed, a.planes, (a.slant_min, a.slant_max))?;
            let pair = render(&spec)?;
            let (target, source) = if a.noise > 0.0 {
                (
                    add_noise(&pair.target, a.noise, seed.wrapping_mul(2))?,
                    add_noise(&pair.source, a.noise, seed.wrapping_mul(2) + 1)?,
                )
            } else {
                (pair.target.clone(), pair.source.clone())
            };
            let dir = pair_dir(&cli.out_dir, i);
            fs::create_dir_all(&dir)?;
            let rec = StereoPairRecord {
                target: dir.join("target.png"),
                source: dir.join("source.png"),
                intrinsics: dir.join("intrinsics.txt"),
                source_intrinsics: None,
                pose: dir.join("pose.txt"),
                gt_depth: Some(dir.join("depth.pfm")),
                gt_masks: Some(dir.join("masks.png")),
            };
            write_image_png(&rec.target, &target)?;
            write_image_png(&rec.source, &source)?;
            fs::write(&rec.intrinsics, format_intrinsics(&spec.intrinsics))?;
            fs::write(&rec.pose, format_pose(&spec.pose))?;
            write_depth_pfm(dir.join("depth.pfm"), &pair.depth)?;
            write_mask_png(dir.join("masks.png"), &pair.instance_ids)?;
            fs::write(dir.join("planes.txt"), format_plane_samples(&pair.params))?;
            fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&spec)?)?;
            Ok(rec)
        })
        .collect::<CliResult<Vec<_>>>()?;
    fs::write(cli.out_dir.join("pairs.txt"), format_pair_list(&records))?;
    println!("wrote {} pairs to {}", records.len(), cli.out_dir.display());
    Ok(())
}

struct LoadedPair {
    target: slantsweep::ImageRaster,
    source: slantsweep::ImageRaster,
    k_target: CameraIntrinsics,
    k_source: CameraIntrinsics,
    pose: slantsweep::RelativePose,
    masks: Option<PlaneInstanceSet>,
}

fn load_pair(rec: &StereoPairRecord, want_masks: bool) -> CliResult<LoadedPair> {
    rec.check()?;
    let k_target = parse_intrinsics(&read_text(&rec.intrinsics)?)?;
    let k_source = match &rec.source_intrinsics {
        Some(p) => parse_intrinsics(&read_text(p)?)?,
        None => k_target,
    };
    let masks = match (&rec.gt_masks, want_masks) {
        (Some(p), true) => Some(ids_to_instances(&read_mask_png(p)?, |_| 0.5)?.1),
        (None, true) => return Err("pair has no instance masks".into()),
        _ => None,
    };
    Ok(LoadedPair {
        target: read_image_png(&rec.target)?,
        source: read_image_png(&rec.source)?,
        k_target,
        k_source,
        pose: parse_pose(&read_text(&rec.pose)?)?,
        masks,
    })
}

type PairFn = fn(&RunConfig, &PairArgs, &LoadedPair, &Path) -> CliResult<()>;

/// Runs `f` on every pair of the list; `masks` loads ground-truth instances
/// when the pair provides them.
fn per_pair(cli: &Cli, config: &RunConfig, a: &PairArgs, masks: bool, f: PairFn) -> CliResult<()> {
    let records = parse_pair_list(&read_text(&a.pairs)?)?;
    records
        .par_iter()
        .enumerate()
        .try_for_each(|(i, rec)| -> CliResult<()> {
            let pair = load_pair(rec, masks && (a.gt_instances || rec.gt_masks.is_some()))?;
            let dir = pair_dir(&cli.out_dir, i);
            fs::create_dir_all(&dir)?;
            f(config, a, &pair, &dir)
        })?;
    println!(
        "processed {} pairs into {}",
        records.len(),
        cli.out_dir.display()
    );
    Ok(())
}

fn write_instances(dir: &Path, set: &PlaneInstanceSet, w: usize, h: usize) -> CliResult<()> {
    let records: Vec<InstanceRecord> = set
        .iter()
        .enumerate()
        .filter_map(|(i, inst)| {
            inst.pooled_param.map(|param| InstanceRecord {
                id: (i + 1) as u16,
                param,
                score: inst.score,
                label: inst.semantic_label,
            })
        })
        .collect();
    fs::write(dir.join("instances.txt"), format_instances(&records))?;
    write_mask_png(dir.join("instances.png"), &instances_to_ids(set, w, h))?;
    Ok(())
}

fn run_sweep(config: &RunConfig, a: &PairArgs, p: &LoadedPair, dir: &Path) -> CliResult<()> {
    let pair = StereoPair {
        target: &p.target,
        source: &p.source,
        pose: &p.pose,
        k_target: &p.k_target,
        k_source: &p.k_source,
    };
    let out = sweep(&pair, &config.sweep)?;
    let (w, h) = out.params.dims();
    let mut set = match &p.masks {
        Some(m) => m.clone(),
        None => {
            let s = &config.segment;
            segment_planes(&out.params, s.angle_tol_deg, s.offset_tol, s.min_area(w, h))
        }
    };
    set.pool_supported(&out.params)?;
    let depth = stitch_depth(&set, &out.params, &p.k_target, &p.k_target.pixel_grid())?;
    write_param_pfm(dir.join("params.pfm"), &out.params)?;
    write_depth_pfm(dir.join("depth.pfm"), &depth)?;
    write_instances(dir, &set, w, h)?;
    if a.dump_volume {
        let u = &out.probability;
        let (n, vh, vw) = u.shape();
        let valid = u.validity();
        let data = (0..n * vh * vw)
            .map(|i| {
                let px = i % (vh * vw);
                if *valid.get(px % vw, px / vw) {
                    u.probabilities()[i] as f32
                } else {
                    f32::NAN
                }
            })
            .collect();
        write_volume(
            dir.join("probability.pvol"),
            &RawVolume {
                count: n,
                height: vh,
                width: vw,
                data,
            },
        )?;
    }
    Ok(())
}

fn run_fronto(config: &RunConfig, _a: &PairArgs, p: &LoadedPair, dir: &Path) -> CliResult<()> {
    let pair = StereoPair {
        target: &p.target,
        source: &p.source,
        pose: &p.pose,
        k_target: &p.k_target,
        k_source: &p.k_source,
    };
    let out = fronto_sweep(&pair, &config.depth_hypotheses()?, &config.sweep)?;
    write_depth_pfm(dir.join("fronto_depth.pfm"), &out.depth)?;
    let k = &p.k_target;
    let grid = k.pixel_grid();
    let mut depth = out.depth.clone();
    if let (true, Some(masks)) = (config.fronto_fit, &p.masks) {
        let mut fitted = Vec::new();
        for inst in masks.iter() {
            if let Ok(param) = fit_plane_lsq(&out.depth, &inst.mask, k, &grid) {
                let mut inst = inst.clone();
                inst.pooled_param = Some(param);
                fitted.push(inst);
            }
        }
        let set = PlaneInstanceSet::new(fitted)?;
        for inst in set.iter() {
            let d = instance_depth(&inst.pooled_param.expect("fitted"), &inst.mask, k, &grid)?;
            for (u, v, z) in d.iter_valid() {
                depth.set(u, v, Some(z));
            }
        }
        write_instances(dir, &set, k.width, k.height)?;
    }
    write_depth_pfm(dir.join("depth.pfm"), &depth)?;
    Ok(())
}

fn segment(cli: &Cli, config: &RunConfig, a: &SegmentArgs) -> CliResult<()> {
    let params: PlaneParamMap = read_param_pfm(&a.params)?;
    let (w, h) = params.dims();
    let s = &config.segment;
    let mut set = segment_planes(&params, s.angle_tol_deg, s.offset_tol, s.min_area(w, h));
    set.pool(&params)?;
    write_instances(&cli.out_dir, &set, w, h)?;
    println!("{} instances", set.len());
    Ok(())
}

fn load_detections(dir: &Path, depth: &DepthMap) -> CliResult<Vec<Detection>> {
    let ids_path = dir.join("instances.png");
    if !ids_path.is_file() {
        return Ok(Vec::new());
    }
    let ids = read_mask_png(&ids_path)?;
    let records = parse_instances(&read_text(dir.join("instances.txt"))?)?;
    let score_of = |id: u16| records.iter().find(|r| r.id == id).map_or(0.5, |r| r.score);
    let (used, set) = ids_to_instances(&ids, score_of)?;
    Ok(set
        .into_vec()
        .into_iter()
        .zip(used)
        .map(|(inst, id)| Detection {
            mask: inst.mask,
            score: inst.score,
            depth: depth.clone(),
            label: records.iter().find(|r| r.id == id).and_then(|r| r.label),
        })
        .collect())
}

fn eval(cli: &Cli, a: &EvalArgs) -> CliResult<()> {
    let records = parse_pair_list(&read_text(&a.pairs)?)?;
    if records.is_empty() {
        return Err("empty pair list".into());
    }
    let mut sums = [0.0f64; 7];
    let mut frames = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let gt_path = rec
            .gt_depth
            .as_ref()
            .ok_or("pair has no ground-truth depth")?;
        let gt = read_depth_pfm(gt_path)?;
        let dir = pair_dir(&a.pred, i);
        let pred = read_depth_pfm(dir.join("depth.pfm"))?;
        let m = depth_metrics(&pred, &gt)?;
        for (s, v) in sums.iter_mut().zip([
            m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3,
        ]) {
            *s += v;
        }
        if let Some(mask_path) = &rec.gt_masks {
            let (_, gt_set) = ids_to_instances(&read_mask_png(mask_path)?, |_| 0.5)?;
            frames.push(DetectionFrame {
                predictions: load_detections(&dir, &pred)?,
                ground_truth: gt_set
                    .into_vec()
                    .into_iter()
                    .map(|inst| GroundTruthPlane {
                        mask: inst.mask,
                        label: inst.semantic_label,
                    })
                    .collect(),
                gt_depth: gt,
            });
        }
    }
    let n = records.len() as f64;
    let keys = [
        "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3",
    ];
    let mut report = serde_json::Map::new();
    for (k, s) in keys.iter().zip(sums) {
        report.insert((*k).into(), (s / n).into());
    }
    let det = if frames.is_empty() {
        None
    } else {
        Some(detection_metrics(&frames)?)
    };
    let ap_keys = ["ap_0.2", "ap_0.4", "ap_0.6", "ap_0.9"];
    for (i, k) in ap_keys.iter().enumerate() {
        report.insert((*k).into(), det.map(|d| d.ap_per_threshold[i]).into());
    }
    report.insert("ap".into(), det.map(|d| d.ap).into());
    report.insert("map".into(), det.and_then(|d| d.map).into());

    let ordered: Vec<&str> = keys
        .iter()
        .chain(&ap_keys)
        .copied()
        .chain(["ap", "map"])
        .collect();
    let text: String = ordered
        .iter()
        .map(|k| {
            let v = report[*k]
                .as_f64()
                .map_or("nan".to_string(), |f| format!("{f}"));
            format!("{k} = {v}\n")
        })
        .collect();
    fs::write(cli.out_dir.join("report.txt"), &text)?;
    fs::write(
        cli.out_dir.join("report.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(report))?,
    )?;
    print!("{text}");
    Ok(())
}

fn pairs(cli: &Cli, config: &RunConfig, a: &PairsArgs) -> CliResult<()> {
    let frames = parse_frames(&read_text(&a.frames)?)?;
    let base = a.frames.parent().unwrap_or(Path::new("."));
    let selections = select_pairs(&frames, config.min_translation, config.max_translation);
    let pose_dir = cli.out_dir.join("poses");
    fs::create_dir_all(&pose_dir)?;
    let mut records = Vec::new();
    for (i, s) in selections.iter().enumerate() {
        let pose = pose_dir.join(format!("pair_{i:04}.txt"));
        fs::write(&pose, format_pose(&s.pose))?;
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        records.push(StereoPairRecord {
            target: resolve(&frames[s.target].path),
            source: resolve(&frames[s.source].path),
            intrinsics: a.intrinsics.clone(),
            source_intrinsics: None,
            pose,
            gt_depth: None,
            gt_masks: None,
        });
    }
    fs::write(cli.out_dir.join("pairs.txt"), format_pair_list(&records))?;
    println!("selected {} of {} frames", selections.len(), frames.len());
    Ok(())
}

fn bounds(cli: &Cli, config: &RunConfig, a: &BoundsArgs) -> CliResult<()> {
    let samples: Vec<PlaneParam> = parse_plane_samples(&read_text(&a.samples)?)?;
    let counts = config.sweep.ranges.map(|r| r.count);
    let ranges = select_bounds(&samples, a.coverage, counts)?;
    let mut text = String::new();
    for (name, r) in ["x", "y", "z"].iter().zip(&ranges) {
        text.push_str(&format!(
            "grid_{name}_lo = {}\ngrid_{name}_hi = {}\ngrid_{name}_count = {}\n",
            r.lo, r.hi, r.count
        ));
    }
    fs::write(cli.out_dir.join("bounds.txt"), &text)?;
    print!("{text}");
    Ok(())
}
