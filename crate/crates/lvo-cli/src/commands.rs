//! Pipeline stages. Each command reads its inputs from the dataset and the
//! previous stages' output directories, writes into `<output.dir>/<stage>/`,
//! and returns the files it produced. `cmd_run` chains them and records a
//! manifest. Every stage is deterministic given (inputs, config, seed).

use std::path::{Path, PathBuf};

use lvo::flow::{associate_3d_flow, invert_depth, Flow3D};
use lvo::geometry::{accumulate_trajectory, relative_from_absolute, PointCloud, RelativePose};
use lvo::kitti::{
    kitti_errors, load_intrinsics, load_poses, read_f3d, read_pfm, read_ppm, report_csv,
    save_poses, write_f3d, SequenceIndex,
};
use lvo::loss::{predict_translation_mean, raw_to_gaussian, sample_translation};
use lvo::nalgebra::Vector3;
use lvo::net::{load_checkpoint, mirror_augment, save_checkpoint, train};
use lvo::octree::{export_ply, extract_occupied, insert_point_cloud, save_octree, OccupancyOctree};
use lvo::rand::SeedableRng;
use lvo::rand_chacha::ChaCha8Rng;
use lvo::{Error, Result};

use crate::config::PipelineConfig;
use crate::manifest::Manifest;

fn scan_sequence(cfg: &PipelineConfig) -> Result<SequenceIndex> {
    let mut seq = SequenceIndex::scan(&cfg.dataset.root, &cfg.dataset.sequence)?;
    seq.frame_period = cfg.dataset.frame_period;
    Ok(seq)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn pair_name(k: usize) -> String {
    format!("{k:06}.f3d")
}

/// Path of the 3D-flow raster for the frame pair `k -> k+1`.
fn f3d_path(cfg: &PipelineConfig, k: usize) -> PathBuf {
    cfg.stage_dir("associate").join(pair_name(k))
}

fn trajectory_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.stage_dir("odometry").join("trajectory.txt")
}

/// Associate each consecutive flow/depth pair into a 3D-flow raster
/// (`<out>/associate/NNNNNN.f3d`, one per frame pair). Rasters are
/// block-average downsampled first when the config asks for it.
pub fn cmd_associate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let seq = scan_sequence(cfg)?;
    let out = cfg.stage_dir("associate");
    ensure_dir(&out)?;
    let factor = cfg.association.downsample;
    let max_inv = cfg.association.max_inverse_depth;

    let mut written = Vec::new();
    let mut next_depth = read_pfm(&seq.depth_files[0])?.downsample(factor)?;
    for k in 0..seq.frame_count() - 1 {
        let depth_k = next_depth;
        next_depth = read_pfm(&seq.depth_files[k + 1])?.downsample(factor)?;
        let flow = read_flo_downsampled(&seq.flow_files[k], factor)?;
        let invd_k = invert_depth(&depth_k, max_inv)?;
        let invd_k1 = invert_depth(&next_depth, max_inv)?;
        let raster = associate_3d_flow(&flow, &invd_k, &invd_k1)?;
        let path = out.join(pair_name(k));
        write_f3d(&raster, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn read_flo_downsampled(path: &Path, factor: usize) -> Result<lvo::flow::FlowField2D> {
    lvo::kitti::read_flo(path)?.downsample(factor)
}

/// Load the associated rasters the earlier stage wrote for this sequence.
fn load_f3d_rasters(cfg: &PipelineConfig, pairs: usize) -> Result<Vec<Flow3D>> {
    (0..pairs).map(|k| read_f3d(&f3d_path(cfg, k))).collect()
}

/// Train on the associated rasters against ground-truth relative poses,
/// with horizontal-mirror augmentation doubling the dataset. Writes
/// `train/model.ckpt` and a per-epoch `train/loss.csv`.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let seq = scan_sequence(cfg)?;
    let gt_path = seq.pose_file.clone().ok_or_else(|| {
        Error::io(
            &seq.sequence_dir.join("poses.txt"),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "training requires ground-truth poses",
            ),
        )
    })?;
    let gt = load_poses(&gt_path)?;
    if gt.len() != seq.frame_count() {
        return Err(Error::shape(format!(
            "{} ground-truth poses for {} frames",
            gt.len(),
            seq.frame_count()
        )));
    }
    let relatives = relative_from_absolute(&gt)?;
    let rasters = load_f3d_rasters(cfg, seq.frame_count() - 1)?;

    let mut dataset: Vec<(Flow3D, RelativePose)> =
        rasters.into_iter().zip(relatives).collect();
    for i in 0..dataset.len() {
        let (raster, pose) = mirror_augment(&dataset[i].0, &dataset[i].1);
        dataset.push((raster, pose));
    }

    let (model, history) = train(&cfg.network, &cfg.training, &cfg.loss, &dataset)?;

    let out = cfg.stage_dir("train");
    ensure_dir(&out)?;
    let ckpt = out.join("model.ckpt");
    save_checkpoint(&model, &ckpt)?;
    let csv = out.join("loss.csv");
    let mut text = String::from("epoch,loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        text.push_str(&format!("{epoch},{loss}\n"));
    }
    std::fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
    Ok(vec![ckpt, csv])
}

/// Run the model over the associated rasters, turn each prediction into a
/// relative pose (sampling the translation distribution unless configured
/// deterministic), accumulate, and write `odometry/trajectory.txt` in KITTI
/// pose format (one line per frame, identity first).
pub fn cmd_odometry(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let seq = scan_sequence(cfg)?;
    let model = load_checkpoint(&cfg.checkpoint_path())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.prediction.seed);

    let mut relatives = Vec::with_capacity(seq.frame_count() - 1);
    for k in 0..seq.frame_count() - 1 {
        let raster = read_f3d(&f3d_path(cfg, k))?;
        let (raw6, raw3) = model.forward(&[&raster])?[0];
        let (g, y) = raw_to_gaussian(&raw6)?;
        let (x, z) = if cfg.prediction.deterministic {
            predict_translation_mean(&g)
        } else {
            sample_translation(&g, cfg.prediction.n_samples, &mut rng)?
        };
        relatives.push(RelativePose::new(Vector3::new(x, y, z), raw3));
    }
    let traj = accumulate_trajectory(&relatives);

    let out = cfg.stage_dir("odometry");
    ensure_dir(&out)?;
    let path = trajectory_path(cfg);
    save_poses(&traj, &path)?;
    Ok(path)
}

/// Score the predicted trajectory against ground truth and write the CSV
/// tables into `evaluate/`.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let seq = scan_sequence(cfg)?;
    let gt_path = seq.pose_file.clone().ok_or_else(|| {
        Error::io(
            &seq.sequence_dir.join("poses.txt"),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "evaluation requires ground-truth poses",
            ),
        )
    })?;
    let gt = load_poses(&gt_path)?;
    let pred = load_poses(&trajectory_path(cfg))?;
    let report = kitti_errors(&gt, &pred, &cfg.evaluation.lengths, seq.frame_period)?;
    let out = cfg.stage_dir("evaluate");
    report_csv(&report, &out)?;
    Ok([
        "trans_vs_length.csv",
        "rot_vs_length.csv",
        "trans_vs_speed.csv",
        "rot_vs_speed.csv",
        "summary.csv",
    ]
    .iter()
    .map(|name| out.join(name))
    .collect())
}

/// Back-project every depth frame along the predicted trajectory, fuse the
/// clouds into an occupancy octree, and write the occupied voxels as a PLY
/// plus the full tree as a binary dump.
pub fn cmd_map(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let seq = scan_sequence(cfg)?;
    let traj = load_poses(&trajectory_path(cfg))?;
    if traj.len() != seq.frame_count() {
        return Err(Error::shape(format!(
            "trajectory has {} poses but the sequence has {} depth frames",
            traj.len(),
            seq.frame_count()
        )));
    }
    let intr = load_intrinsics(&seq.intrinsics_file)?;
    let mut tree = OccupancyOctree::new(&cfg.octree)?;

    for (k, pose) in traj.poses().iter().enumerate() {
        let depth = read_pfm(&seq.depth_files[k])?;
        let image = match seq.image_files.get(k) {
            Some(p) => Some(read_ppm(p)?),
            None => None,
        };
        let camera = lvo::geometry::backproject(&intr, &depth, image.as_ref())?;
        let world = PointCloud {
            points: camera
                .points
                .iter()
                .map(|p| pose.transform_point(p))
                .collect(),
            colors: camera.colors,
        };
        insert_point_cloud(&mut tree, pose.translation(), &world, &cfg.octree)?;
    }

    let out = cfg.stage_dir("map");
    ensure_dir(&out)?;
    let ply = out.join("map.ply");
    let oct = out.join("map.oct");
    let voxels = extract_occupied(&tree, &cfg.octree)?;
    export_ply(&voxels, &ply)?;
    save_octree(&tree, &oct)?;
    Ok(vec![ply, oct])
}

/// Prefix an error with the stage that raised it, preserving its class (and
/// therefore its exit code).
fn in_stage(stage: &str, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::parse(format!("stage {stage}: {m}")),
        Error::Shape(m) => Error::shape(format!("stage {stage}: {m}")),
        Error::Invalid(m) => Error::invalid(format!("stage {stage}: {m}")),
        Error::Io { path, source } => Error::Io {
            path: format!("stage {stage}: {path}"),
            source,
        },
    }
}

/// The full pipeline: associate, odometry, evaluate (skipped with a note
/// when the sequence has no ground truth), map; then write
/// `manifest.toml` recording the config hash, seeds, and a digest of every
/// output file. A stage failure aborts but leaves earlier stages' outputs
/// in place.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let seq = scan_sequence(cfg)?;
    ensure_dir(&cfg.output.dir)?;
    let root = &cfg.output.dir;
    let mut manifest = Manifest::new(cfg);

    for path in cmd_associate(cfg).map_err(|e| in_stage("associate", e))? {
        manifest.add_output(root, &path)?;
    }
    let traj = cmd_odometry(cfg).map_err(|e| in_stage("odometry", e))?;
    manifest.add_output(root, &traj)?;
    if seq.pose_file.is_some() {
        for path in cmd_evaluate(cfg).map_err(|e| in_stage("evaluate", e))? {
            manifest.add_output(root, &path)?;
        }
    } else {
        manifest
            .notes
            .push(String::from("evaluation skipped: sequence has no ground-truth poses"));
    }
    for path in cmd_map(cfg).map_err(|e| in_stage("map", e))? {
        manifest.add_output(root, &path)?;
    }

    let path = root.join("manifest.toml");
    manifest.save(&path)?;
    Ok(path)
}
