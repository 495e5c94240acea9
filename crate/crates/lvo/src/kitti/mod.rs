//! KITTI-style dataset plumbing: file formats, sequence directory layout,
//! and the standard odometry error metrics.

mod eval;
mod io;

pub use eval::{kitti_errors, report_csv, ErrorRecord, ErrorReport, DEFAULT_LENGTHS, SPEED_BIN_WIDTH};
pub use io::{
    load_intrinsics, load_poses, read_f3d, read_flo, read_pfm, read_ppm, save_intrinsics,
    save_poses, write_f3d, write_flo, write_pfm, write_ppm, F3D_MAGIC, FLO_MAGIC, POSE_DRIFT_MAX,
};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Seconds between consecutive frames (KITTI records at 10 Hz).
pub const DEFAULT_FRAME_PERIOD: f64 = 0.1;

/// File inventory of one sequence directory:
///
/// ```text
/// <root>/<sequence>/
///   intrinsics.txt      fx fy cx cy skew
///   depth/*.pfm         one per frame
///   flow/*.flo          one per frame pair (count = frames - 1)
///   image/*.ppm         optional, one per frame
///   poses.txt           optional ground truth, one line per frame
/// ```
///
/// Files pair up by sorted file name.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceIndex {
    pub sequence_dir: PathBuf,
    pub depth_files: Vec<PathBuf>,
    pub flow_files: Vec<PathBuf>,
    /// Empty when the sequence carries no imagery.
    pub image_files: Vec<PathBuf>,
    pub pose_file: Option<PathBuf>,
    pub intrinsics_file: PathBuf,
    /// Seconds per frame; only used for speed binning in evaluation.
    pub frame_period: f64,
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

impl SequenceIndex {
    /// Number of frames (defined by the depth rasters).
    pub fn frame_count(&self) -> usize {
        self.depth_files.len()
    }

    /// Inventory `root/sequence`, checking the per-kind file counts agree.
    pub fn scan(root: &Path, sequence: &str) -> Result<SequenceIndex> {
        let dir = root.join(sequence);
        if !dir.is_dir() {
            return Err(Error::io(
                &dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such sequence directory"),
            ));
        }
        let depth_files = sorted_files(&dir.join("depth"), "pfm")?;
        if depth_files.is_empty() {
            return Err(Error::invalid(format!(
                "{}: no depth rasters found",
                dir.display()
            )));
        }
        let flow_files = sorted_files(&dir.join("flow"), "flo")?;
        if flow_files.len() + 1 != depth_files.len() {
            return Err(Error::invalid(format!(
                "{}: {} depth frames need {} flow files, found {}",
                dir.display(),
                depth_files.len(),
                depth_files.len() - 1,
                flow_files.len()
            )));
        }
        let image_dir = dir.join("image");
        let image_files = if image_dir.is_dir() {
            let files = sorted_files(&image_dir, "ppm")?;
            if !files.is_empty() && files.len() != depth_files.len() {
                return Err(Error::invalid(format!(
                    "{}: {} images for {} frames",
                    dir.display(),
                    files.len(),
                    depth_files.len()
                )));
            }
            files
        } else {
            Vec::new()
        };
        let pose_file = Some(dir.join("poses.txt")).filter(|p| p.is_file());
        let intrinsics_file = dir.join("intrinsics.txt");
        if !intrinsics_file.is_file() {
            return Err(Error::io(
                &intrinsics_file,
                std::io::Error::new(std::io::ErrorKind::NotFound, "missing intrinsics file"),
            ));
        }
        Ok(SequenceIndex {
            sequence_dir: dir,
            depth_files,
            flow_files,
            image_files,
            pose_file,
            intrinsics_file,
            frame_period: DEFAULT_FRAME_PERIOD,
        })
    }
}
