//! Deterministic synthetic sequence generator for exercising the pipeline
//! end to end without real data. Rasters and poses are closed-form functions
//! of (frame, pixel, seed), so a given spec always produces identical files.

use std::path::Path;

use lvo::flow::{DepthMap, FlowField2D};
use lvo::geometry::{accumulate_trajectory, CameraIntrinsics, ColorImage, RelativePose};
use lvo::kitti::{save_intrinsics, save_poses, write_flo, write_pfm, write_ppm};
use lvo::nalgebra::Vector3;
use lvo::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Perturbs every generated value; equal seeds give identical bytes.
    pub seed: u64,
    pub with_poses: bool,
    pub with_images: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            frames: 10,
            width: 16,
            height: 8,
            seed: 0,
            with_poses: true,
            with_images: true,
        }
    }
}

/// Create `root/<sequence>/` with depth, flow, optional imagery, optional
/// ground-truth poses, and an intrinsics file.
pub fn generate_sequence(root: &Path, sequence: &str, spec: &SynthSpec) -> Result<()> {
    if spec.frames < 2 {
        return Err(Error::invalid("a sequence needs at least 2 frames"));
    }
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::invalid("raster dimensions must be positive"));
    }
    let dir = root.join(sequence);
    for sub in ["depth", "flow"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(&dir.join(sub), e))?;
    }
    if spec.with_images {
        std::fs::create_dir_all(dir.join("image")).map_err(|e| Error::io(&dir.join("image"), e))?;
    }

    let phase = (spec.seed % 1021) as f64 * 0.618;
    let (w, h) = (spec.width, spec.height);

    for k in 0..spec.frames {
        let kf = k as f64;
        let mut depth = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let v = 4.0 + 2.0 * (0.7 * x as f64 + 0.3 * y as f64 + 0.2 * kf + phase).sin();
                depth.push(v as f32);
            }
        }
        let depth = DepthMap::new(w, h, depth)?;
        write_pfm(&depth, &dir.join(format!("depth/{k:06}.pfm")))?;

        if k + 1 < spec.frames {
            let mut u = Vec::with_capacity(w * h);
            let mut v = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    u.push((1.5 * (0.4 * x as f64 + 0.1 * kf + phase).cos()) as f32);
                    v.push((0.8 * (0.5 * y as f64 + 0.13 * kf).sin()) as f32);
                }
            }
            let flow = FlowField2D::new(w, h, u, v)?;
            write_flo(&flow, &dir.join(format!("flow/{k:06}.flo")))?;
        }

        if spec.with_images {
            let mut rgb = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    rgb.push([
                        (x * 255 / w.max(1)) as u8,
                        (y * 255 / h.max(1)) as u8,
                        (k * 37 % 256) as u8,
                    ]);
                }
            }
            let image = ColorImage::new(w, h, rgb)?;
            write_ppm(&image, &dir.join(format!("image/{k:06}.ppm")))?;
        }
    }

    let intr = CameraIntrinsics::new(
        0.8 * w as f64,
        0.8 * w as f64,
        w as f64 / 2.0,
        h as f64 / 2.0,
        0.0,
    )?;
    save_intrinsics(&intr, &dir.join("intrinsics.txt"))?;

    if spec.with_poses {
        let rels: Vec<RelativePose> = (0..spec.frames - 1)
            .map(|k| {
                let kf = k as f64;
                RelativePose::new(
                    Vector3::new(
                        0.02 * (kf + phase).sin(),
                        0.01,
                        1.0 + 0.1 * (0.5 * kf).cos(),
                    ),
                    [0.01 * (0.3 * kf + phase).sin(), 0.005 * (0.2 * kf).cos(), 0.0],
                )
            })
            .collect();
        let traj = accumulate_trajectory(&rels);
        save_poses(&traj, &dir.join("poses.txt"))?;
    }
    Ok(())
}
