//! The motion regressor: architecture, optimizer, training loop, checkpoint
//! format, and the horizontal-mirror data augmentation.

mod adam;
mod checkpoint;
mod model;

pub use adam::{adam_step, AdamState, TrainConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{Gradients, LvoConfig, LvoModel};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::Flow3D;
use crate::geometry::RelativePose;
use crate::loss::{loss_gradients, raw_to_gaussian, total_loss, LossWeights};

/// Negate an angle, keeping the (-pi, pi] convention: the pi boundary maps
/// back to pi (same rotation). Exact for every other input, so mirroring
/// twice is a bitwise no-op.
fn neg_angle(a: f64) -> f64 {
    if a == std::f64::consts::PI {
        a
    } else {
        -a
    }
}

/// Horizontal mirror of a training sample: flip the raster left-right, negate
/// the horizontal-flow channel, and adjust the pose (x translation, yaw and
/// roll flip sign; height, forward motion and pitch are preserved).
/// Applying it twice returns the original sample.
pub fn mirror_augment(sample: &Flow3D, pose: &RelativePose) -> (Flow3D, RelativePose) {
    let flip = |plane: &[f32], negate: bool| -> Vec<f32> {
        let mut out = Vec::with_capacity(plane.len());
        for y in 0..sample.height {
            let row = &plane[y * sample.width..(y + 1) * sample.width];
            out.extend(row.iter().rev().map(|&v| if negate { -v } else { v }));
        }
        out
    };
    let mirrored = Flow3D {
        width: sample.width,
        height: sample.height,
        fx: flip(&sample.fx, true),
        fy: flip(&sample.fy, false),
        fz: flip(&sample.fz, false),
    };
    let mirrored_pose = RelativePose {
        translation: Vector3::new(
            -pose.translation.x,
            pose.translation.y,
            pose.translation.z,
        ),
        euler_zyx: [
            neg_angle(pose.euler_zyx[0]),
            neg_angle(pose.euler_zyx[1]),
            pose.euler_zyx[2],
        ],
    };
    (mirrored, mirrored_pose)
}

/// Train a fresh model on `(raster, relative pose)` pairs. Runs
/// `epochs x shuffled minibatches` of forward / loss / backward / Adam;
/// returns the model and the mean per-sample loss of each epoch. Fully
/// deterministic given `cfg.seed` (which drives initialization and
/// shuffling). With `epochs == 0` the returned model is the untouched
/// initialization.
pub fn train(
    net_cfg: &LvoConfig,
    cfg: &TrainConfig,
    weights: &LossWeights,
    dataset: &[(Flow3D, RelativePose)],
) -> Result<(LvoModel, Vec<f64>)> {
    net_cfg.validate()?;
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training needs a non-empty dataset"));
    }
    for (i, (raster, _)) in dataset.iter().enumerate() {
        if raster.width != net_cfg.input_width || raster.height != net_cfg.input_height {
            return Err(Error::shape(format!(
                "sample {i} is {}x{} but the network expects {}x{}",
                raster.width, raster.height, net_cfg.input_width, net_cfg.input_height
            )));
        }
    }

    let mut model = LvoModel::init(net_cfg, cfg.seed)?;
    let mut state = AdamState::new(model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<&Flow3D> = chunk.iter().map(|&i| &dataset[i].0).collect();
            let gts: Vec<RelativePose> = chunk.iter().map(|&i| dataset[i].1).collect();

            let raws = model.forward(&batch)?;
            let mut outputs = Vec::with_capacity(raws.len());
            let mut upstream = Vec::with_capacity(raws.len());
            for ((raw6, raw3), gt) in raws.iter().zip(&gts) {
                let (g, y_p) = raw_to_gaussian(raw6)?;
                let d9 = loss_gradients(&g, y_p, raw3, gt, weights)?;
                outputs.push((g, y_p, *raw3));
                upstream.push((
                    [d9[0], d9[1], d9[2], d9[3], d9[4], d9[5]],
                    [d9[6], d9[7], d9[8]],
                ));
            }
            epoch_loss += total_loss(&outputs, &gts, weights, model.params_sq_norm())?;

            let grads = model.backward(&batch, &upstream)?;
            let mut flat = grads.to_flat();
            // Regularizer gradient: d(lambda3 * sum p^2)/dp = 2*lambda3*p.
            for (g, p) in flat.iter_mut().zip(model.params_flat()) {
                *g += 2.0 * weights.lambda3 * p;
            }
            adam_step(&mut model, &flat, &mut state, cfg, epoch)?;
        }
        history.push(epoch_loss / dataset.len() as f64);
    }
    Ok((model, history))
}
