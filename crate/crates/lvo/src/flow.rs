//! Raster containers and the dense 3D-flow association step.
//!
//! The association turns a 2D optical-flow field plus the inverse-depth maps
//! of two consecutive frames into a 3-channel raster: the original flow
//! components and a depth-change channel obtained by warping the second
//! frame's inverse depth along the flow and subtracting the first frame's.
//! Inverse depth is used instead of raw depth so that the channel stays
//! bounded as depth grows; a raw-depth variant exists for ablation.
//!
//! Rasters are stored row-major as `f32` planes; indexing is `y * width + x`.

use crate::error::{Error, Result};

/// Default cap applied when inverting depth (1 / 0.1 m).
pub const DEFAULT_MAX_INVERSE_DEPTH: f32 = 10.0;

/// Dense 2D optical flow in output-pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField2D {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

/// Per-pixel depth in meters. Non-finite entries mark invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Per-pixel inverse depth (1/m), finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Three-channel 3D-flow raster: image-plane flow (fx, fy) plus the
/// inverse-depth change (fz).
#[derive(Debug, Clone, PartialEq)]
pub struct Flow3D {
    pub width: usize,
    pub height: usize,
    pub fx: Vec<f32>,
    pub fy: Vec<f32>,
    pub fz: Vec<f32>,
}

fn check_plane(name: &str, len: usize, width: usize, height: usize) -> Result<()> {
    if len != width * height {
        return Err(Error::shape(format!(
            "{name} plane holds {len} values, expected {width}x{height}"
        )));
    }
    Ok(())
}

impl FlowField2D {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        check_plane("flow u", u.len(), width, height)?;
        check_plane("flow v", v.len(), width, height)?;
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("flow field contains non-finite values"));
        }
        Ok(FlowField2D { width, height, u, v })
    }

    /// Area-average pooling; flow values are divided by `factor` so
    /// displacements stay in output-pixel units.
    pub fn downsample(&self, factor: usize) -> Result<FlowField2D> {
        let (w, h) = pooled_dims(self.width, self.height, factor)?;
        let scale = 1.0 / factor as f64;
        Ok(FlowField2D {
            width: w,
            height: h,
            u: pool_plane(&self.u, self.width, factor, w, h, scale),
            v: pool_plane(&self.v, self.width, factor, w, h, scale),
        })
    }
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_plane("depth", data.len(), width, height)?;
        Ok(DepthMap { width, height, data })
    }

    pub fn downsample(&self, factor: usize) -> Result<DepthMap> {
        let (w, h) = pooled_dims(self.width, self.height, factor)?;
        Ok(DepthMap {
            width: w,
            height: h,
            data: pool_plane(&self.data, self.width, factor, w, h, 1.0),
        })
    }
}

impl InverseDepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_plane("inverse depth", data.len(), width, height)?;
        if data.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(
                "inverse depth must be finite and non-negative",
            ));
        }
        Ok(InverseDepthMap { width, height, data })
    }

    pub fn downsample(&self, factor: usize) -> Result<InverseDepthMap> {
        let (w, h) = pooled_dims(self.width, self.height, factor)?;
        Ok(InverseDepthMap {
            width: w,
            height: h,
            data: pool_plane(&self.data, self.width, factor, w, h, 1.0),
        })
    }
}

impl Flow3D {
    pub fn new(width: usize, height: usize, fx: Vec<f32>, fy: Vec<f32>, fz: Vec<f32>) -> Result<Self> {
        check_plane("fx", fx.len(), width, height)?;
        check_plane("fy", fy.len(), width, height)?;
        check_plane("fz", fz.len(), width, height)?;
        Ok(Flow3D { width, height, fx, fy, fz })
    }

    /// Area-average pooling. The image-plane channels are rescaled like flow;
    /// the depth-change channel is pooled unscaled (it is not in pixel units).
    pub fn downsample(&self, factor: usize) -> Result<Flow3D> {
        let (w, h) = pooled_dims(self.width, self.height, factor)?;
        let scale = 1.0 / factor as f64;
        Ok(Flow3D {
            width: w,
            height: h,
            fx: pool_plane(&self.fx, self.width, factor, w, h, scale),
            fy: pool_plane(&self.fy, self.width, factor, w, h, scale),
            fz: pool_plane(&self.fz, self.width, factor, w, h, 1.0),
        })
    }
}

fn pooled_dims(width: usize, height: usize, factor: usize) -> Result<(usize, usize)> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be >= 1"));
    }
    let (w, h) = (width / factor, height / factor);
    if w == 0 || h == 0 {
        return Err(Error::invalid(format!(
            "downsample factor {factor} leaves no pixels for a {width}x{height} raster"
        )));
    }
    Ok((w, h))
}

/// Mean over factor x factor blocks of the top-left crop, times `scale`.
fn pool_plane(data: &[f32], src_width: usize, factor: usize, w: usize, h: usize, scale: f64) -> Vec<f32> {
    let norm = scale / (factor * factor) as f64;
    let mut out = Vec::with_capacity(w * h);
    for by in 0..h {
        for bx in 0..w {
            let mut sum = 0.0f64;
            for dy in 0..factor {
                let row = (by * factor + dy) * src_width + bx * factor;
                for dx in 0..factor {
                    sum += data[row + dx] as f64;
                }
            }
            out.push((sum * norm) as f32);
        }
    }
    out
}

/// Per-pixel `min(1/d, max_inverse_depth)`; pixels with non-finite or
/// non-positive depth become 0.
pub fn invert_depth(depth: &DepthMap, max_inverse_depth: f32) -> Result<InverseDepthMap> {
    if !max_inverse_depth.is_finite() || max_inverse_depth <= 0.0 {
        return Err(Error::invalid(format!(
            "max_inverse_depth must be finite and positive, got {max_inverse_depth}"
        )));
    }
    let data = depth
        .data
        .iter()
        .map(|&d| {
            if d.is_finite() && d > 0.0 {
                (1.0 / d).min(max_inverse_depth)
            } else {
                0.0
            }
        })
        .collect();
    Ok(InverseDepthMap {
        width: depth.width,
        height: depth.height,
        data,
    })
}

/// Bilinear interpolation with border-clamped coordinates, computed in `f64`.
pub fn bilinear_sample(map: &InverseDepthMap, x: f64, y: f64) -> f64 {
    plane_bilinear(&map.data, map.width, map.height, x, y)
}

fn plane_bilinear(data: &[f32], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let tx = x - x0 as f64;
    let ty = y - y0 as f64;
    let v00 = data[y0 * width + x0] as f64;
    let v10 = data[y0 * width + x1] as f64;
    let v01 = data[y1 * width + x0] as f64;
    let v11 = data[y1 * width + x1] as f64;
    let top = v00 + (v10 - v00) * tx;
    let bottom = v01 + (v11 - v01) * tx;
    top + (bottom - top) * ty
}

/// Build the 3-channel 3D-flow raster from 2D flow and the inverse-depth maps
/// of frames k and k+1. The flow planes are copied through unchanged; the
/// third channel is `invd_next` sampled at the flow target minus `invd_curr`
/// at the source pixel. All rasters must share dimensions.
pub fn associate_3d_flow(
    flow: &FlowField2D,
    invd_curr: &InverseDepthMap,
    invd_next: &InverseDepthMap,
) -> Result<Flow3D> {
    let dims_ok = flow.width == invd_curr.width
        && flow.height == invd_curr.height
        && flow.width == invd_next.width
        && flow.height == invd_next.height;
    if !dims_ok {
        return Err(Error::shape(format!(
            "flow {}x{}, inverse depth {}x{} and {}x{} must all match",
            flow.width, flow.height, invd_curr.width, invd_curr.height, invd_next.width,
            invd_next.height
        )));
    }
    let mut fz = Vec::with_capacity(flow.width * flow.height);
    for y in 0..flow.height {
        for x in 0..flow.width {
            let i = y * flow.width + x;
            let warped = bilinear_sample(
                invd_next,
                x as f64 + flow.u[i] as f64,
                y as f64 + flow.v[i] as f64,
            );
            fz.push((warped - invd_curr.data[i] as f64) as f32);
        }
    }
    Ok(Flow3D {
        width: flow.width,
        height: flow.height,
        fx: flow.u.clone(),
        fy: flow.v.clone(),
        fz,
    })
}

/// Ablation variant of [`associate_3d_flow`] operating on raw depth. Both
/// depth maps must be fully finite; the bounded inverse-depth form is what
/// the rest of the pipeline uses.
pub fn associate_3d_flow_raw_depth(
    flow: &FlowField2D,
    depth_curr: &DepthMap,
    depth_next: &DepthMap,
) -> Result<Flow3D> {
    let dims_ok = flow.width == depth_curr.width
        && flow.height == depth_curr.height
        && flow.width == depth_next.width
        && flow.height == depth_next.height;
    if !dims_ok {
        return Err(Error::shape("raw-depth association: raster dims differ".to_string()));
    }
    if depth_curr.data.iter().chain(depth_next.data.iter()).any(|d| !d.is_finite()) {
        return Err(Error::invalid(
            "raw-depth association requires fully finite depth maps",
        ));
    }
    let mut fz = Vec::with_capacity(flow.width * flow.height);
    for y in 0..flow.height {
        for x in 0..flow.width {
            let i = y * flow.width + x;
            let warped = plane_bilinear(
                &depth_next.data,
                depth_next.width,
                depth_next.height,
                x as f64 + flow.u[i] as f64,
                y as f64 + flow.v[i] as f64,
            );
            fz.push((warped - depth_curr.data[i] as f64) as f32);
        }
    }
    Ok(Flow3D {
        width: flow.width,
        height: flow.height,
        fx: flow.u.clone(),
        fy: flow.v.clone(),
        fz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_depth_caps_and_zeroes() {
        let d = DepthMap::new(5, 1, vec![0.05, 4.0, f32::NAN, -1.0, 0.0]).unwrap();
        let inv = invert_depth(&d, 10.0).unwrap();
        assert_eq!(inv.data, vec![10.0, 0.25, 0.0, 0.0, 0.0]);
        assert!(invert_depth(&d, 0.0).is_err());
        assert!(invert_depth(&d, f32::INFINITY).is_err());
    }

    #[test]
    fn bilinear_midpoint_and_clamping() {
        let m = InverseDepthMap::new(2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(bilinear_sample(&m, 0.5, 0.0), 3.0);
        assert_eq!(bilinear_sample(&m, -5.0, -2.0), 2.0);
        assert_eq!(bilinear_sample(&m, 9.0, 3.0), 4.0);
        // Integer coordinates return the texel exactly.
        assert_eq!(bilinear_sample(&m, 1.0, 0.0), 4.0);
    }

    #[test]
    fn bilinear_is_continuous_in_x() {
        let m = InverseDepthMap::new(3, 2, vec![0.0, 1.0, 5.0, 2.0, 3.0, 4.0]).unwrap();
        let eps = 1e-6;
        for i in 0..200 {
            let x = -0.5 + i as f64 * 0.02;
            let y = 0.3 + (i % 7) as f64 * 0.1;
            let a = bilinear_sample(&m, x, y);
            let b = bilinear_sample(&m, x + eps, y);
            // Local slope is bounded by the value range (5) per pixel.
            assert!((a - b).abs() <= eps * 5.0 + 1e-12);
        }
    }

    #[test]
    fn associate_zero_flow_is_plain_difference() {
        let flow = FlowField2D::new(2, 2, vec![0.0; 4], vec![0.0; 4]).unwrap();
        let a = InverseDepthMap::new(2, 2, vec![0.5, 1.0, 2.0, 0.25]).unwrap();
        let b = InverseDepthMap::new(2, 2, vec![1.0, 0.5, 1.5, 1.0]).unwrap();
        let f3d = associate_3d_flow(&flow, &a, &b).unwrap();
        for i in 0..4 {
            let expected = (b.data[i] as f64 - a.data[i] as f64) as f32;
            assert_eq!(f3d.fz[i], expected);
        }
    }

    #[test]
    fn associate_copies_flow_planes_bit_exactly() {
        let u = vec![1.5, -2.25, 0.0, 1e-20];
        let v = vec![0.5, 3.0, -0.125, 7.0];
        let flow = FlowField2D::new(2, 2, u.clone(), v.clone()).unwrap();
        let inv = InverseDepthMap::new(2, 2, vec![1.0; 4]).unwrap();
        let f3d = associate_3d_flow(&flow, &inv, &inv).unwrap();
        for i in 0..4 {
            assert_eq!(f3d.fx[i].to_bits(), u[i].to_bits());
            assert_eq!(f3d.fy[i].to_bits(), v[i].to_bits());
        }
    }

    #[test]
    fn associate_matches_closed_form_on_linear_ramps() {
        // invd(x, y) = a*x + b*y + c is reproduced exactly by bilinear
        // interpolation, so in-bounds targets have a closed-form fz.
        let (w, h) = (8, 6);
        let ramp = |a: f32, b: f32, c: f32| {
            let mut d = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    d.push(a * x as f32 + b * y as f32 + c);
                }
            }
            InverseDepthMap::new(w, h, d).unwrap()
        };
        let curr = ramp(0.01, 0.02, 0.1);
        let next = ramp(0.03, 0.005, 0.2);
        let flow = FlowField2D::new(w, h, vec![1.25; w * h], vec![0.75; w * h]).unwrap();
        let f3d = associate_3d_flow(&flow, &curr, &next).unwrap();
        for y in 0..h - 1 {
            for x in 0..w - 2 {
                let i = y * w + x;
                let expected = 0.03 * (x as f64 + 1.25) + 0.005 * (y as f64 + 0.75) + 0.2
                    - curr.data[i] as f64;
                assert!(
                    (f3d.fz[i] as f64 - expected).abs() < 1e-5,
                    "pixel ({x},{y}): {} vs {expected}",
                    f3d.fz[i]
                );
            }
        }
    }

    #[test]
    fn associate_rejects_mismatched_dims() {
        let flow = FlowField2D::new(2, 2, vec![0.0; 4], vec![0.0; 4]).unwrap();
        let a = InverseDepthMap::new(2, 2, vec![0.0; 4]).unwrap();
        let b = InverseDepthMap::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(associate_3d_flow(&flow, &a, &b).is_err());
    }

    #[test]
    fn raw_depth_variant_requires_finite_maps() {
        let flow = FlowField2D::new(1, 1, vec![0.0], vec![0.0]).unwrap();
        let good = DepthMap::new(1, 1, vec![5.0]).unwrap();
        let bad = DepthMap::new(1, 1, vec![f32::NAN]).unwrap();
        assert!(associate_3d_flow_raw_depth(&flow, &good, &good).is_ok());
        assert!(associate_3d_flow_raw_depth(&flow, &good, &bad).is_err());
        let f3d = associate_3d_flow_raw_depth(&flow, &good, &good).unwrap();
        assert_eq!(f3d.fz[0], 0.0);
    }

    #[test]
    fn downsample_constant_flow_rescales() {
        let flow = FlowField2D::new(8, 4, vec![4.0; 32], vec![8.0; 32]).unwrap();
        let out = flow.downsample(4).unwrap();
        assert_eq!((out.width, out.height), (2, 1));
        assert!(out.u.iter().all(|&x| x == 1.0));
        assert!(out.v.iter().all(|&x| x == 2.0));
    }

    #[test]
    fn downsample_depth_block_average() {
        let d = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = d.downsample(2).unwrap();
        assert_eq!(out.data, vec![2.5]);
    }

    #[test]
    fn downsample_crops_ragged_edges() {
        // 5x3 with factor 2 keeps the top-left 4x2 region.
        let mut data = vec![0.0f32; 15];
        for (i, v) in data.iter_mut().enumerate() {
            *v = i as f32;
        }
        let d = DepthMap::new(5, 3, data).unwrap();
        let out = d.downsample(2).unwrap();
        assert_eq!((out.width, out.height), (2, 1));
        assert_eq!(out.data, vec![(0.0 + 1.0 + 5.0 + 6.0) / 4.0, (2.0 + 3.0 + 7.0 + 8.0) / 4.0]);
    }

    #[test]
    fn downsample_factor_one_is_identity() {
        let f3d = Flow3D::new(2, 1, vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]).unwrap();
        let out = f3d.downsample(1).unwrap();
        assert_eq!(out, f3d);
    }

    #[test]
    fn downsample_bad_factors_error() {
        let d = DepthMap::new(4, 4, vec![1.0; 16]).unwrap();
        assert!(d.downsample(0).is_err());
        assert!(d.downsample(5).is_err());
    }

    #[test]
    fn constructors_validate_shapes_and_values() {
        assert!(FlowField2D::new(2, 2, vec![0.0; 3], vec![0.0; 4]).is_err());
        assert!(FlowField2D::new(1, 1, vec![f32::NAN], vec![0.0]).is_err());
        assert!(InverseDepthMap::new(1, 1, vec![-0.5]).is_err());
        assert!(Flow3D::new(2, 1, vec![0.0; 2], vec![0.0; 2], vec![0.0; 3]).is_err());
    }
}
