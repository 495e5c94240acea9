//! Readers and writers for the on-disk formats: Middlebury `.flo` flow,
//! grayscale PFM depth, `.f3d` 3D-flow rasters, KITTI pose files, intrinsics
//! text, and binary PPM images. All binary payloads are float32; `.flo` and
//! `.f3d` are little-endian, PFM's endianness follows the sign of its scale
//! line. Every writer is the bit-exact inverse of its reader.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::bytes::ByteReader;
use crate::error::{Error, Result};
use crate::flow::{DepthMap, Flow3D, FlowField2D};
use crate::geometry::{
    orthonormality_drift, orthonormalize_rotation, CameraIntrinsics, ColorImage, SE3Pose,
    Trajectory, ROTATION_TOL,
};

/// Magic number opening a `.flo` file, stored as a little-endian float32.
pub const FLO_MAGIC: f32 = 202021.25;
/// Magic bytes opening a `.f3d` file.
pub const F3D_MAGIC: &[u8; 4] = b"F3D1";

/// Rotations parsed from a pose file may deviate from orthonormality by up to
/// this much; they are re-orthonormalized on load. Larger drift is an error.
pub const POSE_DRIFT_MAX: f64 = 1e-3;

const MAX_RASTER_DIM: i32 = 1 << 20;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn raster_dims(r: &mut ByteReader) -> Result<(usize, usize)> {
    let w = r.i32()?;
    let h = r.i32()?;
    if w <= 0 || h <= 0 || w > MAX_RASTER_DIM || h > MAX_RASTER_DIM {
        return Err(r.err(&format!("implausible raster dimensions {w}x{h}")));
    }
    Ok((w as usize, h as usize))
}

/// Read Middlebury `.flo` optical flow: float32 magic, int32 width/height,
/// then `h*w` interleaved `(u, v)` float32 pairs.
pub fn read_flo(path: &Path) -> Result<FlowField2D> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let magic = r.f32()?;
    if magic != FLO_MAGIC {
        return Err(r.err(&format!("bad magic {magic}, expected {FLO_MAGIC}")));
    }
    let (w, h) = raster_dims(&mut r)?;
    let n = w * h;
    if r.remaining() != n * 8 {
        return Err(r.err(&format!(
            "{} bytes of flow data, expected {} for {w}x{h}",
            r.remaining(),
            n * 8
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        u.push(r.f32()?);
        v.push(r.f32()?);
    }
    FlowField2D::new(w, h, u, v)
}

pub fn write_flo(field: &FlowField2D, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + field.u.len() * 8);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(field.width as i32).to_le_bytes());
    buf.extend_from_slice(&(field.height as i32).to_le_bytes());
    for (u, v) in field.u.iter().zip(&field.v) {
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &buf)
}

/// Skip PPM/PFM-style whitespace and `#` comments, returning the next token.
fn ascii_token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(format!(
            "{}: truncated header",
            path.display()
        )));
    }
    Ok(&bytes[start..*pos])
}

fn header_usize(bytes: &[u8], pos: &mut usize, path: &Path, what: &str) -> Result<usize> {
    let tok = ascii_token(bytes, pos, path)?;
    let s = std::str::from_utf8(tok)
        .map_err(|_| Error::parse(format!("{}: non-ASCII {what}", path.display())))?;
    let v: i64 = s
        .parse()
        .map_err(|_| Error::parse(format!("{}: bad {what} {s:?}", path.display())))?;
    if v <= 0 || v > MAX_RASTER_DIM as i64 {
        return Err(Error::parse(format!(
            "{}: implausible {what} {v}",
            path.display()
        )));
    }
    Ok(v as usize)
}

/// Read a grayscale PFM depth map. Header: `Pf`, width, height, scale (its
/// sign gives the endianness); body: float32 rows stored bottom-up. The
/// returned raster is top-down.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = read_file(path)?;
    let mut pos = 0;
    let kind = ascii_token(&bytes, &mut pos, path)?;
    if kind == b"PF" {
        return Err(Error::parse(format!(
            "{}: color PF is unsupported, expected grayscale Pf",
            path.display()
        )));
    }
    if kind != b"Pf" {
        return Err(Error::parse(format!(
            "{}: not a PFM file (header {:?})",
            path.display(),
            String::from_utf8_lossy(kind)
        )));
    }
    let w = header_usize(&bytes, &mut pos, path, "width")?;
    let h = header_usize(&bytes, &mut pos, path, "height")?;
    let scale_tok = ascii_token(&bytes, &mut pos, path)?;
    let scale: f64 = std::str::from_utf8(scale_tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(format!("{}: bad scale line", path.display())))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::parse(format!(
            "{}: scale must be finite and nonzero",
            path.display()
        )));
    }
    // Exactly one whitespace byte separates the header from the binary body.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse(format!(
            "{}: missing separator after header",
            path.display()
        )));
    }
    pos += 1;
    let body = &bytes[pos..];
    if body.len() != w * h * 4 {
        return Err(Error::parse(format!(
            "{}: {} bytes of data, expected {} for {w}x{h}",
            path.display(),
            body.len(),
            w * h * 4
        )));
    }
    let little_endian = scale < 0.0;
    let mut data = vec![0.0f32; w * h];
    for row in 0..h {
        // File rows run bottom-up.
        let src = &body[(h - 1 - row) * w * 4..(h - row) * w * 4];
        for (i, chunk) in src.chunks_exact(4).enumerate() {
            let b: [u8; 4] = chunk.try_into().unwrap();
            data[row * w + i] = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    DepthMap::new(w, h, data)
}

/// Write a grayscale PFM (always little-endian, scale `-1.0`).
pub fn write_pfm(depth: &DepthMap, path: &Path) -> Result<()> {
    let mut buf = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height).into_bytes();
    for row in (0..depth.height).rev() {
        for v in &depth.data[row * depth.width..(row + 1) * depth.width] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(path, &buf)
}

/// Read a `.f3d` 3D-flow raster: magic `F3D1`, int32 width/height, then the
/// fx, fy and fz planes as little-endian float32.
pub fn read_f3d(path: &Path) -> Result<Flow3D> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, path);
    if r.take(4)? != F3D_MAGIC {
        return Err(r.err("bad magic, expected F3D1"));
    }
    let (w, h) = raster_dims(&mut r)?;
    let n = w * h;
    if r.remaining() != n * 12 {
        return Err(r.err(&format!(
            "{} bytes of data, expected {} for three {w}x{h} planes",
            r.remaining(),
            n * 12
        )));
    }
    let plane = |r: &mut ByteReader| -> Result<Vec<f32>> { (0..n).map(|_| r.f32()).collect() };
    let fx = plane(&mut r)?;
    let fy = plane(&mut r)?;
    let fz = plane(&mut r)?;
    Flow3D::new(w, h, fx, fy, fz)
}

pub fn write_f3d(raster: &Flow3D, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + raster.fx.len() * 12);
    buf.extend_from_slice(F3D_MAGIC);
    buf.extend_from_slice(&(raster.width as i32).to_le_bytes());
    buf.extend_from_slice(&(raster.height as i32).to_le_bytes());
    for plane in [&raster.fx, &raster.fy, &raster.fz] {
        for v in plane {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(path, &buf)
}

/// Load a KITTI pose file: one pose per line as 12 space-separated floats,
/// the row-major top 3x4 of the world-from-camera matrix. Rotations with
/// small numeric drift are re-orthonormalized; drift beyond `POSE_DRIFT_MAX`
/// is an error. Blank lines are ignored.
pub fn load_poses(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut vals = [0.0f64; 12];
        let mut count = 0;
        for tok in line.split_ascii_whitespace() {
            if count < 12 {
                vals[count] = tok.parse().map_err(|_| {
                    Error::parse(format!(
                        "{}: line {lineno}: bad number {tok:?}",
                        path.display()
                    ))
                })?;
            }
            count += 1;
        }
        if count != 12 {
            return Err(Error::parse(format!(
                "{}: line {lineno}: expected 12 values, found {count}",
                path.display()
            )));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(format!(
                "{}: line {lineno}: non-finite value",
                path.display()
            )));
        }
        let rotation = Matrix3::new(
            vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
        );
        let translation = Vector3::new(vals[3], vals[7], vals[11]);
        let drift = orthonormality_drift(&rotation);
        let rotation = if drift <= ROTATION_TOL {
            rotation
        } else if drift <= POSE_DRIFT_MAX {
            orthonormalize_rotation(&rotation)
        } else {
            return Err(Error::parse(format!(
                "{}: line {lineno}: rotation departs from orthonormal by {drift:.2e}",
                path.display()
            )));
        };
        let pose = SE3Pose::new(rotation, translation).map_err(|e| {
            Error::parse(format!("{}: line {lineno}: {e}", path.display()))
        })?;
        poses.push(pose);
    }
    Trajectory::new(poses)
        .map_err(|_| Error::parse(format!("{}: no poses found", path.display())))
}

/// Write a trajectory in KITTI pose format. Floats use the shortest decimal
/// form that parses back to the same bits, so load(save(t)) == t exactly.
pub fn save_poses(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut out = String::new();
    for pose in traj.poses() {
        let r = pose.rotation();
        let t = pose.translation();
        let row = [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Load camera intrinsics from a one-line text file `fx fy cx cy skew`.
pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let vals: Vec<f64> = text
        .split_ascii_whitespace()
        .map(|tok| {
            tok.parse().map_err(|_| {
                Error::parse(format!("{}: bad number {tok:?}", path.display()))
            })
        })
        .collect::<Result<_>>()?;
    if vals.len() != 5 {
        return Err(Error::parse(format!(
            "{}: expected 5 values (fx fy cx cy skew), found {}",
            path.display(),
            vals.len()
        )));
    }
    CameraIntrinsics::new(vals[0], vals[1], vals[2], vals[3], vals[4])
}

pub fn save_intrinsics(intr: &CameraIntrinsics, path: &Path) -> Result<()> {
    let line = format!(
        "{} {} {} {} {}\n",
        intr.fx, intr.fy, intr.cx, intr.cy, intr.skew
    );
    write_file(path, line.as_bytes())
}

/// Read a binary PPM (`P6`, maxval 255) color image.
pub fn read_ppm(path: &Path) -> Result<ColorImage> {
    let bytes = read_file(path)?;
    let mut pos = 0;
    let kind = ascii_token(&bytes, &mut pos, path)?;
    if kind != b"P6" {
        return Err(Error::parse(format!(
            "{}: not a binary PPM (header {:?})",
            path.display(),
            String::from_utf8_lossy(kind)
        )));
    }
    let w = header_usize(&bytes, &mut pos, path, "width")?;
    let h = header_usize(&bytes, &mut pos, path, "height")?;
    let maxval = header_usize(&bytes, &mut pos, path, "maxval")?;
    if maxval != 255 {
        return Err(Error::parse(format!(
            "{}: only maxval 255 is supported, found {maxval}",
            path.display()
        )));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::parse(format!(
            "{}: missing separator after header",
            path.display()
        )));
    }
    pos += 1;
    let body = &bytes[pos..];
    if body.len() != w * h * 3 {
        return Err(Error::parse(format!(
            "{}: {} bytes of pixels, expected {} for {w}x{h}",
            path.display(),
            body.len(),
            w * h * 3
        )));
    }
    let rgb = body
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    ColorImage::new(w, h, rgb)
}

pub fn write_ppm(image: &ColorImage, path: &Path) -> Result<()> {
    let mut buf = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    for px in &image.rgb {
        buf.extend_from_slice(px);
    }
    write_file(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn flo_single_pixel_from_raw_bytes() {
        let dir = tmp();
        let path = dir.path().join("a.flo");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let field = read_flo(&path).unwrap();
        assert_eq!((field.width, field.height), (1, 1));
        assert_eq!(field.u, vec![1.5]);
        assert_eq!(field.v, vec![-2.0]);
    }

    #[test]
    fn flo_rejects_bad_magic_and_truncation() {
        let dir = tmp();
        let path = dir.path().join("a.flo");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0f32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&[0; 8]);
        std::fs::write(&path, &bytes).unwrap();
        let err = read_flo(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let field = FlowField2D::new(2, 2, vec![0.0; 4], vec![0.0; 4]).unwrap();
        write_flo(&field, &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 4]).unwrap();
        assert!(read_flo(&path).is_err());
    }

    #[test]
    fn flo_roundtrip_is_bit_identical() {
        let dir = tmp();
        let path = dir.path().join("a.flo");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 6 * 4;
        let u: Vec<f32> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let v: Vec<f32> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let field = FlowField2D::new(6, 4, u, v).unwrap();
        write_flo(&field, &path).unwrap();
        let back = read_flo(&path).unwrap();
        assert_eq!(back, field);
        let path2 = dir.path().join("b.flo");
        write_flo(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn pfm_reads_bottom_up_rows() {
        let dir = tmp();
        let path = dir.path().join("d.pfm");
        // 2x1: a single row, so file order equals memory order.
        let mut bytes = b"Pf\n2 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&3.0f32.to_le_bytes());
        bytes.extend_from_slice(&4.0f32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let depth = read_pfm(&path).unwrap();
        assert_eq!(depth.data, vec![3.0, 4.0]);

        // 2x2: file rows bottom-up, memory top-down.
        let path = dir.path().join("e.pfm");
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        for v in [30.0f32, 40.0, 10.0, 20.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let depth = read_pfm(&path).unwrap();
        assert_eq!(depth.data, vec![10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn pfm_positive_scale_means_big_endian() {
        let dir = tmp();
        let le = dir.path().join("le.pfm");
        let be = dir.path().join("be.pfm");
        let mut lb = b"Pf\n2 1\n-1.0\n".to_vec();
        let mut bb = b"Pf\n2 1\n1.0\n".to_vec();
        for v in [3.5f32, -7.25] {
            lb.extend_from_slice(&v.to_le_bytes());
            bb.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(&le, &lb).unwrap();
        std::fs::write(&be, &bb).unwrap();
        assert_eq!(read_pfm(&le).unwrap(), read_pfm(&be).unwrap());
    }

    #[test]
    fn pfm_rejects_color_and_bad_sizes() {
        let dir = tmp();
        let path = dir.path().join("c.pfm");
        std::fs::write(&path, b"PF\n1 1\n-1.0\n____________").unwrap();
        let err = read_pfm(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported"), "{err}");

        std::fs::write(&path, b"Pf\n2 1\n-1.0\n____").unwrap();
        let err = read_pfm(&path).unwrap_err();
        assert!(err.to_string().contains("expected 8"), "{err}");
    }

    #[test]
    fn pfm_roundtrip_preserves_values_and_bytes() {
        let dir = tmp();
        let path = dir.path().join("d.pfm");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f32> = (0..5 * 3).map(|_| rng.gen_range(0.1..80.0)).collect();
        let depth = DepthMap::new(5, 3, data).unwrap();
        write_pfm(&depth, &path).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back, depth);
        let path2 = dir.path().join("e.pfm");
        write_pfm(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn f3d_roundtrip_and_validation() {
        let dir = tmp();
        let path = dir.path().join("r.f3d");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4 * 3;
        let plane = |rng: &mut ChaCha8Rng| -> Vec<f32> {
            (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()
        };
        let raster = Flow3D::new(4, 3, plane(&mut rng), plane(&mut rng), plane(&mut rng)).unwrap();
        write_f3d(&raster, &path).unwrap();
        assert_eq!(read_f3d(&path).unwrap(), raster);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_f3d(&path).is_err());
    }

    #[test]
    fn pose_identity_line_parses() {
        let dir = tmp();
        let path = dir.path().join("poses.txt");
        std::fs::write(&path, "1 0 0 0 0 1 0 0 0 0 1 0\n").unwrap();
        let traj = load_poses(&path).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.poses()[0], SE3Pose::identity());
    }

    #[test]
    fn pose_errors_name_the_line() {
        let dir = tmp();
        let path = dir.path().join("poses.txt");
        std::fs::write(
            &path,
            "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n",
        )
        .unwrap();
        let err = load_poses(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("11"), "{msg}");

        std::fs::write(&path, "1 0 0 0 0 1 0 nan 0 0 1 0\n").unwrap();
        assert!(load_poses(&path).unwrap_err().to_string().contains("line 1"));
    }

    fn random_trajectory(n: usize, seed: u64) -> Trajectory {
        use crate::geometry::{accumulate_trajectory, RelativePose};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rels: Vec<RelativePose> = (0..n)
            .map(|_| {
                RelativePose::new(
                    Vector3::new(
                        rng.gen_range(-0.5..0.5),
                        rng.gen_range(-0.1..0.1),
                        rng.gen_range(0.5..1.5),
                    ),
                    [
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                    ],
                )
            })
            .collect();
        accumulate_trajectory(&rels)
    }

    #[test]
    fn pose_save_load_is_exact() {
        let dir = tmp();
        let path = dir.path().join("poses.txt");
        let traj = random_trajectory(40, 4);
        save_poses(&traj, &path).unwrap();
        let back = load_poses(&path).unwrap();
        assert_eq!(back.len(), traj.len());
        for (a, b) in back.poses().iter().zip(traj.poses()) {
            assert_eq!(a, b);
        }
        // And the text itself is a fixed point of save(load(_)).
        let path2 = dir.path().join("poses2.txt");
        save_poses(&back, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn pose_drift_policy() {
        let dir = tmp();
        let path = dir.path().join("poses.txt");
        // Mild drift: uniformly scaled rotation re-orthonormalizes.
        let s = 1.0 + 1e-5;
        std::fs::write(
            &path,
            format!("{s} 0 0 0 0 {s} 0 0 0 0 {s} 0\n"),
        )
        .unwrap();
        let traj = load_poses(&path).unwrap();
        assert!(orthonormality_drift(traj.poses()[0].rotation()) <= ROTATION_TOL);

        // Gross drift is rejected.
        std::fs::write(&path, "2 0 0 0 0 2 0 0 0 0 2 0\n").unwrap();
        let err = load_poses(&path).unwrap_err();
        assert!(err.to_string().contains("orthonormal"), "{err}");
    }

    #[test]
    fn intrinsics_roundtrip_and_errors() {
        let dir = tmp();
        let path = dir.path().join("intrinsics.txt");
        std::fs::write(&path, "718.856 718.856 607.1928 185.2157 0\n").unwrap();
        let intr = load_intrinsics(&path).unwrap();
        assert_eq!(intr.fx, 718.856);
        assert_eq!(intr.cy, 185.2157);
        assert_eq!(intr.skew, 0.0);
        save_intrinsics(&intr, &path).unwrap();
        assert_eq!(load_intrinsics(&path).unwrap(), intr);

        std::fs::write(&path, "718.856 718.856 607.1928\n").unwrap();
        assert!(load_intrinsics(&path).unwrap_err().to_string().contains("5 values"));
    }

    #[test]
    fn ppm_roundtrip_and_validation() {
        let dir = tmp();
        let path = dir.path().join("img.ppm");
        let image = ColorImage::new(
            2,
            1,
            vec![[10, 20, 30], [200, 100, 0]],
        )
        .unwrap();
        write_ppm(&image, &path).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), image);

        // Comments in the header are legal.
        let mut bytes = b"P6\n# camera 0\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(read_ppm(&path).unwrap().rgb, vec![[1, 2, 3]]);

        std::fs::write(&path, b"P6\n1 1\n65535\n______").unwrap();
        assert!(read_ppm(&path).unwrap_err().to_string().contains("maxval"));
    }
}
