//! On-disk traverse directories and activation tensor files.
//!
//! A traverse directory holds three files:
//!
//! * `meta.txt`: `key=value` lines, in this order: `format_version` (1),
//!   `name`, `direction` (`forward`/`reverse`), `condition`, `spacing_m`,
//!   `channels`, `descriptor_dim`, `frame_count`.
//! * `poses.csv`: header `frame_id,x_m,y_m,heading_rad,s_m`, one row per frame.
//! * `frames.bin`: little-endian. Magic `VPRT`, `u32` format version, then for
//!   each frame: `u32` frame id; `C` x (`u32` x, `u32` y, `f64` depth in
//!   meters, NaN when invalid); `C * D` `f32` descriptor values, channel-major;
//!   `D` `f32` global descriptor values.
//!
//! Optional activation tensors use their own file: magic `VPRA`, `u32` W, H,
//! C, then `W * H * C` `f32` values channel-major, row, column. Keypoint
//! coordinates map to depth-map pixels by nearest-pixel rounding of the
//! linearly scaled coordinates (see [`crate::depth_model::depth_at`]).

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::depth_model::{depth_at, DepthMap};
use crate::error::{Result, VprError};
use crate::scalar::Scalar;
use crate::sequence_matcher::{FrameRecord, Pose};
use crate::tensor_features::{extract_features, ActivationTensor, Descriptor, Keypoint};

pub const FORMAT_VERSION: u32 = 1;
pub const FRAMES_MAGIC: [u8; 4] = *b"VPRT";
pub const TENSOR_MAGIC: [u8; 4] = *b"VPRA";

pub const META_FILE: &str = "meta.txt";
pub const POSES_FILE: &str = "poses.csv";
pub const FRAMES_FILE: &str = "frames.bin";
pub const TENSORS_DIR: &str = "tensors";
const POSES_HEADER: &str = "frame_id,x_m,y_m,heading_rad,s_m";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Reverse,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraverseMeta {
    pub name: String,
    pub direction: Direction,
    pub condition: String,
    pub frame_spacing: f64,
    pub channel_count: usize,
    pub descriptor_dim: usize,
}

/// Ordered frames plus the metadata they must agree with.
#[derive(Debug, Clone, PartialEq)]
pub struct Traverse<T> {
    meta: TraverseMeta,
    frames: Vec<FrameRecord<T>>,
}

impl<T: Scalar> Traverse<T> {
    pub fn new(meta: TraverseMeta, frames: Vec<FrameRecord<T>>) -> Result<Self> {
        for label in [&meta.name, &meta.condition] {
            if label.contains(['\n', '\r']) {
                return Err(VprError::structure("metadata labels must be single-line"));
            }
        }
        for (i, frame) in frames.iter().enumerate() {
            if frame.channel_count() != meta.channel_count {
                return Err(VprError::structure(format!(
                    "frame {} has {} channels, metadata says {}",
                    frame.frame_id,
                    frame.channel_count(),
                    meta.channel_count
                )));
            }
            frame.validate(meta.descriptor_dim)?;
            if frame.global_descriptor.len() != meta.descriptor_dim {
                return Err(VprError::structure(format!(
                    "frame {}: global descriptor has dimension {}, expected {}",
                    frame.frame_id,
                    frame.global_descriptor.len(),
                    meta.descriptor_dim
                )));
            }
            if i > 0 && frame.frame_id <= frames[i - 1].frame_id {
                return Err(VprError::structure(format!(
                    "frame ids must be strictly increasing (frame {} follows {})",
                    frame.frame_id,
                    frames[i - 1].frame_id
                )));
            }
        }
        Ok(Self { meta, frames })
    }

    pub fn meta(&self) -> &TraverseMeta {
        &self.meta
    }

    pub fn frames(&self) -> &[FrameRecord<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose<T>> {
        self.frames.iter().map(|f| f.pose).collect()
    }

    pub fn into_parts(self) -> (TraverseMeta, Vec<FrameRecord<T>>) {
        (self.meta, self.frames)
    }
}

pub fn save_traverse<T: Scalar>(traverse: &Traverse<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| VprError::io(dir, e))?;
    let meta = &traverse.meta;

    let meta_text = format!(
        "format_version={FORMAT_VERSION}\nname={}\ndirection={}\ncondition={}\nspacing_m={}\nchannels={}\ndescriptor_dim={}\nframe_count={}\n",
        meta.name,
        meta.direction,
        meta.condition,
        meta.frame_spacing,
        meta.channel_count,
        meta.descriptor_dim,
        traverse.len()
    );
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, meta_text).map_err(|e| VprError::io(&meta_path, e))?;

    let mut poses = String::with_capacity(64 * (traverse.len() + 1));
    poses.push_str(POSES_HEADER);
    poses.push('\n');
    for f in traverse.frames() {
        let p = f.pose;
        poses.push_str(&format!(
            "{},{},{},{},{}\n",
            f.frame_id,
            p.x.to_f64_lossy(),
            p.y.to_f64_lossy(),
            p.heading.to_f64_lossy(),
            p.along_path.to_f64_lossy()
        ));
    }
    let poses_path = dir.join(POSES_FILE);
    fs::write(&poses_path, poses).map_err(|e| VprError::io(&poses_path, e))?;

    let frames_path = dir.join(FRAMES_FILE);
    let file = fs::File::create(&frames_path).map_err(|e| VprError::io(&frames_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| VprError::io(&frames_path, e);
    w.write_all(&FRAMES_MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    for f in traverse.frames() {
        w.write_all(&f.frame_id.to_le_bytes()).map_err(io)?;
        for (kp, depth) in f.keypoints.iter().zip(&f.keypoint_depths) {
            w.write_all(&kp.x.to_le_bytes()).map_err(io)?;
            w.write_all(&kp.y.to_le_bytes()).map_err(io)?;
            let d = depth.map_or(f64::NAN, |d| d.to_f64_lossy());
            w.write_all(&d.to_le_bytes()).map_err(io)?;
        }
        for desc in &f.descriptors {
            for &v in desc.as_slice() {
                w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())
                    .map_err(io)?;
            }
        }
        for &v in &f.global_descriptor {
            w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())
                .map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(VprError::MissingFile(path.to_path_buf()))
        }
        Err(e) => Err(VprError::io(path, e)),
    }
}

fn parse_meta(path: &Path, text: &str) -> Result<(TraverseMeta, usize)> {
    let bad = |message: String| VprError::Metadata {
        path: path.to_path_buf(),
        message,
    };
    let mut version = None;
    let mut name = None;
    let mut direction = None;
    let mut condition = None;
    let mut spacing = None;
    let mut channels = None;
    let mut dim = None;
    let mut count = None;

    fn num<V: FromStr>(key: &str, value: &str) -> std::result::Result<V, String> {
        value
            .trim()
            .parse()
            .map_err(|_| format!("cannot parse {key}={value:?}"))
    }

    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {} is not key=value", lineno + 1)))?;
        match key.trim() {
            "format_version" => version = Some(num::<u32>(key, value).map_err(bad)?),
            "name" => name = Some(value.to_string()),
            "direction" => direction = Some(value.trim().parse::<Direction>().map_err(bad)?),
            "condition" => condition = Some(value.to_string()),
            "spacing_m" => spacing = Some(num::<f64>(key, value).map_err(bad)?),
            "channels" => channels = Some(num::<usize>(key, value).map_err(bad)?),
            "descriptor_dim" => dim = Some(num::<usize>(key, value).map_err(bad)?),
            "frame_count" => count = Some(num::<usize>(key, value).map_err(bad)?),
            other => return Err(bad(format!("unknown key {other:?}"))),
        }
    }
    let missing = |k: &str| bad(format!("missing key {k}"));
    let version = version.ok_or_else(|| missing("format_version"))?;
    if version != FORMAT_VERSION {
        return Err(VprError::UnsupportedVersion {
            path: path.to_path_buf(),
            found: version,
        });
    }
    let spacing = spacing.ok_or_else(|| missing("spacing_m"))?;
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(bad(format!("spacing_m must be positive, got {spacing}")));
    }
    let meta = TraverseMeta {
        name: name.ok_or_else(|| missing("name"))?,
        direction: direction.ok_or_else(|| missing("direction"))?,
        condition: condition.ok_or_else(|| missing("condition"))?,
        frame_spacing: spacing,
        channel_count: channels.ok_or_else(|| missing("channels"))?,
        descriptor_dim: dim.ok_or_else(|| missing("descriptor_dim"))?,
    };
    if meta.channel_count == 0 || meta.descriptor_dim == 0 {
        return Err(VprError::DimensionMismatch {
            path: path.to_path_buf(),
            message: "channels and descriptor_dim must be positive".into(),
        });
    }
    Ok((meta, count.ok_or_else(|| missing("frame_count"))?))
}

fn parse_poses(path: &Path, text: &str, frame_count: usize) -> Result<Vec<(u32, [f64; 4])>> {
    let bad = |message: String| VprError::Poses {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == POSES_HEADER => {}
        other => return Err(bad(format!("expected header {POSES_HEADER:?}, found {other:?}"))),
    }
    let mut rows = Vec::with_capacity(frame_count);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(bad(format!("row {} has {} fields", i + 1, fields.len())));
        }
        let id: u32 = fields[0]
            .parse()
            .map_err(|_| bad(format!("row {}: bad frame_id {:?}", i + 1, fields[0])))?;
        let mut vals = [0.0; 4];
        for (slot, field) in vals.iter_mut().zip(&fields[1..]) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("frame {id}: bad pose value {field:?}")))?;
        }
        rows.push((id, vals));
    }
    if rows.len() != frame_count {
        return Err(bad(format!(
            "{} pose rows for {frame_count} frames",
            rows.len()
        )));
    }
    Ok(rows)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let out: [u8; N] = self.bytes.get(self.pos..self.pos + N)?.try_into().ok()?;
        self.pos += N;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f32(&mut self) -> Option<f32> {
        self.take::<4>().map(f32::from_le_bytes)
    }

    fn f64(&mut self) -> Option<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

/// Loads and fully validates a traverse directory.
pub fn load_traverse<T: Scalar>(dir: &Path) -> Result<Traverse<T>> {
    let meta_path = dir.join(META_FILE);
    let meta_text = String::from_utf8(read_file(&meta_path)?).map_err(|_| VprError::Metadata {
        path: meta_path.clone(),
        message: "not UTF-8".into(),
    })?;
    let (meta, frame_count) = parse_meta(&meta_path, &meta_text)?;

    let poses_path = dir.join(POSES_FILE);
    let poses_text = String::from_utf8(read_file(&poses_path)?).map_err(|_| VprError::Poses {
        path: poses_path.clone(),
        message: "not UTF-8".into(),
    })?;
    let poses = parse_poses(&poses_path, &poses_text, frame_count)?;

    let frames_path = dir.join(FRAMES_FILE);
    let bytes = read_file(&frames_path)?;
    let frames = parse_frames(&frames_path, &bytes, &meta, &poses)?;

    Traverse::new(meta, frames)
}

fn parse_frames<T: Scalar>(
    path: &Path,
    bytes: &[u8],
    meta: &TraverseMeta,
    poses: &[(u32, [f64; 4])],
) -> Result<Vec<FrameRecord<T>>> {
    let path_buf = || path.to_path_buf();
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take::<4>().unwrap_or_default();
    if magic != FRAMES_MAGIC {
        return Err(VprError::BadMagic {
            path: path_buf(),
            expected: FRAMES_MAGIC,
            found: magic,
        });
    }
    let version = cur.u32().ok_or(VprError::Truncated {
        path: path_buf(),
        frame: 0,
    })?;
    if version != FORMAT_VERSION {
        return Err(VprError::UnsupportedVersion {
            path: path_buf(),
            found: version,
        });
    }

    let (c, d) = (meta.channel_count, meta.descriptor_dim);
    let mut frames = Vec::with_capacity(poses.len());
    for (index, &(pose_id, [x, y, heading, s])) in poses.iter().enumerate() {
        let truncated = || VprError::Truncated {
            path: path_buf(),
            frame: index,
        };
        let non_finite = |channel, field| VprError::NonFinite {
            path: path_buf(),
            frame: index,
            channel,
            field,
        };
        let frame_id = cur.u32().ok_or_else(truncated)?;
        if frame_id != pose_id {
            return Err(VprError::DimensionMismatch {
                path: path_buf(),
                message: format!(
                    "frame {index} has id {frame_id} but pose row has id {pose_id}"
                ),
            });
        }
        let mut keypoints = Vec::with_capacity(c);
        let mut depths = Vec::with_capacity(c);
        for k in 0..c {
            let kx = cur.u32().ok_or_else(truncated)?;
            let ky = cur.u32().ok_or_else(truncated)?;
            let depth = cur.f64().ok_or_else(truncated)?;
            keypoints.push(Keypoint {
                channel: k,
                x: kx,
                y: ky,
            });
            depths.push(if depth.is_nan() {
                None
            } else if depth.is_finite() && depth > 0.0 {
                Some(T::of(depth))
            } else {
                return Err(non_finite(Some(k), "depth"));
            });
        }
        let mut descriptors = Vec::with_capacity(c);
        for k in 0..c {
            let mut values = Vec::with_capacity(d);
            for _ in 0..d {
                let v = cur.f32().ok_or_else(truncated)?;
                if !v.is_finite() {
                    return Err(non_finite(Some(k), "descriptor"));
                }
                values.push(T::of(v as f64));
            }
            descriptors.push(Descriptor(values));
        }
        let mut global = Vec::with_capacity(d);
        for _ in 0..d {
            let v = cur.f32().ok_or_else(truncated)?;
            if !v.is_finite() {
                return Err(non_finite(None, "global descriptor"));
            }
            global.push(T::of(v as f64));
        }
        frames.push(FrameRecord {
            frame_id,
            keypoints,
            keypoint_depths: depths,
            descriptors,
            global_descriptor: global,
            pose: Pose {
                along_path: T::of(s),
                x: T::of(x),
                y: T::of(y),
                heading: T::of(heading),
            },
        });
    }
    if cur.pos != bytes.len() {
        return Err(VprError::DimensionMismatch {
            path: path_buf(),
            message: format!(
                "{} trailing bytes after {} frames",
                bytes.len() - cur.pos,
                poses.len()
            ),
        });
    }
    Ok(frames)
}

pub fn save_tensor<T: Scalar>(tensor: &ActivationTensor<T>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 4 * tensor.values().len());
    out.extend_from_slice(&TENSOR_MAGIC);
    for dim in [tensor.width(), tensor.height(), tensor.channels()] {
        let dim = u32::try_from(dim).map_err(|_| VprError::structure("tensor too large"))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for &v in tensor.values() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| VprError::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| VprError::io(path, e))
}

pub fn load_tensor<T: Scalar>(path: &Path) -> Result<ActivationTensor<T>> {
    let bytes = read_file(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.take::<4>().unwrap_or_default();
    if magic != TENSOR_MAGIC {
        return Err(VprError::BadMagic {
            path: path.to_path_buf(),
            expected: TENSOR_MAGIC,
            found: magic,
        });
    }
    let truncated = || VprError::Truncated {
        path: path.to_path_buf(),
        frame: 0,
    };
    let w = cur.u32().ok_or_else(truncated)? as usize;
    let h = cur.u32().ok_or_else(truncated)? as usize;
    let c = cur.u32().ok_or_else(truncated)? as usize;
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| VprError::DimensionMismatch {
            path: path.to_path_buf(),
            message: "tensor dimensions overflow".into(),
        })?;
    if bytes.len() - cur.pos != 4 * n {
        if bytes.len() - cur.pos < 4 * n {
            return Err(truncated());
        }
        return Err(VprError::DimensionMismatch {
            path: path.to_path_buf(),
            message: format!("{}x{}x{} tensor followed by trailing bytes", w, h, c),
        });
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(T::of(cur.f32().ok_or_else(truncated)? as f64));
    }
    ActivationTensor::new(w, h, c, values).map_err(|e| VprError::DimensionMismatch {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Path of the optional raw tensor for a frame inside a traverse directory.
pub fn tensor_path(dir: &Path, frame_id: u32) -> PathBuf {
    dir.join(TENSORS_DIR).join(format!("{frame_id:06}.vpra"))
}

/// Builds a frame from extractor output: one keypoint and descriptor per
/// channel from the tensor, depth sampled from `depthmap` at the scaled
/// keypoint location.
pub fn frame_from_tensor<T: Scalar>(
    frame_id: u32,
    tensor: &ActivationTensor<T>,
    depthmap: &DepthMap<T>,
    scale: (T, T),
    global_descriptor: Vec<T>,
    pose: Pose<T>,
) -> Result<FrameRecord<T>> {
    let (keypoints, descriptors) = extract_features(tensor);
    let keypoint_depths = keypoints
        .iter()
        .map(|kp| depth_at(depthmap, kp, scale))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameRecord {
        frame_id,
        keypoints,
        keypoint_depths,
        descriptors,
        global_descriptor,
        pose,
    })
}

/// Greedy distance-based frame selection: keep the first pose, then every pose
/// whose along-path distance since the last kept pose reaches `spacing`.
pub fn subsample_by_distance<T: Scalar>(positions: &[[T; 2]], spacing: T) -> Result<Vec<usize>> {
    if positions.is_empty() {
        return Err(VprError::contract("cannot subsample an empty trajectory"));
    }
    if !(spacing > T::zero() && spacing.is_finite()) {
        return Err(VprError::contract("spacing must be positive"));
    }
    let mut kept = vec![0];
    let mut travelled = T::zero();
    for i in 1..positions.len() {
        let [x0, y0] = positions[i - 1];
        let [x1, y1] = positions[i];
        travelled = travelled + (x1 - x0).hypot(y1 - y0);
        if travelled >= spacing {
            kept.push(i);
            travelled = T::zero();
        }
    }
    Ok(kept)
}
