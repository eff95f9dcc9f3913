//! Metric depth for keypoints and the close-range keypoint filter.
//!
//! Depth is carried as `Option<T>`: `None` is the invalid sentinel produced by
//! a non-positive disparity or a missing observation. It never passes the
//! depth filter.

use crate::error::{Result, VprError};
use crate::scalar::Scalar;
use crate::tensor_features::Keypoint;

/// Stereo-equivalent intrinsics used to turn disparity into depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    focal_length: T,
    baseline: T,
}

impl<T: Scalar> CameraIntrinsics<T> {
    /// `focal_length` in pixels, `baseline` in meters; both must be positive.
    pub fn new(focal_length: T, baseline: T) -> Result<Self> {
        if !(focal_length > T::zero() && focal_length.is_finite()) {
            return Err(VprError::contract("focal length must be positive"));
        }
        if !(baseline > T::zero() && baseline.is_finite()) {
            return Err(VprError::contract("baseline must be positive"));
        }
        Ok(Self {
            focal_length,
            baseline,
        })
    }

    pub fn focal_length(&self) -> T {
        self.focal_length
    }

    pub fn baseline(&self) -> T {
        self.baseline
    }
}

/// `f * b / disparity`; `None` for non-positive or non-finite disparity.
pub fn disparity_to_depth<T: Scalar>(disparity: T, intrinsics: &CameraIntrinsics<T>) -> Option<T> {
    if !(disparity.is_finite() && disparity > T::zero()) {
        return None;
    }
    Some(intrinsics.focal_length * intrinsics.baseline / disparity)
}

/// Per-pixel metric depth, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<T> {
    width: usize,
    height: usize,
    depths: Vec<Option<T>>,
}

impl<T: Scalar> DepthMap<T> {
    pub fn new(width: usize, height: usize, depths: Vec<Option<T>>) -> Result<Self> {
        if depths.len() != width * height {
            return Err(VprError::structure(format!(
                "depth map {width}x{height} needs {} entries, got {}",
                width * height,
                depths.len()
            )));
        }
        if let Some(pos) = depths
            .iter()
            .position(|d| matches!(d, Some(v) if !(v.is_finite() && *v > T::zero())))
        {
            return Err(VprError::structure(format!(
                "depth at linear index {pos} is not a positive finite value"
            )));
        }
        Ok(Self {
            width,
            height,
            depths,
        })
    }

    /// Builds a depth map from a disparity image, mapping bad disparities to
    /// the invalid sentinel.
    pub fn from_disparity(
        width: usize,
        height: usize,
        disparity: &[T],
        intrinsics: &CameraIntrinsics<T>,
    ) -> Result<Self> {
        let depths = disparity
            .iter()
            .map(|&u| disparity_to_depth(u, intrinsics))
            .collect();
        Self::new(width, height, depths)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<T> {
        self.depths[y * self.width + x]
    }
}

/// Depth under a tensor-space keypoint, reading pixel
/// `(round(x * sx), round(y * sy))`.
pub fn depth_at<T: Scalar>(
    depthmap: &DepthMap<T>,
    keypoint: &Keypoint,
    scale: (T, T),
) -> Result<Option<T>> {
    let px = (T::of(keypoint.x as f64) * scale.0).round();
    let py = (T::of(keypoint.y as f64) * scale.1).round();
    let (px, py) = (px.to_f64_lossy(), py.to_f64_lossy());
    let oob = || VprError::OutOfBounds {
        x: px as i64,
        y: py as i64,
        width: depthmap.width,
        height: depthmap.height,
    };
    if !(px >= 0.0 && py >= 0.0) {
        return Err(oob());
    }
    let (xi, yi) = (px as usize, py as usize);
    if xi >= depthmap.width || yi >= depthmap.height {
        return Err(oob());
    }
    Ok(depthmap.get(xi, yi))
}

/// Upper bound `d` on keypoint depth. Unbounded accepts every valid depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthRangeThreshold<T> {
    Bounded(T),
    Unbounded,
}

impl<T: Scalar> DepthRangeThreshold<T> {
    pub fn bounded(d: T) -> Result<Self> {
        if d.is_infinite() && d > T::zero() {
            return Ok(Self::Unbounded);
        }
        if !(d > T::zero()) {
            return Err(VprError::contract("depth threshold must be positive"));
        }
        Ok(Self::Bounded(d))
    }

    /// `u < d`, strictly. Invalid depth never passes.
    #[inline]
    pub fn accepts(&self, depth: Option<T>) -> bool {
        match (depth, self) {
            (None, _) => false,
            (Some(u), DepthRangeThreshold::Unbounded) => !u.is_nan(),
            (Some(u), DepthRangeThreshold::Bounded(d)) => u < *d,
        }
    }

    /// The threshold as a number; `+inf` when unbounded.
    pub fn value(&self) -> T {
        match self {
            DepthRangeThreshold::Bounded(d) => *d,
            DepthRangeThreshold::Unbounded => T::infinity(),
        }
    }
}

pub fn filter_by_depth<T: Scalar>(
    keypoints: &[(Keypoint, Option<T>)],
    threshold: DepthRangeThreshold<T>,
) -> Vec<Keypoint> {
    keypoints
        .iter()
        .filter(|(_, depth)| threshold.accepts(*depth))
        .map(|(kp, _)| *kp)
        .collect()
}
