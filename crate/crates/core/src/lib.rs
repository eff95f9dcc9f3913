//! Opposing-viewpoint visual place recognition from depth-filtered keypoint
//! sequences.
//!
//! A query frame is matched against short windows of reference frames: each
//! channel's query descriptor is compared with that channel's descriptors in
//! the window, using only reference keypoints closer than a depth threshold,
//! and the mean of the per-channel minima ranks the candidates proposed by a
//! global-descriptor retrieval stage.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod depth_model;
pub mod error;
pub mod evaluation;
pub mod retrieval;
pub mod scalar;
pub mod sequence_matcher;
pub mod simworld;
pub mod tensor_features;
pub mod traverse_store;

pub use error::{Result, VprError};
pub use scalar::Scalar;

pub type ActivationTensor = tensor_features::ActivationTensor<f64>;
pub type Descriptor = tensor_features::Descriptor<f64>;
pub type DepthMap = depth_model::DepthMap<f64>;
pub type DepthRangeThreshold = depth_model::DepthRangeThreshold<f64>;
pub type CameraIntrinsics = depth_model::CameraIntrinsics<f64>;
pub type FrameRecord = sequence_matcher::FrameRecord<f64>;
pub type Pose = sequence_matcher::Pose<f64>;
pub type MatchScore = sequence_matcher::MatchScore<f64>;
pub type Traverse = traverse_store::Traverse<f64>;
pub type GroundTruth = evaluation::GroundTruth<f64>;
pub type RecallCurve = evaluation::RecallCurve<f64>;
pub type SweepSurface = evaluation::SweepSurface<f64>;
pub type SweepGrid = evaluation::SweepGrid<f64>;
pub type PipelineParams = evaluation::PipelineParams<f64>;

/// Single-precision variants, matching the on-disk descriptor width.
pub mod f32 {
    use crate::{depth_model, evaluation, sequence_matcher, tensor_features, traverse_store};

    pub type ActivationTensor = tensor_features::ActivationTensor<f32>;
    pub type FrameRecord = sequence_matcher::FrameRecord<f32>;
    pub type DepthRangeThreshold = depth_model::DepthRangeThreshold<f32>;
    pub type Traverse = traverse_store::Traverse<f32>;
    pub type SweepSurface = evaluation::SweepSurface<f32>;
}
