//! Sequence-to-single scoring of a query frame against a window of reference
//! frames.
//!
//! For every channel the query descriptor is compared with that channel's
//! descriptor in each reference frame whose keypoint lies closer than the
//! depth threshold; the channel keeps its minimum distance. The candidate's
//! score is the mean of those minima over the channels that had at least one
//! close keypoint. Only the reference side is depth-filtered.

use std::collections::BTreeMap;

use crate::depth_model::DepthRangeThreshold;
use crate::error::{Result, VprError};
use crate::scalar::Scalar;
use crate::tensor_features::{cosine_distance_unchecked, Descriptor, Keypoint};

/// Score assigned when no channel survives the depth filter.
pub const WORST_SCORE: f64 = 2.0;

/// Camera pose of a frame: arc length along the path, planar position and
/// heading (radians, counter-clockwise from +x).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose<T> {
    pub along_path: T,
    pub x: T,
    pub y: T,
    pub heading: T,
}

/// One place observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<T> {
    pub frame_id: u32,
    pub keypoints: Vec<Keypoint>,
    pub keypoint_depths: Vec<Option<T>>,
    pub descriptors: Vec<Descriptor<T>>,
    pub global_descriptor: Vec<T>,
    pub pose: Pose<T>,
}

impl<T: Scalar> FrameRecord<T> {
    pub fn channel_count(&self) -> usize {
        self.keypoints.len()
    }

    /// Checks the per-channel arrays agree in length and every descriptor has
    /// `descriptor_dim` entries.
    pub fn validate(&self, descriptor_dim: usize) -> Result<()> {
        let c = self.keypoints.len();
        if self.keypoint_depths.len() != c || self.descriptors.len() != c {
            return Err(VprError::structure(format!(
                "frame {}: {} keypoints, {} depths, {} descriptors",
                self.frame_id,
                c,
                self.keypoint_depths.len(),
                self.descriptors.len()
            )));
        }
        for (k, kp) in self.keypoints.iter().enumerate() {
            if kp.channel != k {
                return Err(VprError::structure(format!(
                    "frame {}: keypoint in slot {k} claims channel {}",
                    self.frame_id, kp.channel
                )));
            }
        }
        if let Some(k) = self
            .descriptors
            .iter()
            .position(|d| d.len() != descriptor_dim)
        {
            return Err(VprError::structure(format!(
                "frame {}: descriptor {k} has length {}, expected {descriptor_dim}",
                self.frame_id,
                self.descriptors[k].len()
            )));
        }
        Ok(())
    }
}

/// Reference frame window `[i - h*m, ..., i, ..., i + h*m]` clamped to the
/// traverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSequence {
    pub center: usize,
    pub half_width: usize,
    pub stride: usize,
    pub members: Vec<usize>,
}

/// Window of `length + 1` frames (for stride 1) centred on `center`.
/// `length` must be even; `stride` skips frames to mimic a faster camera.
pub fn build_sequence(
    traverse_length: usize,
    center: usize,
    length: usize,
    stride: usize,
) -> Result<ReferenceSequence> {
    if center >= traverse_length {
        return Err(VprError::OutOfBounds {
            x: center as i64,
            y: 0,
            width: traverse_length,
            height: 1,
        });
    }
    if length % 2 != 0 {
        return Err(VprError::contract(format!(
            "sequence length must be even, got {length}"
        )));
    }
    if stride == 0 {
        return Err(VprError::contract("stride must be at least 1"));
    }
    let half_width = length / 2;
    let members = (-(half_width as i64)..=half_width as i64)
        .map(|j| center as i64 + j * stride as i64)
        .filter(|&idx| idx >= 0 && idx < traverse_length as i64)
        .map(|idx| idx as usize)
        .collect();
    Ok(ReferenceSequence {
        center,
        half_width,
        stride,
        members,
    })
}

/// Per-channel minimum distance and the `frame_id` that attained it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMatch<T> {
    pub distance: T,
    pub frame_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchScore<T> {
    pub score: T,
    /// Keys are the contributing channels.
    pub per_channel: BTreeMap<usize, ChannelMatch<T>>,
}

impl<T: Scalar> MatchScore<T> {
    pub fn contributing_channels(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_channel.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.per_channel.is_empty()
    }
}

pub fn sequence_min_distances<T: Scalar>(
    query: &FrameRecord<T>,
    sequence_frames: &[&FrameRecord<T>],
    threshold: DepthRangeThreshold<T>,
) -> Result<MatchScore<T>> {
    let channels = query.channel_count();
    let dim = query.descriptors.first().map_or(0, |d| d.len());
    query.validate(dim)?;
    for frame in sequence_frames {
        if frame.channel_count() != channels {
            return Err(VprError::structure(format!(
                "reference frame {} has {} channels, query {} has {channels}",
                frame.frame_id,
                frame.channel_count(),
                query.frame_id
            )));
        }
        frame.validate(dim)?;
    }

    let mut per_channel = BTreeMap::new();
    for k in 0..channels {
        let q = query.descriptors[k].as_slice();
        let mut best: Option<ChannelMatch<T>> = None;
        for frame in sequence_frames {
            if !threshold.accepts(frame.keypoint_depths[k]) {
                continue;
            }
            let distance = cosine_distance_unchecked(q, frame.descriptors[k].as_slice());
            let better = match best {
                None => true,
                Some(b) => {
                    distance < b.distance
                        || (distance == b.distance && frame.frame_id < b.frame_id)
                }
            };
            if better {
                best = Some(ChannelMatch {
                    distance,
                    frame_id: frame.frame_id,
                });
            }
        }
        if let Some(b) = best {
            per_channel.insert(k, b);
        }
    }

    let score = if per_channel.is_empty() {
        T::of(WORST_SCORE)
    } else {
        let sum: T = per_channel.values().map(|m| m.distance).sum();
        sum / T::of(per_channel.len() as f64)
    };
    Ok(MatchScore { score, per_channel })
}

/// Centre index of the lowest-scoring candidate; ties go to the smaller index.
pub fn select_best<T: Scalar>(candidates: &[(usize, MatchScore<T>)]) -> Result<usize> {
    let mut iter = candidates.iter();
    let first = iter
        .next()
        .ok_or_else(|| VprError::contract("no candidates to select from"))?;
    let (mut best_idx, mut best_score) = (first.0, first.1.score);
    for (idx, m) in iter {
        if m.score < best_score || (m.score == best_score && *idx < best_idx) {
            best_idx = *idx;
            best_score = m.score;
        }
    }
    Ok(best_idx)
}
