#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpr_core::sequence_matcher::{FrameRecord, Pose};
use vpr_core::tensor_features::{Descriptor, Keypoint};
use vpr_core::traverse_store::{Direction, Traverse, TraverseMeta};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random frame with `c` channels of dimension `c`; roughly one depth in six
/// is invalid.
pub fn random_frame(rng: &mut ChaCha8Rng, frame_id: u32, c: usize) -> FrameRecord<f64> {
    let keypoints = (0..c)
        .map(|k| Keypoint { channel: k, x: rng.random_range(0..16), y: rng.random_range(0..12) })
        .collect();
    let keypoint_depths = (0..c)
        .map(|_| if rng.random_range(0..6) == 0 { None } else { Some(rng.random_range(0.5..60.0)) })
        .collect();
    let descriptors = (0..c)
        .map(|_| Descriptor((0..c).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    FrameRecord {
        frame_id,
        keypoints,
        keypoint_depths,
        descriptors,
        global_descriptor: (0..c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        pose: Pose { along_path: frame_id as f64 * 2.0, x: frame_id as f64 * 2.0, y: 0.0, heading: 0.0 },
    }
}

/// Random single-precision traverse; values survive the on-disk format
/// exactly.
pub fn random_traverse_f32(seed: u64) -> Traverse<f32> {
    let mut rng = rng(seed);
    let c = rng.random_range(1..9);
    let n = rng.random_range(0..12);
    let mut id = rng.random_range(0..5u32);
    let mut s = 0.0f32;
    let frames = (0..n)
        .map(|_| {
            id += rng.random_range(1..4);
            s += rng.random_range(0.5..3.0f32);
            FrameRecord {
                frame_id: id,
                keypoints: (0..c)
                    .map(|k| Keypoint { channel: k, x: rng.random_range(0..40), y: rng.random_range(0..30) })
                    .collect(),
                keypoint_depths: (0..c)
                    .map(|_| if rng.random_bool(0.2) { None } else { Some(rng.random_range(0.1..90.0f32)) })
                    .collect(),
                descriptors: (0..c)
                    .map(|_| Descriptor((0..c).map(|_| rng.random_range(-3.0..3.0f32)).collect()))
                    .collect(),
                global_descriptor: (0..c).map(|_| rng.random_range(-3.0..3.0f32)).collect(),
                pose: Pose {
                    along_path: s,
                    x: rng.random_range(-100.0..100.0f32),
                    y: rng.random_range(-100.0..100.0f32),
                    heading: rng.random_range(-3.1..3.1f32),
                },
            }
        })
        .collect();
    let meta = TraverseMeta {
        name: format!("rand-{seed}"),
        direction: if rng.random_bool(0.5) { Direction::Forward } else { Direction::Reverse },
        condition: "synthetic".into(),
        frame_spacing: 2.0,
        channel_count: c,
        descriptor_dim: c,
    };
    Traverse::new(meta, frames).unwrap()
}
