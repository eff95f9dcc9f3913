//! Synthetic opposing-viewpoint traverses.
//!
//! A world is a gently curving path with landmarks scattered beside it. Each
//! landmark belongs to one channel and carries a random base descriptor. A
//! camera driven along the path (forward, or reverse facing the other way)
//! observes, per channel, the nearest landmark inside its field of view and
//! range; that landmark supplies the channel's keypoint, depth and descriptor.
//!
//! Appearance change is modelled by [`apply_condition`]: aliased landmarks
//! drift toward a single world-wide pool vector the further away they are
//! seen, and every descriptor picks up zero-mean noise. Under strong change
//! distant aliased landmarks therefore look alike, which is the failure the
//! depth filter is meant to remove. The model is declared, not fitted to any
//! dataset.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Result, VprError};
use crate::scalar::Scalar;
use crate::sequence_matcher::{FrameRecord, Pose};
use crate::tensor_features::{ActivationTensor, Descriptor, Keypoint};
use crate::traverse_store::{Direction, Traverse, TraverseMeta};

/// Height of the camera above the ground plane, meters.
pub const CAMERA_HEIGHT: f64 = 1.5;
/// Landmarks closer than this along the optical axis are not observed.
pub const MIN_VISIBLE_DEPTH: f64 = 0.5;
/// Closest lateral distance of a landmark to the path centreline.
pub const LATERAL_MIN: f64 = 1.5;
pub const LANDMARK_MAX_HEIGHT: f64 = 6.0;
/// Per-component noise standard deviation per unit of severity.
pub const NOISE_PER_SEVERITY: f64 = 0.1;

/// The scene (path geometry and landmarks) extends this far past both ends
/// of the driven route, so end frames still look at populated road.
pub const SCENE_MARGIN: f64 = 50.0;

const PATH_STEP: f64 = 0.5;
const PATH_WAVELENGTH: f64 = 120.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub path_length: f64,
    pub landmark_count: usize,
    pub lateral_spread: f64,
    pub channel_count: usize,
    pub fov_half_angle: f64,
    pub max_visible_range: f64,
    pub frame_spacing: f64,
    pub appearance_severity: f64,
    pub aliasing_fraction: f64,
    /// Relative standard deviation of multiplicative depth noise.
    pub depth_noise_std: f64,
    /// Largest heading rate of the path, rad/m. Zero gives a straight path.
    pub path_curvature: f64,
    /// Mean free path of line-of-sight occlusion, meters: a landmark at depth
    /// `z` is unobstructed with probability `exp(-z / occlusion_length)`.
    /// `inf` disables occlusion.
    pub occlusion_length: f64,
    pub tensor_width: usize,
    pub tensor_height: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            path_length: 200.0,
            landmark_count: 704,
            lateral_spread: 10.0,
            channel_count: 64,
            fov_half_angle: 0.8,
            max_visible_range: 180.0,
            frame_spacing: 2.0,
            appearance_severity: 0.0,
            aliasing_fraction: 0.0,
            depth_noise_std: 0.0,
            path_curvature: 0.01,
            occlusion_length: 20.0,
            tensor_width: 16,
            tensor_height: 12,
            seed: 0,
        }
    }
}

/// Keys accepted by [`WorldConfig::from_key_values`], in serialisation order.
pub const WORLD_CONFIG_KEYS: &[&str] = &[
    "path_length",
    "landmark_count",
    "lateral_spread",
    "channel_count",
    "fov_half_angle",
    "max_visible_range",
    "frame_spacing",
    "appearance_severity",
    "aliasing_fraction",
    "depth_noise_std",
    "path_curvature",
    "occlusion_length",
    "tensor_width",
    "tensor_height",
    "seed",
];

impl WorldConfig {
    pub fn descriptor_dim(&self) -> usize {
        self.channel_count
    }

    /// Number of frames a render produces: `floor(path_length / spacing) + 1`.
    pub fn frame_count(&self) -> usize {
        (self.path_length / self.frame_spacing + 1e-9).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(VprError::contract(m.to_string()));
        if !(self.path_length.is_finite() && self.path_length > 0.0) {
            return fail("path_length must be positive");
        }
        if self.landmark_count == 0 {
            return fail("landmark_count must be at least 1");
        }
        if self.channel_count == 0 {
            return fail("channel_count must be at least 1");
        }
        if !(self.lateral_spread.is_finite() && self.lateral_spread >= 0.0) {
            return fail("lateral_spread must be non-negative");
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle < PI / 2.0) {
            return fail("fov_half_angle must lie in (0, pi/2)");
        }
        if !(self.max_visible_range.is_finite() && self.max_visible_range > MIN_VISIBLE_DEPTH) {
            return fail("max_visible_range must exceed the minimum visible depth");
        }
        if !(self.frame_spacing.is_finite() && self.frame_spacing > 0.0) {
            return fail("frame_spacing must be positive");
        }
        if !(self.appearance_severity.is_finite() && self.appearance_severity >= 0.0) {
            return fail("appearance_severity must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.aliasing_fraction) {
            return fail("aliasing_fraction must lie in [0, 1]");
        }
        if !(self.depth_noise_std.is_finite() && self.depth_noise_std >= 0.0) {
            return fail("depth_noise_std must be finite and non-negative");
        }
        if !(self.path_curvature.is_finite() && self.path_curvature >= 0.0) {
            return fail("path_curvature must be finite and non-negative");
        }
        if !(self.occlusion_length > 0.0) {
            return fail("occlusion_length must be positive (inf disables occlusion)");
        }
        if self.tensor_width == 0 || self.tensor_height == 0 {
            return fail("tensor grid must be non-empty");
        }
        Ok(())
    }

    /// `key=value` lines in [`WORLD_CONFIG_KEYS`] order.
    pub fn to_key_values(&self) -> String {
        let values = [
            self.path_length.to_string(),
            self.landmark_count.to_string(),
            self.lateral_spread.to_string(),
            self.channel_count.to_string(),
            self.fov_half_angle.to_string(),
            self.max_visible_range.to_string(),
            self.frame_spacing.to_string(),
            self.appearance_severity.to_string(),
            self.aliasing_fraction.to_string(),
            self.depth_noise_std.to_string(),
            self.path_curvature.to_string(),
            self.occlusion_length.to_string(),
            self.tensor_width.to_string(),
            self.tensor_height.to_string(),
            self.seed.to_string(),
        ];
        WORLD_CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Applies `key=value` overrides on top of the defaults. `seed` is
    /// mandatory. Blank lines and `#` comments are skipped.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let mut cfg = WorldConfig::default();
        let unknown: Vec<String> = pairs
            .iter()
            .filter(|(k, _)| !WORLD_CONFIG_KEYS.contains(&k.as_str()))
            .map(|(k, _)| k.clone())
            .collect();
        if !unknown.is_empty() {
            return Err(VprError::Config {
                message: format!("unknown keys: {}", unknown.join(", ")),
                unknown,
            });
        }
        let mut seen_seed = false;
        for (key, value) in &pairs {
            let bad = || VprError::Config {
                message: format!("cannot parse {key}={value:?}"),
                unknown: vec![],
            };
            let f = || value.parse::<f64>().map_err(|_| bad());
            let u = || value.parse::<usize>().map_err(|_| bad());
            match key.as_str() {
                "path_length" => cfg.path_length = f()?,
                "landmark_count" => cfg.landmark_count = u()?,
                "lateral_spread" => cfg.lateral_spread = f()?,
                "channel_count" => cfg.channel_count = u()?,
                "fov_half_angle" => cfg.fov_half_angle = f()?,
                "max_visible_range" => cfg.max_visible_range = f()?,
                "frame_spacing" => cfg.frame_spacing = f()?,
                "appearance_severity" => cfg.appearance_severity = f()?,
                "aliasing_fraction" => cfg.aliasing_fraction = f()?,
                "depth_noise_std" => cfg.depth_noise_std = f()?,
                "path_curvature" => cfg.path_curvature = f()?,
                "occlusion_length" => cfg.occlusion_length = f()?,
                "tensor_width" => cfg.tensor_width = u()?,
                "tensor_height" => cfg.tensor_height = u()?,
                "seed" => {
                    cfg.seed = value.parse().map_err(|_| bad())?;
                    seen_seed = true;
                }
                _ => unreachable!("unknown keys rejected above"),
            }
        }
        if !seen_seed {
            return Err(VprError::Config {
                message: "missing required key seed".into(),
                unknown: vec![],
            });
        }
        Ok(cfg)
    }
}

/// Splits `key=value` text into trimmed pairs, rejecting duplicates.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| VprError::Config {
            message: format!("line {} is not key=value: {line:?}", i + 1),
            unknown: vec![],
        })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(VprError::Config {
                message: format!("duplicate key {k}"),
                unknown: vec![],
            });
        }
        out.push((k, v));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub position: [f64; 3],
    /// Arc length of the path point the landmark was placed beside.
    pub along_path: f64,
    pub base_descriptor: Vec<f64>,
    pub channel: usize,
    pub aliased: bool,
}

/// Camera placement on the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub along_path: f64,
    pub position: [f64; 2],
    pub heading: f64,
}

/// A landmark seen by a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub landmark: usize,
    /// Range along the optical axis, meters.
    pub depth: f64,
    /// Pixel on the virtual tensor grid.
    pub cell: (u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    config: WorldConfig,
    /// Scene polyline, vertices every `PATH_STEP` meters of arc length,
    /// starting `SCENE_MARGIN` before the route and ending that far past it.
    path: Vec<[f64; 2]>,
    landmarks: Vec<Landmark>,
    pool: Vec<f64>,
}

/// Seeded appearance condition of a render.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub label: String,
    pub severity: f64,
    pub seed: u64,
}

/// splitmix64 finaliser, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named stream `tag` and item `index` under `base`.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    mix(mix(mix(base) ^ tag) ^ index)
}

const TAG_WORLD: u64 = 0x574f_524c_44;
const TAG_APPEARANCE: u64 = 1;
const TAG_DEPTH: u64 = 2;
const TAG_GLOBAL: u64 = 3;
const TAG_OCCLUSION: u64 = 4;
const TAG_CONDITION: u64 = 5;

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, TAG_WORLD, 0));

    let amplitude = config.path_curvature * PATH_WAVELENGTH / (2.0 * PI);
    let phase = rng.random_range(0.0..2.0 * PI);
    let heading_at = |s: f64| amplitude * (2.0 * PI * s / PATH_WAVELENGTH + phase).sin();
    let scene_length = config.path_length + 2.0 * SCENE_MARGIN;
    let mut path = vec![[0.0, 0.0]];
    let mut s = 0.0;
    while s < scene_length - 1e-12 {
        let step = PATH_STEP.min(scene_length - s);
        let h = heading_at(s + step / 2.0);
        let [x, y] = *path.last().expect("path starts non-empty");
        path.push([x + step * h.cos(), y + step * h.sin()]);
        s += step;
    }
    // put the start of the driven route at the origin
    let (origin, _) = path_point(&path, scene_length, SCENE_MARGIN);
    for p in &mut path {
        p[0] -= origin[0];
        p[1] -= origin[1];
    }

    let c = config.channel_count;
    let pool: Vec<f64> = (0..c).map(|_| rng.sample(StandardNormal)).collect();

    let n = config.landmark_count;
    let aliased_count = (config.aliasing_fraction * n as f64).round() as usize;
    let mut aliased = vec![false; n];
    for i in sample(&mut rng, n, aliased_count.min(n)) {
        aliased[i] = true;
    }

    let lateral_lo = LATERAL_MIN.min(config.lateral_spread);
    let mut landmarks = Vec::with_capacity(n);
    for is_aliased in aliased {
        let along = rng.random_range(-SCENE_MARGIN..=config.path_length + SCENE_MARGIN);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let offset = lateral_lo + rng.random::<f64>() * (config.lateral_spread - lateral_lo);
        let height = rng.random::<f64>() * LANDMARK_MAX_HEIGHT;
        let (base, heading) = path_point(&path, scene_length, along + SCENE_MARGIN);
        let normal = [-heading.sin(), heading.cos()];
        let position = [
            base[0] + side * offset * normal[0],
            base[1] + side * offset * normal[1],
            height,
        ];
        landmarks.push(Landmark {
            position,
            along_path: along,
            base_descriptor: (0..c).map(|_| rng.sample(StandardNormal)).collect(),
            channel: rng.random_range(0..c),
            aliased: is_aliased,
        });
    }

    Ok(World {
        config: config.clone(),
        path,
        landmarks,
        pool,
    })
}

/// Position and tangent heading at arc length `s` (clamped to the path).
fn path_point(path: &[[f64; 2]], length: f64, s: f64) -> ([f64; 2], f64) {
    let s = s.clamp(0.0, length);
    let seg = ((s / PATH_STEP).floor() as usize).min(path.len() - 2);
    let a = path[seg];
    let b = path[seg + 1];
    let seg_len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let t = if seg_len > 0.0 {
        ((s - seg as f64 * PATH_STEP) / seg_len).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
        (b[1] - a[1]).atan2(b[0] - a[0]),
    )
}

impl World {
    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn pool(&self) -> &[f64] {
        &self.pool
    }

    pub fn path(&self) -> &[[f64; 2]] {
        &self.path
    }

    /// Camera pose of frame `index` when driving in `direction`.
    pub fn camera_pose(&self, direction: Direction, index: usize) -> CameraPose {
        let n = self.config.frame_count();
        let slot = match direction {
            Direction::Forward => index,
            Direction::Reverse => n - 1 - index,
        };
        let s = (slot as f64 * self.config.frame_spacing).min(self.config.path_length);
        let (position, tangent) = path_point(
            &self.path,
            self.config.path_length + 2.0 * SCENE_MARGIN,
            s + SCENE_MARGIN,
        );
        let heading = match direction {
            Direction::Forward => tangent,
            Direction::Reverse => wrap_angle(tangent + PI),
        };
        CameraPose {
            along_path: s,
            position,
            heading,
        }
    }

    /// Deterministic line-of-sight draw for a camera pose and landmark.
    pub fn unoccluded(&self, camera: &CameraPose, landmark: usize, depth: f64) -> bool {
        if self.config.occlusion_length.is_infinite() {
            return true;
        }
        let key = camera.along_path.to_bits() ^ camera.heading.to_bits().rotate_left(17);
        let u = (derive_seed(self.config.seed ^ key, TAG_OCCLUSION, landmark as u64) >> 11) as f64
            / (1u64 << 53) as f64;
        u < (-depth / self.config.occlusion_length).exp()
    }

    /// Landmarks inside the camera's field of view and range and not
    /// occluded, in landmark order.
    pub fn visible_landmarks(&self, camera: &CameraPose) -> Vec<Observation> {
        let cfg = &self.config;
        let (sin, cos) = camera.heading.sin_cos();
        let tan_fov = cfg.fov_half_angle.tan();
        let focal_w = cfg.tensor_width as f64 / 2.0 / tan_fov;
        let focal_h = focal_w;
        self.landmarks
            .iter()
            .enumerate()
            .filter_map(|(i, lm)| {
                let dx = lm.position[0] - camera.position[0];
                let dy = lm.position[1] - camera.position[1];
                let depth = dx * cos + dy * sin;
                let right = dx * sin - dy * cos;
                let down = CAMERA_HEIGHT - lm.position[2];
                let visible = depth > MIN_VISIBLE_DEPTH
                    && depth <= cfg.max_visible_range
                    && right.abs() <= depth * tan_fov
                    && self.unoccluded(camera, i, depth);
                visible.then(|| {
                    let u = cfg.tensor_width as f64 / 2.0 + focal_w * right / depth;
                    let v = cfg.tensor_height as f64 / 2.0 + focal_h * down / depth;
                    let cell = (
                        (u.floor().max(0.0) as u32).min(cfg.tensor_width as u32 - 1),
                        (v.floor().max(0.0) as u32).min(cfg.tensor_height as u32 - 1),
                    );
                    Observation {
                        landmark: i,
                        depth,
                        cell,
                    }
                })
            })
            .collect()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Zero-mean noise vector with per-component standard deviation `std`.
pub fn condition_noise(dim: usize, std: f64, seed: u64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; dim];
    }
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| normal.sample(&mut rng)).collect()
}

/// Appearance of a landmark descriptor under a condition of severity `sigma`.
///
/// Aliased landmarks are blended toward `pool` with weight
/// `min(1, sigma * distance / max_visible_range)`; every descriptor then gets
/// additive noise with standard deviation `0.1 * sigma` per component.
pub fn apply_condition(
    descriptor: &[f64],
    pool: &[f64],
    severity: f64,
    aliased: bool,
    distance: f64,
    max_visible_range: f64,
    seed: u64,
) -> Vec<f64> {
    if severity == 0.0 {
        return descriptor.to_vec();
    }
    let w = if aliased {
        (severity * distance / max_visible_range).min(1.0)
    } else {
        0.0
    };
    let noise = condition_noise(descriptor.len(), NOISE_PER_SEVERITY * severity, seed);
    descriptor
        .iter()
        .zip(pool)
        .zip(noise)
        .map(|((&b, &p), e)| w * p + (1.0 - w) * b + e)
        .collect()
}

/// `true_depth * (1 + e)`, `e ~ N(0, std)`, kept strictly positive.
pub fn corrupt_depth(true_depth: f64, depth_noise_std: f64, seed: u64) -> f64 {
    if depth_noise_std == 0.0 {
        return true_depth;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: f64 = rng.sample::<f64, _>(StandardNormal) * depth_noise_std;
    (true_depth * (1.0 + e)).max(true_depth * 1e-3)
}

/// Renders a traverse of the world in `direction` under `condition`.
pub fn render_traverse<T: Scalar>(
    world: &World,
    direction: Direction,
    condition: &Condition,
) -> Result<Traverse<T>> {
    let cfg = &world.config;
    if !(condition.severity.is_finite() && condition.severity >= 0.0) {
        return Err(VprError::contract("severity must be finite and non-negative"));
    }
    let c = cfg.channel_count;
    let n = cfg.frame_count();
    let global_std = NOISE_PER_SEVERITY * condition.severity;

    let frames = (0..n)
        .map(|index| {
            let camera = world.camera_pose(direction, index);
            let seen = world.visible_landmarks(&camera);

            let mut nearest: Vec<Option<&Observation>> = vec![None; c];
            for obs in &seen {
                let slot = &mut nearest[world.landmarks[obs.landmark].channel];
                if slot.map_or(true, |best| obs.depth < best.depth) {
                    *slot = Some(obs);
                }
            }

            let appearance = |obs: &Observation| {
                let lm = &world.landmarks[obs.landmark];
                apply_condition(
                    &lm.base_descriptor,
                    &world.pool,
                    condition.severity,
                    lm.aliased,
                    obs.depth,
                    cfg.max_visible_range,
                    derive_seed(condition.seed, TAG_APPEARANCE, obs.landmark as u64),
                )
            };

            let mut keypoints = Vec::with_capacity(c);
            let mut depths = Vec::with_capacity(c);
            let mut descriptors = Vec::with_capacity(c);
            for (k, obs) in nearest.iter().enumerate() {
                match obs {
                    Some(obs) => {
                        let depth_seed = derive_seed(
                            condition.seed,
                            TAG_DEPTH,
                            ((index as u64) << 32) | k as u64,
                        );
                        keypoints.push(Keypoint {
                            channel: k,
                            x: obs.cell.0,
                            y: obs.cell.1,
                        });
                        depths.push(Some(T::of(corrupt_depth(
                            obs.depth,
                            cfg.depth_noise_std,
                            depth_seed,
                        ))));
                        descriptors.push(to_descriptor(&appearance(obs)));
                    }
                    None => {
                        keypoints.push(Keypoint {
                            channel: k,
                            x: 0,
                            y: 0,
                        });
                        depths.push(None);
                        descriptors.push(Descriptor::zeros(c));
                    }
                }
            }

            let mut global = vec![0.0; c];
            for obs in &seen {
                for (g, v) in global.iter_mut().zip(appearance(obs)) {
                    *g += v;
                }
            }
            if !seen.is_empty() {
                let inv = 1.0 / seen.len() as f64;
                global.iter_mut().for_each(|g| *g *= inv);
            }
            let noise = condition_noise(
                c,
                global_std,
                derive_seed(condition.seed, TAG_GLOBAL, index as u64),
            );
            global.iter_mut().zip(noise).for_each(|(g, e)| *g += e);

            FrameRecord {
                frame_id: index as u32,
                keypoints,
                keypoint_depths: depths,
                descriptors,
                global_descriptor: global.into_iter().map(T::of).collect(),
                pose: Pose {
                    along_path: T::of(camera.along_path),
                    x: T::of(camera.position[0]),
                    y: T::of(camera.position[1]),
                    heading: T::of(camera.heading),
                },
            }
        })
        .collect();

    Traverse::new(
        TraverseMeta {
            name: format!("sim-{}-{}", direction, condition.label),
            direction,
            condition: condition.label.clone(),
            frame_spacing: cfg.frame_spacing,
            channel_count: c,
            descriptor_dim: c,
        },
        frames,
    )
}

/// The two appearance conditions of an experiment, both at the configured
/// severity and seeded from the world seed.
pub fn condition_pair(config: &WorldConfig) -> [Condition; 2] {
    let make = |i: u64| Condition {
        label: format!("cond{i}"),
        severity: config.appearance_severity,
        seed: derive_seed(config.seed, TAG_CONDITION, i),
    };
    [make(0), make(1)]
}

/// Reference (forward, first condition) and query (reverse, second
/// condition) traverses of one world.
pub fn opposing_pair<T: Scalar>(world: &World) -> Result<(Traverse<T>, Traverse<T>)> {
    let [a, b] = condition_pair(&world.config);
    Ok((
        render_traverse(world, Direction::Forward, &a)?,
        render_traverse(world, Direction::Reverse, &b)?,
    ))
}

fn to_descriptor<T: Scalar>(values: &[f64]) -> Descriptor<T> {
    Descriptor(values.iter().map(|&v| T::of(v)).collect())
}

/// Small dense tensor with values drawn from a coarse grid so that channels
/// regularly contain tied maxima.
pub fn random_tensor<T: Scalar>(
    width: usize,
    height: usize,
    channels: usize,
    seed: u64,
) -> Result<ActivationTensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..width * height * channels)
        .map(|_| T::of(rng.random_range(-4i32..=12) as f64 * 0.5))
        .collect();
    ActivationTensor::new(width, height, channels, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            path_length: 60.0,
            landmark_count: 80,
            channel_count: 8,
            seed: 7,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate_world(&small()).unwrap();
        let b = generate_world(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_world(&WorldConfig { seed: 8, ..small() }).unwrap();
        assert_ne!(a.landmarks, c.landmarks);
    }

    #[test]
    fn degenerate_configs_rejected() {
        for cfg in [
            WorldConfig { landmark_count: 0, ..small() },
            WorldConfig { path_length: 0.0, ..small() },
            WorldConfig { frame_spacing: 0.0, ..small() },
            WorldConfig { aliasing_fraction: 1.5, ..small() },
            WorldConfig { appearance_severity: -1.0, ..small() },
        ] {
            assert!(matches!(generate_world(&cfg), Err(VprError::Contract(_))));
        }
    }

    #[test]
    fn landmarks_within_path() {
        let world = generate_world(&small()).unwrap();
        for lm in world.landmarks() {
            assert!((-SCENE_MARGIN..=60.0 + SCENE_MARGIN).contains(&lm.along_path));
            assert!(lm.channel < 8);
            assert!(lm.base_descriptor.len() == 8);
        }
        let aliased = world.landmarks().iter().filter(|l| l.aliased).count();
        assert_eq!(aliased, 0);
        let w2 = generate_world(&WorldConfig { aliasing_fraction: 0.25, ..small() }).unwrap();
        assert_eq!(w2.landmarks().iter().filter(|l| l.aliased).count(), 20);
    }

    #[test]
    fn path_has_requested_arc_length() {
        let world = generate_world(&small()).unwrap();
        let len: f64 = world
            .path()
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum();
        assert!((len - 60.0 - 2.0 * SCENE_MARGIN).abs() < 1e-9);
        let start = world.camera_pose(Direction::Forward, 0);
        assert!(start.position[0].hypot(start.position[1]) < 1e-9);
    }

    #[test]
    fn out_of_range_landmark_not_seen() {
        let mut world = generate_world(&WorldConfig {
            max_visible_range: 5.0,
            occlusion_length: f64::INFINITY,
            path_curvature: 0.0,
            ..small()
        })
        .unwrap();
        world.landmarks.truncate(1);
        world.landmarks[0].position = [10.0, 0.0, 1.5];
        let cam = world.camera_pose(Direction::Forward, 0);
        assert!(world.visible_landmarks(&cam).is_empty());
        world.landmarks[0].position = [4.0, 0.0, 1.5];
        let seen = world.visible_landmarks(&cam);
        assert_eq!(seen.len(), 1);
        assert!((seen[0].depth - 4.0).abs() < 1e-12);
    }

    #[test]
    fn frame_count_formula() {
        let cfg = WorldConfig { path_length: 20.0, frame_spacing: 2.0, ..small() };
        assert_eq!(cfg.frame_count(), 11);
        let world = generate_world(&cfg).unwrap();
        let cond = Condition { label: "a".into(), severity: 0.0, seed: 1 };
        let t = render_traverse::<f64>(&world, Direction::Forward, &cond).unwrap();
        assert_eq!(t.len(), 11);
    }

    #[test]
    fn zero_severity_is_identity() {
        let d = vec![0.5, -1.0, 2.0];
        assert_eq!(apply_condition(&d, &[9.0; 3], 0.0, true, 30.0, 40.0, 3), d);
    }

    #[test]
    fn saturated_blend_reaches_pool() {
        let pool = vec![1.0, -2.0, 0.5, 3.0];
        let out = apply_condition(&[5.0, 5.0, 5.0, 5.0], &pool, 50.0, true, 40.0, 40.0, 11);
        let noise = condition_noise(4, 5.0, 11);
        for i in 0..4 {
            assert!((out[i] - pool[i] - noise[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mid_range_blend_recomputed() {
        let base = [1.0, 0.0, -1.0];
        let pool = [0.0, 2.0, 2.0];
        let (sigma, dist, range, seed) = (0.8, 20.0, 40.0, 99);
        let out = apply_condition(&base, &pool, sigma, true, dist, range, seed);
        let w = 0.4;
        let noise = condition_noise(3, 0.08, seed);
        for i in 0..3 {
            let expected = w * pool[i] + (1.0 - w) * base[i] + noise[i];
            assert!((out[i] - expected).abs() < 1e-12);
        }
        // non-aliased: noise only
        let plain = apply_condition(&base, &pool, sigma, false, dist, range, seed);
        for i in 0..3 {
            assert!((plain[i] - base[i] - noise[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_noise_identity_and_positivity() {
        assert_eq!(corrupt_depth(12.5, 0.0, 4), 12.5);
        for seed in 0..2000 {
            assert!(corrupt_depth(3.0, 2.0, seed) > 0.0);
        }
    }

    #[test]
    fn config_key_values_round_trip() {
        let cfg = WorldConfig { seed: 42, appearance_severity: 1.5, ..WorldConfig::default() };
        assert_eq!(WorldConfig::from_key_values(&cfg.to_key_values()).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        match WorldConfig::from_key_values("seed=1\nbogus=3\nalso_bad=1\n") {
            Err(VprError::Config { unknown, .. }) => assert_eq!(unknown, vec!["bogus", "also_bad"]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            WorldConfig::from_key_values("path_length=10\n"),
            Err(VprError::Config { .. })
        ));
        assert!(WorldConfig::from_key_values("seed=1\nseed=2\n").is_err());
        assert!(WorldConfig::from_key_values("seed=x\n").is_err());
    }

    #[test]
    fn random_tensor_deterministic() {
        let a = random_tensor::<f32>(4, 3, 5, 9).unwrap();
        let b = random_tensor::<f32>(4, 3, 5, 9).unwrap();
        assert_eq!(a, b);
    }
}
