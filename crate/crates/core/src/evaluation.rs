//! End-to-end localisation, ground truth with visual offset, recall curves and
//! parameter sweeps.
//!
//! The pipeline per query: global-descriptor retrieval of the top-N reference
//! frames, a reference sequence around each candidate, depth-filtered
//! sequence-to-single scoring, and selection of the lowest score. Every query
//! yields exactly one match; recall divides by the number of queries.

use rayon::prelude::*;

use crate::depth_model::DepthRangeThreshold;
use crate::error::{Result, VprError};
use crate::retrieval::top_n_candidates;
use crate::scalar::Scalar;
use crate::sequence_matcher::{
    build_sequence, select_best, sequence_min_distances, FrameRecord, MatchScore, Pose,
};
use crate::traverse_store::Traverse;

/// Default along-path offset between an opposing-viewpoint query and the
/// reference it overlaps most with, meters.
pub const DEFAULT_VISUAL_OFFSET: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams<T> {
    pub depth_threshold: DepthRangeThreshold<T>,
    /// Even window length `l`; the window holds `l + 1` frames at stride 1.
    pub sequence_length: usize,
    pub stride: usize,
    pub top_n: usize,
}

/// Final decision for one query. Indices are positions within the traverses.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMatch<T> {
    pub query: usize,
    pub matched: usize,
    pub score: T,
    /// Retrieval candidates in rank order.
    pub candidates: Vec<usize>,
}

/// Top-N reference indices for every query frame.
pub fn retrieve_candidates<T: Scalar>(
    query: &Traverse<T>,
    reference: &Traverse<T>,
    top_n: usize,
) -> Result<Vec<Vec<usize>>> {
    let database: Vec<&[T]> = reference
        .frames()
        .iter()
        .map(|f| f.global_descriptor.as_slice())
        .collect();
    query
        .frames()
        .par_iter()
        .map(|q| {
            Ok(top_n_candidates(&q.global_descriptor, &database, top_n)?
                .into_iter()
                .map(|c| c.index)
                .collect())
        })
        .collect()
}

/// Scores one query against the sequence built around `center`.
pub fn score_candidate<T: Scalar>(
    query: &FrameRecord<T>,
    reference: &Traverse<T>,
    center: usize,
    params: &PipelineParams<T>,
) -> Result<MatchScore<T>> {
    let seq = build_sequence(
        reference.len(),
        center,
        params.sequence_length,
        params.stride,
    )?;
    let frames: Vec<&FrameRecord<T>> = seq.members.iter().map(|&i| &reference.frames()[i]).collect();
    sequence_min_distances(query, &frames, params.depth_threshold)
}

/// Sequence matching and selection given precomputed retrieval candidates.
pub fn match_with_candidates<T: Scalar>(
    query: &Traverse<T>,
    reference: &Traverse<T>,
    candidates: &[Vec<usize>],
    params: &PipelineParams<T>,
) -> Result<Vec<QueryMatch<T>>> {
    if candidates.len() != query.len() {
        return Err(VprError::structure(format!(
            "{} candidate lists for {} queries",
            candidates.len(),
            query.len()
        )));
    }
    query
        .frames()
        .par_iter()
        .zip(candidates.par_iter())
        .enumerate()
        .map(|(qi, (frame, cands))| {
            let scored = cands
                .iter()
                .map(|&c| Ok((c, score_candidate(frame, reference, c, params)?)))
                .collect::<Result<Vec<_>>>()?;
            let matched = select_best(&scored)?;
            let score = scored
                .iter()
                .find(|(c, _)| *c == matched)
                .map(|(_, m)| m.score)
                .expect("selected candidate is among the scored ones");
            Ok(QueryMatch {
                query: qi,
                matched,
                score,
                candidates: cands.clone(),
            })
        })
        .collect()
}

/// Full pipeline over every query frame.
pub fn localize<T: Scalar>(
    query: &Traverse<T>,
    reference: &Traverse<T>,
    params: &PipelineParams<T>,
) -> Result<Vec<QueryMatch<T>>> {
    if params.sequence_length % 2 != 0 {
        return Err(VprError::contract(format!(
            "sequence length must be even, got {}",
            params.sequence_length
        )));
    }
    let candidates = retrieve_candidates(query, reference, params.top_n)?;
    match_with_candidates(query, reference, &candidates, params)
}

/// Where each query should have matched, and where each reference frame is.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub targets: Vec<[T; 2]>,
    pub reference_positions: Vec<[T; 2]>,
    pub offset: T,
}

/// Target for each query: its position advanced `offset` meters along the
/// polyline of subsequent query positions. Past the last frame the advance
/// continues in a straight line along the final direction of travel.
pub fn make_ground_truth<T: Scalar>(
    query_poses: &[Pose<T>],
    reference_poses: &[Pose<T>],
    offset: T,
) -> Result<GroundTruth<T>> {
    if query_poses.is_empty() || reference_poses.is_empty() {
        return Err(VprError::structure("ground truth needs query and reference poses"));
    }
    if !(offset >= T::zero() && offset.is_finite()) {
        return Err(VprError::contract("visual offset must be finite and non-negative"));
    }
    let all_finite = |p: &Pose<T>| p.x.is_finite() && p.y.is_finite() && p.heading.is_finite();
    if !query_poses.iter().chain(reference_poses).all(all_finite) {
        return Err(VprError::structure("poses must be finite"));
    }

    let pts: Vec<[T; 2]> = query_poses.iter().map(|p| [p.x, p.y]).collect();
    let final_dir = final_direction(query_poses);
    let targets = (0..pts.len())
        .map(|start| advance_along(&pts, start, offset, final_dir))
        .collect();
    Ok(GroundTruth {
        targets,
        reference_positions: reference_poses.iter().map(|p| [p.x, p.y]).collect(),
        offset,
    })
}

fn final_direction<T: Scalar>(poses: &[Pose<T>]) -> [T; 2] {
    for w in poses.windows(2).rev() {
        let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
        let len = dx.hypot(dy);
        if len > T::zero() {
            return [dx / len, dy / len];
        }
    }
    let h = poses.last().expect("non-empty").heading;
    [h.cos(), h.sin()]
}

fn advance_along<T: Scalar>(pts: &[[T; 2]], start: usize, offset: T, tail: [T; 2]) -> [T; 2] {
    let mut remaining = offset;
    let mut here = pts[start];
    for next in &pts[start + 1..] {
        let (dx, dy) = (next[0] - here[0], next[1] - here[1]);
        let seg = dx.hypot(dy);
        if seg >= remaining {
            if seg == T::zero() {
                return here;
            }
            let t = remaining / seg;
            return [here[0] + t * dx, here[1] + t * dy];
        }
        remaining = remaining - seg;
        here = *next;
    }
    [here[0] + remaining * tail[0], here[1] + remaining * tail[1]]
}

fn match_errors<T: Scalar>(matches: &[(usize, usize)], gt: &GroundTruth<T>) -> Result<Vec<T>> {
    matches
        .iter()
        .map(|&(q, r)| {
            let target = gt.targets.get(q).ok_or_else(|| {
                VprError::structure(format!("query index {q} has no ground truth"))
            })?;
            let pos = gt.reference_positions.get(r).ok_or_else(|| {
                VprError::structure(format!("reference index {r} has no position"))
            })?;
            Ok((pos[0] - target[0]).hypot(pos[1] - target[1]))
        })
        .collect()
}

/// Fraction of `(query, matched reference)` pairs whose reference lies within
/// `radius` (inclusive) of the query's target.
pub fn recall_at_radius<T: Scalar>(
    matches: &[(usize, usize)],
    gt: &GroundTruth<T>,
    radius: T,
) -> Result<T> {
    if matches.is_empty() {
        return Err(VprError::contract("recall needs at least one query"));
    }
    let errors = match_errors(matches, gt)?;
    let hits = errors.iter().filter(|&&e| e <= radius).count();
    Ok(T::of(hits as f64) / T::of(matches.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallCurve<T> {
    pub radii: Vec<T>,
    pub recall: Vec<T>,
    pub n_queries: usize,
}

pub fn recall_curve<T: Scalar>(
    matches: &[(usize, usize)],
    gt: &GroundTruth<T>,
    radii: &[T],
) -> Result<RecallCurve<T>> {
    if radii.is_empty() {
        return Err(VprError::contract("radius list is empty"));
    }
    if radii.iter().any(|r| r.is_nan() || *r < T::zero()) {
        return Err(VprError::contract("radii must be non-negative numbers"));
    }
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(VprError::contract("radii must be sorted ascending"));
    }
    if matches.is_empty() {
        return Err(VprError::contract("recall needs at least one query"));
    }
    let errors = match_errors(matches, gt)?;
    let n = T::of(matches.len() as f64);
    let recall = radii
        .iter()
        .map(|&r| T::of(errors.iter().filter(|&&e| e <= r).count() as f64) / n)
        .collect();
    Ok(RecallCurve {
        radii: radii.to_vec(),
        recall,
        n_queries: matches.len(),
    })
}

impl<T: Scalar> RecallCurve<T> {
    /// CSV table `radius_meters,recall,n_queries`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius_meters,recall,n_queries\n");
        for (r, v) in self.radii.iter().zip(&self.recall) {
            out.push_str(&format!(
                "{},{},{}\n",
                fixed(r.to_f64_lossy()),
                fixed(v.to_f64_lossy()),
                self.n_queries
            ));
        }
        out
    }
}

/// Fixed decimal with six fractional digits; `inf` for unbounded values.
pub fn fixed(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Grid and fixed settings shared by every cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid<T> {
    pub depth_thresholds: Vec<DepthRangeThreshold<T>>,
    pub sequence_lengths: Vec<usize>,
    pub top_n: usize,
    pub radius: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell<T> {
    pub depth_threshold: DepthRangeThreshold<T>,
    pub sequence_length: usize,
    /// `None` when the cell's pipeline run failed.
    pub recall: Option<T>,
    pub error: Option<String>,
}

/// Recall at a fixed radius over a `(d, l)` grid, cells ordered by `d` then
/// `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSurface<T> {
    pub stride: usize,
    pub radius: T,
    pub n_queries: usize,
    pub cells: Vec<SweepCell<T>>,
}

impl<T: Scalar> SweepSurface<T> {
    pub fn cell(&self, depth_threshold: DepthRangeThreshold<T>, sequence_length: usize) -> Option<&SweepCell<T>> {
        self.cells
            .iter()
            .find(|c| c.depth_threshold == depth_threshold && c.sequence_length == sequence_length)
    }

    /// Largest recall over the populated cells.
    pub fn peak(&self) -> Option<T> {
        self.cells
            .iter()
            .filter_map(|c| c.recall)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: T| a.max(v))))
    }

    /// CSV table `d_meters,l_frames,stride,radius_meters,recall,n_queries`.
    /// Failed cells leave `recall` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d_meters,l_frames,stride,radius_meters,recall,n_queries\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fixed(cell.depth_threshold.value().to_f64_lossy()),
                cell.sequence_length,
                self.stride,
                fixed(self.radius.to_f64_lossy()),
                cell.recall.map(|r| fixed(r.to_f64_lossy())).unwrap_or_default(),
                self.n_queries
            ));
        }
        out
    }
}

/// Runs the pipeline for every `(d, l)` cell and records recall at
/// `grid.radius`. Retrieval does not depend on the grid and is shared.
pub fn sweep_d_l<T: Scalar>(
    query: &Traverse<T>,
    reference: &Traverse<T>,
    gt: &GroundTruth<T>,
    grid: &SweepGrid<T>,
    stride: usize,
) -> Result<SweepSurface<T>> {
    let candidates = retrieve_for_sweep(query, reference, gt, grid)?;
    sweep_with_candidates(query, reference, gt, grid, stride, &candidates)
}

fn retrieve_for_sweep<T: Scalar>(
    query: &Traverse<T>,
    reference: &Traverse<T>,
    gt: &GroundTruth<T>,
    grid: &SweepGrid<T>,
) -> Result<Vec<Vec<usize>>> {
    if grid.depth_thresholds.is_empty() || grid.sequence_lengths.is_empty() {
        return Err(VprError::contract("sweep grid must be non-empty"));
    }
    if gt.targets.len() != query.len() || gt.reference_positions.len() != reference.len() {
        return Err(VprError::structure("ground truth does not match the traverses"));
    }
    retrieve_candidates(query, reference, grid.top_n)
}

fn sweep_with_candidates<T: Scalar>(
    query: &Traverse<T>,
    reference: &Traverse<T>,
    gt: &GroundTruth<T>,
    grid: &SweepGrid<T>,
    stride: usize,
    candidates: &[Vec<usize>],
) -> Result<SweepSurface<T>> {
    let combos: Vec<(DepthRangeThreshold<T>, usize)> = grid
        .depth_thresholds
        .iter()
        .flat_map(|&d| grid.sequence_lengths.iter().map(move |&l| (d, l)))
        .collect();
    let cells = combos
        .into_par_iter()
        .map(|(d, l)| {
            let params = PipelineParams {
                depth_threshold: d,
                sequence_length: l,
                stride,
                top_n: grid.top_n,
            };
            let outcome = if l % 2 != 0 {
                Err(VprError::contract(format!("sequence length must be even, got {l}")))
            } else {
                match_with_candidates(query, reference, candidates, &params).and_then(|m| {
                    let pairs: Vec<(usize, usize)> = m.iter().map(|q| (q.query, q.matched)).collect();
                    recall_at_radius(&pairs, gt, grid.radius)
                })
            };
            let (recall, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepCell {
                depth_threshold: d,
                sequence_length: l,
                recall,
                error,
            }
        })
        .collect();
    Ok(SweepSurface {
        stride,
        radius: grid.radius,
        n_queries: query.len(),
        cells,
    })
}

/// One sweep surface per reference-sequence stride (camera speed-up factor).
pub fn camera_speed_experiment<T: Scalar>(
    query: &Traverse<T>,
    reference: &Traverse<T>,
    gt: &GroundTruth<T>,
    grid: &SweepGrid<T>,
    strides: &[usize],
) -> Result<Vec<SweepSurface<T>>> {
    if strides.is_empty() {
        return Err(VprError::contract("at least one stride is required"));
    }
    if strides.contains(&0) {
        return Err(VprError::contract("strides must be positive"));
    }
    let candidates = retrieve_for_sweep(query, reference, gt, grid)?;
    strides
        .iter()
        .map(|&m| sweep_with_candidates(query, reference, gt, grid, m, &candidates))
        .collect()
}
