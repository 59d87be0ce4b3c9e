//! Iterative point tracking over a stack of per-bin time surfaces.
//!
//! All timesteps start at the query point. Each iteration re-estimates
//! kinematic vectors at the current coordinates, smooths them over time,
//! rebuilds reference descriptors from the offset steps {0, t-4, t-2}, and
//! updates every step with the sub-pixel soft-argmax of a guided correlation
//! map. Step 0 stays pinned to the query.
//!
//! Each step is matched around two candidate anchors: its own current
//! estimate, and the kinematic chain prediction from the previous step's
//! fresh estimate. The anchor whose correlation peaks higher wins (ties keep
//! the step's own estimate). The chain is what re-acquires steps whose
//! estimates are still at the query while the target has moved far beyond
//! the search radius; it plays the role of the temporal context that a
//! per-step search cannot provide. With guidance disabled the chain degrades
//! to holding the previous step's position, i.e. appearance-only matching
//! with spatial continuity.

use alloc::vec;
use alloc::vec::Vec;

use crate::event::{EventStream, TimeWindow};
use crate::geom::Vec2;
use crate::guidance::{correct_kinematics, estimate_kinematics, KinematicVector, VelocityParams};
use crate::matching::{correlate, reference_descriptor, soft_argmax, SurfacePyramid};
use crate::surface::{encode_time_surface, TimeSurface};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("query point ({x}, {y}) is outside the {width}x{height} frame")]
    QueryOutOfFrame {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("window spans {span_us} us, too short for {timesteps} non-degenerate bins")]
    WindowTooShort { span_us: u64, timesteps: usize },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(alloc::string::String),
}

/// What to do with a step whose update would leave the frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutOfFrame {
    /// Hold the last in-frame coordinate and flag the step; the step stops
    /// updating. Keeps survival metrics well defined.
    Freeze,
    /// Clamp the coordinate back into the frame and keep tracking.
    Clamp,
}

#[derive(Clone, Debug)]
pub struct TrackConfig {
    /// Refinement iterations K.
    pub iterations: usize,
    /// Timesteps (bins) T per sequence.
    pub timesteps: usize,
    /// Correlation search radius in pixels at level 0.
    pub search_radius: usize,
    /// Plane-fit neighborhood half-width.
    pub fit_radius: u32,
    /// Patch half-width per pyramid level.
    pub patch_radius: usize,
    /// Pyramid levels.
    pub levels: u8,
    /// Soft-argmax temperature on cosine scores.
    pub temperature: f64,
    /// Normal-flow regularizer.
    pub eps: f64,
    /// Residual scale of the kinematic reliability weight.
    pub tau: f64,
    /// Kinematic speed clamp in pixels per bin.
    pub v_max: f64,
    /// Fusion weights of the offset-step descriptors (step 0, t-4, t-2).
    pub offset_weights: (f64, f64, f64),
    /// Half-width of the temporal smoothing window.
    pub smooth_half_width: usize,
    /// Guidance horizon in bins; the guided center leads the anchor by
    /// `weight * v * guidance_dt`.
    pub guidance_dt: f64,
    /// How much higher the chain anchor's correlation peak must score before
    /// it replaces a step's own anchor.
    pub anchor_switch_margin: f64,
    /// Peak score below which a step's own anchor counts as having no
    /// appearance evidence and yields to the kinematic chain.
    pub evidence_floor: f64,
    pub out_of_frame: OutOfFrame,
    /// When false, kinematic weights are forced to zero and matching is
    /// appearance-only (the ablation baseline).
    pub guidance: bool,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            iterations: 6,
            timesteps: 48,
            search_radius: 4,
            fit_radius: 3,
            patch_radius: 3,
            levels: 3,
            temperature: 0.05,
            eps: 1e-6,
            tau: 0.25,
            v_max: 16.0,
            offset_weights: (0.5, 0.25, 0.25),
            smooth_half_width: 3,
            guidance_dt: 1.0,
            anchor_switch_margin: 0.08,
            evidence_floor: 0.05,
            out_of_frame: OutOfFrame::Freeze,
            guidance: true,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        let err = |r: &str| Err(TrackError::InvalidConfig(alloc::string::String::from(r)));
        if self.iterations < 1 {
            return err("needs at least one iteration");
        }
        if self.timesteps < 2 {
            return err("needs at least two timesteps");
        }
        if self.search_radius < 1 {
            return err("search radius must be at least 1");
        }
        if self.fit_radius < 2 {
            return err("fit radius must be at least 2");
        }
        if self.levels < 1 {
            return err("needs at least one pyramid level");
        }
        if !(self.temperature > 0.0) {
            return err("temperature must be positive");
        }
        Ok(())
    }

    fn velocity_params(&self) -> VelocityParams {
        VelocityParams {
            eps: self.eps,
            tau: self.tau,
            v_max: self.v_max,
        }
    }
}

/// The encoded input of one tracking run: per-bin surfaces and their pooled
/// pyramids over a window sliced into T equal bins.
pub struct FrameSet {
    width: u32,
    height: u32,
    bin_starts_us: Vec<u64>,
    surfaces: Vec<TimeSurface>,
    pyramids: Vec<SurfacePyramid>,
    empty_bins: usize,
}

impl FrameSet {
    pub fn new(
        stream: &EventStream,
        window: TimeWindow,
        cfg: &TrackConfig,
    ) -> Result<FrameSet, TrackError> {
        cfg.validate()?;
        let t_steps = cfg.timesteps;
        if window.span_us() < t_steps as u64 {
            return Err(TrackError::WindowTooShort {
                span_us: window.span_us(),
                timesteps: t_steps,
            });
        }
        let span = window.span_us();
        let start = window.t_start();
        let mut bin_starts_us = Vec::with_capacity(t_steps);
        let mut surfaces = Vec::with_capacity(t_steps);
        let mut empty_bins = 0;
        for k in 0..t_steps {
            let b0 = start + (k as u64 * span) / t_steps as u64;
            let b1 = start + ((k as u64 + 1) * span) / t_steps as u64;
            let bin = TimeWindow::new(b0, b1).expect("bins are non-degenerate by the span check");
            let slice = stream.slice_window(bin);
            if slice.is_empty() {
                empty_bins += 1;
            }
            bin_starts_us.push(b0);
            surfaces.push(encode_time_surface(&slice, bin));
        }
        let pyramids = surfaces
            .iter()
            .map(|s| SurfacePyramid::new(s, cfg.levels))
            .collect();
        Ok(FrameSet {
            width: stream.width(),
            height: stream.height(),
            bin_starts_us,
            surfaces,
            pyramids,
            empty_bins,
        })
    }

    #[inline]
    pub fn timesteps(&self) -> usize {
        self.surfaces.len()
    }

    #[inline]
    pub fn empty_bins(&self) -> usize {
        self.empty_bins
    }

    #[inline]
    pub fn surfaces(&self) -> &[TimeSurface] {
        &self.surfaces
    }

    #[inline]
    pub fn bin_starts_us(&self) -> &[u64] {
        &self.bin_starts_us
    }

    fn in_frame(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(0.0, (self.width - 1) as f64),
            p.y.clamp(0.0, (self.height - 1) as f64),
        )
    }
}

/// Per-query tracking state across iterations.
#[derive(Clone, Debug)]
pub struct TrackState {
    query: Vec2,
    coords: Vec<Vec2>,
    kinematics: Vec<KinematicVector>,
    peak_scores: Vec<f64>,
    frozen: Vec<bool>,
    iteration: usize,
}

impl TrackState {
    #[inline]
    pub fn coords(&self) -> &[Vec2] {
        &self.coords
    }

    #[inline]
    pub fn kinematics(&self) -> &[KinematicVector] {
        &self.kinematics
    }

    #[inline]
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    #[inline]
    pub fn peak_scores(&self) -> &[f64] {
        &self.peak_scores
    }

    #[inline]
    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }
}

/// All timesteps initialized at the query with zeroed kinematics.
pub fn init_state(
    query: Vec2,
    timesteps: usize,
    width: u32,
    height: u32,
) -> Result<TrackState, TrackError> {
    assert!(timesteps >= 2, "tracking needs at least two timesteps");
    let in_frame = query.is_finite()
        && query.x >= 0.0
        && query.y >= 0.0
        && query.x <= (width - 1) as f64
        && query.y <= (height - 1) as f64;
    if !in_frame {
        return Err(TrackError::QueryOutOfFrame {
            x: query.x,
            y: query.y,
            width,
            height,
        });
    }
    Ok(TrackState {
        query,
        coords: vec![query; timesteps],
        kinematics: vec![KinematicVector::zero(); timesteps],
        peak_scores: vec![0.0; timesteps],
        frozen: vec![false; timesteps],
        iteration: 0,
    })
}

/// One refinement pass over all timesteps.
///
/// Panics if the state has already consumed all configured iterations.
pub fn iterate(state: &TrackState, frames: &FrameSet, cfg: &TrackConfig) -> TrackState {
    assert!(
        state.iteration < cfg.iterations,
        "iterate called past the configured iteration count"
    );
    let t_steps = state.coords.len();
    debug_assert_eq!(t_steps, frames.timesteps());
    let vparams = cfg.velocity_params();

    let raw: Vec<KinematicVector> = if cfg.guidance {
        (0..t_steps)
            .map(|t| estimate_kinematics(&frames.surfaces[t], state.coords[t], cfg.fit_radius, &vparams))
            .collect()
    } else {
        vec![KinematicVector::zero(); t_steps]
    };
    let corrected = correct_kinematics(&raw, cfg.smooth_half_width);

    let mut next = state.clone();
    next.kinematics = corrected.clone();
    // Offset-step pyramids are sampled at the coordinates already updated in
    // this sweep (offsets always precede the step), so a step that was
    // re-acquired earlier in the sweep contributes its updated appearance.
    let mut offset_pyramids: Vec<Option<crate::matching::PatchPyramid>> = vec![None; t_steps];
    for t in 0..t_steps {
        let o4 = t.saturating_sub(4);
        let o2 = t.saturating_sub(2);
        for o in [0, o4, o2] {
            if offset_pyramids[o].is_none() {
                offset_pyramids[o] =
                    Some(frames.pyramids[o].sample(next.coords[o], cfg.patch_radius));
            }
        }
        let reference = reference_descriptor(
            offset_pyramids[0].as_ref().unwrap(),
            offset_pyramids[o4].as_ref().unwrap(),
            offset_pyramids[o2].as_ref().unwrap(),
            cfg.offset_weights,
        );
        if t == 0 {
            // Pinned to the query; score it anyway for the confidence output.
            let map = correlate(
                &reference,
                &frames.pyramids[0],
                state.query,
                &KinematicVector::zero(),
                cfg.guidance_dt,
                cfg.search_radius,
                cfg.patch_radius,
            );
            next.peak_scores[0] = map.peak().2;
            next.coords[0] = state.query;
            continue;
        }
        if state.frozen[t] {
            continue;
        }

        let guide = corrected[t];
        let anchor_self = state.coords[t];
        // Dead-reckon from the previous step's freshly updated estimate. Its
        // velocity is re-measured there (not at the stale pre-update
        // position), so the prediction cascades through the whole sweep in a
        // single iteration. Weight gates trust but must not scale the
        // magnitude, or fast motion is systematically undershot.
        let chain_step = if cfg.guidance {
            let fresh = estimate_kinematics(
                &frames.surfaces[t - 1],
                next.coords[t - 1],
                cfg.fit_radius,
                &vparams,
            );
            if fresh.weight > 0.05 {
                fresh.v * cfg.guidance_dt
            } else {
                Vec2::ZERO
            }
        } else {
            Vec2::ZERO
        };
        let map_self = correlate(
            &reference,
            &frames.pyramids[t],
            anchor_self,
            &guide,
            cfg.guidance_dt,
            cfg.search_radius,
            cfg.patch_radius,
        );
        let self_peak = map_self.peak().2;
        let mut best = map_self;
        let mut best_is_self = true;
        // Two chain candidates: the dead-reckoned prediction and a plain
        // hold of the previous step's position (which survives a bad
        // velocity estimate). A step with real evidence at its own anchor
        // keeps it unless a chain anchor scores clearly higher; the margin
        // stops spurious sparse-overlap peaks from stealing converged steps.
        // A step with no evidence at all follows the chain, which is what
        // carries tracking through motion reversals where the event stream
        // goes silent.
        let mut evaluated = [anchor_self, Vec2::ZERO, Vec2::ZERO];
        let mut n_eval = 1;
        for anchor in [next.coords[t - 1] + chain_step, next.coords[t - 1]] {
            let fresh = evaluated[..n_eval]
                .iter()
                .all(|a| (*a - anchor).norm() >= 0.25);
            if fresh && frames.in_frame(anchor) {
                evaluated[n_eval] = anchor;
                n_eval += 1;
                let map = correlate(
                    &reference,
                    &frames.pyramids[t],
                    anchor,
                    &guide,
                    cfg.guidance_dt,
                    cfg.search_radius,
                    cfg.patch_radius,
                );
                let peak = map.peak().2;
                let blind_self = self_peak < cfg.evidence_floor;
                let takes = if blind_self && best_is_self {
                    // No evidence at the step's own anchor: the kinematic
                    // prediction wins even on an equally blank map.
                    peak >= self_peak
                } else {
                    peak > best.peak().2 + cfg.anchor_switch_margin
                };
                if takes {
                    best = map;
                    best_is_self = false;
                }
            }
        }

        let delta = soft_argmax(&best, cfg.temperature);
        let candidate = best.guided_center() + delta;
        if frames.in_frame(candidate) {
            next.coords[t] = candidate;
        } else {
            match cfg.out_of_frame {
                OutOfFrame::Freeze => {
                    next.frozen[t] = true;
                    // Coordinate held at the last in-frame estimate.
                }
                OutOfFrame::Clamp => {
                    next.coords[t] = frames.clamp(candidate);
                }
            }
        }
        next.peak_scores[t] = best.peak().2;
    }
    next.iteration += 1;
    next
}

/// Final trajectory of one query point.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub point_id: u64,
    pub coords: Vec<Vec2>,
    /// Bin-start time of each step in microseconds.
    pub times_us: Vec<u64>,
    /// Mean of the final correlation peak score (clamped to [0, 1]) and the
    /// kinematic weight.
    pub confidence: Vec<f64>,
    /// Final-iteration smoothed kinematic vectors, for diagnostics.
    pub kinematics: Vec<KinematicVector>,
    pub frozen: Vec<bool>,
    /// Set when at least half of the bins contained no events.
    pub warned: bool,
}

/// Tracks one query point through `window`, slicing it into `cfg.timesteps`
/// equal bins.
pub fn track(
    query: Vec2,
    stream: &EventStream,
    window: TimeWindow,
    cfg: &TrackConfig,
) -> Result<Trajectory, TrackError> {
    let frames = FrameSet::new(stream, window, cfg)?;
    track_on_frames(query, &frames, cfg)
}

/// Tracks against pre-encoded frames; lets batch callers share the encoding.
pub fn track_on_frames(
    query: Vec2,
    frames: &FrameSet,
    cfg: &TrackConfig,
) -> Result<Trajectory, TrackError> {
    cfg.validate()?;
    let mut state = init_state(query, cfg.timesteps, frames.width, frames.height)?;
    for _ in 0..cfg.iterations {
        state = iterate(&state, frames, cfg);
    }
    let confidence = state
        .peak_scores
        .iter()
        .zip(state.kinematics.iter())
        .map(|(&peak, kv)| 0.5 * (peak.clamp(0.0, 1.0) + kv.weight))
        .collect();
    Ok(Trajectory {
        point_id: 0,
        coords: state.coords,
        times_us: frames.bin_starts_us.clone(),
        confidence,
        kinematics: state.kinematics,
        frozen: state.frozen,
        warned: frames.empty_bins * 2 >= cfg.timesteps,
    })
}

/// Independent per-point tracking; identical to sequential [`track`] calls.
pub fn track_batch(
    queries: &[Vec2],
    stream: &EventStream,
    window: TimeWindow,
    cfg: &TrackConfig,
) -> Result<Vec<Result<Trajectory, TrackError>>, TrackError> {
    let frames = FrameSet::new(stream, window, cfg)?;
    Ok(queries
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            track_on_frames(q, &frames, cfg).map(|mut traj| {
                traj.point_id = i as u64;
                traj
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, Scene, SceneKind, SimConfig};

    fn blob_scene(velocity: Vec2) -> Scene {
        Scene {
            kind: SceneKind::TranslatingBlob {
                peak: 1.2,
                sigma: 3.0,
                center: Vec2::new(40.0, 40.0),
                velocity,
            },
            background: 0.0,
            query_points: alloc::vec![Vec2::new(40.0, 40.0)],
        }
    }

    fn sim_cfg() -> SimConfig {
        SimConfig {
            width: 96,
            height: 80,
            duration_us: 960_000,
            contrast_threshold: 0.2,
            dt_integration_us: 500,
            gt_timesteps: 24,
            ..SimConfig::default()
        }
    }

    fn track_cfg() -> TrackConfig {
        TrackConfig {
            timesteps: 24,
            ..TrackConfig::default()
        }
    }

    #[test]
    fn init_copies_query_to_all_steps() {
        let s = init_state(Vec2::new(10.0, 20.0), 4, 64, 64).unwrap();
        assert_eq!(s.coords(), &[Vec2::new(10.0, 20.0); 4]);
        assert_eq!(s.iteration(), 0);
        assert!(s.kinematics().iter().all(|kv| kv.weight == 0.0));
    }

    #[test]
    fn init_minimum_two_steps() {
        let s = init_state(Vec2::new(1.0, 1.0), 2, 8, 8).unwrap();
        assert_eq!(s.coords().len(), 2);
    }

    #[test]
    fn init_rejects_out_of_frame_query() {
        let err = init_state(Vec2::new(-1.0, 5.0), 4, 64, 64).unwrap_err();
        assert!(matches!(err, TrackError::QueryOutOfFrame { .. }));
    }

    #[test]
    fn zero_event_stream_returns_query_everywhere_with_warning() {
        let stream = EventStream::empty(64, 64, 0);
        let traj = track(
            Vec2::new(32.0, 32.0),
            &stream,
            TimeWindow::new(0, 480_000).unwrap(),
            &track_cfg(),
        )
        .unwrap();
        assert!(traj.warned);
        assert!(traj.coords.iter().all(|&c| c == Vec2::new(32.0, 32.0)));
        assert_eq!(traj.coords.len(), 24);
    }

    #[test]
    fn step_zero_stays_pinned() {
        let (stream, _) = simulate(&blob_scene(Vec2::new(25.0, 0.0)), &sim_cfg()).unwrap();
        let traj = track(
            Vec2::new(40.0, 40.0),
            &stream,
            TimeWindow::new(0, 960_000).unwrap(),
            &track_cfg(),
        )
        .unwrap();
        assert_eq!(traj.coords[0], Vec2::new(40.0, 40.0));
    }

    #[test]
    fn one_iteration_reduces_error_on_constant_velocity() {
        let scene = blob_scene(Vec2::new(25.0, 0.0));
        let cfg = sim_cfg();
        let (stream, gt) = simulate(&scene, &cfg).unwrap();
        let tcfg = track_cfg();
        let frames = FrameSet::new(&stream, TimeWindow::new(0, 960_000).unwrap(), &tcfg).unwrap();
        let state0 = init_state(Vec2::new(40.0, 40.0), tcfg.timesteps, 96, 80).unwrap();
        let state1 = iterate(&state0, &frames, &tcfg);
        let mean_err = |coords: &[Vec2]| {
            coords
                .iter()
                .zip(gt.trajectories[0].iter())
                .map(|(c, g)| (*c - *g).norm())
                .sum::<f64>()
                / coords.len() as f64
        };
        let e0 = mean_err(state0.coords());
        let e1 = mean_err(state1.coords());
        assert!(e1 < e0, "iteration should reduce error: {e0} -> {e1}");
    }

    #[test]
    fn tracks_constant_velocity_blob() {
        let scene = blob_scene(Vec2::new(25.0, 0.0));
        let cfg = sim_cfg();
        let (stream, gt) = simulate(&scene, &cfg).unwrap();
        let traj = track(
            Vec2::new(40.0, 40.0),
            &stream,
            TimeWindow::new(0, 960_000).unwrap(),
            &track_cfg(),
        )
        .unwrap();
        let errs: Vec<f64> = traj
            .coords
            .iter()
            .zip(gt.trajectories[0].iter())
            .map(|(c, g)| (*c - *g).norm())
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(mean < 1.5, "mean error {mean}, per-step {errs:?}");
    }

    #[test]
    fn batch_of_one_equals_single_track() {
        let (stream, _) = simulate(&blob_scene(Vec2::new(25.0, 0.0)), &sim_cfg()).unwrap();
        let window = TimeWindow::new(0, 960_000).unwrap();
        let cfg = track_cfg();
        let q = Vec2::new(40.0, 40.0);
        let single = track(q, &stream, window, &cfg).unwrap();
        let batch = track_batch(&[q], &stream, window, &cfg).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].as_ref().unwrap(), &single);
    }

    #[test]
    fn empty_batch_is_empty() {
        let stream = EventStream::empty(64, 64, 0);
        let out = track_batch(
            &[],
            &stream,
            TimeWindow::new(0, 100_000).unwrap(),
            &track_cfg(),
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn batch_mixes_failures_and_successes() {
        let stream = EventStream::empty(64, 64, 0);
        let out = track_batch(
            &[Vec2::new(10.0, 10.0), Vec2::new(-5.0, 10.0)],
            &stream,
            TimeWindow::new(0, 100_000).unwrap(),
            &track_cfg(),
        )
        .unwrap();
        assert!(out[0].is_ok());
        assert!(matches!(
            out[1].as_ref().unwrap_err(),
            TrackError::QueryOutOfFrame { .. }
        ));
    }

    #[test]
    fn window_too_short_is_rejected() {
        let stream = EventStream::empty(64, 64, 0);
        let err = track(
            Vec2::new(1.0, 1.0),
            &stream,
            TimeWindow::new(0, 10).unwrap(),
            &track_cfg(),
        )
        .unwrap_err();
        assert!(matches!(err, TrackError::WindowTooShort { .. }));
    }

    #[test]
    fn determinism_across_runs() {
        let (stream, _) = simulate(&blob_scene(Vec2::new(25.0, 0.0)), &sim_cfg()).unwrap();
        let window = TimeWindow::new(0, 960_000).unwrap();
        let cfg = track_cfg();
        let a = track(Vec2::new(40.0, 40.0), &stream, window, &cfg).unwrap();
        let b = track(Vec2::new(40.0, 40.0), &stream, window, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
