//! Core algorithms for tracking arbitrary query points through event-camera
//! streams.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`event`]: validated event records, streams, and time-window slicing.
//! - [`sim`]: an analytic event-camera simulator with exact ground-truth
//!   trajectories, used as the oracle for everything downstream.
//! - [`surface`]: per-polarity time-surface encoding plus the event-image and
//!   voxel-grid alternates.
//! - [`guidance`]: local plane fits on the time surface and the kinematic
//!   vectors recovered from them.
//! - [`matching`]: multi-scale patch descriptors, guided correlation maps, and
//!   sub-pixel soft-argmax.
//! - [`tracker`]: the iterative refinement loop producing trajectories.
//! - [`metrics`]: trajectory evaluation (inlier fractions, median error,
//!   survival, feature age, weighted MAE).
//!
//! Everything here is pure computation over in-memory data; file formats and
//! the command-line front end live in the companion `evtap` crate. The crate
//! is `no_std`-compatible (with `alloc`) when built without the default `std`
//! feature.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod event;
pub mod guidance;
pub mod matching;
pub mod metrics;
pub mod sim;
pub mod surface;
pub mod tracker;

mod geom;
mod math;

pub use event::{Event, EventStream, Polarity, TimeWindow};
pub use geom::Vec2;
pub use guidance::{
    correct_kinematics, estimate_kinematics, fit_plane, plane_to_velocity, KinematicVector,
    PlaneFit,
};
pub use matching::{
    build_pyramid, correlate, reference_descriptor, soft_argmax, CorrelationMap, Descriptor,
    PatchPyramid, PyramidConfig, SurfacePyramid,
};
pub use metrics::{
    compute_report, delta_avg, expected_feature_age, feature_age, mte, survival, weighted_mae,
    EvalPair, MetricsParams, MetricsReport,
};
pub use sim::{event_rate_profile, simulate, GroundTruth, Scene, SceneKind, SimConfig};
pub use surface::{encode_alternate, encode_time_surface, Representation, RepresentationKind, TimeSurface};
pub use tracker::{
    init_state, iterate, track, track_batch, track_on_frames, FrameSet, OutOfFrame, TrackConfig,
    TrackState, Trajectory,
};
