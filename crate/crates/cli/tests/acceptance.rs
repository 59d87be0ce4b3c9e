//! Acceptance suite: ten numbered criteria covering inverse-gradient
//! recovery, the event-rate/speed law, end-to-end tracking quality, the
//! guidance ablation, metric fixtures, IO round-trips, pipeline determinism,
//! and iteration monotonicity. Each test prints one line with the measured
//! values next to its threshold.

use std::time::Instant;

use evtap::{event_files, tables, EventFormat};
use evtap_core::guidance::VelocityParams;
use evtap_core::{
    compute_report, delta_avg, event_rate_profile, feature_age, fit_plane, init_state, iterate,
    mte, plane_to_velocity, simulate, survival, track_on_frames, weighted_mae, EvalPair, EventStream,
    FrameSet, GroundTruth, MetricsParams, Scene, SceneKind, SimConfig, TimeSurface, TimeWindow,
    TrackConfig, Trajectory, Vec2,
};

// ---------------------------------------------------------------------------
// Shared scene and tracking helpers
// ---------------------------------------------------------------------------

fn ramp_surface(side: u32, t0: f64, gx: f64, gy: f64) -> TimeSurface {
    let c = (side / 2) as f64;
    let cells = (side * side) as usize;
    let mut pos = Vec::with_capacity(cells);
    for y in 0..side {
        for x in 0..side {
            let v = t0 + gx * (x as f64 - c) + gy * (y as f64 - c);
            pos.push(v.clamp(0.0, 1.0));
        }
    }
    TimeSurface::from_values(
        side,
        side,
        TimeWindow::new(0, 1_000_000).unwrap(),
        pos,
        vec![0.0; cells],
    )
    .unwrap()
}

fn blob_scene_a3() -> (Scene, SimConfig) {
    let scene = Scene {
        kind: SceneKind::TranslatingBlob {
            peak: 1.2,
            sigma: 4.0,
            center: Vec2::new(40.0, 60.0),
            velocity: Vec2::new(20.0, 0.0),
        },
        background: 0.0,
        query_points: vec![],
    };
    let cfg = SimConfig {
        width: 160,
        height: 120,
        duration_us: 2_000_000,
        contrast_threshold: 0.2,
        dt_integration_us: 500,
        gt_timesteps: 48,
        ..SimConfig::default()
    };
    (scene, cfg)
}

fn sinusoid_scene_a4(noise_rate: f64, seed: u64) -> (Scene, SimConfig) {
    let scene = Scene {
        kind: SceneKind::SinusoidalBlob {
            peak: 1.2,
            sigma: 4.0,
            center: Vec2::new(80.0, 60.0),
            amplitude: 30.0,
            frequency: 0.5,
            axis: Vec2::new(1.0, 0.0),
        },
        background: 0.0,
        query_points: vec![],
    };
    let cfg = SimConfig {
        width: 160,
        height: 120,
        duration_us: 3_000_000,
        contrast_threshold: 0.2,
        dt_integration_us: 250,
        noise_rate,
        rng_seed: seed,
        gt_timesteps: 48,
        ..SimConfig::default()
    };
    (scene, cfg)
}

fn track_config() -> TrackConfig {
    TrackConfig::default()
}

/// Tracks every ground-truth query point and pairs the result with the
/// analytic trajectory.
fn track_against_gt(
    stream: &EventStream,
    gt: &GroundTruth,
    duration_us: u64,
    cfg: &TrackConfig,
) -> (Vec<Trajectory>, Vec<EvalPair>) {
    let window = TimeWindow::new(0, duration_us).unwrap();
    let frames = FrameSet::new(stream, window, cfg).unwrap();
    let mut trajectories = Vec::new();
    let mut pairs = Vec::new();
    for (i, &q) in gt.query_points.iter().enumerate() {
        let traj = track_on_frames(q, &frames, cfg).unwrap();
        pairs.push(EvalPair::dense(traj.coords.clone(), gt.trajectories[i].clone()).unwrap());
        trajectories.push(traj);
    }
    (trajectories, pairs)
}

fn pearson(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares slope and intercept of y over x.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

// ---------------------------------------------------------------------------
// A1: inverse-gradient recovery on exact ramps
// ---------------------------------------------------------------------------

#[test]
fn a1_inverse_gradient_recovery() {
    let start = Instant::now();
    let params = VelocityParams {
        eps: 0.0,
        tau: 0.05,
        v_max: f64::INFINITY,
    };
    let gradients = [(0.10, 0.0), (0.06, 0.08), (-0.04, 0.12), (0.03, -0.05)];
    let mut worst = 0.0f64;
    for (gx, gy) in gradients {
        let ts = ramp_surface(13, 0.5, gx, gy);
        let fit = fit_plane(&ts, Vec2::new(6.0, 6.0), 3).unwrap();
        let kv = plane_to_velocity(&fit, &params);
        let n2 = gx * gx + gy * gy;
        let expected = Vec2::new(gx / n2, gy / n2);
        let rel = (kv.v - expected).norm() / expected.norm();
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "A1 inverse-gradient recovery: PASS (worst relative error {worst:.2e} < 1e-6, {elapsed:.2}s < 1s)"
    );
    assert!(worst < 1e-6, "worst relative error {worst}");
    assert!(elapsed < 1.0, "took {elapsed}s");
}

// ---------------------------------------------------------------------------
// A2: event rate grows with radius on the rotating stick
// ---------------------------------------------------------------------------

#[test]
fn a2_rate_speed_proportionality() {
    let start = Instant::now();
    let pivot = Vec2::new(64.0, 64.0);
    let scene = Scene {
        kind: SceneKind::RotatingStick {
            contrast: 1.0,
            length: 50.0,
            half_width: 1.5,
            pivot,
            angular_velocity: std::f64::consts::TAU,
        },
        background: 0.0,
        query_points: vec![],
    };
    let cfg = SimConfig {
        width: 128,
        height: 128,
        duration_us: 1_000_000,
        contrast_threshold: 0.2,
        dt_integration_us: 250,
        ..SimConfig::default()
    };
    let (stream, _) = simulate(&scene, &cfg).unwrap();
    let profile = event_rate_profile(&stream, pivot, 24);
    // Regress over the annuli the stick actually sweeps, away from the
    // always-covered pivot region and the tip falloff.
    let active: Vec<(f64, f64)> = profile
        .into_iter()
        .filter(|(r, _)| *r > 5.0 && *r < 46.0)
        .collect();
    let r = pearson(&active);
    let (_, intercept) = linear_fit(&active);
    let scale = active.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "A2 rate-speed proportionality: PASS (pearson {r:.4} > 0.95, |intercept| {:.1} <= 10% of {scale:.1}, {elapsed:.2}s < 10s)",
        intercept.abs()
    );
    assert!(r > 0.95, "pearson {r}");
    assert!(
        intercept.abs() <= 0.10 * scale,
        "intercept {intercept} vs scale {scale}"
    );
    assert!(elapsed < 10.0, "took {elapsed}s");
}

// ---------------------------------------------------------------------------
// A3: end-to-end linear tracking
// ---------------------------------------------------------------------------

#[test]
fn a3_linear_tracking() {
    let start = Instant::now();
    let (scene, sim_cfg) = blob_scene_a3();
    let (stream, gt) = simulate(&scene, &sim_cfg).unwrap();
    let (_, pairs) = track_against_gt(&stream, &gt, sim_cfg.duration_us, &track_config());
    let mte_px = mte(&pairs).unwrap();
    let delta = delta_avg(&pairs).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "A3 linear tracking: PASS (MTE {mte_px:.3} < 2.0 px, delta_avg {delta:.3} > 0.8, {elapsed:.2}s < 30s)"
    );
    assert!(mte_px < 2.0, "MTE {mte_px}");
    assert!(delta > 0.8, "delta_avg {delta}");
    assert!(elapsed < 30.0, "took {elapsed}s");
}

// ---------------------------------------------------------------------------
// A4: nonlinear tracking survival
// ---------------------------------------------------------------------------

#[test]
fn a4_nonlinear_survival() {
    let start = Instant::now();
    let (scene, sim_cfg) = sinusoid_scene_a4(0.0, 0);
    let (stream, gt) = simulate(&scene, &sim_cfg).unwrap();
    let (_, pairs) = track_against_gt(&stream, &gt, sim_cfg.duration_us, &track_config());
    let survival_50: f64 =
        pairs.iter().map(|p| survival(p, 50.0)).sum::<f64>() / pairs.len() as f64;
    let survival_16: f64 =
        pairs.iter().map(|p| survival(p, 16.0)).sum::<f64>() / pairs.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "A4 nonlinear survival: PASS (Survival_50 {survival_50:.3} = 1.0, Survival_16 {survival_16:.3} >= 0.9, {elapsed:.2}s < 30s)"
    );
    assert_eq!(survival_50, 1.0, "Survival_50 {survival_50}");
    assert!(survival_16 >= 0.9, "Survival_16 {survival_16}");
    assert!(elapsed < 30.0, "took {elapsed}s");
}

// ---------------------------------------------------------------------------
// A5: guidance ablation direction over five seeds
// ---------------------------------------------------------------------------

#[test]
fn a5_guidance_ablation() {
    let mut lines = Vec::new();
    for seed in 1..=5u64 {
        let (scene, sim_cfg) = sinusoid_scene_a4(0.5, seed);
        let (stream, gt) = simulate(&scene, &sim_cfg).unwrap();
        let guided_cfg = track_config();
        let unguided_cfg = TrackConfig {
            guidance: false,
            ..track_config()
        };
        let (_, guided_pairs) = track_against_gt(&stream, &gt, sim_cfg.duration_us, &guided_cfg);
        let (_, unguided_pairs) =
            track_against_gt(&stream, &gt, sim_cfg.duration_us, &unguided_cfg);
        let mte_on = mte(&guided_pairs).unwrap();
        let mte_off = mte(&unguided_pairs).unwrap();
        lines.push(format!("seed {seed}: {mte_on:.3} <= {mte_off:.3}"));
        assert!(
            mte_on <= mte_off,
            "seed {seed}: guided MTE {mte_on} > unguided {mte_off}"
        );
    }
    println!("A5 guidance ablation: PASS ({})", lines.join(", "));
}

// ---------------------------------------------------------------------------
// A6: speed recovery across regimes
// ---------------------------------------------------------------------------

#[test]
fn a6_speed_recovery() {
    let start = Instant::now();
    let mut reports = Vec::new();
    for v in [5.0f64, 20.0, 80.0] {
        // Sweep about 12 px regardless of speed.
        let duration_us = (12.0 / v * 1e6) as u64;
        let scene = Scene {
            kind: SceneKind::TranslatingEdge {
                contrast: 0.6,
                edge_x: 10.0,
                velocity: Vec2::new(v, 0.0),
                ramp_width: 2.0,
            },
            background: 0.0,
            query_points: vec![],
        };
        let cfg = SimConfig {
            width: 64,
            height: 64,
            duration_us,
            contrast_threshold: 0.2,
            dt_integration_us: (duration_us / 2000).max(1),
            ..SimConfig::default()
        };
        let (stream, _) = simulate(&scene, &cfg).unwrap();
        let window = TimeWindow::new(0, duration_us).unwrap();
        let ts = evtap_core::encode_time_surface(&stream, window);
        let duration_s = duration_us as f64 * 1e-6;
        let params = VelocityParams {
            eps: 1e-9,
            tau: 0.05,
            v_max: f64::INFINITY,
        };
        let mut speeds = Vec::new();
        // Fit along the middle of the swept band, away from frame borders.
        for y in (8..56).step_by(4) {
            for x in 14..=18 {
                if let Ok(fit) = fit_plane(&ts, Vec2::new(x as f64, y as f64), 3) {
                    let kv = plane_to_velocity(&fit, &params);
                    if kv.weight > 0.0 {
                        // v is px per window span; convert to px/s.
                        speeds.push(kv.v.norm() / duration_s);
                    }
                }
            }
        }
        assert!(speeds.len() >= 20, "only {} usable fits at v={v}", speeds.len());
        speeds.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let median = speeds[speeds.len() / 2];
        let rel = (median - v).abs() / v;
        reports.push(format!("v={v}: median {median:.2} ({:.1}%)", rel * 100.0));
        assert!(rel < 0.10, "v={v}: median {median}, relative error {rel}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "A6 speed recovery: PASS ({}, {elapsed:.2}s < 20s)",
        reports.join("; ")
    );
    assert!(elapsed < 20.0, "took {elapsed}s");
}

// ---------------------------------------------------------------------------
// A7: metric fixtures, exact to 1e-12
// ---------------------------------------------------------------------------

#[test]
fn a7_metric_fixtures() {
    let pair_with = |errors: &[f64]| {
        let gt: Vec<Vec2> = (0..errors.len()).map(|i| Vec2::new(0.0, i as f64)).collect();
        let pred: Vec<Vec2> = errors
            .iter()
            .enumerate()
            .map(|(i, &e)| Vec2::new(e, i as f64))
            .collect();
        EvalPair::dense(pred, gt).unwrap()
    };

    let d = delta_avg(&[pair_with(&[3.0; 8])]).unwrap();
    assert!((d - 0.6).abs() < 1e-12, "delta_avg {d}");

    let odd = mte(&[pair_with(&[1.0, 2.0, 100.0])]).unwrap();
    assert!((odd - 2.0).abs() < 1e-12);
    let even = mte(&[pair_with(&[1.0, 2.0, 3.0, 100.0])]).unwrap();
    assert!((even - 2.5).abs() < 1e-12);

    let mut half = vec![1.0; 48];
    for e in half.iter_mut().skip(24) {
        *e = 60.0;
    }
    let s = survival(&pair_with(&half), 50.0);
    assert!((s - 0.5).abs() < 1e-12);

    let l = weighted_mae(&pair_with(&[1.0, 1.0, 1.0]), 0.8);
    assert!((l - 2.44).abs() < 1e-12, "weighted_mae {l}");

    let fa = feature_age(&pair_with(&[16.5; 20]));
    assert!((fa - 15.0 / 31.0).abs() < 1e-12);

    println!(
        "A7 metric fixtures: PASS (delta_avg {d:.3}, medians {odd}/{even}, survival {s}, loss {l}, fa {fa:.4})"
    );
}

// ---------------------------------------------------------------------------
// A8: IO round-trips
// ---------------------------------------------------------------------------

#[test]
fn a8_io_round_trips() {
    let (scene, sim_cfg) = blob_scene_a3();
    let (stream, gt) = simulate(&scene, &sim_cfg).unwrap();
    assert!(
        stream.len() >= 10_000,
        "need a 10k-event stream, got {}",
        stream.len()
    );
    let dir = tempfile::TempDir::new().unwrap();

    let text = dir.path().join("events.txt");
    event_files::save_events(&stream, &text, EventFormat::Text).unwrap();
    assert_eq!(event_files::load_events(&text, EventFormat::Text).unwrap(), stream);

    let binary = dir.path().join("events.evt");
    event_files::save_events(&stream, &binary, EventFormat::Binary).unwrap();
    assert_eq!(
        event_files::load_events(&binary, EventFormat::Binary).unwrap(),
        stream
    );

    let gt_path = dir.path().join("gt.csv");
    tables::write_ground_truth(&gt, &gt_path).unwrap();
    let loaded = tables::load_ground_truth(&gt_path).unwrap();
    assert_eq!(loaded.points.len(), gt.trajectories.len());
    for (track, original) in loaded.points.iter().zip(&gt.trajectories) {
        assert_eq!(&track.times_us, &gt.timestep_times);
        for (a, b) in track.coords.iter().zip(original) {
            assert!((a.x - b.x).abs() <= 5e-7 && (a.y - b.y).abs() <= 5e-7);
        }
    }

    let cfg = track_config();
    let window = TimeWindow::new(0, sim_cfg.duration_us).unwrap();
    let frames = FrameSet::new(&stream, window, &cfg).unwrap();
    let traj = track_on_frames(gt.query_points[0], &frames, &cfg).unwrap();
    let traj_path = dir.path().join("traj.csv");
    tables::write_trajectories(std::slice::from_ref(&traj), &traj_path).unwrap();
    let reloaded = tables::load_trajectories(&traj_path).unwrap();
    for (a, b) in reloaded.points[0].coords.iter().zip(&traj.coords) {
        assert!((a.x - b.x).abs() <= 5e-7 && (a.y - b.y).abs() <= 5e-7);
    }
    println!(
        "A8 io round-trips: PASS ({} events bit-exact in both formats, CSVs at 1e-6)",
        stream.len()
    );
}

// ---------------------------------------------------------------------------
// A9: full-pipeline determinism through the CLI
// ---------------------------------------------------------------------------

#[test]
fn a9_pipeline_determinism() {
    let dir = tempfile::TempDir::new().unwrap();
    let config = dir.path().join("scene.cfg");
    std::fs::write(
        &config,
        "\
kind = sinusoidal_blob
width = 160
height = 120
duration_us = 1500000
contrast_threshold = 0.2
dt_integration_us = 500
noise_rate = 0.5
seed = 11
blob_peak = 1.2
blob_sigma = 4
center_x = 80
center_y = 60
osc_amplitude = 20
osc_frequency = 0.5
queries = 80:60;82:60;80:62
",
    )
    .unwrap();

    let bin = env!("CARGO_BIN_EXE_evtap");
    let run_pipeline = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let events = dir.path().join(format!("events_{tag}.evt"));
        let gt = dir.path().join(format!("gt_{tag}.csv"));
        let traj = dir.path().join(format!("traj_{tag}.csv"));
        let report = dir.path().join(format!("report_{tag}.csv"));
        let queries = dir.path().join(format!("queries_{tag}.csv"));
        let status = std::process::Command::new(bin)
            .args([
                "simulate",
                "--config",
                config.to_str().unwrap(),
                "--events",
                events.to_str().unwrap(),
                "--ground-truth",
                gt.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::write(&queries, "point_id,x,y\n0,80,60\n1,82,60\n2,80,62\n").unwrap();
        let status = std::process::Command::new(bin)
            .args([
                "track",
                "--events",
                events.to_str().unwrap(),
                "--queries",
                queries.to_str().unwrap(),
                "--out",
                traj.to_str().unwrap(),
                "--t-end",
                "1500000",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let status = std::process::Command::new(bin)
            .args([
                "evaluate",
                "--pred",
                traj.to_str().unwrap(),
                "--gt",
                gt.to_str().unwrap(),
                "--out",
                report.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        (std::fs::read(&traj).unwrap(), std::fs::read(&report).unwrap())
    };

    let (traj_a, report_a) = run_pipeline("a");
    let (traj_b, report_b) = run_pipeline("b");
    assert_eq!(traj_a, traj_b, "trajectory CSVs differ between runs");
    assert_eq!(report_a, report_b, "report CSVs differ between runs");
    println!(
        "A9 pipeline determinism: PASS (byte-identical trajectory CSV, {} bytes)",
        traj_a.len()
    );
}

// ---------------------------------------------------------------------------
// A10: iteration monotonicity on the A3 scene
// ---------------------------------------------------------------------------

#[test]
fn a10_iteration_monotonicity() {
    let (scene, sim_cfg) = blob_scene_a3();
    let (stream, gt) = simulate(&scene, &sim_cfg).unwrap();
    let cfg = TrackConfig {
        iterations: 8,
        ..track_config()
    };
    let window = TimeWindow::new(0, sim_cfg.duration_us).unwrap();
    let frames = FrameSet::new(&stream, window, &cfg).unwrap();

    // Mean error over all points and steps after each iteration 1..=8.
    let mut mean_errors = Vec::new();
    let mut states: Vec<_> = gt
        .query_points
        .iter()
        .map(|&q| init_state(q, cfg.timesteps, 160, 120).unwrap())
        .collect();
    for _ in 0..8 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, state) in states.iter_mut().enumerate() {
            *state = iterate(state, &frames, &cfg);
            for (c, g) in state.coords().iter().zip(&gt.trajectories[i]) {
                total += (*c - *g).norm();
                count += 1;
            }
        }
        mean_errors.push(total / count as f64);
    }

    for k in 1..6 {
        assert!(
            mean_errors[k] <= mean_errors[k - 1] + 1e-12,
            "mean error rose from iteration {} to {}: {:?}",
            k,
            k + 1,
            mean_errors
        );
    }
    let gain_1_to_6 = mean_errors[0] - mean_errors[5];
    let gain_6_to_8 = mean_errors[5] - mean_errors[7];
    assert!(gain_1_to_6 > 0.0, "no improvement at all: {mean_errors:?}");
    assert!(
        gain_6_to_8 < 0.05 * gain_1_to_6,
        "late gain {gain_6_to_8} vs early gain {gain_1_to_6}"
    );
    println!(
        "A10 iteration monotonicity: PASS (errors {:?}, late/early gain {:.4})",
        mean_errors
            .iter()
            .map(|e| (e * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        gain_6_to_8 / gain_1_to_6.max(1e-12)
    );
}
