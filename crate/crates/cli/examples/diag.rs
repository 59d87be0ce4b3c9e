// Scratch diagnostics for tuning; not part of the deliverable surface.
use evtap_core::*;

fn run_scene(name: &str, scene: &Scene, sim_cfg: &SimConfig, cfg: &TrackConfig) {
    let (stream, gt) = simulate(scene, sim_cfg).unwrap();
    println!("== {name}: {} events", stream.len());
    let window = TimeWindow::new(0, sim_cfg.duration_us).unwrap();
    let frames = FrameSet::new(&stream, window, cfg).unwrap();
    let q = gt.query_points[0];
    let mut state = init_state(q, cfg.timesteps, sim_cfg.width, sim_cfg.height).unwrap();
    let errs_of = |state: &TrackState| -> Vec<f64> {
        state
            .coords()
            .iter()
            .zip(&gt.trajectories[0])
            .map(|(c, g)| (*c - *g).norm())
            .collect()
    };
    for k in 0..cfg.iterations {
        state = iterate(&state, &frames, cfg);
        let errs = errs_of(&state);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let max = errs.iter().cloned().fold(0.0f64, f64::max);
        print!("iter {}: mean {:7.3} max {:7.3} | err/step:", k + 1, mean, max);
        for t in 0..cfg.timesteps {
            print!(" {:4.1}", errs[t]);
        }
        println!();
        if k + 1 == cfg.iterations {
            for t in 0..cfg.timesteps.min(20) {
                let kv = state.kinematics()[t];
                println!(
                    "  t={t:2} err {:6.2} peak {:5.2} w {:4.2} v ({:6.2},{:6.2}) res {:.4} n {}",
                    errs[t],
                    state.peak_scores()[t],
                    kv.weight,
                    kv.v.x,
                    kv.v.y,
                    kv.residual,
                    kv.n_support
                );
            }
        }
    }
}

fn dump_fit_region(scene: &Scene, sim_cfg: &SimConfig, bin: usize, center: Vec2) {
    let (stream, _) = simulate(scene, sim_cfg).unwrap();
    let t_steps = 48u64;
    let span = sim_cfg.duration_us;
    let b0 = bin as u64 * span / t_steps;
    let b1 = (bin as u64 + 1) * span / t_steps;
    let window = TimeWindow::new(b0, b1).unwrap();
    let slice = stream.slice_window(window);
    println!(
        "bin {bin} [{b0},{b1}): {} events; fit center ({},{})",
        slice.len(),
        center.x,
        center.y
    );
    let ts = encode_time_surface(&slice, window);
    let cx = center.x as i64;
    let cy = center.y as i64;
    for (label, chan) in [("pos", Polarity::Pos), ("neg", Polarity::Neg)] {
        println!("{label}:");
        for y in (cy - 4)..=(cy + 4) {
            let row: Vec<String> = ((cx - 4)..=(cx + 4))
                .map(|x| format!("{:4.2}", ts.value(x as u32, y as u32, chan)))
                .collect();
            println!("  {}", row.join(" "));
        }
    }
    for ch in [evtap_core::guidance::FitChannel::Merged, evtap_core::guidance::FitChannel::Pos, evtap_core::guidance::FitChannel::Neg] {
        match evtap_core::guidance::fit_plane_channel(&ts, center, 3, ch) {
            Ok(fit) => {
                let kv = plane_to_velocity(&fit, &evtap_core::guidance::VelocityParams::default());
                println!("  cand {:?}: res {:.4} n {} v ({:.2},{:.2}) w {:.2}", ch, fit.rms_residual, fit.n_support, kv.v.x, kv.v.y, kv.weight);
            }
            Err(e) => println!("  cand {:?}: {e}", ch),
        }
    }
    match fit_plane(&ts, center, 3) {
        Ok(fit) => {
            let kv = plane_to_velocity(
                &fit,
                &evtap_core::guidance::VelocityParams::default(),
            );
            println!(
                "fit: coeffs {:?} sv {:?} res {:.4} n {} -> v ({:.2},{:.2}) w {:.2}",
                fit.coeffs, fit.singular_values, fit.rms_residual, fit.n_support, kv.v.x, kv.v.y, kv.weight
            );
        }
        Err(e) => println!("fit failed: {e}"),
    }
}

fn main() {
    let a3_scene = Scene {
        kind: SceneKind::TranslatingBlob {
            peak: 1.5,
            sigma: 4.0,
            center: Vec2::new(40.0, 60.0),
            velocity: Vec2::new(20.0, 0.0),
        },
        background: 0.0,
        query_points: vec![Vec2::new(40.0, 60.0)],
    };
    let a3_cfg = SimConfig {
        width: 160,
        height: 120,
        duration_us: 2_000_000,
        contrast_threshold: 0.12,
        dt_integration_us: 500,
        gt_timesteps: 48,
        ..SimConfig::default()
    };
    let tcfg = TrackConfig {
        temperature: 0.01,
        fit_radius: 5,
        ..TrackConfig::default()
    };
    run_scene("a3 baseline", &a3_scene, &a3_cfg, &tcfg);

    let a4_scene = Scene {
        kind: SceneKind::SinusoidalBlob {
            peak: 1.5,
            sigma: 4.0,
            center: Vec2::new(80.0, 60.0),
            amplitude: 30.0,
            frequency: 0.5,
            axis: Vec2::new(1.0, 0.0),
        },
        background: 0.0,
        query_points: vec![Vec2::new(80.0, 60.0)],
    };
    let a4_cfg = SimConfig {
        width: 160,
        height: 120,
        duration_us: 3_000_000,
        contrast_threshold: 0.12,
        dt_integration_us: 250,
        gt_timesteps: 48,
        ..SimConfig::default()
    };
    run_scene("a4 baseline", &a4_scene, &a4_cfg, &tcfg);
    dump_fit_region(&a4_scene, &a4_cfg, 0, Vec2::new(80.0, 60.0));
    dump_fit_region(&a4_scene, &a4_cfg, 2, Vec2::new(80.0 + 11.7, 60.0));
}

// Appended: direct fit-region dump for the a4 scene, bin 0 at the query.
#[allow(dead_code)]
fn unused() {}
