use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use evtap::scene_config::load_scene_config;
use evtap::{event_files, plot, tables, EventFormat};
use evtap_core::{
    compute_report, track_on_frames, EvalPair, FrameSet, MetricsParams, OutOfFrame, TimeWindow,
    TrackConfig, Trajectory, Vec2,
};

#[derive(Parser)]
#[command(
    name = "evtap",
    version,
    about = "Track query points through event-camera streams: simulate, track, evaluate, plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scene config's RNG seed (simulate only).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch tracking; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Format for written event files.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Binary)]
    format: FormatArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for EventFormat {
    fn from(f: FormatArg) -> EventFormat {
        match f {
            FormatArg::Text => EventFormat::Text,
            FormatArg::Binary => EventFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutOfFrameArg {
    Freeze,
    Clamp,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an analytic scene into an event file plus ground-truth CSV.
    Simulate {
        /// Scene/simulation config (flat key=value file).
        #[arg(long)]
        config: PathBuf,
        /// Output event file.
        #[arg(long)]
        events: PathBuf,
        /// Output ground-truth CSV.
        #[arg(long = "ground-truth")]
        ground_truth: PathBuf,
        /// Fail instead of replacing existing outputs.
        #[arg(long)]
        no_overwrite: bool,
    },
    /// Track query points through an event file.
    Track {
        /// Input event file (format auto-detected).
        #[arg(long)]
        events: PathBuf,
        /// Query points CSV: `point_id,x,y`.
        #[arg(long)]
        queries: PathBuf,
        /// Output trajectory CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tracker: TrackerArgs,
        /// Optional per-step kinematic-vector CSV dump.
        #[arg(long)]
        dump_kinematics: Option<PathBuf>,
    },
    /// Evaluate predicted trajectories against ground truth.
    Evaluate {
        /// Predicted trajectory CSV.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth CSV.
        #[arg(long)]
        gt: PathBuf,
        /// Survival failure threshold in pixels.
        #[arg(long, default_value_t = 50.0)]
        survival_threshold: f64,
        /// Weight factor of the weighted-MAE loss.
        #[arg(long, default_value_t = 0.8)]
        gamma: f64,
        /// Optional machine-readable report CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render trajectories over an event-density background as SVG.
    Plot {
        /// Trajectory CSV.
        #[arg(long)]
        trajectories: PathBuf,
        /// Event file for the background.
        #[arg(long)]
        events: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrackerArgs {
    /// Window start in microseconds.
    #[arg(long, default_value_t = 0)]
    t_start: u64,
    /// Window end in microseconds; defaults to just past the last event.
    #[arg(long)]
    t_end: Option<u64>,
    /// Refinement iterations K.
    #[arg(long, default_value_t = 6)]
    iterations: usize,
    /// Timesteps (bins) T.
    #[arg(long, default_value_t = 48)]
    timesteps: usize,
    /// Correlation search radius in pixels.
    #[arg(long, default_value_t = 4)]
    search_radius: usize,
    /// Plane-fit neighborhood half-width.
    #[arg(long, default_value_t = 3)]
    fit_radius: u32,
    /// Patch half-width per pyramid level.
    #[arg(long, default_value_t = 3)]
    patch_radius: usize,
    /// Soft-argmax temperature.
    #[arg(long, default_value_t = 0.05)]
    temperature: f64,
    /// Disable motion guidance (appearance-only matching).
    #[arg(long)]
    no_guidance: bool,
    /// Policy for steps that leave the frame.
    #[arg(long, value_enum, default_value_t = OutOfFrameArg::Freeze)]
    out_of_frame: OutOfFrameArg,
}

impl TrackerArgs {
    fn to_config(&self) -> TrackConfig {
        TrackConfig {
            iterations: self.iterations,
            timesteps: self.timesteps,
            search_radius: self.search_radius,
            fit_radius: self.fit_radius,
            patch_radius: self.patch_radius,
            temperature: self.temperature,
            guidance: !self.no_guidance,
            out_of_frame: match self.out_of_frame {
                OutOfFrameArg::Freeze => OutOfFrame::Freeze,
                OutOfFrameArg::Clamp => OutOfFrame::Clamp,
            },
            ..TrackConfig::default()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            events,
            ground_truth,
            no_overwrite,
        } => cmd_simulate(
            &config,
            &events,
            &ground_truth,
            no_overwrite,
            cli.seed,
            cli.format.into(),
        ),
        Command::Track {
            events,
            queries,
            out,
            tracker,
            dump_kinematics,
        } => cmd_track(
            &events,
            &queries,
            &out,
            &tracker,
            dump_kinematics.as_deref(),
            cli.threads,
        ),
        Command::Evaluate {
            pred,
            gt,
            survival_threshold,
            gamma,
            out,
        } => cmd_evaluate(&pred, &gt, survival_threshold, gamma, out.as_deref()),
        Command::Plot {
            trajectories,
            events,
            out,
        } => cmd_plot(&trajectories, &events, &out),
    }
}

fn cmd_simulate(
    config: &Path,
    events_path: &Path,
    gt_path: &Path,
    no_overwrite: bool,
    seed: Option<u64>,
    format: EventFormat,
) -> Result<()> {
    let (scene, mut sim_cfg) = load_scene_config(config)?;
    if let Some(seed) = seed {
        sim_cfg.rng_seed = seed;
    }
    if no_overwrite {
        for path in [events_path, gt_path] {
            if path.exists() {
                bail!("{} already exists (--no-overwrite)", path.display());
            }
        }
    }
    let (stream, gt) = evtap_core::simulate(&scene, &sim_cfg)?;
    event_files::save_events(&stream, events_path, format)?;
    if let Err(err) = tables::write_ground_truth(&gt, gt_path) {
        let _ = fs::remove_file(events_path);
        return Err(err.into());
    }
    println!(
        "simulated {} events over {} us ({} ground-truth points x {} steps)",
        stream.len(),
        sim_cfg.duration_us,
        gt.query_points.len(),
        gt.timestep_times.len()
    );
    println!("events -> {}", events_path.display());
    println!("ground truth -> {}", gt_path.display());
    Ok(())
}

fn cmd_track(
    events_path: &Path,
    queries_path: &Path,
    out: &Path,
    tracker: &TrackerArgs,
    dump_kinematics: Option<&Path>,
    threads: usize,
) -> Result<()> {
    let format = event_files::detect_format(events_path)?;
    let stream = event_files::load_events(events_path, format)?;
    if stream.reorder_count() > 0 {
        eprintln!(
            "warning: repaired {} out-of-order events in {}",
            stream.reorder_count(),
            events_path.display()
        );
    }
    let queries = tables::load_queries(queries_path)?;
    let t_end = match tracker.t_end {
        Some(t) => t,
        None => stream
            .events()
            .last()
            .map(|e| e.t + 1)
            .context("event stream is empty; pass --t-end to define the window")?,
    };
    let window = TimeWindow::new(tracker.t_start, t_end)
        .map_err(|e| anyhow::anyhow!("invalid window: {e}"))?;
    let cfg = tracker.to_config();
    let frames = FrameSet::new(&stream, window, &cfg)?;

    let track_one = |(id, q): &(u64, Vec2)| -> (u64, Result<Trajectory, evtap_core::tracker::TrackError>) {
        let result = track_on_frames(*q, &frames, &cfg).map(|mut traj| {
            traj.point_id = *id;
            traj
        });
        (*id, result)
    };
    let results: Vec<_> = if threads == 1 {
        queries.iter().map(track_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building the tracking thread pool")?;
        pool.install(|| queries.par_iter().map(track_one).collect())
    };

    let mut trajectories = Vec::new();
    let mut failed = 0usize;
    let mut warned = 0usize;
    for (id, result) in results {
        match result {
            Ok(traj) => {
                if traj.warned {
                    warned += 1;
                }
                trajectories.push(traj);
            }
            Err(err) => {
                failed += 1;
                eprintln!("point {id}: failed: {err}");
            }
        }
    }
    tables::write_trajectories(&trajectories, out)?;
    if let Some(path) = dump_kinematics {
        let rows: Vec<_> = trajectories
            .iter()
            .map(|t| (t.point_id, t.kinematics.clone()))
            .collect();
        tables::write_kinematics_csv(&rows, path)?;
    }
    println!(
        "tracked {} points: {} ok, {} failed, {} warned -> {}",
        queries.len(),
        trajectories.len(),
        failed,
        warned,
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(
    pred_path: &Path,
    gt_path: &Path,
    survival_threshold: f64,
    gamma: f64,
    out: Option<&Path>,
) -> Result<()> {
    let pred = tables::load_trajectories(pred_path)?;
    let gt = tables::load_ground_truth(gt_path)?;

    let mut offenders = Vec::new();
    let mut pairs = Vec::new();
    for track in &pred.points {
        match gt.by_id(track.point_id) {
            None => offenders.push(format!("point {} missing from ground truth", track.point_id)),
            Some(gt_track) if gt_track.coords.len() != track.coords.len() => {
                offenders.push(format!(
                    "point {}: {} predicted steps vs {} ground-truth steps",
                    track.point_id,
                    track.coords.len(),
                    gt_track.coords.len()
                ));
            }
            Some(gt_track) => {
                pairs.push(EvalPair::dense(
                    track.coords.clone(),
                    gt_track.coords.clone(),
                )?);
            }
        }
    }
    for gt_track in &gt.points {
        if pred.by_id(gt_track.point_id).is_none() {
            offenders.push(format!(
                "point {} missing from predictions",
                gt_track.point_id
            ));
        }
    }
    if !offenders.is_empty() {
        bail!("prediction/ground-truth mismatch:\n  {}", offenders.join("\n  "));
    }

    let params = MetricsParams {
        survival_threshold,
        gamma,
    };
    let report = compute_report(&pairs, &params)?;
    print!("{}", tables::format_report_table(&report));
    if let Some(path) = out {
        tables::write_report_csv(&report, path)?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

fn cmd_plot(trajectories: &Path, events_path: &Path, out: &Path) -> Result<()> {
    let tracks = tables::load_trajectories(trajectories)?;
    let format = event_files::detect_format(events_path)?;
    let stream = event_files::load_events(events_path, format)?;
    plot::write_svg(&tracks, &stream, out)?;
    println!(
        "plotted {} trajectories over {} events -> {}",
        tracks.points.len(),
        stream.len(),
        out.display()
    );
    Ok(())
}
