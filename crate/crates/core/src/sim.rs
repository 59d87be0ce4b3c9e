//! Analytic event-camera simulator with exact ground-truth trajectories.
//!
//! Scenes are parameterized directly in log-intensity, so intensity is
//! positive by construction. Per pixel, a reference level `L_ref` is kept;
//! whenever the log intensity moves a full contrast threshold `C` away from
//! it, an event is emitted with the crossing time linearly interpolated
//! inside the integration substep, and `L_ref` advances by exactly `p * C`.
//! That makes per-pixel event counts the floor of the total log-intensity
//! swing over `C`, which the tests lean on, and gives timestamps smooth
//! enough for plane fitting at high speeds.
//!
//! Ground truth follows physical surface points (fixed offsets on the moving
//! object), not pixels, sampled at the `T` uniform bin-start times that the
//! tracker also uses.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event::{Event, EventStream, Polarity};
use crate::geom::Vec2;
use crate::math;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Scene geometry and motion, all in log-intensity and pixel units.
#[derive(Clone, Debug, PartialEq)]
pub enum SceneKind {
    /// Vertical brightness front at `x = edge_x + velocity.x * t`, bright on
    /// the trailing side, with a linear transition `ramp_width` pixels wide.
    TranslatingEdge {
        /// Log-intensity step across the edge.
        contrast: f64,
        edge_x: f64,
        /// Pixels per second; only the x component moves the front, but
        /// surface points carry the full velocity.
        velocity: Vec2,
        ramp_width: f64,
    },
    /// Gaussian blob in log intensity translating at constant velocity.
    TranslatingBlob {
        peak: f64,
        /// Blob radius (Gaussian sigma) in pixels, at least 1.
        sigma: f64,
        center: Vec2,
        velocity: Vec2,
    },
    /// Bright segment from `pivot` rotating at constant angular velocity.
    RotatingStick {
        contrast: f64,
        length: f64,
        half_width: f64,
        pivot: Vec2,
        /// Radians per second.
        angular_velocity: f64,
    },
    /// Gaussian blob oscillating along `axis` around its rest center.
    SinusoidalBlob {
        peak: f64,
        sigma: f64,
        center: Vec2,
        /// Oscillation amplitude in pixels.
        amplitude: f64,
        /// Oscillation frequency in Hz.
        frequency: f64,
        axis: Vec2,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub kind: SceneKind,
    /// Background log intensity.
    pub background: f64,
    /// Initial coordinates of the tracked surface points; when empty,
    /// [`Scene::default_query_points`] supplies kind-specific ones.
    pub query_points: Vec<Vec2>,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |reason: &str| Err(SimError::InvalidScene(String::from(reason)));
        if !self.background.is_finite() || math::abs(self.background) > 300.0 {
            return err("background log intensity must be finite and moderate");
        }
        for q in &self.query_points {
            if !q.is_finite() {
                return err("query points must be finite");
            }
        }
        match &self.kind {
            SceneKind::TranslatingEdge {
                contrast,
                edge_x,
                velocity,
                ramp_width,
            } => {
                if !contrast.is_finite() || math::abs(*contrast) > 300.0 {
                    return err("edge contrast must be finite and moderate");
                }
                if !edge_x.is_finite() || !velocity.is_finite() {
                    return err("edge position and velocity must be finite");
                }
                if !(*ramp_width >= 0.5) || !ramp_width.is_finite() {
                    return err("edge ramp width must be at least 0.5 px");
                }
            }
            SceneKind::TranslatingBlob {
                peak,
                sigma,
                center,
                velocity,
            } => {
                if !peak.is_finite() || math::abs(*peak) > 300.0 {
                    return err("blob peak must be finite and moderate");
                }
                if !(*sigma >= 1.0) || !sigma.is_finite() {
                    return err("blob radius must be at least 1 px");
                }
                if !center.is_finite() || !velocity.is_finite() {
                    return err("blob center and velocity must be finite");
                }
            }
            SceneKind::RotatingStick {
                contrast,
                length,
                half_width,
                pivot,
                angular_velocity,
            } => {
                if !contrast.is_finite() || math::abs(*contrast) > 300.0 {
                    return err("stick contrast must be finite and moderate");
                }
                if !(*length > 0.0) || !length.is_finite() {
                    return err("stick length must be positive");
                }
                if !(*half_width > 0.0) || !half_width.is_finite() {
                    return err("stick half-width must be positive");
                }
                if !pivot.is_finite() || !angular_velocity.is_finite() {
                    return err("stick pivot and angular velocity must be finite");
                }
            }
            SceneKind::SinusoidalBlob {
                peak,
                sigma,
                center,
                amplitude,
                frequency,
                axis,
            } => {
                if !peak.is_finite() || math::abs(*peak) > 300.0 {
                    return err("blob peak must be finite and moderate");
                }
                if !(*sigma >= 1.0) || !sigma.is_finite() {
                    return err("blob radius must be at least 1 px");
                }
                if !center.is_finite() || !amplitude.is_finite() || !frequency.is_finite() {
                    return err("oscillation parameters must be finite");
                }
                if axis.norm() == 0.0 || !axis.is_finite() {
                    return err("oscillation axis must be a nonzero vector");
                }
            }
        }
        Ok(())
    }

    /// Log intensity at continuous position `(x, y)` and time `t` seconds.
    pub fn log_intensity(&self, x: f64, y: f64, t: f64) -> f64 {
        match &self.kind {
            SceneKind::TranslatingEdge {
                contrast,
                edge_x,
                velocity,
                ramp_width,
            } => {
                let front = edge_x + velocity.x * t;
                let s = ((front - x) / ramp_width).clamp(0.0, 1.0);
                self.background + contrast * s
            }
            SceneKind::TranslatingBlob {
                peak,
                sigma,
                center,
                velocity,
            } => {
                let c = *center + *velocity * t;
                let r2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
                self.background + peak * math::exp(-r2 / (2.0 * sigma * sigma))
            }
            SceneKind::RotatingStick {
                contrast,
                length,
                half_width,
                pivot,
                angular_velocity,
            } => {
                let theta = angular_velocity * t;
                let tip = *pivot + Vec2::new(math::cos(theta), math::sin(theta)) * *length;
                let d = distance_to_segment(Vec2::new(x, y), *pivot, tip);
                // Flat top out to half_width, then a 1 px linear falloff.
                let s = (1.0 - (d - half_width)).clamp(0.0, 1.0);
                self.background + contrast * s
            }
            SceneKind::SinusoidalBlob {
                peak,
                sigma,
                center,
                amplitude,
                frequency,
                axis,
            } => {
                let c = self.oscillation_center(*center, *amplitude, *frequency, *axis, t);
                let r2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
                self.background + peak * math::exp(-r2 / (2.0 * sigma * sigma))
            }
        }
    }

    fn oscillation_center(
        &self,
        center: Vec2,
        amplitude: f64,
        frequency: f64,
        axis: Vec2,
        t: f64,
    ) -> Vec2 {
        let unit = axis * (1.0 / axis.norm());
        center + unit * (amplitude * math::sin(2.0 * core::f64::consts::PI * frequency * t))
    }

    /// Position at time `t` seconds of the physical surface point that was at
    /// `p0` at `t = 0`.
    pub fn surface_point(&self, p0: Vec2, t: f64) -> Vec2 {
        match &self.kind {
            SceneKind::TranslatingEdge { velocity, .. } => p0 + *velocity * t,
            SceneKind::TranslatingBlob { velocity, .. } => p0 + *velocity * t,
            SceneKind::RotatingStick {
                pivot,
                angular_velocity,
                ..
            } => {
                let theta = angular_velocity * t;
                let (s, c) = (math::sin(theta), math::cos(theta));
                let d = p0 - *pivot;
                *pivot + Vec2::new(c * d.x - s * d.y, s * d.x + c * d.y)
            }
            SceneKind::SinusoidalBlob {
                amplitude,
                frequency,
                axis,
                ..
            } => {
                let unit = *axis * (1.0 / axis.norm());
                p0 + unit * (amplitude * math::sin(2.0 * core::f64::consts::PI * frequency * t))
            }
        }
    }

    /// Kind-specific tracked points used when the scene declares none.
    pub fn default_query_points(&self, width: u32, height: u32) -> Vec<Vec2> {
        match &self.kind {
            SceneKind::TranslatingEdge { edge_x, .. } => {
                let ys = [0.3, 0.5, 0.7];
                ys.iter()
                    .map(|f| Vec2::new(*edge_x, f * (height as f64 - 1.0)))
                    .collect()
            }
            SceneKind::TranslatingBlob { center, sigma, .. } => blob_points(*center, *sigma),
            SceneKind::SinusoidalBlob { center, sigma, .. } => blob_points(*center, *sigma),
            SceneKind::RotatingStick { pivot, length, .. } => [0.4, 0.6, 0.8]
                .iter()
                .map(|f| *pivot + Vec2::new(f * length, 0.0))
                .collect(),
        }
        .into_iter()
        .filter(|p| {
            p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64
        })
        .collect()
    }

    /// The same scene with the sign of its log contrast reversed; with zero
    /// noise this flips every event polarity while preserving timestamps.
    pub fn contrast_flipped(&self) -> Scene {
        let mut flipped = self.clone();
        match &mut flipped.kind {
            SceneKind::TranslatingEdge { contrast, .. } => *contrast = -*contrast,
            SceneKind::TranslatingBlob { peak, .. } => *peak = -*peak,
            SceneKind::RotatingStick { contrast, .. } => *contrast = -*contrast,
            SceneKind::SinusoidalBlob { peak, .. } => *peak = -*peak,
        }
        flipped
    }

    /// Conservative pixel rectangle outside which the log intensity cannot
    /// change during `[t0, t1]`, or `None` when nothing changes anywhere.
    fn active_bounds(
        &self,
        t0: f64,
        t1: f64,
        width: u32,
        height: u32,
        contrast_threshold: f64,
    ) -> Option<PixelRect> {
        const MARGIN: f64 = 2.0;
        match &self.kind {
            SceneKind::TranslatingEdge {
                edge_x,
                velocity,
                ramp_width,
                contrast,
            } => {
                if velocity.x == 0.0 || *contrast == 0.0 {
                    return None;
                }
                let f0 = edge_x + velocity.x * t0;
                let f1 = edge_x + velocity.x * t1;
                PixelRect::clipped(
                    f0.min(f1) - ramp_width - MARGIN,
                    0.0,
                    f0.max(f1) + MARGIN,
                    (height - 1) as f64,
                    width,
                    height,
                )
            }
            SceneKind::TranslatingBlob {
                peak,
                sigma,
                center,
                velocity,
            } => {
                if velocity.norm() == 0.0 {
                    return None;
                }
                let r = blob_support_radius(*peak, *sigma, contrast_threshold)? + MARGIN;
                let c0 = *center + *velocity * t0;
                let c1 = *center + *velocity * t1;
                PixelRect::clipped(
                    c0.x.min(c1.x) - r,
                    c0.y.min(c1.y) - r,
                    c0.x.max(c1.x) + r,
                    c0.y.max(c1.y) + r,
                    width,
                    height,
                )
            }
            SceneKind::RotatingStick {
                length,
                half_width,
                pivot,
                angular_velocity,
                contrast,
            } => {
                if *angular_velocity == 0.0 || *contrast == 0.0 {
                    return None;
                }
                let m = half_width + 1.0 + MARGIN;
                let tip = |t: f64| {
                    let th = angular_velocity * t;
                    *pivot + Vec2::new(math::cos(th), math::sin(th)) * *length
                };
                let t0p = tip(t0);
                let t1p = tip(t1);
                PixelRect::clipped(
                    pivot.x.min(t0p.x).min(t1p.x) - m,
                    pivot.y.min(t0p.y).min(t1p.y) - m,
                    pivot.x.max(t0p.x).max(t1p.x) + m,
                    pivot.y.max(t0p.y).max(t1p.y) + m,
                    width,
                    height,
                )
            }
            SceneKind::SinusoidalBlob {
                peak,
                sigma,
                amplitude,
                frequency,
                axis,
                center,
            } => {
                if *amplitude == 0.0 || *frequency == 0.0 {
                    return None;
                }
                let r = blob_support_radius(*peak, *sigma, contrast_threshold)? + MARGIN;
                let c0 = self.oscillation_center(*center, *amplitude, *frequency, *axis, t0);
                let c1 = self.oscillation_center(*center, *amplitude, *frequency, *axis, t1);
                PixelRect::clipped(
                    c0.x.min(c1.x) - r,
                    c0.y.min(c1.y) - r,
                    c0.x.max(c1.x) + r,
                    c0.y.max(c1.y) + r,
                    width,
                    height,
                )
            }
        }
    }
}

fn blob_points(center: Vec2, sigma: f64) -> Vec<Vec2> {
    let d = sigma * 0.5;
    alloc::vec![
        center,
        center + Vec2::new(d, 0.0),
        center + Vec2::new(-d, 0.0),
        center + Vec2::new(0.0, d),
        center + Vec2::new(0.0, -d),
    ]
}

/// Radius beyond which a Gaussian lobe cannot move the log intensity far
/// enough to matter relative to the contrast threshold.
fn blob_support_radius(peak: f64, sigma: f64, c: f64) -> Option<f64> {
    let ratio = 8.0 * math::abs(peak) / c.max(1e-12);
    if ratio <= 1.0 {
        return None;
    }
    Some(sigma * math::sqrt(2.0 * math::ln(ratio)))
}

fn distance_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[derive(Clone, Copy, Debug)]
struct PixelRect {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl PixelRect {
    fn clipped(x0: f64, y0: f64, x1: f64, y1: f64, width: u32, height: u32) -> Option<PixelRect> {
        let xa = math::floor(x0).max(0.0);
        let ya = math::floor(y0).max(0.0);
        let xb = math::floor(x1).min((width - 1) as f64);
        let yb = math::floor(y1).min((height - 1) as f64);
        if xb < xa || yb < ya {
            return None;
        }
        Some(PixelRect {
            x0: xa as u32,
            y0: ya as u32,
            x1: xb as u32,
            y1: yb as u32,
        })
    }

    fn union(a: Option<PixelRect>, b: Option<PixelRect>) -> Option<PixelRect> {
        match (a, b) {
            (Some(a), Some(b)) => Some(PixelRect {
                x0: a.x0.min(b.x0),
                y0: a.y0.min(b.y0),
                x1: a.x1.max(b.x1),
                y1: a.y1.max(b.y1),
            }),
            (Some(a), None) => Some(a),
            (None, b) => b,
        }
    }
}

/// Sensor and integration parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub width: u32,
    pub height: u32,
    pub duration_us: u64,
    /// Contrast threshold C: log-intensity step per event.
    pub contrast_threshold: f64,
    /// Integration substep in microseconds.
    pub dt_integration_us: u64,
    /// Crossings within this many microseconds of a pixel's last emitted
    /// event are dropped.
    pub refractory_us: u64,
    /// Background noise events per pixel per second, random polarity.
    pub noise_rate: f64,
    pub rng_seed: u64,
    /// Number of ground-truth output timesteps.
    pub gt_timesteps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            width: 160,
            height: 120,
            duration_us: 1_000_000,
            contrast_threshold: 0.2,
            dt_integration_us: 500,
            refractory_us: 0,
            noise_rate: 0.0,
            rng_seed: 0,
            gt_timesteps: 48,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |reason: &str| Err(SimError::InvalidConfig(String::from(reason)));
        if self.width == 0 || self.height == 0 {
            return err("sensor must be at least 1x1");
        }
        if self.duration_us == 0 {
            return err("duration must be positive");
        }
        if !(self.contrast_threshold > 0.0) || !self.contrast_threshold.is_finite() {
            return err("contrast threshold must be positive");
        }
        if self.dt_integration_us == 0 {
            return err("integration substep must be at least 1 us");
        }
        if !(self.noise_rate >= 0.0) || !self.noise_rate.is_finite() {
            return err("noise rate must be non-negative");
        }
        if self.gt_timesteps == 0 {
            return err("ground truth needs at least one timestep");
        }
        Ok(())
    }
}

/// Exact trajectories of the scene's tracked surface points at the `T`
/// uniform bin-start times.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub query_points: Vec<Vec2>,
    /// Microsecond time of each output step; strictly increasing.
    pub timestep_times: Vec<u64>,
    /// Per point, per step.
    pub trajectories: Vec<Vec<Vec2>>,
}

/// Runs the scene through the event-generation model. Deterministic for a
/// fixed config, including the noise process.
pub fn simulate(scene: &Scene, cfg: &SimConfig) -> Result<(EventStream, GroundTruth), SimError> {
    scene.validate()?;
    cfg.validate()?;

    let c = cfg.contrast_threshold;
    // Tolerance so that intended-exact swing/threshold ratios (e.g. 0.6/0.2)
    // produce their full floor(swing / C) crossings despite rounding.
    let c_slack = c * 1e-9;
    let w = cfg.width;
    let h = cfg.height;
    let cells = w as usize * h as usize;

    let mut l_ref = Vec::with_capacity(cells);
    for y in 0..h {
        for x in 0..w {
            l_ref.push(scene.log_intensity(x as f64, y as f64, 0.0));
        }
    }
    let mut l_prev = l_ref.clone();
    let mut last_emit = alloc::vec![u64::MAX; cells];
    let mut events: Vec<Event> = Vec::new();

    let dt = cfg.dt_integration_us;
    let mut t0 = 0u64;
    while t0 < cfg.duration_us {
        let t1 = (t0 + dt).min(cfg.duration_us);
        let t0s = t0 as f64 * 1e-6;
        let t1s = t1 as f64 * 1e-6;
        let bounds = PixelRect::union(
            scene.active_bounds(t0s, t1s, w, h, c),
            scene.active_bounds(t1s, t1s, w, h, c),
        );
        if let Some(rect) = bounds {
            for y in rect.y0..=rect.y1 {
                for x in rect.x0..=rect.x1 {
                    let i = y as usize * w as usize + x as usize;
                    let l1 = scene.log_intensity(x as f64, y as f64, t1s);
                    let l0 = l_prev[i];
                    if l1 != l0 || math::abs(l1 - l_ref[i]) + c_slack >= c {
                        emit_crossings(
                            &mut events,
                            &mut l_ref[i],
                            &mut last_emit[i],
                            l0,
                            l1,
                            t0,
                            t1,
                            x as u16,
                            y as u16,
                            c,
                            c_slack,
                            cfg.refractory_us,
                        );
                    }
                    l_prev[i] = l1;
                }
            }
        }
        t0 = t1;
    }

    if cfg.noise_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let duration_s = cfg.duration_us as f64 * 1e-6;
        for y in 0..h {
            for x in 0..w {
                let mut t = 0.0f64;
                loop {
                    let u: f64 = rng.random();
                    t += -math::ln(1.0 - u) / cfg.noise_rate;
                    if t >= duration_s {
                        break;
                    }
                    let polarity = if rng.random::<bool>() {
                        Polarity::Pos
                    } else {
                        Polarity::Neg
                    };
                    events.push(Event::new(
                        math::floor(t * 1e6) as u64,
                        x as u16,
                        y as u16,
                        polarity,
                    ));
                }
            }
        }
    }

    events.sort_by_key(|ev| ev.t);
    let stream = EventStream::new(w, h, 0, events)
        .map_err(|e| SimError::InvalidConfig(format!("internal: {e}")))?;

    let queries = if scene.query_points.is_empty() {
        scene.default_query_points(w, h)
    } else {
        scene.query_points.clone()
    };
    let t_steps = cfg.gt_timesteps;
    let mut timestep_times = Vec::with_capacity(t_steps);
    for k in 0..t_steps {
        timestep_times.push(k as u64 * cfg.duration_us / t_steps as u64);
    }
    let trajectories = queries
        .iter()
        .map(|&q| {
            timestep_times
                .iter()
                .map(|&t_us| scene.surface_point(q, t_us as f64 * 1e-6))
                .collect()
        })
        .collect();

    Ok((
        stream,
        GroundTruth {
            query_points: queries,
            timestep_times,
            trajectories,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn emit_crossings(
    events: &mut Vec<Event>,
    l_ref: &mut f64,
    last_emit: &mut u64,
    l0: f64,
    l1: f64,
    t0: u64,
    t1: u64,
    x: u16,
    y: u16,
    c: f64,
    c_slack: f64,
    refractory_us: u64,
) {
    let span = (t1 - t0) as f64;
    loop {
        let (polarity, target) = if l1 - *l_ref >= c - c_slack {
            (Polarity::Pos, *l_ref + c)
        } else if *l_ref - l1 >= c - c_slack {
            (Polarity::Neg, *l_ref - c)
        } else {
            break;
        };
        let f = if l1 != l0 {
            ((target - l0) / (l1 - l0)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let t_event = t0 + math::floor(f * span) as u64;
        *l_ref = target;
        let blocked = *last_emit != u64::MAX
            && refractory_us > 0
            && t_event < last_emit.saturating_add(refractory_us);
        if !blocked {
            events.push(Event::new(t_event, x, y, polarity));
            *last_emit = t_event;
        }
    }
}

/// Events binned by annulus around `pivot`, as events per second per pixel of
/// radius. An empty stream yields all-zero rates.
pub fn event_rate_profile(stream: &EventStream, pivot: Vec2, n_bins: usize) -> Vec<(f64, f64)> {
    assert!(n_bins >= 2, "event_rate_profile needs at least 2 bins");
    let corners = [
        Vec2::new(0.0, 0.0),
        Vec2::new((stream.width() - 1) as f64, 0.0),
        Vec2::new(0.0, (stream.height() - 1) as f64),
        Vec2::new((stream.width() - 1) as f64, (stream.height() - 1) as f64),
    ];
    let r_max = corners
        .iter()
        .map(|c| (*c - pivot).norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let bin_width = r_max / n_bins as f64;
    let mut counts = alloc::vec![0.0f64; n_bins];
    for ev in stream.events() {
        let r = (Vec2::new(ev.x as f64, ev.y as f64) - pivot).norm();
        let b = ((r / bin_width) as usize).min(n_bins - 1);
        counts[b] += 1.0;
    }
    let duration_s = match (stream.events().first(), stream.events().last()) {
        (Some(first), Some(last)) => ((last.t - first.t) as f64 * 1e-6).max(1e-9),
        _ => 1.0,
    };
    counts
        .iter()
        .enumerate()
        .map(|(b, &n)| {
            let center = (b as f64 + 0.5) * bin_width;
            (center, n / duration_s / bin_width)
        })
        .collect()
}
