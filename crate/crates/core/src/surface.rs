//! Time-surface encoding of event windows, plus the event-image and
//! voxel-grid alternates.
//!
//! A time surface stores, per pixel and polarity, the window-normalized
//! timestamp of the most recent event: `(t_last - t_start) / span`, in
//! `(0, 1]`. Pixels without an event hold the sentinel `0.0`. Timestamps are
//! not truncated or decayed inside the window, so the surface preserves the
//! full motion trajectory of the window.

use alloc::vec;
use alloc::vec::Vec;

use crate::event::{EventStream, Polarity, TimeWindow};
use crate::geom::Vec2;
use crate::math;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SurfaceError {
    #[error("grid data length {got} does not match {width}x{height}")]
    LengthMismatch { got: usize, width: u32, height: u32 },
    #[error("cell ({x}, {y}) holds {value} outside [0, 1]")]
    ValueOutOfRange { x: u32, y: u32, value: f64 },
    #[error("patch center is not finite")]
    NonFiniteCenter,
    #[error("time surfaces are produced by `encode_time_surface`, not `encode_alternate`")]
    UnsupportedKind,
    #[error("voxel grid needs at least one temporal bin")]
    NoBins,
}

/// Two-channel map of normalized most-recent event timestamps over a window.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSurface {
    width: u32,
    height: u32,
    window: TimeWindow,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl TimeSurface {
    /// Builds a surface from raw channel grids, validating the `[0, 1]` range.
    pub fn from_values(
        width: u32,
        height: u32,
        window: TimeWindow,
        pos: Vec<f64>,
        neg: Vec<f64>,
    ) -> Result<Self, SurfaceError> {
        let cells = (width as usize) * (height as usize);
        for grid in [&pos, &neg] {
            if grid.len() != cells {
                return Err(SurfaceError::LengthMismatch {
                    got: grid.len(),
                    width,
                    height,
                });
            }
            for (i, &v) in grid.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SurfaceError::ValueOutOfRange {
                        x: (i % width as usize) as u32,
                        y: (i / width as usize) as u32,
                        value: v,
                    });
                }
            }
        }
        Ok(TimeSurface {
            width,
            height,
            window,
            pos,
            neg,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn window(&self) -> TimeWindow {
        self.window
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn value(&self, x: u32, y: u32, polarity: Polarity) -> f64 {
        let i = self.idx(x, y);
        match polarity {
            Polarity::Pos => self.pos[i],
            Polarity::Neg => self.neg[i],
        }
    }

    /// The fresher of the two polarity channels at a pixel; 0 when neither
    /// channel saw an event.
    #[inline]
    pub fn freshest(&self, x: u32, y: u32) -> f64 {
        let i = self.idx(x, y);
        self.pos[i].max(self.neg[i])
    }

    pub fn channel(&self, polarity: Polarity) -> &[f64] {
        match polarity {
            Polarity::Pos => &self.pos,
            Polarity::Neg => &self.neg,
        }
    }

    /// The surface downscaled by `2^level` via repeated 2x2 average pooling.
    /// Level 0 is a copy of the surface itself.
    pub fn pooled(&self, level: u8) -> LevelGrid {
        let mut grid = LevelGrid {
            level: 0,
            width: self.width,
            height: self.height,
            pos: self.pos.clone(),
            neg: self.neg.clone(),
        };
        for _ in 0..level {
            grid = grid.halved();
        }
        grid
    }

    /// Bilinearly samples a `(2r+1) x (2r+1) x 2` patch from the surface at
    /// pyramid `level`, centered on the sub-pixel `center` given in level-0
    /// coordinates. Out-of-bounds samples are zero and flagged invalid.
    pub fn sample_patch(
        &self,
        center: Vec2,
        radius: usize,
        level: u8,
    ) -> Result<Patch, SurfaceError> {
        if !center.is_finite() {
            return Err(SurfaceError::NonFiniteCenter);
        }
        Ok(self.pooled(level).sample_patch(center, radius))
    }
}

/// One pyramid level of a time surface: the same two channels at `1/2^level`
/// resolution.
#[derive(Clone, Debug)]
pub struct LevelGrid {
    level: u8,
    width: u32,
    height: u32,
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl LevelGrid {
    #[inline]
    pub fn level(&self) -> u8 {
        self.level
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub(crate) fn halved(&self) -> LevelGrid {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        let mut pos = vec![0.0; w as usize * h as usize];
        let mut neg = vec![0.0; w as usize * h as usize];
        for y in 0..h {
            for x in 0..w {
                let mut sp = 0.0;
                let mut sn = 0.0;
                let mut n = 0.0;
                for dy in 0..2u32 {
                    for dx in 0..2u32 {
                        let sx = (2 * x + dx).min(self.width - 1);
                        let sy = (2 * y + dy).min(self.height - 1);
                        let i = sy as usize * self.width as usize + sx as usize;
                        sp += self.pos[i];
                        sn += self.neg[i];
                        n += 1.0;
                    }
                }
                let o = y as usize * w as usize + x as usize;
                pos[o] = sp / n;
                neg[o] = sn / n;
            }
        }
        LevelGrid {
            level: self.level + 1,
            width: w,
            height: h,
            pos,
            neg,
        }
    }

    /// Bilinear lookup in this level's own coordinates. `None` when the
    /// sample point falls outside `[0, w-1] x [0, h-1]`.
    fn bilinear(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        if !(0.0..=maxx).contains(&x) || !(0.0..=maxy).contains(&y) {
            return None;
        }
        let x0 = math::floor(x) as u32;
        let y0 = math::floor(y) as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let at = |xx: u32, yy: u32| yy as usize * self.width as usize + xx as usize;
        let lerp2 = |g: &[f64]| {
            let a = g[at(x0, y0)] * (1.0 - fx) + g[at(x1, y0)] * fx;
            let b = g[at(x0, y1)] * (1.0 - fx) + g[at(x1, y1)] * fx;
            a * (1.0 - fy) + b * fy
        };
        Some((lerp2(&self.pos), lerp2(&self.neg)))
    }

    /// Samples a patch centered on `center` given in *level-0* coordinates;
    /// sample spacing is one cell of this level (`2^level` level-0 pixels).
    pub fn sample_patch(&self, center: Vec2, radius: usize) -> Patch {
        let scale = f64::from(1u32 << self.level);
        // Pooled cell (i, j) covers level-0 pixels [s*i, s*i + s), so its
        // center sits at level-0 coordinate s*(i + 0.5) - 0.5.
        let cx = (center.x + 0.5) / scale - 0.5;
        let cy = (center.y + 0.5) / scale - 0.5;
        let side = 2 * radius + 1;
        let mut values = vec![0.0; 2 * side * side];
        let mut valid = vec![false; side * side];
        for j in 0..side {
            for i in 0..side {
                let sx = cx + (i as f64 - radius as f64);
                let sy = cy + (j as f64 - radius as f64);
                if let Some((p, n)) = self.bilinear(sx, sy) {
                    let cell = j * side + i;
                    values[cell] = p;
                    values[side * side + cell] = n;
                    valid[cell] = true;
                }
            }
        }
        Patch {
            radius,
            values,
            valid,
        }
    }
}

/// A `(2r+1) x (2r+1) x 2` patch of samples with a per-cell validity mask
/// shared by both channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    radius: usize,
    /// Channel-major: positive channel cells, then negative channel cells,
    /// each row-major.
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl Patch {
    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize, polarity: Polarity) -> f64 {
        let side = self.side();
        let base = match polarity {
            Polarity::Pos => 0,
            Polarity::Neg => side * side,
        };
        self.values[base + j * side + i]
    }

    pub fn all_invalid(&self) -> bool {
        self.valid.iter().all(|v| !v)
    }
}

/// Encodes the events of `window` into a [`TimeSurface`]. Events outside the
/// window are ignored; none are clipped into it.
pub fn encode_time_surface(stream: &EventStream, window: TimeWindow) -> TimeSurface {
    let cells = stream.width() as usize * stream.height() as usize;
    let mut pos = vec![0.0; cells];
    let mut neg = vec![0.0; cells];
    let span = window.span_us() as f64;
    for ev in stream.events() {
        if !window.contains(ev.t) {
            continue;
        }
        let v = (ev.t - window.t_start()) as f64 / span;
        let i = ev.y as usize * stream.width() as usize + ev.x as usize;
        // Events are time-sorted, so the last write per pixel is the most
        // recent event.
        match ev.polarity {
            Polarity::Pos => pos[i] = v,
            Polarity::Neg => neg[i] = v,
        }
    }
    TimeSurface {
        width: stream.width(),
        height: stream.height(),
        window,
        pos,
        neg,
    }
}

/// Input-representation alternates used by the ablation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepresentationKind {
    EventImage,
    VoxelGrid,
    TimeSurface,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    /// Per-pixel event counts, one channel per polarity.
    EventImage {
        width: u32,
        height: u32,
        pos: Vec<f64>,
        neg: Vec<f64>,
    },
    /// Per-pixel, per-temporal-bin counts with linear weighting onto the two
    /// adjacent bins.
    VoxelGrid {
        width: u32,
        height: u32,
        bins: usize,
        /// Bin-major: `bins` grids of `width * height`, row-major.
        data: Vec<f64>,
    },
}

impl Representation {
    /// Total mass of the representation; equals the window event count for
    /// both kinds.
    pub fn total(&self) -> f64 {
        match self {
            Representation::EventImage { pos, neg, .. } => {
                pos.iter().sum::<f64>() + neg.iter().sum::<f64>()
            }
            Representation::VoxelGrid { data, .. } => data.iter().sum(),
        }
    }
}

/// Encodes `window` into one of the alternate representations.
pub fn encode_alternate(
    stream: &EventStream,
    window: TimeWindow,
    kind: RepresentationKind,
    bins: usize,
) -> Result<Representation, SurfaceError> {
    let cells = stream.width() as usize * stream.height() as usize;
    match kind {
        RepresentationKind::TimeSurface => Err(SurfaceError::UnsupportedKind),
        RepresentationKind::EventImage => {
            let mut pos = vec![0.0; cells];
            let mut neg = vec![0.0; cells];
            for ev in stream.events() {
                if !window.contains(ev.t) {
                    continue;
                }
                let i = ev.y as usize * stream.width() as usize + ev.x as usize;
                match ev.polarity {
                    Polarity::Pos => pos[i] += 1.0,
                    Polarity::Neg => neg[i] += 1.0,
                }
            }
            Ok(Representation::EventImage {
                width: stream.width(),
                height: stream.height(),
                pos,
                neg,
            })
        }
        RepresentationKind::VoxelGrid => {
            if bins == 0 {
                return Err(SurfaceError::NoBins);
            }
            let mut data = vec![0.0; cells * bins];
            let span = window.span_us() as f64;
            for ev in stream.events() {
                if !window.contains(ev.t) {
                    continue;
                }
                let i = ev.y as usize * stream.width() as usize + ev.x as usize;
                // Continuous bin coordinate with bin centers at integer
                // positions 0..bins-1.
                let tau = (ev.t - window.t_start()) as f64 / span * bins as f64 - 0.5;
                let b0 = math::floor(tau);
                let frac = tau - b0;
                let b0 = b0 as i64;
                for (b, w) in [(b0, 1.0 - frac), (b0 + 1, frac)] {
                    if (0..bins as i64).contains(&b) && w > 0.0 {
                        data[b as usize * cells + i] += w;
                    } else if w > 0.0 {
                        // Clamp boundary mass into the edge bin so total
                        // weight equals the event count.
                        let edge = b.clamp(0, bins as i64 - 1) as usize;
                        data[edge * cells + i] += w;
                    }
                }
            }
            Ok(Representation::VoxelGrid {
                width: stream.width(),
                height: stream.height(),
                bins,
                data,
            })
        }
    }
}
