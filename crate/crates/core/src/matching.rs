//! Multi-scale patch matching on time surfaces.
//!
//! Descriptors are raw-surface patch pyramids rather than learned features;
//! masked cosine scoring normalizes away the event-density differences that
//! variable speed induces, which is what makes responses comparable across
//! timesteps. The search window is recentered by the kinematic guidance
//! vector before scoring, so guidance rather than search radius absorbs large
//! motion.

use alloc::vec;
use alloc::vec::Vec;

use crate::geom::Vec2;
use crate::guidance::KinematicVector;
use crate::math;
use crate::surface::{LevelGrid, Patch, TimeSurface};

#[derive(Clone, Copy, Debug)]
pub struct PyramidConfig {
    /// Patch half-width per level; every level samples a (2r+1)^2 grid.
    pub patch_radius: usize,
    /// Number of pyramid levels (scales 0..levels).
    pub levels: u8,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            patch_radius: 3,
            levels: 3,
        }
    }
}

/// Precomputed pooled levels of one time surface; the shared input for all
/// patch sampling against that surface.
#[derive(Clone, Debug)]
pub struct SurfacePyramid {
    levels: Vec<LevelGrid>,
}

impl SurfacePyramid {
    pub fn new(ts: &TimeSurface, levels: u8) -> Self {
        let mut grids = Vec::with_capacity(levels as usize);
        let mut grid = ts.pooled(0);
        for level in 0..levels {
            if level > 0 {
                grid = grid.halved();
            }
            grids.push(grid.clone());
        }
        SurfacePyramid { levels: grids }
    }

    #[inline]
    pub fn level_count(&self) -> u8 {
        self.levels.len() as u8
    }

    /// Samples one patch per level at `anchor` (level-0 coordinates).
    pub fn sample(&self, anchor: Vec2, patch_radius: usize) -> PatchPyramid {
        let patches = self
            .levels
            .iter()
            .map(|g| g.sample_patch(anchor, patch_radius))
            .collect();
        PatchPyramid { anchor, patches }
    }
}

/// Patch descriptors at scales 0..levels for one anchor, all resampled to the
/// same spatial extent.
#[derive(Clone, Debug)]
pub struct PatchPyramid {
    pub anchor: Vec2,
    patches: Vec<Patch>,
}

impl PatchPyramid {
    #[inline]
    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn all_invalid(&self) -> bool {
        self.patches.iter().all(|p| p.all_invalid())
    }

    /// Flattens to (values, per-cell validity); values are channel-paired per
    /// cell so masking one cell drops both channels.
    fn flatten(&self) -> (Vec<f64>, Vec<bool>) {
        let mut values = Vec::new();
        let mut valid = Vec::new();
        for patch in &self.patches {
            let side = patch.side();
            let cells = side * side;
            for c in 0..cells {
                values.push(patch.values()[c]);
                values.push(patch.values()[cells + c]);
                valid.push(patch.valid()[c]);
            }
        }
        (values, valid)
    }
}

/// A mean/variance-normalized flattened pyramid.
#[derive(Clone, Debug)]
struct NormalizedPart {
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl NormalizedPart {
    fn from_pyramid(pyr: &PatchPyramid) -> Self {
        let (mut values, valid) = pyr.flatten();
        normalize_in_place(&mut values, &valid);
        NormalizedPart { values, valid }
    }

    /// Masked cosine similarity over cells valid in both parts; 0 when the
    /// overlap is empty or either masked vector is zero.
    fn cosine(&self, other: &NormalizedPart) -> f64 {
        debug_assert_eq!(self.valid.len(), other.valid.len());
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for (cell, (&va, &vb)) in self.valid.iter().zip(other.valid.iter()).enumerate() {
            if va && vb {
                for k in 0..2 {
                    let a = self.values[2 * cell + k];
                    let b = other.values[2 * cell + k];
                    dot += a * b;
                    na += a * a;
                    nb += b * b;
                }
            }
        }
        if na <= 0.0 || nb <= 0.0 {
            0.0
        } else {
            dot / (math::sqrt(na) * math::sqrt(nb))
        }
    }
}

fn normalize_in_place(values: &mut [f64], valid: &[bool]) {
    let mut n = 0.0;
    let mut mean = 0.0;
    for (cell, &ok) in valid.iter().enumerate() {
        if ok {
            mean += values[2 * cell] + values[2 * cell + 1];
            n += 2.0;
        }
    }
    if n == 0.0 {
        return;
    }
    mean /= n;
    let mut var = 0.0;
    for (cell, &ok) in valid.iter().enumerate() {
        if ok {
            for k in 0..2 {
                let d = values[2 * cell + k] - mean;
                var += d * d;
            }
        }
    }
    var /= n;
    let scale = if var > 1e-24 {
        1.0 / math::sqrt(var)
    } else {
        1.0
    };
    for (cell, &ok) in valid.iter().enumerate() {
        for k in 0..2 {
            if ok {
                values[2 * cell + k] = (values[2 * cell + k] - mean) * scale;
            } else {
                values[2 * cell + k] = 0.0;
            }
        }
    }
}

/// Reference descriptor: the query-time pyramid combined with two offset-step
/// pyramids, each mean/variance normalized, fused with fixed weights.
#[derive(Clone, Debug)]
pub struct Descriptor {
    parts: Vec<NormalizedPart>,
    weights: [f64; 3],
}

/// Builds a reference descriptor from the pyramids at steps {0, t-4, t-2}.
/// Offsets that fall before step 0 are the caller's responsibility to clamp
/// (pass the step-0 pyramid for them).
pub fn reference_descriptor(
    at_start: &PatchPyramid,
    at_minus4: &PatchPyramid,
    at_minus2: &PatchPyramid,
    weights: (f64, f64, f64),
) -> Descriptor {
    Descriptor {
        parts: vec![
            NormalizedPart::from_pyramid(at_start),
            NormalizedPart::from_pyramid(at_minus4),
            NormalizedPart::from_pyramid(at_minus2),
        ],
        weights: [weights.0, weights.1, weights.2],
    }
}

impl Descriptor {
    /// Weighted masked-cosine score of a candidate pyramid in [-1, 1].
    pub fn score(&self, candidate: &PatchPyramid) -> f64 {
        let cand = NormalizedPart::from_pyramid(candidate);
        let mut total = 0.0;
        let mut weight_sum = 0.0;
        for (part, &w) in self.parts.iter().zip(self.weights.iter()) {
            if w == 0.0 {
                continue;
            }
            total += w * part.cosine(&cand);
            weight_sum += w;
        }
        if weight_sum > 0.0 {
            total / weight_sum
        } else {
            0.0
        }
    }
}

/// Correlation scores over integer displacements from a guided center.
#[derive(Clone, Debug)]
pub struct CorrelationMap {
    search_radius: usize,
    guided_center: Vec2,
    /// Row-major over displacements dy then dx in [-R, R].
    scores: Vec<f64>,
}

impl CorrelationMap {
    pub fn from_scores(
        search_radius: usize,
        guided_center: Vec2,
        scores: Vec<f64>,
    ) -> Option<Self> {
        let side = 2 * search_radius + 1;
        if scores.len() != side * side || scores.iter().any(|s| !s.is_finite()) {
            return None;
        }
        Some(CorrelationMap {
            search_radius,
            guided_center,
            scores,
        })
    }

    #[inline]
    pub fn search_radius(&self) -> usize {
        self.search_radius
    }

    #[inline]
    pub fn guided_center(&self) -> Vec2 {
        self.guided_center
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.search_radius + 1
    }

    #[inline]
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score_at(&self, dx: i64, dy: i64) -> f64 {
        let r = self.search_radius as i64;
        debug_assert!(dx.abs() <= r && dy.abs() <= r);
        self.scores[((dy + r) * (2 * r + 1) + (dx + r)) as usize]
    }

    /// Highest score and its integer displacement; ties resolve to the first
    /// in row-major order.
    pub fn peak(&self) -> (i64, i64, f64) {
        let r = self.search_radius as i64;
        let mut best = (0i64, 0i64, f64::NEG_INFINITY);
        for (i, &s) in self.scores.iter().enumerate() {
            if s > best.2 {
                let dy = i as i64 / (2 * r + 1) - r;
                let dx = i as i64 % (2 * r + 1) - r;
                best = (dx, dy, s);
            }
        }
        best
    }
}

/// Scores candidate pyramids on `frame` at every integer displacement in
/// `[-R, R]^2` around `prior + guide.weight * guide.v * dt`.
///
/// All-invalid candidates score exactly 0. Accumulation is row-major, so the
/// result is independent of any internal evaluation strategy.
pub fn correlate(
    reference: &Descriptor,
    frame: &SurfacePyramid,
    prior: Vec2,
    guide: &KinematicVector,
    dt: f64,
    search_radius: usize,
    patch_radius: usize,
) -> CorrelationMap {
    let guided_center = prior + guide.v * (guide.weight * dt);
    let side = 2 * search_radius + 1;
    let mut scores = Vec::with_capacity(side * side);
    let r = search_radius as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            let candidate = frame.sample(
                guided_center + Vec2::new(dx as f64, dy as f64),
                patch_radius,
            );
            let s = if candidate.all_invalid() {
                0.0
            } else {
                reference.score(&candidate)
            };
            scores.push(s);
        }
    }
    CorrelationMap {
        search_radius,
        guided_center,
        scores,
    }
}

/// Softmax-weighted mean displacement of a correlation map, in pixels.
/// A uniform map returns exactly (0, 0).
pub fn soft_argmax(map: &CorrelationMap, temperature: f64) -> Vec2 {
    debug_assert!(temperature > 0.0);
    let peak = map
        .scores
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &s| acc.max(s));
    let r = map.search_radius as i64;
    let mut wsum = 0.0;
    let mut mx = 0.0;
    let mut my = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let s = map.score_at(dx, dy);
            let w = math::exp((s - peak) / temperature);
            wsum += w;
            mx += w * dx as f64;
            my += w * dy as f64;
        }
    }
    Vec2::new(mx / wsum, my / wsum)
}

/// Convenience wrapper that pools the surface on the fly; hot paths should
/// build one [`SurfacePyramid`] per surface and reuse it.
pub fn build_pyramid(ts: &TimeSurface, anchor: Vec2, cfg: &PyramidConfig) -> PatchPyramid {
    SurfacePyramid::new(ts, cfg.levels).sample(anchor, cfg.patch_radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::TimeWindow;
    use crate::surface::TimeSurface;

    /// A surface with a smooth asymmetric bump centered at (cx, cy).
    fn bump_surface(w: u32, h: u32, cx: f64, cy: f64) -> TimeSurface {
        let mut pos = vec![0.0; (w * h) as usize];
        let mut neg = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let r2 = dx * dx + dy * dy;
                let i = (y * w + x) as usize;
                pos[i] = (0.9 * math::exp(-r2 / 8.0)).min(1.0);
                // Slightly displaced negative lobe breaks symmetry.
                let dx2 = dx - 1.5;
                neg[i] = (0.7 * math::exp(-(dx2 * dx2 + dy * dy) / 5.0)).min(1.0);
            }
        }
        TimeSurface::from_values(w, h, TimeWindow::new(0, 1000).unwrap(), pos, neg).unwrap()
    }

    /// The same bump translated by an integer offset.
    fn shifted_bump(w: u32, h: u32, cx: f64, cy: f64, dx: f64, dy: f64) -> TimeSurface {
        bump_surface(w, h, cx + dx, cy + dy)
    }

    fn no_guide() -> KinematicVector {
        KinematicVector::zero()
    }

    #[test]
    fn zero_surface_descriptor_is_valid_and_scores_zero() {
        let ts = TimeSurface::from_values(
            32,
            32,
            TimeWindow::new(0, 10).unwrap(),
            vec![0.0; 1024],
            vec![0.0; 1024],
        )
        .unwrap();
        let cfg = PyramidConfig::default();
        let pyr = build_pyramid(&ts, Vec2::new(16.0, 16.0), &cfg);
        assert!(!pyr.all_invalid());
        let desc = reference_descriptor(&pyr, &pyr, &pyr, (0.5, 0.25, 0.25));
        assert_eq!(desc.score(&pyr), 0.0);
    }

    #[test]
    fn out_of_frame_anchor_is_all_invalid() {
        let ts = bump_surface(32, 32, 16.0, 16.0);
        let cfg = PyramidConfig::default();
        let pyr = build_pyramid(&ts, Vec2::new(-200.0, -200.0), &cfg);
        assert!(pyr.all_invalid());
    }

    #[test]
    fn autocorrelation_peaks_at_origin() {
        let ts = bump_surface(48, 48, 24.0, 24.0);
        let cfg = PyramidConfig::default();
        let anchor = Vec2::new(24.0, 24.0);
        let frame = SurfacePyramid::new(&ts, cfg.levels);
        let pyr = frame.sample(anchor, cfg.patch_radius);
        let desc = reference_descriptor(&pyr, &pyr, &pyr, (0.5, 0.25, 0.25));
        let map = correlate(&desc, &frame, anchor, &no_guide(), 1.0, 4, cfg.patch_radius);
        let (dx, dy, score) = map.peak();
        assert_eq!((dx, dy), (0, 0));
        assert!(score > 0.99, "self-similarity should be ~1, got {score}");
    }

    #[test]
    fn integer_shift_moves_the_peak() {
        let cfg = PyramidConfig::default();
        let anchor = Vec2::new(24.0, 24.0);
        let ts0 = bump_surface(48, 48, 24.0, 24.0);
        let ts1 = shifted_bump(48, 48, 24.0, 24.0, 2.0, 1.0);
        let ref_pyr = build_pyramid(&ts0, anchor, &cfg);
        let desc = reference_descriptor(&ref_pyr, &ref_pyr, &ref_pyr, (0.5, 0.25, 0.25));
        let frame = SurfacePyramid::new(&ts1, cfg.levels);
        let map = correlate(&desc, &frame, anchor, &no_guide(), 1.0, 4, cfg.patch_radius);
        let (dx, dy, _) = map.peak();
        assert_eq!((dx, dy), (2, 1));
    }

    #[test]
    fn guidance_absorbs_the_shift() {
        let cfg = PyramidConfig::default();
        let anchor = Vec2::new(24.0, 24.0);
        let ts0 = bump_surface(48, 48, 24.0, 24.0);
        let ts1 = shifted_bump(48, 48, 24.0, 24.0, 2.0, 1.0);
        let ref_pyr = build_pyramid(&ts0, anchor, &cfg);
        let desc = reference_descriptor(&ref_pyr, &ref_pyr, &ref_pyr, (0.5, 0.25, 0.25));
        let frame = SurfacePyramid::new(&ts1, cfg.levels);
        let guide = KinematicVector {
            v: Vec2::new(2.0, 1.0),
            weight: 1.0,
            residual: 0.0,
            n_support: 25,
        };
        let map = correlate(&desc, &frame, anchor, &guide, 1.0, 4, cfg.patch_radius);
        let (dx, dy, _) = map.peak();
        assert_eq!((dx, dy), (0, 0));
        assert_eq!(map.guided_center(), Vec2::new(26.0, 25.0));
    }

    #[test]
    fn identical_offset_pyramids_match_single_part_score() {
        let ts = bump_surface(48, 48, 24.0, 24.0);
        let cfg = PyramidConfig::default();
        let frame = SurfacePyramid::new(&ts, cfg.levels);
        let pyr = frame.sample(Vec2::new(24.0, 24.0), cfg.patch_radius);
        let cand = frame.sample(Vec2::new(25.5, 23.0), cfg.patch_radius);
        let triple = reference_descriptor(&pyr, &pyr, &pyr, (0.5, 0.25, 0.25));
        let single = reference_descriptor(&pyr, &pyr, &pyr, (1.0, 0.0, 0.0));
        assert!((triple.score(&cand) - single.score(&cand)).abs() < 1e-12);
    }

    #[test]
    fn scores_stay_in_cosine_bounds() {
        let ts0 = bump_surface(48, 48, 22.0, 25.0);
        let ts1 = shifted_bump(48, 48, 22.0, 25.0, -3.0, 2.0);
        let cfg = PyramidConfig::default();
        let anchor = Vec2::new(22.0, 25.0);
        let ref_pyr = build_pyramid(&ts0, anchor, &cfg);
        let desc = reference_descriptor(&ref_pyr, &ref_pyr, &ref_pyr, (0.5, 0.25, 0.25));
        let frame = SurfacePyramid::new(&ts1, cfg.levels);
        let map = correlate(&desc, &frame, anchor, &no_guide(), 1.0, 4, cfg.patch_radius);
        for &s in map.scores() {
            assert!((-1.0..=1.0).contains(&s), "score {s} out of bounds");
        }
    }

    #[test]
    fn soft_argmax_one_hot_recovers_peak() {
        let side = 9;
        let mut scores = vec![0.0; side * side];
        // dx = 2, dy = 1 with R = 4.
        scores[(1 + 4) * side + (2 + 4)] = 1.0;
        let map = CorrelationMap::from_scores(4, Vec2::ZERO, scores).unwrap();
        let d = soft_argmax(&map, 1e-3);
        assert!((d.x - 2.0).abs() < 1e-2);
        assert!((d.y - 1.0).abs() < 1e-2);
    }

    #[test]
    fn soft_argmax_uniform_is_exactly_zero() {
        let map = CorrelationMap::from_scores(4, Vec2::ZERO, vec![0.37; 81]).unwrap();
        let d = soft_argmax(&map, 0.5);
        assert_eq!(d, Vec2::ZERO);
    }

    #[test]
    fn soft_argmax_twin_peaks_cancel() {
        let side = 9;
        let mut scores = vec![0.0; side * side];
        scores[4 * side + (4 - 3)] = 1.0;
        scores[4 * side + (4 + 3)] = 1.0;
        let map = CorrelationMap::from_scores(4, Vec2::ZERO, scores).unwrap();
        let d = soft_argmax(&map, 0.1);
        assert!(d.x.abs() < 1e-12);
        assert!(d.y.abs() < 1e-12);
    }
}
