//! Kinematic vectors from local tangent-plane fits on the time surface.
//!
//! The time surface viewed in (x, y, t) is the active-events surface; its
//! spatial gradient is the inverse of the local pixel velocity. Each fit
//! stacks neighborhood rows `[x y t 1]` and takes the right singular vector
//! of the smallest singular value as the plane coefficients. The gradient
//! `g = (-a/c, -b/c)` is turned into a velocity with the normal-flow form
//! `v = g / (|g|^2 + eps)`, which reduces to `v = 1/(dt/dx)` for 1-D motion
//! and stays well-posed when one gradient component vanishes.

use alloc::vec::Vec;

use crate::geom::Vec2;
use crate::math;
use crate::surface::TimeSurface;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GuidanceError {
    #[error("plane fit needs at least 4 supporting pixels, found {found}")]
    InsufficientSupport { found: usize },
    #[error("fit center is not finite")]
    NonFiniteCenter,
    #[error("fit radius must be at least 2")]
    RadiusTooSmall,
}

/// Tangent-plane coefficients `(a, b, c, d)` with `|coeffs| = 1`, plus the
/// singular-value spectrum of the fitted system.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFit {
    pub coeffs: [f64; 4],
    /// Singular values of the stacked `[x y t 1]` system, descending; the
    /// smallest one belongs to `coeffs`.
    pub singular_values: [f64; 4],
    /// RMS residual expressed as a time misfit in window-normalized units.
    pub rms_residual: f64,
    pub n_support: usize,
}

/// Per-point, per-timestep velocity estimate in pixels per window span.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinematicVector {
    pub v: Vec2,
    /// Reliability in [0, 1]; exactly 0 for degenerate fits.
    pub weight: f64,
    /// RMS plane-fit residual in normalized time units.
    pub residual: f64,
    pub n_support: usize,
}

impl KinematicVector {
    pub const fn zero() -> Self {
        KinematicVector {
            v: Vec2::ZERO,
            weight: 0.0,
            residual: 0.0,
            n_support: 0,
        }
    }
}

/// Parameters of the gradient-to-velocity conversion.
#[derive(Clone, Copy, Debug)]
pub struct VelocityParams {
    /// Regularizer in the normal-flow denominator.
    pub eps: f64,
    /// Residual scale of the reliability weight `exp(-residual / tau)`.
    pub tau: f64,
    /// Speed clamp in pixels per window span.
    pub v_max: f64,
}

impl Default for VelocityParams {
    fn default() -> Self {
        VelocityParams {
            eps: 1e-6,
            tau: 0.25,
            v_max: 16.0,
        }
    }
}

/// Weight saturates once this many pixels support the fit.
const SUPPORT_SATURATION: f64 = 12.0;

/// Which timestamps feed one plane fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitChannel {
    /// Fresher of the two polarity channels per pixel.
    Merged,
    Pos,
    Neg,
}

/// Fits a tangent plane to the per-pixel fresher-of-both-polarities surface
/// around `center` over a `(2*radius+1)^2` neighborhood.
///
/// Pixels with no event (value 0) are excluded. Timestamps are centered on
/// their mean before the fit, which improves conditioning without changing
/// the gradient.
pub fn fit_plane(
    ts: &TimeSurface,
    center: Vec2,
    radius: u32,
) -> Result<PlaneFit, GuidanceError> {
    fit_plane_channel(ts, center, radius, FitChannel::Merged)
}

/// Plane fit over one timestamp selection.
pub fn fit_plane_channel(
    ts: &TimeSurface,
    center: Vec2,
    radius: u32,
    channel: FitChannel,
) -> Result<PlaneFit, GuidanceError> {
    if !center.is_finite() {
        return Err(GuidanceError::NonFiniteCenter);
    }
    if radius < 2 {
        return Err(GuidanceError::RadiusTooSmall);
    }
    let cx = math::round(center.x) as i64;
    let cy = math::round(center.y) as i64;
    let r = radius as i64;
    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    for py in (cy - r)..=(cy + r) {
        for px in (cx - r)..=(cx + r) {
            if px < 0 || py < 0 || px >= i64::from(ts.width()) || py >= i64::from(ts.height()) {
                continue;
            }
            let (x, y) = (px as u32, py as u32);
            let t = match channel {
                FitChannel::Merged => ts.freshest(x, y),
                FitChannel::Pos => ts.value(x, y, crate::event::Polarity::Pos),
                FitChannel::Neg => ts.value(x, y, crate::event::Polarity::Neg),
            };
            if t > 0.0 {
                samples.push((px as f64 - center.x, py as f64 - center.y, t));
            }
        }
    }
    if samples.len() < 4 {
        return Err(GuidanceError::InsufficientSupport {
            found: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.2).sum::<f64>() / n;

    // Normal matrix of the stacked [x y t 1] rows.
    let mut m = [[0.0f64; 4]; 4];
    for &(x, y, t) in &samples {
        let row = [x, y, t - t_mean, 1.0];
        for i in 0..4 {
            for j in i..4 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..4 {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen_sym4(m);
    // Eigenvalues of A^T A are squared singular values of A.
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| eigvals[j].partial_cmp(&eigvals[i]).unwrap());
    let mut singular_values = [0.0; 4];
    for (rank, &i) in order.iter().enumerate() {
        singular_values[rank] = math::sqrt(eigvals[i].max(0.0));
    }
    let smallest = order[3];
    let mut coeffs = [
        eigvecs[0][smallest],
        eigvecs[1][smallest],
        eigvecs[2][smallest],
        eigvecs[3][smallest],
    ];
    // Canonical sign: the sign of coeffs is arbitrary and cancels in the
    // gradient; pin it for determinism.
    let lead = coeffs.iter().copied().find(|&v| math::abs(v) > 1e-15).unwrap_or(1.0);
    if lead < 0.0 {
        for v in &mut coeffs {
            *v = -*v;
        }
    }

    let sigma_min = singular_values[3];
    let c_abs = math::abs(coeffs[2]);
    let rms_residual = if c_abs > 1e-12 {
        sigma_min / (math::sqrt(n) * c_abs)
    } else {
        f64::INFINITY
    };

    Ok(PlaneFit {
        coeffs,
        singular_values,
        rms_residual,
        n_support: samples.len(),
    })
}

/// Converts a plane fit into a kinematic vector via the normal-flow inverse
/// gradient. Near-vertical planes (no coherent temporal ramp) and flat planes
/// (no spatial gradient) degrade to a zero vector with weight 0, and so does
/// a fit whose recovered speed lands on the clamp: a spatial gradient that
/// shallow means the neighborhood has no motion ramp the inverse relation
/// could trust.
pub fn plane_to_velocity(fit: &PlaneFit, params: &VelocityParams) -> KinematicVector {
    let [a, b, c, _] = fit.coeffs;
    if math::abs(c) <= 1e-12 {
        return KinematicVector {
            v: Vec2::ZERO,
            weight: 0.0,
            residual: fit.rms_residual,
            n_support: fit.n_support,
        };
    }
    let g = Vec2::new(-a / c, -b / c);
    let denom = g.norm_sq() + params.eps;
    if denom <= 0.0 || !g.is_finite() {
        return KinematicVector {
            v: Vec2::ZERO,
            weight: 0.0,
            residual: fit.rms_residual,
            n_support: fit.n_support,
        };
    }
    let mut v = g * (1.0 / denom);
    let speed = v.norm();
    let clamped = speed > params.v_max;
    if clamped {
        v = v * (params.v_max / speed);
    }
    let saturation = (fit.n_support as f64 / SUPPORT_SATURATION).min(1.0);
    let weight = if clamped {
        0.0
    } else {
        math::exp(-fit.rms_residual / params.tau) * saturation
    };
    KinematicVector {
        v,
        weight,
        residual: fit.rms_residual,
        n_support: fit.n_support,
    }
}

/// Best kinematic estimate at a point: fits the merged surface and each
/// polarity channel alone, converts each, and keeps the most reliable.
///
/// Single-channel fits matter because on the trailing side of a moving
/// object the opposite channel is still firing; that flattens the merged
/// surface and inflates the recovered speed, while the channel tracing the
/// coherent motion ramp survives the clamp gate with a real weight.
pub fn estimate_kinematics(
    ts: &TimeSurface,
    center: Vec2,
    radius: u32,
    params: &VelocityParams,
) -> KinematicVector {
    let mut best = KinematicVector::zero();
    for channel in [FitChannel::Merged, FitChannel::Pos, FitChannel::Neg] {
        if let Ok(fit) = fit_plane_channel(ts, center, radius, channel) {
            let kv = plane_to_velocity(&fit, params);
            if kv.weight > best.weight {
                best = kv;
            }
        }
    }
    best
}

/// Reliability-weighted temporal smoothing of a kinematic-vector sequence.
///
/// Each output is the average of raw vectors in a centered window of
/// half-width `half_width`, weighted by raw reliability times a triangular
/// kernel. Zero-weight inputs never contribute. The output weight is the
/// kernel-normalized sum of contributing weights, so a window of fully
/// reliable vectors keeps weight 1.
pub fn correct_kinematics(raw: &[KinematicVector], half_width: usize) -> Vec<KinematicVector> {
    let len = raw.len();
    let w = half_width as i64;
    let mut out = Vec::with_capacity(len);
    for t in 0..len as i64 {
        let mut vx = 0.0;
        let mut vy = 0.0;
        let mut res = 0.0;
        let mut weight_sum = 0.0;
        let mut kernel_sum = 0.0;
        for j in (t - w).max(0)..=(t + w).min(len as i64 - 1) {
            let kernel = (w + 1 - (j - t).abs()) as f64 / (w + 1) as f64;
            kernel_sum += kernel;
            let kv = &raw[j as usize];
            if kv.weight <= 0.0 {
                // Degenerate fits may carry infinite residuals; keep them out
                // of the sums entirely.
                continue;
            }
            let contrib = kernel * kv.weight;
            vx += contrib * kv.v.x;
            vy += contrib * kv.v.y;
            res += contrib * kv.residual;
            weight_sum += contrib;
        }
        if weight_sum > 0.0 {
            out.push(KinematicVector {
                v: Vec2::new(vx / weight_sum, vy / weight_sum),
                weight: weight_sum / kernel_sum,
                residual: res / weight_sum,
                n_support: raw[t as usize].n_support,
            });
        } else {
            out.push(KinematicVector {
                n_support: raw[t as usize].n_support,
                ..KinematicVector::zero()
            });
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric 4x4 matrix. Returns
/// eigenvalues and the matrix of column eigenvectors.
fn jacobi_eigen_sym4(mut m: [[f64; 4]; 4]) -> ([f64; 4], [[f64; 4]; 4]) {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &x| acc.max(math::abs(x)))
        .max(1e-300);
    let tol = 1e-15 * scale;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..4 {
            for q in (p + 1)..4 {
                off += math::abs(m[p][q]);
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if math::abs(m[p][q]) <= tol * 1e-2 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..4 {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..4 {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in &mut v {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ([m[0][0], m[1][1], m[2][2], m[3][3]], v)
}
