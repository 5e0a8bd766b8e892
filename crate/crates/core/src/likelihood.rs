//! Joint log-density of a trajectory draw.
//!
//! A segment's density factorizes into an endpoint factor (both endpoints
//! are isotropic Gaussians around their receivers), one step factor per
//! interior day (a bivariate normal obtained from a second-order Taylor
//! expansion of (cos, sin) of the noisy heading), and one distance factor
//! per interior day (the normal law of the step-distance draw). A
//! trajectory's log-density is the sum over its segments.
//!
//! Everything is computed in log space; the products in the factorized
//! density become sums, which keeps 17-step segments from underflowing.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::geo::PlanarPoint;
use crate::model::{ModelParams, SegmentDraw, TrajectoryDraw};
use crate::movement::Floors;

/// Natural-log density value.
pub type LogLik = f64;

const LN_2PI: f64 = 1.8378770664093453;

/// Replay tolerance used to validate a draw before scoring it.
const REPLAY_TOL_M: f64 = 1e-6;

/// Above this angular-noise variance the two-term Taylor expansion is a
/// poor approximation; we warn once per process rather than refuse.
const TAYLOR_VALIDITY_CAP: f64 = 1.0;

static TAYLOR_CAP_WARNED: AtomicBool = AtomicBool::new(false);

/// Approximate mean and covariance of Z = (cos theta*, sin theta*) for
/// theta* ~ Normal(theta, sigma_psi_sq), from a second-order Taylor
/// expansion around theta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorMoments {
    pub mu_z: [f64; 2],
    pub sigma_z: [[f64; 2]; 2],
}

impl TaylorMoments {
    /// Determinant computed numerically from the matrix entries.
    pub fn det_sigma_z(&self) -> f64 {
        self.sigma_z[0][0] * self.sigma_z[1][1] - self.sigma_z[0][1] * self.sigma_z[1][0]
    }
}

/// det(Sigma_z) collapses algebraically to sigma_psi^6 / 2; the closed form
/// is used inside the step density where the numeric determinant would
/// cancel catastrophically at small variances.
pub fn sigma_z_det(sigma_psi_sq: f64) -> f64 {
    sigma_psi_sq.powi(3) / 2.0
}

pub fn taylor_moments(theta: f64, sigma_psi_sq: f64) -> TaylorMoments {
    let v = sigma_psi_sq;
    let (s, c) = theta.sin_cos();
    let shrink = 1.0 - v / 2.0;
    let off = v * (-s * c + s * c * v / 2.0);
    TaylorMoments {
        mu_z: [c * shrink, s * shrink],
        sigma_z: [
            [v * (s * s + c * c * v / 2.0), off],
            [off, v * (c * c + s * s * v / 2.0)],
        ],
    }
}

/// Log joint density of the two segment endpoints around their receivers:
/// a sum of two isotropic bivariate normal log-densities with shared
/// variance `sigma_r_sq`.
pub fn logp0(
    x1: PlanarPoint,
    x_t: PlanarPoint,
    r1: &crate::geo::Receiver,
    r_t: &crate::geo::Receiver,
    sigma_r_sq: f64,
) -> LogLik {
    let q1 = (x1.x - r1.position.x).powi(2) + (x1.y - r1.position.y).powi(2);
    let q2 = (x_t.x - r_t.position.x).powi(2) + (x_t.y - r_t.position.y).powi(2);
    -2.0 * (2.0 * std::f64::consts::PI * sigma_r_sq).ln() - (q1 + q2) / (2.0 * sigma_r_sq)
}

/// Log density of the step landing point `x_t` given the previous position,
/// the signed distance draw, and the heading/noise pair: bivariate normal
/// with mean x_prev + |D| mu_z and covariance D^2 Sigma_z.
pub fn logp1(
    x_t: PlanarPoint,
    x_prev: PlanarPoint,
    dist_draw: f64,
    theta: f64,
    sigma_psi_sq: f64,
    floors: &Floors,
) -> LogLik {
    let v = sigma_psi_sq.max(floors.eps_psi_sq);
    if v > TAYLOR_VALIDITY_CAP && !TAYLOR_CAP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "angular-noise variance {v:.3} exceeds the Taylor validity cap {TAYLOR_VALIDITY_CAP}; \
             step densities are increasingly approximate (warning emitted once)"
        );
    }
    let step = dist_draw.abs().max(floors.eps_dist_m);

    let tm = taylor_moments(theta, v);
    let det = sigma_z_det(v);
    let dx = x_t.x - x_prev.x - step * tm.mu_z[0];
    let dy = x_t.y - x_prev.y - step * tm.mu_z[1];
    // Sigma_z^{-1} via the 2x2 adjugate with the closed-form determinant.
    let quad = (tm.sigma_z[1][1] * dx * dx - 2.0 * tm.sigma_z[0][1] * dx * dy
        + tm.sigma_z[0][0] * dy * dy)
        / det;
    // log det of the full covariance D^2 Sigma_z
    let logdet = 4.0 * step.ln() + det.ln();
    -LN_2PI - 0.5 * logdet - 0.5 * quad / (step * step)
}

/// Log density of the signed distance draw: Normal with mean
/// d / (T - (t-1)) and variance d^phi (floored/capped).
pub fn logp2(
    dist_draw: f64,
    d_remaining: f64,
    t: usize,
    t_len: usize,
    phi: f64,
    floors: &Floors,
) -> LogLik {
    let d = d_remaining.max(floors.eps_d_m);
    let var = floors.step_variance(d, phi);
    let mean = d / (t_len as f64 - (t as f64 - 1.0));
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (dist_draw - mean).powi(2) / (2.0 * var)
}

/// Log joint density of one segment draw: endpoint factor plus one step
/// and one distance factor per interior day, evaluated at the stored
/// latents.
///
/// The draw is replayed first; a draw whose latents do not reproduce its
/// positions is rejected rather than scored.
pub fn segment_loglik(draw: &SegmentDraw, params: &ModelParams, floors: &Floors) -> Result<LogLik> {
    draw.verify_replay(REPLAY_TOL_M)?;
    let spec = &draw.spec;
    let mut ll = logp0(
        draw.start(),
        draw.end(),
        &spec.start_receiver,
        &spec.end_receiver,
        params.sigma_r_sq,
    );
    for lat in &draw.latents {
        ll += logp1(
            draw.position(lat.t),
            draw.position(lat.t - 1),
            lat.dist_draw,
            lat.theta,
            lat.sigma_psi_sq,
            floors,
        );
        ll += logp2(lat.dist_draw, lat.d_remaining, lat.t, spec.t_len, params.phi, floors);
    }
    Ok(ll)
}

/// Log joint density of a full trajectory: the sum of its segment
/// log-densities. Fails if the segment chaining invariant is broken.
pub fn trajectory_loglik(draw: &TrajectoryDraw, params: &ModelParams, floors: &Floors) -> Result<LogLik> {
    draw.verify_chaining()?;
    let mut ll = 0.0;
    for seg in &draw.segments {
        ll += segment_loglik(seg, params, floors)?;
    }
    if ll.is_nan() {
        return Err(Error::InconsistentDraw("trajectory log-likelihood is NaN".into()));
    }
    Ok(ll)
}
