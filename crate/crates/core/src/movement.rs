//! Segment simulation: Gaussian endpoint sampling around receivers and the
//! directed random walk that fills in the unobserved days.
//!
//! Each interior day t of a segment takes a step from the previous position
//! toward the segment endpoint X*: the heading is the angle to X* plus
//! Gaussian noise psi, and the step length is |D| with
//! D ~ Normal(d / (T - (t-1)), d^phi), where d is the remaining distance.
//! The angular-noise variance decays exponentially for short gaps
//! (n <= beta) and is uniformly randomized per step for long gaps
//! (n > beta).

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{angle_to, distance, PlanarPoint, Receiver};
use crate::ingest::SegmentSpec;
use crate::model::{ModelParams, SegmentDraw, StepLatents, TrajectoryDraw};

/// Retry cap for the optional keep-steps-outside-receivers rejection.
const STEP_REJECTION_CAP: usize = 1000;

/// How the remaining distance d_t is computed from the previous position
/// and the segment endpoint.
///
/// The two variants encode two readings of the same quantity: `Literal`
/// evaluates Max{(a - 2r), a} = a, the displayed formula taken at face
/// value, while `Adjusted` subtracts both receivers' radii as the prose
/// description has it, floored at a small positive distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemainingDistanceMode {
    #[default]
    Literal,
    Adjusted,
}

/// Numerical floors (and one cap) that keep simulation and likelihood
/// finite at degenerate inputs. The same values must be used on both sides
/// so that every draw is scored under exactly the density it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Floors {
    /// Lower floor on the remaining distance d_t, meters.
    pub eps_d_m: f64,
    /// Lower floor on the step-distance variance d^phi, m^2.
    pub eps_v_m2: f64,
    /// Upper cap on the step-distance variance d^phi, m^2. Wide-tailed phi
    /// priors can push d^phi past f64 range; the cap keeps draws and
    /// densities finite (such trajectories score poorly and are filtered
    /// out anyway).
    pub var_cap_m2: f64,
    /// Lower clamp on |D| inside the step density, meters.
    pub eps_dist_m: f64,
    /// Lower clamp on sigma_psi^2 inside the step density, radians^2.
    pub eps_psi_sq: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Self {
            eps_d_m: 1.0,
            eps_v_m2: 1e-6,
            var_cap_m2: 1e12,
            eps_dist_m: 1e-3,
            eps_psi_sq: 1e-12,
        }
    }
}

impl Floors {
    /// Step-distance variance for remaining distance `d` under exponent
    /// `phi`, clamped into [eps_v_m2, var_cap_m2].
    pub fn step_variance(&self, d: f64, phi: f64) -> f64 {
        let raw = d.powf(phi);
        if raw.is_nan() {
            return self.eps_v_m2;
        }
        raw.clamp(self.eps_v_m2, self.var_cap_m2)
    }
}

/// Simulation switches shared by every draw of a run.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub mode: RemainingDistanceMode,
    pub floors: Floors,
    /// Rejection-sample endpoints until they fall inside the detecting
    /// receiver's radius.
    pub enforce_endpoint_in_radius: bool,
    /// When nonempty, interior steps are rejection-sampled (capped retries)
    /// so they land outside every listed receiver's detection radius.
    pub avoid_receivers: Vec<Receiver>,
}

fn draw_normal<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> f64 {
    // Hand-scaled so a zero variance degenerates to the mean exactly.
    let z: f64 = rng.sample(StandardNormal);
    mean + variance.sqrt() * z
}

/// Draw a fish position near a detecting receiver: isotropic bivariate
/// normal centered at the receiver with variance `sigma_r_sq` per axis.
///
/// With `enforce_in_radius`, draws are rejected until they land within the
/// receiver's detection radius; a configuration whose acceptance
/// probability is below 1e-6 is refused instead of looping forever.
pub fn sample_endpoint<R: Rng + ?Sized>(
    receiver: &Receiver,
    sigma_r_sq: f64,
    enforce_in_radius: bool,
    rng: &mut R,
) -> Result<PlanarPoint> {
    if sigma_r_sq == 0.0 {
        return Ok(receiver.position);
    }
    if enforce_in_radius {
        // P(||X - R|| <= r) for isotropic normal: 1 - exp(-r^2 / (2 sigma^2)).
        let accept = 1.0 - (-receiver.radius_m.powi(2) / (2.0 * sigma_r_sq)).exp();
        if accept < 1e-6 {
            return Err(Error::EndpointEnforcement(accept));
        }
        loop {
            let p = receiver.position.offset(
                draw_normal(0.0, sigma_r_sq, rng),
                draw_normal(0.0, sigma_r_sq, rng),
            );
            if distance(p, receiver.position) <= receiver.radius_m {
                return Ok(p);
            }
        }
    }
    Ok(receiver.position.offset(
        draw_normal(0.0, sigma_r_sq, rng),
        draw_normal(0.0, sigma_r_sq, rng),
    ))
}

/// Remaining distance d_t from the previous position to the segment
/// endpoint.
pub fn remaining_distance(
    x_prev: PlanarPoint,
    x_star: PlanarPoint,
    r_m: f64,
    mode: RemainingDistanceMode,
    eps_d_m: f64,
) -> f64 {
    let norm = distance(x_prev, x_star);
    match mode {
        RemainingDistanceMode::Literal => norm,
        RemainingDistanceMode::Adjusted => (norm - 2.0 * r_m).max(eps_d_m),
    }
}

/// Angular-noise variance for step t of a segment with n unobserved days.
///
/// For n <= beta the value is the deterministic exponential decay
/// gamma * exp(alpha * (n - (t-1))); for n > beta a fresh U ~ Uniform(0,1)
/// is drawn per step and gamma * U returned.
pub fn sigma_psi_sq<R: Rng + ?Sized>(t: usize, n: usize, params: &ModelParams, rng: &mut R) -> f64 {
    if n as u32 <= params.beta {
        params.gamma * (params.alpha * (n as f64 - (t as f64 - 1.0))).exp()
    } else {
        let u: f64 = rng.sample(Open01);
        params.gamma * u
    }
}

/// Simulate one interior step (2 <= t <= T-1) from `x_prev` toward `x_star`.
pub fn sample_step<R: Rng + ?Sized>(
    x_prev: PlanarPoint,
    x_star: PlanarPoint,
    t: usize,
    t_len: usize,
    params: &ModelParams,
    opts: &SimOptions,
    rng: &mut R,
) -> (PlanarPoint, StepLatents) {
    debug_assert!(t >= 2 && t < t_len, "step index t={t} outside 2..=T-1 for T={t_len}");
    let coincident = x_prev == x_star;
    let theta = angle_to(x_prev, x_star);
    let d = remaining_distance(x_prev, x_star, params.r_m, opts.mode, opts.floors.eps_d_m)
        .max(opts.floors.eps_d_m);
    let sig_psi_sq = sigma_psi_sq(t, t_len - 2, params, rng);

    let mean_d = d / (t_len as f64 - (t as f64 - 1.0));
    let var_d = opts.floors.step_variance(d, params.phi);

    let mut attempts = 0;
    loop {
        let dist_draw = draw_normal(mean_d, var_d, rng);
        let psi = draw_normal(0.0, sig_psi_sq, rng);
        let heading = theta + psi;
        let step = dist_draw.abs();
        let next = x_prev.offset(step * heading.cos(), step * heading.sin());

        attempts += 1;
        let inside_some = !opts.avoid_receivers.is_empty()
            && opts
                .avoid_receivers
                .iter()
                .any(|r| distance(next, r.position) <= r.radius_m);
        if inside_some && attempts < STEP_REJECTION_CAP {
            continue;
        }
        if inside_some {
            log::warn!(
                "step rejection cap ({STEP_REJECTION_CAP}) reached at t={t}; accepting in-range step"
            );
        }

        let latents = StepLatents {
            t,
            theta,
            psi,
            d_remaining: d,
            dist_draw,
            sigma_psi_sq: sig_psi_sq,
            coincident,
        };
        return (next, latents);
    }
}

fn impute_segment_with_start<R: Rng + ?Sized>(
    start: PlanarPoint,
    spec: &SegmentSpec,
    params: &ModelParams,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<SegmentDraw> {
    let t_len = spec.t_len;
    let x_star = sample_endpoint(
        &spec.end_receiver,
        params.sigma_r_sq,
        opts.enforce_endpoint_in_radius,
        rng,
    )?;

    let mut positions = Vec::with_capacity(t_len);
    let mut latents = Vec::with_capacity(t_len - 2);
    positions.push(start);
    for t in 2..t_len {
        let (next, lat) = sample_step(positions[t - 2], x_star, t, t_len, params, opts, rng);
        positions.push(next);
        latents.push(lat);
    }
    positions.push(x_star);
    SegmentDraw::new(spec.clone(), positions, latents)
}

/// Simulate one segment: both endpoints are drawn around their receivers
/// first, then the interior days are walked from start to end.
pub fn impute_segment<R: Rng + ?Sized>(
    spec: &SegmentSpec,
    params: &ModelParams,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<SegmentDraw> {
    let start = sample_endpoint(
        &spec.start_receiver,
        params.sigma_r_sq,
        opts.enforce_endpoint_in_radius,
        rng,
    )?;
    impute_segment_with_start(start, spec, params, opts, rng)
}

/// Simulate a full trajectory over ordered segments. Only the first segment
/// draws its start endpoint; every later segment starts exactly where the
/// previous one ended.
pub fn impute_trajectory<R: Rng + ?Sized>(
    specs: &[SegmentSpec],
    params: &ModelParams,
    opts: &SimOptions,
    rng: &mut R,
) -> Result<TrajectoryDraw> {
    if specs.is_empty() {
        return Err(Error::Invalid("no segments to impute".into()));
    }
    for pair in specs.windows(2) {
        if pair[1].k != pair[0].k + 1 {
            return Err(Error::Invalid(format!(
                "segments out of order: k={} followed by k={}",
                pair[0].k, pair[1].k
            )));
        }
        if pair[1].start_receiver.id != pair[0].end_receiver.id {
            return Err(Error::Invalid(format!(
                "segment {} starts at receiver `{}` but segment {} ended at `{}`",
                pair[1].k, pair[1].start_receiver.id, pair[0].k, pair[0].end_receiver.id
            )));
        }
    }

    let mut segments = Vec::with_capacity(specs.len());
    let first = impute_segment(&specs[0], params, opts, rng)?;
    let mut prev_end = first.end();
    segments.push(first);
    for spec in &specs[1..] {
        let seg = impute_segment_with_start(prev_end, spec, params, opts, rng)?;
        prev_end = seg.end();
        segments.push(seg);
    }
    TrajectoryDraw::new(segments, params.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn receiver(id: &str, x: f64, y: f64) -> Receiver {
        Receiver::new(id, PlanarPoint::new(x, y), 500.0).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::new(1.0, 3, 1.0, 0.5, 100.0, 500.0).unwrap()
    }

    /// Parameters that suppress every noise source: denormal-scale prior
    /// values plus a zeroed variance floor turn the walk deterministic.
    fn quiet_params() -> (ModelParams, SimOptions) {
        let p = ModelParams::new(1.0, 3, 1e-300, -600.0, 1e-300, 500.0).unwrap();
        let mut opts = SimOptions::default();
        opts.floors.eps_v_m2 = 0.0;
        (p, opts)
    }

    fn normal_cdf(x: f64) -> f64 {
        0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn endpoint_zero_variance_is_exact() {
        let r = receiver("a", 1234.5, -67.8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_endpoint(&r, 0.0, false, &mut rng).unwrap();
        assert_eq!(p, r.position);
    }

    #[test]
    fn endpoint_moments_match_gaussian() {
        let r = receiver("a", 100.0, -50.0);
        let sigma_sq = 1e4;
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<PlanarPoint> =
            (0..n).map(|_| sample_endpoint(&r, sigma_sq, false, &mut rng).unwrap()).collect();

        let mx = draws.iter().map(|p| p.x).sum::<f64>() / n as f64;
        let my = draws.iter().map(|p| p.y).sum::<f64>() / n as f64;
        let se = (sigma_sq / n as f64).sqrt();
        assert!((mx - r.position.x).abs() < 3.0 * se, "mean x off: {mx}");
        assert!((my - r.position.y).abs() < 3.0 * se, "mean y off: {my}");

        let vx = draws.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / (n - 1) as f64;
        let vy = draws.iter().map(|p| (p.y - my).powi(2)).sum::<f64>() / (n - 1) as f64;
        let cxy = draws.iter().map(|p| (p.x - mx) * (p.y - my)).sum::<f64>() / (n - 1) as f64;
        assert!((vx - sigma_sq).abs() / sigma_sq < 0.02, "var x {vx}");
        assert!((vy - sigma_sq).abs() / sigma_sq < 0.02, "var y {vy}");
        assert!(cxy.abs() / sigma_sq < 0.02, "cov {cxy}");
    }

    #[test]
    fn endpoint_enforcement_keeps_draws_in_radius() {
        let r = receiver("a", 0.0, 0.0);
        let sigma = r.radius_m / 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let p = sample_endpoint(&r, sigma * sigma, true, &mut rng).unwrap();
            assert!(distance(p, r.position) <= r.radius_m);
        }
    }

    #[test]
    fn endpoint_enforcement_rejects_pathological_sigma() {
        let r = receiver("a", 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = sample_endpoint(&r, 1e12, true, &mut rng).unwrap_err();
        assert!(matches!(err, Error::EndpointEnforcement(_)));
    }

    #[test]
    fn remaining_distance_modes() {
        let a = PlanarPoint::new(0.0, 0.0);
        let b = PlanarPoint::new(10_000.0, 0.0);
        assert_eq!(remaining_distance(a, b, 500.0, RemainingDistanceMode::Literal, 1.0), 10_000.0);
        assert_eq!(remaining_distance(a, b, 500.0, RemainingDistanceMode::Adjusted, 1.0), 9_000.0);
        assert_eq!(remaining_distance(a, a, 500.0, RemainingDistanceMode::Adjusted, 1.0), 1.0);
        assert_eq!(remaining_distance(a, a, 500.0, RemainingDistanceMode::Literal, 1.0), 0.0);
    }

    #[test]
    fn sigma_psi_sq_exponential_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ModelParams::new(1.0, 3, 1.0, 0.5, 1.0, 500.0).unwrap();
        // n=3, t=2: exponent n-(t-1) = 2
        assert_relative_eq!(
            sigma_psi_sq(2, 3, &p, &mut rng),
            std::f64::consts::E.powi(2),
            max_relative = 1e-15
        );
        let p2 = ModelParams::new(1.0, 3, 2.0, 0.5, 1.0, 500.0).unwrap();
        // n=3, t=4: exponent 0
        assert_relative_eq!(sigma_psi_sq(4, 3, &p2, &mut rng), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn sigma_psi_sq_uniform_regime_bounds() {
        let p = ModelParams::new(1.0, 3, 2.0, 0.5, 1.0, 500.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let v = sigma_psi_sq(2, 5, &p, &mut rng);
            assert!(v > 0.0 && v < 2.0, "value {v} outside (0, gamma)");
        }
    }

    #[test]
    fn sigma_psi_sq_decays_in_t_for_short_gaps() {
        let p = ModelParams::new(0.7, 3, 1.5, 0.5, 1.0, 500.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 3usize;
        let vals: Vec<f64> = (2..=n + 1).map(|t| sigma_psi_sq(t, n, &p, &mut rng)).collect();
        for w in vals.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn quiet_step_takes_even_share_of_remaining_distance() {
        let (p, opts) = quiet_params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let start = PlanarPoint::new(0.0, 0.0);
        let target = PlanarPoint::new(8000.0, 0.0);

        // t=2, T=5: step of d/4
        let (next, lat) = sample_step(start, target, 2, 5, &p, &opts, &mut rng);
        assert_relative_eq!(next.x, 2000.0, max_relative = 1e-12);
        assert!(next.y.abs() < 1e-9);
        assert_relative_eq!(lat.dist_draw, 2000.0, max_relative = 1e-12);

        // t=4 = T-1: step of remaining/2
        let prev = PlanarPoint::new(4000.0, 0.0);
        let (next, _) = sample_step(prev, target, 4, 5, &p, &opts, &mut rng);
        assert_relative_eq!(next.x, 6000.0, max_relative = 1e-12);
    }

    #[test]
    fn step_distance_matches_folded_normal_mean() {
        let p = params();
        let opts = SimOptions::default();
        let start = PlanarPoint::new(0.0, 0.0);
        let target = PlanarPoint::new(9000.0, 0.0);
        let (t, t_len) = (2usize, 5usize);

        let d = 9000.0;
        let mu = d / (t_len as f64 - (t as f64 - 1.0));
        let var = opts.floors.step_variance(d, p.phi);
        let sd = var.sqrt();
        // E|N(mu, sd^2)| in closed form.
        let expected = sd * (2.0 / std::f64::consts::PI).sqrt() * (-mu * mu / (2.0 * var)).exp()
            + mu * (1.0 - 2.0 * normal_cdf(-mu / sd));
        // Var|N| = mu^2 + sd^2 - E|N|^2
        let fold_var = mu * mu + var - expected * expected;

        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mean_abs: f64 = (0..n)
            .map(|_| sample_step(start, target, t, t_len, &p, &opts, &mut rng).1.dist_draw.abs())
            .sum::<f64>()
            / n as f64;
        let se = (fold_var / n as f64).sqrt();
        assert!(
            (mean_abs - expected).abs() < 3.0 * se,
            "|D| mean {mean_abs} vs folded-normal {expected} (se {se})"
        );
    }

    #[test]
    fn segment_t2_has_no_latents() {
        let spec = SegmentSpec::new("f", 1, receiver("a", 0.0, 0.0), receiver("b", 3000.0, 0.0), 2)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = impute_segment(&spec, &params(), &SimOptions::default(), &mut rng).unwrap();
        assert_eq!(draw.positions.len(), 2);
        assert!(draw.latents.is_empty());
    }

    #[test]
    fn segment_t5_has_three_interior_points_and_replays() {
        let spec = SegmentSpec::new("f", 1, receiver("a", 0.0, 0.0), receiver("b", 8000.0, 0.0), 5)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draw = impute_segment(&spec, &params(), &SimOptions::default(), &mut rng).unwrap();
        assert_eq!(draw.positions.len(), 5);
        assert_eq!(draw.latents.len(), 3);
        draw.verify_replay(1e-9).unwrap();
    }

    #[test]
    fn trajectory_chains_endpoints_bitwise() {
        let a = receiver("44", 0.0, 0.0);
        let b = receiver("31", 9000.0, 2000.0);
        let c = receiver("18", 15_000.0, -3000.0);
        let d = receiver("13", 18_000.0, 500.0);
        let specs = vec![
            SegmentSpec::new("18453", 1, a, b.clone(), 5).unwrap(),
            SegmentSpec::new("18453", 2, b, c.clone(), 6).unwrap(),
            SegmentSpec::new("18453", 3, c, d, 3).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let traj = impute_trajectory(&specs, &params(), &SimOptions::default(), &mut rng).unwrap();
        assert_eq!(traj.segments.len(), 3);
        assert_eq!(traj.position_count(), 14);
        for pair in traj.segments.windows(2) {
            assert_eq!(pair[1].start(), pair[0].end());
        }
        // 12 distinct days: sum (T_k - 1) + 1
        let days: usize = traj.segments.iter().map(|s| s.spec.t_len - 1).sum::<usize>() + 1;
        assert_eq!(days, 12);
        for seg in &traj.segments {
            seg.verify_replay(1e-9).unwrap();
        }
    }

    #[test]
    fn single_segment_trajectory_equals_impute_segment() {
        let spec = SegmentSpec::new("f", 1, receiver("a", 0.0, 0.0), receiver("b", 5000.0, 0.0), 4)
            .unwrap();
        let p = params();
        let opts = SimOptions::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(12);
        let mut r2 = ChaCha8Rng::seed_from_u64(12);
        let traj = impute_trajectory(std::slice::from_ref(&spec), &p, &opts, &mut r1).unwrap();
        let seg = impute_segment(&spec, &p, &opts, &mut r2).unwrap();
        assert_eq!(traj.segments[0], seg);
    }

    #[test]
    fn empty_specs_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(impute_trajectory(&[], &params(), &SimOptions::default(), &mut rng).is_err());
    }

    #[test]
    fn strict_mode_keeps_steps_outside_receivers() {
        let blocker = Receiver::new("block", PlanarPoint::new(4000.0, 0.0), 800.0).unwrap();
        let spec = SegmentSpec::new("f", 1, receiver("a", 0.0, 0.0), receiver("b", 8000.0, 0.0), 5)
            .unwrap();
        let opts = SimOptions {
            avoid_receivers: vec![blocker.clone()],
            ..SimOptions::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let draw = impute_segment(&spec, &params(), &opts, &mut rng).unwrap();
            for lat in &draw.latents {
                let pos = draw.position(lat.t);
                assert!(distance(pos, blocker.position) > blocker.radius_m);
            }
        }
    }
}
