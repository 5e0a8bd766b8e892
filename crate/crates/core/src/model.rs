//! Value types produced and consumed by the simulation and likelihood
//! stages: model parameters, per-step latent variables, and segment /
//! trajectory draws.
//!
//! All types are immutable after construction and safe to share across
//! worker threads.

use crate::error::{Error, Result};
use crate::geo::PlanarPoint;
use crate::ingest::SegmentSpec;

/// One realization of the movement-model parameters governing a bootstrap
/// iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Exponential decay rate of the angular-noise variance (> 0).
    pub alpha: f64,
    /// Gap-length threshold at which the angular-noise variance switches
    /// from exponential decay to uniform randomization.
    pub beta: u32,
    /// Initial angular-noise variance in radians^2 (> 0).
    pub gamma: f64,
    /// Exponent of the step-distance variance power law.
    pub phi: f64,
    /// Endpoint sampling variance in m^2 (> 0).
    pub sigma_r_sq: f64,
    /// Receiver detection radius in meters (> 0).
    pub r_m: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: u32, gamma: f64, phi: f64, sigma_r_sq: f64, r_m: f64) -> Result<Self> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{name} = {v} must be positive and finite")))
            }
        }
        positive("alpha", alpha)?;
        positive("gamma", gamma)?;
        positive("sigma_r_sq", sigma_r_sq)?;
        positive("r_m", r_m)?;
        if !phi.is_finite() {
            return Err(Error::Invalid(format!("phi = {phi} must be finite")));
        }
        Ok(Self { alpha, beta, gamma, phi, sigma_r_sq, r_m })
    }
}

/// Latent variables realized at one interior step of a segment draw,
/// sufficient to replay the step and to evaluate its likelihood factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLatents {
    /// Time index t within the segment, 2 <= t <= T-1.
    pub t: usize,
    /// Heading toward the segment endpoint, radians.
    pub theta: f64,
    /// Angular noise draw, radians.
    pub psi: f64,
    /// Remaining distance d_t used for this step, meters (post-floor).
    pub d_remaining: f64,
    /// Signed step-distance draw D_t, meters.
    pub dist_draw: f64,
    /// Realized angular-noise variance for this step, radians^2.
    pub sigma_psi_sq: f64,
    /// True when the previous position coincided with the endpoint and the
    /// heading fell back to the 0-radian convention.
    pub coincident: bool,
}

/// One simulated realization of a segment: positions for days 1..=T plus
/// the latent draws behind days 2..=T-1.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDraw {
    pub spec: SegmentSpec,
    pub positions: Vec<PlanarPoint>,
    pub latents: Vec<StepLatents>,
}

impl SegmentDraw {
    pub fn new(spec: SegmentSpec, positions: Vec<PlanarPoint>, latents: Vec<StepLatents>) -> Result<Self> {
        if positions.len() != spec.t_len {
            return Err(Error::Invalid(format!(
                "segment draw has {} positions, expected T={}",
                positions.len(),
                spec.t_len
            )));
        }
        if latents.len() != spec.t_len - 2 {
            return Err(Error::Invalid(format!(
                "segment draw has {} latent steps, expected T-2={}",
                latents.len(),
                spec.t_len - 2
            )));
        }
        Ok(Self { spec, positions, latents })
    }

    /// Position at segment day t (1-based).
    pub fn position(&self, t: usize) -> PlanarPoint {
        self.positions[t - 1]
    }

    pub fn start(&self) -> PlanarPoint {
        self.positions[0]
    }

    pub fn end(&self) -> PlanarPoint {
        *self.positions.last().expect("positions nonempty by construction")
    }

    /// Replay each stored latent through the step update and check that it
    /// reproduces the stored position within `tol_m` meters.
    pub fn verify_replay(&self, tol_m: f64) -> Result<()> {
        for lat in &self.latents {
            let prev = self.position(lat.t - 1);
            let heading = lat.theta + lat.psi;
            let step = lat.dist_draw.abs();
            let expected = prev.offset(step * heading.cos(), step * heading.sin());
            let got = self.position(lat.t);
            let err = crate::geo::distance(expected, got);
            if err.is_nan() || err > tol_m {
                return Err(Error::InconsistentDraw(format!(
                    "segment {} step t={} replays {err:.3e} m away from stored position",
                    self.spec.k, lat.t
                )));
            }
        }
        Ok(())
    }
}

/// A full-trajectory draw: chained segment draws plus the parameters that
/// generated them. `loglik` is NaN until scored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDraw {
    pub segments: Vec<SegmentDraw>,
    pub params: ModelParams,
    pub loglik: f64,
}

impl TrajectoryDraw {
    pub fn new(segments: Vec<SegmentDraw>, params: ModelParams) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Invalid("trajectory draw needs at least one segment".into()));
        }
        let draw = Self { segments, params, loglik: f64::NAN };
        draw.verify_chaining()?;
        Ok(draw)
    }

    /// Consume the draw, recording its log-likelihood.
    pub fn scored(mut self, loglik: f64) -> Self {
        self.loglik = loglik;
        self
    }

    /// Segments k > 1 must start exactly (bitwise) where the previous
    /// segment ended.
    pub fn verify_chaining(&self) -> Result<()> {
        for pair in self.segments.windows(2) {
            if pair[1].start() != pair[0].end() {
                return Err(Error::InconsistentDraw(format!(
                    "segment {} does not start at segment {}'s endpoint",
                    pair[1].spec.k, pair[0].spec.k
                )));
            }
        }
        Ok(())
    }

    /// Total number of stored positions across segments (shared chain
    /// points counted once per segment that stores them).
    pub fn position_count(&self) -> usize {
        self.segments.iter().map(|s| s.positions.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Receiver;

    fn spec(t_len: usize) -> SegmentSpec {
        let a = Receiver::new("a", PlanarPoint::new(0.0, 0.0), 500.0).unwrap();
        let b = Receiver::new("b", PlanarPoint::new(8000.0, 0.0), 500.0).unwrap();
        SegmentSpec::new("f", 1, a, b, t_len).unwrap()
    }

    #[test]
    fn params_validate_support() {
        assert!(ModelParams::new(1.0, 3, 1.0, 0.5, 1.0, 500.0).is_ok());
        assert!(ModelParams::new(0.0, 3, 1.0, 0.5, 1.0, 500.0).is_err());
        assert!(ModelParams::new(1.0, 3, -1.0, 0.5, 1.0, 500.0).is_err());
        assert!(ModelParams::new(1.0, 3, 1.0, f64::NAN, 1.0, 500.0).is_err());
        // phi may be any finite real, including negative
        assert!(ModelParams::new(1.0, 3, 1.0, -600.0, 1.0, 500.0).is_ok());
    }

    #[test]
    fn segment_draw_checks_lengths() {
        let s = spec(4);
        let pts = vec![PlanarPoint::new(0.0, 0.0); 3];
        assert!(SegmentDraw::new(s.clone(), pts, vec![]).is_err());
        let pts = vec![PlanarPoint::new(0.0, 0.0); 4];
        assert!(SegmentDraw::new(s, pts, vec![]).is_err()); // needs 2 latents
    }

    #[test]
    fn replay_detects_tampering() {
        let s = spec(3);
        let lat = StepLatents {
            t: 2,
            theta: 0.0,
            psi: 0.0,
            d_remaining: 8000.0,
            dist_draw: 4000.0,
            sigma_psi_sq: 0.1,
            coincident: false,
        };
        let good = SegmentDraw::new(
            s.clone(),
            vec![
                PlanarPoint::new(0.0, 0.0),
                PlanarPoint::new(4000.0, 0.0),
                PlanarPoint::new(8000.0, 0.0),
            ],
            vec![lat],
        )
        .unwrap();
        assert!(good.verify_replay(1e-9).is_ok());

        let mut bad = good.clone();
        bad.positions[1] = PlanarPoint::new(4000.5, 0.0);
        assert!(bad.verify_replay(1e-9).is_err());
    }

    #[test]
    fn chaining_must_be_bitwise() {
        let params = ModelParams::new(1.0, 3, 1.0, 0.5, 1.0, 500.0).unwrap();
        let s1 = SegmentDraw::new(
            spec(2),
            vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(8000.0, 0.0)],
            vec![],
        )
        .unwrap();
        let mut s2 = SegmentDraw::new(
            spec(2),
            vec![PlanarPoint::new(8000.0, 0.0), PlanarPoint::new(9000.0, 0.0)],
            vec![],
        )
        .unwrap();
        assert!(TrajectoryDraw::new(vec![s1.clone(), s2.clone()], params.clone()).is_ok());

        s2.positions[0] = PlanarPoint::new(8000.0 + 1e-9, 0.0);
        assert!(TrajectoryDraw::new(vec![s1, s2], params).is_err());
    }
}
