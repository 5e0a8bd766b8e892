//! Run configuration: JSON schema for priors, bootstrap settings,
//! simulation switches, and heatmap output.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bootstrap::PriorConfig;
use crate::error::{Error, Result};
use crate::geo::Receiver;
use crate::movement::{Floors, RemainingDistanceMode, SimOptions};

/// Heatmap output settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    /// Cell side length in meters.
    pub cell_m: f64,
    /// Padding added around the bounding box of the binned points, meters.
    pub padding_m: f64,
    /// Bin the endpoint (detection-day) positions as well as the imputed
    /// interior days.
    pub include_endpoints: bool,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self { cell_m: 250.0, padding_m: 500.0, include_endpoints: true }
    }
}

/// Full run configuration. Every field has a default, so `{}` is a valid
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub priors: PriorConfig,
    /// Detection radius assigned to every receiver, meters.
    pub receiver_radius_m: f64,
    /// Bootstrap iterations.
    pub n_iter: usize,
    /// Fraction of draws retained by the likelihood filter, in (0, 1].
    pub keep_frac: f64,
    /// Run seed; omitted means "draw from OS entropy and record it".
    pub seed: Option<u64>,
    pub remaining_distance_mode: RemainingDistanceMode,
    pub floors: Floors,
    /// Rejection-sample endpoint draws into the detecting receiver's radius.
    pub enforce_endpoint_in_radius: bool,
    /// Rejection-sample interior steps out of every receiver's detection
    /// range (capped retries).
    pub reject_steps_in_detection_range: bool,
    pub heatmap: HeatmapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            priors: PriorConfig::default(),
            receiver_radius_m: 500.0,
            n_iter: 5000,
            keep_frac: 0.9,
            seed: None,
            remaining_distance_mode: RemainingDistanceMode::Literal,
            floors: Floors::default(),
            enforce_endpoint_in_radius: false,
            reject_steps_in_detection_range: false,
            heatmap: HeatmapConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(reader)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{name} = {v} must be positive and finite")))
            }
        };
        positive("receiver_radius_m", self.receiver_radius_m)?;
        if self.n_iter == 0 {
            return Err(Error::Invalid("n_iter must be >= 1".into()));
        }
        if self.keep_frac.is_nan() || self.keep_frac <= 0.0 || self.keep_frac > 1.0 {
            return Err(Error::Invalid(format!("keep_frac {} outside (0, 1]", self.keep_frac)));
        }
        let f = &self.floors;
        positive("floors.eps_d_m", f.eps_d_m)?;
        positive("floors.eps_dist_m", f.eps_dist_m)?;
        positive("floors.eps_psi_sq", f.eps_psi_sq)?;
        if f.eps_v_m2.is_nan() || f.eps_v_m2 < 0.0 {
            return Err(Error::Invalid("floors.eps_v_m2 must be >= 0".into()));
        }
        if f.var_cap_m2.is_nan() || f.var_cap_m2 < f.eps_v_m2 {
            return Err(Error::Invalid("floors.var_cap_m2 must be >= floors.eps_v_m2".into()));
        }
        positive("heatmap.cell_m", self.heatmap.cell_m)?;
        if self.heatmap.padding_m.is_nan() || self.heatmap.padding_m < 0.0 {
            return Err(Error::Invalid("heatmap.padding_m must be >= 0".into()));
        }
        Ok(())
    }

    /// Assemble the simulation switches. `receivers` is only consulted when
    /// step rejection is enabled.
    pub fn sim_options(&self, receivers: &[Receiver]) -> SimOptions {
        SimOptions {
            mode: self.remaining_distance_mode,
            floors: self.floors,
            enforce_endpoint_in_radius: self.enforce_endpoint_in_radius,
            avoid_receivers: if self.reject_steps_in_detection_range {
                receivers.to_vec()
            } else {
                Vec::new()
            },
        }
    }
}
