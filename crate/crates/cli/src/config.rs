//! TOML configuration. Every section and key is optional; unknown keys are
//! rejected.
//!
//! ```toml
//! [rig]
//! focal_px = 700.0
//! baseline_mm = 63.0
//! image_width = 1280
//! image_height = 720
//! half_fov_v_deg = 30.0
//!
//! [control]
//! ring_center_frac = 0.5
//! ring_halfwidth_frac = 0.1
//! recenter_frac = 0.3
//! weights = { RedBlock = 2.0 }
//!
//! [arm]
//! l1_mm = 200.0
//! l2_mm = 150.0
//! ext_range_mm = [0.0, 100.0]
//! base_height_mm = 0.0
//! bracket_pitch_deg = -30.0
//! pan_step_deg = 2.0
//! tilt_step_deg = 2.0
//! zoom_step_mm = 10.0
//! sweep_step_deg = 0.25
//! limits = { base_deg = [-90.0, 90.0], bottom_deg = [0.0, 180.0], top_deg = [-170.0, 170.0], pitch_offset_deg = [-60.0, 60.0] }
//!
//! [pairing]
//! tolerance_px = 20.0
//! min_score = 0.0
//!
//! [sim]
//! max_steps = 200
//! jitter_px = 0.0
//! seed = 0
//! disable_zoom = false
//! workspace = { x_mm = [100.0, 600.0], y_mm = [-100.0, 300.0], z_mm = [-300.0, 300.0] }
//! initial_state = { theta_base_deg = 0.0, theta_bottom_deg = 90.0, theta_top_deg = -90.0, extension_mm = 50.0, pitch_offset_deg = 0.0 }
//!
//! [serve]
//! pace = false
//! baud = 9600
//!
//! [paths]
//! detections = "detections.txt"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autocam::arm::protocol::BAUD_RATE;
use autocam::arm::ArmParams;
use autocam::control::ControlParams;
use autocam::geometry::StereoRig;
use autocam::matching::DEFAULT_PAIRING_TOLERANCE_PX;
use autocam::sim::{LoopConfig, SimParams};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub rig: StereoRig,
    pub control: ControlParams,
    pub arm: ArmParams,
    pub pairing: PairingConfig,
    pub sim: SimParams,
    pub serve: ServeConfig,
    pub paths: PathsConfig,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingConfig {
    pub tolerance_px: f64,
    /// Detections scoring below this are dropped before pairing.
    pub min_score: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            tolerance_px: DEFAULT_PAIRING_TOLERANCE_PX,
            min_score: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    /// Sleep for each written line's transmission time at `baud`.
    pub pace: bool,
    pub baud: u32,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            pace: false,
            baud: BAUD_RATE,
        }
    }
}

/// Default input and output files, used when the matching flag is absent.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub detections: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub proposed: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.validate().context("[rig]")?;
        self.control.validate().context("[control]")?;
        self.arm.validate().context("[arm]")?;
        self.sim.initial_state.validate(&self.arm).context("[sim] initial_state")?;
        if !(self.pairing.tolerance_px >= 0.0) {
            bail!("[pairing] tolerance_px must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.pairing.min_score) {
            bail!("[pairing] min_score must be in [0, 1]");
        }
        if self.serve.baud == 0 {
            bail!("[serve] baud must be positive");
        }
        Ok(())
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            rig: self.rig,
            control: self.control.clone(),
            arm: self.arm,
            pairing_tol_px: self.pairing.tolerance_px,
            sim: self.sim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c.rig, StereoRig::default());
        assert_eq!(c.pairing.tolerance_px, 20.0);
        c.validate().unwrap();
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("config.rs");
        let toml_text: String = doc
            .lines()
            .take_while(|l| l.starts_with("//!"))
            .skip_while(|l| !l.contains("```toml"))
            .skip(1)
            .take_while(|l| !l.contains("```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let c: Config = toml::from_str(&toml_text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.control.weight(autocam::matching::ObjectLabel::RedBlock), 2.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("[rig]\nfocal = 1.0\n").is_err());
        assert!(toml::from_str::<Config>("[nonsense]\n").is_err());
        assert!(toml::from_str::<Config>("[control]\nweights = { BlueBlock = 1.0 }\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let c: Config = toml::from_str("[rig]\nfocal_px = -1.0\n").unwrap();
        assert!(c.validate().is_err());
        let c: Config = toml::from_str("[pairing]\nmin_score = 2.0\n").unwrap();
        assert!(c.validate().is_err());
    }
}
