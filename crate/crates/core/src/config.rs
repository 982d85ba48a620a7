//! TOML run configuration: scatterers, margin and horizon-check settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{certified, HorizonReport, HorizonSettings, ScattererDisk, Tube, TubeConfig, TubeKind, DEFAULT_MARGIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub disks: Vec<ScattererDisk>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub horizon: HorizonSettings,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { disks: TubeConfig::default_disks(), margin: DEFAULT_MARGIN, horizon: HorizonSettings::default() }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn tube_config(&self, kind: TubeKind) -> TubeConfig {
        TubeConfig { margin: self.margin, ..TubeConfig::new(self.disks.clone(), kind) }
    }

    /// Runs the horizon check with `seed` and builds the tube.
    pub fn tube(&self, kind: TubeKind, seed: u64) -> Result<(Tube, HorizonReport)> {
        let (cfg, report) = certified(&self.tube_config(kind), &self.horizon, seed)?;
        Ok((Tube::new(&cfg)?, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = SimConfig::default();
        assert_eq!(SimConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn shipped_default_matches_builtin() {
        let text = include_str!("../../../configs/default.toml");
        assert_eq!(SimConfig::from_toml(text).unwrap(), SimConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r = SimConfig::from_toml("radius = 3\n[[disks]]\ncenter = [0.5, 0.5]\nradius = 0.4\n");
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn optional_sections_default() {
        let c = SimConfig::from_toml("[[disks]]\ncenter = [0.5, 0.5]\nradius = 0.4\n").unwrap();
        assert_eq!(c.margin, DEFAULT_MARGIN);
        assert_eq!(c.horizon, HorizonSettings::default());
    }
}
