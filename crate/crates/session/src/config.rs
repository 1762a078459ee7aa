//! Service configuration, read from a TOML file and overridable from the
//! environment (`RLFD_BIND`, `RLFD_STORAGE_DIR`).
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! storage_dir = "sessions"
//! reveal = "after_commit"
//! canonical_start = [-50.0, 50.0]
//! trajectory_horizon = 100
//! grid = { spacing_mm = 10.0, kind = "cartesian" }
//!
//! [defaults]
//! keyframe_box = 35.0
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use rlfd_core::record::RevealMode;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Cartesian,
    Polar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub spacing_mm: f64,
    pub kind: GridKind,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            spacing_mm: 10.0,
            kind: GridKind::Cartesian,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub storage_dir: PathBuf,
    /// Reveal mode for sessions that do not choose one.
    pub reveal: RevealMode,
    /// World-frame start of the trajectory returned with each phase outcome.
    pub canonical_start: [f64; 2],
    pub trajectory_horizon: usize,
    pub grid: GridSpec,
    /// Fixes every session's seed; a fresh random seed is drawn when absent.
    pub seed: Option<u64>,
    /// Protocol settings merged under each session's own overrides, as a
    /// partial settings document.
    pub defaults: toml::Table,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            storage_dir: PathBuf::from("sessions"),
            reveal: RevealMode::AfterCommit,
            canonical_start: [-50.0, 50.0],
            trajectory_horizon: 100,
            grid: GridSpec::default(),
            seed: None,
            defaults: toml::Table::new(),
        }
    }
}

impl ServiceConfig {
    pub fn with_storage_dir(dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            storage_dir: dir.into(),
            ..ServiceConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> ServiceResult<Self> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` if given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> ServiceResult<Self> {
        let mut config = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p)?)?,
            None => ServiceConfig::default(),
        };
        if let Ok(bind) = std::env::var("RLFD_BIND") {
            config.bind = bind
                .parse()
                .map_err(|e| ServiceError::Invalid(format!("RLFD_BIND {bind:?}: {e}")))?;
        }
        if let Ok(dir) = std::env::var("RLFD_STORAGE_DIR") {
            config.storage_dir = PathBuf::from(dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> ServiceResult<()> {
        if !(self.grid.spacing_mm.is_finite() && self.grid.spacing_mm > 0.0) {
            return Err(ServiceError::Invalid("grid.spacing_mm must be positive".into()));
        }
        if self.trajectory_horizon == 0 {
            return Err(ServiceError::Invalid("trajectory_horizon must be at least 1".into()));
        }
        if !self.canonical_start.iter().all(|v| v.is_finite()) {
            return Err(ServiceError::Invalid("canonical_start must be finite".into()));
        }
        Ok(())
    }
}
