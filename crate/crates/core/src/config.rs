//! Run configuration: a TOML document with one section per stage.
//!
//! Every field has a default, so an empty file is a valid ramp-mode config.

use crate::bvp1d::Bvp1dOptions;
use crate::error::{Error, Result};
use crate::eulerflow::FlowCheckOptions;
use crate::geometry::WitnessOptions;
use crate::nonlinearity::{Mode, CHI_TAG};
use crate::strip2d::{ContinuationOptions, Strip2dOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Grid used by the strip stage; the one-dimensional pair feeding it is
/// recomputed on the same vertical grid so traces match nodewise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Cells across the strip height (`hy = 1 / m_2d`).
    pub m_2d: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { m_2d: 128 }
    }
}

/// Levels probed by the witness search plus the search tunables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessConfig {
    /// Levels to probe; empty selects the mode default
    /// (`0.25, 0.2, 0.15, 0.1` in zero mode, none in ramp mode).
    pub alphas: Vec<f64>,
    /// Coarsening factor of the brute-force midpoint oracle.
    pub oracle_coarsen: usize,
    pub search: WitnessOptions,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig { alphas: Vec::new(), oracle_coarsen: 4, search: WitnessOptions::default() }
    }
}

impl WitnessConfig {
    pub fn effective_alphas(&self, mode: Mode) -> Vec<f64> {
        if !self.alphas.is_empty() {
            return self.alphas.clone();
        }
        match mode {
            Mode::Zero => vec![0.25, 0.2, 0.15, 0.1],
            Mode::Ramp => Vec::new(),
        }
    }
}

/// Figure data: level curves and streamlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Levels to contour; empty selects `0.25, 0.5, 1 - 1e-3, 2, 5` clipped to the field range.
    pub level_alphas: Vec<f64>,
    /// Streamline seeds spread over the left trusted column.
    pub streamline_seeds: usize,
    pub step: f64,
    pub max_steps: usize,
    pub svg_width: f64,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig { level_alphas: Vec::new(), streamline_seeds: 12, step: 0.01, max_steps: 20_000, svg_width: 1600.0 }
    }
}

/// Pass thresholds of the verification stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub max_divergence: f64,
    pub max_slip: f64,
    pub max_curvature_gap: f64,
    pub max_balancing_defect: f64,
    pub max_end_gap: f64,
    pub max_hamiltonian_spread: f64,
    /// Bound on the Euler residual divided by its truncation scale.
    pub max_euler_residual_scaled: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            max_divergence: 1e-12,
            max_slip: 1e-8,
            max_curvature_gap: 0.05,
            max_balancing_defect: 0.02,
            max_end_gap: 1e-3,
            max_hamiltonian_spread: 1e-3,
            max_euler_residual_scaled: 1e-3,
        }
    }
}

/// Complete configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Identifier of the cutoff construction; must match the built one.
    pub chi: String,
    pub out_dir: PathBuf,
    pub grid: GridConfig,
    pub bvp1d: Bvp1dOptions,
    pub strip2d: Strip2dOptions,
    pub continuation: ContinuationOptions,
    pub flow: FlowCheckOptions,
    pub witness: WitnessConfig,
    pub plot: PlotConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Ramp,
            chi: CHI_TAG.to_string(),
            out_dir: PathBuf::from("out"),
            grid: GridConfig::default(),
            bvp1d: Bvp1dOptions::default(),
            strip2d: Strip2dOptions::default(),
            continuation: ContinuationOptions::default(),
            flow: FlowCheckOptions::default(),
            witness: WitnessConfig::default(),
            plot: PlotConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    /// Defaults for `mode`.
    pub fn for_mode(mode: Mode) -> Self {
        RunConfig { mode, out_dir: PathBuf::from(format!("out/{mode}")), ..Default::default() }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    /// Canonical TOML of the effective configuration.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    /// SHA-256 of the canonical TOML, hex encoded.
    pub fn sha256(&self) -> String {
        hex(&Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Options of the one-dimensional stage on the strip's vertical grid.
    pub fn bvp1d_for_strip(&self) -> Bvp1dOptions {
        Bvp1dOptions { m: self.grid.m_2d, ..self.bvp1d.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi != CHI_TAG {
            return Err(Error::Config(format!("chi construction `{}` differs from the built `{CHI_TAG}`", self.chi)));
        }
        let b = &self.bvp1d;
        for (name, x) in [
            ("bvp1d.tol_residual", b.tol_residual),
            ("bvp1d.tol_energy", b.tol_energy),
            ("bvp1d.delta_margin", b.delta_margin),
            ("bvp1d.tol_lambda", b.tol_lambda),
            ("strip2d.hx", self.strip2d.hx),
            ("strip2d.tol_residual", self.strip2d.tol_residual),
            ("strip2d.tol_energy_stall", self.strip2d.tol_energy_stall),
            ("strip2d.omega", self.strip2d.omega),
            ("strip2d.min_shift", self.strip2d.min_shift),
            ("continuation.tol_cont", self.continuation.tol_cont),
            ("continuation.common_window", self.continuation.common_window),
            ("continuation.end_margin", self.continuation.end_margin),
            ("flow.eps_stag_rel", self.flow.eps_stag_rel),
            ("witness.search.tol", self.witness.search.tol),
            ("plot.step", self.plot.step),
            ("plot.svg_width", self.plot.svg_width),
        ] {
            positive(name, x)?;
        }
        if b.m < 16 || self.grid.m_2d < 16 || 1.0 / self.strip2d.hx < 16.0 - 1e-9 {
            return Err(Error::Config("grids need at least 16 nodes per unit length".into()));
        }
        if self.strip2d.omega >= 2.0 {
            return Err(Error::Config("strip2d.omega must lie in (0, 2)".into()));
        }
        if b.k_min >= b.k_max {
            return Err(Error::Config("bvp1d.k_min must be below bvp1d.k_max".into()));
        }
        let sched = &self.continuation.l_schedule;
        if sched.is_empty() || sched[0] <= 0.0 || sched.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("continuation.l_schedule must be positive and strictly increasing".into()));
        }
        for &l in sched {
            let cells = l / self.strip2d.hx;
            if (cells - cells.round()).abs() > 1e-9 {
                return Err(Error::Config(format!("L = {l} is not a multiple of hx")));
            }
        }
        if self.witness.effective_alphas(self.mode).iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Config("witness levels must be positive".into()));
        }
        if self.witness.search.budget == 0 || self.witness.oracle_coarsen == 0 {
            return Err(Error::Config("witness budget and oracle coarsening must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let c = RunConfig::for_mode(Mode::Zero);
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.sha256(), c.sha256());
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "mode = \"spiral\"",
            "[strip2d]\nhx = 0.5",
            "[continuation]\nl_schedule = [8.0, 4.0]",
            "[bvp1d]\ntol_residual = -1.0",
            "chi = \"other\"",
            "[strip2d]\nunknown_key = 1",
        ] {
            assert!(matches!(RunConfig::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
