//! Run configuration files.
//!
//! The format is TOML: `[section]` headers with `key = value` lines plus
//! `[[density]]` / `[[target]]` blocks for the input fields. Parsing is
//! fail-closed: unknown keys are errors, reported with line numbers.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub pdhg: PdhgSection,
    #[serde(rename = "density")]
    pub densities: Vec<DensitySpec>,
    /// Terminal targets, geodesic mode only.
    #[serde(rename = "target", default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<DensitySpec>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub dim: usize,
    pub cells: Vec<usize>,
    /// Domain edge lengths; defaults to 1 per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
    pub time_cells: usize,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    pub degree: usize,
}

fn default_final_time() -> f64 {
    1.0
}

impl MeshSection {
    pub fn resolved_lengths(&self) -> Vec<f64> {
        self.lengths
            .clone()
            .unwrap_or_else(|| vec![1.0; self.dim])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Barycenter,
    Geodesic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub alpha: f64,
    /// One entry per species, or a single entry broadcast to all.
    pub beta: Vec<f64>,
    pub mode: ModeName,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: Vec::new(),
            mode: ModeName::Barycenter,
            rho_min: crate::model::DEFAULT_RHO_MIN,
            rho_max: crate::model::DEFAULT_RHO_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverName {
    #[default]
    Tensor,
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdhgSection {
    pub tol: f64,
    pub max_iter: usize,
    pub sigma_u: f64,
    pub sigma_phi: f64,
    pub prox_sweeps: usize,
    pub clamp_varrho: bool,
    pub diag_every: usize,
    pub linear_solver: SolverName,
    pub lin_tol: f64,
    pub lin_max_iter: usize,
}

impl Default for PdhgSection {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 20_000,
            sigma_u: 1.0,
            sigma_phi: 1.0,
            prox_sweeps: 1,
            clamp_varrho: false,
            diag_every: 10,
            linear_solver: SolverName::Tensor,
            lin_tol: 1e-10,
            lin_max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel: Option<VoxelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub center: Vec<f64>,
    pub sharpness: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelSpec {
    pub path: String,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Vtk,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Snapshot times for volume exports, each within `[0, final_time]`.
    pub snapshots: Vec<f64>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            snapshots: Vec::new(),
            formats: vec![OutputFormat::Csv, OutputFormat::Vtk],
        }
    }
}

/// Reads and fully validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Species count implied by the input densities.
    pub fn n_species(&self) -> usize {
        self.densities.len()
    }

    /// Per-species entropy weights with single-entry broadcast.
    pub fn resolved_beta(&self) -> Vec<f64> {
        let n = self.n_species();
        match self.model.beta.len() {
            0 => vec![0.0; n],
            1 => vec![self.model.beta[0]; n],
            _ => self.model.beta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mesh;
        if !(1..=3).contains(&m.dim) {
            return Err(Error::Config("mesh.dim must be 1, 2 or 3".into()));
        }
        if m.cells.len() != m.dim {
            return Err(Error::Config(format!(
                "mesh.cells must have {} entries",
                m.dim
            )));
        }
        if let Some(lengths) = &m.lengths {
            if lengths.len() != m.dim {
                return Err(Error::Config(format!(
                    "mesh.lengths must have {} entries",
                    m.dim
                )));
            }
            if lengths.iter().any(|&l| !(l > 0.0)) {
                return Err(Error::Config("mesh.lengths must be positive".into()));
            }
        }
        if m.cells.iter().any(|&c| c == 0) || m.time_cells == 0 {
            return Err(Error::Config("mesh cell counts must be >= 1".into()));
        }
        if !(m.final_time > 0.0) {
            return Err(Error::Config("mesh.final_time must be positive".into()));
        }
        if m.degree == 0 {
            return Err(Error::Config("mesh.degree must be >= 1".into()));
        }

        if self.model.alpha < 0.0 {
            return Err(Error::Config("alpha must be >= 0".into()));
        }
        if self.model.beta.iter().any(|&b| b < 0.0) {
            return Err(Error::Config("model.beta entries must be >= 0".into()));
        }
        if !(self.model.rho_min > 0.0) || !(self.model.rho_max > self.model.rho_min) {
            return Err(Error::Config(
                "model density bounds need 0 < rho_min < rho_max".into(),
            ));
        }

        let n = self.n_species();
        if n == 0 {
            return Err(Error::Config("at least one [[density]] is required".into()));
        }
        if !matches!(self.model.beta.len(), 0 | 1) && self.model.beta.len() != n {
            return Err(Error::Config(format!(
                "model.beta must have 1 or {n} entries, got {}",
                self.model.beta.len()
            )));
        }
        match self.model.mode {
            ModeName::Barycenter => {
                if n < 2 {
                    return Err(Error::Config(
                        "barycenter mode needs at least 2 input densities".into(),
                    ));
                }
                if !self.targets.is_empty() {
                    return Err(Error::Config(
                        "[[target]] blocks are only used in geodesic mode".into(),
                    ));
                }
            }
            ModeName::Geodesic => {
                if self.targets.len() != n {
                    return Err(Error::Config(format!(
                        "geodesic mode needs exactly {n} [[target]] blocks, got {}",
                        self.targets.len()
                    )));
                }
            }
        }
        for (what, specs) in [("density", &self.densities), ("target", &self.targets)] {
            for (idx, spec) in specs.iter().enumerate() {
                match (&spec.gaussian, &spec.voxel) {
                    (Some(_), Some(_)) | (None, None) => {
                        return Err(Error::Config(format!(
                            "[[{what}]] #{} must set exactly one of `gaussian` or `voxel`",
                            idx + 1
                        )));
                    }
                    (Some(g), None) => {
                        if g.center.len() != m.dim {
                            return Err(Error::Config(format!(
                                "[[{what}]] #{}: gaussian.center must have {} entries",
                                idx + 1,
                                m.dim
                            )));
                        }
                        if !(g.sharpness > 0.0) {
                            return Err(Error::Config(format!(
                                "[[{what}]] #{}: gaussian.sharpness must be positive",
                                idx + 1
                            )));
                        }
                    }
                    (None, Some(_)) => {}
                }
            }
        }

        let p = &self.pdhg;
        if !(p.tol > 0.0) {
            return Err(Error::Config("pdhg.tol must be positive".into()));
        }
        if p.max_iter == 0 {
            return Err(Error::Config("pdhg.max_iter must be >= 1".into()));
        }
        if !(p.sigma_u > 0.0) || !(p.sigma_phi > 0.0) {
            return Err(Error::Config("pdhg step sizes must be positive".into()));
        }
        if p.prox_sweeps == 0 {
            return Err(Error::Config("pdhg.prox_sweeps must be >= 1".into()));
        }
        if p.diag_every == 0 {
            return Err(Error::Config("pdhg.diag_every must be >= 1".into()));
        }

        for &t in &self.output.snapshots {
            if !(0.0..=m.final_time).contains(&t) {
                return Err(Error::Config(format!(
                    "output.snapshots entry {t} outside [0, {}]",
                    m.final_time
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[mesh]
dim = 1
cells = [16]
time_cells = 4
degree = 2

[[density]]
gaussian = { center = [0.3], sharpness = 50.0 }

[[density]]
gaussian = { center = [0.7], sharpness = 50.0 }
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.n_species(), 2);
        assert_eq!(cfg.pdhg.tol, 1e-5);
        assert_eq!(cfg.pdhg.sigma_u, 1.0);
        assert_eq!(cfg.model.mode, ModeName::Barycenter);
        assert_eq!(cfg.mesh.resolved_lengths(), vec![1.0]);
        assert_eq!(cfg.resolved_beta(), vec![0.0, 0.0]);
        assert_eq!(cfg.output.dir, "out");
    }

    #[test]
    fn negative_alpha_is_a_named_error() {
        let text = format!("{MINIMAL}\n[model]\nalpha = -1.0\n");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.to_string().contains("alpha must be >= 0"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let text = format!("{MINIMAL}\n[pdhg]\nfoo = 3\n");
        let err = parse_config_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("foo"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn round_trip_preserves_configuration() {
        let text = format!(
            "{MINIMAL}\n[model]\nalpha = 50.0\nbeta = [0.001]\n\n[output]\nsnapshots = [0.0, 0.5, 1.0]\n"
        );
        let cfg = parse_config_str(&text).unwrap();
        let serialized = cfg.to_toml().unwrap();
        let reparsed = parse_config_str(&serialized).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn geodesic_needs_matching_targets() {
        let text = format!("{MINIMAL}\n[model]\nmode = \"geodesic\"\n");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.to_string().contains("target"), "{err}");
    }

    #[test]
    fn density_must_pick_one_kind() {
        let text = r#"
[mesh]
dim = 1
cells = [4]
time_cells = 2
degree = 1

[[density]]
gaussian = { center = [0.3], sharpness = 50.0 }
voxel = { path = "x.vox" }

[[density]]
gaussian = { center = [0.7], sharpness = 50.0 }
"#;
        let err = parse_config_str(text).unwrap_err();
        assert!(err.to_string().contains("exactly one"), "{err}");
    }

    #[test]
    fn snapshot_times_validated_against_final_time() {
        let text = format!("{MINIMAL}\n[output]\nsnapshots = [2.0]\n");
        assert!(parse_config_str(&text).is_err());
    }
}
