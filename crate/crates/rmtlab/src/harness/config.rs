//! Experiment configuration: kinds, parameter grids, and JSON loading.

use crate::moments::DEFAULT_QUADRATURE_NODES;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no experiment kind: pass one on the command line or set \"kind\" in the config")]
    MissingKind,
    #[error("unknown experiment kind {0:?}")]
    UnknownKind(String),
    #[error("grid {which:?} must not be empty for this experiment")]
    EmptyGrid { which: &'static str },
    #[error("truncation order m = {m} must be odd")]
    EvenTruncationOrder { m: usize },
    #[error("monte carlo settings need samples >= 1 and workers >= 1")]
    DegenerateMc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Haar-sample statistics: mean trace and eigenangle histogram tests.
    Sample,
    /// Closed-form kernel integrals against quadrature.
    KernelCheck,
    /// Monte Carlo scaled moments against the leading-order law.
    Moment,
    /// Exact h(1), h(2) scans with residuals and fitted slopes.
    HScan,
    /// Reconstruction of the normalized moment from exact h against the
    /// refined law.
    TheoremVerify,
    /// Every acceptance criterion, with a traceability table.
    FullSuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Sample,
        ExperimentKind::KernelCheck,
        ExperimentKind::Moment,
        ExperimentKind::HScan,
        ExperimentKind::TheoremVerify,
        ExperimentKind::FullSuite,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::KernelCheck => "kernel-check",
            ExperimentKind::Moment => "moment",
            ExperimentKind::HScan => "h-scan",
            ExperimentKind::TheoremVerify => "theorem-verify",
            ExperimentKind::FullSuite => "full-suite",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| ConfigError::UnknownKind(s.to_string()))
    }
}

/// Evaluation grid. Experiments iterate these lists in order; row indices
/// follow the nesting n, then a, then kappa.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointGrid {
    pub n: Vec<usize>,
    pub a: Vec<f64>,
    pub kappa: Vec<f64>,
    pub m: Vec<usize>,
}

/// Monte Carlo settings. The (samples, master_seed, workers) triple is the
/// reproducibility key: outputs are byte-identical for a fixed triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub samples: u64,
    pub master_seed: u64,
    pub workers: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings { samples: 20_000, master_seed: 1_000_003, workers: 8 }
    }
}

/// Quadrature overrides for the deterministic integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSettings {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { nodes: DEFAULT_QUADRATURE_NODES }
    }
}

/// Full experiment description, mirrored field-for-field by the JSON config
/// document. The kind may come from the config or the command line; the
/// command line wins when both are present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub grid: PointGrid,
    pub mc: McSettings,
    pub quadrature: QuadratureSettings,
    pub out_dir: Option<PathBuf>,
    pub quick: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text)
            .map_err(|source| ConfigError::Json { path: path.to_path_buf(), source })
    }

    /// Desk-scale defaults for running a kind without a config file.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let grid = match kind {
            ExperimentKind::Sample => PointGrid { n: vec![10], ..PointGrid::default() },
            ExperimentKind::KernelCheck => PointGrid {
                n: vec![1, 5, 20],
                a: vec![0.5, 0.05],
                ..PointGrid::default()
            },
            ExperimentKind::Moment => PointGrid {
                n: vec![100],
                a: vec![0.01, 0.005],
                kappa: vec![0.5, 1.5, 2.5],
                ..PointGrid::default()
            },
            ExperimentKind::HScan => PointGrid {
                n: vec![10, 50],
                a: vec![1e-3, 1e-4, 1e-5, 1e-6],
                ..PointGrid::default()
            },
            ExperimentKind::TheoremVerify => PointGrid {
                n: vec![2, 3],
                a: vec![1e-4, 1e-5, 1e-6, 1e-7],
                kappa: vec![1.5, 2.5],
                m: vec![3],
            },
            ExperimentKind::FullSuite => PointGrid::default(),
        };
        ExperimentConfig { kind: Some(kind), grid, ..ExperimentConfig::default() }
    }

    /// Checks the structural invariants for the given kind: the grids the
    /// kind iterates are nonempty, truncation orders are odd, and the Monte
    /// Carlo triple is usable. Point feasibility is not a config error; the
    /// experiments mark infeasible points indeterminate row by row.
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), ConfigError> {
        let need = |cond: bool, which: &'static str| {
            if cond {
                Ok(())
            } else {
                Err(ConfigError::EmptyGrid { which })
            }
        };
        match kind {
            ExperimentKind::Sample => need(!self.grid.n.is_empty(), "n")?,
            ExperimentKind::KernelCheck => {
                need(!self.grid.n.is_empty(), "n")?;
                need(!self.grid.a.is_empty(), "a")?;
            }
            ExperimentKind::Moment => {
                need(!self.grid.n.is_empty(), "n")?;
                need(!self.grid.a.is_empty(), "a")?;
                need(!self.grid.kappa.is_empty(), "kappa")?;
            }
            ExperimentKind::HScan => {
                need(!self.grid.n.is_empty(), "n")?;
                need(!self.grid.a.is_empty(), "a")?;
            }
            ExperimentKind::TheoremVerify => {
                need(!self.grid.n.is_empty(), "n")?;
                need(!self.grid.a.is_empty(), "a")?;
                need(!self.grid.kappa.is_empty(), "kappa")?;
                need(!self.grid.m.is_empty(), "m")?;
            }
            ExperimentKind::FullSuite => {}
        }
        for &m in &self.grid.m {
            if m % 2 == 0 {
                return Err(ConfigError::EvenTruncationOrder { m });
            }
        }
        let uses_mc = matches!(
            kind,
            ExperimentKind::Sample | ExperimentKind::Moment | ExperimentKind::FullSuite
        );
        if uses_mc && (self.mc.samples == 0 || self.mc.workers == 0) {
            return Err(ConfigError::DegenerateMc);
        }
        Ok(())
    }
}

/// Seed for a sub-experiment, derived so distinct tags never share streams.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_labels_round_trip() {
        for kind in ExperimentKind::ALL {
            assert_eq!(kind.label().parse::<ExperimentKind>().unwrap(), kind);
        }
        assert!("verify".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let cfg = ExperimentConfig::default_for(ExperimentKind::TheoremVerify);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"grid": {"n": [4]}, "mc": {"samples": 99}}"#).unwrap();
        assert_eq!(cfg.grid.n, vec![4]);
        assert_eq!(cfg.mc.samples, 99);
        assert_eq!(cfg.mc.workers, McSettings::default().workers);
        assert_eq!(cfg.quadrature.nodes, DEFAULT_QUADRATURE_NODES);
        assert!(cfg.kind.is_none());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"grids": {}}"#);
        assert!(r.is_err());
    }

    #[test]
    fn validation_catches_structural_problems() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Moment);
        cfg.grid.kappa.clear();
        assert!(matches!(
            cfg.validate(ExperimentKind::Moment),
            Err(ConfigError::EmptyGrid { which: "kappa" })
        ));

        let mut cfg = ExperimentConfig::default_for(ExperimentKind::TheoremVerify);
        cfg.grid.m = vec![4];
        assert!(matches!(
            cfg.validate(ExperimentKind::TheoremVerify),
            Err(ConfigError::EvenTruncationOrder { m: 4 })
        ));

        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Sample);
        cfg.mc.samples = 0;
        assert!(matches!(cfg.validate(ExperimentKind::Sample), Err(ConfigError::DegenerateMc)));
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        let s = 12345;
        assert_ne!(derive_seed(s, 1), derive_seed(s, 2));
        assert_eq!(derive_seed(s, 7), derive_seed(s, 7));
    }
}
