//! Declarative experiment configuration: a flat, typed key-value file
//! (TOML syntax, no nested tables) with strict unknown-key rejection and
//! per-kind validation. Every experiment kind ships a built-in default
//! configuration; a config file overrides it wholesale.

use std::fmt;
use std::path::Path;

use annilab_core::dynamics::InteractionMode;
use annilab_core::kernels::{KernelTable, DEFAULT_TRUNCATION};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(
        "torus side {side} is below the adequacy rule side >= 12*sqrt(t_max) = {required:.0} \
         for t_max = {t_max}"
    )]
    TorusTooSmall { side: u32, required: f64, t_max: f64 },
    #[error(
        "normal-kernel stencil at t_max = {t_max} has radius {radius}, which does not fit \
         half the torus side {side}; increase the side to at least {required}"
    )]
    KernelDoesNotFit {
        t_max: f64,
        radius: i64,
        side: u32,
        required: i64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    DensityScan,
    Theorem1,
    Theorem3,
    Microscale,
    Segregation,
    OracleCheck,
    KernelScan,
    GaussianCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::DensityScan => "density-scan",
            ExperimentKind::Theorem1 => "theorem1",
            ExperimentKind::Theorem3 => "theorem3",
            ExperimentKind::Microscale => "microscale",
            ExperimentKind::Segregation => "segregation",
            ExperimentKind::OracleCheck => "oracle-check",
            ExperimentKind::KernelScan => "kernel-scan",
            ExperimentKind::GaussianCheck => "gaussian-check",
        }
    }

    /// Kinds that run the event engine on a configured torus.
    pub fn simulates(self) -> bool {
        matches!(
            self,
            ExperimentKind::Simulate
                | ExperimentKind::DensityScan
                | ExperimentKind::Theorem1
                | ExperimentKind::Theorem3
                | ExperimentKind::Microscale
                | ExperimentKind::Segregation
        )
    }

    /// Kinds whose analysis convolves the initial field with the normal
    /// kernel at the final time.
    pub fn convolves(self) -> bool {
        matches!(
            self,
            ExperimentKind::Theorem1 | ExperimentKind::Theorem3 | ExperimentKind::Microscale
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    TwoTypeAnnihilate,
    SingleTypeAnnihilate,
    SingleTypeCoalesce,
    Free,
}

impl ModeName {
    pub fn to_mode(self) -> InteractionMode {
        match self {
            ModeName::TwoTypeAnnihilate => InteractionMode::TwoTypeAnnihilate,
            ModeName::SingleTypeAnnihilate => InteractionMode::SingleTypeAnnihilate,
            ModeName::SingleTypeCoalesce => InteractionMode::SingleTypeCoalesce,
            ModeName::Free => InteractionMode::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    /// Independent Poisson counts of both types with per-site cancellation.
    Poisson,
    /// One particle at every site (single-type systems).
    Full,
}

/// Flat experiment description. Unknown keys in a config file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// 0 means: take `ANNILAB_THREADS` if set, otherwise all cores.
    pub threads: usize,
    pub out_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sides: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    /// Block `(lower, upper]` in diffusively scaled coordinates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rect_lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rect_upper: Option<Vec<f64>>,
    /// Tile side for segregation scans, in sites.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_side: Option<f64>,
    /// Cell side for the microscopic window, in sites.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_side: Option<usize>,
    /// Reference-sample count for two-sample tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_samples: Option<usize>,
    /// Kernel truncation threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
}

impl ExperimentConfig {
    /// Built-in defaults per kind; these are the parameter sets the
    /// acceptance suite runs.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            seed: 9000,
            threads: 0,
            out_dir: format!("runs/{}", kind.name()),
            dim: None,
            sides: None,
            mode: None,
            init: None,
            lambda: None,
            times: None,
            replicas: None,
            rect_lower: None,
            rect_upper: None,
            box_side: None,
            cell_side: None,
            reference_samples: None,
            truncation: None,
        };
        match kind {
            ExperimentKind::Simulate => Self {
                dim: Some(1),
                sides: Some(vec![256]),
                mode: Some(ModeName::TwoTypeAnnihilate),
                init: Some(InitName::Poisson),
                lambda: Some(1.0),
                times: Some(vec![0.0, 4.0, 16.0]),
                replicas: Some(1),
                seed: 9000,
                ..base
            },
            ExperimentKind::DensityScan => Self {
                dim: Some(1),
                sides: Some(vec![65536]),
                mode: Some(ModeName::TwoTypeAnnihilate),
                init: Some(InitName::Poisson),
                lambda: Some(1.0),
                times: Some(vec![
                    16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0,
                ]),
                replicas: Some(50),
                seed: 9001,
                ..base
            },
            ExperimentKind::Theorem1 => Self {
                dim: Some(1),
                sides: Some(vec![512]),
                mode: Some(ModeName::TwoTypeAnnihilate),
                init: Some(InitName::Poisson),
                lambda: Some(1.0),
                times: Some(vec![1024.0]),
                replicas: Some(500),
                rect_lower: Some(vec![0.0]),
                rect_upper: Some(vec![1.0]),
                reference_samples: Some(2000),
                seed: 9008,
                ..base
            },
            ExperimentKind::Theorem3 => Self {
                dim: Some(1),
                sides: Some(vec![512]),
                mode: Some(ModeName::TwoTypeAnnihilate),
                init: Some(InitName::Poisson),
                lambda: Some(1.0),
                times: Some(vec![1024.0]),
                replicas: Some(500),
                rect_lower: Some(vec![0.0]),
                rect_upper: Some(vec![1.0]),
                seed: 9009,
                ..base
            },
            ExperimentKind::Microscale => Self {
                dim: Some(1),
                sides: Some(vec![1024]),
                mode: Some(ModeName::TwoTypeAnnihilate),
                init: Some(InitName::Poisson),
                lambda: Some(1.0),
                times: Some(vec![4096.0]),
                replicas: Some(200),
                cell_side: Some(4),
                seed: 9011,
                ..base
            },
            ExperimentKind::Segregation => Self {
                dim: Some(1),
                sides: Some(vec![512]),
                mode: Some(ModeName::TwoTypeAnnihilate),
                init: Some(InitName::Poisson),
                lambda: Some(1.0),
                times: Some(vec![16.0, 64.0, 256.0, 1024.0]),
                replicas: Some(30),
                // Fixed tile side: the final time's diffusive quarter-scale,
                // so the relative tile scale shrinks with t.
                box_side: Some(8.0),
                seed: 9010,
                ..base
            },
            ExperimentKind::OracleCheck => Self {
                replicas: Some(100_000),
                times: Some(vec![0.25, 0.5, 1.0, 2.0]),
                seed: 9105,
                ..base
            },
            ExperimentKind::KernelScan => Self {
                dim: Some(1),
                times: Some(vec![16.0, 64.0, 256.0]),
                seed: 9006,
                ..base
            },
            ExperimentKind::GaussianCheck => Self {
                replicas: Some(100_000),
                seed: 9007,
                ..base
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn require<T: Copy>(
        value: Option<T>,
        field: &'static str,
    ) -> Result<T, ConfigError> {
        value.ok_or(ConfigError::Invalid {
            field,
            reason: "required for this experiment kind".into(),
        })
    }

    pub fn kernel_truncation(&self) -> f64 {
        self.truncation.unwrap_or(DEFAULT_TRUNCATION)
    }

    /// Validates the configuration for its kind; called before any compute.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(trunc) = self.truncation {
            if !(trunc > 0.0 && trunc < 1.0) {
                return Err(ConfigError::Invalid {
                    field: "truncation",
                    reason: format!("must lie in (0,1), got {trunc}"),
                });
            }
        }
        if let Some(times) = &self.times {
            if times.is_empty() {
                return Err(ConfigError::Invalid {
                    field: "times",
                    reason: "must not be empty".into(),
                });
            }
            let mut prev = f64::NEG_INFINITY;
            for &t in times {
                if !(t >= 0.0) || t <= prev {
                    return Err(ConfigError::Invalid {
                        field: "times",
                        reason: "must be non-negative and strictly increasing".into(),
                    });
                }
                prev = t;
            }
        }
        if self.kind.simulates() {
            let dim = Self::require(self.dim, "dim")?;
            if dim == 0 || dim > 3 {
                return Err(ConfigError::Invalid {
                    field: "dim",
                    reason: format!("must be 1..=3, got {dim}"),
                });
            }
            let sides = self.sides.as_ref().ok_or(ConfigError::Invalid {
                field: "sides",
                reason: "required for this experiment kind".into(),
            })?;
            if sides.len() != dim {
                return Err(ConfigError::Invalid {
                    field: "sides",
                    reason: format!("expected {dim} entries, got {}", sides.len()),
                });
            }
            if sides.iter().any(|&l| l < 2) {
                return Err(ConfigError::Invalid {
                    field: "sides",
                    reason: "every side must be at least 2".into(),
                });
            }
            let mode = Self::require(self.mode, "mode")?;
            let init = Self::require(self.init, "init")?;
            match init {
                InitName::Poisson => {
                    let lambda = Self::require(self.lambda, "lambda")?;
                    if !(lambda > 0.0) {
                        return Err(ConfigError::Invalid {
                            field: "lambda",
                            reason: format!("must be positive, got {lambda}"),
                        });
                    }
                    if matches!(
                        mode,
                        ModeName::SingleTypeAnnihilate | ModeName::SingleTypeCoalesce
                    ) {
                        return Err(ConfigError::Invalid {
                            field: "init",
                            reason: "poisson two-type start is incompatible with \
                                     single-type modes"
                                .into(),
                        });
                    }
                }
                InitName::Full => {
                    if mode == ModeName::TwoTypeAnnihilate {
                        return Err(ConfigError::Invalid {
                            field: "init",
                            reason: "full single-type start is incompatible with the \
                                     two-type mode"
                                .into(),
                        });
                    }
                }
            }
            let times = self.times.as_ref().ok_or(ConfigError::Invalid {
                field: "times",
                reason: "required for this experiment kind".into(),
            })?;
            let t_max = *times.last().expect("non-empty");
            let replicas = Self::require(self.replicas, "replicas")?;
            if replicas == 0 {
                return Err(ConfigError::Invalid {
                    field: "replicas",
                    reason: "must be at least 1".into(),
                });
            }
            // Torus adequacy: side >= 12 sqrt(t_max) keeps the wrapped kernel
            // tail below 1e-9 at all measured times.
            if t_max > 0.0 {
                let required = 12.0 * t_max.sqrt();
                let min_side = *sides.iter().min().expect("non-empty");
                if f64::from(min_side) < required {
                    return Err(ConfigError::TorusTooSmall {
                        side: min_side,
                        required,
                        t_max,
                    });
                }
            }
            if self.kind.convolves() && t_max > 0.0 {
                let table = KernelTable::normal(1, t_max, self.kernel_truncation())
                    .expect("validated time and truncation");
                let radius = table.radius()[0];
                let min_side = *sides.iter().min().expect("non-empty");
                if 2 * radius + 1 > i64::from(min_side) {
                    return Err(ConfigError::KernelDoesNotFit {
                        t_max,
                        radius,
                        side: min_side,
                        required: 2 * radius + 1,
                    });
                }
            }
        }
        match self.kind {
            ExperimentKind::Theorem1 | ExperimentKind::Theorem3 => {
                let dim = self.dim.unwrap_or(1);
                let lower = self.rect_lower.as_ref().ok_or(ConfigError::Invalid {
                    field: "rect_lower",
                    reason: "required".into(),
                })?;
                let upper = self.rect_upper.as_ref().ok_or(ConfigError::Invalid {
                    field: "rect_upper",
                    reason: "required".into(),
                })?;
                if lower.len() != dim || upper.len() != dim {
                    return Err(ConfigError::Invalid {
                        field: "rect_lower",
                        reason: format!("block bounds must have {dim} entries"),
                    });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(ConfigError::Invalid {
                        field: "rect_upper",
                        reason: "upper must exceed lower in every dimension".into(),
                    });
                }
                let need = if self.kind == ExperimentKind::Theorem1 {
                    300
                } else {
                    30
                };
                if self.replicas.unwrap_or(0) < need {
                    return Err(ConfigError::Invalid {
                        field: "replicas",
                        reason: format!("this experiment needs at least {need} replicas"),
                    });
                }
                if self.kind == ExperimentKind::Theorem1
                    && self.reference_samples.unwrap_or(0) < 300
                {
                    return Err(ConfigError::Invalid {
                        field: "reference_samples",
                        reason: "need at least 300 reference samples".into(),
                    });
                }
            }
            ExperimentKind::Microscale => {
                let cell = Self::require(self.cell_side, "cell_side")?;
                if cell == 0 {
                    return Err(ConfigError::Invalid {
                        field: "cell_side",
                        reason: "must be positive".into(),
                    });
                }
                let t_max = *self.times.as_ref().expect("validated").last().unwrap();
                let window = 2.0 * t_max.powf(0.25);
                if window < 4.0 * cell as f64 {
                    return Err(ConfigError::Invalid {
                        field: "cell_side",
                        reason: format!(
                            "window width 2 t^{{1/4}} = {window:.1} sites must hold at \
                             least four cells of side {cell}"
                        ),
                    });
                }
                if self.replicas.unwrap_or(0) < 30 {
                    return Err(ConfigError::Invalid {
                        field: "replicas",
                        reason: "microscale needs at least 30 replicas".into(),
                    });
                }
            }
            ExperimentKind::KernelScan => {
                let times = self.times.as_ref().ok_or(ConfigError::Invalid {
                    field: "times",
                    reason: "required".into(),
                })?;
                if times.iter().any(|&t| t < 4.0) {
                    return Err(ConfigError::Invalid {
                        field: "times",
                        reason: "gap scan times must be at least 4".into(),
                    });
                }
                let dim = self.dim.unwrap_or(1);
                if dim == 0 || dim > 2 {
                    return Err(ConfigError::Invalid {
                        field: "dim",
                        reason: "gap scan supports dimensions 1 and 2".into(),
                    });
                }
            }
            ExperimentKind::OracleCheck | ExperimentKind::GaussianCheck
                if self.replicas.unwrap_or(0) < 100 =>
            {
                return Err(ConfigError::Invalid {
                    field: "replicas",
                    reason: "need at least 100 replicas".into(),
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Resolved worker count: config wins, then `ANNILAB_THREADS`, then all
    /// available cores.
    pub fn resolved_threads(&self) -> usize {
        if self.threads > 0 {
            return self.threads;
        }
        if let Ok(v) = std::env::var("ANNILAB_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n > 0 {
                    return n;
                }
            }
        }
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_kind() {
        for kind in [
            ExperimentKind::Simulate,
            ExperimentKind::DensityScan,
            ExperimentKind::Theorem1,
            ExperimentKind::Theorem3,
            ExperimentKind::Microscale,
            ExperimentKind::Segregation,
            ExperimentKind::OracleCheck,
            ExperimentKind::KernelScan,
            ExperimentKind::GaussianCheck,
        ] {
            let cfg = ExperimentConfig::default_for(kind);
            cfg.validate().unwrap_or_else(|e| panic!("{kind}: {e}"));
        }
    }

    #[test]
    fn round_trips_through_toml() {
        for kind in [
            ExperimentKind::DensityScan,
            ExperimentKind::Theorem1,
            ExperimentKind::OracleCheck,
        ] {
            let cfg = ExperimentConfig::default_for(kind);
            let text = cfg.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "kind = \"density-scan\"\nseed = 1\nthreads = 0\nout_dir = \"x\"\nbogus = 3\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn adequacy_rule_is_enforced() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::DensityScan);
        cfg.sides = Some(vec![512]);
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ConfigError::TorusTooSmall { .. }), "{err}");
    }

    #[test]
    fn kernel_fit_is_enforced_for_convolving_kinds() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::Theorem1);
        cfg.sides = Some(vec![384]); // passes adequacy (12*32), fails the stencil fit
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ConfigError::KernelDoesNotFit { .. }), "{err}");
    }

    #[test]
    fn init_mode_compatibility() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::DensityScan);
        cfg.mode = Some(ModeName::SingleTypeCoalesce);
        assert!(cfg.validate().is_err());
        cfg.init = Some(InitName::Full);
        cfg.lambda = None;
        cfg.validate().unwrap();
    }

    #[test]
    fn unsorted_times_rejected() {
        let mut cfg = ExperimentConfig::default_for(ExperimentKind::DensityScan);
        cfg.times = Some(vec![16.0, 8.0]);
        assert!(cfg.validate().is_err());
    }
}
