//! Run configuration: a TOML file merged with command-line overrides.

use ppgmm::data::PreprocessMode;
use ppgmm::gmm::{CovarianceModel, EmOptions};
use ppgmm::negentropy::{EstimatorKind, EstimatorSpec, DEFAULT_MC_SAMPLES};
use ppgmm::GaConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSettings {
    pub g_min: usize,
    pub g_max: usize,
    pub models: Vec<CovarianceModel>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GmmSettings {
    fn default() -> Self {
        let em = EmOptions::default();
        Self {
            g_min: 1,
            g_max: 9,
            models: CovarianceModel::ALL.to_vec(),
            max_iter: em.max_iter,
            tol: em.tol,
        }
    }
}

impl GmmSettings {
    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

/// Everything a command needs besides its output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub has_header: bool,
    /// Label column; when left at the default it is used only if present.
    pub label_column: Option<String>,
    pub preprocess: PreprocessMode,
    pub d: usize,
    pub estimator: EstimatorKind,
    pub mc_samples: usize,
    /// Seed of Monte Carlo entropy estimates; defaults to `seed`.
    pub mc_seed: Option<u64>,
    /// Put the PCA basis into the initial GA population.
    pub pca_init: bool,
    pub gmm: GmmSettings,
    /// `ga.seed` is ignored: the GA always uses `seed`.
    pub ga: GaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            input: None,
            has_header: true,
            label_column: None,
            preprocess: PreprocessMode::Center,
            d: 2,
            estimator: EstimatorKind::Ut,
            mc_samples: DEFAULT_MC_SAMPLES,
            mc_seed: None,
            pca_init: false,
            gmm: GmmSettings::default(),
            ga: GaConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("a seed is required (--seed or `seed` in the config file)".into()))
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Usage("an input CSV is required (--input or `input` in the config file)".into()))
    }

    pub fn estimator_spec(&self) -> Result<EstimatorSpec, CliError> {
        Ok(EstimatorSpec {
            kind: self.estimator,
            mc_samples: self.mc_samples,
            mc_seed: match self.mc_seed {
                Some(s) => s,
                None => self.seed()?,
            },
        })
    }

    pub fn ga_config(&self) -> Result<GaConfig, CliError> {
        Ok(GaConfig {
            seed: self.seed()?,
            ..self.ga.clone()
        })
    }

    /// SHA-256 of the command name and the resolved configuration.
    pub fn hash(&self, command: &str) -> String {
        let text = serde_json::to_string(&(command, self)).expect("configuration serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_with_partial_tables() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            d = 1
            estimator = "SOTE"
            [gmm]
            g_max = 4
            models = ["EII", "VVI"]
            [ga]
            pop_size = 50
            mutation_scope = "per_gene"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.gmm.g_min, 1);
        assert_eq!(cfg.gmm.models, vec![CovarianceModel::EII, CovarianceModel::VVI]);
        assert_eq!(cfg.ga.pop_size, 50);
        assert_eq!(cfg.ga.p_crossover, 0.8);
        assert_eq!(cfg.estimator, EstimatorKind::Sote);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
    }

    #[test]
    fn hash_depends_on_content() {
        let a = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        let b = RunConfig {
            seed: Some(2),
            ..RunConfig::default()
        };
        assert_eq!(a.hash("fit"), a.clone().hash("fit"));
        assert_ne!(a.hash("fit"), b.hash("fit"));
        assert_ne!(a.hash("fit"), a.hash("pursue"));
    }
}
