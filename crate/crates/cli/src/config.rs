use std::path::Path;

use serde::{Deserialize, Serialize};

use dasr_core::adapter::DEFAULT_TOKEN_DIM;
use dasr_core::descriptor::{DescriptorParams, DEFAULT_EDGE_THRESHOLD, DEFAULT_EPSILON};
use dasr_core::diffusion::{DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use dasr_core::sani::DEFAULT_LAMBDA;

/// Settings shared by all subcommands, loadable from a JSON file with
/// `--config`. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub lambda: f64,
    pub epsilon_blur: f64,
    pub sobel_threshold: f64,
    #[serde(rename = "D")]
    pub token_dim: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            epsilon_blur: DEFAULT_EPSILON,
            sobel_threshold: DEFAULT_EDGE_THRESHOLD,
            token_dim: DEFAULT_TOKEN_DIM,
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            seed: 7,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let config: Config =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if self.epsilon_blur <= 0.0 || !self.epsilon_blur.is_finite() {
            return Err(format!("epsilon_blur must be positive, got {}", self.epsilon_blur));
        }
        if !self.sobel_threshold.is_finite() {
            return Err("sobel_threshold must be finite".into());
        }
        if self.token_dim == 0 || self.steps == 0 {
            return Err("D and T must be positive".into());
        }
        Ok(())
    }

    pub fn descriptor_params(&self) -> DescriptorParams {
        DescriptorParams {
            epsilon: self.epsilon_blur,
            edge_threshold: self.sobel_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_files() {
        let c: Config = serde_json::from_str(r#"{"lambda": 0.3, "D": 64}"#).unwrap();
        assert_eq!(c.lambda, 0.3);
        assert_eq!(c.token_dim, 64);
        assert_eq!(c.sobel_threshold, 0.08);
        assert_eq!(Config::default().lambda, 0.6);
        assert_eq!(Config::default().token_dim, 512);
        assert!(serde_json::from_str::<Config>(r#"{"lamda": 0.3}"#).is_err());
    }

    #[test]
    fn validation() {
        let bad = Config {
            lambda: 1.5,
            ..Config::default()
        };
        assert!(bad.validate().is_err());
        assert!(Config::default().validate().is_ok());
    }
}
