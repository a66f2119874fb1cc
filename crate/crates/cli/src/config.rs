//! Simulation config file: flat TOML, unknown keys rejected.
//!
//! ```toml
//! n_subjects = [64, 128, 256]
//! d = 1
//! beta0 = 4.0
//! beta = [2.0]
//! beta_t = 1.0
//! link = "expit"
//! designs = ["bcrd", "block:8", "pm"]
//! estimators = ["risk_difference", "log_odds_ratio", "logistic"]
//! n_sim = 100000
//! seed = 1
//! ```
//!
//! With `data = "trial.csv"` (columns `id,x1,…,xd,y`) the run is a
//! parametric bootstrap: `beta0`/`beta` default to a logistic fit of `y` on
//! the covariates, `beta_t` is the injected effect, and each entry of
//! `n_subjects` below the data size is a subsample size.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pairdesign::estimators::{Link, LogisticModelSpec};
use pairdesign::simulation::{DesignSpec, EstimatorKind, SimConfig};
use serde::Deserialize;

fn default_estimators() -> Vec<String> {
    vec!["risk_difference".into()]
}

fn default_link() -> String {
    "expit".into()
}

const fn default_n_sim() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub n_subjects: Vec<usize>,
    pub d: Option<usize>,
    pub beta0: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub beta_t: f64,
    #[serde(default = "default_link")]
    pub link: String,
    pub designs: Vec<String>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
    #[serde(default = "default_n_sim")]
    pub n_sim: usize,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
}

impl SimFile {
    pub fn parse(text: &str) -> Result<Self> {
        // toml names the offending key in its message
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(data) = &cfg.data {
            if data.is_relative() {
                cfg.data = Some(path.parent().unwrap_or(Path::new(".")).join(data));
            }
        }
        Ok(cfg)
    }

    pub fn designs(&self) -> Result<Vec<DesignSpec>> {
        Ok(self.designs.iter().map(|s| s.parse()).collect::<pairdesign::Result<_>>()?)
    }

    pub fn estimators(&self) -> Result<Vec<EstimatorKind>> {
        Ok(self.estimators.iter().map(|s| s.parse()).collect::<pairdesign::Result<_>>()?)
    }

    pub fn link(&self) -> Result<Link> {
        Ok(self.link.parse()?)
    }

    /// Model for synthetic runs; requires `d`, `beta0` and `beta`.
    pub fn synthetic_model(&self) -> Result<(usize, LogisticModelSpec)> {
        let (Some(d), Some(beta0), Some(beta)) = (self.d, self.beta0, self.beta.clone()) else {
            bail!("synthetic runs need d, beta0 and beta");
        };
        if beta.len() != d {
            bail!("beta has {} entries but d = {d}", beta.len());
        }
        Ok((d, LogisticModelSpec { beta0, beta, beta_t: self.beta_t, link: self.link()? }))
    }

    /// One core config per sample size.
    pub fn sim_configs(&self, d: usize, model: &LogisticModelSpec, seed: u64) -> Result<Vec<SimConfig>> {
        if self.n_subjects.is_empty() {
            bail!("n_subjects must list at least one sample size");
        }
        let designs = self.designs()?;
        let estimators = self.estimators()?;
        let configs: Vec<SimConfig> = self
            .n_subjects
            .iter()
            .map(|&n| SimConfig {
                n_subjects: n,
                d,
                designs: designs.clone(),
                model: model.clone(),
                n_sim: self.n_sim,
                seed,
                estimators: estimators.clone(),
            })
            .collect();
        for c in &configs {
            c.validate()?;
        }
        Ok(configs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
n_subjects = [64]
d = 1
beta0 = 4.0
beta = [2.0]
beta_t = 1.0
designs = ["bcrd", "block:8", "pm"]
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = SimFile::parse(BASE).unwrap();
        assert_eq!(cfg.n_sim, 100_000);
        assert_eq!(cfg.estimators, vec!["risk_difference"]);
        assert_eq!(cfg.link().unwrap(), Link::Expit);
        let (d, model) = cfg.synthetic_model().unwrap();
        assert_eq!(d, 1);
        assert_eq!(model.beta, vec![2.0]);
        assert_eq!(cfg.sim_configs(d, &model, 5).unwrap()[0].designs[1], DesignSpec::Blocked(8));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = SimFile::parse(&format!("{BASE}nsim = 10\n")).unwrap_err();
        assert!(format!("{err:#}").contains("nsim"), "{err:#}");
    }

    #[test]
    fn bad_values_are_rejected() {
        let cfg = SimFile::parse(&BASE.replace("\"pm\"", "\"pairs\"")).unwrap();
        assert!(cfg.designs().is_err());
        let cfg = SimFile::parse(&format!("{BASE}link = \"tanh\"\n")).unwrap();
        assert!(cfg.link().is_err());
        let cfg = SimFile::parse(&BASE.replace("beta = [2.0]", "beta = [2.0, 1.0]")).unwrap();
        assert!(cfg.synthetic_model().is_err());
    }
}
