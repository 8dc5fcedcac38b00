//! The TOML run configuration.
//!
//! Every section is optional and falls back to the desk-scale defaults:
//!
//! ```toml
//! seed = 7
//! scorer = "ae"
//!
//! [scenario]
//! kind = "gradual"
//! ramp = 0.005
//!
//! [cpm]
//! alpha = 0.05
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoencoderConfig;
use crate::cpm::CpmConfig;
use crate::dataset::{EmptyStratumPolicy, UpsampleSpec};
use crate::embedding::SyntheticCorpusSpec;
use crate::error::{Error, Result};
use crate::harness::{ConfidenceConfig, PipelineConfig, ScenarioSpec, ScorerKind, SuiteSpec};
use crate::interpret::ClusteringConfig;
use crate::stream::DetectorConfig;

/// Where requests come from. Without both paths a synthetic corpus is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub synthetic: SyntheticCorpusSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub target_size: usize,
    /// Length distribution file; the bundled reference when absent.
    pub lengths: Option<PathBuf>,
    pub empty_stratum: EmptyStratumPolicy,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            target_size: UpsampleSpec::DESK_TARGET_SIZE,
            lengths: None,
            empty_stratum: EmptyStratumPolicy::Redistribute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub n_runs: usize,
    pub holdout_fraction: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let s = SuiteSpec::default();
        Self {
            n_runs: s.n_runs,
            holdout_fraction: s.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed for every derived random stream.
    pub seed: u64,
    pub scorer: ScorerKind,
    pub data: DataConfig,
    pub dataset: DatasetConfig,
    pub scenario: ScenarioSpec,
    pub suite: SuiteConfig,
    pub detector: DetectorConfig,
    pub cpm: CpmConfig,
    pub autoencoder: AutoencoderConfig,
    pub clustering: ClusteringConfig,
    pub confidence: ConfidenceConfig,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            seed: 0,
            scorer: p.scorer,
            data: DataConfig::default(),
            dataset: DatasetConfig::default(),
            scenario: ScenarioSpec::default(),
            suite: SuiteConfig::default(),
            detector: p.detector,
            cpm: p.cpm,
            autoencoder: p.autoencoder,
            clustering: p.clustering,
            confidence: p.confidence,
        }
    }
}

impl Config {
    /// Parses a TOML document layered over [`Config::default`]: a partial
    /// section keeps the desk-scale values of the keys it leaves out.
    pub fn from_toml(text: &str) -> Result<Self> {
        let bad = |e: toml::de::Error| Error::InvalidConfig(e.message().to_string());
        let user: toml::Table = toml::from_str(text).map_err(bad)?;
        let mut base: toml::Table = toml::from_str(&Self::default().to_toml()).map_err(bad)?;
        merge(&mut base, user);
        base.try_into().map_err(bad)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            scorer: self.scorer,
            detector: DetectorConfig {
                batch_size: self.scenario.batch_size,
                ..self.detector.clone()
            },
            cpm: self.cpm.clone(),
            autoencoder: self.autoencoder.clone(),
            clustering: self.clustering.clone(),
            confidence: self.confidence.clone(),
        }
    }

    pub fn suite_spec(&self) -> SuiteSpec {
        SuiteSpec {
            n_runs: self.suite.n_runs,
            master_seed: self.seed,
            holdout_fraction: self.suite.holdout_fraction,
            scenario: ScenarioSpec {
                seed: self.seed,
                ..self.scenario.clone()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synthetic.validate()?;
        self.scenario.validate()?;
        self.pipeline().validate()?;
        if self.suite.n_runs == 0 {
            return Err(Error::InvalidConfig("suite.n_runs must be ≥ 1".into()));
        }
        if self.data.corpus.is_some() != self.data.embeddings.is_some() {
            return Err(Error::InvalidConfig(
                "data.corpus and data.embeddings must be given together".into(),
            ));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
