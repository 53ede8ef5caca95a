//! The pipeline configuration shared by every subcommand, and the metadata
//! block stamped into each output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augmentation::{AugBounds, FilterRange};
use crate::curation::CurationConfig;
use crate::error::{Error, Result};
use crate::manifest::LabelRange;
use crate::metrics::DEFAULT_T;
use crate::ood::OodConfig;
use crate::sampling::{stream_seed, Stream};

pub const TOOLKIT: &str = "fairset";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub label_range: LabelRange,
    pub curation: CurationSettings,
    pub ood: OodConfig,
    pub augmentation: AugmentationSettings,
    pub metrics: MetricsSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSettings {
    pub q_low: f64,
    pub q_high: f64,
    pub feature_priority: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSettings {
    pub bounds: AugBounds,
    /// Size of the final balanced selection.
    pub budget: usize,
    pub filter: FilterRange,
    /// Feature whose states define the augmentation cells; defaults to the
    /// first curation priority feature.
    pub feature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub t: f64,
    pub features: Vec<String>,
}

impl Default for CurationSettings {
    fn default() -> Self {
        let c = CurationConfig::new(vec!["ethnicity".into(), "gender".into()], 0);
        CurationSettings {
            q_low: c.q_low,
            q_high: c.q_high,
            feature_priority: c.feature_priority,
        }
    }
}

impl Default for AugmentationSettings {
    fn default() -> Self {
        AugmentationSettings {
            bounds: AugBounds::default(),
            budget: 20_000,
            filter: "0.05:1.00".parse().expect("valid default range"),
            feature: None,
        }
    }
}

impl Default for MetricsSettings {
    fn default() -> Self {
        MetricsSettings {
            t: DEFAULT_T,
            features: vec!["ethnicity".into(), "gender".into()],
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_range.min > self.label_range.max {
            return Err(Error::config("label_range.min exceeds label_range.max"));
        }
        self.curation_config().validate()?;
        self.ood.validate()?;
        self.augmentation.bounds.validate()?;
        if self.metrics.t.is_nan() || self.metrics.t <= 0.0 {
            return Err(Error::config(format!(
                "t = {} must be positive",
                self.metrics.t
            )));
        }
        Ok(())
    }

    /// Curation settings with the curation stream's seed.
    pub fn curation_config(&self) -> CurationConfig {
        CurationConfig {
            q_low: self.curation.q_low,
            q_high: self.curation.q_high,
            seed: stream_seed(self.seed, Stream::Curate),
            feature_priority: self.curation.feature_priority.clone(),
        }
    }

    pub fn augment_feature(&self) -> Result<&str> {
        self.augmentation
            .feature
            .as_deref()
            .or(self.curation.feature_priority.first().map(String::as_str))
            .ok_or_else(|| Error::config("no augmentation feature and empty feature_priority"))
    }

    pub fn plan_seed(&self) -> u64 {
        stream_seed(self.seed, Stream::AugmentPlan)
    }

    pub fn sample_seed(&self) -> u64 {
        stream_seed(self.seed, Stream::AugmentSample)
    }

    pub fn meta(&self, command: &str) -> OutputMeta {
        OutputMeta {
            toolkit: TOOLKIT.into(),
            version: VERSION.into(),
            command: command.into(),
            config: self.clone(),
        }
    }
}

/// Provenance block embedded in, or written next to, every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub toolkit: String,
    pub version: String,
    pub command: String,
    pub config: PipelineConfig,
}

impl OutputMeta {
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("meta serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut c = PipelineConfig::default();
        c.seed = 42;
        c.augmentation.filter = "0.00:0.05,0.95:1.00".parse().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"seed": 7, "ood": {"k": 3}, "augmentation": {"budget": 8}}"#)
                .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.ood.k, Some(3));
        assert_eq!(c.ood.shrinkage, OodConfig::default().shrinkage);
        assert_eq!(c.augmentation.budget, 8);
        assert_eq!(c.augmentation.bounds, AugBounds::default());
        assert!(c.validate().is_ok());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn validation_reaches_nested_sections() {
        let mut c = PipelineConfig::default();
        c.curation.q_low = 0.9;
        c.curation.q_high = 0.2;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.metrics.t = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn streams_differ() {
        let c = PipelineConfig::default();
        let seeds = [c.curation_config().seed, c.plan_seed(), c.sample_seed()];
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2] && seeds[0] != seeds[2]);
    }
}
