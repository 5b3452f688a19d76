//! Versioned run configuration.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use pcp_core::data::GroupScheme;
use pcp_core::functionals::StatisticKind;
use pcp_core::inference::{DEFAULT_DRAWS, DEFAULT_LEVELS};
use pcp_core::learners::hyperopt::{HyperGrid, TreeGrid, TreeSearch};
use pcp_core::learners::{BoostConfig, ForestConfig, LearnerConfig, NetworkConfig};
use pcp_core::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerArg {
    #[default]
    Network,
    Forest,
    Boosted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticArg {
    Covariance,
    Correlation,
}

impl From<StatisticArg> for StatisticKind {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Covariance => StatisticKind::Covariance,
            StatisticArg::Correlation => StatisticKind::Correlation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the fingerprint: where results go does not change them.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub learner: LearnerArg,
    /// Both statistics when absent.
    #[serde(default)]
    pub statistic: Option<StatisticArg>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub boosted: BoostConfig,
    #[serde(default)]
    pub hyperopt: HyperoptSettings,
    #[serde(default)]
    pub estimate: EstimateSettings,
    #[serde(default)]
    pub intersection: IntersectionSettings,
    #[serde(default)]
    pub sorted: SortedSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV of records; simulated from the DGP when absent.
    pub dataset: Option<PathBuf>,
    /// Schema TOML for the CSV; the default insurance schema when absent.
    pub schema: Option<PathBuf>,
    /// DGP TOML; the built-in insurance DGP when absent.
    pub dgp: Option<PathBuf>,
    /// Records simulated when no dataset is given.
    pub n: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset: None,
            schema: None,
            dgp: None,
            n: 6333,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperoptSettings {
    pub grid: HyperGrid,
    /// Train, validation and test shares.
    pub split: [f64; 3],
    pub forest_grid: TreeGrid,
    pub boosted_grid: TreeGrid,
    pub tree_search: TreeSearch,
}

impl Default for HyperoptSettings {
    fn default() -> Self {
        HyperoptSettings {
            grid: HyperGrid::default(),
            split: [0.70, 0.15, 0.15],
            forest_grid: TreeGrid::forest_default(),
            boosted_grid: TreeGrid::boosted_default(),
            tree_search: TreeSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSettings {
    pub folds: usize,
    pub density_points: usize,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        EstimateSettings {
            folds: 5,
            density_points: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectionSettings {
    pub schemes: Vec<GroupScheme>,
    pub levels: Vec<f64>,
    pub draws: usize,
}

impl Default for IntersectionSettings {
    fn default() -> Self {
        IntersectionSettings {
            schemes: vec![
                GroupScheme::ByModality {
                    feature: "car_age".into(),
                },
                GroupScheme::ByQuartile {
                    feature: "car_age".into(),
                },
            ],
            levels: DEFAULT_LEVELS.to_vec(),
            draws: DEFAULT_DRAWS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    #[default]
    FullGrid,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SortedSettings {
    pub groups: usize,
    pub splits: usize,
    pub main_fraction: f64,
    pub selection: SelectionMode,
    pub max_retries: usize,
}

impl Default for SortedSettings {
    fn default() -> Self {
        SortedSettings {
            groups: 4,
            splits: 101,
            main_fraction: 0.5,
            selection: SelectionMode::FullGrid,
            max_retries: 10,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            out: None,
            learner: LearnerArg::Network,
            statistic: None,
            data: DataConfig::default(),
            network: NetworkConfig::default(),
            forest: ForestConfig::default(),
            boosted: BoostConfig::default(),
            hyperopt: HyperoptSettings::default(),
            estimate: EstimateSettings::default(),
            intersection: IntersectionSettings::default(),
            sorted: SortedSettings::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative data paths are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.dataset, &mut cfg.data.schema, &mut cfg.data.dgp]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut cfg.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        for p in [&self.data.dataset, &self.data.schema, &self.data.dgp]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::Config(format!("file not found: {}", p.display())));
            }
        }
        if self.data.schema.is_some() && self.data.dataset.is_none() {
            return Err(Error::Config("data.schema is given without data.dataset".into()));
        }
        if self.data.dataset.is_none() && self.data.n == 0 {
            return Err(Error::Config("data.n must be positive".into()));
        }
        let t = &self.intersection;
        if t.levels.is_empty() || t.levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Config(format!(
                "test levels must be nonempty and lie in (0,1): {:?}",
                t.levels
            )));
        }
        if t.draws == 0 {
            return Err(Error::Config("intersection.draws must be positive".into()));
        }
        if t.schemes.is_empty() {
            return Err(Error::Config("intersection.schemes is empty".into()));
        }
        if self.estimate.folds < 2 {
            return Err(Error::Config("estimate.folds must be at least 2".into()));
        }
        if self.estimate.density_points < 2 {
            return Err(Error::Config("estimate.density_points must be at least 2".into()));
        }
        let [a, b, c] = self.hyperopt.split;
        pcp_core::data::SplitPlan::new(a, b, c, self.seed)?;
        for l in [LearnerArg::Network, LearnerArg::Forest, LearnerArg::Boosted] {
            self.learner_config(l).validate()?;
        }
        Ok(())
    }

    /// The configured learner of `kind`, seeded from the run seed.
    pub fn learner_config(&self, kind: LearnerArg) -> LearnerConfig {
        let seed = pcp_core::rng::derive_seed(self.seed, pcp_core::rng::tags::INIT, 0);
        match kind {
            LearnerArg::Network => LearnerConfig::Network(self.network.clone()),
            LearnerArg::Forest => LearnerConfig::Forest(self.forest.clone()),
            LearnerArg::Boosted => LearnerConfig::Boosted(self.boosted.clone()),
        }
        .with_seed(seed)
    }

    pub fn statistics(&self) -> Vec<StatisticKind> {
        match self.statistic {
            Some(s) => vec![s.into()],
            None => vec![StatisticKind::Covariance, StatisticKind::Correlation],
        }
    }

    pub fn split_plan(&self) -> pcp_core::data::SplitPlan {
        let [train, validation, test] = self.hyperopt.split;
        pcp_core::data::SplitPlan {
            train,
            validation,
            test,
            seed: pcp_core::rng::derive_seed(self.seed, pcp_core::rng::tags::SPLIT, 0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = toml::from_str("version = 1\nseed = 4\n[network]\ndepth = 0\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.network.depth, 0);
        assert_eq!(cfg.network.width, NetworkConfig::default().width);
        assert_eq!(cfg.intersection.levels, vec![0.01, 0.05, 0.10]);
    }

    #[test]
    fn rejects_bad_versions_levels_and_unknown_keys() {
        let mut cfg = RunConfig::default();
        cfg.version = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.intersection.levels = vec![0.05, 1.0];
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<RunConfig>("version = 1\nsede = 3\n").is_err());
    }

    #[test]
    fn missing_paths_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.data.dataset = Some("/nonexistent/data.csv".into());
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
