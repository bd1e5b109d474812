use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aitree::DEFAULT_MAX_GRID;
use crate::error::{Error, Result};
use crate::hybrid::{CostModel, DEFAULT_IO_MS_PER_LEAF, DEFAULT_TAU};
use crate::learn::forest::DEFAULT_TREES;
use crate::rtree::RTreeConfig;
use crate::workload::{CsvOptions, PointDistribution, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(flatten)]
        options: CsvOptions,
    },
    Synthetic {
        count: usize,
        distribution: PointDistribution,
    },
}

/// Every knob of an end-to-end run. `seed` feeds every stochastic stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub dataset: DatasetSource,
    pub max_entries: usize,
    /// Defaults to `max_entries / 2`.
    pub min_entries: Option<usize>,
    pub workload: WorkloadSpec,
    pub tau: f64,
    pub max_grid: usize,
    pub io_ms_per_leaf: f64,
    pub forest_trees: usize,
    pub train_union: bool,
    pub repetitions: usize,
    pub serial: bool,
    /// Also compare every answer against a linear scan of all points.
    pub oracle: bool,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic {
                count: 100_000,
                distribution: PointDistribution::GaussianClusters { clusters: 4 },
            },
            max_entries: 200,
            min_entries: None,
            workload: WorkloadSpec::default(),
            tau: DEFAULT_TAU,
            max_grid: DEFAULT_MAX_GRID,
            io_ms_per_leaf: DEFAULT_IO_MS_PER_LEAF,
            forest_trees: DEFAULT_TREES,
            train_union: false,
            repetitions: 3,
            serial: false,
            oracle: false,
            out_dir: PathBuf::from("out"),
            seed: 42,
        }
    }
}

/// Stage tags for [`BenchConfig::derive_seed`].
#[derive(Debug, Clone, Copy)]
pub enum SeedStage {
    Dataset = 1,
    Workload = 2,
    RouterSplit = 3,
    Forest = 4,
}

impl BenchConfig {
    pub fn rtree_config(&self) -> Result<RTreeConfig> {
        RTreeConfig::new(
            self.max_entries,
            self.min_entries.unwrap_or(self.max_entries / 2),
        )
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        CostModel::new(self.io_ms_per_leaf)
    }

    /// SplitMix64 of the run seed mixed with a stage tag.
    pub fn derive_seed(&self, stage: SeedStage) -> u64 {
        let mut z = self
            .seed
            .wrapping_add((stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn workload_spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            rng_seed: self.derive_seed(SeedStage::Workload),
            ..self.workload.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rtree_config()?;
        self.cost_model()?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau {} not in (0, 1)", self.tau)));
        }
        if self.max_grid < 2 {
            return Err(Error::Config("max grid must be at least 2".into()));
        }
        if self.repetitions == 0 || self.forest_trees == 0 {
            return Err(Error::Config(
                "repetitions and forest trees must be positive".into(),
            ));
        }
        if let DatasetSource::Synthetic { count: 0, .. } = self.dataset {
            return Err(Error::Config(
                "synthetic dataset needs at least one point".into(),
            ));
        }
        Ok(())
    }

    /// Overlays a TOML file on top of `self`: keys present in the file win.
    pub fn overlay_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let file: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
        let mut base = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, file);
        base.try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                // A different dataset kind replaces the whole table.
                if b.get("kind").is_some()
                    && o.get("kind").is_some_and(|ok| Some(ok) != b.get("kind"))
                {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_values_override_flags() {
        let flags = BenchConfig {
            max_entries: 400,
            seed: 1,
            ..BenchConfig::default()
        };
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seed = 9\ntau = 0.5\n[workload]\nquery_count = 50\n[dataset]\nkind = \"synthetic\"\ncount = 1000\ndistribution = {{ kind = \"uniform\" }}").unwrap();
        let cfg = flags.overlay_file(f.path()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.tau, 0.5);
        assert_eq!(cfg.max_entries, 400);
        assert_eq!(cfg.workload.query_count, 50);
        assert_eq!(
            cfg.workload.selectivity,
            WorkloadSpec::default().selectivity
        );
        assert_eq!(
            cfg.dataset,
            DatasetSource::Synthetic {
                count: 1000,
                distribution: PointDistribution::Uniform
            }
        );
    }

    #[test]
    fn stage_seeds_differ() {
        let c = BenchConfig::default();
        let seeds = [
            c.derive_seed(SeedStage::Dataset),
            c.derive_seed(SeedStage::Workload),
            c.derive_seed(SeedStage::RouterSplit),
            c.derive_seed(SeedStage::Forest),
        ];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }

    #[test]
    fn validation() {
        assert!(BenchConfig::default().validate().is_ok());
        let bad = BenchConfig {
            tau: 1.0,
            ..BenchConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
