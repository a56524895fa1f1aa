//! Experiment plans: a dataset, a list of method configurations and seeds.
//!
//! Plans are TOML documents. Every method starts from a named preset and may
//! override any run setting:
//!
//! ```toml
//! dataset = "bimodal.ugeldata"
//! seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
//! rounds = 10
//!
//! [[methods]]
//! preset = "ugel_dbr"
//!
//! [[methods]]
//! preset = "al_random"
//!
//! [[methods]]
//! name = "ugel_dbr_tau1"
//! preset = "ugel_dbr"
//! tau = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::synth::{Dataset, LabelDistribution};
use crate::ugel::{CertainBudget, UgelConfig};

pub const DEFAULT_CHECKPOINTS: [usize; 4] = [2, 4, 6, 8];
pub const DEFAULT_SEEDS: usize = 10;
pub const DEFAULT_ROUNDS: usize = 10;

/// Starting points for method configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    UgelDbr,
    UgelMcd,
    UgelDer,
    UgelRan,
    /// Single model, random acquisition, no pseudo-labels.
    AlRandom,
    /// Single dropout model, MC-dropout variance acquisition, no pseudo-labels.
    AlBald,
    /// No further human labels; the pair pseudo-labels the whole pool.
    SslOnly,
    /// Uncertainty acquisition plus pseudo-labels on everything left.
    AsslFull,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::UgelDbr,
        Preset::UgelMcd,
        Preset::UgelDer,
        Preset::UgelRan,
        Preset::AlRandom,
        Preset::AlBald,
        Preset::SslOnly,
        Preset::AsslFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::UgelDbr => "ugel_dbr",
            Preset::UgelMcd => "ugel_mcd",
            Preset::UgelDer => "ugel_der",
            Preset::UgelRan => "ugel_ran",
            Preset::AlRandom => "al_random",
            Preset::AlBald => "al_bald",
            Preset::SslOnly => "ssl_only",
            Preset::AsslFull => "assl_full",
        }
    }

    pub fn config(self) -> UgelConfig {
        let base = UgelConfig::default();
        let al = |estimator| UgelConfig {
            estimator,
            b_c: CertainBudget::Zero,
            tau: 0.0,
            twin: false,
            ..base.clone()
        };
        match self {
            Preset::UgelDbr => base,
            Preset::UgelMcd => UgelConfig {
                estimator: EstimatorKind::Mcd,
                ..base
            },
            Preset::UgelDer => UgelConfig {
                estimator: EstimatorKind::Der,
                ..base
            },
            Preset::UgelRan => UgelConfig {
                estimator: EstimatorKind::Ran,
                ..base
            },
            Preset::AlRandom => al(EstimatorKind::Ran),
            Preset::AlBald => al(EstimatorKind::Mcd),
            Preset::SslOnly => UgelConfig {
                b_u: 0,
                b_c: CertainBudget::AllRemaining,
                ..base
            },
            Preset::AsslFull => UgelConfig {
                b_c: CertainBudget::AllRemaining,
                ..base
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// Parameters for generating a dataset in place of loading one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub dist: String,
    pub pool: usize,
    pub test: usize,
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_patch() -> usize {
    16
}

impl GenerateSpec {
    pub fn generate(&self) -> Result<Dataset> {
        let dist: LabelDistribution = self.dist.parse()?;
        Dataset::generate(dist, self.pool, self.test, self.patch, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    File(PathBuf),
    Generate(GenerateSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::File(p) => Dataset::load(p),
            DatasetSource::Generate(g) => g.generate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: String,
    pub preset: Preset,
    pub config: UgelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset: DatasetSource,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub checkpoints: Vec<usize>,
    pub methods: Vec<MethodConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    dataset: DatasetSource,
    seeds: Option<Vec<u64>>,
    rounds: Option<usize>,
    checkpoints: Option<Vec<usize>>,
    methods: Vec<toml::Table>,
}

impl ExperimentPlan {
    /// Parses a plan; relative dataset paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawPlan = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let rounds = raw.rounds.unwrap_or(DEFAULT_ROUNDS);
        let methods = raw
            .methods
            .into_iter()
            .map(|t| method(t, rounds))
            .collect::<Result<Vec<_>>>()?;
        let dataset = match raw.dataset {
            DatasetSource::File(p) if p.is_relative() => DatasetSource::File(base_dir.join(p)),
            other => other,
        };
        let plan = Self {
            dataset,
            seeds: raw.seeds.unwrap_or_else(|| (0..DEFAULT_SEEDS as u64).collect()),
            rounds,
            checkpoints: raw.checkpoints.unwrap_or_else(|| DEFAULT_CHECKPOINTS.to_vec()),
            methods,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("plan lists no methods".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("plan lists no seeds".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seeds".into()));
        }
        if self.methods.len() > 1 && !self.checkpoints.is_empty() && self.seeds.len() < 2 {
            return Err(Error::Config("significance tests need at least 2 seeds".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::Config(format!("duplicate method name `{}`", m.name)));
            }
            if m.name.is_empty() || !m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Config(format!("method name `{}` must be [A-Za-z0-9_-]+", m.name)));
            }
            m.config
                .validate()
                .map_err(|e| Error::Config(format!("method `{}`: {e}", m.name)))?;
        }
        Ok(())
    }
}

fn method(mut table: toml::Table, rounds: usize) -> Result<MethodConfig> {
    let take_str = |t: &mut toml::Table, key: &str| -> Result<Option<String>> {
        match t.remove(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(Error::Config(format!("`{key}` must be a string, got {other}"))),
        }
    };
    let preset: Preset = take_str(&mut table, "preset")?.as_deref().unwrap_or("ugel_dbr").parse()?;
    let name = take_str(&mut table, "name")?.unwrap_or_else(|| preset.name().to_string());
    if table.contains_key("base_seed") {
        return Err(Error::Config(format!("method `{name}`: base_seed comes from the plan's seeds")));
    }
    let mut merged = toml::Table::try_from(preset.config()).map_err(|e| Error::Config(e.to_string()))?;
    merged.insert("rounds".into(), toml::Value::Integer(rounds as i64));
    merged.extend(table);
    let config: UgelConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e| Error::Config(format!("method `{name}`: {e}")))?;
    Ok(MethodConfig { name, preset, config })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_the_protocol() {
        let plan = ExperimentPlan::from_toml(
            "dataset = \"d.ugeldata\"\n[[methods]]\npreset = \"ugel_dbr\"\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(plan.seeds, (0..10).collect::<Vec<_>>());
        assert_eq!(plan.checkpoints, vec![2, 4, 6, 8]);
        assert_eq!(plan.dataset, DatasetSource::File("/data/d.ugeldata".into()));
        let c = &plan.methods[0].config;
        assert_eq!((c.m, c.b_u, c.b_c, c.tau, c.epochs, c.learning_rate), (12, 6, CertainBudget::EqualD, 2.0, 12, 1e-3));
    }

    #[test]
    fn overrides_and_budgets() {
        let text = r#"
            dataset = { dist = "uniform", pool = 100, test = 20, patch = 8 }
            rounds = 3
            [[methods]]
            name = "fixed"
            preset = "ugel_dbr"
            b_c = { fixed = 5 }
            tau = 0.5
            [[methods]]
            preset = "al_bald"
            mc_passes = 20
            rounds = 2
        "#;
        let plan = ExperimentPlan::from_toml(text, Path::new(".")).unwrap();
        assert_eq!(plan.methods[0].config.b_c, CertainBudget::Fixed(5));
        assert_eq!(plan.methods[0].config.tau, 0.5);
        assert_eq!(plan.methods[0].config.rounds, 3);
        assert_eq!(plan.methods[1].name, "al_bald");
        assert_eq!(plan.methods[1].config.mc_passes, 20);
        assert_eq!(plan.methods[1].config.rounds, 2);
        assert!(!plan.methods[1].config.twin);
    }

    #[test]
    fn bad_plans_rejected() {
        let bad = [
            "dataset = \"x\"\nmethods = []",
            "dataset = \"x\"\n[[methods]]\npreset = \"nope\"",
            "dataset = \"x\"\n[[methods]]\ntua = 2.0",
            "dataset = \"x\"\nseeds = [1]\n[[methods]]\n[[methods]]\npreset = \"al_random\"",
            "dataset = \"x\"\n[[methods]]\n[[methods]]",
            "dataset = \"x\"\n[[methods]]\nbase_seed = 3",
            "dataset = \"x\"\n[[methods]]\nestimator = \"mcd\"\nhead = \"dbr\"",
        ];
        for text in bad {
            assert!(ExperimentPlan::from_toml(text, Path::new(".")).is_err(), "{text}");
        }
    }

    #[test]
    fn presets_realise_the_reductions() {
        let al = Preset::AlRandom.config();
        assert_eq!((al.b_c, al.tau, al.twin, al.estimator), (CertainBudget::Zero, 0.0, false, EstimatorKind::Ran));
        assert_eq!(Preset::AsslFull.config().b_c, CertainBudget::AllRemaining);
        assert_eq!(Preset::SslOnly.config().b_u, 0);
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            p.config().validate().unwrap();
        }
    }
}
