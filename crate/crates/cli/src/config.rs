//! Scenario files: one TOML document describing the plant, loss, policy,
//! training schedule, seeds and output directory of a run.

use std::path::{Path, PathBuf};

use perfboost::baselines::{CbfOnlineConfig, PolicyTag, RnnDirectConfig};
use perfboost::l2ops::{BiasMode, OperatorSpec, RenConfig};
use perfboost::losses::LossConfig;
use perfboost::plants::PointMassParams;
use perfboost::scenario::{DisturbanceModel, Scenario, TltlSpec};
use perfboost::training::TrainConfig;
use perfboost::verify::VerifyOptions;
use perfboost::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub policy: PolicyTag,
    pub out_dir: PathBuf,
    pub horizon: usize,
    /// Nominal start position of each vehicle.
    pub starts: Vec<[f64; 2]>,
    pub seeds: Seeds,
    pub disturbance: DisturbanceModel,
    pub plant: PointMassParams,
    pub loss: LossConfig,
    pub operator: OperatorSpec,
    pub training: TrainingBlock,
    #[serde(default)]
    pub tltl: Option<TltlSpec>,
    #[serde(default)]
    pub baselines: Baselines,
    #[serde(default)]
    pub verify: Option<VerifyOptions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Master seed of training.
    pub train: u64,
    /// Seed of the held-out test disturbances.
    pub test: u64,
    pub test_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingBlock {
    pub samples: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub init_std: f64,
    pub clip_norm: f64,
    pub checkpoint_fractions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    pub cbf_online: CbfOnlineConfig,
    pub rnn_direct: RnnDirectConfig,
}

impl Default for Baselines {
    fn default() -> Self {
        Baselines {
            cbf_online: CbfOnlineConfig::mountains(),
            rnn_direct: RnnDirectConfig::mountains(),
        }
    }
}

impl TrainingBlock {
    fn from_defaults(samples: usize, epochs: usize, lr: f64) -> Self {
        let t = TrainConfig::new((), samples, epochs, lr, 0);
        TrainingBlock {
            samples,
            batch_size: t.batch_size,
            epochs,
            lr,
            init_std: t.init_std,
            clip_norm: t.clip_norm,
            checkpoint_fractions: t.checkpoint_fractions,
        }
    }
}

impl ScenarioFile {
    fn from_scenario(s: Scenario, operator: OperatorSpec, training: TrainingBlock) -> Self {
        ScenarioFile {
            out_dir: PathBuf::from("runs").join(&s.name),
            name: s.name,
            policy: PolicyTag::Boosted,
            horizon: s.horizon,
            starts: s.starts,
            seeds: Seeds {
                train: 0,
                test: 12345,
                test_count: 20,
            },
            disturbance: s.disturbance,
            plant: s.plant,
            loss: s.loss,
            operator,
            training,
            tltl: s.tltl,
            baselines: Baselines::default(),
            verify: None,
        }
    }

    /// Canonical mountains run: REN q = r = 8, γ̄ = 5, 5000 epochs.
    pub fn mountains() -> Self {
        Self::from_scenario(
            Scenario::mountains(),
            OperatorSpec::Ren(RenConfig::new(8, 8, 8, 4, 5.0)),
            TrainingBlock::from_defaults(100, 5000, 1e-4),
        )
    }

    /// Mountains with the overshoot barrier penalty.
    pub fn mountains_cbf() -> Self {
        Self::from_scenario(
            Scenario::mountains_cbf(1000.0),
            OperatorSpec::Ren(RenConfig::new(8, 8, 8, 4, 5.0)),
            TrainingBlock::from_defaults(100, 5000, 1e-4),
        )
    }

    /// Waypoint tracking: REN q = r = 32 with a time-varying output bias.
    pub fn waypoint() -> Self {
        let s = Scenario::waypoint();
        let ren = RenConfig {
            bias: BiasMode::Output { horizon: s.horizon },
            ..RenConfig::new(32, 32, 8, 4, 5.0)
        };
        Self::from_scenario(s, OperatorSpec::Ren(ren), TrainingBlock::from_defaults(1, 3000, 5e-4))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mountains" => Ok(Self::mountains()),
            "mountains_cbf" => Ok(Self::mountains_cbf()),
            "waypoint" => Ok(Self::waypoint()),
            _ => Err(Error::Parse(format!(
                "unknown preset `{name}` (expected mountains, mountains_cbf or waypoint)"
            ))),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            name: self.name.clone(),
            plant: self.plant.clone(),
            starts: self.starts.clone(),
            horizon: self.horizon,
            disturbance: self.disturbance.clone(),
            loss: self.loss.clone(),
            tltl: self.tltl.clone(),
        }
    }

    pub fn train_config<P>(&self, family: P) -> TrainConfig<P> {
        let t = &self.training;
        TrainConfig {
            operator: family,
            samples: t.samples,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lr: t.lr,
            seed: self.seeds.train,
            init_std: t.init_std,
            clip_norm: t.clip_norm,
            checkpoint_fractions: t.checkpoint_fractions.clone(),
        }
    }

    /// Checks every block; dimensions of the operator must match the plant.
    pub fn validate(&self) -> Result<()> {
        let s = self.scenario();
        s.validate()?;
        if let Some(t) = &self.tltl {
            t.parsed()?;
        }
        self.train_config(()).validate()?;
        self.baselines.cbf_online.validate()?;
        self.baselines.rnn_direct.validate()?;
        let (n, m) = (4 * self.plant.n_vehicles(), 2 * self.plant.n_vehicles());
        if self.operator.input_dim() != n || self.operator.output_dim() != m {
            return Err(Error::Dimension(format!(
                "operator maps {} -> {} but the plant needs {n} -> {m}",
                self.operator.input_dim(),
                self.operator.output_dim()
            )));
        }
        let rnn = &self.baselines.rnn_direct;
        if rnn.n != n || rnn.m != m {
            return Err(Error::Dimension(format!(
                "rnn_direct maps {} -> {} but the plant needs {n} -> {m}",
                rnn.n, rnn.m
            )));
        }
        if self.seeds.test_count == 0 {
            return Err(Error::Invalid("seeds.test_count must be at least 1".into()));
        }
        Ok(())
    }
}
