use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::RewardMode;
use crate::error::{Error, Result};
use crate::instance::{GeneratorConfig, Variant};
use crate::policy::PolicyConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Reinforce,
    Ppo,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reinforce" => Ok(Algorithm::Reinforce),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// What the REINFORCE return is centred on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Mean return at the same step index over the trajectories that reach it.
    #[default]
    PerTimestep,
    /// Mean over every step of every trajectory in the batch.
    Batch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Optimisation passes over each collected buffer.
    pub epochs: usize,
    /// Transitions per minibatch.
    pub minibatch: usize,
    /// Measure rewards in units of the instance's largest duration, the
    /// time unit of the features, so values and the value clip range are O(1).
    pub duration_units: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda: 0.98,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            epochs: 4,
            minibatch: 512,
            duration_units: true,
        }
    }
}

/// Training distribution. Instance `i` of a batch is drawn with its own
/// seed, so the data does not depend on how rollouts are scheduled.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub variant: Variant,
    pub num_jobs: usize,
    pub num_machines: usize,
    pub stages: Option<usize>,
    pub machines_per_stage: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sd1,
            num_jobs: 6,
            num_machines: 3,
            stages: None,
            machines_per_stage: None,
        }
    }
}

impl DataConfig {
    pub fn generator(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            variant: self.variant,
            num_jobs: self.num_jobs,
            num_machines: self.num_machines,
            stages: self.stages,
            machines_per_stage: self.machines_per_stage,
            rng_seed: seed,
        }
    }
}

/// Trainer settings. The defaults are the desk-scale run: 60 epochs of 128
/// SD1 6x3 instances in batches of 32 with a one-layer, 32-wide policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub instances_per_epoch: usize,
    /// Trajectories per parameter update.
    pub batch_size: usize,
    pub lr: f64,
    /// REINFORCE discount.
    pub gamma: f64,
    pub baseline: Baseline,
    pub reward_mode: RewardMode,
    /// Rewards are multiplied by this before returns are formed.
    pub reward_scale: f64,
    /// Global gradient-norm clip; off when absent.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub validation_size: usize,
    pub validation_seed: u64,
    pub data: DataConfig,
    pub ppo: PpoConfig,
    pub policy: PolicyConfig,
    /// Checkpoints and reports go here when set.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Reinforce,
            epochs: 60,
            instances_per_epoch: 128,
            batch_size: 32,
            lr: 5e-5,
            gamma: 0.99,
            baseline: Baseline::PerTimestep,
            reward_mode: RewardMode::LowerBound,
            reward_scale: 1.0,
            grad_clip: None,
            seed: 1,
            validation_size: 100,
            validation_seed: 1_000_003,
            data: DataConfig::default(),
            ppo: PpoConfig::default(),
            policy: PolicyConfig {
                layers: 1,
                heads: 4,
                d_model: 32,
                ffn_dim: 128,
                head_hidden: 64,
                ..PolicyConfig::default()
            },
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.epochs == 0 || self.instances_per_epoch == 0 || self.batch_size == 0 {
            return bad("epochs, instances_per_epoch and batch_size must be positive");
        }
        if self.instances_per_epoch % self.batch_size != 0 {
            return bad("instances_per_epoch must be a multiple of batch_size");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.ppo.gamma) {
            return bad("discount factors must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.ppo.lambda) {
            return bad("ppo.lambda must lie in [0, 1]");
        }
        if self.ppo.clip <= 0.0 || self.ppo.epochs == 0 || self.ppo.minibatch == 0 {
            return bad("ppo.clip, ppo.epochs and ppo.minibatch must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if self.grad_clip.is_some_and(|c| c <= 0.0) {
            return bad("grad_clip must be positive");
        }
        self.data.generator(0).validate()?;
        self.effective_policy().validate()
    }

    /// Policy settings as trained; PPO always gets a critic.
    pub fn effective_policy(&self) -> PolicyConfig {
        let mut p = self.policy.clone();
        if self.algorithm == Algorithm::Ppo {
            p.critic_head = true;
        }
        p
    }

    pub fn updates_per_epoch(&self) -> usize {
        self.instances_per_epoch / self.batch_size
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_desk_run() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.instances_per_epoch, c.batch_size), (60, 128, 32));
        assert_eq!((c.policy.layers, c.policy.d_model, c.policy.heads), (1, 32, 4));
        assert_eq!(c.lr, 5e-5);
        assert_eq!(c.gamma, 0.99);
        assert_eq!((c.ppo.gamma, c.ppo.lambda, c.ppo.clip), (1.0, 0.98, 0.2));
        assert_eq!((c.ppo.value_coef, c.ppo.entropy_coef), (0.5, 0.01));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let mut c = TrainConfig::default();
        c.algorithm = Algorithm::Ppo;
        c.grad_clip = Some(1.0);
        c.out_dir = Some("runs/x".into());
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = TrainConfig::from_toml("epochs = 3\n[ppo]\nepochs = 2\n").unwrap();
        assert_eq!((partial.epochs, partial.ppo.epochs, partial.batch_size), (3, 2, 32));
        assert!(TrainConfig::from_toml("epoch = 3").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = TrainConfig::default();
        c.instances_per_epoch = 100;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.gamma = 1.5;
        assert!(c.validate().is_err());
    }
}
