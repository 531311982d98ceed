//! REINFORCE and PPO trainers over batched environment rollouts, with
//! greedy validation on a fixed held-out set.

mod config;
mod ppo;
mod reinforce;
mod rollout;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Algorithm, Baseline, DataConfig, PpoConfig, TrainConfig};
pub use ppo::{build_buffer, gae, ppo_gradients, ppo_loss, ppo_update, PpoLosses, Transition};
pub use reinforce::{
    advantages, clip_global_norm, discounted_returns, global_norm, reinforce_gradients, reinforce_loss,
};
pub use rollout::{collect_rollouts, collect_rollouts_seeded, rollout, Step, Trajectory};

use crate::error::{Error, Result};
use crate::eval::decode_greedy;
use crate::instance::{generate, Instance};
use crate::numerics::{Adam, AdamConfig, ParamRecord, ParamStore};
use crate::policy::{Checkpoint, Policy};

// Stream tags of the root generator; each consumer gets its own stream.
const STREAM_INIT: u64 = 0;
const STREAM_DATA: u64 = 1 << 40;
const STREAM_SAMPLE: u64 = 2 << 40;
const STREAM_SHUFFLE: u64 = 3 << 40;

fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag | index);
    rng
}

fn instances_from(config: &TrainConfig, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<Arc<Instance>>> {
    (0..count)
        .map(|_| Ok(Arc::new(generate(&config.data.generator(rng.gen()))?)))
        .collect()
}

/// The fixed held-out set; depends only on `validation_seed` and the data settings.
pub fn validation_set(config: &TrainConfig) -> Result<Vec<Arc<Instance>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.validation_seed);
    instances_from(config, &mut rng, config.validation_size)
}

/// Training instances of one epoch.
pub fn epoch_instances(config: &TrainConfig, epoch: usize) -> Result<Vec<Arc<Instance>>> {
    instances_from(config, &mut stream(config.seed, STREAM_DATA, epoch as u64), config.instances_per_epoch)
}

/// Mean greedy makespan over `instances`.
pub fn greedy_mean(policy: &Policy, instances: &[Arc<Instance>]) -> Result<f64> {
    if instances.is_empty() {
        return Ok(f64::NAN);
    }
    let ms = instances
        .par_iter()
        .map(|inst| decode_greedy(inst, policy).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(ms.iter().sum::<u64>() as f64 / ms.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over the epoch's updates.
    pub loss: f64,
    /// Mean makespan of the sampled training episodes.
    pub mean_makespan: f64,
    pub validation_mean_makespan: f64,
    /// Whether this epoch produced the best validation so far.
    pub best: bool,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Greedy validation mean of the untrained policy.
    pub initial_validation: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters are the best checkpoint; 0 is the untrained policy.
    pub best_epoch: usize,
    pub best_validation: f64,
    pub best_checkpoint: Option<PathBuf>,
}

#[derive(Serialize)]
struct CsvRow {
    epoch: usize,
    loss: String,
    mean_makespan: String,
    validation_mean_makespan: String,
    best: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_secs: Option<String>,
}

impl TrainReport {
    /// One row per epoch. Wall time is left out unless asked for, so
    /// reruns with the same seed give identical bytes.
    pub fn write_csv<W: Write>(&self, writer: W, with_timing: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.epochs {
            w.serialize(CsvRow {
                epoch: e.epoch,
                loss: format!("{:.9}", e.loss),
                mean_makespan: format!("{:.4}", e.mean_makespan),
                validation_mean_makespan: format!("{:.4}", e.validation_mean_makespan),
                best: e.best,
                wall_secs: with_timing.then(|| format!("{:.3}", e.wall_secs)),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trainer state carried in the `extra` field of `last.json`.
#[derive(Serialize, Deserialize)]
struct ResumeState {
    epochs_done: usize,
    adam: Adam,
    report: TrainReport,
    best_params: Vec<ParamRecord>,
}

pub const LAST_CHECKPOINT: &str = "last.json";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const REPORT_CSV: &str = "report.csv";
pub const TIMING_CSV: &str = "timing.csv";

pub struct Trainer {
    config: TrainConfig,
    policy: Policy,
    adam: Adam,
    validation: Vec<Arc<Instance>>,
    report: TrainReport,
    best_params: ParamStore,
    epochs_done: usize,
}

impl Trainer {
    /// Fresh parameters from the root seed; validates the untrained policy.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let policy = Policy::new(config.effective_policy(), &mut stream(config.seed, STREAM_INIT, 0))?;
        let adam = Adam::new(policy.params(), AdamConfig { lr: config.lr, ..AdamConfig::default() });
        let validation = validation_set(&config)?;
        let initial = greedy_mean(&policy, &validation)?;
        let report = TrainReport {
            initial_validation: initial,
            best_validation: initial,
            ..TrainReport::default()
        };
        Ok(Self {
            best_params: policy.params().clone(),
            config,
            policy,
            adam,
            validation,
            report,
            epochs_done: 0,
        })
    }

    /// Continues from a `last.json` written by [`Trainer::save`]. `config`
    /// may raise `epochs`; everything else should match the original run.
    pub fn resume(config: TrainConfig, checkpoint: &Path) -> Result<Self> {
        config.validate()?;
        let ckpt = Checkpoint::load(checkpoint)?;
        let policy = Policy::from_checkpoint(&ckpt)?;
        if policy.config() != &config.effective_policy() {
            return Err(Error::Checkpoint("checkpoint architecture differs from the training config".into()));
        }
        let extra = ckpt
            .extra
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no trainer state".into()))?;
        let state: ResumeState =
            serde_json::from_value(extra).map_err(|e| Error::Checkpoint(format!("trainer state: {e}")))?;
        let mut best_params = policy.params().clone();
        best_params.load_records(&state.best_params)?;
        let mut adam = state.adam;
        adam.config.lr = config.lr;
        Ok(Self {
            validation: validation_set(&config)?,
            config,
            policy,
            adam,
            report: state.report,
            best_params,
            epochs_done: state.epochs_done,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// Policy with the best validation parameters seen so far.
    pub fn best_policy(&self) -> Result<Policy> {
        let mut p = self.policy.clone();
        p.params_mut().load_records(&self.best_params.to_records())?;
        Ok(p)
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    fn update(&mut self, epoch: usize, u: usize, instances: &[Arc<Instance>]) -> Result<(f64, Vec<Trajectory>)> {
        let index = (epoch * self.config.updates_per_epoch() + u) as u64;
        let seed = stream(self.config.seed, STREAM_SAMPLE, index).gen();
        let trajs = collect_rollouts_seeded(instances, &self.policy, self.config.reward_mode, seed)?;
        let loss = match self.config.algorithm {
            Algorithm::Reinforce => {
                let (mut grads, loss) = reinforce_gradients(
                    &self.policy,
                    &trajs,
                    self.config.gamma,
                    self.config.baseline,
                    self.config.reward_scale,
                )?;
                if let Some(c) = self.config.grad_clip {
                    clip_global_norm(&mut grads, c);
                }
                self.adam.step(self.policy.params_mut(), &grads)?;
                loss
            }
            Algorithm::Ppo => {
                let buffer = build_buffer(&trajs, &self.config.ppo, self.config.reward_scale)?;
                let mut rng = stream(self.config.seed, STREAM_SHUFFLE, index);
                ppo_update(
                    &buffer,
                    &mut self.policy,
                    &mut self.adam,
                    &self.config.ppo,
                    self.config.grad_clip,
                    &mut rng,
                )?
                .total
            }
        };
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss at update {index}")));
        }
        Ok((loss, trajs))
    }

    /// One epoch of updates followed by greedy validation.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let t0 = Instant::now();
        let epoch = self.epochs_done;
        let instances = epoch_instances(&self.config, epoch)?;
        let (mut loss, mut makespan) = (0.0, 0.0);
        let updates = self.config.updates_per_epoch();
        for (u, batch) in instances.chunks(self.config.batch_size).enumerate() {
            let (l, trajs) = self.update(epoch, u, batch)?;
            loss += l;
            makespan += trajs.iter().map(|t| t.makespan as f64).sum::<f64>();
        }
        let validation = greedy_mean(&self.policy, &self.validation)?;
        let best = validation < self.report.best_validation;
        if best {
            self.report.best_validation = validation;
            self.report.best_epoch = epoch + 1;
            self.best_params = self.policy.params().clone();
        }
        self.epochs_done += 1;
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: loss / updates as f64,
            mean_makespan: makespan / instances.len() as f64,
            validation_mean_makespan: validation,
            best,
            wall_secs: t0.elapsed().as_secs_f64(),
        };
        self.report.epochs.push(record.clone());
        Ok(record)
    }

    /// Checkpoint of the current parameters carrying the trainer state.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let state = ResumeState {
            epochs_done: self.epochs_done,
            adam: self.adam.clone(),
            report: self.report.clone(),
            best_params: self.best_params.to_records(),
        };
        let mut ckpt = self.policy.to_checkpoint();
        ckpt.extra = Some(serde_json::to_value(state)?);
        Ok(ckpt)
    }

    /// Writes `last.json`, `best.json`, the report CSVs and the config into `dir`.
    pub fn save(&mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let best_path = dir.join(BEST_CHECKPOINT);
        self.report.best_checkpoint = Some(best_path.clone());
        self.best_policy()?.save(&best_path)?;
        self.checkpoint()?.save(&dir.join(LAST_CHECKPOINT))?;
        self.report.write_csv(std::fs::File::create(dir.join(REPORT_CSV))?, false)?;
        self.report.write_csv(std::fs::File::create(dir.join(TIMING_CSV))?, true)?;
        std::fs::write(dir.join("config.toml"), self.config.to_toml())?;
        Ok(())
    }

    /// Trains until `config.epochs` epochs are done, saving after every
    /// epoch when `out_dir` is set.
    pub fn run(mut self) -> Result<(TrainReport, Policy)> {
        while self.epochs_done < self.config.epochs {
            self.run_epoch()?;
            if let Some(dir) = self.config.out_dir.clone() {
                self.save(&dir)?;
            }
        }
        let best = self.best_policy()?;
        Ok((self.report, best))
    }
}

/// Full training run; returns the report and the best-by-validation policy.
pub fn train(config: TrainConfig) -> Result<(TrainReport, Policy)> {
    Trainer::new(config)?.run()
}
