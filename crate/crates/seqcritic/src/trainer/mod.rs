//! Training orchestration: log-likelihood pretraining, critic pretraining
//! with a frozen actor, and the joint actor-critic / REINFORCE loop with
//! per-step shadow updates and trajectory sampling from the delayed actor.

pub mod config;
pub mod losses;
pub mod targets;

pub use config::{Mode, TaskKind, TrainConfig};

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use numcore::{adam_step, clip_global_norm, AdamState, NumError};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::{Pair, TaskData};
use crate::decode::DecodeMode;
use crate::error::{Result, SeqError};
use crate::eval::evaluate;
use crate::metrics::MetricsLogger;
use crate::model::{shadow_update, ActorModel, BaselineModel, CriticModel, ModelConfig};
use crate::rewards::{shape_rewards, ScoreFunction, ScoreKind};
use crate::rng::stream_rng;
use crate::trajectory::{default_max_len, sample_trajectory, Trajectory};

use losses::{accumulate, ll_batch};

#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub final_valid_cer: f64,
    pub final_valid_return: f64,
}

pub struct Trainer {
    cfg: TrainConfig,
    data: TaskData,
    score: ScoreFunction,
    out_dir: PathBuf,
    logger: MetricsLogger,
    step: u64,

    actor: ActorModel,
    delayed_actor: ActorModel,
    critic: Option<CriticModel>,
    target_critic: Option<CriticModel>,
    baseline: Option<BaselineModel>,

    adam_actor: AdamState,
    adam_critic: AdamState,
    adam_baseline: AdamState,

    sample_rng: ChaCha8Rng,
    /// |Qhat| ceiling for the divergence guard.
    value_bound: f64,
}

/// Run the configured training pipeline. For ac / reinforce / reinforce-critic
/// modes the actor either resumes from a log-likelihood checkpoint or, with
/// `full_pipeline`, is pretrained here first.
pub fn train(
    cfg: &TrainConfig,
    data: TaskData,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut trainer = Trainer::new(cfg.clone(), data, out_dir)?;
    if let Some(path) = resume {
        trainer.load_actor(path)?;
    }
    trainer.run(resume.is_some())
}

impl Trainer {
    fn new(cfg: TrainConfig, data: TaskData, out_dir: &Path) -> Result<Trainer> {
        let vocab_size = data.vocab.size();
        let model_cfg = ModelConfig::new(vocab_size, cfg.emb, cfg.hidden, cfg.hidden);
        let mut init_rng = stream_rng(cfg.seed, "init.actor");
        let actor = ActorModel::new(model_cfg, &mut init_rng);
        let delayed_actor = actor.clone();

        let (critic, target_critic, baseline) = match cfg.mode {
            Mode::Ll => (None, None, None),
            Mode::Reinforce => {
                let mut rng = stream_rng(cfg.seed, "init.baseline");
                (None, None, Some(BaselineModel::new(cfg.hidden, &mut rng)))
            }
            Mode::Ac | Mode::ReinforceCritic => {
                let mut rng = stream_rng(cfg.seed, "init.critic");
                let ccfg = if cfg.critic_actor_states {
                    model_cfg.with_extra_input(cfg.hidden)
                } else {
                    model_cfg
                };
                let critic = CriticModel::new(ccfg, &mut rng);
                let target = critic.clone();
                (Some(critic), Some(target), None)
            }
        };

        let score = ScoreFunction::of_kind(cfg.score);
        let max_len = default_max_len(data.spec.clip);
        let value_bound = cfg.divergence_factor * score.max_abs_return(max_len, data.spec.clip);
        let logger = MetricsLogger::create(&out_dir.join("metrics.jsonl"), cfg.wall_clock)?;
        Ok(Trainer {
            sample_rng: stream_rng(cfg.seed, "sample"),
            adam_actor: AdamState::new(cfg.lr_initial),
            adam_critic: AdamState::new(cfg.lr_initial),
            adam_baseline: AdamState::new(cfg.lr_initial),
            score,
            out_dir: out_dir.to_path_buf(),
            logger,
            step: 0,
            actor,
            delayed_actor,
            critic,
            target_critic,
            baseline,
            cfg,
            data,
            value_bound,
        })
    }

    fn load_actor(&mut self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint::read(path)?;
        if ckpt.vocab_tokens != self.data.vocab.tokens() {
            return Err(SeqError::Checkpoint(format!(
                "{}: vocabulary does not match the dataset",
                path.display()
            )));
        }
        let params = ckpt.extract_params("actor");
        if params.len() != self.actor.net.params.len() {
            return Err(SeqError::Checkpoint(format!(
                "{}: expected {} actor tensors, found {}",
                path.display(),
                self.actor.net.params.len(),
                params.len()
            )));
        }
        for (name, t) in &params {
            let have = self.actor.net.params.get(name).ok_or_else(|| {
                SeqError::Checkpoint(format!("unexpected actor tensor `{name}`"))
            })?;
            if have.shape() != t.shape() {
                return Err(SeqError::Checkpoint(format!(
                    "actor tensor `{name}`: shape {:?} does not match model {:?}",
                    t.shape(),
                    have.shape()
                )));
            }
        }
        self.actor.net.params = params.clone();
        self.delayed_actor.net.params = params;
        Ok(())
    }

    fn run(&mut self, resumed: bool) -> Result<TrainOutcome> {
        match self.cfg.mode {
            Mode::Ll => {
                self.ll_phase()?;
            }
            Mode::Ac | Mode::ReinforceCritic => {
                if !resumed {
                    self.require_full_pipeline()?;
                    self.ll_phase()?;
                }
                self.delayed_actor.net.params = self.actor.net.params.clone();
                self.critic_pretrain_phase()?;
                self.joint_phase()?;
            }
            Mode::Reinforce => {
                if !resumed {
                    self.require_full_pipeline()?;
                    self.ll_phase()?;
                }
                self.delayed_actor.net.params = self.actor.net.params.clone();
                self.joint_phase()?;
            }
        }
        let (_, cer, ret) = self.validate("final")?;
        let final_checkpoint = self.out_dir.join("final.ckpt");
        self.write_checkpoint(&final_checkpoint)?;
        self.logger.flush()?;
        Ok(TrainOutcome {
            final_checkpoint,
            metrics_path: self.out_dir.join("metrics.jsonl"),
            final_valid_cer: cer,
            final_valid_return: ret,
        })
    }

    fn require_full_pipeline(&self) -> Result<()> {
        if self.cfg.full_pipeline {
            Ok(())
        } else {
            Err(SeqError::Config(vec![format!(
                "mode={} needs --resume with a log-likelihood checkpoint, or full_pipeline=true",
                self.cfg.mode.name()
            )]))
        }
    }

    // ----- phase 1: teacher-forced log-likelihood -----

    fn ll_phase(&mut self) -> Result<()> {
        let mut rng = stream_rng(self.data.train_seed, "data.train.ll");
        let mut cursor = 0usize;
        let pad = self.data.vocab.eos();
        self.adam_actor.set_alpha(self.cfg.lr_initial);
        let mut best = f64::INFINITY;
        let mut evals_without_best = 0u32;
        let mut annealed = false;
        for i in 1..=self.cfg.ll_max_steps {
            self.step += 1;
            let batch = self
                .data
                .batch_at(&mut cursor, &mut rng, self.cfg.batch_size, pad)?;
            let (loss, mut grads) = guard(ll_batch(&self.actor, &batch, pad), "ll loss", self.step)?;
            clip_global_norm(&mut grads, self.cfg.clip_norm);
            guard(
                adam_step(&mut self.actor.net.params, &grads, &mut self.adam_actor)
                    .map_err(SeqError::from),
                "ll adam",
                self.step,
            )?;
            if i % self.cfg.log_interval == 0 {
                self.logger.log(self.step, "ll", "train", "loss", loss)?;
            }
            if i % self.cfg.eval_interval == 0 {
                let (key, _, _) = self.validate("ll")?;
                if key < best - 1e-12 {
                    best = key;
                    evals_without_best = 0;
                } else {
                    evals_without_best += 1;
                    if !annealed {
                        annealed = true;
                        self.adam_actor.set_alpha(self.cfg.lr_annealed);
                        self.logger
                            .log(self.step, "ll", "train", "lr", self.cfg.lr_annealed)?;
                    }
                    if evals_without_best >= self.cfg.ll_patience {
                        break;
                    }
                }
            }
            self.interval_checkpoint()?;
        }
        self.write_checkpoint(&self.out_dir.join("ll.ckpt"))?;
        Ok(())
    }

    // ----- phase 2: critic pretraining with a frozen actor -----

    fn critic_pretrain_phase(&mut self) -> Result<()> {
        self.adam_critic.set_alpha(self.cfg.lr_initial);
        let mut window = VecDeque::with_capacity(self.cfg.td_window);
        let mut max_smoothed = f64::NEG_INFINITY;
        let mut since_max = 0u64;
        let mut extra_left: Option<u64> = None;
        let mut rng = stream_rng(self.data.train_seed, "data.train.critic");
        let mut cursor = 0usize;
        for i in 1..=self.cfg.critic_pretrain_max_steps {
            self.step += 1;
            let pair = self.data.pair_at(&mut cursor, &mut rng)?;
            let stats = self.rl_step(&pair, "critic-pretrain", false)?;

            if window.len() == self.cfg.td_window {
                window.pop_front();
            }
            window.push_back(stats.td_error);
            let smoothed = window.iter().sum::<f64>() / window.len() as f64;
            if i % self.cfg.log_interval == 0 {
                self.logger
                    .log(self.step, "critic-pretrain", "train", "td_error", stats.td_error)?;
                self.logger.log(
                    self.step,
                    "critic-pretrain",
                    "train",
                    "td_error_smoothed",
                    smoothed,
                )?;
                self.logger.log(
                    self.step,
                    "critic-pretrain",
                    "train",
                    "critic_loss",
                    stats.critic_loss,
                )?;
            }
            match extra_left.as_mut() {
                None => {
                    if smoothed > max_smoothed {
                        max_smoothed = smoothed;
                        since_max = 0;
                    } else {
                        since_max += 1;
                        if since_max >= self.cfg.critic_pretrain_patience {
                            extra_left = Some(self.cfg.critic_pretrain_extra);
                        }
                    }
                }
                Some(0) => break,
                Some(n) => *n -= 1,
            }
            self.interval_checkpoint()?;
        }
        self.write_checkpoint(&self.out_dir.join("critic_pretrain.ckpt"))?;
        Ok(())
    }

    // ----- phase 3: joint training -----

    fn joint_phase(&mut self) -> Result<()> {
        self.adam_actor = AdamState::new(self.cfg.lr_annealed);
        self.adam_critic.set_alpha(self.cfg.lr_annealed);
        let mut window = VecDeque::with_capacity(self.cfg.td_window);
        let mut rng = stream_rng(self.data.train_seed, "data.train.joint");
        let mut cursor = 0usize;
        for i in 1..=self.cfg.joint_steps {
            self.step += 1;
            let pair = self.data.pair_at(&mut cursor, &mut rng)?;
            let stats = self.rl_step(&pair, "joint", true)?;
            if window.len() == self.cfg.td_window {
                window.pop_front();
            }
            window.push_back(stats.sampled_return);
            if i % self.cfg.log_interval == 0 {
                let smoothed = window.iter().sum::<f64>() / window.len() as f64;
                self.logger
                    .log(self.step, "joint", "train", "return", smoothed)?;
                if self.critic.is_some() {
                    self.logger
                        .log(self.step, "joint", "train", "critic_loss", stats.critic_loss)?;
                    self.logger
                        .log(self.step, "joint", "train", "td_error", stats.td_error)?;
                }
            }
            if i % self.cfg.eval_interval == 0 {
                self.validate("joint")?;
            }
            self.interval_checkpoint()?;
        }
        Ok(())
    }

    // ----- one Algorithm-1 iteration -----

    fn rl_step(&mut self, pair: &Pair, phase: &str, update_actor: bool) -> Result<StepStats> {
        let (x, y) = pair;
        let eos = self.data.vocab.eos();
        let max_len = default_max_len(x.len());
        let mut stats = StepStats::default();
        let scale = 1.0 / self.cfg.m_samples as f64;

        let mut actor_grads = numcore::Gradients::new();
        let mut critic_grads = numcore::Gradients::new();
        for _ in 0..self.cfg.m_samples {
            let mut traj = guard(
                sample_trajectory(&self.delayed_actor, x, y, eos, max_len, &mut self.sample_rng),
                "sampling",
                self.step,
            )?;
            traj.rewards = shape_rewards(&self.score, &traj.tokens, y, eos, self.cfg.shaping).rewards;
            stats.sampled_return += traj.total_reward() * scale;

            if let (Some(critic), Some(target)) = (&self.critic, &self.target_critic) {
                let steps = traj.steps();
                let states = self
                    .cfg
                    .critic_actor_states
                    .then(|| traj.states.clone());
                let target_vals = guard(
                    target.values(y, &traj.tokens[..steps - 1], states.as_deref()),
                    "target critic",
                    self.step,
                )?;
                self.check_value_bound(&target_vals, "target critic")?;

                let q_targets = if self.cfg.td {
                    targets::td_targets(&traj.rewards, &traj.dists, &target_vals)
                } else {
                    targets::mc_targets(&traj.rewards)
                };
                let cstep = guard(
                    losses::critic_step(critic, &traj, &q_targets, self.cfg.lambda),
                    "critic loss",
                    self.step,
                )?;
                self.check_value_bound(&cstep.values, "critic")?;
                stats.critic_loss += cstep.loss * scale;
                stats.td_error += cstep.mean_sq_td_error * scale;
                accumulate(&mut critic_grads, &cstep.grads, scale);
                traj.target_values = Some(target_vals);
                traj.critic_values = Some(cstep.values);
            }

            if update_actor {
                let g = self.actor_grads_for(&traj, eos)?;
                accumulate(&mut actor_grads, &g, scale);
                if self.cfg.mode == Mode::Reinforce {
                    self.baseline_step(&traj)?;
                }
            }
        }

        if !critic_grads.is_empty() {
            clip_global_norm(&mut critic_grads, self.cfg.clip_norm);
            let critic = self.critic.as_mut().unwrap();
            guard(
                adam_step(&mut critic.net.params, &critic_grads, &mut self.adam_critic)
                    .map_err(SeqError::from),
                "critic adam",
                self.step,
            )?;
        }
        if update_actor {
            clip_global_norm(&mut actor_grads, self.cfg.clip_norm);
            guard(
                adam_step(&mut self.actor.net.params, &actor_grads, &mut self.adam_actor)
                    .map_err(SeqError::from),
                "actor adam",
                self.step,
            )?;
        }

        // shadow interpolation every optimizer step
        if update_actor {
            shadow_update(
                &mut self.delayed_actor.net.params,
                &self.actor.net.params,
                self.cfg.gamma_theta,
            )?;
        }
        if let (Some(target), Some(critic)) = (&mut self.target_critic, &self.critic) {
            shadow_update(&mut target.net.params, &critic.net.params, self.cfg.gamma_phi)?;
        }
        let _ = phase;
        Ok(stats)
    }

    fn actor_grads_for(&self, traj: &Trajectory, eos: usize) -> Result<numcore::Gradients> {
        match self.cfg.mode {
            Mode::Ll => unreachable!("ll mode never reaches the joint loop"),
            Mode::Ac => {
                let values = traj.critic_values.as_ref().expect("critic ran");
                let (_, grads) = guard(
                    losses::ac_actor_grads(&self.actor, traj, values, self.cfg.lambda_ll, eos),
                    "actor gradient",
                    self.step,
                )?;
                Ok(grads)
            }
            Mode::Reinforce => {
                let returns = targets::mc_targets(&traj.rewards);
                let baseline = self.baseline.as_ref().expect("baseline present");
                let weights: Vec<f64> = returns
                    .iter()
                    .zip(&traj.states)
                    .map(|(g, s)| g - baseline.value(s))
                    .collect();
                let (_, grads) = guard(
                    losses::reinforce_grads(&self.actor, traj, &weights, self.cfg.lambda_ll, eos),
                    "actor gradient",
                    self.step,
                )?;
                Ok(grads)
            }
            Mode::ReinforceCritic => {
                let values = traj.critic_values.as_ref().expect("critic ran");
                let returns = targets::mc_targets(&traj.rewards);
                // baseline: expected critic value under the sampling policy
                let weights: Vec<f64> = returns
                    .iter()
                    .enumerate()
                    .map(|(k, g)| {
                        let b: f64 = traj.dists[k]
                            .iter()
                            .zip(&values[k])
                            .map(|(p, q)| p * q)
                            .sum();
                        g - b
                    })
                    .collect();
                let (_, grads) = guard(
                    losses::reinforce_grads(&self.actor, traj, &weights, self.cfg.lambda_ll, eos),
                    "actor gradient",
                    self.step,
                )?;
                Ok(grads)
            }
        }
    }

    /// Train the linear baseline toward the observed returns-to-go.
    fn baseline_step(&mut self, traj: &Trajectory) -> Result<()> {
        if let Some(baseline) = &self.baseline {
            let returns = targets::mc_targets(&traj.rewards);
            let (_, grads) = baseline.loss_and_grads(&traj.states, &returns)?;
            let baseline = self.baseline.as_mut().unwrap();
            adam_step(&mut baseline.params, &grads, &mut self.adam_baseline)
                .map_err(SeqError::from)?;
        }
        Ok(())
    }

    fn check_value_bound(&self, values: &[Vec<f64>], which: &str) -> Result<()> {
        for row in values {
            for &v in row {
                if v.abs() > self.value_bound {
                    return Err(SeqError::Divergence(format!(
                        "{which} value {v:.3} exceeds bound {:.3} at step {}",
                        self.value_bound, self.step
                    )));
                }
            }
        }
        Ok(())
    }

    // ----- evaluation, checkpoints -----

    /// Greedy validation on a slice of the validation set. Returns
    /// (stop-rule key where lower is better, corpus CER, mean return).
    fn validate(&mut self, phase: &str) -> Result<(f64, f64, f64)> {
        let n = self.cfg.eval_examples.min(self.data.valid.len());
        let pairs = &self.data.valid[..n];
        let report = evaluate(
            &self.actor,
            pairs,
            DecodeMode::Greedy,
            &self.score,
            self.data.vocab.eos(),
            "valid",
            None,
        )?;
        self.logger
            .log(self.step, phase, "valid", "cer", report.cer)?;
        self.logger
            .log(self.step, phase, "valid", "return", report.mean_return)?;
        let key = match self.cfg.score {
            ScoreKind::NegCer => report.cer,
            ScoreKind::SmoothedBleu => -report.mean_return,
        };
        Ok((key, report.cer, report.mean_return))
    }

    fn interval_checkpoint(&mut self) -> Result<()> {
        if self.cfg.checkpoint_interval > 0 && self.step % self.cfg.checkpoint_interval == 0 {
            let path = self.out_dir.join(format!("step_{}.ckpt", self.step));
            self.write_checkpoint(&path)?;
        }
        Ok(())
    }

    fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut ckpt = Checkpoint {
            config_text: self.cfg.to_kv(),
            vocab_tokens: self.data.vocab.tokens().to_vec(),
            tensors: Default::default(),
        };
        ckpt.insert_params("actor", &self.actor.net.params);
        ckpt.insert_params("actor_shadow", &self.delayed_actor.net.params);
        ckpt.insert_adam("adam_actor", &self.adam_actor);
        if let Some(critic) = &self.critic {
            ckpt.insert_params("critic", &critic.net.params);
            ckpt.insert_adam("adam_critic", &self.adam_critic);
        }
        if let Some(target) = &self.target_critic {
            ckpt.insert_params("critic_shadow", &target.net.params);
        }
        if let Some(baseline) = &self.baseline {
            ckpt.insert_params("baseline", &baseline.params);
            ckpt.insert_adam("adam_baseline", &self.adam_baseline);
        }
        ckpt.write(path)
    }
}

/// Convert non-finite numerics into a divergence abort with context.
fn guard<T>(r: Result<T>, what: &str, step: u64) -> Result<T> {
    match r {
        Err(SeqError::Num(NumError::NonFinite { op })) => Err(SeqError::Divergence(format!(
            "non-finite value in {what} (op {op}) at step {step}"
        ))),
        Err(SeqError::Num(NumError::NonFiniteGrad(name))) => Err(SeqError::Divergence(format!(
            "non-finite gradient for {name} in {what} at step {step}"
        ))),
        Err(SeqError::Num(NumError::InvalidTensor(msg))) if msg.contains("non-finite") => Err(
            SeqError::Divergence(format!("non-finite tensor in {what} at step {step}")),
        ),
        other => other,
    }
}

#[derive(Debug, Default)]
struct StepStats {
    sampled_return: f64,
    critic_loss: f64,
    td_error: f64,
}
