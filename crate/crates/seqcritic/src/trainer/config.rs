//! Flat key=value run configuration. `--set key=value` overrides parse the
//! same way; unknown keys and bad values are all collected and reported
//! together.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Result, SeqError};
use crate::rewards::ScoreKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ll,
    Ac,
    Reinforce,
    ReinforceCritic,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "ll" => Some(Mode::Ll),
            "ac" => Some(Mode::Ac),
            "reinforce" => Some(Mode::Reinforce),
            "reinforce-critic" => Some(Mode::ReinforceCritic),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Ll => "ll",
            Mode::Ac => "ac",
            Mode::Reinforce => "reinforce",
            Mode::ReinforceCritic => "reinforce-critic",
        }
    }

    pub fn uses_critic(&self) -> bool {
        matches!(self, Mode::Ac | Mode::ReinforceCritic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Spelling,
    Toy,
}

impl TaskKind {
    pub fn parse(s: &str) -> Option<TaskKind> {
        match s {
            "spelling" => Some(TaskKind::Spelling),
            "toy" => Some(TaskKind::Toy),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Spelling => "spelling",
            TaskKind::Toy => "toy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub task: TaskKind,
    pub score: ScoreKind,
    pub seed: u64,
    pub data_dir: String,
    // model
    pub hidden: usize,
    pub emb: usize,
    pub critic_actor_states: bool,
    // optimization
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_annealed: f64,
    pub clip_norm: f64,
    // actor-critic constants
    pub gamma_theta: f64,
    pub gamma_phi: f64,
    pub lambda: f64,
    pub lambda_ll: f64,
    pub m_samples: usize,
    pub shaping: bool,
    pub td: bool,
    // phase control
    pub ll_max_steps: u64,
    pub ll_patience: u32,
    pub eval_interval: u64,
    pub eval_examples: usize,
    pub log_interval: u64,
    pub critic_pretrain_max_steps: u64,
    pub critic_pretrain_patience: u64,
    pub critic_pretrain_extra: u64,
    pub td_window: usize,
    pub joint_steps: u64,
    pub checkpoint_interval: u64,
    pub divergence_factor: f64,
    // decoding
    pub rho: f64,
    pub beam_width: usize,
    // toy-task data generation
    pub eta: f64,
    pub full_pipeline: bool,
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    /// Paper-default hyperparameters for the spelling task.
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Ll,
            task: TaskKind::Spelling,
            score: ScoreKind::NegCer,
            seed: 0,
            data_dir: String::new(),
            hidden: 64,
            emb: 32,
            critic_actor_states: false,
            batch_size: 16,
            lr_initial: 1e-3,
            lr_annealed: 1e-4,
            clip_norm: 1.0,
            gamma_theta: 1e-4,
            gamma_phi: 1e-4,
            lambda: 1e-3,
            lambda_ll: 0.1,
            m_samples: 1,
            shaping: true,
            td: true,
            ll_max_steps: 20_000,
            ll_patience: 3,
            eval_interval: 400,
            eval_examples: 300,
            log_interval: 50,
            critic_pretrain_max_steps: 20_000,
            critic_pretrain_patience: 500,
            critic_pretrain_extra: 500,
            td_window: 100,
            joint_steps: 20_000,
            checkpoint_interval: 0,
            divergence_factor: 10.0,
            rho: 0.0,
            beam_width: 10,
            eta: 0.3,
            full_pipeline: false,
            wall_clock: false,
        }
    }
}

macro_rules! config_fields {
    ($macro:ident) => {
        $macro! {
            (mode, "training objective: ll | ac | reinforce | reinforce-critic", mode),
            (task, "task: spelling | toy", task),
            (score, "return: neg-cer | smoothed-bleu", score),
            (seed, "master seed; every random stream derives from it", u64 seed),
            (data_dir, "dataset directory from generate-data (spelling task)", string data_dir),
            (hidden, "GRU units for encoder directions and decoder", usize hidden),
            (emb, "token embedding size", usize emb),
            (critic_actor_states, "feed actor decoder states to the critic", bool critic_actor_states),
            (batch_size, "examples per log-likelihood step", usize batch_size),
            (lr_initial, "Adam scale before annealing", f64 lr_initial),
            (lr_annealed, "Adam scale after annealing / during joint training", f64 lr_annealed),
            (clip_norm, "global gradient-norm clip; 0 disables", f64 clip_norm),
            (gamma_theta, "delayed-actor interpolation rate", f64 gamma_theta),
            (gamma_phi, "target-critic interpolation rate", f64 gamma_phi),
            (lambda, "critic variance-penalty weight", f64 lambda),
            (lambda_ll, "log-likelihood weight in the actor objective", f64 lambda_ll),
            (m_samples, "trajectories sampled per example", usize m_samples),
            (shaping, "potential-based reward shaping (false = terminal-only)", bool shaping),
            (td, "temporal-difference targets (false = Monte-Carlo)", bool td),
            (ll_max_steps, "log-likelihood phase step cap", u64 ll_max_steps),
            (ll_patience, "stop after this many evaluations without a new best", u32 ll_patience),
            (eval_interval, "steps between validation evaluations", u64 eval_interval),
            (eval_examples, "validation examples per evaluation", usize eval_examples),
            (log_interval, "steps between train-metric log records", u64 log_interval),
            (critic_pretrain_max_steps, "critic pretraining step cap", u64 critic_pretrain_max_steps),
            (critic_pretrain_patience, "steps without a new smoothed-TD-error maximum before stopping", u64 critic_pretrain_patience),
            (critic_pretrain_extra, "extra critic pretraining steps after the plateau", u64 critic_pretrain_extra),
            (td_window, "smoothing window for the TD error", usize td_window),
            (joint_steps, "joint training steps", u64 joint_steps),
            (checkpoint_interval, "steps between checkpoints; 0 = phase boundaries only", u64 checkpoint_interval),
            (divergence_factor, "abort when |Qhat| exceeds this multiple of the max return", f64 divergence_factor),
            (rho, "beam-search length penalty", f64 rho),
            (beam_width, "beam width for beam decoding", usize beam_width),
            (eta, "character corruption probability (toy task)", f64 eta),
            (full_pipeline, "run all phases even without --resume", bool full_pipeline),
            (wall_clock, "record real wall-clock milliseconds in the metrics log", bool wall_clock),
        }
    };
}

impl TrainConfig {
    /// Parse a whole key=value document on top of the defaults.
    pub fn from_kv(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        let mut explicit = BTreeSet::new();
        let mut errors = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v.trim()) {
                        errors.push(e);
                    } else {
                        explicit.insert(k.trim().to_string());
                    }
                }
                None => errors.push(format!("line {}: expected key=value", lineno + 1)),
            }
        }
        if !errors.is_empty() {
            return Err(SeqError::Config(errors));
        }
        cfg.apply_mode_defaults(&explicit);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `--set`-style overrides after a parsed config.
    pub fn apply_overrides(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut errors = Vec::new();
        let mut explicit = BTreeSet::new();
        for (k, v) in pairs {
            if let Err(e) = self.set(k, v) {
                errors.push(e);
            } else {
                explicit.insert(k.clone());
            }
        }
        if !errors.is_empty() {
            return Err(SeqError::Config(errors));
        }
        if explicit.contains("mode") && !explicit.contains("gamma_theta") {
            self.apply_mode_defaults(&explicit);
        }
        self.validate()
    }

    /// No delayed actor for the REINFORCE modes unless one was asked for.
    fn apply_mode_defaults(&mut self, explicit: &BTreeSet<String>) {
        if matches!(self.mode, Mode::Reinforce | Mode::ReinforceCritic)
            && !explicit.contains("gamma_theta")
        {
            self.gamma_theta = 1.0;
        }
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        macro_rules! setter {
            ($(($key:ident, $help:expr, $($kind:tt)+)),+ $(,)?) => {
                match key {
                    $(stringify!($key) => set_field!(self, value, $($kind)+),)+
                    _ => Err(format!("unknown key `{key}`")),
                }
            };
        }
        macro_rules! set_field {
            ($cfg:expr, $v:expr, mode) => {{
                $cfg.mode = Mode::parse($v)
                    .ok_or_else(|| format!("mode: `{}` is not ll|ac|reinforce|reinforce-critic", $v))?;
                Ok(())
            }};
            ($cfg:expr, $v:expr, task) => {{
                $cfg.task = TaskKind::parse($v)
                    .ok_or_else(|| format!("task: `{}` is not spelling|toy", $v))?;
                Ok(())
            }};
            ($cfg:expr, $v:expr, score) => {{
                $cfg.score = ScoreKind::parse($v)
                    .ok_or_else(|| format!("score: `{}` is not neg-cer|smoothed-bleu", $v))?;
                Ok(())
            }};
            ($cfg:expr, $v:expr, string $field:ident) => {{
                $cfg.$field = $v.to_string();
                Ok(())
            }};
            ($cfg:expr, $v:expr, bool $field:ident) => {{
                $cfg.$field = match $v {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    other => return Err(format!("{}: `{other}` is not a boolean", stringify!($field))),
                };
                Ok(())
            }};
            ($cfg:expr, $v:expr, u64 $field:ident) => {{ parse_num!($cfg, $v, u64, $field) }};
            ($cfg:expr, $v:expr, u32 $field:ident) => {{ parse_num!($cfg, $v, u32, $field) }};
            ($cfg:expr, $v:expr, usize $field:ident) => {{ parse_num!($cfg, $v, usize, $field) }};
            ($cfg:expr, $v:expr, f64 $field:ident) => {{ parse_num!($cfg, $v, f64, $field) }};
        }
        macro_rules! parse_num {
            ($cfg:expr, $v:expr, $ty:ty, $field:ident) => {{
                match $v.parse::<$ty>() {
                    Ok(x) => {
                        $cfg.$field = x;
                        Ok(())
                    }
                    Err(_) => Err(format!(
                        "{}: `{}` is not a valid {}",
                        stringify!($field),
                        $v,
                        stringify!($ty)
                    )),
                }
            }};
        }
        config_fields!(setter)
    }

    /// Stable key=value rendering; feeding it back reproduces this config.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        macro_rules! dumper {
            ($(($key:ident, $help:expr, $($kind:tt)+)),+ $(,)?) => {
                $(writeln!(out, "{}={}", stringify!($key), dump_field!(self, $($kind)+)).unwrap();)+
            };
        }
        macro_rules! dump_field {
            ($cfg:expr, mode) => {
                $cfg.mode.name().to_string()
            };
            ($cfg:expr, task) => {
                $cfg.task.name().to_string()
            };
            ($cfg:expr, score) => {
                $cfg.score.name().to_string()
            };
            ($cfg:expr, string $field:ident) => {
                $cfg.$field.clone()
            };
            ($cfg:expr, bool $field:ident) => {
                $cfg.$field.to_string()
            };
            ($cfg:expr, u64 $field:ident) => {
                $cfg.$field.to_string()
            };
            ($cfg:expr, u32 $field:ident) => {
                $cfg.$field.to_string()
            };
            ($cfg:expr, usize $field:ident) => {
                $cfg.$field.to_string()
            };
            ($cfg:expr, f64 $field:ident) => {
                format!("{}", $cfg.$field)
            };
        }
        config_fields!(dumper);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.gamma_theta > 0.0 && self.gamma_theta <= 1.0) {
            errors.push(format!("gamma_theta: {} not in (0, 1]", self.gamma_theta));
        }
        if !(self.gamma_phi > 0.0 && self.gamma_phi <= 1.0) {
            errors.push(format!("gamma_phi: {} not in (0, 1]", self.gamma_phi));
        }
        if self.lambda < 0.0 {
            errors.push(format!("lambda: {} must be >= 0", self.lambda));
        }
        if self.lambda_ll < 0.0 {
            errors.push(format!("lambda_ll: {} must be >= 0", self.lambda_ll));
        }
        if self.m_samples < 1 {
            errors.push("m_samples: must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            errors.push(format!("eta: {} not in [0, 1]", self.eta));
        }
        if self.batch_size < 1 {
            errors.push("batch_size: must be >= 1".into());
        }
        if self.hidden < 1 || self.emb < 1 {
            errors.push("hidden/emb: must be >= 1".into());
        }
        if self.beam_width < 1 {
            errors.push("beam_width: must be >= 1".into());
        }
        if self.rho < 0.0 {
            errors.push(format!("rho: {} must be >= 0", self.rho));
        }
        if self.task == TaskKind::Spelling && self.data_dir.is_empty() {
            errors.push("data_dir: required for task=spelling".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(SeqError::Config(errors))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.data_dir = "d".into();
        cfg.mode = Mode::Ac;
        cfg.lambda = 1e-4;
        cfg.seed = 7;
        let text = cfg.to_kv();
        let back = TrainConfig::from_kv(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_all_reported() {
        let err = TrainConfig::from_kv("bogus=1\nseed=zzz\nwhat=2\ntask=toy\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("bogus"), "{text}");
        assert!(text.contains("what"), "{text}");
        assert!(text.contains("seed"), "{text}");
    }

    #[test]
    fn reinforce_modes_default_to_no_delayed_actor() {
        let cfg = TrainConfig::from_kv("task=toy\nmode=reinforce-critic\n").unwrap();
        assert_eq!(cfg.gamma_theta, 1.0);
        let cfg = TrainConfig::from_kv("task=toy\nmode=reinforce-critic\ngamma_theta=0.5\n").unwrap();
        assert_eq!(cfg.gamma_theta, 0.5);
        let cfg = TrainConfig::from_kv("task=toy\nmode=ac\n").unwrap();
        assert_eq!(cfg.gamma_theta, 1e-4);
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(TrainConfig::from_kv("task=toy\ngamma_phi=0\n").is_err());
        assert!(TrainConfig::from_kv("task=toy\nlambda=-1\n").is_err());
        assert!(TrainConfig::from_kv("task=toy\nm_samples=0\n").is_err());
    }
}
