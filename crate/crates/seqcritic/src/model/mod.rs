//! Attention encoder-decoder networks.
//!
//! The actor and the critic share one architecture: an embedding table, a
//! bidirectional GRU encoder over the conditioning sequence, a GRU decoder
//! with soft attention over the annotations, and an affine output head. The
//! actor conditions on the input X and turns head outputs into a softmax
//! distribution; the critic conditions on the ground truth Y, consumes the
//! sampled tokens, and reads the head outputs as one value per action.

mod baseline;
mod run;

pub use baseline::BaselineModel;
pub use run::{RunStep, SeqRun};

use numcore::{ParamSet, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::vocab::TokenId;

/// Width of the centered uniform initialization interval.
pub const INIT_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Token embedding size.
    pub emb: usize,
    /// Encoder GRU units per direction.
    pub enc: usize,
    /// Decoder GRU units; also the attention MLP hidden size.
    pub dec: usize,
    /// Extra features appended to every decoder input (the critic receives
    /// the actor's decoder states this way; 0 disables).
    pub extra_input: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, emb: usize, enc: usize, dec: usize) -> Self {
        ModelConfig {
            vocab_size,
            emb,
            enc,
            dec,
            extra_input: 0,
        }
    }

    pub fn with_extra_input(mut self, extra: usize) -> Self {
        self.extra_input = extra;
        self
    }

    /// Annotation vector size (both encoder directions).
    pub fn ann(&self) -> usize {
        2 * self.enc
    }

    /// Decoder GRU input size: embedding + context + extra features.
    pub fn dec_in(&self) -> usize {
        self.emb + self.ann() + self.extra_input
    }

    /// Embedding row reserved for the beginning-of-sequence input; the
    /// end-of-sequence token is never fed back in.
    pub fn bos(&self) -> TokenId {
        self.vocab_size
    }
}

/// Parameters plus configuration for one encoder-decoder network.
#[derive(Debug, Clone)]
pub struct SeqNet {
    pub cfg: ModelConfig,
    pub params: ParamSet,
}

impl SeqNet {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> SeqNet {
        let mut params = ParamSet::new();
        let mut add = |name: &str, shape: &[usize], rng: &mut ChaCha8Rng| {
            let n: usize = shape.iter().product();
            let half = INIT_WIDTH / 2.0;
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-half..half)).collect();
            params.insert(
                name.to_string(),
                Tensor::new(shape.to_vec(), data).expect("finite init"),
            );
        };
        let v = cfg.vocab_size;
        add("emb_enc", &[v, cfg.emb], rng);
        add("emb_dec", &[v + 1, cfg.emb], rng);
        for dir in ["enc_f", "enc_b"] {
            for gate in ["z", "r", "h"] {
                add(&format!("{dir}.w{gate}"), &[cfg.enc, cfg.emb], rng);
                add(&format!("{dir}.u{gate}"), &[cfg.enc, cfg.enc], rng);
                add(&format!("{dir}.b{gate}"), &[cfg.enc], rng);
            }
        }
        for gate in ["z", "r", "h"] {
            add(&format!("dec.w{gate}"), &[cfg.dec, cfg.dec_in()], rng);
            add(&format!("dec.u{gate}"), &[cfg.dec, cfg.dec], rng);
            add(&format!("dec.b{gate}"), &[cfg.dec], rng);
        }
        add("attn.w", &[cfg.dec, cfg.dec], rng);
        add("attn.u", &[cfg.ann(), cfg.dec], rng);
        add("attn.b", &[cfg.dec], rng);
        add("attn.v", &[cfg.dec], rng);
        add("init.w", &[cfg.dec, cfg.enc], rng);
        add("init.b", &[cfg.dec], rng);
        add("out.w", &[v, cfg.dec + cfg.ann()], rng);
        add("out.b", &[v], rng);
        SeqNet { cfg, params }
    }

    /// Network with the same shapes and all parameters zero.
    pub fn zeroed(cfg: ModelConfig) -> SeqNet {
        let mut rng = crate::rng::stream_rng(0, "zeroed");
        let mut net = SeqNet::new(cfg, &mut rng);
        for t in net.params.values_mut() {
            for x in t.data_mut() {
                *x = 0.0;
            }
        }
        net
    }
}

/// The policy network p(y_t | Yhat_{1..t-1}, X).
#[derive(Debug, Clone)]
pub struct ActorModel {
    pub net: SeqNet,
}

impl ActorModel {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> ActorModel {
        assert_eq!(cfg.extra_input, 0, "the actor takes no extra inputs");
        ActorModel {
            net: SeqNet::new(cfg, rng),
        }
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.net.cfg
    }

    /// Annotation vectors (h_1..h_L) for an input sequence.
    pub fn encode(&self, x: &[TokenId]) -> Result<Vec<Tensor>> {
        let run = SeqRun::begin(&self.net, x, false)?;
        Ok(run.annotation_vectors())
    }

    /// Attention weights and context for a decoder state over explicit
    /// annotation vectors.
    pub fn attend(&self, state: &Tensor, annotations: &[Tensor]) -> Result<(Tensor, Tensor)> {
        run::attend_tensors(&self.net, state, annotations)
    }

    /// One decoder step: p(. | prefix, X), the new state, and the new context.
    /// `annotations` come from `encode`; pass `cfg().bos()` as the first
    /// previous token.
    pub fn actor_step(
        &self,
        annotations: &[Tensor],
        state: &Tensor,
        ctx: &Tensor,
        y_prev: TokenId,
    ) -> Result<(Vec<f64>, Tensor, Tensor)> {
        run::step_tensors(&self.net, annotations, state, ctx, y_prev)
    }
}

/// The value network Qhat(a; Yhat_{1..t}, Y), one value per action.
#[derive(Debug, Clone)]
pub struct CriticModel {
    pub net: SeqNet,
}

impl CriticModel {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha8Rng) -> CriticModel {
        CriticModel {
            net: SeqNet::new(cfg, rng),
        }
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.net.cfg
    }

    /// Value vectors at every consumed position: entry k holds
    /// Qhat(a; prefix[..k], y_ref) for all actions a, for k = 0..=prefix.len().
    ///
    /// With `actor_states`, entry k's step receives the actor state aligned
    /// with the same consumed prefix (`actor_states[k]`); the slice must have
    /// `prefix.len() + 1` entries.
    pub fn values(
        &self,
        y_ref: &[TokenId],
        prefix: &[TokenId],
        actor_states: Option<&[Vec<f64>]>,
    ) -> Result<Vec<Vec<f64>>> {
        let mut run = SeqRun::begin(&self.net, y_ref, false)?;
        let positions = prefix.len() + 1;
        if let Some(states) = actor_states {
            if states.len() < positions {
                return Err(crate::error::SeqError::Data(format!(
                    "need {positions} actor states, got {}",
                    states.len()
                )));
            }
        }
        let mut out = Vec::with_capacity(positions);
        for k in 0..positions {
            let prev = if k == 0 {
                self.net.cfg.bos()
            } else {
                prefix[k - 1]
            };
            let extra = match actor_states {
                Some(states) => Some(Tensor::vector(states[k].clone())?),
                None => None,
            };
            let step = run.step(prev, extra.as_ref())?;
            out.push(run.value(step.logits).data().to_vec());
        }
        Ok(out)
    }
}

/// Element-wise shadow interpolation: shadow <- gamma*source + (1-gamma)*shadow.
pub fn shadow_update(shadow: &mut ParamSet, source: &ParamSet, gamma: f64) -> Result<()> {
    if shadow.len() != source.len() {
        return Err(crate::error::SeqError::Data(format!(
            "shadow has {} tensors, source has {}",
            shadow.len(),
            source.len()
        )));
    }
    for (name, t) in shadow.iter_mut() {
        let s = source.get(name).ok_or_else(|| {
            crate::error::SeqError::Data(format!("shadow parameter `{name}` missing in source"))
        })?;
        *t = t.lerp_toward(s, gamma)?;
    }
    Ok(())
}
