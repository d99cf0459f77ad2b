//! Actor-critic training for sequence prediction.
//!
//! An attention encoder-decoder GRU actor is trained against task scores
//! (negated character error rate or smoothed sentence BLEU) with four
//! objectives: teacher-forced log-likelihood, actor-critic with a
//! ground-truth-conditioned critic, REINFORCE with a linear baseline, and
//! REINFORCE with the critic as baseline. Brute-force enumeration oracles
//! verify the policy-gradient and temporal-difference mathematics exactly
//! on tiny tasks.

pub mod checkpoint;
pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rewards;
pub mod rng;
pub mod trainer;
pub mod trajectory;
pub mod vocab;

pub use error::{Result, SeqError};
