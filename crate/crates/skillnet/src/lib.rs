//! Task-agnostic skill embeddings from unlabeled multi-view demonstration
//! videos.
//!
//! A frame encoder is trained with a bounded lifted metric loss over
//! synchronized camera pairs, combined with an entropy-regularized
//! adversarial game against a latent-Gaussian task discriminator. The
//! resulting embedding is evaluated by cross-view temporal alignment on
//! held-out tasks, and doubles as a dense reward for training a continuous
//! control policy from a single demonstration.
//!
//! See the `examples/` directory for one runnable example per capability and
//! the `skillnet` binary for the experiment CLI.

pub mod checkpoint;
pub mod config;
pub mod dataio;
pub mod discriminator;
pub mod encoder;
pub mod evaluation;
pub mod losses;
pub mod nn;
pub mod rl;
pub mod trainer;
pub mod world;
