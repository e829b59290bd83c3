//! Privacy-adaptive masked-language-model objectives and privatized
//! pretraining data.
//!
//! Three targets are supported for a masked position:
//!
//! * **vanilla**: the single privatized token the user side would have sent,
//! * **prob**: the empirical distribution over several privatizations of the
//!   same token,
//! * **denoising**: the original token.

mod loss;
mod pretrain;

pub use loss::{denoising_mlm_loss, prob_mlm_loss, vanilla_mlm_loss, PerturbationSet};
pub use pretrain::{generate_pretraining_examples, MaskedExample, PretrainConfig};
