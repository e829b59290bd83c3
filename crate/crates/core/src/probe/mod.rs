//! A linear probe over averaged token embeddings, trainable on raw or
//! privatized input. Stands in for a fine-tuned encoder when measuring how
//! privatization affects downstream utility.

mod dataset;
mod model;

pub use dataset::{load_tsv, parse_tsv, LabeledDataset, LabeledExample};
pub use model::{eval_probe, eval_probe_correct, train_probe, Privatization, ProbeConfig, ProbeModel};
