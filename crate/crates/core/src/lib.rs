//! Generative modeling of discrete sequences with an isometric matrix-product
//! backbone and trainable measurement-operator token embeddings.
//!
//! The model assigns a probability to a token sequence as the expectation of
//! a product of per-site positive operators against a normalized chain state.
//! Both the chain tensors and the operator embedding are trainable; exact
//! likelihoods, gradients, marginals, conditionals, and any-order sampling
//! all reduce to transfer-matrix sweeps.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod linalg;
pub mod mps;
pub mod povm;
pub mod tensor;
pub mod training;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, ModelBundle,
    CHECKPOINT_FORMAT,
};
pub use data::{
    build_dataset, detokenize, parse_fasta, split, tokenize, Dataset, FastaRecord, LengthPolicy,
    Provenance, Rejection, TokenizeOutcome, Vocab,
};
pub use error::{Error, Result};
pub use evaluation::{
    build_scatter, correlation, empirical_pair_marginals, empirical_site_marginals,
    model_pair_marginals, model_site_marginals, test_nll, PairScatterRow, ScatterData,
    SiteMarginalTable, SiteScatterRow, TableSource,
};
pub use inference::{
    collapsed_state, conditional_distribution, joint_marginal, masked_fill, sample,
    CollapsedState, FillMode, PartialAssignment,
};
pub use linalg::{qr_reduced, random_isometry};
pub use mps::{bond_profile, sequence_probability, IsometricMps, IsometryReport};
pub use povm::{
    build_povm, one_hot_povm, qr_backward, validate_povm, Embedding, EmbeddingParams, Povm,
    ValidationReport,
};
pub use tensor::{contract, ComplexTensor};
pub use training::{
    batch_nll, finite_diff_check, gradients, retract, tangent_project, train, EpochRecord,
    GradReport, StepReport, TrainConfig, TrainHistory, TrainOutcome, Trainer,
};
