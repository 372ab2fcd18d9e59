//! Grouped FIR-enhanced structured state space kernels.
//!
//! The crate provides the plain scalar-decay SSD recurrence and its
//! materialized semiseparable form ([`ssd`]), the grouped FIR variant and the
//! tap decomposition of its mask ([`gfssm`]), prompt-initialized chunked
//! streaming with exact continuation ([`sink`]), a hand-written backward pass
//! with finite-difference checking and toy training ([`grad`], [`train`]),
//! and a numerical-stability profiler ([`stability`]).
//!
//! Every kernel is generic over [`Scalar`]; the `*32` / `*64` aliases below
//! fix the precision.

pub mod error;
pub mod gfssm;
pub mod grad;
pub mod matrix;
pub mod rng;
pub mod scalar;
pub mod sink;
pub mod ssd;
pub mod stability;
pub mod train;

pub use error::{Error, Result};
pub use gfssm::{
    build_l_gfssm, build_l_group, fir_filter, gfssm_matrix_form, gfssm_matrix_form_capped, grouped_scan,
    grouped_scan_from, grouped_scan_observed, FirCoefficients, GfssmInstance, GroupConfig, GroupedHiddenState,
};
pub use grad::{
    central_difference, finite_diff_grad, gfssm_backward, layer_objective, max_gradient_error, LayerGradients,
    ParamBlock,
};
pub use matrix::Mat;
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use sink::{
    build_p, continue_chunk, continue_chunk_matrix, init_fresh, prime, stream, ChunkCache, PromptBank,
    PropagationMatrix,
};
pub use ssd::{
    build_l_plain, ssd_backward, ssd_matrix_form, ssd_matrix_form_capped, ssd_scan_recurrent, HiddenState,
    SsdGradients, SsdInstance, DEFAULT_MATERIALIZE_CAP,
};
pub use stability::{
    precision_divergence, product_profile, stability_report, Divergence, DivergenceReport, MatrixStats,
    ProductProfile, StabilityReport,
};
pub use train::{train_toy, Example, FirInit, ModelConfig, StepRecord, TaskKind, ToyModel, ToyTask, TrainReport};

pub type SsdInstance32 = SsdInstance<f32>;
pub type SsdInstance64 = SsdInstance<f64>;
pub type GfssmInstance32 = GfssmInstance<f32>;
pub type GfssmInstance64 = GfssmInstance<f64>;
pub type Mat32 = Mat<f32>;
pub type Mat64 = Mat<f64>;
