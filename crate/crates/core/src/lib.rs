//! Cross-sentence n-ary relation extraction with graph LSTM encoders.
//!
//! The pipeline, bottom to top:
//!
//! * [`docgraph`] — typed document graphs over pre-parsed text (adjacency,
//!   dependency, inter-sentence, coreference and discourse edges) and their
//!   partition into a forward/backward DAG pair.
//! * [`numeric`] — the small dense `f64` tensor kernel, a portable seeded
//!   RNG, and the finite-difference gradient oracle.
//! * [`graph_lstm`] — DAG-structured LSTM encoders over document graphs, in
//!   two parametrizations (one weight matrix per coarse edge type, or a
//!   shared weight tensor contracted with learned edge-label embeddings),
//!   with hand-derived exact backward passes.
//! * [`relation_model`] — mention pooling and per-task logistic relation
//!   heads on top of the encoder.
//! * [`dataset`] — distant supervision: candidate generation within a
//!   sentence window, the minimal-span filter, knowledge-base labeling,
//!   negative sampling and document-level fold assignment.
//! * [`train_eval`] — SGD training with early stopping, multi-task
//!   alternation, evaluation metrics, cross-validation and McNemar's test.
//! * [`synth`] — deterministic synthetic corpora used by the test suites
//!   and the built-in gradient checker.
//! * [`gradcheck`] — randomized finite-difference validation of the
//!   analytic gradients, exposed so the CLI can run it on demand.

pub mod dataset;
pub mod docgraph;
pub mod gradcheck;
pub mod graph_lstm;
pub mod numeric;
pub mod relation_model;
pub mod synth;
pub mod train_eval;
