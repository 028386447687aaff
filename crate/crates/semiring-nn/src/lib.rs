//! Neural networks whose nonlinearities are trainable semiring operators.
//!
//! Instead of alternating trainable linear maps with fixed activation
//! functions, layers here alternate linear maps with *quasilinear* operators
//! over a semiring: matrix products where addition and multiplication are
//! replaced by the semiring's `⊕`/`⊙`. Supported algebras are the tropical
//! max-plus `(ℝ∪{−∞}, max, +)` and min-plus `(ℝ∪{+∞}, min, +)` semirings and
//! the logarithmic family `a ⊕_μ b = (1/μ)·log(e^{μa} + e^{μb})`, which
//! interpolates between them as μ sweeps from −∞ to +∞ (plus the ordinary
//! linear semiring as the degenerate case).
//!
//! The crate provides:
//! - exact reverse-mode gradients for every operator (winner routing for the
//!   tropical kinds, temperature softmax for the logarithmic kind), on a
//!   small tape recorded per step ([`tape`], [`linalg`]);
//! - *fair* initialization for semiring weight matrices ([`init`]);
//! - the benchmark architectures, AdamW with split linear/semiring parameter
//!   groups, and a 1-cycle cosine schedule ([`model`], [`optim`]);
//! - dataset loaders and generators, a deterministic training harness, and
//!   an experiment runner with replayable manifests ([`data`], [`train`],
//!   [`runner`]);
//! - independent verification oracles: a brute-force reference product,
//!   finite-difference gradient checks and initialization audits
//!   ([`verify`]).
//!
//! Start with the runnable examples (`cargo run --release --example
//! train_iris`) or the `semiring-nn` binary (`train`, `eval`,
//! `reproduce-table1`, `gradcheck`, `propcheck`, `gen-data`).

pub mod config;
pub mod convnext;
pub mod data;
pub mod error;
pub mod init;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod runner;
pub mod scalar;
pub mod semiring;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use semiring::{SemiringKind, SemiringSpec};
pub use tensor::Tensor;
