//! Safe sequential testing for logistic outcomes.
//!
//! At each round a context arrives whose binary label follows a latent
//! logistic model. The decision-maker either pays for a ground-truth test,
//! observing the label, or predicts it from the context. The goal is to test
//! as rarely as possible while keeping the running misclassification rate
//! under a budget `alpha` at every prefix, with probability `1 - delta`.
//!
//! The adaptive policy interleaves label collection with context-distribution
//! estimation and tests whenever the logistic score falls inside a
//! data-driven threshold built to be pessimistic: it tests whenever the
//! oracle that knows the true parameters would. Baselines (the fixed-
//! threshold oracle and the hindsight fractional-knapsack optimum) and a
//! seeded simulation harness round out the crate.
//!
//! Modules:
//! - [`numerics`]: special functions, small symmetric linear algebra, RNG streams.
//! - [`environment`]: context sampling on the unit ball and label generation.
//! - [`estimator`]: regularized logistic MLE, design matrix, confidence radius.
//! - [`calibrator`]: error estimation, threshold search, budget schedules, oracles.
//! - [`policies`]: the adaptive tester, the oracle baseline, the knapsack optimum.
//! - [`harness`]: episode orchestration, seed sweeps, aggregation.
//! - [`cli`]: the command-line surface and stable file formats.
//!
//! Every stochastic component draws from explicit seeded streams, so any run
//! replays bit-identically. See the `examples/` directory for runnable entry
//! points into each capability.

pub mod calibrator;
pub mod cli;
pub mod environment;
pub mod estimator;
pub mod harness;
pub mod numerics;
pub mod policies;
