//! phase-forge: a self-contained playground for compiler pass-ordering
//! experiments.
//!
//! The crate bundles a toy SSA IR with a reference interpreter (`tir`), a
//! twelve-pass optimizer with an HLS-flavored cycle model (`passes`), static
//! program features and RL state encoding (`features`), a fixed-horizon
//! episode environment (`env`), from-scratch DQN and policy-gradient agents
//! (`agents`), classic search baselines (`search`), and the experiment
//! harness, corpus management, and pluggable cost backends (`harness`).

pub mod agents;
pub mod env;
pub mod features;
pub mod harness;
pub mod passes;
pub mod search;
pub mod tir;
