//! Simulation of information-seeking conversations over unlabeled documents,
//! with the metrics, filters and evaluation protocols used to judge them.

pub mod agents;
pub mod analysis;
pub mod corpus;
pub mod evalsuite;
pub mod humaneval;
pub mod simulator;
pub mod textnorm;
