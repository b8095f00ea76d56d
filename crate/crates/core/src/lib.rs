//! Table-lookup ("cyberneuron") neurons and a three-stage byte-stream
//! signature scanner built on them.
//!
//! - [`neuron`]: the neuron model, evaluation, classification and training.
//! - [`lab`]: seeded capacity, false-recognition and learning-rate experiments.
//! - [`sigdb`]: hex signature parsing, quality filtering and fragment expansion.
//! - [`scanner`]: the 24-bit block prefilter, precise confirmation and verification.

pub mod lab;
pub mod neuron;
pub mod scanner;
pub mod sigdb;

pub use neuron::{
    ActivationTrace, Classification, CyberNeuron, Direction, NeuronError, NeuronParams, Pattern,
    Strategy, SubstitutionTable, TrainOutcome, TrainStatus, Trainer,
};
