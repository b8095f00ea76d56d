//! Seeded capacity experiments over random patterns.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: patterns,
//! negatives, probes and the training stream all derive from `seed`, so CSV
//! output is byte-identical across runs.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::neuron::{self, CyberNeuron, NeuronError, NeuronParams, Pattern, Trainer};

pub const CSV_HEADER: &str = "divider,epoch,fraction_learned,fraction_false,cumulative_rounds";

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("cannot draw {requested} distinct patterns from a space of {available}")]
    PatternSpace { requested: usize, available: u128 },
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExperimentConfig {
    pub n_inputs: usize,
    pub bits_per_input: u32,
    pub pattern_count: usize,
    /// Length of the byte string each pattern stands for.
    pub pattern_bytes: usize,
    pub divider: u32,
    /// Upper bound on training epochs.
    pub epochs: u32,
    pub probe_count: usize,
    pub seed: u64,
    /// Random patterns trained to stay at or below threshold2.
    pub negatives: usize,
    /// Evaluate-modify rounds each misclassified pattern gets per epoch.
    pub rounds_per_epoch: u32,
}

impl ExperimentConfig {
    /// A config for `pattern_count` patterns of `pattern_bytes` bytes split
    /// into `bits_per_input`-bit inputs, with an equal number of negatives.
    pub fn new(pattern_bytes: usize, bits_per_input: u32, pattern_count: usize) -> Self {
        let n_inputs = if bits_per_input == 0 {
            0
        } else {
            pattern_bytes * 8 / bits_per_input as usize
        };
        Self {
            n_inputs,
            bits_per_input,
            pattern_count,
            pattern_bytes,
            divider: neuron::DEFAULT_DIVIDER,
            epochs: 1000,
            probe_count: 10_000,
            seed: 1,
            negatives: pattern_count,
            rounds_per_epoch: 1,
        }
    }

    pub fn with_divider(mut self, divider: u32) -> Self {
        self.divider = divider;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: u32) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_probes(mut self, probe_count: usize) -> Self {
        self.probe_count = probe_count;
        self
    }

    pub fn with_negatives(mut self, negatives: usize) -> Self {
        self.negatives = negatives;
        self
    }

    pub fn with_rounds_per_epoch(mut self, rounds: u32) -> Self {
        self.rounds_per_epoch = rounds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits_per_input == 0 || self.bits_per_input > neuron::MAX_BITS_PER_INPUT {
            return Err(LabError::Config(format!(
                "bits per input must be in 1..={}",
                neuron::MAX_BITS_PER_INPUT
            )));
        }
        if self.pattern_bytes * 8 != self.n_inputs * self.bits_per_input as usize {
            return Err(LabError::Config(format!(
                "{} bytes x 8 != {} inputs x {} bits",
                self.pattern_bytes, self.n_inputs, self.bits_per_input
            )));
        }
        if self.n_inputs == 0 {
            return Err(LabError::Config("at least one input is required".into()));
        }
        if self.pattern_count == 0 {
            return Err(LabError::Config("pattern count must be at least 1".into()));
        }
        if self.divider == 0 {
            return Err(LabError::Config("divider must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(LabError::Config("epochs must be at least 1".into()));
        }
        if self.probe_count == 0 {
            return Err(LabError::Config("probe count must be at least 1".into()));
        }
        if self.rounds_per_epoch == 0 {
            return Err(LabError::Config("rounds per epoch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub epoch: u32,
    pub fraction_learned: f64,
    pub fraction_false: f64,
    pub cumulative_rounds: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSeries {
    pub config: ExperimentConfig,
    pub rows: Vec<SeriesRow>,
    /// The last row satisfied every training goal.
    pub converged: bool,
}

impl ExperimentSeries {
    /// First epoch where every pattern is learned and every negative is
    /// suppressed.
    pub fn converged_at(&self) -> Option<u32> {
        if self.converged {
            self.rows.last().map(|r| r.epoch)
        } else {
            None
        }
    }

    pub fn final_row(&self) -> Option<&SeriesRow> {
        self.rows.last()
    }

    /// CSV rows without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{}",
                self.config.divider, r.epoch, r.fraction_learned, r.fraction_false, r.cumulative_rounds
            )
            .unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.csv_rows())
    }
}

/// Derives an independent stream seed for one purpose within an experiment.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

const PATTERN_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

fn pattern_space(n_inputs: usize, bits: u32) -> u128 {
    let total = n_inputs as u64 * bits as u64;
    if total >= 127 {
        u128::MAX
    } else {
        1u128 << total
    }
}

fn draw_distinct(
    rng: &mut ChaCha8Rng,
    count: usize,
    n_inputs: usize,
    bits: u32,
    exclude: &HashSet<Pattern>,
) -> Result<Vec<Pattern>> {
    let space = pattern_space(n_inputs, bits);
    let available = space.saturating_sub(exclude.len() as u128);
    if count as u128 > available {
        return Err(LabError::PatternSpace {
            requested: count,
            available,
        });
    }
    let cells = 1u32 << bits;
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Pattern::new((0..n_inputs).map(|_| rng.gen_range(0..cells)).collect());
        if !exclude.contains(&p) && seen.insert(p.clone()) {
            out.push(p);
        }
    }
    Ok(out)
}

/// `count` distinct patterns with uniform coordinates in `[0, 2^bits)`.
pub fn gen_patterns(count: usize, n_inputs: usize, bits_per_input: u32, seed: u64) -> Result<Vec<Pattern>> {
    if count == 0 {
        return Err(LabError::Config("pattern count must be at least 1".into()));
    }
    if n_inputs == 0 || bits_per_input == 0 || bits_per_input > neuron::MAX_BITS_PER_INPUT {
        return Err(LabError::Config(format!(
            "unsupported geometry {n_inputs} inputs x {bits_per_input} bits"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_distinct(&mut rng, count, n_inputs, bits_per_input, &HashSet::new())
}

/// Share of `probe_count` random patterns (none of them in `trained_set`)
/// that the neuron classifies Known.
pub fn false_recognition_rate(
    neuron: &CyberNeuron,
    trained_set: &[Pattern],
    probe_count: usize,
    seed: u64,
) -> Result<f64> {
    if probe_count == 0 {
        return Err(LabError::Config("probe count must be at least 1".into()));
    }
    let exclude: HashSet<Pattern> = trained_set.iter().cloned().collect();
    let n = neuron.n_inputs();
    let bits = neuron.bits_per_input();
    let available = pattern_space(n, bits).saturating_sub(exclude.len() as u128);
    if available == 0 {
        return Err(LabError::PatternSpace {
            requested: probe_count,
            available,
        });
    }
    let threshold = neuron.params().threshold as i64;
    let cells = 1u32 << bits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = vec![0u32; n];
    let mut known = 0usize;
    let mut drawn = 0usize;
    while drawn < probe_count {
        for v in inputs.iter_mut() {
            *v = rng.gen_range(0..cells);
        }
        if !exclude.is_empty() && exclude.contains(&Pattern::new(inputs.clone())) {
            continue;
        }
        drawn += 1;
        if neuron.output_unchecked(&inputs) >= threshold {
            known += 1;
        }
    }
    Ok(known as f64 / probe_count as f64)
}

/// A finished capacity run: the series, the trained neuron and its sets.
#[derive(Clone, Debug)]
pub struct CapacityRun {
    pub series: ExperimentSeries,
    pub neuron: CyberNeuron,
    pub positives: Vec<Pattern>,
    pub negatives: Vec<Pattern>,
}

/// Trains one neuron on `pattern_count` random patterns (plus the negative
/// set), recording learned and false-recognition fractions after each epoch.
pub fn run_capacity(config: &ExperimentConfig) -> Result<CapacityRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, PATTERN_STREAM));
    let positives = draw_distinct(
        &mut rng,
        config.pattern_count,
        config.n_inputs,
        config.bits_per_input,
        &HashSet::new(),
    )?;
    let positive_set: HashSet<Pattern> = positives.iter().cloned().collect();
    let negatives = draw_distinct(
        &mut rng,
        config.negatives,
        config.n_inputs,
        config.bits_per_input,
        &positive_set,
    )?;

    let params = NeuronParams::default().with_divider(config.divider);
    let mut neuron = CyberNeuron::with_params(config.n_inputs, config.bits_per_input, params)?;
    let mut trainer =
        Trainer::random(stream_seed(config.seed, TRAIN_STREAM)).with_max_rounds(config.rounds_per_epoch);
    let probe_seed = stream_seed(config.seed, PROBE_STREAM);

    let mut rows = Vec::new();
    let mut cumulative_rounds = 0u64;
    let mut converged = false;
    for epoch in 1..=config.epochs {
        cumulative_rounds += trainer.train_epoch(&mut neuron, &positives, &negatives)?;
        let check = neuron::verify(&neuron, &positives, &negatives)?;
        let fraction_false = false_recognition_rate(&neuron, &positives, config.probe_count, probe_seed)?;
        rows.push(SeriesRow {
            epoch,
            fraction_learned: check.fraction_learned,
            fraction_false,
            cumulative_rounds,
        });
        if check.all_correct() {
            converged = true;
            break;
        }
    }
    Ok(CapacityRun {
        series: ExperimentSeries {
            config: config.clone(),
            rows,
            converged,
        },
        neuron,
        positives,
        negatives,
    })
}

pub fn capacity_experiment(config: &ExperimentConfig) -> Result<ExperimentSeries> {
    Ok(run_capacity(config)?.series)
}

/// Runs [`capacity_experiment`] once per divider on the same patterns.
/// Results come back in the order of `dividers`.
pub fn learning_rate_sweep(base: &ExperimentConfig, dividers: &[u32]) -> Result<Vec<ExperimentSeries>> {
    if dividers.is_empty() {
        return Err(LabError::Config("at least one divider is required".into()));
    }
    if let Some(d) = dividers.iter().find(|&&d| d == 0) {
        return Err(LabError::Config(format!("divider {d} is not allowed")));
    }
    dividers
        .par_iter()
        .map(|&d| capacity_experiment(&base.clone().with_divider(d)))
        .collect()
}

/// Concatenates several series under one CSV header.
pub fn sweep_csv(series: &[ExperimentSeries]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for s in series {
        out.push_str(&s.csv_rows());
    }
    out
}

/// Maps a cell to a gray level: zero is 128, `cell_max` is 255 and
/// `cell_min` is 0, linear on each side of zero.
pub fn cell_gray(value: i16, cell_min: i16, cell_max: i16) -> u8 {
    let v = value as f64;
    let level = if value >= 0 {
        128.0 + v * 127.0 / cell_max.max(1) as f64
    } else {
        128.0 - v * 128.0 / cell_min.min(-1) as f64
    };
    level.round().clamp(0.0, 255.0) as u8
}

/// Binary PGM (`P5`) bytes: one row per table, one column per cell.
pub fn table_image_pgm(neuron: &CyberNeuron) -> Vec<u8> {
    let p = neuron.params();
    let width = neuron.cells_per_table();
    let height = neuron.n_inputs();
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height);
    for t in neuron.tables() {
        out.extend(t.cells().iter().map(|&c| cell_gray(c, p.cell_min, p.cell_max)));
    }
    out
}

pub fn export_table_image(neuron: &CyberNeuron, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&table_image_pgm(neuron))?;
    f.flush()?;
    Ok(())
}
