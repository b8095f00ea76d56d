//! Table-lookup neurons.
//!
//! A [`CyberNeuron`] replaces the weighted sum of a formal neuron with one
//! substitution table per input: each input value is used directly as a cell
//! index, and the neuron output is the sum of the selected cells. There is no
//! activation function; the output is compared against two thresholds to give
//! a three-zone [`Classification`].
//!
//! Training only touches the cells selected by the pattern being trained, so
//! patterns that share no input values never interfere with each other.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_THRESHOLD: i32 = 100;
pub const DEFAULT_THRESHOLD2: i32 = 20;
pub const DEFAULT_DIVIDER: u32 = 4;
pub const DEFAULT_CELL_MIN: i16 = -126;
pub const DEFAULT_CELL_MAX: i16 = 127;
pub const DEFAULT_MAX_ROUNDS: u32 = 10_000;

/// Widest supported input. 24 bits gives 16,777,216 cells per table.
pub const MAX_BITS_PER_INPUT: u32 = 24;

const MAGIC: &[u8; 4] = b"CNR1";
const HEADER_LEN: usize = 4 + 7 * 4;

#[derive(Debug, Error)]
pub enum NeuronError {
    #[error("pattern has {got} inputs, neuron has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input {position} has value {value}, table has only {cells} cells")]
    IndexOutOfRange {
        position: usize,
        value: u32,
        cells: usize,
    },
    #[error("invalid neuron parameters: {0}")]
    InvalidParams(String),
    #[error("malformed neuron file: {0}")]
    Malformed(String),
    #[error("unsupported neuron file version {0:?}")]
    VersionMismatch(char),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NeuronError> = std::result::Result<T, E>;

/// One synapse: a flat array of signed cells indexed by the input value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutionTable {
    cells: Vec<i16>,
}

impl SubstitutionTable {
    pub fn zeroed(len: usize) -> Self {
        Self {
            cells: vec![0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[i16] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, index: usize) -> i16 {
        self.cells[index]
    }
}

/// Thresholds, learning divider and cell bounds of a neuron.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeuronParams {
    /// Outputs at or above this are [`Classification::Known`].
    pub threshold: i32,
    /// Outputs below this are [`Classification::Unknown`].
    pub threshold2: i32,
    /// Reciprocal of the learning coefficient; 4 means k = 0.25.
    pub divider: u32,
    pub cell_min: i16,
    pub cell_max: i16,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            threshold2: DEFAULT_THRESHOLD2,
            divider: DEFAULT_DIVIDER,
            cell_min: DEFAULT_CELL_MIN,
            cell_max: DEFAULT_CELL_MAX,
        }
    }
}

impl NeuronParams {
    pub fn with_divider(mut self, divider: u32) -> Self {
        self.divider = divider;
        self
    }

    pub fn with_thresholds(mut self, threshold: i32, threshold2: i32) -> Self {
        self.threshold = threshold;
        self.threshold2 = threshold2;
        self
    }

    pub fn with_cell_bounds(mut self, cell_min: i16, cell_max: i16) -> Self {
        self.cell_min = cell_min;
        self.cell_max = cell_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold2 >= self.threshold {
            return Err(NeuronError::InvalidParams(format!(
                "threshold2 ({}) must be below threshold ({})",
                self.threshold2, self.threshold
            )));
        }
        if self.divider == 0 {
            return Err(NeuronError::InvalidParams("divider must be at least 1".into()));
        }
        // A fresh neuron is all zeros, so zero must be a legal cell value.
        if self.cell_min > 0 || self.cell_max < 0 || self.cell_min >= self.cell_max {
            return Err(NeuronError::InvalidParams(format!(
                "cell bounds [{}, {}] must satisfy min <= 0 <= max and min < max",
                self.cell_min, self.cell_max
            )));
        }
        Ok(())
    }
}

/// A vector of table indices, one per neuron input.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(Vec<u32>);

impl Pattern {
    pub fn new(inputs: Vec<u32>) -> Self {
        Self(inputs)
    }

    pub fn inputs(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Splits a byte string into `bits`-wide inputs, most significant bit first.
    ///
    /// The byte string must divide evenly: `bytes.len() * 8` has to be a
    /// multiple of `bits`.
    pub fn from_bytes(bytes: &[u8], bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS_PER_INPUT {
            return Err(NeuronError::InvalidParams(format!(
                "bits per input must be in 1..={MAX_BITS_PER_INPUT}, got {bits}"
            )));
        }
        let total_bits = bytes.len() as u64 * 8;
        if total_bits % bits as u64 != 0 {
            return Err(NeuronError::InvalidParams(format!(
                "{} bytes do not split into {bits}-bit inputs",
                bytes.len()
            )));
        }
        let mut inputs = Vec::with_capacity((total_bits / bits as u64) as usize);
        let mut acc: u64 = 0;
        let mut acc_bits = 0u32;
        let mask = (1u64 << bits) - 1;
        for &b in bytes {
            acc = (acc << 8) | b as u64;
            acc_bits += 8;
            while acc_bits >= bits {
                acc_bits -= bits;
                inputs.push(((acc >> acc_bits) & mask) as u32);
            }
            acc &= (1u64 << acc_bits) - 1;
        }
        Ok(Self(inputs))
    }
}

impl From<Vec<u32>> for Pattern {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// The cells selected by one evaluation and the resulting output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationTrace {
    pub active_cells: Vec<u32>,
    pub output: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    Known,
    Partial,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Memorize: push the output up to `threshold`.
    Add,
    /// Forget: push the output down to `threshold2`.
    Remove,
}

impl Direction {
    fn sign(self) -> i16 {
        match self {
            Direction::Add => 1,
            Direction::Remove => -1,
        }
    }
}

/// Result of applying one modifier to the active cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Applied {
    /// Unit changes actually made.
    pub steps: u64,
    /// Steps remained but every active cell sat at its bound.
    pub saturated: bool,
    /// Table the next sequential step would visit.
    pub next_table: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CyberNeuron {
    tables: Vec<SubstitutionTable>,
    bits_per_input: u32,
    params: NeuronParams,
}

impl CyberNeuron {
    /// A zeroed neuron with default thresholds (100 / 20), divider 4 and
    /// cell bounds −126..=127.
    pub fn new(n_inputs: usize, bits_per_input: u32) -> Result<Self> {
        Self::with_params(n_inputs, bits_per_input, NeuronParams::default())
    }

    pub fn with_params(n_inputs: usize, bits_per_input: u32, params: NeuronParams) -> Result<Self> {
        if n_inputs == 0 {
            return Err(NeuronError::InvalidParams("a neuron needs at least one input".into()));
        }
        if bits_per_input == 0 || bits_per_input > MAX_BITS_PER_INPUT {
            return Err(NeuronError::InvalidParams(format!(
                "bits per input must be in 1..={MAX_BITS_PER_INPUT}, got {bits_per_input}"
            )));
        }
        params.validate()?;
        let cells = 1usize << bits_per_input;
        Ok(Self {
            tables: vec![SubstitutionTable::zeroed(cells); n_inputs],
            bits_per_input,
            params,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.tables.len()
    }

    pub fn bits_per_input(&self) -> u32 {
        self.bits_per_input
    }

    pub fn cells_per_table(&self) -> usize {
        1usize << self.bits_per_input
    }

    pub fn params(&self) -> &NeuronParams {
        &self.params
    }

    pub fn tables(&self) -> &[SubstitutionTable] {
        &self.tables
    }

    /// Overwrites one cell, clamped to the configured bounds.
    pub fn set_cell(&mut self, table: usize, cell: usize, value: i16) {
        let v = value.clamp(self.params.cell_min, self.params.cell_max);
        self.tables[table].cells[cell] = v;
    }

    /// Sum of every cell in every table.
    pub fn total_mass(&self) -> i64 {
        self.tables
            .iter()
            .flat_map(|t| t.cells.iter())
            .map(|&c| c as i64)
            .sum()
    }

    fn check_inputs(&self, inputs: &[u32]) -> Result<()> {
        if inputs.len() != self.tables.len() {
            return Err(NeuronError::DimensionMismatch {
                expected: self.tables.len(),
                got: inputs.len(),
            });
        }
        let cells = self.cells_per_table();
        if let Some((position, &value)) = inputs
            .iter()
            .enumerate()
            .find(|(_, &v)| v as usize >= cells)
        {
            return Err(NeuronError::IndexOutOfRange {
                position,
                value,
                cells,
            });
        }
        Ok(())
    }

    /// Sums the cells selected by `inputs`.
    pub fn output(&self, inputs: &[u32]) -> Result<i64> {
        self.check_inputs(inputs)?;
        Ok(self.output_unchecked(inputs))
    }

    #[inline]
    pub(crate) fn output_unchecked(&self, inputs: &[u32]) -> i64 {
        self.tables
            .iter()
            .zip(inputs)
            .map(|(t, &i)| t.cells[i as usize] as i64)
            .sum()
    }

    /// Output for a byte string on a neuron with 8-bit inputs, one byte per input.
    pub fn output_bytes(&self, bytes: &[u8]) -> Result<i64> {
        if self.bits_per_input != 8 {
            return Err(NeuronError::InvalidParams(format!(
                "byte evaluation needs 8-bit inputs, neuron has {}",
                self.bits_per_input
            )));
        }
        if bytes.len() != self.tables.len() {
            return Err(NeuronError::DimensionMismatch {
                expected: self.tables.len(),
                got: bytes.len(),
            });
        }
        Ok(self
            .tables
            .iter()
            .zip(bytes)
            .map(|(t, &b)| t.cells[b as usize] as i64)
            .sum())
    }

    pub fn evaluate(&self, pattern: &Pattern) -> Result<ActivationTrace> {
        let inputs = pattern.inputs();
        self.check_inputs(inputs)?;
        Ok(ActivationTrace {
            active_cells: inputs.to_vec(),
            output: self.output_unchecked(inputs),
        })
    }

    pub fn classify(&self, output: i64) -> Classification {
        if output >= self.params.threshold as i64 {
            Classification::Known
        } else if output < self.params.threshold2 as i64 {
            Classification::Unknown
        } else {
            Classification::Partial
        }
    }

    /// Number of unit changes for one training round.
    ///
    /// The gap to the target threshold is divided by the divider with
    /// truncation toward zero; a zero result becomes ±1 so every round moves.
    pub fn compute_modifier(&self, output: i64, direction: Direction) -> i64 {
        let divider = self.params.divider as i64;
        match direction {
            Direction::Add => match (self.params.threshold as i64 - output) / divider {
                0 => 1,
                m => m,
            },
            Direction::Remove => match (self.params.threshold2 as i64 - output) / divider {
                0 => -1,
                m => m,
            },
        }
    }

    fn check_trace(&self, trace: &ActivationTrace) -> Result<()> {
        self.check_inputs(&trace.active_cells)
    }

    /// Moves one cell a unit toward `direction`; false if it sits at the bound.
    #[inline]
    fn step_cell(&mut self, table: usize, cell: usize, direction: Direction) -> bool {
        let (min, max) = (self.params.cell_min, self.params.cell_max);
        let c = &mut self.tables[table].cells[cell];
        match direction {
            Direction::Add if *c < max => {
                *c += 1;
                true
            }
            Direction::Remove if *c > min => {
                *c -= 1;
                true
            }
            _ => false,
        }
    }

    /// True if at least one active cell can still move in `direction`.
    pub fn can_move(&self, trace: &ActivationTrace, direction: Direction) -> bool {
        self.tables
            .iter()
            .zip(&trace.active_cells)
            .any(|(t, &i)| {
                let c = t.cells[i as usize];
                match direction {
                    Direction::Add => c < self.params.cell_max,
                    Direction::Remove => c > self.params.cell_min,
                }
            })
    }

    /// Applies `|modifier|` unit steps round-robin over the active cells,
    /// starting at table 0.
    pub fn apply_modifier_sequential(
        &mut self,
        trace: &ActivationTrace,
        modifier: i64,
    ) -> Result<Applied> {
        self.apply_modifier_sequential_from(trace, modifier, 0)
    }

    /// Round-robin application starting at table `start`.
    ///
    /// Cells at their bound are skipped without using up a step. When a full
    /// cycle finds nothing movable the remaining steps are dropped and
    /// [`Applied::saturated`] is set.
    pub fn apply_modifier_sequential_from(
        &mut self,
        trace: &ActivationTrace,
        modifier: i64,
        start: usize,
    ) -> Result<Applied> {
        self.check_trace(trace)?;
        let n = self.tables.len();
        let direction = if modifier >= 0 { Direction::Add } else { Direction::Remove };
        let mut remaining = modifier.unsigned_abs();
        let mut table = start % n;
        let mut steps = 0u64;
        let mut idle = 0usize;
        while remaining > 0 {
            let cell = trace.active_cells[table] as usize;
            if self.step_cell(table, cell, direction) {
                steps += 1;
                remaining -= 1;
                idle = 0;
            } else {
                idle += 1;
                if idle == n {
                    return Ok(Applied {
                        steps,
                        saturated: true,
                        next_table: table,
                    });
                }
            }
            table = (table + 1) % n;
        }
        Ok(Applied {
            steps,
            saturated: false,
            next_table: table,
        })
    }

    /// Applies `|modifier|` iterations, each picking a table uniformly at
    /// random and moving its active cell by one. A pick that lands on a cell
    /// at its bound does nothing but still uses up the iteration.
    pub fn apply_modifier_random<R: Rng + ?Sized>(
        &mut self,
        trace: &ActivationTrace,
        modifier: i64,
        rng: &mut R,
    ) -> Result<Applied> {
        self.check_trace(trace)?;
        let n = self.tables.len();
        let direction = if modifier >= 0 { Direction::Add } else { Direction::Remove };
        let mut steps = 0u64;
        for _ in 0..modifier.unsigned_abs() {
            let table = rng.gen_range(0..n);
            let cell = trace.active_cells[table] as usize;
            if self.step_cell(table, cell, direction) {
                steps += 1;
            }
        }
        Ok(Applied {
            steps,
            saturated: false,
            next_table: 0,
        })
    }

    /// Serialized size in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.tables.len() * self.cells_per_table() * 2
    }

    /// Writes the little-endian `CNR1` format: header, then every table's
    /// cells as `i16` in table order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.params;
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&(self.tables.len() as u32).to_le_bytes());
        header.extend_from_slice(&self.bits_per_input.to_le_bytes());
        header.extend_from_slice(&p.threshold.to_le_bytes());
        header.extend_from_slice(&p.threshold2.to_le_bytes());
        header.extend_from_slice(&p.divider.to_le_bytes());
        header.extend_from_slice(&(p.cell_min as i32).to_le_bytes());
        header.extend_from_slice(&(p.cell_max as i32).to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.cells_per_table() * 2);
        for t in &self.tables {
            buf.clear();
            for &c in &t.cells {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        read_exact_or(&mut r, &mut header, "truncated header")?;
        if &header[..3] != b"CNR" {
            return Err(NeuronError::Malformed("bad magic".into()));
        }
        if header[3] != MAGIC[3] {
            return Err(NeuronError::VersionMismatch(header[3] as char));
        }
        let word = |i: usize| -> [u8; 4] { header[4 + 4 * i..8 + 4 * i].try_into().unwrap() };
        let n_inputs = u32::from_le_bytes(word(0)) as usize;
        let bits = u32::from_le_bytes(word(1));
        let threshold = i32::from_le_bytes(word(2));
        let threshold2 = i32::from_le_bytes(word(3));
        let divider = u32::from_le_bytes(word(4));
        let cell_min = i32::from_le_bytes(word(5));
        let cell_max = i32::from_le_bytes(word(6));
        let to_i16 = |v: i32| {
            i16::try_from(v).map_err(|_| NeuronError::Malformed(format!("cell bound {v} exceeds 16 bits")))
        };
        let params = NeuronParams {
            threshold,
            threshold2,
            divider,
            cell_min: to_i16(cell_min)?,
            cell_max: to_i16(cell_max)?,
        };
        let mut neuron = Self::with_params(n_inputs, bits, params)
            .map_err(|e| NeuronError::Malformed(e.to_string()))?;
        let mut buf = vec![0u8; neuron.cells_per_table() * 2];
        for t in 0..n_inputs {
            read_exact_or(&mut r, &mut buf, "truncated cell data")?;
            for (cell, chunk) in neuron.tables[t].cells.iter_mut().zip(buf.chunks_exact(2)) {
                let v = i16::from_le_bytes([chunk[0], chunk[1]]);
                if v < params.cell_min || v > params.cell_max {
                    return Err(NeuronError::Malformed(format!(
                        "cell value {v} outside [{}, {}]",
                        params.cell_min, params.cell_max
                    )));
                }
                *cell = v;
            }
        }
        Ok(neuron)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut slice = bytes;
        let neuron = Self::read_from(&mut slice)?;
        if !slice.is_empty() {
            return Err(NeuronError::Malformed(format!("{} trailing bytes", slice.len())));
        }
        Ok(neuron)
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NeuronError::Malformed(what.into()),
        _ => NeuronError::Io(e),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainStatus {
    /// The training goal holds after the last evaluation.
    Converged,
    /// No active cell can move further toward the goal.
    Saturated,
    /// `max_rounds` evaluate-modify rounds ran without reaching the goal.
    RoundLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainOutcome {
    pub status: TrainStatus,
    pub rounds: u32,
    /// Unit cell changes made (decrements count too when removing).
    pub total_cell_increments: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Round-robin over tables 0..N-1.
    Sequential,
    /// Uniformly random table per unit step, seeded.
    Random { seed: u64 },
}

/// Per-epoch state of a batch run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u32,
    /// Share of the add set with output >= threshold.
    pub fraction_learned: f64,
    /// Share of the remove set still above threshold2.
    pub fraction_unremoved: f64,
    pub cumulative_rounds: u64,
}

/// Drives add/remove training on a neuron with a fixed strategy.
///
/// The sequential strategy keeps its round-robin position across the rounds
/// of one `train_add`/`train_remove` call, so the unit steps of a whole call
/// spread evenly over the tables.
#[derive(Clone, Debug)]
pub struct Trainer {
    strategy: Strategy,
    rng: ChaCha8Rng,
    max_rounds: u32,
}

impl Trainer {
    pub fn new(strategy: Strategy) -> Self {
        let seed = match strategy {
            Strategy::Sequential => 0,
            Strategy::Random { seed } => seed,
        };
        Self {
            strategy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    pub fn sequential() -> Self {
        Self::new(Strategy::Sequential)
    }

    pub fn random(seed: u64) -> Self {
        Self::new(Strategy::Random { seed })
    }

    pub fn with_max_rounds(mut self, max_rounds: u32) -> Self {
        self.max_rounds = max_rounds;
        self
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn max_rounds(&self) -> u32 {
        self.max_rounds
    }

    pub fn train_add(&mut self, neuron: &mut CyberNeuron, pattern: &Pattern) -> Result<TrainOutcome> {
        self.train(neuron, pattern, Direction::Add)
    }

    pub fn train_remove(&mut self, neuron: &mut CyberNeuron, pattern: &Pattern) -> Result<TrainOutcome> {
        self.train(neuron, pattern, Direction::Remove)
    }

    fn train(&mut self, neuron: &mut CyberNeuron, pattern: &Pattern, direction: Direction) -> Result<TrainOutcome> {
        let threshold = neuron.params.threshold as i64;
        let threshold2 = neuron.params.threshold2 as i64;
        let goal_met = |output: i64| match direction {
            Direction::Add => output >= threshold,
            Direction::Remove => output <= threshold2,
        };

        let mut rounds = 0u32;
        let mut total = 0u64;
        let mut cursor = 0usize;
        loop {
            let trace = neuron.evaluate(pattern)?;
            let status = if goal_met(trace.output) {
                Some(TrainStatus::Converged)
            } else if !neuron.can_move(&trace, direction) {
                Some(TrainStatus::Saturated)
            } else if rounds >= self.max_rounds {
                Some(TrainStatus::RoundLimit)
            } else {
                None
            };
            if let Some(status) = status {
                return Ok(TrainOutcome {
                    status,
                    rounds,
                    total_cell_increments: total,
                });
            }

            let modifier = neuron.compute_modifier(trace.output, direction);
            debug_assert_eq!(modifier.signum(), direction.sign() as i64);
            let applied = match self.strategy {
                Strategy::Sequential => {
                    let a = neuron.apply_modifier_sequential_from(&trace, modifier, cursor)?;
                    cursor = a.next_table;
                    a
                }
                Strategy::Random { .. } => neuron.apply_modifier_random(&trace, modifier, &mut self.rng)?,
            };
            rounds += 1;
            total += applied.steps;
        }
    }

    /// One pass: trains every add pattern below threshold and every remove
    /// pattern above threshold2. Returns the rounds spent.
    pub fn train_epoch(
        &mut self,
        neuron: &mut CyberNeuron,
        add_set: &[Pattern],
        remove_set: &[Pattern],
    ) -> Result<u64> {
        let mut rounds = 0u64;
        for p in add_set {
            rounds += self.train_add(neuron, p)?.rounds as u64;
        }
        for p in remove_set {
            rounds += self.train_remove(neuron, p)?.rounds as u64;
        }
        Ok(rounds)
    }

    /// Repeats [`Trainer::train_epoch`] until every add pattern is Known and
    /// every remove pattern is at or below threshold2, or `max_epochs` passes.
    pub fn batch_train(
        &mut self,
        neuron: &mut CyberNeuron,
        add_set: &[Pattern],
        remove_set: &[Pattern],
        max_epochs: u32,
    ) -> Result<Vec<EpochMetrics>> {
        let mut metrics = Vec::new();
        let mut cumulative_rounds = 0u64;
        for epoch in 1..=max_epochs {
            cumulative_rounds += self.train_epoch(neuron, add_set, remove_set)?;
            let check = verify(neuron, add_set, remove_set)?;
            metrics.push(EpochMetrics {
                epoch,
                fraction_learned: check.fraction_learned,
                fraction_unremoved: check.fraction_unremoved,
                cumulative_rounds,
            });
            if check.all_correct() {
                break;
            }
        }
        Ok(metrics)
    }
}

/// Recognition check over an add set and a remove set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verification {
    pub fraction_learned: f64,
    pub fraction_unremoved: f64,
}

impl Verification {
    pub fn all_correct(&self) -> bool {
        self.fraction_learned == 1.0 && self.fraction_unremoved == 0.0
    }
}

pub fn verify(neuron: &CyberNeuron, add_set: &[Pattern], remove_set: &[Pattern]) -> Result<Verification> {
    let threshold = neuron.params.threshold as i64;
    let threshold2 = neuron.params.threshold2 as i64;
    let mut learned = 0usize;
    for p in add_set {
        if neuron.output(p.inputs())? >= threshold {
            learned += 1;
        }
    }
    let mut unremoved = 0usize;
    for p in remove_set {
        if neuron.output(p.inputs())? > threshold2 {
            unremoved += 1;
        }
    }
    let frac = |n: usize, total: usize| n as f64 / total as f64;
    Ok(Verification {
        fraction_learned: if add_set.is_empty() { 1.0 } else { frac(learned, add_set.len()) },
        fraction_unremoved: if remove_set.is_empty() { 0.0 } else { frac(unremoved, remove_set.len()) },
    })
}
