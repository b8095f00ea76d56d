//! Three-stage byte-stream scanner.
//!
//! 1. A 2-input, 24-bit prefilter neuron looks at non-overlapping 6-byte
//!    blocks. Each block is split into two big-endian 24-bit halves; the
//!    block fires when the two selected cells sum to the fire threshold.
//! 2. An optional 8-input, 8-bit neuron confirms a candidate if any 8-byte
//!    window near the block is known to it.
//! 3. The block's fragment index entries name the windows it could belong
//!    to; each is compared byte for byte against the data.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neuron::{Classification, CyberNeuron, NeuronError, Pattern, Trainer};
use crate::sigdb::{
    self, check_window, fragment_index, FilterRules, FragmentSet, SigDbError, Window11, FRAGMENT_LEN, WINDOW_LEN,
};

pub const TABLE_CELLS: usize = 1 << 24;
pub const BLOCK_LEN: usize = FRAGMENT_LEN;
pub const DEFAULT_FIRE_THRESHOLD: i32 = 2;
pub const DEFAULT_NEAREST_FLOOR: u8 = 8;
pub const SCHEMA_VERSION: u32 = 1;
/// Bytes per MB in throughput figures.
pub const MB: f64 = (1u64 << 20) as f64;

/// Stage-2 neighbourhood around a candidate block, inclusive byte bounds
/// relative to the block offset.
pub const CONFIRM_BEFORE: usize = 10;
pub const CONFIRM_AFTER: usize = 15;
const PRECISE_WIDTH: usize = 8;

/// Parallel scans split input into chunks of this many bytes.
const CHUNK_LEN: usize = BLOCK_LEN * 174_762;

const PREFILTER_MAGIC: &[u8; 4] = b"CPF1";

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("malformed prefilter file: {0}")]
    Malformed(String),
    #[error("precise stage must have 8 inputs of 8 bits, found {inputs} x {bits}")]
    PreciseShape { inputs: usize, bits: u32 },
    #[error("invalid scan configuration: {0}")]
    Config(String),
    #[error(transparent)]
    SigDb(#[from] SigDbError),
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ScanError> = std::result::Result<T, E>;

#[inline(always)]
fn pack(block: &[u8]) -> (usize, usize) {
    let hi = (block[0] as usize) << 16 | (block[1] as usize) << 8 | block[2] as usize;
    let lo = (block[3] as usize) << 16 | (block[4] as usize) << 8 | block[5] as usize;
    (hi, lo)
}

/// Stage 1: two 2^24-cell tables and the fragment index behind them.
#[derive(Clone, Debug)]
pub struct Prefilter {
    table0: Vec<i8>,
    table1: Vec<i8>,
    fire_threshold: i32,
    fragments: FragmentSet,
    index: HashMap<[u8; FRAGMENT_LEN], Vec<(u32, u8)>>,
    windows: Vec<[u8; WINDOW_LEN]>,
    /// Bit per `hi` value that could reach the threshold with the largest
    /// `table1` cell; lets the scan loop skip `table1` for most blocks.
    gate: Vec<u64>,
}

impl PartialEq for Prefilter {
    fn eq(&self, other: &Self) -> bool {
        self.fire_threshold == other.fire_threshold
            && self.table0 == other.table0
            && self.table1 == other.table1
            && self.fragments == other.fragments
    }
}

impl Prefilter {
    fn from_parts(table0: Vec<i8>, table1: Vec<i8>, fire_threshold: i32, fragments: FragmentSet) -> Self {
        let index = fragment_index(&fragments);
        let windows = fragments.windows();
        let max1 = table1.iter().copied().max().unwrap_or(0) as i32;
        let mut gate = vec![0u64; TABLE_CELLS / 64];
        for (hi, &c) in table0.iter().enumerate() {
            if c as i32 + max1 >= fire_threshold {
                gate[hi >> 6] |= 1 << (hi & 63);
            }
        }
        Self {
            table0,
            table1,
            fire_threshold,
            fragments,
            index,
            windows,
            gate,
        }
    }

    pub fn table0(&self) -> &[i8] {
        &self.table0
    }

    pub fn table1(&self) -> &[i8] {
        &self.table1
    }

    pub fn fire_threshold(&self) -> i32 {
        self.fire_threshold
    }

    pub fn fragments(&self) -> &FragmentSet {
        &self.fragments
    }

    /// Windows by owner id.
    pub fn windows(&self) -> &[[u8; WINDOW_LEN]] {
        &self.windows
    }

    pub fn owner_name(&self, owner: u32) -> &str {
        &self.fragments.owners()[owner as usize]
    }

    /// `(owner, shift)` pairs of a fragment, empty when not indexed.
    pub fn lookup(&self, block: &[u8; FRAGMENT_LEN]) -> &[(u32, u8)] {
        self.index.get(block).map_or(&[], Vec::as_slice)
    }

    pub fn nonzero_cells(&self) -> usize {
        self.table0.iter().chain(&self.table1).filter(|&&c| c != 0).count()
    }

    #[inline(always)]
    fn fires_packed(&self, hi: usize, lo: usize) -> bool {
        self.gate[hi >> 6] >> (hi & 63) & 1 != 0
            && self.table0[hi] as i32 + self.table1[lo] as i32 >= self.fire_threshold
    }

    /// Whether a 6-byte block fires.
    ///
    /// # Panics
    ///
    /// If `block` is shorter than 6 bytes.
    pub fn fires(&self, block: &[u8]) -> bool {
        let (hi, lo) = pack(&block[..BLOCK_LEN]);
        self.fires_packed(hi, lo)
    }

    /// Appends firing block offsets of `data`, shifted by `base`.
    fn scan_into(&self, data: &[u8], base: usize, out: &mut Vec<usize>) {
        for (i, block) in data.chunks_exact(BLOCK_LEN).enumerate() {
            let (hi, lo) = pack(block);
            if self.fires_packed(hi, lo) {
                out.push(base + i * BLOCK_LEN);
            }
        }
    }

    fn count_fires(&self, data: &[u8]) -> u64 {
        data.chunks_exact(BLOCK_LEN)
            .filter(|b| {
                let (hi, lo) = pack(b);
                self.fires_packed(hi, lo)
            })
            .count() as u64
    }

    pub fn encoded_len(&self) -> usize {
        let records = self.fragments.len() * (FRAGMENT_LEN + 5);
        let names: usize = self.fragments.owners().iter().map(|n| 4 + n.len()).sum();
        4 + 4 + 2 * TABLE_CELLS + 4 + records + 4 + names
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PREFILTER_MAGIC)?;
        w.write_all(&self.fire_threshold.to_le_bytes())?;
        for table in [&self.table0, &self.table1] {
            let raw: Vec<u8> = table.iter().map(|&c| c as u8).collect();
            w.write_all(&raw)?;
        }
        self.fragments.write_records(w)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 8];
        read_exact(&mut r, &mut head, "header")?;
        if &head[..4] != PREFILTER_MAGIC {
            return Err(ScanError::Malformed("bad magic".into()));
        }
        let fire_threshold = i32::from_le_bytes(head[4..].try_into().unwrap());
        let mut tables = Vec::with_capacity(2);
        for name in ["table 0", "table 1"] {
            let mut raw = vec![0u8; TABLE_CELLS];
            read_exact(&mut r, &mut raw, name)?;
            tables.push(raw.into_iter().map(|b| b as i8).collect::<Vec<i8>>());
        }
        let fragments = FragmentSet::read_records(r).map_err(|e| match e {
            SigDbError::Malformed(m) => ScanError::Malformed(m),
            other => ScanError::SigDb(other),
        })?;
        let table1 = tables.pop().unwrap();
        let table0 = tables.pop().unwrap();
        Ok(Self::from_parts(table0, table1, fire_threshold, fragments))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut slice = bytes;
        let p = Self::read_from(&mut slice)?;
        if !slice.is_empty() {
            return Err(ScanError::Malformed(format!("{} trailing bytes", slice.len())));
        }
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => ScanError::Malformed(format!("truncated {what}")),
        _ => ScanError::Io(e),
    })
}

/// Sets `table0[hi] = table1[lo] = 1` for every fragment; fires at 2.
pub fn build_prefilter(fragments: &FragmentSet) -> Prefilter {
    let mut table0 = vec![0i8; TABLE_CELLS];
    let mut table1 = vec![0i8; TABLE_CELLS];
    for e in fragments.entries() {
        let (hi, lo) = pack(&e.bytes);
        table0[hi] = 1;
        table1[lo] = 1;
    }
    Prefilter::from_parts(table0, table1, DEFAULT_FIRE_THRESHOLD, fragments.clone())
}

/// A firing block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateHit {
    /// Byte offset, a multiple of 6.
    pub block_offset: usize,
    pub block: [u8; BLOCK_LEN],
}

fn run_on_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Offsets of firing blocks at 0, 6, 12, ...; a trailing partial block is
/// ignored.
pub fn scan_blocks(data: &[u8], prefilter: &Prefilter) -> Vec<usize> {
    let mut out = Vec::new();
    prefilter.scan_into(data, 0, &mut out);
    out
}

/// [`scan_blocks`] over chunks on `threads` workers (0 = all cores).
/// Chunk boundaries are multiples of 6, so the result is identical.
pub fn scan_blocks_parallel(data: &[u8], prefilter: &Prefilter, threads: usize) -> Vec<usize> {
    if threads == 1 || data.len() <= CHUNK_LEN {
        return scan_blocks(data, prefilter);
    }
    run_on_threads(threads, || {
        let parts: Vec<Vec<usize>> = data
            .par_chunks(CHUNK_LEN)
            .enumerate()
            .map(|(i, chunk)| {
                let mut out = Vec::new();
                prefilter.scan_into(chunk, i * CHUNK_LEN, &mut out);
                out
            })
            .collect();
        parts.concat()
    })
}

/// Stage-2 neuron: 8 inputs of 8 bits, trained on the four 8-byte slices of
/// every window.
pub fn build_precise<'a>(windows: impl IntoIterator<Item = &'a [u8; WINDOW_LEN]>) -> Result<CyberNeuron> {
    let mut neuron = CyberNeuron::new(PRECISE_WIDTH, 8)?;
    let mut trainer = Trainer::sequential();
    for w in windows {
        for s in 0..=WINDOW_LEN - PRECISE_WIDTH {
            let pattern = Pattern::new(w[s..s + PRECISE_WIDTH].iter().map(|&b| b as u32).collect());
            trainer.train_add(&mut neuron, &pattern)?;
        }
    }
    Ok(neuron)
}

pub fn check_precise_shape(neuron: &CyberNeuron) -> Result<()> {
    if neuron.n_inputs() != PRECISE_WIDTH || neuron.bits_per_input() != 8 {
        return Err(ScanError::PreciseShape {
            inputs: neuron.n_inputs(),
            bits: neuron.bits_per_input(),
        });
    }
    Ok(())
}

/// True iff some 8-byte window lying within
/// `[offset - 10, offset + 15]` (clamped to `data`) is Known.
pub fn precise_confirm(precise: &CyberNeuron, data: &[u8], offset: usize) -> bool {
    let start = offset.saturating_sub(CONFIRM_BEFORE);
    let end = (offset + CONFIRM_AFTER + 1).min(data.len());
    if end < start + PRECISE_WIDTH {
        return false;
    }
    data[start..end].windows(PRECISE_WIDTH).any(|w| {
        let out = precise.output_bytes(w).expect("shape checked by caller");
        precise.classify(out) == Classification::Known
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Nearest,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VerifiedHit {
    pub name: String,
    /// Offset of the matched window's first byte.
    pub offset: usize,
    pub kind: MatchKind,
    /// Equal bytes out of 11.
    pub similarity: u8,
}

/// Stage 3 for the block at `offset`. Every `(owner, shift)` the block is
/// indexed under gives a window start `offset - shift`; the first owner
/// matching all 11 bytes wins, otherwise the closest owner if it reaches
/// `floor` equal bytes.
pub fn verify_exact(prefilter: &Prefilter, data: &[u8], offset: usize, floor: u8) -> Option<VerifiedHit> {
    let block: &[u8; BLOCK_LEN] = data.get(offset..offset + BLOCK_LEN)?.try_into().ok()?;
    let mut best: Option<(u8, u32, usize)> = None;
    for &(owner, shift) in prefilter.lookup(block) {
        let Some(start) = offset.checked_sub(shift as usize) else {
            continue;
        };
        let Some(span) = data.get(start..start + WINDOW_LEN) else {
            continue;
        };
        let window = &prefilter.windows[owner as usize];
        let same = span.iter().zip(window).filter(|(a, b)| a == b).count() as u8;
        if same as usize == WINDOW_LEN {
            return Some(VerifiedHit {
                name: prefilter.owner_name(owner).to_string(),
                offset: start,
                kind: MatchKind::Exact,
                similarity: same,
            });
        }
        if best.map_or(true, |(b, _, _)| same > b) {
            best = Some((same, owner, start));
        }
    }
    let (same, owner, start) = best?;
    (same >= floor).then(|| VerifiedHit {
        name: prefilter.owner_name(owner).to_string(),
        offset: start,
        kind: MatchKind::Nearest,
        similarity: same,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanConfig {
    /// Run stage 2 when a precise neuron is supplied.
    pub use_precise: bool,
    pub nearest_floor: u8,
    /// Worker threads; 0 = all cores, 1 = current thread.
    pub threads: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            use_precise: true,
            nearest_floor: DEFAULT_NEAREST_FLOOR,
            threads: 1,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nearest_floor as usize > WINDOW_LEN {
            return Err(ScanError::Config(format!(
                "nearest floor {} exceeds the window length {WINDOW_LEN}",
                self.nearest_floor
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prefilter_ms: f64,
    pub precise_ms: f64,
    pub verify_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub bytes_scanned: u64,
    pub blocks: u64,
    pub elapsed_ms: f64,
    pub mb_per_s: f64,
    pub candidates: u64,
    pub survivors: u64,
    pub hits: Vec<VerifiedHit>,
    pub precise_stage: bool,
    pub stage_timings: StageTimings,
}

impl ScanReport {
    /// A copy with all wall-clock fields zeroed.
    pub fn without_timings(&self) -> Self {
        Self {
            elapsed_ms: 0.0,
            mb_per_s: 0.0,
            stage_timings: StageTimings::default(),
            ..self.clone()
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn throughput(bytes: u64, elapsed: Duration) -> f64 {
    bytes as f64 / MB / elapsed.as_secs_f64().max(1e-9)
}

/// Output of a scan with the candidate and survivor offsets kept.
#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub report: ScanReport,
    pub candidates: Vec<usize>,
    pub survivors: Vec<usize>,
    pub stage_durations: [Duration; 3],
}

/// Runs all configured stages and keeps intermediate offsets.
pub fn scan_detailed(
    data: &[u8],
    prefilter: &Prefilter,
    precise: Option<&CyberNeuron>,
    config: &ScanConfig,
) -> Result<ScanOutcome> {
    config.validate()?;
    let precise = precise.filter(|_| config.use_precise);
    if let Some(p) = precise {
        check_precise_shape(p)?;
    }
    let threads = config.threads;

    let t0 = Instant::now();
    let candidates = scan_blocks_parallel(data, prefilter, threads);
    let t1 = Instant::now();
    let survivors = match precise {
        Some(p) => run_on_threads(threads, || {
            candidates
                .par_iter()
                .copied()
                .filter(|&off| precise_confirm(p, data, off))
                .collect::<Vec<_>>()
        }),
        None => candidates.clone(),
    };
    let t2 = Instant::now();
    let hits: Vec<VerifiedHit> = run_on_threads(threads, || {
        survivors
            .par_iter()
            .filter_map(|&off| verify_exact(prefilter, data, off, config.nearest_floor))
            .collect()
    });
    let t3 = Instant::now();

    assert!(survivors.len() <= candidates.len() && hits.len() <= survivors.len());
    let elapsed = t3 - t0;
    let bytes = data.len() as u64;
    let report = ScanReport {
        schema_version: SCHEMA_VERSION,
        bytes_scanned: bytes,
        blocks: bytes / BLOCK_LEN as u64,
        elapsed_ms: ms(elapsed),
        mb_per_s: throughput(bytes, elapsed),
        candidates: candidates.len() as u64,
        survivors: survivors.len() as u64,
        hits,
        precise_stage: precise.is_some(),
        stage_timings: StageTimings {
            prefilter_ms: ms(t1 - t0),
            precise_ms: ms(t2 - t1),
            verify_ms: ms(t3 - t2),
        },
    };
    Ok(ScanOutcome {
        report,
        candidates,
        survivors,
        stage_durations: [t1 - t0, t2 - t1, t3 - t2],
    })
}

pub fn scan(
    data: &[u8],
    prefilter: &Prefilter,
    precise: Option<&CyberNeuron>,
    config: &ScanConfig,
) -> Result<ScanReport> {
    scan_detailed(data, prefilter, precise, config).map(|o| o.report)
}

/// Reads `path` into memory and scans it.
pub fn scan_file(
    path: impl AsRef<Path>,
    prefilter: &Prefilter,
    precise: Option<&CyberNeuron>,
    config: &ScanConfig,
) -> Result<ScanReport> {
    let data = std::fs::read(path)?;
    scan(&data, prefilter, precise, config)
}

const RANDOM_CHUNK: usize = BLOCK_LEN << 20;

/// Feeds seeded uniform random bytes to `f` in chunks whose lengths are
/// multiples of 6, except possibly the last.
fn random_chunks(bytes: u64, seed: u64, mut f: impl FnMut(&[u8])) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0u8; RANDOM_CHUNK];
    let mut left = bytes;
    while left > 0 {
        let n = left.min(RANDOM_CHUNK as u64) as usize;
        rng.fill_bytes(&mut buf[..n]);
        f(&buf[..n]);
        left -= n as u64;
    }
}

/// Fraction of the non-overlapping blocks of `bytes` seeded random bytes
/// that fire.
pub fn measure_fp_rate(prefilter: &Prefilter, bytes: u64, seed: u64) -> f64 {
    let blocks = bytes / BLOCK_LEN as u64;
    if blocks == 0 {
        return 0.0;
    }
    let mut fired = 0;
    random_chunks(bytes, seed, |chunk| fired += prefilter.count_fires(chunk));
    fired as f64 / blocks as f64
}

/// Stage-1 and stage-2 pass counts over seeded random data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageRates {
    pub blocks: u64,
    pub candidates: u64,
    pub survivors: u64,
}

impl StageRates {
    pub fn candidate_rate(&self) -> f64 {
        self.candidates as f64 / self.blocks.max(1) as f64
    }

    pub fn survivor_rate(&self) -> f64 {
        self.survivors as f64 / self.blocks.max(1) as f64
    }
}

/// Like [`measure_fp_rate`] but also runs stage 2 on each candidate.
/// Neighbourhoods do not cross chunk boundaries.
pub fn measure_stage_rates(prefilter: &Prefilter, precise: &CyberNeuron, bytes: u64, seed: u64) -> Result<StageRates> {
    check_precise_shape(precise)?;
    let mut rates = StageRates {
        blocks: bytes / BLOCK_LEN as u64,
        candidates: 0,
        survivors: 0,
    };
    random_chunks(bytes, seed, |chunk| {
        for off in scan_blocks(chunk, prefilter) {
            rates.candidates += 1;
            rates.survivors += precise_confirm(precise, chunk, off) as u64;
        }
    });
    Ok(rates)
}

/// `len` seeded uniform random bytes.
pub fn random_buffer(len: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

/// `count` random windows that pass `rules`, named `<prefix>.<i>`.
pub fn random_windows(count: usize, seed: u64, prefix: &str, rules: &FilterRules) -> Vec<Window11> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut bytes = [0u8; WINDOW_LEN];
        rng.fill_bytes(&mut bytes);
        if check_window(&bytes, rules).is_ok() {
            out.push(Window11 {
                bytes,
                owner: format!("{prefix}.{}", out.len()),
                offset_in_body: 0,
            });
        }
    }
    out
}

/// Builds a prefilter straight from windows.
pub fn prefilter_from_windows(windows: &[Window11]) -> Prefilter {
    build_prefilter(&FragmentSet::from_windows(windows))
}

/// Seeded buffer mixing uniform random bytes, zero runs, ASCII text and
/// low-alphabet machine-code-like bytes in 4 KiB segments.
pub fn synthetic_corpus(len: usize, seed: u64) -> Vec<u8> {
    const SEGMENT: usize = 4096;
    const WORDS: &[&str] = &[
        "the ", "data ", "file ", "system ", "error ", "value ", "return ", "init ", "config ", "buffer ",
        "\n", "table ", "index ", "0x", "user ", "scan ", "block ", "=", ";", "struct ",
    ];
    const OPCODES: &[u8] = &[
        0x55, 0x89, 0xe5, 0x8b, 0x45, 0x08, 0x83, 0xec, 0x50, 0x53, 0x56, 0x57, 0xe8, 0xc3, 0x5d, 0x90, 0x00, 0xff,
        0x74, 0x75, 0xeb, 0x31, 0xc0, 0x48,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0u8; len];
    for seg in out.chunks_mut(SEGMENT) {
        match rng.gen_range(0..4) {
            0 => rng.fill_bytes(seg),
            1 => {}
            2 => {
                let mut text = Vec::with_capacity(seg.len() + 16);
                while text.len() < seg.len() {
                    text.extend_from_slice(WORDS[rng.gen_range(0..WORDS.len())].as_bytes());
                }
                seg.copy_from_slice(&text[..seg.len()]);
            }
            _ => seg.iter_mut().for_each(|b| *b = OPCODES[rng.gen_range(0..OPCODES.len())]),
        }
    }
    out
}

/// Writes `window` into `data` at `offset`.
pub fn plant(data: &mut [u8], window: &[u8; WINDOW_LEN], offset: usize) {
    data[offset..offset + WINDOW_LEN].copy_from_slice(window);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSet {
    Prefilter,
    PrefilterPrecise,
    Full,
}

impl StageSet {
    pub fn label(self) -> &'static str {
        match self {
            StageSet::Prefilter => "prefilter",
            StageSet::PrefilterPrecise => "prefilter+precise",
            StageSet::Full => "prefilter+precise+verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub stages: StageSet,
    pub label: &'static str,
    pub threads: usize,
    pub reps: usize,
    pub median_mb_s: f64,
    pub best_mb_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub bytes: u64,
    pub candidates: u64,
    pub survivors: u64,
    pub hits: u64,
    pub rows: Vec<BenchRow>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

/// Times `reps` scans of `data`. Each repetition runs all stages once; the
/// row for a stage set divides the bytes by the summed time of its stages,
/// so adding stages never raises throughput. Rows are given for one thread
/// and, when `threads != 1`, for `threads` workers.
pub fn bench(
    data: &[u8],
    prefilter: &Prefilter,
    precise: &CyberNeuron,
    reps: usize,
    threads: usize,
) -> Result<BenchReport> {
    if reps == 0 {
        return Err(ScanError::Config("repetitions must be at least 1".into()));
    }
    let mut report = BenchReport {
        schema_version: SCHEMA_VERSION,
        bytes: data.len() as u64,
        candidates: 0,
        survivors: 0,
        hits: 0,
        rows: Vec::new(),
    };
    let mut thread_counts = vec![1];
    if threads != 1 {
        thread_counts.push(threads);
    }
    for t in thread_counts {
        let config = ScanConfig {
            threads: t,
            ..ScanConfig::default()
        };
        let mut rates = [Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..reps {
            let outcome = scan_detailed(data, prefilter, Some(precise), &config)?;
            report.candidates = outcome.report.candidates;
            report.survivors = outcome.report.survivors;
            report.hits = outcome.report.hits.len() as u64;
            let mut total = Duration::ZERO;
            for (stage, d) in outcome.stage_durations.iter().enumerate() {
                total += *d;
                rates[stage].push(throughput(data.len() as u64, total));
            }
        }
        let effective = if t == 0 { rayon::current_num_threads() } else { t };
        for (stages, r) in [StageSet::Prefilter, StageSet::PrefilterPrecise, StageSet::Full]
            .into_iter()
            .zip(&rates)
        {
            report.rows.push(BenchRow {
                stages,
                label: stages.label(),
                threads: effective,
                reps,
                median_mb_s: median(r),
                best_mb_s: r.iter().copied().fold(f64::MIN, f64::max),
            });
        }
    }
    Ok(report)
}

/// Loads signature files and builds both stages.
pub fn build_from_database<P: AsRef<Path>>(
    paths: &[P],
    rules: &FilterRules,
) -> Result<(sigdb::LoadedDatabase, Prefilter, CyberNeuron)> {
    let db = sigdb::load_database(paths, rules)?;
    let prefilter = build_prefilter(&db.fragments);
    let precise = build_precise(prefilter.windows())?;
    Ok((db, prefilter, precise))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(bytes: [u8; WINDOW_LEN], owner: &str) -> Window11 {
        Window11 {
            bytes,
            owner: owner.into(),
            offset_in_body: 0,
        }
    }

    const W: [u8; WINDOW_LEN] = [0x01, 0x90, 0xe8, 0x00, 0x00, 0x5e, 0x56, 0xba, 0x4c, 0x08, 0x81];

    fn random_data(len: usize, seed: u64) -> Vec<u8> {
        let mut v = vec![0u8; len];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
        v
    }

    fn single_fragment_set(frags: &[[u8; 6]]) -> Prefilter {
        let mut t0 = vec![0i8; TABLE_CELLS];
        let mut t1 = vec![0i8; TABLE_CELLS];
        for f in frags {
            let (hi, lo) = pack(f);
            t0[hi] = 1;
            t1[lo] = 1;
        }
        Prefilter::from_parts(t0, t1, DEFAULT_FIRE_THRESHOLD, FragmentSet::new())
    }

    #[test]
    fn packing_is_big_endian() {
        let p = single_fragment_set(&[[0, 0, 0, 0, 0, 1]]);
        assert_eq!(p.table0()[0], 1);
        assert_eq!(p.table1()[1], 1);
        assert_eq!(p.nonzero_cells(), 2);
        assert_eq!(pack(&[1, 2, 3, 4, 5, 6]), (0x010203, 0x040506));
    }

    #[test]
    fn shared_half_sets_three_cells() {
        let p = single_fragment_set(&[[1, 2, 3, 4, 5, 6], [1, 2, 3, 7, 8, 9]]);
        assert_eq!(p.nonzero_cells(), 3);
    }

    #[test]
    fn fire_rules_and_cross_talk() {
        let (a, b, c, d) = ([1u8, 2, 3], [4u8, 5, 6], [7u8, 8, 9], [10u8, 11, 12]);
        let cat = |x: [u8; 3], y: [u8; 3]| [x[0], x[1], x[2], y[0], y[1], y[2]];
        let p = single_fragment_set(&[cat(a, b), cat(c, d)]);
        assert!(p.fires(&cat(a, b)));
        assert!(p.fires(&cat(c, d)));
        assert!(p.fires(&cat(a, d)));
        assert!(!p.fires(&cat([0, 0, 0], b)));
    }

    #[test]
    fn empty_prefilter_finds_nothing() {
        let p = build_prefilter(&FragmentSet::new());
        let data = random_data(1 << 20, 5);
        assert!(scan_blocks(&data, &p).is_empty());
        assert_eq!(measure_fp_rate(&p, 1 << 20, 1), 0.0);
        let report = scan(&data, &p, None, &ScanConfig::default()).unwrap();
        assert_eq!(report.candidates, 0);
        assert!(report.mb_per_s > 0.0);
    }

    #[test]
    fn exactly_one_block_inside_any_window() {
        for o in 0..60usize {
            let inside: Vec<usize> = (0..100).map(|k| k * 6).filter(|&b| b >= o && b + 6 <= o + 11).collect();
            assert_eq!(inside.len(), 1, "offset {o}");
        }
    }

    #[test]
    fn planted_window_at_seven() {
        let p = prefilter_from_windows(&[window(W, "Phantom.4")]);
        let mut data = vec![0u8; 64];
        plant(&mut data, &W, 7);
        assert_eq!(scan_blocks(&data, &p), vec![12]);
        let hit = verify_exact(&p, &data, 12, DEFAULT_NEAREST_FLOOR).unwrap();
        assert_eq!(hit.kind, MatchKind::Exact);
        assert_eq!(hit.offset, 7);
        assert_eq!(hit.name, "Phantom.4");
        assert_eq!(hit.similarity, 11);
    }

    #[test]
    fn every_alignment_is_found() {
        let windows = random_windows(20, 3, "W", &FilterRules::default());
        let p = prefilter_from_windows(&windows);
        let precise = build_precise(p.windows()).unwrap();
        for o in 0..60 {
            let w = &windows[o % windows.len()];
            let mut data = random_data(128, o as u64);
            plant(&mut data, &w.bytes, o);
            let report = scan(&data, &p, Some(&precise), &ScanConfig::default()).unwrap();
            assert!(
                report.hits.iter().any(|h| h.kind == MatchKind::Exact && h.offset == o && h.name == w.owner),
                "offset {o}: {report:?}"
            );
        }
    }

    #[test]
    fn corrupted_window_is_nearest() {
        let p = prefilter_from_windows(&[window(W, "Phantom.4")]);
        let mut data = vec![0xAAu8; 48];
        plant(&mut data, &W, 12);
        // Block 12..18 holds window bytes 0..6; corrupt two bytes after it.
        data[12 + 7] ^= 0xff;
        data[12 + 9] ^= 0xff;
        let hit = verify_exact(&p, &data, 12, DEFAULT_NEAREST_FLOOR).unwrap();
        assert_eq!(hit.kind, MatchKind::Nearest);
        assert_eq!(hit.similarity, 9);
        assert_eq!(hit.offset, 12);
        assert!(verify_exact(&p, &data, 12, 10).is_none());
    }

    #[test]
    fn index_miss_is_none() {
        let p = prefilter_from_windows(&[window(W, "a")]);
        let data = [1u8, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
        assert!(verify_exact(&p, &data, 0, 0).is_none());
    }

    #[test]
    fn out_of_bounds_window_is_skipped() {
        let p = prefilter_from_windows(&[window(W, "a")]);
        // Block equal to shift-3 fragment at offset 0: start would be -3.
        let data: Vec<u8> = W[3..9].to_vec();
        assert!(verify_exact(&p, &data, 0, 0).is_none());
    }

    #[test]
    fn precise_neighbourhood() {
        let precise = build_precise([&W]).unwrap();
        let mut data = random_data(64, 9);
        plant(&mut data, &W, 20);
        assert!(precise_confirm(&precise, &data, 24));
        assert!(!precise_confirm(&precise, &[0u8; 6], 0));
        for s in 0..4 {
            let out = precise.output_bytes(&W[s..s + 8]).unwrap();
            assert!(out >= 100);
        }
    }

    #[test]
    fn chunked_scan_matches_single_pass() {
        let windows = random_windows(500, 11, "W", &FilterRules::default());
        let p = prefilter_from_windows(&windows);
        let mut data = random_data(3 * CHUNK_LEN + 17, 4);
        for (i, w) in windows.iter().enumerate().take(50) {
            plant(&mut data, &w.bytes, i * 60_001 + 5);
        }
        let single = scan_blocks(&data, &p);
        assert!(single.len() >= 50);
        assert_eq!(scan_blocks_parallel(&data, &p, 4), single);
        assert_eq!(scan_blocks_parallel(&data, &p, 0), single);
    }

    #[test]
    fn scans_are_repeatable() {
        let windows = random_windows(50, 2, "W", &FilterRules::default());
        let p = prefilter_from_windows(&windows);
        let precise = build_precise(p.windows()).unwrap();
        let mut data = random_data(1 << 16, 8);
        plant(&mut data, &windows[3].bytes, 1001);
        let a = scan(&data, &p, Some(&precise), &ScanConfig::default()).unwrap();
        let b = scan(&data, &p, Some(&precise), &ScanConfig { threads: 3, ..ScanConfig::default() }).unwrap();
        assert_eq!(a.without_timings(), b.without_timings());
        assert_eq!(a.hits.len(), 1);
    }

    #[test]
    fn prefilter_round_trip() {
        let p = prefilter_from_windows(&random_windows(10, 1, "W", &FilterRules::default()));
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), p.encoded_len());
        assert_eq!(&bytes[..4], b"CPF1");
        let back = Prefilter::from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_bytes(), bytes);
        assert!(matches!(Prefilter::from_bytes(&bytes[..100]), Err(ScanError::Malformed(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Prefilter::from_bytes(&bad), Err(ScanError::Malformed(_))));
    }

    #[test]
    fn bench_rows_are_ordered() {
        let p = prefilter_from_windows(&random_windows(100, 1, "W", &FilterRules::default()));
        let precise = build_precise(p.windows()).unwrap();
        let data = synthetic_corpus(1 << 20, 3);
        let report = bench(&data, &p, &precise, 3, 2).unwrap();
        assert_eq!(report.rows.len(), 6);
        for pair in report.rows.chunks(3) {
            assert!(pair[0].median_mb_s >= pair[1].median_mb_s);
            assert!(pair[1].median_mb_s >= pair[2].median_mb_s);
        }
        assert!(bench(&data, &p, &precise, 0, 1).is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0]), 3.0);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn precise_shape_is_checked() {
        let p = build_prefilter(&FragmentSet::new());
        let wrong = CyberNeuron::new(4, 8).unwrap();
        assert!(matches!(
            scan(&[0u8; 12], &p, Some(&wrong), &ScanConfig::default()),
            Err(ScanError::PreciseShape { .. })
        ));
    }
}
