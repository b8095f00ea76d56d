//! Hex signature databases: parsing, quality filtering, window extraction
//! and shift expansion into 6-byte prefilter fragments.
//!
//! Two line formats are understood:
//!
//! ```text
//! Name=hexbody                       (.db)
//! Name:TargetType:Offset:hexbody     (.ndb)
//! ```
//!
//! Bodies are hex pairs, `*` gaps and `?` nibble wildcards. Each accepted
//! signature contributes one 11-byte wildcard-free window; each window is cut
//! into six 6-byte fragments at shifts 0..=5, so that wherever the window
//! lands in a stream, one aligned 6-byte block falls wholly inside it and
//! equals one of the fragments.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WINDOW_LEN: usize = 11;
pub const FRAGMENT_LEN: usize = 6;
pub const SHIFTS: usize = WINDOW_LEN - FRAGMENT_LEN + 1;

const FRAGMENT_MAGIC: &[u8; 4] = b"CFR1";

#[derive(Debug, Error)]
pub enum SigDbError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: unsupported signature file extension")]
    UnsupportedFormat(PathBuf),
    #[error("malformed fragment file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

pub type Result<T, E = SigDbError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("missing '=' between name and body")]
    MissingSeparator,
    #[error("expected 4 to 6 ':'-separated fields, found {0}")]
    FieldCount(usize),
    #[error("empty signature name")]
    EmptyName,
    #[error("empty signature body")]
    EmptyBody,
    #[error("odd number of hex digits before column {0}")]
    OddNibbles(usize),
    #[error("illegal character {0:?} in body")]
    IllegalChar(char),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub error: ParseError,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Byte(u8),
    /// A hex pair with at least one `?`; known nibbles are kept.
    NibbleWild { high: Option<u8>, low: Option<u8> },
    /// `*`: any number of bytes.
    Gap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SourceFormat {
    Db,
    Ndb,
}

/// `.ndb` fields carried verbatim; they play no part in scanning.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct NdbExtras {
    pub target_type: String,
    pub offset: String,
    /// Trailing engine-level fields, if present.
    pub trailing: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RawSignature {
    pub name: String,
    pub body: Vec<Token>,
    pub source: SourceFormat,
    pub ndb: Option<NdbExtras>,
}

impl RawSignature {
    /// Body back in hex form, lowercase, `*` for gaps.
    pub fn render_body(&self) -> String {
        let mut out = String::with_capacity(self.body.len() * 2);
        for t in &self.body {
            match *t {
                Token::Byte(b) => out.push_str(&format!("{b:02x}")),
                Token::NibbleWild { high, low } => {
                    for n in [high, low] {
                        out.push(match n {
                            Some(v) => char::from_digit(v as u32, 16).unwrap(),
                            None => '?',
                        });
                    }
                }
                Token::Gap => out.push('*'),
            }
        }
        out
    }

    /// Maximal runs of literal bytes as `(token index of first byte, bytes)`.
    pub fn literal_runs(&self) -> Vec<(usize, Vec<u8>)> {
        let mut runs = Vec::new();
        let mut current: Option<(usize, Vec<u8>)> = None;
        for (i, t) in self.body.iter().enumerate() {
            match *t {
                Token::Byte(b) => current.get_or_insert_with(|| (i, Vec::new())).1.push(b),
                _ => {
                    if let Some(run) = current.take() {
                        runs.push(run);
                    }
                }
            }
        }
        runs.extend(current);
        runs
    }
}

/// Decodes a signature body.
pub fn parse_body(hex: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::with_capacity(hex.len() / 2);
    let mut pending: Option<Option<u8>> = None;
    for (col, c) in hex.chars().enumerate() {
        let nibble = match c {
            '*' => {
                if pending.is_some() {
                    return Err(ParseError::OddNibbles(col));
                }
                tokens.push(Token::Gap);
                continue;
            }
            '?' => None,
            c => match c.to_digit(16) {
                Some(v) => Some(v as u8),
                None => return Err(ParseError::IllegalChar(c)),
            },
        };
        match pending.take() {
            None => pending = Some(nibble),
            Some(high) => tokens.push(match (high, nibble) {
                (Some(h), Some(l)) => Token::Byte(h << 4 | l),
                (high, low) => Token::NibbleWild { high, low },
            }),
        }
    }
    if pending.is_some() {
        return Err(ParseError::OddNibbles(hex.chars().count()));
    }
    if tokens.is_empty() {
        return Err(ParseError::EmptyBody);
    }
    Ok(tokens)
}

/// Signatures parsed from one text, plus the lines that failed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedSignatures {
    pub signatures: Vec<RawSignature>,
    pub errors: Vec<LineError>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_lines(
    text: &str,
    parse_line: impl Fn(&str) -> Result<RawSignature, ParseError>,
) -> ParsedSignatures {
    let mut out = ParsedSignatures::default();
    for (line, content) in data_lines(text) {
        match parse_line(content) {
            Ok(sig) => out.signatures.push(sig),
            Err(error) => out.errors.push(LineError { line, error }),
        }
    }
    out
}

fn parse_db_line(line: &str) -> Result<RawSignature, ParseError> {
    let (name, body) = line.split_once('=').ok_or(ParseError::MissingSeparator)?;
    let name = name.trim();
    if name.is_empty() {
        return Err(ParseError::EmptyName);
    }
    Ok(RawSignature {
        name: name.to_string(),
        body: parse_body(body.trim())?,
        source: SourceFormat::Db,
        ndb: None,
    })
}

fn parse_ndb_line(line: &str) -> Result<RawSignature, ParseError> {
    let fields: Vec<&str> = line.split(':').collect();
    if !(4..=6).contains(&fields.len()) {
        return Err(ParseError::FieldCount(fields.len()));
    }
    let name = fields[0].trim();
    if name.is_empty() {
        return Err(ParseError::EmptyName);
    }
    Ok(RawSignature {
        name: name.to_string(),
        body: parse_body(fields[3].trim())?,
        source: SourceFormat::Ndb,
        ndb: Some(NdbExtras {
            target_type: fields[1].to_string(),
            offset: fields[2].to_string(),
            trailing: fields[4..].iter().map(|s| s.to_string()).collect(),
        }),
    })
}

/// Parses `Name=hex` lines. Blank lines and `#` comments are skipped; bad
/// lines are reported and the rest kept.
pub fn parse_db(text: &str) -> ParsedSignatures {
    parse_lines(text, parse_db_line)
}

/// Parses `Name:TargetType:Offset:hex[:min_level[:max_level]]` lines.
pub fn parse_ndb(text: &str) -> ParsedSignatures {
    parse_lines(text, parse_ndb_line)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// No wildcard-free run of 11 bytes.
    TooShort,
    /// Too many identical bytes in a row.
    NoLongRepeats,
    LowEntropy,
    /// Starts like an executable header.
    HeaderLike,
    /// Same name and body as an earlier signature.
    Duplicate,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::TooShort => "too_short",
            RejectReason::NoLongRepeats => "no_long_repeats",
            RejectReason::LowEntropy => "low_entropy",
            RejectReason::HeaderLike => "header_like",
            RejectReason::Duplicate => "duplicate",
        })
    }
}

/// Rules a candidate window must pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterRules {
    /// Longest allowed run of one repeated byte.
    pub max_repeat_run: usize,
    /// Minimum Shannon entropy of the window's bytes, in bits.
    pub min_entropy: f64,
    /// Windows starting with any of these are rejected.
    pub header_prefixes: Vec<Vec<u8>>,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            max_repeat_run: 3,
            min_entropy: 2.0,
            header_prefixes: vec![b"MZ".to_vec(), b"PE\0\0".to_vec(), vec![0; 4]],
        }
    }
}

pub fn max_repeat_run(bytes: &[u8]) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut prev = None;
    for &b in bytes {
        run = if prev == Some(b) { run + 1 } else { 1 };
        prev = Some(b);
        best = best.max(run);
    }
    best
}

/// Shannon entropy of the byte histogram, in bits.
pub fn byte_entropy(bytes: &[u8]) -> f64 {
    if bytes.is_empty() {
        return 0.0;
    }
    let mut counts = [0u32; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Checks one window against the rules in order: repeats, entropy, header.
pub fn check_window(bytes: &[u8; WINDOW_LEN], rules: &FilterRules) -> Result<(), RejectReason> {
    if max_repeat_run(bytes) > rules.max_repeat_run {
        return Err(RejectReason::NoLongRepeats);
    }
    if byte_entropy(bytes) < rules.min_entropy {
        return Err(RejectReason::LowEntropy);
    }
    if rules
        .header_prefixes
        .iter()
        .any(|p| !p.is_empty() && bytes.starts_with(p))
    {
        return Err(RejectReason::HeaderLike);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Window11 {
    pub bytes: [u8; WINDOW_LEN],
    pub owner: String,
    /// Token index of the window's first byte in the signature body.
    pub offset_in_body: usize,
}

/// Every 11-byte literal window of `sig` that passes `rules`, lowest offset
/// first. A signature with no passing window is rejected with the reason the
/// first candidate failed, or `TooShort` if there was no candidate.
pub fn quality_filter(sig: &RawSignature, rules: &FilterRules) -> Result<Vec<Window11>, RejectReason> {
    let mut first_failure = None;
    let mut accepted = Vec::new();
    for (start, run) in sig.literal_runs() {
        for (i, w) in run.windows(WINDOW_LEN).enumerate() {
            let bytes: [u8; WINDOW_LEN] = w.try_into().unwrap();
            match check_window(&bytes, rules) {
                Ok(()) => accepted.push(Window11 {
                    bytes,
                    owner: sig.name.clone(),
                    offset_in_body: start + i,
                }),
                Err(reason) => {
                    first_failure.get_or_insert(reason);
                }
            }
        }
    }
    if accepted.is_empty() {
        Err(first_failure.unwrap_or(RejectReason::TooShort))
    } else {
        Ok(accepted)
    }
}

/// The lowest-offset window of `sig` passing `rules`.
pub fn extract_window(sig: &RawSignature, rules: &FilterRules) -> Result<Window11, RejectReason> {
    quality_filter(sig, rules).map(|mut w| w.swap_remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fragment {
    pub bytes: [u8; FRAGMENT_LEN],
    pub shift: u8,
}

/// The six 6-byte slices of a window; shift `s` holds bytes `[s, s + 6)`.
pub fn shift_expand(window: &Window11) -> [Fragment; SHIFTS] {
    std::array::from_fn(|s| Fragment {
        bytes: window.bytes[s..s + FRAGMENT_LEN].try_into().unwrap(),
        shift: s as u8,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FragmentEntry {
    pub bytes: [u8; FRAGMENT_LEN],
    /// Index into [`FragmentSet::owners`]; one owner per window.
    pub owner: u32,
    pub shift: u8,
}

/// Fragments of a set of windows, six per window, with owner names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FragmentSet {
    owners: Vec<String>,
    entries: Vec<FragmentEntry>,
}

impl FragmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a Window11>) -> Self {
        let mut set = Self::new();
        for w in windows {
            set.push_window(w);
        }
        set
    }

    /// Adds a window as a new owner; returns its owner id.
    pub fn push_window(&mut self, window: &Window11) -> u32 {
        let owner = self.owners.len() as u32;
        self.owners.push(window.owner.clone());
        self.entries.extend(shift_expand(window).iter().map(|f| FragmentEntry {
            bytes: f.bytes,
            owner,
            shift: f.shift,
        }));
        owner
    }

    pub fn owners(&self) -> &[String] {
        &self.owners
    }

    pub fn entries(&self) -> &[FragmentEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unique_fragments(&self) -> usize {
        self.entries.iter().map(|e| e.bytes).collect::<HashSet<_>>().len()
    }

    /// Rebuilds each owner's window from its shift-0 and shift-5 fragments.
    pub fn windows(&self) -> Vec<[u8; WINDOW_LEN]> {
        let mut out = vec![[0u8; WINDOW_LEN]; self.owners.len()];
        for e in &self.entries {
            let s = e.shift as usize;
            out[e.owner as usize][s..s + FRAGMENT_LEN].copy_from_slice(&e.bytes);
        }
        out
    }

    /// Writes the record section shared by fragment and prefilter files:
    /// `u32 count`, records of `6 bytes + u32 owner + u8 shift`, then
    /// `u32 owner count` and length-prefixed UTF-8 names.
    pub fn write_records<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(4 + self.entries.len() * 11);
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&e.bytes);
            buf.extend_from_slice(&e.owner.to_le_bytes());
            buf.push(e.shift);
        }
        buf.extend_from_slice(&(self.owners.len() as u32).to_le_bytes());
        for name in &self.owners {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_records<R: Read>(mut r: R) -> Result<Self> {
        let count = read_u32(&mut r, "fragment count")? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 24));
        let mut rec = [0u8; FRAGMENT_LEN + 5];
        for _ in 0..count {
            read_exact(&mut r, &mut rec, "fragment record")?;
            entries.push(FragmentEntry {
                bytes: rec[..FRAGMENT_LEN].try_into().unwrap(),
                owner: u32::from_le_bytes(rec[FRAGMENT_LEN..FRAGMENT_LEN + 4].try_into().unwrap()),
                shift: rec[FRAGMENT_LEN + 4],
            });
        }
        let owner_count = read_u32(&mut r, "owner count")? as usize;
        let mut owners = Vec::with_capacity(owner_count.min(1 << 24));
        for _ in 0..owner_count {
            let len = read_u32(&mut r, "name length")? as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name, "owner name")?;
            owners.push(
                String::from_utf8(name).map_err(|_| SigDbError::Malformed("owner name is not UTF-8".into()))?,
            );
        }
        let set = Self { owners, entries };
        set.check_consistency()?;
        Ok(set)
    }

    /// Every owner must have shifts 0..=5 exactly once, and neighbouring
    /// shifts must overlap in five bytes.
    fn check_consistency(&self) -> Result<()> {
        let mut seen = vec![[false; SHIFTS]; self.owners.len()];
        for e in &self.entries {
            let owner = e.owner as usize;
            if owner >= self.owners.len() {
                return Err(SigDbError::Malformed(format!("owner id {owner} out of range")));
            }
            if e.shift as usize >= SHIFTS {
                return Err(SigDbError::Malformed(format!("shift {} out of range", e.shift)));
            }
            if std::mem::replace(&mut seen[owner][e.shift as usize], true) {
                return Err(SigDbError::Malformed(format!("owner {owner} repeats shift {}", e.shift)));
            }
        }
        if let Some(owner) = seen.iter().position(|s| !s.iter().all(|&x| x)) {
            return Err(SigDbError::Malformed(format!("owner {owner} lacks some shifts")));
        }
        let windows = self.windows();
        for e in &self.entries {
            let s = e.shift as usize;
            if windows[e.owner as usize][s..s + FRAGMENT_LEN] != e.bytes {
                return Err(SigDbError::Malformed(format!(
                    "owner {} fragments do not overlap consistently",
                    e.owner
                )));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(FRAGMENT_MAGIC)?;
        self.write_records(w)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != FRAGMENT_MAGIC {
            return Err(SigDbError::Malformed("bad magic".into()));
        }
        Self::read_records(r)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut slice = bytes;
        let set = Self::read_from(&mut slice)?;
        if !slice.is_empty() {
            return Err(SigDbError::Malformed(format!("{} trailing bytes", slice.len())));
        }
        Ok(set)
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => SigDbError::Malformed(format!("truncated {what}")),
        _ => SigDbError::Stream(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionCounts {
    pub too_short: usize,
    pub no_long_repeats: usize,
    pub low_entropy: usize,
    pub header_like: usize,
    pub duplicate: usize,
}

impl RejectionCounts {
    fn bump(&mut self, reason: RejectReason) {
        *match reason {
            RejectReason::TooShort => &mut self.too_short,
            RejectReason::NoLongRepeats => &mut self.no_long_repeats,
            RejectReason::LowEntropy => &mut self.low_entropy,
            RejectReason::HeaderLike => &mut self.header_like,
            RejectReason::Duplicate => &mut self.duplicate,
        } += 1;
    }

    pub fn total(&self) -> usize {
        self.too_short + self.no_long_repeats + self.low_entropy + self.header_like + self.duplicate
    }
}

/// Totals of one database load. `loaded == rejected + extracted` and
/// `fragments == extracted * 6`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub loaded: usize,
    pub rejected: usize,
    pub rejected_by_reason: RejectionCounts,
    pub extracted: usize,
    pub fragments: usize,
    /// Distinct fragment contents across all windows.
    pub unique_fragments: usize,
    /// Lines that failed to parse; not part of `loaded`.
    pub parse_errors: usize,
    /// Hash-format lines seen and skipped; not part of `loaded`.
    pub hash_signatures: usize,
}

impl FilterReport {
    pub fn is_balanced(&self) -> bool {
        self.loaded == self.rejected + self.extracted
            && self.rejected == self.rejected_by_reason.total()
            && self.fragments == self.extracted * SHIFTS
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadedDatabase {
    pub fragments: FragmentSet,
    pub windows: Vec<Window11>,
    pub report: FilterReport,
    pub line_errors: Vec<(PathBuf, LineError)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FileKind {
    Body(SourceFormat),
    Hash,
}

fn file_kind(path: &Path) -> Option<FileKind> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "db" => Some(FileKind::Body(SourceFormat::Db)),
        "ndb" => Some(FileKind::Body(SourceFormat::Ndb)),
        "hdb" | "mdb" | "hsb" | "msb" => Some(FileKind::Hash),
        _ => None,
    }
}

/// Filters already-parsed signatures into windows and fragments.
pub fn build_database(signatures: &[RawSignature], rules: &FilterRules) -> LoadedDatabase {
    let mut db = LoadedDatabase::default();
    let mut seen: HashSet<(&str, &[Token])> = HashSet::new();
    for sig in signatures {
        db.report.loaded += 1;
        let outcome = if seen.insert((sig.name.as_str(), sig.body.as_slice())) {
            extract_window(sig, rules)
        } else {
            Err(RejectReason::Duplicate)
        };
        match outcome {
            Ok(window) => {
                db.fragments.push_window(&window);
                db.windows.push(window);
                db.report.extracted += 1;
            }
            Err(reason) => {
                db.report.rejected += 1;
                db.report.rejected_by_reason.bump(reason);
            }
        }
    }
    db.report.fragments = db.fragments.len();
    db.report.unique_fragments = db.fragments.unique_fragments();
    db
}

/// Reads, parses and filters signature files. The extension picks the
/// parser: `.db`, `.ndb`; hash files (`.hdb`, `.mdb`, `.hsb`, `.msb`) are
/// counted and skipped.
pub fn load_database<P: AsRef<Path>>(paths: &[P], rules: &FilterRules) -> Result<LoadedDatabase> {
    let mut signatures = Vec::new();
    let mut line_errors = Vec::new();
    let mut hash_signatures = 0;
    for path in paths {
        let path = path.as_ref();
        let kind = file_kind(path).ok_or_else(|| SigDbError::UnsupportedFormat(path.to_path_buf()))?;
        let text = std::fs::read_to_string(path).map_err(|source| SigDbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed = match kind {
            FileKind::Hash => {
                hash_signatures += data_lines(&text).count();
                continue;
            }
            FileKind::Body(SourceFormat::Db) => parse_db(&text),
            FileKind::Body(SourceFormat::Ndb) => parse_ndb(&text),
        };
        signatures.extend(parsed.signatures);
        line_errors.extend(parsed.errors.into_iter().map(|e| (path.to_path_buf(), e)));
    }
    let mut db = build_database(&signatures, rules);
    db.report.parse_errors = line_errors.len();
    db.report.hash_signatures = hash_signatures;
    db.line_errors = line_errors;
    Ok(db)
}

/// Groups fragment entries by content.
pub fn fragment_index(set: &FragmentSet) -> HashMap<[u8; FRAGMENT_LEN], Vec<(u32, u8)>> {
    let mut index: HashMap<[u8; FRAGMENT_LEN], Vec<(u32, u8)>> = HashMap::new();
    for e in set.entries() {
        index.entry(e.bytes).or_default().push((e.owner, e.shift));
    }
    index
}
