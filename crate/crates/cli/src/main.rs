//! `cyberneuron`: signature database builds, scans, benchmarks and lab runs.
//!
//! Exit codes: 0 success or clean scan, 1 scan found hits, 2 error.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use cyberneuron::lab::{self, ExperimentConfig, ExperimentSeries};
use cyberneuron::scanner::{
    self, build_precise, build_prefilter, check_precise_shape, Prefilter, ScanConfig, ScanReport, SCHEMA_VERSION,
};
use cyberneuron::sigdb::{self, FilterReport, FilterRules};
use cyberneuron::CyberNeuron;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "cyberneuron", version, about = "Table-lookup neuron toolkit and block prefilter scanner")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "CYBERNEURON_SEED", default_value_t = 1)]
    seed: u64,

    /// Scanner worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Print one JSON document instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// key = value file supplying flag defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse signature files and build the scanner stages.
    DbBuild(DbBuildArgs),
    /// Scan a file.
    Scan(ScanArgs),
    /// Measure scan throughput on an in-memory buffer.
    Bench(BenchArgs),
    /// Capacity and learning-rate experiments.
    #[command(subcommand)]
    Lab(LabCommand),
}

#[derive(Debug, Args)]
struct DbBuildArgs {
    /// Signature files (.db, .ndb; .hdb/.mdb are counted and skipped).
    #[arg(long = "db", value_name = "PATH", num_args = 1.., action = clap::ArgAction::Append)]
    db: Vec<PathBuf>,
    /// Prefilter output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Precise-stage neuron output.
    #[arg(long, value_name = "FILE")]
    precise: Option<PathBuf>,
    /// Fragment file output.
    #[arg(long, value_name = "FILE")]
    fragments: Option<PathBuf>,
    /// Filter report (JSON) output.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Longest allowed run of one byte in a window.
    #[arg(long, default_value_t = 3)]
    max_repeat: usize,
    /// Minimum window entropy in bits.
    #[arg(long, default_value_t = 2.0)]
    min_entropy: f64,
    /// Rejected window prefix as hex; replaces the defaults (MZ, PE\0\0, 00000000).
    #[arg(long = "header-prefix", value_name = "HEX", action = clap::ArgAction::Append)]
    header_prefix: Vec<String>,
    /// Reject no header prefixes.
    #[arg(long)]
    no_header_prefixes: bool,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Prefilter file from db-build.
    #[arg(long, value_name = "FILE")]
    prefilter: Option<PathBuf>,
    /// Precise-stage neuron; without it stage 2 is skipped.
    #[arg(long, value_name = "FILE")]
    precise: Option<PathBuf>,
    /// File to scan.
    #[arg(long, value_name = "PATH")]
    target: Option<PathBuf>,
    /// Fewest equal bytes (of 11) for a nearest match.
    #[arg(long, default_value_t = scanner::DEFAULT_NEAREST_FLOOR)]
    fp_floor: u8,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Prefilter file; random windows are used when absent.
    #[arg(long, value_name = "FILE")]
    prefilter: Option<PathBuf>,
    /// Precise-stage neuron; built from the prefilter's windows when absent.
    #[arg(long, value_name = "FILE")]
    precise: Option<PathBuf>,
    /// Random windows to build when no prefilter is given.
    #[arg(long, default_value_t = 100_000)]
    windows: usize,
    /// Buffer size in MiB.
    #[arg(long, default_value_t = 64)]
    size_mb: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Buffer content: mixed or random.
    #[arg(long, default_value = "mixed")]
    corpus: String,
    /// Windows planted into the buffer.
    #[arg(long, default_value_t = 10)]
    plant: usize,
}

#[derive(Debug, Subcommand)]
enum LabCommand {
    /// One capacity run.
    Capacity(CapacityArgs),
    /// The same run for several dividers.
    LrSweep(SweepArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Neuron inputs; defaults to bytes * 8 / bits.
    #[arg(long)]
    inputs: Option<usize>,
    /// Bits per input.
    #[arg(long, default_value_t = 8)]
    bits: u32,
    #[arg(long, default_value_t = 200)]
    patterns: usize,
    /// Bytes per pattern; defaults to inputs * bits / 8, or 8.
    #[arg(long)]
    bytes: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    epochs: u32,
    #[arg(long, default_value_t = 10_000)]
    probes: usize,
    /// Patterns trained to stay unknown; defaults to --patterns.
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long, default_value_t = 1)]
    rounds_per_epoch: u32,
    /// CSV output.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CapacityArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value_t = 4)]
    divider: u32,
    /// PGM image of the trained tables.
    #[arg(long, value_name = "FILE")]
    image: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    dividers: Vec<u32>,
}

struct Globals {
    seed: u64,
    threads: usize,
    json: bool,
}

enum Outcome {
    Done,
    Hits,
}

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args_os().collect()) {
        Ok(Some(cli)) => cli,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let globals = Globals {
        seed: cli.seed,
        threads: cli.threads,
        json: cli.json,
    };
    let result = match cli.command {
        Some(Command::DbBuild(a)) => db_build(&globals, a),
        Some(Command::Scan(a)) => scan(&globals, a),
        Some(Command::Bench(a)) => bench(&globals, a),
        Some(Command::Lab(LabCommand::Capacity(a))) => lab_capacity(&globals, a),
        Some(Command::Lab(LabCommand::LrSweep(a))) => lab_sweep(&globals, a),
        None => {
            let _ = Cli::command().print_help();
            Err(anyhow!("no command given"))
        }
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Hits) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Parses arguments, applying a config file when one is named. `None` means
/// help or version was printed.
fn parse_args(args: Vec<OsString>) -> Result<Option<Cli>> {
    let first = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => return clap_exit(e),
    };
    let matches = match first.get_one::<PathBuf>("config") {
        None => first,
        Some(path) => {
            let entries = config::load(path)?;
            let mut sub_path = Vec::new();
            let mut m = &first;
            while let Some((name, sub)) = m.subcommand() {
                sub_path.push(name.to_string());
                m = sub;
            }
            let cmd = config::apply(Cli::command(), &sub_path, &entries)?;
            match cmd.try_get_matches_from(&args) {
                Ok(m) => m,
                Err(e) => return clap_exit(e),
            }
        }
    };
    Ok(Some(Cli::from_arg_matches(&matches)?))
}

fn clap_exit(e: clap::Error) -> Result<Option<Cli>> {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            Ok(None)
        }
        _ => {
            let _ = e.print();
            std::process::exit(2)
        }
    }
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| anyhow!("missing required flag --{flag}"))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn decode_hex(s: &str) -> Result<Vec<u8>> {
    if s.len() % 2 != 0 {
        bail!("odd-length hex prefix '{s}'");
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| anyhow!("bad hex prefix '{s}'")))
        .collect()
}

fn filter_rules(a: &DbBuildArgs) -> Result<FilterRules> {
    if !a.min_entropy.is_finite() || a.min_entropy < 0.0 {
        bail!("--min-entropy must be a non-negative number");
    }
    let mut rules = FilterRules {
        max_repeat_run: a.max_repeat,
        min_entropy: a.min_entropy,
        ..FilterRules::default()
    };
    if a.no_header_prefixes {
        rules.header_prefixes.clear();
    } else if !a.header_prefix.is_empty() {
        rules.header_prefixes = a.header_prefix.iter().map(|h| decode_hex(h)).collect::<Result<_>>()?;
    }
    Ok(rules)
}

fn save_neuron(neuron: &CyberNeuron, path: &Path) -> Result<()> {
    fs::write(path, neuron.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn load_precise(path: &Path) -> Result<CyberNeuron> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let neuron = CyberNeuron::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))?;
    check_precise_shape(&neuron)?;
    Ok(neuron)
}

fn load_prefilter(path: &Path) -> Result<Prefilter> {
    Prefilter::load(path).with_context(|| format!("loading {}", path.display()))
}

fn print_filter_report(r: &FilterReport) {
    let reasons = &r.rejected_by_reason;
    println!("signatures loaded:    {}", r.loaded);
    println!(
        "rejected:             {} (too short {}, repeats {}, low entropy {}, header {}, duplicate {})",
        r.rejected, reasons.too_short, reasons.no_long_repeats, reasons.low_entropy, reasons.header_like, reasons.duplicate
    );
    println!("windows extracted:    {}", r.extracted);
    println!("fragments:            {} ({} unique)", r.fragments, r.unique_fragments);
    println!("parse errors:         {}", r.parse_errors);
    println!("hash entries skipped: {}", r.hash_signatures);
}

fn db_build(g: &Globals, a: DbBuildArgs) -> Result<Outcome> {
    if a.db.is_empty() {
        bail!("missing required flag --db");
    }
    let out = require(&a.out, "out")?;
    let rules = filter_rules(&a)?;
    let db = sigdb::load_database(&a.db, &rules)?;
    for (path, e) in &db.line_errors {
        eprintln!("{}:{}: {}", path.display(), e.line, e.error);
    }
    let prefilter = build_prefilter(&db.fragments);
    prefilter.save(out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = &a.precise {
        save_neuron(&build_precise(prefilter.windows())?, p)?;
    }
    if let Some(p) = &a.fragments {
        fs::write(p, db.fragments.to_bytes()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.report {
        fs::write(p, serde_json::to_string_pretty(&db.report)?).with_context(|| format!("writing {}", p.display()))?;
    }
    if g.json {
        print_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "report": db.report,
            "prefilter": out,
            "precise": a.precise,
            "fragments": a.fragments,
        }))?;
    } else {
        print_filter_report(&db.report);
        println!("prefilter written to {}", out.display());
    }
    Ok(Outcome::Done)
}

fn scan(g: &Globals, a: ScanArgs) -> Result<Outcome> {
    let prefilter_path = require(&a.prefilter, "prefilter")?;
    let target = require(&a.target, "target")?;
    let config = ScanConfig {
        use_precise: a.precise.is_some(),
        nearest_floor: a.fp_floor,
        threads: g.threads,
    };
    config.validate()?;
    let prefilter = load_prefilter(prefilter_path)?;
    let precise = a.precise.as_deref().map(load_precise).transpose()?;
    let data = fs::read(target).with_context(|| format!("reading {}", target.display()))?;
    let report = scanner::scan(&data, &prefilter, precise.as_ref(), &config)?;
    if g.json {
        let mut value = serde_json::to_value(&report)?;
        value["target"] = json!(target);
        print_json(&value)?;
    } else {
        print_scan_report(target, &report);
    }
    Ok(if report.hits.is_empty() { Outcome::Done } else { Outcome::Hits })
}

fn print_scan_report(target: &Path, r: &ScanReport) {
    println!("target:      {}", target.display());
    println!("bytes:       {}", r.bytes_scanned);
    println!("candidates:  {}", r.candidates);
    if r.precise_stage {
        println!("survivors:   {}", r.survivors);
    } else {
        println!("survivors:   {} (precise stage off)", r.survivors);
    }
    println!("hits:        {}", r.hits.len());
    for h in &r.hits {
        match h.kind {
            scanner::MatchKind::Exact => println!("  {} at {} (exact)", h.name, h.offset),
            scanner::MatchKind::Nearest => println!("  {} at {} (nearest, {}/11)", h.name, h.offset, h.similarity),
        }
    }
    println!("elapsed:     {:.1} ms ({:.1} MB/s)", r.elapsed_ms, r.mb_per_s);
}

fn bench(g: &Globals, a: BenchArgs) -> Result<Outcome> {
    if a.size_mb == 0 {
        bail!("--size-mb must be at least 1");
    }
    if a.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let len = a.size_mb.checked_mul(1 << 20).ok_or_else(|| anyhow!("--size-mb too large"))?;
    let prefilter = match &a.prefilter {
        Some(p) => load_prefilter(p)?,
        None => {
            if a.windows == 0 {
                bail!("--windows must be at least 1 without --prefilter");
            }
            scanner::prefilter_from_windows(&scanner::random_windows(a.windows, g.seed, "Bench", &FilterRules::default()))
        }
    };
    let precise = match &a.precise {
        Some(p) => load_precise(p)?,
        None => build_precise(prefilter.windows())?,
    };
    let mut data = match a.corpus.as_str() {
        "mixed" => scanner::synthetic_corpus(len, g.seed),
        "random" => scanner::random_buffer(len, g.seed),
        other => bail!("unknown --corpus '{other}' (mixed or random)"),
    };
    let windows = prefilter.windows();
    if !windows.is_empty() && len >= 11 {
        for i in 0..a.plant {
            let at = (i * 7919 * 6 + 1) % (len - 10);
            scanner::plant(&mut data, &windows[i % windows.len()], at);
        }
    }
    let report = scanner::bench(&data, &prefilter, &precise, a.reps, g.threads)?;
    if g.json {
        print_json(&serde_json::to_value(&report)?)?;
    } else {
        println!(
            "buffer {} MiB, {} candidates, {} survivors, {} hits",
            a.size_mb, report.candidates, report.survivors, report.hits
        );
        println!("{:<26} {:>7} {:>13} {:>11}", "stages", "threads", "median MB/s", "best MB/s");
        for row in &report.rows {
            println!(
                "{:<26} {:>7} {:>13.1} {:>11.1}",
                row.label, row.threads, row.median_mb_s, row.best_mb_s
            );
        }
    }
    Ok(Outcome::Done)
}

fn experiment_config(g: &Globals, a: &ExperimentArgs, divider: u32) -> Result<ExperimentConfig> {
    if a.bits == 0 {
        bail!("--bits must be at least 1");
    }
    let bytes = match (a.inputs, a.bytes) {
        (Some(i), Some(b)) => {
            if b * 8 != i * a.bits as usize {
                bail!(
                    "conflicting flags: --bytes {b} holds {} bits but --inputs {i} x --bits {} needs {}",
                    b * 8,
                    a.bits,
                    i * a.bits as usize
                );
            }
            b
        }
        (Some(i), None) => {
            let total = i * a.bits as usize;
            if total % 8 != 0 {
                bail!("--inputs {i} x --bits {} is not a whole number of bytes", a.bits);
            }
            total / 8
        }
        (None, Some(b)) => b,
        (None, None) => 8,
    };
    if (bytes * 8) % a.bits as usize != 0 {
        bail!("--bytes {bytes} does not split into {}-bit inputs", a.bits);
    }
    let mut cfg = ExperimentConfig::new(bytes, a.bits, a.patterns)
        .with_divider(divider)
        .with_seed(g.seed)
        .with_epochs(a.epochs)
        .with_probes(a.probes)
        .with_rounds_per_epoch(a.rounds_per_epoch);
    if let Some(n) = a.negatives {
        cfg = cfg.with_negatives(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_csv(path: &Option<PathBuf>, csv: &str) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn series_summary(s: &ExperimentSeries) -> serde_json::Value {
    json!({
        "divider": s.config.divider,
        "converged": s.converged,
        "epochs": s.rows.len(),
        "final": s.final_row(),
    })
}

fn print_series_line(s: &ExperimentSeries) {
    let last = s.final_row();
    let learned = last.map_or(0.0, |r| r.fraction_learned);
    let false_rate = last.map_or(0.0, |r| r.fraction_false);
    let status = match s.converged_at() {
        Some(e) => format!("converged after {e} epochs"),
        None => format!("not converged after {} epochs", s.rows.len()),
    };
    println!(
        "divider {:>2}: {status}; learned {learned:.4}, false rate {false_rate:.4}",
        s.config.divider
    );
}

fn lab_capacity(g: &Globals, a: CapacityArgs) -> Result<Outcome> {
    let cfg = experiment_config(g, &a.experiment, a.divider)?;
    let run = lab::run_capacity(&cfg)?;
    write_csv(&a.experiment.csv, &run.series.to_csv())?;
    if let Some(p) = &a.image {
        lab::export_table_image(&run.neuron, p)?;
    }
    if g.json {
        print_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "config": cfg,
            "series": [series_summary(&run.series)],
        }))?;
    } else {
        println!(
            "{} patterns on {} inputs x {} bits, seed {}",
            cfg.pattern_count, cfg.n_inputs, cfg.bits_per_input, cfg.seed
        );
        print_series_line(&run.series);
    }
    Ok(Outcome::Done)
}

fn lab_sweep(g: &Globals, a: SweepArgs) -> Result<Outcome> {
    if a.dividers.is_empty() {
        bail!("--dividers needs at least one value");
    }
    let cfg = experiment_config(g, &a.experiment, a.dividers[0])?;
    let series = lab::learning_rate_sweep(&cfg, &a.dividers)?;
    write_csv(&a.experiment.csv, &lab::sweep_csv(&series))?;
    if g.json {
        print_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "config": cfg,
            "series": series.iter().map(series_summary).collect::<Vec<_>>(),
        }))?;
    } else {
        println!(
            "{} patterns on {} inputs x {} bits, seed {}",
            cfg.pattern_count, cfg.n_inputs, cfg.bits_per_input, cfg.seed
        );
        for s in &series {
            print_series_line(s);
        }
    }
    Ok(Outcome::Done)
}
