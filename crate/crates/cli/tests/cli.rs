use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cyberneuron::scanner::{plant, random_buffer, Prefilter};
use serde_json::Value;
use tempfile::TempDir;

const PHANTOM: &str = "Phantom.4=0190e800005e56ba4c0881ea000183ee";
const MYLIFE: &str = "W32.MyLife.E:1:*:7a6172793230*40656d61696c2e636f6d";
const PHANTOM_WINDOW: [u8; 11] = [0x01, 0x90, 0xe8, 0x00, 0x00, 0x5e, 0x56, 0xba, 0x4c, 0x08, 0x81];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cyberneuron"));
    c.env_remove("CYBERNEURON_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not one JSON document ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Db {
    dir: TempDir,
    prefilter: PathBuf,
    precise: PathBuf,
}

fn example_db() -> Db {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("main.db");
    let ndb = dir.path().join("main.ndb");
    std::fs::write(&db, format!("{PHANTOM}\n")).unwrap();
    std::fs::write(&ndb, format!("{MYLIFE}\n")).unwrap();
    let prefilter = dir.path().join("p.cpf");
    let precise = dir.path().join("p.cnr");
    let out = run(&["db-build", "--db", s(&db), s(&ndb), "--out", s(&prefilter), "--precise", s(&precise)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    Db { dir, prefilter, precise }
}

#[test]
fn db_build_reports_example_counts() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("two.db");
    let ndb = dir.path().join("two.ndb");
    std::fs::write(&db, format!("{PHANTOM}\n")).unwrap();
    std::fs::write(&ndb, format!("{MYLIFE}\n")).unwrap();
    let report = dir.path().join("report.json");
    let frags = dir.path().join("f.cfr");
    let out = run(&[
        "--json", "db-build", "--db", s(&db), "--db", s(&ndb), "--out", s(&dir.path().join("p.cpf")),
        "--report", s(&report), "--fragments", s(&frags),
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["report"]["loaded"], 2);
    assert_eq!(v["report"]["extracted"], 1);
    assert_eq!(v["report"]["fragments"], 6);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(file, v["report"]);
    assert_eq!(&std::fs::read(&frags).unwrap()[..4], b"CFR1");

    let text = run(&["db-build", "--db", s(&db), s(&ndb), "--out", s(&dir.path().join("q.cpf"))]);
    let stdout = String::from_utf8(text.stdout).unwrap();
    assert!(stdout.contains("signatures loaded:    2"));
    assert!(stdout.contains("windows extracted:    1"));
    assert!(stdout.contains("fragments:            6"));
}

#[test]
fn db_build_empty_input_writes_empty_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("empty.db");
    std::fs::write(&db, "").unwrap();
    let out_path = dir.path().join("e.cpf");
    let out = run(&["--json", "db-build", "--db", s(&db), "--out", s(&out_path)]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["report"]["loaded"], 0);
    let p = Prefilter::load(&out_path).unwrap();
    assert_eq!(p.fragments().len(), 0);
    assert_eq!(p.nonzero_cells(), 0);
}

#[test]
fn db_build_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.cpf");
    assert_eq!(code(&run(&["db-build", "--db", s(&dir.path().join("missing.db")), "--out", s(&out)])), 2);
    let txt = dir.path().join("sigs.txt");
    std::fs::write(&txt, PHANTOM).unwrap();
    assert_eq!(code(&run(&["db-build", "--db", s(&txt), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["db-build", "--out", s(&out)])), 2);
    let db = dir.path().join("a.db");
    std::fs::write(&db, PHANTOM).unwrap();
    assert_eq!(code(&run(&["db-build", "--db", s(&db)])), 2);
    assert_eq!(code(&run(&["db-build", "--db", s(&db), "--out", s(&out), "--header-prefix", "4"])), 2);
}

#[test]
fn scan_exit_codes_follow_hits() {
    let db = example_db();
    let mut data = random_buffer(1 << 16, 3);
    plant(&mut data, &PHANTOM_WINDOW, 4321);
    let infected = db.dir.path().join("infected.bin");
    std::fs::write(&infected, &data).unwrap();
    let clean = db.dir.path().join("clean.bin");
    std::fs::write(&clean, random_buffer(1 << 16, 4)).unwrap();

    let out = run(&[
        "--json", "scan", "--prefilter", s(&db.prefilter), "--precise", s(&db.precise), "--target", s(&infected),
    ]);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    for key in ["schema_version", "bytes_scanned", "elapsed_ms", "mb_per_s", "candidates", "survivors", "hits"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["hits"][0]["name"], "Phantom.4");
    assert_eq!(v["hits"][0]["offset"], 4321);
    assert_eq!(v["hits"][0]["kind"], "exact");
    assert_eq!(v["hits"][0]["similarity"], 11);

    let text = run(&["scan", "--prefilter", s(&db.prefilter), "--target", s(&infected)]);
    assert_eq!(code(&text), 1);
    assert!(String::from_utf8(text.stdout).unwrap().contains("Phantom.4 at 4321 (exact)"));

    assert_eq!(code(&run(&["scan", "--prefilter", s(&db.prefilter), "--target", s(&clean)])), 0);
    let missing = db.dir.path().join("none.cpf");
    assert_eq!(code(&run(&["scan", "--prefilter", s(&missing), "--target", s(&clean)])), 2);
    assert_eq!(code(&run(&["scan", "--target", s(&clean)])), 2);
    assert_eq!(
        code(&run(&["scan", "--prefilter", s(&db.prefilter), "--target", s(&clean), "--fp-floor", "12"])),
        2
    );
    let corrupt = db.dir.path().join("corrupt.cpf");
    std::fs::write(&corrupt, b"CPF1garbage").unwrap();
    assert_eq!(code(&run(&["scan", "--prefilter", s(&corrupt), "--target", s(&clean)])), 2);
}

#[test]
fn scan_threads_do_not_change_results() {
    let db = example_db();
    let mut data = random_buffer(5 << 20, 9);
    plant(&mut data, &PHANTOM_WINDOW, 3_000_001);
    let target = db.dir.path().join("big.bin");
    std::fs::write(&target, &data).unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out = run(&["--json", "--threads", threads, "scan", "--prefilter", s(&db.prefilter), "--target", s(&target)]);
        assert_eq!(code(&out), 1);
        let mut v = json(&out);
        for k in ["elapsed_ms", "mb_per_s", "stage_timings"] {
            v.as_object_mut().unwrap().remove(k);
        }
        reports.push(v);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn bench_rows_and_validation() {
    assert_eq!(code(&run(&["bench", "--size-mb", "0"])), 2);
    assert_eq!(code(&run(&["bench", "--size-mb", "1", "--reps", "0"])), 2);
    assert_eq!(code(&run(&["bench", "--size-mb", "1", "--corpus", "nonsense"])), 2);

    let out = run(&["--json", "bench", "--size-mb", "4", "--reps", "1", "--windows", "2000"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["stages"], "prefilter");
    assert_eq!(rows[1]["stages"], "prefilter_precise");
    assert!(rows[0]["median_mb_s"].as_f64().unwrap() >= rows[1]["median_mb_s"].as_f64().unwrap());
    for r in rows {
        assert_eq!(r["median_mb_s"], r["best_mb_s"]);
    }

    let db = example_db();
    let out = run(&[
        "bench", "--prefilter", s(&db.prefilter), "--precise", s(&db.precise), "--size-mb", "2", "--reps", "2",
        "--threads", "2",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("prefilter ")).count(), 2);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn lab_capacity_learns_all_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cap.csv");
    let image = dir.path().join("tables.pgm");
    let out = run(&[
        "--json", "lab", "capacity", "--inputs", "8", "--bits", "8", "--patterns", "200", "--bytes", "8", "--divider",
        "4", "--csv", s(&csv), "--image", s(&image),
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["series"][0]["converged"], true);
    let rows = csv_rows(&csv);
    assert_eq!(rows.last().unwrap()[2], "1.000000");
    assert!(std::fs::read(&image).unwrap().starts_with(b"P5\n256 8\n255\n"));
}

#[test]
fn lab_rejects_conflicting_shape() {
    let out = run(&["lab", "capacity", "--inputs", "8", "--bits", "4", "--bytes", "8"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8(out.stderr).unwrap().contains("conflicting"));
    assert_eq!(code(&run(&["lab", "capacity", "--bits", "0"])), 2);
    assert_eq!(code(&run(&["lab", "capacity", "--patterns", "0"])), 2);
    assert_eq!(code(&run(&["lab", "lr-sweep", "--dividers", "2,0"])), 2);
}

#[test]
fn lr_sweep_writes_one_series_per_divider() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = run(&["--json", "lab", "lr-sweep", "--patterns", "60", "--dividers", "1,2,4,8", "--csv", s(&csv)]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["series"].as_array().unwrap().len(), 4);
    let mut dividers: Vec<String> = csv_rows(&csv).into_iter().map(|r| r[0].clone()).collect();
    dividers.dedup();
    assert_eq!(dividers, ["1", "2", "4", "8"]);
}

#[test]
fn seeds_reproduce_csv_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..4).map(|i| dir.path().join(format!("{i}.csv"))).collect();
    let args = |p: &Path| vec!["lab".to_string(), "capacity".into(), "--patterns".into(), "80".into(), "--csv".into(), s(p).into()];
    assert_eq!(code(&bin().arg("--seed").arg("5").args(args(&paths[0])).output().unwrap()), 0);
    assert_eq!(code(&bin().arg("--seed").arg("5").args(args(&paths[1])).output().unwrap()), 0);
    assert_eq!(code(&bin().env("CYBERNEURON_SEED", "5").args(args(&paths[2])).output().unwrap()), 0);
    assert_eq!(code(&bin().arg("--seed").arg("6").args(args(&paths[3])).output().unwrap()), 0);
    let read = |p: &PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(&paths[0]), read(&paths[1]));
    assert_eq!(read(&paths[0]), read(&paths[2]));
    assert_ne!(read(&paths[0]), read(&paths[3]));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let csv = dir.path().join("c.csv");
    std::fs::write(&cfg, format!("# lab defaults\npatterns = 40\ndivider = 2\nseed = 9\ncsv = {}\n", s(&csv))).unwrap();
    let out = run(&["--json", "--config", s(&cfg), "lab", "capacity"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["config"]["pattern_count"], 40);
    assert_eq!(v["config"]["divider"], 2);
    assert_eq!(v["config"]["seed"], 9);
    assert!(csv.exists());

    let out = run(&["--json", "lab", "capacity", "--config", s(&cfg), "--divider", "8"]);
    assert_eq!(json(&out)["config"]["divider"], 8);

    std::fs::write(&cfg, "no_such_flag = 1\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "lab", "capacity"])), 2);
    std::fs::write(&cfg, "size_mb = 0\n").unwrap();
    assert_eq!(code(&run(&["--config", s(&cfg), "bench"])), 2);
    assert_eq!(code(&run(&["--config", s(&dir.path().join("absent.cfg")), "bench"])), 2);
}

#[test]
fn usage_exit_codes() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["--frobnicate"])), 2);
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["scan", "--threads", "many"])), 2);
}
