use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dchi::embedding::write_text;
use dchi::synthetic::{gaussian_table, sentiment_world, with_specials, SentimentConfig};
use serde_json::Value;
use tempfile::TempDir;

const GRID: [&str; 6] = ["50", "75", "100", "125", "150", "175"];

fn dchi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dchi")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Fixture {
    dir: TempDir,
    table: PathBuf,
}

impl Fixture {
    /// 60 regular tokens `w0..w59` in 8 dims plus the special tokens.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let table = dir.path().join("table.txt");
        write_text(&with_specials(&gaussian_table(60, 8, 0.3, 5)), &table).unwrap();
        Self { dir, table }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_owned()
    }

    fn write(&self, name: &str, content: &str) -> String {
        std::fs::write(self.path(name), content).unwrap();
        self.s(name)
    }

    fn table(&self) -> &str {
        self.table.to_str().unwrap()
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn jsonl(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn csv_rows(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

fn corpus() -> String {
    (0..20)
        .map(|d| (0..12).map(|i| format!("w{}", (d * 7 + i * 3) % 60)).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn privatize_writes_header_and_one_record_per_line() {
    let f = Fixture::new();
    let input = f.write("in.txt", "w1 w2 w3\nw4 w5\n");
    let out = f.s("out.jsonl");
    ok(&dchi(&["privatize", "--table", f.table(), "--eta", "5", "--input", &input, "--out", &out]));
    let lines = jsonl(Path::new(&out));
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["run"]["config"]["command"], "privatize");
    assert_eq!(lines[0]["run"]["config"]["eta"], 5.0);
    assert_eq!(lines[0]["run"]["tool"], "dchi");
    for rec in &lines[1..] {
        let orig = rec["original_ids"].as_array().unwrap();
        assert_eq!(orig.len(), rec["privatized_ids"].as_array().unwrap().len());
        assert!(rec["text"].is_string());
    }
    assert_eq!(lines[2]["original_ids"].as_array().unwrap().len(), 2);
}

#[test]
fn privatize_with_huge_eta_returns_the_input() {
    let f = Fixture::new();
    let input = f.write("in.txt", &corpus());
    let out = f.s("out.jsonl");
    ok(&dchi(&["privatize", "--table", f.table(), "--eta", "1e9", "--input", &input, "--out", &out]));
    for rec in &jsonl(Path::new(&out))[1..] {
        assert_eq!(rec["original_ids"], rec["privatized_ids"]);
    }
}

#[test]
fn privatize_empty_input_writes_only_the_header() {
    let f = Fixture::new();
    let input = f.write("empty.txt", "");
    let out = f.s("out.jsonl");
    ok(&dchi(&["privatize", "--table", f.table(), "--eta", "50", "--input", &input, "--out", &out]));
    let lines = jsonl(Path::new(&out));
    assert_eq!(lines.len(), 1);
    assert!(lines[0].get("run").is_some());
}

#[test]
fn zero_or_negative_eta_is_a_usage_error() {
    let f = Fixture::new();
    let input = f.write("in.txt", "w1\n");
    let out = f.s("out.jsonl");
    for eta in ["0", "-1", "nan", "inf"] {
        let o = dchi(&["privatize", "--table", f.table(), "--eta", eta, "--input", &input, "--out", &out]);
        assert_eq!(o.status.code(), Some(2), "eta {eta}");
        assert!(!Path::new(&out).exists());
    }
}

#[test]
fn missing_files_fail_without_output() {
    let f = Fixture::new();
    let out = f.s("out.jsonl");
    let o = dchi(&["privatize", "--table", "/nonexistent/table.txt", "--eta", "1", "--input", "x", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let o = dchi(&["privatize", "--table", f.table(), "--eta", "1", "--input", &f.s("nope.txt"), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!Path::new(&out).exists());
}

#[test]
fn failed_report_leaves_no_partial_output() {
    let f = Fixture::new();
    let input = f.write("specials.txt", "[CLS] [SEP]\n");
    let out = f.s("inv.json");
    let o = dchi(&["report", "inversion", "--table", f.table(), "--eta", "1", "--input", &input, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!Path::new(&out).exists());
    assert!(!f.path("inv.csv").exists());
    let leftovers = std::fs::read_dir(f.dir.path()).unwrap().count();
    assert_eq!(leftovers, 2, "only the table and the input should remain");
}

#[test]
fn geometry_reports_closed_form_noise_rows() {
    let f = Fixture::new();
    let out = f.s("geo.json");
    let mut args = vec!["report", "geometry", "--table", f.table(), "--out", &out, "--k", "1", "--k", "5"];
    for e in GRID {
        args.extend(["--eta", e]);
    }
    ok(&dchi(&args));
    let j = read_json(Path::new(&out));
    let norms = j["results"]["avg_noise_norm"].as_array().unwrap();
    assert_eq!(norms.len(), 6);
    for (n, e) in norms.iter().zip(GRID) {
        let want = 8.0 / e.parse::<f64>().unwrap();
        assert!((n.as_f64().unwrap() - want).abs() < 1e-12);
    }
    assert_eq!(j["run"]["config"]["command"], "report geometry");
    let rows = csv_rows(&f.path("geo.csv"));
    assert_eq!(rows.len(), 12);
    let header = std::fs::read_to_string(f.path("geo.csv")).unwrap();
    assert!(header.starts_with("# {\"tool\":\"dchi\""));
    assert!(header.lines().nth(1).unwrap().starts_with("eta,k,avg_noise_norm,avg_knn_distance"));
}

#[test]
fn deniability_with_one_trial_has_unit_s_w() {
    let f = Fixture::new();
    let out = f.s("den.json");
    ok(&dchi(&["report", "deniability", "--table", f.table(), "--eta", "3", "--trials", "1", "--out", &out]));
    let j = read_json(Path::new(&out));
    let tokens = j["results"][0]["tokens"].as_array().unwrap();
    assert_eq!(tokens.len(), 60);
    assert!(tokens.iter().all(|t| t["s_w"] == 1));
    assert_eq!(csv_rows(&f.path("den.csv")).len(), 60);
}

#[test]
fn inversion_accuracy_column_per_eta() {
    let f = Fixture::new();
    let input = f.write("corpus.txt", &corpus());
    let out = f.s("inv.json");
    ok(&dchi(&[
        "report", "inversion", "--table", f.table(), "--input", &input, "--out", &out, "--eta", "1", "--eta", "1000",
    ]));
    let rows = csv_rows(&f.path("inv.csv"));
    assert_eq!(rows.len(), 2);
    let acc: Vec<f64> = rows.iter().map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(acc[0] < acc[1]);
    assert!(acc[1] > 0.99);
}

#[test]
fn examples_report_has_one_entry_per_eta() {
    let f = Fixture::new();
    let out = f.s("ex.json");
    ok(&dchi(&[
        "report", "examples", "--table", f.table(), "--text", "w3 w7 w9", "--eta", "2", "--eta", "20", "--trials",
        "50", "--out", &out,
    ]));
    let j = read_json(Path::new(&out));
    let results = j["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["histograms"].as_array().unwrap().len(), 3);
    assert!(!csv_rows(&f.path("ex.csv")).is_empty());
}

fn run_bytes(f: &Fixture, args: &[&str], outputs: &[&str]) -> Vec<Vec<u8>> {
    ok(&dchi(args));
    outputs.iter().map(|o| std::fs::read(f.path(o)).unwrap()).collect()
}

#[test]
fn reports_are_byte_identical_across_reruns_and_worker_counts() {
    let f = Fixture::new();
    let input = f.write("corpus.txt", &corpus());
    let cases: Vec<(Vec<String>, Vec<&str>)> = vec![
        (
            vec!["report", "deniability", "--trials", "20", "--eta", "2", "--eta", "10", "--out", &f.s("d.json")]
                .into_iter()
                .map(String::from)
                .collect(),
            vec!["d.json", "d.csv"],
        ),
        (
            vec!["report", "inversion", "--eta", "4", "--input", &input, "--out", &f.s("i.json")]
                .into_iter()
                .map(String::from)
                .collect(),
            vec!["i.json", "i.csv"],
        ),
        (
            vec!["report", "geometry", "--eta", "4", "--trials", "500", "--out", &f.s("g.json")]
                .into_iter()
                .map(String::from)
                .collect(),
            vec!["g.json", "g.csv"],
        ),
        (
            vec!["privatize", "--eta", "4", "--input", &input, "--out", &f.s("p.jsonl")]
                .into_iter()
                .map(String::from)
                .collect(),
            vec!["p.jsonl"],
        ),
        (
            vec!["gen-pretrain", "--eta", "4", "--input", &input, "--out", &f.s("m.jsonl")]
                .into_iter()
                .map(String::from)
                .collect(),
            vec!["m.jsonl"],
        ),
    ];
    for (args, outputs) in &cases {
        let mut reference = None;
        for workers in ["1", "4", "8", "4"] {
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--table", f.table(), "--seed", "9", "--workers", workers]);
            let got = run_bytes(&f, &full, outputs);
            match &reference {
                None => reference = Some(got),
                Some(r) => assert!(r == &got, "{} differs at {workers} workers", args[..2].join(" ")),
            }
        }
    }
}

#[test]
fn gen_pretrain_defaults_and_zero_mask_rate() {
    let f = Fixture::new();
    let input = f.write("corpus.txt", &corpus());
    let out = f.s("m.jsonl");
    ok(&dchi(&["gen-pretrain", "--table", f.table(), "--eta", "10", "--input", &input, "--out", &out]));
    let lines = jsonl(Path::new(&out));
    let cfg = &lines[0]["run"]["config"];
    assert_eq!(cfg["mask_rate"], 0.15);
    assert_eq!(cfg["max_predictions"], 20);
    assert_eq!(cfg["prob_draws"], 10);
    assert_eq!(lines.len(), 21);
    let masked: usize = lines[1..].iter().map(|l| l["masked_positions"].as_array().unwrap().len()).sum();
    assert!(masked > 0);
    for l in &lines[1..] {
        for set in l["prob_targets"].as_array().unwrap() {
            let total: u64 = set.as_array().unwrap().iter().map(|e| e["count"].as_u64().unwrap()).sum();
            assert_eq!(total, 10);
        }
    }

    ok(&dchi(&[
        "gen-pretrain", "--table", f.table(), "--eta", "10", "--input", &input, "--out", &out, "--mask-rate", "0",
    ]));
    for l in &jsonl(Path::new(&out))[1..] {
        for key in ["masked_positions", "original_targets", "vanilla_targets", "prob_targets"] {
            assert!(l[key].as_array().unwrap().is_empty(), "{key}");
        }
    }
}

#[test]
fn gen_pretrain_rejects_bad_mask_rate() {
    let f = Fixture::new();
    let input = f.write("corpus.txt", &corpus());
    let out = f.s("m.jsonl");
    let o = dchi(&[
        "gen-pretrain", "--table", f.table(), "--eta", "10", "--input", &input, "--out", &out, "--mask-rate", "1.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!Path::new(&out).exists());
}

#[test]
fn probe_grid_rows_with_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SentimentConfig { train_size: 200, eval_size: 200, ..Default::default() };
    let world = sentiment_world(&cfg);
    let table = dir.path().join("t.txt");
    write_text(&world.table, &table).unwrap();
    let train = dir.path().join("train.tsv");
    let eval = dir.path().join("dev.tsv");
    std::fs::write(&train, &world.train_tsv).unwrap();
    std::fs::write(&eval, &world.eval_tsv).unwrap();
    let out = dir.path().join("probe.json");
    ok(&dchi(&[
        "probe",
        "--table",
        table.to_str().unwrap(),
        "--train",
        train.to_str().unwrap(),
        "--eval",
        eval.to_str().unwrap(),
        "--eta",
        "50",
        "--eta",
        "100",
        "--eta",
        "175",
        "--epochs",
        "3",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]));
    let j = read_json(&out);
    let rows = j["results"]["rows"].as_array().unwrap();
    let grid: Vec<&Value> = rows.iter().filter(|r| r["mode"] != "none").collect();
    assert_eq!(grid.len(), 18);
    let none: Vec<&Value> = rows.iter().filter(|r| r["mode"] == "none").collect();
    assert_eq!(none.len(), 3);
    assert!(none.iter().all(|r| r["eta"].is_null()));
    for r in rows {
        let se = r["std_error"].as_f64().unwrap();
        assert!(se > 0.0 && se < 0.1);
    }
    for r in grid {
        assert!(r["clean_accuracy"].is_number());
        assert!(r["gain_std_error"].is_number());
    }
    let seeds: Vec<u64> = none.iter().map(|r| r["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, [1, 2, 3]);
    assert_eq!(j["results"]["summary"].as_array().unwrap().len(), 7);
    assert_eq!(csv_rows(&dir.path().join("probe.csv")).len(), 21);
}

#[test]
fn probe_rejects_explicit_none_mode() {
    let f = Fixture::new();
    let tsv = f.write("d.tsv", "1\tw1 w2\n0\tw3\n");
    let o = dchi(&[
        "probe", "--table", f.table(), "--train", &tsv, "--eval", &tsv, "--eta", "1", "--mode", "none", "--out",
        &f.s("p.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn binary_tables_are_accepted() {
    let f = Fixture::new();
    let table = dchi::load_table(&f.table, dchi::TableFormat::Text).unwrap();
    let bin = f.path("t.bin");
    dchi::embedding::write_binary(&table, &bin).unwrap();
    let input = f.write("in.txt", "w1 w2\n");
    let out = f.s("o.jsonl");
    ok(&dchi(&[
        "privatize", "--table", bin.to_str().unwrap(), "--format", "binary", "--eta", "1e9", "--input", &input,
        "--out", &out,
    ]));
    assert_eq!(jsonl(Path::new(&out)).len(), 2);
}
