use std::path::{Path, PathBuf};
use std::process::Command;

use airtree::aitree::{AiTreeBundle, AITREE_KIND};
use airtree::bench::report::TIMING_COLUMNS;
use airtree::learn::mltree::MlNode;
use airtree::learn::{MlTreeParams, MultiLabelTree};
use airtree::persist;
use airtree::workload::{WorkloadFile, WORKLOAD_KIND};

const SMALL: &[&str] = &[
    "--points",
    "8000",
    "--max-entries",
    "40",
    "--selectivity",
    "0.002",
    "--count",
    "20",
    "--trees",
    "20",
    "--repetitions",
    "1",
    "--seed",
    "5",
];

fn airtree(out: &Path, args: &[&str]) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_airtree"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

/// Runs `stage` with the small settings; `extra` flags replace matching ones
/// and any remaining arguments follow the subcommand.
fn run_ok(out: &Path, stage: &str, extra: &[&str]) -> String {
    let mut args: Vec<&str> = SMALL.to_vec();
    let mut trailing = Vec::new();
    let mut i = 0;
    while i < extra.len() {
        match args.iter().position(|a| *a == extra[i]) {
            Some(at) if i + 1 < extra.len() => {
                args[at + 1] = extra[i + 1];
                i += 2;
            }
            _ => {
                trailing.push(extra[i]);
                i += 1;
            }
        }
    }
    args.push(stage);
    args.extend(trailing);
    let (code, stdout, stderr) = airtree(out, &args);
    assert_eq!(code, 0, "{stage} failed: {stderr}");
    stdout
}

/// The CSV with wall-clock columns removed.
fn without_timing(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&i| !TIMING_COLUMNS.contains(&&headers[i]))
        .collect();
    let mut rows = vec![keep.iter().map(|&i| headers[i].to_string()).collect()];
    for rec in r.records() {
        let rec = rec.unwrap();
        rows.push(keep.iter().map(|&i| rec[i].to_string()).collect());
    }
    rows
}

fn bytes(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn staged_and_one_shot_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&a, "run", &[]);
    run_ok(&b, "build", &[]);
    let gen = run_ok(&b, "gen", &["--verify"]);
    assert!(gen.contains("verified"), "{gen}");
    run_ok(&b, "train", &[]);
    let table = run_ok(&b, "bench", &[]);
    assert!(table.contains("hybrid"));

    for f in [
        "rtree.json",
        "hybrid.json",
        "models/router.json",
        "workloads/alpha_0.1.json",
        "models/aitree_alpha_0.5.json",
    ] {
        assert_eq!(bytes(a.join(f)), bytes(b.join(f)), "{f}");
    }
    assert_eq!(
        bytes(a.join("bench/sizes.csv")),
        bytes(b.join("bench/sizes.csv"))
    );
    let qa = without_timing(&a.join("bench/queries.csv"));
    assert_eq!(qa, without_timing(&b.join("bench/queries.csv")));
    assert_eq!(qa.len(), 1 + 5 * 20 * 3);
}

#[test]
fn report_merges_selectivities_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let s1 = tmp.path().join("s1");
    let s2 = tmp.path().join("s2");
    run_ok(&s1, "run", &[]);
    run_ok(&s2, "run", &["--selectivity", "0.001"]);
    let out = tmp.path().join("merged");
    let dirs = [s1.to_str().unwrap(), s2.to_str().unwrap()];
    let (code, _, err) = airtree(&out, &["report", dirs[0], dirs[1]]);
    assert_eq!(code, 0, "{err}");
    let rows = without_timing(&out.join("report/figures.csv"));
    let variant = rows[0].iter().position(|h| h == "variant").unwrap();
    for v in ["rtree", "aitree", "hybrid"] {
        assert_eq!(rows[1..].iter().filter(|r| r[variant] == v).count(), 10);
    }
    let first = bytes(out.join("report/figures.csv"));
    airtree(&out, &["report", dirs[0], dirs[1]]);
    assert_eq!(bytes(out.join("report/figures.csv")), first);
    let sizes = without_timing(&out.join("report/model_sizes.csv"));
    assert_eq!(sizes.len(), 1 + 10);
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("x");
    assert_eq!(airtree(&d, &["--no-such-flag", "build"]).0, 1);
    assert_eq!(airtree(&d, &["--tau", "1.5", "build"]).0, 1);
    let (code, _, err) = airtree(&d, &["bench"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, err) = airtree(&d, &["report", "/nonexistent/one", "/nonexistent/two"]);
    assert_eq!(code, 2);
    assert!(
        err.contains("/nonexistent/one/bench/queries.csv")
            && err.contains("/nonexistent/two/bench/sizes.csv"),
        "{err}"
    );

    // A model that returns only part of a multi-leaf answer trips the gate.
    run_ok(&d, "run", &[]);
    let (target, leaf) = [0.1, 0.25, 0.5, 0.75]
        .iter()
        .find_map(|&t| {
            let w: WorkloadFile =
                persist::load(&d.join(format!("workloads/alpha_{t}.json")), WORKLOAD_KIND).unwrap();
            w.queries
                .iter()
                .find(|q| q.tn >= 2)
                .map(|q| (t, q.true_leaf_ids[0]))
        })
        .unwrap();
    let path = d.join(format!("models/aitree_alpha_{target}.json"));
    let mut bundle: AiTreeBundle = persist::load(&path, AITREE_KIND).unwrap();
    let label_count = bundle.grid.leaf_count;
    for cell in bundle.grid.cells.iter_mut() {
        *cell = Some(MultiLabelTree {
            label_count,
            params: MlTreeParams::default(),
            n_examples: 1,
            nodes: vec![MlNode::Leaf(vec![leaf])],
        });
    }
    persist::save(&path, AITREE_KIND, &bundle).unwrap();
    let mut args = SMALL.to_vec();
    args.push("bench");
    let (code, _, err) = airtree(&d, &args);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn config_file_overrides_flags_and_csv_input_works() {
    let tmp = tempfile::tempdir().unwrap();
    let csv_path = tmp.path().join("pts.csv");
    let mut text = String::from("name,lon,lat\n");
    for i in 0..3000 {
        let x = (i * 7919 % 1000) as f64 * 0.37;
        let y = (i * 104729 % 997) as f64 * 0.41;
        text.push_str(&format!("p{i},{x},{y}\n"));
    }
    text.push_str("bad,,1\n");
    std::fs::write(&csv_path, text).unwrap();
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, "[workload]\nquery_count = 7\n").unwrap();
    let d = tmp.path().join("c");
    let (code, stdout, err) = airtree(
        &d,
        &[
            "--csv",
            csv_path.to_str().unwrap(),
            "--x-col",
            "lon",
            "--y-col",
            "lat",
            "--head-limit",
            "2500",
            "--max-entries",
            "30",
            "--selectivity",
            "0.004",
            "--count",
            "50",
            "--trees",
            "10",
            "--repetitions",
            "1",
            "--config",
            cfg.to_str().unwrap(),
            "run",
        ],
    );
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("2500 points"), "{stdout}");
    let w: WorkloadFile = persist::load(&d.join("workloads/alpha_1.json"), WORKLOAD_KIND).unwrap();
    assert_eq!(w.spec.query_count, 7);
    assert!(w.queries.len() <= 7);
    assert_eq!(w.dataset_size, 2500);
}
