use std::path::Path;
use std::process::{Command, Output};

fn okaem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okaem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> String {
    let o = okaem(args);
    assert_eq!(
        code(&o),
        0,
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

const TINY: [&str; 4] = ["--set", "pop_size=4", "--set", "source_generations=3"];

fn generate(dir: &Path, name: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["generate", "--suite", "STOP9", "--seed", "7", "-o", p(&out)];
    args.extend(TINY);
    ok(&args);
    out
}

#[test]
fn generate_is_deterministic_and_writes_a_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.okar");
    let b = generate(dir.path(), "b.okar");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let desc = std::fs::read_to_string(a.with_extension("instance")).unwrap();
    assert!(desc.contains("suite=STOP9"));
    assert!(desc.contains("family=sphere"));
}

#[test]
fn missing_output_directory_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nope").join("a.okar");
    let o = okaem(&["generate", "--suite", "STOP9", "-o", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn bad_config_keys_and_files_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.okar");
    assert_eq!(
        code(&okaem(&[
            "generate",
            "--suite",
            "STOP9",
            "--set",
            "bogus=1",
            "-o",
            p(&out)
        ])),
        2
    );
    let missing = dir.path().join("missing.cfg");
    assert_eq!(
        code(&okaem(&[
            "generate",
            "--suite",
            "STOP9",
            "--config",
            p(&missing),
            "-o",
            p(&out)
        ])),
        2
    );
    assert_eq!(code(&okaem(&["frobnicate"])), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tiny run\ngenerations = 9\nseed = 3\n").unwrap();
    let out = dir.path().join("opt");
    ok(&[
        "optimize",
        "--family",
        "sphere",
        "--dim",
        "3",
        "--config",
        p(&cfg),
        "--set",
        "generations=2",
        "-o",
        p(&out),
    ]);
    let log = std::fs::read_to_string(out.join("run_0.csv")).unwrap();
    assert!(log.starts_with("# config: "));
    assert!(log.lines().next().unwrap().contains("seed=3"));
    assert_eq!(data_rows(&log).len(), 2);
}

#[test]
fn pretrain_optimize_inspect_and_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let archive = generate(dir.path(), "a.okar");
    let params = dir.path().join("p.okmp");
    let params2 = dir.path().join("q.okmp");
    for out in [&params, &params2] {
        ok(&[
            "pretrain",
            "--archive",
            p(&archive),
            "--epochs",
            "1",
            "--seed",
            "4",
            "-o",
            p(out),
        ]);
    }
    assert_eq!(
        std::fs::read(&params).unwrap(),
        std::fs::read(&params2).unwrap()
    );
    let losses = std::fs::read_to_string(dir.path().join("p.okmp.loss.csv")).unwrap();
    assert!(losses.starts_with("# config: "));
    assert_eq!(data_rows(&losses).len(), 1);

    let runs = dir.path().join("runs");
    ok(&[
        "optimize",
        "--suite",
        "STOP9",
        "--params",
        p(&params),
        "--runs",
        "3",
        "--set",
        "generations=4",
        "-o",
        p(&runs),
    ]);
    for i in 0..3 {
        let log = std::fs::read_to_string(runs.join(format!("run_{i}.csv"))).unwrap();
        assert!(log.starts_with("# config: "));
        assert_eq!(data_rows(&log).len(), 4);
        let best = std::fs::read_to_string(runs.join(format!("best_{i}.txt"))).unwrap();
        assert!(best.starts_with("fitness="));
    }
    let agg = std::fs::read_to_string(runs.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("# config: "));
    assert_eq!(data_rows(&agg).len(), 4);

    let inspect = dir.path().join("inspect");
    ok(&[
        "inspect",
        "--params",
        p(&params),
        "--archive",
        p(&archive),
        "-o",
        p(&inspect),
    ]);
    for gen in [1, 3] {
        let sel = std::fs::read_to_string(inspect.join(format!("selection_gen{gen}_layer1.txt")))
            .unwrap();
        let rows: Vec<f64> = sel
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).sum())
            .collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(inspect
            .join(format!("mutation_gen{gen}_layer1.txt"))
            .exists());
    }

    let report = dir.path().join("report.csv");
    ok(&[
        "report",
        p(&runs.join("run_0.csv")),
        p(&runs.join("run_1.csv")),
        "-o",
        p(&report),
    ]);
    let table = std::fs::read_to_string(&report).unwrap();
    assert!(table.starts_with("# config: "));
    assert_eq!(data_rows(&table).len(), 4);
}

#[test]
fn dimension_mismatches_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let archive = generate(dir.path(), "a.okar");
    let params = dir.path().join("p.okmp");
    let o = okaem(&[
        "pretrain",
        "--archive",
        p(&archive),
        "--epochs",
        "1",
        "--set",
        "dim=10",
        "-o",
        p(&params),
    ]);
    assert_eq!(code(&o), 3);
    ok(&[
        "pretrain",
        "--archive",
        p(&archive),
        "--epochs",
        "1",
        "-o",
        p(&params),
    ]);
    let o = okaem(&[
        "optimize",
        "--family",
        "sphere",
        "--dim",
        "10",
        "--params",
        p(&params),
        "--set",
        "generations=2",
        "-o",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablation.csv");
    ok(&[
        "ablate",
        "--family",
        "ackley",
        "--dim",
        "3",
        "--runs",
        "2",
        "--set",
        "generations=3",
        "-o",
        p(&out),
    ]);
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.starts_with("# config: "));
    let rows = data_rows(&table);
    let names: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        ["full", "crossover_only", "mutation_only", "no_selftune"]
    );
    let per_run = std::fs::read_to_string(dir.path().join("ablation.csv.runs.csv")).unwrap();
    assert_eq!(data_rows(&per_run).len(), 8);
    let o = okaem(&[
        "ablate",
        "--family",
        "ackley",
        "--dim",
        "3",
        "--variants",
        "bogus",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&o), 2);
}
