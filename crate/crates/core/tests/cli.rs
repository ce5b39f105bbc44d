use std::fs;

use discnet::experiments::cli_main;

const BIN: &str = "discnet";

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once(BIN).chain(args.iter().copied()))
}

fn small_args(out: &str) -> Vec<String> {
    [
        "--study", "sparse-comparison", "--n", "12", "--m", "6,9", "--s", "2", "--nn", "3", "--threads", "1",
        "--out", out,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn run_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let args = small_args(out.to_str().unwrap());
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(run(&refs), 0);
    let inst = fs::read_to_string(out.join("sparse-comparison_instances.csv")).unwrap();
    let agg = fs::read_to_string(out.join("sparse-comparison_aggregate.csv")).unwrap();
    // header plus 2 points × 3 instances × 2 solvers
    assert_eq!(inst.lines().count(), 1 + 12);
    assert_eq!(agg.lines().count(), 1 + 4);
    assert!(!out.join("sparse-comparison_timings.csv").exists());
    assert!(!inst.contains("wall_time"));
}

#[test]
fn timings_are_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let mut args = small_args(out.to_str().unwrap());
    args.push("--timings".into());
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(run(&refs), 0);
    let t = fs::read_to_string(out.join("sparse-comparison_timings.csv")).unwrap();
    assert!(t.starts_with("model,m,n,s,snr_db,prune_ratio,instance,solver,wall_time"));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# comment\nstudy = pruning\nn = 10\nnn = 2\nratios = 0, 0.5\nseed = 9\n").unwrap();
    let out = dir.path().join("res");
    let code = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--nn",
        "3",
        "--threads",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let inst = fs::read_to_string(out.join("pruning_instances.csv")).unwrap();
    // flag overrides the file: 2 ratios × 3 instances
    assert_eq!(inst.lines().count(), 1 + 6);
    assert!(inst.lines().nth(1).unwrap().starts_with("rect,10,10,3,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--no-such-flag"]), 2);
    assert_eq!(run(&["--study", "nonsense"]), 3);
    assert_eq!(run(&["--study", "pruning", "--ratios", "0.95"]), 3);
    assert_eq!(run(&["--study", "olfactory", "--n", "20", "--m", "10"]), 3);
    assert_eq!(run(&["--study", "pruning", "--config", "/definitely/missing.cfg"]), 3);
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "this line has no equals sign\n").unwrap();
    assert_eq!(run(&["--study", "pruning", "--config", bad.to_str().unwrap()]), 3);
    // output directory path is an existing file
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let code = run(&[
        "--study", "pruning", "--n", "8", "--nn", "1", "--ratios", "0", "--threads", "1", "--out",
        file.to_str().unwrap(),
    ]);
    assert_eq!(code, 4);
    assert_eq!(run(&["--study", "pruning", "--print-config"]), 0);
}

#[test]
fn thread_count_does_not_change_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let mut args = small_args(out.to_str().unwrap());
        let pos = args.iter().position(|a| a == "--threads").unwrap();
        args[pos + 1] = threads.into();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(run(&refs), 0);
        tables.push((
            fs::read(out.join("sparse-comparison_instances.csv")).unwrap(),
            fs::read(out.join("sparse-comparison_aggregate.csv")).unwrap(),
        ));
    }
    assert_eq!(tables[0], tables[1]);
}
