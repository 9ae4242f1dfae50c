use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fracinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracinv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn only_subdir(dir: &Path) -> PathBuf {
    let entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries.into_iter().next().unwrap()
}

const SMALL_5_1: &[&str] = &["example_5_1", "--alpha", "0.5", "--s", "0.5", "--n", "16", "--k", "10", "--max-iter", "5"];

#[test]
fn small_run_writes_csv_with_config_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fracinv(&[SMALL_5_1, &["--out", out]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let cell = only_subdir(&dir.path().join("example_5_1"));
    assert_eq!(cell.file_name().unwrap().len(), 16);
    let summary = std::fs::read_to_string(cell.join("summary.csv")).unwrap();
    assert!(summary.starts_with("# fracinv"));
    assert!(summary.contains("# seed = "));
    assert!(summary.contains("# alpha = 0.5"));
    let header = summary.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("alpha,s,mu,theta,gamma,stopping_index"));
    assert!(cell.join("trace_a0.5_s0.5.csv").exists());
    assert!(cell.join("profile_a0.5_s0.5.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["example_5_3", "--n", "16", "--k", "10", "--mu", "0.01,0.05", "--max-iter", "20"];
    let run = |dir: &Path| {
        let o = fracinv(&[&args[..], &["--out", dir.to_str().unwrap()]].concat());
        assert!(o.status.success(), "{}", stderr(&o));
        let cell = only_subdir(&dir.join("example_5_3"));
        let mut files: Vec<_> = std::fs::read_dir(&cell).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        let contents = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read_to_string(p).unwrap()))
            .collect::<Vec<_>>();
        (cell.file_name().unwrap().to_owned(), contents)
    };
    let a = tempfile::tempdir().unwrap();
    let first = run(a.path());
    let second = run(a.path());
    assert!(!first.1.is_empty());
    assert_eq!(first, second);

    // Another output location: same hash, same numbers, only the header's path differs.
    let b = tempfile::tempdir().unwrap();
    let moved = run(b.path());
    assert_eq!(first.0, moved.0);
    let strip = |files: &[(std::ffi::OsString, String)]| {
        files
            .iter()
            .map(|(n, c)| (n.clone(), c.lines().filter(|l| !l.starts_with("# output_dir")).collect::<Vec<_>>().join("\n")))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&first.1), strip(&moved.1));
}

#[test]
fn different_seeds_land_in_different_directories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for seed in ["1", "2"] {
        let o = fracinv(&[SMALL_5_1, &["--out", out, "--seed", seed]].concat());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read_dir(dir.path().join("example_5_1")).unwrap().count(), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "alpha = 0.3\ns = 0.5\nN = 16\nK = 10\nmax_iter = 3\n").unwrap();
    let out = dir.path().join("res");
    let o = fracinv(&[
        "example_5_1",
        "--config",
        cfg.to_str().unwrap(),
        "--alpha",
        "0.6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("alpha=0.6 s=0.5"), "{stdout}");
    assert!(stdout.contains("after 3 iterations"), "{stdout}");
}

#[test]
fn invalid_input_gives_machine_readable_error() {
    let o = fracinv(&["example_5_2", "--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error kind=config"), "{err}");
    assert!(err.contains("alpha"), "{err}");

    let o = fracinv(&["example_9_9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=config"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "alpha = 0.5\nbogus_key = 3\n").unwrap();
    let o = fracinv(&["example_5_1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));

    let o = fracinv(&["example_5_1", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=io"), "{}", stderr(&o));
}

#[test]
fn custom_target_and_debug_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("g.csv");
    std::fs::write(&target, "x,value\n-1,0\n0,1\n1,0\n").unwrap();
    let out = dir.path().join("res");
    let o = fracinv(&[
        SMALL_5_1,
        &[
            "--target",
            target.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--dump-matrices",
            "--dump-trajectory",
        ],
    ]
    .concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let cell = only_subdir(&out.join("example_5_1"));
    assert!(cell.join("matrices.csv").exists());
    assert!(cell.join("trajectory.csv").exists());
}

#[test]
fn supplied_noise_level_drives_stopping() {
    let dir = tempfile::tempdir().unwrap();
    let o = fracinv(&[
        "example_5_3",
        "--n",
        "16",
        "--k",
        "10",
        "--mu",
        "0.01",
        "--theta",
        "100",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("I_s = 0 (discrepancy)"), "{stdout}");
    assert!(stdout.contains("theta = 1.000e2"), "{stdout}");
}
