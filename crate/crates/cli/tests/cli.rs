use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mqlv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqlv"))
        .args(args)
        .env_remove("MQLV_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn json_field(text: &str, key: &str) -> f64 {
    let pat = format!("\"{key}\":");
    let start = text.find(&pat).unwrap_or_else(|| panic!("no {key} in {text}")) + pat.len();
    text[start..].split([',', '}']).next().unwrap().trim().parse().unwrap()
}

#[test]
fn help_lists_flags_and_defaults() {
    for (sub, flags) in [
        (
            "generate",
            vec![
                "--kappa",
                "--b",
                "--sigma",
                "--s0",
                "--maturity",
                "--steps",
                "--paths",
                "--seed",
                "--out",
            ],
        ),
        (
            "probability",
            vec![
                "--paths-file",
                "--strike",
                "--lambda",
                "--dropout-p",
                "--m-basis",
                "--seed",
            ],
        ),
        ("bsm", vec!["--s0", "--k", "--sigma", "--r", "--t"]),
        ("calibrate", vec!["--series", "--dt", "--seed"]),
        ("compare", vec!["--config", "--output-dir"]),
        ("curve", vec!["--config", "--output-dir"]),
    ] {
        let out = mqlv(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let text = stdout(&out);
        for flag in flags {
            assert!(text.contains(flag), "{sub} help lacks {flag}");
        }
        assert!(text.contains("--threads"));
    }
    assert!(stdout(&mqlv(&["generate", "--help"])).contains("[default: 40000]"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mqlv(&[]).status.code(), Some(1));
    assert_eq!(mqlv(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mqlv(&["bsm", "--k", "abc"]).status.code(), Some(1));
    assert_eq!(mqlv(&["generate"]).status.code(), Some(1), "missing --out");
    assert_eq!(mqlv(&["bsm", "--k", "-1"]).status.code(), Some(1));
    assert_eq!(
        mqlv(&["probability", "--paths-file", "x.csv", "--paths", "10"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        mqlv(&["probability", "--lambda", "0", "--paths", "100"]).status.code(),
        Some(1)
    );
}

#[test]
fn bsm_reference_value() {
    let out = mqlv(&["bsm", "--k", "1.02"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let pct: f64 = text
        .split('[')
        .nth(1)
        .and_then(|s| s.split('%').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((pct - 40.509).abs() < 0.05, "{text}");
}

#[test]
fn generate_writes_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = mqlv(&[
            "generate",
            "--paths",
            "300",
            "--seed",
            "9",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        assert!(stdout(&out).contains("analytic"));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 300 * 6);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn generate_without_noise_gives_identical_paths() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("flat.csv");
    assert!(mqlv(&[
        "generate",
        "--sigma",
        "0",
        "--paths",
        "20",
        "--out",
        file.to_str().unwrap()
    ])
    .status
    .success());
    let text = std::fs::read_to_string(&file).unwrap();
    let mut by_step: Vec<Vec<String>> = vec![Vec::new(); 6];
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        by_step[cells[1].parse::<usize>().unwrap()].push(cells[3].to_string());
    }
    for values in by_step {
        assert_eq!(values.len(), 20);
        assert!(values.iter().all(|v| *v == values[0]));
    }
}

#[test]
fn unwritable_output_exits_three() {
    let out = mqlv(&["generate", "--paths", "10", "--out", "/nonexistent-dir/paths.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(
        mqlv(&["calibrate", "--series", "/nonexistent-dir/s.csv"]).status.code(),
        Some(3)
    );
}

#[test]
fn probability_extremes_and_file_input() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("paths.csv");
    assert!(mqlv(&[
        "generate",
        "--paths",
        "2000",
        "--seed",
        "4",
        "--out",
        file.to_str().unwrap()
    ])
    .status
    .success());
    let f = file.to_str().unwrap();

    let low = stdout(&mqlv(&["probability", "--paths-file", f, "--strike", "0.0001"]));
    assert!((json_field(&low, "probability") - 1.0).abs() < 1e-9, "{low}");
    let high = stdout(&mqlv(&["probability", "--paths-file", f, "--strike", "10"]));
    assert!(json_field(&high, "probability").abs() < 1e-9, "{high}");

    let from_file = stdout(&mqlv(&["probability", "--paths-file", f, "--seed", "4"]));
    let simulated = stdout(&mqlv(&["probability", "--paths", "2000", "--seed", "4"]));
    assert_eq!(from_file, simulated);
}

#[test]
fn probability_at_the_money_dataset() {
    let out = mqlv(&["probability", "--paths", "40000", "--seed", "3", "--strike", "1.00"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        (100.0 * json_field(&text, "probability") - 49.924).abs() < 1.0,
        "{text}"
    );
    assert_eq!(json_field(&text, "n_paths"), 40000.0);
}

#[test]
fn probability_exports_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let phi = dir.path().join("phi.csv");
    let w = dir.path().join("w.csv");
    let out = mqlv(&[
        "probability",
        "--paths",
        "1000",
        "--phi-out",
        phi.to_str().unwrap(),
        "--weights-out",
        w.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&phi).unwrap().starts_with("t,phi_0"));
    assert!(std::fs::read_to_string(&w).unwrap().starts_with("t,row,col,w_value"));
}

#[test]
fn thread_count_does_not_change_output() {
    let one = mqlv(&["--threads", "1", "probability", "--paths", "5000", "--strike", "0.98"]);
    let four = mqlv(&["--threads", "4", "probability", "--paths", "5000", "--strike", "0.98"]);
    let env = Command::new(env!("CARGO_BIN_EXE_mqlv"))
        .args(["probability", "--paths", "5000", "--strike", "0.98"])
        .env("MQLV_THREADS", "3")
        .output()
        .unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, env.stdout);
    assert_eq!(mqlv(&["--threads", "0", "bsm"]).status.code(), Some(1));
}

#[test]
fn calibrate_round_trip_and_constant_series() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let s = series.to_str().unwrap();
    let gen = mqlv(&[
        "generate",
        "--kappa",
        "0.5444",
        "--b",
        "0.9001",
        "--sigma",
        "0.2185",
        "--s0",
        "0.9001",
        "--maturity",
        "199",
        "--steps",
        "199",
        "--paths",
        "1",
        "--format",
        "series",
        "--out",
        s,
    ]);
    assert!(gen.status.success());
    let regen = dir.path().join("regen.csv");
    let out = mqlv(&[
        "calibrate",
        "--series",
        s,
        "--dt",
        "1",
        "--out",
        regen.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("rmse"));
    assert_eq!(std::fs::read_to_string(&regen).unwrap().lines().count(), 201);

    let flat = dir.path().join("flat.csv");
    let body: String = (0..50).map(|i| format!("{i},0.9\n")).collect();
    std::fs::write(&flat, format!("time,value\n{body}")).unwrap();
    let out = mqlv(&["calibrate", "--series", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration"));
}

#[test]
fn compare_with_shipped_config_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("table2.cfg");
    let runs: Vec<String> = ["a", "b"]
        .iter()
        .map(|name| {
            let out_dir = dir.path().join(name);
            let out = mqlv(&[
                "compare",
                "--config",
                config.to_str().unwrap(),
                "--output-dir",
                out_dir.to_str().unwrap(),
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            assert!(out_dir.join("report.txt").exists());
            std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let published = [
        77.098, 57.920, 50.235, 42.865, 76.953, 57.760, 50.043, 42.744, 77.047, 57.491, 49.924, 42.713,
    ];
    let rows: Vec<&str> = runs[0].lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    for (row, expected) in rows.iter().zip(published) {
        let mqlv: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!((mqlv - expected).abs() <= 1.0, "{row}");
    }
}

#[test]
fn curve_requires_single_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = mqlv(&[
        "curve",
        "--config",
        configs().join("table2.cfg").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = mqlv(&[
        "curve",
        "--config",
        configs().join("figure2.cfg").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    assert!(csv.starts_with("strike,mqlv,bsm\n"));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[grid]\npathz = 100\n").unwrap();
    assert_eq!(
        mqlv(&["compare", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(
        mqlv(&["compare", "--config", "/nonexistent/x.cfg"]).status.code(),
        Some(3)
    );
}
