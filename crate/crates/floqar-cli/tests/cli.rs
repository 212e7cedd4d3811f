//! End-to-end runs of the built binary: fixture generation, solves on the
//! generated systems, table determinism, and the error exit categories.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_floqar")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "floqar {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn new(tag: &str) -> Self {
        let root = std::env::temp_dir().join(format!("floqar-cli-{tag}-{}", std::process::id()));
        if root.exists() {
            std::fs::remove_dir_all(&root).unwrap();
        }
        std::fs::create_dir_all(&root).unwrap();
        Workspace { root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn arg(&self, rel: &str) -> String {
        self.path(rel).display().to_string()
    }
}

fn generate(ws: &Workspace) {
    run_ok(&["gen", "--out", &ws.arg("fixtures")]);
}

/// Parses the eigenvalue table into (re, im, exponent, magnitude, tag) rows.
fn read_eigenvalues(path: &Path) -> Vec<(f64, f64, i64, f64, String)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            (
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                f[3].parse().unwrap(),
                f[4].parse().unwrap(),
                f[5].to_string(),
            )
        })
        .collect()
}

#[test]
fn zero_system_multipliers_are_exactly_one() {
    let ws = Workspace::new("zero");
    generate(&ws);
    run_ok(&[
        "solve",
        "--manifest",
        &ws.arg("fixtures/zero/system.json"),
        "--scheme",
        "be",
        "--k",
        "3",
        "--out",
        &ws.arg("out"),
    ]);
    let rows = read_eigenvalues(&ws.path("out/eigenvalues.csv"));
    assert_eq!(rows.len(), 3);
    for (re, im, exp, mag, tag) in rows {
        assert_eq!(re, 1.0);
        assert_eq!(im, 0.0);
        assert_eq!(exp, 0);
        assert_eq!(mag, 1.0);
        assert_eq!(tag, "physical");
    }
    assert!(ws.path("out/eigenvector_002.csv").exists());
    assert!(ws.path("out/gap.csv").exists());
}

#[test]
fn toy_system_dominant_multiplier_matches_the_flow() {
    let ws = Workspace::new("toy");
    generate(&ws);
    run_ok(&[
        "solve",
        "--manifest",
        &ws.arg("fixtures/toy/system.json"),
        "--scheme",
        "gear2",
        "--k",
        "2",
        "--out",
        &ws.arg("out"),
    ]);
    let rows = read_eigenvalues(&ws.path("out/eigenvalues.csv"));
    // alpha = beta = 0.1 over one turn: both multipliers equal e^{0.2 pi}
    let want = (0.2 * std::f64::consts::PI).exp();
    let got = rows[0].3;
    assert!(
        (got - want).abs() <= 1e-4 * want,
        "dominant multiplier {got} vs {want}"
    );
}

#[test]
fn repeated_runs_write_byte_identical_tables() {
    let ws = Workspace::new("determinism");
    generate(&ws);
    let args = |out: &str| {
        [
            "solve".to_string(),
            "--manifest".into(),
            ws.arg("fixtures/zero/system.json"),
            "--k".into(),
            "2".into(),
            "--out".into(),
            ws.arg(out),
        ]
    };
    let first: Vec<String> = args("out-a").to_vec();
    let second: Vec<String> = args("out-b").to_vec();
    run_ok(&first.iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&second.iter().map(String::as_str).collect::<Vec<_>>());
    for name in ["eigenvalues.csv", "gap.csv", "eigenvector_000.csv"] {
        let a = std::fs::read(ws.path("out-a").join(name)).unwrap();
        let b = std::fs::read(ws.path("out-b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn dae_and_core_solves_agree() {
    let ws = Workspace::new("dae");
    generate(&ws);
    run_ok(&[
        "dae",
        "--manifest",
        &ws.arg("fixtures/dae/augmented.json"),
        "--k",
        "4",
        "--out",
        &ws.arg("out-dae"),
    ]);
    run_ok(&[
        "solve",
        "--manifest",
        &ws.arg("fixtures/dae-core/core.json"),
        "--k",
        "4",
        "--out",
        &ws.arg("out-core"),
    ]);
    let dae = read_eigenvalues(&ws.path("out-dae/eigenvalues.csv"));
    let core = read_eigenvalues(&ws.path("out-core/eigenvalues.csv"));
    assert_eq!(dae.len(), 4);
    assert_eq!(core.len(), 4);
    // conjugate pairs may order differently; match greedily by magnitude
    // and angle
    let mut used = [false; 4];
    for (re, im, exp, _, _) in &dae {
        let mut best = usize::MAX;
        let mut best_err = f64::INFINITY;
        for (j, (cre, cim, cexp, _, _)) in core.iter().enumerate() {
            if used[j] || exp != cexp {
                continue;
            }
            let err = ((re - cre).powi(2) + (im - cim).powi(2)).sqrt();
            if err < best_err {
                best_err = err;
                best = j;
            }
        }
        assert!(best < 4, "no matching core multiplier");
        used[best] = true;
        assert!(best_err <= 1e-8, "multiplier mismatch {best_err}");
    }
}

#[test]
fn spurious_prediction_matches_the_uniform_closed_form() {
    let ws = Workspace::new("spurious");
    let stdout = run_ok(&["spurious", "--scheme", "gear2", "--out", &ws.arg("out")]);
    assert!(stdout.contains("parasitic family 1"));
    let text = std::fs::read_to_string(ws.path("out/spurious.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let predicted: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    // uniform gear2 parasitic root is 1/3, so the decade over p = 64 steps
    let want = 64.0 * (1.0f64 / 3.0).log10();
    assert!((predicted - want).abs() < 1e-9, "{predicted} vs {want}");
}

#[test]
fn error_paths_exit_with_their_category_and_leave_no_output() {
    let ws = Workspace::new("errors");
    generate(&ws);

    // 5: bad flag value
    let out = run(&["solve", "--scheme", "rk9"]);
    assert_eq!(out.status.code(), Some(5));

    // 2: config schema violation
    let config = ws.path("bad.json");
    std::fs::write(&config, r#"{"command": "solve", "mystery": 1}"#).unwrap();
    let out = run(&["solve", "--config", &ws.arg("bad.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[config]"));

    // 2: config written for a different subcommand
    std::fs::write(&config, r#"{"command": "dae"}"#).unwrap();
    let out = run(&["solve", "--config", &ws.arg("bad.json")]);
    assert_eq!(out.status.code(), Some(2));

    // 2: missing manifest flag
    let out = run(&["solve", "--out", &ws.arg("nope")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!ws.path("nope").exists());

    // 3: manifest file that does not exist
    let out = run(&[
        "solve",
        "--manifest",
        &ws.arg("missing.json"),
        "--out",
        &ws.arg("nope"),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[io]"));
    assert!(!ws.path("nope").exists());

    // 3: manifest referencing a missing matrix file, still no partial output
    std::fs::remove_file(ws.path("fixtures/zero/g_0003.mtx")).unwrap();
    let out = run(&[
        "solve",
        "--manifest",
        &ws.arg("fixtures/zero/system.json"),
        "--out",
        &ws.arg("nope"),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!ws.path("nope").exists());
}

#[test]
fn convergence_study_reports_the_scheme_orders() {
    let ws = Workspace::new("study");
    run_ok(&["convergence", "--out", &ws.arg("out")]);
    let slopes = std::fs::read_to_string(ws.path("out/slopes.csv")).unwrap();
    let mut by_scheme = std::collections::HashMap::new();
    for line in slopes.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        by_scheme.insert(f[0].to_string(), f[1].parse::<f64>().unwrap());
    }
    assert!((by_scheme["be"] - 1.0).abs() <= 0.2, "be {}", by_scheme["be"]);
    assert!(
        (by_scheme["gear2"] - 2.0).abs() <= 0.2,
        "gear2 {}",
        by_scheme["gear2"]
    );
    assert!(
        (by_scheme["gear3"] - 3.0).abs() <= 0.2,
        "gear3 {}",
        by_scheme["gear3"]
    );
    assert!(ws.path("out/convergence.csv").exists());
    assert!(ws.path("out/spurious_decay.csv").exists());
    assert!(ws.path("out/study.json").exists());
}
