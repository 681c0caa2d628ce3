use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> String {
    root().join("configs").join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cipherobs")).args(args).output().expect("spawn cipherobs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cipherobs-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn columns(csv: &str, n: usize) -> Vec<String> {
    csv.lines().map(|l| l.split(',').take(n).collect::<Vec<_>>().join(",")).collect()
}

#[test]
fn design_reports_benchmark_structure() {
    let o = run(&["design", "--config", &config("three_inertia.json")]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for needle in [
        "n = 6, m = 1, p = 5, k = 2",
        "l = 24, l_max = 6",
        "|P| = 10, n_r = 60",
        "|G_bar|_inf = 262173",
        "max relative degree = 1",
        "all parameter checks: FAIL",
    ] {
        assert!(s.contains(needle), "missing {needle:?} in\n{s}");
    }
    let s48 = stdout(&run(&["design", "--config", &config("three_inertia_l48.json")]));
    assert!(s48.contains("all parameter checks: PASS"), "{s48}");
}

#[test]
fn quantized_csv_is_byte_identical_across_runs() {
    let dir = scratch("det");
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    for p in [&a, &b] {
        let o = run(&["simulate", "--config", &config("three_inertia.json"), "--mode", "quantized", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(text.lines().next(), Some("step,time_s,residue_norm,threshold,detected,est_error_norm,mode"));
    assert_eq!(text.lines().count(), 51);
    let first = text.lines().skip(1).find(|l| l.split(',').nth(4) == Some("true")).unwrap();
    assert!(first.starts_with("26,"), "{first}");
}

#[test]
fn encrypted_csv_matches_quantized_on_shared_columns() {
    let cfg = config("three_inertia_l48.json");
    let q = run(&["simulate", "--config", &cfg, "--mode", "quantized", "--steps", "30"]);
    let e1 = run(&["simulate", "--config", &cfg, "--mode", "encrypted", "--steps", "30", "--seed", "11"]);
    let e2 = run(&["simulate", "--config", &cfg, "--mode", "encrypted", "--steps", "30", "--seed", "11"]);
    assert_eq!(e1.status.code(), Some(0), "{}", String::from_utf8_lossy(&e1.stderr));
    assert_eq!(e1.stdout, e2.stdout);
    let (qs, es) = (stdout(&q), stdout(&e1));
    assert_eq!(columns(&qs, 6), columns(&es, 6));
    assert!(es.lines().nth(1).unwrap().ends_with(",encrypted"));
}

#[test]
fn encrypted_mode_needs_passing_bounds_or_force() {
    let o = run(&[
        "simulate",
        "--config",
        &config("three_inertia.json"),
        "--mode",
        "encrypted",
        "--steps",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("L > error-budget bound"));
    let forced = run(&[
        "simulate",
        "--config",
        &config("three_inertia.json"),
        "--mode",
        "encrypted",
        "--steps",
        "3",
        "--force",
    ]);
    assert_eq!(forced.status.code(), Some(0));
    assert_eq!(stdout(&forced).lines().count(), 4);
}

#[test]
fn bad_inputs_exit_with_config_error() {
    let missing = run(&["design", "--config", "/nonexistent/config.json"]);
    assert_eq!(missing.status.code(), Some(2));

    // k = 3 leaves no subsets of size p - 2k
    let dir = scratch("bad");
    let text = std::fs::read_to_string(root().join("scenarios/three_inertia.json")).unwrap();
    std::fs::write(dir.join("scenario.json"), text.replace("\"k\": 2", "\"k\": 3")).unwrap();
    let cfg = std::fs::read_to_string(config("three_inertia.json"))
        .unwrap()
        .replace("../scenarios/three_inertia.json", "scenario.json");
    std::fs::write(dir.join("config.json"), cfg).unwrap();
    let o = run(&["design", "--config", dir.join("config.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_sensor_plant_has_vanishing_residue() {
    let cfg = config("toy.json");
    let o = run(&["design", "--config", &cfg]);
    assert!(stdout(&o).contains("|P| = 1, n_r = 2"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("relative degree undefined"));

    let r = run(&["simulate", "--config", &cfg, "--mode", "reference"]);
    assert_eq!(r.status.code(), Some(0));
    let s = stdout(&r);
    assert!(s.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0.000000000e0")));
    assert!(s.lines().skip(1).all(|l| l.split(',').nth(4) == Some("false")));
}

#[test]
fn verify_passes_and_mutation_is_caught() {
    let cfg = config("three_inertia.json");
    let ok = run(&["verify", "--config", &cfg, "--steps", "30"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert_eq!(stdout(&ok).matches("PASS").count(), 6);

    let bad = run(&["verify", "--config", &cfg, "--steps", "30", "--mutate", "corrupt-gbar"]);
    assert_eq!(bad.status.code(), Some(1));
    let s = stdout(&bad);
    let line = s.lines().find(|l| l.starts_with("output-zeroing")).unwrap();
    assert!(line.contains("FAIL"), "{line}");
}

#[test]
fn bench_prints_one_row_per_size() {
    let o = run(&["bench", "--config", &config("three_inertia.json"), "--sizes", "8,16", "--steps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let rows: Vec<&str> = s.lines().skip(1).collect();
    assert!(rows.iter().any(|r| r.trim_start().starts_with("8 ")));
    assert!(rows.iter().any(|r| r.trim_start().starts_with("16 ")));
}
