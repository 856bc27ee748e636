//! End-to-end runs of the `tsdyn` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn tsdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsdyn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tsdyn(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn dir(tmp: &TempDir, name: &str) -> String {
    tmp.path().join(name).to_str().unwrap().to_string()
}

fn write(tmp: &TempDir, name: &str, body: &str) -> String {
    let p = tmp.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

/// The number after `key` on the first summary line containing it.
fn value(summary: &str, key: &str) -> f64 {
    let line = summary.lines().find(|l| l.contains(key)).unwrap_or_else(|| panic!("no `{key}` in\n{summary}"));
    let rest = &line[line.find(key).unwrap() + key.len()..];
    rest.split_whitespace().next().unwrap().trim_end_matches([',', ')']).parse().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn csv_header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().map(String::from).collect()
}

const SIX_Z: &str = "scale = \"\"\"\ntail periodic 6\npattern point 0\n\"\"\"\n";
const HALF_LINE: &str = "scale = \"interval 0 1\\ntail halfline\\n\"\n";
const UNIT_GAPS: &str = "scale = \"tail periodic 2\\npattern interval 0 1\\n\"\n";

#[test]
fn scale_of_example46_has_gap_six_and_is_syndetic() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&["scale", "--preset", "example46", "--p", "1", "--q", "3", "--out", &dir(&tmp, "o")]);
    assert!(s.contains("attained gaps: 6\n"), "{s}");
    assert!(s.contains("syndetic: yes"), "{s}");
    let path = tmp.path().join("o/scale.csv");
    assert_eq!(csv_header(&path), ["index", "kind", "start", "end", "gap_after"]);
    let rows = csv_rows(&path);
    assert_eq!(rows[0][1], "interval");
    assert!(rows.iter().filter(|r| r[1] == "point").all(|r| r[4].parse::<f64>().unwrap() == 6.0));
}

#[test]
fn scale_of_integers_is_recognized() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&["scale", "--preset", "integers", "--horizon", "10", "--out", &dir(&tmp, "o")]);
    assert!(s.contains("identified as: ℤ"), "{s}");
    let rows = csv_rows(&tmp.path().join("o/scale.csv"));
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().enumerate().all(|(k, r)| r[1] == "point" && r[2].parse::<f64>().unwrap() == k as f64));
}

#[test]
fn malformed_inputs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let bad = write(&tmp, "bad.txt", "point 0\ntail sideways\n");
    let out = tsdyn(&["scale", "--scale-file", &bad, "--out", &dir(&tmp, "o")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("column 6"), "{err}");

    let cfg = write(&tmp, "bad.toml", "horizon = \"long\"\n");
    assert_eq!(tsdyn(&["scale", "--config", &cfg]).status.code(), Some(2));
    let cfg = write(&tmp, "typo.toml", "preset = \"integers\"\nhorizn = 3\n");
    assert_eq!(tsdyn(&["scale", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(tsdyn(&["scale", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(tsdyn(&["scale", "--preset", "integers", "--horizon", "-1"]).status.code(), Some(2));
    assert_eq!(tsdyn(&["scale", "--unknown-flag"]).status.code(), Some(2));
    assert_eq!(tsdyn(&["exponents", "--preset", "integers", "--T-sweep", "3:1"]).status.code(), Some(2));
    let missing = dir(&tmp, "missing.txt");
    assert_eq!(tsdyn(&["scale", "--scale-file", &missing]).status.code(), Some(2));
}

#[test]
fn exponents_of_example46() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&["exponents", "--preset", "example46", "--out", &dir(&tmp, "o")]);
    assert!((value(&s, "nu_1 = ") + 0.400).abs() < 5e-3, "{s}");
    assert!((value(&s, "nu_2 = ") + 0.090).abs() < 5e-3, "{s}");
    assert!(value(&s, "chi_est = ") > 0.0, "{s}");
    let path = tmp.path().join("o/exponents.csv");
    assert_eq!(csv_header(&path), ["kind", "index_or_T", "t", "running_average"]);
    let kinds: std::collections::BTreeSet<String> = csv_rows(&path).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(kinds.into_iter().collect::<Vec<_>>(), ["chi", "chi_estimate", "nu", "nu_estimate"]);
}

#[test]
fn exponents_on_six_z_match_the_logarithms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "c.toml", &format!("{SIX_Z}matrix = [[-2.0, 0.0], [0.0, -0.5]]\n"));
    let s = ok(&["exponents", "--config", &cfg, "--horizon", "600", "--out", &dir(&tmp, "o")]);
    // |1 + 6λ| per step of length 6.
    assert!((value(&s, "nu_1 = ") - 11f64.ln() / 6.0).abs() < 1e-5, "{s}");
    assert!((value(&s, "nu_2 = ") - 2f64.ln() / 6.0).abs() < 1e-5, "{s}");
}

#[test]
fn exponents_on_the_half_line_with_a_sweep() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "c.toml", &format!("{HALF_LINE}matrix = [[-1.0]]\n"));
    let s = ok(&["exponents", "--config", &cfg, "--horizon", "200", "--T-sweep", "2:6:2", "--out", &dir(&tmp, "o")]);
    assert!((value(&s, "nu_1 = ") + 1.0).abs() < 1e-6, "{s}");
    for t in ["2", "4", "6"] {
        assert!((value(&s, &format!("chi_est(T = {t}) = ")) + 1.0).abs() < 1e-6, "{s}");
    }
}

#[test]
fn classify_stable_and_unstable_scalars_on_unit_gaps() {
    let tmp = TempDir::new().unwrap();
    let stable = write(&tmp, "s.toml", &format!("{UNIT_GAPS}matrix = [[-1.0]]\n"));
    let s = ok(&["classify", "--config", &stable, "--out", &dir(&tmp, "s")]);
    assert!(s.contains("strongly stable: yes") && s.contains("strongly unstable: no"), "{s}");
    assert!(s.contains("Lyapunov certificate: passes"), "{s}");
    let report = fs::read_to_string(tmp.path().join("s/certificate.txt")).unwrap();
    assert!(report.contains("passed: true"));
    let objects: Vec<String> = csv_rows(&tmp.path().join("s/certificate.csv")).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(objects, ["transform", "transform_inverse", "form", "form_x"]);

    let unstable = write(&tmp, "u.toml", &format!("{UNIT_GAPS}matrix = [[1.0]]\n"));
    let s = ok(&["classify", "--config", &unstable, "--out", &dir(&tmp, "u")]);
    assert!(s.contains("strongly stable: no") && s.contains("strongly unstable: yes"), "{s}");
    assert!(s.contains("Chetaev certificate: passes"), "{s}");
}

#[test]
fn classify_example46_is_neither_and_warns() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&["classify", "--preset", "example46", "--out", &dir(&tmp, "o")]);
    assert!(s.contains("strongly stable: no") && s.contains("strongly unstable: no"), "{s}");
    assert!(s.contains("empirical: bounded"), "{s}");
    assert!(s.contains("perturbations may make them grow"), "{s}");
    assert!(!tmp.path().join("o/certificate.csv").exists());
}

#[test]
fn destabilize_example46_records_an_escape() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&["destabilize", "--preset", "example46", "--delta", "0.2", "--out", &dir(&tmp, "o")]);
    assert!(s.contains("perturbed escape: t = "), "{s}");
    let o = tmp.path().join("o");
    for f in ["schedule.csv", "bdelta.csv", "perturbed.csv", "unperturbed.csv", "report.txt"] {
        assert!(o.join(f).exists(), "{f}");
    }
    let sup = csv_rows(&o.join("bdelta.csv")).iter().map(|r| r[1].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(sup > 0.0 && sup <= 0.2);
}

#[test]
fn destabilize_perron_reaches_the_target_exponent() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&["destabilize", "--preset", "perron-switched", "--eps", "0.5", "--delta", "0.3", "--out", &dir(&tmp, "o")]);
    assert!(value(&s, "y0 exponent = ") >= 0.5, "{s}");
    let budget = value(&s, "(budget ");
    let sup = csv_rows(&tmp.path().join("o/bhat.csv")).iter().map(|r| r[1].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(sup <= budget, "{sup} > {budget}");
}

#[test]
fn destabilize_strongly_stable_is_not_applicable() {
    let tmp = TempDir::new().unwrap();
    let out = tsdyn(&["destabilize", "--preset", "strongly-stable-demo", "--out", &dir(&tmp, "o")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not applicable"));
}

#[test]
fn rotation_mode_needs_the_half_line() {
    let out = tsdyn(&["destabilize", "--preset", "example46", "--mode", "rotation", "--out", "/dev/null/x"]);
    // The output directory cannot be created, so the I/O failure comes first.
    assert_eq!(out.status.code(), Some(1));
    let tmp = TempDir::new().unwrap();
    let out = tsdyn(&["destabilize", "--preset", "example46", "--mode", "rotation", "--out", &dir(&tmp, "o")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_quadratic_decays_from_a_small_state() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&[
        "simulate", "--preset", "strongly-stable-demo", "--nonlinearity", "quadratic", "--x0", "0.1,-0.05", "--out", &dir(&tmp, "o"),
    ]);
    assert!(s.contains("status: decay"), "{s}");
    let path = tmp.path().join("o/trajectory.csv");
    assert_eq!(csv_header(&path), ["t", "norm", "x1_re", "x1_im", "x2_re", "x2_im"]);
}

#[test]
fn simulate_tube_escapes_at_the_first_crossing() {
    let tmp = TempDir::new().unwrap();
    let s = ok(&["simulate", "--preset", "example46", "--nonlinearity", "tube", "--out", &dir(&tmp, "o")]);
    assert!(s.contains("status: escape"), "{s}");
    assert_eq!(value(&s, "at t = "), value(&s, "T1 = "), "{s}");
}

#[test]
fn simulate_from_zero_stays_at_zero() {
    let tmp = TempDir::new().unwrap();
    for nl in ["none", "quadratic"] {
        let d = dir(&tmp, nl);
        let s = ok(&["simulate", "--preset", "strongly-unstable-demo", "--nonlinearity", nl, "--x0", "0,0", "--out", &d]);
        assert!(s.contains("status: zero trajectory\n"), "{s}");
        let rows = csv_rows(&Path::new(&d).join("trajectory.csv"));
        assert!(rows.len() > 10 && rows.iter().all(|r| r[1..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0)));
    }
}

#[test]
fn floats_have_seventeen_significant_digits() {
    let tmp = TempDir::new().unwrap();
    ok(&["exponents", "--preset", "example46", "--horizon", "200", "--out", &dir(&tmp, "o")]);
    for row in csv_rows(&tmp.path().join("o/exponents.csv")) {
        for field in &row[2..] {
            let (mantissa, _) = field.split_once('e').unwrap();
            let digits = mantissa.trim_start_matches('-').replace('.', "");
            assert_eq!(digits.len(), 17, "{field}");
        }
    }
}

fn files(d: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(d)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "config.toml")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (dir(&tmp, "a"), dir(&tmp, "b"));
    for d in [&a, &b] {
        ok(&["destabilize", "--preset", "example46", "--horizon", "1500", "--seed", "7", "--out", d]);
    }
    assert_eq!(files(Path::new(&a)), files(Path::new(&b)));
}

#[test]
fn saved_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let first = dir(&tmp, "first");
    ok(&["exponents", "--preset", "example46", "--horizon", "500", "--T-sweep", "6:18:6", "--out", &first]);
    let saved: PathBuf = Path::new(&first).join("config.toml");
    let second = dir(&tmp, "second");
    ok(&["run", "--config", saved.to_str().unwrap(), "--out", &second]);
    assert_eq!(files(Path::new(&first)), files(Path::new(&second)));
}

#[test]
fn run_needs_an_analysis_and_flags_override_the_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "c.toml", "preset = \"integers\"\nhorizon = 5\n");
    assert_eq!(tsdyn(&["run", "--config", &cfg]).status.code(), Some(2));
    let cfg = write(&tmp, "d.toml", "analysis = \"scale\"\npreset = \"integers\"\nhorizon = 5\n");
    let s = ok(&["run", "--config", &cfg, "--horizon", "3", "--out", &dir(&tmp, "o")]);
    assert!(s.contains("components in [0, 3]: 4"), "{s}");
}

#[test]
fn scale_file_paths_are_relative_to_the_config() {
    let tmp = TempDir::new().unwrap();
    write(&tmp, "six.txt", "tail periodic 6\npattern point 0\n");
    let cfg = write(&tmp, "c.toml", "scale-file = \"six.txt\"\n");
    let s = ok(&["scale", "--config", &cfg, "--out", &dir(&tmp, "o")]);
    assert!(s.contains("identified as: 6ℤ"), "{s}");
}

#[test]
fn piecewise_and_complex_coefficients() {
    let tmp = TempDir::new().unwrap();
    let body = format!(
        "{HALF_LINE}[[piecewise]]\nfrom = 0.0\nmatrix = [[-1.0]]\n\n[[piecewise]]\nfrom = 100.0\nmatrix = [[-3.0]]\n"
    );
    let cfg = write(&tmp, "p.toml", &body);
    let s = ok(&["exponents", "--config", &cfg, "--horizon", "200", "--T-sweep", "4:4:1", "--out", &dir(&tmp, "p")]);
    // Trajectory average (−100 − 300)/200 = −2 at the horizon.
    assert!(s.contains("trajectory from e_k"), "{s}");
    let rows = csv_rows(&tmp.path().join("p/exponents.csv"));
    let last = rows.iter().rfind(|r| r[0] == "trajectory").unwrap();
    assert!((last[3].parse::<f64>().unwrap() + 2.0).abs() < 1e-6, "{last:?}");

    // A rotation generator: |x| is conserved, so the exponent is the real part.
    let body = format!("{HALF_LINE}matrix = [[-0.5, 0.0], [0.0, -0.5]]\nmatrix-imag = [[0.0, 1.0], [1.0, 0.0]]\n");
    let cfg = write(&tmp, "c.toml", &body);
    let s = ok(&["exponents", "--config", &cfg, "--horizon", "100", "--out", &dir(&tmp, "c")]);
    assert!((value(&s, "nu_1 = ") + 0.5).abs() < 1e-6 && (value(&s, "nu_2 = ") + 0.5).abs() < 1e-6, "{s}");
}
