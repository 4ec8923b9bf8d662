use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpeps::dense;
use gpeps::statefile::StateFile;
use gpeps::symmetry::{charge_residual, rotation_residual, PhysicalRotation};
use tempfile::TempDir;

fn gpeps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpeps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    gpeps(&args)
}

/// Data rows of a versioned CSV, split into cells.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# gpeps "));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            let mut cells = Vec::new();
            let mut cur = String::new();
            let mut quoted = false;
            for ch in l.chars() {
                match ch {
                    '"' => quoted = !quoted,
                    ',' if !quoted => cells.push(std::mem::take(&mut cur)),
                    c => cur.push(c),
                }
            }
            cells.push(cur);
            cells
        })
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

const D2: &str = r#"
seed = 1
[geometry]
dim = 2
extent = [4, 4]
[model]
kind = "staggered_d2"
m = 1.0
[family]
kind = "symmetric_d2"
n_c = 2
n_d = 1
[verify]
instances = 10
"#;

const D3: &str = r#"
seed = 2
[geometry]
dim = 3
extent = [4, 4, 4]
[model]
kind = "staggered_d3"
m = 1.0
[family]
kind = "symmetric_d3_staggered"
[verify]
instances = 10
"#;

fn converge_config(extent: &str, beta: f64, steps: &str) -> String {
    format!(
        r#"
[geometry]
dim = 2
extent = {extent}
[model]
kind = "staggered_d2"
m = 1.0
[family]
kind = "exact_construction"
beta = {beta}
steps = {steps}
eps_margin = 1.0
"#
    )
}

#[test]
fn verify_d2_passes_with_circulant_space() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "d2.toml", D2);
    let o = run("verify", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("tau_space_dim=4 pass"));
    assert!(s.contains("four_rotation_d2=true pass"));
    assert!(tmp.path().join("verify.csv").exists());
}

#[test]
fn verify_d3_reports_cube_space() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "d3.toml", D3);
    let o = run("verify", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("tau_space_dim=3 pass"));
}

#[test]
fn verify_with_real_eta_reports_empty_no_go_space() {
    let tmp = TempDir::new().unwrap();
    let body = D3.replace("[verify]", "[verify]\neta = [1.0, 0.0]");
    let cfg = write_config(tmp.path(), "eta.toml", &body);
    let o = run("verify", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no_go_dim=0 pass"));
}

#[test]
fn failed_check_names_metric_and_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "d2.toml", D2);
    let o = run("verify", &cfg, tmp.path(), &["--tol", "pfaffian=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pfaffian_rel_error"));
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &D2.replace("staggered_d2", "staggered_d3"));
    assert_eq!(run("verify", &bad, tmp.path(), &[]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "d2.toml", D2);
    assert_eq!(run("converge", &cfg, tmp.path(), &[]).status.code(), Some(2));
    assert_eq!(run("verify", &cfg, tmp.path(), &["--tol", "bogus=1"]).status.code(), Some(2));
    assert_eq!(gpeps(&["rotate-check", "/nonexistent/state.gps"]).status.code(), Some(2));
}

#[test]
fn converge_is_deterministic_and_marks_single_step() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &converge_config("[2, 4]", 0.9, "[1, 4, 16]"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run("converge", &cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run("converge", &cfg, &b, &["--workers", "1"]).status.code(), Some(0));
    let ta = std::fs::read(a.join("converge.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("converge.csv")).unwrap());

    let (h, rows) = csv_rows(&a.join("converge.csv"));
    assert_eq!(rows.len(), 3);
    let first = &rows[0];
    assert_eq!(first[column(&h, "n")], "1");
    assert_eq!(first[column(&h, "n_d")], "0");
    assert_eq!(first[column(&h, "marker")], "n_d=0");
    for r in &rows {
        let f: f64 = r[column(&h, "fidelity_trotter")].parse().unwrap();
        assert!(f > 1.0 - 1e-8 && f <= 1.0 + 1e-9);
        let g: f64 = r[column(&h, "fidelity_exact")].parse().unwrap();
        assert!((0.0..=1.0 + 1e-9).contains(&g));
    }
}

#[test]
fn converge_skips_rows_with_large_steps() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &converge_config("[2, 2]", 4.0, "[2, 64]"));
    let o = run("converge", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv_rows(&tmp.path().join("converge.csv"));
    assert_eq!(rows[0][column(&h, "status")], "skipped");
    assert!(rows[0][column(&h, "reason")].contains("time step"));
    assert_eq!(rows[1][column(&h, "status")], "ok");
    let f: f64 = rows[1][column(&h, "fidelity_trotter")].parse().unwrap();
    assert!(f > 1.0 - 1e-8);
}

#[test]
fn converge_4x4_fidelity_rises_with_steps() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &converge_config("[4, 4]", 6.0, "[8, 16, 32, 64]"));
    let o = run("converge", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("monotone=true"));
    let (h, rows) = csv_rows(&tmp.path().join("converge.csv"));
    assert_eq!(rows.len(), 4);
    let f: Vec<f64> = rows.iter().map(|r| r[column(&h, "fidelity_exact")].parse().unwrap()).collect();
    assert!(f.windows(2).all(|w| w[1] >= w[0]), "{f:?}");
    assert!(rows.iter().all(|r| r[column(&h, "fidelity_trotter")].is_empty()));
}

#[test]
fn build_vacuum_writes_zero_pairing() {
    let tmp = TempDir::new().unwrap();
    let body = D2.replace("kind = \"symmetric_d2\"", "kind = \"vacuum\"");
    let cfg = write_config(tmp.path(), "v.toml", &body);
    assert_eq!(run("build", &cfg, tmp.path(), &[]).status.code(), Some(0));
    let f = StateFile::load(&tmp.path().join("state.gps")).unwrap();
    assert_eq!(f.state.len(), 16);
    assert_eq!(dense::max_abs(f.state.matrix()), 0.0);
}

#[test]
fn build_symmetric_d2_reloads_invariant() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "d2.toml", &D2.replace("[verify]", "[output]\nbinary = true\ncovariance = true\n[verify]"));
    let o = run("build", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = tmp.path().join("state.gpsb");
    let f = StateFile::load(&path).unwrap();
    assert!(f.covariance.is_some());
    assert!(dense::max_abs(f.state.matrix()) > 1e-6);
    let rot = PhysicalRotation::d2(&f.layout.geometry).unwrap();
    assert!(rotation_residual(&f.state, &f.layout, &rot).unwrap() < 1e-10);
    let check = gpeps(&["rotate-check", path.to_str().unwrap()]);
    assert_eq!(check.status.code(), Some(0));
    assert!(stdout(&check).contains("rotation_residual_planar"));
}

#[test]
fn build_exact_construction_reloads_charge_free() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &converge_config("[2, 4]", 2.0, "[8]"));
    assert_eq!(run("build", &cfg, tmp.path(), &[]).status.code(), Some(0));
    let f = StateFile::load(&tmp.path().join("state_n8.gps")).unwrap();
    assert!(dense::max_abs(f.state.matrix()) > 1e-6);
    assert!(charge_residual(&f.state, &f.layout) < 1e-12);
}

#[test]
fn spectrum_lists_all_bdg_eigenvalues() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "d2.toml", D2);
    let o = run("spectrum", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let (h, rows) = csv_rows(&tmp.path().join("spectrum.csv"));
    assert_eq!(rows.len(), 32);
    let e: Vec<f64> = rows.iter().map(|r| r[column(&h, "energy")].parse().unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] >= w[0]));
    assert!((e[0] + e[31]).abs() < 1e-12);
}
