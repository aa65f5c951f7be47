use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_threshold-dirac"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.ini");
    std::fs::write(
        &p,
        "[grid]\nn = 9\nL = 1.0\n[potential]\nshape = well\nR = 0.7\nw = 0.2\ng = 3.0\nbracket = 0.5, 40\n\
         [sweep]\nmu = 0\nk = 0.1, 0.2\n",
    )
    .unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn kernel_check_table_is_accurate_and_reproducible() {
    let a = run(&["kernel-check", "--points", "20"]);
    let b = run(&["kernel-check", "--points", "20"]);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,x,order,rel_err"));
    let errs: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 60);
    assert!(errs.iter().all(|e| *e <= 1e-6));
}

#[test]
fn solve_writes_field_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let field = dir.path().join("phi.csv");
    let f = field.to_string_lossy().into_owned();
    let a = run(&["solve", "--config", &cfg, "--j", "2", "--kz", "0.2", "--out", &f]);
    let first = std::fs::read(&field).unwrap();
    let b = run(&["solve", "--config", &cfg, "--j", "2", "--kz", "0.2", "--out", &f]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, std::fs::read(&field).unwrap());
    let meta = std::fs::read_to_string(dir.path().join("phi.csv.meta")).unwrap();
    assert!(meta.starts_with("L=") && meta.contains("\nn=19\n") && meta.contains("shape=spherical-well"));
    let header = String::from_utf8(first).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "ix,iy,iz,x,y,z,re0,im0,re1,im1,re2,im2,re3,im3");
}

#[test]
fn sweep_writes_records_and_dat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let o = out.to_string_lossy().into_owned();
    run(&["sweep", "--config", &cfg, "--out", &o]);
    let csv = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(csv.starts_with("mu,k,j,sup_norm,n_part_norm,n_part_l2,residual_part,predicted_bound,at_resonance"));
    assert_eq!(csv.lines().count(), 3);
    let dat = std::fs::read_to_string(out.join("records.dat")).unwrap();
    assert!(dat.starts_with("# mu k j"));
    assert!(std::fs::read_to_string(out.join("records.meta"))
        .unwrap()
        .contains("fitted_c="));
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.ini");
    std::fs::write(&p, "[grid]\nn = 10\n").unwrap();
    let out = bin().args(["solve", "--config", p.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.n"));
    let out = bin()
        .args(["solve", "--config", "/nonexistent/x.ini"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args([
            "find-critical",
            "--bracket",
            "0.1,0.2",
            "--config",
            &small_config(dir.path()),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no critical coupling"));
}

#[test]
fn help_lists_every_subcommand() {
    let text = String::from_utf8(run(&["--help"]).stdout).unwrap();
    for sub in [
        "kernel-check",
        "solve",
        "find-critical",
        "classify",
        "forms",
        "sweep",
        "boundstates",
        "derivatives",
        "inverse-probe",
        "oracle-compare",
    ] {
        assert!(text.contains(sub), "{sub}");
    }
}
