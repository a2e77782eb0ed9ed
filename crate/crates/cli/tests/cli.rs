use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nmqbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmqbm")).args(args).output().expect("binary runs")
}

fn default_config() -> String {
    String::from_utf8(nmqbm(&["default-config"]).stdout).unwrap()
}

fn write_config(dir: &Path, edit: impl Fn(String) -> String) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, edit(default_config())).unwrap();
    p.to_str().unwrap().to_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn r_omega_above_bound_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |s| s.replace("r_omega = [0.0, 0.1, 0.2, 0.3]", "r_omega = [0.0, 0.5]"));
    let o = nmqbm(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("sweep.r_omega[1]") && err.contains("1/pi"), "{err}");
}

#[test]
fn missing_config_and_bad_flags() {
    assert_eq!(code(&nmqbm(&["run", "--config", "/nonexistent/x.toml"])), 2);
    assert_eq!(code(&nmqbm(&["run", "--grid-n", "4", "--out", "/tmp/never"])), 2);
    assert_eq!(code(&nmqbm(&["no-such-verb"])), 2);
}

#[test]
fn zero_length_run_emits_initial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nmqbm(&["run", "--out", out, "--tau-end", "0", "--grid-n", "49", "--workers", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let root = dir.path().join("proton");
    for label in ["r0.0000", "r0.1000", "r0.2000", "r0.3000"] {
        let e = root.join(label);
        assert!(e.join("manifest.json").exists(), "{label}");
        assert_eq!(fs::read_to_string(e.join("coherence.csv")).unwrap().lines().count(), 2);
        assert!(e.join("snapshots").join("tau_0.000000.bin").exists());
    }
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    let rs: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rs, ["0", "0.1", "0.2", "0.3"]);
}

#[test]
fn short_run_is_deterministic_and_refittable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |s| {
        s.replace("r_omega = [0.0, 0.1, 0.2, 0.3]", "r_omega = [0.0, 0.05]")
            .replace("sample_interval = 0.0025", "sample_interval = 0.0005")
    });
    let out = dir.path().join("o");
    let args = ["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--grid-n", "49", "--tau-end", "0.012"];
    let o = nmqbm(&args);
    assert_eq!(code(&o), 0, "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let coh = out.join("proton/r0.0500/coherence.csv");
    let read = || (fs::read(&coh).unwrap(), fs::read(out.join("proton/summary.csv")).unwrap());
    let first = read();
    assert_eq!(code(&nmqbm(&args)), 0);
    assert_eq!(first, read());

    let refit_dir = dir.path().join("refit");
    let o = nmqbm(&["fit", coh.to_str().unwrap(), "--out", refit_dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("class="));
    assert_eq!(
        fs::read(refit_dir.join("fit.json")).unwrap(),
        fs::read(out.join("proton/r0.0500/fit.json")).unwrap()
    );
}

#[test]
fn kernel_verification_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = nmqbm(&["verify-kernels", "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    let csv = fs::read_to_string(dir.path().join("proton/kernels/truncation_order1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let empty = write_config(dir.path(), |s| s.replace("omegas = [50.0, 100.0, 200.0, 400.0]", "omegas = []"));
    assert_eq!(code(&nmqbm(&["verify-kernels", "--config", &empty, "--out", out])), 2);
    let single = write_config(dir.path(), |s| s.replace("omegas = [50.0, 100.0, 200.0, 400.0]", "omegas = [100.0]"));
    assert_eq!(code(&nmqbm(&["verify-kernels", "--config", &single, "--out", out])), 2);

    // The imaginary-part expansion keeps an O(1/Omega^2) oscillating boundary
    // term at t = 1, which is too slow for the required slope.
    let fail = write_config(dir.path(), |s| s.replace("t = 1.5", "t = 1.0").replace("\"real_part\"", "\"imaginary_part\""));
    assert_eq!(code(&nmqbm(&["verify-kernels", "--config", &fail, "--out", out])), 4);
}

#[test]
fn fit_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "tau,c_raw\n0,1\n").unwrap();
    assert_eq!(code(&nmqbm(&["fit", p.to_str().unwrap()])), 1);
}
