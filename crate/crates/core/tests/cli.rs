use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tunnelscope"))
}

fn write(dir: &std::path::Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const GROUND: &str = r#"
[grid]
x_min = -8.0
x_max = 8.0
n = 64

[potential]
kind = "harmonic"
omega = 1.0

[ground]
"#;

#[test]
fn list_and_validate() {
    let out = bin().arg("list-recipes").output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    for name in ["taejon-barrier", "kick-cool", "aux-trap-decay", "bright-collapse", "dark-spot", "oabp"] {
        assert!(s.contains(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "g.toml", GROUND);
    let out = bin().arg("validate").arg(&p).output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.starts_with("# config hash ") && s.contains("[ground]"), "{s}");
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "g.toml", GROUND);
    let out_dir = dir.path().join("o");
    let out = bin().arg("run").arg(&p).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("ground.csv").exists() && out_dir.join("manifest.json").exists());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("ground ["));
}

#[test]
fn recipe_with_seed_and_threads_env() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let d = dir.path().join(sub);
        let out = bin()
            .args(["recipe", "kick-cool", "--seed", "3", "--out"])
            .arg(&d)
            .env("TUNNELSCOPE_THREADS", "1")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(d.join("kick_cool.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &GROUND.replace("omega", "omeg"));
    for sub in ["validate", "run"] {
        let out = bin().arg(sub).arg(&bad).output().unwrap();
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8(out.stderr).unwrap().contains("omeg"));
    }
    let out = bin().arg("validate").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["recipe", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = GROUND.replace("n = 64", "n = 16").replace("x_min = -8.0", "x_min = -6.0").replace("x_max = 8.0", "x_max = 6.0")
        + "tol = 1e-300\n";
    let p = write(dir.path(), "nc.toml", &text);
    let out = bin().arg("run").arg(&p).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
