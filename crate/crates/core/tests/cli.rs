use std::path::Path;
use std::process::Command;

fn oval(dir: Option<&Path>) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oval"));
    c.env_remove("OVAL_CONFIG_DIR");
    if let Some(d) = dir {
        c.env("OVAL_CONFIG_DIR", d);
    }
    c
}

fn run(c: &mut Command) -> String {
    let out = c.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_eval_report_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("desk.toml"),
        "profile = \"desk\"\n[dataset]\nscenes = 1\nepisodes_per_floor = 2\n[run]\nmax_steps = 150\n",
    )
    .unwrap();
    let data = tmp.path().join("d.json");
    run(oval(Some(tmp.path())).args(["generate", "--seed", "3", "--out"]).arg(&data));
    let d = oval::eval::Dataset::from_json(&std::fs::read_to_string(&data).unwrap()).unwrap();
    assert_eq!(d.scenes.len(), 1);
    assert_eq!(d.episodes.len(), 2);

    let stem = tmp.path().join("r");
    run(oval(Some(tmp.path())).args(["eval", "--seed", "3", "--episodes"]).arg(&data).arg("-o").arg(&stem));
    for ext in ["json", "csv", "txt"] {
        assert!(stem.with_extension(ext).exists());
    }
    let csv = run(oval(None).args(["report", "--format", "csv"]).arg(stem.with_extension("json")));
    assert_eq!(csv, std::fs::read_to_string(stem.with_extension("csv")).unwrap());
    let curves = run(oval(None).args(["report", "--format", "curves"]).arg(stem.with_extension("json")));
    assert!(curves.starts_with("target,episodes,sr,spl\n1,1,"));
}

#[test]
fn unknown_profile_is_rejected() {
    let out = oval(None).args(["eval", "--profile", "nope"]).output().unwrap();
    assert!(!out.status.success());
}
