use std::path::Path;
use std::process::Command;

fn gplab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gplab")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("small.toml"),
        "seed = 11\nreplicates = 1\ncampaign = \"theorem1\"\n[prior]\ntruncation = 10\n[chain]\niterations = 400\nburn_in = 200\n",
    );
    let data = dir.path().join("data");
    let (code, _) = gplab(&["simulate", "--config", &cfg, "--n", "60", "--out", data.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = data.join("theorem1_rep0_n60.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("x1,y"));
    assert_eq!(text.lines().count(), 61);

    let fit = dir.path().join("fit");
    let (code, stdout) = gplab(&["fit", "--config", &cfg, "--data", csv.to_str().unwrap(), "--out", fit.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("fit.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 60);
    assert_eq!(summary["draws"], 100);
    let mass = summary["posterior_mass_outside"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mass));
    assert_eq!(std::fs::read_to_string(fit.join("draws.csv")).unwrap().lines().count(), 101);
}

#[test]
fn exit_code_follows_predicates() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = gplab(&["campaign", "sampler", "--seed", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert!(dir.path().join("sampler.csv").exists() && dir.path().join("sampler.json").exists());

    // no sample covariance lies within zero standard errors
    let strict = write(&dir.path().join("strict.toml"), "seed = 4\nreplicates = 1\ncampaign = \"sampler\"\nmax_standard_errors = 0.0\n");
    let (code, stdout) = gplab(&["campaign", "sampler", "--config", &strict]);
    assert_eq!(code, 1);
    assert!(stdout.contains("FAIL"));
}

#[test]
fn usage_errors() {
    assert_eq!(gplab(&["campaign", "no-such-campaign"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("s.toml"), "seed = 1\nreplicates = 1\ncampaign = \"spacing\"\n");
    assert_eq!(gplab(&["campaign", "sampler", "--config", &cfg]).0, 2);
}
