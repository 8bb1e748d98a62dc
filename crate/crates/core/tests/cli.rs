use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tailnet(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailnet"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = tailnet(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_market(out: &Path) {
    ok(out, &["simulate", "--preset", "tether-like", "--assets", "6", "--days", "400"]);
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn staged_run_shows_negative_stablecoin_contribution() {
    let d = tempfile::tempdir().unwrap();
    small_market(d.path());
    ok(d.path(), &["coes"]);
    ok(d.path(), &["network"]);
    ok(d.path(), &["score"]);

    let scores = fs::read_to_string(d.path().join("risk/scores.csv")).unwrap();
    assert_eq!(scores.lines().count() - 1, 151);
    let annual = fs::read_to_string(d.path().join("risk/annual.csv")).unwrap();
    let stbl = annual.lines().find(|l| l.starts_with("STBL,")).unwrap();
    let values: Vec<f64> = stbl.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!(values.iter().all(|v| *v < 0.0), "{stbl}");
    for line in annual.lines().skip(1).filter(|l| l.starts_with('A')) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() > 0.0), "{line}");
    }
}

#[test]
fn theta_bar_is_recorded() {
    let d = tempfile::tempdir().unwrap();
    small_market(d.path());
    ok(d.path(), &["coes"]);
    ok(d.path(), &["network", "--theta-bar", "0.2"]);
    let bp = fs::read_to_string(d.path().join("network/breakpoints.csv")).unwrap();
    let header: Vec<&str> = bp.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "theta_bar").unwrap();
    for line in bp.lines().skip(1) {
        let v: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert_eq!(v, 0.2);
    }
    let manifest = fs::read_to_string(d.path().join("network/manifest.txt")).unwrap();
    assert!(manifest.contains("config.theta_bar=0.2\n"));
}

#[test]
fn missing_input_exits_2_and_names_path() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope/prices.csv");
    let o = tailnet(d.path(), &["ingest", "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(missing.to_str().unwrap()), "{}", stderr(&o));
    assert!(!d.path().join("panel").exists());
}

#[test]
fn missing_upstream_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let o = tailnet(d.path(), &["coes"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("panel"), "{}", stderr(&o));
}

#[test]
fn graphml_on_missing_date_lists_dates() {
    let d = tempfile::tempdir().unwrap();
    small_market(d.path());
    ok(d.path(), &["run", "--stage", "coes"]);
    ok(d.path(), &["run", "--stage", "network"]);
    let o = tailnet(d.path(), &["export-graphml", "--date", "2021-05-20"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("2021-05-20") && err.contains("available dates: 2019-03-08..2019-08-05"), "{err}");

    ok(d.path(), &["export-graphml", "--date", "2019-05-01"]);
    let xml = fs::read_to_string(d.path().join("graphml/network_2019-05-01.graphml")).unwrap();
    assert!(xml.contains(r#"<data key="symbol">STBL</data>"#));
}

#[test]
fn stale_upstream_is_refused_unless_forced() {
    let d = tempfile::tempdir().unwrap();
    small_market(d.path());
    ok(d.path(), &["coes"]);
    ok(d.path(), &["network"]);
    ok(d.path(), &["simulate", "--assets", "6", "--days", "400", "--seed", "9"]);
    let o = tailnet(d.path(), &["score"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stale"), "{}", stderr(&o));
    ok(d.path(), &["score", "--force"]);
}

#[test]
fn tampered_artifact_is_detected() {
    let d = tempfile::tempdir().unwrap();
    small_market(d.path());
    ok(d.path(), &["coes"]);
    let coes = d.path().join("coes/coes.csv");
    let mut text = fs::read_to_string(&coes).unwrap();
    text.push('\n');
    fs::write(&coes, text).unwrap();
    let o = tailnet(d.path(), &["network"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coes/coes.csv"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let args = ["run", "--assets", "6", "--days", "320", "--graphml", "--dense"];
    ok(d.path(), &args);
    let first = snapshot(d.path());
    ok(d.path(), &args);
    assert_eq!(first, snapshot(d.path()));
    assert!(first.iter().any(|(p, _)| p.contains("dense")));
    assert!(!first.iter().any(|(p, _)| p.ends_with(".partial")));
}

#[test]
fn only_the_requested_stage_is_rewritten() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["run", "--assets", "6", "--days", "320"]);
    let before = snapshot(d.path());
    ok(d.path(), &["run", "--stage", "network", "--theta-bar", "0.3"]);
    let after = snapshot(d.path());
    for ((p, a), (q, b)) in before.iter().zip(&after) {
        assert_eq!(p, q);
        if p.starts_with("network") {
            continue;
        }
        assert_eq!(a, b, "{p} changed");
    }
}

#[test]
fn config_precedence_flag_env_file() {
    let d = tempfile::tempdir().unwrap();
    small_market(d.path());
    let cfg = d.path().join("tailnet.conf");
    fs::write(&cfg, "window = 100\nalpha = 0.1\n").unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_tailnet"));
        c.arg("--out").arg(d.path()).arg("--config").arg(&cfg).arg("coes").args(extra);
        if let Some(w) = env {
            c.env("TAILNET_WINDOW", w);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(d.path().join("coes/manifest.txt")).unwrap()
    };
    let m = run(&[], None);
    assert!(m.contains("config.window=100\n") && m.contains("config.alpha=0.1\n"));
    let m = run(&[], Some("120"));
    assert!(m.contains("config.window=120\n"));
    let m = run(&["--window", "150"], Some("120"));
    assert!(m.contains("config.window=150\n"));
}

#[test]
fn bad_configuration_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let o = tailnet(d.path(), &["--set", "theta_bar=0.9", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tailnet(d.path(), &["run", "--stage", "plot"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_and_drivers_from_files() {
    let d = tempfile::tempdir().unwrap();
    // Build a price file from a simulated panel, then ingest it.
    let panel = tailnet::synth::generate_panel(&tailnet::synth::negative_beta_market(5, 1, 200, 4)).unwrap();
    let csv = tailnet::synth::records_to_long_csv(&tailnet::synth::price_records(&panel));
    let prices = d.path().join("prices.csv");
    fs::write(&prices, csv).unwrap();
    let out = d.path().join("out");
    ok(&out, &["ingest", "--input", prices.to_str().unwrap()]);
    ok(&out, &["coes", "--window", "100"]);
    ok(&out, &["network"]);
    ok(&out, &["score"]);

    let mut cov = String::from("date,cases,oil\n");
    for (k, date) in panel.dates().iter().enumerate() {
        cov.push_str(&format!("{date},{},{}\n", (k * k) as f64, ((k * 7919) % 101) as f64 / 100.0));
    }
    let cov_path = d.path().join("covariates.csv");
    fs::write(&cov_path, cov).unwrap();
    ok(&out, &["drivers", "--covariates", cov_path.to_str().unwrap(), "--lag", "oil:2"]);
    let reg = fs::read_to_string(out.join("drivers/regression.csv")).unwrap();
    assert!(reg.starts_with("name,coef,se,t,p\nintercept,"));
    assert!(reg.contains("\noil_lag2,"));
    assert!(fs::read_to_string(out.join("drivers/report.txt")).unwrap().contains("Newey-West"));
}
