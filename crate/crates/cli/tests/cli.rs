use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdlr"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sdlr-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--output-dir").arg(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn ledger(dir: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(dir.join("ledger.jsonl"))
        .unwrap_or_default()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// CSV rows with every `*_seconds` column dropped.
fn untimed_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let keep: Vec<bool> = r.headers().unwrap().iter().map(|h| !h.ends_with("_seconds")).collect();
    let pick = |rec: &csv::StringRecord| -> Vec<String> {
        rec.iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v.to_string()).collect()
    };
    let mut rows = vec![pick(r.headers().unwrap())];
    rows.extend(r.records().map(|rec| pick(&rec.unwrap())));
    rows
}

fn sweep_rows(dir: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(dir.join("theta_sweep.csv")).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn sweep_is_deterministic_apart_from_timings() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    let args = ["theta-sweep", "--m", "20", "--seed", "7"];
    ok(&a, &args);
    ok(&b, &args);
    assert_eq!(untimed_csv(&a.join("theta_sweep.csv")), untimed_csv(&b.join("theta_sweep.csv")));
    assert_eq!(
        std::fs::read(a.join("reference_moments.csv")).unwrap(),
        std::fs::read(b.join("reference_moments.csv")).unwrap()
    );
}

#[test]
fn odd_resolution_is_a_config_error_and_is_logged() {
    let d = scratch("odd");
    let out = run(&d, &["solve-once", "--n", "7"]);
    assert_eq!(out.status.code(), Some(1));
    let l = ledger(&d);
    assert_eq!(l.len(), 1);
    assert_eq!(l[0]["status"], "error");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let d = scratch("missing");
    let out = run(&d, &["kl-report", "--config", "/nonexistent/sdlr.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = scratch("unknown");
    let cfg = d.join("bad.toml");
    std::fs::write(&cfg, "n = 8\nbogus = 1\n").unwrap();
    let out = run(&d, &["kl-report", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn each_command_appends_one_record() {
    let d = scratch("ledger");
    let cmds: [&[&str]; 5] = [
        &["kl-report"],
        &["select-theta", "--m", "10"],
        &["theta-sweep", "--m", "10", "--theta-list", "1,0.1"],
        &["solve-once", "--m", "10", "--solver", "direct"],
        &["convergence", "--m-list", "5,10", "--m-ref", "20", "--replicates", "1"],
    ];
    for (i, c) in cmds.iter().enumerate() {
        ok(&d, c);
        let l = ledger(&d);
        assert_eq!(l.len(), i + 1);
        let last = &l[i];
        assert_eq!(last["command"], c[0]);
        assert_eq!(last["status"], "ok");
        assert_eq!(last["seed"], 1);
        assert_eq!(last["config_hash"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn file_config_and_flags_agree() {
    let a = scratch("cfg-file");
    let b = scratch("cfg-flag");
    let cfg = a.join("run.toml");
    std::fs::write(&cfg, "m = 12\nseed = 3\nepsilon = 0.05\n").unwrap();
    ok(&a, &["solve-once", "--config", cfg.to_str().unwrap()]);
    ok(&b, &["solve-once", "--m", "12", "--seed", "3", "--epsilon", "0.05"]);
    assert_eq!(std::fs::read(a.join("moments.csv")).unwrap(), std::fs::read(b.join("moments.csv")).unwrap());
    assert_eq!(ledger(&a)[0]["config_hash"], ledger(&b)[0]["config_hash"]);
}

#[test]
fn looser_truncation_keeps_fewer_terms() {
    let d = scratch("kl-eps");
    let t = |eps: &str| -> u64 {
        ok(&d, &["kl-report", "--epsilon", eps]);
        ledger(&d).last().unwrap()["metrics"]["kl_terms"].as_u64().unwrap()
    };
    let tight = t("0.01");
    let loose = t("0.5");
    assert!(loose < tight, "{loose} vs {tight}");
    assert!(loose >= 1);
}

#[test]
fn full_energy_target_selects_numerical_rank() {
    let d = scratch("energy-one");
    let stdout = ok(&d, &["select-theta", "--m", "15", "--energy-target", "1.0"]);
    let l = ledger(&d);
    let m = &l[0]["metrics"];
    assert_eq!(m["selected_k"], m["numerical_rank"], "{stdout}");
    assert!(d.join("spectrum.csv").exists());
    assert!(d.join("glram_report.txt").exists());
}

#[test]
fn selected_theta_lands_on_the_error_plateau() {
    let d = scratch("plateau");
    ok(&d, &["theta-sweep", "--m", "30", "--theta-list", "1,0.05"]);
    let rows = sweep_rows(&d);
    assert_eq!(rows.len(), 3);
    let err = |r: &csv::StringRecord| r[6].parse::<f64>().unwrap();
    let full = rows.iter().find(|r| &r[0] == "1.0").unwrap();
    let sel = rows.iter().find(|r| r[10].contains("selected")).unwrap();
    let low = rows.iter().find(|r| &r[0] == "0.05").unwrap();
    let thetas: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(thetas.windows(2).all(|w| w[0] >= w[1]), "rows sorted by descending theta");
    assert!((err(sel) - err(full)).abs() <= 0.05 * err(full) + 1e-14);
    assert!(err(low) > 1e3 * err(full));
}

#[test]
fn convergence_requires_larger_reference() {
    let d = scratch("conv-ref");
    let out = run(&d, &["convergence", "--m-list", "10,20", "--m-ref", "20"]);
    assert_eq!(out.status.code(), Some(1));
    ok(&d, &["convergence", "--m-list", "10,20", "--m-ref", "40", "--replicates", "2"]);
    let rows: Vec<csv::StringRecord> =
        csv::Reader::from_path(d.join("convergence.csv")).unwrap().records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let runs = csv::Reader::from_path(d.join("convergence_runs.csv")).unwrap().records().count();
    assert_eq!(runs, 4);
    let fit = std::fs::read_to_string(d.join("convergence_fit.txt")).unwrap();
    assert!(fit.contains("expectation_slope"));
}

#[test]
fn lowrank_and_direct_solves_agree() {
    let a = scratch("solve-lr");
    let b = scratch("solve-direct");
    ok(&a, &["solve-once", "--m", "10", "--solver", "lowrank"]);
    ok(&b, &["solve-once", "--m", "10", "--solver", "direct"]);
    let read = |d: &Path| -> Vec<f64> {
        let mut r = csv::Reader::from_path(d.join("solutions.csv")).unwrap();
        r.records().flat_map(|rec| rec.unwrap().iter().skip(1).map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect()
    };
    let (x, y) = (read(&a), read(&b));
    assert_eq!(x.len(), y.len());
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    assert!(gap <= 1e-8 * scale, "gap {gap}");
}
