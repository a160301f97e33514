use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_breakthrough"));
    cmd.env("SOURCE_DATE_EPOCH", "1700000000").env_remove("BREAKTHROUGH_WORKERS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const STRAIN_100: &str = r#"{"n_subjects": 100, "hazard": {"mechanism": "new_strain", "c": 1e-3}, "seed": 4}"#;
const WANING_SUBGROUP: &str =
    r#"{"n_subjects": 3000, "subgroup_enabled": true, "hazard": {"mechanism": "waning", "a": 1e-4, "b": 7e-4, "d": 180, "r": 1e-4}, "seed": 8}"#;

#[test]
fn simulate_writes_header_rows_and_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", STRAIN_100);
    let out = dir.path().join("cohort.csv");
    ok(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z_delta,T,C"));
    assert_eq!(lines.count(), 100);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cohort.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["base_seed"], 4);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["started_at"], "2023-11-14T22:13:20Z");
}

#[test]
fn simulate_is_byte_identical_on_rerun() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", WANING_SUBGROUP);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok(&["simulate", "--config", path(&cfg), "--out", path(&a)]);
    ok(&["simulate", "--config", path(&cfg), "--out", path(&b)]);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert!(String::from_utf8(bytes).unwrap().starts_with("z_delta,T,C,x1\n"));
}

#[test]
fn simulate_rejects_invalid_config_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"n_subjects": 0, "hazard": {"mechanism": "new_strain", "c": 1e-3}}"#);
    let out = run(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = run(&["simulate", "--config", path(&dir.path().join("nope.json")), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

const SMOKE_EXPERIMENT: &str = r#"{
  "grid": [
    {"hazard": {"mechanism": "waning", "a": 1e-4, "b": 7e-4, "d": 90, "r": 1e-4}, "n_subjects": 300, "subgroup_enabled": true, "beta1": 0.15},
    {"hazard": {"mechanism": "new_strain", "c": 5e-3}, "n_subjects": 300, "subgroup_enabled": true, "beta1": 0.15}
  ],
  "replications": 1,
  "base_seed": 17
}"#;

#[test]
fn experiment_smoke_run_has_binary_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "exp.json", SMOKE_EXPERIMENT);
    let out = dir.path().join("run");
    ok(&["experiment", "--config", path(&cfg), "--out", path(&out)]);
    for name in [
        "experiment_config.json",
        "metrics.csv",
        "metrics.json",
        "fig4_power.csv",
        "figS2_power.csv",
        "fig5_bias_coverage.csv",
        "figS3_bias.csv",
        "tableS1_type1.csv",
        "manifest.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let mut rdr = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>().join(","),
        "cell_id,mechanism,a,b,d,r,k,c,N,subgroup,beta1,estimator,metric,alpha,value,mc_se,B_effective"
    );
    let metric = headers.iter().position(|h| h == "metric").unwrap();
    let value = headers.iter().position(|h| h == "value").unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if matches!(&rec[metric], "power" | "type1" | "coverage") {
            let v: f64 = rec[value].parse().unwrap();
            assert!(v == 0.0 || v == 1.0, "{rec:?}");
        }
    }
}

#[test]
fn experiment_rerun_is_identical_for_any_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "exp.json", SMOKE_EXPERIMENT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["experiment", "--config", path(&cfg), "--replications", "6", "--workers", "1", "--out", path(&a)]);
    let out = bin()
        .env("BREAKTHROUGH_WORKERS", "3")
        .args(["experiment", "--config", path(&cfg), "--replications", "6", "--out", path(&b)])
        .output()
        .unwrap();
    assert!(out.status.success());
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn paper_grid_desk_scale_emits_type1_table() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("grid");
    ok(&["experiment", "--paper-grid", "no_subgroup", "--desk-scale", "--replications", "2", "--out", path(&out)]);
    let text = fs::read_to_string(out.join("tableS1_type1.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,c,subgroup,alpha_0.01,alpha_0.05,alpha_0.1,B_effective"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 15);
    for n in ["500", "1000", "10000"] {
        let cs: Vec<&str> = rows.iter().filter(|r| r[0] == n).map(|r| r[1].as_str()).collect();
        assert_eq!(cs, ["0.0001", "0.0005", "0.001", "0.005", "0.01"]);
    }
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("experiment_config.json")).unwrap()).unwrap();
    assert_eq!(config["replications"], 2);
}

/// Simulates a dated cohort and returns (csv, config) paths.
fn dated_cohort(dir: &Path, config: &str) -> (PathBuf, PathBuf) {
    let cfg = write(dir, "sim.json", config);
    let dated = dir.join("dated.csv");
    ok(&["simulate", "--config", path(&cfg), "--out", path(&dir.join("analytic.csv")), "--dated-out", path(&dated)]);
    (dated, dir.join("dated.config.json"))
}

#[test]
fn analyze_reports_waning_and_capped_sensitivity() {
    let dir = TempDir::new().unwrap();
    let (cohort, config) = dated_cohort(dir.path(), WANING_SUBGROUP);
    let out_dir = dir.path().join("report");
    let out = ok(&[
        "analyze", "--cohort", path(&cohort), "--config", path(&config), "--sensitivity-cap", "90", "--out", path(&out_dir),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Population | # events / # patients | Hazard Ratio (95% CI) | P-value"));
    assert!(stdout.contains("Sensitivity: Recently vaccinated patients (z_Δ ≤ 90)"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("mechanism_report.json")).unwrap()).unwrap();
    assert!(report["mechanism"]["offset"]["hazard_ratio"].as_f64().unwrap() > 1.0);
    let sens = report["mechanism"]["sensitivity"]["n_patients"].as_u64().unwrap() as usize;

    let mut rdr = csv::Reader::from_path(&cohort).unwrap();
    let capped = rdr
        .records()
        .filter(|r| {
            let v = chrono::NaiveDate::parse_from_str(&r.as_ref().unwrap()[1], "%Y-%m-%d").unwrap();
            (chrono::NaiveDate::from_ymd_opt(2022, 1, 1).unwrap() - v).num_days() <= 90
        })
        .count();
    assert_eq!(sens, capped);

    let dual = fs::read_to_string(out_dir.join("dual_model.csv")).unwrap();
    assert!(dual.starts_with(
        "term,proposed_hr,proposed_ci_lower,proposed_ci_upper,proposed_p,naive_hr,naive_ci_lower,naive_ci_upper,naive_p\n"
    ));
    assert_eq!(dual.lines().count(), 3);
}

#[test]
fn analyze_rejects_malformed_schema_without_outputs() {
    let dir = TempDir::new().unwrap();
    let (cohort, _) = dated_cohort(dir.path(), STRAIN_100);
    let bad = write(dir.path(), "bad.json", "{\"schema\": {\"covariates\": [}");
    let out_dir = dir.path().join("report");
    let out = run(&["analyze", "--cohort", path(&cohort), "--config", path(&bad), "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

const WINDOW: &str = r#"{
  "schema": {"covariates": []},
  "window": {"vaccination_start": "2021-01-01", "landmark": "2021-07-01", "censor": "2021-12-01"}
}"#;

#[test]
fn analyze_without_events_exits_4() {
    let dir = TempDir::new().unwrap();
    let cohort = write(dir.path(), "c.csv", "id,vaccination_date,event_date\n1,2021-03-01,\n2,2021-04-01,2021-05-01\n3,2021-05-01,\n");
    let config = write(dir.path(), "w.json", WINDOW);
    let out_dir = dir.path().join("report");
    let out = run(&["analyze", "--cohort", path(&cohort), "--config", path(&config), "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no events after landmark"));
    assert!(!out_dir.exists());
}

#[test]
fn km_bins_offsets_and_notes_empty_strata() {
    let dir = TempDir::new().unwrap();
    // Offsets 181, 170, 100, 20: bins (0,30], (90,120], (150,180], >180 occupied.
    let cohort = write(
        dir.path(),
        "c.csv",
        "id,vaccination_date,event_date\n\
         1,2021-01-01,2021-08-01\n\
         2,2021-01-12,\n\
         3,2021-03-23,2021-09-10\n\
         4,2021-06-11,2021-10-01\n",
    );
    let config = write(dir.path(), "w.json", WINDOW);
    let out_dir = dir.path().join("km");
    ok(&["km", "--cohort", path(&cohort), "--config", path(&config), "--bin-width", "30", "--out", path(&out_dir)]);
    let text = fs::read_to_string(out_dir.join("km_curves.csv")).unwrap();
    assert!(text.starts_with("stratum,time,survival,ci_lower,ci_upper,at_risk\n"));
    let mut strata: Vec<String> = csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap()[0].to_string())
        .collect();
    strata.dedup();
    assert_eq!(strata, ["(0,30]", "(90,120]", "(150,180]", ">180"]);
    let manifest = fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    for empty in ["(30,60]", "(60,90]", "(120,150]"] {
        assert!(manifest.contains(&format!("empty stratum omitted: {empty}")), "{manifest}");
    }
}

/// Largest minus smallest survival across strata at `t`, from the KM CSV.
fn spread_at(csv_path: &Path, t: f64) -> f64 {
    let mut rdr = csv::Reader::from_path(csv_path).unwrap();
    let mut by_stratum: Vec<(String, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let time: f64 = rec[1].parse().unwrap();
        if time > t {
            continue;
        }
        let s: f64 = rec[2].parse().unwrap();
        match by_stratum.iter_mut().find(|(name, _)| name == &rec[0]) {
            Some(entry) => entry.1 = s,
            None => by_stratum.push((rec[0].to_string(), s)),
        }
    }
    let max = by_stratum.iter().map(|x| x.1).fold(f64::MIN, f64::max);
    let min = by_stratum.iter().map(|x| x.1).fold(f64::MAX, f64::min);
    max - min
}

#[test]
fn vaccination_time_zero_separates_new_strain_curves() {
    let dir = TempDir::new().unwrap();
    let (cohort, config) = dated_cohort(
        dir.path(),
        r#"{"n_subjects": 20000, "hazard": {"mechanism": "new_strain", "c": 1e-3}, "seed": 5}"#,
    );
    let (land, vacc) = (dir.path().join("land"), dir.path().join("vacc"));
    ok(&["km", "--cohort", path(&cohort), "--config", path(&config), "--time-zero", "landmark", "--out", path(&land)]);
    ok(&["km", "--cohort", path(&cohort), "--config", path(&config), "--time-zero", "vaccination", "--out", path(&vacc)]);
    let landmark_spread = spread_at(&land.join("km_curves.csv"), 150.0);
    let vaccination_spread = spread_at(&vacc.join("km_curves.csv"), 150.0);
    assert!(landmark_spread < 0.05, "landmark spread {landmark_spread}");
    assert!(vaccination_spread > 0.1, "vaccination spread {vaccination_spread}");
}
