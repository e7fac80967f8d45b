use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn timebin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timebin"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json summary")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

struct Run<'a> {
    mu: f64,
    eta: (f64, f64),
    darks_hz: (f64, f64),
    phases: (f64, f64, f64),
    v0: f64,
    duration_s: f64,
    pump_power_w: f64,
    extra: &'a str,
}

impl Default for Run<'_> {
    fn default() -> Self {
        Self {
            mu: 3.8e-4,
            eta: (0.0412, 0.0377),
            darks_hz: (360.0, 390.0),
            phases: (0.0, 0.0, 0.0),
            v0: 0.902,
            duration_s: 1e-3,
            pump_power_w: 60e-6,
            extra: "",
        }
    }
}

impl Run<'_> {
    fn toml(&self) -> String {
        format!(
            "[experiment]\n\
             rep_rate_hz = 76.2e6\n\
             bin_delay_s = 3e-9\n\
             mean_pairs_per_pulse = {}\n\
             pump_power_w = {}\n\
             eta_signal = {}\n\
             eta_idler = {}\n\
             dark_rate_signal_hz = {}\n\
             dark_rate_idler_hz = {}\n\
             phi_p_rad = {}\n\
             phi_s_rad = {}\n\
             phi_i_rad = {}\n\
             interference_visibility = {}\n\
             duration_s = {}\n{}",
            self.mu,
            self.pump_power_w,
            self.eta.0,
            self.eta.1,
            self.darks_hz.0,
            self.darks_hz.1,
            self.phases.0,
            self.phases.1,
            self.phases.2,
            self.v0,
            self.duration_s,
            self.extra
        )
    }

    /// Writes the run file, simulates and analyzes; returns the report path.
    fn analyze(&self, dir: &Path, name: &str, mode: &str, seed: u64) -> PathBuf {
        let cfg = format!("{name}.toml");
        std::fs::write(dir.join(&cfg), self.toml()).unwrap();
        let tags = format!("{name}.bin");
        let seed = seed.to_string();
        ok(&timebin(dir, &["simulate", "--config", &cfg, "--out", &tags, "--mode", mode, "--seed", &seed]));
        let report = format!("{name}.json");
        ok(&timebin(dir, &["analyze", &tags, "--out", &report]));
        std::fs::remove_file(dir.join(&tags)).unwrap();
        dir.join(report)
    }
}

fn output_checksums(manifest: &Value) -> Vec<String> {
    manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["sha256"].as_str().unwrap().to_owned())
        .collect()
}

#[test]
fn simulate_writes_tags_and_manifest() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), Run::default().toml()).unwrap();
    let s = ok(&timebin(dir.path(), &["simulate", "--config", "run.toml", "--out", "tags.bin", "--seed", "5"]));
    assert_eq!(s["triggers"], 76_200);
    assert_eq!(s["rng_seed"], 5);

    let m = read_json(dir.path().join("tags.bin.manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seeds"]["rng_seed"], 5);
    assert_eq!(m["config"]["experiment"]["rep_rate_hz"], 76.2e6);
    let out = &m["outputs"][0];
    let bytes = std::fs::read(dir.path().join("tags.bin")).unwrap();
    assert_eq!(out["bytes"], bytes.len() as u64);
    assert_eq!(out["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["inputs"][0]["path"], "run.toml");
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), Run::default().toml()).unwrap();
    let sums: Vec<Vec<String>> = [("a.bin", "1"), ("b.bin", "1"), ("c.bin", "2")]
        .iter()
        .map(|(out, seed)| {
            ok(&timebin(dir.path(), &["simulate", "--config", "run.toml", "--out", out, "--seed", seed]));
            output_checksums(&read_json(dir.path().join(format!("{out}.manifest.json"))))
        })
        .collect();
    assert_eq!(sums[0], sums[1]);
    assert_ne!(sums[0], sums[2]);
}

#[test]
fn csv_encoding_round_trips_through_analyze() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), Run::default().toml()).unwrap();
    for enc in ["binary", "csv"] {
        let out = format!("tags.{enc}");
        ok(&timebin(dir.path(), &["simulate", "--config", "run.toml", "--out", &out, "--encoding", enc]));
        ok(&timebin(dir.path(), &["analyze", &out, "--out", &format!("{enc}.json")]));
    }
    let a = read_json(dir.path().join("binary.json"));
    let b = read_json(dir.path().join("csv.json"));
    assert_eq!(a["rates"], b["rates"]);
    assert_eq!(a["coincidences"], b["coincidences"]);
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let text = Run::default().toml().replace("duration_s = 0.001\n", "");
    assert!(!text.contains("duration_s"));
    std::fs::write(dir.path().join("bad.toml"), text).unwrap();
    let out = timebin(dir.path(), &["simulate", "--config", "bad.toml", "--out", "x.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("duration_s"), "{}", stderr(&out));

    let text = Run::default().toml().replace("eta_idler = 0.0377", "eta_idler = -0.1");
    std::fs::write(dir.path().join("neg.toml"), text).unwrap();
    let out = timebin(dir.path(), &["simulate", "--config", "neg.toml", "--out", "x.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("eta_idler"));

    let out = timebin(dir.path(), &["simulate", "--out", "x.bin"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--config"));
    let out = timebin(dir.path(), &["simulate", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let out = timebin(dir.path(), &["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = timebin(dir.path(), &["simulate", "--config", "missing.toml", "--out", "x.bin"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_tag_files_exit_3_with_byte_offset() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), Run::default().toml()).unwrap();
    ok(&timebin(dir.path(), &["simulate", "--config", "run.toml", "--out", "tags.bin"]));
    let bytes = std::fs::read(dir.path().join("tags.bin")).unwrap();
    let header = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;

    let mut truncated = bytes.clone();
    truncated.truncate(header + 9 * 100 + 4);
    std::fs::write(dir.path().join("trunc.bin"), &truncated).unwrap();
    let out = timebin(dir.path(), &["analyze", "trunc.bin", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains(&format!("byte {}", header + 900)), "{}", stderr(&out));

    let mut bad = bytes.clone();
    bad[header + 9 * 7] = 9;
    std::fs::write(dir.path().join("bad.bin"), &bad).unwrap();
    let out = timebin(dir.path(), &["analyze", "bad.bin", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains(&format!("byte {}", header + 63)), "{}", stderr(&out));

    // timestamps out of order
    let mut swapped = bytes.clone();
    let (a, b) = (header + 9 * 10, header + 9 * 11);
    let first: Vec<u8> = swapped[a..a + 9].to_vec();
    let second: Vec<u8> = swapped[b..b + 9].to_vec();
    swapped[a..a + 9].copy_from_slice(&second);
    swapped[b..b + 9].copy_from_slice(&first);
    std::fs::write(dir.path().join("order.bin"), &swapped).unwrap();
    let out = timebin(dir.path(), &["analyze", "order.bin", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains(&format!("byte {b}")), "{}", stderr(&out));

    std::fs::write(dir.path().join("junk.bin"), b"not a tag file\n").unwrap();
    let out = timebin(dir.path(), &["analyze", "junk.bin", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn dark_counts_alone_give_unit_car() {
    let dir = TempDir::new().unwrap();
    let run = Run {
        mu: 0.0,
        darks_hz: (2e6, 2e6),
        duration_s: 0.05,
        ..Default::default()
    };
    let report = read_json(run.analyze(dir.path(), "dark", "single-bin", 4));
    let car = &report["car"];
    let (v, e) = (car["value"].as_f64().unwrap(), car["error"].as_f64().unwrap());
    assert!((v - 1.0).abs() < 4.0 * e, "CAR {v} ± {e}");
}

#[test]
fn single_bin_run_gives_klyshko_efficiencies() {
    // higher μ for statistics; the heralding ratios do not depend on it
    let dir = TempDir::new().unwrap();
    let run = Run {
        mu: 0.01,
        duration_s: 0.2,
        ..Default::default()
    };
    let r = read_json(run.analyze(dir.path(), "typical", "single-bin", 6));
    for (key, eta) in [("klyshko_signal", 0.0412), ("klyshko_idler", 0.0377)] {
        let v = r[key]["value"].as_f64().unwrap();
        let e = r[key]["error"].as_f64().unwrap();
        assert!((v - eta).abs() < 3.0 * e, "{key}: {v} ± {e}");
        assert!(e < 0.1 * eta);
    }
    assert_eq!(r["mode"], "single-bin");
    assert_eq!(r["config"]["mean_pairs_per_pulse"], 0.01);
}

#[test]
fn time_bin_run_writes_five_slot_table() {
    let dir = TempDir::new().unwrap();
    // φs = π/2 puts the central slot at quadrature, free of interference
    let run = Run {
        mu: 0.01,
        eta: (0.5, 0.5),
        phases: (0.0, FRAC_PI_2, 0.0),
        duration_s: 0.01,
        ..Default::default()
    };
    let report = run.analyze(dir.path(), "tb", "time-bin", 8);
    let csv = std::fs::read_to_string(dir.path().join("tb.delays.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "slot_or_phase,count,error");
    assert_eq!(lines.len(), 6);
    let counts: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let xs: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(xs, ["-2", "-1", "0", "1", "2"]);
    // central peak near twice the inner satellites, outer ones only from double pairs
    assert!(counts[2] > 1.5 * counts[1] && counts[2] > 1.5 * counts[3]);
    assert!(counts[0] * 20.0 < counts[1] && counts[4] * 20.0 < counts[3]);

    let hist = std::fs::read_to_string(dir.path().join("tb.signal_histogram.csv")).unwrap();
    assert!(hist.starts_with("slot_or_phase,count,error\n"));
    assert!(hist.lines().count() > 1000);
    let m = read_json(dir.path().join("tb.json.manifest.json"));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5);
    assert_eq!(read_json(report)["kind"], "analysis");
}

#[test]
fn analysis_is_idempotent() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("run.toml"), Run::default().toml()).unwrap();
    ok(&timebin(dir.path(), &["simulate", "--config", "run.toml", "--out", "tags.bin"]));
    ok(&timebin(dir.path(), &["analyze", "tags.bin", "--out", "a.json"]));
    ok(&timebin(dir.path(), &["analyze", "tags.bin", "--out", "a.json"]));
    let first = output_checksums(&read_json(dir.path().join("a.json.manifest.json")));
    ok(&timebin(dir.path(), &["analyze", "tags.bin", "--out", "a.json"]));
    assert_eq!(first, output_checksums(&read_json(dir.path().join("a.json.manifest.json"))));
}

fn write_points(dir: &Path, name: &str, n: usize, v: f64) {
    let mut s = String::from("phase_rad,counts,integration_s\n");
    for k in 0..n {
        let phase = TAU * k as f64 / n as f64;
        let counts = (1e5 * (1.0 - v * (phase + 0.4).cos())).round();
        s.push_str(&format!("{phase},{counts},1\n"));
    }
    std::fs::write(dir.join(name), s).unwrap();
}

#[test]
fn fringe_fit_recovers_visibility() {
    let dir = TempDir::new().unwrap();
    write_points(dir.path(), "scan.csv", 12, 0.902);
    let s = ok(&timebin(dir.path(), &["fringe", "--points", "scan.csv", "--out", "fringe.json"]));
    let v = s["visibility"].as_f64().unwrap();
    assert!((v - 0.902).abs() < 1e-3, "{v}");
    let f = read_json(dir.path().join("fringe.json"));
    assert_eq!(f["points"].as_array().unwrap().len(), 12);
    assert!((f["fit"]["phase_offset"]["value"].as_f64().unwrap() - 0.4).abs() < 1e-2);
    let table = std::fs::read_to_string(dir.path().join("fringe.csv")).unwrap();
    assert_eq!(table.lines().count(), 13);

    write_points(dir.path(), "flat.csv", 8, 0.0);
    let s = ok(&timebin(dir.path(), &["fringe", "--points", "flat.csv", "--out", "flat.json"]));
    assert!(s["visibility"].as_f64().unwrap() < 0.01);

    write_points(dir.path(), "short.csv", 3, 0.9);
    let out = timebin(dir.path(), &["fringe", "--points", "short.csv", "--out", "short.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("short.json").exists());
}

#[test]
fn fringe_from_simulated_runs() {
    let dir = TempDir::new().unwrap();
    let reports: Vec<String> = (0..6)
        .map(|k| {
            let run = Run {
                mu: 0.004,
                eta: (1.0, 1.0),
                darks_hz: (0.0, 0.0),
                phases: (0.0, TAU * k as f64 / 6.0, 0.0),
                duration_s: 0.02,
                ..Default::default()
            };
            run.analyze(dir.path(), &format!("p{k}"), "time-bin", 20 + k).display().to_string()
        })
        .collect();
    let mut args: Vec<&str> = vec!["fringe", "--out", "fringe.json"];
    args.extend(reports.iter().map(String::as_str));
    let s = ok(&timebin(dir.path(), &args));
    let (v, e) = (s["visibility"].as_f64().unwrap(), s["visibility_err"].as_f64().unwrap());
    assert!((v - 0.902).abs() < 4.0 * e + 0.01, "{v} ± {e}");
}

/// The four tomography settings in projector phases, with the matching
/// interferometer phases written to each run file.
fn tomography_runs(dir: &Path, mu: f64, v0: f64, duration_s: f64, skip: Option<usize>) -> Vec<String> {
    [(0.0, 0.0), (0.0, FRAC_PI_2), (FRAC_PI_2, 0.0), (FRAC_PI_2, FRAC_PI_2)]
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != skip)
        .map(|(k, &(ts, ti))| {
            let run = Run {
                mu,
                eta: (1.0, 1.0),
                darks_hz: (0.0, 0.0),
                phases: (0.0, (ts - PI).rem_euclid(TAU), ti),
                v0,
                duration_s,
                ..Default::default()
            };
            run.analyze(dir, &format!("set{k}"), "time-bin", 40 + k as u64).display().to_string()
        })
        .collect()
}

fn tomo(dir: &Path, reports: &[String], extra: &[&str]) -> Output {
    let mut args: Vec<&str> = vec!["tomo", "--out", "tomo.json", "--seed", "7"];
    args.extend(extra);
    args.extend(reports.iter().map(String::as_str));
    timebin(dir, &args)
}

#[test]
fn ideal_pipeline_reconstructs_bell_state() {
    let dir = TempDir::new().unwrap();
    let reports = tomography_runs(dir.path(), 0.004, 1.0, 0.08, None);
    let s = ok(&tomo(dir.path(), &reports, &["--replicas", "40"]));
    let f = s["fidelity"].as_f64().unwrap();
    assert!(f >= 0.99, "F = {f}");
    assert!(s["fidelity_err"].as_f64().unwrap() > 0.0);

    let t = read_json(dir.path().join("tomo.json"));
    assert_eq!(t["kind"], "tomography");
    assert_eq!(t["result"]["diagnostics"]["converged"], true);
    assert_eq!(t["result"]["bootstrap"]["used"], 40);
    let rho = std::fs::read_to_string(dir.path().join("tomo.rho.csv")).unwrap();
    let lines: Vec<&str> = rho.lines().collect();
    assert_eq!(lines[0], "row,col,re,im");
    assert_eq!(lines.len(), 17);
    let corner: f64 = lines[4].split(',').nth(2).unwrap().parse().unwrap();
    assert!(lines[4].starts_with("Z0Z0,Z1Z1,"));
    assert!((corner - 0.5).abs() < 0.02, "{corner}");

    // the record written by tomo reproduces the result on its own
    let record = dir.path().join("record.json");
    std::fs::write(&record, t["record"].to_string()).unwrap();
    let again = ok(&timebin(
        dir.path(),
        &["tomo", "--record", "record.json", "--out", "again.json", "--replicas", "0"],
    ));
    assert_eq!(again["concurrence"], s["concurrence"]);
}

#[test]
fn realistic_pipeline_violates_chsh() {
    let dir = TempDir::new().unwrap();
    let reports = tomography_runs(dir.path(), 0.005, 0.902, 0.1, None);
    let s = ok(&tomo(dir.path(), &reports, &["--replicas", "40"]));
    let c = s["concurrence"].as_f64().unwrap();
    assert!((0.85..=0.93).contains(&c), "C = {c}");
    assert!(s["chsh_lower"].as_f64().unwrap() > 2.0);
}

#[test]
fn tomo_reports_missing_setting_and_non_convergence() {
    let dir = TempDir::new().unwrap();
    let three = tomography_runs(dir.path(), 0.004, 1.0, 0.005, Some(3));
    let out = tomo(dir.path(), &three, &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("(90°, 90°)"), "{}", stderr(&out));

    let four = tomography_runs(dir.path(), 0.004, 1.0, 0.005, None);
    let out = tomo(dir.path(), &four, &["--max-iterations", "1"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("without converging"));
    let t = read_json(dir.path().join("tomo.json"));
    assert_eq!(t["result"]["diagnostics"]["converged"], false);
    assert!(t["result"]["bootstrap"].is_null());

    let out = timebin(dir.path(), &["tomo", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_collects_power_series_and_results() {
    let dir = TempDir::new().unwrap();
    let mut inputs: Vec<String> = [1e-4, 2e-4, 3e-4]
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let run = Run {
                mu: 60.0 * p,
                pump_power_w: p,
                duration_s: 0.2,
                ..Default::default()
            };
            run.analyze(dir.path(), &format!("pw{k}"), "single-bin", 60 + k as u64).display().to_string()
        })
        .collect();
    write_points(dir.path(), "scan.csv", 12, 0.902);
    ok(&timebin(dir.path(), &["fringe", "--points", "scan.csv", "--out", "fringe.json"]));
    inputs.push("fringe.json".into());

    let mut args: Vec<&str> = vec!["report", "--out", "summary.json", "--format", "csv"];
    args.extend(inputs.iter().map(String::as_str));
    let out = timebin(dir.path(), &args);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("key,value\n"));
    assert!(stdout.contains("runs,3"));

    let r = read_json(dir.path().join("summary.json"));
    let ps = &r["power_series"];
    let ks = ps["klyshko_signal"]["intercept"]["value"].as_f64().unwrap();
    let ks_err = ps["klyshko_signal"]["intercept"]["error"].as_f64().unwrap();
    assert!((ks - 0.0412).abs() < 3.0 * ks_err, "{ks} ± {ks_err}");
    assert!(ks_err < 0.005);
    assert_eq!(r["fringes"].as_array().unwrap().len(), 1);
    let table = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(table.starts_with("quantity,source,value,error\n"));
    assert!(table.contains("visibility,fringe.json,"));

    std::fs::write(dir.path().join("other.json"), r#"{"kind":"mystery"}"#).unwrap();
    let out = timebin(dir.path(), &["report", "--out", "s2.json", "other.json"]);
    assert_eq!(out.status.code(), Some(3));
}
