use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmcsim_cli::config::{emit, load, parse, RunConfig};

fn gmcsim(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gmcsim"));
    cmd.args(args).env_remove("GMCSIM_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn transfer_writes_increasing_grid_and_twin() {
    let dir = tempfile::tempdir().unwrap();
    let out = gmcsim(
        &["--out", s(dir.path()), "--topology", "proposed", "transfer"],
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = read_csv(&dir.path().join("transfer_proposed.csv"));
    assert_eq!(header, "vin_v,vout_v,gain");
    assert_eq!(rows.len(), 201);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    let twin = json(&dir.path().join("transfer_proposed.json"));
    assert_eq!(twin["vin_v"].as_array().unwrap().len(), 201);
    assert_eq!(twin["environment"]["temperature_k"], 300.15);
    assert!(!dir.path().join("transfer_traditional.csv").exists());
}

#[test]
fn transfer_summary_is_recomputable_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gmcsim(&["--out", s(dir.path()), "transfer"], &[])
        .status
        .success());
    let summary = json(&dir.path().join("transfer_summary.json"));
    for topology in ["proposed", "traditional"] {
        let (_, rows) = read_csv(&dir.path().join(format!("transfer_{topology}.csv")));
        let gains: Vec<f64> = rows
            .iter()
            .filter(|r| r[0].abs() <= 0.04 * (1.0 + 1e-9))
            .map(|r| r[2])
            .collect();
        let max = gains.iter().copied().fold(f64::MIN, f64::max);
        let min = gains.iter().copied().fold(f64::MAX, f64::min);
        let mean = gains.iter().sum::<f64>() / gains.len() as f64;
        let reported = summary["transfer"][topology]["gain_ripple"]
            .as_f64()
            .unwrap();
        assert!(((max - min) / mean - reported).abs() < 1e-12);
        let centre = rows.iter().find(|r| r[0] == 0.0).unwrap()[2];
        assert_eq!(
            summary["transfer"][topology]["gain_nominal"]
                .as_f64()
                .unwrap(),
            centre
        );
    }
    // traditional bends, proposed stays flat
    let prop = summary["transfer"]["proposed"]["gain_ripple"]
        .as_f64()
        .unwrap();
    let trad = summary["transfer"]["traditional"]["gain_ripple"]
        .as_f64()
        .unwrap();
    assert!(prop < 0.02 && trad > 0.05);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "experiments": {"thd": {"n_samples": 1000}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = gmcsim(&["--config", s(&cfg), "--out", s(&out_dir), "thd"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiments.thd.n_samples"));
    assert!(!out_dir.exists());

    std::fs::write(&cfg, "{ not json").unwrap();
    let out = gmcsim(
        &["--config", s(&cfg), "--out", s(&out_dir), "transfer"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn strict_mode_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1, "experiments": {"thd": {"cycels": 5}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let lax = gmcsim(&["--config", s(&cfg), "--out", s(&out_dir), "gain"], &[]);
    assert!(lax.status.success());
    assert!(String::from_utf8_lossy(&lax.stderr).contains("experiments.thd.cycels"));
    let strict = gmcsim(
        &[
            "--config",
            s(&cfg),
            "--out",
            s(&out_dir),
            "--strict",
            "gain",
        ],
        &[],
    );
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn thd_summary_reports_margin_and_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let out = gmcsim(&["--out", s(dir.path()), "thd"], &[]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dBc"), "{stdout}");
    let summary = json(&dir.path().join("thd_summary.json"));
    let delta = summary["thd"]["thd_delta_db"].as_f64().unwrap();
    assert!(delta >= 15.0, "{delta}");
    let (header, rows) = read_csv(&dir.path().join("spectrum_proposed.csv"));
    assert_eq!(header, "bin,freq_hz,mag_db");
    assert_eq!(rows.len(), 513);
    assert_eq!(rows[3][2], 0.0);
}

#[test]
fn linear_stage_is_below_floor() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gmcsim(
        &["--out", s(dir.path()), "--topology", "linear", "thd"],
        &[]
    )
    .status
    .success());
    let summary = json(&dir.path().join("thd_summary.json"));
    assert_eq!(summary["thd"]["topologies"]["linear"]["below_floor"], true);
    assert!(summary["thd"].get("thd_delta_db").is_none());
}

#[test]
fn strict_thd_fails_when_clipping() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.traditional.cap_c /= 50.0;
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, emit(&cfg)).unwrap();
    let out_dir = dir.path().join("out");
    let args = [
        "--config",
        s(&path),
        "--out",
        s(&out_dir),
        "--topology",
        "traditional",
    ];
    let lax = gmcsim(&[&args[..], &["thd"]].concat(), &[]);
    assert!(lax.status.success());
    assert_eq!(
        json(&out_dir.join("thd_summary.json"))["thd"]["topologies"]["traditional"]["clipped"],
        true
    );
    let strict_dir = dir.path().join("strict");
    let strict = gmcsim(
        &[
            "--config",
            s(&path),
            "--out",
            s(&strict_dir),
            "--topology",
            "traditional",
            "--strict",
            "thd",
        ],
        &[],
    );
    assert_eq!(strict.status.code(), Some(1));
    assert!(!strict_dir.exists());
}

#[test]
fn corners_grid_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gmcsim(&["--out", s(dir.path()), "corners"], &[])
        .status
        .success());
    let (header, rows) = read_csv(&dir.path().join("corners_traditional.csv"));
    assert_eq!(header, "temp_c,vdd_v,gain");
    assert_eq!(rows.len(), 45);
    assert_eq!(rows[0][..2], [-40.0, 4.5]);
    assert_eq!(rows[44][..2], [120.0, 5.5]);
    let stats = json(&dir.path().join("corners_stats.json"));
    let c = &stats["corners"];
    assert!(c["std_ratio"].as_f64().unwrap() < 0.3);
    let range = |t: &str| {
        c["topologies"][t]["max"].as_f64().unwrap() - c["topologies"][t]["min"].as_f64().unwrap()
    };
    assert!(range("proposed") < range("traditional") / 3.0);
    let gains: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let mean = gains.iter().sum::<f64>() / 45.0;
    assert!((mean - c["topologies"]["traditional"]["mean"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn single_point_corner_grid_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"schema_version": 1, "experiments": {"corners": {"n_t": 1, "n_v": 1}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    assert!(gmcsim(
        &["--config", s(&path), "--out", s(&out_dir), "corners"],
        &[]
    )
    .status
    .success());
    let stats = json(&out_dir.join("corners_stats.json"));
    assert_eq!(stats["corners"]["topologies"]["proposed"]["std"], 0.0);
}

#[test]
fn calibrate_emits_new_config_and_keeps_original() {
    let dir = tempfile::tempdir().unwrap();
    let original = dir.path().join("cfg.json");
    let text = emit(&RunConfig::default());
    std::fs::write(&original, &text).unwrap();
    let out_dir = dir.path().join("out");
    let out = gmcsim(
        &[
            "--config",
            s(&original),
            "--out",
            s(&out_dir),
            "calibrate",
            "--target",
            "14.2",
            "--flatten",
        ],
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(std::fs::read_to_string(&original).unwrap(), text);

    let calibrated = out_dir.join("calibrated_config.json");
    let loaded = load(&calibrated, true).unwrap().config;
    assert_eq!(loaded.experiments.calibration.target_gain, 14.2);
    assert_ne!(
        loaded.proposed.pair_geometry(),
        RunConfig::default().proposed.pair_geometry()
    );

    // re-running the gain experiment on the emitted config lands on the target
    let check_dir = dir.path().join("check");
    assert!(gmcsim(
        &["--config", s(&calibrated), "--out", s(&check_dir), "gain"],
        &[]
    )
    .status
    .success());
    let gains = json(&check_dir.join("gain_summary.json"));
    for t in ["proposed", "traditional"] {
        let g = gains["gain"][t]["gain_at_probe"].as_f64().unwrap();
        assert!((g / 14.2 - 1.0).abs() < 1e-3, "{t}: {g}");
    }
    assert!(gmcsim(
        &[
            "--config",
            s(&calibrated),
            "--out",
            s(&check_dir),
            "transfer"
        ],
        &[]
    )
    .status
    .success());
    let (_, rows) = read_csv(&check_dir.join("transfer_proposed.csv"));
    let centre = rows.iter().find(|r| r[0] == 0.0).unwrap()[2];
    assert!((centre / 14.2 - 1.0).abs() < 1e-3, "{centre}");
}

#[test]
fn calibrate_at_current_gain_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = gmcsim(
        &[
            "--out",
            s(dir.path()),
            "--topology",
            "proposed",
            "calibrate",
            "--target",
            "15.7",
        ],
        &[],
    );
    assert!(out.status.success());
    let loaded = load(&dir.path().join("calibrated_config.json"), true)
        .unwrap()
        .config;
    assert_eq!(loaded.proposed, RunConfig::default().proposed);
}

#[test]
fn impossible_calibration_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = gmcsim(&["--out", s(&out_dir), "calibrate", "--target", "1e6"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    assert!(!out_dir.exists());
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let from_env = dir.path().join("env");
    let from_cfg = dir.path().join("cfg-out");
    let from_flag = dir.path().join("flag");

    assert!(gmcsim(&["gain"], &[("GMCSIM_OUT", &from_env)])
        .status
        .success());
    assert!(from_env.join("gain_summary.json").exists());

    let cfg = RunConfig {
        output_dir: Some(from_cfg.clone()),
        ..Default::default()
    };
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, emit(&cfg)).unwrap();
    std::fs::remove_dir_all(&from_env).unwrap();
    assert!(gmcsim(
        &["--config", s(&path), "gain"],
        &[("GMCSIM_OUT", &from_env)]
    )
    .status
    .success());
    assert!(from_cfg.join("gain_summary.json").exists());
    assert!(!from_env.exists());

    assert!(
        gmcsim(&["--config", s(&path), "--out", s(&from_flag), "gain"], &[])
            .status
            .success()
    );
    assert!(from_flag.join("gain_summary.json").exists());
}

#[test]
fn selftest_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = gmcsim(&["--out", s(dir.path()), "selftest"], &[]);
    assert!(out.status.success());
    assert_eq!(json(&dir.path().join("selftest.json"))["passed"], true);
}

#[test]
fn emitted_config_reloads_identically() {
    let mut cfg = RunConfig::default();
    cfg.proposed.cap_c = 1.0 / 3.0 * 1e-11;
    cfg.experiments.transfer.v_start = -0.123_456_789_012_345_67;
    cfg.output_dir = Some(PathBuf::from("x"));
    let back = parse(&emit(&cfg), true).unwrap().config;
    assert_eq!(back, cfg);
    assert_eq!(emit(&back), emit(&cfg));
}

#[test]
fn shipped_default_config_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text, emit(&RunConfig::default()));
}
