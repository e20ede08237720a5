use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use squeezeprof::commands::{self, Metrics, METRICS};
use squeezeprof::formats::{read_fits, read_json, read_pbm, FITS, MANIFEST};
use squeezeprof::CampaignConfig;
use squeezeprof_core::fit::fit_trace;
use squeezeprof_core::measurement::run_campaign;
use squeezeprof_core::optics::hadamard_masks;
use squeezeprof_core::reconstruction::{correlation, fidelity};
use squeezeprof_core::{reconstruct, FitSet, MaskOrder, QuadratureFit};

fn config_text(n: usize, samples: &str, seed: u64, thermal: bool) -> String {
    let c = (n as f64 - 1.0) / 2.0;
    let w = n as f64 / 4.0;
    let thermal = if thermal {
        format!(
            r#", "thermal": {{"mode": {{"kind": "two_lobe", "waist": {}, "separation": {}, "axis": "y"}}, "model": "incoherent", "v_th": 101.0}}"#,
            w / 2.0,
            1.5 * w
        )
    } else {
        String::new()
    };
    format!(
        r#"{{
    "version": 1,
    "grid": {n},
    "scene": {{
        "lo": {{"kind": "gaussian", "waist": {}}},
        "squeezed": {{"mode": {{"kind": "gaussian", "waist": {}, "center": [{}, {c}]}}, "r": 1.2, "phi": 0.4}}{thermal}
    }},
    "measurement": {{"samples": {samples}, "seed": {seed}}}
}}"#,
        1.5 * w,
        w,
        c + 0.25 * w
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_squeezeprof"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn simulate_writes_one_file_per_trace_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config_text(4, "\"exact\"", 0, false));
    let out = tmp.path().join("traces");
    let (code, text) = run(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code, 0, "{text}");
    let names = files(&out);
    assert_eq!(names.iter().filter(|f| f.ends_with(".csv")).count(), 33);
    assert!(names.contains(&MANIFEST.to_string()));
    assert!(names.contains(&"mask_0007c.csv".to_string()));
    assert!(names.contains(&"blank.csv".to_string()));
    let head = fs::read_to_string(out.join("mask_0003.csv")).unwrap();
    assert!(head.starts_with("theta_rad,variance\n0,"));
}

#[test]
fn reruns_are_byte_identical_and_overwrites_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config_text(4, "1000", 42, true));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["simulate", "--config", p(&cfg), "--out", p(&a)]).0, 0);
    assert_eq!(run(&["simulate", "--config", p(&cfg), "--out", p(&b)]).0, 0);
    for name in files(&a) {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
    let (code, text) = run(&["simulate", "--config", p(&cfg), "--out", p(&a)]);
    assert_eq!(code, 3);
    assert!(text.contains("--force"), "{text}");
    assert_eq!(run(&["simulate", "--config", p(&cfg), "--out", p(&a), "--force"]).0, 0);
    let (code, _) = run(&["simulate", "--config", p(&cfg), "--out", p(&b), "--force", "--seed", "43"]);
    assert_eq!(code, 0);
    assert_ne!(fs::read(a.join("mask_0001.csv")).unwrap(), fs::read(b.join("mask_0001.csv")).unwrap());
}

#[test]
fn noiseless_fits_have_tiny_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig::parse(&config_text(4, "\"exact\"", 0, true)).unwrap();
    let dir = tmp.path().join("t");
    commands::simulate(&cfg, &dir, false).unwrap();
    let rows = commands::fit(&dir, &dir, false).unwrap();
    assert_eq!(rows.len(), 33);
    assert_eq!(read_fits(&dir.join(FITS)).unwrap(), rows);
    for r in &rows {
        assert!(r.fit.as_ref().unwrap().residual_rms < 1e-9);
    }
    let blank = rows.last().unwrap().fit.as_ref().unwrap();
    assert_eq!(blank.theta_m, 0.0);
}

#[test]
fn vacuum_traces_fit_to_shot_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config_text(4, "\"exact\"", 0, false).replace("\"r\": 1.2", "\"r\": 0.0");
    let cfg = CampaignConfig::parse(&text).unwrap();
    let dir = tmp.path().join("t");
    commands::simulate(&cfg, &dir, false).unwrap();
    for r in commands::fit(&dir, &dir, false).unwrap() {
        let f = r.fit.unwrap();
        assert!((f.v_plus - 1.0).abs() < 1e-12 && (f.v_minus - 1.0).abs() < 1e-12, "{f:?}");
    }
}

#[test]
fn missing_blank_is_a_reference_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig::parse(&config_text(4, "\"exact\"", 0, false)).unwrap();
    let dir = tmp.path().join("t");
    commands::simulate(&cfg, &dir, false).unwrap();
    let manifest = fs::read_to_string(dir.join(MANIFEST)).unwrap();
    let trimmed: String = manifest.lines().filter(|l| !l.contains("blank")).collect::<Vec<_>>().join("\n");
    fs::write(dir.join(MANIFEST), trimmed.replace("\"mask_0015c.csv\": \"15c\",", "\"mask_0015c.csv\": \"15c\"")).unwrap();
    let (code, text) = run(&["fit", p(&dir)]);
    assert_eq!(code, 3, "{text}");
    assert!(text.contains("blank"), "{text}");
}

#[test]
fn corrupt_rows_name_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig::parse(&config_text(4, "\"exact\"", 0, false)).unwrap();
    let dir = tmp.path().join("t");
    commands::simulate(&cfg, &dir, false).unwrap();
    let path = dir.join("mask_0002.csv");
    let mut lines: Vec<String> = fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[5] = "0.4,abc".into();
    fs::write(&path, lines.join("\n")).unwrap();
    let (code, text) = run(&["fit", p(&dir)]);
    assert_eq!(code, 3);
    assert!(text.contains("mask_0002.csv") && text.contains("line 6"), "{text}");
}

#[test]
fn unphysical_blank_exits_with_model_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig::parse(&config_text(4, "\"exact\"", 0, false)).unwrap();
    let dir = tmp.path().join("t");
    commands::simulate(&cfg, &dir, false).unwrap();
    // Fits to a harmonic whose minimum is below zero.
    let rows: String = (0..16)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
            format!("{t},{}\n", (2.0 + 3.0 * (2.0 * t).cos()).abs() + 1e-3)
        })
        .collect();
    fs::write(dir.join("blank.csv"), format!("theta_rad,variance\n{rows}")).unwrap();
    let (code, text) = run(&["fit", p(&dir)]);
    assert_eq!(code, 4, "{text}");
}

#[test]
fn bad_config_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config_text(4, "\"exact\"", 0, false).replace("\"grid\"", "\"grdi\""));
    let (code, text) = run(&["simulate", "--config", p(&cfg), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(code, 2);
    assert!(text.contains("grdi") && text.contains("line"), "{text}");
    let cfg = write_config(tmp.path(), "d.json", &config_text(4, "\"exact\"", 0, false).replace("\"waist\": 1.5", "\"waist\": -1.5"));
    assert_eq!(run(&["pipeline", "--config", p(&cfg), "--out", p(&tmp.path().join("o"))]).0, 2);
    assert_eq!(run(&["simulate", "--out", p(&tmp.path().join("o"))]).0, 2);
}

#[test]
fn pipeline_reaches_target_fidelity_and_guards_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config_text(16, "\"exact\"", 0, false));
    let out = tmp.path().join("nested").join("run");
    let (code, text) = run(&["pipeline", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code, 0, "{text}");
    let m: Metrics = read_json(&out.join(METRICS)).unwrap();
    assert!(m.squeezed_fidelity.unwrap() >= 0.999, "{m:?}");
    assert!(m.squeezing_detected);
    for f in ["squeezed_magnitude.pfm", "squeezed_phase.pfm", "thermal_intensity.pfm", "weights.csv", FITS] {
        assert!(out.join(f).exists(), "{f}");
    }
    let (code, text) = run(&["pipeline", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code, 3, "{text}");
    assert_eq!(run(&["pipeline", "--config", p(&cfg), "--out", p(&out), "--force"]).0, 0);
}

#[test]
fn seed_moves_noisy_metrics_only() {
    let tmp = tempfile::tempdir().unwrap();
    let fid = |samples: &str, seed: u64| {
        let cfg = CampaignConfig::parse(&config_text(8, samples, seed, true)).unwrap();
        let out = tmp.path().join(format!("{}-{seed}", samples.len()));
        commands::pipeline(&cfg, &out, false).unwrap().squeezed_fidelity.unwrap()
    };
    assert_ne!(fid("3000", 1), fid("3000", 2));
    assert_eq!(fid("\"exact\"", 1), fid("\"exact\"", 2));
}

#[test]
fn pipeline_metrics_match_direct_library_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig::parse(&config_text(8, "5000", 9, true)).unwrap();
    let m = commands::pipeline(&cfg, &tmp.path().join("run"), false).unwrap();
    let written: Metrics = read_json(&tmp.path().join("run").join(METRICS)).unwrap();
    assert_eq!(m, written);

    let scene = cfg.scene().unwrap();
    let set = hadamard_masks(8, MaskOrder::Natural).unwrap();
    let traces = run_campaign(&scene, &set, &cfg.thetas(), cfg.samples().unwrap(), 9).unwrap();
    let fits: Vec<QuadratureFit> = traces.iter().map(|t| fit_trace(t).unwrap()).collect();
    let fits = FitSet::new(&fits, set.len()).unwrap();
    let rec = reconstruct(&fits, &set, Default::default()).unwrap();
    assert_eq!(m.squeezed_fidelity, Some(fidelity(&rec.shaped_squeezed, &scene.shaped_squeezed()).unwrap()));
    assert_eq!(
        m.thermal_correlation,
        Some(correlation(&rec.thermal.raw, &scene.shaped_thermal_intensity().unwrap()).unwrap())
    );
    assert_eq!(m.blank_v_minus, fits.blank().v_minus);
}

#[test]
fn thermal_flags_change_the_weighting() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config_text(8, "\"exact\"", 0, true));
    let run_with = |name: &str, flag: Option<&str>| {
        let out = tmp.path().join(name);
        let mut args = vec!["pipeline", "--config", p(&cfg), "--out", p(&out)];
        args.extend(flag);
        let (code, text) = run(&args);
        assert_eq!(code, 0, "{text}");
        read_json::<Metrics>(&out.join(METRICS)).unwrap()
    };
    let default = run_with("default", None);
    assert!(default.thermal_max_rel_error.unwrap() < 1e-9);
    let literal = run_with("literal", Some("--literal-eq21"));
    assert!(literal.thermal_max_rel_error.unwrap() > 1e-3);
    let exact = run_with("exact", Some("--paper-exact-thermal"));
    assert_eq!(exact.squeezed_leakage, 0.0);
    assert!(exact.thermal_max_rel_error.unwrap() > 1e-3);
    let no_floor = run_with("nofloor", Some("--no-floor-subtract"));
    assert!(no_floor.thermal_max_rel_error.unwrap() < 1e-9);
}

#[test]
fn reconstruct_without_config_infers_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig::parse(&config_text(8, "\"exact\"", 0, false)).unwrap();
    let dir = tmp.path().join("t");
    commands::simulate(&cfg, &dir, false).unwrap();
    commands::fit(&dir, &dir, false).unwrap();
    let (code, text) = run(&["reconstruct", p(&dir.join(FITS)), "--out", p(&tmp.path().join("r"))]);
    assert_eq!(code, 0, "{text}");
    let m: Metrics = read_json(&tmp.path().join("r").join(METRICS)).unwrap();
    assert_eq!((m.grid, m.masks, m.squeezed_fidelity), (8, 64, None));
}

#[test]
fn incomplete_fit_table_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config_text(4, "\"exact\"", 0, false));
    let cfg_doc = CampaignConfig::load(&cfg).unwrap();
    let dir = tmp.path().join("t");
    commands::simulate(&cfg_doc, &dir, false).unwrap();
    commands::fit(&dir, &dir, false).unwrap();
    let text = fs::read_to_string(dir.join(FITS)).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("5c,")).collect();
    fs::write(dir.join(FITS), kept.join("\n") + "\n").unwrap();
    let (code, out) = run(&["reconstruct", p(&dir.join(FITS)), "--config", p(&cfg), "--out", p(&tmp.path().join("r"))]);
    assert_eq!(code, 3, "{out}");
}

#[test]
fn gen_masks_writes_readable_pbms() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("masks");
    let (code, text) = run(&["gen-masks", "4", "--out", p(&out)]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(files(&out).len(), 33);
    let set = hadamard_masks(4, MaskOrder::Natural).unwrap();
    for m in 0..16 {
        assert_eq!(read_pbm(&out.join(format!("mask_{m:04}.pbm"))).unwrap(), set.mask(m));
        assert_eq!(read_pbm(&out.join(format!("mask_{m:04}c.pbm"))).unwrap(), set.complement(m));
    }
    assert_eq!(read_pbm(&out.join("blank.pbm")).unwrap(), set.blank());
    assert_eq!(run(&["gen-masks", "4", "--out", p(&out)]).0, 3);
    assert_eq!(run(&["gen-masks", "6", "--out", p(&tmp.path().join("x"))]).0, 2);
}

#[test]
fn file_modes_load_from_pfm() {
    use squeezeprof::formats::{write_pfm, Raster};
    let tmp = tempfile::tempdir().unwrap();
    let mag: Vec<f64> = (0..16).map(|i| 1.0 + (i % 3) as f64).collect();
    write_pfm(&tmp.path().join("mag.pfm"), &Raster::square(4, &mag)).unwrap();
    let text = config_text(4, "\"exact\"", 0, false).replace(
        r#""lo": {"kind": "gaussian", "waist": 1.5}"#,
        r#""lo": {"kind": "file", "magnitude": "mag.pfm"}"#,
    );
    assert!(text.contains("mag.pfm"));
    let path = write_config(tmp.path(), "c.json", &text);
    let scene = CampaignConfig::load(&path).unwrap().scene().unwrap();
    let norm: f64 = mag.iter().map(|m| m * m).sum::<f64>().sqrt();
    assert!((scene.lo().amplitudes()[2].re - 3.0 / norm).abs() < 1e-12);
}
