//! End-to-end checks of the `uwblab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn uwblab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwblab")).args(args).env("RUST_LOG", "warn").output().expect("spawn uwblab")
}

fn ok(args: &[&str]) -> String {
    let o = uwblab(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Column `name` of a CSV file as strings.
fn column(path: impl AsRef<Path>, name: &str) -> Vec<String> {
    let text = read(path);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

fn floats(v: &[String]) -> Vec<f64> {
    v.iter().map(|s| s.parse().unwrap()).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir.join("manifest.json"))).unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn defaults_round_trip() {
    let t = TempDir::new().unwrap();
    let text = ok(&["defaults"]);
    for section in ["[channel]", "[system]", "[pulse.design]", "[run]"] {
        assert!(text.contains(section), "missing {section}");
    }
    let cfg = write_config(&t, "d.toml", &text);
    assert_eq!(ok(&["defaults", "--config", p(&cfg)]), text);
    let fig = ok(&["defaults", "--preset", "fig3"]);
    assert!(fig.contains("mode = \"both\""));
}

#[test]
fn usage_errors_exit_2() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("o");
    let bad = write_config(&t, "bad.toml", "[channel]\ncluster_rate = -0.5\n");
    let o = uwblab(&["generate-channel", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cluster_rate"));

    let typo = write_config(&t, "typo.toml", "[system]\nusers_ = 3\n");
    assert_eq!(code(&uwblab(&["analyze", "--config", p(&typo), "--out", p(&out)])), 2);
    assert_eq!(code(&uwblab(&["analyze", "--preset", "table9", "--out", p(&out)])), 2);
    assert_eq!(code(&uwblab(&["analyze", "--snr", "10:0:20", "--out", p(&out)])), 2);
    assert_eq!(code(&uwblab(&["analyze", "--config", "/nonexistent.toml", "--out", p(&out)])), 2);
    assert_eq!(code(&uwblab(&["frobnicate"])), 2);
    assert_eq!(code(&uwblab(&[])), 2);

    let o = uwblab(&["simulate", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn channel_file_digest_is_stable() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for d in [&a, &b] {
        ok(&["generate-channel", "--seed", "11", "--count", "1", "--out", p(d)]);
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["command"], "generate-channel");
    assert_eq!(ma["seed"], 11);
    // Recorded digests match the files.
    for o in ma["outputs"].as_array().unwrap() {
        let bytes = std::fs::read(a.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), o["sha256"].as_str().unwrap());
        assert_eq!(bytes.len() as u64, o["bytes"].as_u64().unwrap());
    }
    let other = t.path().join("c");
    ok(&["generate-channel", "--seed", "12", "--count", "1", "--out", p(&other)]);
    assert_ne!(read(a.join("channels/channel_00000.csv")), read(other.join("channels/channel_00000.csv")));
}

/// RMS delay spread of one emitted realization, parsed from its tap rows.
fn rms_from_file(path: &Path) -> f64 {
    let (mut e, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for line in read(path).lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (delay, pw) = (f[1] + f[2], f[3] * f[3]);
        e += pw;
        m1 += pw * delay;
        m2 += pw * delay * delay;
    }
    let mean = m1 / e;
    (m2 / e - mean * mean).max(0.0).sqrt()
}

#[test]
fn ensemble_delay_spread_matches_offline_recomputation() {
    let t = TempDir::new().unwrap();
    let out = t.path().join("ens");
    let n = 1000;
    let stdout = ok(&["generate-channel", "--seed", "2", "--count", &n.to_string(), "--out", p(&out)]);
    let reported: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("mean rms delay spread: "))
        .and_then(|s| s.trim_end_matches(" ns").parse().ok())
        .expect("summary line");
    let files: Vec<PathBuf> = (0..n).map(|i| out.join(format!("channels/channel_{i:05}.csv"))).collect();
    let offline = files.iter().map(|f| rms_from_file(f)).sum::<f64>() / n as f64;
    assert!((offline / reported - 1.0).abs() < 0.10, "{offline} vs {reported}");
    assert_eq!(column(out.join("channels.csv"), "index").len(), n);
    // Office LOS spreads are some ns to tens of ns.
    assert!(reported > 1.0 && reported < 50.0, "{reported}");
}

#[test]
fn pulse_design_reports_band_and_compliance() {
    let t = TempDir::new().unwrap();
    for (band, edges) in [("lower", "[3244, 4742] MHz"), ("upper", "[5944, 10234] MHz")] {
        let out = t.path().join(band);
        let s = ok(&["design-pulse", "--band", band, "--out", p(&out)]);
        assert!(s.contains(&format!("passband: {edges}")), "{s}");
        assert!(s.contains("compliant: true"));
        let report: serde_json::Value = serde_json::from_str(&read(out.join("mask_report.json"))).unwrap();
        assert_eq!(report["compliant"], true);
        assert_eq!(report["band"], band);
        assert!(report["worst_margin_db"].as_f64().unwrap() <= 0.0);
        for f in ["pulse.csv", "psd.csv", "autocorrelation.csv"] {
            assert!(out.join(f).exists());
        }
        let r = floats(&column(out.join("autocorrelation.csv"), "r"));
        assert!((r[0] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn interference_tables_follow_rate_structure() {
    let t = TempDir::new().unwrap();
    let run = |preset: &str| {
        let out = t.path().join(preset);
        ok(&["analyze", "--preset", preset, "--out", p(&out)]);
        out.join("table.csv")
    };
    let (t1, t2, t3) = (run("table1"), run("table2"), run("table3"));
    assert!(floats(&column(&t3, "isi")).iter().all(|&x| x == 0.0));
    assert_eq!(column(&t1, "iasi"), column(&t2, "iasi"));
    let (i1, i2) = (floats(&column(&t1, "isi")), floats(&column(&t2, "isi")));
    assert!(i1[0] > i2[0] && i2[0] > 0.0);
    assert_eq!(column(&t1, "users"), ["1", "8", "16"]);
    let mui = floats(&column(&t1, "mui"));
    assert!(mui[0] == 0.0 && mui[1] > 0.0 && mui[2] > mui[1]);
}

#[test]
fn analysis_is_byte_identical_and_replayable() {
    let t = TempDir::new().unwrap();
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    let cfg = write_config(&t, "rates.toml", "[run]\nrates = [6.81, 0.11]\nusers = [1, 4]\nsnr = \"0:5:40\"\n");
    for d in [&a, &b] {
        ok(&["analyze", "--config", p(&cfg), "--out", p(d)]);
    }
    for f in ["analytic_ber.csv", "budget.csv"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    assert_eq!(column(a.join("analytic_ber.csv"), "snr_db").len(), 2 * 2 * 9);
    ok(&["analyze", "--config", p(&a.join("manifest.json")), "--out", p(&c)]);
    assert_eq!(manifest(&a)["outputs"], manifest(&c)["outputs"]);
    assert_eq!(manifest(&a)["config"], manifest(&c)["config"]);
}

#[test]
fn pulse_file_feeds_the_analysis() {
    let t = TempDir::new().unwrap();
    let pulse_dir = t.path().join("pulse");
    ok(&["design-pulse", "--out", p(&pulse_dir)]);
    let cfg = write_config(&t, "file.toml", &format!("[pulse]\nfile = \"{}\"\n", p(&pulse_dir.join("pulse.csv"))));
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["analyze", "--preset", "table3", "--out", p(&a)]);
    ok(&["analyze", "--preset", "table3", "--config", p(&cfg), "--out", p(&b)]);
    let (x, y) = (floats(&column(a.join("table.csv"), "iasi")), floats(&column(b.join("table.csv"), "iasi")));
    assert!((x[0] / y[0] - 1.0).abs() < 1e-4, "{} vs {}", x[0], y[0]);
}

#[test]
fn seeded_simulation_is_reproducible() {
    let t = TempDir::new().unwrap();
    let cfg =
        write_config(&t, "mc.toml", "[system]\nusers = 2\n[run]\nsnr = \"0:4:8\"\nmin_errors = 50\nmax_bits = 20000\nbatch_blocks = 8\n");
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| t.path().join(d)).collect();
    ok(&["simulate", "--config", p(&cfg), "--seed", "5", "--threads", "1", "--out", p(&dirs[0])]);
    ok(&["simulate", "--config", p(&cfg), "--seed", "5", "--threads", "3", "--out", p(&dirs[1])]);
    ok(&["simulate", "--config", p(&cfg), "--seed", "6", "--out", p(&dirs[2])]);
    for f in ["mc_ber.csv", "mc_components.csv"] {
        assert_eq!(read(dirs[0].join(f)), read(dirs[1].join(f)), "{f}");
    }
    assert_ne!(read(dirs[0].join("mc_components.csv")), read(dirs[2].join("mc_components.csv")));
    let errors: Vec<u64> = column(dirs[0].join("mc_ber.csv"), "errors").iter().map(|s| s.parse().unwrap()).collect();
    assert!(errors.iter().all(|&e| e >= 50));
    // Replaying the manifest reproduces the counts bit for bit.
    let d = t.path().join("replay");
    ok(&["simulate", "--config", p(&dirs[0].join("manifest.json")), "--out", p(&d)]);
    assert_eq!(manifest(&dirs[0])["outputs"], manifest(&d)["outputs"]);
}

#[test]
fn joint_output_tracks_analytic_curve() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(
        &t,
        "joint.toml",
        "[system]\ndata_rate_mbps = 6.81\n[run]\nmode = \"both\"\nsnr = \"10:4:14\"\nmin_errors = 1000000\nmax_bits = 200000\n",
    );
    let out = t.path().join("j");
    ok(&["simulate", "--config", p(&cfg), "--seed", "42", "--out", p(&out)]);
    let j = out.join("joint.csv");
    let errors: Vec<u64> = column(&j, "errors").iter().map(|s| s.parse().unwrap()).collect();
    let ratio = floats(&column(&j, "log10_ratio"));
    assert_eq!(errors.len(), 2);
    for (e, r) in errors.iter().zip(&ratio) {
        assert!(*e >= 100);
        assert!(r.abs() < 2f64.log10(), "log10 ratio {r}");
    }
}
