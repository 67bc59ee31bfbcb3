use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flhhe_core::lhe::LheContext;
use flhhe_core::proto::{CommLedger, DealerKeys, Direction};
use flhhe_core::ring::RingParams;
use flhhe_core::SlotVector;
use rand::SeedableRng;

fn data_dir() -> PathBuf {
    std::env::var_os("FLHHE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn flhhe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flhhe"))
        .args(args)
        .env("FLHHE_MNIST_DIR", data_dir())
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const QUICK: [&str; 10] = ["--preset", "toy", "--sample-cap", "200", "--test-cap", "300", "--rounds", "1", "--seed", "5"];

#[test]
fn keygen_is_deterministic_and_keys_work() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&flhhe(&["keygen", "--preset", "toy", "--clients", "2", "--seed", "3", "--out", p(&a)]));
    ok(&flhhe(&["keygen", "--preset", "toy", "--clients", "2", "--seed", "3", "--out", p(&b)]));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4 + 2 * 2);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?} differs");
    }

    // The stored secret key decrypts a probe encrypted under the stored public key.
    let ctx = LheContext::new(RingParams::toy()).unwrap();
    let keys = DealerKeys::load(&ctx, &a, 2).unwrap();
    let probe: Vec<u64> = (0..ctx.degree() as u64).map(|i| (i * 7919) % ctx.t()).collect();
    let v = SlotVector::new(probe, ctx.t()).unwrap();
    let ct = ctx.encrypt(&keys.pk, &v, &mut rand_chacha::ChaCha20Rng::seed_from_u64(1)).unwrap();
    assert_eq!(ctx.decrypt(&keys.sk, &ct), v);
}

#[test]
fn keygen_sizes_sum_to_ledgered_setup_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let keys = tmp.path().join("keys");
    let out = tmp.path().join("out");
    let kg: serde_json::Value =
        serde_json::from_str(&ok(&flhhe(&["--json", "keygen", "--preset", "toy", "--clients", "3", "--seed", "5", "--out", p(&keys)]))).unwrap();
    let lines: u64 = kg["messages"].as_array().unwrap().iter().map(|m| m["bytes"].as_u64().unwrap()).sum();
    assert_eq!(lines, kg["setup_key_bytes"].as_u64().unwrap());

    let mut args = vec!["run", "--mode", "hhe", "--clients", "3", "--keys", p(&keys), "--out", p(&out)];
    args.extend(QUICK);
    let summary: serde_json::Value = serde_json::from_str(&ok(&flhhe(&[&["--json"], &args[..]].concat()))).unwrap();
    let hash = summary["config_hash"].as_str().unwrap();
    let ledger = CommLedger::from_csv(&fs::read_to_string(out.join(format!("ledger-{hash}.csv"))).unwrap()).unwrap();
    let ledgered = ledger.bytes_where(|e| e.round == 0 && e.direction == Direction::Send && e.kind.is_key_material());
    assert_eq!(ledgered as u64, lines);
}

#[test]
fn run_then_report_prints_send_receive_total_per_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut args = vec!["run", "--clients", "3", "--out", p(&out), "--frozen-clock"];
    args.extend(QUICK);
    ok(&flhhe(&args));
    let text = ok(&flhhe(&["report", p(&out)]));
    let header = text.lines().find(|l| l.starts_with("mode") && l.contains("send")).unwrap();
    assert_eq!(header.split_whitespace().collect::<Vec<_>>(), ["mode", "send", "receive", "total"]);
    for m in ["plain", "he", "hhe"] {
        assert!(text.lines().any(|l| l.starts_with(m) && l.contains("kB")), "no row for {m}");
    }
    assert!(text.contains("mode,clients,rounds,total_bytes\nplain,1,10,"));
    let json: serde_json::Value = serde_json::from_str(&ok(&flhhe(&["--json", "report", p(&out)]))).unwrap();
    assert_eq!(json["totals"].as_array().unwrap().len(), 3);

    // Same seed, same bytes.
    let again = tmp.path().join("again");
    let mut args2 = vec!["run", "--clients", "3", "--out", p(&again), "--frozen-clock", "--serial"];
    args2.extend(QUICK);
    ok(&flhhe(&args2));
    for e in fs::read_dir(&out).unwrap() {
        let name = e.unwrap().file_name();
        assert_eq!(fs::read(out.join(&name)).unwrap(), fs::read(again.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn config_file_fills_absent_flags_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "mode = \"plain\"\nclients = 2\nrounds = 1\npreset = \"toy\"\nsample_cap = 100\ntest_cap = 100\nlr = 0.05\nseed = 9\n").unwrap();
    let out = tmp.path().join("out");
    let s: serde_json::Value =
        serde_json::from_str(&ok(&flhhe(&["--json", "run", "--config", p(&cfg), "--clients", "1", "--out", p(&out)]))).unwrap();
    assert_eq!(s["config"]["clients"], 1);
    assert_eq!(s["config"]["train"]["lr"], 0.05);
    assert_eq!(s["config"]["seed"], 9);
    assert_eq!(s["config"]["modes"], serde_json::json!(["plain"]));
    assert_eq!(s["config"]["params"]["degree"], 256);

    fs::write(&cfg, "clientz = 2\n").unwrap();
    assert_eq!(flhhe(&["run", "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(flhhe(&["run", "--clients", "40", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(flhhe(&["run", "--delta", "40000", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(flhhe(&["run", "--mode", "fhe"]).status.code(), Some(2));
    assert_eq!(
        flhhe(&["run", "--preset", "toy", "--data-dir", p(&tmp.path().join("none")), "--out", p(&out)]).status.code(),
        Some(4)
    );
    assert_eq!(flhhe(&["report", p(&tmp.path().join("none"))]).status.code(), Some(4));

    // A secret key that does not match the public key breaks decryption.
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&flhhe(&["keygen", "--preset", "toy", "--clients", "1", "--seed", "1", "--out", p(&a)]));
    ok(&flhhe(&["keygen", "--preset", "toy", "--clients", "1", "--seed", "2", "--out", p(&b)]));
    fs::copy(b.join("sk.bin"), a.join("sk.bin")).unwrap();
    let mut args = vec!["run", "--mode", "he", "--clients", "1", "--keys", p(&a), "--out", p(&out)];
    args.extend(QUICK);
    let r = flhhe(&args);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));

    // Keys for other parameters are a configuration error.
    let args = ["run", "--mode", "he", "--clients", "1", "--keys", p(&a), "--preset", "default", "--out", p(&out)];
    assert_eq!(flhhe(&args).status.code(), Some(2));
}

#[test]
fn report_rejects_tampered_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut args = vec!["--json", "run", "--mode", "plain", "--clients", "1", "--out", p(&out)];
    args.extend(QUICK);
    let s: serde_json::Value = serde_json::from_str(&ok(&flhhe(&args))).unwrap();
    let summary = out.join(format!("summary-{}.json", s["config_hash"].as_str().unwrap()));
    let text = fs::read_to_string(&summary).unwrap().replace("\"seed\": 5", "\"seed\": 6");
    fs::write(&summary, text).unwrap();
    assert_eq!(flhhe(&["report", p(&summary)]).status.code(), Some(2));
}
