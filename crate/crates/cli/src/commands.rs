use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use flhhe_core::lhe::LheContext;
use flhhe_core::mlp::{self, load_mnist, Mnist, ModelWeights, PARAM_COUNT};
use flhhe_core::proto::report::{fmt_bytes, Report};
use flhhe_core::proto::{client_partition, derive_nonce, derive_rng, run_experiment, setup_messages, wire, DealerKeys, Mode, MsgKind};
use flhhe_core::quantizer;
use flhhe_core::stream::{ShallowStream, LANES};
use flhhe_core::transcipher;

use crate::{CliError, CliResult, Resolved};

fn load_data(dir: &Path) -> CliResult<Mnist> {
    load_mnist(dir).map_err(|e| CliError::io(format!("cannot load MNIST from {}: {e}", dir.display())))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn dealer_keys(r: &Resolved, ctx: &LheContext) -> CliResult<DealerKeys> {
    let cfg = &r.experiment;
    Ok(match &r.keys {
        Some(dir) => DealerKeys::load(ctx, dir, cfg.clients)?,
        None => DealerKeys::generate(ctx, cfg.clients, cfg.seed)?,
    })
}

pub fn keygen(r: &Resolved, as_json: bool) -> CliResult<()> {
    let cfg = &r.experiment;
    let ctx = LheContext::new(cfg.params.clone())?;
    let keys = DealerKeys::generate(&ctx, cfg.clients, cfg.seed)?;
    let dir = r.out.clone().unwrap_or_else(|| PathBuf::from("keys"));
    keys.save(&ctx, &dir)?;
    // Sizes come from the same messages the simulator ledgers at setup.
    let msgs = setup_messages(&ctx, &keys, Mode::Hhe);
    let total: usize = msgs.iter().map(|m| m.bytes.len()).sum();
    if as_json {
        let files: Vec<_> = keys
            .files(&ctx)?
            .into_iter()
            .map(|(name, bytes)| json!({ "name": name, "bytes": bytes.len() }))
            .collect();
        let messages: Vec<_> = msgs
            .iter()
            .map(|m| json!({ "from": m.from.to_string(), "to": m.to.to_string(), "kind": m.kind.name(), "bytes": m.bytes.len() }))
            .collect();
        print_json(&json!({ "dir": dir, "files": files, "messages": messages, "setup_key_bytes": total }));
        return Ok(());
    }
    println!("keys written to {}", dir.display());
    println!("{:<8} {:<10} {:<14} {:>12}", "from", "to", "message", "bytes");
    for m in &msgs {
        println!("{:<8} {:<10} {:<14} {:>12}", m.from.to_string(), m.to.to_string(), m.kind.name(), m.bytes.len());
    }
    println!("{:<33} {:>12}  ({})", "total", total, fmt_bytes(total));
    Ok(())
}

pub fn run(r: &Resolved, as_json: bool) -> CliResult<()> {
    let cfg = &r.experiment;
    let data = load_data(&r.data_dir)?;
    let ctx = LheContext::new(cfg.params.clone())?;
    let keys = dealer_keys(r, &ctx)?;
    let report = run_experiment(cfg, &data, Some(keys))?;
    let out = r.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let files = report.write(&out)?;
    if as_json {
        print!("{}", report.summary_json());
        return Ok(());
    }
    print_tables(&report);
    println!("\nwrote {}", files.summary.display());
    println!("wrote {}", files.ledger.display());
    println!("wrote {}", files.scaling.display());
    for m in &files.models {
        println!("wrote {}", m.display());
    }
    Ok(())
}

fn print_tables(report: &Report) {
    println!("config {} ({} clients, {} rounds)", report.config_hash, report.config.clients, report.config.rounds);
    println!("\ncommunication per client per round");
    print!("{}", report.communication_table());
    println!("\naccuracy after the last round");
    print!("{}", report.accuracy_table());
    println!("\none-time setup");
    print!("{}", report.setup_table());
}

fn find_summary(path: &Path) -> CliResult<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    let entries = fs::read_dir(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("summary-") && n.ends_with(".json")))
        .collect();
    found.sort();
    match found.len() {
        0 => Err(CliError::io(format!("no summary-*.json in {}", path.display()))),
        1 => Ok(found.remove(0)),
        _ => Err(CliError::config(format!("{} holds several reports; name one summary file", path.display()))),
    }
}

pub fn report(path: &Path, out: Option<&Path>, as_json: bool) -> CliResult<()> {
    let report = Report::load(&find_summary(path)?)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("scaling-{}.csv", report.config_hash)), report.scaling_csv())?;
    }
    if as_json {
        print!("{}", report.summary_json());
        return Ok(());
    }
    print_tables(&report);
    println!("\ncommunication over {} rounds vs clients (CSV)", flhhe_core::proto::report::SCALING_ROUNDS);
    print!("{}", report.scaling_csv());
    Ok(())
}

struct Timer {
    rows: Vec<(&'static str, &'static str, f64)>,
    iters: usize,
}

impl Timer {
    /// Mean wall time of `f` over the iterations, in milliseconds.
    fn stage<T>(&mut self, role: &'static str, task: &'static str, mut f: impl FnMut() -> CliResult<T>) -> CliResult<T> {
        let mut last = None;
        let start = Instant::now();
        for _ in 0..self.iters {
            last = Some(f()?);
        }
        self.rows.push((role, task, start.elapsed().as_secs_f64() * 1e3 / self.iters as f64));
        Ok(last.expect("at least one iteration"))
    }
}

/// Per-stage timings for one client and the server's per-client work.
pub fn bench(r: &Resolved, iters: usize, as_json: bool) -> CliResult<()> {
    let cfg = &r.experiment;
    if iters == 0 {
        return Err(CliError::config("--iters must be at least 1"));
    }
    let data = load_data(&r.data_dir)?;
    let ctx = LheContext::new(cfg.params.clone())?;
    let keys = dealer_keys(r, &ctx)?;
    let (t, delta, k) = (cfg.params.t, cfg.params.delta, cfg.clients);
    let stream = ShallowStream::new(t, ctx.degree());
    let batches = wire::batch_ranges(PARAM_COUNT, cfg.params.batch_capacity(LANES));
    let part = client_partition(&data.train, 0, k, cfg.sample_cap);
    let mut timer = Timer { rows: Vec::new(), iters };

    let model = timer.stage("client", "local training", || {
        let mut w = ModelWeights::he_uniform(&mut derive_rng(cfg.seed, "init-model", 0, 0));
        mlp::train_epochs(&mut w, &part, &cfg.train, &mut derive_rng(cfg.seed, "train", 0, 1))?;
        w.round_to_f32();
        Ok(w)
    })?;
    let q = quantizer::quantize(&model.flatten(), delta, t);
    let nonces: Vec<_> = (0..batches.len()).map(|b| derive_nonce(cfg.seed, 0, 1, b)).collect();
    let streams = timer.stage("client", "keystream generation (offline)", || {
        Ok(batches
            .iter()
            .zip(&nonces)
            .map(|(r, n)| stream.keystream(&keys.sym_keys[0], n, r.len().div_ceil(LANES)))
            .collect::<Vec<_>>())
    })?;
    timer.stage("client", "symmetric encryption (online)", || {
        Ok(batches
            .iter()
            .zip(&streams)
            .map(|(r, z)| q.values[r.clone()].iter().enumerate().map(|(j, &m)| ((m + z.element(j)) % t) as u32).collect::<Vec<_>>())
            .collect::<Vec<_>>())
    })?;
    let parts = batches
        .iter()
        .zip(&nonces)
        .map(|(r, n)| stream.encrypt(&keys.sym_keys[0], *n, &q.values[r.clone()]))
        .collect::<Result<Vec<_>, _>>()?;
    timer.stage("client", "HE encryption (he mode)", || {
        let mut rng = derive_rng(cfg.seed, "he-upload", 0, 1);
        Ok(batches
            .iter()
            .map(|r| transcipher::encrypt_lanes(&ctx, &keys.pk, &q.values[r.clone()], &mut rng))
            .collect::<Result<Vec<_>, _>>()?)
    })?;
    let zs = timer.stage("server", "keystream evaluation (offline)", || {
        Ok(parts
            .iter()
            .map(|p| transcipher::eval_keystream(&ctx, &keys.rlk, &stream, &keys.enc_sym_keys[0], &p.nonce))
            .collect::<Result<Vec<_>, _>>()?)
    })?;
    let sets = timer.stage("server", "transcipher (decomp)", || {
        Ok(parts.iter().zip(&zs).map(|(p, z)| transcipher::decomp_all(&ctx, p, z)).collect::<Result<Vec<_>, _>>()?)
    })?;
    let sums = timer.stage("server", "aggregation (all clients)", || {
        Ok(sets
            .iter()
            .map(|s| transcipher::hhe_eval_sum(&ctx, &vec![s.clone(); k], cfg.params.max_clients))
            .collect::<Result<Vec<_>, _>>()?)
    })?;
    let download = wire::lane_sets_to_bytes(&ctx, &sums);
    timer.stage("client", "decrypt global model", || {
        let sets = wire::lane_sets_from_bytes(&ctx, &download, PARAM_COUNT)?;
        let v: Vec<u64> = sets.iter().flat_map(|s| transcipher::decrypt_lanes(&ctx, &keys.sk, s)).collect();
        let s = quantizer::QuantizedWeights::from_sum(v, delta, t);
        Ok(ModelWeights::unflatten(&quantizer::dequantize_sum(&s, k)?)?)
    })?;

    let sizes = [
        (MsgKind::SymUpload, wire::sym_uploads_to_bytes(&parts, t).len()),
        (MsgKind::EncryptedSum, download.len()),
    ];
    if as_json {
        let rows: Vec<_> = timer.rows.iter().map(|(role, task, ms)| json!({ "role": role, "task": task, "millis": ms })).collect();
        let sizes: Vec<_> = sizes.iter().map(|(kind, b)| json!({ "kind": kind.name(), "bytes": b })).collect();
        print_json(&json!({ "degree": ctx.degree(), "clients": k, "iters": iters, "stages": rows, "sizes": sizes }));
        return Ok(());
    }
    println!("N = {}, {} clients, {} batch(es) per model, mean of {iters} run(s)", ctx.degree(), k, batches.len());
    println!("{:<8} {:<34} {:>12}", "role", "task", "ms");
    for (role, task, ms) in &timer.rows {
        println!("{role:<8} {task:<34} {ms:>12.2}");
    }
    for (kind, b) in sizes {
        println!("{:<8} {:<34} {:>12}", "size", kind.name(), fmt_bytes(b));
    }
    Ok(())
}
