//! Federated-averaging simulator: a dealer, K clients and one server that
//! exchange serialized byte buffers in-process.
//!
//! Every message is serialized, logged on both ends in the [`CommLedger`]
//! and parsed by the receiver. Plain mode averages f32 weights on the
//! server. HE mode uploads lane-encrypted quantized weights. HHE mode
//! uploads symmetric ciphertexts which the server transciphers with the
//! encrypted cipher keys. In both encrypted modes the server returns the
//! encrypted sum and clients divide by `K Δ` after decryption.

pub mod ledger;
pub mod report;
pub mod roles;
pub mod wire;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};

use crate::error::{Error, Result};
use crate::lhe::LheContext;
use crate::mlp::{self, DataPartition, Mnist, ModelWeights, TrainConfig};
use crate::quantizer::{self, QuantizedWeights};
use crate::ring::RingParams;
use crate::stream::{Nonce, SymCiphertext, LANES};
use crate::transcipher::{self, LaneSet};

pub use ledger::{Clock, CommLedger, Direction, Entity, LedgerEntry, MsgKind, SETUP_ROUND};
pub use report::{ModeTotals, Report, RoundSummary, ScalingPoint};
pub use roles::{setup_messages, ClientState, DealerKeys, ServerState, SetupMessage, StateGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    He,
    Hhe,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Plain, Mode::He, Mode::Hhe];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::He => "he",
            Mode::Hhe => "hhe",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (expected plain, he or hhe)")))
    }
}

/// Labels each of the three training partitions leaves out.
pub const PARTITION_EXCLUSIONS: [[u8; 3]; 3] = [[1, 3, 7], [2, 5, 8], [4, 6, 9]];

/// The four evaluation sets: everything, then each excluded label group.
pub const TEST_SETS: [(&str, &[u8]); 4] = [("all", &[]), ("1-3-7", &[1, 3, 7]), ("2-5-8", &[2, 5, 8]), ("4-6-9", &[4, 6, 9])];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub modes: Vec<Mode>,
    pub clients: usize,
    pub rounds: usize,
    pub train: TrainConfig,
    pub params: RingParams,
    pub seed: u64,
    /// Training samples per client; `None` uses the whole shard.
    pub sample_cap: Option<usize>,
    /// Samples per test set; `None` uses all of them.
    pub test_cap: Option<usize>,
    /// Run clients (and the server's per-client work) on the rayon pool.
    /// An execution choice, not part of the experiment: never serialized.
    #[serde(skip)]
    pub parallel: bool,
    pub clock: Clock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            modes: Mode::ALL.to_vec(),
            clients: 3,
            rounds: 10,
            train: TrainConfig::default(),
            params: RingParams::default(),
            seed: 1,
            sample_cap: None,
            test_cap: None,
            parallel: true,
            clock: Clock::Wall,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.modes.is_empty() {
            return Err(Error::Config("no modes selected".into()));
        }
        if self.clients == 0 || self.clients > self.params.max_clients {
            return Err(Error::Config(format!(
                "{} clients outside 1..={} allowed by delta = {}",
                self.clients, self.params.max_clients, self.params.delta
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.train.batch == 0 || !(self.train.lr > 0.0 && self.train.lr.is_finite()) {
            return Err(Error::Config("batch must be positive and lr a positive number".into()));
        }
        Ok(())
    }

    /// First 8 bytes of SHA3-256 over the config JSON, in hex. The clock
    /// only changes ledger timings, so it is left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.clock = Clock::Wall;
        let json = serde_json::to_vec(&c).expect("config serializes");
        let d = Sha3_256::digest(&json);
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn derive_bytes(seed: u64, label: &str, a: u64, b: u64, c: u64) -> [u8; 32] {
    let mut h = Sha3_256::new();
    h.update(b"flhhe/derive/v1");
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for x in [a, b, c] {
        h.update(x.to_le_bytes());
    }
    h.finalize().into()
}

/// Independent RNG stream per (purpose, entity, round).
pub fn derive_rng(seed: u64, label: &str, entity: u64, round: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_bytes(seed, label, entity, round, 0))
}

/// Public nonce of one upload batch. The server can compute it ahead of the
/// upload and run the keystream evaluation offline.
pub fn derive_nonce(seed: u64, client: usize, round: usize, batch: usize) -> Nonce {
    let d = derive_bytes(seed, "nonce", client as u64, round as u64, batch as u64);
    Nonce(d[..16].try_into().expect("16 bytes"))
}

/// Training shard of client `k` of `clients`. Clients cycle through the
/// three partitions and split a shared partition by stride.
pub fn client_partition(train: &Arc<mlp::Dataset>, k: usize, clients: usize, cap: Option<usize>) -> DataPartition {
    let p = k % PARTITION_EXCLUSIONS.len();
    let sharing = (clients + PARTITION_EXCLUSIONS.len() - 1 - p) / PARTITION_EXCLUSIONS.len();
    mlp::partition_exclude(train, &PARTITION_EXCLUSIONS[p]).shard(k / PARTITION_EXCLUSIONS.len(), sharing, cap)
}

pub fn test_sets(test: &Arc<mlp::Dataset>, cap: Option<usize>) -> Vec<DataPartition> {
    TEST_SETS.iter().map(|(_, keep)| mlp::filter_labels(test, keep).shard(0, 1, cap)).collect()
}

/// Top-1 accuracy on each of [`TEST_SETS`], in order.
pub fn evaluate_all(w: &ModelWeights, sets: &[DataPartition]) -> Result<Vec<f64>> {
    sets.iter().map(|s| mlp::evaluate(w, s)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundResult {
    pub round: usize,
    pub mode: Mode,
    /// The global model every client holds after the round.
    pub model: ModelWeights,
    pub accuracies: Vec<f64>,
    /// `max_i |global_i - mean_k local_k,i|` over the clients' uploaded (f32) models.
    pub oracle_gap: f64,
    /// Decrypted aggregate in `Z_t` (encrypted modes).
    pub decrypted_sum: Option<Vec<u64>>,
    /// Sum of the clients' quantized uploads mod t, computed in the clear.
    pub oracle_sum: Option<Vec<u64>>,
    /// Mean training loss of the last local epoch, averaged over clients.
    pub train_loss: f64,
    pub ledger: CommLedger,
}

struct Upload {
    flat: Vec<f64>,
    quantized: Option<QuantizedWeights>,
    bytes: Vec<u8>,
    loss: f64,
    millis: f64,
}

/// Runs `f` over every client, on the rayon pool if `parallel`. Results
/// come back in client order either way.
fn over_clients<T: Send>(
    clients: &mut [ClientState],
    parallel: bool,
    f: impl Fn(&mut ClientState) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel {
        clients.par_iter_mut().map(f).collect()
    } else {
        clients.iter_mut().map(f).collect()
    }
}

fn over_indices<T: Send>(n: usize, parallel: bool, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// One mode of one experiment.
pub struct Simulation {
    cfg: ExperimentConfig,
    mode: Mode,
    ctx: LheContext,
    clients: Vec<ClientState>,
    server: ServerState,
    test_sets: Vec<DataPartition>,
    ledger: CommLedger,
    round: usize,
}

impl Simulation {
    /// Dealer setup and initial-model broadcast, logged as round 0.
    pub fn new(cfg: &ExperimentConfig, mode: Mode, data: &Mnist, keys: &DealerKeys) -> Result<Self> {
        cfg.validate()?;
        if keys.clients() != cfg.clients {
            return Err(Error::Config(format!("keys are for {} clients, config has {}", keys.clients(), cfg.clients)));
        }
        if keys.params.fingerprint() != cfg.params.fingerprint() {
            return Err(Error::Config("keys were generated for different parameters".into()));
        }
        let ctx = LheContext::new(cfg.params.clone())?;
        let mut sim = Simulation {
            cfg: cfg.clone(),
            mode,
            clients: (0..cfg.clients)
                .map(|k| ClientState::new(k, client_partition(&data.train, k, cfg.clients, cfg.sample_cap)))
                .collect(),
            server: ServerState::new(ctx.clone(), cfg.clients, &mut derive_rng(cfg.seed, "init-model", 0, 0)),
            ctx,
            test_sets: test_sets(&data.test, cfg.test_cap),
            ledger: CommLedger::new(),
            round: SETUP_ROUND,
        };
        if let Some(c) = sim.clients.iter().find(|c| c.partition().is_empty()) {
            return Err(Error::Config(format!("client {} has no training data", c.id())));
        }
        let clock = cfg.clock;
        let mut msgs = setup_messages(&sim.ctx, keys, mode);
        let initial = wire::plain_model_to_bytes(&sim.server.initial_model().flatten());
        for k in 0..cfg.clients {
            msgs.push(SetupMessage { from: Entity::Server, to: Entity::Client(k), kind: MsgKind::InitialModel, bytes: initial.clone() });
        }
        for m in msgs {
            let sw = clock.start();
            match m.to {
                Entity::Client(k) => sim.clients[k].receive_setup(&sim.ctx, m.kind, &m.bytes)?,
                Entity::Server => sim.server.receive_setup(m.kind, &m.bytes)?,
                Entity::Dealer => unreachable!("nothing is sent to the dealer"),
            }
            sim.log_transfer(SETUP_ROUND, m.from, m.to, m.kind, m.bytes.len(), 0.0, sw.millis());
        }
        Ok(sim)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn global_model(&self) -> &ModelWeights {
        self.clients[0].model()
    }

    #[allow(clippy::too_many_arguments)]
    fn log_transfer(&mut self, round: usize, from: Entity, to: Entity, kind: MsgKind, bytes: usize, send_ms: f64, recv_ms: f64) {
        let mode = self.mode;
        let entry = |entity, direction, millis| LedgerEntry { round, mode, entity, direction, kind, bytes, millis };
        self.ledger.push(entry(from, Direction::Send, send_ms));
        self.ledger.push(entry(to, Direction::Receive, recv_ms));
    }

    fn batches(&self) -> Vec<std::ops::Range<usize>> {
        wire::batch_ranges(mlp::PARAM_COUNT, self.cfg.params.batch_capacity(LANES))
    }

    /// Local training and upload serialization on one client.
    fn client_upload(&self, c: &mut ClientState, round: usize) -> Result<Upload> {
        let cfg = &self.cfg;
        let k = c.id();
        let sw = cfg.clock.start();
        let mut w = c.model().clone();
        let mut rng = derive_rng(cfg.seed, "train", k as u64, round as u64);
        let losses = mlp::train_epochs(&mut w, c.partition(), &cfg.train, &mut rng)?;
        w.round_to_f32();
        let flat = w.flatten();
        let (quantized, bytes) = match self.mode {
            Mode::Plain => (None, wire::plain_model_to_bytes(&flat)),
            Mode::He => {
                let q = quantizer::quantize(&flat, cfg.params.delta, cfg.params.t);
                let mut rng = derive_rng(cfg.seed, "he-upload", k as u64, round as u64);
                let sets = self
                    .batches()
                    .into_iter()
                    .map(|r| transcipher::encrypt_lanes(&self.ctx, c.pk()?, &q.values[r], &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                let bytes = wire::lane_sets_to_bytes(&self.ctx, &sets);
                (Some(q), bytes)
            }
            Mode::Hhe => {
                let q = quantizer::quantize(&flat, cfg.params.delta, cfg.params.t);
                let parts = self
                    .batches()
                    .into_iter()
                    .enumerate()
                    .map(|(b, r)| {
                        self.server.stream().encrypt(c.sym_key()?, derive_nonce(cfg.seed, k, round, b), &q.values[r])
                    })
                    .collect::<Result<Vec<_>>>()?;
                (Some(q), wire::sym_uploads_to_bytes(&parts, cfg.params.t))
            }
        };
        let loss = losses.last().copied().unwrap_or(f64::NAN);
        Ok(Upload { flat, quantized, bytes, loss, millis: sw.millis() })
    }

    /// Server side of one client's HHE upload: parse, check nonces,
    /// evaluate the keystream and unmask every batch.
    fn transcipher_upload(&self, k: usize, parts: &[SymCiphertext]) -> Result<Vec<LaneSet>> {
        let rlk = self.server.rlk()?;
        let key = self.server.enc_sym_key(k)?;
        parts
            .iter()
            .map(|p| {
                let z = transcipher::eval_keystream(&self.ctx, rlk, self.server.stream(), key, &p.nonce)?;
                transcipher::decomp_all(&self.ctx, p, &z)
            })
            .collect()
    }

    /// Client side of the download: the next global model.
    fn client_download(&self, c: &ClientState, bytes: &[u8]) -> Result<(ModelWeights, Option<Vec<u64>>)> {
        match self.mode {
            Mode::Plain => Ok((ModelWeights::unflatten(&wire::plain_model_from_bytes(bytes)?)?, None)),
            Mode::He | Mode::Hhe => {
                let sets = wire::lane_sets_from_bytes(&self.ctx, bytes, mlp::PARAM_COUNT)?;
                let sk = c.sk()?;
                let values: Vec<u64> = sets.iter().flat_map(|s| transcipher::decrypt_lanes(&self.ctx, sk, s)).collect();
                let sum = QuantizedWeights::from_sum(values, self.cfg.params.delta, self.cfg.params.t);
                if !quantizer::sum_in_range(&sum, self.cfg.clients) {
                    return Err(Error::DecryptionFailure(format!(
                        "client {}: decrypted sum outside [-K delta, K delta]",
                        c.id()
                    )));
                }
                let avg = quantizer::dequantize_sum(&sum, self.cfg.clients)?;
                Ok((ModelWeights::unflatten(&avg)?, Some(sum.values)))
            }
        }
    }

    pub fn run_round(&mut self) -> Result<RoundResult> {
        let round = self.round + 1;
        let parallel = self.cfg.parallel;
        let t = self.cfg.params.t;
        let first_entry = self.ledger.len();

        let mut clients = std::mem::take(&mut self.clients);
        let uploads = over_clients(&mut clients, parallel, |c| self.client_upload(c, round));
        self.clients = clients;
        let uploads = uploads?;

        let kind_up = match self.mode {
            Mode::Plain => MsgKind::PlainModel,
            Mode::He => MsgKind::HeUpload,
            Mode::Hhe => MsgKind::SymUpload,
        };

        // Server: parse each upload (and transcipher it in HHE mode).
        if self.mode == Mode::Hhe {
            for (k, u) in uploads.iter().enumerate() {
                for p in wire::sym_uploads_from_bytes(&u.bytes, t)? {
                    self.server.admit_nonce(k, p.nonce)?;
                }
            }
        }
        let received = over_indices(uploads.len(), parallel, |k| {
            let sw = self.cfg.clock.start();
            let parsed = match self.mode {
                Mode::Plain => Received::Plain(wire::plain_model_from_bytes(&uploads[k].bytes)?),
                Mode::He => Received::Lanes(wire::lane_sets_from_bytes(&self.ctx, &uploads[k].bytes, mlp::PARAM_COUNT)?),
                Mode::Hhe => Received::Lanes(self.transcipher_upload(k, &wire::sym_uploads_from_bytes(&uploads[k].bytes, t)?)?),
            };
            Ok((parsed, sw.millis()))
        })?;
        for (k, (u, (_, recv_ms))) in uploads.iter().zip(&received).enumerate() {
            self.log_transfer(round, Entity::Client(k), Entity::Server, kind_up, u.bytes.len(), u.millis, *recv_ms);
        }

        // Server: aggregate and serialize the download.
        let sw = self.cfg.clock.start();
        let (kind_down, download) = match self.mode {
            Mode::Plain => {
                let n = uploads.len() as f64;
                let mut avg = vec![0.0; mlp::PARAM_COUNT];
                for (r, _) in &received {
                    let Received::Plain(w) = r else { unreachable!() };
                    for (a, x) in avg.iter_mut().zip(w) {
                        *a += x;
                    }
                }
                avg.iter_mut().for_each(|a| *a /= n);
                (MsgKind::PlainModel, wire::plain_model_to_bytes(&avg))
            }
            Mode::He | Mode::Hhe => {
                let per_client: Vec<&Vec<LaneSet>> = received
                    .iter()
                    .map(|(r, _)| match r {
                        Received::Lanes(l) => l,
                        Received::Plain(_) => unreachable!(),
                    })
                    .collect();
                let sums = (0..self.batches().len())
                    .map(|b| {
                        let sets: Vec<LaneSet> = per_client.iter().map(|c| c[b].clone()).collect();
                        transcipher::hhe_eval_sum(&self.ctx, &sets, self.cfg.params.max_clients)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (MsgKind::EncryptedSum, wire::lane_sets_to_bytes(&self.ctx, &sums))
            }
        };
        let aggregate_ms = sw.millis();

        // Clients: parse, decrypt and adopt the new global model.
        let downloads = over_indices(self.clients.len(), parallel, |k| {
            let sw = self.cfg.clock.start();
            let r = self.client_download(&self.clients[k], &download)?;
            Ok((r, sw.millis()))
        })?;
        for (k, (_, recv_ms)) in downloads.iter().enumerate() {
            self.log_transfer(round, Entity::Server, Entity::Client(k), kind_down, download.len(), aggregate_ms, *recv_ms);
        }
        let mut results = downloads.into_iter().map(|(r, _)| r);
        let (model, decrypted_sum) = results.next().expect("at least one client");
        if results.any(|(m, _)| m != model) {
            return Err(Error::DecryptionFailure("clients decrypted different global models".into()));
        }
        for c in self.clients.iter_mut() {
            c.set_model(model.clone());
        }

        let n = uploads.len() as f64;
        let global = model.flatten();
        let oracle_gap = (0..mlp::PARAM_COUNT)
            .map(|i| (global[i] - uploads.iter().map(|u| u.flat[i]).sum::<f64>() / n).abs())
            .fold(0.0, f64::max);
        let oracle_sum = match self.mode {
            Mode::Plain => None,
            _ => {
                let parts: Vec<&QuantizedWeights> = uploads.iter().filter_map(|u| u.quantized.as_ref()).collect();
                Some(quantizer::sum_mod(&parts)?.values)
            }
        };
        let accuracies = evaluate_all(&model, &self.test_sets)?;
        self.round = round;
        Ok(RoundResult {
            round,
            mode: self.mode,
            model,
            accuracies,
            oracle_gap,
            decrypted_sum,
            oracle_sum,
            train_loss: uploads.iter().map(|u| u.loss).sum::<f64>() / n,
            ledger: CommLedger::from_entries(self.ledger.entries()[first_entry..].to_vec()),
        })
    }
}

enum Received {
    Plain(Vec<f64>),
    Lanes(Vec<LaneSet>),
}

/// Runs every configured mode from the same keys and seed, then builds the report.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Mnist, keys: Option<DealerKeys>) -> Result<Report> {
    cfg.validate()?;
    let keys = match keys {
        Some(k) => k,
        None => DealerKeys::generate(&LheContext::new(cfg.params.clone())?, cfg.clients, cfg.seed)?,
    };
    let mut ledger = CommLedger::new();
    let mut rounds = Vec::new();
    let mut models = Vec::new();
    for &mode in &cfg.modes {
        let mut sim = Simulation::new(cfg, mode, data, &keys)?;
        for _ in 0..cfg.rounds {
            let r = sim.run_round()?;
            log::info!(
                "{mode} round {}: accuracy {:?}, gap {:.2e}",
                r.round,
                r.accuracies.iter().map(|a| format!("{:.2}%", 100.0 * a)).collect::<Vec<_>>(),
                r.oracle_gap
            );
            rounds.push(RoundSummary::from_result(&r));
        }
        models.push((mode, sim.global_model().clone()));
        ledger.extend(sim.ledger);
    }
    Ok(Report::new(cfg.clone(), rounds, ledger, models))
}
