//! Run reports: the ledger CSV, a summary JSON, plot data and the final
//! models, all named after the config hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ledger::{CommLedger, Direction, Entity, LedgerEntry, SETUP_ROUND};
use super::{ExperimentConfig, Mode, RoundResult, TEST_SETS};
use crate::error::{Error, Result};
use crate::mlp::ModelWeights;

/// Client counts of the communication scaling series.
pub const SCALING_CLIENTS: [usize; 4] = [1, 5, 10, 20];
pub const SCALING_ROUNDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub mode: Mode,
    pub round: usize,
    /// Keyed by test-set name.
    pub accuracies: BTreeMap<String, f64>,
    pub oracle_gap: f64,
    pub train_loss: f64,
    /// Whether the decrypted sum matched the clear sum of quantized uploads.
    pub sum_matches_oracle: Option<bool>,
}

impl RoundSummary {
    pub fn from_result(r: &RoundResult) -> Self {
        RoundSummary {
            mode: r.mode,
            round: r.round,
            accuracies: TEST_SETS.iter().map(|(n, _)| n.to_string()).zip(r.accuracies.iter().copied()).collect(),
            oracle_gap: r.oracle_gap,
            train_loss: r.train_loss,
            sum_matches_oracle: r.decrypted_sum.as_ref().map(|d| Some(d) == r.oracle_sum.as_ref()),
        }
    }
}

/// Byte totals of one mode, from the clients' side of the ledger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeTotals {
    pub mode: Mode,
    /// Client 0, round 1.
    pub send_per_client_round: usize,
    pub receive_per_client_round: usize,
    pub total_per_client_round: usize,
    /// All clients, all rounds, setup excluded.
    pub send_total: usize,
    pub receive_total: usize,
    pub total: usize,
    /// Every setup message, counted once.
    pub setup_bytes: usize,
}

impl ModeTotals {
    pub fn from_ledger(ledger: &CommLedger, mode: Mode) -> Self {
        let client = |e: &LedgerEntry, d: Direction| e.mode == mode && e.direction == d && matches!(e.entity, Entity::Client(_));
        let first = |e: &LedgerEntry, d: Direction| client(e, d) && e.round == 1 && e.entity == Entity::Client(0);
        let send_per_client_round = ledger.bytes_where(|e| first(e, Direction::Send));
        let receive_per_client_round = ledger.bytes_where(|e| first(e, Direction::Receive));
        let send_total = ledger.bytes_where(|e| client(e, Direction::Send) && e.round != SETUP_ROUND);
        let receive_total = ledger.bytes_where(|e| client(e, Direction::Receive) && e.round != SETUP_ROUND);
        ModeTotals {
            mode,
            send_per_client_round,
            receive_per_client_round,
            total_per_client_round: send_per_client_round + receive_per_client_round,
            send_total,
            receive_total,
            total: send_total + receive_total,
            setup_bytes: ledger
                .bytes_where(|e| e.mode == mode && e.round == SETUP_ROUND && e.direction == Direction::Send),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub mode: Mode,
    pub clients: usize,
    pub rounds: usize,
    pub total_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub rounds: Vec<RoundSummary>,
    pub totals: Vec<ModeTotals>,
    pub scaling: Vec<ScalingPoint>,
    #[serde(skip)]
    pub ledger: CommLedger,
    #[serde(skip)]
    pub models: Vec<(Mode, ModelWeights)>,
}

/// Paths written by [`Report::write`].
#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub ledger: PathBuf,
    pub summary: PathBuf,
    pub scaling: PathBuf,
    pub models: Vec<PathBuf>,
}

fn totals_and_scaling(cfg: &ExperimentConfig, ledger: &CommLedger) -> (Vec<ModeTotals>, Vec<ScalingPoint>) {
    let totals: Vec<ModeTotals> = cfg.modes.iter().map(|&m| ModeTotals::from_ledger(ledger, m)).collect();
    let scaling = totals
        .iter()
        .flat_map(|t| {
            SCALING_CLIENTS.iter().map(move |&k| ScalingPoint {
                mode: t.mode,
                clients: k,
                rounds: SCALING_ROUNDS,
                total_bytes: k * t.total_per_client_round * SCALING_ROUNDS,
            })
        })
        .collect();
    (totals, scaling)
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

impl Report {
    pub fn new(config: ExperimentConfig, rounds: Vec<RoundSummary>, ledger: CommLedger, models: Vec<(Mode, ModelWeights)>) -> Self {
        let (totals, scaling) = totals_and_scaling(&config, &ledger);
        Report { config_hash: config.hash(), config, rounds, totals, scaling, ledger, models }
    }

    pub fn totals_for(&self, mode: Mode) -> Option<&ModeTotals> {
        self.totals.iter().find(|t| t.mode == mode)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn scaling_csv(&self) -> String {
        let mut s = String::from("mode,clients,rounds,total_bytes\n");
        for p in &self.scaling {
            s.push_str(&format!("{},{},{},{}\n", p.mode, p.clients, p.rounds, p.total_bytes));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<ReportFiles> {
        fs::create_dir_all(dir)?;
        let h = &self.config_hash;
        let files = ReportFiles {
            ledger: dir.join(format!("ledger-{h}.csv")),
            summary: dir.join(format!("summary-{h}.json")),
            scaling: dir.join(format!("scaling-{h}.csv")),
            models: self.models.iter().map(|(m, _)| dir.join(format!("model-{m}-{h}.bin"))).collect(),
        };
        fs::write(&files.ledger, self.ledger.to_csv())?;
        fs::write(&files.summary, self.summary_json())?;
        fs::write(&files.scaling, self.scaling_csv())?;
        for ((_, w), p) in self.models.iter().zip(&files.models) {
            fs::write(p, w.to_bytes())?;
        }
        Ok(files)
    }

    /// Reads a summary and its ledger. The stored hash must match the
    /// stored config and the stored totals must match the ledger.
    pub fn load(summary: &Path) -> Result<Self> {
        let mut r: Report = serde_json::from_slice(&fs::read(summary)?).map_err(json_err)?;
        if r.config.hash() != r.config_hash {
            return Err(Error::Config(format!(
                "config hash mismatch: file says {}, config hashes to {}",
                r.config_hash,
                r.config.hash()
            )));
        }
        let dir = summary.parent().unwrap_or(Path::new("."));
        let h = &r.config_hash;
        r.ledger = CommLedger::from_csv(&fs::read_to_string(dir.join(format!("ledger-{h}.csv")))?)?;
        let (totals, scaling) = totals_and_scaling(&r.config, &r.ledger);
        if totals != r.totals || scaling != r.scaling {
            return Err(Error::Format("summary totals disagree with the ledger".into()));
        }
        for &m in &r.config.modes {
            let p = dir.join(format!("model-{m}-{h}.bin"));
            if p.exists() {
                r.models.push((m, ModelWeights::from_bytes(&fs::read(p)?)?));
            }
        }
        Ok(r)
    }

    /// Send / Receive / Total per client per round, one row per mode.
    pub fn communication_table(&self) -> String {
        let mut s = format!("{:<6} {:>14} {:>14} {:>14}\n", "mode", "send", "receive", "total");
        for t in &self.totals {
            s.push_str(&format!(
                "{:<6} {:>14} {:>14} {:>14}\n",
                t.mode.name(),
                fmt_bytes(t.send_per_client_round),
                fmt_bytes(t.receive_per_client_round),
                fmt_bytes(t.total_per_client_round)
            ));
        }
        s
    }

    /// Final-round accuracy per mode and test set.
    pub fn accuracy_table(&self) -> String {
        let mut s = format!("{:<6}", "mode");
        for (name, _) in TEST_SETS {
            s.push_str(&format!(" {name:>9}"));
        }
        s.push('\n');
        for &m in &self.config.modes {
            let Some(last) = self.rounds.iter().filter(|r| r.mode == m).max_by_key(|r| r.round) else { continue };
            s.push_str(&format!("{:<6}", m.name()));
            for (name, _) in TEST_SETS {
                s.push_str(&format!(" {:>8.2}%", 100.0 * last.accuracies.get(name).copied().unwrap_or(f64::NAN)));
            }
            s.push('\n');
        }
        s
    }

    /// One-time key distribution, per message kind and recipient role.
    pub fn setup_table(&self) -> String {
        let mut rows: BTreeMap<(Mode, &'static str, &'static str), (usize, usize)> = BTreeMap::new();
        for e in self.ledger.entries().iter().filter(|e| e.round == SETUP_ROUND && e.direction == Direction::Receive) {
            let to = match e.entity {
                Entity::Client(_) => "client",
                Entity::Server => "server",
                Entity::Dealer => "dealer",
            };
            let r = rows.entry((e.mode, e.kind.name(), to)).or_default();
            r.0 += 1;
            r.1 += e.bytes;
        }
        let mut s = format!("{:<6} {:<14} {:<7} {:>6} {:>14}\n", "mode", "message", "to", "count", "bytes");
        for ((m, kind, to), (n, b)) in rows {
            s.push_str(&format!("{:<6} {kind:<14} {to:<7} {n:>6} {:>14}\n", m.name(), fmt_bytes(b)));
        }
        s
    }
}

pub fn fmt_bytes(b: usize) -> String {
    if b >= 1_000_000 {
        format!("{:.3} MB", b as f64 / 1e6)
    } else if b >= 1_000 {
        format!("{:.1} kB", b as f64 / 1e3)
    } else {
        format!("{b} B")
    }
}
