//! Append-only record of every message that crosses the simulated network.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{Error, Result};

/// Round 0 carries the one-time setup traffic.
pub const SETUP_ROUND: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Entity {
    Dealer,
    Server,
    Client(usize),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Dealer => f.write_str("dealer"),
            Entity::Server => f.write_str("server"),
            Entity::Client(k) => write!(f, "client{k}"),
        }
    }
}

impl FromStr for Entity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dealer" => Ok(Entity::Dealer),
            "server" => Ok(Entity::Server),
            _ => s
                .strip_prefix("client")
                .and_then(|k| k.parse().ok())
                .map(Entity::Client)
                .ok_or_else(|| Error::Format(format!("unknown entity {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Send,
    Receive,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Send => "send",
            Direction::Receive => "receive",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    SecretKey,
    PublicKey,
    RelinKey,
    SymKey,
    EncSymKey,
    InitialModel,
    PlainModel,
    HeUpload,
    SymUpload,
    EncryptedSum,
}

impl MsgKind {
    pub const ALL: [MsgKind; 10] = [
        MsgKind::SecretKey,
        MsgKind::PublicKey,
        MsgKind::RelinKey,
        MsgKind::SymKey,
        MsgKind::EncSymKey,
        MsgKind::InitialModel,
        MsgKind::PlainModel,
        MsgKind::HeUpload,
        MsgKind::SymUpload,
        MsgKind::EncryptedSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MsgKind::SecretKey => "secret_key",
            MsgKind::PublicKey => "public_key",
            MsgKind::RelinKey => "relin_key",
            MsgKind::SymKey => "sym_key",
            MsgKind::EncSymKey => "enc_sym_key",
            MsgKind::InitialModel => "initial_model",
            MsgKind::PlainModel => "plain_model",
            MsgKind::HeUpload => "he_upload",
            MsgKind::SymUpload => "sym_upload",
            MsgKind::EncryptedSum => "encrypted_sum",
        }
    }

    pub fn is_key_material(self) -> bool {
        matches!(self, MsgKind::SecretKey | MsgKind::PublicKey | MsgKind::RelinKey | MsgKind::SymKey | MsgKind::EncSymKey)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub mode: Mode,
    pub entity: Entity,
    pub direction: Direction,
    pub kind: MsgKind,
    pub bytes: usize,
    /// Time spent producing (send) or consuming (receive) the message.
    pub millis: f64,
}

/// Time source for ledger durations. `Frozen` reports zero everywhere, so
/// two runs with the same seed produce byte-identical ledgers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    #[default]
    Wall,
    Frozen,
}

impl Clock {
    pub fn start(self) -> Stopwatch {
        Stopwatch { clock: self, at: Instant::now() }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Stopwatch {
    clock: Clock,
    at: Instant,
}

impl Stopwatch {
    pub fn elapsed(&self) -> Duration {
        match self.clock {
            Clock::Wall => self.at.elapsed(),
            Clock::Frozen => Duration::ZERO,
        }
    }

    pub fn millis(&self) -> f64 {
        self.elapsed().as_secs_f64() * 1e3
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    entries: Vec<LedgerEntry>,
}

pub const CSV_HEADER: &str = "round,mode,entity,direction,msg_kind,bytes,millis";

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<LedgerEntry>) -> Self {
        CommLedger { entries }
    }

    pub fn push(&mut self, e: LedgerEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: CommLedger) {
        self.entries.extend(other.entries);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of bytes over entries matching `f`.
    pub fn bytes_where(&self, f: impl Fn(&LedgerEntry) -> bool) -> usize {
        self.entries.iter().filter(|e| f(e)).map(|e| e.bytes).sum()
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(Error::Format("ledger CSV header mismatch".into()));
        }
        let mut ledger = CommLedger::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::Format(format!("ledger CSV line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let direction = match f[3] {
                "send" => Direction::Send,
                "receive" => Direction::Receive,
                _ => return Err(bad()),
            };
            ledger.push(LedgerEntry {
                round: f[0].parse().map_err(|_| bad())?,
                mode: f[1].parse()?,
                entity: f[2].parse()?,
                direction,
                kind: MsgKind::ALL.into_iter().find(|k| k.name() == f[4]).ok_or_else(bad)?,
                bytes: f[5].parse().map_err(|_| bad())?,
                millis: f[6].parse().map_err(|_| bad())?,
            });
        }
        Ok(ledger)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.3}\n",
                e.round,
                e.mode,
                e.entity,
                e.direction,
                e.kind.name(),
                e.bytes,
                e.millis
            ));
        }
        s
    }
}
