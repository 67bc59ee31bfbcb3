//! Role-scoped state. Every role is built from the bytes it received, never
//! from another role's in-memory objects.

use std::any::type_name;
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::RngCore;

use super::ledger::{Entity, MsgKind};
use super::wire;
use super::{derive_rng, Mode};
use crate::error::{Error, Result};
use crate::lhe::{LheContext, PublicKey, RelinKey, SecretKey};
use crate::mlp::{DataPartition, ModelWeights};
use crate::ring::RingParams;
use crate::stream::{Nonce, ShallowStream, SymKey};
use crate::transcipher::{encrypt_sym_key, EncSymKey};

/// Everything the trusted dealer generates. Lives only during setup (and in
/// key files written by `keygen`).
#[derive(Clone, Debug)]
pub struct DealerKeys {
    pub params: RingParams,
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub rlk: RelinKey,
    pub sym_keys: Vec<SymKey>,
    pub enc_sym_keys: Vec<EncSymKey>,
}

impl DealerKeys {
    pub fn generate(ctx: &LheContext, clients: usize, seed: u64) -> Result<Self> {
        let params = ctx.params().clone();
        if clients == 0 || clients > params.max_clients {
            return Err(Error::OverflowBudget { clients, max: params.max_clients });
        }
        let mut rng = derive_rng(seed, "dealer", 0, 0);
        let (sk, pk, rlk) = ctx.keygen(&mut rng);
        let mut sym_keys: Vec<SymKey> = Vec::with_capacity(clients);
        while sym_keys.len() < clients {
            let k = SymKey::generate(params.t, &mut rng);
            if !sym_keys.contains(&k) {
                sym_keys.push(k);
            }
        }
        let enc_sym_keys =
            sym_keys.iter().map(|k| encrypt_sym_key(ctx, &pk, k, &mut rng)).collect::<Result<Vec<_>>>()?;
        Ok(DealerKeys { params, sk, pk, rlk, sym_keys, enc_sym_keys })
    }

    pub fn clients(&self) -> usize {
        self.sym_keys.len()
    }

    /// File name and contents of every key file, in a fixed order.
    pub fn files(&self, ctx: &LheContext) -> Result<Vec<(String, Vec<u8>)>> {
        let t = self.params.t;
        let params = serde_json::to_vec_pretty(&self.params).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = vec![
            ("params.json".to_string(), params),
            ("sk.bin".to_string(), ctx.secret_key_to_bytes(&self.sk)),
            ("pk.bin".to_string(), ctx.public_key_to_bytes(&self.pk)),
            ("rlk.bin".to_string(), ctx.relin_key_to_bytes(&self.rlk)),
        ];
        for (k, (s, e)) in self.sym_keys.iter().zip(&self.enc_sym_keys).enumerate() {
            out.push((format!("symkey-{k}.bin"), s.to_bytes(t)));
            out.push((format!("encsymkey-{k}.bin"), wire::enc_sym_key_to_bytes(ctx, e)));
        }
        Ok(out)
    }

    pub fn save(&self, ctx: &LheContext, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.files(ctx)? {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    /// Loads keys written by [`save`](Self::save). The stored parameters must
    /// match `ctx` and the directory must hold keys for `clients` clients.
    pub fn load(ctx: &LheContext, dir: &Path, clients: usize) -> Result<Self> {
        let params: RingParams = serde_json::from_slice(&fs::read(dir.join("params.json"))?)
            .map_err(|e| Error::Config(format!("params.json: {e}")))?;
        if params.fingerprint() != ctx.params().fingerprint() {
            return Err(Error::Config(format!(
                "key directory {} was generated for different parameters",
                dir.display()
            )));
        }
        let t = params.t;
        let sk = ctx.secret_key_from_bytes(&fs::read(dir.join("sk.bin"))?)?;
        let pk = ctx.public_key_from_bytes(&fs::read(dir.join("pk.bin"))?)?;
        let rlk = ctx.relin_key_from_bytes(&fs::read(dir.join("rlk.bin"))?)?;
        let mut sym_keys = Vec::with_capacity(clients);
        let mut enc_sym_keys = Vec::with_capacity(clients);
        for k in 0..clients {
            let sym = dir.join(format!("symkey-{k}.bin"));
            if !sym.exists() {
                return Err(Error::Config(format!("key directory has no key for client {k}")));
            }
            sym_keys.push(SymKey::from_bytes(&fs::read(sym)?, t)?);
            enc_sym_keys.push(wire::enc_sym_key_from_bytes(ctx, &fs::read(dir.join(format!("encsymkey-{k}.bin")))?)?);
        }
        Ok(DealerKeys { params, sk, pk, rlk, sym_keys, enc_sym_keys })
    }
}

/// One serialized setup message.
#[derive(Clone, Debug)]
pub struct SetupMessage {
    pub from: Entity,
    pub to: Entity,
    pub kind: MsgKind,
    pub bytes: Vec<u8>,
}

/// Key distribution for `mode`. Plain mode needs no keys; HE mode gives
/// clients the key pair; HHE adds symmetric keys for clients and the
/// server's evaluation material.
pub fn setup_messages(ctx: &LheContext, keys: &DealerKeys, mode: Mode) -> Vec<SetupMessage> {
    let t = keys.params.t;
    let mut out = Vec::new();
    let mut send = |to: Entity, kind: MsgKind, bytes: Vec<u8>| out.push(SetupMessage { from: Entity::Dealer, to, kind, bytes });
    if mode == Mode::Plain {
        return out;
    }
    for k in 0..keys.clients() {
        send(Entity::Client(k), MsgKind::SecretKey, ctx.secret_key_to_bytes(&keys.sk));
        send(Entity::Client(k), MsgKind::PublicKey, ctx.public_key_to_bytes(&keys.pk));
        if mode == Mode::Hhe {
            send(Entity::Client(k), MsgKind::SymKey, keys.sym_keys[k].to_bytes(t));
        }
    }
    if mode == Mode::Hhe {
        send(Entity::Server, MsgKind::PublicKey, ctx.public_key_to_bytes(&keys.pk));
        send(Entity::Server, MsgKind::RelinKey, ctx.relin_key_to_bytes(&keys.rlk));
        for e in &keys.enc_sym_keys {
            send(Entity::Server, MsgKind::EncSymKey, wire::enc_sym_key_to_bytes(ctx, e));
        }
    }
    out
}

/// Lets tests walk the types a role holds.
pub trait StateGraph {
    /// Every type name reachable from the role's fields, generic arguments
    /// included, as bare identifiers (`Option<foo::SecretKey>` yields
    /// `Option` and `SecretKey`).
    fn component_types(&self) -> Vec<String>;

    fn holds(&self, name: &str) -> bool {
        self.component_types().iter().any(|t| t == name)
    }
}

fn type_idents<T: ?Sized>() -> Vec<String> {
    type_name::<T>()
        .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == ':'))
        .filter(|s| !s.is_empty())
        .map(|s| s.rsplit("::").next().unwrap_or(s).to_string())
        .collect()
}

/// Declares a role struct and derives its [`StateGraph`] from the same
/// field list, so the two cannot drift apart.
macro_rules! role_state {
    ($(#[$m:meta])* pub struct $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty,)* }) => {
        $(#[$m])*
        pub struct $name { $($(#[$fm])* $field: $ty,)* }

        impl StateGraph for $name {
            fn component_types(&self) -> Vec<String> {
                let mut out = Vec::new();
                $(out.extend(type_idents::<$ty>());)*
                out
            }
        }
    };
}

role_state! {
    /// A client: its data shard, current global model and received keys.
    #[derive(Debug)]
    pub struct ClientState {
        id: usize,
        partition: DataPartition,
        model: ModelWeights,
        sk: Option<SecretKey>,
        pk: Option<PublicKey>,
        sym_key: Option<SymKey>,
    }
}

role_state! {
    /// The aggregator: public material, encrypted cipher keys and the nonces
    /// it has seen.
    #[derive(Debug)]
    pub struct ServerState {
        ctx: LheContext,
        stream: ShallowStream,
        pk: Option<PublicKey>,
        rlk: Option<RelinKey>,
        enc_sym_keys: Vec<Option<EncSymKey>>,
        seen_nonces: BTreeSet<(usize, Nonce)>,
        initial_model: ModelWeights,
    }
}

impl ClientState {
    pub fn new(id: usize, partition: DataPartition) -> Self {
        ClientState { id, partition, model: ModelWeights::zeros(), sk: None, pk: None, sym_key: None }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn partition(&self) -> &DataPartition {
        &self.partition
    }

    pub fn model(&self) -> &ModelWeights {
        &self.model
    }

    pub fn set_model(&mut self, m: ModelWeights) {
        self.model = m;
    }

    pub fn receive_setup(&mut self, ctx: &LheContext, kind: MsgKind, bytes: &[u8]) -> Result<()> {
        match kind {
            MsgKind::SecretKey => self.sk = Some(ctx.secret_key_from_bytes(bytes)?),
            MsgKind::PublicKey => self.pk = Some(ctx.public_key_from_bytes(bytes)?),
            MsgKind::SymKey => self.sym_key = Some(SymKey::from_bytes(bytes, ctx.t())?),
            MsgKind::InitialModel => self.model = ModelWeights::unflatten(&wire::plain_model_from_bytes(bytes)?)?,
            other => return Err(Error::Format(format!("client cannot take {} at setup", other.name()))),
        }
        Ok(())
    }

    fn missing(&self, what: &str) -> Error {
        Error::Config(format!("client {} has no {what}", self.id))
    }

    pub fn sk(&self) -> Result<&SecretKey> {
        self.sk.as_ref().ok_or_else(|| self.missing("secret key"))
    }

    pub fn pk(&self) -> Result<&PublicKey> {
        self.pk.as_ref().ok_or_else(|| self.missing("public key"))
    }

    pub fn sym_key(&self) -> Result<&SymKey> {
        self.sym_key.as_ref().ok_or_else(|| self.missing("symmetric key"))
    }
}

impl ServerState {
    pub fn new<R: RngCore>(ctx: LheContext, clients: usize, rng: &mut R) -> Self {
        let stream = ShallowStream::new(ctx.t(), ctx.degree());
        let mut initial_model = ModelWeights::he_uniform(rng);
        initial_model.round_to_f32();
        ServerState {
            ctx,
            stream,
            pk: None,
            rlk: None,
            enc_sym_keys: vec![None; clients],
            seen_nonces: BTreeSet::new(),
            initial_model,
        }
    }

    pub fn ctx(&self) -> &LheContext {
        &self.ctx
    }

    pub fn stream(&self) -> &ShallowStream {
        &self.stream
    }

    pub fn initial_model(&self) -> &ModelWeights {
        &self.initial_model
    }

    /// Encrypted keys arrive in client order.
    pub fn receive_setup(&mut self, kind: MsgKind, bytes: &[u8]) -> Result<()> {
        match kind {
            MsgKind::PublicKey => self.pk = Some(self.ctx.public_key_from_bytes(bytes)?),
            MsgKind::RelinKey => self.rlk = Some(self.ctx.relin_key_from_bytes(bytes)?),
            MsgKind::EncSymKey => {
                let slot = self
                    .enc_sym_keys
                    .iter_mut()
                    .find(|s| s.is_none())
                    .ok_or_else(|| Error::Format("more encrypted keys than clients".into()))?;
                *slot = Some(wire::enc_sym_key_from_bytes(&self.ctx, bytes)?);
            }
            other => return Err(Error::Format(format!("server cannot take {} at setup", other.name()))),
        }
        Ok(())
    }

    pub fn rlk(&self) -> Result<&RelinKey> {
        self.rlk.as_ref().ok_or_else(|| Error::Config("server has no relinearization key".into()))
    }

    pub fn enc_sym_key(&self, client: usize) -> Result<&EncSymKey> {
        self.enc_sym_keys
            .get(client)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Config(format!("server has no encrypted key for client {client}")))
    }

    /// Records a nonce, refusing one this client already used.
    pub fn admit_nonce(&mut self, client: usize, nonce: Nonce) -> Result<()> {
        if !self.seen_nonces.insert((client, nonce)) {
            return Err(Error::NonceReuse { client });
        }
        Ok(())
    }
}
