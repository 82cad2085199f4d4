//! Append-only settlement log with a SHA-256 hash chain.
//!
//! Each event commits to its predecessor:
//!
//! ```text
//! hash = SHA-256( sequence as u64 big-endian
//!               ‖ kind label (e.g. "SETTLE")
//!               ‖ 0x0A
//!               ‖ payload as compact JSON
//!               ‖ prev_hash (32 raw bytes) )
//! ```
//!
//! The first event links to the all-zero digest. Token amounts are integer
//! micro-tokens so a log replays bit-for-bit. On disk the log is JSON Lines, one
//! event per line with lowercase hex digests; [`verify_log`] also requires every
//! line to be in canonical form, so flipping any single bit of a file is detected.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::market::{ClientProfile, ContractMenu, InfoCase, Mechanism};

/// Converts tokens to micro-tokens, rounding half to even.
pub fn to_micro(amount: f64) -> u64 {
    (amount * 1e6).round_ties_even() as u64
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(Error::Parse(format!("digest `{s}` is not lowercase hex")));
        }
        let mut out = [0; 32];
        hex::decode_to_slice(s, &mut out)
            .map_err(|e| Error::Parse(format!("digest `{s}`: {e}")))?;
        Ok(Digest(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Register,
    PublishMenu,
    SubmitContribution,
    StoreBlob,
    Settle,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Register => "REGISTER",
            EventKind::PublishMenu => "PUBLISH_MENU",
            EventKind::SubmitContribution => "SUBMIT_CONTRIBUTION",
            EventKind::StoreBlob => "STORE_BLOB",
            EventKind::Settle => "SETTLE",
        }
    }
}

/// Menu item as recorded on the ledger: amounts only, in micro-tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedItem {
    pub type_index: usize,
    pub join_round: u32,
    pub salary_micro: u64,
    pub bonus_micro: u64,
    /// `salary_micro + bonus_micro`.
    pub reward_micro: u64,
}

impl PublishedItem {
    pub fn from_menu(menu: &ContractMenu) -> Vec<Self> {
        menu.items
            .iter()
            .map(|i| {
                let (salary_micro, bonus_micro) = (to_micro(i.salary), to_micro(i.bonus));
                PublishedItem {
                    type_index: i.type_index,
                    join_round: i.join_round,
                    salary_micro,
                    bonus_micro,
                    reward_micro: salary_micro + bonus_micro,
                }
            })
            .collect()
    }
}

/// Kind-specific event body. Variants have disjoint field sets, so the untagged
/// form is unambiguous; [`LedgerEvent::kind`] is checked against it on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Register(Registration),
    PublishMenu(MenuPublication),
    SubmitContribution(Contribution),
    StoreBlob(BlobRecord),
    Settle(Payout),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registration {
    pub client_id: String,
    pub type_index: usize,
    pub wallet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuPublication {
    pub round: u32,
    pub mechanism: Mechanism,
    pub info_case: InfoCase,
    pub items: Vec<PublishedItem>,
}

/// A client's recorded contribution. Contract rounds name the signed `item`;
/// priced rounds carry the payment in `amount_micro` instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contribution {
    pub round: u32,
    pub client_id: String,
    pub item: Option<usize>,
    pub amount_micro: Option<u64>,
    pub blob_hash: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobRecord {
    pub round: u32,
    pub hash: Digest,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payout {
    pub client_id: String,
    pub wallet: String,
    pub amount_micro: u64,
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::Register(_) => EventKind::Register,
            Payload::PublishMenu(_) => EventKind::PublishMenu,
            Payload::SubmitContribution(_) => EventKind::SubmitContribution,
            Payload::StoreBlob(_) => EventKind::StoreBlob,
            Payload::Settle(_) => EventKind::Settle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEvent {
    pub sequence: u64,
    pub kind: EventKind,
    pub payload: Payload,
    pub prev_hash: Digest,
    pub hash: Digest,
}

impl LedgerEvent {
    fn seal(sequence: u64, payload: Payload, prev_hash: Digest) -> Self {
        let kind = payload.kind();
        let hash = link_hash(sequence, kind, &payload, prev_hash);
        Self {
            sequence,
            kind,
            payload,
            prev_hash,
            hash,
        }
    }

    /// Recomputes this event's own hash from its fields.
    pub fn expected_hash(&self) -> Digest {
        link_hash(self.sequence, self.kind, &self.payload, self.prev_hash)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

fn link_hash(sequence: u64, kind: EventKind, payload: &Payload, prev: Digest) -> Digest {
    let mut h = Sha256::new();
    h.update(sequence.to_be_bytes());
    h.update(kind.label().as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(payload).expect("payload serializes"));
    h.update(prev.0);
    Digest(h.finalize().into())
}

#[derive(Debug, Clone)]
struct PendingContribution {
    client_id: String,
    amount_micro: u64,
}

/// Single-writer ledger. All state besides the event list is derived and can be
/// rebuilt from the events alone.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    events: Vec<LedgerEvent>,
    clients: BTreeMap<String, ClientProfile>,
    /// Client ids in registration order.
    order: Vec<String>,
    /// Reward per item (micro-tokens) of each published round.
    menus: BTreeMap<u32, Vec<u64>>,
    active_round: Option<u32>,
    pending: Vec<PendingContribution>,
    settled_once: bool,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn head(&self) -> Digest {
        self.events.last().map_or(Digest::ZERO, |e| e.hash)
    }

    fn append(&mut self, payload: Payload) -> &LedgerEvent {
        let event = LedgerEvent::seal(self.events.len() as u64, payload, self.head());
        self.events.push(event);
        self.events.last().expect("just pushed")
    }

    pub fn register(&mut self, profile: &ClientProfile) -> Result<&LedgerEvent> {
        if self.clients.contains_key(&profile.client_id) {
            return Err(Error::DuplicateId(profile.client_id.clone()));
        }
        self.clients
            .insert(profile.client_id.clone(), profile.clone());
        self.order.push(profile.client_id.clone());
        Ok(self.append(Payload::Register(Registration {
            client_id: profile.client_id.clone(),
            type_index: profile.type_index,
            wallet: profile.wallet.clone(),
        })))
    }

    /// Publishes `menu` and makes it the active menu for submissions.
    pub fn publish_menu(&mut self, menu: &ContractMenu) -> &LedgerEvent {
        let items = PublishedItem::from_menu(menu);
        self.menus
            .insert(menu.round, items.iter().map(|i| i.reward_micro).collect());
        self.active_round = Some(menu.round);
        self.append(Payload::PublishMenu(MenuPublication {
            round: menu.round,
            mechanism: menu.mechanism,
            info_case: menu.info_case,
            items,
        }))
    }

    /// Content-addresses `bytes`; only the digest and length go on the log.
    pub fn store_blob(&mut self, round: u32, bytes: &[u8]) -> Digest {
        let hash = Digest::of(bytes);
        self.append(Payload::StoreBlob(BlobRecord {
            round,
            hash,
            len: bytes.len() as u64,
        }));
        hash
    }

    /// Records that `client_id` delivered `blob_hash` under item `item` of the
    /// active menu.
    pub fn submit_contribution(
        &mut self,
        client_id: &str,
        item: usize,
        blob_hash: Digest,
    ) -> Result<&LedgerEvent> {
        self.check_registered(client_id)?;
        let round = self.active_round.ok_or(Error::NoActiveMenu)?;
        let rewards = &self.menus[&round];
        if item == 0 || item > rewards.len() {
            return Err(Error::ItemOutOfRange {
                index: item,
                k: rewards.len(),
            });
        }
        let amount_micro = rewards[item - 1];
        self.push_contribution(round, client_id, Some(item), None, amount_micro, blob_hash)
    }

    /// Records a contribution paid at a flat price rather than through a menu.
    pub fn submit_priced(
        &mut self,
        round: u32,
        client_id: &str,
        amount_micro: u64,
        blob_hash: Digest,
    ) -> Result<&LedgerEvent> {
        self.check_registered(client_id)?;
        self.push_contribution(
            round,
            client_id,
            None,
            Some(amount_micro),
            amount_micro,
            blob_hash,
        )
    }

    fn push_contribution(
        &mut self,
        round: u32,
        client_id: &str,
        item: Option<usize>,
        recorded_amount: Option<u64>,
        amount_micro: u64,
        blob_hash: Digest,
    ) -> Result<&LedgerEvent> {
        self.pending.push(PendingContribution {
            client_id: client_id.to_owned(),
            amount_micro,
        });
        Ok(self.append(Payload::SubmitContribution(Contribution {
            round,
            client_id: client_id.to_owned(),
            item,
            amount_micro: recorded_amount,
            blob_hash,
        })))
    }

    fn check_registered(&self, client_id: &str) -> Result<()> {
        if self.clients.contains_key(client_id) {
            Ok(())
        } else {
            Err(Error::Unregistered(client_id.to_owned()))
        }
    }

    /// Pays every contribution recorded since the previous settlement: one SETTLE
    /// event per client, in registration order, for the sum of its rewards.
    /// Settling again with nothing new recorded fails.
    pub fn settle(&mut self) -> Result<Vec<Payout>> {
        if self.pending.is_empty() && self.settled_once {
            return Err(Error::AlreadySettled);
        }
        self.settled_once = true;
        let mut due: BTreeMap<&str, u64> = BTreeMap::new();
        for c in &self.pending {
            *due.entry(c.client_id.as_str()).or_default() += c.amount_micro;
        }
        let payouts: Vec<Payout> = self
            .order
            .iter()
            .filter_map(|id| {
                due.get(id.as_str()).map(|&amount_micro| Payout {
                    client_id: id.clone(),
                    wallet: self.clients[id].wallet.clone(),
                    amount_micro,
                })
            })
            .collect();
        self.pending.clear();
        for p in &payouts {
            self.append(Payload::Settle(p.clone()));
        }
        Ok(payouts)
    }

    /// Total of every SETTLE event so far.
    pub fn total_paid_micro(&self) -> u64 {
        replay_balances(&self.events).values().sum()
    }

    /// Writes the log as JSON Lines.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for e in &self.events {
            writeln!(out, "{}", e.to_line())?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

/// Wallet balances derived from SETTLE events alone.
pub fn replay_balances(events: &[LedgerEvent]) -> BTreeMap<String, u64> {
    let mut balances = BTreeMap::new();
    for e in events {
        if let Payload::Settle(p) = &e.payload {
            *balances.entry(p.wallet.clone()).or_default() += p.amount_micro;
        }
    }
    balances
}

/// Wallet totals recomputed from published menus and contributions, independent
/// of what the SETTLE events claim. Equal to [`replay_balances`] on a fully
/// settled, honest log.
pub fn expected_balances(events: &[LedgerEvent]) -> Result<BTreeMap<String, u64>> {
    let mut wallets = BTreeMap::new();
    let mut menus: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    let mut balances = BTreeMap::new();
    for e in events {
        match &e.payload {
            Payload::Register(r) => {
                wallets.insert(r.client_id.clone(), r.wallet.clone());
            }
            Payload::PublishMenu(m) => {
                menus.insert(m.round, m.items.iter().map(|i| i.reward_micro).collect());
            }
            Payload::SubmitContribution(c) => {
                let amount = match (c.item, c.amount_micro) {
                    (Some(k), None) => {
                        let rewards = menus.get(&c.round).ok_or_else(|| {
                            Error::Parse(format!(
                                "event {}: no menu for round {}",
                                e.sequence, c.round
                            ))
                        })?;
                        *rewards
                            .get(k.wrapping_sub(1))
                            .ok_or(Error::ItemOutOfRange {
                                index: k,
                                k: rewards.len(),
                            })?
                    }
                    (None, Some(a)) => a,
                    _ => {
                        return Err(Error::Parse(format!(
                            "event {}: contribution needs exactly one of item and amount",
                            e.sequence
                        )))
                    }
                };
                let wallet = wallets
                    .get(&c.client_id)
                    .ok_or_else(|| Error::Unregistered(c.client_id.clone()))?;
                *balances.entry(wallet.clone()).or_default() += amount;
            }
            Payload::StoreBlob(_) | Payload::Settle(_) => {}
        }
    }
    Ok(balances)
}

/// Checks sequence numbers, kinds and every hash link.
pub fn verify_chain(events: &[LedgerEvent]) -> bool {
    let mut prev = Digest::ZERO;
    for (i, e) in events.iter().enumerate() {
        if e.sequence != i as u64
            || e.kind != e.payload.kind()
            || e.prev_hash != prev
            || e.hash != e.expected_hash()
        {
            return false;
        }
        prev = e.hash;
    }
    true
}

/// Parses a JSON Lines log. Every line must be newline-terminated and exactly
/// the canonical serialization of the event it decodes to.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<LedgerEvent>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| Error::Parse("log does not end with a newline".into()))?;
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            let event: LedgerEvent = serde_json::from_str(line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            if event.to_line() != line {
                return Err(Error::Parse(format!("line {} is not canonical", i + 1)));
            }
            Ok(event)
        })
        .collect()
}

/// True iff `bytes` is a well-formed, canonical log whose chain verifies.
pub fn verify_log(bytes: &[u8]) -> bool {
    parse_log(bytes).is_ok_and(|events| verify_chain(&events))
}
