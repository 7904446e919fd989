//! Three-party message fabric with bit accounting and round counting.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Serialize;

use crate::crypto::LayeredCiphertext;
use crate::error::{Error, Result};

/// A protocol participant. Users are numbered from 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    User(u32),
    Shuffler,
    Collector,
}

/// Party class used to aggregate hops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Shuffler,
    Collector,
}

impl Party {
    pub fn role(self) -> Role {
        match self {
            Party::User(_) => Role::User,
            Party::Shuffler => Role::Shuffler,
            Party::Collector => Role::Collector,
        }
    }
}

/// Wire message.
#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    /// One or more ciphertexts sent together.
    Ciphertexts(Vec<LayeredCiphertext>),
    /// Plain item ids, each charged `width_bits`.
    Items { width_bits: u32, items: Vec<u32> },
}

const MAX_PARTS: usize = 16;

impl Message {
    /// Size in bits: ciphertext sizes, or `width_bits` per item.
    pub fn size_bits(&self) -> u64 {
        match self {
            Message::Ciphertexts(cs) => cs.iter().map(|c| c.size_bits()).sum(),
            Message::Items { width_bits, items } => *width_bits as u64 * items.len() as u64,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Ciphertexts(cs) => {
                out.push(b'C');
                out.push(cs.len() as u8);
                for c in cs {
                    let e = c.encode();
                    out.extend_from_slice(&(e.len() as u32).to_be_bytes());
                    out.extend_from_slice(&e);
                }
            }
            Message::Items { width_bits, items } => {
                out.push(b'I');
                out.extend_from_slice(&width_bits.to_be_bytes());
                out.extend_from_slice(&(items.len() as u32).to_be_bytes());
                for i in items {
                    out.extend_from_slice(&i.to_be_bytes());
                }
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Message> {
        let mut r = Reader(buf);
        let msg = match r.take(1)?[0] {
            b'C' => {
                let k = r.take(1)?[0] as usize;
                if k == 0 || k > MAX_PARTS {
                    return Err(Error::Decode("ciphertext count out of range".into()));
                }
                let mut cs = Vec::with_capacity(k);
                for _ in 0..k {
                    let len = r.u32()? as usize;
                    cs.push(LayeredCiphertext::decode(r.take(len)?)?);
                }
                Message::Ciphertexts(cs)
            }
            b'I' => {
                let width_bits = r.u32()?;
                let k = r.u32()? as usize;
                if k.checked_mul(4) != Some(r.0.len()) {
                    return Err(Error::Decode("item list length mismatch".into()));
                }
                let items = (0..k).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                Message::Items { width_bits, items }
            }
            t => return Err(Error::Decode(format!("unknown message tag {t:#04x}"))),
        };
        if !r.0.is_empty() {
            return Err(Error::Decode("trailing bytes".into()));
        }
        Ok(msg)
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Decode("truncated message".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Messages and bits on one hop class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct HopStats {
    pub bits: u64,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LastAction {
    None,
    Sent,
    Received,
}

#[derive(Clone, Copy, Debug)]
struct PartyState {
    sent: u64,
    received: u64,
    rounds: u64,
    last: LastAction,
}

impl Default for PartyState {
    fn default() -> Self {
        PartyState {
            sent: 0,
            received: 0,
            rounds: 0,
            last: LastAction::None,
        }
    }
}

impl PartyState {
    fn on_send(&mut self, count: u64) {
        if self.last != LastAction::Sent {
            self.rounds += 1;
        }
        self.last = LastAction::Sent;
        self.sent += count;
    }

    fn on_receive(&mut self, count: u64) {
        self.last = LastAction::Received;
        self.received += count;
    }
}

/// Accounting record of one protocol run.
#[derive(Clone, Debug)]
pub struct Transcript {
    hops: BTreeMap<(Role, Role), HopStats>,
    users: Vec<PartyState>,
    shuffler: PartyState,
    collector: PartyState,
    lambda_items: u64,
    lambda_bits: u64,
    lambda_bits_tau1: u64,
    stages: Vec<(String, Duration)>,
}

/// Summary counters of a transcript.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Measure {
    pub c_us: u64,
    pub c_sd: u64,
    pub c_tot: u64,
    pub user_rounds: u64,
    pub shuffler_rounds: u64,
    pub collector_rounds: u64,
}

#[derive(Serialize)]
struct HopRecord {
    from: Role,
    to: Role,
    bits: u64,
    count: u64,
}

#[derive(Serialize)]
struct RoundsRecord {
    user: u64,
    shuffler: u64,
    collector: u64,
}

#[derive(Serialize)]
struct TranscriptRecord {
    hops: Vec<HopRecord>,
    rounds: RoundsRecord,
    c_us: u64,
    c_sd: u64,
    c_tot: u64,
    lambda_items: u64,
    lambda_bits_charged: u64,
    lambda_bits_tau1: u64,
}

impl Transcript {
    fn new(n_users: usize) -> Self {
        Transcript {
            hops: BTreeMap::new(),
            users: vec![PartyState::default(); n_users],
            shuffler: PartyState::default(),
            collector: PartyState::default(),
            lambda_items: 0,
            lambda_bits: 0,
            lambda_bits_tau1: 0,
            stages: Vec::new(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn hop(&self, from: Role, to: Role) -> HopStats {
        self.hops.get(&(from, to)).copied().unwrap_or_default()
    }

    /// Bits sent from users to the shuffler.
    pub fn c_us(&self) -> u64 {
        self.hop(Role::User, Role::Shuffler).bits
    }

    /// Bits exchanged between the shuffler and the collector, both directions.
    pub fn c_sd(&self) -> u64 {
        self.hop(Role::Shuffler, Role::Collector).bits
            + self.hop(Role::Collector, Role::Shuffler).bits
    }

    pub fn c_tot(&self) -> u64 {
        self.c_us() + self.c_sd()
    }

    /// Maximum number of send phases over users.
    pub fn user_rounds(&self) -> u64 {
        self.users.iter().map(|u| u.rounds).max().unwrap_or(0)
    }

    pub fn user_sent(&self, i: u32) -> u64 {
        self.users[i as usize].sent
    }

    pub fn user_received(&self, i: u32) -> u64 {
        self.users[i as usize].received
    }

    /// Number of items in the selected-set message and its charged size.
    pub fn lambda_message(&self) -> (u64, u64) {
        (self.lambda_items, self.lambda_bits)
    }

    /// Size of the selected-set message if every item were charged `τ1`.
    pub fn lambda_bits_tau1(&self) -> u64 {
        self.lambda_bits_tau1
    }

    pub fn stage_times(&self) -> &[(String, Duration)] {
        &self.stages
    }

    pub fn measure(&self) -> Measure {
        Measure {
            c_us: self.c_us(),
            c_sd: self.c_sd(),
            c_tot: self.c_tot(),
            user_rounds: self.user_rounds(),
            shuffler_rounds: self.shuffler.rounds,
            collector_rounds: self.collector.rounds,
        }
    }

    /// JSON export of hops, rounds and totals.
    pub fn to_json(&self) -> String {
        let rec = TranscriptRecord {
            hops: self
                .hops
                .iter()
                .map(|(&(from, to), s)| HopRecord {
                    from,
                    to,
                    bits: s.bits,
                    count: s.count,
                })
                .collect(),
            rounds: RoundsRecord {
                user: self.user_rounds(),
                shuffler: self.shuffler.rounds,
                collector: self.collector.rounds,
            },
            c_us: self.c_us(),
            c_sd: self.c_sd(),
            c_tot: self.c_tot(),
            lambda_items: self.lambda_items,
            lambda_bits_charged: self.lambda_bits,
            lambda_bits_tau1: self.lambda_bits_tau1,
        };
        serde_json::to_string_pretty(&rec).expect("transcript serializes")
    }
}

/// True iff every user sent exactly one message and received none.
pub fn assert_one_round(t: &Transcript) -> bool {
    t.users.iter().all(|u| u.sent == 1 && u.received == 0)
}

/// In-process message fabric. Messages are serialized on send and decoded on
/// receive; each link is a FIFO queue.
#[derive(Debug)]
pub struct Network {
    transcript: Transcript,
    queues: BTreeMap<(Party, Party), std::collections::VecDeque<Vec<u8>>>,
    closed: bool,
}

impl Network {
    pub fn new(n_users: usize) -> Self {
        Network {
            transcript: Transcript::new(n_users),
            queues: BTreeMap::new(),
            closed: false,
        }
    }

    fn check(&self, p: Party) -> Result<()> {
        if self.closed {
            return Err(Error::Transport("message after protocol close".into()));
        }
        if let Party::User(i) = p {
            if i as usize >= self.transcript.users.len() {
                return Err(Error::Transport(format!("unknown user {i}")));
            }
        }
        Ok(())
    }

    fn state(&mut self, p: Party) -> &mut PartyState {
        match p {
            Party::User(i) => &mut self.transcript.users[i as usize],
            Party::Shuffler => &mut self.transcript.shuffler,
            Party::Collector => &mut self.transcript.collector,
        }
    }

    fn account(&mut self, from: Party, to: Party, count: u64, bits: u64) {
        let h = self
            .transcript
            .hops
            .entry((from.role(), to.role()))
            .or_default();
        h.bits += bits;
        h.count += count;
        self.state(from).on_send(count);
    }

    /// Serializes and enqueues `msg`.
    pub fn send(&mut self, from: Party, to: Party, msg: &Message) -> Result<()> {
        self.check(from)?;
        self.check(to)?;
        if from == to {
            return Err(Error::Transport("self-addressed message".into()));
        }
        self.account(from, to, 1, msg.size_bits());
        self.queues
            .entry((from, to))
            .or_default()
            .push_back(msg.encode());
        Ok(())
    }

    /// Dequeues and decodes the next message on the link.
    pub fn recv(&mut self, from: Party, to: Party) -> Result<Option<Message>> {
        self.check(to)?;
        let Some(bytes) = self.queues.get_mut(&(from, to)).and_then(|q| q.pop_front()) else {
            return Ok(None);
        };
        self.state(to).on_receive(1);
        Message::decode(&bytes).map(Some)
    }

    /// Drains every pending message on the link.
    pub fn recv_all(&mut self, from: Party, to: Party) -> Result<Vec<Message>> {
        let mut out = Vec::new();
        while let Some(m) = self.recv(from, to)? {
            out.push(m);
        }
        Ok(out)
    }

    /// Accounts `count` messages of `bits_each` bits without materializing them.
    pub fn charge(&mut self, from: Party, to: Party, count: u64, bits_each: u64) -> Result<()> {
        self.check(from)?;
        self.check(to)?;
        if count == 0 {
            return Ok(());
        }
        self.account(from, to, count, count * bits_each);
        self.state(to).on_receive(count);
        Ok(())
    }

    /// Sends the selected item set from the collector to the shuffler.
    pub fn send_selected(
        &mut self,
        items: &[u32],
        d: u32,
        tau1: u64,
        materialize: bool,
    ) -> Result<()> {
        let width = item_width_bits(d);
        self.transcript.lambda_items += items.len() as u64;
        self.transcript.lambda_bits += width as u64 * items.len() as u64;
        self.transcript.lambda_bits_tau1 += tau1 * items.len() as u64;
        if materialize {
            self.send(
                Party::Collector,
                Party::Shuffler,
                &Message::Items {
                    width_bits: width,
                    items: items.to_vec(),
                },
            )
        } else {
            self.check(Party::Collector)?;
            self.account(
                Party::Collector,
                Party::Shuffler,
                1,
                width as u64 * items.len() as u64,
            );
            self.state(Party::Shuffler).on_receive(1);
            Ok(())
        }
    }

    /// Records the wall-clock time of a stage.
    pub fn record_stage(&mut self, name: &str, elapsed: Duration) {
        self.transcript.stages.push((name.to_string(), elapsed));
    }

    pub fn pending(&self) -> usize {
        self.queues.values().map(|q| q.len()).sum()
    }

    /// Closes the fabric and returns the transcript.
    pub fn close(&mut self) -> Transcript {
        self.closed = true;
        self.transcript.clone()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

/// Bits needed to write an id in `0..=d`.
pub fn item_width_bits(d: u32) -> u32 {
    32 - d.leading_zeros()
}
