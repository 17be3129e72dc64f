//! In-process hash-chained ledger of meter readings and agent actions.
//!
//! Blocks are hashed with SHA-256 over a canonical, length-prefixed
//! big-endian encoding. Finalization latency is modeled, not performed:
//! a batch of `n` transactions takes `n / throughput + latency` seconds.
//!
//! File layout (all integers big-endian):
//!
//! ```text
//! magic "GTLEDGER" | version u32 | block count u64
//! per block: body length u32 | body | sha256(body) (32 bytes)
//! body: index u64 | prev_hash [32] | tx count u32 | transactions
//! transaction: seq u64 | timestamp u32 | kind u8 | author len u32 | author
//!              | payload len u32 | payload
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Hash = [u8; 32];

const MAGIC: &[u8; 8] = b"GTLEDGER";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("invalid network parameters: {0}")]
    Config(String),
    #[error("author {0:?} is not an authorized participant")]
    Unauthorized(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("malformed ledger file: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("ledger export: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    MeterReading,
    Action,
    Feedback,
}

impl TxKind {
    fn tag(self) -> u8 {
        match self {
            TxKind::MeterReading => 0,
            TxKind::Action => 1,
            TxKind::Feedback => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(TxKind::MeterReading),
            1 => Some(TxKind::Action),
            2 => Some(TxKind::Feedback),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub seq: u64,
    /// Hour index.
    pub timestamp: u32,
    pub kind: TxKind,
    pub payload: Vec<u8>,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Hash,
    pub transactions: Vec<Transaction>,
    pub hash: Hash,
}

fn put_u32(buf: &mut Vec<u8>, x: u32) {
    buf.extend_from_slice(&x.to_be_bytes());
}

fn put_u64(buf: &mut Vec<u8>, x: u64) {
    buf.extend_from_slice(&x.to_be_bytes());
}

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(buf, bytes.len() as u32);
    buf.extend_from_slice(bytes);
}

/// Canonical encoding of the hashed part of a block.
pub fn encode_body(index: u64, prev_hash: &Hash, transactions: &[Transaction]) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u64(&mut buf, index);
    buf.extend_from_slice(prev_hash);
    put_u32(&mut buf, transactions.len() as u32);
    for tx in transactions {
        put_u64(&mut buf, tx.seq);
        put_u32(&mut buf, tx.timestamp);
        buf.push(tx.kind.tag());
        put_bytes(&mut buf, tx.author.as_bytes());
        put_bytes(&mut buf, &tx.payload);
    }
    buf
}

pub fn sha256(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

impl Block {
    pub fn seal(index: u64, prev_hash: Hash, transactions: Vec<Transaction>) -> Self {
        let hash = sha256(&encode_body(index, &prev_hash, &transactions));
        Block {
            index,
            prev_hash,
            transactions,
            hash,
        }
    }

    pub fn genesis() -> Self {
        Block::seal(0, [0; 32], Vec::new())
    }

    pub fn body(&self) -> Vec<u8> {
        encode_body(self.index, &self.prev_hash, &self.transactions)
    }

    pub fn recompute_hash(&self) -> Hash {
        sha256(&self.body())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    /// Transactions per second.
    pub throughput: f64,
    /// Average network delay, seconds.
    pub latency: f64,
}

impl NetParams {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if !(self.throughput > 0.0 && self.throughput.is_finite()) {
            return Err(LedgerError::Config(format!("throughput {} must be > 0", self.throughput)));
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(LedgerError::Config(format!("latency {} must be >= 0", self.latency)));
        }
        Ok(())
    }
}

/// Seconds to finalize `n` transactions: `n / throughput + latency`.
pub fn consensus_time(n: usize, params: &NetParams) -> Result<f64, LedgerError> {
    params.validate()?;
    Ok(n as f64 / params.throughput + params.latency)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// Lowest index whose hash or linkage does not check out.
    BadBlock(u64),
}

/// Checks every stored hash against its recomputation and every link to the
/// previous block.
pub fn verify_chain(blocks: &[Block]) -> Verdict {
    for (i, block) in blocks.iter().enumerate() {
        let expected_prev = if i == 0 { [0; 32] } else { blocks[i - 1].hash };
        if block.index != i as u64 || block.prev_hash != expected_prev || block.recompute_hash() != block.hash {
            return Verdict::BadBlock(i as u64);
        }
    }
    Verdict::Ok
}

/// Single-writer chain with an author allow-list and a pending queue.
#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<Block>,
    participants: BTreeSet<String>,
    pending: Vec<Transaction>,
    next_seq: u64,
}

impl Ledger {
    pub fn new<I, S>(participants: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Ledger {
            blocks: vec![Block::genesis()],
            participants: participants.into_iter().map(Into::into).collect(),
            pending: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn participants(&self) -> &BTreeSet<String> {
        &self.participants
    }

    /// Builds a transaction with the next sequence number.
    pub fn transaction(&mut self, timestamp: u32, kind: TxKind, author: &str, payload: Vec<u8>) -> Transaction {
        let tx = Transaction {
            seq: self.next_seq,
            timestamp,
            kind,
            payload,
            author: author.to_owned(),
        };
        self.next_seq += 1;
        tx
    }

    /// Queues a transaction for the next block.
    pub fn submit(&mut self, timestamp: u32, kind: TxKind, author: &str, payload: Vec<u8>) -> Result<(), LedgerError> {
        if payload.is_empty() {
            return Err(LedgerError::Input("transaction payload is empty".into()));
        }
        let tx = self.transaction(timestamp, kind, author, payload);
        self.pending.push(tx);
        Ok(())
    }

    /// Validates and appends `pending` as a new block, returning the modeled
    /// consensus time. The chain is untouched on error.
    pub fn append_block(&mut self, pending: Vec<Transaction>, params: &NetParams) -> Result<f64, LedgerError> {
        params.validate()?;
        if pending.is_empty() {
            return Err(LedgerError::Input("no pending transactions".into()));
        }
        if let Some(tx) = pending.iter().find(|tx| !self.participants.contains(&tx.author)) {
            return Err(LedgerError::Unauthorized(tx.author.clone()));
        }
        if pending.iter().any(|tx| tx.payload.is_empty()) {
            return Err(LedgerError::Input("transaction payload is empty".into()));
        }
        if pending.windows(2).any(|w| w[0].seq >= w[1].seq) {
            return Err(LedgerError::Input("transaction sequence numbers must increase".into()));
        }
        let time = consensus_time(pending.len(), params)?;
        let prev = self.blocks.last().expect("chain always holds genesis");
        let block = Block::seal(prev.index + 1, prev.hash, pending);
        self.blocks.push(block);
        Ok(time)
    }

    /// Appends everything queued by [`Ledger::submit`]; queue is restored on error.
    pub fn commit(&mut self, params: &NetParams) -> Result<f64, LedgerError> {
        let pending = std::mem::take(&mut self.pending);
        match self.append_block(pending.clone(), params) {
            Ok(t) => Ok(t),
            Err(e) => {
                self.pending = pending;
                Err(e)
            }
        }
    }

    pub fn verify(&self) -> Verdict {
        verify_chain(&self.blocks)
    }
}

pub fn encode_chain(blocks: &[Block]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u64(&mut buf, blocks.len() as u64);
    for b in blocks {
        let body = b.body();
        put_u32(&mut buf, body.len() as u32);
        buf.extend_from_slice(&body);
        buf.extend_from_slice(&b.hash);
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LedgerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| LedgerError::Malformed(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, LedgerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, LedgerError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LedgerError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn hash(&mut self) -> Result<Hash, LedgerError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn bytes(&mut self) -> Result<&'a [u8], LedgerError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn finished(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn decode_body(body: &[u8], hash: Hash) -> Result<Block, LedgerError> {
    let mut r = Reader { bytes: body, pos: 0 };
    let index = r.u64()?;
    let prev_hash = r.hash()?;
    let n = r.u32()?;
    let mut transactions = Vec::new();
    for _ in 0..n {
        let seq = r.u64()?;
        let timestamp = r.u32()?;
        let tag = r.u8()?;
        let kind = TxKind::from_tag(tag).ok_or_else(|| LedgerError::Malformed(format!("unknown transaction kind {tag}")))?;
        let author = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| LedgerError::Malformed("author is not UTF-8".into()))?;
        let payload = r.bytes()?.to_vec();
        transactions.push(Transaction {
            seq,
            timestamp,
            kind,
            payload,
            author,
        });
    }
    if !r.finished() {
        return Err(LedgerError::Malformed(format!("trailing bytes in block {index}")));
    }
    Ok(Block {
        index,
        prev_hash,
        transactions,
        hash,
    })
}

/// Parses a chain file. Hashes are read as stored, not recomputed; use
/// [`verify_chain`] on the result.
pub fn decode_chain(bytes: &[u8]) -> Result<Vec<Block>, LedgerError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(LedgerError::Malformed("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(LedgerError::Malformed(format!("unsupported version {version}")));
    }
    let count = r.u64()?;
    let mut blocks = Vec::new();
    for _ in 0..count {
        let body = r.bytes()?;
        let hash = r.hash()?;
        blocks.push(decode_body(body, hash)?);
    }
    if !r.finished() {
        return Err(LedgerError::Malformed("trailing bytes after last block".into()));
    }
    Ok(blocks)
}

/// Outcome of checking a serialized chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileVerdict {
    Ok { blocks: usize },
    BadBlock(u64),
    Malformed(String),
}

impl FileVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, FileVerdict::Ok { .. })
    }
}

pub fn verify_bytes(bytes: &[u8]) -> FileVerdict {
    match decode_chain(bytes) {
        Err(e) => FileVerdict::Malformed(e.to_string()),
        Ok(blocks) if blocks.is_empty() => FileVerdict::Malformed("chain has no blocks".into()),
        Ok(blocks) => match verify_chain(&blocks) {
            Verdict::Ok => FileVerdict::Ok { blocks: blocks.len() },
            Verdict::BadBlock(i) => FileVerdict::BadBlock(i),
        },
    }
}

pub fn save_chain(blocks: &[Block], path: impl AsRef<Path>) -> Result<(), LedgerError> {
    let path = path.as_ref();
    std::fs::write(path, encode_chain(blocks)).map_err(|source| LedgerError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_chain_bytes(path: impl AsRef<Path>) -> Result<Vec<u8>, LedgerError> {
    let path = path.as_ref();
    std::fs::read(path).map_err(|source| LedgerError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Serialize)]
struct TxExport<'a> {
    seq: u64,
    timestamp: u32,
    kind: TxKind,
    author: &'a str,
    payload: serde_json::Value,
}

#[derive(Serialize)]
struct BlockExport<'a> {
    index: u64,
    prev_hash: String,
    hash: String,
    transactions: Vec<TxExport<'a>>,
}

/// Human-readable JSON rendering. JSON payloads are inlined, anything else
/// is shown as hex.
pub fn export_json(blocks: &[Block]) -> Result<String, LedgerError> {
    let export: Vec<BlockExport> = blocks
        .iter()
        .map(|b| BlockExport {
            index: b.index,
            prev_hash: hex::encode(b.prev_hash),
            hash: hex::encode(b.hash),
            transactions: b
                .transactions
                .iter()
                .map(|tx| TxExport {
                    seq: tx.seq,
                    timestamp: tx.timestamp,
                    kind: tx.kind,
                    author: &tx.author,
                    payload: serde_json::from_slice(&tx.payload)
                        .unwrap_or_else(|_| serde_json::Value::String(hex::encode(&tx.payload))),
                })
                .collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&export)? + "\n")
}
