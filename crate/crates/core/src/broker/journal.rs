//! Append-only journal for durable queues.
//!
//! Each record is a little-endian `u32` length followed by the body:
//! `op: u8 | queue_len: u8 | queue | message_id: u64 LE | payload`.
//! Only enqueue records carry a payload. A torn final record (crash during
//! write) is ignored on replay.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Enqueue { queue: String, message_id: u64, payload: Vec<u8> },
    Ack { queue: String, message_id: u64 },
    /// Moved from `queue` to its dead-letter companion.
    Dead { queue: String, message_id: u64 },
}

const OP_ENQUEUE: u8 = 1;
const OP_ACK: u8 = 2;
const OP_DEAD: u8 = 3;

impl Record {
    fn encode(&self) -> Vec<u8> {
        let (op, queue, id, payload): (u8, &str, u64, &[u8]) = match self {
            Record::Enqueue { queue, message_id, payload } => (OP_ENQUEUE, queue, *message_id, payload),
            Record::Ack { queue, message_id } => (OP_ACK, queue, *message_id, &[]),
            Record::Dead { queue, message_id } => (OP_DEAD, queue, *message_id, &[]),
        };
        let body_len = 2 + queue.len() + 8 + payload.len();
        let mut out = Vec::with_capacity(4 + body_len);
        out.extend_from_slice(&(body_len as u32).to_le_bytes());
        out.push(op);
        out.push(queue.len() as u8);
        out.extend_from_slice(queue.as_bytes());
        out.extend_from_slice(&id.to_le_bytes());
        out.extend_from_slice(payload);
        out
    }

    fn decode(body: &[u8]) -> Result<Self> {
        let bad = || Error::invalid("corrupt journal record");
        let (&op, rest) = body.split_first().ok_or_else(bad)?;
        let (&qlen, rest) = rest.split_first().ok_or_else(bad)?;
        let qlen = usize::from(qlen);
        if rest.len() < qlen + 8 {
            return Err(bad());
        }
        let queue = String::from_utf8(rest[..qlen].to_vec()).map_err(|_| bad())?;
        let message_id = u64::from_le_bytes(rest[qlen..qlen + 8].try_into().map_err(|_| bad())?);
        let payload = &rest[qlen + 8..];
        match op {
            OP_ENQUEUE => Ok(Record::Enqueue { queue, message_id, payload: payload.to_vec() }),
            OP_ACK => Ok(Record::Ack { queue, message_id }),
            OP_DEAD => Ok(Record::Dead { queue, message_id }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens (creating if needed) and returns all intact records.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Record>)> {
        let path = path.as_ref().to_path_buf();
        let mut bytes = Vec::new();
        if path.exists() {
            File::open(&path)?.read_to_end(&mut bytes)?;
        }
        let mut records = Vec::new();
        let mut pos = 0;
        let mut intact = 0;
        while pos + 4 <= bytes.len() {
            let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
            if pos + 4 + len > bytes.len() {
                break;
            }
            records.push(Record::decode(&bytes[pos + 4..pos + 4 + len])?);
            pos += 4 + len;
            intact = pos;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if intact < bytes.len() {
            file.set_len(intact as u64)?;
        }
        Ok((Self { path, file }, records))
    }

    pub fn append(&mut self, record: &Record) -> Result<()> {
        self.file.write_all(&record.encode())?;
        self.file.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
