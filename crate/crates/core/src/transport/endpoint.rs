use std::collections::VecDeque;
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Counts = 1,
    Rays = 2,
    Tiles = 3,
    ProxySet = 4,
    SceneHash = 5,
    Final = 6,
    Stats = 7,
}

impl Opcode {
    pub fn from_u8(b: u8) -> Option<Opcode> {
        use Opcode::*;
        [Counts, Rays, Tiles, ProxySet, SceneHash, Final, Stats].into_iter().find(|o| *o as u8 == b)
    }
}

#[derive(Debug)]
pub struct Message {
    pub src: usize,
    pub seq: u32,
    pub op: Opcode,
    pub payload: Vec<u8>,
}

/// Something delivered to an endpoint's inbox: a message or a link failure.
pub type Delivery = std::result::Result<Message, (usize, String)>;

/// Sending half of a backend.
pub trait Outbox: Send {
    fn send(&mut self, dst: usize, msg: Message) -> Result<()>;
}

/// One participant's view of a fully connected group. Every ordered pair of
/// participants has its own sequence counter, so collectives over subsets of
/// the group stay checkable.
pub struct Endpoint {
    id: usize,
    size: usize,
    outbox: Box<dyn Outbox>,
    inbox: Receiver<Delivery>,
    pending: Vec<VecDeque<Message>>,
    failed: Vec<Option<String>>,
    send_seq: Vec<u32>,
    recv_seq: Vec<u32>,
    timeout: Duration,
}

impl Endpoint {
    pub fn new(id: usize, size: usize, outbox: Box<dyn Outbox>, inbox: Receiver<Delivery>, timeout: Duration) -> Self {
        Endpoint {
            id,
            size,
            outbox,
            inbox,
            pending: (0..size).map(|_| VecDeque::new()).collect(),
            failed: vec![None; size],
            send_seq: vec![0; size],
            recv_seq: vec![0; size],
            timeout,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn send(&mut self, dst: usize, op: Opcode, payload: Vec<u8>) -> Result<()> {
        let seq = self.send_seq[dst];
        self.send_seq[dst] += 1;
        self.outbox.send(dst, Message { src: self.id, seq, op, payload })
    }

    /// Next message from `src`, which must carry opcode `op`.
    pub fn recv(&mut self, src: usize, op: Opcode) -> Result<Vec<u8>> {
        let deadline = Instant::now() + self.timeout;
        loop {
            if let Some(m) = self.pending[src].pop_front() {
                let want = self.recv_seq[src];
                if m.seq != want {
                    return Err(Error::Protocol(format!(
                        "rank {} expected message {want} from {src}, got {}",
                        self.id, m.seq
                    )));
                }
                if m.op != op {
                    return Err(Error::Protocol(format!(
                        "rank {} expected {op:?} from {src} (message {want}), got {:?}",
                        self.id, m.op
                    )));
                }
                self.recv_seq[src] += 1;
                return Ok(m.payload);
            }
            if let Some(e) = &self.failed[src] {
                return Err(Error::Transport(format!("link {src} -> {}: {e}", self.id)));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            match self.inbox.recv_timeout(left) {
                Ok(Ok(m)) => self.pending[m.src].push_back(m),
                Ok(Err((from, e))) => self.failed[from] = Some(e),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Transport(format!(
                        "rank {} timed out after {:?} waiting for {op:?} from {src}",
                        self.id, self.timeout
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Transport(format!("rank {}: all links closed", self.id)))
                }
            }
        }
    }
}
