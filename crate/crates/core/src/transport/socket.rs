//! Full-mesh TCP backend. Frames are `{u32 seq, u8 opcode, u32 len, payload}`,
//! little-endian. Participant `j` connects to every `i < j` and introduces
//! itself with a hello frame; a reader thread per link feeds the endpoint inbox.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::endpoint::{Delivery, Endpoint, Message, Opcode, Outbox};
use crate::error::{Error, Result};

const HELLO: u32 = 0x5054_5248; // "HRTP"
const MAX_FRAME: u32 = 1 << 30;

fn terr(e: impl std::fmt::Display) -> Error {
    Error::Transport(e.to_string())
}

struct TcpOutbox {
    links: Vec<Option<BufWriter<TcpStream>>>,
}

impl Outbox for TcpOutbox {
    fn send(&mut self, dst: usize, msg: Message) -> Result<()> {
        let w = self.links[dst].as_mut().ok_or_else(|| Error::Transport(format!("no link to {dst}")))?;
        let mut head = [0u8; 9];
        head[..4].copy_from_slice(&msg.seq.to_le_bytes());
        head[4] = msg.op as u8;
        head[5..].copy_from_slice(&(msg.payload.len() as u32).to_le_bytes());
        w.write_all(&head)
            .and_then(|_| w.write_all(&msg.payload))
            .and_then(|_| w.flush())
            .map_err(|e| Error::Transport(format!("send to {dst}: {e}")))
    }
}

fn read_frames(src: usize, stream: TcpStream, tx: Sender<Delivery>) {
    let mut r = BufReader::new(stream);
    loop {
        let mut head = [0u8; 9];
        if let Err(e) = r.read_exact(&mut head) {
            let _ = tx.send(Err((src, format!("connection closed: {e}"))));
            return;
        }
        let seq = u32::from_le_bytes(head[..4].try_into().unwrap());
        let len = u32::from_le_bytes(head[5..].try_into().unwrap());
        let Some(op) = Opcode::from_u8(head[4]) else {
            let _ = tx.send(Err((src, format!("unknown opcode {}", head[4]))));
            return;
        };
        if len > MAX_FRAME {
            let _ = tx.send(Err((src, format!("frame of {len} bytes exceeds limit"))));
            return;
        }
        let mut payload = vec![0u8; len as usize];
        if let Err(e) = r.read_exact(&mut payload) {
            let _ = tx.send(Err((src, format!("truncated frame: {e}"))));
            return;
        }
        if tx.send(Ok(Message { src, seq, op, payload })).is_err() {
            return;
        }
    }
}

fn connect_retry(addr: SocketAddr, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(Error::Transport(format!("connect {addr}: {e}"))),
            Err(_) => thread::sleep(Duration::from_millis(50)),
        }
    }
}

/// Joins the mesh as participant `id`, listening on `listener` (already bound
/// to `peers[id]`) and connecting to lower-numbered participants.
pub fn tcp_endpoint(id: usize, peers: &[SocketAddr], listener: TcpListener, timeout: Duration) -> Result<Endpoint> {
    let n = peers.len();
    if id >= n {
        return Err(Error::Config(format!("participant {id} outside peer list of {n}")));
    }
    let deadline = Instant::now() + timeout;
    let (tx, rx) = channel::<Delivery>();
    let mut streams: Vec<Option<TcpStream>> = (0..n).map(|_| None).collect();
    for (peer, addr) in peers.iter().enumerate().take(id) {
        let mut s = connect_retry(*addr, deadline)?;
        let mut hello = [0u8; 8];
        hello[..4].copy_from_slice(&HELLO.to_le_bytes());
        hello[4..].copy_from_slice(&(id as u32).to_le_bytes());
        s.write_all(&hello).map_err(terr)?;
        streams[peer] = Some(s);
    }
    listener.set_nonblocking(true).map_err(terr)?;
    let mut missing = n - 1 - id;
    while missing > 0 {
        match listener.accept() {
            Ok((mut s, _)) => {
                s.set_nonblocking(false).map_err(terr)?;
                s.set_read_timeout(Some(timeout)).map_err(terr)?;
                let mut hello = [0u8; 8];
                s.read_exact(&mut hello).map_err(terr)?;
                let magic = u32::from_le_bytes(hello[..4].try_into().unwrap());
                let peer = u32::from_le_bytes(hello[4..].try_into().unwrap()) as usize;
                if magic != HELLO || peer <= id || peer >= n || streams[peer].is_some() {
                    return Err(Error::Protocol(format!("bad hello from {peer} (magic {magic:#x})")));
                }
                s.set_read_timeout(None).map_err(terr)?;
                streams[peer] = Some(s);
                missing -= 1;
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(Error::Transport(format!("participant {id}: {missing} peers never connected")));
                }
                thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(terr(e)),
        }
    }
    let mut links = Vec::with_capacity(n);
    for (peer, s) in streams.into_iter().enumerate() {
        match s {
            Some(s) => {
                s.set_nodelay(true).map_err(terr)?;
                let reader = s.try_clone().map_err(terr)?;
                let tx = tx.clone();
                thread::spawn(move || read_frames(peer, reader, tx));
                links.push(Some(BufWriter::with_capacity(1 << 16, s)));
            }
            None => links.push(None),
        }
    }
    Ok(Endpoint::new(id, n, Box::new(TcpOutbox { links }), rx, timeout))
}
