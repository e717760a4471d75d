use std::sync::mpsc::{channel, Sender};
use std::time::Duration;

use super::endpoint::{Delivery, Endpoint, Message, Outbox};
use crate::error::{Error, Result};

struct ChannelOutbox {
    peers: Vec<Sender<Delivery>>,
}

impl Outbox for ChannelOutbox {
    fn send(&mut self, dst: usize, msg: Message) -> Result<()> {
        self.peers[dst]
            .send(Ok(msg))
            .map_err(|_| Error::Transport(format!("rank {dst} has exited")))
    }
}

/// `n` connected endpoints for ranks living in one process.
pub fn inproc_endpoints(n: usize, timeout: Duration) -> Vec<Endpoint> {
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..n).map(|_| channel::<Delivery>()).unzip();
    rxs.into_iter()
        .enumerate()
        .map(|(id, rx)| Endpoint::new(id, n, Box::new(ChannelOutbox { peers: txs.clone() }), rx, timeout))
        .collect()
}
