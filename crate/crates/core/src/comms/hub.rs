use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use tokio::sync::Notify;

use super::codec::{encode_body, CodecError};
use super::message::{Message, Payload, Recipient};
use crate::agent::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommError {
    #[error("channel closed")]
    Closed,
    #[error("payload of {size} bytes exceeds the {max}-byte limit")]
    Oversized { size: usize, max: usize },
    #[error("unknown receiver {0}")]
    UnknownReceiver(AgentId),
    #[error("transport i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("broker rejected request: {0}")]
    Rejected(String),
}

/// Sender/receiver contract shared by the in-process hub and TCP clients.
pub trait Transport: Send + Sync {
    /// Makes `id` a known receiver.
    fn register(&self, id: AgentId) -> Result<(), CommError>;
    fn send(&self, message: Message) -> Result<(), CommError>;
    /// Drains every queued message for `receiver`, oldest first.
    fn receive_pending(&self, receiver: AgentId) -> Result<Vec<Message>, CommError>;
    fn close(&self);
    /// Wake-up handle signalled on delivery to `receiver`, when supported.
    fn notifier(&self, _receiver: AgentId) -> Option<Arc<Notify>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    /// Largest accepted message body in bytes.
    pub max_payload: usize,
    /// Probability that a delivery is silently dropped.
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self { max_payload: 1 << 20, drop_probability: 0.0, seed: 0 }
    }
}

#[derive(Debug)]
struct HubInner {
    queues: BTreeMap<AgentId, VecDeque<Message>>,
    notifiers: BTreeMap<AgentId, Arc<Notify>>,
    cut_links: BTreeSet<(AgentId, AgentId)>,
    rng: ChaCha8Rng,
    closed: bool,
    delivered: u64,
    dropped: u64,
}

/// In-process message hub with one FIFO queue per receiver.
///
/// Broadcasts go to every registered agent except the sender, in id order.
#[derive(Debug)]
pub struct InProcessHub {
    config: HubConfig,
    inner: Mutex<HubInner>,
}

impl InProcessHub {
    pub fn new(config: HubConfig) -> Self {
        Self {
            inner: Mutex::new(HubInner {
                queues: BTreeMap::new(),
                notifiers: BTreeMap::new(),
                cut_links: BTreeSet::new(),
                rng: ChaCha8Rng::seed_from_u64(config.seed),
                closed: false,
                delivered: 0,
                dropped: 0,
            }),
            config,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HubInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Cuts the link between `a` and `b` in both directions; messages on it
    /// are dropped until [`InProcessHub::reconnect`].
    pub fn disconnect(&self, a: AgentId, b: AgentId) {
        self.lock().cut_links.insert((a.min(b), a.max(b)));
    }

    pub fn reconnect(&self, a: AgentId, b: AgentId) {
        self.lock().cut_links.remove(&(a.min(b), a.max(b)));
    }

    /// `(delivered, dropped)` counts so far.
    pub fn stats(&self) -> (u64, u64) {
        let inner = self.lock();
        (inner.delivered, inner.dropped)
    }

    pub fn registered(&self) -> Vec<AgentId> {
        self.lock().queues.keys().copied().collect()
    }
}

impl Default for InProcessHub {
    fn default() -> Self {
        Self::new(HubConfig::default())
    }
}

impl Transport for InProcessHub {
    fn register(&self, id: AgentId) -> Result<(), CommError> {
        let mut inner = self.lock();
        if inner.closed {
            return Err(CommError::Closed);
        }
        inner.queues.entry(id).or_default();
        inner.notifiers.entry(id).or_insert_with(|| Arc::new(Notify::new()));
        Ok(())
    }

    fn send(&self, message: Message) -> Result<(), CommError> {
        let size = encode_body(&message).len();
        if size > self.config.max_payload {
            return Err(CommError::Oversized { size, max: self.config.max_payload });
        }
        let mut inner = self.lock();
        if inner.closed {
            return Err(CommError::Closed);
        }
        let targets: Vec<AgentId> = match message.recipient {
            Recipient::Agent(id) => {
                if !inner.queues.contains_key(&id) {
                    return Err(CommError::UnknownReceiver(id));
                }
                vec![id]
            }
            Recipient::Broadcast => inner.queues.keys().copied().filter(|&id| id != message.sender).collect(),
        };
        for target in targets {
            let link = (message.sender.min(target), message.sender.max(target));
            let lost = inner.cut_links.contains(&link)
                || (self.config.drop_probability > 0.0 && inner.rng.random::<f64>() < self.config.drop_probability);
            if lost {
                inner.dropped += 1;
                continue;
            }
            inner.delivered += 1;
            inner.queues.get_mut(&target).expect("registered").push_back(message.clone());
            if let Some(n) = inner.notifiers.get(&target) {
                n.notify_one();
            }
        }
        Ok(())
    }

    fn receive_pending(&self, receiver: AgentId) -> Result<Vec<Message>, CommError> {
        let mut inner = self.lock();
        if inner.closed {
            return Err(CommError::Closed);
        }
        Ok(inner.queues.get_mut(&receiver).map(|q| q.drain(..).collect()).unwrap_or_default())
    }

    fn close(&self) {
        let mut inner = self.lock();
        inner.closed = true;
        for n in inner.notifiers.values() {
            n.notify_waiters();
        }
    }

    fn notifier(&self, receiver: AgentId) -> Option<Arc<Notify>> {
        self.lock().notifiers.get(&receiver).cloned()
    }
}

/// Per-agent sending handle that stamps messages with a monotone sequence
/// number.
#[derive(Clone)]
pub struct Endpoint {
    id: AgentId,
    transport: Arc<dyn Transport>,
    next_seq: Arc<AtomicU64>,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Endpoint {
    pub fn new(id: AgentId, transport: Arc<dyn Transport>) -> Result<Self, CommError> {
        transport.register(id)?;
        Ok(Self { id, transport, next_seq: Arc::new(AtomicU64::new(0)) })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn send(&self, recipient: Recipient, sim_time: f64, payload: Payload) -> Result<u64, CommError> {
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
        self.transport.send(Message { sender: self.id, recipient, seq, sim_time, payload })?;
        Ok(seq)
    }

    pub fn receive(&self) -> Result<Vec<Message>, CommError> {
        self.transport.receive_pending(self.id)
    }

    pub fn notifier(&self) -> Option<Arc<Notify>> {
        self.transport.notifier(self.id)
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hub_with(ids: &[AgentId]) -> Arc<InProcessHub> {
        let hub = Arc::new(InProcessHub::default());
        for &id in ids {
            hub.register(id).unwrap();
        }
        hub
    }

    fn msg(sender: AgentId, to: Recipient, seq: u64) -> Message {
        Message { sender, recipient: to, seq, sim_time: 0.0, payload: Payload::Epsilon(seq as f64) }
    }

    #[test]
    fn fifo_per_pair() {
        let hub = hub_with(&[1, 2]);
        hub.send(msg(1, Recipient::Agent(2), 0)).unwrap();
        hub.send(msg(1, Recipient::Agent(2), 1)).unwrap();
        let got: Vec<u64> = hub.receive_pending(2).unwrap().iter().map(|m| m.seq).collect();
        assert_eq!(got, [0, 1]);
        assert!(hub.receive_pending(2).unwrap().is_empty());
    }

    #[test]
    fn broadcast_skips_sender() {
        let hub = hub_with(&[1, 2, 3, 4, 5]);
        hub.send(msg(1, Recipient::Broadcast, 0)).unwrap();
        assert_eq!(hub.stats().0, 4);
        assert!(hub.receive_pending(1).unwrap().is_empty());
    }

    #[test]
    fn closed_hub_rejects() {
        let hub = hub_with(&[1, 2]);
        hub.close();
        assert_eq!(hub.send(msg(1, Recipient::Agent(2), 0)), Err(CommError::Closed));
    }

    #[test]
    fn oversized_rejected() {
        let hub = InProcessHub::new(HubConfig { max_payload: 8, ..HubConfig::default() });
        hub.register(1).unwrap();
        assert!(matches!(hub.send(msg(1, Recipient::Agent(1), 0)), Err(CommError::Oversized { .. })));
    }

    #[test]
    fn cut_link_drops_both_directions() {
        let hub = hub_with(&[1, 2, 3]);
        hub.disconnect(2, 1);
        hub.send(msg(1, Recipient::Broadcast, 0)).unwrap();
        hub.send(msg(2, Recipient::Agent(1), 0)).unwrap();
        assert!(hub.receive_pending(2).unwrap().is_empty());
        assert!(hub.receive_pending(1).unwrap().is_empty());
        assert_eq!(hub.receive_pending(3).unwrap().len(), 1);
    }

    #[test]
    fn endpoint_sequences() {
        let hub = hub_with(&[2]);
        let ep = Endpoint::new(1, hub.clone()).unwrap();
        assert_eq!(ep.send(Recipient::Agent(2), 0.0, Payload::Epsilon(0.0)).unwrap(), 0);
        assert_eq!(ep.send(Recipient::Agent(2), 0.1, Payload::Epsilon(0.0)).unwrap(), 1);
    }
}
