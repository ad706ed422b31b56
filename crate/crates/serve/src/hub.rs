//! Fan-out of interface events to websocket clients.
//!
//! Every client owns a bounded queue. Publishing never waits: a client whose
//! queue is full is dropped, which closes its connection, and the remaining
//! clients are unaffected.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use tokio::sync::mpsc;

pub const DEFAULT_QUEUE_CAPACITY: usize = 256;
pub const DEFAULT_MAX_CLIENTS: usize = 64;

struct Client {
    id: u64,
    tx: mpsc::Sender<Arc<str>>,
}

pub struct EventHub {
    clients: Mutex<Vec<Client>>,
    capacity: usize,
    max_clients: usize,
    next_id: AtomicU64,
}

/// Receiving end of one client's queue. The queue closes when the hub drops
/// the client.
pub struct Subscription {
    pub id: u64,
    pub rx: mpsc::Receiver<Arc<str>>,
}

impl EventHub {
    pub fn new(capacity: usize, max_clients: usize) -> Self {
        EventHub {
            clients: Mutex::new(Vec::new()),
            capacity: capacity.max(1),
            max_clients,
            next_id: AtomicU64::new(1),
        }
    }

    /// `None` when the client limit is reached.
    pub fn subscribe(&self) -> Option<Subscription> {
        let mut clients = self.clients.lock().unwrap_or_else(|e| e.into_inner());
        if clients.len() >= self.max_clients {
            return None;
        }
        let (tx, rx) = mpsc::channel(self.capacity);
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        clients.push(Client { id, tx });
        Some(Subscription { id, rx })
    }

    pub fn unsubscribe(&self, id: u64) {
        self.clients
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .retain(|c| c.id != id);
    }

    /// Queue `message` for every client, dropping those that cannot take it.
    /// Returns how many clients received it. Messages from concurrent
    /// publishers are serialized, so every client sees the same order.
    pub fn publish(&self, message: &str) -> usize {
        let message: Arc<str> = Arc::from(message);
        let mut clients = self.clients.lock().unwrap_or_else(|e| e.into_inner());
        clients.retain(|c| match c.tx.try_send(message.clone()) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                tracing::warn!(client = c.id, "event queue overflowed; disconnecting client");
                false
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        });
        clients.len()
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl Default for EventHub {
    fn default() -> Self {
        EventHub::new(DEFAULT_QUEUE_CAPACITY, DEFAULT_MAX_CLIENTS)
    }
}
