use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::journal::{Journal, Record};
use super::{
    dead_letter_name, validate_queue_name, Delivery, Envelope, Lease, MessageQueue, DEAD_SUFFIX, DEFAULT_LEASE,
    DEFAULT_MAX_DELIVERIES,
};
use crate::clock::{system_clock, SharedClock};
use crate::error::{Error, Result};

const WAIT_SLICE: Duration = Duration::from_millis(20);

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub default_lease: Duration,
    pub max_deliveries: u32,
    /// Journal for durable queues. Without one, durable queues behave like
    /// transient ones.
    pub journal_path: Option<PathBuf>,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self { default_lease: DEFAULT_LEASE, max_deliveries: DEFAULT_MAX_DELIVERIES, journal_path: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub published: u64,
    pub acked: u64,
    pub ready: u64,
    pub leased: u64,
    /// Messages moved out to the dead-letter companion.
    pub dead_lettered: u64,
}

/// Totals across the broker. At a quiescent point
/// `published == acked + ready + leased + dead`, where `dead` counts messages
/// currently sitting (or leased) on dead-letter queues.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokerStats {
    pub published: u64,
    pub acked: u64,
    pub ready: u64,
    pub leased: u64,
    pub dead: u64,
}

#[derive(Debug)]
struct Queue {
    durable: bool,
    ready: VecDeque<Envelope>,
    published: u64,
    acked: u64,
    dead_lettered: u64,
}

impl Queue {
    fn new(durable: bool) -> Self {
        Self { durable, ready: VecDeque::new(), published: 0, acked: 0, dead_lettered: 0 }
    }
}

#[derive(Debug)]
struct Active {
    envelope: Envelope,
    lease: Lease,
}

#[derive(Debug, Default)]
struct State {
    queues: BTreeMap<String, Queue>,
    active: HashMap<u64, Active>,
    next_id: u64,
    next_epoch: u64,
}

#[derive(Debug)]
struct Shared {
    state: Mutex<State>,
    ready: Condvar,
    clock: SharedClock,
    config: BrokerConfig,
    journal: Option<Mutex<Journal>>,
}

/// In-process broker. Clones are handles to the same broker.
#[derive(Debug, Clone)]
pub struct Broker {
    shared: Arc<Shared>,
}

fn is_dead_queue(name: &str) -> bool {
    name.ends_with(DEAD_SUFFIX)
}

impl Broker {
    pub fn new(config: BrokerConfig) -> Result<Self> {
        Self::with_clock(config, system_clock())
    }

    pub fn with_clock(config: BrokerConfig, clock: SharedClock) -> Result<Self> {
        if config.max_deliveries == 0 {
            return Err(Error::invalid("max_deliveries must be at least 1"));
        }
        let mut state = State { next_id: 1, next_epoch: 1, ..State::default() };
        let journal = match &config.journal_path {
            Some(path) => {
                let (journal, records) = Journal::open(path)?;
                replay(&mut state, records, clock.now_ms())?;
                Some(Mutex::new(journal))
            }
            None => None,
        };
        Ok(Self {
            shared: Arc::new(Shared { state: Mutex::new(state), ready: Condvar::new(), clock, config, journal }),
        })
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.shared.config
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.shared.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn journal(&self, state: &State, queue: &str, record: Record) -> Result<()> {
        let durable = state.queues.get(queue).is_some_and(|q| q.durable);
        match (&self.shared.journal, durable) {
            (Some(j), true) => j.lock().unwrap_or_else(|e| e.into_inner()).append(&record),
            _ => Ok(()),
        }
    }

    pub fn queue_stats(&self, queue: &str) -> Result<QueueStats> {
        let mut state = self.lock();
        self.reap_expired(&mut state)?;
        let q = state.queues.get(queue).ok_or_else(|| Error::not_found(format!("queue {queue}")))?;
        let leased = state.active.values().filter(|a| a.lease.queue == queue).count() as u64;
        Ok(QueueStats {
            published: q.published,
            acked: q.acked,
            ready: q.ready.len() as u64,
            leased,
            dead_lettered: q.dead_lettered,
        })
    }

    pub fn stats(&self) -> Result<BrokerStats> {
        let mut state = self.lock();
        self.reap_expired(&mut state)?;
        let mut s = BrokerStats::default();
        for (name, q) in &state.queues {
            s.acked += q.acked;
            if is_dead_queue(name) {
                s.dead += q.ready.len() as u64;
            } else {
                s.published += q.published;
                s.ready += q.ready.len() as u64;
            }
        }
        for a in state.active.values() {
            if is_dead_queue(&a.lease.queue) {
                s.dead += 1;
            } else {
                s.leased += 1;
            }
        }
        Ok(s)
    }

    pub fn queue_names(&self) -> Vec<String> {
        self.lock().queues.keys().cloned().collect()
    }

    /// Returns expired leases to their queues. Expiry counts as a failed
    /// delivery.
    fn reap_expired(&self, state: &mut State) -> Result<()> {
        let now = self.shared.clock.now_ms();
        let mut expired: Vec<u64> =
            state.active.values().filter(|a| a.lease.expires_at_ms <= now).map(|a| a.envelope.message_id).collect();
        if expired.is_empty() {
            return Ok(());
        }
        // pushed to the front, so reverse id order leaves the oldest first
        expired.sort_unstable_by(|a, b| b.cmp(a));
        for id in expired {
            let active = state.active.remove(&id).expect("listed above");
            self.fail_delivery(state, active.envelope, true)?;
        }
        self.shared.ready.notify_all();
        Ok(())
    }

    fn fail_delivery(&self, state: &mut State, envelope: Envelope, requeue: bool) -> Result<()> {
        let queue = envelope.queue.clone();
        let dead_queue = is_dead_queue(&queue);
        if dead_queue && !requeue {
            // nothing further to dead-letter into; dropping counts as handled
            self.journal(state, &queue, Record::Ack { queue: queue.clone(), message_id: envelope.message_id })?;
            state.queues.get_mut(&queue).expect("queue exists").acked += 1;
            return Ok(());
        }
        let exhausted = envelope.delivery_count >= self.shared.config.max_deliveries;
        if dead_queue || (requeue && !exhausted) {
            state.queues.get_mut(&queue).expect("queue exists").ready.push_front(envelope);
            return Ok(());
        }
        let dead = dead_letter_name(&queue);
        self.journal(state, &queue, Record::Dead { queue: queue.clone(), message_id: envelope.message_id })?;
        let durable = state.queues[&queue].durable;
        state.queues.get_mut(&queue).expect("queue exists").dead_lettered += 1;
        let dq = state.queues.entry(dead.clone()).or_insert_with(|| Queue::new(durable));
        dq.published += 1;
        dq.ready.push_back(Envelope {
            queue: dead,
            delivery_count: 0,
            enqueued_at_ms: self.shared.clock.now_ms(),
            ..envelope
        });
        Ok(())
    }

    fn take_lease(&self, state: &mut State, lease: &Lease) -> Result<Active> {
        self.reap_expired(state)?;
        match state.active.get(&lease.message_id) {
            Some(a) if a.lease == *lease => Ok(state.active.remove(&lease.message_id).expect("present")),
            _ => Err(Error::LeaseInvalid),
        }
    }

    fn try_consume(&self, state: &mut State, queue: &str, consumer_id: &str, lease: Duration) -> Result<Option<Delivery>> {
        self.reap_expired(state)?;
        let now = self.shared.clock.now_ms();
        let epoch = state.next_epoch;
        let q = state.queues.get_mut(queue).ok_or_else(|| Error::not_found(format!("queue {queue}")))?;
        let Some(mut envelope) = q.ready.pop_front() else {
            return Ok(None);
        };
        state.next_epoch += 1;
        envelope.delivery_count += 1;
        let lease = Lease {
            message_id: envelope.message_id,
            queue: queue.to_string(),
            consumer_id: consumer_id.to_string(),
            expires_at_ms: now.saturating_add(lease.as_millis() as u64),
            epoch,
        };
        state.active.insert(envelope.message_id, Active { envelope: envelope.clone(), lease: lease.clone() });
        Ok(Some(Delivery { envelope, lease }))
    }
}

fn replay(state: &mut State, records: Vec<Record>, now: u64) -> Result<()> {
    for record in records {
        match record {
            Record::Enqueue { queue, message_id, payload } => {
                let q = state.queues.entry(queue.clone()).or_insert_with(|| Queue::new(true));
                q.published += 1;
                q.ready.push_back(Envelope { message_id, queue, payload, delivery_count: 0, enqueued_at_ms: now });
                state.next_id = state.next_id.max(message_id + 1);
            }
            Record::Ack { queue, message_id } => {
                if let Some(q) = state.queues.get_mut(&queue) {
                    if let Some(pos) = q.ready.iter().position(|e| e.message_id == message_id) {
                        q.ready.remove(pos);
                        q.acked += 1;
                    }
                }
            }
            Record::Dead { queue, message_id } => {
                let Some(q) = state.queues.get_mut(&queue) else { continue };
                let Some(pos) = q.ready.iter().position(|e| e.message_id == message_id) else { continue };
                let envelope = q.ready.remove(pos).expect("position valid");
                q.dead_lettered += 1;
                let dead = dead_letter_name(&queue);
                let dq = state.queues.entry(dead.clone()).or_insert_with(|| Queue::new(true));
                dq.published += 1;
                dq.ready.push_back(Envelope { queue: dead, ..envelope });
            }
        }
    }
    Ok(())
}

impl MessageQueue for Broker {
    fn declare_queue(&self, name: &str, durable: bool) -> Result<()> {
        validate_queue_name(name)?;
        let mut state = self.lock();
        let persist = durable && self.shared.journal.is_some();
        let q = state.queues.entry(name.to_string()).or_insert_with(|| Queue::new(persist));
        q.durable |= persist;
        if !is_dead_queue(name) {
            let dead = dead_letter_name(name);
            validate_queue_name(&dead)?;
            let dq = state.queues.entry(dead).or_insert_with(|| Queue::new(persist));
            dq.durable |= persist;
        }
        Ok(())
    }

    fn publish(&self, queue: &str, payload: &[u8]) -> Result<u64> {
        let mut state = self.lock();
        if !state.queues.contains_key(queue) {
            return Err(Error::not_found(format!("queue {queue}")));
        }
        let message_id = state.next_id;
        state.next_id += 1;
        self.journal(&state, queue, Record::Enqueue { queue: queue.to_string(), message_id, payload: payload.to_vec() })?;
        let envelope = Envelope {
            message_id,
            queue: queue.to_string(),
            payload: payload.to_vec(),
            delivery_count: 0,
            enqueued_at_ms: self.shared.clock.now_ms(),
        };
        let q = state.queues.get_mut(queue).expect("checked");
        q.published += 1;
        q.ready.push_back(envelope);
        drop(state);
        self.shared.ready.notify_all();
        Ok(message_id)
    }

    fn consume(&self, queue: &str, consumer_id: &str, lease: Option<Duration>) -> Result<Option<Delivery>> {
        let lease = lease.unwrap_or(self.shared.config.default_lease);
        let mut state = self.lock();
        self.try_consume(&mut state, queue, consumer_id, lease)
    }

    fn consume_blocking(
        &self,
        queue: &str,
        consumer_id: &str,
        lease: Option<Duration>,
        timeout: Duration,
    ) -> Result<Option<Delivery>> {
        let lease = lease.unwrap_or(self.shared.config.default_lease);
        let deadline = Instant::now() + timeout;
        let mut state = self.lock();
        loop {
            if let Some(d) = self.try_consume(&mut state, queue, consumer_id, lease)? {
                return Ok(Some(d));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            // bounded waits so lease expiry under a foreign clock is noticed
            let wait = (deadline - now).min(WAIT_SLICE);
            state = self.shared.ready.wait_timeout(state, wait).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    fn ack(&self, lease: &Lease) -> Result<()> {
        let mut state = self.lock();
        let active = self.take_lease(&mut state, lease)?;
        let queue = active.envelope.queue;
        self.journal(&state, &queue, Record::Ack { queue: queue.clone(), message_id: lease.message_id })?;
        state.queues.get_mut(&queue).expect("queue exists").acked += 1;
        Ok(())
    }

    fn nack(&self, lease: &Lease, requeue: bool) -> Result<()> {
        let mut state = self.lock();
        let active = self.take_lease(&mut state, lease)?;
        self.fail_delivery(&mut state, active.envelope, requeue)?;
        drop(state);
        self.shared.ready.notify_all();
        Ok(())
    }
}
