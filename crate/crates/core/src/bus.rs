//! In-process publish/subscribe bus.
//!
//! Topics are named channels with a declared payload kind, and they sit
//! between producers and consumers so either side can be swapped without the
//! other noticing. Topic names follow the `kind/subject` convention, e.g.
//! `rr/subject1` or `gps/subject3`.
//!
//! Delivery is exactly-once and in publish order for each subscriber. A
//! subscriber only sees envelopes published after it subscribed; history is
//! the store's job.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender, TryRecvError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{Payload, RecordKind, Timestamp};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("topic name must not be empty")]
    EmptyName,
    #[error("topic {0:?} already exists")]
    DuplicateTopic(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("topic {topic:?} carries {expected} payloads, got {got}")]
    SchemaMismatch {
        topic: String,
        expected: RecordKind,
        got: RecordKind,
    },
}

/// A payload as delivered to subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEnvelope {
    pub topic_name: String,
    pub publisher_id: String,
    pub publish_ts: Timestamp,
    /// Strictly increasing per (publisher, topic), starting at 0.
    pub sequence: u64,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy)]
pub struct BusConfig {
    /// Queue depth above which a subscriber backlog is logged.
    pub high_water: usize,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig { high_water: 100_000 }
    }
}

type ClockFn = dyn Fn() -> Timestamp + Send + Sync;

struct SubscriberSlot {
    id: String,
    tx: Sender<Arc<TopicEnvelope>>,
    delivered: Arc<AtomicU64>,
    pending: Arc<AtomicUsize>,
    warned: bool,
}

struct TopicState {
    kind: RecordKind,
    subscribers: Vec<SubscriberSlot>,
    next_seq: HashMap<String, u64>,
    published: u64,
}

struct Inner {
    topics: Mutex<HashMap<String, TopicState>>,
    last_ts: Mutex<HashMap<String, Timestamp>>,
    clock: Box<ClockFn>,
    config: BusConfig,
}

/// Handle to the bus. Cloning is cheap and every clone sees the same topics.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

/// Returned by [`Bus::create_topic`] and [`Bus::topic`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicHandle {
    name: String,
    kind: RecordKind,
}

impl TopicHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> RecordKind {
        self.kind
    }
}

/// Receiving end for one subscriber on one topic.
pub struct Subscription {
    topic_name: String,
    subscriber_id: String,
    rx: Receiver<Arc<TopicEnvelope>>,
    delivered: Arc<AtomicU64>,
    pending: Arc<AtomicUsize>,
}

impl Subscription {
    pub fn topic_name(&self) -> &str {
        &self.topic_name
    }

    pub fn subscriber_id(&self) -> &str {
        &self.subscriber_id
    }

    /// Number of envelopes delivered to this subscription so far, whether or
    /// not they have been received yet.
    pub fn delivery_count(&self) -> u64 {
        self.delivered.load(Ordering::SeqCst)
    }

    pub fn pending(&self) -> usize {
        self.pending.load(Ordering::SeqCst)
    }

    pub fn try_recv(&self) -> Option<Arc<TopicEnvelope>> {
        match self.rx.try_recv() {
            Ok(env) => {
                self.pending.fetch_sub(1, Ordering::SeqCst);
                Some(env)
            }
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => None,
        }
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Arc<TopicEnvelope>> {
        match self.rx.recv_timeout(timeout) {
            Ok(env) => {
                self.pending.fetch_sub(1, Ordering::SeqCst);
                Some(env)
            }
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => None,
        }
    }

    /// Everything queued right now, in delivery order.
    pub fn drain(&self) -> Vec<Arc<TopicEnvelope>> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }
}

fn system_clock() -> Timestamp {
    let ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0);
    Timestamp(ms)
}

impl Default for Bus {
    fn default() -> Self {
        Bus::new(BusConfig::default())
    }
}

impl Bus {
    pub fn new(config: BusConfig) -> Self {
        Bus::with_clock(config, system_clock)
    }

    /// Bus whose envelopes are stamped by `clock` instead of the wall clock.
    pub fn with_clock<F>(config: BusConfig, clock: F) -> Self
    where
        F: Fn() -> Timestamp + Send + Sync + 'static,
    {
        Bus {
            inner: Arc::new(Inner {
                topics: Mutex::new(HashMap::new()),
                last_ts: Mutex::new(HashMap::new()),
                clock: Box::new(clock),
                config,
            }),
        }
    }

    pub fn create_topic(&self, name: &str, kind: RecordKind) -> Result<TopicHandle, BusError> {
        if name.is_empty() {
            return Err(BusError::EmptyName);
        }
        let mut topics = self.inner.topics.lock().unwrap();
        if topics.contains_key(name) {
            return Err(BusError::DuplicateTopic(name.to_string()));
        }
        topics.insert(
            name.to_string(),
            TopicState {
                kind,
                subscribers: Vec::new(),
                next_seq: HashMap::new(),
                published: 0,
            },
        );
        Ok(TopicHandle { name: name.to_string(), kind })
    }

    /// Returns the existing topic or creates it. Used by pipeline stages that
    /// may start in any order.
    pub fn ensure_topic(&self, name: &str, kind: RecordKind) -> Result<TopicHandle, BusError> {
        match self.create_topic(name, kind) {
            Err(BusError::DuplicateTopic(_)) => {
                let handle = self.topic(name)?;
                if handle.kind != kind {
                    return Err(BusError::SchemaMismatch {
                        topic: name.to_string(),
                        expected: handle.kind,
                        got: kind,
                    });
                }
                Ok(handle)
            }
            other => other,
        }
    }

    pub fn topic(&self, name: &str) -> Result<TopicHandle, BusError> {
        let topics = self.inner.topics.lock().unwrap();
        topics
            .get(name)
            .map(|t| TopicHandle { name: name.to_string(), kind: t.kind })
            .ok_or_else(|| BusError::UnknownTopic(name.to_string()))
    }

    pub fn topic_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.inner.topics.lock().unwrap().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn subscriber_count(&self, topic: &TopicHandle) -> Result<usize, BusError> {
        let topics = self.inner.topics.lock().unwrap();
        topics
            .get(&topic.name)
            .map(|t| t.subscribers.len())
            .ok_or_else(|| BusError::UnknownTopic(topic.name.clone()))
    }

    /// Total envelopes ever published on the topic.
    pub fn published_count(&self, topic: &TopicHandle) -> Result<u64, BusError> {
        let topics = self.inner.topics.lock().unwrap();
        topics
            .get(&topic.name)
            .map(|t| t.published)
            .ok_or_else(|| BusError::UnknownTopic(topic.name.clone()))
    }

    pub fn subscribe(&self, topic: &TopicHandle, subscriber_id: &str) -> Result<Subscription, BusError> {
        let mut topics = self.inner.topics.lock().unwrap();
        let state = topics
            .get_mut(&topic.name)
            .ok_or_else(|| BusError::UnknownTopic(topic.name.clone()))?;
        let (tx, rx) = crossbeam_channel::unbounded();
        let delivered = Arc::new(AtomicU64::new(0));
        let pending = Arc::new(AtomicUsize::new(0));
        state.subscribers.push(SubscriberSlot {
            id: subscriber_id.to_string(),
            tx,
            delivered: Arc::clone(&delivered),
            pending: Arc::clone(&pending),
            warned: false,
        });
        Ok(Subscription {
            topic_name: topic.name.clone(),
            subscriber_id: subscriber_id.to_string(),
            rx,
            delivered,
            pending,
        })
    }

    /// A named publishing endpoint. Sequence numbers are tracked per
    /// (publisher id, topic), so two publishers with distinct ids never
    /// interfere.
    pub fn publisher(&self, publisher_id: &str) -> Publisher {
        Publisher { bus: self.clone(), id: publisher_id.to_string() }
    }

    fn publish_as(
        &self,
        publisher_id: &str,
        topic: &TopicHandle,
        payload: Payload,
    ) -> Result<Arc<TopicEnvelope>, BusError> {
        let mut topics = self.inner.topics.lock().unwrap();
        let state = topics
            .get_mut(&topic.name)
            .ok_or_else(|| BusError::UnknownTopic(topic.name.clone()))?;
        if payload.kind() != state.kind {
            return Err(BusError::SchemaMismatch {
                topic: topic.name.clone(),
                expected: state.kind,
                got: payload.kind(),
            });
        }

        let publish_ts = {
            let mut last = self.inner.last_ts.lock().unwrap();
            let now = (self.inner.clock)();
            let entry = last.entry(publisher_id.to_string()).or_insert(now);
            *entry = (*entry).max(now);
            *entry
        };
        let seq = state.next_seq.entry(publisher_id.to_string()).or_insert(0);
        let envelope = Arc::new(TopicEnvelope {
            topic_name: topic.name.clone(),
            publisher_id: publisher_id.to_string(),
            publish_ts,
            sequence: *seq,
            payload,
        });
        *seq += 1;
        state.published += 1;

        let high_water = self.inner.config.high_water;
        state.subscribers.retain_mut(|sub| {
            if sub.tx.send(Arc::clone(&envelope)).is_err() {
                // receiver dropped; forget the subscriber
                return false;
            }
            sub.delivered.fetch_add(1, Ordering::SeqCst);
            let depth = sub.pending.fetch_add(1, Ordering::SeqCst) + 1;
            if depth > high_water && !sub.warned {
                log::warn!(
                    "subscriber {:?} on {:?} has {} undelivered envelopes",
                    sub.id,
                    topic.name,
                    depth
                );
                sub.warned = true;
            } else if depth <= high_water / 2 {
                sub.warned = false;
            }
            true
        });
        Ok(envelope)
    }
}

/// Publishing endpoint bound to one publisher id.
#[derive(Clone)]
pub struct Publisher {
    bus: Bus,
    id: String,
}

impl Publisher {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn publish(&self, topic: &TopicHandle, payload: Payload) -> Result<Arc<TopicEnvelope>, BusError> {
        self.bus.publish_as(&self.id, topic, payload)
    }
}

/// Conventional topic name, `kind/subject`.
pub fn topic_name(kind: RecordKind, subject: &str) -> String {
    format!("{}/{}", kind.as_str(), subject)
}
