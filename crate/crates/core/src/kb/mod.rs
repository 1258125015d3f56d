//! Shared and private knowledge bases, the devices-servers-devices update
//! protocol, and federated parameter averaging between edge servers.

mod federated;
mod sim;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use federated::{consensus, fed_avg, metropolis_weights, neighbor_round};
pub use sim::{run_sim, DeviceState, Event, KbSim, NodeSpec, SimClock, SimOutcome, Topology, TraceKind, TraceRecord};

pub type NodeId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Vehicle,
    Rsu,
    EdgeServer,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Vehicle => "vehicle",
            NodeKind::Rsu => "rsu",
            NodeKind::EdgeServer => "edge_server",
        }
    }
}

/// One versioned knowledge item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbEntry {
    pub key: String,
    pub version: u64,
    pub payload: Vec<u8>,
    pub origin: NodeId,
    pub region: u32,
    pub private: bool,
}

impl KbEntry {
    pub fn new(key: impl Into<String>, version: u64, payload: Vec<u8>, origin: impl Into<NodeId>, region: u32) -> Result<Self> {
        if version == 0 {
            return Err(Error::invalid("entry version must be >= 1"));
        }
        if payload.is_empty() {
            return Err(Error::invalid("entry payload must be non-empty"));
        }
        Ok(Self { key: key.into(), version, payload, origin: origin.into(), region, private: false })
    }

    pub fn into_private(mut self) -> Self {
        self.private = true;
        self
    }

    /// Conflict-resolution stamp; the larger stamp wins.
    pub fn stamp(&self) -> (u64, &str) {
        (self.version, self.origin.as_str())
    }
}

/// Key-to-entry map owned by one node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeBase {
    pub owner: NodeId,
    entries: BTreeMap<String, KbEntry>,
}

pub type SharedKb = KnowledgeBase;
pub type PrivateKb = KnowledgeBase;

impl KnowledgeBase {
    pub fn new(owner: impl Into<NodeId>) -> Self {
        Self { owner: owner.into(), entries: BTreeMap::new() }
    }

    pub fn get(&self, key: &str) -> Option<&KbEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = &KbEntry> {
        self.entries.values()
    }

    /// Last-writer-wins merge on `(version, origin)`. Returns whether the entry
    /// was adopted.
    pub fn merge(&mut self, entry: KbEntry) -> bool {
        match self.entries.get(&entry.key) {
            Some(cur) if cur.stamp() >= entry.stamp() => false,
            _ => {
                self.entries.insert(entry.key.clone(), entry);
                true
            }
        }
    }

    /// `(version, origin)` per key, for agreement checks.
    pub fn stamps(&self) -> BTreeMap<String, (u64, NodeId)> {
        self.entries.iter().map(|(k, e)| (k.clone(), (e.version, e.origin.clone()))).collect()
    }
}

/// Edge-server state: shared KB, pending upload queue, and private replicas
/// prefetched for arriving vehicles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServerState {
    pub shared: SharedKb,
    pub pending: Vec<KbEntry>,
    pub shared_version: u64,
    pub replicas: BTreeMap<NodeId, PrivateKb>,
}

impl ServerState {
    pub fn new(id: impl Into<NodeId>) -> Self {
        Self { shared: KnowledgeBase::new(id), ..Self::default() }
    }

    /// Queues an upload from a vehicle or RSU. A delta containing any
    /// privacy-flagged entry is rejected whole.
    pub fn submit_update(&mut self, delta: &[KbEntry], from: NodeKind) -> Result<()> {
        if from == NodeKind::EdgeServer {
            return Err(Error::invalid("updates are submitted by vehicles or RSUs"));
        }
        if let Some(e) = delta.iter().find(|e| e.private) {
            return Err(Error::PrivacyViolation(format!("entry '{}' is private", e.key)));
        }
        self.pending.extend_from_slice(delta);
        Ok(())
    }

    /// Folds the pending queue into the shared KB. Returns the keys adopted;
    /// the shared version advances once if at least one delta was applied.
    pub fn aggregate(&mut self) -> Vec<KbEntry> {
        let mut adopted = Vec::new();
        for e in std::mem::take(&mut self.pending) {
            if self.shared.merge(e.clone()) {
                adopted.push(e);
            }
        }
        if !adopted.is_empty() {
            self.shared_version += 1;
        }
        adopted
    }

    /// Shared entries only; replicas and anything privacy-flagged stay home.
    pub fn broadcast_payload(&self) -> Vec<KbEntry> {
        self.shared.entries().filter(|e| !e.private).cloned().collect()
    }
}
