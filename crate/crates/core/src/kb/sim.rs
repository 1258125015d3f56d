//! Deterministic discrete-tick simulation of the devices-servers-devices
//! update protocol over reliable FIFO links.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{KbEntry, KnowledgeBase, NodeId, NodeKind, ServerState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct SimClock {
    pub tick: u64,
}

impl SimClock {
    pub fn advance_to(&mut self, tick: u64) {
        self.tick = self.tick.max(tick);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    pub region: u32,
}

impl NodeSpec {
    pub fn new(id: impl Into<NodeId>, kind: NodeKind, region: u32) -> Self {
        Self { id: id.into(), kind, region }
    }
}

/// Nodes plus the undirected server graph. Each region has exactly one edge
/// server; vehicles and RSUs talk to the server of their region. Every link
/// delivers after `latency` plus a seeded draw in `0..=jitter` ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub server_links: Vec<(NodeId, NodeId)>,
    pub latency: u64,
    pub jitter: u64,
}

impl Topology {
    /// `servers` edge servers on a path, one per region, each with
    /// `vehicles_per_server` vehicles and one RSU.
    pub fn path(servers: usize, vehicles_per_server: usize) -> Self {
        let mut nodes = Vec::new();
        let mut server_links = Vec::new();
        for s in 0..servers {
            let region = s as u32;
            nodes.push(NodeSpec::new(format!("s{s}"), NodeKind::EdgeServer, region));
            nodes.push(NodeSpec::new(format!("r{s}"), NodeKind::Rsu, region));
            for v in 0..vehicles_per_server {
                nodes.push(NodeSpec::new(format!("v{s}_{v}"), NodeKind::Vehicle, region));
            }
            if s > 0 {
                server_links.push((format!("s{}", s - 1), format!("s{s}")));
            }
        }
        Self { nodes, server_links, latency: 1, jitter: 1 }
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn servers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::EdgeServer)
    }

    fn server_of_region(&self, region: u32) -> Option<&NodeSpec> {
        self.servers().find(|n| n.region == region)
    }

    fn neighbors(&self, server: &str) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .server_links
            .iter()
            .filter_map(|(a, b)| match (a == server, b == server) {
                (true, _) => Some(b.clone()),
                (_, true) => Some(a.clone()),
                _ => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn attached(&self, server: &NodeSpec) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.kind != NodeKind::EdgeServer && n.region == server.region)
            .map(|n| n.id.clone())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schedule(m));
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !valid_token(&n.id) {
                return bad(format!("node id '{}' must be non-empty without whitespace or '='", n.id));
            }
            if !ids.insert(n.id.as_str()) {
                return bad(format!("duplicate node id '{}'", n.id));
            }
        }
        let mut regions = BTreeSet::new();
        for s in self.servers() {
            if !regions.insert(s.region) {
                return bad(format!("region {} has more than one server", s.region));
            }
        }
        if regions.is_empty() {
            return bad("topology has no edge server".into());
        }
        if let Some(n) = self.nodes.iter().find(|n| n.kind != NodeKind::EdgeServer && !regions.contains(&n.region)) {
            return bad(format!("node '{}' has no server in region {}", n.id, n.region));
        }
        for (a, b) in &self.server_links {
            for id in [a, b] {
                if self.node(id).map(|n| n.kind) != Some(NodeKind::EdgeServer) {
                    return bad(format!("link endpoint '{id}' is not an edge server"));
                }
            }
        }
        let first = self.servers().next().expect("non-empty").id.clone();
        let mut seen = BTreeSet::from([first.clone()]);
        let mut queue = VecDeque::from([first]);
        while let Some(s) = queue.pop_front() {
            for n in self.neighbors(&s) {
                if seen.insert(n.clone()) {
                    queue.push_back(n);
                }
            }
        }
        if seen.len() != regions.len() {
            return bad("server graph is not connected".into());
        }
        Ok(())
    }
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == '=')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// A vehicle or RSU uploads entries to its regional server.
    Upload { tick: u64, from: NodeId, entries: Vec<KbEntry> },
    /// A vehicle records an entry in its own private KB.
    WritePrivate { tick: u64, vehicle: NodeId, entry: KbEntry },
    Aggregate { tick: u64, server: NodeId },
    /// The server sends its shared entries to neighbouring servers and its
    /// attached nodes. Servers that adopt anything relay onward.
    Broadcast { tick: u64, server: NodeId },
    /// The vehicle's private KB is prefetched by the next server on the
    /// itinerary, which must receive it before `arrival`.
    Handoff { tick: u64, vehicle: NodeId, itinerary: Vec<NodeId>, arrival: u64 },
}

impl Event {
    pub fn tick(&self) -> u64 {
        match self {
            Event::Upload { tick, .. }
            | Event::WritePrivate { tick, .. }
            | Event::Aggregate { tick, .. }
            | Event::Broadcast { tick, .. }
            | Event::Handoff { tick, .. } => *tick,
        }
    }

    /// One devices-servers-devices round: uploads at `start`, aggregation on
    /// every server once they have landed, then a broadcast from every server.
    pub fn round(topology: &Topology, uploads: Vec<(NodeId, Vec<KbEntry>)>, start: u64) -> Vec<Event> {
        let gap = topology.latency + topology.jitter + 1;
        let mut events: Vec<Event> =
            uploads.into_iter().map(|(from, entries)| Event::Upload { tick: start, from, entries }).collect();
        for s in topology.servers() {
            events.push(Event::Aggregate { tick: start + gap, server: s.id.clone() });
            events.push(Event::Broadcast { tick: start + gap + 1, server: s.id.clone() });
        }
        events
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKind {
    Upload,
    Broadcast,
    Replica,
    Queue,
    Reject,
    Adopt,
    Aggregate,
    Store,
    Write,
}

impl TraceKind {
    const ALL: [TraceKind; 9] = [
        TraceKind::Upload,
        TraceKind::Broadcast,
        TraceKind::Replica,
        TraceKind::Queue,
        TraceKind::Reject,
        TraceKind::Adopt,
        TraceKind::Aggregate,
        TraceKind::Store,
        TraceKind::Write,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Upload => "upload",
            TraceKind::Broadcast => "broadcast",
            TraceKind::Replica => "replica",
            TraceKind::Queue => "queue",
            TraceKind::Reject => "reject",
            TraceKind::Adopt => "adopt",
            TraceKind::Aggregate => "aggregate",
            TraceKind::Store => "store",
            TraceKind::Write => "write",
        }
    }

    /// Kinds that describe a message put on a link.
    pub fn is_message(self) -> bool {
        matches!(self, TraceKind::Upload | TraceKind::Broadcast | TraceKind::Replica)
    }
}

/// One trace line:
/// `tick=<u64> from=<id> to=<id> kind=<kind> key=<key|-> version=<u64> private=<0|1>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: TraceKind,
    pub key: Option<String>,
    pub version: u64,
    pub private: bool,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tick={} from={} to={} kind={} key={} version={} private={}",
            self.tick,
            self.from,
            self.to,
            self.kind.name(),
            self.key.as_deref().unwrap_or("-"),
            self.version,
            u8::from(self.private)
        )
    }
}

impl FromStr for TraceRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::format(format!("bad trace token '{tok}'")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::format(format!("trace line lacks '{k}'")));
        let num = |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| Error::format(format!("bad number in '{k}'"))) };
        let kind_name = get("kind")?;
        let kind = TraceKind::ALL
            .into_iter()
            .find(|k| k.name() == kind_name)
            .ok_or_else(|| Error::format(format!("unknown trace kind '{kind_name}'")))?;
        let key = get("key")?;
        Ok(Self {
            tick: num("tick")?,
            from: get("from")?.to_string(),
            to: get("to")?.to_string(),
            kind,
            key: (key != "-").then(|| key.to_string()),
            version: num("version")?,
            private: num("private")? != 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Upload(Vec<KbEntry>),
    Shared { entries: Vec<KbEntry>, version: u64 },
    Replica { vehicle: NodeId, entries: Vec<KbEntry> },
}

#[derive(Debug, Clone, PartialEq)]
struct Message {
    from: NodeId,
    to: NodeId,
    payload: Payload,
}

/// Per-node state of a vehicle or RSU.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceState {
    pub shared: KnowledgeBase,
    pub private: KnowledgeBase,
}

#[derive(Debug, Clone)]
pub struct KbSim {
    topology: Topology,
    pub clock: SimClock,
    servers: BTreeMap<NodeId, ServerState>,
    devices: BTreeMap<NodeId, DeviceState>,
    /// In-flight messages keyed by `(delivery tick, sender, sender sequence)`.
    in_flight: BTreeMap<(u64, NodeId, u64), Message>,
    link_tail: BTreeMap<(NodeId, NodeId), u64>,
    sequence: BTreeMap<NodeId, u64>,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
}

/// Trace and final state of a run.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trace: Vec<TraceRecord>,
    pub state: KbSim,
}

impl SimOutcome {
    pub fn trace_text(&self) -> String {
        self.trace.iter().map(|r| format!("{r}\n")).collect()
    }
}

impl KbSim {
    pub fn new(topology: Topology, seed: u64) -> Result<Self> {
        topology.validate()?;
        let mut servers = BTreeMap::new();
        let mut devices = BTreeMap::new();
        for n in &topology.nodes {
            if n.kind == NodeKind::EdgeServer {
                servers.insert(n.id.clone(), ServerState::new(n.id.clone()));
            } else {
                devices.insert(
                    n.id.clone(),
                    DeviceState { shared: KnowledgeBase::new(n.id.clone()), private: KnowledgeBase::new(n.id.clone()) },
                );
            }
        }
        Ok(Self {
            topology,
            clock: SimClock::default(),
            servers,
            devices,
            in_flight: BTreeMap::new(),
            link_tail: BTreeMap::new(),
            sequence: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: Vec::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn server(&self, id: &str) -> Option<&ServerState> {
        self.servers.get(id)
    }

    pub fn servers(&self) -> impl Iterator<Item = (&NodeId, &ServerState)> {
        self.servers.iter()
    }

    pub fn device(&self, id: &str) -> Option<&DeviceState> {
        self.devices.get(id)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Whether every server holds the same `(version, origin)` for every key
    /// and the same shared version.
    pub fn servers_agree(&self) -> bool {
        let mut it = self.servers.values();
        let Some(first) = it.next() else { return true };
        let stamps = first.shared.stamps();
        it.all(|s| s.shared.stamps() == stamps && s.shared_version == first.shared_version)
    }

    fn node(&self, id: &str) -> Result<&NodeSpec> {
        self.topology.node(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    fn record(&mut self, from: &str, to: &str, kind: TraceKind, entry: Option<&KbEntry>, version: u64) {
        self.trace.push(TraceRecord {
            tick: self.clock.tick,
            from: from.to_string(),
            to: to.to_string(),
            kind,
            key: entry.map(|e| e.key.clone()),
            version: entry.map_or(version, |e| e.version),
            private: entry.is_some_and(|e| e.private),
        });
    }

    fn send(&mut self, from: &str, to: &str, payload: Payload) -> u64 {
        let (kind, entries) = match &payload {
            Payload::Upload(e) => (TraceKind::Upload, e),
            Payload::Shared { entries, .. } => (TraceKind::Broadcast, entries),
            Payload::Replica { entries, .. } => (TraceKind::Replica, entries),
        };
        if entries.is_empty() {
            self.record(from, to, kind, None, 0);
        }
        for e in entries.clone() {
            self.record(from, to, kind, Some(&e), 0);
        }
        let delay = self.topology.latency + self.rng.random_range(0..=self.topology.jitter);
        let link = (from.to_string(), to.to_string());
        let at = (self.clock.tick + delay).max(self.link_tail.get(&link).copied().unwrap_or(0));
        self.link_tail.insert(link, at);
        let seq = self.sequence.entry(from.to_string()).or_insert(0);
        *seq += 1;
        self.in_flight.insert((at, from.to_string(), *seq), Message { from: from.to_string(), to: to.to_string(), payload });
        at
    }

    /// Sends the server's shared entries to its neighbouring servers (minus
    /// `skip`) and attached devices. Returns the number of messages.
    pub fn broadcast(&mut self, server: &str, skip: Option<&str>) -> Result<usize> {
        let spec = self.node(server)?.clone();
        let state = self.servers.get(server).ok_or_else(|| Error::Schedule(format!("'{server}' is not a server")))?;
        let entries = state.broadcast_payload();
        let version = state.shared_version;
        let mut peers = self.topology.neighbors(server);
        peers.retain(|p| Some(p.as_str()) != skip);
        peers.extend(self.topology.attached(&spec));
        for p in &peers {
            self.send(server, p, Payload::Shared { entries: entries.clone(), version });
        }
        Ok(peers.len())
    }

    /// Replicates the vehicle's private KB to the first server on the
    /// itinerary. Fails if it cannot land before `arrival`.
    pub fn handoff_private(&mut self, vehicle: &str, itinerary: &[NodeId], arrival: u64) -> Result<usize> {
        if self.node(vehicle)?.kind != NodeKind::Vehicle {
            return Err(Error::Schedule(format!("'{vehicle}' is not a vehicle")));
        }
        let next = itinerary.first().ok_or_else(|| Error::Schedule("itinerary is empty".into()))?;
        for s in itinerary {
            if !self.servers.contains_key(s) {
                return Err(Error::UnknownNode(s.clone()));
            }
        }
        let entries: Vec<KbEntry> = self.devices[vehicle].private.entries().cloned().collect();
        let at = self.send(vehicle, next, Payload::Replica { vehicle: vehicle.to_string(), entries });
        if at >= arrival {
            return Err(Error::Schedule(format!("replica for '{vehicle}' lands at tick {at}, not before arrival {arrival}")));
        }
        Ok(1)
    }

    fn apply_event(&mut self, ev: &Event) -> Result<()> {
        match ev {
            Event::Upload { from, entries, .. } => {
                let spec = self.node(from)?.clone();
                if spec.kind == NodeKind::EdgeServer {
                    return Err(Error::Schedule(format!("upload from server '{from}'")));
                }
                let server = self.topology.server_of_region(spec.region).expect("validated").id.clone();
                self.send(from, &server, Payload::Upload(entries.clone()));
            }
            Event::WritePrivate { vehicle, entry, .. } => {
                if self.node(vehicle)?.kind != NodeKind::Vehicle {
                    return Err(Error::Schedule(format!("'{vehicle}' is not a vehicle")));
                }
                let entry = entry.clone().into_private();
                let dev = self.devices.get_mut(vehicle).expect("validated");
                if dev.private.merge(entry.clone()) {
                    self.record(vehicle, vehicle, TraceKind::Write, Some(&entry), 0);
                }
            }
            Event::Aggregate { server, .. } => {
                let state = self.servers.get_mut(server).ok_or_else(|| Error::Schedule(format!("'{server}' is not a server")))?;
                let adopted = state.aggregate();
                let version = state.shared_version;
                for e in &adopted {
                    self.record(server, server, TraceKind::Adopt, Some(e), 0);
                }
                self.record(server, server, TraceKind::Aggregate, None, version);
            }
            Event::Broadcast { server, .. } => {
                self.broadcast(server, None)?;
            }
            Event::Handoff { vehicle, itinerary, arrival, .. } => {
                self.handoff_private(vehicle, itinerary, *arrival)?;
            }
        }
        Ok(())
    }

    fn deliver(&mut self, msg: Message) {
        let Message { from, to, payload } = msg;
        match payload {
            Payload::Upload(entries) => {
                let kind = self.topology.node(&from).map_or(NodeKind::Vehicle, |n| n.kind);
                let server = self.servers.get_mut(&to).expect("uploads target servers");
                match server.submit_update(&entries, kind) {
                    Ok(()) => {
                        for e in &entries {
                            self.record(&from, &to, TraceKind::Queue, Some(e), 0);
                        }
                    }
                    Err(_) => {
                        let bad = entries.iter().find(|e| e.private).cloned();
                        self.record(&from, &to, TraceKind::Reject, bad.as_ref(), 0);
                    }
                }
            }
            Payload::Shared { entries, version } => {
                if let Some(server) = self.servers.get_mut(&to) {
                    let adopted: Vec<KbEntry> = entries.into_iter().filter(|e| server.shared.merge(e.clone())).collect();
                    let bumped = version > server.shared_version;
                    server.shared_version = server.shared_version.max(version);
                    for e in &adopted {
                        self.record(&from, &to, TraceKind::Adopt, Some(e), 0);
                    }
                    if !adopted.is_empty() || bumped {
                        self.broadcast(&to, Some(&from)).expect("receiver is a known server");
                    }
                } else if let Some(dev) = self.devices.get_mut(&to) {
                    let adopted: Vec<KbEntry> = entries.into_iter().filter(|e| dev.shared.merge(e.clone())).collect();
                    for e in &adopted {
                        self.record(&from, &to, TraceKind::Adopt, Some(e), 0);
                    }
                }
            }
            Payload::Replica { vehicle, entries } => {
                let server = self.servers.get_mut(&to).expect("replicas target servers");
                let replica = server.replicas.entry(vehicle.clone()).or_insert_with(|| KnowledgeBase::new(vehicle));
                let stored: Vec<KbEntry> = entries.into_iter().filter(|e| replica.merge(e.clone().into_private())).collect();
                for e in &stored {
                    self.record(&from, &to, TraceKind::Store, Some(e), 0);
                }
            }
        }
    }

    /// Delivers every message due at or before `tick`, in
    /// `(tick, sender, sequence)` order.
    fn deliver_until(&mut self, tick: u64) {
        while let Some(entry) = self.in_flight.first_entry() {
            if entry.key().0 > tick {
                break;
            }
            let ((at, _, _), msg) = entry.remove_entry();
            self.clock.advance_to(at);
            self.deliver(msg);
        }
    }

    /// Runs the schedule (stable-sorted by tick) and then drains every
    /// in-flight message. Messages due at a tick are delivered before that
    /// tick's events run.
    pub fn run(&mut self, schedule: &[Event]) -> Result<()> {
        let mut events: Vec<&Event> = schedule.iter().collect();
        events.sort_by_key(|e| e.tick());
        if let Some(e) = events.first() {
            if e.tick() < self.clock.tick {
                return Err(Error::Schedule(format!("event at tick {} is in the past", e.tick())));
            }
        }
        for ev in events {
            self.deliver_until(ev.tick());
            self.clock.advance_to(ev.tick());
            self.apply_event(ev)?;
        }
        self.deliver_until(u64::MAX);
        Ok(())
    }
}

/// Runs `schedule` on a fresh simulation of `topology`.
pub fn run_sim(topology: &Topology, schedule: &[Event], seed: u64) -> Result<SimOutcome> {
    let mut sim = KbSim::new(topology.clone(), seed)?;
    sim.run(schedule)?;
    Ok(SimOutcome { trace: sim.trace.clone(), state: sim })
}
