//! Knowledge-base protocol scenario driven from the configuration.

use anyhow::Result;
use rand::Rng;

use comv_core::channel::RngStream;
use comv_core::kb::{run_sim, Event, KbEntry, NodeKind, SimOutcome, Topology};

use crate::config::KbConfig;

pub fn topology(cfg: &KbConfig) -> Topology {
    Topology { latency: cfg.latency, jitter: cfg.jitter, ..Topology::path(cfg.servers, cfg.vehicles_per_server) }
}

/// `rounds` devices-servers-devices rounds. In each round every vehicle and
/// RSU uploads one random key, and the first vehicle records a private entry
/// and hands its private KB to the next server on a path itinerary.
pub fn schedule(cfg: &KbConfig, seed: u64) -> Result<Vec<Event>> {
    let topo = topology(cfg);
    let mut rng = RngStream::new(seed, 0x4b42);
    let mut events = Vec::new();
    let round_len = 3 * (cfg.latency + cfg.jitter + 2);
    let devices: Vec<_> = topo.nodes.iter().filter(|n| n.kind != NodeKind::EdgeServer).cloned().collect();
    let vehicle = devices.iter().find(|n| n.kind == NodeKind::Vehicle).cloned();
    for round in 0..cfg.rounds {
        let start = round as u64 * round_len;
        let uploads = devices
            .iter()
            .map(|d| {
                let key = format!("k{}", rng.random_range(0..cfg.keys.max(1)));
                let version = round as u64 + 1 + rng.random_range(0..2);
                let payload = vec![rng.random(), rng.random()];
                Ok((d.id.clone(), vec![KbEntry::new(key, version, payload, d.id.clone(), d.region)?]))
            })
            .collect::<Result<Vec<_>>>()?;
        events.extend(Event::round(&topo, uploads, start));
        if let Some(v) = &vehicle {
            let entry = KbEntry::new(format!("private{round}"), round as u64 + 1, vec![round as u8 + 1], v.id.clone(), v.region)?;
            events.push(Event::WritePrivate { tick: start, vehicle: v.id.clone(), entry });
            let next = format!("s{}", (round + 1) % cfg.servers.max(1));
            events.push(Event::Handoff { tick: start + 1, vehicle: v.id.clone(), itinerary: vec![next], arrival: start + round_len });
        }
    }
    Ok(events)
}

pub fn run(cfg: &KbConfig, seed: u64) -> Result<SimOutcome> {
    Ok(run_sim(&topology(cfg), &schedule(cfg, seed)?, seed)?)
}
