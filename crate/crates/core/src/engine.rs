//! Discrete-event engine: event queue, radio lifecycle, shared channel.
//!
//! One [`Engine`] owns every node in a run. It pops events in (time,
//! insertion) order, invokes the owning node's MAC callback, and carries out
//! the returned actions. All cascading work goes back through the queue, so
//! callback depth is constant and same-timestamp ordering is reproducible.
//!
//! Channel model: single shared medium with a fixed adjacency. A frame
//! occupies the air for its full duration; a listener receives it intact
//! only if its radio sat settled in receive from before the first bit
//! arrived until after the last one, and no other frame audible to that
//! listener overlapped the transmission. Overlapping frames that share a
//! listener corrupt each other at that listener; frames never block each
//! other's senders.
//!
//! Misuse of the MAC action interface (transmitting without the radio in
//! transmit, arming a timer in the past, powering down mid-frame) panics
//! immediately rather than producing a silently wrong run.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyLedger, RadioState};
use crate::mac::{
    AirTime, CallCtx, CounterKey, Dest, Mac, MacAction, NodeId, Packet, PacketKind, TimerSlot,
};
use crate::time::{SimDuration, SimTime};

/// Physical-layer constants shared by every node in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// Channel bitrate in bits per second.
    pub bitrate_bps: f64,
    /// Synthesizer settling time when entering receive or transmit.
    pub switch_s: f64,
    /// One-way propagation delay.
    pub prop_delay_s: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams { bitrate_bps: 250_000.0, switch_s: 0.2e-3, prop_delay_s: 1e-6 }
    }
}

impl RadioParams {
    pub fn switch(&self) -> SimDuration {
        SimDuration::from_secs_f64(self.switch_s)
    }

    pub fn prop(&self) -> SimDuration {
        SimDuration::from_secs_f64(self.prop_delay_s)
    }

    /// On-air duration of a frame.
    pub fn air_time(&self, air: AirTime) -> SimDuration {
        match air {
            AirTime::Bytes(b) => SimDuration::from_secs_f64(f64::from(b) * 8.0 / self.bitrate_bps),
            AirTime::Exact(d) => d,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.bitrate_bps > 0.0 && self.bitrate_bps.is_finite()) {
            problems.push(format!("radio.bitrate_bps must be positive, got {}", self.bitrate_bps));
        }
        for (name, v) in [("switch_s", self.switch_s), ("prop_delay_s", self.prop_delay_s)] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("radio.{name} must be non-negative, got {v}"));
            }
        }
        problems
    }
}

/// Who hears whom. `listeners[n]` are the nodes that can hear node `n`.
#[derive(Debug, Clone)]
pub struct Topology {
    listeners: Vec<Vec<NodeId>>,
}

impl Topology {
    /// Star around node 0: the hub hears every leaf, each leaf hears only
    /// the hub. Leaves are hidden from one another.
    pub fn star(n_nodes: usize) -> Self {
        assert!(n_nodes >= 2, "a star needs a hub and at least one leaf");
        let hub = NodeId(0);
        let listeners = (0..n_nodes)
            .map(|n| {
                if n == 0 {
                    (1..n_nodes).map(|i| NodeId(i as u32)).collect()
                } else {
                    vec![hub]
                }
            })
            .collect();
        Topology { listeners }
    }

    pub fn n_nodes(&self) -> usize {
        self.listeners.len()
    }

    pub fn listeners_of(&self, node: NodeId) -> &[NodeId] {
        &self.listeners[node.0 as usize]
    }
}

/// Fate totals over every frame put on the air.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Frames transmitted.
    pub sent: u64,
    /// Frames whose addressee (any listener, for broadcast) got them intact.
    pub delivered: u64,
    /// Frames ruined at the addressee by an overlapping transmission.
    pub corrupted: u64,
    /// Frames nobody relevant was listening to.
    pub undeliverable: u64,
    /// Distinct pairs of overlapping frames sharing at least one listener.
    pub collision_pairs: u64,
}

/// One transmission's fate, kept when packet logging is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketLogEntry {
    pub start: SimTime,
    pub end: SimTime,
    pub kind: PacketKind,
    pub src: NodeId,
    pub dst: Dest,
    pub target: Option<NodeId>,
    /// Listeners that decoded the frame, in id order.
    pub delivered_to: Vec<NodeId>,
}

/// One recorded wake-up interval value, emitted by adaptive receivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalSample {
    /// Node keeping the interval (the receiver).
    pub receiver: NodeId,
    /// Transmitter the interval applies to.
    pub neighbor: NodeId,
    /// Zero-based wake-up count for this (receiver, neighbor) pair.
    pub index: u64,
    pub at: SimTime,
    pub i_wu_s: f64,
    /// Register bit pushed by this wake-up: data arrived (true) or not.
    pub hit: bool,
}

/// Everything a finished run leaves behind, indexed by node where per-node.
#[derive(Debug)]
pub struct SimOutput {
    pub horizon: SimTime,
    pub ledgers: Vec<EnergyLedger>,
    pub counters: Vec<BTreeMap<CounterKey, u64>>,
    pub samples: Vec<IntervalSample>,
    pub channel: ChannelStats,
    /// Empty unless `Engine::log_packets` was switched on.
    pub packet_log: Vec<PacketLogEntry>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    /// The queue churned through an implausible number of events without
    /// the clock moving: some state machine is spinning in place.
    #[error("event loop stalled at {at}: {count} events without time advancing")]
    Livelock { at: SimTime, count: u64 },
}

#[derive(Debug)]
enum EventKind {
    TimerFire { node: NodeId, slot: TimerSlot, epoch: u64 },
    RadioReady { node: NodeId, epoch: u64 },
    TxDone { node: NodeId, tx: usize },
    Arrival { listener: NodeId, tx: usize },
    Traffic { node: NodeId, dst: NodeId, bytes: u32 },
    ChannelIdle { node: NodeId },
}

struct QueuedEvent {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    // Reversed so the BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

struct TxRecord {
    pkt: Packet,
    start: SimTime,
    on_air: bool,
    corrupted_at: BTreeSet<NodeId>,
    delivered_to: BTreeSet<NodeId>,
    pending_arrivals: usize,
}

struct NodeRt {
    mac: Box<dyn Mac>,
    radio: RadioState,
    state_since: SimTime,
    /// Instant the radio last settled into receive; `None` otherwise.
    rx_since: Option<SimTime>,
    switch_target: Option<RadioState>,
    radio_epoch: u64,
    timer_epochs: BTreeMap<TimerSlot, u64>,
    inflight: Option<usize>,
    ledger: EnergyLedger,
    counters: BTreeMap<CounterKey, u64>,
}

/// Maximum events the loop will process at one timestamp before declaring
/// the run stuck.
const LIVELOCK_LIMIT: u64 = 10_000_000;

pub struct Engine {
    params: RadioParams,
    topo: Topology,
    nodes: Vec<NodeRt>,
    queue: BinaryHeap<QueuedEvent>,
    next_seq: u64,
    records: Vec<TxRecord>,
    /// Indices into `records` of frames currently on the air. Kept small so
    /// carrier sensing stays O(active), not O(everything ever sent).
    on_air: Vec<usize>,
    idle_waiters: BTreeSet<NodeId>,
    samples: Vec<IntervalSample>,
    sample_index: BTreeMap<(NodeId, NodeId), u64>,
    stats: ChannelStats,
    log_packets: bool,
    packet_log: Vec<PacketLogEntry>,
    now: SimTime,
}

impl Engine {
    /// Builds an engine over `macs`, one per node. `macs[i]` must answer to
    /// node id `i`; the topology must cover exactly these nodes.
    pub fn new(params: RadioParams, topo: Topology, macs: Vec<Box<dyn Mac>>) -> Self {
        assert_eq!(topo.n_nodes(), macs.len(), "topology/node count mismatch");
        for (i, mac) in macs.iter().enumerate() {
            assert_eq!(mac.node_id().0 as usize, i, "MAC bound to wrong node id");
        }
        let nodes = macs
            .into_iter()
            .map(|mac| NodeRt {
                mac,
                radio: RadioState::Sleep,
                state_since: SimTime::ZERO,
                rx_since: None,
                switch_target: None,
                radio_epoch: 0,
                timer_epochs: BTreeMap::new(),
                inflight: None,
                ledger: EnergyLedger::new(),
                counters: BTreeMap::new(),
            })
            .collect();
        Engine {
            params,
            topo,
            nodes,
            queue: BinaryHeap::new(),
            next_seq: 0,
            records: Vec::new(),
            on_air: Vec::new(),
            idle_waiters: BTreeSet::new(),
            samples: Vec::new(),
            sample_index: BTreeMap::new(),
            stats: ChannelStats::default(),
            log_packets: false,
            packet_log: Vec::new(),
            now: SimTime::ZERO,
        }
    }

    /// Records every classified transmission in the output's packet log.
    /// Off by default; the log grows with traffic.
    pub fn log_packets(&mut self, on: bool) {
        self.log_packets = on;
    }

    /// Queues an application payload to hand to `node`'s MAC at `at`.
    /// Called before `run`; the traffic schedule is fixed up front.
    pub fn schedule_upper_data(&mut self, at: SimTime, node: NodeId, dst: NodeId, bytes: u32) {
        self.push(at, EventKind::Traffic { node, dst, bytes });
    }

    /// Runs the simulation up to and including `horizon`, then closes out
    /// residency so every ledger sums exactly to the horizon.
    pub fn run(mut self, horizon: SimTime) -> Result<SimOutput, EngineError> {
        for i in 0..self.nodes.len() {
            let ctx = self.ctx_for(NodeId(i as u32));
            let actions = self.nodes[i].mac.start(&ctx);
            self.apply(NodeId(i as u32), actions);
        }

        let mut stall_count: u64 = 0;
        while let Some(ev) = self.queue.peek() {
            if ev.at > horizon {
                break;
            }
            let ev = self.queue.pop().unwrap();
            if ev.at > self.now {
                self.now = ev.at;
                stall_count = 0;
            } else {
                stall_count += 1;
                if stall_count > LIVELOCK_LIMIT {
                    return Err(EngineError::Livelock { at: self.now, count: stall_count });
                }
            }
            self.dispatch(ev.kind);
        }

        self.now = horizon;
        for i in 0..self.nodes.len() {
            self.accrue(NodeId(i as u32));
        }
        Ok(SimOutput {
            horizon,
            ledgers: self.nodes.iter().map(|n| n.ledger.clone()).collect(),
            counters: self.nodes.iter().map(|n| n.counters.clone()).collect(),
            samples: self.samples,
            channel: self.stats,
            packet_log: self.packet_log,
        })
    }

    fn push(&mut self, at: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(QueuedEvent { at, seq, kind });
    }

    fn ctx_for(&self, node: NodeId) -> CallCtx {
        CallCtx { now: self.now, channel_busy: self.busy_for(node) }
    }

    /// True while any frame from a node audible to `node` is on the air.
    fn busy_for(&self, node: NodeId) -> bool {
        self.on_air
            .iter()
            .any(|&i| self.topo.listeners_of(self.records[i].pkt.src).contains(&node))
    }

    /// Books elapsed time in the current radio state up to `self.now`.
    fn accrue(&mut self, node: NodeId) {
        let rt = &mut self.nodes[node.0 as usize];
        let dur = self.now.since(rt.state_since);
        rt.ledger.accrue(rt.radio, dur);
        rt.state_since = self.now;
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::TimerFire { node, slot, epoch } => {
                if self.nodes[node.0 as usize].timer_epochs.get(&slot).copied()
                    != Some(epoch)
                {
                    return; // replaced or cancelled after scheduling
                }
                let ctx = self.ctx_for(node);
                let actions = self.nodes[node.0 as usize].mac.on_timer(&ctx, slot);
                self.apply(node, actions);
            }
            EventKind::RadioReady { node, epoch } => {
                if self.nodes[node.0 as usize].radio_epoch != epoch {
                    return; // retarget happened while settling
                }
                self.accrue(node);
                let target = self.nodes[node.0 as usize]
                    .switch_target
                    .take()
                    .expect("radio-ready with no pending target");
                {
                    let rt = &mut self.nodes[node.0 as usize];
                    rt.radio = target;
                    if target == RadioState::Rx {
                        // Keep the older timestamp if we were already
                        // settled in receive: continuity must not reset.
                        rt.rx_since.get_or_insert(self.now);
                    } else {
                        rt.rx_since = None;
                    }
                }
                let ctx = self.ctx_for(node);
                let actions = self.nodes[node.0 as usize].mac.on_radio_ready(&ctx, target);
                self.apply(node, actions);
            }
            EventKind::TxDone { node, tx } => {
                self.records[tx].on_air = false;
                self.on_air.retain(|&i| i != tx);
                self.nodes[node.0 as usize].inflight = None;
                self.wake_idle_waiters();
                let pkt = self.records[tx].pkt;
                let ctx = self.ctx_for(node);
                let actions = self.nodes[node.0 as usize].mac.on_tx_done(&ctx, &pkt);
                self.apply(node, actions);
            }
            EventKind::Arrival { listener, tx } => {
                self.handle_arrival(listener, tx);
            }
            EventKind::Traffic { node, dst, bytes } => {
                let ctx = self.ctx_for(node);
                let actions = self.nodes[node.0 as usize].mac.on_upper_data(&ctx, dst, bytes);
                self.apply(node, actions);
            }
            EventKind::ChannelIdle { node } => {
                let ctx = self.ctx_for(node);
                let actions = self.nodes[node.0 as usize].mac.on_channel_idle(&ctx);
                self.apply(node, actions);
            }
        }
    }

    fn handle_arrival(&mut self, listener: NodeId, tx: usize) {
        let (start, corrupted) = {
            let rec = &self.records[tx];
            (rec.start, rec.corrupted_at.contains(&listener))
        };
        let first_bit = start + self.params.prop();
        let intact = {
            let rt = &self.nodes[listener.0 as usize];
            rt.radio == RadioState::Rx
                && rt.rx_since.is_some_and(|s| s <= first_bit)
                && !corrupted
        };
        if intact {
            self.records[tx].delivered_to.insert(listener);
        }

        let done = {
            let rec = &mut self.records[tx];
            rec.pending_arrivals -= 1;
            rec.pending_arrivals == 0
        };
        if done {
            self.classify(tx);
        }

        if intact {
            let pkt = self.records[tx].pkt;
            let ctx = self.ctx_for(listener);
            let actions = self.nodes[listener.0 as usize].mac.on_packet(&ctx, &pkt);
            self.apply(listener, actions);
        }
    }

    /// Settles a frame's fate once every listener's arrival is resolved.
    /// Addressed frames are judged at the addressee; broadcasts count as
    /// delivered if anyone got them.
    fn classify(&mut self, tx: usize) {
        let rec = &self.records[tx];
        let (got, ruined) = match rec.pkt.dst {
            Dest::Node(d) => (rec.delivered_to.contains(&d), rec.corrupted_at.contains(&d)),
            Dest::Broadcast => (!rec.delivered_to.is_empty(), !rec.corrupted_at.is_empty()),
        };
        if got {
            self.stats.delivered += 1;
        } else if ruined {
            self.stats.corrupted += 1;
        } else {
            self.stats.undeliverable += 1;
        }
        if self.log_packets {
            let rec = &self.records[tx];
            self.packet_log.push(PacketLogEntry {
                start: rec.start,
                end: rec.start + self.params.air_time(rec.pkt.air),
                kind: rec.pkt.kind,
                src: rec.pkt.src,
                dst: rec.pkt.dst,
                target: rec.pkt.target,
                delivered_to: rec.delivered_to.iter().copied().collect(),
            });
        }
    }

    fn wake_idle_waiters(&mut self) {
        let ready: Vec<NodeId> = self
            .idle_waiters
            .iter()
            .copied()
            .filter(|&n| !self.busy_for(n))
            .collect();
        for node in ready {
            self.idle_waiters.remove(&node);
            self.push(self.now, EventKind::ChannelIdle { node });
        }
    }

    fn apply(&mut self, node: NodeId, actions: Vec<MacAction>) {
        for action in actions {
            match action {
                MacAction::SetRadio(target) => self.set_radio(node, target),
                MacAction::SetTimer { slot, at } => {
                    assert!(
                        at >= self.now,
                        "{node} armed {slot:?} at {at}, already past {}",
                        self.now
                    );
                    let epoch = {
                        let e = self.nodes[node.0 as usize]
                            .timer_epochs
                            .entry(slot)
                            .or_insert(0);
                        *e += 1;
                        *e
                    };
                    self.push(at, EventKind::TimerFire { node, slot, epoch });
                }
                MacAction::CancelTimer(slot) => {
                    *self.nodes[node.0 as usize]
                        .timer_epochs
                        .entry(slot)
                        .or_insert(0) += 1;
                }
                MacAction::Send(pkt) => self.send(node, pkt),
                MacAction::Count(key) => {
                    *self.nodes[node.0 as usize].counters.entry(key).or_insert(0) += 1;
                }
                MacAction::NotifyWhenChannelIdle => {
                    if self.busy_for(node) {
                        self.idle_waiters.insert(node);
                    } else {
                        self.push(self.now, EventKind::ChannelIdle { node });
                    }
                }
                MacAction::RecordInterval { neighbor, i_wu_s, hit } => {
                    let index = {
                        let c = self.sample_index.entry((node, neighbor)).or_insert(0);
                        let i = *c;
                        *c += 1;
                        i
                    };
                    self.samples.push(IntervalSample {
                        receiver: node,
                        neighbor,
                        index,
                        at: self.now,
                        i_wu_s,
                        hit,
                    });
                }
            }
        }
    }

    fn set_radio(&mut self, node: NodeId, target: RadioState) {
        assert_ne!(target, RadioState::Switching, "switching is not a target state");
        let inflight = self.nodes[node.0 as usize].inflight.is_some();
        match target {
            RadioState::Off | RadioState::Sleep => {
                assert!(!inflight, "{node} powered down mid-transmission");
                self.accrue(node);
                let rt = &mut self.nodes[node.0 as usize];
                rt.radio_epoch += 1; // orphan any in-progress switch
                rt.switch_target = None;
                rt.radio = target;
                rt.rx_since = None;
            }
            RadioState::Rx | RadioState::Tx => {
                assert!(
                    !inflight,
                    "{node} retargeted the radio mid-transmission"
                );
                let settled = {
                    let rt = &self.nodes[node.0 as usize];
                    rt.switch_target.is_none() && rt.radio == target
                };
                self.accrue(node);
                let delay = if settled { SimDuration::ZERO } else { self.params.switch() };
                {
                    let rt = &mut self.nodes[node.0 as usize];
                    rt.radio_epoch += 1;
                    rt.switch_target = Some(target);
                    if !settled {
                        rt.radio = RadioState::Switching;
                        rt.rx_since = None;
                    }
                }
                let epoch = self.nodes[node.0 as usize].radio_epoch;
                self.push(self.now + delay, EventKind::RadioReady { node, epoch });
            }
            RadioState::Switching => unreachable!(),
        }
    }

    fn send(&mut self, node: NodeId, pkt: Packet) {
        {
            let rt = &self.nodes[node.0 as usize];
            assert_eq!(pkt.src, node, "{node} sent a frame forged from {}", pkt.src);
            assert_eq!(
                rt.radio,
                RadioState::Tx,
                "{node} transmitted with the radio in {:?}",
                rt.radio
            );
            assert!(rt.inflight.is_none(), "{node} transmitted over its own frame");
        }
        let air = self.params.air_time(pkt.air);
        let start = self.now;
        let end = start + air;
        let listeners = self.topo.listeners_of(node).to_vec();
        let tx = self.records.len();

        // Mark mutual corruption with everything already on the air that
        // shares a listener. New overlaps can only begin at a start, so
        // checking here covers every overlapping pair exactly once.
        let mut corrupted_at = BTreeSet::new();
        for &other in &self.on_air.clone() {
            let other_src = self.records[other].pkt.src;
            let common: Vec<NodeId> = listeners
                .iter()
                .copied()
                .filter(|l| self.topo.listeners_of(other_src).contains(l))
                .collect();
            if !common.is_empty() {
                self.stats.collision_pairs += 1;
                for l in common {
                    corrupted_at.insert(l);
                    self.records[other].corrupted_at.insert(l);
                }
            }
        }

        self.stats.sent += 1;
        self.nodes[node.0 as usize].inflight = Some(tx);
        let pending = listeners.len();
        self.records.push(TxRecord {
            pkt,
            start,
            on_air: true,
            corrupted_at,
            delivered_to: BTreeSet::new(),
            pending_arrivals: pending,
        });
        self.on_air.push(tx);
        self.push(end, EventKind::TxDone { node, tx });
        for l in &listeners {
            self.push(end + self.params.prop(), EventKind::Arrival { listener: *l, tx });
        }
        if pending == 0 {
            self.classify(tx);
        }
    }
}
