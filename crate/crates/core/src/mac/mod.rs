//! The interface between MAC protocol state machines and the event engine.
//!
//! A MAC implementation is a pure state machine: every callback receives the
//! current time plus a channel snapshot and returns a list of actions for
//! the engine to carry out. MACs never touch the event queue, the channel,
//! or each other directly, which keeps each protocol unit-testable by
//! feeding it callbacks by hand.

pub mod bmac;
pub mod lmac;
pub mod tadmac;

use crate::energy::RadioState;
use crate::time::SimTime;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Node identifier. Nodes in a run are numbered contiguously from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Frame destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Node(NodeId),
    Broadcast,
}

/// Frame types across all three protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    /// Receiver-initiated beacon naming the transmitter being polled.
    WakeupBeacon,
    /// Application payload.
    Data,
    /// Link-level acknowledgement.
    Ack,
    /// Long low-power-listening preamble.
    Preamble,
    /// TDMA slot-ownership header, naming the data destination if any.
    SlotHeader,
}

/// How long a frame occupies the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirTime {
    /// Computed from the frame length and the radio bitrate.
    Bytes(u32),
    /// Fixed on-air duration regardless of bitrate (preambles).
    Exact(crate::time::SimDuration),
}

/// A frame in flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub kind: PacketKind,
    pub src: NodeId,
    pub dst: Dest,
    /// Node named inside the frame body: the polled transmitter in a
    /// wake-up beacon, the data destination in a slot header.
    pub target: Option<NodeId>,
    pub air: AirTime,
    pub seq: u64,
}

/// Per-node timer identities. Setting a slot that is already armed replaces
/// the previous deadline; at most one fire per slot is outstanding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerSlot {
    /// Next scheduled wake-up of an adaptive receiver.
    Wake,
    /// End of a clear-channel-assessment listen window.
    Cca,
    /// Deadline for the data response to a wake-up beacon.
    DataTimeout,
    /// Deadline for the acknowledgement of a sent data frame.
    AckTimeout,
    /// Next low-power-listening channel sample.
    Sample,
    /// End of the current channel-sample listen window.
    SampleEnd,
    /// Next TDMA slot boundary.
    SlotBoundary,
    /// End of the control section inside the current TDMA slot.
    ControlEnd,
}

/// Per-node statistics a MAC can bump. Reported verbatim in run output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterKey {
    Wakeups,
    BeaconsSent,
    DataReceived,
    DataTimeouts,
    AcksSent,
    MissedWakeupsQueued,
    CcaBusyAborts,
    DataGenerated,
    QueueDrops,
    DataSent,
    AcksReceived,
    AckTimeouts,
    DataAbandoned,
    Samples,
    BusySamples,
    PreamblesSent,
    SlotHeadersSent,
}

/// What a MAC asks the engine to do in response to a callback.
#[derive(Debug, Clone, PartialEq)]
pub enum MacAction {
    /// Retune the radio. Entering `Rx` or `Tx` takes the configured switch
    /// time and completes with an `on_radio_ready` callback; entering
    /// `Sleep` or `Off` is immediate and silent.
    SetRadio(RadioState),
    SetTimer { slot: TimerSlot, at: SimTime },
    CancelTimer(TimerSlot),
    /// Put a frame on the air. Only legal while the radio is in `Tx` and no
    /// other frame from this node is in flight.
    Send(Packet),
    Count(CounterKey),
    /// Request a single `on_channel_idle` callback once nothing audible to
    /// this node is on the air (immediately, if that is already the case).
    NotifyWhenChannelIdle,
    /// Record one completed wake-up for `neighbor`: whether it yielded data
    /// and the interval (seconds) in force afterwards.
    RecordInterval { neighbor: NodeId, i_wu_s: f64, hit: bool },
}

/// Snapshot handed to every MAC callback.
#[derive(Debug, Clone, Copy)]
pub struct CallCtx {
    pub now: SimTime,
    /// True while any frame audible to this node is on the air.
    pub channel_busy: bool,
}

/// A MAC protocol instance bound to one node.
pub trait Mac {
    fn node_id(&self) -> NodeId;

    /// Called once at simulation start, before any event.
    fn start(&mut self, ctx: &CallCtx) -> Vec<MacAction>;

    fn on_timer(&mut self, ctx: &CallCtx, slot: TimerSlot) -> Vec<MacAction>;

    /// The radio finished switching and is now settled in `state`.
    fn on_radio_ready(&mut self, ctx: &CallCtx, state: RadioState) -> Vec<MacAction>;

    /// The frame this node was sending has left the air.
    fn on_tx_done(&mut self, ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction>;

    /// A frame addressed to this node (or broadcast) arrived intact.
    fn on_packet(&mut self, ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction>;

    /// The application produced a payload for `dst`.
    fn on_upper_data(&mut self, ctx: &CallCtx, dst: NodeId, bytes: u32) -> Vec<MacAction>;

    /// Answer to an earlier `NotifyWhenChannelIdle` request.
    fn on_channel_idle(&mut self, ctx: &CallCtx) -> Vec<MacAction>;
}
