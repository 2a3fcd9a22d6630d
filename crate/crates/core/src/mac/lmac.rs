//! Slotted TDMA MAC.
//!
//! Time is divided into fixed slots grouped into frames; node k owns slot k
//! of every frame, so transmissions never collide. A slot opens with a
//! control section: the owner broadcasts a short header naming the node it
//! is about to serve, every other node listens. A node named in the header
//! keeps receiving until the slot ends; the rest go back to sleep, either
//! right after the header or at the end of an empty control section. The
//! owner streams queued data back-to-back after its header, within the slot.

use std::collections::VecDeque;

use crate::energy::RadioState;
use crate::engine::RadioParams;
use crate::mac::{
    AirTime, CallCtx, CounterKey, Dest, Mac, MacAction, NodeId, Packet, PacketKind, TimerSlot,
};
use crate::time::{SimDuration, SimTime};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmacConfig {
    /// Slots per frame. Every node needs its own slot index below this.
    pub frame_slots: u32,
    pub slot_s: f64,
    /// Leading part of each slot reserved for the owner's header; everyone
    /// else listens at most this long.
    pub control_s: f64,
    pub header_bytes: u32,
    pub queue_capacity: usize,
}

impl Default for LmacConfig {
    fn default() -> Self {
        LmacConfig {
            frame_slots: 32,
            slot_s: 0.03,
            control_s: 0.015,
            header_bytes: 12,
            queue_capacity: 16,
        }
    }
}

impl LmacConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.frame_slots == 0 {
            problems.push("lmac.frame_slots must be at least 1".into());
        }
        if !(self.slot_s > 0.0 && self.slot_s.is_finite()) {
            problems.push(format!("lmac.slot_s must be positive, got {}", self.slot_s));
        }
        if !(self.control_s > 0.0 && self.control_s < self.slot_s) {
            problems.push(format!(
                "lmac.control_s {} must fit inside the slot {}",
                self.control_s, self.slot_s
            ));
        }
        if self.queue_capacity == 0 {
            problems.push("lmac.queue_capacity must be at least 1".into());
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LmacMode {
    /// Asleep between obligations.
    Idle,
    /// Switching into receive for a foreign slot's control section.
    GoingControl,
    ListenControl,
    /// Header named this node; receiving until the slot ends.
    ReceiveSlot,
    /// Switching into transmit at the start of the owned slot.
    GoingHeader,
    SendingHeader,
    SendingData,
}

/// One TDMA node. `own_slot` must be unique across the network.
pub struct LmacNode {
    id: NodeId,
    own_slot: u32,
    cfg: LmacConfig,
    radio: RadioParams,
    mode: LmacMode,
    /// Frames queued for the uplink, as (destination, payload bytes).
    queue: VecDeque<(NodeId, u32)>,
    slot_counter: u64,
    slot_end: SimTime,
    seq: u64,
}

impl LmacNode {
    pub fn new(id: NodeId, own_slot: u32, cfg: LmacConfig, radio: RadioParams) -> Self {
        assert!(own_slot < cfg.frame_slots, "slot index outside the frame");
        LmacNode {
            id,
            own_slot,
            cfg,
            radio,
            mode: LmacMode::Idle,
            queue: VecDeque::new(),
            slot_counter: 0,
            slot_end: SimTime::ZERO,
            seq: 0,
        }
    }

    fn owns_current_slot(&self) -> bool {
        self.slot_counter % u64::from(self.cfg.frame_slots) == u64::from(self.own_slot)
    }

    /// The next queued frame fits if it can leave the air before the slot
    /// closes.
    fn next_frame_fits(&self, now: SimTime) -> bool {
        match self.queue.front() {
            Some(&(_, bytes)) => {
                now + self.radio.air_time(AirTime::Bytes(bytes)) + self.radio.prop()
                    <= self.slot_end
            }
            None => false,
        }
    }

    fn send_next_data(&mut self) -> Vec<MacAction> {
        let (dst, bytes) = *self.queue.front().expect("checked non-empty");
        self.mode = LmacMode::SendingData;
        self.seq += 1;
        vec![
            MacAction::Count(CounterKey::DataSent),
            MacAction::Send(Packet {
                kind: PacketKind::Data,
                src: self.id,
                dst: Dest::Node(dst),
                target: None,
                air: AirTime::Bytes(bytes),
                seq: self.seq,
            }),
        ]
    }

    fn sleep(&mut self) -> Vec<MacAction> {
        self.mode = LmacMode::Idle;
        vec![MacAction::SetRadio(RadioState::Sleep)]
    }
}

impl Mac for LmacNode {
    fn node_id(&self) -> NodeId {
        self.id
    }

    fn start(&mut self, ctx: &CallCtx) -> Vec<MacAction> {
        // First boundary fires at the epoch itself.
        vec![MacAction::SetTimer { slot: TimerSlot::SlotBoundary, at: ctx.now }]
    }

    fn on_timer(&mut self, ctx: &CallCtx, slot: TimerSlot) -> Vec<MacAction> {
        match slot {
            TimerSlot::SlotBoundary => {
                self.slot_end = ctx.now + SimDuration::from_secs_f64(self.cfg.slot_s);
                let mut actions = vec![MacAction::SetTimer {
                    slot: TimerSlot::SlotBoundary,
                    at: self.slot_end,
                }];
                if self.owns_current_slot() {
                    self.mode = LmacMode::GoingHeader;
                    actions.push(MacAction::SetRadio(RadioState::Tx));
                } else {
                    self.mode = LmacMode::GoingControl;
                    actions.push(MacAction::SetRadio(RadioState::Rx));
                    actions.push(MacAction::SetTimer {
                        slot: TimerSlot::ControlEnd,
                        at: ctx.now + SimDuration::from_secs_f64(self.cfg.control_s),
                    });
                }
                self.slot_counter += 1;
                actions
            }
            TimerSlot::ControlEnd => match self.mode {
                // No header named this node; nothing more happens here.
                // A control section shorter than the radio switch ends the
                // same way, before the listen ever started.
                LmacMode::ListenControl | LmacMode::GoingControl => self.sleep(),
                // Named in a header; the slot boundary owns what happens
                // next.
                LmacMode::ReceiveSlot => vec![],
                other => panic!("control end in mode {other:?}"),
            },
            other => panic!("unexpected timer {other:?}"),
        }
    }

    fn on_radio_ready(&mut self, _ctx: &CallCtx, state: RadioState) -> Vec<MacAction> {
        match (self.mode, state) {
            (LmacMode::GoingControl, RadioState::Rx) => {
                self.mode = LmacMode::ListenControl;
                vec![]
            }
            (LmacMode::GoingHeader, RadioState::Tx) => {
                self.mode = LmacMode::SendingHeader;
                self.seq += 1;
                vec![
                    MacAction::Count(CounterKey::SlotHeadersSent),
                    MacAction::Send(Packet {
                        kind: PacketKind::SlotHeader,
                        src: self.id,
                        dst: Dest::Broadcast,
                        target: self.queue.front().map(|&(dst, _)| dst),
                        air: AirTime::Bytes(self.cfg.header_bytes),
                        seq: self.seq,
                    }),
                ]
            }
            other => panic!("radio ready {other:?} out of mode"),
        }
    }

    fn on_tx_done(&mut self, ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        match (self.mode, pkt.kind) {
            (LmacMode::SendingHeader, PacketKind::SlotHeader) => {
                if self.next_frame_fits(ctx.now) {
                    self.send_next_data()
                } else {
                    self.sleep()
                }
            }
            (LmacMode::SendingData, PacketKind::Data) => {
                self.queue.pop_front();
                if self.next_frame_fits(ctx.now) {
                    self.send_next_data()
                } else {
                    self.sleep()
                }
            }
            other => panic!("tx done {other:?} out of mode"),
        }
    }

    fn on_packet(&mut self, _ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        match (self.mode, pkt.kind) {
            (LmacMode::ListenControl, PacketKind::SlotHeader) => {
                if pkt.target == Some(self.id) {
                    self.mode = LmacMode::ReceiveSlot;
                    vec![]
                } else {
                    // Slot serves someone else; no point listening on.
                    let mut actions = vec![MacAction::CancelTimer(TimerSlot::ControlEnd)];
                    actions.extend(self.sleep());
                    actions
                }
            }
            (LmacMode::ReceiveSlot, PacketKind::Data) => {
                vec![MacAction::Count(CounterKey::DataReceived)]
            }
            _ => vec![],
        }
    }

    fn on_upper_data(&mut self, _ctx: &CallCtx, dst: NodeId, bytes: u32) -> Vec<MacAction> {
        let mut actions = vec![MacAction::Count(CounterKey::DataGenerated)];
        self.queue.push_back((dst, bytes));
        if self.queue.len() > self.cfg.queue_capacity {
            self.queue.pop_front();
            actions.push(MacAction::Count(CounterKey::QueueDrops));
        }
        actions
    }

    fn on_channel_idle(&mut self, _ctx: &CallCtx) -> Vec<MacAction> {
        panic!("no idle notification was requested");
    }
}
