//! Low-power-listening MAC.
//!
//! Every node briefly samples the channel on a fixed cadence and sleeps in
//! between. A sender prefixes each data frame with a preamble longer than
//! that cadence, so any sampling receiver is guaranteed to land inside the
//! preamble, stay in receive, and catch the data at its end. There are no
//! acknowledgements and no carrier sensing before sending; the cost profile
//! is dominated by senders holding the air.

use std::collections::VecDeque;

use crate::energy::RadioState;
use crate::mac::{
    AirTime, CallCtx, CounterKey, Dest, Mac, MacAction, NodeId, Packet, PacketKind, TimerSlot,
};
use crate::time::SimDuration;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmacConfig {
    /// Time between channel samples.
    pub check_interval_s: f64,
    /// Preamble duration. Must cover at least one full check interval.
    pub preamble_s: f64,
    /// How long one channel sample listens before deciding busy/idle.
    pub sample_window_s: f64,
    pub queue_capacity: usize,
}

impl Default for BmacConfig {
    fn default() -> Self {
        BmacConfig {
            check_interval_s: 0.1,
            preamble_s: 0.11,
            sample_window_s: 1e-3,
            queue_capacity: 16,
        }
    }
}

impl BmacConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("check_interval_s", self.check_interval_s),
            ("preamble_s", self.preamble_s),
            ("sample_window_s", self.sample_window_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("bmac.{name} must be positive, got {v}"));
            }
        }
        if self.preamble_s < self.check_interval_s {
            problems.push(format!(
                "bmac.preamble_s {} must cover the check interval {} or a \
                 sampling receiver can miss the whole preamble",
                self.preamble_s, self.check_interval_s
            ));
        }
        if self.queue_capacity == 0 {
            problems.push("bmac.queue_capacity must be at least 1".into());
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BmacMode {
    Sleep,
    /// Switching into receive for a channel sample.
    GoingSample,
    /// Listening for the sample window.
    Sampling,
    /// Sample found the channel busy; holding receive until it clears.
    Receiving,
    /// Switching into transmit for a preamble.
    GoingTx,
    SendingPreamble,
    SendingData,
}

/// One low-power-listening node; samples always, sends when queued.
pub struct BmacNode {
    id: NodeId,
    /// Where this node's data frames go (the hub, for leaves).
    uplink: NodeId,
    cfg: BmacConfig,
    mode: BmacMode,
    queue: VecDeque<u32>,
    seq: u64,
}

impl BmacNode {
    pub fn new(id: NodeId, uplink: NodeId, cfg: BmacConfig) -> Self {
        BmacNode {
            id,
            uplink,
            cfg,
            mode: BmacMode::Sleep,
            queue: VecDeque::new(),
            seq: 0,
        }
    }

    fn sample_in(&self, ctx: &CallCtx) -> MacAction {
        MacAction::SetTimer {
            slot: TimerSlot::Sample,
            at: ctx.now + SimDuration::from_secs_f64(self.cfg.check_interval_s),
        }
    }

    /// Leaving an awake phase: start the next transmission immediately if
    /// anything is queued, otherwise power down until the next sample.
    fn sleep_or_send(&mut self) -> Vec<MacAction> {
        if self.queue.is_empty() {
            self.mode = BmacMode::Sleep;
            vec![MacAction::SetRadio(RadioState::Sleep)]
        } else {
            self.mode = BmacMode::GoingTx;
            vec![MacAction::SetRadio(RadioState::Tx)]
        }
    }
}

impl Mac for BmacNode {
    fn node_id(&self) -> NodeId {
        self.id
    }

    fn start(&mut self, ctx: &CallCtx) -> Vec<MacAction> {
        vec![self.sample_in(ctx)]
    }

    fn on_timer(&mut self, ctx: &CallCtx, slot: TimerSlot) -> Vec<MacAction> {
        match slot {
            TimerSlot::Sample => {
                // The cadence never stops; a sample landing mid-send or
                // mid-receive just yields to the activity in progress.
                let mut actions = vec![self.sample_in(ctx)];
                if self.mode == BmacMode::Sleep {
                    self.mode = BmacMode::GoingSample;
                    actions.push(MacAction::Count(CounterKey::Samples));
                    actions.push(MacAction::SetRadio(RadioState::Rx));
                }
                actions
            }
            TimerSlot::SampleEnd => {
                assert_eq!(self.mode, BmacMode::Sampling);
                if ctx.channel_busy {
                    self.mode = BmacMode::Receiving;
                    vec![
                        MacAction::Count(CounterKey::BusySamples),
                        MacAction::NotifyWhenChannelIdle,
                    ]
                } else {
                    self.sleep_or_send()
                }
            }
            other => panic!("unexpected timer {other:?}"),
        }
    }

    fn on_radio_ready(&mut self, ctx: &CallCtx, state: RadioState) -> Vec<MacAction> {
        match (self.mode, state) {
            (BmacMode::GoingSample, RadioState::Rx) => {
                self.mode = BmacMode::Sampling;
                vec![MacAction::SetTimer {
                    slot: TimerSlot::SampleEnd,
                    at: ctx.now + SimDuration::from_secs_f64(self.cfg.sample_window_s),
                }]
            }
            (BmacMode::GoingTx, RadioState::Tx) => {
                self.mode = BmacMode::SendingPreamble;
                self.seq += 1;
                vec![
                    MacAction::Count(CounterKey::PreamblesSent),
                    MacAction::Send(Packet {
                        kind: PacketKind::Preamble,
                        src: self.id,
                        dst: Dest::Broadcast,
                        target: None,
                        air: AirTime::Exact(SimDuration::from_secs_f64(self.cfg.preamble_s)),
                        seq: self.seq,
                    }),
                ]
            }
            other => panic!("radio ready {other:?} out of mode"),
        }
    }

    fn on_tx_done(&mut self, _ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        match (self.mode, pkt.kind) {
            (BmacMode::SendingPreamble, PacketKind::Preamble) => {
                // Data rides immediately behind the preamble; the radio is
                // still keyed.
                self.mode = BmacMode::SendingData;
                let bytes = *self.queue.front().expect("preamble sent with empty queue");
                self.seq += 1;
                vec![
                    MacAction::Count(CounterKey::DataSent),
                    MacAction::Send(Packet {
                        kind: PacketKind::Data,
                        src: self.id,
                        dst: Dest::Node(self.uplink),
                        target: None,
                        air: AirTime::Bytes(bytes),
                        seq: self.seq,
                    }),
                ]
            }
            (BmacMode::SendingData, PacketKind::Data) => {
                self.queue.pop_front();
                self.sleep_or_send()
            }
            other => panic!("tx done {other:?} out of mode"),
        }
    }

    fn on_packet(&mut self, _ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        if self.mode == BmacMode::Receiving && pkt.kind == PacketKind::Data {
            return vec![MacAction::Count(CounterKey::DataReceived)];
        }
        vec![] // preambles carry nothing; stray frames are noise
    }

    fn on_upper_data(&mut self, _ctx: &CallCtx, dst: NodeId, bytes: u32) -> Vec<MacAction> {
        assert_eq!(dst, self.uplink);
        let mut actions = vec![MacAction::Count(CounterKey::DataGenerated)];
        self.queue.push_back(bytes);
        if self.queue.len() > self.cfg.queue_capacity {
            self.queue.pop_front();
            actions.push(MacAction::Count(CounterKey::QueueDrops));
        }
        if self.mode == BmacMode::Sleep {
            self.mode = BmacMode::GoingTx;
            actions.push(MacAction::SetRadio(RadioState::Tx));
        }
        actions
    }

    fn on_channel_idle(&mut self, ctx: &CallCtx) -> Vec<MacAction> {
        assert_eq!(self.mode, BmacMode::Receiving);
        if ctx.channel_busy {
            // A new frame started at the same instant the old one ended
            // (back-to-back preamble and data); keep holding receive.
            return vec![MacAction::NotifyWhenChannelIdle];
        }
        self.sleep_or_send()
    }
}
