//! Adaptive receiver-initiated MAC.
//!
//! The hub (receiver) polls each transmitter on its own learned rhythm: it
//! wakes, checks the channel, broadcasts a wake-up beacon naming the
//! transmitter whose turn it is, and waits briefly for that node's data. A
//! data frame is acknowledged and recorded as a hit in the transmitter's
//! traffic status register; silence records a miss. The register feeds the
//! interval law in [`crate::adaptive`], so every poll retunes when that
//! transmitter will next be polled.
//!
//! Transmitters hold at most a few queued readings and simply listen
//! whenever the queue is non-empty, answering only beacons that name them.
//! The hub serializes everything: one poll is always finished (data or
//! timeout, plus acknowledgement) before the next begins, and polls that
//! came due in the meantime fire back to back afterwards.

use std::collections::{BTreeMap, VecDeque};

use crate::adaptive::{
    AdaptParams, ErrorPolicy, IntervalState, TsrInit, TsrRegister,
};
use crate::energy::RadioState;
use crate::engine::RadioParams;
use crate::mac::{
    AirTime, CallCtx, CounterKey, Dest, Mac, MacAction, NodeId, Packet, PacketKind, TimerSlot,
};
use crate::time::{SimDuration, SimTime};
use serde::{Deserialize, Serialize};

/// Tuning knobs shared by the receiver and transmitter sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TadConfig {
    /// Weight of the recent register half in the update factor.
    pub alpha: f64,
    /// Interval step unit, seconds.
    pub t_ref_s: f64,
    /// Wake-up interval clamp, seconds.
    pub i_min_s: f64,
    pub i_max_s: f64,
    /// Traffic status register length in bits.
    pub tsr_len: usize,
    pub tsr_init: TsrInit,
    pub error_policy: ErrorPolicy,
    /// First wake-up interval used for every neighbor, seconds.
    pub initial_interval_s: f64,
    /// Clear-channel-assessment listen window before beaconing, seconds.
    pub cca_s: f64,
    pub wb_bytes: u32,
    /// Nominal data frame size, used to size the receiver's data wait.
    pub data_bytes: u32,
    pub ack_bytes: u32,
    /// Further beacon cycles a transmitter keeps an unacknowledged frame
    /// alive for before abandoning it.
    pub max_retries: u32,
    /// Transmitter queue depth; the oldest frame is dropped on overflow.
    pub queue_capacity: usize,
}

impl Default for TadConfig {
    fn default() -> Self {
        TadConfig {
            alpha: 0.5,
            t_ref_s: 1e-3,
            i_min_s: 10e-3,
            i_max_s: 2.0,
            tsr_len: 8,
            tsr_init: TsrInit::Alternating,
            error_policy: ErrorPolicy::default(),
            initial_interval_s: 0.1,
            cca_s: 1e-3,
            wb_bytes: 12,
            data_bytes: 48,
            ack_bytes: 12,
            max_retries: 3,
            queue_capacity: 1,
        }
    }
}

impl TadConfig {
    pub fn adapt_params(&self) -> Result<AdaptParams, crate::adaptive::AdaptError> {
        AdaptParams::new(self.alpha, self.t_ref_s, self.i_min_s, self.i_max_s)
    }

    /// How long the receiver waits for a data response after its beacon:
    /// twice the beacon-to-data round trip.
    pub fn data_wait(&self, radio: &RadioParams) -> SimDuration {
        let rt = radio.air_time(AirTime::Bytes(self.wb_bytes)).as_secs_f64()
            + radio.prop_delay_s
            + radio.air_time(AirTime::Bytes(self.data_bytes)).as_secs_f64();
        SimDuration::from_secs_f64(2.0 * rt)
    }

    /// How long a transmitter waits for the acknowledgement: twice the
    /// receiver's turnaround (switch, then the acknowledgement frame).
    pub fn ack_wait(&self, radio: &RadioParams) -> SimDuration {
        let rt = radio.switch_s
            + radio.air_time(AirTime::Bytes(self.ack_bytes)).as_secs_f64()
            + radio.prop_delay_s;
        SimDuration::from_secs_f64(2.0 * rt)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if let Err(e) = self.adapt_params() {
            problems.push(format!("tadmac: {e}"));
        }
        if let Err(e) = TsrRegister::new(self.tsr_len, self.tsr_init) {
            problems.push(format!("tadmac: {e}"));
        }
        if !(self.initial_interval_s >= self.i_min_s
            && self.initial_interval_s <= self.i_max_s)
        {
            problems.push(format!(
                "tadmac.initial_interval_s {} is outside the clamp [{}, {}]",
                self.initial_interval_s, self.i_min_s, self.i_max_s
            ));
        }
        if !(self.cca_s > 0.0 && self.cca_s.is_finite()) {
            problems.push(format!("tadmac.cca_s must be positive, got {}", self.cca_s));
        }
        if self.queue_capacity == 0 {
            problems.push("tadmac.queue_capacity must be at least 1".into());
        }
        for (name, v) in [
            ("wb_bytes", self.wb_bytes),
            ("data_bytes", self.data_bytes),
            ("ack_bytes", self.ack_bytes),
        ] {
            if v == 0 {
                problems.push(format!("tadmac.{name} must be positive"));
            }
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RxPhase {
    /// Radio asleep, wake timer armed.
    Sleep,
    /// Switching into receive for the channel check.
    GoingRxCca,
    /// Listening for the clear-channel window.
    Cca,
    /// Switching into transmit for the beacon.
    GoingTxWb,
    /// Beacon on the air.
    SendingWb,
    /// Switching back into receive for the data response.
    GoingRxData,
    /// Listening for the data response.
    WaitData,
    /// Switching into transmit for the acknowledgement.
    GoingTxAck,
    /// Acknowledgement on the air.
    SendingAck,
}

/// Hub side: polls every transmitter neighbor on its learned interval.
pub struct TadReceiver {
    id: NodeId,
    cfg: TadConfig,
    radio: RadioParams,
    params: AdaptParams,
    phase: RxPhase,
    /// Neighbor being polled while a wake-up is in progress.
    current: Option<NodeId>,
    regs: BTreeMap<NodeId, TsrRegister>,
    intervals: BTreeMap<NodeId, IntervalState>,
    next_wake: BTreeMap<NodeId, SimTime>,
    seq: u64,
}

impl TadReceiver {
    pub fn new(id: NodeId, neighbors: &[NodeId], cfg: TadConfig, radio: RadioParams) -> Self {
        assert!(!neighbors.is_empty(), "receiver needs at least one neighbor");
        let params = cfg.adapt_params().expect("invalid adaptive parameters");
        let regs = neighbors
            .iter()
            .map(|&n| (n, TsrRegister::new(cfg.tsr_len, cfg.tsr_init).unwrap()))
            .collect();
        let intervals = neighbors
            .iter()
            .map(|&n| (n, IntervalState::new(cfg.initial_interval_s)))
            .collect();
        TadReceiver {
            id,
            cfg,
            radio,
            params,
            phase: RxPhase::Sleep,
            current: None,
            regs,
            intervals,
            next_wake: BTreeMap::new(),
            seq: 0,
        }
    }

    /// Interval history (seconds, one entry per completed wake-up) kept for
    /// `neighbor`.
    pub fn interval_history(&self, neighbor: NodeId) -> Option<&[f64]> {
        self.intervals.get(&neighbor).map(|s| s.history.as_slice())
    }

    /// Earliest pending wake-up; ties go to the lowest node id.
    fn earliest_due(&self) -> (NodeId, SimTime) {
        self.next_wake
            .iter()
            .min_by_key(|(n, t)| (**t, **n))
            .map(|(n, t)| (*n, *t))
            .expect("no pending wake-ups")
    }

    /// Books the wake-up outcome for the polled neighbor, reschedules it,
    /// and emits the interval trace record.
    fn settle(&mut self, now: SimTime, hit: bool) -> Vec<MacAction> {
        let n = self.current.take().expect("no poll in progress");
        let reg = self.regs.get_mut(&n).unwrap();
        let st = self.intervals.get_mut(&n).unwrap();
        let i = st.observe(reg, hit, &self.params, &self.cfg.error_policy);
        self.next_wake.insert(n, now + SimDuration::from_secs_f64(i));
        vec![MacAction::RecordInterval { neighbor: n, i_wu_s: i, hit }]
    }

    /// Sleeps the radio and arms the wake timer for the earliest due poll.
    /// A poll that came due while this one ran fires at `now`, immediately
    /// after the current event cascade.
    fn sleep_and_rearm(&mut self, now: SimTime) -> Vec<MacAction> {
        self.phase = RxPhase::Sleep;
        let (_, due) = self.earliest_due();
        let mut actions = vec![MacAction::SetRadio(RadioState::Sleep)];
        if due <= now {
            actions.push(MacAction::Count(CounterKey::MissedWakeupsQueued));
        }
        actions.push(MacAction::SetTimer { slot: TimerSlot::Wake, at: due.max(now) });
        actions
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }
}

impl Mac for TadReceiver {
    fn node_id(&self) -> NodeId {
        self.id
    }

    fn start(&mut self, ctx: &CallCtx) -> Vec<MacAction> {
        let first = ctx.now + SimDuration::from_secs_f64(self.cfg.initial_interval_s);
        let neighbors: Vec<NodeId> = self.regs.keys().copied().collect();
        for n in neighbors {
            self.next_wake.insert(n, first);
        }
        vec![MacAction::SetTimer { slot: TimerSlot::Wake, at: first }]
    }

    fn on_timer(&mut self, ctx: &CallCtx, slot: TimerSlot) -> Vec<MacAction> {
        match (slot, self.phase) {
            (TimerSlot::Wake, RxPhase::Sleep) => {
                let (n, _) = self.earliest_due();
                self.current = Some(n);
                self.phase = RxPhase::GoingRxCca;
                vec![
                    MacAction::Count(CounterKey::Wakeups),
                    MacAction::SetRadio(RadioState::Rx),
                ]
            }
            (TimerSlot::Cca, RxPhase::Cca) => {
                if ctx.channel_busy {
                    // Someone else owns the air; record the poll as a miss
                    // and come back on the adjusted interval.
                    let mut actions = vec![MacAction::Count(CounterKey::CcaBusyAborts)];
                    actions.extend(self.settle(ctx.now, false));
                    actions.extend(self.sleep_and_rearm(ctx.now));
                    actions
                } else {
                    self.phase = RxPhase::GoingTxWb;
                    vec![MacAction::SetRadio(RadioState::Tx)]
                }
            }
            (TimerSlot::DataTimeout, RxPhase::WaitData) => {
                let mut actions = vec![MacAction::Count(CounterKey::DataTimeouts)];
                actions.extend(self.settle(ctx.now, false));
                actions.extend(self.sleep_and_rearm(ctx.now));
                actions
            }
            other => panic!("receiver got timer {other:?} out of phase"),
        }
    }

    fn on_radio_ready(&mut self, ctx: &CallCtx, state: RadioState) -> Vec<MacAction> {
        match (self.phase, state) {
            (RxPhase::GoingRxCca, RadioState::Rx) => {
                self.phase = RxPhase::Cca;
                vec![MacAction::SetTimer {
                    slot: TimerSlot::Cca,
                    at: ctx.now + SimDuration::from_secs_f64(self.cfg.cca_s),
                }]
            }
            (RxPhase::GoingTxWb, RadioState::Tx) => {
                self.phase = RxPhase::SendingWb;
                let target = self.current.expect("beacon without a poll target");
                vec![
                    MacAction::Count(CounterKey::BeaconsSent),
                    MacAction::Send(Packet {
                        kind: PacketKind::WakeupBeacon,
                        src: self.id,
                        dst: Dest::Broadcast,
                        target: Some(target),
                        air: AirTime::Bytes(self.cfg.wb_bytes),
                        seq: self.next_seq(),
                    }),
                ]
            }
            (RxPhase::GoingRxData, RadioState::Rx) => {
                self.phase = RxPhase::WaitData;
                vec![MacAction::SetTimer {
                    slot: TimerSlot::DataTimeout,
                    at: ctx.now + self.cfg.data_wait(&self.radio),
                }]
            }
            (RxPhase::GoingTxAck, RadioState::Tx) => {
                self.phase = RxPhase::SendingAck;
                let to = self.current.expect("acknowledgement without a poll target");
                vec![
                    MacAction::Count(CounterKey::AcksSent),
                    MacAction::Send(Packet {
                        kind: PacketKind::Ack,
                        src: self.id,
                        dst: Dest::Node(to),
                        target: None,
                        air: AirTime::Bytes(self.cfg.ack_bytes),
                        seq: self.next_seq(),
                    }),
                ]
            }
            other => panic!("receiver radio ready {other:?} out of phase"),
        }
    }

    fn on_tx_done(&mut self, ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        match (self.phase, pkt.kind) {
            (RxPhase::SendingWb, PacketKind::WakeupBeacon) => {
                self.phase = RxPhase::GoingRxData;
                vec![MacAction::SetRadio(RadioState::Rx)]
            }
            (RxPhase::SendingAck, PacketKind::Ack) => self.sleep_and_rearm(ctx.now),
            other => panic!("receiver tx-done {other:?} out of phase"),
        }
    }

    fn on_packet(&mut self, ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        if self.phase != RxPhase::WaitData
            || pkt.kind != PacketKind::Data
            || Some(pkt.src) != self.current
        {
            return vec![]; // stray frame outside the poll exchange
        }
        let mut actions = vec![
            MacAction::CancelTimer(TimerSlot::DataTimeout),
            MacAction::Count(CounterKey::DataReceived),
        ];
        actions.extend(self.settle(ctx.now, true));
        // `settle` clears `current`, but the acknowledgement still needs
        // the address.
        self.current = Some(pkt.src);
        self.phase = RxPhase::GoingTxAck;
        actions.push(MacAction::SetRadio(RadioState::Tx));
        actions
    }

    fn on_upper_data(&mut self, _ctx: &CallCtx, _dst: NodeId, _bytes: u32) -> Vec<MacAction> {
        panic!("the hub is a pure sink; no application traffic originates here");
    }

    fn on_channel_idle(&mut self, _ctx: &CallCtx) -> Vec<MacAction> {
        vec![]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TxPhase {
    /// Queue empty, radio asleep.
    Sleep,
    /// Switching into receive to wait for a beacon.
    GoingRx,
    /// Listening for a beacon that names this node.
    WaitWb,
    /// Switching into transmit for the data frame.
    GoingTx,
    /// Data frame on the air.
    SendingData,
    /// Switching back into receive for the acknowledgement.
    GoingRxAck,
    /// Listening for the acknowledgement.
    WaitAck,
}

/// Leaf side: queues application frames and answers beacons naming it.
pub struct TadTransmitter {
    id: NodeId,
    receiver: NodeId,
    cfg: TadConfig,
    radio: RadioParams,
    phase: TxPhase,
    queue: VecDeque<u32>,
    /// Transmissions of the current head-of-queue frame so far.
    attempts: u32,
    seq: u64,
}

impl TadTransmitter {
    pub fn new(id: NodeId, receiver: NodeId, cfg: TadConfig, radio: RadioParams) -> Self {
        TadTransmitter {
            id,
            receiver,
            cfg,
            radio,
            phase: TxPhase::Sleep,
            queue: VecDeque::new(),
            attempts: 0,
            seq: 0,
        }
    }

    /// After an exchange (or abandoned frame): keep listening if more data
    /// is queued, otherwise power down. The radio is already in receive on
    /// both paths that lead here.
    fn after_exchange(&mut self) -> Vec<MacAction> {
        if self.queue.is_empty() {
            self.phase = TxPhase::Sleep;
            vec![MacAction::SetRadio(RadioState::Sleep)]
        } else {
            self.phase = TxPhase::WaitWb;
            vec![]
        }
    }
}

impl Mac for TadTransmitter {
    fn node_id(&self) -> NodeId {
        self.id
    }

    fn start(&mut self, _ctx: &CallCtx) -> Vec<MacAction> {
        vec![] // nothing to do until the application produces data
    }

    fn on_timer(&mut self, _ctx: &CallCtx, slot: TimerSlot) -> Vec<MacAction> {
        assert_eq!(slot, TimerSlot::AckTimeout, "transmitter got unexpected timer {slot:?}");
        if self.phase != TxPhase::WaitAck {
            panic!("acknowledgement timer fired in phase {:?}", self.phase);
        }
        let mut actions = vec![MacAction::Count(CounterKey::AckTimeouts)];
        if self.attempts > self.cfg.max_retries {
            self.queue.pop_front();
            self.attempts = 0;
            actions.push(MacAction::Count(CounterKey::DataAbandoned));
        }
        actions.extend(self.after_exchange());
        actions
    }

    fn on_radio_ready(&mut self, ctx: &CallCtx, state: RadioState) -> Vec<MacAction> {
        match (self.phase, state) {
            (TxPhase::GoingRx, RadioState::Rx) => {
                self.phase = TxPhase::WaitWb;
                vec![]
            }
            (TxPhase::GoingTx, RadioState::Tx) => {
                self.phase = TxPhase::SendingData;
                self.attempts += 1;
                let bytes = *self.queue.front().expect("data send with empty queue");
                self.seq += 1;
                vec![
                    MacAction::Count(CounterKey::DataSent),
                    MacAction::Send(Packet {
                        kind: PacketKind::Data,
                        src: self.id,
                        dst: Dest::Node(self.receiver),
                        target: None,
                        air: AirTime::Bytes(bytes),
                        seq: self.seq,
                    }),
                ]
            }
            (TxPhase::GoingRxAck, RadioState::Rx) => {
                self.phase = TxPhase::WaitAck;
                vec![MacAction::SetTimer {
                    slot: TimerSlot::AckTimeout,
                    at: ctx.now + self.cfg.ack_wait(&self.radio),
                }]
            }
            other => panic!("transmitter radio ready {other:?} out of phase"),
        }
    }

    fn on_tx_done(&mut self, _ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        assert_eq!(pkt.kind, PacketKind::Data);
        assert_eq!(self.phase, TxPhase::SendingData);
        self.phase = TxPhase::GoingRxAck;
        vec![MacAction::SetRadio(RadioState::Rx)]
    }

    fn on_packet(&mut self, _ctx: &CallCtx, pkt: &Packet) -> Vec<MacAction> {
        match (self.phase, pkt.kind) {
            (TxPhase::WaitWb, PacketKind::WakeupBeacon) => {
                if pkt.target == Some(self.id) {
                    self.phase = TxPhase::GoingTx;
                    vec![MacAction::SetRadio(RadioState::Tx)]
                } else {
                    vec![] // beacon for a sibling; keep listening
                }
            }
            (TxPhase::WaitAck, PacketKind::Ack) => {
                if pkt.src != self.receiver {
                    return vec![];
                }
                self.queue.pop_front();
                self.attempts = 0;
                let mut actions = vec![
                    MacAction::CancelTimer(TimerSlot::AckTimeout),
                    MacAction::Count(CounterKey::AcksReceived),
                ];
                actions.extend(self.after_exchange());
                actions
            }
            _ => vec![],
        }
    }

    fn on_upper_data(&mut self, _ctx: &CallCtx, dst: NodeId, bytes: u32) -> Vec<MacAction> {
        assert_eq!(dst, self.receiver, "leaf can only send toward the hub");
        let mut actions = vec![MacAction::Count(CounterKey::DataGenerated)];
        self.queue.push_back(bytes);
        if self.queue.len() > self.cfg.queue_capacity {
            self.queue.pop_front();
            // Dropping the head invalidates any retry count tied to it.
            self.attempts = 0;
            actions.push(MacAction::Count(CounterKey::QueueDrops));
        }
        if self.phase == TxPhase::Sleep {
            self.phase = TxPhase::GoingRx;
            actions.push(MacAction::SetRadio(RadioState::Rx));
        }
        actions
    }

    fn on_channel_idle(&mut self, _ctx: &CallCtx) -> Vec<MacAction> {
        vec![]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(now_s: f64) -> CallCtx {
        CallCtx { now: SimTime::from_secs_f64(now_s), channel_busy: false }
    }

    fn busy_ctx(now_s: f64) -> CallCtx {
        CallCtx { now: SimTime::from_secs_f64(now_s), channel_busy: true }
    }

    fn wb(target: NodeId) -> Packet {
        Packet {
            kind: PacketKind::WakeupBeacon,
            src: NodeId(0),
            dst: Dest::Broadcast,
            target: Some(target),
            air: AirTime::Bytes(12),
            seq: 1,
        }
    }

    fn data(src: NodeId) -> Packet {
        Packet {
            kind: PacketKind::Data,
            src,
            dst: Dest::Node(NodeId(0)),
            target: None,
            air: AirTime::Bytes(48),
            seq: 1,
        }
    }

    fn ack() -> Packet {
        Packet {
            kind: PacketKind::Ack,
            src: NodeId(0),
            dst: Dest::Node(NodeId(1)),
            target: None,
            air: AirTime::Bytes(12),
            seq: 2,
        }
    }

    fn has_radio(actions: &[MacAction], state: RadioState) -> bool {
        actions.iter().any(|a| *a == MacAction::SetRadio(state))
    }

    fn sent_kind(actions: &[MacAction]) -> Option<PacketKind> {
        actions.iter().find_map(|a| match a {
            MacAction::Send(p) => Some(p.kind),
            _ => None,
        })
    }

    #[test]
    fn test_receiver_hit_cycle_keeps_interval_at_fixed_point() {
        // The alternating register plus a hit leaves the update factor and
        // the imbalance at zero, so the interval must not move.
        let mut rx = TadReceiver::new(
            NodeId(0),
            &[NodeId(1)],
            TadConfig::default(),
            RadioParams::default(),
        );
        let a = rx.start(&ctx(0.0));
        assert_eq!(
            a,
            vec![MacAction::SetTimer { slot: TimerSlot::Wake, at: SimTime::from_secs_f64(0.1) }]
        );

        let a = rx.on_timer(&ctx(0.1), TimerSlot::Wake);
        assert!(has_radio(&a, RadioState::Rx));

        let a = rx.on_radio_ready(&ctx(0.1002), RadioState::Rx);
        assert_eq!(
            a,
            vec![MacAction::SetTimer { slot: TimerSlot::Cca, at: SimTime::from_secs_f64(0.1012) }]
        );

        let a = rx.on_timer(&ctx(0.1012), TimerSlot::Cca);
        assert!(has_radio(&a, RadioState::Tx));

        let a = rx.on_radio_ready(&ctx(0.1014), RadioState::Tx);
        assert_eq!(sent_kind(&a), Some(PacketKind::WakeupBeacon));

        let a = rx.on_tx_done(&ctx(0.101784), &wb(NodeId(1)));
        assert!(has_radio(&a, RadioState::Rx));

        let a = rx.on_radio_ready(&ctx(0.101984), RadioState::Rx);
        assert_eq!(
            a,
            vec![MacAction::SetTimer {
                slot: TimerSlot::DataTimeout,
                at: SimTime::from_secs_f64(0.101984 + 0.003842),
            }]
        );

        let a = rx.on_packet(&ctx(0.103522), &data(NodeId(1)));
        assert!(a.contains(&MacAction::CancelTimer(TimerSlot::DataTimeout)));
        assert!(a.contains(&MacAction::RecordInterval {
            neighbor: NodeId(1),
            i_wu_s: 0.1,
            hit: true
        }));
        assert!(has_radio(&a, RadioState::Tx));

        let a = rx.on_radio_ready(&ctx(0.103722), RadioState::Tx);
        assert_eq!(sent_kind(&a), Some(PacketKind::Ack));

        let a = rx.on_tx_done(&ctx(0.104106), &ack());
        assert!(has_radio(&a, RadioState::Sleep));
        // Next wake = data arrival + unchanged interval.
        assert_eq!(
            a.last(),
            Some(&MacAction::SetTimer {
                slot: TimerSlot::Wake,
                at: SimTime::from_secs_f64(0.203522),
            })
        );
        assert_eq!(rx.interval_history(NodeId(1)), Some(&[0.1][..]));
    }

    #[test]
    fn test_receiver_miss_raises_interval() {
        let mut rx = TadReceiver::new(
            NodeId(0),
            &[NodeId(1)],
            TadConfig::default(),
            RadioParams::default(),
        );
        rx.start(&ctx(0.0));
        rx.on_timer(&ctx(0.1), TimerSlot::Wake);
        rx.on_radio_ready(&ctx(0.1002), RadioState::Rx);
        rx.on_timer(&ctx(0.1012), TimerSlot::Cca);
        rx.on_radio_ready(&ctx(0.1014), RadioState::Tx);
        rx.on_tx_done(&ctx(0.101784), &wb(NodeId(1)));
        rx.on_radio_ready(&ctx(0.101984), RadioState::Rx);

        let a = rx.on_timer(&ctx(0.105826), TimerSlot::DataTimeout);
        assert!(a.contains(&MacAction::Count(CounterKey::DataTimeouts)));
        // Register is now 0,0,1,0,1,0,1,0: update factor 0.375, imbalance
        // (5-3)/8 so the error term is 18/1024.
        let expect = 0.1 + (0.375 + 18.0 / 1024.0) * 1e-3;
        let got = rx.interval_history(NodeId(1)).unwrap()[0];
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn test_receiver_busy_channel_counts_miss_and_retreats() {
        let mut rx = TadReceiver::new(
            NodeId(0),
            &[NodeId(1)],
            TadConfig::default(),
            RadioParams::default(),
        );
        rx.start(&ctx(0.0));
        rx.on_timer(&ctx(0.1), TimerSlot::Wake);
        rx.on_radio_ready(&ctx(0.1002), RadioState::Rx);
        let a = rx.on_timer(&busy_ctx(0.1012), TimerSlot::Cca);
        assert!(a.contains(&MacAction::Count(CounterKey::CcaBusyAborts)));
        assert!(has_radio(&a, RadioState::Sleep));
        assert_eq!(rx.interval_history(NodeId(1)).unwrap().len(), 1);
    }

    #[test]
    fn test_receiver_polls_lowest_id_on_tied_wakeups() {
        let mut rx = TadReceiver::new(
            NodeId(0),
            &[NodeId(2), NodeId(1)],
            TadConfig::default(),
            RadioParams::default(),
        );
        rx.start(&ctx(0.0));
        rx.on_timer(&ctx(0.1), TimerSlot::Wake);
        rx.on_radio_ready(&ctx(0.1002), RadioState::Rx);
        rx.on_timer(&ctx(0.1012), TimerSlot::Cca);
        let a = rx.on_radio_ready(&ctx(0.1014), RadioState::Tx);
        match sent_kind(&a) {
            Some(PacketKind::WakeupBeacon) => {}
            other => panic!("expected beacon, got {other:?}"),
        }
        let target = a.iter().find_map(|act| match act {
            MacAction::Send(p) => p.target,
            _ => None,
        });
        assert_eq!(target, Some(NodeId(1)));
    }

    #[test]
    fn test_receiver_queues_overdue_poll_immediately() {
        // Neighbor 2's wake-up comes due while neighbor 1's poll is in
        // flight; the rearm must fire at the current instant, not at the
        // stale deadline in the past.
        let cfg = TadConfig { initial_interval_s: 0.01, ..TadConfig::default() };
        let mut rx = TadReceiver::new(
            NodeId(0),
            &[NodeId(1), NodeId(2)],
            cfg,
            RadioParams::default(),
        );
        rx.start(&ctx(0.0));
        rx.on_timer(&ctx(0.01), TimerSlot::Wake);
        rx.on_radio_ready(&ctx(0.0102), RadioState::Rx);
        rx.on_timer(&ctx(0.0112), TimerSlot::Cca);
        rx.on_radio_ready(&ctx(0.0114), RadioState::Tx);
        rx.on_tx_done(&ctx(0.011784), &wb(NodeId(1)));
        rx.on_radio_ready(&ctx(0.011984), RadioState::Rx);
        // Timeout lands at 15.826 ms; neighbor 2 was due at 10 ms.
        let a = rx.on_timer(&ctx(0.015826), TimerSlot::DataTimeout);
        assert!(a.contains(&MacAction::Count(CounterKey::MissedWakeupsQueued)));
        assert_eq!(
            a.last(),
            Some(&MacAction::SetTimer {
                slot: TimerSlot::Wake,
                at: SimTime::from_secs_f64(0.015826),
            })
        );
    }

    #[test]
    fn test_transmitter_full_cycle_and_sleep() {
        let mut tx = TadTransmitter::new(
            NodeId(1),
            NodeId(0),
            TadConfig::default(),
            RadioParams::default(),
        );
        assert_eq!(tx.start(&ctx(0.0)), vec![]);

        let a = tx.on_upper_data(&ctx(0.05), NodeId(0), 48);
        assert!(a.contains(&MacAction::Count(CounterKey::DataGenerated)));
        assert!(has_radio(&a, RadioState::Rx));

        tx.on_radio_ready(&ctx(0.0502), RadioState::Rx);
        let a = tx.on_packet(&ctx(0.101785), &wb(NodeId(1)));
        assert!(has_radio(&a, RadioState::Tx));

        let a = tx.on_radio_ready(&ctx(0.101985), RadioState::Tx);
        assert_eq!(sent_kind(&a), Some(PacketKind::Data));

        let a = tx.on_tx_done(&ctx(0.103521), &data(NodeId(1)));
        assert!(has_radio(&a, RadioState::Rx));

        let a = tx.on_radio_ready(&ctx(0.103721), RadioState::Rx);
        assert!(matches!(
            a[0],
            MacAction::SetTimer { slot: TimerSlot::AckTimeout, .. }
        ));

        let a = tx.on_packet(&ctx(0.104107), &ack());
        assert!(a.contains(&MacAction::Count(CounterKey::AcksReceived)));
        assert!(has_radio(&a, RadioState::Sleep));
    }

    #[test]
    fn test_transmitter_ignores_beacon_for_sibling() {
        let mut tx = TadTransmitter::new(
            NodeId(1),
            NodeId(0),
            TadConfig::default(),
            RadioParams::default(),
        );
        tx.on_upper_data(&ctx(0.05), NodeId(0), 48);
        tx.on_radio_ready(&ctx(0.0502), RadioState::Rx);
        assert_eq!(tx.on_packet(&ctx(0.1), &wb(NodeId(3))), vec![]);
    }

    #[test]
    fn test_transmitter_queue_drops_oldest_on_overflow() {
        let cfg = TadConfig { queue_capacity: 2, ..TadConfig::default() };
        let mut tx =
            TadTransmitter::new(NodeId(1), NodeId(0), cfg, RadioParams::default());
        tx.on_upper_data(&ctx(0.1), NodeId(0), 10);
        tx.on_radio_ready(&ctx(0.1002), RadioState::Rx);
        tx.on_upper_data(&ctx(0.2), NodeId(0), 20);
        let a = tx.on_upper_data(&ctx(0.3), NodeId(0), 30);
        assert!(a.contains(&MacAction::Count(CounterKey::QueueDrops)));
        assert_eq!(tx.queue, VecDeque::from([20, 30]));
    }

    #[test]
    fn test_transmitter_abandons_frame_after_retry_budget() {
        let cfg = TadConfig { max_retries: 3, ..TadConfig::default() };
        let mut tx =
            TadTransmitter::new(NodeId(1), NodeId(0), cfg, RadioParams::default());
        tx.on_upper_data(&ctx(0.0), NodeId(0), 48);
        tx.on_radio_ready(&ctx(0.0002), RadioState::Rx);

        let mut abandoned = false;
        let mut t = 0.1;
        for round in 0..4 {
            tx.on_packet(&ctx(t), &wb(NodeId(1)));
            tx.on_radio_ready(&ctx(t + 0.0002), RadioState::Tx);
            tx.on_tx_done(&ctx(t + 0.0018), &data(NodeId(1)));
            tx.on_radio_ready(&ctx(t + 0.002), RadioState::Rx);
            let a = tx.on_timer(&ctx(t + 0.0032), TimerSlot::AckTimeout);
            abandoned = a.contains(&MacAction::Count(CounterKey::DataAbandoned));
            if round < 3 {
                assert!(!abandoned, "gave up one round early");
                assert!(!has_radio(&a, RadioState::Sleep), "must stay listening");
            } else {
                assert!(has_radio(&a, RadioState::Sleep));
            }
            t += 0.1;
        }
        assert!(abandoned, "fourth failed attempt must abandon the frame");
        assert!(tx.queue.is_empty());
    }

    #[test]
    fn test_data_wait_and_ack_wait_derivation() {
        let cfg = TadConfig::default();
        let radio = RadioParams::default();
        assert_eq!(cfg.data_wait(&radio), SimDuration::from_micros(3842));
        assert_eq!(cfg.ack_wait(&radio), SimDuration::from_micros(1170));
    }

    #[test]
    fn test_config_validation_collects_problems() {
        let cfg = TadConfig {
            alpha: 2.0,
            tsr_len: 7,
            initial_interval_s: 5.0,
            queue_capacity: 0,
            ..TadConfig::default()
        };
        let problems = cfg.validate();
        assert_eq!(problems.len(), 4, "{problems:?}");
    }
}
