//! Radio states, power draw, and per-node energy bookkeeping.
//!
//! The engine tells each node's ledger how long the radio just spent in its
//! current state; energy is derived at query time as time x power, so the
//! two reported columns can never disagree with each other.

use crate::time::SimDuration;
use serde::{Deserialize, Serialize};

/// Physical state of a node's radio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadioState {
    /// Powered down entirely; no current draw, cannot be woken by RF.
    Off,
    /// Clock running, radio front end off.
    Sleep,
    /// Listening or actively receiving.
    Rx,
    /// Transmitting.
    Tx,
    /// Synthesizer settling on the way into `Rx` or `Tx`. Draws receive
    /// current while it lasts.
    Switching,
}

impl RadioState {
    /// The state used for power lookup and reporting. `Switching` is booked
    /// as receive time since that is what the hardware drains.
    pub fn billing_state(self) -> RadioState {
        match self {
            RadioState::Switching => RadioState::Rx,
            s => s,
        }
    }
}

/// Current draw per radio state, in milliwatts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerProfile {
    pub sleep_mw: f64,
    pub rx_mw: f64,
    pub tx_mw: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        // A low-power 2.4 GHz transceiver class radio.
        PowerProfile { sleep_mw: 0.065, rx_mw: 54.2, tx_mw: 56.6 }
    }
}

impl PowerProfile {
    pub fn draw_mw(&self, state: RadioState) -> f64 {
        match state.billing_state() {
            RadioState::Off => 0.0,
            RadioState::Sleep => self.sleep_mw,
            RadioState::Rx => self.rx_mw,
            RadioState::Tx => self.tx_mw,
            RadioState::Switching => unreachable!("switching bills as rx"),
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("sleep_mw", self.sleep_mw),
            ("rx_mw", self.rx_mw),
            ("tx_mw", self.tx_mw),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("power.{name} must be a finite non-negative value, got {v}"));
            }
        }
        problems
    }
}

/// Accumulated radio residency for one node.
///
/// Times are exact nanosecond sums; their total always equals the span the
/// node has existed for, regardless of how often the radio changed state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnergyLedger {
    off: SimDuration,
    sleep: SimDuration,
    rx: SimDuration,
    tx: SimDuration,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accrue(&mut self, state: RadioState, dur: SimDuration) {
        let slot = match state.billing_state() {
            RadioState::Off => &mut self.off,
            RadioState::Sleep => &mut self.sleep,
            RadioState::Rx => &mut self.rx,
            RadioState::Tx => &mut self.tx,
            RadioState::Switching => unreachable!("switching bills as rx"),
        };
        *slot += dur;
    }

    pub fn time_in(&self, state: RadioState) -> SimDuration {
        match state.billing_state() {
            RadioState::Off => self.off,
            RadioState::Sleep => self.sleep,
            RadioState::Rx => self.rx,
            RadioState::Tx => self.tx,
            RadioState::Switching => unreachable!("switching bills as rx"),
        }
    }

    pub fn total_time(&self) -> SimDuration {
        self.off + self.sleep + self.rx + self.tx
    }

    /// Energy spent in one state, in millijoules.
    pub fn energy_mj(&self, state: RadioState, profile: &PowerProfile) -> f64 {
        self.time_in(state).as_secs_f64() * profile.draw_mw(state)
    }

    /// Total energy across all states, in millijoules.
    pub fn total_energy_mj(&self, profile: &PowerProfile) -> f64 {
        [RadioState::Sleep, RadioState::Rx, RadioState::Tx]
            .iter()
            .map(|&s| self.energy_mj(s, profile))
            .sum()
    }
}

/// The states a ledger reports rows for, in output order. `Switching` never
/// appears because its time is folded into `Rx`.
pub const REPORTED_STATES: [RadioState; 4] =
    [RadioState::Off, RadioState::Sleep, RadioState::Rx, RadioState::Tx];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_energy_is_time_times_power() {
        let mut ledger = EnergyLedger::new();
        ledger.accrue(RadioState::Rx, SimDuration::from_secs_f64(2.0));
        ledger.accrue(RadioState::Tx, SimDuration::from_secs_f64(0.5));
        ledger.accrue(RadioState::Sleep, SimDuration::from_secs_f64(10.0));
        let p = PowerProfile::default();
        assert!((ledger.energy_mj(RadioState::Rx, &p) - 108.4).abs() < 1e-9);
        assert!((ledger.energy_mj(RadioState::Tx, &p) - 28.3).abs() < 1e-9);
        assert!((ledger.energy_mj(RadioState::Sleep, &p) - 0.65).abs() < 1e-9);
        assert!((ledger.total_energy_mj(&p) - 137.35).abs() < 1e-9);
    }

    #[test]
    fn test_switching_folds_into_rx() {
        let mut ledger = EnergyLedger::new();
        ledger.accrue(RadioState::Switching, SimDuration::from_millis(3));
        ledger.accrue(RadioState::Rx, SimDuration::from_millis(7));
        assert_eq!(ledger.time_in(RadioState::Rx), SimDuration::from_millis(10));
        assert_eq!(
            ledger.time_in(RadioState::Switching),
            SimDuration::from_millis(10)
        );
    }

    #[test]
    fn test_off_accrues_time_but_no_energy() {
        let mut ledger = EnergyLedger::new();
        ledger.accrue(RadioState::Off, SimDuration::from_secs_f64(100.0));
        let p = PowerProfile::default();
        assert_eq!(ledger.energy_mj(RadioState::Off, &p), 0.0);
        assert_eq!(ledger.total_time(), SimDuration::from_secs_f64(100.0));
    }

    #[test]
    fn test_total_time_is_sum_of_states() {
        let mut ledger = EnergyLedger::new();
        for (state, ms) in [
            (RadioState::Off, 1u64),
            (RadioState::Sleep, 2),
            (RadioState::Rx, 3),
            (RadioState::Tx, 4),
            (RadioState::Switching, 5),
        ] {
            ledger.accrue(state, SimDuration::from_millis(ms));
        }
        assert_eq!(ledger.total_time(), SimDuration::from_millis(15));
    }

    #[test]
    fn test_power_profile_validation() {
        assert!(PowerProfile::default().validate().is_empty());
        let bad = PowerProfile { rx_mw: -1.0, ..Default::default() };
        assert!(bad.validate()[0].contains("rx_mw"));
        let nan = PowerProfile { tx_mw: f64::NAN, ..Default::default() };
        assert!(nan.validate()[0].contains("tx_mw"));
    }
}
