//! Adaptive wake-up interval control.
//!
//! A receiver node keeps one traffic status register (TSR) per transmitter
//! neighbor: a fixed-length shift register of hit/miss bits, newest first.
//! Each wake-up pushes one bit (1 = data arrived in response to the beacon,
//! 0 = the data wait timed out) and then nudges the wake-up interval:
//!
//! ```text
//! i_wu'  =  i_wu + (mu + e) * t_ref
//! mu     =  alpha * x1 + (1 - alpha) * x2
//! x      =  n0/(L/2) * nc0  -  n1/(L/2) * nc1        (per register half)
//! ```
//!
//! where `n0`/`n1` count zeros and ones in the half and `nc0`/`nc1` count
//! adjacent equal pairs strictly inside the half. `x1` is computed over the
//! most recent half, `x2` over the older half. A register that alternates
//! 0101... has no adjacent pairs at all, so `mu` is exactly zero there: that
//! is the fixed point the controller settles into, waking twice per data
//! packet.
//!
//! `mu` alone moves the interval at most (L/2 - 1) * t_ref per wake-up, far
//! too slow when the initial interval is hundreds of milliseconds off. The
//! pluggable error term `e` closes that gap; see [`ErrorPolicy`].
//!
//! Everything in this module is plain f64 arithmetic on durations in
//! seconds, with no dependency on the simulation engine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest supported register length. Below 4 bits a half has no adjacent
/// pair, and the update law degenerates to a constant zero.
pub const MIN_TSR_LEN: usize = 4;
/// Largest supported register length.
pub const MAX_TSR_LEN: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum AdaptError {
    #[error("TSR length {0} is not an even number in {MIN_TSR_LEN}..={MAX_TSR_LEN}")]
    BadRegisterLength(usize),
    #[error("alpha {0} is outside [0, 1]")]
    BadAlpha(f64),
    #[error("t_ref {0} is not a positive duration")]
    BadTref(f64),
    #[error("interval clamp [{0}, {1}] is not a positive, ordered range")]
    BadClamp(f64, f64),
}

/// Initial register content for a fresh neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TsrInit {
    /// 0101... so the controller starts at its fixed point (mu = 0).
    #[default]
    Alternating,
    /// All misses: maximal upward pressure on the interval from the start.
    Zeros,
}

/// Traffic status register: hit/miss bits with index 0 the most recent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsrRegister {
    bits: Vec<u8>,
}

impl TsrRegister {
    pub fn new(len: usize, init: TsrInit) -> Result<Self, AdaptError> {
        if len < MIN_TSR_LEN || len > MAX_TSR_LEN || len % 2 != 0 {
            return Err(AdaptError::BadRegisterLength(len));
        }
        let bits = match init {
            TsrInit::Alternating => (0..len).map(|i| (i % 2) as u8).collect(),
            TsrInit::Zeros => vec![0; len],
        };
        Ok(TsrRegister { bits })
    }

    /// Builds a register from explicit bits (newest first). Test scaffolding
    /// and oracle comparisons use this; the simulator always starts from
    /// [`TsrRegister::new`].
    pub fn from_bits(bits: &[u8]) -> Result<Self, AdaptError> {
        if bits.len() < MIN_TSR_LEN || bits.len() > MAX_TSR_LEN || bits.len() % 2 != 0 {
            return Err(AdaptError::BadRegisterLength(bits.len()));
        }
        assert!(bits.iter().all(|&b| b <= 1), "TSR bits must be 0 or 1");
        Ok(TsrRegister { bits: bits.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length is fixed at construction and never below MIN_TSR_LEN
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Shifts every bit one position toward "older" and records the newest
    /// wake-up outcome at index 0. The oldest bit falls off the end.
    pub fn push(&mut self, hit: bool) {
        self.bits.pop();
        self.bits.insert(0, hit as u8);
    }

    /// Statistics of the most recent and older halves, in that order.
    pub fn half_stats(&self) -> (HalfStats, HalfStats) {
        let half = self.bits.len() / 2;
        (
            HalfStats::from_bits(&self.bits[..half]),
            HalfStats::from_bits(&self.bits[half..]),
        )
    }

    /// Zeros minus ones, normalized to [-1, 1] over the whole register.
    /// Positive means misses dominate (the node wakes too often).
    pub fn imbalance(&self) -> f64 {
        let ones: i32 = self.bits.iter().map(|&b| b as i32).sum();
        let zeros = self.bits.len() as i32 - ones;
        (zeros - ones) as f64 / self.bits.len() as f64
    }
}

/// Bit statistics over one half of a register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfStats {
    /// Number of zero bits.
    pub n0: u32,
    /// Number of one bits.
    pub n1: u32,
    /// Adjacent 00 pairs strictly inside the half.
    pub nc0: u32,
    /// Adjacent 11 pairs strictly inside the half.
    pub nc1: u32,
}

impl HalfStats {
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut s = HalfStats { n0: 0, n1: 0, nc0: 0, nc1: 0 };
        for &b in bits {
            if b == 0 {
                s.n0 += 1;
            } else {
                s.n1 += 1;
            }
        }
        for w in bits.windows(2) {
            match (w[0], w[1]) {
                (0, 0) => s.nc0 += 1,
                (1, 1) => s.nc1 += 1,
                _ => {}
            }
        }
        s
    }

    /// The half's contribution to the update factor:
    /// `n0/(half) * nc0 - n1/(half) * nc1`. Positive pushes the interval up
    /// (too many misses), negative pulls it down (too many hits).
    pub fn weighted_value(&self) -> f64 {
        let half = (self.n0 + self.n1) as f64;
        f64::from(self.n0) / half * f64::from(self.nc0)
            - f64::from(self.n1) / half * f64::from(self.nc1)
    }
}

/// Update factor `mu`: the alpha-weighted blend of both half values.
pub fn update_factor(reg: &TsrRegister, alpha: f64) -> f64 {
    let (recent, older) = reg.half_stats();
    alpha * recent.weighted_value() + (1.0 - alpha) * older.weighted_value()
}

/// Correlation-error term added to `mu` in the interval update.
///
/// `mu`'s magnitude is bounded by the register length, so on its own it
/// cannot cross a large gap between the configured initial interval and the
/// traffic period in an acceptable number of wake-ups. The `Imbalance`
/// policy supplies the missing drive: a quintic in the register's zero/one
/// imbalance. Saturated registers (all hits or all misses, |imbalance| = 1)
/// feel the full gain while a single surplus bit (|imbalance| = 1/4 at
/// L = 8) contributes under 0.1% of it, so the fixed point stays quiet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ErrorPolicy {
    /// e = 0: the raw update law.
    Zero,
    /// e = gain * imbalance^5.
    Imbalance { gain: f64 },
}

impl Default for ErrorPolicy {
    fn default() -> Self {
        ErrorPolicy::Imbalance { gain: DEFAULT_ERROR_GAIN }
    }
}

/// Calibrated so that an initial interval anywhere in [50 ms, 500 ms]
/// converges onto a 125 ms traffic period within the 10..60 wake-up band,
/// without ever driving the interval into its lower clamp.
pub const DEFAULT_ERROR_GAIN: f64 = 18.0;

impl ErrorPolicy {
    pub fn error_term(&self, reg: &TsrRegister) -> f64 {
        match *self {
            ErrorPolicy::Zero => 0.0,
            ErrorPolicy::Imbalance { gain } => {
                let d = reg.imbalance();
                gain * d * d * d * d * d
            }
        }
    }
}

/// Parameters of the interval update, durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptParams {
    /// Weight of the most recent register half in `mu`.
    pub alpha: f64,
    /// Reference step: one unit of `mu + e` moves the interval this far.
    pub t_ref: f64,
    /// Lower interval clamp.
    pub i_min: f64,
    /// Upper interval clamp.
    pub i_max: f64,
}

impl AdaptParams {
    pub fn new(alpha: f64, t_ref: f64, i_min: f64, i_max: f64) -> Result<Self, AdaptError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(AdaptError::BadAlpha(alpha));
        }
        if !(t_ref > 0.0 && t_ref.is_finite()) {
            return Err(AdaptError::BadTref(t_ref));
        }
        if !(i_min > 0.0 && i_min < i_max && i_max.is_finite()) {
            return Err(AdaptError::BadClamp(i_min, i_max));
        }
        Ok(AdaptParams { alpha, t_ref, i_min, i_max })
    }
}

impl Default for AdaptParams {
    fn default() -> Self {
        AdaptParams { alpha: 0.5, t_ref: 1e-3, i_min: 10e-3, i_max: 2.0 }
    }
}

/// One interval step: `clamp(i_wu + (mu + e) * t_ref)`.
pub fn next_interval(i_wu: f64, mu: f64, e: f64, params: &AdaptParams) -> f64 {
    (i_wu + (mu + e) * params.t_ref).clamp(params.i_min, params.i_max)
}

/// Wake-up interval controller state for one transmitter neighbor.
#[derive(Debug, Clone)]
pub struct IntervalState {
    /// Current wake-up interval in seconds.
    pub i_wu: f64,
    /// Interval after each wake-up, oldest first.
    pub history: Vec<f64>,
}

impl IntervalState {
    pub fn new(initial: f64) -> Self {
        IntervalState { i_wu: initial, history: Vec::new() }
    }

    /// Records one wake-up outcome and advances the interval. Returns the
    /// new interval for convenience.
    pub fn observe(
        &mut self,
        reg: &mut TsrRegister,
        hit: bool,
        params: &AdaptParams,
        policy: &ErrorPolicy,
    ) -> f64 {
        reg.push(hit);
        let mu = update_factor(reg, params.alpha);
        let e = policy.error_term(reg);
        self.i_wu = next_interval(self.i_wu, mu, e, params);
        self.history.push(self.i_wu);
        self.i_wu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(bits: &[u8]) -> TsrRegister {
        TsrRegister::from_bits(bits).unwrap()
    }

    #[test]
    fn test_push_shifts_right_and_inserts_newest() {
        let mut r = reg(&[0, 1, 0, 1, 0, 1, 0, 1]);
        r.push(true);
        assert_eq!(r.bits(), &[1, 0, 1, 0, 1, 0, 1, 0]);
        r.push(false);
        assert_eq!(r.bits(), &[0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn test_half_stats_split_and_counts() {
        let (recent, older) = reg(&[0, 0, 0, 0, 1, 1, 1, 1]).half_stats();
        assert_eq!(recent, HalfStats { n0: 4, n1: 0, nc0: 3, nc1: 0 });
        assert_eq!(older, HalfStats { n0: 0, n1: 4, nc0: 0, nc1: 3 });
    }

    #[test]
    fn test_pairs_counted_inside_halves_only() {
        // The 1|1 straddling the boundary must not count in either half.
        let (recent, older) = reg(&[0, 0, 0, 1, 1, 0, 0, 0]).half_stats();
        assert_eq!(recent, HalfStats { n0: 3, n1: 1, nc0: 2, nc1: 0 });
        assert_eq!(older, HalfStats { n0: 3, n1: 1, nc0: 2, nc1: 0 });
    }

    #[test]
    fn test_update_factor_all_zeros() {
        // Each half: 4/4 * 3 = 3.0, so mu = 3.0 regardless of alpha.
        let r = reg(&[0; 8]);
        assert_eq!(update_factor(&r, 0.5), 3.0);
        assert_eq!(update_factor(&r, 0.0), 3.0);
    }

    #[test]
    fn test_update_factor_alternating_is_exactly_zero() {
        for len in [4usize, 8, 12, 16, 32] {
            let r = TsrRegister::new(len, TsrInit::Alternating).unwrap();
            assert_eq!(update_factor(&r, 0.5), 0.0);
        }
    }

    #[test]
    fn test_alpha_selects_halves() {
        let r = reg(&[1, 1, 1, 1, 0, 1, 0, 1]); // recent all ones, older mixed
        assert_eq!(update_factor(&r, 1.0), -3.0);
        assert_eq!(update_factor(&r, 0.0), 0.0);
        assert_eq!(update_factor(&r, 0.5), -1.5);
    }

    #[test]
    fn test_next_interval_basic_step() {
        let p = AdaptParams::default();
        let next = next_interval(0.100, -3.0, 0.0, &p);
        assert!((next - 0.097).abs() < 1e-15);
    }

    #[test]
    fn test_next_interval_clamps_both_ends() {
        let p = AdaptParams::default();
        assert_eq!(next_interval(0.0101, -3.0, -18.0, &p), p.i_min);
        assert_eq!(next_interval(1.9999, 3.0, 18.0, &p), p.i_max);
    }

    #[test]
    fn test_zero_policy_is_zero_everywhere() {
        for bits in [[0u8; 8], [1u8; 8]] {
            assert_eq!(ErrorPolicy::Zero.error_term(&reg(&bits)), 0.0);
        }
    }

    #[test]
    fn test_imbalance_policy_saturation_and_fixed_point() {
        let p = ErrorPolicy::Imbalance { gain: 18.0 };
        assert_eq!(p.error_term(&reg(&[0; 8])), 18.0);
        assert_eq!(p.error_term(&reg(&[1; 8])), -18.0);
        assert_eq!(p.error_term(&reg(&[0, 1, 0, 1, 0, 1, 0, 1])), 0.0);
        // One surplus hit: d = -1/4, e = -18/1024.
        let e = p.error_term(&reg(&[1, 1, 0, 1, 0, 1, 0, 1]));
        assert!((e + 18.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn test_imbalance_policy_antisymmetric() {
        let p = ErrorPolicy::default();
        let a = reg(&[1, 1, 0, 1, 1, 0, 1, 1]);
        let flipped: Vec<u8> = a.bits().iter().map(|b| 1 - b).collect();
        let b = reg(&flipped);
        assert_eq!(p.error_term(&a), -p.error_term(&b));
    }

    #[test]
    fn test_register_construction_rejects_bad_lengths() {
        for len in [0usize, 2, 3, 7, 34] {
            assert_eq!(
                TsrRegister::new(len, TsrInit::Alternating).unwrap_err(),
                AdaptError::BadRegisterLength(len)
            );
        }
    }

    #[test]
    fn test_params_construction_rejects_bad_values() {
        assert!(matches!(
            AdaptParams::new(1.5, 1e-3, 0.01, 2.0),
            Err(AdaptError::BadAlpha(_))
        ));
        assert!(matches!(
            AdaptParams::new(0.5, 0.0, 0.01, 2.0),
            Err(AdaptError::BadTref(_))
        ));
        assert!(matches!(
            AdaptParams::new(0.5, 1e-3, 2.0, 0.01),
            Err(AdaptError::BadClamp(..))
        ));
    }

    #[test]
    fn test_observe_appends_history_and_updates() {
        let params = AdaptParams::default();
        let mut r = TsrRegister::new(8, TsrInit::Alternating).unwrap();
        let mut st = IntervalState::new(0.1);
        // Alternating register stays alternating under an alternating
        // outcome stream; the interval must not move at all.
        for (k, hit) in [true, false, true, false].into_iter().enumerate() {
            let i = st.observe(&mut r, hit, &params, &ErrorPolicy::default());
            assert_eq!(i, 0.1);
            assert_eq!(st.history.len(), k + 1);
        }
    }
}
