//! Discrete-event simulation of duty-cycled wireless sensor MAC protocols.
//!
//! The crate models a single-hop star network in which battery-powered
//! transmitter nodes push periodic sensor readings to a coordinator. Three
//! MAC protocols are implemented over one radio/channel model:
//!
//! * an adaptive receiver-initiated protocol whose coordinator learns each
//!   transmitter's traffic rhythm and schedules its own wake-ups to match
//!   ([`mac::tadmac`]),
//! * low-power listening with long preambles ([`mac::bmac`]),
//! * fixed-slot TDMA ([`mac::lmac`]).
//!
//! [`engine`] runs the event loop and accounts every nanosecond each radio
//! spends in each state; [`report`] turns finished runs into JSON/CSV.

pub mod adaptive;
pub mod convergence;
pub mod energy;
pub mod engine;
pub mod mac;
pub mod report;
pub mod scenario;
pub mod time;
pub mod traffic;
