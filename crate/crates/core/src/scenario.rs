//! Scenario configuration: one TOML document describes the whole
//! experiment. Top-level keys pick the protocol, network size, seed, and
//! run length; the sections configure traffic, each protocol, the radio,
//! the power profile, and convergence detection. Every key has a default,
//! so the empty document is a valid scenario; unknown keys are rejected by
//! name.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::convergence::ConvergenceCriterion;
use crate::energy::PowerProfile;
use crate::engine::{RadioParams, Topology};
use crate::mac::bmac::{BmacConfig, BmacNode};
use crate::mac::lmac::{LmacConfig, LmacNode};
use crate::mac::tadmac::{TadConfig, TadReceiver, TadTransmitter};
use crate::mac::{Mac, NodeId};
use crate::traffic::TrafficSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Tadmac,
    Bmac,
    Lmac,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Protocol::Tadmac => "tadmac",
            Protocol::Bmac => "bmac",
            Protocol::Lmac => "lmac",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario: {}", problems.join("; "))]
    Invalid { problems: Vec<String> },
}

/// A complete experiment description. Node 0 is the hub of a star; nodes
/// 1..=n_transmitters are leaves sending readings to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub protocol: Protocol,
    pub n_transmitters: u32,
    pub seed: u64,
    pub horizon_s: f64,
    pub traffic: TrafficSpec,
    pub tadmac: TadConfig,
    pub bmac: BmacConfig,
    pub lmac: LmacConfig,
    pub radio: RadioParams,
    pub power: PowerProfile,
    pub convergence: ConvergenceCriterion,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            protocol: Protocol::Tadmac,
            n_transmitters: 4,
            seed: 1,
            horizon_s: 1000.0,
            traffic: TrafficSpec::default(),
            tadmac: TadConfig::default(),
            bmac: BmacConfig::default(),
            lmac: LmacConfig::default(),
            radio: RadioParams::default(),
            power: PowerProfile::default(),
            convergence: ConvergenceCriterion::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(doc: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(doc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let doc = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&doc).map_err(|e| ScenarioError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_transmitters as usize + 1
    }

    /// Checks every constraint and reports all violations at once. Only
    /// the selected protocol's section is checked; the others cannot
    /// affect the run.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.n_transmitters == 0 {
            problems.push("n_transmitters must be at least 1".to_string());
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            problems.push(format!("horizon_s must be positive, got {}", self.horizon_s));
        }
        problems.extend(self.traffic.validate());
        problems.extend(self.radio.validate());
        problems.extend(self.power.validate());
        problems.extend(self.convergence.validate());
        match self.protocol {
            Protocol::Tadmac => problems.extend(self.tadmac.validate()),
            Protocol::Bmac => problems.extend(self.bmac.validate()),
            Protocol::Lmac => {
                problems.extend(self.lmac.validate());
                if self.n_nodes() as u32 > self.lmac.frame_slots {
                    problems.push(format!(
                        "{} nodes need {} slots but lmac.frame_slots is {}",
                        self.n_nodes(),
                        self.n_nodes(),
                        self.lmac.frame_slots
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid { problems })
        }
    }

    pub fn topology(&self) -> Topology {
        Topology::star(self.n_nodes())
    }

    /// Instantiates one MAC per node for the selected protocol, in node id
    /// order.
    pub fn build_macs(&self) -> Vec<Box<dyn Mac>> {
        let hub = NodeId(0);
        let leaves: Vec<NodeId> = (1..=self.n_transmitters).map(NodeId).collect();
        match self.protocol {
            Protocol::Tadmac => {
                let mut macs: Vec<Box<dyn Mac>> =
                    vec![Box::new(TadReceiver::new(hub, &leaves, self.tadmac, self.radio))];
                for &id in &leaves {
                    macs.push(Box::new(TadTransmitter::new(id, hub, self.tadmac, self.radio)));
                }
                macs
            }
            Protocol::Bmac => std::iter::once(hub)
                .chain(leaves)
                .map(|id| Box::new(BmacNode::new(id, hub, self.bmac)) as Box<dyn Mac>)
                .collect(),
            Protocol::Lmac => std::iter::once(hub)
                .chain(leaves)
                .map(|id| Box::new(LmacNode::new(id, id.0, self.lmac, self.radio)) as Box<dyn Mac>)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_empty_document_is_the_default_scenario() {
        let s = Scenario::from_toml_str("").unwrap();
        assert_eq!(s, Scenario::default());
        assert!(s.validate().is_ok());
    }

    #[test]
    fn test_document_overrides_selected_keys() {
        let doc = r#"
            protocol = "lmac"
            n_transmitters = 8
            seed = 42
            horizon_s = 250.0

            [traffic]
            kind = "variable"
            periods_s = [0.125, 0.25]

            [lmac]
            slot_s = 0.02

            [power]
            rx_mw = 60.0
        "#;
        let s = Scenario::from_toml_str(doc).unwrap();
        assert_eq!(s.protocol, Protocol::Lmac);
        assert_eq!(s.n_transmitters, 8);
        assert_eq!(s.seed, 42);
        assert_eq!(s.traffic.periods_s, vec![0.125, 0.25]);
        assert_eq!(s.lmac.slot_s, 0.02);
        assert_eq!(s.lmac.frame_slots, 32, "untouched keys keep defaults");
        assert_eq!(s.power.rx_mw, 60.0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn test_unknown_key_is_rejected_by_name() {
        let err = Scenario::from_toml_str("wake_interval = 3").unwrap_err();
        assert!(err.to_string().contains("wake_interval"), "{err}");
        let err = Scenario::from_toml_str("[tadmac]\nalfa = 0.5").unwrap_err();
        assert!(err.to_string().contains("alfa"), "{err}");
    }

    #[test]
    fn test_validation_reports_every_problem_at_once() {
        let doc = r#"
            n_transmitters = 0
            horizon_s = -5.0

            [traffic]
            periods_s = [0.0]

            [tadmac]
            alpha = 1.5
        "#;
        let s = Scenario::from_toml_str(doc).unwrap();
        let err = s.validate().unwrap_err();
        match err {
            ScenarioError::Invalid { problems } => {
                assert_eq!(problems.len(), 4, "{problems:?}");
            }
            other => panic!("expected Invalid, got {other}"),
        }
    }

    #[test]
    fn test_inactive_protocol_sections_are_not_validated() {
        let doc = r#"
            protocol = "tadmac"

            [bmac]
            preamble_s = 0.01
        "#;
        let s = Scenario::from_toml_str(doc).unwrap();
        assert!(s.validate().is_ok(), "a broken bmac section cannot affect a tadmac run");
    }

    #[test]
    fn test_slot_count_must_cover_the_network() {
        let s = Scenario {
            protocol: Protocol::Lmac,
            n_transmitters: 32,
            ..Scenario::default()
        };
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("frame_slots"), "{err}");
    }

    #[test]
    fn test_build_macs_assigns_consecutive_node_ids() {
        for protocol in [Protocol::Tadmac, Protocol::Bmac, Protocol::Lmac] {
            let s = Scenario { protocol, ..Scenario::default() };
            let macs = s.build_macs();
            assert_eq!(macs.len(), 5);
            for (i, mac) in macs.iter().enumerate() {
                assert_eq!(mac.node_id(), NodeId(i as u32));
            }
        }
    }

    #[test]
    fn test_load_reports_missing_file_with_path() {
        let err = Scenario::load(Path::new("/nonexistent/dir/exp.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/exp.toml"), "{err}");
    }

    #[test]
    fn test_toml_round_trip_preserves_scenario() {
        let s = Scenario { protocol: Protocol::Bmac, seed: 9, ..Scenario::default() };
        let doc = toml::to_string_pretty(&s).unwrap();
        assert_eq!(Scenario::from_toml_str(&doc).unwrap(), s);
    }
}
