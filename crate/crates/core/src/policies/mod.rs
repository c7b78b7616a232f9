//! Per-slot control policies behind a common [`Policy`] trait, and a
//! name-keyed registry used by sweeps and the command line.

pub mod lemma;
pub mod weights;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{PolicyDecision, SimState, Target};
use crate::model::{CloudNetwork, CommoditySet};

pub use lemma::{gamma_max, lemma_constants, LemmaConstants, LemmaError, LemmaMonitor, LemmaReport};
pub use weights::{
    adcnc_link_decide, adcnc_node_decide, processing_current_weight, processing_max_weight,
    transmission_current_weight, transmission_max_weight, two_stage_link_decide, two_stage_node_decide, FirstStage,
    AdcncParams, Hysteresis, MaxWeight, SublinearG,
};

/// A local control rule evaluated once per slot.
///
/// Implementations must be pure: the same state yields the same decision.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn decide(&self, state: &SimState, net: &CloudNetwork, commodities: &CommoditySet) -> PolicyDecision;
}

impl fmt::Debug for dyn Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Policy({})", self.name())
    }
}

/// Every element adopts its max-weight maximizer every slot.
#[derive(Debug, Clone, Copy)]
pub struct Dcnc {
    pub v: f64,
}

impl Policy for Dcnc {
    fn name(&self) -> &str {
        "dcnc"
    }

    fn decide(&self, state: &SimState, net: &CloudNetwork, commodities: &CommoditySet) -> PolicyDecision {
        dcnc_decide(state, net, commodities, self.v)
    }
}

pub fn dcnc_decide(state: &SimState, net: &CloudNetwork, commodities: &CommoditySet, v: f64) -> PolicyDecision {
    let node_targets = net
        .node_ids()
        .map(|n| {
            processing_max_weight(state.node_queues(n), n, &net.node(n).processing, v, commodities)
                .schedule()
                .into()
        })
        .collect();
    let link_targets = net
        .link_ids()
        .map(|l| {
            let link = net.link(l);
            transmission_max_weight(
                state.node_queues(link.src),
                state.node_queues(link.dst),
                &link.transmission,
                v,
            )
            .schedule()
            .into()
        })
        .collect();
    PolicyDecision {
        node_targets,
        link_targets,
    }
}

/// Adaptive max-weight with sublinear hysteresis on reconfiguration.
#[derive(Debug, Clone, Copy)]
pub struct Adcnc {
    pub v: f64,
    pub hysteresis: Hysteresis,
}

impl Adcnc {
    pub fn new(params: AdcncParams) -> Self {
        Self {
            v: params.v,
            hysteresis: Hysteresis::Adaptive(params.g),
        }
    }
}

impl Policy for Adcnc {
    fn name(&self) -> &str {
        "adcnc"
    }

    fn decide(&self, state: &SimState, net: &CloudNetwork, commodities: &CommoditySet) -> PolicyDecision {
        adcnc_decide(state, net, commodities, self.v, self.hysteresis)
    }
}

/// Applies the adaptive rule at every element against its own previous
/// schedule (pending schedules included for elements under countdown).
pub fn adcnc_decide(
    state: &SimState,
    net: &CloudNetwork,
    commodities: &CommoditySet,
    v: f64,
    hysteresis: Hysteresis,
) -> PolicyDecision {
    let node_targets = net
        .node_ids()
        .map(|n| {
            adcnc_node_decide(
                state.node_queues(n),
                n,
                &net.node(n).processing,
                v,
                hysteresis,
                state.node_schedule[n.0],
                commodities,
            )
            .into()
        })
        .collect();
    let link_targets = net
        .link_ids()
        .map(|l| {
            let link = net.link(l);
            adcnc_link_decide(
                state.node_queues(link.src),
                state.node_queues(link.dst),
                &link.transmission,
                v,
                hysteresis,
                state.link_schedule[l.0],
            )
            .into()
        })
        .collect();
    PolicyDecision {
        node_targets,
        link_targets,
    }
}

/// Two-stage variant distinguishing full and commodity-only changes.
#[derive(Debug, Clone, Copy)]
pub struct AdcncTwoStage {
    pub params: AdcncParams,
    pub first: FirstStage,
}

impl Policy for AdcncTwoStage {
    fn name(&self) -> &str {
        match self.first {
            FirstStage::Adcnc => "adcnc-2stage",
            FirstStage::MaxWeight => "adcnc-2stage-gw",
        }
    }

    fn decide(&self, state: &SimState, net: &CloudNetwork, commodities: &CommoditySet) -> PolicyDecision {
        let node_targets: Vec<Target> = net
            .node_ids()
            .map(|n| {
                two_stage_node_decide(
                    state.node_queues(n),
                    n,
                    &net.node(n).processing,
                    &self.params,
                    self.first,
                    state.node_schedule[n.0],
                    commodities,
                )
            })
            .collect();
        let link_targets = net
            .link_ids()
            .map(|l| {
                let link = net.link(l);
                two_stage_link_decide(
                    state.node_queues(link.src),
                    state.node_queues(link.dst),
                    &link.transmission,
                    &self.params,
                    self.first,
                    state.link_schedule[l.0],
                )
            })
            .collect();
        PolicyDecision {
            node_targets,
            link_targets,
        }
    }
}

/// Parameters handed to a policy factory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub v: f64,
    #[serde(default)]
    pub g: SublinearG,
}

impl PolicyConfig {
    pub fn new(v: f64) -> Self {
        Self {
            v,
            g: SublinearG::default(),
        }
    }

    pub fn params(&self) -> AdcncParams {
        AdcncParams::new(self.v, self.g)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("unknown policy `{name}` (known: {known})")]
    Unknown { name: String, known: String },
    #[error("invalid policy parameter: {0}")]
    Invalid(String),
}

pub type PolicyFactory = fn(&PolicyConfig) -> Box<dyn Policy>;

struct Entry {
    description: &'static str,
    factory: PolicyFactory,
}

/// Policies selectable by name.
pub struct PolicyRegistry {
    entries: BTreeMap<String, Entry>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("dcnc", "max-weight adopted every slot, reconfiguration-agnostic", |c| {
            Box::new(Dcnc { v: c.v })
        });
        r.register("adcnc", "max-weight with sublinear reconfiguration hysteresis", |c| {
            Box::new(Adcnc::new(c.params()))
        });
        r.register(
            "adcnc-2stage",
            "adcnc with a separate commodity-only reconfiguration stage",
            |c| {
                Box::new(AdcncTwoStage {
                    params: c.params(),
                    first: FirstStage::Adcnc,
                })
            },
        );
        r.register(
            "adcnc-2stage-gw",
            "two-stage variant whose first stage compares the gain with g(W*)",
            |c| {
                Box::new(AdcncTwoStage {
                    params: c.params(),
                    first: FirstStage::MaxWeight,
                })
            },
        );
        r
    }

    pub fn register(&mut self, name: &str, description: &'static str, factory: PolicyFactory) {
        self.entries.insert(name.to_string(), Entry { description, factory });
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn describe(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e.description))
    }

    pub fn create(&self, name: &str, config: &PolicyConfig) -> Result<Box<dyn Policy>, PolicyError> {
        if !(config.v >= 0.0 && config.v.is_finite()) {
            return Err(PolicyError::Invalid(format!("V must be finite and non-negative, got {}", config.v)));
        }
        SublinearG::new(config.g.scale, config.g.exponent).map_err(PolicyError::Invalid)?;
        let entry = self.entries.get(name).ok_or_else(|| PolicyError::Unknown {
            name: name.to_string(),
            known: self.names().collect::<Vec<_>>().join(", "),
        })?;
        Ok((entry.factory)(config))
    }
}
