//! Time-slotted execution of a cloud network under a control policy.
//!
//! Each slot runs in a fixed order:
//!
//! 1. every element whose target differs from its previous schedule
//!    reconfigures; its countdown is reset to the reconfiguration delay and
//!    the reconfiguration cost is charged. Other countdowns decrement
//!    (floored at zero). An element serves in slot `t` only if its countdown
//!    `r(t)` is zero.
//! 2. serving elements move flow computed from the backlog snapshot `Q(t)`.
//!    In [`FlowMode::Actual`] a queue's claimants are granted packets in
//!    order (processing at the node first, then outgoing links in link id
//!    order) until the backlog is exhausted.
//! 3. exogenous arrivals are added.
//!
//! Final-stage packets reaching their destination are absorbed and counted as
//! delivered.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::{sample_arrivals, ArrivalSpec, Arrivals};
use crate::model::{validate_network, CloudNetwork, CommodityId, CommoditySet, LinkId, NodeId};
use crate::policies::Policy;

/// Resource units and commodity an element is set to.
///
/// `commodity` is `None` exactly when `units == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub units: usize,
    pub commodity: Option<CommodityId>,
}

impl Schedule {
    pub const IDLE: Schedule = Schedule {
        units: 0,
        commodity: None,
    };

    /// Normalizes `k = 0` to [`Schedule::IDLE`].
    pub fn new(units: usize, commodity: CommodityId) -> Self {
        if units == 0 {
            Self::IDLE
        } else {
            Self {
                units,
                commodity: Some(commodity),
            }
        }
    }

    pub fn is_idle(&self) -> bool {
        self.units == 0
    }
}

/// True iff moving from `prev` to `next` changes the allocated units, or
/// changes the commodity of an active allocation.
pub fn is_reconfiguration(prev: Schedule, next: Schedule) -> bool {
    next.units != prev.units || (next.units > 0 && next.commodity != prev.commodity)
}

/// How a policy intends a schedule change to be carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReconfigKind {
    /// Resource and commodity are both re-set; costs the larger overhead.
    #[default]
    Full,
    /// Same units, new commodity; costs the commodity overhead.
    CommodityOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Target {
    pub schedule: Schedule,
    pub kind: ReconfigKind,
}

impl From<Schedule> for Target {
    fn from(schedule: Schedule) -> Self {
        Target {
            schedule,
            kind: ReconfigKind::Full,
        }
    }
}

/// Per-element targets for one slot, indexed by node and link id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicyDecision {
    pub node_targets: Vec<Target>,
    pub link_targets: Vec<Target>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    Node(NodeId),
    Link(LinkId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    /// Each element moves at most the available backlog; receivers get what
    /// was actually sent.
    #[default]
    Actual,
    /// Literal queue recursion: departures clamp at zero but receivers are
    /// credited the full scheduled rate.
    Nominal,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("network is invalid:\n{0}")]
    InvalidNetwork(String),
    #[error("decision covers {nodes} nodes and {links} links, network has {expected_nodes} and {expected_links}")]
    DecisionShape {
        nodes: usize,
        links: usize,
        expected_nodes: usize,
        expected_links: usize,
    },
    #[error("{element:?}: unknown commodity #{commodity}")]
    UnknownCommodity { element: Element, commodity: usize },
    #[error("{element:?}: {units} units requested, at most {max} available")]
    UnitsOutOfRange {
        element: Element,
        units: usize,
        max: usize,
    },
    #[error("{element:?}: schedule with units > 0 needs a commodity")]
    MissingCommodity { element: Element },
    #[error("{element:?}: commodity {label} has no successor and cannot be processed")]
    FinalStageProcessing { element: Element, label: String },
    #[error("horizon must be at least one slot")]
    EmptyHorizon,
    #[error("slot {t}: {source}")]
    AtSlot {
        t: u64,
        #[source]
        source: Box<EngineError>,
    },
}

/// Backlogs, countdowns and schedules at the start of slot `t`.
///
/// Countdowns hold `r(t-1)`; schedules hold the targets adopted at `t-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: u64,
    commodities: usize,
    queues: Vec<f64>,
    pub node_countdown: Vec<u32>,
    pub link_countdown: Vec<u32>,
    pub node_schedule: Vec<Schedule>,
    pub link_schedule: Vec<Schedule>,
    /// Cumulative final-stage packets absorbed, per commodity.
    pub delivered: Vec<f64>,
}

impl SimState {
    pub fn empty(net: &CloudNetwork, commodities: &CommoditySet) -> Self {
        let n = net.node_count();
        let e = net.link_count();
        let c = commodities.len();
        Self {
            t: 0,
            commodities: c,
            queues: vec![0.0; n * c],
            node_countdown: vec![0; n],
            link_countdown: vec![0; e],
            node_schedule: vec![Schedule::IDLE; n],
            link_schedule: vec![Schedule::IDLE; e],
            delivered: vec![0.0; c],
        }
    }

    pub fn queue(&self, node: NodeId, commodity: CommodityId) -> f64 {
        self.queues[node.0 * self.commodities + commodity.0]
    }

    pub fn set_queue(&mut self, node: NodeId, commodity: CommodityId, value: f64) {
        assert!(value >= 0.0, "queue backlog must be non-negative");
        self.queues[node.0 * self.commodities + commodity.0] = value;
    }

    /// Backlogs of every commodity at `node`, indexed by commodity id.
    pub fn node_queues(&self, node: NodeId) -> &[f64] {
        let start = node.0 * self.commodities;
        &self.queues[start..start + self.commodities]
    }

    pub fn total_queue(&self) -> f64 {
        self.queues.iter().sum()
    }

    pub fn queues(&self) -> &[f64] {
        &self.queues
    }

    pub fn schedule(&self, element: Element) -> Schedule {
        match element {
            Element::Node(n) => self.node_schedule[n.0],
            Element::Link(l) => self.link_schedule[l.0],
        }
    }

    pub fn countdown(&self, element: Element) -> u32 {
        match element {
            Element::Node(n) => self.node_countdown[n.0],
            Element::Link(l) => self.link_countdown[l.0],
        }
    }

    pub fn reconfiguring_count(&self) -> usize {
        self.node_countdown
            .iter()
            .chain(&self.link_countdown)
            .filter(|&&r| r > 0)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub flow: f64,
    pub allocation: f64,
    pub reconfiguration: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.flow + self.allocation + self.reconfiguration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconfigEvent {
    pub element: Element,
    pub from: Schedule,
    pub to: Schedule,
}

/// Packets moved by one element in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementFlow {
    pub element: Element,
    pub commodity: CommodityId,
    pub packets: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub t: u64,
    pub flows: Vec<ElementFlow>,
    pub cost: CostBreakdown,
    pub reconfig_events: Vec<ReconfigEvent>,
    pub delivered: f64,
    pub arrived: f64,
    /// Total backlog at the start of the next slot.
    pub total_queue: f64,
    /// Elements with `r(t) > 0`.
    pub reconfiguring: usize,
}

/// Validated network + commodity set ready to be stepped.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    net: &'a CloudNetwork,
    commodities: &'a CommoditySet,
    mode: FlowMode,
}

impl<'a> Simulator<'a> {
    pub fn new(
        net: &'a CloudNetwork,
        commodities: &'a CommoditySet,
        mode: FlowMode,
    ) -> Result<Self, EngineError> {
        let report = validate_network(net);
        if !report.is_valid() {
            return Err(EngineError::InvalidNetwork(report.to_string()));
        }
        Ok(Self {
            net,
            commodities,
            mode,
        })
    }

    pub fn network(&self) -> &'a CloudNetwork {
        self.net
    }

    pub fn commodities(&self) -> &'a CommoditySet {
        self.commodities
    }

    pub fn initial_state(&self) -> SimState {
        SimState::empty(self.net, self.commodities)
    }

    pub fn check_decision(&self, decision: &PolicyDecision) -> Result<(), EngineError> {
        if decision.node_targets.len() != self.net.node_count()
            || decision.link_targets.len() != self.net.link_count()
        {
            return Err(EngineError::DecisionShape {
                nodes: decision.node_targets.len(),
                links: decision.link_targets.len(),
                expected_nodes: self.net.node_count(),
                expected_links: self.net.link_count(),
            });
        }
        let nodes = decision
            .node_targets
            .iter()
            .enumerate()
            .map(|(i, t)| (Element::Node(NodeId(i)), &self.net.nodes()[i].processing, t));
        let links = decision
            .link_targets
            .iter()
            .enumerate()
            .map(|(i, t)| (Element::Link(LinkId(i)), &self.net.links()[i].transmission, t));
        for (element, profile, target) in nodes.chain(links) {
            let s = target.schedule;
            if s.units > profile.max_units() {
                return Err(EngineError::UnitsOutOfRange {
                    element,
                    units: s.units,
                    max: profile.max_units(),
                });
            }
            match s.commodity {
                Some(c) if c.0 >= self.commodities.len() => {
                    return Err(EngineError::UnknownCommodity {
                        element,
                        commodity: c.0,
                    })
                }
                Some(c) if matches!(element, Element::Node(_)) && self.commodities.get(c).is_final() => {
                    return Err(EngineError::FinalStageProcessing {
                        element,
                        label: self.commodities.get(c).label.clone(),
                    })
                }
                None if s.units > 0 => return Err(EngineError::MissingCommodity { element }),
                _ => {}
            }
        }
        Ok(())
    }

    /// Advances `state` by one slot.
    pub fn step(
        &self,
        state: &SimState,
        decision: &PolicyDecision,
        arrivals: &Arrivals,
    ) -> Result<(SimState, SlotReport), EngineError> {
        self.check_decision(decision)?;
        let net = self.net;
        let coms = self.commodities;
        let nc = coms.len();
        let mut next = state.clone();
        next.t = state.t + 1;
        let mut cost = CostBreakdown::default();
        let mut events = Vec::new();

        let mut countdown = |element: Element, prev: Schedule, target: &Target, r_prev: u32| {
            let reconfig = match element {
                Element::Node(n) => net.node(n).reconfig,
                Element::Link(l) => net.link(l).reconfig,
            };
            if is_reconfiguration(prev, target.schedule) {
                let commodity_only = target.kind == ReconfigKind::CommodityOnly
                    && prev.units == target.schedule.units
                    && prev.units > 0;
                let (delay, eta) = if commodity_only {
                    reconfig.commodity_only()
                } else {
                    reconfig.full()
                };
                cost.reconfiguration += eta;
                events.push(ReconfigEvent {
                    element,
                    from: prev,
                    to: target.schedule,
                });
                delay
            } else {
                r_prev.saturating_sub(1)
            }
        };
        for (i, target) in decision.node_targets.iter().enumerate() {
            let el = Element::Node(NodeId(i));
            next.node_countdown[i] = countdown(el, state.node_schedule[i], target, state.node_countdown[i]);
            next.node_schedule[i] = target.schedule;
        }
        for (i, target) in decision.link_targets.iter().enumerate() {
            let el = Element::Link(LinkId(i));
            next.link_countdown[i] = countdown(el, state.link_schedule[i], target, state.link_countdown[i]);
            next.link_schedule[i] = target.schedule;
        }

        // Service from the Q(t) snapshot.
        let mut available = state.queues.clone();
        let mut departed = vec![0.0; available.len()];
        let mut inflow = vec![0.0; available.len()];
        let mut flows = Vec::new();
        let mut delivered = 0.0;
        let actual = self.mode == FlowMode::Actual;

        for node in net.node_ids() {
            let s = next.node_schedule[node.0];
            let (Some(c), true) = (s.commodity, next.node_countdown[node.0] == 0 && s.units > 0) else {
                continue;
            };
            let profile = &net.node(node).processing;
            let com = coms.get(c);
            let succ = com.successor.expect("validated: processed commodity has a successor");
            let rho = com.rho_at(node).unwrap_or(1.0);
            let rate = profile.capacity(s.units) / rho;
            let idx = node.0 * nc + c.0;
            let moved = if actual {
                let m = available[idx].min(rate);
                available[idx] -= m;
                m
            } else {
                departed[idx] += rate;
                rate
            };
            let produced = coms.get(succ).xi * moved;
            if coms.get(succ).absorbed_at(node) {
                next.delivered[succ.0] += produced;
                delivered += produced;
            } else {
                inflow[node.0 * nc + succ.0] += produced;
            }
            cost.allocation += profile.alloc_cost(s.units);
            cost.flow += profile.unit_flow_cost * if actual { moved * rho } else { profile.capacity(s.units) };
            if moved > 0.0 {
                flows.push(ElementFlow {
                    element: Element::Node(node),
                    commodity: c,
                    packets: moved,
                });
            }
        }

        for lid in net.link_ids() {
            let s = next.link_schedule[lid.0];
            let (Some(c), true) = (s.commodity, next.link_countdown[lid.0] == 0 && s.units > 0) else {
                continue;
            };
            let link = net.link(lid);
            let profile = &link.transmission;
            let rate = profile.capacity(s.units);
            let idx = link.src.0 * nc + c.0;
            let moved = if actual {
                let m = available[idx].min(rate);
                available[idx] -= m;
                m
            } else {
                departed[idx] += rate;
                rate
            };
            if coms.get(c).absorbed_at(link.dst) {
                next.delivered[c.0] += moved;
                delivered += moved;
            } else {
                inflow[link.dst.0 * nc + c.0] += moved;
            }
            cost.allocation += profile.alloc_cost(s.units);
            cost.flow += profile.unit_flow_cost * moved;
            if moved > 0.0 {
                flows.push(ElementFlow {
                    element: Element::Link(lid),
                    commodity: c,
                    packets: moved,
                });
            }
        }

        for (idx, q) in next.queues.iter_mut().enumerate() {
            let remaining = if actual {
                available[idx]
            } else {
                (available[idx] - departed[idx]).max(0.0)
            };
            *q = remaining + inflow[idx];
        }

        let mut arrived = 0.0;
        for ((node, c), count) in arrivals.iter() {
            let count = count as f64;
            arrived += count;
            if coms.get(c).absorbed_at(node) {
                next.delivered[c.0] += count;
                delivered += count;
            } else {
                next.queues[node.0 * nc + c.0] += count;
            }
        }

        let report = SlotReport {
            t: state.t,
            flows,
            cost,
            reconfig_events: events,
            delivered,
            arrived,
            total_queue: next.total_queue(),
            reconfiguring: next.reconfiguring_count(),
        };
        Ok((next, report))
    }
}

/// Per-slot totals kept for every slot of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotTotals {
    pub t: u64,
    pub total_queue: f64,
    pub cost: CostBreakdown,
    pub reconfiguring: usize,
    pub reconfig_events: usize,
    pub delivered: f64,
    pub arrived: f64,
}

impl From<&SlotReport> for SlotTotals {
    fn from(r: &SlotReport) -> Self {
        Self {
            t: r.t,
            total_queue: r.total_queue,
            cost: r.cost,
            reconfiguring: r.reconfiguring,
            reconfig_events: r.reconfig_events.len(),
            delivered: r.delivered,
            arrived: r.arrived,
        }
    }
}

/// Hook invoked after every slot of [`run_observed`].
pub trait Observer {
    fn observe(&mut self, before: &SimState, decision: &PolicyDecision, report: &SlotReport, after: &SimState);
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: Vec<SlotTotals>,
    pub final_state: SimState,
    /// Number of elements (nodes + links).
    pub elements: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub horizon: u64,
    pub seed: u64,
    pub mode: FlowMode,
}

pub fn run(
    net: &CloudNetwork,
    commodities: &CommoditySet,
    policy: &dyn Policy,
    arrivals: &[ArrivalSpec],
    config: RunConfig,
) -> Result<RunOutput, EngineError> {
    run_observed(net, commodities, policy, arrivals, config, &mut [])
}

/// Runs `policy` from empty queues for `config.horizon` slots.
pub fn run_observed(
    net: &CloudNetwork,
    commodities: &CommoditySet,
    policy: &dyn Policy,
    arrivals: &[ArrivalSpec],
    config: RunConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutput, EngineError> {
    if config.horizon == 0 {
        return Err(EngineError::EmptyHorizon);
    }
    let sim = Simulator::new(net, commodities, config.mode)?;
    let mut state = sim.initial_state();
    let mut series = Vec::with_capacity(config.horizon as usize);
    for t in 0..config.horizon {
        let decision = policy.decide(&state, net, commodities);
        let a = sample_arrivals(arrivals, t, config.seed);
        let (next, report) = sim.step(&state, &decision, &a).map_err(|e| EngineError::AtSlot {
            t,
            source: Box::new(e),
        })?;
        for obs in observers.iter_mut() {
            obs.observe(&state, &decision, &report, &next);
        }
        series.push(SlotTotals::from(&report));
        state = next;
    }
    Ok(RunOutput {
        series,
        final_state: state,
        elements: net.node_count() + net.link_count(),
    })
}
