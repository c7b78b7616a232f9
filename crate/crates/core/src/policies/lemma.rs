//! Stability constants of the adaptive policy and a run-time monitor that
//! checks the reconfiguration-frequency and per-slot change bounds.

use thiserror::Error;

use crate::engine::{Element, Observer, PolicyDecision, SimState, SlotReport};
use crate::model::{CloudNetwork, CommoditySet, ResourceProfile};

use super::weights::AdcncParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LemmaError {
    #[error("window T must be at least 1")]
    ZeroWindow,
    #[error("{element}: C(1) must be positive")]
    ZeroUnitCapacity { element: String },
}

/// Backlog thresholds above which an element reconfigures at most once per
/// window of `window` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaConstants {
    /// Indexed by link id; infinite for links with no resource units.
    pub per_link: Vec<f64>,
    /// Indexed by node id; infinite for nodes that host no processing.
    pub per_node: Vec<f64>,
    pub gamma_max: f64,
    pub window: u64,
    pub a_max: f64,
    pub c_max: f64,
    pub v_max: usize,
    pub rho_min: f64,
    pub xi_max: f64,
}

/// `(1/ρ_min)·(1 + ξ_max)·(a_max + C_max·(v_max + 1))`.
pub fn gamma_max(rho_min: f64, xi_max: f64, a_max: f64, c_max: f64, v_max: usize) -> f64 {
    (1.0 + xi_max) * (a_max + c_max * (v_max as f64 + 1.0)) / rho_min
}

fn element_constant(
    label: impl FnOnce() -> String,
    profile: &ResourceProfile,
    params: &AdcncParams,
    window: f64,
    gamma: f64,
) -> Result<f64, LemmaError> {
    let Some(min_ratio) = profile.min_cost_per_capacity() else {
        return Ok(f64::INFINITY);
    };
    let c1 = profile.capacity(1);
    if !(c1 > 0.0) {
        return Err(LemmaError::ZeroUnitCapacity { element: label() });
    }
    let drift = window * gamma;
    let first = params.v * (min_ratio + profile.unit_flow_cost) + drift;
    let second = params.g.inverse(2.0 * profile.max_capacity() * drift) / c1 + drift;
    Ok(first.max(second))
}

pub fn lemma_constants(
    net: &CloudNetwork,
    commodities: &CommoditySet,
    params: &AdcncParams,
    window: u64,
    a_max: f64,
) -> Result<LemmaConstants, LemmaError> {
    if window == 0 {
        return Err(LemmaError::ZeroWindow);
    }
    let rho_min = commodities
        .iter()
        .flat_map(|c| net.node_ids().filter_map(move |n| c.rho_at(n)))
        .fold(f64::INFINITY, f64::min);
    let rho_min = if rho_min.is_finite() { rho_min } else { 1.0 };
    let xi_max = commodities.max_xi().max(1.0);
    let c_max = net.max_capacity();
    let v_max = net.max_degree();
    let gamma = gamma_max(rho_min, xi_max, a_max, c_max, v_max);
    let t = window as f64;
    let per_link = net
        .link_ids()
        .map(|l| element_constant(|| net.link_label(l), &net.link(l).transmission, params, t, gamma))
        .collect::<Result<_, _>>()?;
    let per_node = net
        .node_ids()
        .map(|n| element_constant(|| net.node(n).name.clone(), &net.node(n).processing, params, t, gamma))
        .collect::<Result<_, _>>()?;
    Ok(LemmaConstants {
        per_link,
        per_node,
        gamma_max: gamma,
        window,
        a_max,
        c_max,
        v_max,
        rho_min,
        xi_max,
    })
}

/// `max_c (Q_i^c − Q_j^c)` over all commodities.
pub fn link_differential(qi: &[f64], qj: &[f64]) -> f64 {
    qi.iter()
        .zip(qj)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `max_c (Q^c − Q^{c+})` over commodities with a successor; `−∞` if none.
pub fn node_differential(q: &[f64], commodities: &CommoditySet) -> f64 {
    commodities
        .iter()
        .filter_map(|c| c.successor.map(|s| q[c.id.0] - q[s.0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Default)]
struct Track {
    /// Maximal runs `[start, end]` of slots whose differential exceeded `M`.
    exceed: Vec<(u64, u64)>,
    reconfigs: Vec<u64>,
}

impl Track {
    fn mark_exceed(&mut self, t: u64) {
        match self.exceed.last_mut() {
            Some((_, end)) if *end + 1 == t => *end = t,
            _ => self.exceed.push((t, t)),
        }
    }

    /// Number of consecutive reconfiguration pairs that fall inside some
    /// window `[t, t+T]` with `t` an exceeding slot.
    fn violations(&self, window: u64) -> usize {
        let mut count = 0;
        for pair in self.reconfigs.windows(2) {
            let (r1, r2) = (pair[0], pair[1]);
            if r2 - r1 > window {
                continue;
            }
            let lo = r2.saturating_sub(window);
            if self.exceed.iter().any(|&(s, e)| s.max(lo) <= e.min(r1)) {
                count += 1;
            }
        }
        count
    }
}

/// Outcome of a monitored run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LemmaReport {
    /// Reconfiguration pairs closer than `T` after a slot above `M`.
    pub window_violations: usize,
    /// Slots in which some element's differential exceeded its `M`.
    pub exceed_slots: usize,
    /// Per-slot differential changes larger than `γ_max`.
    pub gamma_violations: usize,
    pub max_change: f64,
}

/// Observer recording the quantities bounded by [`LemmaConstants`].
pub struct LemmaMonitor<'a> {
    constants: LemmaConstants,
    net: &'a CloudNetwork,
    commodities: &'a CommoditySet,
    links: Vec<Track>,
    nodes: Vec<Track>,
    exceed_slots: usize,
    gamma_violations: usize,
    max_change: f64,
}

impl<'a> LemmaMonitor<'a> {
    pub fn new(constants: LemmaConstants, net: &'a CloudNetwork, commodities: &'a CommoditySet) -> Self {
        Self {
            links: vec![Track::default(); net.link_count()],
            nodes: vec![Track::default(); net.node_count()],
            constants,
            net,
            commodities,
            exceed_slots: 0,
            gamma_violations: 0,
            max_change: 0.0,
        }
    }

    pub fn constants(&self) -> &LemmaConstants {
        &self.constants
    }

    pub fn report(&self) -> LemmaReport {
        let window = self.constants.window;
        let window_violations = self
            .links
            .iter()
            .chain(&self.nodes)
            .map(|t| t.violations(window))
            .sum();
        LemmaReport {
            window_violations,
            exceed_slots: self.exceed_slots,
            gamma_violations: self.gamma_violations,
            max_change: self.max_change,
        }
    }

    fn check_change(&mut self, before: f64, after: f64) {
        if !before.is_finite() || !after.is_finite() {
            return;
        }
        let change = (after - before).abs();
        self.max_change = self.max_change.max(change);
        if change > self.constants.gamma_max {
            self.gamma_violations += 1;
        }
    }
}

impl Observer for LemmaMonitor<'_> {
    fn observe(&mut self, before: &SimState, _decision: &PolicyDecision, report: &SlotReport, after: &SimState) {
        let t = report.t;
        let mut exceeded = false;
        for l in self.net.link_ids() {
            let link = self.net.link(l);
            let d0 = link_differential(before.node_queues(link.src), before.node_queues(link.dst));
            let d1 = link_differential(after.node_queues(link.src), after.node_queues(link.dst));
            if d0 > self.constants.per_link[l.0] {
                self.links[l.0].mark_exceed(t);
                exceeded = true;
            }
            self.check_change(d0, d1);
        }
        for n in self.net.node_ids() {
            let d0 = node_differential(before.node_queues(n), self.commodities);
            let d1 = node_differential(after.node_queues(n), self.commodities);
            if d0 > self.constants.per_node[n.0] {
                self.nodes[n.0].mark_exceed(t);
                exceeded = true;
            }
            self.check_change(d0, d1);
        }
        if exceeded {
            self.exceed_slots += 1;
        }
        for ev in &report.reconfig_events {
            match ev.element {
                Element::Link(l) => self.links[l.0].reconfigs.push(t),
                Element::Node(n) => self.nodes[n.0].reconfigs.push(t),
            }
        }
    }
}
