//! Static description of a cloud network: nodes and links with their
//! resource, cost and reconfiguration profiles, the service chains offered
//! on top of it, and the commodity set derived from those chains.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::ArrivalProcess;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CommodityId(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate service id `{0}`")]
    DuplicateService(String),
    #[error("service `{0}` has an empty function list")]
    EmptyChain(String),
    #[error("service `{service}` function {index}: {reason}")]
    InvalidFunction {
        service: String,
        index: usize,
        reason: String,
    },
    #[error("service `{service}` has no clients")]
    NoClients { service: String },
}

/// Capacity and cost tables of one processing or transmission resource.
///
/// `capacity[k]` and `alloc_cost[k]` give `C(k)` and `w(k)` for `k = 0..=K`;
/// `unit_flow_cost` is the cost `e` per flow unit moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceProfile {
    pub capacity: Vec<f64>,
    pub alloc_cost: Vec<f64>,
    pub unit_flow_cost: f64,
}

impl ResourceProfile {
    pub fn new(capacity: Vec<f64>, alloc_cost: Vec<f64>, unit_flow_cost: f64) -> Self {
        Self {
            capacity,
            alloc_cost,
            unit_flow_cost,
        }
    }

    /// `C(k) = k`, `w(k) = k` for `k = 0..=max_units`.
    pub fn linear(max_units: usize, unit_flow_cost: f64) -> Self {
        let table: Vec<f64> = (0..=max_units).map(|k| k as f64).collect();
        Self::new(table.clone(), table, unit_flow_cost)
    }

    /// A resource that can never be allocated (`K = 0`).
    pub fn disabled() -> Self {
        Self::new(vec![0.0], vec![0.0], 0.0)
    }

    pub fn max_units(&self) -> usize {
        self.capacity.len().saturating_sub(1)
    }

    pub fn capacity(&self, k: usize) -> f64 {
        self.capacity[k]
    }

    pub fn alloc_cost(&self, k: usize) -> f64 {
        self.alloc_cost[k]
    }

    pub fn max_capacity(&self) -> f64 {
        self.capacity.iter().copied().fold(0.0, f64::max)
    }

    /// `min_{k>0} w(k)/C(k)`, or `None` when `K = 0`.
    pub fn min_cost_per_capacity(&self) -> Option<f64> {
        (1..=self.max_units())
            .map(|k| self.alloc_cost[k] / self.capacity[k])
            .reduce(f64::min)
    }

    /// Lemma-style activation threshold `V·(min_{k>0} w(k)/C(k) + e)`.
    pub fn activation_threshold(&self, v: f64) -> Option<f64> {
        self.min_cost_per_capacity()
            .map(|r| v * (r + self.unit_flow_cost))
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.capacity.is_empty() {
            out.push("capacity table is empty".to_string());
            return out;
        }
        if self.capacity.len() != self.alloc_cost.len() {
            out.push(format!(
                "capacity table has {} entries but cost table has {}",
                self.capacity.len(),
                self.alloc_cost.len()
            ));
            return out;
        }
        if self.capacity[0] != 0.0 {
            out.push("capacity at k=0 must be 0".to_string());
        }
        if self.alloc_cost[0] != 0.0 {
            out.push("allocation cost at k=0 must be 0".to_string());
        }
        for k in 1..self.capacity.len() {
            if !(self.capacity[k] > self.capacity[k - 1]) {
                out.push(format!("capacity not strictly increasing at k={k}"));
            }
            if !(self.alloc_cost[k] > self.alloc_cost[k - 1]) {
                out.push(format!("allocation cost not strictly increasing at k={k}"));
            }
        }
        if self.capacity.iter().chain(&self.alloc_cost).any(|x| !x.is_finite()) {
            out.push("non-finite entry in capacity or cost table".to_string());
        }
        if !self.unit_flow_cost.is_finite() || self.unit_flow_cost < 0.0 {
            out.push("unit flow cost must be finite and non-negative".to_string());
        }
        out
    }
}

/// Reconfiguration delay (slots) and one-off cost of an element.
///
/// The optional commodity fields describe a cheaper commodity-only
/// reconfiguration (same resource units, different commodity). When unset the
/// commodity overhead equals the resource overhead.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReconfigProfile {
    pub delay: u32,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commodity_delay: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commodity_cost: Option<f64>,
}

impl ReconfigProfile {
    pub fn new(delay: u32, cost: f64) -> Self {
        Self {
            delay,
            cost,
            commodity_delay: None,
            commodity_cost: None,
        }
    }

    /// Overhead of a change that touches the resource units: the larger of
    /// the resource and commodity overheads.
    pub fn full(&self) -> (u32, f64) {
        (
            self.delay.max(self.commodity_delay.unwrap_or(self.delay)),
            self.cost.max(self.commodity_cost.unwrap_or(self.cost)),
        )
    }

    pub fn commodity_only(&self) -> (u32, f64) {
        (
            self.commodity_delay.unwrap_or(self.delay),
            self.commodity_cost.unwrap_or(self.cost),
        )
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, c) in [("cost", Some(self.cost)), ("commodity cost", self.commodity_cost)] {
            if let Some(c) = c {
                if !c.is_finite() || c < 0.0 {
                    out.push(format!("reconfiguration {name} must be finite and non-negative"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub processing: ResourceProfile,
    pub reconfig: ReconfigProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    pub transmission: ResourceProfile,
    pub reconfig: ReconfigProfile,
}

/// Directed graph of cloud nodes and network links.
///
/// Links are kept sorted by `(src, dst)`; that order is the link id order
/// used for deterministic tie-breaking and service grants.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    outgoing: Vec<Vec<LinkId>>,
    incoming: Vec<Vec<LinkId>>,
}

impl CloudNetwork {
    pub fn new(nodes: Vec<Node>, mut links: Vec<Link>) -> Self {
        links.sort_by_key(|l| (l.src, l.dst));
        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut incoming = vec![Vec::new(); nodes.len()];
        for (idx, link) in links.iter().enumerate() {
            if let Some(out) = outgoing.get_mut(link.src.0) {
                out.push(LinkId(idx));
            }
            if let Some(inc) = incoming.get_mut(link.dst.0) {
                inc.push(LinkId(idx));
            }
        }
        Self {
            nodes,
            links,
            outgoing,
            incoming,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len()).map(LinkId)
    }

    /// Outgoing links of `node`, i.e. `V+(i)` as link ids.
    pub fn outgoing(&self, node: NodeId) -> &[LinkId] {
        &self.outgoing[node.0]
    }

    /// Incoming links of `node`, i.e. `V-(i)` as link ids.
    pub fn incoming(&self, node: NodeId) -> &[LinkId] {
        &self.incoming[node.0]
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn find_link(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.links
            .binary_search_by_key(&(src, dst), |l| (l.src, l.dst))
            .ok()
            .map(LinkId)
    }

    pub fn link_label(&self, id: LinkId) -> String {
        let l = self.link(id);
        format!("{}->{}", self.nodes[l.src.0].name, self.nodes[l.dst.0].name)
    }

    /// Largest in- or out-degree over all nodes.
    pub fn max_degree(&self) -> usize {
        self.outgoing
            .iter()
            .chain(&self.incoming)
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }

    /// Largest capacity of any node or link.
    pub fn max_capacity(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.processing.max_capacity())
            .chain(self.links.iter().map(|l| l.transmission.max_capacity()))
            .fold(0.0, f64::max)
    }

    /// Applies `f` to every node and link reconfiguration profile.
    pub fn map_reconfig(&mut self, mut f: impl FnMut(&mut ReconfigProfile)) {
        self.nodes.iter_mut().for_each(|n| f(&mut n.reconfig));
        self.links.iter_mut().for_each(|l| f(&mut l.reconfig));
    }
}

/// Where a validation problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Node(String),
    Link(String),
    Network,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Node(n) => write!(f, "node {n}"),
            Location::Link(l) => write!(f, "link {l}"),
            Location::Network => write!(f, "network"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: Location, message: impl Into<String>) {
        self.violations.push(Violation {
            location,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks resource monotonicity, graph well-formedness and reconfiguration
/// profiles. An empty report means the network is usable.
pub fn validate_network(net: &CloudNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut names = HashSet::new();
    for node in &net.nodes {
        let loc = || Location::Node(node.name.clone());
        if !names.insert(node.name.as_str()) {
            report.push(loc(), "duplicate node name");
        }
        for v in node.processing.violations() {
            report.push(loc(), v);
        }
        for v in node.reconfig.violations() {
            report.push(loc(), v);
        }
    }
    let n = net.nodes.len();
    let name_of = |id: NodeId| {
        net.nodes
            .get(id.0)
            .map(|n| n.name.clone())
            .unwrap_or_else(|| format!("#{}", id.0))
    };
    let mut seen = HashSet::new();
    for link in &net.links {
        let label = format!("{}->{}", name_of(link.src), name_of(link.dst));
        let loc = || Location::Link(label.clone());
        if link.src.0 >= n {
            report.push(loc(), "source endpoint is not a declared node");
        }
        if link.dst.0 >= n {
            report.push(loc(), "destination endpoint is not a declared node");
        }
        if link.src == link.dst {
            report.push(loc(), "self-loop");
        }
        if !seen.insert((link.src, link.dst)) {
            report.push(loc(), "duplicate link");
        }
        for v in link.transmission.violations() {
            report.push(loc(), v);
        }
        for v in link.reconfig.violations() {
            report.push(loc(), v);
        }
    }
    if n == 0 {
        report.push(Location::Network, "network has no nodes");
    }
    report
}

/// One function of a service chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceFunction {
    /// Output packets per input packet.
    pub xi: f64,
    /// Processing flow units per transmission flow unit, unless overridden.
    pub rho: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rho_overrides: BTreeMap<NodeId, f64>,
}

impl ServiceFunction {
    pub fn new(xi: f64, rho: f64) -> Self {
        Self {
            xi,
            rho,
            rho_overrides: BTreeMap::new(),
        }
    }

    pub fn rho_at(&self, node: NodeId) -> f64 {
        self.rho_overrides.get(&node).copied().unwrap_or(self.rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub source: NodeId,
    pub destination: NodeId,
    pub arrival: ArrivalProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceChain {
    pub id: String,
    pub functions: Vec<ServiceFunction>,
    pub clients: Vec<Client>,
}

/// Packets of one (service, client) pair at one processing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Commodity {
    pub id: CommodityId,
    /// `service.client.stage`, stable across runs.
    pub label: String,
    pub service: usize,
    pub client: usize,
    pub stage: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub predecessor: Option<CommodityId>,
    pub successor: Option<CommodityId>,
    /// Scaling factor of the function that produced this commodity (1 for
    /// stage 0).
    pub xi: f64,
    /// Function that consumes this commodity; `None` for the final stage.
    pub consumer: Option<ServiceFunction>,
}

impl Commodity {
    pub fn is_final(&self) -> bool {
        self.successor.is_none()
    }

    /// `ρ_i` of the consuming function, `None` for the final stage.
    pub fn rho_at(&self, node: NodeId) -> Option<f64> {
        self.consumer.as_ref().map(|f| f.rho_at(node))
    }

    /// Whether packets of this commodity are absorbed on reaching `node`.
    pub fn absorbed_at(&self, node: NodeId) -> bool {
        self.is_final() && node == self.destination
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommoditySet {
    commodities: Vec<Commodity>,
}

impl CommoditySet {
    pub fn len(&self) -> usize {
        self.commodities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commodities.is_empty()
    }

    pub fn get(&self, id: CommodityId) -> &Commodity {
        &self.commodities[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Commodity> {
        self.commodities.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = CommodityId> {
        (0..self.commodities.len()).map(CommodityId)
    }

    pub fn find(&self, label: &str) -> Option<CommodityId> {
        self.commodities.iter().find(|c| c.label == label).map(|c| c.id)
    }

    /// Stage-0 commodity of `(service, client)`.
    pub fn entry(&self, service: usize, client: usize) -> Option<CommodityId> {
        self.commodities
            .iter()
            .find(|c| c.service == service && c.client == client && c.stage == 0)
            .map(|c| c.id)
    }

    pub fn max_xi(&self) -> f64 {
        self.commodities.iter().map(|c| c.xi).fold(0.0, f64::max)
    }
}

/// Expands every (service, client) pair into its chain of `M + 1`
/// commodities, ordered by service, then client, then stage.
pub fn build_commodities(services: &[ServiceChain]) -> Result<CommoditySet, ModelError> {
    let mut ids = HashSet::new();
    for s in services {
        if !ids.insert(s.id.as_str()) {
            return Err(ModelError::DuplicateService(s.id.clone()));
        }
        if s.functions.is_empty() {
            return Err(ModelError::EmptyChain(s.id.clone()));
        }
        for (index, f) in s.functions.iter().enumerate() {
            let bad = |reason: &str| ModelError::InvalidFunction {
                service: s.id.clone(),
                index,
                reason: reason.to_string(),
            };
            if !(f.xi > 0.0 && f.xi.is_finite()) {
                return Err(bad("scaling factor must be positive"));
            }
            if !(f.rho > 0.0 && f.rho.is_finite()) || f.rho_overrides.values().any(|r| !(*r > 0.0)) {
                return Err(bad("processing ratio must be positive"));
            }
        }
    }

    let mut commodities = Vec::new();
    for (si, service) in services.iter().enumerate() {
        let stages = service.functions.len();
        for (ci, client) in service.clients.iter().enumerate() {
            let base = commodities.len();
            for stage in 0..=stages {
                commodities.push(Commodity {
                    id: CommodityId(base + stage),
                    label: format!("{}.{}.{}", service.id, ci, stage),
                    service: si,
                    client: ci,
                    stage,
                    source: client.source,
                    destination: client.destination,
                    predecessor: (stage > 0).then(|| CommodityId(base + stage - 1)),
                    successor: (stage < stages).then(|| CommodityId(base + stage + 1)),
                    xi: if stage == 0 {
                        1.0
                    } else {
                        service.functions[stage - 1].xi
                    },
                    consumer: service.functions.get(stage).cloned(),
                });
            }
        }
    }
    Ok(CommoditySet { commodities })
}
