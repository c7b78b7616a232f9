//! Scenario files and the built-in scenarios.
//!
//! A scenario is a TOML document with the sections `nodes`, `links`,
//! `node_profile`, `link_profile`, `reconfig`, `services` and `arrivals`.
//! See `scenarios/abilene.toml` for a complete example.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrivals::{ArrivalKind, ArrivalProcess, ArrivalSpec};
use crate::model::{
    build_commodities, validate_network, Client, CloudNetwork, CommodityId, CommoditySet, Link, ModelError, Node,
    NodeId, ReconfigProfile, ResourceProfile, ServiceChain, ServiceFunction,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("service `{service}` has no client {client}")]
    UnknownClient { service: String, client: usize },
    #[error("invalid network:\n{0}")]
    InvalidNetwork(String),
    #[error("expected {expected} service rates, got {got}")]
    RateCount { expected: usize, got: usize },
    #[error("unknown scenario `{0}` (not a built-in name or a readable file)")]
    UnknownScenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A network plus the services it carries. Client arrival processes are
/// part of the services.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub network: CloudNetwork,
    pub services: Vec<ServiceChain>,
}

impl Scenario {
    pub fn commodities(&self) -> Result<CommoditySet, ModelError> {
        build_commodities(&self.services)
    }

    /// Arrival specs: each client's process feeds the stage-0 commodity at
    /// its source.
    pub fn arrival_specs(&self, commodities: &CommoditySet) -> Vec<ArrivalSpec> {
        let mut out = Vec::new();
        for (si, svc) in self.services.iter().enumerate() {
            for (ci, client) in svc.clients.iter().enumerate() {
                if let Some(c) = commodities.entry(si, ci) {
                    out.push(ArrivalSpec {
                        node: client.source,
                        commodity: c,
                        process: client.arrival,
                    });
                }
            }
        }
        out
    }

    /// Mean exogenous rates keyed by `(node, commodity)`.
    pub fn rate_matrix(&self, commodities: &CommoditySet) -> BTreeMap<(NodeId, CommodityId), f64> {
        let mut out = BTreeMap::new();
        for s in self.arrival_specs(commodities) {
            *out.entry((s.node, s.commodity)).or_insert(0.0) += s.process.rate();
        }
        out
    }

    /// Sets every client of every service to mean rate `rate`.
    pub fn set_uniform_rate(&mut self, rate: f64) {
        for svc in &mut self.services {
            for c in &mut svc.clients {
                c.arrival.kind = c.arrival.kind.with_rate(rate);
            }
        }
    }

    /// Sets the rate of all clients of service `i` to `rates[i]`.
    pub fn set_service_rates(&mut self, rates: &[f64]) -> Result<(), ScenarioError> {
        if rates.len() != self.services.len() {
            return Err(ScenarioError::RateCount {
                expected: self.services.len(),
                got: rates.len(),
            });
        }
        for (svc, &r) in self.services.iter_mut().zip(rates) {
            for c in &mut svc.clients {
                c.arrival.kind = c.arrival.kind.with_rate(r);
            }
        }
        Ok(())
    }

    /// Uniform reconfiguration delay and cost on every element. Commodity-only
    /// overheads are left untouched.
    pub fn set_reconfig(&mut self, delay: Option<u32>, cost: Option<f64>) {
        self.network.map_reconfig(|r| {
            if let Some(d) = delay {
                r.delay = d;
            }
            if let Some(c) = cost {
                r.cost = c;
            }
        });
    }

    pub fn set_commodity_reconfig(&mut self, delay: Option<u32>, cost: Option<f64>) {
        self.network.map_reconfig(|r| {
            if delay.is_some() {
                r.commodity_delay = delay;
            }
            if cost.is_some() {
                r.commodity_cost = cost;
            }
        });
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        file.resolve()
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(&ScenarioFile::from_scenario(self))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProfileSpec {
    capacity: Vec<f64>,
    alloc_cost: Vec<f64>,
    #[serde(default)]
    unit_flow_cost: f64,
}

impl From<&ProfileSpec> for ResourceProfile {
    fn from(p: &ProfileSpec) -> Self {
        ResourceProfile::new(p.capacity.clone(), p.alloc_cost.clone(), p.unit_flow_cost)
    }
}

impl From<&ResourceProfile> for ProfileSpec {
    fn from(p: &ResourceProfile) -> Self {
        Self {
            capacity: p.capacity.clone(),
            alloc_cost: p.alloc_cost.clone(),
            unit_flow_cost: p.unit_flow_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeOverride {
    node: String,
    #[serde(flatten)]
    profile: ProfileSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LinkOverride {
    src: String,
    dst: String,
    #[serde(flatten)]
    profile: ProfileSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeProfileSection {
    #[serde(flatten)]
    default: ProfileSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    overrides: Vec<NodeOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LinkProfileSection {
    #[serde(flatten)]
    default: ProfileSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    overrides: Vec<LinkOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSpec {
    a: String,
    b: String,
    /// Adds the reverse link `b -> a` as well.
    #[serde(default = "yes")]
    bidirectional: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionSpec {
    xi: f64,
    rho: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    rho_overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientSpec {
    source: String,
    destination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServiceSpec {
    id: String,
    functions: Vec<FunctionSpec>,
    clients: Vec<ClientSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrivalEntry {
    service: String,
    #[serde(default)]
    client: usize,
    #[serde(flatten)]
    process: ArrivalProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    nodes: Vec<String>,
    links: Vec<LinkSpec>,
    node_profile: NodeProfileSection,
    link_profile: LinkProfileSection,
    #[serde(default)]
    reconfig: ReconfigProfile,
    services: Vec<ServiceSpec>,
    #[serde(default)]
    arrivals: Vec<ArrivalEntry>,
}

impl ScenarioFile {
    fn resolve(&self) -> Result<Scenario, ScenarioError> {
        let mut index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.as_str(), NodeId(i)).is_some() {
                return Err(ScenarioError::DuplicateNode(n.clone()));
            }
        }
        let id = |name: &str| index.get(name).copied().ok_or_else(|| ScenarioError::UnknownNode(name.into()));

        let mut node_profiles = vec![ResourceProfile::from(&self.node_profile.default); self.nodes.len()];
        for o in &self.node_profile.overrides {
            node_profiles[id(&o.node)?.0] = ResourceProfile::from(&o.profile);
        }
        let nodes = self
            .nodes
            .iter()
            .zip(node_profiles)
            .map(|(name, processing)| Node {
                name: name.clone(),
                processing,
                reconfig: self.reconfig,
            })
            .collect();

        let mut overrides = HashMap::new();
        for o in &self.link_profile.overrides {
            overrides.insert((id(&o.src)?, id(&o.dst)?), ResourceProfile::from(&o.profile));
        }
        let mut links = Vec::new();
        for l in &self.links {
            let (a, b) = (id(&l.a)?, id(&l.b)?);
            let pairs: &[(NodeId, NodeId)] = if l.bidirectional { &[(a, b), (b, a)] } else { &[(a, b)] };
            for &(src, dst) in pairs {
                links.push(Link {
                    src,
                    dst,
                    transmission: overrides
                        .get(&(src, dst))
                        .cloned()
                        .unwrap_or_else(|| ResourceProfile::from(&self.link_profile.default)),
                    reconfig: self.reconfig,
                });
            }
        }
        let network = CloudNetwork::new(nodes, links);
        let report = validate_network(&network);
        if !report.is_valid() {
            return Err(ScenarioError::InvalidNetwork(report.to_string()));
        }

        let mut services = Vec::new();
        for s in &self.services {
            let mut functions = Vec::new();
            for f in &s.functions {
                let mut func = ServiceFunction::new(f.xi, f.rho);
                for (node, rho) in &f.rho_overrides {
                    func.rho_overrides.insert(id(node)?, *rho);
                }
                functions.push(func);
            }
            let mut clients = Vec::new();
            for c in &s.clients {
                clients.push(Client {
                    source: id(&c.source)?,
                    destination: id(&c.destination)?,
                    arrival: ArrivalProcess::zero(),
                });
            }
            services.push(ServiceChain {
                id: s.id.clone(),
                functions,
                clients,
            });
        }
        for a in &self.arrivals {
            let svc = services
                .iter_mut()
                .find(|s| s.id == a.service)
                .ok_or_else(|| ScenarioError::UnknownService(a.service.clone()))?;
            let client = svc.clients.get_mut(a.client).ok_or_else(|| ScenarioError::UnknownClient {
                service: a.service.clone(),
                client: a.client,
            })?;
            client.arrival = a.process;
        }
        build_commodities(&services)?;
        Ok(Scenario {
            name: self.name.clone(),
            network,
            services,
        })
    }

    /// Writes every link as a directed entry with an explicit profile
    /// override where it differs from the most common one.
    fn from_scenario(s: &Scenario) -> Self {
        let net = &s.network;
        let name = |n: NodeId| net.node(n).name.clone();
        let most_common = |profiles: Vec<&ResourceProfile>| {
            let mut best: Option<(&ResourceProfile, usize)> = None;
            for p in &profiles {
                let count = profiles.iter().filter(|q| **q == *p).count();
                if best.is_none_or(|(_, c)| count > c) {
                    best = Some((p, count));
                }
            }
            best.map(|(p, _)| p.clone()).unwrap_or_else(ResourceProfile::disabled)
        };
        let node_default = most_common(net.nodes().iter().map(|n| &n.processing).collect());
        let link_default = most_common(net.links().iter().map(|l| &l.transmission).collect());
        let node_overrides = net
            .nodes()
            .iter()
            .filter(|n| n.processing != node_default)
            .map(|n| NodeOverride {
                node: n.name.clone(),
                profile: (&n.processing).into(),
            })
            .collect();
        let link_overrides = net
            .links()
            .iter()
            .filter(|l| l.transmission != link_default)
            .map(|l| LinkOverride {
                src: name(l.src),
                dst: name(l.dst),
                profile: (&l.transmission).into(),
            })
            .collect();
        let mut links = Vec::new();
        for l in net.links() {
            let reverse = net.find_link(l.dst, l.src).is_some();
            if reverse && l.src > l.dst {
                continue;
            }
            links.push(LinkSpec {
                a: name(l.src),
                b: name(l.dst),
                bidirectional: reverse,
            });
        }
        let reconfig = net.nodes().first().map(|n| n.reconfig).unwrap_or_default();
        let services = s
            .services
            .iter()
            .map(|svc| ServiceSpec {
                id: svc.id.clone(),
                functions: svc
                    .functions
                    .iter()
                    .map(|f| FunctionSpec {
                        xi: f.xi,
                        rho: f.rho,
                        rho_overrides: f.rho_overrides.iter().map(|(n, r)| (name(*n), *r)).collect(),
                    })
                    .collect(),
                clients: svc
                    .clients
                    .iter()
                    .map(|c| ClientSpec {
                        source: name(c.source),
                        destination: name(c.destination),
                    })
                    .collect(),
            })
            .collect();
        let arrivals = s
            .services
            .iter()
            .flat_map(|svc| {
                svc.clients
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.arrival.kind != ArrivalKind::Zero || c.arrival.cap.is_some())
                    .map(move |(i, c)| ArrivalEntry {
                        service: svc.id.clone(),
                        client: i,
                        process: c.arrival,
                    })
            })
            .collect();
        ScenarioFile {
            name: s.name.clone(),
            nodes: net.nodes().iter().map(|n| n.name.clone()).collect(),
            links,
            node_profile: NodeProfileSection {
                default: (&node_default).into(),
                overrides: node_overrides,
            },
            link_profile: LinkProfileSection {
                default: (&link_default).into(),
                overrides: link_overrides,
            },
            reconfig,
            services,
            arrivals,
        }
    }
}

pub const ABILENE_NODES: [&str; 11] = [
    "Seattle",
    "Sunnyvale",
    "Los Angeles",
    "Denver",
    "Kansas City",
    "Houston",
    "Chicago",
    "Indianapolis",
    "Atlanta",
    "Washington DC",
    "New York",
];

pub const ABILENE_EDGES: [(&str, &str); 14] = [
    ("Seattle", "Sunnyvale"),
    ("Seattle", "Denver"),
    ("Sunnyvale", "Los Angeles"),
    ("Sunnyvale", "Denver"),
    ("Los Angeles", "Houston"),
    ("Denver", "Kansas City"),
    ("Kansas City", "Houston"),
    ("Kansas City", "Indianapolis"),
    ("Houston", "Atlanta"),
    ("Atlanta", "Indianapolis"),
    ("Atlanta", "Washington DC"),
    ("Indianapolis", "Chicago"),
    ("Chicago", "New York"),
    ("New York", "Washington DC"),
];

fn two_function_service(id: &str, source: NodeId, destination: NodeId, rate: f64) -> ServiceChain {
    ServiceChain {
        id: id.into(),
        functions: vec![ServiceFunction::new(1.0, 1.0); 2],
        clients: vec![Client {
            source,
            destination,
            arrival: ArrivalProcess::poisson(rate),
        }],
    }
}

/// Abilene topology with unit resources everywhere and two 2-function
/// services: Seattle to New York at rate `lambda1`, Sunnyvale to Atlanta at
/// rate `lambda2`.
pub fn abilene_scenario(lambda1: f64, lambda2: f64) -> Scenario {
    let id = |name: &str| NodeId(ABILENE_NODES.iter().position(|n| *n == name).expect("abilene node"));
    let nodes = ABILENE_NODES
        .iter()
        .map(|n| Node {
            name: n.to_string(),
            processing: ResourceProfile::linear(1, 0.0),
            reconfig: ReconfigProfile::default(),
        })
        .collect();
    let links = ABILENE_EDGES
        .iter()
        .flat_map(|&(a, b)| [(id(a), id(b)), (id(b), id(a))])
        .map(|(src, dst)| Link {
            src,
            dst,
            transmission: ResourceProfile::linear(1, 0.0),
            reconfig: ReconfigProfile::default(),
        })
        .collect();
    Scenario {
        name: "abilene".into(),
        network: CloudNetwork::new(nodes, links),
        services: vec![
            two_function_service("service1", id("Seattle"), id("New York"), lambda1),
            two_function_service("service2", id("Sunnyvale"), id("Atlanta"), lambda2),
        ],
    }
}

/// Source `a` with processing, one link to destination `b`, one 1-function
/// service `a -> b`.
pub fn two_node_scenario(rate: f64) -> Scenario {
    let nodes = vec![
        Node {
            name: "a".into(),
            processing: ResourceProfile::linear(1, 0.0),
            reconfig: ReconfigProfile::default(),
        },
        Node {
            name: "b".into(),
            processing: ResourceProfile::linear(1, 0.0),
            reconfig: ReconfigProfile::default(),
        },
    ];
    let links = vec![Link {
        src: NodeId(0),
        dst: NodeId(1),
        transmission: ResourceProfile::linear(1, 0.0),
        reconfig: ReconfigProfile::default(),
    }];
    Scenario {
        name: "two-node".into(),
        network: CloudNetwork::new(nodes, links),
        services: vec![ServiceChain {
            id: "service".into(),
            functions: vec![ServiceFunction::new(1.0, 1.0)],
            clients: vec![Client {
                source: NodeId(0),
                destination: NodeId(1),
                arrival: ArrivalProcess::poisson(rate),
            }],
        }],
    }
}

/// Bidirectional line of `n` unit nodes carrying one 2-function service
/// from the first to the last node.
pub fn line_scenario(n: usize, rate: f64) -> Scenario {
    let nodes = (0..n)
        .map(|i| Node {
            name: format!("n{i}"),
            processing: ResourceProfile::linear(1, 0.0),
            reconfig: ReconfigProfile::default(),
        })
        .collect();
    let links = (1..n)
        .flat_map(|i| [(i - 1, i), (i, i - 1)])
        .map(|(s, d)| Link {
            src: NodeId(s),
            dst: NodeId(d),
            transmission: ResourceProfile::linear(1, 0.0),
            reconfig: ReconfigProfile::default(),
        })
        .collect();
    Scenario {
        name: format!("line{n}"),
        network: CloudNetwork::new(nodes, links),
        services: vec![two_function_service("service", NodeId(0), NodeId(n - 1), rate)],
    }
}

/// Built-in scenario names with a one-line description.
pub const BUILTIN_SCENARIOS: [(&str, &str); 3] = [
    ("abilene", "11-node Abilene US topology, two 2-function services, rate 0.2 each"),
    ("line4", "4-node bidirectional line, one 2-function service, rate 0.2"),
    ("two-node", "source with processing, one link, one 1-function service, rate 0.5"),
];

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    match name {
        "abilene" => Some(abilene_scenario(0.2, 0.2)),
        "line4" => Some(line_scenario(4, 0.2)),
        "two-node" => Some(two_node_scenario(0.5)),
        _ => None,
    }
}

/// Resolves a built-in name, falling back to a scenario file path.
pub fn load_scenario(reference: &str) -> Result<Scenario, ScenarioError> {
    if let Some(s) = builtin_scenario(reference) {
        return Ok(s);
    }
    let path = Path::new(reference);
    if path.is_file() {
        return Scenario::from_path(path);
    }
    Err(ScenarioError::UnknownScenario(reference.into()))
}
