#![allow(dead_code)]

use cloudnet::arrivals::{ArrivalProcess, Arrivals};
use cloudnet::engine::{PolicyDecision, Schedule, Target};
use cloudnet::model::{
    Client, CloudNetwork, CommodityId, CommoditySet, Link, Node, NodeId, ReconfigProfile, ResourceProfile,
    ServiceChain, ServiceFunction,
};
use cloudnet::{build_commodities, SimState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub net: CloudNetwork,
    pub commodities: CommoditySet,
    pub services: Vec<ServiceChain>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly increasing tables with `C(0) = w(0) = 0`.
pub fn random_profile(rng: &mut impl Rng, max_k: usize) -> ResourceProfile {
    let k = rng.random_range(1..=max_k);
    let mut capacity = vec![0.0];
    let mut cost = vec![0.0];
    for _ in 0..k {
        capacity.push(capacity.last().unwrap() + rng.random_range(1..=3) as f64);
        cost.push(cost.last().unwrap() + rng.random_range(1..=4) as f64);
    }
    let e = [0.0, 0.0, 0.5, 1.0][rng.random_range(0..4)];
    ResourceProfile::new(capacity, cost, e)
}

/// Connected-ish random digraph with one or two random service chains.
/// `rho` values are drawn from `(0, 1]`, `xi` from `{0.5, 1, 2}`.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    random_instance_with(rng, false)
}

/// As [`random_instance`]; `unit_processing` forces `rho = 1` and `xi ≤ 1`.
pub fn random_instance_with(rng: &mut impl Rng, unit_processing: bool) -> Instance {
    let n = rng.random_range(2..=5);
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            name: format!("n{i}"),
            processing: random_profile(rng, 3),
            reconfig: ReconfigProfile::new(rng.random_range(0..=3), rng.random_range(0..=2) as f64),
        })
        .collect();
    let mut links = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let ring = b == (a + 1) % n;
            if a != b && (ring || rng.random_bool(0.3)) {
                links.push(Link {
                    src: NodeId(a),
                    dst: NodeId(b),
                    transmission: random_profile(rng, 2),
                    reconfig: ReconfigProfile::new(rng.random_range(0..=3), rng.random_range(0..=2) as f64),
                });
            }
        }
    }
    let net = CloudNetwork::new(nodes, links);
    let services: Vec<ServiceChain> = (0..rng.random_range(1..=2))
        .map(|s| ServiceChain {
            id: format!("s{s}"),
            functions: (0..rng.random_range(1..=2))
                .map(|_| {
                    let xi: f64 = [0.5, 1.0, 2.0][rng.random_range(0..3)];
                    let rho = [0.25, 0.5, 1.0][rng.random_range(0..3)];
                    if unit_processing {
                        ServiceFunction::new(xi.min(1.0), 1.0)
                    } else {
                        ServiceFunction::new(xi, rho)
                    }
                })
                .collect(),
            clients: vec![Client {
                source: NodeId(rng.random_range(0..n)),
                destination: NodeId(rng.random_range(0..n)),
                arrival: ArrivalProcess::poisson(rng.random_range(0.1..2.0)).with_cap(4),
            }],
        })
        .collect();
    let commodities = build_commodities(&services).unwrap();
    Instance {
        net,
        commodities,
        services,
    }
}

fn random_schedule(rng: &mut impl Rng, profile: &ResourceProfile, choices: &[CommodityId]) -> Schedule {
    let units = rng.random_range(0..=profile.max_units());
    if units == 0 || choices.is_empty() {
        return Schedule::IDLE;
    }
    Schedule::new(units, choices[rng.random_range(0..choices.len())])
}

fn processable(inst: &Instance) -> Vec<CommodityId> {
    inst.commodities.ids().filter(|&c| !inst.commodities.get(c).is_final()).collect()
}

/// Random backlogs, schedules and countdowns.
pub fn random_state(rng: &mut impl Rng, inst: &Instance) -> SimState {
    let mut s = SimState::empty(&inst.net, &inst.commodities);
    for n in inst.net.node_ids() {
        for c in inst.commodities.ids() {
            let q = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0..60) as f64 };
            s.set_queue(n, c, q);
        }
    }
    let proc = processable(inst);
    let all: Vec<CommodityId> = inst.commodities.ids().collect();
    for n in inst.net.node_ids() {
        s.node_schedule[n.0] = random_schedule(rng, &inst.net.node(n).processing, &proc);
        s.node_countdown[n.0] = rng.random_range(0..=2);
    }
    for l in inst.net.link_ids() {
        s.link_schedule[l.0] = random_schedule(rng, &inst.net.link(l).transmission, &all);
        s.link_countdown[l.0] = rng.random_range(0..=2);
    }
    s
}

/// An arbitrary admissible decision, not tied to any policy.
pub fn random_decision(rng: &mut impl Rng, inst: &Instance) -> PolicyDecision {
    let proc = processable(inst);
    let all: Vec<CommodityId> = inst.commodities.ids().collect();
    PolicyDecision {
        node_targets: inst
            .net
            .node_ids()
            .map(|n| Target::from(random_schedule(rng, &inst.net.node(n).processing, &proc)))
            .collect(),
        link_targets: inst
            .net
            .link_ids()
            .map(|l| Target::from(random_schedule(rng, &inst.net.link(l).transmission, &all)))
            .collect(),
    }
}

/// Arrivals of at most `a_max` per stage-0 source queue.
pub fn random_arrivals(rng: &mut impl Rng, inst: &Instance, a_max: u32) -> Arrivals {
    let mut a = Arrivals::default();
    for (si, svc) in inst.services.iter().enumerate() {
        for (ci, client) in svc.clients.iter().enumerate() {
            if let Some(c) = inst.commodities.entry(si, ci) {
                a.add(client.source, c, rng.random_range(0..=a_max));
            }
        }
    }
    a
}
