mod common;

use cloudnet::arrivals::{ArrivalProcess, Arrivals};
use cloudnet::engine::{Element, SlotReport};
use cloudnet::model::{CommodityId, NodeId, ResourceProfile};
use cloudnet::policies::transmission_max_weight;
use cloudnet::scenario::{abilene_scenario, line_scenario};
use cloudnet::{run, FlowMode, PolicyConfig, PolicyRegistry, RunConfig, SimState, Simulator};
use common::{random_arrivals, random_decision, random_instance, random_instance_with, random_state, rng, Instance};
use proptest::prelude::*;

const MODES: [FlowMode; 2] = [FlowMode::Actual, FlowMode::Nominal];

fn step_random(
    inst: &Instance,
    seed: u64,
    mode: FlowMode,
    a_max: u32,
) -> (SimState, cloudnet::PolicyDecision, SlotReport, SimState) {
    let mut r = rng(seed);
    let state = random_state(&mut r, inst);
    let decision = random_decision(&mut r, inst);
    let arrivals = random_arrivals(&mut r, inst, a_max);
    let sim = Simulator::new(&inst.net, &inst.commodities, mode).unwrap();
    let (next, report) = sim.step(&state, &decision, &arrivals).unwrap();
    (state, decision, report, next)
}

fn total(s: &SimState) -> f64 {
    s.queues().iter().sum()
}

#[test]
fn packets_are_conserved_up_to_scaling() {
    for seed in 0..300 {
        let inst = random_instance(&mut rng(seed));
        let (before, _, report, after) = step_random(&inst, seed + 10_000, FlowMode::Actual, 4);
        let mut scaled = 0.0;
        for f in &report.flows {
            if let Element::Node(_) = f.element {
                let succ = inst.commodities.get(f.commodity).successor.unwrap();
                scaled += (inst.commodities.get(succ).xi - 1.0) * f.packets;
            }
        }
        let lhs = total(&after) + after.delivered.iter().sum::<f64>();
        let rhs = total(&before) + before.delivered.iter().sum::<f64>() + report.arrived + scaled;
        assert!((lhs - rhs).abs() < 1e-9 * rhs.max(1.0), "seed {seed}: {lhs} vs {rhs}");
    }
}

#[test]
fn queues_stay_non_negative_in_both_modes() {
    for seed in 0..300 {
        let inst = random_instance(&mut rng(seed));
        for mode in MODES {
            let (_, _, _, after) = step_random(&inst, seed + 20_000, mode, 4);
            assert!(after.queues().iter().all(|&q| q >= 0.0), "seed {seed} {mode:?}");
        }
    }
}

fn delays(inst: &Instance, element: Element) -> cloudnet::model::ReconfigProfile {
    match element {
        Element::Node(n) => inst.net.node(n).reconfig,
        Element::Link(l) => inst.net.link(l).reconfig,
    }
}

#[test]
fn countdown_law_and_idle_elements_under_reconfiguration() {
    for seed in 0..300 {
        let inst = random_instance(&mut rng(seed));
        let (before, decision, report, after) = step_random(&inst, seed + 30_000, FlowMode::Actual, 4);
        let elements = inst
            .net
            .node_ids()
            .map(Element::Node)
            .chain(inst.net.link_ids().map(Element::Link));
        let mut expected_alloc = 0.0;
        let mut expected_eta = 0.0;
        for el in elements {
            let (prev, target, profile) = match el {
                Element::Node(n) => (before.node_schedule[n.0], decision.node_targets[n.0], &inst.net.node(n).processing),
                Element::Link(l) => (before.link_schedule[l.0], decision.link_targets[l.0], &inst.net.link(l).transmission),
            };
            let next = target.schedule;
            let changed = next.units != prev.units || (next.units > 0 && next.commodity != prev.commodity);
            let r = if changed {
                expected_eta += delays(&inst, el).cost;
                delays(&inst, el).delay
            } else {
                before.countdown(el).saturating_sub(1)
            };
            assert_eq!(after.countdown(el), r, "seed {seed} {el:?}");
            assert_eq!(after.schedule(el), next);
            if r > 0 {
                assert!(report.flows.iter().all(|f| f.element != el), "seed {seed}: {el:?} served while reconfiguring");
            } else if next.units > 0 {
                expected_alloc += profile.alloc_cost(next.units);
            }
        }
        assert!((report.cost.allocation - expected_alloc).abs() < 1e-9, "seed {seed}");
        assert!((report.cost.reconfiguration - expected_eta).abs() < 1e-9, "seed {seed}");
        assert_eq!(report.reconfiguring, after.reconfiguring_count());
    }
}

#[test]
fn flows_never_exceed_capacity_or_snapshot() {
    for seed in 0..300 {
        let inst = random_instance(&mut rng(seed));
        let (before, _, report, _) = step_random(&inst, seed + 40_000, FlowMode::Actual, 4);
        let mut drawn = std::collections::BTreeMap::<(usize, usize), f64>::new();
        for f in &report.flows {
            let (node, cap) = match f.element {
                Element::Node(n) => {
                    let rho = inst.commodities.get(f.commodity).rho_at(n).unwrap();
                    (n, inst.net.node(n).processing.max_capacity() / rho)
                }
                Element::Link(l) => (inst.net.link(l).src, inst.net.link(l).transmission.max_capacity()),
            };
            assert!(f.packets <= cap + 1e-12);
            *drawn.entry((node.0, f.commodity.0)).or_default() += f.packets;
        }
        for ((n, c), d) in drawn {
            assert!(d <= before.queue(NodeId(n), CommodityId(c)) + 1e-9, "seed {seed}: overdraw");
        }
    }
}

/// `(1 + max(1, ξ_max))·(a_max + C_max·(v_max + 1)) / ρ_min`, computed from
/// the raw instance.
fn gamma_oracle(inst: &Instance, a_max: f64) -> f64 {
    let c_max = inst
        .net
        .nodes()
        .iter()
        .map(|n| n.processing.max_capacity())
        .chain(inst.net.links().iter().map(|l| l.transmission.max_capacity()))
        .fold(0.0, f64::max);
    let mut degree = vec![(0usize, 0usize); inst.net.node_count()];
    for l in inst.net.links() {
        degree[l.src.0].0 += 1;
        degree[l.dst.0].1 += 1;
    }
    let v_max = degree.iter().map(|&(o, i)| o.max(i)).max().unwrap_or(0) as f64;
    let xi_max = inst.commodities.iter().map(|c| c.xi).fold(1.0, f64::max);
    let rho_min = inst
        .services
        .iter()
        .flat_map(|s| s.functions.iter().map(|f| f.rho))
        .fold(1.0, f64::min);
    (1.0 + xi_max) * (a_max + c_max * (v_max + 1.0)) / rho_min
}

fn link_differentials(inst: &Instance, s: &SimState) -> Vec<f64> {
    inst.net
        .links()
        .iter()
        .map(|l| {
            inst.commodities
                .ids()
                .map(|c| s.queue(l.src, c) - s.queue(l.dst, c))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn node_differentials(inst: &Instance, s: &SimState, v: f64) -> Vec<f64> {
    inst.net
        .node_ids()
        .map(|n| {
            let e = inst.net.node(n).processing.unit_flow_cost;
            inst.commodities
                .iter()
                .filter_map(|c| {
                    let succ = inst.commodities.get(c.successor?);
                    let rho = c.rho_at(n)?;
                    Some((s.queue(n, c.id) - succ.xi * s.queue(n, succ.id) - v * e).max(0.0) / rho)
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn per_slot_link_differential_change_is_bounded(seed in any::<u64>(), a_max in 0u32..6, nominal in any::<bool>()) {
        let inst = random_instance(&mut rng(seed));
        let mode = if nominal { FlowMode::Nominal } else { FlowMode::Actual };
        let (before, _, _, after) = step_random(&inst, seed ^ 0x5eed, mode, a_max);
        let gamma = gamma_oracle(&inst, a_max as f64);
        for (x, y) in link_differentials(&inst, &before).iter().zip(link_differentials(&inst, &after)) {
            prop_assert!((y - x).abs() <= gamma, "link change {} > {}", (y - x).abs(), gamma);
        }
    }

    /// With ρ < 1 or ξ > 1 one processing slot moves `C/ρ` packets out and
    /// `ξ·C/ρ` in, which the bound does not cover; see
    /// `node_bound_needs_unit_processing`.
    #[test]
    fn per_slot_node_differential_change_is_bounded(seed in any::<u64>(), a_max in 0u32..6, v in 0.0f64..20.0, nominal in any::<bool>()) {
        let inst = random_instance_with(&mut rng(seed), true);
        let mode = if nominal { FlowMode::Nominal } else { FlowMode::Actual };
        let (before, _, _, after) = step_random(&inst, seed ^ 0x5eed, mode, a_max);
        let gamma = gamma_oracle(&inst, a_max as f64);
        for (x, y) in node_differentials(&inst, &before, v).iter().zip(node_differentials(&inst, &after, v)) {
            prop_assert!((y - x).abs() <= gamma, "node change {} > {}", (y - x).abs(), gamma);
        }
    }

    #[test]
    fn library_gamma_matches_oracle(seed in any::<u64>(), a_max in 0u32..6) {
        let inst = random_instance(&mut rng(seed));
        let c = cloudnet::policies::lemma_constants(
            &inst.net,
            &inst.commodities,
            &cloudnet::policies::AdcncParams::new(1.0, Default::default()),
            10,
            a_max as f64,
        ).unwrap();
        prop_assert!((c.gamma_max - gamma_oracle(&inst, a_max as f64)).abs() < 1e-9);
    }
}

/// Profiles on a half-integer grid so every evaluation below is exact.
fn profile_strategy() -> impl Strategy<Value = ResourceProfile> {
    (prop::collection::vec((1u32..5, 1u32..9), 1..5), 0u32..5).prop_map(|(steps, e2)| {
        let mut capacity = vec![0.0];
        let mut cost = vec![0.0];
        for (dc, dw) in steps {
            capacity.push(capacity.last().unwrap() + dc as f64);
            cost.push(cost.last().unwrap() + dw as f64 / 2.0);
        }
        ResourceProfile::new(capacity, cost, e2 as f64 / 2.0)
    })
}

/// `F(x) = max_k { C(k)[x − V·e]^+ − V·w(k) }` through the link max-weight.
fn f_of(profile: &ResourceProfile, v: f64, x: f64) -> (f64, usize) {
    let best = transmission_max_weight(&[x], &[0.0], profile, v);
    (best.weight, best.units)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn f_is_lipschitz_in_c_max(profile in profile_strategy(), v2 in 0u32..40, x2 in -100i32..400, y2 in -100i32..400) {
        let v = v2 as f64 / 2.0;
        let (x, y) = (x2 as f64 / 2.0, y2 as f64 / 2.0);
        let (fx, _) = f_of(&profile, v, x);
        let (fy, _) = f_of(&profile, v, y);
        prop_assert!((fx - fy).abs() <= profile.max_capacity() * (x - y).abs());
    }

    #[test]
    fn f_is_positive_exactly_above_activation(profile in profile_strategy(), v2 in 0u32..40, x2 in -100i32..400) {
        let v = v2 as f64 / 2.0;
        let x = x2 as f64 / 2.0;
        // x > V(min_k w/C + e) ⇔ ∃k>0: C(k)(x − V·e) > V·w(k), since C(k) > 0
        let above = (1..=profile.max_units())
            .any(|k| profile.capacity(k) * (x - v * profile.unit_flow_cost) > v * profile.alloc_cost(k));
        let (f, k) = f_of(&profile, v, x);
        if above {
            prop_assert!(f > 0.0);
            prop_assert!(k > 0);
        } else {
            prop_assert_eq!(f, 0.0);
            prop_assert_eq!(k, 0);
        }
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let s = abilene_scenario(0.3, 0.3);
    let coms = s.commodities().unwrap();
    let arrivals = s.arrival_specs(&coms);
    let registry = PolicyRegistry::builtin();
    for name in registry.names() {
        let p = registry.create(name, &PolicyConfig::new(5.0)).unwrap();
        let cfg = |seed| RunConfig {
            horizon: 2000,
            seed,
            mode: FlowMode::Actual,
        };
        let a = run(&s.network, &coms, p.as_ref(), &arrivals, cfg(7)).unwrap();
        let b = run(&s.network, &coms, p.as_ref(), &arrivals, cfg(7)).unwrap();
        let c = run(&s.network, &coms, p.as_ref(), &arrivals, cfg(8)).unwrap();
        assert_eq!(a.series, b.series, "{name}");
        assert_eq!(a.final_state, b.final_state, "{name}");
        assert_ne!(a.series, c.series, "{name}");
    }
}

#[test]
fn zero_arrivals_leave_empty_network_idle() {
    let mut s = line_scenario(4, 0.0);
    for svc in &mut s.services {
        for c in &mut svc.clients {
            c.arrival = ArrivalProcess::zero();
        }
    }
    s.set_reconfig(Some(3), Some(2.0));
    let coms = s.commodities().unwrap();
    let arrivals = s.arrival_specs(&coms);
    let registry = PolicyRegistry::builtin();
    for name in registry.names() {
        for v in [0.0, 5.0] {
            let p = registry.create(name, &PolicyConfig::new(v)).unwrap();
            let out = run(
                &s.network,
                &coms,
                p.as_ref(),
                &arrivals,
                RunConfig {
                    horizon: 200,
                    seed: 1,
                    mode: FlowMode::Actual,
                },
            )
            .unwrap();
            assert!(out.series.iter().all(|t| t.total_queue == 0.0 && t.cost.total() == 0.0), "{name}");
            assert_eq!(out.final_state, {
                let mut e = SimState::empty(&s.network, &coms);
                e.t = 200;
                e
            });
        }
    }
}

#[test]
fn policies_emit_admissible_decisions_from_random_states() {
    let registry = PolicyRegistry::builtin();
    for seed in 0..200 {
        let inst = random_instance(&mut rng(seed));
        let state = random_state(&mut rng(seed + 1), &inst);
        let sim = Simulator::new(&inst.net, &inst.commodities, FlowMode::Actual).unwrap();
        for name in registry.names() {
            let p = registry.create(name, &PolicyConfig::new(2.0)).unwrap();
            let d = p.decide(&state, &inst.net, &inst.commodities);
            sim.check_decision(&d).unwrap();
            assert_eq!(p.decide(&state, &inst.net, &inst.commodities), d, "{name} is not a pure function");
            sim.step(&state, &d, &Arrivals::default()).unwrap();
        }
    }
}

#[test]
fn node_bound_needs_unit_processing() {
    use cloudnet::engine::{PolicyDecision, Schedule, Target};
    use cloudnet::model::{Client, CloudNetwork, Link, Node, ReconfigProfile, ServiceChain, ServiceFunction};
    let node = |name: &str| Node {
        name: name.into(),
        processing: ResourceProfile::linear(1, 0.0),
        reconfig: ReconfigProfile::default(),
    };
    let net = CloudNetwork::new(
        vec![node("a"), node("b")],
        vec![Link {
            src: NodeId(0),
            dst: NodeId(1),
            transmission: ResourceProfile::linear(1, 0.0),
            reconfig: ReconfigProfile::default(),
        }],
    );
    let services = vec![ServiceChain {
        id: "s".into(),
        functions: vec![ServiceFunction::new(2.0, 0.5)],
        clients: vec![Client {
            source: NodeId(0),
            destination: NodeId(1),
            arrival: ArrivalProcess::zero(),
        }],
    }];
    let inst = Instance {
        commodities: cloudnet::build_commodities(&services).unwrap(),
        net,
        services,
    };
    // (1 + 2)·(0 + 1·(1 + 1)) / 0.5
    assert_eq!(gamma_oracle(&inst, 0.0), 12.0);
    let mut state = SimState::empty(&inst.net, &inst.commodities);
    state.set_queue(NodeId(0), CommodityId(0), 10.0);
    state.node_schedule[0] = Schedule::new(1, CommodityId(0));
    let decision = PolicyDecision {
        node_targets: vec![Target::from(Schedule::new(1, CommodityId(0))), Target::from(Schedule::IDLE)],
        link_targets: vec![Target::from(Schedule::IDLE)],
    };
    let sim = Simulator::new(&inst.net, &inst.commodities, FlowMode::Actual).unwrap();
    let (next, _) = sim.step(&state, &decision, &Arrivals::default()).unwrap();
    // 2 packets drained, 4 produced: (10 − 0)/0.5 → (8 − 2·4)/0.5
    let before = node_differentials(&inst, &state, 0.0)[0];
    let after = node_differentials(&inst, &next, 0.0)[0];
    assert_eq!((before, after), (20.0, 0.0));
    assert!((before - after).abs() > gamma_oracle(&inst, 0.0));
}
