//! Capacity region and minimum average cost as linear programs.
//!
//! Time-share products `α_k·β_k^c` are replaced by joint variables
//! `p_{k,c}`, which keeps the characterization linear and exact. The
//! program never reads reconfiguration profiles.

use std::collections::BTreeMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use thiserror::Error;

use crate::model::{CloudNetwork, CommodityId, CommoditySet, LinkId, NodeId};

/// Slack added to the time-share budgets `Σ_k α_k ≤ 1` before solving.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

/// Absolute tolerance of [`max_throughput_scale`].
pub const SCALE_TOLERANCE: f64 = 1e-3;

/// Mean exogenous arrival rate per `(node, commodity)`.
pub type Rates = BTreeMap<(NodeId, CommodityId), f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("rate for unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("rate for unknown commodity {0:?}")]
    UnknownCommodity(CommodityId),
    #[error("rate {rate} at ({node:?}, {commodity:?}) must be finite and non-negative")]
    InvalidRate {
        node: NodeId,
        commodity: CommodityId,
        rate: f64,
    },
    #[error("arrival rates lie outside the capacity region")]
    Infeasible,
    #[error("LP solver failed: {0}")]
    Solver(String),
    #[error("direction must be non-zero")]
    ZeroDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Packets of `commodity` processed at `node` per slot.
    ProcessingFlow { node: NodeId, commodity: CommodityId },
    TransmissionFlow { link: LinkId, commodity: CommodityId },
    /// Fraction of time `node` runs `k` units.
    NodeShare { node: NodeId, k: usize },
    LinkShare { link: LinkId, k: usize },
    /// Fraction of time `node` runs `k` units on `commodity`.
    NodeJoint { node: NodeId, k: usize, commodity: CommodityId },
    LinkJoint { link: LinkId, k: usize, commodity: CommodityId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Inflow plus arrivals do not exceed outflow.
    Conservation { node: NodeId, commodity: CommodityId },
    ProcessingCapacity { node: NodeId, commodity: CommodityId },
    TransmissionCapacity { link: LinkId, commodity: CommodityId },
    /// `Σ_c p_{k,c} = α_k`.
    NodeSplit { node: NodeId, k: usize },
    LinkSplit { link: LinkId, k: usize },
    /// `Σ_k α_k ≤ 1`.
    NodeBudget { node: NodeId },
    LinkBudget { link: LinkId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOp {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub kind: RowKind,
    pub terms: Vec<(usize, f64)>,
    pub op: RowOp,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityProgram {
    pub variables: Vec<Variable>,
    pub rows: Vec<Row>,
    node_count: usize,
    commodity_count: usize,
}

impl CapacityProgram {
    pub fn count_vars(&self, pred: impl Fn(&VarKind) -> bool) -> usize {
        self.variables.iter().filter(|v| pred(&v.kind)).count()
    }

    pub fn count_rows(&self, pred: impl Fn(&RowKind) -> bool) -> usize {
        self.rows.iter().filter(|r| pred(&r.kind)).count()
    }

    fn flow_index(&self, node: NodeId, c: CommodityId) -> usize {
        node.0 * self.commodity_count + c.0
    }

    fn link_flow_index(&self, link: LinkId, c: CommodityId) -> usize {
        self.node_count * self.commodity_count + link.0 * self.commodity_count + c.0
    }
}

/// Builds the program for arrival rates `rates`.
///
/// Variable layout: processing flows (node-major), transmission flows
/// (link-major), then per element its shares `α_k` followed by the joint
/// variables `p_{k,c}`.
pub fn build_program(net: &CloudNetwork, commodities: &CommoditySet, rates: &Rates) -> Result<CapacityProgram, CapacityError> {
    for (&(node, c), &rate) in rates {
        if node.0 >= net.node_count() {
            return Err(CapacityError::UnknownNode(node));
        }
        if c.0 >= commodities.len() {
            return Err(CapacityError::UnknownCommodity(c));
        }
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(CapacityError::InvalidRate { node, commodity: c, rate });
        }
    }
    let nc = commodities.len();
    let mut variables = Vec::new();
    for node in net.node_ids() {
        for com in commodities.iter() {
            variables.push(Variable {
                kind: VarKind::ProcessingFlow { node, commodity: com.id },
                upper: if com.is_final() { 0.0 } else { f64::INFINITY },
                cost: 0.0,
            });
        }
    }
    for link in net.link_ids() {
        for c in commodities.ids() {
            variables.push(Variable {
                kind: VarKind::TransmissionFlow { link, commodity: c },
                upper: f64::INFINITY,
                cost: 0.0,
            });
        }
    }
    let mut program = CapacityProgram {
        variables,
        rows: Vec::new(),
        node_count: net.node_count(),
        commodity_count: nc,
    };

    for node in net.node_ids() {
        let profile = &net.node(node).processing;
        let mut coupling: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
        let mut budget = Vec::new();
        for k in 1..=profile.max_units() {
            let alpha = program.variables.len();
            program.variables.push(Variable {
                kind: VarKind::NodeShare { node, k },
                upper: f64::INFINITY,
                cost: profile.alloc_cost(k),
            });
            budget.push((alpha, 1.0));
            let mut split = vec![(alpha, -1.0)];
            for com in commodities.iter() {
                let Some(rho) = com.rho_at(node) else { continue };
                let p = program.variables.len();
                program.variables.push(Variable {
                    kind: VarKind::NodeJoint { node, k, commodity: com.id },
                    upper: f64::INFINITY,
                    cost: profile.unit_flow_cost * profile.capacity(k) / rho,
                });
                split.push((p, 1.0));
                coupling[com.id.0].push((p, -profile.capacity(k) / rho));
            }
            program.rows.push(Row {
                kind: RowKind::NodeSplit { node, k },
                terms: split,
                op: RowOp::Eq,
                rhs: 0.0,
            });
        }
        for com in commodities.iter().filter(|c| !c.is_final()) {
            let mut terms = vec![(program.flow_index(node, com.id), 1.0)];
            terms.extend(coupling[com.id.0].iter().copied());
            program.rows.push(Row {
                kind: RowKind::ProcessingCapacity { node, commodity: com.id },
                terms,
                op: RowOp::Le,
                rhs: 0.0,
            });
        }
        program.rows.push(Row {
            kind: RowKind::NodeBudget { node },
            terms: budget,
            op: RowOp::Le,
            rhs: 1.0,
        });
    }

    for link in net.link_ids() {
        let profile = &net.link(link).transmission;
        let mut coupling: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
        let mut budget = Vec::new();
        for k in 1..=profile.max_units() {
            let alpha = program.variables.len();
            program.variables.push(Variable {
                kind: VarKind::LinkShare { link, k },
                upper: f64::INFINITY,
                cost: profile.alloc_cost(k),
            });
            budget.push((alpha, 1.0));
            let mut split = vec![(alpha, -1.0)];
            for c in commodities.ids() {
                let p = program.variables.len();
                program.variables.push(Variable {
                    kind: VarKind::LinkJoint { link, k, commodity: c },
                    upper: f64::INFINITY,
                    cost: profile.unit_flow_cost * profile.capacity(k),
                });
                split.push((p, 1.0));
                coupling[c.0].push((p, -profile.capacity(k)));
            }
            program.rows.push(Row {
                kind: RowKind::LinkSplit { link, k },
                terms: split,
                op: RowOp::Eq,
                rhs: 0.0,
            });
        }
        for c in commodities.ids() {
            let mut terms = vec![(program.link_flow_index(link, c), 1.0)];
            terms.extend(coupling[c.0].iter().copied());
            program.rows.push(Row {
                kind: RowKind::TransmissionCapacity { link, commodity: c },
                terms,
                op: RowOp::Le,
                rhs: 0.0,
            });
        }
        program.rows.push(Row {
            kind: RowKind::LinkBudget { link },
            terms: budget,
            op: RowOp::Le,
            rhs: 1.0,
        });
    }

    for node in net.node_ids() {
        for com in commodities.iter() {
            if com.absorbed_at(node) {
                continue;
            }
            let c = com.id;
            let mut terms = Vec::new();
            for &l in net.incoming(node) {
                terms.push((program.link_flow_index(l, c), 1.0));
            }
            if let Some(pred) = com.predecessor {
                terms.push((program.flow_index(node, pred), com.xi));
            }
            for &l in net.outgoing(node) {
                terms.push((program.link_flow_index(l, c), -1.0));
            }
            terms.push((program.flow_index(node, c), -1.0));
            let lambda = rates.get(&(node, c)).copied().unwrap_or(0.0);
            program.rows.push(Row {
                kind: RowKind::Conservation { node, commodity: c },
                terms,
                op: RowOp::Le,
                rhs: -lambda,
            });
        }
    }
    Ok(program)
}

/// Optimal point of the min-cost program.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `[node][commodity]`
    pub processing_flow: Vec<Vec<f64>>,
    /// `[link][commodity]`
    pub transmission_flow: Vec<Vec<f64>>,
    /// `[node][k]`, with `k = 0` left at zero.
    pub node_shares: Vec<Vec<f64>>,
    pub link_shares: Vec<Vec<f64>>,
    /// `[node][k][commodity]`
    pub node_joint: Vec<Vec<Vec<f64>>>,
    pub link_joint: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCost {
    pub value: f64,
    pub allocation: Allocation,
}

fn solve(program: &CapacityProgram, minimize_cost: bool) -> Result<Vec<f64>, CapacityError> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = program
        .variables
        .iter()
        .map(|v| lp.add_var(if minimize_cost { v.cost } else { 0.0 }, (0.0, v.upper)))
        .collect();
    for row in &program.rows {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, a) in &row.terms {
            *merged.entry(i).or_insert(0.0) += a;
        }
        let expr: Vec<_> = merged.into_iter().map(|(i, a)| (vars[i], a)).collect();
        match row.op {
            RowOp::Le => {
                let slack = match row.kind {
                    RowKind::NodeBudget { .. } | RowKind::LinkBudget { .. } => FEASIBILITY_TOLERANCE,
                    _ => 0.0,
                };
                lp.add_constraint(expr.as_slice(), ComparisonOp::Le, row.rhs + slack)
            }
            RowOp::Eq => lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, row.rhs),
        }
    }
    match lp.solve() {
        Ok(sol) => Ok(vars.iter().map(|v| *sol.var_value(*v)).collect()),
        Err(minilp::Error::Infeasible) => Err(CapacityError::Infeasible),
        Err(e) => Err(CapacityError::Solver(e.to_string())),
    }
}

/// Whether `rates` lies in the capacity region.
pub fn is_feasible(net: &CloudNetwork, commodities: &CommoditySet, rates: &Rates) -> Result<bool, CapacityError> {
    let program = build_program(net, commodities, rates)?;
    match solve(&program, false) {
        Ok(_) => Ok(true),
        Err(CapacityError::Infeasible) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Minimum time-average cost `h*` of supporting `rates`.
pub fn min_cost(net: &CloudNetwork, commodities: &CommoditySet, rates: &Rates) -> Result<MinCost, CapacityError> {
    let program = build_program(net, commodities, rates)?;
    let x = solve(&program, true)?;
    let value = program.variables.iter().zip(&x).map(|(v, x)| v.cost * x).sum();
    let nc = commodities.len();
    let units = |k: usize| vec![0.0; k + 1];
    let mut a = Allocation {
        processing_flow: vec![vec![0.0; nc]; net.node_count()],
        transmission_flow: vec![vec![0.0; nc]; net.link_count()],
        node_shares: net.nodes().iter().map(|n| units(n.processing.max_units())).collect(),
        link_shares: net.links().iter().map(|l| units(l.transmission.max_units())).collect(),
        node_joint: net
            .nodes()
            .iter()
            .map(|n| vec![vec![0.0; nc]; n.processing.max_units() + 1])
            .collect(),
        link_joint: net
            .links()
            .iter()
            .map(|l| vec![vec![0.0; nc]; l.transmission.max_units() + 1])
            .collect(),
    };
    for (v, &x) in program.variables.iter().zip(&x) {
        match v.kind {
            VarKind::ProcessingFlow { node, commodity } => a.processing_flow[node.0][commodity.0] = x,
            VarKind::TransmissionFlow { link, commodity } => a.transmission_flow[link.0][commodity.0] = x,
            VarKind::NodeShare { node, k } => a.node_shares[node.0][k] = x,
            VarKind::LinkShare { link, k } => a.link_shares[link.0][k] = x,
            VarKind::NodeJoint { node, k, commodity } => a.node_joint[node.0][k][commodity.0] = x,
            VarKind::LinkJoint { link, k, commodity } => a.link_joint[link.0][k][commodity.0] = x,
        }
    }
    Ok(MinCost { value, allocation: a })
}

/// Largest `t` with `t·direction` feasible, to [`SCALE_TOLERANCE`].
///
/// Returns `f64::INFINITY` when no finite bound exists below `2^40`.
pub fn max_throughput_scale(
    net: &CloudNetwork,
    commodities: &CommoditySet,
    direction: &Rates,
) -> Result<f64, CapacityError> {
    if direction.values().all(|r| *r == 0.0) {
        return Err(CapacityError::ZeroDirection);
    }
    let scaled = |t: f64| -> Rates { direction.iter().map(|(k, r)| (*k, r * t)).collect() };
    let feasible = |t: f64| is_feasible(net, commodities, &scaled(t));
    let mut lo = 0.0;
    let mut hi = 1.0;
    while feasible(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > (1u64 << 40) as f64 {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > SCALE_TOLERANCE / 2.0 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
