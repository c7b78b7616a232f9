//! Max-utility weights and the per-element adaptive reconfiguration rules.
//!
//! A link `(i, j)` scores commodity `c` at `k` units as
//! `C(k)·[Q_i^c − Q_j^c − V·e]^+ − V·w(k)`; a node scores
//! `(C(k)/ρ_i^c)·[Q_i^c − ξ^{c+}·Q_i^{c+} − V·e]^+ − V·w(k)` over commodities
//! that have a successor.

use serde::{Deserialize, Serialize};

use crate::engine::{ReconfigKind, Schedule, Target};
use crate::model::{CommodityId, CommoditySet, NodeId, ResourceProfile};

/// `g(x) = a·x^b` on `x ≥ 0`, zero for `x ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublinearG {
    pub scale: f64,
    pub exponent: f64,
}

impl Default for SublinearG {
    fn default() -> Self {
        Self {
            scale: 0.99,
            exponent: 0.99,
        }
    }
}

impl SublinearG {
    pub fn new(scale: f64, exponent: f64) -> Result<Self, String> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(format!("g scale must be positive, got {scale}"));
        }
        if !(exponent > 0.0 && exponent < 1.0) {
            return Err(format!("g exponent must lie in (0, 1), got {exponent}"));
        }
        Ok(Self { scale, exponent })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.scale * x.powf(self.exponent)
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else {
            (y / self.scale).powf(1.0 / self.exponent)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcncParams {
    pub v: f64,
    pub g: SublinearG,
}

impl AdcncParams {
    pub fn new(v: f64, g: SublinearG) -> Self {
        Self { v, g }
    }
}

/// Maximizer of a max-utility weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxWeight {
    pub weight: f64,
    pub units: usize,
    /// `None` only when no commodity is eligible.
    pub commodity: Option<CommodityId>,
}

impl MaxWeight {
    pub fn schedule(&self) -> Schedule {
        match self.commodity {
            Some(c) => Schedule::new(self.units, c),
            None => Schedule::IDLE,
        }
    }
}

/// Maximizes `C(k)·x_c − V·w(k)` where `x_c = clamped_c / ratio_c`.
///
/// For every `k > 0` the weight is non-decreasing in `x_c`, so the commodity
/// with the largest `x_c` attains the maximum for all `k` at once. When no
/// commodity has positive `x_c` (and so `k* = 0`), the commodity with the
/// largest raw differential is reported. Remaining ties go to the smallest
/// commodity id, and ties in `k` to the smallest `k`.
fn maximize(
    profile: &ResourceProfile,
    v: f64,
    candidates: impl Iterator<Item = (CommodityId, f64, f64)>,
) -> MaxWeight {
    let ve = v * profile.unit_flow_cost;
    let mut best: Option<(CommodityId, f64, f64)> = None;
    for (c, diff, ratio) in candidates {
        let x = (diff - ve).max(0.0) / ratio;
        let better = match best {
            None => true,
            Some((_, bx, bd)) => x > bx || (x == bx && diff > bd),
        };
        if better {
            best = Some((c, x, diff));
        }
    }
    let Some((c, x, _)) = best else {
        return MaxWeight {
            weight: 0.0,
            units: 0,
            commodity: None,
        };
    };
    let mut weight = 0.0;
    let mut units = 0;
    for k in 1..=profile.max_units() {
        let w = profile.capacity(k) * x - v * profile.alloc_cost(k);
        if w > weight {
            weight = w;
            units = k;
        }
    }
    MaxWeight {
        weight,
        units,
        commodity: Some(c),
    }
}

/// Transmission max-utility weight of a link given the backlogs at its two
/// endpoints (indexed by commodity id).
pub fn transmission_max_weight(qi: &[f64], qj: &[f64], profile: &ResourceProfile, v: f64) -> MaxWeight {
    maximize(
        profile,
        v,
        qi.iter()
            .zip(qj)
            .enumerate()
            .map(|(c, (a, b))| (CommodityId(c), a - b, 1.0)),
    )
}

/// Weight of keeping `schedule` on a link.
pub fn transmission_current_weight(
    qi: &[f64],
    qj: &[f64],
    profile: &ResourceProfile,
    v: f64,
    schedule: Schedule,
) -> f64 {
    match schedule.commodity {
        Some(c) if schedule.units > 0 => {
            let diff = qi[c.0] - qj[c.0] - v * profile.unit_flow_cost;
            profile.capacity(schedule.units) * diff.max(0.0) - v * profile.alloc_cost(schedule.units)
        }
        _ => 0.0,
    }
}

fn processing_differential(q: &[f64], commodities: &CommoditySet, c: CommodityId) -> Option<f64> {
    let succ = commodities.get(c).successor?;
    Some(q[c.0] - commodities.get(succ).xi * q[succ.0])
}

/// `Q^c − Q^{c+}` without the scaling factor, as used by the thresholds.
fn plain_differential(q: &[f64], commodities: &CommoditySet, c: CommodityId) -> f64 {
    match commodities.get(c).successor {
        Some(s) => q[c.0] - q[s.0],
        None => 0.0,
    }
}

/// Processing max-utility weight at `node`; final-stage commodities are not
/// candidates.
pub fn processing_max_weight(
    q: &[f64],
    node: NodeId,
    profile: &ResourceProfile,
    v: f64,
    commodities: &CommoditySet,
) -> MaxWeight {
    maximize(
        profile,
        v,
        commodities.ids().filter_map(|c| {
            let diff = processing_differential(q, commodities, c)?;
            let rho = commodities.get(c).rho_at(node)?;
            Some((c, diff, rho))
        }),
    )
}

pub fn processing_current_weight(
    q: &[f64],
    node: NodeId,
    profile: &ResourceProfile,
    v: f64,
    schedule: Schedule,
    commodities: &CommoditySet,
) -> f64 {
    let (Some(c), true) = (schedule.commodity, schedule.units > 0) else {
        return 0.0;
    };
    let (Some(diff), Some(rho)) = (processing_differential(q, commodities, c), commodities.get(c).rho_at(node)) else {
        return 0.0;
    };
    let clamped = (diff - v * profile.unit_flow_cost).max(0.0);
    profile.capacity(schedule.units) / rho * clamped - v * profile.alloc_cost(schedule.units)
}

/// Reconfiguration threshold in use for the adaptive rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hysteresis {
    /// `θ = g(C(k̄)·differential of c*)`, clamped at zero.
    Adaptive(SublinearG),
    /// `θ = −∞`: always adopt the maximizer.
    Disabled,
}

impl Hysteresis {
    fn threshold(&self, arg: f64) -> f64 {
        match self {
            Hysteresis::Adaptive(g) => g.eval(arg.max(0.0)),
            Hysteresis::Disabled => f64::NEG_INFINITY,
        }
    }
}

/// Adopts the link maximizer iff the weight gain over the current schedule
/// exceeds the threshold.
pub fn adcnc_link_decide(
    qi: &[f64],
    qj: &[f64],
    profile: &ResourceProfile,
    v: f64,
    hysteresis: Hysteresis,
    schedule: Schedule,
) -> Schedule {
    let best = transmission_max_weight(qi, qj, profile, v);
    let current = transmission_current_weight(qi, qj, profile, v, schedule);
    let gain = best.weight - current;
    let theta = match best.commodity {
        Some(c) => hysteresis.threshold(profile.capacity(schedule.units) * (qi[c.0] - qj[c.0])),
        None => hysteresis.threshold(0.0),
    };
    if gain > theta {
        best.schedule()
    } else {
        schedule
    }
}

pub fn adcnc_node_decide(
    q: &[f64],
    node: NodeId,
    profile: &ResourceProfile,
    v: f64,
    hysteresis: Hysteresis,
    schedule: Schedule,
    commodities: &CommoditySet,
) -> Schedule {
    let best = processing_max_weight(q, node, profile, v, commodities);
    let current = processing_current_weight(q, node, profile, v, schedule, commodities);
    let gain = best.weight - current;
    let theta = match best.commodity {
        Some(c) => hysteresis.threshold(profile.capacity(schedule.units) * plain_differential(q, commodities, c)),
        None => hysteresis.threshold(0.0),
    };
    if gain > theta {
        best.schedule()
    } else {
        schedule
    }
}

/// Threshold of the first, full-reconfiguration stage of the two-stage rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstStage {
    /// The ADCNC threshold `g(C(k̄)·differential of c*)`.
    #[default]
    Adcnc,
    /// `g(W*)`.
    MaxWeight,
}

impl FirstStage {
    fn threshold(self, g: SublinearG, best: &MaxWeight, current_capacity: f64, differential: impl Fn(CommodityId) -> f64) -> f64 {
        match self {
            FirstStage::Adcnc => best.commodity.map_or(0.0, |c| g.eval(current_capacity * differential(c))),
            FirstStage::MaxWeight => g.eval(best.weight),
        }
    }
}

/// Two-stage rule shared by nodes and links: adopt the maximizer when the
/// weight gain beats the first-stage threshold, otherwise switch only the
/// commodity when the backlog-differential gain beats `g` of the
/// maximizer's differential.
///
/// Any change that keeps the allocated units is flagged
/// [`ReconfigKind::CommodityOnly`].
fn two_stage(
    best: MaxWeight,
    current_weight: f64,
    theta: f64,
    g: SublinearG,
    schedule: Schedule,
    differential: impl Fn(CommodityId) -> f64,
) -> Target {
    let kind_for = |next: Schedule| {
        if next.units == schedule.units && next.units > 0 {
            ReconfigKind::CommodityOnly
        } else {
            ReconfigKind::Full
        }
    };
    if best.weight - current_weight > theta {
        let next = best.schedule();
        return Target {
            schedule: next,
            kind: kind_for(next),
        };
    }
    let (Some(c_star), Some(c_bar)) = (best.commodity, schedule.commodity) else {
        return schedule.into();
    };
    if schedule.units == 0 || c_star == c_bar {
        return schedule.into();
    }
    let star = differential(c_star).max(0.0);
    let delta_q = star - differential(c_bar).max(0.0);
    if delta_q > g.eval(star) {
        Target {
            schedule: Schedule::new(schedule.units, c_star),
            kind: ReconfigKind::CommodityOnly,
        }
    } else {
        schedule.into()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn two_stage_node_decide(
    q: &[f64],
    node: NodeId,
    profile: &ResourceProfile,
    params: &AdcncParams,
    first: FirstStage,
    schedule: Schedule,
    commodities: &CommoditySet,
) -> Target {
    let best = processing_max_weight(q, node, profile, params.v, commodities);
    let current = processing_current_weight(q, node, profile, params.v, schedule, commodities);
    let differential = |c| plain_differential(q, commodities, c);
    let theta = first.threshold(params.g, &best, profile.capacity(schedule.units), differential);
    two_stage(best, current, theta, params.g, schedule, differential)
}

pub fn two_stage_link_decide(
    qi: &[f64],
    qj: &[f64],
    profile: &ResourceProfile,
    params: &AdcncParams,
    first: FirstStage,
    schedule: Schedule,
) -> Target {
    let best = transmission_max_weight(qi, qj, profile, params.v);
    let current = transmission_current_weight(qi, qj, profile, params.v, schedule);
    let differential = |c: CommodityId| qi[c.0] - qj[c.0];
    let theta = first.threshold(params.g, &best, profile.capacity(schedule.units), differential);
    two_stage(best, current, theta, params.g, schedule, differential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::ArrivalProcess;
    use crate::model::{build_commodities, Client, ServiceChain, ServiceFunction};

    fn unit(e: f64) -> ResourceProfile {
        ResourceProfile::new(vec![0.0, 1.0], vec![0.0, 1.0], e)
    }

    fn g() -> SublinearG {
        SublinearG::default()
    }

    /// One service with `functions` stages of scaling factor `xi`.
    fn chain(functions: usize, xi: f64) -> CommoditySet {
        build_commodities(&[ServiceChain {
            id: "s".into(),
            functions: vec![ServiceFunction::new(xi, 1.0); functions],
            clients: vec![Client {
                source: NodeId(0),
                destination: NodeId(1),
                arrival: ArrivalProcess::zero(),
            }],
        }])
        .unwrap()
    }

    #[test]
    fn g_closed_form_inverse() {
        let g = g();
        assert_eq!(g.eval(0.0), 0.0);
        assert_eq!(g.eval(-3.0), 0.0);
        for x in [0.5, 1.0, 10.0, 1234.5] {
            assert!((g.inverse(g.eval(x)) - x).abs() < 1e-9 * x.max(1.0));
        }
        assert!(SublinearG::new(1.0, 1.0).is_err());
        assert!(SublinearG::new(0.0, 0.5).is_err());
    }

    #[test]
    fn equal_queues_give_zero_weight() {
        let q = [3.0, 7.0];
        let m = transmission_max_weight(&q, &q, &unit(1.0), 5.0);
        assert_eq!((m.weight, m.units), (0.0, 0));
    }

    #[test]
    fn transmission_weight_above_threshold() {
        let m = transmission_max_weight(&[12.0], &[0.0], &unit(1.0), 5.0);
        assert_eq!((m.weight, m.units, m.commodity), (2.0, 1, Some(CommodityId(0))));
    }

    #[test]
    fn transmission_weight_below_threshold() {
        // 1·(9−5)−5 = −1 < 0; threshold V·(w/C + e) = 10
        let m = transmission_max_weight(&[9.0], &[0.0], &unit(1.0), 5.0);
        assert_eq!((m.weight, m.units), (0.0, 0));
        assert_eq!(unit(1.0).activation_threshold(5.0), Some(10.0));
    }

    #[test]
    fn current_weight_cases() {
        let p = unit(1.0);
        assert_eq!(transmission_current_weight(&[12.0], &[0.0], &p, 5.0, Schedule::IDLE), 0.0);
        let s = Schedule::new(1, CommodityId(0));
        assert_eq!(transmission_current_weight(&[12.0], &[0.0], &p, 5.0, s), 2.0);
        assert_eq!(transmission_current_weight(&[4.0], &[0.0], &p, 5.0, s), -5.0);
    }

    #[test]
    fn link_keeps_maximizer() {
        let p = unit(1.0);
        let s = Schedule::new(1, CommodityId(0));
        let h = Hysteresis::Adaptive(g());
        assert_eq!(adcnc_link_decide(&[30.0, 1.0], &[0.0, 0.0], &p, 5.0, h, s), s);
    }

    #[test]
    fn idle_link_has_zero_threshold() {
        let p = unit(1.0);
        let h = Hysteresis::Adaptive(g());
        // gain 2 > θ = g(C(0)·12) = 0
        let next = adcnc_link_decide(&[12.0], &[0.0], &p, 5.0, h, Schedule::IDLE);
        assert_eq!(next, Schedule::new(1, CommodityId(0)));
    }

    #[test]
    fn large_backlog_suppresses_switch() {
        // current c1 with diff 998 vs c0 with diff 1000, e = 0:
        // W* = 1000 − 5, W = 998 − 5, ΔW = 2 < θ = 0.99·1000^0.99 ≈ 924
        let p = unit(0.0);
        let s = Schedule::new(1, CommodityId(1));
        let theta = g().eval(1000.0);
        assert!((theta - 923.92).abs() < 0.01, "θ = {theta}");
        let h = Hysteresis::Adaptive(g());
        assert_eq!(adcnc_link_decide(&[1000.0, 998.0], &[0.0, 0.0], &p, 5.0, h, s), s);
        // without hysteresis the maximizer wins
        assert_eq!(
            adcnc_link_decide(&[1000.0, 998.0], &[0.0, 0.0], &p, 5.0, Hysteresis::Disabled, s),
            Schedule::new(1, CommodityId(0))
        );
    }

    #[test]
    fn processing_weight_cases() {
        let coms = chain(1, 1.0);
        let p = unit(1.0);
        let m = processing_max_weight(&[0.0, 0.0], NodeId(0), &p, 5.0, &coms);
        assert_eq!((m.weight, m.units), (0.0, 0));
        let m = processing_max_weight(&[12.0, 0.0], NodeId(0), &p, 5.0, &coms);
        assert_eq!((m.weight, m.units, m.commodity), (2.0, 1, Some(CommodityId(0))));

        let coms = chain(1, 2.0);
        // 12 − 2·6 = 0 ⇒ k* = 0
        let m = processing_max_weight(&[12.0, 6.0], NodeId(0), &p, 5.0, &coms);
        assert_eq!((m.weight, m.units), (0.0, 0));
    }

    #[test]
    fn node_decide_cases() {
        let coms = chain(2, 1.0);
        let p = unit(0.0);
        let h = Hysteresis::Adaptive(g());
        let s = Schedule::new(1, CommodityId(0));
        assert_eq!(adcnc_node_decide(&[50.0, 0.0, 0.0], NodeId(0), &p, 5.0, h, s, &coms), s);
        assert_eq!(
            adcnc_node_decide(&[50.0, 0.0, 0.0], NodeId(0), &p, 5.0, h, Schedule::IDLE, &coms),
            s
        );
        // c1 has differential 1000, current c0 has 998: ΔW = 2 ≪ θ
        let q = [1998.0, 1000.0, 0.0];
        assert_eq!(adcnc_node_decide(&q, NodeId(0), &p, 5.0, h, Schedule::new(1, CommodityId(0)), &coms).commodity, Some(CommodityId(0)));
    }

    #[test]
    fn two_stage_cases() {
        let coms = chain(2, 1.0);
        let p = unit(0.0);
        let params = AdcncParams::new(5.0, g());
        // c* = c̄ ⇒ no stage-2 switch
        let s = Schedule::new(1, CommodityId(0));
        let t = two_stage_node_decide(&[40.0, 0.0, 0.0], NodeId(0), &p, &params, FirstStage::Adcnc, s, &coms);
        assert_eq!(t.schedule, s);
        // idle with a big weight: full reconfiguration
        let t = two_stage_node_decide(&[40.0, 0.0, 0.0], NodeId(0), &p, &params, FirstStage::Adcnc, Schedule::IDLE, &coms);
        assert_eq!((t.schedule, t.kind), (s, ReconfigKind::Full));
        // a stage-1 switch that keeps the units is commodity-only
        let t = two_stage_node_decide(&[1.0, 60.0, 0.0], NodeId(0), &p, &params, FirstStage::Adcnc, s, &coms);
        assert_eq!((t.schedule, t.kind), (Schedule::new(1, CommodityId(1)), ReconfigKind::CommodityOnly));
    }

    #[test]
    fn two_stage_second_stage() {
        // ξ = 0.5 separates the weighted differential (weights) from the plain
        // one (stage 2). V = 0 so weights equal weighted differentials.
        let coms = chain(2, 0.5);
        let p = unit(0.0);
        let params = AdcncParams::new(0.0, g());
        let s = Schedule::new(1, CommodityId(0));
        assert!((g().eval(60.0) - 57.02).abs() < 0.01);
        // weighted: c0 = 70 − 30 = 40, c1 = 60 ⇒ ΔW = 20 ≤ g(60); plain ΔQ = 60 − 10 = 50 ≤ g(60) ≈ 57.0
        let t = two_stage_node_decide(&[70.0, 60.0, 0.0], NodeId(0), &p, &params, FirstStage::Adcnc, s, &coms);
        assert_eq!(t.schedule, s);
        // weighted: c0 = 50 − 30 = 20 ⇒ ΔW = 40 ≤ g(60); plain ΔQ = 60 − 0 = 60 > 57.0
        let t = two_stage_node_decide(&[50.0, 60.0, 0.0], NodeId(0), &p, &params, FirstStage::Adcnc, s, &coms);
        assert_eq!((t.schedule, t.kind), (Schedule::new(1, CommodityId(1)), ReconfigKind::CommodityOnly));
    }

    #[test]
    fn first_stage_variants_differ_on_turn_off() {
        let coms = chain(2, 1.0);
        let p = unit(0.0);
        let params = AdcncParams::new(5.0, g());
        let s = Schedule::new(1, CommodityId(0));
        // W* = 0 (3 < V), current = 3 − 5, gain 2: g(W*) = 0 releases, g(3) ≈ 2.94 keeps
        let q = [3.0, 0.0, 0.0];
        let lit = two_stage_node_decide(&q, NodeId(0), &p, &params, FirstStage::MaxWeight, s, &coms);
        assert_eq!((lit.schedule, lit.kind), (Schedule::IDLE, ReconfigKind::Full));
        let t = two_stage_node_decide(&q, NodeId(0), &p, &params, FirstStage::Adcnc, s, &coms);
        assert_eq!(t.schedule, s);
        let l = two_stage_link_decide(&q, &[0.0; 3], &p, &params, FirstStage::MaxWeight, s);
        assert_eq!(l.schedule, Schedule::IDLE);
        let l = two_stage_link_decide(&q, &[0.0; 3], &p, &params, FirstStage::Adcnc, s);
        assert_eq!(l.schedule, s);
    }
}
