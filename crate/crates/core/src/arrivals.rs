//! Seeded exogenous arrivals.
//!
//! Every slot draws from its own ChaCha stream keyed by `(seed, t)`, so the
//! sample for a slot does not depend on which slots were sampled before it.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::model::{CommodityId, NodeId};

/// Quantile of an uncapped Poisson process used as its per-slot bound.
pub const POISSON_BOUND_QUANTILE: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrivalKind {
    Poisson { rate: f64 },
    Deterministic { rate: f64 },
    Zero,
}

impl ArrivalKind {
    pub fn rate(&self) -> f64 {
        match *self {
            ArrivalKind::Poisson { rate } | ArrivalKind::Deterministic { rate } => rate,
            ArrivalKind::Zero => 0.0,
        }
    }

    /// Same kind with a different mean rate; `Zero` stays zero.
    pub fn with_rate(&self, rate: f64) -> Self {
        match self {
            ArrivalKind::Poisson { .. } => ArrivalKind::Poisson { rate },
            ArrivalKind::Deterministic { .. } => ArrivalKind::Deterministic { rate },
            ArrivalKind::Zero => ArrivalKind::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProcess {
    #[serde(flatten)]
    pub kind: ArrivalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u32>,
}

impl ArrivalProcess {
    pub fn poisson(rate: f64) -> Self {
        Self {
            kind: ArrivalKind::Poisson { rate },
            cap: None,
        }
    }

    pub fn deterministic(rate: f64) -> Self {
        Self {
            kind: ArrivalKind::Deterministic { rate },
            cap: None,
        }
    }

    pub fn zero() -> Self {
        Self {
            kind: ArrivalKind::Zero,
            cap: None,
        }
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn rate(&self) -> f64 {
        self.kind.rate()
    }

    /// Per-slot bound `a_max`: the cap when set, otherwise the
    /// [`POISSON_BOUND_QUANTILE`] quantile for Poisson and `ceil(rate)` for
    /// deterministic processes.
    pub fn bound(&self) -> u32 {
        if let Some(cap) = self.cap {
            return cap;
        }
        match self.kind {
            ArrivalKind::Poisson { rate } => poisson_quantile(rate, POISSON_BOUND_QUANTILE),
            ArrivalKind::Deterministic { rate } => rate.ceil() as u32,
            ArrivalKind::Zero => 0,
        }
    }
}

/// Arrival process attached to one `(node, commodity)` queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalSpec {
    pub node: NodeId,
    pub commodity: CommodityId,
    pub process: ArrivalProcess,
}

/// Arrival counts for one slot; absent queues received nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Arrivals {
    counts: BTreeMap<(NodeId, CommodityId), u32>,
}

impl Arrivals {
    pub fn get(&self, node: NodeId, commodity: CommodityId) -> u32 {
        self.counts.get(&(node, commodity)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, node: NodeId, commodity: CommodityId, count: u32) {
        if count > 0 {
            *self.counts.entry((node, commodity)).or_default() += count;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, CommodityId), u32)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&v| v as u64).sum()
    }
}

fn slot_stream(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

/// Draws the exogenous arrivals of slot `t` for run `seed`.
pub fn sample_arrivals(specs: &[ArrivalSpec], t: u64, seed: u64) -> Arrivals {
    let mut rng = slot_stream(seed, t);
    let mut out = Arrivals::default();
    for spec in specs {
        let raw = match spec.process.kind {
            ArrivalKind::Zero => 0,
            ArrivalKind::Poisson { rate } if rate <= 0.0 => 0,
            ArrivalKind::Poisson { rate } => match Poisson::new(rate) {
                Ok(d) => d.sample(&mut rng) as u32,
                Err(_) => 0,
            },
            ArrivalKind::Deterministic { rate } => {
                let before = (rate * t as f64).floor();
                let after = (rate * (t + 1) as f64).floor();
                (after - before).max(0.0) as u32
            }
        };
        let count = spec.process.cap.map_or(raw, |cap| raw.min(cap));
        out.add(spec.node, spec.commodity, count);
    }
    out
}

/// Smallest `k` with `P(X <= k) >= q` for `X ~ Poisson(rate)`.
pub fn poisson_quantile(rate: f64, q: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let ln_rate = rate.ln();
    let mut ln_pmf = -rate;
    let mut cdf = ln_pmf.exp();
    let mut k = 0u32;
    while cdf < q {
        k += 1;
        ln_pmf += ln_rate - (k as f64).ln();
        cdf += ln_pmf.exp();
        if k > 1_000_000 {
            break;
        }
    }
    k
}
