//! System parameters, the state space and the elementary rate and cost
//! functions shared by the solver, the simulator and the heuristics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing cost ratios such as `h1/mu1` and
/// `h2/mu2`. Ratios equal in exact arithmetic must compare equal here.
pub const RATIO_TOL: f64 = 1e-12;

/// Full parameterization of one clearing system.
///
/// Serializes as a flat JSON object with the keys `C1, C2, mu1, mu2, h0, h1, h2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Type-I (flexible) servers.
    #[serde(rename = "C1")]
    pub c1: u32,
    /// Type-II (dedicated) servers.
    #[serde(rename = "C2")]
    pub c2: u32,
    /// Independent service rate at Station 1.
    pub mu1: f64,
    /// Collaborative service rate at Station 2.
    pub mu2: f64,
    /// Holding cost per job per unit time in the queue.
    pub h0: f64,
    /// Holding cost at Station 1.
    pub h1: f64,
    /// Holding cost at Station 2.
    pub h2: f64,
}

impl SystemParams {
    /// Builds and validates in one step.
    pub fn new(c1: u32, c2: u32, mu1: f64, mu2: f64, h0: f64, h1: f64, h2: f64) -> Result<Self> {
        validate(SystemParams { c1, c2, mu1, mu2, h0, h1, h2 })
    }

    /// Ratio of service rates `mu2 / mu1`.
    pub fn m(&self) -> f64 {
        self.mu2 / self.mu1
    }

    /// Expected holding cost of one independent service, `h1/mu1`.
    pub fn indep_cost(&self) -> f64 {
        self.h1 / self.mu1
    }

    /// Expected holding cost of one collaborative service, `h2/mu2`.
    pub fn collab_cost(&self) -> f64 {
        self.h2 / self.mu2
    }

    pub fn regime(&self) -> RegimeTag {
        RegimeTag::of(self)
    }

    /// Cost regime after routing the tie `h1/mu1 == h2/mu2` to one side.
    pub fn cost_regime(&self, ties: TieRouting) -> CostRegime {
        match self.regime().cost_order {
            CostOrder::IndepCostlier => CostRegime::Lowcost,
            CostOrder::CollabCostlier => CostRegime::Highcost,
            CostOrder::Equal => match ties {
                TieRouting::IndepCostlier => CostRegime::Lowcost,
                TieRouting::CollabCostlier => CostRegime::Highcost,
            },
        }
    }

    /// `h1/mu1 <= ((l+1)/C2) (h2/mu2)`, the condition under which a Station 2
    /// queue of length `l >= C2` makes collaboration never worthwhile.
    pub fn queue_blocks_collab(&self, l: u32) -> bool {
        let lhs = self.h1 * self.mu2 * f64::from(self.c2);
        let rhs = f64::from(l + 1) * self.h2 * self.mu1;
        le_tol(lhs, rhs)
    }
}

/// `a <= b` up to [`RATIO_TOL`] relative slack.
pub(crate) fn le_tol(a: f64, b: f64) -> bool {
    a <= b + RATIO_TOL * a.abs().max(b.abs())
}

/// `a == b` up to [`RATIO_TOL`] relative slack.
pub(crate) fn eq_tol(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATIO_TOL * a.abs().max(b.abs())
}

/// Checks every invariant of [`SystemParams`] and returns it unchanged.
pub fn validate(params: SystemParams) -> Result<SystemParams> {
    if params.c1 == 0 || params.c2 == 0 {
        return Err(Error::ZeroServers);
    }
    let reals = [
        ("mu1", params.mu1),
        ("mu2", params.mu2),
        ("h0", params.h0),
        ("h1", params.h1),
        ("h2", params.h2),
    ];
    for (name, value) in reals {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParameter(name));
        }
    }
    let m = params.m();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::NonPositiveParameter("mu2/mu1"));
    }
    Ok(params)
}

/// A state `(i, k, l)`: queue length before the decision point, jobs in
/// independent service and jobs at the collaborative station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub i: u32,
    pub k: u32,
    pub l: u32,
}

impl State {
    pub const EMPTY: State = State { i: 0, k: 0, l: 0 };

    pub fn new(i: u32, k: u32, l: u32) -> Self {
        State { i, k, l }
    }

    /// Membership in the state space: either `i = 0, k + l < C1` or `k + l = C1`.
    pub fn is_member(&self, params: &SystemParams) -> bool {
        let busy = self.k + self.l;
        (self.i == 0 && busy < params.c1) || busy == params.c1
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.i, self.k, self.l)
    }
}

/// Total completion rate `k mu1 + min(l, C2) mu2`.
pub fn service_rate(params: &SystemParams, k: u32, l: u32) -> f64 {
    f64::from(k) * params.mu1 + f64::from(l.min(params.c2)) * params.mu2
}

/// Holding cost rate `i h0 + k h1 + l h2`.
pub fn holding_rate(params: &SystemParams, state: State) -> f64 {
    f64::from(state.i) * params.h0 + f64::from(state.k) * params.h1 + f64::from(state.l) * params.h2
}

/// All states with queue length at most `i_max`.
///
/// The `i = 0` layer comes first, ordered by jobs in service `k + l` and then
/// by `k`; each level `i >= 1` follows with `k = 0..=C1`.
pub fn enumerate_states(params: &SystemParams, i_max: u32) -> Vec<State> {
    let c1 = params.c1;
    let mut out = Vec::with_capacity(boundary_len(c1) + (i_max as usize) * (c1 as usize + 1));
    for busy in 0..=c1 {
        for k in 0..=busy {
            out.push(State::new(0, k, busy - k));
        }
    }
    for i in 1..=i_max {
        for k in 0..=c1 {
            out.push(State::new(i, k, c1 - k));
        }
    }
    out
}

pub(crate) fn boundary_len(c1: u32) -> usize {
    let c = c1 as usize;
    (c + 1) * (c + 2) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostOrder {
    /// `h1/mu1 > h2/mu2`
    IndepCostlier,
    Equal,
    /// `h1/mu1 < h2/mu2`
    CollabCostlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateOrder {
    Mu1Greater,
    Mu1Equal,
    Mu1Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CapacityOrder {
    C2LessThanC1,
    C2AtLeastC1,
}

/// Regime classification of a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegimeTag {
    pub cost_order: CostOrder,
    pub rate_order: RateOrder,
    pub capacity_order: CapacityOrder,
}

impl RegimeTag {
    pub fn of(params: &SystemParams) -> Self {
        // cross-multiplied so that grid ties such as h2 = 1, mu2 = 10 stay exact
        let indep = params.h1 * params.mu2;
        let collab = params.h2 * params.mu1;
        let cost_order = if eq_tol(indep, collab) {
            CostOrder::Equal
        } else if indep > collab {
            CostOrder::IndepCostlier
        } else {
            CostOrder::CollabCostlier
        };
        let rate_order = if params.mu1 > params.mu2 {
            RateOrder::Mu1Greater
        } else if params.mu1 < params.mu2 {
            RateOrder::Mu1Less
        } else {
            RateOrder::Mu1Equal
        };
        let capacity_order = if params.c2 < params.c1 {
            CapacityOrder::C2LessThanC1
        } else {
            CapacityOrder::C2AtLeastC1
        };
        RegimeTag { cost_order, rate_order, capacity_order }
    }
}

/// Which side the tie `h1/mu1 == h2/mu2` is routed to when a binary split
/// is required.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieRouting {
    #[default]
    IndepCostlier,
    CollabCostlier,
}

/// Binary cost regime: `Lowcost` when independent service is costlier per
/// job (`h1/mu1 > h2/mu2`), `Highcost` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostRegime {
    Lowcost,
    Highcost,
}
