//! Decision rules evaluated at service completions with a non-empty queue.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostRegime, SystemParams, TieRouting};
use crate::solver::{is_positive, TableKind, ValueTable};
use crate::thresholds::{heuristic_profile_in, Orientation, Threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Station {
    Station1,
    Station2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Start the head-of-queue job at Station 1 (`a = 0`).
    Independent,
    /// Send the head-of-queue job to Station 2 (`a = 1`).
    Collaborative,
}

impl Action {
    pub fn from_bit(collaborate: bool) -> Self {
        if collaborate {
            Action::Collaborative
        } else {
            Action::Independent
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Action::Independent => 0,
            Action::Collaborative => 1,
        }
    }
}

/// Canonical decision point.
///
/// `q` counts the queue including the job being assigned; `k_busy` and
/// `l_busy` exclude the freed server and any just-finished job, so
/// `k_busy + l_busy = C1 - 1`. Action `a = 0` leads to
/// `(q-1, k_busy+1, l_busy)`, `a = 1` to `(q-1, k_busy, l_busy+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionContext {
    pub q: u32,
    pub k_busy: u32,
    pub l_busy: u32,
    pub completed_at: Station,
}

impl DecisionContext {
    pub fn new(q: u32, k_busy: u32, l_busy: u32, completed_at: Station) -> Self {
        DecisionContext { q, k_busy, l_busy, completed_at }
    }

    pub fn check(&self, params: &SystemParams) -> Result<()> {
        if self.q == 0 {
            return Err(Error::InvalidContext("queue length must be at least 1".into()));
        }
        if self.k_busy + self.l_busy + 1 != params.c1 {
            return Err(Error::InvalidContext(format!(
                "k_busy + l_busy = {} but C1 - 1 = {}",
                self.k_busy + self.l_busy,
                params.c1 - 1
            )));
        }
        Ok(())
    }
}

type RuleFn = dyn Fn(&DecisionContext) -> Action + Send + Sync;

#[derive(Clone)]
enum Rule {
    Constant(Action),
    QueueAtMost(u32),
    QueueAbove(u32),
    NoStation2Wait(u32),
    /// Collaborate while `q - 1 < t[k_busy]` (entry for index `k = k_busy + 1`).
    CollabThresholds(Vec<Threshold>),
    /// Collaborate once `q - 1 >= t[l_busy]`.
    IndepThresholds(Vec<Threshold>),
    Greedy(Arc<ValueTable>),
    Custom(Arc<RuleFn>),
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Constant(a) => write!(f, "Constant({a:?})"),
            Rule::QueueAtMost(n) => write!(f, "QueueAtMost({n})"),
            Rule::QueueAbove(n) => write!(f, "QueueAbove({n})"),
            Rule::NoStation2Wait(c2) => write!(f, "NoStation2Wait({c2})"),
            Rule::CollabThresholds(t) => write!(f, "CollabThresholds({t:?})"),
            Rule::IndepThresholds(t) => write!(f, "IndepThresholds({t:?})"),
            Rule::Greedy(_) => f.write_str("Greedy"),
            Rule::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// A named stationary decision rule.
#[derive(Debug, Clone)]
pub struct Policy {
    id: String,
    params: SystemParams,
    rule: Rule,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

impl Policy {
    /// Wraps an arbitrary deterministic rule.
    pub fn from_fn<F>(id: &str, params: &SystemParams, rule: F) -> Self
    where
        F: Fn(&DecisionContext) -> Action + Send + Sync + 'static,
    {
        Policy { id: id.to_string(), params: *params, rule: Rule::Custom(Arc::new(rule)) }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn decide(&self, ctx: &DecisionContext) -> Result<Action> {
        ctx.check(&self.params)?;
        let collaborate = match &self.rule {
            Rule::Constant(a) => return Ok(*a),
            Rule::Custom(f) => return Ok(f(ctx)),
            Rule::QueueAtMost(n) => ctx.q <= *n,
            Rule::QueueAbove(n) => ctx.q > *n,
            Rule::NoStation2Wait(c2) => ctx.l_busy < *c2,
            Rule::CollabThresholds(t) => match t[ctx.k_busy as usize] {
                Threshold::Finite(n) => ctx.q - 1 < n,
                Threshold::Infinite => true,
            },
            Rule::IndepThresholds(t) => match t[ctx.l_busy as usize] {
                Threshold::Finite(n) => ctx.q > n,
                Threshold::Infinite => false,
            },
            Rule::Greedy(table) => {
                let level = ctx.q - 1;
                if level > table.i_max() {
                    return Err(Error::DepthExceeded { q: ctx.q, i_max: table.i_max() });
                }
                let stay = table.v(level, ctx.k_busy + 1, ctx.l_busy);
                let go = table.v(level, ctx.k_busy, ctx.l_busy + 1);
                is_positive(stay - go)
            }
        };
        Ok(Action::from_bit(collaborate))
    }
}

/// Greedy rule against an optimal value table: collaborate iff
/// `D(q-1, k_busy+1, l_busy)` is positive.
pub fn optimal_greedy(table: Arc<ValueTable>) -> Result<Policy> {
    if *table.kind() != TableKind::Optimal {
        return Err(Error::NotOptimal);
    }
    Ok(Policy { id: "optimal".into(), params: *table.params(), rule: Rule::Greedy(table) })
}

/// Heuristic threshold policy, ties routed to the default side.
pub fn pi_prime(params: &SystemParams) -> Policy {
    pi_prime_in(params, params.cost_regime(TieRouting::default()))
}

pub fn pi_prime_in(params: &SystemParams, regime: CostRegime) -> Policy {
    let prof = heuristic_profile_in(params, regime);
    let thresholds: Vec<Threshold> = prof.entries.iter().map(|e| e.threshold).collect();
    let rule = match prof.orientation {
        Orientation::Collaborative => Rule::CollabThresholds(thresholds),
        Orientation::Independent => Rule::IndepThresholds(thresholds),
    };
    Policy { id: "heuristic".into(), params: *params, rule }
}

/// Benchmark rules `pi1..pi4` and `tpi1..tpi4`.
pub fn benchmark(params: &SystemParams, which: &str) -> Result<Policy> {
    let rule = match which {
        "pi1" | "tpi1" => Rule::Constant(Action::Independent),
        "pi2" => Rule::QueueAtMost(10),
        "tpi2" => Rule::QueueAbove(10),
        "pi3" | "tpi3" => Rule::Constant(Action::Collaborative),
        "pi4" | "tpi4" => Rule::NoStation2Wait(params.c2),
        other => return Err(Error::UnknownPolicy(other.to_string())),
    };
    Ok(Policy { id: which.to_string(), params: *params, rule })
}

/// Resolves a policy id. `"optimal"` needs the optimal table.
pub fn policy_by_id(params: &SystemParams, id: &str, optimal: Option<Arc<ValueTable>>) -> Result<Policy> {
    match id {
        "heuristic" => Ok(pi_prime(params)),
        "optimal" => match optimal {
            Some(t) => optimal_greedy(t),
            None => Err(Error::InvalidConfig("policy `optimal` needs a solved table".into())),
        },
        other => benchmark(params, other),
    }
}

/// Every context with queue length in `1..=q_max`.
pub fn contexts(params: &SystemParams, q_max: u32) -> Vec<DecisionContext> {
    let mut out = Vec::new();
    for q in 1..=q_max {
        for k_busy in 0..params.c1 {
            let l_busy = params.c1 - 1 - k_busy;
            for at in [Station::Station1, Station::Station2] {
                out.push(DecisionContext::new(q, k_busy, l_busy, at));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_optimal, solve_under_policy};

    fn ex1() -> SystemParams {
        SystemParams::new(4, 2, 3.0, 0.96, 0.1, 1.0, 0.16).unwrap()
    }

    #[test]
    fn heuristic_on_first_example() {
        let pol = pi_prime(&ex1());
        for q in 1..=20 {
            let a = pol.decide(&DecisionContext::new(q, 2, 1, Station::Station1)).unwrap();
            assert_eq!(a == Action::Collaborative, q <= 10, "q={q}");
        }
    }

    #[test]
    fn highcost_fast_station1_never_collaborates() {
        let p = SystemParams::new(3, 2, 10.0, 4.0, 0.1, 1.0, 2.0).unwrap();
        let pol = pi_prime(&p);
        for ctx in contexts(&p, 30) {
            assert_eq!(pol.decide(&ctx).unwrap(), Action::Independent);
        }
    }

    #[test]
    fn lowcost_slow_station1_collaborates_below_c2() {
        let p = SystemParams::new(4, 2, 10.0, 12.0, 0.1, 1.0, 0.1).unwrap();
        let pol = pi_prime(&p);
        for ctx in contexts(&p, 30).into_iter().filter(|c| c.l_busy < 2) {
            assert_eq!(pol.decide(&ctx).unwrap(), Action::Collaborative);
        }
    }

    #[test]
    fn highcost_phrasings_agree() {
        // collaborate iff q >= T + 0 with T = threshold + 1, i.e. q - 1 >= threshold
        let p = SystemParams::new(4, 2, 3.0, 3.3, 1.0, 1.0, 1.22).unwrap();
        let pol = pi_prime(&p);
        let prof = heuristic_profile_in(&p, CostRegime::Highcost);
        for ctx in contexts(&p, 25) {
            let t = prof.get(ctx.l_busy).unwrap();
            let via_t = match t {
                Threshold::Finite(n) => ctx.q > n,
                Threshold::Infinite => false,
            };
            assert_eq!(pol.decide(&ctx).unwrap() == Action::Collaborative, via_t);
        }
    }

    #[test]
    fn benchmark_rules() {
        let p = ex1();
        let pi2 = benchmark(&p, "pi2").unwrap();
        assert_eq!(pi2.decide(&DecisionContext::new(10, 3, 0, Station::Station2)).unwrap(), Action::Collaborative);
        assert_eq!(pi2.decide(&DecisionContext::new(11, 3, 0, Station::Station2)).unwrap(), Action::Independent);
        let pi4 = benchmark(&p, "pi4").unwrap();
        assert_eq!(pi4.decide(&DecisionContext::new(5, 2, 1, Station::Station1)).unwrap(), Action::Collaborative);
        assert_eq!(pi4.decide(&DecisionContext::new(5, 1, 2, Station::Station1)).unwrap(), Action::Independent);
        let tpi3 = benchmark(&p, "tpi3").unwrap();
        assert!(contexts(&p, 12).iter().all(|c| tpi3.decide(c).unwrap() == Action::Collaborative));
        assert_eq!(benchmark(&p, "pi9").unwrap_err(), Error::UnknownPolicy("pi9".into()));
    }

    #[test]
    fn greedy_reproduces_optimal_table() {
        let p = ex1();
        let opt = Arc::new(solve_optimal(&p, 30));
        let pol = optimal_greedy(opt.clone()).unwrap();
        let again = solve_under_policy(&p, &pol, 30).unwrap();
        for ((s, a), (_, b)) in opt.iter().zip(again.iter()) {
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{s}");
        }
        let too_deep = DecisionContext::new(32, 0, 3, Station::Station1);
        assert_eq!(pol.decide(&too_deep), Err(Error::DepthExceeded { q: 32, i_max: 30 }));
    }

    #[test]
    fn invalid_context_rejected() {
        let pol = benchmark(&ex1(), "pi1").unwrap();
        assert!(pol.decide(&DecisionContext::new(0, 3, 0, Station::Station1)).is_err());
        assert!(pol.decide(&DecisionContext::new(2, 3, 1, Station::Station1)).is_err());
    }
}
