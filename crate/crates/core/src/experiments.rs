//! Relative-error sweeps over parameter grids, the structural invariant
//! suite, and `D`/`H` curves.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, CostOrder, CostRegime, State, SystemParams, TieRouting};
use crate::policies::{contexts, optimal_greedy, pi_prime, pi_prime_in, policy_by_id, Action, Policy};
use crate::presets;
use crate::solver::{
    boundary_diff_formula, diff, is_positive, recursion_check, solve_optimal, solve_under_policy, DiffTable,
    ValueTable, SIGN_EPS,
};
use crate::thresholds::{
    actual_profile_in, actual_profile_tie, classify, condition1, constants, heuristic_h, heuristic_profile_in,
    heuristic_threshold_tie, probs, required_depth, Classification, Condition1, Orientation, Threshold,
    ThresholdProfile, TieSide,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateFilter {
    Any,
    Mu1AtLeastMu2,
    Mu1BelowMu2,
}

/// Which grid points enter a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeFilter {
    pub cost: Option<CostRegime>,
    pub rate: RateFilter,
    /// Admit `h1/mu1 == h2/mu2`, routed by `ties`.
    pub include_ties: bool,
    pub ties: TieRouting,
}

impl RegimeFilter {
    pub const ANY: RegimeFilter =
        RegimeFilter { cost: None, rate: RateFilter::Any, include_ties: true, ties: TieRouting::IndepCostlier };

    pub fn accepts(&self, p: &SystemParams) -> bool {
        let rate_ok = match self.rate {
            RateFilter::Any => true,
            RateFilter::Mu1AtLeastMu2 => p.mu1 >= p.mu2,
            RateFilter::Mu1BelowMu2 => p.mu1 < p.mu2,
        };
        let tie = p.regime().cost_order == CostOrder::Equal;
        let cost_ok = match self.cost {
            None => true,
            Some(want) => p.cost_regime(self.ties) == want,
        };
        rate_ok && cost_ok && (self.include_ties || !tie)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub server_configs: Vec<(u32, u32)>,
    pub h0_values: Vec<f64>,
    pub h2_values: Vec<f64>,
    pub mu2_values: Vec<f64>,
    pub h1: f64,
    pub mu1: f64,
    pub i0_values: Vec<u32>,
    pub filter: RegimeFilter,
    pub policies: Vec<String>,
}

pub const LOWCOST_POLICIES: [&str; 5] = ["heuristic", "pi1", "pi2", "pi3", "pi4"];
pub const HIGHCOST_POLICIES: [&str; 5] = ["heuristic", "tpi1", "tpi2", "tpi3", "tpi4"];

impl SweepSpec {
    /// Full grid with the given filter, starting queues and policies.
    pub fn table4(filter: RegimeFilter, i0_values: Vec<u32>, policies: &[&str]) -> Self {
        SweepSpec {
            server_configs: presets::TABLE4_SERVER_CONFIGS.to_vec(),
            h0_values: presets::TABLE4_H0.to_vec(),
            h2_values: presets::TABLE4_H2.to_vec(),
            mu2_values: presets::TABLE4_MU2.to_vec(),
            h1: presets::TABLE4_H1,
            mu1: presets::TABLE4_MU1,
            i0_values,
            filter,
            policies: policies.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Numerical-study tables 5 to 10.
    pub fn study_table(number: u32) -> Result<Self> {
        let strict = |cost, rate| RegimeFilter { cost: Some(cost), rate, include_ties: false, ties: TieRouting::default() };
        let (filter, i0, pols) = match number {
            5 => (strict(CostRegime::Lowcost, RateFilter::Mu1AtLeastMu2), 20, LOWCOST_POLICIES),
            6 => (strict(CostRegime::Lowcost, RateFilter::Mu1BelowMu2), 20, LOWCOST_POLICIES),
            7 => (strict(CostRegime::Lowcost, RateFilter::Mu1AtLeastMu2), 30, LOWCOST_POLICIES),
            8 => (strict(CostRegime::Lowcost, RateFilter::Mu1BelowMu2), 30, LOWCOST_POLICIES),
            9 => (strict(CostRegime::Highcost, RateFilter::Mu1BelowMu2), 20, HIGHCOST_POLICIES),
            10 => (strict(CostRegime::Highcost, RateFilter::Mu1BelowMu2), 30, HIGHCOST_POLICIES),
            n => return Err(Error::InvalidConfig(format!("no table {n}; expected 5..=10"))),
        };
        Ok(Self::table4(filter, vec![i0], &pols))
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::InvalidConfig(format!("`{name}` must not be empty")))
            } else {
                Ok(())
            }
        };
        empty("server_configs", self.server_configs.len())?;
        empty("h0_values", self.h0_values.len())?;
        empty("h2_values", self.h2_values.len())?;
        empty("mu2_values", self.mu2_values.len())?;
        empty("i0_values", self.i0_values.len())?;
        empty("policies", self.policies.len())?;
        for p in self.all_points() {
            validate(p)?;
        }
        Ok(())
    }

    fn all_points(&self) -> Vec<SystemParams> {
        let mut out = Vec::new();
        for &(c1, c2) in &self.server_configs {
            for &h0 in &self.h0_values {
                for &h2 in &self.h2_values {
                    for &mu2 in &self.mu2_values {
                        out.push(SystemParams { c1, c2, mu1: self.mu1, mu2, h0, h1: self.h1, h2 });
                    }
                }
            }
        }
        out
    }

    /// Grid points that pass the filter, in grid order.
    pub fn points(&self) -> Vec<SystemParams> {
        self.all_points().into_iter().filter(|p| self.filter.accepts(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub params: SystemParams,
    pub i0: u32,
    pub k0: u32,
    pub l0: u32,
    pub policy: String,
    pub v_opt: f64,
    pub v_pi: f64,
    pub err_pct: f64,
}

/// Error summary of one policy in one `(C1, C2, i0)` cell, in percent.
/// Statistics are `None` for an empty cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub policy: String,
    pub c1: u32,
    pub c2: u32,
    pub i0: u32,
    pub count: usize,
    pub max_err: Option<f64>,
    pub avg_err: Option<f64>,
    /// Sample standard deviation.
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub records: Vec<RawRecord>,
    pub stats: Vec<ErrorStats>,
}

fn evaluate_point(p: &SystemParams, spec: &SweepSpec) -> Result<Vec<RawRecord>> {
    let depth = spec.i0_values.iter().copied().max().unwrap_or(0);
    let opt = Arc::new(solve_optimal(p, depth));
    let mut out = Vec::new();
    for id in &spec.policies {
        let pol = policy_by_id(p, id, Some(opt.clone()))?;
        let table = solve_under_policy(p, &pol, depth)?;
        for &i0 in &spec.i0_values {
            for k0 in 0..=p.c1 {
                let l0 = p.c1 - k0;
                let v_opt = opt.v(i0, k0, l0);
                let v_pi = table.v(i0, k0, l0);
                out.push(RawRecord {
                    params: *p,
                    i0,
                    k0,
                    l0,
                    policy: id.clone(),
                    v_opt,
                    v_pi,
                    err_pct: 100.0 * (v_pi - v_opt) / v_opt,
                });
            }
        }
    }
    Ok(out)
}

/// Max, mean and sample standard deviation (`n - 1` denominator, zero for a
/// single value).
pub fn summarize(sample: &[f64]) -> Option<(f64, f64, f64)> {
    if sample.is_empty() {
        return None;
    }
    let n = sample.len() as f64;
    let max = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg = sample.iter().sum::<f64>() / n;
    let ss = sample.iter().map(|x| (x - avg).powi(2)).sum::<f64>();
    let var = if sample.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    Some((max, avg, var.sqrt()))
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let points = spec.points();
    let per_point = points.par_iter().map(|p| evaluate_point(p, spec)).collect::<Result<Vec<_>>>()?;
    let records: Vec<RawRecord> = per_point.into_iter().flatten().collect();

    let mut stats = Vec::new();
    for &(c1, c2) in &spec.server_configs {
        for policy in &spec.policies {
            for &i0 in &spec.i0_values {
                let sample: Vec<f64> = records
                    .iter()
                    .filter(|r| r.params.c1 == c1 && r.params.c2 == c2 && r.i0 == i0 && &r.policy == policy)
                    .map(|r| r.err_pct)
                    .collect();
                let s = summarize(&sample);
                stats.push(ErrorStats {
                    policy: policy.clone(),
                    c1,
                    c2,
                    i0,
                    count: sample.len(),
                    max_err: s.map(|t| t.0),
                    avg_err: s.map(|t| t.1),
                    std_err: s.map(|t| t.2),
                });
            }
        }
    }
    Ok(SweepResult { spec: spec.clone(), records, stats })
}

/// Half-up rounding to two decimals, for presentation only.
pub fn round2(x: f64) -> f64 {
    (x * 100.0 + 0.5).floor() / 100.0
}

impl SweepResult {
    pub fn stat(&self, policy: &str, c1: u32, c2: u32, i0: u32) -> Option<&ErrorStats> {
        self.stats.iter().find(|s| s.policy == policy && s.c1 == c1 && s.c2 == c2 && s.i0 == i0)
    }

    pub fn write_raw_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "C1,C2,h0,h1,h2,mu1,mu2,i0,k0,l0,policy,v_opt,v_pi,err_pct")?;
        for r in &self.records {
            let p = &r.params;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.c1, p.c2, p.h0, p.h1, p.h2, p.mu1, p.mu2, r.i0, r.k0, r.l0, r.policy, r.v_opt, r.v_pi, r.err_pct
            )?;
        }
        Ok(())
    }

    /// One row per (policy, i0, statistic), one column per server configuration.
    pub fn write_table_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "policy,i0,statistic")?;
        for (c1, c2) in &self.spec.server_configs {
            write!(out, ",{c1}/{c2}")?;
        }
        writeln!(out)?;
        for policy in &self.spec.policies {
            for &i0 in &self.spec.i0_values {
                for (name, pick) in [
                    ("max", (|s: &ErrorStats| s.max_err) as fn(&ErrorStats) -> Option<f64>),
                    ("avg", |s: &ErrorStats| s.avg_err),
                    ("std", |s: &ErrorStats| s.std_err),
                ] {
                    write!(out, "{policy},{i0},{name}")?;
                    for &(c1, c2) in &self.spec.server_configs {
                        match self.stat(policy, c1, c2, i0).and_then(pick) {
                            Some(x) => write!(out, ",{:.2}", round2(x))?,
                            None => write!(out, ",")?,
                        }
                    }
                    writeln!(out)?;
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one named invariant across all checked instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub checked: u64,
    pub failures: u64,
    pub first_counterexample: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub points: usize,
    pub i_max: u32,
    pub passed: bool,
    pub results: Vec<InvariantResult>,
}

impl InvariantReport {
    pub fn result(&self, name: &str) -> Option<&InvariantResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantResult> {
        self.results.iter().filter(|r| r.failures > 0)
    }
}

#[derive(Debug, Default)]
struct Tally {
    results: Vec<InvariantResult>,
}

impl Tally {
    fn check(&mut self, name: &str, ok: bool, witness: impl FnOnce() -> String) {
        let pos = match self.results.iter().position(|r| r.name == name) {
            Some(n) => n,
            None => {
                self.results.push(InvariantResult {
                    name: name.to_string(),
                    checked: 0,
                    failures: 0,
                    first_counterexample: None,
                });
                self.results.len() - 1
            }
        };
        let r = &mut self.results[pos];
        r.checked += 1;
        if !ok {
            r.failures += 1;
            if r.first_counterexample.is_none() {
                r.first_counterexample = Some(witness());
            }
        }
    }

    fn merge(&mut self, other: Tally) {
        for o in other.results {
            match self.results.iter_mut().find(|r| r.name == o.name) {
                Some(r) => {
                    r.checked += o.checked;
                    r.failures += o.failures;
                    if r.first_counterexample.is_none() {
                        r.first_counterexample = o.first_counterexample;
                    }
                }
                None => self.results.push(o),
            }
        }
    }
}

fn tol(x: f64) -> f64 {
    SIGN_EPS * (1.0 + x.abs())
}

fn at(p: &SystemParams, s: State) -> String {
    format!("C1={} C2={} mu1={} mu2={} h0={} h1={} h2={} at {}", p.c1, p.c2, p.mu1, p.mu2, p.h0, p.h1, p.h2, s)
}

fn at_index(p: &SystemParams, what: &str, index: u32, detail: String) -> String {
    format!("C1={} C2={} mu1={} mu2={} h0={} h1={} h2={} {what}={index}: {detail}", p.c1, p.c2, p.mu1, p.mu2, p.h0, p.h1, p.h2)
}

/// Checks on `D` alone: sign structure, monotonicity, bounds.
fn check_diffs(p: &SystemParams, d: &DiffTable, t: &mut Tally) {
    let order = p.regime().cost_order;
    let strict_low = order == CostOrder::IndepCostlier;
    let weak_low = order != CostOrder::CollabCostlier;
    let weak_high = order != CostOrder::IndepCostlier;
    let hc = constants(p);
    let c1 = p.c1;
    let top = d.i_max();

    for k in 1..=c1 {
        let l = c1 - k;
        let series: Vec<f64> = (0..=top).map(|i| d.d(i, k, l)).collect();
        let signs: Vec<bool> = series.iter().map(|&x| is_positive(x)).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        if strict_low {
            let ok = changes == 0 || (changes == 1 && signs[0]);
            t.check("diff_single_sign_change", ok, || at(p, State::new(0, k, l)));
        }
        if weak_high {
            let ok = changes == 0 || (changes == 1 && !signs[0]);
            t.check("diff_single_sign_change", ok, || at(p, State::new(0, k, l)));
        }
        for (i, &x) in series.iter().enumerate() {
            let i = i as u32;
            let s = State::new(i, k, l);
            if p.mu1 <= p.mu2 && l < p.c2 && strict_low {
                t.check("diff_positive_slow_station1", x > 0.0, || at(p, s));
            }
            if p.mu2 >= p.mu1 && weak_high && l >= p.c2 {
                t.check("diff_nonpositive_collab_queue", x <= tol(x), || at(p, s));
            }
            if p.mu2 >= p.mu1 {
                let ub = f64::from(i) * hc.c + hc.b;
                t.check("diff_affine_upper_bound", x <= ub + tol(ub), || at(p, s));
            }
            let lb = f64::from(i) * hc.c_prime + hc.b_prime;
            t.check("diff_affine_lower_bound", x >= lb - tol(lb), || at(p, s));
            if k < c1 {
                let next = d.d(i, k + 1, l - 1);
                t.check("diff_diagonal_monotone", next >= x - tol(x), || at(p, s));
            }
        }
        for i in 0..top {
            let (x, y) = (series[i as usize], series[i as usize + 1]);
            let s = State::new(i, k, l);
            if p.mu1 >= p.mu2 {
                t.check("diff_nonincreasing_fast_station1", y <= x + tol(x), || at(p, s));
            }
            if p.mu2 >= p.mu1 && weak_low && l >= p.c2 {
                t.check("diff_nonincreasing_collab_queue", y <= x + tol(x), || at(p, s));
            }
            if p.mu2 >= p.mu1 && weak_high && l < p.c2 {
                t.check("diff_nondecreasing_slow_station1", y >= x - tol(x), || at(p, s));
            }
        }
    }

    for busy in 1..=c1 {
        for k in 1..=busy {
            let l = busy - k;
            let want = boundary_diff_formula(p, l);
            let got = d.d(0, k, l);
            let ok = (got - want).abs() <= 1e-12 * want.abs().max(got.abs()).max(f64::MIN_POSITIVE) + 1e-15;
            t.check("boundary_formula", ok, || at(p, State::new(0, k, l)));
        }
    }

    let rep = recursion_check(p, d);
    t.check("recursion_residual", rep.passes(SIGN_EPS), || {
        format!("{} residual {:e}", at(p, rep.worst.unwrap_or(State::EMPTY)), rep.max_scaled_residual)
    });

    t.check("constants_ordering", hc.c_prime < 0.0 && hc.b_prime <= hc.b && hc.c_prime <= hc.c, || {
        at(p, State::EMPTY)
    });
    if p.mu1 >= p.mu2 {
        let ok = hc.y.iter().all(|&y| y <= f64::from(c1) - 1.0 + 1e-12);
        t.check("constants_ordering", ok, || at(p, State::EMPTY));
    }
    if p.mu2 >= p.mu1 {
        let ok = hc.z.iter().all(|&z| z <= f64::from(c1) - 1.0 + 1e-12);
        t.check("constants_ordering", ok, || at(p, State::EMPTY));
    }
    for k in 1..=c1 {
        let pr = probs(p, k);
        t.check("probabilities_sum_to_one", (pr.p + pr.q + pr.r - 1.0).abs() <= 1e-12, || {
            at(p, State::new(0, k, c1 - k))
        });
    }
}

fn thr(prof: &ThresholdProfile, index: u32) -> Threshold {
    prof.get(index).expect("profile index")
}

/// Thresholds under both tie conventions. Statements about a threshold hold
/// for some value in `lo..=hi`.
#[derive(Debug, Clone, Copy)]
struct Span {
    lo: Threshold,
    hi: Threshold,
}

impl Span {
    fn new(a: Threshold, b: Threshold) -> Self {
        Span { lo: a.min(b), hi: a.max(b) }
    }

    fn meets(self, other: Span) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    fn shift(self, n: u32) -> Span {
        Span { lo: plus(self.lo, n), hi: plus(self.hi, n) }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}..{}", self.lo, self.hi)
        }
    }
}

fn plus(t: Threshold, n: u32) -> Threshold {
    match t {
        Threshold::Finite(v) => Threshold::Finite(v + n),
        Threshold::Infinite => Threshold::Infinite,
    }
}

fn check_thresholds(p: &SystemParams, d: &DiffTable, t: &mut Tally) -> Result<()> {
    let order = p.regime().cost_order;
    let c1 = p.c1;
    let regime = if order == CostOrder::IndepCostlier { CostRegime::Lowcost } else { CostRegime::Highcost };
    let act = actual_profile_in(p, d, regime)?;
    let act_ind = actual_profile_tie(p, d, regime, TieSide::Independent)?;
    let heu = heuristic_profile_in(p, regime);
    let orient = Orientation::of(regime);
    let dspan = |index| Span::new(thr(&act, index), thr(&act_ind, index));
    let hspan = |index| {
        let ind = heuristic_threshold_tie(p, index, regime, TieSide::Independent);
        Span::new(thr(&heu, index), ind)
    };
    let finite = |s: Span| !s.hi.is_infinite();

    for index in orient.indices(c1) {
        if classify(p, index, regime) == Classification::ProvablyInfinite {
            let (k, l) = orient.split(c1, index);
            let crossing = (0..=d.i_max()).any(|i| {
                let pos = is_positive(d.d(i, k, l));
                match regime {
                    CostRegime::Lowcost => !pos,
                    CostRegime::Highcost => pos,
                }
            });
            t.check("provably_infinite_has_no_crossing", !crossing, || at_index(p, "index", index, "crossing".into()));
        }
        if c1 == 1 {
            let (a, h) = (dspan(index), hspan(index));
            if finite(a) && finite(h) {
                t.check("single_server_heuristic_exact", a.meets(h), || at_index(p, "index", index, format!("{a} vs {h}")));
            }
        }
    }

    match regime {
        CostRegime::Lowcost => {
            for k in 1..=c1 {
                let l = c1 - k;
                let (id, ih) = (dspan(k), hspan(k));
                let show = || format!("i_D={id} i_H={ih}");
                if k >= 2 {
                    let prev = dspan(k - 1);
                    t.check("lowcost_threshold_monotone", prev.lo <= id.hi, || at_index(p, "k", k, format!("{prev} > {id}")));
                }
                if l < p.c2 && p.mu1 > p.mu2 {
                    let ok = finite(id) && finite(ih) && ih.lo <= id.hi && id.lo <= ih.shift(c1 - 1).hi;
                    t.check("lowcost_heuristic_sandwich", ok, || at_index(p, "k", k, show()));
                }
                if l >= p.c2 {
                    let blocked = p.queue_blocks_collab(l);
                    let never_positive = (0..=d.i_max()).all(|i| !is_positive(d.d(i, k, l)));
                    t.check("lowcost_zero_threshold_iff", never_positive == blocked, || at_index(p, "k", k, show()));
                    if blocked {
                        t.check("lowcost_zero_threshold_iff", ih.hi == Threshold::Finite(0), || at_index(p, "k", k, show()));
                    } else {
                        if p.h0 >= p.h2 {
                            t.check("lowcost_queue_side_ordering", ih.hi >= id.lo, || at_index(p, "k", k, show()));
                        }
                        if p.h0 <= p.h2 {
                            t.check("lowcost_queue_side_ordering", ih.lo <= id.hi, || at_index(p, "k", k, show()));
                        }
                        let cond = condition1(p, k);
                        let exact = p.h0 == p.h2 || matches!(cond, Condition1::HoldsQueueSide | Condition1::HoldsCollabSide);
                        if exact {
                            t.check("condition1_exact", ih.meets(id), || at_index(p, "k", k, format!("{} {cond}", show())));
                            if k >= 2 {
                                let prev = dspan(k - 1);
                                let ok = finite(prev) && finite(id) && prev.shift(1).meets(id);
                                t.check("condition1_unit_steps", ok, || {
                                    at_index(p, "k", k, format!("i_D(k-1)={prev} i_D(k)={id}"))
                                });
                            }
                        }
                        if k >= 2 && !p.queue_blocks_collab(l + 1) {
                            let prev = hspan(k - 1);
                            if finite(ih) && finite(prev) && ih.lo >= Threshold::Finite(1) {
                                t.check("heuristic_unit_steps", prev.shift(1).meets(ih), || {
                                    at_index(p, "k", k, format!("i_H(k-1)={prev} i_H(k)={ih}"))
                                });
                            }
                        }
                    }
                }
            }
        }
        CostRegime::Highcost => {
            for l in 0..c1 {
                let (id, ih) = (dspan(l), hspan(l));
                if l >= 1 {
                    let prev = dspan(l - 1);
                    t.check("highcost_threshold_monotone", prev.lo <= id.hi, || at_index(p, "l", l, format!("{prev} > {id}")));
                }
                if p.mu1 < p.mu2 && l < p.c2 {
                    let ok = finite(id) && finite(ih) && ih.lo <= id.hi && id.lo <= ih.shift(c1 - 1).hi;
                    t.check("highcost_heuristic_sandwich", ok, || at_index(p, "l", l, format!("i_D={id} i_H={ih}")));
                }
            }
        }
    }

    // the heuristic policy agrees with the greedy rule wherever the thresholds coincide
    let table = Arc::new(solve_optimal(p, d.i_max()));
    let greedy = optimal_greedy(table)?;
    let heuristic = pi_prime_in(p, regime);
    for ctx in contexts(p, d.i_max() + 1) {
        let index = match orient {
            Orientation::Collaborative => ctx.k_busy + 1,
            Orientation::Independent => ctx.l_busy,
        };
        if thr(&act, index) == thr(&heu, index) {
            let (g, h) = (greedy.decide(&ctx)?, heuristic.decide(&ctx)?);
            let dv = d.d(ctx.q - 1, ctx.k_busy + 1, ctx.l_busy);
            let tie = !is_positive(dv) && !is_positive(-dv);
            t.check("heuristic_matches_greedy_where_exact", g == h || tie, || {
                at_index(p, "index", index, format!("q={} {:?}: greedy {:?}, heuristic {:?}", ctx.q, ctx.completed_at, g, h))
            });
        }
    }
    Ok(())
}

fn check_policies(p: &SystemParams, opt: &Arc<ValueTable>, i_max: u32, t: &mut Tally) -> Result<()> {
    let greedy = optimal_greedy(opt.clone())?;
    let again = solve_under_policy(p, &greedy, i_max)?;
    for ((s, a), (_, b)) in opt.iter().filter(|(s, _)| s.i <= i_max).zip(again.iter()) {
        t.check("greedy_reproduces_optimal", (a - b).abs() <= 1e-9 * a.abs().max(1.0), || at(p, s));
    }

    let ctxs = contexts(p, i_max);
    for ctx in &ctxs {
        if ctx.l_busy >= 1 && greedy.decide(ctx)? == Action::Collaborative {
            let mut shifted = *ctx;
            shifted.k_busy += 1;
            shifted.l_busy -= 1;
            let ok = greedy.decide(&shifted)? == Action::Collaborative;
            t.check("greedy_diagonal_consistency", ok, || format!("{} q={}", at(p, State::new(ctx.q, ctx.k_busy, ctx.l_busy)), ctx.q));
        }
    }

    let mut zoo: Vec<Policy> = vec![pi_prime(p)];
    for id in ["pi1", "pi2", "tpi2", "pi3", "pi4"] {
        zoo.push(policy_by_id(p, id, None)?);
    }
    for pol in &zoo {
        let total = ctxs.iter().all(|c| pol.decide(c).is_ok());
        t.check("policies_total", total, || format!("{} policy {}", at(p, State::EMPTY), pol.id()));
        let table = solve_under_policy(p, pol, i_max)?;
        for (s, v) in table.iter() {
            let best = opt.v(s.i, s.k, s.l);
            t.check("policy_values_dominate_optimal", v >= best - tol(best), || format!("{} policy {}", at(p, s), pol.id()));
        }
    }
    for (s, v) in opt.iter() {
        if s.i < opt.i_max() && s.k + s.l == p.c1 {
            let up = opt.v(s.i + 1, s.k, s.l);
            t.check("value_monotone_in_queue", up >= v - tol(v), || at(p, s));
        }
    }
    Ok(())
}

fn verify_point(p: &SystemParams, i_max: u32) -> Result<Tally> {
    validate(*p)?;
    let regime = if p.regime().cost_order == CostOrder::IndepCostlier { CostRegime::Lowcost } else { CostRegime::Highcost };
    let depth = i_max.max(required_depth(p, regime));
    let opt = Arc::new(solve_optimal(p, depth));
    let d = diff(&opt)?;
    let mut t = Tally::default();
    check_diffs(p, &d, &mut t);
    check_thresholds(p, &d, &mut t)?;
    check_policies(p, &opt, i_max, &mut t)?;
    Ok(t)
}

/// Runs the full invariant suite on every point. Tables are solved at least
/// to `i_max` and deep enough to locate every finite threshold.
pub fn verify(points: &[SystemParams], i_max: u32) -> Result<InvariantReport> {
    let tallies = points.par_iter().map(|p| verify_point(p, i_max)).collect::<Result<Vec<_>>>()?;
    let mut all = Tally::default();
    for t in tallies {
        all.merge(t);
    }
    let passed = all.results.iter().all(|r| r.failures == 0);
    Ok(InvariantReport { points: points.len(), i_max, passed, results: all.results })
}

/// Runs only the checks that read `D`, on a caller-supplied table.
pub fn verify_diffs(params: &SystemParams, diffs: &DiffTable) -> InvariantReport {
    let mut t = Tally::default();
    check_diffs(params, diffs, &mut t);
    let passed = t.results.iter().all(|r| r.failures == 0);
    InvariantReport { points: 1, i_max: diffs.i_max(), passed, results: t.results }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub i: u32,
    pub d: f64,
    pub h: f64,
}

/// `D(i,k,l)` beside `H(i,k,l)` for `i = 0..=i_max`, the index read in the
/// orientation of `regime`.
pub fn dh_curve(params: &SystemParams, index: u32, i_max: u32, regime: CostRegime) -> Result<Vec<CurvePoint>> {
    let orient = Orientation::of(regime);
    if !orient.indices(params.c1).contains(&index) {
        return Err(Error::InvalidConfig(format!("index {index} is not valid for {} orientation", orient.name())));
    }
    let (k, _) = orient.split(params.c1, index);
    let d = diff(&solve_optimal(params, i_max))?;
    Ok((0..=i_max)
        .map(|i| CurvePoint { i, d: d.d(i, k, params.c1 - k), h: heuristic_h(params, i, k) })
        .collect())
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], mut out: W) -> io::Result<()> {
    writeln!(out, "i,D,H")?;
    for pt in points {
        writeln!(out, "{},{},{}", pt.i, pt.d, pt.h)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (max, avg, std) = summarize(&[1.0, 3.0, 5.0]).unwrap();
        assert_eq!((max, avg, std), (5.0, 3.0, 2.0));
        assert_eq!(summarize(&[4.0]).unwrap().2, 0.0);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round2(0.125), 0.13);
        assert_eq!(round2(1.0), 1.0);
    }

    #[test]
    fn tie_filtering() {
        let tie = SystemParams::new(2, 1, 10.0, 10.0, 0.1, 1.0, 1.0).unwrap();
        let t5 = SweepSpec::study_table(5).unwrap();
        assert!(!t5.filter.accepts(&tie));
        let with_ties = RegimeFilter { include_ties: true, ..t5.filter };
        assert!(with_ties.accepts(&tie));
        assert!(SweepSpec::study_table(11).is_err());
    }

    #[test]
    fn optimal_against_itself_is_exact() {
        let mut spec = SweepSpec::study_table(5).unwrap();
        spec.server_configs = vec![(2, 1)];
        spec.h0_values = vec![0.1];
        spec.policies = vec!["optimal".into()];
        let res = sweep(&spec).unwrap();
        assert!(!res.records.is_empty());
        assert!(res.records.iter().all(|r| r.err_pct == 0.0));
        assert_eq!(res.stats[0].max_err, Some(0.0));
    }

    #[test]
    fn empty_cells_stay_empty() {
        let mut spec = SweepSpec::study_table(6).unwrap();
        spec.mu2_values = vec![4.0];
        let res = sweep(&spec).unwrap();
        assert!(res.records.is_empty());
        assert!(res.stats.iter().all(|s| s.count == 0 && s.max_err.is_none()));
        let mut buf = Vec::new();
        res.write_table_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,,,,"));
    }

    #[test]
    fn corrupted_diagonal_is_flagged() {
        let p = SystemParams::new(4, 2, 3.0, 0.96, 0.1, 1.0, 0.16).unwrap();
        let mut d = diff(&solve_optimal(&p, 10)).unwrap();
        assert!(verify_diffs(&p, &d).passed);
        d.set(State::new(5, 2, 2), 1e6).unwrap();
        let rep = verify_diffs(&p, &d);
        let diag = rep.result("diff_diagonal_monotone").unwrap();
        assert!(diag.failures > 0);
        assert!(diag.first_counterexample.as_deref().unwrap().contains("(5,2,2)"));
    }

    #[test]
    fn examples_pass_invariants() {
        let pts: Vec<_> = presets::EXAMPLES.iter().map(|e| e.params).collect();
        let rep = verify(&pts, 20).unwrap();
        let bad: Vec<_> = rep.failures().collect();
        assert!(rep.passed, "{bad:#?}");
    }

    #[test]
    fn curve_of_fifth_example() {
        let p = presets::example("ex5").unwrap();
        let c = dh_curve(&p, 2, 20, CostRegime::Lowcost).unwrap();
        // both series vanish at i = 12 and coincide up to there
        assert!(c[11].d > 0.0 && c[11].h > 0.0);
        assert!(c[12].d.abs() < 1e-12 && c[12].h.abs() < 1e-12);
        assert!(c[13].d < 0.0 && c[13].h < 0.0);
        assert!(c.iter().take(13).all(|pt| (pt.d - pt.h).abs() < 1e-12));
        let blocked = SystemParams::new(4, 1, 10.0, 4.0, 0.1, 1.0, 0.5).unwrap();
        let c = dh_curve(&blocked, 1, 5, CostRegime::Lowcost).unwrap();
        assert!(c.iter().all(|pt| pt.h == -1.0));
        assert!(dh_curve(&p, 0, 5, CostRegime::Lowcost).is_err());
    }
}
