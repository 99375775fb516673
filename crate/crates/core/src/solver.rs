//! Exact expected clearing costs by backward recursion over queue levels.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{boundary_len, holding_rate, service_rate, State, SystemParams};
use crate::policies::{Action, DecisionContext, Policy, Station};
use crate::thresholds::probs;

/// Relative tolerance for sign tests on `D`.
pub const SIGN_EPS: f64 = 1e-9;

/// `d > eps (1 + |d|)`. Anything else counts as non-positive, so exact ties
/// select independent service.
pub fn is_positive(d: f64) -> bool {
    d > SIGN_EPS * (1.0 + d.abs())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableKind {
    Optimal,
    UnderPolicy(String),
}

/// Values `v(i,k,l)` on every state of `enumerate_states(params, i_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    params: SystemParams,
    i_max: u32,
    kind: TableKind,
    values: Vec<f64>,
}

/// Position of a state in the enumeration order, if it belongs to the table.
fn slot(c1: u32, i_max: u32, s: State) -> Option<usize> {
    let busy = s.k + s.l;
    if s.i == 0 {
        if busy > c1 {
            return None;
        }
        let m = busy as usize;
        Some(m * (m + 1) / 2 + s.k as usize)
    } else if busy == c1 && s.i <= i_max {
        Some(boundary_len(c1) + (s.i as usize - 1) * (c1 as usize + 1) + s.k as usize)
    } else {
        None
    }
}

impl ValueTable {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn i_max(&self) -> u32 {
        self.i_max
    }

    pub fn kind(&self) -> &TableKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, s: State) -> Result<f64> {
        slot(self.params.c1, self.i_max, s)
            .map(|n| self.values[n])
            .ok_or(Error::IndexOutOfSpace(s))
    }

    /// Shorthand for [`ValueTable::get`] that panics outside the table.
    pub fn v(&self, i: u32, k: u32, l: u32) -> f64 {
        self.get(State::new(i, k, l)).expect("state outside value table")
    }

    /// `(state, value)` pairs in enumeration order.
    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        crate::model::enumerate_states(&self.params, self.i_max)
            .into_iter()
            .zip(self.values.iter().copied())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "i,k,l,value")?;
        for (s, v) in self.iter() {
            writeln!(out, "{},{},{},{}", s.i, s.k, s.l, v)?;
        }
        Ok(())
    }
}

/// `D(i,k,l) = v(i,k,l) - v(i,k-1,l+1)` on every table state with `k >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTable {
    params: SystemParams,
    i_max: u32,
    // aligned with the value table; slots with k = 0 hold NaN
    entries: Vec<f64>,
}

impl DiffTable {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn i_max(&self) -> u32 {
        self.i_max
    }

    pub fn get(&self, s: State) -> Result<f64> {
        if s.k == 0 {
            return Err(Error::IndexOutOfSpace(s));
        }
        slot(self.params.c1, self.i_max, s)
            .map(|n| self.entries[n])
            .ok_or(Error::IndexOutOfSpace(s))
    }

    /// Shorthand for [`DiffTable::get`] that panics outside the table.
    pub fn d(&self, i: u32, k: u32, l: u32) -> f64 {
        self.get(State::new(i, k, l)).expect("index outside difference table")
    }

    /// Overwrites one entry. Used to build corrupted tables in tests.
    pub fn set(&mut self, s: State, value: f64) -> Result<()> {
        if s.k == 0 {
            return Err(Error::IndexOutOfSpace(s));
        }
        let n = slot(self.params.c1, self.i_max, s).ok_or(Error::IndexOutOfSpace(s))?;
        self.entries[n] = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        crate::model::enumerate_states(&self.params, self.i_max)
            .into_iter()
            .zip(self.entries.iter().copied())
            .filter(|(s, _)| s.k >= 1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "i,k,l,D")?;
        for (s, d) in self.iter() {
            writeln!(out, "{},{},{},{}", s.i, s.k, s.l, d)?;
        }
        Ok(())
    }
}

/// Fills the `i = 0` layer, where no decisions are made.
fn fill_boundary(p: &SystemParams, values: &mut [f64]) {
    let c1 = p.c1;
    for busy in 1..=c1 {
        for k in 0..=busy {
            let l = busy - k;
            let d = service_rate(p, k, l);
            let mut acc = holding_rate(p, State::new(0, k, l));
            if k > 0 {
                acc += f64::from(k) * p.mu1 * values[slot(c1, 0, State::new(0, k - 1, l)).unwrap()];
            }
            let served2 = l.min(p.c2);
            if served2 > 0 {
                acc += f64::from(served2) * p.mu2 * values[slot(c1, 0, State::new(0, k, l - 1)).unwrap()];
            }
            values[slot(c1, 0, State::new(0, k, l)).unwrap()] = acc / d;
        }
    }
}

/// Runs the level recursion. `choose(ctx, v_independent, v_collaborative)`
/// returns the continuation value picked at each decision.
fn sweep<F>(p: &SystemParams, i_max: u32, mut choose: F) -> Result<Vec<f64>>
where
    F: FnMut(&DecisionContext, f64, f64) -> Result<f64>,
{
    let c1 = p.c1;
    let total = boundary_len(c1) + i_max as usize * (c1 as usize + 1);
    let mut values = vec![0.0; total];
    fill_boundary(p, &mut values);
    let at = |values: &[f64], i, k, l| values[slot(c1, i_max, State::new(i, k, l)).unwrap()];

    for i in 1..=i_max {
        for k in 0..=c1 {
            let l = c1 - k;
            let s = State::new(i, k, l);
            let d = service_rate(p, k, l);
            let mut acc = holding_rate(p, s);
            if k > 0 {
                let ctx = DecisionContext::new(i, k - 1, l, Station::Station1);
                let stay = at(&values, i - 1, k, l);
                let move2 = at(&values, i - 1, k - 1, l + 1);
                acc += f64::from(k) * p.mu1 * choose(&ctx, stay, move2)?;
            }
            let served2 = l.min(p.c2);
            if served2 > 0 {
                let ctx = DecisionContext::new(i, k, l - 1, Station::Station2);
                let move1 = at(&values, i - 1, k + 1, l - 1);
                let stay = at(&values, i - 1, k, l);
                acc += f64::from(served2) * p.mu2 * choose(&ctx, move1, stay)?;
            }
            values[slot(c1, i_max, s).unwrap()] = acc / d;
        }
    }
    Ok(values)
}

/// The `i = 0` layer alone.
pub fn solve_boundary(params: &SystemParams) -> ValueTable {
    let mut values = vec![0.0; boundary_len(params.c1)];
    fill_boundary(params, &mut values);
    ValueTable { params: *params, i_max: 0, kind: TableKind::Optimal, values }
}

/// Optimal values up to queue length `i_max`.
pub fn solve_optimal(params: &SystemParams, i_max: u32) -> ValueTable {
    // ties within tolerance resolve to independent service, as in the greedy rule
    let values = sweep(params, i_max, |_, stay, go| Ok(if is_positive(stay - go) { go } else { stay }))
        .expect("optimal sweep cannot fail");
    ValueTable { params: *params, i_max, kind: TableKind::Optimal, values }
}

/// Values of a fixed stationary policy up to queue length `i_max`.
pub fn solve_under_policy(params: &SystemParams, policy: &Policy, i_max: u32) -> Result<ValueTable> {
    let values = sweep(params, i_max, |ctx, v0, v1| {
        Ok(match policy.decide(ctx)? {
            Action::Independent => v0,
            Action::Collaborative => v1,
        })
    })?;
    Ok(ValueTable { params: *params, i_max, kind: TableKind::UnderPolicy(policy.id().to_string()), values })
}

pub fn diff(table: &ValueTable) -> Result<DiffTable> {
    if table.kind != TableKind::Optimal {
        return Err(Error::NotOptimal);
    }
    let states = crate::model::enumerate_states(&table.params, table.i_max);
    let entries = states
        .iter()
        .map(|s| {
            if s.k == 0 {
                f64::NAN
            } else {
                table.v(s.i, s.k, s.l) - table.v(s.i, s.k - 1, s.l + 1)
            }
        })
        .collect();
    Ok(DiffTable { params: table.params, i_max: table.i_max, entries })
}

/// `D(0,k,l) = h1/mu1 - max(l+1, C2)/C2 * h2/mu2`.
pub fn boundary_diff_formula(params: &SystemParams, l: u32) -> f64 {
    let scale = f64::from((l + 1).max(params.c2)) / f64::from(params.c2);
    params.indep_cost() - scale * params.collab_cost()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub checked: usize,
    pub max_residual: f64,
    /// Largest `|residual| / (1 + |D|)`.
    pub max_scaled_residual: f64,
    pub worst: Option<State>,
}

impl RecursionReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_scaled_residual <= tol
    }
}

/// Checks every level-`i >= 1` entry of `D` against the one-step recursion
/// selected by the sign of `D(i-1,k,l)`.
pub fn recursion_check(params: &SystemParams, diffs: &DiffTable) -> RecursionReport {
    let c1 = params.c1;
    let mut report = RecursionReport { checked: 0, max_residual: 0.0, max_scaled_residual: 0.0, worst: None };
    for i in 1..=diffs.i_max {
        for k in 1..=c1 {
            let l = c1 - k;
            let pr = probs(params, k);
            let affine = pr.p * (f64::from(i) * pr.c + pr.b);
            let prev = diffs.d(i - 1, k, l);
            let predicted = if prev >= 0.0 {
                let mut x = affine + pr.r * prev;
                if k >= 2 {
                    x += pr.q * diffs.d(i - 1, k - 1, l + 1).max(0.0);
                }
                x
            } else {
                let mut x = affine + pr.q * prev;
                if l >= 1 {
                    x += pr.r * diffs.d(i - 1, k + 1, l - 1).min(0.0);
                }
                x
            };
            let actual = diffs.d(i, k, l);
            let residual = (actual - predicted).abs();
            let scaled = residual / (1.0 + actual.abs());
            report.checked += 1;
            report.max_residual = report.max_residual.max(residual);
            if scaled > report.max_scaled_residual || report.worst.is_none() {
                report.max_scaled_residual = report.max_scaled_residual.max(scaled);
                report.worst = Some(State::new(i, k, l));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::benchmark;

    fn ex1() -> SystemParams {
        SystemParams::new(4, 2, 3.0, 0.96, 0.1, 1.0, 0.16).unwrap()
    }

    #[test]
    fn slot_matches_enumeration() {
        let p = ex1();
        for (n, s) in crate::model::enumerate_states(&p, 5).into_iter().enumerate() {
            assert_eq!(slot(p.c1, 5, s), Some(n));
        }
        assert_eq!(slot(p.c1, 5, State::new(6, 2, 2)), None);
        assert_eq!(slot(p.c1, 5, State::new(1, 1, 1)), None);
    }

    #[test]
    fn boundary_single_job() {
        let p = SystemParams::new(4, 2, 10.0, 4.0, 0.1, 1.0, 0.5).unwrap();
        let t = solve_boundary(&p);
        assert_eq!(t.v(0, 0, 0), 0.0);
        assert!((t.v(0, 1, 0) - 0.1).abs() < 1e-15);
        assert!((t.v(0, 0, 1) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn boundary_two_parallel_jobs() {
        // two independent exp(mu) jobs in parallel: cost h(1/(2mu))*2 + h/mu
        let p = SystemParams::new(2, 1, 2.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let t = solve_boundary(&p);
        assert!((t.v(0, 2, 0) - 1.0).abs() < 1e-15);
        // one job waiting behind one in service at a single Type-II server
        assert!((t.v(0, 0, 2) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_server_chain_closed_form() {
        for &(mu1, mu2, h0, h1) in &[(1.0, 2.0, 0.3, 1.0), (5.0, 0.5, 1.0, 0.2)] {
            let p = SystemParams::new(1, 1, mu1, mu2, h0, h1, 0.7).unwrap();
            let pol = benchmark(&p, "pi1").unwrap();
            let t = solve_under_policy(&p, &pol, 15).unwrap();
            let opt = solve_optimal(&p, 15);
            for i in 0..=15u32 {
                let chain: f64 = (0..=i).map(|j| f64::from(j) * h0 + h1).sum::<f64>() / mu1;
                assert!((t.v(i, 1, 0) - chain).abs() < 1e-12 * chain);
                assert!(opt.v(i, 1, 0) <= chain + 1e-12);
            }
        }
    }

    #[test]
    fn boundary_diffs_match_formula() {
        let p = ex1();
        let d = diff(&solve_optimal(&p, 0)).unwrap();
        for busy in 1..p.c1 {
            for k in 1..=busy {
                let l = busy - k;
                let want = boundary_diff_formula(&p, l);
                assert!((d.d(0, k, l) - want).abs() <= 1e-12 * want.abs().max(1e-300) + 1e-15);
            }
        }
        assert_eq!(d.get(State::new(0, 0, 1)), Err(Error::IndexOutOfSpace(State::new(0, 0, 1))));
    }

    #[test]
    fn equal_costs_cancel_below_c2() {
        let p = SystemParams::new(4, 2, 10.0, 10.0, 0.5, 1.0, 1.0).unwrap();
        let d = diff(&solve_optimal(&p, 0)).unwrap();
        assert!(d.d(0, 1, 0).abs() < 1e-15);
        assert!(d.d(0, 2, 1).abs() < 1e-15);
    }

    #[test]
    fn example1_sign_change_at_ten() {
        let d = diff(&solve_optimal(&ex1(), 30)).unwrap();
        let first = (0..=30).find(|&i| !is_positive(d.d(i, 3, 1)));
        assert_eq!(first, Some(10));
    }

    #[test]
    fn optimal_values_increase_in_queue() {
        let p = ex1();
        let t = solve_optimal(&p, 25);
        for i in 0..25 {
            for k in 0..=p.c1 {
                assert!(t.v(i + 1, k, p.c1 - k) >= t.v(i, k, p.c1 - k));
            }
        }
    }

    #[test]
    fn diff_requires_optimal_table() {
        let p = ex1();
        let pol = benchmark(&p, "pi3").unwrap();
        let t = solve_under_policy(&p, &pol, 3).unwrap();
        assert_eq!(diff(&t), Err(Error::NotOptimal));
    }

    #[test]
    fn recursion_residuals_vanish() {
        for p in [
            ex1(),
            SystemParams::new(4, 2, 1.0, 1.5, 2.0, 8.0, 1.0).unwrap(),
            SystemParams::new(4, 2, 3.0, 30.0, 0.1, 1.0, 12.5).unwrap(),
            SystemParams::new(3, 1, 10.0, 25.0, 1.0, 1.0, 2.0).unwrap(),
        ] {
            let d = diff(&solve_optimal(&p, 40)).unwrap();
            let rep = recursion_check(&p, &d);
            assert_eq!(rep.checked, 40 * p.c1 as usize);
            assert!(rep.passes(1e-9), "{p:?}: {rep:?}");
        }
    }

    #[test]
    fn csv_dump_layout() {
        let p = SystemParams::new(1, 1, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let t = solve_optimal(&p, 1);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "i,k,l,value");
        assert_eq!(lines.len(), 1 + 5);
        assert_eq!(lines[1], "0,0,0,0");
        let mut buf = Vec::new();
        diff(&t).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("i,k,l,D"));
        assert_eq!(text.lines().count(), 1 + 2);
    }
}
