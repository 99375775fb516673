//! Affine heuristic constants, heuristic and actual integer thresholds,
//! regime classification and the sufficient condition for exactness.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{service_rate, CostOrder, CostRegime, SystemParams, TieRouting};
use crate::solver::{boundary_diff_formula, diff, is_positive, solve_optimal, DiffTable};

/// Distance within which `R1` and `R2(k)` snap to an integer before rounding.
pub const SNAP_TOL: f64 = 1e-9;

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOL {
        r
    } else {
        x
    }
}

fn floor_snapped(x: f64) -> f64 {
    snap(x).floor()
}

fn ceil_snapped(x: f64) -> f64 {
    snap(x).ceil()
}

/// How a threshold search treats a zero difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TieSide {
    /// A tie favours collaborative service (the reported convention).
    #[default]
    Collaborate,
    Independent,
}

/// First integer past the root `x` of a decreasing affine surrogate, clamped
/// at zero. With `TieSide::Collaborate` an integral root is skipped.
fn crossing_down(x: f64, tie: TieSide) -> u32 {
    match tie {
        TieSide::Collaborate => to_count(floor_snapped(x) + 1.0),
        TieSide::Independent => to_count(ceil_snapped(x)),
    }
}

/// First integer past the root `x` of an increasing affine surrogate.
fn crossing_up(x: f64, tie: TieSide) -> u32 {
    match tie {
        TieSide::Collaborate => to_count(ceil_snapped(x)),
        TieSide::Independent => to_count(floor_snapped(x) + 1.0),
    }
}

fn to_count(x: f64) -> u32 {
    if x <= 0.0 {
        0
    } else if x >= f64::from(u32::MAX) {
        u32::MAX
    } else {
        x as u32
    }
}

/// Integer threshold, possibly infinite. Serializes `Infinite` as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Threshold {
    Finite(u32),
    Infinite,
}

impl Threshold {
    pub fn finite(self) -> Option<u32> {
        match self {
            Threshold::Finite(n) => Some(n),
            Threshold::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Threshold::Infinite
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(n) => write!(f, "{n}"),
            Threshold::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Finite(n) => ser.serialize_u32(*n),
            Threshold::Infinite => ser.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u32),
            S(String),
        }
        match Raw::deserialize(de)? {
            Raw::N(n) => Ok(Threshold::Finite(n)),
            Raw::S(s) if s == "inf" => Ok(Threshold::Infinite),
            Raw::S(s) => Err(serde::de::Error::custom(format!("bad threshold `{s}`"))),
        }
    }
}

/// Constants of the affine surrogate `H`.
///
/// `y[k-1]` and `r2[k-1]` belong to index `k = 1..=C1`; `z[l]` to
/// `l = 0..C1`. Throughout, `k + l = C1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicConstants {
    pub m: f64,
    pub b: f64,
    pub c: f64,
    pub b_prime: f64,
    pub c_prime: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// `-b/c`, absent when `mu1 == mu2`.
    pub r1: Option<f64>,
    pub r2: Vec<f64>,
}

impl HeuristicConstants {
    pub fn r1(&self) -> Result<f64> {
        self.r1.ok_or(Error::DegenerateSlope)
    }

    pub fn y_k(&self, k: u32) -> f64 {
        self.y[k as usize - 1]
    }

    pub fn z_l(&self, l: u32) -> f64 {
        self.z[l as usize]
    }

    pub fn r2_k(&self, k: u32) -> f64 {
        self.r2[k as usize - 1]
    }
}

pub fn constants(params: &SystemParams) -> HeuristicConstants {
    let p = params;
    let (c1, c2) = (f64::from(p.c1), f64::from(p.c2));
    let m = p.m();
    let b = p.h1 / p.mu1 - p.h2 / p.mu2;
    let c = (p.h0 / c1) * (1.0 / p.mu1 - 1.0 / p.mu2);
    let b_prime = (p.h1 - p.h2) / p.mu1 - c1 * p.h2 / (c2 * p.mu2);
    let c_prime = -p.h0 / (c2 * p.mu2);
    let y: Vec<f64> = (1..=p.c1)
        .map(|k| f64::from(k - 1) + f64::from((p.c1 - k).min(p.c2)) * m)
        .collect();
    let z = (0..p.c1).map(|l| f64::from(p.c1 - l - 1) / m + f64::from(l)).collect();
    let r1 = if p.mu1 == p.mu2 { None } else { Some(-b / c) };
    let r2 = y.iter().map(|yk| -b_prime / c_prime + yk).collect();
    HeuristicConstants { m, b, c, b_prime, c_prime, y, z, r1, r2 }
}

/// Transition weights and affine coefficients of the one-step recursion for
/// `D` at index `k` (with `l = C1 - k`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probs {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub b: f64,
    pub c: f64,
}

pub fn probs(params: &SystemParams, k: u32) -> Probs {
    let p = params;
    let l = p.c1 - k;
    let d_here = service_rate(p, k, l);
    let d_next = service_rate(p, k - 1, l + 1);
    let servers = if l < p.c2 { p.c1 } else { p.c2 };
    let pk = f64::from(servers) * p.mu1 * p.mu2 / (d_here * d_next);
    let qk = f64::from(k - 1) * p.mu1 / d_next;
    let rk = f64::from(l.min(p.c2)) * p.mu2 / d_here;
    let hc = constants(p);
    let (b, c) = if l < p.c2 { (hc.b, hc.c) } else { (hc.b_prime, hc.c_prime) };
    Probs { p: pk, q: qk, r: rk, b, c }
}

/// Value of the affine surrogate `H(i,k,l)`.
pub fn heuristic_h(params: &SystemParams, i: u32, k: u32) -> f64 {
    let l = params.c1 - k;
    let hc = constants(params);
    if l >= params.c2 {
        if params.queue_blocks_collab(l) {
            -1.0
        } else {
            (f64::from(i) - hc.y_k(k)) * hc.c_prime + hc.b_prime
        }
    } else {
        f64::from(i) * hc.c + hc.b
    }
}

/// Which index a profile is keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    /// Keyed by `k`; collaborate while the queue is short.
    Collaborative,
    /// Keyed by `l`; collaborate once the queue is long.
    Independent,
}

impl Orientation {
    pub fn of(regime: CostRegime) -> Self {
        match regime {
            CostRegime::Lowcost => Orientation::Collaborative,
            CostRegime::Highcost => Orientation::Independent,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Orientation::Collaborative => "Collaborative",
            Orientation::Independent => "Independent",
        }
    }

    /// Indices in ascending order: `k = 1..=C1` or `l = 0..C1`.
    pub fn indices(self, c1: u32) -> Vec<u32> {
        match self {
            Orientation::Collaborative => (1..=c1).collect(),
            Orientation::Independent => (0..c1).collect(),
        }
    }

    /// `(k, l)` for an index of this orientation.
    pub fn split(self, c1: u32, index: u32) -> (u32, u32) {
        match self {
            Orientation::Collaborative => (index, c1 - index),
            Orientation::Independent => (c1 - index, index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileKind {
    Actual,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub index: u32,
    pub threshold: Threshold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub orientation: Orientation,
    pub kind: ProfileKind,
    pub entries: Vec<ProfileEntry>,
    /// Depth of the table searched; actual profiles only.
    pub i_max_used: Option<u32>,
}

impl ThresholdProfile {
    pub fn get(&self, index: u32) -> Option<Threshold> {
        self.entries.iter().find(|e| e.index == index).map(|e| e.threshold)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> io::Result<()> {
        if header {
            writeln!(out, "index,kind,orientation,threshold")?;
        }
        let kind = match self.kind {
            ProfileKind::Actual => "Actual",
            ProfileKind::Heuristic => "Heuristic",
        };
        for e in &self.entries {
            writeln!(out, "{},{},{},{}", e.index, kind, self.orientation.name(), e.threshold)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    FiniteExpected,
    ProvablyInfinite,
    AlwaysZero,
}

/// Regime class of one index (`k` for lowcost, `l` for highcost).
pub fn classify(params: &SystemParams, index: u32, regime: CostRegime) -> Classification {
    let (_, l) = Orientation::of(regime).split(params.c1, index);
    match regime {
        CostRegime::Lowcost => {
            if l < params.c2 {
                if params.mu1 <= params.mu2 {
                    Classification::ProvablyInfinite
                } else {
                    Classification::FiniteExpected
                }
            } else if params.queue_blocks_collab(l) {
                Classification::AlwaysZero
            } else {
                Classification::FiniteExpected
            }
        }
        CostRegime::Highcost => {
            if params.mu1 < params.mu2 && l < params.c2 {
                Classification::FiniteExpected
            } else {
                Classification::ProvablyInfinite
            }
        }
    }
}

/// Heuristic threshold at one index.
pub fn heuristic_threshold(params: &SystemParams, index: u32, regime: CostRegime) -> Threshold {
    heuristic_threshold_tie(params, index, regime, TieSide::Collaborate)
}

pub fn heuristic_threshold_tie(params: &SystemParams, index: u32, regime: CostRegime, tie: TieSide) -> Threshold {
    let hc = constants(params);
    match regime {
        CostRegime::Lowcost => {
            let k = index;
            let l = params.c1 - k;
            if l >= params.c2 {
                if params.queue_blocks_collab(l) {
                    Threshold::Finite(0)
                } else {
                    Threshold::Finite(crossing_down(hc.r2_k(k), tie))
                }
            } else if params.mu1 > params.mu2 {
                Threshold::Finite(crossing_down(hc.r1.expect("mu1 != mu2"), tie))
            } else {
                Threshold::Infinite
            }
        }
        CostRegime::Highcost => {
            let l = index;
            if l < params.c2 && params.mu1 < params.mu2 {
                Threshold::Finite(crossing_up(hc.r1.expect("mu1 != mu2"), tie))
            } else {
                Threshold::Infinite
            }
        }
    }
}

pub fn heuristic_profile(params: &SystemParams) -> ThresholdProfile {
    heuristic_profile_in(params, params.cost_regime(TieRouting::default()))
}

pub fn heuristic_profile_in(params: &SystemParams, regime: CostRegime) -> ThresholdProfile {
    let orientation = Orientation::of(regime);
    let entries = orientation
        .indices(params.c1)
        .into_iter()
        .map(|index| ProfileEntry { index, threshold: heuristic_threshold(params, index, regime) })
        .collect();
    ThresholdProfile { orientation, kind: ProfileKind::Heuristic, entries, i_max_used: None }
}

fn ratio_bound(num: f64, den: f64) -> Option<u32> {
    (den > 0.0).then(|| to_count((num / den).ceil() + 1.0))
}

/// Queue length by which the sign of `D` at this index must have changed,
/// from the explicit linear bounds on `D` plus a margin of `C1`.
pub fn search_cap(params: &SystemParams, index: u32, regime: CostRegime) -> u32 {
    let p = params;
    let (k, l) = Orientation::of(regime).split(p.c1, index);
    let dd = service_rate(p, k, l) * service_rate(p, k - 1, l + 1);
    let mut cap = 0u32;
    if let Threshold::Finite(h) = heuristic_threshold(p, index, regime) {
        cap = cap.max(h.saturating_add(p.c1));
    }
    match regime {
        CostRegime::Lowcost => {
            if p.mu1 >= p.mu2 {
                let indicator = if l < p.c2 { p.mu2 } else { 0.0 };
                let slope = (p.mu1 - indicator) * p.h0 / dd;
                if let Some(n) = ratio_bound(boundary_diff_formula(p, l), slope) {
                    cap = cap.max(n);
                }
            }
            if p.mu2 >= p.mu1 && l >= p.c2 {
                let slope = p.mu1 * p.h0 / dd;
                let offset = p.indep_cost() - f64::from(l + 1) / f64::from(p.c2) * p.collab_cost();
                if let Some(n) = ratio_bound(offset, slope) {
                    cap = cap.max(n);
                }
            }
        }
        CostRegime::Highcost => {
            if p.mu2 > p.mu1 && l < p.c2 {
                let slope = (p.mu2 - p.mu1) * p.h0 / dd;
                if let Some(n) = ratio_bound(-constants(p).b, slope) {
                    cap = cap.max(n);
                }
            }
        }
    }
    cap.saturating_add(p.c1)
}

/// Largest search cap over every finite index of the regime's orientation.
pub fn required_depth(params: &SystemParams, regime: CostRegime) -> u32 {
    Orientation::of(regime)
        .indices(params.c1)
        .into_iter()
        .filter(|&n| classify(params, n, regime) != Classification::ProvablyInfinite)
        .map(|n| search_cap(params, n, regime))
        .max()
        .unwrap_or(0)
}

pub fn actual_profile(params: &SystemParams, diffs: &DiffTable) -> Result<ThresholdProfile> {
    actual_profile_in(params, diffs, params.cost_regime(TieRouting::default()))
}

/// First sign change of `D` per index: first negative entry for the
/// collaborative orientation, first non-negative entry for the independent
/// one. Zeros count as ties and favour collaboration.
pub fn actual_profile_in(params: &SystemParams, diffs: &DiffTable, regime: CostRegime) -> Result<ThresholdProfile> {
    actual_profile_tie(params, diffs, regime, TieSide::Collaborate)
}

pub fn actual_profile_tie(
    params: &SystemParams,
    diffs: &DiffTable,
    regime: CostRegime,
    tie: TieSide,
) -> Result<ThresholdProfile> {
    let orientation = Orientation::of(regime);
    let mut entries = Vec::new();
    for index in orientation.indices(params.c1) {
        let threshold = if classify(params, index, regime) == Classification::ProvablyInfinite {
            Threshold::Infinite
        } else {
            let (k, l) = orientation.split(params.c1, index);
            let cap = search_cap(params, index, regime);
            let limit = cap.min(diffs.i_max());
            let hit = (0..=limit).find(|&i| {
                let d = diffs.d(i, k, l);
                match (regime, tie) {
                    (CostRegime::Lowcost, TieSide::Collaborate) => is_positive(-d),
                    (CostRegime::Lowcost, TieSide::Independent) => !is_positive(d),
                    (CostRegime::Highcost, TieSide::Collaborate) => !is_positive(-d),
                    (CostRegime::Highcost, TieSide::Independent) => is_positive(d),
                }
            });
            match hit {
                Some(i) => Threshold::Finite(i),
                None if diffs.i_max() < cap => {
                    return Err(Error::TableTooShallow { needed: cap, i_max: diffs.i_max() })
                }
                None => return Err(Error::CapExceeded { index, cap }),
            }
        };
        entries.push(ProfileEntry { index, threshold });
    }
    Ok(ThresholdProfile { orientation, kind: ProfileKind::Actual, entries, i_max_used: Some(diffs.i_max()) })
}

/// Actual and heuristic profiles, solving the table as deep as needed.
pub fn solve_thresholds(params: &SystemParams, regime: CostRegime) -> Result<(ThresholdProfile, ThresholdProfile)> {
    let depth = required_depth(params, regime);
    let diffs = diff(&solve_optimal(params, depth))?;
    Ok((actual_profile_in(params, &diffs, regime)?, heuristic_profile_in(params, regime)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition1 {
    HoldsQueueSide,
    HoldsCollabSide,
    Fails,
    NotApplicable,
}

impl fmt::Display for Condition1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Sufficient condition for `i_H(k) = i_D(k)` when `l >= C2` under a strict
/// lowcost ordering.
pub fn condition1(params: &SystemParams, k: u32) -> Condition1 {
    let p = params;
    if k == 0 || k > p.c1 {
        return Condition1::NotApplicable;
    }
    let l = p.c1 - k;
    if p.regime().cost_order != CostOrder::IndepCostlier
        || l < p.c2
        || p.queue_blocks_collab(l)
        || p.h0 == p.h2
    {
        return Condition1::NotApplicable;
    }
    let hc = constants(p);
    let ih = match heuristic_threshold(p, k, CostRegime::Lowcost) {
        Threshold::Finite(n) => f64::from(n),
        Threshold::Infinite => return Condition1::NotApplicable,
    };
    let c2m = f64::from(p.c2) * hc.m;
    let r = c2m / (1.0 + c2m);
    let y = hc.y_k(k);
    let r2 = hc.r2_k(k);
    let decay = r.powf(ih - f64::from(k));
    if p.h0 > p.h2 {
        if y * decay < p.h0 / (p.h0 - p.h2) * (r2 - (ih - 1.0)) {
            Condition1::HoldsQueueSide
        } else {
            Condition1::Fails
        }
    } else {
        let pr = probs(p, k);
        if pr.r / (1.0 - pr.q) * y * decay <= p.h0 / (p.h2 - p.h0) * (ih - r2) {
            Condition1::HoldsCollabSide
        } else {
            Condition1::Fails
        }
    }
}
