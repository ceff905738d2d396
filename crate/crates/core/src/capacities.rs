//! Capacity sequences, the systolic S¹-index and related bounds.
//!
//! Ellipsoids `E(a₁, …, aₙ)` have `c_i = M_i(a)`, the `i`-th smallest entry of
//! the merged multiples `{j·a_k}` counted with repetition; polydiscs
//! `P(a, …, a)` have `c_i = i·a`. The systolic S¹-index is the length of the
//! plateau `c_i = c₁`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dual_solver::{minimize, SolveConfig};
use crate::error::{Error, Result};
use crate::geometry::Body;

/// Relative tolerance for closed-form sequences.
pub const CLOSED_FORM_REL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Numeric,
}

/// `c₁, …, c_m` with provenance and the tolerance used for comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySequence {
    pub values: Vec<f64>,
    pub provenance: Vec<Provenance>,
    pub rel_tol: f64,
}

impl CapacitySequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn c1(&self) -> f64 {
        self.values[0]
    }

    /// Multiplies every value by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    /// A one-entry sequence holding a numeric `c₁`.
    pub fn numeric(c1: f64, rel_tol: f64) -> Self {
        Self {
            values: vec![c1],
            provenance: vec![Provenance::Numeric],
            rel_tol,
        }
    }
}

/// Index of a capacity sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexReport {
    pub index: usize,
    /// The plateau reaches the last computed entry, so the true index may be larger.
    pub lower_bound_only: bool,
}

/// Which hypothesis selects the bound of [`index_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexBoundFlavor {
    General,
    CentrallySymmetric,
    S1Invariant,
    UniquenessOfSystoles,
}

fn check_positive(a: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("no parameters given".into()));
    }
    if a.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "parameters must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Exact rational value of `v`, when `v` is one (within the `i64` range).
fn exact_ratio(v: f64) -> Option<Ratio<i64>> {
    let r = Ratio::<i64>::approximate_float(v)?;
    (*r.numer() as f64 / *r.denom() as f64 == v).then_some(r)
}

/// `j · a_k`, ordered exactly when rational keys are available.
#[derive(Clone, Copy, Debug)]
struct StreamHead {
    j: u64,
    stream: usize,
    value: f64,
    key: Option<(i128, i128)>,
}

impl StreamHead {
    fn cmp_value(&self, other: &Self) -> Ordering {
        match (self.key, other.key) {
            (Some((p1, q1)), Some((p2, q2))) => (p1 * q2).cmp(&(p2 * q1)),
            _ => self.value.total_cmp(&other.value),
        }
    }
}

impl PartialEq for StreamHead {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for StreamHead {}

impl PartialOrd for StreamHead {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for StreamHead {
    // reversed so that the max-heap pops the smallest value, lowest stream first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cmp_value(self)
            .then_with(|| other.stream.cmp(&self.stream))
    }
}

/// `M₁(a), …, M_m(a)`: the first `m` merged multiples of the semi-axes.
pub fn ellipsoid_sequence(a: &[f64], m: usize) -> Result<CapacitySequence> {
    check_positive(a)?;
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one capacity".into()));
    }
    let ratios: Option<Vec<Ratio<i64>>> = a.iter().map(|&v| exact_ratio(v)).collect();
    let head = |stream: usize, j: u64| {
        let key = ratios.as_ref().map(|r| {
            let r = r[stream];
            (*r.numer() as i128 * j as i128, *r.denom() as i128)
        });
        let value = match key {
            Some((p, q)) => p as f64 / q as f64,
            None => j as f64 * a[stream],
        };
        StreamHead {
            j,
            stream,
            value,
            key,
        }
    };
    let mut heap: BinaryHeap<StreamHead> = (0..a.len()).map(|i| head(i, 1)).collect();
    let mut values = Vec::with_capacity(m);
    while values.len() < m {
        let top = heap.pop().expect("streams are infinite");
        values.push(top.value);
        heap.push(head(top.stream, top.j + 1));
    }
    Ok(CapacitySequence {
        values,
        provenance: vec![Provenance::ClosedForm; m],
        rel_tol: CLOSED_FORM_REL_TOL,
    })
}

/// `c_i(P(a, …, a)) = i·a` for the polydisc in ℝ²ⁿ.
pub fn polydisc_sequence(a: f64, n: usize, m: usize) -> Result<CapacitySequence> {
    check_positive(&[a])?;
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("n and m must be positive".into()));
    }
    Ok(CapacitySequence {
        values: (1..=m).map(|i| i as f64 * a).collect(),
        provenance: vec![Provenance::ClosedForm; m],
        rel_tol: CLOSED_FORM_REL_TOL,
    })
}

/// Numeric `c₁`: the best value over all solver runs.
pub fn c1_numeric(body: &Body, cfg: &SolveConfig) -> Result<f64> {
    Ok(minimize(body, cfg)?[0].value)
}

/// Largest `i` with `c_i ≤ c₁(1 + rel_tol)`.
pub fn sys_index(seq: &CapacitySequence) -> IndexReport {
    let limit = seq.c1() * (1.0 + seq.rel_tol);
    let index = seq.values.iter().take_while(|&&v| v <= limit).count();
    IndexReport {
        index,
        lower_bound_only: index == seq.len(),
    }
}

/// `c_n ≤ c₁(1 + rel_tol)`.
pub fn is_generalized_zoll(seq: &CapacitySequence, n: usize) -> Result<bool> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if seq.len() < n {
        return Err(Error::SequenceTooShort {
            len: seq.len(),
            needed: n,
        });
    }
    Ok(seq.values[n - 1] <= seq.c1() * (1.0 + seq.rel_tol))
}

/// Upper bound for the index in dimension `2n`.
pub fn index_bound(n: usize, flavor: IndexBoundFlavor) -> usize {
    match flavor {
        IndexBoundFlavor::General => 4 * n * n * n,
        IndexBoundFlavor::CentrallySymmetric => 2 * n * n,
        IndexBoundFlavor::S1Invariant | IndexBoundFlavor::UniquenessOfSystoles => n,
    }
}

/// `c₁ⁿ / (n! · Vol)`.
pub fn systolic_ratio(c1: f64, volume: f64, n: usize) -> Result<f64> {
    if !(volume > 0.0) {
        return Err(Error::InvalidArgument("volume must be positive".into()));
    }
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    Ok(c1.powi(n as i32) / (fact * volume))
}
