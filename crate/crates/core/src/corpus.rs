//! Executable corpus of explicit systoles: the piecewise-linear loop `γ` on
//! `B∞ × B₁` and its zigzag approximants `γ_n`, the rectangle and diagonal
//! systole families of the same body, and the circle families of the
//! polydisc `P(1, 1)`, together with a regression runner over all of them.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::capacities::{is_generalized_zoll, polydisc_sequence, sys_index};
use crate::dual_solver::{
    certify_loop, inclusion_residual, minimize, InclusionOptions, SolveConfig, SystoleResult,
};
use crate::error::{Error, Result};
use crate::geometry::{Body, BodySpec};
use crate::linalg::dist_to_hull;
use crate::loops::{apply_j0, FourierLoop, TimeLoop};
use crate::zoll::{explore, uniqueness_probe, ZollTolerances};

/// Grid resolution for regression checks.
pub const REGRESSION_GRID: usize = 10_000;
/// Sub-grid time offset, in grid cells, that keeps corners off the samples.
pub const GENERIC_OFFSET: f64 = 0.37;
/// Residual bound for analytic loops outside corner windows.
pub const ANALYTIC_TOL: f64 = 1e-9;

/// Closed piecewise-linear loop through `points[i]` at times `knots[i]`,
/// with `knots[0] = 0` and the last segment returning to `points[0]` at 1.
/// A final knot at 1 closes the loop with a zero-length segment.
#[derive(Clone, Debug, PartialEq)]
pub struct PolygonalLoop {
    knots: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl PolygonalLoop {
    /// Zero-length segments are dropped.
    pub fn new(knots: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        if knots.len() != points.len() || knots.len() < 2 {
            return Err(Error::InvalidArgument(
                "need matching knots and points, at least two".into(),
            ));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| w[1] < w[0]) || *knots.last().unwrap() > 1.0
        {
            return Err(Error::InvalidArgument(
                "knots must increase from 0 to at most 1".into(),
            ));
        }
        let dim = points[0].len();
        if dim == 0 || dim % 2 == 1 {
            return Err(Error::OddDimension(dim));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        let (mut k, mut p) = (vec![knots[0]], vec![points[0].clone()]);
        for i in 1..knots.len() {
            if knots[i] > *k.last().unwrap() {
                k.push(knots[i]);
                p.push(points[i].clone());
            } else {
                *p.last_mut().unwrap() = points[i].clone();
            }
        }
        if *k.last().unwrap() == 1.0 {
            k.pop();
            p.pop();
        }
        if k.len() < 2 {
            return Err(Error::InvalidArgument(
                "loop has fewer than two segments".into(),
            ));
        }
        Ok(Self {
            knots: k,
            points: p,
        })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn segment(&self, t: f64) -> (usize, f64, f64) {
        let t = t.rem_euclid(1.0);
        let i = self.knots.partition_point(|&k| k <= t) - 1;
        let end = self.knots.get(i + 1).copied().unwrap_or(1.0);
        (i, t, end)
    }

    fn endpoint(&self, i: usize) -> &[f64] {
        &self.points[(i + 1) % self.points.len()]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let (i, t, end) = self.segment(t);
        let f = (t - self.knots[i]) / (end - self.knots[i]);
        self.points[i]
            .iter()
            .zip(self.endpoint(i))
            .map(|(a, b)| a + f * (b - a))
            .collect()
    }

    /// Right derivative.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let (i, _, end) = self.segment(t);
        let dt = end - self.knots[i];
        self.points[i]
            .iter()
            .zip(self.endpoint(i))
            .map(|(a, b)| (b - a) / dt)
            .collect()
    }

    /// Exact action, the polygon formula over the vertices.
    pub fn action(&self) -> f64 {
        TimeLoop::new(self.points.clone(), None)
            .map(|g| g.action())
            .unwrap_or(0.0)
    }

    /// Positions at `t_j = (j + offset)/M`; velocities are left to finite
    /// differences.
    pub fn sample(&self, m: usize, offset: f64) -> Result<TimeLoop> {
        let samples = (0..m)
            .map(|j| self.eval((j as f64 + offset) / m as f64))
            .collect();
        TimeLoop::new(samples, None)
    }

    /// Positions and right derivatives at `t_j = j/M`.
    pub fn sample_exact(&self, m: usize) -> Result<TimeLoop> {
        TimeLoop::from_fn(m, |t| (self.eval(t), self.velocity(t)))
    }

    /// Image under `(x, y) ↦ (Ax, Ay)` for a signed permutation `A` of ℝⁿ,
    /// given as `(index, sign)` per output coordinate.
    pub fn transformed(&self, perm: &[(usize, f64)]) -> Result<Self> {
        let n = self.dim() / 2;
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: perm.len(),
            });
        }
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = vec![0.0; 2 * n];
                for (i, &(src, sign)) in perm.iter().enumerate() {
                    q[i] = sign * p[src];
                    q[n + i] = sign * p[n + src];
                }
                q
            })
            .collect();
        Self::new(self.knots.clone(), points)
    }

    /// `∫_a^b |γ̇ − η̇| dt`, exact for piecewise-linear loops.
    pub fn velocity_gap(&self, other: &PolygonalLoop, a: f64, b: f64) -> f64 {
        let mut cuts: Vec<f64> = self
            .knots
            .iter()
            .chain(&other.knots)
            .copied()
            .filter(|&k| k > a && k < b)
            .chain([a, b])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let (u, v) = (self.velocity(mid), other.velocity(mid));
                let d: f64 = u.iter().zip(&v).map(|(p, q)| (p - q) * (p - q)).sum();
                d.sqrt() * (w[1] - w[0])
            })
            .sum()
    }
}

/// The loop `γ` on `∂(B∞ × B₁)` with action 4.
pub fn bxb1_gamma_loop() -> PolygonalLoop {
    PolygonalLoop::new(
        vec![0.0, 0.25, 0.5, 0.75],
        vec![
            vec![-1.0, 0.0, -1.0, 0.0],
            vec![1.0, 0.0, -1.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![-1.0, 0.0, 1.0, 0.0],
        ],
    )
    .expect("static loop is valid")
}

/// Zigzag approximant `γ_n`, equal to `γ` on `[1/4, 1]`.
pub fn bxb1_gamma_n_loop(n: usize) -> Result<PolygonalLoop> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut knots = Vec::new();
    let mut points = Vec::new();
    for k in 0..2 * n {
        let t = k as f64 / (8 * n) as f64;
        let x2 = if k % 2 == 1 { 1.0 / n as f64 } else { 0.0 };
        knots.push(t);
        points.push(vec![-1.0 + 8.0 * t, x2, -1.0, 0.0]);
    }
    let g = bxb1_gamma_loop();
    knots.extend_from_slice(&g.knots[1..]);
    points.extend_from_slice(&g.points[1..]);
    PolygonalLoop::new(knots, points)
}

/// `γ` sampled at `t_j = j/M`.
pub fn bxb1_gamma(m: usize) -> Result<TimeLoop> {
    bxb1_gamma_loop().sample(m, 0.0)
}

/// `γ_n` sampled at `t_j = j/M`.
pub fn bxb1_gamma_n(n: usize, m: usize) -> Result<TimeLoop> {
    bxb1_gamma_n_loop(n)?.sample(m, 0.0)
}

/// Rectangle systole on `B∞ × B₁`: the `y`-projection runs around the
/// rectangle `|y₁| ≤ 1 − c, |y₂| ≤ c`, the `x`-projection starts at `(1, s)`
/// and alternates between edges of the square along diagonal directions.
/// `c = 0` gives loops through the corners `(±1, 0)` of the diamond, and
/// `c = 0, s = ±1` the diagonal systoles.
pub fn bxb1_rectangle_loop(c: f64, s: f64) -> Result<PolygonalLoop> {
    if !(0.0..1.0).contains(&c) || !(-1.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "rectangle parameters (c, s) = ({c}, {s}) outside [0, 1) × [−1, 1]"
        )));
    }
    let w = 1.0 - c;
    let durations = [w / 4.0, (1.0 + s) / 8.0, c / 4.0, (1.0 - s) / 8.0];
    let points = vec![
        vec![1.0, s, -w, c],
        vec![1.0, s, w, c],
        vec![-s, -1.0, w, c],
        vec![-s, -1.0, w, -c],
        vec![-1.0, -s, w, -c],
        vec![-1.0, -s, -w, -c],
        vec![s, 1.0, -w, -c],
        vec![s, 1.0, -w, c],
    ];
    let mut knots = vec![0.0];
    for i in 0..7 {
        knots.push(knots[i] + durations[i % 4]);
    }
    PolygonalLoop::new(knots, points)
}

/// The eight signed permutations of ℝ²; each acts symplectically on
/// `B∞ × B₁` by `(x, y) ↦ (Ax, Ay)`.
pub fn bxb1_symmetries() -> Vec<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for swap in [false, true] {
        for s0 in [1.0, -1.0] {
            for s1 in [1.0, -1.0] {
                let (a, b) = if swap { (1, 0) } else { (0, 1) };
                out.push(vec![(a, s0), (b, s1)]);
            }
        }
    }
    out
}

/// Reference to an explicit loop of the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loop", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoopRef {
    Gamma,
    GammaN { n: usize },
    Rectangle { c: f64, s: f64, symmetry: usize },
    Polydisc { family: u8, z_fixed: [f64; 2] },
}

impl LoopRef {
    pub fn label(&self) -> String {
        match self {
            LoopRef::Gamma => "gamma".into(),
            LoopRef::GammaN { n } => format!("gamma_{n}"),
            LoopRef::Rectangle { c, s, symmetry } => format!("rectangle(c={c},s={s})#{symmetry}"),
            LoopRef::Polydisc { family, z_fixed } => {
                format!("polydisc{family}(z=({},{}))", z_fixed[0], z_fixed[1])
            }
        }
    }

    /// The piecewise-linear loop, for the `B∞ × B₁` references.
    pub fn polygonal(&self) -> Result<Option<PolygonalLoop>> {
        Ok(match self {
            LoopRef::Gamma => Some(bxb1_gamma_loop()),
            LoopRef::GammaN { n } => Some(bxb1_gamma_n_loop(*n)?),
            LoopRef::Rectangle { c, s, symmetry } => {
                let sym = bxb1_symmetries();
                let perm = sym.get(*symmetry).ok_or_else(|| {
                    Error::InvalidArgument(format!("symmetry index {symmetry} out of range"))
                })?;
                Some(bxb1_rectangle_loop(*c, *s)?.transformed(perm)?)
            }
            LoopRef::Polydisc { .. } => None,
        })
    }

    /// Samples on `M` points: polygonal loops at the sub-grid `offset`
    /// without derivatives, polydisc circles exactly with derivatives.
    pub fn sample(&self, m: usize, offset: f64) -> Result<TimeLoop> {
        match self {
            LoopRef::Polydisc { family, z_fixed } => {
                polydisc_systole(*family, (z_fixed[0], z_fixed[1]), m)
            }
            _ => self
                .polygonal()?
                .expect("polygonal reference")
                .sample(m, offset),
        }
    }
}

/// Rectangle references on a parameter grid, with all symmetry images.
pub fn bxb1_family_refs(cs: &[f64], ss: &[f64]) -> Vec<LoopRef> {
    let mut out = Vec::new();
    for &c in cs {
        for &s in ss {
            for symmetry in 0..bxb1_symmetries().len() {
                out.push(LoopRef::Rectangle { c, s, symmetry });
            }
        }
    }
    out
}

/// Rectangle parameters shipped with the corpus.
pub const FAMILY_C: [f64; 4] = [0.0, 0.25, 0.5, 0.75];
pub const FAMILY_S: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

/// Systole of `P(1, 1)`: family 1 is `(e^{2πit}/√π, z)`, family 2 is
/// `(z, e^{2πit}/√π)`, with `π|z|² ≤ 1`.
pub fn polydisc_systole(family: u8, z_fixed: (f64, f64), m: usize) -> Result<TimeLoop> {
    if family != 1 && family != 2 {
        return Err(Error::InvalidArgument(format!(
            "polydisc family {family} is not 1 or 2"
        )));
    }
    if PI * (z_fixed.0 * z_fixed.0 + z_fixed.1 * z_fixed.1) > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(
            "fixed factor lies outside the disc of area 1".into(),
        ));
    }
    let r = 1.0 / PI.sqrt();
    let (moving, fixed) = if family == 1 { (0, 1) } else { (1, 0) };
    TimeLoop::from_fn(m, |t| {
        let (sn, cs) = (2.0 * PI * t).sin_cos();
        let (mut p, mut v) = (vec![0.0; 4], vec![0.0; 4]);
        p[moving] = r * cs;
        p[2 + moving] = r * sn;
        v[moving] = -2.0 * PI * r * sn;
        v[2 + moving] = 2.0 * PI * r * cs;
        p[fixed] = z_fixed.0;
        p[2 + fixed] = z_fixed.1;
        (p, v)
    })
}

/// `H(z) = max_j π|z_j|²/a` for the polydisc `P(a, …, a)`.
fn polydisc_gauge2(p: &[f64], a: f64) -> f64 {
    let n = p.len() / 2;
    (0..n)
        .map(|j| PI * (p[j] * p[j] + p[n + j] * p[n + j]) / a)
        .fold(0.0, f64::max)
}

/// Generators `2πz_j/a` of `∂H` over the planes within `tol` of the maximum.
fn polydisc_generators(p: &[f64], a: f64, tol: f64) -> Vec<Vec<f64>> {
    let n = p.len() / 2;
    let h = polydisc_gauge2(p, a);
    (0..n)
        .filter(|&j| PI * (p[j] * p[j] + p[n + j] * p[n + j]) / a >= h * (1.0 - tol))
        .map(|j| {
            let mut g = vec![0.0; 2 * n];
            g[j] = 2.0 * PI * p[j] / a;
            g[n + j] = 2.0 * PI * p[n + j] / a;
            g
        })
        .collect()
}

/// Certified result for a polydisc loop.
fn polydisc_result(gamma: &TimeLoop, a: f64, modes: usize) -> Result<SystoleResult> {
    let action = gamma.action();
    let vel = gamma.velocities();
    let mut incl: f64 = 0.0;
    let mut bres: f64 = 0.0;
    for (p, v) in gamma.samples().iter().zip(&vel) {
        let target: Vec<f64> = v.iter().map(|x| x / action).collect();
        let gens: Vec<Vec<f64>> = polydisc_generators(p, a, ANALYTIC_TOL)
            .iter()
            .map(|g| apply_j0(g))
            .collect();
        incl = incl.max(dist_to_hull(&target, &gens));
        bres = bres.max((polydisc_gauge2(p, a) - 1.0).abs());
    }
    Ok(SystoleResult {
        gamma: gamma.clone(),
        action,
        beta: gamma.mean(),
        inclusion_residual: incl,
        boundary_residual: bres,
        minimizer: FourierLoop::from_time(gamma, modes)?.normalize_action()?,
        value: action,
        run: usize::MAX,
        converged: true,
    })
}

/// Body of a corpus example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExampleBody {
    Spec(BodySpec),
    /// `P(a, …, a) ⊂ ℂⁿ`, outside the polytope and ellipsoid oracles.
    Polydisc {
        a: f64,
        n: usize,
    },
}

/// Expected flags; `None` means the example does not check it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpectedFlags {
    pub generalized_zoll: Option<bool>,
    pub uniqueness: Option<bool>,
    pub coverage: Option<f64>,
    pub min_clusters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedExample {
    pub name: String,
    pub body: ExampleBody,
    pub loops: Vec<LoopRef>,
    pub expected_action: f64,
    pub expected: ExpectedFlags,
}

fn bxb1_spec() -> BodySpec {
    BodySpec::LagrangianProduct {
        p_vertices: vec![
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, -1.0],
        ],
        q_vertices: vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ],
    }
}

/// The shipped corpus, ordered by name.
pub fn examples() -> Vec<NamedExample> {
    let r = 1.0 / PI.sqrt();
    let mut families = vec![LoopRef::Gamma];
    families.extend(bxb1_family_refs(&FAMILY_C, &FAMILY_S));
    let mut polydisc = Vec::new();
    for family in [1, 2] {
        for z in [[0.0, 0.0], [r, 0.0], [0.0, r], [0.5 * r, -0.5 * r]] {
            polydisc.push(LoopRef::Polydisc { family, z_fixed: z });
        }
    }
    let mut out = vec![
        NamedExample {
            name: "bxb1_families".into(),
            body: ExampleBody::Spec(bxb1_spec()),
            loops: families,
            expected_action: 4.0,
            expected: ExpectedFlags {
                uniqueness: Some(false),
                coverage: Some(1.0),
                min_clusters: Some(3),
                ..Default::default()
            },
        },
        NamedExample {
            name: "bxb1_gamma".into(),
            body: ExampleBody::Spec(bxb1_spec()),
            loops: vec![LoopRef::Gamma],
            expected_action: 4.0,
            expected: ExpectedFlags::default(),
        },
        NamedExample {
            name: "bxb1_gamma_n".into(),
            body: ExampleBody::Spec(bxb1_spec()),
            loops: [2, 4, 8].map(|n| LoopRef::GammaN { n }).to_vec(),
            expected_action: 4.0,
            expected: ExpectedFlags::default(),
        },
        NamedExample {
            name: "bxb1_numeric".into(),
            body: ExampleBody::Spec(bxb1_spec()),
            loops: vec![],
            expected_action: 4.0,
            expected: ExpectedFlags::default(),
        },
        NamedExample {
            name: "polydisc_p11".into(),
            body: ExampleBody::Polydisc { a: 1.0, n: 2 },
            loops: polydisc,
            expected_action: 1.0,
            expected: ExpectedFlags {
                generalized_zoll: Some(false),
                uniqueness: Some(false),
                ..Default::default()
            },
        },
    ];
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

/// Knobs for [`run_regressions`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionOptions {
    pub grid: usize,
    /// Corner window for piecewise loops; 0 disables it.
    pub corner_window: usize,
    /// Sub-grid sampling offset in cells.
    pub offset: f64,
    /// Fourier modes for the numeric solve and the truncated actions.
    pub modes: usize,
    pub starts: usize,
    pub seed: u64,
    /// Relative window for numeric actions.
    pub rel_tol: f64,
    /// Grid for loops fed to the clustering and coverage probes.
    pub probe_grid: usize,
    pub boundary_samples: usize,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            grid: REGRESSION_GRID,
            corner_window: 2,
            offset: GENERIC_OFFSET,
            modes: 24,
            starts: 4,
            seed: 0,
            rel_tol: 0.02,
            probe_grid: 512,
            boundary_samples: 2000,
        }
    }
}

/// One checked expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRow {
    pub example: String,
    pub check: String,
    pub value: f64,
    /// Human-readable bound, e.g. `<= 1e-9`.
    pub bound: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub rows: Vec<RegressionRow>,
    pub all_passed: bool,
}

impl RegressionReport {
    pub fn failures(&self) -> impl Iterator<Item = &RegressionRow> {
        self.rows.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for RegressionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self
            .rows
            .iter()
            .map(|r| r.example.len())
            .max()
            .unwrap_or(7)
            .max(7);
        let c = self
            .rows
            .iter()
            .map(|r| r.check.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(
            f,
            "{:<w$}  {:<c$}  {:>14}  {:<12}  result",
            "example", "check", "value", "bound"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<w$}  {:<c$}  {:>14.6e}  {:<12}  {}",
                r.example,
                r.check,
                r.value,
                r.bound,
                if r.passed { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

struct Rows<'a> {
    example: &'a str,
    rows: Vec<RegressionRow>,
}

impl Rows<'_> {
    fn at_most(&mut self, check: String, value: f64, bound: f64) {
        self.push(check, value, format!("<= {bound:e}"), value <= bound);
    }

    fn at_least(&mut self, check: String, value: f64, bound: f64) {
        self.push(check, value, format!(">= {bound:e}"), value >= bound);
    }

    fn flag(&mut self, check: String, value: bool, expected: bool) {
        self.push(
            check,
            value as u8 as f64,
            format!("== {}", expected as u8),
            value == expected,
        );
    }

    fn push(&mut self, check: String, value: f64, bound: String, passed: bool) {
        self.rows.push(RegressionRow {
            example: self.example.to_string(),
            check,
            value,
            bound,
            passed,
        });
    }
}

fn piecewise_checks(
    rows: &mut Rows,
    body: &Body,
    refs: &[LoopRef],
    ex: &NamedExample,
    opts: &InclusionOptions,
    ro: &RegressionOptions,
) -> Result<()> {
    for r in refs {
        let poly = r.polygonal()?.expect("polygonal reference");
        let label = r.label();
        let gamma = poly.sample(ro.grid, ro.offset)?;
        let incl = inclusion_residual(body, &gamma, ex.expected_action, opts)?;
        rows.at_most(format!("inclusion[{label}]"), incl.residual, ANALYTIC_TOL);
        rows.at_most(
            format!("action[{label}]"),
            (poly.action() - ex.expected_action).abs(),
            1e-12 * ex.expected_action,
        );
        let bres = poly
            .points()
            .iter()
            .map(|p| body.gauge2(p).map(|h| (h - 1.0).abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rows.at_most(format!("boundary[{label}]"), bres, 1e-12);
    }
    Ok(())
}

/// Runs every corpus example and collects a pass/fail table.
pub fn run_regressions(ro: &RegressionOptions) -> Result<RegressionReport> {
    if ro.grid < 8 || ro.probe_grid < 8 {
        return Err(Error::InvalidArgument(
            "regression grids must have at least 8 samples".into(),
        ));
    }
    let opts = InclusionOptions {
        corner_window: ro.corner_window,
        active_tol: ANALYTIC_TOL,
    };
    let mut all = Vec::new();
    for ex in examples() {
        let mut rows = Rows {
            example: &ex.name,
            rows: Vec::new(),
        };
        match &ex.body {
            ExampleBody::Spec(spec) => {
                let body = spec.build()?;
                match ex.name.as_str() {
                    "bxb1_gamma" => {
                        piecewise_checks(&mut rows, &body, &ex.loops, &ex, &opts, ro)?;
                        let g = bxb1_gamma_loop();
                        let d0 = crate::linalg::dist(&g.eval(0.0), &[-1.0, 0.0, -1.0, 0.0]);
                        let d1 = crate::linalg::dist(&g.eval(0.25), &[1.0, 0.0, -1.0, 0.0]);
                        rows.at_most("gamma(0), gamma(1/4)".into(), d0.max(d1), 0.0);
                    }
                    "bxb1_gamma_n" => {
                        piecewise_checks(&mut rows, &body, &ex.loops, &ex, &opts, ro)?;
                        let g = bxb1_gamma_loop();
                        let gs = g.sample(ro.grid, 0.0)?;
                        for r in &ex.loops {
                            let LoopRef::GammaN { n } = r else { continue };
                            let gn = bxb1_gamma_n_loop(*n)?;
                            let sup = gs.sup_distance(&gn.sample(ro.grid, 0.0)?);
                            rows.at_most(format!("uniform[gamma_{n}]"), sup, 1.0 / *n as f64);
                            let tail = g.velocity_gap(&gn, 0.25, 1.0);
                            rows.at_most(format!("agree on [1/4,1][gamma_{n}]"), tail, 0.0);
                            rows.at_least(
                                format!("w11 gap on [0,1/4][gamma_{n}]"),
                                g.velocity_gap(&gn, 0.0, 0.25),
                                2.0,
                            );
                        }
                    }
                    "bxb1_families" => {
                        piecewise_checks(&mut rows, &body, &ex.loops, &ex, &opts, ro)?;
                        let results = ex
                            .loops
                            .iter()
                            .map(|r| {
                                let g = r.sample(ro.probe_grid, ro.offset)?;
                                certify_loop(&body, &g, 16, &opts)
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let tols = ZollTolerances::for_body(&body);
                        let (clusters, report) =
                            explore(&body, &results, &tols, ro.boundary_samples, ro.seed)?;
                        if let Some(k) = ex.expected.min_clusters {
                            rows.at_least("clusters".into(), clusters.len() as f64, k as f64);
                        }
                        if let Some(c) = ex.expected.coverage {
                            rows.at_least("coverage".into(), report.coverage, c);
                        }
                        if let Some(u) = ex.expected.uniqueness {
                            rows.flag("uniqueness".into(), report.uniqueness, u);
                        }
                    }
                    "bxb1_numeric" => {
                        let cfg = SolveConfig {
                            modes: ro.modes,
                            starts: ro.starts,
                            seed: ro.seed,
                            ..Default::default()
                        };
                        let c1 = minimize(&body, &cfg)?
                            .first()
                            .map(|r| r.value)
                            .ok_or_else(|| Error::InvalidConfig("no runs".into()))?;
                        rows.at_most(
                            format!("numeric c1 (N={}) rel err", ro.modes),
                            (c1 - ex.expected_action).abs() / ex.expected_action,
                            ro.rel_tol,
                        );
                    }
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "no runner for example {other}"
                        )))
                    }
                }
            }
            ExampleBody::Polydisc { a, n } => {
                let mut results = Vec::new();
                for r in &ex.loops {
                    let g = r.sample(ro.grid.min(4096), 0.0)?;
                    let res = polydisc_result(&g, *a, ro.modes)?;
                    let label = r.label();
                    rows.at_most(
                        format!("inclusion[{label}]"),
                        res.inclusion_residual,
                        ANALYTIC_TOL,
                    );
                    let fa = FourierLoop::from_time(&g, ro.modes)?.action();
                    rows.at_most(
                        format!("fourier action[{label}]"),
                        (fa - ex.expected_action).abs(),
                        1e-6,
                    );
                    results.push(res);
                }
                let seq = polydisc_sequence(*a, *n, *n + 1)?;
                if let Some(z) = ex.expected.generalized_zoll {
                    rows.flag("generalized zoll".into(), is_generalized_zoll(&seq, *n)?, z);
                    rows.at_most("sys index".into(), sys_index(&seq).index as f64, 1.0);
                }
                if let Some(u) = ex.expected.uniqueness {
                    let d = 2.0 * (2.0 * a / PI).sqrt() * (*n as f64 / 2.0).sqrt();
                    let probe = uniqueness_probe(&results, 0.05 * d, 0.2 * d)?;
                    rows.flag("uniqueness".into(), probe.unique, u);
                }
            }
        }
        all.extend(rows.rows);
    }
    let all_passed = all.iter().all(|r| r.passed);
    Ok(RegressionReport {
        rows: all,
        all_passed,
    })
}

/// The corpus as pretty JSON, the content of `data/examples.json`.
pub fn examples_json() -> String {
    serde_json::to_string_pretty(&examples()).expect("corpus serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bxb1() -> Body {
        Body::linf_times_l1()
    }

    #[test]
    fn gamma_values() {
        let g = bxb1_gamma_loop();
        assert_eq!(g.eval(0.0), vec![-1.0, 0.0, -1.0, 0.0]);
        assert_eq!(g.eval(0.25), vec![1.0, 0.0, -1.0, 0.0]);
        assert_eq!(g.eval(0.625), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(g.velocity(0.1), vec![8.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(g.action(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn gamma_n_shape() {
        for n in [1, 2, 4, 8] {
            let gn = bxb1_gamma_n_loop(n).unwrap();
            assert_eq!(
                gn.eval(1.0 / (8 * n) as f64),
                vec![-1.0 + 1.0 / n as f64, 1.0 / n as f64, -1.0, 0.0]
            );
            assert_relative_eq!(gn.action(), 4.0, epsilon = 1e-13);
            assert_eq!(gn.velocity_gap(&bxb1_gamma_loop(), 0.0, 0.25), 2.0);
        }
        assert!(bxb1_gamma_n_loop(0).is_err());
    }

    #[test]
    fn uniform_convergence_rate() {
        let g = bxb1_gamma(REGRESSION_GRID).unwrap();
        for n in [2, 4, 8] {
            let d = g.sup_distance(&bxb1_gamma_n(n, REGRESSION_GRID).unwrap());
            assert!(d <= 1.0 / n as f64 && d > 0.9 / n as f64);
        }
    }

    #[test]
    fn rectangles_are_systoles() {
        let body = bxb1();
        for &c in &[0.0, 0.3, 0.8] {
            for &s in &[-1.0, -0.2, 0.6, 1.0] {
                let base = bxb1_rectangle_loop(c, s).unwrap();
                for perm in bxb1_symmetries() {
                    let l = base.transformed(&perm).unwrap();
                    assert_relative_eq!(l.action(), 4.0, epsilon = 1e-12);
                    let g = l.sample(4000, GENERIC_OFFSET).unwrap();
                    let r =
                        inclusion_residual(&body, &g, 4.0, &InclusionOptions::default()).unwrap();
                    assert!(r.residual <= ANALYTIC_TOL, "c {c} s {s}: {}", r.residual);
                }
            }
        }
        assert!(bxb1_rectangle_loop(1.0, 0.0).is_err());
    }

    #[test]
    fn corner_windows_matter_off_grid_only() {
        let body = bxb1();
        let off = InclusionOptions {
            corner_window: 0,
            active_tol: ANALYTIC_TOL,
        };
        let g = bxb1_gamma_loop();
        let r = inclusion_residual(
            &body,
            &g.sample(REGRESSION_GRID, GENERIC_OFFSET).unwrap(),
            4.0,
            &off,
        )
        .unwrap();
        assert!(r.residual > 0.1);
        let exact = g.sample_exact(REGRESSION_GRID).unwrap();
        let r = inclusion_residual(&body, &exact, 4.0, &off).unwrap();
        assert!(r.residual <= ANALYTIC_TOL);
    }

    #[test]
    fn wrong_action_fails() {
        let g = bxb1_gamma_loop().sample(2000, GENERIC_OFFSET).unwrap();
        let r = inclusion_residual(&bxb1(), &g, 3.0, &InclusionOptions::default()).unwrap();
        assert!(r.residual > 0.1);
    }

    #[test]
    fn polydisc_loops() {
        let g = polydisc_systole(1, (0.0, 0.0), 256).unwrap();
        assert_relative_eq!(g.action(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(
            FourierLoop::from_time(&g, 64).unwrap().action(),
            1.0,
            epsilon = 1e-6
        );
        assert!((crate::linalg::norm(&g.samples()[0]) - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!(polydisc_systole(3, (0.0, 0.0), 64).is_err());
        assert!(polydisc_systole(1, (1.0, 0.0), 64).is_err());
        let res = polydisc_result(&g, 1.0, 16).unwrap();
        assert!(res.inclusion_residual < 1e-9 && res.boundary_residual < 1e-12);
    }

    #[test]
    fn polydisc_families_share_points() {
        let r = 1.0 / PI.sqrt();
        let a = polydisc_systole(1, (r * 0.6, r * 0.8), 512).unwrap();
        let b = polydisc_systole(2, (r, 0.0), 512).unwrap();
        let results: Vec<_> = [a, b]
            .iter()
            .map(|g| polydisc_result(g, 1.0, 16).unwrap())
            .collect();
        assert!(!uniqueness_probe(&results, 0.02, 0.2).unwrap().unique);
    }

    #[test]
    fn examples_json_matches_data_file() {
        let shipped = include_str!("../data/examples.json");
        assert_eq!(shipped, examples_json());
        let parsed: Vec<NamedExample> = serde_json::from_str(shipped).unwrap();
        assert_eq!(parsed, examples());
    }
}
