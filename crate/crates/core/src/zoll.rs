//! Heuristic exploration of the systole space: an S¹ gauge for Fourier loops,
//! clustering of multistart systoles modulo time shifts, trace coverage of
//! the boundary, and a probe for distinct systoles through a common point.
//!
//! These are empirical summaries of a finite sample of systoles. They do not
//! compute the Fadell–Rabinowitz index and do not decide whether a systole
//! passes through every boundary point.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual_solver::SystoleResult;
use crate::error::{Error, Result};
use crate::geometry::Body;
use crate::loops::{FourierLoop, TimeLoop};

/// Common resampling grid for loop comparisons.
pub const COMPARISON_GRID: usize = 256;
/// Coarse phase samples before local refinement.
pub const PHASE_SAMPLES: usize = 64;
/// Resolution cap for trace polylines in coverage and proximity checks.
pub const TRACE_GRID: usize = 1024;

/// Default tolerances, all proportional to the body's diameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZollTolerances {
    pub cluster: f64,
    pub coverage: f64,
    pub point: f64,
    pub loop_distance: f64,
}

impl ZollTolerances {
    pub fn for_body(body: &Body) -> Self {
        let d = body.diameter();
        Self {
            cluster: 0.1 * d,
            coverage: 0.1 * d,
            point: 0.05 * d,
            loop_distance: 0.2 * d,
        }
    }
}

/// Canonical representative of the S¹-orbit of `x`: the time shift making
/// the first non-vanishing plane of `x̂(1)` real and positive. When every
/// plane of `x̂(1)` vanishes the lowest non-vanishing mode `k` is used, with
/// the shift taken in `[0, 1/k)`.
pub fn gauge_fix(x: &FourierLoop) -> Result<FourierLoop> {
    let n = x.n();
    let scale = x.l2_norm2().sqrt();
    if !(scale > 0.0) {
        return Err(Error::Degenerate("zero loop has no gauge".into()));
    }
    let eps = 1e-12 * scale;
    for k in 1..=x.modes() as i64 {
        let c = x.coeff(k);
        if let Some(j) = (0..n).find(|&j| c[j].hypot(c[n + j]) > eps) {
            let arg = c[n + j].atan2(c[j]).rem_euclid(2.0 * PI);
            let theta = arg / (2.0 * PI * k as f64);
            let mut out = x.phase_shift(theta);
            // pin the pivot exactly onto the positive real axis
            let v = out.coeff_mut(k);
            v[j] = v[j].hypot(v[n + j]);
            v[n + j] = 0.0;
            return Ok(out);
        }
    }
    Err(Error::Degenerate("zero loop has no gauge".into()))
}

fn flat_resample(g: &TimeLoop, m: usize) -> Vec<f64> {
    if g.len() == m {
        return g.samples().iter().flatten().cloned().collect();
    }
    g.resample(m).samples().iter().flatten().cloned().collect()
}

/// `max_j |a_j − b(t_j − s/G)|` with `b` linearly interpolated.
fn shifted_sup(a: &[f64], b: &[f64], dim: usize, shift: f64) -> f64 {
    let g = a.len() / dim;
    let base = shift.floor();
    let f = shift - base;
    let base = base as i64;
    let mut worst: f64 = 0.0;
    for j in 0..g {
        let i0 = (j as i64 - base).rem_euclid(g as i64) as usize;
        let i1 = (i0 + g - 1) % g;
        let mut s = 0.0;
        for c in 0..dim {
            let bv = (1.0 - f) * b[i0 * dim + c] + f * b[i1 * dim + c];
            let d = a[j * dim + c] - bv;
            s += d * d;
        }
        worst = worst.max(s);
    }
    worst.sqrt()
}

fn aligned_distance(a: &[f64], b: &[f64], dim: usize) -> f64 {
    let g = a.len() / dim;
    let stride = g / PHASE_SAMPLES;
    let (mut best_s, mut best) = (0.0, f64::INFINITY);
    for i in 0..PHASE_SAMPLES {
        let s = (i * stride) as f64;
        let d = shifted_sup(a, b, dim, s);
        if d < best {
            best = d;
            best_s = s;
        }
    }
    let half = stride as i64;
    for o in -half..=half {
        let s = best_s + o as f64;
        let d = shifted_sup(a, b, dim, s);
        if d < best {
            best = d;
            best_s = s;
        }
    }
    // golden-section search between the neighbouring grid shifts
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best_s - 1.0, best_s + 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = shifted_sup(a, b, dim, x1);
    let mut f2 = shifted_sup(a, b, dim, x2);
    for _ in 0..30 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = shifted_sup(a, b, dim, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = shifted_sup(a, b, dim, x2);
        }
    }
    best.min(f1).min(f2)
}

/// Phase-aligned uniform distance `min_θ ‖γ₁ − γ₂(· − θ)‖_∞`, evaluated on a
/// common grid with coarse phase samples and local refinement.
pub fn loop_distance(a: &TimeLoop, b: &TimeLoop) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let fa = flat_resample(a, COMPARISON_GRID);
    let fb = flat_resample(b, COMPARISON_GRID);
    Ok(aligned_distance(&fa, &fb, a.dim()))
}

/// Symmetric matrix of phase-aligned distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }
}

/// Pairwise phase-aligned distances between the results' loops.
pub fn distance_matrix(results: &[SystoleResult]) -> Result<DistanceMatrix> {
    let size = results.len();
    if let Some(r) = results
        .iter()
        .find(|r| r.gamma.dim() != results[0].gamma.dim())
    {
        return Err(Error::DimensionMismatch {
            expected: results[0].gamma.dim(),
            got: r.gamma.dim(),
        });
    }
    let flat: Vec<Vec<f64>> = results
        .par_iter()
        .map(|r| flat_resample(&r.gamma, COMPARISON_GRID))
        .collect();
    let dim = results.first().map(|r| r.gamma.dim()).unwrap_or(0);
    let pairs: Vec<(usize, usize)> = (0..size)
        .flat_map(|i| (i + 1..size).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| aligned_distance(&flat[i], &flat[j], dim))
        .collect();
    let mut entries = vec![0.0; size * size];
    for (&(i, j), v) in pairs.iter().zip(values) {
        entries[i * size + j] = v;
        entries[j * size + i] = v;
    }
    Ok(DistanceMatrix { size, entries })
}

/// Systoles linked by chains of phase-aligned distance at most the tolerance.
#[derive(Clone, Debug)]
pub struct SystoleCluster {
    /// Member with the smallest action.
    pub representative: SystoleResult,
    pub members: usize,
    /// Largest phase-aligned distance from a member to the representative.
    pub spread: f64,
    /// Indices into the clustered result list, ascending.
    pub indices: Vec<usize>,
}

/// Single-linkage clustering of converged results at distance `tol`,
/// sorted by representative action, then by decreasing size.
pub fn cluster(results: &[SystoleResult], tol: f64) -> Result<Vec<SystoleCluster>> {
    let dm = distance_matrix(results)?;
    cluster_with(results, &dm, tol)
}

/// [`cluster`] with a precomputed distance matrix.
pub fn cluster_with(
    results: &[SystoleResult],
    dm: &DistanceMatrix,
    tol: f64,
) -> Result<Vec<SystoleCluster>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "cluster tolerance must be positive".into(),
        ));
    }
    if dm.len() != results.len() {
        return Err(Error::DimensionMismatch {
            expected: results.len(),
            got: dm.len(),
        });
    }
    let size = results.len();
    let mut parent: Vec<usize> = (0..size).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let live: Vec<usize> = (0..size).filter(|&i| results[i].converged).collect();
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            if dm.get(i, j) <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; size];
    for &i in &live {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    let mut clusters: Vec<SystoleCluster> = groups
        .into_iter()
        .map(|idx| {
            let rep = *idx
                .iter()
                .min_by(|&&a, &&b| {
                    results[a]
                        .action
                        .total_cmp(&results[b].action)
                        .then(a.cmp(&b))
                })
                .expect("non-empty group");
            let spread = idx.iter().map(|&i| dm.get(rep, i)).fold(0.0, f64::max);
            SystoleCluster {
                representative: results[rep].clone(),
                members: idx.len(),
                spread,
                indices: idx,
            }
        })
        .collect();
    clusters.sort_by(|a, b| {
        a.representative
            .action
            .total_cmp(&b.representative.action)
            .then(b.members.cmp(&a.members))
            .then(a.indices[0].cmp(&b.indices[0]))
    });
    Ok(clusters)
}

/// Closed polyline through a loop's samples, at most [`TRACE_GRID`] vertices.
struct Trace {
    dim: usize,
    points: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Trace {
    fn new(g: &TimeLoop) -> Self {
        let m = g.len().min(TRACE_GRID);
        let dim = g.dim();
        let points = flat_resample(g, m);
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks(dim) {
            for c in 0..dim {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        Self {
            dim,
            points,
            lo,
            hi,
        }
    }

    fn box_distance2(&self, z: &[f64]) -> f64 {
        (0..self.dim)
            .map(|c| {
                let d = (self.lo[c] - z[c]).max(z[c] - self.hi[c]).max(0.0);
                d * d
            })
            .sum()
    }

    /// Whether some point of the closed polyline lies within `eps` of `z`.
    fn within(&self, z: &[f64], eps: f64) -> bool {
        let eps2 = eps * eps;
        if self.box_distance2(z) > eps2 {
            return false;
        }
        let dim = self.dim;
        let m = self.points.len() / dim;
        for i in 0..m {
            let p = &self.points[i * dim..(i + 1) * dim];
            let q = &self.points[((i + 1) % m) * dim..((i + 1) % m + 1) * dim];
            let (mut pq, mut pz, mut qq) = (0.0, 0.0, 0.0);
            for c in 0..dim {
                let e = q[c] - p[c];
                pq += e * (z[c] - p[c]);
                qq += e * e;
                pz += (z[c] - p[c]) * (z[c] - p[c]);
            }
            let t = if qq > 0.0 {
                (pq / qq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d2 = pz - 2.0 * t * pq + t * t * qq;
            if d2 <= eps2 {
                return true;
            }
        }
        false
    }
}

/// Fraction of sampled boundary points near some result trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub coverage: f64,
    pub boundary_samples: usize,
    pub eps: f64,
    /// Set when no converged result was available.
    pub warning: bool,
}

/// Boundary points from normalized Gaussian directions; not uniform in
/// surface measure.
pub fn boundary_samples(body: &Body, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u: Vec<f64> = (0..body.dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        if u.iter().any(|v: &f64| *v != 0.0) {
            out.push(body.radial_boundary_point(&u)?);
        }
    }
    Ok(out)
}

/// Fraction of `boundary_samples` boundary points within `eps` of the union
/// of all converged result traces.
pub fn ev0_coverage(
    results: &[SystoleResult],
    body: &Body,
    eps: f64,
    boundary_samples_count: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(
            "coverage radius must be positive".into(),
        ));
    }
    if boundary_samples_count == 0 {
        return Err(Error::InvalidArgument(
            "need at least one boundary sample".into(),
        ));
    }
    let traces: Vec<Trace> = results
        .iter()
        .filter(|r| r.converged)
        .map(|r| {
            if r.gamma.dim() != body.dim() {
                return Err(Error::DimensionMismatch {
                    expected: body.dim(),
                    got: r.gamma.dim(),
                });
            }
            Ok(Trace::new(&r.gamma))
        })
        .collect::<Result<_>>()?;
    if traces.is_empty() {
        return Ok(CoverageReport {
            coverage: 0.0,
            boundary_samples: boundary_samples_count,
            eps,
            warning: true,
        });
    }
    let points = boundary_samples(body, boundary_samples_count, seed)?;
    let hits = points
        .par_iter()
        .filter(|z| traces.iter().any(|t| t.within(z, eps)))
        .count();
    Ok(CoverageReport {
        coverage: hits as f64 / boundary_samples_count as f64,
        boundary_samples: boundary_samples_count,
        eps,
        warning: false,
    })
}

/// Two systoles through (nearly) the same point that are far apart as loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessWitness {
    pub first: usize,
    pub second: usize,
    pub point: Vec<f64>,
    pub loop_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub unique: bool,
    pub witness: Option<UniquenessWitness>,
}

/// Closest pair of samples of two traces, if within `tol`.
fn common_point(a: &TimeLoop, b: &TimeLoop, tol: f64) -> Option<Vec<f64>> {
    let ta = Trace::new(a);
    let tb = Trace::new(b);
    let dim = ta.dim;
    for c in 0..dim {
        if ta.lo[c] > tb.hi[c] + tol || tb.lo[c] > ta.hi[c] + tol {
            return None;
        }
    }
    let tol2 = tol * tol;
    for p in ta.points.chunks(dim) {
        if tb.box_distance2(p) > tol2 {
            continue;
        }
        for q in tb.points.chunks(dim) {
            let d2: f64 = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum();
            if d2 <= tol2 {
                return Some(p.iter().zip(q).map(|(x, y)| 0.5 * (x + y)).collect());
            }
        }
    }
    None
}

/// Reports a violation when two converged results at phase-aligned distance
/// above `loop_tol` pass within `point_tol` of a common point.
pub fn uniqueness_probe(
    results: &[SystoleResult],
    point_tol: f64,
    loop_tol: f64,
) -> Result<UniquenessReport> {
    let dm = distance_matrix(results)?;
    uniqueness_probe_with(results, &dm, point_tol, loop_tol)
}

/// [`uniqueness_probe`] with a precomputed distance matrix.
pub fn uniqueness_probe_with(
    results: &[SystoleResult],
    dm: &DistanceMatrix,
    point_tol: f64,
    loop_tol: f64,
) -> Result<UniquenessReport> {
    if !(point_tol > 0.0 && loop_tol > 0.0) {
        return Err(Error::InvalidArgument(
            "probe tolerances must be positive".into(),
        ));
    }
    let size = results.len();
    let pairs: Vec<(usize, usize)> = (0..size)
        .flat_map(|i| (i + 1..size).map(move |j| (i, j)))
        .filter(|&(i, j)| results[i].converged && results[j].converged && dm.get(i, j) > loop_tol)
        .collect();
    let witness = pairs.par_iter().find_map_first(|&(i, j)| {
        common_point(&results[i].gamma, &results[j].gamma, point_tol).map(|point| {
            UniquenessWitness {
                first: i,
                second: j,
                point,
                loop_distance: dm.get(i, j),
            }
        })
    });
    Ok(UniquenessReport {
        unique: witness.is_none(),
        witness,
    })
}

/// Per-cluster line of a [`ZollReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub action: f64,
    pub members: usize,
    pub spread: f64,
    pub loop_csv: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZollReport {
    pub clusters: Vec<ClusterSummary>,
    pub coverage: f64,
    pub coverage_warning: bool,
    pub uniqueness: bool,
    pub tolerances: ZollTolerances,
}

/// Clusters, coverage and the uniqueness probe in one pass.
pub fn explore(
    body: &Body,
    results: &[SystoleResult],
    tols: &ZollTolerances,
    boundary_samples_count: usize,
    seed: u64,
) -> Result<(Vec<SystoleCluster>, ZollReport)> {
    let dm = distance_matrix(results)?;
    let clusters = cluster_with(results, &dm, tols.cluster)?;
    let coverage = ev0_coverage(results, body, tols.coverage, boundary_samples_count, seed)?;
    let probe = uniqueness_probe_with(results, &dm, tols.point, tols.loop_distance)?;
    let report = ZollReport {
        clusters: clusters
            .iter()
            .map(|c| ClusterSummary {
                action: c.representative.action,
                members: c.members,
                spread: c.spread,
                loop_csv: None,
            })
            .collect(),
        coverage: coverage.coverage,
        coverage_warning: coverage.warning,
        uniqueness: probe.unique,
        tolerances: *tols,
    };
    Ok((clusters, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_solver::{certify_loop, solve_systoles, InclusionOptions, SolveConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_loop(rng: &mut ChaCha8Rng, modes: usize) -> FourierLoop {
        let entries: Vec<(i64, Vec<f64>)> = (1..=modes as i64)
            .flat_map(|k| [k, -k])
            .map(|k| {
                (
                    k,
                    (0..4)
                        .map(|_| rng.random_range(-1.0..1.0) / k.abs() as f64)
                        .collect(),
                )
            })
            .collect();
        FourierLoop::from_modes(4, modes, &entries).unwrap()
    }

    fn sup_dist(a: &FourierLoop, b: &FourierLoop) -> f64 {
        a.to_time(64).unwrap().sup_distance(&b.to_time(64).unwrap())
    }

    /// Circle of radius `1/√π` in plane `plane` of ℝ⁴, with the other plane at `z`.
    fn polydisc_circle(plane: usize, z: (f64, f64), m: usize) -> TimeLoop {
        let r = 1.0 / PI.sqrt();
        TimeLoop::from_fn(m, |t| {
            let (s, c) = (2.0 * PI * t).sin_cos();
            let w = 2.0 * PI * r;
            let (mut p, mut v) = (vec![0.0; 4], vec![0.0; 4]);
            let other = 1 - plane;
            p[plane] = r * c;
            p[2 + plane] = r * s;
            v[plane] = -w * s;
            v[2 + plane] = w * c;
            p[other] = z.0;
            p[2 + other] = z.1;
            (p, v)
        })
        .unwrap()
    }

    #[test]
    fn gauge_fix_removes_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_loop(&mut rng, 6);
        let g = gauge_fix(&x).unwrap();
        let h = gauge_fix(&x.phase_shift(0.3)).unwrap();
        assert!(sup_dist(&g, &h) < 1e-10);
        assert!(sup_dist(&g, &gauge_fix(&g).unwrap()) < 1e-12);
        assert!(g.coeff(1)[2].abs() == 0.0 && g.coeff(1)[0] > 0.0);
    }

    #[test]
    fn gauge_fix_falls_back_to_higher_mode() {
        let x = FourierLoop::from_modes(4, 3, &[(2, vec![0.0, 0.3, 0.0, 0.4])]).unwrap();
        let g = gauge_fix(&x).unwrap();
        assert!(sup_dist(&g, &gauge_fix(&x.phase_shift(0.1)).unwrap()) < 1e-10);
        assert!(gauge_fix(&FourierLoop::zeros(4, 3)).is_err());
    }

    #[test]
    fn polydisc_families_stay_apart_after_gauge() {
        let a = FourierLoop::from_time(&polydisc_circle(0, (0.0, 0.0), 64), 8).unwrap();
        let b = FourierLoop::from_time(&polydisc_circle(1, (0.0, 0.0), 64), 8).unwrap();
        let (ga, gb) = (gauge_fix(&a).unwrap(), gauge_fix(&b).unwrap());
        assert!(sup_dist(&ga, &gb) >= 0.5);
    }

    #[test]
    fn distance_ignores_phase() {
        let a = polydisc_circle(0, (0.1, 0.2), 300);
        let b = a.phase_shift(0.377);
        assert!(loop_distance(&a, &b).unwrap() < 1e-3);
        let c = polydisc_circle(1, (0.1, 0.2), 300);
        assert!(loop_distance(&a, &c).unwrap() > 0.5);
    }

    fn injected(body: &Body, loops: Vec<TimeLoop>) -> Vec<SystoleResult> {
        loops
            .iter()
            .map(|g| certify_loop(body, g, 16, &InclusionOptions::default()).unwrap())
            .collect()
    }

    #[test]
    fn polydisc_families_violate_uniqueness() {
        let body = crate::geometry::Body::lagrangian_product(
            vec![
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            vec![
                vec![1.0, 1.0],
                vec![-1.0, 1.0],
                vec![1.0, -1.0],
                vec![-1.0, -1.0],
            ],
        )
        .unwrap();
        let r = 1.0 / PI.sqrt();
        let results = injected(
            &body,
            vec![
                polydisc_circle(0, (r, 0.0), 256),
                polydisc_circle(1, (r, 0.0), 256),
            ],
        );
        let rep = uniqueness_probe(&results, 0.05, 0.3).unwrap();
        assert!(!rep.unique);
        let w = rep.witness.unwrap();
        assert!((w.point[0] - r).abs() < 0.05 && (w.point[1] - r).abs() < 0.05);
    }

    #[test]
    fn ellipsoid_runs_form_one_cluster() {
        let body = Body::ellipsoid(&[1.0, 2.0]).unwrap();
        let cfg = SolveConfig {
            modes: 8,
            starts: 8,
            ..Default::default()
        };
        let results = solve_systoles(&body, &cfg).unwrap();
        let tols = ZollTolerances::for_body(&body);
        let (clusters, report) = explore(&body, &results, &tols, 500, 3).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, results.len());
        assert!(report.uniqueness);
        assert!(report.coverage <= 0.2, "coverage {}", report.coverage);
        assert!(clusters[0].spread <= tols.cluster);
    }

    #[test]
    fn ball_runs_merge_and_cover() {
        let body = Body::ellipsoid(&[1.0, 1.0]).unwrap();
        let cfg = SolveConfig {
            modes: 8,
            starts: 48,
            ..Default::default()
        };
        let results = solve_systoles(&body, &cfg).unwrap();
        let clusters = cluster(&results, 0.2).unwrap();
        assert!(clusters.len() <= 2, "{} clusters", clusters.len());
        let cov = ev0_coverage(&results, &body, 0.3, 400, 5).unwrap();
        assert!(cov.coverage > 0.9, "coverage {}", cov.coverage);
    }

    #[test]
    fn empty_coverage_warns() {
        let body = Body::ellipsoid(&[1.0, 1.0]).unwrap();
        let rep = ev0_coverage(&[], &body, 0.1, 10, 0).unwrap();
        assert!(rep.warning && rep.coverage == 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn gauge_is_orbit_invariant(seed in 0u64..1000, theta in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_loop(&mut rng, 5);
            let a = gauge_fix(&x).unwrap();
            let b = gauge_fix(&x.phase_shift(theta)).unwrap();
            prop_assert!(sup_dist(&a, &b) < 1e-9);
        }

        #[test]
        fn clusters_partition_and_coverage_monotone(seed in 0u64..1000, tol in 0.05f64..1.5) {
            let body = Body::ellipsoid(&[1.0, 1.0]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let loops: Vec<TimeLoop> = (0..6)
                .map(|_| {
                    let x = random_loop(&mut rng, 2);
                    let x = if x.action() < 0.0 { x.reversed() } else { x };
                    x.normalize_action().unwrap().to_time(64).unwrap()
                })
                .collect();
            let results = injected(&body, loops);
            let clusters = cluster(&results, tol).unwrap();
            let mut seen: Vec<usize> = clusters.iter().flat_map(|c| c.indices.clone()).collect();
            seen.sort();
            prop_assert_eq!(seen, (0..results.len()).collect::<Vec<_>>());
            prop_assert!(clusters.iter().all(|c| c.members >= 1 && c.members == c.indices.len()));
            let small = ev0_coverage(&results, &body, 0.1, 200, seed).unwrap().coverage;
            let large = ev0_coverage(&results, &body, 0.2, 200, seed).unwrap().coverage;
            let fewer = ev0_coverage(&results[..3], &body, 0.2, 200, seed).unwrap().coverage;
            prop_assert!(small <= large);
            prop_assert!(fewer <= large);
        }
    }
}
