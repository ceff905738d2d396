//! Small dense linear-algebra helpers: facet enumeration of V-polytopes,
//! Chebyshev centers, and nearest points of convex hulls.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Upper bound on the number of d-subsets scanned by [`facets`].
const MAX_FACET_SUBSETS: u64 = 20_000_000;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Rank of the affine hull of `points` (number of independent directions).
pub(crate) fn affine_rank(points: &[Vec<f64>]) -> usize {
    if points.len() < 2 {
        return 0;
    }
    let d = points[0].len();
    let rows = points.len() - 1;
    let m = DMatrix::from_fn(rows, d, |i, j| points[i + 1][j] - points[0][j]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * smax).count()
}

/// A supporting half-space `⟨normal, x⟩ ≤ offset` with a unit normal.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut r: u64 = 1;
    for i in 0..k as u64 {
        r = r.saturating_mul(n as u64 - i) / (i + 1);
    }
    r
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Normal of the hyperplane through `d` points in ℝᵈ by cofactor expansion.
fn hyperplane_normal(points: &[&[f64]]) -> Vec<f64> {
    let d = points[0].len();
    let base = points[0];
    let rows = DMatrix::from_fn(d - 1, d, |i, j| points[i + 1][j] - base[j]);
    (0..d)
        .map(|k| {
            let minor = rows.clone().remove_column(k);
            let det = if d == 1 { 1.0 } else { minor.determinant() };
            if k % 2 == 0 {
                det
            } else {
                -det
            }
        })
        .collect()
}

/// Facets of the convex hull of a full-dimensional point set.
///
/// Every d-subset spanning a hyperplane is tested as a supporting plane, so the
/// cost is `O(C(m, d) · m)`; adequate for the few dozen vertices used here.
pub(crate) fn facets(points: &[Vec<f64>]) -> Result<Vec<HalfSpace>> {
    let m = points.len();
    let d = points[0].len();
    if m < d + 1 {
        return Err(Error::NonSpanning {
            dim: d,
            rank: affine_rank(points),
        });
    }
    if binomial(m, d) > MAX_FACET_SUBSETS {
        return Err(Error::InvalidBody(format!(
            "{m} vertices in dimension {d} exceed the facet enumeration budget"
        )));
    }
    let scale = points
        .iter()
        .map(|p| norm(p))
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let eps = 1e-9 * scale;

    let mut out: Vec<HalfSpace> = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let subset: Vec<&[f64]> = idx.iter().map(|&i| points[i].as_slice()).collect();
        let mut a = hyperplane_normal(&subset);
        let na = norm(&a);
        if na > 1e-12 * scale.powi(d as i32 - 1) {
            a.iter_mut().for_each(|v| *v /= na);
            let b = dot(&a, subset[0]);
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for p in points {
                let s = dot(&a, p) - b;
                hi = hi.max(s);
                lo = lo.min(s);
            }
            let candidate = if hi <= eps {
                Some(HalfSpace {
                    normal: a,
                    offset: b,
                })
            } else if lo >= -eps {
                Some(HalfSpace {
                    normal: a.iter().map(|v| -v).collect(),
                    offset: -b,
                })
            } else {
                None
            };
            if let Some(h) = candidate {
                let dup = out.iter().any(|f| {
                    dist(&f.normal, &h.normal) < 1e-9 && (f.offset - h.offset).abs() < eps
                });
                if !dup {
                    out.push(h);
                }
            }
        }
        if !next_combination(&mut idx, m) {
            break;
        }
    }
    if out.len() < d + 1 {
        return Err(Error::NonSpanning {
            dim: d,
            rank: affine_rank(points),
        });
    }
    Ok(out)
}

/// Center and radius of the largest ball inside `{x : ⟨a_i, x⟩ ≤ b_i}`.
///
/// When the origin already attains the optimal radius it is returned, so
/// centered symmetric inputs are left in place.
pub(crate) fn chebyshev_center(halfspaces: &[HalfSpace]) -> Result<(Vec<f64>, f64)> {
    let d = halfspaces[0].normal.len();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let center: Vec<_> = (0..d)
        .map(|_| problem.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let radius = problem.add_var(1.0, (0.0, f64::INFINITY));
    for h in halfspaces {
        let mut terms: Vec<_> = center
            .iter()
            .zip(&h.normal)
            .map(|(&v, &a)| (v, a))
            .collect();
        terms.push((radius, 1.0));
        problem.add_constraint(terms.as_slice(), ComparisonOp::Le, h.offset);
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::LinearProgram(e.to_string()))?
        .into_solution()
        .map_err(|_| Error::LinearProgram("interrupted".into()))?;
    let r_opt = solution.var_value(radius);
    let r_origin = halfspaces
        .iter()
        .map(|h| h.offset)
        .fold(f64::INFINITY, f64::min);
    let scale = halfspaces
        .iter()
        .map(|h| h.offset.abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    if r_origin >= r_opt - 1e-10 * scale {
        return Ok((vec![0.0; d], r_origin));
    }
    let c = center.iter().map(|&v| solution.var_value(v)).collect();
    Ok((c, r_opt))
}

/// Euclidean distance from `target` to the convex hull of `generators`
/// (Wolfe's minimum-norm-point algorithm).
pub(crate) fn dist_to_hull(target: &[f64], generators: &[Vec<f64>]) -> f64 {
    assert!(!generators.is_empty(), "empty generator set");
    let w: Vec<Vec<f64>> = generators
        .iter()
        .map(|g| g.iter().zip(target).map(|(a, b)| a - b).collect())
        .collect();
    if w.len() == 1 {
        return norm(&w[0]);
    }
    let scale = w
        .iter()
        .map(|v| dot(v, v))
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let tol = 1e-14 * scale;
    let combine = |set: &[usize], lambda: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; w[0].len()];
        for (&i, &l) in set.iter().zip(lambda) {
            for (xk, wk) in x.iter_mut().zip(&w[i]) {
                *xk += l * wk;
            }
        }
        x
    };

    let start = (0..w.len())
        .min_by(|&a, &b| dot(&w[a], &w[a]).total_cmp(&dot(&w[b], &w[b])))
        .unwrap();
    let mut set = vec![start];
    let mut lambda = vec![1.0];
    let mut x = w[start].clone();

    for _ in 0..(50 * w.len() + 50) {
        let xx = dot(&x, &x);
        let j = (0..w.len())
            .min_by(|&a, &b| dot(&x, &w[a]).total_cmp(&dot(&x, &w[b])))
            .unwrap();
        if xx - dot(&x, &w[j]) <= tol || set.contains(&j) {
            break;
        }
        set.push(j);
        lambda.push(0.0);
        while let Some(alpha) = affine_minimizer(&w, &set) {
            if alpha.iter().all(|&a| a > 1e-15) {
                lambda = alpha;
                x = combine(&set, &lambda);
                break;
            }
            let mut theta = 1.0_f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-15 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (a - *l);
            }
            let mut k = 0;
            while k < set.len() {
                if lambda[k] <= 1e-15 {
                    set.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            x = combine(&set, &lambda);
            if set.len() == 1 {
                break;
            }
        }
    }
    norm(&x)
}

/// Minimizer of `|Σ α_i w_i|` over the affine hull `Σ α_i = 1`.
fn affine_minimizer(w: &[Vec<f64>], set: &[usize]) -> Option<Vec<f64>> {
    let k = set.len();
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = dot(&w[set[a]], &w[set[b]]);
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m
        .clone()
        .lu()
        .solve(&rhs)
        .or_else(|| m.svd(true, true).solve(&rhs, 1e-12).ok())?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(sol.iter().take(k).cloned().collect())
}
