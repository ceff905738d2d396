//! Minimal-volume enclosing ellipsoids by Khachiyan's barycentric ascent, and
//! the sandwich `c + (E − c)/d ⊆ K ⊆ E` (factor `1/√d` for symmetric bodies)
//! that turns them into capacity and index bounds.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::capacities::{ellipsoid_sequence, index_bound, IndexBoundFlavor};
use crate::error::{Error, Result};
use crate::geometry::{Body, Ellipsoid};
use crate::linalg::affine_rank;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100_000;

/// Approximate minimal-volume enclosing ellipsoid.
#[derive(Clone, Debug)]
pub struct JohnResult {
    pub ellipsoid: Ellipsoid,
    pub iterations: usize,
    pub duality_gap: f64,
    /// `d` in general, `√d` for centrally symmetric input.
    pub sandwich_factor: f64,
    pub symmetric: bool,
    pub tol: f64,
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    if d == 0 {
        return Err(Error::Degenerate("empty point set".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    Ok(d)
}

/// `(1 + tol)`-approximate minimal-volume ellipsoid containing `points`.
/// In symmetric mode the ellipsoid is centered at the origin and encloses
/// `±points`. The shape is scaled so that the largest point form is exactly 1.
pub fn enclosing_ellipsoid(
    points: &[Vec<f64>],
    tol: f64,
    centrally_symmetric: bool,
) -> Result<JohnResult> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(Error::InvalidArgument(
            "tolerance must lie in (0, 1e-2]".into(),
        ));
    }
    let d = check_points(points)?;
    if centrally_symmetric {
        let both: Vec<Vec<f64>> = points
            .iter()
            .flat_map(|p| [p.clone(), p.iter().map(|v| -v).collect()])
            .collect();
        let rank = affine_rank(&both);
        if rank < d {
            return Err(Error::NonSpanning { dim: d, rank });
        }
    } else {
        let rank = affine_rank(points);
        if rank < d {
            return Err(Error::NonSpanning { dim: d, rank });
        }
    }
    let lifted: Vec<DVector<f64>> = points
        .iter()
        .map(|p| {
            if centrally_symmetric {
                DVector::from_column_slice(p)
            } else {
                DVector::from_iterator(d + 1, p.iter().cloned().chain([1.0]))
            }
        })
        .collect();
    let dd = if centrally_symmetric { d } else { d + 1 } as f64;
    let m = points.len();
    let mut u = vec![1.0 / m as f64; m];
    let mut iterations = 0;
    let mut gap;
    loop {
        let dim = lifted[0].len();
        let mut x = DMatrix::<f64>::zeros(dim, dim);
        for (w, q) in u.iter().zip(&lifted) {
            x += *w * q * q.transpose();
        }
        let xinv = x
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular moment matrix".into()))?;
        let forms: Vec<f64> = lifted
            .iter()
            .map(|q| (q.transpose() * &xinv * q)[(0, 0)])
            .collect();
        let (j, kappa) = forms
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        let (k, kappa_min) = forms.iter().enumerate().filter(|(i, _)| u[*i] > 0.0).fold(
            (0, f64::INFINITY),
            |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc },
        );
        gap = kappa / dd - 1.0;
        if gap <= tol || iterations >= MAX_ITERATIONS {
            break;
        }
        if gap >= 1.0 - kappa_min / dd {
            let step = (kappa - dd) / (dd * (kappa - 1.0));
            u.iter_mut().for_each(|w| *w *= 1.0 - step);
            u[j] += step;
        } else {
            let drop = u[k] / (1.0 - u[k]);
            let step = if kappa_min > 1.0 {
                ((dd - kappa_min) / (dd * (kappa_min - 1.0))).min(drop)
            } else {
                drop
            };
            u.iter_mut().for_each(|w| *w *= 1.0 + step);
            u[k] = (u[k] - step).max(0.0);
        }
        iterations += 1;
    }
    let mut center = vec![0.0; d];
    if !centrally_symmetric {
        for (w, p) in u.iter().zip(points) {
            center.iter_mut().zip(p).for_each(|(c, v)| *c += w * v);
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (w, p) in u.iter().zip(points) {
        let y = DVector::from_iterator(d, p.iter().zip(&center).map(|(a, b)| a - b));
        cov += *w * &y * y.transpose();
    }
    let shape = cov
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular covariance".into()))?
        / d as f64;
    let probe = Ellipsoid::new(center.clone(), shape.clone())?;
    let top = points.iter().map(|p| probe.form(p)).fold(0.0, f64::max);
    let shape = (&shape + shape.transpose()) * (0.5 / top);
    let ellipsoid = Ellipsoid::new(center, shape)?;
    Ok(JohnResult {
        ellipsoid,
        iterations,
        duality_gap: gap.max(0.0),
        sandwich_factor: if centrally_symmetric {
            (d as f64).sqrt()
        } else {
            d as f64
        },
        symmetric: centrally_symmetric,
        tol,
    })
}

/// Enclosing ellipsoid of a body: the body itself for ellipsoids, the
/// vertex ellipsoid for polytopes.
pub fn john_for_body(body: &Body, tol: f64) -> Result<JohnResult> {
    if let Some(e) = body.as_ellipsoid() {
        return Ok(JohnResult {
            ellipsoid: e.clone(),
            iterations: 0,
            duality_gap: 0.0,
            sandwich_factor: (body.dim() as f64).sqrt(),
            symmetric: body.is_centrally_symmetric(),
            tol,
        });
    }
    let verts = body
        .vertices()
        .ok_or_else(|| Error::InvalidBody("body has no vertex description".into()))?;
    enclosing_ellipsoid(&verts, tol, body.is_centrally_symmetric())
}

/// Outcome of [`verify_sandwich`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub passed: bool,
    pub max_vertex_form: f64,
    /// Direction where the shrunk ellipsoid pokes out of the body, if any.
    pub failing_direction: Option<Vec<f64>>,
    pub directions: usize,
}

/// Checks that the body's vertices lie in the `(1 + tol)`-ellipsoid and that
/// the ellipsoid shrunk about its center by the sandwich factor lies in the
/// body, by comparing support functions on `directions` random directions.
pub fn verify_sandwich(
    body: &Body,
    john: &JohnResult,
    directions: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let e = &john.ellipsoid;
    if e.dim() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: e.dim(),
        });
    }
    let verts = body.vertices().unwrap_or_default();
    let max_form = verts.iter().map(|p| e.form(p)).fold(0.0, f64::max);
    let mut passed = max_form <= 1.0 + john.tol;
    let inv = e
        .shape()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular ellipsoid shape".into()))?;
    let f = 1.0 / john.sandwich_factor;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failing = None;
    for _ in 0..directions {
        let u: Vec<f64> = (0..body.dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let uv = DVector::from_column_slice(&u);
        let radius = (uv.transpose() * &inv * &uv)[(0, 0)].sqrt();
        let h_shrunk = f * radius + u.iter().zip(e.center()).map(|(a, b)| a * b).sum::<f64>();
        let h_body = body.support(&u)?;
        if h_shrunk > h_body + 1e-9 * h_body.abs().max(radius) {
            passed = false;
            failing = Some(u);
            break;
        }
    }
    Ok(SandwichReport {
        passed,
        max_vertex_form: max_form,
        failing_direction: failing,
        directions,
    })
}

/// Capacity bound implied by the enclosing ellipsoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityBoundReport {
    pub a_normal_form: Vec<f64>,
    /// `c₁(E) = min a_j`, an upper bound for `c₁(K)`.
    pub c1_bound: f64,
    pub c1_numeric: Option<f64>,
    /// `c1_numeric ≤ c1_bound` up to the given relative tolerance.
    pub consistent: Option<bool>,
    pub index_bound: usize,
    pub flavor: IndexBoundFlavor,
}

pub fn capacity_bound_report(
    body: &Body,
    john: &JohnResult,
    c1_numeric: Option<f64>,
    rel_tol: f64,
) -> Result<CapacityBoundReport> {
    let a = john.ellipsoid.symplectic_semi_axes();
    let c1_bound = ellipsoid_sequence(&a, 1)?.c1();
    let flavor = if body.is_centrally_symmetric() {
        IndexBoundFlavor::CentrallySymmetric
    } else {
        IndexBoundFlavor::General
    };
    Ok(CapacityBoundReport {
        a_normal_form: a,
        c1_bound,
        c1_numeric,
        consistent: c1_numeric.map(|c| c <= c1_bound * (1.0 + rel_tol)),
        index_bound: index_bound(body.n(), flavor),
        flavor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn cube(d: usize) -> Vec<Vec<f64>> {
        (0..1usize << d)
            .map(|m| {
                (0..d)
                    .map(|i| if m >> i & 1 == 1 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect()
    }

    fn random_symmetric(rng: &mut ChaCha8Rng, half: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for _ in 0..half {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            out.push(v.iter().map(|x| -x).collect());
            out.push(v);
        }
        out
    }

    #[test]
    fn square_gives_circle() {
        let r = enclosing_ellipsoid(&cube(2), 1e-6, true).unwrap();
        let s = r.ellipsoid.shape();
        assert_relative_eq!(s[(0, 0)], 0.5, epsilon = 1e-6);
        assert_relative_eq!(s[(1, 1)], 0.5, epsilon = 1e-6);
        assert!(s[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn cube_gives_radius_two_ball() {
        for sym in [true, false] {
            let r = enclosing_ellipsoid(&cube(4), 1e-6, sym).unwrap();
            let s = r.ellipsoid.shape();
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 0.25 } else { 0.0 };
                    assert!((s[(i, j)] - want).abs() < 1e-6);
                }
            }
            assert!(r.ellipsoid.center().iter().all(|c| c.abs() < 1e-6));
        }
    }

    #[test]
    fn degenerate_points() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(enclosing_ellipsoid(&pts, 1e-6, false).is_err());
    }

    #[test]
    fn cube_sandwich_is_tight() {
        let body = Body::vpolytope(cube(4)).unwrap();
        let r = john_for_body(&body, 1e-6).unwrap();
        assert!(verify_sandwich(&body, &r, 1000, 1).unwrap().passed);
    }

    #[test]
    fn halved_shape_fails() {
        let body = Body::vpolytope(cube(4)).unwrap();
        let mut r = john_for_body(&body, 1e-6).unwrap();
        r.ellipsoid = Ellipsoid::new(vec![0.0; 4], r.ellipsoid.shape() * 2.0).unwrap();
        assert!(!verify_sandwich(&body, &r, 1000, 1).unwrap().passed);
    }

    #[test]
    fn random_polytopes_sandwich_and_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..10 {
            let pts = random_symmetric(&mut rng, 8);
            let body = Body::vpolytope(pts).unwrap();
            let r = john_for_body(&body, 1e-6).unwrap();
            assert!(r.duality_gap <= 1e-6);
            assert!(r.ellipsoid.center().iter().all(|c| *c == 0.0));
            let verts = body.vertices().unwrap();
            assert!(verts.iter().all(|p| r.ellipsoid.form(p) <= 1.0 + 1e-12));
            assert!(verify_sandwich(&body, &r, 1000, trial).unwrap().passed);
        }
        for trial in 0..5 {
            let pts: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let body = Body::vpolytope(pts).unwrap();
            let r = enclosing_ellipsoid(&body.vertices().unwrap(), 1e-6, false).unwrap();
            assert!(verify_sandwich(&body, &r, 1000, trial).unwrap().passed);
        }
    }

    #[test]
    fn shrinking_along_an_axis_expels_a_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let tol = 1e-6;
        let pts = cube(4);
        let r = enclosing_ellipsoid(&pts, tol, true).unwrap();
        for _ in 0..3 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = DVector::from_vec(v).normalize();
            let t = DMatrix::identity(4, 4) - (2.0 * tol) * &v * v.transpose();
            let ti = t.try_inverse().unwrap();
            let shape = ti.transpose() * r.ellipsoid.shape() * ti;
            let e = Ellipsoid::new(vec![0.0; 4], shape).unwrap();
            assert!(pts.iter().any(|p| e.form(p) > 1.0));
        }
    }

    #[test]
    fn ball_bound_is_one() {
        let body = Body::ellipsoid(&[1.0, 1.0]).unwrap();
        let r = john_for_body(&body, 1e-6).unwrap();
        let rep = capacity_bound_report(&body, &r, Some(1.0), 0.02).unwrap();
        assert_relative_eq!(rep.c1_bound, 1.0, epsilon = 1e-12);
        assert_eq!(rep.consistent, Some(true));
        assert_eq!(rep.index_bound, 8);
    }

    #[test]
    fn bxb1_bound_dominates_four() {
        let body = Body::linf_times_l1();
        let r = john_for_body(&body, 1e-6).unwrap();
        let rep = capacity_bound_report(&body, &r, None, 0.02).unwrap();
        assert!(rep.c1_bound >= 4.0 * (1.0 - 0.02));
        assert_relative_eq!(
            rep.c1_bound,
            2.0 * std::f64::consts::SQRT_2 * PI,
            max_relative = 1e-5
        );
    }
}
