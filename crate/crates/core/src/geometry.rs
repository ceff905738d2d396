//! Exact oracles for convex bodies in ℝ²ⁿ: the squared gauge `H_K`, the
//! support function `h_K`, the Fenchel conjugate `H*_K = h_K²/4`, and one
//! deterministic subgradient of each.
//!
//! Bodies are built from normal-form ellipsoids, V-polytopes and Lagrangian
//! products of planar (or n-dimensional) polytopes, and can be scaled or
//! translated. Polytope constructors move the Chebyshev center to the origin
//! and remember the shift in [`Body::offset`]; `translate` moves the body
//! relative to the origin, which must stay interior.
//!
//! At nonsmooth points the subgradient is taken from the lowest-index active
//! facet (for `H_K`) or the lowest-index maximizing vertex (for `h_K`).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm, HalfSpace};

/// Which constructor produced a [`Body`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Ellipsoid,
    Vpolytope,
    LagrangianProduct,
    Scaled,
    Translated,
}

/// Ellipsoid `{x : (x − c)ᵀ A (x − c) ≤ 1}` with symmetric positive-definite `A`.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    center: Vec<f64>,
    shape: DMatrix<f64>,
    inverse: DMatrix<f64>,
    semi_axes: Option<Vec<f64>>,
}

impl Ellipsoid {
    pub fn new(center: Vec<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if shape.nrows() != d || shape.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: shape.nrows(),
            });
        }
        let asym = (&shape - shape.transpose()).abs().max();
        if asym > 1e-9 * shape.abs().max().max(1.0) {
            return Err(Error::InvalidBody(
                "ellipsoid shape is not symmetric".into(),
            ));
        }
        let shape = (&shape + shape.transpose()) * 0.5;
        let chol = shape
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidBody("ellipsoid shape is not positive definite".into()))?;
        let inverse = chol.inverse();
        Ok(Self {
            center,
            shape,
            inverse,
            semi_axes: None,
        })
    }

    /// The symplectic normal form `E(a₁, …, aₙ) = {Σ π|z_j|²/a_j ≤ 1}`.
    pub fn normal_form(a: &[f64]) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidBody("no semi-axes given".into()));
        }
        if a.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidBody("semi-axes must be positive".into()));
        }
        let n = a.len();
        let diag = DVector::from_fn(2 * n, |i, _| PI / a[i % n]);
        let mut e = Self::new(vec![0.0; 2 * n], DMatrix::from_diagonal(&diag))?;
        let mut sorted = a.to_vec();
        sorted.sort_by(f64::total_cmp);
        e.semi_axes = Some(sorted);
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// Normal-form semi-axes, if the ellipsoid was built from them.
    pub fn semi_axes(&self) -> Option<&[f64]> {
        self.semi_axes.as_deref()
    }

    /// `(x − c)ᵀ A (x − c)`.
    pub fn form(&self, x: &[f64]) -> f64 {
        let y = DVector::from_fn(x.len(), |i, _| x[i] - self.center[i]);
        (y.transpose() * &self.shape * &y)[(0, 0)]
    }

    /// Symplectic normal-form parameters `a₁ ≤ … ≤ aₙ` with `a_j = π/λ_j`,
    /// where `±iλ_j` are the eigenvalues of `J₀A`.
    pub fn symplectic_semi_axes(&self) -> Vec<f64> {
        if let Some(a) = &self.semi_axes {
            return a.clone();
        }
        let d = self.dim();
        let n = d / 2;
        let root = {
            let eig = SymmetricEigen::new(self.shape.clone());
            let s = DVector::from_iterator(d, eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()));
            &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
        };
        let mut j0 = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            j0[(i, n + i)] = -1.0;
            j0[(n + i, i)] = 1.0;
        }
        let skew = &root * j0 * &root;
        let gram = skew.transpose() * &skew;
        let mut lam: Vec<f64> = SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect();
        // each λ_j appears twice
        lam.sort_by(|a, b| b.total_cmp(a));
        let mut a: Vec<f64> = lam.chunks(2).map(|c| PI / (0.5 * (c[0] + c[1]))).collect();
        a.sort_by(f64::total_cmp);
        a
    }

    fn translate(&mut self, v: &[f64]) {
        self.center.iter_mut().zip(v).for_each(|(c, d)| *c += d);
        self.semi_axes = None;
    }

    fn scale(&mut self, lambda: f64) {
        self.center.iter_mut().for_each(|c| *c *= lambda);
        self.shape /= lambda * lambda;
        self.inverse *= lambda * lambda;
        if let Some(a) = &mut self.semi_axes {
            a.iter_mut().for_each(|v| *v *= lambda * lambda);
        }
    }

    fn quad(m: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
        let d = a.len();
        let mut s = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += m[(i, j)] * b[j];
            }
            s += a[i] * row;
        }
        s
    }

    fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        for i in 0..d {
            out[i] = (0..d).map(|j| m[(i, j)] * x[j]).sum();
        }
    }

    /// Gauge with respect to the origin, which must lie inside.
    fn gauge(&self, x: &[f64]) -> f64 {
        let alpha = Self::quad(&self.shape, x, x);
        let beta = Self::quad(&self.shape, x, &self.center);
        let delta = 1.0 - Self::quad(&self.shape, &self.center, &self.center);
        let s = (beta * beta + delta * alpha).max(0.0).sqrt();
        ((s - beta) / delta).max(0.0)
    }

    fn gauge2_grad(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let d = x.len();
        let mut ax = vec![0.0; d];
        let mut ac = vec![0.0; d];
        Self::mat_vec(&self.shape, x, &mut ax);
        Self::mat_vec(&self.shape, &self.center, &mut ac);
        let alpha = dot(x, &ax);
        let beta = dot(x, &ac);
        let delta = 1.0 - dot(&self.center, &ac);
        let s = (beta * beta + delta * alpha).max(0.0).sqrt();
        if s == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return 0.0;
        }
        let g = (s - beta) / delta;
        for i in 0..d {
            let dg = ((beta * ac[i] + delta * ax[i]) / s - ac[i]) / delta;
            out[i] = 2.0 * g * dg;
        }
        g * g
    }

    fn support(&self, u: &[f64]) -> f64 {
        Self::quad(&self.inverse, u, u).max(0.0).sqrt() + dot(u, &self.center)
    }

    fn support_point(&self, u: &[f64], out: &mut [f64]) -> f64 {
        let r = Self::quad(&self.inverse, u, u).max(0.0).sqrt();
        if r == 0.0 {
            out.copy_from_slice(&self.center);
            return 0.0;
        }
        Self::mat_vec(&self.inverse, u, out);
        out.iter_mut()
            .zip(&self.center)
            .for_each(|(o, c)| *o = *o / r + c);
        r + dot(u, &self.center)
    }

    fn diameter(&self) -> f64 {
        let eig = SymmetricEigen::new(self.shape.clone());
        let lmin = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        2.0 / lmin.sqrt()
    }

    fn contains_origin(&self) -> bool {
        Self::quad(&self.shape, &self.center, &self.center) < 1.0 - 1e-12
    }
}

/// V-polytope with the facet description derived from its vertices.
#[derive(Clone, Debug)]
pub struct Polytope {
    vertices: Vec<Vec<f64>>,
    halfspaces: Vec<HalfSpace>,
    radius: f64,
}

impl Polytope {
    fn from_vertices(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let d = vertices.first().map(|v| v.len()).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidBody("empty vertex list".into()));
        }
        if let Some(bad) = vertices.iter().find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBody("non-finite vertex coordinate".into()));
        }
        let rank = linalg::affine_rank(&vertices);
        if rank < d {
            return Err(Error::NonSpanning { dim: d, rank });
        }
        let halfspaces = linalg::facets(&vertices)?;
        let radius = vertices.iter().map(|v| norm(v)).fold(0.0, f64::max);
        Ok(Self {
            vertices,
            halfspaces,
            radius,
        })
    }

    /// Builds the polytope and shifts its Chebyshev center to the origin.
    /// Returns the shift that was subtracted.
    fn centered(vertices: Vec<Vec<f64>>) -> Result<(Self, Vec<f64>)> {
        let mut p = Self::from_vertices(vertices)?;
        let (c, r) = linalg::chebyshev_center(&p.halfspaces)?;
        if !(r > 0.0) {
            return Err(Error::InvalidBody("polytope has empty interior".into()));
        }
        let shift: Vec<f64> = c.iter().map(|v| -v).collect();
        p.translate(&shift);
        Ok((p, c))
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn num_facets(&self) -> usize {
        self.halfspaces.len()
    }

    fn translate(&mut self, v: &[f64]) {
        for p in &mut self.vertices {
            p.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        for h in &mut self.halfspaces {
            h.offset += dot(&h.normal, v);
        }
        self.radius = self.vertices.iter().map(|v| norm(v)).fold(0.0, f64::max);
    }

    fn scale(&mut self, lambda: f64) {
        for p in &mut self.vertices {
            p.iter_mut().for_each(|a| *a *= lambda);
        }
        for h in &mut self.halfspaces {
            h.offset *= lambda;
        }
        self.radius *= lambda;
    }

    fn contains_origin(&self) -> bool {
        let scale = self.radius.max(1e-300);
        self.halfspaces.iter().all(|h| h.offset > 1e-12 * scale)
    }

    /// Gauge value and index of the lowest-index maximizing facet.
    fn gauge(&self, x: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, h) in self.halfspaces.iter().enumerate() {
            let v = dot(&h.normal, x) / h.offset;
            if v > best {
                best = v;
                arg = i;
            }
        }
        (best.max(0.0), arg)
    }

    fn facet_gradient(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        let h = &self.halfspaces[i];
        h.normal.iter().map(move |a| a / h.offset)
    }

    fn active_facets(&self, x: &[f64], tol: f64) -> (f64, Vec<usize>) {
        let (g, _) = self.gauge(x);
        let active = self
            .halfspaces
            .iter()
            .enumerate()
            .filter(|(_, h)| dot(&h.normal, x) / h.offset >= g - tol * g.max(1e-300))
            .map(|(i, _)| i)
            .collect();
        (g, active)
    }

    fn support(&self, u: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, v) in self.vertices.iter().enumerate() {
            let s = dot(u, v);
            if s > best {
                best = s;
                arg = i;
            }
        }
        (best, arg)
    }

    /// Log-sum-exp softening of the vertex maximum with temperature
    /// `tau · radius · |u|`. Writes the gradient and returns the value.
    fn smoothed_support(&self, u: &[f64], tau: f64, grad: &mut [f64]) -> f64 {
        let unorm = norm(u);
        if tau <= 0.0 || unorm == 0.0 {
            let (h, i) = self.support(u);
            grad.copy_from_slice(&self.vertices[i]);
            return h;
        }
        let temp = tau * self.radius * unorm;
        let mut scores: Vec<f64> = self.vertices.iter().map(|v| dot(u, v)).collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in &mut scores {
            *s = ((*s - top) / temp).exp();
            total += *s;
        }
        let h = top + temp * total.ln();
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (w, v) in scores.iter().zip(&self.vertices) {
            let w = w / total;
            grad.iter_mut().zip(v).for_each(|(g, x)| *g += w * x);
        }
        let along = dot(u, grad) / unorm;
        let corr = h / unorm - along;
        grad.iter_mut()
            .zip(u)
            .for_each(|(g, x)| *g += corr * x / unorm);
        h
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(linalg::dist(a, b));
            }
        }
        d
    }

    fn is_symmetric(&self) -> bool {
        let tol = 1e-9 * self.radius.max(1e-300);
        self.vertices.iter().all(|v| {
            self.vertices
                .iter()
                .any(|w| v.iter().zip(w).all(|(a, b)| (a + b).abs() <= tol))
        })
    }

    fn inner_radius(&self) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.offset)
            .fold(f64::INFINITY, f64::min)
    }

    fn planar_area(&self) -> Option<f64> {
        if self.dim() != 2 {
            return None;
        }
        let mut pts: Vec<&Vec<f64>> = self.vertices.iter().collect();
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
        pts.sort_by(|a, b| {
            (a[1] - cy)
                .atan2(a[0] - cx)
                .total_cmp(&(b[1] - cy).atan2(b[0] - cx))
        });
        let mut area = 0.0;
        for i in 0..pts.len() {
            let p = pts[i];
            let q = pts[(i + 1) % pts.len()];
            area += p[0] * q[1] - q[0] * p[1];
        }
        Some(0.5 * area.abs())
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Ellipsoid(Ellipsoid),
    Polytope(Polytope),
    /// `P × Q ⊂ ℝⁿ × ℝⁿ`, the first factor in the x-coordinates.
    Product(Polytope, Polytope),
}

/// A convex body in ℝ²ⁿ whose interior contains the origin.
#[derive(Clone, Debug)]
pub struct Body {
    kind: BodyKind,
    shape: Shape,
    offset: Vec<f64>,
}

impl Body {
    /// Normal-form ellipsoid `E(a₁, …, aₙ)`; `E(a, …, a)` is the ball `B(a)`.
    pub fn ellipsoid(a: &[f64]) -> Result<Self> {
        let e = Ellipsoid::normal_form(a)?;
        let offset = vec![0.0; e.dim()];
        Ok(Self {
            kind: BodyKind::Ellipsoid,
            shape: Shape::Ellipsoid(e),
            offset,
        })
    }

    /// An arbitrary ellipsoid, recentered so that its center is the origin.
    pub fn from_ellipsoid(e: &Ellipsoid) -> Result<Self> {
        check_even(e.dim())?;
        let mut inner = e.clone();
        let offset = inner.center.clone();
        inner.center.iter_mut().for_each(|c| *c = 0.0);
        Ok(Self {
            kind: BodyKind::Ellipsoid,
            shape: Shape::Ellipsoid(inner),
            offset,
        })
    }

    /// Convex hull of `vertices`, recentered at its Chebyshev center.
    pub fn vpolytope(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let d = vertices.first().map(|v| v.len()).unwrap_or(0);
        check_even(d)?;
        let (p, offset) = Polytope::centered(vertices)?;
        Ok(Self {
            kind: BodyKind::Vpolytope,
            shape: Shape::Polytope(p),
            offset,
        })
    }

    /// Lagrangian product `P × Q` with `P` in the x-plane and `Q` in the y-plane.
    pub fn lagrangian_product(
        p_vertices: Vec<Vec<f64>>,
        q_vertices: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (p, cp) = Polytope::centered(p_vertices)?;
        let (q, cq) = Polytope::centered(q_vertices)?;
        if p.dim() != q.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: q.dim(),
            });
        }
        let offset = cp.into_iter().chain(cq).collect();
        Ok(Self {
            kind: BodyKind::LagrangianProduct,
            shape: Shape::Product(p, q),
            offset,
        })
    }

    /// `B∞ × B₁ ⊂ ℝ⁴`: the unit square times the unit ℓ¹-ball.
    pub fn linf_times_l1() -> Self {
        let square = vec![
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, -1.0],
        ];
        let diamond = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ];
        Self::lagrangian_product(square, diamond).expect("static body is valid")
    }

    /// `λK`: support `λh`, squared gauge `H/λ²`.
    pub fn scale(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidBody("scale factor must be positive".into()));
        }
        let mut out = self.clone();
        match &mut out.shape {
            Shape::Ellipsoid(e) => e.scale(lambda),
            Shape::Polytope(p) => p.scale(lambda),
            Shape::Product(p, q) => {
                p.scale(lambda);
                q.scale(lambda);
            }
        }
        out.offset.iter_mut().for_each(|o| *o *= lambda);
        out.kind = BodyKind::Scaled;
        Ok(out)
    }

    /// `K + v`. The origin must remain an interior point.
    pub fn translate(&self, v: &[f64]) -> Result<Self> {
        self.check_dim(v)?;
        let mut out = self.clone();
        let n = self.dim() / 2;
        let inside = match &mut out.shape {
            Shape::Ellipsoid(e) => {
                e.translate(v);
                e.contains_origin()
            }
            Shape::Polytope(p) => {
                p.translate(v);
                p.contains_origin()
            }
            Shape::Product(p, q) => {
                p.translate(&v[..n]);
                q.translate(&v[n..]);
                p.contains_origin() && q.contains_origin()
            }
        };
        if !inside {
            return Err(Error::OriginNotInterior);
        }
        out.kind = BodyKind::Translated;
        Ok(out)
    }

    pub fn kind(&self) -> BodyKind {
        self.kind
    }

    /// Ambient dimension `2n`.
    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Ellipsoid(e) => e.dim(),
            Shape::Polytope(p) => p.dim(),
            Shape::Product(p, _) => 2 * p.dim(),
        }
    }

    /// Number of degrees of freedom `n`.
    pub fn n(&self) -> usize {
        self.dim() / 2
    }

    /// Shift subtracted at construction; adding it restores the input placement.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// The ellipsoid itself, when the body is one.
    pub fn as_ellipsoid(&self) -> Option<&Ellipsoid> {
        match &self.shape {
            Shape::Ellipsoid(e) => Some(e),
            _ => None,
        }
    }

    /// Vertex list for polytopes (products enumerate all vertex pairs).
    pub fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        match &self.shape {
            Shape::Ellipsoid(_) => None,
            Shape::Polytope(p) => Some(p.vertices.clone()),
            Shape::Product(p, q) => Some(
                p.vertices
                    .iter()
                    .flat_map(|a| {
                        q.vertices
                            .iter()
                            .map(move |b| a.iter().chain(b).cloned().collect())
                    })
                    .collect(),
            ),
        }
    }

    pub fn is_centrally_symmetric(&self) -> bool {
        match &self.shape {
            Shape::Ellipsoid(e) => norm(&e.center) <= 1e-12,
            Shape::Polytope(p) => p.is_symmetric(),
            Shape::Product(p, q) => p.is_symmetric() && q.is_symmetric(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ellipsoid(e) => e.diameter(),
            Shape::Polytope(p) => p.diameter(),
            Shape::Product(p, q) => p.diameter().hypot(q.diameter()),
        }
    }

    /// Largest `r` with the origin-centered ball of radius `r` inside the body
    /// (a lower bound for translated ellipsoids).
    pub fn inner_radius(&self) -> f64 {
        match &self.shape {
            Shape::Ellipsoid(e) => {
                let eig = SymmetricEigen::new(e.shape.clone());
                let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
                1.0 / lmax.sqrt() - norm(&e.center)
            }
            Shape::Polytope(p) => p.inner_radius(),
            Shape::Product(p, q) => p.inner_radius().min(q.inner_radius()),
        }
    }

    /// Largest distance from the origin to a point of the body.
    pub fn outer_radius(&self) -> f64 {
        match &self.shape {
            Shape::Ellipsoid(e) => {
                let eig = SymmetricEigen::new(e.shape.clone());
                let lmin = eig
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                1.0 / lmin.sqrt() + norm(&e.center)
            }
            Shape::Polytope(p) => p.radius,
            Shape::Product(p, q) => p.radius.hypot(q.radius),
        }
    }

    /// Volume, where a closed form is available (ellipsoids, planar polygons
    /// and products of planar polygons).
    pub fn volume(&self) -> Option<f64> {
        match &self.shape {
            Shape::Ellipsoid(e) => {
                let n = e.dim() / 2;
                let unit_ball = PI.powi(n as i32) / factorial(n);
                Some(unit_ball / e.shape.determinant().sqrt())
            }
            Shape::Polytope(p) => p.planar_area(),
            Shape::Product(p, q) => Some(p.planar_area()? * q.planar_area()?),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// The squared gauge `H_K(x)`; `H_K ≤ 1` exactly on `K`.
    pub fn gauge2(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.gauge2_unchecked(x))
    }

    pub(crate) fn gauge2_unchecked(&self, x: &[f64]) -> f64 {
        let g = match &self.shape {
            Shape::Ellipsoid(e) => e.gauge(x),
            Shape::Polytope(p) => p.gauge(x).0,
            Shape::Product(p, q) => {
                let n = p.dim();
                p.gauge(&x[..n]).0.max(q.gauge(&x[n..]).0)
            }
        };
        g * g
    }

    /// One element of `∂H_K(x)`; satisfies `⟨g, x⟩ = 2H_K(x)`.
    pub fn subgrad_gauge2(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; x.len()];
        match &self.shape {
            Shape::Ellipsoid(e) => {
                e.gauge2_grad(x, &mut out);
            }
            Shape::Polytope(p) => {
                let (g, i) = p.gauge(x);
                out.iter_mut()
                    .zip(p.facet_gradient(i))
                    .for_each(|(o, a)| *o = 2.0 * g * a);
            }
            Shape::Product(p, q) => {
                let n = p.dim();
                let (gp, ip) = p.gauge(&x[..n]);
                let (gq, iq) = q.gauge(&x[n..]);
                if gp >= gq {
                    out[..n]
                        .iter_mut()
                        .zip(p.facet_gradient(ip))
                        .for_each(|(o, a)| *o = 2.0 * gp * a);
                } else {
                    out[n..]
                        .iter_mut()
                        .zip(q.facet_gradient(iq))
                        .for_each(|(o, a)| *o = 2.0 * gq * a);
                }
            }
        }
        Ok(out)
    }

    /// Generators whose convex hull is `∂H_K(x)`, with facets counted active
    /// when they are within `tol` (relative) of the gauge.
    pub fn subdifferential_generators(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let d = x.len();
        match &self.shape {
            Shape::Ellipsoid(e) => {
                let mut g = vec![0.0; d];
                e.gauge2_grad(x, &mut g);
                vec![g]
            }
            Shape::Polytope(p) => {
                let (g, active) = p.active_facets(x, tol);
                active
                    .into_iter()
                    .map(|i| p.facet_gradient(i).map(|a| 2.0 * g * a).collect())
                    .collect()
            }
            Shape::Product(p, q) => {
                let n = p.dim();
                let (gp, ap) = p.active_facets(&x[..n], tol);
                let (gq, aq) = q.active_facets(&x[n..], tol);
                let top = gp.max(gq);
                let mut out = Vec::new();
                if gp >= top - tol * top {
                    for i in ap {
                        let mut v = vec![0.0; d];
                        v[..n]
                            .iter_mut()
                            .zip(p.facet_gradient(i))
                            .for_each(|(o, a)| *o = 2.0 * gp * a);
                        out.push(v);
                    }
                }
                if gq >= top - tol * top {
                    for i in aq {
                        let mut v = vec![0.0; d];
                        v[n..]
                            .iter_mut()
                            .zip(q.facet_gradient(i))
                            .for_each(|(o, a)| *o = 2.0 * gq * a);
                        out.push(v);
                    }
                }
                out
            }
        }
    }

    /// Support function `h_K(u) = max_{y∈K} ⟨u, y⟩`.
    pub fn support(&self, u: &[f64]) -> Result<f64> {
        self.check_dim(u)?;
        Ok(self.support_unchecked(u))
    }

    pub(crate) fn support_unchecked(&self, u: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ellipsoid(e) => e.support(u),
            Shape::Polytope(p) => p.support(u).0,
            Shape::Product(p, q) => {
                let n = p.dim();
                p.support(&u[..n]).0 + q.support(&u[n..]).0
            }
        }
    }

    /// A point of `K` attaining `h_K(u)`; returns `h_K(u)`.
    pub(crate) fn support_point_into(&self, u: &[f64], out: &mut [f64]) -> f64 {
        match &self.shape {
            Shape::Ellipsoid(e) => e.support_point(u, out),
            Shape::Polytope(p) => {
                let (h, i) = p.support(u);
                out.copy_from_slice(&p.vertices[i]);
                h
            }
            Shape::Product(p, q) => {
                let n = p.dim();
                let (hp, ip) = p.support(&u[..n]);
                let (hq, iq) = q.support(&u[n..]);
                out[..n].copy_from_slice(&p.vertices[ip]);
                out[n..].copy_from_slice(&q.vertices[iq]);
                hp + hq
            }
        }
    }

    pub fn support_point(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(u)?;
        let mut out = vec![0.0; u.len()];
        self.support_point_into(u, &mut out);
        Ok(out)
    }

    /// Fenchel conjugate of the squared gauge, `H*_K(u) = h_K(u)²/4`.
    pub fn conj(&self, u: &[f64]) -> Result<f64> {
        let h = self.support(u)?;
        Ok(0.25 * h * h)
    }

    /// One element of `∂H*_K(u)`: `(h_K(u)/2) · p` with `p` a maximizer.
    pub fn subgrad_conj(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(u)?;
        let mut out = vec![0.0; u.len()];
        self.conj_grad_into(u, 0.0, &mut out);
        Ok(out)
    }

    /// Conjugate with log-sum-exp smoothing of every polytope vertex maximum
    /// at relative temperature `tau`; writes the gradient, returns the value.
    /// `tau = 0` gives the exact conjugate and the subgradient of
    /// [`Body::subgrad_conj`]. Ellipsoids are never smoothed.
    pub(crate) fn conj_grad_into(&self, u: &[f64], tau: f64, grad: &mut [f64]) -> f64 {
        let h = match &self.shape {
            Shape::Ellipsoid(e) => e.support_point(u, grad),
            Shape::Polytope(p) => p.smoothed_support(u, tau, grad),
            Shape::Product(p, q) => {
                let n = p.dim();
                let (gp, gq) = grad.split_at_mut(n);
                p.smoothed_support(&u[..n], tau, gp) + q.smoothed_support(&u[n..], tau, gq)
            }
        };
        grad.iter_mut().for_each(|g| *g *= 0.5 * h);
        0.25 * h * h
    }

    /// Smoothed conjugate value without the gradient.
    pub fn conj_smoothed(&self, u: &[f64], tau: f64) -> Result<f64> {
        self.check_dim(u)?;
        let mut g = vec![0.0; u.len()];
        Ok(self.conj_grad_into(u, tau, &mut g))
    }

    /// The boundary point on the ray through `dir`.
    pub fn radial_boundary_point(&self, dir: &[f64]) -> Result<Vec<f64>> {
        let h = self.gauge2(dir)?;
        if h <= 0.0 {
            return Err(Error::InvalidArgument("zero direction".into()));
        }
        let s = 1.0 / h.sqrt();
        Ok(dir.iter().map(|v| v * s).collect())
    }
}

fn check_even(d: usize) -> Result<()> {
    if d == 0 || d % 2 == 1 {
        return Err(Error::OddDimension(d));
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// JSON description of a body, as read by the command line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    Ellipsoid {
        a: Vec<f64>,
    },
    Vpolytope {
        vertices: Vec<Vec<f64>>,
    },
    LagrangianProduct {
        p_vertices: Vec<Vec<f64>>,
        q_vertices: Vec<Vec<f64>>,
    },
    Scale {
        lambda: f64,
        body: Box<BodySpec>,
    },
    Translate {
        offset: Vec<f64>,
        body: Box<BodySpec>,
    },
}

impl BodySpec {
    pub fn build(&self) -> Result<Body> {
        match self {
            BodySpec::Ellipsoid { a } => Body::ellipsoid(a),
            BodySpec::Vpolytope { vertices } => Body::vpolytope(vertices.clone()),
            BodySpec::LagrangianProduct {
                p_vertices,
                q_vertices,
            } => Body::lagrangian_product(p_vertices.clone(), q_vertices.clone()),
            BodySpec::Scale { lambda, body } => body.build()?.scale(*lambda),
            BodySpec::Translate { offset, body } => body.build()?.translate(offset),
        }
    }

    /// Normal-form semi-axes when the spec is a (possibly scaled) ellipsoid.
    pub fn ellipsoid_axes(&self) -> Option<Vec<f64>> {
        match self {
            BodySpec::Ellipsoid { a } => Some(a.clone()),
            BodySpec::Scale { lambda, body } => body
                .ellipsoid_axes()
                .map(|a| a.iter().map(|v| v * lambda * lambda).collect()),
            BodySpec::Translate { body, .. } => body.ellipsoid_axes(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ball4() -> Body {
        Body::ellipsoid(&[1.0, 1.0]).unwrap()
    }

    fn square() -> Body {
        Body::vpolytope(vec![
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, -1.0],
        ])
        .unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_symmetric_polytope(rng: &mut ChaCha8Rng, half: usize) -> Body {
        let mut verts = Vec::new();
        for _ in 0..half {
            let v = random_vec(rng, 4);
            verts.push(v.iter().map(|x| -x).collect());
            verts.push(v);
        }
        Body::vpolytope(verts).unwrap()
    }

    #[test]
    fn ball_gauge_on_boundary() {
        let x = [1.0 / PI.sqrt(), 0.0, 0.0, 0.0];
        assert_relative_eq!(ball4().gauge2(&x).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn bxb1_gauge_example() {
        let k = Body::linf_times_l1();
        assert_relative_eq!(
            k.gauge2(&[0.5, 0.0, 0.25, 0.25]).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_eq!(k.gauge2(&[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn bxb1_subgradient_at_edge() {
        let k = Body::linf_times_l1();
        let x = [0.5, 0.0, -1.0, 0.0];
        let g = k.subgrad_gauge2(&x).unwrap();
        assert!(g[0].abs() < 1e-14 && g[1].abs() < 1e-14);
        assert_relative_eq!(g[2], -2.0, epsilon = 1e-12);
        assert_relative_eq!(g[3].abs(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(dot(&g, &x), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ellipsoid_gradient_is_2ax() {
        let k = Body::ellipsoid(&[1.0, 3.0]).unwrap();
        let x = [0.3, -0.2, 0.5, 0.1];
        let g = k.subgrad_gauge2(&x).unwrap();
        let a = [PI, PI / 3.0, PI, PI / 3.0];
        for i in 0..4 {
            assert_relative_eq!(g[i], 2.0 * a[i] * x[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn square_support_and_conj_subgradient() {
        let sq = square();
        assert_relative_eq!(sq.support(&[1.0, 0.5]).unwrap(), 1.5);
        let g = sq.subgrad_conj(&[1.0, 0.5]).unwrap();
        assert_relative_eq!(g[0], 0.75);
        assert_relative_eq!(g[1], 0.75);
    }

    #[test]
    fn ball_support_and_conj() {
        let u = [0.0, 0.6, 0.0, 0.8];
        assert_relative_eq!(
            ball4().support(&u).unwrap(),
            1.0 / PI.sqrt(),
            epsilon = 1e-14
        );
        assert_relative_eq!(ball4().conj(&u).unwrap(), 0.25 / PI, epsilon = 1e-14);
        assert_eq!(ball4().conj(&[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn ellipsoid_conj_gradient_is_ainv_u_half() {
        let k = Body::ellipsoid(&[1.0, 2.0]).unwrap();
        let u = [0.4, -1.0, 0.2, 0.7];
        let g = k.subgrad_conj(&u).unwrap();
        let ainv = [1.0 / PI, 2.0 / PI, 1.0 / PI, 2.0 / PI];
        for i in 0..4 {
            assert_relative_eq!(g[i], 0.5 * ainv[i] * u[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn constructor_errors() {
        let three = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        assert!(matches!(
            Body::vpolytope(three),
            Err(Error::NonSpanning { .. })
        ));
        assert!(Body::ellipsoid(&[1.0, -1.0]).is_err());
        assert!(ball4().scale(0.0).is_err());
        assert!(matches!(
            Body::vpolytope(vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]),
            Err(Error::OddDimension(3))
        ));
        assert!(matches!(
            ball4().gauge2(&[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ball4().translate(&[1.0, 0.0, 0.0, 0.0]),
            Err(Error::OriginNotInterior)
        ));
    }

    #[test]
    fn vpolytope_recenters_at_chebyshev_center() {
        let shifted = Body::vpolytope(vec![
            vec![3.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            vec![3.0, -1.0],
        ])
        .unwrap();
        assert_relative_eq!(shifted.offset()[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(shifted.offset()[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(shifted.support(&[1.0, 0.0]).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn scale_covariance() {
        let b = ball4();
        let s = b.scale(2.0).unwrap();
        let x = [0.1, 0.2, -0.3, 0.05];
        assert_relative_eq!(
            s.support(&x).unwrap(),
            2.0 * b.support(&x).unwrap(),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            s.gauge2(&x).unwrap(),
            0.25 * b.gauge2(&x).unwrap(),
            epsilon = 1e-14
        );
        let k = Body::linf_times_l1();
        let ks = k.scale(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = random_vec(&mut rng, 4);
            assert_relative_eq!(
                ks.conj(&u).unwrap(),
                0.25 * k.conj(&u).unwrap(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn translated_ellipsoid_gauge_matches_membership() {
        let e = ball4().translate(&[0.1, -0.05, 0.2, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let dir = random_vec(&mut rng, 4);
            let p = e.radial_boundary_point(&dir).unwrap();
            let c = [0.1, -0.05, 0.2, 0.0];
            let r2: f64 = p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            assert_relative_eq!(PI * r2, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_homogeneity() {
        let bodies = [
            ball4(),
            Body::linf_times_l1(),
            ball4().translate(&[0.1, 0.0, 0.0, 0.1]).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for b in &bodies {
            for _ in 0..100 {
                let x = random_vec(&mut rng, 4);
                let l: f64 = rng.random_range(0.0..10.0);
                let lx: Vec<f64> = x.iter().map(|v| v * l).collect();
                assert_relative_eq!(
                    b.gauge2(&lx).unwrap(),
                    l * l * b.gauge2(&x).unwrap(),
                    max_relative = 1e-12,
                    epsilon = 1e-300
                );
            }
        }
    }

    fn all_bodies(rng: &mut ChaCha8Rng) -> Vec<Body> {
        vec![
            ball4(),
            Body::ellipsoid(&[1.0, 2.5]).unwrap(),
            Body::linf_times_l1(),
            random_symmetric_polytope(rng, 10),
            Body::linf_times_l1()
                .translate(&[0.2, -0.1, 0.05, 0.1])
                .unwrap(),
            ball4().translate(&[0.1, 0.1, -0.1, 0.0]).unwrap(),
        ]
    }

    #[test]
    fn subgradient_inequalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for b in all_bodies(&mut rng) {
            for _ in 0..200 {
                let x = random_vec(&mut rng, 4);
                let y = random_vec(&mut rng, 4);
                let g = b.subgrad_gauge2(&x).unwrap();
                let diff: Vec<f64> = y.iter().zip(&x).map(|(a, c)| a - c).collect();
                let lhs = b.gauge2(&y).unwrap() - b.gauge2(&x).unwrap() - dot(&g, &diff);
                assert!(lhs >= -1e-12, "gauge subgradient inequality: {lhs}");
                assert_relative_eq!(
                    dot(&g, &x),
                    2.0 * b.gauge2(&x).unwrap(),
                    max_relative = 1e-10,
                    epsilon = 1e-14
                );

                let gc = b.subgrad_conj(&x).unwrap();
                let lhs = b.conj(&y).unwrap() - b.conj(&x).unwrap() - dot(&gc, &diff);
                assert!(lhs >= -1e-12, "conjugate subgradient inequality: {lhs}");
            }
        }
    }

    #[test]
    fn fenchel_young() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for b in all_bodies(&mut rng) {
            for _ in 0..200 {
                let x = random_vec(&mut rng, 4);
                let u = random_vec(&mut rng, 4);
                assert!(b.gauge2(&x).unwrap() + b.conj(&u).unwrap() >= dot(&x, &u) - 1e-12);
            }
        }
    }

    #[test]
    fn conj_subgradient_norm_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for b in all_bodies(&mut rng) {
            let r = b.outer_radius();
            let c = 0.5 * r * r;
            for _ in 0..100 {
                let u = random_vec(&mut rng, 4);
                let g = b.subgrad_conj(&u).unwrap();
                assert!(norm(&g) <= c * norm(&u) * (1.0 + 1e-12) + 1e-15);
            }
        }
    }

    #[test]
    fn product_support_is_additive() {
        let k = Body::linf_times_l1();
        let verts = k.vertices().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..200 {
            let u = random_vec(&mut rng, 4);
            let brute = verts
                .iter()
                .map(|v| dot(&u, v))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(k.support(&u).unwrap(), brute, epsilon = 1e-14);
        }
    }

    #[test]
    fn polytope_support_matches_vertex_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let verts: Vec<Vec<f64>> = (0..15).map(|_| random_vec(&mut rng, 4)).collect();
        let k = Body::vpolytope(verts.clone()).unwrap();
        let c = k.offset().to_vec();
        for _ in 0..200 {
            let u = random_vec(&mut rng, 4);
            let brute = verts
                .iter()
                .map(|v| dot(&u, v) - dot(&u, &c))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(k.support(&u).unwrap(), brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn membership_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let dirs: Vec<Vec<f64>> = (0..1000).map(|_| random_vec(&mut rng, 4)).collect();
        for b in all_bodies(&mut rng) {
            for _ in 0..40 {
                let x: Vec<f64> = random_vec(&mut rng, 4).iter().map(|v| v * 0.9).collect();
                let inside = b.gauge2(&x).unwrap() <= 1.0;
                let by_support = dirs
                    .iter()
                    .all(|u| dot(u, &x) <= b.support(u).unwrap() + 1e-9);
                if inside {
                    assert!(by_support);
                }
                if !by_support {
                    assert!(!inside);
                }
            }
        }
    }

    #[test]
    fn smoothed_conjugate_dominates_and_converges() {
        let k = Body::linf_times_l1();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let u = random_vec(&mut rng, 4);
            let exact = k.conj(&u).unwrap();
            let mut prev = f64::INFINITY;
            for tau in [1e-1, 1e-2, 1e-3, 1e-5] {
                let s = k.conj_smoothed(&u, tau).unwrap();
                assert!(s >= exact - 1e-15);
                assert!(s <= prev + 1e-15);
                prev = s;
            }
            assert!(prev - exact < 1e-3 * exact.max(1e-3));
        }
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let k = Body::linf_times_l1();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..50 {
            let u = random_vec(&mut rng, 4);
            let mut g = vec![0.0; 4];
            k.conj_grad_into(&u, 0.05, &mut g);
            for i in 0..4 {
                let h = 1e-6;
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (k.conj_smoothed(&up, 0.05).unwrap()
                    - k.conj_smoothed(&dn, 0.05).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(g[i], fd, epsilon = 1e-6, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn normal_form_recovered_from_shape() {
        let e = Ellipsoid::normal_form(&[2.0, 0.5]).unwrap();
        let plain = Ellipsoid::new(e.center().to_vec(), e.shape().clone()).unwrap();
        let a = plain.symplectic_semi_axes();
        assert_relative_eq!(a[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(a[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn volumes() {
        assert_relative_eq!(ball4().volume().unwrap(), 0.5, epsilon = 1e-14);
        assert_relative_eq!(
            Body::linf_times_l1().volume().unwrap(),
            8.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn body_spec_json() {
        let text = r#"{"type":"scale","lambda":2.0,"body":{"type":"lagrangian_product",
            "p_vertices":[[1,1],[-1,1],[-1,-1],[1,-1]],"q_vertices":[[1,0],[0,1],[-1,0],[0,-1]]}}"#;
        let spec: BodySpec = serde_json::from_str(text).unwrap();
        let body = spec.build().unwrap();
        assert_eq!(body.kind(), BodyKind::Scaled);
        assert_relative_eq!(body.support(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 2.0);
        let bad = r#"{"type":"ellipsoid","b":[1]}"#;
        assert!(serde_json::from_str::<BodySpec>(bad).is_err());
    }
}
