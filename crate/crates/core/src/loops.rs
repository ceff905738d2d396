//! Zero-mean loops in ℝ²ⁿ, as truncated Fourier series and as time samples.
//!
//! A [`FourierLoop`] stores `x̂(k)` for `0 < |k| ≤ N` and represents
//! `x(t) = Σ e^{2πktJ₀} x̂(k)`. On the symplectic plane `j` this is the complex
//! series `Σ c_{j,k} e^{2πikt}` with `c_{j,k} = x̂(k)_j + i x̂(k)_{n+j}`.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `J₀(x, y) = (−y, x)` in block coordinates.
pub fn apply_j0(v: &[f64]) -> Vec<f64> {
    let n = v.len() / 2;
    let mut out = vec![0.0; v.len()];
    for j in 0..n {
        out[j] = -v[n + j];
        out[n + j] = v[j];
    }
    out
}

/// Truncated Fourier loop with no constant term.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierLoop {
    dim: usize,
    modes: usize,
    /// `2N` blocks of `dim` entries, ordered `k = −N, …, −1, 1, …, N`.
    data: Vec<f64>,
}

impl FourierLoop {
    pub fn zeros(dim: usize, modes: usize) -> Self {
        Self {
            dim,
            modes,
            data: vec![0.0; 2 * modes * dim],
        }
    }

    /// Builds a loop from `(k, x̂(k))` pairs.
    pub fn from_modes(dim: usize, modes: usize, entries: &[(i64, Vec<f64>)]) -> Result<Self> {
        if dim == 0 || dim % 2 == 1 {
            return Err(Error::OddDimension(dim));
        }
        let mut x = Self::zeros(dim, modes);
        for (k, v) in entries {
            if *k == 0 || k.unsigned_abs() as usize > modes {
                return Err(Error::InvalidArgument(format!(
                    "mode {k} outside 0 < |k| ≤ {modes}"
                )));
            }
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            x.coeff_mut(*k).copy_from_slice(v);
        }
        Ok(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.dim / 2
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// All modes in storage order.
    pub fn ks(&self) -> impl Iterator<Item = i64> {
        let n = self.modes as i64;
        (-n..=n).filter(|&k| k != 0)
    }

    fn slot(&self, k: i64) -> usize {
        let n = self.modes as i64;
        debug_assert!(k != 0 && k.abs() <= n);
        if k < 0 {
            (k + n) as usize
        } else {
            (k + n - 1) as usize
        }
    }

    pub fn coeff(&self, k: i64) -> &[f64] {
        let s = self.slot(k) * self.dim;
        &self.data[s..s + self.dim]
    }

    pub fn coeff_mut(&mut self, k: i64) -> &mut [f64] {
        let s = self.slot(k) * self.dim;
        &mut self.data[s..s + self.dim]
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn from_data(dim: usize, modes: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 2 * modes * dim);
        Self { dim, modes, data }
    }

    /// `𝒜(x) = π Σ k |x̂(k)|²`.
    pub fn action(&self) -> f64 {
        PI * self
            .ks()
            .map(|k| k as f64 * self.coeff(k).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
    }

    /// Squared norm `Σ (2πk)² |x̂(k)|² = ‖ẋ‖²_{L²}`.
    pub fn h1_norm2(&self) -> f64 {
        self.ks()
            .map(|k| {
                let w = 2.0 * PI * k as f64;
                w * w * self.coeff(k).iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    /// Coefficient norm `Σ |x̂(k)|²`.
    pub fn l2_norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            modes: self.modes,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `x/√𝒜(x)`, the representative on the action-one level.
    pub fn normalize_action(&self) -> Result<Self> {
        let a = self.action();
        if !(a > 0.0) {
            return Err(Error::NonPositiveAction(a));
        }
        Ok(self.scaled(1.0 / a.sqrt()))
    }

    /// Time shift `t ↦ x(t − θ)`: `c_k ↦ e^{−2πikθ} c_k` on every plane.
    pub fn phase_shift(&self, theta: f64) -> Self {
        let mut out = self.clone();
        let n = self.n();
        for k in self.ks() {
            let (s, c) = (-2.0 * PI * k as f64 * theta).sin_cos();
            let v = out.coeff_mut(k);
            for j in 0..n {
                let (a, b) = (v[j], v[n + j]);
                v[j] = c * a - s * b;
                v[n + j] = s * a + c * b;
            }
        }
        out
    }

    /// Keeps the modes `|k| ≤ modes` (zero-padding when `modes` is larger).
    pub fn truncate(&self, modes: usize) -> Self {
        let mut out = Self::zeros(self.dim, modes);
        let m = modes.min(self.modes) as i64;
        for k in (-m..=m).filter(|&k| k != 0) {
            out.coeff_mut(k).copy_from_slice(self.coeff(k));
        }
        out
    }

    /// Reverses the orientation: `x(t) ↦ x(−t)`.
    pub fn reversed(&self) -> Self {
        let mut out = Self::zeros(self.dim, self.modes);
        for k in self.ks() {
            out.coeff_mut(-k).copy_from_slice(self.coeff(k));
        }
        out
    }

    /// Exact position at time `t`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.eval_with_derivative(t).0
    }

    /// Exact position and velocity at time `t`.
    pub fn eval_with_derivative(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut pos = vec![0.0; self.dim];
        let mut vel = vec![0.0; self.dim];
        for k in self.ks() {
            let w = 2.0 * PI * k as f64;
            let (s, c) = (w * t).sin_cos();
            let v = self.coeff(k);
            for j in 0..n {
                let re = c * v[j] - s * v[n + j];
                let im = s * v[j] + c * v[n + j];
                pos[j] += re;
                pos[n + j] += im;
                vel[j] -= w * im;
                vel[n + j] += w * re;
            }
        }
        (pos, vel)
    }

    /// Samples `x(j/M)` and `ẋ(j/M)`. Requires `M ≥ 4N`.
    pub fn to_time(&self, m: usize) -> Result<TimeLoop> {
        check_grid(m, self.modes)?;
        let mut dft = Dft::new(m, self.modes);
        let mut pos = vec![0.0; m * self.dim];
        let mut vel = vec![0.0; m * self.dim];
        dft.synthesize(self, |_| 1.0, &mut pos);
        dft.synthesize_velocity(self, &mut vel);
        Ok(TimeLoop {
            dim: self.dim,
            samples: pos.chunks(self.dim).map(|c| c.to_vec()).collect(),
            derivatives: Some(vel.chunks(self.dim).map(|c| c.to_vec()).collect()),
        })
    }

    /// Discrete Fourier analysis of the centered samples, truncated to `N`.
    pub fn from_time(gamma: &TimeLoop, modes: usize) -> Result<Self> {
        let m = gamma.len();
        check_grid(m, modes)?;
        let dim = gamma.dim;
        let centered = gamma.center();
        let flat: Vec<f64> = centered.samples.iter().flatten().cloned().collect();
        let mut dft = Dft::new(m, modes);
        let mut out = Self::zeros(dim, modes);
        dft.analyze(&flat, dim, &mut out.data);
        Ok(out)
    }
}

fn check_grid(m: usize, modes: usize) -> Result<()> {
    let min = (4 * modes).max(2);
    if m < min {
        return Err(Error::GridTooSmall {
            grid: m,
            modes,
            min,
        });
    }
    Ok(())
}

/// Transforms between `2N` complex modes per plane and `M` samples.
pub(crate) struct Dft {
    m: usize,
    modes: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Dft {
    pub(crate) fn new(m: usize, modes: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            m,
            modes,
            forward,
            inverse,
            buf: vec![Complex::default(); m],
            scratch: vec![Complex::default(); len],
        }
    }

    fn bin(&self, k: i64) -> usize {
        k.rem_euclid(self.m as i64) as usize
    }

    fn ks(&self) -> impl Iterator<Item = i64> {
        let n = self.modes as i64;
        (-n..=n).filter(|&k| k != 0)
    }

    /// `out[s] = Σ_k weight(k) e^{2πk(s/M)J₀} x̂(k)` for `s < M`.
    pub(crate) fn synthesize(
        &mut self,
        x: &FourierLoop,
        weight: impl Fn(i64) -> f64,
        out: &mut [f64],
    ) {
        let d = x.dim;
        let n = d / 2;
        for j in 0..n {
            self.buf.iter_mut().for_each(|c| *c = Complex::default());
            for k in self.ks() {
                let wk = weight(k);
                let v = x.coeff(k);
                let b = self.bin(k);
                self.buf[b] = Complex::new(wk * v[j], wk * v[n + j]);
            }
            self.inverse
                .process_with_scratch(&mut self.buf, &mut self.scratch);
            for (s, c) in self.buf.iter().enumerate() {
                out[s * d + j] = c.re;
                out[s * d + n + j] = c.im;
            }
        }
    }

    fn synthesize_velocity(&mut self, x: &FourierLoop, out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.synthesize(x, |k| 2.0 * PI * k as f64, &mut tmp);
        // ẋ = J₀ Σ 2πk e^{2πktJ₀} x̂(k)
        let d = x.dim;
        for (o, t) in out.chunks_mut(d).zip(tmp.chunks(d)) {
            o.copy_from_slice(&apply_j0(t));
        }
    }

    /// `coeffs(k) = (1/M) Σ_s e^{−2πk(s/M)J₀} g[s]`.
    pub(crate) fn analyze(&mut self, g: &[f64], dim: usize, coeffs: &mut [f64]) {
        let n = dim / 2;
        let inv = 1.0 / self.m as f64;
        for j in 0..n {
            for (s, c) in self.buf.iter_mut().enumerate() {
                *c = Complex::new(g[s * dim + j], g[s * dim + n + j]);
            }
            self.forward
                .process_with_scratch(&mut self.buf, &mut self.scratch);
            for (slot, k) in self.ks().enumerate() {
                let c = self.buf[self.bin(k)];
                coeffs[slot * dim + j] = c.re * inv;
                coeffs[slot * dim + n + j] = c.im * inv;
            }
        }
    }
}

/// A loop sampled at `t_j = j/M`, optionally with exact velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeLoop {
    dim: usize,
    samples: Vec<Vec<f64>>,
    derivatives: Option<Vec<Vec<f64>>>,
}

impl TimeLoop {
    pub fn new(samples: Vec<Vec<f64>>, derivatives: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(
                "a time loop needs at least two samples".into(),
            ));
        }
        let dim = samples[0].len();
        if dim == 0 || dim % 2 == 1 {
            return Err(Error::OddDimension(dim));
        }
        let all = samples.iter().chain(derivatives.iter().flatten());
        for s in all {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite loop sample".into()));
            }
        }
        if let Some(d) = &derivatives {
            if d.len() != samples.len() {
                return Err(Error::InvalidArgument(
                    "derivative count differs from sample count".into(),
                ));
            }
        }
        Ok(Self {
            dim,
            samples,
            derivatives,
        })
    }

    /// Samples a closed-form loop `t ↦ (γ(t), γ̇(t))` on `M` points.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> (Vec<f64>, Vec<f64>)) -> Result<Self> {
        let (pos, vel): (Vec<_>, Vec<_>) = (0..m).map(|j| f(j as f64 / m as f64)).unzip();
        Self::new(pos, Some(vel))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn derivatives(&self) -> Option<&[Vec<f64>]> {
        self.derivatives.as_deref()
    }

    pub fn without_derivatives(&self) -> Self {
        Self {
            dim: self.dim,
            samples: self.samples.clone(),
            derivatives: None,
        }
    }

    /// Velocities: the stored ones, else central differences.
    pub fn velocities(&self) -> Vec<Vec<f64>> {
        if let Some(d) = &self.derivatives {
            return d.clone();
        }
        let m = self.len();
        let h = 0.5 * m as f64;
        (0..m)
            .map(|j| {
                let a = &self.samples[(j + m - 1) % m];
                let b = &self.samples[(j + 1) % m];
                b.iter().zip(a).map(|(p, q)| (p - q) * h).collect()
            })
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim];
        for s in &self.samples {
            mu.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        let m = self.len() as f64;
        mu.iter_mut().for_each(|a| *a /= m);
        mu
    }

    /// Subtracts the discrete mean.
    pub fn center(&self) -> Self {
        let mu = self.mean();
        Self {
            dim: self.dim,
            samples: self
                .samples
                .iter()
                .map(|s| s.iter().zip(&mu).map(|(a, b)| a - b).collect())
                .collect(),
            derivatives: self.derivatives.clone(),
        }
    }

    /// `½∫⟨γ̇, J₀γ⟩`: trapezoid rule with stored velocities, otherwise the
    /// exact area of the closed polygon through the samples.
    pub fn action(&self) -> f64 {
        let m = self.len();
        match &self.derivatives {
            Some(d) => {
                let s: f64 = self.samples.iter().zip(d).map(|(x, v)| dot_j0(v, x)).sum();
                0.5 * s / m as f64
            }
            None => {
                let s: f64 = (0..m)
                    .map(|j| {
                        let a = &self.samples[j];
                        let b = &self.samples[(j + 1) % m];
                        let step: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
                        dot_j0(&step, a)
                    })
                    .sum();
                0.5 * s
            }
        }
    }

    /// Piecewise-linear interpolation at time `t` (periodic).
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let m = self.len();
        let u = t.rem_euclid(1.0) * m as f64;
        let i = (u.floor() as usize).min(m - 1);
        let f = u - i as f64;
        let a = &self.samples[i];
        let b = &self.samples[(i + 1) % m];
        a.iter().zip(b).map(|(p, q)| p + f * (q - p)).collect()
    }

    /// `γ(· − θ)` resampled by linear interpolation on the same grid.
    pub fn phase_shift(&self, theta: f64) -> Self {
        let m = self.len();
        let samples = (0..m)
            .map(|j| self.interpolate(j as f64 / m as f64 - theta))
            .collect();
        Self {
            dim: self.dim,
            samples,
            derivatives: None,
        }
    }

    /// Resamples on `m` points by linear interpolation.
    pub fn resample(&self, m: usize) -> Self {
        Self {
            dim: self.dim,
            samples: (0..m)
                .map(|j| self.interpolate(j as f64 / m as f64))
                .collect(),
            derivatives: None,
        }
    }

    /// Applies an affine map `x ↦ a·x + b` to positions and `v ↦ a·v` to velocities.
    pub fn affine(&self, a: f64, b: &[f64]) -> Self {
        Self {
            dim: self.dim,
            samples: self
                .samples
                .iter()
                .map(|s| s.iter().zip(b).map(|(x, c)| a * x + c).collect())
                .collect(),
            derivatives: self.derivatives.as_ref().map(|d| {
                d.iter()
                    .map(|v| v.iter().map(|x| a * x).collect())
                    .collect()
            }),
        }
    }

    /// Uniform distance between samples of two loops on the same grid.
    pub fn sup_distance(&self, other: &TimeLoop) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| crate::linalg::dist(a, b))
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x1,y1,…,xn,yn`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.dim / 2;
        let mut header = vec!["t".to_string()];
        for j in 1..=n {
            header.push(format!("x{j}"));
            header.push(format!("y{j}"));
        }
        writeln!(w, "{}", header.join(","))?;
        let m = self.len();
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![format_float(i as f64 / m as f64)];
            for j in 0..n {
                row.push(format_float(s[j]));
                row.push(format_float(s[n + j]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV layout written by [`TimeLoop::write_csv`]; the `t`
    /// column is ignored and samples are taken as uniformly spaced.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty loop file".into()))??;
        let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if cols.first().map(String::as_str) != Some("t")
            || cols.len() < 3
            || cols.len().is_multiple_of(2)
        {
            return Err(Error::InvalidArgument(format!(
                "bad loop header `{header}`"
            )));
        }
        let n = (cols.len() - 1) / 2;
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != cols.len() {
                return Err(Error::InvalidArgument(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 2,
                    cols.len(),
                    vals.len()
                )));
            }
            let mut p = vec![0.0; 2 * n];
            for j in 0..n {
                p[j] = vals[1 + 2 * j];
                p[n + j] = vals[2 + 2 * j];
            }
            samples.push(p);
        }
        Self::new(samples, None)
    }
}

fn dot_j0(v: &[f64], x: &[f64]) -> f64 {
    let n = x.len() / 2;
    (0..n).map(|j| v[j] * -x[n + j] + v[n + j] * x[j]).sum()
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_float(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

#[derive(Serialize, Deserialize)]
struct ModeEntry {
    k: i64,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FourierLoopJson {
    n: usize,
    #[serde(rename = "N")]
    modes: usize,
    coeffs: Vec<ModeEntry>,
}

impl Serialize for FourierLoop {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FourierLoopJson {
            n: self.n(),
            modes: self.modes,
            coeffs: self
                .ks()
                .map(|k| ModeEntry {
                    k,
                    v: self.coeff(k).to_vec(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FourierLoop {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = FourierLoopJson::deserialize(d)?;
        let entries: Vec<(i64, Vec<f64>)> = j.coeffs.into_iter().map(|e| (e.k, e.v)).collect();
        FourierLoop::from_modes(2 * j.n, j.modes, &entries).map_err(serde::de::Error::custom)
    }
}
