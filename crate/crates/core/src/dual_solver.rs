//! Minimization of the Clarke dual functional
//! `Ψ_K(x) = ∫ H*_K(−J₀ẋ)` over truncated zero-mean loops with `𝒜(x) = 1`,
//! and reconstruction of the generalized systole from a minimizer.
//!
//! The solver works with the 0-homogeneous quotient `ℋ/𝒜` and rescales onto
//! the action-one level after every step. Polytope support functions are
//! softened by a log-sum-exp whose temperature is annealed towards zero;
//! L-BFGS runs in coordinates where the `H¹₀` metric is Euclidean, and a
//! final subgradient polish works on the exact functional.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Body;
use crate::linalg::{dist_to_hull, dot, norm};
use crate::loops::{apply_j0, Dft, FourierLoop, TimeLoop};

/// Solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Truncation order `N`.
    pub modes: usize,
    /// Quadrature samples `M`; `None` means `8N`.
    pub grid: Option<usize>,
    /// Number of independent starts.
    pub starts: usize,
    pub seed: u64,
    /// Initial smoothing temperature, relative to the body size.
    pub tau0: f64,
    /// Temperature decay factor per stage.
    pub rho: f64,
    /// Smallest temperature before the exact polish.
    pub tau_min: f64,
    /// Iteration budget per run, over all stages.
    pub max_iter: usize,
    /// Relative value change over 20 iterations that ends a stage.
    pub stop_tol: f64,
    /// Iterations of the exact subgradient polish.
    pub polish_iter: usize,
    /// Relative accuracy claimed for numeric values.
    pub accuracy: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            modes: 24,
            grid: None,
            starts: 8,
            seed: 0,
            tau0: 0.05,
            rho: 0.3,
            tau_min: 1e-4,
            max_iter: 50_000,
            stop_tol: 1e-9,
            polish_iter: 400,
            accuracy: 0.01,
        }
    }
}

impl SolveConfig {
    pub fn grid(&self) -> usize {
        self.grid.unwrap_or(8 * self.modes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.modes == 0 {
            return bad("modes must be positive");
        }
        if self.starts == 0 {
            return bad("starts must be positive");
        }
        if self.grid() < 4 * self.modes {
            return Err(Error::GridTooSmall {
                grid: self.grid(),
                modes: self.modes,
                min: 4 * self.modes,
            });
        }
        if !(self.tau0 > 0.0 && self.tau_min > 0.0 && self.tau_min <= self.tau0) {
            return bad("temperatures must satisfy 0 < tau_min <= tau0");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.stop_tol > 0.0 && self.stop_tol <= 1e-3) {
            return bad("stop_tol must lie in (0, 1e-3]");
        }
        if !(self.accuracy > 0.0 && self.accuracy < 1.0) {
            return bad("accuracy must lie in (0, 1)");
        }
        Ok(())
    }

    /// Relative tolerance used when comparing numeric values.
    pub fn rel_tol(&self) -> f64 {
        2.0 * self.accuracy
    }
}

/// One multistart run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub run: usize,
    /// Exact `Ψ_K` at the returned loop.
    pub value: f64,
    /// Minimizer with `𝒜 = 1`.
    pub x: FourierLoop,
    pub converged: bool,
    pub iterations: usize,
}

/// Reconstructed generalized closed characteristic.
#[derive(Clone, Debug)]
pub struct SystoleResult {
    pub gamma: TimeLoop,
    /// Action `𝒜(γ)`.
    pub action: f64,
    pub beta: Vec<f64>,
    pub inclusion_residual: f64,
    pub boundary_residual: f64,
    pub minimizer: FourierLoop,
    /// Dual value `Ψ_K` at the minimizer.
    pub value: f64,
    pub run: usize,
    pub converged: bool,
}

/// Exact or smoothed evaluation of `ℋ_K` and its gradient on a fixed grid.
struct Objective<'a> {
    body: &'a Body,
    dft: Dft,
    dim: usize,
    modes: usize,
    m: usize,
    w: Vec<f64>,
    g: Vec<f64>,
    tmp: FourierLoop,
}

impl<'a> Objective<'a> {
    fn new(body: &'a Body, modes: usize, m: usize) -> Self {
        let dim = body.dim();
        Self {
            body,
            dft: Dft::new(m, modes),
            dim,
            modes,
            m,
            w: vec![0.0; m * dim],
            g: vec![0.0; m * dim],
            tmp: FourierLoop::zeros(dim, modes),
        }
    }

    /// `ℋ_τ(x) = (1/M) Σ H*_τ(w_s)` with `w = −J₀ẋ = Σ 2πk e^{2πktJ₀} x̂(k)`;
    /// writes `∇ℋ_τ` into `grad` when given.
    fn eval(&mut self, x: &[f64], tau: f64, grad: Option<&mut [f64]>) -> f64 {
        self.tmp.data_mut().copy_from_slice(x);
        self.dft
            .synthesize(&self.tmp, |k| 2.0 * PI * k as f64, &mut self.w);
        let d = self.dim;
        let mut total = 0.0;
        for s in 0..self.m {
            let u = &self.w[s * d..(s + 1) * d];
            let g = &mut self.g[s * d..(s + 1) * d];
            total += self.body.conj_grad_into(u, tau, g);
        }
        if let Some(grad) = grad {
            self.dft.analyze(&self.g, d, grad);
            let n = self.modes as i64;
            for (slot, k) in (-n..=n).filter(|&k| k != 0).enumerate() {
                let f = 2.0 * PI * k as f64;
                grad[slot * d..(slot + 1) * d]
                    .iter_mut()
                    .for_each(|v| *v *= f);
            }
        }
        total / self.m as f64
    }

    /// Samples of `w = −J₀ẋ`, left in `self.w`.
    fn dual_velocity(&mut self, x: &FourierLoop) {
        self.dft.synthesize(x, |k| 2.0 * PI * k as f64, &mut self.w);
    }
}

/// Signed mode numbers in storage order, repeated per coordinate.
fn mode_weights(dim: usize, modes: usize) -> Vec<f64> {
    let n = modes as i64;
    (-n..=n)
        .filter(|&k| k != 0)
        .flat_map(|k| std::iter::repeat_n(k as f64, dim))
        .collect()
}

fn action_of(data: &[f64], ks: &[f64]) -> f64 {
    PI * data.iter().zip(ks).map(|(v, k)| k * v * v).sum::<f64>()
}

fn check_input(body: &Body, x: &FourierLoop, m: usize) -> Result<()> {
    if x.dim() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: x.dim(),
        });
    }
    if m < 4 * x.modes() {
        return Err(Error::GridTooSmall {
            grid: m,
            modes: x.modes(),
            min: 4 * x.modes(),
        });
    }
    Ok(())
}

/// `Ψ_K(x)` by trapezoidal quadrature on `M` samples, smoothed at `tau > 0`.
/// The loop is used as given; normalize it to `𝒜 = 1` first.
pub fn psi(body: &Body, x: &FourierLoop, m: usize, tau: f64) -> Result<f64> {
    check_input(body, x, m)?;
    let mut obj = Objective::new(body, x.modes(), m);
    Ok(obj.eval(x.data(), tau, None))
}

/// Gradient of [`psi`] in the `H¹₀` metric: the coefficient gradient divided
/// by `(2πk)²`. At `tau = 0` it is assembled from the selected subgradients.
pub fn subgrad_psi(body: &Body, x: &FourierLoop, m: usize, tau: f64) -> Result<FourierLoop> {
    check_input(body, x, m)?;
    let mut obj = Objective::new(body, x.modes(), m);
    let mut grad = vec![0.0; x.data().len()];
    obj.eval(x.data(), tau, Some(&mut grad));
    let ks = mode_weights(x.dim(), x.modes());
    grad.iter_mut()
        .zip(&ks)
        .for_each(|(g, k)| *g /= (2.0 * PI * k) * (2.0 * PI * k));
    Ok(FourierLoop::from_data(x.dim(), x.modes(), grad))
}

/// Random start: `x̂(k) ~ N(0, (2πk)⁻²)` per coordinate, the `|k| = 1` modes
/// four times larger, reversed when the action comes out negative.
pub fn initial_loop(dim: usize, modes: usize, rng: &mut ChaCha8Rng) -> FourierLoop {
    let ks = mode_weights(dim, modes);
    let data: Vec<f64> = ks
        .iter()
        .map(|k| {
            let z: f64 = StandardNormal.sample(rng);
            let amp = if k.abs() == 1.0 { 4.0 } else { 1.0 };
            amp * z / (2.0 * PI * k.abs())
        })
        .collect();
    let x = FourierLoop::from_data(dim, modes, data);
    if x.action() < 0.0 {
        x.reversed()
    } else {
        x
    }
}

/// The random generator of run `run` for a given seed.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

/// Runs `cfg.starts` independent minimizations from random starts; results
/// are sorted by value, ties by run index.
pub fn minimize(body: &Body, cfg: &SolveConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let inits: Vec<FourierLoop> = (0..cfg.starts)
        .map(|r| initial_loop(body.dim(), cfg.modes, &mut run_rng(cfg.seed, r)))
        .collect();
    minimize_from(body, cfg, inits)
}

/// Like [`minimize`], from the given starting loops (one run each).
pub fn minimize_from(
    body: &Body,
    cfg: &SolveConfig,
    inits: Vec<FourierLoop>,
) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    for x in &inits {
        check_input(body, x, cfg.grid())?;
        if x.modes() != cfg.modes {
            return Err(Error::InvalidArgument(format!(
                "start loop has {} modes, configuration {}",
                x.modes(),
                cfg.modes
            )));
        }
    }
    let mut out: Vec<RunResult> = inits
        .into_par_iter()
        .enumerate()
        .map(|(run, x0)| single_run(body, cfg, run, x0))
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.run.cmp(&b.run)));
    Ok(out)
}

struct Lbfgs {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    cap: usize,
}

impl Lbfgs {
    fn new(cap: usize) -> Self {
        Self {
            s: Vec::new(),
            y: Vec::new(),
            cap,
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
    }

    /// `−H·g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            q.iter_mut()
                .zip(&self.y[i])
                .for_each(|(a, b)| *a -= alpha[i] * b);
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|a| *a *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let beta = rho * dot(&self.y[i], &q);
            q.iter_mut()
                .zip(&self.s[i])
                .for_each(|(a, b)| *a += (alpha[i] - beta) * b);
        }
        q.iter_mut().for_each(|a| *a = -*a);
        q
    }
}

/// State of one run in scaled coordinates `z = 2π|k| x̂(k)`.
struct Run<'a> {
    obj: Objective<'a>,
    ks: Vec<f64>,
    scale: Vec<f64>,
    xbuf: Vec<f64>,
    gbuf: Vec<f64>,
    iterations: usize,
    budget: usize,
    best_exact: f64,
    best_x: Vec<f64>,
}

impl Run<'_> {
    fn to_x(&mut self, z: &[f64]) {
        for ((x, z), s) in self.xbuf.iter_mut().zip(z).zip(&self.scale) {
            *x = z / s;
        }
    }

    /// Value of `ℋ_τ/𝒜` at `z` and its gradient in `z`; `+∞` off `{𝒜 > 0}`.
    fn value_grad(&mut self, z: &[f64], tau: f64, grad: &mut [f64]) -> f64 {
        self.to_x(z);
        let a = action_of(&self.xbuf, &self.ks);
        if !(a > 0.0) {
            return f64::INFINITY;
        }
        let h = self.obj.eval(&self.xbuf, tau, Some(&mut self.gbuf));
        let f = h / a;
        for i in 0..grad.len() {
            let da = 2.0 * PI * self.ks[i] * self.xbuf[i];
            grad[i] = (self.gbuf[i] - f * da) / a / self.scale[i];
        }
        f
    }

    fn value(&mut self, z: &[f64], tau: f64) -> f64 {
        self.to_x(z);
        let a = action_of(&self.xbuf, &self.ks);
        if !(a > 0.0) {
            return f64::INFINITY;
        }
        self.obj.eval(&self.xbuf, tau, None) / a
    }

    /// Rescales `z` onto `𝒜 = 1`; returns the factor applied.
    fn normalize(&mut self, z: &mut [f64]) -> f64 {
        self.to_x(z);
        let c = 1.0 / action_of(&self.xbuf, &self.ks).sqrt();
        z.iter_mut().for_each(|v| *v *= c);
        c
    }

    fn record_exact(&mut self, z: &[f64]) {
        let v = self.value(z, 0.0);
        if v < self.best_exact {
            self.best_exact = v;
            self.to_x(z);
            self.best_x.clone_from(&self.xbuf);
        }
    }

    /// L-BFGS with Armijo backtracking at fixed temperature. Returns `true`
    /// when the stage ended by the stopping rule.
    fn stage(&mut self, z: &mut Vec<f64>, tau: f64, stop_tol: f64) -> bool {
        let len = z.len();
        let mut g = vec![0.0; len];
        let mut f = self.value_grad(z, tau, &mut g);
        let mut mem = Lbfgs::new(8);
        let mut history = vec![f];
        let mut gnew = vec![0.0; len];
        let mut trial = vec![0.0; len];
        loop {
            if self.iterations >= self.budget {
                return false;
            }
            let gn = norm(&g);
            if gn <= 1e-14 * norm(z) {
                return true;
            }
            let mut d = mem.direction(&g);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                mem.clear();
                d = g.iter().map(|v| -v).collect();
                slope = -gn * gn;
            }
            let mut t = if mem.s.is_empty() {
                0.05 * norm(z) / norm(&d)
            } else {
                1.0
            };
            let mut accepted = None;
            for _ in 0..50 {
                for i in 0..len {
                    trial[i] = z[i] + t * d[i];
                }
                let ft = self.value_grad(&trial, tau, &mut gnew);
                if ft <= f + 1e-4 * t * slope {
                    accepted = Some(ft);
                    break;
                }
                t *= 0.5;
            }
            self.iterations += 1;
            let Some(ft) = accepted else {
                if mem.s.is_empty() {
                    return true;
                }
                mem.clear();
                continue;
            };
            let c = self.normalize(&mut trial);
            gnew.iter_mut().for_each(|v| *v /= c);
            let s: Vec<f64> = trial.iter().zip(z.iter()).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
            mem.push(s, y);
            std::mem::swap(z, &mut trial);
            std::mem::swap(&mut g, &mut gnew);
            f = ft;
            history.push(f);
            if history.len() > 20 {
                let old = history[history.len() - 21];
                if (old - f).abs() <= stop_tol * f.abs() {
                    return true;
                }
            }
        }
    }

    /// Diminishing-step subgradient descent on the exact functional.
    fn polish(&mut self, z: &mut [f64], iters: usize) {
        let len = z.len();
        let mut g = vec![0.0; len];
        let base = 0.01 * norm(z);
        for it in 0..iters {
            let f = self.value_grad(z, 0.0, &mut g);
            if f < self.best_exact {
                self.best_exact = f;
                self.to_x(z);
                self.best_x.clone_from(&self.xbuf);
            }
            let gn = norm(&g);
            if !(gn > 0.0) {
                break;
            }
            let step = base / ((it + 1) as f64).sqrt() / gn;
            z.iter_mut().zip(&g).for_each(|(a, b)| *a -= step * b);
            self.normalize(z);
        }
        self.record_exact(z);
    }
}

fn single_run(body: &Body, cfg: &SolveConfig, run: usize, x0: FourierLoop) -> Result<RunResult> {
    let dim = body.dim();
    let ks = mode_weights(dim, cfg.modes);
    let scale: Vec<f64> = ks.iter().map(|k| 2.0 * PI * k.abs()).collect();
    let x0 = x0.normalize_action()?;
    let mut z: Vec<f64> = x0.data().iter().zip(&scale).map(|(x, s)| x * s).collect();
    let mut state = Run {
        obj: Objective::new(body, cfg.modes, cfg.grid()),
        ks,
        scale,
        xbuf: vec![0.0; z.len()],
        gbuf: vec![0.0; z.len()],
        iterations: 0,
        budget: cfg.max_iter,
        best_exact: f64::INFINITY,
        best_x: x0.data().to_vec(),
    };
    let smooth = body.as_ellipsoid().is_none();
    let converged;
    if smooth {
        let mut tau = cfg.tau0;
        loop {
            let done = state.stage(&mut z, tau, cfg.stop_tol);
            state.record_exact(&z);
            if tau <= cfg.tau_min || state.iterations >= state.budget {
                converged = done;
                break;
            }
            tau = (tau * cfg.rho).max(cfg.tau_min);
        }
        state.polish(&mut z, cfg.polish_iter);
    } else {
        converged = state.stage(&mut z, 0.0, cfg.stop_tol);
        state.record_exact(&z);
    }
    let x = FourierLoop::from_data(dim, cfg.modes, state.best_x.clone());
    Ok(RunResult {
        run,
        value: state.best_exact,
        x,
        converged,
        iterations: state.iterations,
    })
}

/// `β = mean_s ∂H*_K(w_s) − Ψ·mean_s x(t_s)` with the selected subgradients.
pub fn recover_beta(body: &Body, x: &FourierLoop, value: f64, m: usize) -> Result<Vec<f64>> {
    check_input(body, x, m)?;
    let dim = body.dim();
    let mut obj = Objective::new(body, x.modes(), m);
    obj.dual_velocity(x);
    let mut beta = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for s in 0..m {
        body.conj_grad_into(&obj.w[s * dim..(s + 1) * dim], 0.0, &mut g);
        beta.iter_mut().zip(&g).for_each(|(b, v)| *b += v);
    }
    let samples = x.to_time(m)?;
    let mean = samples.mean();
    beta.iter_mut()
        .zip(&mean)
        .for_each(|(b, mu)| *b = *b / m as f64 - value * mu);
    Ok(beta)
}

/// Options for [`inclusion_residual`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionOptions {
    /// Samples excluded on each side of a detected velocity jump; 0 disables.
    pub corner_window: usize,
    /// Relative slack for counting a facet as active.
    pub active_tol: f64,
}

impl Default for InclusionOptions {
    fn default() -> Self {
        Self {
            corner_window: 2,
            active_tol: 1e-9,
        }
    }
}

/// Outcome of an inclusion check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub residual: f64,
    /// Number of samples skipped by corner windows.
    pub excluded: usize,
    pub corner_window: usize,
    /// Sample index attaining the residual.
    pub worst_sample: usize,
}

/// Indices whose forward-difference velocity jumps against the previous one.
fn velocity_jumps(gamma: &TimeLoop) -> Vec<usize> {
    let pts = gamma.samples();
    let m = pts.len();
    let diffs: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            pts[(j + 1) % m]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    let jumps: Vec<f64> = (0..m)
        .map(|j| crate::linalg::dist(&diffs[(j + m - 1) % m], &diffs[j]))
        .collect();
    let mut sorted = jumps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[m / 2];
    let step = diffs.iter().map(|d| norm(d)).fold(0.0, f64::max);
    let threshold = (10.0 * median).max(1e-9 * step);
    (0..m).filter(|&j| jumps[j] > threshold).collect()
}

/// `max_s dist(γ̇(t_s)/T, J₀ ∂H_K(γ(t_s)))`. Velocities come from the loop's
/// derivative samples, or central differences when it has none.
pub fn inclusion_residual(
    body: &Body,
    gamma: &TimeLoop,
    t: f64,
    opts: &InclusionOptions,
) -> Result<InclusionReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "action {t} is not positive"
        )));
    }
    if gamma.dim() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: gamma.dim(),
        });
    }
    let m = gamma.len();
    let mut skip = vec![false; m];
    if opts.corner_window > 0 {
        let w = opts.corner_window as i64;
        for j in velocity_jumps(gamma) {
            for o in -w..=w {
                skip[(j as i64 + o).rem_euclid(m as i64) as usize] = true;
            }
        }
    }
    let vel = gamma.velocities();
    let mut worst = 0.0;
    let mut worst_sample = 0;
    for (s, (p, v)) in gamma.samples().iter().zip(&vel).enumerate() {
        if skip[s] {
            continue;
        }
        let target: Vec<f64> = v.iter().map(|a| a / t).collect();
        let gens: Vec<Vec<f64>> = body
            .subdifferential_generators(p, opts.active_tol)
            .iter()
            .map(|g| apply_j0(g))
            .collect();
        let r = dist_to_hull(&target, &gens);
        if r > worst {
            worst = r;
            worst_sample = s;
        }
    }
    Ok(InclusionReport {
        residual: worst,
        excluded: skip.iter().filter(|&&b| b).count(),
        corner_window: opts.corner_window,
        worst_sample,
    })
}

/// `max_s |H_K(γ(t_s)) − 1|`.
pub fn boundary_residual(body: &Body, gamma: &TimeLoop) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in gamma.samples() {
        worst = worst.max((body.gauge2(p)? - 1.0).abs());
    }
    Ok(worst)
}

/// Relative facet slack used when certifying reconstructed loops: the
/// truncated series rounds corners, so facets within the observed boundary
/// error count as active.
pub fn numeric_active_tol(boundary_residual: f64) -> f64 {
    (4.0 * boundary_residual).clamp(1e-6, 0.2)
}

/// `γ = (Ψx + β)/√Ψ` on the `M`-grid with its certificates.
pub fn reconstruct(
    body: &Body,
    x: &FourierLoop,
    value: f64,
    beta: &[f64],
    m: usize,
) -> Result<SystoleResult> {
    if !(value > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dual value {value} is not positive"
        )));
    }
    check_input(body, x, m)?;
    let root = value.sqrt();
    let shift: Vec<f64> = beta.iter().map(|b| b / root).collect();
    let gamma = x.to_time(m)?.affine(root, &shift);
    let action = gamma.action();
    let boundary = boundary_residual(body, &gamma)?;
    let opts = InclusionOptions {
        corner_window: 0,
        active_tol: numeric_active_tol(boundary),
    };
    let inclusion = inclusion_residual(body, &gamma, action, &opts)?.residual;
    Ok(SystoleResult {
        gamma,
        action,
        beta: beta.to_vec(),
        inclusion_residual: inclusion,
        boundary_residual: boundary,
        minimizer: x.clone(),
        value,
        run: 0,
        converged: true,
    })
}

/// Reconstructs the systole of one run.
pub fn systole_from_run(body: &Body, run: &RunResult, m: usize) -> Result<SystoleResult> {
    let beta = recover_beta(body, &run.x, run.value, m)?;
    let mut s = reconstruct(body, &run.x, run.value, &beta, m)?;
    s.run = run.run;
    s.converged = run.converged;
    Ok(s)
}

/// Wraps a closed-form loop as a systole result: action from the samples,
/// `β` as the mean, the minimizer as the truncated normalized loop, and an
/// inclusion certificate at its own action with the given options.
pub fn certify_loop(
    body: &Body,
    gamma: &TimeLoop,
    modes: usize,
    opts: &InclusionOptions,
) -> Result<SystoleResult> {
    if gamma.dim() != body.dim() {
        return Err(Error::DimensionMismatch {
            expected: body.dim(),
            got: gamma.dim(),
        });
    }
    let action = gamma.action();
    if !(action > 0.0) {
        return Err(Error::NonPositiveAction(action));
    }
    let beta = gamma.mean();
    let minimizer = FourierLoop::from_time(gamma, modes)?.normalize_action()?;
    Ok(SystoleResult {
        gamma: gamma.clone(),
        action,
        beta,
        inclusion_residual: inclusion_residual(body, gamma, action, opts)?.residual,
        boundary_residual: boundary_residual(body, gamma)?,
        minimizer,
        value: action,
        run: usize::MAX,
        converged: true,
    })
}

/// Minimizes and reconstructs every run, in value order.
pub fn solve_systoles(body: &Body, cfg: &SolveConfig) -> Result<Vec<SystoleResult>> {
    let runs = minimize(body, cfg)?;
    runs.iter()
        .map(|r| systole_from_run(body, r, cfg.grid()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn ball() -> Body {
        Body::ellipsoid(&[1.0, 1.0]).unwrap()
    }

    fn circle(modes: usize) -> FourierLoop {
        FourierLoop::from_modes(4, modes, &[(1, vec![1.0 / PI.sqrt(), 0.0, 0.0, 0.0])]).unwrap()
    }

    fn random_normalized(rng: &mut ChaCha8Rng, modes: usize) -> FourierLoop {
        initial_loop(4, modes, rng).normalize_action().unwrap()
    }

    #[test]
    fn ball_circle_value_is_one() {
        assert_relative_eq!(
            psi(&ball(), &circle(4), 32, 0.0).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn grid_check() {
        assert!(matches!(
            psi(&ball(), &circle(8), 16, 0.0),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn psi_phase_invariant_and_scale_covariant() {
        let k = Body::linf_times_l1();
        let mut rng = run_rng(1, 0);
        let x = random_normalized(&mut rng, 6);
        let v = psi(&k, &x, 48, 0.0).unwrap();
        let shifted = psi(&k, &x.phase_shift(5.0 / 48.0), 48, 0.0).unwrap();
        assert_relative_eq!(v, shifted, max_relative = 1e-12);
        let k2 = k.scale(2.0).unwrap();
        assert_relative_eq!(
            psi(&k2, &x, 48, 0.0).unwrap(),
            4.0 * v,
            max_relative = 1e-12
        );
    }

    #[test]
    fn smoothed_gradient_matches_finite_differences() {
        let k = Body::linf_times_l1();
        let mut rng = run_rng(2, 0);
        for _ in 0..20 {
            let x = random_normalized(&mut rng, 4);
            let g = subgrad_psi(&k, &x, 32, 1e-2).unwrap();
            // undo the metric to get the coefficient gradient
            let ks = mode_weights(4, 4);
            let raw: Vec<f64> = g
                .data()
                .iter()
                .zip(&ks)
                .map(|(v, k)| v * (2.0 * PI * k).powi(2))
                .collect();
            let dir: Vec<f64> = (0..raw.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let h = 1e-6;
            let plus = FourierLoop::from_data(
                4,
                4,
                x.data().iter().zip(&dir).map(|(a, b)| a + h * b).collect(),
            );
            let minus = FourierLoop::from_data(
                4,
                4,
                x.data().iter().zip(&dir).map(|(a, b)| a - h * b).collect(),
            );
            let fd = (psi(&k, &plus, 32, 1e-2).unwrap() - psi(&k, &minus, 32, 1e-2).unwrap())
                / (2.0 * h);
            let an = dot(&raw, &dir);
            assert!(
                (fd - an).abs() <= 1e-4 * an.abs().max(1e-3),
                "fd {fd} vs {an}"
            );
        }
    }

    #[test]
    fn gradient_is_phase_equivariant() {
        let k = Body::ellipsoid(&[1.0, 2.0]).unwrap();
        let mut rng = run_rng(3, 0);
        let x = random_normalized(&mut rng, 4);
        let theta = 3.0 / 32.0;
        let a = subgrad_psi(&k, &x.phase_shift(theta), 32, 0.0).unwrap();
        let b = subgrad_psi(&k, &x, 32, 0.0).unwrap().phase_shift(theta);
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_minimizer_is_stationary_on_the_constraint() {
        let x = circle(4);
        let g = subgrad_psi(&ball(), &x, 32, 0.0).unwrap();
        // tangent projection in the H¹ metric: remove the component along ∇𝒜
        let ks = mode_weights(4, 4);
        let da: Vec<f64> = x
            .data()
            .iter()
            .zip(&ks)
            .map(|(v, k)| 2.0 * PI * k * v / (2.0 * PI * k).powi(2))
            .collect();
        let w: Vec<f64> = ks.iter().map(|k| (2.0 * PI * k).powi(2)).collect();
        let ip = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .zip(&w)
                .map(|((p, q), r)| p * q * r)
                .sum::<f64>()
        };
        let c = ip(g.data(), &da) / ip(&da, &da);
        let proj: Vec<f64> = g.data().iter().zip(&da).map(|(a, b)| a - c * b).collect();
        assert!(ip(&proj, &proj).sqrt() < 1e-8);
    }

    #[test]
    fn ball_minimum() {
        let cfg = SolveConfig {
            modes: 8,
            starts: 4,
            ..SolveConfig::default()
        };
        let runs = minimize(&ball(), &cfg).unwrap();
        assert!((runs[0].value - 1.0).abs() < 1e-6);
        let s = systole_from_run(&ball(), &runs[0], cfg.grid()).unwrap();
        assert!(s.boundary_residual < 1e-6);
        assert!(s.beta.iter().all(|b| b.abs() < 1e-6));
        assert!((s.action - s.value).abs() < 1e-6 * s.value);
        assert!(s.inclusion_residual < 1e-3);
    }

    #[test]
    fn ellipsoid_minimum_is_smallest_axis() {
        let cfg = SolveConfig {
            modes: 8,
            starts: 4,
            ..SolveConfig::default()
        };
        let e = Body::ellipsoid(&[1.0, 2.0]).unwrap();
        let runs = minimize(&e, &cfg).unwrap();
        assert!((runs[0].value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn translated_ball_recenters_systole() {
        let cfg = SolveConfig {
            starts: 2,
            ..SolveConfig::default()
        };
        let b = ball().translate(&[0.1, -0.05, 0.0, 0.12]).unwrap();
        let systoles = solve_systoles(&b, &cfg).unwrap();
        assert!((systoles[0].value - 1.0).abs() < 1e-6);
        assert!(
            systoles[0].boundary_residual < 1e-6,
            "{}",
            systoles[0].boundary_residual
        );
    }

    #[test]
    fn wrong_action_is_detected() {
        let gamma = circle(2).to_time(64).unwrap();
        let ok = inclusion_residual(&ball(), &gamma, 1.0, &InclusionOptions::default()).unwrap();
        assert!(ok.residual < 1e-12);
        let bad = inclusion_residual(&ball(), &gamma, 2.0, &InclusionOptions::default()).unwrap();
        assert!(bad.residual >= 0.5);
    }

    #[test]
    fn deterministic_runs() {
        let cfg = SolveConfig {
            modes: 6,
            starts: 3,
            max_iter: 400,
            ..SolveConfig::default()
        };
        let k = Body::linf_times_l1();
        let a = minimize(&k, &cfg).unwrap();
        let b = minimize(&k, &cfg).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.value.to_bits(), q.value.to_bits());
            assert_eq!(p.x, q.x);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolveConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.rho = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = SolveConfig {
            grid: Some(10),
            ..SolveConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::GridTooSmall { .. })));
    }
}
