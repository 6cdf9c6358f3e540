//! Monte Carlo reference prices by Euler simulation of the Kolmogorov SDE
//! `dX = (a + BX) dt + σ dW` with `σσᵀ = A_0` on the first block.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::geometry::GroupPoint;
use crate::model::{diffusion_matrix, CoefficientModel};
use crate::payoff::Payoff;
use crate::pricer::{price, PricingOptions};

const CHUNK: usize = 4096;

/// Update rule for the degenerate components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Left endpoint: `x_{k+1} = x_k + h B x_k` on blocks `1..r`.
    #[default]
    Euler,
    /// Trapezoidal rule `h B (x_k + x_{k+1}) / 2`, removing the `O(h)` bias
    /// of the left-endpoint Riemann sum.
    EulerTrapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_unit_time: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub scheme: Scheme,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 100_000, steps_per_unit_time: 2000, seed: 1, antithetic: true, scheme: Scheme::Euler }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.paths < 2 || self.steps_per_unit_time < 1 {
            return Err(Error::InvalidInput("need at least 2 paths and 1 step per unit time".into()));
        }
        if self.antithetic && !self.paths.is_multiple_of(2) {
            return Err(Error::InvalidInput("antithetic sampling needs an even path count".into()));
        }
        Ok(())
    }

    pub fn steps(&self, horizon: f64) -> usize {
        ((self.steps_per_unit_time as f64 * horizon).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub steps: usize,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Self) -> Self {
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Self { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }
}

struct PathSimulator<'a> {
    model: &'a dyn CoefficientModel,
    payoff: &'a Payoff,
    t: f64,
    h: f64,
    steps: usize,
    x0: DVector<f64>,
    scheme: Scheme,
}

impl PathSimulator<'_> {
    fn run(&self, noise: &[f64], sign: f64, path: usize) -> Result<f64> {
        let s = self.model.structure();
        let (d, p0) = (s.dim(), s.p0());
        let b = s.matrix();
        let drift = self.model.has_drift();
        let sq = self.h.sqrt();
        let mut x = self.x0.clone();
        let mut next = x.clone();
        for k in 0..self.steps {
            let z = GroupPoint::new(self.t + k as f64 * self.h, x.clone());
            let dw = &noise[k * p0..(k + 1) * p0];
            if p0 == 1 {
                let a = self.model.diffusion(0, 0, &z);
                if !(a >= 0.0) {
                    return Err(Error::NonFinitePath { path, step: k });
                }
                next[0] = x[0] + a.sqrt() * sq * sign * dw[0];
            } else {
                let l = diffusion_matrix(self.model, &z)
                    .cholesky()
                    .ok_or(Error::NonFinitePath { path, step: k })?
                    .l();
                for i in 0..p0 {
                    let mut v = 0.0;
                    for j in 0..=i {
                        v += l[(i, j)] * dw[j];
                    }
                    next[i] = x[i] + sq * sign * v;
                }
            }
            if drift {
                for i in 0..p0 {
                    next[i] += self.h * self.model.drift(i, &z);
                }
            }
            for i in p0..d {
                let mut v = 0.0;
                for j in 0..i {
                    let bij = b[(i, j)];
                    if bij != 0.0 {
                        v += bij
                            * match self.scheme {
                                Scheme::Euler => x[j],
                                Scheme::EulerTrapezoid => 0.5 * (x[j] + next[j]),
                            };
                    }
                }
                next[i] = x[i] + self.h * v;
            }
            std::mem::swap(&mut x, &mut next);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinitePath { path, step: k });
            }
        }
        let v = self.payoff.eval(x.as_slice());
        if !v.is_finite() {
            return Err(Error::NonFinitePath { path, step: self.steps });
        }
        Ok(v)
    }
}

/// `E_{t,x}[φ(X_T)]` with its standard error. With antithetic sampling the
/// standard error is computed from pair averages.
pub fn simulate_price(
    model: &dyn CoefficientModel,
    payoff: &Payoff,
    t: f64,
    maturity: f64,
    x: &[f64],
    cfg: &McConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    if !(maturity > t) {
        return Err(Error::NonPositiveHorizon { t, maturity });
    }
    let s = model.structure();
    if x.len() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: x.len() });
    }
    let steps = cfg.steps(maturity - t);
    let sim = PathSimulator {
        model,
        payoff,
        t,
        h: (maturity - t) / steps as f64,
        steps,
        x0: DVector::from_column_slice(x),
        scheme: cfg.scheme,
    };
    let samples = if cfg.antithetic { cfg.paths / 2 } else { cfg.paths };
    let width = steps * s.p0();
    let chunks: Vec<Result<Moments>> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::default();
            let mut noise = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64);
                for z in noise.iter_mut() {
                    *z = StandardNormal.sample(&mut rng);
                }
                let v = if cfg.antithetic {
                    0.5 * (sim.run(&noise, 1.0, 2 * i)? + sim.run(&noise, -1.0, 2 * i + 1)?)
                } else {
                    sim.run(&noise, 1.0, i)?
                };
                m.push(v);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for c in chunks {
        total = total.merge(c?);
    }
    let var = if total.n > 1.0 { total.m2 / (total.n - 1.0) } else { 0.0 };
    Ok(McEstimate { mean: total.mean, stderr: (var / total.n).sqrt(), paths: cfg.paths, steps })
}

/// One maturity of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub theta: f64,
    /// `U_N` for each requested `N`.
    pub expansion: Vec<f64>,
    pub mc: McEstimate,
    pub errors: Vec<f64>,
    /// `|error| < 3 · stderr`.
    pub noise_dominated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub orders: Vec<usize>,
    pub rows: Vec<ConvergenceRow>,
    /// Fitted slope of `|U_N − MC|` against `θ` per order, noise-dominated
    /// maturities excluded.
    pub slopes: Vec<Option<f64>>,
}

/// A pricing problem at horizon `θ`: `(t, T, x, payoff)`.
pub type ProblemAt<'a> = dyn Fn(f64) -> Result<(f64, f64, Vec<f64>, Payoff)> + Sync + 'a;

/// Expansion against Monte Carlo over a grid of horizons.
pub fn convergence_table(
    model: &dyn CoefficientModel,
    problem: &ProblemAt<'_>,
    maturities: &[f64],
    cfg: &McConfig,
    orders: &[usize],
    options: &PricingOptions,
) -> Result<ConvergenceTable> {
    let max = orders.iter().copied().max().unwrap_or(0);
    // maturities run concurrently; collect keeps the input order
    let rows: Vec<ConvergenceRow> = maturities
        .par_iter()
        .map(|&theta| {
            let (t, maturity, x, payoff) = problem(theta)?;
            let r = price(model, &payoff, t, maturity, &x, max, options, &[])?;
            let mc = simulate_price(model, &payoff, t, maturity, &x, cfg)?;
            let expansion: Vec<f64> = orders.iter().map(|&n| r.cumulative[n]).collect();
            let errors: Vec<f64> = expansion.iter().map(|u| (u - mc.mean).abs()).collect();
            let noise_dominated = errors.iter().map(|e| *e < 3.0 * mc.stderr).collect();
            Ok(ConvergenceRow { theta, expansion, mc, errors, noise_dominated })
        })
        .collect::<Result<_>>()?;
    let slopes = (0..orders.len())
        .map(|i| {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter(|r| !r.noise_dominated[i]).map(|r| (r.theta, r.errors[i])).collect();
            loglog_slope(&pts)
        })
        .collect();
    Ok(ConvergenceTable { orders: orders.to_vec(), rows, slopes })
}

/// Per-order increments `|u_{N+1}|` on the grid and their fitted slopes.
pub type SelfConsistency = (Vec<Vec<f64>>, Vec<Option<f64>>);

/// Slopes of `|U_{N+1} − U_N|` against `θ` for `N < max_order`, no
/// simulation involved.
pub fn self_consistency_slopes(
    model: &dyn CoefficientModel,
    problem: &ProblemAt<'_>,
    maturities: &[f64],
    max_order: usize,
    options: &PricingOptions,
) -> Result<SelfConsistency> {
    let per_theta: Vec<Vec<f64>> = maturities
        .par_iter()
        .map(|&theta| {
            let (t, maturity, x, payoff) = problem(theta)?;
            Ok(price(model, &payoff, t, maturity, &x, max_order, options, &[])?.orders)
        })
        .collect::<Result<_>>()?;
    let diffs: Vec<Vec<f64>> = (0..max_order).map(|n| per_theta.iter().map(|o| o[n + 1].abs()).collect()).collect();
    let slopes = diffs
        .iter()
        .map(|d| loglog_slope(&maturities.iter().copied().zip(d.iter().copied()).collect::<Vec<_>>()))
        .collect();
    Ok((diffs, slopes))
}
