//! Direct method-of-lines solver for the nonlocal Fisher–KPP equation.
//!
//! With `u(x, t) = U(x, S(t))` the fractal equation becomes
//! `∂_τ U = ε U_xx + a U - ϰ U (b * U)` on `τ ∈ [0, S(1)]`, which is marched
//! with an explicit scheme on a uniform grid with homogeneous Dirichlet
//! boundaries. Output times are mapped to `τ` through the staircase, so the
//! solver shares nothing with the asymptotic construction beyond `S`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::asymptotics::{SolutionField, SpatialGrid};
use crate::flees::ModelParams;
use crate::fractal_set::CantorPrefractal;
use crate::math;
use crate::{Error, Result};

/// Largest admissible `ε Δτ / Δx²`.
pub const STABILITY_LIMIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScheme {
    #[default]
    Euler,
    /// Explicit trapezoid (Heun) predictor-corrector.
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Laplacian {
    /// Three-point central difference.
    #[default]
    SecondOrder,
    /// Five-point central difference, three-point next to the boundary.
    FourthOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeConfig {
    pub grid: SpatialGrid,
    /// Number of nominal steps over `[0, S(1)]`.
    pub tau_steps: usize,
    pub params: ModelParams,
    pub prefractal: CantorPrefractal,
    pub scheme: TimeScheme,
    pub laplacian: Laplacian,
}

impl PdeConfig {
    pub fn new(grid: SpatialGrid, tau_steps: usize, params: ModelParams, prefractal: CantorPrefractal) -> Self {
        Self {
            grid,
            tau_steps,
            params,
            prefractal,
            scheme: TimeScheme::default(),
            laplacian: Laplacian::default(),
        }
    }

    /// Nominal step `S(1) / tau_steps`.
    pub fn tau_step(&self) -> f64 {
        self.prefractal.total_mass() / self.tau_steps as f64
    }

    /// `ε Δτ / Δx²` for the nominal step.
    pub fn stability_number(&self) -> f64 {
        let h = self.grid.spacing();
        self.params.epsilon * self.tau_step() / (h * h)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.tau_steps == 0 {
            return Err(Error::Config("tau_steps must be positive".into()));
        }
        let number = self.stability_number();
        if number > STABILITY_LIMIT {
            return Err(Error::Config(format!(
                "explicit scheme unstable: eps*dtau/dx^2 = {number:.4} exceeds {STABILITY_LIMIT}"
            )));
        }
        Ok(())
    }

    /// Smallest step count that satisfies the stability bound.
    pub fn min_stable_steps(grid: &SpatialGrid, params: &ModelParams, prefractal: &CantorPrefractal) -> usize {
        let h = grid.spacing();
        let max_step = STABILITY_LIMIT * h * h / params.epsilon;
        math::ceil(prefractal.total_mass() / max_step).max(1.0) as usize
    }
}

/// Gaussian initial data `Σ_s N_s ε^{-1/2} exp(-(x - x_s)² / (2ε σ_s²))`.
pub fn initial_field(params: &ModelParams, grid: &SpatialGrid) -> Vec<f64> {
    let eps = params.epsilon;
    (0..grid.points())
        .map(|j| {
            let x = grid.node(j);
            params
                .particles
                .iter()
                .map(|p| {
                    let z = x - p.center;
                    p.amplitude / math::sqrt(eps) * math::exp(-z * z / (2.0 * eps * p.sigma * p.sigma))
                })
                .sum()
        })
        .collect()
}

/// A field on a spatial grid at one physical time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: SpatialGrid,
    pub time: f64,
    pub u: Vec<f64>,
}

impl From<&SolutionField> for Snapshot {
    fn from(f: &SolutionField) -> Self {
        Snapshot { grid: f.grid, time: f.time, u: f.u.clone() }
    }
}

/// Trapezoid-rule `(b * u)(x_j) = ∫ b(x_j - y) u(y) dy` on a uniform grid.
pub fn convolve(params: &ModelParams, h: f64, u: &[f64]) -> Vec<f64> {
    let kernel = kernel_by_offset(params, h, u.len());
    convolve_with(&kernel, h, u)
}

fn kernel_by_offset(params: &ModelParams, h: f64, n: usize) -> Vec<f64> {
    (0..n).map(|m| params.kernel(m as f64 * h)).collect()
}

fn convolve_with(kernel: &[f64], h: f64, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut weighted = u.to_vec();
    weighted[0] *= 0.5;
    weighted[n - 1] *= 0.5;
    (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for (k, w) in weighted.iter().enumerate() {
                acc += kernel[j.abs_diff(k)] * w;
            }
            h * acc
        })
        .collect()
}

fn laplacian(kind: Laplacian, h: f64, u: &[f64], out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / (h * h);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for j in 1..n - 1 {
        out[j] = match kind {
            Laplacian::FourthOrder if j >= 2 && j + 2 < n => {
                (-u[j - 2] + 16.0 * u[j - 1] - 30.0 * u[j] + 16.0 * u[j + 1] - u[j + 2]) * inv / 12.0
            }
            _ => (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv,
        };
    }
}

struct Stepper<'a> {
    config: &'a PdeConfig,
    kernel: Vec<f64>,
    lap: Vec<f64>,
}

impl Stepper<'_> {
    fn rhs(&mut self, u: &[f64], out: &mut [f64]) {
        let p = &self.config.params;
        let h = self.config.grid.spacing();
        laplacian(self.config.laplacian, h, u, &mut self.lap);
        let conv = convolve_with(&self.kernel, h, u);
        let n = u.len();
        for j in 1..n - 1 {
            out[j] = p.epsilon * self.lap[j] + p.a_const * u[j] - p.kappa * u[j] * conv[j];
        }
        out[0] = 0.0;
        out[n - 1] = 0.0;
    }
}

/// Marches `initial` and returns the field at each requested physical time.
///
/// Times are sorted internally and returned in ascending order. Between two
/// output levels the step is shrunk so that every output `τ = S(t)` is hit
/// exactly.
pub fn solve_direct(config: &PdeConfig, initial: &[f64], times: &[f64]) -> Result<Vec<Snapshot>> {
    config.validate()?;
    let n = config.grid.points();
    if initial.len() != n {
        return Err(Error::Alignment(format!("initial field has {} values for {n} nodes", initial.len())));
    }
    let staircase = config.prefractal.staircase();
    let mut targets: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| staircase.eval(t).map(|tau| (t, tau)))
        .collect::<Result<Vec<_>>>()?;
    targets.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut stepper = Stepper {
        config,
        kernel: kernel_by_offset(&config.params, config.grid.spacing(), n),
        lap: vec![0.0; n],
    };
    let mut u = initial.to_vec();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut pred = vec![0.0; n];
    let nominal = config.tau_step();
    let mut tau = 0.0;
    let mut out = Vec::with_capacity(targets.len());
    for (t, target) in targets {
        let span = target - tau;
        if span > 0.0 {
            let steps = math::ceil(span / nominal - 1e-9).max(1.0) as usize;
            let dt = span / steps as f64;
            for m in 0..steps {
                stepper.rhs(&u, &mut k1);
                match config.scheme {
                    TimeScheme::Euler => {
                        for j in 0..n {
                            u[j] += dt * k1[j];
                        }
                    }
                    TimeScheme::Heun => {
                        for j in 0..n {
                            pred[j] = u[j] + dt * k1[j];
                        }
                        stepper.rhs(&pred, &mut k2);
                        for j in 0..n {
                            u[j] += 0.5 * dt * (k1[j] + k2[j]);
                        }
                    }
                }
                if u.iter().any(|v| !v.is_finite()) {
                    let tau_now = tau + (m + 1) as f64 * dt;
                    let time = staircase.inverse(tau_now.min(staircase.total())).unwrap_or(t);
                    return Err(Error::Divergence { time });
                }
            }
            tau = target;
        }
        out.push(Snapshot { grid: config.grid, time: t, u: u.clone() });
    }
    Ok(out)
}

/// Error norms between two fields at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub time: f64,
    pub l2_abs: f64,
    pub l2_rel: f64,
    pub linf_abs: f64,
    pub linf_rel: f64,
}

/// L² and L∞ differences of `a - b`, relative ones normalised by `b`.
pub fn compare(a: &[Snapshot], b: &[Snapshot]) -> Result<Vec<ErrorNorms>> {
    if a.len() != b.len() {
        return Err(Error::Alignment(format!("{} snapshots against {}", a.len(), b.len())));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.grid != y.grid || x.u.len() != y.u.len() {
                return Err(Error::Alignment("snapshots use different spatial grids".into()));
            }
            if (x.time - y.time).abs() > 1e-12 {
                return Err(Error::Alignment(format!("snapshot times {} and {} differ", x.time, y.time)));
            }
            let h = x.grid.spacing();
            let diff: Vec<f64> = x.u.iter().zip(&y.u).map(|(p, q)| p - q).collect();
            let l2 = |v: &[f64]| math::sqrt(math::pairwise_sum(&v.iter().map(|e| e * e).collect::<Vec<_>>()) * h);
            let linf = |v: &[f64]| v.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            let (l2_abs, linf_abs) = (l2(&diff), linf(&diff));
            let (l2_ref, linf_ref) = (l2(&y.u), linf(&y.u));
            Ok(ErrorNorms {
                time: x.time,
                l2_abs,
                l2_rel: if l2_ref > 0.0 { l2_abs / l2_ref } else { l2_abs },
                linf_abs,
                linf_rel: if linf_ref > 0.0 { linf_abs / linf_ref } else { linf_abs },
            })
        })
        .collect()
}
