//! Asymptotic quasiparticle fields built from a moment trajectory.
//!
//! Particle `s` contributes `u_s = v0 + √ε v1 + ε v2` where, with
//! `z = x - x_s(0)`, `d(τ) = x_s(τ) - x_s(0)` and `Σ = 2S + σ²`:
//!
//! * `v0` is the Gaussian initial profile carried by the heat kernel in
//!   staircase time and scaled by `μ_s(t)/μ_s(0)`;
//! * `v1 = ε^{-1/2} Σ^{-1} v0 (z I₁ - Σ J₁)` with `I₁ = ∫k₁Σ`, `J₁ = ∫k₁d`;
//! * `v2 = ε^{-1} Σ^{-2} v0 (c₂z² + c₁z + c₀)` whose coefficients are nested
//!   fractal integrals of `k₁` and `k₂` along the trajectory.
//!
//! All time integrals run on the trajectory's own grid and are precomputed
//! once as running sums, so a field at any grid time costs `O(N_x)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::{cumulative_integral, falpha_derivative, FractalGrid, SampledFunction};
use crate::flees::{kernel_derivatives, ModelParams, MomentTrajectory};
use crate::fractal_set::CantorPrefractal;
use crate::math;
use crate::reference::convolve;
use crate::{Error, Result};

/// Uniform nodes on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    points: usize,
}

impl SpatialGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(x_min: f64, x_max: f64, points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::domain(format!("invalid spatial domain [{x_min}, {x_max}]")));
        }
        if points < Self::MIN_POINTS {
            return Err(Error::domain(format!(
                "spatial grid needs at least {} points, got {points}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { x_min, x_max, points })
    }

    /// `[-8, 8]` with 2048 nodes.
    pub fn default_domain() -> Self {
        Self { x_min: -8.0, x_max: 8.0, points: 2048 }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }
}

/// Component fields of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleField {
    pub v0: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
}

/// Asymptotic fields of every particle at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub grid: SpatialGrid,
    pub time: f64,
    pub epsilon: f64,
    pub particles: Vec<ParticleField>,
    /// `Σ_s (v0 + √ε v1 + ε v2)`.
    pub u: Vec<f64>,
}

impl SolutionField {
    /// `u_s = v0 + √ε v1 + ε v2` for particle `s`.
    pub fn particle(&self, s: usize) -> Vec<f64> {
        let p = &self.particles[s];
        let re = math::sqrt(self.epsilon);
        (0..self.grid.points)
            .map(|i| p.v0[i] + re * p.v1[i] + self.epsilon * p.v2[i])
            .collect()
    }
}

/// `Σ_s(t) = 2 S(t) + σ_s²` on the trajectory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaFunction {
    values: Vec<Vec<f64>>,
}

impl SigmaFunction {
    pub fn new(trajectory: &MomentTrajectory) -> Self {
        let s = trajectory.grid.staircase_values();
        let values = trajectory
            .params
            .particles
            .iter()
            .map(|p| s.iter().map(|&v| 2.0 * v + p.sigma * p.sigma).collect())
            .collect();
        Self { values }
    }

    pub fn values(&self, s: usize) -> &[f64] {
        &self.values[s]
    }
}

/// Which normalisation and second-order bracket to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionForm {
    /// `v0` carries the heat-kernel amplitude factor `σ/√Σ`, so that
    /// `∫v0 dx = μ_s(t)`, and `v2` uses the bracket obtained by propagating
    /// the second-order sources exactly.
    #[default]
    Derived,
    /// The closed forms exactly as printed: `v0` without `σ/√Σ` and the
    /// printed `v2` bracket.
    Printed,
}

impl CorrectionForm {
    pub fn name(self) -> &'static str {
        match self {
            CorrectionForm::Derived => "derived",
            CorrectionForm::Printed => "printed",
        }
    }
}

/// Heat kernel in staircase time times the mass ratio `μ_s(t)/μ_s(t0)`.
///
/// `t` and `t0` must be samples of the trajectory grid.
pub fn green_function(x: f64, y: f64, t: f64, t0: f64, trajectory: &MomentTrajectory, s: usize) -> Result<f64> {
    if t < t0 {
        return Err(Error::domain(format!("green function needs t >= t0, got {t} < {t0}")));
    }
    let i = grid_index(trajectory, t)?;
    let i0 = grid_index(trajectory, t0)?;
    let ds = trajectory.grid.staircase_values()[i] - trajectory.grid.staircase_values()[i0];
    if ds <= 0.0 {
        return Err(Error::DeltaRegime);
    }
    let eps = trajectory.params.epsilon;
    let ratio = trajectory.states[i].mu[s] / trajectory.states[i0].mu[s];
    let var4 = 4.0 * eps * ds;
    Ok(ratio * math::exp(-(x - y) * (x - y) / var4) / math::sqrt(math::PI * var4))
}

fn grid_index(trajectory: &MomentTrajectory, t: f64) -> Result<usize> {
    trajectory
        .grid
        .index_of(t)
        .ok_or_else(|| Error::Alignment(format!("time {t} is not a sample of the trajectory grid")))
}

// Running integrals of one particle; every vector is indexed by grid sample.
#[derive(Debug, Clone)]
struct CorrectionTables {
    i1: Vec<f64>,
    j1: Vec<f64>,
    a: [Vec<f64>; 6],
    b: [Vec<f64>; 8],
}

/// Polynomial coefficients in `z` of the corrections at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionCoefficients {
    pub sigma: f64,
    pub mass_ratio: f64,
    /// `v1 = ε^{-1/2} Σ^{-1} v0 (v1[0] z + v1[1])`.
    pub v1: [f64; 2],
    /// `v2 = ε^{-1} Σ^{-2} v0 (v2[0] z² + v2[1] z + v2[2])`.
    pub v2: [f64; 3],
}

/// Evaluator of the asymptotic fields along one trajectory.
#[derive(Debug, Clone)]
pub struct Asymptotics<'a> {
    trajectory: &'a MomentTrajectory,
    form: CorrectionForm,
    sigma: SigmaFunction,
    tables: Vec<CorrectionTables>,
}

impl<'a> Asymptotics<'a> {
    pub fn new(trajectory: &'a MomentTrajectory, form: CorrectionForm) -> Result<Self> {
        if trajectory.states.len() != trajectory.grid.len() {
            return Err(Error::Alignment("trajectory states do not match its grid".into()));
        }
        let sigma = SigmaFunction::new(trajectory);
        let tables = (0..trajectory.params.particle_count())
            .map(|s| build_tables(trajectory, &sigma, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trajectory, form, sigma, tables })
    }

    pub fn trajectory(&self) -> &'a MomentTrajectory {
        self.trajectory
    }

    pub fn form(&self) -> CorrectionForm {
        self.form
    }

    pub fn sigma(&self) -> &SigmaFunction {
        &self.sigma
    }

    /// Correction coefficients of particle `s` at grid time `t`.
    pub fn coefficients(&self, s: usize, t: f64) -> Result<CorrectionCoefficients> {
        let params = &self.trajectory.params;
        if s >= params.particle_count() {
            return Err(Error::domain(format!("particle index {s} out of range")));
        }
        let i = grid_index(self.trajectory, t)?;
        let eps = params.epsilon;
        let sg = self.sigma.values[s][i];
        let st = self.trajectory.grid.staircase_values()[i];
        let tb = &self.tables[s];
        let [a1, a2, a3, a4, a5, a6] = core::array::from_fn(|k| tb.a[k][i]);
        let [b1, b2, b3, b4, b5, _, b7, b8] = core::array::from_fn(|k| tb.b[k][i]);
        let v2 = match self.form {
            CorrectionForm::Derived => [
                a1 + b1,
                -sg * (a3 + a4) - 2.0 * sg * b3,
                eps * sg * (sg * a2 - a1) + sg * sg * a5 + eps * sg * (sg * b2 - b1) + sg * sg * b4,
            ],
            CorrectionForm::Printed => [
                b2,
                a1 - sg * (a3 + a4) - 2.0 * sg * b3,
                sg * (2.0 * eps * st * a2 - 4.0 * eps * a6 + sg * a5)
                    + sg * (-sg * b5 + 2.0 * eps * st * b2 - 2.0 * eps * b7 + sg * b8),
            ],
        };
        let mu = &self.trajectory.states;
        let mass_ratio = if mu[0].mu[s] > 0.0 { mu[i].mu[s] / mu[0].mu[s] } else { 0.0 };
        Ok(CorrectionCoefficients {
            sigma: sg,
            mass_ratio,
            v1: [tb.i1[i], -sg * tb.j1[i]],
            v2,
        })
    }

    // The Gaussian factor shared by all corrections: v0 with the σ/√Σ amplitude.
    fn carrier(&self, s: usize, grid: &SpatialGrid, c: &CorrectionCoefficients) -> Vec<f64> {
        let params = &self.trajectory.params;
        let p = &params.particles[s];
        let eps = params.epsilon;
        let amp = p.amplitude * p.sigma / math::sqrt(c.sigma) * c.mass_ratio / math::sqrt(eps);
        (0..grid.points)
            .map(|j| {
                let z = grid.node(j) - p.center;
                amp * math::exp(-z * z / (2.0 * eps * c.sigma))
            })
            .collect()
    }

    pub fn v0(&self, s: usize, grid: &SpatialGrid, t: f64) -> Result<Vec<f64>> {
        let c = self.coefficients(s, t)?;
        Ok(self.v0_from(s, grid, &c))
    }

    fn v0_from(&self, s: usize, grid: &SpatialGrid, c: &CorrectionCoefficients) -> Vec<f64> {
        let carrier = self.carrier(s, grid, c);
        match self.form {
            CorrectionForm::Derived => carrier,
            CorrectionForm::Printed => {
                let boost = math::sqrt(c.sigma) / self.trajectory.params.particles[s].sigma;
                carrier.into_iter().map(|v| v * boost).collect()
            }
        }
    }

    pub fn v1(&self, s: usize, grid: &SpatialGrid, t: f64) -> Result<Vec<f64>> {
        let c = self.coefficients(s, t)?;
        Ok(self.v1_from(s, grid, &c, &self.carrier(s, grid, &c)))
    }

    fn v1_from(&self, s: usize, grid: &SpatialGrid, c: &CorrectionCoefficients, carrier: &[f64]) -> Vec<f64> {
        let params = &self.trajectory.params;
        let x0 = params.particles[s].center;
        let pre = 1.0 / (math::sqrt(params.epsilon) * c.sigma);
        carrier
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let z = grid.node(j) - x0;
                pre * g * (c.v1[0] * z + c.v1[1])
            })
            .collect()
    }

    pub fn v2(&self, s: usize, grid: &SpatialGrid, t: f64) -> Result<Vec<f64>> {
        let c = self.coefficients(s, t)?;
        Ok(self.v2_from(s, grid, &c, &self.carrier(s, grid, &c)))
    }

    fn v2_from(&self, s: usize, grid: &SpatialGrid, c: &CorrectionCoefficients, carrier: &[f64]) -> Vec<f64> {
        let params = &self.trajectory.params;
        let x0 = params.particles[s].center;
        let pre = 1.0 / (params.epsilon * c.sigma * c.sigma);
        carrier
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let z = grid.node(j) - x0;
                pre * g * ((c.v2[0] * z + c.v2[1]) * z + c.v2[2])
            })
            .collect()
    }

    /// All component fields and their sum at grid time `t`.
    pub fn assemble(&self, grid: &SpatialGrid, t: f64) -> Result<SolutionField> {
        let eps = self.trajectory.params.epsilon;
        let re = math::sqrt(eps);
        let mut u = vec![0.0; grid.points];
        let mut particles = Vec::with_capacity(self.tables.len());
        for s in 0..self.tables.len() {
            let c = self.coefficients(s, t)?;
            let carrier = self.carrier(s, grid, &c);
            let field = ParticleField {
                v0: self.v0_from(s, grid, &c),
                v1: self.v1_from(s, grid, &c, &carrier),
                v2: self.v2_from(s, grid, &c, &carrier),
            };
            for (j, slot) in u.iter_mut().enumerate() {
                *slot += field.v0[j] + re * field.v1[j] + eps * field.v2[j];
            }
            particles.push(field);
        }
        if let Some(j) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { term: format!("assembled field at node {j}") });
        }
        Ok(SolutionField { grid: *grid, time: t, epsilon: eps, particles, u })
    }
}

fn build_tables(traj: &MomentTrajectory, sigma: &SigmaFunction, s: usize) -> Result<CorrectionTables> {
    let grid = &traj.grid;
    let params = &traj.params;
    let n = grid.len();
    let kappa = params.kappa;
    let k = params.particle_count();
    let mut k1 = Vec::with_capacity(n);
    let mut k2 = Vec::with_capacity(n);
    for st in &traj.states {
        let kd = kernel_derivatives(params, &st.x);
        let h1: f64 = (0..k).map(|sb| kd.b(1, 0, s, sb) * st.mu[sb]).sum();
        let h2: f64 = (0..k).map(|sb| kd.b(2, 0, s, sb) * st.mu[sb]).sum();
        // a is constant in x, so its x-derivatives vanish.
        k1.push(-kappa * h1);
        k2.push(-0.5 * kappa * h2);
    }
    let sg = sigma.values(s);
    let stair = grid.staircase_values();
    let x0 = traj.states[0].x[s];
    let d: Vec<f64> = traj.states.iter().map(|st| st.x[s] - x0).collect();
    let a2s: Vec<f64> = traj.states.iter().map(|st| st.alpha2[s]).collect();
    let cum = |f: &dyn Fn(usize) -> f64| -> Result<Vec<f64>> {
        let values = (0..n).map(f).collect();
        Ok(cumulative_integral(&SampledFunction::new(grid, values)?, grid.times()[0])?.into_values())
    };
    let p = cum(&|i| k1[i] * sg[i])?;
    let q = cum(&|i| k1[i] * d[i])?;
    let r = cum(&|i| k1[i] * stair[i])?;
    let a = [
        cum(&|i| k1[i] * sg[i] * p[i])?,
        cum(&|i| k1[i] * p[i])?,
        cum(&|i| k1[i] * sg[i] * q[i])?,
        cum(&|i| k1[i] * d[i] * p[i])?,
        cum(&|i| k1[i] * d[i] * q[i])?,
        cum(&|i| k1[i] * stair[i] * r[i])?,
    ];
    let b = [
        cum(&|i| k2[i] * sg[i] * sg[i])?,
        cum(&|i| k2[i] * sg[i])?,
        cum(&|i| k2[i] * sg[i] * d[i])?,
        cum(&|i| k2[i] * (d[i] * d[i] - a2s[i]))?,
        cum(&|i| k2[i] * a2s[i])?,
        vec![0.0; n],
        cum(&|i| k2[i] * stair[i] * sg[i])?,
        cum(&|i| k2[i] * d[i] * d[i])?,
    ];
    Ok(CorrectionTables { i1: p, j1: q, a, b })
}

/// Quadrature moments of one particle's field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldMoments {
    pub mu: f64,
    pub x: f64,
    pub alpha2: f64,
    /// Third central moment over `μ`, a symmetry diagnostic.
    pub skew: f64,
}

/// Boundary-to-peak ratio above which a field counts as not decayed.
pub const DECAY_TOLERANCE: f64 = 1e-12;

/// Moments `∫u_s`, `∫x u_s / μ` and `∫(x - x̂)² u_s / μ` by the trapezoid rule.
pub fn field_moments(field: &SolutionField, s: usize) -> Result<FieldMoments> {
    if s >= field.particles.len() {
        return Err(Error::domain(format!("particle index {s} out of range")));
    }
    moments_of(&field.grid, &field.particle(s))
}

/// [`field_moments`] for an arbitrary array on `grid`.
pub fn moments_of(grid: &SpatialGrid, u: &[f64]) -> Result<FieldMoments> {
    let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let edge = u[0].abs().max(u[u.len() - 1].abs());
    if peak == 0.0 || edge > DECAY_TOLERANCE * peak {
        let ratio = if peak == 0.0 { f64::INFINITY } else { edge / peak };
        return Err(Error::InsufficientDecay { ratio });
    }
    let h = grid.spacing();
    let trap = |f: &dyn Fn(usize) -> f64| {
        let inner: Vec<f64> = (0..u.len()).map(|i| if i == 0 || i + 1 == u.len() { 0.5 * f(i) } else { f(i) }).collect();
        h * math::pairwise_sum(&inner)
    };
    let mu = trap(&|i| u[i]);
    let x = trap(&|i| grid.node(i) * u[i]) / mu;
    let alpha2 = trap(&|i| (grid.node(i) - x) * (grid.node(i) - x) * u[i]) / mu;
    let skew = trap(&|i| {
        let z = grid.node(i) - x;
        z * z * z * u[i]
    }) / mu;
    Ok(FieldMoments { mu, x, alpha2, skew })
}

/// Relative residual of one quasiparticle equation at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub time: f64,
    pub indicator: f64,
    /// `‖R_s‖₂ / ‖u_s‖₂` over the spatial grid.
    pub relative: f64,
}

/// Residual of `-D^α u_s + χ(ε u_s'' + a u_s - ϰ u_s (b * u)) = 0` at each field time.
///
/// The fractal time derivative uses the F^α stencil on the field times, the
/// Laplacian the fourth-order central difference (second order next to the
/// boundary), and the convolution the trapezoid rule. Boundary nodes are
/// excluded from the norm.
pub fn residual(
    params: &ModelParams,
    prefractal: &CantorPrefractal,
    fields: &[SolutionField],
    s: usize,
) -> Result<Vec<ResidualSample>> {
    if fields.len() < 3 {
        return Err(Error::domain("the residual needs at least three time samples"));
    }
    if s >= params.particle_count() || fields.iter().any(|f| f.particles.len() != params.particle_count()) {
        return Err(Error::domain(format!("particle index {s} out of range")));
    }
    let grid = fields[0].grid;
    if fields.iter().any(|f| f.grid != grid) {
        return Err(Error::Alignment("fields live on different spatial grids".into()));
    }
    let sigma_min = params.particles.iter().map(|p| p.sigma).fold(f64::INFINITY, f64::min);
    let required = math::sqrt(params.epsilon) * sigma_min / 8.0;
    if grid.spacing() > required {
        return Err(Error::Resolution { spacing: grid.spacing(), required });
    }
    let times: Vec<f64> = fields.iter().map(|f| f.time).collect();
    let tgrid = FractalGrid::new(&prefractal.staircase(), times)?;
    let us: Vec<Vec<f64>> = fields.iter().map(|f| f.particle(s)).collect();
    let n = grid.points;
    let h = grid.spacing();
    let mut out = Vec::with_capacity(fields.len());
    for (i, field) in fields.iter().enumerate() {
        let chi = tgrid.indicator_values()[i];
        let u = &us[i];
        let norm = math::sqrt(u.iter().map(|v| v * v).sum::<f64>() * h);
        if chi == 0.0 {
            out.push(ResidualSample { time: field.time, indicator: chi, relative: 0.0 });
            continue;
        }
        let conv = convolve(params, h, &field.u);
        let mut sq = 0.0;
        for j in 1..n - 1 {
            let series = SampledFunction::new(&tgrid, us.iter().map(|f| f[j]).collect())?;
            let dt = falpha_derivative(&series, i)?;
            let uxx = if j >= 2 && j + 2 < n {
                (-u[j - 2] + 16.0 * u[j - 1] - 30.0 * u[j] + 16.0 * u[j + 1] - u[j + 2]) / (12.0 * h * h)
            } else {
                (u[j - 1] - 2.0 * u[j] + u[j + 1]) / (h * h)
            };
            let r = -dt + chi * (params.epsilon * uxx + params.a_const * u[j] - params.kappa * u[j] * conv[j]);
            sq += r * r;
        }
        let relative = math::sqrt(sq * h) / norm;
        out.push(ResidualSample { time: field.time, indicator: chi, relative });
    }
    Ok(out)
}
