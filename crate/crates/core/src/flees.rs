//! Second-order moment system for `K` interacting quasiparticles.
//!
//! Each particle carries a mass `μ_s`, a centre `x_s` and a central second
//! moment `α2_s`. Interaction goes through the Gaussian kernel
//! `b(x, y) = b₀ exp(-(x - y)²/ξ²)` and the growth rate `a` is constant.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::{fractal_ode_solve, FractalGrid, OdeMethod, SampledFunction, DEFAULT_TIME_SPACING};
use crate::fractal_set::CantorPrefractal;
use crate::math;
use crate::{Error, Result};

/// Highest total derivative order `k + l` kept in [`KernelDerivatives`].
pub const MAX_KERNEL_ORDER: usize = 4;

/// Initial Gaussian profile of one quasiparticle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    /// Peak amplitude `N_s`.
    pub amplitude: f64,
    /// Width `σ_s > 0`.
    pub sigma: f64,
    /// Initial centre `x_s(0)`.
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub epsilon: f64,
    pub kappa: f64,
    pub a_const: f64,
    pub b0: f64,
    pub xi: f64,
    pub particles: Vec<Particle>,
}

impl ModelParams {
    /// Two-particle reference configuration: ε = 0.02, ϰ = 1, ξ = 2, a = 0.5,
    /// b₀ = 1, N = (1, 2), x(0) = (-1, 1), σ = (1, 1.5).
    pub fn two_particle_example() -> Self {
        Self {
            epsilon: 0.02,
            kappa: 1.0,
            a_const: 0.5,
            b0: 1.0,
            xi: 2.0,
            particles: vec![
                Particle { amplitude: 1.0, sigma: 1.0, center: -1.0 },
                Particle { amplitude: 2.0, sigma: 1.5, center: 1.0 },
            ],
        }
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.epsilon, self.kappa, self.a_const, self.b0, self.xi];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("model parameters must be finite"));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.kappa < 0.0 {
            return Err(Error::domain(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        if self.xi <= 0.0 {
            return Err(Error::domain(format!("xi must be positive, got {}", self.xi)));
        }
        if self.particles.is_empty() {
            return Err(Error::domain("at least one particle is required"));
        }
        for (s, p) in self.particles.iter().enumerate() {
            if !(p.sigma > 0.0 && p.sigma.is_finite()) {
                return Err(Error::domain(format!("particle {s}: sigma must be positive")));
            }
            if !(p.amplitude >= 0.0 && p.amplitude.is_finite() && p.center.is_finite()) {
                return Err(Error::domain(format!(
                    "particle {s}: amplitude must be non-negative and centre finite"
                )));
            }
        }
        Ok(())
    }

    /// Gaussian kernel `b(Δ)`.
    pub fn kernel(&self, delta: f64) -> f64 {
        let u = delta / self.xi;
        self.b0 * math::exp(-u * u)
    }

    /// State at `t = 0`: `μ = N σ √(2π)`, `x = x(0)`, `α2 = ε σ²`.
    pub fn initial_state(&self) -> MomentState {
        let p = &self.particles;
        MomentState {
            mu: p.iter().map(|q| q.amplitude * q.sigma * math::sqrt(2.0 * math::PI)).collect(),
            x: p.iter().map(|q| q.center).collect(),
            alpha2: p.iter().map(|q| self.epsilon * q.sigma * q.sigma).collect(),
        }
    }
}

/// Masses, centres and second moments of all particles at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mu: Vec<f64>,
    pub x: Vec<f64>,
    pub alpha2: Vec<f64>,
}

impl MomentState {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if self.x.len() != k || self.alpha2.len() != k {
            return Err(Error::Alignment("moment vectors differ in length".into()));
        }
        if self.mu.iter().chain(&self.alpha2).any(|&v| !(v >= 0.0)) {
            return Err(Error::domain("masses and second moments must be non-negative"));
        }
        Ok(())
    }
}

/// `∂^{k+l} b / ∂x^k ∂y^l` at every pair of centres.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDerivatives {
    count: usize,
    // [s][s̄][order]: g^{(order)}(x_s - x_s̄).
    table: Vec<[f64; MAX_KERNEL_ORDER + 1]>,
}

impl KernelDerivatives {
    /// `b_kl(s, s̄)`; panics when `k + l` exceeds [`MAX_KERNEL_ORDER`].
    pub fn b(&self, k: usize, l: usize, s: usize, sbar: usize) -> f64 {
        assert!(k + l <= MAX_KERNEL_ORDER, "kernel derivative order too high");
        let g = self.table[s * self.count + sbar][k + l];
        if l.is_multiple_of(2) {
            g
        } else {
            -g
        }
    }

    pub fn particle_count(&self) -> usize {
        self.count
    }
}

/// Closed-form Gaussian kernel derivatives at the given centres.
///
/// With `u = Δ/ξ`, `g^{(n)}(Δ) = b₀ (-1/ξ)^n H_n(u) e^{-u²}` where `H_n` is
/// the physicists' Hermite polynomial, and `b_kl = (-1)^l g^{(k+l)}`.
pub fn kernel_derivatives(params: &ModelParams, x: &[f64]) -> KernelDerivatives {
    let k = x.len();
    let mut table = Vec::with_capacity(k * k);
    for &xs in x {
        for &xb in x {
            table.push(gaussian_derivatives(params.b0, params.xi, xs - xb));
        }
    }
    KernelDerivatives { count: k, table }
}

fn gaussian_derivatives(b0: f64, xi: f64, delta: f64) -> [f64; MAX_KERNEL_ORDER + 1] {
    let u = delta / xi;
    let base = b0 * math::exp(-u * u);
    let mut out = [0.0; MAX_KERNEL_ORDER + 1];
    let (mut h_prev, mut h) = (0.0, 1.0);
    let mut factor = 1.0;
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = base * factor * h;
        let next = 2.0 * u * h - 2.0 * n as f64 * h_prev;
        h_prev = h;
        h = next;
        factor *= -1.0 / xi;
    }
    out
}

/// Which right-hand side to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClosureMode {
    /// The generic second-order system built from kernel derivatives.
    #[default]
    StrictSecondOrder,
    /// The printed two-particle equations, including their `ξ⁻⁴…ξ⁻⁸` terms
    /// and the `ϰ/(2ξ²)` centre coefficient.
    PaperExample,
}

impl ClosureMode {
    pub fn name(self) -> &'static str {
        match self {
            ClosureMode::StrictSecondOrder => "strict",
            ClosureMode::PaperExample => "paper",
        }
    }
}

/// Right-hand side per unit of staircase time: `(Dμ, Dx, Dα2)`.
pub fn flees_rhs(
    state: &MomentState,
    _t: f64,
    params: &ModelParams,
    kernel: &KernelDerivatives,
    mode: ClosureMode,
) -> Result<MomentState> {
    let rates = log_mass_rates(state, params, kernel, mode)?;
    let drift = center_rates(state, params, kernel, mode)?;
    let mu: Vec<f64> = state.mu.iter().zip(&rates).map(|(m, r)| m * r).collect();
    finite_or(&mu, "mass")?;
    Ok(MomentState {
        mu,
        x: drift,
        alpha2: vec![2.0 * params.epsilon; state.len()],
    })
}

fn finite_or(values: &[f64], term: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Evaluation { term: String::from(term) })
    }
}

// Dμ_s / μ_s.
fn log_mass_rates(
    state: &MomentState,
    params: &ModelParams,
    kernel: &KernelDerivatives,
    mode: ClosureMode,
) -> Result<Vec<f64>> {
    let k = state.len();
    let (mu, a2) = (&state.mu, &state.alpha2);
    let kappa = params.kappa;
    let rates: Vec<f64> = match mode {
        ClosureMode::StrictSecondOrder => (0..k)
            .map(|s| {
                let curvature: f64 = (0..k).map(|sb| kernel.b(2, 0, s, sb) * mu[sb]).sum();
                let local: f64 = (0..k).map(|sb| mu[sb] * kernel.b(0, 0, s, sb)).sum();
                let spread: f64 = (0..k).map(|sb| kernel.b(0, 2, s, sb) * mu[sb] * a2[sb]).sum();
                params.a_const - 0.5 * kappa * curvature * a2[s] - kappa * (local + 0.5 * spread)
            })
            .collect(),
        ClosureMode::PaperExample => {
            if k != 2 {
                return Err(Error::domain("the printed closure is defined for two particles only"));
            }
            let xi2 = params.xi * params.xi;
            let d = state.x[0] - state.x[1];
            let d2 = d * d;
            let b = params.kernel(d);
            (0..2)
                .map(|s| {
                    let o = 1 - s;
                    let bracket = mu[s] + mu[o] * b - 2.0 * mu[s] * a2[s] / xi2
                        + mu[o] * (2.0 * d2 / (xi2 * xi2) - 1.0 / xi2) * b * (a2[0] + a2[1])
                        - 3.0 * mu[s] * a2[s] / (xi2 * xi2)
                        + (3.0 / (xi2 * xi2) - 12.0 * d2 / (xi2 * xi2 * xi2) + 4.0 * d2 * d2 / (xi2 * xi2 * xi2 * xi2))
                            * b
                            * mu[o]
                            * a2[0]
                            * a2[1];
                    params.a_const - kappa * bracket
                })
                .collect()
        }
    };
    finite_or(&rates, "mass")?;
    Ok(rates)
}

fn center_rates(
    state: &MomentState,
    params: &ModelParams,
    kernel: &KernelDerivatives,
    mode: ClosureMode,
) -> Result<Vec<f64>> {
    let k = state.len();
    let drift: Vec<f64> = match mode {
        ClosureMode::StrictSecondOrder => (0..k)
            .map(|s| {
                let pull: f64 = (0..k).map(|sb| state.mu[sb] * kernel.b(1, 0, s, sb)).sum();
                -params.kappa * state.alpha2[s] * pull
            })
            .collect(),
        ClosureMode::PaperExample => {
            if k != 2 {
                return Err(Error::domain("the printed closure is defined for two particles only"));
            }
            let d = state.x[0] - state.x[1];
            let c = params.kappa / (2.0 * params.xi * params.xi) * d * params.kernel(d);
            vec![c * state.mu[1] * state.alpha2[0], -c * state.mu[0] * state.alpha2[1]]
        }
    };
    finite_or(&drift, "center")?;
    Ok(drift)
}

/// Numerical settings for [`solve_flees_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct FleesOptions {
    /// Uniform spacing of the time grid before endpoints and extra times are merged in.
    pub time_spacing: f64,
    /// Integrator and approximate RK4 step count over the staircase range.
    pub method: OdeMethod,
    /// Additional times forced onto the grid.
    pub extra_times: Vec<f64>,
}

impl Default for FleesOptions {
    fn default() -> Self {
        Self {
            time_spacing: DEFAULT_TIME_SPACING,
            method: OdeMethod::default(),
            extra_times: Vec::new(),
        }
    }
}

/// Solution of the moment system sampled on a fractal time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    pub grid: FractalGrid,
    pub states: Vec<MomentState>,
    pub params: ModelParams,
    pub closure_mode: ClosureMode,
}

impl MomentTrajectory {
    /// Time series of one component of particle `s`.
    pub fn series(&self, s: usize, pick: impl Fn(&MomentState) -> &[f64]) -> Vec<f64> {
        self.states.iter().map(|st| pick(st)[s]).collect()
    }

    pub fn mu(&self, s: usize) -> Vec<f64> {
        self.series(s, |st| &st.mu)
    }

    pub fn center(&self, s: usize) -> Vec<f64> {
        self.series(s, |st| &st.x)
    }

    pub fn alpha2(&self, s: usize) -> Vec<f64> {
        self.series(s, |st| &st.alpha2)
    }

    /// `Σ_s μ_s` at every grid time.
    pub fn total_mass(&self) -> Vec<f64> {
        self.states.iter().map(|st| st.mu.iter().sum()).collect()
    }

    /// State at grid time `t` (which must be a grid sample).
    pub fn state_at(&self, t: f64) -> Result<&MomentState> {
        self.grid
            .index_of(t)
            .map(|i| &self.states[i])
            .ok_or_else(|| Error::Alignment(format!("time {t} is not a trajectory sample")))
    }
}

/// Solves the moment system with default numerical settings.
pub fn solve_flees(params: &ModelParams, prefractal: &CantorPrefractal, mode: ClosureMode) -> Result<MomentTrajectory> {
    solve_flees_with(params, prefractal, mode, &FleesOptions::default())
}

/// Solves the moment system on `[0, 1]`.
///
/// Positive masses are integrated as `ln μ_s`, which keeps them positive;
/// a particle with zero initial mass stays at zero.
pub fn solve_flees_with(
    params: &ModelParams,
    prefractal: &CantorPrefractal,
    mode: ClosureMode,
    options: &FleesOptions,
) -> Result<MomentTrajectory> {
    params.validate()?;
    let k = params.particle_count();
    if mode == ClosureMode::PaperExample && k != 2 {
        return Err(Error::domain("the printed closure is defined for two particles only"));
    }
    let staircase = prefractal.staircase();
    let grid = FractalGrid::uniform(&staircase, options.time_spacing, &options.extra_times)?;
    let init = params.initial_state();
    let alive: Vec<bool> = init.mu.iter().map(|&m| m > 0.0).collect();

    // y = [ln μ (or 0 for dead particles), x, α2]
    let mut y0 = Vec::with_capacity(3 * k);
    y0.extend(init.mu.iter().map(|&m| if m > 0.0 { math::ln(m) } else { 0.0 }));
    y0.extend_from_slice(&init.x);
    y0.extend_from_slice(&init.alpha2);

    let unpack = |y: &[f64]| MomentState {
        mu: (0..k).map(|s| if alive[s] { math::exp(y[s]) } else { 0.0 }).collect(),
        x: y[k..2 * k].to_vec(),
        alpha2: y[2 * k..].to_vec(),
    };
    let rhs = |y: &[f64], _t: f64, dy: &mut [f64]| -> Result<()> {
        let state = unpack(y);
        let kernel = kernel_derivatives(params, &state.x);
        let rates = log_mass_rates(&state, params, &kernel, mode)?;
        let drift = center_rates(&state, params, &kernel, mode)?;
        for s in 0..k {
            dy[s] = if alive[s] { rates[s] } else { 0.0 };
            dy[k + s] = drift[s];
            dy[2 * k + s] = 2.0 * params.epsilon;
        }
        Ok(())
    };
    let raw = fractal_ode_solve(rhs, &y0, &grid, options.method)?;
    let states = raw.iter().map(|y| unpack(y)).collect();
    Ok(MomentTrajectory {
        grid,
        states,
        params: params.clone(),
        closure_mode: mode,
    })
}

/// `ΔR_s(t) = ε ln(μ_s(t)/μ_s(0))` on the trajectory grid.
pub fn r_function(trajectory: &MomentTrajectory, s: usize) -> Result<SampledFunction<'_>> {
    if s >= trajectory.params.particle_count() {
        return Err(Error::domain(format!("particle index {s} out of range")));
    }
    let mu = trajectory.mu(s);
    if mu.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::domain(format!("particle {s} has non-positive mass")));
    }
    let eps = trajectory.params.epsilon;
    let m0 = mu[0];
    SampledFunction::new(&trajectory.grid, mu.iter().map(|&m| eps * math::ln(m / m0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn alpha_of(base: f64) -> f64 {
        2f64.ln() / base.ln()
    }

    #[test]
    fn kernel_examples() {
        let p = ModelParams::two_particle_example();
        let kd = kernel_derivatives(&p, &[0.0, 0.0]);
        assert_eq!(kd.b(0, 0, 0, 1), 1.0);
        assert_eq!(kd.b(1, 0, 0, 1), 0.0);
        assert_relative_eq!(kd.b(2, 0, 0, 1), -2.0 / 4.0, max_relative = 1e-15);
        let kd = kernel_derivatives(&p, &[1.0, -1.0]);
        assert_relative_eq!(kd.b(0, 0, 0, 1), (-1f64).exp(), max_relative = 1e-15);
        let b = (-1f64).exp();
        assert_relative_eq!(kd.b(1, 0, 0, 1), -(2.0 * 2.0 / 4.0) * b, max_relative = 1e-14);
        assert_relative_eq!(kd.b(2, 0, 0, 1), (4.0 * 4.0 / 16.0 - 2.0 / 4.0) * b, max_relative = 1e-14);
    }

    #[test]
    fn kernel_matches_finite_differences() {
        // Each order is the central difference in x or y of the order below it,
        // starting from the raw kernel.
        let p = ModelParams { b0: 1.7, xi: 1.3, ..ModelParams::two_particle_example() };
        let h = 1e-5;
        let exact = |k: usize, l: usize, x: f64, y: f64| {
            if k + l == 0 {
                p.kernel(x - y)
            } else {
                kernel_derivatives(&p, &[x, y]).b(k, l, 0, 1)
            }
        };
        for &(x, y) in &[(0.3, -0.4), (1.1, 1.0), (-2.0, 0.5), (0.0, 0.0)] {
            for k in 0..=MAX_KERNEL_ORDER {
                for l in 0..=MAX_KERNEL_ORDER - k {
                    if k + l == 0 {
                        continue;
                    }
                    let fd = if k > 0 {
                        (exact(k - 1, l, x + h, y) - exact(k - 1, l, x - h, y)) / (2.0 * h)
                    } else {
                        (exact(k, l - 1, x, y + h) - exact(k, l - 1, x, y - h)) / (2.0 * h)
                    };
                    let e = exact(k, l, x, y);
                    assert!((e - fd).abs() <= 1e-6 * e.abs().max(1.0), "b{k}{l}: {e} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn kernel_symmetry() {
        let p = ModelParams::two_particle_example();
        let kd = kernel_derivatives(&p, &[-0.7, 0.45, 2.0]);
        for s in 0..3 {
            for sb in 0..3 {
                for k in 0..=MAX_KERNEL_ORDER {
                    for l in 0..=MAX_KERNEL_ORDER - k {
                        assert_relative_eq!(kd.b(k, l, s, sb), kd.b(l, k, sb, s), max_relative = 1e-14);
                    }
                }
            }
            assert_eq!(kd.b(0, 0, s, s), p.b0);
        }
    }

    #[test]
    fn rhs_examples() {
        let p = ModelParams {
            particles: vec![Particle { amplitude: 1.0, sigma: 1.0, center: 0.0 }],
            ..ModelParams::two_particle_example()
        };
        let state = MomentState { mu: vec![0.8], x: vec![0.0], alpha2: vec![0.0] };
        let kd = kernel_derivatives(&p, &state.x);
        let d = flees_rhs(&state, 0.0, &p, &kd, ClosureMode::StrictSecondOrder).unwrap();
        assert_relative_eq!(d.mu[0], 0.8 * (0.5 - 0.8), max_relative = 1e-15);
        assert_eq!(d.x[0], 0.0);
        assert_eq!(d.alpha2[0], 2.0 * p.epsilon);

        let p = ModelParams::two_particle_example();
        let state = p.initial_state();
        let kd = kernel_derivatives(&p, &state.x);
        for mode in [ClosureMode::StrictSecondOrder, ClosureMode::PaperExample] {
            let d = flees_rhs(&state, 0.0, &p, &kd, mode).unwrap();
            assert!(d.x[0] < 0.0 && d.x[1] > 0.0);
            assert!(d.alpha2.iter().all(|&v| v == 2.0 * p.epsilon));
        }
    }

    #[test]
    fn strict_and_printed_share_the_leading_terms() {
        // With ξ large the printed ξ⁻⁴ terms vanish and the mass equations coincide.
        let p = ModelParams { xi: 1e4, ..ModelParams::two_particle_example() };
        let state = p.initial_state();
        let kd = kernel_derivatives(&p, &state.x);
        let a = flees_rhs(&state, 0.0, &p, &kd, ClosureMode::StrictSecondOrder).unwrap();
        let b = flees_rhs(&state, 0.0, &p, &kd, ClosureMode::PaperExample).unwrap();
        for s in 0..2 {
            assert_relative_eq!(a.mu[s], b.mu[s], max_relative = 1e-7);
        }
    }

    #[test]
    fn non_finite_terms_are_named() {
        let p = ModelParams::two_particle_example();
        let state = MomentState { mu: vec![f64::INFINITY, 1.0], x: vec![-1.0, 1.0], alpha2: vec![0.1, 0.1] };
        let kd = kernel_derivatives(&p, &state.x);
        match flees_rhs(&state, 0.0, &p, &kd, ClosureMode::StrictSecondOrder) {
            Err(Error::Evaluation { term }) => assert_eq!(term, "mass"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn logistic_single_particle() {
        // One particle with ε tiny: α2 stays ~0 and μ follows the logistic law in τ.
        let p = ModelParams {
            epsilon: 1e-300,
            kappa: 1.0,
            a_const: 0.5,
            b0: 1.0,
            xi: 2.0,
            particles: vec![Particle { amplitude: 0.1, sigma: 0.5, center: 0.0 }],
        };
        for base in [4.0, 3.0, 2.0] {
            let set = CantorPrefractal::new(alpha_of(base), 5).unwrap();
            let traj = solve_flees(&p, &set, ClosureMode::StrictSecondOrder).unwrap();
            let m0 = p.initial_state().mu[0];
            let (a, c) = (p.a_const, p.kappa * p.b0);
            for (i, &tau) in traj.grid.staircase_values().iter().enumerate() {
                let want = a * m0 / (c * m0 + (a - c * m0) * (-a * tau).exp());
                assert_relative_eq!(traj.states[i].mu[0], want, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn second_moment_law_and_symmetry() {
        let p = ModelParams {
            particles: vec![
                Particle { amplitude: 1.3, sigma: 0.8, center: -1.2 },
                Particle { amplitude: 1.3, sigma: 0.8, center: 1.2 },
            ],
            ..ModelParams::two_particle_example()
        };
        let set = CantorPrefractal::new(alpha_of(3.0), 5).unwrap();
        for mode in [ClosureMode::StrictSecondOrder, ClosureMode::PaperExample] {
            let traj = solve_flees(&p, &set, mode).unwrap();
            for (st, s) in traj.states.iter().zip(traj.grid.staircase_values()) {
                assert!((st.x[0] + st.x[1]).abs() <= 1e-9);
                assert!((st.mu[0] - st.mu[1]).abs() <= 1e-9);
                for a2 in &st.alpha2 {
                    assert!((a2 - 2.0 * p.epsilon * s - p.epsilon * 0.64).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn swapping_particles_swaps_the_trajectory() {
        let p = ModelParams::two_particle_example();
        let mut q = p.clone();
        q.particles.swap(0, 1);
        let set = CantorPrefractal::new(0.75, 5).unwrap();
        let a = solve_flees(&p, &set, ClosureMode::StrictSecondOrder).unwrap();
        let b = solve_flees(&q, &set, ClosureMode::StrictSecondOrder).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for s in 0..2 {
                assert!((x.mu[s] - y.mu[1 - s]).abs() <= 1e-12);
                assert!((x.x[s] - y.x[1 - s]).abs() <= 1e-12);
                assert!((x.alpha2[s] - y.alpha2[1 - s]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn drift_scales_with_epsilon() {
        let set = CantorPrefractal::new(alpha_of(3.0), 5).unwrap();
        let drift = |eps: f64| {
            let p = ModelParams { epsilon: eps, ..ModelParams::two_particle_example() };
            let traj = solve_flees(&p, &set, ClosureMode::StrictSecondOrder).unwrap();
            (0..2)
                .map(|s| traj.center(s).iter().map(|x| (x - traj.center(s)[0]).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max)
        };
        let ratio = drift(0.02) / drift(0.01);
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn continuum_matches_plain_time_rk4() {
        // Independent plain-time RK4 for the strict two-particle equations.
        let p = ModelParams::two_particle_example();
        let set = CantorPrefractal::new(1.0, 5).unwrap();
        let traj = solve_flees(&p, &set, ClosureMode::StrictSecondOrder).unwrap();
        let (eps, kap, a, xi) = (p.epsilon, p.kappa, p.a_const, p.xi);
        let f = |y: [f64; 6]| -> [f64; 6] {
            let [m1, m2, x1, x2, s1, s2] = y;
            let d = x1 - x2;
            let b = (-(d * d) / (xi * xi)).exp();
            let b2 = (4.0 * d * d / xi.powi(4) - 2.0 / (xi * xi)) * b;
            let self2 = -2.0 / (xi * xi);
            let g1 = a - 0.5 * kap * (self2 * m1 + b2 * m2) * s1 - kap * (m1 + m2 * b + 0.5 * (self2 * m1 * s1 + b2 * m2 * s2));
            let g2 = a - 0.5 * kap * (self2 * m2 + b2 * m1) * s2 - kap * (m2 + m1 * b + 0.5 * (self2 * m2 * s2 + b2 * m1 * s1));
            let b1 = -2.0 * d / (xi * xi) * b;
            [m1 * g1, m2 * g2, -kap * s1 * m2 * b1, kap * s2 * m1 * b1, 2.0 * eps, 2.0 * eps]
        };
        let init = p.initial_state();
        let mut y = [init.mu[0], init.mu[1], init.x[0], init.x[1], init.alpha2[0], init.alpha2[1]];
        let n = 20_000;
        let h = 1.0 / n as f64;
        let add = |y: [f64; 6], k: [f64; 6], c: f64| core::array::from_fn::<f64, 6, _>(|i| y[i] + c * k[i]);
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(add(y, k1, h / 2.0));
            let k3 = f(add(y, k2, h / 2.0));
            let k4 = f(add(y, k3, h));
            y = core::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        let end = traj.states.last().unwrap();
        let got = [end.mu[0], end.mu[1], end.x[0], end.x[1], end.alpha2[0], end.alpha2[1]];
        for i in 0..6 {
            assert!((got[i] - y[i]).abs() <= 1e-8, "component {i}: {} vs {}", got[i], y[i]);
        }
    }

    #[test]
    fn halving_steps_barely_moves_the_end_mass() {
        let p = ModelParams::two_particle_example();
        let set = CantorPrefractal::new(alpha_of(2.5), 5).unwrap();
        let run = |steps| {
            let opts = FleesOptions { method: OdeMethod::RungeKuttaInTau { steps }, ..FleesOptions::default() };
            solve_flees_with(&p, &set, ClosureMode::StrictSecondOrder, &opts).unwrap().total_mass()
        };
        let (a, b) = (run(20_000), run(10_000));
        assert!((a.last().unwrap() - b.last().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn closures_stay_close_at_small_epsilon() {
        let p = ModelParams::two_particle_example();
        let set = CantorPrefractal::new(alpha_of(3.0), 5).unwrap();
        let a = solve_flees(&p, &set, ClosureMode::StrictSecondOrder).unwrap();
        let b = solve_flees(&p, &set, ClosureMode::PaperExample).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for s in 0..2 {
                assert!((x.mu[s] - y.mu[s]).abs() <= 0.01 * x.mu[s]);
            }
        }
    }

    #[test]
    fn r_function_examples() {
        let p = ModelParams { kappa: 0.0, ..ModelParams::two_particle_example() };
        let set = CantorPrefractal::new(0.63, 5).unwrap();
        let traj = solve_flees(&p, &set, ClosureMode::StrictSecondOrder).unwrap();
        let r = r_function(&traj, 1).unwrap();
        for (v, s) in r.values().iter().zip(traj.grid.staircase_values()) {
            assert!((v - p.epsilon * p.a_const * s).abs() <= 1e-12);
        }
        let q = ModelParams { kappa: 0.0, a_const: 0.0, ..p };
        let traj = solve_flees(&q, &set, ClosureMode::StrictSecondOrder).unwrap();
        assert!(r_function(&traj, 0).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(r_function(&traj, 2).is_err());
    }

    #[test]
    fn zero_mass_particle_stays_dead() {
        let mut p = ModelParams::two_particle_example();
        p.particles[0].amplitude = 0.0;
        let set = CantorPrefractal::new(0.63, 4).unwrap();
        let traj = solve_flees(&p, &set, ClosureMode::StrictSecondOrder).unwrap();
        assert!(traj.mu(0).iter().all(|&m| m == 0.0));
        assert!(r_function(&traj, 0).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let base = ModelParams::two_particle_example();
        let set = CantorPrefractal::new(0.63, 3).unwrap();
        for bad in [
            ModelParams { epsilon: 0.0, ..base.clone() },
            ModelParams { xi: -1.0, ..base.clone() },
            ModelParams { particles: vec![], ..base.clone() },
        ] {
            assert!(solve_flees(&bad, &set, ClosureMode::StrictSecondOrder).is_err());
        }
        let three = ModelParams {
            particles: vec![base.particles[0]; 3],
            ..base
        };
        assert!(solve_flees(&three, &set, ClosureMode::PaperExample).is_err());
        assert!(solve_flees(&three, &set, ClosureMode::StrictSecondOrder).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn second_moment_law_holds(alpha in 0.5f64..1.0, eps in 0.005f64..0.05, sigma in 0.3f64..2.0) {
            let p = ModelParams {
                epsilon: eps,
                particles: vec![
                    Particle { amplitude: 1.0, sigma, center: -0.5 },
                    Particle { amplitude: 0.5, sigma: 1.0, center: 0.7 },
                ],
                ..ModelParams::two_particle_example()
            };
            let set = CantorPrefractal::new(alpha, 5).unwrap();
            let opts = FleesOptions { time_spacing: 1e-3, ..FleesOptions::default() };
            let traj = solve_flees_with(&p, &set, ClosureMode::StrictSecondOrder, &opts).unwrap();
            for (st, s) in traj.states.iter().zip(traj.grid.staircase_values()) {
                prop_assert!((st.alpha2[0] - 2.0 * eps * s - eps * sigma * sigma).abs() <= 1e-8);
                prop_assert!(st.mu.iter().all(|&m| m > 0.0));
            }
        }
    }
}
