//! Numerical checks of the F^α calculus identities on a given prefractal.

use alloc::vec;
use alloc::vec::Vec;

use crate::calculus::{
    cumulative_integral, falpha_derivative, falpha_derivative_all, falpha_integral, fractal_ode_solve, FractalGrid,
    OdeMethod, SampledFunction, DEFAULT_TIME_SPACING,
};
use crate::fractal_set::CantorPrefractal;
use crate::math;
use crate::Result;

/// Target number of samples for the interval-aligned grids.
pub const ALIGNED_SAMPLES: usize = 40_000;

/// One row of the identity report.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub identity: &'static str,
    pub alpha: f64,
    pub error: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

// Polynomial and smooth test functions of S.
fn poly_f(s: f64) -> f64 {
    1.0 + s - 0.5 * s * s + 0.3 * s * s * s
}

fn poly_f_prime(s: f64) -> f64 {
    1.0 - s + 0.9 * s * s
}

fn poly_g(s: f64) -> f64 {
    2.0 - s + s * s
}

fn smooth_f(s: f64) -> f64 {
    libm::sin(2.0 * s) + 1.0
}

fn smooth_g(s: f64) -> f64 {
    math::exp(-s)
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

/// Runs every identity for one prefractal.
pub fn verify_calculus(set: &CantorPrefractal) -> Result<Vec<IdentityCheck>> {
    let alpha = set.alpha();
    let st = set.staircase();
    let uniform = FractalGrid::uniform(&st, DEFAULT_TIME_SPACING, &[])?;
    let per = (ALIGNED_SAMPLES as u64 / set.interval_count()).max(8) as usize;
    let aligned = FractalGrid::aligned(&st, per)?;
    let mut out = Vec::new();
    let mut push = |identity, error, tolerance| out.push(IdentityCheck { identity, alpha, error, tolerance });

    let constant = SampledFunction::from_fn(&uniform, |_, _, _| 2.5)?;
    let d = falpha_derivative_all(&constant)?;
    push("derivative of a constant vanishes", max_abs(d.values().iter().copied()), 0.0);

    let stair = SampledFunction::from_fn(&uniform, |_, s, _| s)?;
    let d = falpha_derivative_all(&stair)?;
    let err = max_abs(d.values().iter().zip(uniform.indicator_values()).map(|(a, b)| a - b));
    push("derivative of the staircase is the indicator", err, 1e-8);

    let chi = SampledFunction::from_fn(&uniform, |_, _, c| c)?;
    let spans = [(0.0, 1.0), (0.1, 0.9), (0.123457, 0.654321), (0.5, 0.75), (0.3, 0.3)];
    let mut err: f64 = 0.0;
    for &(a, b) in &spans {
        err = err.max((falpha_integral(&chi, a, b)? - (st.eval(b)? - st.eval(a)?)).abs());
    }
    push("integral of the indicator is the staircase increment", err, 1e-9);

    let smooth = SampledFunction::from_fn(&uniform, |t, s, _| smooth_f(s) + t)?;
    let mut err: f64 = 0.0;
    for &(a, b) in &spans {
        err = err.max((falpha_integral(&smooth, a, b)? + falpha_integral(&smooth, b, a)?).abs());
    }
    push("integral is antisymmetric", err, 0.0);

    let f = SampledFunction::from_fn(&aligned, |_, s, _| smooth_f(s))?;
    let g = SampledFunction::from_fn(&aligned, |_, s, _| smooth_g(s))?;
    let fg = f.product(&g)?;
    let mut err: f64 = 0.0;
    for i in 0..aligned.len() {
        if aligned.indicator_values()[i] == 1.0 {
            let lhs = falpha_derivative(&fg, i)?;
            let rhs = falpha_derivative(&f, i)? * g.values()[i] + f.values()[i] * falpha_derivative(&g, i)?;
            err = err.max((lhs - rhs).abs());
        }
    }
    push("Leibniz rule", err, 1e-6);

    let f = SampledFunction::from_fn(&aligned, |_, s, _| poly_f(s))?;
    let df = falpha_derivative_all(&f)?;
    let round = cumulative_integral(&df, 0.0)?;
    let f0 = f.values()[0];
    let err = max_abs(round.values().iter().zip(f.values()).map(|(r, v)| r - (v - f0)));
    push("integral of the derivative recovers the increment", err, 1e-6);

    let exact = SampledFunction::from_fn(&aligned, |_, s, c| c * poly_f_prime(s))?;
    let err = max_abs(df.values().iter().zip(exact.values()).map(|(a, b)| a - b));
    push("derivative of a polynomial in S", err, 1e-6);

    let g = SampledFunction::from_fn(&aligned, |_, s, _| poly_g(s))?;
    let big_g = cumulative_integral(&g, 0.0)?;
    let dgg = falpha_derivative_all(&big_g)?;
    let err = max_abs(
        dgg.values()
            .iter()
            .zip(g.values())
            .zip(aligned.indicator_values())
            .map(|((a, b), c)| a - c * b),
    );
    push("derivative of the running integral is the integrand", err, 1e-6);

    let mut err: f64 = 0.0;
    for &(a, b) in &[(0.0, 1.0), (0.0, 0.5), (0.25, 1.0)] {
        let fg = f.product(&g)?;
        let lhs = falpha_integral(&fg, a, b)?;
        let inner = cumulative_integral(&g, a)?;
        let boundary = interpolate(&aligned, f.values(), b) * interpolate(&aligned, inner.values(), b);
        let rest = falpha_integral(&df.product(&inner)?, a, b)?;
        err = err.max((lhs - (boundary - rest)).abs());
    }
    push("integration by parts", err, 1e-6);

    // Euler/RK gap should halve with the cell size in S.
    let base = (1000 / set.interval_count()).max(4) as usize;
    let gap = |per: usize| -> Result<f64> {
        let grid = FractalGrid::aligned(&st, per)?;
        let rhs = |y: &[f64], _: f64, dy: &mut [f64]| {
            dy[0] = y[0] * (1.0 - y[0]);
            Ok(())
        };
        let rk = fractal_ode_solve(rhs, &[0.1], &grid, OdeMethod::default())?;
        let eu = fractal_ode_solve(rhs, &[0.1], &grid, OdeMethod::FractalEuler)?;
        Ok(max_abs(rk.iter().zip(&eu).map(|(a, b)| a[0] - b[0])))
    };
    let ratio = gap(base)? / gap(2 * base)?;
    push("Euler and RK4 gap halves with the cell size (|ratio - 2|)", (ratio - 2.0).abs(), 0.6);

    let sol = fractal_ode_solve(
        |_, _, dy| {
            dy[0] = 0.04;
            Ok(())
        },
        &[0.02],
        &uniform,
        OdeMethod::default(),
    )?;
    let err = max_abs(sol.iter().zip(uniform.staircase_values()).map(|(y, s)| y[0] - (0.04 * s + 0.02)));
    push("constant-rate ODE follows the staircase", err, 1e-12);
    Ok(out)
}

// Linear interpolation of grid samples at time t (t inside the grid span).
fn interpolate(grid: &FractalGrid, values: &[f64], t: f64) -> f64 {
    let times = grid.times();
    let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1) - 1;
    let theta = ((t - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0);
    values[k] + theta * (values[k + 1] - values[k])
}

/// [`verify_calculus`] for several exponents at one generation.
pub fn verify_calculus_sweep(alphas: &[f64], generation: u32) -> Result<Vec<IdentityCheck>> {
    let mut rows = vec![];
    for &alpha in alphas {
        rows.extend(verify_calculus(&CantorPrefractal::new(alpha, generation)?)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal_set::{example_alphas, DEFAULT_GENERATION};

    #[test]
    fn every_identity_holds_for_the_reference_sets() {
        let rows = verify_calculus_sweep(&example_alphas(), DEFAULT_GENERATION).unwrap();
        assert_eq!(rows.len(), 6 * 11);
        for row in &rows {
            assert!(row.passed(), "{row:?}");
        }
    }

    #[test]
    fn aligned_grid_has_symmetric_cells_around_gaps() {
        let set = CantorPrefractal::new(0.63, 3).unwrap();
        let grid = FractalGrid::aligned(&set.staircase(), 5).unwrap();
        let s = grid.staircase_values();
        let inc: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 1e-12).collect();
        for d in &inc {
            assert!((d - inc[0]).abs() < 1e-14);
        }
        assert_eq!(grid.len(), 8 * 6 + 7);
    }
}
