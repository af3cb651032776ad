//! F^α differentiation and integration of sampled functions.
//!
//! Everything here works on a [`FractalGrid`]: sample times together with the
//! staircase values `S(t_i)` and indicator values `χ_F(t_i)`. Grids built by
//! [`FractalGrid::uniform`] contain every prefractal interval endpoint, so the
//! staircase is exactly linear inside each grid cell.

use alloc::vec;
use alloc::vec::Vec;

use crate::fractal_set::StaircaseFunction;
use crate::math;
use crate::{Error, Result};

/// Staircase increments at or below this value are treated as a flat.
pub const STAIRCASE_EPSILON: f64 = 1e-12;
/// Default uniform spacing of the time grid.
pub const DEFAULT_TIME_SPACING: f64 = 1e-4;

// Samples closer than this are merged when grids are assembled.
const MERGE_TOL: f64 = 1e-12;

/// Sample times on `[0, 1]` with the staircase and indicator evaluated there.
#[derive(Debug, Clone, PartialEq)]
pub struct FractalGrid {
    times: Vec<f64>,
    staircase: Vec<f64>,
    indicator: Vec<f64>,
}

impl FractalGrid {
    /// Samples `staircase` at the given strictly increasing times.
    pub fn new(staircase: &StaircaseFunction, times: Vec<f64>) -> Result<Self> {
        let set = staircase.prefractal();
        let values = times
            .iter()
            .map(|&t| staircase.eval(t))
            .collect::<Result<Vec<_>>>()?;
        let flags = times
            .iter()
            .map(|&t| set.indicator(t).map(|b| if b { 1.0 } else { 0.0 }))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(times, values, flags)
    }

    /// Uniform samples with the given spacing, every prefractal interval
    /// endpoint, and any `extra` times (e.g. output snapshots).
    pub fn uniform(staircase: &StaircaseFunction, spacing: f64, extra: &[f64]) -> Result<Self> {
        if !(spacing > 0.0 && spacing <= 0.5) {
            return Err(Error::domain(alloc::format!(
                "time spacing must lie in (0, 0.5], got {spacing}"
            )));
        }
        let set = staircase.prefractal();
        let count = math::ceil(1.0 / spacing - 1e-9) as usize;
        if set.interval_count() > (1 << 22) || count > (1 << 26) {
            return Err(Error::Resource("time grid would be too large".into()));
        }
        // (time, priority): exact endpoints win over nearby uniform samples.
        let mut points: Vec<(f64, u8)> = Vec::with_capacity(count + 1 + extra.len());
        points.extend((0..=count).map(|i| ((i as f64 / count as f64), 0)));
        for (l, r) in set.intervals() {
            points.push((l, 1));
            points.push((r, 1));
        }
        for &t in extra {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::domain(alloc::format!("extra time {t} outside [0, 1]")));
            }
            points.push((t, 2));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times: Vec<f64> = Vec::with_capacity(points.len());
        let mut prio: Vec<u8> = Vec::with_capacity(points.len());
        for (t, p) in points {
            match times.last() {
                Some(&last) if t - last <= MERGE_TOL => {
                    let k = times.len() - 1;
                    if p > prio[k] {
                        times[k] = t;
                        prio[k] = p;
                    }
                }
                _ => {
                    times.push(t);
                    prio.push(p);
                }
            }
        }
        Self::new(staircase, times)
    }

    /// Equally spaced samples inside every prefractal interval plus the
    /// midpoint of every gap.
    ///
    /// Neighbouring cells on either side of a gap carry the same staircase
    /// increment, so the derivative stencil is symmetric in `S` everywhere.
    pub fn aligned(staircase: &StaircaseFunction, per_interval: usize) -> Result<Self> {
        if per_interval == 0 {
            return Err(Error::domain("need at least one cell per interval"));
        }
        let set = staircase.prefractal();
        if set.interval_count().saturating_mul(per_interval as u64) > (1 << 26) {
            return Err(Error::Resource("aligned grid would be too large".into()));
        }
        let mut times = Vec::new();
        let mut gaps = set.gaps();
        for (l, r) in set.intervals() {
            let len = r - l;
            times.extend((0..per_interval).map(|k| l + len * k as f64 / per_interval as f64));
            times.push(r);
            if let Some((gl, gr)) = gaps.next() {
                times.push(0.5 * (gl + gr));
            }
        }
        Self::new(staircase, times)
    }

    /// Assembles a grid from precomputed samples after checking its invariants.
    pub fn from_parts(times: Vec<f64>, staircase: Vec<f64>, indicator: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain("a fractal grid needs at least two samples"));
        }
        if staircase.len() != times.len() || indicator.len() != times.len() {
            return Err(Error::Alignment("grid arrays differ in length".into()));
        }
        if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::domain("grid times must lie in [0, 1]"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("grid times must be strictly increasing"));
        }
        if staircase.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("staircase samples must be non-decreasing"));
        }
        if indicator.iter().any(|&c| c != 0.0 && c != 1.0) {
            return Err(Error::domain("indicator samples must be 0 or 1"));
        }
        Ok(Self {
            times,
            staircase,
            indicator,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn staircase_values(&self) -> &[f64] {
        &self.staircase
    }

    pub fn indicator_values(&self) -> &[f64] {
        &self.indicator
    }

    /// Index of a sample equal to `t` up to the merge tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let idx = self.times.partition_point(|&s| s < t - MERGE_TOL);
        (idx < self.times.len() && (self.times[idx] - t).abs() <= MERGE_TOL).then_some(idx)
    }

    fn check_span(&self, t: f64) -> Result<()> {
        let (first, last) = (self.times[0], self.times[self.times.len() - 1]);
        if t < first || t > last || t.is_nan() {
            return Err(Error::domain(alloc::format!(
                "time {t} outside grid span [{first}, {last}]"
            )));
        }
        Ok(())
    }

    // Cell `k` with t_k <= t <= t_{k+1}, and the local coordinate in it.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let theta = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        (k, theta.clamp(0.0, 1.0))
    }
}

/// Real samples aligned with a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction<'g> {
    grid: &'g FractalGrid,
    values: Vec<f64>,
}

impl<'g> SampledFunction<'g> {
    pub fn new(grid: &'g FractalGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Alignment(alloc::format!(
                "{} samples for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(alloc::format!("non-finite sample at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(t, S(t), χ(t))` at every grid time.
    pub fn from_fn(grid: &'g FractalGrid, mut f: impl FnMut(f64, f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| f(grid.times[i], grid.staircase[i], grid.indicator[i]))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &'g FractalGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise product with another function on the same grid.
    pub fn product(&self, other: &SampledFunction<'_>) -> Result<SampledFunction<'g>> {
        same_grid(self.grid, other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        SampledFunction::new(self.grid, values)
    }
}

fn same_grid(a: &FractalGrid, b: &FractalGrid) -> Result<()> {
    if core::ptr::eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::Alignment("functions live on different grids".into()))
    }
}

/// F^α derivative of `f` at grid index `i`.
///
/// Off the set the derivative is 0. On the set it is the difference quotient
/// with respect to `S` between the nearest neighbours on each side whose
/// staircase value differs from `S(t_i)` by more than [`STAIRCASE_EPSILON`];
/// one-sided when only one side has such a neighbour.
pub fn falpha_derivative(f: &SampledFunction<'_>, i: usize) -> Result<f64> {
    let grid = f.grid;
    if i >= grid.len() {
        return Err(Error::domain(alloc::format!("grid index {i} out of range")));
    }
    if grid.indicator[i] == 0.0 {
        return Ok(0.0);
    }
    let s = &grid.staircase;
    let ahead = (i + 1..grid.len()).find(|&j| s[j] - s[i] > STAIRCASE_EPSILON);
    let behind = (0..i).rev().find(|&j| s[i] - s[j] > STAIRCASE_EPSILON);
    let v = &f.values;
    match (behind, ahead) {
        (Some(lo), Some(hi)) => Ok((v[hi] - v[lo]) / (s[hi] - s[lo])),
        (None, Some(j1)) => {
            let j2 = (j1 + 1..grid.len()).find(|&j| s[j] - s[j1] > STAIRCASE_EPSILON);
            Ok(one_sided(v, s, i, j1, j2))
        }
        (Some(j1), None) => {
            let j2 = (0..j1).rev().find(|&j| s[j1] - s[j] > STAIRCASE_EPSILON);
            Ok(one_sided(v, s, i, j1, j2))
        }
        (None, None) => Err(Error::DegenerateStencil { index: i }),
    }
}

// Three-point one-sided quotient at the ends of the grid, two-point if only
// one neighbour exists.
fn one_sided(v: &[f64], s: &[f64], i: usize, j1: usize, j2: Option<usize>) -> f64 {
    let h1 = s[j1] - s[i];
    let d1 = v[j1] - v[i];
    match j2 {
        Some(j2) => {
            let h2 = s[j2] - s[i];
            let d2 = v[j2] - v[i];
            (d1 * h2 * h2 - d2 * h1 * h1) / (h1 * h2 * (h2 - h1))
        }
        None => d1 / h1,
    }
}

/// [`falpha_derivative`] at every grid index.
pub fn falpha_derivative_all<'g>(f: &SampledFunction<'g>) -> Result<SampledFunction<'g>> {
    let values = (0..f.grid.len())
        .map(|i| falpha_derivative(f, i))
        .collect::<Result<Vec<_>>>()?;
    SampledFunction::new(f.grid, values)
}

/// `∫_a^b f d^α_F t` by the trapezoid rule in `S`.
///
/// Endpoints between samples are handled by linear interpolation of `f` and
/// `S` inside the cell. Swapping `a` and `b` flips the sign exactly.
pub fn falpha_integral(f: &SampledFunction<'_>, a: f64, b: f64) -> Result<f64> {
    let grid = f.grid;
    grid.check_span(a)?;
    grid.check_span(b)?;
    if a > b {
        return Ok(-falpha_integral(f, b, a)?);
    }
    if a == b {
        return Ok(0.0);
    }
    let (ka, ta) = grid.locate(a);
    let (kb, tb) = grid.locate(b);
    let at = |k: usize, theta: f64| -> (f64, f64) {
        let s = grid.staircase[k] + theta * (grid.staircase[k + 1] - grid.staircase[k]);
        let v = f.values[k] + theta * (f.values[k + 1] - f.values[k]);
        (s, v)
    };
    let (sa, fa) = at(ka, ta);
    let (sb, fb) = at(kb, tb);
    if ka == kb {
        return Ok(0.5 * (fa + fb) * (sb - sa));
    }
    let mut total = 0.5 * (fa + f.values[ka + 1]) * (grid.staircase[ka + 1] - sa);
    for k in ka + 1..kb {
        total += trapezoid_cell(grid, &f.values, k);
    }
    total += 0.5 * (f.values[kb] + fb) * (sb - grid.staircase[kb]);
    Ok(total)
}

#[inline]
fn trapezoid_cell(grid: &FractalGrid, values: &[f64], k: usize) -> f64 {
    0.5 * (values[k] + values[k + 1]) * (grid.staircase[k + 1] - grid.staircase[k])
}

/// Running integral `G(t_i) = ∫_a^{t_i} f d^α_F t` at every grid time.
pub fn cumulative_integral<'g>(f: &SampledFunction<'g>, a: f64) -> Result<SampledFunction<'g>> {
    let grid = f.grid;
    grid.check_span(a)?;
    let prefix = prefix_integral(grid, &f.values);
    let (k, theta) = grid.locate(a);
    let offset = if theta == 0.0 {
        prefix[k]
    } else {
        prefix[k] + falpha_integral(f, grid.times[k], a)?
    };
    SampledFunction::new(grid, prefix.into_iter().map(|p| p - offset).collect())
}

/// Trapezoid-in-S prefix sums from the first grid time.
pub(crate) fn prefix_integral(grid: &FractalGrid, values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..values.len() - 1 {
        acc += trapezoid_cell(grid, values, k);
        out.push(acc);
    }
    out
}

/// Time-stepping scheme for [`fractal_ode_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeMethod {
    /// Classic RK4 in `τ = S(t)` with roughly `steps` steps over the staircase range.
    RungeKuttaInTau { steps: usize },
    /// `y_{k+1} = y_k + (S_{k+1} - S_k) f(y_k, t_k)`.
    FractalEuler,
}

impl Default for OdeMethod {
    fn default() -> Self {
        OdeMethod::RungeKuttaInTau { steps: 20_000 }
    }
}

/// Solves `D^α_{F,t} y = χ_F(t) f(y, t)` on the grid.
///
/// `rhs(y, t, dy)` writes `f(y, t)` into `dy`. The returned vector holds the
/// state at every grid time. With the RK4 scheme the equation is solved as
/// `dY/dτ = f(Y, t(τ))` and read back through `y(t) = Y(S(t))`, so the state
/// is frozen across every flat of the staircase.
pub fn fractal_ode_solve<F>(
    mut rhs: F,
    y0: &[f64],
    grid: &FractalGrid,
    method: OdeMethod,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64], f64, &mut [f64]) -> Result<()>,
{
    let dim = y0.len();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            time: grid.times[0],
        });
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut y = y0.to_vec();
    out.push(y.clone());
    let s = &grid.staircase;
    let t = &grid.times;
    match method {
        OdeMethod::FractalEuler => {
            let mut dy = vec![0.0; dim];
            for k in 0..grid.len() - 1 {
                let ds = s[k + 1] - s[k];
                if ds > STAIRCASE_EPSILON {
                    rhs(&y, t[k], &mut dy)?;
                    for (yi, di) in y.iter_mut().zip(&dy) {
                        *yi += ds * di;
                    }
                    check_finite(&y, t[k + 1])?;
                }
                out.push(y.clone());
            }
        }
        OdeMethod::RungeKuttaInTau { steps } => {
            if steps == 0 {
                return Err(Error::domain("RK4 step count must be positive"));
            }
            let span = s[s.len() - 1] - s[0];
            let target = span / steps as f64;
            let mut stages = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
            let mut tmp = vec![0.0; dim];
            for k in 0..grid.len() - 1 {
                let ds = s[k + 1] - s[k];
                if ds > STAIRCASE_EPSILON {
                    let sub = math::ceil(ds / target - 1e-9).max(1.0) as usize;
                    let h = ds / sub as f64;
                    let dt = t[k + 1] - t[k];
                    // S is linear inside the cell, so t(τ) is too.
                    let time_at = |frac: f64| t[k] + frac * dt;
                    for m in 0..sub {
                        let f0 = m as f64 / sub as f64;
                        let fh = (m as f64 + 0.5) / sub as f64;
                        let f1 = (m as f64 + 1.0) / sub as f64;
                        rk4_step(&mut rhs, &mut y, h, [time_at(f0), time_at(fh), time_at(f1)], &mut stages, &mut tmp)?;
                        check_finite(&y, time_at(f1))?;
                    }
                }
                out.push(y.clone());
            }
        }
    }
    Ok(out)
}

fn rk4_step<F>(
    rhs: &mut F,
    y: &mut [f64],
    h: f64,
    times: [f64; 3],
    stages: &mut [Vec<f64>; 4],
    tmp: &mut [f64],
) -> Result<()>
where
    F: FnMut(&[f64], f64, &mut [f64]) -> Result<()>,
{
    let [k1, k2, k3, k4] = stages;
    rhs(y, times[0], k1)?;
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(tmp, times[1], k2)?;
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(tmp, times[1], k3)?;
    for i in 0..y.len() {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(tmp, times[2], k4)?;
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

fn check_finite(y: &[f64], time: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { time })
    }
}
