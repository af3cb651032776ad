//! Symmetric two-map Cantor prefractals on `[0, 1]` and their integral
//! staircase function.
//!
//! A prefractal of dimension `alpha` keeps, at every subdivision step, the two
//! outer pieces of relative length `r = 2^(-1/alpha)`, so that `2 r^alpha = 1`.
//! Generation `n` therefore consists of `2^n` closed intervals of length
//! `r^n`, each carrying the mass `r^(n alpha) / Γ(alpha + 1)`. For
//! `alpha = 1` the construction degenerates to the whole interval.
//!
//! Intervals are never materialised unless asked for: interval `k` is
//! addressed by the binary digits of `k` (most significant digit = first
//! subdivision), which keeps membership and mass queries `O(n)` up to
//! generation 40.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Prefractal generation used throughout the experiments.
pub const DEFAULT_GENERATION: u32 = 5;
/// Coarse-graining scale used when building the staircase.
pub const DEFAULT_DELTA: f64 = 1e-5;
/// Deepest generation whose interval indices fit comfortably in `u64`.
pub const MAX_GENERATION: u32 = 40;
/// Deepest generation for which the staircase may be tabulated.
pub const MAX_TABULATED_GENERATION: u32 = 20;

/// Scale factors `c` of the reference sets, `α = ln 2 / ln c`; the last entry is the continuum.
pub const EXAMPLE_SCALES: [f64; 6] = [4.0, 3.0, 2.5, 2.2, 2.07, 2.0];

/// `α = ln 2 / ln c` for every entry of [`EXAMPLE_SCALES`].
pub fn example_alphas() -> [f64; 6] {
    EXAMPLE_SCALES.map(|c| if c == 2.0 { 1.0 } else { core::f64::consts::LN_2 / math::ln(c) })
}

// Slack for closed-interval membership tests; far below any gap width the
// generation limit allows.
const MEMBERSHIP_TOL: f64 = 1e-14;

/// Finite-generation approximation of a symmetric Cantor set.
#[derive(Debug, Clone, PartialEq)]
pub struct CantorPrefractal {
    alpha: f64,
    ratio: f64,
    generation: u32,
}

impl CantorPrefractal {
    /// Builds the generation-`generation` prefractal of dimension `alpha`.
    pub fn new(alpha: f64, generation: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(alloc::format!(
                "fractal dimension must lie in (0, 1], got {alpha}"
            )));
        }
        if generation > MAX_GENERATION {
            return Err(Error::Resource(alloc::format!(
                "generation {generation} exceeds the supported maximum {MAX_GENERATION}"
            )));
        }
        let ratio = math::powf(2.0, -1.0 / alpha);
        Ok(Self {
            alpha,
            ratio,
            generation,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Scaling ratio `r` of each retained piece.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// True for `alpha = 1`, where the set is all of `[0, 1]`.
    pub fn is_continuum(&self) -> bool {
        self.alpha == 1.0
    }

    /// `1 / Γ(alpha + 1)`, the total mass of the set and `S(1)`.
    pub fn total_mass(&self) -> f64 {
        1.0 / math::gamma(self.alpha + 1.0)
    }

    pub fn interval_count(&self) -> u64 {
        if self.is_continuum() {
            1
        } else {
            1u64 << self.generation
        }
    }

    pub fn interval_length(&self) -> f64 {
        if self.is_continuum() {
            1.0
        } else {
            math::powf(self.ratio, self.generation as f64)
        }
    }

    /// Closed interval number `k` in increasing order.
    ///
    /// # Panics
    /// If `k >= interval_count()`.
    pub fn interval(&self, k: u64) -> (f64, f64) {
        assert!(k < self.interval_count(), "interval index out of range");
        if self.is_continuum() {
            return (0.0, 1.0);
        }
        let n = self.generation;
        let mut left = 0.0;
        let mut len = 1.0;
        for level in 0..n {
            let bit = (k >> (n - 1 - level)) & 1;
            if bit == 1 {
                left += len - len * self.ratio;
            }
            len *= self.ratio;
        }
        let right = if k + 1 == self.interval_count() {
            1.0
        } else {
            left + len
        };
        (left, right)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.interval_count()).map(move |k| self.interval(k))
    }

    /// Maximal open gaps `(g1, g2)` between consecutive intervals.
    pub fn gaps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..self.interval_count()).map(move |k| (self.interval(k - 1).1, self.interval(k).0))
    }

    /// Characteristic function `χ_F(t)`; interval endpoints belong to the set.
    pub fn indicator(&self, t: f64) -> Result<bool> {
        check_unit(t)?;
        if self.is_continuum() {
            return Ok(true);
        }
        let mut lo = 0.0;
        let mut len = 1.0;
        for _ in 0..self.generation {
            let child = len * self.ratio;
            if t <= lo + child + MEMBERSHIP_TOL {
                len = child;
            } else if t >= lo + len - child - MEMBERSHIP_TOL {
                lo += len - child;
                len = child;
            } else {
                return Ok(false);
            }
        }
        Ok(t >= lo - MEMBERSHIP_TOL && t <= lo + len + MEMBERSHIP_TOL)
    }

    /// Coarse-grained mass of the set inside `[a, b]` at partition scale `delta`.
    ///
    /// The partition is aligned with the gaps of the coarsest generation `m`
    /// (capped at the prefractal's own generation) whose intervals are no
    /// longer than `delta`. Gap cells carry no mass; an interval cell of
    /// length `l` carries `l^alpha / Γ(alpha + 1)`, spread uniformly in `t`
    /// when `[a, b]` only covers part of it.
    pub fn coarse_grained_mass(&self, a: f64, b: f64, delta: f64) -> Result<f64> {
        check_unit(a)?;
        check_unit(b)?;
        if a > b {
            return Err(Error::domain(alloc::format!(
                "mass interval is reversed: a = {a} > b = {b}"
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::domain(alloc::format!(
                "partition size must be positive, got {delta}"
            )));
        }
        if a == b {
            return Ok(0.0);
        }
        let norm = self.total_mass();
        if self.is_continuum() {
            return Ok((b - a) * norm);
        }
        let depth = self.resolved_generation(delta);
        let cell = math::powf(self.ratio, depth as f64);
        let cell_mass = math::powf(cell, self.alpha) * norm;
        Ok(self.mass_below(0.0, 1.0, 0, depth, cell, cell_mass, a, b))
    }

    /// Generation resolved by partitions of size `delta`.
    pub fn resolved_generation(&self, delta: f64) -> u32 {
        let mut depth = 0;
        let mut len = 1.0;
        while depth < self.generation && len > delta {
            len *= self.ratio;
            depth += 1;
        }
        depth
    }

    #[allow(clippy::too_many_arguments)]
    fn mass_below(
        &self,
        lo: f64,
        len: f64,
        level: u32,
        depth: u32,
        cell: f64,
        cell_mass: f64,
        a: f64,
        b: f64,
    ) -> f64 {
        let hi = lo + len;
        if hi <= a || lo >= b {
            return 0.0;
        }
        if lo >= a && hi <= b {
            // Every generation-`depth` cell below this node is fully covered.
            return (1u64 << (depth - level)) as f64 * cell_mass;
        }
        if level == depth {
            let covered = hi.min(b) - lo.max(a);
            return cell_mass * covered / cell;
        }
        let child = len * self.ratio;
        self.mass_below(lo, child, level + 1, depth, cell, cell_mass, a, b)
            + self.mass_below(hi - child, child, level + 1, depth, cell, cell_mass, a, b)
    }

    /// Mass of the generation-`generation` cover evaluated with a trial exponent.
    pub fn cover_mass(&self, exponent: f64, generation: u32) -> f64 {
        let (count, len) = if self.is_continuum() {
            // The continuum is covered by dyadic cells.
            ((1u64 << generation) as f64, math::powf(0.5, generation as f64))
        } else {
            (
                (1u64 << generation) as f64,
                math::powf(self.ratio, generation as f64),
            )
        };
        count * math::powf(len, exponent) / math::gamma(exponent + 1.0)
    }

    /// Estimates the γ-dimension from a list of trial exponents.
    ///
    /// A trial exponent is accepted once the cover mass stays below
    /// `2 / Γ(exponent + 1)` at every generation up to the prefractal's own.
    /// The smallest accepted exponent is returned. With only generation 0
    /// available nothing can diverge, so the lowest trial is returned and
    /// flagged.
    pub fn estimate_dimension(&self, trials: &[f64]) -> Result<DimensionEstimate> {
        if trials.is_empty() {
            return Err(Error::domain("trial exponent list is empty"));
        }
        if trials.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::domain("trial exponents must lie in (0, 1]"));
        }
        if trials.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("trial exponents must be strictly increasing"));
        }
        if self.generation == 0 {
            return Ok(DimensionEstimate {
                dimension: trials[0],
                degenerate: true,
            });
        }
        for &exponent in trials {
            let bound = 2.0 / math::gamma(exponent + 1.0);
            if (0..=self.generation).all(|g| self.cover_mass(exponent, g) <= bound) {
                return Ok(DimensionEstimate {
                    dimension: exponent,
                    degenerate: false,
                });
            }
        }
        Err(Error::domain(
            "cover mass diverges for every trial exponent; supply larger trials",
        ))
    }

    /// The integral staircase `S(t) = γ^alpha(F, 0, t)` evaluated by recursion.
    pub fn staircase(&self) -> StaircaseFunction {
        StaircaseFunction {
            set: self.clone(),
            scale: self.total_mass(),
            table: None,
        }
    }

    /// Same staircase, backed by a breakpoint table and binary search.
    pub fn tabulated_staircase(&self) -> Result<StaircaseFunction> {
        if self.generation > MAX_TABULATED_GENERATION && !self.is_continuum() {
            return Err(Error::Resource(alloc::format!(
                "cannot tabulate generation {} (limit {MAX_TABULATED_GENERATION})",
                self.generation
            )));
        }
        let scale = self.total_mass();
        let table = self
            .intervals()
            .map(|(left, right)| Breakpoint { left, right })
            .collect();
        Ok(StaircaseFunction {
            set: self.clone(),
            scale,
            table: Some(table),
        })
    }
}

/// Result of [`CantorPrefractal::estimate_dimension`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionEstimate {
    pub dimension: f64,
    /// Set when the prefractal has a single generation and nothing could diverge.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Breakpoint {
    left: f64,
    right: f64,
}

/// Evaluation mode of a [`StaircaseFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaircaseMode {
    Recursive,
    Tabulated,
}

/// `S^alpha_F` on `[0, 1]` with base point 0.
///
/// Within each prefractal interval the function is linear, so it is exactly
/// piecewise linear with breakpoints at the interval endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseFunction {
    set: CantorPrefractal,
    scale: f64,
    table: Option<Vec<Breakpoint>>,
}

impl StaircaseFunction {
    pub fn prefractal(&self) -> &CantorPrefractal {
        &self.set
    }

    /// `S(1) = 1 / Γ(alpha + 1)`.
    pub fn total(&self) -> f64 {
        self.scale
    }

    pub fn mode(&self) -> StaircaseMode {
        if self.table.is_some() {
            StaircaseMode::Tabulated
        } else {
            StaircaseMode::Recursive
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        check_unit(t)?;
        Ok(match &self.table {
            Some(table) => self.eval_table(table, t),
            None => self.eval_recursive(t),
        })
    }

    fn eval_recursive(&self, t: f64) -> f64 {
        if self.set.is_continuum() {
            return self.scale * t;
        }
        // S(t) = scale * (k + θ) / 2^n with k the interval index, so flats and
        // interval endpoints share one rounding path.
        let n = self.set.generation;
        let r = self.set.ratio;
        let mut k: u64 = 0;
        let mut lo = 0.0;
        let mut len = 1.0;
        for level in 0..n {
            let child = len * r;
            if t <= lo + child {
                len = child;
            } else if t >= lo + (len - child) {
                k |= 1 << (n - 1 - level);
                lo += len - child;
                len = child;
            } else {
                let k = k | ((1 << (n - 1 - level)) - 1);
                return self.dyadic(k as f64 + 1.0);
            }
        }
        self.dyadic(k as f64 + ((t - lo) / len).clamp(0.0, 1.0))
    }

    #[inline]
    fn dyadic(&self, position: f64) -> f64 {
        self.scale * position / (1u64 << self.set.generation) as f64
    }

    fn eval_table(&self, table: &[Breakpoint], t: f64) -> f64 {
        // Last interval whose left endpoint is <= t.
        let idx = table.partition_point(|bp| bp.left <= t);
        if idx == 0 {
            return 0.0;
        }
        let bp = &table[idx - 1];
        let theta = if t >= bp.right {
            1.0
        } else {
            (t - bp.left) / (bp.right - bp.left)
        };
        self.scale * ((idx - 1) as f64 + theta) / table.len() as f64
    }

    /// Smallest `t` with `S(t) = tau`; values on a flat map to the flat's left edge.
    pub fn inverse(&self, tau: f64) -> Result<f64> {
        if !(tau >= 0.0 && tau <= self.scale * (1.0 + 1e-12)) {
            return Err(Error::domain(alloc::format!(
                "staircase value {tau} outside [0, {}]",
                self.scale
            )));
        }
        let tau = tau.min(self.scale);
        if self.set.is_continuum() {
            return Ok(tau / self.scale);
        }
        let r = self.set.ratio;
        let mut value = 0.0;
        let mut weight = self.scale;
        let mut lo = 0.0;
        let mut len = 1.0;
        for _ in 0..self.set.generation {
            let child = len * r;
            weight *= 0.5;
            if tau <= value + weight {
                len = child;
            } else {
                value += weight;
                lo += len - child;
                len = child;
            }
        }
        Ok(lo + len * ((tau - value) / weight).clamp(0.0, 1.0))
    }
}

fn check_unit(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain(alloc::format!("time {t} outside [0, 1]")))
    }
}
