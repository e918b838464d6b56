//! Uniform space grid on `[0, L]` with the characteristics-aligned time step
//! `Δt = h`, and the quadrature rules built on it.

use crate::{Error, Result, C64};

/// Uniform grid with `n` cells on `[0, L]`. The time step equals the cell
/// width so that unit-speed transport maps nodes onto nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    length: f64,
    cells: usize,
}

impl GridSpec {
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of cells `n`; there are `n + 1` nodes.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn nodes_len(&self) -> usize {
        self.cells + 1
    }

    /// Cell width, also the time step.
    pub fn h(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn dt(&self) -> f64 {
        self.h()
    }

    /// Node `x_i`. The last node is exactly `L`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.length
        } else {
            i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }

    /// Number of whole steps in `horizon`, which must be a multiple of `h`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        if horizon.is_nan() || horizon < 0.0 || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be nonnegative, got {horizon}")));
        }
        let m = (horizon / self.h()).round();
        if (m * self.h() - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::invalid(format!(
                "horizon {horizon} is not an integer multiple of the step {}",
                self.h()
            )));
        }
        Ok(m as usize)
    }

    pub fn trapezoid(&self) -> QuadratureRule {
        QuadratureRule::trapezoid(self)
    }
}

pub fn make_grid(length: f64, cells: usize) -> Result<GridSpec> {
    if length.is_nan() || length <= 0.0 || !length.is_finite() {
        return Err(Error::invalid(format!("domain length must be positive, got {length}")));
    }
    if cells < 2 {
        return Err(Error::invalid(format!("need at least 2 cells, got {cells}")));
    }
    Ok(GridSpec { length, cells })
}

/// Quadrature weights on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Composite trapezoid: `h/2` at the endpoints, `h` inside.
    pub fn trapezoid(grid: &GridSpec) -> Self {
        let h = grid.h();
        let mut weights = vec![h; grid.nodes_len()];
        weights[0] = 0.5 * h;
        weights[grid.cells()] = 0.5 * h;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Discrete `L²` norm of nodal values.
    pub fn l2_norm(&self, values: &[C64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ wᵢ vᵢ` without the length check of [`quad`].
    pub(crate) fn apply(&self, values: &[C64]) -> C64 {
        self.weights.iter().zip(values).map(|(w, v)| v * *w).sum()
    }
}

pub fn quad(values: &[C64], rule: &QuadratureRule) -> Result<C64> {
    if values.len() != rule.len() {
        return Err(Error::invalid(format!(
            "quadrature expects {} values, got {}",
            rule.len(),
            values.len()
        )));
    }
    Ok(rule.apply(values))
}

/// `∫_0^L I[v](x) e^{s x} dx` where `I[v]` is the piecewise-linear interpolant
/// of the nodal values. Exact in the exponential factor, so the error does not
/// grow with `|s|` the way the trapezoid error does.
pub fn filon_exp(values: &[C64], grid: &GridSpec, s: C64) -> C64 {
    let h = grid.h();
    let theta = s * h;
    let (w0, w1) = filon_weights(theta);
    (0..grid.cells())
        .map(|j| (s * grid.node(j)).exp() * (values[j] * w0 + values[j + 1] * w1))
        .sum::<C64>()
        * h
}

/// `(∫_0^1 (1-σ) e^{θσ} dσ, ∫_0^1 σ e^{θσ} dσ)`.
fn filon_weights(theta: C64) -> (C64, C64) {
    if theta.norm() < 1e-2 {
        let t = theta;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let w0 = 0.5 + t / 6.0 + t2 / 24.0 + t3 / 120.0 + t4 / 720.0;
        let w1 = 0.5 + t / 3.0 + t2 / 8.0 + t3 / 30.0 + t4 / 144.0;
        (w0, w1)
    } else {
        let e = theta.exp();
        let w1 = (e * (theta - 1.0) + 1.0) / (theta * theta);
        let w0 = (e - 1.0) / theta - w1;
        (w0, w1)
    }
}

/// Romberg extrapolation of the trapezoid rule on equispaced samples with
/// spacing `dt`. Depth is limited to 3 and by the powers of two dividing the
/// number of intervals (depth 0 is the plain trapezoid).
pub fn romberg(samples: &[C64], dt: f64) -> C64 {
    let m = samples.len().saturating_sub(1);
    if m == 0 {
        return C64::new(0.0, 0.0);
    }
    let depth = (m.trailing_zeros() as usize).min(3);
    let trap = |stride: usize| -> C64 {
        let mut acc = (samples[0] + samples[m]) * 0.5;
        let mut i = stride;
        while i < m {
            acc += samples[i];
            i += stride;
        }
        acc * (dt * stride as f64)
    };
    // row r uses stride 2^(depth - r)
    let mut prev: Vec<C64> = vec![trap(1 << depth)];
    for r in 1..=depth {
        let mut row = vec![trap(1 << (depth - r))];
        for j in 1..=r {
            let f = 4f64.powi(j as i32);
            let v = row[j - 1] + (row[j - 1] - prev[j - 1]) / (f - 1.0);
            row.push(v);
        }
        prev = row;
    }
    prev[depth]
}
