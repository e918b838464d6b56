//! Moment problem for the periodic system: find `Ũ ∈ L²(0,L)` with
//! `∫_0^L m_k(t) Ũ(t) dt = c_k`, `m_k(t) = e^{-λ̄_k t}`, for `|k| <= N`.
//!
//! The control is sought as `a_0 + J t/L + Σ_{j≠0} a_j e^{-λ_j t}`. The ramp
//! carries the seam jump `Ũ(L) - Ũ(0) = J` of the exact control so that the
//! exponential part stays continuous and its coefficients decay fast. Since
//! `∫ m_k = 0` and `∫ m_k e^{-λ_j t} = L δ_kj` for `k, j ≠ 0`, the system is
//! an arrowhead and is solved in `O(N)`.

use std::path::Path;

use nalgebra::SymmetricEigen;

use crate::grid::{filon_exp, romberg, GridSpec};
use crate::spectral::{EigenPair, Spectrum};
use crate::transport::ControlSignal;
use crate::{CMatrix, Error, Result, C64};

/// Observation values below this modulus make the problem unsolvable.
pub const MIN_OBSERVATION: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MomentProblem {
    /// Truncation order `N`.
    pub order: usize,
    /// `k = -N..=N`.
    pub ks: Vec<i64>,
    pub targets: Vec<C64>,
    /// `λ_k`.
    pub exponents: Vec<C64>,
    /// `b_k = φ_k(L)`.
    pub observations: Vec<C64>,
    pub grid: GridSpec,
    /// Required `Ũ(L) - Ũ(0)`.
    pub seam_jump: C64,
}

impl MomentProblem {
    /// Problem with prescribed targets `c_k` (ordered `k = -N..=N`) and no
    /// seam jump.
    pub fn with_targets(spec: &Spectrum, targets: Vec<C64>) -> Result<Self> {
        if targets.len() != spec.pairs.len() {
            return Err(Error::invalid(format!(
                "expected {} targets, got {}",
                spec.pairs.len(),
                targets.len()
            )));
        }
        Ok(Self {
            order: spec.order(),
            ks: spec.pairs.iter().map(|p| p.k).collect(),
            targets,
            exponents: spec.pairs.iter().map(|p| p.lambda).collect(),
            observations: spec.pairs.iter().map(|p| p.b).collect(),
            grid: spec.grid,
            seam_jump: C64::new(0.0, 0.0),
        })
    }

    fn lambda0(&self) -> C64 {
        self.exponents[self.order]
    }

    /// `m_k(t_i)` on the control time grid.
    pub fn moment_samples(&self, idx: usize) -> Vec<C64> {
        let mu = -self.exponents[idx].conj();
        (0..=self.grid.cells()).map(|i| (mu * self.grid.node(i)).exp()).collect()
    }

    /// Rows `k,re_target,im_target`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use crate::csvio::{fmt_g17, CsvOut};
        let mut out = CsvOut::create(path, &["k", "re_target", "im_target"])?;
        for (k, c) in self.ks.iter().zip(&self.targets) {
            out.row([k.to_string(), fmt_g17(c.re), fmt_g17(c.im)])?;
        }
        out.finish()
    }
}

/// `⟨v, φ_k⟩ = ∫ v conj(φ_k)`; the exponential part is integrated exactly
/// against the piecewise-linear interpolant of `v`.
pub fn inner_with_phi(v: &[C64], pair: &EigenPair, grid: &GridSpec) -> C64 {
    let plain = grid.trapezoid().apply(v);
    if pair.k == 0 {
        return plain;
    }
    filon_exp(v, grid, -pair.lambda.conj()) + pair.offset.conj() * plain
}

fn check_observations(spec: &Spectrum) -> Result<()> {
    let bad: Vec<i64> = spec
        .pairs
        .iter()
        .filter(|p| p.b.norm() <= MIN_OBSERVATION)
        .map(|p| p.k)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::NotControllable { indices: bad })
    }
}

fn check_state(v: &[C64], grid: &GridSpec) -> Result<()> {
    if v.len() != grid.nodes_len() {
        return Err(Error::invalid(format!(
            "state has {} values, grid has {} nodes",
            v.len(),
            grid.nodes_len()
        )));
    }
    Ok(())
}

/// Null-control targets `c_k = -⟨ũ0, φ_k⟩ / conj(b_k)`.
pub fn moment_targets(u0: &[C64], spec: &Spectrum) -> Result<MomentProblem> {
    check_state(u0, &spec.grid)?;
    check_observations(spec)?;
    let targets = spec
        .pairs
        .iter()
        .map(|p| -inner_with_phi(u0, p, &spec.grid) / p.b.conj())
        .collect();
    let mut mp = MomentProblem::with_targets(spec, targets)?;
    mp.seam_jump = -(u0[spec.grid.cells()] - u0[0]);
    Ok(mp)
}

/// Targets for steering `0` to `z` in time `L`:
/// `c_k = e^{-λ̄_k L} ⟨z, φ_k⟩ / conj(b_k)`.
pub fn steering_targets(z: &[C64], spec: &Spectrum) -> Result<MomentProblem> {
    check_state(z, &spec.grid)?;
    check_observations(spec)?;
    let len = spec.grid.length();
    let targets = spec
        .pairs
        .iter()
        .map(|p| {
            let pull = if p.k == 0 { (-p.lambda.conj() * len).exp() } else { C64::new(1.0, 0.0) };
            pull * inner_with_phi(z, p, &spec.grid) / p.b.conj()
        })
        .collect();
    let mut mp = MomentProblem::with_targets(spec, targets)?;
    mp.seam_jump = z[spec.grid.cells()] - z[0];
    Ok(mp)
}

/// `∫_0^L e^{-ν t} dt`.
fn exp_integral(nu: C64, len: f64) -> C64 {
    let z = nu * len;
    if z.norm() < 1e-3 {
        // L Σ (-z)^k / (k+1)!
        let s = 1.0 - z / 2.0 + z * z / 6.0 - z.powi(3) / 24.0 + z.powi(4) / 120.0;
        return s * len;
    }
    (1.0 - (-z).exp()) / nu
}

/// `∫_0^L e^{-μ t} t/L dt`.
fn ramp_moment_zero(mu: C64, len: f64) -> C64 {
    let z = mu * len;
    if z.norm() < 1e-2 {
        // L Σ (-z)^k / (k! (k+2))
        let s = 0.5 - z / 3.0 + z * z / 8.0 - z.powi(3) / 30.0 + z.powi(4) / 144.0 - z.powi(5) / 840.0;
        return s * len;
    }
    (1.0 - (-z).exp() * (1.0 + z)) / (mu * mu * len)
}

/// Gram matrix `Γ_kj = ∫_0^L m_j conj(m_k) dt` of the moment family, in closed
/// form. Rows and columns are ordered `k = -N..=N`.
pub fn gram_matrix(exponents: &[C64], grid: &GridSpec) -> Result<CMatrix> {
    let len = grid.length();
    let dim = exponents.len();
    if dim.is_multiple_of(2) {
        return Err(Error::invalid("exponent list must have odd length 2N + 1"));
    }
    let mid = dim / 2;
    let g = CMatrix::from_fn(dim, dim, |k, j| {
        if k != mid && j != mid {
            if k == j {
                C64::new(len, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        } else {
            exp_integral(exponents[k] + exponents[j].conj(), len)
        }
    });
    let lambda0 = exponents[mid];
    for (k, lk) in exponents.iter().enumerate() {
        if k != mid && (lambda0 - lk).norm() < 1e-8 * (1.0 + lambda0.norm()) {
            return Err(Error::Degenerate(format!("lambda_0 = {lambda0} coincides with {lk}")));
        }
    }
    Ok(g)
}

/// Ratio of extreme eigenvalues of a Hermitian matrix.
pub fn condition_number(hermitian: &CMatrix) -> f64 {
    let eig = SymmetricEigen::new(hermitian.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    hi / lo
}

/// Control solving the truncated moment problem, sampled at `t_m = m h`,
/// `m = 0..=n`.
pub fn solve_moments(mp: &MomentProblem) -> Result<ControlSignal> {
    let len = mp.grid.length();
    let mid = mp.order;
    let mu = mp.lambda0().conj();
    let base = exp_integral(mu, len);
    if base.norm() < 1e-12 * len {
        return Err(Error::Degenerate("singular Gram system".into()));
    }
    let jump = mp.seam_jump;
    let mut coeffs = vec![C64::new(0.0, 0.0); mp.ks.len()];
    let mut acc = mp.targets[mid] - jump * ramp_moment_zero(mu, len);
    for (i, &k) in mp.ks.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let ramp = len / C64::new(0.0, 2.0 * std::f64::consts::PI * k as f64);
        coeffs[i] = (mp.targets[i] - jump * ramp) / len;
        acc -= coeffs[i] * exp_integral(mu + mp.exponents[i], len);
    }
    let a0 = acc / base;
    let grid = mp.grid;
    let samples = (0..=grid.cells())
        .map(|m| {
            let t = grid.node(m);
            let mut u = a0 + jump * (t / len);
            for (i, &k) in mp.ks.iter().enumerate() {
                if k != 0 {
                    u += coeffs[i] * (-mp.exponents[i] * t).exp();
                }
            }
            u
        })
        .collect();
    Ok(ControlSignal::new(samples, grid.dt()))
}

/// `|∫ m_k Ũ dt - c_k|` for every `k`, time integrals by Romberg.
pub fn verify_moments(control: &ControlSignal, mp: &MomentProblem) -> Vec<f64> {
    (0..mp.ks.len())
        .map(|i| {
            let m = mp.moment_samples(i);
            let prod: Vec<C64> = m.iter().zip(control.samples()).map(|(a, b)| a * b).collect();
            (romberg(&prod, control.dt()) - mp.targets[i]).norm()
        })
        .collect()
}
