//! Spectrum of the periodic adjoint for kernels `g(x, y) = g(x)`, and the
//! Fattorini test `φ_k(L) ≠ 0`.
//!
//! With `λ_0 = ∫ ḡ` the eigenvalues are `λ_0` and `λ_k = 2ikπ/L`, with
//! eigenfunctions `φ_0 = 1` and
//! `φ_k(x) = e^{-λ_k x} + (λ_k - λ_0)⁻¹ ∫ ḡ(σ) e^{-λ_k σ} dσ`.

use std::f64::consts::PI;
use std::path::Path;

use crate::csvio::{fmt_g17, CsvOut};
use crate::grid::GridSpec;
use crate::kernel::SampledKernel;
use crate::{Error, Result, C64};

/// `(1 - e^{-λx}) / λ`, or `x` at `λ = 0`.
pub fn w_lambda(lambda: C64, x: f64) -> C64 {
    let z = lambda * x;
    if z.norm() < 1e-6 {
        // x (1 - z/2 + z²/6)
        return (1.0 - z * 0.5 + z * z / 6.0) * x;
    }
    (1.0 - (-z).exp()) / lambda
}

/// The 2×2 matrix `H(λ)` whose determinant vanishes exactly on the spectrum.
pub fn h_matrix(lambda: C64, sk: &SampledKernel) -> Result<[[C64; 2]; 2]> {
    let gx = sk.x_profile()?;
    let grid = sk.grid();
    let rule = grid.trapezoid();
    let len = grid.length();
    let xs = grid.nodes();
    let ge: Vec<C64> = xs.iter().zip(&gx).map(|(x, g)| g.conj() * (-lambda * *x).exp()).collect();
    let gw: Vec<C64> = xs.iter().zip(&gx).map(|(x, g)| g.conj() * w_lambda(lambda, *x)).collect();
    Ok([
        [1.0 - (-lambda * len).exp(), -w_lambda(lambda, len)],
        [rule.apply(&ge), rule.apply(&gw) - 1.0],
    ])
}

pub fn det2(m: &[[C64; 2]; 2]) -> C64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub k: i64,
    pub lambda: C64,
    /// `φ_k` at the grid nodes.
    pub phi: Vec<C64>,
    /// Observation value `φ_k(L)`.
    pub b: C64,
    /// Constant part of `φ_k` (zero for `k = 0`, where `φ_0 = 1`).
    pub offset: C64,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub lambda0: C64,
    /// Pairs for `k = -K..=K`, in that order.
    pub pairs: Vec<EigenPair>,
    pub grid: GridSpec,
}

impl Spectrum {
    pub fn order(&self) -> usize {
        self.pairs.len() / 2
    }

    pub fn pair(&self, k: i64) -> Option<&EigenPair> {
        let idx = k + self.order() as i64;
        if idx < 0 {
            return None;
        }
        self.pairs.get(idx as usize)
    }

    /// Rows `k,re_lambda,im_lambda,re_b,im_b`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["k", "re_lambda", "im_lambda", "re_b", "im_b"])?;
        for p in &self.pairs {
            out.row([
                p.k.to_string(),
                fmt_g17(p.lambda.re),
                fmt_g17(p.lambda.im),
                fmt_g17(p.b.re),
                fmt_g17(p.b.im),
            ])?;
        }
        out.finish()
    }

    /// Rows `k,x,re,im` of the sampled eigenfunctions.
    pub fn write_eigenfunctions_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["k", "x", "re", "im"])?;
        let xs = self.grid.nodes();
        for p in &self.pairs {
            for (x, v) in xs.iter().zip(&p.phi) {
                out.row([p.k.to_string(), fmt_g17(*x), fmt_g17(v.re), fmt_g17(v.im)])?;
            }
        }
        out.finish()
    }
}

pub(crate) fn lambda_k(k: i64, length: f64) -> C64 {
    C64::new(0.0, 2.0 * k as f64 * PI / length)
}

fn is_degenerate(lambda0: C64, lk: C64) -> bool {
    (lambda0 - lk).norm() < 1e-8 * (1.0 + lambda0.norm())
}

fn lambda0_of(gx: &[C64], grid: &GridSpec) -> C64 {
    let conj: Vec<C64> = gx.iter().map(|g| g.conj()).collect();
    grid.trapezoid().apply(&conj)
}

/// `(λ_k - λ_0)⁻¹ ∫ ḡ e^{-λ_k x} dx`.
fn offset(gx: &[C64], grid: &GridSpec, lambda0: C64, k: i64) -> Result<C64> {
    let lk = lambda_k(k, grid.length());
    if is_degenerate(lambda0, lk) {
        return Err(Error::Degenerate(format!("lambda_0 = {lambda0} coincides with lambda_{k}")));
    }
    let v: Vec<C64> = grid
        .nodes()
        .iter()
        .zip(gx)
        .map(|(x, g)| g.conj() * (-lk * *x).exp())
        .collect();
    Ok(grid.trapezoid().apply(&v) / (lk - lambda0))
}

/// Eigenpairs for `|k| <= order`.
pub fn spectrum(sk: &SampledKernel, order: usize) -> Result<Spectrum> {
    let gx = sk.x_profile()?;
    let grid = *sk.grid();
    let lambda0 = lambda0_of(&gx, &grid);
    let xs = grid.nodes();
    let n = grid.cells();
    let k_max = order as i64;
    let mut pairs = Vec::with_capacity(2 * order + 1);
    for k in -k_max..=k_max {
        let pair = if k == 0 {
            EigenPair {
                k,
                lambda: lambda0,
                phi: vec![C64::new(1.0, 0.0); n + 1],
                b: C64::new(1.0, 0.0),
                offset: C64::new(0.0, 0.0),
            }
        } else {
            let lk = lambda_k(k, grid.length());
            let off = offset(&gx, &grid, lambda0, k)?;
            let mut phi: Vec<C64> = xs.iter().map(|x| (-lk * *x).exp() + off).collect();
            // e^{-λ_k L} = 1 exactly
            phi[n] = 1.0 + off;
            EigenPair { k, lambda: lk, b: phi[n], phi, offset: off }
        };
        pairs.push(pair);
    }
    Ok(Spectrum { lambda0, pairs, grid })
}

/// `‖λφ + φ' - ∫ ḡ φ‖ + |φ(L) - φ(0)|`, derivative by second-order
/// differences.
pub fn eigen_residual(pair: &EigenPair, sk: &SampledKernel) -> Result<f64> {
    let gx = sk.x_profile()?;
    let grid = sk.grid();
    let rule = grid.trapezoid();
    let phi = &pair.phi;
    let np = phi.len();
    if np != grid.nodes_len() {
        return Err(Error::invalid("eigenfunction length differs from the node count"));
    }
    let h = grid.h();
    let gphi: Vec<C64> = gx.iter().zip(phi).map(|(g, p)| g.conj() * p).collect();
    let integral = rule.apply(&gphi);
    let n = np - 1;
    let deriv = |i: usize| -> C64 {
        if i == 0 {
            (-phi[2] + phi[1] * 4.0 - phi[0] * 3.0) / (2.0 * h)
        } else if i == n {
            (phi[n - 2] - phi[n - 1] * 4.0 + phi[n] * 3.0) / (2.0 * h)
        } else {
            (phi[i + 1] - phi[i - 1]) / (2.0 * h)
        }
    };
    let r: Vec<C64> = (0..np).map(|i| pair.lambda * phi[i] + deriv(i) - integral).collect();
    Ok(rule.l2_norm(&r) + (phi[n] - phi[0]).norm())
}

/// `1 + (λ_k - λ_0)⁻¹ ∫ ḡ e^{-λ_k x} dx`, which equals `φ_k(L)`.
pub fn fattorini_value(k: i64, sk: &SampledKernel) -> Result<C64> {
    if k == 0 {
        return Err(Error::invalid("the Fattorini value is defined for k != 0"));
    }
    let gx = sk.x_profile()?;
    let grid = sk.grid();
    Ok(1.0 + offset(&gx, grid, lambda0_of(&gx, grid), k)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FattoriniStatus {
    Satisfied,
    FailsAt(Vec<i64>),
    DegenerateLambda0,
}

#[derive(Debug, Clone)]
pub struct FattoriniVerdict {
    pub status: FattoriniStatus,
    /// For `|k| > k_max` the value provably has modulus `>= 1/2`.
    pub k_max: usize,
    /// `(k, value)` for `0 < |k| <= k_max`, ordered by `k`.
    pub values: Vec<(i64, C64)>,
}

impl FattoriniVerdict {
    pub fn is_satisfied(&self) -> bool {
        self.status == FattoriniStatus::Satisfied
    }

    pub fn failing(&self) -> &[i64] {
        match &self.status {
            FattoriniStatus::FailsAt(s) => s,
            _ => &[],
        }
    }

    pub fn status_label(&self) -> String {
        match &self.status {
            FattoriniStatus::Satisfied => "satisfied".into(),
            FattoriniStatus::FailsAt(s) => {
                let list: Vec<String> = s.iter().map(i64::to_string).collect();
                format!("fails_at {{{}}}", list.join(" "))
            }
            FattoriniStatus::DegenerateLambda0 => "degenerate_lambda0".into(),
        }
    }

    /// Turn a negative verdict into the matching error.
    pub fn require(&self) -> Result<()> {
        match &self.status {
            FattoriniStatus::Satisfied => Ok(()),
            FattoriniStatus::FailsAt(s) => Err(Error::NotControllable { indices: s.clone() }),
            FattoriniStatus::DegenerateLambda0 => {
                Err(Error::Degenerate("lambda_0 coincides with a harmonic 2ik pi/L".into()))
            }
        }
    }

    /// Values as `k,re_value,im_value,abs_value`; the status goes to a
    /// separate one-row CSV `status,k_max`.
    pub fn write_csv(&self, values: &Path, status: &Path) -> Result<()> {
        let mut out = CsvOut::create(values, &["k", "re_value", "im_value", "abs_value"])?;
        for (k, v) in &self.values {
            out.row([k.to_string(), fmt_g17(v.re), fmt_g17(v.im), fmt_g17(v.norm())])?;
        }
        out.finish()?;
        let mut out = CsvOut::create(status, &["status", "k_max"])?;
        out.row([self.status_label(), self.k_max.to_string()])?;
        out.finish()
    }
}

/// Least `K >= 1` with `2Kπ/L > |λ_0|` and `√L ‖g‖ / (2Kπ/L - |λ_0|) < 1/2`.
fn tail_bound_index(length: f64, g_norm: f64, lambda0_abs: f64) -> usize {
    let step = 2.0 * PI / length;
    let holds = |k: usize| {
        let gap = step * k as f64 - lambda0_abs;
        gap > 0.0 && length.sqrt() * g_norm / gap < 0.5
    };
    let guess = ((lambda0_abs + 2.0 * length.sqrt() * g_norm) / step).floor() as usize;
    let mut k = guess.saturating_sub(1).max(1);
    while !holds(k) {
        k += 1;
    }
    while k > 1 && holds(k - 1) {
        k -= 1;
    }
    k
}

/// Fattorini verdict: the criterion is checked explicitly for
/// `0 < |k| <= K_max` and holds beyond by the Cauchy-Schwarz tail bound.
pub fn fattorini_check(sk: &SampledKernel, tol: f64) -> Result<FattoriniVerdict> {
    let gx = sk.x_profile()?;
    let grid = *sk.grid();
    let lambda0 = lambda0_of(&gx, &grid);
    let g_norm = grid.trapezoid().l2_norm(&gx);
    let k_max = tail_bound_index(grid.length(), g_norm, lambda0.norm());
    let mut values = Vec::with_capacity(2 * k_max);
    let mut failing = Vec::new();
    for k in (-(k_max as i64)..=k_max as i64).filter(|k| *k != 0) {
        match offset(&gx, &grid, lambda0, k) {
            Ok(off) => {
                let v = 1.0 + off;
                if v.norm() <= tol {
                    failing.push(k);
                }
                values.push((k, v));
            }
            Err(Error::Degenerate(_)) => {
                return Ok(FattoriniVerdict { status: FattoriniStatus::DegenerateLambda0, k_max, values });
            }
            Err(e) => return Err(e),
        }
    }
    let status = if failing.is_empty() {
        FattoriniStatus::Satisfied
    } else {
        FattoriniStatus::FailsAt(failing)
    };
    Ok(FattoriniVerdict { status, k_max, values })
}
