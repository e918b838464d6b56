//! Nyström discretization of `P = Id - K`, `(Kz)(x) = ∫ k(x,y) z(y) dy`,
//! its invertibility, and the feedback functional
//! `Γu = ∫ h(L, y) u(y) dy` with `h(·, y) = -(Id - K)⁻¹ k(·, y)`.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DVector, LU, SVD};

use crate::csvio::{fmt_g17, CsvOut};
use crate::grid::GridSpec;
use crate::kernel::SampledKernel;
use crate::synth::SynthesizedKernel;
use crate::{CMatrix, Error, Result, C64};

type Factor = LU<C64, nalgebra::Dyn, nalgebra::Dyn>;

/// `Id - K` with the quadrature weights folded into `K`.
#[derive(Debug, Clone)]
pub struct FredholmOp {
    kmat: CMatrix,
    kraw: CMatrix,
    /// Values used at `(0, 0)` and `(L, L)`.
    corners: [C64; 2],
    grid: GridSpec,
    spectrum: OnceLock<(f64, f64)>,
    lu: OnceLock<Factor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invertibility {
    pub sigma_min: f64,
    pub tol: f64,
    pub invertible: bool,
}

/// Build `K` from samples of `k`, or, with `transpose_conjugate`, from samples
/// of `k*` using `k(x, y) = conj(k*(y, x))`.
pub fn assemble_k(kernel: &CMatrix, grid: &GridSpec, transpose_conjugate: bool) -> Result<FredholmOp> {
    let np = grid.nodes_len();
    if kernel.nrows() != np || kernel.ncols() != np {
        return Err(Error::invalid(format!(
            "kernel is {}x{}, grid needs {np}x{np}",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    let kraw = if transpose_conjugate { kernel.adjoint() } else { kernel.clone() };
    let rule = grid.trapezoid();
    let w = rule.weights();
    let kmat = CMatrix::from_fn(np, np, |i, j| kraw[(i, j)] * w[j]);
    let n = grid.cells();
    let corners = [kraw[(0, 0)], kraw[(n, n)]];
    Ok(FredholmOp { kmat, kraw, corners, grid: *grid, spectrum: OnceLock::new(), lu: OnceLock::new() })
}

impl FredholmOp {
    /// Use the inward limits `k(0, 0+)` and `k(L, L-)` at the two diagonal
    /// corners, both in `Kmat` and in the right-hand sides of the `h` solve.
    /// Needed when `k` jumps across the diagonal: a trapezoid endpoint must
    /// take the value from inside the integration interval. The kernel
    /// samples themselves are kept.
    pub fn with_corner_limits(mut self, at_zero: C64, at_length: C64) -> Self {
        let n = self.grid.cells();
        let w = self.grid.trapezoid();
        let w = w.weights();
        self.kmat[(0, 0)] = at_zero * w[0];
        self.kmat[(n, n)] = at_length * w[n];
        self.corners = [at_zero, at_length];
        self.spectrum = OnceLock::new();
        self.lu = OnceLock::new();
        self
    }

    pub fn kmat(&self) -> &CMatrix {
        &self.kmat
    }

    /// Kernel samples `k(x_i, y_j)` without weights.
    pub fn kernel(&self) -> &CMatrix {
        &self.kraw
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `Id - Kmat`.
    pub fn p_matrix(&self) -> CMatrix {
        let np = self.kmat.nrows();
        CMatrix::identity(np, np) - &self.kmat
    }

    fn singular_data(&self) -> (f64, f64) {
        *self.spectrum.get_or_init(|| {
            let smin = SVD::new(self.p_matrix(), false, false).singular_values.min();
            let knorm = SVD::new(self.kmat.clone(), false, false).singular_values.max();
            (smin, knorm)
        })
    }

    /// Smallest singular value of `Id - Kmat`.
    pub fn sigma_min(&self) -> f64 {
        self.singular_data().0
    }

    /// `‖Kmat‖₂`.
    pub fn k_norm(&self) -> f64 {
        self.singular_data().1
    }

    /// Default threshold `1e-6 (1 + ‖Kmat‖₂)`.
    pub fn default_tol(&self) -> f64 {
        1e-6 * (1.0 + self.k_norm())
    }

    fn factor(&self) -> &Factor {
        self.lu.get_or_init(|| LU::new(self.p_matrix()))
    }

    fn require_invertible(&self, tol: Option<f64>) -> Result<()> {
        let inv = invertibility(self, tol);
        if inv.invertible {
            Ok(())
        } else {
            Err(Error::SingularTransform { sigma_min: inv.sigma_min, tol: inv.tol })
        }
    }
}

pub fn invertibility(op: &FredholmOp, tol: Option<f64>) -> Invertibility {
    let sigma_min = op.sigma_min();
    let tol = tol.unwrap_or_else(|| op.default_tol());
    Invertibility { sigma_min, tol, invertible: sigma_min > tol }
}

/// `u = (Id - K) w`.
pub fn transform_apply(op: &FredholmOp, w: &[C64]) -> Result<Vec<C64>> {
    if w.len() != op.kmat.nrows() {
        return Err(Error::invalid("state length differs from the operator size"));
    }
    let wv = DVector::from_column_slice(w);
    let kw = &op.kmat * &wv;
    Ok(w.iter().zip(kw.iter()).map(|(a, b)| a - b).collect())
}

/// `w = (Id - K)⁻¹ u`.
pub fn transform_invert(op: &FredholmOp, u: &[C64], tol: Option<f64>) -> Result<Vec<C64>> {
    if u.len() != op.kmat.nrows() {
        return Err(Error::invalid("state length differs from the operator size"));
    }
    op.require_invertible(tol)?;
    let sol = op
        .factor()
        .solve(&DVector::from_column_slice(u))
        .ok_or(Error::SingularTransform { sigma_min: op.sigma_min(), tol: 0.0 })?;
    Ok(sol.iter().copied().collect())
}

/// `Γu = Σ γ_j u_j` with `γ_j = h(L, y_j) w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub hrow: Vec<C64>,
    pub gamma_vector: Vec<C64>,
}

impl FeedbackLaw {
    pub fn zero(grid: &GridSpec) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.nodes_len()];
        Self { hrow: z.clone(), gamma_vector: z }
    }

    pub fn apply(&self, u: &[C64]) -> C64 {
        self.gamma_vector.iter().zip(u).map(|(g, v)| g * v).sum()
    }

    /// Writes `j,re_h,im_h`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["j", "re_h", "im_h"])?;
        for (j, v) in self.hrow.iter().enumerate() {
            out.row([j.to_string(), fmt_g17(v.re), fmt_g17(v.im)])?;
        }
        out.finish()
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackKernel {
    pub law: FeedbackLaw,
    /// `h(x_i, y_j)`.
    pub h_field: CMatrix,
    pub sigma_min: f64,
    pub op: FredholmOp,
}

impl FeedbackKernel {
    /// Writes the law and a one-row `sigma_min,k_norm` diagnostics file.
    pub fn write_csv(&self, law: &Path, diagnostics: &Path) -> Result<()> {
        self.law.write_csv(law)?;
        let mut out = CsvOut::create(diagnostics, &["sigma_min", "k_norm"])?;
        out.row([fmt_g17(self.sigma_min), fmt_g17(self.op.k_norm())])?;
        out.finish()
    }
}

/// Solve `(Id - K) h(·, y_j) = -k(·, y_j)` for every column, with `K` built
/// from the synthesized `k*`, and read the feedback law off the row `x = L`.
pub fn feedback_kernel_h(kstar: &SynthesizedKernel, tol: Option<f64>) -> Result<FeedbackKernel> {
    feedback_from_op(kstar.operator()?, tol)
}

/// As [`feedback_kernel_h`] for an already assembled operator. The right-hand
/// sides are the unweighted kernel samples.
pub fn feedback_from_op(op: FredholmOp, tol: Option<f64>) -> Result<FeedbackKernel> {
    op.require_invertible(tol)?;
    let n = op.grid.cells();
    let mut rhs = -op.kraw.clone();
    rhs[(0, 0)] = -op.corners[0];
    rhs[(n, n)] = -op.corners[1];
    let h_field = op
        .factor()
        .solve(&rhs)
        .ok_or(Error::SingularTransform { sigma_min: op.sigma_min(), tol: 0.0 })?;
    let rule = op.grid.trapezoid();
    let hrow: Vec<C64> = (0..=n).map(|j| h_field[(n, j)]).collect();
    let gamma_vector = hrow.iter().zip(rule.weights()).map(|(v, w)| v * *w).collect();
    let sigma_min = op.sigma_min();
    Ok(FeedbackKernel { law: FeedbackLaw { hrow, gamma_vector }, h_field, sigma_min, op })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HResidual {
    pub pde_residual: f64,
    /// `‖h(·, 0)‖`.
    pub y0_defect: f64,
    /// `‖h(·, L)‖`.
    pub yl_defect: f64,
}

/// Residual of `h_x + h_y - ∫ g(σ, y) h(x, σ) dσ + g(x, y) = 0` away from the
/// diagonal, plus the boundary defects `‖h(·, 0)‖` and `‖h(·, L)‖`.
pub fn h_equation_residual(h_field: &CMatrix, sk: &SampledKernel) -> Result<HResidual> {
    let grid = sk.grid();
    let np = grid.nodes_len();
    if h_field.nrows() != np || h_field.ncols() != np {
        return Err(Error::invalid("h field does not match the grid"));
    }
    let n = np - 1;
    let hh = grid.h();
    let rule = grid.trapezoid();
    let w = rule.weights();
    let g = sk.values();
    let gq = sk.quadrature_matrix();
    let weighted = CMatrix::from_fn(np, np, |i, s| h_field[(i, s)] * w[s]);
    let integral = weighted * gq;
    let mut acc = 0.0;
    for i in 0..np {
        for j in 0..np {
            if i.abs_diff(j) <= 1 {
                continue;
            }
            let f = |a: usize, b: usize| h_field[(a, b)];
            let d = if 0 < i && i < n && 0 < j && j < n {
                (f(i + 1, j + 1) - f(i - 1, j - 1)) / (2.0 * hh)
            } else if i + 2 <= n && j + 2 <= n {
                (f(i, j) * -3.0 + f(i + 1, j + 1) * 4.0 - f(i + 2, j + 2)) / (2.0 * hh)
            } else if i >= 2 && j >= 2 {
                (f(i, j) * 3.0 - f(i - 1, j - 1) * 4.0 + f(i - 2, j - 2)) / (2.0 * hh)
            } else {
                continue;
            };
            let r = d - integral[(i, j)] + g[(i, j)];
            acc += w[i] * w[j] * r.norm_sqr();
        }
    }
    // the diagonal corner of each column, where h is double valued, is left out
    let col = |j: usize| -> Vec<C64> {
        (0..np).map(|i| if i == j { C64::new(0.0, 0.0) } else { h_field[(i, j)] }).collect()
    };
    Ok(HResidual {
        pde_residual: acc.sqrt(),
        y0_defect: rule.l2_norm(&col(0)),
        yl_defect: rule.l2_norm(&col(n)),
    })
}
