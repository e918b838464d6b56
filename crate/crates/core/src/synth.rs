//! Backstepping kernel `k*` for kernels `g(x, y) = g(x)`.
//!
//! `ĥ(t, y)` solves the transport equation driven by the source
//! `-g(y, L - t)` with zero initial data and must vanish at `t = L`. It is
//! split as `ĥ = p + q`: `p` is the free response to the source and `q` is
//! steered from `0` to `-p(L)` by a boundary control obtained from the
//! periodic moment problem. Then `k*(x, y) = conj(ĥ(L - x, y))`.

use std::path::Path;

use crate::csvio::{fmt_g17, CsvOut};
use crate::feedback::{assemble_k, FredholmOp};
use crate::grid::GridSpec;
use crate::kernel::SampledKernel;
use crate::moments::{solve_moments, steering_targets};
use crate::spectral::{fattorini_check, spectrum};
use crate::transport::{
    dirichlet_from_periodic, simulate_dirichlet, trace_at_zero, ControlSignal, SourceTerm, StateTrajectory,
};
use crate::{CMatrix, Error, Result, C64};

pub const DEFAULT_ORDER: usize = 32;
pub const DEFAULT_FATTORINI_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDiagnostics {
    pub pde_residual: f64,
    /// `‖k*(0, ·)‖`.
    pub bc0_defect: f64,
    /// `‖k*(L, ·)‖`.
    pub bcl_defect: f64,
}

#[derive(Debug, Clone)]
pub struct SynthesizedKernel {
    /// `kstar[(i, j)] = k*(x_i, y_j)`.
    pub kstar: CMatrix,
    /// `U(x_i) = k*(x_i, L)`.
    pub boundary: ControlSignal,
    /// Periodic steering control used for `q`.
    pub steering: ControlSignal,
    pub diagnostics: KernelDiagnostics,
    pub grid: GridSpec,
    /// `k*(0+, 0)` and `k*(L-, L)`. `k*` jumps across the diagonal, and the
    /// corner samples hold the limits along `y` instead.
    pub corner_limits: [C64; 2],
}

impl SynthesizedKernel {
    /// Wrap given samples of `k*` (assumed continuous at the corners).
    pub fn from_samples(kstar: CMatrix, sk: &SampledKernel) -> Result<Self> {
        let grid = *sk.grid();
        let diagnostics = kernel_residual(&kstar, sk)?;
        let n = grid.cells();
        let boundary = ControlSignal::new((0..=n).map(|i| kstar[(i, n)]).collect(), grid.dt());
        let corner_limits = [kstar[(0, 0)], kstar[(n, n)]];
        Ok(Self { kstar, boundary, steering: ControlSignal::zeros(n + 1, grid.dt()), diagnostics, grid, corner_limits })
    }

    /// `Id - K` with `k(x, y) = conj(k*(y, x))`.
    pub fn operator(&self) -> Result<FredholmOp> {
        let [at0, atl] = self.corner_limits;
        Ok(assemble_k(&self.kstar, &self.grid, true)?.with_corner_limits(at0.conj(), atl.conj()))
    }

    /// Writes `kstar.csv` (`i,j,re,im`), `kstar_boundary.csv` (`i,x,re,im`)
    /// and `kstar_diagnostics.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let np = self.kstar.nrows();
        let mut out = CsvOut::create(&dir.join("kstar.csv"), &["i", "j", "re", "im"])?;
        for i in 0..np {
            for j in 0..np {
                let v = self.kstar[(i, j)];
                out.row([i.to_string(), j.to_string(), fmt_g17(v.re), fmt_g17(v.im)])?;
            }
        }
        out.finish()?;
        let mut out = CsvOut::create(&dir.join("kstar_boundary.csv"), &["i", "x", "re", "im"])?;
        for (i, v) in self.boundary.samples().iter().enumerate() {
            out.row([i.to_string(), fmt_g17(self.grid.node(i)), fmt_g17(v.re), fmt_g17(v.im)])?;
        }
        out.finish()?;
        let d = &self.diagnostics;
        let mut out = CsvOut::create(
            &dir.join("kstar_diagnostics.csv"),
            &["pde_residual", "bc0_defect", "bcL_defect"],
        )?;
        out.row([fmt_g17(d.pde_residual), fmt_g17(d.bc0_defect), fmt_g17(d.bcl_defect)])?;
        out.finish()
    }
}

/// Solves `v_x + v_y = f` on the square with `v(x, L) = V(x)` and
/// `v(L, y) = v0(y)`:
///
/// - `x < y`: `v = V(L + x - y) - ∫_x^{L+x-y} f(s, s + y - x) ds`
/// - `x >= y`: `v = v0(L + y - x) - ∫_x^L f(s, s + y - x) ds`
///
/// with trapezoid integration along the diagonals.
pub fn characteristics_solve(f: &CMatrix, v_bc: &[C64], v0: &[C64], grid: &GridSpec) -> Result<CMatrix> {
    let np = grid.nodes_len();
    if f.nrows() != np || f.ncols() != np || v_bc.len() != np || v0.len() != np {
        return Err(Error::invalid("characteristics_solve: dimensions differ from the grid"));
    }
    let n = grid.cells();
    let h = grid.h();
    let diag_integral = |from: usize, to: usize, shift: isize| -> C64 {
        if to <= from {
            return C64::new(0.0, 0.0);
        }
        let at = |p: usize| f[(p, (p as isize + shift) as usize)];
        let mut acc = (at(from) + at(to)) * 0.5;
        for p in from + 1..to {
            acc += at(p);
        }
        acc * h
    };
    Ok(CMatrix::from_fn(np, np, |i, j| {
        if i < j {
            let end = n + i - j;
            v_bc[end] - diag_integral(i, end, (j - i) as isize)
        } else {
            v0[n + j - i] - diag_integral(i, n, -((i - j) as isize))
        }
    }))
}

/// Source `s(t_m, y_i) = -g(y_i, L - t_m)` of the `ĥ` equation.
pub fn kernel_source(sk: &SampledKernel) -> SourceTerm {
    let g = sk.quadrature_matrix();
    let n = sk.grid().cells();
    SourceTerm::new((0..=n).map(|m| (0..=n).map(|i| -g[(i, n - m)]).collect()).collect())
}

/// Response `p` to the source with zero data, over `[0, L]`.
pub fn free_solution_p(sk: &SampledKernel) -> Result<StateTrajectory> {
    let grid = sk.grid();
    let np = grid.nodes_len();
    let zero = vec![C64::new(0.0, 0.0); np];
    let src = kernel_source(sk);
    simulate_dirichlet(sk, &zero, &ControlSignal::zeros(np, grid.dt()), grid.length(), Some(&src))
}

pub fn synthesize_kernel(sk: &SampledKernel, order: usize) -> Result<SynthesizedKernel> {
    synthesize_kernel_with_tol(sk, order, DEFAULT_FATTORINI_TOL)
}

pub fn synthesize_kernel_with_tol(sk: &SampledKernel, order: usize, fattorini_tol: f64) -> Result<SynthesizedKernel> {
    fattorini_check(sk, fattorini_tol)?.require()?;
    let grid = *sk.grid();
    let n = grid.cells();
    let len = grid.length();
    let zero = vec![C64::new(0.0, 0.0); n + 1];

    let p = free_solution_p(sk)?;
    let target: Vec<C64> = p.final_state().iter().map(|v| -v).collect();
    let spec = spectrum(sk, order)?;
    let steering = solve_moments(&steering_targets(&target, &spec)?)?;
    let (u_dir, _) = dirichlet_from_periodic(sk, &zero, &steering, len)?;
    let q = simulate_dirichlet(sk, &zero, &u_dir, len, None)?;

    let kstar = CMatrix::from_fn(n + 1, n + 1, |i, j| (p.state(n - i)[j] + q.state(n - i)[j]).conj());
    let boundary = ControlSignal::new((0..=n).map(|i| kstar[(i, n)]).collect(), grid.dt());
    let diagnostics = kernel_residual(&kstar, sk)?;
    let corner_limits = [
        (trace_at_zero(&p).samples()[n] + trace_at_zero(&q).samples()[n]).conj(),
        u_dir.samples()[0].conj(),
    ];
    Ok(SynthesizedKernel { kstar, boundary, steering, diagnostics, grid, corner_limits })
}

/// Residual of `k*_x + k*_y + ∫ ḡ(y, σ) k*(x, σ) dσ - ḡ(y, x) = 0` plus the
/// two boundary defects. The characteristic derivative is a second-order
/// difference along the `(1, 1)` direction; nodes within one cell of the
/// diagonal are skipped.
pub fn kernel_residual(kstar: &CMatrix, sk: &SampledKernel) -> Result<KernelDiagnostics> {
    let grid = sk.grid();
    let np = grid.nodes_len();
    if kstar.nrows() != np || kstar.ncols() != np {
        return Err(Error::invalid("kernel samples do not match the grid"));
    }
    let n = np - 1;
    let h = grid.h();
    let rule = grid.trapezoid();
    let w = rule.weights();
    let gq = sk.quadrature_matrix();
    let g = sk.values();
    // integral[(i, j)] = Σ_σ k*(x_i, σ) w_σ conj(g(y_j, σ))
    let weighted = CMatrix::from_fn(np, np, |i, s| kstar[(i, s)] * w[s]);
    let integral = weighted * gq.adjoint();
    let mut acc = 0.0;
    for i in 0..np {
        for j in 0..np {
            if i.abs_diff(j) <= 1 {
                continue;
            }
            let d = if 0 < i && i < n && 0 < j && j < n {
                (kstar[(i + 1, j + 1)] - kstar[(i - 1, j - 1)]) / (2.0 * h)
            } else if i + 2 <= n && j + 2 <= n {
                (kstar[(i, j)] * -3.0 + kstar[(i + 1, j + 1)] * 4.0 - kstar[(i + 2, j + 2)]) / (2.0 * h)
            } else if i >= 2 && j >= 2 {
                (kstar[(i, j)] * 3.0 - kstar[(i - 1, j - 1)] * 4.0 + kstar[(i - 2, j - 2)]) / (2.0 * h)
            } else {
                continue;
            };
            let r = d + integral[(i, j)] - g[(j, i)].conj();
            acc += w[i] * w[j] * r.norm_sqr();
        }
    }
    let row = |i: usize| -> Vec<C64> { (0..np).map(|j| kstar[(i, j)]).collect() };
    Ok(KernelDiagnostics {
        pde_residual: acc.sqrt(),
        bc0_defect: rule.l2_norm(&row(0)),
        bcl_defect: rule.l2_norm(&row(n)),
    })
}

/// `x ↦ L - x` on the first index.
pub fn reverse_rows(m: &CMatrix) -> CMatrix {
    let n = m.nrows() - 1;
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(n - i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::kernel::{fattorini_counterexample, sample_kernel, KernelFunction};

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn characteristics_examples() {
        let g = make_grid(1.0, 4).unwrap();
        let zero = CMatrix::zeros(5, 5);
        let v = characteristics_solve(&zero, &[c(1.0); 5], &[c(0.0); 5], &g).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(v[(i, j)], if i < j { c(1.0) } else { c(0.0) });
            }
        }
        let ramp: Vec<C64> = g.nodes().into_iter().map(c).collect();
        let v = characteristics_solve(&zero, &ramp, &[c(0.0); 5], &g).unwrap();
        assert_eq!(v[(1, 3)], c(0.5));
        let ones = CMatrix::from_element(5, 5, c(1.0));
        let v = characteristics_solve(&ones, &[c(0.0); 5], &[c(0.0); 5], &g).unwrap();
        for i in 0..5 {
            for j in i + 1..5 {
                assert!((v[(i, j)] + c(1.0 - g.node(j))).norm() < 1e-15);
            }
        }
        assert!(characteristics_solve(&ones, &[c(0.0); 4], &[c(0.0); 5], &g).is_err());
    }

    #[test]
    fn characteristics_match_marching() {
        // v(x, y) = p(L - x, y) solves v_x + v_y = -F(L - x, y)
        let g = make_grid(1.0, 128).unwrap();
        let sk = sample_kernel(&KernelFunction::x_only(|x| C64::new(1.0 + x, -0.5 * x)), &g).unwrap();
        let p = free_solution_p(&sk).unwrap();
        let src = kernel_source(&sk);
        let gq = sk.quadrature_matrix();
        let w = g.trapezoid();
        let n = 128;
        let f = CMatrix::from_fn(n + 1, n + 1, |i, j| {
            let state = p.state(n - i);
            let integral: C64 = (0..=n).map(|s| gq[(j, s)] * w.weights()[s] * state[s]).sum();
            -(integral + src.rows()[n - i][j])
        });
        let v = characteristics_solve(&f, &[c(0.0); 129], &[c(0.0); 129], &g).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                worst = worst.max((v[(i, j)] - p.state(n - i)[j]).norm());
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn free_solution_examples() {
        let g = make_grid(1.0, 32).unwrap();
        let p = free_solution_p(&sample_kernel(&KernelFunction::Zero, &g).unwrap()).unwrap();
        assert!(p.states().iter().flatten().all(|v| *v == c(0.0)));
        let cst = C64::new(0.4, 0.1);
        let p = free_solution_p(&sample_kernel(&KernelFunction::Constant(cst), &g).unwrap()).unwrap();
        for v in &p.state(1)[..32] {
            assert!((v + cst * g.h()).norm() < 2.0 * g.h() * g.h());
        }
    }

    #[test]
    fn doubling_the_source_doubles_p() {
        let g = make_grid(1.0, 32).unwrap();
        let sk = sample_kernel(&KernelFunction::Constant(c(0.7)), &g).unwrap();
        let src = kernel_source(&sk);
        let zero = vec![c(0.0); 33];
        let u = ControlSignal::zeros(33, g.dt());
        let a = simulate_dirichlet(&sk, &zero, &u, 1.0, Some(&src)).unwrap();
        let b = simulate_dirichlet(&sk, &zero, &u, 1.0, Some(&src.scaled(c(2.0)))).unwrap();
        for (x, y) in a.states().iter().flatten().zip(b.states().iter().flatten()) {
            assert!((x * 2.0 - y).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let g = make_grid(1.0, 32).unwrap();
        let sk = synthesize_kernel(&sample_kernel(&KernelFunction::Zero, &g).unwrap(), 8).unwrap();
        assert!(sk.kstar.iter().all(|v| v.norm() == 0.0));
        assert!(sk.boundary.samples().iter().all(|v| v.norm() == 0.0));
        assert_eq!(sk.diagnostics, KernelDiagnostics { pde_residual: 0.0, bc0_defect: 0.0, bcl_defect: 0.0 });
    }

    #[test]
    fn counterexample_is_refused() {
        let g = make_grid(1.0, 256).unwrap();
        let sk = sample_kernel(&fattorini_counterexample(1.0, 2, 1.0).unwrap(), &g).unwrap();
        assert!(matches!(synthesize_kernel(&sk, 8), Err(Error::NotControllable { .. })));
        let sep = sample_kernel(&KernelFunction::separable(c, c), &g).unwrap();
        assert!(matches!(synthesize_kernel(&sep, 8), Err(Error::UnsupportedKernel(_))));
    }

    #[test]
    fn first_order_in_small_kernels() {
        let g = make_grid(1.0, 64).unwrap();
        let norm = |cst: f64| {
            let sk = sample_kernel(&KernelFunction::Constant(c(cst)), &g).unwrap();
            synthesize_kernel(&sk, 8).unwrap().kstar.norm()
        };
        let ratio = norm(0.02) / norm(0.01);
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn boundary_conditions_and_regularity() {
        let run = |n: usize, order: usize| {
            let g = make_grid(1.0, n).unwrap();
            synthesize_kernel(&sample_kernel(&KernelFunction::Constant(c(0.5)), &g).unwrap(), order).unwrap()
        };
        let a = run(64, 8);
        let b = run(128, 16);
        for s in [&a, &b] {
            assert!(s.diagnostics.bcl_defect <= 1e-12);
            let n = s.grid.cells();
            for i in 0..=n {
                assert_eq!(s.kstar[(i, n)], s.boundary.samples()[i]);
            }
        }
        assert!(b.diagnostics.bc0_defect * 2.0 <= a.diagnostics.bc0_defect);
        let slope = |s: &SynthesizedKernel| {
            // the last interval ends on the diagonal corner where k* jumps
            let u = s.boundary.samples();
            u[..u.len() - 1].windows(2).map(|w| (w[1] - w[0]).norm() / s.grid.h()).fold(0.0, f64::max)
        };
        assert!(slope(&b) < 1.2 * slope(&a), "{} {}", slope(&a), slope(&b));
    }

    #[test]
    fn corner_limits_follow_columns() {
        let g = make_grid(1.0, 128).unwrap();
        let s = synthesize_kernel(&sample_kernel(&KernelFunction::Constant(c(0.5)), &g).unwrap(), 16).unwrap();
        let n = 128;
        // linear extrapolation down each column
        let at0 = s.kstar[(1, 0)] * 2.0 - s.kstar[(2, 0)];
        let atl = s.kstar[(n - 1, n)] * 2.0 - s.kstar[(n - 2, n)];
        assert!((s.corner_limits[0] - at0).norm() < 1e-3, "{} {at0}", s.corner_limits[0]);
        assert!((s.corner_limits[1] - atl).norm() < 1e-3, "{} {atl}", s.corner_limits[1]);
        // the samples hold the limits along rows instead
        assert_eq!(s.kstar[(n, n)], c(0.0));
        assert!((s.corner_limits[1] - s.kstar[(n, n)]).norm() > 0.4);
    }

    #[test]
    fn reversal_is_an_involution() {
        let m = CMatrix::from_fn(5, 5, |i, j| C64::new(i as f64, j as f64 * 0.5));
        assert_eq!(reverse_rows(&reverse_rows(&m)), m);
    }

    #[test]
    fn residual_zero_for_zero_data() {
        let g = make_grid(1.0, 16).unwrap();
        let sk = sample_kernel(&KernelFunction::Zero, &g).unwrap();
        let d = kernel_residual(&CMatrix::zeros(17, 17), &sk).unwrap();
        assert_eq!(d.pde_residual, 0.0);
        assert_eq!(d.bc0_defect, 0.0);
        assert!(kernel_residual(&CMatrix::zeros(3, 3), &sk).is_err());
    }

    #[test]
    fn csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(1.0, 8).unwrap();
        let s = synthesize_kernel(&sample_kernel(&KernelFunction::Constant(c(0.5)), &g).unwrap(), 4).unwrap();
        s.write_csv(dir.path()).unwrap();
        let k = std::fs::read_to_string(dir.path().join("kstar.csv")).unwrap();
        assert_eq!(k.lines().count(), 1 + 81);
        assert!(k.starts_with("i,j,re,im\n"));
        let d = std::fs::read_to_string(dir.path().join("kstar_diagnostics.csv")).unwrap();
        assert!(d.starts_with("pde_residual,bc0_defect,bcL_defect\n"));
    }
}
