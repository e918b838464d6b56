//! Closed loop `u(t, L) = Γu(t)` and the checks of finite-time
//! stabilization.

use std::path::Path;

use crate::csvio::{fmt_g17, CsvOut};
use crate::feedback::{feedback_kernel_h, transform_apply, transform_invert, FeedbackLaw, FredholmOp};
use crate::kernel::{sample_kernel, KernelFunction, SampledKernel};
use crate::synth::SynthesizedKernel;
use crate::transport::{simulate_dirichlet, simulate_feedback, ControlSignal, StateTrajectory};
use crate::{Error, Result, C64};

/// Closed-loop run. The boundary value at each stage solves
/// `b = Γ(state with u_n = b)` exactly.
pub fn simulate_closed_loop(
    sk: &SampledKernel,
    u0: &[C64],
    law: &FeedbackLaw,
    horizon: f64,
) -> Result<StateTrajectory> {
    simulate_feedback(sk, u0, &law.gamma_vector, horizon)
}

/// `max_{t_m >= L} ‖u(t_m)‖ / ‖u0‖`.
pub fn stabilization_metric(traj: &StateTrajectory) -> Result<f64> {
    let grid = traj.grid();
    let n = grid.cells();
    if traj.steps() < n + 1 {
        return Err(Error::HorizonTooShort { horizon: traj.horizon(), required: grid.length() + grid.h() });
    }
    let norms = traj.norms();
    if norms[0] == 0.0 {
        return Ok(0.0);
    }
    Ok(norms[n..].iter().fold(0.0, |a: f64, b| a.max(*b)) / norms[0])
}

/// `max_{t_m <= L} ‖P w(t_m) - u(t_m)‖ / ‖u0‖` where `w` is the target
/// system (free transport, zero inflow) from `w0 = P⁻¹ u0` and `u` is the
/// given closed-loop trajectory.
pub fn transform_discrepancy(op: &FredholmOp, traj: &StateTrajectory, tol: Option<f64>) -> Result<f64> {
    let grid = *traj.grid();
    let n = grid.cells();
    if traj.steps() < n {
        return Err(Error::HorizonTooShort { horizon: traj.horizon(), required: grid.length() });
    }
    let u0 = traj.state(0);
    let rule = grid.trapezoid();
    let scale = rule.l2_norm(u0);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let w0 = transform_invert(op, u0, tol)?;
    let free = sample_kernel(&KernelFunction::Zero, &grid)?;
    let w = simulate_dirichlet(&free, &w0, &ControlSignal::zeros(n + 1, grid.dt()), grid.length(), None)?;
    let mut worst = 0.0f64;
    for m in 0..=n {
        let pw = transform_apply(op, w.state(m))?;
        let d: Vec<C64> = pw.iter().zip(traj.state(m)).map(|(a, b)| a - b).collect();
        worst = worst.max(rule.l2_norm(&d));
    }
    Ok(worst / scale)
}

/// Build the transformation from `k*`, run the closed loop over `[0, L]` and
/// compare it with the transformed target system.
pub fn transform_consistency(sk: &SampledKernel, kstar: &SynthesizedKernel, u0: &[C64]) -> Result<f64> {
    let grid = sk.grid();
    let fk = feedback_kernel_h(kstar, None)?;
    let traj = simulate_closed_loop(sk, u0, &fk.law, grid.length())?;
    transform_discrepancy(&fk.op, &traj, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub n: usize,
    pub order: usize,
    pub metric: f64,
    pub sigma_min: f64,
    pub pde_residual: f64,
}

/// Writes `n,N,metric,sigma_min,pde_residual`.
pub fn write_metric_report(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &["n", "N", "metric", "sigma_min", "pde_residual"])?;
    for r in rows {
        out.row([
            r.n.to_string(),
            r.order.to_string(),
            fmt_g17(r.metric),
            fmt_g17(r.sigma_min),
            fmt_g17(r.pde_residual),
        ])?;
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CMatrix;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn free_transport_clears_after_l() {
        let g = make_grid(1.0, 32).unwrap();
        let sk = sample_kernel(&KernelFunction::Zero, &g).unwrap();
        let u0: Vec<C64> = g.nodes().iter().map(|x| c((PI * x).sin() + 0.3)).collect();
        let traj = simulate_closed_loop(&sk, &u0, &FeedbackLaw::zero(&g), 2.0).unwrap();
        assert_eq!(stabilization_metric(&traj).unwrap(), 0.0);
        for m in 0..=32 {
            for i in 0..=32 - m {
                if i + m < 32 {
                    assert_eq!(traj.state(m)[i], u0[i + m]);
                }
            }
        }
    }

    #[test]
    fn zero_data_any_law() {
        let g = make_grid(1.0, 16).unwrap();
        let sk = sample_kernel(&KernelFunction::Constant(c(0.5)), &g).unwrap();
        let law = FeedbackLaw { hrow: vec![c(1.0); 17], gamma_vector: vec![c(0.1); 17] };
        let traj = simulate_closed_loop(&sk, &[c(0.0); 17], &law, 2.0).unwrap();
        assert!(traj.states().iter().flatten().all(|v| *v == c(0.0)));
        assert_eq!(stabilization_metric(&traj).unwrap(), 0.0);
    }

    #[test]
    fn uncontrolled_state_persists() {
        let g = make_grid(1.0, 64).unwrap();
        let sk = sample_kernel(&KernelFunction::Constant(c(1.0)), &g).unwrap();
        let u0: Vec<C64> = g.nodes().iter().map(|x| c((PI * x).sin())).collect();
        let traj = simulate_closed_loop(&sk, &u0, &FeedbackLaw::zero(&g), 2.0).unwrap();
        assert!(stabilization_metric(&traj).unwrap() > 0.1);
    }

    #[test]
    fn short_horizon_is_rejected() {
        let g = make_grid(1.0, 16).unwrap();
        let sk = sample_kernel(&KernelFunction::Zero, &g).unwrap();
        let traj = simulate_closed_loop(&sk, &[c(1.0); 17], &FeedbackLaw::zero(&g), 1.0).unwrap();
        assert!(matches!(stabilization_metric(&traj), Err(Error::HorizonTooShort { .. })));
    }

    #[test]
    fn closed_loop_is_linear() {
        let g = make_grid(1.0, 32).unwrap();
        let sk = sample_kernel(&KernelFunction::Constant(C64::new(0.5, 0.2)), &g).unwrap();
        let law = FeedbackLaw { hrow: vec![c(0.0); 33], gamma_vector: (0..33).map(|j| C64::new(0.01 * j as f64, -0.02)).collect() };
        let a: Vec<C64> = g.nodes().iter().map(|x| c(x.cos())).collect();
        let b: Vec<C64> = g.nodes().iter().map(|x| C64::new(0.0, x * x)).collect();
        let alpha = C64::new(1.5, -0.5);
        let mix: Vec<C64> = a.iter().zip(&b).map(|(p, q)| p * alpha + q).collect();
        let ta = simulate_closed_loop(&sk, &a, &law, 1.5).unwrap();
        let tb = simulate_closed_loop(&sk, &b, &law, 1.5).unwrap();
        let tm = simulate_closed_loop(&sk, &mix, &law, 1.5).unwrap();
        for m in 0..=48 {
            for i in 0..=32 {
                let want = ta.state(m)[i] * alpha + tb.state(m)[i];
                assert!((tm.state(m)[i] - want).norm() < 1e-12 * (1.0 + want.norm()), "m={m} i={i} {} {}", tm.state(m)[i], want);
            }
        }
    }

    #[test]
    fn consistency_trivial_case() {
        let g = make_grid(1.0, 16).unwrap();
        let sk = sample_kernel(&KernelFunction::Zero, &g).unwrap();
        let u0: Vec<C64> = g.nodes().iter().map(|x| c(1.0 + x)).collect();
        let kstar = SynthesizedKernel::from_samples(CMatrix::zeros(17, 17), &sk).unwrap();
        let d = transform_consistency(&sk, &kstar, &u0).unwrap();
        assert!(d < 1e-15);
    }

    #[test]
    fn consistency_fails_for_unrelated_kernel() {
        let g = make_grid(1.0, 64).unwrap();
        let sk = sample_kernel(&KernelFunction::Constant(c(0.5)), &g).unwrap();
        let u0: Vec<C64> = g.nodes().iter().map(|x| c((PI * x).sin() + 0.5 * x + 0.2)).collect();
        let samples = CMatrix::from_fn(65, 65, |i, j| c(0.3 * ((i * 7 + j * 3) % 5) as f64 - 0.6));
        let kstar = SynthesizedKernel::from_samples(samples, &sk).unwrap();
        let d = transform_consistency(&sk, &kstar, &u0).unwrap();
        assert!(d > 0.05, "{d}");
        let fk = feedback_kernel_h(&kstar, None).unwrap();
        assert!(fk.sigma_min > 0.0);
    }

    #[test]
    fn metric_report_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metric_report(&p, &[MetricRow { n: 8, order: 2, metric: 0.5, sigma_min: 1.0, pde_residual: 0.0 }]).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "n,N,metric,sigma_min,pde_residual\n8,2,0.5,1,0\n");
    }
}
