use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fredstab::feedback::h_equation_residual;
use fredstab::{
    feedback_kernel_h, make_grid, sample_kernel, simulate_closed_loop, simulate_dirichlet,
    stabilization_metric, synthesize_kernel, CMatrix, ControlSignal, FeedbackKernel,
    KernelFunction, SampledKernel, C64,
};

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn build(kf: &KernelFunction, n: usize, order: usize) -> (SampledKernel, FeedbackKernel) {
    let grid = make_grid(1.0, n).unwrap();
    let sk = sample_kernel(kf, &grid).unwrap();
    let syn = synthesize_kernel(&sk, order).unwrap();
    let fk = feedback_kernel_h(&syn, None).unwrap();
    (sk, fk)
}

#[test]
fn h_residual_decreases_under_refinement() {
    let kf = KernelFunction::Constant(c(0.5));
    let (ska, a) = build(&kf, 128, 16);
    let (skb, b) = build(&kf, 256, 32);
    let ra = h_equation_residual(&a.h_field, &ska).unwrap();
    let rb = h_equation_residual(&b.h_field, &skb).unwrap();
    assert!(ra.pde_residual.is_finite());
    assert!(rb.pde_residual * 2.0 <= ra.pde_residual, "{} {}", ra.pde_residual, rb.pde_residual);
    assert!(rb.y0_defect * 2.0 <= ra.y0_defect, "{ra:?} {rb:?}");
    assert!(rb.yl_defect * 2.0 <= ra.yl_defect, "{ra:?} {rb:?}");
}

#[test]
fn random_h_field_is_far_from_solution() {
    let (sk, fk) = build(&KernelFunction::Constant(c(0.5)), 128, 16);
    let good = h_equation_residual(&fk.h_field, &sk).unwrap().pde_residual;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let np = fk.h_field.nrows();
    let scale = fk.h_field.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for _ in 0..3 {
        let random = CMatrix::from_fn(np, np, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
        });
        let bad = h_equation_residual(&random, &sk).unwrap().pde_residual;
        assert!(bad >= 10.0 * good, "{bad} {good}");
    }
}

#[test]
fn refinement_improves_stabilization() {
    let kernels = [
        KernelFunction::Constant(c(0.5)),
        KernelFunction::Constant(C64::new(0.3, 0.2)),
        KernelFunction::x_only(|x| c(0.5 * (1.0 + x))),
    ];
    for kf in &kernels {
        let metric = |n, order| {
            let (sk, fk) = build(kf, n, order);
            let u0: Vec<C64> = sk.grid().nodes().iter().map(|x| c((PI * x).sin() + 0.5 * x + 0.2)).collect();
            stabilization_metric(&simulate_closed_loop(&sk, &u0, &fk.law, 2.0).unwrap()).unwrap()
        };
        let coarse = metric(64, 8);
        let fine = metric(128, 16);
        assert!(fine <= 1.1 * coarse, "{kf:?}: {coarse} -> {fine}");
        assert!(coarse < 0.05, "{kf:?}: {coarse}");
    }
}

#[test]
fn target_system_vanishes_after_l() {
    let grid = make_grid(1.0, 48).unwrap();
    let sk = sample_kernel(&KernelFunction::Zero, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w0: Vec<C64> = (0..=48).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let traj = simulate_dirichlet(&sk, &w0, &ControlSignal::zeros(97, grid.dt()), 2.0, None).unwrap();
    for m in 49..=96 {
        assert!(traj.state(m).iter().all(|v| *v == c(0.0)), "m={m}");
    }
    // w(t_m, x_i) = 0 once x_i + t_m > L
    for m in 0..=48 {
        for i in (49 - m)..=48 {
            assert_eq!(traj.state(m)[i], c(0.0));
        }
    }
}
