//! Characteristic marching for `u_t - u_x = ∫ g(x,y) u(t,y) dy + s(t,x)`.
//!
//! With `Δt = h` the transport part moves exactly one node per step, so the
//! only discretization error comes from the integral term, handled by one
//! predictor-corrector (trapezoid in time) pass along each characteristic.
//!
//! A mismatch between `u0(L)` and the boundary value at `t = 0⁺` travels
//! along `x = L - t` with constant size `J`. Nodes on that line keep the
//! average of the two one-sided values, which keeps the quadratures second
//! order; the endpoints report the one-sided value that lies in the domain.

use std::path::Path;

use nalgebra::DVector;

use crate::csvio::{fmt_g17, CsvOut};
use crate::grid::GridSpec;
use crate::kernel::SampledKernel;
use crate::{CMatrix, Error, Result, C64};

/// Boundary samples `U_m` at `t_m = m·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    samples: Vec<C64>,
    dt: f64,
}

impl ControlSignal {
    pub fn new(samples: Vec<C64>, dt: f64) -> Self {
        Self { samples, dt }
    }

    pub fn zeros(len: usize, dt: f64) -> Self {
        Self::new(vec![C64::new(0.0, 0.0); len], dt)
    }

    pub fn constant(value: C64, len: usize, dt: f64) -> Self {
        Self::new(vec![value; len], dt)
    }

    /// Samples `f(t_m)` for `m = 0..=steps`.
    pub fn from_fn(grid: &GridSpec, steps: usize, f: impl Fn(f64) -> C64) -> Self {
        let dt = grid.dt();
        Self::new((0..=steps).map(|m| f(m as f64 * dt)).collect(), dt)
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|m| m as f64 * self.dt).collect()
    }

    /// Discrete `L²(0,T)` norm (trapezoid in time).
    pub fn l2_norm(&self) -> f64 {
        let m = self.samples.len();
        if m < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (i, v) in self.samples.iter().enumerate() {
            let w = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
            acc += w * v.norm_sqr();
        }
        (acc * self.dt).sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["t", "re", "im"])?;
        for (m, v) in self.samples.iter().enumerate() {
            out.row([fmt_g17(m as f64 * self.dt), fmt_g17(v.re), fmt_g17(v.im)])?;
        }
        out.finish()
    }
}

/// Source samples `s(t_m, x_i)`, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerm {
    rows: Vec<Vec<C64>>,
}

impl SourceTerm {
    pub fn new(rows: Vec<Vec<C64>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<C64>] {
        &self.rows
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self::new(self.rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect())
    }

    fn check(&self, steps: usize, nodes: usize) -> Result<()> {
        if self.rows.len() != steps + 1 || self.rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::invalid(format!(
                "source term must be {} x {}, got {} rows",
                steps + 1,
                nodes,
                self.rows.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Closure {
    Dirichlet,
    Periodic,
    Feedback,
}

impl Closure {
    /// Whether the jump line sits on node `n` and on node `0` at step `m`.
    fn jump_nodes(self, m: usize, n: usize) -> (bool, bool) {
        if m == 0 {
            return (true, false);
        }
        match self {
            Closure::Periodic => {
                let hit = m.is_multiple_of(n);
                (hit, hit)
            }
            _ => (false, m == n),
        }
    }
}

/// States `u(t_m, x_i)` for `m = 0..=M`.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    grid: GridSpec,
    states: Vec<Vec<C64>>,
    corner_jump: C64,
    closure: Closure,
}

impl StateTrajectory {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn states(&self) -> &[Vec<C64>] {
        &self.states
    }

    pub fn state(&self, m: usize) -> &[C64] {
        &self.states[m]
    }

    pub fn final_state(&self) -> &[C64] {
        self.states.last().expect("trajectory has an initial state")
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.grid.dt()
    }

    /// `u0(L)` minus the boundary value at `t = 0⁺`.
    pub fn corner_jump(&self) -> C64 {
        self.corner_jump
    }

    /// Discrete `L²` norm of every state.
    pub fn norms(&self) -> Vec<f64> {
        let rule = self.grid.trapezoid();
        self.states.iter().map(|s| rule.l2_norm(s)).collect()
    }

    /// Rows ordered by `(m, i)`: `t,x,re,im`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = CsvOut::create(path, &["t", "x", "re", "im"])?;
        let xs = self.grid.nodes();
        for (m, s) in self.states.iter().enumerate() {
            let t = fmt_g17(m as f64 * self.grid.dt());
            for (x, v) in xs.iter().zip(s) {
                out.row([t.clone(), fmt_g17(*x), fmt_g17(v.re), fmt_g17(v.im)])?;
            }
        }
        out.finish()
    }
}

fn check_inputs(grid: &GridSpec, u0: &[C64], horizon: f64, control_len: usize) -> Result<usize> {
    let steps = grid.steps_for(horizon)?;
    if u0.len() != grid.nodes_len() {
        return Err(Error::invalid(format!(
            "initial state has {} values, grid has {} nodes",
            u0.len(),
            grid.nodes_len()
        )));
    }
    if control_len != steps + 1 {
        return Err(Error::invalid(format!(
            "control needs {} samples for {} steps, got {control_len}",
            steps + 1,
            steps
        )));
    }
    Ok(steps)
}

fn check_dt(grid: &GridSpec, control: &ControlSignal) -> Result<()> {
    if (control.dt - grid.dt()).abs() > 1e-12 * grid.dt() {
        return Err(Error::invalid(format!(
            "control step {} differs from grid step {}",
            control.dt,
            grid.dt()
        )));
    }
    Ok(())
}

/// Dirichlet-controlled run: `u(t, L) = U(t)`.
pub fn simulate_dirichlet(
    sk: &SampledKernel,
    u0: &[C64],
    control: &ControlSignal,
    horizon: f64,
    source: Option<&SourceTerm>,
) -> Result<StateTrajectory> {
    let grid = *sk.grid();
    let steps = check_inputs(&grid, u0, horizon, control.len())?;
    check_dt(&grid, control)?;
    if let Some(s) = source {
        s.check(steps, grid.nodes_len())?;
    }
    Ok(march(sk, u0, steps, Closure::Dirichlet, control.samples(), source))
}

/// Periodic-jump run: `u(t, L) - u(t, 0) = Ũ(t)`.
pub fn simulate_periodic(
    sk: &SampledKernel,
    u0: &[C64],
    control: &ControlSignal,
    horizon: f64,
) -> Result<StateTrajectory> {
    let grid = *sk.grid();
    let steps = check_inputs(&grid, u0, horizon, control.len())?;
    check_dt(&grid, control)?;
    Ok(march(sk, u0, steps, Closure::Periodic, control.samples(), None))
}

/// Feedback run: `u(t, L) = Σ γ_j u(t, x_j)`.
pub(crate) fn simulate_feedback(
    sk: &SampledKernel,
    u0: &[C64],
    gamma: &[C64],
    horizon: f64,
) -> Result<StateTrajectory> {
    let grid = *sk.grid();
    let steps = grid.steps_for(horizon)?;
    check_inputs(&grid, u0, horizon, steps + 1)?;
    if gamma.len() != grid.nodes_len() {
        return Err(Error::invalid("feedback vector length differs from the node count"));
    }
    Ok(march(sk, u0, steps, Closure::Feedback, gamma, None))
}

/// The boundary trace `u(t_m, 0)`. Where the corner jump reaches `x = 0`
/// the value arriving along the characteristic is returned.
pub fn trace_at_zero(traj: &StateTrajectory) -> ControlSignal {
    let n = traj.grid.cells();
    let samples = traj
        .states
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let (_, at0) = traj.closure.jump_nodes(m, n);
            if at0 {
                s[0] + traj.corner_jump
            } else {
                s[0]
            }
        })
        .collect();
    ControlSignal::new(samples, traj.grid.dt())
}

/// Periodic run followed by the equivalent Dirichlet control
/// `U(t) = ũ(t, 0) + Ũ(t)`.
pub fn dirichlet_from_periodic(
    sk: &SampledKernel,
    u0: &[C64],
    control: &ControlSignal,
    horizon: f64,
) -> Result<(ControlSignal, StateTrajectory)> {
    let traj = simulate_periodic(sk, u0, control, horizon)?;
    let trace = trace_at_zero(&traj);
    let samples = trace.samples.iter().zip(control.samples()).map(|(a, b)| a + b).collect();
    Ok((ControlSignal::new(samples, control.dt), traj))
}

/// `F_j = Σ_y G[j][y] w_y P_y + s_j` for every node.
fn integral_term(g: &CMatrix, w: &[f64], p: &[C64], src: Option<&[C64]>, out: &mut [C64]) {
    let wp = DVector::from_iterator(w.len(), p.iter().zip(w).map(|(v, wi)| v * *wi));
    let gv = g * wp;
    for (j, o) in out.iter_mut().enumerate() {
        *o = gv[j] + src.map_or(C64::new(0.0, 0.0), |s| s[j]);
    }
}

fn dot_row(g: &CMatrix, row: usize, w: &[f64], p: &[C64]) -> C64 {
    p.iter().zip(w).enumerate().map(|(y, (v, wi))| g[(row, y)] * v * *wi).sum()
}

fn march(
    sk: &SampledKernel,
    u0: &[C64],
    steps: usize,
    closure: Closure,
    bc: &[C64],
    source: Option<&SourceTerm>,
) -> StateTrajectory {
    let grid = *sk.grid();
    let n = grid.cells();
    let np = n + 1;
    let h = grid.h();
    let g = sk.quadrature_matrix();
    let rule = grid.trapezoid();
    let w = rule.weights();
    let zero = C64::new(0.0, 0.0);
    let src = |m: usize| source.map(|s| s.rows[m].as_slice());
    let src0 = |m: usize| src(m).map_or(zero, |s| s[0]);

    let gamma_dot = |p: &[C64]| -> C64 { bc.iter().zip(p).map(|(a, b)| a * b).sum() };
    let b0 = match closure {
        Closure::Dirichlet => bc[0],
        Closure::Periodic => u0[0] + bc[0],
        Closure::Feedback => gamma_dot(u0),
    };
    let jump = u0[n] - b0;
    let half = jump * 0.5;
    let present = |r: &[C64], m: usize| -> Vec<C64> {
        let mut p = r.to_vec();
        let (jn, j0) = closure.jump_nodes(m, n);
        if jn {
            p[n] += half;
        }
        if j0 {
            p[0] -= half;
        }
        p
    };

    let mut r = u0.to_vec();
    r[n] -= half;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(u0.to_vec());

    let mut f = vec![zero; np];
    let mut ft = vec![zero; np];
    let mut base = vec![zero; n];
    let mut pp = vec![zero; np];
    for m in 0..steps {
        let p = present(&r, m);
        integral_term(&g, w, &p, src(m), &mut f);
        let (jn1, j01) = closure.jump_nodes(m + 1, n);

        for i in 0..n {
            pp[i] = r[i + 1] + f[i + 1] * h;
            base[i] = r[i + 1] + f[i + 1] * (0.5 * h);
        }
        if j01 {
            pp[0] -= half;
        }
        pp[n] = zero;
        match closure {
            Closure::Dirichlet => pp[n] = bc[m + 1],
            Closure::Periodic => {
                // node n depends on node 0's corrector through the quadrature
                let delta = if j01 { half } else { zero };
                let a = base[0] + (dot_row(&g, 0, w, &pp) + src0(m + 1)) * (0.5 * h);
                let c = g[(0, n)] * (0.5 * h * w[n]);
                let r0 = (a + c * (delta + bc[m + 1])) / (1.0 - c);
                pp[n] = r0 + delta + bc[m + 1];
            }
            Closure::Feedback => pp[n] = gamma_dot(&pp) / (1.0 - bc[n]),
        }
        integral_term(&g, w, &pp, src(m + 1), &mut ft);

        let mut next = vec![zero; np];
        for i in 0..n {
            next[i] = base[i] + ft[i] * (0.5 * h);
        }
        next[n] = match closure {
            Closure::Dirichlet => bc[m + 1],
            Closure::Periodic => {
                let mut v = next[0] + bc[m + 1];
                if j01 {
                    v += half;
                }
                if jn1 {
                    v -= half;
                }
                v
            }
            Closure::Feedback => {
                let mut q = next.clone();
                if j01 {
                    q[0] -= half;
                }
                q[n] = zero;
                gamma_dot(&q) / (1.0 - bc[n])
            }
        };
        r = next;
        states.push(present(&r, m + 1));
    }
    StateTrajectory { grid, states, corner_jump: jump, closure }
}
