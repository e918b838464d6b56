//! # `fredstab`: finite-time stabilization of integro-differential transport
//!
//! Numerical toolkit for the boundary-controlled transport equation
//!
//! ```text
//! u_t - u_x = ∫_0^L g(x,y) u(t,y) dy,   u(t,L) = U(t),   x ∈ (0,L)
//! ```
//!
//! with a full (Fredholm) integral term. The crate covers the whole
//! stabilization pipeline:
//!
//! - [`transport`]: characteristic marching on a grid with `Δt = Δx`, for the
//!   Dirichlet-controlled, periodic-jump and source-driven variants.
//! - [`spectral`]: spectrum of the periodic adjoint when `g(x,y) = g(x)` and
//!   the Fattorini controllability test.
//! - [`moments`]: the moment problem giving null/steering controls in time `L`.
//! - [`synth`]: the backstepping kernel `k*` and its diagnostics.
//! - [`feedback`]: Nyström discretization of `Id - K`, invertibility and the
//!   feedback functional `Γ`.
//! - [`closed_loop`]: feedback simulation and finite-time stabilization checks.
//!
//! All state is complex valued ([`C64`]).

pub mod closed_loop;
pub mod config;
pub mod csvio;
mod error;
pub mod feedback;
pub mod grid;
pub mod kernel;
pub mod moments;
pub mod spectral;
pub mod synth;
pub mod transport;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix, indexed `(row, column)`.
pub type CMatrix = nalgebra::DMatrix<C64>;

pub use closed_loop::{simulate_closed_loop, stabilization_metric, transform_consistency};
pub use feedback::{assemble_k, feedback_kernel_h, FeedbackKernel, FeedbackLaw, FredholmOp};
pub use grid::{make_grid, quad, GridSpec, QuadratureRule};
pub use kernel::{fattorini_counterexample, sample_kernel, KernelFunction, SampledKernel};
pub use moments::{gram_matrix, moment_targets, solve_moments, verify_moments, MomentProblem};
pub use spectral::{fattorini_check, fattorini_value, spectrum, EigenPair, FattoriniVerdict, Spectrum};
pub use synth::{synthesize_kernel, SynthesizedKernel};
pub use transport::{
    dirichlet_from_periodic, simulate_dirichlet, simulate_periodic, trace_at_zero, ControlSignal,
    SourceTerm, StateTrajectory,
};
