//! Integral kernels `g(x, y)`: analytic descriptors, grid samples with
//! one-sided diagonal traces, and the predicates used to classify them.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::grid::GridSpec;
use crate::{CMatrix, Error, Result, C64};

pub type ScalarFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// Descriptor of a kernel `g(x, y)`.
#[derive(Clone)]
pub enum KernelFunction {
    Zero,
    Constant(C64),
    /// `g(x, y) = g(x)`.
    XOnly(ScalarFn),
    /// `g(x, y) = f(x) q(y)`.
    Separable { f: ScalarFn, q: ScalarFn },
    /// Grid samples plus the traces `g₋(x,x)` (from `x > y`) and `g₊(x,x)`
    /// (from `x < y`) on the diagonal.
    Tabulated { values: CMatrix, diag_minus: Vec<C64>, diag_plus: Vec<C64> },
    /// Inner kernel zeroed on `x <= y`.
    VolterraMasked(Box<KernelFunction>),
}

impl KernelFunction {
    pub fn x_only(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        KernelFunction::XOnly(Arc::new(f))
    }

    pub fn separable(
        f: impl Fn(f64) -> C64 + Send + Sync + 'static,
        q: impl Fn(f64) -> C64 + Send + Sync + 'static,
    ) -> Self {
        KernelFunction::Separable { f: Arc::new(f), q: Arc::new(q) }
    }

    pub fn volterra(inner: KernelFunction) -> Self {
        KernelFunction::VolterraMasked(Box::new(inner))
    }

    fn is_x_only(&self) -> bool {
        matches!(self, KernelFunction::Zero | KernelFunction::Constant(_) | KernelFunction::XOnly(_))
    }
}

impl fmt::Debug for KernelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFunction::Zero => write!(f, "Zero"),
            KernelFunction::Constant(c) => write!(f, "Constant({c})"),
            KernelFunction::XOnly(_) => write!(f, "XOnly(..)"),
            KernelFunction::Separable { .. } => write!(f, "Separable(..)"),
            KernelFunction::Tabulated { values, .. } => {
                write!(f, "Tabulated({}x{})", values.nrows(), values.ncols())
            }
            KernelFunction::VolterraMasked(inner) => write!(f, "VolterraMasked({inner:?})"),
        }
    }
}

/// Kernel sampled on the grid: `values[(i, j)] ≈ g(x_i, x_j)`.
#[derive(Debug, Clone)]
pub struct SampledKernel {
    values: CMatrix,
    diag_minus: Vec<C64>,
    diag_plus: Vec<C64>,
    grid: GridSpec,
    x_only: bool,
}

impl SampledKernel {
    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn diag_minus(&self) -> &[C64] {
        &self.diag_minus
    }

    pub fn diag_plus(&self) -> &[C64] {
        &self.diag_plus
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// True when `g(x, y)` does not depend on `y`.
    pub fn is_x_only(&self) -> bool {
        self.x_only
    }

    /// The profile `g(x_i)` of an x-only kernel.
    pub fn x_profile(&self) -> Result<Vec<C64>> {
        if !self.x_only {
            return Err(Error::UnsupportedKernel(
                "operation requires a kernel of the form g(x, y) = g(x)".into(),
            ));
        }
        Ok(self.values.column(0).iter().copied().collect())
    }

    /// Samples used inside quadratures: off-diagonal values unchanged, the
    /// diagonal replaced by the mean of the two one-sided traces, which keeps
    /// the trapezoid second order across a diagonal jump.
    pub fn quadrature_matrix(&self) -> CMatrix {
        let mut m = self.values.clone();
        for i in 0..m.nrows() {
            m[(i, i)] = (self.diag_minus[i] + self.diag_plus[i]) * 0.5;
        }
        m
    }

    pub fn scaled(&self, c: C64) -> SampledKernel {
        SampledKernel {
            values: self.values.map(|v| v * c),
            diag_minus: self.diag_minus.iter().map(|v| v * c).collect(),
            diag_plus: self.diag_plus.iter().map(|v| v * c).collect(),
            grid: self.grid,
            x_only: self.x_only,
        }
    }

    /// `true` when every sample has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }
}

pub fn sample_kernel(kf: &KernelFunction, grid: &GridSpec) -> Result<SampledKernel> {
    let np = grid.nodes_len();
    let xs = grid.nodes();
    let (values, diag_minus, diag_plus) = match kf {
        KernelFunction::Zero => {
            let z = C64::new(0.0, 0.0);
            (CMatrix::from_element(np, np, z), vec![z; np], vec![z; np])
        }
        KernelFunction::Constant(c) => (CMatrix::from_element(np, np, *c), vec![*c; np], vec![*c; np]),
        KernelFunction::XOnly(g) => {
            let col: Vec<C64> = xs.iter().map(|&x| g(x)).collect();
            let values = CMatrix::from_fn(np, np, |i, _| col[i]);
            (values, col.clone(), col)
        }
        KernelFunction::Separable { f, q } => {
            let fx: Vec<C64> = xs.iter().map(|&x| f(x)).collect();
            let qy: Vec<C64> = xs.iter().map(|&y| q(y)).collect();
            let values = CMatrix::from_fn(np, np, |i, j| fx[i] * qy[j]);
            let diag: Vec<C64> = (0..np).map(|i| fx[i] * qy[i]).collect();
            (values, diag.clone(), diag)
        }
        KernelFunction::Tabulated { values, diag_minus, diag_plus } => {
            if values.nrows() != np || values.ncols() != np {
                return Err(Error::invalid(format!(
                    "tabulated kernel is {}x{}, grid needs {np}x{np}",
                    values.nrows(),
                    values.ncols()
                )));
            }
            if diag_minus.len() != np || diag_plus.len() != np {
                return Err(Error::invalid("diagonal traces must have n + 1 entries"));
            }
            (values.clone(), diag_minus.clone(), diag_plus.clone())
        }
        KernelFunction::VolterraMasked(inner) => {
            let s = sample_kernel(inner, grid)?;
            let z = C64::new(0.0, 0.0);
            let values = CMatrix::from_fn(np, np, |i, j| if i > j { s.values[(i, j)] } else { z });
            (values, s.diag_minus, vec![z; np])
        }
    };
    let x_only = kf.is_x_only() || rows_constant(&values);
    Ok(SampledKernel { values, diag_minus, diag_plus, grid: *grid, x_only })
}

fn rows_constant(m: &CMatrix) -> bool {
    (0..m.nrows()).all(|i| (1..m.ncols()).all(|j| m[(i, j)] == m[(i, 0)]))
}

/// Real x-only kernel
/// `g(x) = a0 + (2/L) Σ_{k=1}^{N} [a0 cos(2kπx/L) + (2kπ/L) sin(2kπx/L)]`.
///
/// On `L = 1` the Fattorini criterion fails at `k = ±1, …, ±N`. For other
/// lengths `∫ g = a0 L` while `∫ g cos(2kπx/L) = a0`, so the cosine identity
/// and with it the failure only survive when `a0 = 0`.
pub fn fattorini_counterexample(a0: f64, modes: usize, length: f64) -> Result<KernelFunction> {
    if modes < 1 {
        return Err(Error::invalid("counterexample needs at least one mode"));
    }
    if length.is_nan() || length <= 0.0 {
        return Err(Error::invalid(format!("domain length must be positive, got {length}")));
    }
    Ok(KernelFunction::x_only(move |x| {
        let mut g = a0;
        for k in 1..=modes {
            let w = 2.0 * k as f64 * PI / length;
            g += 2.0 / length * (a0 * (w * x).cos() + w * (w * x).sin());
        }
        C64::new(g, 0.0)
    }))
}

/// Discrete `L²((0,L)²)` norm by tensor trapezoid.
pub fn l2_norm(sk: &SampledKernel) -> f64 {
    let rule = sk.grid.trapezoid();
    let w = rule.weights();
    let np = w.len();
    let mut acc = 0.0;
    for j in 0..np {
        for i in 0..np {
            acc += w[i] * w[j] * sk.values[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// `‖g‖ < √2 / L`, the small-gain sufficient condition for controllability.
pub fn small_gain(sk: &SampledKernel) -> bool {
    l2_norm(sk) < 2f64.sqrt() / sk.grid.length()
}

/// `max_{i <= j} |g(x_i, x_j)| <= tol`.
pub fn is_volterra(sk: &SampledKernel, tol: f64) -> bool {
    let np = sk.grid.nodes_len();
    (0..np).all(|j| (0..=j).all(|i| sk.values[(i, j)].norm() <= tol))
}

/// Discrete `H¹` seminorm over the two triangles separately (difference
/// quotients never straddle the diagonal). Used only as a regularity warning.
pub fn piecewise_h1_seminorm(sk: &SampledKernel) -> f64 {
    let h = sk.grid.h();
    let np = sk.grid.nodes_len();
    let side = |i: usize, j: usize| (i as i64 - j as i64).signum();
    let mut acc = 0.0;
    for i in 0..np {
        for j in 0..np {
            if i + 1 < np && side(i, j) == side(i + 1, j) && side(i, j) != 0 {
                acc += ((sk.values[(i + 1, j)] - sk.values[(i, j)]) / h).norm_sqr() * h * h;
            }
            if j + 1 < np && side(i, j) == side(i, j + 1) && side(i, j) != 0 {
                acc += ((sk.values[(i, j + 1)] - sk.values[(i, j)]) / h).norm_sqr() * h * h;
            }
        }
    }
    acc.sqrt()
}

/// Read a tabulated kernel: `i,j,re,im` rows, plus an optional trace sidecar
/// `i,re_minus,im_minus,re_plus,im_plus`. Without a sidecar both traces are
/// the diagonal samples.
pub fn read_tabulated(path: &Path, sidecar: Option<&Path>, grid: &GridSpec) -> Result<KernelFunction> {
    let np = grid.nodes_len();
    let mut values = CMatrix::from_element(np, np, C64::new(0.0, 0.0));
    let mut seen = vec![false; np * np];
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(rdr.headers()?, &["i", "j", "re", "im"], path)?;
    for rec in rdr.records() {
        let rec = rec?;
        let i = parse_index(&rec, 0, np)?;
        let j = parse_index(&rec, 1, np)?;
        values[(i, j)] = C64::new(parse_f64(&rec, 2)?, parse_f64(&rec, 3)?);
        seen[i * np + j] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid(format!(
            "{}: expected all {np}x{np} entries",
            path.display()
        )));
    }
    let mut diag_minus: Vec<C64> = (0..np).map(|i| values[(i, i)]).collect();
    let mut diag_plus = diag_minus.clone();
    if let Some(side) = sidecar {
        let mut rdr = csv::Reader::from_path(side)?;
        check_header(rdr.headers()?, &["i", "re_minus", "im_minus", "re_plus", "im_plus"], side)?;
        for rec in rdr.records() {
            let rec = rec?;
            let i = parse_index(&rec, 0, np)?;
            diag_minus[i] = C64::new(parse_f64(&rec, 1)?, parse_f64(&rec, 2)?);
            diag_plus[i] = C64::new(parse_f64(&rec, 3)?, parse_f64(&rec, 4)?);
        }
    }
    Ok(KernelFunction::Tabulated { values, diag_minus, diag_plus })
}

fn check_header(h: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    let got: Vec<&str> = h.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::invalid(format!(
            "{}: header {:?}, expected {:?}",
            path.display(),
            got,
            expected
        )));
    }
    Ok(())
}

fn parse_index(rec: &csv::StringRecord, col: usize, np: usize) -> Result<usize> {
    let s = rec.get(col).ok_or_else(|| Error::invalid("short CSV row"))?;
    let i: usize = s.trim().parse().map_err(|_| Error::invalid(format!("bad index {s:?}")))?;
    if i >= np {
        return Err(Error::invalid(format!("index {i} out of range for {np} nodes")));
    }
    Ok(i)
}

fn parse_f64(rec: &csv::StringRecord, col: usize) -> Result<f64> {
    let s = rec.get(col).ok_or_else(|| Error::invalid("short CSV row"))?;
    s.trim().parse().map_err(|_| Error::invalid(format!("bad number {s:?}")))
}
