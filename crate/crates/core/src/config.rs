//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown keys are an
//! error so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::grid::GridSpec;
use crate::kernel::{fattorini_counterexample, read_tabulated, KernelFunction};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Zero,
    Constant,
    /// `g(x, y) = c x`.
    Linear,
    Counterexample,
    Tabulated,
    /// `c` on `x > y`, zero elsewhere.
    VolterraConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Zero,
    Ones,
    /// `sin(πx/L)`.
    Sine,
    /// `sin(πx/L) + 0.5 x/L + 0.2`.
    Smooth,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub length: f64,
    pub cells: usize,
    pub order: usize,
    pub horizon: f64,
    pub kernel: KernelKind,
    pub kernel_c: C64,
    pub kernel_a0: f64,
    pub kernel_modes: usize,
    pub kernel_file: Option<PathBuf>,
    pub kernel_sidecar: Option<PathBuf>,
    pub u0: InitialKind,
    pub u0_file: Option<PathBuf>,
    pub tol_fattorini: f64,
    pub tol_invert: Option<f64>,
    pub out_dir: PathBuf,
    pub sim_mode: SimMode,
    pub control_value: C64,
    pub convergence_levels: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            length: 1.0,
            cells: 256,
            order: 32,
            horizon: 2.0,
            kernel: KernelKind::Zero,
            kernel_c: C64::new(0.0, 0.0),
            kernel_a0: 1.0,
            kernel_modes: 1,
            kernel_file: None,
            kernel_sidecar: None,
            u0: InitialKind::Smooth,
            u0_file: None,
            tol_fattorini: 1e-3,
            tol_invert: None,
            out_dir: PathBuf::from("out"),
            sim_mode: SimMode::Dirichlet,
            control_value: C64::new(0.0, 0.0),
            convergence_levels: 3,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| cfg_err(format!("{key}: expected a number, got {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| cfg_err(format!("{key}: expected a nonnegative integer, got {v:?}")))
}

/// `re` or `re,im`.
fn parse_complex(key: &str, v: &str) -> Result<C64> {
    match v.split_once(',') {
        Some((re, im)) => Ok(C64::new(parse_f64(key, re.trim())?, parse_f64(key, im.trim())?)),
        None => Ok(C64::new(parse_f64(key, v)?, 0.0)),
    }
}

/// Empty means unset.
fn path_value(base: &Path, v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| base.join(v))
}

fn fmt_complex(c: C64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("{},{}", c.re, c.im)
    }
}

impl Config {
    /// Parse the text of a config file. Relative file paths are resolved
    /// against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        let mut horizon_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "L" => cfg.length = parse_f64(key, value)?,
                "n" => cfg.cells = parse_usize(key, value)?,
                "N" => cfg.order = parse_usize(key, value)?,
                "T" => {
                    cfg.horizon = parse_f64(key, value)?;
                    horizon_set = true;
                }
                "kernel.type" => {
                    cfg.kernel = match value {
                        "zero" => KernelKind::Zero,
                        "constant" => KernelKind::Constant,
                        "linear" => KernelKind::Linear,
                        "counterexample" => KernelKind::Counterexample,
                        "tabulated" => KernelKind::Tabulated,
                        "volterra-constant" => KernelKind::VolterraConstant,
                        other => return Err(cfg_err(format!("unknown kernel.type {other:?}"))),
                    }
                }
                "kernel.c" => cfg.kernel_c = parse_complex(key, value)?,
                "kernel.a0" => cfg.kernel_a0 = parse_f64(key, value)?,
                "kernel.N" => cfg.kernel_modes = parse_usize(key, value)?,
                "kernel.file" => cfg.kernel_file = path_value(base, value),
                "kernel.sidecar" => cfg.kernel_sidecar = path_value(base, value),
                "u0.type" => {
                    cfg.u0 = match value {
                        "zero" => InitialKind::Zero,
                        "ones" => InitialKind::Ones,
                        "sine" => InitialKind::Sine,
                        "smooth" => InitialKind::Smooth,
                        "file" => InitialKind::File,
                        other => return Err(cfg_err(format!("unknown u0.type {other:?}"))),
                    }
                }
                "u0.file" => cfg.u0_file = path_value(base, value),
                "tol.fattorini" => cfg.tol_fattorini = parse_f64(key, value)?,
                "tol.invert" => {
                    cfg.tol_invert = if value == "auto" { None } else { Some(parse_f64(key, value)?) }
                }
                "out.dir" => cfg.out_dir = base.join(value),
                "sim.mode" => {
                    cfg.sim_mode = match value {
                        "dirichlet" => SimMode::Dirichlet,
                        "periodic" => SimMode::Periodic,
                        other => return Err(cfg_err(format!("unknown sim.mode {other:?}"))),
                    }
                }
                "control.value" => cfg.control_value = parse_complex(key, value)?,
                "convergence.levels" => cfg.convergence_levels = parse_usize(key, value)?,
                other => return Err(cfg_err(format!("unknown key {other:?}"))),
            }
        }
        if !horizon_set {
            cfg.horizon = 2.0 * cfg.length;
        }
        if cfg.kernel == KernelKind::Tabulated && cfg.kernel_file.is_none() {
            return Err(cfg_err("kernel.type = tabulated needs kernel.file"));
        }
        if cfg.u0 == InitialKind::File && cfg.u0_file.is_none() {
            return Err(cfg_err("u0.type = file needs u0.file"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn kernel_function(&self, grid: &GridSpec) -> Result<KernelFunction> {
        let c = self.kernel_c;
        Ok(match self.kernel {
            KernelKind::Zero => KernelFunction::Zero,
            KernelKind::Constant => KernelFunction::Constant(c),
            KernelKind::Linear => KernelFunction::x_only(move |x| c * x),
            KernelKind::Counterexample => fattorini_counterexample(self.kernel_a0, self.kernel_modes, self.length)?,
            KernelKind::Tabulated => {
                let file = self.kernel_file.as_deref().expect("checked at parse time");
                read_tabulated(file, self.kernel_sidecar.as_deref(), grid)?
            }
            KernelKind::VolterraConstant => KernelFunction::volterra(KernelFunction::Constant(c)),
        })
    }

    pub fn initial_state(&self, grid: &GridSpec) -> Result<Vec<C64>> {
        let len = grid.length();
        let xs = grid.nodes();
        let real = |f: &dyn Fn(f64) -> f64| xs.iter().map(|x| C64::new(f(*x), 0.0)).collect();
        Ok(match self.u0 {
            InitialKind::Zero => real(&|_| 0.0),
            InitialKind::Ones => real(&|_| 1.0),
            InitialKind::Sine => real(&|x| (PI * x / len).sin()),
            InitialKind::Smooth => real(&|x| (PI * x / len).sin() + 0.5 * x / len + 0.2),
            InitialKind::File => read_state(self.u0_file.as_deref().expect("checked at parse time"), grid)?,
        })
    }

    /// Every effective parameter, one `key=value` per line, sorted by key.
    pub fn resolved(&self) -> String {
        let mut m = BTreeMap::new();
        m.insert("L", format!("{}", self.length));
        m.insert("n", self.cells.to_string());
        m.insert("N", self.order.to_string());
        m.insert("T", format!("{}", self.horizon));
        let kind = match self.kernel {
            KernelKind::Zero => "zero",
            KernelKind::Constant => "constant",
            KernelKind::Linear => "linear",
            KernelKind::Counterexample => "counterexample",
            KernelKind::Tabulated => "tabulated",
            KernelKind::VolterraConstant => "volterra-constant",
        };
        m.insert("kernel.type", kind.into());
        m.insert("kernel.c", fmt_complex(self.kernel_c));
        m.insert("kernel.a0", format!("{}", self.kernel_a0));
        m.insert("kernel.N", self.kernel_modes.to_string());
        m.insert("kernel.file", path_str(&self.kernel_file));
        m.insert("kernel.sidecar", path_str(&self.kernel_sidecar));
        let u0 = match self.u0 {
            InitialKind::Zero => "zero",
            InitialKind::Ones => "ones",
            InitialKind::Sine => "sine",
            InitialKind::Smooth => "smooth",
            InitialKind::File => "file",
        };
        m.insert("u0.type", u0.into());
        m.insert("u0.file", path_str(&self.u0_file));
        m.insert("tol.fattorini", format!("{}", self.tol_fattorini));
        m.insert("tol.invert", self.tol_invert.map_or_else(|| "auto".into(), |t| format!("{t}")));
        m.insert("out.dir", self.out_dir.display().to_string());
        m.insert(
            "sim.mode",
            match self.sim_mode {
                SimMode::Dirichlet => "dirichlet",
                SimMode::Periodic => "periodic",
            }
            .into(),
        );
        m.insert("control.value", fmt_complex(self.control_value));
        m.insert("convergence.levels", self.convergence_levels.to_string());
        let mut s = String::new();
        for (k, v) in m {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("resolved-config"), self.resolved())?;
        Ok(())
    }
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

/// Nodal state from CSV `i,re,im`.
pub fn read_state(path: &Path, grid: &GridSpec) -> Result<Vec<C64>> {
    let np = grid.nodes_len();
    let mut out = vec![None; np];
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["i", "re", "im"] {
        return Err(cfg_err(format!("{}: expected header i,re,im", path.display())));
    }
    for rec in rdr.records() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).map(str::trim).unwrap_or("");
        let i = parse_usize("i", field(0))?;
        if i >= np {
            return Err(cfg_err(format!("{}: node {i} out of range", path.display())));
        }
        out[i] = Some(C64::new(parse_f64("re", field(1))?, parse_f64("im", field(2))?));
    }
    out.into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| cfg_err(format!("{}: expected {np} nodes", path.display())))
}
