//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfgsConfig {
    #[serde(default = "history")]
    pub history: usize,
    #[serde(default = "max_iter")]
    pub max_iterations: usize,
    /// Stop once `‖g‖∞` falls below this.
    #[serde(default = "tol")]
    pub tolerance: f64,
    #[serde(default = "c1")]
    pub c1: f64,
    #[serde(default = "c2")]
    pub c2: f64,
    #[serde(default = "ls_evals")]
    pub max_line_search: usize,
    #[serde(default)]
    pub seed: u64,
}

fn history() -> usize {
    50
}
fn max_iter() -> usize {
    1000
}
fn tol() -> f64 {
    1e-8
}
fn c1() -> f64 {
    1e-4
}
fn c2() -> f64 {
    0.9
}
fn ls_evals() -> usize {
    25
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: history(),
            max_iterations: max_iter(),
            tolerance: tol(),
            c1: c1(),
            c2: c2(),
            max_line_search: ls_evals(),
            seed: 0,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.history == 0 || self.max_line_search == 0 {
            return Err(Error::Config("history and line-search budget must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Why the minimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub termination: Termination,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| yi + a * xi).collect()
}

/// Curvature pairs `(s, y, 1/yᵀs)`.
#[derive(Debug, Clone, Default)]
pub struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl History {
    pub fn new(capacity: usize) -> Self {
        History {
            pairs: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores the pair unless the curvature `yᵀs` is not positive.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let ys = dot(&y, &s);
        if !(ys > 1e-300) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / ys));
        true
    }

    /// Two-loop recursion: approximate `H·g` with `H₀ = (sᵀy/yᵀy)·I`.
    pub fn apply_inverse(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; self.pairs.len()];
        for (i, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            alpha[i] = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= alpha[i] * yi);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for (i, (s, y, rho)) in self.pairs.iter().enumerate() {
            let beta = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (alpha[i] - beta) * si);
        }
        q
    }
}

/// Result of a line search: step, point, value and gradient there.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub evaluations: usize,
}

fn check_finite(f: f64, g: &[f64], iteration: usize) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::NonFinite { iteration, value: f });
    }
    if let Some(v) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { iteration, value: *v });
    }
    Ok(())
}

/// Cubic interpolation minimizer of the bracket, safeguarded to its interior.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    let (lo, hi) = (a.min(b), a.max(b));
    let mid = 0.5 * (a + b);
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    if !t.is_finite() {
        return mid;
    }
    let margin = 0.1 * (hi - lo);
    t.clamp(lo + margin, hi - margin)
}

/// Finds `α` satisfying the strong Wolfe conditions along `d` from `x`,
/// starting at `alpha0`.
#[allow(clippy::too_many_arguments)]
pub fn strong_wolfe_search<F>(
    fg: &mut F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    config: &LbfgsConfig,
    iteration: usize,
) -> Result<LineSearchResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dg0 = dot(g0, d);
    if !(dg0 < 0.0) {
        return Err(Error::LineSearch(format!(
            "direction is not a descent direction (gᵀd = {dg0:e})"
        )));
    }
    let (c1, c2) = (config.c1, config.c2);
    let mut evals = 0;
    let mut eval = |alpha: f64, evals: &mut usize| -> Result<(Vec<f64>, f64, Vec<f64>, f64)> {
        let xa = axpy(alpha, d, x);
        let (f, g) = fg(&xa)?;
        *evals += 1;
        check_finite(f, &g, iteration)?;
        let dg = dot(&g, d);
        Ok((xa, f, g, dg))
    };

    let accept = |alpha: f64, xa: Vec<f64>, f: f64, g: Vec<f64>, evals: usize| LineSearchResult {
        alpha,
        x: xa,
        f,
        grad: g,
        evaluations: evals,
    };

    let (mut a_prev, mut f_prev, mut dg_prev) = (0.0, f0, dg0);
    let mut alpha = alpha0;
    let bracket;
    loop {
        if evals >= config.max_line_search {
            return Err(Error::LineSearch(format!("no acceptable step within {evals} evaluations")));
        }
        let (xa, fa, ga, dga) = eval(alpha, &mut evals)?;
        if fa > f0 + c1 * alpha * dg0 || (evals > 1 && fa >= f_prev) {
            bracket = (a_prev, f_prev, dg_prev, alpha, fa, dga);
            break;
        }
        if dga.abs() <= -c2 * dg0 {
            return Ok(accept(alpha, xa, fa, ga, evals));
        }
        if dga >= 0.0 {
            bracket = (alpha, fa, dga, a_prev, f_prev, dg_prev);
            break;
        }
        a_prev = alpha;
        f_prev = fa;
        dg_prev = dga;
        alpha *= 2.0;
    }

    // zoom: `lo` always satisfies sufficient decrease and has the lower f
    let (mut lo, mut f_lo, mut dg_lo, mut hi, mut f_hi, mut dg_hi) = bracket;
    loop {
        if evals >= config.max_line_search {
            return Err(Error::LineSearch(format!("zoom did not converge within {evals} evaluations")));
        }
        if (hi - lo).abs() <= 1e-16 * lo.abs().max(1.0) {
            return Err(Error::LineSearch("bracket collapsed".into()));
        }
        let a = cubic_min(lo, f_lo, dg_lo, hi, f_hi, dg_hi);
        let (xa, fa, ga, dga) = eval(a, &mut evals)?;
        if fa > f0 + c1 * a * dg0 || fa >= f_lo {
            hi = a;
            f_hi = fa;
            dg_hi = dga;
        } else {
            if dga.abs() <= -c2 * dg0 {
                return Ok(accept(a, xa, fa, ga, evals));
            }
            if dga * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
                dg_hi = dg_lo;
            }
            lo = a;
            f_lo = fa;
            dg_lo = dga;
        }
    }
}

/// Minimizes `fg` from `x0`. `on_iter` sees every accepted iterate and may
/// write checkpoints.
pub fn minimize<F, C>(mut fg: F, x0: Vec<f64>, config: &LbfgsConfig, mut on_iter: C) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(&TraceEntry, &[f64]) -> Result<()>,
{
    config.validate()?;
    let mut x = x0;
    let (mut f, mut g) = fg(&x)?;
    check_finite(f, &g, 0)?;
    let mut evaluations = 1;
    let mut trace = vec![TraceEntry {
        iter: 0,
        f,
        grad_norm: inf_norm(&g),
        step: 0.0,
        evaluations,
    }];
    on_iter(&trace[0], &x)?;
    let mut hist = History::new(config.history);
    let mut termination = Termination::MaxIterations;
    for iter in 1..=config.max_iterations {
        if inf_norm(&g) < config.tolerance {
            termination = Termination::Converged;
            break;
        }
        let mut d: Vec<f64> = hist.apply_inverse(&g).into_iter().map(|v| -v).collect();
        if !(dot(&d, &g) < 0.0) {
            hist = History::new(config.history);
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if hist.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };
        let ls = match strong_wolfe_search(&mut fg, &x, f, &g, &d, alpha0, config, iter) {
            Ok(ls) => ls,
            Err(Error::LineSearch(msg)) if !hist.is_empty() => {
                log::debug!("iteration {iter}: {msg}; restarting from steepest descent");
                hist = History::new(config.history);
                let d: Vec<f64> = g.iter().map(|v| -v).collect();
                let a0 = (1.0 / inf_norm(&g)).min(1.0);
                match strong_wolfe_search(&mut fg, &x, f, &g, &d, a0, config, iter) {
                    Ok(ls) => ls,
                    Err(Error::LineSearch(msg)) => {
                        log::warn!("line search failed at iteration {iter}: {msg}");
                        termination = Termination::LineSearchFailed;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::LineSearch(msg)) => {
                log::warn!("line search failed at iteration {iter}: {msg}");
                termination = Termination::LineSearchFailed;
                break;
            }
            Err(e) => return Err(e),
        };
        evaluations += ls.evaluations;
        let s: Vec<f64> = ls.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ls.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        hist.push(s, y);
        x = ls.x;
        f = ls.f;
        g = ls.grad;
        let entry = TraceEntry {
            iter,
            f,
            grad_norm: inf_norm(&g),
            step: ls.alpha,
            evaluations,
        };
        on_iter(&entry, &x)?;
        trace.push(entry);
    }
    if termination == Termination::MaxIterations && inf_norm(&g) < config.tolerance {
        termination = Termination::Converged;
    }
    Ok(Minimum {
        x,
        f,
        grad: g,
        trace,
        termination,
        evaluations,
    })
}

pub fn write_trace_csv(trace: &[TraceEntry], path: &Path) -> Result<()> {
    let mut out = String::from("iter,f,grad_norm,step,evaluations\n");
    for t in trace {
        out.push_str(&format!("{},{:e},{:e},{:e},{}\n", t.iter, t.f, t.grad_norm, t.step, t.evaluations));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint")
    ));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
