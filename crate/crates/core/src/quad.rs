//! Adaptive Simpson quadrature for real- and complex-valued integrands.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::scalar::{lit, Amplitude, Real};

/// Relative/absolute tolerances and recursion limit.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig<R> {
    pub rel_tol: R,
    pub abs_tol: R,
    pub max_depth: u32,
    /// Integrand evaluations allowed per call.
    pub max_evals: usize,
}

impl<R: Real> Default for QuadConfig<R> {
    fn default() -> Self {
        Self {
            rel_tol: lit(1e-10),
            abs_tol: lit(1e-14),
            max_depth: 48,
            max_evals: 1 << 16,
        }
    }
}

struct Panel<V> {
    a: f64,
    b: f64,
    fa: V,
    fm: V,
    fb: V,
    whole: V,
}

/// Integrate `f` over `[a, b]`. Reversed limits negate the result.
pub fn adaptive_simpson<R, V, F>(f: F, a: R, b: R, cfg: &QuadConfig<R>) -> Result<V>
where
    R: Real,
    V: Amplitude<R>,
    F: Fn(R) -> Result<V>,
{
    if a == b {
        return Ok(V::zero());
    }
    let (lo, hi, flip) = if a < b { (a, b, false) } else { (b, a, true) };
    let m = (lo + hi) * lit(0.5);
    let (fa, fm, fb) = (f(lo)?, f(m)?, f(hi)?);
    let h = hi - lo;
    let whole = (fa + fm * lit(4.0) + fb) * (h / lit(6.0));
    // Global tolerance from a coarse magnitude estimate; keeps the
    // recursion from chasing relative accuracy on tiny sub-panels.
    let scale = (fa.magnitude() + fm.magnitude() * lit(4.0) + fb.magnitude()) * (h / lit(6.0));
    let tol = (cfg.rel_tol * scale).max(cfg.abs_tol);
    let panel = Panel {
        a: lo.as_f64(),
        b: hi.as_f64(),
        fa,
        fm,
        fb,
        whole,
    };
    let budget = Cell::new(cfg.max_evals);
    let v = recurse(&f, panel, tol, cfg.max_depth, &budget)?;
    Ok(if flip { v * (-R::one()) } else { v })
}

fn recurse<R, V, F>(f: &F, p: Panel<V>, tol: R, depth: u32, budget: &Cell<usize>) -> Result<V>
where
    R: Real,
    V: Amplitude<R>,
    F: Fn(R) -> Result<V>,
{
    let a: R = lit(p.a);
    let b: R = lit(p.b);
    let m = (a + b) * lit(0.5);
    if budget.get() < 2 {
        return Err(Error::NoConvergence(format!(
            "adaptive Simpson on [{}, {}] exhausted its evaluation budget",
            p.a, p.b
        )));
    }
    budget.set(budget.get() - 2);
    let lm = (a + m) * lit(0.5);
    let rm = (m + b) * lit(0.5);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let h = b - a;
    let left = (p.fa + flm * lit(4.0) + p.fm) * (h / lit(12.0));
    let right = (p.fm + frm * lit(4.0) + p.fb) * (h / lit(12.0));
    let diff = left + right - p.whole;
    if depth == 0 || diff.magnitude() <= tol * lit(15.0) || h <= lit::<R>(1e-13) * (a.abs() + b.abs()) {
        if depth == 0 && diff.magnitude() > tol * lit(1e6) {
            return Err(Error::NoConvergence(format!(
                "adaptive Simpson on [{}, {}] (error estimate {})",
                p.a,
                p.b,
                diff.magnitude()
            )));
        }
        return Ok(left + right + diff / lit(15.0));
    }
    let half: R = tol * lit(0.5);
    let l = recurse(
        f,
        Panel { a: p.a, b: m.as_f64(), fa: p.fa, fm: flm, fb: p.fm, whole: left },
        half,
        depth - 1,
        budget,
    )?;
    let r = recurse(
        f,
        Panel { a: m.as_f64(), b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right },
        half,
        depth - 1,
        budget,
    )?;
    Ok(l + r)
}

/// Integrate over `[anchor, x]` where the integrand behaves like
/// `g(anchor) + c·sqrt(|m - anchor|)` near the anchor. The substitution
/// `m = anchor ± u²` makes the integrand smooth in `u`.
pub fn sqrt_endpoint<R, V, F>(f: F, anchor: R, x: R, cfg: &QuadConfig<R>) -> Result<V>
where
    R: Real,
    V: Amplitude<R>,
    F: Fn(R) -> Result<V>,
{
    if x == anchor {
        return Ok(V::zero());
    }
    let s = if x > anchor { R::one() } else { -R::one() };
    let umax = (x - anchor).abs().sqrt();
    adaptive_simpson(
        |u: R| Ok(f(anchor + s * u * u)? * (lit::<R>(2.0) * u * s)),
        R::zero(),
        umax,
        cfg,
    )
}
