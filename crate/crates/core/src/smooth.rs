//! Continuum extensions `t_α(m)` of the discrete bands, frame changes that
//! bring any sign pattern to the canonical `t₁ < 0`, `t₂ > 0` case, and the
//! quasiclassicality check.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PentadiagonalOperator;
use crate::scalar::{lit, Real};

/// Natural cubic spline through equally spaced knots.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline<R> {
    x0: R,
    h: R,
    y: Vec<R>,
    m2: Vec<R>,
}

impl<R: Real> CubicSpline<R> {
    pub fn new(x0: R, h: R, y: Vec<R>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::TooFewRows { need: 2, got: y.len() });
        }
        if !(h > R::zero()) {
            return Err(Error::InvalidArgument(format!("knot spacing must be positive, got {h}")));
        }
        let n = y.len();
        let mut m2 = vec![R::zero(); n];
        if n > 2 {
            // Thomas algorithm for M_{i-1} + 4 M_i + M_{i+1} = 6 Δ²y_i / h², M_0 = M_{n-1} = 0.
            let k = n - 2;
            let six_h2 = lit::<R>(6.0) / (h * h);
            let four: R = lit(4.0);
            let mut c = vec![R::zero(); k];
            let mut d = vec![R::zero(); k];
            for i in 0..k {
                let rhs = (y[i + 2] - y[i + 1] - y[i + 1] + y[i]) * six_h2;
                let denom = if i == 0 { four } else { four - c[i - 1] };
                c[i] = R::one() / denom;
                d[i] = if i == 0 { rhs / denom } else { (rhs - d[i - 1]) / denom };
            }
            m2[k] = d[k - 1];
            for i in (0..k - 1).rev() {
                m2[i + 1] = d[i] - c[i] * m2[i + 2];
            }
        }
        Ok(Self { x0, h, y, m2 })
    }

    pub fn lo(&self) -> R {
        self.x0
    }

    pub fn hi(&self) -> R {
        self.x0 + self.h * lit((self.y.len() - 1) as f64)
    }

    /// Value and first two derivatives at `x` (clamped to the knot range).
    pub fn eval3(&self, x: R) -> [R; 3] {
        let n = self.y.len();
        let s = ((x - self.x0) / self.h).max(R::zero());
        let i = (s.floor().as_f64() as usize).min(n - 2);
        let t = (s - lit(i as f64)).min(R::one());
        let u = R::one() - t;
        let (y0, y1, a, b) = (self.y[i], self.y[i + 1], self.m2[i], self.m2[i + 1]);
        let h = self.h;
        let six: R = lit(6.0);
        let three: R = lit(3.0);
        let v = u * y0 + t * y1 + h * h / six * ((u * u * u - u) * a + (t * t * t - t) * b);
        let d = (y1 - y0) / h + h / six * (-(three * u * u - R::one()) * a + (three * t * t - R::one()) * b);
        let dd = u * a + t * b;
        [v, d, dd]
    }
}

/// Band values and their first two `m`-derivatives at one point.
/// Index 0, 1, 2 is `w`, `t₁`, `t₂`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LocalBands<R> {
    pub t: [R; 3],
    pub dt: [R; 3],
    pub ddt: [R; 3],
}

impl<R: Real> LocalBands<R> {
    pub fn constant(w: R, t1: R, t2: R) -> Self {
        Self {
            t: [w, t1, t2],
            dt: [R::zero(); 3],
            ddt: [R::zero(); 3],
        }
    }

    pub fn w(&self) -> R {
        self.t[0]
    }

    pub fn t1(&self) -> R {
        self.t[1]
    }

    pub fn t2(&self) -> R {
        self.t[2]
    }
}

/// Smooth band functions on an interval with a large parameter `J`.
pub trait Bands<R: Real> {
    fn domain(&self) -> (R, R);
    fn local(&self, m: R) -> Result<LocalBands<R>>;
    fn large_parameter(&self) -> R;

    fn check_range(&self, m: R) -> Result<()> {
        let (lo, hi) = self.domain();
        let slack: R = lit(1e-9);
        if !(m >= lo - slack && m <= hi + slack) {
            return Err(Error::OutOfRange {
                m: m.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        Ok(())
    }
}

impl<R: Real, B: Bands<R> + ?Sized> Bands<R> for &B {
    fn domain(&self) -> (R, R) {
        (**self).domain()
    }
    fn local(&self, m: R) -> Result<LocalBands<R>> {
        (**self).local(m)
    }
    fn large_parameter(&self) -> R {
        (**self).large_parameter()
    }
}

/// Spline extension of a pentadiagonal operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumCoefficients<R> {
    splines: [CubicSpline<R>; 3],
    j: R,
}

/// Spline through the midpoint averages `t_α(m) = (t_{m,m+α} + t_{m,m−α})/2`.
///
/// Knots are the rows for which both couplings lie inside the matrix,
/// `m ∈ [m_min + 2, m_max − 2]`.
pub fn extend_coefficients<R: Real>(op: &PentadiagonalOperator<R>, j: R) -> Result<ContinuumCoefficients<R>> {
    if op.len() < 5 {
        return Err(Error::TooFewRows { need: 5, got: op.len() });
    }
    if !(j > R::zero() && j.is_finite()) {
        return Err(Error::InvalidArgument(format!("large parameter must be positive, got {j}")));
    }
    let n = op.len();
    let half: R = lit(0.5);
    let ks = 2..n - 2;
    let w: Vec<R> = ks.clone().map(|k| op.diag()[k]).collect();
    let t1: Vec<R> = ks.clone().map(|k| (op.off1()[k] + op.off1()[k - 1]) * half).collect();
    let t2: Vec<R> = ks.clone().map(|k| (op.off2()[k] + op.off2()[k - 2]) * half).collect();
    for (i, k) in ks.enumerate() {
        if !(w[i].is_finite() && t1[i].is_finite() && t2[i].is_finite()) {
            return Err(Error::NonFinite(op.m(k).as_f64()));
        }
    }
    let x0 = op.m(2);
    Ok(ContinuumCoefficients {
        splines: [
            CubicSpline::new(x0, R::one(), w)?,
            CubicSpline::new(x0, R::one(), t1)?,
            CubicSpline::new(x0, R::one(), t2)?,
        ],
        j,
    })
}

impl<R: Real> Bands<R> for ContinuumCoefficients<R> {
    fn domain(&self) -> (R, R) {
        (self.splines[0].lo(), self.splines[0].hi())
    }

    fn local(&self, m: R) -> Result<LocalBands<R>> {
        self.check_range(m)?;
        let mut out = LocalBands::default();
        for a in 0..3 {
            let [v, d, dd] = self.splines[a].eval3(m);
            out.t[a] = v;
            out.dt[a] = d;
            out.ddt[a] = dd;
        }
        Ok(out)
    }

    fn large_parameter(&self) -> R {
        self.j
    }
}

/// `d^order t_α / dm^order` at `m`.
pub fn eval_coefficient<R: Real, B: Bands<R>>(cc: &B, alpha: usize, m: R, order: usize) -> Result<R> {
    if alpha > 2 || order > 2 {
        return Err(Error::InvalidArgument(format!("alpha = {alpha}, order = {order}")));
    }
    let l = cc.local(m)?;
    Ok(match order {
        0 => l.t[alpha],
        1 => l.dt[alpha],
        _ => l.ddt[alpha],
    })
}

/// Closed-form bands, mainly for tests and synthetic studies.
pub struct AnalyticBands<R, F> {
    pub lo: R,
    pub hi: R,
    pub j: R,
    pub f: F,
}

impl<R: Real, F: Fn(R) -> LocalBands<R>> Bands<R> for AnalyticBands<R, F> {
    fn domain(&self) -> (R, R) {
        (self.lo, self.hi)
    }
    fn local(&self, m: R) -> Result<LocalBands<R>> {
        self.check_range(m)?;
        Ok((self.f)(m))
    }
    fn large_parameter(&self) -> R {
        self.j
    }
}

/// Sign changes that map a local band pattern onto `t₁ ≤ 0`, `t₂ > 0`.
///
/// `negate` sends `T → −T` (and `E → −E`); `gauge` applies
/// `C_m → (−1)^m C_m` after the negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Frame {
    pub negate: bool,
    pub gauge: bool,
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        negate: false,
        gauge: false,
    };

    pub fn detect<R: Real>(t1: R, t2: R) -> Frame {
        let negate = t2 < R::zero();
        let t1n = if negate { -t1 } else { t1 };
        Frame {
            negate,
            gauge: t1n > R::zero(),
        }
    }

    /// Wavevectors in the original model are those of the canonical frame
    /// shifted by π exactly when the gauge is applied; turning-point names
    /// then carry a bar.
    pub fn barred(&self) -> bool {
        self.gauge
    }

    pub fn energy<R: Real>(&self, e: R) -> R {
        if self.negate {
            -e
        } else {
            e
        }
    }

    pub fn bands<R: Real>(&self, l: LocalBands<R>) -> LocalBands<R> {
        let s = if self.negate { -R::one() } else { R::one() };
        let g = if self.gauge { -R::one() } else { R::one() };
        let f = [s, s * g, s];
        let mut out = l;
        for a in 0..3 {
            out.t[a] = l.t[a] * f[a];
            out.dt[a] = l.dt[a] * f[a];
            out.ddt[a] = l.ddt[a] * f[a];
        }
        out
    }
}

/// Bands seen through a [`Frame`].
pub struct Framed<B> {
    pub inner: B,
    pub frame: Frame,
}

impl<R: Real, B: Bands<R>> Bands<R> for Framed<B> {
    fn domain(&self) -> (R, R) {
        self.inner.domain()
    }
    fn local(&self, m: R) -> Result<LocalBands<R>> {
        Ok(self.frame.bands(self.inner.local(m)?))
    }
    fn large_parameter(&self) -> R {
        self.inner.large_parameter()
    }
}

/// Bands reflected about `center`: `t′(μ) = t(2·center − μ)`.
pub struct Mirror<B, R> {
    pub inner: B,
    pub center: R,
}

impl<R: Real, B: Bands<R>> Bands<R> for Mirror<B, R> {
    fn domain(&self) -> (R, R) {
        let (lo, hi) = self.inner.domain();
        let c2 = self.center + self.center;
        (c2 - hi, c2 - lo)
    }
    fn local(&self, m: R) -> Result<LocalBands<R>> {
        let mut l = self.inner.local(self.center + self.center - m)?;
        for a in 0..3 {
            l.dt[a] = -l.dt[a];
        }
        Ok(l)
    }
    fn large_parameter(&self) -> R {
        self.inner.large_parameter()
    }
}

/// Normalized derivative suprema of the continuum bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiclassicalityReport {
    /// `sup |ṫ_α|·J/|t_α|` per α.
    pub first: [f64; 3],
    /// `sup |ẗ_α|·J²/|t_α|` per α.
    pub second: [f64; 3],
    /// Location of each supremum of `first`.
    pub worst_m_first: [f64; 3],
    pub worst_m_second: [f64; 3],
    pub threshold: f64,
    pub pass: bool,
}

impl QuasiclassicalityReport {
    /// Location of the largest normalized derivative overall.
    pub fn worst_m(&self) -> f64 {
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for a in 0..3 {
            if self.first[a] > best.0 {
                best = (self.first[a], self.worst_m_first[a]);
            }
            if self.second[a] > best.0 {
                best = (self.second[a], self.worst_m_second[a]);
            }
        }
        best.1
    }
}

pub const DEFAULT_QUASICLASSICAL_THRESHOLD: f64 = 10.0;

/// Suprema on a grid with `samples_per_site` points per unit `m`.
///
/// Each ratio uses `max(|t_α|, 1e−12·max|t_α|)` as denominator, so a band
/// that vanishes identically contributes zero.
pub fn quasiclassicality_report<R: Real, B: Bands<R>>(
    cc: &B,
    threshold: f64,
    samples_per_site: usize,
) -> Result<QuasiclassicalityReport> {
    let (lo, hi) = cc.domain();
    let spp = samples_per_site.max(8);
    let n = ((hi - lo).as_f64() * spp as f64).ceil().max(1.0) as usize;
    let j = cc.large_parameter().as_f64();
    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let m = lo + (hi - lo) * lit(i as f64 / n as f64);
        samples.push((m.as_f64(), cc.local(m)?));
    }
    let mut scale = [0.0f64; 3];
    for (_, l) in &samples {
        for a in 0..3 {
            scale[a] = scale[a].max(l.t[a].as_f64().abs());
        }
    }
    let mut first = [0.0f64; 3];
    let mut second = [0.0f64; 3];
    let mut worst_m_first = [lo.as_f64(); 3];
    let mut worst_m_second = [lo.as_f64(); 3];
    for (m, l) in &samples {
        for a in 0..3 {
            let d1 = l.dt[a].as_f64().abs();
            let d2 = l.ddt[a].as_f64().abs();
            let floor = 1e-12 * scale[a];
            let denom = l.t[a].as_f64().abs().max(floor);
            let (r1, r2) = if denom == 0.0 {
                (
                    if d1 == 0.0 { 0.0 } else { f64::INFINITY },
                    if d2 == 0.0 { 0.0 } else { f64::INFINITY },
                )
            } else {
                (d1 * j / denom, d2 * j * j / denom)
            };
            if r1 > first[a] {
                first[a] = r1;
                worst_m_first[a] = *m;
            }
            if r2 > second[a] {
                second[a] = r2;
                worst_m_second[a] = *m;
            }
        }
    }
    let pass = first.iter().chain(second.iter()).all(|&r| r <= threshold);
    Ok(QuasiclassicalityReport {
        first,
        second,
        worst_m_first,
        worst_m_second,
        threshold,
        pass,
    })
}

/// Residuals of the finite-difference derivative conditions on `t₁`.
///
/// First: `ṫ₁(m) ≈ t_{m,m+1} − t_{m,m−1}`. Second: the symmetric difference
/// `ẗ₁(m) ≈ ½(t_{m+1,m+2} − t_{m,m+1} − t_{m,m−1} + t_{m−1,m−2})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifferenceDiagnostics {
    pub max_first: f64,
    pub max_second: f64,
}

pub fn difference_diagnostics<R: Real>(
    op: &PentadiagonalOperator<R>,
    cc: &ContinuumCoefficients<R>,
) -> Result<DifferenceDiagnostics> {
    let o = op.off1();
    let n = op.len();
    let mut out = DifferenceDiagnostics {
        max_first: 0.0,
        max_second: 0.0,
    };
    for k in 2..n.saturating_sub(2) {
        let l = cc.local(op.m(k))?;
        let d1 = o[k] - o[k - 1];
        let d2 = (o[k + 1] - o[k] - o[k - 1] + o[k - 2]) * lit(0.5);
        out.max_first = out.max_first.max((l.dt[1] - d1).abs().as_f64());
        out.max_second = out.max_second.max((l.ddt[1] - d2).abs().as_f64());
    }
    Ok(out)
}

/// CSV dump `m,t0,t1,t2,dt0,dt1,dt2,ddt0,ddt1,ddt2`.
pub fn write_coefficients_csv<R: Real, B: Bands<R>, W: Write>(cc: &B, grid: &[R], mut out: W) -> Result<()> {
    writeln!(out, "m,t0,t1,t2,dt0,dt1,dt2,ddt0,ddt1,ddt2")?;
    for &m in grid {
        let l = cc.local(m)?;
        write!(out, "{:.16e}", m.as_f64())?;
        for v in l.t.iter().chain(l.dt.iter()).chain(l.ddt.iter()) {
            write!(out, ",{:.16e}", v.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}
