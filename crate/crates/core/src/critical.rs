//! Critical curves `U₀`, `U_π`, `U*`, band edges and the dual labelling
//! (lower/upper edge versus internal/forbidden).

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::smooth::{Bands, LocalBands};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CurveKind {
    U0,
    Upi,
    Ustar,
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::U0 => "U0",
            CurveKind::Upi => "Upi",
            CurveKind::Ustar => "Ustar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveLabel {
    Lower,
    Upper,
    Internal,
    Forbidden,
    /// Exactly at a tangency, where two labels meet.
    Boundary,
    /// `t₂ = 0`: `U*` does not exist.
    Undefined,
}

impl CurveLabel {
    pub fn name(&self) -> &'static str {
        match self {
            CurveLabel::Lower => "lower",
            CurveLabel::Upper => "upper",
            CurveLabel::Internal => "internal",
            CurveLabel::Forbidden => "forbidden",
            CurveLabel::Boundary => "boundary",
            CurveLabel::Undefined => "undefined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QStarTag {
    Real,
    Complex,
    Boundary,
}

/// Critical energies and labels at a single `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoint<R> {
    pub m: R,
    pub u0: R,
    pub upi: R,
    pub ustar: R,
    pub cos_qstar: R,
    pub tag: QStarTag,
    pub label0: CurveLabel,
    pub label_pi: CurveLabel,
    pub label_star: CurveLabel,
}

impl<R: Real> CriticalPoint<R> {
    pub fn value(&self, c: CurveKind) -> R {
        match c {
            CurveKind::U0 => self.u0,
            CurveKind::Upi => self.upi,
            CurveKind::Ustar => self.ustar,
        }
    }

    pub fn label(&self, c: CurveKind) -> CurveLabel {
        match c {
            CurveKind::U0 => self.label0,
            CurveKind::Upi => self.label_pi,
            CurveKind::Ustar => self.label_star,
        }
    }
}

/// Relative width of the `|cos q*| = 1` boundary tag.
pub const BOUNDARY_TOL: f64 = 1e-12;

fn tag_of<R: Real>(rho: R) -> QStarTag {
    let d = rho.abs() - R::one();
    if d.abs() <= lit(BOUNDARY_TOL) {
        QStarTag::Boundary
    } else if d < R::zero() {
        QStarTag::Real
    } else {
        QStarTag::Complex
    }
}

/// Critical energies and labels from local band values.
pub fn critical_point<R: Real>(l: &LocalBands<R>, m: R) -> CriticalPoint<R> {
    let two: R = lit(2.0);
    let four: R = lit(4.0);
    let (w, t1, t2) = (l.w(), l.t1(), l.t2());
    let u0 = w + two * t1 + two * t2;
    let upi = w - two * t1 + two * t2;
    if t2 == R::zero() {
        let (lo0, lopi) = if u0 <= upi {
            (CurveLabel::Lower, CurveLabel::Upper)
        } else {
            (CurveLabel::Upper, CurveLabel::Lower)
        };
        return CriticalPoint {
            m,
            u0,
            upi,
            ustar: R::nan(),
            cos_qstar: R::nan(),
            tag: QStarTag::Complex,
            label0: lo0,
            label_pi: lopi,
            label_star: CurveLabel::Undefined,
        };
    }
    let rho = -t1 / (four * t2);
    let ustar = w - two * t2 - t1 * t1 / (four * t2);
    let tag = tag_of(rho);
    let (label0, label_pi, label_star) = match tag {
        QStarTag::Complex => {
            if u0 <= upi {
                (CurveLabel::Lower, CurveLabel::Upper, CurveLabel::Forbidden)
            } else {
                (CurveLabel::Upper, CurveLabel::Lower, CurveLabel::Forbidden)
            }
        }
        QStarTag::Real => {
            // U* is the extremum of the parabola in cos q on [−1, 1].
            if t2 > R::zero() {
                if u0 > upi {
                    (CurveLabel::Upper, CurveLabel::Internal, CurveLabel::Lower)
                } else {
                    (CurveLabel::Internal, CurveLabel::Upper, CurveLabel::Lower)
                }
            } else if u0 <= upi {
                (CurveLabel::Lower, CurveLabel::Internal, CurveLabel::Upper)
            } else {
                (CurveLabel::Internal, CurveLabel::Lower, CurveLabel::Upper)
            }
        }
        QStarTag::Boundary => {
            // U* touches U₀ (ρ = 1) or U_π (ρ = −1).
            let touching_zero = rho > R::zero();
            let other_low = if touching_zero { upi } else { u0 };
            let touch = if touching_zero { u0 } else { upi };
            let other_label = if other_low < touch {
                CurveLabel::Lower
            } else {
                CurveLabel::Upper
            };
            if touching_zero {
                (CurveLabel::Boundary, other_label, CurveLabel::Boundary)
            } else {
                (other_label, CurveLabel::Boundary, CurveLabel::Boundary)
            }
        }
    };
    CriticalPoint {
        m,
        u0,
        upi,
        ustar,
        cos_qstar: rho,
        tag,
        label0,
        label_pi,
        label_star,
    }
}

/// `cos q* = −t₁/4t₂` and whether `q*` is real.
pub fn q_star<R: Real, B: Bands<R>>(cc: &B, m: R) -> Result<(R, QStarTag)> {
    let l = cc.local(m)?;
    if l.t2() == R::zero() {
        return Err(Error::FallbackThreeTerm { m: m.as_f64() });
    }
    let rho = -l.t1() / (lit::<R>(4.0) * l.t2());
    Ok((rho, tag_of(rho)))
}

/// Sampled critical curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalCurves<R> {
    pub points: Vec<CriticalPoint<R>>,
    /// Tangencies inside the sampled range.
    pub tangencies: Vec<Tangency<R>>,
    /// Grid points where `U*` is undefined (`t₂ = 0`).
    pub undefined_at: Vec<R>,
}

pub fn critical_curves<R: Real, B: Bands<R>>(cc: &B, grid: &[R]) -> Result<CriticalCurves<R>> {
    let mut points = Vec::with_capacity(grid.len());
    let mut undefined_at = Vec::new();
    for &m in grid {
        let p = critical_point(&cc.local(m)?, m);
        if p.label_star == CurveLabel::Undefined {
            undefined_at.push(m);
        }
        points.push(p);
    }
    let tangencies = match (grid.first(), grid.last()) {
        (Some(&a), Some(&b)) if grid.len() > 1 => tangency_points(cc, a.min(b), a.max(b))?,
        _ => Vec::new(),
    };
    Ok(CriticalCurves {
        points,
        tangencies,
        undefined_at,
    })
}

/// A point where `U*` touches `U₀` (`t₁ + 4t₂ = 0`) or `U_π` (`t₁ − 4t₂ = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tangency<R> {
    pub m: R,
    pub curve: CurveKind,
    /// `|U_curve − U*|` at `m`.
    pub gap: R,
    /// `d(U_curve − U*)/dm` at `m`.
    pub gap_slope: R,
}

fn bisect<R: Real, F: Fn(R) -> Result<R>>(f: &F, mut a: R, mut b: R, fa: R, tol: R) -> Result<R> {
    let mut fa = fa;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mid = (a + b) * lit(0.5);
        let fm = f(mid)?;
        if fm == R::zero() {
            return Ok(mid);
        }
        if (fm < R::zero()) == (fa < R::zero()) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok((a + b) * lit(0.5))
}

/// Roots of `t₁ ± 4t₂` in `[lo, hi]`, bracketed on a unit grid and refined
/// by bisection to 1e−10.
pub fn tangency_points<R: Real, B: Bands<R>>(cc: &B, lo: R, hi: R) -> Result<Vec<Tangency<R>>> {
    let (dlo, dhi) = cc.domain();
    let lo = lo.max(dlo);
    let hi = hi.min(dhi);
    let mut out = Vec::new();
    if !(hi > lo) {
        return Ok(out);
    }
    let n = ((hi - lo).ceil().as_f64() as usize).max(1);
    let four: R = lit(4.0);
    for (curve, sign) in [(CurveKind::U0, R::one()), (CurveKind::Upi, -R::one())] {
        let g = |m: R| -> Result<R> {
            let l = cc.local(m)?;
            Ok(l.t1() + sign * four * l.t2())
        };
        let mut a = lo;
        let mut ga = g(a)?;
        for i in 1..=n {
            let b = if i == n { hi } else { lo + lit(i as f64) };
            let gb = g(b)?;
            let root = if ga == R::zero() {
                Some(a)
            } else if (ga < R::zero()) != (gb < R::zero()) && gb != R::zero() {
                Some(bisect(&g, a, b, ga, lit(1e-10))?)
            } else {
                None
            };
            if let Some(m) = root {
                if out.iter().all(|t: &Tangency<R>| t.curve != curve || (t.m - m).abs() > lit(1e-9)) {
                    out.push(tangency_at(cc, m, curve)?);
                }
            }
            a = b;
            ga = gb;
        }
        if ga == R::zero() && out.iter().all(|t| t.curve != curve || (t.m - a).abs() > lit(1e-9)) {
            out.push(tangency_at(cc, a, curve)?);
        }
    }
    out.sort_by(|x, y| x.m.partial_cmp(&y.m).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}

fn tangency_at<R: Real, B: Bands<R>>(cc: &B, m: R, curve: CurveKind) -> Result<Tangency<R>> {
    let l = cc.local(m)?;
    let p = critical_point(&l, m);
    let gap = (p.value(curve) - p.ustar).abs();
    // U₀ − U* = (t₁ + 4t₂)²/4t₂ (and U_π − U* = (t₁ − 4t₂)²/4t₂), whose
    // derivative is proportional to t₁ ± 4t₂.
    let two: R = lit(2.0);
    let four: R = lit(4.0);
    let s = if curve == CurveKind::U0 { R::one() } else { -R::one() };
    let x = l.t1() + s * four * l.t2();
    let dx = l.dt[1] + s * four * l.dt[2];
    let gap_slope = two * x * dx / (four * l.t2()) - x * x * l.dt[2] / (four * l.t2() * l.t2());
    Ok(Tangency { m, curve, gap, gap_slope })
}

/// Band extrema at `m` and where in `q` they are attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandEdges<R> {
    pub lower: R,
    pub upper: R,
    pub q_lower: R,
    pub q_upper: R,
    pub lower_curve: CurveKind,
    pub upper_curve: CurveKind,
}

pub fn band_edges_local<R: Real>(l: &LocalBands<R>, m: R) -> Result<BandEdges<R>> {
    if l.t2() == R::zero() {
        return Err(Error::FallbackThreeTerm { m: m.as_f64() });
    }
    let p = critical_point(l, m);
    let qstar = p.cos_qstar.max(-R::one()).min(R::one()).acos();
    let q_of = |c: CurveKind| match c {
        CurveKind::U0 => R::zero(),
        CurveKind::Upi => R::PI(),
        CurveKind::Ustar => qstar,
    };
    let mut lower_curve = CurveKind::U0;
    let mut upper_curve = CurveKind::Upi;
    for c in [CurveKind::U0, CurveKind::Upi, CurveKind::Ustar] {
        match p.label(c) {
            CurveLabel::Lower => lower_curve = c,
            CurveLabel::Upper => upper_curve = c,
            _ => {}
        }
    }
    if p.tag == QStarTag::Boundary {
        // Degenerate: the two touching curves coincide; use direct extrema of U₀, U_π.
        if p.u0 <= p.upi {
            lower_curve = CurveKind::U0;
            upper_curve = CurveKind::Upi;
        } else {
            lower_curve = CurveKind::Upi;
            upper_curve = CurveKind::U0;
        }
    }
    Ok(BandEdges {
        lower: p.value(lower_curve),
        upper: p.value(upper_curve),
        q_lower: q_of(lower_curve),
        q_upper: q_of(upper_curve),
        lower_curve,
        upper_curve,
    })
}

pub fn band_edges<R: Real, B: Bands<R>>(cc: &B, m: R) -> Result<BandEdges<R>> {
    band_edges_local(&cc.local(m)?, m)
}

/// CSV `m,U0,Upi,Ustar,U0_minus_Ustar,label0,labelstar,cosqstar`.
pub fn write_curves_csv<R: Real, W: Write>(curves: &CriticalCurves<R>, mut out: W) -> Result<()> {
    writeln!(out, "m,U0,Upi,Ustar,U0_minus_Ustar,label0,labelstar,cosqstar")?;
    for p in &curves.points {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
            p.m.as_f64(),
            p.u0.as_f64(),
            p.upi.as_f64(),
            p.ustar.as_f64(),
            (p.u0 - p.ustar).as_f64(),
            p.label0.name(),
            p.label_star.name(),
            p.cos_qstar.as_f64()
        )?;
    }
    Ok(())
}
