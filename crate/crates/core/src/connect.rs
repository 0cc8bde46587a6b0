//! Connection formulas across turning points.
//!
//! Type B/B̄ points use the Airy central-zone solution
//! `C_m ≈ e^{−σ₂κ_c(m−m_c)}[c₁Ai(ζ) + c₂Bi(ζ)]`, matched to
//!
//! * left: `A/(2√(iσ₁σ₂v)) exp(i∫_{m_c}^m q)` with `q` pure imaginary,
//! * right: `½B[s_a^{−1/2} exp(i∫_{m_c}^m q_a + iΔ) + c.c.]`,
//!
//! with `B = (2 − δ_{σ₁σ₂})A/2` and `Δ = (π/4)(1 + σ₁)σ₂`. Every formula is
//! evaluated in a canonical frame (`t₁ < 0 < t₂`, imaginary-`q` side at
//! `m < m_c`) reached by `T → −T`, `C_m → (−1)^m C_m` and a reflection about
//! `m_c`; results are mapped back to the original lattice.
//!
//! Type A/Ā/A′ points use the linear-turning-point pair
//! `A/(2√|v|) e^{−|∫κ|} ↔ (A/√|v|) cos(|∫q| − π/4)`.

use num_complex::Complex;
use serde::Serialize;

use crate::airy::airy_ai_bi;
use crate::critical::CurveKind;
use crate::eikonal::{cosq_local, kappa_chi_local, velocity_local};
use crate::error::{Error, Result};
use crate::quad::{sqrt_endpoint, QuadConfig};
use crate::scalar::{cplx, from_sign, lit, real, sign_of, Real, C};
use crate::smooth::{Bands, Frame, Framed, LocalBands, Mirror};
use crate::turning::{TurningPoint, TurningPointType};

#[derive(Debug, Clone, Copy)]
pub struct ConnectConfig<R> {
    /// Step of the central difference for `dD/dm` (sites).
    pub discriminant_step: R,
    /// Relative tolerance of the two-route `b₃` check.
    pub identity_tol: R,
    /// Central-zone limit `|m − m_c| ≤ J^{exponent}`.
    pub central_exponent: R,
    pub quad: QuadConfig<R>,
}

impl<R: Real> Default for ConnectConfig<R> {
    fn default() -> Self {
        Self {
            discriminant_step: lit(0.5),
            identity_tol: lit(1e-4),
            central_exponent: lit(0.5),
            quad: QuadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AiryKind {
    Ai,
    Bi,
}

/// `B/A = (2 − δ_{σ₁σ₂})/2`.
pub fn amplitude_ratio(sigma1: i8, sigma2: i8) -> f64 {
    if sigma1 == sigma2 {
        0.5
    } else {
        1.0
    }
}

/// `Δ = (π/4)(1 + σ₁)σ₂`.
pub fn maslov_phase(sigma1: i8, sigma2: i8) -> f64 {
    std::f64::consts::FRAC_PI_4 * (1.0 + sigma1 as f64) * sigma2 as f64
}

/// `Δ̄ = −(π/4)(1 − σ₁)σ₂`, the phase written with the original-frame `s_a`
/// when `t₂ < 0`.
pub fn maslov_phase_bar(sigma1: i8, sigma2: i8) -> f64 {
    -std::f64::consts::FRAC_PI_4 * (1.0 - sigma1 as f64) * sigma2 as f64
}

/// `Bi` when `σ₂ = σ₁`, `2Ai` when `σ₂ = −σ₁`.
pub fn airy_choice(sigma1: i8, sigma2: i8) -> (AiryKind, f64) {
    if sigma1 == sigma2 {
        (AiryKind::Bi, 1.0)
    } else {
        (AiryKind::Ai, 2.0)
    }
}

/// Bands of a turning point seen in the canonical frame.
pub struct CanonicalView<'a, R> {
    pub bands: Box<dyn Bands<R> + 'a>,
    pub frame: Frame,
    pub mirrored: bool,
    pub m_c: R,
    /// Energy in the canonical frame.
    pub energy: R,
}

impl<'a, R: Real> CanonicalView<'a, R> {
    pub fn new<B: Bands<R> + 'a>(cc: B, e: R, m_c: R, frame: Frame, mirrored: bool) -> Self {
        let bands: Box<dyn Bands<R> + 'a> = if mirrored {
            Box::new(Framed {
                inner: Mirror { inner: cc, center: m_c },
                frame,
            })
        } else {
            Box::new(Framed { inner: cc, frame })
        };
        Self {
            bands,
            frame,
            mirrored,
            m_c,
            energy: frame.energy(e),
        }
    }

    /// Canonical coordinate of the original site `m`.
    pub fn mu(&self, m: R) -> R {
        if self.mirrored {
            self.m_c + self.m_c - m
        } else {
            m
        }
    }

    /// `e^{iπm}` when the gauge was applied, else 1.
    pub fn gauge_factor(&self, m: R) -> C<R> {
        if self.frame.gauge {
            Complex::from_polar(R::one(), R::PI() * m)
        } else {
            real(R::one())
        }
    }

    pub fn local(&self, mu: R) -> Result<LocalBands<R>> {
        self.bands.local(mu)
    }
}

/// Discriminant `D = t₁² − 4t₂(w − 2t₂ − E)` (unchanged by the frame).
fn discriminant<R: Real, B: Bands<R> + ?Sized>(cc: &B, e: R, m: R) -> Result<R> {
    Ok(cosq_local(&cc.local(m)?, e, m)?.discriminant)
}

fn central_slope<R: Real, B: Bands<R> + ?Sized>(cc: &B, e: R, m: R, h: R) -> Result<R> {
    let (lo, hi) = cc.domain();
    let (m1, m2) = ((m - h).max(lo), (m + h).min(hi));
    Ok((discriminant(cc, e, m2)? - discriminant(cc, e, m1)?) / (m2 - m1))
}

/// Relative residuals of the internal identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals<R> {
    /// `a₁` from the band sum versus `4t₂c sinh²κ_c`.
    pub a1_closed_form: R,
    /// `a₃ − b₂/2`.
    pub a3_half_b2: R,
    /// `b₃` from band derivatives versus `4α²t₂c/J`.
    pub b3_two_routes: R,
}

/// Matching constants at a B/B̄ point, in the canonical frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConnectionConstants<R> {
    pub m_c: R,
    pub kappa_c: R,
    pub sigma1: i8,
    pub sigma2: i8,
    /// `(w, t₁, t₂)` at `m_c`.
    pub t_c: [R; 3],
    /// `(ẇ, ṫ₁, ṫ₂)` at `m_c`.
    pub tdot_c: [R; 3],
    pub a1: R,
    pub a2: R,
    pub b2: R,
    pub a3: R,
    pub b3: R,
    /// `4α²t₂c/J`.
    pub b3_alpha: R,
    /// `b₃ + σ₂a₂b₂/(2a₁)`.
    pub b3_prime: R,
    /// `m_c + a₂²/(4a₁b₃)`.
    pub m_c_prime: R,
    /// `(b₃/a₁)^{1/3}`.
    pub zeta_scale: R,
    /// `√π/(4√(2αt₂c sinh κ_c)) (a₁/b₃)^{−1/12} J^{1/4}`.
    pub k: R,
    pub alpha: R,
    pub j: R,
    /// Coefficient `b₂/(4a₁)` of the dropped `(m − m_c)²` exponent.
    pub quadratic_exponent: R,
    pub negated: bool,
    pub gauged: bool,
    pub mirrored: bool,
    pub residuals: IdentityResiduals<R>,
}

fn check_b_type<R: Real>(tp: &TurningPoint<R>) -> Result<TurningPointType> {
    match tp.kind {
        Some(k @ (TurningPointType::B | TurningPointType::BBar)) if tp.curve == CurveKind::Ustar => Ok(k),
        other => Err(Error::WrongTurningPointType {
            expected: "B or B̄".into(),
            found: other.map_or("unknown".into(), |k| k.name().to_string()),
        }),
    }
}

fn b_view<'a, R: Real, B: Bands<R> + 'a>(cc: &'a B, e: R, tp: &TurningPoint<R>, cfg: &ConnectConfig<R>) -> Result<CanonicalView<'a, R>> {
    let l = cc.local(tp.m_c)?;
    let frame = Frame::detect(l.t1(), l.t2());
    let slope = central_slope(cc, e, tp.m_c, cfg.discriminant_step)?;
    // The imaginary-q side (D > 0) must lie at m < m_c.
    Ok(CanonicalView::new(cc, e, tp.m_c, frame, slope > R::zero()))
}

fn constants_in_view<R: Real>(
    view: &CanonicalView<'_, R>,
    sigma1: i8,
    sigma2: i8,
    cfg: &ConnectConfig<R>,
) -> Result<ConnectionConstants<R>> {
    let m_c = view.m_c;
    let l = view.local(m_c)?;
    let (w, t1, t2) = (l.w(), l.t1(), l.t2());
    let (wd, t1d, t2d) = (l.dt[0], l.dt[1], l.dt[2]);
    let two: R = lit(2.0);
    let four: R = lit(4.0);
    let ch = (-t1 / (four * t2)).max(R::one());
    let kappa = ch.acosh();
    let sh = kappa.sinh();
    let ch2 = (two * kappa).cosh();
    let a1 = t1 * ch + four * t2 * ch2;
    let a1_closed = four * t2 * sh * sh;
    let a2 = t1d * ch + four * t2d * ch2;
    let b2 = two * sh * (t1d + four * t2d * ch);
    let a3 = sh * (t1d + four * t2d * ch);
    let b3 = wd + two * t1d * ch + two * t2d * ch2;
    let j = view.bands.large_parameter();
    let d_slope = central_slope(view.bands.as_ref(), view.energy, m_c, cfg.discriminant_step)?;
    let alpha = (-j * d_slope / (lit::<R>(16.0) * t2 * t2)).max(R::zero()).sqrt();
    let b3_alpha = four * alpha * alpha * t2 / j;
    let rel = |x: R, y: R| (x - y).abs() / x.abs().max(y.abs()).max(R::min_positive_value());
    let residuals = IdentityResiduals {
        a1_closed_form: rel(a1, a1_closed),
        a3_half_b2: (a3 - b2 / two).abs(),
        b3_two_routes: rel(b3, b3_alpha),
    };
    if !(a1 > R::zero()) {
        return Err(Error::IdentityViolation {
            what: "a1 > 0".into(),
            residual: a1.as_f64(),
        });
    }
    if !(residuals.b3_two_routes <= cfg.identity_tol) {
        return Err(Error::IdentityViolation {
            what: "b3 = 4 alpha^2 t2c / J".into(),
            residual: residuals.b3_two_routes.as_f64(),
        });
    }
    let s2: R = from_sign(sigma2);
    let zeta_scale = (b3 / a1).cbrt();
    let k = R::PI().sqrt() / (four * (two * alpha * t2 * sh).sqrt()) * (a1 / b3).powf(lit(-1.0 / 12.0)) * j.powf(lit(0.25));
    Ok(ConnectionConstants {
        m_c,
        kappa_c: kappa,
        sigma1: sign_of(lit::<R>(sigma1 as f64)),
        sigma2: sign_of(lit::<R>(sigma2 as f64)),
        t_c: [w, t1, t2],
        tdot_c: [wd, t1d, t2d],
        a1,
        a2,
        b2,
        a3,
        b3,
        b3_alpha,
        b3_prime: b3 + s2 * a2 * b2 / (two * a1),
        m_c_prime: m_c + a2 * a2 / (four * a1 * b3),
        zeta_scale,
        k,
        alpha,
        j,
        quadratic_exponent: b2 / (four * a1),
        negated: view.frame.negate,
        gauged: view.frame.gauge,
        mirrored: view.mirrored,
        residuals,
    })
}

/// Constants of a B/B̄ point for the sign pair `(σ₁, σ₂)`.
pub fn connection_constants<R: Real, B: Bands<R>>(
    cc: &B,
    e: R,
    tp: &TurningPoint<R>,
    sigma1: i8,
    sigma2: i8,
    cfg: &ConnectConfig<R>,
) -> Result<ConnectionConstants<R>> {
    check_b_type(tp)?;
    let view = b_view(cc, e, tp, cfg)?;
    constants_in_view(&view, sigma1, sigma2, cfg)
}

/// Amplitude and phase map for one sign pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConnectionResult<R> {
    pub sigma1: i8,
    pub sigma2: i8,
    /// Left amplitude `A_{σ₁σ₂}`.
    pub a: R,
    /// Right amplitude `B_{σ₁σ₂}`.
    pub b: R,
    /// Phase in the original frame (`Δ̄` when `t₂ < 0`).
    pub delta: R,
    /// Phase in the canonical frame.
    pub delta_canonical: R,
    pub airy: AiryKind,
    pub airy_factor: R,
    /// Both sides carry `e^{iπm_c}` (the gauge was applied).
    pub gauge_phase: bool,
    /// Left branch (`q`), canonical frame.
    pub left_branch: (i8, i8),
    /// Right branch (`q_a`), canonical frame: `σ₂`.
    pub right_branch: i8,
}

fn result_for<R: Real>(sigma1: i8, sigma2: i8, a: R, negated: bool, gauged: bool) -> ConnectionResult<R> {
    let (airy, factor) = airy_choice(sigma1, sigma2);
    let dc = maslov_phase(sigma1, sigma2);
    ConnectionResult {
        sigma1,
        sigma2,
        a,
        b: a * lit(amplitude_ratio(sigma1, sigma2)),
        delta: lit(if negated { maslov_phase_bar(sigma1, sigma2) } else { dc }),
        delta_canonical: lit(dc),
        airy,
        airy_factor: lit(factor),
        gauge_phase: gauged,
        left_branch: (sigma1, sigma2),
        right_branch: sigma2,
    }
}

/// A B or B̄ connection with evaluators for both sides and the central zone.
pub struct BConnection<'a, R> {
    pub view: CanonicalView<'a, R>,
    pub constants: ConnectionConstants<R>,
    pub result: ConnectionResult<R>,
    pub cfg: ConnectConfig<R>,
}

impl<'a, R: Real> BConnection<'a, R> {
    fn q_left(&self, mu: R) -> Result<C<R>> {
        let (s1, s2) = self.result.left_branch;
        let l = self.view.local(mu)?;
        let c = cosq_local(&l, self.view.energy, mu)?.get(s1);
        let q = c.acos();
        // q = iσ₂κ with cosh κ = cos q.
        let kappa = q.im.abs();
        Ok(cplx(q.re, from_sign::<R>(s2) * kappa))
    }

    fn q_right(&self, mu: R) -> Result<C<R>> {
        let s2 = self.result.right_branch;
        let l = self.view.local(mu)?;
        match kappa_chi_local(&l, self.view.energy, mu, s2) {
            Ok(k) => Ok(k.q_a),
            Err(Error::RegionMismatch { .. }) if (mu - self.view.m_c).abs() < lit(1e-6) => {
                Ok(cplx(R::zero(), from_sign::<R>(s2) * self.constants.kappa_c))
            }
            Err(e) => Err(e),
        }
    }

    /// Left DPI form at original site `m` (imaginary-`q` side).
    pub fn left_form(&self, m: R) -> Result<C<R>> {
        let mu = self.view.mu(m);
        if mu > self.view.m_c {
            return Err(Error::InvalidArgument(format!("m = {m} is not on the imaginary-q side")));
        }
        let (s1, s2) = self.result.left_branch;
        let q = self.q_left(mu)?;
        let v = velocity_local(&self.view.local(mu)?, q);
        if v.norm() == R::zero() {
            return Err(Error::ZeroVelocity { m: m.as_f64() });
        }
        let phase: C<R> = sqrt_endpoint(|x| self.q_left(x), self.view.m_c, mu, &self.cfg.quad)?;
        let i = cplx(R::zero(), R::one());
        let denom = (i * v * from_sign::<R>(s1) * from_sign::<R>(s2)).sqrt() * lit::<R>(2.0);
        Ok(self.view.gauge_factor(m) * (i * phase).exp() * self.result.a / denom)
    }

    /// Right DPI form at original site `m` (complex-`q` side).
    pub fn right_form(&self, m: R) -> Result<C<R>> {
        let mu = self.view.mu(m);
        if mu < self.view.m_c {
            return Err(Error::InvalidArgument(format!("m = {m} is not on the complex-q side")));
        }
        let s2 = self.result.right_branch;
        let l = self.view.local(mu)?;
        let k = kappa_chi_local(&l, self.view.energy, mu, s2)?;
        let phase: C<R> = sqrt_endpoint(|x| self.q_right(x), self.view.m_c, mu, &self.cfg.quad)?;
        let i = cplx(R::zero(), R::one());
        let term = k.s_a.sqrt().inv() * (i * (phase + real(self.result.delta_canonical))).exp();
        Ok(self.view.gauge_factor(m) * (term + term.conj()) * (self.result.b * lit(0.5)))
    }

    /// `|m − m_c|` limit of the central zone.
    pub fn central_limit(&self) -> R {
        self.constants.j.powf(self.cfg.central_exponent)
    }

    /// `e^{−σ₂κ_c(m−m_c)}[c₁Ai(ζ) + c₂Bi(ζ)]` with `ζ = −(b₃/a₁)^{1/3}(m − m_c)`.
    pub fn central_value(&self, m: R, c1: R, c2: R) -> Result<C<R>> {
        let limit = self.central_limit();
        if (m - self.view.m_c).abs() > limit {
            return Err(Error::OutsideCentralZone {
                m: m.as_f64(),
                limit: limit.as_f64(),
            });
        }
        let d = self.view.mu(m) - self.view.m_c;
        let zeta = -self.constants.zeta_scale * d;
        let (ai, bi) = airy_ai_bi(zeta)?;
        let env = (-from_sign::<R>(self.constants.sigma2) * self.constants.kappa_c * d).exp();
        Ok(self.view.gauge_factor(m) * real(env * (c1 * ai + c2 * bi)))
    }

    /// Central form keeping the first-derivative exponent
    /// `−[a₂Δ + σ₂b₂Δ²/2]/(2a₁)` and the shifted Airy argument
    /// `ζ′ = −(b₃′/a₁)^{1/3}(m − m_c′)`.
    pub fn refined_central(&self, m: R, c1: R, c2: R) -> Result<C<R>> {
        let k = &self.constants;
        let limit = self.central_limit();
        if (m - self.view.m_c).abs() > limit {
            return Err(Error::OutsideCentralZone {
                m: m.as_f64(),
                limit: limit.as_f64(),
            });
        }
        let mu = self.view.mu(m);
        let d = mu - self.view.m_c;
        let s2: R = from_sign(k.sigma2);
        let two: R = lit(2.0);
        let zeta = -(k.b3_prime / k.a1).cbrt() * (mu - k.m_c_prime);
        let (ai, bi) = airy_ai_bi(zeta)?;
        let expo = -s2 * k.kappa_c * d - (k.a2 * d + k.b2 * s2 * d * d / two) / (two * k.a1);
        Ok(self.view.gauge_factor(m) * real(expo.exp() * (c1 * ai + c2 * bi)))
    }

    /// `e^{−σ₂κ_c(m−m_c)}[c₁Ai(ζ) + c₂Bi(ζ)]` on `grid`.
    pub fn central_zone_solution(&self, c1: R, c2: R, grid: &[R]) -> Result<Vec<C<R>>> {
        grid.iter().map(|&m| self.central_value(m, c1, c2)).collect()
    }

    /// `(c₁, c₂)` that match the left form with amplitude `A`.
    pub fn matched_airy_coefficients(&self) -> (R, R) {
        let ka = self.constants.k * self.result.a;
        match self.result.airy {
            AiryKind::Ai => (ka * self.result.airy_factor, R::zero()),
            AiryKind::Bi => (R::zero(), ka * self.result.airy_factor),
        }
    }

    /// Central-zone solution matched to the left form.
    pub fn matched_central(&self, m: R) -> Result<C<R>> {
        let (c1, c2) = self.matched_airy_coefficients();
        self.central_value(m, c1, c2)
    }
}

fn build_b<'a, R: Real, B: Bands<R>>(
    cc: &'a B,
    e: R,
    tp: &TurningPoint<R>,
    sigma1: i8,
    sigma2: i8,
    a: R,
    cfg: &ConnectConfig<R>,
) -> Result<BConnection<'a, R>> {
    let view = b_view(cc, e, tp, cfg)?;
    let constants = constants_in_view(&view, sigma1, sigma2, cfg)?;
    let result = result_for(constants.sigma1, constants.sigma2, a, view.frame.negate, view.frame.gauge);
    Ok(BConnection {
        view,
        constants,
        result,
        cfg: *cfg,
    })
}

/// Connection at a B-family point with `t₂ > 0` at `m_c`.
pub fn connect_b<'a, R: Real, B: Bands<R>>(
    cc: &'a B,
    e: R,
    tp: &TurningPoint<R>,
    sigma1: i8,
    sigma2: i8,
    a: R,
    cfg: &ConnectConfig<R>,
) -> Result<BConnection<'a, R>> {
    let kind = check_b_type(tp)?;
    if !(cc.local(tp.m_c)?.t2() > R::zero()) {
        return Err(Error::WrongTurningPointType {
            expected: "B-family point with t2 > 0".into(),
            found: format!("{} with t2 < 0", kind.name()),
        });
    }
    build_b(cc, e, tp, sigma1, sigma2, a, cfg)
}

/// Connection at a B-family point with `t₂ < 0` at `m_c`.
pub fn connect_b_bar<'a, R: Real, B: Bands<R>>(
    cc: &'a B,
    e: R,
    tp: &TurningPoint<R>,
    sigma1: i8,
    sigma2: i8,
    a: R,
    cfg: &ConnectConfig<R>,
) -> Result<BConnection<'a, R>> {
    let kind = check_b_type(tp)?;
    if !(cc.local(tp.m_c)?.t2() < R::zero()) {
        return Err(Error::WrongTurningPointType {
            expected: "B-family point with t2 < 0".into(),
            found: format!("{} with t2 > 0", kind.name()),
        });
    }
    build_b(cc, e, tp, sigma1, sigma2, a, cfg)
}

/// JSON report: constants, identity residuals, and the four sign pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectionReport<R> {
    pub turning_point: TurningPoint<R>,
    pub constants: ConnectionConstants<R>,
    pub table: Vec<ConnectionResult<R>>,
}

pub fn connection_report<R: Real, B: Bands<R>>(
    cc: &B,
    e: R,
    tp: &TurningPoint<R>,
    cfg: &ConnectConfig<R>,
) -> Result<ConnectionReport<R>> {
    check_b_type(tp)?;
    let view = b_view(cc, e, tp, cfg)?;
    let constants = constants_in_view(&view, 1, 1, cfg)?;
    let mut table = Vec::with_capacity(4);
    for s1 in [1i8, -1] {
        for s2 in [1i8, -1] {
            table.push(result_for(s1, s2, R::one(), view.frame.negate, view.frame.gauge));
        }
    }
    Ok(ConnectionReport {
        turning_point: *tp,
        constants,
        table,
    })
}

/// Linear turning point of type A, Ā or A′.
pub struct AConnection<'a, R> {
    pub view: CanonicalView<'a, R>,
    pub kind: TurningPointType,
    /// Cos-branch carrying `q ≈ 0` in the canonical frame.
    pub sigma1: i8,
    /// Side (`±1`) where that branch is evanescent.
    pub forbidden_side: i8,
    pub amplitude: R,
    pub quad: QuadConfig<R>,
}

/// Amplitude ratio oscillatory/decaying and the phase offset.
pub const A_AMPLITUDE_RATIO: f64 = 2.0;
pub const A_PHASE: f64 = std::f64::consts::FRAC_PI_4;

pub fn connect_a<'a, R: Real, B: Bands<R>>(cc: &'a B, e: R, tp: &TurningPoint<R>, amplitude: R) -> Result<AConnection<'a, R>> {
    use TurningPointType::*;
    let kind = match tp.kind {
        Some(k @ (A | ABar | APrime | ABarPrime)) => k,
        other => {
            return Err(Error::WrongTurningPointType {
                expected: "A, Ā, A′ or Ā′".into(),
                found: other.map_or("unknown".into(), |k| k.name().to_string()),
            })
        }
    };
    let l = cc.local(tp.m_c)?;
    let frame = Frame::detect(l.t1(), l.t2());
    let view = CanonicalView::new(cc, e, tp.m_c, frame, false);
    let lc = view.local(tp.m_c)?;
    let c = cosq_local(&lc, view.energy, tp.m_c)?;
    let one = real(R::one());
    let sigma1 = if (c.plus - one).norm() <= (c.minus - one).norm() { 1 } else { -1 };
    let probe = (tp.failure_halfwidth.max(R::one())).min(tp.nearest_other_tp.map_or(R::one(), |d| d * lit(0.5)));
    let evanescent = |side: R| -> Result<bool> {
        let m = tp.m_c + side * probe;
        let c = cosq_local(&view.local(m)?, view.energy, m)?.get(sigma1);
        Ok(c.im.abs() > lit(1e-12) || c.re.abs() > R::one())
    };
    let forbidden_side = if evanescent(R::one())? {
        1
    } else if evanescent(-R::one())? {
        -1
    } else {
        return Err(Error::InvalidArgument(format!("no evanescent side next to m = {}", tp.m_c)));
    };
    Ok(AConnection {
        view,
        kind,
        sigma1,
        forbidden_side,
        amplitude,
        quad: QuadConfig::default(),
    })
}

impl<'a, R: Real> AConnection<'a, R> {
    fn q(&self, m: R) -> Result<C<R>> {
        let c = cosq_local(&self.view.local(m)?, self.view.energy, m)?.get(self.sigma1);
        Ok(c.acos())
    }

    fn speed(&self, m: R) -> Result<R> {
        let q = self.q(m)?;
        Ok(velocity_local(&self.view.local(m)?, q).norm())
    }

    fn phase(&self, m: R) -> Result<C<R>> {
        sqrt_endpoint(|x| self.q(x), self.view.m_c, m, &self.quad)
    }

    fn side_of(&self, m: R) -> i8 {
        if m > self.view.m_c {
            1
        } else {
            -1
        }
    }

    /// `A/(2√|v|) exp(−|∫κ|)` on the forbidden side.
    pub fn decaying_form(&self, m: R) -> Result<C<R>> {
        if self.side_of(m) != self.forbidden_side {
            return Err(Error::InvalidArgument(format!("m = {m} is on the oscillatory side")));
        }
        let k = self.phase(m)?.im.abs();
        let amp = self.amplitude / (lit::<R>(2.0) * self.speed(m)?.sqrt());
        Ok(self.view.gauge_factor(m) * real(amp * (-k).exp()))
    }

    /// `(A/√|v|) cos(|∫q| − π/4)` on the allowed side.
    pub fn oscillatory_form(&self, m: R) -> Result<C<R>> {
        if self.side_of(m) == self.forbidden_side {
            return Err(Error::InvalidArgument(format!("m = {m} is on the forbidden side")));
        }
        let th = self.phase(m)?.re.abs();
        let amp = self.amplitude / self.speed(m)?.sqrt();
        Ok(self.view.gauge_factor(m) * real(amp * (th - lit(A_PHASE)).cos()))
    }

    /// `|∫_{m_c}^m q|` along the connected branch (real part).
    pub fn oscillatory_phase(&self, m: R) -> Result<R> {
        Ok(self.phase(m)?.re.abs())
    }

    pub fn speed_at(&self, m: R) -> Result<R> {
        self.speed(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth1_operator;
    use crate::smooth::{extend_coefficients, ContinuumCoefficients};
    use crate::turning::{locate_turning_points, TurningConfig};

    fn synth(j: f64) -> ContinuumCoefficients<f64> {
        extend_coefficients(&synth1_operator(j).unwrap(), j).unwrap()
    }

    fn b_point(cc: &ContinuumCoefficients<f64>, e: f64) -> TurningPoint<f64> {
        let (lo, hi) = cc.domain();
        let s = locate_turning_points(cc, e, (lo, hi), &TurningConfig::default()).unwrap();
        *s.points.iter().find(|p| p.kind == Some(TurningPointType::B)).unwrap()
    }

    fn residual_max(op: &crate::model::PentadiagonalOperator<f64>, e: f64, m_c: f64, lim: f64, f: &dyn Fn(f64) -> C<f64>) -> f64 {
        let mut worst = 0.0f64;
        for k in 2..op.len() - 2 {
            let m = op.m(k);
            if (m - m_c).abs() >= lim {
                continue;
            }
            let mut r = -f(m) * e;
            let mut scale = r.norm();
            for kk in k - 2..=k + 2 {
                let t = op.element(k, kk) * f(op.m(kk));
                r += t;
                scale += t.norm();
            }
            worst = worst.max(r.norm() / scale);
        }
        worst
    }

    #[test]
    fn constants_at_synth1_b() {
        let cc = synth(400.0);
        let tp = b_point(&cc, -6.5);
        let k = connection_constants(&cc, -6.5, &tp, 1, 1, &ConnectConfig::default()).unwrap();
        // cosh κ_c = m_c/J and a₁ = 4t₂ sinh²κ_c = 4(1.125 − 1).
        assert!((k.kappa_c - 1.125f64.sqrt().acosh()).abs() < 1e-9);
        assert!((k.a1 - 0.5).abs() < 1e-9);
        assert_eq!(k.a3, k.b2 / 2.0);
        assert!(k.residuals.b3_two_routes < 1e-6);
        assert!((k.alpha * k.alpha - 32.0 * 1.125f64.sqrt() / 16.0).abs() < 1e-6);
        assert!(k.mirrored && !k.negated && !k.gauged);
        assert!(k.k > 0.0 && k.zeta_scale > 0.0);
    }

    #[test]
    fn orders_in_j() {
        let e = -9.84;
        let (c1, c2) = (synth(400.0), synth(1600.0));
        let cfg = ConnectConfig::default();
        let k1 = connection_constants(&c1, e, &b_point(&c1, e), 1, 1, &cfg).unwrap();
        let k2 = connection_constants(&c2, e, &b_point(&c2, e), 1, 1, &cfg).unwrap();
        assert!((k1.a1 / k2.a1 - 1.0).abs() < 1e-9);
        assert!((k1.alpha / k2.alpha - 1.0).abs() < 1e-6);
        for (x, y) in [(k1.a2, k2.a2), (k1.b2, k2.b2), (k1.b3, k2.b3)] {
            assert!((x / y - 4.0).abs() < 1e-6, "{x} {y}");
        }
        assert!((k1.k / k2.k - 4f64.powf(-1.0 / 6.0)).abs() < 1e-6);
    }

    #[test]
    fn sign_pair_table() {
        use std::f64::consts::{FRAC_PI_2, PI};
        let expect = [(1, 1, 0.5, FRAC_PI_2), (1, -1, 1.0, -FRAC_PI_2), (-1, 1, 1.0, 0.0), (-1, -1, 0.5, 0.0)];
        for (s1, s2, b, d) in expect {
            assert_eq!(amplitude_ratio(s1, s2), b);
            assert!((maslov_phase(s1, s2) - d).abs() < 1e-15);
            let wrapped = (maslov_phase_bar(s1, s2) - (d - s2 as f64 * FRAC_PI_2)).rem_euclid(2.0 * PI);
            assert!(wrapped < 1e-12 || 2.0 * PI - wrapped < 1e-12);
            let (kind, f) = airy_choice(s1, s2);
            assert_eq!(kind == AiryKind::Bi, s1 == s2);
            assert_eq!(f, if s1 == s2 { 1.0 } else { 2.0 });
        }
        let cc = synth(400.0);
        let tp = b_point(&cc, -9.84);
        let rep = connection_report(&cc, -9.84, &tp, &ConnectConfig::default()).unwrap();
        assert_eq!(rep.table.len(), 4);
        assert!(serde_json::to_string(&rep).unwrap().contains("\"b3_prime\""));
    }

    #[test]
    fn right_form_is_real() {
        let cc = synth(400.0);
        let tp = b_point(&cc, -9.84);
        for (s1, s2) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
            let c = connect_b(&cc, -9.84, &tp, s1, s2, 1.0, &ConnectConfig::default()).unwrap();
            for d in [5.0, 20.0, 60.0] {
                let z = c.right_form(tp.m_c - d).unwrap();
                assert!(z.im.abs() <= 1e-12 * z.norm());
            }
            assert!(c.right_form(tp.m_c + 5.0).is_err());
            assert!(c.left_form(tp.m_c - 5.0).is_err());
        }
    }

    #[test]
    fn left_matching_improves_with_j() {
        let e = -9.84;
        let mut prev = [f64::INFINITY; 4];
        for (n, j) in [400.0, 6400.0].into_iter().enumerate() {
            let cc = synth(j);
            let tp = b_point(&cc, e);
            let m = tp.m_c + j.powf(5.0 / 12.0);
            for (i, (s1, s2)) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)].into_iter().enumerate() {
                let c = connect_b(&cc, e, &tp, s1, s2, 1.0, &ConnectConfig::default()).unwrap();
                let (c1, c2) = c.matched_airy_coefficients();
                let err = (c.left_form(m).unwrap().re / c.refined_central(m, c1, c2).unwrap().re).ln().abs();
                assert!(err < 0.4, "J={j} ({s1},{s2}) {err}");
                if n == 1 {
                    assert!(err < 0.15, "J={j} ({s1},{s2}) {err}");
                    assert!(err < prev[i] || err < 0.05, "({s1},{s2}) {} -> {err}", prev[i]);
                }
                prev[i] = err;
            }
        }
    }

    #[test]
    fn right_matching_by_projection() {
        let (j, e) = (6400.0, -9.84);
        let cc = synth(j);
        let tp = b_point(&cc, e);
        for (s1, s2) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
            let c = connect_b(&cc, e, &tp, s1, s2, 1.0, &ConnectConfig::default()).unwrap();
            let (c1, c2) = c.matched_airy_coefficients();
            let (lo, hi) = (j.powf(1.0 / 3.0), j.powf(0.5));
            let (mut rc, mut cc2, mut rr) = (0.0, 0.0, 0.0);
            let mut d = lo;
            while d <= hi {
                let m = tp.m_c - d;
                let (r, x) = (c.right_form(m).unwrap().re, c.refined_central(m, c1, c2).unwrap().re);
                let w = (2.0 * s2 as f64 * c.constants.kappa_c * d).exp();
                rc += w * r * x;
                cc2 += w * x * x;
                rr += w * r * r;
                d += 0.25;
            }
            let p = rc / cc2;
            let corr = rc / (cc2 * rr).sqrt();
            assert!((p - 1.0).abs() < 0.03 && corr > 0.98, "({s1},{s2}) p={p} corr={corr}");
        }
    }

    #[test]
    fn central_residual_small_and_shrinking() {
        let e = -9.84;
        let mut prev_worst = f64::INFINITY;
        let mut prev_refined = [f64::INFINITY; 4];
        for j in [400.0, 1600.0, 6400.0] {
            let op = synth1_operator(j).unwrap();
            let cc = extend_coefficients(&op, j).unwrap();
            let tp = b_point(&cc, e);
            let mut worst = 0.0f64;
            for (i, (s1, s2)) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)].into_iter().enumerate() {
                let c = connect_b(&cc, e, &tp, s1, s2, 1.0, &ConnectConfig::default()).unwrap();
                let (c1, c2) = c.matched_airy_coefficients();
                let lim = j.powf(0.4);
                let simple = residual_max(&op, e, tp.m_c, lim, &|m| c.central_value(m, c1, c2).unwrap());
                let refined = residual_max(&op, e, tp.m_c, lim, &|m| c.refined_central(m, c1, c2).unwrap());
                assert!(simple < 1e-2 && refined < simple, "J={j} ({s1},{s2}) {simple} {refined}");
                assert!(refined < prev_refined[i]);
                prev_refined[i] = refined;
                worst = worst.max(simple);
            }
            assert!(worst < prev_worst, "J={j} {worst}");
            prev_worst = worst;
        }
    }

    #[test]
    fn central_zone_guard() {
        let cc = synth(400.0);
        let tp = b_point(&cc, -9.84);
        let c = connect_b(&cc, -9.84, &tp, 1, 1, 1.0, &ConnectConfig::default()).unwrap();
        let grid = [tp.m_c - 30.0, tp.m_c];
        assert!(matches!(c.central_zone_solution(1.0, 0.0, &grid), Err(Error::OutsideCentralZone { .. })));
        assert_eq!(c.central_zone_solution(1.0, 0.0, &grid[1..]).unwrap().len(), 1);
    }

    #[test]
    fn negated_and_gauged_lattices() {
        use crate::model::{gauge_transform, negate};
        let (j, e) = (400.0, -9.84);
        let op = synth1_operator(j).unwrap();
        let cc = extend_coefficients(&op, j).unwrap();
        let tp = b_point(&cc, e);
        let cfg = ConnectConfig::default();
        let base = connect_b(&cc, e, &tp, 1, -1, 1.0, &cfg).unwrap();

        let neg = extend_coefficients(&negate(&gauge_transform(&op)), j).unwrap();
        let (lo, hi) = neg.domain();
        let scan = locate_turning_points(&neg, -e, (lo, hi), &TurningConfig::default()).unwrap();
        let tpn = *scan.points.iter().find(|p| p.kind == Some(TurningPointType::BBar)).unwrap();
        assert!((tpn.m_c - tp.m_c).abs() < 1e-9);
        assert!(matches!(connect_b(&neg, -e, &tpn, 1, -1, 1.0, &cfg), Err(Error::WrongTurningPointType { .. })));
        let bar = connect_b_bar(&neg, -e, &tpn, 1, -1, 1.0, &cfg).unwrap();
        assert!((bar.result.delta - maslov_phase_bar(1, -1)).abs() < 1e-15);
        assert_eq!(bar.result.delta_canonical, base.result.delta_canonical);

        let gau = extend_coefficients(&gauge_transform(&op), j).unwrap();
        let scan = locate_turning_points(&gau, e, (lo, hi), &TurningConfig::default()).unwrap();
        let tpg = *scan.points.iter().find(|p| p.curve == CurveKind::Ustar).unwrap();
        let gc = connect_b(&gau, e, &tpg, 1, -1, 1.0, &cfg).unwrap();
        assert!(gc.result.gauge_phase);
        let m0 = tp.m_c.round();
        for dm in [-12.0, -6.0, 6.0, 12.0, 40.0] {
            let m = m0 + dm;
            let pairs: Vec<(C<f64>, C<f64>, C<f64>)> = if m > tp.m_c {
                vec![(base.left_form(m).unwrap(), bar.left_form(m).unwrap(), gc.left_form(m).unwrap())]
            } else {
                vec![(base.right_form(m).unwrap(), bar.right_form(m).unwrap(), gc.right_form(m).unwrap())]
            };
            let sign = if (m as i64) % 2 == 0 { 1.0 } else { -1.0 };
            for (x, y, z) in pairs {
                assert!((y - x * sign).norm() <= 1e-9 * x.norm(), "{x} {y}");
                assert!((z - x * sign).norm() <= 1e-9 * x.norm(), "{z} {x}");
            }
        }
    }

    #[test]
    fn a_type_connection() {
        let (j, e) = (400.0, -9.84);
        let cc = synth(j);
        let (lo, hi) = cc.domain();
        let scan = locate_turning_points(&cc, e, (lo, hi), &TurningConfig::default()).unwrap();
        let a = *scan.points.iter().find(|p| p.kind == Some(TurningPointType::A)).unwrap();
        assert!((a.m_c - 1.48 * j).abs() < 1e-6);
        let c = connect_a(&cc, e, &a, 1.0).unwrap();
        // E < U₀ = 2 − 8m/J below m_c.
        assert_eq!(c.forbidden_side, -1);
        let d1 = c.decaying_form(a.m_c - 10.0).unwrap().re;
        let d2 = c.decaying_form(a.m_c - 20.0).unwrap().re;
        assert!(d1 > d2 && d2 > 0.0);
        assert!(c.oscillatory_form(a.m_c - 10.0).is_err());
        let m = a.m_c + 30.0;
        let osc = c.oscillatory_form(m).unwrap().re;
        let bound = 1.0 / c.speed_at(m).unwrap().sqrt();
        assert!(osc.abs() <= bound * (1.0 + 1e-12));
        let b = b_point(&cc, e);
        assert!(matches!(connect_a(&cc, e, &b, 1.0), Err(Error::WrongTurningPointType { .. })));
        assert!(matches!(
            connection_constants(&cc, e, &a, 1, 1, &ConnectConfig::default()),
            Err(Error::WrongTurningPointType { .. })
        ));
    }
}
