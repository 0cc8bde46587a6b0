//! Exact reference solutions: banded symmetric eigensolver, recursion
//! integration with overflow control, envelope fitting and DPI-vs-exact
//! comparison.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PentadiagonalOperator;
use crate::scalar::{lit, Amplitude, Real, C};

/// Largest operator dimension accepted by the eigensolver.
pub const MAX_DIMENSION: usize = 20001;

/// Lower half of a symmetric band matrix with half-bandwidth 3 (two band
/// diagonals plus one for the bulge created during reduction).
struct SymBand<R> {
    n: usize,
    d: [Vec<R>; 4],
}

impl<R: Real> SymBand<R> {
    fn from_operator(op: &PentadiagonalOperator<R>) -> Self {
        let n = op.len();
        let mut d = [vec![R::zero(); n], vec![R::zero(); n], vec![R::zero(); n], vec![R::zero(); n]];
        d[0].copy_from_slice(op.diag());
        for i in 0..n.saturating_sub(1) {
            d[1][i] = op.off1()[i];
        }
        for i in 0..n.saturating_sub(2) {
            d[2][i] = op.off2()[i];
        }
        Self { n, d }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> R {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let k = hi - lo;
        if k > 3 {
            R::zero()
        } else {
            self.d[k][lo]
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, x: R) {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let k = hi - lo;
        debug_assert!(k <= 3 || x == R::zero());
        if k <= 3 {
            self.d[k][lo] = x;
        }
    }

    /// `A ← G A Gᵀ` for the rotation acting on rows/columns `p < q`.
    fn rotate(&mut self, p: usize, q: usize, c: R, s: R) {
        let lo = p.saturating_sub(3);
        let hi = (q + 3).min(self.n - 1);
        for k in lo..=hi {
            if k == p || k == q {
                continue;
            }
            let (x, y) = (self.get(p, k), self.get(q, k));
            self.set(p, k, c * x + s * y);
            self.set(q, k, c * y - s * x);
        }
        let (app, aqq, apq) = (self.get(p, p), self.get(q, q), self.get(p, q));
        let two: R = lit(2.0);
        self.set(p, p, c * c * app + two * c * s * apq + s * s * aqq);
        self.set(q, q, s * s * app - two * c * s * apq + c * c * aqq);
        self.set(p, q, (c * c - s * s) * apq + c * s * (aqq - app));
    }

    /// Zero `A[target][col]` by rotating in the plane `(target − 1, target)`.
    fn annihilate(&mut self, col: usize, target: usize, z: Option<&mut Vec<R>>) {
        let p = target - 1;
        let (a, b) = (self.get(p, col), self.get(target, col));
        if b == R::zero() {
            return;
        }
        let r = a.hypot(b);
        let (c, s) = (a / r, b / r);
        self.rotate(p, target, c, s);
        self.set(target, col, R::zero());
        if let Some(z) = z {
            let n = self.n;
            for row in 0..n {
                let (x, y) = (z[p * n + row], z[target * n + row]);
                z[p * n + row] = c * x + s * y;
                z[target * n + row] = c * y - s * x;
            }
        }
    }

    /// Reduce to tridiagonal form by Givens bulge chasing.
    fn tridiagonalize(&mut self, mut z: Option<&mut Vec<R>>) -> (Vec<R>, Vec<R>) {
        let n = self.n;
        for j in 0..n.saturating_sub(2) {
            self.annihilate(j, j + 2, z.as_deref_mut());
            let mut p = j + 1;
            while p + 3 < n {
                if self.get(p + 3, p) == R::zero() {
                    break;
                }
                self.annihilate(p, p + 3, z.as_deref_mut());
                p += 2;
            }
        }
        let diag = self.d[0].clone();
        let mut off = vec![R::zero(); n];
        off[..n.saturating_sub(1)].copy_from_slice(&self.d[1][..n.saturating_sub(1)]);
        (diag, off)
    }
}

/// Implicit QL on a symmetric tridiagonal matrix. `e[i]` couples `i` and
/// `i+1`. Eigenvectors (if requested) accumulate into the column-major `z`.
fn tql2<R: Real>(d: &mut [R], e: &mut [R], mut z: Option<&mut Vec<R>>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let two: R = lit(2.0);
    e[n - 1] = R::zero();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= R::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence(format!("tridiagonal QL at row {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(R::one());
            g = d[m] - d[l] + e[l] / (g + if g >= R::zero() { r } else { -r });
            let (mut s, mut c, mut p) = (R::one(), R::one(), R::zero());
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == R::zero() {
                    d[i + 1] -= p;
                    e[m] = R::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let f = z[(i + 1) * n + k];
                        z[(i + 1) * n + k] = s * z[i * n + k] + c * f;
                        z[i * n + k] = c * z[i * n + k] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = R::zero();
        }
    }
    Ok(())
}

/// Full spectrum of a pentadiagonal operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactSolution<R> {
    pub m: Vec<R>,
    /// Ascending.
    pub eigenvalues: Vec<R>,
    /// Column-major `n × n`, unit-norm columns; empty when not requested.
    #[serde(skip)]
    pub vectors: Vec<R>,
}

impl<R: Real> ExactSolution<R> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn has_vectors(&self) -> bool {
        !self.vectors.is_empty()
    }

    pub fn eigenvector(&self, k: usize) -> &[R] {
        let n = self.len();
        &self.vectors[k * n..(k + 1) * n]
    }

    /// Index of the eigenvalue closest to `e`.
    pub fn nearest(&self, e: R) -> usize {
        let k = self.eigenvalues.partition_point(|&x| x < e);
        match (k.checked_sub(1), self.eigenvalues.get(k)) {
            (Some(a), Some(&b)) if (e - self.eigenvalues[a]).abs() <= (b - e).abs() => a,
            (Some(a), None) => a,
            _ => k,
        }
    }

    /// `‖(T − E_k)x_k‖ / ‖T‖_max`.
    pub fn residual(&self, op: &PentadiagonalOperator<R>, k: usize) -> R {
        let x = self.eigenvector(k);
        let y = op.apply(x);
        let e = self.eigenvalues[k];
        let r = y.iter().zip(x).fold(R::zero(), |acc, (&a, &b)| acc + (a - e * b) * (a - e * b));
        r.sqrt() / op.max_abs().max(R::min_positive_value())
    }
}

fn spectrum<R: Real>(op: &PentadiagonalOperator<R>, vectors: bool) -> Result<ExactSolution<R>> {
    let n = op.len();
    if n > MAX_DIMENSION {
        return Err(Error::DimensionTooLarge(n));
    }
    let mut band = SymBand::from_operator(op);
    let mut z = if vectors {
        let mut z = vec![R::zero(); n * n];
        for i in 0..n {
            z[i * n + i] = R::one();
        }
        Some(z)
    } else {
        None
    };
    let (mut d, mut e) = band.tridiagonalize(z.as_mut());
    tql2(&mut d, &mut e, z.as_mut())?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let vectors = match z {
        Some(z) => {
            let mut out = Vec::with_capacity(n * n);
            for &k in &order {
                out.extend_from_slice(&z[k * n..(k + 1) * n]);
            }
            out
        }
        None => Vec::new(),
    };
    Ok(ExactSolution {
        m: (0..n).map(|k| op.m(k)).collect(),
        eigenvalues,
        vectors,
    })
}

/// All eigenvalues and eigenvectors.
pub fn exact_spectrum<R: Real>(op: &PentadiagonalOperator<R>) -> Result<ExactSolution<R>> {
    spectrum(op, true)
}

/// All eigenvalues, no eigenvectors.
pub fn exact_eigenvalues<R: Real>(op: &PentadiagonalOperator<R>) -> Result<Vec<R>> {
    Ok(spectrum(op, false)?.eigenvalues)
}

/// Eigenvector for the eigenvalue `e` (already known to full accuracy) by
/// inverse iteration with a banded LU factorization.
pub fn eigenvector_at<R: Real>(op: &PentadiagonalOperator<R>, e: R) -> Result<Vec<R>> {
    let n = op.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let shift = e + op.max_abs() * lit::<R>(64.0) * R::epsilon();
    // Rows stored with offsets −2..=4 (upper fill from pivoting).
    const W: usize = 7;
    let mut a = vec![R::zero(); n * W];
    let at = |i: usize, j: usize| i * W + (j + 2 - i);
    for i in 0..n {
        for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
            let mut x = op.element(i, j);
            if i == j {
                x -= shift;
            }
            a[at(i, j)] = x;
        }
    }
    let mut piv = vec![0usize; n];
    let tiny = op.max_abs() * R::epsilon();
    for k in 0..n {
        let last = (k + 2).min(n - 1);
        let mut p = k;
        for i in k + 1..=last {
            if a[at(i, k)].abs() > a[at(p, k)].abs() {
                p = i;
            }
        }
        piv[k] = p;
        let jmax = (k + 4).min(n - 1);
        if p != k {
            for j in k..=jmax {
                if j + 2 >= p && j + 2 >= k {
                    let (x, y) = (a[at(k, j)], a[at(p, j)]);
                    a[at(k, j)] = y;
                    a[at(p, j)] = x;
                }
            }
        }
        if a[at(k, k)].abs() < tiny {
            a[at(k, k)] = tiny.max(R::min_positive_value());
        }
        for i in k + 1..=last {
            let f = a[at(i, k)] / a[at(k, k)];
            a[at(i, k)] = f;
            for j in k + 1..=jmax {
                if j + 2 >= i && j <= i + 4 {
                    a[at(i, j)] = a[at(i, j)] - f * a[at(k, j)];
                }
            }
        }
    }
    let solve = |b: &mut [R]| {
        for k in 0..n {
            b.swap(k, piv[k]);
            for i in k + 1..=(k + 2).min(n - 1) {
                b[i] -= a[at(i, k)] * b[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + 4).min(n - 1) {
                s -= a[at(k, j)] * b[j];
            }
            b[k] = s / a[at(k, k)];
        }
    };
    let mut x: Vec<R> = (0..n).map(|i| R::one() + lit::<R>(((i * 7919) % 97) as f64 / 997.0)).collect();
    for _ in 0..4 {
        solve(&mut x);
        let norm = x.iter().fold(R::zero(), |s, &v| s + v * v).sqrt();
        for v in &mut x {
            *v /= norm;
        }
    }
    // Fix the sign: largest component positive.
    let big = x.iter().fold(R::zero(), |b: R, &v| if v.abs() > b.abs() { v } else { b });
    if big < R::zero() {
        for v in &mut x {
            *v = -*v;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// Toward increasing `m`.
    Forward,
    /// Toward decreasing `m`.
    Backward,
}

/// Four consecutive values `C_{m0} … C_{m0+3}`. Sites outside the lattice
/// may be included and must hold zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed<A, R> {
    pub m0: R,
    pub values: [A; 4],
}

impl<R: Real, A: Amplitude<R>> Seed<A, R> {
    /// Start at the lower edge from `C_{m_min}` and `C_{m_min+1}`.
    pub fn lower_boundary(op: &PentadiagonalOperator<R>, c0: A, c1: A) -> Self {
        Self {
            m0: op.m_min() - lit(2.0),
            values: [A::zero(), A::zero(), c0, c1],
        }
    }

    /// Start at the upper edge from `C_{m_max−1}` and `C_{m_max}`.
    pub fn upper_boundary(op: &PentadiagonalOperator<R>, c_prev: A, c_last: A) -> Self {
        Self {
            m0: op.m_max() - R::one(),
            values: [c_prev, c_last, A::zero(), A::zero()],
        }
    }
}

/// Recursion output. The true amplitude at site `k` is
/// `c[k]·exp(log_scale[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionSolution<A, R> {
    pub m: Vec<R>,
    pub c: Vec<A>,
    pub log_scale: Vec<R>,
    pub direction: Direction,
    pub seed_m0: R,
}

impl<R: Real, A: Amplitude<R>> RecursionSolution<A, R> {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// `ln|C_k|` including the accumulated scale.
    pub fn log_magnitude(&self, k: usize) -> R {
        self.c[k].magnitude().ln() + self.log_scale[k]
    }

    /// All values scaled so that the log factor at site `anchor` is removed.
    /// Sites far below the anchor's scale underflow to zero.
    pub fn relative_to(&self, anchor: usize) -> Vec<A> {
        let l0 = self.log_scale[anchor];
        self.c
            .iter()
            .zip(&self.log_scale)
            .map(|(&c, &l)| c * (l - l0).exp())
            .collect()
    }

    /// Values scaled so that the largest magnitude is one.
    pub fn normalized(&self) -> Vec<A> {
        let (mut best, mut arg) = (R::neg_infinity(), 0);
        for k in 0..self.len() {
            let l = self.log_magnitude(k);
            if l > best {
                best = l;
                arg = k;
            }
        }
        let l0 = self.log_scale[arg];
        let peak = self.c[arg].magnitude();
        self.c
            .iter()
            .zip(&self.log_scale)
            .map(|(&c, &l)| c * ((l - l0).exp() / peak))
            .collect()
    }
}

const RESCALE_ABOVE: f64 = 1e150;

/// Propagate the five-term recursion `Σ_α t_{m,m+α}C_{m+α} = E C_m` from a
/// four-value seed. Rows solved for the outermost coefficient; the working
/// window is rescaled whenever it exceeds 1e150.
pub fn integrate_recursion<R: Real, A: Amplitude<R>>(
    op: &PentadiagonalOperator<R>,
    e: R,
    seed: Seed<A, R>,
    direction: Direction,
) -> Result<RecursionSolution<A, R>> {
    let n = op.len() as i64;
    let k0f = seed.m0 - op.m_min();
    let k0 = k0f.round().as_f64() as i64;
    if (k0f - lit(k0 as f64)).abs() > lit(1e-9) || k0 < -2 || k0 + 3 > n + 1 {
        return Err(Error::InvalidArgument(format!("seed site {} is not on the lattice", seed.m0)));
    }
    for (j, v) in seed.values.iter().enumerate() {
        let k = k0 + j as i64;
        if (k < 0 || k >= n) && v.magnitude() != R::zero() {
            return Err(Error::InvalidArgument(format!("seed value outside the lattice at m = {}", op.m_min() + lit(k as f64))));
        }
    }
    let nu = n as usize;
    let mut c = vec![A::zero(); nu];
    let mut log_scale = vec![R::zero(); nu];
    // Window indices are shifted by 2 so that virtual sites −2, −1 exist.
    let mut win = vec![A::zero(); nu + 4];
    let mut scale = R::zero();
    for (j, &v) in seed.values.iter().enumerate() {
        win[(k0 + 2) as usize + j] = v;
    }
    let t = |i: i64, j: i64| -> R {
        if i < 0 || j < 0 || i >= n || j >= n {
            R::zero()
        } else {
            op.element(i as usize, j as usize)
        }
    };
    let limit: R = lit(RESCALE_ABOVE);
    let steps: Vec<i64> = match direction {
        Direction::Forward => (k0 + 4..n).collect(),
        Direction::Backward => (0..k0).rev().collect(),
    };
    let mut site_scale = vec![R::zero(); nu + 4];
    for s in steps {
        let (r, lead, others): (i64, R, [i64; 4]) = match direction {
            Direction::Forward => (s - 2, t(s - 2, s), [s - 4, s - 3, s - 2, s - 1]),
            Direction::Backward => (s + 2, t(s + 2, s), [s + 1, s + 2, s + 3, s + 4]),
        };
        if lead == R::zero() {
            return Err(Error::FallbackThreeTerm { m: op.m(r as usize).as_f64() });
        }
        let mut acc = win[(r + 2) as usize] * e;
        for &j in &others {
            acc = acc - win[(j + 2) as usize] * t(r, j);
        }
        let v = acc / lead;
        if !v.magnitude().is_finite() {
            return Err(Error::Recursion {
                m: op.m(s as usize).as_f64(),
                reason: "non-finite value".into(),
            });
        }
        win[(s + 2) as usize] = v;
        site_scale[(s + 2) as usize] = scale;
        if v.magnitude() > limit {
            let f = v.magnitude();
            let span: Vec<i64> = match direction {
                Direction::Forward => (s - 3..=s).collect(),
                Direction::Backward => (s..=s + 3).collect(),
            };
            scale += f.ln();
            for j in span {
                let w = &mut win[(j + 2) as usize];
                *w = *w / f;
                site_scale[(j + 2) as usize] = scale;
            }
        }
    }
    c[..nu].copy_from_slice(&win[2..nu + 2]);
    log_scale[..nu].copy_from_slice(&site_scale[2..nu + 2]);
    Ok(RecursionSolution {
        m: (0..nu).map(|k| op.m(k)).collect(),
        c,
        log_scale,
        direction,
        seed_m0: seed.m0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnvelopeModel {
    /// `R e^{−κx} cos(χx + φ)`.
    DampedCosine,
    /// `R e^{−κx}`.
    Exponential,
}

/// Least-squares fit of `C(m) ≈ R e^{−κ(m−m₀)} cos(χ(m−m₀) + φ)` with `m₀`
/// the first site in the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeFit<R> {
    pub model: EnvelopeModel,
    pub origin: R,
    pub amplitude: R,
    pub kappa: R,
    pub chi: R,
    pub phase: R,
    /// RMS residual, weighted by the inverse guessed envelope.
    pub residual: R,
    /// Weighted RMS residual over weighted RMS data.
    pub relative_residual: R,
    pub points: usize,
}

struct Projected<R> {
    a: R,
    b: R,
    resid: Vec<R>,
}

fn project<R: Real>(x: &[R], y: &[R], wt: &[R], kappa: R, chi: R, damped: bool) -> Result<Projected<R>> {
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (R::zero(), R::zero(), R::zero(), R::zero(), R::zero());
    let basis = |xi: R| {
        let env = (-kappa * xi).exp();
        if damped {
            (env * (chi * xi).cos(), env * (chi * xi).sin())
        } else {
            (env, R::zero())
        }
    };
    for ((&xi, &yi), &w) in x.iter().zip(y).zip(wt) {
        let (f1, f2) = basis(xi);
        let (f1, f2, yi) = (f1 * w, f2 * w, yi * w);
        s11 += f1 * f1;
        s12 += f1 * f2;
        s22 += f2 * f2;
        r1 += f1 * yi;
        r2 += f2 * yi;
    }
    let (a, b) = if damped {
        let det = s11 * s22 - s12 * s12;
        if !(det > lit::<R>(1e-13) * s11 * s22) {
            return Err(Error::IllConditioned(format!("basis nearly dependent (κ = {kappa}, χ = {chi})")));
        }
        ((r1 * s22 - r2 * s12) / det, (r2 * s11 - r1 * s12) / det)
    } else {
        if !(s11 > R::zero()) {
            return Err(Error::IllConditioned("vanishing basis".into()));
        }
        (r1 / s11, R::zero())
    };
    let resid = x
        .iter()
        .zip(y)
        .zip(wt)
        .map(|((&xi, &yi), &w)| {
            let (f1, f2) = basis(xi);
            w * (yi - a * f1 - b * f2)
        })
        .collect();
    Ok(Projected { a, b, resid })
}

fn sumsq<R: Real>(v: &[R]) -> R {
    v.iter().fold(R::zero(), |s, &x| s + x * x)
}

/// Levenberg–Marquardt over the nonlinear parameters with the linear
/// amplitudes projected out.
fn refine<R: Real>(x: &[R], y: &[R], wt: &[R], mut theta: Vec<R>, damped: bool) -> Result<(Vec<R>, Projected<R>)> {
    let eval = |th: &[R]| project(x, y, wt, th[0], if damped { th[1] } else { R::zero() }, damped);
    let mut cur = eval(&theta)?;
    let mut cost = sumsq(&cur.resid);
    let mut lambda: R = lit(1e-3);
    let np = theta.len();
    for _ in 0..200 {
        let mut jac = vec![vec![R::zero(); x.len()]; np];
        for p in 0..np {
            let h = lit::<R>(1e-6) * (R::one() + theta[p].abs());
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[p] += h;
            tm[p] -= h;
            let (rp, rm) = (eval(&tp)?, eval(&tm)?);
            for k in 0..x.len() {
                jac[p][k] = (rp.resid[k] - rm.resid[k]) / (h + h);
            }
        }
        let mut jtj = vec![vec![R::zero(); np]; np];
        let mut jtr = vec![R::zero(); np];
        for p in 0..np {
            for q in 0..np {
                jtj[p][q] = jac[p].iter().zip(&jac[q]).fold(R::zero(), |s, (&u, &v)| s + u * v);
            }
            jtr[p] = jac[p].iter().zip(&cur.resid).fold(R::zero(), |s, (&u, &v)| s + u * v);
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for p in 0..np {
                a[p][p] *= R::one() + lambda;
            }
            let step: Vec<R> = if np == 1 {
                if a[0][0] == R::zero() {
                    break;
                }
                vec![-jtr[0] / a[0][0]]
            } else {
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                if det == R::zero() {
                    break;
                }
                vec![
                    -(a[1][1] * jtr[0] - a[0][1] * jtr[1]) / det,
                    -(a[0][0] * jtr[1] - a[1][0] * jtr[0]) / det,
                ]
            };
            let trial: Vec<R> = theta.iter().zip(&step).map(|(&t, &d)| t + d).collect();
            if let Ok(next) = eval(&trial) {
                let c = sumsq(&next.resid);
                if c < cost {
                    let rel = (cost - c) / cost.max(R::min_positive_value());
                    theta = trial;
                    cur = next;
                    cost = c;
                    lambda = (lambda * lit(0.3)).max(lit(1e-12));
                    improved = rel > lit(1e-14);
                    break;
                }
            }
            lambda *= lit(10.0);
        }
        if !improved {
            break;
        }
    }
    Ok((theta, cur))
}

/// Fit a damped cosine (or, when the data do not oscillate, an exponential)
/// to the real samples `(m, c)` with `lo ≤ m ≤ hi`.
pub fn fit_envelope<R: Real>(m: &[R], c: &[R], window: (R, R)) -> Result<EnvelopeFit<R>> {
    if m.len() != c.len() {
        return Err(Error::InvalidArgument("sites and values differ in length".into()));
    }
    let idx: Vec<usize> = (0..m.len()).filter(|&k| m[k] >= window.0 && m[k] <= window.1).collect();
    if idx.len() < 12 {
        return Err(Error::InvalidArgument(format!("window holds {} points, need at least 12", idx.len())));
    }
    let origin = m[idx[0]];
    let h = m[idx[1]] - m[idx[0]];
    for w in idx.windows(2) {
        if ((m[w[1]] - m[w[0]]) - h).abs() > lit::<R>(1e-9) * h.abs().max(R::one()) {
            return Err(Error::InvalidArgument("fit window must be uniformly spaced".into()));
        }
    }
    let peak = idx.iter().fold(R::zero(), |s, &k| s.max(c[k].abs()));
    if peak == R::zero() {
        return Err(Error::IllConditioned("identically zero data".into()));
    }
    let x: Vec<R> = idx.iter().map(|&k| m[k] - origin).collect();
    let y: Vec<R> = idx.iter().map(|&k| c[k] / peak).collect();

    // Prony: y_{k+2} = p₁y_{k+1} + p₂y_k.
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (R::zero(), R::zero(), R::zero(), R::zero(), R::zero());
    for k in 0..y.len() - 2 {
        let (u, v, w) = (y[k + 1], y[k], y[k + 2]);
        a11 += u * u;
        a12 += u * v;
        a22 += v * v;
        b1 += u * w;
        b2 += v * w;
    }
    let det = a11 * a22 - a12 * a12;
    let (p1, p2) = if det.abs() > lit::<R>(1e-14) * a11 * a22 {
        ((b1 * a22 - b2 * a12) / det, (b2 * a11 - b1 * a12) / det)
    } else {
        (b1 / a11.max(R::min_positive_value()), R::zero())
    };
    let disc = p1 * p1 + lit::<R>(4.0) * p2;
    let two: R = lit(2.0);
    let (kappa0, chi0, oscillates) = if disc < R::zero() {
        let rho = (-p2).sqrt();
        let cosx = (p1 / (two * rho)).max(-R::one()).min(R::one());
        (-rho.ln() / h, cosx.acos() / h, true)
    } else {
        let z1 = (p1 + disc.sqrt()) / two;
        let z2 = (p1 - disc.sqrt()) / two;
        let z = if z1.abs() >= z2.abs() { z1 } else { z2 };
        if z < R::zero() {
            (-z.abs().max(R::min_positive_value()).ln() / h, R::PI() / h, true)
        } else {
            (-z.max(R::min_positive_value()).ln() / h, R::zero(), false)
        }
    };
    // Weight by the inverse of the guessed envelope so both ends of a
    // strongly growing window count equally.
    let wmax = x.iter().fold(R::neg_infinity(), |s, &xi| s.max(kappa0 * xi));
    let wt: Vec<R> = x.iter().map(|&xi| (kappa0 * xi - wmax).exp()).collect();
    let yw: Vec<R> = y.iter().zip(&wt).map(|(&a, &b)| a * b).collect();
    let rms_y = (sumsq(&yw) / lit(y.len() as f64)).sqrt();
    let fit_damped = |k0: R, c0: R| refine(&x, &y, &wt, vec![k0, c0], true);
    let fit_exp = |k0: R| refine(&x, &y, &wt, vec![k0], false);
    let damped = if oscillates { fit_damped(kappa0, chi0).ok() } else { None };
    let exp = fit_exp(kappa0).ok();
    let pick = match (damped, exp) {
        (Some(d), Some(e)) => {
            if sumsq(&d.1.resid) <= sumsq(&e.1.resid) {
                (EnvelopeModel::DampedCosine, d)
            } else {
                (EnvelopeModel::Exponential, e)
            }
        }
        (Some(d), None) => (EnvelopeModel::DampedCosine, d),
        (None, Some(e)) => (EnvelopeModel::Exponential, e),
        (None, None) => return Err(Error::IllConditioned("no model converged".into())),
    };
    let (model, (theta, proj)) = pick;
    let (kappa, chi) = match model {
        EnvelopeModel::DampedCosine => (theta[0], theta[1]),
        EnvelopeModel::Exponential => (theta[0], R::zero()),
    };
    let amp = proj.a.hypot(proj.b);
    let phase = (-proj.b).atan2(proj.a);
    let rms = (sumsq(&proj.resid) / lit(y.len() as f64)).sqrt();
    Ok(EnvelopeFit {
        model,
        origin,
        amplitude: amp * peak,
        kappa,
        chi,
        phase,
        residual: rms * peak,
        relative_residual: rms / rms_y,
        points: y.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CompareMode {
    /// Both sequences real: envelopes and phase offsets from discrete
    /// Casoratians, well defined at nodes.
    Standing,
    /// Pointwise complex comparison.
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareMetrics<R> {
    pub mode: CompareMode,
    /// Complex factor applied to the DPI sequence.
    pub scale: C<R>,
    pub max_envelope_error: R,
    pub rms_envelope_error: R,
    /// Largest local phase offset (radians).
    pub phase_drift: R,
    pub points: usize,
}

/// Compare a DPI sequence with an exact one on the masked sites after the
/// optimal complex rescaling of the DPI values.
pub fn compare<R: Real>(dpi: &[C<R>], exact: &[C<R>], mask: &[bool]) -> Result<CompareMetrics<R>> {
    if dpi.len() != exact.len() || dpi.len() != mask.len() {
        return Err(Error::InvalidArgument("compare inputs differ in length".into()));
    }
    let (mut num, mut den) = (Complex::new(R::zero(), R::zero()), R::zero());
    for k in 0..dpi.len() {
        if mask[k] {
            num += dpi[k].conj() * exact[k];
            den += dpi[k].norm_sqr();
        }
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    if den == R::zero() {
        return Err(Error::IllConditioned("DPI sequence vanishes on the mask".into()));
    }
    let scale = num / den;
    let a: Vec<C<R>> = dpi.iter().map(|&d| d * scale).collect();
    let tiny: R = lit(1e-10);
    let is_real = (0..a.len()).filter(|&k| mask[k]).all(|k| a[k].im.abs() <= tiny * a[k].norm().max(R::min_positive_value()) && exact[k].im.abs() <= tiny * exact[k].norm().max(R::min_positive_value()));
    let mut errs = Vec::new();
    let mut drift = R::zero();
    let mode = if is_real { CompareMode::Standing } else { CompareMode::Pointwise };
    for k in 0..a.len() {
        if !mask[k] {
            continue;
        }
        let pointwise = |errs: &mut Vec<R>, drift: &mut R| {
            let x = exact[k];
            if x.norm() > R::zero() {
                errs.push((a[k].norm() / x.norm() - R::one()).abs());
                *drift = drift.max((a[k] / x).arg().abs());
            }
        };
        if mode == CompareMode::Pointwise || k == 0 || k + 1 == a.len() || !mask[k - 1] || !mask[k + 1] {
            if mode == CompareMode::Pointwise {
                pointwise(&mut errs, &mut drift);
            }
            continue;
        }
        let (u0, u1, u2) = (a[k - 1].re, a[k].re, a[k + 1].re);
        let (v0, v1, v2) = (exact[k - 1].re, exact[k].re, exact[k + 1].re);
        let wuu = u1 * u1 - u0 * u2;
        let wvv = v1 * v1 - v0 * v2;
        let wuv = u1 * v1 - (u0 * v2 + u2 * v0) / lit(2.0);
        let local = v0 * v0 + v1 * v1 + v2 * v2;
        if wvv.abs() <= lit::<R>(1e-8) * local || wuu.abs() <= lit::<R>(1e-8) * (u0 * u0 + u1 * u1 + u2 * u2) {
            if v1 != R::zero() {
                errs.push((u1 / v1 - R::one()).abs());
            }
            continue;
        }
        errs.push(((wuu / wvv).abs().sqrt() - R::one()).abs());
        let cosd = (wuv / (wuu * wvv).abs().sqrt()).max(-R::one()).min(R::one());
        drift = drift.max(cosd.acos());
    }
    if errs.is_empty() {
        return Err(Error::EmptyMask);
    }
    let max = errs.iter().fold(R::zero(), |s, &e| s.max(e));
    let rms = (errs.iter().fold(R::zero(), |s, &e| s + e * e) / lit(errs.len() as f64)).sqrt();
    Ok(CompareMetrics {
        mode,
        scale,
        max_envelope_error: max,
        rms_envelope_error: rms,
        phase_drift: drift,
        points: errs.len(),
    })
}

/// Write `m,E` style eigenvalue CSV (`index,eigenvalue`).
pub fn write_eigenvalues_csv<R: Real, W: std::io::Write>(values: &[R], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "eigenvalue"])?;
    for (k, v) in values.iter().enumerate() {
        wr.write_record([k.to_string(), format!("{:.16e}", v.as_f64())])?;
    }
    wr.flush()?;
    Ok(())
}
