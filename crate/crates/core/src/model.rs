//! Pentadiagonal symmetric operators: the Fe₈ spin Hamiltonian, tabular
//! input, the synthetic reference model and the (−1)^m gauge.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Parameters of `H = −k₂J_z² + (k₁−k₂)J_x² − gμ_B J·H` with the field in the
/// x–z plane. `hx`, `hz` are `gμ_B H` components in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinModelParams<R> {
    pub j: R,
    pub k1: R,
    pub k2: R,
    pub hx: R,
    pub hz: R,
    /// When set, `k1 > k2 > 0` is expected; a violation is reported by
    /// [`SpinModelParams::warnings`] but never rejected.
    pub fe8_regime: bool,
}

impl<R: Real> SpinModelParams<R> {
    /// Fe₈ anisotropies `k1 = 0.33 K`, `k2 = 0.22 K` at spin `j`.
    pub fn fe8(j: R, hx: R, hz: R) -> Self {
        Self {
            j,
            k1: lit(0.33),
            k2: lit(0.22),
            hx,
            hz,
            fe8_regime: true,
        }
    }

    /// `2J` as an integer, or an error when `J` is not a positive
    /// (half-)integer.
    pub fn two_j(&self) -> Result<i64> {
        let two = self.j * lit(2.0);
        let r = two.round();
        if !(self.j > R::zero()) || (two - r).abs() > lit(1e-9) {
            return Err(Error::InvalidSpin(self.j.as_f64()));
        }
        Ok(r.as_f64() as i64)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.fe8_regime && !(self.k1 > self.k2 && self.k2 > R::zero()) {
            w.push(format!(
                "Fe8 regime expects k1 > k2 > 0 (got k1 = {}, k2 = {})",
                self.k1, self.k2
            ));
        }
        w
    }
}

/// Real symmetric matrix with bandwidth two.
///
/// Row `k` corresponds to `m = m_min + k`; `m_min` may be a half-integer
/// and is stored doubled. `off1[k] = t_{m,m+1}` and `off2[k] = t_{m,m+2}`.
/// Entries of `off1`/`off2` that would couple to rows beyond `m_max` are
/// kept (tables may carry them) but never enter matrix operations.
#[derive(Debug, Clone, PartialEq)]
pub struct PentadiagonalOperator<R> {
    m_min2: i64,
    diag: Vec<R>,
    off1: Vec<R>,
    off2: Vec<R>,
}

/// One CSV row of the tabular operator format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow<R> {
    pub m: R,
    pub w: R,
    pub t1: R,
    pub t2: R,
}

impl<R: Real> PentadiagonalOperator<R> {
    /// Assemble from raw bands. `m_min2` is twice the first index.
    pub fn from_bands(m_min2: i64, diag: Vec<R>, off1: Vec<R>, off2: Vec<R>) -> Result<Self> {
        let n = diag.len();
        if off1.len() != n || off2.len() != n {
            return Err(Error::InvalidArgument(format!(
                "band lengths differ: diag {}, off1 {}, off2 {}",
                n,
                off1.len(),
                off2.len()
            )));
        }
        let op = Self {
            m_min2,
            diag,
            off1,
            off2,
        };
        for k in 0..n {
            if !(op.diag[k].is_finite() && op.off1[k].is_finite() && op.off2[k].is_finite()) {
                return Err(Error::NonFinite(op.m(k).as_f64()));
            }
        }
        Ok(op)
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn m_min2(&self) -> i64 {
        self.m_min2
    }

    /// Index value of row `k`.
    pub fn m(&self, k: usize) -> R {
        lit::<R>(self.m_min2 as f64 * 0.5) + lit(k as f64)
    }

    pub fn m_min(&self) -> R {
        self.m(0)
    }

    pub fn m_max(&self) -> R {
        self.m(self.len().saturating_sub(1))
    }

    /// Row index of `m`, if `m` is a lattice point of this operator.
    pub fn index_of(&self, m: R) -> Option<usize> {
        let k = m - self.m_min();
        let kr = k.round();
        if (k - kr).abs() > lit(1e-9) || kr < R::zero() {
            return None;
        }
        let k = kr.as_f64() as usize;
        (k < self.len()).then_some(k)
    }

    pub fn diag(&self) -> &[R] {
        &self.diag
    }

    pub fn off1(&self) -> &[R] {
        &self.off1
    }

    pub fn off2(&self) -> &[R] {
        &self.off2
    }

    /// Matrix element between rows `i` and `j` (zero outside the band).
    pub fn element(&self, i: usize, j: usize) -> R {
        let n = self.len();
        if i >= n || j >= n {
            return R::zero();
        }
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo],
            1 => self.off1[lo],
            2 => self.off2[lo],
            _ => R::zero(),
        }
    }

    /// `y = T x` using only in-matrix couplings.
    pub fn apply(&self, x: &[R]) -> Vec<R> {
        let n = self.len();
        assert_eq!(x.len(), n, "vector length must match operator dimension");
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(2);
                let hi = (i + 2).min(n - 1);
                (lo..=hi).fold(R::zero(), |acc, j| acc + self.element(i, j) * x[j])
            })
            .collect()
    }

    /// Largest absolute matrix element.
    pub fn max_abs(&self) -> R {
        let n = self.len();
        let mut s = R::zero();
        for k in 0..n {
            s = s.max(self.diag[k].abs());
            if k + 1 < n {
                s = s.max(self.off1[k].abs());
            }
            if k + 2 < n {
                s = s.max(self.off2[k].abs());
            }
        }
        s
    }

    pub fn to_rows(&self) -> Vec<TableRow<R>> {
        (0..self.len())
            .map(|k| TableRow {
                m: self.m(k),
                w: self.diag[k],
                t1: self.off1[k],
                t2: self.off2[k],
            })
            .collect()
    }

    /// Principal sub-block on rows `k0..k1` (half-open).
    pub fn slice(&self, k0: usize, k1: usize) -> Result<Self> {
        if k0 >= k1 || k1 > self.len() {
            return Err(Error::InvalidArgument(format!("bad slice {k0}..{k1} of {}", self.len())));
        }
        let mut off1 = self.off1[k0..k1].to_vec();
        let mut off2 = self.off2[k0..k1].to_vec();
        let n = k1 - k0;
        // Couplings that now leave the block are dropped.
        for (k, v) in off1.iter_mut().enumerate() {
            if k + 1 >= n {
                *v = R::zero();
            }
        }
        for (k, v) in off2.iter_mut().enumerate() {
            if k + 2 >= n {
                *v = R::zero();
            }
        }
        Self::from_bands(self.m_min2 + 2 * k0 as i64, self.diag[k0..k1].to_vec(), off1, off2)
    }
}

/// Fe₈ Hamiltonian in the J_z basis, `m = −J, …, J`.
pub fn build_fe8_operator<R: Real>(p: &SpinModelParams<R>) -> Result<PentadiagonalOperator<R>> {
    let two_j = p.two_j()?;
    let n = (two_j + 1) as usize;
    let j = p.j;
    let jj = j * (j + R::one());
    let d = p.k1 - p.k2;
    let half: R = lit(0.5);
    let quarter: R = lit(0.25);
    // J(J+1) − m(m+1), the squared J₊ matrix element out of m.
    let raise = |m: R| (jj - m * (m + R::one())).max(R::zero());
    let mut diag = Vec::with_capacity(n);
    let mut off1 = Vec::with_capacity(n);
    let mut off2 = Vec::with_capacity(n);
    for k in 0..n {
        let m = -j + lit(k as f64);
        diag.push(-p.k2 * m * m + d * (jj - m * m) * half - p.hz * m);
        off1.push(-p.hx * half * raise(m).sqrt());
        off2.push(d * quarter * (raise(m) * raise(m + R::one())).sqrt());
    }
    PentadiagonalOperator::from_bands(-two_j, diag, off1, off2)
}

/// Operator from `(m, w, t1, t2)` rows with `t1 = t_{m,m+1}`, `t2 = t_{m,m+2}`.
pub fn build_from_table<R: Real>(rows: &[TableRow<R>]) -> Result<PentadiagonalOperator<R>> {
    if rows.len() < 5 {
        return Err(Error::TooFewRows {
            need: 5,
            got: rows.len(),
        });
    }
    let doubled = |m: R| -> Result<i64> {
        if !m.is_finite() {
            return Err(Error::NonFinite(m.as_f64()));
        }
        let two = (m * lit(2.0)).round();
        if (m * lit(2.0) - two).abs() > lit(1e-9) {
            return Err(Error::InvalidArgument(format!("m = {m} is not an integer or half-integer")));
        }
        Ok(two.as_f64() as i64)
    };
    let m_min2 = doubled(rows[0].m)?;
    for (k, pair) in rows.windows(2).enumerate() {
        let a = doubled(pair[0].m)?;
        let b = doubled(pair[1].m)?;
        if b - a != 2 || a != m_min2 + 2 * k as i64 {
            return Err(Error::NonContiguous {
                after: pair[0].m.as_f64(),
                next: pair[1].m.as_f64(),
            });
        }
    }
    for r in rows {
        if !(r.w.is_finite() && r.t1.is_finite() && r.t2.is_finite()) {
            return Err(Error::NonFinite(r.m.as_f64()));
        }
    }
    PentadiagonalOperator::from_bands(
        m_min2,
        rows.iter().map(|r| r.w).collect(),
        rows.iter().map(|r| r.t1).collect(),
        rows.iter().map(|r| r.t2).collect(),
    )
}

pub fn read_table_csv<R: Real, Rd: Read>(reader: Rd) -> Result<PentadiagonalOperator<R>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let want = ["m", "w", "t1", "t2"];
    if headers.len() < 4 || headers.iter().take(4).zip(want).any(|(h, w)| h != w) {
        return Err(Error::Parse(format!("expected header m,w,t1,t2, got {:?}", headers)));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut vals = [R::zero(); 4];
        for (i, v) in vals.iter_mut().enumerate() {
            let s = rec.get(i).ok_or_else(|| Error::Parse(format!("short record {:?}", rec)))?;
            let x: f64 = s.parse().map_err(|_| Error::Parse(format!("not a number: '{s}'")))?;
            *v = lit(x);
        }
        rows.push(TableRow {
            m: vals[0],
            w: vals[1],
            t1: vals[2],
            t2: vals[3],
        });
    }
    build_from_table(&rows)
}

/// Write `m,w,t1,t2` with 17 significant digits; `-0` is written as `0`.
pub fn write_table_csv<R: Real, W: Write>(op: &PentadiagonalOperator<R>, mut out: W) -> Result<()> {
    writeln!(out, "m,w,t1,t2")?;
    for r in op.to_rows() {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e}",
            r.m.as_f64(),
            r.w.as_f64() + 0.0,
            r.t1.as_f64() + 0.0,
            r.t2.as_f64() + 0.0
        )?;
    }
    Ok(())
}

/// `C_m → (−1)^m C_m`: flips the sign of the nearest-neighbour band.
pub fn gauge_transform<R: Real>(op: &PentadiagonalOperator<R>) -> PentadiagonalOperator<R> {
    PentadiagonalOperator {
        m_min2: op.m_min2,
        diag: op.diag.clone(),
        off1: op.off1.iter().map(|&x| -x).collect(),
        off2: op.off2.clone(),
    }
}

/// `T → −T`; maps the `t₂ < 0` case onto `t₂ > 0` at energy `−E`.
pub fn negate<R: Real>(op: &PentadiagonalOperator<R>) -> PentadiagonalOperator<R> {
    PentadiagonalOperator {
        m_min2: op.m_min2,
        diag: op.diag.iter().map(|&x| -x).collect(),
        off1: op.off1.iter().map(|&x| -x).collect(),
        off2: op.off2.iter().map(|&x| -x).collect(),
    }
}

/// Reference model: `w ≡ 0`, `t₂ ≡ 1`, `t₁(m) = −4m/J` on `m ∈ [0.2J, 1.6J]`.
///
/// Two guard rows are added at each end so that the midpoint-averaged
/// continuum bands cover exactly `[round(0.2J), round(1.6J)]`. Storing
/// `t_{m,m+1} = −4(m+½)/J` makes the averages exact.
pub fn synth1_operator<R: Real>(j: R) -> Result<PentadiagonalOperator<R>> {
    if !(j > R::zero()) {
        return Err(Error::InvalidArgument(format!("SYNTH1 needs J > 0, got {j}")));
    }
    let lo = (j * lit(0.2)).round().as_f64() as i64 - 2;
    let hi = (j * lit(1.6)).round().as_f64() as i64 + 2;
    let four: R = lit(4.0);
    let rows: Vec<_> = (lo..=hi)
        .map(|m| {
            let mr: R = lit(m as f64);
            TableRow {
                m: mr,
                w: R::zero(),
                t1: -four * (mr + lit(0.5)) / j,
                t2: R::one(),
            }
        })
        .collect();
    build_from_table(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    Zero,
    Positive,
    Negative,
    Mixed,
}

fn sign_pattern<R: Real>(xs: &[R]) -> SignPattern {
    let pos = xs.iter().any(|&x| x > R::zero());
    let neg = xs.iter().any(|&x| x < R::zero());
    match (pos, neg) {
        (false, false) => SignPattern::Zero,
        (true, false) => SignPattern::Positive,
        (false, true) => SignPattern::Negative,
        (true, true) => SignPattern::Mixed,
    }
}

/// Result of [`validate_symmetry`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub max_asymmetry: f64,
    pub all_finite: bool,
    pub t1_sign: SignPattern,
    pub t2_sign: SignPattern,
    /// Lattice points where `t_{m,m+2}` changes sign relative to the row before.
    pub t2_sign_changes: Vec<f64>,
    /// True when `t₁ > 0` somewhere and the analysis must run in the gauge image.
    pub gauge_required: bool,
    pub messages: Vec<String>,
}

pub fn validate_symmetry<R: Real>(op: &PentadiagonalOperator<R>) -> SymmetryReport {
    let n = op.len();
    let t1 = &op.off1[..n.saturating_sub(1)];
    let t2 = &op.off2[..n.saturating_sub(2)];
    let all_finite = op
        .diag
        .iter()
        .chain(op.off1.iter())
        .chain(op.off2.iter())
        .all(|x| x.is_finite());
    // Only the upper bands are stored, so the transpose is read from the
    // same cells: asymmetry is identically zero.
    let max_asymmetry = (0..n)
        .flat_map(|i| (i.saturating_sub(2)..(i + 3).min(n)).map(move |j| (i, j)))
        .map(|(i, j)| (op.element(i, j) - op.element(j, i)).abs().as_f64())
        .fold(0.0, f64::max);
    let t1_sign = sign_pattern(t1);
    let t2_sign = sign_pattern(t2);
    let mut t2_sign_changes = Vec::new();
    for k in 1..t2.len() {
        let (a, b) = (t2[k - 1], t2[k]);
        if (a > R::zero() && b <= R::zero()) || (a < R::zero() && b >= R::zero()) {
            t2_sign_changes.push(op.m(k).as_f64());
        }
    }
    let mut messages = Vec::new();
    match t1_sign {
        SignPattern::Zero => messages.push("t1 ≡ 0; either sign convention valid".to_string()),
        SignPattern::Mixed => messages.push("t1 changes sign; gauge choice is local".to_string()),
        _ => {}
    }
    match (t1_sign, t2_sign) {
        (SignPattern::Negative, SignPattern::Positive) => messages.push("t1<0, t2>0 throughout".to_string()),
        (SignPattern::Positive, SignPattern::Positive) => {
            messages.push("t1>0, t2>0 throughout; gauge_transform required".to_string())
        }
        (SignPattern::Negative, SignPattern::Negative) => messages.push("t1<0, t2<0 throughout".to_string()),
        (SignPattern::Positive, SignPattern::Negative) => {
            messages.push("t1>0, t2<0 throughout; gauge_transform required".to_string())
        }
        _ => {}
    }
    if t2_sign == SignPattern::Zero {
        messages.push("t2 ≡ 0; three-term recursion".to_string());
    }
    for m in &t2_sign_changes {
        messages.push(format!("t2 changes sign at m={m}"));
    }
    if !all_finite {
        messages.push("non-finite entries present".to_string());
    }
    SymmetryReport {
        max_asymmetry,
        all_finite,
        t1_sign,
        t2_sign,
        t2_sign_changes,
        gauge_required: matches!(t1_sign, SignPattern::Positive),
        messages,
    }
}
