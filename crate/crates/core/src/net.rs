//! Network data, the saturation and hard-selector primitives, and the three
//! vector fields of the family: the τ-member `f_τ`, the fast limit (projected
//! affine drift) and the slow pointwise limit `F_∞`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// Clamp `z` into `[0, m]`.
pub fn saturate(z: f64, m: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("saturate: non-finite argument {z}")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!(
            "saturate: ceiling must be positive, got {m}"
        )));
    }
    Ok(sat(z, m))
}

#[inline]
pub(crate) fn sat(z: f64, m: f64) -> f64 {
    z.min(m).max(0.0)
}

#[inline]
pub(crate) fn pos(z: f64) -> f64 {
    z.max(0.0)
}

#[inline]
pub(crate) fn neg(z: f64) -> f64 {
    (-z).max(0.0)
}

/// Closed sub-interval of `[0, 1]`, the value set of the hard selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn distance(&self, v: f64) -> f64 {
        pos(self.lo - v).max(pos(v - self.hi))
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }
}

/// Convexified hard selector: `{0}` for `z < 0`, `[0, 1]` at `z = 0`, `{1}` for `z > 0`.
pub fn hard_selector(z: f64) -> Result<Interval> {
    if !z.is_finite() {
        return Err(Error::Domain(format!(
            "hard_selector: non-finite argument {z}"
        )));
    }
    Ok(selector_banded(z, 0.0))
}

/// Hard selector with an absolute zero band: `|z| ≤ band` maps to `[0, 1]`.
pub fn selector_banded(z: f64, band: f64) -> Interval {
    if z > band {
        Interval::ONE
    } else if z < -band {
        Interval::ZERO
    } else {
        Interval::UNIT
    }
}

/// Componentwise hard selector `H(z)`.
pub fn hard_selector_vec(z: &DVector<f64>, band: f64) -> Vec<Interval> {
    z.iter().map(|&zi| selector_banded(zi, band)).collect()
}

/// The triple `(W, D, u)` with `D` diagonal and stored as its diagonal.
///
/// Values are immutable after construction; `A = W - D` is derived once in
/// the constructor, so it cannot go stale. Use the `with_*` methods to build
/// modified copies.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    w: DMatrix<f64>,
    d: DVector<f64>,
    u: DVector<f64>,
    a: DMatrix<f64>,
}

impl NetworkSpec {
    pub fn new(w: DMatrix<f64>, d: DVector<f64>, u: DVector<f64>) -> Result<Self> {
        let n = d.len();
        if n == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::InvalidSpec(format!(
                "W is {}x{} but D has {} entries",
                w.nrows(),
                w.ncols(),
                n
            )));
        }
        if u.len() != n {
            return Err(Error::InvalidSpec(format!(
                "u has {} entries, expected {n}",
                u.len()
            )));
        }
        if let Some(i) = d.iter().position(|&di| !(di > 0.0 && di.is_finite())) {
            return Err(Error::InvalidSpec(format!(
                "d[{i}] = {} is not a positive finite number",
                d[i]
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("W has non-finite entries".into()));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("u has non-finite entries".into()));
        }
        let a = DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { w[(i, j)] - d[i] } else { w[(i, j)] },
        );
        Ok(Self { w, d, u, a })
    }

    /// Build from row-major slices.
    pub fn from_rows(w: &[&[f64]], d: &[f64], u: &[f64]) -> Result<Self> {
        let n = d.len();
        if w.len() != n || w.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSpec(
                "W must be square with the dimension of D".into(),
            ));
        }
        let wm = DMatrix::from_fn(n, n, |i, j| w[i][j]);
        Self::new(
            wm,
            DVector::from_column_slice(d),
            DVector::from_column_slice(u),
        )
    }

    /// Construct from `A = W - D` instead of `W`.
    pub fn from_a(a: DMatrix<f64>, d: DVector<f64>, u: DVector<f64>) -> Result<Self> {
        let n = d.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::InvalidSpec(
                "A must be square with the dimension of D".into(),
            ));
        }
        let w = DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { a[(i, j)] + d[i] } else { a[(i, j)] },
        );
        Self::new(w, d, u)
    }

    pub fn with_input(&self, u: DVector<f64>) -> Result<Self> {
        Self::new(self.w.clone(), self.d.clone(), u)
    }

    pub fn with_weights(&self, w: DMatrix<f64>) -> Result<Self> {
        Self::new(w, self.d.clone(), self.u.clone())
    }

    pub fn with_dissipation(&self, d: DVector<f64>) -> Result<Self> {
        Self::new(self.w.clone(), d, self.u.clone())
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    /// `A = W - D`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn d_min(&self) -> f64 {
        self.d.min()
    }

    /// `g(x) = Ax + u`.
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.u
    }

    /// `Wx + u`.
    pub fn synaptic_input(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x + &self.u
    }

    pub fn polytope(&self) -> StatePolytope {
        StatePolytope::new(self.d.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SpecJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SpecJson = serde_json::from_str(s)?;
        raw.try_into()
    }

    /// Check that `x` has the right length and finite entries.
    pub(crate) fn check_dim(&self, x: &DVector<f64>, what: &str) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Domain(format!(
                "{what}: expected {} entries, got {}",
                self.n(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("{what}: non-finite entries")));
        }
        Ok(())
    }
}

/// Wire form: `{"n": int, "W": [[...], ...], "D": [...], "u": [...]}` with `W` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecJson {
    pub n: usize,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    pub u: Vec<f64>,
}

impl From<&NetworkSpec> for SpecJson {
    fn from(s: &NetworkSpec) -> Self {
        let n = s.n();
        SpecJson {
            n,
            w: (0..n)
                .map(|i| (0..n).map(|j| s.w[(i, j)]).collect())
                .collect(),
            d: s.d.iter().copied().collect(),
            u: s.u.iter().copied().collect(),
        }
    }
}

impl TryFrom<SpecJson> for NetworkSpec {
    type Error = Error;

    fn try_from(raw: SpecJson) -> Result<Self> {
        if raw.d.len() != raw.n {
            return Err(Error::InvalidSpec(format!(
                "n = {} but D has {} entries",
                raw.n,
                raw.d.len()
            )));
        }
        let rows: Vec<&[f64]> = raw.w.iter().map(|r| r.as_slice()).collect();
        NetworkSpec::from_rows(&rows, &raw.d, &raw.u)
    }
}

impl Serialize for NetworkSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpecJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetworkSpec {
    fn deserialize<De: serde::Deserializer<'de>>(de: De) -> std::result::Result<Self, De::Error> {
        let raw = SpecJson::deserialize(de)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}

/// The box `X = {x : 0 ≤ d_i x_i ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePolytope {
    d: DVector<f64>,
}

impl StatePolytope {
    pub fn new(d: DVector<f64>) -> Self {
        Self { d }
    }

    pub fn upper(&self, i: usize) -> f64 {
        1.0 / self.d[i]
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.d.len()
            && x.iter()
                .zip(self.d.iter())
                .all(|(&xi, &di)| xi.is_finite() && di * xi >= -tol && di * xi <= 1.0 + tol)
    }

    /// Largest violation of `d_i x_i ∈ [0, 1]`, in units of `d_i x_i`.
    pub fn excursion(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.d.iter())
            .map(|(&xi, &di)| pos(-di * xi).max(pos(di * xi - 1.0)))
            .fold(0.0, f64::max)
    }

    /// Euclidean projection onto the box. Returns the largest coordinate change.
    pub fn clamp(&self, x: &mut DVector<f64>) -> f64 {
        clamp_slice(self.d.as_slice(), x.as_mut_slice())
    }
}

pub(crate) fn clamp_slice(d: &[f64], x: &mut [f64]) -> f64 {
    let mut moved = 0.0f64;
    for (xi, &di) in x.iter_mut().zip(d) {
        let c = xi.max(0.0).min(1.0 / di);
        moved = moved.max((c - *xi).abs());
        *xi = c;
    }
    moved
}

/// Which branch of the saturation is active in one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    Lo,
    Lin,
    Hi,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Lo, Regime::Lin, Regime::Hi];

    /// Single-letter code used in CSV output.
    pub fn code(self) -> char {
        match self {
            Regime::Lo => 'L',
            Regime::Lin => 'M',
            Regime::Hi => 'H',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'L' => Some(Regime::Lo),
            'M' => Some(Regime::Lin),
            'H' => Some(Regime::Hi),
            _ => None,
        }
    }
}

/// One regime label per coordinate; `3^n` patterns exist in dimension `n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegimePattern(Vec<Regime>);

impl RegimePattern {
    pub fn new(labels: Vec<Regime>) -> Self {
        Self(labels)
    }

    pub fn labels(&self) -> &[Regime] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(n: usize) -> usize {
        3usize.pow(n as u32)
    }

    /// Pattern number `index` in lexicographic order (`Lo < Lin < Hi`, first
    /// coordinate most significant).
    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut labels = vec![Regime::Lo; n];
        for slot in labels.iter_mut().rev() {
            *slot = Regime::ALL[index % 3];
            index /= 3;
        }
        Self(labels)
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, r| acc * 3 + *r as usize)
    }

    pub fn code(&self) -> String {
        self.0.iter().map(|r| r.code()).collect()
    }

    pub fn from_code(s: &str) -> Option<Self> {
        s.chars()
            .map(Regime::from_code)
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for RegimePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl Serialize for RegimePattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for RegimePattern {
    fn deserialize<De: serde::Deserializer<'de>>(de: De) -> std::result::Result<Self, De::Error> {
        let s = String::deserialize(de)?;
        RegimePattern::from_code(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad regime code {s:?}")))
    }
}

/// Classify each coordinate by `d_i x_i` against the faces `0` and `1`.
pub fn regime_of(spec: &NetworkSpec, x: &DVector<f64>, tol: f64) -> RegimePattern {
    regime_of_slice(spec.d.as_slice(), x.as_slice(), tol)
}

pub(crate) fn regime_of_slice(d: &[f64], x: &[f64], tol: f64) -> RegimePattern {
    RegimePattern(
        x.iter()
            .zip(d)
            .map(|(&xi, &di)| {
                let y = di * xi;
                if y <= tol {
                    Regime::Lo
                } else if y >= 1.0 - tol {
                    Regime::Hi
                } else {
                    Regime::Lin
                }
            })
            .collect(),
    )
}

/// Position of the timescale parameter: one of the two limits or a finite member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "limit", content = "value", rename_all = "lowercase")]
pub enum Tau {
    /// `τ → 0⁺`: the projected dynamical system.
    Fast,
    Finite(f64),
    /// `τ → +∞`: the hard-selector limit, in slow time.
    Slow,
}

impl Tau {
    pub fn finite(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Tau::Finite(value))
        } else {
            Err(Error::Domain(format!(
                "τ must be positive and finite, got {value}"
            )))
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Tau::Finite(v) => Some(*v),
            _ => None,
        }
    }
}

fn check_in_polytope(spec: &NetworkSpec, x: &DVector<f64>, what: &str) -> Result<()> {
    spec.check_dim(x, what)?;
    if !spec.polytope().contains(x, tol::MEMBERSHIP) {
        return Err(Error::Domain(format!(
            "{what}: state outside X (excursion {:.3e})",
            spec.polytope().excursion(x)
        )));
    }
    Ok(())
}

/// `f_τ(x) = (1/τ)(-Dx + [Dx + τ(Ax+u)]_0^1)`.
///
/// At `τ = 1` the field is evaluated as `-Dx + [Wx+u]_0^1`, so it agrees with
/// the canonical network bit for bit.
pub fn tau_ltn_field(spec: &NetworkSpec, tau: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!(
            "τ must be positive and finite, got {tau}"
        )));
    }
    check_in_polytope(spec, x, "tau_ltn_field")?;
    Ok(tau_field_unchecked(spec, tau, x))
}

pub(crate) fn tau_field_unchecked(spec: &NetworkSpec, tau: f64, x: &DVector<f64>) -> DVector<f64> {
    let n = spec.n();
    if tau == 1.0 {
        let s = spec.synaptic_input(x);
        return DVector::from_fn(n, |i, _| -spec.d[i] * x[i] + sat(s[i], 1.0));
    }
    let g = spec.drift(x);
    DVector::from_fn(n, |i, _| {
        let y = spec.d[i] * x[i];
        (-y + sat(y + tau * g[i], 1.0)) / tau
    })
}

/// Slow-time member `F_τ(x) = -Dx + [Dx + τ(Ax+u)]_0^1 = τ f_τ(x)`.
pub fn tau_ltn_field_slow(spec: &NetworkSpec, tau: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!(
            "τ must be positive and finite, got {tau}"
        )));
    }
    check_in_polytope(spec, x, "tau_ltn_field_slow")?;
    let g = spec.drift(x);
    Ok(DVector::from_fn(spec.n(), |i, _| {
        let y = spec.d[i] * x[i];
        -y + sat(y + tau * g[i], 1.0)
    }))
}

/// Slow pointwise limit `F_∞`: `-d_i x_i`, `0` or `1 - d_i x_i` by the sign of
/// `g_i = (Ax+u)_i`, with `|g_i| ≤ band` treated as zero.
pub fn slow_field_pointwise_banded(
    spec: &NetworkSpec,
    x: &DVector<f64>,
    band: f64,
) -> DVector<f64> {
    let g = spec.drift(x);
    DVector::from_fn(spec.n(), |i, _| {
        let y = spec.d[i] * x[i];
        if g[i] > band {
            1.0 - y
        } else if g[i] < -band {
            -y
        } else {
            0.0
        }
    })
}

pub fn slow_field_pointwise(spec: &NetworkSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_in_polytope(spec, x, "slow_field_pointwise")?;
    Ok(slow_field_pointwise_banded(spec, x, tol::ZERO_BAND))
}

/// The fast-limit field `Π_X(x, Ax+u)`.
pub fn pds_field(spec: &NetworkSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_in_polytope(spec, x, "pds_field")?;
    let g = spec.drift(x);
    Ok(crate::integrate::project_tangent(
        spec,
        x,
        &g,
        tol::MEMBERSHIP,
    ))
}

/// Evaluate the field selected by `tau`: the projected drift, a finite member
/// in fast time, or the slow pointwise limit.
pub fn field(spec: &NetworkSpec, tau: Tau, x: &DVector<f64>) -> Result<DVector<f64>> {
    match tau {
        Tau::Fast => pds_field(spec, x),
        Tau::Finite(t) => tau_ltn_field(spec, t, x),
        Tau::Slow => slow_field_pointwise(spec, x),
    }
}

/// Smallest `τ₀` such that `F_τ(x) = F_∞(x)` exactly for every `τ ≥ τ₀`.
///
/// Requires every `|g_i| > band`; returns `None` otherwise. For `g_i > 0` the
/// saturation pins at 1 once `τ g_i ≥ 1 - d_i x_i`, and for `g_i < 0` it pins
/// at 0 once `τ |g_i| ≥ d_i x_i`.
pub fn slow_pinning_tau(spec: &NetworkSpec, x: &DVector<f64>, band: f64) -> Option<f64> {
    let g = spec.drift(x);
    let mut tau0 = 0.0f64;
    for i in 0..spec.n() {
        let y = spec.d[i] * x[i];
        let need = if g[i] > band {
            (1.0 - y) / g[i]
        } else if g[i] < -band {
            y / -g[i]
        } else {
            return None;
        };
        tau0 = tau0.max(need);
    }
    Some(tau0)
}

/// Row-major copy of `(A, d, u)` for allocation-free inner loops.
#[derive(Debug, Clone)]
pub(crate) struct FlatNet {
    pub n: usize,
    pub a: Vec<f64>,
    pub d: Vec<f64>,
    pub u: Vec<f64>,
}

impl FlatNet {
    pub fn new(spec: &NetworkSpec) -> Self {
        let n = spec.n();
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a.push(spec.a[(i, j)]);
            }
        }
        Self {
            n,
            a,
            d: spec.d.iter().copied().collect(),
            u: spec.u.iter().copied().collect(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn g_i(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.u[i]
    }

    pub fn g_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.g_i(i, x);
        }
    }

    /// `A_i · v` (no input term).
    #[inline]
    pub fn a_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}
