//! Real functions of time: closed forms, tabulated samples, and the algebra
//! of sums, products, compositions and monotone inverses built from them.
//!
//! Every function is evaluated together with its first derivative as a
//! [`Dual`] number. Tables store a slope at every sample and interpolate
//! with cubic Hermite polynomials, so tables produced internally (where the
//! slopes are known exactly) are fourth-order accurate between samples.
//! Tables read from user data get monotonicity-limited slopes.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Value and first derivative carried together.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub const fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, e * self.d)
    }

    pub fn ln(self) -> Self {
        Self::new(self.v.ln(), self.d / self.v)
    }

    pub fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Self::constant(1.0);
        }
        Self::new(self.v.powf(p), p * self.v.powf(p - 1.0) * self.d)
    }

    pub fn recip(self) -> Self {
        Self::new(1.0 / self.v, -self.d / (self.v * self.v))
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.v * s, self.d * s)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        self * o.recip()
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual::new(self.v + o, self.d)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, o: f64) -> Dual {
        Dual::new(self.v - o, self.d)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        self.scale(o)
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        o.scale(self)
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn lo<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }

    pub fn hi<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// An interval of the real line; infinite ends serialize as `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    #[serde(serialize_with = "inf_as_null::serialize", deserialize_with = "inf_as_null::lo")]
    pub lo: f64,
    #[serde(serialize_with = "inf_as_null::serialize", deserialize_with = "inf_as_null::hi")]
    pub hi: f64,
    #[serde(default)]
    pub open_lo: bool,
    #[serde(default)]
    pub open_hi: bool,
}

impl Domain {
    pub const ALL: Domain = Domain {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        open_lo: false,
        open_hi: false,
    };

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            open_lo: false,
            open_hi: false,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    fn slack(&self, t: f64) -> f64 {
        1e-12 * t.abs().max(1.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        if t.is_nan() {
            return false;
        }
        let lo_ok = if self.open_lo {
            t > self.lo
        } else {
            t >= self.lo - self.slack(self.lo)
        };
        let hi_ok = if self.open_hi {
            t < self.hi
        } else {
            t <= self.hi + self.slack(self.hi)
        };
        lo_ok && hi_ok
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                t,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn intersect(&self, other: &Domain) -> Domain {
        let (lo, open_lo) = if self.lo > other.lo {
            (self.lo, self.open_lo)
        } else if other.lo > self.lo {
            (other.lo, other.open_lo)
        } else {
            (self.lo, self.open_lo || other.open_lo)
        };
        let (hi, open_hi) = if self.hi < other.hi {
            (self.hi, self.open_hi)
        } else if other.hi < self.hi {
            (other.hi, other.open_hi)
        } else {
            (self.hi, self.open_hi || other.open_hi)
        };
        Domain {
            lo,
            hi,
            open_lo,
            open_hi,
        }
    }

    /// True when `[lo, hi]` lies inside this domain.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.contains(lo) && self.contains(hi)
    }
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    t: Vec<f64>,
    v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dv: Option<Vec<f64>>,
}

/// Samples with a slope at every node, interpolated by cubic Hermite
/// polynomials. No extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct Table {
    t: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
}

impl TryFrom<RawTable> for Table {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Table> {
        match raw.dv {
            Some(dv) => Table::with_slopes(raw.t, raw.v, dv),
            None => Table::monotone(raw.t, raw.v),
        }
    }
}

impl From<Table> for RawTable {
    fn from(t: Table) -> RawTable {
        RawTable {
            t: t.t,
            v: t.v,
            dv: Some(t.dv),
        }
    }
}

pub const MIN_TABLE_SAMPLES: usize = 4;

fn check_grid(t: &[f64]) -> Result<()> {
    if t.len() < MIN_TABLE_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TABLE_SAMPLES} samples, got {}",
            t.len()
        )));
    }
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample time".into()));
    }
    if let Some(w) = t.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "sample times not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

impl Table {
    /// Table with caller-supplied node slopes.
    pub fn with_slopes(t: Vec<f64>, v: Vec<f64>, dv: Vec<f64>) -> Result<Self> {
        check_grid(&t)?;
        if v.len() != t.len() || dv.len() != t.len() {
            return Err(Error::InvalidArgument(format!(
                "table lengths differ: t {}, v {}, dv {}",
                t.len(),
                v.len(),
                dv.len()
            )));
        }
        if v.iter().chain(&dv).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite table entry".into()));
        }
        Ok(Self { t, v, dv })
    }

    /// Table whose slopes come from the Fritsch–Carlson limiter, so that
    /// monotone data give a monotone interpolant.
    pub fn monotone(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_grid(&t)?;
        if v.len() != t.len() {
            return Err(Error::InvalidArgument(format!(
                "table lengths differ: t {}, v {}",
                t.len(),
                v.len()
            )));
        }
        let dv = fritsch_carlson_slopes(&t, &v);
        Self::with_slopes(t, v, dv)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn slopes(&self) -> &[f64] {
        &self.dv
    }

    pub fn domain(&self) -> Domain {
        Domain::closed(self.t[0], *self.t.last().unwrap())
    }

    fn interval(&self, t: f64) -> usize {
        let k = self.t.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(self.t.len() - 2)
    }

    fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.t[0], *self.t.last().unwrap())
    }

    pub fn dual(&self, t: f64) -> Dual {
        let t = self.clamp(t);
        let k = self.interval(t);
        let h = self.t[k + 1] - self.t[k];
        let s = (t - self.t[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let (y0, y1, m0, m1) = (self.v[k], self.v[k + 1], self.dv[k], self.dv[k + 1]);
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * m1;
        let d = (6.0 * s2 - 6.0 * s) * (y0 - y1) / h
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (3.0 * s2 - 2.0 * s) * m1;
        Dual::new(v, d)
    }

    fn second_derivative_in(&self, k: usize, s: f64) -> f64 {
        let h = self.t[k + 1] - self.t[k];
        ((12.0 * s - 6.0) * (self.v[k] - self.v[k + 1])) / (h * h)
            + ((6.0 * s - 4.0) * self.dv[k] + (6.0 * s - 2.0) * self.dv[k + 1]) / h
    }

    /// Table of the interpolant's derivative; node slopes average the
    /// one-sided second derivatives.
    fn derivative(&self) -> Table {
        let n = self.t.len();
        let dd: Vec<f64> = (0..n)
            .map(|j| {
                let left = (j > 0).then(|| self.second_derivative_in(j - 1, 1.0));
                let right = (j + 1 < n).then(|| self.second_derivative_in(j, 0.0));
                match (left, right) {
                    (Some(l), Some(r)) => 0.5 * (l + r),
                    (Some(l), None) => l,
                    (None, Some(r)) => r,
                    (None, None) => 0.0,
                }
            })
            .collect();
        Table {
            t: self.t.clone(),
            v: self.dv.clone(),
            dv: dd,
        }
    }
}

fn fritsch_carlson_slopes(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    let delta: Vec<f64> = (0..n - 1)
        .map(|k| (v[k + 1] - v[k]) / (t[k + 1] - t[k]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for k in 1..n - 1 {
        m[k] = if delta[k - 1] * delta[k] <= 0.0 {
            0.0
        } else {
            0.5 * (delta[k - 1] + delta[k])
        };
    }
    for k in 0..n - 1 {
        if delta[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / delta[k];
        let b = m[k + 1] / delta[k];
        if a < 0.0 {
            m[k] = 0.0;
        }
        if b < 0.0 {
            m[k + 1] = 0.0;
        }
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[k] = tau * a * delta[k];
            m[k + 1] = tau * b * delta[k];
        }
    }
    m
}

/// The closed forms and combinators a [`TimeFunction`] can be built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Constant {
        c: f64,
    },
    /// `Σ cₖ tᵏ`
    Poly {
        coeffs: Vec<f64>,
    },
    /// `scale · e^{rate (t − t0)}`
    Exp {
        scale: f64,
        rate: f64,
        t0: f64,
    },
    /// `scale · (t / t0)^exponent`
    Power {
        scale: f64,
        t0: f64,
        exponent: f64,
    },
    /// `scale · (1 + slope (t − t0))^exponent`
    AffinePower {
        scale: f64,
        t0: f64,
        slope: f64,
        exponent: f64,
    },
    /// `scale · ln(1 + slope (t − t0))`
    Log {
        scale: f64,
        t0: f64,
        slope: f64,
    },
    Table(Table),
    Sum {
        terms: Vec<TimeFunction>,
    },
    Product {
        factors: Vec<TimeFunction>,
    },
    /// `outer(inner(t))`
    Compose {
        outer: Box<TimeFunction>,
        inner: Box<TimeFunction>,
    },
    /// Inverse of a strictly monotone `forward`; `knots` tabulate the
    /// inverse and seed a safeguarded Newton solve.
    Inverse {
        forward: Box<TimeFunction>,
        knots: Table,
    },
}

impl Expr {
    /// Natural domain of the closed form (combinators take the
    /// intersection of their parts).
    fn natural_domain(&self) -> Domain {
        match self {
            Expr::Constant { .. } | Expr::Poly { .. } | Expr::Exp { .. } => Domain::ALL,
            Expr::Power { t0, exponent, .. } => {
                let open = *exponent < 0.0;
                if *t0 > 0.0 {
                    Domain {
                        lo: 0.0,
                        hi: f64::INFINITY,
                        open_lo: open,
                        open_hi: false,
                    }
                } else {
                    Domain {
                        lo: f64::NEG_INFINITY,
                        hi: 0.0,
                        open_lo: false,
                        open_hi: open,
                    }
                }
            }
            Expr::AffinePower { t0, slope, .. } | Expr::Log { t0, slope, .. } => {
                if *slope > 0.0 {
                    Domain {
                        lo: t0 - 1.0 / slope,
                        hi: f64::INFINITY,
                        open_lo: true,
                        open_hi: false,
                    }
                } else if *slope < 0.0 {
                    Domain {
                        lo: f64::NEG_INFINITY,
                        hi: t0 - 1.0 / slope,
                        open_lo: false,
                        open_hi: true,
                    }
                } else {
                    Domain::ALL
                }
            }
            Expr::Table(tab) => tab.domain(),
            Expr::Sum { terms: parts } | Expr::Product { factors: parts } => parts
                .iter()
                .fold(Domain::ALL, |d, p| d.intersect(&p.domain)),
            Expr::Compose { inner, .. } => inner.domain,
            Expr::Inverse { knots, .. } => knots.domain(),
        }
    }
}

/// A real function of time on a domain.
///
/// Serialized as its [`Expr`] when the domain is the natural one, and as
/// `{"restrict": domain, "function": expr}` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawFunction", from = "RawFunction")]
pub struct TimeFunction {
    pub spec: Expr,
    pub domain: Domain,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RestrictedFunction {
    restrict: Domain,
    function: Expr,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawFunction {
    Restricted(RestrictedFunction),
    Plain(Expr),
}

impl From<TimeFunction> for RawFunction {
    fn from(f: TimeFunction) -> Self {
        if f.domain == f.spec.natural_domain() {
            RawFunction::Plain(f.spec)
        } else {
            RawFunction::Restricted(RestrictedFunction {
                restrict: f.domain,
                function: f.spec,
            })
        }
    }
}

impl From<RawFunction> for TimeFunction {
    fn from(r: RawFunction) -> Self {
        match r {
            RawFunction::Plain(e) => TimeFunction::new(e),
            RawFunction::Restricted(RestrictedFunction { restrict, function }) => {
                TimeFunction::new(function).restricted(restrict)
            }
        }
    }
}

impl From<Expr> for TimeFunction {
    fn from(spec: Expr) -> Self {
        TimeFunction::new(spec)
    }
}

impl TimeFunction {
    pub fn new(spec: Expr) -> Self {
        let domain = spec.natural_domain();
        Self { spec, domain }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Expr::Constant { c })
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn poly(coeffs: Vec<f64>) -> Self {
        Self::new(Expr::Poly { coeffs })
    }

    pub fn exp(scale: f64, rate: f64, t0: f64) -> Self {
        Self::new(Expr::Exp { scale, rate, t0 })
    }

    pub fn power(scale: f64, t0: f64, exponent: f64) -> Self {
        Self::new(Expr::Power {
            scale,
            t0,
            exponent,
        })
    }

    pub fn affine_power(scale: f64, t0: f64, slope: f64, exponent: f64) -> Self {
        Self::new(Expr::AffinePower {
            scale,
            t0,
            slope,
            exponent,
        })
    }

    pub fn log(scale: f64, t0: f64, slope: f64) -> Self {
        Self::new(Expr::Log { scale, t0, slope })
    }

    pub fn table(table: Table) -> Self {
        Self::new(Expr::Table(table))
    }

    /// Terms are added left to right.
    pub fn sum(terms: Vec<TimeFunction>) -> Self {
        Self::new(Expr::Sum { terms })
    }

    pub fn product(factors: Vec<TimeFunction>) -> Self {
        Self::new(Expr::Product { factors })
    }

    pub fn composed(outer: TimeFunction, inner: TimeFunction) -> Self {
        Self::new(Expr::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        })
    }

    /// Narrows the domain to its intersection with `d`.
    pub fn restricted(mut self, d: Domain) -> Self {
        self.domain = self.domain.intersect(&d);
        self
    }

    /// Value and derivative at `t`.
    pub fn dual(&self, t: f64) -> Result<Dual> {
        self.domain.check(t)?;
        self.dual_unchecked(t)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.dual(t)?.v)
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        Ok(self.dual(t)?.d)
    }

    fn dual_unchecked(&self, t: f64) -> Result<Dual> {
        Ok(match &self.spec {
            Expr::Constant { c } => Dual::constant(*c),
            Expr::Poly { coeffs } => coeffs
                .iter()
                .rev()
                .fold(Dual::constant(0.0), |acc, &c| acc * Dual::new(t, 1.0) + c),
            Expr::Exp { scale, rate, t0 } => {
                let v = scale * (rate * (t - t0)).exp();
                Dual::new(v, rate * v)
            }
            Expr::Power {
                scale,
                t0,
                exponent,
            } => Dual::new(t / t0, 1.0 / t0).powf(*exponent) * *scale,
            Expr::AffinePower {
                scale,
                t0,
                slope,
                exponent,
            } => Dual::new(1.0 + slope * (t - t0), *slope).powf(*exponent) * *scale,
            Expr::Log { scale, t0, slope } => {
                let x = slope * (t - t0);
                Dual::new(scale * x.ln_1p(), scale * slope / (1.0 + x))
            }
            Expr::Table(tab) => tab.dual(t),
            Expr::Sum { terms } => {
                let mut acc = Dual::constant(0.0);
                for term in terms {
                    acc = acc + term.dual(t)?;
                }
                acc
            }
            Expr::Product { factors } => {
                let mut acc = Dual::constant(1.0);
                for f in factors {
                    acc = acc * f.dual(t)?;
                }
                acc
            }
            Expr::Compose { outer, inner } => {
                let i = inner.dual(t)?;
                let o = outer.dual(i.v)?;
                Dual::new(o.v, o.d * i.d)
            }
            Expr::Inverse { forward, knots } => {
                let x = solve_inverse(forward, knots, t)?;
                let fd = forward.deriv(x)?;
                Dual::new(x, 1.0 / fd)
            }
        })
    }

    /// Sample times when the function is tabulated (directly or through a
    /// combinator), `None` for closed forms.
    pub fn knots(&self) -> Option<Vec<f64>> {
        match &self.spec {
            Expr::Table(tab) => Some(tab.t.clone()),
            Expr::Inverse { knots, .. } => Some(knots.t.clone()),
            Expr::Sum { terms: parts } | Expr::Product { factors: parts } => {
                parts.iter().find_map(|p| p.knots())
            }
            Expr::Compose { inner, .. } => inner.knots(),
            _ => None,
        }
    }

    /// True when the function is a constant zero.
    pub fn is_zero(&self) -> bool {
        match &self.spec {
            Expr::Constant { c } => *c == 0.0,
            Expr::Poly { coeffs } => coeffs.iter().all(|c| *c == 0.0),
            _ => false,
        }
    }

    /// The derivative as a new function on the same domain.
    pub fn derivative(&self) -> Result<TimeFunction> {
        let spec = match &self.spec {
            Expr::Constant { .. } => Expr::Constant { c: 0.0 },
            Expr::Poly { coeffs } => Expr::Poly {
                coeffs: if coeffs.len() <= 1 {
                    vec![0.0]
                } else {
                    coeffs
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, c)| c * k as f64)
                        .collect()
                },
            },
            Expr::Exp { scale, rate, t0 } => Expr::Exp {
                scale: scale * rate,
                rate: *rate,
                t0: *t0,
            },
            Expr::Power {
                scale,
                t0,
                exponent,
            } => {
                if *exponent == 0.0 {
                    Expr::Constant { c: 0.0 }
                } else {
                    Expr::Power {
                        scale: scale * exponent / t0,
                        t0: *t0,
                        exponent: exponent - 1.0,
                    }
                }
            }
            Expr::AffinePower {
                scale,
                t0,
                slope,
                exponent,
            } => {
                if *exponent == 0.0 {
                    Expr::Constant { c: 0.0 }
                } else {
                    Expr::AffinePower {
                        scale: scale * exponent * slope,
                        t0: *t0,
                        slope: *slope,
                        exponent: exponent - 1.0,
                    }
                }
            }
            Expr::Log { scale, t0, slope } => Expr::AffinePower {
                scale: scale * slope,
                t0: *t0,
                slope: *slope,
                exponent: -1.0,
            },
            Expr::Table(tab) => Expr::Table(tab.derivative()),
            Expr::Sum { terms } => Expr::Sum {
                terms: terms
                    .iter()
                    .map(|t| t.derivative())
                    .collect::<Result<_>>()?,
            },
            Expr::Product { factors } => {
                let mut terms = Vec::with_capacity(factors.len());
                for (i, fi) in factors.iter().enumerate() {
                    let mut parts = factors.clone();
                    parts[i] = fi.derivative()?;
                    terms.push(TimeFunction::product(parts));
                }
                Expr::Sum { terms }
            }
            Expr::Compose { outer, inner } => Expr::Product {
                factors: vec![
                    TimeFunction::composed(outer.derivative()?, (**inner).clone()),
                    inner.derivative()?,
                ],
            },
            Expr::Inverse { forward, knots } => {
                let fd = forward.derivative()?;
                let this = self.clone();
                let tab = tabulate(&knots.t, |y| {
                    let x = this.eval(y)?;
                    let d = fd.dual(x)?;
                    let r = 1.0 / d.v;
                    Ok(Dual::new(r, -d.d * r * r * r))
                })?;
                Expr::Table(tab)
            }
        };
        Ok(TimeFunction::new(spec).restricted(self.domain))
    }
}

/// Safeguarded Newton solve of `forward(x) = y`, bracketed by the knot
/// interval containing `y`.
fn solve_inverse(forward: &TimeFunction, knots: &Table, y: f64) -> Result<f64> {
    let guess = knots.dual(y).v;
    let k = knots.interval(knots.clamp(y));
    let (mut a, mut b) = (knots.v[k], knots.v[k + 1]);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    // Sign of forward' over the bracket (monotone by construction).
    let increasing = knots.v[knots.v.len() - 1] > knots.v[0];
    let mut x = guess.clamp(a, b);
    for _ in 0..80 {
        let fx = forward.dual(x)?;
        let r = fx.v - y;
        if r == 0.0 {
            return Ok(x);
        }
        if (r > 0.0) == increasing {
            b = x;
        } else {
            a = x;
        }
        let mut next = x - r / fx.d;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Builds a table on `grid` from a pointwise value-and-derivative rule.
pub fn tabulate<F>(grid: &[f64], mut rule: F) -> Result<Table>
where
    F: FnMut(f64) -> Result<Dual>,
{
    let mut v = Vec::with_capacity(grid.len());
    let mut dv = Vec::with_capacity(grid.len());
    for &t in grid {
        let d = rule(t)?;
        v.push(d.v);
        dv.push(d.d);
    }
    Table::with_slopes(grid.to_vec(), v, dv)
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + h * i as f64 })
        .collect()
}

/// Cumulative integral `F(t) = ∫_{t0}^{t} f` on `grid` (which must start at
/// `t0`).
///
/// Each interval uses Simpson's rule on one and on two panels; the
/// Richardson combination of the two is kept and their difference is the
/// per-interval error estimate (logged at debug level).
pub fn integrate_cumulative(f: &TimeFunction, t0: f64, grid: &[f64]) -> Result<TimeFunction> {
    check_grid(grid)?;
    if grid[0] != t0 {
        return Err(Error::InvalidArgument(format!(
            "integration grid starts at {} instead of t0 = {t0}",
            grid[0]
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut worst = 0.0_f64;
    let mut fa = f.eval(grid[0])?;
    values.push(0.0);
    slopes.push(fa);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        let fb = f.eval(b)?;
        let fm = f.eval(a + 0.5 * h)?;
        let f1 = f.eval(a + 0.25 * h)?;
        let f3 = f.eval(a + 0.75 * h)?;
        let s1 = h / 6.0 * (fa + 4.0 * fm + fb);
        let s2 = h / 12.0 * (fa + 4.0 * f1 + 2.0 * fm + 4.0 * f3 + fb);
        acc += s2 + (s2 - s1) / 15.0;
        worst = worst.max((s2 - s1).abs());
        values.push(acc);
        slopes.push(fb);
        fa = fb;
    }
    log::debug!("integrate_cumulative: max per-interval Simpson difference {worst:e}");
    Ok(TimeFunction::table(Table::with_slopes(
        grid.to_vec(),
        values,
        slopes,
    )?))
}

const INVERT_DEFAULT_SAMPLES: usize = 2049;
const MONOTONE_TOL: f64 = 1e-12;

/// Inverse of a strictly monotone function, sampled at the function's own
/// knots or, for closed forms on a finite domain, at 2049 uniform points.
pub fn invert_monotone(f: &TimeFunction) -> Result<TimeFunction> {
    let grid = match f.knots() {
        Some(k) => k,
        None if f.domain.is_finite() => {
            let (lo, hi) = (f.domain.lo, f.domain.hi);
            let mut g = uniform_grid(lo, hi, INVERT_DEFAULT_SAMPLES);
            // keep strictly inside open ends
            let eps = 1e-9 * (hi - lo);
            if f.domain.open_lo {
                g[0] = lo + eps;
            }
            if f.domain.open_hi {
                *g.last_mut().unwrap() = hi - eps;
            }
            g
        }
        None => {
            return Err(Error::InvalidArgument(
                "cannot sample a closed form on an infinite domain; give a grid".into(),
            ))
        }
    };
    invert_monotone_on(f, &grid)
}

/// Inverse of a strictly monotone function sampled on `grid`.
pub fn invert_monotone_on(f: &TimeFunction, grid: &[f64]) -> Result<TimeFunction> {
    check_grid(grid)?;
    let mut ys = Vec::with_capacity(grid.len());
    let mut slopes = Vec::with_capacity(grid.len());
    let mut sign = 0.0;
    for &t in grid {
        let d = f.dual(t)?;
        if !(d.d.abs() > MONOTONE_TOL) || (sign != 0.0 && d.d.signum() != sign) {
            return Err(Error::NotInvertible {
                t,
                reason: format!("derivative {} vanishes or changes sign", d.d),
            });
        }
        sign = d.d.signum();
        ys.push(d.v);
        slopes.push(1.0 / d.d);
    }
    let (xs, ys, slopes) = if sign < 0.0 {
        (
            grid.iter().rev().copied().collect::<Vec<_>>(),
            ys.into_iter().rev().collect::<Vec<_>>(),
            slopes.into_iter().rev().collect::<Vec<_>>(),
        )
    } else {
        (grid.to_vec(), ys, slopes)
    };
    if let Some(i) = ys.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NotInvertible {
            t: xs[i + 1],
            reason: "sampled values not strictly monotone".into(),
        });
    }
    let knots = Table::with_slopes(ys, xs, slopes)?;
    Ok(TimeFunction::new(Expr::Inverse {
        forward: Box::new(f.clone()),
        knots,
    }))
}

const COMPOSE_DEFAULT_SAMPLES: usize = 2049;

/// `f ∘ m`, tabulated at the knots of `m` (or on 2049 uniform points of a
/// finite closed-form `m`). Slopes follow the chain rule, so the table is
/// exact at the samples.
pub fn compose(f: &TimeFunction, m: &TimeFunction) -> Result<TimeFunction> {
    let grid = match m.knots() {
        Some(k) => k,
        None if m.domain.is_finite() && !m.domain.open_lo && !m.domain.open_hi => {
            uniform_grid(m.domain.lo, m.domain.hi, COMPOSE_DEFAULT_SAMPLES)
        }
        None => {
            // Closed forms on unbounded domains compose exactly.
            if let Expr::Constant { .. } = f.spec {
                return Ok(f.clone().restricted(m.domain));
            }
            return Ok(TimeFunction::composed(f.clone(), m.clone()));
        }
    };
    compose_on(f, m, &grid)
}

pub fn compose_on(f: &TimeFunction, m: &TimeFunction, grid: &[f64]) -> Result<TimeFunction> {
    if let Expr::Constant { .. } = f.spec {
        let d = Domain::closed(grid[0], *grid.last().unwrap());
        return Ok(f.clone().restricted(d));
    }
    let tab = tabulate(grid, |t| {
        let inner = m.dual(t)?;
        let outer = f.dual(inner.v)?;
        Ok(Dual::new(outer.v, outer.d * inner.d))
    })?;
    Ok(TimeFunction::table(tab))
}

/// A strictly increasing change of time `t ↦ t'` with its inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub forward: TimeFunction,
    pub inverse: TimeFunction,
    pub t0: f64,
    pub t0_prime: f64,
}

impl TimeMap {
    /// Checks `forward(t0) = t0'` and that the map increases at `t0`.
    pub fn new(forward: TimeFunction, inverse: TimeFunction, t0: f64, t0_prime: f64) -> Result<Self> {
        let start = forward.dual(t0)?;
        if start.v != t0_prime {
            return Err(Error::InvalidArgument(format!(
                "forward({t0}) = {} differs from t0' = {t0_prime}",
                start.v
            )));
        }
        if !(start.d > 0.0) {
            return Err(Error::NotInvertible {
                t: t0,
                reason: "map does not increase".into(),
            });
        }
        Ok(Self {
            forward,
            inverse,
            t0,
            t0_prime,
        })
    }

    /// Builds the inverse numerically.
    pub fn from_forward(forward: TimeFunction, t0: f64, t0_prime: f64) -> Result<Self> {
        let inverse = invert_monotone(&forward)?;
        Self::new(forward, inverse, t0, t0_prime)
    }

    pub fn identity() -> Self {
        let id = TimeFunction::poly(vec![0.0, 1.0]);
        Self {
            forward: id.clone(),
            inverse: id,
            t0: 0.0,
            t0_prime: 0.0,
        }
    }

    pub fn to_prime(&self, t: f64) -> Result<f64> {
        self.forward.eval(t)
    }

    pub fn from_prime(&self, t_prime: f64) -> Result<f64> {
        self.inverse.eval(t_prime)
    }

    /// Domain of `t` values the map accepts.
    pub fn domain(&self) -> Domain {
        self.forward.domain
    }

    /// Domain of `t'` values the inverse accepts.
    pub fn prime_domain(&self) -> Domain {
        self.inverse.domain
    }

    /// `max |inverse(forward(t)) − t|` over `grid`.
    pub fn roundtrip_error(&self, grid: &[f64]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for &t in grid {
            let back = self.from_prime(self.to_prime(t)?)?;
            worst = worst.max((back - t).abs());
        }
        Ok(worst)
    }
}
