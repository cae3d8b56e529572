//! The six-dimensional Schrödinger algebra spanned by `{I, X, P, X², P², D}`.
//!
//! Elements are complex coefficient vectors over the fixed basis. Brackets
//! come from an explicit structure-constant table; conjugation by the gauge
//! map `R(μ, ν, κ) = exp(iμP) exp(iνD) exp(iκP²)` uses closed forms that are
//! cross-checked against the `exp(ad)` series.

use std::ops::{Add, Index, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BasisOp {
    I,
    X,
    P,
    X2,
    P2,
    D,
}

impl BasisOp {
    pub const ALL: [BasisOp; 6] = [
        BasisOp::I,
        BasisOp::X,
        BasisOp::P,
        BasisOp::X2,
        BasisOp::P2,
        BasisOp::D,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisOp::I => "I",
            BasisOp::X => "X",
            BasisOp::P => "P",
            BasisOp::X2 => "X2",
            BasisOp::P2 => "P2",
            BasisOp::D => "D",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct AlgebraElement {
    pub coeffs: [Complex64; 6],
}

impl AlgebraElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn basis(op: BasisOp) -> Self {
        Self::term(op, ONE)
    }

    pub fn term(op: BasisOp, c: Complex64) -> Self {
        let mut e = Self::zero();
        e.coeffs[op.index()] = c;
        e
    }

    /// Builds an element from `(operator, coefficient)` pairs; repeated
    /// operators accumulate.
    pub fn from_terms(terms: &[(BasisOp, Complex64)]) -> Self {
        terms
            .iter()
            .fold(Self::zero(), |acc, &(op, c)| acc + Self::term(op, c))
    }

    pub fn coeff(&self, op: BasisOp) -> Complex64 {
        self.coeffs[op.index()]
    }

    pub fn max_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == ZERO)
    }
}

impl Index<BasisOp> for AlgebraElement {
    type Output = Complex64;
    fn index(&self, op: BasisOp) -> &Complex64 {
        &self.coeffs[op.index()]
    }
}

impl Add for AlgebraElement {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl Sub for AlgebraElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for AlgebraElement {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl Mul<Complex64> for AlgebraElement {
    type Output = Self;
    fn mul(mut self, s: Complex64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
        self
    }
}

impl Mul<f64> for AlgebraElement {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self * Complex64::new(s, 0.0)
    }
}

/// Matrix of `ad_a = [a, ·]` in the basis order of [`BasisOp::ALL`];
/// `m[row][col]` is the `row` coefficient of `[a, e_col]`.
pub type AdjointMatrix = [[Complex64; 6]; 6];

/// Parameters of `R(μ, ν, κ) = exp(iμP) exp(iνD) exp(iκP²)`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct GaugeParams {
    pub mu: f64,
    pub nu: f64,
    pub kappa: f64,
}

impl GaugeParams {
    pub fn new(mu: f64, nu: f64, kappa: f64) -> Self {
        Self { mu, nu, kappa }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Parameters of the product `R(outer) R(inner)`.
    ///
    /// The factors generated by `P`, `D`, `P²` close on themselves, so the
    /// product is again of the three-factor form.
    pub fn compose(outer: GaugeParams, inner: GaugeParams) -> GaugeParams {
        GaugeParams {
            mu: outer.mu + inner.mu * (-outer.nu).exp(),
            nu: outer.nu + inner.nu,
            kappa: inner.kappa + outer.kappa * (2.0 * inner.nu).exp(),
        }
    }
}

fn i(v: f64) -> Complex64 {
    Complex64::new(0.0, v)
}

fn structure_table() -> &'static [[AlgebraElement; 6]; 6] {
    static TABLE: OnceLock<[[AlgebraElement; 6]; 6]> = OnceLock::new();
    TABLE.get_or_init(|| {
        use BasisOp::*;
        // Nonzero brackets; the rest follow by antisymmetry.
        let listed = [
            (X, P, AlgebraElement::term(I, i(1.0))),
            (X2, P2, AlgebraElement::term(D, i(4.0))),
            (D, X2, AlgebraElement::term(X2, i(-2.0))),
            (D, P2, AlgebraElement::term(P2, i(2.0))),
            (P2, X, AlgebraElement::term(P, i(-2.0))),
            (X2, P, AlgebraElement::term(X, i(2.0))),
            (D, X, AlgebraElement::term(X, i(-1.0))),
            (D, P, AlgebraElement::term(P, i(1.0))),
        ];
        let mut t = [[AlgebraElement::zero(); 6]; 6];
        for (a, b, c) in listed {
            t[a.index()][b.index()] = c;
            t[b.index()][a.index()] = -c;
        }
        t
    })
}

/// `[a, b]` expanded over the basis.
pub fn commutator(a: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
    let table = structure_table();
    let mut out = AlgebraElement::zero();
    for (ia, ca) in a.coeffs.iter().enumerate() {
        if *ca == ZERO {
            continue;
        }
        for (ib, cb) in b.coeffs.iter().enumerate() {
            if *cb == ZERO {
                continue;
            }
            out = out + table[ia][ib] * (ca * cb);
        }
    }
    out
}

pub fn adjoint_matrix(a: &AlgebraElement) -> AdjointMatrix {
    let mut m = [[ZERO; 6]; 6];
    for col in BasisOp::ALL {
        let image = commutator(a, &AlgebraElement::basis(col));
        for row in BasisOp::ALL {
            m[row.index()][col.index()] = image[row];
        }
    }
    m
}

pub fn apply_matrix(m: &AdjointMatrix, b: &AlgebraElement) -> AlgebraElement {
    let mut out = AlgebraElement::zero();
    for (row, out_c) in out.coeffs.iter_mut().enumerate() {
        *out_c = (0..6).map(|col| m[row][col] * b.coeffs[col]).sum();
    }
    out
}

const SERIES_TOL: f64 = 1e-18;
const SERIES_MAX_TERMS: usize = 60;

/// `exp(B) b exp(−B) = Σₙ adᴮⁿ(b)/n!`, summed until a term drops below
/// `1e-18` in max-norm or 60 terms have been added.
pub fn exp_ad_series(generator: &AlgebraElement, b: &AlgebraElement) -> AlgebraElement {
    let ad = adjoint_matrix(generator);
    let mut term = *b;
    let mut sum = *b;
    for n in 1..=SERIES_MAX_TERMS {
        term = apply_matrix(&ad, &term) * (1.0 / n as f64);
        sum = sum + term;
        if term.max_norm() < SERIES_TOL {
            break;
        }
    }
    sum
}

/// Series form of `R a R⁻¹`, applying the factors innermost first.
pub fn conjugate_by_series(a: &AlgebraElement, g: GaugeParams) -> AlgebraElement {
    let gen = |op, theta: f64| AlgebraElement::term(op, i(theta));
    let a = exp_ad_series(&gen(BasisOp::P2, g.kappa), a);
    let a = exp_ad_series(&gen(BasisOp::D, g.nu), &a);
    exp_ad_series(&gen(BasisOp::P, g.mu), &a)
}

/// Closed-form image of a basis operator under `R · R⁻¹`.
fn conjugate_basis(op: BasisOp, g: GaugeParams) -> AlgebraElement {
    use BasisOp::*;
    let GaugeParams { mu, nu, kappa } = g;
    let (e1, e2) = (nu.exp(), (2.0 * nu).exp());
    let (em1, em2) = ((-nu).exp(), (-2.0 * nu).exp());
    let r = |v: f64| Complex64::new(v, 0.0);
    match op {
        I => AlgebraElement::basis(I),
        X => AlgebraElement::from_terms(&[
            (X, r(e1)),
            (P, r(2.0 * kappa * em1)),
            (I, r(e1 * mu)),
        ]),
        X2 => AlgebraElement::from_terms(&[
            (X2, r(e2)),
            (D, r(4.0 * kappa)),
            (P2, r(4.0 * kappa * kappa * em2)),
            (X, r(2.0 * e2 * mu)),
            (P, r(4.0 * kappa * mu)),
            (I, r(e2 * mu * mu)),
        ]),
        P => AlgebraElement::term(P, r(em1)),
        P2 => AlgebraElement::term(P2, r(em2)),
        D => AlgebraElement::from_terms(&[(D, ONE), (P, r(mu)), (P2, r(2.0 * kappa * em2))]),
    }
}

/// `R(μ, ν, κ) a R(μ, ν, κ)⁻¹` by linear extension of the closed forms.
pub fn conjugate_element(a: &AlgebraElement, g: GaugeParams) -> AlgebraElement {
    BasisOp::ALL
        .iter()
        .filter(|op| a[**op] != ZERO)
        .fold(AlgebraElement::zero(), |acc, &op| {
            acc + conjugate_basis(op, g) * a[op]
        })
}
