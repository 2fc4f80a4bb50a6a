//! Forward-mode differentiation on truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] stores the Taylor coefficients of a smooth function of three
//! chart variables at a base point, up to a runtime-chosen total order. All
//! arithmetic and the elementary transcendental functions act on jets by
//! truncated Taylor composition, so every partial derivative that survives
//! the truncation is exact to rounding.
//!
//! Coefficients are stored in the Taylor convention
//! `coeffs[alpha] = d^alpha f / alpha!`, indexed by multi-index in graded
//! order. Products are then plain truncated polynomial convolutions.
//!
//! Singular evaluations (division by zero, `log`/`sqrt` of a non-positive
//! base, the coordinate axis of `atan2`) poison the result with NaN; the
//! poison surfaces as [`Error::SingularEvaluation`] at the `ScalarField`
//! evaluation boundary.

use crate::error::{Error, Result};
use smallvec::SmallVec;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

/// Largest supported truncation order.
pub const MAX_ORDER: usize = 8;

/// Division guard: denominators with |value| below this poison the quotient.
const MIN_DIVISOR: f64 = 1e-14;

type Coeffs = SmallVec<[f64; 20]>;

/// Exponent triple `(i, j, k)` of a mixed partial derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultiIndex(pub [u8; 3]);

impl MultiIndex {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        MultiIndex([i as u8, j as u8, k as u8])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// Position in the graded coefficient layout.
    fn position(&self) -> usize {
        let [i, j, _] = [self.0[0] as usize, self.0[1] as usize, self.0[2] as usize];
        let d = self.degree();
        block_offset(d) + (d - i) * (d - i + 1) / 2 + (d - i - j)
    }

    fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&e| (1..=e as u64).product::<u64>() as f64)
            .product()
    }
}

/// Number of multi-indices of degree < d.
fn block_offset(d: usize) -> usize {
    d * (d + 1) * (d + 2) / 6
}

fn coeff_count(order: usize) -> usize {
    block_offset(order + 1)
}

struct OrderTable {
    /// Multi-indices in layout order.
    midx: Vec<MultiIndex>,
    /// `(ia, ib, itarget)` for every coefficient pair that survives truncation.
    prod: Vec<(u32, u32, u32)>,
}

fn order_table(order: usize) -> &'static OrderTable {
    static TABLES: OnceLock<Vec<OnceLock<OrderTable>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| (0..=MAX_ORDER).map(|_| OnceLock::new()).collect());
    assert!(order <= MAX_ORDER, "jet order {order} exceeds MAX_ORDER");
    tables[order].get_or_init(|| {
        let mut midx = Vec::with_capacity(coeff_count(order));
        for d in 0..=order {
            for i in (0..=d).rev() {
                for j in (0..=d - i).rev() {
                    midx.push(MultiIndex::new(i, j, d - i - j));
                }
            }
        }
        debug_assert!(midx.iter().enumerate().all(|(n, m)| m.position() == n));
        let mut prod = Vec::new();
        for (ia, a) in midx.iter().enumerate() {
            let da = a.degree();
            for (ib, b) in midx.iter().enumerate() {
                if da + b.degree() > order {
                    continue;
                }
                let sum = MultiIndex::new(
                    a.0[0] as usize + b.0[0] as usize,
                    a.0[1] as usize + b.0[1] as usize,
                    a.0[2] as usize + b.0[2] as usize,
                );
                prod.push((ia as u32, ib as u32, sum.position() as u32));
            }
        }
        OrderTable { midx, prod }
    })
}

/// Truncated Taylor polynomial of a function of three chart variables.
#[derive(Clone, Debug)]
pub struct Jet {
    order: usize,
    coeffs: Coeffs,
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut coeffs = Coeffs::new();
        coeffs.resize(coeff_count(order), 0.0);
        coeffs[0] = value;
        Jet { order, coeffs }
    }

    /// Coordinate function seeded at `value`: unit first derivative along
    /// `axis`, all higher derivatives zero.
    pub fn seed(value: f64, axis: usize, order: usize) -> Self {
        let mut jet = Jet::constant(value, order);
        if order >= 1 {
            jet.coeffs[1 + axis] = 1.0;
        }
        jet
    }

    fn poison(order: usize) -> Self {
        let mut coeffs = Coeffs::new();
        coeffs.resize(coeff_count(order), f64::NAN);
        Jet { order, coeffs }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Mixed partial derivative `d^idx f` (not the raw Taylor coefficient).
    pub fn partial_value(&self, idx: MultiIndex) -> f64 {
        assert!(idx.degree() <= self.order, "index degree exceeds jet order");
        self.coeffs[idx.position()] * idx.factorial()
    }

    /// First derivative along `axis` as a jet of one lower order.
    pub fn partial_jet(&self, axis: usize) -> Jet {
        assert!(
            self.order >= 1,
            "partial_jet on an order-0 jet: evaluation depth was underestimated"
        );
        let n = self.order - 1;
        let table = order_table(n);
        let mut coeffs = Coeffs::new();
        coeffs.resize(coeff_count(n), 0.0);
        for (pos, m) in table.midx.iter().enumerate() {
            let mut up = *m;
            up.0[axis] += 1;
            coeffs[pos] = self.coeffs[up.position()] * (up.0[axis] as f64);
        }
        Jet { order: n, coeffs }
    }

    /// Substitute this jet into a univariate function whose Taylor
    /// coefficients at the jet's value are `c[m] = f^(m)(value)/m!`.
    pub(crate) fn compose_univariate(&self, c: &[f64]) -> Jet {
        self.compose(c)
    }

    /// Taylor coefficients along the first axis of a jet built from a pure
    /// axis-0 seed (a univariate function in disguise).
    pub(crate) fn univariate_coeffs(&self) -> Vec<f64> {
        (0..=self.order).map(|m| self.coeffs[block_offset(m)]).collect()
    }

    pub fn truncated(&self, order: usize) -> Jet {
        assert!(order <= self.order);
        if order == self.order {
            return self.clone();
        }
        Jet {
            order,
            coeffs: self.coeffs[..coeff_count(order)].iter().copied().collect(),
        }
    }

    fn zip(a: &Jet, b: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        let n = a.order.min(b.order);
        let len = coeff_count(n);
        let mut coeffs = Coeffs::new();
        coeffs.resize(len, 0.0);
        for i in 0..len {
            coeffs[i] = f(a.coeffs[i], b.coeffs[i]);
        }
        Jet { order: n, coeffs }
    }

    fn mul_jets(a: &Jet, b: &Jet) -> Jet {
        let n = a.order.min(b.order);
        let table = order_table(n);
        let mut coeffs = Coeffs::new();
        coeffs.resize(coeff_count(n), 0.0);
        for &(ia, ib, ic) in &table.prod {
            coeffs[ic as usize] += a.coeffs[ia as usize] * b.coeffs[ib as usize];
        }
        Jet { order: n, coeffs }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= s;
        }
        out
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// Substitute this jet into a univariate function given by its Taylor
    /// coefficients `c[m] = f^(m)(value)/m!` at the jet's value.
    fn compose(&self, c: &[f64]) -> Jet {
        let n = self.order;
        debug_assert_eq!(c.len(), n + 1);
        let mut w = self.clone();
        w.coeffs[0] = 0.0;
        let mut acc = Jet::constant(c[n], n);
        for m in (0..n).rev() {
            acc = Jet::mul_jets(&acc, &w);
            acc.coeffs[0] += c[m];
        }
        acc
    }

    pub fn recip(&self) -> Jet {
        let u0 = self.value();
        if !u0.is_finite() || u0.abs() < MIN_DIVISOR {
            return Jet::poison(self.order);
        }
        let mut c = vec![0.0; self.order + 1];
        let mut t = 1.0 / u0;
        for cm in c.iter_mut() {
            *cm = t;
            t *= -1.0 / u0;
        }
        self.compose(&c)
    }

    pub fn sqrt(&self) -> Jet {
        let u0 = self.value();
        if !(u0 > 0.0) && !(u0 == 0.0 && self.order == 0) {
            return Jet::poison(self.order);
        }
        if self.order == 0 {
            return Jet::constant(u0.sqrt(), 0);
        }
        let mut c = vec![0.0; self.order + 1];
        c[0] = u0.sqrt();
        for m in 1..=self.order {
            c[m] = c[m - 1] * (1.5 - m as f64) / (m as f64 * u0);
        }
        self.compose(&c)
    }

    pub fn sin(&self) -> Jet {
        self.compose(&trig_coeffs(self.value(), self.order, false))
    }

    pub fn cos(&self) -> Jet {
        self.compose(&trig_coeffs(self.value(), self.order, true))
    }

    pub fn tan(&self) -> Jet {
        self.sin() / self.cos()
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut c = vec![0.0; self.order + 1];
        let mut f = 1.0;
        for (m, cm) in c.iter_mut().enumerate() {
            if m > 0 {
                f /= m as f64;
            }
            *cm = e * f;
        }
        self.compose(&c)
    }

    pub fn ln(&self) -> Jet {
        let u0 = self.value();
        if !(u0 > 0.0) {
            return Jet::poison(self.order);
        }
        let mut c = vec![0.0; self.order + 1];
        c[0] = u0.ln();
        let mut t = 1.0;
        for (m, cm) in c.iter_mut().enumerate().skip(1) {
            t /= u0;
            *cm = if m % 2 == 1 { t / m as f64 } else { -t / m as f64 };
        }
        self.compose(&c)
    }

    pub fn powi(&self, k: i32) -> Jet {
        if k < 0 {
            return self.powi(-k).recip();
        }
        let mut acc = Jet::constant(1.0, self.order);
        let mut base = self.clone();
        let mut e = k as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = Jet::mul_jets(&acc, &base);
            }
            e >>= 1;
            if e > 0 {
                base = Jet::mul_jets(&base, &base);
            }
        }
        acc
    }

    pub fn atan(&self) -> Jet {
        let u0 = self.value();
        let n = self.order;
        // Taylor coefficients of atan at u0: integrate the series of
        // 1/(1 + (u0 + e)^2) = 1/((1+u0^2) + 2 u0 e + e^2).
        let mut den = vec![0.0; n.max(1)];
        den[0] = 1.0 + u0 * u0;
        if n >= 2 {
            den[1] = 2.0 * u0;
        }
        if n >= 3 {
            den[2] = 1.0;
        }
        let mut h = vec![0.0; n.max(1)];
        h[0] = 1.0 / den[0];
        for m in 1..n {
            let mut s = 0.0;
            for j in 1..=m.min(2) {
                s += den[j] * h[m - j];
            }
            h[m] = -s / den[0];
        }
        let mut c = vec![0.0; n + 1];
        c[0] = u0.atan();
        for m in 1..=n {
            c[m] = h[m - 1] / m as f64;
        }
        self.compose(&c)
    }

    /// Two-argument arctangent of jets, defined away from `x = y = 0`.
    pub fn atan2(y: &Jet, x: &Jet) -> Jet {
        let (x0, y0) = (x.value(), y.value());
        let r2 = x0 * x0 + y0 * y0;
        let order = x.order.min(y.order);
        if !r2.is_finite() || r2 < 1e-24 {
            return Jet::poison(order);
        }
        // atan2(y, x) = atan2(y0, x0) + atan((x0 y - y0 x)/(x0 x + y0 y))
        // near the base point; the divisor starts at r2 > 0.
        let num = &y.scale(x0) - &x.scale(y0);
        let den = &x.scale(x0) + &y.scale(y0);
        (num / den).atan().add_scalar(y0.atan2(x0))
    }
}

fn trig_coeffs(u0: f64, order: usize, cosine: bool) -> Vec<f64> {
    let (s, c) = u0.sin_cos();
    let cycle = if cosine {
        [c, -s, -c, s]
    } else {
        [s, c, -s, -c]
    };
    let mut out = vec![0.0; order + 1];
    let mut f = 1.0;
    for (m, o) in out.iter_mut().enumerate() {
        if m > 0 {
            f /= m as f64;
        }
        *o = cycle[m % 4] * f;
    }
    out
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                $trait::$method(&self, &rhs)
            }
        }
        impl $trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                $trait::$method(&self, rhs)
            }
        }
        impl $trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                $trait::$method(self, &rhs)
            }
        }
    };
}

impl_binop!(Add, add, |a, b| Jet::zip(a, b, |x, y| x + y));
impl_binop!(Sub, sub, |a, b| Jet::zip(a, b, |x, y| x - y));
impl_binop!(Mul, mul, Jet::mul_jets);
impl_binop!(Div, div, |a, b| Jet::mul_jets(a, &b.recip()));

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Seed the three coordinate functions at a point.
pub fn lift(point: [f64; 3], order: usize) -> [Jet; 3] {
    [
        Jet::seed(point[0], 0, order),
        Jet::seed(point[1], 1, order),
        Jet::seed(point[2], 2, order),
    ]
}

/// Named elementary operations, checked for singular evaluations.
#[derive(Clone, Copy, Debug)]
pub enum ElementaryOp {
    Add,
    Sub,
    Mul,
    Div,
    PowInt(i32),
    Sqrt,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Atan2,
}

pub fn elementary(op: ElementaryOp, args: &[Jet]) -> Result<Jet> {
    use ElementaryOp::*;
    let out = match (op, args) {
        (Add, [a, b]) => a + b,
        (Sub, [a, b]) => a - b,
        (Mul, [a, b]) => a * b,
        (Div, [a, b]) => a / b,
        (PowInt(k), [a]) => a.powi(k),
        (Sqrt, [a]) => a.sqrt(),
        (Sin, [a]) => a.sin(),
        (Cos, [a]) => a.cos(),
        (Tan, [a]) => a.tan(),
        (Exp, [a]) => a.exp(),
        (Log, [a]) => a.ln(),
        (Atan2, [y, x]) => Jet::atan2(y, x),
        _ => {
            return Err(Error::Config(format!(
                "elementary op {op:?} applied to {} arguments",
                args.len()
            )))
        }
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::SingularEvaluation(format!("{op:?}")))
    }
}

/// A smooth function of the three chart coordinates, evaluated by
/// substituting coordinate jets.
///
/// `depth` counts the derivative-extraction layers inside the closure: a
/// field of depth `d` evaluated on order-`n` seeds yields a jet of order
/// `n - d`. The evaluation helpers seed with enough headroom automatically.
#[derive(Clone)]
pub struct ScalarField {
    depth: usize,
    f: Arc<dyn Fn(&[Jet; 3]) -> Jet + Send + Sync>,
}

impl ScalarField {
    pub fn from_fn(depth: usize, f: impl Fn(&[Jet; 3]) -> Jet + Send + Sync + 'static) -> Self {
        ScalarField { depth, f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::from_fn(0, move |jp| Jet::constant(c, jp[0].order()))
    }

    pub fn zero() -> Self {
        ScalarField::constant(0.0)
    }

    pub fn coord(axis: usize) -> Self {
        assert!(axis < 3);
        ScalarField::from_fn(0, move |jp| jp[axis].clone())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Raw composition on arbitrary coordinate jets.
    pub fn jet(&self, coords: &[Jet; 3]) -> Jet {
        (self.f)(coords)
    }

    /// Evaluate at a point, returning a jet of (at least) the requested order.
    pub fn eval_jet(&self, p: [f64; 3], order: usize) -> Result<Jet> {
        let seed_order = order + self.depth;
        if seed_order > MAX_ORDER {
            return Err(Error::OrderUnsupported { requested: seed_order, max: MAX_ORDER });
        }
        let jet = self.jet(&lift(p, seed_order));
        if !jet.is_finite() {
            return Err(Error::SingularEvaluation(format!("field at {p:?}")));
        }
        Ok(jet.truncated(order.min(jet.order())))
    }

    pub fn value(&self, p: [f64; 3]) -> Result<f64> {
        Ok(self.eval_jet(p, 0)?.value())
    }

    /// Partial derivative `d^idx f` at `p`.
    pub fn partial(&self, p: [f64; 3], idx: MultiIndex) -> Result<f64> {
        Ok(self.eval_jet(p, idx.degree())?.partial_value(idx))
    }

    fn binary(a: &Self, b: &Self, op: impl Fn(Jet, Jet) -> Jet + Send + Sync + 'static) -> Self {
        let (fa, fb) = (a.f.clone(), b.f.clone());
        ScalarField {
            depth: a.depth.max(b.depth),
            f: Arc::new(move |jp| op(fa(jp), fb(jp))),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::binary(self, other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::binary(self, other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::binary(self, other, |a, b| a * b)
    }

    pub fn div(&self, other: &Self) -> Self {
        Self::binary(self, other, |a, b| a / b)
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let f = self.f.clone();
        ScalarField { depth: self.depth, f: Arc::new(move |jp| f(jp).scale(s)) }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let f = self.f.clone();
        ScalarField { depth: self.depth, f: Arc::new(move |jp| f(jp).add_scalar(s)) }
    }

    pub fn sq(&self) -> Self {
        self.mul(self)
    }

    pub fn sqrt(&self) -> Self {
        let f = self.f.clone();
        ScalarField { depth: self.depth, f: Arc::new(move |jp| f(jp).sqrt()) }
    }

    /// First derivative along a coordinate axis, as a field.
    pub fn coord_partial(&self, axis: usize) -> Self {
        let f = self.f.clone();
        ScalarField {
            depth: self.depth + 1,
            f: Arc::new(move |jp| f(jp).partial_jet(axis)),
        }
    }

    /// Cache the last evaluation per thread, keyed by a fingerprint of the
    /// full input jets. Sub-expressions of a pointwise evaluation all see
    /// identical coordinate jets, so expensive shared fields (derived frame
    /// components, structure functions, field components under repeated
    /// differentiation) hit the cache on every re-evaluation.
    pub fn memoized(&self) -> Self {
        use std::cell::RefCell;
        use std::collections::HashMap;
        use std::sync::atomic::{AtomicU64, Ordering};
        static NEXT_ID: AtomicU64 = AtomicU64::new(0);
        thread_local! {
            static CACHE: RefCell<HashMap<u64, (u64, Jet)>> = RefCell::new(HashMap::new());
        }
        let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
        let inner = self.f.clone();
        ScalarField {
            depth: self.depth,
            f: Arc::new(move |jp| {
                let fp = fingerprint(jp);
                if let Some(jet) = CACHE.with(|c| {
                    c.borrow().get(&id).and_then(|(k, jet)| (*k == fp).then(|| jet.clone()))
                }) {
                    return jet;
                }
                let jet = inner(jp);
                CACHE.with(|c| c.borrow_mut().insert(id, (fp, jet.clone())));
                jet
            }),
        }
    }
}

/// FNV-1a over the orders and every coefficient bit pattern.
pub(crate) fn fingerprint(jp: &[Jet; 3]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x100000001b3);
    };
    for jet in jp {
        mix(jet.order as u64);
        for c in &jet.coeffs {
            mix(c.to_bits());
        }
    }
    h
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarField(depth={})", self.depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (diff {:.3e})", (a - b).abs());
    }

    #[test]
    fn lift_seeds_coordinates() {
        let [x, _, _] = lift([0.5, 0.0, 0.0], 1);
        assert_eq!(x.value(), 0.5);
        assert_eq!(x.partial_value(MultiIndex::new(1, 0, 0)), 1.0);
        assert_eq!(x.partial_value(MultiIndex::new(0, 1, 0)), 0.0);

        let p = [0.3, -1.2, 7.0];
        let order0 = lift(p, 0);
        for (a, c) in order0.iter().zip(p) {
            assert_eq!(a.value(), c);
            assert_eq!(a.order(), 0);
        }
    }

    #[test]
    fn product_mixed_partial() {
        let [x, y, _] = lift([0.7, -0.4, 0.1], 2);
        let xy = &x * &y;
        assert_eq!(xy.partial_value(MultiIndex::new(1, 1, 0)), 1.0);
        assert_eq!(xy.partial_value(MultiIndex::new(2, 0, 0)), 0.0);
        close(xy.value(), 0.7 * -0.4, 1e-15);
    }

    #[test]
    fn chain_rule_examples() {
        // d/ds sin(2s) at s = pi/4 is 2 cos(pi/2) = 0.
        let [s, _, _] = lift([FRAC_PI_4, 0.0, 0.0], 1);
        let f = s.scale(2.0).sin();
        close(f.partial_value(MultiIndex::new(1, 0, 0)), 0.0, 1e-15);

        // d2/ds2 cos^2 s at s = 0 is -2.
        let [s, _, _] = lift([0.0, 0.0, 0.0], 2);
        let g = s.cos().powi(2);
        close(g.partial_value(MultiIndex::new(2, 0, 0)), -2.0, 1e-14);

        // d2/dp1 dp2 sin(p1 + p2) at (0, 0) is -sin 0 = 0.
        let [_, p1, p2] = lift([0.0, 0.0, 0.0], 2);
        let h = (&p1 + &p2).sin();
        close(h.partial_value(MultiIndex::new(0, 1, 1)), 0.0, 1e-15);
    }

    #[test]
    fn order_zero_is_plain_arithmetic() {
        let a = Jet::constant(1.7, 0);
        let b = Jet::constant(-2.3, 0);
        assert_eq!((&a * &b).value(), 1.7 * -2.3);
        assert_eq!((&a + &b).value(), 1.7 + -2.3);
        assert_eq!((&a / &b).value(), 1.7 / -2.3);
    }

    #[test]
    fn singular_evaluations_poison() {
        let [s, _, _] = lift([FRAC_PI_2, 0.0, 0.0], 1);
        assert!(!s.tan().is_finite());
        assert!(elementary(ElementaryOp::Tan, &[s.clone()]).is_err());

        let neg = Jet::constant(-1.0, 2);
        assert!(!neg.sqrt().is_finite());
        assert!(!neg.ln().is_finite());

        let zero = Jet::constant(0.0, 1);
        assert!(!(Jet::constant(1.0, 1) / zero).is_finite());

        let z = Jet::constant(0.0, 1);
        assert!(!Jet::atan2(&z, &z.clone()).is_finite());
    }

    #[test]
    fn atan2_derivatives() {
        // atan2(y, x) has gradient (-y, x)/(x^2+y^2) in (x, y).
        let (x0, y0) = (0.8, -0.6);
        let [x, y, _] = lift([x0, y0, 0.0], 2);
        let t = Jet::atan2(&y, &x);
        let r2 = x0 * x0 + y0 * y0;
        close(t.value(), y0.atan2(x0), 1e-15);
        close(t.partial_value(MultiIndex::new(1, 0, 0)), -y0 / r2, 1e-13);
        close(t.partial_value(MultiIndex::new(0, 1, 0)), x0 / r2, 1e-13);
        // Second derivative d2/dx2 atan2 = 2xy/r^4.
        close(
            t.partial_value(MultiIndex::new(2, 0, 0)),
            2.0 * x0 * y0 / (r2 * r2),
            1e-12,
        );
    }

    /// Central finite differences with Richardson extrapolation, the
    /// independent oracle for jet derivatives.
    fn fd_partial(f: &dyn Fn([f64; 3]) -> f64, p: [f64; 3], idx: [usize; 3], h: f64) -> f64 {
        fn stencil(f: &dyn Fn([f64; 3]) -> f64, p: [f64; 3], idx: [usize; 3], h: f64) -> f64 {
            if let Some(axis) = (0..3).find(|&a| idx[a] > 0) {
                let mut lower = idx;
                lower[axis] -= 1;
                let mut pp = p;
                pp[axis] += h;
                let mut pm = p;
                pm[axis] -= h;
                (stencil(f, pp, lower, h) - stencil(f, pm, lower, h)) / (2.0 * h)
            } else {
                f(p)
            }
        }
        // Richardson: error is O(h^2) per level, eliminate the leading term.
        let d1 = stencil(f, p, idx, h);
        let d2 = stencil(f, p, idx, h / 2.0);
        (4.0 * d2 - d1) / 3.0
    }

    #[test]
    fn jets_match_finite_differences() {
        let cases: Vec<(&str, Box<dyn Fn(&[Jet; 3]) -> Jet>, Box<dyn Fn([f64; 3]) -> f64>)> = vec![
            (
                "trig-product",
                Box::new(|j: &[Jet; 3]| (j[0].sin() * j[1].cos() + j[2].scale(0.5)).powi(2)),
                Box::new(|p: [f64; 3]| (p[0].sin() * p[1].cos() + 0.5 * p[2]).powi(2)),
            ),
            (
                "exp-div",
                Box::new(|j: &[Jet; 3]| j[0].exp() / (j[1].powi(2).add_scalar(1.5))),
                Box::new(|p: [f64; 3]| p[0].exp() / (p[1] * p[1] + 1.5)),
            ),
            (
                "log-sqrt",
                Box::new(|j: &[Jet; 3]| {
                    (j[0].powi(2) + j[1].powi(2) + j[2].powi(2)).add_scalar(1.0).sqrt().ln()
                }),
                Box::new(|p: [f64; 3]| {
                    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + 1.0).sqrt().ln()
                }),
            ),
            (
                "tan-atan",
                Box::new(|j: &[Jet; 3]| (j[0].scale(0.3).tan() + j[1].atan()) * j[2].cos()),
                Box::new(|p: [f64; 3]| ((0.3 * p[0]).tan() + p[1].atan()) * p[2].cos()),
            ),
        ];
        let points = [[0.4, 0.9, -0.7], [1.1, -0.3, 0.25], [-0.8, 0.55, 1.3]];
        let indices = [
            ([1, 0, 0], 2e-4),
            ([0, 1, 0], 2e-4),
            ([0, 0, 1], 2e-4),
            ([1, 1, 0], 1e-3),
            ([2, 0, 0], 1e-3),
            ([1, 1, 1], 6e-3),
            ([2, 1, 0], 6e-3),
            ([3, 0, 0], 6e-3),
        ];
        for (name, jet_f, val_f) in &cases {
            for p in points {
                for (idx, h) in indices {
                    let jets = lift(p, idx.iter().sum());
                    let got = jet_f(&jets).partial_value(MultiIndex::new(idx[0], idx[1], idx[2]));
                    let want = fd_partial(val_f.as_ref(), p, idx, h);
                    let scale = want.abs().max(1.0);
                    assert!(
                        (got - want).abs() / scale < 1e-6,
                        "{name} {idx:?} at {p:?}: jet {got} vs fd {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn staged_composition_matches_single_expression() {
        let p = [0.35, 1.2, -0.6];
        let jets = lift(p, 3);
        // Single expression.
        let direct = ((jets[0].sin() * jets[1].clone()).exp() + jets[2].powi(3)).sqrt();
        // Staged through temporaries.
        let t1 = jets[0].sin();
        let t2 = &t1 * &jets[1];
        let t3 = t2.exp();
        let t4 = jets[2].powi(3);
        let staged = (t3 + t4).sqrt();
        for (a, b) in direct.coeffs.iter().zip(staged.coeffs.iter()) {
            close(*a, *b, 1e-13);
        }
    }

    #[test]
    fn scalar_field_partial_and_depth() {
        let f = ScalarField::from_fn(0, |jp| jp[0].sin()).sq();
        let p = [0.6, 0.0, 0.0];
        let d = f.partial(p, MultiIndex::new(1, 0, 0)).unwrap();
        close(d, 2.0 * 0.6_f64.sin() * 0.6_f64.cos(), 1e-13);

        let df = f.coord_partial(0);
        assert_eq!(df.depth(), 1);
        close(df.value(p).unwrap(), d, 1e-15);

        let constant = ScalarField::constant(4.2);
        assert_eq!(constant.partial(p, MultiIndex::new(0, 2, 1)).unwrap(), 0.0);
    }
}
