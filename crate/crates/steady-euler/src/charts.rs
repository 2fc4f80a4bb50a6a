//! Coordinate charts and metrics of the four model spaces, with the
//! Christoffel-based calculus used as the independent oracle against the
//! adapted-frame formulas.
//!
//! Charts:
//! - `s3`: Hopf coordinates `(s, phi1, phi2)` on the round 3-sphere,
//!   metric `ds^2 + cos^2 s dphi1^2 + sin^2 s dphi2^2`, valid for
//!   `0 < s < pi/2`.
//! - `h3`: half-space model `(x, y, z)`, `z > 0`, metric `z^-2 (dx^2 +
//!   dy^2 + dz^2)`.
//! - `nil`: Heisenberg group chart `(x, y, z)`, metric
//!   `pi (dx^2 + dy^2) + 4 pi^2 (dz - x dy)^2`.
//! - `sl2`: Iwasawa chart `(x, y, theta)`, `y > 0`, metric
//!   `(dx^2 + dy^2) / (2 y^2) + (2 dtheta + dx / y)^2`.
//!
//! Each chart carries an orientation sign fixing the volume form relative to
//! the coordinate order; it is chosen so that the adapted orthonormal frame
//! of the space is positively oriented, which makes the curl of the Reeb
//! field come out as `+2 xi`.

use crate::error::{Error, Result};
use crate::jets::{fingerprint, lift, Jet, ScalarField};
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

/// Names of the built-in charts, as used on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChartTag {
    S3,
    H3,
    Nil,
    Sl2,
}

impl ChartTag {
    pub fn name(self) -> &'static str {
        match self {
            ChartTag::S3 => "s3",
            ChartTag::H3 => "h3",
            ChartTag::Nil => "nil",
            ChartTag::Sl2 => "sl2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s3" => Ok(ChartTag::S3),
            "h3" => Ok(ChartTag::H3),
            "nil" => Ok(ChartTag::Nil),
            "sl2" => Ok(ChartTag::Sl2),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

/// A point in a chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point3 {
    pub chart: ChartTag,
    pub coords: [f64; 3],
}

impl Point3 {
    pub fn new(chart: ChartTag, coords: [f64; 3]) -> Self {
        Point3 { chart, coords }
    }
}

/// A vector field given by its three coordinate components.
#[derive(Clone, Debug)]
pub struct ChartVectorField {
    pub comps: [ScalarField; 3],
}

impl ChartVectorField {
    pub fn new(comps: [ScalarField; 3]) -> Self {
        ChartVectorField { comps }
    }

    pub fn constant(v: [f64; 3]) -> Self {
        ChartVectorField::new([
            ScalarField::constant(v[0]),
            ScalarField::constant(v[1]),
            ScalarField::constant(v[2]),
        ])
    }

    pub fn depth(&self) -> usize {
        self.comps.iter().map(ScalarField::depth).max().unwrap()
    }

    pub fn jets(&self, jp: &[Jet; 3]) -> [Jet; 3] {
        [self.comps[0].jet(jp), self.comps[1].jet(jp), self.comps[2].jet(jp)]
    }

    pub fn values(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        // One seed at the common depth keeps memoized sub-fields hot.
        let jp = lift(p, self.depth());
        let mut out = [0.0; 3];
        for (i, c) in self.comps.iter().enumerate() {
            let jet = c.jet(&jp);
            if !jet.is_finite() {
                return Err(Error::SingularEvaluation(format!("vector field at {p:?}")));
            }
            out[i] = jet.value();
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        ChartVectorField::new(std::array::from_fn(|i| self.comps[i].add(&other.comps[i])))
    }

    pub fn sub(&self, other: &Self) -> Self {
        ChartVectorField::new(std::array::from_fn(|i| self.comps[i].sub(&other.comps[i])))
    }

    pub fn scale_by(&self, f: &ScalarField) -> Self {
        ChartVectorField::new(std::array::from_fn(|i| self.comps[i].mul(f)))
    }

    /// Per-thread caching of the component evaluations; see
    /// [`ScalarField::memoized`].
    pub fn memoized(&self) -> Self {
        ChartVectorField::new(std::array::from_fn(|i| self.comps[i].memoized()))
    }
}

/// Directional derivative of a scalar field along a chart vector field.
pub fn directional(v: &ChartVectorField, h: &ScalarField) -> ScalarField {
    let v = v.clone();
    let h = h.clone();
    let depth = v.depth().max(h.depth() + 1);
    ScalarField::from_fn(depth, move |jp| {
        let hj = h.jet(jp);
        let mut acc = Jet::constant(0.0, hj.order().saturating_sub(1));
        for i in 0..3 {
            acc = acc + v.comps[i].jet(jp) * hj.partial_jet(i);
        }
        acc
    })
}

/// Lie bracket of two chart vector fields.
pub fn bracket(u: &ChartVectorField, v: &ChartVectorField) -> ChartVectorField {
    ChartVectorField::new(std::array::from_fn(|k| {
        directional(u, &v.comps[k]).sub(&directional(v, &u.comps[k]))
    }))
}

type MetricFn = Arc<dyn Fn(&[Jet; 3]) -> [[Jet; 3]; 3] + Send + Sync>;

/// A chart with its metric, domain predicate and orientation sign.
pub struct ChartSpec {
    pub tag: ChartTag,
    pub coord_names: [&'static str; 3],
    /// Volume-form sign relative to the coordinate order.
    pub orientation: f64,
    id: u64,
    metric_fn: MetricFn,
    domain: Arc<dyn Fn([f64; 3]) -> bool + Send + Sync>,
    /// Stay-inside band used by the flow-line integrator.
    flow_band: Arc<dyn Fn([f64; 3]) -> bool + Send + Sync>,
    /// Coordinates that wrap mod 2 pi.
    pub angular: [bool; 3],
}

const COND_LIMIT: f64 = 1e12;

fn next_chart_id() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(0);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

/// Metric data at one evaluation input, shared across the chart operators.
struct MetricPack {
    g: [[Jet; 3]; 3],
    ginv: [[Jet; 3]; 3],
    sqrt_det: Jet,
}

type GammaPack = [[[Jet; 3]; 3]; 3];

thread_local! {
    static METRIC_CACHE: RefCell<HashMap<u64, (u64, Arc<MetricPack>)>> =
        RefCell::new(HashMap::new());
    static GAMMA_CACHE: RefCell<HashMap<u64, (u64, Arc<GammaPack>)>> =
        RefCell::new(HashMap::new());
}

fn metric_pack(id: u64, metric_fn: &MetricFn, jp: &[Jet; 3]) -> Arc<MetricPack> {
    let fp = fingerprint(jp);
    if let Some(hit) = METRIC_CACHE.with(|c| {
        c.borrow().get(&id).and_then(|(k, pack)| (*k == fp).then(|| pack.clone()))
    }) {
        return hit;
    }
    let g = metric_fn(jp);
    let pack = Arc::new(MetricPack {
        ginv: inv3(&g),
        sqrt_det: det3(&g).sqrt(),
        g,
    });
    METRIC_CACHE.with(|c| c.borrow_mut().insert(id, (fp, pack.clone())));
    pack
}

fn gamma_pack(id: u64, metric_fn: &MetricFn, jp: &[Jet; 3]) -> Arc<GammaPack> {
    let fp = fingerprint(jp);
    if let Some(hit) = GAMMA_CACHE.with(|c| {
        c.borrow().get(&id).and_then(|(k, pack)| (*k == fp).then(|| pack.clone()))
    }) {
        return hit;
    }
    let pack = Arc::new(christoffel_jets(&metric_fn(jp)));
    GAMMA_CACHE.with(|c| c.borrow_mut().insert(id, (fp, pack.clone())));
    pack
}

impl ChartSpec {
    pub fn get(tag: ChartTag) -> Arc<ChartSpec> {
        static S3: OnceLock<Arc<ChartSpec>> = OnceLock::new();
        static H3: OnceLock<Arc<ChartSpec>> = OnceLock::new();
        static NIL: OnceLock<Arc<ChartSpec>> = OnceLock::new();
        static SL2: OnceLock<Arc<ChartSpec>> = OnceLock::new();
        match tag {
            ChartTag::S3 => S3.get_or_init(|| Arc::new(ChartSpec::s3())).clone(),
            ChartTag::H3 => H3.get_or_init(|| Arc::new(ChartSpec::h3())).clone(),
            ChartTag::Nil => NIL.get_or_init(|| Arc::new(ChartSpec::nil())).clone(),
            ChartTag::Sl2 => SL2.get_or_init(|| Arc::new(ChartSpec::sl2())).clone(),
        }
    }

    fn s3() -> ChartSpec {
        ChartSpec {
            id: next_chart_id(),
            tag: ChartTag::S3,
            coord_names: ["s", "phi1", "phi2"],
            // The adapted frame (xi, X1, X2) is negatively oriented with
            // respect to the coordinate order (s, phi1, phi2).
            orientation: -1.0,
            metric_fn: Arc::new(|jp| {
                let order = jp[0].order();
                let zero = || Jet::constant(0.0, order);
                let c = jp[0].cos();
                let s = jp[0].sin();
                [
                    [Jet::constant(1.0, order), zero(), zero()],
                    [zero(), &c * &c, zero()],
                    [zero(), zero(), &s * &s],
                ]
            }),
            domain: Arc::new(|p| p[0] > 0.0 && p[0] < PI / 2.0),
            flow_band: Arc::new(|p| p[0] >= 0.02 && p[0] <= PI / 2.0 - 0.02),
            angular: [false, true, true],
        }
    }

    fn h3() -> ChartSpec {
        ChartSpec {
            id: next_chart_id(),
            tag: ChartTag::H3,
            coord_names: ["x", "y", "z"],
            orientation: 1.0,
            metric_fn: Arc::new(|jp| {
                let order = jp[0].order();
                let zero = || Jet::constant(0.0, order);
                let w = (&jp[2] * &jp[2]).recip();
                [
                    [w.clone(), zero(), zero()],
                    [zero(), w.clone(), zero()],
                    [zero(), zero(), w],
                ]
            }),
            domain: Arc::new(|p| p[2] > 0.0),
            flow_band: Arc::new(|p| p[2] >= 0.02),
            angular: [false, false, false],
        }
    }

    fn nil() -> ChartSpec {
        ChartSpec {
            id: next_chart_id(),
            tag: ChartTag::Nil,
            coord_names: ["x", "y", "z"],
            // The adapted frame built from xi = dz/(2 pi) and X1 ~ dx is
            // negatively oriented in (x, y, z).
            orientation: -1.0,
            metric_fn: Arc::new(|jp| {
                let order = jp[0].order();
                let zero = || Jet::constant(0.0, order);
                let x = &jp[0];
                let p2 = 4.0 * PI * PI;
                [
                    [Jet::constant(PI, order), zero(), zero()],
                    [
                        zero(),
                        (x * x).scale(p2).add_scalar(PI),
                        x.scale(-p2),
                    ],
                    [zero(), x.scale(-p2), Jet::constant(p2, order)],
                ]
            }),
            domain: Arc::new(|_| true),
            flow_band: Arc::new(|_| true),
            angular: [false, false, false],
        }
    }

    fn sl2() -> ChartSpec {
        ChartSpec {
            id: next_chart_id(),
            tag: ChartTag::Sl2,
            coord_names: ["x", "y", "theta"],
            orientation: 1.0,
            metric_fn: Arc::new(|jp| {
                let order = jp[0].order();
                let zero = || Jet::constant(0.0, order);
                let y = &jp[1];
                let inv_y2 = (y * y).recip();
                let inv_y = y.recip();
                [
                    [inv_y2.scale(1.5), zero(), inv_y.scale(2.0)],
                    [zero(), inv_y2.scale(0.5), zero()],
                    [inv_y.scale(2.0), zero(), Jet::constant(4.0, order)],
                ]
            }),
            domain: Arc::new(|p| p[1] > 0.0),
            flow_band: Arc::new(|p| p[1] >= 0.02),
            angular: [false, false, true],
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (self.domain)(p)
    }

    pub fn in_flow_band(&self, p: [f64; 3]) -> bool {
        (self.flow_band)(p)
    }

    pub fn check_domain(&self, p: [f64; 3]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(p, self.tag.name()))
        }
    }

    pub fn metric_jets(&self, jp: &[Jet; 3]) -> [[Jet; 3]; 3] {
        (self.metric_fn)(jp)
    }

    /// One metric component as a scalar field.
    pub fn metric_component(&self, i: usize, j: usize) -> ScalarField {
        let f = self.metric_fn.clone();
        ScalarField::from_fn(0, move |jp| f(jp)[i][j].clone())
    }

    /// Metric matrix at a point, with positive-definiteness and a
    /// condition-number guard.
    pub fn metric_at(&self, p: [f64; 3]) -> Result<[[f64; 3]; 3]> {
        self.check_domain(p)?;
        let g = self.metric_jets(&lift(p, 0));
        let m: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| g[i][j].value()));
        // Leading principal minors must be positive.
        let m1 = m[0][0];
        let m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let m3 = det3_values(&m);
        if !(m1 > 0.0 && m2 > 0.0 && m3 > 0.0) {
            return Err(Error::NearSingular(f64::INFINITY, COND_LIMIT));
        }
        let inv = inv3_values(&m);
        let cond = inf_norm(&m) * inf_norm(&inv);
        if cond > COND_LIMIT {
            return Err(Error::NearSingular(cond, COND_LIMIT));
        }
        Ok(m)
    }

    /// Christoffel symbols of the Levi-Civita connection at a point,
    /// computed from jets of the metric components.
    pub fn christoffel_at(&self, p: [f64; 3]) -> Result<[[[f64; 3]; 3]; 3]> {
        self.metric_at(p)?;
        let jp = lift(p, 1);
        let gamma = christoffel_jets(&self.metric_jets(&jp));
        Ok(std::array::from_fn(|k| {
            std::array::from_fn(|i| std::array::from_fn(|j| gamma[k][i][j].value()))
        }))
    }

    /// Covariant derivative `nabla_u v` as a vector field of coordinate
    /// components.
    pub fn covd(&self, u: &ChartVectorField, v: &ChartVectorField) -> ChartVectorField {
        let depth = u.depth().max(v.depth()) + 1;
        ChartVectorField::new(std::array::from_fn(|k| {
            let metric = self.metric_fn.clone();
            let id = self.id;
            let u = u.clone();
            let v = v.clone();
            ScalarField::from_fn(depth, move |jp| {
                let gamma = gamma_pack(id, &metric, jp);
                let uj = u.jets(jp);
                let vj = v.jets(jp);
                let mut acc = &uj[0] * vj[k].partial_jet(0);
                for i in 1..3 {
                    acc = acc + &uj[i] * vj[k].partial_jet(i);
                }
                for i in 0..3 {
                    for j in 0..3 {
                        acc = acc + &gamma[k][i][j] * &uj[i] * &vj[j];
                    }
                }
                acc
            })
        }))
    }

    pub fn covariant_derivative_at(
        &self,
        u: &ChartVectorField,
        v: &ChartVectorField,
        p: [f64; 3],
    ) -> Result<[f64; 3]> {
        self.check_domain(p)?;
        self.covd(u, v).values(p)
    }

    /// Gradient: `grad^i = g^{ij} d_j f`.
    pub fn grad(&self, f: &ScalarField) -> ChartVectorField {
        let depth = f.depth() + 1;
        ChartVectorField::new(std::array::from_fn(|i| {
            let metric = self.metric_fn.clone();
            let id = self.id;
            let f = f.clone();
            ScalarField::from_fn(depth, move |jp| {
                let pack = metric_pack(id, &metric, jp);
                let fj = f.jet(jp);
                let mut acc = &pack.ginv[i][0] * fj.partial_jet(0);
                for j in 1..3 {
                    acc = acc + &pack.ginv[i][j] * fj.partial_jet(j);
                }
                acc
            })
        }))
    }

    /// Divergence via the volume density: `(1/sqrt g) d_i (sqrt g u^i)`.
    pub fn div(&self, u: &ChartVectorField) -> ScalarField {
        let metric = self.metric_fn.clone();
        let id = self.id;
        let u = u.clone();
        ScalarField::from_fn(u.depth() + 1, move |jp| {
            let sq = &metric_pack(id, &metric, jp).sqrt_det;
            let uj = u.jets(jp);
            let mut acc = (sq * &uj[0]).partial_jet(0);
            for i in 1..3 {
                acc = acc + (sq * &uj[i]).partial_jet(i);
            }
            acc / sq.clone()
        })
    }

    /// Curl: `curl^i = sigma (1/sqrt g) eps^{ijk} d_j (g_{kl} u^l)`.
    pub fn curl(&self, u: &ChartVectorField) -> ChartVectorField {
        let depth = u.depth() + 1;
        ChartVectorField::new(std::array::from_fn(|i| {
            let metric = self.metric_fn.clone();
            let id = self.id;
            let u = u.clone();
            let sigma = self.orientation;
            ScalarField::from_fn(depth, move |jp| {
                let pack = metric_pack(id, &metric, jp);
                let uj = u.jets(jp);
                let lower = |l: usize| -> Jet {
                    let mut acc = &pack.g[l][0] * &uj[0];
                    for m in 1..3 {
                        acc = acc + &pack.g[l][m] * &uj[m];
                    }
                    acc
                };
                let (j, k) = [(1, 2), (2, 0), (0, 1)][i];
                let d = lower(k).partial_jet(j) - lower(j).partial_jet(k);
                d.scale(sigma) / pack.sqrt_det.clone()
            })
        }))
    }

    /// Geometer's Laplacian `Delta f = -div(grad f)` (nonnegative spectrum).
    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        self.div(&self.grad(f)).neg()
    }

    /// Metric pairing `g(u, v)` as a scalar field.
    pub fn pairing(&self, u: &ChartVectorField, v: &ChartVectorField) -> ScalarField {
        let metric = self.metric_fn.clone();
        let id = self.id;
        let u = u.clone();
        let v = v.clone();
        ScalarField::from_fn(u.depth().max(v.depth()), move |jp| {
            let pack = metric_pack(id, &metric, jp);
            let uj = u.jets(jp);
            let vj = v.jets(jp);
            let mut acc = &pack.g[0][0] * &uj[0] * &vj[0];
            for i in 0..3 {
                for j in 0..3 {
                    if i + j > 0 {
                        acc = acc + &pack.g[i][j] * &uj[i] * &vj[j];
                    }
                }
            }
            acc
        })
    }

    /// Squared metric norm of a vector field.
    pub fn norm2(&self, u: &ChartVectorField) -> ScalarField {
        self.pairing(u, u)
    }
}

impl std::fmt::Debug for ChartSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ChartSpec({})", self.tag.name())
    }
}

pub(crate) fn det3(m: &[[Jet; 3]; 3]) -> Jet {
    let c0 = &m[1][1] * &m[2][2] - &m[1][2] * &m[2][1];
    let c1 = &m[1][0] * &m[2][2] - &m[1][2] * &m[2][0];
    let c2 = &m[1][0] * &m[2][1] - &m[1][1] * &m[2][0];
    &m[0][0] * c0 - &m[0][1] * c1 + &m[0][2] * c2
}

/// Matrix inverse through the adjugate.
pub(crate) fn inv3(m: &[[Jet; 3]; 3]) -> [[Jet; 3]; 3] {
    let det = det3(m);
    let cof = |r: usize, c: usize| -> Jet {
        let (r1, r2) = match r {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (c1, c2) = match c {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let minor = &m[r1][c1] * &m[r2][c2] - &m[r1][c2] * &m[r2][c1];
        if (r + c) % 2 == 0 {
            minor
        } else {
            -minor
        }
    };
    // Adjugate transposes the cofactor matrix.
    std::array::from_fn(|i| std::array::from_fn(|j| cof(j, i) / &det))
}

/// `Gamma^k_{ij} = g^{kl} (d_i g_{jl} + d_j g_{il} - d_l g_{ij}) / 2`.
pub(crate) fn christoffel_jets(g: &[[Jet; 3]; 3]) -> [[[Jet; 3]; 3]; 3] {
    let ginv = inv3(g);
    let dg: [[[Jet; 3]; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| std::array::from_fn(|l| g[i][j].partial_jet(l))));
    std::array::from_fn(|k| {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut acc = (&dg[j][0][i] + &dg[i][0][j] - &dg[i][j][0]) * &ginv[k][0];
                for l in 1..3 {
                    acc = acc + (&dg[j][l][i] + &dg[i][l][j] - &dg[i][j][l]) * &ginv[k][l];
                }
                acc.scale(0.5)
            })
        })
    })
}

fn det3_values(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3_values(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let d = det3_values(m);
    let cof = |r: usize, c: usize| -> f64 {
        let (r1, r2) = match r {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (c1, c2) = match c {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let minor = m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
        if (r + c) % 2 == 0 {
            minor
        } else {
            -minor
        }
    };
    std::array::from_fn(|i| std::array::from_fn(|j| cof(j, i) / d))
}

fn inf_norm(m: &[[f64; 3]; 3]) -> f64 {
    m.iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (diff {:.3e})", (a - b).abs());
    }

    /// Flat auxiliary chart for the degenerate test cases.
    fn flat_chart() -> ChartSpec {
        ChartSpec {
            id: next_chart_id(),
            tag: ChartTag::H3,
            coord_names: ["x", "y", "z"],
            orientation: 1.0,
            metric_fn: Arc::new(|jp| {
                let order = jp[0].order();
                std::array::from_fn(|i| {
                    std::array::from_fn(|j| Jet::constant(if i == j { 1.0 } else { 0.0 }, order))
                })
            }),
            domain: Arc::new(|_| true),
            flow_band: Arc::new(|_| true),
            angular: [false; 3],
        }
    }

    #[test]
    fn metric_values() {
        let s3 = ChartSpec::get(ChartTag::S3);
        let g = s3.metric_at([FRAC_PI_4, 0.3, 1.0]).unwrap();
        close(g[0][0], 1.0, 1e-15);
        close(g[1][1], 0.5, 1e-15);
        close(g[2][2], 0.5, 1e-15);
        close(g[0][1], 0.0, 1e-15);

        let h3 = ChartSpec::get(ChartTag::H3);
        let g = h3.metric_at([0.3, -0.2, 1.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                close(g[i][j], if i == j { 1.0 } else { 0.0 }, 1e-15);
            }
        }

        let nil = ChartSpec::get(ChartTag::Nil);
        let g = nil.metric_at([0.0, 0.7, -0.4]).unwrap();
        close(g[0][0], PI, 1e-14);
        close(g[1][1], PI, 1e-14);
        close(g[2][2], 4.0 * PI * PI, 1e-13);
        close(g[1][2], 0.0, 1e-15);
    }

    #[test]
    fn domain_and_conditioning_guards() {
        let s3 = ChartSpec::get(ChartTag::S3);
        assert!(matches!(
            s3.metric_at([-0.1, 0.0, 0.0]),
            Err(Error::OutsideDomain(..))
        ));
        assert!(matches!(
            s3.metric_at([1e-7, 0.0, 0.0]),
            Err(Error::NearSingular(..))
        ));
        let h3 = ChartSpec::get(ChartTag::H3);
        assert!(matches!(
            h3.metric_at([0.0, 0.0, -1.0]),
            Err(Error::OutsideDomain(..))
        ));
    }

    #[test]
    fn christoffel_values() {
        let flat = flat_chart();
        let gamma = flat.christoffel_at([0.4, -2.0, 0.9]).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    close(gamma[k][i][j], 0.0, 1e-15);
                }
            }
        }

        // S3: Gamma^s_{phi1 phi1} = sin s cos s.
        let s3 = ChartSpec::get(ChartTag::S3);
        let gamma = s3.christoffel_at([FRAC_PI_4, 0.1, 0.2]).unwrap();
        close(gamma[0][1][1], 0.5, 1e-13);
        // Symmetry in the lower pair.
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    close(gamma[k][i][j], gamma[k][j][i], 1e-13);
                }
            }
        }

        // H3: Gamma^x_{xz} = -1/z.
        let h3 = ChartSpec::get(ChartTag::H3);
        let gamma = h3.christoffel_at([0.0, 0.0, 2.0]).unwrap();
        close(gamma[0][0][2], -0.5, 1e-13);
    }

    fn xi_s3() -> ChartVectorField {
        ChartVectorField::constant([0.0, 1.0, 1.0])
    }

    fn xi_prime_s3() -> ChartVectorField {
        ChartVectorField::constant([0.0, 1.0, -1.0])
    }

    #[test]
    fn covariant_derivative_cases() {
        let s3 = ChartSpec::get(ChartTag::S3);
        // The Reeb field is geodesic.
        let xi = xi_s3();
        let acc = s3.covariant_derivative_at(&xi, &xi, [0.7, 0.4, 2.0]).unwrap();
        for c in acc {
            close(c, 0.0, 1e-13);
        }

        // Constant-coefficient fields on a flat chart.
        let flat = flat_chart();
        let u = ChartVectorField::constant([0.3, -0.7, 0.2]);
        let v = ChartVectorField::constant([1.0, 2.0, 3.0]);
        let acc = flat.covd(&u, &v).values([0.2, 0.4, 0.8]).unwrap();
        for c in acc {
            close(c, 0.0, 1e-15);
        }

        // Two-Killing combination with a1 = 1, a2 = 2: nabla_u u = a1 a2 sin 4s d/ds.
        let (a1, a2) = (1.0, 2.0);
        let u = ChartVectorField::new([
            ScalarField::from_fn(0, move |jp| {
                let sum = &jp[1] + &jp[2];
                (jp[0].scale(2.0).sin() * sum.sin() * sum.cos()).scale(a1 + a2)
            }),
            ScalarField::from_fn(0, move |jp| {
                let sum = &jp[1] + &jp[2];
                (jp[0].scale(2.0).sin() * jp[0].tan())
                    * (sum.sin().powi(2).scale(a1) - sum.cos().powi(2).scale(a2))
            }),
            ScalarField::from_fn(0, move |jp| {
                let sum = &jp[1] + &jp[2];
                (jp[0].scale(2.0).sin() * jp[0].tan().recip())
                    * (sum.cos().powi(2).scale(a2) - sum.sin().powi(2).scale(a1))
            }),
        ]);
        let p = [PI / 8.0, 0.35, 1.2];
        let acc = s3.covariant_derivative_at(&u, &u, p).unwrap();
        let sin4s = (4.0 * p[0]).sin();
        close(acc[0], a1 * a2 * sin4s, 1e-11);
        close(acc[1], 0.0, 1e-11);
        close(acc[2], 0.0, 1e-11);
    }

    #[test]
    fn curl_of_reeb_fields_fixes_orientation() {
        let s3 = ChartSpec::get(ChartTag::S3);
        let curl_xi = s3.curl(&xi_s3());
        let curl_xip = s3.curl(&xi_prime_s3());
        for p in [[0.3, 0.2, 1.0], [0.9, 4.0, 2.5], [1.3, 5.5, 0.1]] {
            let c = curl_xi.values(p).unwrap();
            close(c[0], 0.0, 1e-12);
            close(c[1], 2.0, 1e-12);
            close(c[2], 2.0, 1e-12);
            let c = curl_xip.values(p).unwrap();
            close(c[0], 0.0, 1e-12);
            close(c[1], -2.0, 1e-12);
            close(c[2], 2.0, 1e-12);
        }
    }

    #[test]
    fn divergence_and_laplacian() {
        let s3 = ChartSpec::get(ChartTag::S3);
        let div_xi = s3.div(&xi_s3());
        close(div_xi.value([0.8, 1.0, 2.0]).unwrap(), 0.0, 1e-13);

        // Delta(cos^2 s) = 8 cos^2 s - 4, positive near s = 0.
        let psi = ScalarField::from_fn(0, |jp| jp[0].cos().powi(2));
        let lap = s3.laplacian(&psi);
        let at = |s: f64| lap.value([s, 0.3, 0.4]).unwrap();
        close(at(FRAC_PI_6), 2.0, 1e-11);
        close(at(0.1), 8.0 * 0.1_f64.cos().powi(2) - 4.0, 1e-11);
        assert!(at(0.1) > 0.0);
    }

    fn random_poly_field(rng: &mut impl Rng) -> ChartVectorField {
        ChartVectorField::new(std::array::from_fn(|_| {
            let c: [f64; 10] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            ScalarField::from_fn(0, move |jp| {
                let [x, y, z] = jp;
                Jet::constant(c[0], x.order())
                    + x.scale(c[1])
                    + y.scale(c[2])
                    + z.scale(c[3])
                    + (x * y).scale(c[4])
                    + (y * z).scale(c[5])
                    + (x * z).scale(c[6])
                    + (x * x).scale(c[7])
                    + (y * y).scale(c[8])
                    + (z * z).scale(c[9])
            })
        }))
    }

    fn random_point(rng: &mut impl Rng, tag: ChartTag) -> [f64; 3] {
        match tag {
            ChartTag::S3 => [
                rng.gen_range(0.1..PI / 2.0 - 0.1),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.0..2.0 * PI),
            ],
            ChartTag::H3 => [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..2.0),
            ],
            ChartTag::Nil => [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ],
            ChartTag::Sl2 => [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.0..2.0 * PI),
            ],
        }
    }

    #[test]
    fn levi_civita_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for tag in [ChartTag::S3, ChartTag::H3, ChartTag::Nil, ChartTag::Sl2] {
            let chart = ChartSpec::get(tag);
            for _ in 0..3 {
                let u = random_poly_field(&mut rng);
                let v = random_poly_field(&mut rng);
                let w = random_poly_field(&mut rng);
                let gvw = chart.pairing(&v, &w);
                let compat = directional(&u, &gvw)
                    .sub(&chart.pairing(&chart.covd(&u, &v), &w))
                    .sub(&chart.pairing(&v, &chart.covd(&u, &w)));
                let torsion = chart
                    .covd(&u, &v)
                    .sub(&chart.covd(&v, &u))
                    .sub(&bracket(&u, &v));
                let div_curl = chart.div(&chart.curl(&u));
                for _ in 0..5 {
                    let p = random_point(&mut rng, tag);
                    close(compat.value(p).unwrap(), 0.0, 1e-9);
                    for c in torsion.values(p).unwrap() {
                        close(c, 0.0, 1e-9);
                    }
                    close(div_curl.value(p).unwrap(), 0.0, 1e-8);
                }
            }
        }
    }
}
