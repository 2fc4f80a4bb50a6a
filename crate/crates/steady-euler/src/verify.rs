//! Residual checks certifying the defining properties of the solution
//! families, plus the C^k distance used by the non-isolation estimate.
//!
//! Every check sweeps a sample grid, reports the maximum and mean residual
//! with the argmax point, and passes iff the maximum stays under the
//! tolerance. Suprema get one refinement pass: a 5x finer local lattice
//! around the coarse argmax, whose maximum is the reported value.

use crate::charts::{ChartSpec, ChartTag, ChartVectorField};
use crate::error::{Error, Result};
use crate::families::{FamilyDescriptor, FieldRep};
use crate::frames::{apply_phi, cross, FrameField, SasakianFrameSpec};
use crate::jets::{lift, ScalarField, MAX_ORDER};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Default jet-residual tolerance on closed-form frames.
pub const TOL_JET: f64 = 1e-8;
/// Default tolerance when two independent oracles are compared.
pub const TOL_CROSS: f64 = 1e-7;
/// Default tolerance on numerically derived frames.
pub const TOL_DERIVED: f64 = 1e-6;

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Set the number of worker threads used by grid sweeps (default 1; sweeps
/// are deterministic for any setting).
pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

/// A rectangular sample lattice in a chart, or a seeded random cloud.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    pub chart: ChartTag,
    pub counts: [usize; 3],
    pub ranges: [(f64, f64); 3],
    /// Half-open axes exclude the upper endpoint (periodic angles).
    pub half_open: [bool; 3],
    /// When set, `(count, seed)` replaces the lattice by uniform samples.
    pub random: Option<(usize, u64)>,
}

impl SampleGrid {
    /// The default 24^3 grid of a chart with the standard margin 0.05.
    pub fn default_for(chart: ChartTag) -> Self {
        SampleGrid::with_margin(chart, 0.05)
    }

    /// Margins keep clear of the chart's singular bands; on the 3-sphere the
    /// `s` range becomes `[margin, pi/2 - margin]`. Charts without singular
    /// bands ignore the margin.
    pub fn with_margin(chart: ChartTag, margin: f64) -> Self {
        let (ranges, half_open): ([(f64, f64); 3], [bool; 3]) = match chart {
            ChartTag::S3 => (
                [(margin, PI / 2.0 - margin), (0.0, 2.0 * PI), (0.0, 2.0 * PI)],
                [false, true, true],
            ),
            ChartTag::H3 => (
                [(-1.0, 1.0), (-1.0, 1.0), (0.5, 2.0)],
                [false, false, false],
            ),
            ChartTag::Nil => ([(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], [true, true, true]),
            ChartTag::Sl2 => (
                [(-1.0, 1.0), (0.5, 2.0), (0.0, 2.0 * PI)],
                [false, false, true],
            ),
        };
        SampleGrid { chart, counts: [24, 24, 24], ranges, half_open, random: None }
    }

    pub fn with_counts(mut self, counts: [usize; 3]) -> Self {
        self.counts = counts;
        self
    }

    pub fn with_random(mut self, count: usize, seed: u64) -> Self {
        self.random = Some((count, seed));
        self
    }

    fn axis_points(&self, i: usize) -> Vec<f64> {
        let (lo, hi) = self.ranges[i];
        let n = self.counts[i].max(1);
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        let denom = if self.half_open[i] { n } else { n - 1 } as f64;
        (0..n)
            .map(|k| {
                if !self.half_open[i] && k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / denom
                }
            })
            .collect()
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        if let Some((count, seed)) = self.random {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            return (0..count)
                .map(|_| {
                    std::array::from_fn(|i| {
                        let (lo, hi) = self.ranges[i];
                        rng.gen_range(lo..hi)
                    })
                })
                .collect();
        }
        let axes: [Vec<f64>; 3] = std::array::from_fn(|i| self.axis_points(i));
        let mut out = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
        for &a in &axes[0] {
            for &b in &axes[1] {
                for &c in &axes[2] {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }

    fn steps(&self) -> [f64; 3] {
        std::array::from_fn(|i| {
            let (lo, hi) = self.ranges[i];
            let n = self.counts[i].max(2);
            (hi - lo) / if self.half_open[i] { n as f64 } else { (n - 1) as f64 }
        })
    }

    /// The 5x finer local lattice around a point, clamped to the ranges.
    fn refinement_box(&self, center: [f64; 3]) -> Vec<[f64; 3]> {
        let steps = self.steps();
        let axes: [Vec<f64>; 3] = std::array::from_fn(|i| {
            let (lo, hi) = self.ranges[i];
            (-5..=5)
                .map(|k| (center[i] + k as f64 * steps[i] / 5.0).clamp(lo, hi))
                .collect()
        });
        let mut out = Vec::with_capacity(11 * 11 * 11);
        for &a in &axes[0] {
            for &b in &axes[1] {
                for &c in &axes[2] {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }
}

/// Outcome of one residual check.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResidualReport {
    pub check: String,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub argmax: [f64; 3],
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    fn new(check: &str, max: f64, mean: f64, argmax: [f64; 3], tol: f64) -> Self {
        ResidualReport {
            check: check.to_string(),
            max_residual: max,
            mean_residual: mean,
            argmax,
            tolerance: tol,
            pass: max <= tol,
        }
    }
}

pub fn reports_to_json(reports: &[ResidualReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("report serialization");
    s.push('\n');
    s
}

/// Deterministic chunked sweep: max, mean and argmax of `eval` over the
/// grid, identical for any thread count.
fn sweep_raw(points: &[[f64; 3]], eval: &(dyn Fn([f64; 3]) -> f64 + Sync)) -> (f64, f64, [f64; 3]) {
    const CHUNK: usize = 1024;
    let chunks: Vec<&[[f64; 3]]> = points.chunks(CHUNK).collect();
    let threads = THREADS.load(Ordering::Relaxed);
    let results: Vec<(f64, f64, [f64; 3])> = if threads <= 1 || chunks.len() <= 1 {
        chunks.iter().map(|c| sweep_chunk(c, eval)).collect()
    } else {
        let slots = std::sync::Mutex::new(vec![None; chunks.len()]);
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..threads.min(chunks.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= chunks.len() {
                        break;
                    }
                    let r = sweep_chunk(chunks[i], eval);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
        slots.into_inner().unwrap().into_iter().map(Option::unwrap).collect()
    };
    let mut max = f64::NEG_INFINITY;
    let mut argmax = points[0];
    let mut total = 0.0;
    for (m, sum, am) in results {
        if m > max {
            max = m;
            argmax = am;
        }
        total += sum;
    }
    (max, total / points.len() as f64, argmax)
}

fn sweep_chunk(points: &[[f64; 3]], eval: &(dyn Fn([f64; 3]) -> f64 + Sync)) -> (f64, f64, [f64; 3]) {
    let mut max = f64::NEG_INFINITY;
    let mut argmax = points[0];
    let mut sum = 0.0;
    for &p in points {
        let v = eval(p);
        sum += v;
        if v > max {
            max = v;
            argmax = p;
        }
    }
    (max, sum, argmax)
}

/// Full sweep with the refinement pass.
pub(crate) fn sweep(
    name: &str,
    grid: &SampleGrid,
    tol: f64,
    eval: &(dyn Fn([f64; 3]) -> f64 + Sync),
) -> ResidualReport {
    let points = grid.points();
    let (mut max, mean, mut argmax) = sweep_raw(&points, eval);
    if grid.random.is_none() {
        for p in grid.refinement_box(argmax) {
            let v = eval(p);
            if v > max {
                max = v;
                argmax = p;
            }
        }
    }
    ResidualReport::new(name, max, mean, argmax, tol)
}

fn abs_eval(field: ScalarField) -> impl Fn([f64; 3]) -> f64 + Sync {
    move |p| field.value(p).map(f64::abs).unwrap_or(f64::INFINITY)
}

fn frame_norm_eval(field: FrameField) -> impl Fn([f64; 3]) -> f64 + Sync {
    move |p| match field.values(p) {
        Ok(v) => (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt(),
        Err(_) => f64::INFINITY,
    }
}

fn chart_norm_eval(
    chart: std::sync::Arc<ChartSpec>,
    field: ChartVectorField,
) -> impl Fn([f64; 3]) -> f64 + Sync {
    let n2 = chart.norm2(&field);
    move |p| n2.value(p).map(|v| v.max(0.0).sqrt()).unwrap_or(f64::INFINITY)
}

/// `max |div u|` over the grid.
pub fn check_divergence(desc: &FamilyDescriptor, grid: &SampleGrid, tol: f64) -> ResidualReport {
    let div = match &desc.rep {
        FieldRep::Frame { frame, field } => frame.div_frame(field),
        FieldRep::Chart { chart, field } => chart.div(field),
    };
    sweep("divergence", grid, tol, &abs_eval(div))
}

/// Steady-Euler residuals. The pressure-free criterion is the curl of the
/// acceleration `nabla_u u` (exactness of its dual 1-form on these
/// simply-connected charts). Attached closed forms add the direct pressure
/// residual `nabla_u u + grad p` and the Bernoulli residual
/// `u x curl u - grad b`.
pub fn check_steady_euler(
    desc: &FamilyDescriptor,
    grid: &SampleGrid,
    tol: f64,
) -> Vec<ResidualReport> {
    let mut out = Vec::new();
    match &desc.rep {
        FieldRep::Frame { frame, field } => {
            let acc = frame.covd_frame(field, field).memoized();
            let exact = frame.curl_frame(&acc).expect("oriented frame");
            out.push(sweep("steady-euler-exactness", grid, tol, &frame_norm_eval(exact)));
            if let Some(p) = &desc.pressure {
                let r = acc.add(&frame.grad_frame(p));
                out.push(sweep("pressure-gradient", grid, tol, &frame_norm_eval(r)));
            }
            if let Some(b) = &desc.bernoulli {
                let curl = frame.curl_frame(field).expect("oriented frame").memoized();
                let r = cross(field, &curl).sub(&frame.grad_frame(b));
                out.push(sweep("bernoulli-gradient", grid, tol, &frame_norm_eval(r)));
            }
        }
        FieldRep::Chart { chart, field } => {
            let acc = chart.covd(field, field).memoized();
            let exact = chart.curl(&acc);
            out.push(sweep(
                "steady-euler-exactness",
                grid,
                tol,
                &chart_norm_eval(chart.clone(), exact),
            ));
            if let Some(p) = &desc.pressure {
                let r = acc.add(&chart.grad(p));
                out.push(sweep(
                    "pressure-gradient",
                    grid,
                    tol,
                    &chart_norm_eval(chart.clone(), r),
                ));
            }
        }
    }
    out
}

/// `max |curl u - mu u|`.
pub fn check_beltrami(
    desc: &FamilyDescriptor,
    mu: f64,
    grid: &SampleGrid,
    tol: f64,
) -> ResidualReport {
    match &desc.rep {
        FieldRep::Frame { frame, field } => {
            let r = frame.curl_frame(field).expect("oriented frame").sub(&field.scale(mu));
            sweep("beltrami", grid, tol, &frame_norm_eval(r))
        }
        FieldRep::Chart { chart, field } => {
            let r = chart.curl(field).sub(&field.scale_by(&ScalarField::constant(mu)));
            sweep("beltrami", grid, tol, &chart_norm_eval(chart.clone(), r))
        }
    }
}

/// Scan eigenvalue candidates over `[lo, hi]` and return the minimizer of
/// `max_p |curl u - mu u|` with its residual, on the coarse lattice.
pub fn beltrami_scan(
    desc: &FamilyDescriptor,
    grid: &SampleGrid,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<(f64, f64)> {
    // Per point only |curl u|^2, <curl u, u> and |u|^2 are needed; the
    // residual at any mu is then a quadratic form.
    let (cc, cu, uu): (ScalarField, ScalarField, ScalarField) = match &desc.rep {
        FieldRep::Frame { frame, field } => {
            let c = frame.curl_frame(field)?;
            (c.norm2(), c.dot(field), field.norm2())
        }
        FieldRep::Chart { chart, field } => {
            let c = chart.curl(field);
            (chart.norm2(&c), chart.pairing(&c, field), chart.norm2(field))
        }
    };
    let mut samples = Vec::new();
    for p in grid.points() {
        samples.push((cc.value(p)?, cu.value(p)?, uu.value(p)?));
    }
    let mut best = (f64::NAN, f64::INFINITY);
    let n = ((hi - lo) / step).round() as usize;
    for k in 0..=n {
        let mu = lo + k as f64 * step;
        let worst = samples
            .iter()
            .map(|&(cc, cu, uu)| (cc - 2.0 * mu * cu + mu * mu * uu).max(0.0).sqrt())
            .fold(0.0, f64::max);
        if worst < best.1 {
            best = (mu, worst);
        }
    }
    Ok(best)
}

/// Speed transport `max |u(|u|^2)|`, plus the closed-form match when the
/// descriptor carries one.
pub fn check_localizable(
    desc: &FamilyDescriptor,
    grid: &SampleGrid,
    tol: f64,
) -> Vec<ResidualReport> {
    let transport = desc.rep.dir(&desc.rep.norm2());
    let mut out = vec![sweep("localizability", grid, tol, &abs_eval(transport.clone()))];
    if let Some(closed) = &desc.localizability {
        out.push(sweep(
            "localizability-closed-form",
            grid,
            tol,
            &abs_eval(transport.sub(closed)),
        ));
    }
    out
}

/// `max |u(b)|` for the attached Bernoulli function.
pub fn check_bernoulli_conserved(
    desc: &FamilyDescriptor,
    grid: &SampleGrid,
    tol: f64,
) -> Result<ResidualReport> {
    let b = desc
        .bernoulli
        .as_ref()
        .ok_or_else(|| Error::Config(format!("family `{}` has no Bernoulli function", desc.tag)))?;
    Ok(sweep("bernoulli-conservation", grid, tol, &abs_eval(desc.rep.dir(b))))
}

/// Reeb-symmetry conditions `xi(f) = 0`, `xi(f1) = -(C0+1) f2`,
/// `xi(f2) = (C0+1) f1`, plus the closedness of `phi u`: `div u = xi(f)`
/// and the symmetry of `nabla (phi u)` in its two slots.
pub fn check_xi_symmetry(desc: &FamilyDescriptor, grid: &SampleGrid, tol: f64) -> Result<Vec<ResidualReport>> {
    let FieldRep::Frame { frame, field } = &desc.rep else {
        return Err(Error::Config("xi-symmetry needs a frame representation".into()));
    };
    let [f, f1, f2] = &field.comps;
    let c0p1 = frame.c0.add_scalar(1.0);
    let r0 = frame.dir(0, f);
    let r1 = frame.dir(0, f1).add(&c0p1.mul(f2));
    let r2 = frame.dir(0, f2).sub(&c0p1.mul(f1));
    let s1 = {
        let (r0, r1, r2) = (r0.clone(), r1.clone(), r2.clone());
        move |p: [f64; 3]| -> f64 {
            match (r0.value(p), r1.value(p), r2.value(p)) {
                (Ok(a), Ok(b), Ok(c)) => a.abs().max(b.abs()).max(c.abs()),
                _ => f64::INFINITY,
            }
        }
    };
    let mut out = vec![sweep("xi-symmetry", grid, tol, &s1)];

    // Closedness of phi u: div u - xi(f) and the antisymmetry defect of the
    // covariant differential of phi u over the three frame plane pairs.
    let div_defect = frame.div_frame(field).sub(&frame.dir(0, f));
    let pu = apply_phi(field);
    let e = |i: usize| FrameField::constant(std::array::from_fn(|j| ((i == j) as u8) as f64));
    let mut defects = vec![div_defect];
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let d = frame
            .covd_frame(&e(a), &pu)
            .dot(&e(b))
            .sub(&frame.covd_frame(&e(b), &pu).dot(&e(a)));
        defects.push(d);
    }
    let closed = move |p: [f64; 3]| -> f64 {
        defects
            .iter()
            .map(|d| d.value(p).map(f64::abs).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    };
    out.push(sweep("phi-closedness", grid, tol, &closed));
    Ok(out)
}

/// Bucket sample points by the value of `psi` and check that the gradient
/// norm and the Laplacian are constant within buckets: the numerical
/// rendition of both defining conditions of an isoparametric function.
///
/// A functionally dependent quantity still spreads inside a bucket by its
/// slope times the binwidth, so the threshold is `tol` plus a Lipschitz
/// allowance of `10 x binwidth x max(1, L)`, where `L` is the secant
/// estimate (global range of the quantity over global range of `psi`).
pub fn check_isoparametric(
    chart: &ChartSpec,
    psi: &ScalarField,
    grid: &SampleGrid,
    tol: f64,
) -> Result<Vec<ResidualReport>> {
    const BINWIDTH: f64 = 1e-3;
    let grad2 = chart.norm2(&chart.grad(psi));
    let lap = chart.laplacian(psi);
    let quantities = [("isoparametric-gradient", grad2), ("isoparametric-laplacian", lap)];
    let mut out = Vec::new();
    for (name, q) in quantities {
        use std::collections::HashMap;
        let mut bins: HashMap<i64, (f64, f64, [f64; 3])> = HashMap::new();
        let mut psi_range = (f64::INFINITY, f64::NEG_INFINITY);
        let mut q_range = (f64::INFINITY, f64::NEG_INFINITY);
        for p in grid.points() {
            let w = psi.value(p)?;
            let v = q.value(p)?;
            psi_range = (psi_range.0.min(w), psi_range.1.max(w));
            q_range = (q_range.0.min(v), q_range.1.max(v));
            let key = (w / BINWIDTH).floor() as i64;
            let e = bins.entry(key).or_insert((v, v, p));
            if v < e.0 {
                e.0 = v;
            }
            if v > e.1 {
                e.1 = v;
                e.2 = p;
            }
        }
        let lipschitz = (q_range.1 - q_range.0) / (psi_range.1 - psi_range.0).max(BINWIDTH);
        let effective_tol = tol + 10.0 * BINWIDTH * lipschitz.max(1.0);
        let mut max_spread = 0.0;
        let mut argmax = [0.0; 3];
        let mut total = 0.0;
        for (_, (lo, hi, at)) in &bins {
            let spread = hi - lo;
            total += spread;
            if spread > max_spread {
                max_spread = spread;
                argmax = *at;
            }
        }
        out.push(ResidualReport::new(
            name,
            max_spread,
            total / bins.len() as f64,
            argmax,
            effective_tol,
        ));
    }
    Ok(out)
}

/// Frame-formula results checked against the chart Christoffel oracle:
/// divergence, curl and self-acceleration of `u`, compared after expanding
/// frame output into chart components.
pub fn cross_check_frame_vs_chart(
    desc: &FamilyDescriptor,
    grid: &SampleGrid,
    tol: f64,
) -> Result<Vec<ResidualReport>> {
    let FieldRep::Frame { frame, field } = &desc.rep else {
        return Err(Error::Config("cross-check needs a frame representation".into()));
    };
    let chart = &frame.chart;
    let u_chart = frame.to_chart(field);

    let div_diff = frame.div_frame(field).sub(&chart.div(&u_chart));
    let curl_diff = frame
        .to_chart(&frame.curl_frame(field)?)
        .sub(&chart.curl(&u_chart));
    let covd_diff = frame
        .to_chart(&frame.covd_frame(field, field))
        .sub(&chart.covd(&u_chart, &u_chart));

    Ok(vec![
        sweep("cross-check-div", grid, tol, &abs_eval(div_diff)),
        sweep("cross-check-curl", grid, tol, &chart_norm_eval(chart.clone(), curl_diff)),
        sweep("cross-check-covd", grid, tol, &chart_norm_eval(chart.clone(), covd_diff)),
    ])
}

/// Connection coefficients `nabla_{e_a} e_b = sum_c gamma[a][b][c] e_c` as
/// jets at a point.
fn frame_gamma(
    frame: &SasakianFrameSpec,
    jp: &[crate::jets::Jet; 3],
) -> [[[crate::jets::Jet; 3]; 3]; 3] {
    let order = jp[0].order();
    let zero = crate::jets::Jet::constant(0.0, order);
    let one = crate::jets::Jet::constant(1.0, order);
    let c0 = frame.c0.jet(jp);
    let c1 = frame.c1.jet(jp);
    let c2 = frame.c2.jet(jp);
    [
        [
            [zero.clone(), zero.clone(), zero.clone()],
            [zero.clone(), zero.clone(), -&c0],
            [zero.clone(), c0.clone(), zero.clone()],
        ],
        [
            [zero.clone(), zero.clone(), one.clone()],
            [zero.clone(), zero.clone(), -&c1],
            [-&one, c1.clone(), zero.clone()],
        ],
        [
            [zero.clone(), -&one, zero.clone()],
            [one.clone(), zero.clone(), -&c2],
            [zero.clone(), c2.clone(), zero.clone()],
        ],
    ]
}

/// `sup |u - v| + sum_{i=1..k} sup |nabla^i (u - v)|` over the grid, with
/// iterated covariant derivatives in the orthonormal frame. The norm of the
/// level-`i` tensor is the square root of the sum of squares of its
/// 3^(i+1) frame components.
pub fn ck_distance(
    frame: &SasakianFrameSpec,
    u: &FrameField,
    v: &FrameField,
    k: usize,
    grid: &SampleGrid,
) -> Result<f64> {
    let aux = frame
        .xi
        .depth()
        .max(frame.x1.depth())
        .max(frame.x2.depth())
        .max(frame.c0.depth())
        .max(frame.c1.depth())
        .max(frame.c2.depth());
    let seed = k + u.depth().max(v.depth()) + aux;
    if seed > MAX_ORDER {
        return Err(Error::OrderUnsupported { requested: seed, max: MAX_ORDER });
    }

    let norms_at = |p: [f64; 3]| -> Result<Vec<f64>> {
        let jp = lift(p, seed);
        let w: Vec<crate::jets::Jet> = (0..3)
            .map(|c| u.comps[c].jet(&jp) - v.comps[c].jet(&jp))
            .collect();
        let e: [[crate::jets::Jet; 3]; 3] =
            std::array::from_fn(|a| frame.axis(a).jets(&jp));
        let gamma = frame_gamma(frame, &jp);

        let mut norms = Vec::with_capacity(k + 1);
        let mut tensor = w;
        loop {
            let mut n2 = 0.0;
            for t in &tensor {
                if !t.is_finite() {
                    return Err(Error::SingularEvaluation(format!("ck tensor at {p:?}")));
                }
                n2 += t.value() * t.value();
            }
            norms.push(n2.sqrt());
            let level = norms.len() - 1;
            if level == k {
                break;
            }
            // One more covariant derivative: new index order is
            // (a, b_1..b_level, c) over base-3 digits.
            let old_len = tensor.len();
            let mut next = Vec::with_capacity(3 * old_len);
            for a in 0..3 {
                for idx in 0..old_len {
                    let c = idx % 3;
                    let slots = idx / 3;
                    // e_a applied to the component function.
                    let mut acc = {
                        let t = &tensor[idx];
                        let mut s = &e[a][0] * t.partial_jet(0);
                        for i in 1..3 {
                            s = s + &e[a][i] * t.partial_jet(i);
                        }
                        s
                    };
                    // Connection acting on the vector value.
                    for d in 0..3 {
                        acc = acc + &tensor[slots * 3 + d] * &gamma[a][d][c];
                    }
                    // Connection acting on each derivative slot.
                    let mut rest = slots;
                    let mut place = 1;
                    for _ in 0..level {
                        let b = rest % 3;
                        for d in 0..3 {
                            let swapped = (slots - b * place + d * place) * 3 + c;
                            acc = acc - &gamma[a][b][d] * &tensor[swapped];
                        }
                        rest /= 3;
                        place *= 3;
                    }
                    next.push(acc);
                }
            }
            tensor = next;
        }
        Ok(norms)
    };

    let points = grid.points();
    let mut sups = vec![f64::NEG_INFINITY; k + 1];
    let mut argmaxes = vec![points[0]; k + 1];
    for &p in &points {
        let ns = norms_at(p)?;
        for (i, n) in ns.iter().enumerate() {
            if *n > sups[i] {
                sups[i] = *n;
                argmaxes[i] = p;
            }
        }
    }
    if grid.random.is_none() {
        for i in 0..=k {
            for p in grid.refinement_box(argmaxes[i]) {
                let n = norms_at(p)?[i];
                if n > sups[i] {
                    sups[i] = n;
                }
            }
        }
    }
    Ok(sups.iter().sum())
}
