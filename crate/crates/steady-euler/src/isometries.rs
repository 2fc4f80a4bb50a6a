//! Ambient orthogonal maps of the 3-sphere, Hopf/Cartesian coordinate
//! conversions, pullback and pushforward of fields, and pointwise
//! equivalence checks between families.
//!
//! The sphere sits in R^4 as `(x1, y1, x2, y2) = (cos s e^{i phi1},
//! sin s e^{i phi2})`. The ambient route gives a singularity-free
//! representation of frame fields away from the chart axes and turns every
//! isometry claim into a pointwise comparison.

use crate::charts::ChartTag;
use crate::error::{Error, Result};
use crate::frames::FrameField;
use crate::jets::{Jet, ScalarField};
use crate::verify::{sweep, ResidualReport, SampleGrid};
use std::f64::consts::PI;

/// Cartesian coordinates of a Hopf point.
pub fn hopf_to_cartesian(p: [f64; 3]) -> [f64; 4] {
    let (s, p1, p2) = (p[0], p[1], p[2]);
    [
        s.cos() * p1.cos(),
        s.cos() * p1.sin(),
        s.sin() * p2.cos(),
        s.sin() * p2.sin(),
    ]
}

/// Hopf coordinates of a unit vector, with `phi` branches in `[0, 2 pi)`
/// and `s = atan2(|(x2, y2)|, |(x1, y1)|)` in `[0, pi/2]`.
pub fn cartesian_to_hopf(x: [f64; 4]) -> Result<[f64; 3]> {
    let r1 = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let r2 = (x[2] * x[2] + x[3] * x[3]).sqrt();
    if r1 < 1e-12 || r2 < 1e-12 {
        return Err(Error::AxisPoint);
    }
    let wrap = |a: f64| if a < 0.0 { a + 2.0 * PI } else { a };
    Ok([
        r2.atan2(r1),
        wrap(x[1].atan2(x[0])),
        wrap(x[3].atan2(x[2])),
    ])
}

pub(crate) fn hopf_to_cartesian_jets(jp: &[Jet; 3]) -> [Jet; 4] {
    let (cs, ss) = (jp[0].cos(), jp[0].sin());
    [
        &cs * jp[1].cos(),
        &cs * jp[1].sin(),
        &ss * jp[2].cos(),
        &ss * jp[2].sin(),
    ]
}

pub(crate) fn cartesian_to_hopf_jets(x: &[Jet; 4]) -> [Jet; 3] {
    let r1 = (&x[0] * &x[0] + &x[1] * &x[1]).sqrt();
    let r2 = (&x[2] * &x[2] + &x[3] * &x[3]).sqrt();
    let wrap = |jet: Jet| {
        if jet.value() < 0.0 {
            jet.add_scalar(2.0 * PI)
        } else {
            jet
        }
    };
    [
        Jet::atan2(&r2, &r1),
        wrap(Jet::atan2(&x[1], &x[0])),
        wrap(Jet::atan2(&x[3], &x[2])),
    ]
}

/// The ambient Killing frame: the curl eigenfields of eigenvalue 2 as
/// polynomial vector fields of the Cartesian coordinates.
pub(crate) fn std_frame_ambient(x: &[Jet; 4]) -> [[Jet; 4]; 3] {
    [
        [-&x[1], x[0].clone(), -&x[3], x[2].clone()],
        [-&x[2], x[3].clone(), x[0].clone(), -&x[1]],
        [-&x[3], -&x[2], x[1].clone(), x[0].clone()],
    ]
}

/// An orthogonal map of R^4 restricted to the sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbientIsometry {
    pub q: [[f64; 4]; 4],
}

impl AmbientIsometry {
    pub fn new(q: [[f64; 4]; 4]) -> Result<Self> {
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| q[k][i] * q[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-13 {
                    return Err(Error::Config(format!(
                        "matrix is not orthogonal: column pairing ({i},{j}) = {dot}"
                    )));
                }
            }
        }
        Ok(AmbientIsometry { q })
    }

    pub fn det(&self) -> f64 {
        let q = &self.q;
        let minor = |r: [usize; 3], c: [usize; 3]| -> f64 {
            q[r[0]][c[0]] * (q[r[1]][c[1]] * q[r[2]][c[2]] - q[r[1]][c[2]] * q[r[2]][c[1]])
                - q[r[0]][c[1]] * (q[r[1]][c[0]] * q[r[2]][c[2]] - q[r[1]][c[2]] * q[r[2]][c[0]])
                + q[r[0]][c[2]] * (q[r[1]][c[0]] * q[r[2]][c[1]] - q[r[1]][c[1]] * q[r[2]][c[0]])
        };
        let rows = [1, 2, 3];
        let mut det = 0.0;
        for (j, sign) in [(0, 1.0), (1, -1.0), (2, 1.0), (3, -1.0)] {
            let cols: [usize; 3] = match j {
                0 => [1, 2, 3],
                1 => [0, 2, 3],
                2 => [0, 1, 3],
                _ => [0, 1, 2],
            };
            det += sign * self.q[0][j] * minor(rows, cols);
        }
        det
    }

    pub fn apply_values(&self, x: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| (0..4).map(|j| self.q[i][j] * x[j]).sum())
    }

    fn apply_jets(&self, x: &[Jet; 4]) -> [Jet; 4] {
        std::array::from_fn(|i| {
            let mut acc = x[0].scale(self.q[i][0]);
            for j in 1..4 {
                acc = acc + x[j].scale(self.q[i][j]);
            }
            acc
        })
    }

    fn transpose(&self) -> AmbientIsometry {
        AmbientIsometry {
            q: std::array::from_fn(|i| std::array::from_fn(|j| self.q[j][i])),
        }
    }

    /// The image of a Hopf point under the map.
    pub fn map_point(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        cartesian_to_hopf(self.apply_values(hopf_to_cartesian(p)))
    }
}

/// The isometry `(x1, y1, x2, y2) -> ((x1+y2), (y1-x2), (y1+x2), (-x1+y2))
/// / sqrt 2`, which carries the quartic integral into `sin^2 2s`.
pub fn psi_map() -> AmbientIsometry {
    let r = 0.5_f64.sqrt();
    AmbientIsometry::new([
        [r, 0.0, 0.0, r],
        [0.0, r, -r, 0.0],
        [0.0, r, r, 0.0],
        [-r, 0.0, 0.0, r],
    ])
    .expect("static matrix")
}

/// The orientation-reversing flip `y2 -> -y2` (equivalently `phi2 ->
/// -phi2`).
pub fn mirror_map() -> AmbientIsometry {
    AmbientIsometry::new([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
    ])
    .expect("static matrix")
}

/// The twin-solution isometry `x1' = (x1-y2)/sqrt2, y1' = (y1-x2)/sqrt2,
/// x2' = (x2+y1)/sqrt2, y2' = (x1+y2)/sqrt2`.
pub fn sec43_map() -> AmbientIsometry {
    let r = 0.5_f64.sqrt();
    AmbientIsometry::new([
        [r, 0.0, 0.0, -r],
        [0.0, r, -r, 0.0],
        [0.0, r, r, 0.0],
        [r, 0.0, 0.0, r],
    ])
    .expect("static matrix")
}

pub fn isometry_by_name(name: &str) -> Result<AmbientIsometry> {
    match name {
        "psi" => Ok(psi_map()),
        "mirror" => Ok(mirror_map()),
        "sec43" => Ok(sec43_map()),
        other => {
            // A 16-number row-major matrix literal.
            let vals: Vec<f64> = other
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| Error::UnknownTag(other.into())))
                .collect::<Result<_>>()?;
            if vals.len() != 16 {
                return Err(Error::UnknownTag(other.into()));
            }
            AmbientIsometry::new(std::array::from_fn(|i| std::array::from_fn(|j| vals[4 * i + j])))
        }
    }
}

/// Four Cartesian component fields of a tangent vector field, evaluated at
/// Hopf points.
#[derive(Clone)]
pub struct AmbientVectorField {
    pub comps: [ScalarField; 4],
}

/// Ambient representation of a frame field through the Killing-frame
/// polynomials.
pub fn ambient_of(field: &FrameField) -> AmbientVectorField {
    let comps: [ScalarField; 4] = std::array::from_fn(|i| {
        let field = field.clone();
        ScalarField::from_fn(field.depth(), move |jp| {
            let x = hopf_to_cartesian_jets(jp);
            let frame = std_frame_ambient(&x);
            let mut acc = field.comps[0].jet(jp) * &frame[0][i];
            for a in 1..3 {
                acc = acc + field.comps[a].jet(jp) * &frame[a][i];
            }
            acc
        })
    });
    AmbientVectorField { comps }
}

/// Composition `f(Q x)` as a field of Hopf coordinates.
pub fn pullback_scalar(iso: &AmbientIsometry, f: &ScalarField) -> ScalarField {
    let iso = *iso;
    let f = f.clone();
    ScalarField::from_fn(f.depth(), move |jp| {
        let y = iso.apply_jets(&hopf_to_cartesian_jets(jp));
        f.jet(&cartesian_to_hopf_jets(&y))
    })
}

/// The pushforward `dQ . u . Q^{-1}` of a frame field, expressed again in
/// frame components at the image point.
pub fn pushforward(iso: &AmbientIsometry, field: &FrameField) -> FrameField {
    let qt = iso.transpose();
    let iso = *iso;
    let field = field.clone();
    let depth = field.depth();
    FrameField {
        comps: std::array::from_fn(|c| {
            let field = field.clone();
            ScalarField::from_fn(depth, move |jp| {
                let x = hopf_to_cartesian_jets(jp);
                let y = qt.apply_jets(&x);
                let q_hopf = cartesian_to_hopf_jets(&y);
                let source_frame = std_frame_ambient(&y);
                let mut u_amb: [Jet; 4] = std::array::from_fn(|i| {
                    field.comps[0].jet(&q_hopf) * &source_frame[0][i]
                });
                for a in 1..3 {
                    let fa = field.comps[a].jet(&q_hopf);
                    for (i, comp) in u_amb.iter_mut().enumerate() {
                        *comp = comp.clone() + &fa * &source_frame[a][i];
                    }
                }
                let v_amb = iso.apply_jets(&u_amb);
                let target = std_frame_ambient(&x);
                let mut acc = &v_amb[0] * &target[c][0];
                for i in 1..4 {
                    acc = acc + &v_amb[i] * &target[c][i];
                }
                acc
            })
        }),
    }
    .memoized()
}

/// Maximum pointwise norm of `pushforward(u) - v` over the grid.
pub fn check_equivalence(
    iso: &AmbientIsometry,
    u: &FrameField,
    v: &FrameField,
    grid: &SampleGrid,
    tol: f64,
) -> ResidualReport {
    if grid.chart != ChartTag::S3 {
        let mut r = ResidualReport {
            check: "isometry-equivalence".into(),
            max_residual: f64::INFINITY,
            mean_residual: f64::INFINITY,
            argmax: [0.0; 3],
            tolerance: tol,
            pass: false,
        };
        r.check = "isometry-equivalence".into();
        return r;
    }
    let diff = pushforward(iso, u).sub(v);
    let eval = move |p: [f64; 3]| match diff.values(p) {
        Ok(v) => (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt(),
        Err(_) => f64::INFINITY,
    };
    sweep("isometry-equivalence", grid, tol, &eval)
}
