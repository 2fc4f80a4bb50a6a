//! Constructors for the steady Euler solution families and their attached
//! closed forms (Bernoulli functions, pressures, speed-transport residuals,
//! curl eigenvalues).
//!
//! Families on the 3-sphere are expressed in the Hopf adapted frame; the
//! half-space family and the Heisenberg / `SL(2, R)` ansatz fields live in
//! chart or derived-frame components. Every attached closed form is an
//! ordinary [`ScalarField`], so the verification suite can differentiate it
//! like anything else.

use crate::charts::{ChartSpec, ChartTag, ChartVectorField};
use crate::error::{Error, Result};
use crate::frames::{
    frame_for, nil_frame, s3_frame, s3_primed_frame, sl2_frame, FrameField, SasakianFrameSpec,
};
use crate::jets::{Jet, ScalarField};
use crate::profile::Profile;
use std::f64::consts::PI;
use std::sync::Arc;

/// The field of a family, in whichever representation it is built.
#[derive(Clone)]
pub enum FieldRep {
    Frame {
        frame: Arc<SasakianFrameSpec>,
        field: FrameField,
    },
    Chart {
        chart: Arc<ChartSpec>,
        field: ChartVectorField,
    },
}

impl FieldRep {
    pub fn chart_spec(&self) -> &Arc<ChartSpec> {
        match self {
            FieldRep::Frame { frame, .. } => &frame.chart,
            FieldRep::Chart { chart, .. } => chart,
        }
    }

    pub fn chart_tag(&self) -> ChartTag {
        self.chart_spec().tag
    }

    pub fn depth(&self) -> usize {
        match self {
            FieldRep::Frame { field, .. } => field.depth(),
            FieldRep::Chart { field, .. } => field.depth(),
        }
    }

    /// Chart components of the field, whatever the representation.
    pub fn to_chart_field(&self) -> ChartVectorField {
        match self {
            FieldRep::Frame { frame, field } => frame.to_chart(field),
            FieldRep::Chart { field, .. } => field.clone(),
        }
    }

    /// Squared speed `|u|^2`.
    pub fn norm2(&self) -> ScalarField {
        match self {
            FieldRep::Frame { field, .. } => field.norm2(),
            FieldRep::Chart { chart, field } => chart.norm2(field),
        }
    }

    /// Directional derivative of a scalar along the field.
    pub fn dir(&self, h: &ScalarField) -> ScalarField {
        match self {
            FieldRep::Frame { frame, field } => frame.field_dir(field, h),
            FieldRep::Chart { field, .. } => crate::charts::directional(field, h),
        }
    }
}

impl std::fmt::Debug for FieldRep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldRep::Frame { frame, .. } => write!(f, "FieldRep::Frame({})", frame.chart.tag.name()),
            FieldRep::Chart { chart, .. } => write!(f, "FieldRep::Chart({})", chart.tag.name()),
        }
    }
}

/// A constructed solution family member together with whatever closed forms
/// it carries.
#[derive(Clone, Debug)]
pub struct FamilyDescriptor {
    pub tag: String,
    pub rep: FieldRep,
    /// Closed-form Bernoulli function, when known.
    pub bernoulli: Option<ScalarField>,
    /// Closed-form pressure, when known.
    pub pressure: Option<ScalarField>,
    /// Closed form of the speed transport `u(|u|^2)`, when known.
    pub localizability: Option<ScalarField>,
    /// Curl eigenvalue, when the member is a strong Beltrami field.
    pub beltrami_mu: Option<f64>,
}

impl FamilyDescriptor {
    fn new(tag: impl Into<String>, rep: FieldRep) -> Self {
        FamilyDescriptor {
            tag: tag.into(),
            rep,
            bernoulli: None,
            pressure: None,
            localizability: None,
            beltrami_mu: None,
        }
    }
}

// Hopf-coordinate building blocks.

fn sf(f: impl Fn(&[Jet; 3]) -> Jet + Send + Sync + 'static) -> ScalarField {
    ScalarField::from_fn(0, f)
}

fn cos_sq_s() -> ScalarField {
    sf(|jp| jp[0].cos().powi(2))
}

fn cos2s() -> ScalarField {
    sf(|jp| jp[0].scale(2.0).cos())
}

fn sin2s() -> ScalarField {
    sf(|jp| jp[0].scale(2.0).sin())
}

fn sin_sum() -> ScalarField {
    sf(|jp| (&jp[1] + &jp[2]).sin())
}

fn cos_sum() -> ScalarField {
    sf(|jp| (&jp[1] + &jp[2]).cos())
}

/// `c * sin 2s * sin 4s * sin(2(phi1 ± phi2))`, the shape shared by the
/// speed-transport closed forms on the 3-sphere.
fn speed_transport_form(c: f64, plus: bool) -> ScalarField {
    sf(move |jp| {
        let ang = if plus { &jp[1] + &jp[2] } else { &jp[1] - &jp[2] };
        (jp[0].scale(2.0).sin() * jp[0].scale(4.0).sin() * ang.scale(2.0).sin()).scale(c)
    })
}

/// The two-Killing-combination family on the 3-sphere:
/// `u = sin 2s (a1 sin(phi1+phi2) X1 + a2 cos(phi1+phi2) X2)`.
///
/// Carries its Bernoulli function, the pressure `a1 a2 cos 4s / 4`, the
/// closed-form speed transport `a1 a2 (a1 + a2) sin 2s sin 4s
/// sin 2(phi1+phi2)`, and the curl eigenvalue 4 when `a1 = a2`.
pub fn two_killing(a1: f64, a2: f64) -> Result<FamilyDescriptor> {
    if a1 == 0.0 && a2 == 0.0 {
        return Err(Error::BothParametersZero);
    }
    let field = FrameField::new(
        ScalarField::zero(),
        sin2s().mul(&sin_sum()).scale(a1),
        sin2s().mul(&cos_sum()).scale(a2),
    )
    .memoized();
    let mut desc = FamilyDescriptor::new(
        "two-killing",
        FieldRep::Frame { frame: s3_frame(), field },
    );
    desc.bernoulli = Some(sf(move |jp| {
        let cos4s = jp[0].scale(4.0).cos();
        let sin2s = jp[0].scale(2.0).sin();
        let cos2sum = (&jp[1] + &jp[2]).scale(2.0).cos();
        let aniso = cos2sum.scale(-(a1 * a1 - a2 * a2)).add_scalar(a1 * a1 + a2 * a2);
        (cos4s.scale(a1 * a2) + aniso * &sin2s * &sin2s).scale(0.25)
    }));
    desc.pressure = Some(sf(move |jp| jp[0].scale(4.0).cos().scale(0.25 * a1 * a2)));
    desc.localizability = Some(speed_transport_form(a1 * a2 * (a1 + a2), true));
    if a1 == a2 {
        desc.beltrami_mu = Some(4.0);
    }
    Ok(desc)
}

/// The Hopf-field combination family `u = A(cos^2 s) xi + B(cos^2 s) xi'`,
/// written in the Hopf frame via the expansion
/// `xi' = cos 2s xi + sin 2s sin(phi1+phi2) X1 - sin 2s cos(phi1+phi2) X2`.
pub fn kkps(a: Profile, b: Profile) -> FamilyDescriptor {
    let x = cos_sq_s();
    let a_of = a.of(&x);
    let b_of = b.of(&x);
    let field = FrameField::new(
        a_of.add(&b_of.mul(&cos2s())),
        b_of.mul(&sin2s()).mul(&sin_sum()),
        b_of.mul(&sin2s()).mul(&cos_sum()).neg(),
    )
    .memoized();
    let mut desc = FamilyDescriptor::new("kkps", FieldRep::Frame { frame: s3_frame(), field });
    // Speed is a function of cos^2 s, a shared first integral: transport
    // vanishes identically.
    desc.localizability = Some(ScalarField::zero());
    let (pa, pb) = (a.as_polynomial(), b.as_polynomial());
    let is_const = |p: &Option<Vec<f64>>| p.as_ref().map(|c| c.len() == 1 && c[0] != 0.0).unwrap_or(false);
    if b.is_zero() && is_const(&pa) {
        desc.beltrami_mu = Some(2.0);
    } else if a.is_zero() && is_const(&pb) {
        desc.beltrami_mu = Some(-2.0);
    }
    desc
}

/// The half-space family `u = A(z) d/dx + B(z) d/dy` on hyperbolic 3-space,
/// with the pressure `p(z) = -int_1^z (A^2+B^2)/t^3 dt`.
pub fn hyperbolic(a: Profile, b: Profile) -> FamilyDescriptor {
    let chart = ChartSpec::get(ChartTag::H3);
    let z = ScalarField::coord(2);
    let field = ChartVectorField::new([a.of(&z), b.of(&z), ScalarField::zero()]).memoized();
    let mut desc = FamilyDescriptor::new("hyperbolic", FieldRep::Chart { chart, field });
    let speed2 = a.mul(&a).add(&b.mul(&b));
    let integrand = speed2.mul(&Profile::identity().powi(-3));
    desc.pressure = Some(integrand.antiderivative_of(&z, 1.0).neg());
    desc.localizability = Some(ScalarField::zero());
    desc
}

/// Build the contact-geometry ansatz `u = F(psi) xi + phi(grad G(psi))` over
/// an adapted frame, in components `(F(psi), X2(G(psi)), -X1(G(psi)))`.
///
/// `psi` must be a first integral of the Reeb field; this is checked on the
/// frame's validation lattice. When `laplace_profile` (the function with
/// `Delta G(psi) = laplace_profile(psi)`) is supplied, the Bernoulli
/// function `F^2/2 - int_0^psi (LP(q) + 2 F(q)) G'(q) dq` and the matching
/// pressure are attached.
pub fn sasakian_ansatz(
    frame: Arc<SasakianFrameSpec>,
    f: Profile,
    g: Profile,
    psi: ScalarField,
    laplace_profile: Option<Profile>,
) -> Result<FamilyDescriptor> {
    let xi_psi = frame.dir(0, &psi);
    for p in crate::frames::validation_points(frame.chart.tag) {
        let v = xi_psi.value(p)?;
        if v.abs() > 1e-9 {
            return Err(Error::PreconditionViolated(format!(
                "psi is not a Reeb first integral: xi(psi) = {v:.3e} at {p:?}"
            )));
        }
    }
    Ok(ansatz_unchecked(frame, f, g, psi, laplace_profile))
}

/// Same construction without the first-integral precondition; used by tests
/// that measure the divergence defect of invalid inputs.
pub fn ansatz_unchecked(
    frame: Arc<SasakianFrameSpec>,
    f: Profile,
    g: Profile,
    psi: ScalarField,
    laplace_profile: Option<Profile>,
) -> FamilyDescriptor {
    let g_psi = g.of(&psi);
    let f_psi = f.of(&psi);
    let field = FrameField::new(
        f_psi.clone(),
        frame.dir(2, &g_psi),
        frame.dir(1, &g_psi).neg(),
    )
    .memoized();
    let grad_g = frame.grad_frame(&g_psi);
    let mut desc = FamilyDescriptor::new(
        "ansatz",
        FieldRep::Frame { frame: frame.clone(), field },
    );
    if let Some(lp) = laplace_profile {
        let integrand = lp.add(&f.scale(2.0)).mul(&g.derivative());
        let integral = integrand.antiderivative_of(&psi, 0.0);
        desc.bernoulli = Some(f_psi.sq().scale(0.5).sub(&integral));
        desc.pressure = Some(grad_g.norm2().scale(-0.5).sub(&integral));
    }
    desc
}

/// The deformed quartic first integral
/// `psi_a = (3 + cos 4s + 2 a sin^2 2s cos 2(phi1 - phi2)) / 4`.
pub fn nomizu_psi(a: f64) -> ScalarField {
    sf(move |jp| {
        let sin2s = jp[0].scale(2.0).sin();
        let c2d = (&jp[1] - &jp[2]).scale(2.0).cos();
        (jp[0].scale(4.0).cos() + (&sin2s * &sin2s * c2d).scale(2.0 * a))
            .add_scalar(3.0)
            .scale(0.25)
    })
}

/// The quartic-integral family `u_a = F(psi_a) xi + phi(grad psi_a)`.
///
/// Satisfies `Delta psi_a = 8 (3 psi_a - 2)`; carries the Bernoulli function
/// `F(psi_a)^2/2 - 12 psi_a^2 + 16 psi_a - 2 int_0^psi_a F`, the closed-form
/// speed transport `16 a (a^2-1) sin 2s sin 4s sin 2(phi1-phi2)`, and the
/// curl eigenvalue 6 when `F(x) = 2(3x - 2)`.
pub fn nomizu_family(a: f64, f: Profile) -> Result<FamilyDescriptor> {
    let mut desc = sasakian_ansatz(
        s3_frame(),
        f.clone(),
        Profile::identity(),
        nomizu_psi(a),
        Some(Profile::parse("24*x - 16").expect("static profile")),
    )?;
    desc.tag = "nomizu".to_string();
    desc.localizability = Some(speed_transport_form(16.0 * a * (a * a - 1.0), false));
    if let Some(c) = f.as_polynomial() {
        if c.len() == 2 && (c[0] + 4.0).abs() < 1e-12 && (c[1] - 6.0).abs() < 1e-12 {
            desc.beltrami_mu = Some(6.0);
        }
    }
    Ok(desc)
}

/// Labels of the twin and mirror solution forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwinTag {
    Kkps1,
    Kkps1Mirror,
    Kkps1b,
    Kkps1bMirror,
    Kkps2AlterX1,
    Kkps2AlterX2,
    Kkps3,
    Kkps3Mirror,
    Kkps3Bis,
    Kkps3BisMirror,
}

impl TwinTag {
    pub const ALL: [TwinTag; 10] = [
        TwinTag::Kkps1,
        TwinTag::Kkps1Mirror,
        TwinTag::Kkps1b,
        TwinTag::Kkps1bMirror,
        TwinTag::Kkps2AlterX1,
        TwinTag::Kkps2AlterX2,
        TwinTag::Kkps3,
        TwinTag::Kkps3Mirror,
        TwinTag::Kkps3Bis,
        TwinTag::Kkps3BisMirror,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TwinTag::Kkps1 => "kkps1",
            TwinTag::Kkps1Mirror => "kkps1-mirror",
            TwinTag::Kkps1b => "kkps1b",
            TwinTag::Kkps1bMirror => "kkps1b-mirror",
            TwinTag::Kkps2AlterX1 => "kkps2alter-x1",
            TwinTag::Kkps2AlterX2 => "kkps2alter-x2",
            TwinTag::Kkps3 => "kkps3",
            TwinTag::Kkps3Mirror => "kkps3-mirror",
            TwinTag::Kkps3Bis => "kkps3bis",
            TwinTag::Kkps3BisMirror => "kkps3bis-mirror",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TwinTag::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::UnknownTag(format!("twin:{s}")))
    }
}

/// First integrals used by the twin solutions.
fn twin_integral(tag: TwinTag) -> ScalarField {
    match tag {
        TwinTag::Kkps1 => sf(|jp| jp[0].scale(2.0).sin() * (&jp[1] + &jp[2]).sin()),
        TwinTag::Kkps1Mirror => sf(|jp| jp[0].scale(2.0).sin() * (&jp[1] - &jp[2]).sin()),
        TwinTag::Kkps1b => sf(|jp| jp[0].scale(2.0).sin() * (&jp[1] + &jp[2]).cos()),
        TwinTag::Kkps1bMirror => sf(|jp| jp[0].scale(2.0).sin() * (&jp[1] - &jp[2]).cos()),
        TwinTag::Kkps3 => sf(|jp| {
            jp[0].cos().powi(2) * jp[1].scale(2.0).sin()
                - jp[0].sin().powi(2) * jp[2].scale(2.0).sin()
        }),
        TwinTag::Kkps3Mirror => sf(|jp| {
            jp[0].cos().powi(2) * jp[1].scale(2.0).sin()
                + jp[0].sin().powi(2) * jp[2].scale(2.0).sin()
        }),
        TwinTag::Kkps3Bis => sf(|jp| {
            jp[0].cos().powi(2) * jp[1].scale(2.0).cos()
                + jp[0].sin().powi(2) * jp[2].scale(2.0).cos()
        }),
        TwinTag::Kkps3BisMirror => sf(|jp| {
            jp[0].cos().powi(2) * jp[1].scale(2.0).cos()
                - jp[0].sin().powi(2) * jp[2].scale(2.0).cos()
        }),
        TwinTag::Kkps2AlterX1 | TwinTag::Kkps2AlterX2 => unreachable!("no shared integral"),
    }
}

/// One of the ten twin/mirror solution forms.
///
/// The function-pair forms are `u = F(w) E1 + G(w) E2` for a first integral
/// `w` shared by the basis fields `E1`, `E2`. The two scalar-parameter forms
/// (`kkps2alter-*`) take their parameters as `a = F(1)`, `b = G(1)`, which
/// agrees with constant profiles and maps the identity profile to 1.
pub fn twin_family(tag: TwinTag, f: Profile, g: Profile) -> Result<FamilyDescriptor> {
    let hopf = s3_frame();
    let primed = s3_primed_frame();
    let make = |e1: &ChartVectorField, e2: &ChartVectorField, w: ScalarField| -> FieldRep {
        let fw = f.of(&w);
        let gw = g.of(&w);
        let total = e1.scale_by(&fw).add(&e2.scale_by(&gw));
        FieldRep::Frame { frame: hopf.clone(), field: hopf.from_chart(&total).memoized() }
    };
    let localizable = matches!(
        tag,
        TwinTag::Kkps1 | TwinTag::Kkps1Mirror | TwinTag::Kkps1b | TwinTag::Kkps1bMirror
    );
    let rep = match tag {
        TwinTag::Kkps1 => make(&hopf.x1, &primed.xi, twin_integral(tag)),
        TwinTag::Kkps1Mirror => make(&primed.x1, &hopf.xi, twin_integral(tag)),
        TwinTag::Kkps1b => make(&hopf.x2, &primed.xi, twin_integral(tag)),
        TwinTag::Kkps1bMirror => make(&primed.x2, &hopf.xi, twin_integral(tag)),
        TwinTag::Kkps3 => make(&hopf.x1, &primed.x2, twin_integral(tag)),
        TwinTag::Kkps3Mirror => make(&primed.x1, &hopf.x2, twin_integral(tag)),
        TwinTag::Kkps3Bis => make(&hopf.x1, &primed.x1, twin_integral(tag)),
        TwinTag::Kkps3BisMirror => make(&hopf.x2, &primed.x2, twin_integral(tag)),
        TwinTag::Kkps2AlterX1 | TwinTag::Kkps2AlterX2 => {
            let (a, b) = (f.eval(1.0), g.eval(1.0));
            let along = cos2s().scale(a);
            let swing = sin2s().scale(b);
            let field = match tag {
                TwinTag::Kkps2AlterX1 => {
                    FrameField::new(along, swing.mul(&sin_sum()), ScalarField::zero())
                }
                _ => FrameField::new(along, ScalarField::zero(), swing.mul(&cos_sum())),
            };
            FieldRep::Frame { frame: hopf.clone(), field }
        }
    };
    let mut desc = FamilyDescriptor::new(format!("twin:{}", tag.label()), rep);
    if localizable {
        desc.localizability = Some(ScalarField::zero());
    }
    Ok(desc)
}

fn mirror_jets(jp: &[Jet; 3]) -> [Jet; 3] {
    [jp[0].clone(), jp[1].clone(), -&jp[2]]
}

fn pullback_scalar_mirror(h: &ScalarField) -> ScalarField {
    let h = h.clone();
    ScalarField::from_fn(h.depth(), move |jp| h.jet(&mirror_jets(jp)))
}

/// The image of a 3-sphere family under the orientation-reversing isometry
/// that flips `phi2`. Scalar closed forms pull back through the flip; the
/// curl eigenvalue changes sign (the isometry reverses orientation).
pub fn mirror(desc: &FamilyDescriptor) -> Result<FamilyDescriptor> {
    let FieldRep::Frame { frame, field } = &desc.rep else {
        return Err(Error::Config(
            "mirror is defined for 3-sphere frame families".into(),
        ));
    };
    if frame.chart.tag != ChartTag::S3 {
        return Err(Error::Config(
            "mirror is defined for 3-sphere frame families".into(),
        ));
    }
    let u_chart = frame.to_chart(field);
    let depth = u_chart.depth();
    let pushed = ChartVectorField::new(std::array::from_fn(|i| {
        let comp = u_chart.comps[i].clone();
        let sign = if i == 2 { -1.0 } else { 1.0 };
        ScalarField::from_fn(depth, move |jp| comp.jet(&mirror_jets(jp)).scale(sign))
    }));
    let hopf = s3_frame();
    let mut out = FamilyDescriptor::new(
        format!("mirror:{}", desc.tag),
        FieldRep::Frame { frame: hopf.clone(), field: hopf.from_chart(&pushed).memoized() },
    );
    out.bernoulli = desc.bernoulli.as_ref().map(pullback_scalar_mirror);
    out.pressure = desc.pressure.as_ref().map(pullback_scalar_mirror);
    out.localizability = desc.localizability.as_ref().map(pullback_scalar_mirror);
    out.beltrami_mu = desc.beltrami_mu.map(|m| -m);
    Ok(out)
}

/// Named first integrals for the command line, with the profile of
/// `Delta psi` as a function of `psi` and whether `psi` is isoparametric.
pub struct NamedPsi {
    pub field: ScalarField,
    pub laplace_profile: Profile,
    pub isoparametric: bool,
}

pub fn named_psi(tag: ChartTag, name: &str, a: Option<f64>) -> Result<NamedPsi> {
    match (tag, name) {
        (ChartTag::S3, "coss2") => Ok(NamedPsi {
            field: cos_sq_s(),
            laplace_profile: Profile::parse("8*x - 4").unwrap(),
            isoparametric: true,
        }),
        (ChartTag::S3, "sin2sq") => Ok(NamedPsi {
            field: sf(|jp| jp[0].scale(2.0).sin().powi(2)),
            laplace_profile: Profile::parse("24*x - 16").unwrap(),
            isoparametric: true,
        }),
        (ChartTag::S3, "nomizu") => {
            let a = a.ok_or_else(|| Error::Config("psi `nomizu` needs parameter a".into()))?;
            Ok(NamedPsi {
                field: nomizu_psi(a),
                laplace_profile: Profile::parse("24*x - 16").unwrap(),
                isoparametric: a == 0.0 || a == 1.0,
            })
        }
        (ChartTag::Nil, "wave") => Ok(NamedPsi {
            field: sf(|jp| (&jp[0] - &jp[1]).scale(2.0 * PI).cos()),
            laplace_profile: Profile::identity().scale(8.0 * PI),
            isoparametric: true,
        }),
        (ChartTag::Sl2, "ratio") => Ok(NamedPsi {
            field: sf(|jp| &jp[0] / &jp[1]),
            laplace_profile: Profile::identity().scale(-4.0),
            isoparametric: true,
        }),
        _ => Err(Error::UnknownTag(format!("psi `{name}` on chart {}", tag.name()))),
    }
}

/// The default ansatz member on a chart: the named first integral of the
/// space with the given profiles.
pub fn default_ansatz(tag: ChartTag, f: Profile, g: Profile) -> Result<FamilyDescriptor> {
    let (frame, psi_name) = match tag {
        ChartTag::S3 => (s3_frame(), "coss2"),
        ChartTag::Nil => (nil_frame(), "wave"),
        ChartTag::Sl2 => (sl2_frame(), "ratio"),
        ChartTag::H3 => {
            return Err(Error::Config("the contact ansatz needs a Sasakian chart".into()))
        }
    };
    let named = named_psi(tag, psi_name, None)?;
    let mut desc = sasakian_ansatz(frame, f, g, named.field, Some(named.laplace_profile))?;
    if named.isoparametric {
        desc.localizability = Some(ScalarField::zero());
    }
    Ok(desc)
}

pub use crate::frames::frame_for as adapted_frame_for;
