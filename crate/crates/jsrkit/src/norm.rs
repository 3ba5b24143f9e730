//! Barabanov norms from invariant bodies of the transpose family.
//!
//! If `G*` is an invariant body of the scaled transpose family, the support
//! functionals of its generators define a norm `f` with
//! `max_j f(A_j x) = rho f(x)` for every `x`: piecewise linear from vertex
//! generators, piecewise quadratic from ellipse generators, and the monotone
//! analogue on the nonnegative orthant. The norm is the exact Lyapunov
//! function of the switching system; this module builds it, evaluates it,
//! certifies the identity by seeded sampling, and provides the planar polar
//! geometry used for rendering.

use crate::linalg::{ArgumentClass, LinalgError, MatrixFamily};
use crate::multi::{certify_jsr, CertifyConfig, CertifyOutcome, MultiError};
use crate::polytope::{BodyKind, InvariantBody, PartialState, Payload};
use crate::search::CandidateProduct;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormError {
    #[error("norm of this kind is defined on the nonnegative orthant only")]
    NegativeInput,
    #[error("generators do not span the space; the formula is not a norm")]
    NotFullRank,
    #[error("planar geometry requires dimension 2, got {0}")]
    DimensionMismatch(usize),
    #[error("polar geometry is not defined for monotone bodies")]
    UnsupportedKind,
    #[error(transparent)]
    Pipeline(#[from] MultiError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Entrywise transpose of every member; involutive.
pub fn transpose_family(family: &MatrixFamily) -> MatrixFamily {
    family.transpose_family()
}

// ---------------------------------------------------------------------------
// The norm
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum NormKind {
    /// `f(x) = max_i <v_i, x>` over a sign-symmetric functional list.
    PiecewiseLinear(Vec<DVector<f64>>),
    /// `f(x) = max_i sqrt(<a_i,x>^2 + <b_i,x>^2)`.
    PiecewiseQuadratic(Vec<(DVector<f64>, DVector<f64>)>),
    /// `f(x) = max_i <v_i, x>` for `x >= 0`, nonnegative functionals.
    MonotoneLinear(Vec<DVector<f64>>),
}

#[derive(Debug, Clone, Copy)]
pub struct NormFlags {
    /// Clear uniqueness: single candidate with a real or irrational-argument
    /// leading eigenvalue.
    pub unique: bool,
    /// The leading argument is a rational multiple of pi: infinitely many
    /// invariant bodies exist, this is one of them.
    pub rational_mod_pi: bool,
    pub monotone: bool,
}

#[derive(Debug, Clone)]
pub struct BarabanovNorm {
    pub kind: NormKind,
    pub dim: usize,
    /// The joint spectral radius: the factor in the norm identity.
    pub rho: f64,
    pub flags: NormFlags,
    /// The invariant body of the transpose family the norm came from.
    pub source_body: InvariantBody,
}

impl BarabanovNorm {
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64, NormError> {
        match &self.kind {
            NormKind::PiecewiseLinear(vs) => {
                Ok(vs.iter().map(|v| v.dot(x)).fold(0.0, f64::max))
            }
            NormKind::PiecewiseQuadratic(pairs) => Ok(pairs
                .iter()
                .map(|(a, b)| a.dot(x).hypot(b.dot(x)))
                .fold(0.0, f64::max)),
            NormKind::MonotoneLinear(vs) => {
                let scale = x.amax();
                if x.iter().any(|&c| c < -1e-12 * scale.max(1.0)) {
                    return Err(NormError::NegativeInput);
                }
                Ok(vs.iter().map(|v| v.dot(x)).fold(0.0, f64::max))
            }
        }
    }

    pub fn functional_count(&self) -> usize {
        match &self.kind {
            NormKind::PiecewiseLinear(vs) | NormKind::MonotoneLinear(vs) => vs.len(),
            NormKind::PiecewiseQuadratic(pairs) => pairs.len(),
        }
    }

    pub fn to_json(&self) -> Value {
        let functionals: Vec<Value> = match &self.kind {
            NormKind::PiecewiseLinear(vs) | NormKind::MonotoneLinear(vs) => {
                vs.iter().map(|v| json!(v.as_slice())).collect()
            }
            NormKind::PiecewiseQuadratic(pairs) => pairs
                .iter()
                .map(|(a, b)| json!({"a": a.as_slice(), "b": b.as_slice()}))
                .collect(),
        };
        let kind = match &self.kind {
            NormKind::PiecewiseLinear(_) => "PiecewiseLinear",
            NormKind::PiecewiseQuadratic(_) => "PiecewiseQuadratic",
            NormKind::MonotoneLinear(_) => "MonotoneLinear",
        };
        json!({
            "kind": kind,
            "dim": self.dim,
            "rho": self.rho,
            "functionals": functionals,
            "flags": {
                "unique": self.flags.unique,
                "rational_mod_pi": self.flags.rational_mod_pi,
                "monotone": self.flags.monotone,
            },
            "body": self.source_body.to_json(),
        })
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum BuildOutcome {
    Built(BarabanovNorm),
    Failed(BuildFailure),
}

#[derive(Debug)]
pub enum BuildFailure {
    /// Common invariant subspace, spanned by the returned basis.
    Reducible(Vec<DVector<f64>>),
    Budget(PartialState),
    NoCertificate(String),
}

/// Wrap a finished invariant body into the norm it induces. Vertices (their
/// signs expanded) become linear functionals, ellipse pairs quadratic ones;
/// a mixed body becomes piecewise quadratic with rank-one pairs for its
/// vertices.
pub fn norm_from_body(body: InvariantBody, flags: NormFlags) -> Result<BarabanovNorm, NormError> {
    let dim = body.dim;
    if body.kind == BodyKind::MonotonePolytope {
        // On the orthant positivity of the coordinate-wise envelope suffices.
        let mut envelope = DVector::<f64>::zeros(dim);
        for g in &body.generators {
            if let Payload::Vertex(v) = &g.payload {
                envelope.zip_apply(v, |e, c| *e = e.max(c));
            }
        }
        if envelope.min() <= 0.0 {
            return Err(NormError::NotFullRank);
        }
    } else {
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for g in &body.generators {
            match &g.payload {
                Payload::Vertex(v) => cols.push(v.clone()),
                Payload::Ellipse(e) => {
                    cols.push(e.x.clone());
                    cols.push(e.y.clone());
                }
            }
        }
        let span = DMatrix::from_columns(&cols);
        if span.rank(1e-9 * span.amax().max(1e-300)) < dim {
            return Err(NormError::NotFullRank);
        }
    }

    let kind = match body.kind {
        BodyKind::MonotonePolytope => NormKind::MonotoneLinear(
            body.generators
                .iter()
                .map(|g| match &g.payload {
                    Payload::Vertex(v) => v.clone(),
                    Payload::Ellipse(_) => unreachable!("monotone bodies hold vertices"),
                })
                .collect(),
        ),
        BodyKind::RealPolytope => {
            let mut vs = Vec::with_capacity(2 * body.generators.len());
            for g in &body.generators {
                if let Payload::Vertex(v) = &g.payload {
                    vs.push(v.clone());
                    vs.push(-v);
                }
            }
            NormKind::PiecewiseLinear(vs)
        }
        BodyKind::EllipseHull => NormKind::PiecewiseQuadratic(
            body.generators
                .iter()
                .map(|g| match &g.payload {
                    Payload::Ellipse(e) => (e.x.clone(), e.y.clone()),
                    Payload::Vertex(v) => (v.clone(), DVector::zeros(dim)),
                })
                .collect(),
        ),
    };
    Ok(BarabanovNorm {
        kind,
        dim,
        rho: body.nu,
        flags,
        source_body: body,
    })
}

/// Build the Barabanov norm of a family: irreducibility gate, certification
/// run on the transpose family, then the functional wrap.
pub fn build_barabanov(
    family: &MatrixFamily,
    cfg: &CertifyConfig,
) -> Result<BuildOutcome, NormError> {
    if let Irreducibility::CommonInvariantSubspace(basis) = irreducibility_check(family) {
        return Ok(BuildOutcome::Failed(BuildFailure::Reducible(basis)));
    }
    let dual = transpose_family(family);
    let outcome = certify_jsr(&dual, cfg)?;
    let (body, alpha) = match outcome {
        CertifyOutcome::Certified { body, alpha, .. } => (body, alpha),
        CertifyOutcome::Budget(p) => return Ok(BuildOutcome::Failed(BuildFailure::Budget(p))),
        CertifyOutcome::NotFound { reason } => {
            return Ok(BuildOutcome::Failed(BuildFailure::NoCertificate(reason)))
        }
    };
    let rational = body
        .candidate_words
        .iter()
        .map(|w| CandidateProduct::from_word(&dual, w))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .any(|c| matches!(c.argclass, Some(ArgumentClass::RationalModPi { .. })));
    let flags = NormFlags {
        unique: !rational && alpha.len() == 1,
        rational_mod_pi: rational,
        monotone: false,
    };
    Ok(BuildOutcome::Built(norm_from_body(body, flags)?))
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

/// Empirical check of the norm identity on seeded sphere samples.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub samples: usize,
    /// `max_x |max_j f(A_j x) - rho f(x)| / (rho f(x))`.
    pub max_residual: f64,
    pub rho: f64,
    pub delta_used: f64,
}

pub(crate) fn sphere_sample(
    rng: &mut ChaCha8Rng,
    dim: usize,
    nonnegative: bool,
) -> DVector<f64> {
    loop {
        let mut v = DVector::from_fn(dim, |_, _| {
            let g: f64 = StandardNormal.sample(rng);
            g
        });
        if nonnegative {
            v.apply(|c| *c = c.abs());
        }
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

pub fn certify(
    f: &BarabanovNorm,
    family: &MatrixFamily,
    n_samples: usize,
    seed: u64,
) -> Result<Certificate, NormError> {
    assert!(n_samples >= 1);
    let nonneg = f.flags.monotone;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_residual: f64 = 0.0;
    for _ in 0..n_samples {
        let x = sphere_sample(&mut rng, f.dim, nonneg);
        let fx = f.eval(&x)?;
        let mut best: f64 = 0.0;
        for a in family.members() {
            best = best.max(f.eval(&a.apply(&x))?);
        }
        let denom = f.rho * fx;
        if denom > 0.0 {
            max_residual = max_residual.max((best - denom).abs() / denom);
        }
    }
    Ok(Certificate {
        samples: n_samples,
        max_residual,
        rho: f.rho,
        delta_used: f.source_body.delta,
    })
}

// ---------------------------------------------------------------------------
// Planar polar geometry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Polar2D {
    /// Exact polar polygon, vertices in counterclockwise order.
    Polygon(Vec<DVector<f64>>),
    /// Sampled polar boundary for curved bodies.
    Curve(Vec<DVector<f64>>),
}

impl Polar2D {
    pub fn points(&self) -> &[DVector<f64>] {
        match self {
            Polar2D::Polygon(p) | Polar2D::Curve(p) => p,
        }
    }
}

/// Counterclockwise convex hull of planar points (monotone chain).
pub(crate) fn hull_2d(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14);
    if pts.len() < 3 {
        return pts
            .into_iter()
            .map(|(x, y)| DVector::from_column_slice(&[x, y]))
            .collect();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-14
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-14
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower
        .into_iter()
        .chain(upper)
        .map(|(x, y)| DVector::from_column_slice(&[x, y]))
        .collect()
}

/// Support value of the body's generators in direction `u`.
pub(crate) fn support_2d(body: &InvariantBody, u: &DVector<f64>) -> f64 {
    body.generators
        .iter()
        .map(|g| match &g.payload {
            Payload::Vertex(v) => v.dot(u).abs(),
            Payload::Ellipse(e) => e.x.dot(u).hypot(e.y.dot(u)),
        })
        .fold(0.0, f64::max)
}

/// Polar set of a planar body: exact vertex/edge duality for polytopes,
/// support-function inversion sampled at 720 angles for ellipse hulls.
pub fn polar_2d(body: &InvariantBody) -> Result<Polar2D, NormError> {
    if body.dim != 2 {
        return Err(NormError::DimensionMismatch(body.dim));
    }
    match body.kind {
        BodyKind::MonotonePolytope => Err(NormError::UnsupportedKind),
        BodyKind::RealPolytope => {
            let mut pts = Vec::new();
            for g in &body.generators {
                if let Payload::Vertex(v) = &g.payload {
                    pts.push(v.clone());
                    pts.push(-v);
                }
            }
            let hull = hull_2d(&pts);
            let n = hull.len();
            let mut polar = Vec::with_capacity(n);
            for i in 0..n {
                let a = &hull[i];
                let b = &hull[(i + 1) % n];
                let det = a[0] * b[1] - a[1] * b[0];
                if det.abs() < 1e-14 {
                    continue;
                }
                polar.push(DVector::from_column_slice(&[
                    (b[1] - a[1]) / det,
                    (a[0] - b[0]) / det,
                ]));
            }
            Ok(Polar2D::Polygon(polar))
        }
        BodyKind::EllipseHull => {
            let mut samples = Vec::with_capacity(720);
            for i in 0..720 {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 720.0;
                let u = DVector::from_column_slice(&[t.cos(), t.sin()]);
                let h = support_2d(body, &u);
                if h > 0.0 {
                    samples.push(u / h);
                }
            }
            Ok(Polar2D::Curve(samples))
        }
    }
}

// ---------------------------------------------------------------------------
// Irreducibility
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Irreducibility {
    Irreducible,
    /// Basis of a common invariant subspace.
    CommonInvariantSubspace(Vec<DVector<f64>>),
}

/// Orthonormal basis tracker for a subspace of matrix space.
struct MatSpan {
    basis: Vec<DMatrix<f64>>,
}

impl MatSpan {
    fn insert(&mut self, mut m: DMatrix<f64>) -> bool {
        for b in &self.basis {
            let c = m.dot(b);
            m -= b * c;
        }
        let n = m.norm();
        if n > 1e-9 {
            self.basis.push(m / n);
            true
        } else {
            false
        }
    }
}

/// Check whether the family shares an invariant linear subspace.
///
/// The span of the generated matrix algebra is closed under products; a full
/// span settles irreducibility outright. Otherwise a proper invariant
/// subspace, when one exists, shows up as a degenerate orbit: the algebra
/// applied to a seed vector spans less than the whole space. Seeds cover the
/// coordinate axes, real eigenvectors of each member, and fixed pseudo-random
/// directions; with no degenerate orbit found the family is reported
/// irreducible (full orbits from every eigenvector rule out the common
/// invariant subspaces a floating-point check can certify).
pub fn irreducibility_check(family: &MatrixFamily) -> Irreducibility {
    let d = family.dim();
    if d == 1 {
        return Irreducibility::Irreducible;
    }
    let scale = family.max_abs().max(1e-300);
    let mut span = MatSpan { basis: vec![] };
    let mut frontier: Vec<DMatrix<f64>> = Vec::new();
    let push = |span: &mut MatSpan, frontier: &mut Vec<DMatrix<f64>>, m: DMatrix<f64>| {
        let n = m.norm();
        if n > 1e-14 && span.insert(m.clone() / n) {
            frontier.push(m / n);
        }
    };
    push(&mut span, &mut frontier, DMatrix::identity(d, d));
    for a in family.members() {
        push(&mut span, &mut frontier, a.as_dmatrix().clone() / scale);
    }
    while let Some(b) = frontier.pop() {
        if span.basis.len() == d * d {
            break;
        }
        for a in family.members() {
            push(
                &mut span,
                &mut frontier,
                (a.as_dmatrix() / scale) * b.clone(),
            );
        }
    }
    if span.basis.len() == d * d {
        return Irreducibility::Irreducible;
    }

    // Orbit scan for a witness subspace.
    let mut seeds: Vec<DVector<f64>> = (0..d)
        .map(|i| DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 }))
        .collect();
    for a in family.members() {
        if let Ok(eigen) = crate::linalg::leading_eigenpair(a, 1e-9) {
            match eigen.kind {
                crate::linalg::EigenKind::Real { v, .. } => seeds.push(v),
                crate::linalg::EigenKind::Complex { x, y, .. } => {
                    seeds.push(x);
                    seeds.push(y);
                }
            }
        }
    }
    for k in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + k);
        seeds.push(sphere_sample(&mut rng, d, false));
    }

    for seed in seeds {
        if seed.norm() < 1e-12 {
            continue;
        }
        // Orbit of the seed under the algebra basis.
        let mut orbit: Vec<DVector<f64>> = Vec::new();
        let insert = |orbit: &mut Vec<DVector<f64>>, mut v: DVector<f64>| -> bool {
            for b in orbit.iter() {
                let c = v.dot(b);
                v -= b * c;
            }
            let n = v.norm();
            if n > 1e-9 {
                orbit.push(v / n);
                true
            } else {
                false
            }
        };
        insert(&mut orbit, seed.clone() / seed.norm());
        let mut work: Vec<DVector<f64>> = vec![seed.clone() / seed.norm()];
        while let Some(v) = work.pop() {
            if orbit.len() == d {
                break;
            }
            for a in family.members() {
                let img = a.apply(&v) / scale;
                let n = img.norm();
                if n > 1e-14 && insert(&mut orbit, &img / n) {
                    work.push(img / n);
                }
            }
        }
        if orbit.len() < d {
            return Irreducibility::CommonInvariantSubspace(orbit);
        }
    }
    Irreducibility::Irreducible
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::polytope::RunOutcome;
    use approx::assert_relative_eq;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn planar_pair() -> MatrixFamily {
        MatrixFamily::new(vec![
            mat(&[&[2.0, -2.0], &[1.0, 2.0]]),
            mat(&[&[1.0, 2.0], &[-1.0, -3.0]]),
        ])
        .unwrap()
    }

    fn build(fam: &MatrixFamily) -> BarabanovNorm {
        match build_barabanov(fam, &CertifyConfig::default()).unwrap() {
            BuildOutcome::Built(n) => n,
            BuildOutcome::Failed(f) => panic!("{f:?}"),
        }
    }

    #[test]
    fn transpose_is_involutive() {
        let fam = planar_pair();
        let back = transpose_family(&transpose_family(&fam));
        for (a, b) in fam.members().iter().zip(back.members()) {
            assert_eq!(a.as_dmatrix(), b.as_dmatrix());
        }
    }

    #[test]
    fn planar_norm_has_ten_functionals() {
        let norm = build(&planar_pair());
        assert!(matches!(norm.kind, NormKind::PiecewiseLinear(_)));
        assert_eq!(norm.functional_count(), 10);
        assert!(norm.flags.unique);
        assert!(!norm.flags.rational_mod_pi);
        let expected = (24.0 + 792.0_f64.sqrt()).powf(0.25);
        assert_relative_eq!(norm.rho, expected, max_relative = 1e-10);
    }

    #[test]
    fn certification_residual_small_and_negative_control_fires() {
        let fam = planar_pair();
        let norm = build(&fam);
        let cert = certify(&norm, &fam, 1000, 7).unwrap();
        assert!(
            cert.max_residual <= 1e-6,
            "residual {}",
            cert.max_residual
        );
        // Deliberately corrupt one functional: the identity must fail.
        let mut bad = norm.clone();
        if let NormKind::PiecewiseLinear(vs) = &mut bad.kind {
            vs[0] *= 1.01;
        }
        let bad_cert = certify(&bad, &fam, 1000, 7).unwrap();
        assert!(bad_cert.max_residual > 1e-3, "{}", bad_cert.max_residual);
    }

    #[test]
    fn eval_examples() {
        let pl = BarabanovNorm {
            kind: NormKind::PiecewiseLinear(vec![
                dv(&[1.0, 0.0]),
                dv(&[-1.0, 0.0]),
                dv(&[0.0, 1.0]),
                dv(&[0.0, -1.0]),
            ]),
            dim: 2,
            rho: 1.0,
            flags: NormFlags {
                unique: true,
                rational_mod_pi: false,
                monotone: false,
            },
            source_body: build(&planar_pair()).source_body,
        };
        assert_relative_eq!(pl.eval(&dv(&[3.0, 4.0])).unwrap(), 4.0);
        assert_relative_eq!(pl.eval(&dv(&[0.0, 0.0])).unwrap(), 0.0);

        let pq = BarabanovNorm {
            kind: NormKind::PiecewiseQuadratic(vec![(dv(&[1.0, 0.0]), dv(&[0.0, 1.0]))]),
            ..pl.clone()
        };
        assert_relative_eq!(pq.eval(&dv(&[3.0, 4.0])).unwrap(), 5.0);

        let mono = BarabanovNorm {
            kind: NormKind::MonotoneLinear(vec![dv(&[1.0, 2.0])]),
            ..pl
        };
        assert_relative_eq!(mono.eval(&dv(&[1.0, 1.0])).unwrap(), 3.0);
        assert!(matches!(
            mono.eval(&dv(&[-1.0, 1.0])),
            Err(NormError::NegativeInput)
        ));
    }

    #[test]
    fn homogeneity_symmetry_triangle() {
        let fam = planar_pair();
        let norm = build(&fam);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = sphere_sample(&mut rng, 2, false);
            let y = sphere_sample(&mut rng, 2, false);
            let fx = norm.eval(&x).unwrap();
            assert_relative_eq!(norm.eval(&(&x * -1.0)).unwrap(), fx, max_relative = 1e-12);
            assert_relative_eq!(norm.eval(&(&x * 2.5)).unwrap(), 2.5 * fx, max_relative = 1e-12);
            let fy = norm.eval(&y).unwrap();
            let fxy = norm.eval(&(&x + &y)).unwrap();
            assert!(fxy <= fx + fy + 1e-12 * (fx + fy));
        }
    }

    #[test]
    fn iterated_identity_over_words() {
        let fam = planar_pair();
        let norm = build(&fam);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 1..=5usize {
            for _ in 0..20 {
                let x = sphere_sample(&mut rng, 2, false);
                let fx = norm.eval(&x).unwrap();
                let mut best: f64 = 0.0;
                for code in 0..(2usize.pow(k as u32)) {
                    let mut y = x.clone();
                    for i in 0..k {
                        let letter = 1 + ((code >> i) & 1);
                        y = fam.get(letter).unwrap().apply(&y);
                    }
                    best = best.max(norm.eval(&y).unwrap());
                }
                let target = norm.rho.powi(k as i32) * fx;
                let tol = 100.0 * k as f64 * norm.source_body.delta;
                assert!(
                    (best - target).abs() <= tol * target,
                    "k = {k}: {best} vs {target}"
                );
            }
        }
    }

    #[test]
    fn polar_square_is_cross_polytope() {
        let fam = planar_pair();
        let body = match crate::polytope::run_algorithm1(
            &fam,
            &crate::search::enumerate_candidates(&fam, 6, 1).unwrap()[0],
            &Default::default(),
        )
        .unwrap()
        {
            RunOutcome::Halted(b) => b,
            other => panic!("{other:?}"),
        };
        // Synthetic square body reusing the run's metadata.
        let mut square = body;
        square.generators.truncate(2);
        square.generators[0].payload = Payload::Vertex(dv(&[1.0, 1.0]));
        square.generators[1].payload = Payload::Vertex(dv(&[1.0, -1.0]));
        match polar_2d(&square).unwrap() {
            Polar2D::Polygon(p) => {
                assert_eq!(p.len(), 4);
                for v in &p {
                    assert_relative_eq!(v.amax(), 1.0, epsilon = 1e-12);
                    assert_relative_eq!(v[0].abs() + v[1].abs(), 1.0, epsilon = 1e-12);
                }
            }
            Polar2D::Curve(_) => panic!("expected polygon"),
        }
    }

    #[test]
    fn polar_duality_matches_norm_eval() {
        let fam = planar_pair();
        let norm = build(&fam);
        let polar = polar_2d(&norm.source_body).unwrap();
        let polar_pts: Vec<DVector<f64>> = polar.points().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let x = sphere_sample(&mut rng, 2, false);
            let via_norm = norm.eval(&x).unwrap();
            let via_hull =
                1.0 / crate::feasibility::point_in_hull(&x, &polar_pts, 1e-8)
                    .unwrap()
                    .t0;
            assert_relative_eq!(via_norm, via_hull, max_relative = 1e-9);
        }
    }

    #[test]
    fn irreducibility_examples() {
        let diag = MatrixFamily::new(vec![
            mat(&[&[1.0, 0.0], &[0.0, 2.0]]),
            mat(&[&[3.0, 0.0], &[0.0, 4.0]]),
        ])
        .unwrap();
        match irreducibility_check(&diag) {
            Irreducibility::CommonInvariantSubspace(basis) => {
                assert_eq!(basis.len(), 1);
                assert!(basis[0][0].abs() < 1e-9 || basis[0][1].abs() < 1e-9);
            }
            Irreducibility::Irreducible => panic!("diagonal family is reducible"),
        }

        assert!(matches!(
            irreducibility_check(&planar_pair()),
            Irreducibility::Irreducible
        ));

        let rot = MatrixFamily::new(vec![mat(&[&[0.0, -1.0], &[1.0, 0.0]])]).unwrap();
        assert!(matches!(
            irreducibility_check(&rot),
            Irreducibility::Irreducible
        ));
    }

    #[test]
    fn reducible_family_fails_build_with_witness() {
        let diag = MatrixFamily::new(vec![
            mat(&[&[1.0, 0.0], &[0.0, 2.0]]),
            mat(&[&[3.0, 0.0], &[0.0, 4.0]]),
        ])
        .unwrap();
        match build_barabanov(&diag, &CertifyConfig::default()).unwrap() {
            BuildOutcome::Failed(BuildFailure::Reducible(basis)) => assert!(!basis.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rebuild_with_shuffled_letters_gives_same_norm_values() {
        let fam = planar_pair();
        let swapped = MatrixFamily::new(vec![
            fam.members()[1].clone(),
            fam.members()[0].clone(),
        ])
        .unwrap();
        let n1 = build(&fam);
        let n2 = build(&swapped);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let x = sphere_sample(&mut rng, 2, false);
            let a = n1.eval(&x).unwrap();
            let b = n2.eval(&x).unwrap();
            assert!((a - b).abs() <= 1e-8 * a.max(b), "{a} vs {b}");
        }
    }
}
