//! Invariant-body construction: the cyclic-tree iteration.
//!
//! Given a candidate product `Pi` with `nu = rho(Pi)^(1/k)`, the family is
//! scaled to `A~_j = A_j / nu` so the candidate's cycle has spectral radius
//! one. The leading eigenvector of the cycle (a vertex, or an ellipse pair
//! for complex leading eigenvalues) seeds a root cycle `V_1..V_n`; the
//! iteration then maps every alive element by every scaled matrix, kills
//! images that fall strictly inside the current hull, and halts when no alive
//! element remains. The surviving generators span a body `G` with
//! `co(U_j A~_j G) ⊆ G`, which certifies `rho(family) = nu`.
//!
//! The same engine drives the single-candidate run, the balanced
//! multi-candidate run, and the monotone variant for nonnegative families;
//! they differ only in root construction and the membership oracle.

use crate::feasibility::{
    circumscribed_points, ellipse_in_point_hull, gnorm_sharp, point_in_hull,
    point_in_monotone_hull, EllipsePair, FeasibilityError, HullGen, MembershipVerdict,
};
use crate::linalg::{word_spectral_radius, EigenKind, LinalgError, Matrix, MatrixFamily, Word};
use crate::search::{cyclic_primitive_normalize, CandidateProduct};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolytopeError {
    #[error("root cycle failed to close (relative deviation {deviation:.3e})")]
    CycleMismatch { deviation: f64 },
    #[error("candidate leading eigenvalue unfit for a root: {0}")]
    DegenerateCandidate(String),
    #[error("invariance check failed after halting: {0}")]
    InvarianceCheckFailed(String),
    #[error("malformed body document: {0}")]
    BadDocument(String),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Tolerance for treating an image as an exact copy of a known generator.
pub(crate) const DUP_TOL: f64 = 1e-9;
/// Relative tolerance for the root cycle closure check.
const CYCLE_TOL: f64 = 1e-8;
/// Normalized averaged radius above which a word disproves dominance.
const EVIDENCE_TOL: f64 = 1e-9;
/// Facet count used when pruning and when bounding dead-node norms.
const PRUNE_FACETS: usize = 256;
/// Generators at most this interior-redundant get removed while pruning.
const REDUNDANT_T0: f64 = 1.0 - 1e-9;

// ---------------------------------------------------------------------------
// Payloads, nodes, roots
// ---------------------------------------------------------------------------

/// One element carried through the tree: a vertex (with its negative
/// implied), or an ellipse pair.
#[derive(Debug, Clone)]
pub enum Payload {
    Vertex(DVector<f64>),
    Ellipse(EllipsePair),
}

impl Payload {
    pub fn dim(&self) -> usize {
        match self {
            Payload::Vertex(v) => v.len(),
            Payload::Ellipse(e) => e.dim(),
        }
    }

    pub fn scaled(&self, c: f64) -> Payload {
        match self {
            Payload::Vertex(v) => Payload::Vertex(v * c),
            Payload::Ellipse(e) => Payload::Ellipse(EllipsePair::new(&e.x * c, &e.y * c)),
        }
    }

    /// Scale-equivariant size: Euclidean length of a vertex, Frobenius size
    /// of an ellipse pair.
    pub fn size(&self) -> f64 {
        match self {
            Payload::Vertex(v) => v.norm(),
            Payload::Ellipse(e) => e.x.norm().hypot(e.y.norm()),
        }
    }

    /// Apply a matrix; a degenerate image ellipse collapses to the vertex at
    /// its endpoint (the segment and its symmetric hull coincide), which
    /// keeps later membership tests exact.
    pub fn apply(&self, m: &Matrix) -> Payload {
        match self {
            Payload::Vertex(v) => Payload::Vertex(m.apply(v)),
            Payload::Ellipse(e) => {
                let img = EllipsePair::new(m.apply(&e.x), m.apply(&e.y));
                match img.segment_endpoint() {
                    Some(p) => Payload::Vertex(p),
                    None => Payload::Ellipse(img),
                }
            }
        }
    }

    /// Equality as symmetric sets: vertices match up to sign, ellipses up to
    /// parameter rotation and sign.
    pub fn matches(&self, other: &Payload, signed: bool) -> bool {
        match (self, other) {
            (Payload::Vertex(a), Payload::Vertex(b)) => {
                let scale = a.norm().max(b.norm());
                if scale == 0.0 {
                    return true;
                }
                let direct = (a - b).norm() <= DUP_TOL * scale;
                if signed {
                    direct
                } else {
                    direct || (a + b).norm() <= DUP_TOL * scale
                }
            }
            (Payload::Ellipse(a), Payload::Ellipse(b)) => a.shape_distance(b) <= 1e-8,
            _ => false,
        }
    }

    pub fn as_hullgen(&self) -> HullGen {
        match self {
            Payload::Vertex(v) => HullGen::Point(v.clone()),
            Payload::Ellipse(e) => HullGen::Ellipse(e.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Alive,
    Dead,
}

/// A tree node: payload plus the letters applied since its root element.
#[derive(Debug, Clone)]
pub struct Node {
    pub payload: Payload,
    pub word: Word,
    pub root_set: usize,
    pub root_element: usize,
    pub level: usize,
    pub status: NodeStatus,
}

/// A dead node keeps its interiority score for diagnostics; the decay bound
/// is recomputed against the final body.
#[derive(Debug, Clone)]
pub struct DeadRecord {
    pub payload: Payload,
    pub word: Word,
    pub root_set: usize,
    pub root_element: usize,
    pub level: usize,
    pub t0_at_death: f64,
}

/// The seed cycle `V_1..V_n` along a candidate word.
#[derive(Debug, Clone)]
pub struct RootSet {
    pub elements: Vec<Payload>,
    pub cycle_word: Word,
}

/// Construct the root cycle for a candidate on the `nu`-scaled family:
/// `V_1` from the leading eigenpair, `V_{j+1} = A~_{s_j} V_j`, and the cycle
/// must close back onto `V_1` (up to sign, or parameter rotation for
/// ellipses).
pub fn build_root(
    scaled_family: &MatrixFamily,
    candidate: &CandidateProduct,
) -> Result<RootSet, PolytopeError> {
    if !candidate.leading.unique || !candidate.leading.simple {
        return Err(PolytopeError::DegenerateCandidate(format!(
            "leading eigenvalue must be unique and simple (unique: {}, simple: {}, gap: {:.3e})",
            candidate.leading.unique, candidate.leading.simple, candidate.leading.gap
        )));
    }
    let first = match &candidate.leading.kind {
        EigenKind::Real { v, .. } => Payload::Vertex(v.clone()),
        EigenKind::Complex { x, y, .. } => {
            Payload::Ellipse(EllipsePair::new(x.clone(), y.clone()))
        }
    };
    let word = &candidate.word;
    let mut elements = Vec::with_capacity(word.len());
    elements.push(first);
    for &letter in &word[..word.len() - 1] {
        let next = elements.last().unwrap().apply(scaled_family.get(letter)?);
        elements.push(next);
    }
    let closed = elements
        .last()
        .unwrap()
        .apply(scaled_family.get(word[word.len() - 1])?);
    let deviation = match (&closed, &elements[0]) {
        (Payload::Vertex(a), Payload::Vertex(b)) => {
            let scale = b.norm();
            ((a - b).norm().min((a + b).norm())) / scale
        }
        (Payload::Ellipse(a), Payload::Ellipse(b)) => a.shape_distance(b),
        _ => 1.0,
    };
    if deviation > CYCLE_TOL {
        return Err(PolytopeError::CycleMismatch { deviation });
    }
    // Canonical scale: largest cycle element has size 1, so the body does not
    // depend on which cyclic rotation of the word the search reported.
    let largest = elements.iter().map(Payload::size).fold(0.0, f64::max);
    for e in &mut elements {
        *e = e.scaled(1.0 / largest);
    }
    Ok(RootSet {
        elements,
        cycle_word: word.clone(),
    })
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

/// Which hull the iteration maintains: the symmetric convex hull of
/// `{±generators}`, or the monotone hull inside the nonnegative orthant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullMode {
    Symmetric,
    Monotone,
}

#[derive(Debug, Clone)]
pub struct AlgorithmConfig {
    /// Strict-interiority margin: images with `t0 > 1 + delta` die.
    pub delta: f64,
    /// Polygonal resolution for ellipse membership (even, >= 8).
    pub facets_m: usize,
    pub max_iter: usize,
    pub max_nodes: usize,
    /// Screen children in parallel against the iteration-start snapshot.
    /// Results are identical either way; this is purely a time knob.
    pub parallel: bool,
    /// Abort with evidence when an encountered word disproves dominance.
    pub evidence_check: bool,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            delta: 1e-8,
            facets_m: 32,
            max_iter: 200,
            max_nodes: 200_000,
            parallel: true,
            evidence_check: true,
        }
    }
}

/// A word encountered during the run whose averaged radius exceeds the
/// candidate's, disproving dominance.
#[derive(Debug, Clone)]
pub struct Evidence {
    /// Cyclic-primitive representative of the offending word.
    pub word: Word,
    /// Its averaged radius on the scaled family (> 1).
    pub nu_scaled: f64,
}

/// State snapshot when a budget stops the run short.
#[derive(Debug, Clone)]
pub struct PartialState {
    pub iterations: usize,
    pub alive: usize,
    pub total_nodes: usize,
    /// The candidate value: always a valid lower bound for the family.
    pub nu_lower: f64,
    /// One-step growth estimate of the current hull, scaled by nu.
    pub nu_upper: f64,
}

#[derive(Debug)]
pub enum RunOutcome {
    Halted(InvariantBody),
    NotDominantEvidence(Evidence),
    Budget(PartialState),
}

#[derive(Debug, Clone)]
pub struct GeneratorRecord {
    pub payload: Payload,
    pub word: Word,
    pub root_set: usize,
    pub root_element: usize,
}

impl GeneratorRecord {
    pub fn is_root(&self) -> bool {
        self.word.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyKind {
    RealPolytope,
    EllipseHull,
    MonotonePolytope,
}

impl BodyKind {
    fn as_str(self) -> &'static str {
        match self {
            BodyKind::RealPolytope => "RealPolytope",
            BodyKind::EllipseHull => "EllipseHull",
            BodyKind::MonotonePolytope => "MonotonePolytope",
        }
    }
}

/// The certified invariant body emitted by a halted run.
#[derive(Debug, Clone)]
pub struct InvariantBody {
    pub kind: BodyKind,
    pub dim: usize,
    /// The certified value: the original family's joint spectral radius.
    pub nu: f64,
    pub family_fingerprint: u64,
    /// The `nu`-scaled family the body is invariant under.
    pub scaled_family: MatrixFamily,
    pub generators: Vec<GeneratorRecord>,
    pub dead: Vec<DeadRecord>,
    /// Root payloads (already balance-scaled), per candidate.
    pub roots: Vec<RootSet>,
    /// Balance scales applied to the roots (all 1 for a single candidate).
    pub alphas: Vec<f64>,
    pub candidate_words: Vec<Word>,
    pub iterations: usize,
    pub delta: f64,
    pub facets_m: usize,
    /// Max norm of dead payloads against the final body; `None` without dead
    /// nodes.
    pub mu: Option<f64>,
}

pub(crate) struct EngineInput {
    /// The `nu`-scaled family.
    pub family: MatrixFamily,
    pub roots: Vec<RootSet>,
    pub alphas: Vec<f64>,
    pub mode: HullMode,
    /// Reported de-normalization value.
    pub nu: f64,
    pub fingerprint: u64,
}

struct ChildSpec {
    parent: usize,
    letter: usize,
    payload: Payload,
}

/// Membership points for the current generator set: vertices contribute
/// themselves, ellipses an inscribed polygon.
fn payload_points(p: &Payload, facets_m: usize) -> Vec<DVector<f64>> {
    match p {
        Payload::Vertex(v) => vec![v.clone()],
        Payload::Ellipse(e) => crate::feasibility::inscribed_points(e, facets_m),
    }
}

fn membership(
    payload: &Payload,
    points: &[DVector<f64>],
    mode: HullMode,
    facets_m: usize,
    delta: f64,
) -> Result<MembershipVerdict, FeasibilityError> {
    match (mode, payload) {
        (HullMode::Symmetric, Payload::Vertex(v)) => point_in_hull(v, points, delta),
        (HullMode::Symmetric, Payload::Ellipse(e)) => {
            ellipse_in_point_hull(e, points, facets_m, delta)
        }
        (HullMode::Monotone, Payload::Vertex(v)) => point_in_monotone_hull(v, points, delta),
        (HullMode::Monotone, Payload::Ellipse(_)) => {
            unreachable!("monotone runs carry vertices only")
        }
    }
}

pub(crate) fn run_engine(
    input: EngineInput,
    cfg: &AlgorithmConfig,
) -> Result<RunOutcome, PolytopeError> {
    let family = &input.family;
    let m = family.len();
    let signed_match = input.mode == HullMode::Monotone;

    let mut generators: Vec<GeneratorRecord> = Vec::new();
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for (set_idx, (root, &alpha)) in input.roots.iter().zip(&input.alphas).enumerate() {
        for (elem_idx, payload) in root.elements.iter().enumerate() {
            let rec = GeneratorRecord {
                payload: payload.scaled(alpha),
                word: vec![],
                root_set: set_idx,
                root_element: elem_idx,
            };
            points.extend(payload_points(&rec.payload, cfg.facets_m));
            frontier.push(generators.len());
            generators.push(rec);
        }
    }

    let mut dead: Vec<DeadRecord> = Vec::new();
    let mut total_nodes = generators.len();
    let mut evidence_cache: HashMap<Word, f64> = HashMap::new();
    let mut iterations = 0usize;

    for k in 1..=cfg.max_iter {
        iterations = k;
        let mut children: Vec<ChildSpec> = Vec::new();
        for &gi in &frontier {
            let g = &generators[gi];
            for letter in 1..=m {
                if k == 1 && g.is_root() {
                    let cycle = &input.roots[g.root_set].cycle_word;
                    if cycle[g.root_element] == letter {
                        continue;
                    }
                }
                children.push(ChildSpec {
                    parent: gi,
                    letter,
                    payload: g.payload.apply(family.get(letter)?),
                });
            }
        }
        if children.is_empty() {
            break;
        }

        // Phase one: screen every child against the iteration-start snapshot.
        // More generators can only raise t0, so "interior here" is final.
        let snapshot = points.clone();
        let screen: Result<Vec<MembershipVerdict>, FeasibilityError> = if cfg.parallel {
            children
                .par_iter()
                .map(|c| membership(&c.payload, &snapshot, input.mode, cfg.facets_m, cfg.delta))
                .collect()
        } else {
            children
                .iter()
                .map(|c| membership(&c.payload, &snapshot, input.mode, cfg.facets_m, cfg.delta))
                .collect()
        };
        let screen = screen?;

        // Phase two: sequential acceptance in pinned order.
        let snap_gen_count = generators.len();
        let mut new_frontier: Vec<usize> = Vec::new();
        for (child, verdict) in children.into_iter().zip(screen) {
            let word = {
                let mut w = generators[child.parent].word.clone();
                w.push(child.letter);
                w
            };

            if cfg.evidence_check && family.dim() <= 64 {
                let root = cyclic_primitive_normalize(&word).root().clone();
                let nu_scaled = match evidence_cache.get(&root) {
                    Some(&v) => v,
                    None => {
                        let rho = word_spectral_radius(family, &root, 1e-12)?;
                        let v = rho.powf(1.0 / root.len() as f64);
                        evidence_cache.insert(root.clone(), v);
                        v
                    }
                };
                if nu_scaled > 1.0 + EVIDENCE_TOL {
                    return Ok(RunOutcome::NotDominantEvidence(Evidence {
                        word: root,
                        nu_scaled,
                    }));
                }
            }

            if generators
                .iter()
                .any(|g| g.payload.matches(&child.payload, signed_match))
            {
                continue;
            }

            let final_verdict = if verdict.interior || generators.len() == snap_gen_count {
                verdict
            } else {
                membership(&child.payload, &points, input.mode, cfg.facets_m, cfg.delta)?
            };
            total_nodes += 1;
            let parent = &generators[child.parent];
            if final_verdict.interior {
                dead.push(DeadRecord {
                    payload: child.payload,
                    word,
                    root_set: parent.root_set,
                    root_element: parent.root_element,
                    level: k,
                    t0_at_death: final_verdict.t0,
                });
            } else {
                let rec = GeneratorRecord {
                    payload: child.payload,
                    word,
                    root_set: parent.root_set,
                    root_element: parent.root_element,
                };
                points.extend(payload_points(&rec.payload, cfg.facets_m));
                new_frontier.push(generators.len());
                generators.push(rec);
            }
        }

        frontier = new_frontier;
        if frontier.is_empty() {
            break;
        }
        if total_nodes > cfg.max_nodes || k == cfg.max_iter {
            let nu_upper = budget_upper_bound(family, &generators, &points, input.mode, cfg)?;
            return Ok(RunOutcome::Budget(PartialState {
                iterations: k,
                alive: frontier.len(),
                total_nodes,
                nu_lower: input.nu,
                nu_upper: input.nu * nu_upper,
            }));
        }
    }

    let kind = match input.mode {
        HullMode::Monotone => BodyKind::MonotonePolytope,
        HullMode::Symmetric => {
            if generators
                .iter()
                .any(|g| matches!(g.payload, Payload::Ellipse(_)))
            {
                BodyKind::EllipseHull
            } else {
                BodyKind::RealPolytope
            }
        }
    };
    let candidate_words = input.roots.iter().map(|r| r.cycle_word.clone()).collect();
    let mut body = InvariantBody {
        kind,
        dim: family.dim(),
        nu: input.nu,
        family_fingerprint: input.fingerprint,
        scaled_family: input.family,
        generators,
        dead,
        roots: input.roots,
        alphas: input.alphas,
        candidate_words,
        iterations,
        delta: cfg.delta,
        facets_m: cfg.facets_m,
        mu: None,
    };
    body.mu = compute_mu(&body)?;

    let report = body.verify()?;
    if !report.ok {
        return Err(PolytopeError::InvarianceCheckFailed(report.describe()));
    }
    Ok(RunOutcome::Halted(body))
}

/// One-step growth factor of the current hull: every generator image fits in
/// `c` times the hull, so the scaled family's radius is at most `c`.
fn budget_upper_bound(
    family: &MatrixFamily,
    generators: &[GeneratorRecord],
    points: &[DVector<f64>],
    mode: HullMode,
    cfg: &AlgorithmConfig,
) -> Result<f64, PolytopeError> {
    let mut c: f64 = 1.0;
    for g in generators {
        for letter in 1..=family.len() {
            let img = g.payload.apply(family.get(letter)?);
            let t0 = membership(&img, points, mode, cfg.facets_m, cfg.delta)?.t0;
            if t0 > 0.0 {
                c = c.max(1.0 / t0);
            } else {
                return Ok(f64::INFINITY);
            }
        }
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Single-candidate run
// ---------------------------------------------------------------------------

/// Deterministic fingerprint of the inputs defining a run.
pub fn family_fingerprint(family: &MatrixFamily, words: &[Word], alphas: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(family.dim() as u64);
    for m in family.members() {
        for &x in m.as_dmatrix().iter() {
            eat(x.to_bits());
        }
    }
    for w in words {
        for &l in w {
            eat(l as u64);
        }
        eat(u64::MAX);
    }
    for &a in alphas {
        eat(a.to_bits());
    }
    h
}

/// Run the iteration for a single candidate product.
pub fn run_algorithm1(
    family: &MatrixFamily,
    candidate: &CandidateProduct,
    cfg: &AlgorithmConfig,
) -> Result<RunOutcome, PolytopeError> {
    let scaled = family.scaled(1.0 / candidate.nu)?;
    let root = build_root(&scaled, candidate)?;
    let fingerprint = family_fingerprint(family, std::slice::from_ref(&candidate.word), &[1.0]);
    run_engine(
        EngineInput {
            family: scaled,
            roots: vec![root],
            alphas: vec![1.0],
            mode: HullMode::Symmetric,
            nu: candidate.nu,
            fingerprint,
        },
        cfg,
    )
}

// ---------------------------------------------------------------------------
// Body: norms, verification, pruning, serialization
// ---------------------------------------------------------------------------

/// Invariance and root-boundary checks on a finished body.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    /// Smallest membership score among non-matching generator images; must
    /// stay above `1 - 10 delta`.
    pub image_min_t0: f64,
    /// Images identified with an existing generator.
    pub matched: usize,
    pub tested: usize,
    /// Largest membership score over root elements; roots must not be
    /// strictly interior, so this stays below `1 + 10 delta`.
    pub root_max_t0: f64,
    pub ok: bool,
}

impl VerificationReport {
    pub fn describe(&self) -> String {
        format!(
            "image_min_t0 = {:.6e} over {} tested ({} matched), root_max_t0 = {:.6e}",
            self.image_min_t0, self.tested, self.matched, self.root_max_t0
        )
    }
}

impl InvariantBody {
    pub fn hull_mode(&self) -> HullMode {
        match self.kind {
            BodyKind::MonotonePolytope => HullMode::Monotone,
            _ => HullMode::Symmetric,
        }
    }

    pub fn generator_hullgens(&self) -> Vec<HullGen> {
        self.generators
            .iter()
            .map(|g| g.payload.as_hullgen())
            .collect()
    }

    fn membership_points(&self, facets_m: usize) -> Vec<DVector<f64>> {
        self.generators
            .iter()
            .flat_map(|g| payload_points(&g.payload, facets_m))
            .collect()
    }

    /// Minkowski norm of a point with respect to the body. Exact for
    /// vertex-only and monotone bodies; exact to cutting-plane tolerance when
    /// ellipses are present.
    pub fn g_norm(&self, x: &DVector<f64>) -> Result<f64, FeasibilityError> {
        match self.hull_mode() {
            HullMode::Monotone => {
                let points = self.membership_points(self.facets_m);
                let v = point_in_monotone_hull(x, &points, self.delta)?;
                Ok(if v.t0 == 0.0 { f64::INFINITY } else { 1.0 / v.t0 })
            }
            HullMode::Symmetric => gnorm_sharp(x, &self.generator_hullgens()),
        }
    }

    /// Norm of a payload as a set: vertices directly, ellipses bounded from
    /// above by a fine circumscribed polygon.
    fn payload_norm_upper(&self, p: &Payload) -> Result<f64, FeasibilityError> {
        match p {
            Payload::Vertex(v) => self.g_norm(v),
            Payload::Ellipse(e) => {
                let mut worst: f64 = 0.0;
                for pt in circumscribed_points(e, PRUNE_FACETS) {
                    worst = worst.max(self.g_norm(&pt)?);
                }
                Ok(worst)
            }
        }
    }

    /// Match-or-membership invariance check plus the root boundary check.
    pub fn verify(&self) -> Result<VerificationReport, PolytopeError> {
        let points = self.membership_points(self.facets_m);
        let signed = self.hull_mode() == HullMode::Monotone;
        let mut image_min_t0 = f64::INFINITY;
        let mut matched = 0usize;
        let mut tested = 0usize;
        for g in &self.generators {
            for letter in 1..=self.scaled_family.len() {
                let img = g.payload.apply(self.scaled_family.get(letter)?);
                tested += 1;
                if self.generators.iter().any(|h| h.payload.matches(&img, signed)) {
                    matched += 1;
                    continue;
                }
                let v = membership(&img, &points, self.hull_mode(), self.facets_m, self.delta)?;
                image_min_t0 = image_min_t0.min(v.t0);
            }
        }
        let mut root_max_t0: f64 = 0.0;
        for (root, &alpha) in self.roots.iter().zip(&self.alphas) {
            for p in &root.elements {
                let v = membership(
                    &p.scaled(alpha),
                    &points,
                    self.hull_mode(),
                    self.facets_m,
                    self.delta,
                )?;
                root_max_t0 = root_max_t0.max(v.t0);
            }
        }
        let ok = image_min_t0 >= 1.0 - 10.0 * self.delta && root_max_t0 <= 1.0 + 10.0 * self.delta;
        Ok(VerificationReport {
            image_min_t0,
            matched,
            tested,
            root_max_t0,
            ok,
        })
    }

    /// Remove generators lying in the hull of the others; idempotent, hull
    /// preserved within tolerance, dead-node bound recomputed at the end.
    pub fn prune_redundant(&self, _delta: f64) -> Result<InvariantBody, PolytopeError> {
        let mut body = self.clone();
        // Exact duplicates first (prefer keeping the earliest record).
        let signed = body.hull_mode() == HullMode::Monotone;
        let mut kept: Vec<GeneratorRecord> = Vec::new();
        for g in body.generators.drain(..) {
            if !kept.iter().any(|h| h.payload.matches(&g.payload, signed)) {
                kept.push(g);
            }
        }
        body.generators = kept;

        if body.hull_mode() == HullMode::Monotone {
            // Entrywise-dominated vertices are redundant outright.
            let verts: Vec<DVector<f64>> = body
                .generators
                .iter()
                .map(|g| match &g.payload {
                    Payload::Vertex(v) => v.clone(),
                    Payload::Ellipse(_) => unreachable!("monotone bodies hold vertices"),
                })
                .collect();
            let dominated: Vec<bool> = verts
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    verts.iter().enumerate().any(|(j, w)| {
                        j != i
                            && v.iter().zip(w.iter()).all(|(a, b)| a <= b)
                            && (j < i || v.iter().zip(w.iter()).any(|(a, b)| a < b))
                    })
                })
                .collect();
            body.generators = body
                .generators
                .into_iter()
                .zip(dominated)
                .filter_map(|(g, d)| (!d).then_some(g))
                .collect();
        }

        // LP pass: drop any generator (conservatively) inside the others'
        // hull, repeating until stable.
        loop {
            let mut removed = false;
            let mut idx = 0;
            while idx < body.generators.len() {
                if body.generators.len() == 1 {
                    break;
                }
                // Root elements stay listed even when flat: the body's root
                // sets reference them and they anchor growth classification.
                if body.generators[idx].word.is_empty() {
                    idx += 1;
                    continue;
                }
                let mut points = Vec::new();
                for (j, g) in body.generators.iter().enumerate() {
                    if j != idx {
                        points.extend(payload_points(&g.payload, PRUNE_FACETS));
                    }
                }
                let v = membership(
                    &body.generators[idx].payload,
                    &points,
                    body.hull_mode(),
                    PRUNE_FACETS,
                    body.delta,
                )?;
                if v.t0 >= REDUNDANT_T0 {
                    body.generators.remove(idx);
                    removed = true;
                } else {
                    idx += 1;
                }
            }
            if !removed {
                break;
            }
        }

        body.mu = compute_mu(&body)?;
        let report = body.verify()?;
        if !report.ok {
            return Err(PolytopeError::InvarianceCheckFailed(format!(
                "after pruning: {}",
                report.describe()
            )));
        }
        Ok(body)
    }

    pub fn to_json(&self) -> Value {
        let payload_json = |p: &Payload| match p {
            Payload::Vertex(v) => json!(v.as_slice()),
            Payload::Ellipse(e) => json!({"x": e.x.as_slice(), "y": e.y.as_slice()}),
        };
        let family_json: Vec<Vec<Vec<f64>>> = self
            .scaled_family
            .members()
            .iter()
            .map(|m| {
                let a = m.as_dmatrix();
                (0..a.nrows())
                    .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
                    .collect()
            })
            .collect();
        json!({
            "kind": self.kind.as_str(),
            "dim": self.dim,
            "nu": self.nu,
            "generators": self.generators.iter().map(|g| payload_json(&g.payload)).collect::<Vec<_>>(),
            "words": self.generators.iter().map(|g| g.word.clone()).collect::<Vec<_>>(),
            "mu": self.mu,
            "iterations": self.iterations,
            "delta": self.delta,
            "facets_M": self.facets_m,
            "alphas": self.alphas,
            "candidate_words": self.candidate_words,
            "roots": self.roots.iter().zip(&self.alphas).map(|(r, &a)| {
                r.elements.iter().map(|p| payload_json(&p.scaled(a))).collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
            "dead": self.dead.iter().map(|d| json!({
                "payload": payload_json(&d.payload),
                "word": d.word,
                "level": d.level,
                "t0": d.t0_at_death,
            })).collect::<Vec<_>>(),
            "scaled_family": family_json,
            "family_fingerprint": format!("{:016x}", self.family_fingerprint),
        })
    }

    /// Inverse of `to_json`. Tree provenance indices are not serialized;
    /// rebuilt records point at root set 0 where the document is silent,
    /// which no downstream consumer reads.
    pub fn from_json(doc: &Value) -> Result<InvariantBody, PolytopeError> {
        let bad = |msg: &str| PolytopeError::BadDocument(msg.to_string());
        let payload_from = |v: &Value| -> Result<Payload, PolytopeError> {
            let vector = |a: &Value| -> Result<DVector<f64>, PolytopeError> {
                let arr = a.as_array().ok_or_else(|| bad("payload coordinates"))?;
                let mut out = Vec::with_capacity(arr.len());
                for c in arr {
                    out.push(c.as_f64().ok_or_else(|| bad("payload coordinate"))?);
                }
                Ok(DVector::from_vec(out))
            };
            if v.is_array() {
                Ok(Payload::Vertex(vector(v)?))
            } else {
                let x = vector(v.get("x").ok_or_else(|| bad("ellipse x"))?)?;
                let y = vector(v.get("y").ok_or_else(|| bad("ellipse y"))?)?;
                Ok(Payload::Ellipse(EllipsePair::new(x, y)))
            }
        };
        let word_from = |v: &Value| -> Result<Word, PolytopeError> {
            v.as_array()
                .ok_or_else(|| bad("word"))?
                .iter()
                .map(|l| l.as_u64().map(|u| u as usize).ok_or_else(|| bad("letter")))
                .collect()
        };

        let kind = match doc.get("kind").and_then(Value::as_str) {
            Some("RealPolytope") => BodyKind::RealPolytope,
            Some("EllipseHull") => BodyKind::EllipseHull,
            Some("MonotonePolytope") => BodyKind::MonotonePolytope,
            _ => return Err(bad("kind")),
        };
        let dim = doc.get("dim").and_then(Value::as_u64).ok_or_else(|| bad("dim"))? as usize;
        let nu = doc.get("nu").and_then(Value::as_f64).ok_or_else(|| bad("nu"))?;
        let delta = doc.get("delta").and_then(Value::as_f64).ok_or_else(|| bad("delta"))?;
        let facets_m =
            doc.get("facets_M").and_then(Value::as_u64).ok_or_else(|| bad("facets_M"))? as usize;
        let iterations =
            doc.get("iterations").and_then(Value::as_u64).ok_or_else(|| bad("iterations"))?
                as usize;
        let mu = doc.get("mu").and_then(Value::as_f64);
        let fingerprint = doc
            .get("family_fingerprint")
            .and_then(Value::as_str)
            .and_then(|s| u64::from_str_radix(s, 16).ok())
            .ok_or_else(|| bad("family_fingerprint"))?;

        let alphas: Vec<f64> = doc
            .get("alphas")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("alphas"))?
            .iter()
            .map(|a| a.as_f64().ok_or_else(|| bad("alpha")))
            .collect::<Result<_, _>>()?;
        let candidate_words: Vec<Word> = doc
            .get("candidate_words")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("candidate_words"))?
            .iter()
            .map(word_from)
            .collect::<Result<_, _>>()?;

        let members = doc
            .get("scaled_family")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("scaled_family"))?
            .iter()
            .map(|m| -> Result<Matrix, PolytopeError> {
                let rows = m.as_array().ok_or_else(|| bad("matrix"))?;
                let data = DMatrix::from_fn(rows.len(), rows.len(), |i, j| {
                    rows[i]
                        .as_array()
                        .and_then(|r| r.get(j))
                        .and_then(Value::as_f64)
                        .unwrap_or(f64::NAN)
                });
                if data.iter().any(|c| c.is_nan()) {
                    return Err(bad("matrix entry"));
                }
                Ok(Matrix::from_dmatrix(data)?)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scaled_family = MatrixFamily::new(members)?;

        let gen_payloads = doc
            .get("generators")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("generators"))?;
        let gen_words = doc.get("words").and_then(Value::as_array).ok_or_else(|| bad("words"))?;
        if gen_payloads.len() != gen_words.len() {
            return Err(bad("generators and words lengths differ"));
        }

        let root_docs = doc.get("roots").and_then(Value::as_array).ok_or_else(|| bad("roots"))?;
        if root_docs.len() != alphas.len() || root_docs.len() != candidate_words.len() {
            return Err(bad("roots, alphas and candidate_words lengths differ"));
        }
        let mut roots = Vec::with_capacity(root_docs.len());
        for ((r, &alpha), word) in root_docs.iter().zip(&alphas).zip(&candidate_words) {
            let elements = r
                .as_array()
                .ok_or_else(|| bad("root elements"))?
                .iter()
                .map(|p| Ok(payload_from(p)?.scaled(1.0 / alpha)))
                .collect::<Result<Vec<_>, PolytopeError>>()?;
            roots.push(RootSet {
                elements,
                cycle_word: word.clone(),
            });
        }

        let mut root_slots = roots
            .iter()
            .enumerate()
            .flat_map(|(si, r)| (0..r.elements.len()).map(move |ei| (si, ei)))
            .collect::<Vec<_>>()
            .into_iter();
        let mut generators = Vec::with_capacity(gen_payloads.len());
        for (p, w) in gen_payloads.iter().zip(gen_words) {
            let word = word_from(w)?;
            let (root_set, root_element) = if word.is_empty() {
                root_slots.next().ok_or_else(|| bad("more root generators than root slots"))?
            } else {
                (0, 0)
            };
            generators.push(GeneratorRecord {
                payload: payload_from(p)?,
                word,
                root_set,
                root_element,
            });
        }

        let mut dead = Vec::new();
        if let Some(arr) = doc.get("dead").and_then(Value::as_array) {
            for d in arr {
                dead.push(DeadRecord {
                    payload: payload_from(d.get("payload").ok_or_else(|| bad("dead payload"))?)?,
                    word: word_from(d.get("word").ok_or_else(|| bad("dead word"))?)?,
                    root_set: 0,
                    root_element: 0,
                    level: d.get("level").and_then(Value::as_u64).ok_or_else(|| bad("level"))?
                        as usize,
                    t0_at_death: d.get("t0").and_then(Value::as_f64).ok_or_else(|| bad("t0"))?,
                });
            }
        }

        Ok(InvariantBody {
            kind,
            dim,
            nu,
            family_fingerprint: fingerprint,
            scaled_family,
            generators,
            dead,
            roots,
            alphas,
            candidate_words,
            iterations,
            delta,
            facets_m,
            mu,
        })
    }
}

/// Decay bound: the largest body-norm over dead payloads, measured against
/// the final body (tighter than the scores recorded at death).
fn compute_mu(body: &InvariantBody) -> Result<Option<f64>, FeasibilityError> {
    if body.dead.is_empty() {
        return Ok(None);
    }
    let mut mu: f64 = 0.0;
    for d in &body.dead {
        mu = mu.max(body.payload_norm_upper(&d.payload)?);
    }
    Ok(Some(mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MatrixFamily;
    use approx::assert_relative_eq;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn planar_pair() -> MatrixFamily {
        MatrixFamily::new(vec![
            mat(&[&[2.0, -2.0], &[1.0, 2.0]]),
            mat(&[&[1.0, 2.0], &[-1.0, -3.0]]),
        ])
        .unwrap()
    }

    fn top_candidate(fam: &MatrixFamily, max_len: usize) -> CandidateProduct {
        crate::search::enumerate_candidates(fam, max_len, 1)
            .unwrap()
            .remove(0)
    }

    #[test]
    fn root_cycle_planar_pair() {
        let fam = planar_pair();
        let cand = top_candidate(&fam, 6);
        let scaled = fam.scaled(1.0 / cand.nu).unwrap();
        let root = build_root(&scaled, &cand).unwrap();
        assert_eq!(root.elements.len(), 4);
        assert_eq!(root.cycle_word, vec![1, 1, 1, 2]);
        for p in &root.elements {
            match p {
                Payload::Vertex(v) => assert!(v.norm() > 1e-6),
                Payload::Ellipse(_) => panic!("real leading eigenvalue gives vertices"),
            }
        }
    }

    #[test]
    fn planar_pair_halts_to_ten_gon() {
        let fam = planar_pair();
        let cand = top_candidate(&fam, 6);
        let out = run_algorithm1(&fam, &cand, &AlgorithmConfig::default()).unwrap();
        let body = match out {
            RunOutcome::Halted(b) => b,
            other => panic!("expected halt, got {other:?}"),
        };
        assert_eq!(body.kind, BodyKind::RealPolytope);
        let pruned = body.prune_redundant(1e-8).unwrap();
        assert_eq!(pruned.generators.len(), 5, "ten-gon has five vertex pairs");
        let mu = pruned.mu.expect("dead nodes exist");
        assert!(mu < 1.0, "decay bound must be strict: {mu}");
        let report = pruned.verify().unwrap();
        assert!(report.ok, "{}", report.describe());
    }

    #[test]
    fn determinism_of_runs() {
        let fam = planar_pair();
        let cand = top_candidate(&fam, 6);
        let cfg = AlgorithmConfig::default();
        let serial = AlgorithmConfig {
            parallel: false,
            ..AlgorithmConfig::default()
        };
        let a = match run_algorithm1(&fam, &cand, &cfg).unwrap() {
            RunOutcome::Halted(b) => b,
            other => panic!("{other:?}"),
        };
        let b = match run_algorithm1(&fam, &cand, &serial).unwrap() {
            RunOutcome::Halted(b) => b,
            other => panic!("{other:?}"),
        };
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
    }

    #[test]
    fn non_dominant_candidate_yields_evidence() {
        let fam = planar_pair();
        // Deliberately feed the weaker single-letter candidate.
        let cand = CandidateProduct::from_word(&fam, &[1]).unwrap();
        let out = run_algorithm1(&fam, &cand, &AlgorithmConfig::default()).unwrap();
        match out {
            RunOutcome::NotDominantEvidence(e) => {
                assert!(e.nu_scaled > 1.0 + 1e-9);
                assert!(!e.word.is_empty());
            }
            other => panic!("expected evidence, got {other:?}"),
        }
    }

    #[test]
    fn rotation_pair_halts_to_three_ellipses() {
        // A scaled quarter-turn rotation dominates a contraction; the body is
        // an ellipse hull and pruning leaves three distinct ellipses.
        let c = 0.0;
        let s = 1.0;
        let fam = MatrixFamily::new(vec![
            mat(&[&[c, -s], &[s, c]]),
            mat(&[&[0.4, 0.1], &[0.1, 0.5]]),
        ])
        .unwrap();
        let cand = top_candidate(&fam, 4);
        assert_eq!(cand.word, vec![1]);
        let out = run_algorithm1(&fam, &cand, &AlgorithmConfig::default()).unwrap();
        let body = match out {
            RunOutcome::Halted(b) => b,
            other => panic!("expected halt, got {other:?}"),
        };
        assert_eq!(body.kind, BodyKind::EllipseHull);
        let report = body.verify().unwrap();
        assert!(report.ok, "{}", report.describe());
    }

    #[test]
    fn budget_reports_bounds() {
        let fam = planar_pair();
        let cand = top_candidate(&fam, 6);
        let cfg = AlgorithmConfig {
            max_iter: 1,
            evidence_check: false,
            ..AlgorithmConfig::default()
        };
        match run_algorithm1(&fam, &cand, &cfg).unwrap() {
            RunOutcome::Budget(p) => {
                assert_eq!(p.iterations, 1);
                assert!(p.alive > 0);
                assert_relative_eq!(p.nu_lower, cand.nu);
                assert!(p.nu_upper >= p.nu_lower);
            }
            RunOutcome::Halted(_) => panic!("one iteration cannot finish this run"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pruning_removes_interior_vertex() {
        let fam = planar_pair();
        let cand = top_candidate(&fam, 6);
        let body = match run_algorithm1(&fam, &cand, &AlgorithmConfig::default()).unwrap() {
            RunOutcome::Halted(b) => b,
            other => panic!("{other:?}"),
        };
        let mut fat = body.clone();
        // Inject a strictly interior copy of a shrunken generator.
        let v = match &fat.generators[0].payload {
            Payload::Vertex(v) => v * 0.5,
            Payload::Ellipse(_) => unreachable!(),
        };
        fat.generators.push(GeneratorRecord {
            payload: Payload::Vertex(v),
            word: vec![1],
            root_set: 0,
            root_element: 0,
        });
        let pruned = fat.prune_redundant(1e-8).unwrap();
        let reference = body.prune_redundant(1e-8).unwrap();
        assert_eq!(pruned.generators.len(), reference.generators.len());
        // Idempotence.
        let again = pruned.prune_redundant(1e-8).unwrap();
        assert_eq!(again.generators.len(), pruned.generators.len());
    }

    #[test]
    fn g_norm_scales_linearly_and_detects_membership() {
        let fam = planar_pair();
        let cand = top_candidate(&fam, 6);
        let body = match run_algorithm1(&fam, &cand, &AlgorithmConfig::default()).unwrap() {
            RunOutcome::Halted(b) => b,
            other => panic!("{other:?}"),
        };
        let x = DVector::from_column_slice(&[0.3, -0.2]);
        let n1 = body.g_norm(&x).unwrap();
        let n2 = body.g_norm(&(&x * 3.0)).unwrap();
        assert_relative_eq!(n2, 3.0 * n1, max_relative = 1e-9);
        // Generators themselves have norm one.
        if let Payload::Vertex(v) = &body.generators[0].payload {
            assert_relative_eq!(body.g_norm(v).unwrap(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn json_document_shape() {
        let fam = planar_pair();
        let cand = top_candidate(&fam, 6);
        let body = match run_algorithm1(&fam, &cand, &AlgorithmConfig::default()).unwrap() {
            RunOutcome::Halted(b) => b,
            other => panic!("{other:?}"),
        };
        let doc = body.to_json();
        for key in [
            "kind",
            "dim",
            "nu",
            "generators",
            "words",
            "mu",
            "iterations",
            "delta",
            "facets_M",
        ] {
            assert!(doc.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(doc["dim"], 2);
        assert_eq!(doc["kind"], "RealPolytope");
        let n = doc["generators"].as_array().unwrap().len();
        assert_eq!(doc["words"].as_array().unwrap().len(), n);

        // Document round trip, including the dead-node records.
        assert!(!doc["dead"].as_array().unwrap().is_empty());
        let back = InvariantBody::from_json(&doc).unwrap();
        assert_eq!(back.to_json().to_string(), doc.to_string());
        assert!(back.verify().unwrap().ok);
    }
}
