//! Monotone machinery for nonnegative families.
//!
//! A family of nonnegative matrices leaves the orthant invariant, so the
//! symmetric invariant body can be replaced by a monotone polytope: the
//! monotone convex hull of finitely many nonnegative vertices. The cyclic
//! tree works unchanged with the conic membership oracle, the root is a
//! Perron vector instead of a general leading eigenvector, and the induced
//! Barabanov norm `f(x) = max_i <v_i*, x>` lives on the orthant.

use crate::linalg::{word_product, LinalgError, MatrixFamily};
use crate::multi::{simplex_grid, BalancingVector, CertifyConfig, CertifyOutcome, MultiError};
use crate::norm::{norm_from_body, BuildFailure, BuildOutcome, NormError, NormFlags};
use crate::polytope::{
    family_fingerprint, run_engine, AlgorithmConfig, EngineInput, HullMode, Payload,
    PolytopeError, RootSet, RunOutcome,
};
use crate::search::{enumerate_candidates, CandidateProduct, SearchError};
use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PositiveError {
    #[error("matrix {letter} has negative entry {value:.6e} at ({row}, {col})")]
    NegativeEntry {
        letter: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("no nonnegative fixed vector of the cycle product: {0}")]
    NotPerron(String),
    #[error("family shares the invariant coordinate subspace {0:?}")]
    Reducible(Vec<usize>),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Multi(#[from] MultiError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_nonnegative(family: &MatrixFamily) -> Result<(), PositiveError> {
    for (k, a) in family.members().iter().enumerate() {
        let m = a.as_dmatrix();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] < 0.0 {
                    return Err(PositiveError::NegativeEntry {
                        letter: k + 1,
                        row: i,
                        col: j,
                        value: m[(i, j)],
                    });
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Positive irreducibility
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PositiveIrreducibility {
    PositivelyIrreducible,
    /// A closed coordinate class: no positive entry maps it outside, so the
    /// spanned coordinate subspace is invariant. Indices are 1-based.
    InvariantCoordinateSubspace(Vec<usize>),
}

/// Strong connectivity of the sparsity digraph (edge `j -> i` iff some
/// member has a positive `(i, j)` entry); a failing family yields a closed
/// vertex class as witness.
pub fn positive_irreducibility(
    family: &MatrixFamily,
) -> Result<PositiveIrreducibility, PositiveError> {
    check_nonnegative(family)?;
    let d = family.dim();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); d];
    for a in family.members() {
        let m = a.as_dmatrix();
        for j in 0..d {
            for i in 0..d {
                if m[(i, j)] > 0.0 {
                    succ[j].push(i);
                }
            }
        }
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }

    // Tarjan's strongly connected components, iteratively.
    let mut index = vec![usize::MAX; d];
    let mut low = vec![0usize; d];
    let mut on_stack = vec![false; d];
    let mut stack: Vec<usize> = Vec::new();
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut comp_of = vec![usize::MAX; d];
    let mut counter = 0usize;
    for start in 0..d {
        if index[start] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(start, 0)];
        while let Some(&mut (v, ref mut ei)) = call.last_mut() {
            if *ei == 0 {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ei < succ[v].len() {
                let w = succ[v][*ei];
                *ei += 1;
                if index[w] == usize::MAX {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp_of[w] = comps.len();
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
                call.pop();
                if let Some(&mut (u, _)) = call.last_mut() {
                    low[u] = low[u].min(low[v]);
                }
            }
        }
    }
    if comps.len() == 1 {
        return Ok(PositiveIrreducibility::PositivelyIrreducible);
    }
    // A component with no edge leaving it is a closed class.
    let mut has_exit = vec![false; comps.len()];
    for v in 0..d {
        for &w in &succ[v] {
            if comp_of[v] != comp_of[w] {
                has_exit[comp_of[v]] = true;
            }
        }
    }
    let sink = (0..comps.len()).find(|&c| !has_exit[c]).unwrap();
    let mut class: Vec<usize> = comps[sink].iter().map(|&v| v + 1).collect();
    class.sort_unstable();
    Ok(PositiveIrreducibility::InvariantCoordinateSubspace(class))
}

// ---------------------------------------------------------------------------
// Perron roots and the monotone run
// ---------------------------------------------------------------------------

/// Nonnegative fixed vector of the scaled cycle product, propagated along the
/// word. Power iteration on `(P + I)/2` damps every peripheral eigenvalue
/// except 1, so it converges without primitivity or simplicity assumptions
/// (the identity included).
pub fn perron_cycle(
    scaled_family: &MatrixFamily,
    word: &[usize],
) -> Result<RootSet, PositiveError> {
    let d = scaled_family.dim();
    let p = word_product(scaled_family, word)?;
    let p = p.as_dmatrix();
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut converged = false;
    for _ in 0..100_000 {
        let mut next = (p * &v + &v) * 0.5;
        let n = next.norm();
        if !(n > 1e-300) {
            return Err(PositiveError::NotPerron("iteration collapsed to zero".into()));
        }
        next /= n;
        let delta = (&next - &v).norm();
        v = next;
        if delta <= 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PositiveError::NotPerron(
            "power iteration did not converge".into(),
        ));
    }
    let residual = (p * &v - &v).norm();
    if residual > 1e-8 {
        return Err(PositiveError::NotPerron(format!(
            "fixed-point residual {residual:.3e}; the scaled cycle product has no unit Perron value"
        )));
    }
    let floor = -1e-9 * v.amax();
    if v.iter().any(|&c| c < floor) {
        return Err(PositiveError::NotPerron(
            "fixed vector has negative coordinates".into(),
        ));
    }
    v.apply(|c| *c = c.max(0.0));

    let mut elements = vec![Payload::Vertex(v)];
    for &letter in &word[..word.len() - 1] {
        let next = elements.last().unwrap().apply(scaled_family.get(letter)?);
        elements.push(next);
    }
    let closed = elements
        .last()
        .unwrap()
        .apply(scaled_family.get(word[word.len() - 1])?);
    if let (Payload::Vertex(a), Payload::Vertex(b)) = (&closed, &elements[0]) {
        let dev = (a - b).norm() / b.norm();
        if dev > 1e-7 {
            return Err(PositiveError::Polytope(PolytopeError::CycleMismatch {
                deviation: dev,
            }));
        }
    }
    let largest = elements.iter().map(Payload::size).fold(0.0, f64::max);
    for e in &mut elements {
        *e = e.scaled(1.0 / largest);
    }
    Ok(RootSet {
        elements,
        cycle_word: word.to_vec(),
    })
}

/// Cyclic tree on the monotone hull: nonnegative vertices, conic membership.
pub fn run_monotone_algorithm1(
    family: &MatrixFamily,
    candidate: &CandidateProduct,
    cfg: &AlgorithmConfig,
) -> Result<RunOutcome, PositiveError> {
    check_nonnegative(family)?;
    run_monotone_balanced(
        family,
        std::slice::from_ref(candidate),
        &BalancingVector::uniform(1),
        cfg,
    )
}

fn run_monotone_balanced(
    family: &MatrixFamily,
    candidates: &[CandidateProduct],
    alpha: &BalancingVector,
    cfg: &AlgorithmConfig,
) -> Result<RunOutcome, PositiveError> {
    let nu = candidates[0].nu;
    let scaled = family.scaled(1.0 / nu)?;
    let roots = candidates
        .iter()
        .map(|c| perron_cycle(&scaled, &c.word))
        .collect::<Result<Vec<_>, _>>()?;
    let words: Vec<_> = candidates.iter().map(|c| c.word.clone()).collect();
    let fingerprint = family_fingerprint(family, &words, alpha.alphas());
    Ok(run_engine(
        EngineInput {
            family: scaled,
            roots,
            alphas: alpha.alphas().to_vec(),
            mode: HullMode::Monotone,
            nu,
            fingerprint,
        },
        cfg,
    )?)
}

/// Candidate scan, monotone run, evidence-driven restarts, balancing grid
/// for tied candidates; mirrors the symmetric certification loop.
pub fn monotone_certify(
    family: &MatrixFamily,
    cfg: &CertifyConfig,
) -> Result<CertifyOutcome, PositiveError> {
    check_nonnegative(family)?;
    let mut max_len = cfg.max_len;
    let mut restarts_used = 0usize;
    loop {
        let candidates = enumerate_candidates(family, max_len, 1)?;
        if candidates.is_empty() {
            return Ok(CertifyOutcome::NotFound {
                reason: "no candidate product".into(),
            });
        }
        let r = candidates.len();
        let mut attempt_outcome: Option<(RunOutcome, BalancingVector)> = None;
        if r == 1 {
            let out = run_monotone_balanced(
                &family.clone(),
                &candidates,
                &BalancingVector::uniform(1),
                &cfg.algorithm,
            )?;
            attempt_outcome = Some((out, BalancingVector::uniform(1)));
        } else {
            let mut budget = cfg.search_budget.max(1);
            for weights in std::iter::once(vec![1.0; r]).chain(simplex_grid(r)) {
                let alpha = BalancingVector::from_weights(&weights)?;
                let out = run_monotone_balanced(family, &candidates, &alpha, &cfg.algorithm)?;
                let done = !matches!(out, RunOutcome::Budget(_));
                attempt_outcome = Some((out, alpha));
                budget -= 1;
                if done || budget == 0 {
                    break;
                }
            }
        }
        match attempt_outcome {
            Some((RunOutcome::Halted(body), alpha)) => {
                let raw = body.generators.len();
                let body = body.prune_redundant(cfg.algorithm.delta)?;
                return Ok(CertifyOutcome::Certified {
                    body,
                    raw_generators: raw,
                    restarts_used,
                    alpha,
                });
            }
            Some((RunOutcome::NotDominantEvidence(e), _)) => {
                restarts_used += 1;
                if restarts_used > cfg.restarts || e.word.len() > 24 {
                    return Ok(CertifyOutcome::NotFound {
                        reason: format!(
                            "candidate scan kept losing to longer words (last: {:?}, scaled averaged radius {:.6})",
                            e.word, e.nu_scaled
                        ),
                    });
                }
                max_len = max_len.max(e.word.len());
            }
            Some((RunOutcome::Budget(p), _)) => return Ok(CertifyOutcome::Budget(p)),
            None => {
                return Ok(CertifyOutcome::NotFound {
                    reason: "balancing search exhausted".into(),
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The monotone Barabanov norm
// ---------------------------------------------------------------------------

/// Monotone pipeline on the transpose family; the resulting vertices are the
/// functionals of `f(x) = max_i <v_i*, x>` on the orthant.
pub fn monotone_barabanov(
    family: &MatrixFamily,
    cfg: &CertifyConfig,
) -> Result<BuildOutcome, PositiveError> {
    check_nonnegative(family)?;
    if let PositiveIrreducibility::InvariantCoordinateSubspace(class) =
        positive_irreducibility(family)?
    {
        let d = family.dim();
        let basis = class
            .iter()
            .map(|&i| DVector::from_fn(d, |j, _| if j + 1 == i { 1.0 } else { 0.0 }))
            .collect();
        return Ok(BuildOutcome::Failed(BuildFailure::Reducible(basis)));
    }
    let dual = family.transpose_family();
    match monotone_certify(&dual, cfg)? {
        CertifyOutcome::Certified { body, alpha, .. } => {
            let flags = NormFlags {
                unique: alpha.len() == 1,
                rational_mod_pi: false,
                monotone: true,
            };
            Ok(BuildOutcome::Built(norm_from_body(body, flags)?))
        }
        CertifyOutcome::Budget(p) => Ok(BuildOutcome::Failed(BuildFailure::Budget(p))),
        CertifyOutcome::NotFound { reason } => {
            Ok(BuildOutcome::Failed(BuildFailure::NoCertificate(reason)))
        }
    }
}

/// Dense or sparse random family with entries uniform on [0, 1); `sparsity`
/// is the expected fraction of zero entries.
pub fn random_nonnegative_family(
    dim: usize,
    members: usize,
    sparsity: f64,
    seed: u64,
) -> MatrixFamily {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = (0..members)
        .map(|_| {
            crate::linalg::Matrix::from_dmatrix(nalgebra::DMatrix::from_fn(dim, dim, |_, _| {
                let u: f64 = rng.random();
                if sparsity > 0.0 && rng.random::<f64>() < sparsity {
                    0.0
                } else {
                    u
                }
            }))
            .unwrap()
        })
        .collect();
    MatrixFamily::new(mats).unwrap()
}
