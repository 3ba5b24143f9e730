//! Balanced runs for several candidate products of equal averaged radius.
//!
//! When the top of the candidate scan is a tie, no single cycle dominates and
//! the single-root iteration cannot halt. Seeding the iteration with all tied
//! roots, each scaled by a positive balance factor, restores termination for
//! a suitable balance. This module validates the tied candidate set, runs the
//! shared engine over the union of scaled roots, searches for a working
//! balance, and exposes the end-to-end certification routine used by the
//! command-line front end.

use crate::linalg::MatrixFamily;
use crate::polytope::{
    build_root, family_fingerprint, run_engine, AlgorithmConfig, EngineInput, Evidence, HullMode,
    InvariantBody, PartialState, PolytopeError, RunOutcome,
};
use crate::search::{
    cyclic_primitive_normalize, enumerate_candidates, CandidateProduct, SearchError, NU_TIE_REL,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MultiError {
    #[error("candidates disagree on the averaged radius: {0} vs {1}")]
    MismatchedNu(f64, f64),
    #[error("candidates coincide under cyclic normalization")]
    DuplicateCandidates,
    #[error("balance factors must be positive and sum to one")]
    BadBalancing,
    #[error("no candidates supplied")]
    EmptyCandidates,
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// Positive per-root scales summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancingVector {
    alphas: Vec<f64>,
}

impl BalancingVector {
    pub fn new(alphas: Vec<f64>) -> Result<Self, MultiError> {
        if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(MultiError::BadBalancing);
        }
        let sum: f64 = alphas.iter().sum();
        if !(sum - 1.0).abs().le(&1e-6) {
            return Err(MultiError::BadBalancing);
        }
        let mut alphas = alphas;
        for a in alphas.iter_mut() {
            *a /= sum;
        }
        Ok(BalancingVector { alphas })
    }

    pub fn uniform(r: usize) -> Self {
        BalancingVector {
            alphas: vec![1.0 / r as f64; r],
        }
    }

    /// Build from arbitrary positive weights by normalizing.
    pub fn from_weights(weights: &[f64]) -> Result<Self, MultiError> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(MultiError::BadBalancing);
        }
        let sum: f64 = weights.iter().sum();
        Ok(BalancingVector {
            alphas: weights.iter().map(|&w| w / sum).collect(),
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

fn validate_candidates(candidates: &[CandidateProduct]) -> Result<(), MultiError> {
    if candidates.is_empty() {
        return Err(MultiError::EmptyCandidates);
    }
    let nu0 = candidates[0].nu;
    for c in &candidates[1..] {
        if (c.nu - nu0).abs() > NU_TIE_REL * nu0.max(1e-300) {
            return Err(MultiError::MismatchedNu(nu0, c.nu));
        }
    }
    for (i, a) in candidates.iter().enumerate() {
        let na = cyclic_primitive_normalize(&a.word);
        for b in &candidates[i + 1..] {
            if na == cyclic_primitive_normalize(&b.word) {
                return Err(MultiError::DuplicateCandidates);
            }
        }
    }
    Ok(())
}

/// Run the iteration seeded with every candidate's root cycle, scaled by the
/// balance factors. With one candidate and a unit factor this reduces to the
/// single-root run exactly.
pub fn run_algorithm2(
    family: &MatrixFamily,
    candidates: &[CandidateProduct],
    alpha: &BalancingVector,
    cfg: &AlgorithmConfig,
) -> Result<RunOutcome, MultiError> {
    validate_candidates(candidates)?;
    if alpha.len() != candidates.len() {
        return Err(MultiError::BadBalancing);
    }
    let nu = candidates[0].nu;
    let scaled = family.scaled(1.0 / nu).map_err(PolytopeError::from)?;
    let mut roots = Vec::with_capacity(candidates.len());
    for c in candidates {
        roots.push(build_root(&scaled, c)?);
    }
    let words: Vec<_> = candidates.iter().map(|c| c.word.clone()).collect();
    let fingerprint = family_fingerprint(family, &words, alpha.alphas());
    run_engine(
        EngineInput {
            family: scaled,
            roots,
            alphas: alpha.alphas().to_vec(),
            mode: HullMode::Symmetric,
            nu,
            fingerprint,
        },
        cfg,
    )
    .map_err(MultiError::from)
}

// ---------------------------------------------------------------------------
// Balance search
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum FindOutcome {
    Found(BalancingVector, InvariantBody),
    /// A trial surfaced a word disproving dominance of the whole tied set.
    NotDominant(Evidence),
    NotFound {
        attempts: usize,
        /// Fewest alive nodes seen at budget, as a progress diagnostic.
        best_alive: Option<usize>,
    },
}

/// Candidate balance points: a coarse grid over the simplex (weights 1..5
/// per coordinate, normalized, deduplicated), ordered centre-out from the
/// uniform point.
pub(crate) fn simplex_grid(r: usize) -> Vec<Vec<f64>> {
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut w = vec![1usize; r];
    loop {
        let sum: usize = w.iter().sum();
        raw.push(w.iter().map(|&x| x as f64 / sum as f64).collect());
        let mut i = 0;
        loop {
            if i == r {
                let mut out: Vec<Vec<f64>> = Vec::new();
                for v in raw {
                    if !out
                        .iter()
                        .any(|u| u.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12))
                    {
                        out.push(v);
                    }
                }
                let uniform = 1.0 / r as f64;
                out.sort_by(|a, b| {
                    let da: f64 = a.iter().map(|x| (x - uniform) * (x - uniform)).sum();
                    let db: f64 = b.iter().map(|x| (x - uniform) * (x - uniform)).sum();
                    da.partial_cmp(&db).unwrap().then_with(|| {
                        a.iter()
                            .zip(b)
                            .map(|(x, y)| x.partial_cmp(y).unwrap())
                            .fold(std::cmp::Ordering::Equal, |acc, o| acc.then(o))
                    })
                });
                return out;
            }
            if w[i] < 5 {
                w[i] += 1;
                break;
            }
            w[i] = 1;
            i += 1;
        }
    }
}

/// Search the simplex for a balance under which the run halts: grid pass
/// first, then local refinement around the most promising point (fewest
/// alive nodes when the budget struck).
pub fn find_balancing(
    family: &MatrixFamily,
    candidates: &[CandidateProduct],
    cfg: &AlgorithmConfig,
    search_budget: usize,
) -> Result<FindOutcome, MultiError> {
    validate_candidates(candidates)?;
    let r = candidates.len();
    if r == 1 {
        let alpha = BalancingVector::uniform(1);
        return match run_algorithm2(family, candidates, &alpha, cfg)? {
            RunOutcome::Halted(b) => Ok(FindOutcome::Found(alpha, b)),
            RunOutcome::NotDominantEvidence(e) => Ok(FindOutcome::NotDominant(e)),
            RunOutcome::Budget(p) => Ok(FindOutcome::NotFound {
                attempts: 1,
                best_alive: Some(p.alive),
            }),
        };
    }

    // Search trials run under a tighter iteration cap: a working balance
    // halts quickly, a wrong one keeps spawning nodes.
    let trial_cfg = AlgorithmConfig {
        max_iter: cfg.max_iter.min(40),
        ..cfg.clone()
    };
    let mut attempts = 0usize;
    let mut best: Option<(Vec<f64>, usize)> = None;
    let try_alpha = |weights: &[f64],
                         attempts: &mut usize,
                         best: &mut Option<(Vec<f64>, usize)>|
     -> Result<Option<FindOutcome>, MultiError> {
        *attempts += 1;
        let alpha = BalancingVector::from_weights(weights)?;
        match run_algorithm2(family, candidates, &alpha, &trial_cfg) {
            Ok(RunOutcome::Halted(b)) => Ok(Some(FindOutcome::Found(alpha, b))),
            Ok(RunOutcome::NotDominantEvidence(e)) => Ok(Some(FindOutcome::NotDominant(e))),
            Ok(RunOutcome::Budget(p)) => {
                if best.as_ref().is_none_or(|(_, a)| p.alive < *a) {
                    *best = Some((alpha.alphas().to_vec(), p.alive));
                }
                Ok(None)
            }
            // The tree halted but some root sank inside the hull: wrong
            // balance, not a failure. Keep it as the refinement centre.
            Err(MultiError::Polytope(PolytopeError::InvarianceCheckFailed(_))) => {
                if best.as_ref().is_none_or(|(_, a)| *a > 0) {
                    *best = Some((alpha.alphas().to_vec(), 0));
                }
                Ok(None)
            }
            // Extreme weights can flatten the trial hull until the LP gives
            // up; skip the point.
            Err(MultiError::Polytope(PolytopeError::Feasibility(_))) => Ok(None),
            Err(e) => Err(e),
        }
    };

    for point in simplex_grid(r) {
        if attempts >= search_budget {
            break;
        }
        if let Some(out) = try_alpha(&point, &mut attempts, &mut best)? {
            return Ok(out);
        }
    }

    // Local refinement: perturb the best point along coordinate-pair
    // directions with shrinking steps.
    let mut step = 0.1;
    while attempts < search_budget && step > 1e-4 {
        let Some((centre, centre_alive)) = best.clone() else {
            break;
        };
        let mut improved = false;
        'pairs: for i in 0..r {
            for j in 0..r {
                if i == j {
                    continue;
                }
                let mut w = centre.clone();
                w[i] += step;
                w[j] -= step;
                if w[j] <= 1e-6 {
                    continue;
                }
                if attempts >= search_budget {
                    break 'pairs;
                }
                if let Some(out) = try_alpha(&w, &mut attempts, &mut best)? {
                    return Ok(out);
                }
                if best.as_ref().is_some_and(|(_, a)| *a < centre_alive) {
                    improved = true;
                    break 'pairs;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }

    Ok(FindOutcome::NotFound {
        attempts,
        best_alive: best.map(|(_, a)| a),
    })
}

// ---------------------------------------------------------------------------
// End-to-end certification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CertifyConfig {
    /// Longest word scanned by the candidate search.
    pub max_len: usize,
    pub algorithm: AlgorithmConfig,
    /// Balance-search attempt cap for tied candidate sets.
    pub search_budget: usize,
    /// How many times an evidence word may restart the candidate search.
    pub restarts: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            max_len: 8,
            algorithm: AlgorithmConfig::default(),
            search_budget: 40,
            restarts: 4,
        }
    }
}

#[derive(Debug)]
pub enum CertifyOutcome {
    Certified {
        /// Pruned invariant body; `body.nu` is the certified radius.
        body: InvariantBody,
        /// Generator count before pruning.
        raw_generators: usize,
        /// Evidence-driven restarts consumed.
        restarts_used: usize,
        alpha: BalancingVector,
    },
    Budget(PartialState),
    NotFound {
        reason: String,
    },
}

/// Candidate scan, balanced run, evidence-driven restarts, and final pruning:
/// the whole certification pipeline.
pub fn certify_jsr(family: &MatrixFamily, cfg: &CertifyConfig) -> Result<CertifyOutcome, MultiError> {
    let mut max_len = cfg.max_len;
    let mut restarts_used = 0usize;
    loop {
        let candidates = enumerate_candidates(family, max_len, 1)?;
        let outcome = if candidates.len() == 1 {
            match run_algorithm2(family, &candidates, &BalancingVector::uniform(1), &cfg.algorithm)? {
                RunOutcome::Halted(b) => FindOutcome::Found(BalancingVector::uniform(1), b),
                RunOutcome::NotDominantEvidence(e) => FindOutcome::NotDominant(e),
                RunOutcome::Budget(p) => {
                    return Ok(CertifyOutcome::Budget(p));
                }
            }
        } else {
            find_balancing(family, &candidates, &cfg.algorithm, cfg.search_budget)?
        };
        match outcome {
            FindOutcome::Found(alpha, body) => {
                let raw = body.generators.len();
                let pruned = body.prune_redundant(cfg.algorithm.delta)?;
                return Ok(CertifyOutcome::Certified {
                    body: pruned,
                    raw_generators: raw,
                    restarts_used,
                    alpha,
                });
            }
            FindOutcome::NotDominant(e) => {
                restarts_used += 1;
                if restarts_used > cfg.restarts || e.word.len() > 24 {
                    return Ok(CertifyOutcome::NotFound {
                        reason: format!(
                            "dominance disproved by word {:?} (scaled averaged radius {:.6e}) and restart budget exhausted",
                            e.word, e.nu_scaled
                        ),
                    });
                }
                max_len = max_len.max(e.word.len());
            }
            FindOutcome::NotFound {
                attempts,
                best_alive,
            } => {
                return Ok(CertifyOutcome::NotFound {
                    reason: format!(
                        "no balance found after {attempts} attempts (fewest alive nodes: {best_alive:?})"
                    ),
                });
            }
        }
    }
}
