//! Switching trajectories: simulation, growth classification, and decay
//! certificates.
//!
//! Along any switching law the G-norm of a trajectory of the scaled family
//! never increases; it stays bounded away from zero exactly for eventually
//! periodic laws whose period is a dominant product (up to cyclic rotation),
//! and otherwise contracts by the dead-node factor `mu` every block of `L`
//! steps. The per-trajectory refinement projects the post-prefix state onto
//! the leading eigenvector of the transposed cycle product.

use crate::linalg::{
    leading_eigenpair, word_apply, word_product, EigenKind, LinalgError, MatrixFamily, Word,
};
use crate::polytope::{InvariantBody, PolytopeError};
use crate::search::{cyclic_primitive_normalize, least_rotation, minimal_period};
use crate::feasibility::FeasibilityError;
use nalgebra::DVector;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("eventually periodic laws need a nonempty period")]
    EmptyPeriod,
    #[error("switching laws use 1-based letters; got 0")]
    BadLetter,
    #[error("operation needs an eventually periodic law")]
    NotPeriodic,
    #[error("normalized simulation and G-norm reporting need an invariant body")]
    MissingBody,
    #[error("the body retained no dead nodes, so no decay factor exists")]
    NoDeadNodes,
    #[error("law JSON needs either prefix/period or sample: {0}")]
    BadLawJson(String),
    #[error("leading eigenvalue of the cycle product is not unique and simple")]
    DegenerateLeading,
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

// ---------------------------------------------------------------------------
// Switching laws
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SwitchingLaw {
    /// `prefix` then `period` forever; the period is stored as the least
    /// rotation of its primitive root, with the rotation remainder folded
    /// into the prefix, so equal laws compare equal.
    EventuallyPeriodic { prefix: Word, period: Word },
    /// A finite observation window; says nothing about the tail.
    FiniteSample(Word),
}

fn check_letters(w: &[usize]) -> Result<(), TrajectoryError> {
    if w.iter().any(|&l| l == 0) {
        return Err(TrajectoryError::BadLetter);
    }
    Ok(())
}

impl SwitchingLaw {
    pub fn eventually_periodic(prefix: Word, period: Word) -> Result<Self, TrajectoryError> {
        if period.is_empty() {
            return Err(TrajectoryError::EmptyPeriod);
        }
        check_letters(&prefix)?;
        check_letters(&period)?;
        let m = minimal_period(&period);
        let q = &period[..m];
        let r = least_rotation(q);
        // q is some rotation of r: q = r[k..] ++ r[..k]; the infinite tail
        // q^inf equals r[k..] ++ r^inf, so the remainder joins the prefix.
        let k = (0..m)
            .find(|&k| {
                r[k..]
                    .iter()
                    .chain(&r[..k])
                    .eq(q.iter())
            })
            .expect("least_rotation returns a rotation");
        let mut prefix = prefix;
        if k != 0 {
            prefix.extend_from_slice(&r[k..]);
        }
        Ok(SwitchingLaw::EventuallyPeriodic { prefix, period: r })
    }

    pub fn finite(sample: Word) -> Result<Self, TrajectoryError> {
        if sample.is_empty() {
            return Err(TrajectoryError::EmptyPeriod);
        }
        check_letters(&sample)?;
        Ok(SwitchingLaw::FiniteSample(sample))
    }

    /// Letter driving step `k -> k+1`; `None` past the end of a finite law.
    pub fn letter_at(&self, k: usize) -> Option<usize> {
        match self {
            SwitchingLaw::EventuallyPeriodic { prefix, period } => Some(if k < prefix.len() {
                prefix[k]
            } else {
                period[(k - prefix.len()) % period.len()]
            }),
            SwitchingLaw::FiniteSample(sample) => sample.get(k).copied(),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            SwitchingLaw::EventuallyPeriodic { prefix, period } => {
                json!({"prefix": prefix, "period": period})
            }
            SwitchingLaw::FiniteSample(sample) => json!({"sample": sample}),
        }
    }

    pub fn from_json(v: &Value) -> Result<Self, TrajectoryError> {
        let words = |key: &str| -> Result<Option<Word>, TrajectoryError> {
            match v.get(key) {
                None => Ok(None),
                Some(arr) => arr
                    .as_array()
                    .ok_or_else(|| TrajectoryError::BadLawJson(format!("{key} must be an array")))?
                    .iter()
                    .map(|x| {
                        x.as_u64()
                            .map(|u| u as usize)
                            .ok_or_else(|| {
                                TrajectoryError::BadLawJson(format!("{key} holds non-integers"))
                            })
                    })
                    .collect::<Result<Word, _>>()
                    .map(Some),
            }
        };
        if let Some(sample) = words("sample")? {
            return SwitchingLaw::finite(sample);
        }
        let period = words("period")?
            .ok_or_else(|| TrajectoryError::BadLawJson("missing period or sample".into()))?;
        let prefix = words("prefix")?.unwrap_or_default();
        SwitchingLaw::eventually_periodic(prefix, period)
    }
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Contraction certificate read off a finished run: any law that never
/// settles on a dominant period loses a factor `mu` in G-norm every
/// `block_len` steps.
#[derive(Debug, Clone, Copy)]
pub struct DecayCertificate {
    /// Largest G-norm of a dead node against the final body; in (0, 1).
    pub mu: f64,
    pub block_len: usize,
}

pub fn decay_certificate(body: &InvariantBody) -> Result<DecayCertificate, TrajectoryError> {
    let mu = match body.mu {
        Some(mu) if !body.dead.is_empty() => mu,
        _ => return Err(TrajectoryError::NoDeadNodes),
    };
    let deepest = body.dead.iter().map(|d| d.level).max().unwrap_or(0);
    let longest_cycle = body
        .candidate_words
        .iter()
        .map(|w| w.len())
        .max()
        .unwrap_or(1);
    Ok(DecayCertificate {
        mu,
        block_len: deepest + longest_cycle,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum GrowthClass {
    FastestGrowth,
    DecaysToZero,
    Unknown(String),
}

#[derive(Debug, Clone)]
pub struct GrowthVerdict {
    pub class: GrowthClass,
    /// Per-step geometric bound `mu^(1/L)` when a certificate is available.
    pub decay_rate: Option<f64>,
    pub witness: String,
}

/// Compare the law's period against the certified dominant words, cyclic
/// rotations identified. Finite samples stay unclassified: the tail is not
/// observable.
pub fn classify_law(
    law: &SwitchingLaw,
    certified: &[Word],
    decay: Option<&DecayCertificate>,
) -> GrowthVerdict {
    let roots: Vec<Word> = certified
        .iter()
        .map(|w| cyclic_primitive_normalize(w).root().clone())
        .collect();
    match law {
        SwitchingLaw::EventuallyPeriodic { period, .. } => {
            if let Some(hit) = roots.iter().find(|r| *r == period) {
                GrowthVerdict {
                    class: GrowthClass::FastestGrowth,
                    decay_rate: None,
                    witness: format!("period is the dominant product word {hit:?}"),
                }
            } else {
                let decay_rate = decay.map(|d| d.mu.powf(1.0 / d.block_len as f64));
                let witness = match decay {
                    Some(d) => format!(
                        "period {:?} is not dominant; G-norm contracts by {:.6} every {} steps",
                        period, d.mu, d.block_len
                    ),
                    None => format!("period {period:?} is not dominant"),
                };
                GrowthVerdict {
                    class: GrowthClass::DecaysToZero,
                    decay_rate,
                    witness,
                }
            }
        }
        SwitchingLaw::FiniteSample(sample) => {
            let root = cyclic_primitive_normalize(sample).root().clone();
            let consistent = roots.contains(&root);
            GrowthVerdict {
                class: GrowthClass::Unknown(
                    "finite presentations cannot certify asymptotics".into(),
                ),
                decay_rate: None,
                witness: if consistent {
                    format!("sample repeats the dominant word {root:?}, consistent with fastest growth")
                } else {
                    "sample fixes no infinite tail".into()
                },
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Per-trajectory maximal growth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MaxGrowthVerdict {
    pub maximal: bool,
    /// Relative size of the component along the leading direction of the
    /// transposed cycle product.
    pub overlap: f64,
    /// True when the leading eigenvalue is complex and the test used the
    /// plane spanned by the real and imaginary eigenvector parts.
    pub complex_extension: bool,
}

/// Whether this particular initial point realizes the fastest growth: the
/// state after the prefix must have a component along the leading
/// eigenvector of the transposed period product (equivalently, lie outside
/// the spanned complement of the Jordan basis).
pub fn max_growth_trajectory(
    family: &MatrixFamily,
    law: &SwitchingLaw,
    x0: &DVector<f64>,
    tol: f64,
) -> Result<MaxGrowthVerdict, TrajectoryError> {
    let (prefix, period) = match law {
        SwitchingLaw::EventuallyPeriodic { prefix, period } => (prefix, period),
        SwitchingLaw::FiniteSample(_) => return Err(TrajectoryError::NotPeriodic),
    };
    let y = word_apply(family, prefix, x0)?;
    if y.norm() == 0.0 {
        return Ok(MaxGrowthVerdict {
            maximal: false,
            overlap: 0.0,
            complex_extension: false,
        });
    }
    let pi_t = word_product(family, period)?.transpose();
    let eigen = leading_eigenpair(&pi_t, 1e-9)?;
    if !eigen.unique || !eigen.simple {
        return Err(TrajectoryError::DegenerateLeading);
    }
    let (component, complex_extension) = match &eigen.kind {
        EigenKind::Real { v, .. } => (y.dot(v).abs(), false),
        EigenKind::Complex { x, y: im, .. } => {
            let a = y.dot(x) / x.norm();
            let b = if im.norm() > 0.0 { y.dot(im) / im.norm() } else { 0.0 };
            (a.hypot(b), true)
        }
    };
    let overlap = component / y.norm();
    Ok(MaxGrowthVerdict {
        maximal: overlap > tol,
        overlap,
        complex_extension,
    })
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub point: DVector<f64>,
    pub g_norm: Option<f64>,
}

/// Iterate `x(k+1) = A(k) x(k)`. With `normalize` the family is scaled by
/// the certified radius first, so G-norms are non-increasing; a supplied
/// body also prices every state in its norm. Finite laws end early.
pub fn simulate(
    family: &MatrixFamily,
    law: &SwitchingLaw,
    x0: &DVector<f64>,
    k_steps: usize,
    normalize: bool,
    body: Option<&InvariantBody>,
) -> Result<Vec<TrajectoryPoint>, TrajectoryError> {
    let stepped = match (normalize, body) {
        (true, Some(b)) => family.scaled(1.0 / b.nu)?,
        (true, None) => return Err(TrajectoryError::MissingBody),
        (false, _) => family.clone(),
    };
    let price = |x: &DVector<f64>| -> Result<Option<f64>, TrajectoryError> {
        match body {
            Some(b) => Ok(Some(b.g_norm(x)?)),
            None => Ok(None),
        }
    };
    let mut out = Vec::with_capacity(k_steps + 1);
    let mut x = x0.clone();
    out.push(TrajectoryPoint {
        step: 0,
        point: x.clone(),
        g_norm: price(&x)?,
    });
    for k in 0..k_steps {
        let letter = match law.letter_at(k) {
            Some(l) => l,
            None => break,
        };
        x = stepped.get(letter)?.apply(&x);
        out.push(TrajectoryPoint {
            step: k + 1,
            point: x.clone(),
            g_norm: price(&x)?,
        });
    }
    Ok(out)
}

/// `step,x1..xd,g_norm` rows; the norm column is empty without a body.
pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let dim = points.first().map_or(0, |p| p.point.len());
    let mut s = String::from("step");
    for i in 1..=dim {
        s.push_str(&format!(",x{i}"));
    }
    s.push_str(",g_norm\n");
    for p in points {
        s.push_str(&p.step.to_string());
        for c in p.point.iter() {
            s.push_str(&format!(",{c}"));
        }
        match p.g_norm {
            Some(g) => s.push_str(&format!(",{g}\n")),
            None => s.push_str(",\n"),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::polytope::{run_algorithm1, AlgorithmConfig, RunOutcome};
    use crate::search::enumerate_candidates;
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

    fn planar_body() -> InvariantBody {
        let fam = planar_pair();
        let cand = enumerate_candidates(&fam, 6, 1).unwrap().remove(0);
        match run_algorithm1(&fam, &cand, &AlgorithmConfig::default()).unwrap() {
            RunOutcome::Halted(b) => b.prune_redundant(1e-8).unwrap(),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn period_storage_is_canonical_and_sequence_preserving() {
        let rotated = SwitchingLaw::eventually_periodic(vec![2], vec![1, 1, 2, 1]).unwrap();
        match &rotated {
            SwitchingLaw::EventuallyPeriodic { prefix, period } => {
                assert_eq!(period, &vec![1, 1, 1, 2]);
                assert_eq!(prefix, &vec![2, 1, 1, 2]);
            }
            _ => unreachable!(),
        }
        let original = |k: usize| {
            let seq = [2usize, 1, 1, 2, 1, 1, 1, 2, 1, 1, 1, 2, 1];
            if k < 1 {
                seq[k]
            } else {
                [1, 1, 2, 1][(k - 1) % 4]
            }
        };
        for k in 0..64 {
            assert_eq!(rotated.letter_at(k), Some(original(k)), "step {k}");
        }

        let power = SwitchingLaw::eventually_periodic(vec![], vec![1, 2, 1, 2]).unwrap();
        match power {
            SwitchingLaw::EventuallyPeriodic { prefix, period } => {
                assert!(prefix.is_empty());
                assert_eq!(period, vec![1, 2]);
            }
            _ => unreachable!(),
        }

        assert!(matches!(
            SwitchingLaw::eventually_periodic(vec![], vec![]),
            Err(TrajectoryError::EmptyPeriod)
        ));
        assert!(matches!(
            SwitchingLaw::eventually_periodic(vec![0], vec![1]),
            Err(TrajectoryError::BadLetter)
        ));
    }

    #[test]
    fn law_json_round_trip() {
        let law = SwitchingLaw::eventually_periodic(vec![2], vec![1, 1, 1, 2]).unwrap();
        let back = SwitchingLaw::from_json(&law.to_json()).unwrap();
        assert_eq!(law, back);
        let fin = SwitchingLaw::finite(vec![1, 2, 1]).unwrap();
        assert_eq!(fin, SwitchingLaw::from_json(&fin.to_json()).unwrap());
        assert!(SwitchingLaw::from_json(&serde_json::json!({"prefix": [1]})).is_err());
    }

    #[test]
    fn classification_of_planar_laws() {
        let body = planar_body();
        let decay = decay_certificate(&body).unwrap();
        assert!(decay.mu < 1.0 && decay.mu > 0.0);
        assert!(decay.block_len >= 4);
        let certified = body.candidate_words.clone();

        let fastest = SwitchingLaw::eventually_periodic(vec![2], vec![1, 1, 1, 2]).unwrap();
        let v = classify_law(&fastest, &certified, Some(&decay));
        assert_eq!(v.class, GrowthClass::FastestGrowth);

        let rotated = SwitchingLaw::eventually_periodic(vec![], vec![1, 1, 2, 1]).unwrap();
        assert_eq!(
            classify_law(&rotated, &certified, Some(&decay)).class,
            GrowthClass::FastestGrowth
        );

        let losing = SwitchingLaw::eventually_periodic(vec![], vec![1, 2]).unwrap();
        let v = classify_law(&losing, &certified, Some(&decay));
        assert_eq!(v.class, GrowthClass::DecaysToZero);
        let rate = v.decay_rate.unwrap();
        assert_relative_eq!(rate, decay.mu.powf(1.0 / decay.block_len as f64));
        assert!(rate < 1.0);

        let finite = SwitchingLaw::finite(vec![1, 1, 1, 2, 1, 1, 1, 2]).unwrap();
        let v = classify_law(&finite, &certified, None);
        assert!(matches!(v.class, GrowthClass::Unknown(_)));
        assert!(v.witness.contains("consistent"));
    }

    #[test]
    fn max_growth_verdicts() {
        let fam = planar_pair();
        let law = SwitchingLaw::eventually_periodic(vec![2], vec![1, 1, 1, 2]).unwrap();

        let from_axis = max_growth_trajectory(
            &fam,
            &law,
            &DVector::from_column_slice(&[1.0, 0.0]),
            1e-9,
        )
        .unwrap();
        assert!(from_axis.maximal);
        assert!(!from_axis.complex_extension);

        // A start orthogonal to the leading eigenvector of the transposed
        // cycle product, after undoing the prefix, dies out.
        let pi_t = word_product(&fam, &[1, 1, 1, 2]).unwrap().transpose();
        let w = match leading_eigenpair(&pi_t, 1e-9).unwrap().kind {
            EigenKind::Real { v, .. } => v,
            _ => panic!("real leading expected"),
        };
        let perp = DVector::from_column_slice(&[-w[1], w[0]]);
        let a2_inv = mat(&[&[-3.0, -2.0], &[1.0, 1.0]]);
        let x0 = a2_inv.apply(&perp);
        let v = max_growth_trajectory(&fam, &law, &x0, 1e-9).unwrap();
        assert!(!v.maximal, "overlap {}", v.overlap);

        let eigen_start = SwitchingLaw::eventually_periodic(vec![], vec![1, 1, 1, 2]).unwrap();
        let pi = word_product(&fam, &[1, 1, 1, 2]).unwrap();
        let lead = match leading_eigenpair(&pi, 1e-9).unwrap().kind {
            EigenKind::Real { v, .. } => v,
            _ => panic!(),
        };
        assert!(max_growth_trajectory(&fam, &eigen_start, &lead, 1e-9)
            .unwrap()
            .maximal);
    }

    #[test]
    fn identity_family_constant_trajectory() {
        let fam = MatrixFamily::new(vec![mat(&[&[1.0, 0.0], &[0.0, 1.0]])]).unwrap();
        let law = SwitchingLaw::eventually_periodic(vec![], vec![1]).unwrap();
        let pts = simulate(
            &fam,
            &law,
            &DVector::from_column_slice(&[0.3, -0.7]),
            10,
            false,
            None,
        )
        .unwrap();
        assert_eq!(pts.len(), 11);
        for p in &pts {
            assert_relative_eq!(p.point[0], 0.3);
            assert_relative_eq!(p.point[1], -0.7);
            assert!(p.g_norm.is_none());
        }
    }

    #[test]
    fn g_norm_lyapunov_and_growth_separation() {
        let fam = planar_pair();
        let body = planar_body();
        let x0 = DVector::from_column_slice(&[1.0, 0.0]);

        let fastest = SwitchingLaw::eventually_periodic(vec![2], vec![1, 1, 1, 2]).unwrap();
        let pts = simulate(&fam, &fastest, &x0, 1000, true, Some(&body)).unwrap();
        let slack = 1.0 + 10.0 * body.delta;
        let g0 = pts[0].g_norm.unwrap();
        let mut low = f64::INFINITY;
        for pair in pts.windows(2) {
            let a = pair[0].g_norm.unwrap();
            let b = pair[1].g_norm.unwrap();
            assert!(b <= a * slack, "step {}: {b} > {a}", pair[1].step);
            low = low.min(b);
        }
        assert!(low >= 1e-3 * g0, "fastest law collapsed: {low} vs {g0}");

        let losing = SwitchingLaw::eventually_periodic(vec![], vec![1, 2]).unwrap();
        let decay = decay_certificate(&body).unwrap();
        let pts = simulate(&fam, &losing, &x0, 2000, true, Some(&body)).unwrap();
        let g0 = pts[0].g_norm.unwrap();
        let last = pts.last().unwrap().g_norm.unwrap();
        assert!(last < 1e-3 * g0, "losing law failed to decay: {last}");
        // Envelope: one factor of mu every block, one block of slack.
        for p in &pts {
            let blocks = (p.step / decay.block_len).saturating_sub(1);
            let envelope = g0 * decay.mu.powi(blocks as i32) * slack;
            assert!(
                p.g_norm.unwrap() <= envelope,
                "step {}: {} above envelope {envelope}",
                p.step,
                p.g_norm.unwrap()
            );
        }
    }

    #[test]
    fn no_dead_nodes_error() {
        let fam = MatrixFamily::new(vec![mat(&[
            &[0.5, 0.0],
            &[0.0, 0.5],
        ])])
        .unwrap();
        let cand = enumerate_candidates(&fam, 2, 1).unwrap().remove(0);
        let body = match crate::positive::run_monotone_algorithm1(
            &fam,
            &cand,
            &AlgorithmConfig::default(),
        )
        .unwrap()
        {
            RunOutcome::Halted(b) => b,
            other => panic!("{other:?}"),
        };
        assert!(matches!(
            decay_certificate(&body),
            Err(TrajectoryError::NoDeadNodes)
        ));
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let fam = planar_pair();
        let body = planar_body();
        let law = SwitchingLaw::eventually_periodic(vec![2], vec![1, 1, 1, 2]).unwrap();
        let pts = simulate(
            &fam,
            &law,
            &DVector::from_column_slice(&[1.0, 0.0]),
            5,
            true,
            Some(&body),
        )
        .unwrap();
        let csv = trajectory_csv(&pts);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "step,x1,x2,g_norm");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 6);
        for (i, row) in rows.iter().enumerate() {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields.len(), 4);
            assert_eq!(fields[0].parse::<usize>().unwrap(), i);
            let x1: f64 = fields[1].parse().unwrap();
            let g: f64 = fields[3].parse().unwrap();
            assert_relative_eq!(x1, pts[i].point[0]);
            assert_relative_eq!(g, pts[i].g_norm.unwrap());
        }

        let free = simulate(
            &fam,
            &SwitchingLaw::finite(vec![1, 2]).unwrap(),
            &DVector::from_column_slice(&[1.0, 0.0]),
            10,
            false,
            None,
        )
        .unwrap();
        assert_eq!(free.len(), 3);
        assert!(trajectory_csv(&free).lines().nth(1).unwrap().ends_with(','));
    }
}
