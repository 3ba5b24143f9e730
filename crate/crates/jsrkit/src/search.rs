//! Candidate-product selection.
//!
//! The certification pipeline needs a product `Pi` of maximal averaged
//! spectral radius `nu(Pi) = rho(Pi)^(1/|Pi|)`. Since `nu` is invariant under
//! cyclic rotation of the word and powers of a word change nothing, it
//! suffices to scan one representative per cyclic class of primitive words.
//! Those representatives are exactly the Lyndon words, enumerated here in
//! lexicographic order by Duval's algorithm.

use crate::linalg::{
    leading_eigenpair, word_product, word_spectral_radius, ArgumentClass, LeadingEigen,
    LinalgError, Matrix, MatrixFamily, Word,
};
use thiserror::Error;

pub use crate::linalg::{classify_argument, normalize_family, NormalizedFamily};

/// Default cap on the number of scanned words.
pub const DEFAULT_WORD_CAP: u64 = 10_000_000;
/// Relative tolerance under which two averaged radii count as tied.
pub const NU_TIE_REL: f64 = 1e-10;
/// Denominator bound when classifying a complex leading argument.
pub const ARG_QMAX: u64 = 64;
/// Tolerance for `phi/pi ~ p/q` acceptance.
pub const ARG_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("word enumeration exceeded the cap of {0} words")]
    BudgetExceeded(u64),
    #[error("no candidate with positive spectral radius up to length {0}")]
    NoCandidate(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

// ---------------------------------------------------------------------------
// Cyclic-primitive normal form
// ---------------------------------------------------------------------------

/// A word reduced to its primitive root in the lexicographically smallest
/// rotation, remembering whether the original was a proper power.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CyclicNormalForm {
    Primitive(Word),
    PowerOf(Word, usize),
}

impl CyclicNormalForm {
    pub fn root(&self) -> &Word {
        match self {
            CyclicNormalForm::Primitive(w) | CyclicNormalForm::PowerOf(w, _) => w,
        }
    }

    pub fn exponent(&self) -> usize {
        match self {
            CyclicNormalForm::Primitive(_) => 1,
            CyclicNormalForm::PowerOf(_, e) => *e,
        }
    }
}

/// Smallest period of `w` via the KMP failure function.
pub fn minimal_period(w: &[usize]) -> usize {
    let n = w.len();
    assert!(n > 0, "empty word");
    let mut fail = vec![0usize; n];
    let mut k = 0;
    for i in 1..n {
        while k > 0 && w[i] != w[k] {
            k = fail[k - 1];
        }
        if w[i] == w[k] {
            k += 1;
        }
        fail[i] = k;
    }
    let p = n - fail[n - 1];
    if n % p == 0 {
        p
    } else {
        n
    }
}

/// Lexicographically smallest rotation.
pub fn least_rotation(w: &[usize]) -> Word {
    let n = w.len();
    assert!(n > 0, "empty word");
    let mut best = 0;
    for s in 1..n {
        for k in 0..n {
            let a = w[(s + k) % n];
            let b = w[(best + k) % n];
            if a != b {
                if a < b {
                    best = s;
                }
                break;
            }
        }
    }
    (0..n).map(|k| w[(best + k) % n]).collect()
}

/// Reduce to the cyclic-primitive representative: take the minimal period,
/// then the smallest rotation of that root.
pub fn cyclic_primitive_normalize(w: &[usize]) -> CyclicNormalForm {
    let p = minimal_period(w);
    let root = least_rotation(&w[..p]);
    if p == w.len() {
        CyclicNormalForm::Primitive(root)
    } else {
        CyclicNormalForm::PowerOf(root, w.len() / p)
    }
}

// ---------------------------------------------------------------------------
// Lyndon word enumeration (Duval)
// ---------------------------------------------------------------------------

/// All Lyndon words over `{1..m}` of length at most `max_len`, in
/// lexicographic order, counting against `cap`.
pub fn lyndon_words(m: usize, max_len: usize, cap: u64) -> Result<Vec<Word>, SearchError> {
    assert!(m >= 1 && max_len >= 1);
    let mut out = Vec::new();
    let mut w: Word = vec![1];
    loop {
        if out.len() as u64 >= cap {
            return Err(SearchError::BudgetExceeded(cap));
        }
        out.push(w.clone());
        // Extend periodically to max_len, then increment the last
        // non-maximal letter; termination when everything is maximal.
        let mut x: Word = (0..max_len).map(|i| w[i % w.len()]).collect();
        while x.last() == Some(&m) {
            x.pop();
        }
        match x.last_mut() {
            Some(last) => *last += 1,
            None => return Ok(out),
        }
        w = x;
    }
}

// ---------------------------------------------------------------------------
// Candidates
// ---------------------------------------------------------------------------

/// A cyclic-primitive word together with its product and spectral data.
#[derive(Debug, Clone)]
pub struct CandidateProduct {
    /// Lexicographically smallest rotation of a primitive word.
    pub word: Word,
    /// The product along the word (first letter acts first).
    pub product: Matrix,
    /// Spectral radius of the product.
    pub rho: f64,
    /// Averaged radius `rho^(1/len)`.
    pub nu: f64,
    pub leading: LeadingEigen,
    /// For complex leading eigenvalues: rationality class of `phi/pi`.
    pub argclass: Option<ArgumentClass>,
}

impl CandidateProduct {
    pub fn from_word(family: &MatrixFamily, word: &[usize]) -> Result<Self, LinalgError> {
        let product = word_product(family, word)?;
        let leading = leading_eigenpair(&product, 1e-9)?;
        let rho = leading.modulus;
        let nu = rho.powf(1.0 / word.len() as f64);
        let argclass = match &leading.kind {
            crate::linalg::EigenKind::Complex { phi, .. } => {
                Some(classify_argument(*phi, ARG_QMAX, ARG_TOL)?)
            }
            crate::linalg::EigenKind::Real { .. } => None,
        };
        Ok(CandidateProduct {
            word: word.to_vec(),
            product,
            rho,
            nu,
            leading,
            argclass,
        })
    }
}

/// Scan all primitive cyclic classes up to `max_len` and return the members
/// of the `top_k` highest averaged-radius groups, each group being the set of
/// words whose `nu` ties the group leader within `NU_TIE_REL`. Sorted by
/// `nu` descending, then length, then lexicographic order.
pub fn enumerate_candidates(
    family: &MatrixFamily,
    max_len: usize,
    top_k: usize,
) -> Result<Vec<CandidateProduct>, SearchError> {
    enumerate_candidates_capped(family, max_len, top_k, DEFAULT_WORD_CAP)
}

pub fn enumerate_candidates_capped(
    family: &MatrixFamily,
    max_len: usize,
    top_k: usize,
    cap: u64,
) -> Result<Vec<CandidateProduct>, SearchError> {
    assert!(top_k >= 1);
    let words = lyndon_words(family.len(), max_len, cap)?;
    let mut scored: Vec<(Word, f64)> = Vec::with_capacity(words.len());
    for w in words {
        let rho = word_spectral_radius(family, &w, 1e-12)?;
        let nu = rho.powf(1.0 / w.len() as f64);
        scored.push((w, nu));
    }
    scored.sort_by(|(wa, na), (wb, nb)| {
        nb.partial_cmp(na)
            .unwrap()
            .then(wa.len().cmp(&wb.len()))
            .then(wa.cmp(wb))
    });
    if scored.is_empty() || scored[0].1 <= 0.0 {
        return Err(SearchError::NoCandidate(max_len));
    }

    let mut picked: Vec<&Word> = Vec::new();
    let mut groups = 0usize;
    let mut leader = f64::INFINITY;
    for (w, nu) in &scored {
        if *nu < leader * (1.0 - NU_TIE_REL) {
            groups += 1;
            if groups > top_k || *nu <= 0.0 {
                break;
            }
            leader = *nu;
        } else if picked.is_empty() {
            groups = 1;
            leader = *nu;
        }
        picked.push(w);
    }

    picked
        .into_iter()
        .map(|w| CandidateProduct::from_word(family, w).map_err(SearchError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn normal_form_examples() {
        assert_eq!(
            cyclic_primitive_normalize(&[1, 2, 1, 2]),
            CyclicNormalForm::PowerOf(vec![1, 2], 2)
        );
        assert_eq!(
            cyclic_primitive_normalize(&[2, 1, 1, 1]),
            CyclicNormalForm::Primitive(vec![1, 1, 1, 2])
        );
        assert_eq!(
            cyclic_primitive_normalize(&[1, 1, 2, 1, 1, 2, 1, 1, 2]),
            CyclicNormalForm::PowerOf(vec![1, 1, 2], 3)
        );
        assert_eq!(
            cyclic_primitive_normalize(&[3]),
            CyclicNormalForm::Primitive(vec![3])
        );
    }

    #[test]
    fn normal_form_identifies_all_rotations() {
        let w = [1, 1, 2, 1, 2];
        let base = cyclic_primitive_normalize(&w);
        for s in 0..w.len() {
            let rot: Word = (0..w.len()).map(|k| w[(s + k) % w.len()]).collect();
            assert_eq!(cyclic_primitive_normalize(&rot), base);
        }
    }

    #[test]
    fn lyndon_enumeration_binary_up_to_4() {
        let words = lyndon_words(2, 4, 1_000).unwrap();
        let expected: Vec<Word> = vec![
            vec![1],
            vec![1, 1, 1, 2],
            vec![1, 1, 2],
            vec![1, 1, 2, 2],
            vec![1, 2],
            vec![1, 2, 2],
            vec![1, 2, 2, 2],
            vec![2],
        ];
        assert_eq!(words, expected);
        for w in &words {
            assert_eq!(cyclic_primitive_normalize(w), CyclicNormalForm::Primitive(w.clone()));
        }
    }

    #[test]
    fn lyndon_counts_match_necklace_formula() {
        // Numbers of Lyndon words over 2 and 3 letters by length.
        let by_len = |m: usize, n: usize| {
            lyndon_words(m, n, 1_000_000)
                .unwrap()
                .into_iter()
                .filter(|w| w.len() == n)
                .count()
        };
        for (n, expect) in [(1, 2), (2, 1), (3, 2), (4, 3), (5, 6), (6, 9), (7, 18), (8, 30)] {
            assert_eq!(by_len(2, n), expect, "binary length {n}");
        }
        for (n, expect) in [(1, 3), (2, 3), (3, 8), (4, 18)] {
            assert_eq!(by_len(3, n), expect, "ternary length {n}");
        }
    }

    #[test]
    fn lyndon_budget_cap() {
        assert!(matches!(
            lyndon_words(2, 8, 10),
            Err(SearchError::BudgetExceeded(10))
        ));
    }

    #[test]
    fn planar_pair_top_candidate() {
        let fam = planar_pair();
        let cands = enumerate_candidates(&fam, 6, 1).unwrap();
        assert_eq!(cands[0].word, vec![1, 1, 1, 2]);
        // Strict leader: the tie group is a singleton.
        assert_eq!(cands.len(), 1);
        let rho_expected = 24.0 + 792.0_f64.sqrt();
        assert_relative_eq!(cands[0].rho, rho_expected, max_relative = 1e-10);
        assert_relative_eq!(cands[0].nu, rho_expected.powf(0.25), max_relative = 1e-10);
        assert!(cands[0].leading.unique && cands[0].leading.simple);
        assert!(cands[0].argclass.is_none());
    }

    #[test]
    fn rotation_family_top_candidate_is_single_letter() {
        // One matrix slightly contracting combined with a rotation by pi/2
        // scaled up: the rotation dominates alone.
        let c = std::f64::consts::FRAC_PI_2.cos();
        let s = std::f64::consts::FRAC_PI_2.sin();
        let fam = MatrixFamily::new(vec![
            mat(&[&[c, -s], &[s, c]]).scaled(1.1).unwrap(),
            mat(&[&[0.4, 0.1], &[0.0, 0.5]]),
        ])
        .unwrap();
        let cands = enumerate_candidates(&fam, 5, 1).unwrap();
        assert_eq!(cands[0].word, vec![1]);
        assert_eq!(
            cands[0].argclass,
            Some(ArgumentClass::RationalModPi { p: 1, q: 2 })
        );
    }

    #[test]
    fn tie_group_collects_equal_nu() {
        // Two isometric-by-symmetry letters: nu(1) = nu(2) exactly.
        let fam = MatrixFamily::new(vec![
            mat(&[&[2.0, 0.0], &[0.0, 1.0]]),
            mat(&[&[1.0, 0.0], &[0.0, 2.0]]),
        ])
        .unwrap();
        let cands = enumerate_candidates(&fam, 4, 1).unwrap();
        let words: Vec<&Word> = cands.iter().map(|c| &c.word).collect();
        assert_eq!(words, vec![&vec![1], &vec![2]]);
        assert_relative_eq!(cands[0].nu, 2.0, max_relative = 1e-12);
        assert_relative_eq!(cands[1].nu, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn enumeration_is_deterministic() {
        let fam = planar_pair();
        let a = enumerate_candidates(&fam, 6, 2).unwrap();
        let b = enumerate_candidates(&fam, 6, 2).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.word, y.word);
            assert_eq!(x.nu.to_bits(), y.nu.to_bits());
        }
    }

    /// Independent upper bound: for any n, nu(candidate) <= max over all
    /// length-n products of the spectral norm, to the power 1/n.
    #[test]
    fn nu_respects_operator_norm_bounds() {
        let fam = planar_pair();
        let best = enumerate_candidates(&fam, 6, 1).unwrap().remove(0);
        for n in 1..=8usize {
            let mut max_norm: f64 = 0.0;
            for code in 0..(2usize.pow(n as u32)) {
                let word: Word = (0..n).map(|i| 1 + ((code >> i) & 1)).collect();
                let p = word_product(&fam, &word).unwrap();
                max_norm = max_norm.max(spectral_norm_2x2(&p));
            }
            assert!(
                best.nu <= max_norm.powf(1.0 / n as f64) + 1e-9,
                "n = {n}: {} vs {}",
                best.nu,
                max_norm.powf(1.0 / n as f64)
            );
        }
    }

    fn spectral_norm_2x2(m: &Matrix) -> f64 {
        let a = m.as_dmatrix();
        let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
        // Largest eigenvalue of A^T A via trace/determinant.
        let tr = p * p + q * q + r * r + s * s;
        let det = (p * s - q * r) * (p * s - q * r);
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        ((tr + disc) / 2.0).sqrt()
    }

    #[test]
    fn nu_invariant_under_rotation_of_scored_word() {
        let fam = planar_pair();
        let w = [1, 1, 2, 2, 1];
        let base = word_spectral_radius(&fam, &w, 1e-12).unwrap();
        for s in 1..w.len() {
            let rot: Word = (0..w.len()).map(|k| w[(s + k) % w.len()]).collect();
            let r = word_spectral_radius(&fam, &rot, 1e-12).unwrap();
            assert_relative_eq!(base, r, max_relative = 1e-9);
        }
    }
}
