//! Validated dense matrices, matrix families, leading eigenpairs and word
//! products.
//!
//! Conventions used across the crate:
//!
//! * a word `s_1 s_2 ... s_k` over the alphabet `{1, ..., m}` maps to the
//!   product `A_{s_k} * ... * A_{s_1}` (the order of multipliers is inverse to
//!   the order of letters, so the first letter acts first on a vector);
//! * the averaged spectral radius of a word is `nu = rho(product)^(1/k)`;
//! * leading eigenvectors are normalized deterministically so that repeated
//!   runs are bit-identical: unit length, first significant coordinate
//!   positive, and for complex pairs `<x, y> = 0` with `||x|| >= ||y||`.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// 1-based matrix indices; index `j` refers to the j-th family member.
pub type Word = Vec<usize>;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("family must contain at least one matrix")]
    EmptyFamily,
    #[error("family members must share one dimension, got {0} and {1}")]
    MixedDimensions(usize, usize),
    #[error("word must be non-empty")]
    EmptyWord,
    #[error("letter {letter} out of range for family of {len} matrices")]
    LetterOutOfRange { letter: usize, len: usize },
    #[error("eigenvalue iteration failed to converge within the budget")]
    NonConvergence,
    #[error("leading eigenvalue is degenerate: {0}")]
    DegenerateLeading(String),
    #[error("spectral radius is zero; no leading eigenpair")]
    ZeroSpectralRadius,
    #[error("argument must lie strictly inside (0, pi), got {0}")]
    ArgumentOutOfRange(f64),
}

/// Validated square matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: DMatrix<f64>,
}

impl Matrix {
    pub fn from_dmatrix(data: DMatrix<f64>) -> Result<Self, LinalgError> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(LinalgError::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Matrix { data })
    }

    /// Builds a matrix from row slices, e.g. `Matrix::from_rows(&[&[2.0, -2.0], &[1.0, 2.0]])`.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(LinalgError::NotSquare {
                rows: d,
                cols: rows.first().map_or(0, |r| r.len()),
            });
        }
        let data = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        Self::from_dmatrix(data)
    }

    pub fn identity(d: usize) -> Self {
        Matrix {
            data: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix {
            data: self.data.transpose(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Matrix, LinalgError> {
        Matrix::from_dmatrix(&self.data * factor)
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.data * v
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    /// Largest absolute entry; used as the natural scale in tolerances.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
    }
}

/// Finite ordered family `{A_1, ..., A_m}` of same-dimension matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    matrices: Vec<Matrix>,
}

impl MatrixFamily {
    pub fn new(matrices: Vec<Matrix>) -> Result<Self, LinalgError> {
        let first = matrices.first().ok_or(LinalgError::EmptyFamily)?;
        let d = first.dim();
        for m in &matrices {
            if m.dim() != d {
                return Err(LinalgError::MixedDimensions(d, m.dim()));
            }
        }
        Ok(MatrixFamily { matrices })
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].dim()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1-based access following the word convention.
    pub fn get(&self, letter: usize) -> Result<&Matrix, LinalgError> {
        if letter == 0 || letter > self.matrices.len() {
            return Err(LinalgError::LetterOutOfRange {
                letter,
                len: self.matrices.len(),
            });
        }
        Ok(&self.matrices[letter - 1])
    }

    pub fn members(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn is_nonnegative(&self) -> bool {
        self.matrices.iter().all(Matrix::is_nonnegative)
    }

    pub fn transpose_family(&self) -> MatrixFamily {
        MatrixFamily {
            matrices: self.matrices.iter().map(Matrix::transpose).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<MatrixFamily, LinalgError> {
        let matrices = self
            .matrices
            .iter()
            .map(|m| m.scaled(factor))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MatrixFamily { matrices })
    }

    pub fn max_abs(&self) -> f64 {
        self.matrices.iter().fold(0.0, |a, m| a.max(m.max_abs()))
    }
}

/// Family scaled by `1/nu`, so the dominant product has spectral radius one.
#[derive(Debug, Clone)]
pub struct NormalizedFamily {
    pub family: MatrixFamily,
    pub nu: f64,
}

pub fn normalize_family(family: &MatrixFamily, nu: f64) -> Result<NormalizedFamily, LinalgError> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(LinalgError::DegenerateLeading(format!(
            "normalization requires nu > 0, got {nu}"
        )));
    }
    Ok(NormalizedFamily {
        family: family.scaled(1.0 / nu)?,
        nu,
    })
}

/// Product `A_{s_k} * ... * A_{s_1}` for the word `s_1 ... s_k`.
pub fn word_product(family: &MatrixFamily, word: &[usize]) -> Result<Matrix, LinalgError> {
    if word.is_empty() {
        return Err(LinalgError::EmptyWord);
    }
    let mut acc = family.get(word[0])?.as_dmatrix().clone();
    for &letter in &word[1..] {
        acc = family.get(letter)?.as_dmatrix() * acc;
    }
    Matrix::from_dmatrix(acc)
}

/// Applies the word to a vector: `x -> A_{s_k} ... A_{s_1} x` without forming
/// the product matrix. Cost O(k d^2).
pub fn word_apply(
    family: &MatrixFamily,
    word: &[usize],
    x: &DVector<f64>,
) -> Result<DVector<f64>, LinalgError> {
    let mut v = x.clone();
    for &letter in word {
        v = family.get(letter)?.apply(&v);
    }
    Ok(v)
}

const POWER_MAX_ITER: usize = 50_000;
const SCHUR_MAX_ITER: usize = 75_000;

fn complex_eigenvalues(a: &DMatrix<f64>, tol: f64) -> Result<Vec<Complex<f64>>, LinalgError> {
    if a.nrows() == 1 {
        return Ok(vec![Complex::new(a[(0, 0)], 0.0)]);
    }
    let eps = tol.max(f64::EPSILON);
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), eps, SCHUR_MAX_ITER)
        .ok_or(LinalgError::NonConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Power iteration with a diagonal shift; reliable for nonnegative matrices
/// (the shift removes periodicity). Returns the dominant eigenvalue of `a`
/// and its eigenvector, plus an estimate of the second-largest modulus.
fn power_leading(a: &DMatrix<f64>, tol: f64) -> Result<(f64, DVector<f64>, f64), LinalgError> {
    let d = a.nrows();
    let scale = a.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    if scale == 0.0 {
        return Ok((0.0, DVector::from_element(d, (d as f64).sqrt().recip()), 0.0));
    }
    let shift = 0.01 * scale;
    let mut v = DVector::from_element(d, (d as f64).sqrt().recip());
    let mut lambda = 0.0;
    let tol = tol.max(1e-14);
    let mut converged = false;
    for _ in 0..POWER_MAX_ITER {
        let mut w = a * &v;
        w += &v * shift;
        let norm = w.norm();
        if norm <= 1e-300 {
            return Ok((0.0, v, 0.0));
        }
        w /= norm;
        let new_lambda = norm;
        let delta = (new_lambda - lambda).abs();
        v = w;
        lambda = new_lambda;
        if delta <= tol * lambda.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NonConvergence);
    }
    // Second modulus estimate by deflated iteration (orthogonal projection).
    let mut u = DVector::from_fn(d, |i, _| 1.0 + (i as f64 + 1.0).sin());
    u -= &v * v.dot(&u);
    let mut second = 0.0;
    if u.norm() > 1e-12 {
        u /= u.norm();
        for _ in 0..200 {
            let mut w = a * &u;
            w -= &v * v.dot(&w);
            let norm = w.norm();
            if norm <= 1e-300 {
                second = 0.0;
                break;
            }
            second = norm;
            u = w / norm;
        }
    }
    Ok((lambda - shift, v, second))
}

/// Dimension threshold beyond which nonnegative matrices take the power
/// iteration path instead of a full Schur decomposition.
pub(crate) const LARGE_NONNEG_DIM: usize = 257;

/// Spectral radius within relative tolerance `tol`.
pub fn spectral_radius(a: &Matrix, tol: f64) -> Result<f64, LinalgError> {
    let m = a.as_dmatrix();
    if a.dim() >= LARGE_NONNEG_DIM && a.is_nonnegative() {
        let (lambda, _, _) = power_leading(m, tol)?;
        return Ok(lambda.max(0.0));
    }
    let eig = complex_eigenvalues(m, tol)?;
    Ok(eig.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Spectral radius of the word product, without forming the product when the
/// dimension is large and the family nonnegative.
pub fn word_spectral_radius(
    family: &MatrixFamily,
    word: &[usize],
    tol: f64,
) -> Result<f64, LinalgError> {
    if word.is_empty() {
        return Err(LinalgError::EmptyWord);
    }
    if family.dim() >= LARGE_NONNEG_DIM && family.is_nonnegative() {
        return power_word_radius(family, word, tol);
    }
    spectral_radius(&word_product(family, word)?, tol)
}

fn power_word_radius(
    family: &MatrixFamily,
    word: &[usize],
    tol: f64,
) -> Result<f64, LinalgError> {
    let d = family.dim();
    let mut v = DVector::from_element(d, (d as f64).sqrt().recip());
    let mut lambda = 0.0_f64;
    let tol = tol.max(1e-13);
    for _ in 0..5_000 {
        let mut w = word_apply(family, word, &v)?;
        // Diagonal shift applied at the word level keeps periodic cases stable.
        w += &v * (1e-3 * lambda.max(1e-30));
        let norm = w.norm();
        if norm <= 1e-300 {
            return Ok(0.0);
        }
        w /= norm;
        let new_lambda = norm - 1e-3 * lambda.max(1e-30);
        let delta = (new_lambda - lambda).abs();
        v = w;
        lambda = new_lambda;
        if delta <= tol * lambda.max(1e-30) {
            return Ok(lambda.max(0.0));
        }
    }
    Err(LinalgError::NonConvergence)
}

/// Leading eigenvalue kind with deterministically normalized eigenvectors.
#[derive(Debug, Clone)]
pub enum EigenKind {
    /// Real leading eigenvalue `lambda` (may be negative) with unit
    /// eigenvector `v`, first significant coordinate positive.
    Real { lambda: f64, v: DVector<f64> },
    /// Complex pair `rho * exp(+/- i phi)`, `phi` in (0, pi). The eigenvector
    /// `x + i y` satisfies `<x, y> = 0`, `||x|| >= ||y||`,
    /// `||x||^2 + ||y||^2 = 1`.
    Complex { phi: f64, x: DVector<f64>, y: DVector<f64> },
}

#[derive(Debug, Clone)]
pub struct LeadingEigen {
    pub modulus: f64,
    pub kind: EigenKind,
    /// No other eigenvalue (conjugate excluded) attains the leading modulus.
    pub unique: bool,
    /// Algebraic multiplicity one.
    pub simple: bool,
    /// Modulus gap to the rest of the spectrum.
    pub gap: f64,
}

/// Leading eigenpair; `tol_gap` is the absolute slack added to the
/// `1e-10 * modulus` uniqueness threshold.
pub fn leading_eigenpair(a: &Matrix, tol_gap: f64) -> Result<LeadingEigen, LinalgError> {
    let m = a.as_dmatrix();
    let d = a.dim();

    if d >= LARGE_NONNEG_DIM && a.is_nonnegative() {
        let (lambda, v, second) = power_leading(m, 1e-13)?;
        if lambda <= 0.0 {
            return Err(LinalgError::ZeroSpectralRadius);
        }
        let gap = (lambda - second).max(0.0);
        let threshold = tol_gap.max(1e-10 * lambda);
        let v = fix_real_sign(v);
        return Ok(LeadingEigen {
            modulus: lambda,
            kind: EigenKind::Real { lambda, v },
            unique: gap > threshold,
            simple: gap > threshold,
            gap,
        });
    }

    let eig = complex_eigenvalues(m, 1e-14)?;
    let rho = eig.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if rho <= 0.0 || !rho.is_finite() {
        return Err(LinalgError::ZeroSpectralRadius);
    }
    let ctol = (1e-9 * rho).max(1e-13);

    // Deterministic representative among eigenvalues of leading modulus:
    // largest real part, then nonnegative imaginary part.
    let mut lambda = Complex::new(f64::NEG_INFINITY, 0.0);
    for z in &eig {
        if z.norm() >= rho - ctol {
            let better = z.re > lambda.re + ctol
                || ((z.re - lambda.re).abs() <= ctol && z.im.abs() > lambda.im.abs() + ctol)
                || ((z.re - lambda.re).abs() <= ctol
                    && (z.im.abs() - lambda.im.abs()).abs() <= ctol
                    && z.im > lambda.im);
            if lambda.re == f64::NEG_INFINITY || better {
                lambda = *z;
            }
        }
    }
    if lambda.im < 0.0 {
        lambda = lambda.conj();
    }
    let is_real = lambda.im.abs() <= ctol;
    if is_real {
        lambda = Complex::new(lambda.re, 0.0);
    }

    // Multiplicity of lambda itself and modulus gap to everything outside
    // the {lambda, conj(lambda)} cluster.
    let mut multiplicity = 0usize;
    let mut rest: f64 = 0.0;
    for z in &eig {
        if (z - lambda).norm() <= ctol {
            multiplicity += 1;
        } else if !is_real && (z - lambda.conj()).norm() <= ctol {
            // conjugate partner, not part of the gap
        } else {
            rest = rest.max(z.norm());
        }
    }
    let gap = rho - rest;
    let threshold = tol_gap.max(1e-10 * rho);
    let unique = gap > threshold;
    let simple = multiplicity == 1;

    let kind = if is_real {
        let v = real_eigenvector(m, lambda.re)?;
        EigenKind::Real {
            lambda: lambda.re,
            v: fix_real_sign(v),
        }
    } else {
        let v = complex_eigenvector(m, lambda)?;
        let (x, y) = canonical_pair(v);
        EigenKind::Complex {
            phi: lambda.arg(),
            x,
            y,
        }
    };

    Ok(LeadingEigen {
        modulus: rho,
        kind,
        unique,
        simple,
        gap,
    })
}

fn fix_real_sign(mut v: DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    let scale = v.amax();
    for &entry in v.iter() {
        if entry.abs() > 1e-8 * scale {
            if entry < 0.0 {
                v = -v;
            }
            break;
        }
    }
    v
}

fn real_eigenvector(a: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>, LinalgError> {
    let d = a.nrows();
    let scale = a.iter().fold(lambda.abs(), |acc, &x| acc.max(x.abs()));
    for attempt in 0..4 {
        let shift = lambda + scale * 1e-11 * 10f64.powi(attempt);
        let shifted = a - DMatrix::identity(d, d) * shift;
        let lu = shifted.lu();
        let mut v = DVector::from_fn(d, |i, _| 1.0 + 0.25 * ((i + 1) as f64).sin());
        v /= v.norm();
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) => {
                    let n = w.norm();
                    if !n.is_finite() || n == 0.0 {
                        ok = false;
                        break;
                    }
                    v = w / n;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let residual = (a * &v - &v * lambda).norm();
        if residual <= 1e-7 * scale.max(1.0) {
            return Ok(v);
        }
    }
    Err(LinalgError::DegenerateLeading(format!(
        "inverse iteration failed for eigenvalue {lambda}"
    )))
}

fn complex_eigenvector(
    a: &DMatrix<f64>,
    lambda: Complex<f64>,
) -> Result<DVector<Complex<f64>>, LinalgError> {
    let d = a.nrows();
    let ac = a.map(|x| Complex::new(x, 0.0));
    let scale = a.iter().fold(lambda.norm(), |acc, &x| acc.max(x.abs()));
    for attempt in 0..4 {
        let shift = lambda * Complex::new(1.0 + 1e-11 * 10f64.powi(attempt), 1e-12);
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(d, d) * shift;
        let lu = shifted.lu();
        let mut v = DVector::from_fn(d, |i, _| {
            Complex::new(1.0 + 0.25 * ((i + 1) as f64).sin(), 0.1 * ((i + 2) as f64).cos())
        });
        let n = v.norm();
        v /= Complex::new(n, 0.0);
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) => {
                    let n = w.norm();
                    if !n.is_finite() || n == 0.0 {
                        ok = false;
                        break;
                    }
                    v = w / Complex::new(n, 0.0);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let residual = (&ac * &v - &v * lambda).norm();
        if residual <= 1e-7 * scale.max(1.0) {
            return Ok(v);
        }
    }
    Err(LinalgError::DegenerateLeading(format!(
        "inverse iteration failed for eigenvalue {lambda}"
    )))
}

/// Rotates the phase of `v = x + i y` so that `<x, y> = 0`, `||x|| >= ||y||`,
/// the total norm is one, and the first significant coordinate of `x` is
/// positive. The ellipse traced by `cos(t) x + sin(t) y` is unchanged.
fn canonical_pair(v: DVector<Complex<f64>>) -> (DVector<f64>, DVector<f64>) {
    let n = v.norm();
    let v = v / Complex::new(n, 0.0);
    // s = sum v_i^2 = (||x||^2 - ||y||^2) + 2 i <x, y>
    let s: Complex<f64> = v.iter().map(|z| z * z).sum();
    let psi = if s.norm() > 1e-12 {
        -s.arg() / 2.0
    } else {
        // Circular case: pin the phase on the largest coordinate instead.
        let mut jstar = 0;
        let mut best = 0.0;
        for (j, z) in v.iter().enumerate() {
            if z.norm() > best {
                best = z.norm();
                jstar = j;
            }
        }
        -v[jstar].arg()
    };
    let rot = Complex::from_polar(1.0, psi);
    let w = v.map(|z| z * rot);
    let mut x = w.map(|z| z.re);
    let mut y = w.map(|z| z.im);
    if x.norm() < y.norm() {
        // Quarter turn swaps the roles: e^{i pi/2} (x + i y) = -y + i x.
        let tmp = x.clone();
        x = -y;
        y = tmp;
    }
    let scale = x.amax();
    for &entry in x.iter() {
        if entry.abs() > 1e-8 * scale {
            if entry < 0.0 {
                x = -x;
                y = -y;
            }
            break;
        }
    }
    (x, y)
}

/// Whether `phi/pi` admits a small rational approximation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgumentClass {
    /// `phi ~= (p/q) pi` with `gcd(p, q) = 1`, `1 <= p < q <= qmax`.
    RationalModPi { p: u64, q: u64 },
    Irrational,
}

/// Continued-fraction scan of `phi/pi`: returns the smallest-denominator
/// convergent `p/q <= qmax` within `tol_arg`, else `Irrational`.
pub fn classify_argument(phi: f64, qmax: u64, tol_arg: f64) -> Result<ArgumentClass, LinalgError> {
    if !(phi > 0.0 && phi < std::f64::consts::PI) {
        return Err(LinalgError::ArgumentOutOfRange(phi));
    }
    let t = phi / std::f64::consts::PI;
    // Convergents of the continued fraction of t.
    let (mut p_prev, mut q_prev): (u64, u64) = (0, 1);
    let (mut p_cur, mut q_cur): (u64, u64) = (1, 0);
    let mut frac = t;
    for _ in 0..64 {
        let a = frac.floor();
        if a > u64::MAX as f64 {
            break;
        }
        let a_int = a as u64;
        let p_next = match a_int
            .checked_mul(p_cur)
            .and_then(|v| v.checked_add(p_prev))
        {
            Some(v) => v,
            None => break,
        };
        let q_next = match a_int
            .checked_mul(q_cur)
            .and_then(|v| v.checked_add(q_prev))
        {
            Some(v) => v,
            None => break,
        };
        if q_next > qmax {
            break;
        }
        p_prev = p_cur;
        q_prev = q_cur;
        p_cur = p_next;
        q_cur = q_next;
        // p = 0 and p = q cannot arise from phi inside (0, pi).
        if p_cur >= 1 && p_cur < q_cur && (t - p_cur as f64 / q_cur as f64).abs() <= tol_arg {
            return Ok(ArgumentClass::RationalModPi { p: p_cur, q: q_cur });
        }
        let rem = frac - a;
        if rem.abs() < 1e-18 {
            break;
        }
        frac = 1.0 / rem;
    }
    Ok(ArgumentClass::Irrational)
}
