//! Linear-programming membership oracles for convex bodies spanned by points
//! and ellipses.
//!
//! The central question everywhere in the crate is: given a body
//! `G = co{±v_1, ..., ±v_l}` (or its monotone analogue), how far inside `G`
//! does a candidate sit? We solve
//!
//! ```text
//! maximize t0  s.t.  t0 v = sum_i t_i v_i,  -s_i <= t_i <= s_i,  sum_i s_i <= 1
//! ```
//!
//! whose optimum is `t0 = 1 / ||v||_G` (the reciprocal Minkowski norm), so the
//! candidate is strictly interior iff `t0 > 1 + delta`.
//!
//! Bodies spanned by ellipses are handled by a sound polygonal reduction:
//! generator ellipses are replaced by inscribed regular M-gons (shrinking the
//! hull) and the candidate ellipse by a circumscribed M-gon (growing the
//! candidate), so a verdict of "interior" is always trustworthy while "not
//! interior" may be conservative. A sharp (cutting-plane) evaluator is
//! provided separately for a-posteriori certificates that need tight norms.
//!
//! The solver is a dense two-phase revised simplex written for determinism:
//! fixed pivot rules with index tie-breaks, a Bland fallback against cycling,
//! and one step of iterative refinement on the final basis.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeasibilityError {
    #[error("linear program dimensions are inconsistent")]
    BadProblem,
    #[error("simplex failed to make progress (numerical breakdown)")]
    NumericBreakdown,
    #[error("candidate and generators must share one dimension")]
    DimensionMismatch,
    #[error("facet count must be even and at least 8, got {0}")]
    BadFacetCount(usize),
    #[error("no generators supplied")]
    EmptyHull,
}

// ---------------------------------------------------------------------------
// LP solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpCmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub cmp: LpCmp,
    pub rhs: f64,
}

/// `maximize c.x  s.t. rows, x >= 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub maximize: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

const FEAS_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

struct Simplex {
    m: usize,
    /// Column-major constraint matrix including slacks and artificials.
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Objective over all columns (phase 2).
    obj: Vec<f64>,
    n_structural: usize,
    artificial_start: usize,
    basis: Vec<usize>,
    /// Dense inverse of the current basis matrix.
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
}

impl Simplex {
    fn new(p: &LpProblem) -> Result<Self, FeasibilityError> {
        let n = p.maximize.len();
        let m = p.rows.len();
        if m == 0 || p.rows.iter().any(|r| r.coeffs.len() != n) {
            return Err(FeasibilityError::BadProblem);
        }

        // Row equilibration, flipping rows to make b >= 0.
        let mut rows = Vec::with_capacity(m);
        for r in &p.rows {
            let scale = r
                .coeffs
                .iter()
                .chain(std::iter::once(&r.rhs))
                .fold(0.0_f64, |a, &x| a.max(x.abs()));
            let s = if scale > 0.0 { 1.0 / scale } else { 1.0 };
            let mut coeffs: Vec<f64> = r.coeffs.iter().map(|&c| c * s).collect();
            let mut rhs = r.rhs * s;
            let mut cmp = r.cmp;
            if rhs < 0.0 {
                rhs = -rhs;
                for c in coeffs.iter_mut() {
                    *c = -*c;
                }
                cmp = match cmp {
                    LpCmp::Le => LpCmp::Ge,
                    LpCmp::Ge => LpCmp::Le,
                    LpCmp::Eq => LpCmp::Eq,
                };
            }
            rows.push((coeffs, cmp, rhs));
        }

        // Columns: structural | slack/surplus | artificial.
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..n {
            cols.push(rows.iter().map(|(c, _, _)| c[j]).collect());
        }
        let mut obj: Vec<f64> = p.maximize.clone();
        let mut basis: Vec<Option<usize>> = vec![None; m];
        for (i, (_, cmp, _)) in rows.iter().enumerate() {
            match cmp {
                LpCmp::Le => {
                    let mut col = vec![0.0; m];
                    col[i] = 1.0;
                    cols.push(col);
                    obj.push(0.0);
                    basis[i] = Some(cols.len() - 1);
                }
                LpCmp::Ge => {
                    let mut col = vec![0.0; m];
                    col[i] = -1.0;
                    cols.push(col);
                    obj.push(0.0);
                }
                LpCmp::Eq => {}
            }
        }
        let artificial_start = cols.len();
        for (i, slot) in basis.iter_mut().enumerate() {
            if slot.is_none() {
                let mut col = vec![0.0; m];
                col[i] = 1.0;
                cols.push(col);
                obj.push(0.0);
                *slot = Some(cols.len() - 1);
            }
        }
        let b: Vec<f64> = rows.iter().map(|(_, _, rhs)| *rhs).collect();
        let basis: Vec<usize> = basis.into_iter().map(|s| s.unwrap()).collect();

        let mut s = Simplex {
            m,
            cols,
            b,
            obj,
            n_structural: n,
            artificial_start,
            basis,
            binv: vec![],
            xb: vec![],
        };
        s.refactorize()?;
        Ok(s)
    }

    fn refactorize(&mut self) -> Result<(), FeasibilityError> {
        // Gauss-Jordan inverse of the basis matrix with partial pivoting.
        let m = self.m;
        let mut aug: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut row: Vec<f64> = (0..m).map(|k| self.cols[self.basis[k]][i]).collect();
                let mut unit = vec![0.0; m];
                unit[i] = 1.0;
                row.extend(unit);
                row
            })
            .collect();
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if aug[r][col].abs() > aug[piv][col].abs() {
                    piv = r;
                }
            }
            if aug[piv][col].abs() < 1e-13 {
                return Err(FeasibilityError::NumericBreakdown);
            }
            aug.swap(col, piv);
            let p = aug[col][col];
            for x in aug[col].iter_mut() {
                *x /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = aug[r][col];
                    if f != 0.0 {
                        for k in 0..2 * m {
                            aug[r][k] -= f * aug[col][k];
                        }
                    }
                }
            }
        }
        self.binv = aug.iter().map(|row| row[m..].to_vec()).collect();
        self.recompute_xb();
        Ok(())
    }

    fn recompute_xb(&mut self) {
        let m = self.m;
        self.xb = (0..m)
            .map(|i| (0..m).map(|k| self.binv[i][k] * self.b[k]).sum())
            .collect();
    }

    /// One step of iterative refinement of x_B against B x_B = b.
    fn refine_xb(&mut self) {
        let m = self.m;
        let mut resid = self.b.clone();
        for (k, &bi) in self.basis.iter().enumerate() {
            let col = &self.cols[bi];
            let x = self.xb[k];
            if x != 0.0 {
                for i in 0..m {
                    resid[i] -= col[i] * x;
                }
            }
        }
        for i in 0..m {
            let corr: f64 = (0..m).map(|k| self.binv[i][k] * resid[k]).sum();
            self.xb[i] += corr;
        }
    }

    fn solve_phase(
        &mut self,
        costs: &[f64],
        allow_enter: impl Fn(usize) -> bool,
    ) -> Result<bool, FeasibilityError> {
        let m = self.m;
        let n_total = self.cols.len();
        let max_iter = 200 * (m + n_total) + 2_000;
        let bland_after = 20 * (m + n_total) + 200;
        let mut since_refactor = 0usize;

        for iter in 0..max_iter {
            let bland = iter >= bland_after;
            // Dual prices y = c_B B^{-1}.
            let mut y = vec![0.0; m];
            for (k, &bi) in self.basis.iter().enumerate() {
                let cb = costs[bi];
                if cb != 0.0 {
                    for i in 0..m {
                        y[i] += cb * self.binv[k][i];
                    }
                }
            }
            // Entering column.
            let mut enter: Option<usize> = None;
            let mut best_rc = RC_TOL;
            for j in 0..n_total {
                if self.basis.contains(&j) || !allow_enter(j) {
                    continue;
                }
                let col = &self.cols[j];
                let mut rc = costs[j];
                for i in 0..m {
                    rc -= y[i] * col[i];
                }
                if rc > if bland { RC_TOL } else { best_rc } {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    best_rc = rc;
                    enter = Some(j);
                }
            }
            let Some(q) = enter else {
                return Ok(true); // optimal for this phase
            };

            // Direction alpha = B^{-1} a_q.
            let aq = &self.cols[q];
            let alpha: Vec<f64> = (0..m)
                .map(|i| (0..m).map(|k| self.binv[i][k] * aq[k]).sum())
                .collect();

            // Ratio test. Basic artificials are pinned at zero: they block
            // (ratio 0) whenever the direction moves them at all, which also
            // drives them out of the basis at the first opportunity.
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..m {
                let is_artificial = self.basis[r] >= self.artificial_start;
                let a = alpha[r];
                let eligible = if is_artificial {
                    a.abs() > PIVOT_TOL
                } else {
                    a > PIVOT_TOL
                };
                if !eligible {
                    continue;
                }
                let ratio = if is_artificial {
                    (self.xb[r].max(0.0)) / a.abs()
                } else {
                    (self.xb[r].max(0.0)) / a
                };
                if ratio < best_ratio - 1e-12
                    || (ratio < best_ratio + 1e-12
                        && leave.is_some_and(|lr| self.basis[r] < self.basis[lr]))
                {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
            let Some(r) = leave else {
                return Ok(false); // unbounded direction
            };

            // Pivot: update basis and B^{-1}.
            if alpha[r].abs() < PIVOT_TOL {
                return Err(FeasibilityError::NumericBreakdown);
            }
            self.basis[r] = q;
            let piv = alpha[r];
            let row_r: Vec<f64> = self.binv[r].iter().map(|&x| x / piv).collect();
            for i in 0..m {
                if i != r {
                    let f = alpha[i];
                    if f != 0.0 {
                        for k in 0..m {
                            self.binv[i][k] -= f * row_r[k];
                        }
                    }
                }
            }
            self.binv[r] = row_r;
            since_refactor += 1;
            if since_refactor >= 150 {
                self.refactorize()?;
                since_refactor = 0;
            } else {
                self.recompute_xb();
            }
            for x in self.xb.iter_mut() {
                if *x < 0.0 && *x > -FEAS_TOL {
                    *x = 0.0;
                }
            }
        }
        Err(FeasibilityError::NumericBreakdown)
    }
}

pub fn lp_solve(p: &LpProblem) -> Result<LpOutcome, FeasibilityError> {
    let mut s = Simplex::new(p)?;
    let n_total = s.cols.len();

    // Phase 1: maximize -(sum of artificials).
    if s.artificial_start < n_total {
        let mut phase1 = vec![0.0; n_total];
        for c in phase1.iter_mut().skip(s.artificial_start) {
            *c = -1.0;
        }
        let finished = s.solve_phase(&phase1, |_| true)?;
        if !finished {
            return Err(FeasibilityError::NumericBreakdown);
        }
        let infeas: f64 = s
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &bi)| bi >= s.artificial_start)
            .map(|(k, _)| s.xb[k].max(0.0))
            .sum();
        if infeas > 1e-7 {
            return Ok(LpOutcome::Infeasible);
        }
    }

    // Phase 2 on the real objective; artificials may never re-enter.
    let costs = s.obj.clone();
    let art_start = s.artificial_start;
    let finished = s.solve_phase(&costs, |j| j < art_start)?;
    if !finished {
        return Ok(LpOutcome::Unbounded);
    }

    s.refine_xb();
    let mut x = vec![0.0; s.n_structural];
    let mut value = 0.0;
    for (k, &bi) in s.basis.iter().enumerate() {
        let xv = s.xb[k].max(0.0);
        value += costs[bi] * xv;
        if bi < s.n_structural {
            x[bi] = xv;
        }
    }
    Ok(LpOutcome::Optimal { value, x })
}

// ---------------------------------------------------------------------------
// Membership oracles
// ---------------------------------------------------------------------------

/// Result of a membership test against a convex body.
#[derive(Debug, Clone, Copy)]
pub struct MembershipVerdict {
    /// Largest `t0` with `t0 * candidate` inside the body (`1/||v||_G`).
    pub t0: f64,
    /// `t0 > 1 + delta`.
    pub interior: bool,
    /// `t0 - (1 + delta)`.
    pub margin: f64,
}

fn verdict(t0: f64, delta: f64) -> MembershipVerdict {
    MembershipVerdict {
        t0,
        interior: t0 > 1.0 + delta,
        margin: t0 - (1.0 + delta),
    }
}

/// An ellipse `{cos(t) x + sin(t) y}` given by a pair of axis generators.
/// Degenerate pairs (parallel `x`, `y`) describe segments.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsePair {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl EllipsePair {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        EllipsePair { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Point `cos(theta) x + sin(theta) y`.
    pub fn point(&self, theta: f64) -> DVector<f64> {
        &self.x * theta.cos() + &self.y * theta.sin()
    }

    /// Rank-2 shape matrix `x x^T + y y^T` characterises the ellipse up to
    /// parameter rotation; used for equality tests.
    pub fn shape_distance(&self, other: &EllipsePair) -> f64 {
        let d = self.dim();
        let mut num = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let a = self.x[i] * self.x[j] + self.y[i] * self.y[j];
                let b = other.x[i] * other.x[j] + other.y[i] * other.y[j];
                num += (a - b) * (a - b);
                den = den.max(a.abs()).max(b.abs());
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            num.sqrt() / den
        }
    }

    /// Whether the pair spans a segment rather than a genuine ellipse, and the
    /// segment endpoint if so.
    pub fn segment_endpoint(&self) -> Option<DVector<f64>> {
        let nx = self.x.norm();
        let ny = self.y.norm();
        let scale = nx.max(ny);
        if scale == 0.0 {
            return Some(DVector::zeros(self.dim()));
        }
        // Largest singular value direction of [x y]: the pair is degenerate
        // iff the second singular value vanishes.
        let g11 = self.x.dot(&self.x);
        let g22 = self.y.dot(&self.y);
        let g12 = self.x.dot(&self.y);
        let tr = g11 + g22;
        let det = g11 * g22 - g12 * g12;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let s2 = ((tr - disc) / 2.0).max(0.0);
        if s2.sqrt() > 1e-10 * scale {
            return None;
        }
        // max_theta |cos(theta) x + sin(theta) y| attained along the leading
        // direction with amplitude sqrt of the leading Gram eigenvalue.
        let s1 = (tr + disc) / 2.0;
        let amp = s1.sqrt();
        // Unit direction: pick the longer of x, y projected.
        let dir = if nx >= ny { &self.x / nx } else { &self.y / ny };
        Some(dir * amp)
    }
}

/// Generators of a convex body: symmetric closure is implicit (the LP signs
/// coefficients), so each point or ellipse represents `{g, -g}`.
#[derive(Debug, Clone)]
pub enum HullGen {
    Point(DVector<f64>),
    Ellipse(EllipsePair),
}

impl HullGen {
    pub fn dim(&self) -> usize {
        match self {
            HullGen::Point(v) => v.len(),
            HullGen::Ellipse(e) => e.dim(),
        }
    }
}

/// Inscribed polygon points for one ellipse: `M/2` parameter samples (the
/// other half are the implicit negatives).
pub fn inscribed_points(e: &EllipsePair, facets_m: usize) -> Vec<DVector<f64>> {
    let half = facets_m / 2;
    (0..half)
        .map(|j| e.point(std::f64::consts::PI * j as f64 / half as f64))
        .collect()
}

/// Circumscribed polygon points for one ellipse: parameter samples scaled by
/// `1/cos(pi/M)`, offset by half a step so the polygon edges are tangent.
pub fn circumscribed_points(e: &EllipsePair, facets_m: usize) -> Vec<DVector<f64>> {
    let half = facets_m / 2;
    let scale = 1.0 / (std::f64::consts::PI / facets_m as f64).cos();
    (0..half)
        .map(|j| {
            let theta = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / facets_m as f64;
            e.point(theta) * scale
        })
        .collect()
}

fn check_facets(facets_m: usize) -> Result<(), FeasibilityError> {
    if facets_m < 8 || facets_m % 2 != 0 {
        return Err(FeasibilityError::BadFacetCount(facets_m));
    }
    Ok(())
}

/// Point membership against `co{±v_1, ..., ±v_l}` via the scaling LP. The
/// free coefficients `t_i` are split into nonnegative parts; an infeasible LP
/// (candidate outside the span) maps to `t0 = 0`.
pub fn point_in_hull(
    v: &DVector<f64>,
    vertices: &[DVector<f64>],
    delta: f64,
) -> Result<MembershipVerdict, FeasibilityError> {
    if vertices.is_empty() {
        return Err(FeasibilityError::EmptyHull);
    }
    let d = v.len();
    if vertices.iter().any(|w| w.len() != d) {
        return Err(FeasibilityError::DimensionMismatch);
    }
    let vnorm = v.norm();
    if vnorm <= 1e-14 {
        return Ok(verdict(f64::INFINITY, delta));
    }
    let vh = v / vnorm;
    let l = vertices.len();
    // Columns: t0 | p_1..p_l | q_1..q_l  with t_i = p_i - q_i.
    let n = 1 + 2 * l;
    let mut maximize = vec![0.0; n];
    maximize[0] = 1.0;
    let mut rows = Vec::with_capacity(d + 1);
    for i in 0..d {
        let mut coeffs = vec![0.0; n];
        coeffs[0] = -vh[i];
        for (k, w) in vertices.iter().enumerate() {
            coeffs[1 + k] = w[i];
            coeffs[1 + l + k] = -w[i];
        }
        rows.push(LpRow {
            coeffs,
            cmp: LpCmp::Eq,
            rhs: 0.0,
        });
    }
    let mut budget = vec![1.0; n];
    budget[0] = 0.0;
    rows.push(LpRow {
        coeffs: budget,
        cmp: LpCmp::Le,
        rhs: 1.0,
    });

    match lp_solve(&LpProblem { maximize, rows })? {
        LpOutcome::Optimal { value, .. } => Ok(verdict(value.max(0.0) / vnorm, delta)),
        LpOutcome::Infeasible => Ok(verdict(0.0, delta)),
        LpOutcome::Unbounded => Err(FeasibilityError::NumericBreakdown),
    }
}

/// Expands mixed generators into a point cloud: points pass through, ellipses
/// contribute inscribed M-gon samples (a sound shrink of the hull).
pub fn hull_points(gens: &[HullGen], facets_m: usize) -> Result<Vec<DVector<f64>>, FeasibilityError> {
    check_facets(facets_m)?;
    let mut pts = Vec::new();
    for g in gens {
        match g {
            HullGen::Point(v) => pts.push(v.clone()),
            HullGen::Ellipse(e) => pts.extend(inscribed_points(e, facets_m)),
        }
    }
    Ok(pts)
}

/// Ellipse membership against a hull of point/ellipse generators using the
/// sound polygonal reduction: every circumscribed candidate point must be
/// interior. Early exit on the first non-interior point keeps the common
/// "alive" case cheap; the reported `t0` is the minimum over tested points.
pub fn ellipse_in_point_hull(
    cand: &EllipsePair,
    points: &[DVector<f64>],
    facets_m: usize,
    delta: f64,
) -> Result<MembershipVerdict, FeasibilityError> {
    check_facets(facets_m)?;
    let mut t0 = f64::INFINITY;
    for p in circumscribed_points(cand, facets_m) {
        let v = point_in_hull(&p, points, delta)?;
        t0 = t0.min(v.t0);
        if !v.interior {
            return Ok(verdict(t0, delta));
        }
    }
    Ok(verdict(t0, delta))
}

/// Spec-shaped convenience wrapper: candidate ellipse against a hull of
/// generator ellipses.
pub fn ellipse_in_hull(
    cand: &EllipsePair,
    generators: &[EllipsePair],
    facets_m: usize,
    delta: f64,
) -> Result<MembershipVerdict, FeasibilityError> {
    if generators.is_empty() {
        return Err(FeasibilityError::EmptyHull);
    }
    let gens: Vec<HullGen> = generators
        .iter()
        .map(|e| HullGen::Ellipse(e.clone()))
        .collect();
    let points = hull_points(&gens, facets_m)?;
    ellipse_in_point_hull(cand, &points, facets_m, delta)
}

/// Monotone membership: `t0 v <= sum t_i v_i` entrywise with `t_i >= 0`,
/// `sum t_i <= 1` (majorization hull of nonnegative vertices). Solved in the
/// dual orientation when the dimension dwarfs the vertex count, which keeps
/// the simplex basis small for very large nonnegative systems.
pub fn point_in_monotone_hull(
    v: &DVector<f64>,
    vertices: &[DVector<f64>],
    delta: f64,
) -> Result<MembershipVerdict, FeasibilityError> {
    if vertices.is_empty() {
        return Err(FeasibilityError::EmptyHull);
    }
    let d = v.len();
    if vertices.iter().any(|w| w.len() != d) {
        return Err(FeasibilityError::DimensionMismatch);
    }
    let vnorm = v.norm();
    if vnorm <= 1e-14 {
        return Ok(verdict(f64::INFINITY, delta));
    }
    let vh = v / vnorm;
    let l = vertices.len();
    let t0 = if d <= 2 * l + 8 {
        monotone_primal(&vh, vertices)?
    } else {
        monotone_dual(&vh, vertices)?
    };
    Ok(verdict(t0.max(0.0) / vnorm, delta))
}

fn monotone_primal(
    v: &DVector<f64>,
    vertices: &[DVector<f64>],
) -> Result<f64, FeasibilityError> {
    let d = v.len();
    let l = vertices.len();
    let n = 1 + l;
    let mut maximize = vec![0.0; n];
    maximize[0] = 1.0;
    let mut rows = Vec::with_capacity(d + 1);
    for i in 0..d {
        let mut coeffs = vec![0.0; n];
        coeffs[0] = v[i];
        for (k, w) in vertices.iter().enumerate() {
            coeffs[1 + k] = -w[i];
        }
        rows.push(LpRow {
            coeffs,
            cmp: LpCmp::Le,
            rhs: 0.0,
        });
    }
    let mut budget = vec![1.0; n];
    budget[0] = 0.0;
    rows.push(LpRow {
        coeffs: budget,
        cmp: LpCmp::Le,
        rhs: 1.0,
    });
    match lp_solve(&LpProblem { maximize, rows })? {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Infeasible => Ok(0.0),
        // v = 0 is guarded by the caller, so an unbounded primal cannot arise.
        LpOutcome::Unbounded => Err(FeasibilityError::NumericBreakdown),
    }
}

fn monotone_dual(v: &DVector<f64>, vertices: &[DVector<f64>]) -> Result<f64, FeasibilityError> {
    // min y_last  s.t. <v, y> >= 1, <v_i, y> <= y_last, y >= 0
    // (strong dual of the primal above, l + 1 rows over d + 1 variables).
    let d = v.len();
    let l = vertices.len();
    let n = d + 1;
    let mut maximize = vec![0.0; n];
    maximize[d] = -1.0;
    let mut rows = Vec::with_capacity(l + 1);
    let mut first = vec![0.0; n];
    first[..d].copy_from_slice(v.as_slice());
    rows.push(LpRow {
        coeffs: first,
        cmp: LpCmp::Ge,
        rhs: 1.0,
    });
    for w in vertices {
        let mut coeffs = vec![0.0; n];
        coeffs[..d].copy_from_slice(w.as_slice());
        coeffs[d] = -1.0;
        rows.push(LpRow {
            coeffs,
            cmp: LpCmp::Le,
            rhs: 0.0,
        });
    }
    match lp_solve(&LpProblem { maximize, rows })? {
        LpOutcome::Optimal { value, .. } => Ok(-value),
        // Dual infeasible means the primal is unbounded; guarded v != 0 makes
        // this a sign of a zero-span hull, i.e. not interior.
        LpOutcome::Infeasible => Ok(f64::INFINITY),
        LpOutcome::Unbounded => Ok(0.0),
    }
}

// ---------------------------------------------------------------------------
// Sharp evaluation (cutting planes)
// ---------------------------------------------------------------------------

/// Exact-to-tolerance Minkowski norm `||z||_G` of a point for a symmetric body
/// spanned by points and ellipses, via cutting planes on the dual support
/// problem `max {<z, y> : h_G(y) <= 1}`. Converges from above; the result is
/// within relative 1e-12 of the true norm. Returns `INFINITY` when `z` is
/// outside the span of the body.
pub fn gnorm_sharp(z: &DVector<f64>, gens: &[HullGen]) -> Result<f64, FeasibilityError> {
    if gens.is_empty() {
        return Err(FeasibilityError::EmptyHull);
    }
    let d = z.len();
    if gens.iter().any(|g| g.dim() != d) {
        return Err(FeasibilityError::DimensionMismatch);
    }
    let znorm = z.norm();
    if znorm <= 1e-300 {
        return Ok(0.0);
    }
    let zh = z / znorm;

    let ellipses: Vec<&EllipsePair> = gens
        .iter()
        .filter_map(|g| match g {
            HullGen::Ellipse(e) => Some(e),
            HullGen::Point(_) => None,
        })
        .collect();

    // Fixed cuts: point generators and an initial fan on each ellipse.
    let mut cuts: Vec<DVector<f64>> = Vec::new();
    for g in gens {
        if let HullGen::Point(p) = g {
            cuts.push(p.clone());
        }
    }
    for e in &ellipses {
        cuts.extend(inscribed_points(e, 16));
    }

    const BOX: f64 = 1e9;
    let mut value = f64::INFINITY;
    for _round in 0..200 {
        let t0 = support_lp(&zh, &cuts, BOX)?;
        let Some((y, obj)) = t0 else {
            return Ok(f64::INFINITY); // outside span: unbounded support problem
        };
        if y.amax() >= 0.5 * BOX {
            return Ok(f64::INFINITY);
        }
        value = obj;
        // Most violated tangent cut per ellipse.
        let mut added = false;
        for e in &ellipses {
            let cx = e.x.dot(&y);
            let cy = e.y.dot(&y);
            let r = (cx * cx + cy * cy).sqrt();
            if r > 1.0 + 1e-12 {
                cuts.push((&e.x * cx + &e.y * cy) / r);
                added = true;
            }
        }
        if !added {
            return Ok(value * znorm);
        }
    }
    Ok(value * znorm)
}

/// LP: `max <z, y>` over `|<c_k, y>| <= 1` for all cuts, `|y_j| <= box`.
/// Returns the maximizer and value, or `None` if unbounded.
#[allow(clippy::type_complexity)]
fn support_lp(
    z: &DVector<f64>,
    cuts: &[DVector<f64>],
    boxlim: f64,
) -> Result<Option<(DVector<f64>, f64)>, FeasibilityError> {
    let d = z.len();
    // y = u - w with u, w >= 0.
    let n = 2 * d;
    let mut maximize = vec![0.0; n];
    for j in 0..d {
        maximize[j] = z[j];
        maximize[d + j] = -z[j];
    }
    let mut rows = Vec::with_capacity(2 * cuts.len() + d);
    for c in cuts {
        let mut coeffs = vec![0.0; n];
        for j in 0..d {
            coeffs[j] = c[j];
            coeffs[d + j] = -c[j];
        }
        let neg: Vec<f64> = coeffs.iter().map(|&x| -x).collect();
        rows.push(LpRow {
            coeffs,
            cmp: LpCmp::Le,
            rhs: 1.0,
        });
        rows.push(LpRow {
            coeffs: neg,
            cmp: LpCmp::Le,
            rhs: 1.0,
        });
    }
    for j in 0..d {
        let mut coeffs = vec![0.0; n];
        coeffs[j] = 1.0;
        coeffs[d + j] = 1.0;
        rows.push(LpRow {
            coeffs,
            cmp: LpCmp::Le,
            rhs: boxlim,
        });
    }
    match lp_solve(&LpProblem { maximize, rows })? {
        LpOutcome::Optimal { value, x } => {
            let y = DVector::from_fn(d, |j, _| x[j] - x[d + j]);
            Ok(Some((y, value)))
        }
        LpOutcome::Unbounded => Ok(None),
        LpOutcome::Infeasible => Err(FeasibilityError::NumericBreakdown),
    }
}

/// Sharp membership verdict for a point (reciprocal of `gnorm_sharp`).
pub fn point_in_gen_hull_sharp(
    z: &DVector<f64>,
    gens: &[HullGen],
    delta: f64,
) -> Result<MembershipVerdict, FeasibilityError> {
    let norm = gnorm_sharp(z, gens)?;
    let t0 = if norm == 0.0 {
        f64::INFINITY
    } else if norm.is_infinite() {
        0.0
    } else {
        1.0 / norm
    };
    Ok(verdict(t0, delta))
}
