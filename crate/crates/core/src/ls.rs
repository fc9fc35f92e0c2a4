//! Least-squares pose pipeline.
//!
//! The rotation is parameterized by CGR, which makes every residual a
//! rational function. A relaxation in `(rho, alpha, beta, gamma)` with
//! `rho = 1/sqrt(1 + s.s)`, `alpha = rho s1`, ... turns the cost into a
//! quartic polynomial whose stationary points are solved exactly; each
//! stationary point is mapped back to `(s, t)` and refined with
//! Newton-Raphson on the cleared first-order conditions of the exact
//! rational cost. All converged local minimizers are returned, sorted by
//! cost, so callers can disambiguate near-ambiguous configurations with a
//! prior instead of trusting the global minimum.

use crate::cgr::CgrVector;
use crate::error::{Error, Result};
use crate::geom::{rotation_error_deg, CorrespondenceSet, Pose, Vec3};
use crate::polysys::{solve_cubic_stationarity, CubicSystem4};
use nalgebra::{DMatrix, Matrix6, SMatrix, SVector, Vector4, Vector6};

/// Monomials of the relaxed residual over `xi = (rho, alpha, beta, gamma)`,
/// stored as exponent tuples. Column order of the stacked `A` matrix:
/// `[a^2, ab, ag, a rho, b^2, bg, b rho, g^2, g rho, rho^2, 1]`.
const U_MONOMIALS: [[u8; 4]; 11] = [
    [0, 2, 0, 0], [0, 1, 1, 0], [0, 1, 0, 1], [1, 1, 0, 0],
    [0, 0, 2, 0], [0, 0, 1, 1], [1, 0, 1, 0], [0, 0, 0, 2],
    [1, 0, 0, 1], [2, 0, 0, 0], [0, 0, 0, 0],
];

/// Monomials of the rational residual numerator over
/// `(s1, s2, s3, t1, t2, t3)`.
const V_MONOMIALS: [[u8; 6]; 22] = [
    [2, 0, 0, 1, 0, 0], [2, 0, 0, 0, 1, 0], [2, 0, 0, 0, 0, 1], [2, 0, 0, 0, 0, 0],
    [1, 1, 0, 0, 0, 0], [1, 0, 1, 0, 0, 0], [1, 0, 0, 0, 0, 0],
    [0, 2, 0, 1, 0, 0], [0, 2, 0, 0, 1, 0], [0, 2, 0, 0, 0, 1], [0, 2, 0, 0, 0, 0],
    [0, 1, 1, 0, 0, 0], [0, 1, 0, 0, 0, 0],
    [0, 0, 2, 1, 0, 0], [0, 0, 2, 0, 1, 0], [0, 0, 2, 0, 0, 1], [0, 0, 2, 0, 0, 0],
    [0, 0, 1, 0, 0, 0],
    [0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0], [0, 0, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 0],
];

pub const NEWTON_MAX_ITERS: usize = 50;
/// Gradient tolerance factor; scaled by the cost magnitude of the instance.
pub const NEWTON_TOL_FACTOR: f64 = 1e-10;
/// A candidate within this cost factor of the minimum may win on prior
/// distance.
pub const PRIOR_COST_FACTOR: f64 = 1.05;
/// Absolute slack added to the factor rule so exact-fit candidates (cost at
/// the floating-point floor) still count as ties.
const PRIOR_COST_SLACK: f64 = 1e-12;
/// Weight of the translation gap (per meter) against rotation degrees in
/// the prior distance.
const PRIOR_TRANSLATION_WEIGHT: f64 = 1.0;
const MERGE_COST_REL: f64 = 1e-8;
const MERGE_POSE_DIST: f64 = 1e-6;
const MIN_RHO: f64 = 1e-9;
const CONDITION_LIMIT: f64 = 1e12;

/// Stacked linear system of relaxed residuals: `A u + B t`.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Translation-eliminated quartic cost `u' Q u` with the reduced residual
/// matrix `C = A - B (B'B)^-1 B'A`.
#[derive(Debug, Clone)]
pub struct QuarticCost {
    pub q: SMatrix<f64, 11, 11>,
    pub c: DMatrix<f64>,
}

/// Relaxed monomial vector at `xi`.
pub fn u_vector(xi: &Vector4<f64>) -> SVector<f64, 11> {
    SVector::from_fn(|i, _| {
        let mut m = 1.0;
        for (x, &e) in xi.iter().zip(U_MONOMIALS[i].iter()) {
            for _ in 0..e {
                m *= x;
            }
        }
        m
    })
}

/// The `xi` corresponding to a CGR vector: `rho = 1/sqrt(1+s.s)` and
/// `(alpha, beta, gamma) = rho s`.
pub fn xi_from_cgr(s: &CgrVector) -> Vector4<f64> {
    let rho = 1.0 / (1.0 + s.0.norm_squared()).sqrt();
    Vector4::new(rho, rho * s.0[0], rho * s.0[1], rho * s.0[2])
}

/// Builds the stacked system over the relaxed unknowns.
///
/// Requires at least 7 effective constraints and an observable translation
/// (`rank B = 3`).
pub fn build_stacked(corrs: &CorrespondenceSet) -> Result<StackedSystem> {
    let n = corrs.effective_count();
    if n < 7 {
        return Err(Error::InsufficientCorrespondences { needed: 7, got: n });
    }
    let rows = corrs.general_rows();
    let mut a = DMatrix::zeros(rows.len(), 11);
    let mut b = DMatrix::zeros(rows.len(), 3);
    for (r, row) in rows.iter().enumerate() {
        let ab = row.a.dot(&row.b);
        let bxa = row.b.cross(&row.a);
        let (a1, a2, a3) = (row.a[0], row.a[1], row.a[2]);
        let (b1, b2, b3) = (row.b[0], row.b[1], row.b[2]);
        a[(r, 0)] = 2.0 * a1 * b1 - ab;
        a[(r, 1)] = 2.0 * (a1 * b2 + a2 * b1);
        a[(r, 2)] = 2.0 * (a1 * b3 + a3 * b1);
        a[(r, 3)] = 2.0 * bxa[0];
        a[(r, 4)] = 2.0 * a2 * b2 - ab;
        a[(r, 5)] = 2.0 * (a2 * b3 + a3 * b2);
        a[(r, 6)] = 2.0 * bxa[1];
        a[(r, 7)] = 2.0 * a3 * b3 - ab;
        a[(r, 8)] = 2.0 * bxa[2];
        a[(r, 9)] = ab;
        a[(r, 10)] = row.c;
        b.row_mut(r).copy_from(&row.a.transpose());
    }
    let svals = b.clone().svd(false, false).singular_values;
    if svals.len() < 3 || svals[2] <= 1e-10 * svals[0] {
        return Err(Error::TranslationDegenerate(
            "correspondence normals span fewer than 3 directions".into(),
        ));
    }
    Ok(StackedSystem { a, b })
}

impl StackedSystem {
    /// Optimal translation for a fixed relaxed monomial vector `u`.
    pub fn translation_for(&self, u: &SVector<f64, 11>) -> Result<Vec3> {
        let btb = self.b.transpose() * &self.b;
        let au = &self.a * DMatrix::from_column_slice(11, 1, u.as_slice());
        let rhs = self.b.transpose() * au;
        let sol = btb
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::TranslationDegenerate("B'B is singular".into()))?;
        Ok(-Vec3::new(sol[(0, 0)], sol[(1, 0)], sol[(2, 0)]))
    }
}

/// Eliminates the translation in closed form, leaving the quartic cost.
pub fn eliminate_translation(sys: &StackedSystem) -> Result<QuarticCost> {
    let btb = sys.b.transpose() * &sys.b;
    let eig = btb
        .clone()
        .try_symmetric_eigen(1e-13, 100)
        .ok_or_else(|| Error::NumericFailure("eigendecomposition of B'B failed".into()))?;
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        return Err(Error::TranslationDegenerate(format!(
            "B'B condition number {:.2e} exceeds {CONDITION_LIMIT:.0e}",
            if min > 0.0 { max / min } else { f64::INFINITY }
        )));
    }
    let bta = sys.b.transpose() * &sys.a;
    let p = btb
        .lu()
        .solve(&bta)
        .ok_or_else(|| Error::TranslationDegenerate("B'B is singular".into()))?;
    let c = &sys.a - &sys.b * p;
    let qd = c.transpose() * &c;
    let mut q = SMatrix::<f64, 11, 11>::zeros();
    for i in 0..11 {
        for j in 0..11 {
            q[(i, j)] = qd[(i, j)];
        }
    }
    // enforce exact symmetry against accumulation order
    q = (q + q.transpose()) * 0.5;
    Ok(QuarticCost { q, c })
}

impl QuarticCost {
    /// Quartic cost value `u(xi)' Q u(xi)`.
    pub fn eval(&self, xi: &Vector4<f64>) -> f64 {
        let u = u_vector(xi);
        (u.transpose() * self.q * u)[(0, 0)]
    }
}

/// Exact partial derivatives of the quartic cost with respect to
/// `(rho, alpha, beta, gamma)`; only degree-3 and degree-1 monomials occur.
pub fn stationarity_system(qc: &QuarticCost) -> CubicSystem4 {
    let mut coeffs = [[0.0; 24]; 4];
    for i in 0..11 {
        for j in 0..11 {
            let w = qc.q[(i, j)];
            if w == 0.0 {
                continue;
            }
            let mut prod = [0u8; 4];
            for v in 0..4 {
                prod[v] = U_MONOMIALS[i][v] + U_MONOMIALS[j][v];
            }
            for var in 0..4 {
                if prod[var] == 0 {
                    continue;
                }
                let mut d = prod;
                d[var] -= 1;
                if let Some(idx) = crate::polysys::monomial_index(&d) {
                    coeffs[var][idx] += w * prod[var] as f64;
                }
            }
        }
    }
    CubicSystem4::new(coeffs)
}

/// Maps a stationarity root back to CGR and translation parameters.
///
/// Roots with `|rho|` below `1e-9` sit at the 180-degree singularity and
/// are rejected.
pub fn recover_pose(xi: &Vector4<f64>, sys: &StackedSystem) -> Result<(CgrVector, Vec3)> {
    let rho = xi[0];
    if rho.abs() <= MIN_RHO {
        return Err(Error::SingularParameterization);
    }
    let s = CgrVector::new(xi[1] / rho, xi[2] / rho, xi[3] / rho);
    let t = sys.translation_for(&u_vector(xi))?;
    Ok((s, t))
}

/// The exact rational cost, reduced to a 22x22 Gramian so evaluation and
/// derivatives are independent of the number of correspondences.
#[derive(Debug, Clone)]
pub struct RationalCost {
    /// numerator coefficient vector per residual row
    pub rows: Vec<SVector<f64, 22>>,
    gram: SMatrix<f64, 22, 22>,
    scale: f64,
}

impl RationalCost {
    pub fn new(corrs: &CorrespondenceSet) -> Self {
        let mut rows = Vec::new();
        let mut gram = SMatrix::<f64, 22, 22>::zeros();
        for row in corrs.general_rows() {
            let ab = row.a.dot(&row.b);
            let bxa = row.b.cross(&row.a);
            let (a1, a2, a3) = (row.a[0], row.a[1], row.a[2]);
            let (b1, b2, b3) = (row.b[0], row.b[1], row.b[2]);
            let c = row.c;
            let k = SVector::<f64, 22>::from_row_slice(&[
                a1, a2, a3,
                2.0 * a1 * b1 - ab + c,
                2.0 * (a1 * b2 + a2 * b1),
                2.0 * (a1 * b3 + a3 * b1),
                2.0 * bxa[0],
                a1, a2, a3,
                2.0 * a2 * b2 - ab + c,
                2.0 * (a2 * b3 + a3 * b2),
                2.0 * bxa[1],
                a1, a2, a3,
                2.0 * a3 * b3 - ab + c,
                2.0 * bxa[2],
                a1, a2, a3,
                ab + c,
            ]);
            gram += k * k.transpose();
            rows.push(k);
        }
        let scale = gram.trace();
        Self { rows, gram, scale }
    }

    /// Gradient tolerance for this instance.
    pub fn newton_tolerance(&self) -> f64 {
        NEWTON_TOL_FACTOR * (1.0 + self.scale)
    }

    fn v_values(s: &Vec3, t: &Vec3) -> SVector<f64, 22> {
        let x = [s[0], s[1], s[2], t[0], t[1], t[2]];
        SVector::from_fn(|i, _| {
            let mut m = 1.0;
            for (v, &e) in x.iter().zip(V_MONOMIALS[i].iter()) {
                for _ in 0..e {
                    m *= v;
                }
            }
            m
        })
    }

    /// Numerator polynomial of the rational cost.
    pub fn cbar(&self, s: &Vec3, t: &Vec3) -> f64 {
        let v = Self::v_values(s, t);
        (v.transpose() * self.gram * v)[(0, 0)]
    }

    /// Exact cost `cbar / (1 + s.s)^2`.
    pub fn cost(&self, s: &Vec3, t: &Vec3) -> f64 {
        let d = 1.0 + s.norm_squared();
        self.cbar(s, t) / (d * d)
    }

    /// Numerator value of a single residual row.
    pub fn row_numerator(&self, idx: usize, s: &Vec3, t: &Vec3) -> f64 {
        self.rows[idx].dot(&Self::v_values(s, t))
    }

    /// `cbar` with its gradient and Hessian over `(s1, s2, s3, t1, t2, t3)`.
    fn cbar_derivatives(&self, s: &Vec3, t: &Vec3) -> (f64, Vector6<f64>, Matrix6<f64>) {
        let x = [s[0], s[1], s[2], t[0], t[1], t[2]];
        let v = Self::v_values(s, t);
        let kv = self.gram * v;
        let cbar = v.dot(&kv);

        // jacobian of v: D[i][var]
        let mut d = SMatrix::<f64, 22, 6>::zeros();
        for (i, exps) in V_MONOMIALS.iter().enumerate() {
            for (var, &e) in exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut val = e as f64;
                for (w, &we) in exps.iter().enumerate() {
                    let p = if w == var { we - 1 } else { we };
                    for _ in 0..p {
                        val *= x[w];
                    }
                }
                d[(i, var)] = val;
            }
        }
        let kd = self.gram * d;
        let grad = 2.0 * d.transpose() * kv;
        let mut hess = 2.0 * d.transpose() * kd;
        // second-derivative terms: sum_k kv[k] * Hess(v_k)
        for (i, exps) in V_MONOMIALS.iter().enumerate() {
            let w = 2.0 * kv[i];
            if w == 0.0 {
                continue;
            }
            for p in 0..6 {
                if exps[p] == 0 {
                    continue;
                }
                for q in p..6 {
                    if exps[q] == 0 || (p == q && exps[p] < 2) {
                        continue;
                    }
                    let mut val = if p == q {
                        (exps[p] * (exps[p] - 1)) as f64
                    } else {
                        (exps[p] * exps[q]) as f64
                    };
                    for (w_i, &e) in exps.iter().enumerate() {
                        let mut r = e;
                        if w_i == p {
                            r -= 1;
                        }
                        if w_i == q {
                            r -= 1;
                        }
                        for _ in 0..r {
                            val *= x[w_i];
                        }
                    }
                    hess[(p, q)] += w * val;
                    if p != q {
                        hess[(q, p)] += w * val;
                    }
                }
            }
        }
        (cbar, grad, hess)
    }

    /// Denominator-cleared first-order conditions and their Jacobian.
    ///
    /// `gbar_s = (1 + s.s) d(cbar)/ds - 4 s cbar`, `gbar_t = d(cbar)/dt`.
    pub fn cleared_system(&self, s: &Vec3, t: &Vec3) -> (Vector6<f64>, Matrix6<f64>) {
        let (cbar, g, h) = self.cbar_derivatives(s, t);
        let one = 1.0 + s.norm_squared();
        let mut gbar = Vector6::zeros();
        for i in 0..3 {
            gbar[i] = one * g[i] - 4.0 * s[i] * cbar;
            gbar[3 + i] = g[3 + i];
        }
        let mut jac = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                jac[(i, j)] =
                    2.0 * s[j] * g[i] + one * h[(i, j)] - 4.0 * delta * cbar - 4.0 * s[i] * g[j];
                jac[(3 + i, j)] = h[(3 + i, j)];
            }
            for j in 0..3 {
                jac[(i, 3 + j)] = one * h[(i, 3 + j)] - 4.0 * s[i] * g[3 + j];
                jac[(3 + i, 3 + j)] = h[(3 + i, 3 + j)];
            }
        }
        (gbar, jac)
    }

    /// Cleared gradient only.
    pub fn cleared_gradient(&self, s: &Vec3, t: &Vec3) -> Vector6<f64> {
        self.cleared_system(s, t).0
    }
}

/// A refined stationary point of the exact cost.
#[derive(Debug, Clone)]
pub struct SolutionCandidate {
    pub pose: Pose,
    /// exact rational cost at the pose
    pub cost: f64,
    /// max-norm of the cleared first-order conditions
    pub grad_norm: f64,
    pub converged: bool,
    pub newton_iters: usize,
    /// descent was monotone over the final iterations
    pub minimizer: bool,
    /// marked by the prior-aware selection rule
    pub selected: bool,
}

impl SolutionCandidate {
    fn from_state(s: &Vec3, t: &Vec3, rc: &RationalCost, converged: bool, iters: usize, minimizer: bool) -> Self {
        let pose = Pose::new_unchecked(CgrVector(*s).to_rotation(), *t);
        Self {
            pose,
            cost: rc.cost(s, t),
            grad_norm: rc.cleared_gradient(s, t).amax(),
            converged,
            newton_iters: iters,
            minimizer,
            selected: false,
        }
    }
}

/// Newton-Raphson refinement of `(s, t)` on the cleared first-order
/// conditions of the exact cost.
///
/// Stops when the cleared gradient max-norm drops below `tol` or after
/// `max_iters` iterations; a singular Jacobian returns the best iterate
/// seen, flagged unconverged.
pub fn newton_refine(
    s0: &CgrVector,
    t0: &Vec3,
    rc: &RationalCost,
    max_iters: usize,
    tol: f64,
) -> SolutionCandidate {
    let mut s = s0.0;
    let mut t = *t0;
    let mut best = (s, t, rc.cleared_gradient(&s, &t).amax());
    let mut costs = vec![rc.cost(&s, &t)];
    let mut iters = 0;
    let mut converged = best.2 <= tol;

    while !converged && iters < max_iters {
        let (gbar, jac) = rc.cleared_system(&s, &t);
        let step = match jac.lu().solve(&gbar) {
            Some(st) => st,
            None => break,
        };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        for i in 0..3 {
            s[i] -= step[i];
            t[i] -= step[3 + i];
        }
        iters += 1;
        costs.push(rc.cost(&s, &t));
        let g = rc.cleared_gradient(&s, &t).amax();
        if g < best.2 {
            best = (s, t, g);
        }
        if g <= tol {
            converged = true;
        } else if step.amax() <= 1e-15 * (1.0 + s.amax().max(t.amax())) {
            // stalled at the floating-point floor
            converged = best.2 <= tol;
            break;
        }
    }

    // monotone descent over the tail marks a minimizer
    let tail = costs.len().saturating_sub(3);
    let minimizer = costs[tail..]
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));

    let (s, t, _) = best;
    SolutionCandidate::from_state(&s, &t, rc, converged, iters, minimizer)
}

/// Distance used for prior-based selection: relative rotation angle in
/// degrees plus a weighted translation gap.
pub fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    rotation_error_deg(&a.rotation, &b.rotation)
        + PRIOR_TRANSLATION_WEIGHT * (a.translation - b.translation).norm()
}

fn max_entry_distance(a: &Pose, b: &Pose) -> f64 {
    let dr = (a.rotation - b.rotation).amax();
    let dt = (a.translation - b.translation).amax();
    dr.max(dt)
}

fn lexicographic_pose(a: &Pose, b: &Pose) -> std::cmp::Ordering {
    for i in 0..3 {
        for j in 0..3 {
            match a.rotation[(i, j)].partial_cmp(&b.rotation[(i, j)]) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
    }
    for i in 0..3 {
        match a.translation[i].partial_cmp(&b.translation[i]) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// How many leading candidates downstream consumers should retain when
/// truncating: ambiguity admits two exact poses for mixed or line-bearing
/// sets and three for plane-only sets.
pub fn min_candidates_to_keep(corrs: &CorrespondenceSet) -> usize {
    if corrs.lines.is_empty() && corrs.points.is_empty() && !corrs.planes.is_empty() {
        3
    } else {
        2
    }
}

/// Full least-squares pipeline: relax, solve the stationarity system,
/// refine every root on the exact cost, and return all converged local
/// minimizers sorted by cost.
///
/// With a prior, a candidate within [`PRIOR_COST_FACTOR`] of the best cost
/// that is strictly closer to the prior is marked selected; otherwise the
/// minimum-cost candidate is.
pub fn solve_least_squares(
    corrs: &CorrespondenceSet,
    prior: Option<&Pose>,
) -> Result<Vec<SolutionCandidate>> {
    let sys = build_stacked(corrs)?;
    let qc = eliminate_translation(&sys)?;
    let stat = stationarity_system(&qc);
    let roots = solve_cubic_stationarity(&stat)?;
    let rc = RationalCost::new(corrs);
    let tol = rc.newton_tolerance();

    let mut candidates: Vec<SolutionCandidate> = Vec::new();
    for xi in &roots {
        let (s0, t0) = match recover_pose(xi, &sys) {
            Ok(st) => st,
            Err(_) => continue, // near the 180-degree singularity
        };
        let cand = newton_refine(&s0, &t0, &rc, NEWTON_MAX_ITERS, tol);
        if cand.converged && cand.minimizer {
            candidates.push(cand);
        }
    }
    if candidates.is_empty() {
        return Err(Error::SolverFailure);
    }

    candidates.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| lexicographic_pose(&a.pose, &b.pose))
    });
    // merge duplicated roots (the +-xi pair collapses here too)
    let mut merged: Vec<SolutionCandidate> = Vec::new();
    for cand in candidates {
        let dup = merged.iter().any(|m| {
            (cand.cost - m.cost).abs() <= MERGE_COST_REL * (1.0 + m.cost)
                && max_entry_distance(&cand.pose, &m.pose) <= MERGE_POSE_DIST
        });
        if !dup {
            merged.push(cand);
        }
    }

    if let Some(p) = prior {
        merged.sort_by(|a, b| {
            a.cost
                .partial_cmp(&b.cost)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    pose_distance(&a.pose, p)
                        .partial_cmp(&pose_distance(&b.pose, p))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
    }

    let selected = match prior {
        None => 0,
        Some(p) => {
            let bound = merged[0].cost * PRIOR_COST_FACTOR + PRIOR_COST_SLACK;
            merged
                .iter()
                .enumerate()
                .filter(|(_, c)| c.cost <= bound)
                .min_by(|(_, a), (_, b)| {
                    pose_distance(&a.pose, p)
                        .partial_cmp(&pose_distance(&b.pose, p))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|(i, _)| i)
                .unwrap_or(0)
        }
    };
    merged[selected].selected = true;
    Ok(merged)
}
