//! Hidden-variable solver for three quadrics in three unknowns.
//!
//! One unknown is treated as a constant, the remaining two-variable system
//! is homogenized, and three auxiliary determinant equations extend it to a
//! 6x6 linear system over the degree-2 monomials. Its determinant is a
//! degree-8 polynomial in the hidden variable whose real roots index the
//! candidate solutions.

use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::polysys::poly1::{real_roots, Poly1};
use nalgebra::{SMatrix, SVector};

/// Three quadric equations `f_i(s) = k_i . x(s) = 0` stacked as rows, with
/// monomial order `x = [s1^2, s2^2, s3^2, s1s2, s1s3, s2s3, s1, s2, s3, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadricTriple {
    pub k: SMatrix<f64, 3, 10>,
}

/// Relative residual below which a candidate solves a quadric.
const ACCEPT_REL: f64 = 1e-6;
/// Null-space acceptance: smallest singular value relative to the largest.
const NULLSPACE_REL: f64 = 1e-6;
/// Windows of Chebyshev sample nodes tried when expanding the determinant.
const WINDOWS: [f64; 3] = [2.0, 20.0, 200.0];

pub fn x_monomials(s: &Vec3) -> [f64; 10] {
    let (s1, s2, s3) = (s[0], s[1], s[2]);
    [s1 * s1, s2 * s2, s3 * s3, s1 * s2, s1 * s3, s2 * s3, s1, s2, s3, 1.0]
}

impl QuadricTriple {
    pub fn new(k: SMatrix<f64, 3, 10>) -> Self {
        Self { k }
    }

    pub fn from_rows(rows: [[f64; 10]; 3]) -> Self {
        Self { k: SMatrix::from_fn(|r, c| rows[r][c]) }
    }

    pub fn eval(&self, s: &Vec3) -> Vec3 {
        let x = x_monomials(s);
        Vec3::from_fn(|i, _| (0..10).map(|j| self.k[(i, j)] * x[j]).sum())
    }

    pub fn jacobian(&self, s: &Vec3) -> Mat3 {
        let (s1, s2, s3) = (s[0], s[1], s[2]);
        let mut j = Mat3::zeros();
        for i in 0..3 {
            let k = self.k.row(i);
            j[(i, 0)] = 2.0 * k[0] * s1 + k[3] * s2 + k[4] * s3 + k[6];
            j[(i, 1)] = 2.0 * k[1] * s2 + k[3] * s1 + k[5] * s3 + k[7];
            j[(i, 2)] = 2.0 * k[2] * s3 + k[4] * s1 + k[5] * s2 + k[8];
        }
        j
    }

    /// Relative residual magnitude of the worst equation at `s`.
    pub fn rel_residual(&self, s: &Vec3) -> f64 {
        let x = x_monomials(s);
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            let r: f64 = (0..10).map(|j| self.k[(i, j)] * x[j]).sum();
            let scale = 1.0 + self.k.row(i).norm() * xnorm;
            worst = worst.max(r.abs() / scale);
        }
        worst
    }

    /// Scales each equation to unit coefficient norm; the solution set is
    /// unchanged and the determinant construction stays well conditioned.
    fn normalized(&self) -> Option<Self> {
        let mut k = self.k;
        for i in 0..3 {
            let n = k.row(i).norm();
            if !(n > 0.0) || !n.is_finite() {
                return None;
            }
            for j in 0..10 {
                k[(i, j)] /= n;
            }
        }
        Some(Self { k })
    }

    /// Replaces the equations by invertible linear combinations of each
    /// other; the solution set is unchanged, but equations of unequal
    /// degree (e.g. a linear row) blend into genuine quadrics.
    fn mix_rows(&self, m: &Mat3) -> Self {
        Self { k: m * self.k }
    }

    /// Replaces exactly-linear rows `f` by `f^2 + f`, giving each such row
    /// its own quadratic part. Genuine solutions are preserved; the extra
    /// component `f = -1` only contributes isolated spurious candidates,
    /// which the residual filter on the original system rejects. Returns
    /// `None` when every row already has quadratic content.
    fn quadratify_linear_rows(&self) -> Option<Self> {
        let mut k = self.k;
        let mut changed = false;
        for i in 0..3 {
            let quad_norm: f64 = (0..6).map(|j| k[(i, j)] * k[(i, j)]).sum::<f64>().sqrt();
            let row_norm = k.row(i).norm();
            if quad_norm > 1e-12 * (1.0 + row_norm) {
                continue;
            }
            changed = true;
            let (l1, l2, l3, l0) = (k[(i, 6)], k[(i, 7)], k[(i, 8)], k[(i, 9)]);
            k[(i, 0)] = l1 * l1;
            k[(i, 1)] = l2 * l2;
            k[(i, 2)] = l3 * l3;
            k[(i, 3)] = 2.0 * l1 * l2;
            k[(i, 4)] = 2.0 * l1 * l3;
            k[(i, 5)] = 2.0 * l2 * l3;
            k[(i, 6)] = 2.0 * l1 * l0 + l1;
            k[(i, 7)] = 2.0 * l2 * l0 + l2;
            k[(i, 8)] = 2.0 * l3 * l0 + l3;
            k[(i, 9)] = l0 * l0 + l0;
        }
        changed.then_some(Self { k })
    }

    /// Rewrites the system under the substitution `s = t * s'` for a
    /// rotation `t`; solutions map back as `s = t * s'`.
    fn change_of_variables(&self, t: &Mat3) -> Self {
        let mut k = SMatrix::<f64, 3, 10>::zeros();
        for i in 0..3 {
            let r = self.k.row(i);
            // f(s) = s' Phi s + phi . s + c with Phi symmetric
            let phi_mat = Mat3::new(
                r[0], r[3] / 2.0, r[4] / 2.0,
                r[3] / 2.0, r[1], r[5] / 2.0,
                r[4] / 2.0, r[5] / 2.0, r[2],
            );
            let phi = Vec3::new(r[6], r[7], r[8]);
            let m = t.transpose() * phi_mat * t;
            let l = t.transpose() * phi;
            k[(i, 0)] = m[(0, 0)];
            k[(i, 1)] = m[(1, 1)];
            k[(i, 2)] = m[(2, 2)];
            k[(i, 3)] = 2.0 * m[(0, 1)];
            k[(i, 4)] = 2.0 * m[(0, 2)];
            k[(i, 5)] = 2.0 * m[(1, 2)];
            k[(i, 6)] = l[0];
            k[(i, 7)] = l[1];
            k[(i, 8)] = l[2];
            k[(i, 9)] = r[9];
        }
        Self { k }
    }

    /// Relabels variables so the requested one takes the hidden slot.
    fn permute_hidden(&self, hidden: usize) -> Self {
        let perm: [usize; 10] = match hidden {
            2 => [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
            // unknowns (s2, s3), hidden s1: (u1,u2,u3) = (s2,s3,s1)
            0 => [1, 2, 0, 5, 3, 4, 7, 8, 6, 9],
            // unknowns (s3, s1), hidden s2: (u1,u2,u3) = (s3,s1,s2)
            1 => [2, 0, 1, 4, 5, 3, 8, 6, 7, 9],
            _ => unreachable!(),
        };
        let mut k = SMatrix::<f64, 3, 10>::zeros();
        for i in 0..3 {
            for (new, &old) in perm.iter().enumerate() {
                k[(i, new)] = self.k[(i, old)];
            }
        }
        Self { k }
    }
}

fn unpermute(hidden: usize, u: Vec3) -> Vec3 {
    match hidden {
        2 => u,
        0 => Vec3::new(u[2], u[0], u[1]),
        1 => Vec3::new(u[1], u[2], u[0]),
        _ => unreachable!(),
    }
}

/// Linear form over `(1, s0, s1, s2)`.
type Lin = [f64; 4];

/// Product of two linear forms as coefficients over
/// `[1, s0, s1, s2, s0^2, s1^2, s2^2, s0s1, s0s2, s1s2]`.
fn mul_lin(a: &Lin, b: &Lin) -> [f64; 10] {
    let mut out = [0.0; 10];
    const MAP: [[usize; 4]; 4] = [
        [0, 1, 2, 3],
        [1, 4, 7, 8],
        [2, 7, 5, 9],
        [3, 8, 9, 6],
    ];
    for i in 0..4 {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..4 {
            out[MAP[i][j]] += a[i] * b[j];
        }
    }
    out
}

/// Determinant of a 3x3 matrix of linear forms where column `const_col`
/// holds constants; the result is homogeneous of degree 2, returned over
/// `h = [s0^2, s1^2, s2^2, s0s1, s0s2, s1s2]`.
fn det_linear_rows(rows: &[[Lin; 3]; 3], const_col: usize) -> [f64; 6] {
    const PERMS: [([usize; 3], f64); 6] = [
        ([0, 1, 2], 1.0),
        ([1, 2, 0], 1.0),
        ([2, 0, 1], 1.0),
        ([0, 2, 1], -1.0),
        ([2, 1, 0], -1.0),
        ([1, 0, 2], -1.0),
    ];
    let mut acc = [0.0; 10];
    for (perm, sign) in PERMS {
        let mut lins: [&Lin; 2] = [&[0.0; 4]; 2];
        let mut n = 0;
        let mut cst = 1.0;
        for (r, &c) in perm.iter().enumerate() {
            if c == const_col {
                cst = rows[r][c][0];
            } else {
                lins[n] = &rows[r][c];
                n += 1;
            }
        }
        let q = mul_lin(lins[0], lins[1]);
        for (o, qv) in acc.iter_mut().zip(q) {
            *o += sign * cst * qv;
        }
    }
    [acc[4], acc[5], acc[6], acc[7], acc[8], acc[9]]
}

/// Assembles the 6x6 matrix over `h` at a fixed value of the hidden
/// variable. Rows 0-2 are the homogenized quadrics, rows 3-5 the three
/// grouping determinants.
fn build_resultant_matrix(k: &SMatrix<f64, 3, 10>, s3: f64) -> SMatrix<f64, 6, 6> {
    let mut c = SMatrix::<f64, 6, 6>::zeros();
    let mut p1 = [0.0; 3];
    let mut p2 = [0.0; 3];
    let mut p3 = [0.0; 3];
    for i in 0..3 {
        p1[i] = k[(i, 4)] * s3 + k[(i, 6)];
        p2[i] = k[(i, 5)] * s3 + k[(i, 7)];
        p3[i] = k[(i, 2)] * s3 * s3 + k[(i, 8)] * s3 + k[(i, 9)];
        // F_i over h
        c[(i, 0)] = p3[i];
        c[(i, 1)] = k[(i, 0)];
        c[(i, 2)] = k[(i, 1)];
        c[(i, 3)] = p1[i];
        c[(i, 4)] = p2[i];
        c[(i, 5)] = k[(i, 3)];
    }
    let mut rows_a = [[[0.0; 4]; 3]; 3];
    let mut rows_b = [[[0.0; 4]; 3]; 3];
    let mut rows_c = [[[0.0; 4]; 3]; 3];
    for i in 0..3 {
        let (k1, k2, k4) = (k[(i, 0)], k[(i, 1)], k[(i, 3)]);
        // grouping [s0^2, s1, s2]
        rows_a[i] = [
            [p3[i], 0.0, 0.0, 0.0],
            [0.0, p1[i], k1, k4],
            [0.0, p2[i], 0.0, k2],
        ];
        // grouping [s0, s1^2, s2]
        rows_b[i] = [
            [0.0, p3[i], p1[i], 0.0],
            [k1, 0.0, 0.0, 0.0],
            [0.0, p2[i], k4, k2],
        ];
        // grouping [s0, s1, s2^2]
        rows_c[i] = [
            [0.0, p3[i], 0.0, p2[i]],
            [0.0, p1[i], k1, k4],
            [k2, 0.0, 0.0, 0.0],
        ];
    }
    let det_a = det_linear_rows(&rows_a, 0);
    let det_b = det_linear_rows(&rows_b, 1);
    let det_c = det_linear_rows(&rows_c, 2);
    for j in 0..6 {
        c[(3, j)] = det_a[j];
        c[(4, j)] = det_b[j];
        c[(5, j)] = det_c[j];
    }
    c
}

struct Attempt {
    /// determinant polynomial, when not identically zero
    det: Option<Poly1>,
    /// true when the three leading coefficients are all negligible
    near_degenerate: bool,
    solutions: Vec<Vec3>,
}

/// One full hide-and-expand pass on an already permuted/transformed system.
fn attempt(k: &SMatrix<f64, 3, 10>, window: f64) -> Attempt {
    // sample det C at 9 Chebyshev nodes and interpolate the degree-8 poly
    let mut nodes = [0.0; 9];
    let mut dets = [0.0; 9];
    let mut hadamard: f64 = 0.0;
    for j in 0..9 {
        nodes[j] = window * (std::f64::consts::PI * (2.0 * j as f64 + 1.0) / 18.0).cos();
        let c = build_resultant_matrix(k, nodes[j]);
        dets[j] = c.determinant();
        hadamard = hadamard.max((0..6).map(|r| c.row(r).norm()).product());
    }
    let mut vander = SMatrix::<f64, 9, 9>::zeros();
    for (r, &x) in nodes.iter().enumerate() {
        let mut pow = 1.0;
        for c in 0..9 {
            vander[(r, c)] = pow;
            pow *= x;
        }
    }
    let rhs = SVector::<f64, 9>::from_row_slice(&dets);
    let coeffs = match vander.lu().solve(&rhs) {
        Some(c) => c,
        None => return Attempt { det: None, near_degenerate: true, solutions: vec![] },
    };
    let det_poly = Poly1::new(coeffs.iter().copied().collect());

    let coeff_scale = det_poly.max_coeff();
    if coeff_scale <= 1e-12 * (1.0 + hadamard) {
        // identically zero within the evaluation noise floor
        return Attempt { det: None, near_degenerate: true, solutions: vec![] };
    }
    let near_degenerate = det_poly.coeffs[6..9]
        .iter()
        .all(|c| c.abs() < 1e-10 * coeff_scale);

    let roots = match real_roots(&det_poly, 1e-8) {
        Ok(r) => r,
        Err(_) => return Attempt { det: Some(det_poly), near_degenerate, solutions: vec![] },
    };

    let mut solutions = Vec::new();
    for s3 in roots {
        let c = build_resultant_matrix(k, s3);
        let svd = c.svd(false, true);
        let v_t = match svd.v_t {
            Some(v) => v,
            None => continue,
        };
        let smax = svd.singular_values[0];
        if smax <= 0.0 || svd.singular_values[5] / smax > NULLSPACE_REL {
            continue;
        }
        if svd.singular_values[4] / smax <= NULLSPACE_REL {
            // two-dimensional null space: this root does not isolate a
            // solution; skip it
            continue;
        }
        let h = v_t.row(5);
        // h = [s0^2, s1^2, s2^2, s0s1, s0s2, s1s2] with s0 = 1
        if h[0].abs() <= 1e-9 * h.amax() {
            continue;
        }
        solutions.push(Vec3::new(h[3] / h[0], h[4] / h[0], s3));
    }
    Attempt { det: Some(det_poly), near_degenerate, solutions }
}

fn newton_polish(q: &QuadricTriple, s: Vec3) -> Vec3 {
    let mut best = s;
    let mut best_res = q.rel_residual(&s);
    let mut cur = s;
    for _ in 0..3 {
        let j = q.jacobian(&cur);
        let f = q.eval(&cur);
        let step = match j.lu().solve(&f) {
            Some(d) => d,
            None => break,
        };
        cur -= step;
        let res = q.rel_residual(&cur);
        if res < best_res {
            best_res = res;
            best = cur;
        }
    }
    best
}

fn dedup_and_cap(q: &QuadricTriple, mut sols: Vec<Vec3>) -> Vec<Vec3> {
    sols.sort_by(|a, b| {
        q.rel_residual(a)
            .partial_cmp(&q.rel_residual(b))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<Vec3> = Vec::new();
    for s in sols {
        let dup = out.iter().any(|o| (s - o).amax() <= 1e-6 * (1.0 + s.amax()));
        if !dup {
            out.push(s);
        }
    }
    out.truncate(8);
    out.sort_by(|a, b| {
        (a[0], a[1], a[2])
            .partial_cmp(&(b[0], b[1], b[2]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

/// Solves `f_1 = f_2 = f_3 = 0`, hiding `s3` first; at most 8 solutions.
///
/// When the determinant polynomial degenerates (identically zero or with
/// vanishing leading coefficients) the solver retries hiding `s1`, then
/// `s2`, then repeats under solution-preserving preconditioners: an
/// invertible row mix, a fixed generic rotation of the unknowns, and the
/// squaring of exactly-linear rows. Structurally degenerate inputs
/// (non-finite solution sets) exhaust every attempt and report
/// [`Error::DegenerateSystem`].
pub fn solve_three_quadrics(q: &QuadricTriple) -> Result<Vec<Vec3>> {
    let base = q.normalized().ok_or(Error::DegenerateSystem)?;
    // axis (1,2,3)/sqrt(14), angle 0.7 rad: a fixed generic preconditioner
    let generic = {
        let axis = Vec3::new(1.0, 2.0, 3.0).normalize();
        let (sin, cos) = 0.7f64.sin_cos();
        let skew = Mat3::new(0.0, -axis[2], axis[1], axis[2], 0.0, -axis[0], -axis[1], axis[0], 0.0);
        Mat3::identity() + skew * sin + skew * skew * (1.0 - cos)
    };
    // fixed invertible row mix; lets degree-deficient rows inherit the
    // quadratic monomials of their peers
    let mixer = Mat3::new(2.0, 1.0, -1.0, 1.0, 3.0, 1.0, -1.0, 1.0, 2.0);

    // last-resort variant with exactly-linear rows squared into quadrics
    let quadratified = base.quadratify_linear_rows();

    let mut any_det = false;
    let mut fallback: Option<Vec<Vec3>> = None;
    for stage in 0..8 {
        let start = if stage < 4 {
            base.clone()
        } else {
            match &quadratified {
                Some(qd) => qd.clone(),
                None => break,
            }
        };
        let sys = match stage % 4 {
            0 => start,
            1 => start.mix_rows(&mixer),
            2 => start.change_of_variables(&generic),
            _ => start.change_of_variables(&generic).mix_rows(&mixer),
        };
        let sys = match sys.normalized() {
            Some(s) => s,
            None => continue,
        };
        let transform = if stage % 4 >= 2 { Some(&generic) } else { None };
        for hidden in [2usize, 0, 1] {
            let permuted = sys.permute_hidden(hidden);
            for window in WINDOWS {
                let att = attempt(&permuted.k, window);
                if att.det.is_none() {
                    continue;
                }
                any_det = true;
                let mut accepted = Vec::new();
                for u in att.solutions {
                    let mut s = unpermute(hidden, u);
                    if let Some(t) = transform {
                        s = t * s;
                    }
                    let s = newton_polish(&base, s);
                    if base.rel_residual(&s) <= ACCEPT_REL {
                        accepted.push(s);
                    }
                }
                if !accepted.is_empty() {
                    if att.near_degenerate {
                        // keep as fallback; a cleaner hide may still exist
                        if fallback.is_none() {
                            fallback = Some(accepted);
                        }
                    } else {
                        return Ok(dedup_and_cap(&base, accepted));
                    }
                }
            }
        }
    }
    if let Some(sols) = fallback {
        return Ok(dedup_and_cap(&base, sols));
    }
    if any_det {
        // a valid determinant existed but no real root passed: no
        // recoverable real solutions
        Ok(vec![])
    } else {
        Err(Error::DegenerateSystem)
    }
}

/// Single-pass variant hiding the requested variable (0, 1 or 2) with no
/// retry ladder; lets callers cross-check elimination orders.
pub fn solve_three_quadrics_hiding(q: &QuadricTriple, hidden: usize) -> Result<Vec<Vec3>> {
    assert!(hidden < 3);
    let base = q.normalized().ok_or(Error::DegenerateSystem)?;
    let permuted = base.permute_hidden(hidden);
    let mut any_det = false;
    for window in WINDOWS {
        let att = attempt(&permuted.k, window);
        if att.det.is_none() {
            continue;
        }
        any_det = true;
        let accepted: Vec<Vec3> = att
            .solutions
            .into_iter()
            .map(|u| newton_polish(&base, unpermute(hidden, u)))
            .filter(|s| base.rel_residual(s) <= ACCEPT_REL)
            .collect();
        if !accepted.is_empty() {
            return Ok(dedup_and_cap(&base, accepted));
        }
    }
    if any_det {
        Ok(vec![])
    } else {
        Err(Error::DegenerateSystem)
    }
}

/// Determinant of the 6x6 resultant matrix at `s3` for the hide-`s3`
/// elimination, for residual-bound checks.
pub fn resultant_determinant(q: &QuadricTriple, s3: f64) -> f64 {
    let base = q.normalized().unwrap_or_else(|| q.clone());
    build_resultant_matrix(&base.k, s3).determinant()
}

/// Interpolated degree-8 determinant polynomial for the hide-`s3`
/// elimination (ascending powers), when it is not identically zero.
pub fn resultant_polynomial(q: &QuadricTriple) -> Option<Poly1> {
    let base = q.normalized()?;
    attempt(&base.k, WINDOWS[0]).det
}
