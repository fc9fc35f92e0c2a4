//! Complete solver for the four-cubic stationarity system of the relaxed
//! quartic cost.
//!
//! The system contains only odd-degree (3 and 1) monomials, so nontrivial
//! solutions come in `±xi` pairs and the origin is always a root. The
//! solver runs damped-free Newton iterations from a fixed deterministic
//! covering of the unit 3-sphere at several radii and deduplicates the
//! converged roots, keeping the `rho >= 0` representative of each pair.

use crate::error::{Error, Result};
use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exponent tuples over `(rho, alpha, beta, gamma)` spanning every cubic
/// and linear monomial, in the order coefficients are stored.
pub const CUBIC4_MONOMIALS: [[u8; 4]; 24] = [
    // degree 3
    [3, 0, 0, 0], [2, 1, 0, 0], [2, 0, 1, 0], [2, 0, 0, 1],
    [1, 2, 0, 0], [1, 1, 1, 0], [1, 1, 0, 1], [1, 0, 2, 0],
    [1, 0, 1, 1], [1, 0, 0, 2], [0, 3, 0, 0], [0, 2, 1, 0],
    [0, 2, 0, 1], [0, 1, 2, 0], [0, 1, 1, 1], [0, 1, 0, 2],
    [0, 0, 3, 0], [0, 0, 2, 1], [0, 0, 1, 2], [0, 0, 0, 3],
    // degree 1
    [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1],
];

/// Index of an exponent tuple in [`CUBIC4_MONOMIALS`].
pub fn monomial_index(exp: &[u8; 4]) -> Option<usize> {
    CUBIC4_MONOMIALS.iter().position(|m| m == exp)
}

/// Four polynomials in `(rho, alpha, beta, gamma)` holding only degree-3
/// and degree-1 monomials, stored over [`CUBIC4_MONOMIALS`].
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSystem4 {
    pub coeffs: [[f64; 24]; 4],
}

const SEED_DIRECTIONS: usize = 224;
const SEED_RADII: [f64; 3] = [0.5, 1.0, 2.0];
const SEED_RNG: u64 = 0x712a_60d3_5eed_c0de;
const MAX_NEWTON_ITERS: usize = 40;
/// Gradient acceptance relative to the largest coefficient.
const ROOT_REL_TOL: f64 = 1e-8;
/// Max-norm deduplication radius after sign normalization.
const DEDUP_RADIUS: f64 = 1e-6;

impl CubicSystem4 {
    pub fn new(coeffs: [[f64; 24]; 4]) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: [[0.0; 24]; 4] }
    }

    fn monomial_values(xi: &Vector4<f64>) -> [f64; 24] {
        let mut vals = [0.0; 24];
        for (v, exp) in vals.iter_mut().zip(CUBIC4_MONOMIALS.iter()) {
            let mut m = 1.0;
            for (x, &e) in xi.iter().zip(exp.iter()) {
                for _ in 0..e {
                    m *= x;
                }
            }
            *v = m;
        }
        vals
    }

    pub fn eval(&self, xi: &Vector4<f64>) -> Vector4<f64> {
        let m = Self::monomial_values(xi);
        Vector4::from_fn(|i, _| self.coeffs[i].iter().zip(m.iter()).map(|(c, v)| c * v).sum())
    }

    pub fn jacobian(&self, xi: &Vector4<f64>) -> Matrix4<f64> {
        let mut j = Matrix4::zeros();
        for (mi, exp) in CUBIC4_MONOMIALS.iter().enumerate() {
            for var in 0..4 {
                if exp[var] == 0 {
                    continue;
                }
                // derivative of the monomial with respect to var
                let mut d = exp[var] as f64;
                for (v, &e) in exp.iter().enumerate() {
                    let e = if v == var { e - 1 } else { e };
                    for _ in 0..e {
                        d *= xi[v];
                    }
                }
                for poly in 0..4 {
                    j[(poly, var)] += self.coeffs[poly][mi] * d;
                }
            }
        }
        j
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0, |m: f64, &c| m.max(c.abs()))
    }
}

/// Flips the sign so the first significant component is nonnegative:
/// `rho >= 0`, with ties broken on `alpha`, then `beta`, then `gamma`.
pub fn symmetry_representative(xi: Vector4<f64>) -> Vector4<f64> {
    for v in xi.iter() {
        if v.abs() > 1e-12 {
            return if *v < 0.0 { -xi } else { xi };
        }
    }
    xi
}

/// All real solutions of the system up to the `±xi` symmetry.
///
/// Deterministic: seeds come from a fixed covering of the unit 3-sphere
/// (224 directions at three radii). The origin, always a root, is never
/// returned since it carries no pose.
pub fn solve_cubic_stationarity(sys: &CubicSystem4) -> Result<Vec<Vector4<f64>>> {
    let scale = sys.max_coeff();
    if scale == 0.0 {
        // the zero system vanishes everywhere; report no isolated roots
        return Ok(vec![]);
    }
    let tol = ROOT_REL_TOL * scale;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED_RNG);
    let mut seeds = Vec::with_capacity(SEED_DIRECTIONS);
    while seeds.len() < SEED_DIRECTIONS {
        let d = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0f64));
        let n = d.norm();
        if n > 1e-2 {
            seeds.push(d / n);
        }
    }

    let mut roots: Vec<Vector4<f64>> = Vec::new();
    let mut converged_any = false;
    for dir in &seeds {
        for radius in SEED_RADII {
            let mut xi = dir * radius;
            let mut ok = false;
            for _ in 0..MAX_NEWTON_ITERS {
                let g = sys.eval(&xi);
                let j = sys.jacobian(&xi);
                let step = match j.lu().solve(&g) {
                    Some(s) => s,
                    None => break,
                };
                xi -= step;
                if !xi.iter().all(|v| v.is_finite()) || xi.norm() > 1e4 {
                    break;
                }
                if step.amax() <= 1e-13 * (1.0 + xi.norm()) {
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue;
            }
            if sys.eval(&xi).amax() > tol {
                continue;
            }
            converged_any = true;
            if xi.norm() <= 1e-6 {
                continue;
            }
            let xi = symmetry_representative(xi);
            if !roots.iter().any(|r| (xi - r).amax() <= DEDUP_RADIUS) {
                roots.push(xi);
            }
        }
    }
    if !converged_any {
        return Err(Error::NumericFailure(
            "no Newton start converged on the stationarity system".into(),
        ));
    }
    roots.sort_by(|a, b| {
        (a[0], a[1], a[2], a[3])
            .partial_cmp(&(b[0], b[1], b[2], b[3]))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Random odd system with a planted root: coefficients drawn, then the
    /// linear terms adjusted so `g(xi*) = 0`.
    fn planted(rng: &mut ChaCha8Rng, xi: &Vector4<f64>) -> CubicSystem4 {
        let mut sys = CubicSystem4::zero();
        for p in 0..4 {
            for m in 0..24 {
                sys.coeffs[p][m] = rng.random_range(-1.0..1.0);
            }
        }
        let g = sys.eval(xi);
        for p in 0..4 {
            // distribute the correction across the linear terms along xi
            let n2 = xi.norm_squared();
            for v in 0..4 {
                sys.coeffs[p][20 + v] -= g[p] * xi[v] / n2;
            }
        }
        sys
    }

    #[test]
    fn zero_system_has_no_isolated_roots() {
        assert!(solve_cubic_stationarity(&CubicSystem4::zero()).unwrap().is_empty());
    }

    #[test]
    fn planted_root_found_with_defining_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..25 {
            let xi = symmetry_representative(Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0f64)));
            if xi.norm() < 0.3 {
                continue;
            }
            let sys = planted(&mut rng, &xi);
            let roots = solve_cubic_stationarity(&sys).unwrap();
            let scale = sys.max_coeff();
            for r in &roots {
                assert!(sys.eval(r).amax() <= 1e-8 * scale);
                // odd system: -xi vanishes too
                assert!(sys.eval(&-r).amax() <= 1e-7 * scale);
            }
            assert!(roots.len() <= 40, "more than 40 independent roots");
            let found = roots.iter().any(|r| (r - xi).amax() < 1e-6);
            assert!(found, "planted root {xi:?} missing from {roots:?}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut sys = CubicSystem4::zero();
        for p in 0..4 {
            for m in 0..24 {
                sys.coeffs[p][m] = rng.random_range(-1.0..1.0);
            }
        }
        for _ in 0..50 {
            let xi = Vector4::from_fn(|_, _| rng.random_range(-2.0..2.0f64));
            let j = sys.jacobian(&xi);
            let h = 1e-6;
            for var in 0..4 {
                let mut hi = xi;
                let mut lo = xi;
                hi[var] += h;
                lo[var] -= h;
                let fd = (sys.eval(&hi) - sys.eval(&lo)) / (2.0 * h);
                for p in 0..4 {
                    assert!(
                        (j[(p, var)] - fd[p]).abs() <= 1e-5 * (1.0 + fd[p].abs()),
                        "jacobian mismatch at ({p},{var})"
                    );
                }
            }
        }
    }
}
