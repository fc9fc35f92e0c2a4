//! Univariate real-root finding via companion-matrix eigenvalues.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Dense univariate polynomial, coefficients in ascending power order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly1 {
    pub coeffs: Vec<f64>,
}

impl Poly1 {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * x + c * i as f64;
        }
        acc
    }

    /// Magnitude of the terms at `x`, the natural scale for residual checks.
    pub fn eval_scale(&self, x: f64) -> f64 {
        let ax = x.abs();
        self.coeffs.iter().rev().fold(0.0, |acc: f64, &c| acc * ax + c.abs())
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m: f64, &c| m.max(c.abs()))
    }
}

/// Roots within this relative distance collapse into one representative;
/// this is also where numerically-multiple roots stop being resolvable.
const MERGE_RADIUS: f64 = 1e-5;
/// Eigenvalues with relative imaginary part below this are treated as real.
const IMAG_THRESHOLD: f64 = 1e-6;

/// All real roots of `p`, multiplicities collapsed.
///
/// Leading coefficients below `tol * max|coeff|` are trimmed before the
/// companion matrix is formed; each eigenvalue gets a Newton polish and is
/// kept only if `|p(r)| <= tol * scale(p, r)`.
pub fn real_roots(p: &Poly1, tol: f64) -> Result<Vec<f64>> {
    let scale = p.max_coeff();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::DegeneratePolynomial);
    }
    let mut coeffs: Vec<f64> = p.coeffs.clone();
    while coeffs.len() > 1 && coeffs.last().unwrap().abs() <= tol * scale {
        coeffs.pop();
    }
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Err(Error::DegeneratePolynomial);
    }
    if degree == 1 {
        let r = polish(p, -coeffs[0] / coeffs[1]);
        return Ok(vec![r]);
    }

    // Rescale the variable so companion eigenvalues stay O(1): with
    // x = kappa z the substituted polynomial has comparable coefficients
    // (Fujiwara-style bound on the root radius).
    let lead = coeffs[degree];
    let mut kappa: f64 = 0.0;
    for (i, &c) in coeffs.iter().enumerate().take(degree) {
        if c != 0.0 {
            kappa = kappa.max((c / lead).abs().powf(1.0 / (degree - i) as f64));
        }
    }
    if !(1e-8..=1e8).contains(&kappa) {
        kappa = 1.0;
    }

    // monic coefficients of q(z) = p(kappa z) / (lead kappa^degree)
    let mut monic = vec![0.0; degree];
    let mut pow = kappa.powi(-(degree as i32));
    for (i, &c) in coeffs.iter().enumerate().take(degree) {
        monic[i] = c / lead * pow;
        pow *= kappa;
    }

    let mut companion = DMatrix::from_fn(degree, degree, |r, c| {
        if c == degree - 1 {
            -monic[r]
        } else if r == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    balance(&mut companion);
    let eigen = companion.complex_eigenvalues();

    let mut roots: Vec<f64> = Vec::new();
    for ev in eigen.iter() {
        let re = ev.re * kappa;
        let im = ev.im * kappa;
        if im.abs() > IMAG_THRESHOLD * (1.0 + re.abs()) {
            continue;
        }
        let r = polish(p, re);
        if !r.is_finite() || p.eval(r).abs() > tol * (1.0 + p.eval_scale(r)) {
            continue;
        }
        roots.push(r);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|b, a| (*b - *a).abs() <= MERGE_RADIUS * (1.0 + a.abs()));
    Ok(roots)
}

/// Parlett-Reinsch balancing: similarity scaling by powers of two so row
/// and column norms match. Companion matrices of badly scaled polynomials
/// are highly unbalanced, which otherwise wrecks the small eigenvalues.
fn balance(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| a[(j, i)].abs()).sum();
            let mut r: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / RADIX {
                c *= RADIX * RADIX;
                f *= RADIX;
            }
            while c > r * RADIX {
                c /= RADIX * RADIX;
                f /= RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

fn polish(p: &Poly1, mut r: f64) -> f64 {
    for _ in 0..2 {
        let d = p.eval_derivative(r);
        if d == 0.0 {
            break;
        }
        let step = p.eval(r) / d;
        if !step.is_finite() || step.abs() > 0.5 * (1.0 + r.abs()) {
            break;
        }
        r -= step;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Expands `prod (x - r_i)` times optional irreducible quadratics,
    /// the oracle for planted-root tests.
    fn from_roots(real: &[f64], complex_pairs: &[(f64, f64)]) -> Poly1 {
        let mut c = vec![1.0];
        for &r in real {
            let mut next = vec![0.0; c.len() + 1];
            for (i, &ci) in c.iter().enumerate() {
                next[i + 1] += ci;
                next[i] -= r * ci;
            }
            c = next;
        }
        for &(re, im) in complex_pairs {
            // (x^2 - 2 re x + re^2 + im^2)
            let (b, a) = (-2.0 * re, re * re + im * im);
            let mut next = vec![0.0; c.len() + 2];
            for (i, &ci) in c.iter().enumerate() {
                next[i + 2] += ci;
                next[i + 1] += b * ci;
                next[i] += a * ci;
            }
            c = next;
        }
        Poly1::new(c)
    }

    #[test]
    fn quadratic_with_two_roots() {
        let p = Poly1::new(vec![-1.0, 0.0, 1.0]);
        let roots = real_roots(&p, 1e-10).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] + 1.0).abs() < 1e-12);
        assert!((roots[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triple_root_collapses() {
        // (x - 2)^3 = -8 + 12x - 6x^2 + x^3
        let p = Poly1::new(vec![-8.0, 12.0, -6.0, 1.0]);
        let roots = real_roots(&p, 1e-10).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn planted_degree_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            // four well-separated real roots plus two complex pairs
            let mut real = [0.0; 4];
            loop {
                for r in real.iter_mut() {
                    *r = rng.random_range(-3.0..3.0);
                }
                real.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if real.windows(2).all(|w| w[1] - w[0] > 0.05) {
                    break;
                }
            }
            let pairs = [
                (rng.random_range(-2.0..2.0), rng.random_range(0.5..2.0)),
                (rng.random_range(-2.0..2.0), rng.random_range(0.5..2.0)),
            ];
            let p = from_roots(&real, &pairs);
            let roots = real_roots(&p, 1e-8).unwrap();
            for &r in &real {
                let best = roots
                    .iter()
                    .map(|&x| (x - r).abs())
                    .fold(f64::INFINITY, f64::min);
                assert!(best < 1e-8 * (1.0 + r.abs()), "missed root {r}: {roots:?}");
            }
            assert!(roots.len() <= p.degree());
        }
    }

    #[test]
    fn residual_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let coeffs: Vec<f64> = (0..9).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = Poly1::new(coeffs);
            let tol = 1e-8;
            if let Ok(roots) = real_roots(&p, tol) {
                for r in roots {
                    assert!(p.eval(r).abs() <= tol * (1.0 + p.eval_scale(r)));
                }
            }
        }
    }

    #[test]
    fn zero_polynomial_rejected() {
        assert!(matches!(
            real_roots(&Poly1::new(vec![0.0, 0.0, 0.0]), 1e-10),
            Err(Error::DegeneratePolynomial)
        ));
        assert!(matches!(
            real_roots(&Poly1::new(vec![3.0]), 1e-10),
            Err(Error::DegeneratePolynomial)
        ));
    }

    #[test]
    fn scaled_coefficients() {
        // roots at 1e4 and 2e4: exercises the variable rescaling; the
        // tolerance must stay below 1/(max coeff) or the leading
        // coefficient is trimmed away by design
        let p = from_roots(&[1e4, 2e4], &[]);
        let roots = real_roots(&p, 1e-12).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 1e4).abs() < 1e-4);
        assert!((roots[1] - 2e4).abs() < 1e-4);
    }

    #[test]
    fn wide_root_magnitude_spread() {
        // one huge root next to moderate ones: balancing keeps the small
        // roots accurate
        let p = from_roots(&[0.7, -1.3, 0.2, 5.0e3], &[(0.5, 1.0), (-2.0, 0.8)]);
        let roots = real_roots(&p, 1e-8).unwrap();
        for target in [0.7, -1.3, 0.2, 5.0e3] {
            let best = roots
                .iter()
                .map(|&x| (x - target).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6 * (1.0 + target.abs()), "missed {target}: {roots:?}");
        }
    }
}
