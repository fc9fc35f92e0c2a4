//! Synthetic problem generation, ambiguity fixtures, and the benchmark
//! driver.
//!
//! Geometry is sampled inside a 10 m sphere with random unit normals and
//! directions; ground-truth rotations come from uniform Euler angles
//! (yaw/roll in [0°, 360°), pitch in [0°, 180°]), translations uniform in
//! ±10 m. Gaussian noise perturbs the frame-1 points only, so line and
//! plane geometry stays exact.

use crate::error::{Error, Result};
use crate::geom::{
    rotation_error_deg, translation_error_rel, CorrespondenceSet, Mat3, PointToLine, PointToPlane,
    PointToPoint, Pose, Vec3,
};
use crate::ls::solve_least_squares;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// How the correspondence mixture of a trial is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mixture {
    /// fixed counts (planes, lines, points)
    Fixed { planes: usize, lines: usize, points: usize },
    /// random split with the given effective constraint count
    Effective(usize),
}

/// Recipe for one synthetic problem instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub mixture: Mixture,
    /// standard deviation of the Gaussian noise on frame-1 points (meters)
    pub noise_sigma: f64,
    pub sphere_radius: f64,
    pub translation_range: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(planes: usize, lines: usize, points: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            mixture: Mixture::Fixed { planes, lines, points },
            noise_sigma,
            sphere_radius: 10.0,
            translation_range: 10.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn effective(n: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            mixture: Mixture::Effective(n),
            noise_sigma,
            sphere_radius: 10.0,
            translation_range: 10.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidGeometry("noise sigma must be nonnegative".into()));
        }
        let n = match self.mixture {
            Mixture::Fixed { planes, lines, points } => planes + 2 * lines + 3 * points,
            Mixture::Effective(n) => n,
        };
        if n < 6 {
            return Err(Error::InsufficientCorrespondences { needed: 6, got: n });
        }
        Ok(())
    }

    pub fn effective_count(&self) -> usize {
        match self.mixture {
            Mixture::Fixed { planes, lines, points } => planes + 2 * lines + 3 * points,
            Mixture::Effective(n) => n,
        }
    }

    /// Same spec with a seed derived for one trial of a batch.
    pub fn with_trial_seed(&self, trial: u64) -> Self {
        let mut spec = *self;
        spec.seed = self
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(trial.wrapping_mul(0xbf58_476d_1ce4_e5b9))
            .wrapping_add(1);
        spec
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v = Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn ball_point(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    let dir = unit_vector(rng);
    let r = radius * rng.random_range(0.0..1.0f64).cbrt();
    dir * r
}

fn euler_zyx(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    let rz = Mat3::new(
        alpha.cos(), -alpha.sin(), 0.0,
        alpha.sin(), alpha.cos(), 0.0,
        0.0, 0.0, 1.0,
    );
    let ry = Mat3::new(
        beta.cos(), 0.0, beta.sin(),
        0.0, 1.0, 0.0,
        -beta.sin(), 0.0, beta.cos(),
    );
    let rx = Mat3::new(
        1.0, 0.0, 0.0,
        0.0, gamma.cos(), -gamma.sin(),
        0.0, gamma.sin(), gamma.cos(),
    );
    rz * ry * rx
}

/// Rotation angle of `r` in degrees.
fn rotation_angle_deg(r: &Mat3) -> f64 {
    rotation_error_deg(r, &Mat3::identity())
}

/// Uniform choice among the nonnegative integer splits of
/// `planes + 2 lines + 3 points = n`.
pub fn random_effective_split(n: usize, seed: u64) -> (usize, usize, usize) {
    let splits = enumerate_effective_splits(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    splits[rng.random_range(0..splits.len())]
}

/// All `(planes, lines, points)` with `planes + 2 lines + 3 points = n`.
pub fn enumerate_effective_splits(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for points in 0..=(n / 3) {
        for lines in 0..=((n - 3 * points) / 2) {
            let planes = n - 3 * points - 2 * lines;
            out.push((planes, lines, points));
        }
    }
    out
}

/// Samples one synthetic problem and its ground-truth pose.
///
/// Correspondences are exactly consistent before noise; rotations with
/// angle above 179° are resampled to stay clear of the CGR singularity.
pub fn generate(spec: &SynthSpec) -> (CorrespondenceSet, Pose) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n_planes, n_lines, n_points) = match spec.mixture {
        Mixture::Fixed { planes, lines, points } => (planes, lines, points),
        Mixture::Effective(n) => {
            let splits = enumerate_effective_splits(n);
            splits[rng.random_range(0..splits.len())]
        }
    };

    let rotation = loop {
        let alpha = rng.random_range(0.0..std::f64::consts::TAU);
        let beta = rng.random_range(0.0..std::f64::consts::PI);
        let gamma = rng.random_range(0.0..std::f64::consts::TAU);
        let r = euler_zyx(alpha, beta, gamma);
        if rotation_angle_deg(&r) <= 179.0 {
            break r;
        }
    };
    let translation = Vec3::new(
        rng.random_range(-spec.translation_range..spec.translation_range),
        rng.random_range(-spec.translation_range..spec.translation_range),
        rng.random_range(-spec.translation_range..spec.translation_range),
    );
    let pose = Pose::new_unchecked(rotation, translation);

    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let perturb = |x: Vec3, rng: &mut ChaCha8Rng| {
        if spec.noise_sigma > 0.0 {
            x + Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng))
        } else {
            x
        }
    };

    let mut corrs = CorrespondenceSet::default();
    for _ in 0..n_planes {
        let x = ball_point(&mut rng, spec.sphere_radius);
        let n = unit_vector(&mut rng);
        let y = pose.apply(&x);
        let xn = perturb(x, &mut rng);
        corrs.planes.push(PointToPlane::new(xn, n, y).expect("valid plane"));
    }
    for _ in 0..n_lines {
        let x = ball_point(&mut rng, spec.sphere_radius);
        let d = unit_vector(&mut rng);
        let y = pose.apply(&x);
        let xn = perturb(x, &mut rng);
        corrs.lines.push(PointToLine::new(xn, d, y).expect("valid line"));
    }
    for _ in 0..n_points {
        let x = ball_point(&mut rng, spec.sphere_radius);
        let y = pose.apply(&x);
        let xn = perturb(x, &mut rng);
        corrs.points.push(PointToPoint::new(xn, y).expect("valid point"));
    }
    (corrs, pose)
}

/// Lines through both images of each point, making `p1` and `p2` exact
/// solutions.
pub fn make_ambiguous_lines(points: &[Vec3], p1: &Pose, p2: &Pose) -> Result<Vec<PointToLine>> {
    points
        .iter()
        .map(|x| {
            let y1 = p1.apply(x);
            let y2 = p2.apply(x);
            let diff = y1 - y2;
            if diff.norm() <= 1e-9 {
                return Err(Error::DegenerateFixture(
                    "point images coincide; line direction undefined".into(),
                ));
            }
            PointToLine::new(*x, diff.normalize(), y1)
        })
        .collect()
}

/// Planes through all three images of each point, making `p1`, `p2` and
/// `p3` exact solutions.
pub fn make_ambiguous_planes(
    points: &[Vec3],
    p1: &Pose,
    p2: &Pose,
    p3: &Pose,
) -> Result<Vec<PointToPlane>> {
    points
        .iter()
        .map(|x| {
            let y1 = p1.apply(x);
            let y2 = p2.apply(x);
            let y3 = p3.apply(x);
            let n = (y2 - y1).cross(&(y3 - y1));
            if n.norm() <= 1e-9 {
                return Err(Error::DegenerateFixture(
                    "three point images are collinear; plane undefined".into(),
                ));
            }
            PointToPlane::new(*x, n.normalize(), y1)
        })
        .collect()
}

/// Mixed fixture: ambiguous lines for `line_points` plus planes containing
/// the image pair of each plane point, so both poses are exact solutions.
pub fn make_ambiguous_mixed(
    line_points: &[Vec3],
    plane_points: &[Vec3],
    p1: &Pose,
    p2: &Pose,
) -> Result<CorrespondenceSet> {
    let lines = make_ambiguous_lines(line_points, p1, p2)?;
    let planes = plane_points
        .iter()
        .map(|x| {
            let y1 = p1.apply(x);
            let y2 = p2.apply(x);
            let diff = y2 - y1;
            if diff.norm() <= 1e-9 {
                return Err(Error::DegenerateFixture(
                    "point images coincide; containing plane underdetermined".into(),
                ));
            }
            let d = diff.normalize();
            // any normal orthogonal to the image line works; build one from
            // the least-aligned axis
            let axis = (0..3)
                .min_by(|&i, &j| d[i].abs().partial_cmp(&d[j].abs()).unwrap())
                .unwrap();
            let n = d.cross(&Vec3::ith_axis(axis).into_inner()).normalize();
            PointToPlane::new(*x, n, y1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrespondenceSet::new(planes, lines, vec![]))
}

/// One aggregated benchmark cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub effective_n: usize,
    pub sigma: f64,
    pub trials: usize,
    pub rot_mean_deg: f64,
    pub rot_median_deg: f64,
    pub trans_mean_rel: f64,
    pub trans_median_rel: f64,
    pub time_mean_ms: f64,
    pub failures: usize,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs the least-squares solver over a grid of specs; failures are
/// recorded per cell, never raised. Trials run in parallel with
/// per-trial seeds, so results do not depend on scheduling.
pub fn run_benchmark(grid: &[SynthSpec], trials: usize) -> Vec<BenchRow> {
    grid.iter()
        .map(|spec| {
            let results: Vec<_> = (0..trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let (corrs, gt) = generate(&spec.with_trial_seed(trial));
                    let start = std::time::Instant::now();
                    let solved = solve_least_squares(&corrs, None);
                    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
                    match solved {
                        Ok(cands) => {
                            let best = cands
                                .iter()
                                .find(|c| c.selected)
                                .unwrap_or(&cands[0]);
                            let rot = rotation_error_deg(&best.pose.rotation, &gt.rotation);
                            let trans = translation_error_rel(&best.pose.translation, &gt.translation)
                                .unwrap_or(f64::NAN);
                            Some((rot, trans, elapsed_ms))
                        }
                        Err(_) => None,
                    }
                })
                .collect();
            let ok: Vec<_> = results.iter().flatten().collect();
            let rots: Vec<f64> = ok.iter().map(|r| r.0).collect();
            let trans: Vec<f64> = ok.iter().map(|r| r.1).collect();
            let times: Vec<f64> = ok.iter().map(|r| r.2).collect();
            BenchRow {
                effective_n: spec.effective_count(),
                sigma: spec.noise_sigma,
                trials,
                rot_mean_deg: mean(&rots),
                rot_median_deg: median(&rots),
                trans_mean_rel: mean(&trans),
                trans_median_rel: median(&trans),
                time_mean_ms: mean(&times),
                failures: trials - ok.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn zero_noise_has_zero_cost_at_ground_truth() {
        for seed in 0..50 {
            let spec = SynthSpec::effective(10, 0.0, seed).unwrap();
            let (corrs, gt) = generate(&spec);
            assert!(corrs.cost(&gt) < 1e-18);
        }
    }

    #[test]
    fn effective_count_accounting() {
        let spec = SynthSpec::new(4, 1, 0, 0.0, 7).unwrap();
        let (corrs, _) = generate(&spec);
        assert_eq!(corrs.effective_count(), 6);
        assert_eq!(spec.effective_count(), 6);
    }

    #[test]
    fn fixed_seed_reproducible() {
        let spec = SynthSpec::effective(9, 0.02, 1234).unwrap();
        let (a, gta) = generate(&spec);
        let (b, gtb) = generate(&spec);
        assert_eq!(gta.rotation, gtb.rotation);
        assert_eq!(gta.translation, gtb.translation);
        assert_eq!(a.planes.len(), b.planes.len());
        for (pa, pb) in a.planes.iter().zip(&b.planes) {
            assert_eq!(pa.x, pb.x);
            assert_eq!(pa.n, pb.n);
        }
    }

    #[test]
    fn split_enumeration_for_six() {
        // oracle: exhaustive enumeration of planes + 2 lines + 3 points = 6
        let splits = enumerate_effective_splits(6);
        assert_eq!(splits.len(), 7);
        let set: HashSet<_> = splits.iter().copied().collect();
        assert!(set.contains(&(6, 0, 0)));
        assert!(set.contains(&(0, 3, 0)));
        assert!(set.contains(&(0, 0, 2)));
        assert!(set.contains(&(3, 0, 1)));
        // the two-point split is present: degeneracy is the solver's concern
        assert!(set.contains(&(0, 0, 2)));
        for (pl, l, p) in splits {
            assert_eq!(pl + 2 * l + 3 * p, 6);
        }
    }

    #[test]
    fn split_sampling_covers_all() {
        let splits = enumerate_effective_splits(7);
        let mut seen = HashSet::new();
        for seed in 0..2000 {
            seen.insert(random_effective_split(7, seed));
        }
        assert_eq!(seen.len(), splits.len());
    }

    #[test]
    fn ambiguous_lines_zero_cost_for_both_poses() {
        let spec = SynthSpec::effective(10, 0.0, 5).unwrap();
        let (_, p1) = generate(&spec);
        let (_, p2) = generate(&SynthSpec::effective(10, 0.0, 6).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let points: Vec<Vec3> = (0..5).map(|_| ball_point(&mut rng, 10.0)).collect();
        let lines = make_ambiguous_lines(&points, &p1, &p2).unwrap();
        let corrs = CorrespondenceSet::new(vec![], lines, vec![]);
        assert!(corrs.cost(&p1) < 1e-20);
        assert!(corrs.cost(&p2) < 1e-20);
    }

    #[test]
    fn ambiguous_lines_reject_coincident_images() {
        let p = Pose::identity();
        let points = [Vec3::new(1.0, 0.0, 0.0)];
        assert!(matches!(
            make_ambiguous_lines(&points, &p, &p),
            Err(Error::DegenerateFixture(_))
        ));
    }

    #[test]
    fn ambiguous_planes_zero_cost_for_three_poses() {
        let (_, p1) = generate(&SynthSpec::effective(10, 0.0, 11).unwrap());
        let (_, p2) = generate(&SynthSpec::effective(10, 0.0, 12).unwrap());
        let (_, p3) = generate(&SynthSpec::effective(10, 0.0, 13).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let points: Vec<Vec3> = (0..8).map(|_| ball_point(&mut rng, 10.0)).collect();
        let planes = make_ambiguous_planes(&points, &p1, &p2, &p3).unwrap();
        let corrs = CorrespondenceSet::new(planes, vec![], vec![]);
        assert!(corrs.cost(&p1) < 1e-20);
        assert!(corrs.cost(&p2) < 1e-20);
        assert!(corrs.cost(&p3) < 1e-20);
    }

    #[test]
    fn ambiguous_planes_reject_collinear_images() {
        // p2, p3 translate p1 along a line: the three images are collinear
        let p1 = Pose::identity();
        let shift = Vec3::new(1.0, 0.0, 0.0);
        let p2 = Pose::new_unchecked(Mat3::identity(), shift);
        let p3 = Pose::new_unchecked(Mat3::identity(), shift * 2.0);
        let points = [Vec3::new(0.0, 1.0, 0.0)];
        assert!(matches!(
            make_ambiguous_planes(&points, &p1, &p2, &p3),
            Err(Error::DegenerateFixture(_))
        ));
    }

    #[test]
    fn ambiguous_mixed_zero_cost_for_both_poses() {
        let (_, p1) = generate(&SynthSpec::effective(10, 0.0, 21).unwrap());
        let (_, p2) = generate(&SynthSpec::effective(10, 0.0, 22).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let line_points: Vec<Vec3> = (0..3).map(|_| ball_point(&mut rng, 10.0)).collect();
        let plane_points: Vec<Vec3> = (0..4).map(|_| ball_point(&mut rng, 10.0)).collect();
        let corrs = make_ambiguous_mixed(&line_points, &plane_points, &p1, &p2).unwrap();
        assert!(corrs.cost(&p1) < 1e-20);
        assert!(corrs.cost(&p2) < 1e-20);
        // no plane points reduces to the pure line fixture
        let only_lines = make_ambiguous_mixed(&line_points, &[], &p1, &p2).unwrap();
        assert!(only_lines.planes.is_empty());
        assert_eq!(only_lines.lines.len(), 3);
    }

    #[test]
    fn empty_benchmark() {
        let spec = SynthSpec::effective(8, 0.01, 3).unwrap();
        let rows = run_benchmark(&[spec], 0);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].trials, 0);
        assert_eq!(rows[0].failures, 0);
    }
}
