//! Outlier-robust estimation: minimal-solver hypotheses scored by inlier
//! consensus, then a least-squares polish on the consensus set.

use crate::error::{Error, Result};
use crate::geom::{CorrespondenceSet, Pose};
use crate::ls::solve_least_squares;
use crate::minimal::{solve_minimal, MinimalConfig};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    /// inlier thresholds in meters, one per residual kind
    pub plane_threshold: f64,
    pub line_threshold: f64,
    pub point_threshold: f64,
    pub confidence: f64,
    pub seed: u64,
}

impl RansacParams {
    /// Uniform threshold across all residual kinds.
    pub fn new(threshold: f64, confidence: f64, seed: u64) -> Result<Self> {
        let params = Self {
            max_iterations: 1000,
            plane_threshold: threshold,
            line_threshold: threshold,
            point_threshold: threshold,
            confidence,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.plane_threshold <= 0.0 || self.line_threshold <= 0.0 || self.point_threshold <= 0.0 {
            return Err(Error::InvalidGeometry("inlier thresholds must be positive".into()));
        }
        if !(0.0 < self.confidence && self.confidence < 1.0) {
            return Err(Error::InvalidGeometry("confidence must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-correspondence inlier flags, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InlierMask {
    pub planes: Vec<bool>,
    pub lines: Vec<bool>,
    pub points: Vec<bool>,
}

impl InlierMask {
    pub fn effective_count(&self) -> usize {
        self.planes.iter().filter(|&&b| b).count()
            + 2 * self.lines.iter().filter(|&&b| b).count()
            + 3 * self.points.iter().filter(|&&b| b).count()
    }

    pub fn element_count(&self) -> usize {
        self.planes.iter().filter(|&&b| b).count()
            + self.lines.iter().filter(|&&b| b).count()
            + self.points.iter().filter(|&&b| b).count()
    }

    fn is_superset_of(&self, other: &Self) -> bool {
        self.planes.iter().zip(&other.planes).all(|(a, b)| *a || !b)
            && self.lines.iter().zip(&other.lines).all(|(a, b)| *a || !b)
            && self.points.iter().zip(&other.points).all(|(a, b)| *a || !b)
    }
}

#[derive(Debug, Clone)]
pub struct RansacEstimate {
    pub pose: Pose,
    pub inliers: InlierMask,
    pub iterations: usize,
}

/// Sampling preference: fewest elements per hypothesis first, richer
/// element kinds breaking ties (a point pins more than a line or plane).
const CONFIG_PREFERENCE: [MinimalConfig; 7] = [
    MinimalConfig::Pt2L0Pl1,
    MinimalConfig::Pt1L1Pl1,
    MinimalConfig::Pt0L3Pl0,
    MinimalConfig::Pt1L0Pl3,
    MinimalConfig::Pt0L2Pl2,
    MinimalConfig::Pt0L1Pl4,
    MinimalConfig::Pt0L0Pl6,
];

fn classify(corrs: &CorrespondenceSet, pose: &Pose, params: &RansacParams) -> InlierMask {
    InlierMask {
        planes: corrs
            .planes
            .iter()
            .map(|c| c.residual(pose).abs() <= params.plane_threshold)
            .collect(),
        lines: corrs
            .lines
            .iter()
            .map(|c| c.residual(pose).norm() <= params.line_threshold)
            .collect(),
        points: corrs
            .points
            .iter()
            .map(|c| c.residual(pose).norm() <= params.point_threshold)
            .collect(),
    }
}

fn subset(corrs: &CorrespondenceSet, mask: &InlierMask) -> CorrespondenceSet {
    CorrespondenceSet::new(
        corrs
            .planes
            .iter()
            .zip(&mask.planes)
            .filter(|(_, &keep)| keep)
            .map(|(c, _)| *c)
            .collect(),
        corrs
            .lines
            .iter()
            .zip(&mask.lines)
            .filter(|(_, &keep)| keep)
            .map(|(c, _)| *c)
            .collect(),
        corrs
            .points
            .iter()
            .zip(&mask.points)
            .filter(|(_, &keep)| keep)
            .map(|(c, _)| *c)
            .collect(),
    )
}

/// RANSAC pose estimation. Deterministic for a fixed seed: hypothesis `i`
/// draws from its own RNG stream derived from `seed` and `i`.
pub fn ransac_estimate(
    corrs: &CorrespondenceSet,
    params: &RansacParams,
) -> Result<RansacEstimate> {
    params.validate()?;
    let n = corrs.effective_count();
    if n < 7 {
        return Err(Error::InsufficientCorrespondences { needed: 7, got: n });
    }
    let config = CONFIG_PREFERENCE
        .iter()
        .copied()
        .find(|c| {
            let (np, nl, npl) = c.counts();
            corrs.points.len() >= np && corrs.lines.len() >= nl && corrs.planes.len() >= npl
        })
        .ok_or_else(|| {
            Error::DegenerateConfiguration("no minimal configuration is sampleable".into())
        })?;
    let (np, nl, npl) = config.counts();
    let sample_elements = np + nl + npl;
    let total_elements = corrs.element_count();

    let mut best: Option<(usize, Pose, InlierMask)> = None;
    let mut bound = params.max_iterations;
    let mut iterations = 0;
    while iterations < bound {
        let mut rng = ChaCha8Rng::seed_from_u64(
            params
                .seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(iterations as u64),
        );
        iterations += 1;
        let pick_points = sample(&mut rng, corrs.points.len(), np).into_vec();
        let pick_lines = sample(&mut rng, corrs.lines.len(), nl).into_vec();
        let pick_planes = sample(&mut rng, corrs.planes.len(), npl).into_vec();
        let minimal = CorrespondenceSet::new(
            pick_planes.iter().map(|&i| corrs.planes[i]).collect(),
            pick_lines.iter().map(|&i| corrs.lines[i]).collect(),
            pick_points.iter().map(|&i| corrs.points[i]).collect(),
        );
        let hypotheses = match solve_minimal(&minimal) {
            Ok(h) => h,
            Err(_) => continue,
        };
        for pose in hypotheses {
            let mask = classify(corrs, &pose, params);
            let score = mask.effective_count();
            if best.as_ref().map_or(true, |(b, _, _)| score > *b) {
                // adaptive bound from the standard confidence formula
                let w = mask.element_count() as f64 / total_elements as f64;
                let p_all = w.powi(sample_elements as i32);
                if p_all > 0.0 && p_all < 1.0 {
                    let needed = ((1.0 - params.confidence).ln() / (1.0 - p_all).ln()).ceil();
                    if needed.is_finite() && needed >= 0.0 {
                        bound = bound.min((needed as usize).max(iterations));
                    }
                } else if p_all >= 1.0 {
                    bound = iterations;
                }
                best = Some((score, pose, mask));
            }
        }
    }

    let (score, hypo_pose, hypo_mask) = best.ok_or(Error::NoConsensus)?;
    if score < 7 {
        return Err(Error::NoConsensus);
    }

    // polish on the consensus set; reject the polish if it loses inliers
    let consensus = subset(corrs, &hypo_mask);
    if let Ok(cands) = solve_least_squares(&consensus, None) {
        let polished = cands.iter().find(|c| c.selected).unwrap_or(&cands[0]);
        let polished_mask = classify(corrs, &polished.pose, params);
        if polished_mask.is_superset_of(&hypo_mask) {
            return Ok(RansacEstimate {
                pose: polished.pose,
                inliers: polished_mask,
                iterations,
            });
        }
    }
    Ok(RansacEstimate { pose: hypo_pose, inliers: hypo_mask, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_error_deg;
    use crate::synth::{generate, SynthSpec};
    use rand::Rng;

    #[test]
    fn no_outliers_matches_least_squares() {
        let spec = SynthSpec::new(6, 2, 2, 0.0, 71).unwrap();
        let (corrs, gt) = generate(&spec);
        let params = RansacParams::new(0.05, 0.999, 7).unwrap();
        let est = ransac_estimate(&corrs, &params).unwrap();
        assert!(est.inliers.planes.iter().all(|&b| b));
        assert!(est.inliers.lines.iter().all(|&b| b));
        assert!(est.inliers.points.iter().all(|&b| b));
        let ls = solve_least_squares(&corrs, None).unwrap();
        let best = &ls[0];
        assert!((est.pose.rotation - best.pose.rotation).amax() < 1e-9);
        assert!((est.pose.translation - best.pose.translation).amax() < 1e-9);
        let _ = gt;
    }

    #[test]
    fn thirty_percent_outliers_recovered() {
        let mut hit = 0;
        for seed in 0..10u64 {
            let spec = SynthSpec::new(8, 4, 4, 0.01, 100 + seed).unwrap();
            let (mut corrs, gt) = generate(&spec);
            // re-target ~30% of the correspondences to random geometry
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let mut label_planes = vec![true; corrs.planes.len()];
            let mut label_lines = vec![true; corrs.lines.len()];
            let mut label_points = vec![true; corrs.points.len()];
            for (i, p) in corrs.planes.iter_mut().enumerate() {
                if rng.random_range(0.0..1.0) < 0.3 {
                    p.y += crate::geom::Vec3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    );
                    label_planes[i] = false;
                }
            }
            for (i, l) in corrs.lines.iter_mut().enumerate() {
                if rng.random_range(0.0..1.0) < 0.3 {
                    l.y += crate::geom::Vec3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    );
                    label_lines[i] = false;
                }
            }
            for (i, p) in corrs.points.iter_mut().enumerate() {
                if rng.random_range(0.0..1.0) < 0.3 {
                    p.y += crate::geom::Vec3::new(
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    );
                    label_points[i] = false;
                }
            }
            let params = RansacParams::new(0.03, 0.999, 31 + seed).unwrap();
            let est = match ransac_estimate(&corrs, &params) {
                Ok(e) => e,
                Err(_) => continue,
            };
            if rotation_error_deg(&est.pose.rotation, &gt.rotation) < 0.5 {
                // precision of the inlier mask against the planted labels
                let mut tp = 0usize;
                let mut fp = 0usize;
                for (flag, truth) in est
                    .inliers
                    .planes
                    .iter()
                    .zip(&label_planes)
                    .chain(est.inliers.lines.iter().zip(&label_lines))
                    .chain(est.inliers.points.iter().zip(&label_points))
                {
                    if *flag && *truth {
                        tp += 1;
                    }
                    if *flag && !truth {
                        fp += 1;
                    }
                }
                if tp + fp > 0 && tp as f64 / (tp + fp) as f64 >= 0.95 {
                    hit += 1;
                }
            }
        }
        assert!(hit >= 8, "only {hit}/10 outlier trials recovered");
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let spec = SynthSpec::new(6, 2, 2, 0.01, 72).unwrap();
        let (corrs, _) = generate(&spec);
        let params = RansacParams::new(0.05, 0.99, 42).unwrap();
        let a = ransac_estimate(&corrs, &params).unwrap();
        let b = ransac_estimate(&corrs, &params).unwrap();
        assert_eq!(a.pose.rotation, b.pose.rotation);
        assert_eq!(a.pose.translation, b.pose.translation);
        assert_eq!(a.inliers, b.inliers);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn iteration_bound_respected() {
        let spec = SynthSpec::new(10, 0, 0, 0.05, 73).unwrap();
        let (corrs, _) = generate(&spec);
        let mut params = RansacParams::new(0.05, 0.999, 5).unwrap();
        params.max_iterations = 20;
        let est = ransac_estimate(&corrs, &params).unwrap();
        assert!(est.iterations <= 20);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(RansacParams::new(0.0, 0.99, 1).is_err());
        assert!(RansacParams::new(0.1, 1.0, 1).is_err());
    }
}
