//! Unified minimal solver for every 6-constraint configuration.
//!
//! The substitution `y = (1 + s.s) t` makes each cleared residual quadratic
//! in the CGR parameters and linear in `y`. Six equations split into two
//! triples; eliminating `y` through the better-conditioned triple leaves
//! three quadrics in `s` that the hidden-variable kernel solves, after
//! which `y` and then `t` follow linearly.

use crate::cgr::CgrVector;
use crate::error::{Error, Result};
use crate::geom::{CorrespondenceSet, Pose, Vec3};
use crate::polysys::{solve_three_quadrics, x_monomials, QuadricTriple};
use nalgebra::{DMatrix, Matrix3, SMatrix};

/// The seven minimal configurations (points / lines / planes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MinimalConfig {
    Pt0L0Pl6,
    Pt0L1Pl4,
    Pt1L0Pl3,
    Pt0L2Pl2,
    Pt1L1Pl1,
    Pt2L0Pl1,
    Pt0L3Pl0,
}

pub const ALL_CONFIGS: [MinimalConfig; 7] = [
    MinimalConfig::Pt0L0Pl6,
    MinimalConfig::Pt0L1Pl4,
    MinimalConfig::Pt1L0Pl3,
    MinimalConfig::Pt0L2Pl2,
    MinimalConfig::Pt1L1Pl1,
    MinimalConfig::Pt2L0Pl1,
    MinimalConfig::Pt0L3Pl0,
];

impl MinimalConfig {
    /// `(points, lines, planes)`
    pub fn counts(&self) -> (usize, usize, usize) {
        match self {
            Self::Pt0L0Pl6 => (0, 0, 6),
            Self::Pt0L1Pl4 => (0, 1, 4),
            Self::Pt1L0Pl3 => (1, 0, 3),
            Self::Pt0L2Pl2 => (0, 2, 2),
            Self::Pt1L1Pl1 => (1, 1, 1),
            Self::Pt2L0Pl1 => (2, 0, 1),
            Self::Pt0L3Pl0 => (0, 3, 0),
        }
    }

    pub fn from_counts(np: usize, nl: usize, npl: usize) -> Result<Self> {
        ALL_CONFIGS
            .iter()
            .copied()
            .find(|c| c.counts() == (np, nl, npl))
            .ok_or(Error::UnsupportedConfiguration { np, nl, npl })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Pt0L0Pl6 => "Pt0L0Pl6",
            Self::Pt0L1Pl4 => "Pt0L1Pl4",
            Self::Pt1L0Pl3 => "Pt1L0Pl3",
            Self::Pt0L2Pl2 => "Pt0L2Pl2",
            Self::Pt1L1Pl1 => "Pt1L1Pl1",
            Self::Pt2L0Pl1 => "Pt2L0Pl1",
            Self::Pt0L3Pl0 => "Pt0L3Pl0",
        }
    }
}

impl std::fmt::Display for MinimalConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Kind of a scalar equation row, for the row-selection rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Plane,
    /// One of the three projector rows of a line; `drop_candidate` marks
    /// the weakest (most direction-aligned) row of its line.
    Line { drop_candidate: bool },
    Point,
}

/// Cleared residual rows `c . x(s) + a . y = 0` over the monomials
/// `x = [s1^2, s2^2, s3^2, s1s2, s1s3, s2s3, s1, s2, s3, 1]`.
#[derive(Debug, Clone)]
pub struct MinimalEquationSet {
    pub c_all: DMatrix<f64>,
    pub a_all: DMatrix<f64>,
    pub kinds: Vec<RowKind>,
}

impl MinimalEquationSet {
    pub fn rows(&self) -> usize {
        self.c_all.nrows()
    }

    /// Row value at `(s, y)`.
    pub fn eval_row(&self, r: usize, s: &Vec3, y: &Vec3) -> f64 {
        let x = x_monomials(s);
        let cx: f64 = (0..10).map(|j| self.c_all[(r, j)] * x[j]).sum();
        cx + self.a_all[(r, 0)] * y[0] + self.a_all[(r, 1)] * y[1] + self.a_all[(r, 2)] * y[2]
    }
}

/// Builds the cleared equations for a minimal configuration; `m` rows with
/// `m = 3 n_p + 3 n_l + n_pi`.
pub fn build_minimal_equations(corrs: &CorrespondenceSet) -> Result<MinimalEquationSet> {
    MinimalConfig::from_counts(corrs.points.len(), corrs.lines.len(), corrs.planes.len())?;
    let rows = corrs.general_rows();
    let m = rows.len();
    let mut c_all = DMatrix::zeros(m, 10);
    let mut a_all = DMatrix::zeros(m, 3);
    for (r, row) in rows.iter().enumerate() {
        let ab = row.a.dot(&row.b);
        let bxa = row.b.cross(&row.a);
        let (a1, a2, a3) = (row.a[0], row.a[1], row.a[2]);
        let (b1, b2, b3) = (row.b[0], row.b[1], row.b[2]);
        let c = row.c;
        c_all[(r, 0)] = 2.0 * a1 * b1 - ab + c;
        c_all[(r, 1)] = 2.0 * a2 * b2 - ab + c;
        c_all[(r, 2)] = 2.0 * a3 * b3 - ab + c;
        c_all[(r, 3)] = 2.0 * (a1 * b2 + a2 * b1);
        c_all[(r, 4)] = 2.0 * (a1 * b3 + a3 * b1);
        c_all[(r, 5)] = 2.0 * (a2 * b3 + a3 * b2);
        c_all[(r, 6)] = 2.0 * bxa[0];
        c_all[(r, 7)] = 2.0 * bxa[1];
        c_all[(r, 8)] = 2.0 * bxa[2];
        c_all[(r, 9)] = ab + c;
        a_all.row_mut(r).copy_from(&row.a.transpose());
    }
    // row kinds in the fixed general-row order: planes, lines, points
    let mut kinds = Vec::with_capacity(m);
    for _ in &corrs.planes {
        kinds.push(RowKind::Plane);
    }
    for line in &corrs.lines {
        // the projector row along the largest direction component carries
        // the least constraint
        let weakest = (0..3).max_by(|&i, &j| {
            line.d[i].abs().partial_cmp(&line.d[j].abs()).unwrap()
        }).unwrap();
        for i in 0..3 {
            kinds.push(RowKind::Line { drop_candidate: i == weakest });
        }
    }
    for _ in &corrs.points {
        kinds.push(RowKind::Point);
        kinds.push(RowKind::Point);
        kinds.push(RowKind::Point);
    }
    Ok(MinimalEquationSet { c_all, a_all, kinds })
}

/// The two equation triples of the reduced system: `C1 x + A1 y = 0` and
/// `C2 x + A2 y = 0` with `A1` the better-conditioned block.
#[derive(Debug, Clone)]
pub struct SelectedBlocks {
    pub c1: SMatrix<f64, 3, 10>,
    pub c2: SMatrix<f64, 3, 10>,
    pub a1: Matrix3<f64>,
    pub a2: Matrix3<f64>,
    /// row indices into the full equation set (group 1 then group 2)
    pub rows: [usize; 6],
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Condition limit on the inverted `A1` block.
const A1_CONDITION_LIMIT: f64 = 1e10;

/// Chooses six rows and partitions them so `A1` is the best-conditioned
/// invertible block.
///
/// Each line keeps its two strongest projector rows. The two-point
/// configuration keeps the plane row unconditionally (the six point rows
/// alone leave a rotation about the point axis free) and drops the point
/// row whose removal best conditions the stacked normals.
pub fn select_six(eqs: &MinimalEquationSet, config: MinimalConfig) -> Result<SelectedBlocks> {
    let mut pool: Vec<usize> = Vec::with_capacity(6);
    for (r, kind) in eqs.kinds.iter().enumerate() {
        match kind {
            RowKind::Line { drop_candidate: true } => {}
            _ => pool.push(r),
        }
    }

    if config == MinimalConfig::Pt2L0Pl1 {
        // pool = 1 plane row + 6 point rows; drop one point row
        let plane_row = pool
            .iter()
            .position(|&r| eqs.kinds[r] == RowKind::Plane)
            .expect("plane row present");
        let mut best: Option<(f64, Vec<usize>)> = None;
        for drop in 0..pool.len() {
            if drop == plane_row {
                continue;
            }
            let kept: Vec<usize> = pool
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, &r)| r)
                .collect();
            let stacked = DMatrix::from_fn(6, 3, |i, j| eqs.a_all[(kept[i], j)]);
            let sv = smallest_singular_value(&stacked);
            if best.as_ref().map_or(true, |(b, _)| sv > *b) {
                best = Some((sv, kept));
            }
        }
        pool = best.expect("some row to drop").1;
    }

    if pool.len() != 6 {
        return Err(Error::DegenerateConfiguration(format!(
            "expected 6 usable rows, found {}",
            pool.len()
        )));
    }

    // all 3-subsets; both orientations of each complementary pair are
    // covered because the subset and its complement both occur
    let mut best: Option<(f64, [usize; 3])> = None;
    for i in 0..4 {
        for j in (i + 1)..5 {
            for k in (j + 1)..6 {
                let tri = [pool[i], pool[j], pool[k]];
                let a1 = Matrix3::from_fn(|r, c| eqs.a_all[(tri[r], c)]);
                let sv = a1.svd(false, false).singular_values;
                let (smax, smin) = (sv[0], sv[2]);
                if smin <= 0.0 || smax / smin > A1_CONDITION_LIMIT {
                    continue;
                }
                if best.as_ref().map_or(true, |(b, _)| smin > *b) {
                    best = Some((smin, tri));
                }
            }
        }
    }
    let (_, group1) = best.ok_or_else(|| {
        Error::DegenerateConfiguration("no equation triple with invertible normal block".into())
    })?;
    let group2: Vec<usize> = pool.iter().copied().filter(|r| !group1.contains(r)).collect();

    let rows = [group1[0], group1[1], group1[2], group2[0], group2[1], group2[2]];
    let c1 = SMatrix::<f64, 3, 10>::from_fn(|r, c| eqs.c_all[(rows[r], c)]);
    let a1 = Matrix3::from_fn(|r, c| eqs.a_all[(rows[r], c)]);
    let c2 = SMatrix::<f64, 3, 10>::from_fn(|r, c| eqs.c_all[(rows[3 + r], c)]);
    let a2 = Matrix3::from_fn(|r, c| eqs.a_all[(rows[3 + r], c)]);
    Ok(SelectedBlocks { c1, c2, a1, a2, rows })
}

/// Eliminates `y` through the first triple: `K = C2 - A2 A1^-1 C1`.
pub fn reduce_to_quadrics(blocks: &SelectedBlocks) -> Result<QuadricTriple> {
    let a1_inv = blocks
        .a1
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("A1 block is singular".into()))?;
    let k = blocks.c2 - blocks.a2 * a1_inv * blocks.c1;
    Ok(QuadricTriple::new(k))
}

impl SelectedBlocks {
    /// `y = -A1^-1 C1 x(s)`.
    pub fn recover_y(&self, s: &Vec3) -> Result<Vec3> {
        let x = x_monomials(s);
        let c1x = Vec3::from_fn(|i, _| (0..10).map(|j| self.c1[(i, j)] * x[j]).sum());
        self.a1
            .lu()
            .solve(&(-c1x))
            .ok_or_else(|| Error::DegenerateConfiguration("A1 block is singular".into()))
    }
}

/// Per-row acceptance tolerance on the selected equations.
const RESIDUAL_REL: f64 = 1e-8;

/// Solves a minimal configuration; up to 8 poses, each satisfying all six
/// selected equations. An empty result on noisy input means no real
/// solution fits exactly.
pub fn solve_minimal(corrs: &CorrespondenceSet) -> Result<Vec<Pose>> {
    let config =
        MinimalConfig::from_counts(corrs.points.len(), corrs.lines.len(), corrs.planes.len())?;
    let eqs = build_minimal_equations(corrs)?;
    let blocks = select_six(&eqs, config)?;
    let quadrics = reduce_to_quadrics(&blocks)?;
    let roots = solve_three_quadrics(&quadrics)?;

    let mut poses = Vec::new();
    for s in roots {
        let y = match blocks.recover_y(&s) {
            Ok(y) => y,
            Err(_) => continue,
        };
        // residuals of all six selected equations
        let x = x_monomials(&s);
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ynorm = y.norm();
        let mut ok = true;
        for r in 0..6 {
            let row = blocks.rows[r];
            let val = eqs.eval_row(row, &s, &y);
            let scale = 1.0
                + eqs.c_all.row(row).norm() * xnorm
                + eqs.a_all.row(row).norm() * ynorm;
            if val.abs() > RESIDUAL_REL * scale {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let denom = 1.0 + s.norm_squared();
        let rotation = CgrVector(s).to_rotation();
        poses.push(Pose::new_unchecked(rotation, y / denom));
    }
    Ok(poses)
}
