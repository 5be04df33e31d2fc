//! Bearing-only source localization from platform poses plus gated DoA
//! estimates, and the circular-error statistics used to evaluate every
//! experiment.

use crate::{Error, Result, F};

/// Wrap an angle in degrees into [0, 360).
pub fn wrap_deg(x: F) -> F {
    let w = x.rem_euclid(360.0);
    if w == 360.0 {
        0.0
    } else {
        w
    }
}

/// Platform pose in the world frame; heading in degrees counterclockwise from
/// world +x, wrapped to [0, 360).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: F,
    pub y: F,
    pub heading_deg: F,
}

impl Pose2D {
    pub fn new(x: F, y: F, heading_deg: F) -> Self {
        Self {
            x,
            y,
            heading_deg: wrap_deg(heading_deg),
        }
    }
}

/// Bearing of a source in the world frame given the platform pose and the
/// array-relative azimuth.
pub fn to_global_bearing(pose: &Pose2D, relative_azimuth_deg: F) -> F {
    wrap_deg(pose.heading_deg + relative_azimuth_deg)
}

#[derive(Debug, Clone, Copy)]
pub struct BearingObservation {
    pub pose: Pose2D,
    pub global_bearing_deg: F,
    pub weight: F,
    pub timestamp: F,
}

impl BearingObservation {
    pub fn new(pose: Pose2D, global_bearing_deg: F, weight: F, timestamp: F) -> Self {
        Self {
            pose,
            global_bearing_deg: wrap_deg(global_bearing_deg),
            weight,
            timestamp,
        }
    }
}

/// Why a pair of bearings produced no usable intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// |sin(bearing difference)| below the threshold; position error would be
    /// amplified more than 20x.
    NearParallel,
    /// The intersection lies behind one of the poses (negative ray parameter).
    BehindPose,
    /// The two poses coincide.
    CoincidentPoses,
}

const SIN_DEGENERACY_THRESHOLD: F = 0.05;

/// Intersect the rays cast from two poses along their bearings.
pub fn intersect_pair(
    a: &BearingObservation,
    b: &BearingObservation,
) -> std::result::Result<[F; 2], Degeneracy> {
    let pa = [a.pose.x, a.pose.y];
    let pb = [b.pose.x, b.pose.y];
    if (pa[0] - pb[0]).abs() < 1e-12 && (pa[1] - pb[1]).abs() < 1e-12 {
        return Err(Degeneracy::CoincidentPoses);
    }
    let ba = a.global_bearing_deg.to_radians();
    let bb = b.global_bearing_deg.to_radians();
    let da = [ba.cos(), ba.sin()];
    let db = [bb.cos(), bb.sin()];
    let cross = |u: [F; 2], v: [F; 2]| u[0] * v[1] - u[1] * v[0];
    let den = cross(da, db);
    // da and db are unit vectors, so |den| = |sin(bearing difference)|.
    if den.abs() < SIN_DEGENERACY_THRESHOLD {
        return Err(Degeneracy::NearParallel);
    }
    let dp = [pb[0] - pa[0], pb[1] - pa[1]];
    let ta = cross(dp, db) / den;
    let tb = cross(dp, da) / den;
    if ta < 0.0 || tb < 0.0 {
        return Err(Degeneracy::BehindPose);
    }
    Ok([pa[0] + ta * da[0], pa[1] + ta * da[1]])
}

#[derive(Debug, Clone)]
pub struct SourcePositionEstimate {
    pub point: [F; 2],
    pub intersections_used: usize,
    pub degenerate_pairs: usize,
    /// Median distance of the surviving intersections from the estimate, m.
    pub dispersion: F,
}

/// Median of all pairwise ray intersections; degenerate pairs are dropped and
/// counted.
pub fn localize_source(observations: &[BearingObservation]) -> Result<SourcePositionEstimate> {
    if observations.len() < 2 {
        return Err(Error::InsufficientGeometry(format!(
            "need at least 2 bearing observations, got {}",
            observations.len()
        )));
    }
    let mut points: Vec<[F; 2]> = Vec::new();
    let mut degenerate = 0usize;
    for i in 0..observations.len() {
        for j in i + 1..observations.len() {
            match intersect_pair(&observations[i], &observations[j]) {
                Ok(p) => points.push(p),
                Err(_) => degenerate += 1,
            }
        }
    }
    if points.is_empty() {
        return Err(Error::InsufficientGeometry(format!(
            "no usable ray intersections ({degenerate} degenerate pairs)"
        )));
    }
    let mut xs: Vec<F> = points.iter().map(|p| p[0]).collect();
    let mut ys: Vec<F> = points.iter().map(|p| p[1]).collect();
    xs.sort_by(F::total_cmp);
    ys.sort_by(F::total_cmp);
    let point = [quantile(&xs, 0.5), quantile(&ys, 0.5)];
    let mut dists: Vec<F> = points
        .iter()
        .map(|p| ((p[0] - point[0]).powi(2) + (p[1] - point[1]).powi(2)).sqrt())
        .collect();
    dists.sort_by(F::total_cmp);
    Ok(SourcePositionEstimate {
        point,
        intersections_used: points.len(),
        degenerate_pairs: degenerate,
        dispersion: quantile(&dists, 0.5),
    })
}

/// Absolute circular difference of two angles, in [0, 180].
pub fn circular_error(estimate_deg: F, truth_deg: F) -> F {
    let d = (estimate_deg - truth_deg).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Linear-interpolated order statistic (quantile type 7) on sorted data.
pub fn quantile(sorted: &[F], q: F) -> F {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as F * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as F) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone)]
pub struct ErrorSummary {
    pub sorted_errors: Vec<F>,
    pub median: F,
    pub p95: F,
    /// (error value, cumulative probability) pairs, non-decreasing to 1.
    pub cdf: Vec<(F, F)>,
}

/// Empirical CDF plus median and 95th percentile of absolute errors.
pub fn error_summary(errors: &[F]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("empty error list".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(F::total_cmp);
    let n = sorted.len() as F;
    let cdf = sorted
        .iter()
        .enumerate()
        .map(|(i, e)| (*e, (i + 1) as F / n))
        .collect();
    Ok(ErrorSummary {
        median: quantile(&sorted, 0.5),
        p95: quantile(&sorted, 0.95),
        cdf,
        sorted_errors: sorted,
    })
}
