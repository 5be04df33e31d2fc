//! Azimuth correction tables: periodic piecewise-linear maps from measured
//! to corrected bearing, used to compensate systematic offsets such as
//! mounting misalignment or beamformer bias measured on a turntable.

use crate::localize::wrap_deg;
use crate::{Error, Result, F};

use super::DoaEstimate;

/// Mapping from measured azimuth to corrected azimuth, interpolated
/// linearly between calibration points and periodically around the circle.
///
/// Corrected values may exceed 360 degrees to express a map that advances
/// monotonically; the table rejects point sets that fold (two measured
/// azimuths mapping across each other), since those are not invertible.
#[derive(Debug, Clone)]
pub struct CorrectionTable {
    /// Sorted by measured azimuth in [0, 360).
    points: Vec<(F, F)>,
}

impl CorrectionTable {
    /// The empty table: every azimuth maps to itself.
    pub fn identity() -> Self {
        Self { points: Vec::new() }
    }

    /// Build a table from (measured, corrected) azimuth pairs in degrees.
    pub fn new(points: Vec<(F, F)>) -> Result<Self> {
        for &(m, c) in &points {
            if !m.is_finite() || !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "correction point ({m}, {c}) is not finite"
                )));
            }
        }
        let mut pts: Vec<(F, F)> = points
            .into_iter()
            .map(|(m, c)| (wrap_deg(m), c))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pts.windows(2) {
            if w[1].0 - w[0].0 < 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate measured azimuth {} in correction table",
                    w[0].0
                )));
            }
        }
        if pts.len() >= 2 {
            for w in pts.windows(2) {
                if w[1].1 <= w[0].1 {
                    return Err(Error::InvalidArgument(format!(
                        "correction table folds between measured {} and {}",
                        w[0].0, w[1].0
                    )));
                }
            }
            let first = pts[0];
            let last = pts[pts.len() - 1];
            if first.1 + 360.0 <= last.1 {
                return Err(Error::InvalidArgument(format!(
                    "correction table folds across the wrap: corrected spans {} to {} \
                     but one full turn of measured azimuth must map to one full turn",
                    first.1, last.1
                )));
            }
        }
        Ok(Self { points: pts })
    }

    pub fn is_identity(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(F, F)] {
        &self.points
    }

    /// Corrected azimuth in [0, 360).
    pub fn apply_azimuth(&self, azimuth_deg: F) -> F {
        let az = wrap_deg(azimuth_deg);
        match self.points.len() {
            0 => az,
            1 => wrap_deg(az + (self.points[0].1 - self.points[0].0)),
            n => {
                let (ma, ca, mb, cb) = if az < self.points[0].0 {
                    let last = self.points[n - 1];
                    let first = self.points[0];
                    (last.0 - 360.0, last.1 - 360.0, first.0, first.1)
                } else if az >= self.points[n - 1].0 {
                    let last = self.points[n - 1];
                    let first = self.points[0];
                    (last.0, last.1, first.0 + 360.0, first.1 + 360.0)
                } else {
                    let i = self.points.partition_point(|p| p.0 <= az) - 1;
                    let a = self.points[i];
                    let b = self.points[i + 1];
                    (a.0, a.1, b.0, b.1)
                };
                let t = (az - ma) / (mb - ma);
                wrap_deg(ca + t * (cb - ca))
            }
        }
    }
}

/// Correct an estimate's azimuth; elevation, power and time pass through.
pub fn apply_correction(estimate: &DoaEstimate, table: &CorrectionTable) -> DoaEstimate {
    DoaEstimate {
        azimuth_deg: table.apply_azimuth(estimate.azimuth_deg),
        ..*estimate
    }
}
