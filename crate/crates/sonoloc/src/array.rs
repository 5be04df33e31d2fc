//! Microphone array geometry and the far-field plane-wave model shared by all
//! estimators.
//!
//! Conventions: array-local frame with the centroid at the origin and z up;
//! microphone 0 of a UCA sits on the +x axis. Azimuth is measured in degrees
//! counterclockwise from +x, elevation in degrees up from the array plane.

use crate::{Error, Result, C, F};
use nalgebra::DVector;

pub const DEFAULT_SPEED_OF_SOUND: F = 343.0;

/// Per-microphone complex phasors for one (frequency, azimuth, elevation).
pub type SteeringVector = DVector<C>;

#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    positions: Vec<[F; 3]>,
    pub speed_of_sound: F,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[F; 3]>, speed_of_sound: F) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "array needs at least 2 microphones, got {}",
                positions.len()
            )));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite microphone position".into(),
            ));
        }
        if !(speed_of_sound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "speed of sound must be positive, got {speed_of_sound}"
            )));
        }
        Ok(Self {
            positions,
            speed_of_sound,
        })
    }

    pub fn n_mics(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[F; 3]] {
        &self.positions
    }

    pub fn centroid(&self) -> [F; 3] {
        let n = self.positions.len() as F;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi / n;
            }
        }
        c
    }

    /// Minimum inter-microphone distance.
    pub fn min_spacing(&self) -> F {
        let mut d_min = F::INFINITY;
        for i in 0..self.positions.len() {
            for j in i + 1..self.positions.len() {
                let d = dist(&self.positions[i], &self.positions[j]);
                d_min = d_min.min(d);
            }
        }
        d_min
    }

    /// Highest frequency free of spatial aliasing: c / (2 * d_min).
    pub fn spatial_nyquist(&self) -> F {
        self.speed_of_sound / (2.0 * self.min_spacing())
    }

    /// Plane-wave arrival delay at each microphone relative to the centroid,
    /// for a wave coming from the given direction. Microphones closer to the
    /// source have negative delay.
    pub fn delays(&self, azimuth_deg: F, elevation_deg: F) -> Vec<F> {
        let az = azimuth_deg.to_radians();
        let el = elevation_deg.to_radians();
        let u = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        let c0 = self.centroid();
        self.positions
            .iter()
            .map(|p| {
                let r = [p[0] - c0[0], p[1] - c0[1], p[2] - c0[2]];
                -(r[0] * u[0] + r[1] * u[1] + r[2] * u[2]) / self.speed_of_sound
            })
            .collect()
    }

    /// Far-field steering vector: entry m is exp(-i 2 pi f tau_m) with tau_m
    /// from [`Self::delays`]. Every entry has unit magnitude.
    pub fn steering_vector(&self, f_hz: F, azimuth_deg: F, elevation_deg: F) -> SteeringVector {
        let taus = self.delays(azimuth_deg, elevation_deg);
        DVector::from_iterator(
            taus.len(),
            taus.iter()
                .map(|tau| C::from_polar(1.0, -2.0 * std::f64::consts::PI * f_hz * tau)),
        )
    }
}

/// Uniform circular array of `n` microphones with the given radius, in the
/// z = 0 plane, microphone k at angle 2 pi k / n, microphone 0 on +x.
pub fn make_uca(n: usize, radius: F) -> Result<ArrayGeometry> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "uniform circular array needs at least 3 microphones, got {n}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let positions = (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as F / n as F;
            [radius * a.cos(), radius * a.sin(), 0.0]
        })
        .collect();
    ArrayGeometry::new(positions, DEFAULT_SPEED_OF_SOUND)
}

fn dist(a: &[F; 3], b: &[F; 3]) -> F {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}
