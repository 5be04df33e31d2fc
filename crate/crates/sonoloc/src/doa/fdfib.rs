//! Frequency-invariant beamforming on a uniform circular array via phase
//! modes. Each narrowband covariance is mapped into phase-mode space, where
//! the steering response of mode m is exp(-i m phi) regardless of frequency,
//! so the per-bin steered powers add coherently across a wide band. Modes
//! whose Bessel gain is below a floor are dropped per bin to avoid noise
//! amplification near Bessel zeros.

use nalgebra::{DMatrix, DVector};

use crate::array::ArrayGeometry;
use crate::localize::wrap_deg;
use crate::spectra::SpectralCovarianceSet;
use crate::{Error, Result, C, F};

use super::{parabolic_offset, AngleGrid};

/// Modes with |J_m(kr)| below this are excluded for that bin.
pub const MODE_GAIN_FLOOR: F = 0.05;

#[derive(Debug, Clone, Copy)]
pub struct FdfibCandidate {
    pub azimuth_deg: F,
    /// Wideband steered power at the peak.
    pub power: F,
}

pub(crate) struct UcaParams {
    pub radius: F,
    /// Mic bearing about the ring centroid, radians, one per channel.
    pub angles: Vec<F>,
}

/// Extract ring radius and mic bearings, verifying the geometry really is a
/// planar uniform circular array (the phase-mode identities require it).
pub(crate) fn uca_params(geometry: &ArrayGeometry) -> Result<UcaParams> {
    let pos = geometry.positions();
    let n = pos.len();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "phase-mode beamforming needs at least 3 microphones".into(),
        ));
    }
    let c = geometry.centroid();
    let radii: Vec<F> = pos
        .iter()
        .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
        .collect();
    let radius = radii.iter().sum::<F>() / n as F;
    if radius <= 0.0 {
        return Err(Error::InvalidArgument(
            "phase-mode beamforming requires a circular array with nonzero radius".into(),
        ));
    }
    let tol = 1e-6 * radius.max(1e-3);
    if radii.iter().any(|&r| (r - radius).abs() > tol)
        || pos.iter().any(|p| (p[2] - c[2]).abs() > tol)
    {
        return Err(Error::InvalidArgument(
            "phase-mode beamforming requires a planar uniform circular array".into(),
        ));
    }
    let angles: Vec<F> = pos
        .iter()
        .map(|p| (p[1] - c[1]).atan2(p[0] - c[0]))
        .collect();
    let mut sorted = angles.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let step = std::f64::consts::TAU / n as F;
    for i in 0..n {
        let next = if i + 1 < n {
            sorted[i + 1]
        } else {
            sorted[0] + std::f64::consts::TAU
        };
        if ((next - sorted[i]) - step).abs() > 1e-6 {
            return Err(Error::InvalidArgument(
                "phase-mode beamforming requires equally spaced microphones".into(),
            ));
        }
    }
    Ok(UcaParams { radius, angles })
}

/// J_m for any integer order via J_{-m}(x) = (-1)^m J_m(x).
pub(crate) fn bessel_j(m: i32, x: F) -> F {
    let v = libm::jn(m.unsigned_abs() as i32, x);
    if m < 0 && m % 2 != 0 {
        -v
    } else {
        v
    }
}

/// Phase-mode orders usable at a given kr.
pub(crate) fn kept_modes(kr: F, m_max: i32) -> Vec<i32> {
    (-m_max..=m_max)
        .filter(|&m| bessel_j(m, kr).abs() >= MODE_GAIN_FLOOR)
        .collect()
}

/// Wideband azimuth guesses: transform every covariance bin to phase-mode
/// space, sum, and scan the mode-space steered power over the azimuth grid.
/// Returns every local maximum, refined by quadratic interpolation, sorted
/// by descending power.
pub fn fdfib_guess(
    cov: &SpectralCovarianceSet,
    geometry: &ArrayGeometry,
    grid: &AngleGrid,
) -> Result<Vec<FdfibCandidate>> {
    let uca = uca_params(geometry)?;
    let n = geometry.n_mics();
    if cov.n_mics() != n {
        return Err(Error::InvalidArgument(format!(
            "covariance is over {} channels but the array has {} microphones",
            cov.n_mics(),
            n
        )));
    }
    if cov.matrices.is_empty() {
        return Err(Error::DegenerateInput("no covariance bins".into()));
    }
    let m_max = ((n - 1) / 2) as i32;
    let dim = (2 * m_max + 1) as usize;
    let mut mode_cov = DMatrix::<C>::zeros(dim, dim);
    let mut any = false;
    for (freq, r) in cov.bin_freqs.iter().zip(&cov.matrices) {
        let kr = std::f64::consts::TAU * freq * uca.radius / geometry.speed_of_sound;
        let kept = kept_modes(kr, m_max);
        if kept.is_empty() {
            continue;
        }
        any = true;
        let t = DMatrix::<C>::from_fn(kept.len(), n, |mi, ni| {
            let m = kept[mi];
            let gain = C::from_polar(1.0, m as F * std::f64::consts::FRAC_PI_2)
                * (n as F * bessel_j(m, kr));
            C::from_polar(1.0, -(m as F) * uca.angles[ni]) / gain
        });
        let b = &t * r * t.adjoint();
        for (a, &ma) in kept.iter().enumerate() {
            for (bb, &mb) in kept.iter().enumerate() {
                mode_cov[((ma + m_max) as usize, (mb + m_max) as usize)] += b[(a, bb)];
            }
        }
    }
    if !any {
        return Err(Error::DegenerateInput(
            "every phase mode is below the Bessel gain floor in this band".into(),
        ));
    }
    if mode_cov.trace().re.abs() <= 1e-30 {
        return Err(Error::DegenerateInput("steered power is flat".into()));
    }

    let azimuths = grid.azimuths();
    let power: Vec<F> = azimuths
        .iter()
        .map(|az| {
            let phi = az.to_radians();
            let d = DVector::<C>::from_fn(dim, |i, _| {
                C::from_polar(1.0, -((i as i32 - m_max) as F) * phi)
            });
            (d.adjoint() * &mode_cov * &d)[(0, 0)].re
        })
        .collect();

    let len = power.len();
    let mut candidates = Vec::new();
    for i in 0..len {
        let left = power[(i + len - 1) % len];
        let right = power[(i + 1) % len];
        if len >= 3 && power[i] > left && power[i] > right {
            let delta = parabolic_offset(left, power[i], right);
            candidates.push(FdfibCandidate {
                azimuth_deg: wrap_deg(azimuths[i] + delta * grid.az_step_deg),
                power: power[i],
            });
        }
    }
    if candidates.is_empty() {
        // degenerate grids (fewer than 3 azimuths) or plateaus: fall back to
        // the arg max if the spectrum is not flat
        let (mut imax, mut vmax) = (0, power[0]);
        let mut vmin = power[0];
        for (i, &v) in power.iter().enumerate() {
            if v > vmax {
                imax = i;
                vmax = v;
            }
            vmin = vmin.min(v);
        }
        if vmax - vmin <= 1e-12 * vmax.abs().max(1e-30) {
            return Err(Error::DegenerateInput("steered power is flat".into()));
        }
        candidates.push(FdfibCandidate {
            azimuth_deg: azimuths[imax],
            power: vmax,
        });
    }
    candidates.sort_by(|a, b| {
        b.power
            .partial_cmp(&a.power)
            .unwrap()
            .then(a.azimuth_deg.partial_cmp(&b.azimuth_deg).unwrap())
    });
    Ok(candidates)
}
