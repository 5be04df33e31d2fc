//! Narrowband subspace direction finding on the focused covariance, plus
//! singular-value source counting. The pseudo-spectrum is the reciprocal
//! distance from a candidate steering vector to the signal subspace; peaks
//! are refined by quadratic interpolation on the search grid.

use nalgebra::{DMatrix, DVector};

use crate::array::ArrayGeometry;
use crate::localize::wrap_deg;
use crate::spectra::SpectralCovarianceSet;
use crate::{Error, Result, C, F};

use super::{parabolic_offset, AngleGrid, DoaEstimate};

/// Floor on the subspace distance; exact nullspace hits saturate at 1/floor.
const DISTANCE_FLOOR: F = 1e-18;

#[derive(Debug, Clone)]
pub struct MusicResult {
    /// Up to k spectrum peaks, strongest first. `block_time` is zero; the
    /// caller stamps it.
    pub peaks: Vec<DoaEstimate>,
    /// Eigenvalues of the (Hermitized) input, ascending.
    pub eigenvalues: Vec<F>,
}

/// Number of sources from the singular-value profile of an averaged
/// covariance matrix: count ratios above `rho`, clamped to
/// [1, max(1, n - 2)]. Prefer feeding the focused covariance: focusing
/// aligns the per-bin steering vectors at one frequency, so a wideband
/// source stays rank-1 there, while a raw band average smears each source
/// across extra singular values as its steering vector rotates with
/// frequency.
pub fn source_count_from_matrix(matrix: &DMatrix<C>, rho: F) -> Result<usize> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "singular value ratio threshold {rho} must lie in (0, 1)"
        )));
    }
    let n = matrix.nrows();
    let mut sv: Vec<F> = matrix
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = sv.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::DegenerateInput("covariance has no energy".into()));
    }
    let count = sv.iter().filter(|&&s| s / top > rho).count();
    Ok(count.clamp(1, (n.saturating_sub(2)).max(1)))
}

/// Source count from the band-averaged, trace-normalized covariance set.
pub fn estimate_source_count(cov: &SpectralCovarianceSet, rho: F) -> Result<usize> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "singular value ratio threshold {rho} must lie in (0, 1)"
        )));
    }
    let n = cov.n_mics();
    if n == 0 || cov.matrices.is_empty() {
        return Err(Error::DegenerateInput("no covariance bins".into()));
    }
    let mut avg = DMatrix::<C>::zeros(n, n);
    let mut used = 0usize;
    for r in &cov.matrices {
        let tr = r.trace().re;
        if tr > 1e-30 {
            avg += r.scale(1.0 / tr);
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateInput(
            "all covariance bins have negligible power".into(),
        ));
    }
    avg /= C::new(used as F, 0.0);
    source_count_from_matrix(&avg, rho)
}

/// Subspace pseudo-spectrum peak search at frequency `f0` for `k` sources.
pub fn music_spectrum(
    focused: &DMatrix<C>,
    geometry: &ArrayGeometry,
    f0: F,
    grid: &AngleGrid,
    k: usize,
) -> Result<MusicResult> {
    let n = geometry.n_mics();
    if focused.nrows() != n || focused.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "focused covariance is {}x{} but the array has {n} microphones",
            focused.nrows(),
            focused.ncols()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "source count {k} must lie in [1, {}] to leave a noise subspace",
            n - 1
        )));
    }
    if focused.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::DegenerateInput(
            "focused covariance has non-finite entries".into(),
        ));
    }
    let herm = (focused + focused.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let eigenvalues: Vec<F> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    // noise subspace: eigenvectors of the n - k smallest eigenvalues
    let noise = DMatrix::<C>::from_fn(n, n - k, |r, c| eig.eigenvectors[(r, order[c])]);

    let azimuths = grid.azimuths();
    let elevations = grid.elevations();
    let inv_sqrt_n = 1.0 / (n as F).sqrt();
    let mut dist = vec![vec![0.0; azimuths.len()]; elevations.len()];
    let mut a = DVector::<C>::zeros(n);
    for (ei, &el) in elevations.iter().enumerate() {
        for (ai, &az) in azimuths.iter().enumerate() {
            let sv = geometry.steering_vector(f0, az, el);
            for i in 0..n {
                a[i] = sv[i] * inv_sqrt_n;
            }
            let mut d = 0.0;
            for col in 0..n - k {
                let mut dot = C::new(0.0, 0.0);
                for row in 0..n {
                    dot += noise[(row, col)].conj() * a[row];
                }
                d += dot.norm_sqr();
            }
            dist[ei][ai] = d;
        }
    }

    let peaks = find_peaks(&dist, &azimuths, &elevations, grid, k)?;
    Ok(MusicResult { peaks, eigenvalues })
}

/// Interpolated offset of a subspace-distance minimum. The distance, not
/// its reciprocal, is locally quadratic, so the parabola is fit there. When
/// the center sits at the numeric floor (exact nullspace hit) the neighbors
/// carry no refinement information and the grid point is already exact.
fn distance_min_offset(left: F, center: F, right: F) -> F {
    if center <= 1e-9 * left.min(right) {
        return 0.0;
    }
    parabolic_offset(-left, -center, -right)
}

fn find_peaks(
    dist: &[Vec<F>],
    azimuths: &[F],
    elevations: &[F],
    grid: &AngleGrid,
    k: usize,
) -> Result<Vec<DoaEstimate>> {
    let n_el = elevations.len();
    let n_az = azimuths.len();
    let mut raw: Vec<(F, usize, usize)> = Vec::new();
    let mut lo = dist[0][0];
    let mut hi = dist[0][0];
    for e in 0..n_el {
        for a in 0..n_az {
            let v = dist[e][a];
            lo = lo.min(v);
            hi = hi.max(v);
            let mut is_min = n_az >= 3;
            if n_az >= 3 {
                let left = dist[e][(a + n_az - 1) % n_az];
                let right = dist[e][(a + 1) % n_az];
                is_min &= v < left && v < right;
            }
            if e > 0 {
                is_min &= v < dist[e - 1][a];
            }
            if e + 1 < n_el {
                is_min &= v < dist[e + 1][a];
            }
            if is_min {
                raw.push((v, a, e));
            }
        }
    }
    if raw.is_empty() {
        // plateau or tiny grid: take the arg min if the spectrum varies
        if hi - lo <= 1e-12 * hi.abs().max(1e-30) {
            return Err(Error::DegenerateInput("subspace spectrum is flat".into()));
        }
        let mut best = (dist[0][0], 0usize, 0usize);
        for (e, row) in dist.iter().enumerate() {
            for (a, &v) in row.iter().enumerate() {
                if v < best.0 {
                    best = (v, a, e);
                }
            }
        }
        raw.push(best);
    }
    raw.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap()
            .then(azimuths[x.1].partial_cmp(&azimuths[y.1]).unwrap())
            .then(elevations[x.2].partial_cmp(&elevations[y.2]).unwrap())
    });
    Ok(raw
        .into_iter()
        .take(k)
        .map(|(v, a, e)| {
            let az = if n_az >= 3 {
                let left = dist[e][(a + n_az - 1) % n_az];
                let right = dist[e][(a + 1) % n_az];
                wrap_deg(
                    azimuths[a] + distance_min_offset(left, v, right) * grid.az_step_deg,
                )
            } else {
                azimuths[a]
            };
            let el = if e > 0 && e + 1 < n_el {
                elevations[e]
                    + distance_min_offset(dist[e - 1][a], v, dist[e + 1][a])
                        * grid.el_step_deg
            } else {
                elevations[e]
            };
            DoaEstimate {
                azimuth_deg: az,
                elevation_deg: el,
                power: 1.0 / v.max(DISTANCE_FLOOR),
                block_time: 0.0,
            }
        })
        .collect())
}
