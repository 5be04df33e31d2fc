//! Coherent signal-subspace focusing: maps every narrowband covariance onto
//! a common focusing frequency with least-squares transforms built from
//! steering vectors at anchor directions around the preliminary azimuths,
//! then averages. The focused matrix feeds a single narrowband subspace
//! search that benefits from the whole band's energy.

use nalgebra::DMatrix;

use crate::array::ArrayGeometry;
use crate::localize::wrap_deg;
use crate::spectra::SpectralCovarianceSet;
use crate::{Error, Result, C, F};

/// Anchor fan half-width and spacing around each preliminary azimuth.
const ANCHOR_SPAN_DEG: F = 10.0;
const ANCHOR_STEP_DEG: F = 5.0;
/// Anchors closer than this merge into one.
const ANCHOR_DEDUPE_DEG: F = 0.5;
/// Bins whose anchor steering matrix is worse conditioned than this are
/// excluded from the focused average.
const MAX_ANCHOR_CONDITION: F = 1e8;

#[derive(Debug, Clone)]
pub struct FocusedCovariance {
    /// Hermitian focused covariance at `f0`.
    pub matrix: DMatrix<C>,
    /// Focusing frequency, Hz.
    pub f0: F,
    /// Anchor azimuths used for the transforms, degrees.
    pub anchors: Vec<F>,
    /// Bins dropped for ill-conditioned anchors or negligible power.
    pub skipped_bins: usize,
}

/// Fan of anchor azimuths around the preliminary estimates, deduplicated.
pub(crate) fn anchor_azimuths(preliminary_deg: &[F]) -> Vec<F> {
    let mut anchors: Vec<F> = Vec::new();
    let steps = (ANCHOR_SPAN_DEG / ANCHOR_STEP_DEG).round() as i32;
    for &p in preliminary_deg {
        for s in -steps..=steps {
            let az = wrap_deg(p + s as F * ANCHOR_STEP_DEG);
            let dup = anchors.iter().any(|&a| {
                let d = (a - az).abs();
                d.min(360.0 - d) < ANCHOR_DEDUPE_DEG
            });
            if !dup {
                anchors.push(az);
            }
        }
    }
    anchors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    anchors
}

/// Focus a set of narrowband covariances onto `f0`.
///
/// Each bin is trace-normalized so loud bins do not dominate, transformed by
/// T_j = A_0 pinv(A_j) where the columns of A are anchor steering vectors,
/// and averaged. Bins where the anchor matrix is near-singular are skipped
/// and counted.
pub fn css_focus(
    cov: &SpectralCovarianceSet,
    geometry: &ArrayGeometry,
    f0: F,
    preliminary_deg: &[F],
) -> Result<FocusedCovariance> {
    if preliminary_deg.is_empty() {
        return Err(Error::InvalidArgument(
            "focusing needs at least one preliminary azimuth".into(),
        ));
    }
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "focusing frequency {f0} Hz must be positive"
        )));
    }
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
    let anchors = anchor_azimuths(preliminary_deg);
    let steering_at = |f: F| {
        DMatrix::<C>::from_fn(n, anchors.len(), |r, c| {
            geometry.steering_vector(f, anchors[c], 0.0)[r]
        })
    };
    let a0 = steering_at(f0);
    let mut acc = DMatrix::<C>::zeros(n, n);
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (freq, r) in cov.bin_freqs.iter().zip(&cov.matrices) {
        let tr = r.trace().re;
        if !(tr > 1e-30) {
            skipped += 1;
            continue;
        }
        let aj = steering_at(*freq);
        let svd = aj.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 0.0) || smax / smin > MAX_ANCHOR_CONDITION {
            skipped += 1;
            continue;
        }
        let pinv = match svd.pseudo_inverse(smax * 1e-13) {
            Ok(p) => p,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let t = &a0 * pinv;
        acc += (&t * r * t.adjoint()).scale(1.0 / tr);
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateInput(
            "every covariance bin was skipped during focusing".into(),
        ));
    }
    acc /= C::new(used as F, 0.0);
    let herm = (&acc + acc.adjoint()).scale(0.5);
    Ok(FocusedCovariance {
        matrix: herm,
        f0,
        anchors,
        skipped_bins: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::make_uca;

    fn rank1_cov(geometry: &ArrayGeometry, freqs: &[F], az: F) -> SpectralCovarianceSet {
        let n = geometry.n_mics();
        let matrices = freqs
            .iter()
            .map(|&f| {
                let a = geometry.steering_vector(f, az, 0.0);
                DMatrix::<C>::from_fn(n, n, |r, c| a[r] * a[c].conj())
            })
            .collect();
        SpectralCovarianceSet {
            bin_freqs: freqs.to_vec(),
            matrices,
            frames_averaged: 1,
        }
    }

    #[test]
    fn anchor_fan_spacing_and_dedupe() {
        let a = anchor_azimuths(&[90.0]);
        assert_eq!(a, vec![80.0, 85.0, 90.0, 95.0, 100.0]);
        // overlapping fans merge the shared anchors
        let b = anchor_azimuths(&[90.0, 100.0]);
        assert_eq!(b, vec![80.0, 85.0, 90.0, 95.0, 100.0, 105.0, 110.0]);
        // wraps across zero
        let c = anchor_azimuths(&[2.0]);
        assert_eq!(c, vec![2.0, 7.0, 12.0, 352.0, 357.0]);
    }

    #[test]
    fn source_on_anchor_is_a_fixed_point() {
        // single source exactly on an anchor: every transformed bin equals
        // the rank-1 covariance at f0, so the focused matrix is proportional
        // to it (trace normalization changes only the scale)
        let g = make_uca(5, 0.068).unwrap();
        let freqs = [500.0, 700.0, 900.0, 1200.0, 1600.0];
        let f0: F = (200.0_f64 * 2000.0).sqrt();
        let cov = rank1_cov(&g, &freqs, 90.0);
        let fc = css_focus(&cov, &g, f0, &[90.0]).unwrap();
        assert_eq!(fc.skipped_bins, 0, "no bin should be skipped in this band");
        let a = g.steering_vector(f0, 90.0, 0.0);
        let target = DMatrix::<C>::from_fn(5, 5, |r, c| a[r] * a[c].conj());
        // compare up to overall scale
        let scale = fc.matrix.trace().re / target.trace().re;
        assert!(scale > 0.0);
        let diff = (&fc.matrix - target.scale(scale)).norm() / fc.matrix.norm();
        assert!(diff < 1e-9, "relative focusing error {diff}");
    }

    #[test]
    fn focused_matrix_is_hermitian() {
        let g = make_uca(5, 0.068).unwrap();
        let freqs = [600.0, 1000.0, 1500.0];
        let cov = rank1_cov(&g, &freqs, 37.0);
        let fc = css_focus(&cov, &g, 800.0, &[35.0]).unwrap();
        let dev = (&fc.matrix - fc.matrix.adjoint()).norm();
        assert!(dev < 1e-12);
    }

    #[test]
    fn ill_conditioned_bins_are_counted() {
        // at 1 Hz the anchor steering vectors are numerically identical, so
        // the anchor matrix is rank deficient and the bin must be skipped
        let g = make_uca(5, 0.068).unwrap();
        let cov = rank1_cov(&g, &[1.0, 900.0], 120.0);
        let fc = css_focus(&cov, &g, 800.0, &[120.0]).unwrap();
        assert_eq!(fc.skipped_bins, 1);
        let all_bad = rank1_cov(&g, &[1.0, 2.0], 120.0);
        assert!(matches!(
            css_focus(&all_bad, &g, 800.0, &[120.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn zero_power_bins_are_skipped() {
        let g = make_uca(5, 0.068).unwrap();
        let mut cov = rank1_cov(&g, &[700.0, 900.0], 10.0);
        cov.matrices[0].fill(C::new(0.0, 0.0));
        let fc = css_focus(&cov, &g, 800.0, &[10.0]).unwrap();
        assert_eq!(fc.skipped_bins, 1);
    }

    #[test]
    fn validates_inputs() {
        let g = make_uca(5, 0.068).unwrap();
        let cov = rank1_cov(&g, &[700.0], 10.0);
        assert!(css_focus(&cov, &g, 800.0, &[]).is_err());
        assert!(css_focus(&cov, &g, -5.0, &[10.0]).is_err());
        let g4 = make_uca(4, 0.068).unwrap();
        assert!(css_focus(&cov, &g4, 800.0, &[10.0]).is_err());
    }
}
