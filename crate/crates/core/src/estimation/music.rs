//! MUSIC direction finding on the fluid-antenna grid.
//!
//! The spatial spectrum is `1 / (aᴴ U_n U_nᴴ a)` where `U_n` spans the noise
//! subspace of the snapshot covariance. Because the steering vector has unit
//! magnitude per element, the denominator equals `N − ‖U_sᴴ a‖²` with `U_s`
//! the (much smaller) signal subspace, and because the grid is planar the
//! steering vector factorizes per axis; both identities together reduce a
//! full 2D scan from `O(G²·N²)` to `O(G²·B·√N)` denominator work for `G`
//! grid points per axis and `B` assumed sources.
//!
//! The scan runs in direction-cosine coordinates `(k_x, k_z)` — the only
//! components the planar grid can observe — restricted to the unit disk, and
//! the unobserved `k_y` sign is resolved from the deployment half-space.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

use super::{hermitian_eigen, sample_covariance, EstimationError};
use crate::channel::FasGeometry;
use crate::geometry::AnglePair;

/// One local maximum of the spatial spectrum.
#[derive(Debug, Clone, Copy)]
pub struct MusicPeak {
    /// Direction cosine along the grid x axis.
    pub kx: f64,
    /// Direction cosine along the grid z axis.
    pub kz: f64,
    /// Arrival direction implied by the cosines and the half-space choice.
    pub angles: AnglePair,
    /// Spectrum height at the peak.
    pub spectrum: f64,
}

/// Output of one MUSIC scan.
#[derive(Debug, Clone)]
pub struct MusicResult {
    /// Local maxima, strongest first (at most the assumed source count).
    pub peaks: Vec<MusicPeak>,
    /// Signal-subspace basis (`N × B`), reused by local refinement.
    pub signal_subspace: DMatrix<Complex64>,
    /// Shared grid axis of the scan, in direction cosine.
    pub grid_axis: Vec<f64>,
    /// Spectrum denominator per grid point (`kx`-major, `+∞` outside the
    /// unit disk); kept for diagnostics and tests.
    pub denominator: Vec<f64>,
}

/// Converts BS-grid direction cosines to an arrival direction, taking the
/// sign of the unobserved `k_y` from the deployment half-space.
pub fn angles_from_cosines_xz(kx: f64, kz: f64, positive_y: bool) -> AnglePair {
    let ky2 = (1.0 - kx * kx - kz * kz).max(0.0);
    let ky = if positive_y { ky2.sqrt() } else { -(ky2.sqrt()) };
    let el = kz.clamp(-1.0, 1.0).acos();
    let mut az = ky.atan2(kx);
    if az == -PI {
        az = PI;
    }
    AnglePair::new(el, az)
}

/// Spectrum denominator `N − ‖U_sᴴ a(k_x, k_z)‖²` at a continuous point;
/// the local-refinement objective.
pub fn noise_floor(
    signal_subspace: &DMatrix<Complex64>,
    fas: &FasGeometry,
    wavelength: f64,
    kx: f64,
    kz: f64,
) -> f64 {
    let a = fas.steering_k(wavelength, kx, kz);
    let mut power = 0.0;
    for b in 0..signal_subspace.ncols() {
        power += signal_subspace.column(b).dotc(&a).norm_sqr();
    }
    fas.len() as f64 - power
}

/// Runs one MUSIC scan over `grid_points × grid_points` direction-cosine
/// cells and returns up to `n_sources` well-separated peaks, strongest first.
///
/// `positive_y` selects the half-space used when converting peak cosines to
/// angles. Errors when the source count leaves no noise subspace or when the
/// spectrum has no local maximum inside the unit disk.
pub fn music_aoa(
    fas: &FasGeometry,
    wavelength: f64,
    snapshots: &DMatrix<Complex64>,
    n_sources: usize,
    grid_points: usize,
    positive_y: bool,
) -> Result<MusicResult, EstimationError> {
    let n = fas.len();
    if n_sources == 0 || n_sources >= n {
        return Err(EstimationError::TooManySources {
            sources: n_sources,
            positions: n,
        });
    }
    let g = grid_points.max(3);
    let side = fas.side();

    let eig = hermitian_eigen(sample_covariance(snapshots));
    let signal_subspace = eig.vectors.columns(0, n_sources).into_owned();

    // Conjugated eigenvector grids, reshaped to match the x-major position
    // ordering: entry (ix, iz) of source b is conj(u_b[ix·side + iz]).
    let reshaped: Vec<DMatrix<Complex64>> = (0..n_sources)
        .map(|b| {
            DMatrix::from_fn(side, side, |ix, iz| {
                signal_subspace[(ix * side + iz, b)].conj()
            })
        })
        .collect();

    // Per-axis unit phase vectors for every grid value (axes share offsets).
    let axis: Vec<f64> = (0..g)
        .map(|i| -1.0 + 2.0 * i as f64 / (g - 1) as f64)
        .collect();
    let kappa = TAU / wavelength;
    let offsets = fas.axis_offsets();
    let phases: Vec<DVector<Complex64>> = axis
        .iter()
        .map(|&v| {
            DVector::from_iterator(
                side,
                offsets
                    .iter()
                    .map(|&o| Complex64::from_polar(1.0, -kappa * o * v)),
            )
        })
        .collect();

    // Denominator grid: for each kx row, contract the x axis once per
    // source, then sweep kz.
    let mut den = vec![f64::INFINITY; g * g];
    let mut rows: Vec<DVector<Complex64>> = vec![DVector::zeros(side); n_sources];
    for (gx, ax) in phases.iter().enumerate() {
        for (b, m) in reshaped.iter().enumerate() {
            rows[b] = m.transpose() * ax;
        }
        let kx = axis[gx];
        for (gz, az) in phases.iter().enumerate() {
            let kz = axis[gz];
            if kx * kx + kz * kz > 1.0 {
                continue;
            }
            let mut power = 0.0;
            for row in &rows {
                power += row.dot(az).norm_sqr();
            }
            den[gx * g + gz] = (n as f64 - power).max(0.0);
        }
    }

    // Local minima of the denominator, then greedy selection with a
    // two-cell exclusion zone so one lobe yields one peak.
    let mut minima: Vec<(usize, usize, f64)> = Vec::new();
    for gx in 0..g {
        for gz in 0..g {
            let v = den[gx * g + gz];
            if !v.is_finite() {
                continue;
            }
            let mut is_min = true;
            'scan: for dx in -1i64..=1 {
                for dz in -1i64..=1 {
                    if dx == 0 && dz == 0 {
                        continue;
                    }
                    let nx = gx as i64 + dx;
                    let nz = gz as i64 + dz;
                    if nx < 0 || nz < 0 || nx >= g as i64 || nz >= g as i64 {
                        continue;
                    }
                    if den[nx as usize * g + nz as usize] < v {
                        is_min = false;
                        break 'scan;
                    }
                }
            }
            if is_min {
                minima.push((gx, gz, v));
            }
        }
    }
    minima.sort_by(|a, b| a.2.partial_cmp(&b.2).expect("finite denominators"));

    let mut peaks: Vec<MusicPeak> = Vec::new();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    for (gx, gz, v) in minima {
        if peaks.len() == n_sources {
            break;
        }
        let clashes = taken
            .iter()
            .any(|&(px, pz)| gx.abs_diff(px) < 2 && gz.abs_diff(pz) < 2);
        if clashes {
            continue;
        }
        taken.push((gx, gz));
        peaks.push(MusicPeak {
            kx: axis[gx],
            kz: axis[gz],
            angles: angles_from_cosines_xz(axis[gx], axis[gz], positive_y),
            spectrum: 1.0 / v.max(f64::MIN_POSITIVE),
        });
    }
    if peaks.is_empty() {
        return Err(EstimationError::NoSpectrumPeak);
    }
    Ok(MusicResult {
        peaks,
        signal_subspace,
        grid_axis: axis,
        denominator: den,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::refine_2d;
    use crate::geometry::direction_vector;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::TAU;

    const LAMBDA: f64 = 0.1;

    fn small_fas() -> FasGeometry {
        FasGeometry::new(Point3::origin(), 16, LAMBDA / 2.0).unwrap()
    }

    /// Noiseless snapshots from a list of (gain, kx, kz) sources with
    /// random symbols.
    fn synth_snapshots(
        fas: &FasGeometry,
        sources: &[(f64, f64, f64)],
        snapshots: usize,
        rng: &mut ChaCha12Rng,
    ) -> DMatrix<Complex64> {
        let mut y = DMatrix::zeros(fas.len(), snapshots);
        for &(gain, kx, kz) in sources {
            let a = fas.steering_k(LAMBDA, kx, kz);
            for t in 0..snapshots {
                let s = Complex64::from_polar(gain, rng.gen_range(0.0..TAU));
                for n in 0..fas.len() {
                    y[(n, t)] += a[n] * s;
                }
            }
        }
        y
    }

    /// Brute-force spectrum denominator using the explicit noise subspace,
    /// the textbook form the fast path must reproduce.
    fn naive_denominator(
        fas: &FasGeometry,
        snapshots: &DMatrix<Complex64>,
        n_sources: usize,
        kx: f64,
        kz: f64,
    ) -> f64 {
        let eig = hermitian_eigen(sample_covariance(snapshots));
        let n = fas.len();
        let un = eig.vectors.columns(n_sources, n - n_sources);
        let a = fas.steering_k(LAMBDA, kx, kz);
        let proj = un.adjoint() * &a;
        proj.norm_squared()
    }

    #[test]
    fn fast_denominator_matches_noise_subspace_oracle() {
        let fas = small_fas();
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        for trial in 0..20 {
            let b = 1 + (trial % 2);
            let sources: Vec<(f64, f64, f64)> = (0..b)
                .map(|_| {
                    (
                        rng.gen_range(0.5..2.0),
                        rng.gen_range(-0.6..0.6),
                        rng.gen_range(-0.6..0.6),
                    )
                })
                .collect();
            let y = synth_snapshots(&fas, &sources, 24, &mut rng);
            let res = music_aoa(&fas, LAMBDA, &y, b, 21, true).unwrap();
            let g = res.grid_axis.len();
            for gx in (0..g).step_by(4) {
                for gz in (0..g).step_by(4) {
                    let v = res.denominator[gx * g + gz];
                    if !v.is_finite() {
                        continue;
                    }
                    let oracle =
                        naive_denominator(&fas, &y, b, res.grid_axis[gx], res.grid_axis[gz]);
                    assert_abs_diff_eq!(v, oracle, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn on_grid_source_peaks_at_its_cell() {
        let fas = small_fas();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        // Grid of 21 points has step 0.1; put the source exactly on a node.
        let y = synth_snapshots(&fas, &[(1.0, 0.3, -0.2)], 16, &mut rng);
        let res = music_aoa(&fas, LAMBDA, &y, 1, 21, true).unwrap();
        assert_eq!(res.peaks.len(), 1);
        assert_abs_diff_eq!(res.peaks[0].kx, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(res.peaks[0].kz, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn off_grid_source_is_recovered_by_refinement() {
        let fas = small_fas();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let truth = (0.234_567, -0.345_678);
        let y = synth_snapshots(&fas, &[(1.0, truth.0, truth.1)], 16, &mut rng);
        let res = music_aoa(&fas, LAMBDA, &y, 1, 41, true).unwrap();
        let peak = res.peaks[0];
        let cell = 2.0 / 40.0;
        assert!((peak.kx - truth.0).abs() <= cell);
        assert!((peak.kz - truth.1).abs() <= cell);
        let ((kx, kz), _) = refine_2d(
            (peak.kx, peak.kz),
            (cell, cell),
            (peak.kx - 1.5 * cell, peak.kz - 1.5 * cell),
            (peak.kx + 1.5 * cell, peak.kz + 1.5 * cell),
            1e-10,
            20_000,
            |kx, kz| noise_floor(&res.signal_subspace, &fas, LAMBDA, kx, kz),
        );
        assert_abs_diff_eq!(kx, truth.0, epsilon = 1e-7);
        assert_abs_diff_eq!(kz, truth.1, epsilon = 1e-7);
    }

    #[test]
    fn two_separated_sources_give_two_peaks() {
        let fas = small_fas();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let y = synth_snapshots(&fas, &[(1.0, 0.4, 0.1), (0.8, -0.3, -0.4)], 32, &mut rng);
        let res = music_aoa(&fas, LAMBDA, &y, 2, 41, true).unwrap();
        assert_eq!(res.peaks.len(), 2);
        let mut found: Vec<(f64, f64)> = res.peaks.iter().map(|p| (p.kx, p.kz)).collect();
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert_abs_diff_eq!(found[0].0, -0.3, epsilon = 0.051);
        assert_abs_diff_eq!(found[0].1, -0.4, epsilon = 0.051);
        assert_abs_diff_eq!(found[1].0, 0.4, epsilon = 0.051);
        assert_abs_diff_eq!(found[1].1, 0.1, epsilon = 0.051);
    }

    #[test]
    fn peaks_stay_inside_the_unit_disk() {
        let fas = small_fas();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let y = synth_snapshots(&fas, &[(1.0, 0.7, 0.7)], 16, &mut rng);
        let res = music_aoa(&fas, LAMBDA, &y, 1, 41, true).unwrap();
        for p in &res.peaks {
            assert!(p.kx * p.kx + p.kz * p.kz <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn source_count_must_leave_a_noise_subspace() {
        let fas = small_fas();
        let y = DMatrix::<Complex64>::zeros(16, 4);
        assert!(matches!(
            music_aoa(&fas, LAMBDA, &y, 16, 21, true),
            Err(EstimationError::TooManySources { .. })
        ));
        assert!(matches!(
            music_aoa(&fas, LAMBDA, &y, 0, 21, true),
            Err(EstimationError::TooManySources { .. })
        ));
    }

    #[test]
    fn cosine_to_angle_conversion_respects_half_space() {
        let pair = angles_from_cosines_xz(0.2, -0.3, true);
        let k = direction_vector(pair);
        assert_relative_eq!(k.x, 0.2, epsilon = 1e-12);
        assert_relative_eq!(k.z, -0.3, epsilon = 1e-12);
        assert!(k.y >= 0.0);
        let pair = angles_from_cosines_xz(0.2, -0.3, false);
        let k = direction_vector(pair);
        assert!(k.y <= 0.0);
    }
}
