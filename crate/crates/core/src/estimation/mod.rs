//! Angle estimation from one received frame.
//!
//! The pipeline implemented by [`estimate_frame`]:
//!
//! 1. [`decouple`] splits the frame into a direct-path observation (half-sum)
//!    and a surface-path observation (half-difference), exploiting the pilot
//!    repetition and the weight sign flip of [`crate::waveform`].
//! 2. [`music::music_aoa`] finds coarse arrival directions on each branch,
//!    and [`refine_2d`] polishes the coarse peaks with a derivative-free
//!    compass search in direction-cosine coordinates. When the direct branch
//!    is configured for several arrivals they are mutually coherent (one
//!    pilot stream through fixed gains), so a joint beamformer-seeded
//!    deflation fit replaces the subspace scan there.
//! 3. [`cascade::estimate_cascade`] scans the cascaded user→surface link in
//!    sum-cosine coordinates after spatially peeling the surface arrival,
//!    and the user→surface direction is recovered by subtracting the known
//!    surface→BS departure cosines.

pub mod cascade;
pub mod music;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::channel::{ArisGeometry, FasGeometry};
use crate::geometry::{direction_vector, AnglePair};

/// Errors surfaced by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    /// Frames must have an even number of slots to decouple.
    #[error("frame slot count must be positive and even, got {0}")]
    BadSlotCount(usize),
    /// The assumed source count must leave room for a noise subspace.
    #[error("cannot estimate {sources} sources with {positions} antenna positions")]
    TooManySources {
        /// Requested signal-subspace dimension.
        sources: usize,
        /// Available antenna positions.
        positions: usize,
    },
    /// The spatial spectrum had no local maximum inside the search region.
    #[error("no spectrum peak found")]
    NoSpectrumPeak,
    /// The cascaded scan landed outside the physical direction-cosine range,
    /// so no arrival direction exists for it.
    #[error("cascaded estimate maps outside feasible arrival directions")]
    InfeasibleCascade,
}

/// The two decoupled half-frames.
#[derive(Debug, Clone)]
pub struct DecoupledSignals {
    /// Direct-path branch `(Y₁ + Y₂)/2`, `N × T/2`. Per slot `t` it equals
    /// `h_ub·x_t` plus noise of variance halved relative to the raw frame.
    pub y_los: DMatrix<Complex64>,
    /// Surface-path branch `(Y₁ − Y₂)/2`, `N × T/2`, containing the cascade
    /// response under the first-half weights.
    pub y_nlos: DMatrix<Complex64>,
}

/// Splits a frame into direct and surface observations by summing and
/// differencing the two half-frames. Requires the pilot-repeat / sign-flip
/// schedule; surface-injected noise does not cancel, only its variance halves.
pub fn decouple(y: &DMatrix<Complex64>) -> Result<DecoupledSignals, EstimationError> {
    let t_total = y.ncols();
    if t_total == 0 || t_total % 2 != 0 {
        return Err(EstimationError::BadSlotCount(t_total));
    }
    let half = t_total / 2;
    let y1 = y.columns(0, half);
    let y2 = y.columns(half, half);
    Ok(DecoupledSignals {
        y_los: (y1 + y2).map(|v| v * 0.5),
        y_nlos: (y1 - y2).map(|v| v * 0.5),
    })
}

/// Sample covariance `Y·Yᴴ / K` of an `N × K` snapshot matrix.
pub fn sample_covariance(y: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let k = y.ncols().max(1) as f64;
    let mut r = y * y.adjoint();
    r.apply(|v| *v /= k);
    r
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Real eigenvalues, largest first.
    pub values: Vec<f64>,
    /// Matching unit eigenvectors as columns.
    pub vectors: DMatrix<Complex64>,
}

/// Eigendecomposition wrapper that fixes the ordering convention.
pub fn hermitian_eigen(mat: DMatrix<Complex64>) -> EigenDecomposition {
    let n = mat.nrows();
    let se = mat.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("eigenvalues of a Hermitian matrix are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    EigenDecomposition { values, vectors }
}

/// Derivative-free compass (pattern) search minimizing `objective` over a
/// clamped box. Probes the 8 compass neighbors at the current step size,
/// moves to the best improving one, and halves the step when none improves;
/// stops once both steps drop below `tol` or `max_evals` is exhausted.
///
/// The returned objective value never exceeds `objective(start)`.
pub fn refine_2d<F: FnMut(f64, f64) -> f64>(
    start: (f64, f64),
    step: (f64, f64),
    lower: (f64, f64),
    upper: (f64, f64),
    tol: f64,
    max_evals: usize,
    mut objective: F,
) -> ((f64, f64), f64) {
    const DIRS: [(f64, f64); 8] = [
        (-1.0, 0.0),
        (1.0, 0.0),
        (0.0, -1.0),
        (0.0, 1.0),
        (-1.0, -1.0),
        (-1.0, 1.0),
        (1.0, -1.0),
        (1.0, 1.0),
    ];
    let mut cur = (
        start.0.clamp(lower.0, upper.0),
        start.1.clamp(lower.1, upper.1),
    );
    let mut f_cur = objective(cur.0, cur.1);
    let mut s = step;
    let mut evals = 1usize;
    while (s.0 > tol || s.1 > tol) && evals < max_evals {
        let mut best: Option<((f64, f64), f64)> = None;
        for (dx, dy) in DIRS {
            let cand = (
                (cur.0 + dx * s.0).clamp(lower.0, upper.0),
                (cur.1 + dy * s.1).clamp(lower.1, upper.1),
            );
            if cand == cur {
                continue;
            }
            let f = objective(cand.0, cand.1);
            evals += 1;
            if f < f_cur && best.map_or(true, |(_, fb)| f < fb) {
                best = Some((cand, f));
            }
        }
        match best {
            Some((c, f)) => {
                cur = c;
                f_cur = f;
            }
            None => s = (s.0 / 2.0, s.1 / 2.0),
        }
    }
    (cur, f_cur)
}

/// Arrival direction from its y/z direction cosines, resolving the sign of
/// the unobserved x cosine from the deployment half-space.
///
/// The surface's element offsets span y and z only, so the estimated cosines
/// are `(k_y, k_z)`; `positive_x` states on which side of the surface plane
/// the sources live. Returns [`EstimationError::InfeasibleCascade`] when the
/// pair lies outside the unit disk (beyond a small numerical tolerance, which
/// is clamped).
pub fn angles_from_cosines_yz(
    ky: f64,
    kz: f64,
    positive_x: bool,
) -> Result<AnglePair, EstimationError> {
    const SLACK: f64 = 1e-9;
    if kz.abs() > 1.0 + SLACK {
        return Err(EstimationError::InfeasibleCascade);
    }
    let kz = kz.clamp(-1.0, 1.0);
    let el = kz.acos();
    let sin_el = (1.0 - kz * kz).sqrt();
    if sin_el == 0.0 {
        return Err(EstimationError::InfeasibleCascade);
    }
    let q = ky / sin_el;
    if q.abs() > 1.0 + SLACK {
        return Err(EstimationError::InfeasibleCascade);
    }
    let base = q.clamp(-1.0, 1.0).asin();
    let az = if positive_x {
        base
    } else {
        // Mirror into the −x half-space, wrapped to (−π, π].
        let mirrored = PI - base;
        if mirrored > PI {
            mirrored - 2.0 * PI
        } else {
            mirrored
        }
    };
    Ok(AnglePair::new(el, az))
}

/// Tunable knobs of the estimation pipeline.
#[derive(Debug, Clone)]
pub struct EstimationConfig {
    /// Grid points per direction-cosine axis of the MUSIC scan.
    pub music_grid: usize,
    /// Assumed source count on the direct-path branch.
    pub n_sources_los: usize,
    /// Assumed source count on the surface-path branch.
    pub n_sources_nlos: usize,
    /// Whether sources lie in the +y half-space of the BS grid plane.
    pub bs_half_space_positive_y: bool,
    /// Whether sources lie in the +x half-space of the surface plane.
    pub aris_half_space_positive_x: bool,
    /// Grid step of the cascaded sum-cosine scan.
    pub cascade_grid_step: f64,
    /// Step-size tolerance of the local refinement.
    pub refine_tol: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            music_grid: 201,
            n_sources_los: 1,
            n_sources_nlos: 1,
            bs_half_space_positive_y: true,
            aris_half_space_positive_x: true,
            cascade_grid_step: 0.01,
            refine_tol: 1e-9,
        }
    }
}

/// Geometry and prior knowledge the receiver holds.
#[derive(Debug, Clone)]
pub struct EstimationContext<'a> {
    /// BS fluid-antenna grid.
    pub fas: &'a FasGeometry,
    /// Surface array.
    pub aris: &'a ArisGeometry,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Arrival direction of the direct surface→BS path at the BS, known from
    /// the surveyed anchor positions. Used only to pick the surface peak when
    /// several arrivals populate the surface branch.
    pub known_rb_arrival: AnglePair,
    /// Departure direction of the direct surface→BS path at the surface,
    /// also known geometry; subtracted from the cascaded sum cosines.
    pub known_rb_departure: AnglePair,
    /// Pipeline knobs.
    pub config: &'a EstimationConfig,
}

/// Everything estimated from one frame.
#[derive(Debug, Clone)]
pub struct EstimationReport {
    /// Direct-path arrival direction at the BS.
    pub theta_ub: AnglePair,
    /// User→surface arrival direction at the surface.
    pub theta_ur: AnglePair,
    /// Estimated surface→BS arrival direction at the BS.
    pub theta_rb: AnglePair,
    /// Direct-path complex gain.
    pub rho_ub: Complex64,
    /// Cascaded (user→surface→BS) complex gain.
    pub rho_urb: Complex64,
    /// Cascaded sum-cosine coordinates at the optimum.
    pub psi: (f64, f64),
    /// Residual sum of squares of the cascaded fit.
    pub cascade_residual: f64,
}

/// Pilot-matched aggregation `c = Σ_t y[:,t]·conj(x_t)`, the sufficient
/// statistic of a single-source branch across all snapshots.
pub fn matched_aggregate(y: &DMatrix<Complex64>, pilots: &[Complex64]) -> DVector<Complex64> {
    assert_eq!(y.ncols(), pilots.len());
    let mut c = DVector::zeros(y.nrows());
    for (t, x) in pilots.iter().enumerate() {
        let xc = x.conj();
        for n in 0..y.nrows() {
            c[n] += y[(n, t)] * xc;
        }
    }
    c
}

/// Joint fit of several mutually coherent arrivals to the matched aggregate
/// `c ≈ Σ_b g_b·a(k_b)`.
///
/// All arrivals of one branch carry the same pilot stream through fixed
/// gains, so the snapshot covariance is rank one and subspace methods see
/// only the composite vector; fitting the superposition directly is the
/// consistent estimator. Seeds come from the conventional-beamformer field
/// `|aᴴc|²`; an alternating loop then re-solves least-squares gains and
/// re-polishes each direction against the residual of the others, which
/// removes the leakage bias the strongest path would otherwise inherit.
///
/// Returns `((k_x, k_z), g)` pairs sorted strongest first. `g` is the
/// fitted coefficient of a unit-magnitude steering column, i.e. path gain ×
/// aggregated pilot energy.
fn fit_coherent_arrivals(
    fas: &FasGeometry,
    wavelength: f64,
    c: &DVector<Complex64>,
    n_sources: usize,
    grid_points: usize,
    tol: f64,
) -> Result<Vec<((f64, f64), Complex64)>, EstimationError> {
    let n = fas.len();
    if n_sources == 0 || n_sources >= n {
        return Err(EstimationError::TooManySources {
            sources: n_sources,
            positions: n,
        });
    }
    let g = grid_points.max(3);
    let side = fas.side();
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
    // Separable contraction of |aᴴc|² over the grid, mirroring the MUSIC
    // scan: reshape conj(c) to the (x, z) lattice, contract x per row.
    let reshaped = DMatrix::from_fn(side, side, |ix, iz| c[ix * side + iz].conj());
    let mut field = vec![f64::NEG_INFINITY; g * g];
    for (gx, ax) in phases.iter().enumerate() {
        let row = reshaped.transpose() * ax;
        let kx = axis[gx];
        for (gz, az) in phases.iter().enumerate() {
            let kz = axis[gz];
            if kx * kx + kz * kz > 1.0 {
                continue;
            }
            field[gx * g + gz] = row.dot(az).norm_sqr();
        }
    }

    // Local maxima, strongest first, with a two-cell exclusion zone.
    let mut maxima: Vec<(usize, usize, f64)> = Vec::new();
    for gx in 0..g {
        for gz in 0..g {
            let v = field[gx * g + gz];
            if !v.is_finite() {
                continue;
            }
            let mut is_max = true;
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
                    if field[nx as usize * g + nz as usize] > v {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                maxima.push((gx, gz, v));
            }
        }
    }
    maxima.sort_by(|a, b| b.2.partial_cmp(&a.2).expect("finite field"));
    let mut comps: Vec<(f64, f64)> = Vec::new();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    for (gx, gz, _) in maxima {
        if comps.len() == n_sources {
            break;
        }
        if taken
            .iter()
            .any(|&(px, pz)| gx.abs_diff(px) < 2 && gz.abs_diff(pz) < 2)
        {
            continue;
        }
        taken.push((gx, gz));
        comps.push((axis[gx], axis[gz]));
    }
    if comps.is_empty() {
        return Err(EstimationError::NoSpectrumPeak);
    }

    // Alternating deflation. The polish box spans half a beamwidth so a
    // seed biased by a strong neighbor can still travel to its own lobe.
    let cell = 2.0 / (g - 1) as f64;
    let radius = (1.5 * cell).max(1.0 / side as f64);
    let steering =
        |pts: &[(f64, f64)]| -> Vec<DVector<Complex64>> {
            pts.iter()
                .map(|&(kx, kz)| fas.steering_k(wavelength, kx, kz))
                .collect()
        };
    let solve_gains = |cols: &[DVector<Complex64>]| -> Option<DVector<Complex64>> {
        let a_mat = DMatrix::from_columns(cols);
        let gram = a_mat.adjoint() * &a_mat;
        let atc = a_mat.adjoint() * c;
        gram.lu().solve(&atc)
    };
    let mut cols = steering(&comps);
    let mut gains = solve_gains(&cols)
        .unwrap_or_else(|| DVector::from_element(comps.len(), Complex64::new(0.0, 0.0)));
    for _ in 0..12 {
        let mut moved = 0.0f64;
        for b in 0..comps.len() {
            let mut resid = c.clone();
            for (j, col) in cols.iter().enumerate() {
                if j == b {
                    continue;
                }
                for i in 0..n {
                    resid[i] -= gains[j] * col[i];
                }
            }
            let (pt, _) = refine_2d(
                comps[b],
                (cell, cell),
                (
                    (comps[b].0 - radius).max(-1.0),
                    (comps[b].1 - radius).max(-1.0),
                ),
                (
                    (comps[b].0 + radius).min(1.0),
                    (comps[b].1 + radius).min(1.0),
                ),
                tol,
                20_000,
                |kx, kz| {
                    let a = fas.steering_k(wavelength, kx, kz);
                    -(a.dotc(&resid)).norm_sqr()
                },
            );
            moved = moved
                .max((pt.0 - comps[b].0).abs())
                .max((pt.1 - comps[b].1).abs());
            comps[b] = pt;
            cols[b] = fas.steering_k(wavelength, pt.0, pt.1);
        }
        match solve_gains(&cols) {
            Some(sol) => gains = sol,
            None => break,
        }
        if moved <= tol.max(1e-12) {
            break;
        }
    }
    let mut out: Vec<((f64, f64), Complex64)> = comps
        .into_iter()
        .zip(gains.iter().copied())
        .collect();
    out.sort_by(|a, b| {
        b.1.norm()
            .partial_cmp(&a.1.norm())
            .expect("finite gains")
    });
    Ok(out)
}

/// Runs the full pipeline on one frame. `pilots` and `weights` are the
/// transmitted schedules of all `T` slots (the first half is used after
/// decoupling).
pub fn estimate_frame(
    ctx: &EstimationContext,
    y: &DMatrix<Complex64>,
    pilots: &DVector<Complex64>,
    weights: &DMatrix<Complex64>,
) -> Result<EstimationReport, EstimationError> {
    let cfg = ctx.config;
    let split = decouple(y)?;
    let half = split.y_los.ncols();
    let x_half: Vec<Complex64> = pilots.iter().take(half).copied().collect();
    let pilot_energy: f64 = x_half.iter().map(|x| x.norm_sqr()).sum();
    let n = ctx.fas.len() as f64;

    // --- Direct branch.
    let c = matched_aggregate(&split.y_los, &x_half);
    let cell = 2.0 / (cfg.music_grid.max(2) - 1) as f64;
    let ((kx_ub, kz_ub), rho_ub) = if cfg.n_sources_los == 1 {
        // Single arrival: coarse MUSIC, then refine the matched-filter
        // statistic directly.
        let los = music::music_aoa(
            ctx.fas,
            ctx.wavelength,
            &split.y_los,
            1,
            cfg.music_grid,
            cfg.bs_half_space_positive_y,
        )?;
        let mut best_ub: Option<((f64, f64), f64)> = None;
        for peak in &los.peaks {
            let (pt, f) = refine_in_box((peak.kx, peak.kz), cell, cfg.refine_tol, |kx, kz| {
                let a = ctx.fas.steering_k(ctx.wavelength, kx, kz);
                -(a.dotc(&c)).norm_sqr()
            });
            if best_ub.as_ref().map_or(true, |(_, fb)| f < *fb) {
                best_ub = Some((pt, f));
            }
        }
        let (pt, _) = best_ub.ok_or(EstimationError::NoSpectrumPeak)?;
        let a_ub = ctx.fas.steering_k(ctx.wavelength, pt.0, pt.1);
        (pt, a_ub.dotc(&c) / Complex64::new(n * pilot_energy, 0.0))
    } else {
        // Coherent multipath: every arrival rides the same pilot stream, so
        // the covariance is rank one and a subspace split cannot separate
        // them. Fit the superposition jointly and keep the strongest path.
        let fit = fit_coherent_arrivals(
            ctx.fas,
            ctx.wavelength,
            &c,
            cfg.n_sources_los,
            cfg.music_grid,
            cfg.refine_tol,
        )?;
        let (pt, gain) = fit[0];
        (pt, gain / Complex64::new(pilot_energy, 0.0))
    };
    let theta_ub = music::angles_from_cosines_xz(kx_ub, kz_ub, cfg.bs_half_space_positive_y);

    // --- Surface branch: coarse MUSIC, polish, pick the arrival nearest the
    // known surface direction.
    let nlos = music::music_aoa(
        ctx.fas,
        ctx.wavelength,
        &split.y_nlos,
        cfg.n_sources_nlos,
        cfg.music_grid,
        cfg.bs_half_space_positive_y,
    )?;
    let k_known = direction_vector(ctx.known_rb_arrival);
    let mut best_rb: Option<((f64, f64), f64)> = None;
    for peak in &nlos.peaks {
        let (pt, _) = refine_in_box((peak.kx, peak.kz), cell, cfg.refine_tol, |kx, kz| {
            music::noise_floor(&nlos.signal_subspace, ctx.fas, ctx.wavelength, kx, kz)
        });
        let ky = sign_y(cfg.bs_half_space_positive_y)
            * (1.0 - pt.0 * pt.0 - pt.1 * pt.1).max(0.0).sqrt();
        let dist = (pt.0 - k_known.x).powi(2)
            + (ky - k_known.y).powi(2)
            + (pt.1 - k_known.z).powi(2);
        if best_rb.as_ref().map_or(true, |(_, db)| dist < *db) {
            best_rb = Some((pt, dist));
        }
    }
    let ((kx_rb, kz_rb), _) = best_rb.ok_or(EstimationError::NoSpectrumPeak)?;
    let theta_rb = music::angles_from_cosines_xz(kx_rb, kz_rb, cfg.bs_half_space_positive_y);

    // --- Peel the surface arrival to a scalar sequence and scan the cascade.
    let a_rb = ctx.fas.steering_k(ctx.wavelength, kx_rb, kz_rb);
    let mut peeled = Vec::with_capacity(half);
    for t in 0..half {
        let col = split.y_nlos.column(t);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..a_rb.len() {
            acc += a_rb[i].conj() * col[i];
        }
        peeled.push(acc / n);
    }
    let w_half = weights.rows(0, half).into_owned();
    let k_dep = direction_vector(ctx.known_rb_departure);
    let cas = cascade::estimate_cascade(
        ctx.aris,
        ctx.wavelength,
        &peeled,
        &x_half,
        &w_half,
        (k_dep.y, k_dep.z),
        cfg.cascade_grid_step,
        cfg.refine_tol,
    )?;

    // --- Recover the user→surface direction from the sum cosines.
    let theta_ur = angles_from_cosines_yz(
        cas.psi_y - k_dep.y,
        cas.psi_z - k_dep.z,
        cfg.aris_half_space_positive_x,
    )?;

    Ok(EstimationReport {
        theta_ub,
        theta_ur,
        theta_rb,
        rho_ub,
        rho_urb: cas.gain,
        psi: (cas.psi_y, cas.psi_z),
        cascade_residual: cas.residual,
    })
}

fn sign_y(positive: bool) -> f64 {
    if positive {
        1.0
    } else {
        -1.0
    }
}

/// Refines inside a ±1.5-cell box around a coarse grid peak, clamped to the
/// unit square of direction cosines.
fn refine_in_box<F: FnMut(f64, f64) -> f64>(
    center: (f64, f64),
    cell: f64,
    tol: f64,
    objective: F,
) -> ((f64, f64), f64) {
    let r = 1.5 * cell;
    refine_2d(
        center,
        (cell, cell),
        ((center.0 - r).max(-1.0), (center.1 - r).max(-1.0)),
        ((center.0 + r).min(1.0), (center.1 + r).min(1.0)),
        tol,
        20_000,
        objective,
    )
}
