//! Array geometries, path gains, and geometric multipath channel synthesis.
//!
//! Two planar arrays are modeled:
//!
//! * the base-station fluid antenna: one RF chain sampling an `√N × √N` grid
//!   of candidate positions in a plane parallel to x–o–z (a virtual array),
//! * the active reconfigurable surface: an `M_y × M_z` uniform planar array
//!   in a plane parallel to y–o–z.
//!
//! Element phases are always taken relative to the array center, so the bulk
//! propagation phase of a path lives in its complex gain. Every link is a sum
//! of a deterministic-geometry direct path plus one path per scatterer; each
//! path carries an independent uniform random phase.
//!
//! # Example
//!
//! ```
//! use nalgebra::Point3;
//! use fas_aris_loc::channel::{free_space_gain, FasGeometry};
//!
//! let fas = FasGeometry::new(Point3::new(0.0, 0.0, 10.0), 100, 0.05).unwrap();
//! assert_eq!(fas.len(), 100);
//! let g = free_space_gain(28.489, 0.107, 0.0).unwrap();
//! assert!((g.norm() - 2.989e-4).abs() < 1e-6);
//! ```

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::geometry::{angles_between, direction_vector, AnglePair, GeometryError};

/// Errors from geometry construction or channel synthesis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    /// The fluid-antenna position count must form a square grid.
    #[error("fluid antenna needs a square position count, got {0}")]
    NotPerfectSquare(usize),
    /// An array dimension or position count of zero is meaningless.
    #[error("array dimensions must be positive")]
    EmptyArray,
    /// Path endpoints coincide, so no propagation gain is defined.
    #[error("path distance must be positive")]
    DegeneratePath,
    /// Underlying direction computation failed.
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Centered 1D grid offsets `(i − (n−1)/2) · spacing` for `i = 0..n`.
fn centered_axis(n: usize, spacing: f64) -> Vec<f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| (i as f64 - mid) * spacing).collect()
}

/// The fluid-antenna position grid at the base station.
///
/// `N` candidate positions on a `√N × √N` grid with uniform spacing, lying in
/// a plane parallel to x–o–z (offsets have zero y component) and centered on
/// the base-station reference point. Position `n` corresponds to grid indices
/// `(ix, iz) = (n / side, n % side)`.
#[derive(Debug, Clone)]
pub struct FasGeometry {
    center: Point3<f64>,
    side: usize,
    spacing: f64,
    offsets: Vec<Vector3<f64>>,
}

impl FasGeometry {
    /// Builds the grid; `num_positions` must be a positive perfect square.
    pub fn new(
        center: Point3<f64>,
        num_positions: usize,
        spacing: f64,
    ) -> Result<Self, ChannelError> {
        if num_positions == 0 {
            return Err(ChannelError::EmptyArray);
        }
        let side = (num_positions as f64).sqrt().round() as usize;
        if side * side != num_positions {
            return Err(ChannelError::NotPerfectSquare(num_positions));
        }
        let axis = centered_axis(side, spacing);
        let mut offsets = Vec::with_capacity(num_positions);
        for &ox in &axis {
            for &oz in &axis {
                offsets.push(Vector3::new(ox, 0.0, oz));
            }
        }
        Ok(Self {
            center,
            side,
            spacing,
            offsets,
        })
    }

    /// Number of candidate positions `N`.
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    /// True when the grid has no positions (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Grid side length `√N`.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Grid spacing in meters.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Array reference point (grid centroid).
    pub fn center(&self) -> Point3<f64> {
        self.center
    }

    /// Per-position offsets from the center, ordered x-major.
    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    /// Absolute position of grid point `n`.
    pub fn position(&self, n: usize) -> Point3<f64> {
        self.center + self.offsets[n]
    }

    /// Shared 1D offsets of the x and z grid axes (length `√N`).
    pub fn axis_offsets(&self) -> Vec<f64> {
        centered_axis(self.side, self.spacing)
    }

    /// Steering vector for an arrival direction, phases relative to center:
    /// element `n` is `exp(−j·2π/λ · offsetₙ · k)`.
    pub fn steering(&self, wavelength: f64, angles: AnglePair) -> DVector<Complex64> {
        let k = direction_vector(angles);
        self.steering_k(wavelength, k.x, k.z)
    }

    /// Steering vector from the direction cosines along the grid axes.
    /// Only the x and z components matter because the offsets lie in x–o–z.
    pub fn steering_k(&self, wavelength: f64, kx: f64, kz: f64) -> DVector<Complex64> {
        let kappa = TAU / wavelength;
        let axis = self.axis_offsets();
        let ax: Vec<Complex64> = axis
            .iter()
            .map(|&o| Complex64::from_polar(1.0, -kappa * o * kx))
            .collect();
        let az: Vec<Complex64> = axis
            .iter()
            .map(|&o| Complex64::from_polar(1.0, -kappa * o * kz))
            .collect();
        let mut out = DVector::zeros(self.len());
        let mut n = 0;
        for &x in &ax {
            for &z in &az {
                out[n] = x * z;
                n += 1;
            }
        }
        out
    }
}

/// The active reconfigurable surface: an `M_y × M_z` uniform planar array in
/// a plane parallel to y–o–z (offsets have zero x component). Element `m`
/// corresponds to grid indices `(iy, iz) = (m / m_z, m % m_z)`.
#[derive(Debug, Clone)]
pub struct ArisGeometry {
    center: Point3<f64>,
    m_y: usize,
    m_z: usize,
    spacing: f64,
    offsets: Vec<Vector3<f64>>,
}

impl ArisGeometry {
    /// Builds the surface grid; both dimensions must be positive.
    pub fn new(
        center: Point3<f64>,
        m_y: usize,
        m_z: usize,
        spacing: f64,
    ) -> Result<Self, ChannelError> {
        if m_y == 0 || m_z == 0 {
            return Err(ChannelError::EmptyArray);
        }
        let ay = centered_axis(m_y, spacing);
        let az = centered_axis(m_z, spacing);
        let mut offsets = Vec::with_capacity(m_y * m_z);
        for &oy in &ay {
            for &oz in &az {
                offsets.push(Vector3::new(0.0, oy, oz));
            }
        }
        Ok(Self {
            center,
            m_y,
            m_z,
            spacing,
            offsets,
        })
    }

    /// Number of surface elements `M = M_y · M_z`.
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    /// True when the surface has no elements (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Elements along y.
    pub fn m_y(&self) -> usize {
        self.m_y
    }

    /// Elements along z.
    pub fn m_z(&self) -> usize {
        self.m_z
    }

    /// Element spacing in meters.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Array reference point (grid centroid).
    pub fn center(&self) -> Point3<f64> {
        self.center
    }

    /// Per-element offsets from the center, ordered y-major.
    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    /// 1D offsets of the y and z axes, as `(y_offsets, z_offsets)`.
    pub fn axis_offsets(&self) -> (Vec<f64>, Vec<f64>) {
        (
            centered_axis(self.m_y, self.spacing),
            centered_axis(self.m_z, self.spacing),
        )
    }

    /// Steering vector for a direction, phases relative to center.
    pub fn steering(&self, wavelength: f64, angles: AnglePair) -> DVector<Complex64> {
        let k = direction_vector(angles);
        self.steering_psi(wavelength, k.y, k.z)
    }

    /// Steering vector from direction cosines along the surface axes. The
    /// cascaded user→surface→BS link sees the *sum* of the arrival and
    /// departure cosines, so this is also the cascade steering in the
    /// sum-cosine coordinates `(ψ_y, ψ_z) ∈ [−2, 2]²`.
    pub fn steering_psi(&self, wavelength: f64, psi_y: f64, psi_z: f64) -> DVector<Complex64> {
        let kappa = TAU / wavelength;
        let (ay, az) = self.axis_offsets();
        let ey: Vec<Complex64> = ay
            .iter()
            .map(|&o| Complex64::from_polar(1.0, -kappa * o * psi_y))
            .collect();
        let ez: Vec<Complex64> = az
            .iter()
            .map(|&o| Complex64::from_polar(1.0, -kappa * o * psi_z))
            .collect();
        let mut out = DVector::zeros(self.len());
        let mut m = 0;
        for &y in &ey {
            for &z in &ez {
                out[m] = y * z;
                m += 1;
            }
        }
        out
    }
}

/// Free-space amplitude gain `λ / (4π d)` with an explicit carrier phase.
pub fn free_space_gain(
    distance: f64,
    wavelength: f64,
    phase: f64,
) -> Result<Complex64, ChannelError> {
    if distance <= 0.0 || wavelength <= 0.0 {
        return Err(ChannelError::DegeneratePath);
    }
    Ok(Complex64::from_polar(
        wavelength / (4.0 * std::f64::consts::PI * distance),
        phase,
    ))
}

/// Amplitude model for single-bounce scattered paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterGainModel {
    /// Free-space gain evaluated at the total bounce length `d₁ + d₂`, scaled
    /// by the reflection loss. Keeps scattered paths commensurate with the
    /// direct path (strictly weaker, by the triangle inequality).
    PathLength,
    /// Product of per-hop free-space gains `λ²/((4π)² d₁ d₂)`, scaled by the
    /// reflection loss. Much weaker at these ranges; kept selectable for
    /// sensitivity studies.
    TwoHopProduct,
}

impl ScatterGainModel {
    fn amplitude(self, d1: f64, d2: f64, wavelength: f64, loss: f64) -> f64 {
        let fourpi = 4.0 * std::f64::consts::PI;
        match self {
            ScatterGainModel::PathLength => loss * wavelength / (fourpi * (d1 + d2)),
            ScatterGainModel::TwoHopProduct => {
                loss * wavelength * wavelength / (fourpi * fourpi * d1 * d2)
            }
        }
    }
}

/// Full deployment description consumed by [`build_channels`].
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Base-station fluid antenna grid.
    pub fas: FasGeometry,
    /// Active surface array.
    pub aris: ArisGeometry,
    /// True user position.
    pub user_position: Point3<f64>,
    /// Scatterers on the user→surface link.
    pub scatterers_ue_ris: Vec<Point3<f64>>,
    /// Scatterers on the surface→BS link.
    pub scatterers_ris_bs: Vec<Point3<f64>>,
    /// Scatterers on the user→BS link.
    pub scatterers_ue_bs: Vec<Point3<f64>>,
    /// Amplitude model for scattered paths.
    pub scatter_gain_model: ScatterGainModel,
    /// Reflection amplitude loss applied to every scattered path.
    pub scatter_loss: f64,
}

/// One propagation path of a single-array link.
#[derive(Debug, Clone, Copy)]
pub struct PathComponent {
    /// Complex gain (free-space amplitude × random carrier phase).
    pub gain: Complex64,
    /// Arrival direction at the receiving array.
    pub angles: AnglePair,
}

/// One propagation path of the surface→BS link, which needs both endpoints'
/// directions: departure from the surface and arrival at the BS grid.
#[derive(Debug, Clone, Copy)]
pub struct RisBsPath {
    /// Complex gain.
    pub gain: Complex64,
    /// Arrival direction at the BS grid.
    pub aoa_bs: AnglePair,
    /// Departure direction from the surface.
    pub aod_ris: AnglePair,
}

/// All channel matrices of one coherence block plus their path decomposition.
///
/// In each list the direct (line-of-sight) path is element 0, followed by the
/// scattered paths in scenario order.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// User → BS grid, per candidate position (`N`).
    pub h_ub: DVector<Complex64>,
    /// User → surface, per element (`M`).
    pub h_ur: DVector<Complex64>,
    /// Surface → BS grid (`N × M`).
    pub h_rb: DMatrix<Complex64>,
    /// Path decomposition of `h_ub`.
    pub paths_ub: Vec<PathComponent>,
    /// Path decomposition of `h_ur`.
    pub paths_ur: Vec<PathComponent>,
    /// Path decomposition of `h_rb`.
    pub paths_rb: Vec<RisBsPath>,
}

/// Draws random carrier phases and synthesizes all three links.
///
/// Phase draw order is fixed (user→BS direct, its scatterers, user→surface
/// direct, its scatterers, surface→BS direct, its scatterers) so a seeded RNG
/// reproduces the realization exactly.
pub fn build_channels<R: Rng + ?Sized>(
    scenario: &Scenario,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    let lam = scenario.wavelength;
    let p_u = scenario.user_position;
    let p_b = scenario.fas.center();
    let p_r = scenario.aris.center();
    let loss = scenario.scatter_loss;
    let model = scenario.scatter_gain_model;

    let bounce = |from: Point3<f64>,
                  via: Point3<f64>,
                  to: Point3<f64>,
                  rng: &mut R|
     -> Result<(Complex64, f64, f64), ChannelError> {
        let d1 = (via - from).norm();
        let d2 = (to - via).norm();
        if d1 <= 0.0 || d2 <= 0.0 {
            return Err(ChannelError::DegeneratePath);
        }
        let amp = model.amplitude(d1, d2, lam, loss);
        let phase = rng.gen_range(0.0..TAU);
        Ok((Complex64::from_polar(amp, phase), d1, d2))
    };

    // User → BS link.
    let mut paths_ub = Vec::with_capacity(1 + scenario.scatterers_ue_bs.len());
    paths_ub.push(PathComponent {
        gain: free_space_gain((p_u - p_b).norm(), lam, rng.gen_range(0.0..TAU))?,
        angles: angles_between(&p_u, &p_b)?,
    });
    for s in &scenario.scatterers_ue_bs {
        let (gain, _, _) = bounce(p_u, *s, p_b, rng)?;
        paths_ub.push(PathComponent {
            gain,
            angles: angles_between(s, &p_b)?,
        });
    }

    // User → surface link.
    let mut paths_ur = Vec::with_capacity(1 + scenario.scatterers_ue_ris.len());
    paths_ur.push(PathComponent {
        gain: free_space_gain((p_u - p_r).norm(), lam, rng.gen_range(0.0..TAU))?,
        angles: angles_between(&p_u, &p_r)?,
    });
    for s in &scenario.scatterers_ue_ris {
        let (gain, _, _) = bounce(p_u, *s, p_r, rng)?;
        paths_ur.push(PathComponent {
            gain,
            angles: angles_between(s, &p_r)?,
        });
    }

    // Surface → BS link (both endpoint directions per path).
    let mut paths_rb = Vec::with_capacity(1 + scenario.scatterers_ris_bs.len());
    paths_rb.push(RisBsPath {
        gain: free_space_gain((p_r - p_b).norm(), lam, rng.gen_range(0.0..TAU))?,
        aoa_bs: angles_between(&p_r, &p_b)?,
        aod_ris: angles_between(&p_b, &p_r)?,
    });
    for s in &scenario.scatterers_ris_bs {
        let (gain, _, _) = bounce(p_r, *s, p_b, rng)?;
        paths_rb.push(RisBsPath {
            gain,
            aoa_bs: angles_between(s, &p_b)?,
            aod_ris: angles_between(s, &p_r)?,
        });
    }

    // Superpose paths into the channel matrices.
    let mut h_ub = DVector::zeros(scenario.fas.len());
    for p in &paths_ub {
        h_ub += scenario.fas.steering(lam, p.angles) * p.gain;
    }
    let mut h_ur = DVector::zeros(scenario.aris.len());
    for p in &paths_ur {
        h_ur += scenario.aris.steering(lam, p.angles) * p.gain;
    }
    let mut h_rb = DMatrix::zeros(scenario.fas.len(), scenario.aris.len());
    for p in &paths_rb {
        let a_b = scenario.fas.steering(lam, p.aoa_bs);
        let a_r = scenario.aris.steering(lam, p.aod_ris);
        // Rank-1 outer product a_b · a_rᵀ (unconjugated transpose: both ends
        // accumulate delay with the same sign).
        for m in 0..a_r.len() {
            let w = p.gain * a_r[m];
            for n in 0..a_b.len() {
                h_rb[(n, m)] += a_b[n] * w;
            }
        }
    }

    Ok(ChannelRealization {
        h_ub,
        h_ur,
        h_rb,
        paths_ub,
        paths_ur,
        paths_rb,
    })
}
