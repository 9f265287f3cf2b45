//! Estimation-theoretic lower bounds: Fisher information of the channel
//! parameters and the resulting position error bound.
//!
//! The observation model is the scatter-free noiseless frame of
//! [`crate::waveform::synthesize_rx`] viewed per scalar sample: position `n`,
//! slot `t` sees a deterministic mean `μ[n,t]` plus independent complex
//! Gaussian noise whose variance `C_n` combines receiver noise and the
//! (weight-amplified) surface noise forwarded through the surface→BS link.
//! For such a model the Fisher information of the real parameter vector
//!
//! `γ = [Re ρ_ub, Im ρ_ub, Re ρ_urb, Im ρ_urb, θ_ub.el, θ_ub.az, θ_ur.el, θ_ur.az]`
//!
//! is `F = Σ_{n,t} 2·Re{∂μᴴ ∂μ} / C_n`. Reparameterizing the four angles
//! through the user position gives the 7-parameter position-domain
//! information `J ᵀ F J` whose inverse yields the position error bound
//! `PEB = √tr([.]⁻¹ over the position block)`.

use nalgebra::{DMatrix, DVector, Point3, SMatrix};
use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::channel::{ArisGeometry, FasGeometry};
use crate::geometry::{
    direction_az_derivative, direction_el_derivative, direction_vector, AnglePair,
};

/// Errors from bound computation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoundsError {
    /// Every scalar sample needs a positive noise variance.
    #[error("per-sample noise variance must be positive")]
    NonPositiveNoise,
    /// The channel information matrix is singular: some channel parameter is
    /// unobservable (e.g. a vanishing cascaded gain hides the surface path).
    #[error("channel information matrix is singular")]
    SingularInformation,
    /// The position information matrix is singular: the position error is
    /// unbounded for this geometry/parameter combination.
    #[error("position information matrix is singular")]
    UnboundedPosition,
    /// The user lies on an anchor's vertical axis where the bearing
    /// parameterization breaks down.
    #[error("user is vertically aligned with an anchor")]
    DegenerateGeometry,
}

/// True channel parameters the bound is evaluated at.
#[derive(Debug, Clone, Copy)]
pub struct ChannelParams {
    /// Direct-path complex gain.
    pub rho_ub: Complex64,
    /// Cascaded-path complex gain.
    pub rho_urb: Complex64,
    /// Direct-path arrival direction at the BS.
    pub theta_ub: AnglePair,
    /// User→surface arrival direction at the surface.
    pub theta_ur: AnglePair,
}

/// Observation-model context shared by all bound computations.
#[derive(Debug, Clone)]
pub struct BoundsContext<'a> {
    /// BS fluid-antenna grid.
    pub fas: &'a FasGeometry,
    /// Surface array.
    pub aris: &'a ArisGeometry,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Known arrival direction of the surface→BS path at the BS.
    pub rb_arrival: AnglePair,
    /// Known departure direction of the surface→BS path at the surface.
    pub rb_departure: AnglePair,
    /// Pilot symbols of all `T` slots.
    pub pilots: &'a DVector<Complex64>,
    /// Surface weights of all `T` slots (`T × M`).
    pub weights: &'a DMatrix<Complex64>,
    /// Receiver noise power per sample.
    pub sigma_b2: f64,
    /// Per-position forwarded surface-noise power
    /// `σ_eff²·p²·Σ_m |h_rb(n,m)|²` (zeros for a noiseless surface).
    pub surface_noise_diag: Vec<f64>,
}

/// Per-position forwarded surface-noise variance for [`BoundsContext`].
pub fn surface_noise_diagonal(
    h_rb: &DMatrix<Complex64>,
    amplitude: f64,
    sigma_eff2: f64,
) -> Vec<f64> {
    (0..h_rb.nrows())
        .map(|n| {
            let row_power: f64 = (0..h_rb.ncols()).map(|m| h_rb[(n, m)].norm_sqr()).sum();
            amplitude * amplitude * sigma_eff2 * row_power
        })
        .collect()
}

/// Precomputed per-position and per-slot factors of the mean signal.
struct SignalModel {
    rho_ub: Complex64,
    rho_urb: Complex64,
    /// `e^{−jκ oₙ·k(θ_ub)}` per position.
    phase_ub: Vec<Complex64>,
    /// `−jκ·(oₙ·∂k/∂el)` and `−jκ·(oₙ·∂k/∂az)` at `θ_ub`, per position.
    d_ub_el: Vec<Complex64>,
    d_ub_az: Vec<Complex64>,
    /// `e^{−jκ oₙ·k(rb_arrival)}` per position.
    phase_rb: Vec<Complex64>,
    /// Surface sums per slot: `Σ_m w_{t,m}·e_m`, and the same with the
    /// elevation/azimuth phase-derivative factors of `θ_ur` inserted.
    s: Vec<Complex64>,
    s_el: Vec<Complex64>,
    s_az: Vec<Complex64>,
}

impl SignalModel {
    fn new(ctx: &BoundsContext, params: &ChannelParams) -> Self {
        let kappa = TAU / ctx.wavelength;
        let j = Complex64::new(0.0, 1.0);

        let k_ub = direction_vector(params.theta_ub);
        let dk_ub_el = direction_el_derivative(params.theta_ub);
        let dk_ub_az = direction_az_derivative(params.theta_ub);
        let k_rb = direction_vector(ctx.rb_arrival);
        let mut phase_ub = Vec::with_capacity(ctx.fas.len());
        let mut d_ub_el = Vec::with_capacity(ctx.fas.len());
        let mut d_ub_az = Vec::with_capacity(ctx.fas.len());
        let mut phase_rb = Vec::with_capacity(ctx.fas.len());
        for o in ctx.fas.offsets() {
            phase_ub.push(Complex64::from_polar(1.0, -kappa * o.dot(&k_ub)));
            d_ub_el.push(-j * kappa * o.dot(&dk_ub_el));
            d_ub_az.push(-j * kappa * o.dot(&dk_ub_az));
            phase_rb.push(Complex64::from_polar(1.0, -kappa * o.dot(&k_rb)));
        }

        // Cascaded surface factor: arrival and departure delays add.
        let k_sum = direction_vector(params.theta_ur) + direction_vector(ctx.rb_departure);
        let dk_ur_el = direction_el_derivative(params.theta_ur);
        let dk_ur_az = direction_az_derivative(params.theta_ur);
        let m = ctx.aris.len();
        let mut e = Vec::with_capacity(m);
        let mut e_el = Vec::with_capacity(m);
        let mut e_az = Vec::with_capacity(m);
        for o in ctx.aris.offsets() {
            let base = Complex64::from_polar(1.0, -kappa * o.dot(&k_sum));
            e.push(base);
            e_el.push(-j * kappa * o.dot(&dk_ur_el) * base);
            e_az.push(-j * kappa * o.dot(&dk_ur_az) * base);
        }
        let t_total = ctx.pilots.len();
        let mut s = Vec::with_capacity(t_total);
        let mut s_el = Vec::with_capacity(t_total);
        let mut s_az = Vec::with_capacity(t_total);
        for t in 0..t_total {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut acc_el = Complex64::new(0.0, 0.0);
            let mut acc_az = Complex64::new(0.0, 0.0);
            for i in 0..m {
                let w = ctx.weights[(t, i)];
                acc += w * e[i];
                acc_el += w * e_el[i];
                acc_az += w * e_az[i];
            }
            s.push(acc);
            s_el.push(acc_el);
            s_az.push(acc_az);
        }

        Self {
            rho_ub: params.rho_ub,
            rho_urb: params.rho_urb,
            phase_ub,
            d_ub_el,
            d_ub_az,
            phase_rb,
            s,
            s_el,
            s_az,
        }
    }

    fn mean(&self, x: Complex64, n: usize, t: usize) -> Complex64 {
        (self.rho_ub * self.phase_ub[n] + self.rho_urb * self.phase_rb[n] * self.s[t]) * x
    }

    /// Gradient of the mean w.r.t. the 8 real channel parameters.
    fn gradient(&self, x: Complex64, n: usize, t: usize) -> [Complex64; 8] {
        let j = Complex64::new(0.0, 1.0);
        let a = self.phase_ub[n] * x;
        let b = self.phase_rb[n] * self.s[t] * x;
        [
            a,
            j * a,
            b,
            j * b,
            self.rho_ub * self.d_ub_el[n] * a,
            self.rho_ub * self.d_ub_az[n] * a,
            self.rho_urb * self.phase_rb[n] * self.s_el[t] * x,
            self.rho_urb * self.phase_rb[n] * self.s_az[t] * x,
        ]
    }
}

/// Noiseless mean frame `μ` (`N × T`) under the two-path model; must agree
/// with the scatter-free synthesizer output.
pub fn mean_signal(ctx: &BoundsContext, params: &ChannelParams) -> DMatrix<Complex64> {
    let model = SignalModel::new(ctx, params);
    let n = ctx.fas.len();
    let t_total = ctx.pilots.len();
    DMatrix::from_fn(n, t_total, |i, t| model.mean(ctx.pilots[t], i, t))
}

/// Compensated (Kahan) accumulator, so the `N·T`-term information sums do
/// not depend on accumulation order at the 1e-12 level.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Fisher information of the 8 real channel parameters.
pub fn fim_channel(
    ctx: &BoundsContext,
    params: &ChannelParams,
) -> Result<SMatrix<f64, 8, 8>, BoundsError> {
    let n_pos = ctx.fas.len();
    let t_total = ctx.pilots.len();
    assert_eq!(
        ctx.surface_noise_diag.len(),
        n_pos,
        "one surface-noise entry per antenna position"
    );
    let model = SignalModel::new(ctx, params);

    let mut acc = [[Kahan::default(); 8]; 8];
    for n in 0..n_pos {
        let c = ctx.sigma_b2 + ctx.surface_noise_diag[n];
        if c <= 0.0 {
            return Err(BoundsError::NonPositiveNoise);
        }
        let inv_c = 2.0 / c;
        for t in 0..t_total {
            let g = model.gradient(ctx.pilots[t], n, t);
            for i in 0..8 {
                for k in i..8 {
                    acc[i][k].add((g[i].conj() * g[k]).re * inv_c);
                }
            }
        }
    }
    let mut f = SMatrix::<f64, 8, 8>::zeros();
    for i in 0..8 {
        for k in i..8 {
            f[(i, k)] = acc[i][k].sum;
            f[(k, i)] = acc[i][k].sum;
        }
    }
    Ok(f)
}

/// Jacobian of the channel parameters w.r.t. the 7 position-domain
/// parameters `[Re ρ_ub, Im ρ_ub, Re ρ_urb, Im ρ_urb, p_ux, p_uy, p_uz]`.
///
/// The gain block is the identity; the angle rows are the derivatives of the
/// user bearings seen from each anchor (BS for `θ_ub`, surface for `θ_ur`).
pub fn position_jacobian(
    user: &Point3<f64>,
    bs: &Point3<f64>,
    ris: &Point3<f64>,
) -> Result<SMatrix<f64, 8, 7>, BoundsError> {
    let mut jac = SMatrix::<f64, 8, 7>::zeros();
    for i in 0..4 {
        jac[(i, i)] = 1.0;
    }
    for (row, anchor) in [(4usize, bs), (6usize, ris)] {
        let d = user - anchor;
        let r2 = d.norm_squared();
        let rho_xy2 = d.x * d.x + d.y * d.y;
        if r2 == 0.0 || rho_xy2 == 0.0 {
            return Err(BoundsError::DegenerateGeometry);
        }
        let rho_xy = rho_xy2.sqrt();
        // el = arccos(Δz/‖Δ‖):
        jac[(row, 4)] = d.x * d.z / (rho_xy * r2);
        jac[(row, 5)] = d.y * d.z / (rho_xy * r2);
        jac[(row, 6)] = -rho_xy / r2;
        // az = atan2(Δy, Δx):
        jac[(row + 1, 4)] = -d.y / rho_xy2;
        jac[(row + 1, 5)] = d.x / rho_xy2;
        jac[(row + 1, 6)] = 0.0;
    }
    Ok(jac)
}

/// Angle CRBs and the position error bound, all as RMS values.
#[derive(Debug, Clone, Copy)]
pub struct CrbSummary {
    /// Lower bound on the RMSE of `θ_ub.el` (rad).
    pub theta_ub_el: f64,
    /// Lower bound on the RMSE of `θ_ub.az` (rad).
    pub theta_ub_az: f64,
    /// Lower bound on the RMSE of `θ_ur.el` (rad).
    pub theta_ur_el: f64,
    /// Lower bound on the RMSE of `θ_ur.az` (rad).
    pub theta_ur_az: f64,
    /// Position error bound (m).
    pub peb: f64,
}

/// Channel FIM, position-domain FIM, and the derived bounds.
#[derive(Debug, Clone)]
pub struct FimBundle {
    /// Information of the 8 channel parameters.
    pub fim_channel: SMatrix<f64, 8, 8>,
    /// Channel→position reparameterization Jacobian.
    pub jacobian: SMatrix<f64, 8, 7>,
    /// Information of the 7 position-domain parameters.
    pub fim_position: SMatrix<f64, 7, 7>,
    /// Scalar bounds.
    pub crb: CrbSummary,
}

/// Computes the full bound set for one parameter point.
pub fn fim_bundle(
    ctx: &BoundsContext,
    params: &ChannelParams,
    user: &Point3<f64>,
    bs: &Point3<f64>,
    ris: &Point3<f64>,
) -> Result<FimBundle, BoundsError> {
    let fim = fim_channel(ctx, params)?;
    let inv = fim
        .cholesky()
        .ok_or(BoundsError::SingularInformation)?
        .inverse();
    let jac = position_jacobian(user, bs, ris)?;
    let fim_position = jac.transpose() * fim * jac;
    let inv_p = fim_position
        .cholesky()
        .ok_or(BoundsError::UnboundedPosition)?
        .inverse();
    let peb2 = inv_p[(4, 4)] + inv_p[(5, 5)] + inv_p[(6, 6)];
    if !peb2.is_finite() || peb2 < 0.0 {
        return Err(BoundsError::UnboundedPosition);
    }
    Ok(FimBundle {
        fim_channel: fim,
        jacobian: jac,
        fim_position,
        crb: CrbSummary {
            theta_ub_el: inv[(4, 4)].max(0.0).sqrt(),
            theta_ub_az: inv[(5, 5)].max(0.0).sqrt(),
            theta_ur_el: inv[(6, 6)].max(0.0).sqrt(),
            theta_ur_az: inv[(7, 7)].max(0.0).sqrt(),
            peb: peb2.sqrt(),
        },
    })
}
