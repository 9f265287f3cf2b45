//! Pilot frame, surface weight schedule, noise model, and received-signal
//! synthesis.
//!
//! One coherence frame has `T` (even) slots. The user repeats its pilots:
//! slot `t + T/2` re-sends the pilot of slot `t`. The surface flips the sign
//! of its weights over the same halves (`w_{t+T/2} = −w_t`) while keeping the
//! per-element magnitude at the amplification factor `p`. Summing/differencing
//! matching half-frame slots then separates the direct path from the
//! surface-reflected path (see [`crate::estimation::decouple`]); the noise the
//! active surface injects does *not* cancel because it is redrawn each slot.
//!
//! # Example
//!
//! ```
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha12Rng;
//! use fas_aris_loc::waveform::make_pilots;
//!
//! let mut rng = ChaCha12Rng::seed_from_u64(1);
//! let x = make_pilots(10, 2.0, &mut rng).unwrap();
//! assert!((x[3].norm_sqr() - 2.0).abs() < 1e-12);
//! assert_eq!(x[3], x[8]); // second half repeats the first
//! ```

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::channel::ChannelRealization;
use crate::BOLTZMANN;

/// Errors from frame construction.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WaveformError {
    /// The pilot-repeat / sign-flip schedule needs an even slot count.
    #[error("slot count must be positive and even, got {0}")]
    BadSlotCount(usize),
    /// Transmit power and weight amplitude must be positive.
    #[error("power levels must be positive")]
    NonPositivePower,
}

/// Thermal noise power `k_B · 290 K · bandwidth · 10^(NF/10)` in watts.
pub fn noise_power(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * 290.0 * bandwidth_hz * 10f64.powf(noise_figure_db / 10.0)
}

/// Receiver/surface noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Base-station thermal noise power per slot (W).
    pub sigma_b2: f64,
    /// Surface input-referred thermal noise power per element (W).
    pub sigma_r2: f64,
    /// Power-gain knee `p²` above which amplifier excess noise doubles the
    /// effective surface noise (in `p²` units).
    pub excess_knee: f64,
    /// Exponent of the excess-noise growth beyond the knee.
    pub excess_exponent: f64,
}

impl NoiseModel {
    /// Effective per-element surface noise power for amplification `p`:
    /// `σ_R² · (1 + (p²/knee)^exponent)`. Models the super-linear noise
    /// figure degradation of a reflection amplifier driven at high gain;
    /// the injected noise power at the surface output is `p²` times this.
    pub fn aris_sigma_eff2(&self, amplitude: f64) -> f64 {
        let p2 = amplitude * amplitude;
        self.sigma_r2 * (1.0 + (p2 / self.excess_knee).powf(self.excess_exponent))
    }
}

/// How the per-element amplification factor is derived from the surface
/// power-budget ratio `ε` (surface transmit power / user transmit power).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplificationLaw {
    /// `p = √(ε · gain_ref)`: the surface runs a fixed conversion gain per
    /// unit budget, independent of the instantaneous input power.
    FixedGain {
        /// Conversion gain at ε = 1.
        gain_ref: f64,
    },
    /// `p = √(ε · P_U · M / Σ_m (P_U·|h_ur(m)|² + σ_R²))`: the budget is
    /// spent exactly on re-radiating the instantaneous input power.
    InputPowerBudget,
}

/// Amplification factor for a budget ratio `ε`, floored at 1 (an active
/// element never attenuates).
pub fn amplification_from_epsilon(
    law: AmplificationLaw,
    epsilon: f64,
    pilot_power: f64,
    h_ur: &DVector<Complex64>,
    sigma_r2: f64,
) -> f64 {
    let p = match law {
        AmplificationLaw::FixedGain { gain_ref } => (epsilon * gain_ref).sqrt(),
        AmplificationLaw::InputPowerBudget => {
            let m = h_ur.len() as f64;
            let input: f64 = h_ur
                .iter()
                .map(|h| pilot_power * h.norm_sqr() + sigma_r2)
                .sum();
            (epsilon * pilot_power * m / input).sqrt()
        }
    };
    p.max(1.0)
}

/// Draws the pilot sequence: `T` symbols of power `power` with uniform random
/// phases, the second half repeating the first (`x_{t+T/2} = x_t`).
pub fn make_pilots<R: Rng + ?Sized>(
    num_slots: usize,
    power: f64,
    rng: &mut R,
) -> Result<DVector<Complex64>, WaveformError> {
    if num_slots == 0 || num_slots % 2 != 0 {
        return Err(WaveformError::BadSlotCount(num_slots));
    }
    if power <= 0.0 {
        return Err(WaveformError::NonPositivePower);
    }
    let half = num_slots / 2;
    let amp = power.sqrt();
    let mut x = DVector::zeros(num_slots);
    for t in 0..half {
        x[t] = Complex64::from_polar(amp, rng.gen_range(0.0..TAU));
        x[t + half] = x[t];
    }
    Ok(x)
}

/// Draws the surface weight schedule: a `T × M` matrix whose row `t` holds
/// the per-element weights of slot `t`. Every weight has magnitude
/// `amplitude` and a uniform random phase; the second half-frame negates the
/// first (`w_{t+T/2} = −w_t`). Phases are drawn element-major within each
/// slot of the first half.
pub fn make_weights<R: Rng + ?Sized>(
    num_slots: usize,
    num_elements: usize,
    amplitude: f64,
    rng: &mut R,
) -> Result<DMatrix<Complex64>, WaveformError> {
    if num_slots == 0 || num_slots % 2 != 0 {
        return Err(WaveformError::BadSlotCount(num_slots));
    }
    if amplitude <= 0.0 || num_elements == 0 {
        return Err(WaveformError::NonPositivePower);
    }
    let half = num_slots / 2;
    let mut w = DMatrix::zeros(num_slots, num_elements);
    for t in 0..half {
        for m in 0..num_elements {
            let v = Complex64::from_polar(amplitude, rng.gen_range(0.0..TAU));
            w[(t, m)] = v;
            w[(t + half, m)] = -v;
        }
    }
    Ok(w)
}

/// Zero-mean circularly-symmetric complex Gaussian sample of given variance.
fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// One synthesized receive frame.
#[derive(Debug, Clone)]
pub struct RxFrame {
    /// Received samples, `N × T` (position-by-slot).
    pub y: DMatrix<Complex64>,
    /// Noiseless component of `y` (useful for truth checks and bounds).
    pub mean: DMatrix<Complex64>,
}

/// Synthesizes the frame observed across the fluid-antenna grid:
///
/// `y[n,t] = h_ub[n]·x_t + (h_rb[n,:]·(w_t ∘ h_ur))·x_t
///           + h_rb[n,:]·(w_t ∘ z_R[t]) + z_B[n,t]`
///
/// where `z_R[t] ~ CN(0, σ_eff² I_M)` is the surface noise of slot `t`
/// (amplified through the weights) and `z_B ~ CN(0, σ_B² I)` is receiver
/// noise. Per slot, the surface noise vector is drawn before the receiver
/// noise vector, so a seeded RNG reproduces the frame exactly.
pub fn synthesize_rx<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    pilots: &DVector<Complex64>,
    weights: &DMatrix<Complex64>,
    sigma_b2: f64,
    sigma_r_eff2: f64,
    rng: &mut R,
) -> RxFrame {
    let n = channel.h_ub.len();
    let m = channel.h_ur.len();
    let t_total = pilots.len();
    assert_eq!(weights.nrows(), t_total, "one weight row per slot");
    assert_eq!(weights.ncols(), m, "one weight column per surface element");
    assert_eq!(channel.h_rb.nrows(), n);
    assert_eq!(channel.h_rb.ncols(), m);

    let mut y = DMatrix::zeros(n, t_total);
    let mut mean = DMatrix::zeros(n, t_total);
    let mut v = DVector::<Complex64>::zeros(m);
    for t in 0..t_total {
        let x = pilots[t];
        // Signal component through the surface: v = w_t ∘ h_ur · x.
        for i in 0..m {
            v[i] = weights[(t, i)] * channel.h_ur[i] * x;
        }
        let cascade = &channel.h_rb * &v;
        for i in 0..n {
            mean[(i, t)] = channel.h_ub[i] * x + cascade[i];
        }
        // Surface noise, amplified through the weights and the surface→BS
        // channel.
        for i in 0..m {
            v[i] = weights[(t, i)] * complex_normal(rng, sigma_r_eff2);
        }
        let fwd = &channel.h_rb * &v;
        for i in 0..n {
            y[(i, t)] = mean[(i, t)] + fwd[i] + complex_normal(rng, sigma_b2);
        }
    }
    RxFrame { y, mean }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channels, ArisGeometry, FasGeometry, ScatterGainModel, Scenario};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::Point3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tiny_channel(seed: u64) -> ChannelRealization {
        let sc = Scenario {
            wavelength: 0.107,
            fas: FasGeometry::new(Point3::new(0.0, 0.0, 10.0), 9, 0.0535).unwrap(),
            aris: ArisGeometry::new(Point3::new(-10.0, 23.3, 0.5), 2, 3, 0.0535).unwrap(),
            user_position: Point3::new(3.5, 26.7, 0.7),
            scatterers_ue_ris: vec![],
            scatterers_ris_bs: vec![],
            scatterers_ue_bs: vec![],
            scatter_gain_model: ScatterGainModel::PathLength,
            scatter_loss: 0.5,
        };
        build_channels(&sc, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn thermal_noise_power_at_reference_bandwidth() {
        // 100 MHz bandwidth, 18 dB noise figure.
        assert_relative_eq!(noise_power(1e8, 18.0), 2.5263e-11, epsilon = 1e-15);
        // 1 MHz is exactly 100× smaller.
        assert_relative_eq!(
            noise_power(1e6, 18.0) * 100.0,
            noise_power(1e8, 18.0),
            epsilon = 1e-25
        );
    }

    #[test]
    fn excess_noise_grows_past_the_knee() {
        let nm = NoiseModel {
            sigma_b2: 1.0,
            sigma_r2: 2.0,
            excess_knee: 7.87,
            excess_exponent: 2.0,
        };
        // At the knee the effective noise is exactly doubled.
        let p_at_knee = 7.87f64.sqrt();
        assert_relative_eq!(nm.aris_sigma_eff2(p_at_knee), 4.0, epsilon = 1e-12);
        // Passive-magnitude element: barely above the floor.
        assert!(nm.aris_sigma_eff2(1.0) < 2.0 * 1.1);
        // Monotone in p.
        let mut prev = 0.0;
        for i in 1..20 {
            let v = nm.aris_sigma_eff2(i as f64 * 0.5);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn amplification_laws() {
        let law = AmplificationLaw::FixedGain { gain_ref: 63.0 };
        let empty = DVector::zeros(4);
        assert_relative_eq!(
            amplification_from_epsilon(law, 0.8, 1.0, &empty, 0.0),
            (0.8f64 * 63.0).sqrt(),
            epsilon = 1e-12
        );
        // Tiny budget floors at the passive magnitude.
        assert_eq!(amplification_from_epsilon(law, 1e-6, 1.0, &empty, 0.0), 1.0);

        // With a unit channel and no surface noise the budget law reduces to
        // √ε (floored at 1).
        let ones = DVector::from_element(5, Complex64::new(1.0, 0.0));
        let budget = AmplificationLaw::InputPowerBudget;
        assert_relative_eq!(
            amplification_from_epsilon(budget, 9.0, 2.0, &ones, 0.0),
            3.0,
            epsilon = 1e-12
        );
        assert_eq!(amplification_from_epsilon(budget, 0.25, 2.0, &ones, 0.0), 1.0);
    }

    #[test]
    fn pilots_repeat_and_hold_power() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let x = make_pilots(100, 0.03, &mut rng).unwrap();
        for t in 0..50 {
            assert_relative_eq!(x[t].norm_sqr(), 0.03, epsilon = 1e-15);
            assert_eq!(x[t], x[t + 50]);
        }
        assert_eq!(
            make_pilots(7, 1.0, &mut rng).unwrap_err(),
            WaveformError::BadSlotCount(7)
        );
        assert_eq!(
            make_pilots(10, 0.0, &mut rng).unwrap_err(),
            WaveformError::NonPositivePower
        );
    }

    #[test]
    fn weights_flip_sign_and_hold_amplitude() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let w = make_weights(20, 6, 3.5, &mut rng).unwrap();
        for t in 0..10 {
            for m in 0..6 {
                assert_relative_eq!(w[(t, m)].norm(), 3.5, epsilon = 1e-12);
                assert_eq!(w[(t + 10, m)], -w[(t, m)]);
            }
        }
    }

    #[test]
    fn synthesized_frame_matches_scalar_formula() {
        let ch = tiny_channel(21);
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let x = make_pilots(4, 0.5, &mut rng).unwrap();
        let w = make_weights(4, ch.h_ur.len(), 2.0, &mut rng).unwrap();
        // Noiseless frame: y equals the mean, and the mean equals the scalar
        // superposition formula.
        let frame = synthesize_rx(&ch, &x, &w, 0.0, 0.0, &mut rng);
        assert_abs_diff_eq!((frame.y.clone() - frame.mean.clone()).norm(), 0.0);
        for t in 0..4 {
            for n in 0..ch.h_ub.len() {
                let mut expect = ch.h_ub[n] * x[t];
                for m in 0..ch.h_ur.len() {
                    expect += ch.h_rb[(n, m)] * w[(t, m)] * ch.h_ur[m] * x[t];
                }
                assert_abs_diff_eq!(
                    (frame.y[(n, t)] - expect).norm(),
                    0.0,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn synthesized_noise_variance_is_calibrated() {
        // Receiver-only noise: sample variance of y − mean must match σ_B²
        // within 2% over ~1.2e5 samples.
        let ch = tiny_channel(31);
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let slots = 13_334;
        let x = make_pilots(slots, 1.0, &mut rng).unwrap();
        let w = make_weights(slots, ch.h_ur.len(), 1.0, &mut rng).unwrap();
        let sigma_b2 = 3.0e-3;
        let frame = synthesize_rx(&ch, &x, &w, sigma_b2, 0.0, &mut rng);
        let resid = frame.y - frame.mean;
        let var = resid.iter().map(|v| v.norm_sqr()).sum::<f64>() / resid.len() as f64;
        assert_relative_eq!(var, sigma_b2, max_relative = 0.02);

        // Surface-only noise: per-position variance is
        // p² σ_eff² Σ_m |h_rb(n,m)|².
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let p = 2.0;
        let sigma_eff2 = 5.0e-4;
        let w = make_weights(slots, ch.h_ur.len(), p, &mut rng).unwrap();
        let frame = synthesize_rx(&ch, &x, &w, 0.0, sigma_eff2, &mut rng);
        let resid = frame.y - frame.mean;
        for n in 0..ch.h_ub.len() {
            let row_power: f64 = (0..ch.h_ur.len())
                .map(|m| ch.h_rb[(n, m)].norm_sqr())
                .sum();
            let expect = p * p * sigma_eff2 * row_power;
            let var = resid.row(n).iter().map(|v| v.norm_sqr()).sum::<f64>()
                / slots as f64;
            assert_relative_eq!(var, expect, max_relative = 0.05);
        }
    }

    #[test]
    fn synthesis_is_deterministic_under_seeded_rng() {
        let ch = tiny_channel(41);
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(77);
            let x = make_pilots(8, 1.0, &mut rng).unwrap();
            let w = make_weights(8, ch.h_ur.len(), 1.5, &mut rng).unwrap();
            synthesize_rx(&ch, &x, &w, 1e-3, 1e-4, &mut rng).y
        };
        assert_eq!(run(), run());
    }
}
