//! Simulation library for 3D user localization with a fluid-antenna (movable
//! antenna) base-station receiver assisted by an active reconfigurable
//! intelligent surface.
//!
//! The library models a single-antenna user transmitting pilots to a base
//! station whose one RF chain samples a planar grid of candidate antenna
//! positions (a "fluid" antenna behaving as a virtual array), while an active
//! reconfigurable surface re-radiates an amplified copy of the uplink signal.
//! From one pilot frame the receiver
//!
//! 1. separates the direct and surface-reflected observations with a
//!    sign-flip schedule on the surface weights ([`waveform`], [`estimation`]),
//! 2. estimates the direct-path angle of arrival with MUSIC plus a local
//!    refinement ([`estimation::music`]),
//! 3. estimates the user-to-surface angle through the cascaded link with a
//!    maximum-likelihood scan over sum-of-direction-cosine coordinates
//!    ([`estimation::cascade`]), and
//! 4. triangulates the 3D user position from the two anchors in closed form
//!    ([`localization`]).
//!
//! [`bounds`] provides the Fisher information of the channel parameters and
//! the resulting position error bound; [`harness`] runs Monte-Carlo RMSE
//! sweeps and writes CSV/metadata artifacts consumed by the `fasloc` binary.
//!
//! # Example
//!
//! ```
//! use fas_aris_loc::harness::config::ScenarioConfig;
//! use fas_aris_loc::harness::sweep::{run_trial, TrialOutcome};
//!
//! let cfg = ScenarioConfig::default();
//! match run_trial(&cfg, 7, 0, 0).outcome {
//!     TrialOutcome::Ok(est) => {
//!         let err = (est.position - cfg.user_position).norm();
//!         assert!(err < 1.0, "single-trial position error {err} m too large");
//!     }
//!     TrialOutcome::Failed(e) => panic!("trial failed: {e}"),
//! }
//! ```

pub mod bounds;
pub mod channel;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod waveform;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant (J/K), 2019 SI exact value.
pub const BOLTZMANN: f64 = 1.380_649e-23;
