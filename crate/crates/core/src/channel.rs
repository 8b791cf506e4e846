//! Closed-form relay outage model.
//!
//! A two-hop link (sensor → relay → destination) is in outage when the
//! received SNR falls below the threshold `snr_threshold`. With
//!
//! ```text
//!   Ψ² = N₀·κ·D_S^σ / P_R
//!   P_out = 1 − (1 + 2Ψ² ln Ψ) · exp(−N₀·κ·D_I^σ / P_I)
//! ```
//!
//! the functions here evaluate `P_out` on *effective* distances, i.e. after
//! the relay's displacement has already been folded in by
//! [`effective_distances`]. All arithmetic is `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a relay displacement enters the two hop distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    /// 1-D motion along the sensor–destination axis: moving toward the
    /// destination lengthens the sensor hop and shortens the relay hop.
    #[default]
    Signed,
    /// Both hops shift by the same offset, as the closed form is written.
    Literal,
}

/// Channel constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Noise power N₀ in watts.
    pub noise_power: f64,
    /// SNR threshold κ (dimensionless).
    pub snr_threshold: f64,
    /// Path-loss exponent σ.
    pub path_loss_exponent: f64,
    /// Magnitude of one positional change, metres.
    pub step_delta: f64,
    /// Smallest distance a hop may shrink to, metres.
    pub distance_floor: f64,
    pub delta_mode: DeltaMode,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            noise_power: 2e-7,
            snr_threshold: 1.0,
            path_loss_exponent: 3.0,
            step_delta: 0.25,
            distance_floor: 0.1,
            delta_mode: DeltaMode::Signed,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("noise_power", self.noise_power),
            ("snr_threshold", self.snr_threshold),
            ("sigma", self.path_loss_exponent),
            ("delta", self.step_delta),
            ("distance_floor", self.distance_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad.push(format!("`{name}` must be finite and > 0 (got {v})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// N₀·κ, the noise floor scaled by the threshold.
    fn noise_threshold(&self) -> f64 {
        self.noise_power * self.snr_threshold
    }
}

/// Distances of the two hops, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub sensor_relay: f64,
    pub relay_dest: f64,
}

impl LinkGeometry {
    pub fn new(sensor_relay: f64, relay_dest: f64) -> Self {
        LinkGeometry {
            sensor_relay,
            relay_dest,
        }
    }
}

/// Result of one outage evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outage {
    /// Value of the closed form before clamping; may leave [0, 1] when Ψ > 1.
    pub raw: f64,
    /// `raw` clamped to [0, 1].
    pub probability: f64,
}

impl Outage {
    pub fn clamped(&self) -> bool {
        self.raw != self.probability
    }

    pub fn delivered(&self) -> f64 {
        1.0 - self.probability
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Ψ² = N₀κ·d^σ / P_R.
fn psi_squared(p_relay: f64, d_s_eff: f64, params: &ChannelParams) -> f64 {
    params.noise_threshold() * d_s_eff.powf(params.path_loss_exponent) / p_relay
}

/// Ψ = √(N₀κ·d^σ / P_R) for the relay → destination hop.
pub fn compute_psi(p_relay: f64, d_s_eff: f64, params: &ChannelParams) -> Result<f64> {
    positive("relay power", p_relay)?;
    positive("relay-destination distance", d_s_eff)?;
    let psi = psi_squared(p_relay, d_s_eff, params).sqrt();
    if psi.is_finite() && psi > 0.0 {
        Ok(psi)
    } else {
        Err(Error::Domain(format!("psi evaluated to {psi}")))
    }
}

/// Evaluates the outage closed form, returning both the raw and clamped value.
///
/// The raw value is computed as `−expm1(ln_1p(Ψ² ln Ψ²) − N₀κ·D_I^σ/P_I)`,
/// which is algebraically identical to the textbook form but keeps full
/// relative precision when the outage is tiny.
pub fn outage(
    p_sensor: f64,
    p_relay: f64,
    geom: LinkGeometry,
    params: &ChannelParams,
) -> Result<Outage> {
    positive("sensor power", p_sensor)?;
    positive("relay power", p_relay)?;
    positive("sensor-relay distance", geom.sensor_relay)?;
    positive("relay-destination distance", geom.relay_dest)?;

    let psi2 = psi_squared(p_relay, geom.relay_dest, params);
    // 2Ψ² ln Ψ = Ψ² ln Ψ²; bounded below by −1/e, so the prefactor stays positive.
    let prefactor_m1 = psi2 * psi2.ln();
    let sensor_exponent =
        params.noise_threshold() * geom.sensor_relay.powf(params.path_loss_exponent) / p_sensor;
    let raw = -(prefactor_m1.ln_1p() - sensor_exponent).exp_m1();
    if !raw.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite outage (psi^2 = {psi2}, sensor exponent = {sensor_exponent})"
        )));
    }
    Ok(Outage {
        raw,
        probability: raw.clamp(0.0, 1.0),
    })
}

/// Outage probability in [0, 1].
pub fn outage_probability(
    p_sensor: f64,
    p_relay: f64,
    geom: LinkGeometry,
    params: &ChannelParams,
) -> Result<f64> {
    outage(p_sensor, p_relay, geom, params).map(|o| o.probability)
}

/// Applies a relay displacement (positive = toward the destination) to the
/// base hop distances, flooring each at `distance_floor`.
pub fn effective_distances(
    base: LinkGeometry,
    displacement: f64,
    params: &ChannelParams,
) -> LinkGeometry {
    let floor = params.distance_floor;
    let sensor_relay = match params.delta_mode {
        DeltaMode::Signed => base.sensor_relay + displacement,
        DeltaMode::Literal => base.sensor_relay - displacement,
    };
    LinkGeometry {
        sensor_relay: sensor_relay.max(floor),
        relay_dest: (base.relay_dest - displacement).max(floor),
    }
}
