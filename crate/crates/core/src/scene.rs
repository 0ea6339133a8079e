//! Room geometry, Lambertian LOS channel and the bounded CSIT error set.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("{field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// LED and photodiode parameters. Currents, bias, amplitude and beam entries
/// all share one drive-signal unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedParams {
    pub semi_angle_deg: f64,
    pub fov_deg: f64,
    /// Photodiode area in m².
    pub pd_area: f64,
    pub refractive_index: f64,
    /// A/W.
    pub responsivity: f64,
    pub led_conversion: f64,
    pub dc_bias: f64,
    pub current_min: f64,
    pub current_max: f64,
    /// Peak amplitude of every stream.
    pub amplitude: f64,
    /// Variance of every stream.
    pub variance: f64,
    /// Receiver noise power in W.
    pub noise_power: f64,
}

pub const DEFAULT_NOISE_DBM: f64 = -98.82;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl Default for LedParams {
    fn default() -> Self {
        let b = 6f64.sqrt();
        LedParams {
            semi_angle_deg: 60.0,
            fov_deg: 60.0,
            pd_area: 1e-4,
            refractive_index: 1.5,
            responsivity: 0.54,
            led_conversion: 1.0,
            dc_bias: b,
            current_min: 0.0,
            current_max: 2.0 * b,
            amplitude: 2.0,
            variance: 1.0,
            noise_power: dbm_to_watts(DEFAULT_NOISE_DBM),
        }
    }
}

fn check(field: &'static str, value: f64, ok: bool) -> Result<(), SceneError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(SceneError::OutOfRange { field, value })
    }
}

impl LedParams {
    pub fn validate(&self) -> Result<(), SceneError> {
        let p = self;
        check("semi_angle_deg", p.semi_angle_deg, p.semi_angle_deg > 0.0 && p.semi_angle_deg < 90.0)?;
        check("fov_deg", p.fov_deg, p.fov_deg > 0.0 && p.fov_deg <= 90.0)?;
        check("pd_area", p.pd_area, p.pd_area > 0.0)?;
        check("refractive_index", p.refractive_index, p.refractive_index >= 1.0)?;
        check("responsivity", p.responsivity, p.responsivity > 0.0)?;
        check("led_conversion", p.led_conversion, p.led_conversion > 0.0)?;
        check("current_min", p.current_min, p.current_min <= p.dc_bias)?;
        check("current_max", p.current_max, p.current_max >= p.dc_bias)?;
        check("dc_bias", p.dc_bias, true)?;
        check("amplitude", p.amplitude, p.amplitude > 0.0)?;
        check(
            "variance",
            p.variance,
            p.variance > 0.0 && p.variance <= p.amplitude * p.amplitude,
        )?;
        check("noise_power", p.noise_power, p.noise_power > 0.0)?;
        Ok(())
    }

    /// Per-LED swing limit min{b - I_L, I_H - b}.
    pub fn optical_limit(&self) -> f64 {
        (self.dc_bias - self.current_min).min(self.current_max - self.dc_bias)
    }
}

pub fn lambertian_order(semi_angle_deg: f64) -> Result<f64, SceneError> {
    check(
        "semi_angle_deg",
        semi_angle_deg,
        semi_angle_deg > 0.0 && semi_angle_deg < 90.0,
    )?;
    Ok(-(2f64.ln()) / semi_angle_deg.to_radians().cos().ln())
}

pub fn effective_pd_area(refractive_index: f64, fov_deg: f64, pd_area: f64) -> Result<f64, SceneError> {
    check("fov_deg", fov_deg, fov_deg > 0.0 && fov_deg <= 90.0)?;
    check("refractive_index", refractive_index, refractive_index >= 1.0)?;
    check("pd_area", pd_area, pd_area > 0.0)?;
    let s = fov_deg.to_radians().sin();
    Ok(refractive_index * refractive_index / (s * s) * pd_area)
}

/// Gain model specialised to a downward LED and an upward photodiode.
#[derive(Debug, Clone, Copy)]
pub struct GainModel {
    order: f64,
    /// (l+1) θ_l θ_c A_r / 2π.
    prefactor: f64,
    cos_fov: f64,
}

impl GainModel {
    pub fn new(params: &LedParams) -> Result<Self, SceneError> {
        let order = lambertian_order(params.semi_angle_deg)?;
        let area = effective_pd_area(params.refractive_index, params.fov_deg, params.pd_area)?;
        Ok(GainModel {
            order,
            prefactor: (order + 1.0) * params.responsivity * params.led_conversion * area / (2.0 * PI),
            cos_fov: params.fov_deg.to_radians().cos(),
        })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    /// Gain at vertical offset `dz` and distance `d`; zero outside the FOV.
    pub fn at_distance(&self, dz: f64, d: f64) -> f64 {
        if dz <= 0.0 || d <= 0.0 {
            return 0.0;
        }
        let cos = dz / d;
        // small slack so a point exactly on the FOV edge stays inside
        if cos < self.cos_fov - 1e-15 {
            return 0.0;
        }
        self.prefactor / (d * d) * cos.powf(self.order) * cos
    }

    pub fn gain(&self, led: &Point3, user: &Point3) -> f64 {
        self.at_distance(led.z - user.z, led.distance(user))
    }
}

/// LOS gain between a downward LED and an upward photodiode.
///
/// Returns 0 when the LED is not above the user.
pub fn channel_gain(led: &Point3, user: &Point3, params: &LedParams) -> Result<f64, SceneError> {
    Ok(GainModel::new(params)?.gain(led, user))
}

/// Closest and farthest LED distance over a horizontal disk of `radius`.
pub fn distance_bounds(led: &Point3, center: &Point3, radius: f64) -> (f64, f64) {
    let dz = led.z - center.z;
    let dxy = led.horizontal_distance(center);
    let d_min = if dxy <= radius { dz.abs() } else { (dxy - radius).hypot(dz) };
    let d_max = (dxy + radius).hypot(dz);
    (d_min, d_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub h_hat: DVector<f64>,
    pub v: f64,
    pub h_upper: DVector<f64>,
    pub h_lower: DVector<f64>,
}

impl ChannelEstimate {
    pub fn from_bounds(h_lower: DVector<f64>, h_upper: DVector<f64>) -> Self {
        let h_hat = (&h_upper + &h_lower) * 0.5;
        let half = (&h_upper - &h_lower) * 0.5;
        ChannelEstimate {
            h_hat,
            v: half.norm_squared(),
            h_upper,
            h_lower,
        }
    }

    /// Estimate with no uncertainty.
    pub fn exact(h: DVector<f64>) -> Self {
        ChannelEstimate::from_bounds(h.clone(), h)
    }

    pub fn dim(&self) -> usize {
        self.h_hat.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub led_positions: Vec<Point3>,
    pub user_centers: Vec<Point3>,
    pub user_radius: f64,
    pub params: LedParams,
    pub total_power: f64,
}

impl Scenario {
    pub fn num_leds(&self) -> usize {
        self.led_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_centers.len()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.params.validate()?;
        if self.led_positions.is_empty() || self.user_centers.is_empty() {
            return Err(SceneError::Invalid("need at least one LED and one user".into()));
        }
        check("user_radius", self.user_radius, self.user_radius >= 0.0)?;
        check("total_power", self.total_power, self.total_power > 0.0)?;
        let z = self.user_centers[0].z;
        if self.user_centers.iter().any(|u| u.z != z) {
            return Err(SceneError::Invalid("users must share one receiving plane".into()));
        }
        if let Some(led) = self.led_positions.iter().find(|l| l.z <= z) {
            return Err(SceneError::Invalid(format!(
                "LED at z={} is not above the receiving plane z={}",
                led.z, z
            )));
        }
        Ok(())
    }

    /// Channel vector of a receiver at `user`.
    pub fn channel(&self, user: &Point3) -> Result<DVector<f64>, SceneError> {
        let model = GainModel::new(&self.params)?;
        Ok(DVector::from_iterator(
            self.num_leds(),
            self.led_positions.iter().map(|l| model.gain(l, user)),
        ))
    }

    pub fn estimate_csit(&self, user_index: usize) -> Result<ChannelEstimate, SceneError> {
        let center = self
            .user_centers
            .get(user_index)
            .ok_or_else(|| SceneError::Invalid(format!("no user {user_index}")))?;
        let model = GainModel::new(&self.params)?;
        let n = self.num_leds();
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::zeros(n);
        for (i, led) in self.led_positions.iter().enumerate() {
            let dz = led.z - center.z;
            let (d_min, d_max) = distance_bounds(led, center, self.user_radius);
            upper[i] = model.at_distance(dz, d_min);
            lower[i] = model.at_distance(dz, d_max);
        }
        Ok(ChannelEstimate::from_bounds(lower, upper))
    }

    pub fn estimates(&self) -> Result<Vec<ChannelEstimate>, SceneError> {
        (0..self.num_users()).map(|k| self.estimate_csit(k)).collect()
    }

    /// On-axis gain at the LED to receiving-plane height, used as the SNR reference.
    pub fn reference_gain(&self) -> Result<f64, SceneError> {
        let dz = self
            .led_positions
            .iter()
            .map(|l| l.z - self.user_centers[0].z)
            .fold(f64::INFINITY, f64::min);
        Ok(GainModel::new(&self.params)?.at_distance(dz, dz))
    }

    /// Power budget that realises `snr_db` under `reference`.
    pub fn power_for_snr(&self, snr_db: f64, reference: SnrReference) -> Result<f64, SceneError> {
        let ratio = 10f64.powf(snr_db / 10.0) * self.params.noise_power;
        Ok(match reference {
            SnrReference::Transmit => ratio,
            SnrReference::OnAxisGain => {
                let g = self.reference_gain()?;
                ratio / (g * g)
            }
        })
    }
}

/// How an SNR in dB maps to the electric power budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// SNR = P_t / σ².
    Transmit,
    /// SNR = P_t g₀² / σ² with g₀ the on-axis gain at the plane height.
    #[default]
    OnAxisGain,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_ii() -> LedParams {
        LedParams::default()
    }

    #[test]
    fn lambertian_orders() {
        assert_relative_eq!(lambertian_order(60.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(lambertian_order(45.0).unwrap(), 2.0, epsilon = 1e-12);
        // direct evaluation of -ln 2 / ln(cos 30°)
        let expected = -(2f64.ln()) / (3f64.sqrt() / 2.0).ln();
        assert_relative_eq!(lambertian_order(30.0).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(lambertian_order(30.0).unwrap(), 4.8188, epsilon = 1e-4);
        assert!(lambertian_order(0.0).is_err());
        assert!(lambertian_order(90.0).is_err());
    }

    #[test]
    fn pd_area() {
        assert_relative_eq!(effective_pd_area(1.5, 60.0, 1e-4).unwrap(), 3e-4, epsilon = 1e-16);
        assert_relative_eq!(effective_pd_area(1.0, 90.0, 1e-4).unwrap(), 1e-4, epsilon = 1e-16);
        assert_relative_eq!(effective_pd_area(1.5, 30.0, 1e-4).unwrap(), 9e-4, epsilon = 1e-15);
        assert!(effective_pd_area(1.5, 0.0, 1e-4).is_err());
    }

    #[test]
    fn on_axis_gain() {
        let p = table_ii();
        let h = channel_gain(&Point3::new(1.5, 1.5, 4.5), &Point3::new(1.5, 1.5, 1.7), &p).unwrap();
        let hand = 2.0 * 0.54 * 3e-4 / (2.0 * PI * 7.84);
        assert_relative_eq!(h, hand, max_relative = 1e-12);
        assert_relative_eq!(h, 6.58e-6, max_relative = 1e-3);
    }

    #[test]
    fn gain_outside_fov_is_zero() {
        let p = LedParams { fov_deg: 30.0, ..table_ii() };
        let h = channel_gain(&Point3::new(0.0, 0.0, 4.5), &Point3::new(3.0, 3.0, 1.7), &p).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn gain_scales_with_distance() {
        let m = GainModel::new(&table_ii()).unwrap();
        // fixed height, doubled range: h ∝ Δz^{l+1} / d^{l+3}
        assert_relative_eq!(m.at_distance(2.8, 5.6) / m.at_distance(2.8, 2.8), 1.0 / 16.0, max_relative = 1e-12);
        assert_relative_eq!(m.at_distance(5.6, 5.6) / m.at_distance(2.8, 2.8), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn distance_bound_cases() {
        let led = Point3::new(1.5, 1.5, 4.5);
        let c = Point3::new(1.5, 1.5, 1.7);
        let (dmin, dmax) = distance_bounds(&led, &c, 0.05);
        assert_relative_eq!(dmin, 2.8, epsilon = 1e-15);
        assert_relative_eq!(dmax, (0.05f64 * 0.05 + 2.8 * 2.8).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(dmax, 2.80045, epsilon = 1e-5);
        let off = Point3::new(0.3, 2.2, 1.7);
        let (a, b) = distance_bounds(&led, &off, 0.0);
        assert_eq!(a, b);
        assert_relative_eq!(a, led.distance(&off), epsilon = 1e-14);
    }

    fn scenario(radius: f64) -> Scenario {
        Scenario {
            led_positions: vec![
                Point3::new(0.5, 2.5, 4.5),
                Point3::new(2.5, 0.5, 4.5),
                Point3::new(0.5, 0.5, 4.5),
                Point3::new(2.5, 2.5, 4.5),
                Point3::new(1.5, 1.5, 4.5),
            ],
            user_centers: vec![Point3::new(1.5, 1.5, 1.7), Point3::new(0.7, 2.1, 1.7)],
            user_radius: radius,
            params: table_ii(),
            total_power: 1.0,
        }
    }

    #[test]
    fn perfect_csit_at_zero_radius() {
        let s = scenario(0.0);
        let e = s.estimate_csit(1).unwrap();
        assert_eq!(e.v, 0.0);
        let h = s.channel(&s.user_centers[1]).unwrap();
        assert_relative_eq!((&e.h_hat - h).norm(), 0.0, epsilon = 1e-20);
    }

    #[test]
    fn radius_grows_uncertainty() {
        let s = scenario(0.05);
        let e = s.estimate_csit(0).unwrap();
        let by_hand: f64 = (0..5).map(|n| (e.h_upper[n] - e.h_lower[n]).powi(2)).sum::<f64>() / 4.0;
        assert_relative_eq!(e.v, by_hand, max_relative = 1e-14);
        let vs: Vec<f64> = [0.05, 0.1, 0.3]
            .iter()
            .map(|&r| scenario(r).estimate_csit(0).unwrap().v)
            .collect();
        assert!(vs[0] < vs[1] && vs[1] < vs[2], "{vs:?}");
    }

    #[test]
    fn sampled_channels_stay_inside_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for radius in [0.05, 0.3, 0.8] {
            let s = scenario(radius);
            for (k, c) in s.user_centers.iter().enumerate() {
                let e = s.estimate_csit(k).unwrap();
                for _ in 0..1000 {
                    let rr = radius * rng.gen::<f64>().sqrt();
                    let a = rng.gen::<f64>() * 2.0 * PI;
                    let pos = Point3::new(c.x + rr * a.cos(), c.y + rr * a.sin(), c.z);
                    let h = s.channel(&pos).unwrap();
                    for n in 0..s.num_leds() {
                        assert!(h[n] >= e.h_lower[n] * (1.0 - 1e-12));
                        assert!(h[n] <= e.h_upper[n] * (1.0 + 1e-12));
                    }
                    assert!((&h - &e.h_hat).norm_squared() <= e.v * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn validation_rejects_led_below_plane() {
        let mut s = scenario(0.1);
        s.led_positions[0].z = 1.0;
        assert!(s.validate().is_err());
        assert!(scenario(0.1).validate().is_ok());
    }

    #[test]
    fn noise_conversion() {
        assert_relative_eq!(dbm_to_watts(-98.82), 1.312e-13, max_relative = 1e-3);
    }

    proptest! {
        #[test]
        fn distance_bounds_monotone(x in 0.0..3.0f64, y in 0.0..3.0f64, r1 in 0.0..0.5f64, dr in 0.0..0.5f64) {
            let led = Point3::new(1.0, 2.0, 4.5);
            let c = Point3::new(x, y, 1.7);
            let (a1, b1) = distance_bounds(&led, &c, r1);
            let (a2, b2) = distance_bounds(&led, &c, r1 + dr);
            prop_assert!(a2 <= a1 + 1e-15);
            prop_assert!(b2 >= b1 - 1e-15);
            prop_assert!(a1 >= 2.8 - 1e-12 && a1 <= b1);
        }

        #[test]
        fn gain_continuous_inside_fov(x in 0.5..2.5f64, y in 0.5..2.5f64) {
            let m = GainModel::new(&table_ii()).unwrap();
            let led = Point3::new(1.5, 1.5, 4.5);
            let g0 = m.gain(&led, &Point3::new(x, y, 1.7));
            let g1 = m.gain(&led, &Point3::new(x + 1e-7, y, 1.7));
            prop_assert!((g0 - g1).abs() <= 1e-6 * g0);
        }
    }
}
