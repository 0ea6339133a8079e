#![allow(dead_code)]

use rsma_vlc::bench::{load_config, Config};
use rsma_vlc::scene::{LedParams, Point3, Scenario, SnrReference};
use std::path::PathBuf;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn config(name: &str) -> Config {
    let text = std::fs::read_to_string(config_path(name)).expect("config file");
    load_config(&text).expect("valid config")
}

/// 4 LEDs, 4 users, 15 dB, [15, 20], r = 0.05.
pub fn fig4() -> Scenario {
    config("fig4.toml").scenario().unwrap()
}

pub fn overloaded() -> Scenario {
    config("overloaded_6x8.toml").scenario().unwrap()
}

pub fn ranged_params() -> LedParams {
    LedParams {
        current_min: 15.0,
        current_max: 20.0,
        dc_bias: 17.5,
        ..LedParams::default()
    }
}

/// One user under at most two LEDs with exact CSIT.
pub fn tiny(leds: &[(f64, f64)], user: (f64, f64), snr_db: f64) -> Scenario {
    let mut s = Scenario {
        led_positions: leds.iter().map(|&(x, y)| Point3::new(x, y, 4.5)).collect(),
        user_centers: vec![Point3::new(user.0, user.1, 1.7)],
        user_radius: 0.0,
        params: ranged_params(),
        total_power: 1.0,
    };
    s.total_power = s.power_for_snr(snr_db, SnrReference::OnAxisGain).unwrap();
    s
}
