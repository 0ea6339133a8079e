//! Scenario configuration, parameter sweeps and CSV output.

use crate::driver::{certify, prepare, run_scheme, DriverConfig, DriverError, Scheme};
use crate::rates::{worst_case_validate, BeamformingSolution, Diagnostics};
use crate::scene::{dbm_to_watts, LedParams, Point3, Scenario, SceneError, SnrReference, DEFAULT_NOISE_DBM};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// LED coordinates of the reference room, LED 1 first.
pub const TABLE_I: [[f64; 3]; 9] = [
    [0.5, 2.5, 4.5],
    [2.5, 0.5, 4.5],
    [0.5, 0.5, 4.5],
    [2.5, 2.5, 4.5],
    [1.5, 1.5, 4.5],
    [0.5, 1.5, 4.5],
    [2.5, 1.5, 4.5],
    [1.5, 0.5, 4.5],
    [1.5, 2.5, 4.5],
];

pub const SIX_LED_SUBSET: [usize; 6] = [1, 2, 3, 4, 6, 7];
pub const FOUR_LED_SUBSET: [usize; 4] = [1, 2, 3, 4];

/// Minimum Monte-Carlo sample count for an accepted sweep row.
pub const MIN_SAMPLES: usize = 500;
/// Acceptance threshold on the Monte-Carlo margin.
pub const MARGIN_TOL: f64 = -1e-6;

pub const CSV_HEADER: &str = "scheme,axis,axis_value,mmf_rate_bps_hz,outer_iters,rank_gap,mc_margin,wall_s";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, reason: impl Into<String>) -> BenchError {
    BenchError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedSection {
    /// 1-based indices into [`TABLE_I`].
    pub table: Option<Vec<usize>>,
    /// Explicit coordinates; excludes `table`.
    pub positions: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserSection {
    /// Explicit (x, y) centers; seeded placement is used when absent.
    pub centers: Option<Vec<[f64; 2]>>,
    pub count: usize,
    pub height: f64,
    pub radius: f64,
    pub min_separation: f64,
    /// Room footprint (x, y) used for seeded placement.
    pub room: [f64; 2],
    pub seed: u64,
}

impl Default for UserSection {
    fn default() -> Self {
        UserSection {
            centers: None,
            count: 4,
            height: 1.7,
            radius: 0.05,
            min_separation: 0.2,
            room: [3.0, 3.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamSection {
    pub semi_angle_deg: Option<f64>,
    pub fov_deg: Option<f64>,
    pub pd_area: Option<f64>,
    pub refractive_index: Option<f64>,
    pub responsivity: Option<f64>,
    pub led_conversion: Option<f64>,
    pub amplitude: Option<f64>,
    pub variance: Option<f64>,
    pub noise_dbm: Option<f64>,
    /// Noise power in W; excludes `noise_dbm`.
    pub noise_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSection {
    pub current_min: Option<f64>,
    pub current_max: Option<f64>,
    /// Defaults to the midpoint of the current range when that is given.
    pub dc_bias: Option<f64>,
    pub snr_db: f64,
    pub snr_reference: SnrReference,
    /// Electric power budget; overrides `snr_db`.
    pub total_power: Option<f64>,
}

impl Default for LimitSection {
    fn default() -> Self {
        LimitSection {
            current_min: None,
            current_max: None,
            dc_bias: None,
            snr_db: 15.0,
            snr_reference: SnrReference::default(),
            total_power: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SnrDb,
    CurrentMin,
    NumUsers,
    NumLeds,
    Radius,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::SnrDb => "snr_db",
            Axis::CurrentMin => "current_min",
            Axis::NumUsers => "num_users",
            Axis::NumLeds => "num_leds",
            Axis::Radius => "radius",
        }
    }

    pub fn parse(s: &str) -> Option<Axis> {
        [Axis::SnrDb, Axis::CurrentMin, Axis::NumUsers, Axis::NumLeds, Axis::Radius]
            .into_iter()
            .find(|a| a.name() == s)
    }

    /// Order in which solutions are carried to the next value: toward the
    /// harder end for monotone axes.
    fn descending(self) -> bool {
        matches!(self, Axis::NumUsers | Axis::Radius)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Rsma, Scheme::Sdma]
}

fn default_samples() -> usize {
    1000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Write measured wall time; off gives byte-reproducible files.
    #[serde(default = "yes")]
    pub wall_time: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub leds: LedSection,
    pub users: UserSection,
    pub params: ParamSection,
    pub limits: LimitSection,
    pub driver: DriverConfig,
    pub sweep: Option<SweepSection>,
}

pub fn load_config(text: &str) -> Result<Config, BenchError> {
    toml::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))
}

/// Parses `text` and builds its scenario.
pub fn load_scenario(text: &str) -> Result<Scenario, BenchError> {
    load_config(text)?.scenario()
}

/// Uniform placement in the footprint with a minimum pairwise separation.
pub fn place_users(
    count: usize,
    room: [f64; 2],
    height: f64,
    min_separation: f64,
    seed: u64,
) -> Result<Vec<Point3>, BenchError> {
    if !(room[0] > 0.0 && room[1] > 0.0) {
        return Err(invalid("users.room", "footprint must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users: Vec<Point3> = Vec::with_capacity(count);
    let mut attempts = 0;
    while users.len() < count {
        attempts += 1;
        if attempts > 100_000 {
            return Err(invalid(
                "users.min_separation",
                format!("cannot place {count} users {min_separation} m apart"),
            ));
        }
        let p = Point3::new(rng.gen::<f64>() * room[0], rng.gen::<f64>() * room[1], height);
        if users.iter().all(|u| u.horizontal_distance(&p) >= min_separation) {
            users.push(p);
        }
    }
    Ok(users)
}

impl Config {
    pub fn led_positions(&self) -> Result<Vec<Point3>, BenchError> {
        match (&self.leds.table, &self.leds.positions) {
            (Some(_), Some(_)) => Err(invalid("leds", "set either `table` or `positions`, not both")),
            (None, Some(pos)) => Ok(pos.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()),
            (table, None) => {
                let all: Vec<usize> = (1..=TABLE_I.len()).collect();
                table
                    .as_ref()
                    .unwrap_or(&all)
                    .iter()
                    .map(|&i| {
                        TABLE_I
                            .get(i.wrapping_sub(1))
                            .map(|p| Point3::new(p[0], p[1], p[2]))
                            .ok_or_else(|| invalid("leds.table", format!("no LED {i}")))
                    })
                    .collect()
            }
        }
    }

    /// User centers: explicit ones, or `count` seeded placements.
    pub fn user_centers(&self, count: usize) -> Result<Vec<Point3>, BenchError> {
        let u = &self.users;
        match &u.centers {
            Some(c) => {
                if c.len() < count {
                    return Err(invalid("users.centers", format!("{count} users requested, {} given", c.len())));
                }
                Ok(c[..count].iter().map(|p| Point3::new(p[0], p[1], u.height)).collect())
            }
            None => place_users(count, u.room, u.height, u.min_separation, u.seed),
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.centers.as_ref().map_or(self.users.count, Vec::len)
    }

    pub fn params(&self) -> Result<LedParams, BenchError> {
        let d = LedParams::default();
        let p = &self.params;
        let l = &self.limits;
        let noise_power = match (p.noise_dbm, p.noise_power) {
            (Some(_), Some(_)) => return Err(invalid("params", "set either `noise_dbm` or `noise_power`")),
            (Some(dbm), None) => dbm_to_watts(dbm),
            (None, Some(w)) => w,
            (None, None) => dbm_to_watts(DEFAULT_NOISE_DBM),
        };
        let (current_min, current_max) = (
            l.current_min.unwrap_or(d.current_min),
            l.current_max.unwrap_or(d.current_max),
        );
        let dc_bias = match (l.dc_bias, l.current_min.is_some() || l.current_max.is_some()) {
            (Some(b), _) => b,
            (None, true) => 0.5 * (current_min + current_max),
            (None, false) => d.dc_bias,
        };
        let params = LedParams {
            semi_angle_deg: p.semi_angle_deg.unwrap_or(d.semi_angle_deg),
            fov_deg: p.fov_deg.unwrap_or(d.fov_deg),
            pd_area: p.pd_area.unwrap_or(d.pd_area),
            refractive_index: p.refractive_index.unwrap_or(d.refractive_index),
            responsivity: p.responsivity.unwrap_or(d.responsivity),
            led_conversion: p.led_conversion.unwrap_or(d.led_conversion),
            amplitude: p.amplitude.unwrap_or(d.amplitude),
            variance: p.variance.unwrap_or(d.variance),
            dc_bias,
            current_min,
            current_max,
            noise_power,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn scenario(&self) -> Result<Scenario, BenchError> {
        self.scenario_with(self.num_users())
    }

    fn scenario_with(&self, users: usize) -> Result<Scenario, BenchError> {
        let mut s = Scenario {
            led_positions: self.led_positions()?,
            user_centers: self.user_centers(users)?,
            user_radius: self.users.radius,
            params: self.params()?,
            total_power: 1.0,
        };
        s.total_power = match self.limits.total_power {
            Some(p) => p,
            None => s.power_for_snr(self.limits.snr_db, self.limits.snr_reference)?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, BenchError> {
        let sw = self.sweep.as_ref().ok_or_else(|| invalid("sweep", "section missing"))?;
        let spec = SweepSpec {
            axis: sw.axis,
            values: sw.values.clone(),
            base: self.clone(),
            schemes: sw.schemes.clone(),
            seed: self.users.seed,
            samples: sw.samples,
            wall_time: sw.wall_time,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base: Config,
    pub schemes: Vec<Scheme>,
    /// Seeds user placement and Monte-Carlo validation.
    pub seed: u64,
    pub samples: usize,
    pub wall_time: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.values.is_empty() {
            return Err(invalid("sweep.values", "empty"));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("sweep.values", "must be strictly increasing"));
        }
        if self.schemes.is_empty() {
            return Err(invalid("sweep.schemes", "empty"));
        }
        if self.samples < MIN_SAMPLES {
            return Err(invalid("sweep.samples", format!("at least {MIN_SAMPLES} required")));
        }
        let integral = self.values.iter().all(|v| v.fract() == 0.0 && *v >= 1.0);
        match self.axis {
            Axis::NumUsers | Axis::NumLeds if !integral => {
                Err(invalid("sweep.values", "counts must be positive integers"))
            }
            Axis::NumLeds if *self.values.last().unwrap() as usize > self.base.led_positions()?.len() => {
                Err(invalid("sweep.values", "more LEDs than configured"))
            }
            Axis::NumUsers => match &self.base.users.centers {
                Some(c) if (*self.values.last().unwrap() as usize) > c.len() => {
                    Err(invalid("sweep.values", "more users than configured centers"))
                }
                _ => Ok(()),
            },
            Axis::Radius if self.values[0] < 0.0 => Err(invalid("sweep.values", "radius must be nonnegative")),
            _ => Ok(()),
        }
    }

    fn config(&self) -> Config {
        let mut c = self.base.clone();
        c.users.seed = self.seed;
        c
    }

    /// Scenario at one axis value.
    pub fn scenario_at(&self, value: f64) -> Result<Scenario, BenchError> {
        let mut c = self.config();
        let mut users = c.num_users();
        match self.axis {
            Axis::SnrDb => {
                c.limits.snr_db = value;
                c.limits.total_power = None;
            }
            Axis::CurrentMin => {
                // bias stays where the base range puts it
                let b = c.params()?.dc_bias;
                c.limits.dc_bias = Some(b);
                c.limits.current_min = Some(value);
                c.limits.current_max = Some(value + 5.0);
            }
            Axis::NumUsers => users = value as usize,
            Axis::NumLeds => {
                let all = c.led_positions()?;
                c.leds = LedSection {
                    table: None,
                    positions: Some(all[..value as usize].iter().map(|p| [p.x, p.y, p.z]).collect()),
                };
            }
            Axis::Radius => c.users.radius = value,
        }
        if self.axis == Axis::NumUsers && c.users.centers.is_none() {
            // nested placements: the first k of the largest draw
            let most = *self.values.last().unwrap() as usize;
            let all = c.user_centers(most)?;
            c.users.centers = Some(all[..users].iter().map(|p| [p.x, p.y]).collect());
        }
        c.scenario_with(users)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub axis: Axis,
    pub axis_value: f64,
    pub mmf_rate: f64,
    pub outer_iters: usize,
    pub rank_gap: f64,
    pub mc_margin: f64,
    pub wall_s: f64,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn accepted(&self) -> bool {
        self.error.is_none() && self.mc_margin >= MARGIN_TOL
    }
}

/// Beams of a solution for a neighbouring axis value, adapted to `scenario`.
fn carry_beams(axis: Axis, beams: &[DVector<f64>], scenario: &Scenario) -> Option<Vec<DVector<f64>>> {
    let k = scenario.num_users();
    let n = scenario.num_leds();
    match axis {
        Axis::NumUsers if beams.len() >= k + 1 => Some(beams[..k + 1].to_vec()),
        Axis::NumLeds if beams[0].len() <= n => Some(
            beams
                .iter()
                .map(|b| DVector::from_fn(n, |i, _| if i < b.len() { b[i] } else { 0.0 }))
                .collect(),
        ),
        _ if beams.len() == k + 1 && beams[0].len() == n => Some(beams.to_vec()),
        _ => None,
    }
}

/// Certified solution at fixed beams if they meet both power rows.
fn evaluate_beams(scenario: &Scenario, scheme: Scheme, beams: Vec<DVector<f64>>) -> Option<BeamformingSolution> {
    let prep = prepare(scenario, scheme).ok()?;
    let p = &scenario.params;
    let mut beams = beams;
    if scheme == Scheme::Sdma {
        beams[0].fill(0.0);
    }
    let electric: f64 = beams.iter().map(|b| p.variance * b.norm_squared()).sum();
    let limit = p.optical_limit() * (1.0 + 1e-12);
    let optical_ok = (0..scenario.num_leds()).all(|n| beams.iter().map(|b| p.amplitude * b[n].abs()).sum::<f64>() <= limit);
    if electric > scenario.total_power * (1.0 + 1e-12) || !optical_ok {
        return None;
    }
    let diag = Diagnostics {
        scale: 1.0,
        ..Default::default()
    };
    Some(certify(&prep, beams, diag))
}

struct Failure {
    no_interior: bool,
    message: String,
}

struct Outcome {
    solution: BeamformingSolution,
    margin: f64,
}

fn validated(
    scenario: &Scenario,
    scheme: Scheme,
    sol: BeamformingSolution,
    samples: usize,
    seed: u64,
) -> Result<Outcome, String> {
    let prep = prepare(scenario, Scheme::Rsma).map_err(|e| e.to_string())?;
    let report = worst_case_validate(&prep.estimates, &sol, &prep.dists, scenario.params.noise_power, samples, seed)
        .map_err(|e| e.to_string())?;
    // without a common stream its margin is identically zero
    let margin = if scheme.has_common() { report.worst() } else { report.private_margin };
    Ok(Outcome { solution: sol, margin })
}

/// Best accepted candidate by certified value; ties keep the earlier one.
fn pick(candidates: Vec<Outcome>) -> Option<Outcome> {
    candidates
        .into_iter()
        .filter(|o| o.margin >= MARGIN_TOL)
        .fold(None, |best: Option<Outcome>, o| match best {
            Some(b) if b.solution.mmf_value >= o.solution.mmf_value => Some(b),
            _ => Some(o),
        })
}

/// One row per (scheme, value). Each row keeps the best validated solution
/// among a fresh run, a run warm-started from the neighbouring value and the
/// neighbouring beams themselves; RSMA rows also consider the SDMA beams.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>, BenchError> {
    spec.validate()?;
    let driver = DriverConfig {
        seed: spec.seed,
        ..spec.base.driver.clone()
    };
    let scenarios: Vec<Result<Scenario, String>> = spec
        .values
        .iter()
        .map(|&v| spec.scenario_at(v).map_err(|e| e.to_string()))
        .collect();

    // independent runs are embarrassingly parallel
    let mut order: Vec<Scheme> = spec.schemes.clone();
    order.sort_by_key(|s| *s == Scheme::Rsma);
    let jobs: Vec<(Scheme, usize)> = order.iter().flat_map(|&s| (0..spec.values.len()).map(move |i| (s, i))).collect();
    let fresh: Vec<(Result<BeamformingSolution, Failure>, f64)> = jobs
        .par_iter()
        .map(|&(scheme, i)| {
            let start = Instant::now();
            let out = match &scenarios[i] {
                Ok(s) => run_scheme(s, &driver, scheme, None).map_err(|e| Failure {
                    no_interior: matches!(e, DriverError::Initialization(_)),
                    message: e.to_string(),
                }),
                Err(e) => Err(Failure {
                    no_interior: false,
                    message: e.clone(),
                }),
            };
            (out, start.elapsed().as_secs_f64())
        })
        .collect();

    let mut rows: Vec<ResultRow> = Vec::new();
    let mut sdma_beams: Vec<Option<Vec<DVector<f64>>>> = vec![None; spec.values.len()];
    for (si, &scheme) in order.iter().enumerate() {
        let mut idx: Vec<usize> = (0..spec.values.len()).collect();
        if spec.axis.descending() {
            idx.reverse();
        }
        let mut carried: Option<Vec<DVector<f64>>> = None;
        for &i in &idx {
            let value = spec.values[i];
            let (fresh_sol, fresh_time) = &fresh[si * spec.values.len() + i];
            let start = Instant::now();
            let scenario = match &scenarios[i] {
                Ok(s) => s,
                Err(e) => {
                    rows.push(failed_row(scheme, spec.axis, value, e.clone()));
                    continue;
                }
            };
            let mut hints: Vec<Vec<DVector<f64>>> = Vec::new();
            if let Some(b) = carried.as_ref().and_then(|b| carry_beams(spec.axis, b, scenario)) {
                hints.push(b);
            }
            if scheme == Scheme::Rsma {
                if let Some(b) = &sdma_beams[i] {
                    hints.push(b.clone());
                }
            }
            let mut candidates = Vec::new();
            let mut first_error = None;
            match fresh_sol {
                Ok(sol) => candidates.push(sol.clone()),
                Err(e) => {
                    if e.no_interior {
                        // the all-zero beams are feasible and certify rate 0
                        log::warn!("{} at {} = {value}: {}; recording zero beams", scheme.name(), spec.axis, e.message);
                        let zero = vec![DVector::zeros(scenario.num_leds()); scenario.num_users() + 1];
                        candidates.extend(evaluate_beams(scenario, scheme, zero));
                    }
                    first_error = Some(e.message.clone());
                }
            }
            for h in &hints {
                if let Ok(sol) = run_scheme(scenario, &driver, scheme, Some(h)) {
                    candidates.push(sol);
                }
                if let Some(sol) = evaluate_beams(scenario, scheme, h.clone()) {
                    candidates.push(sol);
                }
            }
            let outcomes: Vec<Outcome> = candidates
                .into_iter()
                .filter_map(|s| validated(scenario, scheme, s, spec.samples, spec.seed).ok())
                .collect();
            let wall = fresh_time + start.elapsed().as_secs_f64();
            match pick(outcomes) {
                Some(best) => {
                    let sol = &best.solution;
                    carried = Some(sol.beams());
                    if scheme == Scheme::Sdma {
                        sdma_beams[i] = Some(sol.beams());
                    }
                    rows.push(ResultRow {
                        scheme,
                        axis: spec.axis,
                        axis_value: value,
                        mmf_rate: sol.mmf_value,
                        outer_iters: sol.diagnostics.outer_iterations,
                        rank_gap: sol.diagnostics.max_rank_gap(),
                        mc_margin: best.margin,
                        wall_s: if spec.wall_time { wall } else { 0.0 },
                        error: None,
                    });
                }
                None => {
                    let e = first_error.unwrap_or_else(|| "no candidate passed validation".into());
                    log::warn!("{scheme:?} at {} = {value}: {e}", spec.axis);
                    rows.push(failed_row(scheme, spec.axis, value, e));
                }
            }
        }
    }
    // axis order within each scheme, schemes in requested order
    rows.sort_by(|a, b| {
        let pa = spec.schemes.iter().position(|s| *s == a.scheme);
        let pb = spec.schemes.iter().position(|s| *s == b.scheme);
        pa.cmp(&pb).then(a.axis_value.total_cmp(&b.axis_value))
    });
    Ok(rows)
}

fn failed_row(scheme: Scheme, axis: Axis, value: f64, error: String) -> ResultRow {
    ResultRow {
        scheme,
        axis,
        axis_value: value,
        mmf_rate: f64::NAN,
        outer_iters: 0,
        rank_gap: f64::NAN,
        mc_margin: f64::NAN,
        wall_s: 0.0,
        error: Some(error),
    }
}

/// `x` rounded to six significant digits.
pub fn six_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new digit, e.g. 9.999995
    let reparsed: f64 = s.parse().unwrap();
    if reparsed.abs().log10().floor() as i32 > magnitude && decimals > 0 {
        let d = decimals - 1;
        format!("{x:.d$}")
    } else {
        s
    }
}

fn format_row(r: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{:e},{:e},{:.3}\n",
        r.scheme.name(),
        r.axis,
        r.axis_value,
        six_significant(r.mmf_rate),
        r.outer_iters,
        r.rank_gap,
        r.mc_margin,
        r.wall_s
    )
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut out: W) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(invalid("rows", "nothing to write"));
    }
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format_row(r));
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], destination: &Path) -> Result<(), BenchError> {
    let file = std::fs::File::create(destination)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// Parses a file written by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, BenchError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(BenchError::Parse("unexpected CSV header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| BenchError::Parse(format!("line {}: bad {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("field count"));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let scheme = match f[0] {
                "rsma" => Scheme::Rsma,
                "sdma" => Scheme::Sdma,
                _ => return Err(bad("scheme")),
            };
            Ok(ResultRow {
                scheme,
                axis: Axis::parse(f[1]).ok_or_else(|| bad("axis"))?,
                axis_value: num(f[2], "axis_value")?,
                mmf_rate: num(f[3], "mmf_rate")?,
                outer_iters: f[4].parse().map_err(|_| bad("outer_iters"))?,
                rank_gap: num(f[5], "rank_gap")?,
                mc_margin: num(f[6], "mc_margin")?,
                wall_s: num(f[7], "wall_s")?,
                error: None,
            })
        })
        .collect()
}

/// User coordinates of every sweep point, for reproducing the placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub axis: Axis,
    pub points: Vec<SidecarPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarPoint {
    pub axis_value: f64,
    pub users: Vec<[f64; 3]>,
    pub leds: Vec<[f64; 3]>,
}

pub fn sidecar(spec: &SweepSpec) -> Result<Sidecar, BenchError> {
    let points = spec
        .values
        .iter()
        .map(|&v| {
            let s = spec.scenario_at(v)?;
            Ok(SidecarPoint {
                axis_value: v,
                users: s.user_centers.iter().map(|p| [p.x, p.y, p.z]).collect(),
                leds: s.led_positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            })
        })
        .collect::<Result<_, BenchError>>()?;
    Ok(Sidecar {
        seed: spec.seed,
        axis: spec.axis,
        points,
    })
}

pub fn write_sidecar(spec: &SweepSpec, destination: &Path) -> Result<(), BenchError> {
    let text = serde_json::to_string_pretty(&sidecar(spec)?).map_err(|e| BenchError::Parse(e.to_string()))?;
    std::fs::write(destination, text + "\n")?;
    Ok(())
}
