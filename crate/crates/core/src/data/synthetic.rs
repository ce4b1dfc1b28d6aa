//! Seeded synthetic load profiles: a daily sinusoid modulated by weekday, plus noise.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use super::{LoadUnit, TimeSeries};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticLoad {
    pub start: NaiveDate,
    pub days: u32,
    pub interval_minutes: u32,
    pub base: f64,
    pub daily_amplitude: f64,
    /// Relative swing of the daily mean across weekdays.
    pub weekday_amplitude: f64,
    /// Multiplier applied on Saturday and Sunday.
    pub weekend_factor: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticLoad {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            days: 60,
            interval_minutes: 30,
            base: 2.0,
            daily_amplitude: 0.8,
            weekday_amplitude: 0.1,
            weekend_factor: 1.25,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticLoad {
    /// Noise-free value at a timestamp.
    pub fn profile(&self, ts: chrono::NaiveDateTime) -> f64 {
        let day_fraction = (ts.hour() * 60 + ts.minute()) as f64 / 1440.0;
        let weekday = ts.weekday().num_days_from_monday() as f64;
        let mut level = 1.0 + self.weekday_amplitude * (2.0 * PI * weekday / 7.0).sin();
        if weekday >= 5.0 {
            level *= self.weekend_factor;
        }
        // trough before dawn, peak in the evening
        let daily = -(2.0 * PI * (day_fraction - 0.1)).cos();
        level * (self.base + self.daily_amplitude * daily)
    }

    pub fn generate(&self) -> Result<TimeSeries> {
        if self.days == 0 {
            return Err(Error::Config("synthetic series needs at least one day".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("invalid noise level {}", self.noise_std)));
        }
        let per_day = 1440 / self.interval_minutes.max(1) as i64;
        let t0 = self.start.and_hms_opt(0, 0, 0).expect("midnight");
        let floor = 0.05 * self.base.abs().max(1e-3);
        let mut rng = SeededRng::new(self.seed);
        let readings: Vec<_> = (0..self.days as i64 * per_day)
            .map(|i| {
                let ts = t0 + Duration::minutes(i * self.interval_minutes as i64);
                let noise = if self.noise_std > 0.0 { rng.normal(0.0, self.noise_std) } else { 0.0 };
                (ts, (self.profile(ts) + noise).max(floor))
            })
            .collect();
        TimeSeries::from_readings(self.interval_minutes, LoadUnit::Kilowatt, format!("synthetic-{}", self.seed), readings)
    }
}
