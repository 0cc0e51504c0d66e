//! Synthetic Wi-Fi session-log generation with known ground truth.
//!
//! Arrivals at each access point follow an inhomogeneous Poisson process
//! whose hourly rates are calibrated so the expected number of distinct
//! devices seen per hour matches a target daily occupancy curve. Session
//! durations are exponential. Ground-truth occupancy series are computed
//! from the generated log through [`crate::ingest::count_occupancy`], so
//! the generator shares the pipeline's counting semantics by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::ingest::{count_occupancy, Scale, Scope, SessionRecord};
use crate::ingest::OccupancySeries;

const SECONDS_PER_HOUR: i64 = 3_600;
const SECONDS_PER_DAY: i64 = 86_400;
const HOURS_PER_DAY: usize = 24;

/// Stochastic description of one building's Wi-Fi activity.
#[derive(Debug, Clone)]
pub struct BuildingProfile {
    /// Number of access points.
    pub ap_count: usize,
    /// Number of simulated days.
    pub days: usize,
    /// First simulated instant, UTC epoch seconds, midnight-aligned.
    pub start: i64,
    /// Target mean occupancy per AP for each hour of the day.
    pub daily_shape: [f64; HOURS_PER_DAY],
    /// Multiplier applied to the daily shape on Saturdays and Sundays.
    pub weekend_scale: f64,
    /// Mean session duration in minutes.
    pub session_mean_minutes: f64,
    /// Arrival dispersion: coefficient of variation of a mean-one Gamma
    /// multiplier on each AP-hour's rate. Zero gives pure Poisson counts.
    pub noise: f64,
    /// RNG seed; equal seeds give bit-identical logs.
    pub seed: u64,
}

impl BuildingProfile {
    /// Campus-sized default: 18 APs over six weeks with a bimodal
    /// working-day curve and damped weekends.
    pub fn default_preset() -> Self {
        BuildingProfile {
            ap_count: 18,
            days: 42,
            start: 1_452_816_000, // 2016-01-15T00:00:00Z
            daily_shape: [
                0.3, 0.2, 0.2, 0.2, 0.2, 0.3, 0.6, 1.5, 3.5, 6.0, 7.5, 8.0, 6.5, 6.0, 7.5, 8.0,
                7.0, 5.0, 3.0, 1.8, 1.2, 0.8, 0.5, 0.4,
            ],
            weekend_scale: 0.25,
            session_mean_minutes: 42.0,
            noise: 0.35,
            seed: 2016,
        }
    }

    /// Smaller fixed-seed profile used by the bundled model-comparison
    /// benchmark: four APs over four weeks.
    pub fn benchmark_preset() -> Self {
        BuildingProfile {
            ap_count: 4,
            days: 28,
            start: 1_452_816_000,
            daily_shape: [
                0.4, 0.3, 0.3, 0.3, 0.3, 0.5, 1.0, 2.0, 4.0, 6.5, 8.0, 8.5, 7.0, 6.5, 8.0, 8.5,
                7.5, 5.5, 3.5, 2.0, 1.4, 1.0, 0.7, 0.5,
            ],
            weekend_scale: 0.5,
            session_mean_minutes: 45.0,
            noise: 0.3,
            seed: 424_242,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ap_count == 0 {
            return Err(Error::invalid("profile needs at least one access point"));
        }
        if self.days == 0 {
            return Err(Error::invalid("profile needs at least one day"));
        }
        if self.start % SECONDS_PER_DAY != 0 {
            return Err(Error::invalid(format!(
                "start {} is not midnight-aligned",
                self.start
            )));
        }
        if self.daily_shape.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("daily shape values must be finite and >= 0"));
        }
        if !self.weekend_scale.is_finite() || !(0.0..=1.0).contains(&self.weekend_scale) {
            return Err(Error::invalid("weekend scale must lie in [0, 1]"));
        }
        if !self.session_mean_minutes.is_finite() || self.session_mean_minutes <= 0.0 {
            return Err(Error::invalid("session mean must be a positive duration"));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::invalid("noise must be finite and >= 0"));
        }
        Ok(())
    }

    /// End of the simulated range, exclusive.
    pub fn end(&self) -> i64 {
        self.start + self.days as i64 * SECONDS_PER_DAY
    }
}

/// A generated log together with its exact occupancy ground truth.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub sessions: Vec<SessionRecord>,
    /// Covered range `[start, end)`; sessions may begin before `start`.
    pub start: i64,
    pub end: i64,
    pub ap_ids: Vec<String>,
    /// One series per scope (building first, then each AP) and scale.
    pub truth: Vec<OccupancySeries>,
}

impl SynthDataset {
    /// Ground-truth series for one scope and scale.
    pub fn truth_for(&self, scope: &Scope, scale: Scale) -> Option<&OccupancySeries> {
        self.truth
            .iter()
            .find(|s| s.scale == scale && s.scope == *scope)
    }
}

/// Expected distinct devices per hour of the periodic day, given hourly
/// arrival rates and an exponential dwell with the given mean (hours).
///
/// An arrival during hour `h` is always seen in hour `h`; an arrival at
/// offset `s` of hour `h-k` is still present at the start of hour `h`
/// with probability `exp(-(k-s)/w)`, which integrates to
/// `w (1 - e^{-1/w}) e^{-(k-1)/w}` per unit rate.
pub fn expected_hourly(rates: &[f64; HOURS_PER_DAY], dwell_hours: f64) -> [f64; HOURS_PER_DAY] {
    let decay = (-1.0 / dwell_hours).exp();
    let gain = dwell_hours * (1.0 - decay);
    let horizon = ((dwell_hours * 40.0).ceil() as usize).clamp(HOURS_PER_DAY, 4_000);
    let mut expected = [0.0; HOURS_PER_DAY];
    for (h, out) in expected.iter_mut().enumerate() {
        let mut total = rates[h];
        let mut weight = gain;
        for k in 1..=horizon {
            let g = (h as i64 - k as i64).rem_euclid(HOURS_PER_DAY as i64) as usize;
            total += rates[g] * weight;
            weight *= decay;
        }
        *out = total;
    }
    expected
}

/// Hourly arrival rates whose expected hourly distinct-device count
/// reproduces `shape` under the periodic-day assumption.
///
/// The expectation is linear in the rates, `E = A lambda`, where `A`
/// folds the survival kernel onto the 24-hour cycle, so the rates come
/// from one linear solve. Rates are clamped at zero afterwards: a shape
/// can be infeasible (carry-over from a busy hour alone exceeding the
/// next hour's target), in which case the clamped rates are only an
/// approximation, necessarily so.
fn calibrate_rates(shape: &[f64; HOURS_PER_DAY], dwell_hours: f64) -> [f64; HOURS_PER_DAY] {
    let decay = (-1.0 / dwell_hours).exp();
    let gain = dwell_hours * (1.0 - decay);
    let horizon = ((dwell_hours * 40.0).ceil() as usize).clamp(HOURS_PER_DAY, 4_000);
    let mut kernel = vec![vec![0.0; HOURS_PER_DAY]; HOURS_PER_DAY];
    for (h, row) in kernel.iter_mut().enumerate() {
        row[h] += 1.0;
        let mut weight = gain;
        for k in 1..=horizon {
            let g = (h as i64 - k as i64).rem_euclid(HOURS_PER_DAY as i64) as usize;
            row[g] += weight;
            weight *= decay;
        }
    }
    let solved = crate::arima::solve_linear(kernel, shape.to_vec())
        .unwrap_or_else(|| shape.iter().map(|s| s / (1.0 + dwell_hours)).collect());
    let mut rates = [0.0; HOURS_PER_DAY];
    for (r, v) in rates.iter_mut().zip(solved) {
        *r = v.max(0.0);
    }
    rates
}

fn is_weekend(t: i64) -> bool {
    // Day-of-week from the epoch day number; day 0 (1970-01-01) was a
    // Thursday, so +4 places Sunday at 0 and Saturday at 6.
    let dow = (t.div_euclid(SECONDS_PER_DAY) + 4).rem_euclid(7);
    dow == 0 || dow == 6
}

/// Generate a session log and its exact occupancy ground truth.
///
/// Deterministic for a fixed profile. Arrivals are generated from a
/// warm-up period before `profile.start` onward so occupancy is in steady
/// state at the first interval; sessions ending at or before `start` are
/// dropped, sessions merely beginning before it are kept.
pub fn generate_sessions(profile: &BuildingProfile) -> Result<SynthDataset> {
    profile.validate()?;
    let dwell_hours = profile.session_mean_minutes / 60.0;
    let weekday_rates = calibrate_rates(&profile.daily_shape, dwell_hours);
    let weekend_shape = profile.daily_shape.map(|s| s * profile.weekend_scale);
    let weekend_rates = calibrate_rates(&weekend_shape, dwell_hours);

    let mean_seconds = profile.session_mean_minutes * 60.0;
    let duration_dist = Exp::new(1.0 / mean_seconds)
        .map_err(|_| Error::invalid("session mean produced an invalid rate"))?;
    let arrival_noise = if profile.noise > 0.0 {
        let shape = 1.0 / (profile.noise * profile.noise);
        Some(
            Gamma::new(shape, 1.0 / shape)
                .map_err(|_| Error::invalid("noise produced an invalid dispersion"))?,
        )
    } else {
        None
    };

    let ap_ids: Vec<String> = (1..=profile.ap_count)
        .map(|i| format!("AP{i:02}"))
        .collect();
    let warmup_hours = ((dwell_hours * 40.0).ceil() as i64).clamp(6, 4_000);
    let total_hours = profile.days as i64 * HOURS_PER_DAY as i64;

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut sessions = Vec::new();
    let mut visit = 0u64;
    for hour in -warmup_hours..total_hours {
        let t_hour = profile.start + hour * SECONDS_PER_HOUR;
        let hour_of_day = (t_hour.rem_euclid(SECONDS_PER_DAY) / SECONDS_PER_HOUR) as usize;
        let rates = if is_weekend(t_hour) {
            &weekend_rates
        } else {
            &weekday_rates
        };
        let base_rate = rates[hour_of_day];
        if base_rate <= 0.0 {
            continue;
        }
        for ap in &ap_ids {
            let rate = match &arrival_noise {
                Some(gamma) => base_rate * gamma.sample(&mut rng),
                None => base_rate,
            };
            if rate <= 0.0 {
                continue;
            }
            let arrivals = Poisson::new(rate)
                .map_err(|_| Error::Numerical("arrival rate overflowed".into()))?
                .sample(&mut rng) as u64;
            for _ in 0..arrivals {
                let offset: i64 = rng.gen_range(0..SECONDS_PER_HOUR);
                let raw: f64 = duration_dist.sample(&mut rng);
                let duration = (raw.ceil() as u64).max(1);
                visit += 1;
                let start = t_hour + offset;
                if start + duration as i64 <= profile.start {
                    continue;
                }
                sessions.push(SessionRecord {
                    start,
                    duration,
                    device_id: format!("v{visit:08}"),
                    ap_id: ap.clone(),
                });
            }
        }
    }
    sessions.sort_by(|a, b| {
        (a.start, &a.ap_id, &a.device_id).cmp(&(b.start, &b.ap_id, &b.device_id))
    });

    let end = profile.end();
    let mut truth = Vec::with_capacity((1 + profile.ap_count) * Scale::ALL.len());
    let mut scopes = vec![Scope::Building];
    scopes.extend(ap_ids.iter().cloned().map(Scope::AccessPoint));
    for scope in &scopes {
        for scale in Scale::ALL {
            truth.push(count_occupancy(&sessions, scale, scope, profile.start, end)?);
        }
    }
    Ok(SynthDataset {
        sessions,
        start: profile.start,
        end,
        ap_ids,
        truth,
    })
}
