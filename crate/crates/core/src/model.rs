//! Scenario parameters, unit handling, derived rates and model options.
//!
//! A scenario describes one road segment: its length, the vehicle speed and
//! population, the transmission range and failure probability, and the record
//! refresh period. All rate formulas are SI-based, so speeds are stored in
//! m/s; scenario files may declare km/h and are converted on load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed unit tag accepted by scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedUnit {
    #[serde(rename = "kmh")]
    Kmh,
    #[serde(rename = "ms")]
    Ms,
}

/// Physical inputs of one scenario plus the derived rate quantities.
///
/// Construction validates every field; the value is immutable afterwards, so
/// it can be shared freely across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    name: String,
    segment_length_m: f64,
    speed_ms: f64,
    max_vehicles: u32,
    p_fail: f64,
    comm_range_m: f64,
    refresh_period_s: f64,
}

impl ScenarioParams {
    pub fn new(
        name: impl Into<String>,
        segment_length_m: f64,
        speed_ms: f64,
        max_vehicles: u32,
        p_fail: f64,
        comm_range_m: f64,
        refresh_period_s: f64,
    ) -> Result<Self> {
        if !segment_length_m.is_finite() || segment_length_m <= 0.0 {
            return Err(Error::config("length_m", "must be positive"));
        }
        if !speed_ms.is_finite() || speed_ms <= 0.0 {
            return Err(Error::config("speed", "must be positive"));
        }
        if max_vehicles < 1 {
            return Err(Error::config("n_vehicles", "must be at least 1"));
        }
        if !p_fail.is_finite() || !(0.0..=1.0).contains(&p_fail) {
            return Err(Error::config("p_fail", "must lie in [0, 1]"));
        }
        if !comm_range_m.is_finite() || comm_range_m <= 0.0 {
            return Err(Error::config("comm_range_m", "must be positive"));
        }
        if !refresh_period_s.is_finite() || refresh_period_s <= 0.0 {
            return Err(Error::config("refresh_s", "must be positive"));
        }
        Ok(Self {
            name: name.into(),
            segment_length_m,
            speed_ms,
            max_vehicles,
            p_fail,
            comm_range_m,
            refresh_period_s,
        })
    }

    /// Same physical scenario with a different vehicle population; the
    /// population-dependent rates are re-derived.
    pub fn with_max_vehicles(&self, max_vehicles: u32) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.segment_length_m,
            self.speed_ms,
            max_vehicles,
            self.p_fail,
            self.comm_range_m,
            self.refresh_period_s,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn segment_length_m(&self) -> f64 {
        self.segment_length_m
    }

    pub fn speed_ms(&self) -> f64 {
        self.speed_ms
    }

    pub fn max_vehicles(&self) -> u32 {
        self.max_vehicles
    }

    pub fn p_fail(&self) -> f64 {
        self.p_fail
    }

    pub fn comm_range_m(&self) -> f64 {
        self.comm_range_m
    }

    pub fn refresh_period_s(&self) -> f64 {
        self.refresh_period_s
    }

    /// Mean time a vehicle spends inside the segment: `L / v`.
    pub fn sojourn_time_s(&self) -> f64 {
        self.segment_length_m / self.speed_ms
    }

    /// Per-vehicle departure rate `μ = v / L`.
    pub fn departure_rate(&self) -> f64 {
        self.speed_ms / self.segment_length_m
    }

    /// Segment arrival rate `λ = n·μ` (Little's law at nominal population).
    pub fn arrival_rate(&self) -> f64 {
        f64::from(self.max_vehicles) * self.departure_rate()
    }

    /// Average vehicles inside one coverage area, `P·n / L`. May exceed `n`
    /// when the range is wider than the segment; downstream delivery counts
    /// are capped by the actual number of uncovered occupants.
    pub fn n_ave(&self) -> f64 {
        self.comm_range_m * f64::from(self.max_vehicles) / self.segment_length_m
    }

    /// Mixture weight on the lower integer neighbour of `n_ave`:
    /// `p₁ = ⌈n_ave⌉ − n_ave`, zero when `n_ave` is an integer.
    pub fn p1(&self) -> f64 {
        self.n_ave().ceil() - self.n_ave()
    }
}

/// How many occupants the segment holds at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialOccupancy {
    Fixed(u32),
    /// Draw `j` from the stationary occupancy law (truncated Poisson),
    /// conditioned on `j ≥ initial_i`.
    Stationary,
}

/// Model-variant switches and the initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelOptions {
    /// Whether rebroadcast happens even from states with no holder. The
    /// delivery rate formula does not condition on `i > 0`, and a nonzero
    /// stationary consistency needs a source that keeps transmitting; set
    /// this to false to model a purely vehicular source whose record can
    /// go extinct.
    pub source_always_transmits: bool,
    /// Holders at time zero.
    pub initial_i: u32,
    /// Occupants at time zero.
    pub initial_j: InitialOccupancy,
}

impl ModelOptions {
    /// Defaults: persistent source, one holder, segment at nominal
    /// population.
    pub fn defaults_for(max_vehicles: u32) -> Self {
        Self {
            source_always_transmits: true,
            initial_i: 1,
            initial_j: InitialOccupancy::Fixed(max_vehicles),
        }
    }

    /// Clamp the initial condition into the state space of a smaller
    /// population (used by sweeps that re-instantiate `n`).
    pub fn clamped_to(&self, max_vehicles: u32) -> Self {
        Self {
            source_always_transmits: self.source_always_transmits,
            initial_i: self.initial_i.min(max_vehicles),
            initial_j: match self.initial_j {
                InitialOccupancy::Fixed(j) => InitialOccupancy::Fixed(j.min(max_vehicles)),
                InitialOccupancy::Stationary => InitialOccupancy::Stationary,
            },
        }
    }

    fn validate(&self, max_vehicles: u32) -> Result<()> {
        if let InitialOccupancy::Fixed(j) = self.initial_j {
            if j > max_vehicles {
                return Err(Error::config("initial_j", "must not exceed n_vehicles"));
            }
            if self.initial_i > j {
                return Err(Error::config("initial_i", "must not exceed initial_j"));
            }
        } else if self.initial_i > max_vehicles {
            return Err(Error::config("initial_i", "must not exceed n_vehicles"));
        }
        Ok(())
    }
}

/// A validated scenario: parameters plus model options.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub options: ModelOptions,
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_value(value)?;
        Self::from_file(file)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let file = ScenarioFile {
            name: self.params.name().to_string(),
            length_m: self.params.segment_length_m(),
            speed: SpeedField {
                value: self.params.speed_ms(),
                unit: SpeedUnit::Ms,
            },
            n_vehicles: self.params.max_vehicles(),
            p_fail: self.params.p_fail(),
            comm_range_m: self.params.comm_range_m(),
            refresh_s: self.params.refresh_period_s(),
            options: Some(OptionsFile {
                source_always_transmits: self.options.source_always_transmits,
                initial_i: self.options.initial_i,
                initial_j: Some(match self.options.initial_j {
                    InitialOccupancy::Fixed(j) => InitialJField::Fixed(j),
                    InitialOccupancy::Stationary => InitialJField::Marker("stationary".into()),
                }),
            }),
        };
        serde_json::to_string_pretty(&file).expect("scenario serialization cannot fail")
    }

    /// Non-fatal oddities worth surfacing to the user.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.options.source_always_transmits && self.options.initial_i == 0 {
            out.push(
                "source_always_transmits is false and initial_i is 0: the record can never \
                 appear, so consistency stays 0 for every target"
                    .to_string(),
            );
        }
        if self.params.p_fail() >= 1.0 {
            out.push("p_fail is 1: every transmission fails, no dissemination".to_string());
        }
        out
    }

    fn from_file(file: ScenarioFile) -> Result<Self> {
        let speed_ms = match file.speed.unit {
            SpeedUnit::Ms => file.speed.value,
            SpeedUnit::Kmh => file.speed.value / 3.6,
        };
        let params = ScenarioParams::new(
            file.name,
            file.length_m,
            speed_ms,
            file.n_vehicles,
            file.p_fail,
            file.comm_range_m,
            file.refresh_s,
        )?;
        let options = match file.options {
            None => ModelOptions::defaults_for(params.max_vehicles()),
            Some(opt) => {
                let initial_j = match opt.initial_j {
                    None => InitialOccupancy::Fixed(params.max_vehicles()),
                    Some(InitialJField::Fixed(j)) => InitialOccupancy::Fixed(j),
                    Some(InitialJField::Marker(m)) if m == "stationary" => {
                        InitialOccupancy::Stationary
                    }
                    Some(InitialJField::Marker(m)) => {
                        return Err(Error::config(
                            "initial_j",
                            format!("must be a count or \"stationary\", got \"{m}\""),
                        ));
                    }
                };
                ModelOptions {
                    source_always_transmits: opt.source_always_transmits,
                    initial_i: opt.initial_i,
                    initial_j,
                }
            }
        };
        options.validate(params.max_vehicles())?;
        Ok(Self { params, options })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpeedField {
    value: f64,
    unit: SpeedUnit,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum InitialJField {
    Fixed(u32),
    Marker(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsFile {
    #[serde(default = "default_true")]
    source_always_transmits: bool,
    #[serde(default = "default_one")]
    initial_i: u32,
    #[serde(default)]
    initial_j: Option<InitialJField>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    length_m: f64,
    speed: SpeedField,
    n_vehicles: u32,
    p_fail: f64,
    comm_range_m: f64,
    refresh_s: f64,
    #[serde(default)]
    options: Option<OptionsFile>,
}

fn default_true() -> bool {
    true
}

fn default_one() -> u32 {
    1
}
