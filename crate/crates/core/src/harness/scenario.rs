use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::filter::{FilterConfig, ParticleState, Prior};
use crate::geometry::Pose2D;
use crate::map::{build_map, load_map, track, Centerline, MapBuildParams, PatchSpec, SchematicMap};
use crate::mppi::{CostWeights, MppiConfig};
use crate::rng::{derive_seed, SimRng};
use crate::sensor::{
    calibrate_degradation, CalibrationSpec, DegradationParams, ExternalSource, ReplaySource, SensorSource,
    SyntheticSource,
};
use crate::sim::{SensorNoiseParams, VehicleParams};

pub const SCENARIO_VERSION: u32 = 1;

/// Full description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub map: MapSource,
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub mppi: MppiConfig,
    #[serde(default)]
    pub cost: CostWeights,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub noise: SensorNoiseParams,
    #[serde(default)]
    pub run: RunSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            version: SCENARIO_VERSION,
            seed: 0,
            map: MapSource::default(),
            sensor: SensorSpec::default(),
            filter: FilterConfig::default(),
            init: InitSpec::default(),
            mppi: MppiConfig::default(),
            cost: CostWeights::default(),
            vehicle: VehicleParams::default(),
            noise: SensorNoiseParams::default(),
            run: RunSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    /// The built-in test track.
    Synthetic {
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        build: MapBuildParams,
    },
    /// A surveyed centerline text file.
    Centerline {
        path: PathBuf,
        #[serde(default = "default_true")]
        closed: bool,
        #[serde(default)]
        build: MapBuildParams,
    },
    /// A prebuilt map file; lap counting needs the matching centerline.
    File { path: PathBuf, centerline: Option<PathBuf> },
}

fn default_scale() -> f64 {
    track::DEFAULT_SCALE
}

fn default_true() -> bool {
    true
}

impl Default for MapSource {
    fn default() -> Self {
        MapSource::Synthetic { scale: default_scale(), build: MapBuildParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensorSpec {
    Synthetic {
        #[serde(default = "default_frame_rate")]
        rate: f64,
        #[serde(default)]
        degradation: DegradationParams,
    },
    /// Frames from a recorded run log.
    Replay { path: PathBuf },
    /// Frames streamed by a predictor process over TCP.
    External { address: String },
    Disabled,
}

fn default_frame_rate() -> f64 {
    20.0
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec::Synthetic { rate: default_frame_rate(), degradation: DegradationParams::default() }
    }
}

/// Filter initialization. Known-pose priors are centered on the true start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    KnownPose {
        #[serde(default = "default_init_std")]
        std: [f64; 5],
    },
    UniformOnTrack,
}

fn default_init_std() -> [f64; 5] {
    [0.1, 0.1, 0.02, 0.1, 0.05]
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::KnownPose { std: default_init_std() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMode {
    /// The planner uses the particle filter's estimate on the schematic map.
    #[default]
    Filter,
    /// The planner works directly on each sensor frame; no map, no filter.
    Mapless,
    /// The planner sees the true state on the map (filter still runs).
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub mode: DriveMode,
    /// Stop after this many laps; zero runs until `max_duration`.
    pub laps: u32,
    pub max_duration: f64,
    pub plant_rate: f64,
    pub imu_rate: f64,
    pub wheel_rate: f64,
    pub plan_rate: f64,
    /// Continuous time on cost-one ground that counts as a crash (s).
    pub crash_time: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            mode: DriveMode::Filter,
            laps: 3,
            max_duration: 120.0,
            plant_rate: 1000.0,
            imu_rate: 200.0,
            wheel_rate: 20.0,
            plan_rate: 20.0,
            crash_time: 0.5,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::config("<document>", e.to_string()))?;
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            HarnessError::config(field, e.into_inner().message().to_string())
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut sc = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            sc.resolve_paths(dir);
        }
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml_string().as_bytes()).into()
    }

    /// Makes relative file references relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match &mut self.map {
            MapSource::Centerline { path, .. } => fix(path),
            MapSource::File { path, centerline } => {
                fix(path);
                if let Some(c) = centerline {
                    fix(c);
                }
            }
            MapSource::Synthetic { .. } => {}
        }
        if let SensorSpec::Replay { path } = &mut self.sensor {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.version != SCENARIO_VERSION {
            return Err(HarnessError::config("version", format!("unsupported version {}", self.version)));
        }
        self.filter.validate().map_err(|e| HarnessError::config("filter", e.to_string()))?;
        self.mppi.validate().map_err(|e| HarnessError::config("mppi", e))?;
        self.cost.validate().map_err(|e| HarnessError::config("cost", e))?;
        self.vehicle.validate().map_err(|e| HarnessError::config("vehicle", e))?;
        self.noise.validate().map_err(|e| HarnessError::config("noise", e))?;
        if let SensorSpec::Synthetic { rate, degradation } = &self.sensor {
            if !(rate.is_finite() && *rate > 0.0) {
                return Err(HarnessError::config("sensor.rate", "must be positive"));
            }
            degradation.validate().map_err(|e| HarnessError::config("sensor.degradation", e.to_string()))?;
        }
        if let MapSource::Synthetic { scale, .. } = self.map {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(HarnessError::config("map.scale", "must be positive"));
            }
        }
        let r = &self.run;
        for (name, v) in [
            ("run.plant_rate", r.plant_rate),
            ("run.imu_rate", r.imu_rate),
            ("run.wheel_rate", r.wheel_rate),
            ("run.plan_rate", r.plan_rate),
            ("run.max_duration", r.max_duration),
            ("run.crash_time", r.crash_time),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarnessError::config(name, format!("must be positive, got {v}")));
            }
        }
        if r.plant_rate < 100.0 {
            return Err(HarnessError::config("run.plant_rate", "plant must run at 100 Hz or faster"));
        }
        for (name, v) in [("run.imu_rate", r.imu_rate), ("run.wheel_rate", r.wheel_rate), ("run.plan_rate", r.plan_rate)] {
            let ratio = r.plant_rate / v;
            if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
                return Err(HarnessError::config(name, "must divide the plant rate"));
            }
        }
        if (r.imu_rate - self.filter.propagate_rate).abs() > 1e-9 {
            return Err(HarnessError::config("run.imu_rate", "must equal filter.propagate_rate"));
        }
        if r.plan_rate > r.imu_rate {
            return Err(HarnessError::config("run.plan_rate", "must not exceed the IMU rate"));
        }
        Ok(())
    }

    /// Loads the map and track geometry, calibrates the sensor if requested
    /// and opens the frame source.
    pub fn prepare(&self) -> Result<PreparedScenario, HarnessError> {
        let (map, centerline) = match &self.map {
            MapSource::Synthetic { scale, build } => {
                let cl = track::synthetic_track_scaled(*scale);
                let map = build_map(&cl, build).map_err(|e| HarnessError::config("map.build", e.to_string()))?;
                (map, Some(cl))
            }
            MapSource::Centerline { path, closed, build } => {
                let cl = Centerline::load(path, *closed).map_err(|e| map_err("map.path", path, e))?;
                let map = build_map(&cl, build).map_err(|e| HarnessError::config("map.build", e.to_string()))?;
                (map, Some(cl))
            }
            MapSource::File { path, centerline } => {
                let map = load_map(path).map_err(|e| map_err("map.path", path, e))?;
                let cl = match centerline {
                    Some(p) => Some(Centerline::load(p, true).map_err(|e| map_err("map.centerline", p, e))?),
                    None => None,
                };
                (map, cl)
            }
        };
        if self.run.laps > 0 && centerline.is_none() {
            return Err(HarnessError::config("map.centerline", "lap termination needs a centerline"));
        }
        let map = Arc::new(map);
        let start = match &centerline {
            Some(cl) => {
                let (p, heading) = cl.point_at(0.0);
                Pose2D::new(p[0], p[1], heading)
            }
            None => Pose2D::new(0.0, 0.0, 0.0),
        };
        let degradation = match &self.sensor {
            SensorSpec::Synthetic { degradation, .. } => {
                Some(self.calibrated(&map, centerline.as_ref(), degradation)?)
            }
            _ => None,
        };
        Ok(PreparedScenario { scenario: self.clone(), map, centerline, start, degradation })
    }

    fn calibrated(
        &self,
        map: &SchematicMap,
        centerline: Option<&Centerline>,
        base: &DegradationParams,
    ) -> Result<DegradationParams, HarnessError> {
        let Some(target) = base.target_accuracy else { return Ok(*base) };
        let Some(cl) = centerline else {
            return Err(HarnessError::config("sensor.degradation.target_accuracy", "calibration needs a centerline"));
        };
        let n = 100;
        let poses: Vec<Pose2D> = (0..n)
            .map(|k| {
                let (p, h) = cl.point_at(cl.length() * k as f64 / n as f64);
                Pose2D::new(p[0], p[1], h)
            })
            .collect();
        let cal = CalibrationSpec { seed: derive_seed(self.seed, "calibration"), ..Default::default() };
        calibrate_degradation(map, &poses, &self.frame_spec(), target, base, &cal)
            .map_err(|e| HarnessError::config("sensor.degradation.target_accuracy", e.to_string()))
    }

    /// Geometry of synthesized frames: the wide patch when planning directly
    /// on frames, the standard sensor frame otherwise.
    pub fn frame_spec(&self) -> PatchSpec {
        match self.run.mode {
            DriveMode::Mapless => PatchSpec::WIDE,
            _ => PatchSpec::SENSOR,
        }
    }
}

fn map_err(field: &str, path: &Path, e: crate::map::MapError) -> HarnessError {
    match e {
        crate::map::MapError::Io(source) => HarnessError::Config {
            field: field.to_string(),
            message: format!("{}: {source}", path.display()),
        },
        other => HarnessError::config(field, format!("{}: {other}", path.display())),
    }
}

/// A scenario with its inputs loaded.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub scenario: Scenario,
    pub map: Arc<SchematicMap>,
    pub centerline: Option<Centerline>,
    /// Start pose of the vehicle.
    pub start: Pose2D,
    /// Synthetic-sensor degradation after calibration.
    pub degradation: Option<DegradationParams>,
}

impl PreparedScenario {
    pub fn prior(&self, start_speed: f64) -> Prior {
        match self.scenario.init {
            InitSpec::KnownPose { std } => Prior::KnownPose {
                mean: ParticleState { p_x: self.start.p_x, p_y: self.start.p_y, psi: self.start.psi, v_x: start_speed, v_y: 0.0 },
                std,
            },
            InitSpec::UniformOnTrack => Prior::UniformOnTrack,
        }
    }

    pub fn open_sensor(&self) -> Result<SensorSource, HarnessError> {
        let sc = &self.scenario;
        Ok(match &sc.sensor {
            SensorSpec::Synthetic { rate, .. } => {
                let rng = SimRng::seed_from_u64(derive_seed(sc.seed, "sensor"));
                let params = self.degradation.unwrap_or_default();
                let src = SyntheticSource::new(self.map.clone(), sc.frame_spec(), params, *rate, 0.0, rng)
                    .map_err(|e| HarnessError::config("sensor", e.to_string()))?;
                SensorSource::Synthetic(src)
            }
            SensorSpec::Replay { path } => {
                let log = super::RunLog::load(path)?;
                SensorSource::Replay(ReplaySource::new(log.frames().cloned().collect::<Vec<_>>()))
            }
            SensorSpec::External { address } => SensorSource::External(
                ExternalSource::connect(address.as_str())
                    .map_err(|e| HarnessError::config("sensor.address", e.to_string()))?,
            ),
            SensorSpec::Disabled => SensorSource::Disabled,
        })
    }
}
