//! Run configuration and output-file schemas.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, WeightVector};
use crate::error::{Error, Result};
use crate::optimizer::{generate_weight_grid, OptimizerSettings, WeightingScheme, ARCHIVE_COLUMNS, HV_COLUMNS};
use crate::sim::{SimConfig, CSV_COLUMNS};
use crate::track::{track_from_text, Track, TrackSpec};
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproachSetting {
    /// one single-objective optimization per weighting
    Weighted,
    /// one multi-objective optimization
    Pareto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub approach: ApproachSetting,
    /// evaluations per weighting, including the initial design
    pub budget_per_weight: usize,
    /// evaluations of the multi-objective run, including the initial design
    pub budget: usize,
    /// simplex lattice spacing of the weightings
    pub grid_step: f64,
    /// explicit weightings; replaces the lattice when present
    pub weightings: Option<Vec<[f64; 3]>>,
    /// hand-tuned weights used as first sample and normalization baseline
    pub expert: WeightVector,
    pub bo: OptimizerSettings,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            approach: ApproachSetting::Pareto,
            budget_per_weight: 30,
            budget: 150,
            grid_step: 0.5,
            weightings: None,
            expert: WeightVector::default(),
            bo: OptimizerSettings::default(),
        }
    }
}

impl TuningConfig {
    pub fn weightings(&self) -> Result<Vec<WeightingScheme>> {
        match &self.weightings {
            Some(list) => list.iter().map(|w| WeightingScheme::new(*w)).collect(),
            None => generate_weight_grid(self.grid_step),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bo.validate()?;
        let n0 = self.bo.n0;
        if self.budget < n0 || self.budget_per_weight < n0 {
            return Err(Error::InvalidArgument(format!("budgets must be at least n0 = {n0}")));
        }
        if self.weightings()?.is_empty() {
            return Err(Error::InvalidArgument("no weightings".into()));
        }
        self.expert.validate()?;
        if !self.bo.weight_box.contains(&self.expert) {
            return Err(Error::InvalidArgument("expert weights lie outside the weight box".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// track description file in the line-oriented text format
    pub track_file: Option<PathBuf>,
    /// inline track; the default loop when neither this nor `track_file` is set
    pub track: Option<TrackSpec>,
    pub output_dir: PathBuf,
    pub vehicle: VehicleParams,
    pub controller: ControllerConfig,
    pub simulation: SimConfig,
    pub tuning: TuningConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            track_file: None,
            track: None,
            output_dir: PathBuf::from("mpfc-tune-out"),
            vehicle: VehicleParams::default(),
            controller: ControllerConfig::default(),
            simulation: SimConfig::default(),
            tuning: TuningConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; a relative `track_file` is resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(f) = cfg.track_file.as_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn track_spec(&self) -> Result<TrackSpec> {
        match (&self.track_file, &self.track) {
            (Some(_), Some(_)) => Err(Error::InvalidArgument("set either track_file or track, not both".into())),
            (Some(f), None) => {
                let text = std::fs::read_to_string(f)
                    .map_err(|e| Error::InvalidArgument(format!("track file {}: {e}", f.display())))?;
                track_from_text(&text)
            }
            (None, Some(spec)) => Ok(spec.clone()),
            (None, None) => Ok(Track::default_loop().spec().clone()),
        }
    }

    pub fn build_track(&self) -> Result<Track> {
        Track::new(self.track_spec()?)
    }

    /// Checks every section and builds the track.
    pub fn validate(&self) -> Result<Track> {
        self.vehicle.validate()?;
        self.controller.validate()?;
        self.simulation.validate()?;
        self.tuning.validate()?;
        self.build_track()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileSchema {
    pub format: &'static str,
    pub description: &'static str,
    pub columns: Vec<&'static str>,
}

/// Description of every file the command-line tool writes.
pub fn output_schema() -> BTreeMap<&'static str, FileSchema> {
    let mut m = BTreeMap::new();
    m.insert(
        "lap.csv",
        FileSchema {
            format: "csv",
            description: "one row per controller step; SI units, angles in rad, jerk in m/s^3",
            columns: CSV_COLUMNS.to_vec(),
        },
    );
    m.insert(
        "objectives.json",
        FileSchema {
            format: "json",
            description: "objective triple of the simulated lap; g is +1 when feasible",
            columns: vec!["e_lat", "e_jerk", "e_v", "g"],
        },
    );
    m.insert(
        "ledger.jsonl",
        FileSchema {
            format: "json-lines",
            description: "one evaluation record per line in evaluation order; times in s",
            columns: vec![
                "index", "approach", "instance", "weighting", "iteration", "initial", "weights", "unit",
                "objectives", "sim_time", "overhead_time",
            ],
        },
    );
    m.insert(
        "archive.json",
        FileSchema {
            format: "json",
            description: "nondominated feasible records with run totals",
            columns: vec!["evaluations", "run_time", "baseline", "archive"],
        },
    );
    m.insert(
        "archive.csv",
        FileSchema {
            format: "csv",
            description: "nondominated feasible records; u_* are unit-cube coordinates",
            columns: ARCHIVE_COLUMNS.to_vec(),
        },
    );
    m.insert(
        "hv_curve.csv",
        FileSchema {
            format: "csv",
            description: "hypervolume of the running archive on expert-normalized objectives",
            columns: HV_COLUMNS.to_vec(),
        },
    );
    m.insert(
        "compare.csv",
        FileSchema {
            format: "csv",
            description: "members of every compared archive, normalized by the baseline",
            columns: vec!["archive", "index", "e_jerk", "e_v", "e_lat"],
        },
    );
    m.insert(
        "track.csv",
        FileSchema {
            format: "csv",
            description: "sampled reference path with lane boundaries",
            columns: TRACK_COLUMNS.to_vec(),
        },
    );
    m
}

pub const TRACK_COLUMNS: [&str; 10] =
    ["s", "x", "y", "psi", "kappa", "v_lim", "x_left", "y_left", "x_right", "y_right"];

/// Writes `config.toml` (all defaults filled in) and `schema.json` to `dir`.
pub fn materialize(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    std::fs::write(dir.join("schema.json"), serde_json::to_string_pretty(&output_schema())?)?;
    Ok(())
}
