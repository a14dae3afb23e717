//! Architecture (`.camarch`) and technology (`.camtech`) descriptions.
//!
//! Both are TOML. An architecture file has a mandatory `[hierarchy]` table,
//! an optional `[tech]` table (falling back to the file named by
//! `CAMFORGE_TECH`, then to built-in defaults) and an optional
//! `[optimization]` table.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TECH_ENV: &str = "CAMFORGE_TECH";

#[derive(Debug, Error)]
pub enum ArchError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ArchError> {
    Err(ArchError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptTarget {
    #[default]
    Latency,
    Power,
    Utilization,
}

/// Mapping optimization applied by `cam-map`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMode {
    Base,
    /// At most `max_active` subarrays per array searched per step.
    Power { max_active: u32 },
    /// Pack several column tiles into one subarray via selective search.
    Density,
    PowerDensity { max_active: u32 },
}

impl OptMode {
    pub fn parse(s: &str, max_active: Option<u32>) -> Result<OptMode, String> {
        let ma = max_active.unwrap_or(1);
        if ma == 0 {
            return Err("max_active must be >= 1".into());
        }
        match s {
            "base" => Ok(OptMode::Base),
            "power" => Ok(OptMode::Power { max_active: ma }),
            "density" => Ok(OptMode::Density),
            "power_density" | "power+density" => Ok(OptMode::PowerDensity { max_active: ma }),
            _ => Err(format!("unknown optimization mode '{s}'")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptMode::Base => "base",
            OptMode::Power { .. } => "power",
            OptMode::Density => "density",
            OptMode::PowerDensity { .. } => "power_density",
        }
    }

    pub fn packs(self) -> bool {
        matches!(self, OptMode::Density | OptMode::PowerDensity { .. })
    }

    pub fn max_active(self) -> Option<u32> {
        match self {
            OptMode::Power { max_active } | OptMode::PowerDensity { max_active } => Some(max_active),
            _ => None,
        }
    }
}

impl fmt::Display for OptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub rows: u32,
    pub cols: u32,
    pub ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeripheralEnergy {
    pub subarray: f64,
    pub array: f64,
    pub mat: f64,
    pub bank: f64,
}

impl Default for PeripheralEnergy {
    fn default() -> Self {
        PeripheralEnergy {
            subarray: 10.0,
            array: 20.0,
            mat: 40.0,
            bank: 80.0,
        }
    }
}

/// Technology constants. The energy defaults are placeholders chosen to
/// show qualitative trends, not measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TechParams {
    /// Search latency table; sizes not listed interpolate linearly in the
    /// column count between the nearest entries.
    pub search_latency: Vec<LatencyPoint>,
    pub search_energy_pj_per_cell: f64,
    pub write_latency_ns: f64,
    pub write_energy_pj_per_cell: f64,
    pub peripheral_energy_pj: PeripheralEnergy,
    /// Cell search-energy multiplier for multi-bit and analog cells.
    pub ml_voltage_scale: f64,
}

impl Default for TechParams {
    fn default() -> Self {
        TechParams {
            search_latency: vec![
                LatencyPoint { rows: 16, cols: 16, ns: 0.86 },
                LatencyPoint { rows: 256, cols: 256, ns: 7.5 },
            ],
            search_energy_pj_per_cell: 0.1,
            write_latency_ns: 2.0,
            write_energy_pj_per_cell: 0.5,
            peripheral_energy_pj: PeripheralEnergy::default(),
            ml_voltage_scale: 1.5,
        }
    }
}

impl TechParams {
    pub fn validate(&self) -> Result<(), ArchError> {
        if self.search_latency.is_empty() {
            return invalid("search_latency needs at least one entry");
        }
        for p in &self.search_latency {
            if p.rows == 0 || p.cols == 0 || p.ns.is_nan() || p.ns <= 0.0 {
                return invalid(format!(
                    "search_latency entry ({}, {}) = {} must be positive",
                    p.rows, p.cols, p.ns
                ));
            }
        }
        let pe = &self.peripheral_energy_pj;
        let positive = [
            ("search_energy_pj_per_cell", self.search_energy_pj_per_cell),
            ("write_latency_ns", self.write_latency_ns),
            ("write_energy_pj_per_cell", self.write_energy_pj_per_cell),
            ("peripheral_energy_pj.subarray", pe.subarray),
            ("peripheral_energy_pj.array", pe.array),
            ("peripheral_energy_pj.mat", pe.mat),
            ("peripheral_energy_pj.bank", pe.bank),
        ];
        for (k, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return invalid(format!("{k} must be positive, got {v}"));
            }
        }
        if self.ml_voltage_scale.is_nan() || self.ml_voltage_scale < 1.0 {
            return invalid("ml_voltage_scale must be >= 1");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TechParams, ArchError> {
        let text = read(path)?;
        let tp: TechParams = toml::from_str(&text).map_err(|e| ArchError::Parse(e.to_string()))?;
        tp.validate()?;
        Ok(tp)
    }

    /// Defaults, or the file named by `CAMFORGE_TECH` when set.
    pub fn from_env() -> Result<TechParams, ArchError> {
        match std::env::var_os(TECH_ENV) {
            Some(p) if !p.is_empty() => TechParams::load(Path::new(&p)),
            _ => Ok(TechParams::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("tech params serialize")
    }
}

/// Search latency of one `rows x cols` subarray in nanoseconds.
pub fn search_latency(tp: &TechParams, rows: u32, cols: u32) -> Result<f64, ArchError> {
    if !(16..=256).contains(&cols) {
        return invalid(format!("column count {cols} outside [16, 256]"));
    }
    if let Some(p) = tp.search_latency.iter().find(|p| p.rows == rows && p.cols == cols) {
        return Ok(p.ns);
    }
    let below = tp
        .search_latency
        .iter()
        .filter(|p| p.cols <= cols)
        .max_by_key(|p| p.cols);
    let above = tp
        .search_latency
        .iter()
        .filter(|p| p.cols >= cols)
        .min_by_key(|p| p.cols);
    Ok(match (below, above) {
        (Some(a), Some(b)) if a.cols == b.cols => a.ns,
        (Some(a), Some(b)) => {
            a.ns + (b.ns - a.ns) * f64::from(cols - a.cols) / f64::from(b.cols - a.cols)
        }
        (Some(a), None) => a.ns,
        (None, Some(b)) => b.ns,
        (None, None) => unreachable!("validated table is non-empty"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hierarchy {
    /// `None` allocates as many banks as the data needs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub banks: Option<u32>,
    #[serde(default = "four")]
    pub mats_per_bank: u32,
    #[serde(default = "four")]
    pub arrays_per_mat: u32,
    #[serde(default = "eight")]
    pub subarrays_per_array: u32,
    pub subarray_rows: u32,
    pub subarray_cols: u32,
    #[serde(default)]
    pub selective_search: bool,
    #[serde(default)]
    pub bank_access: AccessMode,
    #[serde(default)]
    pub mat_access: AccessMode,
    #[serde(default)]
    pub array_access: AccessMode,
    #[serde(default)]
    pub subarray_access: AccessMode,
}

fn four() -> u32 {
    4
}

fn eight() -> u32 {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Optimization {
    #[serde(default)]
    pub target: OptTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_active: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchFile {
    hierarchy: Hierarchy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tech: Option<TechParams>,
    #[serde(default)]
    optimization: Optimization,
}

/// Validated accelerator description.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub hierarchy: Hierarchy,
    pub tech: TechParams,
    pub optimization: Optimization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacity {
    pub subarrays: u64,
    pub cells: u64,
}

impl ArchSpec {
    /// Default hierarchy (4 mats, 4 arrays, 8 subarrays) with the
    /// given subarray geometry and automatic bank count.
    pub fn with_subarray(rows: u32, cols: u32) -> ArchSpec {
        ArchSpec {
            hierarchy: Hierarchy {
                banks: None,
                mats_per_bank: 4,
                arrays_per_mat: 4,
                subarrays_per_array: 8,
                subarray_rows: rows,
                subarray_cols: cols,
                selective_search: true,
                bank_access: AccessMode::Parallel,
                mat_access: AccessMode::Parallel,
                array_access: AccessMode::Parallel,
                subarray_access: AccessMode::Parallel,
            },
            tech: TechParams::default(),
            optimization: Optimization::default(),
        }
    }

    pub fn rows(&self) -> u32 {
        self.hierarchy.subarray_rows
    }

    pub fn cols(&self) -> u32 {
        self.hierarchy.subarray_cols
    }

    /// Subarrays in one bank.
    pub fn subarrays_per_bank(&self) -> u64 {
        let h = &self.hierarchy;
        u64::from(h.mats_per_bank) * u64::from(h.arrays_per_mat) * u64::from(h.subarrays_per_array)
    }

    /// Total subarrays and cells; with an automatic bank count this is the
    /// capacity of a single bank.
    pub fn capacity(&self) -> Capacity {
        let subarrays = u64::from(self.hierarchy.banks.unwrap_or(1)) * self.subarrays_per_bank();
        Capacity {
            subarrays,
            cells: subarrays * u64::from(self.rows()) * u64::from(self.cols()),
        }
    }

    pub fn cells_per_array(&self) -> u64 {
        u64::from(self.hierarchy.subarrays_per_array) * u64::from(self.rows()) * u64::from(self.cols())
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        let h = &self.hierarchy;
        if h.banks == Some(0) {
            return invalid("banks must be >= 1");
        }
        for (k, v) in [
            ("mats_per_bank", h.mats_per_bank),
            ("arrays_per_mat", h.arrays_per_mat),
            ("subarrays_per_array", h.subarrays_per_array),
        ] {
            if v == 0 {
                return invalid(format!("{k} must be >= 1"));
            }
        }
        for (k, v) in [("subarray_rows", h.subarray_rows), ("subarray_cols", h.subarray_cols)] {
            if !(16..=256).contains(&v) || !v.is_power_of_two() {
                return invalid(format!("{k} must be a power of two in [16, 256], got {v}"));
            }
        }
        self.tech.validate()?;
        if self.optimization.max_active == Some(0) {
            return invalid("max_active must be >= 1");
        }
        if let Some(m) = &self.optimization.mode {
            let mode = OptMode::parse(m, self.optimization.max_active).map_err(ArchError::Invalid)?;
            self.check_mode(mode)?;
        }
        Ok(())
    }

    /// Reject modes the hardware cannot run.
    pub fn check_mode(&self, mode: OptMode) -> Result<(), ArchError> {
        if mode.packs() && !self.hierarchy.selective_search {
            return invalid(format!("{mode} mode requires selective_search = true"));
        }
        Ok(())
    }

    /// Mode from the `[optimization]` table, or derived from its target.
    pub fn default_mode(&self, max_active: Option<u32>) -> OptMode {
        let ma = max_active.or(self.optimization.max_active);
        if let Some(m) = &self.optimization.mode {
            if let Ok(mode) = OptMode::parse(m, ma) {
                return mode;
            }
        }
        match self.optimization.target {
            OptTarget::Latency => OptMode::Base,
            OptTarget::Power => OptMode::Power {
                max_active: ma.unwrap_or(1),
            },
            OptTarget::Utilization if self.hierarchy.selective_search => OptMode::Density,
            OptTarget::Utilization => OptMode::Base,
        }
    }

    pub fn search_latency_ns(&self) -> f64 {
        search_latency(&self.tech, self.rows(), self.cols())
            .expect("validated geometry lies in the latency range")
    }

    pub fn from_toml(text: &str) -> Result<ArchSpec, ArchError> {
        let file: ArchFile = toml::from_str(text).map_err(|e| ArchError::Parse(e.to_string()))?;
        let tech = match file.tech {
            Some(t) => t,
            None => TechParams::from_env()?,
        };
        let spec = ArchSpec {
            hierarchy: file.hierarchy,
            tech,
            optimization: file.optimization,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Serialized form; the technology table is always written out so the
    /// file is self-contained.
    pub fn to_toml(&self) -> String {
        let file = ArchFile {
            hierarchy: self.hierarchy,
            tech: Some(self.tech.clone()),
            optimization: self.optimization.clone(),
        };
        toml::to_string(&file).expect("architecture serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchError> {
        std::fs::write(path, self.to_toml()).map_err(|source| ArchError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn load_arch_spec(path: &Path) -> Result<ArchSpec, ArchError> {
    ArchSpec::from_toml(&read(path)?)
}

fn read(path: &Path) -> Result<String, ArchError> {
    std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ArchError::NotFound(path.display().to_string())
        } else {
            ArchError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    })
}
