//! CAM-specific abstraction: lowering from `cim` to alloc/write/search/read
//! calls and mapping onto a concrete hierarchy.

mod emit;
mod kernel;
mod lower;
mod map;
mod placement;

use std::fmt;

use thiserror::Error;

pub use crate::arch::OptMode;
pub use kernel::CamKernel;
pub use lower::lower_cim_to_cam;
pub use map::cam_map;
pub use placement::{placement_plan, PlacementPlan, TileAssignment};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct CamError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Device {
    /// Ternary cells: 0, 1 or don't-care.
    Tcam,
    /// Multi-bit integer cells.
    Mcam,
    /// Analog range cells `[lo, hi]`.
    Acam,
}

impl Device {
    pub fn parse(s: &str) -> Option<Device> {
        match s {
            "tcam" => Some(Device::Tcam),
            "mcam" => Some(Device::Mcam),
            "acam" => Some(Device::Acam),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Device::Tcam => "tcam",
            Device::Mcam => "mcam",
            Device::Acam => "acam",
        }
    }

    pub fn multi_bit(self) -> bool {
        self != Device::Tcam
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchType {
    Exact,
    Best,
    Threshold,
}

impl MatchType {
    pub fn parse(s: &str) -> Option<MatchType> {
        match s {
            "exact" => Some(MatchType::Exact),
            "best" => Some(MatchType::Best),
            "threshold" => Some(MatchType::Threshold),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MatchType::Exact => "exact",
            MatchType::Best => "best",
            MatchType::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMetric {
    /// Mismatch count on binary cells, L1 distance on multi-bit cells.
    Hamming,
    /// Squared Euclidean distance.
    Euclidean,
}

impl SearchMetric {
    pub fn parse(s: &str) -> Option<SearchMetric> {
        match s {
            "hamming" => Some(SearchMetric::Hamming),
            "euclidean" => Some(SearchMetric::Euclidean),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SearchMetric::Hamming => "hamming",
            SearchMetric::Euclidean => "euclidean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpec {
    pub match_type: MatchType,
    pub metric: SearchMetric,
    /// Required iff `match_type` is `Threshold`.
    pub threshold: Option<i64>,
}

impl SearchSpec {
    pub fn best(metric: SearchMetric) -> Self {
        SearchSpec {
            match_type: MatchType::Best,
            metric,
            threshold: None,
        }
    }

    pub fn validate(&self) -> Result<(), CamError> {
        match (self.match_type, self.threshold) {
            (MatchType::Threshold, None) => Err(CamError("threshold missing for threshold match".into())),
            (MatchType::Threshold, Some(t)) if t < 0 => {
                Err(CamError("threshold must be non-negative".into()))
            }
            (MatchType::Threshold, Some(_)) => Ok(()),
            (m, Some(_)) => Err(CamError(format!("{} match takes no threshold", m.name()))),
            (_, None) => Ok(()),
        }
    }
}

/// Target device plus search semantics for `lower-cim-to-cam`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoweringSpec {
    pub device: Device,
    pub search: SearchSpec,
}

impl Default for LoweringSpec {
    fn default() -> Self {
        LoweringSpec {
            device: Device::Tcam,
            search: SearchSpec::best(SearchMetric::Hamming),
        }
    }
}

impl LoweringSpec {
    pub fn new(device: Device, search: SearchSpec) -> Result<Self, CamError> {
        search.validate()?;
        if device == Device::Tcam && search.metric == SearchMetric::Euclidean {
            return Err(CamError("metric unsupported by device: tcam supports hamming only".into()));
        }
        Ok(LoweringSpec { device, search })
    }

    /// Build from pass options; omitted values default to TCAM best-match
    /// Hamming search.
    pub fn from_options(
        device: Option<&str>,
        match_type: Option<&str>,
        metric: Option<&str>,
        threshold: Option<i64>,
    ) -> Result<Self, String> {
        let device = device.map_or(Some(Device::Tcam), Device::parse).ok_or("unknown device")?;
        let match_type = match_type
            .map_or(Some(MatchType::Best), MatchType::parse)
            .ok_or("unknown match type")?;
        let metric = metric
            .map_or(Some(SearchMetric::Hamming), SearchMetric::parse)
            .ok_or("unknown search metric")?;
        LoweringSpec::new(
            device,
            SearchSpec {
                match_type,
                metric,
                threshold,
            },
        )
        .map_err(|e| e.0)
    }
}
