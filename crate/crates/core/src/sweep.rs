//! Design-space sweep over subarray sizes and mapping modes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::arch::{ArchSpec, Hierarchy, OptMode, Optimization, TechParams};
use crate::ir::{parse_elem, ElemType};
use crate::pipeline::{compile, simulate, CompileError, CompileOptions, Stage};
use crate::score::Metric;
use crate::sim::{int_range, Metrics, SimError, Tensor};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{0}")]
    Config(String),
    #[error("{config}: {source}")]
    Compile { config: String, source: CompileError },
    #[error("{config}: {source}")]
    Sim { config: String, source: SimError },
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, SweepError> {
    Err(SweepError::Config(msg.into()))
}

/// Similarity kernel evaluated at every sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub dim: usize,
    pub entries: usize,
    pub elem: ElemType,
    pub metric: Metric,
    pub k: usize,
    pub device: String,
    pub search_metric: String,
    pub seed: u64,
}

impl Workload {
    /// HDC-style workload: one binary query against `entries` hypervectors.
    pub fn hdc(dim: usize, entries: usize) -> Workload {
        Workload {
            dim,
            entries,
            elem: ElemType::I1,
            metric: Metric::Dot,
            k: 1,
            device: "tcam".into(),
            search_metric: "hamming".into(),
            seed: 1,
        }
    }

    pub fn source(&self) -> String {
        let (d, n, k, e) = (self.dim, self.entries, self.k, self.elem);
        match self.metric {
            Metric::Dot => format!(
                "kernel sweep(query: {e}[1x{d}], stored: {e}[{n}x{d}]) -> (i32[1x{k}], i32[1x{k}]) {{\n\
                 \x20   t = transpose(stored);\n\
                 \x20   s = matmul(query, t);\n\
                 \x20   v, i = topk(s, k={k});\n\
                 \x20   return v, i;\n}}\n"
            ),
            Metric::Euclidean | Metric::Manhattan => {
                let p = if self.metric == Metric::Euclidean { 2 } else { 1 };
                format!(
                    "kernel sweep(query: {e}[1x{d}], stored: {e}[{n}x{d}]) -> (f32[{k}], i32[{k}]) {{\n\
                     \x20   x = sub(query, stored);\n\
                     \x20   n = norm(x, p={p}, dim=1);\n\
                     \x20   v, i = topk(n, k={k}, largest=false);\n\
                     \x20   return v, i;\n}}\n"
                )
            }
        }
    }

    /// Deterministic query and stored data drawn from `seed`.
    pub fn inputs(&self) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (_, hi) = int_range(self.elem);
        let hi = hi.min(255);
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(0..=hi)).collect::<Vec<i64>>();
        let q = draw(self.dim);
        let s = draw(self.entries * self.dim);
        vec![
            Tensor::from_ints([1, self.dim], self.elem, q).expect("drawn in range"),
            Tensor::from_ints([self.entries, self.dim], self.elem, s).expect("drawn in range"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sizes: Vec<u32>,
    pub modes: Vec<OptMode>,
    pub workload: Workload,
    /// Hierarchy fields other than the subarray geometry.
    pub base: Hierarchy,
    pub tech: TechParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    #[serde(default)]
    hierarchy: Option<toml::Table>,
    #[serde(default)]
    tech: Option<TechParams>,
    sweep: SweepTable,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepTable {
    sizes: Vec<u32>,
    modes: Vec<String>,
    #[serde(default)]
    max_active: Option<u32>,
    dim: usize,
    entries: usize,
    #[serde(default = "default_elem")]
    elem: String,
    #[serde(default = "default_metric")]
    metric: String,
    #[serde(default = "one")]
    k: usize,
    #[serde(default = "default_device")]
    device: String,
    #[serde(default = "default_search_metric")]
    search_metric: String,
    #[serde(default = "one_u64")]
    seed: u64,
}

fn default_elem() -> String {
    "i1".into()
}
fn default_metric() -> String {
    "dot".into()
}
fn default_device() -> String {
    "tcam".into()
}
fn default_search_metric() -> String {
    "hamming".into()
}
fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}

impl SweepConfig {
    /// Default hierarchy and technology parameters.
    pub fn new(sizes: Vec<u32>, modes: Vec<OptMode>, workload: Workload) -> SweepConfig {
        SweepConfig {
            sizes,
            modes,
            workload,
            base: ArchSpec::with_subarray(16, 16).hierarchy,
            tech: TechParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<SweepConfig, SweepError> {
        let file: SweepFile = toml::from_str(text).map_err(|e| SweepError::Config(e.to_string()))?;
        let s = file.sweep;
        let mut table = file.hierarchy.unwrap_or_default();
        for key in ["subarray_rows", "subarray_cols"] {
            if table.contains_key(key) {
                return config_err(format!("[hierarchy] {key} is set per sweep point; list sizes in [sweep]"));
            }
            table.insert(key.into(), toml::Value::Integer(16));
        }
        table
            .entry("selective_search")
            .or_insert(toml::Value::Boolean(true));
        let base: Hierarchy = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| SweepError::Config(format!("[hierarchy]: {e}")))?;
        let modes = s
            .modes
            .iter()
            .map(|m| OptMode::parse(m, s.max_active).map_err(SweepError::Config))
            .collect::<Result<Vec<_>, _>>()?;
        let elem = parse_elem(&s.elem).ok_or_else(|| SweepError::Config(format!("unknown element type '{}'", s.elem)))?;
        let metric = Metric::parse(&s.metric).ok_or_else(|| SweepError::Config(format!("unknown metric '{}'", s.metric)))?;
        let tech = match file.tech {
            Some(t) => t,
            None => TechParams::from_env().map_err(|e| SweepError::Config(e.to_string()))?,
        };
        let cfg = SweepConfig {
            sizes: s.sizes,
            modes,
            workload: Workload {
                dim: s.dim,
                entries: s.entries,
                elem,
                metric,
                k: s.k,
                device: s.device,
                search_metric: s.search_metric,
                seed: s.seed,
            },
            base,
            tech,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SweepConfig, SweepError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SweepError::Config(format!("{}: {e}", path.display())))?;
        SweepConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.sizes.is_empty() || self.modes.is_empty() {
            return config_err("sweep sizes and modes must be non-empty");
        }
        if let Some(s) = self.sizes.iter().find(|s| !(16..=256).contains(*s)) {
            return config_err(format!("subarray size {s} outside [16, 256]"));
        }
        let w = &self.workload;
        if w.dim == 0 || w.entries == 0 || w.k == 0 || w.k > w.entries {
            return config_err("workload needs dim, entries >= 1 and 1 <= k <= entries");
        }
        if w.elem.is_float() {
            return config_err("workload data must be integer");
        }
        Ok(())
    }

    pub fn arch(&self, size: u32) -> ArchSpec {
        let mut hierarchy = self.base;
        hierarchy.subarray_rows = size;
        hierarchy.subarray_cols = size;
        ArchSpec {
            hierarchy,
            tech: self.tech.clone(),
            optimization: Optimization::default(),
        }
    }

    /// Sweep points in output order: size-major, mode-minor.
    pub fn points(&self) -> Vec<(u32, OptMode)> {
        self.sizes
            .iter()
            .flat_map(|&s| self.modes.iter().map(move |&m| (s, m)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: String,
    pub size: u32,
    pub mode: OptMode,
    pub metrics: Metrics,
}

pub fn evaluate(cfg: &SweepConfig, size: u32, mode: OptMode) -> Result<SweepRow, SweepError> {
    let config = format!("{size}x{size}/{mode}");
    let arch = cfg.arch(size);
    arch.validate().map_err(|e| SweepError::Config(format!("{config}: {e}")))?;
    let w = &cfg.workload;
    let opts = CompileOptions {
        device: Some(w.device.clone()),
        metric: Some(w.search_metric.clone()),
        mode: Some(mode.name().into()),
        max_active: mode.max_active(),
        ..CompileOptions::default()
    };
    let compiled = compile(&w.source(), &arch, &opts).map_err(|source| SweepError::Compile {
        config: config.clone(),
        source,
    })?;
    let run = simulate(&compiled, Stage::CamMapped, None, &w.inputs(), &arch, false)
        .map_err(|source| SweepError::Sim {
            config: config.clone(),
            source,
        })?;
    Ok(SweepRow {
        config,
        size,
        mode,
        metrics: run.metrics,
    })
}

/// Evaluate every point in parallel; rows come back in [`SweepConfig::points`]
/// order regardless of scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, SweepError> {
    cfg.validate()?;
    cfg.points()
        .into_par_iter()
        .map(|(s, m)| evaluate(cfg, s, m))
        .collect()
}

pub fn to_csv(rows: &[SweepRow], edp: bool) -> String {
    let mut out = String::from(Metrics::csv_header(edp));
    out.push('\n');
    for r in rows {
        out.push_str(&r.metrics.csv_row(&r.config, edp));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_file() {
        let cfg = SweepConfig::from_toml(
            "[sweep]\nsizes = [32]\nmodes = [\"base\", \"power\"]\nmax_active = 2\ndim = 64\nentries = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.points().len(), 2);
        assert_eq!(cfg.modes[1], OptMode::Power { max_active: 2 });
        assert!(cfg.base.selective_search);
    }

    #[test]
    fn rejects_geometry_in_hierarchy() {
        let e = SweepConfig::from_toml(
            "[hierarchy]\nsubarray_rows = 32\n[sweep]\nsizes = [32]\nmodes = [\"base\"]\ndim = 8\nentries = 2\n",
        )
        .unwrap_err();
        assert!(e.to_string().contains("per sweep point"));
    }

    #[test]
    fn sizes_out_of_range() {
        let cfg = SweepConfig::new(vec![8], vec![OptMode::Base], Workload::hdc(64, 4));
        assert!(cfg.validate().is_err());
    }
}
