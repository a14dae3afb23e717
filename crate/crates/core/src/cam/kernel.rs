use std::collections::HashMap;

use super::{CamError, Device, LoweringSpec, MatchType, SearchMetric, SearchSpec};
use crate::ir::{ElemType, Function, Operation, Type, ValueId};
use crate::score::Metric;

/// A similarity search ready for CAM emission.
#[derive(Debug, Clone, PartialEq)]
pub struct CamKernel {
    pub stored: ValueId,
    pub query: ValueId,
    pub entries: usize,
    pub width: usize,
    pub elem: ElemType,
    pub metric: Metric,
    /// 0 requests the full score row instead of a top-k.
    pub k: usize,
    pub largest: bool,
    pub spec: LoweringSpec,
    pub result_types: Vec<Type>,
    /// Tile geometry the data was partitioned to.
    pub tile_rows: usize,
    pub tile_cols: usize,
}

fn err<T>(msg: impl Into<String>) -> Result<T, CamError> {
    Err(CamError(msg.into()))
}

fn defs(ops: &[Operation]) -> HashMap<ValueId, &Operation> {
    let mut map = HashMap::new();
    for op in ops {
        for r in &op.results {
            map.insert(*r, op);
        }
        for region in &op.regions {
            region.walk(&mut |o| {
                for r in &o.results {
                    map.insert(*r, o);
                }
            });
        }
    }
    map
}

fn find<'a>(ops: &'a [Operation], full_name: &str) -> Option<&'a Operation> {
    let mut found = None;
    for op in ops {
        if op.full_name() == full_name {
            return Some(op);
        }
        for region in &op.regions {
            region.walk(&mut |o| {
                if found.is_none() && o.full_name() == full_name {
                    found = Some(o);
                }
            });
        }
        if found.is_some() {
            return found;
        }
    }
    None
}

fn slice_source<'a>(defs: &HashMap<ValueId, &'a Operation>, v: ValueId) -> Option<&'a Operation> {
    defs.get(&v).copied().filter(|op| op.is("plumb", "slice"))
}

impl CamKernel {
    /// Extract the similarity computed by a `cim.execute`, tiled or not.
    /// `Ok(None)` when the block holds no similarity.
    pub fn from_execute(
        f: &Function,
        exec: &Operation,
        spec: LoweringSpec,
    ) -> Result<Option<CamKernel>, CamError> {
        let ops = &exec.regions[0].ops;
        let Some(sim) = find(ops, "cim.similarity") else {
            return Ok(None);
        };
        let metric = Metric::parse(sim.str_attr("metric").unwrap_or(""))
            .ok_or_else(|| CamError("unknown similarity metric".into()))?;
        let (stored, query, tile, k, largest) = if sim.int_attr("partial").unwrap_or(0) == 0 {
            let (s, q) = (sim.operands[0], sim.operands[1]);
            let st = f.tensor_ty(s).ok_or_else(|| CamError("stored data must be a tensor".into()))?;
            (
                s,
                q,
                (st.shape[0], st.shape[1]),
                sim.int_attr("k").unwrap_or(0),
                sim.int_attr("largest").unwrap_or(1) != 0,
            )
        } else {
            let d = defs(ops);
            let (Some(ss), Some(qs)) = (slice_source(&d, sim.operands[0]), slice_source(&d, sim.operands[1]))
            else {
                return err("partial similarity operands must be slices");
            };
            let fin = find(ops, "cim.finalize").ok_or_else(|| CamError("missing cim.finalize".into()))?;
            (
                ss.operands[0],
                qs.operands[0],
                (ss.int_attr("rows").unwrap_or(1) as usize, ss.int_attr("cols").unwrap_or(1) as usize),
                fin.int_attr("k").unwrap_or(0),
                fin.int_attr("largest").unwrap_or(1) != 0,
            )
        };
        let st = f.tensor_ty(stored).cloned().ok_or_else(|| CamError("stored data must be a tensor".into()))?;
        let kernel = CamKernel {
            stored,
            query,
            entries: st.shape[0],
            width: st.shape[1],
            elem: st.elem,
            metric,
            k: k.max(0) as usize,
            largest,
            spec,
            result_types: exec.results.iter().map(|r| f.ty(*r).clone()).collect(),
            tile_rows: tile.0,
            tile_cols: tile.1,
        };
        kernel.check()?;
        Ok(Some(kernel))
    }

    /// Recover the kernel from an emitted alloc/write/search/read segment.
    pub fn from_segment(f: &Function, segment: &[Operation]) -> Result<CamKernel, CamError> {
        let d = defs(segment);
        let need = |name: &str| find(segment, name).ok_or_else(|| CamError(format!("segment lacks {name}")));
        let write = need("cam.write_value")?;
        let search = need("cam.search")?;
        let bank = need("cam.alloc_bank")?;
        let read = segment
            .last()
            .filter(|op| op.is("cam", "read_value"))
            .ok_or_else(|| CamError("segment must end with cam.read_value".into()))?;
        let (Some(ss), Some(qs)) = (slice_source(&d, write.operands[1]), slice_source(&d, search.operands[1])) else {
            return err("write and search data must come from slices");
        };
        let stored = ss.operands[0];
        let st = f.tensor_ty(stored).cloned().ok_or_else(|| CamError("stored data must be a tensor".into()))?;
        let attr_str = |op: &Operation, k: &str| op.str_attr(k).unwrap_or("").to_string();
        let device = Device::parse(&attr_str(bank, "device")).ok_or_else(|| CamError("unknown device".into()))?;
        let search_spec = SearchSpec {
            match_type: MatchType::parse(&attr_str(read, "match"))
                .ok_or_else(|| CamError("unknown match type".into()))?,
            metric: SearchMetric::parse(&attr_str(search, "metric"))
                .ok_or_else(|| CamError("unknown search metric".into()))?,
            threshold: read.int_attr("threshold"),
        };
        let kernel = CamKernel {
            stored,
            query: qs.operands[0],
            entries: st.shape[0],
            width: st.shape[1],
            elem: st.elem,
            metric: Metric::parse(&attr_str(read, "metric"))
                .ok_or_else(|| CamError("unknown similarity metric".into()))?,
            k: read.int_attr("k").unwrap_or(0).max(0) as usize,
            largest: read.int_attr("largest").unwrap_or(1) != 0,
            spec: LoweringSpec::new(device, search_spec)?,
            result_types: read.results.iter().map(|r| f.ty(*r).clone()).collect(),
            tile_rows: bank.int_attr("rows").unwrap_or(1) as usize,
            tile_cols: bank.int_attr("cols").unwrap_or(1) as usize,
        };
        kernel.check()?;
        Ok(kernel)
    }

    /// Reject kernels the chosen device and search semantics cannot realize.
    pub fn check(&self) -> Result<(), CamError> {
        let spec = self.spec;
        spec.search.validate()?;
        if self.k == 0 && spec.search.match_type != MatchType::Best {
            return err(format!(
                "{} match needs a top-k result; score-only kernels support best match",
                spec.search.match_type.name()
            ));
        }
        if self.elem.is_float() {
            return err("CAM cells hold integer data, not f32");
        }
        if self.elem.is_binary() {
            return Ok(());
        }
        let unsupported = || {
            err(format!(
                "metric unsupported by device: {} similarity on {} data with {} {} search",
                self.metric,
                self.elem,
                spec.device,
                spec.search.metric.name()
            ))
        };
        match (spec.device, self.metric, spec.search.metric) {
            (Device::Mcam, Metric::Manhattan, SearchMetric::Hamming) => Ok(()),
            (Device::Mcam, Metric::Euclidean, SearchMetric::Euclidean) => Ok(()),
            _ => unsupported(),
        }
    }
}
