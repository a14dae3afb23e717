use super::emit::{emit, Layout, SubarraySchedule};
use super::{placement_plan, CamError, CamKernel, OptMode};
use crate::arch::{AccessMode, ArchSpec};
use crate::ir::Module;

/// Re-emit every CAM search segment as a loop nest over `arch`, laid out
/// and scheduled according to `mode`.
pub fn cam_map(m: &Module, arch: &ArchSpec, mode: OptMode) -> Result<Module, CamError> {
    arch.validate().map_err(|e| CamError(e.to_string()))?;
    arch.check_mode(mode).map_err(|e| CamError(e.to_string()))?;
    let search = match mode.max_active() {
        Some(g) => SubarraySchedule::Grouped(g),
        None if arch.hierarchy.subarray_access == AccessMode::Sequential => SubarraySchedule::Sequential,
        None => SubarraySchedule::Parallel,
    };
    let mut out = m.clone();
    for f in &mut out.functions {
        let mut i = 0;
        while i < f.body.ops.len() {
            if !f.body.ops[i].is("cam", "read_value") {
                i += 1;
                continue;
            }
            let start = (0..i)
                .rev()
                .find(|&j| f.body.ops[j].is("cam", "alloc_buffer"))
                .ok_or_else(|| CamError("cam.read_value without a result buffer".into()))?;
            let kernel = CamKernel::from_segment(f, &f.body.ops[start..=i])?;
            let layout = Layout {
                plan: placement_plan(kernel.width, kernel.entries, arch, mode),
                bank: arch.hierarchy.bank_access,
                mat: arch.hierarchy.mat_access,
                array: arch.hierarchy.array_access,
                search,
            };
            let outputs = f.body.ops[i].results.clone();
            let segment = emit(f, &kernel, &layout, outputs);
            let n = segment.len();
            f.body.ops.splice(start..=i, segment);
            i = start + n;
        }
    }
    Ok(out)
}
