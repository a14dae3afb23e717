use std::collections::HashSet;

use super::emit::{emit, Layout, SubarraySchedule};
use super::placement::place;
use super::{CamError, CamKernel, LoweringSpec};
use crate::arch::AccessMode;
use crate::ir::{Module, ValueId};

/// Replace each acquire/execute(similarity)/release triple by CAM calls on
/// a single-unit hierarchy: one bank, mat, array and subarray sized to the
/// partition tile, reused in sequential waves for every tile.
pub fn lower_cim_to_cam(m: &Module, spec: &LoweringSpec) -> Result<Module, CamError> {
    spec.search.validate()?;
    let mut out = m.clone();
    for f in &mut out.functions {
        let mut lowered_handles: HashSet<ValueId> = HashSet::new();
        let ops = std::mem::take(&mut f.body.ops);
        let mut new_ops = Vec::with_capacity(ops.len());
        for op in ops {
            if !op.is("cim", "execute") {
                new_ops.push(op);
                continue;
            }
            let Some(kernel) = CamKernel::from_execute(f, &op, *spec)? else {
                new_ops.push(op);
                continue;
            };
            let plan = place(
                kernel.width,
                kernel.entries,
                kernel.tile_rows,
                kernel.tile_cols,
                [1, 1, 1],
                Some(1),
                false,
            );
            let layout = Layout {
                plan,
                bank: AccessMode::Parallel,
                mat: AccessMode::Parallel,
                array: AccessMode::Parallel,
                search: SubarraySchedule::Parallel,
            };
            lowered_handles.insert(op.operands[0]);
            new_ops.extend(emit(f, &kernel, &layout, op.results.clone()));
        }
        new_ops.retain(|op| {
            let drop_acquire = op.is("cim", "acquire") && lowered_handles.contains(&op.results[0]);
            let drop_release = op.is("cim", "release") && lowered_handles.contains(&op.operands[0]);
            !(drop_acquire || drop_release)
        });
        f.body.ops = new_ops;
    }
    Ok(out)
}
