use crate::frontend::TensorOpKind;
use crate::ir::{HandleKind, Module, Operation, Type};

/// Wrap every offloadable tensor op in its own acquire/execute/release
/// triple. Ops outside the six primitives stay on the host.
pub fn lower_tensor_to_cim(m: &Module) -> Module {
    let mut out = m.clone();
    for f in &mut out.functions {
        let ops = std::mem::take(&mut f.body.ops);
        let mut new_ops = Vec::with_capacity(ops.len());
        for op in ops {
            if !matches!(TensorOpKind::from_op(&op), Some(Ok(_))) {
                new_ops.push(op);
                continue;
            }
            let acquire = f.build("cim.acquire", &[], vec![Type::Handle(HandleKind::CimDevice)], vec![]);
            let handle = acquire.results[0];
            let result_types: Vec<Type> = op.results.iter().map(|r| f.ty(*r).clone()).collect();
            let mut inner = f.build(&op.full_name(), &op.operands, result_types.clone(), vec![]);
            inner.attrs = op.attrs.clone();
            let yield_op = f.build("cim.yield", &inner.results.clone(), vec![], vec![]);
            let mut region = f.new_region(vec![]);
            region.ops = vec![inner, yield_op];
            let execute = Operation {
                dialect: "cim".into(),
                name: "execute".into(),
                operands: vec![handle],
                results: op.results.clone(),
                attrs: Default::default(),
                regions: vec![region],
            };
            let release = f.build("cim.release", &[handle], vec![], vec![]);
            new_ops.extend([acquire, execute, release]);
        }
        f.body.ops = new_ops;
    }
    out
}
