use std::fmt::Write;

use super::{Function, Module, Operation, Region, ValueId};

/// Render a module in the textual IR format. Values are renumbered
/// `%0, %1, ...` per function in order of appearance.
pub fn print_module(m: &Module) -> String {
    let mut out = String::new();
    for (i, f) in m.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(&f.canonicalize(), &mut out);
    }
    out
}

fn print_function(f: &Function, out: &mut String) {
    write!(out, "func @{}(", f.name).unwrap();
    for (i, a) in f.args().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "%{}: {}", a.0, f.ty(*a)).unwrap();
    }
    out.push_str(") -> (");
    for (i, t) in f.result_types.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{t}").unwrap();
    }
    out.push_str(") {\n");
    for op in &f.body.ops {
        print_op(f, op, 1, out);
    }
    out.push_str("}\n");
}

fn value_list(vs: &[ValueId]) -> String {
    vs.iter()
        .map(|v| format!("%{}", v.0))
        .collect::<Vec<_>>()
        .join(", ")
}

fn type_list(f: &Function, vs: &[ValueId]) -> String {
    vs.iter()
        .map(|v| f.ty(*v).to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn print_op(f: &Function, op: &Operation, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    out.push_str(&indent);
    if !op.results.is_empty() {
        write!(out, "{} = ", value_list(&op.results)).unwrap();
    }
    write!(out, "{}.{}({})", op.dialect, op.name, value_list(&op.operands)).unwrap();
    if !op.attrs.is_empty() {
        let attrs: Vec<String> = op.attrs.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        write!(out, " {{{}}}", attrs.join(", ")).unwrap();
    }
    write!(
        out,
        " : ({}) -> ({})",
        type_list(f, &op.operands),
        type_list(f, &op.results)
    )
    .unwrap();
    for region in &op.regions {
        out.push_str(" {\n");
        print_region(f, region, depth + 1, out);
        out.push_str(&indent);
        out.push('}');
    }
    out.push('\n');
}

fn print_region(f: &Function, r: &Region, depth: usize, out: &mut String) {
    if !r.args.is_empty() {
        let args: Vec<String> = r
            .args
            .iter()
            .map(|a| format!("%{}: {}", a.0, f.ty(*a)))
            .collect();
        writeln!(out, "{}^bb({}):", "  ".repeat(depth), args.join(", ")).unwrap();
    }
    for op in &r.ops {
        print_op(f, op, depth, out);
    }
}
