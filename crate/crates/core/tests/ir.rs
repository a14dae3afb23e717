use camforge::frontend::parse_kernel;
use camforge::ir::{
    parse_module, print_module, run_pipeline, verify, Attr, ElemType, Function, HandleKind, Module, PipelineSpec, Type,
};

const CIM_BLOCKS: &str = "\
func @hdc(%0: tensor<1x64xi1>, %1: tensor<10x64xi1>) -> (tensor<1x1xi32>) {
  %2 = cim.acquire() : () -> (!cim.handle)
  %3 = cim.execute(%2) : (!cim.handle) -> (tensor<64x10xi1>) {
    %4 = tensor.transpose(%1) : (tensor<10x64xi1>) -> (tensor<64x10xi1>)
    cim.yield(%4) : (tensor<64x10xi1>) -> ()
  }
  cim.release(%2) : (!cim.handle) -> ()
  %5 = cim.acquire() : () -> (!cim.handle)
  %6 = cim.execute(%5) : (!cim.handle) -> (tensor<1x10xi32>) {
    %7 = tensor.matmul(%0, %3) : (tensor<1x64xi1>, tensor<64x10xi1>) -> (tensor<1x10xi32>)
    cim.yield(%7) : (tensor<1x10xi32>) -> ()
  }
  cim.release(%5) : (!cim.handle) -> ()
  %8 = cim.acquire() : () -> (!cim.handle)
  %9, %10 = cim.execute(%8) : (!cim.handle) -> (tensor<1x1xi32>, tensor<1x1xi32>) {
    %11, %12 = tensor.topk(%6) {dim = 1, k = 1, largest = 1} : (tensor<1x10xi32>) -> (tensor<1x1xi32>, tensor<1x1xi32>)
    cim.yield(%11, %12) : (tensor<1x1xi32>, tensor<1x1xi32>) -> ()
  }
  cim.release(%8) : (!cim.handle) -> ()
  func.return(%10) : (tensor<1x1xi32>) -> ()
}
";

fn op_names(m: &Module) -> Vec<String> {
    m.functions[0].body.ops.iter().map(|o| o.full_name()).collect()
}

#[test]
fn parses_cim_blocks() {
    let m = parse_module(CIM_BLOCKS).unwrap();
    assert_eq!(m.functions.len(), 1);
    assert_eq!(m.count_ops("cim.acquire"), 3);
    assert_eq!(m.count_ops("cim.execute"), 3);
    assert_eq!(m.count_ops("cim.release"), 3);
    assert!(verify(&m).is_empty());
}

#[test]
fn empty_text_is_empty_module() {
    assert_eq!(parse_module("").unwrap(), Module::new());
    assert_eq!(parse_module("  \n").unwrap().functions.len(), 0);
}

#[test]
fn arity_violation_is_reported() {
    let text = "func @f(%0: tensor<2x2xi32>) -> (tensor<2x2xi32>) {
  %1 = tensor.matmul(%0) : (tensor<2x2xi32>) -> (tensor<2x2xi32>)
  func.return(%1) : (tensor<2x2xi32>) -> ()
}";
    let e = parse_module(text).unwrap_err().to_string();
    assert!(e.contains("matmul expects 2 operands"), "{e}");
}

#[test]
fn parser_rejects_forward_reference() {
    let text = "func @f(%0: tensor<2x2xi32>) -> (tensor<2x2xi32>) {
  %1 = tensor.transpose(%2) : (tensor<2x2xi32>) -> (tensor<2x2xi32>)
  %2 = tensor.transpose(%0) : (tensor<2x2xi32>) -> (tensor<2x2xi32>)
  func.return(%1) : (tensor<2x2xi32>) -> ()
}";
    assert!(parse_module(text).unwrap_err().to_string().contains("use before def"));
}

#[test]
fn print_parse_round_trip() {
    let m = parse_module(CIM_BLOCKS).unwrap();
    let text = print_module(&m);
    assert_eq!(text, CIM_BLOCKS);
    assert_eq!(parse_module(&text).unwrap(), m);
}

#[test]
fn nested_regions_indent_two_spaces() {
    let text = print_module(&parse_module(CIM_BLOCKS).unwrap());
    assert!(text.lines().any(|l| l.starts_with("    %4 = tensor.transpose")));
    assert!(text.lines().any(|l| l.starts_with("  %3 = cim.execute")));
}

fn transpose_fn() -> Function {
    let t = Type::tensor([2, 3], ElemType::Int(4));
    let mut f = Function::new("t", vec![t], vec![Type::tensor([3, 2], ElemType::Int(4))]);
    let arg = f.args()[0];
    let op = f.build("tensor.transpose", &[arg], vec![Type::tensor([3, 2], ElemType::Int(4))], vec![]);
    let r = op.results[0];
    f.body.ops.push(op);
    let ret = f.build("func.return", &[r], vec![], vec![]);
    f.body.ops.push(ret);
    f
}

#[test]
fn api_and_parser_print_identically() {
    let built = Module {
        functions: vec![transpose_fn()],
    };
    let parsed = parse_module(
        "func @t(%0: tensor<2x3xi4>) -> (tensor<3x2xi4>) {
  %1 = tensor.transpose(%0) : (tensor<2x3xi4>) -> (tensor<3x2xi4>)
  func.return(%1) : (tensor<3x2xi4>) -> ()
}",
    )
    .unwrap();
    assert_eq!(built, parsed);
    assert_eq!(print_module(&built), print_module(&parsed));
}

#[test]
fn verify_use_before_def() {
    let t = Type::tensor([2, 2], ElemType::Int(4));
    let mut f = Function::new("t", vec![t.clone()], vec![t.clone()]);
    let first = f.build("tensor.transpose", &[f.args()[0]], vec![t.clone()], vec![]);
    let second = f.build("tensor.transpose", &[first.results[0]], vec![t], vec![]);
    let ret = f.build("func.return", &[second.results[0]], vec![], vec![]);
    f.body.ops.extend([second, first, ret]);
    let diags = verify(&Module { functions: vec![f] });
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert!(diags[0].message.contains("use before def"));
}

#[test]
fn verify_query_width_mismatch() {
    let q = Type::tensor([1, 16], ElemType::I1);
    let mut f = Function::new("s", vec![q], vec![]);
    let query = f.args()[0];
    let bank = f.build(
        "cam.alloc_bank",
        &[],
        vec![Type::Handle(HandleKind::Bank)],
        vec![("rows", Attr::from(32i64)), ("cols", Attr::from(32i64)), ("device", Attr::from("tcam"))],
    );
    let zero = f.build("plumb.const", &[], vec![Type::Index], vec![("value", Attr::from(0i64))]);
    let rows = f.build("plumb.const", &[], vec![Type::Index], vec![("value", Attr::from(32i64))]);
    let (b, z, n) = (bank.results[0], zero.results[0], rows.results[0]);
    let mat = f.build("cam.alloc_mat", &[b, z], vec![Type::Handle(HandleKind::Mat)], vec![]);
    let arr = f.build("cam.alloc_array", &[mat.results[0], z], vec![Type::Handle(HandleKind::Array)], vec![]);
    let sub = f.build("cam.alloc_subarray", &[arr.results[0], z], vec![Type::Handle(HandleKind::Subarray)], vec![]);
    let search = f.build(
        "cam.search",
        &[sub.results[0], query, z, n],
        vec![Type::Handle(HandleKind::Matches)],
        vec![("match", Attr::from("best")), ("metric", Attr::from("hamming"))],
    );
    let ret = f.build("func.return", &[], vec![], vec![]);
    f.body.ops.extend([bank, zero, rows, mat, arr, sub, search, ret]);
    let diags = verify(&Module { functions: vec![f] });
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert!(diags[0].message.contains("query width mismatch"));
}

#[test]
fn lower_and_fuse_give_one_block() {
    let m = parse_kernel(
        "kernel hdc(query: i1[1x64], hvs: i1[10x64]) -> (i32[1x1], i32[1x1]) {
            t = transpose(hvs);
            s = matmul(query, t);
            v, i = topk(s, k=1);
            return v, i;
        }",
    )
    .unwrap();
    let out = run_pipeline(&m, &PipelineSpec::parse("lower-tensor-to-cim,cim-fuse-ops{flag=none}").unwrap()).unwrap();
    assert_eq!(out.count_ops("cim.execute"), 1);
    assert_eq!(out.count_ops("tensor.matmul"), 1);
    assert!(verify(&out).is_empty());
}

#[test]
fn empty_pipeline_is_identity() {
    let m = parse_module(CIM_BLOCKS).unwrap();
    assert_eq!(run_pipeline(&m, &PipelineSpec::new()).unwrap(), m);
    assert_eq!(op_names(&m).len(), 10);
}

#[test]
fn unknown_pass_rejected() {
    let e = PipelineSpec::parse("lower-everything").unwrap_err();
    assert!(e.to_string().contains("unregistered pass"));
}
