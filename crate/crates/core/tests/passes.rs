use camforge::arch::{ArchSpec, OptMode};
use camforge::cam::{cam_map, lower_cim_to_cam, LoweringSpec};
use camforge::cim::{fuse_ops, lower_tensor_to_cim, partition, similarity_matching, SimilarityPattern};
use camforge::frontend::parse_kernel;
use camforge::ir::{parse_module, verify, Module, Operation};

fn kernel(body: &str, params: &str, results: &str) -> Module {
    let m = parse_kernel(&format!("kernel k({params}) -> ({results}) {{\n{body}\n}}")).unwrap();
    assert!(verify(&m).is_empty());
    m
}

fn dot_kernel(n: usize, d: usize) -> Module {
    kernel(
        "t = transpose(hvs);\ns = matmul(query, t);\nv, i = topk(s, k=1);\nreturn v, i;",
        &format!("query: i1[1x{d}], hvs: i1[{n}x{d}]"),
        "i32[1x1], i32[1x1]",
    )
}

fn checked(m: Module) -> Module {
    let diags = verify(&m);
    assert!(diags.is_empty(), "{diags:?}");
    m
}

fn fused_block_ops(m: &Module) -> &[Operation] {
    let exec = m.functions[0]
        .body
        .ops
        .iter()
        .find(|o| o.is("cim", "execute"))
        .expect("one execute block");
    &exec.regions[0].ops
}

#[test]
fn each_primitive_gets_its_own_block() {
    let cim = checked(lower_tensor_to_cim(&dot_kernel(10, 64)));
    for name in ["cim.acquire", "cim.execute", "cim.release"] {
        assert_eq!(cim.count_ops(name), 3, "{name}");
    }
}

#[test]
fn nothing_to_lower() {
    let m = parse_module("func @e(%0: tensor<2x2xi32>) -> (tensor<2x2xi32>) {\n  func.return(%0) : (tensor<2x2xi32>) -> ()\n}\n").unwrap();
    assert_eq!(lower_tensor_to_cim(&m), m);
}

#[test]
fn host_ops_stay_outside_blocks() {
    let m = parse_module(
        "func @h(%0: tensor<2x3xi4>) -> (tensor<3x2xi4>) {
  %1 = tensor.transpose(%0) : (tensor<2x3xi4>) -> (tensor<3x2xi4>)
  %2 = tensor.reshape(%1) : (tensor<3x2xi4>) -> (tensor<3x2xi4>)
  func.return(%2) : (tensor<3x2xi4>) -> ()
}",
    )
    .unwrap();
    let cim = checked(lower_tensor_to_cim(&m));
    assert_eq!(cim.count_ops("cim.execute"), 1);
    assert_eq!(cim.functions[0].body.ops[3].full_name(), "tensor.reshape");
}

#[test]
fn recognizer_examples() {
    let dot = fuse_ops(&lower_tensor_to_cim(&dot_kernel(10, 64)), false);
    assert_eq!(similarity_matching(fused_block_ops(&dot)), Some(SimilarityPattern::DotProd));

    let eucl = kernel(
        "d = sub(query, hvs);\nn = norm(d, p=2, dim=1);\nv, i = topk(n, k=1, largest=false);\nreturn v, i;",
        "query: i4[1x16], hvs: i4[10x16]",
        "f32[1], i32[1]",
    );
    let eucl = fuse_ops(&lower_tensor_to_cim(&eucl), false);
    assert_eq!(similarity_matching(fused_block_ops(&eucl)), Some(SimilarityPattern::EuclNorm));

    let cos = kernel(
        "a = norm(hvs, p=2, dim=1);\nb = norm(query, p=2, dim=1);\nt = transpose(hvs);\ns = matmul(query, t);\nc = div(s, b, a);\nreturn c;",
        "query: i4[1x16], hvs: i4[10x16]",
        "f32[1x10]",
    );
    let cos = fuse_ops(&lower_tensor_to_cim(&cos), false);
    assert_eq!(similarity_matching(fused_block_ops(&cos)), Some(SimilarityPattern::CosSim));
}

#[test]
fn wrong_edge_direction_is_not_a_pattern() {
    let m = kernel(
        "s = matmul(a, b);\nt = transpose(s);\nv, i = topk(t, k=1);\nreturn v, i;",
        "a: i1[1x16], b: i1[16x1]",
        "i32[1x1], i32[1x1]",
    );
    let fused = fuse_ops(&lower_tensor_to_cim(&m), false);
    assert_eq!(fused.count_ops("cim.execute"), 1);
    assert_eq!(similarity_matching(fused_block_ops(&fused)), None);
}

#[test]
fn fusion_then_rewrite() {
    let cim = lower_tensor_to_cim(&dot_kernel(10, 64));
    let fused = checked(fuse_ops(&cim, false));
    assert_eq!(fused.count_ops("cim.execute"), 1);
    assert_eq!(fused_block_ops(&fused).len(), 4);
    let rewritten = checked(fuse_ops(&cim, true));
    assert_eq!(rewritten.count_ops("cim.execute"), 1);
    assert_eq!(rewritten.count_ops("cim.similarity"), 1);
    assert_eq!(rewritten.count_ops("tensor.matmul"), 0);
}

#[test]
fn lone_matmul_is_not_rewritten() {
    let m = kernel("s = matmul(a, b);\nreturn s;", "a: i4[1x8], b: i4[8x3]", "i32[1x3]");
    let fused = checked(fuse_ops(&lower_tensor_to_cim(&m), true));
    assert_eq!(fused.count_ops("cim.execute"), 1);
    assert_eq!(fused.count_ops("tensor.matmul"), 1);
    assert_eq!(fused.count_ops("cim.similarity"), 0);
}

#[test]
fn independent_blocks_stay_apart() {
    let m = kernel(
        "x = transpose(a);\ny = transpose(b);\nreturn x, y;",
        "a: i4[2x3], b: i4[3x2]",
        "i4[3x2], i4[2x3]",
    );
    let fused = checked(fuse_ops(&lower_tensor_to_cim(&m), true));
    assert_eq!(fused.count_ops("cim.execute"), 2);
}

fn similarity(n: usize, d: usize) -> Module {
    fuse_ops(&lower_tensor_to_cim(&dot_kernel(n, d)), true)
}

#[test]
fn hdc_partition_on_32x32() {
    let p = checked(partition(&similarity(10, 8192), 32, 32).unwrap());
    let f = &p.functions[0];
    let mut loops = Vec::new();
    f.body.walk(&mut |op| {
        if op.is("plumb", "for") {
            loops.push((op.int_attr("lower"), op.int_attr("upper")));
        }
    });
    // Tile 0 seeds the accumulator; the loop merges the other 255.
    assert_eq!(loops, vec![(Some(1), Some(256))]);
    assert_eq!(p.count_ops("cim.similarity"), 2);
    let mut merges = Vec::new();
    f.body.walk(&mut |op| {
        if op.is("cim", "merge_partial") {
            merges.push(op.str_attr("kind").unwrap().to_string());
        }
    });
    assert_eq!(merges, ["sum-cols", "topk-max"]);
}

#[test]
fn single_tile_has_no_loop() {
    let p = checked(partition(&similarity(10, 32), 32, 32).unwrap());
    assert_eq!(p.count_ops("plumb.for"), 0);
    assert_eq!(p.count_ops("cim.similarity"), 1);
}

/// Dynamic count of `name` ops, multiplying through loop trip counts.
fn executions(ops: &[Operation], name: &str) -> i64 {
    ops.iter()
        .map(|op| {
            let own = i64::from(op.full_name() == name);
            let inner: i64 = op.regions.iter().map(|r| executions(&r.ops, name)).sum();
            let trips = if op.is("plumb", "for") {
                op.int_attr("upper").unwrap() - op.int_attr("lower").unwrap()
            } else {
                1
            };
            own + trips * inner
        })
        .sum()
}

#[test]
fn tile_grid_is_ceil_product() {
    let p = checked(partition(&similarity(64, 64), 32, 32).unwrap());
    assert_eq!(executions(&p.functions[0].body.ops, "cim.similarity"), 4);
    let p = checked(partition(&similarity(10, 8192), 32, 32).unwrap());
    assert_eq!(executions(&p.functions[0].body.ops, "cim.similarity"), 256);
}

#[test]
fn cam_lowering_sequence() {
    let p = partition(&similarity(10, 64), 32, 32).unwrap();
    let cam = checked(lower_cim_to_cam(&p, &LoweringSpec::default()).unwrap());
    for name in ["cam.alloc_bank", "cam.alloc_mat", "cam.alloc_array", "cam.alloc_subarray"] {
        assert!(cam.count_ops(name) >= 1, "{name}");
    }
    assert!(cam.count_ops("cam.write_value") >= 1);
    assert!(cam.count_ops("cam.search") >= 1);
    assert_eq!(cam.count_ops("cam.read_value"), 1);
    assert_eq!(cam.count_ops("cim.execute"), 0);
}

#[test]
fn cam_lowering_leaves_plain_cim_alone() {
    let m = kernel("x = transpose(a);\nreturn x;", "a: i4[2x3]", "i4[3x2]");
    let cim = fuse_ops(&lower_tensor_to_cim(&m), true);
    assert_eq!(lower_cim_to_cam(&cim, &LoweringSpec::default()).unwrap(), cim);
}

#[test]
fn tcam_rejects_euclidean() {
    let e = LoweringSpec::from_options(Some("tcam"), None, Some("euclidean"), None).unwrap_err();
    assert!(e.contains("metric unsupported by device"), "{e}");
}

fn mapped(n: usize, d: usize, size: u32, mode: OptMode) -> Module {
    let arch = ArchSpec::with_subarray(size, size);
    let p = partition(&similarity(n, d), size as usize, size as usize).unwrap();
    let cam = lower_cim_to_cam(&p, &LoweringSpec::default()).unwrap();
    checked(cam_map(&cam, &arch, mode).unwrap())
}

#[test]
fn mapping_degenerates_for_one_subarray() {
    let m = mapped(10, 32, 32, OptMode::Base);
    assert_eq!(m.count_ops("plumb.for"), 0);
    assert_eq!(m.count_ops("cam.search"), 1);
    assert_eq!(m.count_ops("cam.write_value"), 1);
}

#[test]
fn mapped_loops_carry_levels_and_schedules() {
    for mode in [OptMode::Base, OptMode::Power { max_active: 2 }, OptMode::Density] {
        let m = mapped(10, 8192, 32, mode);
        let mut n = 0;
        m.functions[0].body.walk(&mut |op| {
            if op.is("plumb", "for") {
                assert!(op.str_attr("level").is_some());
                assert!(op.str_attr("schedule").is_some());
                n += 1;
            }
        });
        assert!(n >= 3, "{mode}: {n} loops");
    }
}
