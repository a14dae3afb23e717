use camforge::arch::ArchSpec;
use camforge::ir::ElemType;
use camforge::pipeline::{compile, simulate, CompileOptions, Stage};
use camforge::sim::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.gen_range(0..2)).collect()
}

/// argmax of bipolar dot products by popcount: dot = D - 2 * popcount(a ^ b).
fn popcount_best(hvs: &[i64], q: &[i64], d: usize) -> (i64, i64) {
    let mut best = (i64::MIN, -1);
    for (r, row) in hvs.chunks(d).enumerate() {
        let h = row.iter().zip(q).filter(|(a, b)| a != b).count() as i64;
        let dot = d as i64 - 2 * h;
        if dot > best.0 {
            best = (dot, r as i64);
        }
    }
    best
}

#[test]
fn hdc_every_stage_agrees_with_popcount() {
    let (d, n) = (100, 10);
    let src = format!(
        "kernel hdc(query: i1[1x{d}], hvs: i1[{n}x{d}]) -> (i32[1x1], i32[1x1]) {{
            t = transpose(hvs);
            s = matmul(query, t);
            v, i = topk(s, k=1);
            return v, i;
        }}"
    );
    let arch = ArchSpec::with_subarray(16, 16);
    let c = compile(&src, &arch, &CompileOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let q = bits(&mut rng, d);
        let hvs = bits(&mut rng, n * d);
        let want = popcount_best(&hvs, &q, d);
        let inputs = [
            Tensor::from_ints([1, d], ElemType::I1, q).unwrap(),
            Tensor::from_ints([n, d], ElemType::I1, hvs).unwrap(),
        ];
        for stage in Stage::ALL {
            let out = simulate(&c, stage, None, &inputs, &arch, false)
                .unwrap_or_else(|e| panic!("{stage}: {e}"));
            assert_eq!(out.outputs[0].ints(), &[want.0], "{stage}");
            assert_eq!(out.outputs[1].ints(), &[want.1], "{stage}");
        }
    }
}
