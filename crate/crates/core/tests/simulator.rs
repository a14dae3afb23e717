use camforge::arch::{ArchSpec, TechParams};
use camforge::cam::{Device, MatchType, SearchMetric, SearchSpec};
use camforge::ir::{parse_module, ElemType, Module};
use camforge::pipeline::{compile, simulate, CompileOptions, Stage};
use camforge::score::Metric;
use camforge::sim::{dense_oracle, execute, Filter, Metrics, SimError, Subarray, Tensor, X};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(match_type: MatchType, metric: SearchMetric, threshold: Option<i64>) -> SearchSpec {
    SearchSpec {
        match_type,
        metric,
        threshold,
    }
}

#[test]
fn tcam_best_match_by_hamming() {
    let mut s = Subarray::new(Device::Tcam, 2, 4);
    s.write(0, &[0, 0, 0, 0, 0, 1, 1, 1]).unwrap();
    let r = s.search(&[0, 0, 1, 1], 0, 2, &spec(MatchType::Best, SearchMetric::Hamming, None)).unwrap();
    assert_eq!(r.distances, vec![2, 1]);
    assert_eq!(r.flags, vec![false, true]);
}

#[test]
fn dont_care_cells_match_either_bit() {
    let mut s = Subarray::new(Device::Tcam, 1, 4);
    s.write(0, &[0, X, 1, X]).unwrap();
    let r = s.search(&[0, 1, 1, 0], 0, 1, &spec(MatchType::Exact, SearchMetric::Hamming, None)).unwrap();
    assert_eq!(r.flags, vec![true]);
}

#[test]
fn mcam_l1_best_match() {
    let mut s = Subarray::new(Device::Mcam, 2, 2);
    s.write(0, &[1, 2, 3, 0]).unwrap();
    let r = s.search(&[2, 2], 0, 2, &spec(MatchType::Best, SearchMetric::Hamming, None)).unwrap();
    assert_eq!(r.distances, vec![1, 3]);
    assert_eq!(r.flags, vec![true, false]);
}

#[test]
fn threshold_flags() {
    let mut s = Subarray::new(Device::Tcam, 2, 4);
    s.write(0, &[0, 0, 0, 0, 0, 1, 1, 1]).unwrap();
    let r = s
        .search(&[0, 0, 1, 1], 0, 2, &spec(MatchType::Threshold, SearchMetric::Hamming, Some(1)))
        .unwrap();
    assert_eq!(r.flags, vec![false, true]);
}

#[test]
fn dense_oracle_matches_popcount() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let stored: Vec<i64> = (0..20 * 64).map(|_| rng.gen_range(0..2)).collect();
        let query: Vec<i64> = (0..64).map(|_| rng.gen_range(0..2)).collect();
        let s = Tensor::from_ints([20, 64], ElemType::I1, stored.clone()).unwrap();
        let q = Tensor::from_ints([1, 64], ElemType::I1, query.clone()).unwrap();
        let (v, i) = dense_oracle(&s, &q, Metric::Dot, 1, true, Filter::ALL);
        // Fewest differing bits wins; the first such row on ties.
        let pop: Vec<u32> = stored
            .chunks(64)
            .map(|row| {
                let word = |b: &[i64]| b.iter().fold(0u64, |w, &x| (w << 1) | x as u64);
                (word(row) ^ word(&query)).count_ones()
            })
            .collect();
        let min = *pop.iter().min().unwrap();
        let best = pop.iter().position(|&p| p == min).unwrap();
        assert_eq!(i, vec![best as i64]);
        assert_eq!(v, vec![64.0 - 2.0 * f64::from(min)]);
    }
}

#[test]
fn dense_oracle_euclidean_on_i4() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let stored: Vec<i64> = (0..30 * 16).map(|_| rng.gen_range(0..16)).collect();
        let query: Vec<i64> = (0..16).map(|_| rng.gen_range(0..16)).collect();
        let s = Tensor::from_ints([30, 16], ElemType::Int(4), stored.clone()).unwrap();
        let q = Tensor::from_ints([1, 16], ElemType::Int(4), query.clone()).unwrap();
        let (_, i) = dense_oracle(&s, &q, Metric::Euclidean, 3, false, Filter::ALL);
        let mut sq: Vec<(i64, i64)> = stored
            .chunks(16)
            .enumerate()
            .map(|(r, row)| (row.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum(), r as i64))
            .collect();
        sq.sort();
        let want: Vec<i64> = sq[..3].iter().map(|p| p.1).collect();
        assert_eq!(i, want);
    }
}

fn schedule_program(schedule: &str) -> Module {
    parse_module(&format!(
        "func @s(%0: tensor<1x16xi1>, %1: tensor<16x16xi1>) -> () {{
  %2 = cam.alloc_bank() {{cols = 16, device = \"tcam\", rows = 16}} : () -> (!cam.bank)
  %3 = plumb.const() {{value = 0}} : () -> (index)
  %4 = plumb.const() {{value = 16}} : () -> (index)
  %5 = cam.alloc_mat(%2) : (!cam.bank) -> (!cam.mat)
  %6 = cam.alloc_array(%5) : (!cam.mat) -> (!cam.array)
  plumb.for() {{level = \"subarray\", lower = 0, {schedule}step = 1, upper = 4}} : () -> () {{
    ^bb(%7: index):
    %8 = cam.alloc_subarray(%6, %7) : (!cam.array, index) -> (!cam.subarray)
    cam.write_value(%8, %1, %3, %4) : (!cam.subarray, tensor<16x16xi1>, index, index) -> ()
    %9 = cam.search(%8, %0, %3, %4) {{match = \"best\", metric = \"hamming\"}} : (!cam.subarray, tensor<1x16xi1>, index, index) -> (!cam.matches)
    plumb.yield() : () -> ()
  }}
  func.return() : () -> ()
}}
"
    ))
    .unwrap()
}

fn run_schedule(schedule: &str) -> Result<camforge::sim::Execution, SimError> {
    let inputs = [
        Tensor::zeros([1, 16], ElemType::I1),
        Tensor::zeros([16, 16], ElemType::I1),
    ];
    execute(&schedule_program(schedule), None, &inputs, &TechParams::default(), true)
}

#[test]
fn loop_schedules_set_step_counts() {
    let cases = [
        ("schedule = \"parallel\", ", 2, 0.86 + 2.0),
        ("schedule = \"sequential\", ", 8, 4.0 * (0.86 + 2.0)),
        ("group = 2, schedule = \"grouped\", ", 4, 2.0 * (0.86 + 2.0)),
    ];
    let mut energies = Vec::new();
    for (attrs, steps, latency) in cases {
        let run = run_schedule(attrs).unwrap();
        let m = &run.metrics;
        assert_eq!(m.search_steps + m.write_steps, steps, "{attrs}");
        assert!((m.latency_ns - latency).abs() < 1e-9, "{attrs}: {}", m.latency_ns);
        energies.push(m.energy_pj);
    }
    assert!(energies.windows(2).all(|w| w[0] == w[1]), "{energies:?}");
}

#[test]
fn cell_energy_counts_written_and_searched_cells() {
    let m = run_schedule("schedule = \"parallel\", ").unwrap().metrics;
    let tp = TechParams::default();
    assert!((m.write_energy_pj - 4.0 * 256.0 * tp.write_energy_pj_per_cell).abs() < 1e-9);
    assert!((m.search_energy_pj - 4.0 * 256.0 * tp.search_energy_pj_per_cell).abs() < 1e-9);
}

#[test]
fn missing_schedule_on_level_loop_is_an_error() {
    let e = run_schedule("").unwrap_err();
    assert!(e.to_string().contains("schedule attribute missing on subarray loop"), "{e}");
}

#[test]
fn trace_replays_to_totals() {
    let run = run_schedule("group = 2, schedule = \"grouped\", ").unwrap();
    let sum: f64 = run.trace.iter().map(|e| e.energy_pj).sum();
    assert!((sum - run.metrics.energy_pj).abs() < 1e-9 * run.metrics.energy_pj.max(1.0));
    let peak = run.trace.iter().map(|e| e.step).max().unwrap() + 1;
    assert_eq!(peak as usize, run.metrics.search_steps + run.metrics.write_steps);
}

#[test]
fn one_search_on_16x16() {
    let src = "kernel one(q: i1[1x16], s: i1[16x16]) -> (i32[1x1], i32[1x1]) {
        t = transpose(s);
        m = matmul(q, t);
        v, i = topk(m, k=1);
        return v, i;
    }";
    let arch = ArchSpec::with_subarray(16, 16);
    let c = compile(src, &arch, &CompileOptions::default()).unwrap();
    let inputs = [Tensor::zeros([1, 16], ElemType::I1), Tensor::zeros([16, 16], ElemType::I1)];
    let run = simulate(&c, Stage::CamMapped, None, &inputs, &arch, false).unwrap();
    let m = run.metrics;
    assert_eq!((m.counters.searches, m.subarrays_used), (1, 1));
    assert!((m.latency_ns - (0.86 + arch.tech.write_latency_ns)).abs() < 1e-12);
}

#[test]
fn empty_program_costs_nothing() {
    let run = execute(&Module::new(), None, &[], &TechParams::default(), false).unwrap();
    assert!(run.outputs.is_empty());
    assert_eq!(run.metrics.csv_row("empty", false), "empty,0,0,0,0,0,0");
}

#[test]
fn csv_rows_and_edp() {
    let a = run_schedule("schedule = \"parallel\", ").unwrap().metrics;
    let b = run_schedule("schedule = \"sequential\", ").unwrap().metrics;
    let text = [Metrics::csv_header(true).to_string(), a.csv_row("a", true), b.csv_row("b", true)].join("\n");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].ends_with(",edp"));
    for (line, m) in lines[1..].iter().zip([&a, &b]) {
        let edp: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(edp, m.energy_pj * m.latency_ns);
    }
}

#[test]
fn report_flags_host_merges() {
    let r = run_schedule("schedule = \"parallel\", ").unwrap().metrics.report();
    assert!(r.contains("unmodeled host merges"));
}
