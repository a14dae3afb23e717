use camforge::arch::{ArchSpec, OptMode};
use camforge::data;
use camforge::ir::{parse_module, print_module, ElemType};
use camforge::pipeline::{compile, simulate, CompileOptions, Stage};
use camforge::score::Metric;
use camforge::sim::{Execution, Tensor};
use camforge::sweep::Workload;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    metric: Metric,
    elem: ElemType,
    d: usize,
    n: usize,
    k: usize,
    size: u32,
    query: Vec<i64>,
    stored: Vec<i64>,
}

fn case() -> impl Strategy<Value = Case> {
    (0..3usize, 1..=200usize, 1..=48usize, 0..3usize).prop_flat_map(|(m, d, n, s)| {
        let metric = [Metric::Dot, Metric::Euclidean, Metric::Manhattan][m];
        let elem = if metric == Metric::Dot { ElemType::I1 } else { ElemType::Int(3) };
        let hi: i64 = if elem == ElemType::I1 { 1 } else { 7 };
        (
            1..=n.min(4),
            prop::collection::vec(0..=hi, d),
            prop::collection::vec(0..=hi, n * d),
        )
            .prop_map(move |(k, query, stored)| Case {
                metric,
                elem,
                d,
                n,
                k,
                size: [16, 32, 64][s],
                query,
                stored,
            })
    })
}

impl Case {
    fn inputs(&self) -> [Tensor; 2] {
        [
            Tensor::from_ints([1, self.d], self.elem, self.query.clone()).unwrap(),
            Tensor::from_ints([self.n, self.d], self.elem, self.stored.clone()).unwrap(),
        ]
    }

    fn source(&self) -> String {
        Workload {
            dim: self.d,
            entries: self.n,
            elem: self.elem,
            metric: self.metric,
            k: self.k,
            device: String::new(),
            search_metric: String::new(),
            seed: 0,
        }
        .source()
    }

    fn options(&self, mode: OptMode) -> CompileOptions {
        CompileOptions {
            device: Some(if self.elem == ElemType::I1 { "tcam" } else { "mcam" }.into()),
            metric: Some(if self.metric == Metric::Euclidean { "euclidean" } else { "hamming" }.into()),
            mode: Some(mode.name().into()),
            max_active: mode.max_active(),
            ..Default::default()
        }
    }

    fn run(&self, mode: OptMode) -> Execution {
        let arch = ArchSpec::with_subarray(self.size, self.size);
        let c = compile(&self.source(), &arch, &self.options(mode)).unwrap();
        simulate(&c, Stage::CamMapped, None, &self.inputs(), &arch, true).unwrap()
    }
}

const MODES: [OptMode; 4] = [
    OptMode::Base,
    OptMode::Power { max_active: 1 },
    OptMode::Density,
    OptMode::PowerDensity { max_active: 2 },
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_do_not_depend_on_mode(c in case()) {
        let base = c.run(OptMode::Base).outputs;
        for mode in &MODES[1..] {
            prop_assert_eq!(&c.run(*mode).outputs, &base, "{}", mode);
        }
    }

    #[test]
    fn power_mode_cost_relations(c in case(), s in 1u32..4) {
        let base = c.run(OptMode::Base).metrics;
        let power = c.run(OptMode::Power { max_active: s }).metrics;
        prop_assert_eq!(power.energy_pj, base.energy_pj);
        prop_assert!(power.latency_ns >= base.latency_ns);
        prop_assert!(power.peak_power_w <= base.peak_power_w);
        let density = c.run(OptMode::Density).metrics;
        prop_assert!(density.subarrays_used <= base.subarrays_used);
    }

    #[test]
    fn trace_energy_adds_up(c in case(), m in 0..4usize) {
        let run = c.run(MODES[m]);
        let sum: f64 = run.trace.iter().map(|e| e.energy_pj).sum();
        prop_assert!((sum - run.metrics.energy_pj).abs() <= 1e-9 * run.metrics.energy_pj.max(1.0));
        let steps = run.trace.iter().map(|e| e.step).collect::<std::collections::BTreeSet<_>>();
        let latency: f64 = steps
            .iter()
            .map(|s| run.trace.iter().filter(|e| e.step == *s).map(|e| e.latency_ns).fold(0.0, f64::max))
            .sum();
        prop_assert!((latency - run.metrics.latency_ns).abs() <= 1e-9 * latency.max(1.0));
    }

    #[test]
    fn every_stage_round_trips(c in case(), m in 0..4usize) {
        let arch = ArchSpec::with_subarray(c.size, c.size);
        let compiled = compile(&c.source(), &arch, &c.options(MODES[m])).unwrap();
        for (stage, module) in &compiled.stages {
            let text = print_module(module);
            let back = parse_module(&text).unwrap();
            prop_assert_eq!(&back, module, "{}", stage);
        }
    }

    #[test]
    fn binary_data_round_trips(bits in 1u8..=16, rows in 1usize..6, cols in 1usize..9, seed in any::<u64>()) {
        let elem = ElemType::Int(bits);
        let hi = (1i64 << bits) - 1;
        let vals: Vec<i64> = (0..rows * cols).map(|i| (seed.wrapping_mul(i as u64 + 1) % (hi as u64 + 1)) as i64).collect();
        let t = Tensor::from_ints([rows, cols], elem, vals).unwrap();
        prop_assert_eq!(&data::decode(&data::encode(&t).unwrap()).unwrap(), &t);
        prop_assert_eq!(&data::parse_text(&data::to_text(&t)).unwrap(), &t);
    }

    #[test]
    fn float_data_round_trips(vals in prop::collection::vec(-1.0e6f32..1.0e6, 1..20)) {
        let t = Tensor::from_floats([vals.len()], vals.iter().map(|&v| f64::from(v)).collect()).unwrap();
        prop_assert_eq!(&data::decode(&data::encode(&t).unwrap()).unwrap(), &t);
        prop_assert_eq!(&data::parse_text(&data::to_text(&t)).unwrap(), &t);
    }
}
