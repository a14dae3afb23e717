use std::path::{Path, PathBuf};
use std::process::Command;

use camforge::cli::{run, EXIT_COMPILE, EXIT_INPUT, EXIT_MISMATCH, EXIT_OK};
use camforge::data;
use camforge::ir::ElemType;
use camforge::sim::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn sample(name: &str) -> String {
    repo().join("samples").join(name).display().to_string()
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn camforge(args: &[&str]) -> Out {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("camforge").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Out {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn emitted(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn emit_all_matches_golden_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let r = camforge(&["compile", &sample("hdc.camk"), "--arch", &sample("baseline.camarch"), "--emit", "all", "-o", &out_dir]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let names = emitted(dir.path());
    assert_eq!(names.len(), 6, "{names:?}");
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for name in names {
        let got = std::fs::read_to_string(dir.path().join(&name)).unwrap();
        let path = golden.join(&name);
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::create_dir_all(&golden).unwrap();
            std::fs::write(&path, &got).unwrap();
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(got, want, "{name} differs from its golden copy");
    }
}

#[test]
fn emit_one_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let r = camforge(&["compile", &sample("hdc.camk"), "--arch", &sample("baseline.camarch"), "--emit", "cim-fused", "-o", &out_dir]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(emitted(dir.path()), ["hdc.cim-fused.ir"]);
}

#[test]
fn missing_arch_file() {
    let r = camforge(&["compile", &sample("hdc.camk"), "--arch", "/nonexistent/arch.camarch"]);
    assert_eq!(r.code, EXIT_COMPILE);
    assert!(r.stderr.contains("file not found"), "{}", r.stderr);
}

#[test]
fn kernel_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.camk");
    std::fs::write(&bad, "kernel k(a: i4[2x3], b: i4[2x3]) -> (i32[2x3]) {\n  m = matmul(a, b);\n  return m;\n}\n").unwrap();
    let r = camforge(&["compile", bad.to_str().unwrap(), "--arch", &sample("baseline.camarch")]);
    assert_eq!(r.code, EXIT_COMPILE);
    assert!(r.stderr.contains("bad.camk"), "{}", r.stderr);
}

fn hdc_data(dir: &Path, d: usize, n: usize, seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = |len: usize| (0..len).map(|_| rng.gen_range(0..2)).collect::<Vec<i64>>();
    let q = Tensor::from_ints([1, d], ElemType::I1, bits(d)).unwrap();
    let s = Tensor::from_ints([n, d], ElemType::I1, bits(n * d)).unwrap();
    let (qp, sp) = (dir.join(format!("q{seed}.bin")), dir.join(format!("s{seed}.bin")));
    data::save(&qp, &q).unwrap();
    data::save(&sp, &s).unwrap();
    (qp.display().to_string(), sp.display().to_string())
}

#[test]
fn hdc_report_on_32x32() {
    let dir = tempfile::tempdir().unwrap();
    let (q, s) = hdc_data(dir.path(), 8192, 10, 1);
    let r = camforge(&["simulate", &sample("hdc.camk"), &q, &s, "--arch", &sample("baseline.camarch"), "--check-oracle"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["subarrays_used", "256"]), "{}", r.stdout);
    assert!(r.stdout.contains("oracle check passed"));
}

#[test]
fn oracle_batch_passes() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = dir.path().join("small.camk");
    std::fs::write(
        &kernel,
        "kernel small(query: i1[1x100], hvs: i1[12x100]) -> (i32[1x2], i32[1x2]) {\n  t = transpose(hvs);\n  s = matmul(query, t);\n  v, i = topk(s, k=2);\n  return v, i;\n}\n",
    )
    .unwrap();
    let arch = dir.path().join("small.camarch");
    std::fs::write(&arch, "[hierarchy]\nsubarray_rows = 16\nsubarray_cols = 16\nselective_search = true\n").unwrap();
    let (kernel, arch) = (kernel.display().to_string(), arch.display().to_string());
    for seed in 0..100 {
        let (q, s) = hdc_data(dir.path(), 100, 12, seed);
        let mode = ["base", "power", "density", "power_density"][seed as usize % 4];
        let r = camforge(&["simulate", &kernel, &q, &s, "--arch", &arch, "--mode", mode, "--max-active", "2", "--check-oracle"]);
        assert_eq!(r.code, EXIT_OK, "seed {seed}: {}", r.stderr);
    }
}

#[test]
fn wrong_width_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (q, s) = hdc_data(dir.path(), 4096, 10, 2);
    let r = camforge(&["simulate", &sample("hdc.camk"), &q, &s, "--arch", &sample("baseline.camarch")]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("shape mismatch"), "{}", r.stderr);
}

#[test]
fn unfiltered_stage_against_exact_reference_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q: Vec<i64> = (0..64).map(|_| rng.gen_range(0..16)).collect();
    let mut db = Vec::new();
    for r in 0..40 {
        if r == 5 || r == 17 {
            db.extend(&q);
        } else {
            db.extend((0..64).map(|_| rng.gen_range(0..16)));
        }
    }
    let (qp, dp) = (dir.path().join("q.txt"), dir.path().join("db.txt"));
    data::save(&qp, &Tensor::from_ints([1, 64], ElemType::Int(4), q).unwrap()).unwrap();
    data::save(&dp, &Tensor::from_ints([40, 64], ElemType::Int(4), db).unwrap()).unwrap();
    let (qp, dp) = (qp.display().to_string(), dp.display().to_string());
    let base = ["simulate", &sample("knn.camk"), &qp, &dp, "--arch", &sample("baseline.camarch")];
    let flags = ["--device", "mcam", "--metric", "euclidean", "--match", "exact", "--check-oracle"];
    let mapped = camforge(&[&base[..], &flags[..]].concat());
    assert_eq!(mapped.code, EXIT_OK, "{}", mapped.stderr);
    assert!(mapped.stdout.contains("[5, 17, -1]"), "{}", mapped.stdout);
    // The fused stage still ranks every row, so the third slot is filled.
    let fused = camforge(&[&base[..], &flags[..], &["--stage", "cim-fused"][..]].concat());
    assert_eq!(fused.code, EXIT_MISMATCH, "{}", fused.stdout);
    assert!(fused.stderr.contains("oracle mismatch"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(camforge(&["simulate"]).code, EXIT_INPUT);
    assert_eq!(camforge(&["frobnicate"]).code, EXIT_INPUT);
    assert_eq!(camforge(&["--help"]).code, EXIT_OK);
}

#[test]
fn trace_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let (q, s) = hdc_data(dir.path(), 8192, 10, 4);
    let trace = dir.path().join("trace.csv");
    let r = camforge(&[
        "simulate",
        &sample("hdc.camk"),
        &q,
        &s,
        "--arch",
        &sample("baseline.camarch"),
        "--trace",
        trace.to_str().unwrap(),
        "--format",
        "csv",
        "--edp",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    let row: Vec<f64> = lines[1].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[6], row[0] * row[1]);
    let text = std::fs::read_to_string(trace).unwrap();
    assert_eq!(text.lines().next(), Some("step,level,handle,op,rows_active,latency_ns,energy_pj"));
    let energy: f64 = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((energy - row[1]).abs() < 1e-6 * row[1]);
}

#[test]
fn hdc_subarray_sweep() {
    let r = camforge(&["sweep", &sample("hdc.sweep.toml")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let subarrays: Vec<(String, u64)> = r
        .stdout
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[5].parse().unwrap())
        })
        .collect();
    let want = [
        ("16x16/base", 512),
        ("16x16/density", 512),
        ("32x32/base", 256),
        ("32x32/density", 86),
        ("64x64/base", 128),
        ("64x64/density", 22),
        ("128x128/base", 64),
        ("128x128/density", 6),
        ("256x256/base", 32),
        ("256x256/density", 2),
    ];
    let want: Vec<(String, u64)> = want.iter().map(|(c, n)| (c.to_string(), *n)).collect();
    assert_eq!(subarrays, want);
}

#[test]
fn single_point_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.toml");
    std::fs::write(&file, "[sweep]\nsizes = [64]\nmodes = [\"base\"]\ndim = 512\nentries = 8\n").unwrap();
    let r = camforge(&["sweep", file.to_str().unwrap(), "--edp"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(r.stdout.lines().count(), 2);
    assert!(r.stdout.starts_with("config,") && r.stdout.lines().nth(1).unwrap().starts_with("64x64/base,"));
}

#[test]
fn sweep_is_byte_identical_across_runs_and_jobs() {
    let exe = env!("CARGO_BIN_EXE_camforge");
    let file = sample("hdc.sweep.toml");
    let runs: Vec<Vec<u8>> = [None, Some("1"), Some("3"), None]
        .iter()
        .map(|jobs| {
            let mut cmd = Command::new(exe);
            cmd.args(["sweep", &file, "--edp"]);
            if let Some(j) = jobs {
                cmd.args(["--jobs", j]);
            }
            let out = cmd.output().unwrap();
            assert!(out.status.success());
            out.stdout
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn bad_sweep_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "[sweep]\nsizes = [8]\nmodes = [\"base\"]\ndim = 64\nentries = 4\n").unwrap();
    let r = camforge(&["sweep", file.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.stderr.contains("outside [16, 256]"), "{}", r.stderr);
}
