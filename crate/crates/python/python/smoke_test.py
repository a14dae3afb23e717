"""Smoke test for the camforge_py extension module.

Build the module first with maturin installed, e.g.
`pip install --no-build-isolation ./crates/python`, then run `python crates/python/python/smoke_test.py`.
"""

import random
import tempfile
from pathlib import Path

import camforge_py as cf

KERNEL = """
kernel hdc(query: i1[1x512], hvs: i1[10x512]) -> (i32[1x1], i32[1x1]) {
  t = transpose(hvs);
  s = matmul(query, t);
  v, i = topk(s, k=1);
  return v, i;
}
"""


def main():
    rng = random.Random(7)
    hvs = [rng.randint(0, 1) for _ in range(10 * 512)]
    query = hvs[3 * 512 : 4 * 512]
    inputs = [cf.Tensor([1, 512], "i1", query), cf.Tensor([10, 512], "i1", hvs)]

    arch = cf.Arch(32, 32)
    assert (arch.rows, arch.cols) == (32, 32)
    assert cf.Arch.from_toml(arch.to_toml()).to_toml() == arch.to_toml()

    prog = cf.compile(KERNEL, arch)
    assert prog.kernels == ["hdc"]
    assert prog.stages == ["tensor", "cim", "cim-fused", "cim-partitioned", "cam", "cam-mapped"]
    mapped = prog.ir("cam-mapped")
    assert "cam.search" in mapped
    assert cf.normalize_ir(mapped) == mapped
    assert cf.verify_ir(mapped) == []

    run = prog.simulate(inputs, trace=True)
    assert run.outputs[1].values == [3], run.outputs[1].values
    assert run.outputs == prog.reference(inputs)
    m = run.metrics
    assert m.subarrays_used == 16 and m.energy_pj > 0 and m.latency_ns > 0
    trace = run.trace()
    assert abs(sum(e["energy_pj"] for e in trace) - m.energy_pj) < 1e-6 * m.energy_pj
    assert {e["op"] for e in trace} <= {"write", "search", "activate"}

    power = cf.compile(KERNEL, arch, mode="power", max_active=1).simulate(inputs).metrics
    assert power.energy_pj == m.energy_pj and power.latency_ns > m.latency_ns

    assert abs(cf.search_latency(16, 16) - 0.86) < 1e-12
    assert abs(cf.search_latency(256, 256) - 7.5) < 1e-12

    with tempfile.TemporaryDirectory() as d:
        for name in ("q.bin", "q.txt"):
            path = Path(d) / name
            inputs[0].save(str(path))
            assert cf.Tensor.load(str(path)) == inputs[0]

    rows = cf.sweep('[sweep]\nsizes = [16, 32]\nmodes = ["base", "density"]\ndim = 8192\nentries = 10\n')
    assert [(c, r.subarrays_used) for c, r in rows] == [
        ("16x16/base", 512),
        ("16x16/density", 512),
        ("32x32/base", 256),
        ("32x32/density", 86),
    ]
    csv = cf.sweep_csv('[sweep]\nsizes = [64]\nmodes = ["base"]\ndim = 512\nentries = 8\n', edp=True)
    assert csv.splitlines()[0].endswith(",edp") and len(csv.splitlines()) == 2

    try:
        cf.compile("kernel k(a: i4[2x3], b: i4[2x3]) -> (i32[2x3]) {\n  m = matmul(a, b);\n  return m;\n}\n", arch)
    except cf.CompileError as e:
        assert "inner dimensions differ" in str(e), e
    else:
        raise AssertionError("shape mismatch not reported")

    print("smoke test passed")


if __name__ == "__main__":
    main()
