"""Smoke test of the presim_py extension module.

Build and install it first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml`
(or `pip install --no-build-isolation ./crates/py`), then run `python python/smoke_test.py`.
"""

import math
import tempfile
from pathlib import Path

import presim_py as ps


def main() -> None:
    cfg = ps.SimConfig(seed=3, institutions=10, cycles=200, mutation_probability=2.0)
    assert cfg.institutions == 10 and cfg.cycles == 200
    assert "mutation_probability" in ps.SimConfig.keys()
    try:
        ps.SimConfig(institutions=0)
    except ValueError:
        pass
    else:
        raise AssertionError("institutions=0 must be rejected")

    # step-wise
    sim = ps.Simulation(cfg)
    kinds = set()
    for _ in range(50):
        kinds.update(e["kind"] for e in sim.step())
    assert sim.cycle == 50
    assert sim.consistent()
    s = sim.sample()
    assert s["cycle"] == 50 and s["migrations_freq"] >= 0.0
    sim.advance()
    assert sim.finished and sim.cycle == 200
    print("events seen:", sorted(kinds))
    print("counters:", sim.counters())

    # whole runs are deterministic
    with tempfile.TemporaryDirectory() as tmp:
        a = ps.run(cfg, out_dir=tmp)
        assert (Path(tmp) / "metrics.csv").is_file()
    b = ps.run(cfg)
    assert a["metrics"] == b["metrics"]
    print(a["summary"])

    # fitter
    t = [float(x) for x in range(200, 5001, 10)]
    y = [3.8 * math.exp(-0.072 * math.sqrt(x)) + 0.19 for x in t]
    f = ps.fit("sqrt-exp", t, y, [0.01 * v for v in y])
    assert abs(f["params"]["c"] - 0.19) < 1e-6, f["report"]
    print(f["report"])

    assert ps.rank_risk([5, 9, 1], 0) == 50.0
    assert ps.classify(5.0, True) == "false_positive"
    assert ps.classify(80.0, False) == "false_negative"
    print("smoke test passed")


if __name__ == "__main__":
    main()
