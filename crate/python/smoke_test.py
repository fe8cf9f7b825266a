"""Smoke test for the `chns` extension module.

Build it first, either with maturin:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml

or with cargo, copying the library next to this script:

    cargo build --release -p chns-py --features extension-module
    cp target/release/libchns.so python/chns.so
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

import chns


def main():
    cfg = chns.Config()
    cfg.n = 16
    cfg.dt = 0.01
    print(cfg)

    sim = chns.Simulation(cfg, member=0)
    mass0 = sim.mass()
    e0 = sim.energy()["total"]
    sim.run_until(1.0)
    assert sim.steps == 100, sim.steps
    assert abs(sim.t - 1.0) < 1e-12
    assert abs(sim.mass() - mass0) < 1e-12
    assert sim.max_divergence() < 1e-12
    print(f"t = {sim.t:.2f}  energy {e0:.4f} -> {sim.energy()['total']:.4f}  norms {sim.norms()}")

    phi = np.array(sim.phi_grid())
    assert phi.shape == (16, 16)
    assert abs(phi.mean() - sim.mass()) < 1e-12

    again = chns.Simulation(cfg, member=0)
    again.step(100)
    assert np.array_equal(np.array(again.phi_grid()), phi), "same member must reproduce"

    rows = chns.check(chns.Config(open(config_path("default.ini")).read()))
    failed = [name for name, (ok, _) in rows.items() if not ok]
    assert not failed, failed
    adversarial = chns.check(chns.Config(open(config_path("adversarial.ini")).read()))
    assert not adversarial["C.3"][0]

    tri = chns.trilinear(n=16, pad=2, triples=5)
    assert tri["b0"] < 1e-11 and tri["b2"] < 1e-11
    aliased = chns.trilinear(n=16, pad=1, triples=5)
    assert aliased["b0"] > 1e-11

    times = [float(i) for i in range(11)]
    mean, var = chns.kb_average(times, [2.0] * 11, 0.0, 10.0)
    assert mean == 2.0 and var == 0.0
    prof = chns.tightness([0.5, 1.0, 4.0, 9.0], [1.0, 2.0, 3.0])
    assert all(f <= env for _, f, env in prof)

    try:
        chns.Config("[physics]\nnu2 = -1\n")
    except ValueError as e:
        assert "nu2" in str(e)
    else:
        raise AssertionError("negative nu2 accepted")

    print("smoke test passed")


def config_path(name):
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "configs", name)


if __name__ == "__main__":
    main()
