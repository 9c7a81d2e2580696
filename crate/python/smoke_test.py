"""Smoke test for the ifenn_py extension module.

Build it first, e.g.

    cargo build --release -p ifenn-py --features extension-module
    cp target/release/libifenn_py.so python/ifenn_py.so
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import ifenn_py as m

BCS = json.dumps({
    "left": {"theta": 10, "displacement": [0, None]},
    "right": {"theta": 50, "displacement": [0, None]},
})

TRAINING = json.dumps({
    "network": {
        "architecture": {"kind": "tcn", "n_filters": 2, "kernel_size": 2, "dilations": [1, 2]},
        "rff": {"n_frequencies": 2, "sigma": 0.1, "seed": 4},
    },
    "optimizer": {"max_iterations": 5},
    "ansatz": {"lift": {"kind": "bar", "theta_left": 10, "theta_right": 50, "length": 1}, "output_scale": 10},
    "seed": 1,
})


def main():
    assert m.receptive_field(11, [1, 2, 4, 8]) == 301

    mesh = m.Mesh.bar(20)
    assert (mesh.dim, mesh.n_nodes, mesh.n_elements) == (1, 21, 20)
    assert sorted(mesh.tags()) == ["left", "right"]

    problem = m.Problem(mesh, BCS, 1.0, 1e4, 10)
    coupled = problem.solve_coupled()
    assert len(coupled.times) == 10
    assert coupled.n_unknowns == 2 * mesh.n_nodes
    final = coupled.theta[-1]
    assert abs(final[0] - 10) < 1e-12 and abs(final[-1] - 50) < 1e-12

    oracle = problem.run_ifenn(oracle_theta=coupled.theta)
    assert oracle.n_unknowns == coupled.n_unknowns - mesh.n_nodes
    err = m.error_metrics(oracle.displacement(0), coupled.displacement(0))
    scale = max(abs(v) for row in coupled.displacement(0) for v in row)
    assert err["max_abs"][0] <= 1e-10 * scale

    model = problem.train(coupled, TRAINING)
    assert model.kind == "pi_tcn" and model.n_params > 0
    run = problem.run_ifenn(model=model, training=coupled)
    for row in run.theta:
        assert abs(row[0] - 10) < 1e-12 and abs(row[-1] - 50) < 1e-12

    eps, grid = problem.landscape(model, coupled, n_per_axis=3, seed=2)
    assert eps == [-1.0, 0.0, 1.0]
    assert grid[1][1] == model.final_loss()["total"]

    x, f, _ = m.minimize(lambda x: ((x[0] - 3) ** 2, [2 * (x[0] - 3)]), [0.0])
    assert math.isclose(x[0], 3.0, abs_tol=1e-6) and f < 1e-10

    try:
        m.Problem(mesh, json.dumps({"nowhere": {"theta": 1}}), 1.0, 10.0, 2)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown tag accepted")

    print("ifenn_py smoke test passed")


if __name__ == "__main__":
    main()
