import json
import math

import numpy as np
import pytest

import mrlab


def test_eval_norm_grid_rules():
    values = np.array([[1.0], [-2.0], [3.0]])
    assert mrlab.eval_norm(values, "l1", grid_step=0.5) == pytest.approx(3.0)
    assert mrlab.eval_norm(values, "linf") == pytest.approx(3.0)
    assert mrlab.eval_norm(values, "euclidean") == pytest.approx(
        math.sqrt(14.0)
    )
    with pytest.raises(ValueError):
        mrlab.eval_norm(values, "no-such-kind")


def test_fit_regularity_recovers_power_law():
    records = []
    for i in range(10):
        x = 10.0 ** (-3 + 0.3 * i)
        records.append((x, 1.5 * x**0.75, x, True))
    fit = mrlab.fit_regularity(records, min_dist=1e-9)
    assert fit["beta"] == pytest.approx(0.75, abs=1e-9)
    assert fit["kappa"] == pytest.approx(1.5, rel=1e-6)
    assert fit["n_records"] == 10


def test_cone_residual_box_interior_and_face():
    lo = np.array([-1.0, -1.0])
    hi = np.array([1.0, 1.0])
    value, infeasible = mrlab.cone_residual(
        "box", np.array([0.0, 0.0]), np.array([0.3, -0.4]), lo=lo, hi=hi
    )
    assert not infeasible
    assert value == pytest.approx(0.5)
    # at the upper face the outward normal is admissible
    value, infeasible = mrlab.cone_residual(
        "box", np.array([1.0, 0.0]), np.array([0.3, 0.0]), lo=lo, hi=hi
    )
    assert not infeasible
    assert value == pytest.approx(0.0)


def test_list_problems_registry():
    problems = mrlab.list_problems()
    ids = {entry["id"] for entry in problems}
    assert len(problems) >= 7
    assert {
        "p1-quadratic-nlp",
        "p1-duplicated-constraint",
        "p2-energy-mayer",
        "p3-bangbang",
        "p3-tangential",
        "p4-parabolic-bang",
        "heat-analytic",
    } <= ids


def test_run_experiment_roundtrip(tmp_path):
    config = {
        "problem_id": "p1-quadratic-nlp",
        "experiment": "smsr",
        "seed": 3,
        "magnitudes": [1e-3, 1e-2, 1e-1],
        "directions": 5,
        "output_dir": "ignored",
    }
    out = mrlab.run_experiment(
        json.dumps(config), jobs=2, output_dir=str(tmp_path)
    )
    assert out["exit_code"] == 0
    records = (tmp_path / "records.csv").read_text().strip().splitlines()
    assert len(records) == 16  # header + 15 samples
    report = json.loads((tmp_path / "report.json").read_text())
    # 15 samples give a coarse slope estimate; this checks plumbing, the
    # tight exponent bounds live in the acceptance suite
    assert report["fit"]["beta"] == pytest.approx(1.0, abs=0.2)
    assert report["n_converged"] == 15


def test_run_experiment_unknown_problem(tmp_path):
    config = {
        "problem_id": "no-such-problem",
        "experiment": "smsr",
        "seed": 3,
        "magnitudes": [1e-2],
        "output_dir": str(tmp_path),
    }
    out = mrlab.run_experiment(json.dumps(config))
    assert out["exit_code"] == 2
    assert "p3-bangbang" in out["message"]
