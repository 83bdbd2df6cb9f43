import math
import os

import numpy as np
import pytest

import fbcl

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def test_flux_values():
    f = fbcl.Flux.quadratic_plus_one()
    assert f(2.0) == pytest.approx(5.0)
    assert f.derivative(2.0) == pytest.approx(4.0)
    assert fbcl.Flux.linear(1.5).a_lower == pytest.approx(1.5)


def test_rho_matches_brute_force():
    K = np.array([[0.0, 0.8], [0.2, 0.0]])
    value, scaling = fbcl.rho_p(K, fbcl.Norm.Linf)
    assert value == pytest.approx(0.4, abs=1e-6)
    assert fbcl.oracle.brute_force_rho(K, fbcl.Norm.Linf) == pytest.approx(value, abs=1e-3)
    assert len(scaling) == 2


def test_condstab_threshold():
    f = [fbcl.Flux.linear(1.0)]
    G = fbcl.FeedbackMap.linear(np.array([[0.5]]))
    box = fbcl.Box.symmetric(1, 2.0)
    assert fbcl.check_condstab(f, G, np.ones(1), 0.6, box, 256).passed
    bad = fbcl.check_condstab(f, G, np.ones(1), 0.8, box, 256)
    assert not bad.passed
    assert bad.to_dict()["verdict"] == "FailWithWitness"


def test_direct_loop_matches_exact_solution():
    g = fbcl.Grid.make(200)
    f = [fbcl.Flux.linear(1.0)]
    G = fbcl.FeedbackMap.linear(np.array([[0.5]]))
    u0 = fbcl.GridState.constant(np.ones(1), g)
    run = fbcl.run_direct(f, G, u0, 2.5, g)
    exact = fbcl.oracle.exact_linear_eval(np.ones(1), np.array([[0.5]]), [lambda x: 1.0], 2.5, 0.75)
    assert exact[0] == pytest.approx(0.25)
    assert run.final_state.values[0, -1] == pytest.approx(0.25, abs=1e-9)


def test_lyapunov_decay():
    g = fbcl.Grid.make(100)
    f = [fbcl.Flux.linear(1.0)]
    G = fbcl.FeedbackMap.linear(np.array([[0.5]]))
    u0 = fbcl.GridState.constant(np.ones(1), g)
    run = fbcl.run_direct(f, G, u0, 4.0, g, snapshot_stride=10)
    v = [fbcl.v_linf(s, np.ones(1), 0.5) for s in run.run.trajectory]
    assert v[-1] < v[0]


def test_errors_are_typed():
    with pytest.raises(fbcl.DomainError):
        fbcl.Grid.make(49)
    with pytest.raises(fbcl.Error):
        fbcl.Flux.linear(-1.0)


def test_certify_bundled_scenario():
    code, report = fbcl.certify(os.path.join(ROOT, "scenarios", "scalar_half_gain.json"))
    assert code == 0
    assert report["conditions"][0]["mu_star"] == pytest.approx(math.log(2.0), abs=2e-4)
