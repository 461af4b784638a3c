import math

import numpy as np
import pytest

from godelgeo.connect import (
    ACTION_FACTOR,
    GeodesicSolution,
    SolverConfig,
    action_identity_defect,
    full_action,
    geodesic_residual,
    initial_velocity,
    minimize_action,
    quadrature_tol,
    reconstruct_fibers,
)
from godelgeo.errors import DegenerateL
from godelgeo.pathspace import BoundaryData, DiscretePath, reduced_action
from godelgeo.shoot import InitialData, integrate_geodesic
from godelgeo.spacetime import instantiate_builtin, minkowski_like

W = 1 / math.sqrt(2)
GODEL = instantiate_builtin("godel", {"omega": W})


def test_config_validation():
    for bad in ({"N": 1}, {"shrink": 1.0}, {"grad_tol": 0}, {"restarts": 0}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_minkowski_example():
    sol = minimize_action(minkowski_like(), [0, 0], [1, 0], BoundaryData(2, 1), SolverConfig(N=64))
    assert sol.converged and sol.status == "converged"
    assert sol.action_J == pytest.approx(2.0, abs=1e-12)
    assert sol.residual < 1e-8
    s = sol.path.s
    assert np.allclose(sol.path.nodes, np.column_stack([s, 0 * s]), atol=1e-12)
    assert np.allclose(sol.y_curve, 2 * s, atol=1e-12)
    assert np.allclose(sol.t_curve, s, atol=1e-12)
    assert sol.action_f == pytest.approx(4.0, abs=1e-12)
    assert ACTION_FACTOR * sol.action_J == pytest.approx(sol.action_f, abs=1e-12)


def test_kerr_schild_constant_example():
    spec = instantiate_builtin("kerr_schild", {"V": 0.5})
    sol = minimize_action(spec, [0, 0], [1, 0], BoundaryData(2, 1))
    assert sol.converged
    assert np.max(np.abs(sol.path.nodes[:, 1])) < 1e-10
    assert sol.residual < 1e-8


def test_reconstruct_fibers_examples():
    p = DiscretePath.straight([0, 0], [1, 1], 16)
    y, t = reconstruct_fibers(minkowski_like(), p, (1.0, 2.0, 4.0, 0.0))
    assert np.allclose(y, 1 + 3 * p.s, atol=1e-14)
    assert np.allclose(t, 2 - 2 * p.s, atol=1e-14)
    y, t = reconstruct_fibers(GODEL, p, (0.5, -1.0, 0.5, -1.0))
    assert np.all(y == 0.5) and np.all(t == -1.0)
    const = DiscretePath(np.zeros((9, 2)))
    y, _ = reconstruct_fibers(GODEL, const, (0.0, 0.0, 1.0, 0.0))
    assert np.allclose(y, const.s, atol=1e-14)


def test_reconstruct_fibers_degenerate():
    with pytest.raises(DegenerateL):
        reconstruct_fibers(minkowski_like(), DiscretePath(np.zeros((5, 2))), (0, 0, 1, 1), ell_floor=5.0)


def test_endpoint_exactness_random():
    rng = np.random.default_rng(1)
    spec = instantiate_builtin("custom", {"A": "1.2 + 0.4*sin(x1)", "B": "0.3*x2", "C": "1 + 0.1*x1^2"})
    for _ in range(50):
        N = int(rng.integers(2, 100))
        nodes = rng.normal(size=(N + 1, 2))
        ends = rng.normal(scale=5, size=4)
        y, t = reconstruct_fibers(spec, DiscretePath(nodes), ends)
        assert abs(y[-1] - ends[2]) < 1e-9 and abs(t[-1] - ends[3]) < 1e-9
        assert y[0] == ends[0] and t[0] == ends[1]


def test_full_action_examples():
    s = np.linspace(0, 1, 9)
    M = minkowski_like()
    curve = np.column_stack([s, 0 * s, 2 * s, s])
    assert full_action(M, curve) == pytest.approx(4.0, abs=1e-14)
    null = np.column_stack([0 * s, 0 * s, s, s])
    assert full_action(M, null) == 0.0


def test_residual_detects_corruption():
    sol = minimize_action(minkowski_like(), [0, 0], [1, 0], BoundaryData(2, 1), SolverConfig(N=32))
    Z = sol.curve()
    Z[16, 0] += 0.1
    assert geodesic_residual(minkowski_like(), Z) > 1e-2
    assert geodesic_residual(minkowski_like(), sol) < 1e-8


def _shot_curve(spec, init, N, sub=8):
    traj = integrate_geodesic(spec, init, 1.0, step=1.0 / (sub * N))
    idx = slice(None, None, sub)
    return traj, np.column_stack([traj.x[idx], traj.y[idx], traj.t[idx]])


def test_shot_trajectory_residual_is_second_order():
    init = InitialData(x0=[0.1, -0.2], v0=[0.6, 0.3], ydot0=0.4, tdot0=0.7)
    res = []
    for N in (32, 64, 128):
        _, Z = _shot_curve(GODEL, init, N)
        assert Z.shape == (N + 1, 4)
        res.append(geodesic_residual(GODEL, Z))
    order = np.log2(res[0] / res[1]), np.log2(res[1] / res[2])
    assert min(order) > 1.8


def test_descent_is_monotone_and_converges_on_curved_spec():
    spec = instantiate_builtin("custom", {"A": "1.5 + 0.3*sin(x1 + x2)", "B": "0.2*cos(x2)", "C": "1 + 0.2*sin(x1)"})
    sol = minimize_action(spec, [0, 0], [1, 0.5], BoundaryData(1.0, 0.5), SolverConfig(N=32, grad_tol=1e-10))
    assert sol.converged
    h = np.array(sol.history)
    assert h.size > 2 and np.all(np.diff(h) <= 0)
    assert sol.action_J == h[-1]
    assert action_identity_defect(sol) < 10 * quadrature_tol(32)
    assert sol.action_J == pytest.approx(reduced_action(spec, sol.path, sol.boundary), rel=1e-14)


def test_nonconvergence_is_reported():
    spec = instantiate_builtin("custom", {"A": "1.5 + 0.3*sin(x1 + x2)", "B": "0.2*cos(x2)", "C": "1 + 0.2*sin(x1)"})
    sol = minimize_action(spec, [0, 0], [1, 0.5], BoundaryData(1.0, 0.5), SolverConfig(N=32, max_iters=2, restarts=1))
    assert not sol.converged
    assert sol.status == "max_iters"
    assert sol.iterations == 2
    d = sol.diagnostics()
    assert d["converged"] is False and d["restarts"][0]["status"] == "max_iters"


def test_all_restarts_degenerate():
    sol = minimize_action(
        minkowski_like(), [0, 0], [1, 0], BoundaryData(1, 1), SolverConfig(N=8, restarts=3, ell_floor=2.0)
    )
    assert sol.status == "degenerate" and not sol.converged
    assert sol.y_curve is None and math.isnan(sol.action_J)
    assert [r.status for r in sol.restarts] == ["degenerate"] * 3


def test_restarts_are_deterministic():
    cfg = SolverConfig(N=24, restarts=3, seed=5)
    spec = instantiate_builtin("custom", {"A": "2 + sin(x1)", "B": "0.1*x2", "C": "1.5"})
    a = minimize_action(spec, [0, 0], [1, 1], BoundaryData(0.5, 0.2), cfg)
    b = minimize_action(spec, [0, 0], [1, 1], BoundaryData(0.5, 0.2), cfg)
    assert np.array_equal(a.curve(), b.curve())
    assert a.diagnostics() == b.diagnostics()


def test_endpoint_shape_validation():
    with pytest.raises(ValueError):
        minimize_action(minkowski_like(), [0, 0, 0], [1, 0], BoundaryData(0, 0))


def test_round_trip_single_godel_geodesic():
    init = InitialData(x0=[0.2, -0.1], v0=[0.5, -0.4], ydot0=0.3, tdot0=0.8)
    N = 128
    traj, Z = _shot_curve(GODEL, init, N)
    bd = BoundaryData(Z[-1, 2] - Z[0, 2], Z[-1, 3] - Z[0, 3])
    sol = minimize_action(GODEL, Z[0, :2], Z[-1, :2], bd, SolverConfig(N=N, grad_tol=1e-9), y_p=Z[0, 2], t_p=Z[0, 3])
    assert sol.converged
    assert isinstance(sol, GeodesicSolution)
    assert np.max(np.abs(sol.path.nodes - Z[:, :2])) < 1e-4
    v = initial_velocity(sol)
    assert np.linalg.norm(v - init.v0) / np.linalg.norm(init.v0) < 1e-4
    J_shot = reduced_action(GODEL, DiscretePath(Z[:, :2]), bd)
    assert abs(sol.action_J - J_shot) < 1e-6
    assert np.allclose(sol.y_curve, Z[:, 2], atol=1e-4)
    assert np.allclose(sol.t_curve, Z[:, 3], atol=1e-4)
