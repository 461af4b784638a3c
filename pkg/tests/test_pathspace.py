import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from godelgeo.errors import DegenerateL
from godelgeo.pathspace import (
    BoundaryData,
    DiscretePath,
    action_gradient,
    base_distance,
    diagonalized_action,
    path_integrals,
    path_m_and_h,
    reduced_action,
    static_reduced_action,
)
from godelgeo.spacetime import instantiate_builtin, minkowski_like
from oracles import central_diff_grad, direct_J, random_lorentz_spec, random_positive_spec, trapezoid_abc

W = 1 / math.sqrt(2)
GODEL = instantiate_builtin("godel", {"omega": W})


def const_path(x, N=8):
    return DiscretePath(np.tile(np.asarray(x, float), (N + 1, 1)))


def wiggly_path(rng, N, dim=2, amp=0.3):
    s = np.linspace(0, 1, N + 1)[:, None]
    xp, xq = rng.uniform(-1, 1, (2, dim))
    k = rng.integers(1, 3, dim)
    c = rng.uniform(-amp, amp, dim)
    return DiscretePath((1 - s) * xp + s * xq + c * np.sin(np.pi * k * s))


def test_path_validation():
    with pytest.raises(ValueError):
        DiscretePath(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        DiscretePath([[0.0, 0.0], [np.nan, 0.0], [1.0, 1.0]])
    p = DiscretePath.straight([0, 0], [1, 2], 4)
    assert p.N == 4 and p.dim == 2 and p.interior.shape == (3, 2)
    with pytest.raises(ValueError):
        p.nodes[0, 0] = 5.0


def test_boundary_from_endpoints():
    b = BoundaryData.from_endpoints(1.0, 2.0, 4.0, 1.5)
    assert (b.delta_y, b.delta_t) == (3.0, -0.5)


def test_minkowski_integrals():
    pf = path_integrals(minkowski_like(), wiggly_path(np.random.default_rng(0), 16))
    assert (pf.a, pf.b, pf.c, pf.ell) == (1.0, 0.0, 1.0, 1.0)


def test_constant_path_integrals():
    spec = instantiate_builtin("custom", {"A": "1 + x1^2", "B": "x2", "C": "2"})
    x0 = [0.7, -0.2]
    pf = path_integrals(spec, const_path(x0))
    A, B, C = 1 + 0.49, -0.2, 2.0
    H = B * B + A * C
    assert (pf.a, pf.b, pf.c) == pytest.approx((A / H, B / H, C / H), rel=1e-14)
    assert pf.kinetic == 0.0


def test_godel_constant_path_integrals():
    pf = path_integrals(GODEL, const_path([0.0, 0.0]))
    assert (pf.a, pf.b, pf.c, pf.ell) == pytest.approx((-1, -2, 2, 2), abs=1e-14)


def test_reduced_action_examples():
    M = minkowski_like()
    straight = DiscretePath.straight([0, 0], [1, 0], 8)
    assert reduced_action(M, straight, BoundaryData(2, 1)) == pytest.approx(2.0, abs=1e-15)
    p = wiggly_path(np.random.default_rng(1), 16)
    pf = path_integrals(M, p)
    assert reduced_action(M, p, BoundaryData(0, 0)) == pytest.approx(pf.kinetic / 2, rel=1e-15)
    assert reduced_action(GODEL, const_path([0, 0]), BoundaryData(1, 0)) == pytest.approx(-0.25, abs=1e-15)


def test_static_action_examples():
    unit = DiscretePath.straight([0.0], [1.0], 8)
    flat = instantiate_builtin("static", {"dim": 1, "beta": 1})
    assert static_reduced_action(flat, unit, BoundaryData(0, 1)) == pytest.approx(0.0, abs=1e-15)
    beta0 = instantiate_builtin("static", {"dim": 1, "beta": "1 + abs(x1)^(2+eps)", "eps": 0})
    assert static_reduced_action(beta0, unit, BoundaryData(0, 0)) == pytest.approx(0.5)
    assert static_reduced_action(beta0, const_path([2.0]), BoundaryData(0, 1)) == pytest.approx(-2.5)
    # sign of delta_t is irrelevant
    assert static_reduced_action(beta0, const_path([2.0]), BoundaryData(0, -1)) == pytest.approx(-2.5)
    with pytest.raises(ValueError, match="B == 0"):
        static_reduced_action(GODEL, const_path([0, 0]), BoundaryData(0, 1))


def test_static_action_matches_general_reduction_when_delta_y_zero():
    # with B = 0, A = 1 the general J at delta_y = 0 is |x'|^2/2 - dt^2 c / (2 a c) = |x'|^2/2 - dt^2 / (2 a)
    spec = instantiate_builtin("static", {"beta": "2 + sin(x1)*x2"})
    p = wiggly_path(np.random.default_rng(5), 32, amp=0.2)
    bd = BoundaryData(0.0, 1.3)
    assert static_reduced_action(spec, p, bd) == pytest.approx(reduced_action(spec, p, bd), rel=1e-13)


def test_diagonal_case():
    M = minkowski_like()
    p = DiscretePath.straight([0, 0], [0.3, 0.4], 8)
    J, dp, dm, lp, lm = diagonalized_action(M, p, BoundaryData(2.0, 1.0))
    assert (dp, dm, lp, lm) == (2.0, 1.0, 1.0, -1.0)
    assert J == pytest.approx(0.125 + 2.0 - 0.5, rel=1e-15)


def test_godel_constant_path_eigenvalues():
    _, _, _, lp, lm = diagonalized_action(GODEL, const_path([0, 0]), BoundaryData(1, 0))
    r = math.sqrt(17)
    assert lp == pytest.approx((-3 + r) / 2, rel=1e-14)
    assert lm == pytest.approx((-3 - r) / 2, rel=1e-14)
    assert lp * lm == pytest.approx(-2.0, rel=1e-14)


def test_identities_on_random_instances():
    rng = np.random.default_rng(2024)
    count = 0
    while count < 1000:
        spec = random_lorentz_spec(rng) if count % 2 else random_positive_spec(rng)
        p = wiggly_path(rng, int(rng.integers(2, 12)))
        bd = BoundaryData(*rng.normal(size=2))
        pf = path_integrals(spec, p, bd)
        if abs(pf.ell) <= 1e-6:
            continue
        count += 1
        scale = max(1.0, abs(pf.ell))
        assert abs(pf.ell - (pf.b ** 2 + pf.a * pf.c)) <= 1e-12 * scale
        assert abs(pf.ell + pf.lam_plus * pf.lam_minus) <= 1e-12 * scale
        if pf.ell > 0:
            assert pf.lam_plus >= max(pf.a, -pf.c) - 1e-14 * scale
        Jd = reduced_action(spec, p, bd)
        Jg = diagonalized_action(spec, p, bd)[0]
        assert abs(Jd - Jg) <= 1e-12 * max(1.0, abs(Jd))


def test_reduced_action_matches_independent_oracle():
    rng = np.random.default_rng(8)
    for _ in range(20):
        spec = random_lorentz_spec(rng)
        p = wiggly_path(rng, 24)
        dy, dt = rng.normal(size=2)
        assert reduced_action(spec, p, BoundaryData(dy, dt)) == pytest.approx(
            direct_J(spec, p.nodes, dy, dt), rel=1e-12
        )
        a, b, c = trapezoid_abc(spec, p.nodes)
        pf = path_integrals(spec, p)
        assert (pf.a, pf.b, pf.c) == pytest.approx((a, b, c), rel=1e-12, abs=1e-14)


def test_gradient_zero_on_flat_straight_path():
    p = DiscretePath.straight([0, 0], [1, 0], 16)
    g = action_gradient(minkowski_like(), p, BoundaryData(2, 1))
    assert np.max(np.abs(g)) < 1e-14


def test_constant_coefficients_have_no_fiber_gradient():
    spec = instantiate_builtin("kerr_schild", {"V": 0.5})
    p = wiggly_path(np.random.default_rng(3), 16)
    g1 = action_gradient(spec, p, BoundaryData(3.0, -2.0))
    g0 = action_gradient(spec, p, BoundaryData(0.0, 0.0))
    assert np.array_equal(g1, g0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(50)
    for trial in range(50):
        spec = random_lorentz_spec(rng) if trial % 2 else random_positive_spec(rng)
        p = wiggly_path(rng, 10)
        bd = BoundaryData(*rng.normal(size=2))
        g = action_gradient(spec, p, bd)
        flat = p.interior.reshape(-1)

        def J(v):
            return reduced_action(spec, p.with_interior(v.reshape(p.interior.shape)), bd)

        fd = central_diff_grad(J, flat).reshape(g.shape)
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(fd)))


def _fitted_order(Ns, values):
    e = np.abs(np.diff(values))
    return -np.polyfit(np.log2(Ns[:-1]), np.log2(e), 1)[0]


def test_quadrature_convergence_order():
    spec = instantiate_builtin("custom", {"A": "1.5 + 0.3*sin(2*x1)", "B": "0.2*cos(x2)", "C": "1 + 0.2*x1*x2"})
    bd = BoundaryData(0.7, 0.4)

    def curve(N):
        s = np.linspace(0, 1, N + 1)
        return DiscretePath(np.column_stack([np.sin(2 * s), s + 0.3 * np.sin(np.pi * s) ** 2]))

    Ns = [16, 32, 64, 128, 256]
    J = [reduced_action(spec, curve(N), bd) for N in Ns]
    a = [path_integrals(spec, curve(N)).a for N in Ns]
    assert _fitted_order(Ns, J) >= 1.9
    assert _fitted_order(Ns, a) >= 1.9


def test_midpoint_refinement_changes_j_within_quadrature_scale():
    spec = random_positive_spec(np.random.default_rng(12))
    p = wiggly_path(np.random.default_rng(13), 32)
    refined = np.empty((65, 2))
    refined[::2] = p.nodes
    refined[1::2] = 0.5 * (p.nodes[1:] + p.nodes[:-1])
    bd = BoundaryData(0.5, 0.5)
    J1 = reduced_action(spec, p, bd)
    J2 = reduced_action(spec, DiscretePath(refined), bd)
    assert abs(J1 - J2) < 10 / 32 ** 2


def test_degenerate_l():
    spec = instantiate_builtin("custom", {"A": 0, "B": 1, "C": 0})
    # a = c = 0, b = 1: L = 1, fine
    assert reduced_action(spec, const_path([0, 0]), BoundaryData(1, 1)) == pytest.approx(1.0)
    M = minkowski_like()
    with pytest.raises(DegenerateL):
        reduced_action(M, const_path([0, 0]), BoundaryData(1, 1), ell_floor=2.0)


def _godel_straight(u, N=400):
    return DiscretePath.straight([-u, 0.0], [u, 0.0], N)


def test_godel_straight_path_crosses_zero_l():
    # continuum: L = 4 tanh(u)/u - 2 on x1 in [-u, u], zero at tanh u = u/2 (u ~ 1.915)
    lo, hi = 1.5, 2.5
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if path_integrals(GODEL, _godel_straight(mid)).ell > 0:
            lo = mid
        else:
            hi = mid
    assert lo == pytest.approx(1.915, abs=2e-3)
    assert 4 * math.tanh(lo) / lo - 2 == pytest.approx(0.0, abs=1e-4)
    assert path_integrals(GODEL, _godel_straight(lo - 0.1)).ell > 0
    assert path_integrals(GODEL, _godel_straight(lo + 0.1)).ell < 0
    with pytest.raises(DegenerateL) as info:
        reduced_action(GODEL, _godel_straight(lo), BoundaryData(1, 0))
    assert abs(info.value.ell) <= 1e-10


def test_path_m_and_h_examples():
    p = wiggly_path(np.random.default_rng(4), 16)
    m, h = path_m_and_h(minkowski_like(), p, (0.0, 1.0, [0, 0]))
    assert (m, h) == (1.0, 1.0)
    m, _ = path_m_and_h(GODEL, const_path([0, 0]), (0.0, 1.0, [0, 0]))
    assert m == pytest.approx(-1.0, abs=1e-14)
    beta0 = instantiate_builtin("static", {"beta": "1 + x1^2 + x2^2"})
    s = np.linspace(0, 1, 33)
    disk = DiscretePath(0.9 * np.column_stack([np.cos(4 * s), np.sin(4 * s)]) * s[:, None])
    _, h = path_m_and_h(beta0, disk, (1.0, 1.0, [0, 0]))
    assert h >= 0.5
    with pytest.raises(ValueError, match="<= 0"):
        path_m_and_h(beta0, disk, (1.0, 0.0, [0, 0]))
    with pytest.raises(ValueError):
        path_m_and_h(beta0, disk, (-1.0, 1.0, [0, 0]))


def test_base_distance():
    assert base_distance([[3, 4], [0, 0]], [0, 0]).tolist() == [5.0, 0.0]


@given(st.integers(2, 40), st.floats(-3, 3), st.floats(-3, 3))
def test_minkowski_j_formula(N, dy, dt):
    p = DiscretePath.straight([0, 0], [0.6, 0.8], N)
    J = reduced_action(minkowski_like(), p, BoundaryData(dy, dt))
    assert J == pytest.approx(0.5 + (dy * dy - dt * dt) / 2, abs=1e-12)
