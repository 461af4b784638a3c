"""Discretized base paths and the reduced action on them.

A path is N+1 nodes on the uniform grid s_i = i/N with fixed endpoints.
Coefficient integrals (a, b, c, and h) use the composite trapezoid rule; the
kinetic term uses the midpoint rule on segment differences. Both are second
order and keep the gradient with respect to the nodes analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateL, ExprDomainError
from .spacetime import SpacetimeSpec, base_metric, coefficients, sym2_eigen

ELL_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class DiscretePath:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.ndim != 2 or nodes.shape[0] < 3:
            raise ValueError("a path needs at least 3 nodes (N >= 2 segments)")
        if not np.isfinite(nodes).all():
            raise ValueError("path nodes must be finite")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def x_p(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def x_q(self) -> np.ndarray:
        return self.nodes[-1]

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @classmethod
    def straight(cls, x_p, x_q, N: int) -> "DiscretePath":
        x_p = np.asarray(x_p, dtype=float).reshape(-1)
        x_q = np.asarray(x_q, dtype=float).reshape(-1)
        s = np.linspace(0.0, 1.0, N + 1)[:, None]
        return cls((1.0 - s) * x_p + s * x_q)

    def with_interior(self, interior) -> "DiscretePath":
        nodes = np.array(self.nodes)
        nodes[1:-1] = interior
        return DiscretePath(nodes)


@dataclass(frozen=True)
class BoundaryData:
    delta_y: float
    delta_t: float

    @classmethod
    def from_endpoints(cls, y_p, t_p, y_q, t_q) -> "BoundaryData":
        return cls(float(y_q) - float(y_p), float(t_q) - float(t_p))


@dataclass(frozen=True)
class PathFunctionals:
    a: float
    b: float
    c: float
    ell: float
    lam_plus: float
    lam_minus: float
    delta_plus: float
    delta_minus: float
    kinetic: float


def trapezoid_weights(N: int) -> np.ndarray:
    w = np.full(N + 1, 1.0 / N)
    w[0] = w[-1] = 0.5 / N
    return w


def _ratios(spec: SpacetimeSpec, nodes: np.ndarray, gradients: bool):
    """A/H, B/H, C/H at the nodes, with gradients if requested."""
    c = coefficients(spec, nodes, gradients=gradients)
    H = c.H
    vals = (c.A / H, c.B / H, c.C / H)
    if not gradients:
        return vals, None
    gH = c.gH
    grads = tuple(
        (g - (v / H)[:, None] * gH) / H[:, None] for v, g in zip((c.A, c.B, c.C), (c.gA, c.gB, c.gC))
    )
    return vals, grads


def kinetic_energy(spec: SpacetimeSpec, nodes: np.ndarray, gradient: bool = False):
    """int <x', x'>_R ds by the midpoint rule; optionally d/d(nodes), shape (N+1, d)."""
    N = nodes.shape[0] - 1
    seg = np.diff(nodes, axis=0)
    if spec.euclidean_base:
        kin = N * float(np.sum(seg * seg))
        if not gradient:
            return kin
        g = np.zeros_like(nodes)
        g[1:] += 2.0 * N * seg
        g[:-1] -= 2.0 * N * seg
        return kin, g
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    if not gradient:
        gm = base_metric(spec, mids)
        return N * float(np.einsum("ni,nij,nj->", seg, gm, seg))
    gm, dgm = base_metric(spec, mids, derivatives=True)
    kin = N * float(np.einsum("ni,nij,nj->", seg, gm, seg))
    gseg = 2.0 * N * np.einsum("nij,nj->ni", gm, seg)
    dmid = 0.5 * N * np.einsum("ni,nijk,nj->nk", seg, dgm, seg)
    g = np.zeros_like(nodes)
    g[1:] += gseg + dmid
    g[:-1] += -gseg + dmid
    return kin, g


def _integrals(spec: SpacetimeSpec, nodes: np.ndarray, gradients: bool):
    N = nodes.shape[0] - 1
    w = trapezoid_weights(N)
    vals, grads = _ratios(spec, nodes, gradients)
    abc = tuple(float(w @ v) for v in vals)
    dabc = None if grads is None else tuple(w[:, None] * g for g in grads)
    return abc, dabc


def path_integrals(
    spec: SpacetimeSpec, path: DiscretePath, boundary: BoundaryData | None = None
) -> PathFunctionals:
    """a, b, c, L = b^2 + ac, eigen-data of [[a, b], [b, -c]] and the kinetic term.

    ``delta_plus``/``delta_minus`` are the components of (delta_y, delta_t)
    in the eigenframe; both are 0 when no boundary is given.
    """
    (a, b, c), _ = _integrals(spec, path.nodes, gradients=False)
    kin = kinetic_energy(spec, path.nodes)
    lp, lm, cs, sn = (float(v) for v in sym2_eigen(a, b, -c))
    dy, dt = (0.0, 0.0) if boundary is None else (boundary.delta_y, boundary.delta_t)
    return PathFunctionals(
        a=a, b=b, c=c, ell=b * b + a * c,
        lam_plus=lp, lam_minus=lm,
        delta_plus=cs * dy + sn * dt,
        delta_minus=-sn * dy + cs * dt,
        kinetic=kin,
    )


def action_and_gradient(
    spec: SpacetimeSpec,
    nodes: np.ndarray,
    boundary: BoundaryData,
    ell_floor: float = ELL_FLOOR,
    gradient: bool = True,
):
    """Reduced action J at ``nodes`` and its gradient w.r.t. interior nodes.

    Returns (J, grad or None, L).
    """
    (a, b, c), dabc = _integrals(spec, nodes, gradients=gradient)
    ell = b * b + a * c
    if not abs(ell) > ell_floor:
        raise DegenerateL(ell, ell_floor)
    dy, dt = boundary.delta_y, boundary.delta_t
    F = dy * dy * a + 2.0 * dy * dt * b - dt * dt * c
    if not gradient:
        kin = kinetic_energy(spec, nodes)
        return 0.5 * kin + F / (2.0 * ell), None, ell
    kin, dkin = kinetic_energy(spec, nodes, gradient=True)
    da, db, dc = dabc
    dF = dy * dy * da + 2.0 * dy * dt * db - dt * dt * dc
    dL = 2.0 * b * db + a * dc + c * da
    grad = 0.5 * dkin + (dF * ell - F * dL) / (2.0 * ell * ell)
    return 0.5 * kin + F / (2.0 * ell), grad[1:-1], ell


def reduced_action(
    spec: SpacetimeSpec, path: DiscretePath, boundary: BoundaryData, ell_floor: float = ELL_FLOOR
) -> float:
    """J = |x'|^2/2 + (dy^2 a + 2 dy dt b - dt^2 c) / (2 L)."""
    return action_and_gradient(spec, path.nodes, boundary, ell_floor, gradient=False)[0]


def action_gradient(
    spec: SpacetimeSpec, path: DiscretePath, boundary: BoundaryData, ell_floor: float = ELL_FLOOR
) -> np.ndarray:
    """Exact gradient of the discretized J with respect to the interior nodes, (N-1, d)."""
    return action_and_gradient(spec, path.nodes, boundary, ell_floor)[1]


def diagonalized_action(
    spec: SpacetimeSpec, path: DiscretePath, boundary: BoundaryData, ell_floor: float = ELL_FLOOR
):
    """J written in the eigenframe of [[a, b], [b, -c]].

    Returns (J, delta_plus, delta_minus, lam_plus, lam_minus) with
    J = |x'|^2/2 - delta_plus^2 / (2 lam_minus) - delta_minus^2 / (2 lam_plus).
    """
    pf = path_integrals(spec, path, boundary)
    if not abs(pf.ell) > ell_floor:
        raise DegenerateL(pf.ell, ell_floor)
    J = (
        0.5 * pf.kinetic
        - pf.delta_plus ** 2 / (2.0 * pf.lam_minus)
        - pf.delta_minus ** 2 / (2.0 * pf.lam_plus)
    )
    return J, pf.delta_plus, pf.delta_minus, pf.lam_plus, pf.lam_minus


def static_reduced_action(spec: SpacetimeSpec, path: DiscretePath, boundary: BoundaryData) -> float:
    """Static functional |x'|^2/2 - (dt^2/2) (int 1/beta ds)^-1 with beta = C.

    Only the square of delta_t enters, so its sign convention is irrelevant.
    """
    nodes = path.nodes
    B = spec.B.evaluate(nodes)
    if np.any(B != 0.0):
        i = int(np.flatnonzero(B != 0.0)[0])
        raise ValueError(f"static functional needs B == 0; B={B[i]!r} at x={nodes[i].tolist()}")
    beta = spec.C.evaluate(nodes)
    bad = ~(beta > 0.0)
    if bad.any():
        raise ExprDomainError("beta = C must be positive", nodes[int(np.flatnonzero(bad)[0])])
    w = trapezoid_weights(path.N)
    inv = float(w @ (1.0 / beta))
    kin = kinetic_energy(spec, nodes)
    return 0.5 * kin - 0.5 * boundary.delta_t ** 2 / inv


def base_distance(X, x0) -> np.ndarray:
    """Euclidean coordinate distance; exact for the default base only."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.sqrt(np.sum((X - np.asarray(x0, dtype=float)) ** 2, axis=1))


def path_m_and_h(spec: SpacetimeSpec, path: DiscretePath, growth) -> tuple[float, float]:
    """m = max{a, -c} and h = int ds / (lam d^2(x(s), x0) + k).

    ``growth`` is (lam, k, x0).
    """
    lam, k, x0 = growth
    if lam < 0:
        raise ValueError("growth rate lambda must be >= 0")
    pf = path_integrals(spec, path)
    den = lam * base_distance(path.nodes, x0) ** 2 + k
    bad = ~(den > 0.0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"lambda d^2 + k = {den[i]!r} <= 0 at x={path.nodes[i].tolist()}"
        )
    h = float(trapezoid_weights(path.N) @ (1.0 / den))
    return max(pf.a, -pf.c), h
