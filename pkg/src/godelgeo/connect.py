"""Two-point geodesic problem via the reduced action.

The base path is found by minimizing the discretized J over interior nodes;
the fiber coordinates y(s), t(s) then follow from two quadratures. The
result is checked against the full geodesic equations of the Lorentzian
metric.

Normalization: J keeps the 1/2 on the kinetic term while the full action
f = int <z', z'>_L ds has none, so on assembled curves f = 2 J
(``ACTION_FACTOR``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .errors import DegenerateL, ExprDomainError, LorentzViolation
from .pathspace import (
    ELL_FLOOR,
    BoundaryData,
    DiscretePath,
    action_and_gradient,
    path_integrals,
)
from .spacetime import SpacetimeSpec, base_metric, coefficients, geodesic_acceleration

log = logging.getLogger(__name__)

ACTION_FACTOR = 2.0
STALL_STEPS = 5
CURVATURE = 0.9


def quadrature_tol(N: int) -> float:
    """Nominal error scale of the second-order rules on N segments."""
    return 1.0 / N ** 2


@dataclass(frozen=True)
class SolverConfig:
    N: int = 64
    max_iters: int = 2000
    grad_tol: float = 1e-8
    restarts: int = 4
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    ell_floor: float = ELL_FLOOR
    seed: int = 0
    restart_every: int = 50
    perturbation: float = 0.1

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.max_iters < 1 or self.restarts < 1 or self.restart_every < 1:
            raise ValueError("max_iters, restarts and restart_every must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if not (self.grad_tol > 0 and self.sufficient_decrease > 0 and self.ell_floor > 0):
            raise ValueError("grad_tol, sufficient_decrease and ell_floor must be positive")


@dataclass(frozen=True)
class RestartRecord:
    index: int
    status: str  # converged | max_iters | stalled | degenerate | invalid
    J: float
    grad_norm: float
    iterations: int
    message: str = ""


@dataclass(frozen=True, eq=False)
class GeodesicSolution:
    path: DiscretePath
    y_curve: np.ndarray | None
    t_curve: np.ndarray | None
    action_J: float
    action_f: float
    residual: float
    converged: bool
    iterations: int
    status: str
    grad_norm: float
    boundary: BoundaryData
    history: tuple = ()
    restarts: tuple = field(default=())

    def curve(self) -> np.ndarray:
        """Assembled (x, y, t) samples, shape (N+1, d+2)."""
        return np.column_stack([self.path.nodes, self.y_curve, self.t_curve])

    def diagnostics(self) -> dict:
        return {
            "J": self.action_J,
            "f": self.action_f,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "grad_norm": self.grad_norm,
            "N": self.path.N,
            "restarts": [r.__dict__ for r in self.restarts],
        }


# --------------------------------------------------------------------------
# Fiber reconstruction, full action, residual
# --------------------------------------------------------------------------


def reconstruct_fibers(
    spec: SpacetimeSpec, path: DiscretePath, endpoints, ell_floor: float = ELL_FLOOR
) -> tuple[np.ndarray, np.ndarray]:
    """y(s), t(s) on the grid for the base path, given (y_p, t_p, y_q, t_q)."""
    y_p, t_p, y_q, t_q = (float(v) for v in endpoints)
    dy, dt = y_q - y_p, t_q - t_p
    pf = path_integrals(spec, path)
    if not abs(pf.ell) > ell_floor:
        raise DegenerateL(pf.ell, ell_floor)
    c = coefficients(spec, path.nodes, gradients=False)
    dx = 1.0 / path.N
    IA = cumulative_trapezoid(c.A / c.H, dx=dx, initial=0.0)
    IB = cumulative_trapezoid(c.B / c.H, dx=dx, initial=0.0)
    IC = cumulative_trapezoid(c.C / c.H, dx=dx, initial=0.0)
    k1 = (dy * pf.b - dt * pf.c) / pf.ell
    k2 = (dy * pf.a + dt * pf.b) / pf.ell
    y = y_p + k1 * IB + k2 * IC
    t = t_p - k1 * IA + k2 * IB
    return y, t


def full_action(spec: SpacetimeSpec, curve) -> float:
    """Midpoint rule for int <x',x'>_R + A y'^2 + 2B y' t' - C t'^2 ds.

    ``curve`` is an (N+1, d+2) array of (x, y, t) on the uniform grid.
    """
    Z = np.asarray(curve, dtype=float)
    N = Z.shape[0] - 1
    d = spec.dim
    V = N * np.diff(Z, axis=0)
    mids = 0.5 * (Z[:-1, :d] + Z[1:, :d])
    g = base_metric(spec, mids)
    c = coefficients(spec, mids, gradients=False)
    vx, vy, vt = V[:, :d], V[:, d], V[:, d + 1]
    dens = np.einsum("ni,nij,nj->n", vx, g, vx) + c.A * vy ** 2 + 2.0 * c.B * vy * vt - c.C * vt ** 2
    return float(np.sum(dens) / N)


def geodesic_residual(spec: SpacetimeSpec, solution_or_curve) -> float:
    """Sup over interior nodes of |z'' - a(z, z')| / (1 + |z'|^2) by central differences."""
    Z = solution_or_curve.curve() if isinstance(solution_or_curve, GeodesicSolution) else solution_or_curve
    Z = np.asarray(Z, dtype=float)
    N = Z.shape[0] - 1
    d = spec.dim
    Zs = 0.5 * N * (Z[2:] - Z[:-2])
    Zss = N * N * (Z[2:] - 2.0 * Z[1:-1] + Z[:-2])
    acc = geodesic_acceleration(spec, Z[1:-1, :d], Zs)
    defect = np.max(np.abs(Zss - acc), axis=1) / (1.0 + np.sum(Zs * Zs, axis=1))
    return float(np.max(defect))


def initial_velocity(solution: GeodesicSolution) -> np.ndarray:
    """Base velocity at s = 0 by the second-order one-sided difference."""
    X = solution.path.nodes
    N = solution.path.N
    return 0.5 * N * (-3.0 * X[0] + 4.0 * X[1] - X[2])


def action_identity_defect(solution: GeodesicSolution) -> float:
    """|2J - f| / (1 + |f|)."""
    f = solution.action_f
    return abs(ACTION_FACTOR * solution.action_J - f) / (1.0 + abs(f))


# --------------------------------------------------------------------------
# Descent
# --------------------------------------------------------------------------


class _Sobolev:
    """Inverse of the kinetic Hessian N * tridiag(-1, 2, -1) on interior nodes.

    Preconditioning with it turns the Euclidean node gradient into the H^1
    gradient, which removes the N^2 conditioning of the discrete Laplacian.
    """

    def __init__(self, N: int):
        n = N - 1
        ab = np.zeros((3, n))
        ab[0, 1:] = -N
        ab[1, :] = 2.0 * N
        ab[2, :-1] = -N
        self.ab = ab

    def __call__(self, g: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self.ab, g)


class _Aborted(Exception):
    pass


def _descend(spec, path0: DiscretePath, boundary, cfg: SolverConfig, index: int):
    N = path0.N
    nodes = np.array(path0.nodes)
    P = _Sobolev(N)

    def evaluate(interior):
        nodes[1:-1] = interior
        return action_and_gradient(spec, nodes, boundary, cfg.ell_floor)

    x = np.array(path0.interior)
    try:
        J, g, ell = evaluate(x)
    except DegenerateL as exc:
        return None, RestartRecord(index, "degenerate", float("nan"), float("nan"), 0, str(exc)), ()
    except (LorentzViolation, ExprDomainError) as exc:
        return None, RestartRecord(index, "invalid", float("nan"), float("nan"), 0, str(exc)), ()
    sign0 = np.sign(ell)
    z = P(g)
    d = -z
    steepest = True
    history = [J]
    status = "max_iters"
    it = 0
    flat = 0  # consecutive accepted steps that lowered neither J nor |g|
    while True:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= cfg.grad_tol:
            status = "converged"
            break
        if it >= cfg.max_iters:
            break
        slope = float(np.sum(g * d))
        if not slope < 0.0:
            d, steepest = -z, True
            slope = float(np.sum(g * d))
        alpha = 1.0
        accepted = None
        while alpha > 1e-14:
            trial = x + alpha * d
            try:
                Jt, gt, ellt = evaluate(trial)
            except DegenerateL as exc:
                nodes[1:-1] = x
                return None, RestartRecord(index, "degenerate", J, gnorm, it, str(exc)), tuple(history)
            except (LorentzViolation, ExprDomainError):
                alpha *= cfg.shrink
                continue
            if np.sign(ellt) == sign0:
                if Jt <= J + cfg.sufficient_decrease * alpha * slope:
                    accepted = (trial, Jt, gt)
                    break
                # approximate Wolfe: no increase in J (the Armijo decrease is below
                # rounding) but the slope along d has dropped
                if Jt <= J and abs(float(np.sum(gt * d))) <= CURVATURE * abs(slope):
                    accepted = (trial, Jt, gt)
                    break
            alpha *= cfg.shrink
        if accepted is None:
            if steepest:
                status = "stalled"
                break
            d, steepest = -z, True
            continue
        it += 1
        x_new, J_new, g_new = accepted
        progress = J_new < J or float(np.max(np.abs(g_new))) < gnorm
        flat = 0 if progress else flat + 1
        if flat >= STALL_STEPS:
            x, J, g = x_new, J_new, g_new
            history.append(J)
            status = "stalled"
            break
        z_new = P(g_new)
        beta = max(0.0, float(np.sum(g_new * (z_new - z))) / float(np.sum(g * z)))
        if it % cfg.restart_every == 0:
            beta = 0.0
        d = -z_new + beta * d
        steepest = beta == 0.0
        x, J, g, z = x_new, J_new, g_new, z_new
        history.append(J)
    nodes[1:-1] = x
    gnorm = float(np.max(np.abs(g)))
    if status == "stalled" and gnorm <= cfg.grad_tol:
        status = "converged"
    rec = RestartRecord(index, status, float(J), gnorm, it)
    return DiscretePath(nodes), rec, tuple(history)


def initial_paths(x_p, x_q, cfg: SolverConfig, dim: int):
    """Straight segment, then sinusoidal perturbations of it (seeded)."""
    base = DiscretePath.straight(x_p, x_q, cfg.N)
    yield base
    rng = np.random.default_rng(cfg.seed)
    s = base.s[:, None]
    amp = cfg.perturbation * max(1.0, float(np.linalg.norm(base.x_q - base.x_p)))
    for _ in range(1, cfg.restarts):
        nodes = np.array(base.nodes)
        for k in (1, 2):
            nodes += amp / k * np.sin(k * np.pi * s) * rng.normal(size=dim)
        yield DiscretePath(nodes)


def minimize_action(
    spec: SpacetimeSpec,
    x_p,
    x_q,
    boundary: BoundaryData,
    config: SolverConfig | None = None,
    *,
    y_p: float = 0.0,
    t_p: float = 0.0,
) -> GeodesicSolution:
    """Critical base path of J between x_p and x_q, lifted to a geodesic.

    Runs nonlinear conjugate gradient (Polak-Ribiere+, Armijo backtracking,
    H^1-preconditioned) from ``config.restarts`` initial paths and keeps the
    lowest converged J. Nonconvergence is reported through ``converged`` and
    ``status``; a restart whose |L| reaches the floor is aborted and recorded.
    """
    cfg = config or SolverConfig()
    x_p = np.asarray(x_p, dtype=float).reshape(-1)
    x_q = np.asarray(x_q, dtype=float).reshape(-1)
    if x_p.shape != (spec.dim,) or x_q.shape != (spec.dim,):
        raise ValueError(f"endpoints must be {spec.dim}-vectors")
    records, results = [], []
    for i, p0 in enumerate(initial_paths(x_p, x_q, cfg, spec.dim)):
        path, rec, hist = _descend(spec, p0, boundary, cfg, i)
        records.append(rec)
        log.debug("restart %d: %s J=%r |g|=%r after %d iterations", i, rec.status, rec.J, rec.grad_norm, rec.iterations)
        if path is not None:
            results.append((rec, path, hist))

    endpoints = (y_p, t_p, y_p + boundary.delta_y, t_p + boundary.delta_t)
    if not results:
        status = "degenerate" if any(r.status == "degenerate" for r in records) else "invalid"
        return GeodesicSolution(
            path=DiscretePath.straight(x_p, x_q, cfg.N), y_curve=None, t_curve=None,
            action_J=float("nan"), action_f=float("nan"), residual=float("nan"),
            converged=False, iterations=sum(r.iterations for r in records), status=status,
            grad_norm=float("nan"), boundary=boundary, restarts=tuple(records),
        )

    pool = [r for r in results if r[0].status == "converged"] or results
    best = pool[0]
    for cand in pool[1:]:
        if cand[0].J < best[0].J - 1e-12 * (1.0 + abs(best[0].J)):
            best = cand
    rec, path, hist = best
    y, t = reconstruct_fibers(spec, path, endpoints, cfg.ell_floor)
    curve = np.column_stack([path.nodes, y, t])
    return GeodesicSolution(
        path=path, y_curve=y, t_curve=t,
        action_J=rec.J, action_f=full_action(spec, curve),
        residual=geodesic_residual(spec, curve),
        converged=rec.status == "converged", iterations=rec.iterations, status=rec.status,
        grad_norm=rec.grad_norm, boundary=boundary, history=hist, restarts=tuple(records),
    )
