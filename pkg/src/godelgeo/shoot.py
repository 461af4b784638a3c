"""Initial-value geodesics through the Killing reduction.

Along a geodesic the momenta of the Killing fields d/dy and d/dt,

    c1 = A y' + B t',    c2 = B y' - C t',

are constant, so y' and t' are algebraic functions of x. Only the base
coordinates obey a second-order ODE,

    x'' = 1/2 (grad A y'^2 + 2 grad B y' t' - grad C t'^2)    (Euclidean base),

with the base Christoffel terms added for a curved base metric. y and t are
carried along as quadratures by the same integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ExprDomainError, LorentzViolation
from .pathspace import base_distance
from .spacetime import SpacetimeSpec, base_metric, coefficients, mu_values, sample_coefficients

BLOWUP_SPEED = 1e12
MIN_STEP = 1e-12


@dataclass(frozen=True)
class InitialData:
    x0: np.ndarray
    v0: np.ndarray
    ydot0: float
    tdot0: float
    y0: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        for name in ("x0", "v0"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        vals = np.concatenate([self.x0, self.v0, [self.ydot0, self.tdot0, self.y0, self.t0]])
        if not np.isfinite(vals).all():
            raise ValueError("initial data must be finite")
        if self.x0.shape != self.v0.shape:
            raise ValueError("x0 and v0 must have the same length")


@dataclass(frozen=True)
class ConservedQuantities:
    c1: float
    c2: float
    E_z: float
    consistency: float = 0.0  # |x'|^2 + c1 y' + c2 t' - E_z at the initial point


@dataclass(frozen=True, eq=False)
class Trajectory:
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    y: np.ndarray
    t: np.ndarray
    ydot: np.ndarray
    tdot: np.ndarray
    c1_drift: np.ndarray
    c2_drift: np.ndarray
    Ez_drift: np.ndarray
    conserved: ConservedQuantities
    terminated: str  # "reached s_max" | "blow-up" | "H-violation"
    message: str = ""

    @property
    def drift(self) -> float:
        return float(max(self.c1_drift.max(), self.c2_drift.max(), self.Ez_drift.max()))

    def drift_report(self) -> dict:
        q = self.conserved
        return {
            "c1": q.c1, "c2": q.c2, "E_z": q.E_z,
            "c1_drift": float(self.c1_drift.max()),
            "c2_drift": float(self.c2_drift.max()),
            "Ez_drift": float(self.Ez_drift.max()),
            "s_end": float(self.s[-1]),
            "samples": int(self.s.size),
            "terminated": self.terminated,
            "message": self.message,
        }


def _sq_norm(spec: SpacetimeSpec, x, v) -> np.ndarray:
    x = np.atleast_2d(x)
    v = np.atleast_2d(v)
    if spec.euclidean_base:
        return np.sum(v * v, axis=1)
    g = base_metric(spec, x)
    return np.einsum("ni,nij,nj->n", v, g, v)


def conserved_from_velocity(spec: SpacetimeSpec, init: InitialData) -> ConservedQuantities:
    c = sample_coefficients(spec, init.x0)
    yd, td = init.ydot0, init.tdot0
    c1 = c.A * yd + c.B * td
    c2 = c.B * yd - c.C * td
    kin = float(_sq_norm(spec, init.x0, init.v0)[0])
    E = kin + c.A * yd * yd + 2.0 * c.B * yd * td - c.C * td * td
    return ConservedQuantities(c1, c2, E, kin + c1 * yd + c2 * td - E)


def fiber_velocities(spec: SpacetimeSpec, x, q: ConservedQuantities) -> tuple[float, float]:
    """Solve A y' + B t' = c1, B y' - C t' = c2 for (y', t')."""
    c = sample_coefficients(spec, x)
    return (
        (q.c1 * c.C + q.c2 * c.B) / c.H,
        (q.c1 * c.B - q.c2 * c.A) / c.H,
    )


def base_velocity_identity(spec: SpacetimeSpec, x, q: ConservedQuantities) -> float:
    """|x'|^2_R = E_z + (c2^2 A - c1^2 C - 2 c1 c2 B) / H. May be negative."""
    c = sample_coefficients(spec, x)
    return q.E_z + (q.c2 ** 2 * c.A - q.c1 ** 2 * c.C - 2.0 * q.c1 * q.c2 * c.B) / c.H


class _ReducedSystem:
    def __init__(self, spec: SpacetimeSpec, q: ConservedQuantities):
        self.spec = spec
        self.q = q
        self.d = spec.dim

    def rhs(self, u: np.ndarray) -> np.ndarray:
        d = self.d
        spec = self.spec
        x, v = u[:d], u[d:2 * d]
        xs = x.tolist()
        A, gA = spec.A.at_point(xs)
        B, gB = spec.B.at_point(xs)
        C, gC = spec.C.at_point(xs)
        H = B * B + A * C
        if not H > 0.0:
            raise LorentzViolation(x.copy(), H)
        c1, c2 = self.q.c1, self.q.c2
        yd = (c1 * C + c2 * B) / H
        td = (c1 * B - c2 * A) / H
        wa, wb, wc = 0.5 * yd * yd, yd * td, -0.5 * td * td
        force = np.array([wa * a + wb * b + wc * c for a, b, c in zip(gA, gB, gC)])
        if spec.euclidean_base:
            acc = force
        else:
            g, dg = base_metric(spec, x[None, :], derivatives=True)
            g, dg = g[0], dg[0]
            rhs = force - np.einsum("ijk,k,j->i", dg, v, v) + 0.5 * np.einsum("i,ijk,j->k", v, dg, v)
            acc = np.linalg.solve(g, rhs)
        out = np.empty_like(u)
        out[:d] = v
        out[d:2 * d] = acc
        out[2 * d] = yd
        out[2 * d + 1] = td
        return out

    def rk4(self, u: np.ndarray, h: float) -> np.ndarray:
        k1 = self.rhs(u)
        k2 = self.rhs(u + 0.5 * h * k1)
        k3 = self.rhs(u + 0.5 * h * k2)
        k4 = self.rhs(u + h * k3)
        return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_geodesic(
    spec: SpacetimeSpec,
    init: InitialData,
    s_max: float,
    *,
    step: float | None = None,
    tol: float = 1e-10,
    h_init: float = 1e-2,
    max_steps: int = 2_000_000,
) -> Trajectory:
    """RK4 on the reduced system from s = 0 to ``s_max``.

    With ``step`` the step is fixed (the last one is shortened to land on
    s_max). Otherwise the step adapts by step doubling with local error
    ``tol`` (mixed absolute/relative) and local extrapolation.
    Integration stops early on H <= 0 ("H-violation") or when the step
    collapses below 1e-12 or |x'| exceeds 1e12 ("blow-up").
    """
    if init.x0.shape != (spec.dim,):
        raise ValueError(f"x0 must be a {spec.dim}-vector")
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    q = conserved_from_velocity(spec, init)
    sysm = _ReducedSystem(spec, q)
    d = spec.dim
    u = np.concatenate([init.x0, init.v0, [init.y0, init.t0]])
    s = 0.0
    S, U = [0.0], [u.copy()]
    terminated, message = "reached s_max", ""
    h = step if step is not None else min(h_init, s_max)
    if step is not None and not step > 0:
        raise ValueError("step must be positive")
    n = 0
    try:
        with np.errstate(over="raise", invalid="raise"):
            while s < s_max and n < max_steps:
                n += 1
                h_try = min(h, s_max - s)
                if step is not None:
                    u_new = sysm.rk4(u, h_try)
                    h_next = h
                else:
                    u_full = sysm.rk4(u, h_try)
                    u_half = sysm.rk4(sysm.rk4(u, 0.5 * h_try), 0.5 * h_try)
                    scale = tol * (1.0 + np.abs(u_half))
                    err = float(np.max(np.abs(u_half - u_full) / scale)) / 15.0
                    if err > 1.0:
                        h = h_try * max(0.2, 0.9 * err ** -0.2)
                        if h < MIN_STEP:
                            terminated, message = "blow-up", f"step collapsed below {MIN_STEP:g} at s={s!r}"
                            break
                        continue
                    u_new = u_half + (u_half - u_full) / 15.0
                    h_next = h_try * min(4.0, 0.9 * err ** -0.2) if err > 0 else 4.0 * h_try
                    if h_try < h:  # shortened final step: keep the controller's h
                        h_next = max(h_next, h)
                if not np.isfinite(u_new).all():
                    terminated, message = "blow-up", f"non-finite state at s={s!r}"
                    break
                s = s + h_try if s + h_try < s_max else s_max
                u = u_new
                S.append(s)
                U.append(u.copy())
                h = h_next
                speed = math.sqrt(float(_sq_norm(spec, u[:d], u[d:2 * d])[0]))
                if speed > BLOWUP_SPEED:
                    terminated, message = "blow-up", f"|x'| = {speed:g} at s={s!r}"
                    break
    except LorentzViolation as exc:
        terminated, message = "H-violation", str(exc)
    except (ExprDomainError, FloatingPointError) as exc:
        terminated, message = "blow-up", str(exc)
    if terminated == "reached s_max" and s < s_max:
        terminated, message = "blow-up", f"max_steps={max_steps} exhausted at s={s!r}"
    return _assemble(spec, q, np.array(S), np.array(U), terminated, message)


def _assemble(spec, q, S, U, terminated, message) -> Trajectory:
    d = spec.dim
    X, V = U[:, :d], U[:, d:2 * d]
    c = coefficients(spec, X, gradients=False)
    yd = (q.c1 * c.C + q.c2 * c.B) / c.H
    td = (q.c1 * c.B - q.c2 * c.A) / c.H
    c1 = c.A * yd + c.B * td
    c2 = c.B * yd - c.C * td
    E = _sq_norm(spec, X, V) + c.A * yd * yd + 2.0 * c.B * yd * td - c.C * td * td
    return Trajectory(
        s=S, x=X, v=V, y=U[:, 2 * d], t=U[:, 2 * d + 1], ydot=yd, tdot=td,
        c1_drift=np.abs(c1 - q.c1), c2_drift=np.abs(c2 - q.c2), Ez_drift=np.abs(E - q.E_z),
        conserved=q, terminated=terminated, message=message,
    )


# --------------------------------------------------------------------------
# Completeness probe
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeReport:
    verdict: str  # "pass" | "fail" | "hypothesis-failed"
    growth_ok: bool
    growth_margin: float
    growth_worst_point: list
    inequality_ok: bool
    inequality_slack: float
    log_bound_ok: bool
    log_bound_slack: float
    lambda_bar: float
    k_bar: float
    blow_up: bool
    terminated: str
    s_end: float
    drift: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def completeness_probe(
    spec: SpacetimeSpec,
    init: InitialData,
    growth,
    s_max: float,
    **integrator,
) -> tuple[ProbeReport, Trajectory]:
    """Integrate and test the completeness argument sample by sample.

    Checks (i) 1/mu(x(s)) <= lam d^2(x(s), x0) + k, (ii) the pointwise bound
    |x'|^2 <= E_z + 2 (c1^2 + c2^2) / mu(x(s)), (iii) the Gronwall bound
    log(lam_bar int_0^s |x'| + k_bar) - log k_bar <= lam_bar s, and (iv)
    blow-up. ``growth`` is (lam, k, x0).
    """
    lam, k, x0 = growth
    if lam < 0:
        raise ValueError("growth rate lambda must be >= 0")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    traj = integrate_geodesic(spec, init, s_max, **integrator)
    q = traj.conserved
    c = coefficients(spec, traj.x, gradients=False)
    mu = mu_values(c)

    dist = base_distance(traj.x, x0)
    margin = lam * dist ** 2 + k - 1.0 / mu
    growth_tol = 1e-12 * np.maximum(1.0, np.abs(lam * dist ** 2 + k))
    worst = int(np.argmin(margin))
    growth_ok = bool(np.all(margin >= -growth_tol))

    csq = q.c1 ** 2 + q.c2 ** 2
    speed2 = _sq_norm(spec, traj.x, traj.v)
    bound = q.E_z + 2.0 * csq / mu
    slack = bound - speed2
    ineq_tol = traj.Ez_drift + 1e-12 * (1.0 + np.abs(bound))
    inequality_ok = bool(np.all(slack >= -ineq_tol))

    lam_bar = math.sqrt(2.0 * csq * lam)
    k_bar = math.sqrt(abs(q.E_z) + 2.0 * csq * max(k, 0.0)) + lam_bar * float(dist[0]) + 1.0
    length = cumulative_trapezoid(np.sqrt(np.maximum(speed2, 0.0)), traj.s, initial=0.0)
    lhs = np.log(lam_bar * length + k_bar) - math.log(k_bar)
    log_slack = lam_bar * traj.s - lhs
    log_ok = bool(np.all(log_slack >= -1e-9 * (1.0 + lam_bar * traj.s)))

    blow_up = traj.terminated == "blow-up"
    if not growth_ok:
        verdict = "hypothesis-failed"
    elif inequality_ok and log_ok and traj.terminated == "reached s_max":
        verdict = "pass"
    else:
        verdict = "fail"
    report = ProbeReport(
        verdict=verdict,
        growth_ok=growth_ok,
        growth_margin=float(margin[worst]),
        growth_worst_point=traj.x[worst].tolist(),
        inequality_ok=inequality_ok,
        inequality_slack=float(np.min(slack)),
        log_bound_ok=log_ok,
        log_bound_slack=float(np.min(log_slack)),
        lambda_bar=lam_bar,
        k_bar=k_bar,
        blow_up=blow_up,
        terminated=traj.terminated,
        s_end=float(traj.s[-1]),
        drift=traj.drift_report(),
    )
    return report, traj
