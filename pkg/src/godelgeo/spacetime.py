"""Gödel-type spacetimes M0 x R^2 with metric

    <.,.>_R + A(x) dy^2 + 2 B(x) dy dt - C(x) dt^2,   H = B^2 + A C > 0.

The base M0 is R^d with a Riemannian metric field g_R(x) (identity unless
given). Completeness of a user-supplied base metric is the caller's
responsibility; nothing here checks it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import LorentzViolation
from .exprfield import Expr, as_field, constant, tokenize

ZOO = ("godel", "godel_synge", "kerr_schild", "stationary", "static", "pfw", "custom")


@dataclass(frozen=True, eq=False)
class SpacetimeSpec:
    dim: int
    A: Expr
    B: Expr
    C: Expr
    base_metric: tuple[tuple[Expr, ...], ...] | None = None
    label: str = "custom"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("base dimension must be >= 1")
        for name in ("A", "B", "C"):
            if getattr(self, name).dim != self.dim:
                raise ValueError(f"coefficient {name} has the wrong dimension")
        if self.base_metric is not None:
            g = self.base_metric
            if len(g) != self.dim or any(len(row) != self.dim for row in g):
                raise ValueError(f"base_metric must be {self.dim}x{self.dim}")
            for i in range(self.dim):
                for j in range(i + 1, self.dim):
                    if g[i][j].to_text() != g[j][i].to_text():
                        raise ValueError(f"base_metric not symmetric at entry ({i + 1}, {j + 1})")

    @property
    def euclidean_base(self) -> bool:
        return self.base_metric is None

    def describe(self) -> dict:
        out = {
            "label": self.label,
            "dim": self.dim,
            "A": self.A.to_text(),
            "B": self.B.to_text(),
            "C": self.C.to_text(),
            "base_metric": None
            if self.base_metric is None
            else [[e.to_text() for e in row] for row in self.base_metric],
        }
        if self.params:
            out["params"] = {k: v for k, v in sorted(self.params.items())}
        return out


@dataclass(frozen=True)
class CoefficientSample:
    A: float
    B: float
    C: float
    H: float
    gradA: np.ndarray
    gradB: np.ndarray
    gradC: np.ndarray

    def __post_init__(self):
        H = self.B * self.B + self.A * self.C
        if abs(H - self.H) > 1e-12 * max(1.0, abs(H)):
            raise ValueError(f"inconsistent H: {self.H!r} != B^2 + AC = {H!r}")


@dataclass(frozen=True)
class SpectralData:
    lambda_plus: float
    lambda_minus: float
    mu: float
    frame: np.ndarray  # columns: unit eigenvectors for lambda_plus, lambda_minus


@dataclass(frozen=True)
class Coefficients:
    """Coefficient values (and optionally gradients) at a batch of points."""

    X: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    H: np.ndarray
    gA: np.ndarray | None = None
    gB: np.ndarray | None = None
    gC: np.ndarray | None = None

    @property
    def gH(self) -> np.ndarray:
        return (
            2.0 * self.B[:, None] * self.gB
            + self.A[:, None] * self.gC
            + self.C[:, None] * self.gA
        )


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def coefficients(spec: SpacetimeSpec, X, gradients: bool = True) -> Coefficients:
    """Evaluate A, B, C, H at the rows of X; raise LorentzViolation if H <= 0."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if gradients:
        A, gA = spec.A.eval_with_gradient(X)
        B, gB = spec.B.eval_with_gradient(X)
        C, gC = spec.C.eval_with_gradient(X)
    else:
        A, B, C = spec.A.evaluate(X), spec.B.evaluate(X), spec.C.evaluate(X)
        gA = gB = gC = None
    H = B * B + A * C
    bad = ~(H > 0.0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise LorentzViolation(X[i], H[i])
    return Coefficients(X, A, B, C, H, gA, gB, gC)


def sample_coefficients(spec: SpacetimeSpec, x) -> CoefficientSample:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (spec.dim,) or not np.isfinite(x).all():
        raise ValueError(f"x must be a finite {spec.dim}-vector")
    c = coefficients(spec, x.reshape(1, -1))
    return CoefficientSample(
        float(c.A[0]), float(c.B[0]), float(c.C[0]), float(c.H[0]),
        c.gA[0].copy(), c.gB[0].copy(), c.gC[0].copy(),
    )


def killing_matrix(sample: CoefficientSample) -> np.ndarray:
    return np.array([[sample.A, sample.B], [sample.B, -sample.C]])


def sym2_eigen(p, r, s):
    """Eigen-data of the symmetric matrices [[p, r], [r, s]] (array-valued).

    Returns (lam_plus, lam_minus, cos, sin) where (cos, sin) is the unit
    eigenvector of lam_plus with cos >= 0 (sin = +1 when cos = 0). The
    lam_minus eigenvector is (-sin, cos), so the frame has determinant +1.
    The smaller-magnitude eigenvalue is recovered from the determinant to
    avoid cancellation.
    """
    p, r, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (p, r, s)))
    half_tr = 0.5 * (p + s)
    rad = np.hypot(0.5 * (p - s), r)
    det = p * s - r * r
    with np.errstate(divide="ignore", invalid="ignore"):
        big_plus = half_tr + rad
        big_minus = half_tr - rad
        lam_plus = np.where(half_tr >= 0.0, big_plus, det / big_minus)
        lam_minus = np.where(half_tr >= 0.0, det / big_plus, big_minus)
    # zero matrix: both eigenvalues 0
    lam_plus = np.where(np.isfinite(lam_plus), lam_plus, big_plus)
    lam_minus = np.where(np.isfinite(lam_minus), lam_minus, big_minus)
    theta = 0.5 * np.arctan2(2.0 * r, p - s)
    c, sn = np.cos(theta), np.sin(theta)
    # arctan2 gives theta in (-pi/2, pi/2], so c >= 0 already; pin the tie exactly
    tie = theta >= 0.5 * math.pi
    c = np.where(tie, 0.0, c)
    sn = np.where(tie, 1.0, sn)
    return lam_plus, lam_minus, c, sn


def spectral(sample: CoefficientSample) -> SpectralData:
    lp, lm, c, s = sym2_eigen(sample.A, sample.B, -sample.C)
    lp, lm, c, s = float(lp), float(lm), float(c), float(s)
    Q = np.array([[c, -s], [s, c]])
    return SpectralData(lp, lm, -2.0 * lm, Q)


def mu_values(c: Coefficients) -> np.ndarray:
    """mu = C - A + sqrt((A + C)^2 + 4 B^2) = -2 Lambda_minus, batch form."""
    _, lm, _, _ = sym2_eigen(c.A, c.B, -c.C)
    return -2.0 * lm


# --------------------------------------------------------------------------
# Base metric and full-metric geometry
# --------------------------------------------------------------------------


def base_metric(spec: SpacetimeSpec, X, derivatives: bool = False):
    """g_R at the rows of X, shape (n, d, d); with derivatives also
    dg[n, i, j, k] = d g_ij / d x_k."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if spec.base_metric is None:
        g = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        return (g, np.zeros((n, d, d, d))) if derivatives else g
    g = np.empty((n, d, d))
    dg = np.empty((n, d, d, d)) if derivatives else None
    for i in range(d):
        for j in range(i, d):
            e = spec.base_metric[i][j]
            if derivatives:
                v, gr = e.eval_with_gradient(X)
                dg[:, i, j, :] = gr
                dg[:, j, i, :] = gr
            else:
                v = e.evaluate(X)
            g[:, i, j] = v
            g[:, j, i] = v
    w = np.linalg.eigvalsh(g)
    bad = ~(w[:, 0] > 0.0)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(f"base metric not positive definite at x={X[k].tolist()}")
    return (g, dg) if derivatives else g


def full_metric(spec: SpacetimeSpec, X):
    """Lorentzian metric on (x, y, t) and its x-derivatives.

    Returns G (n, d+2, d+2) and dG (n, d+2, d+2, d).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    g, dg = base_metric(spec, X, derivatives=True)
    c = coefficients(spec, X)
    G = np.zeros((n, d + 2, d + 2))
    dG = np.zeros((n, d + 2, d + 2, d))
    G[:, :d, :d] = g
    dG[:, :d, :d, :] = dg
    y, t = d, d + 1
    G[:, y, y], G[:, y, t], G[:, t, y], G[:, t, t] = c.A, c.B, c.B, -c.C
    dG[:, y, y], dG[:, y, t], dG[:, t, y], dG[:, t, t] = c.gA, c.gB, c.gB, -c.gC
    return G, dG


def geodesic_acceleration(spec: SpacetimeSpec, X, W) -> np.ndarray:
    """Second derivative of (x, y, t) along geodesics through X with velocity W.

    From d/ds(G w) - 1/2 grad_x(w^T G w) = 0, using first derivatives of the
    metric only. X is (n, d), W is (n, d+2).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    d = X.shape[1]
    G, dG = full_metric(spec, X)
    xdot = W[:, :d]
    dG_ds = np.einsum("nabk,nk->nab", dG, xdot)
    rhs = np.einsum("nab,nb->na", dG_ds, W)
    quad = np.einsum("na,nabk,nb->nk", W, dG, W)
    rhs[:, :d] -= 0.5 * quad
    return -np.linalg.solve(G, rhs[..., None])[..., 0]


# --------------------------------------------------------------------------
# Builtin zoo
# --------------------------------------------------------------------------

_FIELD_PARAMS = {
    "godel": (),
    "godel_synge": ("g", "h"),
    "kerr_schild": ("V",),
    "stationary": ("delta", "beta"),
    "static": ("beta",),
    "pfw": ("H0",),
    "custom": ("A", "B", "C"),
}
_OPTIONAL_PARAMS = {"stationary": {"delta": 0.0}}
_STRUCTURAL = ("dim", "base_metric", "constants", "label")
_PROBE = np.array([[-1.0], [0.0], [1.0]])


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def instantiate_builtin(name: str, params: Mapping[str, Any] | None = None) -> SpacetimeSpec:
    """Build a zoo spacetime.

    Field parameters accept numbers or expression strings. Other numeric
    parameters are bound as named constants inside those expressions, so
    ``static(beta="1 + abs(x1)^(2 + eps)", eps=0.25)`` works.
    """
    if name not in ZOO:
        raise ValueError(f"unknown spacetime {name!r}; expected one of {', '.join(ZOO)}")
    params = dict(params or {})
    field_names = _FIELD_PARAMS[name]
    for k, v in _OPTIONAL_PARAMS.get(name, {}).items():
        params.setdefault(k, v)
    missing = [k for k in field_names if k not in params]
    if name == "godel" and "omega" not in params:
        missing.append("omega")
    if missing:
        raise ValueError(f"{name}: missing parameter(s) {', '.join(missing)}")

    dim = params.get("dim", 2)
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ValueError(f"{name}: parameter 'dim' must be a positive integer")
    if name in ("godel", "godel_synge", "kerr_schild") and dim != 2:
        raise ValueError(f"{name}: base dimension is fixed at 2")

    consts = {k: float(v) for k, v in dict(params.get("constants", {})).items()}
    for k, v in params.items():
        if k in field_names or k in _STRUCTURAL:
            continue
        if not _is_number(v) or not math.isfinite(v):
            raise ValueError(f"{name}: parameter {k!r} must be a finite number")
        consts[k] = float(v)

    def fld(key: str) -> Expr:
        try:
            return as_field(params[key], dim, consts)
        except (ValueError, TypeError) as exc:
            raise ValueError(f"{name}: parameter {key!r}: {exc}") from exc

    base = None
    if params.get("base_metric") is not None:
        rows = params["base_metric"]
        base = tuple(tuple(as_field(e, dim, consts) for e in row) for row in rows)

    record = {k: v for k, v in params.items() if k not in ("base_metric",)}

    if name == "godel":
        w = float(params["omega"])
        if not w > 0:
            raise ValueError("godel: parameter 'omega' must be > 0")
        consts.setdefault("w", w)
        consts.setdefault("omega", w)
        A = as_field("-exp(2*sqrt(2)*w*x1)/2", 2, consts)
        B = as_field("-exp(sqrt(2)*w*x1)", 2, consts)
        C = constant(1.0, 2)
    elif name == "godel_synge":
        g, h = fld("g"), fld("h")
        for key, e in (("g", g), ("h", h)):
            if e.variables() - {0}:
                raise ValueError(f"godel_synge: {key} must depend on x1 only")
        probe = np.hstack([_PROBE, np.zeros((3, 1))])
        if not (g.evaluate(probe) > 0).all():
            raise ValueError("godel_synge: g must be positive")
        A = _neg(g)
        B = _neg(h)
        C = constant(1.0, 2)
    elif name == "kerr_schild":
        V = fld("V")
        A = as_field(f"1 + ({V.to_text()})", 2)
        B = V
        C = as_field(f"1 - ({V.to_text()})", 2)
    elif name == "stationary":
        A = constant(1.0, dim)
        B = fld("delta")
        C = fld("beta")
    elif name == "static":
        A = constant(1.0, dim)
        B = constant(0.0, dim)
        C = fld("beta")
    elif name == "pfw":
        raw = params["H0"]
        if isinstance(raw, str) and any(t.kind == "name" and t.text == "t" for t in tokenize(raw)):
            raise ValueError("pfw: H0 depends on t; only autonomous H0(x) gives a Gödel-type spacetime")
        H0 = fld("H0")
        A = constant(0.0, dim)
        B = constant(1.0, dim)
        C = _neg(H0)
    else:
        A, B, C = fld("A"), fld("B"), fld("C")
    return SpacetimeSpec(dim, A, B, C, base, label=name, params=record)


def _neg(e: Expr) -> Expr:
    return as_field(f"-({e.to_text()})", e.dim)


def minkowski_like(dim: int = 2) -> SpacetimeSpec:
    """A = C = 1, B = 0: flat, the simplest valid spacetime."""
    return instantiate_builtin("stationary", {"delta": 0.0, "beta": 1.0, "dim": dim})
