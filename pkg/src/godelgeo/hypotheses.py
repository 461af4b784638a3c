"""Sampling-based checks of the growth and sign conditions behind the
connectedness and completeness results for Gödel-type spacetimes.

Every check samples the base on concentric shells around a center. A PASS
is evidence only. A FAIL always carries a concrete sample point that
violates the stated inequality. Conditions that quantify over all H^1
paths are tested through pointwise sufficient criteria; when those do not
decide, the verdict is INCONCLUSIVE.

Distances are Euclidean coordinate distances, which are the Riemannian
distance only for the default flat base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .exprfield import Expr, as_field
from .pathspace import base_distance
from .spacetime import SpacetimeSpec, coefficients, mu_values

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
CAVEAT = "sampling-based; PASS is evidence, not proof"
FAIL_RTOL = 1e-12


def _violates(value, bound):
    """value > bound by more than the round-off allowance."""
    return value - bound > FAIL_RTOL * np.maximum(1.0, np.abs(bound))


# --------------------------------------------------------------------------
# Sampling region
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Region:
    center: np.ndarray
    radii: tuple = tuple(np.geomspace(0.1, 100.0, 13).tolist())
    samples_per_shell: int = 16
    seed: int = 0

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        if c.size < 1 or not np.isfinite(c).all():
            raise ValueError("center must be a finite vector")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        r = tuple(float(v) for v in self.radii)
        if not r or r[0] <= 0 or any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("radii must be positive and strictly increasing")
        object.__setattr__(self, "radii", r)
        if self.samples_per_shell < 1:
            raise ValueError("samples_per_shell must be >= 1")

    @property
    def dim(self) -> int:
        return self.center.size

    def shells(self) -> list[tuple[float, np.ndarray]]:
        """[(radius, points)], starting with the center itself at radius 0."""
        d, n = self.dim, self.samples_per_shell
        rng = np.random.default_rng(self.seed)
        out = [(0.0, self.center[None, :].copy())]
        for R in self.radii:
            if d == 1:
                dirs = np.array([[-1.0], [1.0]])
            elif d == 2:
                phase = rng.random()
                ang = 2.0 * math.pi * (np.arange(n) + phase) / n
                dirs = np.column_stack([np.cos(ang), np.sin(ang)])
            else:
                u = qmc.Halton(d, scramble=True, seed=rng).random(n)
                g = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
                dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
            out.append((R, self.center + R * dirs))
        return out

    def points(self) -> np.ndarray:
        return np.vstack([p for _, p in self.shells()])

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "radii": list(self.radii),
            "samples_per_shell": self.samples_per_shell,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class GrowthWitness:
    lam: float
    k: float
    x0: np.ndarray

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lambda must be finite and >= 0")
        if not math.isfinite(self.k):
            raise ValueError("k must be finite")
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "k", float(self.k))

    def bound(self, X, power: float = 2.0) -> np.ndarray:
        return self.lam * base_distance(X, self.x0) ** power + self.k

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "k": self.k, "x0": self.x0.tolist()}


@dataclass(frozen=True)
class HypothesisReport:
    condition: str
    verdict: str
    witness: dict
    worst_point: list | None
    margin: float
    shells: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    caveat: str = CAVEAT

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "witness": self.witness,
            "worst_point": self.worst_point,
            "margin": self.margin,
            "shells": self.shells,
            "caveat": self.caveat,
            "details": self.details,
        }


# --------------------------------------------------------------------------
# Growth sweeps
# --------------------------------------------------------------------------

FieldLike = Expr | str | float | Callable[[np.ndarray], np.ndarray]


def _field_fn(f: FieldLike, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    if callable(f) and not isinstance(f, Expr):
        return f
    return as_field(f, dim).evaluate


def check_quadratic_growth(
    f: FieldLike,
    region: Region,
    witness: GrowthWitness,
    *,
    power: float = 2.0,
    condition: str = "growth",
) -> HypothesisReport:
    """f(x) <= lam d(x, x0)^power + k at every sample.

    FAIL reports the first violating sample in shell order. Each shell
    also records sup f / (d^power + 1), which exposes super-quadratic trends.
    """
    fn = _field_fn(f, region.dim)
    shells, first_bad = [], None
    worst_margin, worst_point = math.inf, None
    for idx, (R, X) in enumerate(region.shells()):
        vals = np.asarray(fn(X), dtype=float)
        bound = witness.bound(X, power)
        margin = bound - vals
        bad = _violates(vals, bound)
        j = int(np.argmin(margin))
        if margin[j] < worst_margin:
            worst_margin, worst_point = float(margin[j]), X[j].tolist()
        if first_bad is None and bad.any():
            i = int(np.flatnonzero(bad)[0])
            first_bad = (X[i].tolist(), float(margin[i]), float(vals[i]), float(bound[i]))
        dist = base_distance(X, witness.x0)
        shells.append({
            "index": idx,
            "radius": R,
            "samples": int(X.shape[0]),
            "max_value": float(np.max(vals)),
            "min_margin": float(margin[j]),
            "growth_ratio": float(np.max(vals / (dist ** power + 1.0))),
            "violations": int(np.count_nonzero(bad)),
        })
    wit = {**witness.to_dict(), "power": power}
    if first_bad is not None:
        point, m, v, b = first_bad
        return HypothesisReport(
            condition, FAIL, wit, point, m, shells,
            {"value": v, "bound": b, "worst_margin": worst_margin},
        )
    return HypothesisReport(condition, PASS, wit, worst_point, worst_margin, shells)


def fit_growth_witness(
    f: FieldLike, region: Region, x0=None, *, power: float = 2.0, inner: int = 3, pad: bool = False
) -> GrowthWitness:
    """Least-squares (lam, k) over the center and innermost shells, then k
    raised so the bound holds on those samples. Always re-verify with a sweep.

    ``pad`` returns (2 lam, 2|k| + 1) instead: inner fits underestimate
    fields that saturate slowly far out.
    """
    fn = _field_fn(f, region.dim)
    x0 = region.center if x0 is None else np.asarray(x0, dtype=float)
    X = np.vstack([p for _, p in region.shells()[: inner + 1]])
    v = np.asarray(fn(X), dtype=float)
    r = base_distance(X, x0) ** power
    design = np.column_stack([r, np.ones_like(r)])
    (lam, _), *_ = np.linalg.lstsq(design, v, rcond=None)
    lam = max(float(lam), 0.0)
    k = float(np.max(v - lam * r))
    if pad:
        lam, k = 2.0 * lam, 2.0 * abs(k) + 1.0
    return GrowthWitness(lam, k, x0)


# --------------------------------------------------------------------------
# Spec-derived fields
# --------------------------------------------------------------------------


def _ratios(spec: SpacetimeSpec, X):
    c = coefficients(spec, X, gradients=False)
    return c.A / c.H, c.B / c.H, c.C / c.H


def inverse_mu(spec: SpacetimeSpec) -> Callable[[np.ndarray], np.ndarray]:
    return lambda X: 1.0 / mu_values(coefficients(spec, X, gradients=False))


def h_over_a_minus_c(spec: SpacetimeSpec) -> Callable[[np.ndarray], np.ndarray]:
    def f(X):
        c = coefficients(spec, X, gradients=False)
        return c.H / (c.A - c.C)
    return f


def _all_points(region: Region):
    X = region.points()
    return X, base_distance(X, region.center)


def _argmin_point(X, v):
    j = int(np.argmin(v))
    return X[j].tolist(), float(v[j])


# --------------------------------------------------------------------------
# Path-space conditions via pointwise criteria
# --------------------------------------------------------------------------


def check_h2(spec: SpacetimeSpec, region: Region) -> HypothesisReport:
    """L(x) >= nu > 0 on all paths, via pointwise bounds on A/H, B/H, C/H.

    inf A/H = alpha0 > 0 and inf C/H = gamma0 > 0 give a >= alpha0 and
    c >= gamma0 on every path, so L >= alpha0 gamma0. If B/H has a fixed
    sign with inf |B|/H = beta0 and A/H, C/H >= 0, then L >= beta0^2 +
    alpha0 gamma0 as well. Never FAIL.
    """
    X, _ = _all_points(region)
    a, b, c = _ratios(spec, X)
    alpha0, gamma0 = float(a.min()), float(c.min())
    nu = nu_sharp = None
    if alpha0 > 0 and gamma0 > 0:
        nu = alpha0 * gamma0
    if (np.all(b > 0) or np.all(b < 0)) and alpha0 >= 0 and gamma0 >= 0:
        beta0 = float(np.abs(b).min())
        nu_sharp = beta0 ** 2 + alpha0 * gamma0
        if nu is None and nu_sharp > 0:
            nu = nu_sharp
    details = {"alpha0": alpha0, "gamma0": gamma0, "nu_sharp": nu_sharp}
    worst, _ = _argmin_point(X, np.minimum(a, c))
    if nu is not None and nu > 0:
        return HypothesisReport("h2", PASS, {"nu": nu}, worst, nu, details=details)
    return HypothesisReport("h2", INCONCLUSIVE, {"nu": None}, worst, min(alpha0, gamma0), details=details)


def check_negative_L(spec: SpacetimeSpec, region: Region) -> HypothesisReport:
    """L(x) <= -nu < 0 on all paths.

    A constant path at x* has L = (B^2 + AC)/H^2 = 1/H(x*) > 0, so the
    condition fails on every Lorentzian spec; the report carries the
    sample with the smallest such L as the counterexample.
    """
    X, _ = _all_points(region)
    c = coefficients(spec, X, gradients=False)
    L_const = 1.0 / c.H
    j = int(np.argmin(L_const))
    return HypothesisReport(
        "L_negative", FAIL, {"nu": None}, X[j].tolist(), -float(L_const[j]),
        details={"constant_path_L": float(L_const[j])},
    )


def check_h3(spec: SpacetimeSpec, region: Region, witness: GrowthWitness) -> HypothesisReport:
    """m(x) >= h(x) > 0 on all paths, with m = max{a, -c} and
    h = int ds / (lam d^2(x(s), x0) + k).

    FAIL: a constant path at a sample x* with max{A/H, -C/H}(x*) below
    1/(lam d^2(x*, x0) + k); constant paths are legitimate H^1 paths.
    PASS: A/H >= 1/(lam d^2 + k) at every sample (then a >= h on every
    path), or the same for -C/H. When k > 0 this covers the cruder test
    inf A/H >= 1/k. Otherwise INCONCLUSIVE.
    """
    shells, first_bad = [], None
    slack_A, slack_C = math.inf, math.inf
    worst_A = worst_C = None
    for idx, (R, X) in enumerate(region.shells()):
        a, _, c = _ratios(spec, X)
        den = witness.bound(X)
        if np.any(den <= 0):
            i = int(np.flatnonzero(den <= 0)[0])
            raise ValueError(f"lambda d^2 + k = {den[i]!r} <= 0 at x={X[i].tolist()}")
        h_pt = 1.0 / den
        m_pt = np.maximum(a, -c)
        bad = _violates(h_pt, m_pt)
        if first_bad is None and bad.any():
            i = int(np.flatnonzero(bad)[0])
            first_bad = (X[i].tolist(), float(m_pt[i] - h_pt[i]), float(m_pt[i]), float(h_pt[i]))
        sa, sc = a - h_pt, -c - h_pt
        ja, jc = int(np.argmin(sa)), int(np.argmin(sc))
        if sa[ja] < slack_A:
            slack_A, worst_A = float(sa[ja]), X[ja].tolist()
        if sc[jc] < slack_C:
            slack_C, worst_C = float(sc[jc]), X[jc].tolist()
        shells.append({
            "index": idx, "radius": R, "samples": int(X.shape[0]),
            "min_A_over_H": float(a.min()), "min_minus_C_over_H": float((-c).min()),
            "max_h_pointwise": float(h_pt.max()), "violations": int(np.count_nonzero(bad)),
        })
    wit = witness.to_dict()
    if first_bad is not None:
        point, margin, m, h = first_bad
        return HypothesisReport("h3", FAIL, wit, point, margin, shells,
                                {"constant_path_m": m, "constant_path_h": h})
    branch, margin, worst = ("a", slack_A, worst_A) if slack_A >= slack_C else ("-c", slack_C, worst_C)
    tol = FAIL_RTOL * max(1.0, 1.0 / witness.k) if witness.k > 0 else FAIL_RTOL
    verdict = PASS if margin >= -tol else INCONCLUSIVE
    details = {"branch": branch, "slack_A": slack_A, "slack_minus_C": slack_C}
    return HypothesisReport("h3", verdict, wit, worst, margin, shells, details)


# --------------------------------------------------------------------------
# Coefficient growth conditions
# --------------------------------------------------------------------------


def _is_identically(e: Expr, value: float) -> bool:
    return e.is_constant() and float(e.evaluate(np.zeros((1, e.dim)))[0]) == value


def check_s2(
    spec: SpacetimeSpec, region: Region, beta_witness: GrowthWitness, delta_witness: GrowthWitness
) -> HypothesisReport:
    """Stationary form A = 1, B = delta, C = beta: beta > 0, beta at most
    quadratic and delta at most linear."""
    if not _is_identically(spec.A, 1.0):
        raise ValueError("check_s2 needs a spec in stationary form (A identically 1)")
    X, _ = _all_points(region)
    beta = spec.C.evaluate(X)
    wit = {"beta": beta_witness.to_dict(), "delta": delta_witness.to_dict()}
    if np.any(beta <= 0):
        i = int(np.flatnonzero(beta <= 0)[0])
        return HypothesisReport("s2", FAIL, wit, X[i].tolist(), float(beta[i]),
                                details={"reason": "beta must be positive"})
    rb = check_quadratic_growth(spec.C, region, beta_witness, condition="s2_beta")
    rd = check_quadratic_growth(spec.B, region, delta_witness, power=1.0, condition="s2_delta")
    details = {"beta": rb.to_dict(), "delta": rd.to_dict()}
    for r in (rb, rd):
        if r.verdict == FAIL:
            return HypothesisReport("s2", FAIL, wit, r.worst_point, r.margin, r.shells, details)
    worst = rb if rb.margin <= rd.margin else rd
    return HypothesisReport("s2", PASS, wit, worst.worst_point, worst.margin, details=details)


def check_h3prime(spec: SpacetimeSpec, region: Region, witness: GrowthWitness) -> HypothesisReport:
    """A - C > 0 everywhere and H / (A - C) at most quadratic."""
    X, _ = _all_points(region)
    c = coefficients(spec, X, gradients=False)
    diff = c.A - c.C
    details = {"min_A_minus_C": float(diff.min())}
    if spec.label == "kerr_schild":
        # A - C = 2V and H = 1 in this family
        details["kerr_schild"] = {"min_2V": float(diff.min()), "max_abs_H_minus_1": float(np.max(np.abs(c.H - 1.0)))}
    if not np.all(diff > 0):
        i = int(np.flatnonzero(~(diff > 0))[0])
        return HypothesisReport("h3prime", FAIL, witness.to_dict(), X[i].tolist(), float(diff[i]),
                                details={**details, "reason": "A - C must be positive"})
    r = check_quadratic_growth(h_over_a_minus_c(spec), region, witness, condition="h3prime")
    return HypothesisReport("h3prime", r.verdict, r.witness, r.worst_point, r.margin, r.shells,
                            {**details, **r.details})


def check_c2(spec: SpacetimeSpec, region: Region, witness: GrowthWitness) -> HypothesisReport:
    """1/mu(x) <= lam d^2(x, x0) + k."""
    return check_quadratic_growth(inverse_mu(spec), region, witness, condition="c2")


# --------------------------------------------------------------------------
# Case analysis
# --------------------------------------------------------------------------

ROUTE_H3PRIME = "(h1)+(h2)+(h3')"
ROUTE_H3 = "(h1)+(h2)+(h3)"
ROUTE_S2 = "(s1)+(s2)"
ROUTE_NEG = "(h1)+(L<=-nu)+(A-C<0)"
ROUTE_STATIC = "static (B=0, A>0)"
ROUTE_WARPED = "warped (A=C=0)"
ROUTE_A_EQ_C = "A=C>0"
ROUTE_C2 = "(c1)+(c2)"


def _route(name: str, reports: list[HypothesisReport], note: str = "") -> dict:
    verdicts = [r.verdict for r in reports]
    if all(v == PASS for v in verdicts):
        verdict = PASS
    elif any(v == FAIL for v in verdicts):
        verdict = FAIL
    else:
        verdict = INCONCLUSIVE
    out = {"route": name, "verdict": verdict, "conditions": [r.to_dict() for r in reports]}
    if note:
        out["note"] = note
    return out


def _witness_for(key, witnesses, default):
    if isinstance(witnesses, GrowthWitness):
        return witnesses
    if witnesses and key in witnesses:
        return witnesses[key]
    return default()


def theorem_verdicts(
    spec: SpacetimeSpec,
    region: Region,
    witnesses: GrowthWitness | Mapping[str, GrowthWitness] | None = None,
) -> dict:
    """Run the applicable checkers and classify the spec.

    ``witnesses`` is one GrowthWitness for every growth condition or a
    mapping with keys among h3, h3prime, s2_beta, s2_delta, static,
    warped, a_eq_c, c2. Missing witnesses are fitted (padded) and then
    re-verified by the sweeps.
    Completeness of the base (h1)/(c1) holds for the default flat base and
    is assumed otherwise.
    """
    X, _ = _all_points(region)
    c = coefficients(spec, X, gradients=False)
    notes = []
    if not spec.euclidean_base:
        notes.append("base completeness (h1)/(c1) assumed for the supplied base metric")
    routes = []

    h2 = check_h2(spec, region)
    diff = c.A - c.C
    if np.all(diff > 0):
        w = _witness_for("h3prime", witnesses, lambda: fit_growth_witness(h_over_a_minus_c(spec), region, pad=True))
        routes.append(_route(ROUTE_H3PRIME, [h2, check_h3prime(spec, region, w)]))
    if np.all(c.A / c.H > 0) or np.all(c.C / c.H < 0):
        def default_h3():
            # the PASS test for h3 is growth of H/A (or -H/C)
            if np.all(c.A > 0):
                return fit_growth_witness(lambda Y: (lambda q: q.H / q.A)(coefficients(spec, Y, gradients=False)), region, pad=True)
            return fit_growth_witness(lambda Y: (lambda q: -q.H / q.C)(coefficients(spec, Y, gradients=False)), region, pad=True)
        w = _witness_for("h3", witnesses, default_h3)
        routes.append(_route(ROUTE_H3, [h2, check_h3(spec, region, w)]))
    if _is_identically(spec.A, 1.0):
        wb = _witness_for("s2_beta", witnesses, lambda: fit_growth_witness(spec.C, region, pad=True))
        wd = _witness_for("s2_delta", witnesses, lambda: fit_growth_witness(spec.B, region, power=1.0, pad=True))
        routes.append(_route(ROUTE_S2, [check_s2(spec, region, wb, wd)]))
    if np.all(diff < 0):
        routes.append(_route(ROUTE_NEG, [check_negative_L(spec, region)]))
    if np.all(c.B == 0) and np.all(c.A > 0):
        w = _witness_for("static", witnesses, lambda: fit_growth_witness(spec.C, region, pad=True))
        routes.append(_route(
            ROUTE_STATIC, [check_quadratic_growth(spec.C, region, w, condition="static_beta")],
            "beta = C; geodesic disconnection is known for some beta growing faster than quadratically",
        ))
    if np.all(c.A == 0) and np.all(c.C == 0):
        absB = lambda Y: np.abs(spec.B.evaluate(Y))  # noqa: E731
        w = _witness_for("warped", witnesses, lambda: fit_growth_witness(absB, region, pad=True))
        fixed = np.all(c.B > 0) or np.all(c.B < 0)
        rep = check_quadratic_growth(absB, region, w, condition="warped_delta")
        if not fixed:
            rep = HypothesisReport("warped_delta", INCONCLUSIVE, rep.witness, rep.worst_point, rep.margin,
                                   rep.shells, {"reason": "B changes sign"})
        routes.append(_route(ROUTE_WARPED, [rep], "L = b^2"))
    if np.all(c.A == c.C) and not np.all(c.A == 0):
        if np.all(c.A > 0):
            f = lambda Y: (lambda cc: cc.H / cc.A)(coefficients(spec, Y, gradients=False))  # noqa: E731
            w = _witness_for("a_eq_c", witnesses, lambda: fit_growth_witness(f, region, pad=True))
            routes.append(_route(ROUTE_A_EQ_C, [check_quadratic_growth(f, region, w, condition="H_over_A")]))
        else:
            notes.append("A = C but A is not positive everywhere; no route checked")

    passing = [r["route"] for r in routes if r["verdict"] == PASS]
    w = _witness_for("c2", witnesses, lambda: fit_growth_witness(inverse_mu(spec), region, pad=True))
    c2 = _route(ROUTE_C2, [check_c2(spec, region, w)])
    if not passing:
        notes.append("no connectedness route applies")
    if routes and all(r["verdict"] == FAIL for r in routes):
        notes.append("all connectedness routes FAIL")
    return {
        "spec": spec.label,
        "region": region.to_dict(),
        "connectedness": {"passing_routes": passing, "routes": routes},
        "completeness": c2,
        "notes": notes,
        "caveat": CAVEAT,
    }
