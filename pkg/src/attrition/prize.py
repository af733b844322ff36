"""Prize functions V on [0,1] and the sampled prize ladders V_k = V(k/N).

Every model in this package is parameterised by an increasing prize
function with V(0) = 0.  Three representations are supported:

* ``power``       -- V(x) = x**alpha, alpha > 0
* ``polynomial``  -- V(x) = sum_j coefficients[j] * x**j (zero constant term)
* ``table``       -- monotone piecewise-cubic interpolation through knots
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError, InvalidParameter, NonMonotonePrize

KINDS = ("power", "polynomial", "table")

_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class PrizeSpec:
    """Immutable prize ladder: values V_1..V_N and diffs c_r = V_{r+2}-V_{r+1}."""

    kind: str
    N: int
    values: np.ndarray
    diffs: np.ndarray
    alpha: float | None = None
    coefficients: tuple | None = None
    knots: tuple | None = None
    _interp: object = field(default=None, repr=False, compare=False)

    @property
    def v_max(self) -> float:
        """V(1), the largest prize."""
        return float(self.values[-1])


def make_prize(kind: str, N: int, alpha=None, coefficients=None, knots=None) -> PrizeSpec:
    """Build and validate a PrizeSpec for one of the supported kinds."""
    if kind not in KINDS:
        raise InvalidParameter(f"unknown prize kind {kind!r}")
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise InvalidParameter(f"N must be an integer >= 2, got {N!r}")
    N = int(N)

    interp = None
    if kind == "power":
        if alpha is None or not np.isfinite(alpha) or alpha <= 0:
            raise InvalidParameter(f"power prize needs alpha > 0, got {alpha!r}")
        alpha = float(alpha)
    elif kind == "polynomial":
        if not coefficients:
            raise InvalidParameter("polynomial prize needs coefficients")
        coefficients = tuple(float(c) for c in coefficients)
        if coefficients[0] != 0.0:
            raise InvalidParameter("polynomial prize must have V(0) = 0 (zero constant term)")
        # reject non-monotone polynomials early, on a grid finer than any N in use
        xs = np.linspace(0.0, 1.0, 4097)
        vs = np.polynomial.polynomial.polyval(xs, coefficients)
        if np.any(np.diff(vs) <= 0):
            raise NonMonotonePrize("polynomial prize is not strictly increasing on [0,1]")
    else:
        kn = np.asarray(knots, dtype=float)
        if kn.ndim != 2 or kn.shape[1] != 2 or kn.shape[0] < 2:
            raise InvalidParameter("table prize needs at least two (x, V(x)) knots")
        x, y = kn[:, 0], kn[:, 1]
        if np.any(np.diff(x) <= 0):
            raise InvalidParameter("table knot abscissae must be strictly increasing")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise InvalidParameter("table knots must span [0, 1]")
        if np.any(np.diff(y) <= 0):
            raise NonMonotonePrize("table knot values must be strictly increasing")
        if y[0] != 0.0:
            warnings.warn("table prize has V(0) != 0; the static model assumes V(0) = 0",
                          stacklevel=2)
        knots = tuple((float(a), float(b)) for a, b in kn)
        interp = PchipInterpolator(x, y)

    spec = PrizeSpec(kind=kind, N=N, values=np.empty(0), diffs=np.empty(0),
                     alpha=alpha if kind == "power" else None,
                     coefficients=coefficients if kind == "polynomial" else None,
                     knots=knots if kind == "table" else None,
                     _interp=interp)
    values = _eval_raw(spec, np.arange(1, N + 1) / N)
    if np.any(np.diff(values) <= 0) or values[0] <= 0:
        raise NonMonotonePrize("sampled prize sequence must be positive and strictly increasing")
    object.__setattr__(spec, "values", values)
    object.__setattr__(spec, "diffs", np.diff(values))
    return spec


def _eval_raw(spec: PrizeSpec, x):
    if spec.kind == "power":
        return np.asarray(x, dtype=float) ** spec.alpha
    if spec.kind == "polynomial":
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), spec.coefficients)
    return spec._interp(x)


def eval_prize(spec: PrizeSpec, x):
    """V(x) for x in [0, 1]; scalar in, scalar out."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < -_DOMAIN_SLACK) or np.any(xa > 1.0 + _DOMAIN_SLACK):
        raise DomainError(f"prize argument outside [0,1]: {x!r}")
    out = _eval_raw(spec, np.clip(xa, 0.0, 1.0))
    return float(out) if np.isscalar(x) or xa.ndim == 0 else out


def invert_prize(spec: PrizeSpec, t):
    """x with V(x) = t, for t in [0, V(1)]."""
    v1 = spec.v_max
    ta = np.asarray(t, dtype=float)
    if np.any(ta < -_DOMAIN_SLACK * max(1.0, v1)) or np.any(ta > v1 * (1 + _DOMAIN_SLACK) + _DOMAIN_SLACK):
        raise DomainError(f"inverse argument outside [0, V(1)]: {t!r}")
    ta = np.clip(ta, 0.0, v1)
    if spec.kind == "power":
        out = ta ** (1.0 / spec.alpha)
    else:
        def solve_one(tv):
            if tv <= 0.0:
                return 0.0
            if tv >= v1:
                return 1.0
            return brentq(lambda z: _eval_raw(spec, z) - tv, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)
        out = np.vectorize(solve_one, otypes=[float])(ta)
    return float(out) if np.isscalar(t) or ta.ndim == 0 else out


def prize_derivative(spec: PrizeSpec, x):
    """V'(x); may be 0 or infinite at the endpoints for power kinds."""
    xa = np.asarray(x, dtype=float)
    if spec.kind == "power":
        a = spec.alpha
        if a == 1.0:
            out = np.ones_like(xa)
        else:
            with np.errstate(divide="ignore"):
                out = a * xa ** (a - 1.0)
    elif spec.kind == "polynomial":
        der = np.polynomial.polynomial.polyder(spec.coefficients)
        out = np.polynomial.polynomial.polyval(xa, der)
    else:
        out = spec._interp.derivative()(xa)
    return float(out) if np.isscalar(x) or xa.ndim == 0 else out


def prize_second_derivative(spec: PrizeSpec, x):
    """V''(x); exact for analytic kinds, interpolant-based (with warning) for tables."""
    xa = np.asarray(x, dtype=float)
    if spec.kind == "power":
        a = spec.alpha
        if a == 1.0:
            out = np.zeros_like(xa)
        else:
            with np.errstate(divide="ignore"):
                out = a * (a - 1.0) * xa ** (a - 2.0)
    elif spec.kind == "polynomial":
        der2 = np.polynomial.polynomial.polyder(spec.coefficients, 2)
        out = np.polynomial.polynomial.polyval(xa, der2)
    else:
        warnings.warn("table prize is only C^1; second derivative comes from the interpolant",
                      stacklevel=2)
        out = spec._interp.derivative(2)(xa)
    return float(out) if np.isscalar(x) or xa.ndim == 0 else out


def classify_convexity(spec: PrizeSpec, rel_tol: float = 1e-12) -> str:
    """Classify the sampled diff sequence: convex, concave, linear or mixed."""
    d = spec.diffs
    if len(d) < 2:
        return "linear"
    tol = rel_tol * np.max(np.abs(d))
    steps = np.diff(d)
    if np.all(np.abs(steps) <= tol):
        return "linear"
    if np.all(steps >= -tol):
        return "convex"
    if np.all(steps <= tol):
        return "concave"
    return "mixed"


def to_json_dict(spec: PrizeSpec) -> dict:
    """JSON-serialisable description, invertible by from_json_dict."""
    if spec.kind == "power":
        return {"kind": "power", "alpha": spec.alpha, "N": spec.N}
    if spec.kind == "polynomial":
        return {"kind": "polynomial", "coefficients": list(spec.coefficients), "N": spec.N}
    return {"kind": "table", "knots": [list(k) for k in spec.knots], "N": spec.N}


def from_json_dict(d: dict) -> PrizeSpec:
    """Rebuild a PrizeSpec from its JSON object form."""
    try:
        kind = d["kind"]
        N = d["N"]
    except (KeyError, TypeError) as exc:
        raise InvalidParameter(f"prize JSON needs 'kind' and 'N': {d!r}") from exc
    return make_prize(kind, N, alpha=d.get("alpha"),
                      coefficients=d.get("coefficients"), knots=d.get("knots"))


def to_json(spec: PrizeSpec) -> str:
    return json.dumps(to_json_dict(spec))


def from_json(s: str) -> PrizeSpec:
    return from_json_dict(json.loads(s))
