"""Distances and potential functionals for empirical root measures.

Points at infinity on the Riemann sphere are represented by any complex
value with a non-finite component; :data:`INFINITY` is the canonical one.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import rootfind, sympoly
from .errors import DegenerateError, ScaleError, ValidationError
from .rng import stream

W1_CAP = 5000
INFINITY = complex(math.inf, 0.0)
JENSEN_GRID = 4096
JENSEN_TOL = 1e-6
DEGENERATE_DIST = 1e-9

# keep POT from importing heavyweight optional backends
for _name in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")


def is_infinite(z):
    z = complex(z)
    return not (math.isfinite(z.real) and math.isfinite(z.imag))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted finite point set; weights sum to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.points, dtype=np.complex128))
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if p.shape != w.shape:
            raise ValidationError("points and weights differ in length", "weights")
        if p.size == 0:
            raise ValidationError("empty measure", "points")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("weights must be positive and sum to 1", "weights")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points):
        p = np.atleast_1d(np.asarray(points, dtype=np.complex128))
        return cls(p, np.full(p.size, 1.0 / p.size))

    @classmethod
    def from_rootset(cls, rs):
        rs = rootfind.as_rootset(rs)
        m = rs.multiplicities.astype(float)
        return cls(rs.points, m / m.sum())


def _as_measure(x):
    if isinstance(x, EmpiricalMeasure):
        return x
    if isinstance(x, rootfind.RootSet):
        return EmpiricalMeasure.from_rootset(x)
    return EmpiricalMeasure.uniform(x)


def _canonical(m):
    # fixed point order so the solver sees identical input for (a, b) and (b, a)
    order = np.lexsort((m.points.imag, m.points.real))
    return m.points[order], m.weights[order]


def w1_distance(a, b):
    """Exact 1-Wasserstein distance (Euclidean cost) by network simplex."""
    import ot

    a, b = _as_measure(a), _as_measure(b)
    if a.points.size + b.points.size > W1_CAP:
        raise ScaleError(
            f"combined support {a.points.size + b.points.size} exceeds {W1_CAP}; subsample the measures")
    a, b = sorted((_canonical(a), _canonical(b)), key=lambda m: (m[0].size, m[0].tobytes(), m[1].tobytes()))
    cost = np.abs(a[0][:, None] - b[0][None, :])
    # renormalize in float64 so the marginals agree to the solver's tolerance
    wa = a[1] / a[1].sum()
    wb = b[1] / b[1].sum()
    return max(0.0, float(ot.emd2(wa, wb, cost, numItermax=10**8)))


# ---------------------------------------------------------------- Mobius maps


@dataclass(frozen=True)
class MobiusMap:
    """z -> (alpha z + beta) / (gamma z + delta)."""

    alpha: complex
    beta: complex
    gamma: complex
    delta: complex

    def __post_init__(self):
        c = np.array([self.alpha, self.beta, self.gamma, self.delta], dtype=np.complex128)
        if not np.all(np.isfinite(c)):
            raise ValidationError("coefficients must be finite", "mobius")
        top = np.abs(c).max()
        if top == 0 or abs(c[0] * c[3] - c[1] * c[2]) / top**2 < 1e-9:
            raise ValidationError("degenerate Mobius map (alpha*delta - beta*gamma ~ 0)", "mobius")
        for name, v in zip(("alpha", "beta", "gamma", "delta"), c):
            object.__setattr__(self, name, complex(v))

    @property
    def det(self):
        return self.alpha * self.delta - self.beta * self.gamma

    def normalized(self):
        top = max(abs(self.alpha), abs(self.beta), abs(self.gamma), abs(self.delta))
        return MobiusMap(self.alpha / top, self.beta / top, self.gamma / top, self.delta / top)

    def to_list(self):
        return [float(v) for c in (self.alpha, self.beta, self.gamma, self.delta) for v in (c.real, c.imag)]

    @classmethod
    def from_list(cls, xs):
        if len(xs) != 8:
            raise ValidationError("expected 8 reals", "mobius")
        return cls(*(complex(xs[2 * i], xs[2 * i + 1]) for i in range(4)))


IDENTITY = MobiusMap(1, 0, 0, 1)


def mobius_apply(u, z):
    """u(z) on the Riemann sphere; accepts scalars or arrays."""
    arr = np.asarray(z, dtype=np.complex128)
    scalar = arr.ndim == 0
    z = np.atleast_1d(arr)
    inf_in = ~np.isfinite(z)
    with np.errstate(all="ignore"):
        num = u.alpha * z + u.beta
        den = u.gamma * z + u.delta
        out = num / den
    out[den == 0] = INFINITY
    out[inf_in] = u.alpha / u.gamma if u.gamma != 0 else INFINITY
    out[~np.isfinite(out)] = INFINITY
    return complex(out[0]) if scalar else out


def mobius_inverse(u):
    return MobiusMap(u.delta, -u.beta, -u.gamma, u.alpha)


def preimage_circle(u, line_tol=1e-12):
    """The generalized circle u^{-1}(S^1) as ``(center, radius)``, or ``None`` for a line.

    |alpha z + beta| = |gamma z + delta| expands to
    A|z|^2 + 2 Re(v z) + C = 0 with A = |alpha|^2 - |gamma|^2.
    """
    u = u.normalized()
    A = abs(u.alpha) ** 2 - abs(u.gamma) ** 2
    v = u.alpha * np.conj(u.beta) - u.gamma * np.conj(u.delta)
    C = abs(u.beta) ** 2 - abs(u.delta) ** 2
    if abs(A) <= line_tol:
        return None
    center = -np.conj(v) / A
    r2 = abs(v) ** 2 / A**2 - C / A
    return complex(center), math.sqrt(max(r2, 0.0))


def _logminus(x):
    with np.errstate(divide="ignore"):
        return np.maximum(0.0, -np.log(x))


def logminus_potential(m, u=IDENTITY):
    """sum_i w_i log^-|u(p_i)|; ``inf`` when a point maps exactly to 0."""
    m = _as_measure(m)
    w = mobius_apply(u, m.points)
    a = np.abs(w)
    a[~np.isfinite(w)] = np.inf  # log^- of infinity is 0
    if np.any(a == 0):
        return math.inf
    return float(np.dot(m.weights, _logminus(a)))


def sample_mobius(seed, attempts=100):
    """Random map with standard complex Gaussian entries, conditioned to be usable."""
    rng = stream(seed, "mobius")
    for _ in range(attempts):
        c = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / math.sqrt(2)
        c = c / np.abs(c).max()
        if abs(c[0] * c[3] - c[1] * c[2]) < 1e-6:
            continue
        u = MobiusMap(*c)
        circ = preimage_circle(u)
        if circ is None or not (1e-3 <= circ[1] <= 1e3):
            continue
        return u
    raise DegenerateError(f"no admissible Mobius map in {attempts} attempts")


# ---------------------------------------------------------------- Jensen audit


def _circle_sup(sorted_roots, k, center, radius, grid):
    theta = 2 * np.pi * np.arange(grid) / grid
    vals = sympoly.log_abs_S_many(sorted_roots, center + radius * np.exp(1j * theta), k, sorted_roots=True)
    vals = np.where(np.isnan(vals), np.inf, vals)
    i = int(np.argmax(vals))
    coarse = float(vals[i])
    # one x4 refinement over the two cells around the argmax
    h = 2 * np.pi / grid
    fine_t = theta[i] + h * np.arange(-4, 5) / 4
    fine = sympoly.log_abs_S_many(sorted_roots, center + radius * np.exp(1j * fine_t), k, sorted_roots=True)
    fine = np.where(np.isnan(fine), np.inf, fine)
    best = max(coarse, float(fine.max()))
    return best, best - coarse


def jensen_audit(roots, k, u, grid_points=JENSEN_GRID, seed=0, child=None, tol=JENSEN_TOL):
    """Check the Jensen-type bound for S_{k,n} = P^(k) / (k! P) transported by ``u``.

    lhs = sum over zeros of P^(k) of log^-|u(rho)| minus the same over roots of P
    (with multiplicity); rhs = log sup |S| on u^{-1}(S^1) minus log |S(u^{-1}(0))|.
    Returns a dict with lhs, rhs, slack = rhs - lhs, the grid refinement delta
    and ``passed`` (slack >= -(tol + delta)).
    """
    rs = rootfind.as_rootset(roots)
    k = int(k)
    circ = preimage_circle(u)
    if circ is None:
        raise DegenerateError("u^{-1}(S^1) is a line")
    if child is None:
        child = rootfind.derivative_roots(rs, k, seed=seed)
    w0 = mobius_apply(mobius_inverse(u), 0.0)
    if is_infinite(w0):
        raise DegenerateError("u^{-1}(0) is the point at infinity")
    near = DEGENERATE_DIST * (1 + abs(w0))
    if np.any(np.abs(rs.points - w0) <= near) or np.any(np.abs(child.points - w0) <= near):
        raise DegenerateError("u^{-1}(0) coincides with a root of P or of P^(k)")
    lhs = (logminus_potential_counts(child, u) - logminus_potential_counts(rs, u))
    sr = sympoly.canonical_order(rs.expanded())
    sup, delta = _circle_sup(sr, k, circ[0], circ[1], int(grid_points))
    at0 = float(sympoly.log_abs_S_many(sr, [w0], k, sorted_roots=True)[0])
    rhs = sup - at0
    slack = rhs - lhs
    return {"lhs": float(lhs), "rhs": float(rhs), "slack": float(slack), "refinement": float(delta),
            "passed": bool(slack >= -(tol + delta))}


def logminus_potential_counts(rs, u):
    """Multiplicity-weighted sum (not average) of log^-|u(z)| over a RootSet."""
    rs = rootfind.as_rootset(rs)
    w = mobius_apply(u, rs.points)
    a = np.abs(w)
    a[~np.isfinite(w)] = np.inf
    if np.any(a == 0):
        return math.inf
    return float(np.dot(rs.multiplicities, _logminus(a)))


def audit_record(result, u, n, k, seed):
    """JSON-ready audit record."""
    return {"lhs": result["lhs"], "rhs": result["rhs"], "slack": result["slack"],
            "u": u.to_list(), "n": int(n), "k": int(k), "seed": int(seed)}
