"""Zero sets of P and of its derivatives P^(k).

Two independent routes to the zeros of P^(k):

* ``coefficient``: expand P, differentiate the coefficients, run Aberth on
  the result (an oracle; capped in degree).
* ``ratio``: Aberth iteration directly on P^(k) with Newton steps
  P^(k)/P^(k+1) = e_k / ((k+1) e_{k+1}) from :mod:`derivroots.sympoly`,
  so no coefficient is ever formed.

Points of multiplicity m > k are zeros of P^(k) of multiplicity m - k; both
routes take them directly and only search for the remaining zeros.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import flint
import mpmath
import numpy as np
import numpy.polynomial.polynomial as npoly
from numba import njit
from scipy.spatial import ConvexHull, QhullError, cKDTree

from . import sympoly
from .errors import ConvergenceError, ScaleError, ValidationError
from .rng import stream

ORACLE_DEGREE_CAP = 4096
HIGH_PRECISION_DEGREE = 500
HIGH_PRECISION_BITS = 200
CLUSTER_RADIUS = 1e-6
MAX_ITER = 400
STEP_TOL = 1e-13
POLE_GUARD = 1e-12
# double-coefficient oracle roots must be this accurate (relative) or go high precision
ORACLE_ROOT_TOL = 1e-10
# ratio method: precision rises until Newton-step noise is below this (relative)
RATIO_NOISE_TOL = 1e-10


@dataclass(frozen=True)
class RootSet:
    """Distinct points with positive integer multiplicities."""

    points: np.ndarray
    multiplicities: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.points, dtype=np.complex128))
        m = np.atleast_1d(np.asarray(self.multiplicities, dtype=np.int64))
        if p.shape != m.shape:
            raise ValidationError("points and multiplicities differ in length", "multiplicities")
        if np.any(m < 1):
            raise ValidationError("multiplicities must be positive", "multiplicities")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "multiplicities", m)

    @classmethod
    def from_points(cls, points):
        """Group exactly equal values; order by first occurrence."""
        p = np.atleast_1d(np.asarray(points, dtype=np.complex128))
        uniq, first, counts = np.unique(p, return_index=True, return_counts=True)
        order = np.argsort(first, kind="stable")
        return cls(uniq[order], counts[order])

    @property
    def degree(self):
        return int(self.multiplicities.sum())

    def expanded(self):
        return np.repeat(self.points, self.multiplicities)

    def multiplicity_at(self, z, radius=0.0):
        d = np.abs(self.points - complex(z))
        return int(self.multiplicities[d <= radius].sum())

    def conj(self):
        return RootSet(self.points.conj(), self.multiplicities)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "multiplicity"])
        for z, m in zip(self.points, self.multiplicities):
            w.writerow([repr(float(z.real)), repr(float(z.imag)), int(m)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        pts = [complex(float(r["re"]), float(r["im"])) for r in rows]
        mult = [int(r["multiplicity"]) for r in rows]
        return cls(pts, mult)


@dataclass(frozen=True)
class Coefficients:
    """Ascending-degree coefficients; a numpy array, or a list of mpc in high precision."""

    coeffs: object
    precision: int | None = None

    def __post_init__(self):
        c = self.coeffs
        if self.precision is None:
            c = np.atleast_1d(np.asarray(c, dtype=np.complex128))
        else:
            c = [mpmath.mpc(v) for v in c]
        if len(c) < 1 or c[-1] == 0:
            raise ValidationError("leading coefficient must be nonzero", "coeffs")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def as_complex(self):
        return np.array([complex(v) for v in self.coeffs], dtype=np.complex128)


def as_rootset(roots):
    return roots if isinstance(roots, RootSet) else RootSet.from_points(roots)


# ---------------------------------------------------------------- coefficients


def _mp_convolve(a, b):
    out = [mpmath.mpc(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def coeffs_from_roots(roots, cap=ORACLE_DEGREE_CAP, precision=None):
    """Monic coefficients of prod (z - xi)^m by balanced pairwise products."""
    rs = as_rootset(roots)
    n = rs.degree
    if n < 1:
        raise ValidationError("total degree must be >= 1", "roots")
    if n > cap:
        raise ScaleError(f"degree {n} exceeds the oracle cap {cap}")
    pts = rs.expanded()
    if precision is None:
        polys = [np.array([-z, 1.0 + 0j]) for z in pts]
        while len(polys) > 1:
            polys = [np.convolve(polys[i], polys[i + 1]) if i + 1 < len(polys) else polys[i]
                     for i in range(0, len(polys), 2)]
        c = polys[0]
        if not np.all(np.isfinite(c)):
            raise ScaleError("coefficients overflow double precision; use precision=")
        return Coefficients(c)
    with mpmath.workprec(int(precision)):
        polys = [[-mpmath.mpc(z), mpmath.mpc(1)] for z in pts]
        while len(polys) > 1:
            polys = [_mp_convolve(polys[i], polys[i + 1]) if i + 1 < len(polys) else polys[i]
                     for i in range(0, len(polys), 2)]
        return Coefficients(polys[0], int(precision))


def differentiate(c, k):
    """k-th derivative via c_j -> c_{j+k} (j+1)...(j+k)."""
    k = int(k)
    if k < 0:
        raise ValidationError(f"must be nonnegative, got {k}", "k")
    if k > c.degree:
        raise ValidationError(f"k={k} exceeds degree {c.degree}: empty polynomial", "k")
    if k == 0:
        return c
    d = c.degree
    if c.precision is None:
        j = np.arange(d - k + 1, dtype=np.float64)
        fac = np.ones(d - k + 1)
        for i in range(1, k + 1):
            fac *= j + i
        return Coefficients(c.coeffs[k:] * fac)
    with mpmath.workprec(c.precision):
        out = []
        for j in range(d - k + 1):
            out.append(c.coeffs[j + k] * math.prod(range(j + 1, j + k + 1)))
        return Coefficients(out, c.precision)


def _deflate(c, z, times):
    """Divide by (x - z)**times via synthetic division (remainder dropped)."""
    if c.precision is None:
        a = c.coeffs.copy()
        for _ in range(times):
            d = a.size - 1
            q = np.empty(d, dtype=np.complex128)
            acc = a[d]
            for i in range(d - 1, -1, -1):
                q[i] = acc
                acc = a[i] + acc * z
            a = q
        return Coefficients(a)
    with mpmath.workprec(c.precision):
        a = list(c.coeffs)
        z = mpmath.mpc(z)
        for _ in range(times):
            d = len(a) - 1
            q = [None] * d
            acc = a[d]
            for i in range(d - 1, -1, -1):
                q[i] = acc
                acc = a[i] + acc * z
            a = q
        return Coefficients(a, c.precision)


# ---------------------------------------------------------------- Aberth


@njit(cache=True)
def _horner_ratio(c, z):
    # p(z) / p'(z) for ascending coefficients c; reversed polynomial for |z| > 1
    n = c.shape[0] - 1
    out = np.empty(z.shape[0], dtype=np.complex128)
    for q in range(z.shape[0]):
        x = z[q]
        if abs(x) <= 1.0:
            p = c[n]
            dp = 0j
            for i in range(n - 1, -1, -1):
                dp = dp * x + p
                p = p * x + c[i]
            out[q] = p / dp if dp != 0 else np.nan
        else:
            w = 1.0 / x
            p = c[0]
            dp = 0j
            for i in range(1, n + 1):
                dp = dp * w + p
                p = p * w + c[i]
            den = n * p - w * dp
            out[q] = x * p / den if den != 0 else np.nan
    return out


@njit(cache=True)
def _repulsion(z, active, extra_pts, extra_mult):
    m = z.shape[0]
    out = np.zeros(m, dtype=np.complex128)
    for i in range(m):
        if not active[i]:
            continue
        s = 0j
        zi = z[i]
        for j in range(m):
            if j != i:
                s += 1.0 / (zi - z[j])
        for j in range(extra_pts.shape[0]):
            s += extra_mult[j] / (zi - extra_pts[j])
        out[i] = s
    return out


def cauchy_radius(log_abs):
    """Unique positive root of |c_n| x^n - sum_{j<n} |c_j| x^j (bounds every root).

    Takes log|c_j| (``-inf`` for zero coefficients) so huge degrees stay finite.
    """
    log_abs = np.asarray(log_abs, dtype=float)
    n = log_abs.size - 1
    lo_c = log_abs[:-1]
    nz = np.isfinite(lo_c)
    if not nz.any():
        return 0.0
    j = np.arange(n)[nz]
    logc = lo_c[nz] - log_abs[-1]

    def g(t):  # log(sum |c_j/c_n| e^{jt}) - n t, strictly decreasing in t
        v = logc + j * t
        m = v.max()
        return m + np.log(np.exp(v - m).sum()) - n * t

    lo, hi = -50.0, 50.0
    while g(hi) > 0:
        hi *= 2
    while g(lo) < 0:
        lo *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return float(np.exp(hi))


def _initial_circle(log_abs, m, seed):
    radius = cauchy_radius(log_abs)
    if radius == 0.0:
        radius = 1.0
    rng = stream(seed, "aberth-init")
    theta = 2 * np.pi * (np.arange(m) + rng.uniform(0.0, 1.0, size=m)) / m + 0.4
    return radius * np.exp(1j * theta)


def _aberth_iterate(step, z, max_iter, tol, extra_pts=None, extra_mult=None, pole_guard=None,
                    max_level=0, noise_cap=0.0):
    """Jacobi-style Aberth sweeps.

    ``step(z_active, level)`` returns (newton, ok) or (newton, ok, noise);
    a step no larger than a few times its own rounding noise and below
    ``noise_cap`` (relative) counts as converged. A point whose small steps stop shrinking is moved up one
    evaluation level (see :func:`sympoly.evaluate`); at ``max_level`` a stall
    below 1e-9 relative counts as converged.
    """
    if extra_pts is None:
        extra_pts = np.zeros(0, dtype=np.complex128)
        extra_mult = np.zeros(0, dtype=np.float64)
    z = z.copy()
    m = z.size
    active = np.ones(m, dtype=bool)
    best = np.full(m, np.inf)
    stall = np.zeros(m, dtype=np.int64)
    level = np.zeros(m, dtype=np.int64)
    last = np.full(m, np.inf)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        res = step(z[idx], level[idx])
        nwt, ok = res[0], res[1]
        floor = 4.0 * res[2] if len(res) > 2 else 0.0
        rep = _repulsion(z, active, extra_pts, extra_mult)[idx]
        with np.errstate(all="ignore"):
            delta = nwt / (1.0 - nwt * rep)
        bad = ~ok | ~np.isfinite(delta)
        if bad.any():
            # nudge off a singular point
            delta[bad] = 1e-7 * (1 + np.abs(z[idx[bad]])) * np.exp(1j * (idx[bad] + 1.0))
        if pole_guard is not None:
            delta = pole_guard(z[idx], delta)
        z[idx] = z[idx] - delta
        size = np.abs(delta)
        last[idx] = size
        scale = 1.0 + np.abs(z[idx])
        done = ((size <= tol * scale) | ((size <= floor) & (size <= noise_cap * scale))) & ~bad
        improving = size < 0.5 * best[idx]
        best[idx] = np.minimum(best[idx], size)
        stall[idx] = np.where(improving, 0, stall[idx] + 1)
        # steps this small that stop shrinking are evaluation noise, not global wandering
        stuck = (stall[idx] >= 3) & ~done & ~bad & (size <= 1e-7 * scale)
        up = stuck & (level[idx] < max_level)
        level[idx[up]] += 1
        stall[idx[up]] = 0
        best[idx[up]] = np.inf
        done |= stuck & ~up & (size <= 1e-9 * scale)
        active[idx[done]] = False
    return z, active, last


def cluster_radius(m, eps=2.0**-52):
    """Relative radius for collapsing ``m`` approximants into one m-fold root.

    An m-fold root perturbed at relative level eps splits over a radius of
    order eps**(1/m); ``CLUSTER_RADIUS`` is the floor.
    """
    return max(CLUSTER_RADIUS, 8.0 * eps ** (1.0 / m)) if m > 1 else CLUSTER_RADIUS


def _components(pts, radius):
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    pairs = tree.query_pairs(radius, output_type="ndarray")
    n = pts.size
    if len(pairs) == 0:
        return [[i] for i in range(n)]
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, lab = connected_components(g, directed=False)
    out = {}
    for i, l in enumerate(lab):
        out.setdefault(l, []).append(i)
    return list(out.values())


def _cluster(points, eps=2.0**-52, max_mult=4):
    """Collapse near-coincident approximants to their centroid.

    Groups are connected components at the widest radius ``cluster_radius(max_mult)``.
    A group of size s is one s-fold root if its diameter is within
    ``cluster_radius(s)``; otherwise it is regrouped at the base radius.
    """
    pts = np.asarray(points, dtype=np.complex128)
    if pts.size == 0:
        return RootSet(pts, np.zeros(0, dtype=np.int64))
    pts = pts[np.lexsort((pts.imag, pts.real))]
    top = 1 + np.abs(pts).max()
    groups = []
    for comp in _components(pts, cluster_radius(max_mult, eps) * top):
        g = pts[comp]
        s = len(comp)
        diam = np.abs(g[:, None] - g[None, :]).max()
        if s == 1 or (s <= max_mult and diam <= cluster_radius(s, eps) * (1 + np.abs(g).min())):
            groups.append(g)
        else:
            groups.extend(g[c] for c in _components(g, CLUSTER_RADIUS * top))
    return RootSet(np.array([g.mean() for g in groups]), np.array([len(g) for g in groups], dtype=np.int64))


def _mp_acb(v):
    """Exact acb copy of an mpmath complex."""
    parts = []
    for x in (v.real, v.imag):
        sign, man, exp, _ = x._mpf_
        parts.append(flint.arb((-1) ** sign * int(man)) * flint.arb(2) ** int(exp) if man else flint.arb(0))
    return flint.acb(*parts)


def _ball_roots(c):
    """Roots of high-precision coefficients by Arb's rigorous isolation.

    Coefficients are taken as exact; raises ConvergenceError when the roots
    cannot be isolated (a multiple root or a precision cap hit).
    """
    bits = max(c.precision, 64)
    top = max(abs(int(x._mpf_[2])) for v in c.coeffs for x in (v.real, v.imag))
    # room for every exponent so the conversion itself is exact
    with flint.ctx.workprec(bits + top + 64):
        poly = flint.acb_poly([_mp_acb(v) for v in c.coeffs])
    with flint.ctx.workprec(bits):
        try:
            found = poly.roots(tol=ORACLE_ROOT_TOL * 1e-3, maxprec=8 * bits)
        except ValueError as exc:
            raise ConvergenceError(f"root isolation failed at {bits} bits: {exc}", np.arange(c.degree),
                                   math.inf) from exc
    return np.array([complex(r.mid()) for r in found], dtype=np.complex128)


def aberth(c, seed=0, max_iter=MAX_ITER, tol=STEP_TOL, cluster=True):
    """All roots of the polynomial with coefficients ``c`` (Aberth-Ehrlich).

    Starts on the Cauchy-bound circle with seeded angular jitter. High-precision
    coefficients go to rigorous ball-arithmetic isolation instead; if that
    fails (multiple roots) they are rounded to double and iterated here.
    """
    if not isinstance(c, Coefficients):
        c = Coefficients(c)
    n = c.degree
    if n < 1:
        raise ValidationError("degree must be >= 1", "coeffs")
    if c.precision is not None:
        try:
            return RootSet(_ball_roots(c), np.ones(n, dtype=np.int64))
        except ConvergenceError:
            pass
    cd = c.as_complex()
    if not (np.all(np.isfinite(cd)) and cd[-1] != 0):
        raise ScaleError("coefficients not representable in double precision")

    def step(zz, _lev):
        return _horner_ratio(cd, zz), np.ones(zz.size, bool)

    with np.errstate(divide="ignore"):  # zero coefficients become -inf, as cauchy_radius expects
        z0 = _initial_circle(np.log(np.abs(cd)), n, seed)
    z, active, last = _aberth_iterate(step, z0, max_iter, tol)
    if active.any():
        raise ConvergenceError(
            f"Aberth did not converge for {int(active.sum())} of {n} roots",
            np.flatnonzero(active),
            float(np.max(last[active])),
        )
    if not cluster:
        return RootSet(z, np.ones(n, dtype=np.int64))
    return _polish_multiple(cd, _cluster(z))


def _polish_multiple(cd, rs, steps=8):
    """Refine each m-fold cluster centre by Newton on P^(m-1), where the root is simple.

    A refined centre is kept only if it stays inside the cluster radius.
    """
    pts = rs.points.copy()
    for i in np.flatnonzero(rs.multiplicities > 1):
        m = int(rs.multiplicities[i])
        d = npoly.polyder(cd, m - 1)
        dd = npoly.polyder(d)
        z = pts[i]
        for _ in range(steps):
            den = npoly.polyval(z, dd)
            if den == 0:
                break
            dz = npoly.polyval(z, d) / den
            z = z - dz
            if abs(dz) <= 4 * 2.0**-52 * (1 + abs(z)):
                break
        if np.isfinite(z) and abs(z - pts[i]) <= cluster_radius(m) * (1 + abs(pts[i])):
            pts[i] = z
    return RootSet(pts, rs.multiplicities)


# ---------------------------------------------------------------- derivative zeros


def _atom_split(rs, k):
    big = rs.multiplicities > k
    known = RootSet(rs.points[big], rs.multiplicities[big] - k) if big.any() else None
    return known, big


def _merge(a, b):
    if a is None:
        return b
    if b is None or b.points.size == 0:
        return a
    return RootSet(np.concatenate([a.points, b.points]), np.concatenate([a.multiplicities, b.multiplicities]))


def _ratio_init(rs, k, m, seed):
    """Starting points just inside the parent cloud.

    Parent roots are taken in angular order around the centroid, thinned
    evenly to ``m`` points, pulled toward the centroid by about k/n and
    jittered by a quarter of the local root spacing.
    """
    pts = rs.expanded()
    n = pts.size
    centroid = pts.mean()
    rng = stream(seed, "ratio-init")
    ang = np.angle(pts - centroid)
    order = np.lexsort((np.abs(pts - centroid), ang))
    base = pts[order][np.linspace(0, n - 1, m).round().astype(int)]
    t = np.clip(k / n, 1e-3, 0.05) * (1 + rng.uniform(size=m))
    uniq = rs.points
    if uniq.size > 1:
        d, _ = cKDTree(np.column_stack([uniq.real, uniq.imag])).query(np.column_stack([base.real, base.imag]), k=2)
        spacing = d[:, 1]
    else:
        spacing = np.ones(m)
    jitter = 0.25 * spacing * np.exp(2j * np.pi * rng.uniform(size=m))
    return (1 - t) * base + t * centroid + jitter


def _ratio_zeros(rs, k, seed, max_iter, tol):
    known, big = _atom_split(rs, k)
    n = rs.degree
    m = n - k - (0 if known is None else known.degree)
    if m == 0:
        return known
    sorted_roots = sympoly.canonical_order(rs.expanded())
    poles = cKDTree(np.column_stack([rs.points.real, rs.points.imag]))

    def step(zz, level):
        # precision rises with the measured cancellation, or when a point stalls
        return sympoly.newton_ratio_many(sorted_roots, zz, k, level=level, newton_tol=RATIO_NOISE_TOL,
                                         return_noise=True)

    def guard(zz, delta):
        # halve steps that would land on a pole of e_k
        for _ in range(40):
            new = zz - delta
            d, _ = poles.query(np.column_stack([new.real, new.imag]))
            near = d <= POLE_GUARD * (1 + np.abs(new))
            if not near.any():
                break
            delta = np.where(near, 0.5 * delta, delta)
        return delta

    z0 = _ratio_init(rs, k, m, seed)
    extra_pts = known.points if known is not None else np.zeros(0, dtype=np.complex128)
    extra_mult = known.multiplicities.astype(np.float64) if known is not None else np.zeros(0)
    z, active, last = _aberth_iterate(step, z0, max_iter, tol, extra_pts, extra_mult, guard, max_level=2,
                                     noise_cap=RATIO_NOISE_TOL)
    if active.any():
        raise ConvergenceError(
            f"ratio method: {int(active.sum())} of {m} zeros unconverged",
            np.flatnonzero(active),
            float(np.max(last[active])),
        )
    return _merge(known, _cluster(z))


def _double_root_error(rs, full, k, z):
    """First-order bound on root errors caused by forming coefficients in double.

    Each coefficient of P carries error up to about n u times the matching
    coefficient of prod (z + |xi|); pushed through k derivatives and
    divided by |P^(k+1)| this bounds the displacement of a zero of P^(k).
    """
    n = rs.degree
    hat = differentiate(coeffs_from_roots(-np.abs(rs.expanded()), cap=n), k).coeffs.real
    dk1 = differentiate(full, k + 1).coeffs if k + 1 <= n else np.zeros(1, dtype=np.complex128)
    with np.errstate(all="ignore"):
        num = npoly.polyval(np.abs(z), hat)
        den = np.abs(npoly.polyval(z, dk1))
        return n * 2.0**-53 * num / den


def _coefficient_zeros(rs, k, seed, cap, precision):
    n = rs.degree
    # coefficient rounding is amplified by up to ~2^n near a circle of roots
    hp_bits = max(HIGH_PRECISION_BITS, 2 * n + 64)
    if precision is None and n > HIGH_PRECISION_DEGREE:
        precision = hp_bits
    known, _ = _atom_split(rs, k)

    def solve(prec):
        full = coeffs_from_roots(rs, cap, prec)
        c = differentiate(full, k)
        if known is not None:
            for z, mm in zip(known.points, known.multiplicities):
                c = _deflate(c, z, int(mm))
        if c.degree == 0:
            return None
        found = aberth(c, seed)
        if prec is None:
            err = _double_root_error(rs, full, k, found.points)
            if not np.all(err <= ORACLE_ROOT_TOL * (1 + np.abs(found.points))):
                raise ConvergenceError("double coefficients too inaccurate for these roots",
                                       np.flatnonzero(~(err <= ORACLE_ROOT_TOL)), float(np.nanmax(err)))
        return found

    try:
        found = solve(precision)
    except (ConvergenceError, ScaleError):
        # double coefficients too ill-conditioned: redo in high precision
        if precision is not None:
            raise
        found = solve(hp_bits)
    return _merge(known, found)


def derivative_roots(roots, k, method="ratio", seed=0, cap=ORACLE_DEGREE_CAP, precision=None,
                     max_iter=MAX_ITER, tol=STEP_TOL):
    """Zero set of P^(k), total degree n - k.

    ``method`` is ``"ratio"`` (coefficient-free) or ``"coefficient"``
    (oracle; ``precision`` in bits for its high-precision mode).
    """
    rs = as_rootset(roots)
    k = int(k)
    n = rs.degree
    if k < 1:
        raise ValidationError(f"must be >= 1, got {k}", "k")
    if k >= n:
        raise ValidationError(f"k={k} must be below the degree n={n}", "k")
    if method == "ratio":
        out = _ratio_zeros(rs, k, seed, max_iter, tol)
    elif method == "coefficient":
        out = _coefficient_zeros(rs, k, seed, cap, precision)
    else:
        raise ValidationError(f"unknown method {method!r}", "method")
    assert out.degree == n - k
    return out


# ---------------------------------------------------------------- Gauss-Lucas


def _segment_distance(p, a, b):
    ab = b - a
    L = abs(ab) ** 2
    if L == 0:
        return np.abs(p - a)
    t = np.clip(((p - a) * np.conj(ab)).real / L, 0.0, 1.0)
    return np.abs(p - (a + t * ab))


def hull_signed_distance(parent_points, points):
    """Signed distance to the convex hull: negative inside, positive outside."""
    P = np.unique(np.asarray(parent_points, dtype=np.complex128))
    z = np.atleast_1d(np.asarray(points, dtype=np.complex128))
    if P.size == 1:
        return np.abs(z - P[0])
    try:
        hull = ConvexHull(np.column_stack([P.real, P.imag]))
    except QhullError:
        # collinear: hull is a segment between the extreme points
        c = P.mean()
        u = P[np.argmax(np.abs(P - c))] - c
        u = u / abs(u)
        proj = ((P - c) * np.conj(u)).real
        a, b = c + proj.min() * u, c + proj.max() * u
        return _segment_distance(z, a, b)
    eq = hull.equations  # n.x + off <= 0 inside
    side = eq[:, 0][None, :] * z.real[:, None] + eq[:, 1][None, :] * z.imag[:, None] + eq[:, 2][None, :]
    inner = side.max(axis=1)
    verts = P[hull.vertices]
    nxt = np.roll(verts, -1)
    dist = np.min(np.stack([_segment_distance(z, a, b) for a, b in zip(verts, nxt)]), axis=0)
    return np.where(inner <= 0, inner, dist)


def gauss_lucas_check(parent, child, tol=1e-7):
    """``(ok, max_signed_distance)`` of child points relative to hull(parent)."""
    pp = as_rootset(parent).points
    cp = as_rootset(child).points
    if cp.size == 0:
        return True, -math.inf
    d = hull_signed_distance(pp, cp)
    worst = float(d.max())
    return worst <= tol, worst
