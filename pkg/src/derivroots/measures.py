"""Probability measures on the complex plane: specs, sampling, transforms.

A measure is described by one of the frozen dataclasses below. Specs are
plain values; every random operation takes an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import AccuracyError, DegenerateError, PoleError, ValidationError
from .rng import stream

WEIGHT_TOL = 1e-12
MAX_MIXTURE_DEPTH = 4
CANTOR_DEPTH = 52


@dataclass(frozen=True)
class Discrete:
    atoms: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(complex(a) for a in self.atoms))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(frozen=True)
class UniformCircle:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class UniformDisk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class CantorSegment:
    """Self-similar measure on [start, end] keeping two end pieces of relative size ``ratio``."""

    start: complex
    end: complex
    ratio: float = 1.0 / 3.0

    def __post_init__(self):
        object.__setattr__(self, "start", complex(self.start))
        object.__setattr__(self, "end", complex(self.end))
        object.__setattr__(self, "ratio", float(self.ratio))


@dataclass(frozen=True)
class Mixture:
    components: tuple  # of (weight, spec)

    def __post_init__(self):
        object.__setattr__(
            self, "components", tuple((float(w), s) for w, s in self.components)
        )


MeasureSpec = Union[Discrete, UniformCircle, UniformDisk, CantorSegment, Mixture]


@dataclass(frozen=True)
class DoeblinParams:
    """Uniform-on-disk minorization: law(Y) >= c_a * Unif(D(w_a, r_a))."""

    c_a: float
    w_a: complex
    r_a: float

    def __post_init__(self):
        if not (0.0 < self.c_a <= 1.0):
            raise ValidationError(f"must lie in (0, 1], got {self.c_a}", "c_a")
        if not self.r_a > 0:
            raise ValidationError(f"must be positive, got {self.r_a}", "r_a")


# ---------------------------------------------------------------- validation


def validate(spec, path="measure", depth=0):
    """Raise :class:`ValidationError` naming the offending field."""
    if isinstance(spec, Discrete):
        if len(spec.atoms) == 0:
            raise ValidationError("no atoms", f"{path}.atoms")
        if len(spec.atoms) != len(spec.weights):
            raise ValidationError("atoms and weights differ in length", f"{path}.weights")
        for i, w in enumerate(spec.weights):
            if not (w > 0 and math.isfinite(w)):
                raise ValidationError(f"weight must be positive, got {w}", f"{path}.weights[{i}]")
        total = math.fsum(spec.weights)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {total!r}, expected 1", f"{path}.weights")
        if len(set(spec.atoms)) != len(spec.atoms):
            raise ValidationError("atoms must be pairwise distinct", f"{path}.atoms")
    elif isinstance(spec, (UniformCircle, UniformDisk)):
        if not (spec.radius > 0 and math.isfinite(spec.radius)):
            raise ValidationError(f"radius must be positive, got {spec.radius}", f"{path}.radius")
    elif isinstance(spec, CantorSegment):
        if not (0.0 < spec.ratio < 0.5):
            raise ValidationError(f"ratio must lie in (0, 1/2), got {spec.ratio}", f"{path}.ratio")
        if spec.start == spec.end:
            raise ValidationError("degenerate segment", f"{path}.end")
    elif isinstance(spec, Mixture):
        if depth >= MAX_MIXTURE_DEPTH:
            raise ValidationError(f"nesting deeper than {MAX_MIXTURE_DEPTH}", path)
        if not spec.components:
            raise ValidationError("no components", f"{path}.components")
        for i, (w, sub) in enumerate(spec.components):
            if not (w > 0 and math.isfinite(w)):
                raise ValidationError(f"weight must be positive, got {w}", f"{path}.components[{i}].weight")
            validate(sub, f"{path}.components[{i}].measure", depth + 1)
        total = math.fsum(w for w, _ in spec.components)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {total!r}, expected 1", f"{path}.components")
    else:
        raise ValidationError(f"unknown measure type {type(spec).__name__}", path)
    return spec


# ---------------------------------------------------------------- JSON


def _c2j(z):
    z = complex(z)
    return [z.real, z.imag]


def _j2c(v, field):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict) and set(v) <= {"re", "im"}:
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    raise ValidationError(f"expected a complex number ([re, im] or real), got {v!r}", field)


def to_json(spec):
    """JSON-ready dict with a ``type`` discriminator."""
    if isinstance(spec, Discrete):
        return {"type": "discrete", "atoms": [_c2j(a) for a in spec.atoms], "weights": list(spec.weights)}
    if isinstance(spec, UniformCircle):
        return {"type": "circle", "center": _c2j(spec.center), "radius": spec.radius}
    if isinstance(spec, UniformDisk):
        return {"type": "disk", "center": _c2j(spec.center), "radius": spec.radius}
    if isinstance(spec, CantorSegment):
        return {"type": "cantor", "start": _c2j(spec.start), "end": _c2j(spec.end), "ratio": spec.ratio}
    if isinstance(spec, Mixture):
        return {
            "type": "mixture",
            "components": [{"weight": w, "measure": to_json(s)} for w, s in spec.components],
        }
    raise ValidationError(f"unknown measure type {type(spec).__name__}")


def from_json(obj, path="measure", check=True):
    """Parse (and by default validate) a measure from its JSON form."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValidationError("expected an object with a 'type' field", path)
    kind = obj["type"]

    def need(key):
        if key not in obj:
            raise ValidationError("missing field", f"{path}.{key}")
        return obj[key]

    def real(key):
        v = need(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"expected a number, got {v!r}", f"{path}.{key}")
        return float(v)

    if kind == "discrete":
        atoms = [_j2c(a, f"{path}.atoms[{i}]") for i, a in enumerate(need("atoms"))]
        spec = Discrete(atoms, [float(w) for w in need("weights")])
    elif kind == "circle":
        spec = UniformCircle(_j2c(need("center"), f"{path}.center"), real("radius"))
    elif kind == "disk":
        spec = UniformDisk(_j2c(need("center"), f"{path}.center"), real("radius"))
    elif kind == "cantor":
        ratio = real("ratio") if "ratio" in obj else 1.0 / 3.0
        spec = CantorSegment(_j2c(need("start"), f"{path}.start"), _j2c(need("end"), f"{path}.end"), ratio)
    elif kind == "mixture":
        comps = []
        for i, c in enumerate(need("components")):
            cp = f"{path}.components[{i}]"
            if not isinstance(c, dict) or "weight" not in c or "measure" not in c:
                raise ValidationError("expected {weight, measure}", cp)
            comps.append((float(c["weight"]), from_json(c["measure"], f"{cp}.measure", check=False)))
        spec = Mixture(comps)
    else:
        raise ValidationError(f"unknown measure type {kind!r}", f"{path}.type")
    if check:
        validate(spec, path)
    return spec


# ---------------------------------------------------------------- sampling


def _cantor_unit(n, ratio, rng):
    # Horner over random binary digits, deepest first: t = sum d_j (1-r) r^(j-1)
    bits = rng.integers(0, 2, size=(n, CANTOR_DEPTH), dtype=np.int8)
    t = np.zeros(n)
    for j in range(CANTOR_DEPTH - 1, -1, -1):
        t = ratio * t + (1.0 - ratio) * bits[:, j]
    return t


def _sample(spec, n, rng):
    """Draw ``n`` points; also return a mask marking absolutely continuous draws."""
    if isinstance(spec, Discrete):
        idx = rng.choice(len(spec.atoms), size=n, p=np.asarray(spec.weights) / math.fsum(spec.weights))
        return np.asarray(spec.atoms, dtype=complex)[idx], np.zeros(n, dtype=bool)
    if isinstance(spec, UniformCircle):
        theta = rng.uniform(0.0, 2 * np.pi, size=n)
        return spec.center + spec.radius * np.exp(1j * theta), np.zeros(n, dtype=bool)
    if isinstance(spec, UniformDisk):
        rad = spec.radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
        theta = rng.uniform(0.0, 2 * np.pi, size=n)
        return spec.center + rad * np.exp(1j * theta), np.ones(n, dtype=bool)
    if isinstance(spec, CantorSegment):
        t = _cantor_unit(n, spec.ratio, rng)
        return spec.start + t * (spec.end - spec.start), np.zeros(n, dtype=bool)
    if isinstance(spec, Mixture):
        w = np.array([c[0] for c in spec.components])
        idx = rng.choice(len(w), size=n, p=w / w.sum())
        out = np.empty(n, dtype=complex)
        ac = np.empty(n, dtype=bool)
        for j, (_, sub) in enumerate(spec.components):
            sel = np.flatnonzero(idx == j)
            if sel.size:
                out[sel], ac[sel] = _sample(sub, sel.size, rng)
        return out, ac
    raise ValidationError(f"unknown measure type {type(spec).__name__}")


def sample(spec, n, seed):
    """``n`` i.i.d. draws from ``spec``; a pure function of ``(spec, n, seed)``."""
    validate(spec)
    if int(n) < 1:
        raise ValidationError(f"must be >= 1, got {n}", "n")
    return _sample(spec, int(n), stream(seed, "sample"))[0]


def sample_labeled(spec, n, rng):
    """Like :func:`sample` but on a caller-owned generator, returning ``(points, is_ac)``."""
    validate(spec)
    return _sample(spec, int(n), rng)


def in_support(spec, z, tol=1e-12):
    """Boolean mask: does each point lie in the closed support (within ``tol``)?"""
    z = np.asarray(z, dtype=complex)
    if isinstance(spec, Discrete):
        atoms = np.asarray(spec.atoms)
        return np.min(np.abs(z[..., None] - atoms), axis=-1) <= tol
    if isinstance(spec, UniformCircle):
        return np.abs(np.abs(z - spec.center) - spec.radius) <= tol * max(1.0, spec.radius)
    if isinstance(spec, UniformDisk):
        return np.abs(z - spec.center) <= spec.radius * (1 + tol)
    if isinstance(spec, CantorSegment):
        d = spec.end - spec.start
        t = (z - spec.start) / d
        scale = tol / abs(d)
        return (np.abs(t.imag) <= scale) & (t.real >= -scale) & (t.real <= 1 + scale)
    if isinstance(spec, Mixture):
        m = np.zeros(z.shape, dtype=bool)
        for _, sub in spec.components:
            m |= in_support(sub, z, tol)
        return m
    raise ValidationError(f"unknown measure type {type(spec).__name__}")


def ac_density(spec, w):
    """Density of the absolutely continuous part of ``spec`` at ``w``."""
    w = np.asarray(w, dtype=complex)
    if isinstance(spec, UniformDisk):
        inside = np.abs(w - spec.center) < spec.radius
        return np.where(inside, 1.0 / (np.pi * spec.radius**2), 0.0)
    if isinstance(spec, Mixture):
        return sum(wt * ac_density(sub, w) for wt, sub in spec.components)
    return np.zeros(w.shape)


# ---------------------------------------------------------------- Cauchy transform


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gl_panels(a, b, panels):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return x, w


def _circle_quad(z, center, radius, panels):
    th, w = _gl_panels(0.0, 2 * np.pi, panels)
    return np.sum(w / (z - center - radius * np.exp(1j * th))) / (2 * np.pi)


def _disk_quad(z, center, radius, panels):
    th, wt = _gl_panels(0.0, 2 * np.pi, panels)
    s, ws = _gl_panels(0.0, radius, panels)
    u = center + s[:, None] * np.exp(1j * th[None, :])
    f = (ws * s)[:, None] * wt[None, :] / (z - u)
    return np.sum(f) / (np.pi * radius**2)


def _cantor_points(spec, level):
    # centers of the 2**level pieces, each of mass 2**-level
    t = np.zeros(1)
    scale = 1.0
    for _ in range(level):
        t = np.concatenate([t, t + (1.0 - spec.ratio) * scale])
        scale *= spec.ratio
    t = t + 0.5 * scale
    return spec.start + t * (spec.end - spec.start)


def _cantor_quad(fun, spec, level):
    pts = _cantor_points(spec, level)
    return np.mean(fun(pts))


def _adaptive(evaluate, tol, start, max_level, what):
    prev = evaluate(start)
    level = start
    while level < max_level:
        level += 1
        cur = evaluate(level)
        err = abs(cur - prev)
        if err <= tol * max(abs(cur), 1e-300):
            return complex(cur), float(err)
        prev = cur
    raise AccuracyError(f"{what}: no convergence, residual estimate {err:.3e}", residual=float(err))


def cauchy_quadrature(spec, z, tol=1e-8):
    """Numerical g(z) = E[1/(z - xi)] with an error estimate: returns ``(value, error)``."""
    validate(spec)
    z = complex(z)
    if isinstance(spec, Discrete):
        return _discrete_cauchy(spec, z), 0.0
    if isinstance(spec, UniformCircle):
        return _adaptive(lambda L: _circle_quad(z, spec.center, spec.radius, 2**L), tol, 2, 14, "circle quadrature")
    if isinstance(spec, UniformDisk):
        return _adaptive(lambda L: _disk_quad(z, spec.center, spec.radius, 2**L), tol, 1, 8, "disk quadrature")
    if isinstance(spec, CantorSegment):
        if in_support(spec, z, 0.0):
            raise PoleError(f"z={z} lies on the Cantor segment")
        return _adaptive(lambda L: _cantor_quad(lambda p: 1.0 / (z - p), spec, L), tol, 4, 20, "Cantor quadrature")
    if isinstance(spec, Mixture):
        val, err = 0j, 0.0
        for w, sub in spec.components:
            v, e = cauchy_quadrature(sub, z, tol)
            val += w * v
            err += w * e
        return val, err
    raise ValidationError(f"unknown measure type {type(spec).__name__}")


def _discrete_cauchy(spec, z):
    atoms = np.asarray(spec.atoms)
    if np.any(atoms == z):
        raise PoleError(f"z={z} is an atom")
    return complex(np.sum(np.asarray(spec.weights) / (z - atoms)))


def cauchy_transform(spec, z, tube=1e-12, tol=1e-8):
    """Cauchy-Stieltjes transform g(z) = integral of 1/(z - u) d mu(u).

    Closed forms for atoms, circles and disks; quadrature otherwise. On a
    circle's own support (within ``tube``) the transform jumps, so that case
    raises :class:`AccuracyError`.
    """
    validate(spec)
    z = complex(z)
    if isinstance(spec, Discrete):
        return _discrete_cauchy(spec, z)
    if isinstance(spec, UniformCircle):
        d = z - spec.center
        if abs(abs(d) - spec.radius) <= tube * max(1.0, spec.radius):
            raise AccuracyError(f"z={z} lies on the circle (within tube {tube})")
        return 1.0 / d if abs(d) > spec.radius else 0j
    if isinstance(spec, UniformDisk):
        d = z - spec.center
        if abs(d) >= spec.radius:
            return 1.0 / d
        return d.conjugate() / spec.radius**2
    if isinstance(spec, CantorSegment):
        return cauchy_quadrature(spec, z, tol)[0]
    if isinstance(spec, Mixture):
        return sum(w * cauchy_transform(sub, z, tube, tol) for w, sub in spec.components)
    raise ValidationError(f"unknown measure type {type(spec).__name__}")


def second_moment(spec, a, tol=1e-8):
    """E|Y|^2 for Y = 1/(a - xi); ``inf`` when not integrable."""
    validate(spec)
    a = complex(a)
    if isinstance(spec, Discrete):
        atoms = np.asarray(spec.atoms)
        if np.any(atoms == a):
            raise PoleError(f"a={a} is an atom")
        return float(np.sum(np.asarray(spec.weights) / np.abs(a - atoms) ** 2))
    if isinstance(spec, UniformCircle):
        d2, r2 = abs(a - spec.center) ** 2, spec.radius**2
        if d2 == r2:
            return math.inf
        return 1.0 / abs(d2 - r2)
    if isinstance(spec, UniformDisk):
        d2, r2 = abs(a - spec.center) ** 2, spec.radius**2
        if d2 <= r2:
            return math.inf
        return math.log(d2 / (d2 - r2)) / r2
    if isinstance(spec, CantorSegment):
        if in_support(spec, a, 0.0):
            return math.inf
        v, _ = _adaptive(
            lambda L: _cantor_quad(lambda p: 1.0 / np.abs(a - p) ** 2, spec, L), tol, 4, 20, "Cantor moment"
        )
        return float(v.real)
    if isinstance(spec, Mixture):
        return sum(w * second_moment(sub, a, tol) for w, sub in spec.components)
    raise ValidationError(f"unknown measure type {type(spec).__name__}")


# ---------------------------------------------------------------- local dimension


def frostman_exponent(samples, x, r_grid):
    """Per-radius local-dimension estimates log(mass of D(x, r)) / log r.

    Radii with no sample inside the closed disk get ``inf``.
    """
    s = np.asarray(samples, dtype=complex).ravel()
    if s.size == 0:
        raise ValidationError("no samples", "samples")
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValidationError("expected a nonempty list", "r_grid")
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValidationError("radii must lie in (0, 1)", "r_grid")
    if np.any(np.diff(r) >= 0):
        raise ValidationError("radii must be strictly decreasing", "r_grid")
    d = np.sort(np.abs(s - complex(x)))
    counts = np.searchsorted(d, r, side="right")
    out = []
    for ri, c in zip(r, counts):
        if c == 0:
            est = math.inf
        elif c == s.size:
            est = 0.0
        else:
            est = math.log(c / s.size) / math.log(ri)
        out.append((float(ri), est))
    return out


# ---------------------------------------------------------------- Doeblin / Nummelin


def nummelin_split(z0, r0, c0, a):
    """Minorize the law of Y = 1/(a - xi) by ``c_a * Unif(D(w_a, r_a))``.

    Assumes law(xi) >= c0 * Lebesgue on D(z0, r0). The disk is shrunk to
    radius min(r0, |a - z0|/2), the image ball is its full image under
    w -> 1/(a - w), and the Jacobian lower bound is the infimum of
    |a - w|**4 over the shrunk disk.
    """
    z0, a = complex(z0), complex(a)
    r0, c0 = float(r0), float(c0)
    if not r0 > 0:
        raise ValidationError(f"must be positive, got {r0}", "r0")
    if not c0 > 0:
        raise ValidationError(f"must be positive, got {c0}", "c0")
    if c0 * math.pi * r0**2 > 1.0 + 1e-12:
        raise ValidationError("c0 * Leb(D(z0, r0)) exceeds 1", "c0")
    delta = abs(a - z0)
    if delta == 0.0:
        raise DegenerateError("a coincides with the Doeblin center z0")
    rho = min(r0, delta / 2)
    d = a - z0
    # image of the circle |w - z0| = rho under w -> 1/(a - w)
    den = delta**2 - rho**2
    w_a = d.conjugate() / den
    r_a = rho / den
    m_a = (delta - rho) ** 4
    c_a = c0 * m_a * math.pi * r_a**2
    return DoeblinParams(min(c_a, 1.0), w_a, r_a)


def doeblin_density(params):
    """Density of ``c_a * Unif(D(w_a, r_a))`` inside the disk."""
    return params.c_a / (math.pi * params.r_a**2)


def split_sampler(params, residual, n, seed):
    """Realize Y as eps * Z + (1 - eps) * W.

    ``residual(m, rng)`` draws ``m`` values from the residual law. Returns
    ``(eps, values)`` as arrays of length ``n``.
    """
    if not isinstance(params, DoeblinParams):
        raise ValidationError("expected DoeblinParams", "params")
    n = int(n)
    if n < 1:
        raise ValidationError(f"must be >= 1, got {n}", "n")
    rng = stream(seed, "split")
    eps = rng.uniform(size=n) < params.c_a
    values = np.empty(n, dtype=complex)
    k = int(eps.sum())
    rad = params.r_a * np.sqrt(rng.uniform(size=k))
    values[eps] = params.w_a + rad * np.exp(2j * np.pi * rng.uniform(size=k))
    if k < n:
        values[~eps] = np.asarray(residual(n - k, rng), dtype=complex)
    return eps, values


def residual_sampler(spec, a, params) -> Callable:
    """Sampler for the residual law (law(Y) - c_a * Unif) / (1 - c_a).

    Rejection from the law of Y: a draw from the absolutely continuous part
    landing in the disk is kept with probability 1 - (minorant density /
    density of Y there); singular draws are always kept.
    """
    validate(spec)
    a = complex(a)
    floor = doeblin_density(params)

    def draw(m, rng):
        out = []
        got = 0
        while got < m:
            batch = max(64, 2 * (m - got))
            xi, ac = _sample(spec, batch, rng)
            y = 1.0 / (a - xi)
            keep = np.ones(batch, dtype=bool)
            inside = ac & (np.abs(y - params.w_a) < params.r_a)
            if inside.any():
                dens_y = ac_density(spec, xi[inside]) * np.abs(a - xi[inside]) ** 4
                with np.errstate(divide="ignore"):
                    p_keep = np.clip(1.0 - floor / dens_y, 0.0, 1.0)
                keep[inside] = rng.uniform(size=p_keep.size) < p_keep
            out.append(y[keep])
            got += int(keep.sum())
        return np.concatenate(out)[:m]

    return draw
