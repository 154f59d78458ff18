"""Elementary symmetric polynomials of Y_i = 1/(z - xi_i) without overflow.

For roots xi_1..xi_n of P, e_k(Y) = P^(k)(z) / (k! P(z)). Values are carried
as mantissa * 2**exponent so that magnitudes like exp(+-eps*n) at n in the
thousands stay representable.

The table is built by the one-variable-at-a-time recurrence
``e_j <- e_j + Y_m * e_{j-1}`` (descending j), with roots folded in sorted
(real, imag) order so the result does not depend on input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import flint
import mpmath
import numpy as np
from numba import njit, prange

from .errors import DerivativeVanishesError, MagnitudeError, PoleError, ValidationError

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class ScaledComplex:
    """``mantissa * 2**exponent`` with ``1 <= |mantissa| < 2`` (or canonical zero)."""

    mantissa: complex
    exponent: int

    @classmethod
    def normalize(cls, mantissa, exponent=0):
        m = complex(mantissa)
        if m == 0:
            return cls(0j, 0)
        if not (math.isfinite(m.real) and math.isfinite(m.imag)):
            raise ValidationError(f"non-finite mantissa {m!r}", "mantissa")
        _, e = math.frexp(abs(m))
        # frexp gives [0.5, 1); shift one more bit for [1, 2)
        e -= 1
        m = complex(math.ldexp(m.real, -e), math.ldexp(m.imag, -e))
        a = abs(m)
        # rounding in abs() can leave |m| a hair outside [1, 2)
        if a >= 2.0:
            m, e = m / 2, e + 1
        elif a < 1.0:
            m, e = m * 2, e - 1
        return cls(m, int(exponent) + e)

    @classmethod
    def from_complex(cls, z):
        return cls.normalize(z, 0)

    @classmethod
    def from_mpc(cls, z):
        if z == 0:
            return cls(0j, 0)
        _, e = mpmath.frexp(abs(z))
        m = z * mpmath.ldexp(1, -int(e))
        return cls.normalize(complex(m), int(e))

    @property
    def is_zero(self):
        return self.mantissa == 0

    @property
    def log_abs(self):
        if self.mantissa == 0:
            return -math.inf
        return math.log(abs(self.mantissa)) + self.exponent * LOG2

    @property
    def phase(self):
        return math.atan2(self.mantissa.imag, self.mantissa.real)

    def to_complex(self):
        """Plain complex value; overflows to inf / underflows to 0 as doubles do."""
        if self.mantissa == 0:
            return 0j
        e = self.exponent
        if e > 1100:
            return complex(math.copysign(math.inf, self.mantissa.real) if self.mantissa.real else 0.0,
                           math.copysign(math.inf, self.mantissa.imag) if self.mantissa.imag else 0.0)
        return complex(math.ldexp(self.mantissa.real, e), math.ldexp(self.mantissa.imag, e))

    def __mul__(self, other):
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(other)
        return ScaledComplex.normalize(self.mantissa * other.mantissa, self.exponent + other.exponent)

    def __truediv__(self, other):
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(other)
        if other.mantissa == 0:
            raise ZeroDivisionError("division by scaled zero")
        return ScaledComplex.normalize(self.mantissa / other.mantissa, self.exponent - other.exponent)

    def __add__(self, other):
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(other)
        if self.mantissa == 0:
            return other
        if other.mantissa == 0:
            return self
        big, small = (self, other) if self.exponent >= other.exponent else (other, self)
        d = big.exponent - small.exponent
        m = big.mantissa + small.mantissa * math.ldexp(1.0, -d) if d < 1100 else big.mantissa
        return ScaledComplex.normalize(m, big.exponent)

    def __neg__(self):
        return ScaledComplex(-self.mantissa, self.exponent)


@dataclass(frozen=True)
class SymTable:
    """e_0..e_kmax as :class:`ScaledComplex`; ``n`` variables folded in."""

    values: tuple
    n: int

    @property
    def k_max(self):
        return len(self.values) - 1

    def __getitem__(self, k):
        return self.values[k]

    def log_abs(self, k):
        return self.values[k].log_abs


# ---------------------------------------------------------------- numba kernels
#
# Internal representation: complex mantissa with max(|re|, |im|) in [0.5, 1)
# plus int64 exponent; zero is (0, 0).
#
# Evaluation at a point z escalates through three levels:
#   0  double: one power-of-two scale so every |Y| < 1, plain complex fold
#      (per-operation renormalized fold when the result leaves double range),
#      then, if that is too noisy, power sums with Newton's identities;
#   1  double-double fold (about 106 significant bits);
#   2  ball arithmetic (python-flint), bits doubled until the radii are small enough.
# Accuracy is judged by a first-order statistical error estimate: with
# prefix tables F_i = e(Y_1..Y_i) and suffix tables B_i = e(Y_i..Y_n), a
# rounding of relative size u in step (i, j) reaches e_t with weight
# |B_{i+1, t-j}|, so the error of e_t is about u * sqrt(V_t) with
# V_t = sum |terms of step (i, j)|^2 |B_{i+1, t-j}|^2. V is computed once
# in double and reused to judge every precision level.

U_DOUBLE = 2.0**-53
U_DD = 2.0**-104
# safety factor on the statistical estimate
C_EST = 1.0
# Plain-double results below this magnitude may carry underflow damage.
_FAST_FLOOR = 1e-200
LOG2_NB = math.log(2.0)
# extra factor on the power-sum estimate (observed actual/estimate up to ~1.15)
_LOG_PSUM_SAFETY = math.log(4.0)


@njit(cache=True, inline="always")
def _norm(m, x):
    a = max(abs(m.real), abs(m.imag))
    if a == 0.0:
        return 0j, 0
    _, e = math.frexp(a)
    s = math.ldexp(1.0, -e)
    return m * s, x + e


@njit(cache=True)
def _fold(em, ex, ym, yx, top):
    # e_j += y * e_{j-1} for j = top..1, renormalizing after every step
    for j in range(top, 0, -1):
        pm = ym * em[j - 1]
        if pm == 0.0:
            continue
        px = yx + ex[j - 1]
        cm = em[j]
        if cm == 0.0:
            em[j], ex[j] = _norm(pm, px)
            continue
        d = ex[j] - px
        if d >= 0:
            if d < 1100:
                cm = cm + pm * math.ldexp(1.0, -d)
            em[j], ex[j] = _norm(cm, ex[j])
        else:
            if d > -1100:
                pm = pm + cm * math.ldexp(1.0, d)
            em[j], ex[j] = _norm(pm, px)


@njit(cache=True)
def _esym_vals(ym, yx, kmax, em, ex):
    em[:] = 0j
    ex[:] = 0
    em[0] = 0.5
    ex[0] = 1
    for i in range(ym.shape[0]):
        m, x = _norm(ym[i], yx[i])
        _fold(em, ex, m, x, min(i + 1, kmax))


@njit(cache=True)
def _table_scaled(roots, z, kmax, em, ex, lc, la):
    """Renormalized fold for values outside double range; 1 when z is a root.

    Error magnitudes here use the a priori bound (2j + 2) e_j(|Y|).
    """
    am = np.zeros(kmax + 1, dtype=np.complex128)
    ax = np.zeros(kmax + 1, dtype=np.int64)
    em[:] = 0j
    ex[:] = 0
    em[0] = 0.5
    ex[0] = 1
    am[0] = 0.5
    ax[0] = 1
    for i in range(roots.shape[0]):
        d = z - roots[i]
        if d == 0.0:
            return 1
        dm, dx = _norm(d, 0)
        m, x = _norm(1.0 / dm, -dx)
        top = min(i + 1, kmax)
        _fold(em, ex, m, x, top)
        _fold(am, ax, abs(m) + 0j, x, top)
    for j in range(kmax + 1):
        la[j] = math.log(abs(am[j]) * (2 * j + 2)) + ax[j] * LOG2_NB
    _log_cond(em, ex, la, lc)
    return 0


@njit(cache=True)
def _log_cond(em, ex, la, lc):
    for j in range(em.shape[0]):
        if em[j] == 0.0:
            lc[j] = np.inf if la[j] > -np.inf else -np.inf
        else:
            lc[j] = la[j] - (math.log(abs(em[j])) + ex[j] * LOG2_NB)


@njit(cache=True)
def _scaled_ys(roots, z, ys):
    # Y_i * 2**-e with e chosen so max |Y| < 1; status 1 pole, 2 range
    amax = 0.0
    for i in range(roots.shape[0]):
        d = z - roots[i]
        if d == 0.0:
            return 1, 0
        y = 1.0 / d
        if not (math.isfinite(y.real) and math.isfinite(y.imag)):
            return 2, 0
        ys[i] = y
        a = abs(y)
        if a > amax:
            amax = a
    if amax == 0.0:
        return 2, 0
    _, e = math.frexp(amax)
    s = math.ldexp(1.0, -e)
    for i in range(roots.shape[0]):
        ys[i] = ys[i] * s
    return 0, e


@njit(cache=True)
def _table_fast(roots, z, kmax, jlo, jhi, em, ex, lc, la):
    """Plain-double fold after one power-of-two rescaling, with error estimate.

    With every |Y| < 1 absolute rounding and underflow errors never grow, so
    a finite result above _FAST_FLOOR is as good as the renormalized fold.
    ``la[t]`` = log sqrt(V_t) for t in jlo..jhi (unscaled units).
    Status: 0 ok, 1 pole, 2 out of range (use the renormalized fold).
    """
    n = roots.shape[0]
    ys = np.empty(n, dtype=np.complex128)
    st, e = _scaled_ys(roots, z, ys)
    if st != 0:
        return st
    F = np.zeros((n + 1, kmax + 1), dtype=np.complex128)
    F[0, 0] = 1.0
    for i in range(n):
        y = ys[i]
        F[i + 1, 0] = 1.0
        for j in range(1, min(i + 1, kmax) + 1):
            F[i + 1, j] = F[i, j] + y * F[i, j - 1]
    B = np.zeros((n + 2, kmax + 1), dtype=np.complex128)
    B[n, 0] = 1.0
    B[n + 1, 0] = 1.0
    for i in range(n - 1, -1, -1):
        y = ys[i]
        B[i, 0] = 1.0
        for j in range(1, min(n - i, kmax) + 1):
            B[i, j] = B[i + 1, j] + y * B[i + 1, j - 1]
    acc = F[n]
    for j in range(kmax + 1):
        a = max(abs(acc[j].real), abs(acc[j].imag))
        if not math.isfinite(a) or 0.0 < a < _FAST_FLOOR:
            return 2
    for t in range(kmax + 1):
        la[t] = -np.inf
    for t in range(max(jlo, 1), jhi + 1):
        v = 0.0
        for i in range(n):
            y2 = ys[i].real * ys[i].real + ys[i].imag * ys[i].imag
            for j in range(1, min(i + 1, t) + 1):
                w = B[i + 1, t - j]
                f0 = F[i, j - 1]
                f1 = F[i + 1, j]
                v += (y2 * (f0.real * f0.real + f0.imag * f0.imag)
                      + f1.real * f1.real + f1.imag * f1.imag) * (w.real * w.real + w.imag * w.imag)
        if not math.isfinite(v):
            return 2
        la[t] = (0.5 * math.log(v) if v > 0.0 else -np.inf) + e * t * LOG2_NB
    for j in range(kmax + 1):
        em[j], ex[j] = _norm(acc[j], e * j)
    if acc[jhi] == 0.0 and la[jhi] > -np.inf and la[jhi] - e * jhi * LOG2_NB < math.log(_FAST_FLOOR):
        return 2  # a zero that may be underflow
    _log_cond(em, ex, la, lc)
    return 0


@njit(cache=True)
def _table_psum(ys, e, kmax, jlo, jhi, em, ex, lc, la):
    """e_j from power sums p_i = sum Y^i by Newton's identities, in double.

    Complements the fold: where the Cauchy transform nearly vanishes the
    fold cancels catastrophically while the p_i stay O(sqrt n) and the
    identities are well conditioned; next to a root it is the other way
    round. ``ys`` are the rescaled Y (exponent ``e``). The error estimate
    is first order with exact sensitivities: d e_t / d p_i = +-e_{t-i}/i,
    and recurrence roundings are propagated by an adjoint pass.
    Status 0 ok, 2 failed (range).
    """
    n = ys.shape[0]
    p = np.zeros(kmax + 1, dtype=np.complex128)
    sig = np.zeros(kmax + 1)
    for l in range(n):
        y = ys[l]
        yp = 1.0 + 0j
        for i in range(1, kmax + 1):
            yp = yp * y
            a2 = yp.real * yp.real + yp.imag * yp.imag
            if a2 == 0.0:
                break
            p[i] += yp
            # rounding of Y propagates as i*u into Y^i; the running sum adds u*|partial|
            sig[i] += (i * i + i) * a2 + p[i].real * p[i].real + p[i].imag * p[i].imag
    ev = np.zeros(kmax + 1, dtype=np.complex128)
    loc = np.zeros(kmax + 1)
    ev[0] = 1.0
    for j in range(1, kmax + 1):
        s = 0j
        r2 = 0.0
        for i in range(1, j + 1):
            t = p[i] * ev[j - i]
            s = s + t if i % 2 == 1 else s - t
            r2 += t.real * t.real + t.imag * t.imag
        ev[j] = s / j
        loc[j] = r2 / (j * j)
    for j in range(kmax + 1):
        a = max(abs(ev[j].real), abs(ev[j].imag))
        if not math.isfinite(a) or 0.0 < a < _FAST_FLOOR:
            return 2
    g = np.zeros(kmax + 1, dtype=np.complex128)
    for t in range(kmax + 1):
        la[t] = -np.inf
    for t in range(max(jlo, 1), jhi + 1):
        g[:] = 0j
        g[t] = 1.0
        for j in range(t - 1, 0, -1):
            acc = 0j
            for m in range(j + 1, t + 1):
                term = g[m] * p[m - j] / m
                acc = acc + term if (m - j) % 2 == 1 else acc - term
            g[j] = acc
        v = 0.0
        for j in range(1, t + 1):
            v += (g[j].real * g[j].real + g[j].imag * g[j].imag) * loc[j]
            w = ev[t - j]
            v += (w.real * w.real + w.imag * w.imag) * sig[j] / (j * j)
        if not math.isfinite(v):
            return 2
        la[t] = (0.5 * math.log(v) + _LOG_PSUM_SAFETY if v > 0.0 else -np.inf) + e * t * LOG2_NB
    for j in range(kmax + 1):
        em[j], ex[j] = _norm(ev[j], e * j)
    _log_cond(em, ex, la, lc)
    return 0


# ---- double-double helpers


@njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True, inline="always")
def _split(a):
    c = 134217729.0 * a
    hi = c - (c - a)
    return hi, a - hi


@njit(cache=True, inline="always")
def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True, inline="always")
def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    e += al + bl
    return _two_sum(s, e)


@njit(cache=True, inline="always")
def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e += ah * bl + al * bh
    return _two_sum(p, e)


@njit(cache=True, inline="always")
def _dd_div(ah, al, bh, bl):
    q1 = ah / bh
    ph, pl = _dd_mul(q1, 0.0, bh, bl)
    rh, rl = _dd_add(ah, al, -ph, -pl)
    q2 = rh / bh
    ph, pl = _dd_mul(q2, 0.0, bh, bl)
    rh, rl = _dd_add(rh, rl, -ph, -pl)
    q3 = rh / bh
    h, l = _two_sum(q1, q2)
    return _dd_add(h, l, q3, 0.0)


@njit(cache=True)
def _table_dd(roots, z, kmax, em, ex, scale_exp):
    """Double-double fold; Y = 1/(z - xi) is formed in double-double too.

    ``scale_exp`` is the power-of-two rescaling from :func:`_scaled_ys`.
    Status: 0 ok, 1 pole, 2 out of range.
    """
    n = roots.shape[0]
    rh = np.zeros(kmax + 1)
    rl = np.zeros(kmax + 1)
    ih = np.zeros(kmax + 1)
    il = np.zeros(kmax + 1)
    rh[0] = 1.0
    s = math.ldexp(1.0, -scale_exp)
    for i in range(n):
        dr, drl = _two_sum(z.real, -roots[i].real)
        di, dil = _two_sum(z.imag, -roots[i].imag)
        if dr == 0.0 and di == 0.0:
            return 1
        # 1/d = conj(d) / |d|^2, then rescale by the exact power of two s
        ah, al = _dd_mul(dr, drl, dr, drl)
        bh, bl = _dd_mul(di, dil, di, dil)
        nh, nl = _dd_add(ah, al, bh, bl)
        yr, yrl = _dd_div(dr, drl, nh, nl)
        yi, yil = _dd_div(-di, -dil, nh, nl)
        yr, yrl, yi, yil = yr * s, yrl * s, yi * s, yil * s
        for j in range(min(i + 1, kmax), 0, -1):
            # e_j += y * e_{j-1}
            p1h, p1l = _dd_mul(yr, yrl, rh[j - 1], rl[j - 1])
            p2h, p2l = _dd_mul(yi, yil, ih[j - 1], il[j - 1])
            p3h, p3l = _dd_mul(yr, yrl, ih[j - 1], il[j - 1])
            p4h, p4l = _dd_mul(yi, yil, rh[j - 1], rl[j - 1])
            prh, prl = _dd_add(p1h, p1l, -p2h, -p2l)
            pih, pil = _dd_add(p3h, p3l, p4h, p4l)
            rh[j], rl[j] = _dd_add(rh[j], rl[j], prh, prl)
            ih[j], il[j] = _dd_add(ih[j], il[j], pih, pil)
    for j in range(kmax + 1):
        a = max(abs(rh[j]), abs(ih[j]))
        if not math.isfinite(a) or 0.0 < a < _FAST_FLOOR:
            return 2
        em[j], ex[j] = _norm(complex(rh[j] + rl[j], ih[j] + il[j]), scale_exp * j)
    return 0


@njit(cache=True)
def _worst(lc, jlo, jhi):
    w = -np.inf
    for j in range(jlo, jhi + 1):
        if lc[j] > w:
            w = lc[j]
    return w


@njit(cache=True)
def _log_abs_at(em, ex, j):
    if em[j] == 0.0:
        return -np.inf
    return math.log(abs(em[j])) + ex[j] * LOG2_NB


@njit(cache=True)
def _newton_noise(em, ex, la, k, log_u):
    """log of the z-noise of the step e_k / ((k+1) e_{k+1}) at unit roundoff u.

    C u (sqrt(V_k) + |q| (k+1) sqrt(V_{k+1})) / ((k+1) |e_{k+1}|), and the
    log step size log|q|.
    """
    lk = _log_abs_at(em, ex, k)
    lk1 = _log_abs_at(em, ex, k + 1) + math.log(k + 1.0)
    if lk1 == -np.inf:
        # e_{k+1} = 0: the step is undefined, never accurate
        return np.inf, -np.inf
    lq = lk - lk1
    a = la[k] - lk1
    b = lq + la[k + 1] + math.log(k + 1.0) - lk1
    hi = max(a, b)
    if hi == -np.inf:
        return -np.inf, lq
    noise = math.log(C_EST) + log_u + hi + math.log1p(math.exp(min(a, b) - hi))
    return noise, lq


@njit(cache=True)
def _accurate(em, ex, lc, la, jlo, jhi, log_u, log_target, newton_tol, z):
    if newton_tol > 0.0:
        noise, lq = _newton_noise(em, ex, la, jlo, log_u)
        floor = math.log(0.1 * newton_tol * (1.0 + abs(z)))
        return noise <= max(lq + math.log(0.25), floor)
    return _worst(lc, jlo, jhi) + math.log(C_EST) + log_u <= log_target


@njit(cache=True, parallel=True)
def _tables(roots, zs, kmax, jlo, jhi, level, log_target, newton_tol, out_m, out_x, out_lc, out_la, status,
            out_noise):
    """Evaluate tables at every z; ``status`` 0 ok, 1 pole, 3 needs ball arithmetic.

    ``level[q]`` forces at least that escalation level at point q. Escalation
    is driven by the relative target on e_jlo..e_jhi, or, when
    ``newton_tol`` > 0, by the z-noise of the Newton step for P^(jlo)
    (``jhi`` must be jlo + 1). ``log_target`` of -inf and ``newton_tol`` 0
    disable escalation.
    """
    n = roots.shape[0]
    auto = log_target > -1e300 or newton_tol > 0.0
    for q in prange(zs.shape[0]):
        em = out_m[q]
        ex = out_x[q]
        lc = out_lc[q]
        la = out_la[q]
        z = zs[q]
        st = _table_fast(roots, z, kmax, jlo, jhi, em, ex, lc, la)
        if st == 2:
            st = _table_scaled(roots, z, kmax, em, ex, lc, la)
        if st == 1:
            status[q] = 1
            continue
        need = level[q]
        if need < 1 and auto and not _accurate(em, ex, lc, la, jlo, jhi, math.log(U_DOUBLE), log_target, newton_tol, z):
            need = 1
            ys = np.empty(n, dtype=np.complex128)
            s2, e = _scaled_ys(roots, z, ys)
            if s2 == 0:
                pm = np.empty_like(em)
                px = np.empty_like(ex)
                plc = np.empty_like(lc)
                pla = np.empty_like(la)
                if (_table_psum(ys, e, kmax, jlo, jhi, pm, px, plc, pla) == 0
                        and _accurate(pm, px, plc, pla, jlo, jhi, math.log(U_DOUBLE), log_target, newton_tol, z)):
                    em[:] = pm
                    ex[:] = px
                    lc[:] = plc
                    la[:] = pla
                    need = 0
        if need == 1:
            ys = np.empty(n, dtype=np.complex128)
            s2, e = _scaled_ys(roots, z, ys)
            ok = s2 == 0 and _table_dd(roots, z, kmax, em, ex, e) == 0
            if ok:
                _log_cond(em, ex, la, lc)
            if not ok or (auto and not _accurate(em, ex, lc, la, jlo, jhi, math.log(U_DD), log_target, newton_tol, z)):
                need = 2
        if newton_tol > 0.0:
            out_noise[q] = _newton_noise(em, ex, la, jlo, math.log(U_DD if need == 1 else U_DOUBLE))[0]
        status[q] = 3 if need >= 2 else 0


# ---------------------------------------------------------------- helpers


def canonical_order(roots):
    """Roots sorted by (real, imag); the fold order for every table."""
    r = np.asarray(roots, dtype=np.complex128).ravel()
    return r[np.lexsort((r.imag, r.real))]


def _to_scaled(m, x):
    return ScaledComplex.normalize(complex(m), int(x))


def _check_k(k, n, name="k_max"):
    if k < 0:
        raise ValidationError(f"must be nonnegative, got {k}", name)
    if k > n:
        raise ValidationError(f"{name}={k} exceeds the number of roots n={n}", name)


def _mp_table(roots, z, k_max, precision):
    with mpmath.workprec(int(precision)):
        z = mpmath.mpc(z)
        e = [mpmath.mpc(1)] + [mpmath.mpc(0)] * k_max
        for i, r in enumerate(roots):
            d = z - mpmath.mpc(r)
            if d == 0:
                raise PoleError(f"z={complex(z)} coincides with a root")
            y = 1 / d
            for j in range(min(i + 1, k_max), 0, -1):
                e[j] += y * e[j - 1]
        return [ScaledComplex.from_mpc(v) for v in e]


HP_MIN_BITS = 128
HP_MAX_BITS = 8192
TARGET_REL = 1e-13


def _arb_parts(x):
    # exact midpoint of an arb as (float in [0.5, 1) or 0, binary exponent)
    man, exp = x.mid().man_exp()
    man, exp = int(man), int(exp)
    if man == 0:
        return 0.0, 0
    bl = man.bit_length()
    shift = bl - 60
    top = man >> shift if shift > 0 else man << -shift
    return math.ldexp(float(top), -60), exp + bl


def _acb_scaled(v):
    fr, er = _arb_parts(v.real)
    fi, ei = _arb_parts(v.imag)
    if fr == 0.0 and fi == 0.0:
        return ScaledComplex(0j, 0)
    e = max(er if fr else ei, ei if fi else er)
    return ScaledComplex.normalize(complex(math.ldexp(fr, er - e), math.ldexp(fi, ei - e)), e)


def _ball_table(r, z, k_max, bits):
    """e_0..e_kmax in ball arithmetic: product tree of (1 + t Y_i) mod t^(k_max+1)."""
    with flint.ctx.workprec(bits):
        zz = flint.acb(z.real, z.imag)
        polys = [flint.acb_poly([1, 1 / (zz - flint.acb(x.real, x.imag))]) for x in r]
        while len(polys) > 1:
            polys = [(polys[i] * polys[i + 1]).truncate(k_max + 1) if i + 1 < len(polys) else polys[i]
                     for i in range(0, len(polys), 2)]
        return [polys[0][j] for j in range(k_max + 1)]


def _ball_escalate(r, z, k_max, jlo, jhi, target, newton_tol):
    """Ball-arithmetic table with bits doubled until the radii meet the goal.

    Returns ``(table, log z-noise)``; the noise is the rigorous radius of
    the Newton ratio in Newton mode.
    """
    bits = HP_MIN_BITS
    goal_bits = -math.log2(target or TARGET_REL)
    while True:
        tab = _ball_table(r, z, k_max, bits)
        with flint.ctx.workprec(bits):
            if newton_tol > 0:
                q = tab[jlo] / (tab[jlo + 1] * (jlo + 1))
                rad = float(q.rad())
                mag = float(abs(q).mid())
                good = q.is_finite() and rad <= max(0.25 * mag, 0.1 * newton_tol * (1 + abs(z)))
                noise = math.log(rad) if rad > 0 else -math.inf
            else:
                good = all(tab[j].rel_accuracy_bits() >= goal_bits for j in range(jlo, jhi + 1))
                noise = math.nan
        if good or bits >= HP_MAX_BITS:
            return [_acb_scaled(v) for v in tab], noise
        bits *= 2


def evaluate(sorted_roots, zs, k_max, jlo=1, jhi=None, level=None, target=TARGET_REL, newton_tol=0.0,
             return_noise=False):
    """Tables of e_0..e_kmax at many points with adaptive precision.

    Returns ``(mantissa, exponent, log_cond, ok)``; ``ok`` is False at exact
    poles and ``log_cond`` is log(error scale / |e_j|). ``target`` is the
    relative accuracy wanted for e_jlo..e_jhi (``None`` keeps the level given
    by ``level``, default double). A positive ``newton_tol`` instead asks
    for Newton steps for P^(jlo) whose rounding noise is small against the
    step and against ``newton_tol * (1 + |z|)``; ``return_noise`` then
    appends the estimated absolute z-noise of each step.
    """
    r = np.asarray(sorted_roots, dtype=np.complex128)
    zs = np.atleast_1d(np.asarray(zs, dtype=np.complex128))
    k_max = int(k_max)
    jhi = k_max if jhi is None else int(jhi)
    jlo = int(jlo)
    p = zs.size
    lev = np.zeros(p, dtype=np.int64) if level is None else np.asarray(level, dtype=np.int64)
    out_m = np.zeros((p, k_max + 1), dtype=np.complex128)
    out_x = np.zeros((p, k_max + 1), dtype=np.int64)
    lc = np.zeros((p, k_max + 1))
    la = np.zeros((p, k_max + 1))
    status = np.zeros(p, dtype=np.int64)
    noise = np.full(p, np.nan)
    log_target = -math.inf if target is None else math.log(target)
    _tables(r, zs, k_max, jlo, jhi, lev, log_target, float(newton_tol), out_m, out_x, lc, la, status, noise)
    for q in np.flatnonzero(status == 3):
        tab, noise[q] = _ball_escalate(r, zs[q], k_max, jlo, jhi, target, float(newton_tol))
        for j, v in enumerate(tab):
            out_m[q, j], out_x[q, j] = v.mantissa, v.exponent
    out = (out_m, out_x, lc, status != 1)
    return out + (np.exp(noise),) if return_noise else out


# ---------------------------------------------------------------- public API


def esym_table(ys, k_max):
    """e_0..e_kmax of arbitrary values ``ys`` (complex or :class:`ScaledComplex`).

    Plain renormalized fold (no precision escalation), values folded in
    sorted (real, imag) order.
    """
    sc = [v if isinstance(v, ScaledComplex) else ScaledComplex.from_complex(v) for v in ys]
    k_max = int(k_max)
    _check_k(k_max, len(sc))

    def key(v):
        # order by value; compare through log-magnitude to avoid overflow
        z = v.to_complex() if v.exponent < 1000 else complex(
            math.copysign(math.inf, v.mantissa.real), math.copysign(math.inf, v.mantissa.imag))
        return (z.real, z.imag)

    sc.sort(key=key)
    ym = np.array([v.mantissa for v in sc], dtype=np.complex128)
    yx = np.array([v.exponent for v in sc], dtype=np.int64)
    em = np.zeros(k_max + 1, dtype=np.complex128)
    ex = np.zeros(k_max + 1, dtype=np.int64)
    _esym_vals(ym, yx, k_max, em, ex)
    return SymTable(tuple(_to_scaled(m, x) for m, x in zip(em, ex)), len(sc))


def s_table(roots, z, k_max, precision=None, target=TARGET_REL):
    """Table of S_{j,n}(z) = e_j(1/(z - xi_i)) for j = 0..k_max.

    By default precision escalates (double, double-double, ball arithmetic) until
    every entry's estimated relative error is below ``target``;
    ``target=None`` stays in double. An integer ``precision`` (bits) runs
    the same recurrence in mpmath only.
    """
    r = canonical_order(roots)
    k_max = int(k_max)
    _check_k(k_max, r.size)
    z = complex(z)
    if precision is not None:
        return SymTable(tuple(_mp_table(r, z, k_max, precision)), r.size)
    m, x, _, ok = evaluate(r, [z], k_max, 1, k_max, target=target)
    if not ok[0]:
        raise PoleError(f"z={z} coincides with a root")
    return SymTable(tuple(_to_scaled(a, b) for a, b in zip(m[0], x[0])), r.size)


def log_abs_S(roots, z, k, precision=None, target=TARGET_REL):
    """log|S_{k,n}(z)|; ``-inf`` when e_k vanishes exactly."""
    k = int(k)
    r = canonical_order(roots)
    _check_k(k, r.size, "k")
    if precision is not None:
        return s_table(r, z, k, precision).log_abs(k)
    out = log_abs_S_many(r, [z], k, sorted_roots=True, target=target)[0]
    if np.isnan(out):
        raise PoleError(f"z={complex(z)} coincides with a root")
    return float(out)


def log_abs_S_many(roots, zs, k, sorted_roots=False, target=TARGET_REL):
    """Vectorized log|S_{k,n}| over evaluation points; ``nan`` at exact poles."""
    r = np.asarray(roots, dtype=np.complex128) if sorted_roots else canonical_order(roots)
    k = int(k)
    _check_k(k, r.size, "k")
    m, x, _, ok = evaluate(r, zs, k, k, k, target=target)
    m, x = m[:, k], x[:, k]
    with np.errstate(divide="ignore"):
        out = np.log(np.abs(m)) + x * LOG2
    out[m == 0] = -np.inf
    out[~ok] = np.nan
    return out


def newton_ratio(roots, z, k):
    """e_k / ((k+1) e_{k+1}) = P^(k)(z) / P^(k+1)(z), the Newton step for P^(k)."""
    k = int(k)
    tab = s_table(roots, z, k + 1)
    num, den = tab[k], tab[k + 1]
    if den.is_zero:
        raise DerivativeVanishesError(f"e_{k + 1} vanishes at z={z}")
    q = num / (den * (k + 1))
    if q.is_zero:
        return 0j
    if q.log_abs >= math.log(1e300):
        raise MagnitudeError(f"Newton ratio too large (log|.|={q.log_abs:.1f})", q.log_abs, q.phase)
    return q.to_complex()


def newton_ratio_many(sorted_roots, zs, k, level=None, target=None, newton_tol=0.0, return_noise=False):
    """Vectorized :func:`newton_ratio`; returns ``(ratio, ok)``.

    ``sorted_roots`` must already be in :func:`canonical_order`. ``level``
    forces per-point precision (0 double, 1 double-double, 2 ball arithmetic);
    ``target`` or ``newton_tol`` enable automatic escalation (see
    :func:`evaluate`), and ``return_noise`` appends the estimated z-noise of
    each step. Entries at a pole, with vanishing e_{k+1} or overflowing have
    ``ok`` False and ratio ``nan``.
    """
    k = int(k)
    zs = np.atleast_1d(np.asarray(zs, dtype=np.complex128))
    res = evaluate(sorted_roots, zs, k + 1, k, k + 1, level=level, target=target, newton_tol=newton_tol,
                   return_noise=return_noise)
    m, x, _, ok = res[:4]
    num, den = m[:, k], m[:, k + 1]
    shift = x[:, k] - x[:, k + 1]
    good = ok & (den != 0) & (shift < 990)
    with np.errstate(all="ignore"):
        q = num / (den * (k + 1)) * np.ldexp(1.0, np.clip(shift, -1100, 990))
    q[~good] = np.nan
    return (q, good, res[4]) if return_noise else (q, good)
