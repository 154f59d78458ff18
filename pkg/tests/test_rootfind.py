import math

import mpmath
import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from derivroots import measures as M
from derivroots import rootfind as R
from derivroots.errors import ScaleError, ValidationError


def matched_distance(a, b):
    a, b = np.asarray(a), np.asarray(b)
    assert a.size == b.size
    cost = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(cost)
    return float(cost[i, j].max())


def test_coeffs_from_roots_examples():
    assert np.array_equal(R.coeffs_from_roots([1, -1]).coeffs, [-1, 0, 1])
    assert np.array_equal(R.coeffs_from_roots(R.RootSet([1], [3])).coeffs, [-1, 3, -3, 1])


def test_coeffs_match_numpy_poly():
    roots = M.sample(M.UniformDisk(0, 1), 40, 1)
    ours = R.coeffs_from_roots(roots).coeffs
    ref = np.poly(roots)[::-1]
    assert np.max(np.abs(ours - ref)) <= 1e-12


def test_coeffs_cap():
    with pytest.raises(ScaleError):
        R.coeffs_from_roots(np.zeros(11), cap=10)


def test_differentiate_examples():
    c = R.Coefficients([-1, 0, 1])
    assert np.array_equal(R.differentiate(c, 1).coeffs, [0, 2])
    assert R.differentiate(c, 0) is c
    with pytest.raises(ValidationError):
        R.differentiate(c, 3)


def test_differentiate_symbolic_oracle():
    # ((z-1)(z+1))^5 twice differentiated is 10 (z^2-1)^3 (9 z^2 - 1)
    c = R.coeffs_from_roots(R.RootSet([1, -1], [5, 5]))
    d2 = R.differentiate(c, 2).coeffs
    ref = 10 * np.polymul(np.polymul(np.poly([1, -1]), np.polymul(np.poly([1, -1]), np.poly([1, -1]))), [9, 0, -1])
    assert np.allclose(d2, ref[::-1], atol=1e-9)


def test_aberth_examples():
    rs = R.aberth(R.Coefficients([-1, 0, 1]))
    assert sorted(rs.points.real.round(12)) == [-1, 1]
    assert list(rs.multiplicities) == [1, 1]
    rs = R.aberth(R.Coefficients([-1, 3, -3, 1]))
    assert rs.points.size == 1 and rs.multiplicities[0] == 3
    assert abs(rs.points[0] - 1) <= 1e-6


@pytest.mark.parametrize("n, seed", [(30, 1), (30, 2), (50, 3)])
def test_aberth_round_trip(n, seed):
    roots = M.sample(M.UniformDisk(0, 1), n, seed)
    rs = R.aberth(R.coeffs_from_roots(roots), seed=seed)
    assert rs.degree == n
    assert matched_distance(rs.expanded(), roots) <= 1e-8


def test_aberth_matches_companion_oracle():
    rng = np.random.default_rng(4)
    c = rng.standard_normal(51) + 1j * rng.standard_normal(51)
    ours = R.aberth(R.Coefficients(c)).expanded()
    ref = np.roots(c[::-1])
    assert matched_distance(ours, ref) <= 1e-8


def test_high_precision_coefficients():
    roots = M.sample(M.UniformCircle(0, 1), 60, 5)
    c = R.coeffs_from_roots(roots, precision=256)
    rs = R.aberth(c)
    assert matched_distance(rs.expanded(), roots) <= 1e-12


@pytest.mark.parametrize("method", ["ratio", "coefficient"])
def test_multiplicity_example(method):
    rs = R.derivative_roots(R.RootSet([1, -1], [5, 5]), 2, method=method)
    got = {(round(p.real, 9), round(p.imag, 9)): int(m) for p, m in zip(rs.points, rs.multiplicities)}
    assert got == {(1.0, 0.0): 3, (-1.0, 0.0): 3, (round(1 / 3, 9), 0.0): 1, (round(-1 / 3, 9), 0.0): 1}


@pytest.mark.parametrize("n, k, spec", [
    (20, 1, M.UniformDisk(0, 1)),
    (50, 5, M.UniformCircle(0, 1)),
    (100, 10, M.UniformDisk(0, 2)),
    (120, 3, M.CantorSegment(-1, 1)),
    (200, 20, M.UniformCircle(0, 1)),
], ids=["disk20", "circle50", "disk100", "cantor120", "circle200"])
def test_methods_agree(n, k, spec):
    roots = M.sample(spec, n, n + k)
    a = R.derivative_roots(roots, k, method="ratio")
    b = R.derivative_roots(roots, k, method="coefficient")
    assert a.degree == b.degree == n - k
    assert matched_distance(a.expanded(), b.expanded()) <= 1e-7


@pytest.mark.parametrize("k", [1, 4])
def test_ratio_against_mpmath_roots(k):
    # independent oracle: mpmath root finder on exactly differentiated coefficients
    roots = M.sample(M.UniformDisk(0, 1), 25, 7)
    with mpmath.workprec(300):
        c = mpmath.mpf(1) * np.array([1], dtype=object)
        poly = [mpmath.mpc(1)]
        for r in roots:
            poly = [a - mpmath.mpc(r) * b for a, b in zip(poly + [0], [0] + poly)]
        # poly is descending here
        n = len(poly) - 1
        d = [poly[i] * math.prod(range(n - i - k + 1, n - i + 1)) for i in range(n - k + 1)]
        ref = [complex(z) for z in mpmath.polyroots(d, maxsteps=500, extraprec=600)]
    ours = R.derivative_roots(roots, k).expanded()
    assert matched_distance(ours, ref) <= 1e-10
    del c


def test_discrete_atoms_exact_multiplicity():
    spec = M.Discrete([-1, 0, 1], [0.3, 0.4, 0.3])
    roots = M.sample(spec, 600, 3)
    rs = R.derivative_roots(roots, 30)
    assert rs.degree == 570
    for a in (-1, 0, 1):
        assert rs.multiplicity_at(a) == int(np.sum(roots == a)) - 30


def test_degree_and_k_validation():
    with pytest.raises(ValidationError):
        R.derivative_roots([1, 2, 3], 3)
    with pytest.raises(ValidationError):
        R.derivative_roots([1, 2, 3], 0)
    with pytest.raises(ValidationError):
        R.derivative_roots([1, 2, 3], 1, method="eig")


def test_coefficient_method_cap():
    with pytest.raises(ScaleError):
        R.derivative_roots(M.sample(M.UniformDisk(0, 1), 30, 1), 2, method="coefficient", cap=20)


def test_gauss_lucas_examples():
    ok, d = R.gauss_lucas_check([1, -1], [0])
    assert ok and d <= 0
    ok, d = R.gauss_lucas_check([1, -1], [2])
    assert not ok and d == pytest.approx(1)
    ok, d = R.gauss_lucas_check([0, 2, 2j], [3 + 3j])
    assert not ok and d == pytest.approx(math.sqrt(2) * 2)


SPECS = [M.UniformDisk(0, 1), M.UniformCircle(1j, 2), M.CantorSegment(0, 1 + 1j),
         M.Discrete([-1, 0, 1], [0.3, 0.4, 0.3]), M.Mixture([(0.9, M.UniformCircle(0, 1)), (0.1, M.UniformDisk(3, 0.1))])]


@pytest.mark.parametrize("trial", range(100))
def test_gauss_lucas_property(trial):
    rng = np.random.default_rng(trial)
    spec = SPECS[trial % len(SPECS)]
    n = int(rng.integers(10, 60))
    k = int(rng.integers(1, min(12, n)))
    roots = M.sample(spec, n, trial)
    rs = R.derivative_roots(roots, k, seed=trial)
    ok, worst = R.gauss_lucas_check(roots, rs, 1e-7)
    assert rs.degree == n - k and ok, worst


@pytest.mark.parametrize("method", ["ratio", "coefficient"])
def test_conjugation_equivariance(method):
    roots = M.sample(M.UniformDisk(0.3, 1), 60, 8)
    a = R.derivative_roots(roots, 6, method=method)
    b = R.derivative_roots(roots.conj(), 6, method=method)
    assert matched_distance(a.conj().expanded(), b.expanded()) <= 1e-10


def test_rootset_csv_round_trip():
    rs = R.RootSet([0.1 + 1 / 3j, -2.5, 1e-300j], [1, 4, 2])
    back = R.RootSet.from_csv(rs.to_csv())
    assert np.array_equal(back.points, rs.points) and np.array_equal(back.multiplicities, rs.multiplicities)
    assert rs.to_csv().splitlines()[0] == "re,im,multiplicity"


def test_rootset_validation():
    with pytest.raises(ValidationError):
        R.RootSet([1, 2], [1])
    with pytest.raises(ValidationError):
        R.RootSet([1], [0])
    assert R.RootSet.from_points([2, 1, 2]).multiplicity_at(2) == 2


def test_cluster_radius_floor():
    assert R.cluster_radius(1) == R.CLUSTER_RADIUS
    assert R.cluster_radius(3) > R.CLUSTER_RADIUS


def test_cauchy_radius_bounds_roots():
    roots = M.sample(M.UniformDisk(0, 3), 40, 2)
    c = R.coeffs_from_roots(roots).coeffs
    with np.errstate(divide="ignore"):
        rad = R.cauchy_radius(np.log(np.abs(c)))
    assert np.abs(roots).max() <= rad * (1 + 1e-12)
