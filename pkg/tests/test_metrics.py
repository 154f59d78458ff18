import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from derivroots import measures as M
from derivroots import metrics as X
from derivroots import rootfind as R
from derivroots.errors import DegenerateError, ScaleError, ValidationError


def test_w1_examples():
    pts = M.sample(M.UniformDisk(0, 1), 30, 1)
    assert X.w1_distance(pts, pts) == 0
    assert X.w1_distance([0], [1]) == pytest.approx(1)
    a = X.EmpiricalMeasure([0, 2], [0.5, 0.5])
    assert X.w1_distance(a, [1]) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_w1_matches_assignment_oracle(seed):
    # equal sizes and uniform weights: optimal transport is an assignment
    a = M.sample(M.UniformDisk(0, 1), 80, seed)
    b = M.sample(M.UniformCircle(0.5, 1), 80, seed + 100)
    cost = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(cost)
    assert X.w1_distance(a, b) == pytest.approx(cost[i, j].mean(), rel=1e-12)


def test_w1_unequal_weights_by_multiplicity():
    child = R.RootSet([0, 1], [3, 1])
    assert X.w1_distance(child, [0, 0, 0, 1]) == pytest.approx(0, abs=1e-15)
    assert X.w1_distance(child, [0.5]) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(10))
def test_w1_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (M.sample(M.UniformDisk(0, 1), int(rng.integers(5, 60)), seed * 3 + i) for i in range(3))
    ab, ba = X.w1_distance(a, b), X.w1_distance(b, a)
    assert ab == ba
    assert ab <= X.w1_distance(a, c) + X.w1_distance(c, b) + 1e-9


def test_w1_cap():
    with pytest.raises(ScaleError, match="subsample"):
        X.w1_distance(np.zeros(3000), np.ones(2001))


def test_w1_noise_floor_decreases():
    spec = M.UniformCircle(0, 1)
    meds = []
    for n in (100, 400, 1600):
        meds.append(np.median([X.w1_distance(M.sample(spec, n, 2 * t), M.sample(spec, n, 2 * t + 1))
                               for t in range(5)]))
    assert meds[0] > meds[1] > meds[2]


def test_empirical_measure_validation():
    with pytest.raises(ValidationError):
        X.EmpiricalMeasure([0, 1], [0.5, 0.6])
    with pytest.raises(ValidationError):
        X.EmpiricalMeasure([0, 1], [1.0])


def test_mobius_examples():
    assert X.mobius_apply(X.IDENTITY, 5) == 5
    inv = X.MobiusMap(0, 1, 1, 0)
    assert X.is_infinite(X.mobius_apply(inv, 0))
    u = X.MobiusMap(2, 1, 1, 1)
    assert X.mobius_apply(u, 1) == pytest.approx(1.5)
    assert X.mobius_apply(X.mobius_inverse(u), 1.5) == pytest.approx(1)
    assert X.mobius_apply(u, X.INFINITY) == 2
    assert X.is_infinite(X.mobius_apply(u, -1))


def test_mobius_degenerate():
    with pytest.raises(ValidationError):
        X.MobiusMap(1, 2, 2, 4)
    with pytest.raises(ValidationError):
        X.MobiusMap(1, math.nan, 0, 1)


@pytest.mark.parametrize("u, center, radius", [
    (X.IDENTITY, 0, 1),
    (X.MobiusMap(0.5, 0, 0, 1), 0, 2),
    (X.MobiusMap(1, -3, 0, 1), 3, 1),
    (X.MobiusMap(2, 0, 1, 1), 1 / 3, 2 / 3),
])
def test_preimage_circle(u, center, radius):
    c, r = X.preimage_circle(u)
    assert c == pytest.approx(center) and r == pytest.approx(radius)
    # points on that circle map onto the unit circle
    t = np.linspace(0, 2 * np.pi, 7)
    assert np.allclose(np.abs(X.mobius_apply(u, c + r * np.exp(1j * t))), 1)


def test_preimage_line():
    # |z - 1| = |z + 1| is the imaginary axis
    assert X.preimage_circle(X.MobiusMap(1, -1, 1, 1)) is None


def test_logminus_examples():
    assert X.logminus_potential([0.5]) == pytest.approx(math.log(2))
    assert X.logminus_potential(np.exp(1j * np.linspace(0, 6, 9))) == pytest.approx(0, abs=1e-15)
    assert X.logminus_potential([0.5, 2]) == pytest.approx(0.5 * math.log(2))
    assert X.logminus_potential([0, 1]) == math.inf
    assert X.logminus_potential([0.5], X.MobiusMap(0, 1, 1, -0.5)) == 0  # maps to infinity


def test_logminus_law_of_large_numbers():
    # integral of log^-|z| over the unit disk is 1/2
    z = M.sample(M.UniformDisk(0, 1), 10**5, 3)
    vals = np.maximum(0, -np.log(np.abs(z)))
    assert abs(X.logminus_potential(z) - 0.5) <= 4 * vals.std() / math.sqrt(z.size)


def test_sample_mobius_deterministic_and_valid():
    assert X.sample_mobius(5) == X.sample_mobius(5)
    assert X.sample_mobius(5) != X.sample_mobius(6)
    for s in range(10**4):
        u = X.sample_mobius(s)
        c, r = X.preimage_circle(u)
        assert 1e-3 <= r <= 1e3


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**63))
def test_mobius_inverse_round_trip(seed):
    u = X.sample_mobius(seed)
    rng = np.random.default_rng(seed % 2**32)
    z = (rng.standard_normal(10) + 1j * rng.standard_normal(10)) * 10.0 ** rng.uniform(-3, 1, 10)
    w = X.mobius_apply(X.mobius_inverse(u), X.mobius_apply(u, z))
    assert np.all(np.abs(w - z) <= 1e-10 * np.maximum(1, np.abs(z)))


@pytest.mark.parametrize("z", [1e6, -1e6j, 3e5 + 4e5j, 1e-6])
def test_affine_round_trip_far_out(z):
    # with gamma != 0, u(z) crowds alpha/gamma for large |z|; affine maps keep full accuracy
    u = X.MobiusMap(2 - 1j, 0.5, 0, 1 + 1j)
    w = X.mobius_apply(X.mobius_inverse(u), X.mobius_apply(u, z))
    assert abs(w - z) <= 1e-10 * max(1, abs(z))


def test_jensen_example():
    res = X.jensen_audit([3, 2j], 1, X.IDENTITY)
    assert res["lhs"] == 0 and res["slack"] >= 0 and res["passed"]


def test_jensen_all_outside_unit_disk():
    roots = 3 + M.sample(M.UniformCircle(0, 1), 20, 4)
    res = X.jensen_audit(roots, 3, X.IDENTITY)
    assert res["lhs"] == 0 and res["rhs"] >= 0


def test_jensen_degenerate_cases():
    with pytest.raises(DegenerateError):
        X.jensen_audit([0, 1], 1, X.IDENTITY)  # u^{-1}(0) = 0 is a root
    with pytest.raises(DegenerateError):
        X.jensen_audit([2, 3], 1, X.MobiusMap(1, -1, 1, 1))  # preimage is a line


@pytest.mark.parametrize("seed", range(20))
def test_jensen_random(seed):
    k = (1, 3, 5)[seed % 3]
    roots = M.sample(M.UniformDisk(0, 2), 50, seed)
    u = X.sample_mobius(1000 + seed)
    try:
        res = X.jensen_audit(roots, k, u)
    except DegenerateError:
        pytest.skip("degenerate draw")
    assert res["slack"] >= -1e-6


def test_audit_record_shape():
    res = X.jensen_audit([3, 2j], 1, X.IDENTITY)
    rec = X.audit_record(res, X.IDENTITY, 2, 1, 0)
    assert set(rec) == {"lhs", "rhs", "slack", "u", "n", "k", "seed"} and len(rec["u"]) == 8
