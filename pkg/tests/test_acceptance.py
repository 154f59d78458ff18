"""Acceptance criteria 1-10, one PASS/FAIL line each in the terminal summary."""

import json
import math
import re
from pathlib import Path

import mpmath
import numpy as np
import pytest

from derivroots import cli, experiments as E, measures as M, sympoly
from oracles import domination_violations, mp_coeff_S

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CIRCLE = M.UniformCircle(0, 1)
ATOMS = M.Discrete([-1, 0, 1], [0.3, 0.4, 0.3])


def record(log, label, passed, detail):
    log.append((label, bool(passed), detail))
    print(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}")


# shared runs; criterion 6 audits all of them


@pytest.fixture(scope="module")
def atoms_run():
    return E.run_convergence(E.ExperimentConfig(ATOMS, (600,), E.KRule("fixed", 30), 20, 2024, mobius_maps=0))


@pytest.fixture(scope="module")
def trend_run():
    return E.run_convergence(E.ExperimentConfig(CIRCLE, (100, 400, 1600), E.KRule("n_over_log2", 1), 20, 2024,
                                                mobius_maps=0))


@pytest.fixture(scope="module")
def noise_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("noise")
    dirs = []
    for threads in ("1", "4"):
        code = cli.main(["perturbation", "--config", str(CONFIGS / "noise_left.json"), "--out", str(base / threads),
                         "--threads", threads])
        assert code == 0
        (d,) = (base / threads).iterdir()
        dirs.append(d)
    return dirs


def test_c01_symmetric_function_oracle(acceptance_log):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 51))
        k = int(rng.integers(1, min(10, n) + 1))
        roots = 2 * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
        while True:
            z = 3 * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
            if np.min(np.abs(z - roots)) >= 1e-3:
                break
        ref = mp_coeff_S(roots, z, k)
        lr = float(mpmath.log(abs(ref)))
        err = abs(sympoly.log_abs_S(roots, z, k) - lr) / max(1.0, abs(lr))
        worst = max(worst, err)
    ok = worst <= 1e-9
    record(acceptance_log, "criterion 01 oracle equivalence", ok, f"worst relative error {worst:.2e} (tol 1e-9)")
    assert ok


def test_c02a_counterexample_within_4se(acceptance_log):
    res = E.run_counterexample(1 / 3, 8, 10**5, 7)
    ok = abs(res["deviation_se"]) <= 4
    record(acceptance_log, "criterion 02a counterexample p_hat vs p_exact", ok,
           f"p_hat {res['p_hat']:.5f}, p_exact {res['p_exact']:.5f}, deviation {res['deviation_se']:.1f} s.e.; "
           f"exact P(S=0) {res['p_zero_exact']:.5f} ({res['deviation_zero_se']:.2f} s.e.), "
           f"all-products-zero frequency {res['all_zero_hat']:.5f} ({res['deviation_all_zero_se']:.2f} s.e.)")
    assert ok


def test_c02b_counterexample_limit(acceptance_log):
    ps = {k: E.counterexample_exact(1 / 3, k)[0] for k in range(4, 13)}
    gap = abs(ps[12] - math.exp(-1))
    ok = gap <= 0.02
    record(acceptance_log, "criterion 02b counterexample limit", ok,
           f"p_exact(k=12) {ps[12]:.5f}, |p - 1/e| = {gap:.4f} (tol 0.02)")
    assert ok


def test_c03_discrete_multiplicity(acceptance_log, atoms_run):
    recs = atoms_run.records
    ok = len(recs) == 20 and all(r["atoms_ok"] and r["degree_ok"] and r["k"] == 30 for r in recs)
    record(acceptance_log, "criterion 03 atom multiplicities", ok,
           f"{sum(r['atoms_ok'] for r in recs)}/20 trials exact, 570 zeros in {sum(r['degree_ok'] for r in recs)}/20")
    assert ok


def test_c04_convergence_trend(acceptance_log, trend_run):
    meds = [trend_run.median("w1", n) for n in (100, 400, 1600)]
    ok = meds[0] > meds[1] > meds[2]
    record(acceptance_log, "criterion 04 W1 trend", ok,
           "median W1 " + ", ".join(f"n={n}: {m:.4f}" for n, m in zip((100, 400, 1600), meds)))
    assert ok


def test_c05_jensen(acceptance_log):
    rep = E.run_jensen(E.JensenConfig(M.UniformDisk(0, 2), 50, (1, 3, 5), 100, 5))
    slack = rep.extra["min_slack"]
    ok = len(rep.records) == 100 and slack >= -1e-6
    record(acceptance_log, "criterion 05 Jensen audit", ok, f"100 cases, min slack {slack:.4g} (tol -1e-6)")
    assert ok


def test_c06_gauss_lucas(acceptance_log, atoms_run, trend_run, noise_runs):
    excess = [r["hull_excess"] for rep in (atoms_run, trend_run) for r in rep.records]
    for d in noise_runs:
        excess += [r["hull_excess"] for r in E.records_from_csv((d / "trials.csv").read_text())]
    worst = max(excess)
    ok = worst <= 1e-7
    record(acceptance_log, "criterion 06 Gauss-Lucas", ok,
           f"{len(excess)} trials, worst hull excess {worst:.2e} (tol 1e-7)")
    assert ok


def test_c07_moments(acceptance_log):
    rep = E.run_moments(E.ExperimentConfig(CIRCLE, (100,), E.KRule("fixed", 3), 10**4, 7, eval_point=2))
    s = rep.extra["summary"][0]
    c = complex(*rep.extra["c"])
    ok = (abs(c - 0.5) <= 1e-9 and s["mean_pred_re"] == pytest.approx(0.5**3 * math.comb(100, 3))
          and s["deviation_se"] <= 4 and s["ratio_identity_error"] <= 1e-12)
    record(acceptance_log, "criterion 07 moments", ok,
           f"mean {s['mean_re']:.1f}{s['mean_im']:+.1f}i vs {s['mean_pred_re']:.1f}, {s['deviation_se']:.2f} s.e.; "
           f"ratio identity error {s['ratio_identity_error']:.1e}")
    assert ok


def test_c08_perturbation_svg(acceptance_log, noise_runs):
    svgs = [(d / "scatter.svg").read_bytes() for d in noise_runs]
    recs = E.records_from_csv((noise_runs[0] / "trials.csv").read_text())
    svg = svgs[0].decode()
    layers = sorted(int(x) for x in re.findall(r'<g id="layer-(\d+)"', svg))
    report = json.loads((noise_runs[0] / "report.json").read_text())
    ok = (layers == [0, 1, 5] and len(recs) == 10 and all(r["zeros_k"] == 105 for r in recs)
          and svgs[0] == svgs[1] and report["config"]["trials"] == 10)
    record(acceptance_log, "criterion 08 perturbation SVG", ok,
           f"layers {layers}, zeros of P^(5) {sorted({r['zeros_k'] for r in recs})}, "
           f"SVG identical across reruns: {svgs[0] == svgs[1]}")
    assert ok


def test_c09_frostman(acceptance_log):
    cantor = E.run_frostman(M.CantorSegment(0, 1, 1 / 3), 10**6, None, [3.0**-j for j in range(7, 12)], 3,
                            num_probes=10)
    disk = E.run_frostman(M.UniformDisk(0, 1), 10**6, 0.5 * M.sample(M.UniformDisk(0, 1), 10, 99),
                          [0.3, 0.2, 0.1, 0.05], 3)
    atoms = E.run_frostman(ATOMS, 10**5, [-1 + 0j, 0j, 1 + 0j], [1e-1, 1e-10, 1e-50, 1e-100], 3)
    mins = {name: [s["min_estimate"] for s in rep.extra["summary"]]
            for name, rep in (("cantor", cantor), ("disk", disk), ("atoms", atoms))}
    target = math.log(2) / math.log(3)
    ok = (all(abs(v - target) <= 0.1 for v in mins["cantor"]) and all(abs(v - 2) <= 0.1 for v in mins["disk"])
          and all(abs(v) <= 0.01 for v in mins["atoms"]))
    record(acceptance_log, "criterion 09 Frostman exponents", ok,
           "; ".join(f"{k} {min(v):.4f}..{max(v):.4f}" for k, v in mins.items()))
    assert ok


def test_c10_nummelin(acceptance_log):
    params = M.nummelin_split(0, 1, 1 / math.pi, 2)
    y = 1 / (2 - M.sample(M.UniformDisk(0, 1), 10**6, 10))
    bad, cells = domination_violations(params, y, grid=50, sigmas=3)
    ok = bad == 0 and cells > 0
    record(acceptance_log, "criterion 10 Nummelin domination", ok,
           f"c_a {params.c_a:.4f}, disk D({params.w_a:.4f}, {params.r_a:.4f}); {bad} of {cells} cells below")
    assert ok
