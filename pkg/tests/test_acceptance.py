"""Acceptance checks, one test per criterion (sub-checks split where they can fail separately).

Each test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary. Run this file directly for the same lines without pytest.
"""

import itertools
import math
import time

import numpy as np
import pytest

from harqerr.error_models import SnrSchedule, sample_error_sequences, ModelKind
from harqerr.fading import (
    avg_failure_de_closed,
    avg_failure_de_numeric,
    avg_failure_exact_mc,
    avg_failure_ie_mc,
    avg_rounds,
    avg_rounds_mc,
    avg_rounds_series,
)
from harqerr.pep import (
    PepProblem,
    check_pep_bounds,
    pep_joint,
    pep_joint_mc,
    pep_single,
    pep_suffix,
    sweep_ratio,
)
from harqerr.per_models import PerModel
from harqerr.phy_sim import CodeSpec, estimate_joint_errors, measure_per

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script from elsewhere
    ACCEPTANCE_LINES = []

CODE = CodeSpec(n_bits=128)


def db(x):
    return 10.0 ** (x / 10.0)


def record(tag, ok, detail):
    line = f"criterion {tag}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def random_problems(n, seed, k_choices=(2, 3, 4), snr=(0.01, 20.0), d=(0.5, 4.0)):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = int(rng.choice(k_choices))
        out.append(PepProblem(float(rng.uniform(*d)), SnrSchedule(rng.uniform(*snr, size=k))))
    return out


# 1 -------------------------------------------------------------------------


def test_criterion_1_pep_sandwich():
    t0 = time.perf_counter()
    reports = [check_pep_bounds(p) for p in random_problems(200, 101)]
    elapsed = time.perf_counter() - t0
    max_eps = max(r.tol for r in reports)
    ok = all(r.holds for r in reports) and max_eps <= 1e-6 and elapsed < 60
    record("1", ok, f"200 problems, all hold={all(r.holds for r in reports)}, max eps={max_eps:.2e}, {elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------


def test_criterion_2_upper_attainment():
    worst = 0.0
    rng = np.random.default_rng(202)
    for k in (1, 2, 3, 4):
        for pos in range(k):
            for _ in range(5):
                snrs = [0.0] * k
                snrs[pos] = float(rng.uniform(0.01, 20))
                d = float(rng.uniform(0.5, 4))
                p = PepProblem(d, SnrSchedule(snrs))
                worst = max(worst, abs(pep_joint(p) - pep_single(d, snrs[pos])))
    ok = worst < 1e-6
    record("2", ok, f"max |P_1:k - P_k| = {worst:.2e} over one-nonzero schedules, k <= 4")
    assert ok


# 3 -------------------------------------------------------------------------

G1 = db(-3.0)


def test_criterion_3a_k2_t100():
    r = sweep_ratio(2, 1.0, G1, [100.0])[0]
    ok = 0.49 <= r["ratio"] <= 0.51
    record("3a", ok, f"k=2, t=100: P_1:2/P_2 = {r['ratio']:.5f} (target [0.49, 0.51])")
    assert ok


@pytest.mark.xfail(strict=True, reason="exact ratio at t=2 is 0.656; see decisions ledger")
def test_criterion_3b_k2_t2():
    r = sweep_ratio(2, 1.0, G1, [2.0])[0]
    ok = abs(r["ratio"] - 0.5) <= 0.05
    record("3b", ok, f"k=2, t=2: P_1:2/P_2 = {r['ratio']:.5f} (target within 10% of 0.5)")
    assert ok


def test_criterion_3c_k3_t100():
    r = sweep_ratio(3, 1.0, G1, [100.0])[0]
    ok = 0.25 < r["ratio"] < 0.5
    record("3c", ok, f"k=3, t=100: P_1:3/P_3 = {r['ratio']:.5f} (target strictly in (1/4, 1/2))")
    assert ok


# 4 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_quadrature_vs_mc():
    t0 = time.perf_counter()
    probs = random_problems(50, 404, snr=(0.1, 10.0), d=(1.0, 1.0))
    worst = 0.0
    fails = 0
    for i, p in enumerate(probs):
        q = pep_joint(p)
        m, se = pep_joint_mc(p, 10**7, 4000 + i)
        z = abs(q - m) / se
        worst = max(worst, z)
        fails += z >= 3
    elapsed = time.perf_counter() - t0
    ok = fails == 0 and elapsed < 300
    record("4", ok, f"50 problems at 1e7 samples: max |quad - mc|/se = {worst:.2f}, {elapsed:.0f}s")
    assert ok


# 5 -------------------------------------------------------------------------


def _walk_vectors(snrs, n, seed):
    a = np.sqrt(np.asarray(snrs))
    k = len(a)
    x = np.random.default_rng(seed).standard_normal((n, k))
    prefix = np.cumsum(a * x, axis=1)  # column l-1 holds a_l^T x
    norms = np.cumsum(a * a)  # ||a_l||^2
    return a, x, prefix, norms


def test_criterion_5a_helper_variable_uncorrelated():
    n = 10**6
    worst = 0.0
    for snrs, seed in (([0.5, 1.2, 0.3, 2.0], 51), ([3.0, 0.1, 1.0], 52)):
        a, x, prefix, norms = _walk_vectors(snrs, n, seed)
        k = len(a)
        for l in range(1, k):  # 1-based l
            y = a[l] * prefix[:, l - 1] - norms[l - 1] * x[:, l]
            for h in range(l + 1, k + 1):
                r = np.corrcoef(y, prefix[:, h - 1])[0, 1]
                worst = max(worst, abs(r) * math.sqrt(n))
    ok = worst < 3
    record("5a", ok, f"orthogonal helper variable: max |corr| in units of sigma = {worst:.2f} at 1e6 samples")
    assert ok


def test_criterion_5b_event_reduction():
    n = 10**6
    bad = 0
    hits = 0
    for snrs, d, seed in (([0.5, 1.2, 0.3, 2.0], 1.0, 53), ([3.0, 0.1, 1.0], 0.3, 54), ([0.05, 0.05], 0.2, 55)):
        a, x, prefix, norms = _walk_vectors(snrs, n, seed)
        for l in range(1, len(a)):
            y = a[l] * prefix[:, l - 1] - norms[l - 1] * x[:, l]
            premise = (prefix[:, l] > 0.5 * d * norms[l]) & (y > 0)
            hits += int(premise.sum())
            bad += int((premise & ~(prefix[:, l - 1] > 0.5 * d * norms[l - 1])).sum())
    ok = bad == 0 and hits > 0
    record("5b", ok, f"event reduction: {bad} counterexamples among {hits} premise samples")
    assert ok


def test_criterion_5c_halving_recursion():
    worst = math.inf
    for p in random_problems(60, 505):
        vals = [pep_suffix(p, l) for l in range(1, p.k + 1)]
        for cur, nxt in zip(vals, vals[1:]):
            eps = 1e-9 + 10 * (cur.error + nxt.error)
            worst = min(worst, cur.value - 0.5 * nxt.value + eps)
    ok = worst >= 0
    record("5c", ok, f"halving recursion: min (P_l:k - P_l+1:k / 2 + eps) = {worst:.3e} over 60 problems")
    assert ok


# 6 -------------------------------------------------------------------------


def test_criterion_6_closed_form_and_rounds():
    worst_rel = 0.0
    for th, g, avg, k in itertools.product((0.0, 0.5, 2.0), (0.2, 1.0, 5.0), (0.5, 2.0, 10.0, 50.0), range(1, 6)):
        closed = avg_failure_de_closed(th, g, k, avg)
        quad = avg_failure_de_numeric(PerModel.exponential(th, g), k, avg)
        worst_rel = max(worst_rel, abs(closed - quad) / quad)
    worst_series = 0.0
    for th, g, avg in itertools.product((0.0, 0.5, 2.0), (0.2, 1.0, 5.0), (0.5, 2.0, 10.0, 50.0)):
        worst_series = max(worst_series, abs(avg_rounds(th, g, avg) - avg_rounds_series(th, g, avg)))
    limit = [avg_rounds(2.0, 0.5, a) - 1.0 for a in (1e2, 1e4, 1e8)]
    ok = worst_rel <= 1e-9 and worst_series <= 1e-9 and limit[-1] < 1e-7 and limit == sorted(limit, reverse=True)
    record("6", ok, f"closed vs quadrature rel {worst_rel:.1e}; rounds vs series {worst_series:.1e}; "
                    f"K-1 at avg=1e8: {limit[-1]:.1e}")
    assert ok


# 7 -------------------------------------------------------------------------

LINK_TRIALS = 10**5
LINK_POINTS = [
    # (prefix SNRs in dB, accumulated SNR of the last round in dB)
    *[([-1.0], s) for s in (1.0, 2.0, 3.0, 4.0, 5.0)],
    *[([3.5], s) for s in (4.5, 5.0, 5.5)],
    *[([0.5, 1.0], s) for s in (4.0, 4.5, 5.0)],
]


@pytest.fixture(scope="module")
def link_results():
    t0 = time.perf_counter()
    rows = []
    for i, (prefix, acc_db) in enumerate(LINK_POINTS):
        pre = [db(x) for x in prefix]
        last = db(acc_db) - sum(pre)
        sched = SnrSchedule(pre + [last])
        est = estimate_joint_errors(CODE, sched, LINK_TRIALS, 7000 + i)
        per, per_se = measure_per(CODE, list(sched.accumulated), LINK_TRIALS, 7100 + i)
        rows.append(dict(prefix=prefix, acc_db=acc_db, k=len(sched), f=est.f_hat, se=est.stderr, per=per, per_se=per_se))
    return rows, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_7a_de_bounds_exact(link_results):
    rows, elapsed = link_results
    worst = -math.inf
    for r in rows:
        margin = r["f"][1] - r["per"][1] - 3 * math.hypot(r["se"][1], r["per_se"][1])
        worst = max(worst, margin)
    ok = worst <= 0 and elapsed < 900
    record("7a", ok, f"f_2 <= PER(acc_2) + 3 sigma at {len(rows)} points (worst margin {worst:.2e}), {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_7b_ie_underestimates(link_results):
    rows, _ = link_results
    checked, zs = 0, []
    for r in rows:
        if np.all(r["per"][: r["k"]] < 0.1):
            ie = r["per"][0] * r["per"][1]
            rel = math.hypot(r["per_se"][0] / r["per"][0], r["per_se"][1] / r["per"][1])
            sigma = math.hypot(r["se"][1], ie * rel)
            zs.append((r["f"][1] - ie) / sigma)
            checked += 1
    ok = checked > 0 and min(zs) >= 3
    record("7b", ok, f"f_2 - prod PER >= 3 sigma at {checked} low-PER points (min z = {min(zs):.1f})")
    assert ok


@pytest.mark.slow
def test_criterion_7c_half_de_heuristic(link_results):
    rows, _ = link_results
    ratios = [r["f"][2] / r["per"][2] for r in rows if r["k"] == 3]
    ok = all(0.25 <= x <= 1.0 for x in ratios)
    record("7c", ok, "f_3 / PER(acc_3) = " + ", ".join(f"{x:.3f}" for x in ratios) + " (band [0.25, 1])")
    assert ok


# 8 -------------------------------------------------------------------------


def test_criterion_8_non_independence():
    n = 20000
    est = estimate_joint_errors(CODE, SnrSchedule([db(1.5), 0.0]), n, 808)
    p1 = est.marginal[0]
    p12 = est.f_hat[1]
    identity = est.joint_counts[1] == est.marginal_counts[1]
    sigma = math.sqrt(p12 * (1 - p12) / n + (2 * p1) ** 2 * p1 * (1 - p1) / n)
    z = (p12 - p1**2) / sigma
    ok = 0.2 <= p1 <= 0.8 and identity and z >= 3
    record("8", ok, f"PER={p1:.3f}, #(E1&E2)={est.joint_counts[1]} #(E2)={est.marginal_counts[1]}, "
                    f"P(E1,E2)-P(E1)^2 = {z:.1f} sigma")
    assert ok


# 9 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_9_fading_proximity():
    t0 = time.perf_counter()
    grid_db = np.arange(-4.0, 7.01, 0.5)
    per, _ = measure_per(CODE, db(grid_db), 20000, 909)
    keep = per > 0
    table = PerModel.from_table(zip(db(grid_db[keep]), np.minimum.accumulate(per[keep])))
    worst = -math.inf
    details = []
    for i, gdb in enumerate((0.0, 2.5, 5.0, 7.5, 10.0)):
        avg = db(gdb)
        ex, ex_se = avg_failure_exact_mc(CODE, 3, avg, 10**4, 10, 9100 + i, all_rounds=True)
        for k in (2, 3):
            de = avg_failure_de_numeric(table, k, avg)
            ie, ie_se = avg_failure_ie_mc(table, k, avg, 200000, 9200 + 10 * i + k)
            vals = [(ex[k - 1], ex_se[k - 1]), (de, 0.0), (ie, ie_se)]
            for (a, sa), (b, sb) in itertools.combinations(vals, 2):
                band = 3 * math.hypot(sa, sb) + 0.2 * max(a, b)
                worst = max(worst, abs(a - b) / band)
            details.append(f"{gdb:g}dB/k{k}: {ex[k - 1]:.3g} {de:.3g} {ie:.3g}")
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 1800
    record("9", ok, f"worst gap / band = {worst:.2f}, {elapsed:.0f}s [exact de ie] " + "; ".join(details))
    assert ok


# 10 ------------------------------------------------------------------------


def test_criterion_10_determinism():
    code = CodeSpec(n_bits=64)
    per = PerModel.exponential(1.0, 1.5)
    checks = {}
    sched = SnrSchedule([0.6, 0.9])
    a = estimate_joint_errors(code, sched, 4000, 1, workers=1, block_size=512)
    b = estimate_joint_errors(code, sched, 4000, 1, workers=2, block_size=512)
    checks["joint errors"] = np.array_equal(a.joint_counts, b.joint_counts) and np.array_equal(
        a.marginal_counts, b.marginal_counts)
    checks["measured PER"] = np.array_equal(
        measure_per(code, [1.0, 1.5], 2000, 2, workers=1)[0], measure_per(code, [1.0, 1.5], 2000, 2, workers=3)[0])
    p = PepProblem(1.0, SnrSchedule([0.3, 0.8, 0.5]))
    checks["PEP MC"] = pep_joint_mc(p, 300_000, 3, workers=1, block_size=50_000) == pep_joint_mc(
        p, 300_000, 3, workers=2, block_size=50_000)
    checks["IE fading MC"] = avg_failure_ie_mc(per, 2, 3.0, 60_000, 4, workers=1, block_size=8192) == avg_failure_ie_mc(
        per, 2, 3.0, 60_000, 4, workers=2, block_size=8192)
    checks["exact fading MC"] = all(
        np.array_equal(u, v)
        for u, v in zip(avg_failure_exact_mc(code, 2, 3.0, 256, 4, 5, workers=1, block_size=64, all_rounds=True),
                        avg_failure_exact_mc(code, 2, 3.0, 256, 4, 5, workers=2, block_size=64, all_rounds=True)))
    checks["rounds MC"] = avg_rounds_mc(per, 2.0, 50_000, 6, workers=1, block_size=8192) == avg_rounds_mc(
        per, 2.0, 50_000, 6, workers=3, block_size=8192)
    checks["HARQ sampler"] = np.array_equal(
        sample_error_sequences(ModelKind.DE, per, sched, 2, 10_000, 7),
        sample_error_sequences(ModelKind.DE, per, sched, 2, 10_000, 7))
    ok = all(checks.values())
    record("10", ok, ", ".join(f"{k}={'same' if v else 'DIFFERENT'}" for k, v in checks.items()))
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
