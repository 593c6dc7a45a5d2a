"""End-to-end acceptance checks.

Each test appends one ``criterion N: PASS/FAIL ...`` line that is printed in
the terminal summary, then asserts.  The whole module takes several minutes.
"""

import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnmode import (
    BetaSchedule,
    InstanceMeans,
    OracleSession,
    SyntheticSpec,
    beta_theoretical,
    brute_force_mode,
    gaps,
    generate_synthetic,
    kl_bernoulli,
    kl_gaussian,
    lower_bound_findknn,
    query_capped,
    run_find_knn,
    upper_bound_findknn,
)
from knnmode.cli import main
from knnmode.harness import preset, run_preset, run_trials
from knnmode.mode_estimator import EstimatorConfig, baseline_naive_plus_path, baseline_random_sampling_path, estimate_mode

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance


def report(num, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {num}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def binom_cdf(x, n, p):
    return sum(math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(x + 1))


def upper_confidence(errors, n, level=0.95):
    """One-sided upper confidence bound on a binomial rate (exact, by bisection)."""
    if errors >= n:
        return 1.0
    lo, hi = errors / n, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if binom_cdf(errors, n, mid) > 1 - level:
            lo = mid
        else:
            hi = mid
    return hi


def test_criterion_1_exact_oracle_equivalence():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    hits = 0
    for idx in range(100):
        n = int(rng.integers(10, 51))
        k = (1, 3, n - 1)[idx % 3]
        ds = generate_synthetic(SyntheticSpec("uniform-cube", n, 8, seed=idx))
        cfg = EstimatorConfig(k, BetaSchedule("empirical", 0.01, n))
        rec = estimate_mode(ds, cfg, OracleSession(ds, "exact"))
        hits += rec.returned == brute_force_mode(ds, k)
    elapsed = time.perf_counter() - start
    ok = hits == 100 and elapsed < 60
    assert report(1, ok, f"{hits}/100 match brute force in {elapsed:.1f} s")


@pytest.fixture(scope="module")
def delta_true_runs():
    sched = BetaSchedule("theoretical", 0.045, 20)
    cfg = EstimatorConfig(3, sched)
    wrong = broken = 0
    for t in range(400):
        ds = generate_synthetic(SyntheticSpec("line-with-gaps", 20, 256, seed=t))
        rec = estimate_mode(ds, cfg, OracleSession(ds, 2, sigma=0.1, seed=t))
        wrong += not rec.correct
        broken += not rec.interval_held
    return wrong, broken


def test_criterion_2_delta_true(delta_true_runs):
    wrong, _ = delta_true_runs
    ucb = upper_confidence(wrong, 400)
    ok = ucb <= 0.045
    assert report(2, ok, f"{wrong}/400 wrong, 95% upper bound on error rate {ucb:.4f} (need <= 0.045)")


def test_criterion_3_interval_validity(delta_true_runs):
    _, broken = delta_true_runs
    ok = broken / 400 <= 0.045
    assert report(3, ok, f"{broken}/400 runs with a k-NN interval missing the true value (need <= 0.045)")


def test_criterion_4_baseline_dominance():
    res = run_trials(preset("fig1-model1-desk", trials=200))
    grid = res.metadata["budget_grid"]
    acc = {m: [r.accuracy for r in res.rows_for(m)] for m in ("adaptive", "naive-plus", "random-sampling")}
    se = {m: [r.accuracy_se for r in res.rows_for(m)] for m in acc}

    def first_perfect(values):
        return next((g for g, v in enumerate(values) if v >= 1.0), math.inf)

    ok = True
    notes = []
    for base in ("naive-plus", "random-sampling"):
        inversions = [g for g in range(len(grid)) if acc["adaptive"][g] < acc[base][g]]
        small = all(acc[base][g] - acc["adaptive"][g] <= max(se["adaptive"][g], se[base][g]) for g in inversions)
        earlier = first_perfect(acc["adaptive"]) < first_perfect(acc[base])
        ok &= len(inversions) <= 1 and small and earlier
        notes.append(f"{base}: {len(inversions)} inversions")
    curve = " ".join(f"{a:.2f}" for a in acc["adaptive"])
    assert report(4, ok, f"adaptive accuracy [{curve}] over budgets {grid[0]}..{grid[-1]}; " + ", ".join(notes))


def test_criterion_5_gap_scaling():
    n, k, runs = 10, 3, 100
    sched = BetaSchedule("theoretical", 0.045, n)
    base = generate_synthetic(SyntheticSpec("line-with-gaps", n, 64, seed=0))
    ref = int(np.argmin([upper_bound_findknn(base, j, k, sched) for j in range(n)]))
    means, violations = [], 0
    for c in (1.0, 0.5, 0.25):
        ds = generate_synthetic(SyntheticSpec("line-with-gaps", n, 64, gap_scale=c, seed=0))
        bound = upper_bound_findknn(ds, ref, k, sched)
        qs = []
        for s in range(runs):
            r = run_find_knn(ds, ref, k, OracleSession(ds, 2, sigma=0.1, seed=s), sched)
            qs.append(r.queries)
            violations += r.coverage_held and r.queries > bound
        means.append(float(np.mean(qs)))
    ratios = [means[1] / means[0], means[2] / means[1]]
    ok = all(3 <= q <= 6 for q in ratios) and violations == 0
    assert report(5, ok, f"halving ratios {ratios[0]:.2f}, {ratios[1]:.2f}; {violations} runs above 3*sum(z)")


def test_criterion_6_lower_bound(ladder):
    inst = InstanceMeans((0.1, 0.3, 0.6), 2, sigma=0.25)
    bound = lower_bound_findknn(inst, 0.1)
    closed = math.log(1 / 0.24) * (1 / 0.32 + 1 / 0.72 + 1 / 0.32)
    rel = abs(bound - closed) / closed
    np.testing.assert_allclose(np.sort(ladder.local_distances[0]), inst.means, atol=1e-15)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sched = BetaSchedule("theoretical", 0.1, 4)
    qs = [run_find_knn(ladder, 0, 2, OracleSession(ladder, 2, sigma=0.25, seed=s), sched).queries for s in range(100)]
    mean = float(np.mean(qs))
    ok = rel <= 1e-9 and mean >= bound
    assert report(6, ok, f"bound {bound:.4f} (rel err {rel:.1e}); mean k-NN search queries {mean:.0f}")


def _cap_stress_runs():
    n, m = 20, 32
    limit = 2 * m * n * (n - 1)
    worst_total = worst_pair = 0
    for family in ("binary-hypercube", "gaussian-clusters", "uniform-cube"):
        for seed in range(4):
            ds = generate_synthetic(SyntheticSpec(family, n, m, seed=seed))
            cfg = EstimatorConfig(3, BetaSchedule("empirical", 0.001, n), safety_cap=10**9)
            sessions = [OracleSession(ds, 1, seed=seed, cap=True) for _ in range(3)]
            estimate_mode(ds, cfg, sessions[0])
            baseline_naive_plus_path(ds, cfg, sessions[1], [10**8])
            baseline_random_sampling_path(ds, cfg, sessions[2], [10**8])
            for s in sessions:
                worst_total = max(worst_total, s.total_queries)
                worst_pair = max(worst_pair, int(s.pair_queries.max()))
    return limit, worst_total, worst_pair


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**63 - 1), st.lists(st.tuples(st.integers(0, 19), st.integers(0, 19)), max_size=2000))
def test_capped_oracle_hammering(seed, pairs):
    ds = generate_synthetic(SyntheticSpec("uniform-cube", 20, 32, seed=0))
    s = OracleSession(ds, 1, seed=seed, cap=True)
    for i, j in pairs:
        if i != j:
            query_capped(s, ds, i, j)
    assert s.pair_queries.max() <= 2 * ds.m
    assert s.total_queries <= 2 * ds.m * ds.n * (ds.n - 1)


def test_criterion_7_worst_case_cap():
    limit, total, pair = _cap_stress_runs()
    ok = total <= limit and pair <= 64
    assert report(7, ok, f"max total {total} <= {limit}, max per-pair {pair} <= 64")


def test_criterion_8_closed_forms(line4):
    checks = {
        "beta(1)": abs(beta_theoretical(1, 10, 0.045) - 5.232) <= 1e-3,
        "kl_gaussian": abs(kl_gaussian(0.3, 0.1, 0.25) - 0.32) <= 1e-12,
        "kl_bernoulli": all(kl_bernoulli(p, p) == 0 for p in (0.01, 0.3, 0.5, 0.99)),
        "gaps": np.allclose(gaps(line4, 1, 2).gaps, [0.05, 0.05, 0.55], rtol=0, atol=1e-12),
    }
    failed = [name for name, good in checks.items() if not good]
    ok = not failed
    assert report(8, ok, "all closed forms match" if ok else f"mismatch in {failed}")


def _weakly_increasing(values, ses):
    return all(b >= a or a - b <= max(sa, sb) for a, b, sa, sb in zip(values, values[1:], ses, ses[1:]))


def test_criterion_9_cbeta_trend():
    res = run_preset("sweep-cbeta-desk")
    rows = sorted(res.rows, key=lambda r: r.value)
    acc = [r.accuracy for r in rows]
    qs = [r.mean_queries for r in rows]
    ok = _weakly_increasing(acc, [r.accuracy_se for r in rows]) and _weakly_increasing(qs, [r.queries_se for r in rows])
    assert report(9, ok, "accuracy [" + " ".join(f"{a:.2f}" for a in acc) + "], queries ["
                  + " ".join(f"{q:.0f}" for q in qs) + "]")


def test_criterion_10_determinism(tmp_path):
    names = ["fig1-model1-desk", "fig1-model2-desk", "sweep-n-desk", "sweep-cbeta-desk"]
    same = []
    for name in names:
        blobs = []
        for run in range(2):
            for fmt in ("csv", "json"):
                out = tmp_path / f"{name}-{run}.{fmt}"
                assert main(["--preset", name, "--trials", "3", "--seed", "7", "--format", fmt,
                             "--verbose", "--out", str(out), "--quiet"]) == 0
                blobs.append(out.read_bytes())
        same.append(blobs[0] == blobs[2] and blobs[1] == blobs[3])
    ok = all(same)
    assert report(10, ok, f"{sum(same)}/{len(names)} presets byte-identical across two runs")
