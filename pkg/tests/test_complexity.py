import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnmode import (
    BetaSchedule,
    ConfigError,
    Dataset,
    InstanceError,
    InstanceMeans,
    NonIdentifiableError,
    SyntheticSpec,
    bad_event,
    brute_force_mode,
    gaps,
    generate_synthetic,
    init_point_state,
    kl_bernoulli,
    kl_gaussian,
    lower_bound_findknn,
    mode_gaps,
    upper_bound_findknn,
    upper_bound_mode,
    z_threshold,
)
from knnmode.complexity import bad_events, exact_mus, sorted_gaps
from knnmode.dataset import knn_distances

from conftest import exact_session

EMP = BetaSchedule("empirical", 0.01, 20)
THEO = BetaSchedule("theoretical", 0.01, 20)


def scan_threshold(gap, sched, limit=10**6):
    for z in range(1, limit):
        if sched(z) <= gap / 8:
            return z
    raise AssertionError("threshold beyond scan limit")


class TestGaps:
    def test_line_example(self, line4):
        prof = gaps(line4, 1, 2)
        np.testing.assert_allclose(prof.gaps, [0.05, 0.05, 0.55])
        np.testing.assert_allclose(prof.distances, [0.04, 0.09, 0.64])
        assert prof.identifiable

    def test_one_sided_ends(self):
        d = [0.1, 0.3, 0.6]
        np.testing.assert_allclose(sorted_gaps(d, 1), [0.2, 0.2, 0.5])
        np.testing.assert_allclose(sorted_gaps(d, 3), [0.5, 0.3, 0.3])

    def test_equidistant_not_identifiable(self):
        ds = Dataset(np.array([[0.0], [-0.5], [0.5]]))
        prof = gaps(ds, 0, 1)
        assert not prof.identifiable
        with pytest.raises(NonIdentifiableError):
            upper_bound_findknn(ds, 0, 1, EMP)

    def test_bad_rank(self):
        with pytest.raises(ConfigError):
            sorted_gaps([0.1, 0.2], 3)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=12, unique=True), st.data())
    def test_gap_is_distance_to_kth(self, d, data):
        d = sorted(d)
        k = data.draw(st.integers(1, len(d)))
        g = sorted_gaps(d, k)
        for r, x in enumerate(d):
            if r != k - 1:
                assert g[r] == pytest.approx(abs(x - d[k - 1]))
        assert g[k - 1] == pytest.approx(min(g[r] for r in (k - 2, k) if 0 <= r < len(d)))

    def test_mode_gaps(self, line4):
        mg = mode_gaps(line4, 2)
        np.testing.assert_allclose(mg, [0.16, 0.0, 0.16, 0.55])

    def test_profile_carries_mode_gaps(self, line4):
        assert gaps(line4, 0, 2).mode_gaps is None
        np.testing.assert_allclose(gaps(line4, 0, 2, with_mode=True).mode_gaps, mode_gaps(line4, 2))


class TestZThreshold:
    @pytest.mark.parametrize("gap", [0.9, 0.5, 0.2])
    @pytest.mark.parametrize("sched", [EMP, THEO], ids=["empirical", "theoretical"])
    def test_matches_linear_scan(self, gap, sched):
        assert z_threshold(gap, sched) == scan_threshold(gap, sched)

    @settings(max_examples=40)
    @given(st.floats(0.02, 8.0))
    def test_minimal(self, gap):
        z = z_threshold(gap, EMP)
        assert EMP(z) <= gap / 8
        assert z == 1 or EMP(z - 1) > gap / 8

    def test_huge_gap(self):
        assert z_threshold(1e6, THEO) == 1
        assert z_threshold(math.inf, THEO) == 1

    @pytest.mark.parametrize("gap", [0.2, 0.05, 0.01])
    def test_halving_gap_roughly_quadruples(self, gap):
        ratio = z_threshold(gap / 2, EMP) / z_threshold(gap, EMP)
        assert 3 <= ratio <= 6

    @pytest.mark.parametrize("gap", [0.0, -0.1])
    def test_nonpositive_gap(self, gap):
        with pytest.raises(NonIdentifiableError):
            z_threshold(gap, EMP)


class TestUpperBounds:
    def test_findknn_is_three_times_threshold_sum(self, line4):
        sched = BetaSchedule("empirical", 0.01, 4)
        expected = 3 * sum(scan_threshold(g, sched) for g in (0.05, 0.05, 0.55))
        assert upper_bound_findknn(line4, 1, 2, sched) == expected

    def test_mode_bound_composition(self):
        # points -0.5, -0.4, -0.1, 0.5: every k=2 distance is distinct from its neighbours
        ds = Dataset(np.array([[-0.5], [-0.4], [-0.1], [0.5]]))
        sched = BetaSchedule("empirical", 0.01, 4)
        search = 0
        kd = []
        for i in range(4):
            d = sorted(ds.local_distances[i])
            g = [d[1] - d[0], min(d[1] - d[0], d[2] - d[1]), d[2] - d[1]]
            search += 3 * sum(scan_threshold(x, sched) for x in g)
            kd.append(d[1])
        mode = int(np.argmin(kd))
        extra = sum(scan_threshold(kd[i] - kd[mode], sched) for i in range(4) if i != mode)
        assert upper_bound_mode(ds, 2, sched) == search + extra

    def test_mode_bound_needs_unique_mode(self):
        ds = Dataset(np.array([[0.0], [0.0], [0.5]]))
        with pytest.raises(NonIdentifiableError):
            upper_bound_mode(ds, 1, BetaSchedule("empirical", 0.01, 3))

    def test_bound_scales_inversely_with_gap_squared(self):
        a = generate_synthetic(SyntheticSpec("line-with-gaps", 10, 64, 1.0, seed=3))
        b = generate_synthetic(SyntheticSpec("line-with-gaps", 10, 64, 0.5, seed=3))
        sched = BetaSchedule("empirical", 0.01, 10)
        ratio = upper_bound_mode(b, 3, sched) / upper_bound_mode(a, 3, sched)
        assert 3 <= ratio <= 6


class TestBadEvent:
    mus = (0.2, 0.45)

    @pytest.mark.parametrize("mean,width,rank,bad", [
        (0.1, 0.01, 1, False),
        (0.1, 0.05, 1, True),
        (0.6, 0.01, 3, False),
        (0.6, 0.1, 3, True),
        (0.3, 0.01, 2, False),
        (0.3, 0.04, 2, True),
        (0.3, 0.06, 2, True),
    ])
    def test_cases(self, mean, width, rank, bad):
        assert bad_event(mean, width, rank, 2, self.mus) is bad

    def test_exact_mus_with_missing_side(self):
        assert exact_mus([0.1, 0.3, 0.6], 1) == (-math.inf, pytest.approx(0.2))
        assert exact_mus([0.1, 0.3, 0.6], 3) == (pytest.approx(0.45), math.inf)

    def test_exact_state_has_no_bad_events(self, ladder):
        state = init_point_state(ladder, 0, exact_session(ladder), BetaSchedule("empirical", 0.01, 4), k=2)
        assert not bad_events(state, gaps(ladder, 0, 2)).any()


class TestDivergences:
    def test_gaussian_closed_form(self):
        assert kl_gaussian(0.1, 0.3, 0.25) == pytest.approx(0.32)
        assert kl_gaussian(0.3, 0.1, 0.25) == kl_gaussian(0.1, 0.3, 0.25)
        assert kl_gaussian(0.4, 0.4, 1.0) == 0.0

    def test_bernoulli_identities(self):
        assert kl_bernoulli(0.3, 0.3) == 0.0
        assert kl_bernoulli(0.5, 0.25) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3))

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_bernoulli_dominates_squared_difference(self, p, q):
        # Pinsker: KL >= 2 (p - q)^2
        assert kl_bernoulli(p, q) >= 2 * (p - q) ** 2 - 1e-12

    @pytest.mark.parametrize("p,q", [(0.0, 0.5), (0.5, 1.0), (1.2, 0.3)])
    def test_bernoulli_domain(self, p, q):
        with pytest.raises(ValueError):
            kl_bernoulli(p, q)

    def test_gaussian_domain(self):
        with pytest.raises(ValueError):
            kl_gaussian(0.1, 0.2, 0.0)


class TestLowerBound:
    def test_ladder_closed_form(self):
        inst = InstanceMeans((0.1, 0.3, 0.6), 2, sigma=0.25)
        expected = math.log(1 / 0.24) * (1 / 0.32 + 1 / 0.72 + 1 / 0.32)
        assert lower_bound_findknn(inst, 0.1) == pytest.approx(expected, rel=1e-9)
        assert inst.closest_rival() == 1

    def test_halving_gaps_quadruples(self):
        a = InstanceMeans((0.1, 0.3, 0.6), 2)
        b = InstanceMeans((0.2, 0.3, 0.45), 2)
        assert lower_bound_findknn(b, 0.05) == pytest.approx(4 * lower_bound_findknn(a, 0.05))

    def test_bernoulli_model(self):
        inst = InstanceMeans((0.2, 0.5, 0.7), 1, model="bernoulli")
        expected = math.log(1 / (2.4 * 0.1)) * (1 / kl_bernoulli(0.5, 0.2) + 1 / kl_bernoulli(0.7, 0.2)
                                                 + 1 / kl_bernoulli(0.2, 0.5))
        assert lower_bound_findknn(inst, 0.1) == pytest.approx(expected)

    def test_tie_prefers_lower_rival(self):
        assert InstanceMeans((0.25, 0.5, 0.75), 2).closest_rival() == 1

    @pytest.mark.parametrize("delta", [0.0, 0.2])
    def test_delta_range(self, delta):
        with pytest.raises(ValueError):
            lower_bound_findknn(InstanceMeans((0.1, 0.3), 1), delta)

    @pytest.mark.parametrize("means", [(0.1, 0.1, 0.3), (0.3, 0.1), (0.5,)])
    def test_means_must_increase(self, means):
        with pytest.raises(InstanceError):
            lower_bound_findknn(InstanceMeans(means, 1), 0.1)

    def test_bernoulli_range(self):
        with pytest.raises(InstanceError):
            lower_bound_findknn(InstanceMeans((0.5, 1.0), 1, model="bernoulli"), 0.1)

    def test_lower_bound_below_upper_bound(self, ladder):
        inst = InstanceMeans(tuple(np.sort(ladder.local_distances[0])), 2, sigma=0.25)
        sched = BetaSchedule("theoretical", 0.01, 4)
        assert lower_bound_findknn(inst, 0.01) < upper_bound_findknn(ladder, 0, 2, sched)

    def test_mode_gap_matches_knn_distances(self):
        ds = generate_synthetic(SyntheticSpec("uniform-cube", 15, 6, seed=1))
        kd = knn_distances(ds, 4)
        np.testing.assert_allclose(mode_gaps(ds, 4), kd - kd[brute_force_mode(ds, 4)])
