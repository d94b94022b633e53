import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meandim.metric import (
    CoverCertificate,
    ExactLimitError,
    FiniteMetricSpace,
    SeparatedCertificate,
    covering_number,
    max_separated_set,
    tame_growth_profile,
    validate_metric,
)


def line_space(xs):
    return FiniteMetricSpace.from_distance(list(xs), lambda a, b: abs(a - b))


def subsets_below_diameter(space, eps):
    """All point subsets of diameter strictly < eps, as bitmasks."""
    n = len(space)
    slack = space.slack
    out = []
    for mask in range(1, 1 << n):
        idx = [i for i in range(n) if (mask >> i) & 1]
        ok = all(
            space.matrix[a, b] < eps - slack
            for i, a in enumerate(idx)
            for b in idx[i + 1 :]
        )
        if ok:
            out.append(mask)
    return out


def set_cover_oracle(space, eps):
    """Exact covering number by dynamic programming over covered subsets.

    Independent of the branch-and-bound path inside covering_number: iterates
    dp[mask] = min blocks needed to cover mask, over all diameter-<eps blocks.
    """
    n = len(space)
    blocks = subsets_below_diameter(space, eps)
    full = (1 << n) - 1
    INF = n + 1
    dp = [INF] * (1 << n)
    dp[0] = 0
    for mask in range(1 << n):
        if dp[mask] == INF:
            continue
        # next uncovered point must be covered by some block
        rem = full & ~mask
        if rem == 0:
            continue
        e = (rem & -rem).bit_length() - 1
        for b in blocks:
            if (b >> e) & 1:
                nm = mask | b
                if dp[mask] + 1 < dp[nm]:
                    dp[nm] = dp[mask] + 1
    return dp[full]


def separated_oracle(space, delta):
    """Exact maximum separated-set size by exhaustive subset enumeration."""
    n = len(space)
    slack = space.slack
    best = 0
    for mask in range(1 << n):
        idx = [i for i in range(n) if (mask >> i) & 1]
        ok = all(
            space.matrix[a, b] >= delta - slack
            for i, a in enumerate(idx)
            for b in idx[i + 1 :]
        )
        if ok:
            best = max(best, len(idx))
    return best


def random_euclidean_space(rng, n, dim=2):
    pts = rng.random((n, dim))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    return FiniteMetricSpace.from_matrix(list(range(n)), d)


class TestValidateMetric:
    def test_single_point(self):
        space = line_space([0.0])
        assert validate_metric(space).ok

    def test_line_points(self):
        space = line_space([0.0, 1.0, 2.0])
        assert validate_metric(space).ok

    def test_symmetry_violation_listed(self):
        m = [[0.0, 1.0], [2.0, 0.0]]
        space = FiniteMetricSpace.from_matrix(["a", "b"], m)
        report = validate_metric(space)
        assert not report.ok
        assert report.symmetry
        assert report.symmetry[0][:2] == (0, 1)

    def test_triangle_violation_listed(self):
        m = [[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]]
        space = FiniteMetricSpace.from_matrix([0, 1, 2], m)
        report = validate_metric(space)
        assert report.triangle and not report.symmetry and not report.diagonal

    def test_empty_space_rejected(self):
        space = FiniteMetricSpace(points=(), matrix=np.zeros((0, 0)))
        with pytest.raises(ValueError):
            validate_metric(space)


class TestCoveringNumber:
    def test_singleton(self):
        count, cert = covering_number(line_space([0.5]), 0.1, mode="exact")
        assert count == 1
        assert not cert.validate(line_space([0.5]))

    def test_four_line_points_wide(self):
        space = line_space([0.0, 0.3, 0.6, 0.9])
        count, cert = covering_number(space, 0.35, mode="exact")
        assert count == 2
        assert set_cover_oracle(space, 0.35) == 2
        assert not cert.validate(space)

    def test_four_line_points_tight(self):
        space = line_space([0.0, 0.3, 0.6, 0.9])
        count, _ = covering_number(space, 0.25, mode="exact")
        assert count == 4
        assert set_cover_oracle(space, 0.25) == 4

    def test_exact_limit_enforced(self):
        space = line_space(np.linspace(0, 1, 20))
        with pytest.raises(ExactLimitError):
            covering_number(space, 0.1, mode="exact", exact_limit=16)

    def test_exact_matches_dp_oracle_random(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(2, 11))
            space = random_euclidean_space(rng, n)
            eps = float(rng.uniform(0.1, 1.2))
            count, cert = covering_number(space, eps, mode="exact")
            assert count == set_cover_oracle(space, eps)
            assert not cert.validate(space)

    def test_greedy_upper_bounds_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(2, 13))
            space = random_euclidean_space(rng, n)
            eps = float(rng.uniform(0.1, 1.0))
            exact_count, _ = covering_number(space, eps, mode="exact")
            greedy_count, cert = covering_number(space, eps, mode="greedy")
            assert greedy_count >= exact_count
            assert not cert.validate(space)

    def test_monotone_in_epsilon(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            space = random_euclidean_space(rng, 9)
            counts = [
                covering_number(space, eps, mode="exact")[0]
                for eps in (0.1, 0.2, 0.4, 0.8)
            ]
            assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_separated_lower_bounds_cover(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            space = random_euclidean_space(rng, int(rng.integers(2, 11)))
            eps = float(rng.uniform(0.1, 1.0))
            count, _ = covering_number(space, eps, mode="exact")
            sep = max_separated_set(space, eps, mode="exact")
            assert len(sep.members) <= count

    def test_invalid_epsilon(self):
        with pytest.raises(ValueError):
            covering_number(line_space([0.0, 1.0]), 0.0)

    def test_exact_rational_boundary(self):
        # distance exactly 3/10 is not strictly < 3/10: all singletons
        pts = [Fraction(0), Fraction(3, 10), Fraction(6, 10)]
        space = FiniteMetricSpace.from_distance(pts, lambda a, b: abs(a - b))
        assert space.exact
        count, _ = covering_number(space, Fraction(3, 10), mode="exact")
        assert count == 3
        count2, _ = covering_number(space, Fraction(3, 10) + Fraction(1, 10**9), mode="exact")
        assert count2 == 2


class TestMaxSeparatedSet:
    def test_singleton(self):
        cert = max_separated_set(line_space([0.3]), 0.5, mode="exact")
        assert cert.members == (0.3,)

    def test_four_line_points(self):
        space = line_space([0.0, 0.3, 0.6, 0.9])
        cert = max_separated_set(space, 0.4, mode="exact")
        assert len(cert.members) == 2
        assert separated_oracle(space, 0.4) == 2

    def test_delta_above_diameter(self):
        space = line_space([0.0, 0.2, 0.5])
        cert = max_separated_set(space, 0.75, mode="exact")
        assert len(cert.members) == 1

    def test_exact_matches_oracle_random(self):
        rng = np.random.default_rng(13)
        for _ in range(40):
            n = int(rng.integers(2, 11))
            space = random_euclidean_space(rng, n)
            delta = float(rng.uniform(0.1, 1.0))
            cert = max_separated_set(space, delta, mode="exact")
            assert len(cert.members) == separated_oracle(space, delta)
            assert not cert.validate(space)

    def test_greedy_is_maximal(self):
        rng = np.random.default_rng(17)
        space = random_euclidean_space(rng, 12)
        delta = 0.3
        cert = max_separated_set(space, delta, mode="greedy")
        chosen = set(cert.members)
        # no remaining point can be added
        for p in space.points:
            if p in chosen:
                continue
            i = space.index_of(p)
            dists = [space.matrix[i, space.index_of(q)] for q in cert.members]
            assert min(dists) < delta - space.slack

    def test_greedy_deterministic_scan_order(self):
        space = line_space([0.0, 0.35, 0.7, 1.05])
        cert = max_separated_set(space, 0.5, mode="greedy")
        assert cert.members == (0.0, 0.7)


@given(
    xs=st.lists(
        st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=8
    ),
    eps=st.floats(min_value=0.05, max_value=1.0),
)
@settings(max_examples=60, deadline=None)
def test_cover_and_packing_duality(xs, eps):
    space = line_space(sorted(set(xs)) or [0.0])
    count, cert = covering_number(space, eps, mode="exact")
    sep = max_separated_set(space, eps, mode="exact")
    assert len(sep.members) <= count
    assert not cert.validate(space)
    assert not sep.validate(space)


class TestTameGrowthProfile:
    def test_interval_grid_decreasing(self):
        space = line_space(np.round(np.arange(0, 1.0001, 0.01), 10))
        profile = tame_growth_profile(space, [0.2, 0.1, 0.05], delta=0.5)
        values = [r[2] for r in profile.rows]
        assert profile.decreasing
        assert values[0] > values[-1] > 0

    def test_single_point_all_zero(self):
        profile = tame_growth_profile(line_space([0.0]), [0.2, 0.1], delta=0.5)
        assert all(r[2] == 0.0 for r in profile.rows)

    def test_requires_decreasing_epsilons(self):
        with pytest.raises(ValueError):
            tame_growth_profile(line_space([0.0, 1.0]), [0.1, 0.2], delta=0.5)

    def test_per_epsilon_spaces(self):
        def finer(eps):
            step = eps / 4
            return line_space(np.round(np.arange(0, 1 + step / 2, step), 12))

        profile = tame_growth_profile(finer, [0.4, 0.2, 0.1], delta=0.5)
        assert len(profile.rows) == 3
        assert profile.rows[2][1] >= profile.rows[0][1]

    def test_product_metric_preserves_decrease(self):
        # base: coarse interval grid; product: windowed weighted-sum metric
        # over three coordinates with weights 1/2, 1, 1/2
        base = [0.0, 0.25, 0.5, 0.75, 1.0]
        pts = [(a, b, c) for a in base for b in base for c in base]
        weights = (0.5, 1.0, 0.5)

        def prod_dist(a, b):
            return sum(w * abs(x - y) for w, x, y in zip(weights, a, b))

        prod_space = FiniteMetricSpace.from_distance(pts, prod_dist)
        base_space = line_space(base)
        epsilons = [0.2, 0.1, 0.05]
        base_prof = tame_growth_profile(base_space, epsilons, delta=0.5)
        prod_prof = tame_growth_profile(prod_space, epsilons, delta=0.5)
        assert base_prof.decreasing
        assert prod_prof.decreasing


class TestSerialization:
    def test_space_json_roundtrip(self):
        space = line_space([0.0, 0.5, 1.0])
        again = FiniteMetricSpace.from_json(space.to_json())
        assert again.points == space.points
        assert np.allclose(np.asarray(again.matrix, float), np.asarray(space.matrix, float))

    def test_certificates_json(self):
        space = line_space([0.0, 0.3])
        _, cert = covering_number(space, 1.0, mode="exact")
        data = cert.to_json()
        assert data["epsilon"] == 1.0
        sep = max_separated_set(space, 0.2, mode="greedy")
        assert sep.to_json()["members"] == [0.0, 0.3]
