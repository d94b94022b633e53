import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meandim.info_theory import (
    Channel,
    FiniteDistribution,
    JointDistribution,
    PartitionMap,
    additivity_checks,
    binary_entropy,
    channel_mutual_information,
    conditional_entropy,
    entropy,
    fano_gap,
    mixture_mi,
    mutual_information,
    partition_mutual_information,
    quantize_y,
    separated_mi_lower_bounds,
)


def random_joint(rng, nx, ny):
    pmf = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)
    return JointDistribution(tuple(range(nx)), tuple(range(ny)), pmf)


def random_channel(rng, nx, ny):
    return Channel(
        tuple(range(nx)), tuple(range(ny)), rng.dirichlet(np.ones(ny), size=nx)
    )


class TestEntropy:
    def test_point_mass(self):
        assert entropy(FiniteDistribution((0, 1), [1.0, 0.0])) == 0.0

    def test_uniform_four(self):
        assert entropy(FiniteDistribution.uniform(range(4))) == pytest.approx(
            math.log(4), abs=1e-12
        )

    def test_quarter_three_quarters(self):
        assert entropy(np.array([0.25, 0.75])) == pytest.approx(0.562335, abs=1e-6)

    def test_uniform_is_exact_log(self):
        assert entropy(FiniteDistribution.uniform(range(7))) == math.log(7)

    @given(st.lists(st.floats(min_value=0.001, max_value=1.0), min_size=1, max_size=16))
    @settings(max_examples=80, deadline=None)
    def test_bounds(self, ws):
        pmf = np.array(ws) / sum(ws)
        h = entropy(pmf)
        assert -1e-12 <= h <= math.log(len(pmf)) + 1e-12


class TestBinaryEntropy:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_maximum(self):
        assert binary_entropy(0.5) == pytest.approx(math.log(2), abs=1e-15)

    def test_quarter(self):
        assert binary_entropy(0.25) == pytest.approx(0.562335, abs=1e-6)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            binary_entropy(1.5)

    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_concavity(self, a, b):
        mid = binary_entropy((a + b) / 2)
        assert mid >= (binary_entropy(a) + binary_entropy(b)) / 2 - 1e-12


class TestMutualInformation:
    def test_product_joint_zero(self):
        px = np.array([0.3, 0.7])
        py = np.array([0.2, 0.5, 0.3])
        j = JointDistribution((0, 1), (0, 1, 2), np.outer(px, py))
        assert mutual_information(j) == pytest.approx(0.0, abs=1e-12)

    def test_identity_coupling(self):
        k = 5
        j = JointDistribution(tuple(range(k)), tuple(range(k)), np.eye(k) / k)
        assert mutual_information(j) == pytest.approx(math.log(k), abs=1e-12)

    def test_binary_symmetric_quarter(self):
        j = JointDistribution(
            (0, 1), (0, 1), np.array([[0.375, 0.125], [0.125, 0.375]])
        )
        assert mutual_information(j) == pytest.approx(
            math.log(2) - binary_entropy(0.25), abs=1e-9
        )
        assert mutual_information(j) == pytest.approx(0.130812, abs=1e-6)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            j = random_joint(rng, int(rng.integers(2, 9)), int(rng.integers(2, 9)))
            i = mutual_information(j)
            assert i >= 0
            assert abs(i - mutual_information(j.swap())) < 1e-12
            assert i <= entropy(j.x_marginal()) + 1e-12
            assert i <= entropy(j.y_marginal()) + 1e-12

    def test_continuity_in_law(self):
        rng = np.random.default_rng(9)
        j = random_joint(rng, 4, 4)
        other = random_joint(rng, 4, 4)
        gaps = []
        for k in range(1, 30):
            t = 2.0**-k
            jk = JointDistribution(
                j.x_support, j.y_support, (1 - t) * j.pmf + t * other.pmf
            )
            assert np.max(np.abs(jk.pmf - j.pmf)) <= t
            gaps.append(abs(mutual_information(jk) - mutual_information(j)))
        assert gaps[-1] < 1e-6
        assert gaps[-1] < gaps[0]


class TestPartitionForm:
    def test_refinement_chain_monotone(self):
        rng = np.random.default_rng(4)
        j = random_joint(rng, 8, 8)
        ident = lambda s: s
        pair = lambda s: s - (s % 2)
        coarse = lambda s: 0
        chain = [
            partition_mutual_information(j, coarse, coarse),
            partition_mutual_information(j, pair, coarse),
            partition_mutual_information(j, pair, pair),
            partition_mutual_information(j, ident, pair),
            partition_mutual_information(j, ident, ident),
        ]
        for a, b in zip(chain, chain[1:]):
            assert b >= a - 1e-12
        assert chain[-1] == pytest.approx(mutual_information(j), abs=1e-12)
        assert chain[0] == pytest.approx(0.0, abs=1e-12)


class TestQuantize:
    def test_identity_unchanged(self):
        rng = np.random.default_rng(5)
        j = random_joint(rng, 3, 5)
        out = quantize_y(j, lambda y: y)
        assert out.y_support == j.y_support
        assert np.allclose(out.pmf, j.pmf)

    def test_constant_kills_information(self):
        rng = np.random.default_rng(6)
        j = random_joint(rng, 3, 5)
        out = quantize_y(j, lambda y: 0)
        assert mutual_information(out) == pytest.approx(0.0, abs=1e-12)

    def test_data_processing_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            nx, ny = int(rng.integers(2, 8)), int(rng.integers(2, 8))
            j = random_joint(rng, nx, ny)
            cells = rng.integers(0, max(1, ny - 1), size=ny)
            out = quantize_y(j, lambda y: int(cells[y]))
            assert mutual_information(out) <= mutual_information(j) + 1e-12

    def test_partition_map_idempotent(self):
        with pytest.raises(ValueError):
            PartitionMap({0: 1, 1: 2, 2: 2})
        pm = PartitionMap({0: 0, 1: 0, 2: 2})
        assert pm(1) == 0


class TestFano:
    def test_perfect_decoder(self):
        k = 4
        j = JointDistribution(tuple(range(k)), tuple(range(k)), np.eye(k) / k)
        h_cond, bound, slack = fano_gap(j, lambda y: y)
        assert h_cond == pytest.approx(0.0, abs=1e-12)
        assert bound == pytest.approx(0.0, abs=1e-12)
        assert slack == pytest.approx(0.0, abs=1e-12)

    def test_independent_uniform(self):
        k = 4
        px = np.full(k, 1.0 / k)
        py = np.array([0.1, 0.2, 0.3, 0.4])
        j = JointDistribution(tuple(range(k)), tuple(range(k)), np.outer(px, py))
        h_cond, bound, slack = fano_gap(j, lambda y: y)
        assert h_cond == pytest.approx(math.log(k), abs=1e-12)
        assert slack >= -1e-12

    def test_randomized(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            j = random_joint(rng, 4, 4)
            guesses = rng.integers(0, 4, size=4)
            _, _, slack = fano_gap(j, lambda y: int(guesses[y]))
            assert slack >= -1e-12


class TestSeparatedBounds:
    def test_singleton_set(self):
        fano_bound, _ = separated_mi_lower_bounds(1, 4.0, 1, 0.5, 2)
        assert fano_bound == pytest.approx(-binary_entropy(0.25), abs=1e-12)
        assert fano_bound <= 0

    def test_large_D_limit(self):
        s = math.exp(10)
        fano_bound, _ = separated_mi_lower_bounds(round(s), 1e6, 1, 0.5, 2)
        assert fano_bound == pytest.approx(10.0, abs=1e-4)

    def test_hand_value(self):
        fano_bound, _ = separated_mi_lower_bounds(32, 4.0, 1, 0.5, 2)
        assert fano_bound == pytest.approx(
            0.75 * math.log(32) - binary_entropy(0.25), abs=1e-12
        )
        assert fano_bound == pytest.approx(2.037, abs=5e-4)

    def test_counting_bound_value(self):
        _, counting = separated_mi_lower_bounds(32, 4.0, 6, 0.25, 3)
        expected = math.log(32) - 6 * binary_entropy(0.25) - 0.25 * 6 * math.log(3)
        assert counting == pytest.approx(expected, abs=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            separated_mi_lower_bounds(4, 2.0, 1, 0.5, 2)
        with pytest.raises(ValueError):
            separated_mi_lower_bounds(4, 3.0, 1, 0.7, 2)


class TestAdditivity:
    def test_y_determines_pair(self):
        # X, Z iid uniform bits, Y = (X, Z): equality on both sides
        p = np.zeros((2, 4, 2))
        for x in range(2):
            for z in range(2):
                p[x, 2 * x + z, z] = 0.25
        report = additivity_checks(p)
        assert report.conditionally_independent
        assert report.independent
        assert report.i_y_xz == pytest.approx(2 * math.log(2), abs=1e-10)
        assert report.subadditive_slack == pytest.approx(0.0, abs=1e-10)
        assert report.superadditive_slack == pytest.approx(0.0, abs=1e-10)

    def test_copies_are_conditionally_independent(self):
        # X = Z = Y uniform binary
        p = np.zeros((2, 2, 2))
        p[0, 0, 0] = 0.5
        p[1, 1, 1] = 0.5
        report = additivity_checks(p)
        assert report.conditionally_independent
        assert report.i_y_xz == pytest.approx(math.log(2), abs=1e-10)
        assert report.subadditive_slack >= -1e-10
        assert not report.independent

    def test_random_markov_chains(self):
        rng = np.random.default_rng(10)
        for _ in range(500):
            ny = int(rng.integers(2, 5))
            nx = int(rng.integers(2, 5))
            nz = int(rng.integers(2, 5))
            py = rng.dirichlet(np.ones(ny))
            px_y = rng.dirichlet(np.ones(nx), size=ny)
            pz_y = rng.dirichlet(np.ones(nz), size=ny)
            p = np.einsum("j,jx,jz->xjz", py, px_y, pz_y)
            report = additivity_checks(p)
            assert report.conditionally_independent
            assert report.subadditive_slack >= -1e-10

    def test_random_independent_inputs(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            nx, nz, ny = 3, 3, 4
            px = rng.dirichlet(np.ones(nx))
            pz = rng.dirichlet(np.ones(nz))
            py_xz = rng.dirichlet(np.ones(ny), size=(nx, nz))
            p = np.einsum("x,z,xzj->xjz", px, pz, py_xz)
            report = additivity_checks(p)
            assert report.independent
            assert report.superadditive_slack >= -1e-10


class TestMixture:
    def test_equal_sources_equality(self):
        rng = np.random.default_rng(12)
        mu = FiniteDistribution(tuple(range(3)), rng.dirichlet(np.ones(3)))
        nu = random_channel(rng, 3, 3)
        report = mixture_mi(mu1=mu, mu2=mu, nu=nu)
        assert report.kind == "source-concavity"
        assert max(abs(s) for s in report.slacks) < 1e-10

    def test_equal_channels_equality(self):
        rng = np.random.default_rng(13)
        mu = FiniteDistribution(tuple(range(3)), rng.dirichlet(np.ones(3)))
        nu = random_channel(rng, 3, 3)
        report = mixture_mi(mu=mu, nu1=nu, nu2=nu)
        assert report.kind == "channel-convexity"
        assert max(abs(s) for s in report.slacks) < 1e-10

    def test_randomized_both_directions(self):
        rng = np.random.default_rng(14)
        for _ in range(500):
            mu1 = FiniteDistribution(tuple(range(3)), rng.dirichlet(np.ones(3)))
            mu2 = FiniteDistribution(tuple(range(3)), rng.dirichlet(np.ones(3)))
            nu1 = random_channel(rng, 3, 3)
            nu2 = random_channel(rng, 3, 3)
            r1 = mixture_mi(mu1=mu1, mu2=mu2, nu=nu1)
            r2 = mixture_mi(mu=mu1, nu1=nu1, nu2=nu2)
            assert r1.min_slack >= -1e-10
            assert r2.min_slack >= -1e-10

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            mixture_mi(mu1=None, nu=None)


class TestSubsetEntropyBound:
    def test_constructed_subset_distributions(self):
        # Z random subset of [0, n) with E|Z| < alpha * n, alpha <= 1/2:
        # entropy of Z as a 2^n-ary variable is at most n * H(alpha)
        rng = np.random.default_rng(15)
        for _ in range(100):
            n = int(rng.integers(2, 11))
            alpha = float(rng.uniform(0.05, 0.5))
            sizes = np.array([bin(m).count("1") for m in range(2**n)])
            pmf = rng.dirichlet(np.ones(2**n))
            mean = float((pmf * sizes).sum())
            target = 0.9 * alpha * n
            if mean > target:
                # mix with the point mass at the empty set to pull E|Z| down
                t = 1 - target / mean
                pmf = (1 - t) * pmf
                pmf[0] += t
            assert (pmf * sizes).sum() < alpha * n
            assert entropy(pmf) <= n * binary_entropy(alpha) + 1e-10


class TestJsonInterfaces:
    def test_joint_roundtrip(self):
        rng = np.random.default_rng(16)
        j = random_joint(rng, 3, 4)
        again = JointDistribution.from_json(j.to_json())
        assert again.x_support == j.x_support
        assert np.allclose(again.pmf, j.pmf)

    def test_invalid_joint_rejected(self):
        with pytest.raises(ValueError):
            JointDistribution((0,), (0, 1), np.array([[0.4, 0.4]]))

    def test_channel_row_sums(self):
        with pytest.raises(ValueError):
            Channel((0, 1), (0, 1), np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_conditional_entropy_consistency(self):
        rng = np.random.default_rng(17)
        j = random_joint(rng, 4, 4)
        lhs = mutual_information(j)
        rhs = entropy(j.x_marginal()) - conditional_entropy(j)
        assert lhs == pytest.approx(rhs, abs=1e-10)
