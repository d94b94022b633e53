"""Entropy and mutual information over finite supports, in nats.

All logarithms are natural.  The conventions 0*log(0) = 0 and
0*log(0/a) = 0 are applied throughout.  Structural sums are checked to
1e-12; inequality checks carry a 1e-10 slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

SUM_TOL = 1e-12
INEQ_TOL = 1e-10


def _check_pmf(values: np.ndarray, what: str) -> None:
    if np.any(values < -SUM_TOL):
        raise ValueError(f"{what} has negative entries")
    total = float(values.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"{what} sums to {total}, not 1")


@dataclass(frozen=True)
class FiniteDistribution:
    """Probability mass function over an explicit finite support."""

    support: tuple
    pmf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pmf", np.asarray(self.pmf, dtype=float))
        if len(self.support) != len(self.pmf):
            raise ValueError("support and pmf lengths differ")
        _check_pmf(self.pmf, "pmf")

    @classmethod
    def uniform(cls, support: Sequence) -> "FiniteDistribution":
        n = len(support)
        return cls(tuple(support), np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, support: Sequence, atom) -> "FiniteDistribution":
        pmf = np.zeros(len(support))
        pmf[list(support).index(atom)] = 1.0
        return cls(tuple(support), pmf)

    @classmethod
    def from_weights(cls, weighted: Mapping) -> "FiniteDistribution":
        items = list(weighted.items())
        total = float(sum(w for _, w in items))
        return cls(
            tuple(k for k, _ in items),
            np.array([w / total for _, w in items]),
        )

    def prob(self, symbol) -> float:
        return float(self.pmf[self.support.index(symbol)])

    def to_json(self) -> dict:
        return {"support": list(self.support), "pmf": [float(p) for p in self.pmf]}


@dataclass(frozen=True)
class JointDistribution:
    """Joint pmf over the product of two explicit finite supports."""

    x_support: tuple
    y_support: tuple
    pmf: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pmf", np.asarray(self.pmf, dtype=float))
        if self.pmf.shape != (len(self.x_support), len(self.y_support)):
            raise ValueError("pmf shape does not match supports")
        _check_pmf(self.pmf.ravel(), "joint pmf")

    @classmethod
    def from_json(cls, data: dict) -> "JointDistribution":
        return cls(
            tuple(data["x_support"]), tuple(data["y_support"]), np.array(data["pmf"])
        )

    def to_json(self) -> dict:
        return {
            "x_support": list(self.x_support),
            "y_support": list(self.y_support),
            "pmf": [[float(v) for v in row] for row in self.pmf],
        }

    def x_marginal(self) -> FiniteDistribution:
        return FiniteDistribution(self.x_support, self.pmf.sum(axis=1))

    def y_marginal(self) -> FiniteDistribution:
        return FiniteDistribution(self.y_support, self.pmf.sum(axis=0))

    def swap(self) -> "JointDistribution":
        return JointDistribution(self.y_support, self.x_support, self.pmf.T)


@dataclass(frozen=True)
class Channel:
    """Conditional pmf nu(y|x): one row per input symbol, rows sum to 1."""

    x_support: tuple
    y_support: tuple
    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=float))
        if self.rows.shape != (len(self.x_support), len(self.y_support)):
            raise ValueError("rows shape does not match supports")
        if np.any(self.rows < -SUM_TOL):
            raise ValueError("channel has negative entries")
        sums = self.rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("channel rows must sum to 1")

    def joint(self, source: FiniteDistribution) -> JointDistribution:
        if source.support != self.x_support:
            raise ValueError("source support does not match channel input")
        return JointDistribution(
            self.x_support, self.y_support, source.pmf[:, None] * self.rows
        )


@dataclass(frozen=True)
class PartitionMap:
    """Symbol -> cell representative map, idempotent on representatives."""

    mapping: Mapping

    def __post_init__(self):
        for rep in set(self.mapping.values()):
            if rep in self.mapping and self.mapping[rep] != rep:
                raise ValueError(f"representative {rep!r} is not a fixed point")

    def __call__(self, symbol):
        return self.mapping[symbol]

    @classmethod
    def identity(cls, support: Sequence) -> "PartitionMap":
        return cls({s: s for s in support})

    @classmethod
    def constant(cls, support: Sequence, rep) -> "PartitionMap":
        return cls({s: rep for s in support})


def entropy(p) -> float:
    """Shannon entropy -sum p log p in nats, with 0 log 0 = 0.

    An exactly-uniform pmf returns log(n) directly so that comparisons
    against log-cardinality bounds are exact.
    """
    pmf = p.pmf if isinstance(p, FiniteDistribution) else np.asarray(p, dtype=float)
    pos = pmf[pmf > 0]
    if pos.size and np.all(pos == pos[0]):
        return math.log(pos.size) if pos.size > 1 else 0.0
    return float(-(pos * np.log(pos)).sum())


def binary_entropy(p: float) -> float:
    """H(p) = -p log p - (1-p) log(1-p), in nats."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p in (0.0, 1.0):
        return 0.0
    return float(-p * math.log(p) - (1.0 - p) * math.log(1.0 - p))


def mutual_information(j: JointDistribution) -> float:
    """I(X;Y) = H(X) + H(Y) - H(X,Y), clamped at 0."""
    h_x = entropy(j.pmf.sum(axis=1))
    h_y = entropy(j.pmf.sum(axis=0))
    h_xy = entropy(j.pmf.ravel())
    return max(0.0, h_x + h_y - h_xy)


def conditional_entropy(j: JointDistribution) -> float:
    """H(X|Y) = H(X,Y) - H(Y)."""
    return max(0.0, entropy(j.pmf.ravel()) - entropy(j.pmf.sum(axis=0)))


def channel_mutual_information(source: FiniteDistribution, channel: Channel) -> float:
    return mutual_information(channel.joint(source))


def partition_mutual_information(
    j: JointDistribution, x_map: Callable, y_map: Callable
) -> float:
    """Mutual information of the joint coarsened on both sides.

    Evaluates the partition form of I on the given cell maps; it is
    monotone under refinement and reaches mutual_information(j) at the
    identity (discrete) partitions.
    """
    coarse = quantize_y(quantize_x(j, x_map), y_map)
    return mutual_information(coarse)


def _pushforward_support(support: Sequence, cell_map: Callable) -> tuple:
    seen: list = []
    for s in support:
        rep = cell_map(s)
        if rep not in seen:
            seen.append(rep)
    return tuple(seen)


def quantize_y(j: JointDistribution, q: Callable) -> JointDistribution:
    """Pushforward of the joint along a cell map on the Y side.

    Data processing: the result never carries more mutual information
    than the input (checked to 1e-12).
    """
    new_support = _pushforward_support(j.y_support, q)
    col = {rep: i for i, rep in enumerate(new_support)}
    pmf = np.zeros((len(j.x_support), len(new_support)))
    for jy, y in enumerate(j.y_support):
        pmf[:, col[q(y)]] += j.pmf[:, jy]
    out = JointDistribution(j.x_support, new_support, pmf)
    assert mutual_information(out) <= mutual_information(j) + SUM_TOL
    return out


def quantize_x(j: JointDistribution, q: Callable) -> JointDistribution:
    return quantize_y(j.swap(), q).swap()


def fano_gap(j: JointDistribution, decoder: Callable) -> tuple[float, float, float]:
    """Check H(X|Y) <= H(P_e) + P_e log|X| for a decoder f: Y -> X.

    Returns (H(X|Y), bound, slack); slack is asserted nonnegative up to
    1e-10.
    """
    p_error = 0.0
    for jy, y in enumerate(j.y_support):
        guess = decoder(y)
        for ix, x in enumerate(j.x_support):
            if x != guess:
                p_error += j.pmf[ix, jy]
    p_error = min(1.0, max(0.0, p_error))
    h_cond = conditional_entropy(j)
    bound = binary_entropy(p_error) + p_error * math.log(len(j.x_support))
    slack = bound - h_cond
    assert slack >= -INEQ_TOL, f"Fano violated: slack {slack}"
    return h_cond, bound, slack


def separated_mi_lower_bounds(
    s_size: int, D: float, n: int, alpha: float, a_size: int
) -> tuple[float, float]:
    """Closed-form lower bounds on I for a source uniform on a separated set.

    First bound: (1 - 1/D) log|S| - H(1/D), valid when the set is
    2*D*eps-separated and E d(X,Y) < eps, D > 2.  Second bound:
    log|S| - n H(alpha) - alpha n log|A|, valid for a 2eps-separated
    subset of A^n under the max metric when the expected number of
    eps-exceedances is below alpha n, alpha <= 1/2.
    """
    if not D > 2:
        raise ValueError("D must exceed 2")
    if not 0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 1/2]")
    if s_size < 1 or a_size < 1 or n < 1:
        raise ValueError("cardinalities must be positive")
    log_s = math.log(s_size)
    fano_bound = (1.0 - 1.0 / D) * log_s - binary_entropy(1.0 / D)
    counting_bound = log_s - n * binary_entropy(alpha) - alpha * n * math.log(a_size)
    return fano_bound, counting_bound


@dataclass(frozen=True)
class AdditivityReport:
    """Sub/superadditivity of I(Y; X,Z) under the detected hypotheses."""

    conditionally_independent: bool
    independent: bool
    i_y_xz: float
    i_y_x: float
    i_y_z: float
    subadditive_slack: float | None
    superadditive_slack: float | None


def additivity_checks(
    triple: np.ndarray,
    x_support: Sequence | None = None,
    y_support: Sequence | None = None,
    z_support: Sequence | None = None,
) -> AdditivityReport:
    """Detect X-Z (conditional) independence in p(x,y,z) and check the
    matching inequality for I(Y; X,Z).

    Conditional independence given Y implies I(Y;X,Z) <= I(Y;X) + I(Y;Z);
    plain independence of X and Z implies the reverse inequality.
    """
    p = np.asarray(triple, dtype=float)
    if p.ndim != 3:
        raise ValueError("triple joint must be a 3d array p[x, y, z]")
    _check_pmf(p.ravel(), "triple joint")
    nx, ny, nz = p.shape
    xs = tuple(x_support) if x_support is not None else tuple(range(nx))
    ys = tuple(y_support) if y_support is not None else tuple(range(ny))
    zs = tuple(z_support) if z_support is not None else tuple(range(nz))

    p_y = p.sum(axis=(0, 2))
    cond_ok = True
    for iy in range(ny):
        if p_y[iy] <= 0:
            continue
        slab = p[:, iy, :] / p_y[iy]
        gap = np.max(np.abs(slab - np.outer(slab.sum(axis=1), slab.sum(axis=0))))
        if gap > INEQ_TOL:
            cond_ok = False
            break
    p_xz = p.sum(axis=1)
    indep = bool(
        np.max(np.abs(p_xz - np.outer(p_xz.sum(axis=1), p_xz.sum(axis=0)))) <= INEQ_TOL
    )

    pair_support = tuple((x, z) for x in xs for z in zs)
    j_y_xz = JointDistribution(ys, pair_support, p.transpose(1, 0, 2).reshape(ny, -1))
    j_y_x = JointDistribution(ys, xs, p.sum(axis=2).T)
    j_y_z = JointDistribution(ys, zs, p.sum(axis=0))
    i_y_xz = mutual_information(j_y_xz)
    i_y_x = mutual_information(j_y_x)
    i_y_z = mutual_information(j_y_z)

    sub = sup = None
    if cond_ok:
        sub = i_y_x + i_y_z - i_y_xz
        assert sub >= -INEQ_TOL, f"subadditivity violated: slack {sub}"
    if indep:
        sup = i_y_xz - (i_y_x + i_y_z)
        assert sup >= -INEQ_TOL, f"superadditivity violated: slack {sup}"
    return AdditivityReport(
        conditionally_independent=cond_ok,
        independent=indep,
        i_y_xz=i_y_xz,
        i_y_x=i_y_x,
        i_y_z=i_y_z,
        subadditive_slack=sub,
        superadditive_slack=sup,
    )


@dataclass(frozen=True)
class MixtureReport:
    """Slacks of the mixture inequalities for I over a t-grid."""

    kind: str
    ts: tuple
    slacks: tuple

    @property
    def min_slack(self) -> float:
        return min(self.slacks)


def mixture_mi(
    *,
    mu1: FiniteDistribution | None = None,
    mu2: FiniteDistribution | None = None,
    nu: Channel | None = None,
    mu: FiniteDistribution | None = None,
    nu1: Channel | None = None,
    nu2: Channel | None = None,
    ts: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> MixtureReport:
    """Check concavity of I in the source / convexity in the channel.

    Call with (mu1, mu2, nu) for the source-mixture concavity check, or
    (mu, nu1, nu2) for the channel-mixture convexity check.  Each slack
    is asserted >= -1e-10.
    """
    if mu1 is not None and mu2 is not None and nu is not None:
        slacks = []
        i1 = channel_mutual_information(mu1, nu)
        i2 = channel_mutual_information(mu2, nu)
        for t in ts:
            mix = FiniteDistribution(mu1.support, (1 - t) * mu1.pmf + t * mu2.pmf)
            slack = channel_mutual_information(mix, nu) - ((1 - t) * i1 + t * i2)
            assert slack >= -INEQ_TOL, f"source concavity violated at t={t}: {slack}"
            slacks.append(slack)
        return MixtureReport(kind="source-concavity", ts=tuple(ts), slacks=tuple(slacks))
    if mu is not None and nu1 is not None and nu2 is not None:
        slacks = []
        i1 = channel_mutual_information(mu, nu1)
        i2 = channel_mutual_information(mu, nu2)
        for t in ts:
            mix = Channel(nu1.x_support, nu1.y_support, (1 - t) * nu1.rows + t * nu2.rows)
            slack = ((1 - t) * i1 + t * i2) - channel_mutual_information(mu, mix)
            assert slack >= -INEQ_TOL, f"channel convexity violated at t={t}: {slack}"
            slacks.append(slack)
        return MixtureReport(kind="channel-convexity", ts=tuple(ts), slacks=tuple(slacks))
    raise ValueError("supply either (mu1, mu2, nu) or (mu, nu1, nu2)")
