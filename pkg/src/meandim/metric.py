"""Finite metric spaces and their combinatorial size measures.

Covering numbers count the minimum number of diameter-<eps subsets needed
to cover a space; separated sets give the matching lower bounds.  Both are
computed exactly (branch and bound, small spaces only) or greedily.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

# Strict-< / >= threshold decisions on float distances use this slack so that
# roundoff at the boundary cannot flip them.  Spaces built from Fractions
# compare exactly (slack 0).
FLOAT_SLACK = 1e-12

DEFAULT_COVER_EXACT_LIMIT = 16
DEFAULT_SEPARATED_EXACT_LIMIT = 24


class ExactLimitError(ValueError):
    """Exact search requested on a space larger than the configured cap."""


def _is_exact_value(v) -> bool:
    return isinstance(v, (Fraction, int)) and not isinstance(v, bool)


@dataclass(frozen=True)
class FiniteMetricSpace:
    """An indexed point set with a symmetric distance matrix.

    ``matrix[i, j]`` is the distance between ``points[i]`` and ``points[j]``.
    When every entry is a Fraction/int the space compares thresholds exactly;
    otherwise a 1e-12 slack is applied to strict comparisons.
    """

    points: tuple
    matrix: np.ndarray
    exact: bool = False

    def __len__(self) -> int:
        return len(self.points)

    @property
    def slack(self):
        return 0 if self.exact else FLOAT_SLACK

    def diameter(self):
        if len(self) == 1:
            return self.matrix[0, 0] * 0
        n = len(self)
        return max(self.matrix[i, j] for i in range(n) for j in range(i + 1, n))

    @classmethod
    def from_matrix(cls, points: Sequence, matrix) -> "FiniteMetricSpace":
        rows = [list(r) for r in matrix]
        exact = all(_is_exact_value(v) for r in rows for v in r)
        if exact:
            arr = np.empty((len(rows), len(rows)), dtype=object)
            for i, r in enumerate(rows):
                for j, v in enumerate(r):
                    arr[i, j] = Fraction(v)
        else:
            arr = np.asarray(rows, dtype=float)
        if arr.shape != (len(points), len(points)):
            raise ValueError("matrix shape does not match point count")
        pts = tuple(points)
        if len(set(pts)) != len(pts):
            raise ValueError("point identifiers must be unique")
        return cls(points=pts, matrix=arr, exact=exact)

    @classmethod
    def from_distance(cls, points: Sequence, dist: Callable) -> "FiniteMetricSpace":
        pts = list(points)
        n = len(pts)
        vals = [[dist(pts[i], pts[j]) for j in range(n)] for i in range(n)]
        return cls.from_matrix(pts, vals)

    @classmethod
    def from_json(cls, source) -> "FiniteMetricSpace":
        data = json.loads(source) if isinstance(source, str) else source
        return cls.from_matrix(data["points"], data["matrix"])

    def to_json(self) -> dict:
        return {
            "points": list(self.points),
            "matrix": [[float(v) for v in row] for row in self.matrix],
        }

    def index_of(self, point) -> int:
        return self.points.index(point)


@dataclass(frozen=True)
class CoverCertificate:
    """Witness for a covering number: blocks of diameter < epsilon."""

    blocks: tuple
    epsilon: float

    def validate(self, space: FiniteMetricSpace) -> list[str]:
        """Return a list of violations; empty means the certificate is valid."""
        problems = []
        index = {p: i for i, p in enumerate(space.points)}
        covered = set()
        for b, block in enumerate(self.blocks):
            idx = [index[p] for p in block]
            covered.update(idx)
            for a in range(len(idx)):
                for c in range(a + 1, len(idx)):
                    d = space.matrix[idx[a], idx[c]]
                    if not d < self.epsilon - space.slack:
                        problems.append(
                            f"block {b}: pair ({block[a]!r}, {block[c]!r}) at "
                            f"distance {float(d)} not < {self.epsilon}"
                        )
        missing = set(range(len(space))) - covered
        for i in sorted(missing):
            problems.append(f"point {space.points[i]!r} not covered")
        return problems

    def to_json(self) -> dict:
        return {"epsilon": float(self.epsilon), "blocks": [list(b) for b in self.blocks]}


@dataclass(frozen=True)
class SeparatedCertificate:
    """Witness for a packing bound: members pairwise >= delta apart."""

    members: tuple
    delta: float

    def validate(self, space: FiniteMetricSpace) -> list[str]:
        problems = []
        index = {p: i for i, p in enumerate(space.points)}
        idx = [index[p] for p in self.members]
        for a in range(len(idx)):
            for c in range(a + 1, len(idx)):
                d = space.matrix[idx[a], idx[c]]
                if not d >= self.delta - space.slack:
                    problems.append(
                        f"pair ({self.members[a]!r}, {self.members[c]!r}) at "
                        f"distance {float(d)} below {self.delta}"
                    )
        return problems

    def to_json(self) -> dict:
        return {"delta": float(self.delta), "members": list(self.members)}


@dataclass(frozen=True)
class MetricReport:
    """Violations of the metric axioms found by validate_metric."""

    diagonal: tuple
    symmetry: tuple
    triangle: tuple

    @property
    def ok(self) -> bool:
        return not (self.diagonal or self.symmetry or self.triangle)


def validate_metric(space: FiniteMetricSpace, tol: float = 1e-9) -> MetricReport:
    """Report all zero-diagonal / symmetry / triangle violations above tol."""
    if len(space) == 0:
        raise ValueError("space must be nonempty")
    m = np.asarray(space.matrix, dtype=float)
    n = len(space)
    diagonal = tuple(
        (i, float(m[i, i])) for i in range(n) if abs(m[i, i]) > tol
    )
    symmetry = tuple(
        (i, j, float(m[i, j]), float(m[j, i]))
        for i in range(n)
        for j in range(i + 1, n)
        if abs(m[i, j] - m[j, i]) > tol
    )
    # d(i,k) <= d(i,j) + d(j,k) for all triples, via broadcasting
    excess = m[:, None, :] - (m[:, :, None] + m[None, :, :])
    bad = np.argwhere(excess > tol)
    triangle = tuple(
        (int(i), int(j), int(k), float(excess[i, j, k])) for i, j, k in bad
    )
    return MetricReport(diagonal=diagonal, symmetry=symmetry, triangle=triangle)


def _strict_lt_matrix(space: FiniteMetricSpace, eps) -> list[int]:
    """Row bitmasks of the graph joining pairs at distance strictly < eps."""
    n = len(space)
    slack = space.slack
    masks = [0] * n
    for i in range(n):
        row = space.matrix[i]
        m = 0
        for j in range(n):
            if j != i and row[j] < eps - slack:
                m |= 1 << j
        masks[i] = m
    return masks


def _maximal_cliques(adj: list[int], n: int) -> list[int]:
    """All maximal cliques of the graph, as bitmasks (Bron-Kerbosch, pivoting)."""
    cliques: list[int] = []

    def expand(r: int, p: int, x: int) -> None:
        if p == 0 and x == 0:
            cliques.append(r)
            return
        # pivot: vertex of p|x with most neighbours in p
        pivot, best = -1, -1
        px = p | x
        while px:
            v = (px & -px).bit_length() - 1
            px &= px - 1
            c = bin(adj[v] & p).count("1")
            if c > best:
                best, pivot = c, v
        cand = p & ~adj[pivot]
        while cand:
            v = (cand & -cand).bit_length() - 1
            cand &= cand - 1
            vb = 1 << v
            expand(r | vb, p & adj[v], x & adj[v])
            p &= ~vb
            x |= vb

    expand(0, (1 << n) - 1, 0)
    return cliques


def _greedy_cover_size(universe: int, blocks: list[int]) -> list[int]:
    chosen = []
    covered = 0
    while covered != universe:
        best, best_gain = -1, 0
        for i, b in enumerate(blocks):
            gain = bin(b & ~covered).count("1")
            if gain > best_gain:
                best, best_gain = i, gain
        if best < 0:
            raise RuntimeError("blocks do not cover the universe")
        chosen.append(best)
        covered |= blocks[best]
    return chosen


def _exact_set_cover(universe: int, blocks: list[int]) -> list[int]:
    """Minimum set cover by branch and bound over the given blocks.

    Branches on the uncovered element contained in the fewest blocks; prunes
    with a greedy upper bound and the ceil(remaining / best-block) lower bound.
    """
    best_solution = _greedy_cover_size(universe, blocks)
    best_size = len(best_solution)

    def dfs(covered: int, chosen: list[int]) -> None:
        nonlocal best_solution, best_size
        if covered == universe:
            if len(chosen) < best_size:
                best_size = len(chosen)
                best_solution = list(chosen)
            return
        if len(chosen) + 1 >= best_size:
            return
        remaining = universe & ~covered
        max_gain = max(bin(b & remaining).count("1") for b in blocks)
        if max_gain == 0:
            return
        lower = -(-bin(remaining).count("1") // max_gain)
        if len(chosen) + lower >= best_size:
            return
        # element covered by the fewest blocks
        elem, min_freq = -1, None
        r = remaining
        while r:
            e = (r & -r).bit_length() - 1
            r &= r - 1
            freq = sum(1 for b in blocks if (b >> e) & 1)
            if freq == 0:
                return
            if min_freq is None or freq < min_freq:
                min_freq, elem = freq, e
        covering = [i for i, b in enumerate(blocks) if (b >> elem) & 1]
        covering.sort(key=lambda i: bin(blocks[i] & remaining).count("1"), reverse=True)
        for i in covering:
            chosen.append(i)
            dfs(covered | blocks[i], chosen)
            chosen.pop()

    dfs(0, [])
    return best_solution


def _mask_to_points(space: FiniteMetricSpace, mask: int) -> tuple:
    return tuple(space.points[i] for i in range(len(space)) if (mask >> i) & 1)


def _greedy_cover_blocks(space: FiniteMetricSpace, eps) -> list[list[int]]:
    """Greedy cover: seed at the lowest uncovered index, grow in index order."""
    n = len(space)
    slack = space.slack
    m = space.matrix
    uncovered = list(range(n))
    blocks = []
    covered = [False] * n
    for seed in range(n):
        if covered[seed]:
            continue
        block = [seed]
        covered[seed] = True
        for j in range(n):
            if covered[j]:
                continue
            if all(m[j, b] < eps - slack for b in block):
                block.append(j)
                covered[j] = True
        blocks.append(sorted(block))
    return blocks


def max_separated_set(
    space: FiniteMetricSpace,
    delta,
    mode: str = "greedy",
    exact_limit: int = DEFAULT_SEPARATED_EXACT_LIMIT,
) -> SeparatedCertificate:
    """A delta-separated subset: maximum cardinality (exact) or maximal (greedy).

    Greedy scans points in ascending index order and keeps a point when it is
    at distance >= delta from everything kept so far, so the result is maximal
    by inclusion and deterministic.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = len(space)
    if mode == "greedy":
        m = space.matrix
        slack = space.slack
        kept: list[int] = []
        for i in range(n):
            if all(m[i, k] >= delta - slack for k in kept):
                kept.append(i)
        members = tuple(space.points[i] for i in kept)
    elif mode == "exact":
        if n > exact_limit:
            raise ExactLimitError(
                f"exact separated-set search limited to {exact_limit} points, got {n}"
            )
        conflict = _strict_lt_matrix(space, delta)
        best = _max_independent_set(conflict, n)
        members = _mask_to_points(space, best)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    cert = SeparatedCertificate(members=members, delta=delta)
    assert not cert.validate(space)
    return cert


def _max_independent_set(conflict: list[int], n: int) -> int:
    """Maximum independent set (bitmask) by branch and bound."""
    best_mask = 0
    best_size = 0

    def dfs(candidates: int, current: int, size: int) -> None:
        nonlocal best_mask, best_size
        if size + bin(candidates).count("1") <= best_size:
            return
        if candidates == 0:
            if size > best_size:
                best_size, best_mask = size, current
            return
        # branch on the candidate with most conflicts among candidates
        v, best_deg = -1, -1
        c = candidates
        while c:
            u = (c & -c).bit_length() - 1
            c &= c - 1
            deg = bin(conflict[u] & candidates).count("1")
            if deg > best_deg:
                best_deg, v = deg, u
        vb = 1 << v
        if best_deg == 0:
            # no conflicts left: take everything
            size += bin(candidates).count("1")
            if size > best_size:
                best_size, best_mask = size, current | candidates
            return
        dfs((candidates & ~vb) & ~conflict[v], current | vb, size + 1)
        dfs(candidates & ~vb, current, size)

    dfs((1 << n) - 1, 0, 0)
    return best_mask


def covering_number(
    space: FiniteMetricSpace,
    epsilon,
    mode: str = "greedy",
    exact_limit: int = DEFAULT_COVER_EXACT_LIMIT,
) -> tuple[int, CoverCertificate]:
    """Number of diameter-<epsilon subsets covering the space, with witness.

    Exact mode runs a branch-and-bound set cover over the maximal
    diameter-<epsilon subsets (the maximal cliques of the strict-<epsilon
    graph) and is capped at ``exact_limit`` points.  Greedy mode returns an
    upper bound.  In both modes the count is checked against the greedy
    separated-set lower bound.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = len(space)
    if mode == "exact":
        if n > exact_limit:
            raise ExactLimitError(
                f"exact set cover limited to {exact_limit} points, got {n}"
            )
        adj = _strict_lt_matrix(space, epsilon)
        cliques = _maximal_cliques(adj, n)
        universe = (1 << n) - 1
        chosen = _exact_set_cover(universe, cliques)
        blocks = tuple(_mask_to_points(space, cliques[i]) for i in chosen)
    elif mode == "greedy":
        blocks = tuple(
            tuple(space.points[i] for i in b)
            for b in _greedy_cover_blocks(space, epsilon)
        )
    else:
        raise ValueError(f"unknown mode {mode!r}")
    cert = CoverCertificate(blocks=blocks, epsilon=epsilon)
    assert not cert.validate(space)
    lower = len(max_separated_set(space, epsilon, mode="greedy").members)
    assert len(blocks) >= lower, "cover count below separated-set lower bound"
    return len(blocks), cert


@dataclass(frozen=True)
class TameGrowthProfile:
    """Rows (epsilon, covering count, epsilon**delta * log count)."""

    delta: float
    rows: tuple
    decreasing: bool


def tame_growth_profile(
    spaces,
    epsilons: Sequence[float],
    delta: float,
    exact_limit: int = DEFAULT_COVER_EXACT_LIMIT,
) -> TameGrowthProfile:
    """Tabulate eps**delta * log(covering number) along a decreasing eps grid.

    ``spaces`` may be a single space, one space per epsilon, or a callable
    mapping epsilon to a space (finer surrogates for smaller epsilon).
    Covering numbers use exact mode when the space fits the exact limit,
    greedy otherwise.
    """
    eps_list = list(epsilons)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    rows = []
    for i, eps in enumerate(eps_list):
        if callable(spaces):
            space = spaces(eps)
        elif isinstance(spaces, FiniteMetricSpace):
            space = spaces
        else:
            space = spaces[i]
        mode = "exact" if len(space) <= exact_limit else "greedy"
        count, _ = covering_number(space, eps, mode=mode, exact_limit=exact_limit)
        rows.append((eps, count, eps**delta * math.log(count) if count > 1 else 0.0))
    values = [r[2] for r in rows]
    decreasing = all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    return TameGrowthProfile(delta=delta, rows=tuple(rows), decreasing=decreasing)
