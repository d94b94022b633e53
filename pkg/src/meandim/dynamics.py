"""Dynamical systems at desk scale: orbit metrics and concrete shift systems.

States are finite-window surrogates for points of a shift space: outside
the window every coordinate is 0.  The weighted-sum base distance
d(x, y) = sum_m 2^{-|m|} |x_m - y_m| makes truncation errors geometrically
small, so a window of half-width ceil(log2(4/eps)) + 2 keeps them below
eps/8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .metric import FiniteMetricSpace


class BudgetError(ValueError):
    """An enumeration or sampling request exceeds the configured budget."""


def window_half_width(eps: float) -> int:
    """Half-width making the weighted tail below eps/8."""
    return math.ceil(math.log2(4.0 / eps)) + 2


def grid_values(step: float) -> list[float]:
    """Quantisation grid {0, step, ..., floor(1/step)*step} inside [0, 1].

    A step of 1 or more collapses to the single value 0 (degenerate grid).
    """
    if step <= 0:
        raise ValueError("grid step must be positive")
    if step >= 1:
        return [0.0]
    return [k * step for k in range(int(1.0 / step) + 1)]


# ---------------------------------------------------------------------------
# shift points


@dataclass(frozen=True)
class ShiftPoint:
    """A bi-infinite sequence with finitely many nonzero coordinates.

    ``values[i]`` is the coordinate at index ``start + i``; all other
    coordinates are 0.  The stored window is trimmed to the nonzero
    support so equal points compare equal.
    """

    start: int
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        lo, hi = 0, len(vals)
        while lo < hi and vals[lo] == 0.0:
            lo += 1
        while hi > lo and vals[hi - 1] == 0.0:
            hi -= 1
        object.__setattr__(self, "values", vals[lo:hi])
        object.__setattr__(self, "start", self.start + lo if hi > lo else 0)

    @classmethod
    def from_coords(cls, coords: dict) -> "ShiftPoint":
        if not coords:
            return cls(0, ())
        lo = min(coords)
        hi = max(coords)
        return cls(lo, tuple(coords.get(i, 0.0) for i in range(lo, hi + 1)))

    def coord(self, m: int) -> float:
        i = m - self.start
        if 0 <= i < len(self.values):
            return self.values[i]
        return 0.0

    def shift(self, k: int = 1) -> "ShiftPoint":
        """Apply the shift map k times: (T x)_m = x_{m+1}."""
        return ShiftPoint(self.start - k, self.values)

    def support(self) -> range:
        return range(self.start, self.start + len(self.values))


def hilbert_cube_distance(x: ShiftPoint, y: ShiftPoint) -> float:
    """Weighted-sum distance sum_m 2^{-|m|} |x_m - y_m|; at most 3."""
    if not x.values and not y.values:
        return 0.0
    indices = set(x.support()) | set(y.support())
    total = 0.0
    for m in indices:
        diff = abs(x.coord(m) - y.coord(m))
        if diff:
            total += 2.0 ** -abs(m) * diff
    return total


# ---------------------------------------------------------------------------
# sparse-level system: simplex alphabets and level points


DEFAULT_ALPHABET_CAP = 4096


@dataclass(frozen=True)
class SimplexAlphabet:
    """Level-n alphabet: a regular simplex of side 1/n with a vertex at 0.

    Symbol 0 is the shared zero vertex; any two distinct symbols of the
    same level are at distance 1/n.  Sizes grow like exp(2^n (log n)^2)
    and are capped for desk-scale work (the level-1 formula degenerates,
    so size(1) = 2).
    """

    level: int
    size: int

    @classmethod
    def at_level(cls, level: int, cap: int = DEFAULT_ALPHABET_CAP) -> "SimplexAlphabet":
        if level < 1:
            raise ValueError("level must be at least 1")
        if level == 1:
            size = 2
        else:
            log_raw = 2**level * math.log(level) ** 2
            if log_raw > math.log(cap):
                size = cap
            else:
                size = max(2, math.ceil(math.exp(log_raw)))
        return cls(level=level, size=min(size, cap))


def simplex_symbol_distance(a: tuple[int, int], b: tuple[int, int]) -> float:
    """Distance between symbols (level, index); index 0 is the shared origin.

    Same level: 1/level for distinct symbols (including against the
    origin).  Different levels, both nonzero: sqrt(1/n^2 + 1/m^2) from
    the orthogonal-span embedding.  Against the origin: 1/level of the
    nonzero symbol.
    """
    (n, i), (m, j) = a, b
    a_zero = i == 0
    b_zero = j == 0
    if a_zero and b_zero:
        return 0.0
    if a_zero:
        return 1.0 / m
    if b_zero:
        return 1.0 / n
    if n == m:
        return 0.0 if i == j else 1.0 / n
    return math.sqrt(1.0 / n**2 + 1.0 / m**2)


@dataclass(frozen=True)
class LevelPoint:
    """A sparse sequence: nonzero level-n symbols on a 2^n-periodic progression.

    ``support`` holds (index, symbol) pairs with symbol >= 1; every other
    coordinate is the zero vertex.  All support indices are congruent
    modulo 2^level.
    """

    level: int
    support: tuple

    def __post_init__(self):
        supp = tuple(sorted((int(k), int(s)) for k, s in self.support))
        for k, s in supp:
            if s < 1:
                raise ValueError("support symbols must be nonzero (implicit 0 outside)")
        if supp:
            period = 2**self.level
            base = supp[0][0] % period
            if any(k % period != base for k, _ in supp):
                raise ValueError("support indices must agree modulo 2^level")
        else:
            object.__setattr__(self, "level", 0)
        object.__setattr__(self, "support", supp)

    @property
    def offset(self) -> int | None:
        if not self.support:
            return None
        return self.support[0][0] % (2**self.level)

    def symbol_at(self, k: int) -> tuple[int, int]:
        for idx, s in self.support:
            if idx == k:
                return (self.level, s)
        return (max(self.level, 1), 0)

    def shift(self, k: int = 1) -> "LevelPoint":
        return LevelPoint(self.level, tuple((i - k, s) for i, s in self.support))


ZERO_LEVEL_POINT = LevelPoint(level=1, support=())


def level_point_distance(x: LevelPoint, y: LevelPoint) -> float:
    """Weighted-sum distance over the union support; bounded by 2 * 3."""
    indices = {k for k, _ in x.support} | {k for k, _ in y.support}
    total = 0.0
    for k in indices:
        d = simplex_symbol_distance(x.symbol_at(k), y.symbol_at(k))
        if d:
            total += 2.0 ** -abs(k) * d
    return total


def average_distance_to_zero(x: LevelPoint, n_steps: int) -> float:
    """Mean of d(T^i x, 0) over i in [0, n_steps)."""
    if not x.support:
        return 0.0
    level = x.level
    i = np.arange(n_steps)
    total = 0.0
    for k, _ in x.support:
        total += (2.0 ** (-np.abs(k - i))).sum() / level
    return float(total) / n_steps


def max_orbit_distance(x: LevelPoint, y: LevelPoint, n_steps: int) -> float:
    """max_{0 <= i < n_steps} d(T^i x, T^i y) for level points."""
    indices = sorted({k for k, _ in x.support} | {k for k, _ in y.support})
    if not indices:
        return 0.0
    diffs = np.array(
        [simplex_symbol_distance(x.symbol_at(k), y.symbol_at(k)) for k in indices]
    )
    ks = np.array(indices)
    i = np.arange(n_steps)
    contrib = (2.0 ** (-np.abs(ks[:, None] - i[None, :])) * diffs[:, None]).sum(axis=0)
    return float(contrib.max())


# ---------------------------------------------------------------------------
# system specifications


@dataclass(frozen=True)
class SystemSpec:
    """A state set with an iteration map and a base metric."""

    name: str
    step: Callable
    base_dist: Callable
    diameter_bound: float
    enumerate_states: Callable | None = None
    sample_states: Callable | None = None
    is_weighted_shift: bool = False

    def orbit(self, x, n: int) -> list:
        out = [x]
        for _ in range(n - 1):
            out.append(self.step(out[-1]))
        return out


def orbit_metric(
    sys: SystemSpec,
    n: int,
    kind: str,
    x,
    y,
    subset: Iterable[int] | None = None,
) -> float:
    """Orbit distance between x and y over the first n iterates.

    kind "max" is the maximum of base distances along the orbits, "avg"
    the time average, and "subset" the maximum over the iterate indices
    in ``subset`` (a subset of [0, n)).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    ox = sys.orbit(x, n)
    oy = sys.orbit(y, n)
    dists = [sys.base_dist(a, b) for a, b in zip(ox, oy)]
    if kind == "max":
        return max(dists)
    if kind == "avg":
        return sum(dists) / n
    if kind == "subset":
        idx = sorted(set(subset or ()))
        if any(i < 0 or i >= n for i in idx):
            raise ValueError("subset indices must lie in [0, n)")
        if not idx:
            raise ValueError("subset must be nonempty")
        return max(dists[i] for i in idx)
    raise ValueError(f"unknown kind {kind!r}")


def _shift_orbit_matrix(points: Sequence[ShiftPoint], n: int, kind: str) -> np.ndarray:
    """Pairwise orbit distances for weighted-shift systems, vectorised.

    Uses d(T^k x, T^k y) = sum_j 2^{-|j-k|} |x_j - y_j|: per-coordinate
    differences are computed once and recombined with shifted weights.
    """
    lo = min((p.start for p in points if p.values), default=0)
    hi = max((p.start + len(p.values) for p in points if p.values), default=1)
    width = max(hi - lo, 1)
    coords = np.zeros((len(points), width))
    for i, p in enumerate(points):
        for j, v in enumerate(p.values):
            coords[i, p.start - lo + j] = v
    # delta[j, a, b] = |coords[a, j] - coords[b, j]|
    delta = np.abs(coords[:, None, :] - coords[None, :, :]).transpose(2, 0, 1)
    j_index = np.arange(lo, hi)
    k_index = np.arange(n)
    weights = 2.0 ** (-np.abs(j_index[:, None] - k_index[None, :]))
    per_step = np.tensordot(weights, delta, axes=(0, 0))  # (n, N, N)
    if kind == "max":
        return per_step.max(axis=0)
    if kind == "avg":
        return per_step.mean(axis=0)
    raise ValueError(f"unknown kind {kind!r}")


def orbit_space(
    sys: SystemSpec,
    n: int,
    scheme: str = "exhaustive",
    kind: str = "max",
    count: int | None = None,
    seed: int | None = None,
    max_points: int = 4096,
) -> FiniteMetricSpace:
    """Finite surrogate of the system under its orbit metric.

    Points are initial states (enumerated or sampled with a fixed seed);
    the distance is orbit_metric of the requested kind.
    """
    if scheme == "exhaustive":
        if sys.enumerate_states is None:
            raise ValueError(f"system {sys.name!r} cannot enumerate states")
        states = list(sys.enumerate_states())
    elif scheme == "sample":
        if sys.sample_states is None:
            raise ValueError(f"system {sys.name!r} cannot sample states")
        if count is None:
            raise ValueError("sample scheme needs a count")
        states = list(sys.sample_states(count, np.random.default_rng(seed)))
        # drop duplicates, preserving order, so point labels stay unique
        seen = set()
        states = [s for s in states if not (s in seen or seen.add(s))]
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if len(states) > max_points:
        raise BudgetError(
            f"orbit space would hold {len(states)} points, budget {max_points}"
        )
    if sys.is_weighted_shift and all(isinstance(s, ShiftPoint) for s in states):
        matrix = _shift_orbit_matrix(states, n, kind)
        return FiniteMetricSpace(points=tuple(states), matrix=matrix)
    n_states = len(states)
    orbits = [sys.orbit(s, n) for s in states]
    matrix = np.zeros((n_states, n_states))
    for a in range(n_states):
        for b in range(a + 1, n_states):
            dists = [sys.base_dist(x, y) for x, y in zip(orbits[a], orbits[b])]
            value = max(dists) if kind == "max" else sum(dists) / n
            matrix[a, b] = matrix[b, a] = value
    return FiniteMetricSpace(points=tuple(states), matrix=matrix)


def sample_product_uniform(
    window: tuple[int, int], grid_step: float, count: int, seed: int
) -> list[ShiftPoint]:
    """Independent per-coordinate uniform draws from the quantisation grid.

    Surrogate for the product of the uniform measure on [0, 1]: each
    coordinate in the inclusive window is drawn uniformly from
    grid_values(grid_step); outside the window the coordinates are 0.
    """
    lo, hi = window
    if hi < lo:
        raise ValueError("window must be nonempty")
    values = grid_values(grid_step)
    rng = np.random.default_rng(seed)
    width = hi - lo + 1
    draws = rng.integers(0, len(values), size=(count, width))
    return [ShiftPoint(lo, tuple(values[i] for i in row)) for row in draws]


# ---------------------------------------------------------------------------
# concrete systems


def hilbert_cube_system(grid_step: float, window: tuple[int, int]) -> SystemSpec:
    """Shift map on quantised [0,1]-sequences supported in the window."""
    lo, hi = window
    values = grid_values(grid_step)

    def enumerate_states():
        width = hi - lo + 1
        total = len(values) ** width
        if total > 2**22:
            raise BudgetError(f"exhaustive grid would hold {total} points")
        out = []
        for flat in range(total):
            coords = []
            rest = flat
            for _ in range(width):
                coords.append(values[rest % len(values)])
                rest //= len(values)
            out.append(ShiftPoint(lo, tuple(coords)))
        return out

    def sample_states(count, rng):
        width = hi - lo + 1
        draws = rng.integers(0, len(values), size=(count, width))
        return [ShiftPoint(lo, tuple(values[i] for i in row)) for row in draws]

    return SystemSpec(
        name="hilbert-cube",
        step=lambda p: p.shift(1),
        base_dist=hilbert_cube_distance,
        diameter_bound=3.0,
        enumerate_states=enumerate_states,
        sample_states=sample_states,
        is_weighted_shift=True,
    )


def binary_shift_system(window: tuple[int, int]) -> SystemSpec:
    """Full shift on {0,1}-sequences supported in the window."""
    lo, hi = window

    def enumerate_states():
        width = hi - lo + 1
        if width > 22:
            raise BudgetError(f"window width {width} too large to enumerate")
        return [
            ShiftPoint(lo, tuple((flat >> i) & 1 for i in range(width)))
            for flat in range(2**width)
        ]

    def sample_states(count, rng):
        width = hi - lo + 1
        draws = rng.integers(0, 2, size=(count, width))
        return [ShiftPoint(lo, tuple(float(v) for v in row)) for row in draws]

    return SystemSpec(
        name="binary-shift",
        step=lambda p: p.shift(1),
        base_dist=hilbert_cube_distance,
        diameter_bound=3.0,
        enumerate_states=enumerate_states,
        sample_states=sample_states,
        is_weighted_shift=True,
    )


def identity_interval_system(grid_step: float = 0.01) -> SystemSpec:
    """Identity map on the quantised unit interval."""
    values = grid_values(grid_step)
    return SystemSpec(
        name="identity-interval",
        step=lambda x: x,
        base_dist=lambda a, b: abs(a - b),
        diameter_bound=1.0,
        enumerate_states=lambda: list(values),
        sample_states=lambda count, rng: [
            values[i] for i in rng.integers(0, len(values), size=count)
        ],
    )


def sparse_level_system(cap: int = DEFAULT_ALPHABET_CAP) -> SystemSpec:
    """Shift on the union of the sparse level sets (the X_n family).

    Points carry level-n symbols on a 2^n-periodic support; the base
    distance combines the simplex alphabets across levels.
    """

    def sample_states(count, rng):
        out = []
        for _ in range(count):
            level = int(rng.integers(1, 4))
            out.append(sample_level_point(level, (0, 2**level * 3), rng, cap=cap))
        return out

    return SystemSpec(
        name="sparse-levels",
        step=lambda p: p.shift(1),
        base_dist=level_point_distance,
        diameter_bound=6.0,
        sample_states=sample_states,
    )


def sample_level_point(
    level: int,
    window: tuple[int, int],
    rng: np.random.Generator,
    cap: int = DEFAULT_ALPHABET_CAP,
    offset: int | None = None,
    all_nonzero: bool = False,
) -> LevelPoint:
    """Random member of the level-n set with support inside the window."""
    alphabet = SimplexAlphabet.at_level(level, cap=cap)
    period = 2**level
    lo, hi = window
    if offset is None:
        offset = int(rng.integers(0, period))
    first = lo + ((offset - lo) % period)
    indices = list(range(first, hi + 1, period))
    support = []
    for k in indices:
        if all_nonzero:
            s = int(rng.integers(1, alphabet.size))
        else:
            s = int(rng.integers(0, alphabet.size))
        if s >= 1:
            support.append((k, s))
    return LevelPoint(level=level, support=tuple(support))


SYSTEM_BUILDERS = {
    "hilbert-cube": lambda params: hilbert_cube_system(
        grid_step=params.get("grid", 0.125),
        window=tuple(params.get("window", (-2, 5))),
    ),
    "binary-shift": lambda params: binary_shift_system(
        window=tuple(params.get("window", (0, 3))),
    ),
    "identity-interval": lambda params: identity_interval_system(
        grid_step=params.get("grid", 0.01),
    ),
    "counterexample": lambda params: sparse_level_system(
        cap=params.get("cap", DEFAULT_ALPHABET_CAP),
    ),
}


def make_system(key: str, params: dict | None = None) -> SystemSpec:
    if key not in SYSTEM_BUILDERS:
        raise ValueError(f"unknown system {key!r}; known: {sorted(SYSTEM_BUILDERS)}")
    return SYSTEM_BUILDERS[key](params or {})


# ---------------------------------------------------------------------------
# parametric certificates for the shift on the full quantised cube


@dataclass(frozen=True)
class CubeCoverCertificate:
    """Product-interval cover of the full cube under the n-step max metric.

    The blocks are products of the open intervals
    I_k = ((k-1) eps/12, (k+1) eps/12), 0 <= k <= floor(12/eps), over the
    coordinates -l .. n+l with l = ceil(log2(4/eps)); every translate has
    the same geometry, so validity is checked on the interval family and
    on the corner-pair diameter at each orbit step without materialising
    the (1 + floor(12/eps))**(n + 2l + 1) blocks.
    """

    epsilon: float
    n: int

    @property
    def half_width(self) -> int:
        return math.ceil(math.log2(4.0 / self.epsilon))

    @property
    def intervals(self) -> int:
        return 1 + math.floor(12.0 / self.epsilon)

    @property
    def block_count(self) -> int:
        return self.intervals ** (self.n + 2 * self.half_width + 1)

    def interval(self, k: int) -> tuple[float, float]:
        eps = self.epsilon
        return ((k - 1) * eps / 12.0, (k + 1) * eps / 12.0)

    def validate(self) -> list[str]:
        problems = []
        eps, n, l = self.epsilon, self.n, self.half_width
        # the open intervals must cover [0, 1]
        first_lo, _ = self.interval(0)
        if not first_lo < 0:
            problems.append("first interval does not cover 0")
        _, last_hi = self.interval(self.intervals - 1)
        if not last_hi > 1:
            problems.append("last interval does not reach past 1")
        for k in range(self.intervals - 1):
            if not self.interval(k)[1] > self.interval(k + 1)[0]:
                problems.append(f"gap between intervals {k} and {k + 1}")
        # corner-pair diameter under each orbit step: window coordinates
        # differ by at most eps/6, everything outside by at most 1
        length = eps / 6.0
        for k in range(n):
            bound = 0.0
            for m in range(-l - k, n + l - k + 1):
                bound += 2.0 ** -abs(m) * length
            tail = 2.0 * 2.0**-l  # sum of weights outside [-l-k, n+l-k]
            # window [-l-k, n+l-k] always contains [-l, l], so the weights
            # left uncovered are at most those beyond half-width l
            bound += tail
            if not bound < eps:
                problems.append(
                    f"corner diameter bound {bound} not below eps at step {k}"
                )
        return problems


@dataclass(frozen=True)
class CubeSeparatedCertificate:
    """Grid family separated under the n-step max metric at spacing eps.

    Members put coordinates 0..n-1 on the grid {0, eps, ..., floor(1/eps)*eps}
    and 0 elsewhere; two distinct members differ by at least eps in some
    window coordinate, which alone contributes eps at the matching orbit
    step.
    """

    epsilon: float
    n: int

    @property
    def grid_size(self) -> int:
        return 1 + math.floor(1.0 / self.epsilon)

    @property
    def member_count(self) -> int:
        return self.grid_size**self.n

    def member(self, digits: Sequence[int]) -> ShiftPoint:
        eps = self.epsilon
        return ShiftPoint(0, tuple(d * eps for d in digits))

    def pair_distance(self, a: Sequence[int], b: Sequence[int]) -> float:
        x = self.member(a)
        y = self.member(b)
        best = 0.0
        for k in range(self.n):
            step = sum(
                2.0 ** -abs(j - k) * abs(x.coord(j) - y.coord(j))
                for j in range(self.n)
            )
            best = max(best, step)
        return best

    def validate(self, samples: int = 200, seed: int = 0) -> list[str]:
        problems = []
        eps, n = self.epsilon, self.n
        # adjacent pair differing by one grid step in one coordinate is the
        # worst case; check it at every coordinate position
        for pos in range(n):
            a = [0] * n
            b = [0] * n
            b[pos] = 1
            if not self.pair_distance(a, b) >= eps:
                problems.append(f"adjacent pair at position {pos} below eps")
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            a = rng.integers(0, self.grid_size, size=n)
            b = rng.integers(0, self.grid_size, size=n)
            if np.all(a == b):
                continue
            if not self.pair_distance(a, b) >= eps:
                problems.append(f"sampled pair {a!r}, {b!r} below eps")
        return problems
