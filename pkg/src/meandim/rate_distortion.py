"""Rate distortion solvers and estimators for orbit processes.

The core solver is Blahut-Arimoto alternating minimisation at a fixed
Lagrange slope, with the standard dual-gap stopping bound and a bisection
wrapper that targets a distortion level.  Rates are always in nats; block
rates divide the mutual information of an n-block reproduction by n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import SystemSpec, _shift_orbit_matrix, ShiftPoint
from .info_theory import Channel, FiniteDistribution, entropy, mutual_information
from .metric import FiniteMetricSpace, covering_number, max_separated_set

STRICT_TOL = 1e-9


@dataclass(frozen=True)
class RDProblem:
    """Finite-alphabet rate distortion problem: source, codebook, cost matrix."""

    source: FiniteDistribution
    repro: tuple
    distortion: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "distortion", np.asarray(self.distortion, dtype=float))
        if self.distortion.shape != (len(self.source.support), len(self.repro)):
            raise ValueError("distortion shape does not match alphabets")
        if np.any(self.distortion < 0) or not np.all(np.isfinite(self.distortion)):
            raise ValueError("distortion entries must be finite and nonnegative")

    @classmethod
    def from_json(cls, data: dict) -> "RDProblem":
        src = FiniteDistribution(
            tuple(data["source"]["support"]), np.array(data["source"]["pmf"])
        )
        return cls(src, tuple(data["repro"]), np.array(data["matrix"]))

    def to_json(self) -> dict:
        return {
            "source": self.source.to_json(),
            "repro": list(self.repro),
            "matrix": [[float(v) for v in row] for row in self.distortion],
        }


@dataclass(frozen=True)
class RDPoint:
    """A (distortion, rate) point with its achieving channel."""

    distortion: float
    rate: float
    channel: Channel
    converged: bool
    slope: float
    iterations: int


def _rate_and_distortion(p, q_rows, d):
    marginal = p @ q_rows
    pos = q_rows > 0
    pos &= np.broadcast_to(marginal > 0, q_rows.shape)
    ratio = np.ones_like(q_rows)
    ratio[pos] = q_rows[pos] / np.broadcast_to(marginal, q_rows.shape)[pos]
    rate = float((p[:, None] * q_rows * np.where(pos, np.log(ratio), 0.0)).sum())
    dist = float((p[:, None] * q_rows * d).sum())
    return max(rate, 0.0), dist


def _ba_kernel(p, kernel, tol, max_iter, q0=None):
    """Alternating minimisation of -sum_x p(x) log(K q)(x) over output pmfs.

    The iteration q <- q * c with c(y) = sum_x p(x) K(x,y) / (K q)(x) is
    monotone, and the value is within log(max c) of the optimum, which is
    the stopping bound.
    """
    n_y = kernel.shape[1]
    floor = 1e-250
    if q0 is None:
        q = np.full(n_y, 1.0 / n_y)
    else:
        # revive any priced-out outputs: a multiplicative update cannot
        # grow mass from an exact zero, which corrupts warm starts
        q = q0 + 1e-12 / n_y
        q = q / q.sum()
    gap = math.inf
    iters = 0
    for iters in range(1, max_iter + 1):
        z = kernel @ q
        c = kernel.T @ (p / z)
        gap = math.log(max(float(c.max()), 1e-300))
        q = q * c
        q = q / q.sum()
        np.clip(q, floor, None, out=q)  # keep mass out of the denormal range
        if gap < tol:
            break
    z = kernel @ q
    rows = q[None, :] * kernel / z[:, None]
    return q, rows, gap, iters


def _fixed_slope_point(prob, beta, tol, max_iter, q0=None):
    p = prob.source.pmf
    d = prob.distortion
    log_kernel = -beta * d
    log_kernel = log_kernel - log_kernel.max(axis=1, keepdims=True)
    kernel = np.exp(log_kernel)
    q, rows, gap, iters = _ba_kernel(p, kernel, tol, max_iter, q0=q0)
    rate, dist = _rate_and_distortion(p, rows, d)
    return q, rows, rate, dist, gap, iters


def _point(prob, rows, rate, dist, converged, slope, iters) -> RDPoint:
    ch = Channel(prob.source.support, prob.repro, rows)
    return RDPoint(
        distortion=dist,
        rate=rate,
        channel=ch,
        converged=converged,
        slope=slope,
        iterations=iters,
    )


def blahut_arimoto(
    prob: RDProblem,
    slope: float | None = None,
    distortion: float | None = None,
    tol: float = 1e-9,
    max_iter: int = 20000,
) -> RDPoint:
    """Rate distortion point at a fixed dual slope or a target distortion.

    With ``slope`` s <= 0 the solver minimises I + |s| E[rho] directly.
    With ``distortion`` D it certifies the zero-rate regime, or bisects on
    the slope until |E[rho] - D| < tol, time-sharing adjacent solutions
    when the curve has a linear segment.  Non-convergence of the inner
    iteration is reported through ``converged`` with the best iterate.
    """
    if (slope is None) == (distortion is None):
        raise ValueError("specify exactly one of slope or distortion")
    p = prob.source.pmf
    d = prob.distortion

    if slope is not None:
        if slope > 0:
            raise ValueError("slope must be nonpositive")
        _, rows, rate, dist, gap, iters = _fixed_slope_point(
            prob, -slope, tol, max_iter
        )
        return _point(prob, rows, rate, dist, gap < tol, slope, iters)

    target = float(distortion)
    col_mean = p @ d
    d_max = float(col_mean.min())
    if target >= d_max - tol:
        # a constant output achieves the constraint with zero rate
        best_y = int(col_mean.argmin())
        rows = np.zeros_like(d)
        rows[:, best_y] = 1.0
        return _point(prob, rows, 0.0, d_max, True, 0.0, 0)

    row_min = d.min(axis=1)
    d_min = float(p @ row_min)
    scale = max(1.0, float(d.max()))
    if target < d_min - 1e-12 * scale:
        raise ValueError(
            f"target distortion {target} below the minimum achievable {d_min}"
        )
    if target <= d_min + 1e-15 * scale:
        # support-restricted limit: only minimal-cost cells may carry mass
        kernel = (d <= row_min[:, None] + 1e-15 * scale).astype(float)
        q, rows, gap, iters = _ba_kernel(p, kernel, tol, max_iter)
        rate, dist = _rate_and_distortion(p, rows, d)
        return _point(prob, rows, rate, dist, gap < tol, -math.inf, iters)

    # Phase 1: cheap probing solves narrow the slope bracket.  Their
    # distortion estimates are biased, so phase 2 re-bisects with
    # full-tolerance solves (warm-started) before returning.
    probe_tol = max(tol, 1e-4)
    total_iters = 0
    beta_lo, beta_hi = 0.0, 1.0
    q_warm = None
    while True:
        state = _fixed_slope_point(prob, beta_hi, probe_tol, max_iter, q0=q_warm)
        total_iters += state[5]
        q_warm = state[0]
        if state[3] <= target or beta_hi > 2.0**60:
            break
        beta_lo = beta_hi
        beta_hi *= 4.0
    for _ in range(40):
        if abs(state[3] - target) < max(tol, probe_tol * 1e-2):
            break
        beta_mid = 0.5 * (beta_lo + beta_hi)
        state = _fixed_slope_point(prob, beta_mid, probe_tol, max_iter, q0=q_warm)
        total_iters += state[5]
        q_warm = state[0]
        if state[3] > target:
            beta_lo = beta_mid
        else:
            beta_hi = beta_mid

    # Phase 2: accurate bracket around the probe solution
    converged = True

    def accurate(beta, q0):
        nonlocal total_iters, converged
        st = _fixed_slope_point(prob, beta, tol, max_iter, q0=q0)
        total_iters += st[5]
        converged = converged and st[4] < tol
        return st

    state_hi = accurate(beta_hi, q_warm)
    while state_hi[3] > target and beta_hi <= 2.0**60:
        beta_lo = beta_hi
        beta_hi *= 2.0
        state_hi = accurate(beta_hi, state_hi[0])
    state_lo = accurate(beta_lo, state_hi[0])
    while state_lo[3] <= target and beta_lo > 1e-12:
        beta_lo *= 0.5
        state_lo = accurate(beta_lo, state_lo[0])
    if state_lo[3] <= target:
        beta_lo = 0.0
        state_lo = accurate(0.0, None)
    for _ in range(60):
        if abs(state_hi[3] - target) < tol:
            break
        beta_mid = 0.5 * (beta_lo + beta_hi)
        state_mid = accurate(beta_mid, state_hi[0])
        if state_mid[3] > target:
            beta_lo, state_lo = beta_mid, state_mid
        else:
            beta_hi, state_hi = beta_mid, state_mid
    rows_hi, rate_hi, dist_hi = state_hi[1], state_hi[2], state_hi[3]
    if abs(dist_hi - target) < tol or state_lo[3] <= dist_hi:
        return _point(
            prob, rows_hi, rate_hi, dist_hi, converged, -beta_hi, total_iters
        )
    # linear segment of the curve: time-share the bracketing channels
    dist_lo = state_lo[3]
    t = (target - dist_hi) / (dist_lo - dist_hi)
    t = min(max(t, 0.0), 1.0)
    rows = t * state_lo[1] + (1 - t) * rows_hi
    rate, dist = _rate_and_distortion(p, rows, prob.distortion)
    return _point(prob, rows, rate, dist, converged, -beta_hi, total_iters)


# ---------------------------------------------------------------------------
# distortion matrices for orbit processes


@dataclass(frozen=True)
class DistortionFamily:
    """avg(p): mean of d(T^k x, y_k)^p; counting(eps): mean of [d >= eps]."""

    kind: str
    p: float = 1.0
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in ("avg", "counting"):
            raise ValueError("kind must be 'avg' or 'counting'")
        if self.kind == "counting" and self.threshold is None:
            raise ValueError("counting family needs a threshold")
        if self.kind == "avg" and self.p < 1:
            raise ValueError("avg family needs p >= 1")


def orbit_step_distances(
    sys: SystemSpec, xs: Sequence, anchors: Sequence, n: int
) -> np.ndarray:
    """Array step[k, i, j] = d(T^k xs[i], T^k anchors[j]) for k < n."""
    if sys.is_weighted_shift and all(
        isinstance(s, ShiftPoint) for s in list(xs) + list(anchors)
    ):
        combined = list(xs) + list(anchors)
        lo = min((p.start for p in combined if p.values), default=0)
        hi = max((p.start + len(p.values) for p in combined if p.values), default=1)
        width = max(hi - lo, 1)
        coords = np.zeros((len(combined), width))
        for i, p in enumerate(combined):
            for j, v in enumerate(p.values):
                coords[i, p.start - lo + j] = v
        xs_c = coords[: len(xs)]
        an_c = coords[len(xs) :]
        delta = np.abs(xs_c[:, None, :] - an_c[None, :, :]).transpose(2, 0, 1)
        j_index = np.arange(lo, hi)
        k_index = np.arange(n)
        weights = 2.0 ** (-np.abs(j_index[:, None] - k_index[None, :]))
        return np.tensordot(weights, delta, axes=(0, 0))
    x_orbits = [sys.orbit(x, n) for x in xs]
    a_orbits = [sys.orbit(a, n) for a in anchors]
    out = np.zeros((n, len(xs), len(anchors)))
    for i, ox in enumerate(x_orbits):
        for j, oa in enumerate(a_orbits):
            for k in range(n):
                out[k, i, j] = sys.base_dist(ox[k], oa[k])
    return out


def build_distortion(
    sys: SystemSpec,
    n: int,
    source_points: Sequence,
    repro_anchors: Sequence,
    family: DistortionFamily,
) -> np.ndarray:
    """Distortion matrix between source points and anchor orbit tuples."""
    steps = orbit_step_distances(sys, source_points, repro_anchors, n)
    if family.kind == "avg":
        return (steps**family.p).mean(axis=0)
    return (steps >= family.threshold).mean(axis=0)


# ---------------------------------------------------------------------------
# rate estimation over block lengths


@dataclass(frozen=True)
class RateRow:
    n: int
    rate: float
    distortion: float
    dictionary_size: int
    converged: bool


@dataclass(frozen=True)
class RateEstimate:
    """Per-block-length rates and their minimum.

    The estimate is an upper bound for the infimum over channels restricted
    to the chosen reproduction dictionary, and an approximation of the
    unrestricted infimum.
    """

    family: DistortionFamily
    epsilon: float
    alpha: float | None
    scheme: str
    rows: tuple
    estimate: float


def _anchors_for_scheme(
    sys: SystemSpec,
    mu: FiniteDistribution,
    eps: float,
    n: int,
    scheme: str,
    kind: str,
    max_dictionary: int,
) -> list:
    states = list(mu.support)
    if scheme == "orbit":
        anchors = states
    elif scheme in ("separated", "cover"):
        steps = orbit_step_distances(sys, states, states, n)
        matrix = steps.mean(axis=0) if kind == "avg" else steps.max(axis=0)
        space = FiniteMetricSpace(points=tuple(states), matrix=matrix)
        if scheme == "separated":
            cert = max_separated_set(space, eps, mode="greedy")
            anchors = list(cert.members)
        else:
            _, cert = covering_number(space, eps, mode="greedy")
            anchors = [block[0] for block in cert.blocks]
    elif scheme == "grid":
        if sys.enumerate_states is None:
            raise ValueError("grid scheme needs an enumerable system")
        all_states = list(sys.enumerate_states())
        anchors = []
        for s in all_states:
            if all(sys.base_dist(s, a) >= eps for a in anchors):
                anchors.append(s)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if len(anchors) > max_dictionary:
        raise ValueError(
            f"dictionary of {len(anchors)} anchors exceeds budget {max_dictionary}"
        )
    return anchors


def estimate_rate(
    sys: SystemSpec,
    mu: FiniteDistribution,
    eps: float,
    n_list: Sequence[int],
    family: DistortionFamily | None = None,
    alpha: float | None = None,
    scheme: str = "separated",
    tol: float = 1e-8,
    max_dictionary: int = 512,
) -> RateEstimate:
    """Dictionary-restricted rate estimates over the given block lengths.

    For the avg(p) family the constraint is E[rho] <= eps^p (minus the
    strict-inequality tolerance); for the counting family it is
    E[rho] <= alpha.  The estimate is the minimum of rate_n over n; each
    rate_n is I/n for the finite problem over the scheme's dictionary.
    """
    family = family or DistortionFamily(kind="avg", p=1.0)
    if family.kind == "counting" and alpha is None:
        raise ValueError("counting family needs alpha")
    kind = "avg" if family.kind == "avg" else "max"
    diam = sys.diameter_bound
    rows = []
    for n in n_list:
        anchors = _anchors_for_scheme(sys, mu, eps, n, scheme, kind, max_dictionary)
        matrix = build_distortion(sys, n, list(mu.support), anchors, family)
        prob = RDProblem(mu, tuple(range(len(anchors))), matrix)
        if family.kind == "avg":
            target = eps**family.p - STRICT_TOL * diam**family.p
        else:
            target = alpha - STRICT_TOL
        try:
            point = blahut_arimoto(prob, distortion=target, tol=tol)
        except ValueError:
            rows.append(RateRow(n, math.inf, math.nan, len(anchors), False))
            continue
        rows.append(
            RateRow(n, point.rate / n, point.distortion, len(anchors), point.converged)
        )
    finite = [r.rate for r in rows if math.isfinite(r.rate)]
    return RateEstimate(
        family=family,
        epsilon=eps,
        alpha=alpha,
        scheme=scheme,
        rows=tuple(rows),
        estimate=min(finite) if finite else math.inf,
    )


# ---------------------------------------------------------------------------
# scalar rate of the uniform source on [0, 1] under |u - v|


def uniform_rate_lower_bound(eps: float, D: float) -> float:
    """Partition-counting lower bound for the uniform-source scalar rate.

    (1 - D eps) log(1/(D eps)) - log(1 + floor(1/(D eps)))/D - log 3,
    valid for D > 1 with D * eps < 1.
    """
    if not D > 1:
        raise ValueError("D must exceed 1")
    if D * eps >= 1:
        return -math.inf
    cells = 1 + math.floor(1.0 / (D * eps))
    return (
        (1 - D * eps) * math.log(1.0 / (D * eps))
        - math.log(cells) / D
        - math.log(3.0)
    )


@dataclass(frozen=True)
class UniformRateResult:
    epsilon: float
    levels: int
    rate: float
    lower_bound: float
    lower_bound_by_d: tuple
    upper_bound: float
    converged: bool


def uniform_rate_distortion(
    eps: float,
    levels: int,
    d_grid: Sequence[float] = (2.0, 3.0, 4.0, 6.0, 10.0),
    tol: float = 2e-5,
    max_iter: int = 40000,
) -> UniformRateResult:
    """Rate of the discretised uniform source under E|U - V| <= eps.

    The source is uniform over the midpoints of ``levels`` equal cells of
    [0, 1]; the reproduction alphabet is the same set.  The result is
    checked against the closed-form lower bound (best D in d_grid) and
    the quantiser upper bound log(1 + floor(1/(2 eps))).
    """
    if levels < math.ceil(4.0 / eps):
        raise ValueError(
            f"need at least ceil(4/eps) = {math.ceil(4.0 / eps)} levels, got {levels}"
        )
    values = (np.arange(levels) + 0.5) / levels
    source = FiniteDistribution(tuple(values), np.full(levels, 1.0 / levels))
    matrix = np.abs(values[:, None] - values[None, :])
    prob = RDProblem(source, tuple(values), matrix)
    point = blahut_arimoto(prob, distortion=eps, tol=tol, max_iter=max_iter)
    by_d = tuple((D, uniform_rate_lower_bound(eps, D)) for D in d_grid)
    lower = max(v for _, v in by_d)
    upper = math.log(1 + math.floor(1.0 / (2 * eps)))
    rate = point.rate
    assert max(0.0, lower) <= rate + 1e-6, (lower, rate)
    assert rate <= upper + 1e-6, (rate, upper)
    return UniformRateResult(
        epsilon=eps,
        levels=levels,
        rate=rate,
        lower_bound=lower,
        lower_bound_by_d=by_d,
        upper_bound=upper,
        converged=point.converged,
    )


# ---------------------------------------------------------------------------
# empirical invariant measures from separated sets


def empirical_invariant_measure(
    sys: SystemSpec, members: Sequence, n: int
) -> FiniteDistribution:
    """Orbit-averaged uniform measure: mass 1/(n |S|) at each T^k s.

    Coinciding orbit states are merged, so the support can be smaller
    than n * |S|.
    """
    members = list(members)
    if not members:
        raise ValueError("separated set must be nonempty")
    weights: dict = {}
    share = 1.0 / (n * len(members))
    for s in members:
        state = s
        for k in range(n):
            weights[state] = weights.get(state, 0.0) + share
            if k + 1 < n:
                state = sys.step(state)
    return FiniteDistribution.from_weights(weights)


# ---------------------------------------------------------------------------
# block channels gluing an m-block channel into an n-block channel


@dataclass(frozen=True)
class BlockChannel:
    """m-block channel tau extended to n-blocks at a phase, anchor-padded.

    With n = q m + r, m <= r <= 2m - 1, phase i covers the windows
    [i + j m, i + j m + m) for j < q and pads [0, i) and [n - r + i, n)
    with the anchor symbol.
    """

    tau: Channel
    m: int
    n: int
    anchor: object

    def __post_init__(self):
        if self.n < 2 * self.m:
            raise ValueError("need n >= 2m")
        for blk in self.tau.x_support:
            if len(blk) != self.m:
                raise ValueError("tau inputs must be m-blocks")
        for blk in self.tau.y_support:
            if len(blk) != self.m:
                raise ValueError("tau outputs must be m-blocks")

    @property
    def blocks_per_phase(self) -> int:
        # n = q m + r with m <= r <= 2m - 1
        return (self.n - self.m) // self.m

    @property
    def remainder(self) -> int:
        return self.n - self.blocks_per_phase * self.m


def _phase_windows(bc: BlockChannel, phase: int) -> list[tuple[int, int]]:
    q = bc.blocks_per_phase
    return [(phase + j * bc.m, phase + j * bc.m + bc.m) for j in range(q)]


def block_channel_extend(bc: BlockChannel, x: tuple, phase: int) -> dict:
    """Distribution over n-blocks produced by phase ``phase`` on input x."""
    if not 0 <= phase < bc.m:
        raise ValueError("phase must lie in [0, m)")
    if len(x) != bc.n:
        raise ValueError("input must be an n-block")
    tau_index = {blk: i for i, blk in enumerate(bc.tau.x_support)}
    windows = _phase_windows(bc, phase)
    base = [bc.anchor] * bc.n
    results: dict = {}

    def recurse(widx: int, current: tuple, weight: float) -> None:
        if weight == 0.0:
            return
        if widx == len(windows):
            results[current] = results.get(current, 0.0) + weight
            return
        lo, hi = windows[widx]
        xin = tuple(x[lo:hi])
        if xin not in tau_index:
            raise ValueError(f"tau undefined on window {xin!r}")
        row = bc.tau.rows[tau_index[xin]]
        for yi, yblk in enumerate(bc.tau.y_support):
            w = row[yi]
            if w == 0.0:
                continue
            nxt = list(current)
            nxt[lo:hi] = yblk
            recurse(widx + 1, tuple(nxt), weight * w)

    recurse(0, tuple(base), 1.0)
    return results


def block_channel_mixture(bc: BlockChannel, x_blocks: Sequence[tuple]) -> Channel:
    """The phase-averaged channel sigma_n = (1/m) sum_i sigma_{n,i}."""
    per_x = []
    all_outputs: list = []
    seen = set()
    for x in x_blocks:
        mix: dict = {}
        for phase in range(bc.m):
            for y, w in block_channel_extend(bc, x, phase).items():
                mix[y] = mix.get(y, 0.0) + w / bc.m
        per_x.append(mix)
        for y in mix:
            if y not in seen:
                seen.add(y)
                all_outputs.append(y)
    rows = np.zeros((len(x_blocks), len(all_outputs)))
    col = {y: i for i, y in enumerate(all_outputs)}
    for i, mix in enumerate(per_x):
        for y, w in mix.items():
            rows[i, col[y]] = w
    return Channel(tuple(x_blocks), tuple(all_outputs), rows)


@dataclass(frozen=True)
class BlockChainReport:
    per_block_rate: float
    extended_rate: float
    slack: float
    row_sum_error: float


def block_chain_check(
    tau: Channel, x_blocks: Sequence[tuple], m: int, n: int, anchor
) -> BlockChainReport:
    """Averaged chain inequality for the phase-mixture extension.

    With nu uniform on the given n-blocks and mu_m the cyclic-window
    average of its m-block marginals, checks
    (1/m) I(mu_m, tau) >= (1/n) I(nu, sigma_n).
    """
    bc = BlockChannel(tau=tau, m=m, n=n, anchor=anchor)
    sigma = block_channel_mixture(bc, x_blocks)
    row_err = float(np.abs(sigma.rows.sum(axis=1) - 1.0).max())
    nu = FiniteDistribution.uniform(list(x_blocks))
    extended = mutual_information(sigma.joint(nu)) / n

    window_weights: dict = {}
    share = 1.0 / (n * len(x_blocks))
    for x in x_blocks:
        for k in range(n):
            window = tuple(x[(k + t) % n] for t in range(m))
            window_weights[window] = window_weights.get(window, 0.0) + share
    tau_index = {blk: i for i, blk in enumerate(tau.x_support)}
    mu_m = np.zeros(len(tau.x_support))
    for window, w in window_weights.items():
        if window not in tau_index:
            raise ValueError(f"tau undefined on window {window!r}")
        mu_m[tau_index[window]] = w
    source_m = FiniteDistribution(tau.x_support, mu_m)
    per_block = mutual_information(tau.joint(source_m)) / m
    return BlockChainReport(
        per_block_rate=per_block,
        extended_rate=extended,
        slack=per_block - extended,
        row_sum_error=row_err,
    )


# ---------------------------------------------------------------------------
# deterministic cover codebooks (feasible rates from covers)


@dataclass(frozen=True)
class CodebookRate:
    cover_count: int
    codewords_used: int
    entropy_nats: float
    max_pointwise_distortion: float


def cover_codebook_rate(
    space: FiniteMetricSpace,
    weights: np.ndarray,
    eps: float,
    mode: str = "exact",
    exact_limit: int = 16,
) -> CodebookRate:
    """Rate of the deterministic codebook built from a diameter-<eps cover.

    Each point maps to the representative of the first cover block that
    contains it, so the pointwise distortion is below eps and the rate is
    the entropy of the pushforward: at most log(cover count).
    """
    count, cert = covering_number(space, eps, mode=mode, exact_limit=exact_limit)
    index = {p: i for i, p in enumerate(space.points)}
    assignment = {}
    for b, block in enumerate(cert.blocks):
        rep = block[0]
        for pt in block:
            if pt not in assignment:
                assignment[pt] = (b, rep)
    masses: dict = {}
    worst = 0.0
    w = np.asarray(weights, dtype=float)
    for pt, weight in zip(space.points, w):
        b, rep = assignment[pt]
        masses[b] = masses.get(b, 0.0) + weight
        worst = max(worst, float(space.matrix[index[pt], index[rep]]))
    pushforward = np.array(list(masses.values()))
    pushforward = pushforward / pushforward.sum()
    h = entropy(pushforward)
    return CodebookRate(
        cover_count=count,
        codewords_used=len(masses),
        entropy_nats=h,
        max_pointwise_distortion=worst,
    )


# ---------------------------------------------------------------------------
# exhaustive channel-grid oracle (small alphabets only)


def _simplex_grid(parts: int, steps: int) -> np.ndarray:
    """All pmfs on ``parts`` symbols with entries that are multiples of 1/steps."""
    if parts == 1:
        return np.ones((1, 1))
    if parts == 2:
        a = np.arange(steps + 1)
        return np.column_stack([a, steps - a]).astype(float) / steps
    if parts == 3:
        a = np.repeat(np.arange(steps + 1), np.arange(steps + 1, 0, -1))
        b = np.concatenate([np.arange(steps - i + 1) for i in range(steps + 1)])
        return np.column_stack([a, b, steps - a - b]).astype(float) / steps
    out = []

    def recurse(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for k in range(remaining + 1):
            recurse(prefix + [k], remaining - k, slots - 1)

    recurse([], steps, parts)
    return np.array(out, dtype=float) / steps


def _evaluate_channel_cloud(p, d, row_grids):
    """(distortion, information, rows) for every product of the row grids.

    Exploits separability: distortion and the conditional output entropy
    split over rows, only the output-marginal entropy couples them.
    """
    nx, ny = d.shape
    sizes = [len(g) for g in row_grids]
    dist_parts = []
    cond_parts = []
    for x in range(nx):
        g = row_grids[x]
        with np.errstate(divide="ignore"):
            logs = np.where(g > 0, np.log(g), 0.0)
        dist_parts.append(p[x] * (g @ d[x]))
        cond_parts.append(p[x] * (-(g * logs).sum(axis=1)))
    if nx == 2:
        total_d = dist_parts[0][:, None] + dist_parts[1][None, :]
        h_cond = cond_parts[0][:, None] + cond_parts[1][None, :]
        q = (
            p[0] * row_grids[0][:, None, :]
            + p[1] * row_grids[1][None, :, :]
        )
    else:
        total_d = (
            dist_parts[0][:, None, None]
            + dist_parts[1][None, :, None]
            + dist_parts[2][None, None, :]
        )
        h_cond = (
            cond_parts[0][:, None, None]
            + cond_parts[1][None, :, None]
            + cond_parts[2][None, None, :]
        )
        q = (
            p[0] * row_grids[0][:, None, None, :]
            + p[1] * row_grids[1][None, :, None, :]
            + p[2] * row_grids[2][None, None, :, :]
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        h_y = -(q * np.where(q > 0, np.log(q), 0.0)).sum(axis=-1)
    info = np.maximum(h_y - h_cond, 0.0).ravel()
    flat_d = total_d.ravel()
    return flat_d, info, sizes


def _reduce_cloud(flat_d, info, keep_bins):
    """Per-distortion-bin argmin of information; returns exact point indices."""
    lo, hi = float(flat_d.min()), float(flat_d.max())
    if hi <= lo:
        return np.array([int(info.argmin())])
    idx = np.minimum(((flat_d - lo) / (hi - lo) * keep_bins).astype(int), keep_bins - 1)
    order = np.lexsort((info, idx))
    _, first = np.unique(idx[order], return_index=True)
    return order[first]


def _lower_envelope(points):
    """Nonincreasing lower convex envelope of (D, I) points, as hull indices."""
    order = np.lexsort((points[:, 1], points[:, 0]))
    hull: list[int] = []
    for k in order:
        x, y = points[k]
        while hull:
            x2, y2 = points[hull[-1]]
            if len(hull) >= 2:
                x1, y1 = points[hull[-2]]
                if (y2 - y1) * (x - x2) - (y - y2) * (x2 - x1) >= 0:
                    hull.pop()
                    continue
            if x2 == x and y2 >= y:
                hull.pop()
                continue
            break
        hull.append(k)
    while len(hull) >= 2 and points[hull[-1]][1] >= points[hull[-2]][1]:
        hull.pop()
    return hull


def _rows_within(grid_step_new: int, centers: np.ndarray, radius: float) -> np.ndarray:
    """Simplex grid points at step 1/grid_step_new within radius of any center."""
    full = _simplex_grid(centers.shape[1], grid_step_new)
    mask = np.zeros(len(full), dtype=bool)
    for c in centers:
        mask |= np.max(np.abs(full - c[None, :]), axis=1) <= radius + 1e-12
    return full[mask]


_BOUNDARY_SCALES = (0.0, 0.125, 0.25, 0.5, 0.75, 1.25, 1.5, 2.0, 3.0)


def _boundary_variants(centers: np.ndarray, cut: float) -> np.ndarray:
    """Log-scale variants of small row entries near the simplex boundary.

    A uniform grid resolves entries near 0 poorly while x log x still
    varies steeply there, so each small coordinate of a center row is
    rescaled geometrically (the row is renormalised).
    """
    rows = []
    for c in centers:
        for i, value in enumerate(c):
            if value <= 0 or value > cut:
                continue
            for s in _BOUNDARY_SCALES:
                row = c.copy()
                row[i] = value * s
                total = row.sum()
                if total > 0:
                    rows.append(row / total)
    if not rows:
        return np.empty((0, centers.shape[1]))
    return np.array(rows)


def channel_grid_rate(
    prob: RDProblem,
    target_d: float,
    steps: int = 10,
    refine_rounds: int = 3,
    refine_factor: int = 3,
    keep_bins: int = 500,
) -> float:
    """Lower convex envelope of an exhaustive channel grid at target_d.

    Every product channel whose rows lie on the per-row simplex grid is
    evaluated directly (distortion and mutual information only, no solver
    machinery); the lower convex envelope of the exhaustive point cloud
    is the oracle value.  Because mutual information is convex in the
    channel, each refinement round re-grids exhaustively at a finer step
    inside a box around the envelope's own supporting channels, keeping
    the oracle independent of any iterative solution path.  Supports
    source alphabets up to 3 symbols.
    """
    p = prob.source.pmf
    d = prob.distortion
    nx, ny = d.shape
    if nx > 3:
        raise ValueError("channel-grid oracle supports at most 3 source symbols")

    def rows_of(flat_index, sizes_, grids):
        idx = []
        rest = int(flat_index)
        for m in reversed(sizes_):
            idx.append(rest % m)
            rest //= m
        idx.reverse()
        return np.stack([grids[x][idx[x]] for x in range(nx)])

    base_grid = _simplex_grid(ny, steps)
    row_grids = [base_grid] * nx
    flat_d, info, sizes = _evaluate_channel_cloud(p, d, row_grids)
    kept = _reduce_cloud(flat_d, info, keep_bins)
    cloud_d = flat_d[kept]
    cloud_i = info[kept]
    # rows are reconstructed lazily: only the hull support points are needed
    cloud_meta = [(int(k), sizes, row_grids) for k in kept]

    step = steps
    for _ in range(refine_rounds):
        points = np.column_stack([cloud_d, cloud_i])
        hull = _lower_envelope(points)
        hull_d = points[hull, 0]
        j = int(np.searchsorted(hull_d, target_d))
        support = {
            hull[max(j - 2, 0)],
            hull[max(j - 1, 0)],
            hull[min(j, len(hull) - 1)],
            hull[min(j + 1, len(hull) - 1)],
        }
        centers = np.stack([rows_of(*cloud_meta[s]) for s in sorted(support)])
        new_step = step * refine_factor
        radius = 1.5 / step
        new_grids = []
        for x in range(nx):
            within = _rows_within(new_step, centers[:, x, :], radius)
            extra = _boundary_variants(centers[:, x, :], cut=4.0 / step)
            new_grids.append(np.concatenate([within, extra]) if len(extra) else within)
        flat_d, info, sizes = _evaluate_channel_cloud(p, d, new_grids)
        kept = _reduce_cloud(flat_d, info, keep_bins)
        cloud_d = np.concatenate([cloud_d, flat_d[kept]])
        cloud_i = np.concatenate([cloud_i, info[kept]])
        cloud_meta.extend((int(k), sizes, new_grids) for k in kept)
        step = new_step

    points = np.column_stack([cloud_d, cloud_i])
    hull = _lower_envelope(points)
    xs = points[hull, 0]
    ys = points[hull, 1]
    if target_d <= xs[0]:
        return float(ys[0])
    if target_d >= xs[-1]:
        return float(ys[-1])
    j = int(np.searchsorted(xs, target_d)) - 1
    x1, x2 = xs[j], xs[j + 1]
    y1, y2 = ys[j], ys[j + 1]
    if x2 == x1:
        return float(min(y1, y2))
    return float(y1 + (y2 - y1) * (target_d - x1) / (x2 - x1))
