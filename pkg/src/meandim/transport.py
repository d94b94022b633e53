"""Finite optimal transport: exact Wasserstein-1 plans and greedy couplings.

The exact optimum is solved as the transportation linear program; the
greedy cyclic coupling is the inductive mass-filling construction that
witnesses convergence of plans for entrywise-converging marginals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .metric import FiniteMetricSpace

MARGINAL_TOL = 1e-12
RATIONAL_DENOMINATOR_CAP = 10**6


class MarginalMismatchError(ValueError):
    """Marginals are inconsistent (sums differ, or composition mismatch)."""


def _as_fraction_vector(values) -> list[Fraction] | None:
    """Exact rational rendering of a weight vector, or None if not faithful."""
    out = []
    for v in values:
        if isinstance(v, (Fraction, int)) and not isinstance(v, bool):
            out.append(Fraction(v))
        elif isinstance(v, float):
            f = Fraction(v).limit_denominator(RATIONAL_DENOMINATOR_CAP)
            if abs(float(f) - v) > 1e-15:
                return None
            out.append(f)
        else:
            return None
    return out


@dataclass(frozen=True)
class Coupling:
    """Joint pmf with declared marginals; rows sum to the first marginal."""

    matrix: np.ndarray
    first: np.ndarray
    second: np.ndarray
    exact: bool = False
    ordering: tuple | None = None

    def validate(self) -> list[str]:
        problems = []
        tol = 0 if self.exact else MARGINAL_TOL
        row = self.matrix.sum(axis=1)
        col = self.matrix.sum(axis=0)
        for i, (a, b) in enumerate(zip(row, self.first)):
            if abs(a - b) > tol:
                problems.append(f"row {i} sums to {a}, expected {b}")
        for j, (a, b) in enumerate(zip(col, self.second)):
            if abs(a - b) > tol:
                problems.append(f"column {j} sums to {a}, expected {b}")
        return problems

    def cost(self, space: FiniteMetricSpace) -> float:
        m = np.asarray(self.matrix, dtype=float)
        return float((m * np.asarray(space.matrix, dtype=float)).sum())

    def off_diagonal_mass(self) -> float:
        m = np.asarray(self.matrix, dtype=float)
        return float(m.sum() - np.trace(m))

    def to_json(self) -> dict:
        return {
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "first_marginal": [float(v) for v in self.first],
            "second_marginal": [float(v) for v in self.second],
            "exact": self.exact,
            "ordering": list(self.ordering) if self.ordering else None,
        }


def _check_same_total(mu: np.ndarray, nu: np.ndarray) -> None:
    if mu.shape != nu.shape:
        raise MarginalMismatchError("marginals live on different supports")
    if abs(float(mu.sum()) - float(nu.sum())) > 1e-9:
        raise MarginalMismatchError(
            f"marginal sums differ: {float(mu.sum())} vs {float(nu.sum())}"
        )


def wasserstein1(mu, nu, space: FiniteMetricSpace) -> tuple[float, Coupling]:
    """Exact L1 transport cost between pmfs on the points of ``space``.

    Solves the transportation linear program with the HiGHS simplex
    backend and returns the optimal value with an optimal plan.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    k = len(space)
    if mu.shape != (k,) or nu.shape != (k,):
        raise MarginalMismatchError("marginals must match the point count")
    _check_same_total(mu, nu)
    if k == 1:
        plan = Coupling(matrix=np.array([[mu[0]]]), first=mu, second=nu)
        return 0.0, plan
    cost = np.asarray(space.matrix, dtype=float).ravel()
    # equality constraints: row sums = mu, column sums = nu (one redundant)
    a_eq = np.zeros((2 * k, k * k))
    for i in range(k):
        a_eq[i, i * k : (i + 1) * k] = 1.0
    for j in range(k):
        a_eq[k + j, j::k] = 1.0
    b_eq = np.concatenate([mu, nu])
    res = linprog(cost, A_eq=a_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan_matrix = np.maximum(res.x.reshape(k, k), 0.0)
    plan = Coupling(matrix=plan_matrix, first=mu, second=nu)
    assert not plan.validate() or np.allclose(plan_matrix.sum(axis=1), mu, atol=1e-8)
    return float(res.fun), plan


def greedy_cyclic_coupling(mu, nu, ordering: Sequence[int] | None = None) -> Coupling:
    """Inductive mass-filling coupling along a cyclic ordering of the support.

    Rows are exhausted one by one: row x fills columns x, x+1, ...,
    x+K-1 (cyclically), each time moving the largest mass still allowed
    by both marginals.  Rational inputs are processed exactly, so the
    marginal identities hold with zero error.
    """
    mu_frac = _as_fraction_vector(mu)
    nu_frac = _as_fraction_vector(nu)
    exact = mu_frac is not None and nu_frac is not None
    if exact:
        mu_vec, nu_vec = mu_frac, nu_frac
        zero = Fraction(0)
    else:
        mu_vec = [float(v) for v in mu]
        nu_vec = [float(v) for v in nu]
        zero = 0.0
    k = len(mu_vec)
    if len(nu_vec) != k:
        raise MarginalMismatchError("marginals live on different supports")
    if abs(float(sum(mu_vec)) - float(sum(nu_vec))) > 1e-9:
        raise MarginalMismatchError("marginal sums differ")
    order = list(ordering) if ordering is not None else list(range(k))
    if sorted(order) != list(range(k)):
        raise ValueError("ordering must be a permutation of the support indices")

    plan = [[zero] * k for _ in range(k)]
    col_used = [zero] * k
    for xpos in range(k):
        x = order[xpos]
        row_left = mu_vec[x]
        for step in range(k):
            y = order[(xpos + step) % k]
            fill = min(row_left, nu_vec[y] - col_used[y])
            if fill < zero:
                fill = zero
            plan[x][y] = fill
            col_used[y] += fill
            row_left -= fill
            if row_left == zero and not exact:
                break
    if exact:
        matrix = np.empty((k, k), dtype=object)
        for i in range(k):
            for j in range(k):
                matrix[i, j] = plan[i][j]
        first = np.array(mu_vec, dtype=object)
        second = np.array(nu_vec, dtype=object)
    else:
        matrix = np.array(plan, dtype=float)
        first = np.array(mu_vec)
        second = np.array(nu_vec)
    out = Coupling(
        matrix=matrix, first=first, second=second, exact=exact, ordering=tuple(order)
    )
    problems = out.validate()
    assert not problems, problems
    return out


def compose_couplings(pi: Coupling, tau) -> Coupling:
    """Chain pi in M(mu, nu) with tau in M(nu, law(Y)) through the shared nu.

    result(x, y) = sum_x' pi(x, x') tau(y | x'), where tau(y | x') is the
    row of tau normalised by nu(x'); rows with nu(x') = 0 are skipped.
    """
    tau_matrix = np.asarray(getattr(tau, "matrix", getattr(tau, "pmf", tau)), dtype=float)
    pi_matrix = np.asarray(pi.matrix, dtype=float)
    pi_second = np.asarray(pi.second, dtype=float)
    tau_first = tau_matrix.sum(axis=1)
    if pi_second.shape != tau_first.shape or np.max(np.abs(pi_second - tau_first)) > 1e-9:
        raise MarginalMismatchError(
            "second marginal of pi must equal first marginal of tau"
        )
    rows = np.zeros_like(tau_matrix)
    positive = tau_first > 0
    rows[positive] = tau_matrix[positive] / tau_first[positive, None]
    result = pi_matrix @ rows
    out = Coupling(
        matrix=result,
        first=pi_matrix.sum(axis=1),
        second=tau_matrix.sum(axis=0),
    )
    assert not out.validate()
    return out


@dataclass(frozen=True)
class DiagonalMassReport:
    off_diagonal_mass: float
    cost: float
    headline_bound: float
    max_entry_excess: float


def diagonal_mass_gap(plan: Coupling, space: FiniteMetricSpace) -> DiagonalMassReport:
    """Off-diagonal mass of a square plan against its cost-based bound.

    Every entry of a plan obeys plan(a,b) * d(a,b) <= cost, so for an
    optimal plan each off-diagonal entry is at most W / d(a,b); the
    headline bound is W over the smallest positive distance.
    """
    m = np.asarray(plan.matrix, dtype=float)
    k = m.shape[0]
    if m.shape != (k, k) or len(space) != k:
        raise ValueError("plan must be square and match the space")
    d = np.asarray(space.matrix, dtype=float)
    w = plan.cost(space)
    positive = d[d > 0]
    headline = w / float(positive.min()) if positive.size else 0.0
    excess = 0.0
    for i in range(k):
        for j in range(k):
            if i == j or d[i, j] <= 0:
                continue
            excess = max(excess, m[i, j] - w / d[i, j])
    assert excess <= MARGINAL_TOL, f"entrywise transport bound violated by {excess}"
    return DiagonalMassReport(
        off_diagonal_mass=plan.off_diagonal_mass(),
        cost=w,
        headline_bound=headline,
        max_entry_excess=excess,
    )
