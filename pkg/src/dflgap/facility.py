"""Demand-weighted facility location: exact integral solver, evaluation, and
the smoothed LP relaxation emitted as a :class:`~dflgap.qp.QpProblem`.

Customers ``c = 0..n-1`` are each assigned to exactly one open facility
``f = 0..m-1``; at most ``k`` facilities open. Coefficient matrices are
``n x m`` with entry ``w[c, f]`` the expected demand-weighted travel time of
edge ``(c, f)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .errors import BudgetExceedsFacilities, NonPositiveZeta
from .qp import QpProblem


@dataclass(frozen=True)
class FLInstance:
    n: int
    m: int
    k: int = 1
    F1: tuple = field(default=None)
    F2: tuple = field(default=None)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need at least one customer and one facility")
        if self.k < 1:
            raise ValueError("facility budget k must be at least 1")
        if self.k > self.m:
            raise BudgetExceedsFacilities(f"k={self.k} exceeds m={self.m}")
        half = self.m // 2
        F1 = tuple(range(half)) if self.F1 is None else tuple(sorted(self.F1))
        F2 = tuple(range(half, self.m)) if self.F2 is None else tuple(sorted(self.F2))
        if set(F1) & set(F2) or set(F1) | set(F2) != set(range(self.m)):
            raise ValueError("F1 and F2 must partition the facilities")
        object.__setattr__(self, "F1", F1)
        object.__setattr__(self, "F2", F2)


@dataclass(frozen=True, eq=False)
class Assignment:
    open: frozenset
    z: np.ndarray  # n x m, 0/1

    @property
    def facility_of(self) -> np.ndarray:
        """Facility index serving each customer."""
        return np.argmax(self.z, axis=1)


def _check_dims(inst: FLInstance, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (inst.n, inst.m):
        raise ValueError(f"coefficient matrix has shape {w.shape}, expected {(inst.n, inst.m)}")
    return w


def assignment_from(open_set, w) -> Assignment:
    """Assign each customer to its cheapest open facility (lowest index on ties)."""
    cols = np.array(sorted(open_set))
    pick = cols[np.argmin(w[:, cols], axis=1)]
    z = np.zeros(w.shape)
    z[np.arange(w.shape[0]), pick] = 1.0
    return Assignment(open=frozenset(int(f) for f in cols), z=z)


def solve_exact(inst: FLInstance, w) -> Assignment:
    """Exact optimum by enumerating all open sets of size exactly ``k``.

    Opening more facilities never hurts once every customer picks its
    cheapest open facility, so size-``k`` sets contain an optimum. Ties go to
    the lexicographically smallest open set.
    """
    if inst.k > inst.m:
        raise BudgetExceedsFacilities(f"k={inst.k} exceeds m={inst.m}")
    w = _check_dims(inst, w)
    best, best_cost = None, np.inf
    for S in combinations(range(inst.m), inst.k):
        cost = w[:, S].min(axis=1).sum()
        if cost < best_cost:
            best, best_cost = S, cost
    return assignment_from(best, w)


def evaluate(assign: Assignment, w_true) -> float:
    return float(np.sum(np.asarray(w_true, dtype=float) * assign.z))


@dataclass(frozen=True, eq=False)
class SmoothedQp:
    """Smoothed relaxation plus the map between variables and edges.

    Variable layout: ``z[c, f]`` at ``c * m + f`` followed by ``x[f]`` at
    ``n * m + f``.
    """

    problem: QpProblem
    inst: FLInstance
    zeta: float

    @property
    def n_edges(self) -> int:
        return self.inst.n * self.inst.m

    def labels(self) -> list:
        n, m = self.inst.n, self.inst.m
        return [("z", c, f) for c in range(n) for f in range(m)] + [("x", None, f) for f in range(m)]

    def index(self, kind, c=None, f=None) -> int:
        m = self.inst.m
        if kind == "z":
            return c * m + f
        if kind == "x":
            return self.n_edges + f
        raise ValueError(kind)

    def decode(self, v):
        v = np.asarray(v)
        n, m = self.inst.n, self.inst.m
        return v[: n * m].reshape(n, m), v[n * m :]

    def cost_vector(self, w) -> np.ndarray:
        w = _check_dims(self.inst, w)
        return np.concatenate([w.ravel(), np.zeros(self.inst.m)])

    def with_costs(self, w) -> QpProblem:
        return self.problem.with_cost(self.cost_vector(w))


def to_smoothed_qp(inst: FLInstance, w, zeta: float) -> SmoothedQp:
    """LP relaxation with a ``zeta * ||v||^2`` penalty on every variable.

    Constraints: each customer's row of ``z`` sums to one; ``z[c,f] <= x[f]``;
    ``sum(x) <= k``; ``0 <= z, x <= 1``. Inequality rows are ordered linking,
    budget, lower bounds, upper bounds.
    """
    if not zeta > 0:
        raise NonPositiveZeta(f"zeta must be positive, got {zeta}")
    w = _check_dims(inst, w)
    n, m = inst.n, inst.m
    ne = n * m
    nv = ne + m
    Q = sp.identity(nv, format="csr") * (2.0 * zeta)
    c = np.concatenate([w.ravel(), np.zeros(m)])

    A = sp.kron(sp.identity(n), np.ones((1, m)), format="csr")
    A = sp.hstack([A, sp.csr_matrix((n, m))], format="csr")
    b = np.ones(n)

    link = sp.hstack([sp.identity(ne), -sp.kron(np.ones((n, 1)), sp.identity(m))], format="csr")
    budget = sp.csr_matrix(np.concatenate([np.zeros(ne), np.ones(m)])[None, :])
    eye = sp.identity(nv, format="csr")
    G = sp.vstack([link, budget, -eye, eye], format="csr")
    h = np.concatenate([np.zeros(ne), [float(inst.k)], np.zeros(nv), np.ones(nv)])
    return SmoothedQp(problem=QpProblem(Q=Q, c=c, A=A, b=b, G=G, h=h), inst=inst, zeta=float(zeta))
