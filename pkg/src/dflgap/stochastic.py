"""Finitely supported distributions over target vectors and exact stochastic
optimization by enumeration.

Decisions are arbitrary Python values (ints, tuples, arrays); the decision
space is either an explicit list or a deterministic solver callback plus a
finite candidate list. Every argmin in this module breaks ties toward the
lowest index, with losses within ``TIE_RTOL`` (relative) treated as equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Any, Callable, Sequence

import numpy as np

from .errors import EmptyDecisionSpace, NoWitnessFound, SupportTooLarge

PROB_TOL = 1e-12
TIE_RTOL = 1e-12
DEFAULT_SCENARIO_CAP = 10**6


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Joint law over ``dim``-dimensional targets: row ``s`` of ``values``
    occurs with probability ``probs[s]``."""

    values: np.ndarray
    probs: np.ndarray
    coord_names: tuple | None = None

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if values.shape[0] != probs.size:
            raise ValueError(f"{values.shape[0]} scenarios but {probs.size} probabilities")
        if probs.size == 0:
            raise ValueError("a distribution needs at least one scenario")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        if self.coord_names is not None and len(self.coord_names) != values.shape[1]:
            raise ValueError("coord_names length does not match the target dimension")
        values.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_scenarios(cls, scenarios, coord_names=None) -> "DiscreteDistribution":
        """Build from an iterable of ``(y, p)`` pairs."""
        scenarios = list(scenarios)
        if not scenarios:
            raise ValueError("a distribution needs at least one scenario")
        ys, ps = zip(*scenarios)
        return cls(np.array([np.asarray(y, dtype=float).reshape(-1) for y in ys]), np.array(ps), coord_names)

    @classmethod
    def point_mass(cls, y) -> "DiscreteDistribution":
        return cls(np.asarray(y, dtype=float).reshape(1, -1), np.ones(1))

    @classmethod
    def independent(cls, laws, cap: int = DEFAULT_SCENARIO_CAP) -> "DiscreteDistribution":
        """Product measure of per-coordinate laws ``[(values, probs), ...]``.

        Scenarios are enumerated in lexicographic order of the coordinate
        supports; zero-probability support points are dropped.
        """
        laws = [_clean_law(v, p) for v, p in laws]
        count = 1
        for vals, _ in laws:
            count *= len(vals)
            if count > cap:
                raise SupportTooLarge(f"product support exceeds the cap of {cap} scenarios")
        idx = np.array(list(product(*(range(len(v)) for v, _ in laws))), dtype=int).reshape(count, len(laws))
        values = np.empty((count, len(laws)))
        probs = np.ones(count)
        for j, (vals, ps) in enumerate(laws):
            values[:, j] = vals[idx[:, j]]
            probs = probs * ps[idx[:, j]]
        # renormalize only if product rounding pushed the total outside tolerance
        if abs(probs.sum() - 1.0) > PROB_TOL:
            probs = probs / probs.sum()
        return cls(values, probs)

    @classmethod
    def bernoulli(cls, p, cap: int = DEFAULT_SCENARIO_CAP) -> "DiscreteDistribution":
        """Independent Boolean coordinates with ``P(y_i = 1) = p[i]``."""
        return cls.independent([_boolean_law(pi) for pi in np.asarray(p, dtype=float).reshape(-1)], cap)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_scenarios(self) -> int:
        return self.values.shape[0]

    def scenarios(self):
        """Iterate over ``(y, p)`` pairs, including zero-probability rows."""
        return zip(self.values, self.probs)

    def mean(self) -> np.ndarray:
        return np.sum(self.probs[:, None] * self.values, axis=0)

    def is_boolean(self) -> bool:
        live = self.values[self.probs > 0]
        return bool(np.all((live == 0.0) | (live == 1.0)))

    def marginal(self, i: int):
        """``(support, probs)`` of coordinate ``i``, support sorted, zero mass dropped.

        Boolean coordinates report ``(1 - m, m)`` with ``m`` the coordinate
        mean, which keeps their arithmetic identical to :meth:`bernoulli`.
        """
        col = self.values[:, i]
        live = self.probs > 0
        support = np.unique(col[live])
        if np.all(np.isin(support, (0.0, 1.0))):
            return _boolean_law(self.mean()[i])
        probs = np.array([self.probs[live & (col == v)].sum() for v in support])
        return support, probs

    def marginals(self):
        return [self.marginal(i) for i in range(self.dim)]

    def mix(self, other: "DiscreteDistribution", weight: float) -> "DiscreteDistribution":
        """``weight * self + (1 - weight) * other`` as a scenario union."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return DiscreteDistribution(
            np.vstack([self.values, other.values]),
            np.concatenate([weight * self.probs, (1.0 - weight) * other.probs]),
        )


def _clean_law(values, probs):
    values = np.asarray(values, dtype=float).reshape(-1)
    probs = np.asarray(probs, dtype=float).reshape(-1)
    keep = probs > 0
    return values[keep], probs[keep]


def _boolean_law(m: float):
    if m <= 0.0:
        return np.array([0.0]), np.array([1.0])
    if m >= 1.0:
        return np.array([1.0]), np.array([1.0])
    return np.array([0.0, 1.0]), np.array([1.0 - m, m])


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Task loss ``f(y, z)`` plus its decision space.

    ``deterministic(y_hat, z)`` is the objective a point prediction is plugged
    into; it defaults to ``f``. For Boolean targets whose predictions are
    marginal probabilities it is the multilinear extension of ``f``.
    """

    f: Callable[[np.ndarray, Any], float]
    decisions: Sequence | None = None
    solver: Callable[[np.ndarray], Any] | None = None
    deterministic: Callable[[np.ndarray, Any], float] | None = None

    def __post_init__(self):
        if self.decisions is None and self.solver is None:
            raise ValueError("LossSpec needs a decision list or a solver callback")
        if self.decisions is not None:
            object.__setattr__(self, "decisions", list(self.decisions))

    def plug_in(self, y_hat, z) -> float:
        g = self.deterministic if self.deterministic is not None else self.f
        return float(g(np.asarray(y_hat, dtype=float), z))


@dataclass(frozen=True, eq=False)
class PocReport:
    z_star: Any
    loss_star: float
    z_proxy: Any
    loss_proxy: float
    poc: float
    boolean_support: bool


def expected_loss(dist: DiscreteDistribution, z, spec: LossSpec) -> float:
    """Exact expectation over the scenarios; zero-probability scenarios are
    skipped so that ``inf * 0`` contributes nothing."""
    total = 0.0
    for y, p in dist.scenarios():
        if p > 0:
            total += float(p) * float(spec.f(y, z))
    return total


def argmin_index(losses) -> int:
    """Lowest index whose loss is within ``TIE_RTOL`` of the minimum."""
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        raise EmptyDecisionSpace("no decisions to choose from")
    if np.any(np.isnan(losses)):
        raise ValueError("NaN loss encountered")
    best = losses.min()
    if not np.isfinite(best):
        return int(np.argmin(losses))
    slack = TIE_RTOL * max(1.0, abs(best))
    return int(np.flatnonzero(losses <= best + slack)[0])


def _same(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(np.asarray(a), np.asarray(b))
    return a == b


def candidate_decisions(spec: LossSpec, dists=(), candidates=None, predictions=()) -> list:
    """The finite decision set searched by the enumeration oracles.

    With an explicit decision list that list is returned. With a solver
    callback the set is the solver's output on every scenario of ``dists``
    and on every extra prediction, followed by ``candidates``; duplicates
    are removed keeping first occurrence.
    """
    if spec.decisions is not None:
        out = list(spec.decisions)
    else:
        out = []
        for dist in dists:
            for y, p in dist.scenarios():
                if p > 0:
                    out.append(spec.solver(y))
        out.extend(spec.solver(np.asarray(y, dtype=float)) for y in predictions)
        out.extend(candidates or ())
    unique = []
    for z in out:
        if not any(_same(z, u) for u in unique):
            unique.append(z)
    if not unique:
        raise EmptyDecisionSpace("decision space is empty")
    return unique


def solve_stochastic(dist: DiscreteDistribution, spec: LossSpec, candidates=None):
    """Stochastic optimum ``(z, loss)`` by enumerating the decision set."""
    decisions = candidate_decisions(spec, [dist], candidates)
    losses = [expected_loss(dist, z, spec) for z in decisions]
    i = argmin_index(losses)
    return decisions[i], losses[i]


def deterministic_decision(y_hat, spec: LossSpec, candidates=None):
    """Decision minimizing the plug-in objective at prediction ``y_hat``."""
    y_hat = np.asarray(y_hat, dtype=float)
    if spec.decisions is None and spec.deterministic is None:
        return spec.solver(y_hat)
    decisions = candidate_decisions(spec, candidates=candidates, predictions=[y_hat])
    return decisions[argmin_index([spec.plug_in(y_hat, z) for z in decisions])]


def independent_proxy(dist: DiscreteDistribution, cap: int = DEFAULT_SCENARIO_CAP) -> DiscreteDistribution:
    """Product of the coordinate marginals of ``dist``."""
    return DiscreteDistribution.independent(dist.marginals(), cap)


def two_stage_decision(dist: DiscreteDistribution, spec: LossSpec, candidates=None):
    """Plug in the mean target, optimize, and score on the true law."""
    z = deterministic_decision(dist.mean(), spec, candidates)
    return z, expected_loss(dist, z, spec)


def price_of_correlation(dist: DiscreteDistribution, spec: LossSpec, candidates=None, cap=DEFAULT_SCENARIO_CAP) -> PocReport:
    """True loss of the independent-proxy optimizer over the stochastic optimum."""
    proxy = independent_proxy(dist, cap)
    decisions = candidate_decisions(spec, [dist, proxy], candidates, predictions=[dist.mean()])
    z_star, loss_star = solve_stochastic(dist, spec, decisions)
    z_proxy, _ = solve_stochastic(proxy, spec, decisions)
    loss_proxy = expected_loss(dist, z_proxy, spec)
    return PocReport(
        z_star=z_star,
        loss_star=loss_star,
        z_proxy=z_proxy,
        loss_proxy=loss_proxy,
        poc=_ratio(loss_proxy, loss_star),
        boolean_support=dist.is_boolean(),
    )


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 1.0 if num == 0 else float(np.copysign(np.inf, num))
    return num / den


def multilinear_extension(f: Callable, cap: int = DEFAULT_SCENARIO_CAP) -> Callable:
    """Extend a Boolean-input loss ``f(y, z)`` to marginal vectors ``p``.

    The value at ``p`` is the expectation of ``f`` under independent
    Bernoulli coordinates, computed with the same arithmetic as
    :func:`independent_proxy` followed by :func:`expected_loss`.
    """
    spec = LossSpec(f=f, decisions=[None])

    def extended(p, z):
        return expected_loss(DiscreteDistribution.bernoulli(p, cap), z, spec)

    return extended


@dataclass(frozen=True)
class Witness:
    """Two points and a weight at which ``gamma`` breaks Jensen equality."""

    y: tuple
    y_prime: tuple
    alpha: float

    def __iter__(self):
        return iter((self.y, self.y_prime, self.alpha))

    def mixture(self) -> np.ndarray:
        return self.alpha * np.asarray(self.y, float) + (1 - self.alpha) * np.asarray(self.y_prime, float)

    def jensen_gap(self, gamma) -> float:
        """``E[gamma] - gamma(E)`` for the two-point law the witness defines."""
        e_gamma = self.alpha * gamma(*self.y) + (1 - self.alpha) * gamma(*self.y_prime)
        return float(e_gamma - gamma(*self.mixture()))


def grid_points(values) -> list:
    """All ordered pairs from a 1-d value grid."""
    return [(float(a), float(b)) for a, b in product(values, repeat=2)]


def find_nonlinearity_witness(gamma, points, alphas=(0.5,), atol=1e-9) -> Witness:
    """Search pairs of ``points`` and weights for the largest Jensen gap.

    Returns the first witness attaining the maximal absolute gap; raises
    :class:`NoWitnessFound` when every gap is at most ``atol``.
    """
    pts = [tuple(float(v) for v in pt) for pt in points]
    best, best_gap = None, atol
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            for a in alphas:
                w = Witness(pts[i], pts[j], float(a))
                gap = abs(w.jensen_gap(gamma))
                if gap > best_gap:
                    best, best_gap = w, gap
    if best is None:
        raise NoWitnessFound("gamma is linear on the supplied grid")
    return best
