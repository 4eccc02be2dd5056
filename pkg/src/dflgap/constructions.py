"""Executable worst-case instances separating two-stage and end-to-end
learning, and the price-of-correlation examples on which end-to-end is
optimal.

Every instance is a :class:`~dflgap.stochastic.DiscreteDistribution` plus a
:class:`~dflgap.stochastic.LossSpec`, so the enumeration oracles in
:mod:`dflgap.stochastic` measure all losses. "End-to-end" here means the best
decision reachable by plugging some deterministic prediction into the
problem; it is computed from an explicit constructive prediction where one
is known and, independently, by searching predictions built from the
per-coordinate supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Callable

import numpy as np

from .errors import InvariantViolation, NoSupportingSet, WitnessInvalid
from .stochastic import (
    DiscreteDistribution,
    LossSpec,
    Witness,
    argmin_index,
    candidate_decisions,
    deterministic_decision,
    expected_loss,
    multilinear_extension,
    solve_stochastic,
    two_stage_decision,
)

SEARCH_CAP = 4096  # prediction grid size above which the search uses scenarios only


@dataclass(frozen=True, eq=False)
class GapInstance:
    dist: DiscreteDistribution
    spec: LossSpec
    label: str
    closed_forms: dict = field(default_factory=dict)
    e2e_prediction: np.ndarray | None = None  # constructive prediction, if known
    params: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class GapReport:
    label: str
    loss_two_stage: float
    loss_e2e: float
    loss_opt: float
    ratio_ts_over_e2e: float
    ratio_ts_over_opt: float
    decisions: dict
    loss_e2e_constructive: float | None = None
    loss_e2e_search: float | None = None
    closed_form_errors: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "loss_two_stage": self.loss_two_stage,
            "loss_e2e": self.loss_e2e,
            "loss_opt": self.loss_opt,
            "ratio_ts_over_e2e": self.ratio_ts_over_e2e,
            "ratio_ts_over_opt": self.ratio_ts_over_opt,
            "loss_e2e_constructive": self.loss_e2e_constructive,
            "loss_e2e_search": self.loss_e2e_search,
            "decisions": {k: _jsonable(v) for k, v in self.decisions.items()},
            "closed_form_errors": self.closed_form_errors,
        }


def _jsonable(z):
    if isinstance(z, np.ndarray):
        return z.tolist()
    if isinstance(z, tuple):
        return [_jsonable(v) for v in z]
    if isinstance(z, (np.integer, np.floating)):
        return z.item()
    return z


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 1.0 if num == 0 else float(np.copysign(np.inf, num))
    return float(num / den)


# --------------------------------------------------------------------------
# element-wise objectives


def elementwise_loss(gamma, pairs, F, C: float = 0.0, sense: float = 1.0) -> Callable:
    """``f(y, z) = sense * sum_t gamma(y[a_t], y[b_t]) * F[t, z] + C``.

    ``pairs`` lists the coordinate pairs ``(a_t, b_t)``; ``F[t, z]`` is the
    value of ``f_t`` at decision index ``z``.
    """
    F = np.asarray(F, dtype=float)
    pairs = [tuple(pr) for pr in pairs]

    def f(y, z):
        coef = np.array([gamma(y[a], y[b]) for a, b in pairs])
        return float(sense * (coef @ F[:, z]) + C)

    return f


def elementwise_e2e_prediction(dist: DiscreteDistribution, gamma, pairs) -> np.ndarray:
    """Prediction ``y'`` with ``y'[a_t] = E[gamma(y[a_t], y[b_t])]`` and ``y'[b_t] = 1``.

    Requires ``gamma(a, 1) == a``; then plugging ``y'`` in reproduces every
    expected coefficient, so the plug-in optimum is the stochastic optimum.
    """
    for a in (-2.5, 0.0, 1.0, 7.0):
        if gamma(a, 1.0) != a:
            raise ValueError("constructive prediction needs gamma(a, 1) == a")
    y = np.zeros(dist.dim)
    for a, b in pairs:
        y[a] = sum(float(p) * gamma(v[a], v[b]) for v, p in dist.scenarios() if p > 0)
        y[b] = 1.0
    return y


def _product(a, b):
    return a * b


# --------------------------------------------------------------------------
# product gap


def build_product_gap(d: int, N: float = 10.0, eps: float = 0.01, C: float = 1.0) -> GapInstance:
    """Unbounded-gap instance with ``d`` blocks of four targets.

    Block ``i`` holds ``(y1, y2, y3, y4)`` at coordinates ``4i..4i+3``; the
    pair ``(y1, y2)`` is ``(0, N)`` or ``(N, 0)`` with probability 1/2 each and
    ``y3 = y4 = N/2 - eps``. One fair coin drives every block, which leaves
    each block's law unchanged and keeps two scenarios. Decisions are arrays
    of shape ``(d, 2)`` with each row ``(1, 0)`` or ``(0, 1)``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if not N > 0:
        raise ValueError("N must be positive")
    if not 0 < eps < N / 2:
        raise ValueError("eps must lie in (0, N/2)")
    if not C > 0:
        raise ValueError("C must be positive")
    low = N / 2 - eps
    heads = np.tile([0.0, N, low, low], d)
    tails = np.tile([N, 0.0, low, low], d)
    dist = DiscreteDistribution(np.vstack([heads, tails]), np.array([0.5, 0.5]))

    def coefficients(y):
        blocks = np.asarray(y, dtype=float).reshape(d, 4)
        return np.column_stack([blocks[:, 0] * blocks[:, 1], blocks[:, 2] * blocks[:, 3]])

    def f(y, z):
        return float(C + np.sum(coefficients(y) * np.asarray(z, dtype=float)))

    def solver(y):
        # cover each block with its cheaper column; ties go to the first
        coef = coefficients(y)
        first = coef[:, 0] <= coef[:, 1]
        return np.column_stack([first, ~first]).astype(float)

    spec = LossSpec(f=f, solver=solver)
    e2e_z = np.tile([1.0, 0.0], (d, 1))
    prediction = np.tile([0.0, 1.0, low * low, 1.0], d)  # E[y1*y2] = 0 paired with 1
    return GapInstance(
        dist=dist,
        spec=spec,
        label=f"product_gap(d={d})",
        closed_forms={"loss_e2e": C, "loss_two_stage": C + d * low**2, "loss_opt": C},
        e2e_prediction=prediction,
        params={"d": d, "N": N, "eps": eps, "C": C, "e2e_decision": e2e_z},
    )


def product_gap_candidates(d: int) -> list:
    """All ``2^d`` basic decisions of the product-gap problem (small ``d`` only)."""
    out = []
    for bits in product((0, 1), repeat=d):
        first = np.array(bits) == 0
        out.append(np.column_stack([first, ~first]).astype(float))
    return out


# --------------------------------------------------------------------------
# generic nonlinear gap

_DIRECTIONS = [(-1, -1), (1, 1), (-1, 0), (0, -1), (1, 0), (0, 1)]


def build_nonlinear_gap(gamma, witness: Witness, tries: int = 6) -> GapInstance:
    """Two-term instance on which two-stage is strictly suboptimal.

    Targets are ``(y11, y12, y21, y22)``. The first pair takes the witness
    points with weights ``alpha`` and ``1 - alpha``; the second pair is a
    point mass near the first pair's mean. Decisions pick one of the two
    terms: index 0 pays ``gamma(y11, y12)``, index 1 pays ``gamma(y21, y22)``.

    If ``E[gamma] < gamma(E)`` the problem minimizes; otherwise it minimizes
    the negated terms plus a constant that keeps losses positive. The offset
    size starts at ``min(|gap| / 4, 0.1)`` and shrinks tenfold until both
    strict inequalities hold.
    """
    y, y_prime, alpha = (np.asarray(witness.y, float), np.asarray(witness.y_prime, float), float(witness.alpha))
    if y.shape != (2,) or y_prime.shape != (2,) or not 0 < alpha < 1:
        raise WitnessInvalid("witness must be two 2-d points and a weight in (0, 1)")
    gap = witness.jensen_gap(gamma)
    if abs(gap) <= 1e-9:
        raise WitnessInvalid("witness does not certify nonlinearity")
    sense = 1.0 if gap < 0 else -1.0  # gap = E[gamma] - gamma(E)
    g = lambda a, b: sense * gamma(a, b)  # noqa: E731

    mean = alpha * y + (1 - alpha) * y_prime
    e_first = alpha * g(*y) + (1 - alpha) * g(*y_prime)
    g_mean = g(*mean)
    eps0 = min(abs(gap) / 4, 0.1)
    second = None
    for k in range(tries):
        eps = eps0 / 10**k
        for direction in _DIRECTIONS:
            cand = mean + eps * np.asarray(direction, float)
            if e_first < g(*cand) < g_mean:
                second, used = cand, (eps, direction)
                break
        if second is not None:
            break
    if second is None:
        raise WitnessInvalid("no point-mass offset separates the two-stage and optimal decisions")

    values = np.array([[y[0], y[1], second[0], second[1]], [y_prime[0], y_prime[1], second[0], second[1]]])
    dist = DiscreteDistribution(values, np.array([alpha, 1 - alpha]))
    pairs = [(0, 1), (2, 3)]
    F = np.eye(2)
    if sense > 0:
        C = 0.0
    else:
        pts = np.vstack([values[:, :2], values[:, 2:], mean[None, :]])
        C = 1.0 + max(abs(gamma(*pt)) for pt in pts)
    f = elementwise_loss(gamma, pairs, F, C=C, sense=sense)
    spec = LossSpec(f=f, decisions=[0, 1])
    return GapInstance(
        dist=dist,
        spec=spec,
        label="nonlinear_gap",
        closed_forms={"loss_opt": e_first + C, "loss_two_stage": g(*second) + C},
        params={"eps": used[0], "direction": used[1], "sense": "min" if sense > 0 else "max", "C": C},
    )


# --------------------------------------------------------------------------
# end-to-end can be suboptimal

PROP1_SCENARIOS = ((1.0, 1.0), (0.0, 0.0), (1.0, 0.0), (0.0, 1.0))


def build_prop1_counterexample(C: float = 3.0, eps: float = 0.1) -> GapInstance:
    """Two Boolean events that always agree, with three decisions.

    Decision 0 costs 1 when the events agree and infinity otherwise;
    decision 1 costs ``eps`` except ``C`` when both are false; decision 2
    costs ``eps`` except ``C`` when both are true. Predictions are marginal
    probabilities, plugged in through the multilinear extension.
    """
    if not C > 2:
        raise ValueError("C must exceed 2")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    table = np.array(
        [
            [1.0, 1.0, np.inf, np.inf],
            [eps, C, eps, eps],
            [C, eps, eps, eps],
        ]
    )

    def f(y, z):
        return float(table[z, PROP1_SCENARIOS.index((float(y[0]), float(y[1])))])

    dist = DiscreteDistribution(np.array([[1.0, 1.0], [0.0, 0.0]]), np.array([0.5, 0.5]))
    spec = LossSpec(f=f, decisions=[0, 1, 2], deterministic=multilinear_extension(f))
    return GapInstance(
        dist=dist,
        spec=spec,
        label="prop1",
        closed_forms={"loss_opt": 1.0, "loss_e2e": 0.5 * (eps + C)},
        params={"C": C, "eps": eps, "table": table},
    )


@dataclass(frozen=True, eq=False)
class GridReport:
    loss_star: float
    min_loss: float
    argmin_marginals: tuple
    decisions_seen: tuple
    grid_size: int
    all_strict: bool


def verify_e2e_suboptimal(inst: GapInstance, grid_step: float = 0.01) -> GridReport:
    """Scan a grid of marginal predictions and score each induced decision.

    Because the multilinear extension is exact for independent events, the
    induced decision at ``(p1, p2)`` is the proxy optimum under those
    marginals. Reports the smallest true loss over the grid and whether every
    grid point is strictly worse than the stochastic optimum.
    """
    count = int(round(1.0 / grid_step))
    if count < 1 or abs(count * grid_step - 1.0) > 1e-9:
        raise ValueError("grid_step must divide 1")
    grid = np.linspace(0.0, 1.0, count + 1)
    _, loss_star = solve_stochastic(inst.dist, inst.spec)
    decisions = inst.spec.decisions
    cache = {z: expected_loss(inst.dist, z, inst.spec) for z in decisions}
    best, best_at, seen, strict = np.inf, None, set(), True
    for p1, p2 in product(grid, grid):
        z = deterministic_decision(np.array([p1, p2]), inst.spec)
        seen.add(z)
        loss = cache[z]
        strict &= loss > loss_star
        if loss < best:
            best, best_at = loss, (float(p1), float(p2))
    return GridReport(
        loss_star=loss_star,
        min_loss=best,
        argmin_marginals=best_at,
        decisions_seen=tuple(sorted(seen)),
        grid_size=len(grid) ** 2,
        all_strict=bool(strict),
    )


# --------------------------------------------------------------------------
# price-of-correlation examples


@dataclass(frozen=True, eq=False)
class PocInstance:
    kind: str
    dist: DiscreteDistribution
    spec: LossSpec
    data: dict

    @property
    def n_events(self) -> int:
        return self.dist.dim


def _boolean_dist(dist) -> DiscreteDistribution:
    if not dist.is_boolean():
        raise InvariantViolation("price-of-correlation examples need Boolean events")
    return dist


def flow_loss(c1, c2) -> Callable:
    """Buy ``z`` units up front at ``c1[z]``; cover the shortfall at ``c2``."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)

    def f(y, z):
        demand = int(round(float(np.sum(y))))
        return float(c1[z] + c2[max(demand - z, 0)])

    return f


def setcover_loss(c1: float, c2: float, groups) -> Callable:
    """Buy groups up front at ``c1`` each; afterwards pay ``c2`` per realized
    item of the uncovered group with the most realized items."""
    groups = [np.asarray(g, dtype=int) for g in groups]

    def f(y, z):
        y = np.asarray(y)
        worst = max((float(np.sum(y[g])) for g, bought in zip(groups, z) if not bought), default=0.0)
        return float(c1 * sum(z) + c2 * worst)

    return f


def submodular_loss(cost, C: float) -> Callable:
    """Pay the realized set's cost ``cost(S)`` (decision 0) or the constant ``C`` (decision 1)."""

    def f(y, z):
        if z == 0:
            return float(cost(frozenset(int(i) for i in np.flatnonzero(np.asarray(y) > 0.5))))
        return float(C)

    return f


def check_submodular(cost, n: int, cap: int = 10) -> None:
    """Exhaustive monotonicity and submodularity check over all subsets."""
    if n > cap:
        raise InvariantViolation(f"ground set of size {n} exceeds the exhaustive-check cap {cap}")
    ground = range(n)
    subsets = [frozenset(s) for r in range(n + 1) for s in combinations(ground, r)]
    val = {S: float(cost(S)) for S in subsets}
    tol = 1e-12 * (1 + max(abs(v) for v in val.values()))
    for S in subsets:
        for e in ground:
            if e in S:
                continue
            gain = val[S | {e}] - val[S]
            if gain < -tol:
                raise InvariantViolation(f"cost is not monotone at {sorted(S)} + {e}")
            for T in subsets:
                if S < T and e not in T and val[T | {e}] - val[T] > gain + tol:
                    raise InvariantViolation(f"cost is not submodular at {sorted(S)} within {sorted(T)}, element {e}")


def build_poc_example(kind: str, params: dict) -> PocInstance:
    """Build a flow, set-cover, or submodular example over Boolean events.

    ``params`` always carries ``dist`` (a Boolean
    :class:`DiscreteDistribution`) and, per kind:

    * flow: ``c1`` and ``c2`` as arrays indexed by units ``0..n``. ``c1`` must
      be nondecreasing and subadditive and ``c2[k] > c1[k]`` for ``k >= 1``.
    * setcover: ``c1 < c2`` and ``groups``, disjoint index lists covering all
      events.
    * submodular: ``cost`` (callable on frozensets) and threshold ``C``.
    """
    dist = _boolean_dist(params["dist"])
    n = dist.dim
    if kind == "flow":
        c1 = np.asarray(params["c1"], dtype=float)
        c2 = np.asarray(params["c2"], dtype=float)
        if c1.shape != (n + 1,) or c2.shape != (n + 1,):
            raise InvariantViolation("flow costs must be indexed by 0..n")
        if c1[0] != 0 or c2[0] != 0:
            raise InvariantViolation("buying nothing must cost nothing")
        if np.any(np.diff(c1) < 0):
            raise InvariantViolation("first-stage cost must be nondecreasing")
        for a in range(n + 1):
            for b in range(n + 1 - a):
                if c1[a + b] > c1[a] + c1[b] + 1e-12:
                    raise InvariantViolation("first-stage cost must be subadditive")
        if np.any(c2[1:] <= c1[1:]):
            raise InvariantViolation("second-stage cost must exceed first-stage cost")
        f = flow_loss(c1, c2)
        decisions = list(range(n + 1))
        data = {"c1": c1, "c2": c2}
    elif kind == "setcover":
        c1, c2 = float(params["c1"]), float(params["c2"])
        groups = [tuple(int(i) for i in g) for g in params["groups"]]
        if not c1 < c2:
            raise InvariantViolation("first-stage cost must be below second-stage cost")
        flat = [i for g in groups for i in g]
        if sorted(flat) != list(range(n)) or any(len(g) == 0 for g in groups):
            raise InvariantViolation("groups must be nonempty, disjoint, and cover every event")
        f = setcover_loss(c1, c2, groups)
        decisions = list(product((0, 1), repeat=len(groups)))
        data = {"c1": c1, "c2": c2, "groups": groups}
    elif kind == "submodular":
        cost, C = params["cost"], float(params["C"])
        check_submodular(cost, n)
        f = submodular_loss(cost, C)
        decisions = [0, 1]
        data = {"cost": cost, "C": C}
    else:
        raise ValueError(f"unknown kind {kind!r}")
    spec = LossSpec(f=f, decisions=decisions, deterministic=multilinear_extension(f))
    return PocInstance(kind=kind, dist=dist, spec=spec, data=data)


def e2e_constructive_marginals(inst: PocInstance, z_star) -> np.ndarray:
    """Marginal prediction under which the plug-in optimum is ``z_star``."""
    n = inst.n_events
    if inst.kind == "flow":
        p = np.zeros(n)
        p[: int(z_star)] = 1.0
        return p
    if inst.kind == "setcover":
        p = np.zeros(n)
        for g, bought in zip(inst.data["groups"], z_star):
            if bought:
                p[list(g)] = 1.0
        return p
    if inst.kind == "submodular":
        return _submodular_marginals(inst)
    raise ValueError(f"unknown kind {inst.kind!r}")


def _submodular_marginals(inst: PocInstance) -> np.ndarray:
    cost = inst.data["cost"]
    target = sum(float(p) * cost(frozenset(np.flatnonzero(y > 0.5).tolist())) for y, p in inst.dist.scenarios() if p > 0)
    n = inst.n_events
    # walk the chain V, V - {n-1}, ..., {} looking for c(S - e) <= target <= c(S)
    S = list(range(n))
    while S:
        e = S[-1]
        hi, lo = cost(frozenset(S)), cost(frozenset(S[:-1]))
        if lo <= target <= hi:
            p = np.zeros(n)
            p[S[:-1]] = 1.0
            p[e] = 1.0 if hi == lo else (target - lo) / (hi - lo)
            return p
        S = S[:-1]
    raise NoSupportingSet("no chain set brackets the expected cost")


# --------------------------------------------------------------------------
# measuring gaps


def _support_predictions(dist: DiscreteDistribution, cap: int = SEARCH_CAP):
    supports = [np.unique(dist.values[dist.probs > 0, i]) for i in range(dist.dim)]
    size = 1
    for s in supports:
        size *= len(s)
        if size > cap:
            return [y for y, p in dist.scenarios() if p > 0]
    return [np.array(y, dtype=float) for y in product(*supports)]


def e2e_search(dist: DiscreteDistribution, spec: LossSpec, predictions=None, candidates=None):
    """Best true loss over decisions induced by the given predictions.

    Defaults to all predictions built from the coordinate supports, or the
    scenarios themselves if that grid is too large. Returns
    ``(decision, loss, prediction)``; ties go to the earliest prediction.
    """
    preds = list(predictions) if predictions is not None else _support_predictions(dist)
    zs = [deterministic_decision(y, spec, candidates) for y in preds]
    losses = [expected_loss(dist, z, spec) for z in zs]
    i = argmin_index(losses)
    return zs[i], losses[i], preds[i]


def evaluate_gap(inst, candidates=None, search: bool = True) -> GapReport:
    """Two-stage, end-to-end, and optimal losses for an instance.

    Accepts a :class:`GapInstance` or a :class:`PocInstance`. End-to-end is
    the better of the constructive prediction and the support search.
    """
    dist, spec = inst.dist, inst.spec
    if spec.decisions is None:
        decisions = candidate_decisions(spec, [dist], candidates, predictions=[dist.mean()])
    else:
        decisions = None
    z_opt, loss_opt = solve_stochastic(dist, spec, decisions)
    z_ts, loss_ts = two_stage_decision(dist, spec, decisions)

    prediction = None
    if isinstance(inst, PocInstance):
        prediction = e2e_constructive_marginals(inst, z_opt)
    elif inst.e2e_prediction is not None:
        prediction = inst.e2e_prediction
    loss_con = z_con = None
    if prediction is not None:
        z_con = deterministic_decision(prediction, spec, decisions)
        loss_con = expected_loss(dist, z_con, spec)
    loss_search = z_search = None
    if search:
        z_search, loss_search, _ = e2e_search(dist, spec, candidates=decisions)
    options = [(loss, z) for loss, z in ((loss_con, z_con), (loss_search, z_search)) if loss is not None]
    if not options:
        raise ValueError("no end-to-end prediction available")
    loss_e2e, z_e2e = min(options, key=lambda t: t[0])

    slack = 1e-9 * max(1.0, abs(loss_opt))
    if loss_opt > loss_ts + slack or loss_opt > loss_e2e + slack:
        raise InvariantViolation("stochastic optimum is beaten by a plug-in decision")

    closed = getattr(inst, "closed_forms", {}) or {}
    measured = {"loss_e2e": loss_e2e, "loss_two_stage": loss_ts, "loss_opt": loss_opt}
    errors = {k: abs(measured[k] - v) / max(1.0, abs(v)) for k, v in closed.items() if k in measured}
    label = getattr(inst, "label", None) or f"poc_{inst.kind}"
    return GapReport(
        label=label,
        loss_two_stage=loss_ts,
        loss_e2e=loss_e2e,
        loss_opt=loss_opt,
        ratio_ts_over_e2e=_ratio(loss_ts, loss_e2e),
        ratio_ts_over_opt=_ratio(loss_ts, loss_opt),
        decisions={"two_stage": z_ts, "end_to_end": z_e2e, "opt": z_opt},
        loss_e2e_constructive=loss_con,
        loss_e2e_search=loss_search,
        closed_form_errors=errors,
    )


# --------------------------------------------------------------------------
# random instances


def random_boolean_joint(rng: np.random.Generator, n: int, max_scenarios: int = 64) -> DiscreteDistribution:
    """Random correlated law over ``{0, 1}^n`` with at most ``max_scenarios`` atoms."""
    size = min(2**n, max_scenarios)
    count = int(rng.integers(1, size + 1))
    codes = rng.choice(2**n, size=count, replace=False)
    values = ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    probs = rng.dirichlet(np.ones(count))
    probs[-1] = 1.0 - probs[:-1].sum()
    if probs[-1] < 0:
        probs = np.abs(probs) / np.abs(probs).sum()
    return DiscreteDistribution(values, probs)


def random_poc_instance(kind: str, rng: np.random.Generator, max_events: int = 6) -> PocInstance:
    """Random valid instance of ``kind`` with continuous random costs."""
    n = int(rng.integers(1, max_events + 1))
    dist = random_boolean_joint(rng, n)
    if kind == "flow":
        units = np.arange(n + 1, dtype=float)
        c1 = rng.uniform(0.5, 2.0) * units ** rng.uniform(0.4, 1.0)
        c2 = c1 * (1.0 + rng.uniform(0.1, 2.0)) + rng.uniform(0.0, 1.0) * units
        return build_poc_example("flow", {"dist": dist, "c1": c1, "c2": c2})
    if kind == "setcover":
        k = int(rng.integers(1, n + 1))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
        rng.shuffle(labels)
        groups = [tuple(np.flatnonzero(labels == g).tolist()) for g in range(k)]
        c1 = rng.uniform(0.2, 2.0)
        c2 = c1 * (1.0 + rng.uniform(0.05, 2.0))
        return build_poc_example("setcover", {"dist": dist, "c1": c1, "c2": c2, "groups": groups})
    if kind == "submodular":
        w = rng.uniform(0.1, 2.0, n)
        v = rng.uniform(0.0, 1.0, n)
        scale = rng.uniform(0.5, 2.0)

        def cost(S, w=w, v=v, scale=scale):
            idx = list(S)
            return float(scale * np.sqrt(w[idx].sum()) + v[idx].sum())

        full = cost(frozenset(range(n)))
        return build_poc_example("submodular", {"dist": dist, "cost": cost, "C": rng.uniform(0.0, full)})
    raise ValueError(f"unknown kind {kind!r}")


def worked_poc_example(kind: str) -> PocInstance:
    """The small hand-sized examples: three fully correlated fair events for
    flow, two singleton groups for set cover, three events with
    ``c(S) = min(|S|, 2)`` for submodular."""
    if kind == "flow":
        dist = DiscreteDistribution(np.array([[1.0, 1, 1], [0, 0, 0]]), np.array([0.5, 0.5]))
        units = np.arange(4, dtype=float)
        return build_poc_example("flow", {"dist": dist, "c1": units, "c2": 3 * units})
    if kind == "setcover":
        dist = DiscreteDistribution(np.array([[1.0, 1], [0, 0]]), np.array([0.5, 0.5]))
        return build_poc_example("setcover", {"dist": dist, "c1": 1.0, "c2": 3.0, "groups": [(0,), (1,)]})
    if kind == "submodular":
        dist = DiscreteDistribution(np.array([[1.0, 1, 1], [0, 0, 0]]), np.array([0.5, 0.5]))
        return build_poc_example("submodular", {"dist": dist, "cost": lambda S: float(min(len(S), 2)), "C": 1.5})
    raise ValueError(f"unknown kind {kind!r}")


# --------------------------------------------------------------------------
# random element-wise instances with exact arithmetic


def random_elementwise_instance(rng: np.random.Generator, gamma, independent: bool, d: int | None = None):
    """Random element-wise instance with small integer targets, dyadic
    probabilities, and integer ``F``; every loss is exactly representable.

    With ``independent`` the two coordinates of each pair are drawn from
    independent laws; otherwise the joint law is an arbitrary correlated one.
    Returns ``(dist, spec, pairs)``.
    """
    d = int(rng.integers(1, 4)) if d is None else d
    n_dec = int(rng.integers(2, 6))
    pairs = [(2 * t, 2 * t + 1) for t in range(d)]
    F = rng.integers(-5, 6, size=(d, n_dec)).astype(float)

    def dyadic(count):
        w = rng.integers(1, 5, size=count).astype(float)
        total = 2 ** int(np.ceil(np.log2(w.sum())))
        w[-1] += total - w.sum()
        return w / total

    if independent:
        laws = []
        for _ in range(2 * d):
            size = int(rng.integers(1, 4))
            laws.append((rng.choice(np.arange(-4, 5), size=size, replace=False).astype(float), dyadic(size)))
        dist = DiscreteDistribution.independent(laws)
    else:
        count = int(rng.integers(1, 7))
        values = rng.integers(-4, 5, size=(count, 2 * d)).astype(float)
        dist = DiscreteDistribution(values, dyadic(count))
    f = elementwise_loss(gamma, pairs, F, C=float(rng.integers(0, 5)))
    return dist, LossSpec(f=f, decisions=list(range(n_dec))), pairs


def is_linear_in_targets(gamma) -> bool:
    """Cheap structural probe used to label instances in reports."""
    pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, -1.0)]
    base = gamma(0.0, 0.0)
    a, b = gamma(1.0, 0.0) - base, gamma(0.0, 1.0) - base
    return all(abs(gamma(x, y) - (base + a * x + b * y)) < 1e-12 for x, y in pts)

