"""Two-stage, OPT, and end-to-end coefficient learners for facility location.

All three produce an ``n x m`` table of predicted demand-weighted travel
times. At test time every table is used the same way: solve the integral
problem exactly on the table and score the assignment on each test sample's
true costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyTrainingSet, NonFiniteLoss, NonPositiveZeta
from .facility import Assignment, FLInstance, SmoothedQp, evaluate, solve_exact, to_smoothed_qp
from .qp import DEFAULT_TOL, differentiate_wrt_cost, solve
from .synthetic import SampleSet, make_rng

INITS = ("uniform", "two_stage")


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    theta: np.ndarray
    provenance: str

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2 or not np.all(np.isfinite(theta)):
            raise ValueError("theta must be a finite 2-d table")
        object.__setattr__(self, "theta", theta)

    def decide(self, inst: FLInstance) -> Assignment:
        return solve_exact(inst, self.theta)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    iterations: int = 500
    zeta: float = 10.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # "uniform" starts from the constant mean of the two-stage table,
    # "two_stage" from the table itself; both add Normal(0, init_jitter^2).
    init: str = "uniform"
    init_jitter: float = 0.01
    qp_tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not self.zeta > 0:
            raise NonPositiveZeta(f"zeta must be positive, got {self.zeta}")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1) or self.adam_eps <= 0:
            raise ValueError("invalid ADAM hyperparameters")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.init_jitter < 0:
            raise ValueError("init_jitter must be nonnegative")


@dataclass
class TrainTrace:
    loss_per_iteration: list = field(default_factory=list)
    gradient_norms: list = field(default_factory=list)
    final_loss: float | None = None  # loss at the parameters returned

    @property
    def initial_loss(self) -> float:
        return self.loss_per_iteration[0]


@dataclass(frozen=True, eq=False)
class AdamState:
    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, params) -> "AdamState":
        params = np.array(params, dtype=float)
        return cls(params, np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(state: AdamState, grad, cfg: TrainConfig) -> AdamState:
    """One bias-corrected ADAM update (descent direction)."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.params.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {state.params.shape}")
    t = state.t + 1
    m = cfg.adam_beta1 * state.m + (1 - cfg.adam_beta1) * grad
    v = cfg.adam_beta2 * state.v + (1 - cfg.adam_beta2) * grad * grad
    m_hat = m / (1 - cfg.adam_beta1**t)
    v_hat = v / (1 - cfg.adam_beta2**t)
    params = state.params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return AdamState(params, m, v, t)


def _exact_mean(a: np.ndarray) -> np.ndarray:
    """Mean over axis 0 with correctly rounded sums, hence independent of order."""
    if a.shape[0] == 0:
        raise EmptyTrainingSet("training set is empty")
    flat = a.reshape(a.shape[0], -1)
    sums = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return (sums / a.shape[0]).reshape(a.shape[1:])


def _check_train(train: SampleSet) -> None:
    if len(train) == 0:
        raise EmptyTrainingSet("training set is empty")


def fit_two_stage(train: SampleSet) -> CoefficientModel:
    """Product of per-target sample means: ``mean(T[c, f]) * mean(d[c])``."""
    _check_train(train)
    theta = _exact_mean(train.T) * _exact_mean(train.d)[:, None]
    return CoefficientModel(theta, "two_stage")


def fit_opt(train: SampleSet) -> CoefficientModel:
    """Sample mean of the per-edge products ``T[c, f] * d[c]``."""
    _check_train(train)
    return CoefficientModel(_exact_mean(train.costs), "opt")


def relaxed_loss_and_grad(sq: SmoothedQp, theta, c_bar, tol: float = DEFAULT_TOL):
    """Training loss ``c_bar . z_hat(theta)`` of the smoothed relaxation and
    its gradient with respect to ``theta``."""
    problem = sq.with_costs(theta)
    sol = solve(problem, tol=tol)
    z_hat, _ = sq.decode(sol.z)
    loss = float(np.sum(c_bar * z_hat))
    upstream = sq.cost_vector(c_bar)
    grad = differentiate_wrt_cost(problem, sol, upstream)[: sq.n_edges].reshape(c_bar.shape)
    return loss, grad


def initial_theta(train: SampleSet, cfg: TrainConfig, seed) -> np.ndarray:
    base = fit_two_stage(train).theta
    if cfg.init == "uniform":
        base = np.full_like(base, base.mean())
    return base + cfg.init_jitter * make_rng(seed).standard_normal(base.shape)


def fit_end_to_end(train: SampleSet, inst: FLInstance, cfg: TrainConfig = TrainConfig(), seed=0):
    """Train the coefficient table through the smoothed relaxation with ADAM.

    The target is the full-batch mean edge cost; since the loss is linear in
    the costs this equals the average of per-sample losses. Returns the model
    and its :class:`TrainTrace`.
    """
    _check_train(train)
    c_bar = _exact_mean(train.costs)
    if c_bar.shape != (inst.n, inst.m):
        raise ValueError(f"samples have shape {c_bar.shape}, instance expects {(inst.n, inst.m)}")
    state = AdamState.fresh(initial_theta(train, cfg, seed))
    sq = to_smoothed_qp(inst, state.params, cfg.zeta)
    trace = TrainTrace()
    for it in range(cfg.iterations):
        loss, grad = relaxed_loss_and_grad(sq, state.params, c_bar, cfg.qp_tol)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NonFiniteLoss(f"non-finite loss or gradient at iteration {it}", trace)
        trace.loss_per_iteration.append(loss)
        trace.gradient_norms.append(float(np.linalg.norm(grad)))
        state = adam_step(state, grad, cfg)
    final, _ = relaxed_loss_and_grad(sq, state.params, c_bar, cfg.qp_tol)
    if not np.isfinite(final):
        raise NonFiniteLoss("non-finite loss at the final parameters", trace)
    trace.final_loss = final
    return CoefficientModel(state.params, "end_to_end"), trace


def test_loss(model: CoefficientModel, inst: FLInstance, samples: SampleSet) -> float:
    """Mean true cost over ``samples`` of the model's exact integral decision."""
    assign = model.decide(inst)
    costs = samples.costs
    return float(np.mean([evaluate(assign, costs[i]) for i in range(len(samples))]))


test_loss.__test__ = False  # not a pytest test


def with_iterations(cfg: TrainConfig, iterations: int) -> TrainConfig:
    return replace(cfg, iterations=iterations)
