"""Experiment drivers: the correlation sweep, the gap-construction suite, the
gradient check, and result emission.

The sweep is a grid of independent cells, one per ``(rho, seed)`` pair. A
cell samples data, fits the three learners, and scores each learner's exact
integral decision on the held-out samples. Every cell derives its random
streams from ``(root_seed, rho_index, seed_index)``, so cells can run in any
order or in isolation and still produce the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import constructions as cons
from .errors import ConfigError, DflGapError, IoFailure, TestCountTooLarge
from .learners import TrainConfig, fit_end_to_end, fit_opt, fit_two_stage, test_loss
from .qp import QpProblem, differentiate_wrt_cost, solve
from .stochastic import DiscreteDistribution, find_nonlinearity_witness, grid_points, price_of_correlation
from .synthetic import DistConfig, make_rng, sample, split

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

METHODS = ("two_stage", "end_to_end", "opt")
CSV_HEADER = ("rho", "seed", "method", "test_loss", "train_seconds")
PLOT_HEADER = ("rho", "method", "mean", "p10", "p90")
FORMATS = ("csv", "json", "plotdata")
OUTPUT_NAMES = {"csv": "results.csv", "json": "results.json", "plotdata": "plotdata.csv"}


def default_rho_values(count: int = 11) -> tuple:
    return tuple(round(float(r), 10) + 0.0 for r in np.linspace(-1.0, 1.0, count))


@dataclass(frozen=True)
class SweepConfig:
    rho_values: tuple = field(default_factory=default_rho_values)
    seeds: tuple = tuple(range(10))
    samples: int = 1000
    test_count: int = 200
    dist: DistConfig = field(default_factory=DistConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    parallelism: int = 1
    root_seed: int = 0
    # wall-clock training time is nondeterministic, so it is recorded only on request
    timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rho_values", tuple(float(r) for r in self.rho_values))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.rho_values or not self.seeds:
            raise ValueError("rho_values and seeds must be nonempty")
        if any(not -1.0 <= r <= 1.0 for r in self.rho_values):
            raise ValueError("rho values must lie in [-1, 1]")
        if len(set(self.rho_values)) != len(self.rho_values) or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("rho_values and seeds must not repeat")
        if self.samples < 2:
            raise ValueError("samples must be at least 2")
        if not 0 < self.test_count < self.samples:
            raise TestCountTooLarge(f"test_count={self.test_count} must lie in (0, samples={self.samples})")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if any(s < 0 for s in self.seeds) or self.root_seed < 0:
            raise ValueError("seeds must be nonnegative")

    @property
    def n_cells(self) -> int:
        return len(self.rho_values) * len(self.seeds)


def fast_profile(base: SweepConfig | None = None) -> SweepConfig:
    """Reduced sweep: five rho values, three seeds, 200 training iterations."""
    base = base or SweepConfig()
    return replace(
        base,
        rho_values=default_rho_values(5),
        seeds=(0, 1, 2),
        train=replace(base.train, iterations=200),
    )


# --------------------------------------------------------------------------
# configuration files


def _build(cls, table: dict, where: str, nested: dict | None = None):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(table) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    kwargs = dict(table)
    for key, sub in (nested or {}).items():
        if key in kwargs:
            kwargs[key] = _build(sub, kwargs[key], key)
    for key in ("F1", "F2", "rho_values", "seeds"):
        if isinstance(kwargs.get(key), list):
            kwargs[key] = tuple(kwargs[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{where}]: {exc}") from exc


def parse_config(text: str) -> SweepConfig:
    """Parse TOML whose keys mirror :class:`SweepConfig` with ``[dist]`` and ``[train]`` tables."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return _build(SweepConfig, data, "sweep", {"dist": DistConfig, "train": TrainConfig})


def load_config(path) -> SweepConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def load_params(path) -> dict:
    """Read a TOML parameter file; a missing path means defaults."""
    if path is None:
        return {}
    try:
        return tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read params {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"params are not valid TOML: {exc}") from exc


# --------------------------------------------------------------------------
# the sweep


@dataclass(frozen=True)
class ResultsRow:
    rho: float
    seed: int
    method: str
    test_loss: float
    train_seconds: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not math.isfinite(self.test_loss):
            raise ValueError("test_loss must be finite")

    def key(self):
        return (self.rho, self.seed, self.method)


@dataclass(frozen=True)
class CellResult:
    rho_index: int
    seed_index: int
    rho: float
    seed: int
    rows: tuple = ()
    open_facilities: dict = field(default_factory=dict)
    initial_loss: float | None = None
    final_loss: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    cells: tuple

    @property
    def failures(self) -> tuple:
        return tuple(c for c in self.cells if not c.ok)


def cell_seed(cfg: SweepConfig, rho_index: int, seed_index: int) -> tuple:
    return (cfg.root_seed, rho_index, cfg.seeds[seed_index])


def run_cell(cfg: SweepConfig, rho_index: int, seed_index: int) -> CellResult:
    """One ``(rho, seed)`` cell; errors are captured in the result."""
    rho, seed = cfg.rho_values[rho_index], cfg.seeds[seed_index]
    key = cell_seed(cfg, rho_index, seed_index)
    try:
        dist = cfg.dist.with_rho(rho)
        inst = dist.instance()
        train, test = split(sample(dist, cfg.samples, key), cfg.test_count)
        rows, opened = [], {}
        fits = {
            "two_stage": lambda: (fit_two_stage(train), None),
            "end_to_end": lambda: fit_end_to_end(train, inst, cfg.train, seed=key + (1,)),
            "opt": lambda: (fit_opt(train), None),
        }
        trace = None
        for method in METHODS:
            start = time.perf_counter()
            model, tr = fits[method]()
            elapsed = time.perf_counter() - start if cfg.timing else 0.0
            trace = tr if tr is not None else trace
            opened[method] = sorted(model.decide(inst).open)
            rows.append(ResultsRow(rho, seed, method, test_loss(model, inst, test), elapsed))
        return CellResult(
            rho_index,
            seed_index,
            rho,
            seed,
            rows=tuple(rows),
            open_facilities=opened,
            initial_loss=trace.initial_loss,
            final_loss=trace.final_loss,
        )
    except (DflGapError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("cell rho=%s seed=%s failed: %s", rho, seed, exc)
        return CellResult(rho_index, seed_index, rho, seed, error=f"{type(exc).__name__}: {exc}")


def _run_cell_args(args):
    return run_cell(*args)


def run_rho_sweep(cfg: SweepConfig, progress=None) -> SweepResult:
    """All cells of ``cfg``; rows are sorted by ``(rho, seed, method)``."""
    jobs = [(cfg, i, j) for i in range(len(cfg.rho_values)) for j in range(len(cfg.seeds))]
    if cfg.parallelism > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            cells = list(pool.map(_run_cell_args, jobs))
    else:
        cells = []
        for job in jobs:
            cells.append(run_cell(*job))
            if progress is not None:
                progress(cells[-1], len(cells), len(jobs))
    rows = sorted((r for c in cells for r in c.rows), key=ResultsRow.key)
    return SweepResult(rows=tuple(rows), cells=tuple(cells))


# --------------------------------------------------------------------------
# emission


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([_fmt(r.rho), r.seed, r.method, _fmt(r.test_loss), _fmt(r.train_seconds)])
    return buf.getvalue()


def from_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected header {header}")
    return [ResultsRow(float(a), int(b), c, float(d), float(e)) for a, b, c, d, e in reader]


def to_json(rows) -> str:
    return json.dumps([asdict(r) for r in rows], indent=1) + "\n"


def from_json(text: str) -> list:
    return [ResultsRow(**obj) for obj in json.loads(text)]


def nearest_rank(values, q: float) -> float:
    """Smallest sample value with empirical CDF at least ``q`` percent."""
    return float(np.percentile(np.asarray(values, dtype=float), q, method="inverted_cdf"))


def plot_rows(rows) -> list:
    """``(rho, method, mean, p10, p90)`` per ``(rho, method)`` across seeds."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.rho, r.method), []).append(r.test_loss)
    out = []
    for (rho, method), vals in sorted(groups.items()):
        out.append((rho, method, math.fsum(vals) / len(vals), nearest_rank(vals, 10), nearest_rank(vals, 90)))
    return out


def to_plotdata(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PLOT_HEADER)
    for rho, method, mean, p10, p90 in plot_rows(rows):
        writer.writerow([_fmt(rho), method, _fmt(mean), _fmt(p10), _fmt(p90)])
    return buf.getvalue()


_RENDER = {"csv": to_csv, "json": to_json, "plotdata": to_plotdata}


def emit(rows, fmt: str, path) -> Path:
    """Write ``rows`` in ``fmt`` to ``path``; returns the path written."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to emit")
    if fmt not in _RENDER:
        raise ValueError(f"format must be one of {FORMATS}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(_RENDER[fmt](rows))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


# --------------------------------------------------------------------------
# gap suite

GAMMAS = {
    "product": lambda a, b: a * b,
    "max": lambda a, b: max(a, b),
    "min": lambda a, b: min(a, b),
    "square_diff": lambda a, b: (a - b) ** 2,
}


@dataclass(frozen=True)
class SuiteItem:
    name: str
    report: dict | None = None
    error: str | None = None


def run_gap_suite(params: dict | None = None) -> list:
    """Build and measure every construction named in ``params``.

    Recognized tables: ``[product]`` (``d``, ``N``, ``eps``, ``C``),
    ``[nonlinear]`` (``gammas``, ``grid``), ``[prop1]`` (``C``, ``eps``,
    ``grid_step``), and ``[poc]`` (``kinds``). Each item either carries a
    report or the error that stopped it.
    """
    params = dict(params or {})
    allowed = {"product", "nonlinear", "prop1", "poc"}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigError(f"unknown gap-suite section(s): {', '.join(unknown)}")
    prod = params.get("product", {})
    nonlin = params.get("nonlinear", {})
    prop = params.get("prop1", {})
    poc = params.get("poc", {})
    items = []

    def attempt(name, fn):
        try:
            items.append(SuiteItem(name, report=fn()))
        except (DflGapError, ValueError, ArithmeticError) as exc:
            items.append(SuiteItem(name, error=f"{type(exc).__name__}: {exc}"))

    N, eps, C = prod.get("N", 10.0), prod.get("eps", 0.01), prod.get("C", 1.0)
    for d in prod.get("d", [1, 10, 50]):
        attempt(f"product_gap_d{d}", lambda d=d: cons.evaluate_gap(cons.build_product_gap(d, N, eps, C)).as_dict())

    grid = nonlin.get("grid", [0.0, 10.0])
    for name in nonlin.get("gammas", ["product", "max"]):

        def nonlinear(name=name):
            if name not in GAMMAS:
                raise ValueError(f"unknown gamma {name!r}; choose from {sorted(GAMMAS)}")
            gamma = GAMMAS[name]
            w = find_nonlinearity_witness(gamma, grid_points(grid))
            out = cons.evaluate_gap(cons.build_nonlinear_gap(gamma, w)).as_dict()
            out["witness"] = {"y": list(w.y), "y_prime": list(w.y_prime), "alpha": w.alpha}
            return out

        attempt(f"nonlinear_gap_{name}", nonlinear)

    def prop1():
        inst = cons.build_prop1_counterexample(prop.get("C", 3.0), prop.get("eps", 0.1))
        grid_report = cons.verify_e2e_suboptimal(inst, prop.get("grid_step", 0.01))
        out = cons.evaluate_gap(inst).as_dict()
        out["grid"] = {k: _plain(v) for k, v in asdict(grid_report).items()}
        return out

    attempt("prop1", prop1)

    for kind in poc.get("kinds", ["flow", "setcover", "submodular"]):
        attempt(f"poc_{kind}", lambda kind=kind: poc_report(cons.worked_poc_example(kind)))
    return items


def _plain(v):
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.integer, np.floating, np.bool_)):
        return v.item()
    return v


def poc_report(inst: cons.PocInstance) -> dict:
    """Price of correlation plus the gap report for a POC instance."""
    pr = price_of_correlation(inst.dist, inst.spec)
    out = cons.evaluate_gap(inst).as_dict()
    out.update(
        kind=inst.kind,
        poc=pr.poc,
        z_star=_plain(pr.z_star),
        loss_star=pr.loss_star,
        z_proxy=_plain(pr.z_proxy),
        loss_proxy=pr.loss_proxy,
        constructive_marginals=cons.e2e_constructive_marginals(inst, pr.z_star).tolist(),
    )
    return out


def poc_from_params(kind: str, params: dict) -> cons.PocInstance:
    """POC instance from a parameter table; empty params give the worked example.

    ``scenarios`` (list of 0/1 rows) and ``probs`` define the joint law.
    Flow takes ``c1``/``c2`` arrays, set cover takes ``c1``, ``c2`` and
    ``groups``, and submodular takes ``weights`` for ``c(S) = sqrt(sum w)``
    and ``C``.
    """
    if not params:
        return cons.worked_poc_example(kind)
    try:
        dist = DiscreteDistribution(np.asarray(params["scenarios"], float), np.asarray(params["probs"], float))
        data = {k: v for k, v in params.items() if k not in ("scenarios", "probs")}
        if kind == "submodular":
            w = np.asarray(data.pop("weights"), dtype=float)
            data["cost"] = lambda S: float(np.sqrt(w[list(S)].sum()))
        return cons.build_poc_example(kind, {"dist": dist, **data})
    except KeyError as exc:
        raise ConfigError(f"missing POC parameter {exc}") from exc


# --------------------------------------------------------------------------
# gradient check


def random_qp(rng: np.random.Generator, max_var: int = 30, max_ineq: int = 60):
    """Strongly convex QP with a planted strictly complementary solution.

    Returns ``(problem, z_true)``. Active rows never exceed the free
    dimension, so the active constraint gradients are generically independent.
    """
    n = int(rng.integers(2, max_var + 1))
    n_eq = int(rng.integers(0, max(1, n // 3)))
    m = int(rng.integers(1, max_ineq + 1))
    M = rng.standard_normal((n, n))
    Q = M.T @ M / n + 0.1 * np.eye(n)
    A = rng.standard_normal((n_eq, n))
    G = rng.standard_normal((m, n))
    z = rng.standard_normal(n)
    n_active = min(int(rng.integers(0, max(1, n - n_eq))), m)
    active = np.zeros(m, dtype=bool)
    active[rng.choice(m, n_active, replace=False)] = True
    lam = np.where(active, rng.uniform(0.5, 2.0, m), 0.0)
    slack = np.where(active, 0.0, rng.uniform(0.5, 2.0, m))
    nu = rng.standard_normal(n_eq)
    c = -(Q @ z + A.T @ nu + G.T @ lam)
    return QpProblem(Q=Q, c=c, A=A, b=A @ z, G=G, h=G @ z + slack), z


@dataclass(frozen=True)
class GradcheckReport:
    trials: int
    worst_error: float
    tol: float
    errors: tuple

    @property
    def passed(self) -> bool:
        return self.worst_error <= self.tol


def gradcheck(trials: int = 200, tol: float = 1e-4, seed=0, step: float = 1e-5) -> GradcheckReport:
    """Compare the analytic cost gradient of ``u . z*(c)`` with central differences.

    Error per trial is ``max|g - fd| / max(max|fd|, 1e-12)``.
    """
    rng = make_rng(seed)
    errors = []
    for _ in range(trials):
        p, _ = random_qp(rng)
        sol = solve(p)
        u = rng.standard_normal(p.n_var)
        g = differentiate_wrt_cost(p, sol, u)
        fd = np.empty(p.n_var)
        for i in range(p.n_var):
            e = np.zeros(p.n_var)
            e[i] = step
            fd[i] = (u @ solve(p.with_cost(p.c + e)).z - u @ solve(p.with_cost(p.c - e)).z) / (2 * step)
        errors.append(float(np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-12)))
    return GradcheckReport(trials=trials, worst_error=max(errors, default=0.0), tol=tol, errors=tuple(errors))


__all__ = [
    "SweepConfig",
    "ResultsRow",
    "CellResult",
    "SweepResult",
    "fast_profile",
    "parse_config",
    "load_config",
    "run_cell",
    "run_rho_sweep",
    "emit",
    "run_gap_suite",
    "gradcheck",
]
