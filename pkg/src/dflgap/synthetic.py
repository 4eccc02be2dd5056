"""Correlated travel-time and demand benchmark.

Each customer ``c`` has a latent factor ``l_c`` with standard deviation
``|rho| * sigma_li``. Travel times to facilities in ``F1`` are shifted by the
latent factor, demand is shifted by it too, and travel times to ``F2`` are
independent of everything else. Second Normal parameters are variances, so
``sigma_*`` fields are standard deviations.

Random streams come from numpy's counter-based Philox generator keyed by a
:class:`numpy.random.SeedSequence`, so a seed may be an int or a tuple of
ints (the sweep uses ``(root_seed, rho_index, seed_index)``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import IoFailure, TestCountTooLarge
from .facility import FLInstance

COUPLINGS = ("signed", "abs")


@dataclass(frozen=True)
class DistConfig:
    n: int = 20
    m: int = 20
    rho: float = 0.0
    sigma_li: float = 20.25
    sigma_t: float = 3.0
    sigma_d: float = 3.0
    mu_F1: float = 5.5
    mu_F2: float = 6.0
    mu_d: float = 10.0
    k: int = 1
    F1: tuple | None = field(default=None)
    F2: tuple | None = field(default=None)
    # "signed": F1 travel times move with sign(rho) * l_c, so demand and
    # travel time have correlation sign rho. "abs": they move with |l_c|.
    latent_coupling: str = "signed"

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if min(self.sigma_li, self.sigma_t, self.sigma_d) < 0:
            raise ValueError("standard deviations must be nonnegative")
        if self.latent_coupling not in COUPLINGS:
            raise ValueError(f"latent_coupling must be one of {COUPLINGS}")
        inst = FLInstance(self.n, self.m, self.k, self.F1, self.F2)
        object.__setattr__(self, "F1", inst.F1)
        object.__setattr__(self, "F2", inst.F2)

    def instance(self) -> FLInstance:
        return FLInstance(self.n, self.m, self.k, self.F1, self.F2)

    def with_rho(self, rho: float) -> "DistConfig":
        return DistConfig(**{**asdict(self), "rho": float(rho)})


class Sample(NamedTuple):
    T: np.ndarray  # n x m travel times
    d: np.ndarray  # n demands


@dataclass(frozen=True, eq=False)
class SampleSet:
    """A stack of samples: ``T`` is ``count x n x m`` and ``d`` is ``count x n``."""

    T: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if T.ndim != 3 or d.ndim != 2 or T.shape[:2] != d.shape:
            raise ValueError(f"inconsistent sample shapes {T.shape} and {d.shape}")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "d", d)

    def __len__(self) -> int:
        return self.T.shape[0]

    def __getitem__(self, key):
        if isinstance(key, slice):
            return SampleSet(self.T[key], self.d[key])
        return Sample(self.T[key], self.d[key])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def costs(self) -> np.ndarray:
        """Per-sample true edge costs ``T[c, f] * d[c]``."""
        return self.T * self.d[:, :, None]

    @classmethod
    def from_samples(cls, samples) -> "SampleSet":
        samples = list(samples)
        if not samples:
            raise ValueError("no samples")
        return cls(np.stack([s.T for s in samples]), np.stack([s.d for s in samples]))


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def sample(config: DistConfig, count: int, seed) -> SampleSet:
    """Draw ``count`` independent samples; deterministic in ``(config, count, seed)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = make_rng(seed)
    n, m = config.n, config.m
    u = rng.standard_normal((count, n))
    eps_t = rng.standard_normal((count, n, m))
    eps_d = rng.standard_normal((count, n))

    rho = config.rho
    latent = rho * config.sigma_li * u
    if config.latent_coupling == "signed":
        shift = abs(rho) * config.sigma_li * u
    else:
        shift = np.abs(latent)

    F1 = np.array(config.F1, dtype=int)
    F2 = np.array(config.F2, dtype=int)
    T = np.empty((count, n, m))
    sd_f1 = np.sqrt(max(1.0 - rho * rho, 0.0)) * config.sigma_t
    T[:, :, F1] = config.mu_F1 + shift[:, :, None] + sd_f1 * eps_t[:, :, F1]
    T[:, :, F2] = config.mu_F2 + config.sigma_t * eps_t[:, :, F2]
    d = latent + config.mu_d + config.sigma_d * eps_d
    return SampleSet(T, d)


def split(samples: SampleSet, test_count: int):
    """Order-preserving split: the last ``test_count`` samples are the test set."""
    count = len(samples)
    if test_count < 0:
        raise ValueError("test_count must be nonnegative")
    if test_count >= count:
        raise TestCountTooLarge(f"test_count={test_count} leaves no training data out of {count}")
    cut = count - test_count
    return samples[:cut], samples[cut:]


def save(samples: SampleSet, path, config: DistConfig | None = None) -> None:
    """Write a dataset as ``.npz`` with the generating config as JSON metadata."""
    meta = json.dumps(asdict(config) if config is not None else {})
    try:
        with open(path, "wb") as fh:
            np.savez(fh, T=samples.T, d=samples.d, config=np.array(meta))
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {path}: {exc}") from exc


def load(path):
    """Read a dataset written by :func:`save`; returns ``(samples, config or None)``."""
    try:
        with np.load(path) as data:
            samples = SampleSet(data["T"], data["d"])
            meta = json.loads(str(data["config"]))
    except OSError as exc:
        raise IoFailure(f"cannot read dataset from {path}: {exc}") from exc
    if meta:
        for key in ("F1", "F2"):
            meta[key] = tuple(meta[key])
        return samples, DistConfig(**meta)
    return samples, None
