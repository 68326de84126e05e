"""Monte Carlo driver: block-keyed random streams, mergeable statistics, pilot tuning.

Replications are grouped into fixed-size blocks.  Block b always draws from
the stream keyed by (seed, b), and block statistics are merged in block
order, so a run gives the same numbers whatever the number of workers.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import QUANTITIES, replicate_batch
from .model import Model, TestFunction, constant_family, cubic, drifted_family, power, sine_martingale
from .renewal import Exponential, JumpLaw, parse_law, sample_skeletons
from .weights import DERIVED_MERGED, PRINTED_MERGED, Normalization, Poisson, Renewal

log = logging.getLogger(__name__)

FAMILIES = ("constant", "sine_martingale", "drifted")
PAYOFFS = ("cubic", "power1", "power2", "power3")


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class ModelSpec:
    family: str = "sine_martingale"
    sigma_bar: float = 0.1
    omega: float = 0.1
    mu: float = 0.0
    c0: float = 0.0
    c1: float = 1.0
    c3: float = 1.0
    L: float = 0.0
    x0: float = 1.0
    T: float = 0.5
    payoff: str = "cubic"

    def build(self) -> tuple[Model, TestFunction]:
        if self.family == "sine_martingale":
            model = sine_martingale(self.sigma_bar, self.omega, self.c1, self.c3, self.L, self.T, self.x0)
        elif self.family == "constant":
            model = constant_family(self.sigma_bar, self.L, self.T, self.x0)
        elif self.family == "drifted":
            model = drifted_family(self.mu, self.sigma_bar, self.L, self.T, self.x0)
        else:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.payoff == "cubic":
            f = cubic(self.c0, self.c1, self.c3)
        elif self.payoff in ("power1", "power2", "power3"):
            f = power(int(self.payoff[-1]), self.L)
        else:
            raise ConfigError(f"unknown payoff {self.payoff!r}")
        return model, f


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec = ModelSpec()
    quantity: str = "value"
    sampler: str = "beta1:alpha=0.5,tau=5"
    samples: int = 100_000
    seed: int = 0
    workers: int = 1
    block_size: int = 4096
    z: float | None = None
    mixture: bool = True
    printed_merged: bool = False
    pilot_grid: tuple[str, ...] = ()
    pilot_samples: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.block_size < 1:
            raise ConfigError("block_size must be at least 1")
        if self.quantity not in QUANTITIES:
            raise ConfigError(f"unknown quantity {self.quantity!r}")
        if self.quantity.startswith("density") and self.z is None:
            raise ConfigError(f"quantity {self.quantity!r} needs z")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def law(self) -> JumpLaw:
        try:
            return parse_law(self.sampler)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class Accumulator:
    """Count, mean and centred sum of squares; merged with the pairwise update."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "Accumulator":
        values = np.asarray(values, float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(values.size, mean, float(np.sum((values - mean) ** 2)))

    def push(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.count == 0:
            return dataclasses.replace(self)
        if self.count == 0:
            return dataclasses.replace(other)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return Accumulator(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")


@dataclass
class EstimateReport:
    quantity: str
    sampler: str
    M: int
    seed: int
    mean: float
    sample_variance: float
    stderr: float
    ci_95_halfwidth: float
    mad: float
    runtime_seconds: float
    workers: int = 1
    pilot: dict = field(default_factory=dict)

    def same_numbers(self, other: "EstimateReport") -> bool:
        keys = ("quantity", "sampler", "M", "seed", "mean", "sample_variance", "stderr", "ci_95_halfwidth", "mad")
        return all(getattr(self, k) == getattr(other, k) for k in keys)


def normalization_for(law: JumpLaw) -> Normalization:
    """Exponential gaps use the Poisson weights; every other law the renewal weights."""
    return Poisson(law.lam) if isinstance(law, Exponential) else Renewal(law)


MAIN_STREAMS, PILOT_STREAMS = 0, 1


def block_stream(seed: int, block: int, family: int = MAIN_STREAMS) -> np.random.Generator:
    """Counter-based stream keyed by (seed, family, block); pilot runs use their own family."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(family, block))))


def run_block(config: RunConfig, block: int, size: int, family: int = MAIN_STREAMS) -> np.ndarray:
    """All replications of one block, in order."""
    model, f = config.model.build()
    law = config.law()
    norm = normalization_for(law)
    rng = block_stream(config.seed, block, family)
    sk = sample_skeletons(law, model.horizon, rng, size)
    out = np.empty(size)
    conv = PRINTED_MERGED if config.printed_merged else DERIVED_MERGED
    for rows, batch in sk.groups():
        out[rows] = replicate_batch(model, norm, config.quantity, batch, f=f, z=config.z,
                                    mixture=config.mixture, conv=conv)
    return out


def _run_block_args(args):
    return run_block(*args)


def simulate(config: RunConfig, family: int = MAIN_STREAMS) -> np.ndarray:
    """Raw replications, identical for any worker count."""
    sizes = [config.block_size] * (config.samples // config.block_size)
    if config.samples % config.block_size:
        sizes.append(config.samples % config.block_size)
    tasks = [(config, b, s, family) for b, s in enumerate(sizes)]
    if config.workers == 1 or len(tasks) == 1:
        parts = [_run_block_args(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_block_args, tasks))
    return np.concatenate(parts)


def summarize(values: np.ndarray, block_size: int) -> Accumulator:
    """Merge per-block statistics in block order."""
    acc = Accumulator()
    for start in range(0, len(values), block_size):
        acc = acc.merge(Accumulator.of(values[start:start + block_size]))
    return acc


def run(config: RunConfig) -> EstimateReport:
    model, _ = config.model.build()
    law = config.law()
    if not isinstance(law, Exponential) and law.tau <= model.horizon:
        raise ConfigError("Beta samplers need tau > T")
    pilot = {}
    if config.pilot_grid:
        best, pilot = pilot_tune(config, with_table=True)
        config = dataclasses.replace(config, sampler=best)
    start = time.perf_counter()
    values = simulate(config)
    acc = summarize(values, config.block_size)
    var = acc.variance if acc.count > 1 else 0.0
    stderr = math.sqrt(var / acc.count)
    mad = float(np.mean(np.abs(values - acc.mean)))
    elapsed = time.perf_counter() - start
    log.info("%s with %s: mean %.6g, variance %.6g, %d samples in %.2fs",
             config.quantity, config.sampler, acc.mean, var, acc.count, elapsed)
    return EstimateReport(config.quantity, config.sampler, acc.count, config.seed, acc.mean, var, stderr,
                          1.96 * stderr, mad, elapsed, config.workers, pilot)


def pilot_tune(config: RunConfig, with_table: bool = False):
    """The sampler in the pilot grid with the smallest pilot variance; first one wins ties."""
    if not config.pilot_grid:
        raise ConfigError("pilot grid is empty")
    if config.pilot_samples <= 0:
        warnings.warn("pilot_samples is 0; using the first sampler of the grid", stacklevel=2)
        return (config.pilot_grid[0], {}) if with_table else config.pilot_grid[0]
    table = {}
    for spec in config.pilot_grid:
        trial = dataclasses.replace(config, sampler=spec, samples=config.pilot_samples, pilot_grid=())
        trial.law()
        values = simulate(trial, PILOT_STREAMS)
        table[spec] = float(np.var(values, ddof=1)) if values.size > 1 else float("inf")
    best = min(config.pilot_grid, key=lambda s: (not math.isfinite(table[s]), table[s]))
    return (best, table) if with_table else best
