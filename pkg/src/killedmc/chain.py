"""The reflection chain, its merged boundary transition and flow derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model
from .renewal import PathBatch


@dataclass
class Step:
    """One transition x_prev -> x_next over (t_prev, t_next]; arrays broadcast together."""

    x_prev: np.ndarray
    x_next: np.ndarray
    rho: np.ndarray
    t_prev: np.ndarray
    t_next: np.ndarray
    length: np.ndarray | None = None  # exact interval length when the times have rounded together

    @property
    def dt(self) -> np.ndarray:
        if self.length is not None:
            return np.asarray(self.length, float)
        return np.asarray(self.t_next, float) - np.asarray(self.t_prev, float)


@dataclass
class MergedStep:
    x_prev: np.ndarray
    x_merged: np.ndarray
    z_sum: np.ndarray
    t_prev: np.ndarray
    t_end: np.ndarray
    mu: np.ndarray
    mean: np.ndarray
    length: np.ndarray | None = None

    @property
    def duration(self) -> np.ndarray:
        if self.length is not None:
            return np.asarray(self.length, float)
        return np.asarray(self.t_end, float) - np.asarray(self.t_prev, float)


@dataclass
class ChainState:
    states: np.ndarray
    alive: np.ndarray


def reflected_mean(x_prev, rho, barrier: float):
    return rho * x_prev + (1.0 - rho) * (2.0 * barrier - x_prev)


def transition(model: Model, x_prev, rho, increment):
    """x_next = rho x + (1 - rho)(2L - x) + sigma(x) * increment."""
    return reflected_mean(x_prev, rho, model.barrier) + model.sigma_at(x_prev) * increment


def increment_of(model: Model, step: Step):
    """Recover the Brownian increment from the two endpoints of a step."""
    return (step.x_next - reflected_mean(step.x_prev, step.rho, model.barrier)) / model.sigma_at(step.x_prev)


def propagate(model: Model, batch: PathBatch, start=None, first: int = 0) -> ChainState:
    """Run the chain over all intervals of the batch.

    ``start`` and ``first`` restart the recursion from state index ``first``
    with the given values; later states reuse the sampled increments and signs.
    """
    n1 = batch.n_jumps + 1
    inc = batch.increments
    states = np.full((batch.size, n1 + 1), np.nan)
    states[:, first] = model.start if start is None else start
    for i in range(first, n1):
        states[:, i + 1] = transition(model, states[:, i], batch.rhos[:, i], inc[:, i])
    alive = states >= model.barrier
    return ChainState(states, alive)


def merged_transition(model: Model, x_prev, z_sum, t_prev=0.0, t_end=1.0, length=None) -> MergedStep:
    """The merged boundary transition L(1 - mu) + x mu + sigma(L) z with mu = -sigma(L)/sigma(x)."""
    x_prev = np.asarray(x_prev, dtype=float)
    sig_L = float(model.sigma_at(model.barrier))
    mu = -sig_L / model.sigma_at(x_prev)
    mean = model.barrier * (1.0 - mu) + x_prev * mu
    return MergedStep(x_prev, mean + sig_L * np.asarray(z_sum, float), np.asarray(z_sum, float),
                      np.asarray(t_prev, float), np.asarray(t_end, float), mu, mean, length)


def flow_derivatives(model: Model, step: Step) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of x_next in x_prev with the increment held fixed."""
    z = increment_of(model, step)
    ds = model.stack("sigma", step.x_prev, 2)
    return (2.0 * np.asarray(step.rho, float) - 1.0) + ds[1] * z, ds[2] * z
