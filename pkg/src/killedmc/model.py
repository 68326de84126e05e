"""Diffusion coefficients, barrier, horizon and test functions."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .calculus import Jet, sin

# coefficient callables accept floats, arrays or jets
Coefficient = Callable


@dataclass(frozen=True)
class Model:
    """dX = b(X) dt + sigma(X) dW started at ``start``, killed below ``barrier``."""

    drift: Coefficient
    sigma: Coefficient
    barrier: float
    horizon: float
    start: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.start < self.barrier:
            raise ValueError("start must not lie below the barrier")

    def with_start(self, x: float) -> "Model":
        return dataclasses.replace(self, start=float(x))

    def stack(self, which: str, x, order: int) -> np.ndarray:
        """Derivatives 0..order of b, sigma or a = sigma^2 at x, stacked on axis 0."""
        return coefficient_jet(self, which, x, order).derivatives()

    def sigma_at(self, x) -> np.ndarray:
        return np.asarray(self.sigma(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x))

    def drift_at(self, x) -> np.ndarray:
        return np.asarray(self.drift(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x))


def coefficient_jet(model: Model, which: str, x, order: int) -> Jet:
    if not 0 <= order <= 4:
        raise ValueError("coefficient jets are available up to order 4")
    seed = Jet.variable(np.asarray(x, dtype=float), order)
    if which == "b":
        out = model.drift(seed)
    elif which == "sigma":
        out = model.sigma(seed)
    elif which == "a":
        s = model.sigma(seed)
        out = s * s
    else:
        raise ValueError(f"unknown coefficient {which!r}")
    if not isinstance(out, Jet):
        out = Jet.constant(np.asarray(out, float) * np.ones(seed.shape), order)
    return out


@dataclass(frozen=True)
class TestFunction:
    value: Callable
    derivative: Callable
    vanishes_at_L: bool = True
    name: str = "custom"

    def shifted(self, barrier: float) -> "TestFunction":
        """Subtract the value at the barrier so the function vanishes there."""
        if self.vanishes_at_L:
            return self
        return TestFunction(_Shifted(self.value, float(self.value(barrier))), self.derivative,
                            True, self.name)


@dataclass(frozen=True)
class _Shifted:
    fn: Callable
    base: float

    def __call__(self, x):
        return self.fn(x) - self.base


@dataclass(frozen=True)
class _Const:
    level: float

    def __call__(self, x):
        return 0.0 * x + self.level


@dataclass(frozen=True)
class _SineSigma:
    sigma_bar: float
    omega: float

    def __call__(self, x):
        return (sin(self.omega * x) + 2.0) * self.sigma_bar


@dataclass(frozen=True)
class _MartingaleDrift:
    sigma: _SineSigma
    shift: float

    def __call__(self, x):
        s = self.sigma(x)
        return -(x * s * s) / (x * x + self.shift)


@dataclass(frozen=True)
class _Poly:
    coeffs: tuple[float, ...]  # coefficients of 1, x, x^2, ... in the variable x - origin
    origin: float = 0.0

    def __call__(self, x):
        u = x - self.origin
        out = 0.0 * u + self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            out = out * u + c
        return out

    def derivative(self) -> "_Poly":
        d = tuple(k * c for k, c in enumerate(self.coeffs))[1:] or (0.0,)
        return _Poly(d, self.origin)


def constant_family(sigma_bar: float, barrier: float = 0.0, horizon: float = 1.0,
                    start: float = 1.0) -> Model:
    return Model(drift=_Const(0.0), sigma=_Const(sigma_bar), barrier=barrier, horizon=horizon,
                 start=start, name="constant", params={"sigma_bar": sigma_bar})


def drifted_family(mu: float, sigma_bar: float, barrier: float = 0.0, horizon: float = 1.0,
                   start: float = 1.0) -> Model:
    """Brownian motion with constant drift; its killed density is known in closed form."""
    return Model(drift=_Const(mu), sigma=_Const(sigma_bar), barrier=barrier, horizon=horizon,
                 start=start, name="drifted", params={"mu": mu, "sigma_bar": sigma_bar})


def sine_martingale(sigma_bar: float, omega: float, c1: float = 1.0, c3: float = 1.0,
                    barrier: float = 0.0, horizon: float = 0.5, start: float = 1.0) -> Model:
    """sigma = sigma_bar (sin(omega x) + 2) and the drift that makes c3 x^3 + c1 x + c0 a martingale.

    The drift is b(x) = -x sigma(x)^2 / (x^2 + c1 / (3 c3)); with sigma to the
    first power the generator does not annihilate the cubic.
    """
    sigma = _SineSigma(sigma_bar, omega)
    return Model(drift=_MartingaleDrift(sigma, c1 / (3.0 * c3)), sigma=sigma, barrier=barrier,
                 horizon=horizon, start=start, name="sine_martingale",
                 params={"sigma_bar": sigma_bar, "omega": omega, "c1": c1, "c3": c3})


def polynomial(coeffs, origin: float = 0.0, name: str = "poly") -> TestFunction:
    """Polynomial in (x - origin); vanishes at the barrier when origin is the barrier and coeffs[0] = 0."""
    p = _Poly(tuple(float(c) for c in coeffs), origin)
    return TestFunction(p, p.derivative(), vanishes_at_L=False, name=name)


def cubic(c0: float = 0.0, c1: float = 1.0, c3: float = 1.0) -> TestFunction:
    return polynomial((c0, c1, 0.0, c3), name="cubic")


def power(p: int, barrier: float = 0.0) -> TestFunction:
    """(x - L)^p, which vanishes at the barrier for p >= 1."""
    f = polynomial((0.0,) * p + (1.0,), origin=barrier, name=f"power{p}")
    return dataclasses.replace(f, vanishes_at_L=True)


@dataclass
class ValidationReport:
    min_a: float
    max_a: float
    accepted: bool
    martingale_residual: float | None = None
    messages: list[str] = field(default_factory=list)


def generator_residual(model: Model, f_stack: Callable, x) -> np.ndarray:
    """b f' + a f''/2 at x, where f_stack(x) returns the derivatives (f, f', f'')."""
    x = np.asarray(x, dtype=float)
    d = f_stack(x)
    return model.drift_at(x) * d[1] + 0.5 * model.sigma_at(x) ** 2 * d[2]


def validate_model(model: Model, grid, bounds: tuple[float, float] | None = None) -> ValidationReport:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty probe grid")
    sig = model.sigma_at(grid)
    a = sig ** 2
    report = ValidationReport(float(a.min()), float(a.max()), True)
    if not np.all(np.isfinite(sig)) or np.any(sig <= 0):
        report.accepted = False
        report.messages.append("ellipticity violated: sigma must be positive on the grid")
    if bounds is not None and (a.min() < bounds[0] or a.max() > bounds[1]):
        report.accepted = False
        report.messages.append(f"sigma^2 leaves the declared band {bounds}")
    if model.name == "sine_martingale":
        p = model.params
        f_stack = lambda x: np.stack([p["c3"] * x ** 3 + p["c1"] * x, 3 * p["c3"] * x ** 2 + p["c1"], 6 * p["c3"] * x])
        report.martingale_residual = float(np.max(np.abs(generator_residual(model, f_stack, grid))))
        report.messages.append("test function has polynomial growth; boundedness is assumed only locally")
    return report
