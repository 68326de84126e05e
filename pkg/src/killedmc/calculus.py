"""Truncated Taylor jets and the discrete integration-by-parts operators.

Every weight of the estimators is a smooth function of one chain transition
``(x_prev, x_next)``.  Instead of expanding the Skorokhod-type operators by
hand, we carry truncated Taylor expansions through the arithmetic, so every
derivative that the operators need is exact up to rounding.

Coefficients are stored normalised, ``c[m] = d^m f / m!`` for a multi-index
``m``, with monomials sorted by total degree.  Truncating a jet to a lower
order is then a prefix slice.  The trailing axes of ``c`` are a batch shape,
so one jet holds one expansion per Monte Carlo replication.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import erfcx

MAX_ORDER = 4


def _monomials(nvars: int, order: int) -> list[tuple[int, ...]]:
    if nvars == 1:
        return [(k,) for k in range(order + 1)]
    return [(d - q, q) for d in range(order + 1) for q in range(d + 1)]


@lru_cache(maxsize=None)
def _tables(nvars: int, order: int):
    monos = _monomials(nvars, order)
    index = {m: i for i, m in enumerate(monos)}
    left, right, target = [], [], []
    for i, a in enumerate(monos):
        for j, b in enumerate(monos):
            c = tuple(x + y for x, y in zip(a, b))
            if sum(c) <= order:
                left.append(i)
                right.append(j)
                target.append(index[c])
    scatter = np.zeros((len(monos), len(left)))
    scatter[target, np.arange(len(left))] = 1.0
    derivs = []
    for var in range(nvars):
        src, fac = [], []
        for m in _monomials(nvars, order - 1) if order > 0 else []:
            up = list(m)
            up[var] += 1
            src.append(index[tuple(up)])
            fac.append(up[var])
        derivs.append((np.array(src, dtype=int), np.array(fac, dtype=float)))
    return monos, index, np.array(left), np.array(right), scatter, derivs


class _Taylor:
    """Truncated multivariate Taylor expansion with a batch shape."""

    nvars = 1
    __slots__ = ("c", "order")
    __array_ufunc__ = None  # make numpy defer to the jet operators

    def __init__(self, c: np.ndarray, order: int):
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"jet order must lie in 0..{MAX_ORDER}, got {order}")
        self.c = c
        self.order = order

    # construction -----------------------------------------------------
    @classmethod
    def nmono(cls, order: int) -> int:
        return len(_monomials(cls.nvars, order))

    @classmethod
    def constant(cls, value, order: int):
        value = np.asarray(value, dtype=float)
        c = np.zeros((cls.nmono(order),) + value.shape)
        c[0] = value
        return cls(c, order)

    @classmethod
    def variable(cls, value, order: int, var: int = 0):
        jet = cls.constant(value, order)
        if order >= 1:
            jet.c[1 + var] = 1.0
        return jet

    # structure --------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[1:]

    def truncate(self, order: int):
        if order >= self.order:
            return self
        return type(self)(self.c[: self.nmono(order)], order)

    def partial(self, *multi: int) -> np.ndarray:
        """The actual partial derivative of the given multi-index at the base point."""
        if len(multi) != self.nvars:
            raise ValueError("multi-index length does not match the number of variables")
        if sum(multi) > self.order:
            raise ValueError("derivative order exceeds jet order")
        idx = _tables(self.nvars, self.order)[1][tuple(multi)]
        return self.c[idx] * math.prod(math.factorial(k) for k in multi)

    def deriv(self, var: int = 0):
        """Differentiate in one variable; the result is valid to one order less."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        src, fac = _tables(self.nvars, self.order)[5][var]
        return type(self)(self.c[src] * fac.reshape((-1,) + (1,) * (self.c.ndim - 1)), self.order - 1)

    def compose(self, stack: np.ndarray):
        """Return phi(self) from the derivatives ``stack[k] = phi^(k)(self.value)``."""
        stack = np.asarray(stack, dtype=float)
        if stack.shape[0] < self.order + 1:
            raise ValueError("derivative stack too short for this jet order")
        h = self - self.value
        out = type(self).constant(stack[0] * np.ones(self.shape), self.order)
        power = h
        for k in range(1, self.order + 1):
            out = out + power * (stack[k] / math.factorial(k))
            if k < self.order:
                power = power * h
        return out

    # arithmetic -------------------------------------------------------
    def _pair(self, other):
        if isinstance(other, _Taylor):
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, None

    def __add__(self, other):
        a, b = self._pair(other)
        if b is None:
            c = a.c.copy()
            c[0] = c[0] + other
            return type(self)(c, a.order)
        return type(self)(a.c + b.c, a.order)

    __radd__ = __add__

    def __neg__(self):
        return type(self)(-self.c, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._pair(other)
        if b is None:
            return type(self)(a.c * np.asarray(other, dtype=float), a.order)
        _, _, left, right, scatter, _ = _tables(self.nvars, a.order)
        prod = a.c[left] * b.c[right]
        flat = scatter @ prod.reshape(len(left), -1)
        return type(self)(flat.reshape((scatter.shape[0],) + prod.shape[1:]), a.order)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        stack = np.stack([(-1.0) ** k * math.factorial(k) / v ** (k + 1) for k in range(self.order + 1)])
        return self.compose(stack)

    def __truediv__(self, other):
        if isinstance(other, _Taylor):
            return self * other.reciprocal()
        return type(self)(self.c / np.asarray(other, dtype=float), self.order)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = type(self).constant(np.ones(self.shape), self.order)
        for _ in range(k):
            out = out * self
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}(order={self.order}, c={self.c!r})"


class Jet(_Taylor):
    """Univariate jet: value and derivatives up to ``order`` in one variable."""

    nvars = 1
    __slots__ = ()

    @classmethod
    def from_derivatives(cls, stack) -> "Jet":
        stack = np.asarray(stack, dtype=float)
        order = stack.shape[0] - 1
        fac = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
        return cls(stack / fac.reshape((-1,) + (1,) * (stack.ndim - 1)), order)

    def derivatives(self) -> np.ndarray:
        fac = np.array([math.factorial(k) for k in range(self.order + 1)], dtype=float)
        return self.c * fac.reshape((-1,) + (1,) * (self.c.ndim - 1))


class BiJet(_Taylor):
    """Jet in the two variables ``(x_prev, x_next)`` of one chain transition."""

    nvars = 2
    __slots__ = ()

    @classmethod
    def variables(cls, x_prev, x_next, order: int) -> tuple["BiJet", "BiJet"]:
        x_prev, x_next = np.broadcast_arrays(np.asarray(x_prev, float), np.asarray(x_next, float))
        return cls.variable(x_prev, order, 0), cls.variable(x_next, order, 1)


# elementary functions usable on floats, arrays and jets ---------------------

def _elementary(numpy_fn, stack_fn):
    def fn(x):
        if isinstance(x, _Taylor):
            return x.compose(stack_fn(x.value, x.order))
        return numpy_fn(x)

    fn.__name__ = numpy_fn.__name__
    return fn


sin = _elementary(np.sin, lambda v, n: np.stack([np.sin(v + k * np.pi / 2) for k in range(n + 1)]))
cos = _elementary(np.cos, lambda v, n: np.stack([np.cos(v + k * np.pi / 2) for k in range(n + 1)]))
exp = _elementary(np.exp, lambda v, n: np.stack([np.exp(v)] * (n + 1)))


# Gaussian helpers -----------------------------------------------------------

def gauss(t, x):
    """Centred Gaussian density with variance ``t`` evaluated at ``x``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-np.square(x) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


def integral_of_one(ell: int, variance, scaled_increment):
    """Closed form of the iterated operator applied to the constant 1.

    ``variance`` is a_prev * dt and ``scaled_increment`` is sigma_prev * z,
    so these are the signed Hermite polynomials of the spatial increment.
    """
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise ValueError("variance must be positive")
    h1 = scaled_increment / variance
    if ell == 1:
        return h1
    if ell == 2:
        return h1 * h1 - 1.0 / variance
    raise ValueError("only orders 1 and 2 are used")


class StepOperators:
    """Operators of one reflection-chain transition, acting on BiJets.

    ``D`` differentiates in ``x_next`` at fixed ``x_prev``; ``total``
    differentiates in ``x_prev`` with the Brownian increment held fixed, so
    ``x_next`` moves with the flow derivative.
    """

    def __init__(self, sigma_stack, x_prev, x_next, rho, dt, barrier: float, order: int = 3):
        dt = np.asarray(dt, dtype=float)
        if np.any(dt <= 0):
            raise ValueError("transition length must be positive")
        self.order = order
        self.dt = dt
        self.U, self.V = BiJet.variables(x_prev, x_next, order)
        self.s = 2.0 * np.asarray(rho, dtype=float) - 1.0
        self.sigma = self.U.compose(sigma_stack[: order + 1])
        self.dsigma = self.U.compose(sigma_stack[1: order + 2])
        mean = self.s * self.U + 2.0 * barrier * (1.0 - np.asarray(rho, dtype=float))
        self.z = (self.V - mean) / self.sigma
        self.i1 = self.z / (self.sigma * dt)
        self.flow = self.dsigma * self.z + self.s

    def D(self, h: BiJet) -> BiJet:
        return h.deriv(1)

    def I(self, h, power: int = 1):
        if not isinstance(h, _Taylor):
            h = BiJet.constant(np.broadcast_to(np.asarray(h, float), self.U.shape), self.order)
        for _ in range(power):
            h = h * self.i1 - h.deriv(1)
        return h

    def total(self, h: BiJet) -> BiJet:
        return h.deriv(0) + self.flow * h.deriv(1)


class MergedOperators:
    """Operators of the merged boundary transition, acting on univariate jets of x_merged."""

    def __init__(self, sigma_L: float, x_merged, mean, duration, order: int = 2):
        duration = np.asarray(duration, dtype=float)
        if np.any(duration <= 0):
            raise ValueError("merged duration must be positive")
        self.order = order
        self.Y = Jet.variable(np.asarray(x_merged, float), order)
        self.variance = sigma_L ** 2 * duration
        self.spatial = self.Y - mean
        self.i1 = self.spatial / self.variance

    def I(self, h, power: int = 1):
        if not isinstance(h, _Taylor):
            h = Jet.constant(np.broadcast_to(np.asarray(h, float), self.Y.shape), self.order)
        for _ in range(power):
            h = h * self.i1 - h.deriv(0)
        return h


def mills_ratio(t, w):
    """Gaussian tail mass beyond |w| divided by the density at w, variance t."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("variance must be positive")
    return np.sqrt(np.pi * t / 2.0) * erfcx(np.abs(w) / np.sqrt(2.0 * t))


def mills_ratio_stack(t, w, order: int) -> np.ndarray:
    """Derivatives in w of the Mills ratio, from R' = -sgn(w) + (w/t) R.

    At w = 0 the ratio has a kink; the symmetric derivative 0 is returned.
    """
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=float)
    r = [mills_ratio(t, w)]
    if order >= 1:
        r.append(-np.sign(w) + w / t * r[0])
    for k in range(2, order + 1):
        r.append((k - 1) * r[k - 2] / t + w / t * r[k - 1])
    return np.stack(r)


def mills_ratio_jet(t, w, order: int = 1) -> Jet:
    if order > 3:
        raise ValueError("order must be at most 3")
    return Jet.from_derivatives(mills_ratio_stack(t, w, order))
