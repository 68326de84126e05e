"""Independent numerical ground truth: closed forms and quadrature identity checks.

The checks only share the operator primitives of ``calculus`` with the code
under test; integrals are evaluated by Gauss-Hermite, Gauss-Legendre or
adaptive quadrature written against the Gaussian transition densities.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import integrate

from .calculus import BiJet, StepOperators, gauss
from .chain import Step, merged_transition, reflected_mean, transition
from .model import Model
from .weights import (DERIVED_MERGED, MergedConvention, Normalization, Poisson, merged_weights,
                      step_weights, theta_partial_back)

RHO = (0.0, 1.0)
_ATTR = {"bar": "theta_bar", "e_back": "theta_e_back", "e_fwd": "theta_e_fwd"}


# killed Brownian motion ----------------------------------------------------

def killed_bm_density(sigma: float, L: float, x, T: float, z):
    a = sigma ** 2
    return gauss(a * T, z - x) - gauss(a * T, z + x - 2 * L)


def _dgauss(t, u):
    return -u / t * gauss(t, u)


def killed_bm_dz(sigma: float, L: float, x, T: float, z):
    a = sigma ** 2
    return _dgauss(a * T, z - x) - _dgauss(a * T, z + x - 2 * L)


def killed_bm_dx(sigma: float, L: float, x, T: float, z):
    a = sigma ** 2
    return -_dgauss(a * T, z - x) - _dgauss(a * T, z + x - 2 * L)


def killed_bm_value(f: Callable, sigma: float, L: float, x: float, T: float) -> float:
    val, err = integrate.quad(lambda z: f(z) * killed_bm_density(sigma, L, x, T, z), L, np.inf,
                              epsabs=1e-12, epsrel=1e-11, limit=200)
    if err > 1e-8:
        raise RuntimeError("quadrature did not converge")
    return val


def killed_bm_value_dx(f: Callable, sigma: float, L: float, x: float, T: float) -> float:
    val, _ = integrate.quad(lambda z: f(z) * killed_bm_dx(sigma, L, x, T, z), L, np.inf,
                            epsabs=1e-12, epsrel=1e-11, limit=200)
    return val


def killed_bm_derivative_value(fprime: Callable, sigma: float, L: float, x: float, T: float) -> float:
    """E[f'(X_T) 1{tau > T}] for Brownian motion killed at L."""
    return killed_bm_value(fprime, sigma, L, x, T)


def killed_drift_density(mu: float, sigma: float, L: float, x, T: float, z):
    """Density at z of Brownian motion with drift mu killed at L."""
    a = sigma ** 2
    image = np.exp(-2.0 * mu * (x - L) / a)
    return gauss(a * T, z - x - mu * T) - image * gauss(a * T, z + x - 2 * L - mu * T)


def killed_drift_moment(g: Callable, mu: float, sigma: float, L: float, x: float, T: float) -> float:
    val, _ = integrate.quad(lambda z: g(z) * killed_drift_density(mu, sigma, L, x, T, z), L, np.inf,
                            epsabs=1e-12, epsrel=1e-11, limit=200)
    return val


# quadrature rules -------------------------------------------------------------

def hermite_rule(nodes: int = 64):
    """Nodes and weights for expectations under a standard normal."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return x, w / math.sqrt(2 * math.pi)


def legendre_rule(lo, hi, nodes: int = 64, panels: int = 4):
    """Composite Gauss-Legendre nodes and weights on [lo, hi]; lo, hi may be arrays."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo = np.asarray(lo, float)[..., None]
    hi = np.asarray(hi, float)[..., None]
    edges = np.linspace(0.0, 1.0, panels + 1)
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        u = a + (b - a) * (x + 1) / 2
        pts.append(lo + (hi - lo) * u)
        wts.append((hi - lo) * (b - a) / 2 * w * np.ones_like(lo))
    return np.concatenate(pts, axis=-1), np.concatenate(wts, axis=-1)


def _half_line(L: float, mean, sd, nodes: int = 64, panels: int = 6):
    """Rule on [L, inf) for a Gaussian factor centred at ``mean`` with standard deviation ``sd``."""
    lo = np.maximum(L, mean - 12 * sd)
    hi = np.maximum(lo + sd, mean + 12 * sd)
    return legendre_rule(lo, hi, nodes, panels)


# operator identities ------------------------------------------------------------

def check_duality(sigma: float, dt: float, x_prev: float, rho: float, L: float,
                  f_coeffs, h_fn: Callable, ell: int, nodes: int = 64) -> float:
    """E[D^ell f(X') H] - E[f(X') I^ell(H)] for one transition with constant sigma.

    ``f_coeffs`` are power-series coefficients of f in x_next; ``h_fn(U, V)``
    builds H from the BiJet variables.
    """
    xi, w = hermite_rule(nodes)
    m = reflected_mean(x_prev, rho, L)
    y = m + sigma * math.sqrt(dt) * xi
    f = np.polynomial.Polynomial(f_coeffs)
    stack = np.zeros((6, len(y)))
    stack[0] = sigma
    ops = StepOperators(stack, np.full_like(y, x_prev), y, rho, np.full_like(y, dt), L, 3)
    h = h_fn(ops.U, ops.V)
    if not isinstance(h, BiJet):
        h = BiJet.constant(np.full_like(y, h), 3)
    lhs = np.sum(w * f.deriv(ell)(y) * h.value)
    rhs = np.sum(w * f(y) * ops.I(h, ell).value)
    return float(lhs - rhs)


def chain_rule_residual(model: Model, h_fn: Callable, x_prev, x_next, rho, dt) -> np.ndarray:
    """|total(I(h)) - I(total(h)) + (sigma'/sigma) I(h)| evaluated through BiJets."""
    x_prev = np.atleast_1d(np.asarray(x_prev, float))
    x_next = np.atleast_1d(np.asarray(x_next, float))
    ops = StepOperators(model.stack("sigma", x_prev, 4), x_prev, x_next, rho, dt, model.barrier, 3)
    h = h_fn(ops.U, ops.V)
    lhs = ops.total(ops.I(h))
    rhs = ops.I(ops.total(h)) - ops.dsigma / ops.sigma * ops.I(h)
    return np.abs(lhs.value - rhs.value)


def extraction_residual(ops, h1, h2, ell: int) -> np.ndarray:
    """I^ell(h1 h2) against sum_j (-1)^j C(ell, j) I^(ell-j)(h1) D^j h2."""
    lhs = ops.I(h1 * h2, ell)
    rhs = 0.0
    for j in range(ell + 1):
        d = h2
        for _ in range(j):
            d = d.deriv(1) if isinstance(d, BiJet) else d.deriv(0)
        term = ops.I(h1, ell - j) if ell - j else h1
        rhs = term * d * ((-1) ** j * math.comb(ell, j)) + rhs
    return np.abs(lhs.value - rhs.value)


# one-step transfer -----------------------------------------------------------------

def check_transfer(model: Model, x: float, dt: float, f: Callable, fprime: Callable,
                   norm: Normalization = Poisson(1.0), is_last: bool = False,
                   h: float = 1e-5, direction: str = "backward") -> float:
    """Residual of the one-step transfer of a derivative, averaged over the sign.

    backward: E[f'(X') 1 theta_bar] = d/dx E[f 1 theta_e] + E[f 1 theta_c] + E[f delta_L theta_partial]
    forward:  d/dx E[f 1 theta_bar] = E[f' 1 theta_e] + E[f 1 theta_c]   (boundary part averages out)
    """
    L = model.barrier
    t0, t1 = (model.horizon - dt, model.horizon) if is_last else (0.3, 0.3 + dt)

    def expect(x0, integrand, rho):
        sd = model.sigma_at(x0) * math.sqrt(dt)
        m = reflected_mean(x0, rho, L)
        y, w = _half_line(L, m, sd)
        step = Step(np.full_like(y, x0), y, rho, t0, t1)
        return float(np.sum(w * integrand(step, y) * gauss(sd ** 2, y - m)))

    def weights(step, key):
        return getattr(step_weights(norm, model, step, is_last, frozenset({key})), _ATTR[key])

    total = 0.0
    for rho in RHO:
        if direction == "backward":
            lhs = expect(x, lambda st, y: fprime(y) * weights(st, "bar"), rho)
            e = lambda x0: expect(x0, lambda st, y: f(y) * weights(st, "e_back"), rho)
            rhs = (e(x + h) - e(x - h)) / (2 * h)
            rhs += expect(x, lambda st, y: f(y) * step_weights(norm, model, st, is_last,
                                                               frozenset({"c_back"})).theta_c_back, rho)
            if not is_last:
                st = Step(np.array([x]), np.array([L]), rho, t0, t1)
                sd = model.sigma_at(x) * math.sqrt(dt)
                rhs += f(L) * theta_partial_back(norm, model, st, False)[0] * gauss(sd ** 2, L - reflected_mean(x, rho, L))
        else:
            b = lambda x0: expect(x0, lambda st, y: f(y) * weights(st, "bar"), rho)
            lhs = (b(x + h) - b(x - h)) / (2 * h)
            rhs = expect(x, lambda st, y: fprime(y) * weights(st, "e_fwd"), rho)
            rhs += expect(x, lambda st, y: f(y) * step_weights(norm, model, st, is_last,
                                                               frozenset({"c_fwd"})).theta_c_fwd, rho)
        total += 0.5 * (lhs - rhs)
    return total


# boundary merging ---------------------------------------------------------------

def merging_sides(model: Model, x_prev: float, duration: float, f: Callable, which: str,
                  conv: MergedConvention = DERIVED_MERGED, nodes: int = 48) -> tuple[float, float]:
    """Both sides of a boundary merging identity, with unit intensity.

    LHS integrates the intermediate time over (0, duration): the chain first
    hits L (density of the first transition at L, boundary weight there), then
    runs from L to y with the transfer weight.  RHS integrates the merged
    weight against the merged transition density.  ``which`` is one of star,
    circledast, last_star, last_circledast.
    """
    if which not in {"star", "circledast", "last_star", "last_circledast"}:
        raise ValueError(which)
    L = model.barrier
    norm = Poisson(1.0)
    is_last = which.startswith("last")
    timed = which.endswith("circledast")
    sig_L = float(model.sigma_at(L))
    a_x = float(model.sigma_at(x_prev)) ** 2

    # split (0, duration) at the midpoint and use square-root substitutions at both ends
    v, wv = legendre_rule(0.0, math.sqrt(duration / 2), nodes, 2)
    s_lo, w_lo = v ** 2, 2 * v * wv
    s_hi, w_hi = duration - v ** 2, 2 * v * wv
    s = np.concatenate([s_lo, s_hi])
    ws = np.concatenate([w_lo, w_hi])

    lhs = 0.0
    for s_k, w_k in zip(s, ws):
        r = duration - s_k
        # first transition lands on L: density and reduced boundary weight, averaged over the sign
        first = 0.0
        for rho in RHO:
            st = Step(np.array([x_prev]), np.array([L]), rho, 0.0, s_k)
            dens = gauss(a_x * s_k, L - reflected_mean(x_prev, rho, L))
            first += 0.5 * dens * theta_partial_back(norm, model, st, False)[0]
        if timed:
            first *= s_k
        y, wy = _half_line(L, L, sig_L * math.sqrt(r))
        inner = 0.0
        for rho in RHO:
            st = Step(np.full_like(y, L), y, rho, s_k, duration)
            e = step_weights(norm, model, st, is_last, frozenset({"e_back"})).theta_e_back
            inner += 0.5 * np.sum(wy * f(y) * e * gauss(sig_L ** 2 * r, y - L))
        lhs += w_k * first * inner
    lhs /= duration

    ms = merged_transition(model, x_prev, 0.0, 0.0, duration)
    y, wy = _half_line(L, float(ms.mean), sig_L * math.sqrt(duration))
    mstep = merged_transition(model, np.full_like(y, x_prev), (y - ms.mean) / sig_L, 0.0, duration)
    star, circ = merged_weights(norm, model, mstep, is_last, conv)
    weight = circ if timed else star
    rhs = np.sum(wy * f(y) * weight * gauss(sig_L ** 2 * duration, y - ms.mean)) / duration
    return float(lhs), float(rhs)


def check_merging(model: Model, x_prev: float, duration: float, f: Callable, which: str,
                  conv: MergedConvention = DERIVED_MERGED) -> float:
    lhs, rhs = merging_sides(model, x_prev, duration, f, which, conv)
    return lhs - rhs


# Gaussian time convolutions -------------------------------------------------------

def _dgauss_y(t, y, ell: int):
    """ell-th derivative in y of the centred Gaussian density with variance t."""
    u = y / np.sqrt(t)
    he = np.polynomial.hermite_e.HermiteE.basis(ell)(u)
    return (-1) ** ell * he * gauss(t, y) / t ** (ell / 2)


def _tail_y(t, y, ell: int):
    """ell-th derivative in y (y > 0) of the Gaussian tail mass beyond y."""
    if ell == 0:
        from scipy.special import erfc
        return 0.5 * erfc(y / np.sqrt(2 * t))
    return -_dgauss_y(t, y, ell - 1)


def gaussian_convolution_sides(alpha, beta, x, y, t, ell: int, which: str) -> tuple[float, float]:
    """Time convolution of a first-passage-type kernel with a Gaussian derivative.

    ``plain``: int_0^t d_x g(a^2 s, x) d_y^l g(b^2 (t-s), y) ds = -a^-2 d_y^l g(b^2 t, y + b x / a)
    ``timed``: the same with an extra factor s on the left, giving the tail mass on the right.
    """
    timed = which == "timed"

    def integrand(s):
        k = _dgauss(alpha ** 2 * s, x) * _dgauss_y(beta ** 2 * (t - s), y, ell)
        return s * k if timed else k

    lhs, _ = integrate.quad(integrand, 0.0, t, epsabs=1e-13, epsrel=1e-11, limit=400)
    shifted = y + beta * x / alpha
    if timed:
        rhs = -x / (alpha ** 3 * beta) * _tail_y(beta ** 2 * t, shifted, ell)
    else:
        rhs = -_dgauss_y(beta ** 2 * t, shifted, ell) / alpha ** 2
    return float(lhs), float(rhs)


def check_gaussian_convolution(alpha, beta, x, y, t, ell: int, which: str) -> float:
    lhs, rhs = gaussian_convolution_sides(alpha, beta, x, y, t, ell, which)
    return lhs - rhs


# parity reduction at the boundary --------------------------------------------------

def _boundary_hermite(sigma: float, L: float, x_prev: float, dt: float, rho: float, k: int) -> float:
    stack = np.zeros((6, 1))
    stack[0] = sigma
    ops = StepOperators(stack, np.array([x_prev]), np.array([L]), rho, np.array([dt]), L, 3)
    return float(ops.I(1.0, k).value[0]) if k else 1.0


def reduction_sides(sigma: float, L: float, x_prev: float, dt: float, ell: int, k: int,
                    c_coeffs=(1.0,)) -> tuple[float, float]:
    """Boundary expectation of (2rho - 1)^ell I^k(c) and its parity-reduced expansion.

    The chain is conditioned to land on L, so the expectation is the two-point
    average over rho weighted by the density of the landing point.  The reduced
    form keeps only the terms (-1)^j C(k, j) c^(j)(L) (2rho - 1)^(k-j) I^(k-j)(1)
    with ell + k - j even.  ``c_coeffs`` are power-series coefficients in y.
    """
    dens = gauss(sigma ** 2 * dt, x_prev - L)
    c = np.polynomial.Polynomial(c_coeffs)
    stack = np.zeros((6, 1))
    stack[0] = sigma
    lhs = 0.0
    for rho in RHO:
        ops = StepOperators(stack, np.array([x_prev]), np.array([L]), rho, np.array([dt]), L, 3)
        cj = ops.V.compose(np.array([[c.deriv(j)(L)] for j in range(4)]))
        val = ops.I(cj, k).value[0] if k else cj.value[0]
        lhs += 0.5 * (2 * rho - 1) ** ell * val * dens
    rhs = 0.0
    for j in range(k + 1):
        if (ell + k - j) % 2:
            continue
        term = 0.0
        for rho in RHO:
            term += 0.5 * (2 * rho - 1) ** (k - j) * _boundary_hermite(sigma, L, x_prev, dt, rho, k - j)
        rhs += (-1) ** j * math.comb(k, j) * c.deriv(j)(L) * term * dens
    return float(lhs), float(rhs)


def check_reduction(sigma: float, L: float, x_prev: float, dt: float, ell: int, k: int,
                    c_coeffs=(1.0,)) -> float:
    lhs, rhs = reduction_sides(sigma, L, x_prev, dt, ell, k, c_coeffs)
    return lhs - rhs


# finite-difference consistency of the BEL estimator --------------------------------

def fd_consistency_bel(config, h: float = 1e-3) -> tuple[float, float, float]:
    """z-score between T times a central difference of the value and the BEL estimate.

    The two value runs share their random numbers (the skeletons do not depend
    on the start); the BEL run uses the next seed.  Returns (z, fd, bel).
    """
    import dataclasses

    from .engine import simulate

    spec = config.model
    up = dataclasses.replace(config, quantity="value", model=dataclasses.replace(spec, x0=spec.x0 + h))
    down = dataclasses.replace(config, quantity="value", model=dataclasses.replace(spec, x0=spec.x0 - h))
    fd = spec.T * (simulate(up) - simulate(down)) / (2 * h)
    bel = simulate(dataclasses.replace(config, quantity="bel", seed=(config.seed + 1) % 2 ** 64))
    se = math.sqrt(fd.var(ddof=1) / fd.size + bel.var(ddof=1) / bel.size)
    return float((fd.mean() - bel.mean()) / se), float(fd.mean()), float(bel.mean())


# time degeneracy ---------------------------------------------------------------

def weight_rms(model: Model, x_prev: float, dt: float, which: str, nodes: int = 96,
               norm: Normalization = Poisson(1.0)) -> float:
    """Root mean square of one-step weights times the alive indicator, by Gauss-Hermite in z and both signs.

    ``which`` is ``bar`` (interior weight), ``star`` or ``circledast`` (merged
    boundary weights, not last interval).
    """
    g, w = hermite_rule(nodes)
    z = math.sqrt(dt) * g
    if which == "bar":
        total = 0.0
        for rho in RHO:
            x = np.full_like(z, x_prev)
            y = transition(model, x, rho, z)
            theta = step_weights(norm, model, Step(x, y, rho, 0.0, dt), False).theta_bar
            total += 0.5 * np.sum(w * (theta * (y >= model.barrier)) ** 2)
        return math.sqrt(total)
    index = {"star": 0, "circledast": 1}[which]
    ms = merged_transition(model, np.full_like(z, x_prev), z, 0.0, dt)
    theta = merged_weights(norm, model, ms, False)[index]
    return math.sqrt(np.sum(w * (theta * (ms.x_merged >= model.barrier)) ** 2))


def degeneracy_slope(model: Model, x_prev: float, which: str, dts=np.logspace(-4, -1, 7)) -> float:
    """Least-squares slope of log RMS against log step length."""
    rms = [weight_rms(model, x_prev, dt, which) for dt in dts]
    return float(np.polyfit(np.log(dts), np.log(rms), 1)[0])
