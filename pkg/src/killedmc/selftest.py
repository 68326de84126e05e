"""Checks run by ``killedmc selftest``; each returns (passed, detail)."""
from __future__ import annotations

import math

import numpy as np

from . import oracles
from .calculus import StepOperators
from .engine import ModelSpec, RunConfig, simulate
from .model import sine_martingale


def _duality():
    worst = 0.0
    for rho in (0.0, 1.0):
        for ell in (1, 2):
            r = oracles.check_duality(0.7, 0.3, 0.4, rho, 0.0, (0.1, -0.3, 0.5, 0.2),
                                      lambda u, v: v * v * u + 1.0, ell)
            worst = max(worst, abs(r))
    return worst <= 1e-9, f"max residual {worst:.1e}"


def _extraction():
    stack = np.zeros((6, 1))
    stack[0] = 0.6
    ops = StepOperators(stack, np.array([0.5]), np.array([0.8]), 1.0, np.array([0.2]), 0.0, 3)
    h1 = ops.V * ops.V + ops.U
    h2 = ops.V * ops.V * ops.V - ops.V
    worst = max(float(oracles.extraction_residual(ops, h1, h2, ell)[0]) for ell in (1, 2))
    return worst <= 1e-12, f"max residual {worst:.1e}"


def _chain_rule():
    m = sine_martingale(0.3, 0.7)
    r = oracles.chain_rule_residual(m, lambda u, v: v * v * u + v, [0.4, 1.1], [0.7, 0.2], 1.0, 0.2)
    worst = float(np.max(r))
    return worst <= 1e-10, f"max residual {worst:.1e}"


def _transfer():
    m = sine_martingale(0.2, 1.0)
    worst = 0.0
    for last in (False, True):
        for direction in ("backward", "forward"):
            f = (lambda y: y ** 2) if last else (lambda y: np.sin(y) + y ** 2)
            fp = (lambda y: 2 * y) if last else (lambda y: np.cos(y) + 2 * y)
            worst = max(worst, abs(oracles.check_transfer(m, 0.6, 0.2, f, fp, is_last=last,
                                                          direction=direction)))
    return worst <= 1e-5, f"max residual {worst:.1e}"


def _merging():
    m = sine_martingale(0.2, 1.0)
    worst = 0.0
    for which in ("star", "circledast", "last_star", "last_circledast"):
        worst = max(worst, abs(oracles.check_merging(m, 0.5, 0.4, lambda y: np.sin(y) + y * y + 0.3, which)))
    return worst <= 1e-4, f"max residual {worst:.1e}"


def _convolution():
    worst = 0.0
    for ell in (0, 1, 2):
        for which in ("plain", "timed"):
            worst = max(worst, abs(oracles.check_gaussian_convolution(1.3, 0.7, 0.5, 0.4, 0.8, ell, which)))
    return worst <= 1e-7, f"max residual {worst:.1e}"


def _reduction():
    worst = 0.0
    for ell in range(4):
        for k in range(3):
            worst = max(worst, abs(oracles.check_reduction(0.5, 0.0, 0.6, 0.3, ell, k, (1.0, 1.0, 1.0))))
    return worst <= 1e-12, f"max residual {worst:.1e}"


def _constant_value(samples: int, seed: int, workers: int = 1):
    spec = ModelSpec("constant", sigma_bar=0.5, x0=0.5, T=1.0, payoff="power2")
    worst = 0.0
    for sampler in ("exp:lambda=1", "beta1:alpha=0.5,tau=1.5"):
        v = simulate(RunConfig(spec, "value", sampler, samples, seed, workers))
        target = oracles.killed_bm_value(lambda z: z * z, 0.5, 0.0, 0.5, 1.0)
        worst = max(worst, abs(v.mean() - target) / (v.std(ddof=1) / math.sqrt(v.size)))
    return worst <= 4.0, f"max |z| {worst:.2f}"


def fast_checks():
    return [
        ("duality", _duality),
        ("extraction", _extraction),
        ("chain rule", _chain_rule),
        ("transfer (backward, forward, last)", _transfer),
        ("boundary merging (four variants)", _merging),
        ("gaussian time convolutions", _convolution),
        ("parity reduction", _reduction),
        ("constant model value, M=20000", lambda: _constant_value(20_000, 7)),
    ]


def _constant_all(seed: int, workers: int):
    sig, x, T, z = 0.5, 0.5, 1.0, 0.7
    spec = ModelSpec("constant", sigma_bar=sig, x0=x, T=T, payoff="power2")
    targets = {
        "value": oracles.killed_bm_value(lambda y: y * y, sig, 0.0, x, T),
        "bel": T * oracles.killed_bm_value_dx(lambda y: y * y, sig, 0.0, x, T),
        "density_dz": T * oracles.killed_bm_dz(sig, 0.0, x, T, z),
        "density_dx": T * oracles.killed_bm_dx(sig, 0.0, x, T, z),
    }
    worst = 0.0
    for q, target in targets.items():
        v = simulate(RunConfig(spec, q, "beta1:alpha=0.5,tau=1.5", 100_000, seed, workers, z=z))
        worst = max(worst, abs(v.mean() - target) / (v.std(ddof=1) / math.sqrt(v.size)))
    return worst <= 4.0, f"max |z| {worst:.2f}"


def _fd(seed: int, workers: int):
    worst = 0.0
    for spec in (ModelSpec("constant", sigma_bar=0.5, x0=0.5, T=1.0, payoff="power2"), ModelSpec()):
        z, _, _ = oracles.fd_consistency_bel(RunConfig(spec, "bel", samples=100_000, seed=seed, workers=workers))
        worst = max(worst, abs(z))
    return worst <= 4.0, f"max |z| {worst:.2f}"


def full_checks(seed: int = 0, workers: int = 1):
    return [
        ("constant model, four estimators, M=1e5", lambda: _constant_all(seed, workers)),
        ("BEL against finite differences, M=1e5", lambda: _fd(seed, workers)),
    ]


