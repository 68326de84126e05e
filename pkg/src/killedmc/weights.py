"""Per-interval weights of the value, backward and forward estimators.

All weights are returned without alive indicators; the estimators apply the
indicators at the product level because merged branches use their own chain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import BiJet, MergedOperators, StepOperators, mills_ratio_stack
from .chain import MergedStep, Step
from .model import Model
from .renewal import Exponential, JumpLaw


@dataclass(frozen=True)
class Poisson:
    """Jump times of a Poisson process: lambda^-1 per interval and e^(lambda T) at the end."""

    lam: float

    def interior(self, dt):
        return np.full(np.shape(dt), 1.0 / self.lam)

    def last(self, t_prev, t_next):
        return np.exp(self.lam * np.asarray(t_next, float)) * np.ones(np.shape(t_prev))

    @property
    def law(self) -> JumpLaw:
        return Exponential(self.lam)


@dataclass(frozen=True)
class Renewal:
    """General renewal times: 1/f(dt) per interval and 1/(1 - F(T - zeta_n)) at the end."""

    law: JumpLaw

    def interior(self, dt):
        return 1.0 / self.law.density(dt)

    def last(self, t_prev, t_next):
        return 1.0 / self.law.survival(np.asarray(t_next, float) - np.asarray(t_prev, float))


Normalization = Poisson | Renewal


@dataclass
class StepWeights:
    theta_bar: np.ndarray
    ibp_weight: np.ndarray | None = None      # I(theta_bar)
    theta_e_back: np.ndarray | None = None
    theta_c_back: np.ndarray | None = None
    theta_e_fwd: np.ndarray | None = None
    theta_c_fwd: np.ndarray | None = None
    i_e_fwd: np.ndarray | None = None         # I(theta_e_fwd)


_FIRST_ORDER = {"bar", "e_back", "e_fwd"}


def kappa(norm: Normalization, step: Step, is_last: bool) -> np.ndarray:
    if is_last:
        return norm.last(step.t_prev, step.t_next)
    return norm.interior(step.dt)


def step_weights(norm: Normalization, model: Model, step: Step, is_last: bool,
                 want=frozenset({"bar"})) -> StepWeights:
    """Evaluate the requested weights of one transition.

    ``want`` is a subset of {bar, ibp, e_back, c_back, e_fwd, c_fwd, i_e_fwd}.
    """
    order = 2 if set(want) <= _FIRST_ORDER else 3
    x_prev = np.asarray(step.x_prev, float)
    x_next = np.asarray(step.x_next, float) * np.ones_like(x_prev)
    ops = StepOperators(model.stack("sigma", x_prev, order + 1), x_prev, x_next, step.rho,
                        step.dt * np.ones_like(x_prev), model.barrier, order)
    k = kappa(norm, step, is_last) * np.ones_like(x_prev)
    s = ops.s * np.ones_like(x_prev)
    if is_last:
        bar = BiJet.constant(2.0 * s * k, order)
    else:
        a_next = ops.V.compose(model.stack("a", x_next, order))
        a_prev = ops.U.compose(model.stack("a", x_prev, order))
        c1 = ops.V.compose(model.stack("b", x_next, order))
        c2 = (a_next - a_prev) * 0.5
        bar = (ops.I(c1) + ops.I(c2, 2)) * (2.0 * s * k)
    out = StepWeights(bar.value.copy())
    if "ibp" in want:
        out.ibp_weight = ops.I(bar).value
    if want & {"e_back", "c_back"}:
        if is_last:
            e = BiJet.constant(2.0 * k, order)
        else:
            e = (ops.I(c2, 2) + ops.I(c1 - s * ops.total(c2))) * (2.0 * k)
        out.theta_e_back = e.value.copy()
        if "c_back" in want:
            c = ops.I(bar - s * e) - ops.total(e) - ops.dsigma * ops.I(ops.z * e)
            out.theta_c_back = c.value
    if want & {"e_fwd", "c_fwd", "i_e_fwd"}:
        if is_last:
            e = (ops.dsigma * ops.z * s + 1.0) * (2.0 * k)
        else:
            e = (ops.I(c2, 2) + ops.I(c1 + s * ops.total(c2))) * (2.0 * k)
        out.theta_e_fwd = e.value.copy()
        if "i_e_fwd" in want:
            out.i_e_fwd = ops.I(e).value
        if "c_fwd" in want:
            if is_last:
                out.theta_c_fwd = np.zeros_like(x_prev)
            else:
                c = ops.I(bar * s - e) + ops.total(bar) + ops.dsigma * ops.I(ops.z * bar)
                out.theta_c_fwd = c.value
    return out


def base_weight(norm: Normalization, model: Model, step: Step, is_last: bool) -> np.ndarray:
    return step_weights(norm, model, step, is_last).theta_bar


def backward_triple(norm: Normalization, model: Model, step: Step, is_last: bool):
    w = step_weights(norm, model, step, is_last, frozenset({"e_back", "c_back"}))
    return w.theta_e_back, w.theta_c_back, theta_partial_back(norm, model, step, is_last)


def forward_triple(norm: Normalization, model: Model, step: Step, is_last: bool):
    w = step_weights(norm, model, step, is_last, frozenset({"e_fwd", "c_fwd"}))
    return w.theta_e_fwd, w.theta_c_fwd


def boundary_slope(model: Model) -> float:
    """a'(L) - b(L), the coefficient shared by every boundary weight."""
    L = model.barrier
    return float(model.stack("a", L, 1)[1] - model.drift_at(L))


def theta_partial_back(norm: Normalization, model: Model, step: Step, is_last: bool) -> np.ndarray:
    """Boundary weight of the backward transfer, after the parity reduction."""
    x_prev = np.asarray(step.x_prev, float)
    if is_last:
        return np.zeros(np.broadcast(x_prev, step.x_next).shape)
    s = 2.0 * np.asarray(step.rho, float) - 1.0
    sig = model.sigma_at(x_prev)
    z = (step.x_next - (s * x_prev + 2.0 * model.barrier * (1.0 - np.asarray(step.rho, float)))) / sig
    return 2.0 * s * kappa(norm, step, False) * boundary_slope(model) * z / (sig * step.dt)


@dataclass(frozen=True)
class MergedConvention:
    """Choices in the merged boundary weights.

    The defaults follow from integrating out the intermediate time with the
    Gaussian convolution identities and are confirmed by the merging oracles.
    ``PRINTED_MERGED`` reproduces the formulas exactly as printed, for comparison.
    """

    sign: float = -1.0
    d1_a_coef: float = 0.5          # d1 = b - coef * a'
    last_circ_a_coef: float = 1.0   # (coef * a'(L) - b(L)) in the last-interval circledast weight
    mills_spatial: bool = True      # Mills ratio argument sigma(L) z_sum rather than z_sum


DERIVED_MERGED = MergedConvention()
PRINTED_MERGED = MergedConvention(sign=1.0, d1_a_coef=1.0, last_circ_a_coef=2.0, mills_spatial=False)


def merged_weights(norm: Normalization, model: Model, mstep: MergedStep, is_last: bool,
                   conv: MergedConvention = DERIVED_MERGED) -> tuple[np.ndarray, np.ndarray]:
    """The star and circledast merged weights of one merged transition."""
    L = model.barrier
    sig_L = float(model.sigma_at(L))
    a_L = sig_L ** 2
    a_stack_L = model.stack("a", L, 1)
    slope = float(a_stack_L[1] - model.drift_at(L))
    x_prev = np.asarray(mstep.x_prev, float) * np.ones(np.shape(mstep.x_merged))
    a_j = model.sigma_at(x_prev) ** 2
    tau = mstep.duration * np.ones_like(x_prev)
    step = Step(x_prev, mstep.x_merged, 1.0, mstep.t_prev, mstep.t_end, mstep.length)
    k = kappa(norm, step, is_last) * np.ones_like(x_prev)
    circ_scale = 4.0 * k * (x_prev - L) / (a_j ** 1.5 * sig_L)
    w = mstep.x_merged - mstep.mean
    if is_last:
        star = conv.sign * 4.0 * k * slope / a_j
        if conv.mills_spatial:
            ratio = mills_ratio_stack(a_L * tau, w, 0)[0]
        else:
            ratio = mills_ratio_stack(a_L * tau, mstep.z_sum, 0)[0]
        last_slope = conv.last_circ_a_coef * float(a_stack_L[1]) - float(model.drift_at(L))
        return star * np.ones_like(x_prev), conv.sign * last_slope * circ_scale * ratio
    order = 2
    y = np.asarray(mstep.x_merged, float) * np.ones_like(x_prev)
    ops = MergedOperators(sig_L, y, mstep.mean, tau, order)
    a_stack = model.stack("a", y, order + 1)
    d2 = (ops.Y.compose(a_stack[: order + 1]) - a_L) * 0.5
    d1 = ops.Y.compose(model.stack("b", y, order)) - ops.Y.compose(a_stack[1:]) * conv.d1_a_coef
    star = conv.sign * 4.0 * k * slope / a_j * (ops.I(d2, 2) + ops.I(d1)).value
    if conv.mills_spatial:
        r_stack = mills_ratio_stack(a_L * tau, w, order)
    else:
        r_stack = mills_ratio_stack(a_L * tau, mstep.z_sum, order)
        r_stack = r_stack / sig_L ** np.arange(order + 1).reshape((-1,) + (1,) * r_stack[0].ndim)
    ratio = ops.Y.compose(r_stack)
    circ = conv.sign * slope * circ_scale * (ops.I(d2 * ratio, 2) + ops.I(d1 * ratio)).value
    return star, circ


def merged_star(norm, model, mstep, is_last, conv: MergedConvention = DERIVED_MERGED):
    return merged_weights(norm, model, mstep, is_last, conv)[0]


def merged_circledast(norm, model, mstep, is_last, conv: MergedConvention = DERIVED_MERGED):
    return merged_weights(norm, model, mstep, is_last, conv)[1]
