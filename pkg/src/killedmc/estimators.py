"""One replication of the value, backward IBP and BEL estimators.

Everything is vectorised over a ``PathBatch`` (paths sharing one jump
count).  Intervals are indexed from 0; interval i runs from ``grid[:, i]`` to
``grid[:, i + 1]`` and moves the chain from state i to state i + 1.

The last interval is handled by a ``Terminal``: either the test function is
applied to the sampled final state, or the final transition is integrated
analytically against a point mass at z, which turns the same sums into
estimators of density derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .calculus import gauss
from .chain import Step, merged_transition, propagate, reflected_mean, transition
from .model import Model, TestFunction
from .renewal import Path, PathBatch
from .weights import DERIVED_MERGED, MergedConvention, Normalization, merged_weights, step_weights

_ATTR = {"bar": "theta_bar", "ibp": "ibp_weight", "e_back": "theta_e_back", "c_back": "theta_c_back",
         "e_fwd": "theta_e_fwd", "c_fwd": "theta_c_fwd", "i_e_fwd": "i_e_fwd"}

QUANTITIES = ("value", "ibp", "bel", "density", "density_dz", "density_dx")


@dataclass(frozen=True)
class Terminal:
    """How the last interval is closed.

    With ``f`` set, f is applied to the sampled final state.  With ``z`` set,
    the last transition is replaced by its density at z: averaged over both
    signs when ``mixture`` is true, or the plain Gaussian centred at the
    previous state otherwise.
    """

    f: TestFunction | None = None
    z: float | None = None
    mixture: bool = True

    def __post_init__(self):
        if (self.f is None) == (self.z is None):
            raise ValueError("give exactly one of a test function or a density point")


@dataclass(frozen=True)
class BranchSymbol:
    """One branch of the estimator tree: a kind and the distinguished interval (1-based)."""

    kind: str      # I, C, B, CircB for the backward tree; I_hat, C_hat for the forward one
    index: int
    length: int

    def symbols(self) -> tuple[str, ...]:
        mark = {"I": "I", "C": "c", "B": "d*e", "CircB": "d(*)e", "I_hat": "I", "C_hat": "c"}[self.kind]
        before, after = ("e", "0") if self.kind.endswith("hat") else ("0", "e")
        k = self.index - 1
        return (before,) * k + (mark,) + (after,) * (self.length - k - 1)


@dataclass
class ReplicationResult:
    value_term: float
    ibp_term: float
    bel_term: float
    diagnostics: dict | None = None


def enumerate_branches(n: int, direction: str = "backward") -> list[BranchSymbol]:
    if n < 0:
        raise ValueError("jump count must be non-negative")
    m = n + 1
    if direction == "backward":
        return ([BranchSymbol("I", k, m) for k in range(1, m + 1)]
                + [BranchSymbol("C", j, m) for j in range(2, m + 1)]
                + [BranchSymbol("B", j, m) for j in range(2, m + 1)]
                + [BranchSymbol("CircB", k, m) for k in range(1, m + 1)])
    if direction == "forward":
        return ([BranchSymbol("I_hat", k, m) for k in range(1, m + 1)]
                + [BranchSymbol("C_hat", j, m) for j in range(1, m)])
    raise ValueError(f"unknown direction {direction!r}")


# closing the last interval ----------------------------------------------------

def _weights(norm, model, step, is_last, keys):
    w = step_weights(norm, model, step, is_last, frozenset(keys))
    return {k: getattr(w, _ATTR[k]) for k in keys}


def _close(model: Model, norm: Normalization, term: Terminal, x_prev, t_prev, t_next, length, rho,
           inc, keys) -> dict:
    """E[f(X') 1{X' >= L} w(X')] over the last transition for each weight key, one draw or exact."""
    L = model.barrier
    if term.f is not None:
        x_next = transition(model, x_prev, rho, inc)
        fx = term.f.value(x_next) * (x_next >= L)
        w = _weights(norm, model, Step(x_prev, x_next, rho, t_prev, t_next, length), True, keys)
        return {k: fx * v for k, v in w.items()}
    z = np.full_like(x_prev, term.z)
    var = model.sigma_at(x_prev) ** 2 * length
    if not term.mixture:
        w = _weights(norm, model, Step(x_prev, z, rho, t_prev, t_next, length), True, keys)
        dens = gauss(var, z - x_prev)
        return {k: dens * v for k, v in w.items()}
    out = dict.fromkeys(keys, 0.0)
    for r in (0.0, 1.0):
        w = _weights(norm, model, Step(x_prev, z, np.full_like(x_prev, r), t_prev, t_next, length), True, keys)
        dens = 0.5 * gauss(var, z - reflected_mean(x_prev, r, L))
        for k in keys:
            out[k] = out[k] + dens * w[k]
    return out


def _close_merged(model, norm, term, conv, x_prev, t_prev, t_next, length, inc):
    """(star, circledast) closed over a merged last transition."""
    L = model.barrier
    if term.f is not None:
        ms = merged_transition(model, x_prev, inc, t_prev, t_next, length)
        factor = term.f.value(ms.x_merged) * (ms.x_merged >= L)
    else:
        sig_L = float(model.sigma_at(L))
        mean = merged_transition(model, x_prev, 0.0 * x_prev).mean
        ms = merged_transition(model, x_prev, (term.z - mean) / sig_L, t_prev, t_next, length)
        factor = gauss(sig_L ** 2 * length, term.z - mean)
    star, circ = merged_weights(norm, model, ms, True, conv)
    return factor * star, factor * circ


def _prepare(model: Model, term: Terminal) -> Terminal:
    """Shift f so that it vanishes at the barrier, as every representation requires."""
    if term.f is not None and not term.f.vanishes_at_L:
        return replace(term, f=term.f.shifted(model.barrier))
    return term


# the three estimators -----------------------------------------------------------

def value_batch(model: Model, norm: Normalization, term: Terminal, batch: PathBatch) -> np.ndarray:
    """f(X_{n+1}) times the product of alive indicators and base weights."""
    n, dt = batch.n_jumps, batch.dt
    chain = propagate(model, batch)
    X, g = chain.states, batch.grid
    prod = np.ones(batch.size)
    for i in range(n):
        st = Step(X[:, i], X[:, i + 1], batch.rhos[:, i], g[:, i], g[:, i + 1], dt[:, i])
        prod = prod * chain.alive[:, i + 1] * _weights(norm, model, st, False, ["bar"])["bar"]
    last = _close(model, norm, term, X[:, n], g[:, n], g[:, n + 1], dt[:, n], batch.rhos[:, n],
                  batch.increments[:, n], ["bar"])
    return prod * last["bar"]


def _suffix(model, norm, term, batch, states, alive, first, key):
    """Products over intervals first..n of alive * weight[key], the last one closed, for a chain."""
    n, g, dt = batch.n_jumps, batch.grid, batch.dt
    inner = [alive[:, i + 1] * _weights(norm, model, Step(states[:, i], states[:, i + 1], batch.rhos[:, i],
                                                          g[:, i], g[:, i + 1], dt[:, i]), False, [key])[key]
             for i in range(first, n)]
    last = _close(model, norm, term, states[:, n], g[:, n], g[:, n + 1], dt[:, n], batch.rhos[:, n],
                  batch.increments[:, n], [key])[key]
    # out[i - first] is the product over intervals i..n
    out = [last]
    for w in reversed(inner):
        out.append(w * out[-1])
    return out[::-1]


def ibp_batch(model: Model, norm: Normalization, term: Terminal, batch: PathBatch,
              conv: MergedConvention = DERIVED_MERGED, collapsed: bool = True,
              families: dict | None = None) -> np.ndarray:
    """T E[f'(X_T) 1{tau > T}] replication: the I, c, merged-star and merged-circledast families."""
    n, g = batch.n_jumps, batch.grid
    dt = batch.dt
    chain = propagate(model, batch)
    X, alive = chain.states, chain.alive
    keys = ["bar", "ibp", "e_back", "c_back"]
    interior = [_weights(norm, model, Step(X[:, i], X[:, i + 1], batch.rhos[:, i], g[:, i], g[:, i + 1], dt[:, i]),
                         False, keys) for i in range(n)]
    last = _close(model, norm, term, X[:, n], g[:, n], g[:, n + 1], dt[:, n], batch.rhos[:, n],
                  batch.increments[:, n], ["ibp", "e_back", "c_back"])
    prefix = [np.ones(batch.size)]
    for i in range(n):
        prefix.append(prefix[-1] * alive[:, i + 1] * interior[i]["bar"])
    # products of e-weights over intervals i..n on the base chain
    e_tail = [last["e_back"]]
    for i in reversed(range(n)):
        e_tail.append(alive[:, i + 1] * interior[i]["e_back"] * e_tail[-1])
    e_tail = e_tail[::-1]

    def after(i):
        return e_tail[i + 1] if i < n else 1.0

    def start_time(j):
        return g[:, j] if collapsed else np.sum(dt[:, :j], axis=1)

    fam_i = np.zeros(batch.size)
    fam_c = np.zeros(batch.size)
    for k in range(n + 1):
        w = last["ibp"] if k == n else alive[:, k + 1] * interior[k]["ibp"]
        fam_i += dt[:, k] * prefix[k] * w * after(k)
    for j in range(1, n + 1):
        w = last["c_back"] if j == n else alive[:, j + 1] * interior[j]["c_back"]
        fam_c += start_time(j) * prefix[j] * w * after(j)

    fam_b = np.zeros(batch.size)
    fam_cb = np.zeros(batch.size)
    for q in range(n + 1):
        live = prefix[q] != 0
        if not np.any(live):
            continue
        if q == n:
            star, circ = _close_merged(model, norm, term, conv, X[:, n], g[:, n], g[:, n + 1], dt[:, n],
                                       batch.increments[:, n])
            tail = 1.0
        else:
            ms = merged_transition(model, X[:, q], batch.increments[:, q], g[:, q], g[:, q + 1], dt[:, q])
            star, circ = merged_weights(norm, model, ms, False, conv)
            ok = ms.x_merged >= model.barrier
            star, circ = star * ok, circ * ok
            sub = propagate(model, batch, start=ms.x_merged, first=q + 1)
            tail = _suffix(model, norm, term, batch, sub.states, sub.alive, q + 1, "e_back")[0]
        if q >= 1:
            fam_b += start_time(q) * prefix[q] * star * tail
        fam_cb += prefix[q] * circ * tail
    if families is not None:
        families.update(I=fam_i, C=fam_c, B=fam_b, CircB=fam_cb)
    return fam_i + fam_c + fam_b + fam_cb


def bel_batch(model: Model, norm: Normalization, term: Terminal, batch: PathBatch,
              families: dict | None = None) -> np.ndarray:
    """T d/dx E[f(X_T) 1{tau > T}] replication (Bismut-Elworthy-Li type)."""
    n, g = batch.n_jumps, batch.grid
    dt = batch.dt
    T = g[:, n + 1]
    chain = propagate(model, batch)
    X, alive = chain.states, chain.alive
    keys = ["bar", "e_fwd", "c_fwd", "i_e_fwd"]
    interior = [_weights(norm, model, Step(X[:, i], X[:, i + 1], batch.rhos[:, i], g[:, i], g[:, i + 1], dt[:, i]),
                         False, keys) for i in range(n)]
    last = _close(model, norm, term, X[:, n], g[:, n], g[:, n + 1], dt[:, n], batch.rhos[:, n],
                  batch.increments[:, n], ["bar", "i_e_fwd"])
    prefix = [np.ones(batch.size)]
    for i in range(n):
        prefix.append(prefix[-1] * alive[:, i + 1] * interior[i]["e_fwd"])
    bar_tail = [last["bar"]]
    for i in reversed(range(n)):
        bar_tail.append(alive[:, i + 1] * interior[i]["bar"] * bar_tail[-1])
    bar_tail = bar_tail[::-1]
    fam_i = dt[:, n] * prefix[n] * last["i_e_fwd"]
    fam_c = np.zeros(batch.size)
    for k in range(n):
        fam_i = fam_i + dt[:, k] * prefix[k] * alive[:, k + 1] * interior[k]["i_e_fwd"] * bar_tail[k + 1]
        fam_c = fam_c + (T - g[:, k]) * prefix[k] * alive[:, k + 1] * interior[k]["c_fwd"] * bar_tail[k + 1]
    if families is not None:
        families.update(I_hat=fam_i, C_hat=fam_c)
    return fam_i + fam_c


def replicate_batch(model: Model, norm: Normalization, quantity: str, batch: PathBatch,
                    f: TestFunction | None = None, z: float | None = None, mixture: bool = True,
                    conv: MergedConvention = DERIVED_MERGED) -> np.ndarray:
    """Dispatch one quantity over a batch.

    density: p(T, x, z); density_dz: T d/dz p; density_dx: T d/dx p.
    """
    if quantity in ("value", "ibp", "bel"):
        if f is None:
            raise ValueError(f"quantity {quantity!r} needs a test function")
        term = _prepare(model, Terminal(f=f))
    elif quantity in ("density", "density_dz", "density_dx"):
        if z is None or z < model.barrier:
            raise ValueError("density quantities need a point z >= L")
        term = Terminal(z=z, mixture=mixture)
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    if quantity in ("value", "density"):
        return value_batch(model, norm, term, batch)
    if quantity == "ibp":
        return ibp_batch(model, norm, term, batch, conv)
    if quantity == "density_dz":
        # integrating f' against p moves the derivative onto the density with a minus sign
        return -ibp_batch(model, norm, term, batch, conv)
    return bel_batch(model, norm, term, batch)


# single-path entry points ------------------------------------------------------------

def value_term(model: Model, norm: Normalization, f: TestFunction, path: Path) -> float:
    return float(replicate_batch(model, norm, "value", path.batch(), f=f)[0])


def ibp_backward_term(model: Model, norm: Normalization, f: TestFunction, path: Path,
                      conv: MergedConvention = DERIVED_MERGED) -> float:
    return float(replicate_batch(model, norm, "ibp", path.batch(), f=f, conv=conv)[0])


def bel_term(model: Model, norm: Normalization, f: TestFunction, path: Path) -> float:
    return float(replicate_batch(model, norm, "bel", path.batch(), f=f)[0])


def density_derivative_terminal(model: Model, norm: Normalization, path: Path, z: float,
                                mixture: bool = True) -> float:
    """T d/dz p(T, x, z).  ``mixture=False`` uses the unreflected Gaussian for the last step."""
    return float(replicate_batch(model, norm, "density_dz", path.batch(), z=z, mixture=mixture)[0])


def density_derivative_initial(model: Model, norm: Normalization, path: Path, z: float,
                               mixture: bool = True) -> float:
    """T d/dx p(T, x, z)."""
    return float(replicate_batch(model, norm, "density_dx", path.batch(), z=z, mixture=mixture)[0])


def replicate(model: Model, norm: Normalization, f: TestFunction, path: Path) -> ReplicationResult:
    b = path.batch()
    fam: dict = {}
    ibp = replicate_batch(model, norm, "ibp", b, f=f)
    term = _prepare(model, Terminal(f=f))
    bel = bel_batch(model, norm, term, b, families=fam)
    return ReplicationResult(float(replicate_batch(model, norm, "value", b, f=f)[0]), float(ibp[0]),
                             float(bel[0]), {k: float(v[0]) for k, v in fam.items()})
