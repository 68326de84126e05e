"""Renewal jump-time laws and sampled path skeletons."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, betaincinv


@dataclass(frozen=True)
class Exponential:
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("intensity must be positive")

    def density(self, t):
        t = _check_support(t, np.inf)
        return self.lam * np.exp(-self.lam * t)

    def survival(self, t):
        t = _check_support(t, np.inf)
        return np.exp(-self.lam * t)

    def sample_gaps(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.exponential(1.0 / self.lam, size)

    def spec(self) -> str:
        return f"exp:lambda={self.lam:g}"


@dataclass(frozen=True)
class BetaOne:
    """Gaps tau * Beta(1 - alpha, 1), density proportional to t^(-alpha) on [0, tau]."""

    alpha: float
    tau: float

    def __post_init__(self):
        if not 0 < self.alpha < 1 or self.tau <= 0:
            raise ValueError("need 0 < alpha < 1 and tau > 0")

    def density(self, t):
        t = _check_support(t, self.tau)
        return (1 - self.alpha) * self.tau ** (self.alpha - 1) * t ** (-self.alpha)

    def survival(self, t):
        t = _check_support(t, self.tau, strict=True)
        return 1.0 - (t / self.tau) ** (1 - self.alpha)

    def sample_gaps(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # 1 - U lies in (0, 1], so a gap is never exactly zero
        return self.tau * (1.0 - rng.random(size)) ** (1.0 / (1 - self.alpha))

    def spec(self) -> str:
        return f"beta1:alpha={self.alpha:g},tau={self.tau:g}"


@dataclass(frozen=True)
class BetaTwo:
    """Gaps tau * Beta(alpha, beta) in the standard shape t^(alpha-1) (tau - t)^(beta-1)."""

    alpha: float
    beta: float
    tau: float

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.beta < 1) or self.tau <= 0:
            raise ValueError("need alpha, beta in (0, 1) and tau > 0")

    def density(self, t):
        t = _check_support(t, self.tau)
        a, b = self.alpha, self.beta
        return self.tau ** (1 - a - b) / beta_fn(a, b) * t ** (a - 1) * (self.tau - t) ** (b - 1)

    def survival(self, t):
        t = _check_support(t, self.tau, strict=True)
        return 1.0 - betainc(self.alpha, self.beta, t / self.tau)

    def sample_gaps(self, rng: np.random.Generator, size: int) -> np.ndarray:
        gaps = self.tau * betaincinv(self.alpha, self.beta, 1.0 - rng.random(size))
        return np.maximum(gaps, np.finfo(float).tiny)

    def spec(self) -> str:
        return f"beta2:alpha={self.alpha:g},beta={self.beta:g},tau={self.tau:g}"


JumpLaw = Exponential | BetaOne | BetaTwo


def _check_support(t, upper: float, strict: bool = False) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    bad = (t < 0) | ((t >= upper) if strict else (t > upper))
    if np.any(bad):
        raise ValueError("time outside the support of the jump law")
    return t


def parse_law(text: str) -> JumpLaw:
    """Parse ``exp:lambda=v``, ``beta1:alpha=v,tau=v`` or ``beta2:alpha=v,beta=v,tau=v``."""
    kind, _, rest = text.strip().partition(":")
    try:
        kv = dict(item.split("=", 1) for item in rest.split(",") if item)
        kv = {k.strip(): float(v) for k, v in kv.items()}
        if kind == "exp":
            return Exponential(kv.pop("lambda"))
        if kind == "beta1":
            return BetaOne(kv.pop("alpha"), kv.pop("tau"))
        if kind == "beta2":
            return BetaTwo(kv.pop("alpha"), kv.pop("beta"), kv.pop("tau"))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad sampler spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown sampler kind {kind!r}")


def variance_condition(law: JumpLaw, p: float) -> bool:
    """Sufficient condition for a finite moment of order p of the weight product.

    The weight of a short interval of length t behaves like t^(-1/2) / f(t), so
    the condition only depends on the power of t in the density near zero.
    """
    if p < 1:
        raise ValueError("moment order must be at least 1")
    if isinstance(law, Exponential):
        return p < 2
    # density ~ t^(-k) near zero
    k = law.alpha if isinstance(law, BetaOne) else 1.0 - law.alpha
    return p * (0.5 - k) < 1 - k


@dataclass
class Path:
    """One skeleton: jump times in (0, T], standard normals and signs per interval."""

    times: np.ndarray
    gaussians: np.ndarray
    bernoullis: np.ndarray
    horizon: float

    def __post_init__(self):
        n = len(self.times)
        if len(self.gaussians) != n + 1 or len(self.bernoullis) != n + 1:
            raise ValueError("need one gaussian and one sign per interval")
        if n and (np.any(np.diff(self.times) <= 0) or self.times[0] <= 0 or self.times[-1] > self.horizon):
            raise ValueError("jump times must be increasing inside (0, T]")

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    def grid(self) -> np.ndarray:
        return np.concatenate([[0.0], self.times, [self.horizon]])

    def batch(self) -> "PathBatch":
        return PathBatch(self.grid()[None, :], self.gaussians[None, :], self.bernoullis[None, :].astype(float))


@dataclass
class PathBatch:
    """Paths sharing the same number of jumps, stacked row-wise.

    ``grid`` has columns 0, zeta_1, ..., zeta_n, T.
    """

    grid: np.ndarray
    gaussians: np.ndarray
    rhos: np.ndarray
    lengths: np.ndarray | None = None  # exact interval lengths; defaults to differences of the grid

    @property
    def n_jumps(self) -> int:
        return self.grid.shape[1] - 2

    @property
    def size(self) -> int:
        return self.grid.shape[0]

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.grid, axis=1) if self.lengths is None else self.lengths

    @property
    def increments(self) -> np.ndarray:
        return np.sqrt(self.dt) * self.gaussians


@dataclass
class Skeletons:
    """A block of sampled skeletons with ragged jump counts, padded with NaN."""

    n_jumps: np.ndarray
    times: np.ndarray
    gaussians: np.ndarray
    rhos: np.ndarray
    horizon: float
    gaps: np.ndarray | None = None

    def groups(self):
        """Yield (row indices, PathBatch) for every distinct jump count."""
        for n in np.unique(self.n_jumps):
            rows = np.flatnonzero(self.n_jumps == n)
            grid = np.empty((len(rows), n + 2))
            grid[:, 0] = 0.0
            grid[:, 1:n + 1] = self.times[rows, :n]
            grid[:, n + 1] = self.horizon
            lengths = None
            if self.gaps is not None:
                lengths = np.empty((len(rows), n + 1))
                lengths[:, :n] = self.gaps[rows, :n]
                lengths[:, n] = self.horizon - grid[:, n]
            yield rows, PathBatch(grid, self.gaussians[rows, :n + 1], self.rhos[rows, :n + 1], lengths)

    def path(self, r: int) -> Path:
        n = self.n_jumps[r]
        return Path(self.times[r, :n].copy(), self.gaussians[r, :n + 1].copy(),
                    self.rhos[r, :n + 1].astype(int), self.horizon)


def sample_skeletons(law: JumpLaw, horizon: float, rng: np.random.Generator, size: int) -> Skeletons:
    """Draw gaps until each cumulative sum passes the horizon, then normals and signs."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not isinstance(law, Exponential) and law.tau <= horizon:
        raise ValueError("the Beta laws need tau > T")
    clock = np.zeros(size)
    counts = np.zeros(size, dtype=int)
    columns, gap_columns = [], []
    active = np.arange(size)
    while active.size:
        gaps = law.sample_gaps(rng, active.size)
        clock[active] += gaps
        col = np.full(size, np.nan)
        gcol = np.full(size, np.nan)
        # a jump landing exactly on T would leave an empty last interval
        jumped = clock[active] < horizon
        col[active[jumped]] = clock[active[jumped]]
        gcol[active[jumped]] = gaps[jumped]
        counts[active[jumped]] += 1
        columns.append(col)
        gap_columns.append(gcol)
        active = active[jumped]
    width = max(len(columns) - 1, 0)
    times = np.stack(columns[:width], axis=1) if width else np.empty((size, 0))
    gap_arr = np.stack(gap_columns[:width], axis=1) if width else np.empty((size, 0))
    gaussians = rng.standard_normal((size, width + 1))
    rhos = (rng.random((size, width + 1)) < 0.5).astype(float)
    return Skeletons(counts, times, gaussians, rhos, horizon, gap_arr)


def sample_path(law: JumpLaw, horizon: float, rng: np.random.Generator) -> Path:
    return sample_skeletons(law, horizon, rng, 1).path(0)
