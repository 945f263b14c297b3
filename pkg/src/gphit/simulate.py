"""Exact path sampling on a uniform grid.

Four plan types, all exact in law on the grid nodes:

``cholesky``
    lower factor of ``Sigma_ij = R(t_i, t_j)``, any kernel with a positive
    definite grid covariance.
``circulant``
    Davies-Harte / Wood-Chan embedding of the fBm increment autocovariance,
    ``O(n log n)`` per path.
``increments``
    cumulative sums of independent Gaussian increments (BM and the
    independent-increment family).
``rank_one``
    ``X_t = Y * t`` for the linear kernel, whose grid covariance is singular.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from . import rng
from .errors import EmbeddingFailed, InvalidArgument, NotPositiveDefinite

CHOLESKY = "cholesky"
CIRCULANT = "circulant"
INCREMENTS = "increments"
RANK_ONE = "rank_one"

# normals per sampling block; keeps memory bounded independent of worker count
_BLOCK_NORMALS = 1 << 22


@dataclass(frozen=True)
class Grid:
    t_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise InvalidArgument(f"grid t_max must be positive, got {self.t_max}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgument(f"grid needs n >= 2 steps, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t_max", float(self.t_max))

    @property
    def dt(self) -> float:
        return self.t_max / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt

    def index_of(self, t: float, rtol: float = 1e-9) -> int | None:
        """Node index of time ``t``, or None if ``t`` is not a node."""
        k = round(t / self.dt)
        if 0 <= k <= self.n and abs(k * self.dt - t) <= rtol * max(self.t_max, 1.0):
            return int(k)
        return None

    def to_dict(self) -> dict:
        return {"t_max": self.t_max, "n": self.n}


@dataclass(frozen=True)
class Path:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n + 1,):
            raise InvalidArgument(f"path needs {self.grid.n + 1} values, got shape {v.shape}")
        if v[0] != 0.0 or not np.all(np.isfinite(v)):
            raise InvalidArgument("path must start at 0 and be finite")
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    def at(self, t):
        """Piecewise-linear interpolant."""
        return interpolate(self.values, self.grid.dt, t)

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x"])
        for t, x in zip(self.times, self.values):
            w.writerow([f"{t:.17g}", f"{x:.17g}"])


def interpolate(values: np.ndarray, dt: float, t):
    """Piecewise-linear evaluation of node values at times ``t``."""
    t = np.asarray(t, dtype=float)
    n = values.shape[-1] - 1
    pos = t / dt
    i = np.clip(np.floor(pos).astype(np.int64), 0, n - 1)
    frac = pos - i
    return values[..., i] + frac * (values[..., i + 1] - values[..., i])


@dataclass(frozen=True)
class SamplerPlan:
    method: str
    kernel: K.Kernel
    grid: Grid
    factor: np.ndarray | None = field(default=None, repr=False)
    eigenvalues: np.ndarray | None = field(default=None, repr=False)
    jitter_applied: float = 0.0
    embedding_size: int = 0

    @property
    def normals_per_path(self) -> int:
        if self.method == CIRCULANT:
            return self.embedding_size
        if self.method == RANK_ONE:
            return 1
        return self.grid.n

    @property
    def block_rows(self) -> int:
        return max(1, _BLOCK_NORMALS // max(self.normals_per_path, self.grid.n + 1))

    def describe(self) -> dict:
        return {
            "method": self.method,
            "jitter_applied": self.jitter_applied,
            "embedding_size": self.embedding_size,
        }


def covariance_matrix(kernel: K.Kernel, grid: Grid) -> np.ndarray:
    t = grid.nodes[1:]
    return np.asarray(K.cov(kernel, t[:, None], t[None, :]))


def plan_cholesky(kernel: K.Kernel, grid: Grid) -> SamplerPlan:
    sigma = covariance_matrix(kernel, grid)
    jitter = 0.0
    try:
        factor = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.max(np.diag(sigma)))
        try:
            factor = np.linalg.cholesky(sigma + jitter * np.eye(grid.n))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(
                f"covariance of {kernel.label()} on {grid.n} nodes is not positive definite"
            ) from exc
    return SamplerPlan(CHOLESKY, kernel, grid, factor=factor, jitter_applied=jitter)


def increment_autocovariance(hurst: float, dt: float, lags) -> np.ndarray:
    k = np.abs(np.asarray(lags, dtype=float))
    p = 2.0 * hurst
    return 0.5 * dt**p * (np.abs(k + 1) ** p + np.abs(k - 1) ** p - 2.0 * k**p)


def plan_circulant(kernel: K.Kernel, grid: Grid, m: int | None = None) -> SamplerPlan:
    """Circulant embedding of size ``2m``; ``m`` doubles until the spectrum is nonnegative.

    The default ``m`` is the smallest power of two ``>= n``.  Eigenvalues above
    ``-1e-10 * max`` are clamped to zero; anything below at ``m = 64 n``
    raises :class:`EmbeddingFailed`.
    """
    if kernel.family != K.FBM:
        raise InvalidArgument(f"circulant embedding needs an fbm kernel, got {kernel.label()}")
    n = grid.n
    if m is None:
        m = 1 << (n - 1).bit_length()
    if m < n:
        raise InvalidArgument(f"embedding half-size {m} smaller than n={n}")
    cap = 64 * n
    while True:
        gamma = increment_autocovariance(kernel.hurst, grid.dt, np.arange(m + 1))
        row = np.concatenate([gamma, gamma[m - 1:0:-1]])
        eig = np.fft.rfft(row).real
        tol = 1e-10 * float(np.max(eig))
        if np.min(eig) >= -tol:
            eig = np.where(np.abs(eig) <= tol, 0.0, eig)
            return SamplerPlan(CIRCULANT, kernel, grid, eigenvalues=eig, embedding_size=2 * m)
        if 2 * m > cap:
            raise EmbeddingFailed(
                f"negative circulant eigenvalue {np.min(eig):.3g} persists at m={m} for {kernel.label()}"
            )
        m *= 2


def plan_increments(kernel: K.Kernel, grid: Grid) -> SamplerPlan:
    if kernel.family not in (K.BM, K.INDEP) and not (kernel.family == K.FBM and kernel.hurst == 0.5):
        raise InvalidArgument(f"increment sampler needs independent increments, got {kernel.label()}")
    v = np.asarray(K.variance(kernel, grid.nodes))
    sd = np.sqrt(np.diff(v))
    return SamplerPlan(INCREMENTS, kernel, grid, factor=sd)


def plan_rank_one(kernel: K.Kernel, grid: Grid) -> SamplerPlan:
    if not (kernel.family == K.LINEAR or (kernel.family == K.FBM and kernel.hurst == 1.0)):
        raise InvalidArgument(f"rank-one sampler needs the linear kernel, got {kernel.label()}")
    return SamplerPlan(RANK_ONE, kernel, grid, factor=grid.nodes.copy())


def make_plan(kernel: K.Kernel, grid: Grid, method: str | None = None) -> SamplerPlan:
    """Pick the natural exact sampler for ``kernel`` unless ``method`` is given."""
    if method is None:
        if kernel.family in (K.BM, K.INDEP):
            method = INCREMENTS
        elif kernel.family == K.LINEAR or kernel.hurst == 1.0:
            method = RANK_ONE
        else:
            method = CIRCULANT
    if method == CHOLESKY:
        return plan_cholesky(kernel, grid)
    if method == CIRCULANT:
        try:
            return plan_circulant(kernel, grid)
        except EmbeddingFailed:
            return plan_cholesky(kernel, grid)
    if method == INCREMENTS:
        return plan_increments(kernel, grid)
    if method == RANK_ONE:
        return plan_rank_one(kernel, grid)
    raise InvalidArgument(f"unknown sampler method {method!r}")


def _transform(plan: SamplerPlan, z: np.ndarray) -> np.ndarray:
    """Map a block of standard normals (rows) to path values with X_0 = 0."""
    rows = z.shape[0]
    n = plan.grid.n
    out = np.empty((rows, n + 1))
    out[:, 0] = 0.0
    if plan.method == CHOLESKY:
        out[:, 1:] = z @ plan.factor.T
    elif plan.method == INCREMENTS:
        np.cumsum(z * plan.factor, axis=1, out=out[:, 1:])
    elif plan.method == RANK_ONE:
        out[:] = z[:, :1] * plan.factor
    else:
        size = plan.embedding_size
        m = size // 2
        eig = plan.eigenvalues
        half = np.empty((rows, m + 1), dtype=complex)
        half[:, 0] = np.sqrt(eig[0] / size) * z[:, 0]
        half[:, m] = np.sqrt(eig[m] / size) * z[:, 1]
        scale = np.sqrt(eig[1:m] / (2.0 * size))
        half[:, 1:m].real = scale * z[:, 2::2]
        half[:, 1:m].imag = scale * z[:, 3::2]
        incr = np.fft.irfft(half, n=size, axis=1) * size
        np.cumsum(incr[:, :n], axis=1, out=out[:, 1:])
    return out


def sample_block(plan: SamplerPlan, master_seed: int, replicates) -> np.ndarray:
    """Paths for the given replicate indices, one row each."""
    seeds = rng.replicate_seeds(master_seed, replicates)
    z = rng.normals(seeds, plan.normals_per_path)
    return _transform(plan, z)


def sample_path(plan: SamplerPlan, master_seed: int, replicate: int) -> Path:
    if replicate < 0:
        raise InvalidArgument("replicate index must be nonnegative")
    values = sample_block(plan, master_seed, [replicate])[0]
    return Path(plan.grid, values)
