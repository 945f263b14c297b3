"""Covariance models for zero-mean Gaussian processes started at zero.

Every kernel carries an analytic first partial derivative ``dR/ds`` so that
integrands evaluated on or next to the diagonal ``s == t`` never go through
finite differences.  All evaluators broadcast over numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DiagonalUndefined, InvalidArgument

FBM = "fbm"
BM = "bm"
LINEAR = "linear"
INDEP = "indep"
FAMILIES = (FBM, BM, LINEAR, INDEP)


@dataclass(frozen=True)
class PowerVariance:
    """Variance function ``V(t) = c * t**gamma`` of an independent-increment process."""

    c: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise InvalidArgument(f"power variance needs c > 0, got {self.c}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidArgument(f"power variance needs gamma > 0, got {self.gamma}")

    def __call__(self, t):
        return self.c * np.power(t, self.gamma)

    def derivative(self, t):
        return self.c * self.gamma * np.power(t, self.gamma - 1.0)

    def to_dict(self) -> dict:
        return {"type": "power", "c": self.c, "gamma": self.gamma}


@dataclass(frozen=True)
class Kernel:
    family: str
    hurst: float | None = None
    variance_fn: PowerVariance | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown kernel family {self.family!r}")
        if self.family == FBM:
            h = self.hurst
            if h is None or not np.isfinite(h) or not (0.0 < h <= 1.0):
                raise InvalidArgument(f"fbm kernel needs hurst in (0, 1], got {h}")
        elif self.hurst is not None:
            raise InvalidArgument(f"hurst is only meaningful for fbm, not {self.family}")
        if self.family == INDEP:
            if self.variance_fn is None:
                raise InvalidArgument("indep kernel needs a variance function")
        elif self.variance_fn is not None:
            raise InvalidArgument(f"variance function is only meaningful for indep, not {self.family}")

    @property
    def h1_satisfied(self) -> bool:
        if self.family == FBM:
            return self.hurst > 0.5
        return self.family == LINEAR

    @property
    def dr_nonneg(self) -> bool:
        if self.family == FBM:
            return self.hurst >= 0.5
        return True

    @property
    def h2_status(self) -> str:
        # limsup X_t = +inf fails for X_t = Y t on {Y < 0}
        if self.family == LINEAR:
            return "documented-false"
        return "documented-true"

    @property
    def exponent(self) -> float:
        """Power ``p`` with ``variance(t) = c * t**p``."""
        if self.family == FBM:
            return 2.0 * self.hurst
        if self.family == BM:
            return 1.0
        if self.family == LINEAR:
            return 2.0
        return self.variance_fn.gamma

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"family": self.family}
        if self.hurst is not None:
            out["hurst"] = self.hurst
        if self.variance_fn is not None:
            out["variance"] = self.variance_fn.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def label(self) -> str:
        if self.family == FBM:
            return f"fbm(H={self.hurst:g})"
        if self.family == INDEP:
            v = self.variance_fn
            return f"indep(c={v.c:g},gamma={v.gamma:g})"
        return self.family


def fbm(hurst: float) -> Kernel:
    return Kernel(FBM, hurst=float(hurst))


def brownian() -> Kernel:
    return Kernel(BM)


def linear() -> Kernel:
    return Kernel(LINEAR)


def independent_increments(c: float = 1.0, gamma: float = 1.0) -> Kernel:
    return Kernel(INDEP, variance_fn=PowerVariance(float(c), float(gamma)))


def from_dict(data: dict) -> Kernel:
    if not isinstance(data, dict) or "family" not in data:
        raise InvalidArgument("kernel description must be an object with a 'family' key")
    unknown = set(data) - {"family", "hurst", "variance"}
    if unknown:
        raise InvalidArgument(f"unknown kernel keys: {sorted(unknown)}")
    variance = data.get("variance")
    vf = None
    if variance is not None:
        if variance.get("type") != "power" or set(variance) != {"type", "c", "gamma"}:
            raise InvalidArgument(f"unsupported variance description {variance!r}")
        vf = PowerVariance(float(variance["c"]), float(variance["gamma"]))
    hurst = data.get("hurst")
    return Kernel(data["family"], hurst=None if hurst is None else float(hurst), variance_fn=vf)


def from_json(text: str) -> Kernel:
    return from_dict(json.loads(text))


def _check_times(*ts):
    for t in ts:
        arr = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidArgument("times must be finite and nonnegative")


def variance(kernel: Kernel, t):
    """``V_t = R(t, t)``."""
    _check_times(t)
    t = np.asarray(t, dtype=float)
    if kernel.family == FBM:
        out = np.power(t, 2.0 * kernel.hurst)
    elif kernel.family == BM:
        out = t * 1.0
    elif kernel.family == LINEAR:
        out = t * t
    else:
        out = kernel.variance_fn(t)
    return out[()] if out.ndim == 0 else out


def variance_derivative(kernel: Kernel, t):
    _check_times(t)
    t = np.asarray(t, dtype=float)
    if kernel.family == FBM:
        out = 2.0 * kernel.hurst * np.power(t, 2.0 * kernel.hurst - 1.0)
    elif kernel.family == BM:
        out = np.ones_like(t)
    elif kernel.family == LINEAR:
        out = 2.0 * t
    else:
        out = kernel.variance_fn.derivative(t)
    return out[()] if out.ndim == 0 else out


def cov(kernel: Kernel, s, t):
    """Covariance ``R(s, t) = E[X_s X_t]``."""
    _check_times(s, t)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if kernel.family == FBM:
        p = 2.0 * kernel.hurst
        out = 0.5 * (np.power(s, p) + np.power(t, p) - np.power(np.abs(t - s), p))
    elif kernel.family == BM:
        out = np.minimum(s, t)
    elif kernel.family == LINEAR:
        out = s * t
    else:
        out = kernel.variance_fn(np.minimum(s, t))
    return out[()] if out.ndim == 0 else out


def dcov_ds(kernel: Kernel, s, t):
    """Partial derivative of ``R(s, t)`` in its first argument.

    On the diagonal the continuous extension is returned; kernels whose
    derivative has no such extension raise :class:`DiagonalUndefined`.
    """
    _check_times(s, t)
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    diag = s == t
    if np.any(diag) and not kernel.h1_satisfied:
        raise DiagonalUndefined(f"dR/ds has no diagonal value for {kernel.label()}")
    if kernel.family == FBM:
        h = kernel.hurst
        q = 2.0 * h - 1.0
        d = t - s
        with np.errstate(divide="ignore", invalid="ignore"):
            far = np.sign(d) * np.power(np.abs(d), q)
        out = h * (np.power(s, q) + np.where(diag, 0.0, far))
    elif kernel.family == BM:
        out = np.where(s < t, 1.0, 0.0)
    elif kernel.family == LINEAR:
        out = t * 1.0
    else:
        with np.errstate(divide="ignore"):
            out = np.where(s < t, kernel.variance_fn.derivative(s), 0.0)
    return out[()] if out.ndim == 0 else out


@dataclass
class HypothesisReport:
    kernel: Kernel
    min_increment_variance: float
    h3_pass: bool
    max_abs_dr_offdiag: float
    diagonal_gap_first: float
    diagonal_gap_last: float
    max_abs_dr_near_diag: float
    h1_pass: bool
    min_dr_offdiag: float
    dr_nonneg_pass: bool
    h2_status: str = "analytic, not checkable numerically"

    @property
    def all_pass(self) -> bool:
        return self.h3_pass and self.h1_pass and (self.dr_nonneg_pass or not self.kernel.dr_nonneg)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "h3": {"min_increment_variance": self.min_increment_variance, "pass": self.h3_pass},
            "h1": {
                "max_abs_dr_offdiag": self.max_abs_dr_offdiag,
                "max_abs_dr_near_diag": self.max_abs_dr_near_diag,
                "diagonal_gap_first": self.diagonal_gap_first,
                "diagonal_gap_last": self.diagonal_gap_last,
                "claimed": self.kernel.h1_satisfied,
                "pass": self.h1_pass,
            },
            "dr_nonneg": {
                "min_dr_offdiag": self.min_dr_offdiag,
                "claimed": self.kernel.dr_nonneg,
                "pass": self.dr_nonneg_pass,
            },
            "h2": {"status": self.h2_status, "documented": self.kernel.h2_status},
            "all_pass": self.all_pass,
        }


_DIAG_OFFSETS = 10.0 ** -np.arange(2, 16, 2)


def check_hypotheses(kernel: Kernel, probe_grid) -> HypothesisReport:
    """Numerical probes of the regularity hypotheses on a grid of positive times.

    The H1 probe looks at ``dR/ds(s, s -+ eps)`` for eps from 1e-2 down to
    1e-14: the left/right gap must shrink by at least half and stay finite.
    """
    g = np.asarray(probe_grid, dtype=float)
    if g.ndim != 1 or g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise InvalidArgument("probe grid must be nonempty, positive and strictly increasing")

    S, T = np.meshgrid(g, g, indexing="ij")
    upper = S < T
    s, t = S[upper], T[upper]
    if s.size:
        incr = variance(kernel, t) + variance(kernel, s) - 2.0 * cov(kernel, s, t)
        min_incr = float(np.min(incr))
    else:
        min_incr = float("inf")

    off = S != T
    dr = np.asarray(dcov_ds(kernel, S[off], T[off])) if off.any() else np.zeros(1)
    max_abs = float(np.max(np.abs(dr)))
    min_dr = float(np.min(dr))

    eps = _DIAG_OFFSETS[:, None] * np.maximum(g[None, :], 1.0)
    base = np.broadcast_to(g[None, :], eps.shape)
    right = np.asarray(dcov_ds(kernel, base, base + eps))
    left = np.asarray(dcov_ds(kernel, base, np.maximum(base - eps, 0.0)))
    gap = np.abs(right - left)
    near = float(np.max(np.abs(np.concatenate([right.ravel(), left.ravel()]))))
    gap_first = float(np.max(gap[0]))
    gap_last = float(np.max(gap[-1]))
    finite = bool(np.all(np.isfinite(right)) and np.all(np.isfinite(left)))
    scale = max(near, 1.0)
    shrinking = gap_last <= 0.5 * gap_first or gap_last <= 1e-12 * scale
    h1_pass = finite and shrinking

    return HypothesisReport(
        kernel=kernel,
        min_increment_variance=min_incr,
        h3_pass=min_incr > 0,
        max_abs_dr_offdiag=max_abs,
        diagonal_gap_first=gap_first,
        diagonal_gap_last=gap_last,
        max_abs_dr_near_diag=near,
        h1_pass=h1_pass,
        min_dr_offdiag=min_dr,
        dr_nonneg_pass=min_dr >= 0,
    )
