"""First passage times and the record-time decomposition of ``y -> tau_y``.

Paths are piecewise linear between grid nodes.  The running maximum rises
only on record segments; each record segment contributes an absolutely
continuous piece of the hitting profile, and each stall of the maximum that
is later broken contributes an atom (a jump of ``tau``).

Crossing times are always computed as ``t0 + (y - x0) / (x1 - x0) * (t1 - t0)``
from the two nodes bracketing the crossing, both here and in
:func:`first_hit`, so the two agree bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .simulate import Path

GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class HitResult:
    hit: bool
    tau: float | None
    grid_index: int | None


def first_hit(path: Path, level: float) -> HitResult:
    if not level > 0:
        raise InvalidArgument(f"level must be positive, got {level}")
    v = path.values
    above = v >= level
    i = int(np.argmax(above))
    if not above[i]:
        return HitResult(False, None, None)
    t = path.times
    tau = _cross(t[i - 1], v[i - 1], t[i], v[i], level)
    return HitResult(True, float(tau), i)


def _cross(t0, x0, t1, x1, y):
    return t0 + (y - x0) / (x1 - x0) * (t1 - t0)


def first_hit_block(values: np.ndarray, dt: float, level: float):
    """Vectorized first passage over rows of path values.

    Returns ``(hit, tau)``; ``tau`` is ``inf`` where the row never reaches ``level``.
    """
    above = values >= level
    idx = np.argmax(above, axis=1)
    rows = np.arange(values.shape[0])
    hit = above[rows, idx]
    safe = np.where(hit, idx, 1)
    x1 = values[rows, safe]
    x0 = values[rows, safe - 1]
    t1 = safe * dt
    t0 = (safe - 1) * dt
    tau = np.where(hit, _cross(t0, x0, t1, x1, level), np.inf)
    return hit, tau


@dataclass(frozen=True)
class HittingProfile:
    """Decomposition of the hitting profile of one interpolated path.

    Segment ``k`` covers levels ``(y_lo[k], y_hi[k]]``, over which ``tau_y``
    runs from ``t_lo[k]`` to ``t_hi[k]`` along the path segment between nodes
    ``(t0[k], x0[k])`` and ``(t_hi[k], y_hi[k])``.  Atom ``j`` is the jump of
    ``tau`` at level ``atom_level[j]`` from ``atom_minus[j]`` to ``atom_plus[j]``.
    """

    s_max: float
    t_max: float
    y_lo: np.ndarray
    y_hi: np.ndarray
    t_lo: np.ndarray
    t_hi: np.ndarray
    x0: np.ndarray
    t0: np.ndarray
    atom_level: np.ndarray
    atom_minus: np.ndarray
    atom_plus: np.ndarray

    @property
    def segments(self) -> list[dict]:
        return [
            {"y_lo": float(a), "y_hi": float(b), "t_lo": float(c), "t_hi": float(d)}
            for a, b, c, d in zip(self.y_lo, self.y_hi, self.t_lo, self.t_hi)
        ]

    @property
    def atoms(self) -> list[dict]:
        return [
            {"level": float(a), "tau_minus": float(b), "tau_plus": float(c)}
            for a, b, c in zip(self.atom_level, self.atom_minus, self.atom_plus)
        ]

    @property
    def tau_top(self) -> float:
        """Time at which the running maximum ``s_max`` is first attained."""
        return float(self.t_hi[-1]) if self.t_hi.size else 0.0

    def to_json(self) -> str:
        return json.dumps(
            {"s_max": self.s_max, "t_max": self.t_max, "segments": self.segments, "atoms": self.atoms}
        )

    def tau_of(self, y: np.ndarray, k: np.ndarray) -> np.ndarray:
        return _cross(self.t0[k], self.x0[k], self.t_hi[k], self.y_hi[k], y)


def build_profile(path: Path) -> HittingProfile:
    v = path.values
    t = path.times
    run = np.maximum.accumulate(v)
    rec = np.flatnonzero(v[1:] > run[:-1]) + 1
    lo = run[rec - 1]
    hi = v[rec]
    t0 = t[rec - 1]
    x0 = v[rec - 1]
    t_hi = t[rec]
    t_lo = _cross(t0, x0, t_hi, hi, lo)
    # a stall of the max at hi[k-1] is broken at t_lo[k]
    stalled = t_lo[1:] > t_hi[:-1]
    return HittingProfile(
        s_max=float(run[-1]),
        t_max=float(t[-1]),
        y_lo=lo,
        y_hi=hi,
        t_lo=t_lo,
        t_hi=t_hi,
        x0=x0,
        t0=t0,
        atom_level=hi[:-1][stalled],
        atom_minus=t_hi[:-1][stalled],
        atom_plus=t_lo[1:][stalled],
    )


def tau_at(profile: HittingProfile, y: float) -> tuple[float, float]:
    """``(tau_y, tau_{y+})``; they differ only at atom levels."""
    if not (0 < y <= profile.s_max):
        raise InvalidArgument(f"level {y} outside (0, {profile.s_max}]")
    k = int(np.searchsorted(profile.y_hi, y, side="left"))
    tau = float(profile.tau_of(np.float64(y), k))
    if y == profile.y_hi[k] and k + 1 < profile.y_hi.size:
        return tau, float(profile.t_lo[k + 1])
    return tau, tau


def _pieces(profile: HittingProfile, a: float):
    """Segments meeting ``(0, a]`` and their clipped upper levels."""
    keep = np.flatnonzero(profile.y_lo < a)
    return keep, np.minimum(profile.y_hi[keep], a)


def _check_level(profile: HittingProfile, a: float, truncate: bool):
    if not a > 0:
        raise InvalidArgument(f"level must be positive, got {a}")
    if a > profile.s_max and not truncate:
        raise InvalidArgument(f"level {a} exceeds running maximum {profile.s_max}")


def integrate_dy(profile: HittingProfile, a: float, f, truncate: bool = False) -> float:
    """``int_0^a f(y, tau_y) dy`` by Gauss-Legendre on each record segment.

    ``f`` is called with broadcastable arrays.  With ``truncate=True`` levels
    above the running maximum are allowed and use ``tau_y ^ t_max = t_max``.
    """
    _check_level(profile, a, truncate)
    k, top = _pieces(profile, a)
    bottom = profile.y_lo[k]
    half = 0.5 * (top - bottom)
    y = (0.5 * (top + bottom))[:, None] + half[:, None] * _GL_X[None, :]
    tau = profile.tau_of(y, k[:, None])
    vals = np.broadcast_to(f(y, tau), y.shape)
    total = float(np.sum((vals @ _GL_W) * half))
    if truncate and a > profile.s_max:
        lo = max(profile.s_max, 0.0)
        h = 0.5 * (a - lo)
        y = 0.5 * (a + lo) + h * _GL_X
        vals = np.broadcast_to(f(y, np.full_like(y, profile.t_max)), y.shape)
        total += float(h * (vals @ _GL_W))
    return total


def integrate_dtau(profile: HittingProfile, a: float, g, truncate: bool = False) -> float:
    """Stieltjes integral of ``g`` against ``d tau_y`` over levels ``(0, a]``.

    ``g(y, s, tau)`` is evaluated with ``tau = tau_y`` and ``s`` running over
    ``[tau_y, tau_{y+}]``: on record segments ``s = tau``; on an atom the
    jump is integrated in ``s`` by Gauss-Legendre, i.e. the contribution is
    ``(tau_plus - tau_minus) * int_0^1 g(y, z tau_plus + (1 - z) tau_minus, tau_minus) dz``.

    With ``truncate=True`` the profile is that of ``tau_y ^ t_max``: the
    running maximum carries a final atom ending at ``t_max`` when ``a`` is
    above it.
    """
    _check_level(profile, a, truncate)
    k, top = _pieces(profile, a)
    bottom = profile.y_lo[k]
    half = 0.5 * (top - bottom)
    y = (0.5 * (top + bottom))[:, None] + half[:, None] * _GL_X[None, :]
    tau = profile.tau_of(y, k[:, None])
    slope = (profile.t_hi[k] - profile.t0[k]) / (profile.y_hi[k] - profile.x0[k])
    vals = np.broadcast_to(g(y, tau, tau), y.shape)
    total = float(np.sum((vals @ _GL_W) * half * slope))

    sel = profile.atom_level <= a
    levels = profile.atom_level[sel]
    minus = profile.atom_minus[sel]
    plus = profile.atom_plus[sel]
    if truncate and a > profile.s_max and profile.s_max > 0:
        levels = np.append(levels, profile.s_max)
        minus = np.append(minus, profile.tau_top)
        plus = np.append(plus, profile.t_max)
    if levels.size:
        hw = 0.5 * (plus - minus)
        s = (0.5 * (plus + minus))[:, None] + hw[:, None] * _GL_X[None, :]
        vals = np.broadcast_to(g(levels[:, None], s, minus[:, None]), s.shape)
        total += float(np.sum((vals @ _GL_W) * hw))
    return total
